//! Command implementations behind the `kq` binary, and the session service.

pub mod commands;
pub mod service;

use kq_core::{QuantifierDef, QuantifierError, Structure};

/// `dia[R]` for each binary relation of the signature, in declaration order;
/// `some` when there is none.
pub fn default_registry(s: &Structure, k: usize) -> Result<Vec<QuantifierDef>, QuantifierError> {
    let names: Vec<String> = s
        .signature()
        .iter()
        .filter(|(_, a)| *a == 2)
        .map(|(r, _)| format!("dia[{r}]"))
        .collect();
    if names.is_empty() {
        return QuantifierDef::parse_list("some", k);
    }
    QuantifierDef::parse_list(&names.join(","), k)
}
