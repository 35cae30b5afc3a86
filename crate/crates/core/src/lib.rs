//! Generalized quantifier logics over finite structures: model checking,
//! the bisimulation game for k-variable quantifier logics, characteristic
//! formulae, and reduced products over finite index sets.

pub mod bitset;
pub mod charform;
pub mod formula;
pub mod games;
pub mod model;
pub mod products;
pub mod quantifiers;
pub mod semantics;
pub mod verify;

pub use bitset::BitSet;
pub use formula::{parse_formula, print_formula, Formula, FormulaError, QuantifierRef};
pub use model::{load_structure, Assignment, ModelError, Signature, Structure, TupleSpace};
pub use quantifiers::{QuantifierDef, QuantifierError, WitnessFamily};
pub use semantics::{eval, eval_team, ModelChecker, SemanticsError};
