//! Browser bindings: model checking with a subformula trace, pair comparison
//! with a separating formula, and the two-tree threshold family.

use kq_core::charform::{distinguishing_formula, CharContext, CharOptions};
use kq_core::games::{bisim_in, GameArena, Side};
use kq_core::semantics::trace;
use kq_core::verify::{fig1_thresholds, gen_fig1_family};
use kq_core::{load_structure, parse_formula, print_formula, QuantifierDef, Structure};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Largest universe accepted from the page.
pub const MAX_DEMO_UNIVERSE: usize = 12;

fn load(text: &str) -> Result<Structure, String> {
    let s = load_structure(text).map_err(|e| e.to_string())?;
    if s.len() > MAX_DEMO_UNIVERSE {
        return Err(format!("universe too large for the demo ({} > {MAX_DEMO_UNIVERSE})", s.len()));
    }
    Ok(s)
}

pub fn check_json(structure: &str, k: usize, alpha: &str, formula: &str) -> Result<Value, String> {
    let s = load(structure)?;
    let f = parse_formula(formula, k, s.signature()).map_err(|e| e.to_string())?;
    let a = s.parse_tuple(alpha, k).map_err(|e| e.to_string())?;
    let space = s.tuple_space(k);
    let code = a.code(space);
    let steps = trace(&s, k, &f).map_err(|e| e.to_string())?;
    let value = steps.last().is_some_and(|(_, ext)| ext.contains(code));
    let rows: Vec<Value> = steps
        .iter()
        .map(|(sub, ext)| {
            json!({
                "formula": sub,
                "extension": ext.iter().map(|c| s.format_tuple(space, c)).collect::<Vec<_>>(),
                "holds": ext.contains(code),
            })
        })
        .collect();
    Ok(json!({ "value": value, "trace": rows }))
}

pub fn compare_json(left: &str, right: &str, k: usize, alpha: &str, beta: &str, quantifiers: &str) -> Result<Value, String> {
    let (l, r) = (load(left)?, load(right)?);
    let reg = QuantifierDef::parse_list(quantifiers, k).map_err(|e| e.to_string())?;
    let arena = GameArena::new(&l, &r, k, &reg).map_err(|e| e.to_string())?;
    let a = l.parse_tuple(alpha, k).map_err(|e| e.to_string())?;
    let b = r.parse_tuple(beta, k).map_err(|e| e.to_string())?;
    let p = arena.position(&a, &b).map_err(|e| e.to_string())?;
    let rel = bisim_in(&arena);
    let ctx = CharContext::new(vec![l.clone(), r.clone()], reg, k).map_err(|e| e.to_string())?;
    let sep = distinguishing_formula(&ctx, &l, &a, &r, &b).map_err(|e| e.to_string())?;
    let (ls, rs) = (arena.space(Side::Left), arena.space(Side::Right));
    let top = rel.computed_levels() - 1;
    Ok(json!({
        "bisimilar": rel.bisimilar(p.left, p.right),
        "failureRound": rel.failure_round(p.left, p.right),
        "stabilizationIndex": rel.stabilization_index(),
        "distinguishing": sep.as_ref().map(print_formula),
        "distinguishingRank": sep.as_ref().map(|f| f.quantifier_rank()),
        "pairs": rel
            .pairs(top)
            .into_iter()
            .map(|(x, y)| [l.format_tuple(ls, x), r.format_tuple(rs, y)])
            .collect::<Vec<_>>(),
    }))
}

pub fn fig1_json(n: usize) -> Result<Value, String> {
    if !(1..=4).contains(&n) {
        return Err("n must be between 1 and 4".into());
    }
    let (l, r) = gen_fig1_family(n);
    let t = fig1_thresholds(n, CharOptions::default());
    Ok(json!({
        "n": n,
        "left": l.structure.to_doc(),
        "right": r.structure.to_doc(),
        "game": t.game,
        "chi": t.chi,
        "oracle": t.oracle,
        "bisimilar": t.bisimilar,
    }))
}

fn js(r: Result<Value, String>) -> Result<String, JsValue> {
    r.map(|v| v.to_string()).map_err(|e| JsValue::from_str(&e))
}

/// Evaluates `formula` at `alpha`; returns `{value, trace}` as JSON.
#[wasm_bindgen]
pub fn check(structure: &str, k: usize, alpha: &str, formula: &str) -> Result<String, JsValue> {
    js(check_json(structure, k, alpha, formula))
}

/// Bisimilarity verdict, failure round and a least-rank separating formula.
#[wasm_bindgen]
pub fn compare(left: &str, right: &str, k: usize, alpha: &str, beta: &str, quantifiers: &str) -> Result<String, JsValue> {
    js(compare_json(left, right, k, alpha, beta, quantifiers))
}

/// The two-tree pair for `n` and its threshold from the three procedures.
#[wasm_bindgen]
pub fn fig1(n: usize) -> Result<String, JsValue> {
    js(fig1_json(n))
}

#[cfg(test)]
mod tests {
    use super::*;

    const K1: &str = r#"{"signature":{"R":2,"P":1},"universe":["a","b","c"],"relations":{"R":[["a","b"],["b","c"]],"P":[["b"]]}}"#;

    #[test]
    fn check_traces() {
        let v = check_json(K1, 1, "a", "dia[R] P(x1)").unwrap();
        assert_eq!(v["value"], true);
        assert_eq!(v["trace"][0]["extension"], json!(["b"]));
    }

    #[test]
    fn compare_separates() {
        let v = compare_json(K1, K1, 1, "a", "c", "dia[R]").unwrap();
        assert_eq!(v["bisimilar"], false);
        assert_eq!(v["failureRound"], 1);
        assert_eq!(v["distinguishingRank"], 1);
    }

    #[test]
    fn fig1_agrees() {
        let v = fig1_json(2).unwrap();
        assert_eq!(v["game"], v["chi"]);
        assert_eq!(v["game"], v["oracle"]);
        assert_eq!(v["bisimilar"], false);
        assert!(fig1_json(9).is_err());
    }
}
