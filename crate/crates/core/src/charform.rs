//! Characteristic formulae relative to a finite comparison universe.
//!
//! `χ^0(α)` fixes the atomic type of `α`. `χ^{q+1}(α)` is `χ^0(α)` together
//! with a forth part (for each quantifier and each minimal witness `s` of
//! `α`: `Q ⋁_{γ∈s} χ^q(γ)`) and a back part (for each quantifier and each
//! ⊆-maximal `Φ ⊆ Δ_q` with `α ⊨ ¬Q⋁Φ`: the conjunct `¬Q⋁Φ`).
//!
//! `Δ_q` is restricted to the level-q formulae of tuples realized in the
//! universe: inside any structure of the universe `⋁Φ` only sees realized
//! classes, so the remaining back conjuncts are inert there. Formulae are
//! interned by their extensions over the whole universe.

use std::collections::HashMap;
use std::sync::Arc;

use thiserror::Error;

use crate::bitset::{minimal_sets, BitSet};
use crate::formula::Formula;
use crate::games::{bisim, GameError};
use crate::model::{Assignment, ModelError, Structure};
use crate::quantifiers::{QuantifierDef, QuantifierError, WitnessFamily};
use crate::semantics::{var_tuples, ModelChecker};

/// Cap on intermediate candidate sets while dualizing a back part.
pub const MAX_BACK_CANDIDATES: usize = 200_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CharError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Quantifier(#[from] QuantifierError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("structure is not part of the comparison universe")]
    OutsideContext,
    #[error("size guard exceeded: {0}")]
    SizeGuard(String),
}

/// The comparison universe, registry and `k` that characteristic formulae
/// are relative to.
#[derive(Clone, Debug)]
pub struct CharContext {
    universe: Vec<Structure>,
    registry: Vec<QuantifierDef>,
    k: usize,
}

impl CharContext {
    pub fn new(universe: Vec<Structure>, registry: Vec<QuantifierDef>, k: usize) -> Result<Self, CharError> {
        let first = universe
            .first()
            .ok_or_else(|| ModelError::SignatureMismatch("empty comparison universe".into()))?;
        for s in &universe[1..] {
            if s.signature() != first.signature() {
                return Err(ModelError::SignatureMismatch(format!("{} vs {}", first.signature(), s.signature())).into());
            }
        }
        for q in &registry {
            q.check_structure(first)?;
            if q.k() != k {
                return Err(ModelError::BadAssignment(format!("quantifier {} built for k = {}", q.name(), q.k())).into());
            }
        }
        Ok(CharContext { universe, registry, k })
    }

    pub fn universe(&self) -> &[Structure] {
        &self.universe
    }

    pub fn registry(&self) -> &[QuantifierDef] {
        &self.registry
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn index_of(&self, s: &Structure) -> Result<usize, CharError> {
        self.universe.iter().position(|u| u == s).ok_or(CharError::OutsideContext)
    }
}

/// Switches for deliberately weakened constructions (mutation testing).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CharOptions {
    pub drop_forth: bool,
    pub drop_back: bool,
}

#[derive(Clone, Debug)]
struct CharLevel {
    formulas: Vec<Arc<Formula>>,
    /// `extensions[class][structure]`.
    extensions: Vec<Vec<BitSet>>,
    /// `class_of[structure][tuple]`: the class of the tuple's own formula.
    class_of: Vec<Vec<usize>>,
}

/// All characteristic formulae of the universe's tuples, level by level.
pub struct CharTable<'c> {
    ctx: &'c CharContext,
    options: CharOptions,
    levels: Vec<CharLevel>,
    checkers: Vec<ModelChecker<'c>>,
}

impl<'c> CharTable<'c> {
    pub fn new(ctx: &'c CharContext) -> Self {
        Self::with_options(ctx, CharOptions::default())
    }

    pub fn with_options(ctx: &'c CharContext, options: CharOptions) -> Self {
        let checkers: Vec<ModelChecker> = ctx.universe.iter().map(|s| ModelChecker::new(s, ctx.k)).collect();
        let mut table = CharTable {
            ctx,
            options,
            levels: vec![],
            checkers,
        };
        let per_tuple: Vec<Vec<Arc<Formula>>> = ctx
            .universe
            .iter()
            .map(|s| {
                let sp = s.tuple_space(ctx.k);
                (0..sp.size()).map(|a| Arc::new(atomic_type(s, ctx.k, a))).collect()
            })
            .collect();
        let level = table.intern(per_tuple);
        table.levels.push(level);
        table
    }

    pub fn context(&self) -> &CharContext {
        self.ctx
    }

    pub fn extend_to(&mut self, q: usize) -> Result<(), CharError> {
        while self.levels.len() <= q {
            let next = self.next_level()?;
            self.levels.push(next);
        }
        Ok(())
    }

    fn level(&mut self, q: usize) -> Result<&CharLevel, CharError> {
        self.extend_to(q)?;
        Ok(&self.levels[q])
    }

    /// `|Δ_q|`.
    pub fn class_count(&mut self, q: usize) -> Result<usize, CharError> {
        Ok(self.level(q)?.formulas.len())
    }

    pub fn class_of(&mut self, q: usize, structure: usize, tuple: usize) -> Result<usize, CharError> {
        Ok(self.level(q)?.class_of[structure][tuple])
    }

    /// `χ^q` of `tuple` in universe member `structure`.
    pub fn chi(&mut self, structure: usize, tuple: usize, q: usize) -> Result<Arc<Formula>, CharError> {
        let lvl = self.level(q)?;
        Ok(lvl.formulas[lvl.class_of[structure][tuple]].clone())
    }

    /// The extension of `χ^q(tuple)` in universe member `target`.
    pub fn extension(&mut self, structure: usize, tuple: usize, q: usize, target: usize) -> Result<BitSet, CharError> {
        let lvl = self.level(q)?;
        Ok(lvl.extensions[lvl.class_of[structure][tuple]][target].clone())
    }

    fn intern(&mut self, per_tuple: Vec<Vec<Arc<Formula>>>) -> CharLevel {
        let mut index: HashMap<Vec<BitSet>, usize> = HashMap::new();
        let mut level = CharLevel {
            formulas: vec![],
            extensions: vec![],
            class_of: vec![],
        };
        for fs in per_tuple {
            let mut row = Vec::with_capacity(fs.len());
            for f in fs {
                let ext: Vec<BitSet> = self.checkers.iter_mut().map(|mc| mc.extension_trusted(&f)).collect();
                let id = *index.entry(ext.clone()).or_insert_with(|| {
                    level.formulas.push(f.clone());
                    level.extensions.push(ext);
                    level.formulas.len() - 1
                });
                row.push(id);
            }
            level.class_of.push(row);
        }
        level
    }

    fn next_level(&mut self) -> Result<CharLevel, CharError> {
        let ctx = self.ctx;
        let q = self.levels.len() - 1;
        let prev = &self.levels[q];
        let base = &self.levels[0];
        let delta = prev.formulas.len();
        let mut per_tuple = Vec::with_capacity(ctx.universe.len());
        for (si, s) in ctx.universe.iter().enumerate() {
            let sp = s.tuple_space(ctx.k);
            // cov(γ): the level-q formulae whose extension contains γ.
            let cov: Vec<BitSet> = (0..sp.size())
                .map(|g| BitSet::from_indices(delta, (0..delta).filter(|&c| prev.extensions[c][si].contains(g))))
                .collect();
            let mut row = Vec::with_capacity(sp.size());
            for a in 0..sp.size() {
                let mut parts = vec![base.formulas[base.class_of[si][a]].clone()];
                for def in &ctx.registry {
                    let witnesses = def.minimal_witnesses(s, a);
                    if !self.options.drop_forth {
                        for w in &witnesses {
                            let mut classes: Vec<usize> = w.iter().map(|g| prev.class_of[si][g]).collect();
                            classes.sort_unstable();
                            classes.dedup();
                            let inner = Formula::disjunction(classes.into_iter().map(|c| prev.formulas[c].clone()));
                            parts.push(Arc::new(Formula::quant(def.kind().clone(), inner)));
                        }
                    }
                    if !self.options.drop_back {
                        for psi in minimal_covers(&witnesses, &cov, delta)? {
                            let phi = psi.complement();
                            let inner = Formula::disjunction(phi.iter().map(|c| prev.formulas[c].clone()));
                            parts.push(Arc::new(Formula::not(Formula::quant(def.kind().clone(), inner))));
                        }
                    }
                }
                row.push(Arc::new(Formula::conjunction(parts)));
            }
            per_tuple.push(row);
        }
        Ok(self.intern(per_tuple))
    }
}

/// `χ^0`: `⊤` conjoined with every atom or its negation, per the atomic type.
fn atomic_type(s: &Structure, k: usize, a: usize) -> Formula {
    let sp = s.tuple_space(k);
    let mut parts = vec![Arc::new(Formula::Top)];
    for (r, arity) in s.signature().iter() {
        for vars in var_tuples(k, arity) {
            let t: Vec<usize> = vars.iter().map(|&v| sp.component(a, v - 1)).collect();
            let atom = Formula::atom(r, vars);
            parts.push(Arc::new(if s.relation(r).expect("declared").contains(&t) {
                atom
            } else {
                Formula::not(atom)
            }));
        }
    }
    Formula::conjunction(parts)
}

/// Minimal `Ψ ⊆ Δ` such that every witness has a tuple `γ` with
/// `cov(γ) ⊆ Ψ`. Their complements are exactly the maximal `Φ` for which
/// no witness lies inside `⟦⋁Φ⟧`.
fn minimal_covers(witnesses: &[BitSet], cov: &[BitSet], delta: usize) -> Result<Vec<BitSet>, CharError> {
    let mut current = vec![BitSet::new(delta)];
    for w in witnesses {
        let mut next = Vec::new();
        for h in &current {
            if w.iter().any(|g| cov[g].is_subset(h)) {
                next.push(h.clone());
                continue;
            }
            for g in w.iter() {
                next.push(h.union(&cov[g]));
            }
        }
        current = minimal_sets(next);
        if current.len() > MAX_BACK_CANDIDATES {
            return Err(CharError::SizeGuard(format!(
                "back part needs more than {MAX_BACK_CANDIDATES} candidate sets"
            )));
        }
    }
    Ok(current)
}

pub fn chi(ctx: &CharContext, s: &Structure, alpha: &Assignment, q: usize) -> Result<Formula, CharError> {
    let si = ctx.index_of(s)?;
    alpha.validate(s, ctx.k)?;
    let mut table = CharTable::new(ctx);
    Ok((*table.chi(si, alpha.code(s.tuple_space(ctx.k)), q)?).clone())
}

/// Whether `(B, β) ⊨ χ^q(A, α)`.
pub fn check_char(
    ctx: &CharContext,
    a: &Structure,
    alpha: &Assignment,
    b: &Structure,
    beta: &Assignment,
    q: usize,
) -> Result<bool, CharError> {
    let (ai, bi) = (ctx.index_of(a)?, ctx.index_of(b)?);
    alpha.validate(a, ctx.k)?;
    beta.validate(b, ctx.k)?;
    let mut table = CharTable::new(ctx);
    let ext = table.extension(ai, alpha.code(a.tuple_space(ctx.k)), q, bi)?;
    Ok(ext.contains(beta.code(b.tuple_space(ctx.k))))
}

/// `⋁ χ^{qr(f)}` over the universe's tuples satisfying `f`, one disjunct per class.
pub fn normal_form(ctx: &CharContext, f: &Formula) -> Result<Formula, CharError> {
    let q = f.quantifier_rank();
    let mut table = CharTable::new(ctx);
    table.extend_to(q)?;
    let mut classes = Vec::new();
    for (si, s) in ctx.universe.iter().enumerate() {
        let mut mc = ModelChecker::new(s, ctx.k);
        let ext = mc.extension(f).map_err(|e| match e {
            crate::semantics::SemanticsError::Model(m) => CharError::Model(m),
            crate::semantics::SemanticsError::Quantifier(m) => CharError::Quantifier(m),
            other => CharError::SizeGuard(other.to_string()),
        })?;
        for a in ext.iter() {
            classes.push(table.class_of(q, si, a)?);
        }
    }
    classes.sort_unstable();
    classes.dedup();
    let lvl = &table.levels[q];
    Ok(Formula::disjunction(classes.into_iter().map(|c| lvl.formulas[c].clone())))
}

/// A formula of least rank true at `(A, α)` and false at `(B, β)`, or `None`
/// when the pair is bisimilar.
pub fn distinguishing_formula(
    ctx: &CharContext,
    a: &Structure,
    alpha: &Assignment,
    b: &Structure,
    beta: &Assignment,
) -> Result<Option<Formula>, CharError> {
    let ai = ctx.index_of(a)?;
    ctx.index_of(b)?;
    alpha.validate(a, ctx.k)?;
    beta.validate(b, ctx.k)?;
    let rel = bisim(a, b, ctx.k, &ctx.registry)?;
    let (ac, bc) = (alpha.code(a.tuple_space(ctx.k)), beta.code(b.tuple_space(ctx.k)));
    let Some(q) = rel.failure_round(ac, bc) else {
        return Ok(None);
    };
    let mut table = CharTable::new(ctx);
    Ok(Some((*table.chi(ai, ac, q)?).clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::k1;
    use crate::semantics::eval;

    fn ctx1() -> CharContext {
        CharContext::new(vec![k1()], QuantifierDef::parse_list("dia[R]", 1).unwrap(), 1).unwrap()
    }

    fn at(i: usize) -> Assignment {
        Assignment::new(vec![i])
    }

    #[test]
    fn level_zero_is_the_atomic_type() {
        let c = ctx1();
        let f = chi(&c, &k1(), &at(0), 0).unwrap();
        assert_eq!(f.to_string(), "(true & (!R(x1,x1) & !P(x1)))");
        assert_eq!(f.quantifier_rank(), 0);
    }

    #[test]
    fn self_satisfaction_and_rank() {
        let c = ctx1();
        let s = k1();
        for q in 0..4 {
            for a in 0..3 {
                let f = chi(&c, &s, &at(a), q).unwrap();
                assert!(eval(&s, &at(a), &f).unwrap());
                assert!(f.quantifier_rank() <= q);
            }
        }
    }

    #[test]
    fn check_char_examples() {
        let c = ctx1();
        let s = k1();
        for q in 0..4 {
            assert!(check_char(&c, &s, &at(0), &s, &at(0), q).unwrap());
        }
        assert!(check_char(&c, &s, &at(0), &s, &at(2), 0).unwrap());
        assert!(!check_char(&c, &s, &at(0), &s, &at(2), 1).unwrap());
        assert!(!check_char(&c, &s, &at(2), &s, &at(0), 1).unwrap());
    }

    #[test]
    fn outside_context_is_rejected() {
        let c = ctx1();
        let other = crate::model::load_structure(r#"{"signature": {"R": 2, "P": 1}, "universe": ["z"]}"#).unwrap();
        assert_eq!(chi(&c, &other, &at(0), 1).unwrap_err(), CharError::OutsideContext);
    }

    #[test]
    fn normal_forms() {
        let c = ctx1();
        let s = k1();
        let sig = s.signature().clone();
        let top = normal_form(&c, &Formula::Top).unwrap();
        let bot = normal_form(&c, &Formula::bottom()).unwrap();
        assert_eq!(bot, Formula::bottom());
        let f = crate::formula::parse_formula("dia[R] P(x1)", 1, &sig).unwrap();
        let nf = normal_form(&c, &f).unwrap();
        for a in 0..3 {
            assert!(eval(&s, &at(a), &top).unwrap());
            assert_eq!(eval(&s, &at(a), &nf).unwrap(), a == 0);
        }
    }

    #[test]
    fn distinguishing_examples() {
        let c = ctx1();
        let s = k1();
        let f = distinguishing_formula(&c, &s, &at(0), &s, &at(2)).unwrap().unwrap();
        assert_eq!(f.quantifier_rank(), 1);
        assert!(eval(&s, &at(0), &f).unwrap());
        assert!(!eval(&s, &at(2), &f).unwrap());
        assert_eq!(distinguishing_formula(&c, &s, &at(1), &s, &at(1)).unwrap(), None);
    }

    #[test]
    fn covers_are_minimal_hitting_sets_for_partitions() {
        // Three classes, witnesses {0,1} and {1,2} over tuples with classes 0,1,2.
        let cov: Vec<BitSet> = (0..3).map(|c| BitSet::from_indices(3, [c])).collect();
        let w = vec![BitSet::from_indices(3, [0, 1]), BitSet::from_indices(3, [1, 2])];
        let got = minimal_covers(&w, &cov, 3).unwrap();
        assert_eq!(got, vec![BitSet::from_indices(3, [0, 2]), BitSet::from_indices(3, [1])]);
        assert_eq!(minimal_covers(&[], &cov, 3).unwrap(), vec![BitSet::new(3)]);
    }
}
