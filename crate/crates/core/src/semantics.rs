//! Model checking, flat team semantics, and the definable-set closure used
//! as an independent oracle for rank-bounded elementary equivalence.
//!
//! Evaluation is bottom-up: every subformula gets its extension `⟦φ⟧ ⊆ A^k`
//! once, and `Qφ` holds at `α` iff some witness of `Q(α)` lies inside `⟦φ⟧`.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use thiserror::Error;

use crate::bitset::BitSet;
use crate::formula::{Formula, FormulaError, QuantifierRef};
use crate::model::{Assignment, ModelError, Signature, Structure, TupleSpace};
use crate::quantifiers::{PowersetOracle, QuantifierDef, QuantifierError, WitnessFamily};

/// Largest number of classes whose unions the closure enumerates.
pub const MAX_CLOSURE_CLASSES: usize = 22;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SemanticsError {
    #[error(transparent)]
    Formula(#[from] FormulaError),
    #[error(transparent)]
    Quantifier(#[from] QuantifierError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("size guard exceeded: {0}")]
    SizeGuard(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EvalMode {
    /// Built-in witness algorithms.
    #[default]
    Direct,
    /// Powerset enumeration over `is_witness` only (small universes).
    Oracle,
}

/// Evaluates formulae over one structure, caching extensions of shared
/// subformulae for the lifetime of the checker.
pub struct ModelChecker<'s> {
    structure: &'s Structure,
    space: TupleSpace,
    mode: EvalMode,
    memo: HashMap<*const Formula, (Arc<Formula>, BitSet)>,
    defs: HashMap<QuantifierRef, QuantifierDef>,
}

impl<'s> ModelChecker<'s> {
    pub fn new(structure: &'s Structure, k: usize) -> Self {
        Self::with_mode(structure, k, EvalMode::Direct)
    }

    pub fn with_mode(structure: &'s Structure, k: usize, mode: EvalMode) -> Self {
        ModelChecker {
            structure,
            space: structure.tuple_space(k),
            mode,
            memo: HashMap::new(),
            defs: HashMap::new(),
        }
    }

    pub fn structure(&self) -> &'s Structure {
        self.structure
    }

    pub fn space(&self) -> TupleSpace {
        self.space
    }

    /// `⟦f⟧` after checking `f` against the structure's signature and `k`.
    pub fn extension(&mut self, f: &Formula) -> Result<BitSet, SemanticsError> {
        f.check(self.space.k, self.structure.signature())?;
        if self.mode == EvalMode::Oracle {
            for q in f.quantifiers() {
                let def = QuantifierDef::new(q, self.space.k)?;
                PowersetOracle(&def).guard(self.structure)?;
            }
        }
        Ok(self.extension_trusted(f))
    }

    /// `⟦f⟧` for a formula already known to be well-formed here.
    pub fn extension_trusted(&mut self, f: &Formula) -> BitSet {
        let size = self.space.size();
        match f {
            Formula::Top => BitSet::full(size),
            Formula::Atom { relation, vars } => {
                let rel = self.structure.relation(relation).expect("checked relation");
                let mut out = BitSet::new(size);
                let mut tuple = vec![0; vars.len()];
                for code in 0..size {
                    for (slot, &v) in tuple.iter_mut().zip(vars) {
                        *slot = self.space.component(code, v - 1);
                    }
                    if rel.contains(&tuple) {
                        out.insert(code);
                    }
                }
                out
            }
            Formula::Not(g) => self.child(g).complement(),
            Formula::And(a, b) => {
                let mut ea = self.child(a);
                if !ea.is_empty() {
                    ea.intersect_with(&self.child(b));
                }
                ea
            }
            Formula::Quant(q, g) => {
                let inner = self.child(g);
                let def = self
                    .defs
                    .entry(q.clone())
                    .or_insert_with(|| QuantifierDef::new(q.clone(), self.space.k).expect("checked quantifier"))
                    .clone();
                let s = self.structure;
                let mut out = BitSet::new(size);
                for alpha in 0..size {
                    let holds = match self.mode {
                        EvalMode::Direct => def.admits_witness_within(s, alpha, &inner),
                        EvalMode::Oracle => PowersetOracle(&def).admits_witness_within(s, alpha, &inner),
                    };
                    if holds {
                        out.insert(alpha);
                    }
                }
                out
            }
        }
    }

    fn child(&mut self, g: &Arc<Formula>) -> BitSet {
        let key = Arc::as_ptr(g);
        if let Some((_, e)) = self.memo.get(&key) {
            return e.clone();
        }
        let e = self.extension_trusted(g);
        self.memo.insert(key, (g.clone(), e.clone()));
        e
    }

    pub fn eval(&mut self, alpha: &Assignment, f: &Formula) -> Result<bool, SemanticsError> {
        alpha.validate(self.structure, self.space.k)?;
        Ok(self.extension(f)?.contains(alpha.code(self.space)))
    }

    /// Flat team semantics: every member of the team satisfies `f`.
    pub fn eval_team(&mut self, team: &BitSet, f: &Formula) -> Result<bool, SemanticsError> {
        if team.capacity() != self.space.size() {
            return Err(SemanticsError::SizeGuard(format!(
                "team over {} tuples, expected {}",
                team.capacity(),
                self.space.size()
            )));
        }
        Ok(team.is_subset(&self.extension(f)?))
    }
}

pub fn eval(s: &Structure, alpha: &Assignment, f: &Formula) -> Result<bool, SemanticsError> {
    ModelChecker::new(s, alpha.k()).eval(alpha, f)
}

pub fn eval_team(s: &Structure, k: usize, team: &BitSet, f: &Formula) -> Result<bool, SemanticsError> {
    ModelChecker::new(s, k).eval_team(team, f)
}

/// The extension of every distinct subformula, innermost first.
pub fn trace(s: &Structure, k: usize, f: &Formula) -> Result<Vec<(String, BitSet)>, SemanticsError> {
    let mut mc = ModelChecker::new(s, k);
    mc.extension(f)?;
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    fn walk(f: &Formula, mc: &mut ModelChecker, seen: &mut HashSet<String>, out: &mut Vec<(String, BitSet)>) {
        match f {
            Formula::Top | Formula::Atom { .. } => {}
            Formula::Not(g) | Formula::Quant(_, g) => walk(g, mc, seen, out),
            Formula::And(a, b) => {
                walk(a, mc, seen, out);
                walk(b, mc, seen, out);
            }
        }
        let text = f.to_string();
        if seen.insert(text.clone()) {
            out.push((text, mc.extension_trusted(f)));
        }
    }
    walk(f, &mut mc, &mut seen, &mut out);
    Ok(out)
}

/// If `𝔄, α ⊨ Q ⋀Ψ`, a witness `w ∈ Q(α)` with `𝔄, w ⊨ ψ` for every
/// `ψ ∈ Ψ`; otherwise `None`.
pub fn check_type_realization(
    s: &Structure,
    alpha: &Assignment,
    q: &QuantifierDef,
    psi: &[Formula],
) -> Result<Option<BitSet>, SemanticsError> {
    let k = alpha.k();
    q.check_structure(s)?;
    alpha.validate(s, k)?;
    let mut mc = ModelChecker::new(s, k);
    let mut ext = BitSet::full(mc.space().size());
    for f in psi {
        ext.intersect_with(&mc.extension(f)?);
    }
    let code = alpha.code(mc.space());
    if !q.admits_witness_within(s, code, &ext) {
        return Ok(None);
    }
    Ok(q.minimal_witnesses(s, code).into_iter().find(|w| w.is_subset(&ext)))
}

/// Rank-bounded theory of a pointed structure, queried by membership.
#[derive(Clone, Debug)]
pub struct TheoryHandle<'s> {
    pub structure: &'s Structure,
    pub assignment: Assignment,
    pub rank: Option<usize>,
}

impl TheoryHandle<'_> {
    /// `f ∈ Th^q(𝔄, α)` (or `Th(𝔄, α)` when no rank bound is set).
    pub fn contains(&self, f: &Formula) -> Result<bool, SemanticsError> {
        if self.rank.is_some_and(|q| f.quantifier_rank() > q) {
            return Ok(false);
        }
        eval(self.structure, &self.assignment, f)
    }
}

/// A set of tuples in each of two structures defined by one formula.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DefinableSetPair {
    pub left: BitSet,
    pub right: BitSet,
    /// Least level of the closure at which the pair appears.
    pub rank: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Literal {
    Atom { relation: String, vars: Vec<usize> },
    Image(usize),
}

#[derive(Clone, Debug)]
struct ClassRecord {
    parent: Option<usize>,
    literals: Vec<(Literal, bool)>,
    members: BitSet,
}

#[derive(Clone, Debug)]
struct ImageRecord {
    quantifier: usize,
    source_level: usize,
    classes: Vec<usize>,
}

#[derive(Clone, Debug)]
struct Level {
    class_of: Vec<usize>,
    classes: Vec<ClassRecord>,
}

/// Stratified Boolean closure of definable set pairs over `A^k ⊔ B^k`.
///
/// Level 0 is generated by the atom extensions; level `q+1` by level `q`
/// together with the componentwise `Q`-image of every level-`q` set, computed
/// with `admits_witness_within` at every tuple. Each level is a finite Boolean
/// algebra, stored by its atoms ("classes"); the definable sets of that level
/// are exactly the unions of classes.
#[derive(Clone, Debug)]
pub struct DefinableClosure {
    left: Structure,
    right: Structure,
    k: usize,
    registry: Vec<QuantifierDef>,
    left_size: usize,
    levels: Vec<Level>,
    images: Vec<ImageRecord>,
    stable_from: Option<usize>,
}

impl DefinableClosure {
    pub fn new(left: &Structure, right: &Structure, k: usize, registry: &[QuantifierDef]) -> Result<Self, SemanticsError> {
        if left.signature() != right.signature() {
            return Err(ModelError::SignatureMismatch(format!("{} vs {}", left.signature(), right.signature())).into());
        }
        for q in registry {
            q.check_structure(left)?;
            if q.k() != k {
                return Err(SemanticsError::SizeGuard(format!("quantifier {} built for k = {}", q.name(), q.k())));
            }
        }
        let ls = left.tuple_space(k);
        let rs = right.tuple_space(k);
        let points = ls.size() + rs.size();
        let mut level0 = Level {
            class_of: vec![0; points],
            classes: vec![ClassRecord {
                parent: None,
                literals: vec![],
                members: BitSet::full(points),
            }],
        };
        for (relation, arity) in left.signature().iter() {
            for vars in var_tuples(k, arity) {
                let mut ext = BitSet::new(points);
                for (offset, s, sp) in [(0, left, ls), (ls.size(), right, rs)] {
                    let rel = s.relation(relation).expect("same signature");
                    for code in 0..sp.size() {
                        let t: Vec<usize> = vars.iter().map(|&v| sp.component(code, v - 1)).collect();
                        if rel.contains(&t) {
                            ext.insert(offset + code);
                        }
                    }
                }
                let lit = Literal::Atom {
                    relation: relation.to_string(),
                    vars,
                };
                // Level-0 classes carry every atom with its polarity.
                split_all(&mut level0, &ext, lit);
            }
        }
        Ok(DefinableClosure {
            left: left.clone(),
            right: right.clone(),
            k,
            registry: registry.to_vec(),
            left_size: ls.size(),
            levels: vec![level0],
            images: vec![],
            stable_from: None,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn registry(&self) -> &[QuantifierDef] {
        &self.registry
    }

    /// Computes levels up to `q` (or until the partition stops refining).
    pub fn extend_to(&mut self, q: usize) -> Result<(), SemanticsError> {
        while self.levels.len() <= q && self.stable_from.is_none() {
            self.step()?;
        }
        Ok(())
    }

    /// Computes levels until the partition is stable.
    pub fn saturate(&mut self) -> Result<usize, SemanticsError> {
        while self.stable_from.is_none() {
            self.step()?;
        }
        Ok(self.stable_from.expect("set"))
    }

    /// The first level from which the partition no longer changes, if known.
    pub fn stable_from(&self) -> Option<usize> {
        self.stable_from
    }

    fn level(&self, q: usize) -> &Level {
        &self.levels[q.min(self.levels.len() - 1)]
    }

    fn ensure(&self, q: usize) {
        assert!(
            q < self.levels.len() || self.stable_from.is_some(),
            "closure level {q} not computed"
        );
    }

    pub fn class_count(&self, q: usize) -> usize {
        self.ensure(q);
        self.level(q).classes.len()
    }

    fn step(&mut self) -> Result<(), SemanticsError> {
        let q = self.levels.len() - 1;
        let cur = &self.levels[q];
        let c = cur.classes.len();
        if c > MAX_CLOSURE_CLASSES {
            return Err(SemanticsError::SizeGuard(format!(
                "{c} classes at level {q}; at most {MAX_CLOSURE_CLASSES} supported"
            )));
        }
        let ls = self.left.tuple_space(self.k);
        let rs = self.right.tuple_space(self.k);
        let class_left: Vec<BitSet> = cur
            .classes
            .iter()
            .map(|cl| BitSet::from_indices(ls.size(), cl.members.iter().filter(|&p| p < self.left_size)))
            .collect();
        let class_right: Vec<BitSet> = cur
            .classes
            .iter()
            .map(|cl| {
                BitSet::from_indices(
                    rs.size(),
                    cl.members.iter().filter(|&p| p >= self.left_size).map(|p| p - self.left_size),
                )
            })
            .collect();
        let points = self.left_size + rs.size();
        let mut seen: HashSet<BitSet> = HashSet::new();
        let mut fresh: Vec<(BitSet, ImageRecord)> = Vec::new();
        for mask in 0u64..(1u64 << c) {
            let mut el = BitSet::new(ls.size());
            let mut er = BitSet::new(rs.size());
            for i in 0..c {
                if mask & (1 << i) != 0 {
                    el.union_with(&class_left[i]);
                    er.union_with(&class_right[i]);
                }
            }
            for (qi, def) in self.registry.iter().enumerate() {
                let mut image = BitSet::new(points);
                for a in 0..ls.size() {
                    if def.admits_witness_within(&self.left, a, &el) {
                        image.insert(a);
                    }
                }
                for b in 0..rs.size() {
                    if def.admits_witness_within(&self.right, b, &er) {
                        image.insert(self.left_size + b);
                    }
                }
                if seen.insert(image.clone()) {
                    fresh.push((
                        image,
                        ImageRecord {
                            quantifier: qi,
                            source_level: q,
                            classes: (0..c).filter(|i| mask & (1 << i) != 0).collect(),
                        },
                    ));
                }
            }
        }
        let mut next = Level {
            class_of: cur.class_of.clone(),
            classes: cur
                .classes
                .iter()
                .enumerate()
                .map(|(i, cl)| ClassRecord {
                    parent: Some(i),
                    literals: vec![],
                    members: cl.members.clone(),
                })
                .collect(),
        };
        for (image, record) in fresh {
            if splits_any(&next, &image) {
                let id = self.images.len();
                self.images.push(record);
                split_all(&mut next, &image, Literal::Image(id));
            }
        }
        let refined = next.classes.len() > c;
        self.levels.push(next);
        if !refined {
            self.stable_from = Some(q);
        }
        Ok(())
    }

    /// Whether no level-`q` definable pair separates left tuple `a` from right tuple `b`.
    pub fn equivalent(&self, q: usize, a: usize, b: usize) -> bool {
        self.ensure(q);
        let lvl = self.level(q);
        lvl.class_of[a] == lvl.class_of[self.left_size + b]
    }

    /// Whether left tuples `a1`, `a2` are level-`q` equivalent.
    pub fn equivalent_left(&self, q: usize, a1: usize, a2: usize) -> bool {
        self.ensure(q);
        let lvl = self.level(q);
        lvl.class_of[a1] == lvl.class_of[a2]
    }

    /// Class members of level `q`, split into left and right tuple sets.
    pub fn classes(&self, q: usize) -> Vec<(BitSet, BitSet)> {
        self.ensure(q);
        let ls = self.left_size;
        let rs = self.right.tuple_space(self.k).size();
        self.level(q)
            .classes
            .iter()
            .map(|cl| {
                (
                    BitSet::from_indices(ls, cl.members.iter().filter(|&p| p < ls)),
                    BitSet::from_indices(rs, cl.members.iter().filter(|&p| p >= ls).map(|p| p - ls)),
                )
            })
            .collect()
    }

    /// All definable pairs of rank at most `q`, by union of level-`q` classes.
    pub fn definable_pairs(&self, q: usize) -> Result<Vec<DefinableSetPair>, SemanticsError> {
        let classes = self.classes(q);
        let c = classes.len();
        if c > MAX_CLOSURE_CLASSES {
            return Err(SemanticsError::SizeGuard(format!("{c} classes")));
        }
        let ls = self.left_size;
        let rs = self.right.tuple_space(self.k).size();
        let mut out = Vec::with_capacity(1 << c);
        for mask in 0u64..(1u64 << c) {
            let mut left = BitSet::new(ls);
            let mut right = BitSet::new(rs);
            let mut joint = BitSet::new(ls + rs);
            for (i, (l, r)) in classes.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    left.union_with(l);
                    right.union_with(r);
                    joint.union_with(&self.level(q).classes[i].members);
                }
            }
            let rank = (0..=q)
                .find(|&lvl| !splits_any(self.level(lvl), &joint))
                .expect("level q itself never splits its own unions");
            out.push(DefinableSetPair { left, right, rank });
        }
        Ok(out)
    }

    /// A defining formula for every class of level `q`.
    pub fn class_formulas(&self, q: usize) -> Vec<Arc<Formula>> {
        self.ensure(q);
        let mut memo: HashMap<(usize, usize), Arc<Formula>> = HashMap::new();
        let top = q.min(self.levels.len() - 1);
        (0..self.levels[top].classes.len())
            .map(|c| self.class_formula(top, c, &mut memo))
            .collect()
    }

    /// The formula for the union of the level-`q` classes selected by `classes`.
    pub fn union_formula(&self, formulas: &[Arc<Formula>], classes: impl IntoIterator<Item = usize>) -> Formula {
        Formula::disjunction(classes.into_iter().map(|c| formulas[c].clone()))
    }

    fn class_formula(&self, level: usize, class: usize, memo: &mut HashMap<(usize, usize), Arc<Formula>>) -> Arc<Formula> {
        if let Some(f) = memo.get(&(level, class)) {
            return f.clone();
        }
        let rec = &self.levels[level].classes[class];
        let mut parts = Vec::new();
        if let Some(p) = rec.parent {
            parts.push(self.class_formula(level - 1, p, memo));
        }
        for (lit, positive) in &rec.literals {
            let f = match lit {
                Literal::Atom { relation, vars } => Arc::new(Formula::atom(relation.clone(), vars.clone())),
                Literal::Image(id) => {
                    let img = &self.images[*id];
                    let inner = Formula::disjunction(
                        img.classes
                            .iter()
                            .map(|&c| self.class_formula(img.source_level, c, memo)),
                    );
                    Arc::new(Formula::quant(self.registry[img.quantifier].kind().clone(), inner))
                }
            };
            parts.push(if *positive { f } else { Arc::new(Formula::Not(f)) });
        }
        let f = Arc::new(Formula::conjunction(parts));
        memo.insert((level, class), f.clone());
        f
    }
}

fn splits_any(level: &Level, set: &BitSet) -> bool {
    level
        .classes
        .iter()
        .any(|cl| cl.members.intersects(set) && !cl.members.is_subset(set))
}

/// Splits every class cut by `set`, recording the literal with its polarity
/// on both halves. Atom literals are also recorded on uncut classes so that
/// level-0 class formulae fix every atom.
fn split_all(level: &mut Level, set: &BitSet, lit: Literal) {
    let record_uncut = matches!(lit, Literal::Atom { .. });
    let n = level.classes.len();
    for i in 0..n {
        let inside = level.classes[i].members.intersection(set);
        if inside.is_empty() || inside == level.classes[i].members {
            if record_uncut {
                let positive = !inside.is_empty();
                level.classes[i].literals.push((lit.clone(), positive));
            }
            continue;
        }
        let mut outside = level.classes[i].members.clone();
        outside.difference_with(&inside);
        let mut in_rec = level.classes[i].clone();
        in_rec.members = inside;
        in_rec.literals.push((lit.clone(), true));
        let id = level.classes.len();
        for p in in_rec.members.iter() {
            level.class_of[p] = id;
        }
        level.classes.push(in_rec);
        let out_rec = &mut level.classes[i];
        out_rec.members = outside;
        out_rec.literals.push((lit.clone(), false));
    }
}

/// All tuples of variable indices (1-based) of the given length, lexicographic.
pub fn var_tuples(k: usize, arity: usize) -> Vec<Vec<usize>> {
    let sp = TupleSpace::new(k, arity);
    (0..sp.size())
        .map(|c| sp.decode(c).into_iter().map(|v| v + 1).collect())
        .collect()
}

/// Every definable pair of rank ≤ q between `a` and `b`.
pub fn definable_sets(
    a: &Structure,
    b: &Structure,
    k: usize,
    q: usize,
    registry: &[QuantifierDef],
) -> Result<Vec<DefinableSetPair>, SemanticsError> {
    let mut closure = DefinableClosure::new(a, b, k, registry)?;
    closure.extend_to(q)?;
    closure.definable_pairs(q)
}

/// Whether `(A, α)` and `(B, β)` agree on all formulae of rank ≤ q over the
/// registry, decided by the definable-set closure.
pub fn equiv_rank_oracle(
    a: &Structure,
    alpha: &Assignment,
    b: &Structure,
    beta: &Assignment,
    q: usize,
    registry: &[QuantifierDef],
) -> Result<bool, SemanticsError> {
    let k = alpha.k();
    alpha.validate(a, k)?;
    beta.validate(b, k)?;
    let mut closure = DefinableClosure::new(a, b, k, registry)?;
    closure.extend_to(q)?;
    Ok(closure.equivalent(q, alpha.code(a.tuple_space(k)), beta.code(b.tuple_space(k))))
}

/// The signature shared by both structures, or an error.
pub fn common_signature<'a>(a: &'a Structure, b: &Structure) -> Result<&'a Signature, ModelError> {
    if a.signature() != b.signature() {
        return Err(ModelError::SignatureMismatch(format!("{} vs {}", a.signature(), b.signature())));
    }
    Ok(a.signature())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::parse_formula;
    use crate::model::tests::k1;
    use crate::model::{reduct, Signature};

    fn f(s: &Structure, text: &str) -> Formula {
        parse_formula(text, 1, s.signature()).unwrap()
    }

    fn at(i: usize) -> Assignment {
        Assignment::new(vec![i])
    }

    fn dia() -> Vec<QuantifierDef> {
        vec![QuantifierDef::parse("dia[R]", 1).unwrap()]
    }

    #[test]
    fn evaluates_modal_formulae() {
        let s = k1();
        assert!(eval(&s, &at(0), &f(&s, "dia[R] P(x1)")).unwrap());
        assert!(!eval(&s, &at(0), &f(&s, "dia[R] dia[R] P(x1)")).unwrap());
        assert!(eval(&s, &at(2), &f(&s, "true")).unwrap());
        assert!(eval(&s, &at(0), &f(&s, "reach[R] !dia[R] true")).unwrap());
        assert!(!eval(&s, &at(0), &f(&s, "inf[R] true")).unwrap());
    }

    #[test]
    fn team_semantics() {
        let s = k1();
        assert!(eval_team(&s, 1, &BitSet::full(3), &f(&s, "true")).unwrap());
        assert!(eval_team(&s, 1, &BitSet::from_indices(3, [1]), &f(&s, "P(x1)")).unwrap());
        assert!(eval_team(&s, 1, &BitSet::new(3), &f(&s, "false")).unwrap());
        assert!(!eval_team(&s, 1, &BitSet::full(3), &f(&s, "P(x1)")).unwrap());
    }

    #[test]
    fn eval_rejects_mismatches() {
        let s = k1();
        let g = parse_formula("P(x2)", 2, s.signature()).unwrap();
        assert!(eval(&s, &at(0), &g).is_err());
        assert!(eval(&s, &Assignment::new(vec![7]), &Formula::Top).is_err());
    }

    #[test]
    fn oracle_mode_matches_direct_mode() {
        let s = k1();
        let g = f(&s, "(reach[R] P(x1) & !dia>=2[R] some ex>=2[x1] true)");
        let direct = ModelChecker::new(&s, 1).extension(&g).unwrap();
        let oracle = ModelChecker::with_mode(&s, 1, EvalMode::Oracle).extension(&g).unwrap();
        assert_eq!(direct, oracle);
    }

    #[test]
    fn trace_lists_subformulae() {
        let s = k1();
        let t = trace(&s, 1, &f(&s, "dia[R] P(x1)")).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t[0].0, "P(x1)");
        assert_eq!(t[0].1, BitSet::from_indices(3, [1]));
        assert_eq!(t[1].1, BitSet::from_indices(3, [0]));
    }

    #[test]
    fn definable_sets_level_zero_and_one() {
        let s = k1();
        let pairs = definable_sets(&s, &s, 1, 0, &dia()).unwrap();
        let p = BitSet::from_indices(3, [1]);
        assert!(pairs.iter().any(|d| d.left == p && d.right == p && d.rank == 0));
        assert!(pairs.iter().any(|d| d.left == p.complement() && d.right == p.complement()));
        assert!(pairs.len() <= 1 << 6);
        let pairs1 = definable_sets(&s, &s, 1, 1, &dia()).unwrap();
        let dp = BitSet::from_indices(3, [0]);
        assert!(pairs1.iter().any(|d| d.left == dp && d.right == dp && d.rank == 1));
    }

    #[test]
    fn rank_oracle_examples() {
        let s = k1();
        for q in 0..3 {
            assert!(equiv_rank_oracle(&s, &at(0), &s, &at(0), q, &dia()).unwrap());
        }
        assert!(!equiv_rank_oracle(&s, &at(0), &s, &at(2), 1, &dia()).unwrap());
        let p_only = reduct(&s, &Signature::from_pairs([("P", 1)]).unwrap()).unwrap();
        assert!(equiv_rank_oracle(&p_only, &at(0), &p_only, &at(2), 0, &[]).unwrap());
    }

    #[test]
    fn class_formulas_define_their_classes() {
        let s = k1();
        let mut cl = DefinableClosure::new(&s, &s, 1, &dia()).unwrap();
        let stable = cl.saturate().unwrap();
        for q in 0..=stable + 1 {
            let forms = cl.class_formulas(q);
            let classes = cl.classes(q);
            let mut mc = ModelChecker::new(&s, 1);
            for (form, (l, r)) in forms.iter().zip(&classes) {
                assert!(form.quantifier_rank() <= q);
                let e = mc.extension(form).unwrap();
                assert_eq!(&e, l);
                assert_eq!(&e, r);
            }
        }
    }

    #[test]
    fn levels_are_closed_and_monotone() {
        let s = k1();
        let mut cl = DefinableClosure::new(&s, &s, 1, &dia()).unwrap();
        cl.extend_to(2).unwrap();
        let l1: HashSet<_> = cl.definable_pairs(1).unwrap().into_iter().map(|d| (d.left, d.right)).collect();
        let l2: HashSet<_> = cl.definable_pairs(2).unwrap().into_iter().map(|d| (d.left, d.right)).collect();
        assert!(l1.is_subset(&l2));
        for (a, b) in &l1 {
            assert!(l1.contains(&(a.complement(), b.complement())));
            for (c, d) in &l1 {
                assert!(l1.contains(&(a.intersection(c), b.intersection(d))));
            }
        }
    }

    #[test]
    fn type_realization() {
        let s = k1();
        let dia = QuantifierDef::parse("dia[R]", 1).unwrap();
        let w = check_type_realization(&s, &at(0), &dia, &[f(&s, "P(x1)")]).unwrap();
        assert_eq!(w, Some(BitSet::from_indices(3, [1])));
        assert_eq!(check_type_realization(&s, &at(0), &dia, &[f(&s, "!P(x1)")]).unwrap(), None);
        assert!(check_type_realization(&s, &at(0), &dia, &[]).unwrap().is_some());
        assert!(check_type_realization(&s, &at(2), &dia, &[]).unwrap().is_none());
    }

    #[test]
    fn theory_handle() {
        let s = k1();
        let th = TheoryHandle {
            structure: &s,
            assignment: at(0),
            rank: Some(1),
        };
        assert!(th.contains(&f(&s, "dia[R] P(x1)")).unwrap());
        assert!(!th.contains(&f(&s, "dia[R] dia[R] true")).unwrap());
    }
}
