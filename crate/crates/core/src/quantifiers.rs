//! Built-in k-quantifiers and their witness-set semantics.
//!
//! Every quantifier exposes three queries about its witness family `Q(𝔄, α)`:
//! membership of a given set, the ⊆-minimal members, and whether some member
//! lies inside a given set of tuples. [`WitnessFamily`] derives the latter two
//! from membership by powerset enumeration; [`QuantifierDef`] overrides all
//! three with direct algorithms and [`PowersetOracle`] keeps the derived
//! versions for cross-checking.
//!
//! The modal families (`dia`, `dia>=`, `cyc`, `inf`, `reach`) move the first
//! variable and keep `x2..xk` fixed. For `k = 1` this is exactly the unary
//! definition.
//!
//! `inf[R]` requires infinite witnesses, so on finite structures its witness
//! family is empty and `inf[R] φ` is false everywhere.

use itertools::Itertools;
use thiserror::Error;

use crate::bitset::{minimal_sets, BitSet};
use crate::formula::{FormulaError, QuantifierRef};
use crate::model::{Structure, TupleSpace};

/// Largest universe on which the powerset defaults may run.
pub const ORACLE_MAX_UNIVERSE: usize = 4;
/// Largest tuple space (`|A|^k`) on which the powerset defaults may run.
pub const ORACLE_MAX_TUPLES: usize = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QuantifierError {
    #[error(transparent)]
    Invalid(#[from] FormulaError),
    #[error("signature mismatch: `{quantifier}` needs binary relation `{relation}`")]
    SignatureMismatch { quantifier: String, relation: String },
    #[error("powerset oracle limited to universes of at most {ORACLE_MAX_UNIVERSE} elements and {ORACLE_MAX_TUPLES} tuples (got {universe} elements, {tuples} tuples)")]
    OracleTooLarge { universe: usize, tuples: usize },
    #[error("tuple set has capacity {found}, expected {expected}")]
    CapacityMismatch { expected: usize, found: usize },
}

/// The witness-set interface shared by all quantifiers.
///
/// `alpha` is a tuple code in `s.tuple_space(self.k())`; witness sets and
/// extensions are sets of such codes.
pub trait WitnessFamily {
    fn k(&self) -> usize;

    /// Whether `w ∈ Q(𝔄, α)`.
    fn is_witness(&self, s: &Structure, alpha: usize, w: &BitSet) -> bool;

    /// The ⊆-minimal members of `Q(𝔄, α)` in canonical order.
    fn minimal_witnesses(&self, s: &Structure, alpha: usize) -> Vec<BitSet> {
        let size = s.tuple_space(self.k()).size();
        let all = powerset(size).filter(|w| self.is_witness(s, alpha, w)).collect();
        minimal_sets(all)
    }

    /// Whether some `w ∈ Q(𝔄, α)` satisfies `w ⊆ e`.
    fn admits_witness_within(&self, s: &Structure, alpha: usize, e: &BitSet) -> bool {
        subsets_of(e).any(|w| self.is_witness(s, alpha, &w))
    }
}

/// All subsets of `{0, …, size-1}`.
pub fn powerset(size: usize) -> impl Iterator<Item = BitSet> {
    assert!(size < 63, "powerset over {size} points");
    (0u64..(1u64 << size)).map(move |mask| {
        BitSet::from_indices(size, (0..size).filter(|i| mask & (1 << i) != 0))
    })
}

/// All subsets of `e` (as sets over the same capacity).
pub fn subsets_of(e: &BitSet) -> impl Iterator<Item = BitSet> + '_ {
    let items = e.to_vec();
    assert!(items.len() < 63, "subset enumeration over {} points", items.len());
    (0u64..(1u64 << items.len())).map(move |mask| {
        BitSet::from_indices(
            e.capacity(),
            items
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, &t)| t),
        )
    })
}

/// An instantiated quantifier: a built-in family at a fixed `k`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QuantifierDef {
    kind: QuantifierRef,
    k: usize,
}

impl QuantifierDef {
    pub fn new(kind: QuantifierRef, k: usize) -> Result<Self, QuantifierError> {
        match &kind {
            QuantifierRef::DiamondAtLeast { n: 0, .. } | QuantifierRef::CountAtLeast { n: 0, .. } => {
                return Err(FormulaError::InvalidQuantifier {
                    quantifier: kind.to_string(),
                    reason: "threshold must be at least 1".into(),
                }
                .into())
            }
            QuantifierRef::CountAtLeast { var, .. } if *var == 0 || *var > k => {
                return Err(FormulaError::VariableOutOfRange { var: *var, k }.into())
            }
            _ => {}
        }
        if k == 0 {
            return Err(FormulaError::InvalidQuantifier {
                quantifier: kind.to_string(),
                reason: "k must be positive".into(),
            }
            .into());
        }
        Ok(QuantifierDef { kind, k })
    }

    pub fn parse(text: &str, k: usize) -> Result<Self, QuantifierError> {
        Self::new(QuantifierRef::parse(text)?, k)
    }

    pub fn parse_list(text: &str, k: usize) -> Result<Vec<Self>, QuantifierError> {
        QuantifierRef::parse_list(text)?
            .into_iter()
            .map(|q| Self::new(q, k))
            .collect()
    }

    pub fn kind(&self) -> &QuantifierRef {
        &self.kind
    }

    pub fn name(&self) -> String {
        self.kind.to_string()
    }

    /// Checks σ_Q ⊆ signature of `s`.
    pub fn check_structure(&self, s: &Structure) -> Result<(), QuantifierError> {
        if let Some(r) = self.kind.relation() {
            if s.signature().arity(r) != Some(2) {
                return Err(QuantifierError::SignatureMismatch {
                    quantifier: self.name(),
                    relation: r.to_string(),
                });
            }
        }
        Ok(())
    }

    fn check_set(&self, s: &Structure, w: &BitSet) -> Result<(), QuantifierError> {
        let expected = s.tuple_space(self.k).size();
        if w.capacity() != expected {
            return Err(QuantifierError::CapacityMismatch {
                expected,
                found: w.capacity(),
            });
        }
        Ok(())
    }

    pub fn try_is_witness(&self, s: &Structure, alpha: usize, w: &BitSet) -> Result<bool, QuantifierError> {
        self.check_structure(s)?;
        self.check_set(s, w)?;
        Ok(self.is_witness(s, alpha, w))
    }

    pub fn try_minimal_witnesses(&self, s: &Structure, alpha: usize) -> Result<Vec<BitSet>, QuantifierError> {
        self.check_structure(s)?;
        Ok(self.minimal_witnesses(s, alpha))
    }

    pub fn try_admits_witness_within(&self, s: &Structure, alpha: usize, e: &BitSet) -> Result<bool, QuantifierError> {
        self.check_structure(s)?;
        self.check_set(s, e)?;
        Ok(self.admits_witness_within(s, alpha, e))
    }

    fn successors<'s>(&self, s: &'s Structure, a: usize) -> &'s BitSet {
        let r = self.kind.relation().expect("relational quantifier");
        s.relation(r)
            .and_then(|rel| rel.successors(a))
            .expect("checked binary relation")
    }

    /// Tuples `α[x1 ↦ c]` for `c ∈ cs`, as a set.
    fn lift(&self, s: &Structure, alpha: usize, cs: impl IntoIterator<Item = usize>) -> BitSet {
        let sp = s.tuple_space(self.k);
        BitSet::from_indices(sp.size(), cs.into_iter().map(|c| sp.replace(alpha, 0, c)))
    }

    /// Elements `c` with `α[x1 ↦ c] ∈ e`.
    fn project(&self, s: &Structure, alpha: usize, e: &BitSet) -> BitSet {
        let sp = s.tuple_space(self.k);
        BitSet::from_indices(s.len(), (0..s.len()).filter(|&c| e.contains(sp.replace(alpha, 0, c))))
    }

    /// `Some(projection)` if every tuple of `w` lies on the x1-line through α.
    fn on_pivot_line(&self, s: &Structure, alpha: usize, w: &BitSet) -> Option<BitSet> {
        let proj = self.project(s, alpha, w);
        (proj.len() == w.len()).then_some(proj)
    }

    fn reachable(&self, s: &Structure, from: usize) -> BitSet {
        let mut seen = BitSet::new(s.len());
        seen.insert(from);
        let mut queue = std::collections::VecDeque::from([from]);
        while let Some(a) = queue.pop_front() {
            for c in self.successors(s, a).iter() {
                if seen.insert(c) {
                    queue.push_back(c);
                }
            }
        }
        seen
    }
}

impl WitnessFamily for QuantifierDef {
    fn k(&self) -> usize {
        self.k
    }

    fn is_witness(&self, s: &Structure, alpha: usize, w: &BitSet) -> bool {
        let sp = s.tuple_space(self.k);
        let a = sp.component(alpha, 0);
        match &self.kind {
            QuantifierRef::Diamond { .. } => {
                w.len() == 1
                    && self
                        .on_pivot_line(s, alpha, w)
                        .is_some_and(|p| p.is_subset(self.successors(s, a)))
            }
            QuantifierRef::DiamondAtLeast { n, .. } => {
                let succ = self.lift(s, alpha, self.successors(s, a).iter());
                w.intersection_len(&succ) >= *n
            }
            QuantifierRef::Universal => w.is_full(),
            QuantifierRef::Existential => !w.is_empty(),
            QuantifierRef::Cycle { .. } => self
                .on_pivot_line(s, alpha, w)
                .is_some_and(|p| p.len() >= 3 && cycles::spans_simple_cycle(&p, |x| self.successors(s, x))),
            QuantifierRef::Infinite { .. } => false,
            QuantifierRef::Reach { .. } => {
                w.len() == 1
                    && self
                        .on_pivot_line(s, alpha, w)
                        .is_some_and(|p| p.is_subset(&self.reachable(s, a)))
            }
            QuantifierRef::CountAtLeast { n, var } => {
                let line = BitSet::from_indices(sp.size(), sp.line(alpha, var - 1));
                w.len() >= *n && w.is_subset(&line)
            }
        }
    }

    fn minimal_witnesses(&self, s: &Structure, alpha: usize) -> Vec<BitSet> {
        let sp = s.tuple_space(self.k);
        let a = sp.component(alpha, 0);
        let singletons = |cs: &BitSet| cs.iter().map(|c| self.lift(s, alpha, [c])).collect();
        let out: Vec<BitSet> = match &self.kind {
            QuantifierRef::Diamond { .. } => singletons(self.successors(s, a)),
            QuantifierRef::DiamondAtLeast { n, .. } => self
                .successors(s, a)
                .iter()
                .combinations(*n)
                .map(|cs| self.lift(s, alpha, cs))
                .collect(),
            QuantifierRef::Universal => vec![BitSet::full(sp.size())],
            QuantifierRef::Existential => (0..sp.size())
                .map(|t| BitSet::from_indices(sp.size(), [t]))
                .collect(),
            QuantifierRef::Cycle { .. } => {
                let all = BitSet::full(s.len());
                let sets = cycles::simple_cycle_vertex_sets(&all, |x| self.successors(s, x));
                minimal_sets(sets)
                    .into_iter()
                    .map(|p| self.lift(s, alpha, p.iter()))
                    .collect()
            }
            QuantifierRef::Infinite { .. } => vec![],
            QuantifierRef::Reach { .. } => singletons(&self.reachable(s, a)),
            QuantifierRef::CountAtLeast { n, var } => sp
                .line(alpha, var - 1)
                .combinations(*n)
                .map(|ts| BitSet::from_indices(sp.size(), ts))
                .collect(),
        };
        // Lifting is order-preserving, but sort anyway to pin the canonical order.
        let mut out = out;
        out.sort();
        out
    }

    fn admits_witness_within(&self, s: &Structure, alpha: usize, e: &BitSet) -> bool {
        let sp = s.tuple_space(self.k);
        let a = sp.component(alpha, 0);
        match &self.kind {
            QuantifierRef::Diamond { .. } => self.project(s, alpha, e).intersects(self.successors(s, a)),
            QuantifierRef::DiamondAtLeast { n, .. } => {
                self.project(s, alpha, e).intersection_len(self.successors(s, a)) >= *n
            }
            QuantifierRef::Universal => e.is_full(),
            QuantifierRef::Existential => !e.is_empty(),
            QuantifierRef::Cycle { .. } => {
                let allowed = self.project(s, alpha, e);
                cycles::has_simple_cycle(&allowed, |x| self.successors(s, x))
            }
            QuantifierRef::Infinite { .. } => false,
            QuantifierRef::Reach { .. } => self.project(s, alpha, e).intersects(&self.reachable(s, a)),
            QuantifierRef::CountAtLeast { n, var } => {
                sp.line(alpha, var - 1).filter(|&t| e.contains(t)).count() >= *n
            }
        }
    }
}

/// Runs a quantifier with the powerset-derived defaults only. Refuses
/// structures beyond [`ORACLE_MAX_UNIVERSE`] elements.
#[derive(Clone, Copy, Debug)]
pub struct PowersetOracle<'q>(pub &'q QuantifierDef);

impl PowersetOracle<'_> {
    pub fn guard(&self, s: &Structure) -> Result<(), QuantifierError> {
        let tuples = TupleSpace::new(s.len(), self.0.k).size();
        if s.len() > ORACLE_MAX_UNIVERSE || tuples > ORACLE_MAX_TUPLES {
            return Err(QuantifierError::OracleTooLarge {
                universe: s.len(),
                tuples,
            });
        }
        self.0.check_structure(s)
    }
}

impl WitnessFamily for PowersetOracle<'_> {
    fn k(&self) -> usize {
        self.0.k
    }

    fn is_witness(&self, s: &Structure, alpha: usize, w: &BitSet) -> bool {
        self.0.is_witness(s, alpha, w)
    }
}

mod cycles {
    use crate::bitset::BitSet;

    /// Whether the subgraph induced on `allowed` has a simple directed cycle of
    /// length at least 3. Each cycle is found from its smallest vertex.
    pub fn has_simple_cycle<'a>(allowed: &BitSet, succ: impl Fn(usize) -> &'a BitSet) -> bool {
        let mut found = false;
        for start in allowed.iter() {
            let mut path = vec![start];
            let mut on_path = BitSet::new(allowed.capacity());
            on_path.insert(start);
            dfs(start, start, allowed, &succ, &mut path, &mut on_path, &mut |_| {
                found = true;
                true
            });
            if found {
                return true;
            }
        }
        false
    }

    /// Vertex sets of all simple directed cycles of length at least 3 within
    /// `allowed` (deduplicated, not necessarily minimal).
    pub fn simple_cycle_vertex_sets<'a>(allowed: &BitSet, succ: impl Fn(usize) -> &'a BitSet) -> Vec<BitSet> {
        let mut out = Vec::new();
        for start in allowed.iter() {
            let mut path = vec![start];
            let mut on_path = BitSet::new(allowed.capacity());
            on_path.insert(start);
            dfs(start, start, allowed, &succ, &mut path, &mut on_path, &mut |p| {
                out.push(BitSet::from_indices(allowed.capacity(), p.iter().copied()));
                false
            });
        }
        out.sort();
        out.dedup();
        out
    }

    /// Whether the vertices of `set` can be arranged as one simple cycle.
    pub fn spans_simple_cycle<'a>(set: &BitSet, succ: impl Fn(usize) -> &'a BitSet) -> bool {
        let Some(start) = set.first() else {
            return false;
        };
        let mut path = vec![start];
        let mut on_path = BitSet::new(set.capacity());
        on_path.insert(start);
        let want = set.len();
        let mut found = false;
        dfs(start, start, set, &succ, &mut path, &mut on_path, &mut |p| {
            if p.len() == want {
                found = true;
            }
            found
        });
        found
    }

    /// Extends simple paths from `start` through vertices greater than
    /// `start`, reporting every closed path of length at least 3. Stops as
    /// soon as `report` returns true; returns whether it stopped.
    fn dfs<'a>(
        start: usize,
        at: usize,
        allowed: &BitSet,
        succ: &impl Fn(usize) -> &'a BitSet,
        path: &mut Vec<usize>,
        on_path: &mut BitSet,
        report: &mut impl FnMut(&[usize]) -> bool,
    ) -> bool {
        for next in succ(at).iter() {
            if !allowed.contains(next) {
                continue;
            }
            if next == start {
                if path.len() >= 3 && report(path) {
                    return true;
                }
                continue;
            }
            if next < start || on_path.contains(next) {
                continue;
            }
            path.push(next);
            on_path.insert(next);
            let stop = dfs(start, next, allowed, succ, path, on_path, report);
            path.pop();
            on_path.remove(next);
            if stop {
                return true;
            }
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::k1;
    use crate::model::{apply_bijection, load_structure, reduct, Bijection, Signature};

    fn q(text: &str, k: usize) -> QuantifierDef {
        QuantifierDef::parse(text, k).unwrap()
    }

    fn set(s: &Structure, k: usize, tuples: &[&[usize]]) -> BitSet {
        let sp = s.tuple_space(k);
        BitSet::from_indices(sp.size(), tuples.iter().map(|t| sp.encode(t)))
    }

    const A: usize = 0;
    const B: usize = 1;
    const C: usize = 2;

    #[test]
    fn diamond_witnesses() {
        let s = k1();
        let dia = q("dia[R]", 1);
        assert!(dia.is_witness(&s, A, &set(&s, 1, &[&[B]])));
        assert!(!dia.is_witness(&s, A, &set(&s, 1, &[&[B], &[C]])));
        assert_eq!(dia.minimal_witnesses(&s, A), vec![set(&s, 1, &[&[B]])]);
        assert!(dia.admits_witness_within(&s, A, &set(&s, 1, &[&[B]])));
        assert!(!dia.admits_witness_within(&s, C, &BitSet::full(3)));
    }

    #[test]
    fn universal_and_counting() {
        let s = k1();
        assert_eq!(q("all", 1).minimal_witnesses(&s, A), vec![BitSet::full(3)]);
        let ex2 = q("ex>=2[x1]", 1).minimal_witnesses(&s, A);
        assert_eq!(ex2.len(), 3);
        assert!(ex2.iter().all(|w| w.len() == 2));
        assert_eq!(ex2[0], set(&s, 1, &[&[A], &[B]]));
    }

    #[test]
    fn reach_and_cycle() {
        let s = k1();
        assert!(q("reach[R]", 1).admits_witness_within(&s, A, &set(&s, 1, &[&[C]])));
        assert!(q("reach[R]", 1).admits_witness_within(&s, A, &set(&s, 1, &[&[A]])));
        assert!(!q("reach[R]", 1).admits_witness_within(&s, B, &set(&s, 1, &[&[A]])));
        assert!(!q("cyc[R]", 1).admits_witness_within(&s, A, &BitSet::full(3)));
        assert!(q("cyc[R]", 1).minimal_witnesses(&s, A).is_empty());
    }

    #[test]
    fn infinite_is_never_witnessed() {
        let s = k1();
        let inf = q("inf[R]", 1);
        assert!(!inf.is_witness(&s, A, &BitSet::full(3)));
        assert!(inf.minimal_witnesses(&s, A).is_empty());
        assert!(!inf.admits_witness_within(&s, A, &BitSet::full(3)));
    }

    #[test]
    fn cycles_need_three_distinct_elements() {
        let doc = r#"{"signature": {"R": 2}, "universe": ["a","b","c","d"],
            "relations": {"R": [["a","b"],["b","a"],["c","c"],["a","c"],["c","d"],["d","a"]]}}"#;
        let s = load_structure(doc).unwrap();
        let cyc = q("cyc[R]", 1);
        // 2-cycle a<->b and loop at c do not count; a->c->d->a does.
        assert_eq!(cyc.minimal_witnesses(&s, 1), vec![set(&s, 1, &[&[0], &[2], &[3]])]);
        assert!(!cyc.admits_witness_within(&s, 0, &set(&s, 1, &[&[0], &[1], &[2]])));
        assert!(cyc.is_witness(&s, 1, &set(&s, 1, &[&[0], &[2], &[3]])));
        assert!(!cyc.is_witness(&s, 1, &set(&s, 1, &[&[0], &[1], &[2], &[3]])));
    }

    #[test]
    fn diamond_at_least_takes_junk_literally() {
        let doc = r#"{"signature": {"R": 2}, "universe": ["a","b","c"],
            "relations": {"R": [["a","b"],["a","c"]]}}"#;
        let s = load_structure(doc).unwrap();
        let d2 = q("dia>=2[R]", 1);
        assert!(d2.is_witness(&s, 0, &BitSet::full(3)));
        assert_eq!(d2.minimal_witnesses(&s, 0), vec![set(&s, 1, &[&[1], &[2]])]);
        assert!(!d2.admits_witness_within(&s, 0, &set(&s, 1, &[&[0], &[1]])));
    }

    #[test]
    fn pairs_move_only_the_pivot() {
        let s = k1();
        let sp = s.tuple_space(2);
        let dia = q("dia[R]", 2);
        let alpha = sp.encode(&[A, C]);
        assert_eq!(dia.minimal_witnesses(&s, alpha), vec![set(&s, 2, &[&[B, C]])]);
        let ex = q("ex>=1[x2]", 2);
        assert_eq!(ex.minimal_witnesses(&s, alpha).len(), 3);
        assert!(ex.admits_witness_within(&s, alpha, &set(&s, 2, &[&[A, B]])));
        assert!(!ex.admits_witness_within(&s, alpha, &set(&s, 2, &[&[B, B]])));
    }

    #[test]
    fn signature_checked() {
        let s = reduct(&k1(), &Signature::from_pairs([("P", 1)]).unwrap()).unwrap();
        assert!(matches!(
            q("dia[R]", 1).try_minimal_witnesses(&s, 0),
            Err(QuantifierError::SignatureMismatch { .. })
        ));
        assert!(q("all", 1).try_minimal_witnesses(&s, 0).is_ok());
    }

    #[test]
    fn oracle_agrees_on_k1() {
        let s = k1();
        for text in ["dia[R]", "dia>=2[R]", "all", "some", "cyc[R]", "inf[R]", "reach[R]", "ex>=2[x1]"] {
            let direct = q(text, 1);
            let oracle = PowersetOracle(&direct);
            oracle.guard(&s).unwrap();
            for alpha in 0..3 {
                assert_eq!(direct.minimal_witnesses(&s, alpha), oracle.minimal_witnesses(&s, alpha), "{text}");
                for e in powerset(3) {
                    assert_eq!(
                        direct.admits_witness_within(&s, alpha, &e),
                        oracle.admits_witness_within(&s, alpha, &e),
                        "{text} at {alpha} within {e:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn oracle_guard() {
        let doc = r#"{"signature": {}, "universe": ["a","b","c","d","e"]}"#;
        let s = load_structure(doc).unwrap();
        let all = q("all", 1);
        assert!(matches!(PowersetOracle(&all).guard(&s), Err(QuantifierError::OracleTooLarge { .. })));
    }

    #[test]
    fn equivariant_under_renaming() {
        let s = k1();
        let pi = Bijection::from_pairs([("a", "c"), ("b", "a"), ("c", "b")]);
        let t = apply_bijection(&s, &pi).unwrap();
        // apply_bijection keeps indices, so compare after permuting listing order too.
        let t2 = crate::model::permute_elements(&t, &[2, 0, 1]);
        let map = pi.index_map(&s, &t2).unwrap();
        for text in ["dia[R]", "reach[R]", "ex>=2[x1]", "some"] {
            let qd = q(text, 1);
            for alpha in 0..3 {
                let img: Vec<BitSet> = qd
                    .minimal_witnesses(&s, alpha)
                    .iter()
                    .map(|w| BitSet::from_indices(3, w.iter().map(|x| map[x])))
                    .collect();
                let mut img = img;
                img.sort();
                assert_eq!(qd.minimal_witnesses(&t2, map[alpha]), img, "{text}");
            }
        }
    }
}
