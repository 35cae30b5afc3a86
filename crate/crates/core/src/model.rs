//! Finite relational signatures and structures, k-tuples over a universe,
//! reducts, renamings and a brute-force isomorphism test.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bitset::BitSet;

/// Name of the optional built-in equality relation.
pub const EQUALITY: &str = "eq";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("universe must not be empty")]
    EmptyUniverse,
    #[error("element `{0}` listed twice in the universe")]
    DuplicateElement(String),
    #[error("relation `{0}` must have arity at least 1")]
    ZeroArity(String),
    #[error("relation `{0}` is interpreted but not declared in the signature")]
    UndeclaredRelation(String),
    #[error("relation `{relation}`: tuple {tuple:?} mentions `{element}`, which is not in the universe")]
    UnknownElement {
        relation: String,
        tuple: Vec<String>,
        element: String,
    },
    #[error("relation `{relation}` has arity {expected}, but tuple {tuple:?} has length {}", tuple.len())]
    ArityMismatch {
        relation: String,
        expected: usize,
        tuple: Vec<String>,
    },
    #[error("relation `{0}` is already declared; cannot add built-in equality")]
    EqualityClash(String),
    #[error("not a bijection: {0}")]
    NotABijection(String),
    #[error("signature mismatch: {0}")]
    SignatureMismatch(String),
    #[error("invalid assignment: {0}")]
    BadAssignment(String),
}

/// Relation names with their arities, in declaration order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Signature {
    relations: IndexMap<String, usize>,
}

impl Signature {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<S: Into<String>>(pairs: impl IntoIterator<Item = (S, usize)>) -> Result<Self, ModelError> {
        let mut sig = Signature::new();
        for (name, arity) in pairs {
            sig.insert(name, arity)?;
        }
        Ok(sig)
    }

    pub fn insert(&mut self, name: impl Into<String>, arity: usize) -> Result<(), ModelError> {
        let name = name.into();
        if arity == 0 {
            return Err(ModelError::ZeroArity(name));
        }
        self.relations.insert(name, arity);
        Ok(())
    }

    pub fn arity(&self, name: &str) -> Option<usize> {
        self.relations.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, usize)> {
        self.relations.iter().map(|(n, a)| (n.as_str(), *a))
    }

    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }

    /// Every relation of `self` occurs in `other` with the same arity.
    pub fn is_subset(&self, other: &Signature) -> bool {
        self.iter().all(|(n, a)| other.arity(n) == Some(a))
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (n, a)) in self.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{n}:{a}")?;
        }
        write!(f, "}}")
    }
}

/// The interpretation of one relation symbol.
#[derive(Clone, Debug)]
pub struct Relation {
    arity: usize,
    tuples: BTreeSet<Vec<usize>>,
    /// Successor sets, present for binary relations only.
    successors: Option<Vec<BitSet>>,
}

impl Relation {
    fn new(arity: usize, tuples: BTreeSet<Vec<usize>>, universe: usize) -> Self {
        let successors = (arity == 2).then(|| {
            let mut succ = vec![BitSet::new(universe); universe];
            for t in &tuples {
                succ[t[0]].insert(t[1]);
            }
            succ
        });
        Relation {
            arity,
            tuples,
            successors,
        }
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn contains(&self, tuple: &[usize]) -> bool {
        self.tuples.contains(tuple)
    }

    pub fn tuples(&self) -> impl Iterator<Item = &Vec<usize>> {
        self.tuples.iter()
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    /// `R[a]`; only defined for binary relations.
    pub fn successors(&self, a: usize) -> Option<&BitSet> {
        self.successors.as_ref().map(|s| &s[a])
    }
}

impl PartialEq for Relation {
    fn eq(&self, other: &Self) -> bool {
        self.arity == other.arity && self.tuples == other.tuples
    }
}

impl Eq for Relation {}

/// A finite relational structure over named elements.
///
/// The order of `universe` is the canonical iteration order used by every
/// downstream enumeration.
#[derive(Clone, Debug)]
pub struct Structure {
    signature: Signature,
    universe: Vec<String>,
    index: HashMap<String, usize>,
    relations: IndexMap<String, Relation>,
}

impl PartialEq for Structure {
    fn eq(&self, other: &Self) -> bool {
        self.signature == other.signature
            && self.universe == other.universe
            && self
                .relations
                .iter()
                .all(|(n, r)| other.relations.get(n) == Some(r))
    }
}

impl Eq for Structure {}

/// The JSON document form of a structure.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureDoc {
    pub signature: IndexMap<String, usize>,
    pub universe: Vec<String>,
    #[serde(default)]
    pub relations: IndexMap<String, Vec<Vec<String>>>,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct LoadOptions {
    /// Adds a binary relation `eq` interpreted as the diagonal.
    pub with_equality: bool,
}

pub fn load_structure(text: &str) -> Result<Structure, ModelError> {
    load_structure_with(text, LoadOptions::default())
}

pub fn load_structure_with(text: &str, opts: LoadOptions) -> Result<Structure, ModelError> {
    let doc: StructureDoc = serde_json::from_str(text).map_err(|e| ModelError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let mut s = Structure::from_doc(&doc)?;
    if opts.with_equality {
        s = s.with_equality()?;
    }
    Ok(s)
}

impl Structure {
    pub fn from_doc(doc: &StructureDoc) -> Result<Self, ModelError> {
        let mut signature = Signature::new();
        for (name, &arity) in &doc.signature {
            signature.insert(name.clone(), arity)?;
        }
        let relations = doc
            .relations
            .iter()
            .map(|(n, ts)| (n.clone(), ts.clone()))
            .collect::<Vec<_>>();
        Self::new(signature, doc.universe.clone(), relations)
    }

    /// Builds and validates a structure. Relations of the signature that are
    /// not mentioned are interpreted as empty.
    pub fn new(
        signature: Signature,
        universe: Vec<String>,
        relations: impl IntoIterator<Item = (String, Vec<Vec<String>>)>,
    ) -> Result<Self, ModelError> {
        if universe.is_empty() {
            return Err(ModelError::EmptyUniverse);
        }
        let mut index = HashMap::new();
        for (i, e) in universe.iter().enumerate() {
            if index.insert(e.clone(), i).is_some() {
                return Err(ModelError::DuplicateElement(e.clone()));
            }
        }
        let mut raw: IndexMap<String, BTreeSet<Vec<usize>>> = signature
            .iter()
            .map(|(n, _)| (n.to_string(), BTreeSet::new()))
            .collect();
        for (name, tuples) in relations {
            let arity = signature
                .arity(&name)
                .ok_or_else(|| ModelError::UndeclaredRelation(name.clone()))?;
            let slot = raw.get_mut(&name).expect("declared");
            for t in tuples {
                if t.len() != arity {
                    return Err(ModelError::ArityMismatch {
                        relation: name.clone(),
                        expected: arity,
                        tuple: t,
                    });
                }
                let mut idx = Vec::with_capacity(arity);
                for e in &t {
                    match index.get(e) {
                        Some(&i) => idx.push(i),
                        None => {
                            return Err(ModelError::UnknownElement {
                                relation: name.clone(),
                                element: e.clone(),
                                tuple: t.clone(),
                            })
                        }
                    }
                }
                slot.insert(idx);
            }
        }
        Ok(Self::from_indexed(signature, universe, index, raw))
    }

    fn from_indexed(
        signature: Signature,
        universe: Vec<String>,
        index: HashMap<String, usize>,
        raw: IndexMap<String, BTreeSet<Vec<usize>>>,
    ) -> Self {
        let n = universe.len();
        let relations = raw
            .into_iter()
            .map(|(name, ts)| {
                let arity = signature.arity(&name).expect("declared");
                (name, Relation::new(arity, ts, n))
            })
            .collect();
        Structure {
            signature,
            universe,
            index,
            relations,
        }
    }

    /// Builds a structure directly from element indices. Panics on invalid
    /// input; meant for generators that construct valid data by design.
    pub fn from_index_tuples(
        signature: Signature,
        universe: Vec<String>,
        relations: IndexMap<String, BTreeSet<Vec<usize>>>,
    ) -> Self {
        assert!(!universe.is_empty());
        let index = universe
            .iter()
            .enumerate()
            .map(|(i, e)| (e.clone(), i))
            .collect::<HashMap<_, _>>();
        assert_eq!(index.len(), universe.len(), "duplicate element names");
        let mut raw: IndexMap<String, BTreeSet<Vec<usize>>> = signature
            .iter()
            .map(|(n, _)| (n.to_string(), BTreeSet::new()))
            .collect();
        for (name, ts) in relations {
            let arity = signature.arity(&name).expect("relation in signature");
            for t in &ts {
                assert_eq!(t.len(), arity);
                assert!(t.iter().all(|&e| e < universe.len()));
            }
            raw.insert(name, ts);
        }
        Self::from_indexed(signature, universe, index, raw)
    }

    pub fn with_equality(&self) -> Result<Self, ModelError> {
        if self.signature.arity(EQUALITY).is_some() {
            return Err(ModelError::EqualityClash(EQUALITY.to_string()));
        }
        let mut sig = self.signature.clone();
        sig.insert(EQUALITY, 2)?;
        let mut raw: IndexMap<String, BTreeSet<Vec<usize>>> = self
            .relations
            .iter()
            .map(|(n, r)| (n.clone(), r.tuples.clone()))
            .collect();
        raw.insert(EQUALITY.to_string(), (0..self.len()).map(|i| vec![i, i]).collect());
        Ok(Self::from_indexed(sig, self.universe.clone(), self.index.clone(), raw))
    }

    pub fn signature(&self) -> &Signature {
        &self.signature
    }

    pub fn universe(&self) -> &[String] {
        &self.universe
    }

    pub fn len(&self) -> usize {
        self.universe.len()
    }

    pub fn is_empty(&self) -> bool {
        self.universe.is_empty()
    }

    pub fn element(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.universe[i]
    }

    pub fn relation(&self, name: &str) -> Option<&Relation> {
        self.relations.get(name)
    }

    pub fn relations(&self) -> impl Iterator<Item = (&str, &Relation)> {
        self.relations.iter().map(|(n, r)| (n.as_str(), r))
    }

    pub fn tuple_space(&self, k: usize) -> TupleSpace {
        TupleSpace::new(self.len(), k)
    }

    pub fn to_doc(&self) -> StructureDoc {
        StructureDoc {
            signature: self.signature.relations.clone(),
            universe: self.universe.clone(),
            relations: self
                .relations
                .iter()
                .map(|(n, r)| {
                    let ts = r
                        .tuples
                        .iter()
                        .map(|t| t.iter().map(|&e| self.universe[e].clone()).collect())
                        .collect();
                    (n.clone(), ts)
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_doc()).expect("structure serializes")
    }

    /// Parses a comma-separated list of element names as a k-tuple.
    pub fn parse_tuple(&self, text: &str, k: usize) -> Result<Assignment, ModelError> {
        let names: Vec<&str> = text.split(',').map(str::trim).collect();
        if names.len() != k {
            return Err(ModelError::BadAssignment(format!(
                "expected {k} element(s), got {} in `{text}`",
                names.len()
            )));
        }
        let values = names
            .iter()
            .map(|n| {
                self.element(n)
                    .ok_or_else(|| ModelError::BadAssignment(format!("`{n}` is not in the universe")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Assignment { values })
    }

    pub fn tuple_names(&self, space: TupleSpace, code: usize) -> Vec<String> {
        space
            .decode(code)
            .into_iter()
            .map(|e| self.universe[e].clone())
            .collect()
    }

    pub fn format_tuple(&self, space: TupleSpace, code: usize) -> String {
        self.tuple_names(space, code).join(",")
    }
}

/// A k-assignment, identified with the tuple `(α(x1), …, α(xk))` of
/// element indices.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Assignment {
    pub values: Vec<usize>,
}

impl Assignment {
    pub fn new(values: Vec<usize>) -> Self {
        Assignment { values }
    }

    pub fn k(&self) -> usize {
        self.values.len()
    }

    pub fn validate(&self, s: &Structure, k: usize) -> Result<(), ModelError> {
        if self.values.len() != k {
            return Err(ModelError::BadAssignment(format!(
                "assignment has length {}, expected {k}",
                self.values.len()
            )));
        }
        if let Some(v) = self.values.iter().find(|&&v| v >= s.len()) {
            return Err(ModelError::BadAssignment(format!("element index {v} out of range")));
        }
        Ok(())
    }

    pub fn code(&self, space: TupleSpace) -> usize {
        space.encode(&self.values)
    }

    pub fn names(&self, s: &Structure) -> Vec<String> {
        self.values.iter().map(|&v| s.name(v).to_string()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PointedStructure {
    pub structure: Structure,
    pub assignment: Assignment,
}

impl PointedStructure {
    pub fn new(structure: Structure, assignment: Assignment) -> Result<Self, ModelError> {
        assignment.validate(&structure, assignment.k())?;
        if assignment.k() == 0 {
            return Err(ModelError::BadAssignment("k must be positive".into()));
        }
        Ok(PointedStructure {
            structure,
            assignment,
        })
    }

    pub fn k(&self) -> usize {
        self.assignment.k()
    }
}

/// Indexing of `A^k` in lexicographic order (x1 most significant).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TupleSpace {
    pub n: usize,
    pub k: usize,
}

impl TupleSpace {
    pub fn new(n: usize, k: usize) -> Self {
        TupleSpace { n, k }
    }

    pub fn size(&self) -> usize {
        self.n.pow(self.k as u32)
    }

    pub fn encode(&self, t: &[usize]) -> usize {
        debug_assert_eq!(t.len(), self.k);
        t.iter().fold(0, |acc, &e| acc * self.n + e)
    }

    pub fn decode(&self, mut code: usize) -> Vec<usize> {
        let mut out = vec![0; self.k];
        for slot in out.iter_mut().rev() {
            *slot = code % self.n;
            code /= self.n;
        }
        out
    }

    fn stride(&self, pos: usize) -> usize {
        self.n.pow((self.k - 1 - pos) as u32)
    }

    /// Component at 0-based position `pos`.
    pub fn component(&self, code: usize, pos: usize) -> usize {
        (code / self.stride(pos)) % self.n
    }

    /// The tuple obtained by replacing position `pos` with `e`.
    pub fn replace(&self, code: usize, pos: usize, e: usize) -> usize {
        let st = self.stride(pos);
        code - self.component(code, pos) * st + e * st
    }

    /// All tuples agreeing with `code` off position `pos`, in ascending order.
    pub fn line(&self, code: usize, pos: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).map(move |e| self.replace(code, pos, e))
    }
}

/// A renaming of the elements of a universe.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Bijection {
    pub map: IndexMap<String, String>,
}

impl Bijection {
    pub fn from_pairs<S: Into<String>>(pairs: impl IntoIterator<Item = (S, S)>) -> Self {
        Bijection {
            map: pairs.into_iter().map(|(a, b)| (a.into(), b.into())).collect(),
        }
    }

    pub fn identity(s: &Structure) -> Self {
        Self::from_pairs(s.universe.iter().map(|e| (e.clone(), e.clone())))
    }

    pub fn get(&self, e: &str) -> Option<&str> {
        self.map.get(e).map(String::as_str)
    }

    /// Index-level map from `source` to `target`.
    pub fn index_map(&self, source: &Structure, target: &Structure) -> Option<Vec<usize>> {
        source
            .universe
            .iter()
            .map(|e| self.get(e).and_then(|img| target.element(img)))
            .collect()
    }
}

/// The isomorphic copy of `s` under `pi`. Universe order follows the images
/// of the original order.
pub fn apply_bijection(s: &Structure, pi: &Bijection) -> Result<Structure, ModelError> {
    let mut images = Vec::with_capacity(s.len());
    let mut seen = HashMap::new();
    for e in &s.universe {
        let img = pi
            .get(e)
            .ok_or_else(|| ModelError::NotABijection(format!("`{e}` has no image")))?;
        if let Some(prev) = seen.insert(img.to_string(), e.clone()) {
            return Err(ModelError::NotABijection(format!(
                "`{prev}` and `{e}` both map to `{img}`"
            )));
        }
        images.push(img.to_string());
    }
    // Indices are preserved: element i of the image is the image of element i.
    let raw = s
        .relations
        .iter()
        .map(|(n, r)| (n.clone(), r.tuples.clone()))
        .collect();
    let index = images
        .iter()
        .enumerate()
        .map(|(i, n)| (n.clone(), i))
        .collect();
    Ok(Structure::from_indexed(s.signature.clone(), images, index, raw))
}

/// Reorders the universe by the permutation `perm` (element `i` moves to
/// position `perm[i]`), keeping names. Used to test that results do not
/// depend on the listing order.
pub fn permute_elements(s: &Structure, perm: &[usize]) -> Structure {
    assert_eq!(perm.len(), s.len());
    let mut universe = vec![String::new(); s.len()];
    for (i, &p) in perm.iter().enumerate() {
        universe[p] = s.universe[i].clone();
    }
    let raw = s
        .relations
        .iter()
        .map(|(n, r)| {
            let ts = r
                .tuples
                .iter()
                .map(|t| t.iter().map(|&e| perm[e]).collect())
                .collect();
            (n.clone(), ts)
        })
        .collect();
    Structure::from_index_tuples(s.signature.clone(), universe, raw)
}

pub fn reduct(s: &Structure, sub: &Signature) -> Result<Structure, ModelError> {
    for (n, a) in sub.iter() {
        match s.signature.arity(n) {
            None => {
                return Err(ModelError::SignatureMismatch(format!(
                    "relation `{n}` is not in the signature {}",
                    s.signature
                )))
            }
            Some(b) if b != a => {
                return Err(ModelError::SignatureMismatch(format!(
                    "relation `{n}` has arity {b}, not {a}"
                )))
            }
            _ => {}
        }
    }
    let raw = sub
        .iter()
        .map(|(n, _)| (n.to_string(), s.relations[n].tuples.clone()))
        .collect();
    Ok(Structure::from_indexed(sub.clone(), s.universe.clone(), s.index.clone(), raw))
}

/// Per-element invariant used to prune the isomorphism search.
fn element_profile(s: &Structure, e: usize) -> Vec<usize> {
    let mut out = Vec::new();
    for (name, _) in s.signature.iter() {
        let r = &s.relations[name];
        for pos in 0..r.arity {
            out.push(r.tuples.iter().filter(|t| t[pos] == e).count());
        }
        out.push(r.tuples.iter().filter(|t| t.iter().all(|&x| x == e)).count());
    }
    out
}

/// Searches for an isomorphism `s → t` by backtracking over element images.
pub fn are_isomorphic(s: &Structure, t: &Structure) -> Result<Option<Bijection>, ModelError> {
    if s.signature != t.signature {
        return Err(ModelError::SignatureMismatch(format!(
            "{} vs {}",
            s.signature, t.signature
        )));
    }
    if s.len() != t.len() {
        return Ok(None);
    }
    for (name, r) in &s.relations {
        if r.len() != t.relations[name].len() {
            return Ok(None);
        }
    }
    let ps: Vec<_> = (0..s.len()).map(|e| element_profile(s, e)).collect();
    let pt: Vec<_> = (0..t.len()).map(|e| element_profile(t, e)).collect();
    // Tuples of s grouped by their largest element, checked once that element is placed.
    let mut by_max: Vec<Vec<(&str, &Vec<usize>)>> = vec![Vec::new(); s.len()];
    for (name, r) in &s.relations {
        for tup in &r.tuples {
            let m = *tup.iter().max().expect("arity >= 1");
            by_max[m].push((name.as_str(), tup));
        }
    }
    let mut image = vec![usize::MAX; s.len()];
    let mut used = vec![false; t.len()];

    #[allow(clippy::too_many_arguments)]
    fn search(
        i: usize,
        s: &Structure,
        t: &Structure,
        ps: &[Vec<usize>],
        pt: &[Vec<usize>],
        by_max: &[Vec<(&str, &Vec<usize>)>],
        image: &mut [usize],
        used: &mut [bool],
    ) -> bool {
        if i == s.len() {
            return true;
        }
        for c in 0..t.len() {
            if used[c] || ps[i] != pt[c] {
                continue;
            }
            image[i] = c;
            let ok = by_max[i].iter().all(|(name, tup)| {
                let mapped: Vec<usize> = tup.iter().map(|&e| image[e]).collect();
                t.relations[*name].contains(&mapped)
            });
            if ok {
                used[c] = true;
                if search(i + 1, s, t, ps, pt, by_max, image, used) {
                    return true;
                }
                used[c] = false;
            }
        }
        image[i] = usize::MAX;
        false
    }

    if search(0, s, t, &ps, &pt, &by_max, &mut image, &mut used) {
        Ok(Some(Bijection::from_pairs(
            (0..s.len()).map(|i| (s.universe[i].clone(), t.universe[image[i]].clone())),
        )))
    } else {
        Ok(None)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub const K1: &str = r#"{"signature": {"R": 2, "P": 1}, "universe": ["a","b","c"], "relations": {"R": [["a","b"],["b","c"]], "P": [["b"]]}}"#;

    pub fn k1() -> Structure {
        load_structure(K1).unwrap()
    }

    #[test]
    fn loads_k1() {
        let s = k1();
        assert_eq!(s.len(), 3);
        assert_eq!(s.signature().len(), 2);
        assert_eq!(s.relation("R").unwrap().len(), 2);
        assert!(s.relation("P").unwrap().contains(&[1]));
        assert_eq!(s.universe(), &["a", "b", "c"]);
    }

    #[test]
    fn rejects_unknown_element() {
        let doc = r#"{"signature": {"R": 2}, "universe": ["a"], "relations": {"R": [["a","z"]]}}"#;
        match load_structure(doc) {
            Err(ModelError::UnknownElement { relation, element, .. }) => {
                assert_eq!(relation, "R");
                assert_eq!(element, "z");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_arity_mismatch() {
        let doc = r#"{"signature": {"R": 2}, "universe": ["a"], "relations": {"R": [["a"]]}}"#;
        assert!(matches!(load_structure(doc), Err(ModelError::ArityMismatch { .. })));
    }

    #[test]
    fn reports_parse_position() {
        let err = load_structure("{\n  \"signature\": ").unwrap_err();
        assert!(matches!(err, ModelError::Parse { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn rejects_empty_universe_and_duplicates() {
        let empty = r#"{"signature": {}, "universe": []}"#;
        assert_eq!(load_structure(empty), Err(ModelError::EmptyUniverse));
        let dup = r#"{"signature": {}, "universe": ["a","a"]}"#;
        assert!(matches!(load_structure(dup), Err(ModelError::DuplicateElement(_))));
        let undeclared = r#"{"signature": {}, "universe": ["a"], "relations": {"S": []}}"#;
        assert!(matches!(load_structure(undeclared), Err(ModelError::UndeclaredRelation(_))));
    }

    #[test]
    fn equality_is_opt_in() {
        let s = load_structure_with(K1, LoadOptions { with_equality: true }).unwrap();
        let eq = s.relation(EQUALITY).unwrap();
        assert_eq!(eq.len(), 3);
        assert!(eq.contains(&[2, 2]));
        assert!(k1().relation(EQUALITY).is_none());
    }

    #[test]
    fn identity_bijection() {
        let s = k1();
        assert_eq!(apply_bijection(&s, &Bijection::identity(&s)).unwrap(), s);
    }

    #[test]
    fn swap_bijection() {
        let s = k1();
        let pi = Bijection::from_pairs([("a", "c"), ("b", "b"), ("c", "a")]);
        let img = apply_bijection(&s, &pi).unwrap();
        let doc = img.to_doc();
        let mut r = doc.relations["R"].clone();
        r.sort();
        assert_eq!(r, vec![vec!["b", "a"], vec!["c", "b"]]);
        assert_eq!(doc.relations["P"], vec![vec!["b"]]);
        let iso = are_isomorphic(&s, &img).unwrap().expect("isomorphic");
        assert_eq!(iso.get("a"), Some("c"));
        assert_eq!(iso.get("c"), Some("a"));
    }

    #[test]
    fn non_injective_map_rejected() {
        let s = k1();
        let pi = Bijection::from_pairs([("a", "b"), ("b", "b"), ("c", "c")]);
        assert!(matches!(apply_bijection(&s, &pi), Err(ModelError::NotABijection(_))));
    }

    #[test]
    fn reducts() {
        let s = k1();
        let r = reduct(&s, &Signature::from_pairs([("R", 2)]).unwrap()).unwrap();
        assert!(r.relation("P").is_none());
        assert_eq!(r.relation("R").unwrap().len(), 2);
        let bare = reduct(&s, &Signature::new()).unwrap();
        assert_eq!(bare.len(), 3);
        assert_eq!(bare.relations().count(), 0);
        assert!(reduct(&s, &Signature::from_pairs([("S", 1)]).unwrap()).is_err());
        assert!(reduct(&s, &Signature::from_pairs([("R", 3)]).unwrap()).is_err());
    }

    #[test]
    fn isomorphism_search() {
        let s = k1();
        let id = are_isomorphic(&s, &s).unwrap().unwrap();
        assert_eq!(id, Bijection::identity(&s));
        let no_p = Structure::new(
            s.signature().clone(),
            s.universe().to_vec(),
            [("R".to_string(), vec![vec!["a".into(), "b".into()], vec!["b".into(), "c".into()]])],
        )
        .unwrap();
        assert_eq!(are_isomorphic(&s, &no_p).unwrap(), None);
        let other_sig = reduct(&s, &Signature::from_pairs([("R", 2)]).unwrap()).unwrap();
        assert!(are_isomorphic(&s, &other_sig).is_err());
    }

    #[test]
    fn tuple_space_roundtrip() {
        let sp = TupleSpace::new(3, 2);
        assert_eq!(sp.size(), 9);
        for c in 0..9 {
            assert_eq!(sp.encode(&sp.decode(c)), c);
        }
        assert_eq!(sp.decode(5), vec![1, 2]);
        assert_eq!(sp.replace(5, 0, 2), sp.encode(&[2, 2]));
        assert_eq!(sp.line(5, 1).collect::<Vec<_>>(), vec![3, 4, 5]);
    }

    #[test]
    fn parse_tuple() {
        let s = k1();
        assert_eq!(s.parse_tuple("a,c", 2).unwrap().values, vec![0, 2]);
        assert!(s.parse_tuple("a", 2).is_err());
        assert!(s.parse_tuple("z", 1).is_err());
    }
}
