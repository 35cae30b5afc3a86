//! Direct and reduced products over finite index sets.
//!
//! Over a finite index set every ultrafilter is principal, so ultraproducts
//! here are isomorphic to one of their factors. The constructions are still
//! useful for testing: they exercise the quotient and relation clauses
//! exactly as written for arbitrary filters.

use std::collections::BTreeSet;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bitset::BitSet;
use crate::formula::Formula;
use crate::model::{Assignment, ModelError, Structure};
use crate::semantics::{eval, SemanticsError};

/// Largest direct-product universe the constructions will enumerate.
pub const MAX_PRODUCT_UNIVERSE: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProductError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
    #[error("the family must not be empty")]
    EmptyFamily,
    #[error("the index set must not be empty")]
    EmptyIndex,
    #[error("invalid filter: {0}")]
    InvalidFilter(String),
    #[error("not an ultrafilter")]
    NotUltra,
    #[error("index set has {index} members but the family has {family} structures")]
    IndexMismatch { index: usize, family: usize },
    #[error("size guard exceeded: product universe of {0} elements")]
    SizeGuard(usize),
}

/// Filter document: `{"index": [...], "sets": [[...], ...]}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterDoc {
    pub index: Vec<String>,
    pub sets: Vec<Vec<String>>,
}

/// A filter on a finite index set, stored extensionally.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiniteFilter {
    index: Vec<String>,
    sets: BTreeSet<BitSet>,
}

impl FiniteFilter {
    /// Validates a family of member sets against the filter axioms.
    pub fn new(index: Vec<String>, sets: impl IntoIterator<Item = BitSet>) -> Result<Self, ProductError> {
        check_index(&index)?;
        let n = index.len();
        let sets: BTreeSet<BitSet> = sets.into_iter().collect();
        if sets.iter().any(|s| s.capacity() != n) {
            return Err(ProductError::InvalidFilter("member set over a different index set".into()));
        }
        if sets.iter().any(BitSet::is_empty) {
            return Err(ProductError::InvalidFilter("contains the empty set".into()));
        }
        if !sets.contains(&BitSet::full(n)) {
            return Err(ProductError::InvalidFilter("does not contain the index set".into()));
        }
        for s in &sets {
            for t in &sets {
                if !sets.contains(&s.intersection(t)) {
                    return Err(ProductError::InvalidFilter(format!(
                        "not closed under intersection: {} ∩ {}",
                        names(&index, s),
                        names(&index, t)
                    )));
                }
            }
            for i in 0..n {
                let mut up = s.clone();
                up.insert(i);
                if !sets.contains(&up) {
                    return Err(ProductError::InvalidFilter(format!(
                        "not upward closed: {} ⊆ {}",
                        names(&index, s),
                        names(&index, &up)
                    )));
                }
            }
        }
        Ok(FiniteFilter { index, sets })
    }

    pub fn from_doc(doc: &FilterDoc) -> Result<Self, ProductError> {
        check_index(&doc.index)?;
        let sets = doc
            .sets
            .iter()
            .map(|s| index_set(&doc.index, s))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(doc.index.clone(), sets)
    }

    pub fn from_json(text: &str) -> Result<Self, ProductError> {
        let doc: FilterDoc = serde_json::from_str(text).map_err(|e| ProductError::InvalidFilter(e.to_string()))?;
        Self::from_doc(&doc)
    }

    /// The least filter containing the generators: supersets and
    /// intersections added to a fixed point.
    pub fn generate(index: Vec<String>, generators: impl IntoIterator<Item = BitSet>) -> Result<Self, ProductError> {
        check_index(&index)?;
        let n = index.len();
        let mut base = BitSet::full(n);
        for g in generators {
            if g.capacity() != n {
                return Err(ProductError::InvalidFilter("generator over a different index set".into()));
            }
            base.intersect_with(&g);
        }
        // Finite case: the generated filter is the up-set of the intersection.
        if base.is_empty() {
            return Err(ProductError::InvalidFilter("generators produce the empty set".into()));
        }
        let sets = crate::quantifiers::powerset(n).filter(|s| base.is_subset(s));
        Self::new(index, sets)
    }

    /// `{I}`.
    pub fn trivial(index: Vec<String>) -> Result<Self, ProductError> {
        let n = index.len();
        Self::new(index, [BitSet::full(n)])
    }

    /// The up-set of `{i0}`.
    pub fn principal(index: Vec<String>, i0: usize) -> Result<Self, ProductError> {
        let n = index.len();
        if i0 >= n {
            return Err(ProductError::InvalidFilter(format!("index {i0} out of range")));
        }
        Self::generate(index, [BitSet::from_indices(n, [i0])])
    }

    pub fn index(&self) -> &[String] {
        &self.index
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn contains(&self, s: &BitSet) -> bool {
        self.sets.contains(s)
    }

    pub fn sets(&self) -> impl Iterator<Item = &BitSet> {
        self.sets.iter()
    }

    /// Every subset or its complement is a member.
    pub fn is_ultra(&self) -> bool {
        crate::quantifiers::powerset(self.index.len()).all(|j| self.contains(&j) || self.contains(&j.complement()))
    }

    pub fn to_doc(&self) -> FilterDoc {
        FilterDoc {
            index: self.index.clone(),
            sets: self
                .sets
                .iter()
                .map(|s| s.iter().map(|i| self.index[i].clone()).collect())
                .collect(),
        }
    }
}

fn check_index(index: &[String]) -> Result<(), ProductError> {
    if index.is_empty() {
        return Err(ProductError::EmptyIndex);
    }
    let distinct: BTreeSet<&String> = index.iter().collect();
    if distinct.len() != index.len() {
        return Err(ProductError::InvalidFilter("duplicate index name".into()));
    }
    Ok(())
}

fn index_set(index: &[String], names: &[String]) -> Result<BitSet, ProductError> {
    let mut s = BitSet::new(index.len());
    for n in names {
        let i = index
            .iter()
            .position(|x| x == n)
            .ok_or_else(|| ProductError::InvalidFilter(format!("unknown index `{n}`")))?;
        s.insert(i);
    }
    Ok(s)
}

fn names(index: &[String], s: &BitSet) -> String {
    format!("{{{}}}", s.iter().map(|i| index[i].as_str()).collect::<Vec<_>>().join(","))
}

/// Default index names `0, 1, …`.
pub fn default_index(n: usize) -> Vec<String> {
    (0..n).map(|i| i.to_string()).collect()
}

/// A reduced product with its quotient map.
#[derive(Clone, Debug)]
pub struct ReducedProduct {
    pub structure: Structure,
    /// Representative index-tuple of each class, lexicographically least.
    pub representatives: Vec<Vec<usize>>,
    radices: Vec<usize>,
    class_of: Vec<usize>,
}

impl ReducedProduct {
    fn code(&self, element: &[usize]) -> usize {
        element.iter().zip(&self.radices).fold(0, |acc, (&e, &r)| acc * r + e)
    }

    /// The class of a product element given componentwise.
    pub fn class_of(&self, element: &[usize]) -> usize {
        self.class_of[self.code(element)]
    }

    /// `α_F`: the assignment whose `j`-th value is the class of `(α_i(x_j))_i`.
    pub fn transport(&self, assignments: &[Assignment]) -> Result<Assignment, ProductError> {
        if assignments.len() != self.radices.len() {
            return Err(ProductError::IndexMismatch {
                index: self.radices.len(),
                family: assignments.len(),
            });
        }
        let k = assignments[0].k();
        if assignments.iter().any(|a| a.k() != k) {
            return Err(ModelError::BadAssignment("assignments differ in k".into()).into());
        }
        for (a, &r) in assignments.iter().zip(&self.radices) {
            if a.values.iter().any(|&v| v >= r) {
                return Err(ModelError::BadAssignment(format!("{:?} out of range", a.values)).into());
            }
        }
        Ok(Assignment::new(
            (0..k)
                .map(|j| {
                    let element: Vec<usize> = assignments.iter().map(|a| a.values[j]).collect();
                    self.class_of(&element)
                })
                .collect(),
        ))
    }
}

fn check_family(family: &[Structure]) -> Result<usize, ProductError> {
    let first = family.first().ok_or(ProductError::EmptyFamily)?;
    for s in &family[1..] {
        if s.signature() != first.signature() {
            return Err(ModelError::SignatureMismatch(format!("{} vs {}", first.signature(), s.signature())).into());
        }
    }
    let size = family
        .iter()
        .try_fold(1usize, |acc, s| acc.checked_mul(s.len()).filter(|&n| n <= MAX_PRODUCT_UNIVERSE))
        .ok_or(ProductError::SizeGuard(
            family.iter().map(|s| s.len()).fold(1usize, |a, b| a.saturating_mul(b)),
        ))?;
    Ok(size)
}

/// The `F`-reduced product: elements identified when they agree on a member
/// of `F`, and `R` holding when it holds on a member of `F`.
pub fn reduced_product(family: &[Structure], filter: &FiniteFilter) -> Result<ReducedProduct, ProductError> {
    let size = check_family(family)?;
    let m = family.len();
    if filter.index().len() != m {
        return Err(ProductError::IndexMismatch {
            index: filter.index().len(),
            family: m,
        });
    }
    let radices: Vec<usize> = family.iter().map(Structure::len).collect();
    let decode = |mut code: usize| {
        let mut e = vec![0; m];
        for i in (0..m).rev() {
            e[i] = code % radices[i];
            code /= radices[i];
        }
        e
    };
    let agree = |x: &[usize], y: &[usize]| BitSet::from_indices(m, (0..m).filter(|&i| x[i] == y[i]));
    let mut representatives: Vec<Vec<usize>> = Vec::new();
    let mut class_of = Vec::with_capacity(size);
    for code in 0..size {
        let e = decode(code);
        let found = representatives.iter().position(|r| filter.contains(&agree(r, &e)));
        class_of.push(found.unwrap_or_else(|| {
            representatives.push(e.clone());
            representatives.len() - 1
        }));
    }
    let universe: Vec<String> = representatives
        .iter()
        .map(|r| {
            let parts: Vec<&str> = r.iter().enumerate().map(|(i, &e)| family[i].name(e)).collect();
            format!("<{}>", parts.join("|"))
        })
        .collect();
    let c = representatives.len();
    let mut relations: IndexMap<String, BTreeSet<Vec<usize>>> = IndexMap::new();
    for (name, arity) in family[0].signature().iter() {
        let mut tuples = BTreeSet::new();
        let total = c.checked_pow(arity as u32).filter(|&t| t <= MAX_PRODUCT_UNIVERSE * MAX_PRODUCT_UNIVERSE);
        let total = total.ok_or(ProductError::SizeGuard(c))?;
        for t in 0..total {
            let mut classes = vec![0; arity];
            let mut x = t;
            for slot in classes.iter_mut().rev() {
                *slot = x % c;
                x /= c;
            }
            let holds = BitSet::from_indices(
                m,
                (0..m).filter(|&i| {
                    let comp: Vec<usize> = classes.iter().map(|&cl| representatives[cl][i]).collect();
                    family[i].relation(name).expect("shared signature").contains(&comp)
                }),
            );
            if filter.contains(&holds) {
                tuples.insert(classes);
            }
        }
        relations.insert(name.to_string(), tuples);
    }
    let structure = Structure::from_index_tuples(family[0].signature().clone(), universe, relations);
    Ok(ReducedProduct {
        structure,
        representatives,
        radices,
        class_of,
    })
}

/// The direct product: the reduced product by `{I}`.
pub fn direct_product(family: &[Structure]) -> Result<ReducedProduct, ProductError> {
    check_family(family)?;
    reduced_product(family, &FiniteFilter::trivial(default_index(family.len()))?)
}

/// `⟦f⟧_α = {i | 𝔄_i, α_i ⊨ f}`.
pub fn truth_value_set(family: &[Structure], assignments: &[Assignment], f: &Formula) -> Result<BitSet, ProductError> {
    if family.is_empty() {
        return Err(ProductError::EmptyFamily);
    }
    if assignments.len() != family.len() {
        return Err(ProductError::IndexMismatch {
            index: family.len(),
            family: assignments.len(),
        });
    }
    let mut out = BitSet::new(family.len());
    for (i, (s, a)) in family.iter().zip(assignments).enumerate() {
        if eval(s, a, f)? {
            out.insert(i);
        }
    }
    Ok(out)
}

/// Both sides of the Łoś equivalence for one formula.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LosReport {
    pub formula: String,
    /// `∏𝔄_i/F, α_F ⊨ f`.
    pub product_side: bool,
    /// `⟦f⟧_α`, by index name.
    pub truth_set: Vec<String>,
    /// `⟦f⟧_α ∈ F`.
    pub filter_side: bool,
    pub agree: bool,
    pub note: String,
}

/// Evaluates both sides of the equivalence for any filter.
pub fn los_sides(
    family: &[Structure],
    assignments: &[Assignment],
    filter: &FiniteFilter,
    f: &Formula,
) -> Result<LosReport, ProductError> {
    let product = reduced_product(family, filter)?;
    let alpha = product.transport(assignments)?;
    let product_side = eval(&product.structure, &alpha, f)?;
    let truth = truth_value_set(family, assignments, f)?;
    let filter_side = filter.contains(&truth);
    let agree = product_side == filter_side;
    let note = if agree {
        "sides agree; over a finite index set this checks the product construction, not a property of the logic".into()
    } else {
        "sides disagree: construction bug (finite-index products cannot separate logics)".into()
    };
    Ok(LosReport {
        formula: f.to_string(),
        product_side,
        truth_set: truth.iter().map(|i| filter.index()[i].clone()).collect(),
        filter_side,
        agree,
        note,
    })
}

/// Łoś check for an ultrafilter.
pub fn los_check(
    family: &[Structure],
    assignments: &[Assignment],
    ultra: &FiniteFilter,
    f: &Formula,
) -> Result<LosReport, ProductError> {
    if !ultra.is_ultra() {
        return Err(ProductError::NotUltra);
    }
    los_sides(family, assignments, ultra, f)
}

/// All ultrafilters on a finite index set: the principal ones.
pub fn enumerate_ultrafilters(index: &[String]) -> Result<Vec<FiniteFilter>, ProductError> {
    check_index(index)?;
    (0..index.len())
        .map(|i| FiniteFilter::principal(index.to_vec(), i))
        .collect()
}
