//! Randomized and exhaustive suites cross-checking the game solver, the
//! characteristic formulae and the definable-set closure against each other.
//!
//! Every suite reports the first counterexample with the structures, tuples,
//! rank and quantifiers needed to reproduce it from the command line.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;
use std::time::Instant;

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bitset::BitSet;
use crate::charform::{CharContext, CharOptions, CharTable};
use crate::formula::{Formula, QuantifierRef};
use crate::games::{bisim_in, bisim_rank_in, joint_relation, GameArena};
use crate::model::{are_isomorphic, permute_elements, Assignment, PointedStructure, Signature, Structure, StructureDoc};
use crate::products::{default_index, los_check, los_sides, reduced_product, FiniteFilter};
use crate::quantifiers::{PowersetOracle, QuantifierDef, WitnessFamily};
use crate::semantics::{var_tuples, DefinableClosure, ModelChecker};

/// Suite names accepted by [`run_suite`].
pub const SUITES: &[&str] = &[
    "quantifier-oracle",
    "monotone",
    "ef",
    "minimal-witness",
    "invariance",
    "finite-index",
    "hm",
    "figure1",
    "charform",
    "products",
];

/// Largest universe used for k = 2 instances, keeping `|A^2| + |B^2|` small
/// enough for the definable-set closure.
pub const K2_MAX_UNIVERSE: usize = 3;

/// Enumerate every union of closure classes up to this many classes;
/// above it, class formulae and their negations are used.
pub const MAX_UNION_CLASSES: usize = 12;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VerifyError {
    #[error("unknown suite `{0}`; expected one of: {list}", list = SUITES.join(", "))]
    UnknownSuite(String),
    #[error("invalid corpus: {0}")]
    InvalidCorpus(String),
}

/// Generation parameters for random instances.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub seed: u64,
    pub count: usize,
    pub max_size: usize,
    pub max_relations: usize,
    pub max_arity: usize,
    pub max_k: usize,
    pub rank: usize,
    /// Quantifier names (e.g. `dia[R]`); `None` draws from the built-in pool.
    pub quantifiers: Option<Vec<String>>,
}

impl Default for Corpus {
    fn default() -> Self {
        Corpus {
            seed: 1,
            count: 200,
            max_size: 4,
            max_relations: 2,
            max_arity: 2,
            max_k: 2,
            rank: 3,
            quantifiers: None,
        }
    }
}

impl Corpus {
    pub fn validate(&self) -> Result<(), VerifyError> {
        let bad = |m: &str| Err(VerifyError::InvalidCorpus(m.into()));
        if !(1..=4).contains(&self.max_size) {
            return bad("max size must be between 1 and 4");
        }
        if !(1..=2).contains(&self.max_relations) || !(1..=2).contains(&self.max_arity) {
            return bad("at most 2 relations of arity at most 2");
        }
        if !(1..=2).contains(&self.max_k) {
            return bad("k must be 1 or 2");
        }
        if self.rank > 3 {
            return bad("rank at most 3");
        }
        Ok(())
    }

    fn rng(&self, stream: u64, i: usize) -> ChaCha8Rng {
        let mix = (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03);
        ChaCha8Rng::seed_from_u64(self.seed ^ mix)
    }

    fn signatures(&self) -> Vec<Signature> {
        let mut out = Vec::new();
        if self.max_arity >= 2 {
            out.push(Signature::from_pairs([("R", 2)]).expect("valid"));
            if self.max_relations >= 2 {
                out.push(Signature::from_pairs([("R", 2), ("P", 1)]).expect("valid"));
            }
        } else {
            out.push(Signature::from_pairs([("P", 1)]).expect("valid"));
            if self.max_relations >= 2 {
                out.push(Signature::from_pairs([("P", 1), ("Q", 1)]).expect("valid"));
            }
        }
        out
    }
}

/// A structure with each possible tuple present independently with probability 1/2.
pub fn random_structure(sig: &Signature, n: usize, rng: &mut impl Rng) -> Structure {
    let universe: Vec<String> = (0..n).map(element_name).collect();
    let mut relations = IndexMap::new();
    for (r, arity) in sig.iter() {
        let space = crate::model::TupleSpace::new(n, arity);
        let tuples: BTreeSet<Vec<usize>> = (0..space.size())
            .filter(|_| rng.random_bool(0.5))
            .map(|c| space.decode(c))
            .collect();
        relations.insert(r.to_string(), tuples);
    }
    Structure::from_index_tuples(sig.clone(), universe, relations)
}

fn element_name(i: usize) -> String {
    ((b'a' + i as u8) as char).to_string()
}

fn fixed_structure(sig: &Signature, n: usize, full: bool, edges: &[(usize, usize)]) -> Structure {
    let mut relations = IndexMap::new();
    for (r, arity) in sig.iter() {
        let space = crate::model::TupleSpace::new(n, arity);
        let tuples: BTreeSet<Vec<usize>> = if full {
            (0..space.size()).map(|c| space.decode(c)).collect()
        } else if arity == 2 {
            edges.iter().map(|&(x, y)| vec![x, y]).collect()
        } else {
            BTreeSet::new()
        };
        relations.insert(r.to_string(), tuples);
    }
    Structure::from_index_tuples(sig.clone(), (0..n).map(element_name).collect(), relations)
}

/// Edge cases included in every corpus, before the random structures.
pub fn fixed_subcorpus(c: &Corpus) -> Vec<Structure> {
    let mut out = Vec::new();
    for sig in c.signatures() {
        out.push(fixed_structure(&sig, 1, false, &[]));
        out.push(fixed_structure(&sig, 1, true, &[]));
        if c.max_size >= 2 {
            out.push(fixed_structure(&sig, 2, false, &[]));
            out.push(fixed_structure(&sig, 2, true, &[]));
            out.push(fixed_structure(&sig, 2, false, &[(0, 1), (1, 0)]));
        }
        if c.max_size >= 3 {
            out.push(fixed_structure(&sig, 3, false, &[(0, 1), (1, 2), (2, 0)]));
            out.push(fixed_structure(&sig, 3, false, &[(0, 1), (1, 2)]));
        }
    }
    out
}

/// `count` structures: the fixed sub-corpus followed by random ones.
pub fn gen_structures(c: &Corpus) -> Vec<Structure> {
    let mut out = fixed_subcorpus(c);
    out.truncate(c.count);
    let sigs = c.signatures();
    let mut i = 0;
    while out.len() < c.count {
        let mut rng = c.rng(1, i);
        let sig = &sigs[rng.random_range(0..sigs.len())];
        let n = rng.random_range(1..=c.max_size);
        out.push(random_structure(sig, n, &mut rng));
        i += 1;
    }
    out
}

/// One comparison instance: two structures over one signature, `k`, and a registry.
#[derive(Clone, Debug)]
pub struct Instance {
    pub id: usize,
    pub left: Structure,
    pub right: Structure,
    pub k: usize,
    pub registry: Vec<QuantifierDef>,
}

impl Instance {
    pub fn quantifier_list(&self) -> String {
        self.registry.iter().map(QuantifierDef::name).collect::<Vec<_>>().join(",")
    }
}

fn pool(k: usize, sig: &Signature, rng: &mut impl Rng) -> Vec<QuantifierRef> {
    let binary = sig.arity("R") == Some(2);
    let n = rng.random_range(1..=2);
    let var = rng.random_range(1..=k);
    let mut out = vec![];
    if binary {
        out.push(QuantifierRef::Diamond { relation: "R".into() });
        out.push(QuantifierRef::DiamondAtLeast {
            n: 2,
            relation: "R".into(),
        });
    }
    out.push(QuantifierRef::Universal);
    out.push(QuantifierRef::Existential);
    if binary {
        out.push(QuantifierRef::Reach { relation: "R".into() });
        out.push(QuantifierRef::Cycle { relation: "R".into() });
    }
    out.push(QuantifierRef::CountAtLeast { n, var });
    out
}

/// Seeded pairs for the cross-checking suites.
pub fn gen_instances(c: &Corpus) -> Result<Vec<Instance>, VerifyError> {
    c.validate()?;
    let sigs = c.signatures();
    let fixed = fixed_subcorpus(c);
    let mut out = Vec::with_capacity(c.count);
    for i in 0..c.count {
        let mut rng = c.rng(2, i);
        let k = if c.max_k >= 2 && i % 4 == 3 { 2 } else { 1 };
        let max_n = if k == 2 { c.max_size.min(K2_MAX_UNIVERSE) } else { c.max_size };
        let (left, right) = if i < fixed.len() && fixed[i].len() <= max_n {
            let l = fixed[i].clone();
            let same: Vec<&Structure> = fixed
                .iter()
                .filter(|s| s.signature() == l.signature() && s.len() <= max_n)
                .collect();
            let r = same[(i * 7 + 3) % same.len()].clone();
            (l, r)
        } else {
            let sig = &sigs[rng.random_range(0..sigs.len())];
            let n = rng.random_range(1..=max_n);
            let l = random_structure(sig, n, &mut rng);
            let r = match i % 3 {
                0 => {
                    let mut perm: Vec<usize> = (0..n).collect();
                    perm.shuffle(&mut rng);
                    permute_elements(&l, &perm)
                }
                1 => random_structure(sig, n, &mut rng),
                _ => random_structure(sig, rng.random_range(1..=max_n), &mut rng),
            };
            (l, r)
        };
        let registry = match &c.quantifiers {
            Some(names) => names
                .iter()
                .filter_map(|q| QuantifierDef::parse(q, k).ok())
                .filter(|q| q.check_structure(&left).is_ok())
                .collect(),
            None => {
                let p = pool(k, left.signature(), &mut rng);
                let first = p[i % p.len()].clone();
                let mut reg = vec![QuantifierDef::new(first.clone(), k).expect("pool is valid")];
                if rng.random_bool(0.5) {
                    let second = p[rng.random_range(0..p.len())].clone();
                    if second != first {
                        reg.push(QuantifierDef::new(second, k).expect("pool is valid"));
                    }
                }
                reg
            }
        };
        out.push(Instance {
            id: i,
            left,
            right,
            k,
            registry,
        });
    }
    Ok(out)
}

/// The finite truncation of the two-tree example: root `a` with spokes
/// `a → a{m}_0 → … → a{m}_m` for `m = 0..=n`; the right structure adds a
/// spoke `a → b_0 → … → b_{n+1}`. Signature `{R:2}`, `k = 1`, both pointed at `a`.
pub fn gen_fig1_family(n: usize) -> (PointedStructure, PointedStructure) {
    assert!(n >= 1, "n must be positive");
    let build = |extra: bool| {
        let mut names = vec!["a".to_string()];
        let mut edges = vec![];
        let mut spoke = |names: &mut Vec<String>, prefix: String, len: usize| {
            let mut prev = 0;
            for j in 0..=len {
                names.push(format!("{prefix}_{j}"));
                let id = names.len() - 1;
                edges.push(vec![prev, id]);
                prev = id;
            }
        };
        for m in 0..=n {
            spoke(&mut names, format!("a{m}"), m);
        }
        if extra {
            spoke(&mut names, "b".into(), n + 1);
        }
        let mut rel = IndexMap::new();
        rel.insert("R".to_string(), edges.into_iter().collect());
        Structure::from_index_tuples(Signature::from_pairs([("R", 2)]).expect("valid"), names, rel)
    };
    let a = Assignment::new(vec![0]);
    (
        PointedStructure::new(build(false), a.clone()).expect("valid"),
        PointedStructure::new(build(true), a).expect("valid"),
    )
}

/// A self-contained failing case.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counterexample {
    pub message: String,
    pub structures: Vec<StructureDoc>,
    pub k: usize,
    pub alpha: Option<String>,
    pub beta: Option<String>,
    pub q: Option<usize>,
    pub quantifiers: String,
    /// Command line reproducing the failure, with the structures saved as
    /// `left.json` / `right.json`.
    pub reproduce: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub passed: bool,
    pub instances: usize,
    pub checks: usize,
    pub failures: usize,
    pub elapsed_ms: u128,
    pub counterexample: Option<Counterexample>,
    pub notes: Vec<String>,
}

/// Knobs for mutation testing.
#[derive(Clone, Copy, Debug, Default)]
pub struct SuiteOptions {
    pub char_options: CharOptions,
}

#[derive(Default)]
struct Outcome {
    checks: usize,
    failures: usize,
    first: Option<Counterexample>,
    notes: Vec<String>,
}

impl Outcome {
    fn fail(&mut self, cx: Counterexample) {
        self.failures += 1;
        if self.first.is_none() {
            self.first = Some(cx);
        }
    }

    fn merge(mut self, other: Outcome) -> Outcome {
        self.checks += other.checks;
        self.failures += other.failures;
        if self.first.is_none() {
            self.first = other.first;
        }
        self.notes.extend(other.notes);
        self
    }
}

fn combine(parts: Vec<Outcome>) -> Outcome {
    parts.into_iter().fold(Outcome::default(), Outcome::merge)
}

fn cx_pair(inst: &Instance, a: Option<usize>, b: Option<usize>, q: Option<usize>, message: String) -> Counterexample {
    let (ls, rs) = (inst.left.tuple_space(inst.k), inst.right.tuple_space(inst.k));
    let alpha = a.map(|a| inst.left.format_tuple(ls, a));
    let beta = b.map(|b| inst.right.format_tuple(rs, b));
    let mut cmd = format!(
        "kq bisim left.json right.json --k {} --quantifiers '{}'",
        inst.k,
        inst.quantifier_list()
    );
    if let Some(q) = q {
        cmd.push_str(&format!(" --rounds {q}"));
    }
    if let (Some(x), Some(y)) = (&alpha, &beta) {
        cmd.push_str(&format!(" --alpha {x} --beta {y}"));
        if let Some(q) = q {
            cmd.push_str(&format!(
                " && kq charform left.json --alpha {x} --rank {q} --universe left.json right.json --k {} --quantifiers '{}'",
                inst.k,
                inst.quantifier_list()
            ));
        }
    }
    Counterexample {
        message,
        structures: vec![inst.left.to_doc(), inst.right.to_doc()],
        k: inst.k,
        alpha,
        beta,
        q,
        quantifiers: inst.quantifier_list(),
        reproduce: cmd,
    }
}

pub fn run_suite(name: &str, c: &Corpus) -> Result<SuiteReport, VerifyError> {
    run_suite_with(name, c, SuiteOptions::default())
}

pub fn run_suite_with(name: &str, c: &Corpus, opts: SuiteOptions) -> Result<SuiteReport, VerifyError> {
    c.validate()?;
    let start = Instant::now();
    let (instances, outcome) = match name {
        "quantifier-oracle" => quantifier_oracle(c),
        "monotone" => monotone(c),
        "ef" => per_instance(c, |i| ef_instance(i, c.rank, opts))?,
        "minimal-witness" => minimal_witness(),
        "invariance" => per_instance(c, |i| invariance_instance(i, c.rank))?,
        "finite-index" => per_instance(c, finite_index_instance)?,
        "hm" => per_instance(c, hm_instance)?,
        "figure1" => figure1(opts),
        "charform" => per_instance(c, |i| charform_instance(i, c.rank, opts))?,
        "products" => products(c),
        other => return Err(VerifyError::UnknownSuite(other.to_string())),
    };
    Ok(SuiteReport {
        suite: name.to_string(),
        passed: outcome.failures == 0,
        instances,
        checks: outcome.checks,
        failures: outcome.failures,
        elapsed_ms: start.elapsed().as_millis(),
        counterexample: outcome.first,
        notes: outcome.notes,
    })
}

fn per_instance(c: &Corpus, f: impl Fn(&Instance) -> Outcome + Sync + Send) -> Result<(usize, Outcome), VerifyError> {
    let instances = gen_instances(c)?;
    let parts: Vec<Outcome> = instances.par_iter().map(f).collect();
    Ok((instances.len(), combine(parts)))
}

/// Every built-in quantifier family, instantiated for `k`.
pub fn builtin_quantifiers(k: usize) -> Vec<QuantifierDef> {
    let mut names = vec![
        "dia[R]".to_string(),
        "dia>=2[R]".into(),
        "dia>=3[R]".into(),
        "all".into(),
        "some".into(),
        "cyc[R]".into(),
        "inf[R]".into(),
        "reach[R]".into(),
        "ex>=1[x1]".into(),
        "ex>=2[x1]".into(),
    ];
    names.push(format!("ex>=3[x{k}]"));
    names
        .iter()
        .map(|n| QuantifierDef::parse(n, k).expect("built-in names parse"))
        .collect()
}

fn random_set(n: usize, p: f64, rng: &mut impl Rng) -> BitSet {
    BitSet::from_indices(n, (0..n).filter(|_| rng.random_bool(p)))
}

/// Random structure for single-structure probes (universe ≤ 4, k ≤ 2).
fn probe_structure(c: &Corpus, rng: &mut impl Rng) -> (Structure, usize) {
    let sigs = [
        Signature::from_pairs([("R", 2)]).expect("valid"),
        Signature::from_pairs([("R", 2), ("P", 1)]).expect("valid"),
    ];
    let sig = &sigs[rng.random_range(0..2)];
    let n = rng.random_range(1..=c.max_size.max(1));
    let k = rng.random_range(1..=c.max_k);
    (random_structure(sig, n, rng), k)
}

fn probe_cx(s: &Structure, k: usize, q: &QuantifierDef, alpha: usize, message: String) -> Counterexample {
    Counterexample {
        message,
        structures: vec![s.to_doc()],
        k,
        alpha: Some(s.format_tuple(s.tuple_space(k), alpha)),
        beta: None,
        q: None,
        quantifiers: q.name(),
        reproduce: format!(
            "kq check left.json --k {k} --alpha {} --formula '{} true'",
            s.format_tuple(s.tuple_space(k), alpha),
            q.name()
        ),
    }
}

/// Instances per quantifier in the single-structure probes.
fn probes(c: &Corpus) -> usize {
    c.count.max(500)
}

fn quantifier_oracle(c: &Corpus) -> (usize, Outcome) {
    let families = builtin_quantifiers(1).len();
    let jobs: Vec<(usize, usize)> = (0..families).flat_map(|f| (0..probes(c)).map(move |i| (f, i))).collect();
    let parts: Vec<Outcome> = jobs
        .par_iter()
        .map(|&(f, i)| {
            let mut rng = c.rng(10 + f as u64, i);
            let (s, k) = probe_structure(c, &mut rng);
            let q = builtin_quantifiers(k).swap_remove(f);
            let mut out = Outcome::default();
            if q.check_structure(&s).is_err() {
                return out;
            }
            let oracle = PowersetOracle(&q);
            let size = s.tuple_space(k).size();
            let alpha = rng.random_range(0..size);
            for p in [0.3, 0.5, 0.8, 1.0] {
                let e = random_set(size, p, &mut rng);
                out.checks += 1;
                let (d, o) = (q.admits_witness_within(&s, alpha, &e), oracle.admits_witness_within(&s, alpha, &e));
                if d != o {
                    out.fail(probe_cx(&s, k, &q, alpha, format!("admits within {:?}: direct {d}, oracle {o}", e)));
                }
            }
            if size <= 9 {
                out.checks += 1;
                let (d, o) = (q.minimal_witnesses(&s, alpha), oracle.minimal_witnesses(&s, alpha));
                if d != o {
                    out.fail(probe_cx(&s, k, &q, alpha, format!("minimal witnesses: direct {d:?}, oracle {o:?}")));
                }
            }
            out
        })
        .collect();
    (jobs.len(), combine(parts))
}

fn monotone(c: &Corpus) -> (usize, Outcome) {
    let families = builtin_quantifiers(1).len();
    let jobs: Vec<(usize, usize)> = (0..families).flat_map(|f| (0..probes(c)).map(move |i| (f, i))).collect();
    let parts: Vec<Outcome> = jobs
        .par_iter()
        .map(|&(f, i)| {
            let mut rng = c.rng(30 + f as u64, i);
            let (s, k) = probe_structure(c, &mut rng);
            let q = builtin_quantifiers(k).swap_remove(f);
            let mut out = Outcome::default();
            if q.check_structure(&s).is_err() {
                return out;
            }
            let size = s.tuple_space(k).size();
            let alpha = rng.random_range(0..size);
            let e = random_set(size, 0.5, &mut rng);
            let bigger = e.union(&random_set(size, 0.5, &mut rng));
            out.checks += 1;
            if q.admits_witness_within(&s, alpha, &e) && !q.admits_witness_within(&s, alpha, &bigger) {
                out.fail(probe_cx(&s, k, &q, alpha, format!("admits {e:?} but not its superset {bigger:?}")));
            }
            out
        })
        .collect();
    (jobs.len(), combine(parts))
}

fn ef_instance(inst: &Instance, rank: usize, opts: SuiteOptions) -> Outcome {
    let mut out = Outcome::default();
    let arena = match GameArena::new(&inst.left, &inst.right, inst.k, &inst.registry) {
        Ok(a) => a,
        Err(e) => {
            out.fail(cx_pair(inst, None, None, None, format!("arena: {e}")));
            return out;
        }
    };
    let rel = bisim_rank_in(&arena, rank);
    let closure = match DefinableClosure::new(&inst.left, &inst.right, inst.k, &inst.registry)
        .and_then(|mut c| c.extend_to(rank).map(|_| c))
    {
        Ok(c) => c,
        Err(e) => {
            out.fail(cx_pair(inst, None, None, None, format!("closure: {e}")));
            return out;
        }
    };
    let ctx = CharContext::new(vec![inst.left.clone(), inst.right.clone()], inst.registry.clone(), inst.k)
        .expect("same signature");
    let mut table = CharTable::with_options(&ctx, opts.char_options);
    let (nl, nr) = (rel.n_left(), rel.n_right());
    for q in 0..=rank {
        if let Err(e) = table.extend_to(q) {
            out.fail(cx_pair(inst, None, None, Some(q), format!("characteristic formulae: {e}")));
            return out;
        }
        for a in 0..nl {
            let chi_a = table.extension(0, a, q, 1).expect("extended");
            for b in 0..nr {
                out.checks += 1;
                let game = rel.holds(q, a, b);
                let chi = chi_a.contains(b);
                let chi_back = table.extension(1, b, q, 0).expect("extended").contains(a);
                let oracle = closure.equivalent(q, a, b);
                if !(game == chi && chi == chi_back && chi == oracle) {
                    out.fail(cx_pair(
                        inst,
                        Some(a),
                        Some(b),
                        Some(q),
                        format!("game {game}, chi {chi}, chi reversed {chi_back}, oracle {oracle}"),
                    ));
                }
            }
        }
    }
    out
}

fn invariance_instance(inst: &Instance, rank: usize) -> Outcome {
    let mut out = Outcome::default();
    let Ok(arena) = GameArena::new(&inst.left, &inst.right, inst.k, &inst.registry) else {
        out.fail(cx_pair(inst, None, None, None, "arena construction failed".into()));
        return out;
    };
    let rel = bisim_in(&arena);
    let pairs: Vec<(usize, usize)> = rel
        .pairs(rel.computed_levels() - 1)
        .into_iter()
        .collect();
    if pairs.is_empty() {
        return out;
    }
    let mut closure = match DefinableClosure::new(&inst.left, &inst.right, inst.k, &inst.registry) {
        Ok(c) => c,
        Err(e) => {
            out.fail(cx_pair(inst, None, None, None, format!("closure: {e}")));
            return out;
        }
    };
    if let Err(e) = closure.extend_to(rank) {
        out.fail(cx_pair(inst, None, None, Some(rank), format!("closure: {e}")));
        return out;
    }
    let classes = closure.class_formulas(rank);
    let formulas: Vec<Formula> = if classes.len() <= MAX_UNION_CLASSES {
        (0u64..1 << classes.len())
            .map(|mask| closure.union_formula(&classes, (0..classes.len()).filter(|i| mask & (1 << i) != 0)))
            .collect()
    } else {
        classes
            .iter()
            .flat_map(|f| [(**f).clone(), Formula::Not(f.clone())])
            .collect()
    };
    let mut ml = ModelChecker::new(&inst.left, inst.k);
    let mut mr = ModelChecker::new(&inst.right, inst.k);
    for f in &formulas {
        let el = ml.extension_trusted(f);
        let er = mr.extension_trusted(f);
        for &(a, b) in &pairs {
            out.checks += 1;
            if el.contains(a) != er.contains(b) {
                out.fail(cx_pair(
                    inst,
                    Some(a),
                    Some(b),
                    None,
                    format!("bisimilar pair disagrees on `{f}`"),
                ));
            }
        }
    }
    out
}

fn finite_index_instance(inst: &Instance) -> Outcome {
    let mut out = Outcome::default();
    let Ok(arena) = GameArena::new(&inst.left, &inst.right, inst.k, &inst.registry) else {
        out.fail(cx_pair(inst, None, None, None, "arena construction failed".into()));
        return out;
    };
    let points = arena.data(crate::games::Side::Left).len() + arena.data(crate::games::Side::Right).len();
    let joint = joint_relation(&arena, None);
    let Some(stable) = joint.stabilization_index() else {
        unreachable!("unbounded computation always stabilizes");
    };
    out.checks += 1;
    if stable > points {
        out.fail(cx_pair(inst, None, None, Some(stable), format!("stabilized at {stable} > {points}")));
    }
    for r in 0..=stable {
        out.checks += 1;
        let (now, next) = (joint.class_count(r), joint.class_count(r + 1));
        if now > next || next > points || joint.len(r + 1) > joint.len(r) {
            out.fail(cx_pair(
                inst,
                None,
                None,
                Some(r),
                format!("class counts {now} -> {next} (bound {points}); relation sizes {} -> {}", joint.len(r), joint.len(r + 1)),
            ));
        }
    }
    let gfp = bisim_in(&arena);
    let bounded = bisim_rank_in(&arena, points);
    let nl = gfp.n_left();
    let nr = gfp.n_right();
    for a in 0..nl {
        for b in 0..nr {
            out.checks += 1;
            let (x, y, z) = (gfp.bisimilar(a, b), bounded.holds(points, a, b), joint.bisimilar(a, nl + b));
            if x != y || x != z {
                out.fail(cx_pair(
                    inst,
                    Some(a),
                    Some(b),
                    Some(points),
                    format!("fixed point {x}, level {points} {y}, joint {z}"),
                ));
            }
        }
    }
    out
}

fn hm_instance(inst: &Instance) -> Outcome {
    let mut out = Outcome::default();
    let Ok(arena) = GameArena::new(&inst.left, &inst.right, inst.k, &inst.registry) else {
        out.fail(cx_pair(inst, None, None, None, "arena construction failed".into()));
        return out;
    };
    let rel = bisim_in(&arena);
    let mut closure = match DefinableClosure::new(&inst.left, &inst.right, inst.k, &inst.registry) {
        Ok(c) => c,
        Err(e) => {
            out.fail(cx_pair(inst, None, None, None, format!("closure: {e}")));
            return out;
        }
    };
    let stable = match closure.saturate() {
        Ok(s) => s,
        Err(e) => {
            out.fail(cx_pair(inst, None, None, None, format!("closure: {e}")));
            return out;
        }
    };
    for a in 0..rel.n_left() {
        for b in 0..rel.n_right() {
            out.checks += 1;
            let (eq, bis) = (closure.equivalent(stable, a, b), rel.bisimilar(a, b));
            if eq != bis {
                out.fail(cx_pair(inst, Some(a), Some(b), None, format!("equivalent {eq}, bisimilar {bis}")));
            }
        }
    }
    out
}

fn charform_instance(inst: &Instance, rank: usize, opts: SuiteOptions) -> Outcome {
    let mut out = Outcome::default();
    let ctx = CharContext::new(vec![inst.left.clone(), inst.right.clone()], inst.registry.clone(), inst.k)
        .expect("same signature");
    let mut table = CharTable::with_options(&ctx, opts.char_options);
    for q in 0..=rank {
        for (si, s) in [&inst.left, &inst.right].into_iter().enumerate() {
            let mut mc = ModelChecker::new(s, inst.k);
            for a in 0..s.tuple_space(inst.k).size() {
                out.checks += 1;
                let chi = match table.chi(si, a, q) {
                    Ok(f) => f,
                    Err(e) => {
                        out.fail(cx_pair(inst, None, None, Some(q), format!("characteristic formulae: {e}")));
                        return out;
                    }
                };
                let rank_ok = if q == 0 { chi.quantifier_rank() == 0 } else { chi.quantifier_rank() <= q };
                let holds = mc.extension(&chi).map(|e| e.contains(a)).unwrap_or(false);
                if !rank_ok || !holds {
                    let (x, y) = if si == 0 { (Some(a), None) } else { (None, Some(a)) };
                    out.fail(cx_pair(
                        inst,
                        x,
                        y,
                        Some(q),
                        format!("chi rank {} at level {q}, self-satisfied {holds}", chi.quantifier_rank()),
                    ));
                }
            }
        }
    }
    out
}

/// Last rank at which `holds` is true, scanning up from 0.
fn threshold_from(mut holds: impl FnMut(usize) -> bool, max: usize) -> Option<usize> {
    (0..=max).take_while(|&q| holds(q)).last()
}

/// Largest rank checked when locating the figure-1 thresholds.
pub const FIG1_MAX_RANK: usize = 8;

/// Thresholds `t(n)` reported by the game, by `χ`, and by the closure.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fig1Thresholds {
    pub n: usize,
    pub game: Option<usize>,
    pub chi: Option<usize>,
    pub oracle: Option<usize>,
    pub bisimilar: bool,
}

pub fn fig1_thresholds(n: usize, opts: CharOptions) -> Fig1Thresholds {
    let (l, r) = gen_fig1_family(n);
    let registry = vec![QuantifierDef::parse("dia[R]", 1).expect("valid")];
    let arena = GameArena::new(&l.structure, &r.structure, 1, &registry).expect("same signature");
    let (a, b) = (l.assignment.values[0], r.assignment.values[0]);
    let rel = bisim_rank_in(&arena, FIG1_MAX_RANK);
    let gfp = bisim_in(&arena);
    let ctx = CharContext::new(vec![l.structure.clone(), r.structure.clone()], registry.clone(), 1).expect("valid");
    let mut table = CharTable::with_options(&ctx, opts);
    let mut closure = DefinableClosure::new(&l.structure, &r.structure, 1, &registry).expect("valid");
    closure.extend_to(FIG1_MAX_RANK).expect("small closure");
    let game = threshold_from(|q| rel.holds(q, a, b), FIG1_MAX_RANK);
    let chi = threshold_from(|q| table.extension(0, a, q, 1).expect("small").contains(b), FIG1_MAX_RANK);
    let oracle = threshold_from(|q| closure.equivalent(q, a, b), FIG1_MAX_RANK);
    Fig1Thresholds {
        n,
        game,
        chi,
        oracle,
        bisimilar: gfp.bisimilar(a, b),
    }
}

fn figure1(opts: SuiteOptions) -> (usize, Outcome) {
    let mut out = Outcome::default();
    for n in 1..=3 {
        let t = fig1_thresholds(n, opts.char_options);
        out.checks += 1;
        out.notes.push(format!(
            "n={n}: game {:?}, chi {:?}, oracle {:?}, bisimilar {}",
            t.game, t.chi, t.oracle, t.bisimilar
        ));
        let agree = t.game == t.chi && t.chi == t.oracle && t.game.is_some_and(|g| g < FIG1_MAX_RANK);
        if !agree || t.bisimilar {
            let (l, r) = gen_fig1_family(n);
            out.fail(Counterexample {
                message: format!("thresholds disagree or pair bisimilar: {t:?}"),
                structures: vec![l.structure.to_doc(), r.structure.to_doc()],
                k: 1,
                alpha: Some("a".into()),
                beta: Some("a".into()),
                q: None,
                quantifiers: "dia[R]".into(),
                reproduce: "kq bisim left.json right.json --k 1 --quantifiers 'dia[R]' --alpha a --beta a".into(),
            });
        }
    }
    (3, out)
}

/// Brute-force all-witness game: Player 2 survives `r` more rounds from
/// `(α; β)`, evaluated straight from the game rules over every witness
/// (powerset enumeration through `is_witness`).
pub struct BruteForceGame {
    left: Structure,
    right: Structure,
    k: usize,
    /// `[quantifier][tuple]` all witnesses.
    lw: Vec<Vec<Vec<BitSet>>>,
    rw: Vec<Vec<Vec<BitSet>>>,
    memo: HashMap<(usize, usize, usize), bool>,
}

impl BruteForceGame {
    pub fn new(left: &Structure, right: &Structure, k: usize, registry: &[QuantifierDef]) -> Self {
        let all = |s: &Structure| -> Vec<Vec<Vec<BitSet>>> {
            let size = s.tuple_space(k).size();
            registry
                .iter()
                .map(|q| {
                    let oracle = PowersetOracle(q);
                    (0..size)
                        .map(|a| {
                            crate::quantifiers::powerset(size)
                                .filter(|w| oracle.is_witness(s, a, w))
                                .collect()
                        })
                        .collect()
                })
                .collect()
        };
        BruteForceGame {
            left: left.clone(),
            right: right.clone(),
            k,
            lw: all(left),
            rw: all(right),
            memo: HashMap::new(),
        }
    }

    fn atoms_agree(&self, a: usize, b: usize) -> bool {
        let (ls, rs) = (self.left.tuple_space(self.k), self.right.tuple_space(self.k));
        self.left.signature().iter().all(|(r, arity)| {
            var_tuples(self.k, arity).into_iter().all(|vars| {
                let ta: Vec<usize> = vars.iter().map(|&v| ls.component(a, v - 1)).collect();
                let tb: Vec<usize> = vars.iter().map(|&v| rs.component(b, v - 1)).collect();
                self.left.relation(r).expect("declared").contains(&ta)
                    == self.right.relation(r).expect("declared").contains(&tb)
            })
        })
    }

    pub fn survives(&mut self, r: usize, a: usize, b: usize) -> bool {
        if let Some(&v) = self.memo.get(&(r, a, b)) {
            return v;
        }
        let mut ok = self.atoms_agree(a, b);
        if ok && r > 0 {
            'quantifiers: for qi in 0..self.lw.len() {
                // Player 1 plays on the left.
                for s in self.lw[qi][a].clone() {
                    let ts = self.rw[qi][b].clone();
                    let answered = ts
                        .iter()
                        .any(|t| t.iter().all(|d| s.iter().any(|g| self.survives(r - 1, g, d))));
                    if !answered {
                        ok = false;
                        break 'quantifiers;
                    }
                }
                // Player 1 plays on the right.
                for s in self.rw[qi][b].clone() {
                    let ts = self.lw[qi][a].clone();
                    let answered = ts
                        .iter()
                        .any(|t| t.iter().all(|d| s.iter().any(|g| self.survives(r - 1, d, g))));
                    if !answered {
                        ok = false;
                        break 'quantifiers;
                    }
                }
            }
        }
        self.memo.insert((r, a, b), ok);
        ok
    }
}

/// All structures over `sig` on `n` elements, one per isomorphism class.
pub fn iso_classes(sig: &Signature, n: usize) -> Vec<Structure> {
    let slots: Vec<(String, Vec<usize>)> = sig
        .iter()
        .flat_map(|(r, arity)| {
            let sp = crate::model::TupleSpace::new(n, arity);
            (0..sp.size()).map(move |c| (r.to_string(), sp.decode(c)))
        })
        .collect();
    assert!(slots.len() <= 20, "too many tuples to enumerate");
    let mut reps: Vec<Structure> = Vec::new();
    let mut seen: std::collections::HashSet<Vec<(String, Vec<usize>)>> = std::collections::HashSet::new();
    let perms: Vec<Vec<usize>> = permutations(n);
    for mask in 0u64..(1 << slots.len()) {
        let chosen: Vec<&(String, Vec<usize>)> =
            slots.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, s)| s).collect();
        let canon = |perm: &Vec<usize>| {
            let mut v: Vec<(String, Vec<usize>)> =
                chosen.iter().map(|(r, t)| (r.clone(), t.iter().map(|&e| perm[e]).collect())).collect();
            v.sort();
            v
        };
        if perms.iter().any(|p| seen.contains(&canon(p))) {
            continue;
        }
        seen.insert(canon(&(0..n).collect()));
        let mut relations: IndexMap<String, BTreeSet<Vec<usize>>> =
            sig.iter().map(|(r, _)| (r.to_string(), BTreeSet::new())).collect();
        for (r, t) in chosen {
            relations.get_mut(r).expect("declared").insert(t.clone());
        }
        reps.push(Structure::from_index_tuples(sig.clone(), (0..n).map(element_name).collect(), relations));
    }
    reps
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    use itertools::Itertools;
    (0..n).permutations(n).collect()
}

/// Exhaustive comparison of the minimal-witness solver with the brute-force
/// all-witness game, for `q ≤ 2`.
fn minimal_witness() -> (usize, Outcome) {
    let r2 = Signature::from_pairs([("R", 2)]).expect("valid");
    let rp = Signature::from_pairs([("R", 2), ("P", 1)]).expect("valid");
    let mut jobs: Vec<(Structure, Structure, usize)> = Vec::new();
    let k1: Vec<Structure> = (1..=3).flat_map(|n| iso_classes(&r2, n)).collect();
    for a in &k1 {
        for b in &k1 {
            jobs.push((a.clone(), b.clone(), 1));
        }
    }
    let small: Vec<Structure> = (1..=2).flat_map(|n| iso_classes(&rp, n)).collect();
    for a in &small {
        for b in &small {
            jobs.push((a.clone(), b.clone(), 1));
            jobs.push((a.clone(), b.clone(), 2));
        }
    }
    let n = jobs.len();
    let parts: Vec<Outcome> = jobs
        .par_iter()
        .map(|(a, b, k)| {
            let mut out = Outcome::default();
            let registry = minimal_witness_registry(*k);
            let arena = GameArena::new(a, b, *k, &registry).expect("same signature");
            let rel = bisim_rank_in(&arena, 2);
            let mut brute = BruteForceGame::new(a, b, *k, &registry);
            for q in 0..=2 {
                for x in 0..rel.n_left() {
                    for y in 0..rel.n_right() {
                        out.checks += 1;
                        let (m, all) = (rel.holds(q, x, y), brute.survives(q, x, y));
                        if m != all {
                            let inst = Instance {
                                id: 0,
                                left: a.clone(),
                                right: b.clone(),
                                k: *k,
                                registry: registry.clone(),
                            };
                            out.fail(cx_pair(
                                &inst,
                                Some(x),
                                Some(y),
                                Some(q),
                                format!("minimal-witness solver {m}, all-witness game {all}"),
                            ));
                        }
                    }
                }
            }
            out
        })
        .collect();
    (n, combine(parts))
}

/// Every built-in family at once (excluding `inf`, which has no witnesses).
pub fn minimal_witness_registry(k: usize) -> Vec<QuantifierDef> {
    let mut names = vec!["dia[R]", "dia>=2[R]", "all", "some", "reach[R]", "cyc[R]", "ex>=1[x1]", "ex>=2[x1]"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    if k == 2 {
        names.push("ex>=2[x2]".into());
    }
    names
        .iter()
        .map(|n| QuantifierDef::parse(n, k).expect("valid"))
        .collect()
}

/// Product families: up to three structures with product universe ≤ 8.
pub fn gen_product_families(c: &Corpus) -> Vec<Vec<Structure>> {
    let sig = Signature::from_pairs([("R", 2), ("P", 1)]).expect("valid");
    let shapes: Vec<Vec<usize>> = vec![
        vec![1],
        vec![3],
        vec![8],
        vec![1, 4],
        vec![2, 2],
        vec![2, 3],
        vec![4, 2],
        vec![2, 2, 2],
        vec![1, 2, 4],
        vec![3, 1, 2],
        vec![1, 1, 1],
    ];
    let count = c.count.clamp(shapes.len(), 60);
    (0..count)
        .map(|i| {
            let mut rng = c.rng(50, i);
            shapes[i % shapes.len()]
                .iter()
                .map(|&n| random_structure(&sig, n, &mut rng))
                .collect()
        })
        .collect()
}

fn products_cx(family: &[Structure], message: String) -> Counterexample {
    Counterexample {
        message,
        structures: family.iter().map(Structure::to_doc).collect(),
        k: 1,
        alpha: None,
        beta: None,
        q: None,
        quantifiers: "dia[R],some".into(),
        reproduce: format!(
            "kq product {} --los --formula F --alphas T",
            (0..family.len()).map(|i| format!("s{i}.json")).collect::<Vec<_>>().join(" ")
        ),
    }
}

fn products(c: &Corpus) -> (usize, Outcome) {
    let families = gen_product_families(c);
    let registry = QuantifierDef::parse_list("dia[R], some", 1).expect("valid");
    let parts: Vec<Outcome> = families
        .par_iter()
        .enumerate()
        .map(|(fi, family)| {
            let mut out = Outcome::default();
            let mut rng = c.rng(60, fi);
            let m = family.len();
            let index = default_index(m);
            // Every filter on a finite index set is the up-set of a nonempty set.
            let filters: Vec<FiniteFilter> = (1u64..1 << m)
                .map(|g| FiniteFilter::generate(index.clone(), [BitSet::from_indices(m, (0..m).filter(|i| g & (1 << i) != 0))]))
                .collect::<Result<_, _>>()
                .expect("nonempty generators");
            for filter in &filters {
                for k in 1..=2 {
                    let alphas: Vec<Assignment> = family
                        .iter()
                        .map(|s| Assignment::new((0..k).map(|_| rng.random_range(0..s.len())).collect()))
                        .collect();
                    for (r, arity) in family[0].signature().iter() {
                        for vars in var_tuples(k, arity) {
                            out.checks += 1;
                            let atom = Formula::atom(r, vars);
                            match los_sides(family, &alphas, filter, &atom) {
                                Ok(rep) if rep.agree => {}
                                other => out.fail(products_cx(family, format!("atomic equivalence at {atom}: {other:?}"))),
                            }
                        }
                    }
                }
                // Tuples of product elements factor componentwise.
                let p = reduced_product(family, filter).expect("small");
                for _ in 0..4 {
                    let x: Vec<Vec<usize>> = (0..2).map(|_| family.iter().map(|s| rng.random_range(0..s.len())).collect()).collect();
                    let y: Vec<Vec<usize>> = (0..2).map(|_| family.iter().map(|s| rng.random_range(0..s.len())).collect()).collect();
                    let same_classes = (0..2).all(|j| p.class_of(&x[j]) == p.class_of(&y[j]));
                    let componentwise = (0..2).all(|j| {
                        filter.contains(&BitSet::from_indices(m, (0..m).filter(|&i| x[j][i] == y[j][i])))
                    });
                    out.checks += 1;
                    if same_classes != componentwise {
                        out.fail(products_cx(family, format!("tuple factorization {x:?} vs {y:?}")));
                    }
                }
            }
            for i0 in 0..m {
                let u = FiniteFilter::principal(index.clone(), i0).expect("valid");
                let p = reduced_product(family, &u).expect("small");
                out.checks += 1;
                match are_isomorphic(&p.structure, &family[i0]) {
                    Ok(Some(_)) => {}
                    other => out.fail(products_cx(family, format!("principal product at {i0} not isomorphic: {other:?}"))),
                }
                let Ok(mut closure) = DefinableClosure::new(&p.structure, &family[i0], 1, &registry) else {
                    out.fail(products_cx(family, "closure construction failed".into()));
                    continue;
                };
                if closure.extend_to(2).is_err() {
                    out.fail(products_cx(family, "closure size guard".into()));
                    continue;
                }
                let classes = closure.class_formulas(2);
                let formulas: Vec<Formula> = if classes.len() <= 10 {
                    (0u64..1 << classes.len())
                        .map(|mask| closure.union_formula(&classes, (0..classes.len()).filter(|i| mask & (1 << i) != 0)))
                        .collect()
                } else {
                    classes.iter().flat_map(|f| [(**f).clone(), Formula::Not(Arc::clone(f))]).collect()
                };
                let alphas: Vec<Assignment> =
                    family.iter().map(|s| Assignment::new(vec![rng.random_range(0..s.len())])).collect();
                for f in &formulas {
                    out.checks += 1;
                    match los_check(family, &alphas, &u, f) {
                        Ok(rep) if rep.agree => {}
                        other => out.fail(products_cx(family, format!("Łoś check failed for {f}: {other:?}"))),
                    }
                }
            }
            out
        })
        .collect();
    (families.len(), combine(parts))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn structures_are_deterministic_and_bounded() {
        let c = Corpus {
            count: 10,
            ..Corpus::default()
        };
        let a = gen_structures(&c);
        assert_eq!(a.len(), 10);
        assert_eq!(a, gen_structures(&c));
        assert!(a.iter().all(|s| (1..=4).contains(&s.len())));
        assert!(a[0].len() == 1 && a[0].relations().all(|(_, r)| r.is_empty()));
    }

    #[test]
    fn fig1_sizes() {
        let (l, r) = gen_fig1_family(1);
        assert_eq!(l.structure.len(), 4);
        assert_eq!(r.structure.len(), 7);
        for t in l.structure.relation("R").unwrap().tuples() {
            let names: Vec<&str> = t.iter().map(|&e| l.structure.name(e)).collect();
            let mapped: Vec<usize> = names.iter().map(|n| r.structure.element(n).unwrap()).collect();
            assert!(r.structure.relation("R").unwrap().contains(&mapped));
        }
    }

    #[test]
    fn iso_class_counts() {
        let r2 = Signature::from_pairs([("R", 2)]).unwrap();
        assert_eq!(iso_classes(&r2, 1).len(), 2);
        assert_eq!(iso_classes(&r2, 2).len(), 10);
        assert_eq!(iso_classes(&r2, 3).len(), 104);
    }

    #[test]
    fn unknown_suite() {
        assert!(matches!(run_suite("nope", &Corpus::default()), Err(VerifyError::UnknownSuite(_))));
    }

    #[test]
    fn instances_respect_bounds() {
        let c = Corpus {
            count: 40,
            ..Corpus::default()
        };
        for i in gen_instances(&c).unwrap() {
            assert_eq!(i.left.signature(), i.right.signature());
            assert!(i.left.len() <= 4 && i.right.len() <= 4);
            assert!(!i.registry.is_empty());
            if i.k == 2 {
                assert!(i.left.len() <= K2_MAX_UNIVERSE && i.right.len() <= K2_MAX_UNIVERSE);
            }
        }
    }
}
