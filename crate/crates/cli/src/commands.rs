use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use kq_core::charform::{distinguishing_formula, CharContext, CharTable};
use kq_core::games::{bisim_in, bisim_rank_in, extract_strategy, GameArena, Side};
use kq_core::products::{default_index, direct_product, los_check, los_sides, reduced_product, FiniteFilter};
use kq_core::semantics::trace;
use kq_core::verify::{run_suite, Corpus, SUITES};
use kq_core::{load_structure, parse_formula, print_formula, Assignment, ModelChecker, QuantifierDef, Structure};

use crate::default_registry;

#[derive(Parser, Debug)]
#[command(name = "kq", version, about = "Generalized quantifier logics over finite structures")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Evaluate a formula at a tuple; exit code 0 if true, 1 if false.
    Check(CheckArgs),
    /// Compute the bisimulation relation, or the verdict for one pair.
    Bisim(BisimArgs),
    /// Print the characteristic formula of a pointed structure.
    Charform(CharformArgs),
    /// Print a least-rank formula separating two pointed structures.
    Distinguish(DistinguishArgs),
    /// Build a reduced product and optionally compare both sides of Łoś's theorem.
    Product(ProductArgs),
    /// Run a cross-checking suite; exit code 0 on pass.
    Verify(VerifyArgs),
    /// Serve the session API (and a static directory, if given).
    Serve(ServeArgs),
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    pub structure: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    #[arg(long)]
    pub alpha: String,
    #[arg(long)]
    pub formula: String,
    /// Print the extension of every subformula.
    #[arg(long)]
    pub trace: bool,
}

#[derive(Args, Debug)]
pub struct BisimArgs {
    pub left: PathBuf,
    pub right: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// Round bound; unbounded when omitted.
    #[arg(long)]
    pub rounds: Option<usize>,
    /// Comma-separated quantifiers; defaults to dia[R] for each binary R.
    #[arg(long)]
    pub quantifiers: Option<String>,
    #[arg(long, requires = "beta")]
    pub alpha: Option<String>,
    #[arg(long, requires = "alpha")]
    pub beta: Option<String>,
    /// Dump Player 2's strategy as a JSON table.
    #[arg(long)]
    pub strategy: bool,
}

#[derive(Args, Debug)]
pub struct CharformArgs {
    pub structure: PathBuf,
    #[arg(long)]
    pub alpha: String,
    #[arg(long)]
    pub rank: usize,
    /// Structures the formula must discriminate against.
    #[arg(long, num_args = 1..)]
    pub universe: Vec<PathBuf>,
    #[arg(long)]
    pub quantifiers: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
}

#[derive(Args, Debug)]
pub struct DistinguishArgs {
    pub left: PathBuf,
    pub right: PathBuf,
    #[arg(long)]
    pub alpha: String,
    #[arg(long)]
    pub beta: String,
    #[arg(long)]
    pub quantifiers: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
}

#[derive(Args, Debug)]
pub struct ProductArgs {
    #[arg(required = true)]
    pub structures: Vec<PathBuf>,
    /// Filter document; the trivial filter when neither this nor --principal is given.
    #[arg(long, conflicts_with = "principal")]
    pub filter: Option<PathBuf>,
    /// Principal ultrafilter at this index position.
    #[arg(long)]
    pub principal: Option<usize>,
    #[arg(long, requires_all = ["formula", "alphas"])]
    pub los: bool,
    #[arg(long)]
    pub formula: Option<String>,
    /// One tuple per structure, separated by `;`.
    #[arg(long)]
    pub alphas: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Suite name, or `all`.
    pub suite: String,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub max_size: Option<usize>,
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long)]
    pub quantifiers: Option<String>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Directory for JSON session snapshots.
    #[arg(long)]
    pub state_dir: Option<PathBuf>,
    /// Static files served at `/`.
    #[arg(long = "static")]
    pub static_dir: Option<PathBuf>,
}

/// Text to print and the process exit code.
#[derive(Debug, PartialEq, Eq)]
pub struct Output {
    pub text: String,
    pub code: i32,
}

impl Output {
    fn ok(text: String) -> Self {
        Output { text, code: 0 }
    }
}

pub fn read_structure(path: &Path) -> Result<Structure> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    load_structure(&text).with_context(|| format!("loading {}", path.display()))
}

fn registry(s: &Structure, k: usize, list: Option<&str>) -> Result<Vec<QuantifierDef>> {
    let reg = match list {
        Some(l) => QuantifierDef::parse_list(l, k)?,
        None => default_registry(s, k)?,
    };
    for q in &reg {
        q.check_structure(s)?;
    }
    Ok(reg)
}

pub fn check(a: &CheckArgs) -> Result<Output> {
    let s = read_structure(&a.structure)?;
    let f = parse_formula(&a.formula, a.k, s.signature())?;
    let alpha = s.parse_tuple(&a.alpha, a.k)?;
    let mut mc = ModelChecker::new(&s, a.k);
    let ext = mc.extension(&f)?;
    let value = ext.contains(alpha.code(s.tuple_space(a.k)));
    let mut text = String::new();
    if a.trace {
        let space = s.tuple_space(a.k);
        for (sub, set) in trace(&s, a.k, &f)? {
            let names: Vec<String> = set.iter().map(|c| format!("({})", s.format_tuple(space, c))).collect();
            text.push_str(&format!("{sub}\t{{{}}}\n", names.join(", ")));
        }
    }
    text.push_str(if value { "true\n" } else { "false\n" });
    Ok(Output {
        text,
        code: if value { 0 } else { 1 },
    })
}

pub fn bisim(a: &BisimArgs) -> Result<Output> {
    let (l, r) = (read_structure(&a.left)?, read_structure(&a.right)?);
    let reg = registry(&l, a.k, a.quantifiers.as_deref())?;
    let arena = GameArena::new(&l, &r, a.k, &reg)?;
    let rel = match a.rounds {
        Some(q) => bisim_rank_in(&arena, q),
        None => bisim_in(&arena),
    };
    let top = match a.rounds {
        Some(q) => q,
        None => rel.computed_levels() - 1,
    };
    let (ls, rs) = (arena.space(Side::Left), arena.space(Side::Right));
    if a.strategy {
        let strategy = extract_strategy(&arena, &rel)?;
        return Ok(Output::ok(serde_json::to_string_pretty(&strategy.table(a.rounds))? + "\n"));
    }
    let mut text = String::new();
    if let (Some(x), Some(y)) = (&a.alpha, &a.beta) {
        let alpha = l.parse_tuple(x, a.k)?;
        let beta = r.parse_tuple(y, a.k)?;
        let p = arena.position(&alpha, &beta)?;
        let holds = rel.holds(top, p.left, p.right);
        let verdict = match (a.rounds, holds) {
            (Some(q), true) => format!("bisimilar up to {q} rounds"),
            (Some(q), false) => format!("not bisimilar in {q} rounds"),
            (None, true) => "bisimilar".to_string(),
            (None, false) => "not bisimilar".to_string(),
        };
        text.push_str(&verdict);
        text.push('\n');
        if let Some(f) = rel.failure_round(p.left, p.right) {
            text.push_str(&format!("failure round: {f}\n"));
        }
        return Ok(Output::ok(text));
    }
    for (x, y) in rel.pairs(top) {
        text.push_str(&format!("({}) ~ ({})\n", l.format_tuple(ls, x), r.format_tuple(rs, y)));
    }
    match rel.stabilization_index() {
        Some(i) => text.push_str(&format!("stabilized at round {i}\n")),
        None => text.push_str(&format!("computed {} rounds, not yet stable\n", top)),
    }
    Ok(Output::ok(text))
}

fn universe_with(first: Structure, paths: &[PathBuf]) -> Result<Vec<Structure>> {
    let mut universe = vec![first];
    for p in paths {
        let s = read_structure(p)?;
        if !universe.contains(&s) {
            universe.push(s);
        }
    }
    Ok(universe)
}

pub fn charform(a: &CharformArgs) -> Result<Output> {
    let s = read_structure(&a.structure)?;
    let reg = registry(&s, a.k, a.quantifiers.as_deref())?;
    let alpha = s.parse_tuple(&a.alpha, a.k)?;
    let universe = universe_with(s.clone(), &a.universe)?;
    let ctx = CharContext::new(universe, reg, a.k)?;
    let mut table = CharTable::new(&ctx);
    let chi = table.chi(0, alpha.code(s.tuple_space(a.k)), a.rank)?;
    Ok(Output::ok(print_formula(&chi) + "\n"))
}

pub fn distinguish(a: &DistinguishArgs) -> Result<Output> {
    let (l, r) = (read_structure(&a.left)?, read_structure(&a.right)?);
    let reg = registry(&l, a.k, a.quantifiers.as_deref())?;
    let alpha = l.parse_tuple(&a.alpha, a.k)?;
    let beta = r.parse_tuple(&a.beta, a.k)?;
    let ctx = CharContext::new(vec![l.clone(), r.clone()], reg, a.k)?;
    Ok(Output::ok(match distinguishing_formula(&ctx, &l, &alpha, &r, &beta)? {
        Some(f) => print_formula(&f) + "\n",
        None => "bisimilar\n".into(),
    }))
}

pub fn product(a: &ProductArgs) -> Result<Output> {
    let family: Vec<Structure> = a.structures.iter().map(|p| read_structure(p)).collect::<Result<_>>()?;
    let index = default_index(family.len());
    let filter = match (&a.filter, a.principal) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Some(FiniteFilter::from_json(&text)?)
        }
        (None, Some(i)) => Some(FiniteFilter::principal(index, i)?),
        (None, None) => None,
    };
    if !a.los {
        let p = match &filter {
            Some(f) => reduced_product(&family, f)?,
            None => direct_product(&family)?,
        };
        return Ok(Output::ok(serde_json::to_string_pretty(&p.structure.to_doc())? + "\n"));
    }
    let (Some(ftext), Some(atext)) = (&a.formula, &a.alphas) else {
        bail!("--los needs --formula and --alphas");
    };
    let f = parse_formula(ftext, a.k, family[0].signature())?;
    let parts: Vec<&str> = atext.split(';').collect();
    if parts.len() != family.len() {
        bail!("expected {} tuples in --alphas, got {}", family.len(), parts.len());
    }
    let alphas: Vec<Assignment> = family
        .iter()
        .zip(parts)
        .map(|(s, t)| s.parse_tuple(t, a.k))
        .collect::<Result<_, _>>()?;
    let filter = match filter {
        Some(f) => f,
        None => FiniteFilter::trivial(default_index(family.len()))?,
    };
    let report = if filter.is_ultra() {
        los_check(&family, &alphas, &filter, &f)?
    } else {
        los_sides(&family, &alphas, &filter, &f)?
    };
    let text = serde_json::to_string_pretty(&report)? + "\n";
    Ok(Output {
        text,
        code: if report.agree { 0 } else { 1 },
    })
}

pub fn verify(a: &VerifyArgs) -> Result<Output> {
    let mut c = Corpus::default();
    if let Some(s) = a.seed {
        c.seed = s;
    }
    if let Some(n) = a.count {
        c.count = n;
    }
    if let Some(n) = a.max_size {
        c.max_size = n;
    }
    if let Some(r) = a.rank {
        c.rank = r;
    }
    if let Some(q) = &a.quantifiers {
        c.quantifiers = Some(q.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect());
    }
    let suites: Vec<&str> = if a.suite == "all" { SUITES.to_vec() } else { vec![a.suite.as_str()] };
    let mut reports = Vec::new();
    for s in suites {
        reports.push(run_suite(s, &c)?);
    }
    let passed = reports.iter().all(|r| r.passed);
    let text = if a.json {
        let v = if reports.len() == 1 {
            serde_json::to_value(&reports[0])?
        } else {
            serde_json::to_value(&reports)?
        };
        serde_json::to_string_pretty(&v)? + "\n"
    } else {
        let mut t = String::new();
        for r in &reports {
            t.push_str(&format!(
                "{} {}: {} instances, {} checks, {} failures ({} ms)\n",
                if r.passed { "PASS" } else { "FAIL" },
                r.suite,
                r.instances,
                r.checks,
                r.failures,
                r.elapsed_ms
            ));
            for n in &r.notes {
                t.push_str(&format!("  {n}\n"));
            }
            if let Some(cx) = &r.counterexample {
                t.push_str(&format!("  counterexample: {}\n", cx.message));
                for (i, s) in cx.structures.iter().enumerate() {
                    t.push_str(&format!("  structure {i}: {}\n", serde_json::to_string(s)?));
                }
                t.push_str(&format!("  reproduce: {}\n", cx.reproduce));
            }
        }
        t
    };
    Ok(Output {
        text,
        code: if passed { 0 } else { 1 },
    })
}
