//! Formula syntax: the AST, a recursive-descent parser for the concrete
//! grammar, a canonical printer and quantifier rank.
//!
//! Concrete grammar:
//!
//! ```text
//! formula := "true" | "false" | atom | "!" formula
//!          | "(" formula op formula ")" | quant formula
//! op      := "&" | "|" | "->" | "<->"
//! atom    := IDENT "(" var ("," var)* ")"
//! var     := "x" DIGITS
//! quant   := "dia[" IDENT "]" | "dia>=" INT "[" IDENT "]" | "all" | "some"
//!          | "cyc[" IDENT "]" | "inf[" IDENT "]" | "reach[" IDENT "]"
//!          | "ex>=" INT "[" var "]"
//! ```
//!
//! `false`, `|`, `->` and `<->` are abbreviations and are desugared into
//! `true`, `!` and `&` while parsing. Subformulae are held in [`Arc`]s, so
//! large formulae (characteristic formulae in particular) are DAGs with
//! shared subterms; rank and evaluation memoize on node identity.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::model::Signature;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormulaError {
    #[error("syntax error at offset {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("relation `{relation}` has arity {expected}, but is applied to {found} variable(s)")]
    ArityMismatch {
        relation: String,
        expected: usize,
        found: usize,
    },
    #[error("quantifier signature not contained in the formula signature: `{quantifier}` needs `{relation}`")]
    QuantifierSignature { quantifier: String, relation: String },
    #[error("variable x{var} is out of range for k = {k}")]
    VariableOutOfRange { var: usize, k: usize },
    #[error("invalid quantifier `{quantifier}`: {reason}")]
    InvalidQuantifier { quantifier: String, reason: String },
    #[error("line {line}: {source}")]
    Line {
        line: usize,
        #[source]
        source: Box<FormulaError>,
    },
}

/// A quantifier symbol: a built-in family together with its parameters.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum QuantifierRef {
    /// `dia[R]`: some R-successor of x1.
    Diamond { relation: String },
    /// `dia>=n[R]`: at least n R-successors of x1.
    DiamondAtLeast { n: usize, relation: String },
    /// `all`: every tuple.
    Universal,
    /// `some`: some tuple.
    Existential,
    /// `cyc[R]`: the elements of a simple R-cycle of length at least 3.
    Cycle { relation: String },
    /// `inf[R]`: infinitely many reflexive R-successors (never on finite structures).
    Infinite { relation: String },
    /// `reach[R]`: some element R-reachable from x1 (paths of length 0 count).
    Reach { relation: String },
    /// `ex>=n[xi]`: at least n values for xi, the other variables fixed.
    CountAtLeast { n: usize, var: usize },
}

impl QuantifierRef {
    /// The relation named in the parameters, if any.
    pub fn relation(&self) -> Option<&str> {
        match self {
            QuantifierRef::Diamond { relation }
            | QuantifierRef::DiamondAtLeast { relation, .. }
            | QuantifierRef::Cycle { relation }
            | QuantifierRef::Infinite { relation }
            | QuantifierRef::Reach { relation } => Some(relation),
            QuantifierRef::Universal
            | QuantifierRef::Existential
            | QuantifierRef::CountAtLeast { .. } => None,
        }
    }

    /// The associated signature σ_Q.
    pub fn signature(&self) -> Signature {
        let mut sig = Signature::new();
        if let Some(r) = self.relation() {
            sig.insert(r, 2).expect("binary");
        }
        sig
    }

    pub fn family(&self) -> &'static str {
        match self {
            QuantifierRef::Diamond { .. } => "dia",
            QuantifierRef::DiamondAtLeast { .. } => "dia>=",
            QuantifierRef::Universal => "all",
            QuantifierRef::Existential => "some",
            QuantifierRef::Cycle { .. } => "cyc",
            QuantifierRef::Infinite { .. } => "inf",
            QuantifierRef::Reach { .. } => "reach",
            QuantifierRef::CountAtLeast { .. } => "ex>=",
        }
    }

    /// Checks the parameters against `k` and a signature (σ_Q ⊆ σ).
    pub fn validate(&self, k: usize, sig: &Signature) -> Result<(), FormulaError> {
        let invalid = |reason: String| FormulaError::InvalidQuantifier {
            quantifier: self.to_string(),
            reason,
        };
        match self {
            QuantifierRef::DiamondAtLeast { n: 0, .. } | QuantifierRef::CountAtLeast { n: 0, .. } => {
                return Err(invalid("threshold must be at least 1".into()))
            }
            QuantifierRef::CountAtLeast { var, .. } if *var == 0 || *var > k => {
                return Err(FormulaError::VariableOutOfRange { var: *var, k })
            }
            _ => {}
        }
        if let Some(r) = self.relation() {
            match sig.arity(r) {
                None => {
                    return Err(FormulaError::QuantifierSignature {
                        quantifier: self.to_string(),
                        relation: r.to_string(),
                    })
                }
                Some(2) => {}
                Some(a) => return Err(invalid(format!("relation `{r}` has arity {a}, expected 2"))),
            }
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, FormulaError> {
        let mut p = Parser::new(text);
        let q = p.quantifier_token()?.ok_or_else(|| p.error("expected a quantifier"))?;
        p.skip_ws();
        if !p.at_end() {
            return Err(p.error("trailing input after quantifier"));
        }
        Ok(q)
    }

    /// Parses a comma-separated quantifier list such as `dia[R],all,ex>=2[x1]`.
    pub fn parse_list(text: &str) -> Result<Vec<Self>, FormulaError> {
        text.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(Self::parse)
            .collect()
    }
}

impl serde::Serialize for QuantifierRef {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        ser.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for QuantifierRef {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let text = String::deserialize(de)?;
        QuantifierRef::parse(&text).map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for QuantifierRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QuantifierRef::Diamond { relation } => write!(f, "dia[{relation}]"),
            QuantifierRef::DiamondAtLeast { n, relation } => write!(f, "dia>={n}[{relation}]"),
            QuantifierRef::Universal => write!(f, "all"),
            QuantifierRef::Existential => write!(f, "some"),
            QuantifierRef::Cycle { relation } => write!(f, "cyc[{relation}]"),
            QuantifierRef::Infinite { relation } => write!(f, "inf[{relation}]"),
            QuantifierRef::Reach { relation } => write!(f, "reach[{relation}]"),
            QuantifierRef::CountAtLeast { n, var } => write!(f, "ex>={n}[x{var}]"),
        }
    }
}

/// Formula AST. Variables are 1-based (`x1` is `1`).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Formula {
    Top,
    Atom { relation: String, vars: Vec<usize> },
    Not(Arc<Formula>),
    And(Arc<Formula>, Arc<Formula>),
    Quant(QuantifierRef, Arc<Formula>),
}

impl Formula {
    pub fn atom(relation: impl Into<String>, vars: Vec<usize>) -> Formula {
        Formula::Atom {
            relation: relation.into(),
            vars,
        }
    }

    pub fn bottom() -> Formula {
        Formula::Not(Arc::new(Formula::Top))
    }

    pub fn not(f: impl Into<Arc<Formula>>) -> Formula {
        Formula::Not(f.into())
    }

    pub fn and(a: impl Into<Arc<Formula>>, b: impl Into<Arc<Formula>>) -> Formula {
        Formula::And(a.into(), b.into())
    }

    pub fn or(a: impl Into<Arc<Formula>>, b: impl Into<Arc<Formula>>) -> Formula {
        Formula::not(Formula::and(Formula::not(a), Formula::not(b)))
    }

    pub fn quant(q: QuantifierRef, f: impl Into<Arc<Formula>>) -> Formula {
        Formula::Quant(q, f.into())
    }

    /// Right-nested conjunction; the empty conjunction is `true`.
    pub fn conjunction(items: impl IntoIterator<Item = Arc<Formula>>) -> Formula {
        let items: Vec<_> = items.into_iter().collect();
        let mut iter = items.into_iter().rev();
        match iter.next() {
            None => Formula::Top,
            Some(last) => {
                let mut acc = last;
                for f in iter {
                    acc = Arc::new(Formula::And(f, acc));
                }
                Arc::unwrap_or_clone(acc)
            }
        }
    }

    /// Right-nested disjunction; the empty disjunction is `false`.
    pub fn disjunction(items: impl IntoIterator<Item = Arc<Formula>>) -> Formula {
        let items: Vec<_> = items.into_iter().collect();
        let mut iter = items.into_iter().rev();
        match iter.next() {
            None => Formula::bottom(),
            Some(last) => {
                let mut acc = last;
                for f in iter {
                    acc = Arc::new(Formula::or(f, acc));
                }
                Arc::unwrap_or_clone(acc)
            }
        }
    }

    /// Quantifier rank: nesting depth of quantifiers.
    pub fn quantifier_rank(&self) -> usize {
        fn go(f: &Formula, memo: &mut HashMap<*const Formula, usize>) -> usize {
            match f {
                Formula::Top | Formula::Atom { .. } => 0,
                Formula::Not(g) => child(g, memo),
                Formula::And(a, b) => child(a, memo).max(child(b, memo)),
                Formula::Quant(_, g) => 1 + child(g, memo),
            }
        }
        fn child(g: &Arc<Formula>, memo: &mut HashMap<*const Formula, usize>) -> usize {
            let key = Arc::as_ptr(g);
            if let Some(&r) = memo.get(&key) {
                return r;
            }
            let r = go(g, memo);
            memo.insert(key, r);
            r
        }
        go(self, &mut HashMap::new())
    }

    /// Number of distinct nodes (shared subterms counted once).
    pub fn dag_size(&self) -> usize {
        let mut seen = std::collections::HashSet::new();
        fn go(f: &Formula, seen: &mut std::collections::HashSet<*const Formula>) -> usize {
            let kids: Vec<&Arc<Formula>> = match f {
                Formula::Top | Formula::Atom { .. } => vec![],
                Formula::Not(g) | Formula::Quant(_, g) => vec![g],
                Formula::And(a, b) => vec![a, b],
            };
            1 + kids
                .into_iter()
                .map(|g| if seen.insert(Arc::as_ptr(g)) { go(g, seen) } else { 0 })
                .sum::<usize>()
        }
        go(self, &mut seen)
    }

    /// Checks relation names, arities, variable indices and quantifier
    /// signatures against `k` and `sig`.
    pub fn check(&self, k: usize, sig: &Signature) -> Result<(), FormulaError> {
        let mut seen = std::collections::HashSet::new();
        fn go(
            f: &Formula,
            k: usize,
            sig: &Signature,
            seen: &mut std::collections::HashSet<*const Formula>,
        ) -> Result<(), FormulaError> {
            match f {
                Formula::Top => Ok(()),
                Formula::Atom { relation, vars } => {
                    let arity = sig
                        .arity(relation)
                        .ok_or_else(|| FormulaError::UnknownRelation(relation.clone()))?;
                    if arity != vars.len() {
                        return Err(FormulaError::ArityMismatch {
                            relation: relation.clone(),
                            expected: arity,
                            found: vars.len(),
                        });
                    }
                    match vars.iter().find(|&&v| v == 0 || v > k) {
                        Some(&var) => Err(FormulaError::VariableOutOfRange { var, k }),
                        None => Ok(()),
                    }
                }
                Formula::Not(g) => visit(g, k, sig, seen),
                Formula::And(a, b) => {
                    visit(a, k, sig, seen)?;
                    visit(b, k, sig, seen)
                }
                Formula::Quant(q, g) => {
                    q.validate(k, sig)?;
                    visit(g, k, sig, seen)
                }
            }
        }
        fn visit(
            g: &Arc<Formula>,
            k: usize,
            sig: &Signature,
            seen: &mut std::collections::HashSet<*const Formula>,
        ) -> Result<(), FormulaError> {
            if seen.insert(Arc::as_ptr(g)) {
                go(g, k, sig, seen)
            } else {
                Ok(())
            }
        }
        go(self, k, sig, &mut seen)
    }

    /// All quantifier symbols occurring in the formula.
    pub fn quantifiers(&self) -> Vec<QuantifierRef> {
        let mut out = std::collections::BTreeSet::new();
        let mut seen = std::collections::HashSet::new();
        let mut stack: Vec<&Formula> = vec![self];
        while let Some(f) = stack.pop() {
            let kids: Vec<&Arc<Formula>> = match f {
                Formula::Top | Formula::Atom { .. } => vec![],
                Formula::Not(g) => vec![g],
                Formula::Quant(q, g) => {
                    out.insert(q.clone());
                    vec![g]
                }
                Formula::And(a, b) => vec![a, b],
            };
            for g in kids {
                if seen.insert(Arc::as_ptr(g)) {
                    stack.push(g);
                }
            }
        }
        out.into_iter().collect()
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Top => write!(f, "true"),
            Formula::Atom { relation, vars } => {
                write!(f, "{relation}(")?;
                for (i, v) in vars.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "x{v}")?;
                }
                write!(f, ")")
            }
            Formula::Not(g) => match g.as_ref() {
                Formula::Top => write!(f, "false"),
                Formula::And(a, b) => match (a.as_ref(), b.as_ref()) {
                    (Formula::Not(x), Formula::Not(y)) => write!(f, "({x} | {y})"),
                    _ => write!(f, "!{g}"),
                },
                _ => write!(f, "!{g}"),
            },
            Formula::And(a, b) => write!(f, "({a} & {b})"),
            Formula::Quant(q, g) => write!(f, "{q} {g}"),
        }
    }
}

pub fn print_formula(f: &Formula) -> String {
    f.to_string()
}

/// Parses and signature-checks a formula.
pub fn parse_formula(text: &str, k: usize, sig: &Signature) -> Result<Formula, FormulaError> {
    let f = parse_formula_unchecked(text)?;
    f.check(k, sig)?;
    Ok(f)
}

/// Parses without checking relation names or quantifier signatures.
pub fn parse_formula_unchecked(text: &str) -> Result<Formula, FormulaError> {
    let mut p = Parser::new(text);
    let f = p.formula()?;
    p.skip_ws();
    if !p.at_end() {
        return Err(p.error("trailing input"));
    }
    Ok(f)
}

/// One formula per non-empty line; `#` starts a comment.
pub fn parse_formula_file(text: &str, k: usize, sig: &Signature) -> Result<Vec<Formula>, FormulaError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        out.push(parse_formula(body, k, sig).map_err(|e| FormulaError::Line {
            line: i + 1,
            source: Box::new(e),
        })?);
    }
    Ok(out)
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Parser { src, pos: 0 }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn error(&self, message: impl Into<String>) -> FormulaError {
        FormulaError::Syntax {
            position: self.pos,
            message: message.into(),
        }
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    fn eat(&mut self, token: &str) -> bool {
        if self.rest().starts_with(token) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, token: &str) -> Result<(), FormulaError> {
        if self.eat(token) {
            Ok(())
        } else {
            Err(self.error(format!("expected `{token}`")))
        }
    }

    fn ident(&mut self) -> Option<&'a str> {
        let rest = self.rest();
        let mut chars = rest.char_indices();
        match chars.next() {
            Some((_, c)) if c.is_ascii_alphabetic() || c == '_' => {}
            _ => return None,
        }
        let end = chars
            .find(|(_, c)| !(c.is_ascii_alphanumeric() || *c == '_'))
            .map(|(i, _)| i)
            .unwrap_or(rest.len());
        self.pos += end;
        Some(&rest[..end])
    }

    fn number(&mut self) -> Result<usize, FormulaError> {
        let rest = self.rest();
        let end = rest.find(|c: char| !c.is_ascii_digit()).unwrap_or(rest.len());
        if end == 0 {
            return Err(self.error("expected a number"));
        }
        let n = rest[..end]
            .parse()
            .map_err(|_| self.error("number out of range"))?;
        self.pos += end;
        Ok(n)
    }

    fn var(&mut self) -> Result<usize, FormulaError> {
        self.expect("x")?;
        self.number()
    }

    fn bracketed_ident(&mut self) -> Result<String, FormulaError> {
        self.expect("[")?;
        let name = self.ident().ok_or_else(|| self.error("expected a relation name"))?;
        self.expect("]")?;
        Ok(name.to_string())
    }

    /// Tries to read a quantifier token at the current position. Leaves the
    /// position untouched when the input is not a quantifier.
    fn quantifier_token(&mut self) -> Result<Option<QuantifierRef>, FormulaError> {
        let start = self.pos;
        let Some(word) = self.ident() else {
            return Ok(None);
        };
        let q = match word {
            "all" => QuantifierRef::Universal,
            "some" => QuantifierRef::Existential,
            "dia" if self.rest().starts_with('[') => QuantifierRef::Diamond {
                relation: self.bracketed_ident()?,
            },
            "dia" if self.eat(">=") => {
                let n = self.number()?;
                QuantifierRef::DiamondAtLeast {
                    n,
                    relation: self.bracketed_ident()?,
                }
            }
            "cyc" if self.rest().starts_with('[') => QuantifierRef::Cycle {
                relation: self.bracketed_ident()?,
            },
            "inf" if self.rest().starts_with('[') => QuantifierRef::Infinite {
                relation: self.bracketed_ident()?,
            },
            "reach" if self.rest().starts_with('[') => QuantifierRef::Reach {
                relation: self.bracketed_ident()?,
            },
            "ex" if self.eat(">=") => {
                let n = self.number()?;
                self.expect("[")?;
                let var = self.var()?;
                self.expect("]")?;
                QuantifierRef::CountAtLeast { n, var }
            }
            _ => {
                self.pos = start;
                return Ok(None);
            }
        };
        Ok(Some(q))
    }

    fn formula(&mut self) -> Result<Formula, FormulaError> {
        self.skip_ws();
        if self.eat("(") {
            let left = self.formula()?;
            self.skip_ws();
            let op = if self.eat("<->") {
                "<->"
            } else if self.eat("->") {
                "->"
            } else if self.eat("&") {
                "&"
            } else if self.eat("|") {
                "|"
            } else {
                return Err(self.error("expected one of `&`, `|`, `->`, `<->`"));
            };
            let right = self.formula()?;
            self.skip_ws();
            self.expect(")")?;
            let (l, r) = (Arc::new(left), Arc::new(right));
            return Ok(match op {
                "&" => Formula::And(l, r),
                "|" => Formula::or(l, r),
                "->" => Formula::not(Formula::and(l, Formula::not(r))),
                _ => Formula::and(
                    Formula::not(Formula::and(l.clone(), Formula::not(r.clone()))),
                    Formula::not(Formula::and(r, Formula::not(l))),
                ),
            });
        }
        if self.eat("!") {
            return Ok(Formula::not(self.formula()?));
        }
        if let Some(q) = self.quantifier_token()? {
            return Ok(Formula::quant(q, self.formula()?));
        }
        let start = self.pos;
        let Some(word) = self.ident() else {
            return Err(self.error("expected a formula"));
        };
        match word {
            "true" => return Ok(Formula::Top),
            "false" => return Ok(Formula::bottom()),
            _ => {}
        }
        self.skip_ws();
        if !self.eat("(") {
            self.pos = start;
            return Err(self.error(format!("expected `(` after relation name `{word}`")));
        }
        let mut vars = Vec::new();
        loop {
            self.skip_ws();
            vars.push(self.var()?);
            self.skip_ws();
            if self.eat(")") {
                break;
            }
            self.expect(",")?;
        }
        Ok(Formula::atom(word, vars))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::k1;
    use proptest::prelude::*;

    fn p(x: usize) -> Formula {
        Formula::atom("P", vec![x])
    }

    #[test]
    fn parses_modal_formula() {
        let s = k1();
        let f = parse_formula("dia[R] P(x1)", 1, s.signature()).unwrap();
        assert_eq!(
            f,
            Formula::quant(QuantifierRef::Diamond { relation: "R".into() }, p(1))
        );
        assert_eq!(f.to_string(), "dia[R] P(x1)");
    }

    #[test]
    fn desugars_disjunction() {
        let s = k1();
        let f = parse_formula("(P(x1) | !P(x1))", 1, s.signature()).unwrap();
        let expected = Formula::not(Formula::and(Formula::not(p(1)), Formula::not(Formula::not(p(1)))));
        assert_eq!(f, expected);
    }

    #[test]
    fn desugars_implication_and_iff() {
        let s = k1();
        let imp = parse_formula("(P(x1) -> true)", 1, s.signature()).unwrap();
        assert_eq!(imp, Formula::not(Formula::and(p(1), Formula::not(Formula::Top))));
        let iff = parse_formula("(P(x1) <-> false)", 1, s.signature()).unwrap();
        assert_eq!(iff.quantifier_rank(), 0);
        assert!(matches!(iff, Formula::And(..)));
    }

    #[test]
    fn rejects_foreign_quantifier_signature() {
        let s = k1();
        let err = parse_formula("dia[S] true", 1, s.signature()).unwrap_err();
        assert!(err.to_string().contains("quantifier signature not contained"), "{err}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = k1();
        let sig = s.signature();
        assert!(matches!(parse_formula("Q(x1)", 1, sig), Err(FormulaError::UnknownRelation(_))));
        assert!(matches!(parse_formula("R(x1)", 1, sig), Err(FormulaError::ArityMismatch { .. })));
        assert!(matches!(
            parse_formula("P(x2)", 1, sig),
            Err(FormulaError::VariableOutOfRange { var: 2, k: 1 })
        ));
        assert!(matches!(
            parse_formula("ex>=1[x3] true", 2, sig),
            Err(FormulaError::VariableOutOfRange { .. })
        ));
        assert!(matches!(parse_formula("dia[P] true", 1, sig), Err(FormulaError::InvalidQuantifier { .. })));
        assert!(matches!(parse_formula("dia>=0[R] true", 1, sig), Err(FormulaError::InvalidQuantifier { .. })));
        assert!(matches!(parse_formula("(P(x1) P(x1))", 1, sig), Err(FormulaError::Syntax { .. })));
        assert!(matches!(parse_formula("P(x1) junk", 1, sig), Err(FormulaError::Syntax { .. })));
        assert!(matches!(parse_formula("", 1, sig), Err(FormulaError::Syntax { .. })));
    }

    #[test]
    fn prints_canonical_forms() {
        assert_eq!(Formula::Top.to_string(), "true");
        assert_eq!(Formula::bottom().to_string(), "false");
        let nested = Formula::and(p(1), Formula::and(Formula::Top, Formula::atom("R", vec![1, 1])));
        assert_eq!(nested.to_string(), "(P(x1) & (true & R(x1,x1)))");
    }

    #[test]
    fn all_quantifier_tokens_roundtrip() {
        let sig = crate::model::Signature::from_pairs([("R", 2), ("P", 1)]).unwrap();
        for text in [
            "dia[R] true",
            "dia>=2[R] P(x1)",
            "all P(x2)",
            "some !P(x1)",
            "cyc[R] true",
            "inf[R] true",
            "reach[R] P(x1)",
            "ex>=3[x2] R(x1,x2)",
        ] {
            let f = parse_formula(text, 2, &sig).unwrap();
            assert_eq!(f.to_string(), text);
        }
    }

    #[test]
    fn quantifier_ranks() {
        let sig = k1().signature().clone();
        let qr = |t: &str| parse_formula(t, 1, &sig).unwrap().quantifier_rank();
        assert_eq!(qr("true"), 0);
        assert_eq!(qr("dia[R] dia[R] P(x1)"), 2);
        assert_eq!(qr("(P(x1) & dia[R] true)"), 1);
        assert_eq!(qr("!dia[R] all true"), 2);
    }

    #[test]
    fn formula_file_with_comments() {
        let sig = k1().signature().clone();
        let fs = parse_formula_file("# header\nP(x1)\n\n dia[R] true # trailing\n", 1, &sig).unwrap();
        assert_eq!(fs.len(), 2);
        let err = parse_formula_file("P(x1)\nR(x1)\n", 1, &sig).unwrap_err();
        assert!(matches!(err, FormulaError::Line { line: 2, .. }));
    }

    #[test]
    fn empty_junctions() {
        assert_eq!(Formula::conjunction(vec![]), Formula::Top);
        assert_eq!(Formula::disjunction(vec![]), Formula::bottom());
        let c = Formula::conjunction(vec![Arc::new(p(1)), Arc::new(Formula::Top), Arc::new(p(1))]);
        assert_eq!(c.to_string(), "(P(x1) & (true & P(x1)))");
    }

    fn arb_quant() -> impl Strategy<Value = QuantifierRef> {
        prop_oneof![
            Just(QuantifierRef::Diamond { relation: "R".into() }),
            (1usize..4).prop_map(|n| QuantifierRef::DiamondAtLeast { n, relation: "R".into() }),
            Just(QuantifierRef::Universal),
            Just(QuantifierRef::Existential),
            Just(QuantifierRef::Cycle { relation: "R".into() }),
            Just(QuantifierRef::Infinite { relation: "R".into() }),
            Just(QuantifierRef::Reach { relation: "R".into() }),
            (1usize..4, 1usize..3).prop_map(|(n, var)| QuantifierRef::CountAtLeast { n, var }),
        ]
    }

    fn arb_formula() -> impl Strategy<Value = Formula> {
        let leaf = prop_oneof![
            Just(Formula::Top),
            (1usize..3).prop_map(|v| Formula::atom("P", vec![v])),
            (1usize..3, 1usize..3).prop_map(|(a, b)| Formula::atom("R", vec![a, b])),
        ];
        leaf.prop_recursive(5, 40, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(Formula::not),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::and(a, b)),
                (arb_quant(), inner).prop_map(|(q, f)| Formula::quant(q, f)),
            ]
        })
    }

    proptest! {
        #[test]
        fn parse_inverts_print(f in arb_formula()) {
            let sig = crate::model::Signature::from_pairs([("R", 2), ("P", 1)]).unwrap();
            let text = f.to_string();
            let back = parse_formula(&text, 2, &sig).unwrap();
            prop_assert_eq!(&back, &f);
            prop_assert_eq!(back.to_string(), text);
        }

        #[test]
        fn rank_rules(f in arb_formula(), g in arb_formula()) {
            prop_assert_eq!(Formula::not(f.clone()).quantifier_rank(), f.quantifier_rank());
            prop_assert_eq!(
                Formula::and(f.clone(), g.clone()).quantifier_rank(),
                f.quantifier_rank().max(g.quantifier_rank())
            );
        }
    }
}
