//! The q-round and unbounded bisimulation game for k-quantifier logics.
//!
//! A round at position `(α; β)`: Player 1 picks a side, a quantifier `Q` and
//! a witness `s ∈ Q` on that side; Player 2 answers with `t ∈ Q` on the other
//! side; Player 1 picks `δ ∈ t`; Player 2 answers with `γ ∈ s`. The play moves
//! to `(γ; δ)` (oriented left; right). Player 2 loses at any atom-inequivalent
//! position; either player loses when stuck.
//!
//! The solver restricts both players to minimal witnesses: shrinking `s`
//! only removes Player 2's options, and shrinking `t` only removes Player 1's.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bitset::BitSet;
use crate::formula::QuantifierRef;
use crate::model::{Assignment, ModelError, Structure, TupleSpace};
use crate::quantifiers::{PowersetOracle, QuantifierDef, QuantifierError, WitnessFamily};
use crate::semantics::var_tuples;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GameError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Quantifier(#[from] QuantifierError),
    #[error("no winning strategy for Player 2 at ({left}; {right})")]
    NoWinningStrategy { left: String, right: String },
    #[error("relation was computed for a different arena")]
    ArenaMismatch,
}

/// Why a Player-1 move was refused.
#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "code", content = "detail", rename_all = "snake_case")]
pub enum MoveError {
    #[error("game over")]
    GameOver,
    #[error("wrong turn: {0}")]
    WrongTurn(String),
    #[error("unknown quantifier `{0}`")]
    UnknownQuantifier(String),
    #[error("not a witness")]
    NotAWitness,
    #[error("tuple not in witness")]
    NotInWitness,
    #[error("malformed move: {0}")]
    Malformed(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Left => "left",
            Side::Right => "right",
        })
    }
}

/// A position: a tuple of the left structure against a tuple of the right one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GamePosition {
    pub left: usize,
    pub right: usize,
}

/// Per-side game data: atomic type ids and, per quantifier, the witness
/// lists available at each tuple.
#[derive(Clone, Debug)]
pub struct SideData {
    pub atoms: Vec<usize>,
    pub witnesses: Vec<Vec<Vec<BitSet>>>,
}

impl SideData {
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }
}

/// Which witnesses the players may use.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WitnessMode {
    Minimal,
    /// Every witness, found by powerset enumeration over `is_witness`.
    All,
}

/// Two structures, a registry and the precomputed witness lists.
#[derive(Clone, Debug)]
pub struct GameArena {
    left: Structure,
    right: Structure,
    k: usize,
    registry: Vec<QuantifierDef>,
    left_data: SideData,
    right_data: SideData,
}

impl GameArena {
    pub fn new(left: &Structure, right: &Structure, k: usize, registry: &[QuantifierDef]) -> Result<Self, GameError> {
        Self::with_mode(left, right, k, registry, WitnessMode::Minimal)
    }

    pub fn with_mode(
        left: &Structure,
        right: &Structure,
        k: usize,
        registry: &[QuantifierDef],
        mode: WitnessMode,
    ) -> Result<Self, GameError> {
        if left.signature() != right.signature() {
            return Err(ModelError::SignatureMismatch(format!("{} vs {}", left.signature(), right.signature())).into());
        }
        if k == 0 {
            return Err(ModelError::BadAssignment("k must be at least 1".into()).into());
        }
        for q in registry {
            q.check_structure(left)?;
            if q.k() != k {
                return Err(ModelError::BadAssignment(format!("quantifier {} built for k = {}", q.name(), q.k())).into());
            }
        }
        let mut types = HashMap::new();
        let left_data = side_data(left, k, registry, mode, &mut types)?;
        let right_data = side_data(right, k, registry, mode, &mut types)?;
        Ok(GameArena {
            left: left.clone(),
            right: right.clone(),
            k,
            registry: registry.to_vec(),
            left_data,
            right_data,
        })
    }

    pub fn left(&self) -> &Structure {
        &self.left
    }

    pub fn right(&self) -> &Structure {
        &self.right
    }

    pub fn structure(&self, side: Side) -> &Structure {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn registry(&self) -> &[QuantifierDef] {
        &self.registry
    }

    pub fn space(&self, side: Side) -> TupleSpace {
        self.structure(side).tuple_space(self.k)
    }

    pub fn data(&self, side: Side) -> &SideData {
        match side {
            Side::Left => &self.left_data,
            Side::Right => &self.right_data,
        }
    }

    pub fn quantifier_index(&self, q: &QuantifierRef) -> Option<usize> {
        self.registry.iter().position(|d| d.kind() == q)
    }

    /// Minimal witnesses of quantifier `qi` at `tuple` on `side`.
    pub fn witnesses(&self, side: Side, qi: usize, tuple: usize) -> &[BitSet] {
        &self.data(side).witnesses[qi][tuple]
    }

    pub fn atom_equiv(&self, p: GamePosition) -> bool {
        self.left_data.atoms[p.left] == self.right_data.atoms[p.right]
    }

    /// Both sides merged into one point set `A^k ⊔ B^k` (left tuples first),
    /// for counting equivalence classes.
    pub fn joint(&self) -> SideData {
        let nl = self.left_data.len();
        let n = nl + self.right_data.len();
        let mut atoms = self.left_data.atoms.clone();
        atoms.extend(&self.right_data.atoms);
        let witnesses = (0..self.registry.len())
            .map(|qi| {
                let mut per = Vec::with_capacity(n);
                for w in &self.left_data.witnesses[qi] {
                    per.push(w.iter().map(|s| BitSet::from_indices(n, s.iter())).collect());
                }
                for w in &self.right_data.witnesses[qi] {
                    per.push(w.iter().map(|s| BitSet::from_indices(n, s.iter().map(|x| x + nl))).collect());
                }
                per
            })
            .collect();
        SideData { atoms, witnesses }
    }

    pub fn position(&self, alpha: &Assignment, beta: &Assignment) -> Result<GamePosition, GameError> {
        alpha.validate(&self.left, self.k)?;
        beta.validate(&self.right, self.k)?;
        Ok(GamePosition {
            left: alpha.code(self.space(Side::Left)),
            right: beta.code(self.space(Side::Right)),
        })
    }
}

fn side_data(
    s: &Structure,
    k: usize,
    registry: &[QuantifierDef],
    mode: WitnessMode,
    types: &mut HashMap<Vec<bool>, usize>,
) -> Result<SideData, GameError> {
    let sp = s.tuple_space(k);
    let atoms_list: Vec<(&str, Vec<usize>)> = s
        .signature()
        .iter()
        .flat_map(|(r, ar)| var_tuples(k, ar).into_iter().map(move |v| (r, v)))
        .collect();
    let mut atoms = Vec::with_capacity(sp.size());
    for code in 0..sp.size() {
        let ty: Vec<bool> = atoms_list
            .iter()
            .map(|(r, vars)| {
                let t: Vec<usize> = vars.iter().map(|&v| sp.component(code, v - 1)).collect();
                s.relation(r).expect("declared").contains(&t)
            })
            .collect();
        let next = types.len();
        atoms.push(*types.entry(ty).or_insert(next));
    }
    let mut witnesses = Vec::with_capacity(registry.len());
    for q in registry {
        let per: Vec<Vec<BitSet>> = match mode {
            WitnessMode::Minimal => (0..sp.size()).map(|a| q.minimal_witnesses(s, a)).collect(),
            WitnessMode::All => {
                let oracle = PowersetOracle(q);
                oracle.guard(s)?;
                (0..sp.size())
                    .map(|a| {
                        crate::quantifiers::powerset(sp.size())
                            .filter(|w| oracle.is_witness(s, a, w))
                            .collect()
                    })
                    .collect()
            }
        };
        witnesses.push(per);
    }
    Ok(SideData { atoms, witnesses })
}

/// How long Player 2 survives from a position with optimal play on both sides.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Depth {
    /// Atom equivalence already fails.
    Lost,
    /// In `~^r` but not in `~^{r+1}` (or `r` is the last computed level).
    Rounds(usize),
    /// In the greatest fixed point.
    Forever,
}

/// The stratified relations `~^0 ⊇ ~^1 ⊇ …` between left and right tuples.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BisimRelation {
    n_left: usize,
    n_right: usize,
    levels: Vec<Vec<BitSet>>,
    stable_from: Option<usize>,
}

impl BisimRelation {
    /// Computes levels `0..=q`, stopping early once stable.
    pub fn compute(left: &SideData, right: &SideData, q: Option<usize>) -> Self {
        let (nl, nr) = (left.len(), right.len());
        let level0: Vec<BitSet> = (0..nl)
            .map(|a| BitSet::from_indices(nr, (0..nr).filter(|&b| left.atoms[a] == right.atoms[b])))
            .collect();
        let mut rel = BisimRelation {
            n_left: nl,
            n_right: nr,
            levels: vec![level0],
            stable_from: None,
        };
        while q.is_none_or(|q| rel.levels.len() <= q) {
            let cur = rel.levels.last().expect("level 0");
            let next = refine(left, right, cur);
            if &next == cur {
                rel.stable_from = Some(rel.levels.len() - 1);
                break;
            }
            rel.levels.push(next);
        }
        rel
    }

    pub fn n_left(&self) -> usize {
        self.n_left
    }

    pub fn n_right(&self) -> usize {
        self.n_right
    }

    /// Number of levels actually stored.
    pub fn computed_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn is_stabilized(&self) -> bool {
        self.stable_from.is_some()
    }

    /// Least `r` with `~^{r+1} = ~^r`, when reached.
    pub fn stabilization_index(&self) -> Option<usize> {
        self.stable_from
    }

    fn level(&self, r: usize) -> &[BitSet] {
        assert!(
            r < self.levels.len() || self.stable_from.is_some(),
            "level {r} not computed"
        );
        &self.levels[r.min(self.levels.len() - 1)]
    }

    /// `(a, b) ∈ ~^r`.
    pub fn holds(&self, r: usize, a: usize, b: usize) -> bool {
        self.level(r)[a].contains(b)
    }

    /// `(a, b) ∈ ~`, the greatest fixed point. Requires a stabilized relation.
    pub fn bisimilar(&self, a: usize, b: usize) -> bool {
        assert!(self.is_stabilized(), "relation not stabilized");
        self.levels.last().expect("level 0")[a].contains(b)
    }

    /// Row `a` of `~^r`.
    pub fn row(&self, r: usize, a: usize) -> &BitSet {
        &self.level(r)[a]
    }

    /// All pairs of `~^r`.
    pub fn pairs(&self, r: usize) -> Vec<(usize, usize)> {
        self.level(r)
            .iter()
            .enumerate()
            .flat_map(|(a, row)| row.iter().map(move |b| (a, b)))
            .collect()
    }

    pub fn len(&self, r: usize) -> usize {
        self.level(r).iter().map(BitSet::len).sum()
    }

    pub fn depth(&self, a: usize, b: usize) -> Depth {
        let last = self.levels.len() - 1;
        if !self.levels[0][a].contains(b) {
            return Depth::Lost;
        }
        if self.levels[last][a].contains(b) {
            return if self.is_stabilized() {
                Depth::Forever
            } else {
                Depth::Rounds(last)
            };
        }
        let r = (0..last).rev().find(|&r| self.levels[r][a].contains(b)).expect("level 0 holds");
        Depth::Rounds(r)
    }

    /// The least `r` with `(a, b) ∉ ~^r`, if any within the computed levels.
    pub fn failure_round(&self, a: usize, b: usize) -> Option<usize> {
        match self.depth(a, b) {
            Depth::Lost => Some(0),
            Depth::Rounds(r) if r + 1 < self.levels.len() => Some(r + 1),
            _ => None,
        }
    }

    /// Number of distinct rows at level `r`. For a relation on one point set
    /// that is an equivalence (as for [`joint_relation`]), this is the number
    /// of equivalence classes.
    pub fn class_count(&self, r: usize) -> usize {
        let mut rows: Vec<&BitSet> = self.level(r).iter().collect();
        rows.sort();
        rows.dedup();
        rows.len()
    }
}

/// One refinement step: keeps the pairs from which Player 2 survives one more round.
fn refine(left: &SideData, right: &SideData, cur: &[BitSet]) -> Vec<BitSet> {
    let nr = right.len();
    let nl = left.len();
    let mut cols = vec![BitSet::new(nl); nr];
    for (a, row) in cur.iter().enumerate() {
        for b in row.iter() {
            cols[b].insert(a);
        }
    }
    // D(s) = tuples on the other side related to some member of s.
    let reach = |rows: &[BitSet], cap: usize, s: &BitSet| {
        let mut d = BitSet::new(cap);
        for g in s.iter() {
            d.union_with(&rows[g]);
        }
        d
    };
    let qn = left.witnesses.len();
    let left_d: Vec<Vec<Vec<BitSet>>> = (0..qn)
        .map(|qi| {
            (0..nl)
                .map(|a| left.witnesses[qi][a].iter().map(|s| reach(cur, nr, s)).collect())
                .collect()
        })
        .collect();
    let right_d: Vec<Vec<Vec<BitSet>>> = (0..qn)
        .map(|qi| {
            (0..nr)
                .map(|b| right.witnesses[qi][b].iter().map(|s| reach(&cols, nl, s)).collect())
                .collect()
        })
        .collect();
    cur.iter()
        .enumerate()
        .map(|(a, row)| {
            BitSet::from_indices(
                nr,
                row.iter().filter(|&b| {
                    (0..qn).all(|qi| {
                        left_d[qi][a]
                            .iter()
                            .all(|d| right.witnesses[qi][b].iter().any(|t| t.is_subset(d)))
                            && right_d[qi][b]
                                .iter()
                                .all(|d| left.witnesses[qi][a].iter().any(|t| t.is_subset(d)))
                    })
                }),
            )
        })
        .collect()
}

/// `~^0, …, ~^q` between the arena's structures.
pub fn bisim_rank_in(arena: &GameArena, q: usize) -> BisimRelation {
    BisimRelation::compute(arena.data(Side::Left), arena.data(Side::Right), Some(q))
}

/// The greatest fixed point between the arena's structures.
pub fn bisim_in(arena: &GameArena) -> BisimRelation {
    BisimRelation::compute(arena.data(Side::Left), arena.data(Side::Right), None)
}

/// The relation on `A^k ⊔ B^k` with itself, to `q` rounds or to the fixed point.
pub fn joint_relation(arena: &GameArena, q: Option<usize>) -> BisimRelation {
    let j = arena.joint();
    BisimRelation::compute(&j, &j, q)
}

pub fn bisim_rank(
    a: &Structure,
    b: &Structure,
    k: usize,
    q: usize,
    registry: &[QuantifierDef],
) -> Result<BisimRelation, GameError> {
    Ok(bisim_rank_in(&GameArena::new(a, b, k, registry)?, q))
}

pub fn bisim(a: &Structure, b: &Structure, k: usize, registry: &[QuantifierDef]) -> Result<BisimRelation, GameError> {
    Ok(bisim_in(&GameArena::new(a, b, k, registry)?))
}

/// Atom equivalence of two pointed structures.
pub fn atom_equiv(a: &Structure, alpha: &Assignment, b: &Structure, beta: &Assignment) -> Result<bool, GameError> {
    if alpha.k() != beta.k() {
        return Err(ModelError::BadAssignment(format!("k differs: {} vs {}", alpha.k(), beta.k())).into());
    }
    let arena = GameArena::new(a, b, alpha.k(), &[])?;
    Ok(arena.atom_equiv(arena.position(alpha, beta)?))
}

/// The relation level a response must land in, for a round played with
/// `rounds_left` rounds remaining (`None` for the unbounded game).
fn target_level(rel: &BisimRelation, rounds_left: Option<usize>) -> usize {
    match rounds_left {
        Some(m) => m.saturating_sub(1),
        None => rel.computed_levels() - 1,
    }
}

/// Player 2's winning responses, read off the relation.
#[derive(Clone, Copy)]
pub struct Strategy<'a> {
    arena: &'a GameArena,
    rel: &'a BisimRelation,
}

/// One row of the strategy table.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyEntry {
    pub left: String,
    pub right: String,
    pub side: Side,
    pub quantifier: String,
    pub witness: Vec<String>,
    pub response: Vec<String>,
    /// Pairs (Player-1 challenge, Player-2 answer).
    pub challenges: Vec<(String, String)>,
}

pub fn extract_strategy<'a>(arena: &'a GameArena, rel: &'a BisimRelation) -> Result<Strategy<'a>, GameError> {
    if rel.n_left() != arena.data(Side::Left).len() || rel.n_right() != arena.data(Side::Right).len() {
        return Err(GameError::ArenaMismatch);
    }
    Ok(Strategy { arena, rel })
}

impl<'a> Strategy<'a> {
    fn no_strategy(&self, p: GamePosition) -> GameError {
        GameError::NoWinningStrategy {
            left: self.arena.left.format_tuple(self.arena.space(Side::Left), p.left),
            right: self.arena.right.format_tuple(self.arena.space(Side::Right), p.right),
        }
    }

    fn related(&self, level: usize, side: Side, mine: usize, theirs: usize) -> bool {
        match side {
            Side::Left => self.rel.holds(level, mine, theirs),
            Side::Right => self.rel.holds(level, theirs, mine),
        }
    }

    fn in_region(&self, p: GamePosition, rounds_left: Option<usize>) -> bool {
        match rounds_left {
            Some(m) => self.rel.holds(m, p.left, p.right),
            None => self.rel.is_stabilized() && self.rel.bisimilar(p.left, p.right),
        }
    }

    /// Player 2's witness after Player 1 played `witness` for quantifier `qi`
    /// on `side`: the first minimal witness on the other side all of whose
    /// tuples can be matched inside `witness`.
    pub fn respond_witness(
        &self,
        p: GamePosition,
        rounds_left: Option<usize>,
        side: Side,
        qi: usize,
        witness: &BitSet,
    ) -> Result<BitSet, GameError> {
        if !self.in_region(p, rounds_left) || rounds_left == Some(0) {
            return Err(self.no_strategy(p));
        }
        let level = target_level(self.rel, rounds_left);
        let other = side.other();
        let there = match other {
            Side::Left => p.left,
            Side::Right => p.right,
        };
        let cap = self.arena.space(other).size();
        let d = BitSet::from_indices(
            cap,
            (0..cap).filter(|&delta| witness.iter().any(|g| self.related(level, side, g, delta))),
        );
        self.arena
            .witnesses(other, qi, there)
            .iter()
            .find(|t| t.is_subset(&d))
            .cloned()
            .ok_or_else(|| self.no_strategy(p))
    }

    /// Player 2's tuple in `witness` (on `side`) answering challenge `delta`.
    pub fn respond_challenge(
        &self,
        p: GamePosition,
        rounds_left: Option<usize>,
        side: Side,
        witness: &BitSet,
        delta: usize,
    ) -> Result<usize, GameError> {
        let level = target_level(self.rel, rounds_left);
        witness
            .iter()
            .find(|&g| self.related(level, side, g, delta))
            .ok_or_else(|| self.no_strategy(p))
    }

    /// Every response for every position in the region and every minimal
    /// Player-1 witness.
    pub fn table(&self, rounds_left: Option<usize>) -> Vec<StrategyEntry> {
        let a = self.arena;
        let (ls, rs) = (a.space(Side::Left), a.space(Side::Right));
        let mut out = Vec::new();
        for (l, r) in self.rel.pairs(rounds_left.unwrap_or(self.rel.computed_levels() - 1)) {
            let p = GamePosition { left: l, right: r };
            if !self.in_region(p, rounds_left) || rounds_left == Some(0) {
                continue;
            }
            for side in [Side::Left, Side::Right] {
                let (here, st, sp, ost, osp) = match side {
                    Side::Left => (l, &a.left, ls, &a.right, rs),
                    Side::Right => (r, &a.right, rs, &a.left, ls),
                };
                for (qi, q) in a.registry.iter().enumerate() {
                    for s in a.witnesses(side, qi, here) {
                        let Ok(t) = self.respond_witness(p, rounds_left, side, qi, s) else {
                            continue;
                        };
                        let challenges = t
                            .iter()
                            .map(|d| {
                                let g = self.respond_challenge(p, rounds_left, side, s, d).expect("certified");
                                (ost.format_tuple(osp, d), st.format_tuple(sp, g))
                            })
                            .collect();
                        out.push(StrategyEntry {
                            left: a.left.format_tuple(ls, l),
                            right: a.right.format_tuple(rs, r),
                            side,
                            quantifier: q.name(),
                            witness: s.iter().map(|x| st.format_tuple(sp, x)).collect(),
                            response: t.iter().map(|x| ost.format_tuple(osp, x)).collect(),
                            challenges,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Player {
    #[serde(rename = "player1")]
    One,
    #[serde(rename = "player2")]
    Two,
}

impl fmt::Display for Player {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Player::One => "Player 1",
            Player::Two => "Player 2",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GameStatus {
    /// Ongoing; the position is in Player 2's winning region.
    Player2Safe,
    /// Ongoing; Player 1 can force a win within `rounds` rounds.
    Player1ForcedWin { rounds: usize },
    /// Terminal.
    Finished { winner: Player, reason: String },
}

impl GameStatus {
    pub fn is_terminal(&self) -> bool {
        matches!(self, GameStatus::Finished { .. })
    }
}

impl fmt::Display for GameStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GameStatus::Player2Safe => write!(f, "Player 2 safe"),
            GameStatus::Player1ForcedWin { rounds: 1 } => write!(f, "Player 1 forced win in 1 round"),
            GameStatus::Player1ForcedWin { rounds } => write!(f, "Player 1 forced win in {rounds} rounds"),
            GameStatus::Finished { winner, reason } => write!(f, "{winner} wins: {reason}"),
        }
    }
}

/// A Player-1 move.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Move {
    Witness {
        side: Side,
        quantifier: QuantifierRef,
        witness: BitSet,
    },
    Challenge {
        challenge: usize,
    },
}

/// Player 1's witness and Player 2's answer, awaiting Player 1's challenge.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pending {
    pub side: Side,
    pub quantifier: usize,
    pub witness: BitSet,
    pub response: BitSet,
}

/// Player 2's half-move.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Response {
    Witness { response: BitSet, from_strategy: bool },
    Tuple { tuple: usize, from_strategy: bool },
    Stuck,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameState {
    pub position: GamePosition,
    pub rounds_played: usize,
    pub round_bound: Option<usize>,
    pub pending: Option<Pending>,
    pub status: GameStatus,
}

impl GameState {
    pub fn rounds_left(&self) -> Option<usize> {
        self.round_bound.map(|q| q.saturating_sub(self.rounds_played))
    }
}

fn player1_has_move(arena: &GameArena, p: GamePosition) -> bool {
    (0..arena.registry.len()).any(|qi| {
        !arena.witnesses(Side::Left, qi, p.left).is_empty() || !arena.witnesses(Side::Right, qi, p.right).is_empty()
    })
}

/// Status at a position with no pending half-round.
fn status_at(arena: &GameArena, rel: &BisimRelation, p: GamePosition, rounds_left: Option<usize>) -> GameStatus {
    if !arena.atom_equiv(p) {
        return GameStatus::Finished {
            winner: Player::One,
            reason: "atom equivalence violated".into(),
        };
    }
    if rounds_left == Some(0) {
        return GameStatus::Finished {
            winner: Player::Two,
            reason: "round bound reached".into(),
        };
    }
    if !player1_has_move(arena, p) {
        return GameStatus::Finished {
            winner: Player::Two,
            reason: "Player 1 has no witness to play".into(),
        };
    }
    let safe = match rounds_left {
        Some(m) => rel.holds(m, p.left, p.right),
        None => rel.is_stabilized() && rel.bisimilar(p.left, p.right),
    };
    if safe {
        return GameStatus::Player2Safe;
    }
    match rel.depth(p.left, p.right) {
        Depth::Rounds(d) => GameStatus::Player1ForcedWin { rounds: d + 1 },
        _ => unreachable!("atom-equivalent and unsafe"),
    }
}

pub fn initial_state(
    arena: &GameArena,
    rel: &BisimRelation,
    p: GamePosition,
    round_bound: Option<usize>,
) -> GameState {
    GameState {
        position: p,
        rounds_played: 0,
        round_bound,
        pending: None,
        status: status_at(arena, rel, p, round_bound),
    }
}

fn depth_oriented(rel: &BisimRelation, side: Side, mine: usize, theirs: usize) -> Depth {
    match side {
        Side::Left => rel.depth(mine, theirs),
        Side::Right => rel.depth(theirs, mine),
    }
}

/// Player 2's best effort: the witness maximizing the depth she can guarantee.
fn maximin_witness(arena: &GameArena, rel: &BisimRelation, side: Side, there: usize, qi: usize, s: &BitSet) -> Option<BitSet> {
    let mut best: Option<(Depth, &BitSet)> = None;
    for t in arena.witnesses(side.other(), qi, there) {
        let v = t
            .iter()
            .map(|d| s.iter().map(|g| depth_oriented(rel, side, g, d)).max().unwrap_or(Depth::Lost))
            .min()
            .unwrap_or(Depth::Forever);
        if best.is_none_or(|(bv, _)| v > bv) {
            best = Some((v, t));
        }
    }
    best.map(|(_, t)| t.clone())
}

fn maximin_tuple(rel: &BisimRelation, side: Side, s: &BitSet, delta: usize) -> usize {
    let mut best: Option<(Depth, usize)> = None;
    for g in s.iter() {
        let v = depth_oriented(rel, side, g, delta);
        if best.is_none_or(|(bv, _)| v > bv) {
            best = Some((v, g));
        }
    }
    best.expect("witness nonempty").1
}

/// Applies a Player-1 move and the engine's Player-2 reply.
pub fn game_step(
    arena: &GameArena,
    rel: &BisimRelation,
    state: &GameState,
    mv: &Move,
) -> Result<(GameState, Response), MoveError> {
    if state.status.is_terminal() {
        return Err(MoveError::GameOver);
    }
    let strategy = Strategy { arena, rel };
    let p = state.position;
    let rounds_left = state.rounds_left();
    let mut next = state.clone();
    match (mv, &state.pending) {
        (Move::Witness { .. }, Some(_)) => Err(MoveError::WrongTurn("a tuple challenge is expected".into())),
        (Move::Challenge { .. }, None) => Err(MoveError::WrongTurn("a witness move is expected".into())),
        (Move::Witness { side, quantifier, witness }, None) => {
            let qi = arena
                .quantifier_index(quantifier)
                .ok_or_else(|| MoveError::UnknownQuantifier(quantifier.to_string()))?;
            let here = match side {
                Side::Left => p.left,
                Side::Right => p.right,
            };
            let st = arena.structure(*side);
            if witness.capacity() != arena.space(*side).size() || !arena.registry[qi].is_witness(st, here, witness) {
                return Err(MoveError::NotAWitness);
            }
            let there = match side {
                Side::Left => p.right,
                Side::Right => p.left,
            };
            let reply = match strategy.respond_witness(p, rounds_left, *side, qi, witness) {
                Ok(t) => Some((t, true)),
                Err(_) => maximin_witness(arena, rel, *side, there, qi, witness).map(|t| (t, false)),
            };
            match reply {
                Some((t, from_strategy)) => {
                    next.pending = Some(Pending {
                        side: *side,
                        quantifier: qi,
                        witness: witness.clone(),
                        response: t.clone(),
                    });
                    Ok((next, Response::Witness { response: t, from_strategy }))
                }
                None => {
                    next.status = GameStatus::Finished {
                        winner: Player::One,
                        reason: "Player 2 has no witness to answer".into(),
                    };
                    Ok((next, Response::Stuck))
                }
            }
        }
        (Move::Challenge { challenge }, Some(pending)) => {
            if !pending.response.contains(*challenge) {
                return Err(MoveError::NotInWitness);
            }
            let side = pending.side;
            let (g, from_strategy) = match strategy.respond_challenge(p, rounds_left, side, &pending.witness, *challenge) {
                Ok(g) if strategy.in_region(p, rounds_left) => (g, true),
                _ => (maximin_tuple(rel, side, &pending.witness, *challenge), false),
            };
            next.position = match side {
                Side::Left => GamePosition { left: g, right: *challenge },
                Side::Right => GamePosition { left: *challenge, right: g },
            };
            next.pending = None;
            next.rounds_played += 1;
            next.status = status_at(arena, rel, next.position, next.rounds_left());
            Ok((next, Response::Tuple { tuple: g, from_strategy }))
        }
    }
}

/// A strongest Player-1 move by one-round lookahead over minimal witnesses
/// and the computed depths; `None` when Player 1 has no move.
pub fn challenger_move(arena: &GameArena, rel: &BisimRelation, state: &GameState) -> Option<Move> {
    if state.status.is_terminal() {
        return None;
    }
    let p = state.position;
    if let Some(pending) = &state.pending {
        let side = pending.side;
        let delta = pending.response.iter().min_by_key(|&d| {
            pending
                .witness
                .iter()
                .map(|g| depth_oriented(rel, side, g, d))
                .max()
                .unwrap_or(Depth::Lost)
        })?;
        return Some(Move::Challenge { challenge: delta });
    }
    let mut best: Option<(Option<Depth>, Move)> = None;
    for side in [Side::Left, Side::Right] {
        let (here, there) = match side {
            Side::Left => (p.left, p.right),
            Side::Right => (p.right, p.left),
        };
        for (qi, q) in arena.registry.iter().enumerate() {
            for s in arena.witnesses(side, qi, here) {
                // None: Player 2 is stuck, the best outcome for Player 1.
                let value = arena
                    .witnesses(side.other(), qi, there)
                    .iter()
                    .map(|t| {
                        t.iter()
                            .map(|d| s.iter().map(|g| depth_oriented(rel, side, g, d)).max().unwrap_or(Depth::Lost))
                            .min()
                            .unwrap_or(Depth::Forever)
                    })
                    .max();
                let mv = Move::Witness {
                    side,
                    quantifier: q.kind().clone(),
                    witness: s.clone(),
                };
                if best.as_ref().is_none_or(|(bv, _)| value < *bv) {
                    best = Some((value, mv));
                }
            }
        }
    }
    best.map(|(_, m)| m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::k1;

    fn dia() -> Vec<QuantifierDef> {
        vec![QuantifierDef::parse("dia[R]", 1).unwrap()]
    }

    fn pos(l: usize, r: usize) -> GamePosition {
        GamePosition { left: l, right: r }
    }

    #[test]
    fn atom_equivalence_examples() {
        let s = k1();
        let a = |i| Assignment::new(vec![i]);
        assert!(atom_equiv(&s, &a(0), &s, &a(0)).unwrap());
        assert!(!atom_equiv(&s, &a(0), &s, &a(1)).unwrap());
        assert!(atom_equiv(&s, &a(0), &s, &a(2)).unwrap());
    }

    #[test]
    fn one_round_examples() {
        let s = k1();
        let rel = bisim_rank(&s, &s, 1, 1, &dia()).unwrap();
        assert!(rel.holds(1, 0, 0));
        assert!(rel.holds(0, 0, 2));
        assert!(!rel.holds(1, 0, 2));
        assert_eq!(rel.failure_round(0, 2), Some(1));
    }

    #[test]
    fn level_zero_is_atom_equivalence() {
        let s = k1();
        let rel = bisim_rank(&s, &s, 1, 0, &dia()).unwrap();
        assert_eq!(rel.pairs(0), vec![(0, 0), (0, 2), (1, 1), (2, 0), (2, 2)]);
    }

    #[test]
    fn fixed_point_contains_diagonal() {
        let s = k1();
        let rel = bisim(&s, &s, 1, &dia()).unwrap();
        assert!(rel.is_stabilized());
        for a in 0..3 {
            assert!(rel.bisimilar(a, a));
        }
        assert!(rel.stabilization_index().unwrap() <= 9);
    }

    #[test]
    fn signature_mismatch_is_rejected() {
        let s = k1();
        let t = Structure::from_index_tuples(
            crate::model::Signature::from_pairs([("R", 2)]).unwrap(),
            vec!["x".into()],
            [("R".to_string(), Default::default())].into_iter().collect(),
        );
        assert!(matches!(bisim(&s, &t, 1, &[]), Err(GameError::Model(ModelError::SignatureMismatch(_)))));
    }

    #[test]
    fn identity_strategy_mirrors() {
        let s = k1();
        let arena = GameArena::new(&s, &s, 1, &dia()).unwrap();
        let rel = bisim_in(&arena);
        let st = extract_strategy(&arena, &rel).unwrap();
        let w = BitSet::from_indices(3, [1]);
        let t = st.respond_witness(pos(0, 0), None, Side::Left, 0, &w).unwrap();
        assert_eq!(t, w);
        assert_eq!(st.respond_challenge(pos(0, 0), None, Side::Left, &w, 1).unwrap(), 1);
        assert!(!st.table(None).is_empty());
    }

    #[test]
    fn strategy_outside_region_errors() {
        let s = k1();
        let arena = GameArena::new(&s, &s, 1, &dia()).unwrap();
        let rel = bisim_in(&arena);
        let st = extract_strategy(&arena, &rel).unwrap();
        let err = st
            .respond_witness(pos(0, 2), None, Side::Left, 0, &BitSet::from_indices(3, [1]))
            .unwrap_err();
        assert!(err.to_string().contains("no winning strategy"));
    }

    #[test]
    fn stepping_a_safe_game() {
        let s = k1();
        let arena = GameArena::new(&s, &s, 1, &dia()).unwrap();
        let rel = bisim_in(&arena);
        let st = initial_state(&arena, &rel, pos(0, 0), None);
        assert_eq!(st.status, GameStatus::Player2Safe);
        let mv = Move::Witness {
            side: Side::Left,
            quantifier: QuantifierRef::parse("dia[R]").unwrap(),
            witness: BitSet::from_indices(3, [1]),
        };
        let (st, resp) = game_step(&arena, &rel, &st, &mv).unwrap();
        assert_eq!(
            resp,
            Response::Witness {
                response: BitSet::from_indices(3, [1]),
                from_strategy: true
            }
        );
        assert_eq!(
            game_step(&arena, &rel, &st, &Move::Challenge { challenge: 0 }).unwrap_err(),
            MoveError::NotInWitness
        );
        let (st, _) = game_step(&arena, &rel, &st, &Move::Challenge { challenge: 1 }).unwrap();
        assert_eq!(st.position, pos(1, 1));
        assert_eq!(st.rounds_played, 1);
    }

    #[test]
    fn non_witness_is_rejected() {
        let s = k1();
        let arena = GameArena::new(&s, &s, 1, &dia()).unwrap();
        let rel = bisim_in(&arena);
        let st = initial_state(&arena, &rel, pos(0, 0), None);
        let mv = Move::Witness {
            side: Side::Left,
            quantifier: QuantifierRef::parse("dia[R]").unwrap(),
            witness: BitSet::from_indices(3, [0, 2]),
        };
        let err = game_step(&arena, &rel, &st, &mv).unwrap_err();
        assert_eq!(err.to_string(), "not a witness");
    }

    #[test]
    fn forced_win_is_reported_and_realized() {
        let s = k1();
        let arena = GameArena::new(&s, &s, 1, &dia()).unwrap();
        let rel = bisim_in(&arena);
        let mut st = initial_state(&arena, &rel, pos(0, 2), None);
        assert_eq!(st.status.to_string(), "Player 1 forced win in 1 round");
        let mut moves = 0;
        while let Some(mv) = challenger_move(&arena, &rel, &st) {
            st = game_step(&arena, &rel, &st, &mv).unwrap().0;
            moves += 1;
        }
        assert_eq!(moves, 1);
        assert!(matches!(st.status, GameStatus::Finished { winner: Player::One, .. }));
    }

    #[test]
    fn all_witness_arena_agrees_on_k1() {
        let s = k1();
        let qs = QuantifierDef::parse_list("dia[R], some, reach[R]", 1).unwrap();
        let m = bisim_rank_in(&GameArena::new(&s, &s, 1, &qs).unwrap(), 3);
        let a = bisim_rank_in(&GameArena::with_mode(&s, &s, 1, &qs, WitnessMode::All).unwrap(), 3);
        for r in 0..=3 {
            assert_eq!(m.pairs(r), a.pairs(r));
        }
    }

    #[test]
    fn joint_classes() {
        let s = k1();
        let arena = GameArena::new(&s, &s, 1, &dia()).unwrap();
        let j = joint_relation(&arena, None);
        assert_eq!(j.class_count(0), 2);
        assert_eq!(j.class_count(1), 3);
        assert!(j.stabilization_index().unwrap() <= 6);
    }
}
