//! HTTP facade over game sessions, versioned under `/api/v1`.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use kq_core::games::{
    bisim_in, bisim_rank_in, game_step, initial_state, BisimRelation, Depth, GameArena, GameError, GameState,
    GameStatus, Move, MoveError, Player, Response as EngineResponse, Side,
};
use kq_core::model::StructureDoc;
use kq_core::{BitSet, QuantifierDef, QuantifierRef, Structure, WitnessFamily};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;
use tracing::{info, warn};
use uuid::Uuid;

use crate::default_registry;

/// Largest `|A^k|` (and `|B^k|`) accepted for a session.
pub const MAX_SESSION_TUPLES: usize = 4096;

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    SizeGuard(String),
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("unknown quantifier `{0}`")]
    UnknownQuantifier(String),
    #[error("illegal move: {0}")]
    IllegalMove(MoveError),
    #[error("storage: {0}")]
    Storage(String),
}

impl ApiError {
    fn code(&self) -> String {
        match self {
            ApiError::Invalid(_) => "validation_error".into(),
            ApiError::SizeGuard(_) => "size_guard".into(),
            ApiError::UnknownSession(_) => "unknown_session".into(),
            ApiError::UnknownQuantifier(_) => "unknown_quantifier".into(),
            ApiError::IllegalMove(e) => serde_json::to_value(e)
                .ok()
                .and_then(|v| v.get("code").and_then(Value::as_str).map(String::from))
                .unwrap_or_else(|| "illegal_move".into()),
            ApiError::Storage(_) => "storage_error".into(),
        }
    }

    fn status(&self) -> StatusCode {
        match self {
            ApiError::UnknownSession(_) => StatusCode::NOT_FOUND,
            ApiError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
            ApiError::IllegalMove(MoveError::GameOver) => StatusCode::CONFLICT,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "code": self.code(), "message": self.to_string() } });
        (self.status(), Json(body)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::Invalid(e.body_text())
    }
}

/// Quantifiers as a list or a comma-separated string.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum QuantifierList {
    List(Vec<String>),
    Text(String),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SessionRequest {
    pub left: StructureDoc,
    pub right: StructureDoc,
    pub k: usize,
    pub alpha: String,
    pub beta: String,
    #[serde(default)]
    pub quantifiers: Option<QuantifierList>,
    #[serde(default)]
    pub rounds: Option<usize>,
}

/// Player-1 move as sent by clients: tuples are comma-joined element names.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MoveRequest {
    Witness {
        side: Side,
        quantifier: String,
        witness: Vec<String>,
    },
    Challenge {
        challenge: String,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(tag = "player", rename_all = "lowercase")]
pub enum HistoryEntry {
    #[serde(rename = "player1")]
    Player1 { r#move: Value },
    #[serde(rename = "player2")]
    Player2 { response: Value },
}

/// What is written to disk: the request and Player 1's moves. The rest is
/// rebuilt by replay.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct Snapshot {
    id: String,
    request: SessionRequest,
    moves: Vec<Move>,
    position: Value,
    status: String,
}

pub struct Session {
    pub id: String,
    request: SessionRequest,
    arena: GameArena,
    rel: BisimRelation,
    initial: GameState,
    state: GameState,
    moves: Vec<Move>,
    history: Vec<HistoryEntry>,
}

fn parse_registry(req: &SessionRequest, left: &Structure) -> Result<Vec<QuantifierDef>, ApiError> {
    let text = match &req.quantifiers {
        None => return default_registry(left, req.k).map_err(|e| ApiError::Invalid(e.to_string())),
        Some(QuantifierList::Text(t)) => t.clone(),
        Some(QuantifierList::List(v)) => v.join(","),
    };
    let reg = QuantifierDef::parse_list(&text, req.k).map_err(|e| ApiError::Invalid(e.to_string()))?;
    if reg.is_empty() {
        return Err(ApiError::Invalid("empty quantifier list".into()));
    }
    Ok(reg)
}

impl Session {
    pub fn create(id: String, request: SessionRequest) -> Result<Session, ApiError> {
        let invalid = |e: &dyn std::fmt::Display| ApiError::Invalid(e.to_string());
        if !(1..=3).contains(&request.k) {
            return Err(ApiError::Invalid(format!("k must be between 1 and 3, got {}", request.k)));
        }
        let left = Structure::from_doc(&request.left).map_err(|e| invalid(&e))?;
        let right = Structure::from_doc(&request.right).map_err(|e| invalid(&e))?;
        for s in [&left, &right] {
            let size = s.len().checked_pow(request.k as u32).unwrap_or(usize::MAX);
            if size > MAX_SESSION_TUPLES {
                return Err(ApiError::SizeGuard(format!(
                    "{size} tuples exceed the session limit of {MAX_SESSION_TUPLES}"
                )));
            }
        }
        let registry = parse_registry(&request, &left)?;
        let arena = GameArena::new(&left, &right, request.k, &registry).map_err(|e| match e {
            GameError::Model(m) => invalid(&m),
            other => invalid(&other),
        })?;
        let alpha = left.parse_tuple(&request.alpha, request.k).map_err(|e| invalid(&e))?;
        let beta = right.parse_tuple(&request.beta, request.k).map_err(|e| invalid(&e))?;
        let p = arena.position(&alpha, &beta).map_err(|e| invalid(&e))?;
        let rel = match request.rounds {
            Some(q) => bisim_rank_in(&arena, q),
            None => bisim_in(&arena),
        };
        let initial = initial_state(&arena, &rel, p, request.rounds);
        Ok(Session {
            id,
            request,
            arena,
            rel,
            state: initial.clone(),
            initial,
            moves: Vec::new(),
            history: Vec::new(),
        })
    }

    pub fn state(&self) -> &GameState {
        &self.state
    }

    pub fn arena(&self) -> &GameArena {
        &self.arena
    }

    fn side_tuple(&self, side: Side, code: usize) -> String {
        let s = self.arena.structure(side);
        s.format_tuple(self.arena.space(side), code)
    }

    fn side_set(&self, side: Side, set: &BitSet) -> Vec<String> {
        set.iter().map(|c| self.side_tuple(side, c)).collect()
    }

    fn parse_side_tuple(&self, side: Side, text: &str) -> Result<usize, ApiError> {
        let s = self.arena.structure(side);
        let a = s
            .parse_tuple(text, self.arena.k())
            .map_err(|e| ApiError::IllegalMove(MoveError::Malformed(e.to_string())))?;
        Ok(a.code(self.arena.space(side)))
    }

    /// Resolves a client move against the current position.
    pub fn resolve(&self, mv: &MoveRequest) -> Result<Move, ApiError> {
        match mv {
            MoveRequest::Witness { side, quantifier, witness } => {
                let q = QuantifierRef::parse(quantifier)
                    .map_err(|_| ApiError::IllegalMove(MoveError::UnknownQuantifier(quantifier.clone())))?;
                let size = self.arena.space(*side).size();
                let mut set = BitSet::new(size);
                for t in witness {
                    set.insert(self.parse_side_tuple(*side, t)?);
                }
                Ok(Move::Witness {
                    side: *side,
                    quantifier: q,
                    witness: set,
                })
            }
            MoveRequest::Challenge { challenge } => {
                let side = match &self.state.pending {
                    Some(p) => p.side.other(),
                    None => return Err(ApiError::IllegalMove(MoveError::WrongTurn("a witness move is expected".into()))),
                };
                Ok(Move::Challenge {
                    challenge: self.parse_side_tuple(side, challenge)?,
                })
            }
        }
    }

    fn move_doc(&self, state: &GameState, mv: &Move) -> Value {
        match mv {
            Move::Witness { side, quantifier, witness } => json!({
                "side": side,
                "quantifier": quantifier.to_string(),
                "witness": self.side_set(*side, witness),
            }),
            Move::Challenge { challenge } => {
                let side = state.pending.as_ref().map(|p| p.side.other()).unwrap_or(Side::Right);
                json!({ "side": side, "challenge": self.side_tuple(side, *challenge) })
            }
        }
    }

    fn response_doc(&self, before: &GameState, mv: &Move, r: &EngineResponse) -> Value {
        match (r, mv) {
            (EngineResponse::Witness { response, from_strategy }, Move::Witness { side, .. }) => json!({
                "kind": "witness",
                "side": side.other(),
                "witness": self.side_set(side.other(), response),
                "fromStrategy": from_strategy,
            }),
            (EngineResponse::Tuple { tuple, from_strategy }, _) => {
                let side = before.pending.as_ref().map(|p| p.side).unwrap_or(Side::Left);
                json!({
                    "kind": "tuple",
                    "side": side,
                    "tuple": self.side_tuple(side, *tuple),
                    "fromStrategy": from_strategy,
                })
            }
            _ => json!({ "kind": "stuck" }),
        }
    }

    /// Applies a Player-1 move and the engine's reply.
    pub fn apply(&mut self, mv: Move) -> Result<(), ApiError> {
        let (next, response) = game_step(&self.arena, &self.rel, &self.state, &mv).map_err(ApiError::IllegalMove)?;
        let m = self.move_doc(&self.state, &mv);
        let r = self.response_doc(&self.state, &mv, &response);
        self.history.push(HistoryEntry::Player1 { r#move: m });
        self.history.push(HistoryEntry::Player2 { response: r });
        self.moves.push(mv);
        self.state = next;
        Ok(())
    }

    /// Re-applies the recorded moves from the initial position.
    pub fn replay(&self) -> Result<GameState, MoveError> {
        let mut st = self.initial.clone();
        for mv in &self.moves {
            st = game_step(&self.arena, &self.rel, &st, mv)?.0;
        }
        Ok(st)
    }

    /// Minimal witnesses at the current position for a registered or
    /// otherwise valid quantifier.
    pub fn witnesses(&self, side: Side, quantifier: &str) -> Result<Vec<Vec<String>>, ApiError> {
        let unknown = || ApiError::UnknownQuantifier(quantifier.to_string());
        let q = QuantifierRef::parse(quantifier).map_err(|_| unknown())?;
        let here = match side {
            Side::Left => self.state.position.left,
            Side::Right => self.state.position.right,
        };
        let sets: Vec<BitSet> = match self.arena.quantifier_index(&q) {
            Some(qi) => self.arena.witnesses(side, qi, here).to_vec(),
            None => {
                let def = QuantifierDef::new(q, self.arena.k()).map_err(|_| unknown())?;
                let s = self.arena.structure(side);
                def.check_structure(s).map_err(|_| unknown())?;
                def.minimal_witnesses(s, here)
            }
        };
        Ok(sets.iter().map(|w| self.side_set(side, w)).collect())
    }

    fn status_doc(&self) -> Value {
        let mut v = serde_json::to_value(&self.state.status).expect("status serializes");
        v["text"] = json!(self.state.status.to_string());
        v["ongoing"] = json!(!self.state.status.is_terminal());
        v
    }

    pub fn relation_summary(&self) -> Value {
        let p = self.initial.position;
        let levels = self.rel.computed_levels();
        let depth = match self.rel.depth(p.left, p.right) {
            Depth::Lost => json!("lost"),
            Depth::Rounds(d) => json!(d),
            Depth::Forever => json!("forever"),
        };
        json!({
            "levels": levels,
            "stabilized": self.rel.is_stabilized(),
            "stabilizationIndex": self.rel.stabilization_index(),
            "pairs": self.rel.len(levels - 1),
            "leftTuples": self.rel.n_left(),
            "rightTuples": self.rel.n_right(),
            "initialDepth": depth,
            "failureRound": self.rel.failure_round(p.left, p.right),
        })
    }

    pub fn to_json(&self) -> Value {
        let pending = self.state.pending.as_ref().map(|p| {
            json!({
                "side": p.side,
                "quantifier": self.arena.registry()[p.quantifier].name(),
                "witness": self.side_set(p.side, &p.witness),
                "response": self.side_set(p.side.other(), &p.response),
                "challengeSide": p.side.other(),
            })
        });
        json!({
            "id": self.id,
            "k": self.arena.k(),
            "left": self.request.left,
            "right": self.request.right,
            "quantifiers": self.arena.registry().iter().map(QuantifierDef::name).collect::<Vec<_>>(),
            "mode": if self.request.rounds.is_some() { "bounded" } else { "unbounded" },
            "rounds": self.request.rounds,
            "roundsPlayed": self.state.rounds_played,
            "roundsLeft": self.state.rounds_left(),
            "initial": {
                "left": self.side_tuple(Side::Left, self.initial.position.left),
                "right": self.side_tuple(Side::Right, self.initial.position.right),
            },
            "position": {
                "left": self.side_tuple(Side::Left, self.state.position.left),
                "right": self.side_tuple(Side::Right, self.state.position.right),
            },
            "pending": pending,
            "status": self.status_doc(),
            "history": self.history,
            "relationSummary": self.relation_summary(),
        })
    }

    fn snapshot(&self) -> Snapshot {
        let doc = self.to_json();
        Snapshot {
            id: self.id.clone(),
            request: self.request.clone(),
            moves: self.moves.clone(),
            position: doc["position"].clone(),
            status: self.state.status.to_string(),
        }
    }

    fn restore(snap: Snapshot) -> Result<Session, ApiError> {
        let mut s = Session::create(snap.id.clone(), snap.request)?;
        for mv in snap.moves {
            s.apply(mv)?;
        }
        if s.state.status.to_string() != snap.status || s.to_json()["position"] != snap.position {
            return Err(ApiError::Storage(format!("snapshot {} does not replay to its recorded state", snap.id)));
        }
        Ok(s)
    }
}

/// Loser named by a terminal status, if any.
pub fn loser(status: &GameStatus) -> Option<Player> {
    match status {
        GameStatus::Finished { winner: Player::One, .. } => Some(Player::Two),
        GameStatus::Finished { winner: Player::Two, .. } => Some(Player::One),
        _ => None,
    }
}

#[derive(Clone, Default)]
pub struct AppState {
    sessions: Arc<RwLock<HashMap<String, Arc<Mutex<Session>>>>>,
    state_dir: Option<PathBuf>,
}

impl AppState {
    pub fn new(state_dir: Option<PathBuf>) -> Self {
        AppState {
            sessions: Arc::default(),
            state_dir,
        }
    }

    /// Loads every snapshot in the state directory, skipping unreadable ones.
    pub fn load_snapshots(&self) -> std::io::Result<usize> {
        let Some(dir) = &self.state_dir else { return Ok(0) };
        std::fs::create_dir_all(dir)?;
        let mut n = 0;
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().is_none_or(|e| e != "json") {
                continue;
            }
            let restored = std::fs::read_to_string(&path)
                .map_err(|e| ApiError::Storage(e.to_string()))
                .and_then(|t| serde_json::from_str::<Snapshot>(&t).map_err(|e| ApiError::Storage(e.to_string())))
                .and_then(Session::restore);
            match restored {
                Ok(s) => {
                    self.sessions.write().expect("lock").insert(s.id.clone(), Arc::new(Mutex::new(s)));
                    n += 1;
                }
                Err(e) => warn!("skipping {}: {e}", path.display()),
            }
        }
        Ok(n)
    }

    fn persist(&self, s: &Session) -> Result<(), ApiError> {
        let Some(dir) = &self.state_dir else { return Ok(()) };
        write_snapshot(dir, &s.snapshot()).map_err(|e| ApiError::Storage(e.to_string()))
    }

    fn get(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.sessions
            .read()
            .expect("lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::UnknownSession(id.to_string()))
    }
}

fn write_snapshot(dir: &Path, snap: &Snapshot) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!("{}.json.tmp", snap.id));
    std::fs::write(&tmp, serde_json::to_vec_pretty(snap)?)?;
    std::fs::rename(tmp, dir.join(format!("{}.json", snap.id)))
}

async fn create_session(
    State(app): State<AppState>,
    body: Result<Json<SessionRequest>, JsonRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let Json(req) = body?;
    let id = Uuid::new_v4().to_string();
    let sid = id.clone();
    let session = tokio::task::spawn_blocking(move || Session::create(sid, req))
        .await
        .map_err(|e| ApiError::Storage(e.to_string()))??;
    app.persist(&session)?;
    let body = json!({
        "id": id,
        "status": session.status_doc(),
        "relationSummary": session.relation_summary(),
    });
    info!(session = %id, "created");
    app.sessions.write().expect("lock").insert(id, Arc::new(Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(body)))
}

async fn get_session(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<Value>, ApiError> {
    let s = app.get(&id)?;
    let doc = s.lock().expect("lock").to_json();
    Ok(Json(doc))
}

async fn post_move(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<MoveRequest>, JsonRejection>,
) -> Result<Json<Value>, ApiError> {
    let s = app.get(&id)?;
    let Json(req) = body?;
    let mut session = s.lock().expect("lock");
    let mv = session.resolve(&req)?;
    session.apply(mv)?;
    app.persist(&session)?;
    Ok(Json(session.to_json()))
}

#[derive(Deserialize)]
struct WitnessQuery {
    side: Side,
    quantifier: String,
}

async fn get_witnesses(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<WitnessQuery>,
) -> Result<Json<Value>, ApiError> {
    let s = app.get(&id)?;
    let list = s.lock().expect("lock").witnesses(q.side, &q.quantifier)?;
    Ok(Json(json!(list)))
}

pub fn router(app: AppState) -> Router {
    Router::new()
        .route("/api/v1/session", post(create_session))
        .route("/api/v1/session/{id}", get(get_session))
        .route("/api/v1/session/{id}/move", post(post_move))
        .route("/api/v1/session/{id}/witnesses", get(get_witnesses))
        .with_state(app)
}
