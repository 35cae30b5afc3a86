use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use kq_cli::service::{router, AppState, Session, SessionRequest};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::{json, Value};
use tower::ServiceExt;

fn k1() -> Value {
    json!({
        "signature": {"R": 2, "P": 1},
        "universe": ["a", "b", "c"],
        "relations": {"R": [["a", "b"], ["b", "c"]], "P": [["b"]]}
    })
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = match body {
        Some(b) => req.body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, v)
}

async fn create(app: &Router, body: Value) -> String {
    let (s, v) = call(app, "POST", "/api/v1/session", Some(body)).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    v["id"].as_str().unwrap().to_string()
}

fn k1_request(alpha: &str, beta: &str) -> Value {
    json!({"left": k1(), "right": k1(), "k": 1, "alpha": alpha, "beta": beta, "quantifiers": ["dia[R]"]})
}

#[tokio::test]
async fn identity_session_is_safe() {
    let app = router(AppState::default());
    let (s, v) = call(&app, "POST", "/api/v1/session", Some(k1_request("a", "a"))).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(v["status"]["text"], "Player 2 safe");
    assert_eq!(v["relationSummary"]["stabilized"], true);
}

#[tokio::test]
async fn forced_win_reports_rounds() {
    let app = router(AppState::default());
    let (_, v) = call(&app, "POST", "/api/v1/session", Some(k1_request("a", "c"))).await;
    assert_eq!(v["status"]["text"], "Player 1 forced win in 1 round");
    assert_eq!(v["status"]["rounds"], 1);
}

#[tokio::test]
async fn mismatched_signatures_are_rejected() {
    let app = router(AppState::default());
    let other = json!({"signature": {"S": 2}, "universe": ["x"], "relations": {}});
    let body = json!({"left": k1(), "right": other, "k": 1, "alpha": "a", "beta": "x", "quantifiers": "dia[R]"});
    let (s, v) = call(&app, "POST", "/api/v1/session", Some(body)).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"]["code"], "validation_error");
}

#[tokio::test]
async fn malformed_body_is_a_validation_error() {
    let app = router(AppState::default());
    let (s, v) = call(&app, "POST", "/api/v1/session", Some(json!({"left": 1}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"]["code"], "validation_error");
}

#[tokio::test]
async fn unknown_session() {
    let app = router(AppState::default());
    let (s, v) = call(&app, "GET", "/api/v1/session/nope", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["error"]["code"], "unknown_session");
}

#[tokio::test]
async fn witness_palette() {
    let app = router(AppState::default());
    let id = create(&app, k1_request("a", "a")).await;
    let uri = |side: &str, q: &str| format!("/api/v1/session/{id}/witnesses?side={side}&quantifier={}", q.replace('[', "%5B").replace(']', "%5D"));
    let (_, v) = call(&app, "GET", &uri("left", "dia[R]"), None).await;
    assert_eq!(v, json!([["b"]]));
    let (_, v) = call(&app, "GET", &uri("right", "inf[R]"), None).await;
    assert_eq!(v, json!([]));
    let (_, v) = call(&app, "GET", &uri("left", "all"), None).await;
    assert_eq!(v, json!([["a", "b", "c"]]));
    let (s, v) = call(&app, "GET", &uri("left", "bogus"), None).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"]["code"], "unknown_quantifier");
}

#[tokio::test]
async fn moves_extend_history() {
    let app = router(AppState::default());
    let id = create(&app, k1_request("a", "a")).await;
    let mv = format!("/api/v1/session/{id}/move");
    let (s, v) = call(&app, "POST", &mv, Some(json!({"side": "left", "quantifier": "dia[R]", "witness": ["b"]}))).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["history"].as_array().unwrap().len(), 2);
    assert_eq!(v["history"][1]["response"]["witness"], json!(["b"]));
    assert_eq!(v["pending"]["challengeSide"], "right");

    let (s, v) = call(&app, "POST", &mv, Some(json!({"challenge": "c"}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"]["code"], "not_in_witness");

    let (s, v) = call(&app, "POST", &mv, Some(json!({"challenge": "b"}))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["history"].as_array().unwrap().len(), 4);
    assert_eq!(v["position"], json!({"left": "b", "right": "b"}));
    assert_eq!(v["roundsPlayed"], 1);
}

#[tokio::test]
async fn declared_non_witness_is_rejected() {
    let app = router(AppState::default());
    let id = create(&app, k1_request("a", "a")).await;
    let (s, v) = call(
        &app,
        "POST",
        &format!("/api/v1/session/{id}/move"),
        Some(json!({"side": "left", "quantifier": "dia[R]", "witness": ["a", "c"]})),
    )
    .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"]["code"], "not_a_witness");
    assert_eq!(v["error"]["message"], "illegal move: not a witness");
}

#[tokio::test]
async fn forced_win_line_ends_the_game() {
    let app = router(AppState::default());
    let id = create(&app, k1_request("a", "c")).await;
    let mv = format!("/api/v1/session/{id}/move");
    let (_, v) = call(&app, "POST", &mv, Some(json!({"side": "left", "quantifier": "dia[R]", "witness": ["b"]}))).await;
    assert_eq!(v["status"]["kind"], "finished");
    assert_eq!(v["status"]["winner"], "player1");
    assert_eq!(v["status"]["ongoing"], false);
    let (s, v) = call(&app, "POST", &mv, Some(json!({"side": "left", "quantifier": "dia[R]", "witness": ["b"]}))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["error"]["code"], "game_over");
}

#[tokio::test]
async fn snapshots_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(AppState::new(Some(dir.path().to_path_buf())));
    let id = create(&app, k1_request("a", "a")).await;
    let mv = format!("/api/v1/session/{id}/move");
    call(&app, "POST", &mv, Some(json!({"side": "right", "quantifier": "dia[R]", "witness": ["b"]}))).await;
    call(&app, "POST", &mv, Some(json!({"challenge": "b"}))).await;
    let (_, before) = call(&app, "GET", &format!("/api/v1/session/{id}"), None).await;

    let state = AppState::new(Some(dir.path().to_path_buf()));
    assert_eq!(state.load_snapshots().unwrap(), 1);
    let app2 = router(state);
    let (s, after) = call(&app2, "GET", &format!("/api/v1/session/{id}"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(before, after);
}

#[tokio::test]
async fn concurrent_moves_are_serialized() {
    let app = router(AppState::default());
    let id = create(&app, k1_request("a", "a")).await;
    let mv = format!("/api/v1/session/{id}/move");
    let body = json!({"side": "left", "quantifier": "dia[R]", "witness": ["b"]});
    let tasks: Vec<_> = (0..8)
        .map(|_| {
            let (app, mv, body) = (app.clone(), mv.clone(), body.clone());
            tokio::spawn(async move { call(&app, "POST", &mv, Some(body)).await.0 })
        })
        .collect();
    let mut ok = 0;
    for t in tasks {
        if t.await.unwrap() == StatusCode::OK {
            ok += 1;
        }
    }
    // Only the first witness move is legal; the rest find a pending challenge.
    assert_eq!(ok, 1);
    let (_, v) = call(&app, "GET", &format!("/api/v1/session/{id}"), None).await;
    assert_eq!(v["history"].as_array().unwrap().len(), 2);
}

fn random_doc(rng: &mut StdRng, n: usize) -> Value {
    let names: Vec<String> = (0..n).map(|i| format!("e{i}")).collect();
    let mut r = vec![];
    for x in &names {
        for y in &names {
            if rng.random_bool(0.4) {
                r.push(json!([x, y]));
            }
        }
    }
    let p: Vec<Value> = names.iter().filter(|_| rng.random_bool(0.5)).map(|x| json!([x])).collect();
    json!({"signature": {"R": 2, "P": 1}, "universe": names, "relations": {"R": r, "P": p}})
}

/// Tuples as comma-joined names, all `k`-tuples over `universe`.
fn all_tuples(universe: &[String], k: usize) -> Vec<String> {
    let mut out = vec![String::new()];
    for _ in 0..k {
        out = out
            .iter()
            .flat_map(|p| universe.iter().map(move |e| if p.is_empty() { e.clone() } else { format!("{p},{e}") }))
            .collect();
    }
    out
}

#[tokio::test]
async fn adversarial_play_never_beats_a_safe_engine() {
    let app = router(AppState::default());
    let mut rng = StdRng::seed_from_u64(17);
    let registries = ["dia[R]", "dia[R],all", "dia>=2[R],reach[R]", "cyc[R],some", "ex>=2[x1],dia[R]"];
    let mut moves = 0;
    let mut sessions = 0;
    while moves < 1200 {
        let n = rng.random_range(1..=4);
        let left = random_doc(&mut rng, n);
        // A relabelled copy keeps a bisimilar starting pair available.
        let perm: Vec<usize> = {
            let mut p: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                p.swap(i, rng.random_range(0..=i));
            }
            p
        };
        let rename = |v: &Value| -> Value {
            let s = v.as_str().unwrap();
            let i: usize = s[1..].parse().unwrap();
            json!(format!("f{}", perm[i]))
        };
        let mut right = left.clone();
        right["universe"] = json!((0..n).map(|i| format!("f{i}")).collect::<Vec<_>>());
        for rel in ["R", "P"] {
            let tuples: Vec<Value> = left["relations"][rel]
                .as_array()
                .unwrap()
                .iter()
                .map(|t| Value::Array(t.as_array().unwrap().iter().map(rename).collect()))
                .collect();
            right["relations"][rel] = json!(tuples);
        }
        let alpha_i = rng.random_range(0..n);
        let k = 1;
        let bounded = rng.random_bool(0.3);
        let mut req = json!({
            "left": left, "right": right, "k": k,
            "alpha": format!("e{alpha_i}"), "beta": format!("f{}", perm[alpha_i]),
            "quantifiers": registries[sessions % registries.len()],
        });
        if bounded {
            req["rounds"] = json!(rng.random_range(1..=4));
        }
        let (s, created) = call(&app, "POST", "/api/v1/session", Some(req)).await;
        assert_eq!(s, StatusCode::CREATED, "{created}");
        let st = &created["status"];
        assert!(st["text"] == "Player 2 safe" || st["winner"] == "player2", "{st}");
        let id = created["id"].as_str().unwrap().to_string();
        sessions += 1;
        let quantifiers: Vec<String> = registries[(sessions - 1) % registries.len()].split(',').map(String::from).collect();
        loop {
            let (_, session) = call(&app, "GET", &format!("/api/v1/session/{id}"), None).await;
            if session["status"]["ongoing"] == false {
                assert_eq!(session["status"]["winner"], "player2", "{}", session["status"]);
                break;
            }
            let body = if session["pending"].is_null() {
                let side = if rng.random_bool(0.5) { "left" } else { "right" };
                let q = &quantifiers[rng.random_range(0..quantifiers.len())];
                let uri = format!(
                    "/api/v1/session/{id}/witnesses?side={side}&quantifier={}",
                    q.replace('[', "%5B").replace(']', "%5D").replace('>', "%3E").replace('=', "%3D")
                );
                let (_, list) = call(&app, "GET", &uri, None).await;
                let list = list.as_array().unwrap().clone();
                if list.is_empty() {
                    continue;
                }
                // Sometimes pad a minimal witness with random extra tuples.
                let mut w: Vec<String> =
                    list[rng.random_range(0..list.len())].as_array().unwrap().iter().map(|t| t.as_str().unwrap().to_string()).collect();
                if rng.random_bool(0.3) {
                    let universe: Vec<String> = session[side]["universe"]
                        .as_array()
                        .unwrap()
                        .iter()
                        .map(|e| e.as_str().unwrap().to_string())
                        .collect();
                    for t in all_tuples(&universe, k) {
                        if rng.random_bool(0.3) && !w.contains(&t) {
                            w.push(t);
                        }
                    }
                }
                json!({"side": side, "quantifier": q, "witness": w})
            } else {
                let resp = session["pending"]["response"].as_array().unwrap();
                json!({"challenge": resp[rng.random_range(0..resp.len())]})
            };
            let (s, after) = call(&app, "POST", &format!("/api/v1/session/{id}/move"), Some(body.clone())).await;
            if s == StatusCode::UNPROCESSABLE_ENTITY && after["error"]["code"] == "not_a_witness" {
                // Padded sets are not always witnesses (e.g. cycles, exact counts).
                continue;
            }
            assert_eq!(s, StatusCode::OK, "{body} -> {after}");
            moves += 1;
            assert_ne!(after["status"]["winner"], "player1", "{after}");
            if after["status"]["ongoing"] == true {
                assert_eq!(after["status"]["text"], "Player 2 safe");
            }
            if moves % 97 == 0 {
                break;
            }
        }
    }
    assert!(moves >= 1000);
    assert!(sessions > 5);
}

#[test]
fn replay_reproduces_the_current_state() {
    let req: SessionRequest = serde_json::from_value(json!({
        "left": k1(), "right": k1(), "k": 1, "alpha": "a", "beta": "a", "quantifiers": "dia[R],all"
    }))
    .unwrap();
    let mut s = Session::create("t".into(), req).unwrap();
    let mut rng = StdRng::seed_from_u64(3);
    for _ in 0..20 {
        if s.state().status.is_terminal() {
            break;
        }
        let mv = kq_core::games::challenger_move(s.arena(), &kq_core::games::bisim_in(s.arena()), s.state());
        let Some(mv) = mv else { break };
        let mv = match mv {
            kq_core::games::Move::Challenge { .. } if rng.random_bool(0.5) => {
                let p = s.state().pending.clone().unwrap();
                kq_core::games::Move::Challenge { challenge: p.response.first().unwrap() }
            }
            m => m,
        };
        s.apply(mv).unwrap();
    }
    assert_eq!(&s.replay().unwrap(), s.state());
}
