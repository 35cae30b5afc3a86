use std::path::PathBuf;

use clap::Parser;
use kq_cli::commands::{self, Cli, Command};

fn data(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "data", name].iter().collect();
    p.to_string_lossy().into_owned()
}

fn run(args: &[&str]) -> commands::Output {
    let cli = Cli::try_parse_from(std::iter::once("kq").chain(args.iter().copied())).unwrap();
    match &cli.command {
        Command::Check(a) => commands::check(a),
        Command::Bisim(a) => commands::bisim(a),
        Command::Charform(a) => commands::charform(a),
        Command::Distinguish(a) => commands::distinguish(a),
        Command::Product(a) => commands::product(a),
        Command::Verify(a) => commands::verify(a),
        Command::Serve(_) => unreachable!(),
    }
    .unwrap()
}

#[test]
fn check_exit_codes() {
    let k1 = data("k1.json");
    let out = run(&["check", &k1, "--alpha", "a", "--formula", "dia[R] P(x1)"]);
    assert_eq!((out.text.as_str(), out.code), ("true\n", 0));
    let out = run(&["check", &k1, "--alpha", "c", "--formula", "dia[R] true"]);
    assert_eq!((out.text.as_str(), out.code), ("false\n", 1));
}

#[test]
fn check_trace_lists_subformulae() {
    let out = run(&["check", &data("k1.json"), "--alpha", "a", "--formula", "dia[R] P(x1)", "--trace"]);
    assert_eq!(out.text, "P(x1)\t{(b)}\ndia[R] P(x1)\t{(a)}\ntrue\n");
}

#[test]
fn check_pairs_with_k2() {
    let out = run(&["check", &data("k1.json"), "--k", "2", "--alpha", "a,b", "--formula", "R(x1,x2)"]);
    assert_eq!(out.code, 0);
}

#[test]
fn bisim_verdict_and_failure_round() {
    let k1 = data("k1.json");
    let out = run(&["bisim", &k1, &k1, "--alpha", "a", "--beta", "c", "--quantifiers", "dia[R]"]);
    assert_eq!(out.text, "not bisimilar\nfailure round: 1\n");
    let out = run(&["bisim", &k1, &k1, "--alpha", "a", "--beta", "a"]);
    assert_eq!(out.text, "bisimilar\n");
    let out = run(&["bisim", &k1, &k1, "--rounds", "0", "--alpha", "a", "--beta", "c"]);
    assert!(out.text.starts_with("bisimilar up to 0 rounds"));
}

#[test]
fn bisim_relation_listing() {
    let k1 = data("k1.json");
    let out = run(&["bisim", &k1, &k1]);
    assert_eq!(out.text, "(a) ~ (a)\n(b) ~ (b)\n(c) ~ (c)\nstabilized at round 1\n");
}

#[test]
fn strategy_table_is_json() {
    let k1 = data("k1.json");
    let out = run(&["bisim", &k1, &k1, "--strategy"]);
    let v: serde_json::Value = serde_json::from_str(&out.text).unwrap();
    assert!(v.as_array().unwrap().iter().any(|e| e["left"] == "a" && e["witness"] == serde_json::json!(["b"])));
}

#[test]
fn distinguish_prints_separator_or_bisimilar() {
    let k1 = data("k1.json");
    let out = run(&["distinguish", &k1, &k1, "--alpha", "a", "--beta", "c"]);
    assert!(out.text.contains("dia[R]"), "{}", out.text);
    let out = run(&["distinguish", &k1, &k1, "--alpha", "b", "--beta", "b"]);
    assert_eq!(out.text, "bisimilar\n");
}

#[test]
fn charform_rank_zero() {
    let k1 = data("k1.json");
    let out = run(&["charform", &k1, "--alpha", "a", "--rank", "0", "--universe", &k1]);
    assert_eq!(out.text, "(true & (!R(x1,x1) & !P(x1)))\n");
}

#[test]
fn principal_product_and_los() {
    let (k1, lp, tc) = (data("k1.json"), data("loop.json"), data("two_cycle.json"));
    let out = run(&["product", &k1, &lp, &tc, "--principal", "1"]);
    let v: serde_json::Value = serde_json::from_str(&out.text).unwrap();
    assert_eq!(v["universe"].as_array().unwrap().len(), 1);
    let out = run(&[
        "product", &k1, &lp, &tc, "--filter", &data("filter3.json"), "--los", "--formula", "P(x1)", "--alphas", "b;u;v",
    ]);
    let v: serde_json::Value = serde_json::from_str(&out.text).unwrap();
    assert_eq!(v["agree"], true);
    assert_eq!(v["product_side"], true);
}

#[test]
fn verify_json_report() {
    let out = run(&["verify", "ef", "--count", "12", "--seed", "5", "--json"]);
    assert_eq!(out.code, 0);
    let v: serde_json::Value = serde_json::from_str(&out.text).unwrap();
    assert_eq!(v["suite"], "ef");
    assert_eq!(v["passed"], true);
    assert_eq!(v["instances"], 12);
}

#[test]
fn verify_with_selected_quantifiers() {
    let out = run(&["verify", "hm", "--count", "10", "--quantifiers", "reach[R]", "--max-size", "3"]);
    assert_eq!(out.code, 0, "{}", out.text);
    assert!(out.text.starts_with("PASS hm"));
}
