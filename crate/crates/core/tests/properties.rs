use std::collections::BTreeSet;
use std::sync::Arc;

use indexmap::IndexMap;
use kq_core::charform::{distinguishing_formula, normal_form, CharContext};
use kq_core::games::bisim_rank;
use kq_core::model::permute_elements;
use kq_core::semantics::ModelChecker;
use kq_core::{parse_formula, print_formula, BitSet, Formula, QuantifierDef, QuantifierRef, Signature, Structure};
use proptest::prelude::*;

fn sig() -> Signature {
    Signature::from_pairs([("R", 2), ("P", 1)]).unwrap()
}

fn structure() -> impl Strategy<Value = Structure> {
    (1usize..=3)
        .prop_flat_map(|n| (Just(n), prop::collection::vec(any::<bool>(), n * n), prop::collection::vec(any::<bool>(), n)))
        .prop_map(|(n, r, p)| {
            let mut rel: IndexMap<String, BTreeSet<Vec<usize>>> = IndexMap::new();
            rel.insert(
                "R".into(),
                (0..n * n).filter(|&i| r[i]).map(|i| vec![i / n, i % n]).collect(),
            );
            rel.insert("P".into(), (0..n).filter(|&i| p[i]).map(|i| vec![i]).collect());
            Structure::from_index_tuples(sig(), (0..n).map(|i| format!("e{i}")).collect(), rel)
        })
}

fn quantifier() -> impl Strategy<Value = QuantifierRef> {
    prop_oneof![
        Just(QuantifierRef::Diamond { relation: "R".into() }),
        Just(QuantifierRef::DiamondAtLeast { n: 2, relation: "R".into() }),
        Just(QuantifierRef::Universal),
        Just(QuantifierRef::Existential),
        Just(QuantifierRef::Reach { relation: "R".into() }),
        Just(QuantifierRef::Cycle { relation: "R".into() }),
        Just(QuantifierRef::CountAtLeast { n: 2, var: 1 }),
    ]
}

fn formula() -> impl Strategy<Value = Formula> {
    let leaf = prop_oneof![
        Just(Formula::Top),
        Just(Formula::atom("P", vec![1])),
        Just(Formula::atom("R", vec![1, 1])),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|f| Formula::Not(Arc::new(f))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::And(Arc::new(a), Arc::new(b))),
            (quantifier(), inner).prop_map(|(q, f)| Formula::Quant(q, Arc::new(f))),
        ]
    })
}

fn registry() -> Vec<QuantifierDef> {
    QuantifierDef::parse_list("dia[R], all, ex>=2[x1]", 1).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn print_parse_round_trip(f in formula()) {
        let text = print_formula(&f);
        let back = parse_formula(&text, 1, &sig()).unwrap();
        prop_assert_eq!(back, f);
    }

    #[test]
    fn truth_ignores_listing_order(s in structure(), f in formula(), seed in any::<u64>()) {
        let n = s.len();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.rotate_left((seed as usize) % n);
        let t = permute_elements(&s, &perm);
        let es = ModelChecker::new(&s, 1).extension(&f).unwrap();
        let et = ModelChecker::new(&t, 1).extension(&f).unwrap();
        for a in 0..n {
            let b = t.element(s.name(a)).unwrap();
            prop_assert_eq!(es.contains(a), et.contains(b));
        }
    }

    #[test]
    fn flat_teams_are_downward_closed(s in structure(), f in formula(), bits in any::<u8>()) {
        let mut mc = ModelChecker::new(&s, 1);
        let n = s.len();
        prop_assert!(mc.eval_team(&BitSet::new(n), &f).unwrap());
        let team = BitSet::from_indices(n, (0..n).filter(|i| bits & (1 << i) != 0));
        if mc.eval_team(&team, &f).unwrap() {
            for x in team.iter() {
                let mut sub = team.clone();
                sub.remove(x);
                prop_assert!(mc.eval_team(&sub, &f).unwrap());
            }
        }
    }

    #[test]
    fn game_relation_refines(a in structure(), b in structure()) {
        let rel = bisim_rank(&a, &b, 1, 3, &registry()).unwrap();
        for x in 0..a.len() {
            for y in 0..b.len() {
                for r in 0..3 {
                    prop_assert!(!rel.holds(r + 1, x, y) || rel.holds(r, x, y));
                }
            }
        }
    }

    #[test]
    fn self_game_is_an_equivalence(a in structure()) {
        let rel = bisim_rank(&a, &a, 1, 3, &registry()).unwrap();
        let n = a.len();
        for r in 0..=3 {
            for x in 0..n {
                prop_assert!(rel.holds(r, x, x));
                for y in 0..n {
                    prop_assert_eq!(rel.holds(r, x, y), rel.holds(r, y, x));
                    for z in 0..n {
                        prop_assert!(!(rel.holds(r, x, y) && rel.holds(r, y, z)) || rel.holds(r, x, z));
                    }
                }
            }
        }
    }

    #[test]
    fn distinguishing_formula_separates(a in structure(), b in structure(), x in 0usize..3, y in 0usize..3) {
        let (x, y) = (x % a.len(), y % b.len());
        let ctx = CharContext::new(vec![a.clone(), b.clone()], registry(), 1).unwrap();
        let alpha = kq_core::Assignment::new(vec![x]);
        let beta = kq_core::Assignment::new(vec![y]);
        let rel = bisim_rank(&a, &b, 1, a.len() + b.len(), &registry()).unwrap();
        match distinguishing_formula(&ctx, &a, &alpha, &b, &beta).unwrap() {
            None => prop_assert!(rel.holds(a.len() + b.len(), x, y)),
            Some(f) => {
                prop_assert!(ModelChecker::new(&a, 1).extension(&f).unwrap().contains(x));
                prop_assert!(!ModelChecker::new(&b, 1).extension(&f).unwrap().contains(y));
            }
        }
    }

    #[test]
    fn normal_form_is_equivalent(a in structure(), b in structure(), f in formula()) {
        let reg: Vec<QuantifierDef> = f
            .quantifiers()
            .into_iter()
            .map(|q| QuantifierDef::new(q, 1).unwrap())
            .collect();
        let ctx = CharContext::new(vec![a.clone(), b.clone()], reg, 1).unwrap();
        let nf = normal_form(&ctx, &f).unwrap();
        prop_assert!(nf.quantifier_rank() <= f.quantifier_rank());
        for s in [&a, &b] {
            let mut mc = ModelChecker::new(s, 1);
            prop_assert_eq!(mc.extension(&f).unwrap(), mc.extension(&nf).unwrap());
        }
    }
}
