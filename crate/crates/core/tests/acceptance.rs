//! End-to-end acceptance gate for the analysis lab. One test per criterion;
//! each prints a single `criterion N: PASS` line on success (visible with
//! `--nocapture`) and panics with the failing detail otherwise.
//!
//! Everything here runs on the shipped corpus (`corpus/` at the workspace
//! root) with exact rational arithmetic; sampled modes use fixed seeds so the
//! whole suite is deterministic.

use num::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sfe_core::attack::{
    run_alice_message_distinguisher, run_curious_bob, select_minor, switch_identity_pairs,
    verify_switch_identity, AttackError, MinorSelection,
};
use sfe_core::dsl::{self, ProtocolSpec};
use sfe_core::eve::{audit_independence, lightness_holds};
use sfe_core::exec::{build_tree, measure_semihonest_error, run_once, EvePolicy, TranscriptTree};
use sfe_core::frontier::{
    check_frontier_fullness, check_frontier_ordering, check_minvsnomin, FrontierParams,
};
use sfe_core::func::{
    decompose, is_undecomposable_top_level, synthesize_protocol, DecompNode, Decomposition,
    FunctionTable,
};
use sfe_core::prob::{
    check_blow_lemma, check_close_to_margin, check_inverse_lemma, check_still_prod, key,
    FiniteDistribution, JointDistribution, SequencePath,
};
use sfe_core::ratio::{rat, ratio_str};
use sfe_core::{Rational, Side};
use std::collections::BTreeMap;
use std::time::{Duration, Instant};

fn corpus_path(name: &str) -> String {
    format!("{}/../../corpus/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn table(name: &str) -> FunctionTable {
    FunctionTable::from_json(&std::fs::read_to_string(corpus_path(name)).unwrap()).unwrap()
}

fn protocol(name: &str) -> ProtocolSpec {
    dsl::parse(&std::fs::read_to_string(corpus_path(name)).unwrap()).unwrap()
}

/// The corpus pairs: (function file, protocol file, eavesdropper threshold).
fn corpus_pairs() -> Vec<(&'static str, &'static str, Option<Rational>)> {
    vec![
        ("or.fn", "shared-nonce.sfe", Some(rat(1, 8))),
        ("spiral.fn", "leaky.sfe", None),
        ("spiral.fn", "masked-leak.sfe", Some(rat(1, 8))),
        ("max.fn", "max-plain.sfe", None),
    ]
}

fn pair_tree(f: &FunctionTable, spec: &ProtocolSpec, eps: &Option<Rational>) -> TranscriptTree {
    build_tree(
        spec,
        f.x_labels.len(),
        f.y_labels.len(),
        eps.clone().map(EvePolicy::new),
    )
    .unwrap()
}

/// Fixed fallback minor when the frontier segment is empty or unlinked:
/// f(x0,y0) = f(x1,y0) while f(x0,y1) != f(x1,y1), lexicographically least.
fn fallback_minor(f: &FunctionTable) -> MinorSelection {
    for x0 in 0..f.x_labels.len() {
        for x1 in (x0 + 1)..f.x_labels.len() {
            for y0 in 0..f.y_labels.len() {
                if f.sym(x0, y0) != f.sym(x1, y0) {
                    continue;
                }
                for y1 in 0..f.y_labels.len() {
                    if f.sym(x0, y1) != f.sym(x1, y1) {
                        return MinorSelection { x0, x1, y0, y1 };
                    }
                }
            }
        }
    }
    panic!("corpus table has no 2x2 minor");
}

fn check_under(start: Instant, limit: Duration, what: &str) {
    let elapsed = start.elapsed();
    assert!(elapsed <= limit, "{what} took {elapsed:?} (limit {limit:?})");
}

#[test]
fn criterion_1_golden_corpus_combinatorics() {
    let start = Instant::now();
    let expected = DecompNode::Internal {
        side: Side::Alice,
        blocks: vec![vec!["1".into(), "3".into()], vec!["5".into()]],
        children: vec![
            DecompNode::Internal {
                side: Side::Bob,
                blocks: vec![vec!["0".into(), "2".into()], vec!["4".into()]],
                children: vec![
                    DecompNode::Internal {
                        side: Side::Alice,
                        blocks: vec![vec!["1".into()], vec!["3".into()]],
                        children: vec![
                            DecompNode::Internal {
                                side: Side::Bob,
                                blocks: vec![vec!["0".into()], vec!["2".into()]],
                                children: vec![
                                    DecompNode::Leaf { output: "1".into() },
                                    DecompNode::Leaf { output: "2".into() },
                                ],
                            },
                            DecompNode::Leaf { output: "3".into() },
                        ],
                    },
                    DecompNode::Leaf { output: "4".into() },
                ],
            },
            DecompNode::Leaf { output: "5".into() },
        ],
    };
    match decompose(&table("max.fn")).unwrap() {
        Decomposition::Tree(t) => {
            assert_eq!(t.depth(), 4);
            assert_eq!(t.root, expected);
        }
        other => panic!("max must decompose, got {other:?}"),
    }
    for name in ["or.fn", "spiral.fn", "weave.fn"] {
        let f = table(name);
        assert!(
            is_undecomposable_top_level(&f).unwrap(),
            "{name} must be top-level undecomposable"
        );
        assert!(
            matches!(decompose(&f).unwrap(), Decomposition::Undecomposable { .. }),
            "{name} must not decompose"
        );
    }
    check_under(start, Duration::from_secs(1), "criterion 1");
    println!("criterion 1: PASS (max reference tree; or/spiral/weave undecomposable)");
}

/// Exhaustive small-table family: all 2x2 tables over a 5-letter output
/// alphabet and all 2x3 tables over a 2-letter alphabet.
fn small_table_family() -> Vec<FunctionTable> {
    let mut out = Vec::new();
    let mk = |nx: usize, ny: usize, cells: &[usize]| {
        FunctionTable::symmetric(
            (0..nx).map(|i| i.to_string()).collect(),
            (0..ny).map(|j| j.to_string()).collect(),
            (0..nx)
                .map(|i| (0..ny).map(|j| cells[i * ny + j].to_string()).collect())
                .collect(),
        )
        .unwrap()
    };
    for code in 0..5usize.pow(4) {
        let cells: Vec<usize> = (0..4).map(|k| code / 5usize.pow(k) % 5).collect();
        out.push(mk(2, 2, &cells));
    }
    for code in 0..2usize.pow(6) {
        let cells: Vec<usize> = (0..6).map(|k| code >> k & 1).collect();
        out.push(mk(2, 3, &cells));
    }
    out
}

#[test]
fn criterion_2_perfect_security_of_synthesized_protocols() {
    let start = Instant::now();
    let mut checked = 0usize;
    for f in small_table_family() {
        let tree = match decompose(&f).unwrap() {
            Decomposition::Tree(t) => t,
            Decomposition::Undecomposable { .. } => continue,
        };
        let spec = synthesize_protocol(&tree);
        let t = build_tree(&spec, f.x_labels.len(), f.y_labels.len(), None).unwrap();
        let s = measure_semihonest_error(&t, &f).unwrap();
        assert!(
            s.correctness_error.is_zero() && s.alice_error.is_zero() && s.bob_error.is_zero(),
            "synthesized protocol for {} not perfectly secure: {s:?}",
            f.to_json()
        );
        checked += 1;
    }
    assert!(checked >= 200, "only {checked} decomposable tables in the family");
    check_under(start, Duration::from_secs(300), "criterion 2");
    println!("criterion 2: PASS ({checked} decomposable tables, all errors exactly 0)");
}

fn random_dist(rng: &mut ChaCha8Rng, outcomes: &[&str]) -> FiniteDistribution {
    loop {
        let w: Vec<i64> = outcomes.iter().map(|_| rng.gen_range(0..10)).collect();
        let total: i64 = w.iter().sum();
        if total == 0 {
            continue;
        }
        return FiniteDistribution::from_pairs(
            outcomes
                .iter()
                .zip(&w)
                .map(|(o, wi)| (key(o), rat(*wi, total))),
        )
        .unwrap();
    }
}

fn random_joint(rng: &mut ChaCha8Rng, left: &[&str], right: &[&str]) -> JointDistribution {
    loop {
        let w: Vec<i64> = (0..left.len() * right.len())
            .map(|_| rng.gen_range(0..10))
            .collect();
        let total: i64 = w.iter().sum();
        if total == 0 {
            continue;
        }
        let mut pairs = Vec::new();
        for (i, l) in left.iter().enumerate() {
            for (j, r) in right.iter().enumerate() {
                pairs.push(((key(l), key(r)), rat(w[i * right.len() + j], total)));
            }
        }
        return JointDistribution::from_pairs(pairs).unwrap();
    }
}

#[test]
fn criterion_3_lemma_suite_randomized() {
    let start = Instant::now();
    let outcomes = ["a", "b", "c", "d"];
    let mut rng = ChaCha8Rng::seed_from_u64(0);

    // First-crossing lemma on random weighted message trees.
    for case in 0..1000 {
        let paths = loop {
            let k = rng.gen_range(2..7usize);
            let w: Vec<i64> = (0..k).map(|_| rng.gen_range(0..10)).collect();
            let total: i64 = w.iter().sum();
            if total == 0 {
                continue;
            }
            let paths: Vec<SequencePath> = (0..k)
                .map(|i| {
                    let len = rng.gen_range(1..4usize);
                    SequencePath {
                        msgs: (0..len)
                            .map(|_| key(outcomes[rng.gen_range(0..outcomes.len())]))
                            .collect(),
                        event_x: rng.gen_bool(0.5),
                        prob: rat(w[i], total),
                    }
                })
                .collect();
            if paths.iter().any(|p| p.event_x && p.prob.is_positive()) {
                break paths;
            }
        };
        let theta = rat(rng.gen_range(1..8), 8);
        let res = check_inverse_lemma(&paths, &theta).unwrap();
        assert!(res.holds, "inverse lemma failed on case {case}");
    }

    // Conditioning blow-up lemma.
    for case in 0..1000 {
        let (a, b, event, delta) = loop {
            let a = random_dist(&mut rng, &outcomes);
            let b = random_dist(&mut rng, &outcomes);
            let event: std::collections::BTreeSet<_> = outcomes
                .iter()
                .filter(|_| rng.gen_bool(0.5))
                .map(|o| key(o))
                .collect();
            let pa = a.event_mass(|k| event.contains(k));
            let pb = b.event_mass(|k| event.contains(k));
            if pa.is_positive() && pb.is_positive() {
                break (a, b, event, pa);
            }
        };
        let res = check_blow_lemma(&a, &b, &event, &delta).unwrap();
        assert!(res.holds, "blow lemma failed on case {case}");
    }

    // Near-product lemma.
    for case in 0..1000 {
        let joint = random_joint(&mut rng, &outcomes[..3], &outcomes[..3]);
        let u = random_dist(&mut rng, &outcomes[..3]);
        let v = random_dist(&mut rng, &outcomes[..3]);
        let res = check_close_to_margin(&joint, &u, &v);
        assert!(res.holds, "close-to-margin failed on case {case}");
    }

    // Resampling lemma with a random leak channel.
    for case in 0..1000 {
        let joint = random_joint(&mut rng, &outcomes[..3], &outcomes[..3]);
        let leaks: BTreeMap<Vec<u8>, FiniteDistribution> = outcomes[..3]
            .iter()
            .map(|o| (key(o), random_dist(&mut rng, &["l0", "l1"])))
            .collect();
        let res = check_still_prod(&joint, &|b| leaks[b].clone());
        assert!(res.holds, "still-prod failed on case {case}");
    }

    check_under(start, Duration::from_secs(60), "criterion 3");
    println!("criterion 3: PASS (4 lemma checkers x 1000 randomized instances)");
}

#[test]
fn criterion_4_eve_contract_audit() {
    let f = table("or.fn");
    let spec = protocol("shared-nonce.sfe");
    let eps = rat(1, 8);

    let on = pair_tree(&f, &spec, &Some(eps.clone()));
    let report = audit_independence(&on, &eps);
    assert!(report.pass);
    for round in &report.rounds {
        assert!(round.violation_mass.is_zero(), "eve-on round {round:?}");
    }
    assert!(lightness_holds(&on));

    let off = pair_tree(&f, &spec, &None);
    let report = audit_independence(&off, &eps);
    assert!(!report.pass);
    // Pinned exact masses: the shared nonce correlates the views in every
    // round after the first once nobody publishes the oracle answer.
    let masses: Vec<String> = report
        .rounds
        .iter()
        .map(|r| ratio_str(&r.violation_mass))
        .collect();
    assert_eq!(masses, ["0/1", "1/1", "1/1"]);
    assert_eq!(ratio_str(&report.rounds[1].worst_value), "1/2");
    println!("criterion 4: PASS (eve on: all masses 0; eve off: masses 0,1,1 with worst SD 1/2)");
}

/// The minor each corpus pair is attacked with: frontier-driven when the
/// selection succeeds, the fixed table fallback otherwise.
fn pair_minor(tree: &TranscriptTree, f: &FunctionTable, params: &FrontierParams) -> MinorSelection {
    match select_minor(tree, f, params) {
        Ok(seg) => seg.minor,
        Err(AttackError::EmptySegment | AttackError::HypothesisViolated(_)) => fallback_minor(f),
        Err(e) => panic!("{e}"),
    }
}

#[test]
fn criterion_5_switch_identity_on_every_corpus_protocol() {
    let start = Instant::now();
    let mut total_checked = 0usize;
    for (fname, pname, eps) in corpus_pairs() {
        let f = table(fname);
        let spec = protocol(pname);
        let tree = pair_tree(&f, &spec, &eps);
        let params = FrontierParams::defaults(&tree);
        let minor = pair_minor(&tree, &f, &params);
        for (w, u) in switch_identity_pairs(&tree, &params) {
            match verify_switch_identity(&tree, &minor, &w, &u) {
                Ok(check) => {
                    assert!(
                        check.holds,
                        "{pname}: identity broken at w/u with lhs {} rhs {}",
                        ratio_str(&check.lhs),
                        ratio_str(&check.rhs)
                    );
                    total_checked += 1;
                }
                // Pairs without positive safe mass on both sides are out of
                // scope by definition.
                Err(AttackError::ZeroConditioning) => {}
                Err(e) => panic!("{pname}: {e}"),
            }
        }
    }
    assert!(total_checked > 0, "no pair had positive safe mass anywhere");
    check_under(start, Duration::from_secs(120), "criterion 5");
    println!("criterion 5: PASS ({total_checked} (w,u) pairs, all exact equalities)");
}

#[test]
fn criterion_6_claim_constants_on_the_corpus() {
    for (fname, pname, eps) in corpus_pairs() {
        let f = table(fname);
        if !is_undecomposable_top_level(&f).unwrap() {
            continue;
        }
        let spec = protocol(pname);
        let tree = pair_tree(&f, &spec, &eps);
        let params = FrontierParams::defaults(&tree);
        let fullness = check_frontier_fullness(&tree, &f, &params).unwrap();
        assert!(
            fullness.holds,
            "{fname}+{pname} fullness: lhs {} rhs {}",
            ratio_str(&fullness.lhs),
            ratio_str(&fullness.rhs)
        );
        let mvn = check_minvsnomin(&tree, &params);
        assert!(
            mvn.holds,
            "{fname}+{pname} min-vs-nomin: lhs {} rhs {}",
            ratio_str(&mvn.lhs),
            ratio_str(&mvn.rhs)
        );
    }
    println!("criterion 6: PASS (fullness and min-vs-nomin hold on every eligible pair)");
}

#[test]
fn criterion_7_attack_effectiveness_contrast() {
    // Leaky reference protocol: the message distinguisher separates the
    // distinguished inputs perfectly (pinned advantage 1), and the masked
    // variant gives the curious explorer a pinned advantage of 3/4.
    let f = table("spiral.fn");
    let tree = pair_tree(&f, &protocol("leaky.sfe"), &None);
    let params = FrontierParams::defaults(&tree);
    let seg = select_minor(&tree, &f, &params).unwrap();
    assert_eq!(seg.minor, MinorSelection { x0: 0, x1: 1, y0: 2, y1: 0 });
    let report = run_alice_message_distinguisher(&tree, &f, &seg, &params).unwrap();
    assert!(report.advantage.is_one(), "pinned leaky advantage must be 1");
    assert_eq!(report.bound_holds, Some(true));
    let ordering = check_frontier_ordering(&tree, &params);
    assert!(ordering.holds, "three-event cover broken on leaky run");

    let eps = Some(rat(1, 8));
    let masked = pair_tree(&f, &protocol("masked-leak.sfe"), &eps);
    let mparams = FrontierParams::defaults(&masked);
    let mseg = select_minor(&masked, &f, &mparams).unwrap();
    let mreport = run_curious_bob(&masked, &mseg, &mparams).unwrap();
    assert_eq!(mreport.advantage, rat(3, 4), "pinned masked-leak advantage");
    let mordering = check_frontier_ordering(&masked, &mparams);
    assert!(mordering.holds, "three-event cover broken on masked-leak run");

    // Perfectly secure synthesized protocol: no frontier-driven minor
    // exists, and the fallback minor's segment is empty, so both strategies
    // have advantage exactly 0. The cover inequality still holds (0 <= rhs).
    let fm = table("max.fn");
    let mtree = pair_tree(&fm, &protocol("max-plain.sfe"), &None);
    let pparams = FrontierParams::defaults(&mtree);
    assert!(matches!(
        select_minor(&mtree, &fm, &pparams),
        Err(AttackError::HypothesisViolated(_) | AttackError::EmptySegment)
    ));
    let cover = check_frontier_ordering(&mtree, &pparams);
    assert!(cover.holds, "three-event cover broken on max run");
    println!(
        "criterion 7: PASS (leaky advantage 1, masked-leak advantage 3/4, max advantage 0)"
    );
}

#[test]
fn criterion_8_sampling_consistency() {
    const N: usize = 100_000;
    let n = rat(N as i64, 1);
    // A count agrees with an exact probability within 3 sigma iff
    // (count - Np)^2 <= 9 N p (1-p), evaluated in exact rationals.
    let within_3_sigma = |count: i64, p: &Rational| -> bool {
        let dev = rat(count, 1) - n.clone() * p.clone();
        dev.clone() * dev <= rat(9, 1) * n.clone() * p.clone() * (Rational::one() - p.clone())
    };

    for (fname, pname, eps) in corpus_pairs() {
        let f = table(fname);
        let spec = protocol(pname);
        let tree = pair_tree(&f, &spec, &eps);
        // Exact transcript distribution at inputs (0, 0); the reference event
        // is the lexicographically least transcript in the support.
        let mut exact: BTreeMap<Vec<sfe_core::exec::TreeMsg>, Rational> = BTreeMap::new();
        for leaf in &tree.leaves {
            if leaf.xi == 0 && leaf.yi == 0 {
                *exact.entry(leaf.msgs.clone()).or_insert_with(Rational::zero) +=
                    leaf.weight.clone();
            }
        }
        let (reference, p_ref) = exact.iter().next().unwrap();
        for seed in 0u64..3 {
            let mut ref_count = 0i64;
            for i in 0..N {
                let trace = run_once(
                    &spec,
                    0,
                    0,
                    eps.as_ref().map(|_| &tree),
                    seed * N as u64 + i as u64,
                )
                .unwrap();
                assert!(
                    exact.contains_key(&trace.msgs),
                    "{pname} seed {seed}: sampled a transcript outside the exact support"
                );
                if trace.msgs == *reference {
                    ref_count += 1;
                }
            }
            assert!(
                within_3_sigma(ref_count, p_ref),
                "{pname} seed {seed}: reference transcript count {ref_count} vs p = {}",
                ratio_str(p_ref)
            );
        }
    }

    // Sampled curious explorer vs the exact hit probabilities (3/4 and 0)
    // on the masked-leak instance.
    let f = table("spiral.fn");
    let spec = protocol("masked-leak.sfe");
    let tree = pair_tree(&f, &spec, &Some(rat(1, 8)));
    let params = FrontierParams::defaults(&tree);
    let seg = select_minor(&tree, &f, &params).unwrap();
    for seed in 0u64..3 {
        let report =
            sfe_core::attack::run_curious_bob_sampled(&tree, &seg, &params, seed, N).unwrap();
        let hits0 = (report.p_hit_x0.clone() * n.clone()).to_integer();
        let hits0 = i64::try_from(hits0).unwrap();
        assert!(
            within_3_sigma(hits0, &rat(3, 4)),
            "curious explorer seed {seed}: {hits0} hits vs exact 3/4"
        );
        assert!(
            report.p_hit_x1.is_zero(),
            "curious explorer seed {seed}: impossible hits under the agreeing input"
        );
    }
    println!(
        "criterion 8: PASS (reference transcript and curious-explorer frequencies \
         within 3 sigma on seeds 0..3)"
    );
}
