//! Property tests for the consensus math, credibility normalization, and
//! gateway ledger under contention.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use proptest::prelude::*;

use bibagent_core::gateway::{
    CompletionRequest, DecodingConfig, Gateway, StubBackend, StubOptions,
};
use bibagent_core::icsv::{
    aggregate_consensus, assign_credibility, calibrate_confidence, AbstentionTrigger,
    AspectCluster, Relation, K_MIN, T_SUPPORT,
};
use bibagent_core::model::{precedence_min, TaxonomyCode, VerdictLabel};

fn cluster(id: usize, papers: &[usize], gamma: f64) -> AspectCluster {
    AspectCluster {
        cluster_id: format!("C{id}"),
        cluster_name: format!("aspect {id}"),
        aspect_summary: String::new(),
        claim_ids: vec![id + 1],
        source_papers: papers.iter().map(|p| format!("w{p}")).collect::<BTreeSet<_>>(),
        evidence_statement: format!("evidence {id}"),
        gamma,
    }
}

/// Clusters over a shared witness pool plus positive per-witness influences.
fn committee_strategy() -> impl Strategy<
    Value = (Vec<AspectCluster>, BTreeMap<String, (f64, bool)>),
> {
    (1usize..8, 1usize..12).prop_flat_map(|(k, n_papers)| {
        let clusters = prop::collection::vec(
            prop::collection::btree_set(0..n_papers, 1..=n_papers),
            k..=k,
        );
        let influences = prop::collection::vec(0.0f64..5.0, n_papers..=n_papers);
        (clusters, influences).prop_map(|(memberships, weights)| {
            let clusters: Vec<AspectCluster> = memberships
                .into_iter()
                .enumerate()
                .map(|(i, papers)| {
                    let papers: Vec<usize> = papers.into_iter().collect();
                    cluster(i, &papers, 0.0)
                })
                .collect();
            let influences: BTreeMap<String, (f64, bool)> = weights
                .into_iter()
                .enumerate()
                .map(|(p, w)| (format!("w{p}"), (w, false)))
                .collect();
            (clusters, influences)
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn credibility_weights_sum_to_one((mut clusters, influences) in committee_strategy()) {
        assign_credibility(&mut clusters, &influences);
        let total: f64 = clusters.iter().map(|c| c.gamma).sum();
        prop_assert!((total - 1.0).abs() < 1e-9, "sum = {total}");
        prop_assert!(clusters.iter().all(|c| c.gamma >= 0.0));
    }

    #[test]
    fn credibility_is_scale_invariant(
        (mut clusters, influences) in committee_strategy(),
        scale in 0.1f64..50.0,
    ) {
        let mut scaled_clusters = clusters.clone();
        let scaled: BTreeMap<String, (f64, bool)> = influences
            .iter()
            .map(|(k, (v, f))| (k.clone(), (v * scale, *f)))
            .collect();
        assign_credibility(&mut clusters, &influences);
        assign_credibility(&mut scaled_clusters, &scaled);
        for (a, b) in clusters.iter().zip(&scaled_clusters) {
            prop_assert!((a.gamma - b.gamma).abs() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn consensus_score_is_bounded_and_odd(
        (mut clusters, influences) in committee_strategy(),
        seed_votes in prop::collection::vec((-1i8..=1, 0.34f64..=1.0), 8),
    ) {
        assign_credibility(&mut clusters, &influences);
        let relations: Vec<Relation> = clusters
            .iter()
            .zip(seed_votes.iter().cycle())
            .map(|(_, (v, s))| Relation { vote: *v, stability: *s })
            .collect();
        let (v, _) = aggregate_consensus(&clusters, &relations);
        prop_assert!((-1.0..=1.0).contains(&v), "v_final = {v}");

        let negated: Vec<Relation> = relations
            .iter()
            .map(|r| Relation { vote: -r.vote, stability: r.stability })
            .collect();
        let (v_neg, _) = aggregate_consensus(&clusters, &negated);
        prop_assert!((v + v_neg).abs() < 1e-12, "negation must flip the score");
    }

    #[test]
    fn calibration_outputs_stay_in_range(
        (mut clusters, influences) in committee_strategy(),
        votes in prop::collection::vec((-1i8..=1, 0.34f64..=1.0), 8),
        committee_size in 1usize..20,
    ) {
        assign_credibility(&mut clusters, &influences);
        let relations: Vec<Relation> = clusters
            .iter()
            .zip(votes.iter().cycle())
            .map(|(_, (v, s))| Relation { vote: *v, stability: *s })
            .collect();
        let (v, provisional) = aggregate_consensus(&clusters, &relations);
        let verdict = calibrate_confidence(&clusters, &relations, v, committee_size);

        let k = clusters.len() as f64;
        prop_assert!(verdict.n_eff >= 1.0 - 1e-9 && verdict.n_eff <= k + 1e-9);
        prop_assert!((0.0..=1.0).contains(&verdict.entropy));
        prop_assert!((0.0..=1.0).contains(&verdict.conf));
        prop_assert!((0.0..=1.0).contains(&verdict.a_bar));

        if verdict.abstention_triggers.is_empty() {
            prop_assert_eq!(verdict.verdict, provisional);
            prop_assert!(committee_size >= K_MIN);
            prop_assert!(v.abs() > T_SUPPORT);
        } else {
            prop_assert_eq!(verdict.verdict, VerdictLabel::Undecidable);
        }
        if committee_size < K_MIN {
            prop_assert!(verdict
                .abstention_triggers
                .contains(&AbstentionTrigger::InsufficientWitnesses));
        }
        if v == 0.0 {
            prop_assert_eq!(verdict.conf, 0.0);
        }
    }

    #[test]
    fn uniform_weights_maximize_effective_clusters(k in 1usize..12) {
        let gamma = 1.0 / k as f64;
        let clusters: Vec<AspectCluster> =
            (0..k).map(|i| cluster(i, &[i], gamma)).collect();
        let relations: Vec<Relation> =
            (0..k).map(|_| Relation { vote: 1, stability: 1.0 }).collect();
        let verdict = calibrate_confidence(&clusters, &relations, 1.0, 10);
        prop_assert!((verdict.n_eff - k as f64).abs() < 1e-9);
    }

    #[test]
    fn unanimous_committee_has_zero_entropy(
        k in 1usize..8,
        vote in -1i8..=1,
    ) {
        let gamma = 1.0 / k as f64;
        let clusters: Vec<AspectCluster> =
            (0..k).map(|i| cluster(i, &[i], gamma)).collect();
        let relations: Vec<Relation> =
            (0..k).map(|_| Relation { vote, stability: 1.0 }).collect();
        let (v, _) = aggregate_consensus(&clusters, &relations);
        let verdict = calibrate_confidence(&clusters, &relations, v, 10);
        prop_assert!(verdict.entropy < 1e-9, "H = {}", verdict.entropy);
    }

    #[test]
    fn precedence_min_is_minimal_over_any_subset(
        subset in prop::collection::btree_set(0usize..5, 1..=5),
    ) {
        let codes: Vec<TaxonomyCode> =
            subset.iter().map(|&i| TaxonomyCode::ALL[i]).collect();
        let winner = precedence_min(codes.iter().copied()).unwrap();
        for code in &codes {
            prop_assert!(winner.precedence_rank() <= code.precedence_rank());
        }
        prop_assert!(codes.contains(&winner));
    }
}

#[test]
fn ledger_is_consistent_under_heavy_contention() {
    let gateway = Arc::new(Gateway::new(Box::new(StubBackend::new(
        "stub",
        StubOptions::default(),
    ))));
    let threads = 64;
    let per_thread = 8;
    let handles: Vec<_> = (0..threads)
        .map(|t| {
            let gateway = Arc::clone(&gateway);
            std::thread::spawn(move || {
                for i in 0..per_thread {
                    let request = CompletionRequest::text(
                        "system",
                        format!("probe {t}-{i}"),
                        DecodingConfig::deterministic(t as u64),
                        format!("stress/probe@t{t}"),
                    );
                    gateway.complete(&request).unwrap();
                }
            })
        })
        .collect();
    for handle in handles {
        handle.join().unwrap();
    }
    assert_eq!(gateway.ledger_len(), threads * per_thread);
    let rows = gateway.ledger_rows();
    assert_eq!(rows.len(), threads * per_thread);
    assert!(rows.iter().all(|r| r.call_tag.starts_with("stress/probe@")));
}
