//! Acceptance suite: one criterion per test, one printed pass/fail line
//! each. Numeric checks run against independent oracle reimplementations.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, resume_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bibagent_core::acsv::{
    retrieve_candidates, sentence_windows, verify_accessible, FunnelConfig, Phase,
};
use bibagent_core::csac::{AccessStatus, AccessibilityVerdict, FixtureClient, MetadataSnapshot};
use bibagent_core::dpcm::{
    align_citations, detect_citations, expand_range, merge_pages, parse_bibliography,
    parse_markdown, verify_extraction, AnomalyKind, PageTranscript,
};
use bibagent_core::eval::ablation::coherent_case;
use bibagent_core::eval::{
    acc_pass_at_3, committee_ablation, token_economy, Grade, GradedSample, InstanceRun,
};
use bibagent_core::gateway::{Gateway, StubBackend, StubOptions};
use bibagent_core::icsv::{
    aggregate_consensus, calibrate_confidence, AbstentionTrigger, AspectCluster, Relation,
    ReferenceStats,
};
use bibagent_core::model::{EvidenceBundle, TaxonomyCode, VerdictLabel};
use bibagent_core::pipeline::{verify_document, PipelineConfig};
use bibagent_core::taxonomy::assign_error_code;

fn criterion(name: &str, body: impl FnOnce()) {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(()) => println!("[PASS] {name}"),
        Err(e) => {
            println!("[FAIL] {name}");
            resume_unwind(e);
        }
    }
}

fn gw() -> Gateway {
    Gateway::new(Box::new(StubBackend::new("stub", StubOptions::default())))
}

fn cluster_with_gamma(id: usize, gamma: f64) -> AspectCluster {
    AspectCluster {
        cluster_id: format!("C{id}"),
        cluster_name: format!("aspect {id}"),
        aspect_summary: String::new(),
        claim_ids: vec![id + 1],
        source_papers: BTreeSet::from([format!("w{id}")]),
        evidence_statement: format!("evidence {id}"),
        gamma,
    }
}

/// Random committee with normalized weights.
fn random_committee(rng: &mut ChaCha8Rng) -> (Vec<AspectCluster>, Vec<Relation>) {
    let k = rng.gen_range(1..=8usize);
    let weights: Vec<f64> = (0..k).map(|_| rng.gen_range(0.01..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let clusters: Vec<AspectCluster> = weights
        .iter()
        .enumerate()
        .map(|(i, w)| cluster_with_gamma(i, w / total))
        .collect();
    let relations: Vec<Relation> = (0..k)
        .map(|_| Relation {
            vote: rng.gen_range(-1i8..=1),
            stability: [1.0 / 3.0, 2.0 / 3.0, 1.0][rng.gen_range(0..3usize)],
        })
        .collect();
    (clusters, relations)
}

#[test]
fn c01_consensus_oracle() {
    criterion("C01 consensus aggregation matches the oracle on 1000 committees", || {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        for _ in 0..1000 {
            let (clusters, relations) = random_committee(&mut rng);
            let mut expected = 0.0f64;
            for i in (0..clusters.len()).rev() {
                expected += f64::from(relations[i].vote) * clusters[i].gamma;
            }
            let expected_label = if expected > 0.3 {
                VerdictLabel::Supported
            } else if expected < -0.3 {
                VerdictLabel::Miscitation
            } else {
                VerdictLabel::Undecidable
            };
            let (v, label) = aggregate_consensus(&clusters, &relations);
            assert!((v - expected).abs() < 1e-12, "v={v} expected={expected}");
            assert_eq!(label, expected_label);
        }
        assert!(start.elapsed().as_secs_f64() < 5.0);
    });
}

/// Independent recomputation of every calibration quantity.
fn oracle_calibration(
    clusters: &[AspectCluster],
    relations: &[Relation],
    v_final: f64,
    committee_size: usize,
) -> (f64, f64, f64, f64, Vec<AbstentionTrigger>) {
    let sum_sq: f64 = clusters.iter().map(|c| c.gamma.powi(2)).sum();
    let n_eff = if sum_sq > 0.0 { sum_sq.recip() } else { 1.0 };

    let mut w = [0.0f64; 3];
    for (c, r) in clusters.iter().zip(relations) {
        match r.vote {
            1 => w[0] += c.gamma,
            0 => w[1] += c.gamma,
            _ => w[2] += c.gamma,
        }
    }
    let mut h = 0.0;
    for wl in w {
        h -= wl * (wl + 1e-12).ln();
    }
    let h = (h / 3f64.ln()).clamp(0.0, 1.0);

    let a_bar: f64 = clusters
        .iter()
        .zip(relations)
        .map(|(c, r)| c.gamma * r.stability)
        .sum();
    let conf =
        (v_final.abs() * (n_eff / 6.0).min(1.0) * (1.0 - h) * a_bar).clamp(0.0, 1.0);

    let mut triggers = Vec::new();
    if committee_size < 6 {
        triggers.push(AbstentionTrigger::InsufficientWitnesses);
    }
    if v_final >= -0.3 && v_final <= 0.3 {
        triggers.push(AbstentionTrigger::LowMargin);
    }
    if conf < 0.5 {
        triggers.push(AbstentionTrigger::LowConfidence);
    }
    if h > 0.6 {
        triggers.push(AbstentionTrigger::HighDisagreement);
    }
    (n_eff, h, a_bar, conf, triggers)
}

#[test]
fn c02_calibration_equivalence() {
    criterion("C02 confidence calibration matches a brute-force oracle on 500 cases", || {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(202);
        for _ in 0..500 {
            let (clusters, relations) = random_committee(&mut rng);
            let size = rng.gen_range(1..=12usize);
            let (v, _) = aggregate_consensus(&clusters, &relations);
            let got = calibrate_confidence(&clusters, &relations, v, size);
            let (n_eff, h, a_bar, conf, triggers) =
                oracle_calibration(&clusters, &relations, v, size);
            assert!((got.n_eff - n_eff).abs() < 1e-9);
            assert!((got.entropy - h).abs() < 1e-9);
            assert!((got.a_bar - a_bar).abs() < 1e-9);
            assert!((got.conf - conf).abs() < 1e-9);
            assert_eq!(got.abstention_triggers, triggers);
            if triggers.is_empty() {
                assert_ne!(got.verdict, VerdictLabel::Undecidable);
            } else {
                assert_eq!(got.verdict, VerdictLabel::Undecidable);
            }
        }
        assert!(start.elapsed().as_secs_f64() < 5.0);
    });
}

#[test]
fn c03_abstention_boundaries() {
    criterion("C03 each abstention gate flips exactly at its boundary", || {
        // High-confidence unanimous committee; only the probed quantity
        // sits near its threshold.
        let safe_clusters: Vec<AspectCluster> =
            (0..8).map(|i| cluster_with_gamma(i, 0.125)).collect();
        let unanimous: Vec<Relation> =
            (0..8).map(|_| Relation { vote: 1, stability: 1.0 }).collect();
        let with = |size: usize, v: f64, relations: &[Relation], clusters: &[AspectCluster]| {
            calibrate_confidence(clusters, relations, v, size)
        };
        let has = |verdict: &bibagent_core::icsv::CommitteeVerdict, t: AbstentionTrigger| {
            verdict.abstention_triggers.contains(&t)
        };

        // 1-2: committee size 5 vs 6.
        let v = with(5, 0.9, &unanimous, &safe_clusters);
        assert!(has(&v, AbstentionTrigger::InsufficientWitnesses));
        let v = with(6, 0.9, &unanimous, &safe_clusters);
        assert!(!has(&v, AbstentionTrigger::InsufficientWitnesses));

        // 3-4: margin 0.300 (inclusive) vs 0.301.
        let v = with(10, 0.300, &unanimous, &safe_clusters);
        assert!(has(&v, AbstentionTrigger::LowMargin));
        let v = with(10, 0.301, &unanimous, &safe_clusters);
        assert!(!has(&v, AbstentionTrigger::LowMargin));

        // 5-6: confidence just below vs just above 0.5 via stability.
        let shaky: Vec<Relation> =
            (0..8).map(|_| Relation { vote: 1, stability: 0.62 }).collect();
        let v = with(10, 0.8, &shaky, &safe_clusters);
        assert!(v.conf < 0.5 && has(&v, AbstentionTrigger::LowConfidence));
        let steady: Vec<Relation> =
            (0..8).map(|_| Relation { vote: 1, stability: 0.64 }).collect();
        let v = with(10, 0.8, &steady, &safe_clusters);
        assert!(v.conf >= 0.5 && !has(&v, AbstentionTrigger::LowConfidence));

        // 7-8: entropy just above vs just below 0.6 via the label split.
        let split = |p: f64| {
            let clusters = vec![cluster_with_gamma(0, p), cluster_with_gamma(1, 1.0 - p)];
            let relations = vec![
                Relation { vote: 1, stability: 1.0 },
                Relation { vote: 0, stability: 1.0 },
            ];
            let (v, _) = aggregate_consensus(&clusters, &relations);
            calibrate_confidence(&clusters, &relations, v, 10)
        };
        let v = split(0.40);
        assert!(v.entropy > 0.6 && has(&v, AbstentionTrigger::HighDisagreement));
        let v = split(0.36);
        assert!(v.entropy < 0.6 && !has(&v, AbstentionTrigger::HighDisagreement));
    });
}

#[test]
fn c04_early_exit_economy() {
    criterion("C04 NLI early exit spends zero generation tokens; deep path spends exactly the sample budget", || {
        let config = FunnelConfig::default();

        let gateway = gw();
        let cited = parse_markdown(
            "# Source\n\n[[entail:0.95]] The method reduces error by half on all benchmarks tested.\n",
            1,
        );
        let before = gateway.ledger_len();
        let verdict = verify_accessible(
            "occ-1",
            "The method reduces error by half on all benchmarks tested.",
            None,
            None,
            &cited,
            &config,
            &gateway,
            0,
        )
        .unwrap();
        assert_eq!(verdict.verdict, VerdictLabel::Supported);
        assert_eq!(verdict.trace.phase_reached, Phase::NliGate);
        assert_eq!(gateway.ledger_len(), before, "early exit must not generate");

        let gateway = gw();
        let cited = parse_markdown(
            "# Source\n\n[[neutral:0.6]] The evidence is indirect at best [[votes:m,m,m,s,s]].\n",
            1,
        );
        let before = gateway.ledger_len();
        let verdict = verify_accessible(
            "occ-2",
            "The method reduces error by half.",
            None,
            None,
            &cited,
            &config,
            &gateway,
            0,
        )
        .unwrap();
        assert_eq!(verdict.trace.phase_reached, Phase::Deep);
        assert_eq!(
            gateway.ledger_len() - before,
            config.sc_samples as usize,
            "deep path must spend exactly sc_samples generation calls"
        );
        assert_eq!(verdict.verdict, VerdictLabel::Miscitation);
    });
}

fn oracle_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[test]
fn c05_funnel_oracle() {
    criterion("C05 retrieval ranking and window counts match the oracle over 100 documents", || {
        let vocab = [
            "solver", "dataset", "metric", "graph", "latency", "cache", "proof",
            "bound", "kernel", "sample", "noise", "drift",
        ];
        let gateway = gw();
        let mut rng = ChaCha8Rng::seed_from_u64(505);
        for _ in 0..100 {
            let n_par = rng.gen_range(1..=12usize);
            let mut paragraphs = Vec::new();
            let mut sentence_counts = Vec::new();
            for _ in 0..n_par {
                let n_sent = rng.gen_range(1..=6usize);
                let sentences: Vec<String> = (0..n_sent)
                    .map(|_| {
                        let words: Vec<&str> = (0..5)
                            .map(|_| vocab[rng.gen_range(0..vocab.len())])
                            .collect();
                        format!("The {} meets the {} under {} with {} and {}.",
                            words[0], words[1], words[2], words[3], words[4])
                    })
                    .collect();
                sentence_counts.push(n_sent);
                paragraphs.push(sentences.join(" "));
            }
            let query = format!("The {} meets the {}.", vocab[rng.gen_range(0..vocab.len())], vocab[rng.gen_range(0..vocab.len())]);

            let mut texts = vec![query.clone()];
            texts.extend(paragraphs.iter().cloned());
            let vectors = gateway.embed(&texts).unwrap();
            let mut expected: Vec<(usize, f64)> = vectors[1..]
                .iter()
                .enumerate()
                .map(|(i, v)| (i, oracle_cosine(&vectors[0], v)))
                .collect();
            expected.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            expected.truncate(10.min(paragraphs.len()));

            let got = retrieve_candidates(&query, &paragraphs, 10, &gateway).unwrap();
            let got_order: Vec<usize> = got.iter().map(|(i, _)| *i).collect();
            let expected_order: Vec<usize> = expected.iter().map(|(i, _)| *i).collect();
            assert_eq!(got_order, expected_order);
            for ((_, gs), (_, es)) in got.iter().zip(&expected) {
                assert!((gs - es).abs() < 1e-12);
            }

            for (paragraph, n_sent) in paragraphs.iter().zip(&sentence_counts) {
                let windows = sentence_windows(paragraph, 3);
                assert_eq!(windows.len(), 1.max(n_sent.saturating_sub(2)));
            }
        }
    });
}

/// One synthetic document plus its ground-truth edge set
/// (sentence_index, entry_index).
fn corpus_doc(i: usize) -> (String, Vec<(usize, u32)>) {
    let dash = if i % 2 == 0 { "\u{2013}" } else { "-" };
    let body = format!(
        "Solvers keep improving [1]. Hybrid approaches borrow from both lines [2,4]. \
Recent surveys cover the rest [3{dash}5]. Benchmarks remain contested [6].",
    );
    let mut refs = String::from("# References\n\n");
    for k in 1..=6 {
        refs.push_str(&format!(
            "[{k}] A. Author{k}{i}. Study number {k} in corpus {i}. Venue, 20{k:02}.\n"
        ));
    }
    let truth = vec![
        (0, 1),
        (1, 2),
        (1, 4),
        (2, 3),
        (2, 4),
        (2, 5),
        (3, 6),
    ];
    (format!("{body}\n\n{refs}"), truth)
}

#[test]
fn c06_parsing_corpus() {
    criterion("C06 citation graphs are recovered exactly over the 20-document corpus", || {
        assert_eq!(expand_range("3\u{2013}5"), vec![3, 4, 5]);

        let gateway = gw();
        for i in 0..20 {
            let (markdown, truth) = corpus_doc(i);
            let doc = parse_markdown(&markdown, 1);
            let (entries, none) = parse_bibliography(&doc);
            assert!(none.is_none());
            let (_, drafts) = detect_citations(&doc);
            let edges = align_citations(&drafts, &entries, &gateway, 0).unwrap();

            let index_of: BTreeMap<String, u32> =
                entries.iter().map(|e| (e.key.clone(), e.entry_index)).collect();
            let mut recovered: BTreeSet<(usize, u32)> = BTreeSet::new();
            for edge in &edges {
                assert!(!edge.ambiguity_flag, "doc {i}: {:?}", edge);
                for key in &edge.target_keys {
                    recovered.insert((edge.sentence_index, index_of[key]));
                }
            }
            let truth: BTreeSet<(usize, u32)> = truth.into_iter().collect();
            // Set equality is precision and recall both at 100%.
            assert_eq!(recovered, truth, "doc {i}");
        }

        // Page merges are byte-exact for both repair modes.
        let page = |i, md: &str| PageTranscript {
            page_index: i,
            markdown: md.to_string(),
            incomplete_start: i > 1,
            incomplete_end: true,
        };
        let merged = merge_pages(
            &[
                page(1, "First paragraph complete.\n\nThe method targets multi-"),
                page(2, "agent systems on ten datasets.\n\nFinal paragraph."),
            ],
            &gateway,
            0,
        )
        .unwrap();
        assert_eq!(
            merged,
            "First paragraph complete.\n\nThe method targets multi-agent systems on ten datasets.\n\nFinal paragraph."
        );
        let merged = merge_pages(
            &[
                page(1, "The results were strong"),
                page(2, "and generalized well."),
            ],
            &gateway,
            0,
        )
        .unwrap();
        assert_eq!(merged, "The results were strong and generalized well.");
    });
}

#[test]
fn c07_extraction_verifier() {
    criterion("C07 planted extraction defects are flagged with correct spans; clean corpus is silent", || {
        let doc = parse_markdown("# Top\n\n### Jumped\n\nBody text here.\n", 1);
        let anomalies = verify_extraction(&doc);
        assert_eq!(anomalies.len(), 1);
        assert_eq!(anomalies[0].kind, AnomalyKind::HeadingJump);
        let jumped = doc.blocks.iter().find(|b| b.text == "Jumped").unwrap();
        assert_eq!(anomalies[0].span, jumped.span);

        let doc = parse_markdown(
            "# Math\n\n$$ E = mc^2 (1) $$\n\nBridge text.\n\n$$ F = ma (4) $$\n",
            1,
        );
        let anomalies = verify_extraction(&doc);
        assert_eq!(anomalies.len(), 1);
        assert_eq!(anomalies[0].kind, AnomalyKind::NumberingGap);
        let second = doc.blocks.iter().find(|b| b.text.contains("F = ma")).unwrap();
        assert_eq!(anomalies[0].span, second.span);

        let doc = parse_markdown("# Cites\n\nEarly work [1]. Late work [15].\n", 1);
        let anomalies = verify_extraction(&doc);
        assert_eq!(anomalies.len(), 1);
        assert_eq!(anomalies[0].kind, AnomalyKind::CitationSequenceGap);
        let block = doc.blocks.iter().find(|b| b.text.contains("[15]")).unwrap();
        assert_eq!(anomalies[0].span, block.span);

        for i in 0..20 {
            let (markdown, _) = corpus_doc(i);
            assert!(verify_extraction(&parse_markdown(&markdown, 1)).is_empty());
        }
    });
}

#[test]
fn c08_reliability_knee() {
    criterion("C08 committee reliability knees at six witnesses", || {
        let start = Instant::now();
        let pool: Vec<_> = (0..30)
            .map(|i| {
                let truth = if i % 2 == 0 {
                    VerdictLabel::Supported
                } else {
                    VerdictLabel::Miscitation
                };
                coherent_case(30, truth)
            })
            .collect();
        let rows = committee_ablation(&pool, 200, 808).unwrap();
        assert!(start.elapsed().as_secs_f64() < 60.0);
        for row in &rows {
            if row.n_voter <= 2 {
                assert!(row.non_abstention_rate <= 0.2, "n={}", row.n_voter);
            }
            if row.n_voter >= 6 {
                assert!(row.non_abstention_rate >= 0.9, "n={}", row.n_voter);
                let acc = row.conditional_accuracy.expect("decided bucket");
                assert!(acc >= 0.9, "n={} acc={acc}", row.n_voter);
            }
        }
    });
}

#[test]
fn c09_metric_oracles() {
    criterion("C09 evaluation metrics agree with independent oracles", || {
        let mut rng = ChaCha8Rng::seed_from_u64(909);
        let mut grades: BTreeMap<String, Vec<GradedSample>> = BTreeMap::new();
        let mut solved = 0usize;
        for i in 0..50 {
            let samples: Vec<GradedSample> = (0..3)
                .map(|_| GradedSample {
                    predicted_label: "Content".into(),
                    predicted_explanation: "x".into(),
                    grade: if rng.gen_bool(0.4) { Grade::Correct } else { Grade::Incorrect },
                })
                .collect();
            if samples.iter().any(|s| s.grade == Grade::Correct) {
                solved += 1;
            }
            grades.insert(format!("i{i:02}"), samples);
        }
        let acc = acc_pass_at_3(&grades).unwrap();
        assert!((acc - solved as f64 / 50.0).abs() < 1e-12);

        let label = |b: bool| if b { VerdictLabel::Supported } else { VerdictLabel::Undecidable };
        let mut full = BTreeMap::new();
        let mut agent = BTreeMap::new();
        for i in 0..30 {
            let id = format!("i{i:02}");
            full.insert(
                id.clone(),
                InstanceRun { tokens: rng.gen_range(500..5000), verdict: label(rng.gen_bool(0.8)) },
            );
            agent.insert(
                id,
                InstanceRun { tokens: rng.gen_range(100..2000), verdict: label(rng.gen_bool(0.8)) },
            );
        }
        let decided = |v: VerdictLabel| v == VerdictLabel::Supported;
        let both: Vec<&String> = full
            .keys()
            .filter(|id| decided(full[*id].verdict) && decided(agent[*id].verdict))
            .collect();
        let mean = |m: &BTreeMap<String, InstanceRun>| {
            both.iter().map(|id| m[*id].tokens as f64).sum::<f64>() / both.len() as f64
        };
        let expected = 1.0 - mean(&agent) / mean(&full);
        let got = token_economy(&full, &agent).unwrap();
        assert!((got - expected).abs() < 1e-12);

        assert_eq!(token_economy(&full, &full).unwrap(), 0.0);
    });
}

#[test]
fn c10_end_to_end_determinism() {
    criterion("C10 repeated runs with one seed produce byte-identical reports", || {
        let dir = tempfile::TempDir::new().unwrap();
        let ft = dir.path().join("fulltext");
        std::fs::create_dir_all(&ft).unwrap();
        std::fs::write(
            ft.join("src1.md"),
            "# A study of solvers\n\n[[entail:0.95]] The solver halves runtime on sparse graphs. More detail follows below.\n",
        )
        .unwrap();
        let records = serde_json::json!([{
            "id": "src1",
            "doi": "10.1234/solver",
            "title": "A study of solvers",
            "authors": ["Smith"],
            "abstract": "Abstract.",
            "venue": "Venue",
            "year": 2020,
            "venue_type": "journal",
            "article_type": "primary",
            "citation_count": 10,
            "field_id": "cs",
            "open_access": true
        }]);
        std::fs::write(dir.path().join("records.json"), records.to_string()).unwrap();
        let client = FixtureClient::load(dir.path()).unwrap();

        let corpus = [
            "The solver halves runtime on sparse graphs [1]. A second claim rests on nothing [2].\n\n# References\n\n[1] A. Smith. A study of solvers. Venue, 2020. doi: 10.1234/solver\n\n[2] Z. Nobody. Vanished study. V, 1999.\n",
        ];
        let run = || {
            let gateway = gw();
            let mut blobs = Vec::new();
            for markdown in &corpus {
                let report = verify_document(
                    markdown,
                    &client,
                    &gateway,
                    &ReferenceStats::default(),
                    &PipelineConfig::default(),
                )
                .unwrap();
                for bundle in &report.bundles {
                    blobs.push(serde_json::to_string_pretty(bundle).unwrap());
                }
                blobs.push(serde_json::to_string_pretty(&report.summary).unwrap());
            }
            blobs
        };
        assert_eq!(run(), run());
    });
}

#[test]
fn c11_taxonomy_precedence() {
    criterion("C11 taxonomy short-circuits and precedence tie-breaks hold", || {
        let bundle = |context: &str| EvidenceBundle {
            citing_context: context.into(),
            accessible_evidence: None,
            committee_evidence: None,
            metadata: None,
            notes: String::new(),
        };
        let snapshot = |retracted: bool| MetadataSnapshot {
            title: "T".into(),
            authors: vec![],
            abstract_text: None,
            venue: "V".into(),
            year: Some(2020),
            identifiers: Default::default(),
            source_of_record: "fixture".into(),
            venue_type: Some("journal".into()),
            article_type: Some("primary".into()),
            retracted,
        };
        let verdict = |status| AccessibilityVerdict { status, equivalence_evidence: None };

        let gateway = gw();
        let before = gateway.ledger_len();
        let decision =
            assign_error_code(&bundle("x"), &verdict(AccessStatus::Ghost), &gateway, 0, "taxonomy/label@occ-1")
                .unwrap();
        assert_eq!(decision.code, TaxonomyCode::AttributionTraceability);
        assert_eq!(gateway.ledger_len(), before);

        let decision = assign_error_code(
            &bundle("x"),
            &verdict(AccessStatus::MetadataOnly(snapshot(true))),
            &gateway,
            0,
            "taxonomy/label@occ-2",
        )
        .unwrap();
        assert_eq!(decision.code, TaxonomyCode::CitationValidity);
        assert_eq!(gateway.ledger_len(), before, "short circuits must not generate");

        // 2-2 frequency tie resolves to the earlier precedence rank.
        let decision = assign_error_code(
            &bundle("[[votes:Scope,Content,Scope,Content,ABSTAIN]]"),
            &verdict(AccessStatus::MetadataOnly(snapshot(false))),
            &gateway,
            0,
            "taxonomy/label@occ-3",
        )
        .unwrap();
        assert_eq!(decision.code, TaxonomyCode::ContentMisrepresentation);
        assert_eq!(decision.votes[&TaxonomyCode::ContentMisrepresentation], 2);
        assert_eq!(decision.votes[&TaxonomyCode::ScopeExtrapolation], 2);
    });
}
