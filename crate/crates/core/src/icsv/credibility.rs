//! Field-normalized influence scoring and cluster credibility weights.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::cluster::AspectCluster;
use super::committee::WitnessPaper;

/// Citation weight w_c and venue weight in the influence combination.
const W_CITATION: f64 = 0.6;
const W_VENUE: f64 = 0.4;
/// Preprint venue scores are discounted by this factor.
const RHO_PRE: f64 = 0.85;
/// Citation counts are capped at this percentile before ranking.
const WINSOR_PERCENTILE: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VenueType {
    Journal,
    Conference,
    Preprint,
}

impl VenueType {
    pub fn parse(s: Option<&str>) -> VenueType {
        match s.map(str::to_ascii_lowercase).as_deref() {
            Some("conference") => VenueType::Conference,
            Some("preprint") => VenueType::Preprint,
            _ => VenueType::Journal,
        }
    }
}

/// Ingested reference distributions: citation samples per (field, year) and
/// venue-metric samples per (field, kind). Sample lists are kept sorted.
#[derive(Debug, Clone, Default)]
pub struct ReferenceStats {
    citations: BTreeMap<(String, i32), Vec<f64>>,
    venue_metrics: BTreeMap<(String, String), Vec<f64>>,
}

impl ReferenceStats {
    /// CSV columns: field_id, year, kind, values (semicolon-separated).
    /// kind "citations" uses the year; venue kinds ("journal", "conference",
    /// "conference_2y", "conference_long", "preprint") ignore it.
    pub fn from_csv(raw: &str) -> Result<ReferenceStats, String> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(raw.as_bytes());
        let mut stats = ReferenceStats::default();
        for (i, row) in reader.records().enumerate() {
            let row = row.map_err(|e| format!("row {}: {e}", i + 2))?;
            let [field, year, kind, values] = [0, 1, 2, 3].map(|c| row.get(c).unwrap_or(""));
            let mut samples: Vec<f64> = values
                .split(';')
                .filter(|v| !v.trim().is_empty())
                .map(|v| v.trim().parse::<f64>().map_err(|e| format!("row {}: {e}", i + 2)))
                .collect::<Result<_, _>>()?;
            samples.sort_by(f64::total_cmp);
            if kind == "citations" {
                let year: i32 = year.parse().map_err(|e| format!("row {}: {e}", i + 2))?;
                stats.citations.insert((field.to_string(), year), samples);
            } else {
                stats
                    .venue_metrics
                    .insert((field.to_string(), kind.to_string()), samples);
            }
        }
        Ok(stats)
    }

    pub fn citation_distribution(&self, field: &str, year: i32) -> Option<&[f64]> {
        self.citations.get(&(field.to_string(), year)).map(Vec::as_slice)
    }

    pub fn venue_distribution(&self, field: &str, kind: &str) -> Option<&[f64]> {
        self.venue_metrics
            .get(&(field.to_string(), kind.to_string()))
            .map(Vec::as_slice)
    }
}

/// Fraction of the sorted sample at or below x.
pub fn percentile_rank(sorted: &[f64], x: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let below = sorted.partition_point(|v| *v <= x);
    below as f64 / sorted.len() as f64
}

fn winsorize(sorted: &[f64], x: f64) -> f64 {
    if sorted.is_empty() {
        return x;
    }
    let idx = ((sorted.len() as f64 * WINSOR_PERCENTILE).ceil() as usize)
        .saturating_sub(1)
        .min(sorted.len() - 1);
    x.min(sorted[idx])
}

/// Influence I = 0.6 C_norm + 0.4 V_norm, where C_norm ranks the winsorized
/// citation count within (field, year) and V_norm ranks the venue metric by
/// venue type. A missing distribution falls back to an empirical CDF over
/// the current witness pool; the second return flags that fallback.
pub fn influence_score(
    paper: &WitnessPaper,
    stats: &ReferenceStats,
    pool: &[WitnessPaper],
) -> (f64, bool) {
    let mut fallback = false;

    let c_norm = match stats.citation_distribution(&paper.field_id, paper.year) {
        Some(dist) => percentile_rank(dist, winsorize(dist, paper.citation_count as f64)),
        None => {
            fallback = true;
            let mut counts: Vec<f64> = pool.iter().map(|w| w.citation_count as f64).collect();
            counts.sort_by(f64::total_cmp);
            percentile_rank(&counts, paper.citation_count as f64)
        }
    };

    let metric = paper.venue_metric;
    let venue_rank = |kinds: &[&str]| -> Option<f64> {
        let value = metric?;
        kinds
            .iter()
            .find_map(|k| stats.venue_distribution(&paper.field_id, k))
            .map(|dist| percentile_rank(dist, value))
    };
    let raw_v = match paper.venue_type {
        VenueType::Journal => venue_rank(&["journal"]),
        VenueType::Conference => venue_rank(&["conference", "conference_2y", "conference_long"]),
        VenueType::Preprint => venue_rank(&["preprint"]).map(|p| p * RHO_PRE),
    };
    let v_norm = match raw_v {
        Some(v) => v,
        None => {
            fallback = true;
            let mut metrics: Vec<f64> = pool.iter().filter_map(|w| w.venue_metric).collect();
            metrics.sort_by(f64::total_cmp);
            let base = match metric {
                Some(m) => percentile_rank(&metrics, m),
                None => 0.0,
            };
            if paper.venue_type == VenueType::Preprint {
                base * RHO_PRE
            } else {
                base
            }
        }
    };

    (W_CITATION * c_norm + W_VENUE * v_norm, fallback)
}

/// Influence per witness record id, with the fallback flag per paper.
pub fn committee_influences(
    committee: &[WitnessPaper],
    stats: &ReferenceStats,
) -> BTreeMap<String, (f64, bool)> {
    committee
        .iter()
        .map(|w| (w.record_id.clone(), influence_score(w, stats, committee)))
        .collect()
}

/// Support(e_j) sums influence over the unique source papers of cluster j;
/// gamma normalizes supports to 1. All-zero supports degrade to uniform.
pub fn assign_credibility(
    clusters: &mut [AspectCluster],
    influences: &BTreeMap<String, (f64, bool)>,
) {
    if clusters.is_empty() {
        return;
    }
    let supports: Vec<f64> = clusters
        .iter()
        .map(|c| {
            c.source_papers
                .iter()
                .map(|p| influences.get(p).map(|(i, _)| *i).unwrap_or(0.0))
                .sum()
        })
        .collect();
    let total: f64 = supports.iter().sum();
    let uniform = 1.0 / clusters.len() as f64;
    for (cluster, support) in clusters.iter_mut().zip(supports) {
        cluster.gamma = if total > 0.0 { support / total } else { uniform };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn witness(id: &str, citations: u64, vt: VenueType, metric: Option<f64>) -> WitnessPaper {
        WitnessPaper {
            record_id: id.into(),
            metadata: crate::csac::MetadataSnapshot {
                title: id.into(),
                authors: vec![],
                abstract_text: None,
                venue: "V".into(),
                year: Some(2020),
                identifiers: Default::default(),
                source_of_record: "fixture".into(),
                venue_type: None,
                article_type: None,
                retracted: false,
            },
            venue_type: vt,
            citation_count: citations,
            field_id: "cs".into(),
            year: 2020,
            venue_metric: metric,
            claims: vec![],
        }
    }

    fn stats() -> ReferenceStats {
        ReferenceStats::from_csv(
            "field_id,year,kind,values\n\
             cs,2020,citations,0;1;2;5;10;20;50;100;200;1000\n\
             cs,0,journal,0.5;1;2;4;8;16;32;64\n\
             cs,0,preprint,0.1;0.5;1;2;4;8;10;20\n\
             bio,2020,citations,1;2;5;10\n\
             bio,0,preprint,0.1;0.5;1;2\n",
        )
        .unwrap()
    }

    #[test]
    fn maximal_percentiles_give_unit_influence() {
        let w = witness("a", 5000, VenueType::Journal, Some(100.0));
        let (i, fb) = influence_score(&w, &stats(), &[]);
        assert!((i - 1.0).abs() < 1e-12);
        assert!(!fb);
    }

    #[test]
    fn hand_weighting() {
        // C_norm 0.8 (<= 8 of 10 samples), V_norm 0.25 -> 0.58.
        let w = witness("a", 150, VenueType::Journal, Some(1.0));
        let (i, _) = influence_score(&w, &stats(), &[]);
        assert!((i - (0.6 * 0.8 + 0.4 * 0.25)).abs() < 1e-12, "{i}");
    }

    #[test]
    fn preprint_discount_applies() {
        // Citation count below every field-year sample, so C_norm is 0 and
        // only the discounted venue term remains.
        let mut w = witness("a", 0, VenueType::Preprint, Some(100.0));
        w.field_id = "bio".into();
        let (i, _) = influence_score(&w, &stats(), &[]);
        assert!((i - 0.4 * 0.85).abs() < 1e-12, "{i}");
    }

    #[test]
    fn missing_distribution_uses_pool_and_flags() {
        let mut w = witness("a", 30, VenueType::Journal, Some(1.0));
        w.field_id = "unknown-field".into();
        let pool = vec![
            witness("a", 30, VenueType::Journal, Some(1.0)),
            witness("b", 10, VenueType::Journal, Some(2.0)),
            witness("c", 60, VenueType::Journal, Some(4.0)),
        ];
        let (_, fb) = influence_score(&w, &stats(), &pool);
        assert!(fb);
    }

    #[test]
    fn credibility_sums_unique_papers_and_normalizes() {
        let mk = |id: &str, papers: &[&str]| AspectCluster {
            cluster_id: id.into(),
            cluster_name: String::new(),
            aspect_summary: String::new(),
            claim_ids: vec![1],
            source_papers: papers.iter().map(|p| p.to_string()).collect::<BTreeSet<_>>(),
            evidence_statement: String::new(),
            gamma: 0.0,
        };
        let mut clusters = vec![mk("C1", &["p1", "p2"]), mk("C2", &["p3"]), mk("C3", &["p1"])];
        let influences: BTreeMap<String, (f64, bool)> = [
            ("p1".to_string(), (1.0, false)),
            ("p2".to_string(), (1.0, false)),
            ("p3".to_string(), (1.0, false)),
        ]
        .into();
        assign_credibility(&mut clusters, &influences);
        assert!((clusters[0].gamma - 0.5).abs() < 1e-12);
        assert!((clusters[1].gamma - 0.25).abs() < 1e-12);
        let total: f64 = clusters.iter().map(|c| c.gamma).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn all_zero_support_is_uniform() {
        let mk = |id: &str| AspectCluster {
            cluster_id: id.into(),
            cluster_name: String::new(),
            aspect_summary: String::new(),
            claim_ids: vec![1],
            source_papers: ["px".to_string()].into(),
            evidence_statement: String::new(),
            gamma: 0.0,
        };
        let mut clusters = vec![mk("C1"), mk("C2")];
        assign_credibility(&mut clusters, &BTreeMap::new());
        assert!((clusters[0].gamma - 0.5).abs() < 1e-12);
    }
}
