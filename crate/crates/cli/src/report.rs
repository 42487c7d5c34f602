//! Evaluation output: a JSON document, a plain-text table and an optional
//! per-group CSV.

use std::collections::BTreeMap;
use std::fmt::Write;

use bsc_core::eval::GroupScores;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationOutput {
    pub config: serde_json::Value,
    pub checkpoint: String,
    pub data: String,
    pub split: String,
    pub protocol: String,
    pub k: usize,
    pub records: usize,
    pub metrics: BTreeMap<String, f64>,
    /// Metrics that could not be computed on this data, with the reason.
    pub unavailable: BTreeMap<String, String>,
    pub groups_evaluated: usize,
    pub groups_skipped: usize,
    /// Decision threshold used for `f1`, and where it was chosen.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1_threshold_split: Option<String>,
}

pub fn table(out: &EvaluationOutput) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{} split of {} ({} records, {} protocol)",
        out.split, out.data, out.records, out.protocol
    );
    let width = out
        .metrics
        .keys()
        .chain(out.unavailable.keys())
        .map(String::len)
        .max()
        .unwrap_or(6)
        .max(6);
    let _ = writeln!(s, "{:<width$}  value", "metric");
    for (k, v) in &out.metrics {
        let _ = writeln!(s, "{k:<width$}  {v:.4}");
    }
    for (k, why) in &out.unavailable {
        let _ = writeln!(s, "{k:<width$}  n/a ({why})");
    }
    let _ = writeln!(
        s,
        "groups evaluated {}, skipped (no relevant candidate) {}",
        out.groups_evaluated, out.groups_skipped
    );
    s
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

pub fn groups_csv(groups: &[GroupScores], k: usize) -> String {
    let mut s = format!("query_id,candidates,reciprocal_rank,average_precision,precision_at_1,ndcg@{k},has_positive@{k}\n");
    for g in groups {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            csv_field(&g.query_id),
            g.candidates,
            opt(g.reciprocal_rank),
            opt(g.average_precision),
            opt(g.precision_at_1),
            opt(g.ndcg),
            g.has_positive_at_k
                .map(|b| u8::from(b).to_string())
                .unwrap_or_default()
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_quotes_and_blanks() {
        let g = GroupScores {
            query_id: "a,\"b\"".into(),
            candidates: 3,
            reciprocal_rank: Some(0.5),
            average_precision: None,
            precision_at_1: Some(0.0),
            ndcg: None,
            has_positive_at_k: Some(true),
        };
        let csv = groups_csv(&[g], 5);
        assert_eq!(csv.lines().nth(1).unwrap(), "\"a,\"\"b\"\"\",3,0.5,,0,,1");
        assert!(csv.starts_with("query_id,"));
    }
}
