//! Ranking and correlation metrics, plus builders that turn a split of pair
//! records into ranked groups.
//!
//! Candidates are ranked by descending score; equal scores are ordered by
//! ascending candidate id. Groups without any relevant candidate are left
//! out of MRR, MAP, P@1 and HasPositives@k and counted in
//! [`EvalReport::groups_skipped`]; nDCG skips groups whose ideal DCG is zero.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::dense::{dot, l2_norm, Matrix};
use crate::error::{contract_err, Error, Result};
use crate::record::PairRecord;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Candidate {
    pub id: u64,
    pub score: f64,
    /// Graded relevance used by nDCG.
    pub relevance: f64,
    /// Binary relevance used by every other ranking metric.
    pub relevant: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RankedGroup {
    pub query_id: String,
    pub candidates: Vec<Candidate>,
}

impl RankedGroup {
    pub fn has_relevant(&self) -> bool {
        self.candidates.iter().any(|c| c.relevant)
    }

    /// Candidates in rank order.
    pub fn ranked(&self) -> Vec<&Candidate> {
        let mut out: Vec<&Candidate> = self.candidates.iter().collect();
        out.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.id.cmp(&b.id)));
        out
    }
}

fn check_groups(groups: &[RankedGroup]) -> Result<()> {
    if groups.is_empty() {
        return Err(Error::Domain("no groups to evaluate".into()));
    }
    for g in groups {
        if g.candidates.is_empty() {
            return Err(Error::Domain(format!(
                "group {} has no candidates",
                g.query_id
            )));
        }
        if let Some(c) = g.candidates.iter().find(|c| !c.score.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite score for candidate {} in group {}",
                c.id, g.query_id
            )));
        }
    }
    Ok(())
}

fn check_k(k: usize) -> Result<()> {
    if k < 1 {
        return Err(contract_err!("cutoff k must be at least 1"));
    }
    Ok(())
}

/// Mean of a per-group statistic over groups with a relevant candidate.
fn mean_over_relevant(groups: &[RankedGroup], f: impl Fn(&[&Candidate]) -> f64) -> Result<f64> {
    check_groups(groups)?;
    let vals: Vec<f64> = groups
        .iter()
        .filter(|g| g.has_relevant())
        .map(|g| f(&g.ranked()))
        .collect();
    if vals.is_empty() {
        return Err(Error::Domain("no group has a relevant candidate".into()));
    }
    Ok(vals.iter().sum::<f64>() / vals.len() as f64)
}

fn reciprocal_rank(ranked: &[&Candidate]) -> f64 {
    ranked
        .iter()
        .position(|c| c.relevant)
        .map_or(0.0, |r| 1.0 / (r + 1) as f64)
}

fn average_precision(ranked: &[&Candidate]) -> f64 {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (r, c) in ranked.iter().enumerate() {
        if c.relevant {
            hits += 1;
            sum += hits as f64 / (r + 1) as f64;
        }
    }
    if hits == 0 {
        0.0
    } else {
        sum / hits as f64
    }
}

fn gain(rel: f64) -> f64 {
    libm::exp2(rel) - 1.0
}

fn dcg<'a>(rels: impl Iterator<Item = f64> + 'a, k: usize) -> f64 {
    rels.take(k)
        .enumerate()
        .map(|(r, rel)| gain(rel) / libm::log2((r + 2) as f64))
        .sum()
}

/// nDCG@k of one group, `None` when its ideal DCG is zero.
fn ndcg_group(g: &RankedGroup, k: usize) -> Option<f64> {
    let mut ideal: Vec<f64> = g.candidates.iter().map(|c| c.relevance).collect();
    ideal.sort_by(|a, b| b.total_cmp(a));
    let idcg = dcg(ideal.into_iter(), k);
    if idcg <= 0.0 {
        return None;
    }
    Some(dcg(g.ranked().into_iter().map(|c| c.relevance), k) / idcg)
}

pub fn mrr(groups: &[RankedGroup]) -> Result<f64> {
    mean_over_relevant(groups, reciprocal_rank)
}

pub fn map(groups: &[RankedGroup]) -> Result<f64> {
    mean_over_relevant(groups, average_precision)
}

pub fn p_at_1(groups: &[RankedGroup]) -> Result<f64> {
    mean_over_relevant(groups, |r| if r[0].relevant { 1.0 } else { 0.0 })
}

/// Fraction of groups with a relevant candidate in the top `k`.
pub fn has_positives_at_k(groups: &[RankedGroup], k: usize) -> Result<f64> {
    check_k(k)?;
    mean_over_relevant(groups, |r| {
        if r.iter().take(k).any(|c| c.relevant) {
            1.0
        } else {
            0.0
        }
    })
}

/// nDCG@k with gain `2^rel − 1` and discount `1 / log2(rank + 1)`.
pub fn ndcg_at_k(groups: &[RankedGroup], k: usize) -> Result<f64> {
    check_k(k)?;
    check_groups(groups)?;
    let vals: Vec<f64> = groups.iter().filter_map(|g| ndcg_group(g, k)).collect();
    if vals.is_empty() {
        return Err(Error::Domain("every group has zero ideal DCG".into()));
    }
    Ok(vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Fractional ranks (1-based), ties sharing their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && x[idx[end]] == x[idx[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

/// Spearman's rank correlation: Pearson correlation of average ranks.
pub fn spearman(pred: &[f64], gold: &[f64]) -> Result<f64> {
    if pred.len() != gold.len() {
        return Err(contract_err!(
            "{} predictions for {} gold scores",
            pred.len(),
            gold.len()
        ));
    }
    if pred.len() < 2 {
        return Err(contract_err!(
            "Spearman correlation needs at least two points"
        ));
    }
    if pred.iter().chain(gold).any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite score".into()));
    }
    pearson(&average_ranks(pred), &average_ranks(gold))
        .ok_or_else(|| Error::Domain("Spearman correlation is undefined for constant input".into()))
}

fn f1_at(scores: &[f64], labels: &[bool], threshold: f64) -> f64 {
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (&s, &y) in scores.iter().zip(labels) {
        match (s > threshold, y) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
    }
    if tp == 0 {
        return 0.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fneg) as f64
}

/// Thresholds swept on a score list: one below the minimum (everything
/// positive) and every midpoint between consecutive distinct scores.
pub fn candidate_thresholds(scores: &[f64]) -> Vec<f64> {
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let mut out = Vec::with_capacity(sorted.len());
    if let Some(&lo) = sorted.first() {
        out.push(lo - 1.0);
    }
    out.extend(sorted.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0));
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ThresholdF1 {
    pub threshold: f64,
    pub dev_f1: f64,
    pub f1: f64,
}

/// Picks the threshold maximizing F1 on the dev split (smallest on ties) and
/// reports F1 on the eval split at that threshold. A score counts as a
/// positive prediction when it is strictly above the threshold.
pub fn f1_with_threshold(
    dev_scores: &[f64],
    dev_labels: &[bool],
    eval_scores: &[f64],
    eval_labels: &[bool],
) -> Result<ThresholdF1> {
    if dev_scores.len() != dev_labels.len() || eval_scores.len() != eval_labels.len() {
        return Err(contract_err!("score and label lists differ in length"));
    }
    if !dev_labels.iter().any(|&y| y) || dev_labels.iter().all(|&y| y) {
        return Err(contract_err!(
            "dev split needs both classes to select an F1 threshold"
        ));
    }
    if dev_scores.iter().chain(eval_scores).any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite score".into()));
    }
    let mut best = (f64::NAN, -1.0);
    for t in candidate_thresholds(dev_scores) {
        let f = f1_at(dev_scores, dev_labels, t);
        if f > best.1 {
            best = (t, f);
        }
    }
    Ok(ThresholdF1 {
        threshold: best.0,
        dev_f1: best.1,
        f1: f1_at(eval_scores, eval_labels, best.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum MetricName {
    #[default]
    Mrr,
    Map,
    #[cfg_attr(feature = "serde", serde(rename = "p_at_1"))]
    PAt1,
    Ndcg,
    HasPositives,
    Spearman,
    F1,
}

impl MetricName {
    pub const ALL: [MetricName; 7] = [
        MetricName::Mrr,
        MetricName::Map,
        MetricName::PAt1,
        MetricName::Ndcg,
        MetricName::HasPositives,
        MetricName::Spearman,
        MetricName::F1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricName::Mrr => "mrr",
            MetricName::Map => "map",
            MetricName::PAt1 => "p_at_1",
            MetricName::Ndcg => "ndcg",
            MetricName::HasPositives => "has_positives",
            MetricName::Spearman => "spearman",
            MetricName::F1 => "f1",
        }
    }

    /// Key used in reports, with the cutoff for the `@k` metrics.
    pub fn key(self, k: usize) -> String {
        match self {
            MetricName::Ndcg | MetricName::HasPositives => format!("{}@{k}", self.name()),
            _ => self.name().to_string(),
        }
    }

    pub fn is_ranking(self) -> bool {
        !matches!(self, MetricName::Spearman | MetricName::F1)
    }
}

impl fmt::Display for MetricName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig {
                key: "metric",
                reason: format!("unknown metric {s:?}"),
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GroupScores {
    pub query_id: String,
    pub candidates: usize,
    pub reciprocal_rank: Option<f64>,
    pub average_precision: Option<f64>,
    pub precision_at_1: Option<f64>,
    pub ndcg: Option<f64>,
    pub has_positive_at_k: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    pub metrics: BTreeMap<String, f64>,
    pub groups_evaluated: usize,
    pub groups_skipped: usize,
    pub per_group: Vec<GroupScores>,
}

/// Every ranking metric at cutoff `k`, with a per-group breakdown.
pub fn ranking_report(groups: &[RankedGroup], k: usize) -> Result<EvalReport> {
    check_k(k)?;
    check_groups(groups)?;
    let mut report = EvalReport::default();
    for g in groups {
        let ranked = g.ranked();
        let relevant = g.has_relevant();
        report.per_group.push(GroupScores {
            query_id: g.query_id.clone(),
            candidates: g.candidates.len(),
            reciprocal_rank: relevant.then(|| reciprocal_rank(&ranked)),
            average_precision: relevant.then(|| average_precision(&ranked)),
            precision_at_1: relevant.then(|| if ranked[0].relevant { 1.0 } else { 0.0 }),
            ndcg: ndcg_group(g, k),
            has_positive_at_k: relevant.then(|| ranked.iter().take(k).any(|c| c.relevant)),
        });
        if relevant {
            report.groups_evaluated += 1;
        } else {
            report.groups_skipped += 1;
        }
    }
    if report.groups_evaluated > 0 {
        report.metrics.insert(MetricName::Mrr.key(k), mrr(groups)?);
        report.metrics.insert(MetricName::Map.key(k), map(groups)?);
        report
            .metrics
            .insert(MetricName::PAt1.key(k), p_at_1(groups)?);
        report.metrics.insert(
            MetricName::HasPositives.key(k),
            has_positives_at_k(groups, k)?,
        );
    }
    if let Ok(v) = ndcg_at_k(groups, k) {
        report.metrics.insert(MetricName::Ndcg.key(k), v);
    }
    Ok(report)
}

/// How a split of pair records becomes ranked groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum EvalProtocol {
    /// Every distinct positive query ranks every distinct answer of the
    /// split. A (query, answer) relevance is the highest label of any record
    /// joining the two texts, and zero when none does.
    #[default]
    Retrieval,
    /// Records sharing a `group` key (or, without one, a query text) form one
    /// candidate list, each record scored on its own pair.
    Grouped,
}

impl EvalProtocol {
    pub fn name(self) -> &'static str {
        match self {
            EvalProtocol::Retrieval => "retrieval",
            EvalProtocol::Grouped => "grouped",
        }
    }
}

impl fmt::Display for EvalProtocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EvalProtocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "retrieval" => Ok(EvalProtocol::Retrieval),
            "grouped" => Ok(EvalProtocol::Grouped),
            _ => Err(Error::InvalidConfig {
                key: "protocol",
                reason: format!("unknown protocol {s:?}"),
            }),
        }
    }
}

/// Cosine similarity; zero when either side is the zero vector.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let d = l2_norm(a) * l2_norm(b);
    if d == 0.0 {
        0.0
    } else {
        dot(a, b) / d
    }
}

/// Cosine score of each record's own pair, from embeddings with one row per
/// record.
pub fn pair_scores(q: &Matrix, a: &Matrix) -> Vec<f64> {
    (0..q.rows()).map(|i| cosine(q.row(i), a.row(i))).collect()
}

/// Distinct strings in first-occurrence order.
fn distinct<'a>(texts: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut seen = BTreeMap::new();
    let mut out = Vec::new();
    for t in texts {
        if seen.insert(t, ()).is_none() {
            out.push(t);
        }
    }
    out
}

/// Texts that [`retrieval_groups`] needs encoded: distinct positive queries
/// and distinct answers, both in first-occurrence order.
pub fn retrieval_texts(records: &[PairRecord], threshold: f64) -> (Vec<&str>, Vec<&str>) {
    let queries = distinct(
        records
            .iter()
            .filter(|r| r.label > threshold)
            .map(|r| r.text_q.as_str()),
    );
    let answers = distinct(records.iter().map(|r| r.text_a.as_str()));
    (queries, answers)
}

/// Builds [`EvalProtocol::Retrieval`] groups. `q_emb` and `a_emb` hold one row
/// per text returned by [`retrieval_texts`], in the same order.
pub fn retrieval_groups(
    records: &[PairRecord],
    threshold: f64,
    q_emb: &Matrix,
    a_emb: &Matrix,
) -> Result<Vec<RankedGroup>> {
    let (queries, answers) = retrieval_texts(records, threshold);
    if q_emb.rows() != queries.len() || a_emb.rows() != answers.len() {
        return Err(contract_err!(
            "expected {} query and {} answer embeddings, got {} and {}",
            queries.len(),
            answers.len(),
            q_emb.rows(),
            a_emb.rows()
        ));
    }
    let answer_pos: BTreeMap<&str, usize> =
        answers.iter().enumerate().map(|(i, t)| (*t, i)).collect();
    let mut first_id: BTreeMap<&str, &str> = BTreeMap::new();
    let mut relevance: BTreeMap<(&str, usize), f64> = BTreeMap::new();
    for r in records {
        first_id.entry(r.text_q.as_str()).or_insert(r.id.as_str());
        let key = (r.text_q.as_str(), answer_pos[r.text_a.as_str()]);
        let e = relevance.entry(key).or_insert(r.label);
        *e = e.max(r.label);
    }
    let mut groups = Vec::with_capacity(queries.len());
    for (qi, q) in queries.iter().enumerate() {
        let candidates = (0..answers.len())
            .map(|ai| {
                let rel = relevance.get(&(*q, ai)).copied().unwrap_or(0.0);
                Candidate {
                    id: ai as u64,
                    score: cosine(q_emb.row(qi), a_emb.row(ai)),
                    relevance: rel,
                    relevant: rel > threshold,
                }
            })
            .collect();
        groups.push(RankedGroup {
            query_id: first_id[q].to_string(),
            candidates,
        });
    }
    Ok(groups)
}

/// Builds [`EvalProtocol::Grouped`] groups from per-record pair scores.
/// Candidate ids are record positions.
pub fn grouped_groups(
    records: &[PairRecord],
    threshold: f64,
    scores: &[f64],
) -> Result<Vec<RankedGroup>> {
    if scores.len() != records.len() {
        return Err(contract_err!(
            "{} scores for {} records",
            scores.len(),
            records.len()
        ));
    }
    let mut order: Vec<&str> = Vec::new();
    let mut members: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        let key = r.group.as_deref().unwrap_or(r.text_q.as_str());
        let list = members.entry(key).or_default();
        if list.is_empty() {
            order.push(key);
        }
        list.push(i);
    }
    Ok(order
        .into_iter()
        .map(|key| RankedGroup {
            query_id: key.to_string(),
            candidates: members[key]
                .iter()
                .map(|&i| Candidate {
                    id: i as u64,
                    score: scores[i],
                    relevance: records[i].label,
                    relevant: records[i].label > threshold,
                })
                .collect(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn group(scores: &[f64], rel: &[f64]) -> RankedGroup {
        RankedGroup {
            query_id: "q".into(),
            candidates: scores
                .iter()
                .zip(rel)
                .enumerate()
                .map(|(i, (&s, &r))| Candidate {
                    id: i as u64,
                    score: s,
                    relevance: r,
                    relevant: r > 0.0,
                })
                .collect(),
        }
    }

    #[test]
    fn perfect_ranking() {
        let g = [
            group(&[0.9, 0.5, 0.1], &[1.0, 1.0, 0.0]),
            group(&[0.3, 0.2], &[1.0, 0.0]),
        ];
        assert_eq!(mrr(&g).unwrap(), 1.0);
        assert_eq!(map(&g).unwrap(), 1.0);
        assert_eq!(p_at_1(&g).unwrap(), 1.0);
        assert!((ndcg_at_k(&g, 3).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_inversion() {
        // labels [0, 1] with scores ranking the irrelevant one first
        let g = [group(&[0.9, 0.1], &[0.0, 1.0])];
        assert_eq!(mrr(&g).unwrap(), 0.5);
        assert_eq!(map(&g).unwrap(), 0.5);
        assert_eq!(p_at_1(&g).unwrap(), 0.0);
    }

    #[test]
    fn ties_break_by_candidate_id() {
        let g = [group(&[0.5, 0.5], &[0.0, 1.0])];
        assert_eq!(mrr(&g).unwrap(), 0.5);
        let g = [group(&[0.5, 0.5], &[1.0, 0.0])];
        assert_eq!(mrr(&g).unwrap(), 1.0);
    }

    #[test]
    fn has_positives_cases() {
        let g = [group(&[0.9, 0.8, 0.7], &[0.0, 0.0, 1.0])];
        assert_eq!(has_positives_at_k(&g, 1).unwrap(), 0.0);
        assert_eq!(has_positives_at_k(&g, 3).unwrap(), 1.0);
        assert_eq!(has_positives_at_k(&g, 10).unwrap(), 1.0);
        assert!(matches!(has_positives_at_k(&g, 0), Err(Error::Contract(_))));
        assert!(matches!(ndcg_at_k(&g, 0), Err(Error::Contract(_))));
    }

    #[test]
    fn groups_without_relevant_are_skipped() {
        let g = [
            group(&[0.9, 0.1], &[0.0, 1.0]),
            group(&[0.3, 0.2], &[0.0, 0.0]),
        ];
        assert_eq!(mrr(&g).unwrap(), 0.5);
        let report = ranking_report(&g, 1).unwrap();
        assert_eq!((report.groups_evaluated, report.groups_skipped), (1, 1));
        assert_eq!(report.metrics["mrr"], 0.5);
        assert!(matches!(mrr(&[]), Err(Error::Domain(_))));
    }

    #[test]
    fn spearman_cases() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(average_ranks(&[5.0, 1.0, 5.0, 2.0]), [3.5, 1.0, 3.5, 2.0]);
        assert!(matches!(
            spearman(&[1.0, 1.0], &[1.0, 2.0]),
            Err(Error::Domain(_))
        ));
        assert!(spearman(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn f1_cases() {
        let r = f1_with_threshold(
            &[0.1, 0.2, 0.8, 0.9],
            &[false, false, true, true],
            &[0.3, 0.7],
            &[false, true],
        )
        .unwrap();
        assert_eq!(r.dev_f1, 1.0);
        assert!(r.threshold > 0.2 && r.threshold < 0.8);
        assert_eq!(r.f1, 1.0);

        // every threshold puts the positives on the wrong side: all-positive wins
        let r =
            f1_with_threshold(&[0.9, 0.8, 0.1], &[false, false, true], &[0.5], &[true]).unwrap();
        assert!((r.dev_f1 - 0.5).abs() < 1e-15);
        assert!(r.threshold < 0.1);

        assert!(f1_with_threshold(&[0.1, 0.2], &[true, true], &[], &[]).is_err());
    }

    #[test]
    fn retrieval_protocol() {
        let recs = vec![
            PairRecord::new("1", "q1", "a1", 1.0),
            PairRecord::new("2", "q2", "a2", 1.0),
            PairRecord::new("3", "q1", "a2", 0.0),
        ];
        let (qs, ans) = retrieval_texts(&recs, 0.5);
        assert_eq!((qs, ans.clone()), (vec!["q1", "q2"], vec!["a1", "a2"]));
        let q = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let a = Matrix::from_rows(&[[1.0, 0.1], [0.1, 1.0]]).unwrap();
        let groups = retrieval_groups(&recs, 0.5, &q, &a).unwrap();
        assert_eq!(groups.len(), 2);
        assert_eq!(mrr(&groups).unwrap(), 1.0);
        assert_eq!(
            groups[0].candidates.iter().filter(|c| c.relevant).count(),
            1
        );
    }

    #[test]
    fn grouped_protocol() {
        let recs = vec![
            PairRecord::new("1", "q1", "a1", 1.0),
            PairRecord::new("2", "q1", "a2", 0.0),
            PairRecord::new("3", "q2", "a3", 1.0),
        ];
        let groups = grouped_groups(&recs, 0.5, &[0.2, 0.9, 0.5]).unwrap();
        assert_eq!(groups.len(), 2);
        assert_eq!(mrr(&groups).unwrap(), 0.75);
    }
}
