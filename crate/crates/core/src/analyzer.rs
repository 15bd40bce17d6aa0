//! Longitudinal measurements over a month-sorted question corpus.
//!
//! A [`TrajectoryBuilder`] consumes records in a single pass and emits one
//! [`MetricsSnapshot`] per calendar month present, computed on the
//! cumulative corpus through that month. Per-month statistics (new-tag
//! rate, tag length, composite fraction) only look at that month's records.

use std::borrow::Borrow;
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Month, QuestionRecord, MAX_TAGS_PER_QUESTION};
use crate::metrics::{DistinctCorpus, EfficiencyMetrics};

/// Default head cutoff for the Heaps fit.
pub const DEFAULT_HEAD_FRACTION: f64 = 0.1;
/// Upper bound on the number of log-spaced curve points used in a fit.
pub const HEAPS_MAX_POINTS: usize = 1000;

/// One row of the longitudinal output.
///
/// Field order is the CSV column order. `month` is empty for simulated
/// runs, where `users_processed` is set instead and the "month" fields
/// refer to the interval since the previous snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSnapshot {
    pub month: Option<Month>,
    pub cumulative_questions: u64,
    pub cumulative_tag_assignments: u64,
    pub distinct_tags: u64,
    pub h_q: f64,
    pub h_t: f64,
    pub h_q_given_t: f64,
    pub mi_paper: f64,
    pub mi_joint: f64,
    pub gini: f64,
    /// New distinct tags over distinct tags used in the month.
    pub new_tag_rate: Option<f64>,
    /// Mean characters per tag assignment in the month.
    pub mean_tag_length: Option<f64>,
    /// Fraction of the month's tag assignments that are composite.
    pub composite_fraction: Option<f64>,
    pub new_questions_this_month: u64,
    pub mean_tags_per_question_this_month: Option<f64>,
    /// New-tag assignments over all assignments in the month.
    pub new_tag_rate_per_assignment: Option<f64>,
    /// Mean characters per distinct tag used in the month.
    pub mean_tag_length_distinct: Option<f64>,
    pub h_t_given_q: f64,
    pub users_processed: Option<u64>,
}

impl MetricsSnapshot {
    pub(crate) fn from_metrics(m: &EfficiencyMetrics) -> Self {
        Self {
            month: None,
            cumulative_questions: 0,
            cumulative_tag_assignments: 0,
            distinct_tags: 0,
            h_q: m.h_q,
            h_t: m.h_t,
            h_q_given_t: m.h_q_given_t,
            mi_paper: m.mi_paper,
            mi_joint: m.mi_joint,
            gini: m.gini,
            new_tag_rate: None,
            mean_tag_length: None,
            composite_fraction: None,
            new_questions_this_month: 0,
            mean_tags_per_question_this_month: None,
            new_tag_rate_per_assignment: None,
            mean_tag_length_distinct: None,
            h_t_given_q: m.h_t_given_q,
            users_processed: None,
        }
    }
}

/// Selects one numeric series of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    HQ,
    HT,
    HQGivenT,
    /// `−h_q_given_t`: higher is easier retrieval.
    RetrievalEfficiency,
    MiPaper,
    MiJoint,
    HTGivenQ,
    Gini,
}

impl Metric {
    pub fn value(self, s: &MetricsSnapshot) -> f64 {
        match self {
            Metric::HQ => s.h_q,
            Metric::HT => s.h_t,
            Metric::HQGivenT => s.h_q_given_t,
            Metric::RetrievalEfficiency => -s.h_q_given_t,
            Metric::MiPaper => s.mi_paper,
            Metric::MiJoint => s.mi_joint,
            Metric::HTGivenQ => s.h_t_given_q,
            Metric::Gini => s.gini,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::HQ => "h_q",
            Metric::HT => "h_t",
            Metric::HQGivenT => "h_q_given_t",
            Metric::RetrievalEfficiency => "retrieval_efficiency",
            Metric::MiPaper => "mi_paper",
            Metric::MiJoint => "mi_joint",
            Metric::HTGivenQ => "h_t_given_q",
            Metric::Gini => "gini",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Metric::HQ,
            Metric::HT,
            Metric::HQGivenT,
            Metric::RetrievalEfficiency,
            Metric::MiPaper,
            Metric::MiJoint,
            Metric::HTGivenQ,
            Metric::Gini,
        ]
        .into_iter()
        .find(|m| m.name() == s)
        .ok_or_else(|| Error::param(format!("unknown metric {s:?}")))
    }
}

/// True iff the tag contains at least one dash.
pub fn is_composite(tag: &str) -> bool {
    tag.contains('-')
}

#[derive(Debug)]
struct MonthStats {
    month: Month,
    first_new_id: u32,
    questions: u64,
    assignments: u64,
    new_tag_assignments: u64,
    length_sum: u64,
    composite_assignments: u64,
    used: HashSet<u32>,
    distinct_length_sum: u64,
}

/// Single-pass builder for a monthly trajectory.
#[derive(Debug, Default)]
pub struct TrajectoryBuilder {
    ids: HashMap<String, u32>,
    corpus: DistinctCorpus<u32>,
    month: Option<MonthStats>,
    snapshots: Vec<MetricsSnapshot>,
}

impl TrajectoryBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds the next record. Records must be in non-decreasing month order
    /// and question ids are assumed unique.
    pub fn push(&mut self, record: &QuestionRecord) -> Result<()> {
        match &self.month {
            Some(cur) if record.month < cur.month => {
                return Err(Error::UnsortedInput {
                    previous: cur.month.to_string(),
                    found: record.month.to_string(),
                })
            }
            Some(cur) if record.month == cur.month => {}
            _ => {
                self.close_month()?;
                self.month = Some(MonthStats {
                    month: record.month,
                    first_new_id: self.ids.len() as u32,
                    questions: 0,
                    assignments: 0,
                    new_tag_assignments: 0,
                    length_sum: 0,
                    composite_assignments: 0,
                    used: HashSet::new(),
                    distinct_length_sum: 0,
                });
            }
        }
        let stats = self.month.as_mut().expect("month opened above");
        let mut ids = [0u32; MAX_TAGS_PER_QUESTION];
        for (slot, tag) in ids.iter_mut().zip(&record.tags) {
            let id = match self.ids.get(tag.as_str()) {
                Some(&id) => id,
                None => {
                    let id = self.ids.len() as u32;
                    self.ids.insert(tag.clone(), id);
                    id
                }
            };
            *slot = id;
            let len = tag.chars().count() as u64;
            stats.assignments += 1;
            stats.length_sum += len;
            if id >= stats.first_new_id {
                stats.new_tag_assignments += 1;
            }
            if is_composite(tag) {
                stats.composite_assignments += 1;
            }
            if stats.used.insert(id) {
                stats.distinct_length_sum += len;
            }
        }
        stats.questions += 1;
        self.corpus
            .add_question(ids[..record.tags.len()].iter().copied());
        Ok(())
    }

    fn close_month(&mut self) -> Result<()> {
        let Some(stats) = self.month.take() else {
            return Ok(());
        };
        self.corpus.refresh();
        let metrics = self.corpus.metrics()?;
        let distinct_used = stats.used.len() as f64;
        let assignments = stats.assignments as f64;
        let new_distinct = self.ids.len() as u32 - stats.first_new_id;
        self.snapshots.push(MetricsSnapshot {
            month: Some(stats.month),
            cumulative_questions: self.corpus.questions(),
            cumulative_tag_assignments: self.corpus.assignments(),
            distinct_tags: self.corpus.tags().distinct(),
            new_tag_rate: Some(new_distinct as f64 / distinct_used),
            mean_tag_length: Some(stats.length_sum as f64 / assignments),
            composite_fraction: Some(stats.composite_assignments as f64 / assignments),
            new_questions_this_month: stats.questions,
            mean_tags_per_question_this_month: Some(assignments / stats.questions as f64),
            new_tag_rate_per_assignment: Some(stats.new_tag_assignments as f64 / assignments),
            mean_tag_length_distinct: Some(stats.distinct_length_sum as f64 / distinct_used),
            ..MetricsSnapshot::from_metrics(&metrics)
        });
        Ok(())
    }

    pub fn questions(&self) -> u64 {
        self.corpus.questions()
    }

    pub fn finish(mut self) -> Result<Vec<MetricsSnapshot>> {
        self.close_month()?;
        if self.snapshots.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        Ok(self.snapshots)
    }
}

/// Cumulative monthly metrics over a month-sorted corpus.
pub fn monthly_trajectory<I>(corpus: I) -> Result<Vec<MetricsSnapshot>>
where
    I: IntoIterator,
    I::Item: Borrow<QuestionRecord>,
{
    let mut builder = TrajectoryBuilder::new();
    for r in corpus {
        builder.push(r.borrow())?;
    }
    builder.finish()
}

fn filtered_trajectory<I, F>(corpus: I, keep: F) -> Result<Vec<MetricsSnapshot>>
where
    I: IntoIterator,
    I::Item: Borrow<QuestionRecord>,
    F: Fn(&QuestionRecord) -> bool,
{
    let mut builder = TrajectoryBuilder::new();
    for r in corpus {
        let r = r.borrow();
        if keep(r) {
            builder.push(r)?;
        }
    }
    if builder.questions() == 0 {
        return Ok(Vec::new());
    }
    builder.finish()
}

/// Trajectory restricted to questions with at most `max_tags` tags.
pub fn stratified_trajectory<I>(corpus: I, max_tags: usize) -> Result<Vec<MetricsSnapshot>>
where
    I: IntoIterator,
    I::Item: Borrow<QuestionRecord>,
{
    if !(1..=MAX_TAGS_PER_QUESTION).contains(&max_tags) {
        return Err(Error::param(format!(
            "max_tags must be in 1..=5, got {max_tags}"
        )));
    }
    filtered_trajectory(corpus, |r| r.tag_count() <= max_tags)
}

pub fn has_composite_tag(record: &QuestionRecord) -> bool {
    record.tags.iter().any(|t| is_composite(t))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeSplit {
    /// Questions carrying at least one composite tag.
    pub composite: Vec<MetricsSnapshot>,
    /// Questions with simple tags only.
    pub simple: Vec<MetricsSnapshot>,
}

/// Runs the pipeline separately on questions with and without a composite tag.
pub fn composite_split_trajectory(corpus: &[QuestionRecord]) -> Result<CompositeSplit> {
    Ok(CompositeSplit {
        composite: filtered_trajectory(corpus, has_composite_tag)?,
        simple: filtered_trajectory(corpus, |r| !has_composite_tag(r))?,
    })
}

/// Fraction of distinct tags used in `month_records` that are not in `seen_tags`.
pub fn new_tag_rate(month_records: &[QuestionRecord], seen_tags: &HashSet<String>) -> Option<f64> {
    let used: HashSet<&str> = month_records
        .iter()
        .flat_map(|r| r.tags.iter().map(String::as_str))
        .collect();
    if used.is_empty() {
        return None;
    }
    let new = used.iter().filter(|t| !seen_tags.contains(**t)).count();
    Some(new as f64 / used.len() as f64)
}

/// Mean characters per tag assignment.
pub fn mean_tag_length(month_records: &[QuestionRecord]) -> Option<f64> {
    let (sum, n) = month_records
        .iter()
        .flat_map(|r| &r.tags)
        .fold((0usize, 0usize), |(s, n), t| (s + t.chars().count(), n + 1));
    (n > 0).then(|| sum as f64 / n as f64)
}

/// Least-squares fit of `log2 D = log2 k + β·log2 n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeapsFit {
    pub beta: f64,
    pub k: f64,
    pub head_fraction: f64,
    /// Inclusive range of assignment counts `n` covered by the fit.
    pub fit_range: (u64, u64),
    pub points: usize,
    pub r_squared: f64,
}

/// Fits a power law to `(n, D(n))` points with positive coordinates.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    if points.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} curve points, need 3",
            points.len()
        )));
    }
    if points.iter().any(|&(n, d)| !(n > 0.0 && d > 0.0)) {
        return Err(Error::param("power-law points must be positive"));
    }
    let m = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(sx, sy), &(n, d)| {
        (sx + n.log2(), sy + d.log2())
    });
    let (mx, my) = (sx / m, sy / m);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(n, d) in points {
        let (dx, dy) = (n.log2() - mx, d.log2() - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::InsufficientData(
            "all curve points share one n".into(),
        ));
    }
    let beta = sxy / sxx;
    let intercept = my - beta * mx;
    let ss_res = (syy - beta * sxy).max(0.0);
    let r_squared = if syy <= f64::EPSILON * m {
        1.0
    } else {
        1.0 - ss_res / syy
    };
    Ok((beta, intercept.exp2(), r_squared))
}

/// Integer sample positions, log-spaced over `1..=cutoff`.
pub fn log_spaced_positions(cutoff: u64, max_points: usize) -> Vec<u64> {
    if cutoff == 0 || max_points == 0 {
        return Vec::new();
    }
    if cutoff as u128 <= max_points as u128 {
        return (1..=cutoff).collect();
    }
    let top = (cutoff as f64).ln();
    let steps = (max_points - 1) as f64;
    let mut out: Vec<u64> = (0..max_points)
        .map(|j| ((top * j as f64 / steps).exp().round() as u64).clamp(1, cutoff))
        .collect();
    out.dedup();
    if out.last() != Some(&cutoff) {
        out.push(cutoff);
    }
    out
}

/// Fits Heaps' law to the distinct-vocabulary curve of a stream of tag
/// assignments whose length is `total`. Only the first
/// `ceil(head_fraction·total)` assignments are used.
pub fn heaps_fit_assignments<I, K>(
    assignments: I,
    total: u64,
    head_fraction: f64,
) -> Result<HeapsFit>
where
    I: IntoIterator<Item = K>,
    K: std::hash::Hash + Eq,
{
    if !(head_fraction > 0.0 && head_fraction <= 1.0) {
        return Err(Error::param(format!(
            "head_fraction must be in (0, 1], got {head_fraction}"
        )));
    }
    if total == 0 {
        return Err(Error::EmptyCorpus);
    }
    let cutoff = ((head_fraction * total as f64).ceil() as u64).clamp(1, total);
    let positions = log_spaced_positions(cutoff, HEAPS_MAX_POINTS);
    let mut seen: HashSet<K> = HashSet::new();
    let mut points = Vec::with_capacity(positions.len());
    let mut next = positions.iter().peekable();
    for (i, tag) in assignments.into_iter().enumerate() {
        let n = i as u64 + 1;
        seen.insert(tag);
        if next.peek() == Some(&&n) {
            next.next();
            points.push((n as f64, seen.len() as f64));
        }
        if n == cutoff {
            break;
        }
    }
    let (beta, k, r_squared) = fit_power_law(&points)?;
    Ok(HeapsFit {
        beta,
        k,
        head_fraction,
        fit_range: (1, cutoff),
        points: points.len(),
        r_squared,
    })
}

/// Heaps'-law fit over a corpus in file order.
pub fn heaps_fit(corpus: &[QuestionRecord], head_fraction: f64) -> Result<HeapsFit> {
    let total: u64 = corpus.iter().map(|r| r.tags.len() as u64).sum();
    if total == 0 {
        return Err(Error::EmptyCorpus);
    }
    heaps_fit_assignments(
        corpus
            .iter()
            .flat_map(|r| r.tags.iter().map(String::as_str)),
        total,
        head_fraction,
    )
}
