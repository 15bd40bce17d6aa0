//! Maximum-likelihood estimates of the model parameters from assignment
//! traces.
//!
//! `p̂` and `q̂` are Bernoulli MLEs (one minus the novelty fraction). The
//! diversity factor is fitted by maximizing the product of softmax
//! probabilities of the reinforced tags, replaying tag frequencies from the
//! trace. Novel tag events carry no information about `d` and are skipped.

use std::borrow::Borrow;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::QuestionRecord;
use crate::metrics::FrequencyTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceEvent {
    pub resource: u32,
    pub novel: bool,
}

/// One tag assignment. `step` indexes the resource event of the same
/// user. A resource never carries a tag twice, so reinforcement is
/// conditioned on the tags the resource already has. `forced` marks a
/// novel tag created because no admissible tag was drawn after choosing to
/// reinforce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagEvent {
    pub step: u64,
    pub tag: u32,
    pub novel: bool,
    #[serde(default)]
    pub forced: bool,
}

/// Time-ordered resource and tag events. Tag ids are dense: the initial
/// urn holds ids `0..initial_tag_counts.len()` and each novel event takes
/// the next id. The frequency snapshot of a reinforcement is implied by
/// replaying the events before it.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentTrace {
    pub initial_tag_counts: Vec<u64>,
    pub resource_events: Vec<ResourceEvent>,
    pub tag_events: Vec<TagEvent>,
}

impl AssignmentTrace {
    pub fn new(initial_tag_counts: Vec<u64>) -> Self {
        Self {
            initial_tag_counts,
            ..Self::default()
        }
    }

    /// Trace of a real corpus: every question is a new resource and each
    /// tag is novel on its first occurrence.
    pub fn from_records<I>(records: I) -> Self
    where
        I: IntoIterator,
        I::Item: Borrow<QuestionRecord>,
    {
        let mut trace = Self::default();
        let mut ids: HashMap<String, u32> = HashMap::new();
        for (step, record) in records.into_iter().enumerate() {
            trace.resource_events.push(ResourceEvent {
                resource: step as u32,
                novel: true,
            });
            for tag in &record.borrow().tags {
                let next = ids.len() as u32;
                let id = *ids.entry(tag.clone()).or_insert(next);
                trace.tag_events.push(TagEvent {
                    step: step as u64,
                    tag: id,
                    novel: id == next,
                    forced: false,
                });
            }
        }
        trace
    }

    pub fn reinforcement_events(&self) -> usize {
        self.tag_events.iter().filter(|e| !e.novel).count()
    }

    /// Checks time ordering and that every reinforcement refers to an
    /// existing item.
    pub fn validate(&self) -> Result<()> {
        let mut tags = self.initial_tag_counts.len() as u64;
        let mut last_step = 0;
        for (i, e) in self.tag_events.iter().enumerate() {
            if e.step < last_step {
                return Err(Error::InvalidTrace(format!(
                    "tag event {i} goes back in time"
                )));
            }
            last_step = e.step;
            if e.forced && !e.novel {
                return Err(Error::InvalidTrace(format!(
                    "tag event {i} is forced but not novel"
                )));
            }
            if e.novel {
                if e.tag as u64 != tags {
                    return Err(Error::InvalidTrace(format!(
                        "novel tag event {i} reuses id {}",
                        e.tag
                    )));
                }
                tags += 1;
            } else if e.tag as u64 >= tags {
                return Err(Error::InvalidTrace(format!(
                    "tag event {i} reinforces unknown tag {}",
                    e.tag
                )));
            }
        }
        Ok(())
    }
}

pub fn estimate_p(trace: &AssignmentTrace) -> Result<f64> {
    let n = trace.resource_events.len();
    if n == 0 {
        return Err(Error::InsufficientData("no resource events".into()));
    }
    let novel = trace.resource_events.iter().filter(|e| e.novel).count();
    Ok(1.0 - novel as f64 / n as f64)
}

/// Forced novel events (see [`TagEvent`]) count as reinforcement
/// decisions.
pub fn estimate_q(trace: &AssignmentTrace) -> Result<f64> {
    let n = trace.tag_events.len();
    if n == 0 {
        return Err(Error::InsufficientData("no tag events".into()));
    }
    let novel = trace
        .tag_events
        .iter()
        .filter(|e| e.novel && !e.forced)
        .count();
    Ok(1.0 - novel as f64 / n as f64)
}

/// `ln σ(f)_chosen` over the tags not excluded, where `f` are the relative
/// frequencies in `table`. Uses the count histogram, so the cost is the
/// number of distinct count values plus the number of exclusions.
fn log_softmax_prob(table: &FrequencyTable<u32>, chosen: u32, excluded: &[u32], d: f64) -> f64 {
    let scale = 1.0 / (table.total() as f64 * d);
    let mut excluded_counts: HashMap<u64, u64> = HashMap::with_capacity(excluded.len());
    for t in excluded {
        *excluded_counts.entry(table.count_of(t)).or_insert(0) += 1;
    }
    let remaining = |c: u64, m: u64| m - excluded_counts.get(&c).copied().unwrap_or(0);
    let c_max = table
        .count_histogram()
        .rev()
        .find(|&(c, m)| remaining(c, m) > 0)
        .map(|(c, _)| c)
        .expect("chosen tag is in the support");
    let sum: f64 = table
        .count_histogram()
        .map(|(c, m)| remaining(c, m) as f64 * ((c as f64 - c_max as f64) * scale).exp())
        .sum();
    (table.count_of(&chosen) as f64 - c_max as f64) * scale - sum.ln()
}

/// Sum over reinforcement events of the log softmax probability (natural
/// log) of the chosen tag, given the frequencies just before the event and
/// excluding the tags the resource already carries.
pub fn diversity_log_likelihood(trace: &AssignmentTrace, d: f64) -> Result<f64> {
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::param(format!(
            "diversity d must be positive, got {d}"
        )));
    }
    if trace.reinforcement_events() == 0 {
        return Err(Error::InsufficientData(
            "trace has no tag reinforcement events".into(),
        ));
    }
    let mut table = FrequencyTable::from_counts(
        trace
            .initial_tag_counts
            .iter()
            .enumerate()
            .map(|(i, &c)| (i as u32, c)),
    );
    let mut next_id = trace.initial_tag_counts.len() as u32;
    let mut carried: HashMap<u32, Vec<u32>> = HashMap::new();
    let mut ll = 0.0;
    for e in &trace.tag_events {
        let resource = trace
            .resource_events
            .get(e.step as usize)
            .ok_or_else(|| {
                Error::InvalidTrace(format!(
                    "tag event at step {} has no resource event",
                    e.step
                ))
            })?
            .resource;
        let tags = carried.entry(resource).or_default();
        if e.novel {
            if e.tag != next_id {
                return Err(Error::InvalidTrace(format!(
                    "novel tag id {} out of sequence",
                    e.tag
                )));
            }
            next_id += 1;
        } else {
            if !table.contains(&e.tag) || tags.contains(&e.tag) {
                return Err(Error::InvalidTrace(format!(
                    "reinforcement of unavailable tag {}",
                    e.tag
                )));
            }
            ll += log_softmax_prob(&table, e.tag, tags, d);
        }
        table.add(e.tag);
        tags.push(e.tag);
    }
    Ok(ll)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiversityFlag {
    Identified,
    /// The likelihood is flat over the interval.
    Unidentifiable,
    AtLowerBound,
    AtUpperBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiversityEstimate {
    pub d_hat: f64,
    pub flag: DiversityFlag,
    pub log_likelihood: f64,
}

/// Two decades around `d = 1`. A proportional-kernel trace has its
/// softmax optimum below the lower end.
pub const DEFAULT_D_INTERVAL: [f64; 2] = [0.1, 10.0];

const GOLDEN: f64 = 0.618_033_988_749_894_8;
const LOG_D_TOLERANCE: f64 = 1e-4;
const COARSE_POINTS: usize = 13;

/// Maximizes [`diversity_log_likelihood`] over `[lo, hi]` by golden-section
/// search on `ln d`, bracketed by a coarse grid scan. Flat likelihoods
/// return the log-scale midpoint `sqrt(lo·hi)` flagged unidentifiable.
pub fn estimate_d(trace: &AssignmentTrace, lo: f64, hi: f64) -> Result<DiversityEstimate> {
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::param(format!(
            "search interval must satisfy 0 < lo < hi, got [{lo}, {hi}]"
        )));
    }
    let (a0, b0) = (lo.ln(), hi.ln());
    let f = |x: f64| diversity_log_likelihood(trace, x.exp());
    let grid: Vec<f64> = (0..COARSE_POINTS)
        .map(|i| a0 + (b0 - a0) * i as f64 / (COARSE_POINTS - 1) as f64)
        .collect();
    let values = grid.iter().map(|&x| f(x)).collect::<Result<Vec<_>>>()?;
    let (best, &best_value) = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty grid");
    let worst = values.iter().copied().fold(f64::INFINITY, f64::min);
    if best_value - worst <= 1e-9 * best_value.abs().max(1.0) {
        return Ok(DiversityEstimate {
            d_hat: (lo * hi).sqrt(),
            flag: DiversityFlag::Unidentifiable,
            log_likelihood: best_value,
        });
    }
    let (mut a, mut b) = (
        grid[best.saturating_sub(1)],
        grid[(best + 1).min(COARSE_POINTS - 1)],
    );
    let mut x1 = b - GOLDEN * (b - a);
    let mut x2 = a + GOLDEN * (b - a);
    let (mut f1, mut f2) = (f(x1)?, f(x2)?);
    while b - a > LOG_D_TOLERANCE {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + GOLDEN * (b - a);
            f2 = f(x2)?;
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - GOLDEN * (b - a);
            f1 = f(x1)?;
        }
    }
    let x = 0.5 * (a + b);
    let (mut x_hat, mut value) = (x, f(x)?);
    // the optimum may sit on a bound, which the interior probes never reach
    for edge in [a0, b0] {
        if (x - edge).abs() < 2.0 * LOG_D_TOLERANCE {
            let v = f(edge)?;
            if v >= value {
                x_hat = edge;
                value = v;
            }
        }
    }
    let (flag, d_hat) = if x_hat - a0 < 2.0 * LOG_D_TOLERANCE {
        (DiversityFlag::AtLowerBound, lo)
    } else if b0 - x_hat < 2.0 * LOG_D_TOLERANCE {
        (DiversityFlag::AtUpperBound, hi)
    } else {
        (DiversityFlag::Identified, x_hat.exp())
    };
    Ok(DiversityEstimate {
        d_hat,
        flag,
        log_likelihood: value,
    })
}

/// JSON fit report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub p_hat: f64,
    pub q_hat: f64,
    pub d_hat: f64,
    pub d_flag: DiversityFlag,
    pub n_resource_events: u64,
    pub n_tag_events: u64,
    pub search_interval: [f64; 2],
}

/// Fits all three parameters. A trace without reinforcement events yields
/// an unidentifiable `d`.
pub fn fit(trace: &AssignmentTrace, lo: f64, hi: f64) -> Result<FitReport> {
    let (d_hat, d_flag) = if trace.reinforcement_events() == 0 {
        if !(lo > 0.0 && hi > lo) {
            return Err(Error::param("search interval must satisfy 0 < lo < hi"));
        }
        ((lo * hi).sqrt(), DiversityFlag::Unidentifiable)
    } else {
        let est = estimate_d(trace, lo, hi)?;
        (est.d_hat, est.flag)
    };
    Ok(FitReport {
        p_hat: estimate_p(trace)?,
        q_hat: estimate_q(trace)?,
        d_hat,
        d_flag,
        n_resource_events: trace.resource_events.len() as u64,
        n_tag_events: trace.tag_events.len() as u64,
        search_interval: [lo, hi],
    })
}
