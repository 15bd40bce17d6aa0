//! Two-urn tag growth model with reinforcement, novelty and diversity.
//!
//! Each user step picks a resource (reinforce an existing one with
//! probability `p`, otherwise create one), draws a tag count from
//! `Binomial(n, p_t)` conditioned on being at least one, and then picks
//! that many tags the resource does not carry yet (reinforce with
//! probability `q` through the selection kernel, otherwise create a fresh
//! tag). Every pick puts one more ball into the corresponding urn.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analyzer::{Metric, MetricsSnapshot};
use crate::error::{Error, Result};
use crate::estimation::{AssignmentTrace, ResourceEvent, TagEvent};
use crate::metrics::{EfficiencyMetrics, FrequencyTable, JointAssignmentTable};

pub const DEFAULT_MAX_REDRAWS: u32 = 16;
/// Rejection attempts for a softmax draw before switching to an exact scan.
const SOFTMAX_REJECTION_ATTEMPTS: u32 = 64;

/// Tag selection kernel used on reinforcement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Selection {
    /// Classical Polya draw, proportional to counts.
    Proportional,
    /// Softmax over relative frequencies with diversity factor `d`.
    Softmax { d: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Probability of reinforcing an existing resource.
    pub p: f64,
    /// Probability of reinforcing an existing tag.
    pub q: f64,
    pub selection: Selection,
    pub tag_count_n: u32,
    pub tag_count_p: f64,
    pub seed_resources: u32,
    pub seed_tags: u32,
    /// Re-draws allowed when a reinforcement hits a tag the resource
    /// already carries, before a fresh tag is created instead.
    pub max_redraws: u32,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            p: 0.0,
            q: 0.98,
            selection: Selection::Proportional,
            tag_count_n: 5,
            tag_count_p: 0.6,
            seed_resources: 1,
            seed_tags: 1,
            max_redraws: DEFAULT_MAX_REDRAWS,
        }
    }
}

impl ModelParams {
    pub fn new(p: f64, q: f64, selection: Selection) -> Self {
        Self {
            p,
            q,
            selection,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::param(format!("{name} must be in [0, 1], got {v}")))
            }
        };
        prob("p", self.p)?;
        prob("q", self.q)?;
        prob("tag_count_p", self.tag_count_p)?;
        if self.tag_count_p == 0.0 {
            return Err(Error::param("tag_count_p must be positive"));
        }
        if self.tag_count_n == 0 {
            return Err(Error::param("tag_count_n must be at least 1"));
        }
        if self.seed_resources == 0 || self.seed_tags == 0 {
            return Err(Error::param("urn seeds must be positive"));
        }
        if let Selection::Softmax { d } = self.selection {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::param(format!(
                    "diversity d must be positive, got {d}"
                )));
            }
        }
        Ok(())
    }
}

/// `exp(f_i/d) / Σ_j exp(f_j/d)`, evaluated with max subtraction.
pub fn softmax_weights(frequencies: &[f64], d: f64) -> Result<Vec<f64>> {
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(d > 0.0) {
        return Err(Error::param(format!(
            "diversity d must be positive, got {d}"
        )));
    }
    if frequencies.is_empty() {
        return Err(Error::EmptyDistribution);
    }
    let max = frequencies
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = frequencies.iter().map(|f| ((f - max) / d).exp()).collect();
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= sum);
    Ok(w)
}

/// Dense urn: item ids are `0..distinct`, one ball entry per unit of count.
#[derive(Debug, Clone)]
pub struct Urn {
    counts: Vec<u64>,
    balls: Vec<u32>,
    max_count: u64,
}

impl Urn {
    fn seeded(items: u32) -> Self {
        Self {
            counts: vec![1; items as usize],
            balls: (0..items).collect(),
            max_count: 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.balls.len() as u64
    }

    pub fn distinct(&self) -> u32 {
        self.counts.len() as u32
    }

    pub fn count(&self, id: u32) -> u64 {
        self.counts.get(id as usize).copied().unwrap_or(0)
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    fn reinforce(&mut self, id: u32) {
        let c = &mut self.counts[id as usize];
        *c += 1;
        self.max_count = self.max_count.max(*c);
        self.balls.push(id);
    }

    fn create(&mut self) -> u32 {
        let id = self.counts.len() as u32;
        self.counts.push(1);
        self.balls.push(id);
        self.max_count = self.max_count.max(1);
        id
    }

    fn draw_proportional<R: Rng>(&self, rng: &mut R) -> u32 {
        self.balls[rng.random_range(0..self.balls.len())]
    }

    /// Exact softmax draw. Rejection against the largest weight is tried
    /// first; if it keeps failing the full weight vector is scanned.
    fn draw_softmax<R: Rng>(&self, rng: &mut R, d: f64) -> u32 {
        let scale = 1.0 / (self.total() as f64 * d);
        let n = self.counts.len();
        for _ in 0..SOFTMAX_REJECTION_ATTEMPTS {
            let i = rng.random_range(0..n);
            let log_accept = (self.counts[i] as f64 - self.max_count as f64) * scale;
            if rng.random::<f64>() < log_accept.exp() {
                return i as u32;
            }
        }
        let total = self.total() as f64;
        let freqs: Vec<f64> = self.counts.iter().map(|&c| c as f64 / total).collect();
        let weights = softmax_weights(&freqs, d).expect("d validated and urn non-empty");
        let mut u: f64 = rng.random();
        for (i, w) in weights.iter().enumerate() {
            if u < *w {
                return i as u32;
            }
            u -= w;
        }
        (n - 1) as u32
    }

    pub fn to_frequency_table(&self) -> FrequencyTable<u32> {
        FrequencyTable::from_counts(self.counts.iter().enumerate().map(|(i, &c)| (i as u32, c)))
    }
}

/// Full simulator state.
#[derive(Debug, Clone)]
pub struct UrnState {
    params: ModelParams,
    resources: Urn,
    tags: Urn,
    assignments: JointAssignmentTable<u32, u32>,
    users_processed: u64,
    rng: ChaCha8Rng,
    tag_count: Binomial,
    trace: AssignmentTrace,
    fallbacks: u64,
    step_tags: Vec<u32>,
}

impl UrnState {
    pub fn new(params: ModelParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let tag_count = Binomial::new(params.tag_count_n as u64, params.tag_count_p)
            .map_err(|e| Error::param(format!("tag count distribution: {e}")))?;
        Ok(Self {
            resources: Urn::seeded(params.seed_resources),
            tags: Urn::seeded(params.seed_tags),
            trace: AssignmentTrace::new(vec![1; params.seed_tags as usize]),
            params,
            assignments: JointAssignmentTable::new(),
            users_processed: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            tag_count,
            fallbacks: 0,
            step_tags: Vec::with_capacity(8),
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn resources(&self) -> &Urn {
        &self.resources
    }

    pub fn tags(&self) -> &Urn {
        &self.tags
    }

    pub fn assignments(&self) -> &JointAssignmentTable<u32, u32> {
        &self.assignments
    }

    pub fn users_processed(&self) -> u64 {
        self.users_processed
    }

    pub fn trace(&self) -> &AssignmentTrace {
        &self.trace
    }

    pub fn into_trace(self) -> AssignmentTrace {
        self.trace
    }

    /// Steps where a reinforcement could not find an unused tag within
    /// `max_redraws` attempts and a fresh tag was created instead.
    pub fn distinctness_fallbacks(&self) -> u64 {
        self.fallbacks
    }

    /// One user: pick a resource, then tag it with 1..=n distinct tags.
    /// Returns the tags assigned in this step.
    pub fn step_user(&mut self) -> &[u32] {
        let resource_novel = !self.rng.random_bool(self.params.p);
        let resource = if resource_novel {
            self.resources.create()
        } else {
            let r = self.resources.draw_proportional(&mut self.rng);
            self.resources.reinforce(r);
            r
        };
        self.trace.resource_events.push(ResourceEvent {
            resource,
            novel: resource_novel,
        });

        let k = loop {
            let k = self.tag_count.sample(&mut self.rng);
            if k >= 1 {
                break k;
            }
        };
        let step = self.users_processed;
        self.step_tags.clear();
        for _ in 0..k {
            let mut chosen = None;
            let reinforce = self.rng.random_bool(self.params.q);
            if reinforce {
                for _ in 0..self.params.max_redraws.max(1) {
                    let t = match self.params.selection {
                        Selection::Proportional => self.tags.draw_proportional(&mut self.rng),
                        Selection::Softmax { d } => self.tags.draw_softmax(&mut self.rng, d),
                    };
                    if self.assignments.pair_count(&resource, &t) == 0 {
                        chosen = Some(t);
                        break;
                    }
                }
                if chosen.is_none() {
                    self.fallbacks += 1;
                }
            }
            let forced = reinforce && chosen.is_none();
            let (tag, novel) = match chosen {
                Some(t) => {
                    self.tags.reinforce(t);
                    (t, false)
                }
                None => (self.tags.create(), true),
            };
            self.trace.tag_events.push(TagEvent {
                step,
                tag,
                novel,
                forced,
            });
            self.step_tags.push(tag);
            self.assignments.add(resource, tag);
        }
        self.users_processed += 1;
        &self.step_tags
    }

    pub fn metrics(&self) -> Result<EfficiencyMetrics> {
        EfficiencyMetrics::from_joint(&self.assignments)
    }
}

/// Output of [`simulate`]: the snapshot trajectory and the final state.
#[derive(Debug, Clone)]
pub struct SimulationRun {
    pub snapshots: Vec<MetricsSnapshot>,
    pub state: UrnState,
}

/// Runs `users` steps, emitting a snapshot every `snapshot_every` users and
/// after the last one. Metrics use the general joint forms.
pub fn simulate(
    params: &ModelParams,
    users: u64,
    snapshot_every: u64,
    seed: u64,
) -> Result<SimulationRun> {
    if users == 0 {
        return Err(Error::param("users must be at least 1"));
    }
    if snapshot_every == 0 {
        return Err(Error::param("snapshot_every must be at least 1"));
    }
    let mut state = UrnState::new(params.clone(), seed)?;
    let mut snapshots = Vec::with_capacity((users / snapshot_every + 1) as usize);
    let mut interval = Interval::default();
    while state.users_processed < users {
        let before_resources = state.assignments.question_marginal().distinct();
        let tags = state.step_user().to_vec();
        interval.users += 1;
        interval.new_resources +=
            state.assignments.question_marginal().distinct() - before_resources;
        for t in tags {
            interval.assignments += 1;
            if state.assignments.tag_marginal().count_of(&t) == 1 {
                interval.new_tags.insert(t);
                interval.new_tag_assignments += 1;
            } else if interval.new_tags.contains(&t) {
                interval.new_tag_assignments += 1;
            }
            interval.used.insert(t);
        }
        if state.users_processed % snapshot_every == 0 || state.users_processed == users {
            snapshots.push(interval.snapshot(&state)?);
            interval = Interval::default();
        }
    }
    Ok(SimulationRun { snapshots, state })
}

#[derive(Default)]
struct Interval {
    users: u64,
    new_resources: u64,
    assignments: u64,
    new_tag_assignments: u64,
    new_tags: HashSet<u32>,
    used: HashSet<u32>,
}

impl Interval {
    fn snapshot(&self, state: &UrnState) -> Result<MetricsSnapshot> {
        let metrics = state.metrics()?;
        let joint = &state.assignments;
        Ok(MetricsSnapshot {
            cumulative_questions: joint.question_marginal().distinct(),
            cumulative_tag_assignments: joint.total_assignments(),
            distinct_tags: joint.tag_marginal().distinct(),
            new_tag_rate: Some(self.new_tags.len() as f64 / self.used.len() as f64),
            new_questions_this_month: self.new_resources,
            mean_tags_per_question_this_month: Some(self.assignments as f64 / self.users as f64),
            new_tag_rate_per_assignment: Some(
                self.new_tag_assignments as f64 / self.assignments as f64,
            ),
            users_processed: Some(state.users_processed),
            ..MetricsSnapshot::from_metrics(&metrics)
        })
    }
}

fn tail_points(trajectory: &[MetricsSnapshot], window: u64) -> Result<Vec<&MetricsSnapshot>> {
    let users = |s: &MetricsSnapshot| {
        s.users_processed
            .ok_or_else(|| Error::param("snapshot has no users_processed"))
    };
    let last = trajectory
        .last()
        .ok_or(Error::EmptyDistribution)
        .and_then(users)?;
    if last < window {
        return Err(Error::InsufficientData(format!(
            "trajectory spans {last} users, window is {window}"
        )));
    }
    let start = last - window;
    let mut out = Vec::new();
    for s in trajectory {
        if users(s)? >= start {
            out.push(s);
        }
    }
    if out.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} snapshots in the tail window",
            out.len()
        )));
    }
    Ok(out)
}

/// Least-squares slope of `metric` against users over the final `window`
/// users (bits per user).
pub fn tail_slope(trajectory: &[MetricsSnapshot], metric: Metric, window: u64) -> Result<f64> {
    let pts = tail_points(trajectory, window)?;
    let xy: Vec<(f64, f64)> = pts
        .iter()
        .map(|s| (s.users_processed.unwrap_or(0) as f64, metric.value(s)))
        .collect();
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let (sxx, sxy) = xy.iter().fold((0.0, 0.0), |(sxx, sxy), &(x, y)| {
        (sxx + (x - mx) * (x - mx), sxy + (x - mx) * (y - my))
    });
    Ok(sxy / sxx)
}

/// `(last − first) / Δusers` over the tail window.
pub fn endpoint_rate(trajectory: &[MetricsSnapshot], metric: Metric, window: u64) -> Result<f64> {
    let pts = tail_points(trajectory, window)?;
    let (a, b) = (pts[0], pts[pts.len() - 1]);
    let du = (b.users_processed.unwrap_or(0) - a.users_processed.unwrap_or(0)) as f64;
    Ok((metric.value(b) - metric.value(a)) / du)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub grid_resolution: usize,
    pub users: u64,
    pub window: u64,
    pub replicates: u32,
    pub snapshot_every: u64,
    pub root_seed: u64,
    pub metric: Metric,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            grid_resolution: 11,
            users: 4000,
            window: 1000,
            replicates: 3,
            snapshot_every: 10,
            root_seed: 0,
            metric: Metric::MiJoint,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub p: f64,
    pub q: f64,
    /// Mean over replicates of the tail slope of the swept metric.
    pub mean_tail_slope: f64,
    pub stddev: f64,
    pub replicates: u32,
    pub mean_tail_slope_mi_paper: f64,
    pub mean_endpoint_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub grid_resolution: usize,
    /// Row-major in p then q.
    pub cells: Vec<SweepCell>,
    pub replicates: u32,
    pub tail_window: u64,
}

impl SweepResult {
    pub fn cell(&self, p_index: usize, q_index: usize) -> &SweepCell {
        &self.cells[p_index * self.grid_resolution + q_index]
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one (cell, replicate) pair of a sweep rooted at `root`.
pub fn derive_seed(root: u64, cell: u64, replicate: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(root) ^ cell) ^ replicate)
}

/// Grid sweep over `p, q ∈ {0, 1/(g−1), ..., 1}`. Runs on the current rayon
/// pool; results do not depend on the number of threads.
pub fn sweep(base: &ModelParams, config: &SweepConfig) -> Result<SweepResult> {
    let g = config.grid_resolution;
    if g < 2 {
        return Err(Error::param("grid_resolution must be at least 2"));
    }
    if config.replicates == 0 {
        return Err(Error::param("replicates must be at least 1"));
    }
    base.validate()?;
    let reps = config.replicates as usize;
    let axis = |i: usize| i as f64 / (g - 1) as f64;
    let runs: Vec<(f64, f64, f64)> = (0..g * g * reps)
        .into_par_iter()
        .map(|job| {
            let (cell, rep) = (job / reps, job % reps);
            let params = ModelParams {
                p: axis(cell / g),
                q: axis(cell % g),
                ..base.clone()
            };
            let seed = derive_seed(config.root_seed, cell as u64, rep as u64);
            let run = simulate(&params, config.users, config.snapshot_every, seed)?;
            Ok((
                tail_slope(&run.snapshots, config.metric, config.window)?,
                tail_slope(&run.snapshots, Metric::MiPaper, config.window)?,
                endpoint_rate(&run.snapshots, config.metric, config.window)?,
            ))
        })
        .collect::<Result<_>>()?;
    let cells = runs
        .chunks(reps)
        .enumerate()
        .map(|(cell, chunk)| {
            let n = chunk.len() as f64;
            let mean = chunk.iter().map(|r| r.0).sum::<f64>() / n;
            let var = if chunk.len() > 1 {
                chunk.iter().map(|r| (r.0 - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            SweepCell {
                p: axis(cell / g),
                q: axis(cell % g),
                mean_tail_slope: mean,
                stddev: var.sqrt(),
                replicates: config.replicates,
                mean_tail_slope_mi_paper: chunk.iter().map(|r| r.1).sum::<f64>() / n,
                mean_endpoint_rate: chunk.iter().map(|r| r.2).sum::<f64>() / n,
            }
        })
        .collect();
    Ok(SweepResult {
        grid_resolution: g,
        cells,
        replicates: config.replicates,
        tail_window: config.window,
    })
}
