//! Plug-in entropy, conditional entropy, mutual information and Gini
//! coefficient over exact count tables.
//!
//! Every table keeps a running `Σ c·log2(c)` accumulator so that the
//! entropies of a growing corpus can be read off in O(1) after each
//! insertion:
//!
//! ```text
//! H(X)     = log2(N) − Σ c_x·log2(c_x) / N
//! H(Q|T)   = (Σ c_t·log2(c_t) − Σ c_qt·log2(c_qt)) / N
//! ```
//!
//! `0·log 0` is taken as 0 throughout.

use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[inline]
pub(crate) fn xlog2x(c: u64) -> f64 {
    if c <= 1 {
        0.0
    } else {
        let c = c as f64;
        c * c.log2()
    }
}

/// Exact count store with an incremental `Σ c·log2(c)` accumulator and a
/// histogram of count values (count → number of keys holding it).
#[derive(Debug, Clone)]
pub struct FrequencyTable<K> {
    counts: HashMap<K, u64>,
    total: u64,
    clogc_sum: f64,
    histogram: BTreeMap<u64, u64>,
}

impl<K> Default for FrequencyTable<K> {
    fn default() -> Self {
        Self {
            counts: HashMap::new(),
            total: 0,
            clogc_sum: 0.0,
            histogram: BTreeMap::new(),
        }
    }
}

impl<K: Eq + Hash> FrequencyTable<K> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a table from `(key, count)` pairs. Zero counts are ignored and
    /// repeated keys accumulate.
    pub fn from_counts<I: IntoIterator<Item = (K, u64)>>(pairs: I) -> Self {
        let mut table = Self::new();
        for (key, count) in pairs {
            table.add_n(key, count);
        }
        table
    }

    /// Increments the count of `item` by one.
    pub fn add(&mut self, item: K) -> u64 {
        self.add_n(item, 1)
    }

    /// Increments the count of `item` by `n`, returning the new count.
    pub fn add_n(&mut self, item: K, n: u64) -> u64 {
        if n == 0 {
            return self.count_of(&item);
        }
        let slot = self.counts.entry(item).or_insert(0);
        let old = *slot;
        let new = old + n;
        *slot = new;
        self.total += n;
        self.clogc_sum += xlog2x(new) - xlog2x(old);
        if old > 0 {
            let m = self
                .histogram
                .get_mut(&old)
                .expect("histogram tracks every count");
            *m -= 1;
            if *m == 0 {
                self.histogram.remove(&old);
            }
        }
        *self.histogram.entry(new).or_insert(0) += 1;
        new
    }

    pub fn count_of(&self, item: &K) -> u64 {
        self.counts.get(item).copied().unwrap_or(0)
    }

    pub fn contains(&self, item: &K) -> bool {
        self.counts.contains_key(item)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn distinct(&self) -> u64 {
        self.counts.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn clogc_sum(&self) -> f64 {
        self.clogc_sum
    }

    pub fn max_count(&self) -> u64 {
        self.histogram.keys().next_back().copied().unwrap_or(0)
    }

    /// Relative frequency `c/total`, or 0 for an empty table.
    pub fn frequency(&self, item: &K) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.count_of(item) as f64 / self.total as f64
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&K, u64)> {
        self.counts.iter().map(|(k, &c)| (k, c))
    }

    /// Count values in ascending order with the number of keys at each.
    pub fn count_histogram(&self) -> impl DoubleEndedIterator<Item = (u64, u64)> + '_ {
        self.histogram.iter().map(|(&c, &m)| (c, m))
    }

    /// Recomputes the `Σ c·log2(c)` accumulator from the stored counts,
    /// discarding accumulated floating-point drift.
    pub fn refresh(&mut self) {
        self.clogc_sum = self
            .histogram
            .iter()
            .map(|(&c, &m)| m as f64 * xlog2x(c))
            .sum();
    }

    pub fn entropy(&self) -> Result<f64> {
        entropy(self)
    }

    pub fn gini(&self) -> Result<f64> {
        gini(self)
    }
}

/// Shannon entropy (bits) of the relative frequencies in `table`.
pub fn entropy<K: Eq + Hash>(table: &FrequencyTable<K>) -> Result<f64> {
    if table.total == 0 {
        return Err(Error::EmptyDistribution);
    }
    let n = table.total as f64;
    Ok((n.log2() - table.clogc_sum / n).max(0.0))
}

/// `log2(|Q|)`: entropy of a uniform distribution over the questions.
pub fn uniform_question_entropy(num_questions: u64) -> Result<f64> {
    if num_questions == 0 {
        return Err(Error::EmptyCorpus);
    }
    Ok((num_questions as f64).log2())
}

/// `H(Q|T) = Σ_t p(t)·log2(n_t)`, valid when every tag occurs at most once
/// per question so that `p(q|t) = 1/n_t`.
pub fn conditional_entropy_distinct_corpus<K: Eq + Hash>(tags: &FrequencyTable<K>) -> Result<f64> {
    if tags.total == 0 {
        return Err(Error::EmptyDistribution);
    }
    Ok((tags.clogc_sum / tags.total as f64).max(0.0))
}

/// Mutual information with the uniform question marginal:
/// `log2(|Q|) − H(Q|T)`.
pub fn mutual_information_paper(num_questions: u64, h_q_given_t: f64) -> Result<f64> {
    if !h_q_given_t.is_finite() || h_q_given_t < 0.0 {
        return Err(Error::param(format!(
            "conditional entropy must be finite and non-negative, got {h_q_given_t}"
        )));
    }
    Ok(uniform_question_entropy(num_questions)? - h_q_given_t)
}

/// Gini coefficient of the count vector, using the sorted-rank formula
/// `G = 2·Σ i·x_(i) / (n·Σ x) − (n+1)/n`.
///
/// The numerator is accumulated exactly in integers from the count
/// histogram, so equal counts give exactly zero.
pub fn gini<K: Eq + Hash>(table: &FrequencyTable<K>) -> Result<f64> {
    if table.total == 0 {
        return Err(Error::EmptyDistribution);
    }
    let n = table.distinct() as u128;
    let mut rank = 0u128;
    let mut weighted = 0u128;
    for (value, mult) in table.count_histogram() {
        let (value, mult) = (value as u128, mult as u128);
        // ranks rank+1 ..= rank+mult all hold `value`
        weighted += value * (mult * rank + mult * (mult + 1) / 2);
        rank += mult;
    }
    let total = table.total as u128;
    let numerator = 2 * weighted as i128 - ((n + 1) * total) as i128;
    Ok((numerator as f64 / (n as f64 * total as f64)).max(0.0))
}

/// Joint (question, tag) assignment counts with both marginals.
#[derive(Debug, Clone)]
pub struct JointAssignmentTable<Q, T> {
    pairs: FrequencyTable<(Q, T)>,
    questions: FrequencyTable<Q>,
    tags: FrequencyTable<T>,
}

impl<Q, T> Default for JointAssignmentTable<Q, T> {
    fn default() -> Self {
        Self {
            pairs: FrequencyTable::default(),
            questions: FrequencyTable::default(),
            tags: FrequencyTable::default(),
        }
    }
}

impl<Q, T> JointAssignmentTable<Q, T>
where
    Q: Eq + Hash + Clone,
    T: Eq + Hash + Clone,
{
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, question: Q, tag: T) {
        self.questions.add(question.clone());
        self.tags.add(tag.clone());
        self.pairs.add((question, tag));
    }

    pub fn pair_count(&self, question: &Q, tag: &T) -> u64 {
        // the pair key needs owned parts
        self.pairs.count_of(&(question.clone(), tag.clone()))
    }

    pub fn pairs(&self) -> &FrequencyTable<(Q, T)> {
        &self.pairs
    }

    pub fn tag_marginal(&self) -> &FrequencyTable<T> {
        &self.tags
    }

    pub fn question_marginal(&self) -> &FrequencyTable<Q> {
        &self.questions
    }

    pub fn total_assignments(&self) -> u64 {
        self.pairs.total()
    }

    pub fn refresh(&mut self) {
        self.pairs.refresh();
        self.questions.refresh();
        self.tags.refresh();
    }
}

/// `H(Q|T) = −Σ_t p(t) Σ_q p(q|t)·log2 p(q|t)` on the joint distribution.
pub fn conditional_entropy<Q, T>(joint: &JointAssignmentTable<Q, T>) -> Result<f64>
where
    Q: Eq + Hash + Clone,
    T: Eq + Hash + Clone,
{
    let n = joint.total_assignments();
    if n == 0 {
        return Err(Error::EmptyDistribution);
    }
    Ok(((joint.tags.clogc_sum() - joint.pairs.clogc_sum()) / n as f64).max(0.0))
}

/// `H(T|Q)` on the joint distribution.
pub fn conditional_tag_entropy<Q, T>(joint: &JointAssignmentTable<Q, T>) -> Result<f64>
where
    Q: Eq + Hash + Clone,
    T: Eq + Hash + Clone,
{
    let n = joint.total_assignments();
    if n == 0 {
        return Err(Error::EmptyDistribution);
    }
    Ok(((joint.questions.clogc_sum() - joint.pairs.clogc_sum()) / n as f64).max(0.0))
}

/// `I(Q;T) = H(T) − H(T|Q)` on the joint assignment distribution.
pub fn mutual_information_joint<Q, T>(joint: &JointAssignmentTable<Q, T>) -> Result<f64>
where
    Q: Eq + Hash + Clone,
    T: Eq + Hash + Clone,
{
    Ok((entropy(&joint.tags)? - conditional_tag_entropy(joint)?).max(0.0))
}

/// Tables for a corpus in which every question occurs once and carries
/// distinct tags (the Stack Overflow regime). The joint table is never
/// materialized: every pair count is 1, so only the tag table and
/// `Σ k_q·log2(k_q)` over question degrees are needed.
#[derive(Debug, Clone)]
pub struct DistinctCorpus<K> {
    tags: FrequencyTable<K>,
    questions: u64,
    degree_clogc: f64,
}

impl<K> Default for DistinctCorpus<K> {
    fn default() -> Self {
        Self {
            tags: FrequencyTable::default(),
            questions: 0,
            degree_clogc: 0.0,
        }
    }
}

impl<K: Eq + Hash> DistinctCorpus<K> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one question. The caller guarantees the tags are distinct.
    pub fn add_question<I: IntoIterator<Item = K>>(&mut self, tags: I) {
        let mut degree = 0u64;
        for tag in tags {
            self.tags.add(tag);
            degree += 1;
        }
        self.questions += 1;
        self.degree_clogc += xlog2x(degree);
    }

    pub fn tags(&self) -> &FrequencyTable<K> {
        &self.tags
    }

    pub fn questions(&self) -> u64 {
        self.questions
    }

    pub fn assignments(&self) -> u64 {
        self.tags.total()
    }

    pub fn refresh(&mut self) {
        self.tags.refresh();
    }

    pub fn metrics(&self) -> Result<EfficiencyMetrics> {
        if self.questions == 0 || self.tags.is_empty() {
            return Err(Error::EmptyDistribution);
        }
        let h_q = uniform_question_entropy(self.questions)?;
        let h_t = entropy(&self.tags)?;
        let h_q_given_t = conditional_entropy_distinct_corpus(&self.tags)?;
        let h_t_given_q = (self.degree_clogc / self.tags.total() as f64).max(0.0);
        Ok(EfficiencyMetrics {
            h_q,
            h_t,
            h_q_given_t,
            mi_paper: h_q - h_q_given_t,
            mi_joint: (h_t - h_t_given_q).max(0.0),
            h_t_given_q,
            gini: gini(&self.tags)?,
        })
    }
}

/// All efficiency measures at one point in time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyMetrics {
    /// `log2(|Q|)`, uniform question convention.
    pub h_q: f64,
    pub h_t: f64,
    pub h_q_given_t: f64,
    /// `h_q − h_q_given_t`.
    pub mi_paper: f64,
    /// Mutual information of the joint assignment distribution.
    pub mi_joint: f64,
    pub h_t_given_q: f64,
    pub gini: f64,
}

impl EfficiencyMetrics {
    /// Measures from a general joint table, where questions may be tagged
    /// repeatedly and the question marginal need not be uniform.
    pub fn from_joint<Q, T>(joint: &JointAssignmentTable<Q, T>) -> Result<Self>
    where
        Q: Eq + Hash + Clone,
        T: Eq + Hash + Clone,
    {
        let h_q = uniform_question_entropy(joint.question_marginal().distinct())?;
        let h_q_given_t = conditional_entropy(joint)?;
        let h_t_given_q = conditional_tag_entropy(joint)?;
        let h_t = entropy(joint.tag_marginal())?;
        Ok(Self {
            h_q,
            h_t,
            h_q_given_t,
            mi_paper: h_q - h_q_given_t,
            mi_joint: (h_t - h_t_given_q).max(0.0),
            h_t_given_q,
            gini: gini(joint.tag_marginal())?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn table(counts: &[(&'static str, u64)]) -> FrequencyTable<&'static str> {
        FrequencyTable::from_counts(counts.iter().copied())
    }

    fn batch_entropy(counts: &[u64]) -> f64 {
        let n: u64 = counts.iter().sum();
        counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n as f64;
                -p * p.log2()
            })
            .sum()
    }

    fn sorted_gini(counts: &[u64]) -> f64 {
        let mut x: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
        x.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = x.len() as f64;
        let s: f64 = x.iter().sum();
        let w: f64 = x
            .iter()
            .enumerate()
            .map(|(i, v)| (i as f64 + 1.0) * v)
            .sum();
        2.0 * w / (n * s) - (n + 1.0) / n
    }

    fn mean_abs_diff_gini(counts: &[u64]) -> f64 {
        let n = counts.len() as f64;
        let mean = counts.iter().sum::<u64>() as f64 / n;
        let mut acc = 0.0;
        for &a in counts {
            for &b in counts {
                acc += (a as f64 - b as f64).abs();
            }
        }
        acc / (n * n) / (2.0 * mean)
    }

    #[test]
    fn entropy_examples() {
        assert_abs_diff_eq!(
            table(&[("a", 2), ("b", 2)]).entropy().unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            table(&[("a", 1), ("b", 1), ("c", 2)]).entropy().unwrap(),
            1.5,
            epsilon = 1e-12
        );
        assert_eq!(table(&[("a", 5)]).entropy().unwrap(), 0.0);
        assert!(matches!(
            FrequencyTable::<u32>::new().entropy(),
            Err(Error::EmptyDistribution)
        ));
    }

    #[test]
    fn uniform_question_entropy_examples() {
        assert_eq!(uniform_question_entropy(1).unwrap(), 0.0);
        assert_eq!(uniform_question_entropy(8).unwrap(), 3.0);
        let h = uniform_question_entropy(17_700_000).unwrap();
        assert!((h - 24.077).abs() < 5e-4, "{h}");
        assert!(matches!(
            uniform_question_entropy(0),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn toy_corpus_joint_measures() {
        // q1:{t1}, q2:{t1,t2}, q3:{t2}
        let mut joint = JointAssignmentTable::new();
        for (q, t) in [(1, 1), (2, 1), (2, 2), (3, 2)] {
            joint.add(q, t);
        }
        assert_abs_diff_eq!(conditional_entropy(&joint).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            conditional_tag_entropy(&joint).unwrap(),
            0.5,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            mutual_information_joint(&joint).unwrap(),
            0.5,
            epsilon = 1e-12
        );
        let mi = mutual_information_paper(3, 1.0).unwrap();
        assert_abs_diff_eq!(mi, 3f64.log2() - 1.0, epsilon = 1e-12);
        assert!((mi - 0.585).abs() < 1e-3);
        let closed = conditional_entropy_distinct_corpus(joint.tag_marginal()).unwrap();
        assert_abs_diff_eq!(closed, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn conditional_entropy_edge_cases() {
        let mut unique = JointAssignmentTable::new();
        for i in 0..4u32 {
            unique.add(i, i + 100);
        }
        assert_eq!(conditional_entropy(&unique).unwrap(), 0.0);
        assert_abs_diff_eq!(
            mutual_information_joint(&unique).unwrap(),
            2.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            mutual_information_paper(8, 0.0).unwrap(),
            3.0,
            epsilon = 1e-12
        );

        // q1:{t1,t2}, q2:{t1,t2}: tags carry no information
        let mut independent = JointAssignmentTable::new();
        for (q, t) in [(1, 1), (1, 2), (2, 1), (2, 2)] {
            independent.add(q, t);
        }
        assert_abs_diff_eq!(
            conditional_entropy(&independent).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            mutual_information_joint(&independent).unwrap(),
            0.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            mutual_information_paper(2, 1.0).unwrap(),
            0.0,
            epsilon = 1e-12
        );

        let empty: JointAssignmentTable<u32, u32> = JointAssignmentTable::new();
        assert!(conditional_entropy(&empty).is_err());
        assert!(mutual_information_joint(&empty).is_err());
    }

    #[test]
    fn distinct_corpus_closed_form_examples() {
        assert_eq!(
            conditional_entropy_distinct_corpus(&table(&[("a", 1), ("b", 1), ("c", 1)])).unwrap(),
            0.0
        );
        assert_abs_diff_eq!(
            conditional_entropy_distinct_corpus(&table(&[("t", 8)])).unwrap(),
            3.0,
            epsilon = 1e-12
        );
        assert!(conditional_entropy_distinct_corpus(&FrequencyTable::<u8>::new()).is_err());
    }

    #[test]
    fn gini_examples() {
        assert_eq!(
            table(&[("a", 1), ("b", 1), ("c", 1), ("d", 1)])
                .gini()
                .unwrap(),
            0.0
        );
        assert_abs_diff_eq!(
            table(&[("a", 1), ("b", 3)]).gini().unwrap(),
            0.25,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(mean_abs_diff_gini(&[1, 3]), 0.25, epsilon = 1e-15);
        assert_eq!(table(&[("a", 7)]).gini().unwrap(), 0.0);
        assert!(FrequencyTable::<u8>::new().gini().is_err());
    }

    #[test]
    fn table_add_examples() {
        let mut t = FrequencyTable::new();
        t.add("a");
        assert_eq!((t.total(), t.distinct(), t.clogc_sum()), (1, 1, 0.0));
        t.add("a");
        assert_abs_diff_eq!(t.clogc_sum(), 2.0, epsilon = 1e-15);
        assert_eq!(t.max_count(), 2);
    }

    #[test]
    fn million_random_adds_match_batch() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut t = FrequencyTable::new();
        let mut dense = vec![0u64; 5000];
        for _ in 0..1_000_000 {
            // skewed keys so that counts span several orders of magnitude
            let u: f64 = rng.random();
            let k = (u * u * u * 5000.0) as usize;
            t.add(k);
            dense[k] += 1;
        }
        let batch = batch_entropy(&dense);
        assert_abs_diff_eq!(t.entropy().unwrap(), batch, epsilon = 1e-9);
        let nonzero: Vec<u64> = dense.iter().copied().filter(|&c| c > 0).collect();
        assert_abs_diff_eq!(t.gini().unwrap(), sorted_gini(&nonzero), epsilon = 1e-9);
    }

    fn counts_strategy() -> impl Strategy<Value = Vec<u64>> {
        prop::collection::vec(1u64..200, 1..60)
    }

    proptest! {
        #[test]
        fn entropy_bounds(counts in counts_strategy()) {
            let t = FrequencyTable::from_counts(counts.iter().copied().enumerate());
            let h = t.entropy().unwrap();
            let max = (counts.len() as f64).log2();
            prop_assert!(h >= 0.0 && h <= max + 1e-9);
            let all_equal = counts.iter().all(|&c| c == counts[0]);
            prop_assert_eq!(all_equal, (h - max).abs() < 1e-9);
            prop_assert!((h - batch_entropy(&counts)).abs() < 1e-9);
        }

        #[test]
        fn entropy_permutation_invariant(counts in counts_strategy(), shift in 0usize..60) {
            let a = FrequencyTable::from_counts(counts.iter().copied().enumerate());
            let mut rotated = counts.clone();
            rotated.rotate_left(shift % counts.len());
            let b = FrequencyTable::from_counts(rotated.into_iter().enumerate().map(|(i, c)| (i + 1000, c)));
            prop_assert!((a.entropy().unwrap() - b.entropy().unwrap()).abs() < 1e-12);
        }

        #[test]
        fn gini_matches_oracles_and_is_scale_invariant(counts in counts_strategy(), scale in 1u64..50) {
            let t = FrequencyTable::from_counts(counts.iter().copied().enumerate());
            let g = t.gini().unwrap();
            prop_assert!((0.0..1.0).contains(&g));
            prop_assert!((g - mean_abs_diff_gini(&counts)).abs() < 1e-12);
            let scaled = FrequencyTable::from_counts(counts.iter().map(|&c| c * scale).enumerate());
            prop_assert!((scaled.gini().unwrap() - g).abs() < 1e-12);
        }

        #[test]
        fn incremental_accumulator_matches_refresh(keys in prop::collection::vec(0u16..40, 1..2000)) {
            let mut t = FrequencyTable::new();
            for k in &keys {
                t.add(*k);
            }
            let live = (t.entropy().unwrap(), conditional_entropy_distinct_corpus(&t).unwrap(), t.gini().unwrap());
            let sum: u64 = t.iter().map(|(_, c)| c).sum();
            prop_assert_eq!(sum, t.total());
            prop_assert!(t.iter().all(|(_, c)| c > 0));
            let mut fresh = t.clone();
            fresh.refresh();
            prop_assert!((live.0 - fresh.entropy().unwrap()).abs() < 1e-9);
            prop_assert!((live.1 - conditional_entropy_distinct_corpus(&fresh).unwrap()).abs() < 1e-9);
            prop_assert!((t.clogc_sum() - fresh.clogc_sum()).abs() <= 1e-9 * fresh.clogc_sum().max(1.0));
        }
    }
}
