//! Random corpora and from-scratch reference computations shared by the
//! integration tests.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rand::seq::IndexedRandom;
use rand::Rng;
use tagflow_core::{Month, QuestionRecord};

const WORDS: [&str; 12] = [
    "java", "c", "python", "rust", "go", "sql", "css", "html", "git", "bash", "node", "lua",
];

fn tag_name(i: usize) -> String {
    let base = WORDS[i % WORDS.len()];
    match i / WORDS.len() {
        0 => base.to_string(),
        // every other block is composite
        g if g % 2 == 1 => format!("{base}-{g}"),
        g => format!("{base}{g}"),
    }
}

/// A month-sorted corpus of `n` questions over `months` months drawn from a
/// skewed vocabulary of `vocab` tags.
pub fn random_corpus<R: Rng>(
    rng: &mut R,
    n: usize,
    months: usize,
    vocab: usize,
) -> Vec<QuestionRecord> {
    let start = Month::new(2009, 1).unwrap();
    let mut month_of: Vec<usize> = (0..n).map(|_| rng.random_range(0..months.max(1))).collect();
    month_of.sort_unstable();
    let mut records = Vec::with_capacity(n);
    for (id, &m) in month_of.iter().enumerate() {
        let mut month = start;
        for _ in 0..m {
            month = month.succ();
        }
        let k = rng.random_range(1..=5usize.min(vocab));
        let mut tags: Vec<String> = Vec::with_capacity(k);
        while tags.len() < k {
            // squaring a uniform skews towards low indices
            let u: f64 = rng.random();
            let t = tag_name(((u * u) * vocab as f64) as usize % vocab);
            if !tags.contains(&t) {
                tags.push(t);
            }
        }
        records.push(QuestionRecord::new(id as u64 + 1, month, &tags).unwrap());
    }
    records
}

/// A random corpus where every question carries exactly `k` tags.
pub fn fixed_degree_corpus<R: Rng>(
    rng: &mut R,
    n: usize,
    k: usize,
    vocab: usize,
) -> Vec<QuestionRecord> {
    let month = Month::new(2015, 6).unwrap();
    let names: Vec<String> = (0..vocab).map(tag_name).collect();
    (0..n)
        .map(|id| {
            let tags: Vec<&String> = names.choose_multiple(rng, k).collect();
            QuestionRecord::new(id as u64, month, &tags).unwrap()
        })
        .collect()
}

pub fn log2(x: f64) -> f64 {
    x.log2()
}

/// Reference values for one cumulative snapshot, from an explicitly
/// enumerated joint distribution p(q, t).
#[derive(Debug, Clone)]
pub struct Reference {
    pub month: Month,
    pub cumulative_questions: u64,
    pub cumulative_tag_assignments: u64,
    pub distinct_tags: u64,
    pub h_q: f64,
    pub h_t: f64,
    pub h_q_given_t: f64,
    pub h_t_given_q: f64,
    pub mi_paper: f64,
    pub mi_joint: f64,
    pub h_q_joint: f64,
    pub gini: f64,
    pub new_tag_rate: f64,
    pub new_tag_rate_per_assignment: f64,
    pub mean_tag_length: f64,
    pub mean_tag_length_distinct: f64,
    pub composite_fraction: f64,
    pub new_questions_this_month: u64,
    pub mean_tags_per_question_this_month: f64,
}

pub struct JointRef {
    pub h_q_joint: f64,
    pub h_t: f64,
    pub h_q_given_t: f64,
    pub h_t_given_q: f64,
    pub mi: f64,
}

/// Direct summation over the full |Q|×|T| grid, zero cells included.
pub fn joint_reference(questions: &[Vec<String>]) -> JointRef {
    let tags: Vec<&String> = questions
        .iter()
        .flatten()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: HashMap<&String, usize> = tags.iter().enumerate().map(|(i, t)| (*t, i)).collect();
    let mut grid = vec![vec![0.0f64; tags.len()]; questions.len()];
    let mut n = 0.0;
    for (qi, q) in questions.iter().enumerate() {
        for t in q {
            grid[qi][index[t]] += 1.0;
            n += 1.0;
        }
    }
    for row in &mut grid {
        for c in row.iter_mut() {
            *c /= n;
        }
    }
    let pq: Vec<f64> = grid.iter().map(|row| row.iter().sum()).collect();
    let pt: Vec<f64> = (0..tags.len())
        .map(|j| grid.iter().map(|row| row[j]).sum())
        .collect();
    let mut r = JointRef {
        h_q_joint: 0.0,
        h_t: 0.0,
        h_q_given_t: 0.0,
        h_t_given_q: 0.0,
        mi: 0.0,
    };
    for &p in &pq {
        if p > 0.0 {
            r.h_q_joint -= p * log2(p);
        }
    }
    for &p in &pt {
        if p > 0.0 {
            r.h_t -= p * log2(p);
        }
    }
    for (qi, row) in grid.iter().enumerate() {
        for (tj, &p) in row.iter().enumerate() {
            if p > 0.0 {
                r.h_q_given_t -= p * log2(p / pt[tj]);
                r.h_t_given_q -= p * log2(p / pq[qi]);
                r.mi += p * log2(p / (pq[qi] * pt[tj]));
            }
        }
    }
    r
}

/// Gini coefficient by the mean absolute difference over all pairs.
pub fn gini_reference(counts: &[f64]) -> f64 {
    let n = counts.len() as f64;
    let mean = counts.iter().sum::<f64>() / n;
    let mut diff = 0.0;
    for a in counts {
        for b in counts {
            diff += (a - b).abs();
        }
    }
    diff / (2.0 * n * n * mean)
}

/// One reference snapshot per month, each recomputed from scratch on the
/// corpus prefix.
pub fn reference_trajectory(corpus: &[QuestionRecord]) -> Vec<Reference> {
    let mut by_month: BTreeMap<Month, Vec<&QuestionRecord>> = BTreeMap::new();
    for r in corpus {
        by_month.entry(r.month).or_default().push(r);
    }
    let mut out = Vec::new();
    let mut prefix: Vec<Vec<String>> = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (month, records) in by_month {
        for r in &records {
            prefix.push(r.tags.clone());
        }
        let joint = joint_reference(&prefix);
        let mut counts: HashMap<&str, f64> = HashMap::new();
        for t in prefix.iter().flatten() {
            *counts.entry(t.as_str()).or_default() += 1.0;
        }
        let count_vec: Vec<f64> = counts.values().copied().collect();

        let used: BTreeSet<&String> = records.iter().flat_map(|r| r.tags.iter()).collect();
        let assignments: Vec<&String> = records.iter().flat_map(|r| r.tags.iter()).collect();
        let a = assignments.len() as f64;
        let new_used = used.iter().filter(|t| !seen.contains(t.as_str())).count() as f64;
        let new_assign = assignments
            .iter()
            .filter(|t| !seen.contains(t.as_str()))
            .count() as f64;
        let len = |t: &String| t.chars().count() as f64;
        let nq = prefix.len() as f64;
        let h_q = log2(nq);
        out.push(Reference {
            month,
            cumulative_questions: prefix.len() as u64,
            cumulative_tag_assignments: prefix.iter().map(Vec::len).sum::<usize>() as u64,
            distinct_tags: counts.len() as u64,
            h_q,
            h_t: joint.h_t,
            h_q_given_t: joint.h_q_given_t,
            h_t_given_q: joint.h_t_given_q,
            mi_paper: h_q - joint.h_q_given_t,
            mi_joint: joint.mi,
            h_q_joint: joint.h_q_joint,
            gini: gini_reference(&count_vec),
            new_tag_rate: new_used / used.len() as f64,
            new_tag_rate_per_assignment: new_assign / a,
            mean_tag_length: assignments.iter().map(|t| len(t)).sum::<f64>() / a,
            mean_tag_length_distinct: used.iter().map(|t| len(t)).sum::<f64>() / used.len() as f64,
            composite_fraction: assignments.iter().filter(|t| t.contains('-')).count() as f64 / a,
            new_questions_this_month: records.len() as u64,
            mean_tags_per_question_this_month: a / records.len() as f64,
        });
        for t in used {
            seen.insert(t.clone());
        }
    }
    out
}
