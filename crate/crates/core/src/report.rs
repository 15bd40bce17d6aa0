//! Plot-ready CSV output.

use std::io::{self, Write};

use crate::analyzer::{HeapsFit, MetricsSnapshot};
use crate::simulator::SweepResult;

pub const SNAPSHOT_COLUMNS: [&str; 18] = [
    "month",
    "cumulative_questions",
    "cumulative_tag_assignments",
    "distinct_tags",
    "h_q",
    "h_t",
    "h_q_given_t",
    "mi_paper",
    "mi_joint",
    "gini",
    "new_tag_rate",
    "mean_tag_length",
    "composite_fraction",
    "new_questions_this_month",
    "mean_tags_per_question_this_month",
    "new_tag_rate_per_assignment",
    "mean_tag_length_distinct",
    "h_t_given_q",
];

/// Formats a float with 9 significant digits, `%.9g` style.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..9).contains(&exp) {
        let fixed = format!("{:.*}", (8 - exp) as usize, x);
        trim_fraction(&fixed).to_string()
    } else {
        format!("{}e{}", trim_fraction(mantissa), exp)
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(format_sig9).unwrap_or_default()
}

/// Writes snapshots as CSV. With `users_column`, a trailing
/// `users_processed` column is added (simulation output).
pub fn write_snapshots_csv<W: Write>(
    mut w: W,
    snapshots: &[MetricsSnapshot],
    users_column: bool,
) -> io::Result<()> {
    let mut header = SNAPSHOT_COLUMNS.join(",");
    if users_column {
        header.push_str(",users_processed");
    }
    writeln!(w, "{header}")?;
    for s in snapshots {
        write!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            s.month.map(|m| m.to_string()).unwrap_or_default(),
            s.cumulative_questions,
            s.cumulative_tag_assignments,
            s.distinct_tags,
            format_sig9(s.h_q),
            format_sig9(s.h_t),
            format_sig9(s.h_q_given_t),
            format_sig9(s.mi_paper),
            format_sig9(s.mi_joint),
            format_sig9(s.gini),
            opt(s.new_tag_rate),
            opt(s.mean_tag_length),
            opt(s.composite_fraction),
            s.new_questions_this_month,
            opt(s.mean_tags_per_question_this_month),
            opt(s.new_tag_rate_per_assignment),
            opt(s.mean_tag_length_distinct),
            format_sig9(s.h_t_given_q),
        )?;
        if users_column {
            write!(
                w,
                ",{}",
                s.users_processed.map(|u| u.to_string()).unwrap_or_default()
            )?;
        }
        writeln!(w)?;
    }
    w.flush()
}

pub fn write_heaps_csv<W: Write>(mut w: W, fit: &HeapsFit) -> io::Result<()> {
    writeln!(w, "beta,k,head_fraction,r_squared")?;
    writeln!(
        w,
        "{},{},{},{}",
        format_sig9(fit.beta),
        format_sig9(fit.k),
        format_sig9(fit.head_fraction),
        format_sig9(fit.r_squared)
    )?;
    w.flush()
}

/// One row per cell, row-major in p then q.
pub fn write_sweep_csv<W: Write>(mut w: W, sweep: &SweepResult) -> io::Result<()> {
    writeln!(
        w,
        "p,q,mean_tail_slope,stddev,replicates,mean_tail_slope_mi_paper,mean_endpoint_rate"
    )?;
    for c in &sweep.cells {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            format_sig9(c.p),
            format_sig9(c.q),
            format_sig9(c.mean_tail_slope),
            format_sig9(c.stddev),
            c.replicates,
            format_sig9(c.mean_tail_slope_mi_paper),
            format_sig9(c.mean_endpoint_rate),
        )?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig9_formatting() {
        assert_eq!(format_sig9(0.0), "0");
        assert_eq!(format_sig9(1.0), "1");
        assert_eq!(format_sig9(0.918295834054489), "0.918295834");
        assert_eq!(format_sig9(24.0770043), "24.0770043");
        assert_eq!(format_sig9(-0.5), "-0.5");
        assert_eq!(format_sig9(1.5e-7), "1.5e-7");
        assert_eq!(format_sig9(6.80773819e-5), "6.80773819e-5");
        assert_eq!(format_sig9(1.25e-4), "0.000125");
        assert_eq!(format_sig9(123456789012.0), "1.23456789e11");
        assert_eq!(format_sig9(9.9999999999), "10");
        for x in [std::f64::consts::PI, 1.0 / 3.0, 12345.678901234, 3.2e-4] {
            let y: f64 = format_sig9(x).parse().unwrap();
            assert!(((x - y) / x).abs() < 1e-8);
        }
    }
}
