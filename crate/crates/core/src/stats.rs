//! Paired comparison of two models on question-aligned binary labels.
//!
//! All statistics derive from a 2×2 [`ContingencyTable`]:
//!
//! ```text
//!                 model B correct   model B wrong
//! model A correct        a                b
//! model A wrong          c                d
//! ```
//!
//! * McNemar's exact test (two-sided, no continuity correction) on `b` vs `c`,
//!   evaluated with exact rational arithmetic.
//! * Δ-accuracy `(b − c)/n` with a 95% interval. The default interval is the
//!   normal-approximation paired difference; Newcombe's hybrid score method is
//!   available through [`CiMethod::NewcombeHybrid`].
//! * Cohen's κ, undefined when the expected agreement is 1.
//!
//! [`compare`] renders rows in the usual reporting layout: p-values suppressed
//! when `b + c < 5`, percentages to one decimal and κ to three decimals.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::studydef::ConditionKind;

/// Discordant-pair count below which the p-value is shown as `-`.
pub const SUPPRESSION_THRESHOLD: u64 = 5;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("contingency table is empty (a + b + c + d = 0)")]
    EmptyTable,
    #[error("confidence level {0} is outside (0, 1)")]
    InvalidConfidence(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContingencyTable {
    /// Both models correct.
    pub a: u64,
    /// First model correct, second wrong.
    pub b: u64,
    /// First model wrong, second correct.
    pub c: u64,
    /// Both wrong.
    pub d: u64,
}

impl ContingencyTable {
    pub fn new(a: u64, b: u64, c: u64, d: u64) -> Result<Self, StatsError> {
        if a + b + c + d == 0 {
            return Err(StatsError::EmptyTable);
        }
        Ok(Self { a, b, c, d })
    }

    pub fn n(&self) -> u64 {
        self.a + self.b + self.c + self.d
    }

    pub fn discordant(&self) -> u64 {
        self.b + self.c
    }

    /// Table with the two models exchanged.
    pub fn swapped(&self) -> Self {
        Self { a: self.a, b: self.c, c: self.b, d: self.d }
    }

    pub fn accuracy_first(&self) -> f64 {
        (self.a + self.b) as f64 / self.n() as f64
    }

    pub fn accuracy_second(&self) -> f64 {
        (self.a + self.c) as f64 / self.n() as f64
    }

    /// Rendered as `(a, b; c, d)`.
    pub fn display(&self) -> String {
        format!("({}, {}; {}, {})", self.a, self.b, self.c, self.d)
    }
}

fn binomial(m: u64, k: u64) -> BigUint {
    let k = k.min(m - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc = acc * BigUint::from(m - i) / BigUint::from(i + 1);
    }
    acc
}

/// Exact two-sided McNemar p-value as a rational, `None` when `b + c = 0`.
pub fn mcnemar_exact_ratio(table: &ContingencyTable) -> Option<BigRational> {
    let m = table.discordant();
    if m == 0 {
        return None;
    }
    let tail: BigUint = (0..=table.b.min(table.c)).map(|k| binomial(m, k)).sum();
    let numerator = BigInt::from(tail) * 2;
    let denominator = BigInt::from(BigUint::one() << m as usize);
    let p = BigRational::new(numerator, denominator);
    Some(p.min(BigRational::one()))
}

pub fn mcnemar_exact(table: &ContingencyTable) -> Option<f64> {
    mcnemar_exact_ratio(table).and_then(|p| p.to_f64())
}

/// Two-sided standard-normal quantile for the given confidence level.
pub fn z_for_confidence(confidence: f64) -> Result<f64, StatsError> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(StatsError::InvalidConfidence(confidence));
    }
    let normal = Normal::standard();
    Ok(normal.inverse_cdf(0.5 + confidence / 2.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CiMethod {
    /// `Δ ± z·sqrt((b+c) − (b−c)²/n)/n`.
    #[default]
    PairedWald,
    /// Newcombe's square-and-add interval built from Wilson score limits of the
    /// two marginal proportions, corrected by the phi coefficient.
    NewcombeHybrid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaInterval {
    pub delta: f64,
    pub low: f64,
    pub high: f64,
}

pub fn delta_accuracy_ci(
    table: &ContingencyTable,
    confidence: f64,
    method: CiMethod,
) -> Result<DeltaInterval, StatsError> {
    let z = z_for_confidence(confidence)?;
    let n = table.n() as f64;
    let (b, c) = (table.b as f64, table.c as f64);
    let delta = (b - c) / n;
    let (low, high) = match method {
        CiMethod::PairedWald => {
            // Guard against a tiny negative radicand from rounding.
            let radicand = ((b + c) - (b - c).powi(2) / n).max(0.0);
            let half = z * radicand.sqrt() / n;
            (delta - half, delta + half)
        }
        CiMethod::NewcombeHybrid => newcombe_hybrid(table, z, delta),
    };
    Ok(DeltaInterval { delta, low: low.clamp(-1.0, 1.0), high: high.clamp(-1.0, 1.0) })
}

fn wilson(successes: f64, n: f64, z: f64) -> (f64, f64) {
    let z2 = z * z;
    let centre = (successes + z2 / 2.0) / (n + z2);
    let half = z * (successes * (n - successes) / n + z2 / 4.0).sqrt() / (n + z2);
    (centre - half, centre + half)
}

fn newcombe_hybrid(table: &ContingencyTable, z: f64, delta: f64) -> (f64, f64) {
    let n = table.n() as f64;
    let (a, b, c, d) = (table.a as f64, table.b as f64, table.c as f64, table.d as f64);
    let p1 = (a + b) / n;
    let p2 = (a + c) / n;
    let (l1, u1) = wilson(a + b, n, z);
    let (l2, u2) = wilson(a + c, n, z);
    let marginals = (a + b) * (c + d) * (a + c) * (b + d);
    let phi = if marginals > 0.0 { (a * d - b * c) / marginals.sqrt() } else { 0.0 };
    let lower_sq = (p1 - l1).powi(2) - 2.0 * phi * (p1 - l1) * (u2 - p2) + (u2 - p2).powi(2);
    let upper_sq = (u1 - p1).powi(2) - 2.0 * phi * (u1 - p1) * (p2 - l2) + (p2 - l2).powi(2);
    (delta - lower_sq.max(0.0).sqrt(), delta + upper_sq.max(0.0).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agreement {
    pub observed: BigRational,
    pub expected: BigRational,
}

pub fn agreement(table: &ContingencyTable) -> Agreement {
    let n = BigInt::from(table.n());
    let (a, b, c, d) = (
        BigInt::from(table.a),
        BigInt::from(table.b),
        BigInt::from(table.c),
        BigInt::from(table.d),
    );
    let observed = BigRational::new(&a + &d, n.clone());
    let chance = (&a + &b) * (&a + &c) + (&c + &d) * (&b + &d);
    let expected = BigRational::new(chance, &n * &n);
    Agreement { observed, expected }
}

/// Cohen's κ as an exact rational, `None` when the expected agreement is 1.
pub fn cohens_kappa_ratio(table: &ContingencyTable) -> Option<BigRational> {
    let Agreement { observed, expected } = agreement(table);
    if expected.is_one() {
        return None;
    }
    Some((observed - &expected) / (BigRational::one() - expected))
}

pub fn cohens_kappa(table: &ContingencyTable) -> Option<f64> {
    cohens_kappa_ratio(table).and_then(|k| k.to_f64())
}

/// Every statistic for one table.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedComparison {
    pub table: ContingencyTable,
    pub p_value: Option<f64>,
    pub p_exact: Option<BigRational>,
    /// Set when `b + c < 5`; the p-value stays available programmatically.
    pub p_suppressed: bool,
    pub delta: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub kappa: Option<f64>,
    pub observed_agreement: f64,
    pub expected_agreement: f64,
}

impl PairedComparison {
    pub fn compute(table: ContingencyTable, method: CiMethod) -> Self {
        let p_exact = mcnemar_exact_ratio(&table);
        let interval = delta_accuracy_ci(&table, 0.95, method)
            .expect("0.95 is a valid confidence level");
        let Agreement { observed, expected } = agreement(&table);
        Self {
            table,
            p_value: p_exact.as_ref().and_then(|p| p.to_f64()),
            p_exact,
            p_suppressed: table.discordant() < SUPPRESSION_THRESHOLD,
            delta: interval.delta,
            ci_low: interval.low,
            ci_high: interval.high,
            kappa: cohens_kappa(&table),
            observed_agreement: observed.to_f64().unwrap_or(f64::NAN),
            expected_agreement: expected.to_f64().unwrap_or(f64::NAN),
        }
    }

    pub fn p_display(&self) -> String {
        match (&self.p_exact, self.p_suppressed) {
            (Some(p), false) => format_rational(p, 4),
            _ => "-".to_string(),
        }
    }

    pub fn delta_display(&self) -> String {
        format!(
            "{} [{}, {}]",
            format_signed(self.delta * 100.0, 1),
            format_signed(self.ci_low * 100.0, 1),
            format_signed(self.ci_high * 100.0, 1)
        )
    }

    pub fn kappa_display(&self) -> String {
        match self.kappa {
            Some(k) => format_plain(k, 3),
            None => "- (κ undefined)".to_string(),
        }
    }
}

/// Rounds half away from zero at `decimals` places.
pub fn round_half_away(x: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    let scaled = (x.abs() * scale + 0.5).floor() / scale;
    if x < 0.0 {
        -scaled
    } else {
        scaled
    }
}

/// Fixed-point with an explicit `+` for positive values; zero is unsigned.
pub fn format_signed(x: f64, decimals: u32) -> String {
    let r = round_half_away(x, decimals);
    let d = decimals as usize;
    if r == 0.0 {
        format!("{:.*}", d, 0.0)
    } else if r > 0.0 {
        format!("+{:.*}", d, r)
    } else {
        format!("-{:.*}", d, -r)
    }
}

/// Fixed-point with a sign only for negative values.
pub fn format_plain(x: f64, decimals: u32) -> String {
    let r = round_half_away(x, decimals);
    let d = decimals as usize;
    if r == 0.0 {
        format!("{:.*}", d, 0.0)
    } else {
        format!("{:.*}", d, r)
    }
}

/// Formats a non-negative rational exactly, rounding half away from zero.
pub fn format_rational(x: &BigRational, decimals: u32) -> String {
    let scale = BigInt::from(10u32).pow(decimals);
    let scaled = (x * BigRational::from_integer(scale.clone())).round().to_integer();
    let negative = scaled < BigInt::zero();
    let digits = if negative { -scaled } else { scaled };
    let int_part = &digits / &scale;
    let frac_part = &digits % &scale;
    let mut out = String::new();
    if negative {
        out.push('-');
    }
    write!(out, "{}", int_part).unwrap();
    if decimals > 0 {
        write!(out, ".{:0>width$}", frac_part.to_string(), width = decimals as usize).unwrap();
    }
    out
}

/// One formatted row of a paired comparison report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub language: String,
    pub condition: ConditionKind,
    pub comparison: PairedComparison,
}

impl ReportRow {
    pub fn cells(&self) -> [String; 5] {
        [
            self.condition.display_name().to_string(),
            self.comparison.table.display(),
            self.comparison.p_display(),
            self.comparison.delta_display(),
            self.comparison.kappa_display(),
        ]
    }
}

/// Builds report rows ordered by language, then complete, incomplete,
/// conflicting, no_context.
pub fn compare(
    tables: &BTreeMap<(String, ConditionKind), ContingencyTable>,
    method: CiMethod,
) -> Vec<ReportRow> {
    // ConditionKind's Ord follows the reporting order.
    tables
        .iter()
        .map(|((language, condition), table)| ReportRow {
            language: language.clone(),
            condition: *condition,
            comparison: PairedComparison::compute(*table, method),
        })
        .collect()
}

pub const REPORT_HEADER: [&str; 5] =
    ["Context", "Contingency (a,b;c,d)", "McNemar p", "Δ-Acc (95% CI) [pp]", "Cohen's κ"];

pub fn render_text(rows: &[ReportRow]) -> String {
    let cells: Vec<[String; 5]> = rows.iter().map(ReportRow::cells).collect();
    let mut widths = REPORT_HEADER.map(|h| h.chars().count());
    for row in &cells {
        for (w, cell) in widths.iter_mut().zip(row.iter()) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let mut line = |fields: &[String]| {
        let padded: Vec<String> = fields
            .iter()
            .zip(widths.iter())
            .map(|(f, w)| format!("{}{}", f, " ".repeat(w - f.chars().count())))
            .collect();
        out.push_str(padded.join("  ").trim_end());
        out.push('\n');
    };
    line(&REPORT_HEADER.map(String::from));
    line(&widths.map(|w| "-".repeat(w)));
    for row in &cells {
        line(row);
    }
    out
}

pub fn render_markdown(rows: &[ReportRow]) -> String {
    let mut out = format!("| {} |\n", REPORT_HEADER.join(" | "));
    out.push_str("|---|---|---|---|---|\n");
    for row in rows {
        out.push_str(&format!("| {} |\n", row.cells().join(" | ")));
    }
    out
}

pub const TSV_COLUMNS: &str = "language\tcondition\ta\tb\tc\td\tn\tp_value\tp_suppressed\tdelta\tci_low\tci_high\tkappa\tobserved_agreement\texpected_agreement";

/// Unrounded values; absent statistics are written as `NA`.
pub fn render_tsv(rows: &[ReportRow]) -> String {
    let mut out = String::from(TSV_COLUMNS);
    out.push('\n');
    let opt = |x: Option<f64>| x.map_or_else(|| "NA".to_string(), |v| v.to_string());
    for row in rows {
        let c = &row.comparison;
        let t = c.table;
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            row.language,
            row.condition.as_str(),
            t.a,
            t.b,
            t.c,
            t.d,
            t.n(),
            opt(c.p_value),
            c.p_suppressed,
            c.delta,
            c.ci_low,
            c.ci_high,
            opt(c.kappa),
            c.observed_agreement,
            c.expected_agreement
        )
        .unwrap();
    }
    out
}
