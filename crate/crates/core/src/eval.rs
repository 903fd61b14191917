//! Scoring against gold facet labels: most-frequent baselines, exact
//! binomial significance, per-level binary accuracies and confusion matrices.

use std::fmt::Write as _;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Facet};
use crate::cues::{CueRegistry, FeatureMatrix};
use crate::Error;

/// Significance level used for starring results.
pub const ALPHA: f64 = 0.05;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("success probability {0} must lie strictly between 0 and 1")]
    Probability(f64),
    #[error("successes {k} exceed trials {n}")]
    Successes { k: u64, n: u64 },
    #[error("empty label list")]
    Empty,
    #[error("{gold} gold labels but {predicted} predictions")]
    Length { gold: usize, predicted: usize },
    #[error("level index {0} out of range")]
    Level(usize),
}

/// `ln C(n, i)` as a sum of logs of ratios.
fn ln_choose(n: u64, i: u64) -> f64 {
    let i = i.min(n - i);
    (1..=i).map(|j| ((n - i + j) as f64 / j as f64).ln()).sum()
}

/// `ln b(i; n, p)`.
pub fn binomial_ln_pmf(i: u64, n: u64, p: f64) -> f64 {
    let mut lp = ln_choose(n, i);
    if i > 0 {
        lp += i as f64 * p.ln();
    }
    if n > i {
        lp += (n - i) as f64 * (-p).ln_1p();
    }
    lp
}

/// `(P(X < k), P(X >= k))` for `X ~ Binomial(n, p)`. The smaller tail is summed
/// term by term; the larger one is its complement.
fn binomial_split(k: u64, n: u64, p: f64) -> (f64, f64) {
    let terms: Vec<f64> = (0..=n).map(|i| binomial_ln_pmf(i, n, p).exp()).collect();
    let k = k.min(n + 1) as usize;
    let below: f64 = terms[..k].iter().sum();
    let above: f64 = terms[k..].iter().rev().sum();
    if below <= above {
        (below, 1.0 - below)
    } else {
        (1.0 - above, above)
    }
}

fn check_binomial(k: u64, n: u64, p0: f64) -> Result<(), EvalError> {
    if !(p0 > 0.0 && p0 < 1.0) {
        return Err(EvalError::Probability(p0));
    }
    if k > n {
        return Err(EvalError::Successes { k, n });
    }
    Ok(())
}

/// Exact upper tail `P(X >= k)` for `X ~ Binomial(n, p0)`.
pub fn binomial_tail(k: u64, n: u64, p0: f64) -> Result<f64, EvalError> {
    check_binomial(k, n, p0)?;
    Ok(binomial_split(k, n, p0).1)
}

/// Exact lower tail `P(X <= k)` for `X ~ Binomial(n, p0)`.
pub fn binomial_cdf(k: u64, n: u64, p0: f64) -> Result<f64, EvalError> {
    check_binomial(k, n, p0)?;
    Ok(binomial_split(k + 1, n, p0).0)
}

/// Upper tail that also accepts the degenerate proportions 0 and 1.
fn upper_tail_or_limit(k: u64, n: u64, p0: f64) -> f64 {
    if p0 >= 1.0 {
        1.0
    } else if p0 <= 0.0 {
        if k == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        binomial_split(k, n, p0).1
    }
}

/// The level most common in training (ties to the earliest level) and the
/// percentage of evaluation labels equal to it.
pub fn most_frequent_baseline(
    train_labels: &[usize],
    eval_labels: &[usize],
    n_levels: usize,
) -> Result<(usize, f64), EvalError> {
    if train_labels.is_empty() || eval_labels.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut counts = vec![0usize; n_levels];
    for &l in train_labels {
        *counts.get_mut(l).ok_or(EvalError::Level(l))? += 1;
    }
    baseline_from_counts(&counts, eval_labels)
}

/// As [`most_frequent_baseline`], with training labels given as per-level counts.
pub fn baseline_from_counts(train_counts: &[usize], eval_labels: &[usize]) -> Result<(usize, f64), EvalError> {
    if eval_labels.is_empty() || train_counts.iter().all(|&c| c == 0) {
        return Err(EvalError::Empty);
    }
    let mode = (0..train_counts.len())
        .reduce(|b, i| if train_counts[i] > train_counts[b] { i } else { b })
        .unwrap();
    let hits = eval_labels.iter().filter(|&&l| l == mode).count();
    Ok((mode, 100.0 * hits as f64 / eval_labels.len() as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelResult {
    /// Percentage of documents whose "is / is not this level" decision was right.
    pub accuracy: f64,
    /// Percentage obtained by always answering "not this level".
    pub baseline: f64,
    pub correct: usize,
    pub p_value: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// `counts[actual][guess]`.
    pub counts: Vec<Vec<usize>>,
    /// Row-normalized integer percentages; each non-empty row sums to 100.
    pub percentages: Vec<Vec<u32>>,
    pub row_totals: Vec<usize>,
}

/// Integer percentages summing to exactly 100 by largest remainder (ties to the earliest column).
pub fn round_row(counts: &[usize]) -> Vec<u32> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return vec![0; counts.len()];
    }
    let exact: Vec<f64> = counts.iter().map(|&c| 100.0 * c as f64 / total as f64).collect();
    let mut out: Vec<u32> = exact.iter().map(|v| v.floor() as u32).collect();
    let missing = 100 - out.iter().sum::<u32>();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().take(missing as usize) {
        out[i] += 1;
    }
    out
}

impl ConfusionMatrix {
    pub fn from_predictions(gold: &[usize], predicted: &[usize], n_levels: usize) -> Self {
        let mut counts = vec![vec![0usize; n_levels]; n_levels];
        for (&g, &p) in gold.iter().zip(predicted) {
            counts[g][p] += 1;
        }
        let percentages = counts.iter().map(|r| round_row(r)).collect();
        let row_totals = counts.iter().map(|r| r.iter().sum()).collect();
        ConfusionMatrix {
            counts,
            percentages,
            row_totals,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub facet: Facet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    pub levels: Vec<String>,
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub baseline: f64,
    pub baseline_level: String,
    /// Upper-tail p-value of `correct` against the most-frequent baseline.
    pub p_value: f64,
    pub random_baseline: f64,
    pub p_value_random: f64,
    pub per_level: IndexMap<String, LevelResult>,
    pub confusion: ConfusionMatrix,
}

impl EvalReport {
    pub fn significant(&self) -> bool {
        self.p_value < ALPHA
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Assembles a report from gold and predicted level indices.
///
/// `level_decisions[l][d]`, when given, is the binary "document `d` is level
/// `l`" answer of a per-level machine; otherwise it is read off the
/// predicted level.
pub fn build_report(
    facet: Facet,
    train_counts: &[usize],
    gold: &[usize],
    predicted: &[usize],
    level_decisions: Option<&[Vec<bool>]>,
) -> Result<EvalReport, EvalError> {
    if gold.len() != predicted.len() {
        return Err(EvalError::Length {
            gold: gold.len(),
            predicted: predicted.len(),
        });
    }
    if gold.is_empty() {
        return Err(EvalError::Empty);
    }
    let levels = facet.levels();
    let k = levels.len();
    if let Some(&bad) = gold.iter().chain(predicted).find(|&&l| l >= k) {
        return Err(EvalError::Level(bad));
    }
    let n = gold.len();
    let correct = gold.iter().zip(predicted).filter(|(g, p)| g == p).count();
    let (mode, baseline) = baseline_from_counts(train_counts, gold)?;
    let random_baseline = 100.0 / k as f64;

    let mut per_level = IndexMap::new();
    for (l, name) in levels.iter().enumerate() {
        let hits = (0..n)
            .filter(|&d| {
                let said_yes = match level_decisions {
                    Some(dec) => dec[l][d],
                    None => predicted[d] == l,
                };
                said_yes == (gold[d] == l)
            })
            .count();
        let negatives = gold.iter().filter(|&&g| g != l).count();
        let base = negatives as f64 / n as f64;
        let p_value = upper_tail_or_limit(hits as u64, n as u64, base);
        per_level.insert(
            name.to_string(),
            LevelResult {
                accuracy: 100.0 * hits as f64 / n as f64,
                baseline: 100.0 * base,
                correct: hits,
                p_value,
                significant: p_value < ALPHA,
            },
        );
    }

    Ok(EvalReport {
        facet,
        method: None,
        levels: levels.iter().map(|s| s.to_string()).collect(),
        n,
        correct,
        accuracy: 100.0 * correct as f64 / n as f64,
        baseline,
        baseline_level: levels[mode].to_string(),
        p_value: upper_tail_or_limit(correct as u64, n as u64, baseline / 100.0),
        random_baseline,
        p_value_random: upper_tail_or_limit(correct as u64, n as u64, 1.0 / k as f64),
        per_level,
        confusion: ConfusionMatrix::from_predictions(gold, predicted, k),
    })
}

/// Anything that assigns facet levels to rows of a feature matrix.
pub trait FacetClassifier {
    fn facet(&self) -> Facet;
    /// Training documents per level, used for the most-frequent baseline.
    fn train_counts(&self) -> &[usize];
    fn classify(&self, features: &FeatureMatrix) -> Result<Vec<usize>, Error>;
    /// Per-level binary answers, for classifiers built from per-level machines.
    fn level_decisions(&self, _features: &FeatureMatrix) -> Result<Option<Vec<Vec<bool>>>, Error> {
        Ok(None)
    }
}

/// Classifies every evaluation document and scores the result for the model's facet.
pub fn evaluate_facet(
    model: &dyn FacetClassifier,
    eval: &Corpus,
    registry: &CueRegistry,
) -> Result<EvalReport, Error> {
    let facet = model.facet();
    let gold = eval
        .facet_levels(facet)
        .map_err(|id| Error::Invalid(format!("document {id} has no {facet} label")))?;
    let features = FeatureMatrix::extract(eval, registry);
    let predicted = model.classify(&features)?;
    let decisions = model.level_decisions(&features)?;
    Ok(build_report(
        facet,
        model.train_counts(),
        &gold,
        &predicted,
        decisions.as_deref(),
    )?)
}

fn short(level: &str) -> String {
    let s: String = level.chars().take(7).collect();
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => s,
    }
}

fn capitalized(s: &str) -> String {
    let mut c = s.chars();
    c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
}

fn star(significant: bool) -> &'static str {
    if significant {
        "*"
    } else {
        " "
    }
}

/// Facet-level summary: one row per facet, one accuracy column per method.
pub fn render_facet_table(reports: &[EvalReport]) -> String {
    let mut methods: Vec<String> = Vec::new();
    let mut facets: Vec<Facet> = Vec::new();
    for r in reports {
        let m = r.method.clone().unwrap_or_else(|| "model".into());
        if !methods.contains(&m) {
            methods.push(m);
        }
        if !facets.contains(&r.facet) {
            facets.push(r.facet);
        }
    }
    let mut out = format!("{:<12}{:>9}", "Facet", "Baseline");
    for m in &methods {
        write!(out, "{:>14}", m).unwrap();
    }
    out.push('\n');
    for f in facets {
        let rows: Vec<&EvalReport> = reports.iter().filter(|r| r.facet == f).collect();
        write!(out, "{:<12}{:>9.0}", capitalized(f.name()), rows[0].baseline).unwrap();
        for m in &methods {
            match rows.iter().find(|r| r.method.as_deref().unwrap_or("model") == m) {
                Some(r) => write!(out, "{:>13.0}{}", r.accuracy, star(r.significant())).unwrap(),
                None => write!(out, "{:>14}", "---").unwrap(),
            }
        }
        out.push('\n');
    }
    out
}

/// Per-level binary accuracies; `*` marks p < .05 against the always-No baseline.
pub fn render_level_table(report: &EvalReport) -> String {
    let mut out = format!("{:<14}{:>9}{:>10}\n", "Level", "Baseline", "Accuracy");
    for (level, r) in &report.per_level {
        writeln!(
            out,
            "  {:<12}{:>9.0}{:>9.0}{}",
            capitalized(level),
            r.baseline,
            r.accuracy,
            star(r.significant)
        )
        .unwrap();
    }
    out
}

/// Row-normalized confusion percentages with the row count in the last column.
pub fn render_confusion(report: &EvalReport) -> String {
    let mut out = format!("{:<10}", "Actual");
    for l in &report.levels {
        write!(out, "{:>9}", short(l)).unwrap();
    }
    out.push_str(&format!("{:>6}\n", "N"));
    for (i, l) in report.levels.iter().enumerate() {
        write!(out, "{:<10}", short(l)).unwrap();
        for p in &report.confusion.percentages[i] {
            write!(out, "{:>9}", p).unwrap();
        }
        writeln!(out, "{:>6}", report.confusion.row_totals[i]).unwrap();
    }
    out
}

/// All three tables for a set of reports.
pub fn render_text(reports: &[EvalReport]) -> String {
    let mut out = String::from("Classification results for all facets\n");
    out.push_str(&render_facet_table(reports));
    for r in reports {
        let title = match &r.method {
            Some(m) => format!("{} / {}", capitalized(r.facet.name()), m),
            None => capitalized(r.facet.name()),
        };
        writeln!(out, "\nResults for each level: {title} (N={})", r.n).unwrap();
        out.push_str(&render_level_table(r));
        writeln!(out, "\nConfusion by actual level: {title}").unwrap();
        out.push_str(&render_confusion(r));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lower_tail_anchor() {
        let p = binomial_cdf(8, 18, 0.5).unwrap();
        assert!((p - 0.4073).abs() < 1e-4);
        assert_eq!(format!("{p:.2}"), "0.41");
    }

    #[test]
    fn tail_edges_and_errors() {
        for n in [0, 1, 7, 97] {
            assert_eq!(binomial_tail(0, n, 0.3).unwrap(), 1.0);
        }
        assert_eq!(binomial_cdf(5, 5, 0.4).unwrap(), 1.0);
        assert!(matches!(binomial_tail(1, 3, 0.0), Err(EvalError::Probability(_))));
        assert!(matches!(binomial_tail(1, 3, 1.0), Err(EvalError::Probability(_))));
        assert!(matches!(binomial_tail(4, 3, 0.5), Err(EvalError::Successes { k: 4, n: 3 })));
        assert!((binomial_tail(3, 3, 0.5).unwrap() - 0.125).abs() < 1e-15);
    }

    #[test]
    fn baseline_rules() {
        // Training mode is level 0; eval share of level 0 is 1/4.
        let (level, pct) = most_frequent_baseline(&[0, 0, 1, 2], &[4, 4, 4, 0], 6).unwrap();
        assert_eq!((level, pct), (0, 25.0));
        let (_, pct) = most_frequent_baseline(&[1, 1, 0], &[1, 1], 2).unwrap();
        assert_eq!(pct, 100.0);
        // Ties go to the earlier level.
        assert_eq!(most_frequent_baseline(&[2, 1], &[1], 3).unwrap().0, 1);
        assert!(matches!(most_frequent_baseline(&[], &[1], 2), Err(EvalError::Empty)));
    }

    #[test]
    fn largest_remainder_rounding() {
        assert_eq!(round_row(&[15, 1, 0, 0, 2, 0]), vec![83, 6, 0, 0, 11, 0]);
        assert_eq!(round_row(&[1, 1, 1, 1, 1, 1]).iter().sum::<u32>(), 100);
        assert_eq!(round_row(&[1, 1, 1]), vec![34, 33, 33]);
        assert_eq!(round_row(&[0, 0]), vec![0, 0]);
    }

    #[test]
    fn perfect_and_constant_classifiers() {
        let gold = vec![0, 1, 1, 2, 3, 5, 5, 4];
        let r = build_report(Facet::Genre, &[1, 5, 1, 1, 1, 1], &gold, &gold, None).unwrap();
        assert_eq!(r.accuracy, 100.0);
        for (i, row) in r.confusion.percentages.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                let expected = if i == j && r.confusion.row_totals[i] > 0 { 100 } else { 0 };
                assert_eq!(v, expected);
            }
        }
        let constant = vec![1; gold.len()];
        let r = build_report(Facet::Genre, &[1, 5, 1, 1, 1, 1], &gold, &constant, None).unwrap();
        assert_eq!(r.accuracy, r.baseline);
        assert_eq!(r.baseline_level, "editorial");
        assert!(!r.significant());
    }

    #[test]
    fn report_input_errors() {
        assert!(matches!(
            build_report(Facet::Narrative, &[1, 1], &[0, 1], &[0], None),
            Err(EvalError::Length { .. })
        ));
        assert!(matches!(
            build_report(Facet::Narrative, &[1, 1], &[0, 2], &[0, 1], None),
            Err(EvalError::Level(2))
        ));
    }

    #[test]
    fn rendering_contains_rows() {
        let gold = vec![0, 0, 1, 1];
        let mut r = build_report(Facet::Narrative, &[3, 1], &gold, &[0, 0, 1, 0], None).unwrap();
        r.method = Some("LR".into());
        let text = render_text(&[r]);
        assert!(text.contains("Narrative"));
        assert!(text.contains("Baseline"));
        assert!(text.contains("LR"));
        assert!(text.contains("Actual"));
    }
}
