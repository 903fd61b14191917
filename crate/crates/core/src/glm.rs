//! Binary logistic regression fitted by IRLS, stepwise backward AIC
//! selection, and one-vs-rest assembly for polytomous facets.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Facet;

pub const MODEL_VERSION: u32 = 1;

/// Probabilities are clamped to `[PROB_FLOOR, 1 - PROB_FLOOR]` when evaluating the likelihood.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum GlmError {
    #[error("no observations")]
    Empty,
    #[error("row {row} has {got} values, expected {expected}")]
    Shape { row: usize, got: usize, expected: usize },
    #[error("{0} labels for {1} rows")]
    LabelCount(usize, usize),
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("label at row {0} is not 0 or 1")]
    BadLabel(usize),
    #[error("label index {0} out of range")]
    BadLevel(usize),
    #[error("missing cue {0}")]
    MissingCue(String),
    #[error("start set names unknown cue {0}")]
    UnknownCue(String),
    #[error("weighted normal equations are singular even after ridge fallback")]
    Singular,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// The logit link `ln(p / (1 - p))`.
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Binomial log-likelihood of 0/1 labels under probabilities `pi`, with clamping.
pub fn log_likelihood(y: &[f64], pi: &[f64]) -> f64 {
    y.iter()
        .zip(pi)
        .map(|(&yi, &p)| {
            let p = p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
            yi * p.ln() + (1.0 - yi) * (1.0 - p).ln()
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Coefficient of the `‖β‖²` penalty on non-intercept weights.
    pub l2: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iter: 50,
            l2: 1e-8,
        }
    }
}

/// Why a model is intercept-only regardless of its inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Degenerate {
    AllPositive,
    AllNegative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LRModel {
    pub intercept: f64,
    pub weights: BTreeMap<String, f64>,
    pub selected: Vec<String>,
    #[serde(rename = "logL")]
    pub log_likelihood: f64,
    pub aic: f64,
    pub n_obs: usize,
    pub converged: bool,
    #[serde(default)]
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degenerate: Option<Degenerate>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub ridge_fallback: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    pub separated: bool,
}

fn is_false(b: &bool) -> bool {
    !*b
}

pub fn aic(n_selected: usize, log_likelihood: f64) -> f64 {
    2.0 * (n_selected as f64 + 1.0) - 2.0 * log_likelihood
}

impl LRModel {
    /// Column of each selected cue within `names`.
    pub fn bind(&self, names: &[String]) -> Result<Vec<usize>, GlmError> {
        self.selected
            .iter()
            .map(|s| {
                names
                    .iter()
                    .position(|n| n == s)
                    .ok_or_else(|| GlmError::MissingCue(s.clone()))
            })
            .collect()
    }

    /// Linear predictor using columns previously resolved by [`LRModel::bind`].
    pub fn eta_bound(&self, columns: &[usize], values: &[f64]) -> f64 {
        self.intercept
            + self
                .selected
                .iter()
                .zip(columns)
                .map(|(s, &c)| self.weights[s] * values[c])
                .sum::<f64>()
    }

    pub fn linear_predictor(&self, names: &[String], values: &[f64]) -> Result<f64, GlmError> {
        let cols = self.bind(names)?;
        Ok(self.eta_bound(&cols, values))
    }

    /// `σ(β₀ + x·β)` for a vector of named cue values.
    pub fn predict_prob(&self, names: &[String], values: &[f64]) -> Result<f64, GlmError> {
        Ok(sigmoid(self.linear_predictor(names, values)?))
    }

    pub fn is_intercept_only(&self) -> bool {
        self.selected.is_empty()
    }
}

fn validate(x: &[Vec<f64>], y: &[f64], p: usize) -> Result<(), GlmError> {
    if x.is_empty() {
        return Err(GlmError::Empty);
    }
    if y.len() != x.len() {
        return Err(GlmError::LabelCount(y.len(), x.len()));
    }
    for (row, r) in x.iter().enumerate() {
        if r.len() != p {
            return Err(GlmError::Shape {
                row,
                got: r.len(),
                expected: p,
            });
        }
        if let Some(col) = r.iter().position(|v| !v.is_finite()) {
            return Err(GlmError::NonFinite { row, col });
        }
    }
    if let Some(row) = y.iter().position(|&v| v != 0.0 && v != 1.0) {
        return Err(GlmError::BadLabel(row));
    }
    Ok(())
}

fn guard_model(n: usize, positive: bool) -> LRModel {
    let p = if positive { 1.0 - PROB_FLOOR } else { PROB_FLOOR };
    let ll = n as f64 * (1.0 - PROB_FLOOR).ln();
    LRModel {
        intercept: logit(p),
        weights: BTreeMap::new(),
        selected: Vec::new(),
        log_likelihood: ll,
        aic: aic(0, ll),
        n_obs: n,
        converged: true,
        iterations: 0,
        degenerate: Some(if positive {
            Degenerate::AllPositive
        } else {
            Degenerate::AllNegative
        }),
        ridge_fallback: false,
        separated: false,
    }
}

struct Design {
    x: DMatrix<f64>,
    y: DVector<f64>,
}

impl Design {
    fn eta(&self, beta: &DVector<f64>) -> DVector<f64> {
        &self.x * beta
    }

    fn pi(&self, beta: &DVector<f64>) -> DVector<f64> {
        self.eta(beta).map(sigmoid)
    }

    fn log_likelihood(&self, beta: &DVector<f64>) -> f64 {
        log_likelihood(self.y.as_slice(), self.pi(beta).as_slice())
    }

    fn penalized(&self, beta: &DVector<f64>, l2: f64) -> f64 {
        self.log_likelihood(beta) - l2 * beta.rows(1, beta.len() - 1).norm_squared()
    }

    fn score(&self, beta: &DVector<f64>, l2: f64) -> DVector<f64> {
        let resid = &self.y - self.pi(beta);
        let mut g = self.x.transpose() * resid;
        for j in 1..g.len() {
            g[j] -= 2.0 * l2 * beta[j];
        }
        g
    }
}

/// Maximum-likelihood logistic regression by iteratively reweighted least
/// squares (Newton's method on the binomial log-likelihood) with step
/// halving. `y` holds 0/1 labels; `names` labels the columns of `x`.
pub fn fit_logistic(
    x: &[Vec<f64>],
    y: &[f64],
    names: &[String],
    opts: &FitOptions,
) -> Result<LRModel, GlmError> {
    let p = names.len();
    validate(x, y, p)?;
    let n = x.len();
    let positives = y.iter().filter(|&&v| v == 1.0).count();
    if positives == 0 || positives == n {
        return Ok(guard_model(n, positives == n));
    }

    let design = Design {
        x: DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { x[i][j - 1] }),
        y: DVector::from_column_slice(y),
    };
    let mut beta = DVector::zeros(p + 1);
    beta[0] = logit(positives as f64 / n as f64);
    let mut objective = design.penalized(&beta, opts.l2);
    let mut converged = false;
    let mut ridge_fallback = false;
    let mut separated = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        if -2.0 * design.log_likelihood(&beta) < 1e-6 {
            separated = true;
            break;
        }
        let score = design.score(&beta, opts.l2);
        if score.amax() < 1e-8 {
            converged = true;
            break;
        }
        iterations += 1;
        let pi = design.pi(&beta);
        let w = pi.map(|p| p * (1.0 - p));
        let weighted = DMatrix::from_fn(n, p + 1, |i, j| design.x[(i, j)] * w[i]);
        let mut hessian = design.x.transpose() * weighted;
        for j in 1..=p {
            hessian[(j, j)] += 2.0 * opts.l2;
        }
        let step = match hessian.clone().cholesky() {
            Some(ch) => ch.solve(&score),
            None => {
                ridge_fallback = true;
                let scale = hessian.diagonal().amax().max(1.0);
                for j in 0..=p {
                    hessian[(j, j)] += 1e-6 * scale;
                }
                hessian.cholesky().ok_or(GlmError::Singular)?.solve(&score)
            }
        };

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let candidate = &beta + &step * t;
            let value = design.penalized(&candidate, opts.l2);
            if value >= objective {
                accepted = Some((candidate, value));
                break;
            }
            t *= 0.5;
        }
        let Some((candidate, value)) = accepted else {
            converged = score.amax() < 1e-6;
            break;
        };
        let change = 2.0 * (value - objective).abs();
        beta = candidate;
        objective = value;
        if t == 1.0 && change < 1e-10 {
            converged = true;
            break;
        }
    }

    let eta = design.eta(&beta);
    if eta.iter().zip(design.y.iter()).all(|(e, &yi)| (*e > 0.0) == (yi == 1.0) && *e != 0.0) {
        separated = true;
    }
    if separated {
        converged = false;
    }
    let log_likelihood = design.log_likelihood(&beta);
    let weights = names
        .iter()
        .enumerate()
        .map(|(j, name)| (name.clone(), beta[j + 1]))
        .collect();
    Ok(LRModel {
        intercept: beta[0],
        weights,
        selected: names.to_vec(),
        log_likelihood,
        aic: aic(p, log_likelihood),
        n_obs: n,
        converged,
        iterations,
        degenerate: None,
        ridge_fallback,
        separated,
    })
}

fn columns(x: &[Vec<f64>], cols: &[usize]) -> Vec<Vec<f64>> {
    x.iter().map(|r| cols.iter().map(|&c| r[c]).collect()).collect()
}

/// Stepwise backward selection by AIC.
///
/// Starting from the cues in `start`, repeatedly refits without each
/// remaining cue and drops the one giving the lowest AIC, as long as that AIC
/// is strictly below the current model's. Ties go to the cue appearing
/// earliest in `names`.
pub fn backward_select(
    x: &[Vec<f64>],
    y: &[f64],
    names: &[String],
    start: &[String],
    opts: &FitOptions,
) -> Result<LRModel, GlmError> {
    validate(x, y, names.len())?;
    for s in start {
        if !names.contains(s) {
            return Err(GlmError::UnknownCue(s.clone()));
        }
    }
    let mut current: Vec<usize> = (0..names.len()).filter(|&i| start.contains(&names[i])).collect();
    let fit = |cols: &[usize]| {
        let sub_names: Vec<String> = cols.iter().map(|&c| names[c].clone()).collect();
        fit_logistic(&columns(x, cols), y, &sub_names, opts)
    };
    let mut model = fit(&current)?;
    while !current.is_empty() && model.degenerate.is_none() {
        let candidates: Vec<LRModel> = (0..current.len())
            .into_par_iter()
            .map(|drop| {
                let cols: Vec<usize> = current
                    .iter()
                    .enumerate()
                    .filter(|&(k, _)| k != drop)
                    .map(|(_, &c)| c)
                    .collect();
                fit(&cols)
            })
            .collect::<Result<_, _>>()?;
        let (best, best_model) = candidates
            .into_iter()
            .enumerate()
            .fold(None::<(usize, LRModel)>, |acc, (i, m)| match acc {
                Some((_, ref b)) if b.aic <= m.aic => acc,
                _ => Some((i, m)),
            })
            .expect("at least one candidate");
        if best_model.aic < model.aic {
            current.remove(best);
            model = best_model;
        } else {
            break;
        }
    }
    Ok(model)
}

/// Independent per-level logistic models for one facet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneVsRestModel {
    pub version: u32,
    pub kind: String,
    pub facet: Facet,
    pub levels: Vec<String>,
    pub per_level: BTreeMap<String, LRModel>,
    /// Training documents per level, in `levels` order.
    #[serde(default)]
    pub train_counts: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

pub const ONE_VS_REST_KIND: &str = "one-vs-rest-logistic";

/// Fits one level-vs-rest model per level of `facet`. `labels` holds level
/// indices. With `select`, each level gets its own backward AIC selection
/// starting from all cues.
pub fn fit_one_vs_rest(
    x: &[Vec<f64>],
    labels: &[usize],
    names: &[String],
    facet: Facet,
    select: bool,
    opts: &FitOptions,
) -> Result<OneVsRestModel, GlmError> {
    let levels = facet.levels();
    if let Some(&bad) = labels.iter().find(|&&l| l >= levels.len()) {
        return Err(GlmError::BadLevel(bad));
    }
    let mut train_counts = vec![0; levels.len()];
    for &l in labels {
        train_counts[l] += 1;
    }
    let fits: Vec<LRModel> = (0..levels.len())
        .into_par_iter()
        .map(|level| {
            let y: Vec<f64> = labels.iter().map(|&l| f64::from(u8::from(l == level))).collect();
            if select {
                backward_select(x, &y, names, names, opts)
            } else {
                fit_logistic(x, &y, names, opts)
            }
        })
        .collect::<Result<_, _>>()?;
    let warnings = levels
        .iter()
        .zip(&train_counts)
        .filter(|(_, &c)| c == 0)
        .map(|(l, _)| format!("level {l} absent from training data; it will never be predicted"))
        .collect();
    Ok(OneVsRestModel {
        version: MODEL_VERSION,
        kind: ONE_VS_REST_KIND.to_string(),
        facet,
        levels: levels.iter().map(|s| s.to_string()).collect(),
        per_level: levels.iter().map(|l| l.to_string()).zip(fits).collect(),
        train_counts,
        warnings,
    })
}

impl OneVsRestModel {
    pub fn models(&self) -> impl Iterator<Item = &LRModel> {
        self.levels.iter().map(|l| &self.per_level[l])
    }

    /// Per-level probabilities for each row of `rows` (columns named by `names`).
    pub fn probabilities(&self, names: &[String], rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, GlmError> {
        let bound: Vec<(&LRModel, Vec<usize>)> = self
            .models()
            .map(|m| m.bind(names).map(|c| (m, c)))
            .collect::<Result<_, _>>()?;
        Ok(rows
            .iter()
            .map(|r| bound.iter().map(|(m, c)| sigmoid(m.eta_bound(c, r))).collect())
            .collect())
    }

    /// Index of the winning level given per-level probabilities. Levels never
    /// seen in training are skipped; ties go to the earliest level.
    pub fn argmax(&self, probs: &[f64]) -> usize {
        let mut best: Option<usize> = None;
        for (i, m) in self.models().enumerate() {
            if m.degenerate == Some(Degenerate::AllNegative) {
                continue;
            }
            if best.is_none_or(|b| probs[i] > probs[b]) {
                best = Some(i);
            }
        }
        best.unwrap_or(0)
    }

    pub fn classify(&self, names: &[String], rows: &[Vec<f64>]) -> Result<Vec<usize>, GlmError> {
        Ok(self
            .probabilities(names, rows)?
            .iter()
            .map(|p| self.argmax(p))
            .collect())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("x{i}")).collect()
    }

    #[test]
    fn intercept_only_closed_form() {
        let x = vec![vec![]; 4];
        let y = [1.0, 1.0, 1.0, 0.0];
        let m = fit_logistic(&x, &y, &[], &FitOptions::default()).unwrap();
        assert!((m.intercept - 3f64.ln()).abs() < 1e-9);
        assert!((sigmoid(m.intercept) - 0.75).abs() < 1e-9);
        let ll = 3.0 * 0.75f64.ln() + 0.25f64.ln();
        assert!((m.log_likelihood - ll).abs() < 1e-9);
        assert!((m.log_likelihood - (-2.2493)).abs() < 1e-4);
        assert!(m.converged);
        assert_eq!(m.aic, aic(0, m.log_likelihood));
    }

    #[test]
    fn symmetric_feature_gets_zero_weight() {
        // Each (x, y) has a mirror (-x, y).
        let xs = [1.0, -1.0, 2.0, -2.0, 0.5, -0.5, 3.0, -3.0];
        let ys = [1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0];
        let x: Vec<Vec<f64>> = xs.iter().map(|&v| vec![v]).collect();
        let m = fit_logistic(&x, &ys, &names(1), &FitOptions::default()).unwrap();
        assert!(m.weights["x0"].abs() < 1e-9);
        assert!(m.converged);
    }

    #[test]
    fn all_one_class_is_guarded() {
        let x = vec![vec![1.0], vec![2.0]];
        let m = fit_logistic(&x, &[1.0, 1.0], &names(1), &FitOptions::default()).unwrap();
        assert_eq!(m.degenerate, Some(Degenerate::AllPositive));
        assert!(m.converged);
        assert!(m.selected.is_empty());
        assert!(sigmoid(m.intercept) > 0.999);
        let m = fit_logistic(&x, &[0.0, 0.0], &names(1), &FitOptions::default()).unwrap();
        assert_eq!(m.degenerate, Some(Degenerate::AllNegative));
        assert!(sigmoid(m.intercept) < 1e-6);
    }

    #[test]
    fn separable_data_stops_unconverged() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| f64::from(u8::from(i >= 5))).collect();
        let m = fit_logistic(&x, &y, &names(1), &FitOptions::default()).unwrap();
        assert!(!m.converged);
        assert!(m.weights["x0"] > 1.0);
        let classified = x
            .iter()
            .zip(&y)
            .all(|(r, &t)| (m.predict_prob(&names(1), r).unwrap() > 0.5) == (t == 1.0));
        assert!(classified);
    }

    #[test]
    fn duplicated_column_is_handled() {
        let base = [0.3, 1.2, -0.7, 2.2, 0.1, -1.5, 0.9, 1.7];
        let y = [0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0];
        let x: Vec<Vec<f64>> = base.iter().map(|&v| vec![v, v]).collect();
        let m = fit_logistic(&x, &y, &names(2), &FitOptions::default()).unwrap();
        let single: Vec<Vec<f64>> = base.iter().map(|&v| vec![v]).collect();
        let s = fit_logistic(&single, &y, &names(1), &FitOptions::default()).unwrap();
        assert!((m.log_likelihood - s.log_likelihood).abs() < 1e-6);
    }

    #[test]
    fn input_errors() {
        let opts = FitOptions::default();
        assert!(matches!(fit_logistic(&[], &[], &[], &opts), Err(GlmError::Empty)));
        assert!(matches!(
            fit_logistic(&[vec![1.0]], &[1.0, 0.0], &names(1), &opts),
            Err(GlmError::LabelCount(2, 1))
        ));
        assert!(matches!(
            fit_logistic(&[vec![f64::NAN]], &[1.0], &names(1), &opts),
            Err(GlmError::NonFinite { row: 0, col: 0 })
        ));
        assert!(matches!(
            fit_logistic(&[vec![1.0]], &[0.5], &names(1), &opts),
            Err(GlmError::BadLabel(0))
        ));
        assert!(matches!(
            fit_logistic(&[vec![1.0, 2.0]], &[1.0], &names(1), &opts),
            Err(GlmError::Shape { .. })
        ));
    }

    #[test]
    fn prediction_round_trips_through_logit() {
        let mut weights = BTreeMap::new();
        weights.insert("a".to_string(), 0.7);
        let m = LRModel {
            intercept: -0.2,
            weights,
            selected: vec!["a".into()],
            log_likelihood: 0.0,
            aic: 0.0,
            n_obs: 1,
            converged: true,
            iterations: 0,
            degenerate: None,
            ridge_fallback: false,
            separated: false,
        };
        let names = vec!["z".to_string(), "a".to_string()];
        for v in [-5.0, 0.0, 0.3, 4.0] {
            let eta = m.linear_predictor(&names, &[9.0, v]).unwrap();
            let p = m.predict_prob(&names, &[9.0, v]).unwrap();
            assert!((logit(p) - eta).abs() < 1e-12);
        }
        let err = m.predict_prob(&["z".to_string()], &[1.0]).unwrap_err();
        assert_eq!(err.to_string(), "missing cue a");
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(1.0986122886681098) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn empty_start_set_is_intercept_only() {
        let x = vec![vec![1.0], vec![2.0], vec![3.0]];
        let m = backward_select(&x, &[1.0, 0.0, 1.0], &names(1), &[], &FitOptions::default()).unwrap();
        assert!(m.is_intercept_only());
        assert!(matches!(
            backward_select(&x, &[1.0, 0.0, 1.0], &names(1), &["nope".into()], &FitOptions::default()),
            Err(GlmError::UnknownCue(_))
        ));
    }

    #[test]
    fn one_vs_rest_ties_and_degenerate_levels() {
        // Every row labeled uppermiddle.
        let x = vec![vec![0.1], vec![0.4], vec![0.9]];
        let m = fit_one_vs_rest(&x, &[2, 2, 2], &names(1), Facet::Brow, false, &FitOptions::default())
            .unwrap();
        assert_eq!(m.classify(&names(1), &x).unwrap(), vec![2, 2, 2]);
        assert_eq!(m.warnings.len(), 3);
        assert_eq!(m.argmax(&[0.5, 0.5, 0.5, 0.5]), 2);

        let m = fit_one_vs_rest(&x, &[0, 1, 2], &names(1), Facet::Narrative, false, &FitOptions::default());
        assert!(matches!(m, Err(GlmError::BadLevel(2))));
    }

    #[test]
    fn all_equal_probabilities_pick_first_level() {
        let x = vec![vec![0.0], vec![1.0], vec![0.0], vec![1.0]];
        let m = fit_one_vs_rest(&x, &[0, 1, 1, 0], &names(1), Facet::Narrative, false, &FitOptions::default())
            .unwrap();
        assert_eq!(m.argmax(&[0.3, 0.3]), 0);
    }
}
