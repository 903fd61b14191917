//! Training methods, model files and classification over feature matrices.

use std::fmt;
use std::str::FromStr;

use serde_json::Value;

use crate::corpus::{Corpus, Facet};
use crate::cues::{CueRegistry, FeatureMatrix};
use crate::corpus::split_stratified;
use crate::eval::{evaluate_facet, EvalReport, FacetClassifier};
use crate::glm::{self, backward_select, fit_one_vs_rest, FitOptions, OneVsRestModel, ONE_VS_REST_KIND};
use crate::neural::{
    self, cv_eliminate, standardization, standardize, EliminationOptions, FacetPerceptron, MLPConfig,
    PERCEPTRON_KIND,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// One-vs-rest logistic regression on all cues.
    Lr,
    /// One-vs-rest logistic regression with per-level backward AIC selection.
    LrSelected,
    TwoLp,
    ThreeLp,
    /// Two-layer perceptron on cues surviving cross-validated elimination.
    TwoLpSelected,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Lr,
        Method::LrSelected,
        Method::TwoLp,
        Method::ThreeLp,
        Method::TwoLpSelected,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Lr => "lr",
            Method::LrSelected => "lr-selected",
            Method::TwoLp => "2lp",
            Method::ThreeLp => "3lp",
            Method::TwoLpSelected => "2lp-selected",
        }
    }

    /// Column heading for report tables.
    pub fn label(self) -> &'static str {
        match self {
            Method::Lr => "LR All",
            Method::LrSelected => "LR Sel.",
            Method::TwoLp => "2LP All",
            Method::ThreeLp => "3LP All",
            Method::TwoLpSelected => "2LP Sel.",
        }
    }

    pub fn is_selecting(self) -> bool {
        matches!(self, Method::LrSelected | Method::TwoLpSelected)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method {s:?} (expected lr, lr-selected, 2lp, 3lp or 2lp-selected)"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub elimination: EliminationOptions,
    pub glm: FitOptions,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            seed: 0,
            epochs: 2000,
            learning_rate: 0.5,
            elimination: EliminationOptions::default(),
            glm: FitOptions::default(),
        }
    }
}

impl TrainOptions {
    fn mlp_config(&self, inputs: usize, classes: usize, hidden: bool) -> MLPConfig {
        let mut c = if hidden {
            MLPConfig::three_layer(inputs, classes)
        } else {
            MLPConfig::two_layer(inputs, classes)
        };
        c.epochs = self.epochs;
        c.learning_rate = self.learning_rate;
        c.seed = self.seed;
        c
    }
}

/// Cues chosen by a selecting method.
#[derive(Debug, Clone, PartialEq)]
pub enum Selection {
    /// One cue list per level (logistic regression).
    PerLevel(Vec<(String, Vec<String>)>),
    /// One cue list for the whole facet (perceptron).
    Shared(Vec<String>),
}

impl Selection {
    /// Every selected cue, in `order`.
    pub fn union(&self, order: &[String]) -> Vec<String> {
        let chosen = |c: &String| match self {
            Selection::PerLevel(levels) => levels.iter().any(|(_, s)| s.contains(c)),
            Selection::Shared(s) => s.contains(c),
        };
        order.iter().filter(|c| chosen(c)).cloned().collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Classifier {
    Logistic(OneVsRestModel),
    Perceptron(FacetPerceptron),
}

impl Classifier {
    pub fn to_json(&self) -> String {
        match self {
            Classifier::Logistic(m) => m.to_json(),
            Classifier::Perceptron(m) => m.to_json(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::Model(e.to_string()))?;
        let version = value.get("version").and_then(Value::as_u64);
        let kind = value.get("kind").and_then(Value::as_str).unwrap_or("");
        let expected = match kind {
            ONE_VS_REST_KIND => glm::MODEL_VERSION,
            PERCEPTRON_KIND => neural::MODEL_VERSION,
            other => return Err(Error::Model(format!("unknown model kind {other:?}"))),
        };
        if version != Some(u64::from(expected)) {
            return Err(Error::Model(format!(
                "unsupported {kind} model version {}",
                version.map_or_else(|| "(missing)".to_string(), |v| v.to_string())
            )));
        }
        let bad = |e: serde_json::Error| Error::Model(e.to_string());
        Ok(match kind {
            ONE_VS_REST_KIND => Classifier::Logistic(serde_json::from_value(value).map_err(bad)?),
            _ => Classifier::Perceptron(serde_json::from_value(value).map_err(bad)?),
        })
    }

    /// Cues the model reads, in no particular order.
    pub fn input_cues(&self) -> Vec<String> {
        match self {
            Classifier::Logistic(m) => {
                let mut all: Vec<String> = Vec::new();
                for model in m.models() {
                    for c in &model.selected {
                        if !all.contains(c) {
                            all.push(c.clone());
                        }
                    }
                }
                all
            }
            Classifier::Perceptron(p) => p.inputs.clone(),
        }
    }

    pub fn levels(&self) -> &[String] {
        match self {
            Classifier::Logistic(m) => &m.levels,
            Classifier::Perceptron(p) => &p.levels,
        }
    }
}

impl FacetClassifier for Classifier {
    fn facet(&self) -> Facet {
        match self {
            Classifier::Logistic(m) => m.facet,
            Classifier::Perceptron(p) => p.facet,
        }
    }

    fn train_counts(&self) -> &[usize] {
        match self {
            Classifier::Logistic(m) => &m.train_counts,
            Classifier::Perceptron(p) => &p.train_counts,
        }
    }

    fn classify(&self, features: &FeatureMatrix) -> Result<Vec<usize>> {
        Ok(match self {
            Classifier::Logistic(m) => m.classify(&features.cue_names, &features.rows)?,
            Classifier::Perceptron(p) => p.classify(&features.cue_names, &features.rows)?,
        })
    }

    fn level_decisions(&self, features: &FeatureMatrix) -> Result<Option<Vec<Vec<bool>>>> {
        let Classifier::Logistic(m) = self else {
            return Ok(None);
        };
        let probs = m.probabilities(&features.cue_names, &features.rows)?;
        Ok(Some(
            (0..m.levels.len())
                .map(|l| probs.iter().map(|p| p[l] > 0.5).collect())
                .collect(),
        ))
    }
}

/// Level index of every row, failing on the first document without a label for `facet`.
pub fn facet_labels(corpus: &Corpus, facet: Facet) -> Result<Vec<usize>> {
    corpus
        .facet_levels(facet)
        .map_err(|id| Error::Invalid(format!("document {id} has no {facet} label")))
}

/// Runs the selection step of a selecting method.
pub fn select_cues(
    features: &FeatureMatrix,
    labels: &[usize],
    facet: Facet,
    method: Method,
    opts: &TrainOptions,
) -> Result<Selection> {
    let names = &features.cue_names;
    match method {
        Method::LrSelected | Method::Lr => {
            let per_level = facet
                .levels()
                .iter()
                .enumerate()
                .map(|(l, name)| {
                    let y: Vec<f64> = labels.iter().map(|&v| f64::from(u8::from(v == l))).collect();
                    backward_select(&features.rows, &y, names, names, &opts.glm)
                        .map(|m| (name.to_string(), m.selected))
                })
                .collect::<Result<_, _>>()?;
            Ok(Selection::PerLevel(per_level))
        }
        Method::TwoLp | Method::ThreeLp | Method::TwoLpSelected => {
            let (mean, scale) = standardization(&features.rows);
            let x = standardize(&features.rows, &mean, &scale);
            let config = opts.mlp_config(names.len(), facet.levels().len(), method == Method::ThreeLp);
            let result = cv_eliminate(&x, labels, names, &config, &opts.elimination)?;
            Ok(Selection::Shared(result.selected))
        }
    }
}

fn train_perceptron(
    features: &FeatureMatrix,
    labels: &[usize],
    facet: Facet,
    inputs: Vec<String>,
    hidden: bool,
    opts: &TrainOptions,
) -> Result<FacetPerceptron> {
    let cols = features.column_indices(&inputs).map_err(|name| Error::Glm(glm::GlmError::MissingCue(name)))?;
    let raw = features.select_columns(&cols);
    let (mean, scale) = standardization(&raw);
    let x = standardize(&raw, &mean, &scale);
    let config = opts.mlp_config(inputs.len(), facet.levels().len(), hidden);
    let model = neural::train(&x, labels, &config)?;
    Ok(FacetPerceptron::new(facet, inputs, labels, (mean, scale), model))
}

/// Trains `method` for `facet` on the rows of `features`.
pub fn train_classifier(
    features: &FeatureMatrix,
    labels: &[usize],
    facet: Facet,
    method: Method,
    opts: &TrainOptions,
) -> Result<Classifier> {
    if features.rows.is_empty() {
        return Err(Error::Invalid("no training documents".into()));
    }
    let names = &features.cue_names;
    Ok(match method {
        Method::Lr | Method::LrSelected => Classifier::Logistic(fit_one_vs_rest(
            &features.rows,
            labels,
            names,
            facet,
            method == Method::LrSelected,
            &opts.glm,
        )?),
        Method::TwoLp | Method::ThreeLp => Classifier::Perceptron(train_perceptron(
            features,
            labels,
            facet,
            names.clone(),
            method == Method::ThreeLp,
            opts,
        )?),
        Method::TwoLpSelected => {
            let Selection::Shared(selected) = select_cues(features, labels, facet, method, opts)? else {
                unreachable!("perceptron selection is shared");
            };
            Classifier::Perceptron(train_perceptron(features, labels, facet, selected, false, opts)?)
        }
    })
}

/// Extracts features from `corpus` and trains `method` for `facet`.
pub fn train_on_corpus(
    corpus: &Corpus,
    registry: &CueRegistry,
    facet: Facet,
    method: Method,
    opts: &TrainOptions,
) -> Result<Classifier> {
    let labels = facet_labels(corpus, facet)?;
    let features = FeatureMatrix::extract(corpus, registry);
    train_classifier(&features, &labels, facet, method, opts)
}

/// The documents of `corpus` that carry a label for `facet`.
pub fn labeled_for(corpus: &Corpus, facet: Facet) -> Corpus {
    let documents: Vec<_> = corpus
        .documents
        .iter()
        .filter(|d| corpus.labels_of(&d.id).and_then(|l| l.level(facet)).is_some())
        .cloned()
        .collect();
    let labels = documents
        .iter()
        .map(|d| (d.id.clone(), corpus.labels[&d.id]))
        .collect();
    Corpus { documents, labels }
}

/// One trained model and its held-out report.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub facet: Facet,
    pub method: Method,
    pub model: Classifier,
    pub report: EvalReport,
}

/// Splits `corpus` with `per_cell` evaluation documents per label cell, then
/// trains and scores every facet/method pair on the split.
pub fn run_experiments(
    corpus: &Corpus,
    registry: &CueRegistry,
    facets: &[Facet],
    methods: &[Method],
    per_cell: usize,
    opts: &TrainOptions,
) -> Result<Vec<Experiment>> {
    let (train_part, eval_part) = split_stratified(corpus, per_cell, opts.seed)?;
    let mut out = Vec::new();
    for &facet in facets {
        let train_docs = labeled_for(&train_part, facet);
        let eval_docs = labeled_for(&eval_part, facet);
        if train_docs.is_empty() || eval_docs.is_empty() {
            return Err(Error::Invalid(format!("no {facet} labels in the split corpus")));
        }
        let labels = facet_labels(&train_docs, facet)?;
        let features = FeatureMatrix::extract(&train_docs, registry);
        for &method in methods {
            let model = train_classifier(&features, &labels, facet, method, opts)?;
            let mut report = evaluate_facet(&model, &eval_docs, registry)?;
            report.method = Some(method.label().to_string());
            out.push(Experiment {
                facet,
                method,
                model,
                report,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("svm".parse::<Method>().is_err());
    }

    #[test]
    fn model_file_version_is_checked() {
        let err = Classifier::from_json(r#"{"version": 9, "kind": "perceptron"}"#).unwrap_err();
        assert!(err.to_string().contains("version 9"));
        let err = Classifier::from_json(r#"{"version": 1, "kind": "forest"}"#).unwrap_err();
        assert!(err.to_string().contains("forest"));
        assert!(Classifier::from_json("not json").is_err());
    }

    #[test]
    fn selection_union_keeps_order() {
        let s = Selection::PerLevel(vec![
            ("a".into(), vec!["z".into()]),
            ("b".into(), vec!["x".into(), "z".into()]),
        ]);
        let order: Vec<String> = ["x", "y", "z"].iter().map(|s| s.to_string()).collect();
        assert_eq!(s.union(&order), vec!["x".to_string(), "z".to_string()]);
    }
}
