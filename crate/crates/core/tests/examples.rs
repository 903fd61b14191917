mod common;

use std::collections::BTreeMap;

use common::*;
use genrekit::glm::{sigmoid, FitOptions};
use genrekit::neural::{self, fold_assignment, EliminationOptions};
use genrekit::pipeline::{run_experiments, Method};
use genrekit::{
    backward_select, binomial_tail, fit_logistic, fit_one_vs_rest, synth_corpus, CueRegistry, Facet, MLPConfig,
    SynthSpec, TrainOptions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.gen_range(f64::EPSILON..1.0);
    let v: f64 = rng.gen();
    (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

#[test]
fn two_feature_fits_match_the_brute_force_maximum() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut done = 0;
    while done < 15 {
        let n = rng.gen_range(5..=8);
        let x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]).collect();
        let y: Vec<f64> = (0..n).map(|_| f64::from(u8::from(rng.gen_bool(0.5)))).collect();
        let (beta, best) = brute_force_mle(&x, &y);
        if beta.iter().any(|b| b.abs() > 6.0) || y.iter().all(|&v| v == y[0]) {
            continue;
        }
        let m = fit_logistic(&x, &y, &names(2), &FitOptions::default()).unwrap();
        assert!((m.log_likelihood - best).abs() < 1e-6, "{} vs {}", m.log_likelihood, best);
        done += 1;
    }
}

#[test]
fn constant_feature_is_dropped_and_informative_kept() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x: Vec<Vec<f64>> = (0..80).map(|_| vec![rng.gen_range(-2.0..2.0), 1.0]).collect();
    let y: Vec<f64> = x
        .iter()
        .map(|r| f64::from(u8::from(rng.gen::<f64>() < sigmoid(1.5 * r[0]))))
        .collect();
    let names = vec!["signal".to_string(), "constant".to_string()];
    let m = backward_select(&x, &y, &names, &names, &FitOptions::default()).unwrap();
    assert_eq!(m.selected, vec!["signal".to_string()]);
}

#[test]
fn pure_noise_selects_the_intercept_only_model() {
    let mut intercept_only = 0;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..40).map(|_| vec![normal(&mut rng)]).collect();
        let y: Vec<f64> = (0..40).map(|_| f64::from(u8::from(rng.gen_bool(0.5)))).collect();
        let m = backward_select(&x, &y, &names(1), &names(1), &FitOptions::default()).unwrap();
        intercept_only += usize::from(m.is_intercept_only());
    }
    assert!(intercept_only >= 18, "intercept-only in {intercept_only}/20 datasets");
}

#[test]
fn separated_clusters_are_classified_perfectly() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut x = Vec::new();
    let mut labels = Vec::new();
    for (level, centre) in [(0usize, -6.0), (1, 0.0), (2, 6.0)] {
        for _ in 0..15 {
            x.push(vec![centre + rng.gen_range(-1.0..1.0)]);
            labels.push(level);
        }
    }
    let m = fit_one_vs_rest(&x, &labels, &names(1), Facet::Brow, false, &FitOptions::default()).unwrap();
    assert_eq!(m.classify(&names(1), &x).unwrap(), labels);
    assert_eq!(m.warnings.len(), 1);
}

fn cv_error(x: &[Vec<f64>], y: &[usize], cols: &[usize], config: &MLPConfig, folds: &[usize]) -> f64 {
    let mut total = 0.0;
    for f in 0..3 {
        let pick = |keep: bool| -> (Vec<Vec<f64>>, Vec<usize>) {
            x.iter()
                .zip(y)
                .zip(folds)
                .filter(|(_, &fold)| (fold == f) != keep)
                .map(|((r, &t), _)| (cols.iter().map(|&c| r[c]).collect(), t))
                .unzip()
        };
        let (tx, ty) = pick(true);
        let (vx, vy) = pick(false);
        let mut c = config.clone();
        c.inputs = cols.len();
        total += neural::train(&tx, &ty, &c).unwrap().loss(&vx, &vy);
    }
    total
}

#[test]
fn elimination_removes_planted_noise() {
    let mut hits = 0;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..60).map(|_| vec![normal(&mut rng), normal(&mut rng)]).collect();
        let y: Vec<usize> = x.iter().map(|r| usize::from(rng.gen::<f64>() < sigmoid(2.0 * r[0]))).collect();
        let names = vec!["signal".to_string(), "noise".to_string()];
        let mut config = MLPConfig::two_layer(2, 2);
        config.seed = seed;
        let r = neural::cv_eliminate(&x, &y, &names, &config, &EliminationOptions::default()).unwrap();
        hits += usize::from(r.selected == ["signal"]);
    }
    assert!(hits >= 18, "noise eliminated with signal kept in {hits}/20 trials");
}

#[test]
fn elimination_stops_when_every_removal_hurts() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x: Vec<Vec<f64>> = (0..60).map(|_| vec![normal(&mut rng)]).collect();
    let y: Vec<usize> = x.iter().map(|r| usize::from(rng.gen::<f64>() < sigmoid(3.0 * r[0]))).collect();
    let names = vec!["signal".to_string()];
    let r = neural::cv_eliminate(&x, &y, &names, &MLPConfig::two_layer(1, 2), &EliminationOptions::default()).unwrap();
    assert_eq!(r.selected, names);
    assert!(r.steps.is_empty());
}

#[test]
fn elimination_stops_at_a_local_optimum() {
    for seed in 0..3 {
        let mut rng = ChaCha8Rng::seed_from_u64(40 + seed);
        let p = 4;
        let x: Vec<Vec<f64>> = (0..30).map(|_| (0..p).map(|_| normal(&mut rng)).collect()).collect();
        let y: Vec<usize> = (0..30).map(|_| usize::from(rng.gen_bool(0.5))).collect();
        let mut config = MLPConfig::two_layer(p, 2);
        config.epochs = 300;
        config.seed = seed;
        let names = names(p);
        let r = neural::cv_eliminate(&x, &y, &names, &config, &EliminationOptions::default()).unwrap();
        let folds = fold_assignment(30, 3, seed);
        let cols: Vec<usize> = r.selected.iter().map(|s| names.iter().position(|n| n == s).unwrap()).collect();
        assert_eq!(cv_error(&x, &y, &cols, &config, &folds), r.error);
        for drop in 0..cols.len() {
            let rest: Vec<usize> = cols.iter().enumerate().filter(|&(i, _)| i != drop).map(|(_, &c)| c).collect();
            assert!(cv_error(&x, &y, &rest, &config, &folds) >= r.error);
        }
        for step in &r.steps {
            assert!(step.error_after < step.error_before);
        }
    }
}

fn two_level_spec(yes: &[(&str, f64)], no: &[(&str, f64)]) -> SynthSpec {
    let rates = |r: &[(&str, f64)]| -> BTreeMap<String, f64> { r.iter().map(|(c, v)| (c.to_string(), *v)).collect() };
    SynthSpec {
        facet: Facet::Narrative,
        docs_per_level: 20,
        words_per_doc: 150,
        levels: [("yes".to_string(), rates(yes)), ("no".to_string(), rates(no))].into(),
    }
}

#[test]
fn disjoint_vocabularies_are_learned_exactly() {
    let spec = two_level_spec(&[("said", 3.0), ("suffix-ed", 3.0)], &[("modals", 3.0), ("question-marks", 3.0)]);
    let corpus = synth_corpus(&spec, 4).unwrap();
    let runs = run_experiments(
        &corpus,
        &CueRegistry::default_registry(),
        &[Facet::Narrative],
        &[Method::Lr],
        5,
        &TrainOptions::default(),
    )
    .unwrap();
    assert_eq!(runs[0].report.accuracy, 100.0);
}

#[test]
fn identical_distributions_stay_at_chance() {
    let spec = two_level_spec(&[("said", 2.0), ("modals", 2.0)], &[("said", 2.0), ("modals", 2.0)]);
    let registry = CueRegistry::default_registry();
    let (mut correct, mut n) = (0, 0);
    for seed in 0..20 {
        let corpus = synth_corpus(&spec, seed).unwrap();
        let runs = run_experiments(&corpus, &registry, &[Facet::Narrative], &[Method::Lr], 5, &TrainOptions {
            seed,
            ..TrainOptions::default()
        })
        .unwrap();
        correct += runs[0].report.correct;
        n += runs[0].report.n;
    }
    let p = binomial_tail(correct as u64, n as u64, 0.5).unwrap();
    assert!(p > 0.05, "{correct}/{n} correct, p = {p}");
}
