#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use genrekit::glm::sigmoid;
use genrekit::MLPModel;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Exact P(X >= k) for X ~ Binomial(n, p0), summed over big rationals.
pub fn exact_upper_tail(k: u64, n: u64, p0: f64) -> f64 {
    let p = BigRational::from_float(p0).expect("finite probability");
    let q = BigRational::one() - &p;
    let mut total = BigRational::zero();
    let mut choose = BigInt::one();
    for i in 0..=n {
        if i >= k {
            let term = BigRational::from_integer(choose.clone())
                * num_traits::pow(p.clone(), i as usize)
                * num_traits::pow(q.clone(), (n - i) as usize);
            total += term;
        }
        choose = choose * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    total.to_f64().expect("representable")
}

pub fn exact_lower_tail(k: u64, n: u64, p0: f64) -> f64 {
    if k >= n {
        return 1.0;
    }
    let p = BigRational::from_float(p0).expect("finite probability");
    let q = BigRational::one() - &p;
    let mut total = BigRational::zero();
    let mut choose = BigInt::one();
    for i in 0..=k {
        total += BigRational::from_integer(choose.clone())
            * num_traits::pow(p.clone(), i as usize)
            * num_traits::pow(q.clone(), (n - i) as usize);
        choose = choose * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    total.to_f64().expect("representable")
}

/// Binomial log-likelihood of `beta` (intercept first) computed directly.
pub fn logistic_log_likelihood(x: &[Vec<f64>], y: &[f64], beta: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(row, &t)| {
            let eta = beta[0] + row.iter().zip(&beta[1..]).map(|(a, b)| a * b).sum::<f64>();
            let p = sigmoid(eta).clamp(1e-300, 1.0 - 1e-16);
            t * p.ln() + (1.0 - t) * (1.0 - p).ln()
        })
        .sum()
}

/// Maximizes the logistic log-likelihood by a coarse grid followed by
/// Hooke-Jeeves pattern search. Uses no derivatives.
pub fn brute_force_mle(x: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, f64) {
    let d = x[0].len() + 1;
    let f = |b: &[f64]| logistic_log_likelihood(x, y, b);

    let grid: Vec<f64> = (-8..=8).map(|i| f64::from(i) * 0.5).collect();
    let mut best = vec![0.0; d];
    let mut best_val = f(&best);
    let mut idx = vec![0usize; d];
    loop {
        let b: Vec<f64> = idx.iter().map(|&i| grid[i]).collect();
        let v = f(&b);
        if v > best_val {
            best_val = v;
            best = b;
        }
        let mut j = 0;
        while j < d {
            idx[j] += 1;
            if idx[j] < grid.len() {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
        if j == d {
            break;
        }
    }

    let mut step = 0.25;
    while step > 1e-11 {
        let mut base = best.clone();
        let mut base_val = best_val;
        for j in 0..d {
            for dir in [1.0, -1.0] {
                let mut b = base.clone();
                b[j] += dir * step;
                let v = f(&b);
                if v > base_val {
                    base = b;
                    base_val = v;
                    break;
                }
            }
        }
        if base_val > best_val {
            // pattern move along the successful direction
            loop {
                let pattern: Vec<f64> = base.iter().zip(&best).map(|(n, o)| 2.0 * n - o).collect();
                best = base.clone();
                best_val = base_val;
                let v = f(&pattern);
                if v > base_val {
                    base = pattern;
                    base_val = v;
                } else {
                    break;
                }
            }
        } else {
            step *= 0.5;
        }
    }
    (best, best_val)
}

/// Central finite-difference gradient of the summed loss.
pub fn numeric_gradient(model: &MLPModel, x: &[Vec<f64>], y: &[usize], h: f64) -> Vec<f64> {
    let params = model.parameters();
    let mut probe = model.clone();
    (0..params.len())
        .map(|i| {
            let mut p = params.clone();
            p[i] = params[i] + h;
            probe.set_parameters(&p);
            let up = probe.loss(x, y);
            p[i] = params[i] - h;
            probe.set_parameters(&p);
            let down = probe.loss(x, y);
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest relative disagreement between two gradients, ignoring components
/// where both are below `floor` in magnitude.
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&u, &v)| {
            let scale = u.abs().max(v.abs());
            if scale < floor {
                0.0
            } else {
                (u - v).abs() / scale
            }
        })
        .fold(0.0, f64::max)
}

pub fn names(p: usize) -> Vec<String> {
    (0..p).map(|i| format!("x{i}")).collect()
}

/// Random data drawn from a logistic model, rejecting separable draws.
pub fn non_separable_dataset(rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<f64>) {
    loop {
        let p = rng.gen_range(1..=3);
        let n = rng.gen_range(p + 5..=10);
        let beta: Vec<f64> = (0..=p).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..p).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let y: Vec<f64> = x
            .iter()
            .map(|r| {
                let eta = beta[0] + r.iter().zip(&beta[1..]).map(|(a, b)| a * b).sum::<f64>();
                f64::from(u8::from(rng.gen::<f64>() < sigmoid(eta)))
            })
            .collect();
        let (b, _) = brute_force_mle(&x, &y);
        if b.iter().all(|v| v.abs() < 6.0) && y.iter().any(|&t| t == 1.0) && y.iter().any(|&t| t == 0.0) {
            return (x, y);
        }
    }
}
