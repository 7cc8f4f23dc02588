//! One-vs-all linear maximum-margin classifiers and multiview voting.

use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::error::{PfmError, Result};
use crate::scalar::Real;

/// `P` linear scorers, one per label; labels sorted lexicographically.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OvaModel<T> {
    pub labels: Vec<String>,
    /// `P x dim`, row-major.
    pub weights: Vec<T>,
    pub biases: Vec<T>,
    pub dim: usize,
    pub reg_c: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<T> {
    pub label: String,
    pub label_index: usize,
    /// Decision value of every class, in model label order.
    pub scores: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmParams {
    /// Stopping threshold on the maximal KKT violation.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            tolerance: 1e-4,
            max_iterations: 10_000_000,
        }
    }
}

/// Solution of one binary problem in dual form.
#[derive(Debug, Clone)]
pub struct BinarySolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
}

/// Binary soft-margin SVM with unregularised bias on a precomputed kernel
/// matrix (`n x n`, row-major), solved by sequential minimal optimisation
/// with second-order working-set selection.
pub fn solve_binary(kernel: &[f64], y: &[f64], c: f64, params: &SvmParams) -> BinarySolution {
    let n = y.len();
    const TAU: f64 = 1e-12;
    let q = |i: usize, j: usize| y[i] * y[j] * kernel[i * n + j];
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let up = |a: f64, yi: f64| (yi > 0.0 && a < c) || (yi < 0.0 && a > 0.0);
    let low = |a: f64, yi: f64| (yi > 0.0 && a > 0.0) || (yi < 0.0 && a < c);
    let mut iterations = 0;
    while iterations < params.max_iterations {
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            if up(alpha[t], y[t]) {
                let v = -y[t] * grad[t];
                if v > gmax {
                    gmax = v;
                    i = t;
                }
            }
        }
        if i == usize::MAX {
            break;
        }
        let mut gmin = f64::INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..n {
            if !low(alpha[t], y[t]) {
                continue;
            }
            let v = -y[t] * grad[t];
            if v < gmin {
                gmin = v;
            }
            let b = gmax - v;
            if b > 0.0 {
                let mut a = kernel[i * n + i] + kernel[t * n + t] - 2.0 * kernel[i * n + t];
                if a <= 0.0 {
                    a = TAU;
                }
                let obj = -(b * b) / a;
                if obj < best {
                    best = obj;
                    j = t;
                }
            }
        }
        if gmax - gmin < params.tolerance || j == usize::MAX {
            break;
        }
        iterations += 1;
        let (oi, oj) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let mut quad = q(i, i) + q(j, j) + 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = q(i, i) + q(j, j) - 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - oi, alpha[j] - oj);
        for (k, g) in grad.iter_mut().enumerate() {
            *g += q(i, k) * di + q(j, k) * dj;
        }
    }
    // bias from free multipliers, else the midpoint of the feasible interval
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum_free) = (0usize, 0.0);
    for t in 0..n {
        let yg = y[t] * grad[t];
        let at_upper = alpha[t] >= c;
        let at_lower = alpha[t] <= 0.0;
        if at_upper {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if at_lower {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum_free += yg;
        }
    }
    let rho = if free > 0 {
        sum_free / free as f64
    } else {
        (ub + lb) / 2.0
    };
    BinarySolution {
        alpha,
        bias: -rho,
        iterations,
    }
}

/// Trains one binary classifier per distinct label. Training is exact and
/// deterministic; `seed` is accepted for interface stability.
pub fn train_ova<T: Real>(samples: &[(Vec<T>, String)], c: T, seed: u64) -> Result<OvaModel<T>> {
    train_ova_with(samples, c, seed, &SvmParams::default())
}

pub fn train_ova_with<T: Real>(
    samples: &[(Vec<T>, String)],
    c: T,
    _seed: u64,
    params: &SvmParams,
) -> Result<OvaModel<T>> {
    let labels: Vec<String> = samples
        .iter()
        .map(|(_, l)| l.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if labels.len() < 2 {
        return Err(PfmError::InvalidInput(format!(
            "one-vs-all training needs at least two classes, got {}",
            labels.len()
        )));
    }
    if !(c > T::zero()) {
        return Err(PfmError::InvalidInput(
            "regularisation C must be positive".into(),
        ));
    }
    let dim = samples[0].0.len();
    for (x, _) in samples {
        if x.len() != dim {
            return Err(PfmError::dims(dim, x.len()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(PfmError::InvalidInput("non-finite feature value".into()));
        }
    }
    let n = samples.len();
    let xs: Vec<Vec<f64>> = samples
        .iter()
        .map(|(x, _)| x.iter().map(|v| v.to_f64_lossy()).collect())
        .collect();
    let kernel: Vec<f64> = {
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                (0..=i)
                    .map(|j| crate::scalar::dot(&xs[i], &xs[j]))
                    .collect()
            })
            .collect();
        let mut k = vec![0.0; n * n];
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        k
    };
    let cf = c.to_f64_lossy();
    let solved: Vec<(Vec<T>, T)> = labels
        .par_iter()
        .map(|label| {
            let y: Vec<f64> = samples
                .iter()
                .map(|(_, l)| if l == label { 1.0 } else { -1.0 })
                .collect();
            let sol = solve_binary(&kernel, &y, cf, params);
            let mut w = vec![0.0f64; dim];
            for ((x, &a), &yi) in xs.iter().zip(&sol.alpha).zip(&y) {
                if a != 0.0 {
                    for (wj, &xj) in w.iter_mut().zip(x) {
                        *wj += a * yi * xj;
                    }
                }
            }
            (w.into_iter().map(T::lit).collect(), T::lit(sol.bias))
        })
        .collect();
    let mut weights = Vec::with_capacity(labels.len() * dim);
    let mut biases = Vec::with_capacity(labels.len());
    for (w, b) in solved {
        weights.extend(w);
        biases.push(b);
    }
    Ok(OvaModel {
        labels,
        weights,
        biases,
        dim,
        reg_c: c,
    })
}

impl<T: Real> OvaModel<T> {
    pub fn classes(&self) -> usize {
        self.labels.len()
    }

    pub fn weight(&self, k: usize) -> &[T] {
        &self.weights[k * self.dim..(k + 1) * self.dim]
    }

    /// Primal objective of class `k` on `samples`.
    pub fn objective(&self, k: usize, samples: &[(Vec<T>, String)]) -> T {
        let w = self.weight(k);
        let half = T::lit(0.5);
        let mut hinge = T::zero();
        for (x, l) in samples {
            let y = if *l == self.labels[k] {
                T::one()
            } else {
                -T::one()
            };
            let m = T::one() - y * (crate::scalar::dot(w, x) + self.biases[k]);
            if m > T::zero() {
                hinge = hinge + m;
            }
        }
        half * crate::scalar::dot(w, w) + self.reg_c * hinge
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.labels.len();
        if p < 2 {
            return Err(PfmError::InvalidInput(
                "classifier needs at least two labels".into(),
            ));
        }
        if self.weights.len() != p * self.dim {
            return Err(PfmError::dims(p * self.dim, self.weights.len()));
        }
        if self.biases.len() != p {
            return Err(PfmError::dims(p, self.biases.len()));
        }
        Ok(())
    }
}

/// Decision values of every class; ties go to the earliest label.
pub fn predict<T: Real>(model: &OvaModel<T>, x: &[T]) -> Result<Prediction<T>> {
    if x.len() != model.dim {
        return Err(PfmError::dims(model.dim, x.len()));
    }
    let scores: Vec<T> = (0..model.classes())
        .map(|k| crate::scalar::dot(model.weight(k), x) + model.biases[k])
        .collect();
    let mut best = 0;
    for (k, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = k;
        }
    }
    Ok(Prediction {
        label: model.labels[best].clone(),
        label_index: best,
        scores,
    })
}

/// Most frequent label; ties go to the larger summed winning score, then to
/// the lexicographically smaller label.
pub fn majority_vote<T: Real>(predictions: &[Prediction<T>]) -> Result<String> {
    if predictions.is_empty() {
        return Err(PfmError::InvalidInput(
            "majority vote over no predictions".into(),
        ));
    }
    // label -> winning scores
    let mut tally: std::collections::BTreeMap<&str, Vec<T>> = Default::default();
    for p in predictions {
        let s = p.scores.get(p.label_index).copied().unwrap_or(T::zero());
        tally.entry(p.label.as_str()).or_default().push(s);
    }
    let mut best: Option<(&str, usize, T)> = None;
    for (label, mut scores) in tally {
        // order-independent summation
        scores.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        let sum: T = scores.iter().copied().sum();
        let n = scores.len();
        let better = match best {
            None => true,
            Some((_, bn, bs)) => n > bn || (n == bn && sum > bs),
        };
        if better {
            best = Some((label, n, sum));
        }
    }
    Ok(best.expect("non-empty").0.to_string())
}
