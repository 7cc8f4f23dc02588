use super::kmeans::{check_dims, kmeans};
use crate::error::{PfmError, Result};
use crate::scalar::Real;

/// Diagonal-covariance Gaussian mixture. `means` and `variances` are
/// `components x dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel<T> {
    pub components: usize,
    pub dim: usize,
    pub weights: Vec<T>,
    pub means: Vec<T>,
    pub variances: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct GmmFit<T> {
    pub model: GmmModel<T>,
    /// Mean log-likelihood of the data before each M-step.
    pub log_likelihood: Vec<T>,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmParams {
    pub kmeans_iterations: usize,
    pub max_iterations: usize,
    /// Stop once the relative log-likelihood gain drops below this.
    pub tolerance: f64,
    /// Per-dimension variance floor as a fraction of the data variance.
    pub variance_floor: f64,
}

impl Default for EmParams {
    fn default() -> Self {
        EmParams {
            kmeans_iterations: 10,
            max_iterations: 100,
            tolerance: 1e-5,
            variance_floor: 1e-4,
        }
    }
}

/// Per-component constants for fast log-density evaluation.
pub(crate) struct Scorer<'a, T> {
    model: &'a GmmModel<T>,
    log_const: Vec<T>,
    inv_var: Vec<T>,
}

impl<'a, T: Real> Scorer<'a, T> {
    pub(crate) fn new(model: &'a GmmModel<T>) -> Self {
        let half = T::lit(0.5);
        let ln_2pi = T::lit((2.0 * std::f64::consts::PI).ln());
        let d = model.dim;
        let log_const = (0..model.components)
            .map(|k| {
                let s: T = model.variances[k * d..(k + 1) * d]
                    .iter()
                    .map(|&v| v.ln() + ln_2pi)
                    .sum();
                model.weights[k].ln() - half * s
            })
            .collect();
        let inv_var = model.variances.iter().map(|&v| v.recip()).collect();
        Scorer {
            model,
            log_const,
            inv_var,
        }
    }

    /// Fills `out` with posteriors and returns `log p(x)`.
    pub(crate) fn posteriors_into(&self, x: &[T], out: &mut [T]) -> T {
        let d = self.model.dim;
        let half = T::lit(0.5);
        let mut best = T::neg_infinity();
        for k in 0..self.model.components {
            let mu = &self.model.means[k * d..(k + 1) * d];
            let iv = &self.inv_var[k * d..(k + 1) * d];
            let mut q = T::zero();
            for j in 0..d {
                let r = x[j] - mu[j];
                q = q + r * r * iv[j];
            }
            let lp = self.log_const[k] - half * q;
            out[k] = lp;
            if lp > best {
                best = lp;
            }
        }
        let mut tot = T::zero();
        for o in out.iter_mut() {
            *o = (*o - best).exp();
            tot = tot + *o;
        }
        for o in out.iter_mut() {
            *o = *o / tot;
        }
        best + tot.ln()
    }
}

impl<T: Real> GmmModel<T> {
    pub fn mean(&self, k: usize) -> &[T] {
        &self.means[k * self.dim..(k + 1) * self.dim]
    }

    pub fn variance(&self, k: usize) -> &[T] {
        &self.variances[k * self.dim..(k + 1) * self.dim]
    }

    pub fn validate(&self) -> Result<()> {
        let (k, d) = (self.components, self.dim);
        if k == 0 || d == 0 {
            return Err(PfmError::InvalidInput("empty mixture".into()));
        }
        if self.weights.len() != k {
            return Err(PfmError::dims(k, self.weights.len()));
        }
        for m in [&self.means, &self.variances] {
            if m.len() != k * d {
                return Err(PfmError::dims(k * d, m.len()));
            }
        }
        if self.weights.iter().any(|&w| !(w > T::zero()))
            || self.variances.iter().any(|&v| !(v > T::zero()))
        {
            return Err(PfmError::InvalidInput(
                "mixture weights and variances must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Component posteriors of one descriptor.
    pub fn posteriors(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.dim {
            return Err(PfmError::dims(self.dim, x.len()));
        }
        let mut out = vec![T::zero(); self.components];
        Scorer::new(self).posteriors_into(x, &mut out);
        Ok(out)
    }

    pub fn log_likelihood(&self, x: &[T]) -> Result<T> {
        if x.len() != self.dim {
            return Err(PfmError::dims(self.dim, x.len()));
        }
        let mut out = vec![T::zero(); self.components];
        Ok(Scorer::new(self).posteriors_into(x, &mut out))
    }

    pub fn mean_log_likelihood(&self, data: &[Vec<T>]) -> Result<T> {
        if data.is_empty() {
            return Err(PfmError::InvalidInput("no descriptors".into()));
        }
        let s = Scorer::new(self);
        let mut out = vec![T::zero(); self.components];
        let mut tot = T::zero();
        for x in data {
            if x.len() != self.dim {
                return Err(PfmError::dims(self.dim, x.len()));
            }
            tot = tot + s.posteriors_into(x, &mut out);
        }
        Ok(tot / T::from_usize_lossy(data.len()))
    }
}

/// Fits a `k`-component mixture with default EM settings.
pub fn fit_gmm<T: Real>(data: &[Vec<T>], k: usize, seed: u64) -> Result<GmmFit<T>> {
    fit_gmm_with(data, k, seed, &EmParams::default())
}

pub fn fit_gmm_with<T: Real>(
    data: &[Vec<T>],
    k: usize,
    seed: u64,
    params: &EmParams,
) -> Result<GmmFit<T>> {
    if k == 0 {
        return Err(PfmError::InvalidInput(
            "mixture needs at least one component".into(),
        ));
    }
    if data.len() < 10 * k {
        return Err(PfmError::TooFewSamples {
            needed: 10 * k,
            got: data.len(),
        });
    }
    let d = check_dims(data)?;
    if d == 0 {
        return Err(PfmError::InvalidInput(
            "zero-dimensional descriptors".into(),
        ));
    }
    let n = T::from_usize_lossy(data.len());
    let mut mean = vec![T::zero(); d];
    for x in data {
        for (m, &v) in mean.iter_mut().zip(x) {
            *m = *m + v;
        }
    }
    mean.iter_mut().for_each(|m| *m = *m / n);
    let mut var = vec![T::zero(); d];
    for x in data {
        for j in 0..d {
            let r = x[j] - mean[j];
            var[j] = var[j] + r * r;
        }
    }
    var.iter_mut().for_each(|v| *v = *v / n);
    let max_var = var.iter().fold(T::zero(), |a, &b| a.max(b));
    if !(max_var > T::zero()) {
        return Err(PfmError::Degenerate("all descriptors are identical".into()));
    }
    let rel = T::lit(params.variance_floor);
    // constant dimensions fall back to a floor tied to the widest dimension
    let floor: Vec<T> = var
        .iter()
        .map(|&v| (rel * v).max(max_var * T::lit(1e-10)))
        .collect();

    let (centers, assign) = kmeans(data, k, params.kmeans_iterations, seed)?;
    let mut counts = vec![0usize; k];
    let mut sq = vec![T::zero(); k * d];
    for (x, &a) in data.iter().zip(&assign) {
        counts[a] += 1;
        for j in 0..d {
            let r = x[j] - centers[a][j];
            sq[a * d + j] = sq[a * d + j] + r * r;
        }
    }
    let mut model = GmmModel {
        components: k,
        dim: d,
        weights: counts
            .iter()
            .map(|&c| T::from_usize_lossy(c.max(1)))
            .collect(),
        means: centers.concat(),
        variances: (0..k * d)
            .map(|i| {
                let (c, j) = (i / d, i % d);
                let v = if counts[c] > 1 {
                    sq[i] / T::from_usize_lossy(counts[c])
                } else {
                    var[j]
                };
                v.max(floor[j])
            })
            .collect(),
    };
    let wsum: T = model.weights.iter().copied().sum();
    model.weights.iter_mut().for_each(|w| *w = *w / wsum);

    let min_weight = T::lit(1e-12);
    let mut trace = Vec::new();
    let mut resp = vec![T::zero(); k];
    let mut iterations = 0;
    loop {
        // E-step with sufficient statistics
        let scorer = Scorer::new(&model);
        let mut nk = vec![T::zero(); k];
        let mut sx = vec![T::zero(); k * d];
        let mut sxx = vec![T::zero(); k * d];
        let mut ll = T::zero();
        for x in data {
            ll = ll + scorer.posteriors_into(x, &mut resp);
            for c in 0..k {
                let g = resp[c];
                if g == T::zero() {
                    continue;
                }
                nk[c] = nk[c] + g;
                let row = c * d;
                for j in 0..d {
                    let gx = g * x[j];
                    sx[row + j] = sx[row + j] + gx;
                    sxx[row + j] = sxx[row + j] + gx * x[j];
                }
            }
        }
        let ll = ll / n;
        let converged = match trace.last() {
            Some(&prev) => {
                let prev: T = prev;
                (ll - prev) < T::lit(params.tolerance) * prev.abs()
            }
            None => false,
        };
        trace.push(ll);
        if converged || iterations >= params.max_iterations {
            break;
        }
        iterations += 1;
        // M-step
        for c in 0..k {
            if nk[c] > T::zero() {
                let row = c * d;
                for j in 0..d {
                    let mu = sx[row + j] / nk[c];
                    // the floor is the constrained optimum of the variance
                    let v = sxx[row + j] / nk[c] - mu * mu;
                    model.means[row + j] = mu;
                    model.variances[row + j] = v.max(floor[j]);
                }
            }
            model.weights[c] = (nk[c] / n).max(min_weight);
        }
        let wsum: T = model.weights.iter().copied().sum();
        model.weights.iter_mut().for_each(|w| *w = *w / wsum);
    }
    Ok(GmmFit {
        model,
        log_likelihood: trace,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn two_gaussians(n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Normal::new(-5.0, 1.0).unwrap();
        let b = Normal::new(5.0, 1.0).unwrap();
        (0..n)
            .map(|i| {
                vec![if i % 2 == 0 {
                    a.sample(&mut rng)
                } else {
                    b.sample(&mut rng)
                }]
            })
            .collect()
    }

    #[test]
    fn recovers_two_components() {
        let data = two_gaussians(2000, 11);
        let fit = fit_gmm(&data, 2, 3).unwrap();
        let m = &fit.model;
        let mut order = [0, 1];
        order.sort_by(|&a, &b| m.means[a].partial_cmp(&m.means[b]).unwrap());
        assert!((m.means[order[0]] + 5.0).abs() < 0.1);
        assert!((m.means[order[1]] - 5.0).abs() < 0.1);
        for w in &m.weights {
            assert!((w - 0.5).abs() < 0.05);
        }
        for v in &m.variances {
            assert!((v - 1.0).abs() < 0.15);
        }
    }

    #[test]
    fn single_component_is_closed_form() {
        let data: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![i as f64 * 0.5, (i % 7) as f64])
            .collect();
        let fit = fit_gmm(&data, 1, 0).unwrap();
        for j in 0..2 {
            let mean: f64 = data.iter().map(|x| x[j]).sum::<f64>() / 40.0;
            let var: f64 = data.iter().map(|x| (x[j] - mean).powi(2)).sum::<f64>() / 40.0;
            assert!((fit.model.means[j] - mean).abs() < 1e-12);
            assert!((fit.model.variances[j] - var).abs() < 1e-10);
        }
        assert_eq!(fit.model.weights, vec![1.0]);
    }

    #[test]
    fn rejects_small_or_degenerate_data() {
        let few: Vec<Vec<f64>> = (0..19).map(|i| vec![i as f64]).collect();
        assert!(matches!(
            fit_gmm(&few, 2, 0),
            Err(PfmError::TooFewSamples { .. })
        ));
        let same = vec![vec![1.0f64, 2.0]; 50];
        assert!(matches!(fit_gmm(&same, 2, 0), Err(PfmError::Degenerate(_))));
    }

    #[test]
    fn constant_dimension_keeps_positive_variance() {
        let data: Vec<Vec<f64>> = (0..60).map(|i| vec![(i % 10) as f64, 3.0]).collect();
        let fit = fit_gmm(&data, 3, 1).unwrap();
        assert!(fit.model.validate().is_ok());
        let s: f64 = fit.model.weights.iter().sum();
        assert!((s - 1.0).abs() < 1e-9);
    }

    #[test]
    fn works_in_single_precision() {
        let data: Vec<Vec<f32>> = two_gaussians(400, 5)
            .into_iter()
            .map(|v| v.into_iter().map(|x| x as f32).collect())
            .collect();
        let fit = fit_gmm(&data, 2, 0).unwrap();
        let mut m = fit.model.means.clone();
        m.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((m[0] + 5.0).abs() < 0.2 && (m[1] - 5.0).abs() < 0.2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn em_never_decreases_likelihood(seed in 0u64..1000, k in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let noise = Normal::new(0.0, 1.0).unwrap();
            let data: Vec<Vec<f64>> = (0..120)
                .map(|i| (0..3).map(|j| noise.sample(&mut rng) + ((i * (j + 1)) % 4) as f64).collect())
                .collect();
            let fit = fit_gmm(&data, k, seed).unwrap();
            for w in fit.log_likelihood.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-9, "{:?}", fit.log_likelihood);
            }
            for x in data.iter().take(10) {
                let g = fit.model.posteriors(x).unwrap();
                prop_assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }
}
