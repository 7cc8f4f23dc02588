use super::gmm::{GmmModel, Scorer};
use crate::error::{PfmError, Result};
use crate::scalar::{l2_normalize, Real};

/// Length of the Fisher Vector for a mixture: mean and variance gradients
/// for every component and dimension.
pub fn fisher_dim<T: Real>(gmm: &GmmModel<T>) -> usize {
    2 * gmm.components * gmm.dim
}

/// Unnormalised Fisher statistics. Component `k` occupies
/// `[k*2d, (k+1)*2d)`: first the `d` mean gradients, then the `d` variance
/// gradients, each scaled by the diagonal Fisher-information normaliser.
pub fn fisher_statistics<T: Real>(descriptors: &[Vec<T>], gmm: &GmmModel<T>) -> Result<Vec<T>> {
    if descriptors.is_empty() {
        return Err(PfmError::InvalidInput(
            "Fisher encoding of an empty descriptor set".into(),
        ));
    }
    let (k, d) = (gmm.components, gmm.dim);
    let scorer = Scorer::new(gmm);
    let mut gamma = vec![T::zero(); k];
    let mut out = vec![T::zero(); 2 * k * d];
    let inv_sigma: Vec<T> = gmm.variances.iter().map(|v| v.sqrt().recip()).collect();
    for x in descriptors {
        if x.len() != d {
            return Err(PfmError::dims(d, x.len()));
        }
        scorer.posteriors_into(x, &mut gamma);
        for c in 0..k {
            let g = gamma[c];
            if g == T::zero() {
                continue;
            }
            let mu = gmm.mean(c);
            let is = &inv_sigma[c * d..(c + 1) * d];
            let block = &mut out[2 * c * d..2 * (c + 1) * d];
            let (gm, gs) = block.split_at_mut(d);
            for j in 0..d {
                let z = (x[j] - mu[j]) * is[j];
                gm[j] = gm[j] + g * z;
                gs[j] = gs[j] + g * (z * z - T::one());
            }
        }
    }
    let t = T::from_usize_lossy(descriptors.len());
    let two = T::lit(2.0);
    for c in 0..k {
        let w = gmm.weights[c];
        let sm = (t * w.sqrt()).recip();
        let ss = (t * (two * w).sqrt()).recip();
        let block = &mut out[2 * c * d..2 * (c + 1) * d];
        for v in &mut block[..d] {
            *v = *v * sm;
        }
        for v in &mut block[d..] {
            *v = *v * ss;
        }
    }
    Ok(out)
}

/// Signed square root followed by L2 normalisation, in place.
pub fn power_normalize<T: Real>(v: &mut [T]) {
    for x in v.iter_mut() {
        *x = x.signum() * x.abs().sqrt();
    }
    l2_normalize(v);
}

/// Improved Fisher Vector: [`fisher_statistics`] then [`power_normalize`].
pub fn fisher_vector<T: Real>(descriptors: &[Vec<T>], gmm: &GmmModel<T>) -> Result<Vec<T>> {
    let mut v = fisher_statistics(descriptors, gmm)?;
    power_normalize(&mut v);
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::l2_norm;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_gmm(rng: &mut ChaCha8Rng, k: usize, d: usize) -> GmmModel<f64> {
        let mut w: Vec<f64> = (0..k).map(|_| rng.gen_range(0.2..1.0)).collect();
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= s);
        GmmModel {
            components: k,
            dim: d,
            weights: w,
            means: (0..k * d).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            variances: (0..k * d).map(|_| rng.gen_range(0.3..2.0)).collect(),
        }
    }

    #[test]
    fn full_descriptor_dimension() {
        let g = GmmModel {
            components: 100,
            dim: 318,
            weights: vec![0.01; 100],
            means: vec![0.0; 31800],
            variances: vec![1.0; 31800],
        };
        let x = vec![vec![0.1; 318]; 3];
        assert_eq!(fisher_vector(&x, &g).unwrap().len(), 63600);
        assert_eq!(fisher_dim(&g), 63600);
    }

    #[test]
    fn descriptors_at_the_mean() {
        let g = GmmModel {
            components: 1,
            dim: 3,
            weights: vec![1.0],
            means: vec![0.5, -1.0, 2.0],
            variances: vec![1.0, 4.0, 0.25],
        };
        let x = vec![g.means.clone(); 4];
        let s = fisher_statistics(&x, &g).unwrap();
        assert_eq!(&s[..3], &[0.0, 0.0, 0.0]);
        for v in &s[3..] {
            assert!((v + 1.0 / 2f64.sqrt()).abs() < 1e-15);
        }
        let fv = fisher_vector(&x, &g).unwrap();
        for v in &fv[3..] {
            assert!((v + 1.0 / 3f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_finite_difference_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (t, k, d) = (5, 2, 3);
        let g = random_gmm(&mut rng, k, d);
        let x: Vec<Vec<f64>> = (0..t)
            .map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let stats = fisher_statistics(&x, &g).unwrap();
        let mll = |m: &GmmModel<f64>| m.mean_log_likelihood(&x).unwrap();
        let h = 1e-5;
        for c in 0..k {
            for j in 0..d {
                let i = c * d + j;
                let sigma = g.variances[i].sqrt();
                let mut p = g.clone();
                let mut m = g.clone();
                p.means[i] += h;
                m.means[i] -= h;
                let dmu = (mll(&p) - mll(&m)) / (2.0 * h);
                let want = dmu * sigma / g.weights[c].sqrt();
                let got = stats[2 * c * d + j];
                assert!(
                    (got - want).abs() <= 1e-4 * want.abs().max(1e-3),
                    "{got} {want}"
                );
                let (mut p, mut m) = (g.clone(), g.clone());
                p.variances[i] = (sigma + h).powi(2);
                m.variances[i] = (sigma - h).powi(2);
                let dsig = (mll(&p) - mll(&m)) / (2.0 * h);
                let want = dsig * sigma / (2.0 * g.weights[c]).sqrt();
                let got = stats[2 * c * d + d + j];
                assert!(
                    (got - want).abs() <= 1e-4 * want.abs().max(1e-3),
                    "{got} {want}"
                );
            }
        }
    }

    #[test]
    fn normalized_and_order_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = random_gmm(&mut rng, 3, 4);
        let mut x: Vec<Vec<f64>> = (0..12)
            .map(|_| (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let a = fisher_vector(&x, &g).unwrap();
        assert!((l2_norm(&a) - 1.0).abs() < 1e-12);
        x.reverse();
        let b = fisher_vector(&x, &g).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn input_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = random_gmm(&mut rng, 2, 3);
        assert!(fisher_vector(&[], &g).is_err());
        assert!(fisher_vector(&[vec![1.0, 2.0]], &g).is_err());
    }
}
