use super::eigen::symmetric_eigen;
use super::kmeans::check_dims;
use crate::error::{PfmError, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcaScope {
    /// Applied to individual tracklet descriptors.
    LowLevel,
    /// Applied to whole-sequence pyramid descriptors.
    HighLevel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PcaTarget {
    Dims(usize),
    /// Fraction in (0, 1] of each block's input dimension, rounded up.
    Fraction(f64),
}

impl PcaTarget {
    pub fn dims_for(&self, input_dim: usize) -> usize {
        match *self {
            PcaTarget::Dims(d) => d,
            PcaTarget::Fraction(f) => ((f * input_dim as f64) - 1e-9).ceil().max(1.0) as usize,
        }
    }
}

/// Projection for one contiguous slice of the input.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaBlock<T> {
    pub offset: usize,
    pub input_dim: usize,
    pub output_dim: usize,
    pub mean: Vec<T>,
    /// `input_dim x output_dim`, row-major, orthonormal columns.
    pub basis: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel<T> {
    pub scope: PcaScope,
    pub input_dim: usize,
    pub output_dim: usize,
    /// One block without a subtype split, else one per subtype.
    pub blocks: Vec<PcaBlock<T>>,
}

impl<T: Real> PcaBlock<T> {
    fn project(&self, v: &[T], out: &mut Vec<T>) {
        let x = &v[self.offset..self.offset + self.input_dim];
        let start = out.len();
        out.resize(start + self.output_dim, T::zero());
        let y = &mut out[start..];
        for (i, (&xi, &mi)) in x.iter().zip(&self.mean).enumerate() {
            let c = xi - mi;
            let row = &self.basis[i * self.output_dim..(i + 1) * self.output_dim];
            for (yj, &b) in y.iter_mut().zip(row) {
                *yj = *yj + c * b;
            }
        }
    }
}

impl<T: Real> PcaModel<T> {
    /// Per-block input dimensions.
    pub fn subtype_split(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.input_dim).collect()
    }

    /// Block-diagonal `input_dim x output_dim` basis, row-major.
    pub fn basis_matrix(&self) -> Vec<T> {
        let mut m = vec![T::zero(); self.input_dim * self.output_dim];
        let mut col = 0;
        for b in &self.blocks {
            for i in 0..b.input_dim {
                for j in 0..b.output_dim {
                    m[(b.offset + i) * self.output_dim + col + j] = b.basis[i * b.output_dim + j];
                }
            }
            col += b.output_dim;
        }
        m
    }

    pub fn mean(&self) -> Vec<T> {
        self.blocks
            .iter()
            .flat_map(|b| b.mean.iter().copied())
            .collect()
    }

    /// Maps reduced coordinates back to the input space.
    pub fn reconstruct(&self, y: &[T]) -> Result<Vec<T>> {
        if y.len() != self.output_dim {
            return Err(PfmError::dims(self.output_dim, y.len()));
        }
        let mut out = Vec::with_capacity(self.input_dim);
        let mut col = 0;
        for b in &self.blocks {
            let yb = &y[col..col + b.output_dim];
            for i in 0..b.input_dim {
                let row = &b.basis[i * b.output_dim..(i + 1) * b.output_dim];
                out.push(b.mean[i] + crate::scalar::dot(row, yb));
            }
            col += b.output_dim;
        }
        Ok(out)
    }
}

/// Projects `v` onto the model's basis, block by block.
pub fn apply_pca<T: Real>(v: &[T], model: &PcaModel<T>) -> Result<Vec<T>> {
    if v.len() != model.input_dim {
        return Err(PfmError::dims(model.input_dim, v.len()));
    }
    let mut out = Vec::with_capacity(model.output_dim);
    for b in &model.blocks {
        b.project(v, &mut out);
    }
    Ok(out)
}

/// Principal components of `vectors`. With `subtype_split` each listed block
/// of consecutive input dimensions is reduced independently.
pub fn fit_pca<T: Real>(
    vectors: &[Vec<T>],
    target: PcaTarget,
    scope: PcaScope,
    subtype_split: Option<&[usize]>,
) -> Result<PcaModel<T>> {
    let dim = check_dims(vectors)?;
    if dim == 0 {
        return Err(PfmError::InvalidInput("no input dimensions".into()));
    }
    let split: Vec<usize> = match subtype_split {
        Some(s) => {
            let total: usize = s.iter().sum();
            if total != dim || s.contains(&0) {
                return Err(PfmError::InvalidInput(format!(
                    "subtype split {s:?} does not partition {dim} dimensions"
                )));
            }
            if matches!(target, PcaTarget::Dims(_)) && s.len() > 1 {
                return Err(PfmError::InvalidInput(
                    "a subtype split needs a fractional target".into(),
                ));
            }
            s.to_vec()
        }
        None => vec![dim],
    };
    if let PcaTarget::Fraction(f) = target {
        if !(f > 0.0 && f <= 1.0) {
            return Err(PfmError::InvalidInput(format!(
                "PCA fraction {f} outside (0, 1]"
            )));
        }
    }
    let mut blocks = Vec::with_capacity(split.len());
    let mut offset = 0;
    for &bd in &split {
        let d = target.dims_for(bd);
        if d == 0 || d > bd {
            return Err(PfmError::InvalidInput(format!(
                "cannot reduce {bd} dimensions to {d}"
            )));
        }
        if vectors.len() < d + 1 {
            return Err(PfmError::TooFewSamples {
                needed: d + 1,
                got: vectors.len(),
            });
        }
        let slice: Vec<&[T]> = vectors.iter().map(|v| &v[offset..offset + bd]).collect();
        blocks.push(fit_block(&slice, offset, d)?);
        offset += bd;
    }
    let output_dim = blocks.iter().map(|b| b.output_dim).sum();
    Ok(PcaModel {
        scope,
        input_dim: dim,
        output_dim,
        blocks,
    })
}

fn fit_block<T: Real>(rows: &[&[T]], offset: usize, d: usize) -> Result<PcaBlock<T>> {
    let n = rows.len();
    let dim = rows[0].len();
    let nf = T::from_usize_lossy(n);
    let mut mean = vec![T::zero(); dim];
    for r in rows {
        for (m, &v) in mean.iter_mut().zip(r.iter()) {
            *m = *m + v;
        }
    }
    mean.iter_mut().for_each(|m| *m = *m / nf);
    let centered: Vec<Vec<T>> = rows
        .iter()
        .map(|r| r.iter().zip(&mean).map(|(&v, &m)| v - m).collect())
        .collect();

    // columns of `vecs` are principal directions in input space
    let (vals, mut cols): (Vec<T>, Vec<Vec<T>>) = if n > dim {
        let mut cov = vec![T::zero(); dim * dim];
        for r in &centered {
            for i in 0..dim {
                let ri = r[i];
                if ri == T::zero() {
                    continue;
                }
                let row = &mut cov[i * dim..(i + 1) * dim];
                for j in i..dim {
                    row[j] = row[j] + ri * r[j];
                }
            }
        }
        for i in 0..dim {
            for j in 0..i {
                cov[i * dim + j] = cov[j * dim + i];
            }
        }
        let (vals, vecs) = symmetric_eigen(&cov, dim);
        let cols = (0..d.min(dim))
            .map(|c| (0..dim).map(|r| vecs[r * dim + c]).collect())
            .collect();
        (vals, cols)
    } else {
        // Gram trick: eigenvectors of X X^T mapped through X^T
        let mut gram = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..=i {
                let g = crate::scalar::dot(&centered[i], &centered[j]);
                gram[i * n + j] = g;
                gram[j * n + i] = g;
            }
        }
        let (vals, vecs) = symmetric_eigen(&gram, n);
        let cols = (0..d.min(n))
            .map(|c| {
                let mut u = vec![T::zero(); dim];
                for (i, r) in centered.iter().enumerate() {
                    let a = vecs[i * n + c];
                    for (uj, &x) in u.iter_mut().zip(r) {
                        *uj = *uj + a * x;
                    }
                }
                u
            })
            .collect();
        (vals, cols)
    };
    let top = vals.first().copied().unwrap_or(T::zero());
    let tol = top * T::lit(1e-10).max(T::epsilon() * T::from_usize_lossy(dim.max(n)));
    let rank = vals.iter().filter(|&&v| top > T::zero() && v > tol).count();
    if d > rank {
        return Err(PfmError::RankDeficient { requested: d, rank });
    }
    // re-orthonormalise (modified Gram-Schmidt) and fix signs
    for c in 0..d {
        for p in 0..c {
            let (done, rest) = cols.split_at_mut(c);
            let proj = crate::scalar::dot(&rest[0], &done[p]);
            for (x, &b) in rest[0].iter_mut().zip(&done[p]) {
                *x = *x - proj * b;
            }
        }
        let norm = crate::scalar::l2_norm(&cols[c]);
        let mut big = T::zero();
        for &x in &cols[c] {
            if x.abs() > big.abs() {
                big = x;
            }
        }
        let s = if big < T::zero() { -norm } else { norm };
        cols[c].iter_mut().for_each(|x| *x = *x / s);
    }
    let mut basis = vec![T::zero(); dim * d];
    for (c, col) in cols.iter().take(d).enumerate() {
        for (r, &x) in col.iter().enumerate() {
            basis[r * d + c] = x;
        }
    }
    Ok(PcaBlock {
        offset,
        input_dim: dim,
        output_dim: d,
        mean,
        basis,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rows(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect()
    }

    fn orthonormal(m: &PcaModel<f64>) {
        let b = m.basis_matrix();
        let (r, c) = (m.input_dim, m.output_dim);
        for i in 0..c {
            for j in 0..c {
                let s: f64 = (0..r).map(|k| b[k * c + i] * b[k * c + j]).sum();
                assert!((s - if i == j { 1.0 } else { 0.0 }).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn recovers_plane() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = [1.0, 2.0, 0.0, -1.0, 0.5];
        let b = [0.0, 1.0, 1.0, 1.0, -2.0];
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|_| {
                let (s, t): (f64, f64) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
                (0..5).map(|i| 7.0 + s * a[i] + t * b[i]).collect()
            })
            .collect();
        let m = fit_pca(&rows, PcaTarget::Dims(2), PcaScope::LowLevel, None).unwrap();
        orthonormal(&m);
        for r in &rows {
            let y = apply_pca(r, &m).unwrap();
            let back = m.reconstruct(&y).unwrap();
            for (u, v) in back.iter().zip(r) {
                assert!((u - v).abs() < 1e-8);
            }
        }
        assert!(matches!(
            fit_pca(&rows, PcaTarget::Dims(3), PcaScope::LowLevel, None),
            Err(PfmError::RankDeficient {
                requested: 3,
                rank: 2
            })
        ));
        let zero = apply_pca(&m.mean(), &m).unwrap();
        assert!(zero.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn full_rank_is_exact() {
        let rows = random_rows(40, 6, 1);
        let m = fit_pca(&rows, PcaTarget::Dims(6), PcaScope::HighLevel, None).unwrap();
        orthonormal(&m);
        let y = apply_pca(&rows[3], &m).unwrap();
        let back = m.reconstruct(&y).unwrap();
        for (u, v) in back.iter().zip(&rows[3]) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn gram_path_when_fewer_samples_than_dims() {
        let rows = random_rows(8, 30, 2);
        let m = fit_pca(&rows, PcaTarget::Dims(7), PcaScope::HighLevel, None).unwrap();
        orthonormal(&m);
        // centred data of 8 samples spans 7 directions: exact reconstruction
        for r in &rows {
            let back = m.reconstruct(&apply_pca(r, &m).unwrap()).unwrap();
            for (u, v) in back.iter().zip(r) {
                assert!((u - v).abs() < 1e-8);
            }
        }
        assert!(fit_pca(&rows, PcaTarget::Dims(8), PcaScope::HighLevel, None).is_err());
    }

    #[test]
    fn gram_and_covariance_agree() {
        let rows = random_rows(12, 10, 9);
        let a = fit_pca(&rows, PcaTarget::Dims(3), PcaScope::HighLevel, None).unwrap();
        let few: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().chain(&[0.0; 4]).copied().collect())
            .collect();
        let b = fit_pca(&few, PcaTarget::Dims(3), PcaScope::HighLevel, None).unwrap();
        for r in 0..10 {
            for c in 0..3 {
                assert!((a.blocks[0].basis[r * 3 + c] - b.blocks[0].basis[r * 3 + c]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn subtype_split_dims() {
        let rows = random_rows(400, 318, 5);
        let split = [30, 96, 96, 96];
        let m = fit_pca(
            &rows,
            PcaTarget::Fraction(0.4),
            PcaScope::LowLevel,
            Some(&split),
        )
        .unwrap();
        assert_eq!(m.output_dim, 129);
        assert_eq!(
            m.blocks.iter().map(|b| b.output_dim).collect::<Vec<_>>(),
            vec![12, 39, 39, 39]
        );
        orthonormal(&m);
        // block b of the output depends on block b of the input only
        let mut v = rows[0].clone();
        let y0 = apply_pca(&v, &m).unwrap();
        for x in &mut v[30..126] {
            *x += 1.0;
        }
        let y1 = apply_pca(&v, &m).unwrap();
        assert_eq!(&y0[..12], &y1[..12]);
        assert_eq!(&y0[51..], &y1[51..]);
        assert_ne!(&y0[12..51], &y1[12..51]);
    }

    #[test]
    fn apply_matches_matrix_oracle() {
        let rows = random_rows(30, 5, 8);
        let m = fit_pca(&rows, PcaTarget::Dims(3), PcaScope::LowLevel, None).unwrap();
        let v = [0.3, -0.2, 0.9, 0.1, -0.7];
        let b = m.basis_matrix();
        let mean = m.mean();
        let y = apply_pca(&v, &m).unwrap();
        for j in 0..3 {
            let want: f64 = (0..5).map(|i| b[i * 3 + j] * (v[i] - mean[i])).sum();
            assert!((y[j] - want).abs() < 1e-14);
        }
        assert!(apply_pca(&v[..4], &m).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn sign_convention(seed in 0u64..500) {
            let rows = random_rows(25, 6, seed);
            let m = fit_pca(&rows, PcaTarget::Dims(4), PcaScope::LowLevel, None).unwrap();
            let b = &m.blocks[0].basis;
            for c in 0..4 {
                let col: Vec<f64> = (0..6).map(|r| b[r * 4 + c]).collect();
                let big = col.iter().copied().fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
                prop_assert!(big > 0.0);
            }
        }
    }
}
