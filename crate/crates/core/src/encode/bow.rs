use super::kmeans::{kmeans, nearest_centroid};
use crate::error::{PfmError, Result};
use crate::scalar::Real;

/// Visual vocabulary for the bag-of-words baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook<T> {
    pub centroids: Vec<Vec<T>>,
}

impl<T: Real> Codebook<T> {
    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.centroids.first().map_or(0, |c| c.len())
    }
}

pub fn fit_codebook<T: Real>(data: &[Vec<T>], k: usize, seed: u64) -> Result<Codebook<T>> {
    let (centroids, _) = kmeans(data, k, 20, seed)?;
    Ok(Codebook { centroids })
}

/// L1-normalised hard-assignment histogram; empty input gives all zeros.
pub fn bow_encode<T: Real>(descriptors: &[Vec<T>], codebook: &Codebook<T>) -> Result<Vec<T>> {
    let mut h = vec![T::zero(); codebook.len()];
    for x in descriptors {
        if x.len() != codebook.dim() {
            return Err(PfmError::dims(codebook.dim(), x.len()));
        }
        let k = nearest_centroid(x, &codebook.centroids);
        h[k] = h[k] + T::one();
    }
    if !descriptors.is_empty() {
        let n = T::from_usize_lossy(descriptors.len());
        h.iter_mut().for_each(|v| *v = *v / n);
    }
    Ok(h)
}
