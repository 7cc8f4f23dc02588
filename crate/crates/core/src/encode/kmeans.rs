use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{PfmError, Result};
use crate::scalar::Real;

pub(crate) fn sq_dist<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| {
        let d = x - y;
        acc + d * d
    })
}

/// Index of the nearest centroid; ties go to the lower index.
pub fn nearest_centroid<T: Real>(x: &[T], centroids: &[Vec<T>]) -> usize {
    let mut best = 0;
    let mut best_d = T::infinity();
    for (k, c) in centroids.iter().enumerate() {
        let d = sq_dist(x, c);
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    best
}

pub(crate) fn check_dims<T: Real>(data: &[Vec<T>]) -> Result<usize> {
    let d = data.first().map(|v| v.len()).unwrap_or(0);
    for v in data {
        if v.len() != d {
            return Err(PfmError::dims(d, v.len()));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(PfmError::InvalidInput("non-finite descriptor value".into()));
        }
    }
    Ok(d)
}

/// Lloyd's k-means from farthest-point seeding. The first centre is a
/// seeded random sample; each further centre is the sample farthest from
/// the centres chosen so far. Returns the centres and the final assignment.
pub fn kmeans<T: Real>(
    data: &[Vec<T>],
    k: usize,
    iterations: usize,
    seed: u64,
) -> Result<(Vec<Vec<T>>, Vec<usize>)> {
    if k == 0 {
        return Err(PfmError::InvalidInput("k-means needs k >= 1".into()));
    }
    if data.len() < k {
        return Err(PfmError::TooFewSamples {
            needed: k,
            got: data.len(),
        });
    }
    let dim = check_dims(data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = vec![data[rng.gen_range(0..data.len())].clone()];
    let mut nearest: Vec<T> = data.iter().map(|x| sq_dist(x, &centers[0])).collect();
    while centers.len() < k {
        let mut far = 0;
        for (i, &d) in nearest.iter().enumerate() {
            if d > nearest[far] {
                far = i;
            }
        }
        let c = data[far].clone();
        for (x, n) in data.iter().zip(nearest.iter_mut()) {
            let d = sq_dist(x, &c);
            if d < *n {
                *n = d;
            }
        }
        centers.push(c);
    }
    let mut assign: Vec<usize> = data.iter().map(|x| nearest_centroid(x, &centers)).collect();
    for _ in 0..iterations {
        let mut sums = vec![vec![T::zero(); dim]; k];
        let mut counts = vec![0usize; k];
        for (x, &a) in data.iter().zip(&assign) {
            counts[a] += 1;
            for (s, &v) in sums[a].iter_mut().zip(x) {
                *s = *s + v;
            }
        }
        for j in 0..k {
            // an emptied cluster keeps its previous centre
            if counts[j] > 0 {
                let n = T::from_usize_lossy(counts[j]);
                centers[j] = sums[j].iter().map(|&s| s / n).collect();
            }
        }
        let next: Vec<usize> = data.iter().map(|x| nearest_centroid(x, &centers)).collect();
        let done = next == assign;
        assign = next;
        if done {
            break;
        }
    }
    Ok((centers, assign))
}
