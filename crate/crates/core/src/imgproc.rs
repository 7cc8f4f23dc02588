//! Small single-channel plane utilities shared by flow, tracking and background modelling.

use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Plane<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

impl<T: Real> Plane<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), width * height, "plane size");
        Plane {
            width,
            height,
            data,
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Plane::new(width, height, vec![T::zero(); width * height])
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Plane::new(width, height, data)
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    /// Replicate-border access.
    #[inline]
    pub fn clamped(&self, x: isize, y: isize) -> T {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.data[cy * self.width + cx]
    }

    /// Bilinear sample with replicate borders.
    pub fn bilinear(&self, x: T, y: T) -> T {
        let maxx = T::from_usize_lossy(self.width - 1);
        let maxy = T::from_usize_lossy(self.height - 1);
        let x = x.max(T::zero()).min(maxx);
        let y = y.max(T::zero()).min(maxy);
        // non-negative after clamping, so truncation is floor
        let xi = x.to_usize().unwrap_or(0);
        let yi = y.to_usize().unwrap_or(0);
        let fx = x - T::from_usize_lossy(xi);
        let fy = y - T::from_usize_lossy(yi);
        let xj = (xi + 1).min(self.width - 1);
        let yj = (yi + 1).min(self.height - 1);
        let one = T::one();
        let top = self.at(xi, yi) * (one - fx) + self.at(xj, yi) * fx;
        let bot = self.at(xi, yj) * (one - fx) + self.at(xj, yj) * fx;
        top * (one - fy) + bot * fy
    }

    /// Bilinear resize where destination pixel centers map onto source pixel centers.
    pub fn resize(&self, width: usize, height: usize) -> Self {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let sx = T::from_usize_lossy(self.width) / T::from_usize_lossy(width);
        let sy = T::from_usize_lossy(self.height) / T::from_usize_lossy(height);
        let half = T::lit(0.5);
        Plane::from_fn(width, height, |x, y| {
            let fx = (T::from_usize_lossy(x) + half) * sx - half;
            let fy = (T::from_usize_lossy(y) + half) * sy - half;
            self.bilinear(fx, fy)
        })
    }

    /// Separable convolution with a symmetric kernel (replicate borders).
    pub fn convolve_separable(&self, kernel: &[T]) -> Self {
        let r = (kernel.len() / 2) as isize;
        let (w, h) = (self.width, self.height);
        let mut tmp = vec![T::zero(); w * h];
        for y in 0..h {
            for x in 0..w {
                let mut acc = T::zero();
                for (k, &kv) in kernel.iter().enumerate() {
                    acc = acc + kv * self.clamped(x as isize + k as isize - r, y as isize);
                }
                tmp[y * w + x] = acc;
            }
        }
        let tmp = Plane::new(w, h, tmp);
        let mut out = vec![T::zero(); w * h];
        for y in 0..h {
            for x in 0..w {
                let mut acc = T::zero();
                for (k, &kv) in kernel.iter().enumerate() {
                    acc = acc + kv * tmp.clamped(x as isize, y as isize + k as isize - r);
                }
                out[y * w + x] = acc;
            }
        }
        Plane::new(w, h, out)
    }

    /// Mean over a `(2r+1)^2` window with replicate borders (running sums).
    pub fn box_mean(&self, radius: usize) -> Self {
        let (w, h) = (self.width, self.height);
        let norm = T::one() / T::from_usize_lossy(2 * radius + 1);
        let clamp = |i: isize, len: usize| i.clamp(0, len as isize - 1) as usize;
        let r = radius as isize;
        let mut tmp = vec![T::zero(); w * h];
        for (row, dst) in self.data.chunks_exact(w).zip(tmp.chunks_exact_mut(w)) {
            let mut acc = T::zero();
            for k in -r..=r {
                acc = acc + row[clamp(k, w)];
            }
            for (x, d) in dst.iter_mut().enumerate() {
                *d = acc * norm;
                let x = x as isize;
                acc = acc + row[clamp(x + r + 1, w)] - row[clamp(x - r, w)];
            }
        }
        let mut out = vec![T::zero(); w * h];
        let mut acc = vec![T::zero(); w];
        for k in -r..=r {
            let src = &tmp[clamp(k, h) * w..][..w];
            for (a, &v) in acc.iter_mut().zip(src) {
                *a = *a + v;
            }
        }
        for y in 0..h {
            for (o, &a) in out[y * w..(y + 1) * w].iter_mut().zip(&acc) {
                *o = a * norm;
            }
            let yi = y as isize;
            let add = &tmp[clamp(yi + r + 1, h) * w..][..w];
            let sub = &tmp[clamp(yi - r, h) * w..][..w];
            for ((a, &p), &m) in acc.iter_mut().zip(add).zip(sub) {
                *a = *a + p - m;
            }
        }
        Plane::new(w, h, out)
    }

    /// Gaussian blur followed by 2x decimation; output side is `ceil(side / 2)`.
    pub fn pyr_down(&self) -> Self {
        let k: Vec<T> = [1.0, 4.0, 6.0, 4.0, 1.0]
            .iter()
            .map(|&v| T::lit(v / 16.0))
            .collect();
        let blurred = self.convolve_separable(&k);
        let w = self.width.div_ceil(2);
        let h = self.height.div_ceil(2);
        Plane::from_fn(w, h, |x, y| blurred.at(2 * x, 2 * y))
    }
}

/// Normalised 1-D Gaussian kernel of the given radius.
pub fn gaussian_kernel<T: Real>(sigma: f64, radius: usize) -> Vec<T> {
    let vals: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = vals.iter().sum();
    vals.into_iter().map(|v| T::lit(v / s)).collect()
}

/// Median of nine values.
pub fn median9<T: Real>(mut v: [T; 9]) -> T {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    v[4]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_matches_linear_ramp() {
        let p = Plane::<f64>::from_fn(8, 6, |x, y| 2.0 * x as f64 + 3.0 * y as f64);
        assert!((p.bilinear(2.5, 1.25) - (5.0 + 3.75)).abs() < 1e-12);
        assert_eq!(p.bilinear(-4.0, 0.0), 0.0);
    }

    #[test]
    fn pyr_down_halves_size() {
        let p = Plane::<f64>::from_fn(17, 16, |_, _| 0.5);
        let d = p.pyr_down();
        assert_eq!((d.width, d.height), (9, 8));
        assert!(d.data.iter().all(|&v| (v - 0.5).abs() < 1e-12));
    }

    #[test]
    fn box_mean_matches_direct_sum() {
        let p = Plane::<f64>::from_fn(9, 7, |x, y| ((x * 7 + y * 3) % 5) as f64);
        let b = p.box_mean(2);
        for y in 0..7 {
            for x in 0..9 {
                let mut s = 0.0;
                for dy in -2..=2isize {
                    for dx in -2..=2isize {
                        s += p.clamped(x as isize + dx, y as isize + dy);
                    }
                }
                assert!((b.at(x, y) - s / 25.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn median_of_nine() {
        assert_eq!(median9([50.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]), 0.0);
        assert_eq!(median9([9.0, 8.0, 7.0, 6.0, 5.0, 4.0, 3.0, 2.0, 1.0]), 5.0);
    }
}
