//! Two-frame dense flow by polynomial expansion, estimated coarse to fine.
//!
//! Each pixel neighbourhood is approximated by a quadratic
//! `f(x) ~ x^T A x + b^T x + c` (Gaussian-weighted least squares). A pure
//! translation `d` maps `b1` to `b2 = b1 - 2 A d`, so `d` is recovered from the
//! windowed normal equations `sum(A^T A) d = sum(A^T db)`.

use rayon::prelude::*;

use super::FlowField;
use crate::error::{PfmError, Result};
use crate::imgproc::Plane;
use crate::media::Frame;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct FlowParams {
    /// Number of pyramid levels, including the full-resolution one.
    pub levels: usize,
    /// Half-size of the polynomial expansion window (2 gives 5x5).
    pub poly_radius: usize,
    pub poly_sigma: f64,
    /// Half-size of the box window averaging the normal equations.
    pub window_radius: usize,
    /// Refinement iterations per pyramid level.
    pub iterations: usize,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            levels: 3,
            poly_radius: 2,
            poly_sigma: 1.1,
            window_radius: 6,
            iterations: 3,
        }
    }
}

/// Coefficients of the quadratic model at every pixel.
struct Expansion<T> {
    width: usize,
    height: usize,
    // b_x, b_y, a_xx, a_yy, a_xy (the cross term already halved)
    coeffs: [Vec<T>; 5],
}

/// Rows of `(B^T W B)^-1 B^T W` for the basis `[1, x, y, x^2, y^2, xy]`.
fn expansion_filters(radius: usize, sigma: f64) -> Vec<[f64; 6]> {
    let r = radius as i64;
    let mut basis = Vec::new();
    let mut weights = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            let (x, y) = (dx as f64, dy as f64);
            basis.push([1.0, x, y, x * x, y * y, x * y]);
            weights.push((-(x * x + y * y) / (2.0 * sigma * sigma)).exp());
        }
    }
    let mut g = [[0.0f64; 12]; 6];
    for (b, &w) in basis.iter().zip(&weights) {
        for i in 0..6 {
            for j in 0..6 {
                g[i][j] += w * b[i] * b[j];
            }
        }
    }
    for (i, row) in g.iter_mut().enumerate() {
        row[6 + i] = 1.0;
    }
    // Gauss-Jordan with partial pivoting on the 6x6 Gram matrix
    for col in 0..6 {
        let piv = (col..6)
            .max_by(|&a, &b| g[a][col].abs().partial_cmp(&g[b][col].abs()).unwrap())
            .unwrap();
        g.swap(col, piv);
        let p = g[col][col];
        for v in g[col].iter_mut() {
            *v /= p;
        }
        for row in 0..6 {
            if row != col {
                let f = g[row][col];
                if f != 0.0 {
                    let src = g[col];
                    for (v, s) in g[row].iter_mut().zip(src.iter()) {
                        *v -= f * s;
                    }
                }
            }
        }
    }
    basis
        .iter()
        .zip(&weights)
        .map(|(b, &w)| {
            let mut f = [0.0; 6];
            for (i, fi) in f.iter_mut().enumerate() {
                *fi = (0..6).map(|j| g[i][6 + j] * b[j]).sum::<f64>() * w;
            }
            f
        })
        .collect()
}

fn expand<T: Real>(img: &Plane<T>, radius: usize, filters: &[[f64; 6]]) -> Expansion<T> {
    let (w, h) = (img.width, img.height);
    let r = radius as isize;
    let taps: Vec<[T; 6]> = filters
        .iter()
        .map(|f| {
            let mut t = [T::zero(); 6];
            for i in 0..6 {
                t[i] = T::lit(f[i]);
            }
            t
        })
        .collect();
    let mut coeffs: [Vec<T>; 5] = std::array::from_fn(|_| vec![T::zero(); w * h]);
    let half = T::lit(0.5);
    for y in 0..h {
        for x in 0..w {
            let mut acc = [T::zero(); 6];
            let mut k = 0;
            let interior = x >= radius && y >= radius && x + radius < w && y + radius < h;
            for dy in -r..=r {
                if interior {
                    let row = ((y as isize + dy) as usize) * w + x - radius;
                    for &v in &img.data[row..row + 2 * radius + 1] {
                        let t = &taps[k];
                        for i in 1..6 {
                            acc[i] = acc[i] + t[i] * v;
                        }
                        k += 1;
                    }
                    continue;
                }
                for dx in -r..=r {
                    let v = img.clamped(x as isize + dx, y as isize + dy);
                    let t = &taps[k];
                    for i in 1..6 {
                        acc[i] = acc[i] + t[i] * v;
                    }
                    k += 1;
                }
            }
            let i = y * w + x;
            coeffs[0][i] = acc[1];
            coeffs[1][i] = acc[2];
            coeffs[2][i] = acc[3];
            coeffs[3][i] = acc[4];
            coeffs[4][i] = acc[5] * half;
        }
    }
    Expansion {
        width: w,
        height: h,
        coeffs,
    }
}

impl<T: Real> Expansion<T> {
    /// Bilinear interpolation of all five coefficients at a subpixel position.
    fn sample(&self, x: T, y: T) -> [T; 5] {
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
        let (w00, w10) = ((one - fx) * (one - fy), fx * (one - fy));
        let (w01, w11) = ((one - fx) * fy, fx * fy);
        let (i00, i10) = (yi * self.width + xi, yi * self.width + xj);
        let (i01, i11) = (yj * self.width + xi, yj * self.width + xj);
        std::array::from_fn(|c| {
            let p = &self.coeffs[c];
            p[i00] * w00 + p[i10] * w10 + p[i01] * w01 + p[i11] * w11
        })
    }
}

fn refine<T: Real>(
    e1: &Expansion<T>,
    e2: &Expansion<T>,
    u: &mut Plane<T>,
    v: &mut Plane<T>,
    window_radius: usize,
) {
    let (w, h) = (e1.width, e1.height);
    let n = w * h;
    let half = T::lit(0.5);
    // normal-equation terms: g11, g12, g22, h1, h2
    let mut terms: [Vec<T>; 5] = std::array::from_fn(|_| vec![T::zero(); n]);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let (du, dv) = (u.data[i], v.data[i]);
            let s = e2.sample(T::from_usize_lossy(x) + du, T::from_usize_lossy(y) + dv);
            let a11 = (e1.coeffs[2][i] + s[2]) * half;
            let a22 = (e1.coeffs[3][i] + s[3]) * half;
            let a12 = (e1.coeffs[4][i] + s[4]) * half;
            let db1 = -(s[0] - e1.coeffs[0][i]) * half + a11 * du + a12 * dv;
            let db2 = -(s[1] - e1.coeffs[1][i]) * half + a12 * du + a22 * dv;
            terms[0][i] = a11 * a11 + a12 * a12;
            terms[1][i] = a11 * a12 + a12 * a22;
            terms[2][i] = a12 * a12 + a22 * a22;
            terms[3][i] = a11 * db1 + a12 * db2;
            terms[4][i] = a12 * db1 + a22 * db2;
        }
    }
    let sums: Vec<Plane<T>> = terms
        .into_iter()
        .map(|t| Plane::new(w, h, t).box_mean(window_radius))
        .collect();
    let eps = T::lit(1e-12);
    for i in 0..n {
        let (g11, g12, g22) = (sums[0].data[i], sums[1].data[i], sums[2].data[i]);
        let (h1, h2) = (sums[3].data[i], sums[4].data[i]);
        let det = g11 * g22 - g12 * g12;
        if det.abs() > eps {
            u.data[i] = (g22 * h1 - g12 * h2) / det;
            v.data[i] = (g11 * h2 - g12 * h1) / det;
        } else {
            u.data[i] = T::zero();
            v.data[i] = T::zero();
        }
    }
}

/// Polynomial expansions of one image at every pyramid level, finest first.
/// Reusable across the two frame pairs an image takes part in.
pub struct ExpandedFrame<T> {
    levels: Vec<Expansion<T>>,
}

impl<T: Real> ExpandedFrame<T> {
    pub fn new(plane: &Plane<T>, params: &FlowParams) -> Self {
        let min_side = 2 * params.poly_radius + 4;
        let mut pyr = vec![plane.clone()];
        while pyr.len() < params.levels.max(1) {
            let top = pyr.last().unwrap();
            if top.width.div_ceil(2) < min_side || top.height.div_ceil(2) < min_side {
                break;
            }
            let down = top.pyr_down();
            pyr.push(down);
        }
        let filters = expansion_filters(params.poly_radius, params.poly_sigma);
        ExpandedFrame {
            levels: pyr
                .iter()
                .map(|p| expand(p, params.poly_radius, &filters))
                .collect(),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.levels[0].width, self.levels[0].height)
    }
}

/// Dense flow between two pre-expanded images of equal size.
pub fn flow_between<T: Real>(
    prev: &ExpandedFrame<T>,
    next: &ExpandedFrame<T>,
    params: &FlowParams,
) -> Result<FlowField<T>> {
    if prev.dims() != next.dims() {
        let (a, b) = (prev.dims(), next.dims());
        return Err(PfmError::dims(
            format!("{}x{}", a.0, a.1),
            format!("{}x{}", b.0, b.1),
        ));
    }
    let mut flow: Option<(Plane<T>, Plane<T>)> = None;
    let two = T::lit(2.0);
    let half = T::lit(0.5);
    for level in (0..prev.levels.len()).rev() {
        let (e1, e2) = (&prev.levels[level], &next.levels[level]);
        let (w, h) = (e1.width, e1.height);
        let (mut u, mut v) = match flow.take() {
            None => (Plane::zeros(w, h), Plane::zeros(w, h)),
            Some((cu, cv)) => {
                // coarse pixel x sits at fine coordinate 2x
                let up = |p: &Plane<T>| {
                    Plane::from_fn(w, h, |x, y| {
                        p.bilinear(T::from_usize_lossy(x) * half, T::from_usize_lossy(y) * half)
                            * two
                    })
                };
                (up(&cu), up(&cv))
            }
        };
        for _ in 0..params.iterations.max(1) {
            refine(e1, e2, &mut u, &mut v, params.window_radius);
        }
        flow = Some((u, v));
    }
    let (u, v) = flow.unwrap();
    Ok(FlowField::from_planes(u, v))
}

/// Dense flow between two equally sized planes.
pub fn estimate_flow_planes<T: Real>(
    prev: &Plane<T>,
    next: &Plane<T>,
    params: &FlowParams,
) -> Result<FlowField<T>> {
    if (prev.width, prev.height) != (next.width, next.height) {
        return Err(PfmError::dims(
            format!("{}x{}", prev.width, prev.height),
            format!("{}x{}", next.width, next.height),
        ));
    }
    flow_between(
        &ExpandedFrame::new(prev, params),
        &ExpandedFrame::new(next, params),
        params,
    )
}

/// Flow between every pair of consecutive planes; each plane is expanded once.
pub fn estimate_flow_sequence<T: Real>(
    planes: &[Plane<T>],
    params: &FlowParams,
) -> Result<Vec<FlowField<T>>> {
    let expanded: Vec<ExpandedFrame<T>> = planes
        .par_iter()
        .map(|p| ExpandedFrame::new(p, params))
        .collect();
    (0..expanded.len().saturating_sub(1))
        .into_par_iter()
        .map(|i| flow_between(&expanded[i], &expanded[i + 1], params))
        .collect()
}

/// Dense flow from `prev` to `next` on their luminance planes.
pub fn estimate_flow<T: Real>(
    prev: &Frame<T>,
    next: &Frame<T>,
    params: &FlowParams,
) -> Result<FlowField<T>> {
    if (prev.width, prev.height) != (next.width, next.height) {
        return Err(PfmError::dims(
            format!("{}x{}", prev.width, prev.height),
            format!("{}x{}", next.width, next.height),
        ));
    }
    let p = Plane::new(prev.width, prev.height, prev.gray.clone());
    let n = Plane::new(next.width, next.height, next.gray.clone());
    estimate_flow_planes(&p, &n, params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texture(w: usize, h: usize, seed: u64) -> impl Fn(f64, f64) -> f64 {
        // sum of a few oriented sinusoids: smooth, textured in every direction
        let s = seed as f64;
        move |x: f64, y: f64| {
            let _ = (w, h);
            0.5 + 0.15 * (0.37 * x + 0.11 * y + s).sin()
                + 0.12 * (0.23 * y - 0.29 * x + 2.0 * s).sin()
                + 0.10 * (0.51 * x + 0.47 * y).cos()
                + 0.08 * (0.19 * x * 0.7 - 0.61 * y).sin()
        }
    }

    fn shifted_pair(w: usize, h: usize, dx: f64, dy: f64) -> (Plane<f64>, Plane<f64>) {
        let t = texture(w, h, 3);
        let a = Plane::from_fn(w, h, |x, y| t(x as f64, y as f64));
        let b = Plane::from_fn(w, h, |x, y| t(x as f64 - dx, y as f64 - dy));
        (a, b)
    }

    fn interior_error(f: &FlowField<f64>, dx: f64, dy: f64, margin: usize) -> (f64, f64) {
        let mut worst: f64 = 0.0;
        let mut sum = 0.0;
        let mut n = 0.0;
        for y in margin..f.height - margin {
            for x in margin..f.width - margin {
                let (u, v) = f.at(x, y);
                let e = (u - dx).abs().max((v - dy).abs());
                worst = worst.max(e);
                sum += (u - dx).abs() + (v - dy).abs();
                n += 2.0;
            }
        }
        (worst, sum / n)
    }

    #[test]
    fn filters_reproduce_quadratic() {
        let f = expansion_filters(2, 1.1);
        let img = Plane::from_fn(9, 9, |x, y| {
            let (x, y) = (x as f64 - 4.0, y as f64 - 4.0);
            1.0 + 0.5 * x - 0.25 * y + 0.1 * x * x + 0.2 * y * y + 0.3 * x * y
        });
        let e = expand(&img, 2, &f);
        let i = 4 * 9 + 4;
        let got = [
            e.coeffs[0][i],
            e.coeffs[1][i],
            e.coeffs[2][i],
            e.coeffs[3][i],
            e.coeffs[4][i],
        ];
        let want = [0.5, -0.25, 0.1, 0.2, 0.15];
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-10, "{got:?}");
        }
    }

    #[test]
    fn identical_frames_give_zero_flow() {
        let (a, _) = shifted_pair(64, 48, 0.0, 0.0);
        let f = estimate_flow_planes(&a, &a, &FlowParams::default()).unwrap();
        assert!(f.u.iter().chain(&f.v).all(|x| x.abs() <= 1e-3));
    }

    #[test]
    fn recovers_integer_shifts() {
        for (dx, dy) in [(3.0, 0.0), (-2.0, 1.0)] {
            let (a, b) = shifted_pair(80, 64, dx, dy);
            let f = estimate_flow_planes(&a, &b, &FlowParams::default()).unwrap();
            let (worst, mean) = interior_error(&f, dx, dy, 12);
            assert!(worst < 0.25, "shift ({dx},{dy}): worst {worst}");
            assert!(mean < 0.05, "shift ({dx},{dy}): mean {mean}");
        }
    }

    #[test]
    fn rejects_mismatched_sizes() {
        let a = Plane::<f64>::zeros(20, 20);
        let b = Plane::<f64>::zeros(21, 20);
        assert!(estimate_flow_planes(&a, &b, &FlowParams::default()).is_err());
    }
}
