use std::collections::VecDeque;

use super::{BoundingBox, BoxKind};
use crate::error::{PfmError, Result};
use crate::media::FrameSequence;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundParams {
    pub components: usize,
    pub em_iterations: usize,
    /// Lower bound on each component's standard deviation (intensity units).
    pub min_sigma: f64,
    /// Fraction of mixture weight explained by the background components.
    pub background_ratio: f64,
    /// Match threshold in standard deviations.
    pub match_sigmas: f64,
    /// Foreground blobs smaller than this (pixels) yield no box.
    pub min_area: usize,
    /// Target width / height of the output boxes.
    pub aspect: f64,
}

impl Default for BackgroundParams {
    fn default() -> Self {
        BackgroundParams {
            components: 3,
            em_iterations: 10,
            min_sigma: 4.0 / 255.0,
            background_ratio: 0.6,
            match_sigmas: 2.5,
            min_area: 50,
            aspect: 1.0 / 3.0,
        }
    }
}

struct PixelModel {
    /// (mean, sigma) of the components classified as background.
    background: Vec<(f64, f64)>,
}

fn fit_pixel(values: &mut [f64], p: &BackgroundParams) -> PixelModel {
    let k = p.components.max(1);
    let n = values.len() as f64;
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let min_var = p.min_sigma * p.min_sigma;
    let mean_all = values.iter().sum::<f64>() / n;
    let var_all = values.iter().map(|v| (v - mean_all).powi(2)).sum::<f64>() / n;
    // means spread evenly over the observed range so that a rare mode still
    // gets its own component
    let (lo, hi) = (values[0], values[values.len() - 1]);
    let mut mu: Vec<f64> = (0..k)
        .map(|j| lo + (hi - lo) * (j as f64 + 0.5) / k as f64)
        .collect();
    let mut var = vec![var_all.max(min_var); k];
    let mut w = vec![1.0 / k as f64; k];
    let mut resp = vec![0.0; k];
    for _ in 0..p.em_iterations {
        let mut nk = vec![0.0; k];
        let mut sx = vec![0.0; k];
        let mut sxx = vec![0.0; k];
        for &x in values.iter() {
            let mut tot = 0.0;
            let mut best = f64::NEG_INFINITY;
            for j in 0..k {
                let lp = w[j].ln() - 0.5 * (x - mu[j]).powi(2) / var[j] - 0.5 * var[j].ln();
                resp[j] = lp;
                best = best.max(lp);
            }
            for r in resp.iter_mut() {
                *r = (*r - best).exp();
                tot += *r;
            }
            for j in 0..k {
                let g = resp[j] / tot;
                nk[j] += g;
                sx[j] += g * x;
                sxx[j] += g * x * x;
            }
        }
        for j in 0..k {
            if nk[j] < 1e-9 {
                w[j] = 1e-9;
                continue;
            }
            mu[j] = sx[j] / nk[j];
            var[j] = (sxx[j] / nk[j] - mu[j] * mu[j]).max(min_var);
            w[j] = nk[j] / n;
        }
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= s);
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        let ra = w[a] / var[a].sqrt();
        let rb = w[b] / var[b].sqrt();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    let mut background = Vec::new();
    let mut cum = 0.0;
    for j in order {
        background.push((mu[j], var[j].sqrt()));
        cum += w[j];
        if cum > p.background_ratio {
            break;
        }
    }
    PixelModel { background }
}

/// Largest 8-connected component of a mask as (area, x0, y0, x1, y1), inclusive bounds.
fn largest_component(
    mask: &[bool],
    w: usize,
    h: usize,
) -> Option<(usize, usize, usize, usize, usize)> {
    let mut seen = vec![false; mask.len()];
    let mut best: Option<(usize, usize, usize, usize, usize)> = None;
    let mut queue = VecDeque::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let (mut area, mut x0, mut y0, mut x1, mut y1) = (0, usize::MAX, usize::MAX, 0, 0);
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % w, i / w);
            area += 1;
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if mask[j] && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        if best.is_none_or(|b| area > b.0) {
            best = Some((area, x0, y0, x1, y1));
        }
    }
    best
}

/// Per-pixel mixture background model learnt on the first `n_train` frames;
/// each frame yields at most one box around its largest foreground blob,
/// widened or heightened symmetrically to the configured aspect ratio.
pub fn localize_by_background<T: Real>(
    seq: &FrameSequence<T>,
    n_train: usize,
    params: &BackgroundParams,
) -> Result<Vec<Vec<BoundingBox<T>>>> {
    if n_train == 0 || n_train > seq.len() {
        return Err(PfmError::InvalidInput(format!(
            "background model needs {n_train} training frames, sequence has {}",
            seq.len()
        )));
    }
    let (w, h) = seq.dims().unwrap();
    let models: Vec<PixelModel> = (0..w * h)
        .map(|i| {
            let mut vals: Vec<f64> = seq.frames[..n_train]
                .iter()
                .map(|f| f.gray[i].to_f64_lossy())
                .collect();
            fit_pixel(&mut vals, params)
        })
        .collect();
    let mut out = Vec::with_capacity(seq.len());
    for frame in &seq.frames {
        let mask: Vec<bool> = frame
            .gray
            .iter()
            .zip(&models)
            .map(|(v, m)| {
                let v = v.to_f64_lossy();
                m.background
                    .iter()
                    .all(|&(mu, s)| (v - mu).abs() > params.match_sigmas * s)
            })
            .collect();
        let mut boxes = Vec::new();
        if let Some((area, x0, y0, x1, y1)) = largest_component(&mask, w, h) {
            if area >= params.min_area {
                let cx = (x0 + x1) as f64 / 2.0;
                let cy = (y0 + y1) as f64 / 2.0;
                let mut bw = (x1 - x0 + 1) as f64;
                let mut bh = (y1 - y0 + 1) as f64;
                if bw / bh < params.aspect {
                    bw = bh * params.aspect;
                } else {
                    bh = bw / params.aspect;
                }
                boxes.push(BoundingBox::new(
                    T::lit(cx),
                    T::lit(cy),
                    T::lit(bw),
                    T::lit(bh),
                    T::one(),
                    BoxKind::FullBody,
                    frame.index,
                ));
            }
        }
        out.push(boxes);
    }
    Ok(out)
}
