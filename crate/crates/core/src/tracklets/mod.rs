//! Dense point seeding over a scale pyramid, median-filtered flow tracking
//! of fixed-length tracklets, pruning, and the kinematic tracklet descriptor.

mod dcs;

pub use dcs::{
    dcs_descriptor, dcs_descriptor_from_maps, CoordsMode, DcsDescriptor, DcsLayout, OrientedPairs,
};

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{PfmError, Result};
use crate::flow::{estimate_flow_sequence, kinematic_maps, FlowField, FlowParams};
use crate::imgproc::{median9, Plane};
use crate::media::{FrameSequence, MIN_FRAME_SIDE};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct TrackletParams {
    /// Tracking length L; every tracklet has L + 1 points.
    pub length: usize,
    /// Grid step W in pixels.
    pub grid_step: usize,
    pub n_scales: usize,
    /// Per-level scale factor of the sampling pyramid.
    pub scale_factor: f64,
    /// Any single step at or above this length (pixels) drops the trajectory.
    pub max_step: f64,
    /// Trajectories whose path length is below this (pixels) are dropped.
    pub min_total: f64,
    /// Homogeneous-region rejection relative to the frame's largest min-eigenvalue.
    pub eig_ratio: f64,
    pub layout: DcsLayout,
    pub coords_mode: CoordsMode,
}

impl Default for TrackletParams {
    fn default() -> Self {
        TrackletParams {
            length: 15,
            grid_step: 5,
            n_scales: 8,
            scale_factor: std::f64::consts::FRAC_1_SQRT_2,
            max_step: 20.0,
            min_total: 1.0,
            eig_ratio: 0.001,
            layout: DcsLayout::default(),
            coords_mode: CoordsMode::Displacement,
        }
    }
}

impl TrackletParams {
    pub fn descriptor_dim(&self) -> usize {
        2 * self.length + 3 * self.layout.block_dim()
    }
}

/// A point trajectory of `length + 1` positions in the coordinates of its
/// sampling scale. Point `i` lies in frame `start_frame + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tracklet<T> {
    pub points: Vec<(T, T)>,
    pub start_frame: usize,
    pub scale_level: usize,
    /// Ratio original/scaled pixel size along x and y.
    pub zoom: (T, T),
}

impl<T: Real> Tracklet<T> {
    /// Maps a scale-level position to full-resolution pixel coordinates.
    pub fn to_original(&self, p: (T, T)) -> (T, T) {
        let half = T::lit(0.5);
        (
            (p.0 + half) * self.zoom.0 - half,
            (p.1 + half) * self.zoom.1 - half,
        )
    }

    pub fn original_points(&self) -> Vec<(T, T)> {
        self.points.iter().map(|&p| self.to_original(p)).collect()
    }

    pub fn len(&self) -> usize {
        self.points.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.points.len() <= 1
    }

    pub fn steps(&self) -> impl Iterator<Item = (T, T)> + '_ {
        self.points
            .windows(2)
            .map(|w| (w[1].0 - w[0].0, w[1].1 - w[0].1))
    }

    pub fn path_length(&self) -> T {
        self.steps()
            .map(|(dx, dy)| (dx * dx + dy * dy).sqrt())
            .sum()
    }

    pub fn mid_frame(&self) -> usize {
        self.start_frame + self.len() / 2
    }
}

/// Smallest eigenvalue of the 3x3-summed gradient structure tensor at every pixel.
pub fn min_eigen_map<T: Real>(img: &Plane<T>) -> Plane<T> {
    let (w, h) = (img.width, img.height);
    let half = T::lit(0.5);
    let gx = Plane::from_fn(w, h, |x, y| {
        (img.clamped(x as isize + 1, y as isize) - img.clamped(x as isize - 1, y as isize)) * half
    });
    let gy = Plane::from_fn(w, h, |x, y| {
        (img.clamped(x as isize, y as isize + 1) - img.clamped(x as isize, y as isize - 1)) * half
    });
    let mut out = Plane::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let (mut a, mut b, mut c) = (T::zero(), T::zero(), T::zero());
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    let (xx, yy) = (x as isize + dx, y as isize + dy);
                    let ix = gx.clamped(xx, yy);
                    let iy = gy.clamped(xx, yy);
                    a = a + ix * ix;
                    b = b + ix * iy;
                    c = c + iy * iy;
                }
            }
            let m = (a + c) * half;
            let d = (a - c) * half;
            out.data[y * w + x] = m - (d * d + b * b).sqrt();
        }
    }
    out
}

/// Grid positions at one scale: `(W/2 + i W, W/2 + j W)`, skipping positions
/// within `W/2` of an occupied point and positions whose min-eigenvalue does not
/// exceed `eig_ratio` times the frame maximum.
pub fn seed_points<T: Real>(
    img: &Plane<T>,
    occupied: &[(T, T)],
    grid_step: usize,
    eig_ratio: f64,
) -> Vec<(T, T)> {
    let eig = min_eigen_map(img);
    let max = eig.data.iter().fold(T::zero(), |m, &v| m.max(v));
    if max <= T::zero() {
        return Vec::new();
    }
    let thr = max * T::lit(eig_ratio);
    let step = grid_step.max(1);
    let radius = T::lit(step as f64 / 2.0);
    let r2 = radius * radius;
    // bucket occupied points by grid cell for the proximity test
    let cols = img.width.div_ceil(step) + 1;
    let rows = img.height.div_ceil(step) + 1;
    let mut buckets: Vec<Vec<(T, T)>> = vec![Vec::new(); cols * rows];
    for &(px, py) in occupied {
        let cx = (px.to_f64_lossy() / step as f64).floor();
        let cy = (py.to_f64_lossy() / step as f64).floor();
        if cx >= 0.0 && cy >= 0.0 && (cx as usize) < cols && (cy as usize) < rows {
            buckets[cy as usize * cols + cx as usize].push((px, py));
        }
    }
    let mut out = Vec::new();
    let mut y = step / 2;
    while y < img.height {
        let mut x = step / 2;
        while x < img.width {
            let (fx, fy) = (T::from_usize_lossy(x), T::from_usize_lossy(y));
            let (cx, cy) = (x / step, y / step);
            let mut taken = false;
            'search: for by in cy.saturating_sub(1)..=(cy + 1).min(rows - 1) {
                for bx in cx.saturating_sub(1)..=(cx + 1).min(cols - 1) {
                    for &(px, py) in &buckets[by * cols + bx] {
                        let (dx, dy) = (px - fx, py - fy);
                        if dx * dx + dy * dy < r2 {
                            taken = true;
                            break 'search;
                        }
                    }
                }
            }
            if !taken && eig.at(x, y) > thr {
                out.push((fx, fy));
            }
            x += step;
        }
        y += step;
    }
    out
}

/// Advances `p` by the 3x3 median of each flow component at the rounded position.
pub fn track_point<T: Real>(p: (T, T), flow: &FlowField<T>) -> Result<(T, T)> {
    let (w, h) = (flow.width as isize, flow.height as isize);
    let rx = p.0.round().to_isize().ok_or(PfmError::OutOfBounds)?;
    let ry = p.1.round().to_isize().ok_or(PfmError::OutOfBounds)?;
    if rx < 0 || ry < 0 || rx >= w || ry >= h {
        return Err(PfmError::OutOfBounds);
    }
    let mut us = [T::zero(); 9];
    let mut vs = [T::zero(); 9];
    let mut k = 0;
    for dy in -1..=1isize {
        for dx in -1..=1isize {
            let x = (rx + dx).clamp(0, w - 1) as usize;
            let y = (ry + dy).clamp(0, h - 1) as usize;
            let (u, v) = flow.at(x, y);
            us[k] = u;
            vs[k] = v;
            k += 1;
        }
    }
    let next = (p.0 + median9(us), p.1 + median9(vs));
    let maxx = T::from_usize_lossy(flow.width - 1);
    let maxy = T::from_usize_lossy(flow.height - 1);
    if !(next.0 >= T::zero() && next.1 >= T::zero() && next.0 <= maxx && next.1 <= maxy) {
        return Err(PfmError::OutOfBounds);
    }
    Ok(next)
}

/// Tracks densely seeded points through one scale of a sequence.
///
/// `frames[k]` and `flows[k]` (from frame k to k+1) are at the same scale;
/// `first_frame` is the frame index of `frames[0]`.
pub fn track_scale<T: Real>(
    frames: &[Plane<T>],
    flows: &[FlowField<T>],
    first_frame: usize,
    scale_level: usize,
    zoom: (T, T),
    params: &TrackletParams,
) -> Vec<Tracklet<T>> {
    let len = params.length;
    let max_step = T::lit(params.max_step);
    let min_total = T::lit(params.min_total);
    let mut active: Vec<(usize, Vec<(T, T)>)> = Vec::new();
    let mut done = Vec::new();
    for (k, flow) in flows
        .iter()
        .enumerate()
        .take(frames.len().saturating_sub(1))
    {
        if k + len <= flows.len() {
            let occupied: Vec<(T, T)> =
                active.iter().map(|(_, pts)| *pts.last().unwrap()).collect();
            for p in seed_points(&frames[k], &occupied, params.grid_step, params.eig_ratio) {
                active.push((k, vec![p]));
            }
        }
        let mut still = Vec::with_capacity(active.len());
        for (start, mut pts) in active.drain(..) {
            let last = *pts.last().unwrap();
            let Ok(next) = track_point(last, flow) else {
                continue;
            };
            let (dx, dy) = (next.0 - last.0, next.1 - last.1);
            if (dx * dx + dy * dy).sqrt() >= max_step {
                continue;
            }
            pts.push(next);
            if pts.len() == len + 1 {
                let t = Tracklet {
                    points: pts,
                    start_frame: first_frame + start,
                    scale_level,
                    zoom,
                };
                if t.path_length() >= min_total {
                    done.push(t);
                }
            } else {
                still.push((start, pts));
            }
        }
        active = still;
    }
    done
}

/// Keeps only tracklets satisfying the length and pruning thresholds.
pub fn prune_tracklets<T: Real>(
    tracklets: Vec<Tracklet<T>>,
    params: &TrackletParams,
) -> Vec<Tracklet<T>> {
    let max_step = T::lit(params.max_step);
    let min_total = T::lit(params.min_total);
    tracklets
        .into_iter()
        .filter(|t| {
            t.points.len() == params.length + 1
                && t.steps()
                    .all(|(dx, dy)| (dx * dx + dy * dy).sqrt() < max_step)
                && t.path_length() >= min_total
        })
        .collect()
}

/// Single-scale tracklets over a sequence given precomputed flows between
/// consecutive frames.
pub fn build_tracklets<T: Real>(
    seq: &FrameSequence<T>,
    flows: &[FlowField<T>],
    params: &TrackletParams,
) -> Result<Vec<Tracklet<T>>> {
    if seq.len() < 2 {
        return Ok(Vec::new());
    }
    if flows.len() + 1 != seq.len() {
        return Err(PfmError::dims(seq.len() - 1, flows.len()));
    }
    let planes: Vec<Plane<T>> = seq
        .frames
        .iter()
        .map(|f| Plane::new(f.width, f.height, f.gray.clone()))
        .collect();
    let first = seq.frames[0].index;
    Ok(track_scale(
        &planes,
        flows,
        first,
        0,
        (T::one(), T::one()),
        params,
    ))
}

/// Tracklets and descriptors for every scale of a sequence.
#[derive(Debug, Clone)]
pub struct SequenceTracklets<T> {
    pub tracklets: Vec<Tracklet<T>>,
    pub descriptors: Vec<DcsDescriptor<T>>,
}

/// Full extraction: scale pyramid, flow per scale, tracking, pruning and
/// descriptor computation. Frames must have contiguous indices.
pub fn extract_tracklets<T: Real>(
    seq: &FrameSequence<T>,
    params: &TrackletParams,
    flow_params: &FlowParams,
) -> Result<SequenceTracklets<T>> {
    let mut tracklets = Vec::new();
    let mut descriptors = Vec::new();
    let Some((w0, h0)) = seq.dims() else {
        return Ok(SequenceTracklets {
            tracklets,
            descriptors,
        });
    };
    if seq.len() <= params.length {
        return Ok(SequenceTracklets {
            tracklets,
            descriptors,
        });
    }
    let first = seq.frames[0].index;
    let mut planes: Vec<Plane<T>> = seq
        .frames
        .iter()
        .map(|f| Plane::new(f.width, f.height, f.gray.clone()))
        .collect();
    let mut factor = 1.0;
    for level in 0..params.n_scales.max(1) {
        if level > 0 {
            factor *= params.scale_factor;
            let w = (w0 as f64 * factor).round() as usize;
            let h = (h0 as f64 * factor).round() as usize;
            if w < MIN_FRAME_SIDE || h < MIN_FRAME_SIDE {
                break;
            }
            planes = planes.iter().map(|p| p.resize(w, h)).collect();
        }
        let (w, h) = (planes[0].width, planes[0].height);
        let zoom = (
            T::from_usize_lossy(w0) / T::from_usize_lossy(w),
            T::from_usize_lossy(h0) / T::from_usize_lossy(h),
        );
        let flows = estimate_flow_sequence(&planes, flow_params)?;
        let found = track_scale(&planes, &flows, first, level, zoom, params);
        if found.is_empty() {
            continue;
        }
        let fields: Vec<OrientedPairs<T>> = flows
            .par_iter()
            .map(|f| OrientedPairs::from_maps(&kinematic_maps(f), params.layout.bins))
            .collect();
        let described: Vec<_> = found
            .into_par_iter()
            .filter_map(|t| {
                let s = t.start_frame - first;
                dcs_descriptor(&t, &fields[s..s + params.length], params)
                    .ok()
                    .map(|d| (t, d))
            })
            .collect();
        for (t, d) in described {
            tracklets.push(t);
            descriptors.push(d);
        }
    }
    Ok(SequenceTracklets {
        tracklets,
        descriptors,
    })
}

/// One dump line: `start_frame scale x0 y0 ... xL yL` followed by the descriptor.
/// Positions are full-resolution pixel coordinates.
pub fn format_tracklet_line<T: Real>(t: &Tracklet<T>, d: &DcsDescriptor<T>) -> String {
    let mut s = format!("{} {}", t.start_frame, t.scale_level);
    for (x, y) in t.original_points() {
        write!(s, " {x} {y}").unwrap();
    }
    for v in &d.full {
        write!(s, " {v}").unwrap();
    }
    s
}
