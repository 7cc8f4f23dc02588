//! Person localisation: full-body / upper-body detection fusion, NMS,
//! tracking-by-detection with colour-based linking, static-track removal,
//! a background-subtraction fallback, and tracklet filtering.

mod background;
mod io;
mod tracks;

pub use background::{localize_by_background, BackgroundParams};
pub use io::{parse_detections, parse_transform_params, read_detections, write_detections};
pub use tracks::{
    box_color_histogram, build_tracks, chi2_distance, filter_tracklets, link_tracks,
    tracklet_assignments, PersonTrack, TrackParams,
};

use crate::error::{PfmError, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoxKind {
    FullBody,
    UpperBody,
    Fused,
}

/// Axis-aligned box given by its center and size, in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox<T> {
    pub cx: T,
    pub cy: T,
    pub w: T,
    pub h: T,
    pub score: T,
    pub kind: BoxKind,
    pub frame: usize,
}

impl<T: Real> BoundingBox<T> {
    pub fn new(cx: T, cy: T, w: T, h: T, score: T, kind: BoxKind, frame: usize) -> Self {
        BoundingBox {
            cx,
            cy,
            w,
            h,
            score,
            kind,
            frame,
        }
    }

    pub fn area(&self) -> T {
        self.w * self.h
    }

    pub fn left(&self) -> T {
        self.cx - self.w * T::lit(0.5)
    }

    pub fn right(&self) -> T {
        self.cx + self.w * T::lit(0.5)
    }

    pub fn top(&self) -> T {
        self.cy - self.h * T::lit(0.5)
    }

    pub fn bottom(&self) -> T {
        self.cy + self.h * T::lit(0.5)
    }

    pub fn contains(&self, x: T, y: T) -> bool {
        let hw = self.w * T::lit(0.5);
        let hh = self.h * T::lit(0.5);
        (x - self.cx).abs() <= hw && (y - self.cy).abs() <= hh
    }

    pub fn iou(&self, other: &Self) -> T {
        let ix = (self.right().min(other.right()) - self.left().max(other.left())).max(T::zero());
        let iy = (self.bottom().min(other.bottom()) - self.top().max(other.top())).max(T::zero());
        let inter = ix * iy;
        let union = self.area() + other.area() - inter;
        if union > T::zero() {
            inter / union
        } else {
            T::zero()
        }
    }
}

/// Mean relative placement of a full body with respect to its upper body.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformParams<T> {
    pub mu_x: T,
    pub mu_y: T,
    pub mu_w: T,
    pub mu_h: T,
}

impl<T: Real> TransformParams<T> {
    pub fn identity() -> Self {
        TransformParams {
            mu_x: T::zero(),
            mu_y: T::zero(),
            mu_w: T::one(),
            mu_h: T::one(),
        }
    }
}

/// Averages `(x_f - x_u)/h_u`, `(y_f - y_u)/h_u`, `w_f/w_u` and `h_f/h_u` over
/// the given (full-body, upper-body) pairs.
pub fn fit_transform_params<T: Real>(
    pairs: &[(BoundingBox<T>, BoundingBox<T>)],
) -> Result<TransformParams<T>> {
    if pairs.is_empty() {
        return Err(PfmError::InvalidInput("no box pairs to fit".into()));
    }
    let mut acc = [T::zero(); 4];
    for (fb, ub) in pairs {
        if !(ub.w > T::zero() && ub.h > T::zero()) {
            return Err(PfmError::InvalidInput(format!(
                "upper-body box has non-positive size {}x{}",
                ub.w, ub.h
            )));
        }
        acc[0] = acc[0] + (fb.cx - ub.cx) / ub.h;
        acc[1] = acc[1] + (fb.cy - ub.cy) / ub.h;
        acc[2] = acc[2] + fb.w / ub.w;
        acc[3] = acc[3] + fb.h / ub.h;
    }
    let n = T::from_usize_lossy(pairs.len());
    Ok(TransformParams {
        mu_x: acc[0] / n,
        mu_y: acc[1] / n,
        mu_w: acc[2] / n,
        mu_h: acc[3] / n,
    })
}

/// Maps an upper-body box onto the full-body box it predicts. The kind is kept.
pub fn ub_to_fb<T: Real>(ub: &BoundingBox<T>, params: &TransformParams<T>) -> BoundingBox<T> {
    BoundingBox {
        cx: ub.cx + params.mu_x * ub.h,
        cy: ub.cy + params.mu_y * ub.h,
        w: params.mu_w * ub.w,
        h: params.mu_h * ub.h,
        ..*ub
    }
}

/// Min-max rescales scores to `[0, 1]`; equal scores all map to 1.
pub fn scale_scores<T: Real>(boxes: &mut [BoundingBox<T>]) {
    let Some(first) = boxes.first() else { return };
    let (lo, hi) = boxes.iter().fold((first.score, first.score), |(l, h), b| {
        (l.min(b.score), h.max(b.score))
    });
    let range = hi - lo;
    for b in boxes.iter_mut() {
        b.score = if range > T::zero() {
            (b.score - lo) / range
        } else {
            T::one()
        };
    }
}

fn by_score_desc<T: Real>(a: &BoundingBox<T>, b: &BoundingBox<T>) -> std::cmp::Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(std::cmp::Ordering::Equal)
}

/// Fuses full-body and (transformed) upper-body detections of one frame.
/// Scores are expected to be already rescaled per class.
pub fn combine_detections<T: Real>(
    fbs: &[BoundingBox<T>],
    ubs: &[BoundingBox<T>],
    params: &TransformParams<T>,
    tau_c: T,
) -> Vec<BoundingBox<T>> {
    let transformed: Vec<BoundingBox<T>> = ubs.iter().map(|u| ub_to_fb(u, params)).collect();
    let mut used = vec![false; transformed.len()];
    let mut order: Vec<usize> = (0..fbs.len()).collect();
    order.sort_by(|&a, &b| by_score_desc(&fbs[a], &fbs[b]).then(a.cmp(&b)));
    let mut out = Vec::with_capacity(fbs.len() + ubs.len());
    let mut leftover_fb = Vec::new();
    for i in order {
        let fb = &fbs[i];
        let best = transformed
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, u)| (j, fb.iou(u)))
            .fold(None::<(usize, T)>, |acc, (j, v)| match acc {
                Some((_, bv)) if bv >= v => acc,
                _ => Some((j, v)),
            });
        match best {
            Some((j, overlap)) if overlap > tau_c => {
                used[j] = true;
                let ub = &transformed[j];
                let base = if ub.area() > fb.area() { ub } else { fb };
                out.push(BoundingBox {
                    score: fb.score * ub.score * overlap,
                    kind: BoxKind::Fused,
                    ..*base
                });
            }
            _ => leftover_fb.push(*fb),
        }
    }
    out.extend(
        transformed
            .into_iter()
            .zip(used)
            .filter(|(_, u)| !u)
            .map(|(b, _)| b),
    );
    out.extend(leftover_fb);
    out
}

/// Greedy non-maximum suppression: keeps a box iff its IoU with every
/// already kept (higher-scored) box is at most `iou_max`.
pub fn nms<T: Real>(boxes: &[BoundingBox<T>], iou_max: T) -> Vec<BoundingBox<T>> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| by_score_desc(&boxes[a], &boxes[b]).then(a.cmp(&b)));
    let mut kept: Vec<BoundingBox<T>> = Vec::new();
    for i in order {
        let b = boxes[i];
        if kept.iter().all(|k| k.iou(&b) <= iou_max) {
            kept.push(b);
        }
    }
    kept
}

/// Per-frame detection fusion: per-class score rescaling, combination and NMS.
pub fn fuse_frame<T: Real>(
    fbs: &[BoundingBox<T>],
    ubs: &[BoundingBox<T>],
    params: &TransformParams<T>,
    tau_c: T,
    iou_max: T,
) -> Vec<BoundingBox<T>> {
    let mut fbs = fbs.to_vec();
    let mut ubs = ubs.to_vec();
    scale_scores(&mut fbs);
    scale_scores(&mut ubs);
    nms(&combine_detections(&fbs, &ubs, params, tau_c), iou_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bb(cx: f64, cy: f64, w: f64, h: f64, s: f64, kind: BoxKind) -> BoundingBox<f64> {
        BoundingBox::new(cx, cy, w, h, s, kind, 0)
    }

    #[test]
    fn fit_single_pair() {
        let fb = bb(50.0, 100.0, 40.0, 120.0, 1.0, BoxKind::FullBody);
        let ub = bb(50.0, 55.0, 40.0, 40.0, 1.0, BoxKind::UpperBody);
        let p = fit_transform_params(&[(fb, ub)]).unwrap();
        assert_eq!(p.mu_x, 0.0);
        assert_eq!(p.mu_y, 1.125);
        assert_eq!(p.mu_w, 1.0);
        assert_eq!(p.mu_h, 3.0);
        assert_eq!(fit_transform_params(&[(fb, ub), (fb, ub)]).unwrap(), p);
        let t = ub_to_fb(&ub, &p);
        assert_eq!((t.cx, t.cy, t.w, t.h), (50.0, 100.0, 40.0, 120.0));
        assert_eq!(t.kind, BoxKind::UpperBody);
    }

    #[test]
    fn identity_params() {
        let b = bb(10.0, 20.0, 30.0, 40.0, 0.5, BoxKind::UpperBody);
        let p = fit_transform_params(&[(b, b)]).unwrap();
        assert_eq!(p, TransformParams::identity());
        assert_eq!(ub_to_fb(&b, &p), b);
        let p2 = TransformParams {
            mu_h: 2.0,
            ..TransformParams::identity()
        };
        let ub = bb(5.0, 5.0, 10.0, 30.0, 1.0, BoxKind::UpperBody);
        let t = ub_to_fb(&ub, &p2);
        assert_eq!((t.cx, t.cy, t.w, t.h), (5.0, 5.0, 10.0, 60.0));
    }

    #[test]
    fn fit_errors() {
        assert!(fit_transform_params::<f64>(&[]).is_err());
        let fb = bb(0.0, 0.0, 1.0, 1.0, 1.0, BoxKind::FullBody);
        let ub = bb(0.0, 0.0, 0.0, 1.0, 1.0, BoxKind::UpperBody);
        assert!(fit_transform_params(&[(fb, ub)]).is_err());
    }

    #[test]
    fn fusion_of_coincident_boxes() {
        let fb = bb(50.0, 100.0, 40.0, 120.0, 0.8, BoxKind::FullBody);
        let ub = bb(50.0, 55.0, 40.0, 40.0, 0.5, BoxKind::UpperBody);
        let p = TransformParams {
            mu_x: 0.0,
            mu_y: 1.125,
            mu_w: 1.0,
            mu_h: 3.0,
        };
        let out = combine_detections(&[fb], &[ub], &p, 0.5);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].kind, BoxKind::Fused);
        assert!((out[0].score - 0.4).abs() < 1e-12);
    }

    #[test]
    fn disjoint_and_empty_fusion() {
        let fb = bb(20.0, 50.0, 20.0, 60.0, 0.8, BoxKind::FullBody);
        let ub = bb(200.0, 50.0, 20.0, 20.0, 0.5, BoxKind::UpperBody);
        let out = combine_detections(&[fb], &[ub], &TransformParams::identity(), 0.5);
        assert_eq!(out.len(), 2);
        assert!(out.iter().any(|b| b.score == 0.8) && out.iter().any(|b| b.score == 0.5));
        let only = combine_detections(&[fb], &[], &TransformParams::identity(), 0.5);
        assert_eq!(only, vec![fb]);
    }

    #[test]
    fn larger_box_wins_fusion() {
        let fb = bb(50.0, 50.0, 20.0, 60.0, 1.0, BoxKind::FullBody);
        let ub = bb(50.0, 50.0, 22.0, 64.0, 1.0, BoxKind::UpperBody);
        let out = combine_detections(&[fb], &[ub], &TransformParams::identity(), 0.5);
        assert_eq!(out.len(), 1);
        assert_eq!((out[0].w, out[0].h), (22.0, 64.0));
    }

    #[test]
    fn score_scaling() {
        let mut v = vec![
            bb(0.0, 0.0, 1.0, 1.0, -2.0, BoxKind::FullBody),
            bb(0.0, 0.0, 1.0, 1.0, 2.0, BoxKind::FullBody),
            bb(0.0, 0.0, 1.0, 1.0, 0.0, BoxKind::FullBody),
        ];
        scale_scores(&mut v);
        assert_eq!(
            v.iter().map(|b| b.score).collect::<Vec<_>>(),
            vec![0.0, 1.0, 0.5]
        );
        let mut single = vec![bb(0.0, 0.0, 1.0, 1.0, -7.0, BoxKind::UpperBody)];
        scale_scores(&mut single);
        assert_eq!(single[0].score, 1.0);
    }

    #[test]
    fn nms_examples() {
        let a = bb(10.0, 10.0, 10.0, 10.0, 0.9, BoxKind::FullBody);
        let b = BoundingBox { score: 0.7, ..a };
        assert_eq!(nms(&[b, a], 0.3), vec![a]);
        let c = bb(100.0, 10.0, 10.0, 10.0, 0.1, BoxKind::FullBody);
        assert_eq!(nms(&[a, c], 0.3).len(), 2);
    }

    fn arb_box() -> impl Strategy<Value = BoundingBox<f64>> {
        (0.0..100.0, 0.0..100.0, 5.0..40.0, 5.0..40.0, 0.0..1.0)
            .prop_map(|(x, y, w, h, s)| BoundingBox::new(x, y, w, h, s, BoxKind::FullBody, 0))
    }

    proptest! {
        #[test]
        fn nms_invariants(boxes in prop::collection::vec(arb_box(), 1..12), thr in 0.05f64..0.9) {
            let kept = nms(&boxes, thr);
            for (i, a) in kept.iter().enumerate() {
                prop_assert!(boxes.contains(a));
                for b in &kept[i + 1..] {
                    prop_assert!(a.iou(b) <= thr);
                }
            }
            let top = boxes.iter().map(|b| b.score).fold(f64::MIN, f64::max);
            prop_assert!(kept.iter().any(|b| b.score == top));
        }

        #[test]
        fn combine_never_grows(fbs in prop::collection::vec(arb_box(), 0..6), ubs in prop::collection::vec(arb_box(), 0..6)) {
            let ubs: Vec<_> = ubs.into_iter().map(|b| BoundingBox { kind: BoxKind::UpperBody, ..b }).collect();
            let out = combine_detections(&fbs, &ubs, &TransformParams::identity(), 0.5);
            prop_assert!(out.len() <= fbs.len() + ubs.len());
        }

        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let v = a.iou(&b);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert!((v - b.iou(&a)).abs() < 1e-15);
            prop_assert!((a.iou(&a) - 1.0).abs() < 1e-12);
        }
    }
}
