use std::cmp::Ordering;

use super::BoundingBox;
use crate::media::FrameSequence;
use crate::scalar::Real;
use crate::tracklets::Tracklet;

pub const HIST_BINS: usize = 16;
const CHI2_EPS: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct TrackParams {
    /// Largest frame gap bridged when associating a detection to a track.
    pub max_gap: usize,
    /// A detection joins a track only if IoU with its last box exceeds this.
    pub min_iou: f64,
    /// Tracks shorter than this ...
    pub min_length: usize,
    /// ... whose mean score is also below this are false positives.
    pub min_mean_score: f64,
    /// Tracks whose center never moves more than this fraction of the mean
    /// box width away from its first position are static.
    pub static_ratio: f64,
}

impl Default for TrackParams {
    fn default() -> Self {
        TrackParams {
            max_gap: 5,
            min_iou: 0.3,
            min_length: 10,
            min_mean_score: 0.2,
            static_ratio: 0.5,
        }
    }
}

/// Boxes of one person over time, at most one per frame, ordered by frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PersonTrack<T> {
    pub boxes: Vec<BoundingBox<T>>,
    pub track_id: usize,
    /// 3 x 16 RGB histogram averaged over the boxes; empty until computed
    /// by [`link_tracks`].
    pub mean_color_hist: Vec<T>,
}

impl<T: Real> PersonTrack<T> {
    pub fn first_frame(&self) -> usize {
        self.boxes.first().map_or(0, |b| b.frame)
    }

    pub fn last_frame(&self) -> usize {
        self.boxes.last().map_or(0, |b| b.frame)
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn mean_score(&self) -> T {
        if self.boxes.is_empty() {
            return T::zero();
        }
        self.boxes.iter().map(|b| b.score).sum::<T>() / T::from_usize_lossy(self.boxes.len())
    }

    pub fn box_at(&self, frame: usize) -> Option<&BoundingBox<T>> {
        self.boxes
            .binary_search_by(|b| b.frame.cmp(&frame))
            .ok()
            .map(|i| &self.boxes[i])
    }

    /// Box at `frame`, or the temporally closest one (earlier wins ties).
    pub fn nearest_box(&self, frame: usize) -> Option<&BoundingBox<T>> {
        match self.boxes.binary_search_by(|b| b.frame.cmp(&frame)) {
            Ok(i) => Some(&self.boxes[i]),
            Err(i) => {
                let before = i.checked_sub(1).map(|j| &self.boxes[j]);
                let after = self.boxes.get(i);
                match (before, after) {
                    (Some(b), Some(a)) => {
                        if frame - b.frame <= a.frame - frame {
                            Some(b)
                        } else {
                            Some(a)
                        }
                    }
                    (b, a) => b.or(a),
                }
            }
        }
    }

    fn overlaps_in_time(&self, other: &Self) -> bool {
        self.first_frame() <= other.last_frame() && other.first_frame() <= self.last_frame()
    }

    fn max_center_excursion(&self) -> T {
        let Some(first) = self.boxes.first() else {
            return T::zero();
        };
        self.boxes.iter().fold(T::zero(), |m, b| {
            let (dx, dy) = (b.cx - first.cx, b.cy - first.cy);
            m.max((dx * dx + dy * dy).sqrt())
        })
    }
}

/// Greedy frame-to-frame association of per-frame detections into tracks,
/// followed by false-positive and static-track removal.
pub fn build_tracks<T: Real>(
    detections_per_frame: &[Vec<BoundingBox<T>>],
    params: &TrackParams,
) -> Vec<PersonTrack<T>> {
    let mut tracks: Vec<PersonTrack<T>> = Vec::new();
    let min_iou = T::lit(params.min_iou);
    let mut frames: Vec<&Vec<BoundingBox<T>>> = detections_per_frame
        .iter()
        .filter(|d| !d.is_empty())
        .collect();
    frames.sort_by_key(|d| d[0].frame);
    for dets in frames {
        let frame = dets[0].frame;
        let mut order: Vec<&BoundingBox<T>> = dets.iter().collect();
        order.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap_or(Ordering::Equal));
        let mut taken = vec![false; tracks.len()];
        for det in order {
            let mut best: Option<(usize, T)> = None;
            for (ti, t) in tracks.iter().enumerate() {
                if taken[ti] {
                    continue;
                }
                let last = t.boxes.last().unwrap();
                if last.frame >= frame || frame - last.frame > params.max_gap {
                    continue;
                }
                let v = last.iou(det);
                if v > min_iou && best.is_none_or(|(_, bv)| v > bv) {
                    best = Some((ti, v));
                }
            }
            match best {
                Some((ti, _)) => {
                    tracks[ti].boxes.push(*det);
                    taken[ti] = true;
                }
                None => {
                    let id = tracks.len();
                    tracks.push(PersonTrack {
                        boxes: vec![*det],
                        track_id: id,
                        mean_color_hist: Vec::new(),
                    });
                    taken.push(true);
                }
            }
        }
    }
    let min_score = T::lit(params.min_mean_score);
    let ratio = T::lit(params.static_ratio);
    tracks
        .into_iter()
        .filter(|t| !(t.len() < params.min_length && t.mean_score() < min_score))
        .filter(|t| {
            let mean_w = t.boxes.iter().map(|b| b.w).sum::<T>() / T::from_usize_lossy(t.len());
            t.max_center_excursion() >= ratio * mean_w
        })
        .collect()
}

/// 16-bin-per-channel RGB histogram of the pixels inside `b`, each channel
/// L1-normalised. `None` when the box covers no pixel.
pub fn box_color_histogram<T: Real>(seq: &FrameSequence<T>, b: &BoundingBox<T>) -> Option<Vec<T>> {
    let frame = seq.frames.iter().find(|f| f.index == b.frame)?;
    let clampi = |v: T, hi: usize| v.round().to_f64_lossy().clamp(0.0, hi as f64) as usize;
    let x0 = clampi(b.left(), frame.width);
    let x1 = clampi(b.right(), frame.width);
    let y0 = clampi(b.top(), frame.height);
    let y1 = clampi(b.bottom(), frame.height);
    if x0 >= x1 || y0 >= y1 {
        return None;
    }
    let mut hist = vec![T::zero(); 3 * HIST_BINS];
    let nb = T::from_usize_lossy(HIST_BINS);
    for y in y0..y1 {
        for x in x0..x1 {
            let rgb = frame.rgb_at(x, y);
            for (c, v) in rgb.iter().enumerate() {
                let bin = (*v * nb).floor().to_usize().unwrap_or(0).min(HIST_BINS - 1);
                hist[c * HIST_BINS + bin] = hist[c * HIST_BINS + bin] + T::one();
            }
        }
    }
    let n = T::from_usize_lossy((x1 - x0) * (y1 - y0));
    hist.iter_mut().for_each(|v| *v = *v / n);
    Some(hist)
}

/// Half the chi-squared distance between two histograms, guarded against empty bins.
pub fn chi2_distance<T: Real>(h: &[T], g: &[T]) -> T {
    let eps = T::lit(CHI2_EPS);
    let s = h
        .iter()
        .zip(g)
        .map(|(&a, &b)| (a - b) * (a - b) / (a + b + eps))
        .sum::<T>();
    s * T::lit(0.5)
}

fn mean_hist<T: Real>(seq: &FrameSequence<T>, track: &PersonTrack<T>) -> Vec<T> {
    let hists: Vec<Vec<T>> = track
        .boxes
        .iter()
        .filter_map(|b| box_color_histogram(seq, b))
        .collect();
    let mut mean = vec![T::zero(); 3 * HIST_BINS];
    if hists.is_empty() {
        return mean;
    }
    for h in &hists {
        for (m, v) in mean.iter_mut().zip(h) {
            *m = *m + *v;
        }
    }
    let n = T::from_usize_lossy(hists.len());
    mean.iter_mut().for_each(|v| *v = *v / n);
    mean
}

/// Computes each track's mean colour histogram and merges temporally disjoint
/// tracks closer than `chi2_max`, closest pairs first. Merged tracks keep the
/// id of their earliest member.
pub fn link_tracks<T: Real>(
    tracks: Vec<PersonTrack<T>>,
    seq: &FrameSequence<T>,
    chi2_max: T,
) -> Vec<PersonTrack<T>> {
    let mut groups: Vec<Option<PersonTrack<T>>> = tracks
        .into_iter()
        .map(|mut t| {
            t.mean_color_hist = mean_hist(seq, &t);
            Some(t)
        })
        .collect();
    let mut pairs = Vec::new();
    for i in 0..groups.len() {
        for j in i + 1..groups.len() {
            let (a, b) = (groups[i].as_ref().unwrap(), groups[j].as_ref().unwrap());
            if a.overlaps_in_time(b) {
                continue;
            }
            let d = chi2_distance(&a.mean_color_hist, &b.mean_color_hist);
            if d < chi2_max {
                pairs.push((d, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(Ordering::Equal)
            .then((a.1, a.2).cmp(&(b.1, b.2)))
    });
    // union-find over the original indices; the representative slot holds the merged track
    let mut parent: Vec<usize> = (0..groups.len()).collect();
    fn root(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for (_, i, j) in pairs {
        let (ri, rj) = (root(&mut parent, i), root(&mut parent, j));
        if ri == rj {
            continue;
        }
        let a = groups[ri].as_ref().unwrap();
        let b = groups[rj].as_ref().unwrap();
        let disjoint = a.boxes.iter().all(|x| b.box_at(x.frame).is_none());
        if !disjoint {
            continue;
        }
        let a = groups[ri].take().unwrap();
        let b = groups[rj].take().unwrap();
        let (early, late) = if a.first_frame() <= b.first_frame() {
            (a, b)
        } else {
            (b, a)
        };
        let mut boxes = early.boxes.clone();
        boxes.extend(late.boxes.iter().copied());
        boxes.sort_by_key(|b| b.frame);
        let mut merged = PersonTrack {
            boxes,
            track_id: early.track_id,
            mean_color_hist: Vec::new(),
        };
        merged.mean_color_hist = mean_hist(seq, &merged);
        let rep = ri.min(rj);
        parent[ri] = rep;
        parent[rj] = rep;
        groups[rep] = Some(merged);
    }
    let mut out: Vec<PersonTrack<T>> = groups.into_iter().flatten().collect();
    out.sort_by_key(|t| t.track_id);
    out
}

/// For each tracklet passing through at least one track box, its index and the
/// id of the track holding most of its points (ties: higher mean score, then lower id).
pub fn tracklet_assignments<T: Real>(
    tracklets: &[Tracklet<T>],
    tracks: &[PersonTrack<T>],
) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (ti, t) in tracklets.iter().enumerate() {
        let pts = t.original_points();
        let mut best: Option<(usize, T, usize)> = None;
        for track in tracks {
            let hits = pts
                .iter()
                .enumerate()
                .filter(|(i, p)| {
                    track
                        .box_at(t.start_frame + i)
                        .is_some_and(|b| b.contains(p.0, p.1))
                })
                .count();
            if hits == 0 {
                continue;
            }
            let score = track.mean_score();
            let better = match best {
                None => true,
                Some((h, s, id)) => {
                    hits > h || (hits == h && (score > s || (score == s && track.track_id < id)))
                }
            };
            if better {
                best = Some((hits, score, track.track_id));
            }
        }
        if let Some((_, _, id)) = best {
            out.push((ti, id));
        }
    }
    out
}

/// Tracklets that pass through some person box, paired with their track id.
pub fn filter_tracklets<T: Real>(
    tracklets: &[Tracklet<T>],
    tracks: &[PersonTrack<T>],
) -> Vec<(Tracklet<T>, usize)> {
    tracklet_assignments(tracklets, tracks)
        .into_iter()
        .map(|(i, id)| (tracklets[i].clone(), id))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::BoxKind;
    use super::*;
    use crate::media::Frame;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn det(frame: usize, cx: f64, cy: f64, score: f64) -> BoundingBox<f64> {
        BoundingBox::new(cx, cy, 20.0, 60.0, score, BoxKind::FullBody, frame)
    }

    #[test]
    fn single_moving_detection_is_one_track() {
        let dets: Vec<_> = (0..30)
            .map(|f| vec![det(f, 20.0 + 2.0 * f as f64, 50.0, 0.9)])
            .collect();
        let t = build_tracks(&dets, &TrackParams::default());
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].len(), 30);
    }

    #[test]
    fn two_disjoint_movers_are_two_tracks() {
        let dets: Vec<_> = (0..30)
            .map(|f| {
                vec![
                    det(f, 20.0 + 2.0 * f as f64, 50.0, 0.9),
                    det(f, 200.0 - 2.0 * f as f64, 150.0, 0.8),
                ]
            })
            .collect();
        let t = build_tracks(&dets, &TrackParams::default());
        assert_eq!(t.len(), 2);
        assert!(t.iter().all(|t| t.len() == 30));
    }

    #[test]
    fn static_detection_is_removed() {
        let dets: Vec<_> = (0..30).map(|f| vec![det(f, 50.0, 50.0, 1.0)]).collect();
        assert!(build_tracks(&dets, &TrackParams::default()).is_empty());
    }

    #[test]
    fn short_weak_tracks_are_removed_but_gaps_bridge() {
        let weak: Vec<_> = (0..5)
            .map(|f| vec![det(f, 20.0 + 4.0 * f as f64, 50.0, 0.1)])
            .collect();
        assert!(build_tracks(&weak, &TrackParams::default()).is_empty());
        let gappy: Vec<_> = (0..30)
            .filter(|f| f % 4 != 1)
            .map(|f| vec![det(f, 20.0 + f as f64, 50.0, 0.9)])
            .collect();
        assert_eq!(build_tracks(&gappy, &TrackParams::default()).len(), 1);
    }

    fn constant_seq(n: usize, rgb_at: impl Fn(usize, usize) -> [f64; 3]) -> FrameSequence<f64> {
        let frames = (0..n)
            .map(|k| {
                let mut rgb = Vec::with_capacity(3 * 64 * 64);
                for y in 0..64 {
                    for x in 0..64 {
                        rgb.extend(rgb_at(x, y));
                    }
                }
                Frame::from_rgb(64, 64, rgb, k).unwrap()
            })
            .collect();
        FrameSequence::new(frames, "c").unwrap()
    }

    fn track(id: usize, frames: std::ops::Range<usize>, cx: f64) -> PersonTrack<f64> {
        PersonTrack {
            boxes: frames
                .map(|f| BoundingBox::new(cx, 30.0, 10.0, 20.0, 1.0, BoxKind::FullBody, f))
                .collect(),
            track_id: id,
            mean_color_hist: Vec::new(),
        }
    }

    #[test]
    fn fragments_of_same_color_merge() {
        let seq = constant_seq(20, |_, _| [0.2, 0.6, 0.9]);
        let out = link_tracks(
            vec![track(0, 0..8, 20.0), track(1, 10..20, 40.0)],
            &seq,
            0.25,
        );
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].track_id, 0);
        assert_eq!(out[0].len(), 18);
        for c in 0..3 {
            let s: f64 = out[0].mean_color_hist[c * 16..(c + 1) * 16].iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn overlapping_tracks_never_merge() {
        let seq = constant_seq(20, |_, _| [0.5, 0.5, 0.5]);
        let out = link_tracks(
            vec![track(0, 0..12, 20.0), track(1, 10..20, 40.0)],
            &seq,
            10.0,
        );
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn red_and_blue_do_not_merge() {
        let seq = constant_seq(20, |x, _| {
            if x < 32 {
                [0.9, 0.1, 0.1]
            } else {
                [0.1, 0.1, 0.9]
            }
        });
        let out = link_tracks(
            vec![track(0, 0..8, 12.0), track(1, 10..20, 50.0)],
            &seq,
            0.5,
        );
        assert_eq!(out.len(), 2);
        // bin-by-bin oracle
        let (h, g) = (&out[0].mean_color_hist, &out[1].mean_color_hist);
        let mut want = 0.0;
        for i in 0..48 {
            let (a, b) = (h[i], g[i]);
            if a + b > 0.0 {
                want += (a - b).powi(2) / (a + b + 1e-10);
            }
        }
        want *= 0.5;
        let got = chi2_distance(h, g);
        assert!((got - want).abs() < 1e-12);
        assert!((got - 2.0).abs() < 1e-6, "{got}");
    }

    #[test]
    fn chi2_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let h: Vec<f64> = (0..48).map(|_| rng.gen::<f64>()).collect();
            let g: Vec<f64> = (0..48).map(|_| rng.gen::<f64>()).collect();
            let d = chi2_distance(&h, &g);
            assert!(d > 0.0);
            assert_eq!(d, chi2_distance(&g, &h));
            assert_eq!(chi2_distance(&h, &h), 0.0);
        }
    }

    fn tracklet(start: usize, pts: Vec<(f64, f64)>) -> Tracklet<f64> {
        Tracklet {
            points: pts,
            start_frame: start,
            scale_level: 0,
            zoom: (1.0, 1.0),
        }
    }

    #[test]
    fn filtering_basic() {
        let t = track(3, 0..20, 30.0);
        let inside = tracklet(2, (0..16).map(|i| (28.0 + 0.1 * i as f64, 30.0)).collect());
        let outside = tracklet(2, (0..16).map(|i| (5.0 + 0.1 * i as f64, 5.0)).collect());
        let kept = filter_tracklets(&[inside.clone(), outside], &[t]);
        assert_eq!(kept, vec![(inside, 3)]);
    }

    #[test]
    fn filtering_matches_brute_force_and_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let tracks = vec![
            PersonTrack {
                boxes: (0..40)
                    .map(|f| {
                        BoundingBox::new(
                            20.0 + f as f64,
                            40.0,
                            16.0,
                            40.0,
                            0.9,
                            BoxKind::FullBody,
                            f,
                        )
                    })
                    .collect(),
                track_id: 0,
                mean_color_hist: Vec::new(),
            },
            PersonTrack {
                boxes: (10..40)
                    .map(|f| {
                        BoundingBox::new(
                            80.0 - f as f64,
                            50.0,
                            16.0,
                            40.0,
                            0.5,
                            BoxKind::FullBody,
                            f,
                        )
                    })
                    .collect(),
                track_id: 1,
                mean_color_hist: Vec::new(),
            },
        ];
        let tls: Vec<_> = (0..100)
            .map(|_| {
                let start = rng.gen_range(0..24);
                let (mut x, mut y) = (rng.gen_range(0.0..100.0), rng.gen_range(0.0..80.0));
                let mut pts = vec![(x, y)];
                for _ in 0..15 {
                    x += rng.gen_range(-2.0..2.0);
                    y += rng.gen_range(-2.0..2.0);
                    pts.push((x, y));
                }
                tracklet(start, pts)
            })
            .collect();
        let kept = filter_tracklets(&tls, &tracks);
        let oracle: Vec<usize> = (0..tls.len())
            .filter(|&i| {
                tls[i].points.iter().enumerate().any(|(k, p)| {
                    let f = tls[i].start_frame + k;
                    tracks.iter().any(|t| {
                        t.boxes.iter().any(|b| {
                            b.frame == f
                                && p.0 >= b.cx - b.w / 2.0
                                && p.0 <= b.cx + b.w / 2.0
                                && p.1 >= b.cy - b.h / 2.0
                                && p.1 <= b.cy + b.h / 2.0
                        })
                    })
                })
            })
            .collect();
        let got: Vec<usize> = tracklet_assignments(&tls, &tracks)
            .iter()
            .map(|p| p.0)
            .collect();
        assert_eq!(got, oracle);
        assert!(!got.is_empty() && got.len() < 100);
        let again: Vec<_> = kept.iter().map(|(t, _)| t.clone()).collect();
        let twice = filter_tracklets(&again, &tracks);
        assert_eq!(twice, kept);
    }
}
