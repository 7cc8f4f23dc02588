//! Synthetic multi-camera gait dataset: a textured articulated walker
//! (torso, head and four swinging limbs) crossing a static textured scene.
//!
//! Layout: `<root>/manifest.txt`, frames in
//! `<root>/<subject>_t<trajectory>/<camera>/<index>.pgm` and ground-truth
//! full-body boxes in `<root>/<subject>_t<trajectory>/<camera>.det`.

use std::f64::consts::{PI, TAU};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dataset::MANIFEST;
use crate::error::{PfmError, Result};
use crate::media::write_pgm_bytes;
use crate::persons::{write_detections, BoundingBox, BoxKind};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub subjects: usize,
    pub cameras: usize,
    pub trajectories: usize,
    pub frames: usize,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    /// Give every subject the gait of the first one.
    pub shared_signature: bool,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            subjects: 10,
            cameras: 4,
            trajectories: 3,
            frames: 36,
            seed: 7,
            width: 112,
            height: 80,
            shared_signature: false,
        }
    }
}

/// Per-subject walking style.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaitSignature {
    /// Stride cycles per frame.
    pub frequency: f64,
    /// Leg swing amplitude (radians).
    pub leg_amplitude: f64,
    /// Arm swing amplitude (radians).
    pub arm_amplitude: f64,
    /// Arm phase lag relative to the opposite leg.
    pub arm_phase: f64,
    /// Vertical hip bob (pixels).
    pub bob: f64,
    /// Forward speed (pixels per frame).
    pub speed: f64,
    /// Forward torso lean (pixels at the shoulders).
    pub lean: f64,
}

/// Per-camera affine view of the walking plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraView {
    pub flip: f64,
    pub scale: f64,
    pub squash: f64,
    pub shear: f64,
    pub ground: f64,
}

impl CameraView {
    /// World (x forward, y down, origin on the ground) to image.
    fn to_image(self, w: (f64, f64), cx: f64) -> (f64, f64) {
        let x = self.flip * self.scale * (w.0 + self.shear * w.1);
        let y = self.scale * self.squash * w.1;
        (cx + x, self.ground + y)
    }

    fn to_world(self, p: (f64, f64), cx: f64) -> (f64, f64) {
        let wy = (p.1 - self.ground) / (self.scale * self.squash);
        let wx = (p.0 - cx) / (self.flip * self.scale) - self.shear * wy;
        (wx, wy)
    }
}

/// Deterministic identity and view parameters of a dataset.
#[derive(Debug, Clone)]
pub struct SynthWorld {
    pub signatures: Vec<GaitSignature>,
    pub views: Vec<CameraView>,
}

fn stratified(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    perm.iter()
        .map(|&p| lo + (hi - lo) * (p as f64 + rng.gen_range(0.25..0.75)) / n as f64)
        .collect()
}

impl SynthWorld {
    pub fn new(p: &SynthParams) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
        let n = p.subjects;
        let freq = stratified(&mut rng, n, 0.045, 0.085);
        let leg = stratified(&mut rng, n, 0.25, 0.6);
        let arm = stratified(&mut rng, n, 0.15, 0.75);
        let arm_phase = stratified(&mut rng, n, -0.9, 0.9);
        let bob = stratified(&mut rng, n, 0.0, 2.5);
        let speed = stratified(&mut rng, n, 0.7, 1.5);
        let lean = stratified(&mut rng, n, -1.0, 4.0);
        let mut signatures: Vec<GaitSignature> = (0..n)
            .map(|s| GaitSignature {
                frequency: freq[s],
                leg_amplitude: leg[s],
                arm_amplitude: arm[s],
                arm_phase: arm_phase[s],
                bob: bob[s],
                speed: speed[s],
                lean: lean[s],
            })
            .collect();
        if p.shared_signature {
            let first = signatures[0];
            signatures.iter_mut().for_each(|s| *s = first);
        }
        let scales = [1.0, 0.92, 1.08, 0.96];
        let views = (0..p.cameras)
            .map(|c| CameraView {
                flip: if c % 2 == 0 { 1.0 } else { -1.0 },
                scale: scales[c % 4] * rng.gen_range(0.97..1.03),
                squash: rng.gen_range(0.94..1.06),
                shear: rng.gen_range(-0.12..0.12),
                ground: p.height as f64 - rng.gen_range(8.0..12.0),
            })
            .collect();
        SynthWorld { signatures, views }
    }
}

struct Part {
    a: (f64, f64),
    b: (f64, f64),
    radius: f64,
    base: f64,
}

impl Part {
    /// Coverage in [0, 1] and textured intensity at world point `q`.
    fn sample(&self, q: (f64, f64)) -> Option<(f64, f64)> {
        let (dx, dy) = (self.b.0 - self.a.0, self.b.1 - self.a.1);
        let len2 = dx * dx + dy * dy;
        let (rx, ry) = (q.0 - self.a.0, q.1 - self.a.1);
        let t = if len2 > 0.0 {
            ((rx * dx + ry * dy) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let (px, py) = (rx - t * dx, ry - t * dy);
        let dist = (px * px + py * py).sqrt();
        let cover = (self.radius - dist + 0.5).clamp(0.0, 1.0);
        if cover <= 0.0 {
            return None;
        }
        // texture in part coordinates so it moves with the limb
        let len = len2.sqrt().max(1e-9);
        let along = (rx * dx + ry * dy) / len;
        let across = (rx * -dy + ry * dx) / len;
        let tex = 0.14 * (1.4 * along).sin() * (1.9 * across + 0.7).cos()
            + 0.06 * (0.9 * along + 2.3 * across).sin();
        Some((cover, (self.base + tex).clamp(0.0, 1.0)))
    }
}

/// Walker pose in world coordinates, back-to-front.
fn pose(sig: &GaitSignature, t: f64, phase0: f64, dir: f64, x0: f64, lift: f64) -> Vec<Part> {
    let ph = TAU * sig.frequency * t + phase0;
    let x = x0 + dir * sig.speed * t;
    let leg_len = 24.0;
    let hip = (x, -leg_len + sig.bob * (2.0 * ph).cos() - lift);
    let shoulder = (hip.0 + dir * sig.lean, hip.1 - 20.0);
    let head = (shoulder.0 + dir * 0.5 * sig.lean, shoulder.1 - 7.5);
    let limb = |from: (f64, f64), ang: f64, len: f64| {
        (from.0 + dir * len * ang.sin(), from.1 + len * ang.cos())
    };
    let leg = sig.leg_amplitude * ph.sin();
    let arm = sig.arm_amplitude * (ph + PI + sig.arm_phase).sin();
    let arm_root = (shoulder.0, shoulder.1 + 2.0);
    vec![
        Part {
            a: arm_root,
            b: limb(arm_root, -arm, 17.0),
            radius: 2.4,
            base: 0.22,
        },
        Part {
            a: hip,
            b: limb(hip, -leg, leg_len),
            radius: 3.2,
            base: 0.3,
        },
        Part {
            a: hip,
            b: shoulder,
            radius: 5.5,
            base: 0.62,
        },
        Part {
            a: head,
            b: head,
            radius: 4.5,
            base: 0.75,
        },
        Part {
            a: hip,
            b: limb(hip, leg, leg_len),
            radius: 3.2,
            base: 0.86,
        },
        Part {
            a: arm_root,
            b: limb(arm_root, arm, 17.0),
            radius: 2.4,
            base: 0.92,
        },
    ]
}

fn background(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let waves: Vec<(f64, f64, f64, f64)> = (0..6)
        .map(|_| {
            let a = rng.gen_range(0.0..PI);
            let f = rng.gen_range(0.15..0.6);
            (
                f * a.cos(),
                f * a.sin(),
                rng.gen_range(0.0..TAU),
                rng.gen_range(0.02..0.05),
            )
        })
        .collect();
    (0..w * h)
        .map(|i| {
            let (x, y) = ((i % w) as f64, (i / w) as f64);
            0.48 + waves
                .iter()
                .map(|&(kx, ky, p, a)| a * (kx * x + ky * y + p).sin())
                .sum::<f64>()
        })
        .collect()
}

/// One rendered sequence: 8-bit frames and ground-truth boxes.
pub struct RenderedSequence {
    pub frames: Vec<Vec<u8>>,
    pub boxes: Vec<BoundingBox<f64>>,
    /// Image-space centres of the four limbs per frame.
    pub limb_centers: Vec<[(f64, f64); 4]>,
}

pub fn render_sequence(
    p: &SynthParams,
    world: &SynthWorld,
    subject: usize,
    camera: usize,
    trajectory: usize,
) -> RenderedSequence {
    let (w, h) = (p.width, p.height);
    let sig = &world.signatures[subject];
    let view = &world.views[camera];
    // nuisance per (subject, trajectory): start phase and height offset
    let mut rng = ChaCha8Rng::seed_from_u64(
        p.seed
            ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(1 + subject as u64 * 131 + trajectory as u64)),
    );
    let phase0 = rng.gen_range(0.0..TAU);
    let lift = rng.gen_range(-2.0..2.0);
    let dir = if trajectory % 2 == 0 { 1.0 } else { -1.0 };
    let x0 = -dir * sig.speed * (p.frames as f64 - 1.0) / 2.0;
    let mut bg_rng = ChaCha8Rng::seed_from_u64(p.seed.wrapping_add(1000 + camera as u64));
    let bg = background(w, h, &mut bg_rng);
    let cx = w as f64 / 2.0;
    let mut frames = Vec::with_capacity(p.frames);
    let mut boxes = Vec::with_capacity(p.frames);
    let mut limb_centers = Vec::with_capacity(p.frames);
    for k in 0..p.frames {
        let parts = pose(sig, k as f64, phase0, dir, x0, lift);
        // image-space extent of the walker
        let (mut x_lo, mut y_lo, mut x_hi, mut y_hi) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        let spread = view.scale * (1.0 + view.shear.abs()).max(view.squash);
        for part in &parts {
            for e in [part.a, part.b] {
                let (ix, iy) = view.to_image(e, cx);
                let r = part.radius * spread;
                x_lo = x_lo.min(ix - r);
                x_hi = x_hi.max(ix + r);
                y_lo = y_lo.min(iy - r);
                y_hi = y_hi.max(iy + r);
            }
        }
        let mut img = bg.clone();
        let xa = (x_lo.floor() - 1.0).max(0.0) as usize;
        let xb = ((x_hi.ceil() + 1.0).max(0.0) as usize).min(w - 1);
        let ya = (y_lo.floor() - 1.0).max(0.0) as usize;
        let yb = ((y_hi.ceil() + 1.0).max(0.0) as usize).min(h - 1);
        for y in ya..=yb {
            for x in xa..=xb {
                let q = view.to_world((x as f64, y as f64), cx);
                let px = &mut img[y * w + x];
                for part in &parts {
                    if let Some((a, v)) = part.sample(q) {
                        *px = *px * (1.0 - a) + v * a;
                    }
                }
            }
        }
        frames.push(
            img.iter()
                .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
                .collect(),
        );
        boxes.push(BoundingBox::new(
            (x_lo + x_hi) / 2.0,
            (y_lo + y_hi) / 2.0,
            x_hi - x_lo + 2.0,
            y_hi - y_lo + 2.0,
            1.0,
            BoxKind::FullBody,
            k,
        ));
        let limb = |i: usize| {
            let part = &parts[i];
            view.to_image(
                ((part.a.0 + part.b.0) / 2.0, (part.a.1 + part.b.1) / 2.0),
                cx,
            )
        };
        limb_centers.push([limb(0), limb(1), limb(4), limb(5)]);
    }
    RenderedSequence {
        frames,
        boxes,
        limb_centers,
    }
}

pub fn subject_id(s: usize) -> String {
    format!("s{:02}", s + 1)
}

pub fn camera_id(c: usize) -> String {
    format!("c{}", c + 1)
}

pub fn trajectory_id(t: usize) -> String {
    format!("{}", t + 1)
}

pub fn sequence_dir(s: usize, t: usize) -> String {
    format!("{}_t{}", subject_id(s), trajectory_id(t))
}

fn validate(p: &SynthParams) -> Result<()> {
    if p.subjects < 2 {
        return Err(PfmError::InvalidInput("need at least 2 subjects".into()));
    }
    if p.cameras == 0 || p.trajectories == 0 {
        return Err(PfmError::InvalidInput(
            "need at least one camera and one trajectory".into(),
        ));
    }
    if p.frames < 30 {
        return Err(PfmError::InvalidInput(format!(
            "need at least 30 frames, got {}",
            p.frames
        )));
    }
    if p.width < 64 || p.height < 64 {
        return Err(PfmError::InvalidInput(
            "frames must be at least 64x64".into(),
        ));
    }
    Ok(())
}

/// Renders every (subject, camera, trajectory) sequence under `root`.
pub fn synth_generate(p: &SynthParams, root: &Path) -> Result<()> {
    validate(p)?;
    let world = SynthWorld::new(p);
    fs::create_dir_all(root).map_err(|e| PfmError::io(root, e))?;
    let mut manifest = String::from("# sequence camera subject trajectory\n");
    for s in 0..p.subjects {
        for t in 0..p.trajectories {
            let seq_dir = root.join(sequence_dir(s, t));
            for c in 0..p.cameras {
                let cam_dir = seq_dir.join(camera_id(c));
                fs::create_dir_all(&cam_dir).map_err(|e| PfmError::io(&cam_dir, e))?;
                let r = render_sequence(p, &world, s, c, t);
                for (k, f) in r.frames.iter().enumerate() {
                    write_pgm_bytes(&cam_dir.join(format!("{k:03}.pgm")), p.width, p.height, f)?;
                }
                write_detections(&seq_dir.join(format!("{}.det", camera_id(c))), &r.boxes)?;
                manifest.push_str(&format!(
                    "{} {} {} {}\n",
                    sequence_dir(s, t),
                    camera_id(c),
                    subject_id(s),
                    trajectory_id(t)
                ));
            }
        }
    }
    let mp = root.join(MANIFEST);
    fs::write(&mp, manifest).map_err(|e| PfmError::io(&mp, e))
}
