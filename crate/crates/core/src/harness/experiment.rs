//! End-to-end runner: per-sequence extraction, fold planning, dictionary
//! and classifier training on the training split only, and evaluation.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::time::Instant;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{DetectionSource, Encoding, ExperimentConfig, SplitMode};
use super::dataset::{read_manifest, trajectories, SequenceEntry};
use super::persist::{model_digest, ModelBundle};
use super::report::{FoldSummary, MetricsReport, SamplePrediction};
use crate::classify::{predict, train_ova, Prediction};
use crate::encode::{
    apply_pca, fit_codebook, fit_gmm, fit_pca, pfm_encode_with, subsequence_windows, Dictionary,
    LowLevelTransform, PcaScope, PcaTarget,
};
use crate::error::{PfmError, Result};
use crate::media::{load_sequence, mirror_sequence, FrameSequence};
use crate::persons::{
    build_tracks, fuse_frame, link_tracks, localize_by_background, parse_transform_params,
    read_detections, tracklet_assignments, BackgroundParams, BoundingBox, BoxKind, PersonTrack,
    TransformParams,
};
use crate::scalar::Real;
use crate::tracklets::{extract_tracklets, DcsDescriptor};

/// Tracklets of the main person track of one (possibly mirrored) recording.
#[derive(Debug, Clone)]
pub struct SequenceFeatures<T> {
    pub subject: String,
    pub trajectory: String,
    pub camera: String,
    pub mirrored: bool,
    /// Longest person track, if any survived filtering.
    pub track: Option<PersonTrack<T>>,
    /// Descriptors of the tracklets assigned to `track`, with the track id.
    pub tracklets: Vec<(DcsDescriptor<T>, usize)>,
}

/// Train/test trajectories of one fold, plus those used for the dictionary.
#[derive(Debug, Clone, PartialEq)]
pub struct Fold {
    pub train: Vec<String>,
    pub test: Vec<String>,
    pub dict: Vec<String>,
}

pub fn plan_folds(cfg: &ExperimentConfig, entries: &[SequenceEntry]) -> Result<Vec<Fold>> {
    let all = trajectories(entries);
    let folds = match &cfg.split {
        SplitMode::Fixed { train, test } => {
            for t in train.iter().chain(test) {
                if !all.contains(t) {
                    return Err(PfmError::Config(format!(
                        "trajectory {t} is not in the dataset"
                    )));
                }
            }
            vec![(train.clone(), test.clone())]
        }
        SplitMode::LeaveOneOut => {
            if all.len() < 2 {
                return Err(PfmError::Config(
                    "leave-one-out needs at least two trajectories".into(),
                ));
            }
            all.iter()
                .map(|t| {
                    (
                        all.iter().filter(|u| *u != t).cloned().collect(),
                        vec![t.clone()],
                    )
                })
                .collect()
        }
    };
    folds
        .into_iter()
        .map(|(train, test): (Vec<String>, Vec<String>)| {
            let dict = cfg.dict_split.clone().unwrap_or_else(|| train.clone());
            if let Some(t) = dict.iter().find(|t| test.contains(t)) {
                return Err(PfmError::Config(format!(
                    "dictionary trajectory {t} is also a test trajectory"
                )));
            }
            Ok(Fold { train, test, dict })
        })
        .collect()
}

fn transform_params<T: Real>(cfg: &ExperimentConfig) -> Result<TransformParams<T>> {
    match &cfg.ub_transform {
        None => Ok(TransformParams::identity()),
        Some(p) => parse_transform_params(&fs::read_to_string(p).map_err(|e| PfmError::io(p, e))?),
    }
}

type FrameBoxes<T> = (Vec<BoundingBox<T>>, Vec<BoundingBox<T>>);

/// Fused person boxes per frame.
fn frame_detections<T: Real>(
    entry: &SequenceEntry,
    seq: &FrameSequence<T>,
    cfg: &ExperimentConfig,
    transform: &TransformParams<T>,
) -> Result<Vec<Vec<BoundingBox<T>>>> {
    let tau = T::lit(cfg.fusion_iou);
    let iou_max = T::lit(cfg.nms_iou);
    match cfg.detections {
        DetectionSource::Background => {
            let found =
                localize_by_background(seq, cfg.background_frames, &BackgroundParams::default())?;
            Ok(found
                .iter()
                .map(|b| fuse_frame(b, &[], transform, tau, iou_max))
                .collect())
        }
        DetectionSource::Files => {
            let path = entry.detections_path();
            if !path.is_file() {
                return Err(PfmError::InvalidInput(format!(
                    "missing detection file {}",
                    path.display()
                )));
            }
            let width = T::from_usize_lossy(seq.dims().map_or(0, |d| d.0));
            // frame -> (full-body, upper-body)
            let mut per_frame: BTreeMap<usize, FrameBoxes<T>> = BTreeMap::new();
            for mut b in read_detections::<T>(&path)? {
                if seq.mirrored {
                    b.cx = width - T::one() - b.cx;
                }
                let slot = per_frame.entry(b.frame).or_default();
                match b.kind {
                    BoxKind::UpperBody => slot.1.push(b),
                    _ => slot.0.push(b),
                }
            }
            Ok(per_frame
                .values()
                .map(|(fb, ub)| fuse_frame(fb, ub, transform, tau, iou_max))
                .collect())
        }
    }
}

/// Tracklets, person tracks and the main track of one loaded sequence.
pub fn sequence_features<T: Real>(
    entry: &SequenceEntry,
    seq: &FrameSequence<T>,
    cfg: &ExperimentConfig,
) -> Result<SequenceFeatures<T>> {
    let transform = transform_params(cfg)?;
    let extracted = extract_tracklets(seq, &cfg.tracklets, &cfg.flow)?;
    let dets = frame_detections(entry, seq, cfg, &transform)?;
    let tracks = build_tracks(&dets, &cfg.track);
    let tracks = link_tracks(tracks, seq, T::lit(cfg.chi2_link));
    let main = tracks
        .iter()
        .max_by(|a, b| a.len().cmp(&b.len()).then(b.track_id.cmp(&a.track_id)))
        .cloned();
    let tracklets = match &main {
        None => Vec::new(),
        Some(m) => tracklet_assignments(&extracted.tracklets, &tracks)
            .into_iter()
            .filter(|&(_, id)| id == m.track_id)
            .map(|(i, id)| (extracted.descriptors[i].clone(), id))
            .collect(),
    };
    Ok(SequenceFeatures {
        subject: entry.subject.clone(),
        trajectory: entry.trajectory.clone(),
        camera: entry.camera.clone(),
        mirrored: seq.mirrored,
        track: main,
        tracklets,
    })
}

/// Features of a recording, followed by those of its mirror image when asked.
pub fn extract_entry<T: Real>(
    entry: &SequenceEntry,
    cfg: &ExperimentConfig,
    with_mirror: bool,
) -> Result<Vec<SequenceFeatures<T>>> {
    let mut seq = load_sequence::<T>(&entry.frames_dir(), &entry.camera)?;
    seq.subject_id = Some(entry.subject.clone());
    seq.trajectory_id = Some(entry.trajectory.clone());
    let mut out = vec![sequence_features(entry, &seq, cfg)?];
    if with_mirror {
        out.push(sequence_features(entry, &mirror_sequence(&seq), cfg)?);
    }
    Ok(out)
}

/// Tracklet subsets of one sequence: the whole track, or one per window.
fn windows<T: Real>(
    f: &SequenceFeatures<T>,
    cfg: &ExperimentConfig,
) -> Vec<Vec<(DcsDescriptor<T>, usize)>> {
    let Some(track) = &f.track else {
        return vec![Vec::new()];
    };
    match cfg.pyramid.subsequence {
        None => vec![f.tracklets.clone()],
        Some((len, overlap)) => {
            subsequence_windows(track.first_frame(), track.last_frame(), len, overlap)
                .into_iter()
                .map(|(s, e)| {
                    f.tracklets
                        .iter()
                        .filter(|(d, _)| d.mid_frame >= s && d.mid_frame <= e)
                        .cloned()
                        .collect()
                })
                .collect()
        }
    }
}

/// Encodes every window of a sequence; windows without tracklets give `None`.
pub fn encode_features<T: Real>(
    f: &SequenceFeatures<T>,
    bundle: &ModelBundle<T>,
    cfg: &ExperimentConfig,
) -> Result<Vec<Option<Vec<T>>>> {
    windows(f, cfg)
        .into_iter()
        .map(|w| {
            let Some(track) = f.track.as_ref().filter(|_| !w.is_empty()) else {
                return Ok(None);
            };
            let v = pfm_encode_with(&w, track, &bundle.dictionary, &bundle.low, &bundle.pyramid)?
                .vector;
            Ok(Some(match &bundle.pca_high {
                Some(p) => apply_pca(&v, p)?,
                None => v,
            }))
        })
        .collect()
}

/// Fits low-level PCA, dictionary, high-level PCA and classifier. Returns the
/// bundle and the number of training samples.
pub fn train_bundle<T: Real>(
    cfg: &ExperimentConfig,
    train: &[&SequenceFeatures<T>],
    dict: &[&SequenceFeatures<T>],
) -> Result<(ModelBundle<T>, usize)> {
    let mask = cfg.features;
    let pool: Vec<&DcsDescriptor<T>> = dict
        .iter()
        .flat_map(|f| f.tracklets.iter().map(|(d, _)| d))
        .collect();
    if pool.is_empty() {
        return Err(PfmError::InvalidInput(
            "no training tracklets for the dictionary".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut picked: Vec<usize> = if pool.len() > cfg.dict_samples {
        sample(&mut rng, pool.len(), cfg.dict_samples).into_vec()
    } else {
        (0..pool.len()).collect()
    };
    picked.sort_unstable();
    let selected: Vec<Vec<T>> = picked.iter().map(|&i| mask.select(pool[i])).collect();
    let pca = match cfg.pcal {
        None => None,
        Some(t @ PcaTarget::Fraction(_)) => {
            let split = mask.split(pool[0].subtype_dims());
            Some(fit_pca(&selected, t, PcaScope::LowLevel, Some(&split))?)
        }
        Some(t) => Some(fit_pca(&selected, t, PcaScope::LowLevel, None)?),
    };
    let low = LowLevelTransform { mask, pca };
    let reduced: Vec<Vec<T>> = match &low.pca {
        Some(p) => selected
            .iter()
            .map(|v| apply_pca(v, p))
            .collect::<Result<_>>()?,
        None => selected,
    };
    let dictionary = match cfg.encoding {
        Encoding::Fisher => Dictionary::Fisher(fit_gmm(&reduced, cfg.gmm_k, cfg.seed)?.model),
        Encoding::Bow => Dictionary::Bow(fit_codebook(&reduced, cfg.gmm_k, cfg.seed)?),
    };
    let mut bundle = ModelBundle {
        config: cfg.to_text(),
        low,
        dictionary,
        pyramid: cfg.pyramid.clone(),
        pca_high: None,
        classifier: Default::default(),
    };
    let encoded: Vec<Vec<Option<Vec<T>>>> = train
        .par_iter()
        .map(|f| encode_features(f, &bundle, cfg))
        .collect::<Result<_>>()?;
    let mut samples: Vec<(Vec<T>, String)> = Vec::new();
    for (f, windows) in train.iter().zip(encoded) {
        samples.extend(
            windows
                .into_iter()
                .flatten()
                .map(|v| (v, f.subject.clone())),
        );
    }
    if let Some(d) = cfg.pcah {
        let vectors: Vec<Vec<T>> = samples.iter().map(|(v, _)| v.clone()).collect();
        let p = fit_pca(&vectors, PcaTarget::Dims(d), PcaScope::HighLevel, None)?;
        for (v, _) in samples.iter_mut() {
            *v = apply_pca(v, &p)?;
        }
        bundle.pca_high = Some(p);
    }
    bundle.classifier = train_ova(&samples, T::lit(cfg.svm_c), cfg.seed)?;
    Ok((bundle, samples.len()))
}

/// Per-window predictions of one sequence.
pub fn predict_features<T: Real>(
    f: &SequenceFeatures<T>,
    bundle: &ModelBundle<T>,
    cfg: &ExperimentConfig,
) -> Result<Vec<Option<Prediction<T>>>> {
    encode_features(f, bundle, cfg)?
        .into_iter()
        .map(|v| v.map(|v| predict(&bundle.classifier, &v)).transpose())
        .collect()
}

fn sample_predictions<T: Real>(
    fold: usize,
    f: &SequenceFeatures<T>,
    preds: Vec<Option<Prediction<T>>>,
) -> Vec<SamplePrediction> {
    preds
        .into_iter()
        .enumerate()
        .map(|(window, p)| SamplePrediction {
            fold,
            subject: f.subject.clone(),
            trajectory: f.trajectory.clone(),
            camera: f.camera.clone(),
            window,
            score: p.as_ref().map(|p| p.scores[p.label_index].to_f64_lossy()),
            predicted: p.map(|p| p.label),
        })
        .collect()
}

fn selected_entries(cfg: &ExperimentConfig) -> Result<Vec<SequenceEntry>> {
    let mut entries = read_manifest(&cfg.dataset)?;
    if let Some(cams) = &cfg.cameras {
        for c in cams {
            if !entries.iter().any(|e| &e.camera == c) {
                return Err(PfmError::Config(format!(
                    "camera {c} is not in the dataset"
                )));
            }
        }
        entries.retain(|e| cams.contains(&e.camera));
    }
    if entries.is_empty() {
        return Err(PfmError::Config("dataset has no sequences".into()));
    }
    Ok(entries)
}

/// Extracts every entry whose trajectory is in `wanted`; entries in
/// `mirrored` also get a mirrored copy.
fn extract_all<T: Real>(
    entries: &[SequenceEntry],
    cfg: &ExperimentConfig,
    wanted: &BTreeSet<String>,
    mirrored: &BTreeSet<String>,
) -> Result<Vec<SequenceFeatures<T>>> {
    let chunks: Vec<Vec<SequenceFeatures<T>>> = entries
        .par_iter()
        .filter(|e| wanted.contains(&e.trajectory))
        .map(|e| extract_entry(e, cfg, cfg.mirror && mirrored.contains(&e.trajectory)))
        .collect::<Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

fn pick<'a, T>(
    features: &'a [SequenceFeatures<T>],
    trajs: &[String],
    with_mirror: bool,
) -> Vec<&'a SequenceFeatures<T>> {
    features
        .iter()
        .filter(|f| trajs.contains(&f.trajectory) && (with_mirror || !f.mirrored))
        .collect()
}

fn labels_of(entries: &[SequenceEntry]) -> Vec<String> {
    entries
        .iter()
        .map(|e| e.subject.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Runs every fold of the configured split and reports test accuracy.
pub fn run_experiment<T: Real>(cfg: &ExperimentConfig) -> Result<MetricsReport> {
    cfg.validate()?;
    let t0 = Instant::now();
    let entries = selected_entries(cfg)?;
    let folds = plan_folds(cfg, &entries)?;
    let training: BTreeSet<String> = folds
        .iter()
        .flat_map(|f| f.train.iter().chain(&f.dict).cloned())
        .collect();
    let mut wanted = training.clone();
    wanted.extend(folds.iter().flat_map(|f| f.test.iter().cloned()));
    let features = extract_all::<T>(&entries, cfg, &wanted, &training)?;
    let t_extract = t0.elapsed().as_secs_f64();

    let mut samples = Vec::new();
    let mut summaries = Vec::new();
    let (mut t_train, mut t_test) = (0.0, 0.0);
    for (i, fold) in folds.iter().enumerate() {
        let t = Instant::now();
        let (bundle, n_train) = train_bundle(
            cfg,
            &pick(&features, &fold.train, true),
            &pick(&features, &fold.dict, true),
        )?;
        t_train += t.elapsed().as_secs_f64();
        let t = Instant::now();
        let test = pick(&features, &fold.test, false);
        let preds: Vec<Vec<Option<Prediction<T>>>> = test
            .par_iter()
            .map(|f| predict_features(f, &bundle, cfg))
            .collect::<Result<_>>()?;
        let before = samples.len();
        for (f, p) in test.iter().zip(preds) {
            samples.extend(sample_predictions(i, f, p));
        }
        t_test += t.elapsed().as_secs_f64();
        summaries.push(FoldSummary {
            test_trajectories: fold.test.clone(),
            train_samples: n_train,
            test_samples: samples.len() - before,
            model_digest: model_digest(&bundle),
        });
    }
    let timings = vec![
        ("extract".to_string(), t_extract),
        ("train".to_string(), t_train),
        ("test".to_string(), t_test),
        ("total".to_string(), t0.elapsed().as_secs_f64()),
    ];
    Ok(MetricsReport::new(
        labels_of(&entries),
        samples,
        summaries,
        cfg.to_text(),
        timings,
    ))
}

/// Trains one model on the configured training trajectories. With a
/// leave-one-out split every trajectory is used.
pub fn train_model<T: Real>(cfg: &ExperimentConfig) -> Result<ModelBundle<T>> {
    cfg.validate()?;
    let entries = selected_entries(cfg)?;
    let train = match &cfg.split {
        SplitMode::Fixed { train, .. } => train.clone(),
        SplitMode::LeaveOneOut => trajectories(&entries),
    };
    let dict = cfg.dict_split.clone().unwrap_or_else(|| train.clone());
    if let SplitMode::Fixed { test, .. } = &cfg.split {
        if let Some(t) = dict.iter().find(|t| test.contains(t)) {
            return Err(PfmError::Config(format!(
                "dictionary trajectory {t} is also a test trajectory"
            )));
        }
    }
    let set: BTreeSet<String> = train.iter().chain(&dict).cloned().collect();
    let features = extract_all::<T>(&entries, cfg, &set, &set)?;
    Ok(train_bundle(
        cfg,
        &pick(&features, &train, true),
        &pick(&features, &dict, true),
    )?
    .0)
}

/// Evaluates a trained model on the configured test trajectories.
pub fn evaluate_model<T: Real>(
    cfg: &ExperimentConfig,
    bundle: &ModelBundle<T>,
) -> Result<MetricsReport> {
    let t0 = Instant::now();
    let entries = selected_entries(cfg)?;
    let SplitMode::Fixed { test, .. } = &cfg.split else {
        return Err(PfmError::Config(
            "evaluating a saved model needs test_trajectories".into(),
        ));
    };
    let set: BTreeSet<String> = test.iter().cloned().collect();
    let features = extract_all::<T>(&entries, cfg, &set, &BTreeSet::new())?;
    let preds: Vec<Vec<Option<Prediction<T>>>> = features
        .par_iter()
        .map(|f| predict_features(f, bundle, cfg))
        .collect::<Result<_>>()?;
    let samples: Vec<SamplePrediction> = features
        .iter()
        .zip(preds)
        .flat_map(|(f, p)| sample_predictions(0, f, p))
        .collect();
    let summary = FoldSummary {
        test_trajectories: test.clone(),
        train_samples: 0,
        test_samples: samples.len(),
        model_digest: model_digest(bundle),
    };
    let labels = labels_of(&entries);
    let timings = vec![("total".to_string(), t0.elapsed().as_secs_f64())];
    Ok(MetricsReport::new(
        labels,
        samples,
        vec![summary],
        cfg.to_text(),
        timings,
    ))
}
