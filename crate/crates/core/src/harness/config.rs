//! Flat `key = value` experiment configuration. `#` starts a comment.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::encode::{PcaTarget, PyramidConfig, SubtypeMask};
use crate::error::{PfmError, Result};
use crate::flow::FlowParams;
use crate::persons::TrackParams;
use crate::tracklets::TrackletParams;

#[derive(Debug, Clone, PartialEq)]
pub enum SplitMode {
    /// Train and test on the listed trajectory ids.
    Fixed {
        train: Vec<String>,
        test: Vec<String>,
    },
    /// One fold per trajectory id: test on it, train on the rest.
    LeaveOneOut,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectionSource {
    /// `<sequence>/<camera>.det` files.
    Files,
    /// Per-pixel background model learnt on the first frames.
    Background,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    Fisher,
    Bow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    pub split: SplitMode,
    /// Restrict to these cameras; `None` uses every camera in the manifest.
    pub cameras: Option<Vec<String>>,
    pub features: SubtypeMask,
    pub encoding: Encoding,
    /// Mixture components (or codebook size for bag-of-words).
    pub gmm_k: usize,
    pub pcal: Option<PcaTarget>,
    pub pcah: Option<usize>,
    pub pyramid: PyramidConfig,
    pub svm_c: f64,
    pub seed: u64,
    pub detections: DetectionSource,
    pub background_frames: usize,
    /// Add horizontally mirrored copies of the training sequences.
    pub mirror: bool,
    pub tracklets: TrackletParams,
    pub flow: FlowParams,
    /// Upper bound on descriptors drawn for dictionary and PCA fitting.
    pub dict_samples: usize,
    /// Trajectories used for dictionary fitting instead of the training ones.
    pub dict_split: Option<Vec<String>>,
    pub fusion_iou: f64,
    pub nms_iou: f64,
    pub chi2_link: f64,
    pub track: TrackParams,
    /// Four reals mapping upper-body boxes to full-body boxes.
    pub ub_transform: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(dataset: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            dataset: dataset.into(),
            split: SplitMode::LeaveOneOut,
            cameras: None,
            features: SubtypeMask::default(),
            encoding: Encoding::Fisher,
            gmm_k: 16,
            pcal: None,
            pcah: None,
            pyramid: PyramidConfig::default(),
            svm_c: 1.0,
            seed: 0,
            detections: DetectionSource::Files,
            background_frames: 20,
            mirror: true,
            tracklets: TrackletParams::default(),
            flow: FlowParams::default(),
            dict_samples: 20_000,
            dict_split: None,
            fusion_iou: 0.5,
            nms_iou: 0.4,
            chi2_link: 0.25,
            track: TrackParams::default(),
            ub_transform: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| PfmError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses config text; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = ExperimentConfig::new(PathBuf::new());
        let mut have_dataset = false;
        let (mut train, mut test): (Option<Vec<String>>, Option<Vec<String>>) = (None, None);
        let mut split_kind: Option<String> = None;
        let mut subseq_len = 0usize;
        let mut subseq_overlap = 0usize;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| {
                PfmError::Config(format!("line {line_no}: expected `key = value`"))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad =
                |what: &str| PfmError::Config(format!("line {line_no}: {key}: {what} {value:?}"));
            let num = |v: &str| v.parse::<f64>().map_err(|_| bad("not a number"));
            let int = |v: &str| {
                v.parse::<usize>()
                    .map_err(|_| bad("not a non-negative integer"))
            };
            match key {
                "dataset" => {
                    cfg.dataset = resolve(base, value);
                    have_dataset = true;
                }
                "split" => split_kind = Some(value.to_string()),
                "train_trajectories" => train = Some(list(value)),
                "test_trajectories" => test = Some(list(value)),
                "cameras" => {
                    cfg.cameras = if value == "all" {
                        None
                    } else {
                        Some(list(value))
                    }
                }
                "features" => cfg.features = SubtypeMask::parse(value)?,
                "encoding" => {
                    cfg.encoding = match value {
                        "fv" | "fisher" => Encoding::Fisher,
                        "bow" => Encoding::Bow,
                        _ => return Err(bad("expected fv or bow")),
                    }
                }
                "gmm_k" => cfg.gmm_k = int(value)?,
                "pcal" => cfg.pcal = parse_pca_target(value)?,
                "pcah" => {
                    cfg.pcah = match value {
                        "none" | "0" => None,
                        v => Some(int(v)?),
                    }
                }
                "pyramid" => {
                    cfg.pyramid.levels =
                        parse_levels(value).ok_or_else(|| bad("expected e.g. 1x1,2x1"))?
                }
                "temporal_cells" => cfg.pyramid.temporal_cells = int(value)?,
                "subseq_len" => subseq_len = int(value)?,
                "subseq_overlap" => subseq_overlap = int(value)?,
                "svm_c" => cfg.svm_c = num(value)?,
                "seed" => cfg.seed = value.parse().map_err(|_| bad("not an integer"))?,
                "detections" => {
                    cfg.detections = match value {
                        "files" => DetectionSource::Files,
                        "background" => DetectionSource::Background,
                        _ => return Err(bad("expected files or background")),
                    }
                }
                "background_frames" => cfg.background_frames = int(value)?,
                "mirror" => {
                    cfg.mirror = parse_bool(value).ok_or_else(|| bad("expected true or false"))?
                }
                "scales" => cfg.tracklets.n_scales = int(value)?,
                "grid_step" => cfg.tracklets.grid_step = int(value)?,
                "flow_levels" => cfg.flow.levels = int(value)?,
                "dict_samples" => cfg.dict_samples = int(value)?,
                "dict_split" => cfg.dict_split = Some(list(value)),
                "fusion_iou" => cfg.fusion_iou = num(value)?,
                "nms_iou" => cfg.nms_iou = num(value)?,
                "chi2_link" => cfg.chi2_link = num(value)?,
                "min_track_length" => cfg.track.min_length = int(value)?,
                "static_ratio" => cfg.track.static_ratio = num(value)?,
                "ub_transform" => cfg.ub_transform = Some(resolve(base, value)),
                _ => {
                    return Err(PfmError::Config(format!(
                        "line {line_no}: unknown key {key:?}"
                    )))
                }
            }
        }
        if !have_dataset {
            return Err(PfmError::Config("missing required key `dataset`".into()));
        }
        cfg.split = match (split_kind.as_deref(), train, test) {
            (Some("leave-one-out"), None, None) | (None, None, None) => SplitMode::LeaveOneOut,
            (Some("leave-one-out"), _, _) => {
                return Err(PfmError::Config(
                    "leave-one-out split takes no train/test trajectory lists".into(),
                ))
            }
            (Some("fixed") | None, Some(train), Some(test)) => SplitMode::Fixed { train, test },
            (Some("fixed") | None, _, _) => {
                return Err(PfmError::Config(
                    "fixed split needs both train_trajectories and test_trajectories".into(),
                ))
            }
            (Some(other), _, _) => {
                return Err(PfmError::Config(format!("unknown split {other:?}")))
            }
        };
        if subseq_len > 0 {
            cfg.pyramid.subsequence = Some((subseq_len, subseq_overlap));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.pyramid.validate()?;
        if self.gmm_k == 0 {
            return Err(PfmError::Config("gmm_k must be at least 1".into()));
        }
        if !(self.svm_c > 0.0) {
            return Err(PfmError::Config("svm_c must be positive".into()));
        }
        if self.tracklets.n_scales == 0 || self.tracklets.grid_step == 0 {
            return Err(PfmError::Config(
                "scales and grid_step must be at least 1".into(),
            ));
        }
        if let SplitMode::Fixed { train, test } = &self.split {
            if train.is_empty() || test.is_empty() {
                return Err(PfmError::Config("empty train or test split".into()));
            }
            if let Some(t) = train.iter().find(|t| test.contains(t)) {
                return Err(PfmError::Config(format!(
                    "trajectory {t} is in both train and test"
                )));
            }
        }
        Ok(())
    }

    /// Canonical `key = value` rendering; parsing it yields the same config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            writeln!(s, "{k} = {v}").unwrap();
        };
        kv("dataset", self.dataset.display().to_string());
        match &self.split {
            SplitMode::LeaveOneOut => kv("split", "leave-one-out".into()),
            SplitMode::Fixed { train, test } => {
                kv("split", "fixed".into());
                kv("train_trajectories", train.join(","));
                kv("test_trajectories", test.join(","));
            }
        }
        kv(
            "cameras",
            self.cameras.as_ref().map_or("all".into(), |c| c.join(",")),
        );
        kv("features", self.features.to_string());
        kv(
            "encoding",
            match self.encoding {
                Encoding::Fisher => "fv".into(),
                Encoding::Bow => "bow".into(),
            },
        );
        kv("gmm_k", self.gmm_k.to_string());
        kv(
            "pcal",
            match self.pcal {
                None => "none".into(),
                Some(PcaTarget::Dims(d)) => d.to_string(),
                Some(PcaTarget::Fraction(f)) => format!("{}%", f * 100.0),
            },
        );
        kv("pcah", self.pcah.map_or("none".into(), |d| d.to_string()));
        kv(
            "pyramid",
            self.pyramid
                .levels
                .iter()
                .map(|(r, c)| format!("{r}x{c}"))
                .collect::<Vec<_>>()
                .join(","),
        );
        kv("temporal_cells", self.pyramid.temporal_cells.to_string());
        if let Some((len, overlap)) = self.pyramid.subsequence {
            kv("subseq_len", len.to_string());
            kv("subseq_overlap", overlap.to_string());
        }
        kv("svm_c", self.svm_c.to_string());
        kv("seed", self.seed.to_string());
        kv(
            "detections",
            match self.detections {
                DetectionSource::Files => "files".into(),
                DetectionSource::Background => "background".into(),
            },
        );
        kv("background_frames", self.background_frames.to_string());
        kv("mirror", self.mirror.to_string());
        kv("scales", self.tracklets.n_scales.to_string());
        kv("grid_step", self.tracklets.grid_step.to_string());
        kv("flow_levels", self.flow.levels.to_string());
        kv("dict_samples", self.dict_samples.to_string());
        if let Some(d) = &self.dict_split {
            kv("dict_split", d.join(","));
        }
        kv("fusion_iou", self.fusion_iou.to_string());
        kv("nms_iou", self.nms_iou.to_string());
        kv("chi2_link", self.chi2_link.to_string());
        kv("min_track_length", self.track.min_length.to_string());
        kv("static_ratio", self.track.static_ratio.to_string());
        if let Some(p) = &self.ub_transform {
            kv("ub_transform", p.display().to_string());
        }
        s
    }
}

fn resolve(base: &Path, value: &str) -> PathBuf {
    let p = PathBuf::from(value);
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

fn list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

fn parse_bool(value: &str) -> Option<bool> {
    match value {
        "true" | "yes" | "1" => Some(true),
        "false" | "no" | "0" => Some(false),
        _ => None,
    }
}

/// `none`, an absolute dimension `N`, or a percentage `N%`.
pub fn parse_pca_target(value: &str) -> Result<Option<PcaTarget>> {
    let bad = || PfmError::Config(format!("pca target {value:?}: expected none, N or N%"));
    if value == "none" || value == "0" {
        return Ok(None);
    }
    if let Some(p) = value.strip_suffix('%') {
        let f: f64 = p.trim().parse().map_err(|_| bad())?;
        if !(f > 0.0 && f <= 100.0) {
            return Err(bad());
        }
        return Ok(Some(PcaTarget::Fraction(f / 100.0)));
    }
    value
        .parse::<usize>()
        .map(|d| Some(PcaTarget::Dims(d)))
        .map_err(|_| bad())
}

/// `RxC[,RxC...]`, e.g. `1x1,2x1`.
pub fn parse_levels(value: &str) -> Option<Vec<(usize, usize)>> {
    let levels: Option<Vec<_>> = value
        .split(',')
        .map(|l| {
            let (r, c) = l.trim().split_once('x')?;
            Some((r.trim().parse().ok()?, c.trim().parse().ok()?))
        })
        .collect();
    levels.filter(|l| !l.is_empty())
}
