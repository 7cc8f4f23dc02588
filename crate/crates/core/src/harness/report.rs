//! Evaluation results: per-sample predictions, per-camera and multiview
//! accuracy, confusion counts and stage timings.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::classify::{majority_vote, Prediction};

/// Prediction for one test sample (one camera, one subsequence window).
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePrediction {
    pub fold: usize,
    pub subject: String,
    pub trajectory: String,
    pub camera: String,
    pub window: usize,
    /// `None` when the sequence yielded no usable person track.
    pub predicted: Option<String>,
    /// Decision value of the predicted label.
    pub score: Option<f64>,
}

impl SamplePrediction {
    pub fn correct(&self) -> bool {
        self.predicted.as_deref() == Some(self.subject.as_str())
    }
}

/// Majority vote over all cameras and windows of one (subject, trajectory).
#[derive(Debug, Clone, PartialEq)]
pub struct VotePrediction {
    pub subject: String,
    pub trajectory: String,
    pub predicted: Option<String>,
    pub votes: usize,
}

impl VotePrediction {
    pub fn correct(&self) -> bool {
        self.predicted.as_deref() == Some(self.subject.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldSummary {
    pub test_trajectories: Vec<String>,
    pub train_samples: usize,
    pub test_samples: usize,
    /// SHA-256 of the serialised model trained for this fold.
    pub model_digest: String,
}

#[derive(Debug, Clone)]
pub struct MetricsReport {
    /// Subject labels, sorted.
    pub labels: Vec<String>,
    pub samples: Vec<SamplePrediction>,
    /// Accuracy in percent per camera, sorted by camera id.
    pub per_camera: Vec<(String, f64)>,
    pub per_camera_average: f64,
    pub votes: Vec<VotePrediction>,
    pub multiview: f64,
    /// Rows: true subject; columns: predicted subject, then "no prediction".
    pub confusion: Vec<Vec<usize>>,
    pub folds: Vec<FoldSummary>,
    pub config: String,
    /// Wall-clock seconds per stage; ignored by equality.
    pub timings: Vec<(String, f64)>,
}

impl PartialEq for MetricsReport {
    fn eq(&self, o: &Self) -> bool {
        self.labels == o.labels
            && self.samples == o.samples
            && self.per_camera == o.per_camera
            && self.per_camera_average == o.per_camera_average
            && self.votes == o.votes
            && self.multiview == o.multiview
            && self.confusion == o.confusion
            && self.folds == o.folds
            && self.config == o.config
    }
}

fn percent(correct: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * correct as f64 / total as f64
    }
}

/// Majority vote per (subject, trajectory), sorted by that key.
pub fn multiview_votes(samples: &[SamplePrediction]) -> Vec<VotePrediction> {
    let mut groups: BTreeMap<(&str, &str), Vec<Prediction<f64>>> = BTreeMap::new();
    for s in samples {
        let g = groups.entry((&s.subject, &s.trajectory)).or_default();
        if let Some(label) = &s.predicted {
            g.push(Prediction {
                label: label.clone(),
                label_index: 0,
                scores: vec![s.score.unwrap_or(0.0)],
            });
        }
    }
    groups
        .into_iter()
        .map(|((subject, trajectory), preds)| VotePrediction {
            subject: subject.into(),
            trajectory: trajectory.into(),
            predicted: majority_vote(&preds).ok(),
            votes: preds.len(),
        })
        .collect()
}

impl MetricsReport {
    pub fn new(
        labels: Vec<String>,
        samples: Vec<SamplePrediction>,
        folds: Vec<FoldSummary>,
        config: String,
        timings: Vec<(String, f64)>,
    ) -> Self {
        let mut cams: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
        for s in &samples {
            let c = cams.entry(&s.camera).or_default();
            c.0 += s.correct() as usize;
            c.1 += 1;
        }
        let per_camera: Vec<(String, f64)> = cams
            .into_iter()
            .map(|(c, (ok, n))| (c.to_string(), percent(ok, n)))
            .collect();
        let per_camera_average = if per_camera.is_empty() {
            0.0
        } else {
            per_camera.iter().map(|(_, a)| a).sum::<f64>() / per_camera.len() as f64
        };
        let votes = multiview_votes(&samples);
        let multiview = percent(votes.iter().filter(|v| v.correct()).count(), votes.len());
        let n = labels.len();
        let mut confusion = vec![vec![0usize; n + 1]; n];
        for s in &samples {
            let Ok(row) = labels.binary_search(&s.subject) else {
                continue;
            };
            let col = s
                .predicted
                .as_ref()
                .and_then(|p| labels.binary_search(p).ok())
                .unwrap_or(n);
            confusion[row][col] += 1;
        }
        MetricsReport {
            labels,
            samples,
            per_camera,
            per_camera_average,
            votes,
            multiview,
            confusion,
            folds,
            config,
            timings,
        }
    }

    /// `subject,trajectory,camera,predicted,correct`, one row per test sample.
    /// Multiview rows use camera `all`; a missing prediction is `-`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("subject,trajectory,camera,predicted,correct\n");
        for p in &self.samples {
            let pred = p.predicted.as_deref().unwrap_or("-");
            let cam = if self.samples.iter().any(|q| q.window > 0) {
                format!("{}#{}", p.camera, p.window)
            } else {
                p.camera.clone()
            };
            writeln!(
                s,
                "{},{},{},{},{}",
                p.subject,
                p.trajectory,
                cam,
                pred,
                p.correct() as u8
            )
            .unwrap();
        }
        for v in &self.votes {
            let pred = v.predicted.as_deref().unwrap_or("-");
            writeln!(
                s,
                "{},{},all,{},{}",
                v.subject,
                v.trajectory,
                pred,
                v.correct() as u8
            )
            .unwrap();
        }
        s
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        writeln!(s, "camera      accuracy").unwrap();
        for (c, a) in &self.per_camera {
            writeln!(s, "{c:<10} {a:>8.2}%").unwrap();
        }
        writeln!(s, "{:<10} {:>8.2}%", "average", self.per_camera_average).unwrap();
        writeln!(s, "{:<10} {:>8.2}%", "multiview", self.multiview).unwrap();
        writeln!(s).unwrap();
        writeln!(s, "fold  test        train  test  model").unwrap();
        for (i, f) in self.folds.iter().enumerate() {
            writeln!(
                s,
                "{:<5} {:<10} {:>6} {:>5}  {}",
                i,
                f.test_trajectories.join(","),
                f.train_samples,
                f.test_samples,
                &f.model_digest[..f.model_digest.len().min(16)]
            )
            .unwrap();
        }
        writeln!(s).unwrap();
        writeln!(s, "confusion (rows: true, columns: predicted, last: none)").unwrap();
        let w = self
            .labels
            .iter()
            .map(|l| l.len())
            .max()
            .unwrap_or(1)
            .max(3);
        write!(s, "{:w$}", "").unwrap();
        for l in &self.labels {
            write!(s, " {l:>w$}").unwrap();
        }
        writeln!(s, " {:>w$}", "-").unwrap();
        for (l, row) in self.labels.iter().zip(&self.confusion) {
            write!(s, "{l:w$}").unwrap();
            for c in row {
                write!(s, " {c:>w$}").unwrap();
            }
            writeln!(s).unwrap();
        }
        if !self.timings.is_empty() {
            writeln!(s).unwrap();
            for (stage, secs) in &self.timings {
                writeln!(s, "{stage:<12} {secs:>8.2}s").unwrap();
            }
        }
        s
    }
}
