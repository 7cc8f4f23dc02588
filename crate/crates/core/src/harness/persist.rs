//! Text model format.
//!
//! ```text
//! PFM1
//! scalar f64
//! section <name>
//! <key> <values...>
//! ...
//! end
//! checksum sha256 <hex digest of every preceding byte>
//! ```
//!
//! Reals are written with their shortest round-tripping decimal form, so a
//! save/load cycle is bit-exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::classify::OvaModel;
use crate::encode::{
    Codebook, Dictionary, GmmModel, LowLevelTransform, PcaBlock, PcaModel, PcaScope, PyramidConfig,
    SubtypeMask,
};
use crate::error::{PfmError, Result};
use crate::scalar::Real;

pub const MAGIC: &str = "PFM1";

/// Everything needed to turn tracklet descriptors of a person track into a
/// prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle<T> {
    /// Echo of the configuration the model was trained with.
    pub config: String,
    pub low: LowLevelTransform<T>,
    pub dictionary: Dictionary<T>,
    pub pyramid: PyramidConfig,
    pub pca_high: Option<PcaModel<T>>,
    pub classifier: OvaModel<T>,
}

fn scalar_name<T: Real>() -> &'static str {
    if std::mem::size_of::<T>() == 4 {
        "f32"
    } else {
        "f64"
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            write!(s, "{b:02x}").unwrap();
            s
        })
}

fn reals<T: Real>(s: &mut String, key: &str, v: &[T]) {
    s.push_str(key);
    for x in v {
        write!(s, " {x}").unwrap();
    }
    s.push('\n');
}

fn write_pca<T: Real>(s: &mut String, p: &Option<PcaModel<T>>) {
    match p {
        None => s.push_str("pca none\n"),
        Some(p) => {
            let scope = match p.scope {
                PcaScope::LowLevel => "low",
                PcaScope::HighLevel => "high",
            };
            writeln!(
                s,
                "pca {scope} {} {} {}",
                p.input_dim,
                p.output_dim,
                p.blocks.len()
            )
            .unwrap();
            for b in &p.blocks {
                writeln!(s, "block {} {} {}", b.offset, b.input_dim, b.output_dim).unwrap();
                reals(s, "mean", &b.mean);
                reals(s, "basis", &b.basis);
            }
        }
    }
}

pub fn model_to_string<T: Real>(m: &ModelBundle<T>) -> String {
    let mut s = format!("{MAGIC}\nscalar {}\n", scalar_name::<T>());
    let config: Vec<&str> = m.config.lines().collect();
    writeln!(s, "section config {}", config.len()).unwrap();
    for l in config {
        writeln!(s, "{l}").unwrap();
    }
    s.push_str("section lowlevel\n");
    writeln!(s, "mask {}", m.low.mask).unwrap();
    write_pca(&mut s, &m.low.pca);
    s.push_str("section dictionary\n");
    match &m.dictionary {
        Dictionary::Fisher(g) => {
            writeln!(s, "fisher {} {}", g.components, g.dim).unwrap();
            reals(&mut s, "weights", &g.weights);
            reals(&mut s, "means", &g.means);
            reals(&mut s, "variances", &g.variances);
        }
        Dictionary::Bow(c) => {
            writeln!(s, "bow {} {}", c.len(), c.dim()).unwrap();
            for c in &c.centroids {
                reals(&mut s, "centroid", c);
            }
        }
    }
    s.push_str("section pyramid\n");
    let levels: Vec<String> = m
        .pyramid
        .levels
        .iter()
        .map(|(r, c)| format!("{r}x{c}"))
        .collect();
    writeln!(s, "levels {}", levels.join(",")).unwrap();
    writeln!(s, "temporal_cells {}", m.pyramid.temporal_cells).unwrap();
    match m.pyramid.subsequence {
        None => s.push_str("subsequence none\n"),
        Some((l, o)) => writeln!(s, "subsequence {l} {o}").unwrap(),
    }
    s.push_str("section highlevel\n");
    write_pca(&mut s, &m.pca_high);
    s.push_str("section classifier\n");
    let c = &m.classifier;
    writeln!(s, "classes {} {}", c.labels.len(), c.dim).unwrap();
    writeln!(s, "reg_c {}", c.reg_c).unwrap();
    for (k, label) in c.labels.iter().enumerate() {
        writeln!(s, "label {label}").unwrap();
        writeln!(s, "bias {}", c.biases[k]).unwrap();
        reals(&mut s, "weight", c.weight(k));
    }
    s.push_str("end\n");
    let digest = sha256_hex(s.as_bytes());
    writeln!(s, "checksum sha256 {digest}").unwrap();
    s
}

/// SHA-256 of the serialised model.
pub fn model_digest<T: Real>(m: &ModelBundle<T>) -> String {
    sha256_hex(model_to_string(m).as_bytes())
}

pub fn save_model<T: Real>(path: &Path, m: &ModelBundle<T>) -> Result<()> {
    fs::write(path, model_to_string(m)).map_err(|e| PfmError::io(path, e))
}

pub fn load_model<T: Real>(path: &Path) -> Result<ModelBundle<T>> {
    let text = fs::read_to_string(path).map_err(|e| PfmError::io(path, e))?;
    model_from_str(&text)
}

struct Lines<'a> {
    lines: Vec<&'a str>,
    pos: usize,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self) -> Result<&'a str> {
        let l = self.lines.get(self.pos).ok_or_else(|| {
            PfmError::Truncated(format!("unexpected end after line {}", self.pos))
        })?;
        self.pos += 1;
        Ok(l)
    }

    fn bad(&self, reason: impl Into<String>) -> PfmError {
        PfmError::Parse {
            line: self.pos,
            reason: reason.into(),
        }
    }

    /// Next line, which must start with `key`; returns the remaining tokens.
    fn expect(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let l = self.next_line()?;
        let mut toks = l.split_whitespace();
        if toks.next() != Some(key) {
            return Err(self.bad(format!("expected `{key}`, found {l:?}")));
        }
        Ok(toks.collect())
    }

    fn usizes(&mut self, key: &str, n: usize) -> Result<Vec<usize>> {
        let toks = self.expect(key)?;
        if toks.len() != n {
            return Err(self.bad(format!("`{key}` needs {n} values")));
        }
        toks.iter()
            .map(|t| {
                t.parse()
                    .map_err(|_| self.bad(format!("bad integer {t:?}")))
            })
            .collect()
    }

    fn reals<T: Real>(&mut self, key: &str, n: usize) -> Result<Vec<T>> {
        let toks = self.expect(key)?;
        if toks.len() != n {
            return Err(self.bad(format!("`{key}` needs {n} values, got {}", toks.len())));
        }
        toks.iter()
            .map(|t| {
                t.parse::<T>()
                    .map_err(|_| self.bad(format!("bad number {t:?}")))
            })
            .collect()
    }

    fn section(&mut self, name: &str) -> Result<Vec<&'a str>> {
        let toks = self.expect("section")?;
        if toks.first() != Some(&name) {
            return Err(self.bad(format!("expected section {name}")));
        }
        Ok(toks[1..].to_vec())
    }

    fn pca<T: Real>(&mut self) -> Result<Option<PcaModel<T>>> {
        let toks = self.expect("pca")?;
        if toks == ["none"] {
            return Ok(None);
        }
        if toks.len() != 4 {
            return Err(self.bad("pca header needs scope and three sizes"));
        }
        let scope = match toks[0] {
            "low" => PcaScope::LowLevel,
            "high" => PcaScope::HighLevel,
            s => return Err(self.bad(format!("unknown pca scope {s:?}"))),
        };
        let n: Vec<usize> = toks[1..]
            .iter()
            .map(|t| {
                t.parse()
                    .map_err(|_| self.bad(format!("bad integer {t:?}")))
            })
            .collect::<Result<_>>()?;
        let mut blocks = Vec::with_capacity(n[2]);
        for _ in 0..n[2] {
            let b = self.usizes("block", 3)?;
            let mean = self.reals("mean", b[1])?;
            let basis = self.reals("basis", b[1] * b[2])?;
            blocks.push(PcaBlock {
                offset: b[0],
                input_dim: b[1],
                output_dim: b[2],
                mean,
                basis,
            });
        }
        let covered: usize = blocks.iter().map(|b| b.input_dim).sum();
        let out: usize = blocks.iter().map(|b| b.output_dim).sum();
        if covered != n[0] || out != n[1] {
            return Err(self.bad("pca blocks do not match the declared sizes"));
        }
        Ok(Some(PcaModel {
            scope,
            input_dim: n[0],
            output_dim: n[1],
            blocks,
        }))
    }
}

/// Parses a model, checking the magic line, the checksum, then the content.
pub fn model_from_str<T: Real>(text: &str) -> Result<ModelBundle<T>> {
    let first = text.lines().next().unwrap_or("");
    if first != MAGIC {
        return Err(if first.starts_with("PFM") {
            PfmError::Version(format!("{first:?} (supported: {MAGIC})"))
        } else {
            PfmError::InvalidInput("not a model file: missing PFM1 magic line".into())
        });
    }
    let body_end = text
        .rfind("\nchecksum ")
        .ok_or_else(|| PfmError::Truncated("missing checksum line".into()))?
        + 1;
    let (body, tail) = text.split_at(body_end);
    let toks: Vec<&str> = tail.split_whitespace().collect();
    if toks.len() != 3 || toks[1] != "sha256" || !tail.ends_with('\n') {
        return Err(PfmError::Truncated("incomplete checksum line".into()));
    }
    let computed = sha256_hex(body.as_bytes());
    if toks[2] != computed {
        return Err(PfmError::Checksum {
            stored: toks[2].into(),
            computed,
        });
    }
    let mut r = Lines {
        lines: body.lines().collect(),
        pos: 1,
    };
    let scalar = r.expect("scalar")?;
    if scalar != [scalar_name::<T>()] {
        return Err(PfmError::InvalidInput(format!(
            "model stores {} reals, loading as {}",
            scalar.join(" "),
            scalar_name::<T>()
        )));
    }
    let n_config: usize = r
        .section("config")?
        .first()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| r.bad("config section needs a line count"))?;
    let mut config = String::new();
    for _ in 0..n_config {
        config.push_str(r.next_line()?);
        config.push('\n');
    }

    r.section("lowlevel")?;
    let mask = r.expect("mask")?;
    let mask = SubtypeMask::parse(mask.first().copied().unwrap_or(""))?;
    let low = LowLevelTransform {
        mask,
        pca: r.pca()?,
    };

    r.section("dictionary")?;
    let l = r.next_line()?;
    let head: Vec<&str> = l.split_whitespace().collect();
    let dims: Vec<usize> = head
        .iter()
        .skip(1)
        .map(|t| t.parse().map_err(|_| r.bad(format!("bad integer {t:?}"))))
        .collect::<Result<_>>()?;
    if dims.len() != 2 {
        return Err(r.bad("dictionary header needs two sizes"));
    }
    let (k, d) = (dims[0], dims[1]);
    let dictionary = match head[0] {
        "fisher" => {
            let g = GmmModel {
                components: k,
                dim: d,
                weights: r.reals("weights", k)?,
                means: r.reals("means", k * d)?,
                variances: r.reals("variances", k * d)?,
            };
            g.validate()?;
            Dictionary::Fisher(g)
        }
        "bow" => Dictionary::Bow(Codebook {
            centroids: (0..k)
                .map(|_| r.reals("centroid", d))
                .collect::<Result<_>>()?,
        }),
        other => return Err(r.bad(format!("unknown dictionary {other:?}"))),
    };

    r.section("pyramid")?;
    let levels = r.expect("levels")?;
    let levels = super::config::parse_levels(levels.first().copied().unwrap_or(""))
        .ok_or_else(|| r.bad("bad pyramid levels"))?;
    let temporal_cells = r.usizes("temporal_cells", 1)?[0];
    let sub = r.expect("subsequence")?;
    let subsequence = match sub.as_slice() {
        ["none"] => None,
        [l, o] => Some((
            l.parse().map_err(|_| r.bad("bad subsequence length"))?,
            o.parse().map_err(|_| r.bad("bad subsequence overlap"))?,
        )),
        _ => return Err(r.bad("bad subsequence line")),
    };
    let pyramid = PyramidConfig {
        levels,
        temporal_cells,
        subsequence,
    };
    pyramid.validate()?;

    r.section("highlevel")?;
    let pca_high = r.pca()?;

    r.section("classifier")?;
    let cd = r.usizes("classes", 2)?;
    let (classes, dim) = (cd[0], cd[1]);
    let reg_c = r.reals("reg_c", 1)?[0];
    let mut labels = Vec::with_capacity(classes);
    let mut biases = Vec::with_capacity(classes);
    let mut weights = Vec::with_capacity(classes * dim);
    for _ in 0..classes {
        let l = r.expect("label")?;
        if l.len() != 1 {
            return Err(r.bad("label line needs exactly one token"));
        }
        labels.push(l[0].to_string());
        biases.push(r.reals("bias", 1)?[0]);
        weights.extend(r.reals::<T>("weight", dim)?);
    }
    let classifier = OvaModel {
        labels,
        weights,
        biases,
        dim,
        reg_c,
    };
    classifier.validate()?;
    r.expect("end")?;
    if r.pos != r.lines.len() {
        return Err(r.bad("trailing content after `end`"));
    }
    Ok(ModelBundle {
        config,
        low,
        dictionary,
        pyramid,
        pca_high,
        classifier,
    })
}

/// Human-readable summary for `inspect-model`.
pub fn describe_model<T: Real>(m: &ModelBundle<T>) -> String {
    let mut s = String::new();
    writeln!(s, "format        {MAGIC} ({})", scalar_name::<T>()).unwrap();
    writeln!(s, "features      {}", m.low.mask).unwrap();
    match &m.low.pca {
        Some(p) => writeln!(
            s,
            "low-level pca {} -> {} ({} blocks)",
            p.input_dim,
            p.output_dim,
            p.blocks.len()
        ),
        None => writeln!(s, "low-level pca none"),
    }
    .unwrap();
    match &m.dictionary {
        Dictionary::Fisher(g) => writeln!(
            s,
            "dictionary    fisher, {} components, dim {}",
            g.components, g.dim
        ),
        Dictionary::Bow(c) => writeln!(
            s,
            "dictionary    bag of words, {} words, dim {}",
            c.len(),
            c.dim()
        ),
    }
    .unwrap();
    let levels: Vec<String> = m
        .pyramid
        .levels
        .iter()
        .map(|(r, c)| format!("{r}x{c}"))
        .collect();
    writeln!(
        s,
        "pyramid       {} x {} temporal ({} cells)",
        levels.join(","),
        m.pyramid.temporal_cells,
        m.pyramid.cell_count()
    )
    .unwrap();
    match &m.pca_high {
        Some(p) => writeln!(s, "high-level pca {} -> {}", p.input_dim, p.output_dim),
        None => writeln!(s, "high-level pca none"),
    }
    .unwrap();
    writeln!(
        s,
        "classifier    {} classes, dim {}, C = {}",
        m.classifier.labels.len(),
        m.classifier.dim,
        m.classifier.reg_c
    )
    .unwrap();
    writeln!(s, "labels        {}", m.classifier.labels.join(" ")).unwrap();
    s
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::encode::PcaTarget;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_bundle(seed: u64) -> ModelBundle<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = |n: usize| -> Vec<f64> {
            (0..n)
                .map(|_| rng.gen_range(-1.0..1.0) * 1e3f64.powf(rng.gen_range(-1.0..1.0)))
                .collect()
        };
        let pca_low = PcaModel {
            scope: PcaScope::LowLevel,
            input_dim: 5,
            output_dim: 3,
            blocks: vec![
                PcaBlock {
                    offset: 0,
                    input_dim: 2,
                    output_dim: 1,
                    mean: v(2),
                    basis: v(2),
                },
                PcaBlock {
                    offset: 2,
                    input_dim: 3,
                    output_dim: 2,
                    mean: v(3),
                    basis: v(6),
                },
            ],
        };
        let mut w: Vec<f64> = v(2);
        w.iter_mut().for_each(|x| *x = x.abs() + 0.1);
        let gmm = GmmModel {
            components: 2,
            dim: 3,
            weights: vec![w[0] / (w[0] + w[1]), w[1] / (w[0] + w[1])],
            means: v(6),
            variances: v(6).into_iter().map(|x| x.abs() + 1e-3).collect(),
        };
        let fv = 2 * 2 * 3 * 2;
        ModelBundle {
            config: "dataset = /x\ngmm_k = 2\n".into(),
            low: LowLevelTransform {
                mask: SubtypeMask([true, false, true, true]),
                pca: Some(pca_low),
            },
            dictionary: Dictionary::Fisher(gmm),
            pyramid: PyramidConfig {
                levels: vec![(1, 1), (2, 1)],
                temporal_cells: 1,
                subsequence: Some((40, 10)),
            },
            pca_high: Some(PcaModel {
                scope: PcaScope::HighLevel,
                input_dim: fv,
                output_dim: 4,
                blocks: vec![PcaBlock {
                    offset: 0,
                    input_dim: fv,
                    output_dim: 4,
                    mean: v(fv),
                    basis: v(fv * 4),
                }],
            }),
            classifier: OvaModel {
                labels: vec!["s01".into(), "s02".into(), "s03".into()],
                weights: v(12),
                biases: v(3),
                dim: 4,
                reg_c: 1.0,
            },
        }
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let _ = PcaTarget::Dims(1);
        for seed in 0..5 {
            let m = random_bundle(seed);
            let s = model_to_string(&m);
            let back: ModelBundle<f64> = model_from_str(&s).unwrap();
            assert_eq!(back, m);
            assert_eq!(model_to_string(&back), s);
        }
    }

    #[test]
    fn bow_and_no_pca_roundtrip() {
        let mut m = random_bundle(9);
        m.dictionary = Dictionary::Bow(Codebook {
            centroids: vec![vec![0.1, 1e-300, -3.5]; 4],
        });
        m.low.pca = None;
        m.pca_high = None;
        m.pyramid.subsequence = None;
        let back: ModelBundle<f64> = model_from_str(&model_to_string(&m)).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn f32_roundtrip_and_scalar_mismatch() {
        let m = random_bundle(3);
        let m32 = ModelBundle::<f32> {
            config: m.config.clone(),
            low: LowLevelTransform {
                mask: m.low.mask,
                pca: None,
            },
            dictionary: Dictionary::Bow(Codebook {
                centroids: vec![vec![0.1f32, 2.5e-20, -3.0]],
            }),
            pyramid: m.pyramid.clone(),
            pca_high: None,
            classifier: OvaModel {
                labels: vec!["a".into(), "b".into()],
                weights: vec![0.3, 1.0 / 3.0, 7.1, -2.2],
                biases: vec![0.1, -0.7],
                dim: 2,
                reg_c: 10.0,
            },
        };
        let s = model_to_string(&m32);
        assert_eq!(model_from_str::<f32>(&s).unwrap(), m32);
        assert!(matches!(
            model_from_str::<f64>(&s),
            Err(PfmError::InvalidInput(_))
        ));
    }

    #[test]
    fn corruption_is_rejected() {
        let s = model_to_string(&random_bundle(1));
        let v9 = s.replacen("PFM1", "PFM9", 1);
        assert!(matches!(
            model_from_str::<f64>(&v9),
            Err(PfmError::Version(_))
        ));
        assert!(matches!(
            model_from_str::<f64>("hello\n"),
            Err(PfmError::InvalidInput(_))
        ));
        for cut in [s.len() / 3, s.len() / 2, s.len() - 5] {
            assert!(
                matches!(
                    model_from_str::<f64>(&s[..cut]),
                    Err(PfmError::Truncated(_))
                ),
                "cut {cut}"
            );
        }
        let pos = s.find("\nweight ").unwrap() + 9;
        let mut bytes = s.clone().into_bytes();
        bytes[pos] = if bytes[pos] == b'1' { b'2' } else { b'1' };
        let flipped = String::from_utf8(bytes).unwrap();
        assert!(matches!(
            model_from_str::<f64>(&flipped),
            Err(PfmError::Checksum { .. })
        ));
    }

    #[test]
    fn file_roundtrip_and_digest() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.pfm");
        let m = random_bundle(4);
        save_model(&p, &m).unwrap();
        assert_eq!(load_model::<f64>(&p).unwrap(), m);
        assert_eq!(model_digest(&m), model_digest(&m.clone()));
        assert_ne!(model_digest(&m), model_digest(&random_bundle(5)));
        assert!(describe_model(&m).contains("3 classes"));
    }
}
