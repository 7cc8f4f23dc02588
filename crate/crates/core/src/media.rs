//! Frame ingestion (binary PGM/PPM), grayscale conversion and mirror augmentation.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{PfmError, Result};
use crate::scalar::Real;

/// Smallest accepted frame side, in pixels.
pub const MIN_FRAME_SIDE: usize = 16;

/// One video frame. Pixel planes are row-major with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame<T> {
    pub width: usize,
    pub height: usize,
    pub gray: Vec<T>,
    /// Interleaved RGB, `3 * width * height` samples, when the source had color.
    pub color: Option<Vec<T>>,
    pub index: usize,
}

impl<T: Real> Frame<T> {
    pub fn from_gray(width: usize, height: usize, gray: Vec<T>, index: usize) -> Result<Self> {
        let f = Frame {
            width,
            height,
            gray,
            color: None,
            index,
        };
        f.validate()?;
        Ok(f)
    }

    /// Builds a frame from interleaved RGB, deriving luminance with BT.601 weights.
    pub fn from_rgb(width: usize, height: usize, rgb: Vec<T>, index: usize) -> Result<Self> {
        if rgb.len() != 3 * width * height {
            return Err(PfmError::dims(3 * width * height, rgb.len()));
        }
        let (wr, wg, wb) = (T::lit(0.299), T::lit(0.587), T::lit(0.114));
        let gray = rgb
            .chunks_exact(3)
            .map(|p| wr * p[0] + wg * p[1] + wb * p[2])
            .collect();
        let f = Frame {
            width,
            height,
            gray,
            color: Some(rgb),
            index,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < MIN_FRAME_SIDE || self.height < MIN_FRAME_SIDE {
            return Err(PfmError::InvalidInput(format!(
                "frame {}x{} is smaller than {MIN_FRAME_SIDE}x{MIN_FRAME_SIDE}",
                self.width, self.height
            )));
        }
        if self.gray.len() != self.width * self.height {
            return Err(PfmError::dims(self.width * self.height, self.gray.len()));
        }
        if let Some(c) = &self.color {
            if c.len() != 3 * self.width * self.height {
                return Err(PfmError::dims(3 * self.width * self.height, c.len()));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> T {
        self.gray[y * self.width + x]
    }

    /// RGB triple at a pixel; grayscale frames replicate luminance.
    pub fn rgb_at(&self, x: usize, y: usize) -> [T; 3] {
        let i = y * self.width + x;
        match &self.color {
            Some(c) => [c[3 * i], c[3 * i + 1], c[3 * i + 2]],
            None => [self.gray[i]; 3],
        }
    }

    /// Horizontal flip of every plane: column `x` maps to `width - 1 - x`.
    pub fn mirrored(&self) -> Self {
        let (w, h) = (self.width, self.height);
        let mut gray = Vec::with_capacity(w * h);
        for y in 0..h {
            let row = &self.gray[y * w..(y + 1) * w];
            gray.extend(row.iter().rev());
        }
        let color = self.color.as_ref().map(|c| {
            let mut out = Vec::with_capacity(c.len());
            for y in 0..h {
                for x in (0..w).rev() {
                    let i = 3 * (y * w + x);
                    out.extend_from_slice(&c[i..i + 3]);
                }
            }
            out
        });
        Frame {
            width: w,
            height: h,
            gray,
            color,
            index: self.index,
        }
    }
}

/// All frames of one camera recording of one subject walking one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence<T> {
    pub frames: Vec<Frame<T>>,
    pub camera_id: String,
    pub subject_id: Option<String>,
    pub trajectory_id: Option<String>,
    pub mirrored: bool,
}

impl<T: Real> FrameSequence<T> {
    pub fn new(frames: Vec<Frame<T>>, camera_id: impl Into<String>) -> Result<Self> {
        let seq = FrameSequence {
            frames,
            camera_id: camera_id.into(),
            subject_id: None,
            trajectory_id: None,
            mirrored: false,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<()> {
        for f in &self.frames {
            f.validate()?;
        }
        if let Some(first) = self.frames.first() {
            for f in &self.frames[1..] {
                if (f.width, f.height) != (first.width, first.height) {
                    return Err(PfmError::dims(
                        format!("{}x{}", first.width, first.height),
                        format!("{}x{} (frame {})", f.width, f.height, f.index),
                    ));
                }
            }
        }
        if self.frames.windows(2).any(|w| w[0].index >= w[1].index) {
            return Err(PfmError::InvalidInput(
                "frame indices must be strictly increasing".into(),
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dims(&self) -> Option<(usize, usize)> {
        self.frames.first().map(|f| (f.width, f.height))
    }
}

/// Loads every `<stem>.pgm` / `<stem>.ppm` with an integer stem from `directory`,
/// ordered by numeric stem. Other files are ignored.
pub fn load_sequence<T: Real>(directory: &Path, camera_id: &str) -> Result<FrameSequence<T>> {
    if !directory.is_dir() {
        return Err(PfmError::MissingDirectory(directory.to_path_buf()));
    }
    let entries = fs::read_dir(directory).map_err(|e| PfmError::io(directory, e))?;
    let mut files: Vec<(u64, PathBuf)> = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| PfmError::io(directory, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        if ext != "pgm" && ext != "ppm" {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
        if let Ok(n) = stem.parse::<u64>() {
            files.push((n, path));
        }
    }
    files.sort();
    let mut frames = Vec::with_capacity(files.len());
    for (n, path) in files {
        frames.push(read_netpbm(&path, n as usize)?);
    }
    FrameSequence::new(frames, camera_id)
}

/// Flips every frame horizontally and toggles the `mirrored` flag.
pub fn mirror_sequence<T: Real>(seq: &FrameSequence<T>) -> FrameSequence<T> {
    FrameSequence {
        frames: seq.frames.iter().map(Frame::mirrored).collect(),
        camera_id: seq.camera_id.clone(),
        subject_id: seq.subject_id.clone(),
        trajectory_id: seq.trajectory_id.clone(),
        mirrored: !seq.mirrored,
    }
}

fn malformed(path: &Path, reason: impl Into<String>) -> PfmError {
    PfmError::MalformedFrame {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Reads a binary PGM (P5) or PPM (P6) file with maxval 255.
pub fn read_netpbm<T: Real>(path: &Path, index: usize) -> Result<Frame<T>> {
    let bytes = fs::read(path).map_err(|e| PfmError::io(path, e))?;
    let mut pos = 0usize;
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(malformed(path, "header ended early"));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let channels = match tokens[0].as_str() {
        "P5" => 1,
        "P6" => 3,
        other => return Err(malformed(path, format!("unsupported magic {other:?}"))),
    };
    let parse = |s: &str, what: &str| {
        s.parse::<usize>()
            .map_err(|_| malformed(path, format!("bad {what} {s:?}")))
    };
    let width = parse(&tokens[1], "width")?;
    let height = parse(&tokens[2], "height")?;
    let maxval = parse(&tokens[3], "maxval")?;
    if maxval != 255 {
        return Err(malformed(
            path,
            format!("maxval {maxval} (only 255 supported)"),
        ));
    }
    let need = width * height * channels;
    if bytes.len() < pos + need {
        return Err(malformed(
            path,
            format!(
                "raster has {} bytes, expected {need}",
                bytes.len().saturating_sub(pos)
            ),
        ));
    }
    let scale = T::lit(255.0);
    let data: Vec<T> = bytes[pos..pos + need]
        .iter()
        .map(|&b| T::lit(b as f64) / scale)
        .collect();
    let frame = if channels == 1 {
        Frame::from_gray(width, height, data, index)
    } else {
        Frame::from_rgb(width, height, data, index)
    };
    frame.map_err(|e| malformed(path, e.to_string()))
}

fn quantize<T: Real>(v: T) -> u8 {
    (v.to_f64_lossy() * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Writes the gray plane as P5, or the color plane as P6 when present.
pub fn write_netpbm<T: Real>(path: &Path, frame: &Frame<T>) -> Result<()> {
    let mut out = Vec::new();
    match &frame.color {
        Some(c) => {
            write!(out, "P6\n{} {}\n255\n", frame.width, frame.height).unwrap();
            out.extend(c.iter().map(|&v| quantize(v)));
        }
        None => {
            write!(out, "P5\n{} {}\n255\n", frame.width, frame.height).unwrap();
            out.extend(frame.gray.iter().map(|&v| quantize(v)));
        }
    }
    fs::write(path, out).map_err(|e| PfmError::io(path, e))
}

/// Writes an 8-bit grayscale raster directly.
pub fn write_pgm_bytes(path: &Path, width: usize, height: usize, data: &[u8]) -> Result<()> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(data);
    fs::write(path, out).map_err(|e| PfmError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(w: usize, h: usize, f: impl Fn(usize, usize) -> f64) -> Frame<f64> {
        let gray = (0..w * h).map(|i| f(i % w, i / w)).collect();
        Frame::from_gray(w, h, gray, 0).unwrap()
    }

    #[test]
    fn loads_numeric_stems_in_order() {
        let dir = tempfile::tempdir().unwrap();
        for i in (0..50).rev() {
            let data = vec![i as u8; 320 * 240];
            write_pgm_bytes(&dir.path().join(format!("{i:03}.pgm")), 320, 240, &data).unwrap();
        }
        fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        let seq = load_sequence::<f64>(dir.path(), "cam0").unwrap();
        assert_eq!(seq.len(), 50);
        assert_eq!(seq.dims(), Some((320, 240)));
        assert!(!seq.mirrored);
        for (k, f) in seq.frames.iter().enumerate() {
            assert_eq!(f.index, k);
            assert_eq!(f.gray[0], k as f64 / 255.0);
        }
    }

    #[test]
    fn numeric_not_lexicographic_order() {
        let dir = tempfile::tempdir().unwrap();
        for (i, v) in [(9u8, 9u8), (10, 10), (100, 100)] {
            write_pgm_bytes(&dir.path().join(format!("{i}.pgm")), 16, 16, &[v; 256]).unwrap();
        }
        let seq = load_sequence::<f64>(dir.path(), "c").unwrap();
        let idx: Vec<_> = seq.frames.iter().map(|f| f.index).collect();
        assert_eq!(idx, vec![9, 10, 100]);
    }

    #[test]
    fn black_frame() {
        let dir = tempfile::tempdir().unwrap();
        write_pgm_bytes(&dir.path().join("0.pgm"), 16, 16, &[0; 256]).unwrap();
        let seq = load_sequence::<f64>(dir.path(), "c").unwrap();
        assert_eq!(seq.len(), 1);
        assert!(seq.frames[0].gray.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ppm_luminance() {
        let dir = tempfile::tempdir().unwrap();
        let mut bytes = b"P6\n# comment\n16 16\n255\n".to_vec();
        bytes.extend(std::iter::repeat(128u8).take(16 * 16 * 3));
        fs::write(dir.path().join("000.ppm"), bytes).unwrap();
        let seq = load_sequence::<f64>(dir.path(), "c").unwrap();
        let expected: f64 = 0.299 * 128.0 / 255.0 + 0.587 * 128.0 / 255.0 + 0.114 * 128.0 / 255.0;
        assert!((expected - 0.50196).abs() < 1e-5);
        for &g in &seq.frames[0].gray {
            assert!((g - expected).abs() < 1e-12);
        }
        assert!(seq.frames[0].color.is_some());
    }

    #[test]
    fn errors_are_reported() {
        let missing = load_sequence::<f64>(Path::new("/nonexistent/dir"), "c");
        assert!(matches!(missing, Err(PfmError::MissingDirectory(_))));

        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("001.pgm"), b"P5\n16 16\n255\n\x00\x01").unwrap();
        match load_sequence::<f64>(dir.path(), "c") {
            Err(PfmError::MalformedFrame { path, .. }) => {
                assert!(path.ends_with("001.pgm"))
            }
            other => panic!("unexpected {other:?}"),
        }

        let dir = tempfile::tempdir().unwrap();
        write_pgm_bytes(&dir.path().join("0.pgm"), 16, 16, &[0; 256]).unwrap();
        write_pgm_bytes(&dir.path().join("1.pgm"), 20, 16, &[0; 320]).unwrap();
        assert!(matches!(
            load_sequence::<f64>(dir.path(), "c"),
            Err(PfmError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn mirror_moves_pixel() {
        let f = frame(16, 16, |x, y| if (x, y) == (2, 5) { 1.0 } else { 0.0 });
        let m = f.mirrored();
        assert_eq!(m.at(13, 5), 1.0);
        assert_eq!(m.gray.iter().filter(|&&v| v == 1.0).count(), 1);

        // width 10 case from the reflection rule x -> w - 1 - x
        let mut g = vec![0.0; 10 * 16];
        g[5 * 10 + 2] = 1.0;
        let f = Frame {
            width: 10,
            height: 16,
            gray: g,
            color: None,
            index: 0,
        };
        assert_eq!(f.mirrored().gray[5 * 10 + 7], 1.0);
    }

    #[test]
    fn mirror_constant_and_involution() {
        let c = frame(17, 16, |_, _| 0.25);
        assert_eq!(c.mirrored(), c);
        let rgb: Vec<f64> = (0..3 * 17 * 16).map(|i| (i % 251) as f64 / 255.0).collect();
        let f = Frame::from_rgb(17, 16, rgb, 3).unwrap();
        let seq = FrameSequence::new(vec![f], "cam").unwrap();
        let m = mirror_sequence(&seq);
        assert!(m.mirrored);
        assert_ne!(m.frames, seq.frames);
        assert_eq!(mirror_sequence(&m), seq);
    }
}
