//! Text formats: detections (`frame kind cx cy w h score`, kind `fb`/`ub`)
//! and transform parameters (four whitespace-separated reals).

use std::fs;
use std::path::Path;

use super::{BoundingBox, BoxKind, TransformParams};
use crate::error::{PfmError, Result};
use crate::scalar::Real;

fn parse_err(line: usize, reason: impl Into<String>) -> PfmError {
    PfmError::Parse {
        line,
        reason: reason.into(),
    }
}

fn real<T: Real>(tok: &str, line: usize) -> Result<T> {
    tok.parse::<T>()
        .map_err(|_| parse_err(line, format!("not a number: {tok:?}")))
}

/// Parses a detections file. Blank lines and `#` comments are skipped.
pub fn parse_detections<T: Real>(text: &str) -> Result<Vec<BoundingBox<T>>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let toks: Vec<&str> = content.split_whitespace().collect();
        if toks.len() != 7 {
            return Err(parse_err(
                line,
                format!("expected 7 fields, got {}", toks.len()),
            ));
        }
        let frame = toks[0]
            .parse::<usize>()
            .map_err(|_| parse_err(line, format!("bad frame {:?}", toks[0])))?;
        let kind = match toks[1] {
            "fb" => BoxKind::FullBody,
            "ub" => BoxKind::UpperBody,
            k => return Err(parse_err(line, format!("unknown kind {k:?}"))),
        };
        let b = BoundingBox::new(
            real(toks[2], line)?,
            real(toks[3], line)?,
            real(toks[4], line)?,
            real(toks[5], line)?,
            real(toks[6], line)?,
            kind,
            frame,
        );
        if !(b.w > T::zero() && b.h > T::zero()) {
            return Err(parse_err(line, "box size must be positive"));
        }
        out.push(b);
    }
    Ok(out)
}

pub fn read_detections<T: Real>(path: &Path) -> Result<Vec<BoundingBox<T>>> {
    let text = fs::read_to_string(path).map_err(|e| PfmError::io(path, e))?;
    parse_detections(&text)
}

pub fn write_detections<T: Real>(path: &Path, boxes: &[BoundingBox<T>]) -> Result<()> {
    let mut s = String::new();
    for b in boxes {
        let kind = match b.kind {
            BoxKind::UpperBody => "ub",
            _ => "fb",
        };
        s.push_str(&format!(
            "{} {kind} {} {} {} {} {}\n",
            b.frame, b.cx, b.cy, b.w, b.h, b.score
        ));
    }
    fs::write(path, s).map_err(|e| PfmError::io(path, e))
}

pub fn parse_transform_params<T: Real>(text: &str) -> Result<TransformParams<T>> {
    let vals: Vec<T> = text
        .split_whitespace()
        .map(|t| real(t, 1))
        .collect::<Result<_>>()?;
    if vals.len() != 4 {
        return Err(parse_err(
            1,
            format!("expected 4 values, got {}", vals.len()),
        ));
    }
    Ok(TransformParams {
        mu_x: vals[0],
        mu_y: vals[1],
        mu_w: vals[2],
        mu_h: vals[3],
    })
}
