//! 16-bit binary PGM previews. Values map linearly from `[min, max]` onto
//! `[0, 65535]`; the range goes into a JSON sidecar so the mapping is
//! invertible.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{ngi::write_atomic, write_json};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PgmRange {
    pub min: f64,
    pub max: f64,
    pub width: usize,
    pub height: usize,
}

/// Encodes `image` (rows = height) as P5 with maxval 65535.
pub fn encode(image: &Array2<f64>) -> (Vec<u8>, PgmRange) {
    let (height, width) = image.dim();
    let (min, max) = image
        .iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let (min, max) = if min.is_finite() { (min, max) } else { (0.0, 0.0) };
    let scale = if max > min { 65535.0 / (max - min) } else { 0.0 };
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    out.reserve(2 * width * height);
    for &v in image.iter() {
        let level = if v.is_finite() { ((v - min) * scale).round().clamp(0.0, 65535.0) as u16 } else { 0 };
        out.extend_from_slice(&level.to_be_bytes());
    }
    (out, PgmRange { min, max, width, height })
}

/// Writes `path` plus `path.json` holding the value range.
pub fn write(path: &Path, image: &Array2<f64>) -> Result<PgmRange> {
    let (bytes, range) = encode(image);
    write_atomic(path, &bytes)?;
    let mut side = path.as_os_str().to_owned();
    side.push(".json");
    write_json(Path::new(&side), &range)?;
    Ok(range)
}
