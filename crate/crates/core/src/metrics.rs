//! Challenge metrics, prediction-track smoothing, and report emission.
//!
//! EMI is scored by the mean per-emotion Pearson correlation between
//! predicted and labeled intensities; BAH by the support-weighted frame-level
//! F1 over both classes. Both metrics are pure and order-deterministic.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::datamodel::NUM_EMOTIONS;
use crate::error::{CoreError, Result};

/// Per-emotion correlations and their mean.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmiEvalReport {
    pub rho_per_emotion: [f64; NUM_EMOTIONS],
    pub rho_mean: f64,
    pub n_samples: usize,
}

impl EmiEvalReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("emotion,rho\n");
        for (name, rho) in crate::datamodel::EMOTIONS.iter().zip(self.rho_per_emotion) {
            out.push_str(&format!("{name},{rho}\n"));
        }
        out.push_str(&format!("mean,{}\n", self.rho_mean));
        out
    }
}

/// One-vs-rest confusion counts for a single class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ClassCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

/// Per-class F1, support weights, and the weighted aggregate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BahEvalReport {
    /// F1 for class 0 and class 1, one-vs-rest.
    pub f1_per_class: [f64; 2],
    pub f1_weighted: f64,
    /// Ground-truth support per class.
    pub support: [usize; 2],
    pub confusion: [ClassCounts; 2],
}

impl BahEvalReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,f1,support,tp,fp,fn\n");
        for c in 0..2 {
            out.push_str(&format!(
                "{c},{},{},{},{},{}\n",
                self.f1_per_class[c],
                self.support[c],
                self.confusion[c].tp,
                self.confusion[c].fp,
                self.confusion[c].fn_,
            ));
        }
        out.push_str(&format!("weighted,{},,,,\n", self.f1_weighted));
        out
    }
}

/// Sample Pearson correlation between two equal-length sequences.
///
/// Zero variance on either side yields the sentinel 0 rather than NaN, so a
/// constant predictor simply contributes no correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(CoreError::ShapeMismatch {
            context: "pearson".into(),
            expected: format!("{}", x.len()),
            found: format!("{}", y.len()),
        });
    }
    if x.len() < 2 {
        return Err(CoreError::InvalidArgument(
            "pearson requires at least 2 points".into(),
        ));
    }
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        let dx = a - mean_x;
        let dy = b - mean_y;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x == 0.0 || var_y == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (var_x.sqrt() * var_y.sqrt()))
}

/// Column-wise Pearson over six emotion channels, then the mean.
pub fn emi_score(preds: &[[f64; NUM_EMOTIONS]], labels: &[[f64; NUM_EMOTIONS]]) -> Result<EmiEvalReport> {
    if preds.len() != labels.len() {
        return Err(CoreError::ShapeMismatch {
            context: "emi_score".into(),
            expected: format!("{} rows", preds.len()),
            found: format!("{} rows", labels.len()),
        });
    }
    if preds.len() < 2 {
        return Err(CoreError::InvalidArgument(
            "emi_score requires at least 2 samples".into(),
        ));
    }
    let mut rho_per_emotion = [0.0; NUM_EMOTIONS];
    for e in 0..NUM_EMOTIONS {
        let x: Vec<f64> = preds.iter().map(|p| p[e]).collect();
        let y: Vec<f64> = labels.iter().map(|l| l[e]).collect();
        rho_per_emotion[e] = pearson(&x, &y)?;
    }
    let rho_mean = rho_per_emotion.iter().sum::<f64>() / NUM_EMOTIONS as f64;
    Ok(EmiEvalReport {
        rho_per_emotion,
        rho_mean,
        n_samples: preds.len(),
    })
}

/// Support-weighted frame-level F1 over both classes, one-vs-rest.
///
/// Class weights come from ground-truth support; a class absent from the
/// labels contributes zero weight.
pub fn bah_score(preds: &[u8], labels: &[u8]) -> Result<BahEvalReport> {
    if preds.len() != labels.len() {
        return Err(CoreError::ShapeMismatch {
            context: "bah_score".into(),
            expected: format!("{} frames", labels.len()),
            found: format!("{} frames", preds.len()),
        });
    }
    if preds.is_empty() {
        return Err(CoreError::InvalidArgument(
            "bah_score requires at least 1 frame".into(),
        ));
    }
    if preds.iter().chain(labels).any(|&v| v > 1) {
        return Err(CoreError::InvalidArgument(
            "bah_score inputs must be binary (0/1)".into(),
        ));
    }

    let mut confusion = [ClassCounts { tp: 0, fp: 0, fn_: 0 }; 2];
    let mut support = [0usize; 2];
    for (&p, &l) in preds.iter().zip(labels) {
        support[l as usize] += 1;
        for c in 0..2u8 {
            let idx = c as usize;
            match (p == c, l == c) {
                (true, true) => confusion[idx].tp += 1,
                (true, false) => confusion[idx].fp += 1,
                (false, true) => confusion[idx].fn_ += 1,
                (false, false) => {}
            }
        }
    }

    let mut f1_per_class = [0.0; 2];
    for c in 0..2 {
        let denom = 2 * confusion[c].tp + confusion[c].fp + confusion[c].fn_;
        f1_per_class[c] = if denom == 0 {
            0.0
        } else {
            2.0 * confusion[c].tp as f64 / denom as f64
        };
    }
    let total = (support[0] + support[1]) as f64;
    let f1_weighted =
        (support[0] as f64 * f1_per_class[0] + support[1] as f64 * f1_per_class[1]) / total;

    Ok(BahEvalReport {
        f1_per_class,
        f1_weighted,
        support,
        confusion,
    })
}

/// Binarizes probabilities: 1 iff `p >= tau`.
pub fn threshold(probabilities: &[f64], tau: f64) -> Vec<u8> {
    probabilities.iter().map(|&p| u8::from(p >= tau)).collect()
}

fn majority_pass(track: &[u8], half: usize) -> Vec<u8> {
    let n = track.len();
    let mut out = vec![0u8; n];
    for i in 0..n {
        // Shrink symmetrically at the edges so the window stays centered
        // (and odd, so there are no ties).
        let h = half.min(i).min(n - 1 - i);
        let lo = i - h;
        let hi = i + h + 1;
        let ones: usize = track[lo..hi].iter().map(|&v| v as usize).sum();
        out[i] = u8::from(2 * ones > hi - lo);
    }
    out
}

/// Majority smoothing over a centered window of `width` frames.
///
/// Edge windows shrink symmetrically. Passes repeat until the track is
/// stable, so applying the filter twice equals applying it once.
pub fn median_smooth(track: &[u8], width: usize) -> Result<Vec<u8>> {
    if width == 0 || width % 2 == 0 {
        return Err(CoreError::InvalidArgument(format!(
            "median width must be odd and >= 1, got {width}"
        )));
    }
    if track.iter().any(|&v| v > 1) {
        return Err(CoreError::InvalidArgument(
            "median_smooth input must be binary (0/1)".into(),
        ));
    }
    if width == 1 || track.len() <= 1 {
        return Ok(track.to_vec());
    }
    let half = width / 2;
    let mut current = track.to_vec();
    // A pass can re-expose single-frame islands, so iterate to a fixed
    // point; binary majority passes stabilize well within `len` rounds.
    for _ in 0..=track.len() {
        let next = majority_pass(&current, half);
        if next == current {
            break;
        }
        current = next;
    }
    Ok(current)
}

/// Run-length filter: 1-runs shorter than `min_len` are cleared, then interior
/// 0-gaps shorter than `min_len` (strictly between surviving 1-runs) are filled.
pub fn min_duration_filter(track: &[u8], min_len: usize) -> Result<Vec<u8>> {
    if min_len == 0 {
        return Err(CoreError::InvalidArgument("min_len must be >= 1".into()));
    }
    if track.iter().any(|&v| v > 1) {
        return Err(CoreError::InvalidArgument(
            "min_duration_filter input must be binary (0/1)".into(),
        ));
    }
    if min_len == 1 || track.is_empty() {
        return Ok(track.to_vec());
    }

    let n = track.len();
    let mut out = track.to_vec();

    // Phase 1: clear short 1-runs.
    let mut i = 0;
    while i < n {
        if out[i] == 1 {
            let start = i;
            while i < n && out[i] == 1 {
                i += 1;
            }
            if i - start < min_len {
                out[start..i].fill(0);
            }
        } else {
            i += 1;
        }
    }

    // Phase 2: fill short 0-gaps strictly between 1-runs.
    let mut i = 0;
    while i < n {
        if out[i] == 0 {
            let start = i;
            while i < n && out[i] == 0 {
                i += 1;
            }
            let bounded_left = start > 0;
            let bounded_right = i < n;
            if bounded_left && bounded_right && i - start < min_len {
                out[start..i].fill(1);
            }
        } else {
            i += 1;
        }
    }

    Ok(out)
}

/// Prediction/label file formats shared with the CLI.
pub mod files {
    use super::*;

    /// Writes EMI predictions: `sample_id,i0,i1,i2,i3,i4,i5` per line.
    pub fn write_emi_predictions(
        rows: &[(String, [f64; NUM_EMOTIONS])],
        path: impl AsRef<Path>,
    ) -> Result<()> {
        let mut text = String::new();
        for (id, vals) in rows {
            text.push_str(id);
            for v in vals {
                text.push_str(&format!(",{v}"));
            }
            text.push('\n');
        }
        fs::write(path.as_ref(), text).map_err(|e| CoreError::io(path.as_ref(), e))
    }

    /// Reads EMI predictions or labels in the same format.
    pub fn read_emi_predictions(path: impl AsRef<Path>) -> Result<Vec<(String, [f64; NUM_EMOTIONS])>> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
        let mut rows = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != NUM_EMOTIONS + 1 {
                return Err(CoreError::CorruptFile {
                    path: path.to_path_buf(),
                    detail: format!("line {}: expected id plus {NUM_EMOTIONS} values", ln + 1),
                });
            }
            let mut vals = [0.0; NUM_EMOTIONS];
            for (slot, raw) in vals.iter_mut().zip(&parts[1..]) {
                *slot = raw.parse().map_err(|e| CoreError::CorruptFile {
                    path: path.to_path_buf(),
                    detail: format!("line {}: {e}", ln + 1),
                })?;
            }
            rows.push((parts[0].to_string(), vals));
        }
        Ok(rows)
    }

    /// Writes BAH predictions: `frame_index,probability` per line.
    pub fn write_bah_predictions(probs: &[f64], path: impl AsRef<Path>) -> Result<()> {
        let mut text = String::new();
        for (i, p) in probs.iter().enumerate() {
            text.push_str(&format!("{i},{p}\n"));
        }
        fs::write(path.as_ref(), text).map_err(|e| CoreError::io(path.as_ref(), e))
    }

    /// Reads BAH predictions, requiring contiguous frame indices from 0.
    pub fn read_bah_predictions(path: impl AsRef<Path>) -> Result<Vec<f64>> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
        let mut rows: Vec<(usize, f64)> = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (idx, prob) = line.split_once(',').ok_or_else(|| CoreError::CorruptFile {
                path: path.to_path_buf(),
                detail: format!("line {}: expected frame_index,probability", ln + 1),
            })?;
            let idx: usize = idx.parse().map_err(|e| CoreError::CorruptFile {
                path: path.to_path_buf(),
                detail: format!("line {}: {e}", ln + 1),
            })?;
            let prob: f64 = prob.parse().map_err(|e| CoreError::CorruptFile {
                path: path.to_path_buf(),
                detail: format!("line {}: {e}", ln + 1),
            })?;
            rows.push((idx, prob));
        }
        rows.sort_by_key(|&(i, _)| i);
        for (expected, &(idx, _)) in rows.iter().enumerate() {
            if idx != expected {
                return Err(CoreError::CorruptFile {
                    path: path.to_path_buf(),
                    detail: format!("frame indices must cover 0..n contiguously; missing {expected}"),
                });
            }
        }
        Ok(rows.into_iter().map(|(_, p)| p).collect())
    }

    /// Writes BAH labels: one 0/1 per line, frame order.
    pub fn write_bah_labels_text(labels: &[u8], path: impl AsRef<Path>) -> Result<()> {
        let mut text = String::new();
        for l in labels {
            text.push_str(&format!("{l}\n"));
        }
        fs::write(path.as_ref(), text).map_err(|e| CoreError::io(path.as_ref(), e))
    }

    /// Reads BAH labels: one 0/1 per line.
    pub fn read_bah_labels_text(path: impl AsRef<Path>) -> Result<Vec<u8>> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
        text.lines()
            .filter(|l| !l.is_empty())
            .enumerate()
            .map(|(ln, line)| {
                line.trim().parse::<u8>().ok().filter(|&v| v <= 1).ok_or_else(|| {
                    CoreError::CorruptFile {
                        path: path.to_path_buf(),
                        detail: format!("line {}: labels must be 0 or 1", ln + 1),
                    }
                })
            })
            .collect()
    }
}
