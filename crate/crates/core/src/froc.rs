//! Free-response ROC: sensitivity at fixed false-positive rates per image.
//!
//! Each image contributes a [`DetectionRecord`]: its scored detections,
//! each flagged true or false positive, plus the number of ground-truth
//! positives in that image. For a false-positive budget `L` (FPs per
//! image), the sensitivity is the best recall achievable by any score
//! threshold whose false positives average at most `L` per image.
//!
//! # Records file format
//!
//! [`parse_records`] reads a line-oriented UTF-8 format. `#` starts a
//! comment, blank lines are ignored:
//!
//! ```text
//! image <n_positives>
//! det <score> <tp|fp>
//! ```
//!
//! Every `det` line belongs to the most recent `image` line.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FrocError {
    #[error("no detection records supplied")]
    NoRecords,
    #[error("records contain no ground-truth positives")]
    NoPositives,
    #[error("detection score must be finite, got {0}")]
    NonFiniteScore(f64),
    #[error("false-positive level must be non-negative and finite, got {0}")]
    BadLevel(f64),
    #[error("malformed records file at line {line}: {reason}")]
    BadRecordsFile { line: usize, reason: String },
}

/// One scored detection and whether it matched a ground-truth positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub score: f64,
    pub is_true_positive: bool,
}

/// Scored detections of one image plus its ground-truth positive count.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectionRecord {
    pub detections: Vec<Detection>,
    pub n_positives: usize,
}

/// FROC evaluation result.
#[derive(Debug, Clone, PartialEq)]
pub struct FrocResult {
    /// Requested levels and the sensitivity at each.
    pub sensitivities: Vec<(f64, f64)>,
    /// Mean sensitivity over the standard levels {0.5, 1, 2, 4}.
    pub avg: f64,
}

/// The standard reporting levels whose mean is the summary score.
pub const AVG_LEVELS: [f64; 4] = [0.5, 1.0, 2.0, 4.0];

/// Sensitivity at each requested FPs-per-image level, plus the average
/// over [`AVG_LEVELS`].
///
/// For each level the score threshold sweeps over all detections; the
/// reported value is the highest recall whose false-positive count,
/// averaged over images, stays within the level.
pub fn froc_sensitivity(
    records: &[DetectionRecord],
    fp_levels: &[f64],
) -> Result<FrocResult, FrocError> {
    if records.is_empty() {
        return Err(FrocError::NoRecords);
    }
    let total_positives: usize = records.iter().map(|r| r.n_positives).sum();
    if total_positives == 0 {
        return Err(FrocError::NoPositives);
    }
    for level in fp_levels.iter().chain(AVG_LEVELS.iter()) {
        if !(level.is_finite() && *level >= 0.0) {
            return Err(FrocError::BadLevel(*level));
        }
    }

    let mut detections: Vec<Detection> = Vec::new();
    for record in records {
        for det in &record.detections {
            if !det.score.is_finite() {
                return Err(FrocError::NonFiniteScore(det.score));
            }
            detections.push(*det);
        }
    }
    // Descending by score; detections sharing a score enter together.
    detections.sort_by(|a, b| b.score.total_cmp(&a.score));

    // Operating points after each distinct-score group: (fp_per_image, recall).
    let n_images = records.len() as f64;
    let mut points = Vec::with_capacity(detections.len() + 1);
    points.push((0.0, 0.0));
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < detections.len() {
        let score = detections[i].score;
        while i < detections.len() && detections[i].score == score {
            if detections[i].is_true_positive {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / n_images, tp as f64 / total_positives as f64));
    }

    let sensitivity_at = |level: f64| -> f64 {
        points
            .iter()
            .filter(|(fp_rate, _)| *fp_rate <= level)
            .map(|&(_, recall)| recall)
            .fold(0.0, f64::max)
    };

    let sensitivities = fp_levels
        .iter()
        .map(|&level| (level, sensitivity_at(level)))
        .collect();
    let avg = AVG_LEVELS.iter().map(|&l| sensitivity_at(l)).sum::<f64>() / AVG_LEVELS.len() as f64;
    Ok(FrocResult { sensitivities, avg })
}

/// Parses the records file format described in the module docs.
pub fn parse_records(text: &str) -> Result<Vec<DetectionRecord>, FrocError> {
    let mut records: Vec<DetectionRecord> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let bad = |reason: &str| FrocError::BadRecordsFile {
            line: idx + 1,
            reason: reason.to_string(),
        };
        match fields[0] {
            "image" => {
                if fields.len() != 2 {
                    return Err(bad("expected `image <n_positives>`"));
                }
                let n_positives = fields[1]
                    .parse()
                    .map_err(|_| bad("bad positive count"))?;
                records.push(DetectionRecord {
                    detections: Vec::new(),
                    n_positives,
                });
            }
            "det" => {
                if fields.len() != 3 {
                    return Err(bad("expected `det <score> <tp|fp>`"));
                }
                let score: f64 = fields[1].parse().map_err(|_| bad("bad score"))?;
                if !score.is_finite() {
                    return Err(bad("score must be finite"));
                }
                let is_true_positive = match fields[2] {
                    "tp" => true,
                    "fp" => false,
                    _ => return Err(bad("flag must be tp or fp")),
                };
                let record = records
                    .last_mut()
                    .ok_or_else(|| bad("det line before any image line"))?;
                record.detections.push(Detection {
                    score,
                    is_true_positive,
                });
            }
            other => {
                return Err(bad(&format!("unknown directive {other:?}")));
            }
        }
    }
    Ok(records)
}
