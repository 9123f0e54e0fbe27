//! Clip construction from precomputed shot boundaries.
//!
//! Shots arrive with one embedding each. A single left-to-right pass keeps a
//! running clip and absorbs the next shot whenever the cosine similarity
//! between the running clip's embedding and the shot's embedding reaches
//! `tau`. The running embedding is the duration-weighted mean of the absorbed
//! shots' unit embeddings, re-normalized.
//!
//! Whether boundary frames or whole-shot means are compared is left to the
//! producer of the embeddings: one vector per shot is expected.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Clip;

pub const DEFAULT_TAU: f64 = 0.85;

#[derive(Debug, Error, PartialEq)]
pub enum SegmentationError {
    #[error("video {0} has no shots")]
    EmptyInput(String),
    #[error("video {video_id}: {boundaries} boundaries need {expected} embeddings, got {got}")]
    ShotCountMismatch {
        video_id: String,
        boundaries: usize,
        expected: usize,
        got: usize,
    },
    #[error("video {video_id}: embedding {shot} has dimension {got}, expected {expected}")]
    DimensionMismatch {
        video_id: String,
        shot: usize,
        expected: usize,
        got: usize,
    },
    #[error("video {video_id}: embedding {shot} has zero norm")]
    ZeroVector { video_id: String, shot: usize },
    #[error("video {video_id}: boundaries must start at 0 and strictly increase")]
    InvalidBoundaries { video_id: String },
    #[error("tau must lie in (0, 1], got {0}")]
    InvalidTau(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotBoundarySet {
    pub video_id: String,
    pub boundaries_s: Vec<f64>,
    pub embeddings: Vec<Vec<f64>>,
}

impl ShotBoundarySet {
    pub fn shot_count(&self) -> usize {
        self.boundaries_s.len().saturating_sub(1)
    }

    pub fn validate(&self) -> Result<(), SegmentationError> {
        let video_id = || self.video_id.clone();
        if self.boundaries_s.len() < 2 {
            return Err(SegmentationError::EmptyInput(video_id()));
        }
        let starts_at_zero = self.boundaries_s[0] == 0.0;
        let increasing = self
            .boundaries_s
            .windows(2)
            .all(|w| w[0].is_finite() && w[1].is_finite() && w[1] > w[0]);
        if !starts_at_zero || !increasing {
            return Err(SegmentationError::InvalidBoundaries {
                video_id: video_id(),
            });
        }
        if self.embeddings.len() != self.shot_count() {
            return Err(SegmentationError::ShotCountMismatch {
                video_id: video_id(),
                boundaries: self.boundaries_s.len(),
                expected: self.shot_count(),
                got: self.embeddings.len(),
            });
        }
        let dim = self.embeddings[0].len();
        for (shot, e) in self.embeddings.iter().enumerate() {
            if e.len() != dim || dim == 0 {
                return Err(SegmentationError::DimensionMismatch {
                    video_id: video_id(),
                    shot,
                    expected: dim.max(1),
                    got: e.len(),
                });
            }
            if norm(e) == 0.0 || !norm(e).is_finite() {
                return Err(SegmentationError::ZeroVector {
                    video_id: video_id(),
                    shot,
                });
            }
        }
        Ok(())
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let n = norm(v);
    v.iter().map(|x| x / n).collect()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot / (norm(a) * norm(b))
}

struct Running {
    start_s: f64,
    end_s: f64,
    // Sum of duration * unit embedding over absorbed shots.
    weighted: Vec<f64>,
}

impl Running {
    fn embedding(&self) -> Vec<f64> {
        normalized(&self.weighted)
    }
}

/// Merges adjacent similar shots into clips indexed `0..N`.
pub fn stitch(shots: &ShotBoundarySet, tau: f64) -> Result<Vec<Clip>, SegmentationError> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(SegmentationError::InvalidTau(tau));
    }
    shots.validate()?;

    let mut done: Vec<Running> = Vec::new();
    let mut current: Option<Running> = None;
    for (i, raw) in shots.embeddings.iter().enumerate() {
        let (start_s, end_s) = (shots.boundaries_s[i], shots.boundaries_s[i + 1]);
        let unit = normalized(raw);
        let duration = end_s - start_s;
        match current.as_mut() {
            Some(run) if cosine(&run.embedding(), &unit) >= tau => {
                run.end_s = end_s;
                for (w, u) in run.weighted.iter_mut().zip(&unit) {
                    *w += duration * u;
                }
            }
            _ => {
                if let Some(run) = current.take() {
                    done.push(run);
                }
                current = Some(Running {
                    start_s,
                    end_s,
                    weighted: unit.iter().map(|u| duration * u).collect(),
                });
            }
        }
    }
    done.extend(current);

    Ok(done
        .into_iter()
        .enumerate()
        .map(|(index, run)| {
            let mut clip = Clip::new(shots.video_id.clone(), index, run.start_s, run.end_s);
            clip.embedding = Some(run.embedding());
            clip
        })
        .collect())
}
