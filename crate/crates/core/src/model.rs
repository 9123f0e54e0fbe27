//! Shared domain types and dataset record schemas.
//!
//! Every record type here serializes to a single line of newline-delimited
//! JSON with snake_case keys matching the field names.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Opening and closing tags of the rendered SFT target.
pub const LOCATE_OPEN: &str = "<locate>";
pub const LOCATE_CLOSE: &str = "</locate>";
pub const ANSWER_OPEN: &str = "<answer>";
pub const ANSWER_CLOSE: &str = "</answer>";

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("empty clip sequence")]
    Empty,
    #[error("clips belong to more than one video ({0} and {1})")]
    MixedVideos(String, String),
    #[error("clip {index} has an invalid span [{start_s}, {end_s})")]
    InvalidSpan {
        index: usize,
        start_s: f64,
        end_s: f64,
    },
    #[error("clip {next} starts at {next_start_s}s before clip {prev} ends at {prev_end_s}s")]
    Overlap {
        prev: usize,
        next: usize,
        prev_end_s: f64,
        next_start_s: f64,
    },
    #[error("clip indices are not contiguous: expected {expected}, found {found}")]
    Gap { expected: usize, found: usize },
    #[error("rationale must not be empty")]
    EmptyRationale,
    #[error("invalid QA pair: {0}")]
    InvalidQa(String),
    #[error("alpha {alpha} outside [0, {m_trials}]")]
    AlphaRange { alpha: u32, m_trials: u32 },
}

/// A temporally contiguous segment of one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clip {
    pub video_id: String,
    pub index: usize,
    pub start_s: f64,
    pub end_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
}

impl Clip {
    pub fn new(video_id: impl Into<String>, index: usize, start_s: f64, end_s: f64) -> Self {
        Self {
            video_id: video_id.into(),
            index,
            start_s,
            end_s,
            embedding: None,
            caption: None,
        }
    }

    pub fn duration(&self) -> f64 {
        self.end_s - self.start_s
    }
}

/// Sorts clips by index and checks the sequence invariants: one video, valid
/// spans, indices exactly `0..N`, and ordered non-overlapping intervals.
pub fn validate_clip_sequence(mut clips: Vec<Clip>) -> Result<Vec<Clip>, ModelError> {
    let first = clips.first().ok_or(ModelError::Empty)?;
    let video_id = first.video_id.clone();
    if let Some(other) = clips.iter().find(|c| c.video_id != video_id) {
        return Err(ModelError::MixedVideos(video_id, other.video_id.clone()));
    }
    clips.sort_by_key(|c| c.index);
    for (expected, clip) in clips.iter().enumerate() {
        if clip.index != expected {
            return Err(ModelError::Gap {
                expected,
                found: clip.index,
            });
        }
        let finite = clip.start_s.is_finite() && clip.end_s.is_finite();
        if !finite || clip.start_s < 0.0 || clip.end_s <= clip.start_s {
            return Err(ModelError::InvalidSpan {
                index: clip.index,
                start_s: clip.start_s,
                end_s: clip.end_s,
            });
        }
    }
    for pair in clips.windows(2) {
        if pair[1].start_s < pair[0].end_s {
            return Err(ModelError::Overlap {
                prev: pair[0].index,
                next: pair[1].index,
                prev_end_s: pair[0].end_s,
                next_start_s: pair[1].start_s,
            });
        }
    }
    Ok(clips)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QaType {
    MultipleChoice,
    OpenEnded,
    Numerical,
}

/// One labeled choice of a multiple-choice question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerOption {
    pub label: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaPair {
    pub question: String,
    pub answer: String,
    pub qa_type: QaType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<AnswerOption>>,
}

impl QaPair {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.question.trim().is_empty() {
            return Err(ModelError::InvalidQa("empty question".into()));
        }
        if self.qa_type != QaType::MultipleChoice {
            return Ok(());
        }
        let options = match &self.options {
            Some(o) if !o.is_empty() => o,
            _ => {
                return Err(ModelError::InvalidQa(
                    "multiple-choice question without options".into(),
                ))
            }
        };
        for (i, option) in options.iter().enumerate() {
            let expected = option_label(i);
            if option.label != expected {
                return Err(ModelError::InvalidQa(format!(
                    "option {i} labeled {:?}, expected {expected:?}",
                    option.label
                )));
            }
        }
        let hits = options.iter().filter(|o| o.label == self.answer).count();
        if hits != 1 {
            return Err(ModelError::InvalidQa(format!(
                "answer {:?} is not exactly one option label",
                self.answer
            )));
        }
        Ok(())
    }

    /// Question text as shown to models: the question followed by one
    /// `"<label>. <text>"` line per option.
    pub fn question_with_options(&self) -> String {
        let mut out = self.question.clone();
        if let Some(options) = &self.options {
            for option in options {
                out.push('\n');
                out.push_str(&option.label);
                out.push_str(". ");
                out.push_str(&option.text);
            }
        }
        out
    }
}

/// `0 -> "A"`, `1 -> "B"`, ... `25 -> "Z"`, then `"AA"`, `"AB"`, ...
pub fn option_label(index: usize) -> String {
    let mut n = index;
    let mut label = Vec::new();
    loop {
        label.push(b'A' + (n % 26) as u8);
        if n < 26 {
            break;
        }
        n = n / 26 - 1;
    }
    label.reverse();
    String::from_utf8(label).expect("ascii")
}

/// Stable identifier shared by every pipeline stage.
pub fn sample_id(video_id: &str, qa_index: usize) -> String {
    format!("{video_id}#{qa_index}")
}

/// QA record as ingested from the QA input file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaRecord {
    pub video_id: String,
    #[serde(flatten)]
    pub qa: QaPair,
}

/// Assigns `<video_id>#<qa_index>` ids, where `qa_index` counts the QA
/// records of each video in file order.
pub fn assign_sample_ids(records: &[QaRecord]) -> Vec<String> {
    let mut seen: std::collections::HashMap<&str, usize> = std::collections::HashMap::new();
    records
        .iter()
        .map(|r| {
            let n = seen.entry(r.video_id.as_str()).or_insert(0);
            let id = sample_id(&r.video_id, *n);
            *n += 1;
            id
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftSample {
    pub id: String,
    pub video_id: String,
    pub question: String,
    pub answer: String,
    pub rationale: String,
    pub target: String,
    pub prompt: String,
}

/// Renders the supervised target: the locate block, one newline, the answer block.
pub fn render_target(rationale: &str, answer: &str) -> Result<String, ModelError> {
    if rationale.is_empty() {
        return Err(ModelError::EmptyRationale);
    }
    Ok(format!(
        "{LOCATE_OPEN}{rationale}{LOCATE_CLOSE}\n{ANSWER_OPEN}{answer}{ANSWER_CLOSE}"
    ))
}

/// Reasoning demand `e^(-alpha/M)`.
pub fn reasoning_demand(alpha: u32, m_trials: u32) -> f64 {
    (-(alpha as f64) / m_trials as f64).exp()
}

/// Difficulty score `1 - alpha/M`.
pub fn difficulty(alpha: u32, m_trials: u32) -> f64 {
    1.0 - alpha as f64 / m_trials as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RlSample {
    pub id: String,
    pub video_id: String,
    pub question: String,
    pub options: Vec<AnswerOption>,
    pub answer: String,
    pub alpha: u32,
    pub m_trials: u32,
    pub reasoning_demand: f64,
    pub difficulty: f64,
}

impl RlSample {
    pub fn new(
        id: String,
        video_id: String,
        qa: &QaPair,
        alpha: u32,
        m_trials: u32,
    ) -> Result<Self, ModelError> {
        if m_trials == 0 || alpha > m_trials {
            return Err(ModelError::AlphaRange { alpha, m_trials });
        }
        Ok(Self {
            id,
            video_id,
            question: qa.question.clone(),
            options: qa.options.clone().unwrap_or_default(),
            answer: qa.answer.clone(),
            alpha,
            m_trials,
            reasoning_demand: reasoning_demand(alpha, m_trials),
            difficulty: difficulty(alpha, m_trials),
        })
    }

    /// True when the stored demand and difficulty agree with `alpha`/`m_trials`
    /// within `tol`.
    pub fn is_consistent(&self, tol: f64) -> bool {
        self.m_trials >= 1
            && self.alpha <= self.m_trials
            && (self.reasoning_demand - reasoning_demand(self.alpha, self.m_trials)).abs() <= tol
            && (self.difficulty - difficulty(self.alpha, self.m_trials)).abs() <= tol
    }

    pub fn qa(&self) -> QaPair {
        QaPair {
            question: self.question.clone(),
            answer: self.answer.clone(),
            qa_type: QaType::MultipleChoice,
            options: Some(self.options.clone()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reward::extract_answer;

    fn clip(index: usize, start_s: f64, end_s: f64) -> Clip {
        Clip::new("v", index, start_s, end_s)
    }

    #[test]
    fn well_formed_sequence_is_accepted() {
        let clips = vec![clip(0, 0.0, 5.0), clip(1, 5.0, 9.0)];
        assert_eq!(validate_clip_sequence(clips.clone()).unwrap(), clips);
    }

    #[test]
    fn sequence_is_sorted_by_index() {
        let clips = vec![clip(1, 5.0, 9.0), clip(0, 0.0, 5.0)];
        let out = validate_clip_sequence(clips).unwrap();
        assert_eq!(out[0].index, 0);
        assert_eq!(out[1].index, 1);
    }

    #[test]
    fn overlap_is_rejected() {
        let err = validate_clip_sequence(vec![clip(0, 0.0, 5.0), clip(1, 4.0, 9.0)]).unwrap_err();
        assert!(matches!(
            err,
            ModelError::Overlap {
                prev: 0,
                next: 1,
                ..
            }
        ));
    }

    #[test]
    fn gap_is_rejected() {
        let err = validate_clip_sequence(vec![clip(0, 0.0, 5.0), clip(2, 5.0, 9.0)]).unwrap_err();
        assert_eq!(
            err,
            ModelError::Gap {
                expected: 1,
                found: 2
            }
        );
    }

    #[test]
    fn empty_and_mixed_sequences_are_rejected() {
        assert_eq!(
            validate_clip_sequence(vec![]).unwrap_err(),
            ModelError::Empty
        );
        let mut other = clip(1, 5.0, 9.0);
        other.video_id = "w".into();
        assert!(matches!(
            validate_clip_sequence(vec![clip(0, 0.0, 5.0), other]),
            Err(ModelError::MixedVideos(..))
        ));
        assert!(matches!(
            validate_clip_sequence(vec![clip(0, 3.0, 3.0)]),
            Err(ModelError::InvalidSpan { .. })
        ));
    }

    #[test]
    fn target_rendering() {
        assert_eq!(
            render_target("I scan… the key clip.", "B").unwrap(),
            "<locate>I scan… the key clip.</locate>\n<answer>B</answer>"
        );
        assert_eq!(render_target("", "B"), Err(ModelError::EmptyRationale));
        assert_eq!(extract_answer(&render_target("r", "C").unwrap()), "C");
    }

    #[test]
    fn option_labels() {
        assert_eq!(option_label(0), "A");
        assert_eq!(option_label(3), "D");
        assert_eq!(option_label(25), "Z");
        assert_eq!(option_label(26), "AA");
    }

    fn mc(answer: &str) -> QaPair {
        QaPair {
            question: "What is on the table?".into(),
            answer: answer.into(),
            qa_type: QaType::MultipleChoice,
            options: Some(vec![
                AnswerOption {
                    label: "A".into(),
                    text: "a cup".into(),
                },
                AnswerOption {
                    label: "B".into(),
                    text: "a phone".into(),
                },
            ]),
        }
    }

    #[test]
    fn multiple_choice_answer_must_be_a_label() {
        assert!(mc("B").validate().is_ok());
        assert!(mc("C").validate().is_err());
        let mut no_options = mc("A");
        no_options.options = None;
        assert!(no_options.validate().is_err());
        assert_eq!(
            mc("A").question_with_options(),
            "What is on the table?\nA. a cup\nB. a phone"
        );
    }

    #[test]
    fn sample_ids_count_per_video() {
        let rec = |v: &str| QaRecord {
            video_id: v.into(),
            qa: mc("A"),
        };
        let ids = assign_sample_ids(&[rec("x"), rec("y"), rec("x")]);
        assert_eq!(ids, vec!["x#0", "y#0", "x#1"]);
    }

    #[test]
    fn rl_sample_fields_follow_alpha() {
        let s = RlSample::new("v#0".into(), "v".into(), &mc("A"), 4, 8).unwrap();
        assert_eq!(s.difficulty, 0.5);
        assert!((s.reasoning_demand - (-0.5f64).exp()).abs() < 1e-15);
        assert!(s.is_consistent(1e-12));
        assert!((s.reasoning_demand - (s.difficulty - 1.0).exp()).abs() < 1e-15);
        assert!(RlSample::new("v#0".into(), "v".into(), &mc("A"), 9, 8).is_err());
    }

    #[test]
    fn records_serialize_to_one_line() {
        let s = RlSample::new("v#0".into(), "v".into(), &mc("A"), 3, 8).unwrap();
        let line = serde_json::to_string(&s).unwrap();
        assert!(!line.contains('\n'));
        let back: RlSample = serde_json::from_str(&line).unwrap();
        assert_eq!(back, s);
        assert!(back.is_consistent(1e-12));
    }
}
