//! Tree-of-cue SFT data construction.
//!
//! Per sample, in order: caption every clip, ask the LLM for the key clips,
//! backtrack the cue tree into a compilation chain, caption each compilation
//! as one localization step, check that the final cue suffices for the
//! answer, then have the LLM narrate the steps and strip the step markers.
//!
//! Each stage's output is persisted per sample id under the state directory
//! before the next stage starts, so an interrupted run resumes where it
//! stopped and a finished sample costs no backend calls on re-run.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::Config;
use crate::cue_tree::{is_strict_chain, Compilation, CueTree};
use crate::gateway::{
    parse_index_array, parse_index_array_lenient, parse_yes_no, render_prompt, step_numbers,
    strip_step_markers, task_instruction, ChatRequest, Gateway, MediaRef, Message, ModelRole,
    PromptTemplate,
};
use crate::model::{render_target, validate_clip_sequence, Clip, QaPair, QaRecord, SftSample};
use crate::records::{read_records, to_line, write_records, RecordError};
use crate::report::Report;

#[derive(Debug, Error)]
pub enum SftError {
    #[error(transparent)]
    Records(#[from] RecordError),
    #[error("state file {path}: {reason}")]
    State { path: PathBuf, reason: String },
    #[error("worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Captioned,
    Selected,
    Compiled,
    CueCaptioned,
    Filtered,
    Summarized,
    Emitted,
    Rejected,
}

impl Stage {
    pub fn is_terminal(self) -> bool {
        matches!(self, Stage::Emitted | Stage::Rejected)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    MissingClips,
    InvalidClips,
    InvalidQa,
    CaptionFailed,
    EmptyCaption,
    SelectionFailed,
    SelectionUnparseable,
    SelectionOutOfRange,
    SelectionEmpty,
    CueCaptionFailed,
    EmptyCueCaption,
    FilterFailed,
    FilterUnparseable,
    InsufficientCues,
    RationaleFailed,
    StepCountMismatch,
    EmptyRationale,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit variant");
        f.write_str(s.as_str().expect("string"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub reason: RejectReason,
    pub detail: String,
}

impl Rejection {
    fn new(reason: RejectReason, detail: impl fmt::Display) -> Self {
        Self {
            reason,
            detail: detail.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SftSettings {
    pub temperature: f64,
    pub max_tokens: u32,
    pub strict_parsing: bool,
    pub parallelism: usize,
    pub state_dir: Option<PathBuf>,
}

impl Default for SftSettings {
    fn default() -> Self {
        Self::from(&Config::default())
    }
}

impl From<&Config> for SftSettings {
    fn from(c: &Config) -> Self {
        Self {
            temperature: c.temperature,
            max_tokens: c.max_tokens,
            strict_parsing: c.strict_parsing,
            parallelism: c.parallelism,
            state_dir: c.state_dir.clone(),
        }
    }
}

impl SftSettings {
    fn request(&self, role: ModelRole, message: Message) -> ChatRequest {
        let mut r = ChatRequest::new(role, message);
        r.temperature = self.temperature;
        r.max_tokens = self.max_tokens;
        r
    }
}

fn render(template: PromptTemplate, bindings: &[(&str, &str)]) -> String {
    // Templates and binding names are fixed in this module.
    render_prompt(template, bindings).expect("all placeholders bound")
}

fn clip_media(clip: &Clip) -> MediaRef {
    MediaRef {
        video_id: clip.video_id.clone(),
        span_s: Some((clip.start_s, clip.end_s)),
    }
}

/// Captions every clip with the MLLM, preserving order.
pub fn caption_clips(
    gateway: &Gateway,
    settings: &SftSettings,
    clips: &[Clip],
) -> Result<Vec<Clip>, Rejection> {
    let prompt = render(PromptTemplate::ClipCaption, &[]);
    clips
        .iter()
        .map(|clip| {
            let message = Message::user(prompt.clone()).with_media(vec![clip_media(clip)]);
            let reply = gateway
                .complete(&settings.request(ModelRole::Mllm, message))
                .map_err(|e| {
                    Rejection::new(
                        RejectReason::CaptionFailed,
                        format!("clip {}: {e}", clip.index),
                    )
                })?;
            let caption = reply.trim();
            if caption.is_empty() {
                return Err(Rejection::new(
                    RejectReason::EmptyCaption,
                    format!("clip {}", clip.index),
                ));
            }
            let mut clip = clip.clone();
            clip.caption = Some(caption.to_string());
            Ok(clip)
        })
        .collect()
}

#[derive(Serialize)]
struct ClipDescription<'a> {
    index: usize,
    description: &'a str,
}

#[derive(Serialize)]
struct SelectionPayload<'a> {
    num_clips: usize,
    clips: Vec<ClipDescription<'a>>,
    question: &'a str,
    answer: &'a str,
}

/// JSON structure bound to the selection prompt's clip descriptions.
pub fn clip_descriptions_json(clips: &[Clip], question: &str, answer: &str) -> String {
    let payload = SelectionPayload {
        num_clips: clips.len(),
        clips: clips
            .iter()
            .map(|c| ClipDescription {
                index: c.index,
                description: c.caption.as_deref().unwrap_or(""),
            })
            .collect(),
        question,
        answer,
    };
    serde_json::to_string(&payload).expect("payload serializes")
}

pub fn selection_prompt(clips: &[Clip], qa: &QaPair) -> String {
    let question = qa.question_with_options();
    let descriptions = clip_descriptions_json(clips, &question, &qa.answer);
    render(
        PromptTemplate::KeyClipSelection,
        &[
            ("Video Clip Descriptions", &descriptions),
            ("Question", &question),
            ("Answer", &qa.answer),
        ],
    )
}

/// Asks the LLM which clips are essential; returns validated leaf indices.
pub fn select_key_clips(
    gateway: &Gateway,
    settings: &SftSettings,
    clips: &[Clip],
    qa: &QaPair,
) -> Result<BTreeSet<usize>, Rejection> {
    let prompt = selection_prompt(clips, qa);
    let reply = gateway
        .complete(&settings.request(ModelRole::Llm, Message::user(prompt)))
        .map_err(|e| Rejection::new(RejectReason::SelectionFailed, e))?;
    let parsed = if settings.strict_parsing {
        parse_index_array(&reply)
    } else {
        parse_index_array(&reply).or_else(|_| parse_index_array_lenient(&reply))
    }
    .map_err(|e| Rejection::new(RejectReason::SelectionUnparseable, e))?;
    if parsed.is_empty() {
        return Err(Rejection::new(RejectReason::SelectionEmpty, reply.trim()));
    }
    if let Some(bad) = parsed.iter().find(|&&i| i < 0 || i as usize >= clips.len()) {
        return Err(Rejection::new(
            RejectReason::SelectionOutOfRange,
            format!("index {bad} with {} clips", clips.len()),
        ));
    }
    Ok(parsed.into_iter().map(|i| i as usize).collect())
}

/// Deduplicated compilation chain for the selected leaves.
pub fn compile_trajectory(n_clips: usize, selected: &BTreeSet<usize>) -> Vec<Compilation> {
    let tree = CueTree::build(n_clips).expect("validated clip sequences are non-empty");
    let chain = tree
        .backtrack(selected.iter().copied())
        .expect("selection validated against clip count")
        .compilations();
    debug_assert!(is_strict_chain(&chain));
    chain
}

pub fn cue_caption_prompt(qa: &QaPair) -> String {
    render(
        PromptTemplate::CueCaption,
        &[("Question", &qa.question_with_options())],
    )
}

/// Captions each compilation; the captions are the ordered cue descriptions.
pub fn caption_compilations(
    gateway: &Gateway,
    settings: &SftSettings,
    compilations: &[Compilation],
    clips: &[Clip],
    qa: &QaPair,
) -> Result<Vec<Compilation>, Rejection> {
    let prompt = cue_caption_prompt(qa);
    compilations
        .iter()
        .enumerate()
        .map(|(step, compilation)| {
            let media = compilation
                .clip_indices
                .iter()
                .map(|&i| clip_media(&clips[i]))
                .collect();
            let message = Message::user(prompt.clone()).with_media(media);
            let reply = gateway
                .complete(&settings.request(ModelRole::Mllm, message))
                .map_err(|e| {
                    Rejection::new(
                        RejectReason::CueCaptionFailed,
                        format!("step {}: {e}", step + 1),
                    )
                })?;
            let caption = reply.trim();
            if caption.is_empty() {
                return Err(Rejection::new(
                    RejectReason::EmptyCueCaption,
                    format!("step {}", step + 1),
                ));
            }
            Ok(Compilation {
                clip_indices: compilation.clip_indices.clone(),
                caption: Some(caption.to_string()),
            })
        })
        .collect()
}

pub fn filter_prompt(final_cue: &str, qa: &QaPair) -> String {
    render(
        PromptTemplate::LowQualityFilter,
        &[
            ("Question", &qa.question_with_options()),
            ("Answer", &qa.answer),
            ("Cues", final_cue),
        ],
    )
}

/// Whether the final cue suffices to derive the answer.
pub fn filter_low_quality(
    gateway: &Gateway,
    settings: &SftSettings,
    final_cue: &str,
    qa: &QaPair,
) -> Result<bool, Rejection> {
    let reply = gateway
        .complete(&settings.request(ModelRole::Llm, Message::user(filter_prompt(final_cue, qa))))
        .map_err(|e| Rejection::new(RejectReason::FilterFailed, e))?;
    parse_yes_no(&reply).map_err(|e| Rejection::new(RejectReason::FilterUnparseable, e))
}

/// `Step 1: <cue>` lines, one per localization step.
pub fn linearize_trajectory(cues: &[String]) -> String {
    cues.iter()
        .enumerate()
        .map(|(i, cue)| format!("Step {}: {cue}", i + 1))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn rationale_prompt(cues: &[String], qa: &QaPair) -> String {
    let trajectory = linearize_trajectory(cues);
    render(
        PromptTemplate::RationaleGeneration,
        &[
            ("Question", &qa.question_with_options()),
            ("Answer", &qa.answer),
            ("Reasoning Trajectory", &trajectory),
        ],
    )
}

/// Summarized rationale with its raw reply. The reply must carry exactly
/// `Step 1:` .. `Step n:` in order, one per cue.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rationale {
    pub raw: String,
    pub text: String,
}

pub fn summarize_rationale(
    gateway: &Gateway,
    settings: &SftSettings,
    cues: &[String],
    qa: &QaPair,
) -> Result<Rationale, Rejection> {
    let reply = gateway
        .complete(&settings.request(ModelRole::Llm, Message::user(rationale_prompt(cues, qa))))
        .map_err(|e| Rejection::new(RejectReason::RationaleFailed, e))?;
    if reply.trim().is_empty() {
        return Err(Rejection::new(RejectReason::EmptyRationale, "empty reply"));
    }
    let steps = step_numbers(&reply);
    let expected: Vec<u64> = (1..=cues.len() as u64).collect();
    if steps != expected {
        return Err(Rejection::new(
            RejectReason::StepCountMismatch,
            format!("expected steps {expected:?}, found {steps:?}"),
        ));
    }
    let text = strip_step_markers(&reply);
    if text.is_empty() {
        return Err(Rejection::new(
            RejectReason::EmptyRationale,
            "only step markers",
        ));
    }
    Ok(Rationale { raw: reply, text })
}

pub fn training_prompt(qa: &QaPair) -> String {
    render(
        PromptTemplate::TrainInfer,
        &[
            ("Question", &qa.question_with_options()),
            ("Task Instruction", task_instruction(qa.qa_type)),
        ],
    )
}

/// Persisted per-sample progress. Fields fill in as stages complete.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineState {
    pub sample_id: String,
    pub stage: Option<Stage>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub clips: Vec<Clip>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub selected: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub compilations: Vec<Compilation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale_raw: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record: Option<SftSample>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reject_reason: Option<RejectReason>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reject_detail: Option<String>,
}

impl PipelineState {
    pub fn new(sample_id: impl Into<String>) -> Self {
        Self {
            sample_id: sample_id.into(),
            stage: None,
            clips: Vec::new(),
            selected: Vec::new(),
            compilations: Vec::new(),
            rationale_raw: None,
            rationale: None,
            record: None,
            reject_reason: None,
            reject_detail: None,
        }
    }

    /// Moves to `next`. Stages only move forward and terminal stages are final.
    pub fn advance(&mut self, next: Stage) {
        assert!(
            self.stage.is_none_or(|s| !s.is_terminal() && s < next),
            "stage cannot move from {:?} to {next:?}",
            self.stage
        );
        self.stage = Some(next);
    }

    pub fn reject(&mut self, rejection: Rejection) {
        self.advance(Stage::Rejected);
        self.reject_reason = Some(rejection.reason);
        self.reject_detail = Some(rejection.detail);
    }
}

struct StateStore {
    dir: PathBuf,
}

impl StateStore {
    fn path(&self, sample_id: &str) -> PathBuf {
        let digest = hex::encode(Sha256::digest(sample_id.as_bytes()));
        self.dir.join(format!("{}.json", &digest[..20]))
    }

    fn load(&self, sample_id: &str) -> Result<Option<PipelineState>, SftError> {
        let path = self.path(sample_id);
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => {
                return Err(SftError::State {
                    path,
                    reason: e.to_string(),
                })
            }
        };
        let state: PipelineState = serde_json::from_str(&text).map_err(|e| SftError::State {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        if state.sample_id != sample_id {
            return Err(SftError::State {
                path,
                reason: format!("holds sample {:?}, expected {sample_id:?}", state.sample_id),
            });
        }
        Ok(Some(state))
    }

    fn save(&self, state: &PipelineState) -> Result<(), SftError> {
        let path = self.path(&state.sample_id);
        crate::records::atomic_write(&path, |w| {
            use std::io::Write;
            writeln!(w, "{}", to_line(state))
        })
        .map_err(SftError::from)
    }
}

/// One QA sample bound to its video's clips.
#[derive(Debug, Clone, PartialEq)]
pub struct SftInput {
    pub id: String,
    pub video_id: String,
    pub qa: QaPair,
}

/// Rejected-sample sidecar record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedSample {
    pub id: String,
    pub video_id: String,
    pub reason: RejectReason,
    pub detail: String,
}

struct Ctx<'a> {
    gateway: &'a Gateway,
    settings: &'a SftSettings,
    store: StateStore,
    clips: &'a BTreeMap<String, Vec<Clip>>,
}

impl Ctx<'_> {
    fn run_sample(&self, input: &SftInput) -> Result<PipelineState, SftError> {
        let mut state = self
            .store
            .load(&input.id)?
            .unwrap_or_else(|| PipelineState::new(input.id.clone()));
        while !state.stage.is_some_and(Stage::is_terminal) {
            if let Err(rejection) = self.step(input, &mut state) {
                log::info!(
                    "{} rejected: {} ({})",
                    input.id,
                    rejection.reason,
                    rejection.detail
                );
                state.reject(rejection);
            }
            self.store.save(&state)?;
        }
        Ok(state)
    }

    fn step(&self, input: &SftInput, state: &mut PipelineState) -> Result<(), Rejection> {
        let qa = &input.qa;
        match state.stage {
            None => {
                qa.validate()
                    .map_err(|e| Rejection::new(RejectReason::InvalidQa, e))?;
                let clips = self
                    .clips
                    .get(&input.video_id)
                    .ok_or_else(|| Rejection::new(RejectReason::MissingClips, &input.video_id))?;
                let clips = validate_clip_sequence(clips.clone())
                    .map_err(|e| Rejection::new(RejectReason::InvalidClips, e))?;
                state.clips = caption_clips(self.gateway, self.settings, &clips)?;
                state.advance(Stage::Captioned);
            }
            Some(Stage::Captioned) => {
                let selected = select_key_clips(self.gateway, self.settings, &state.clips, qa)?;
                state.selected = selected.into_iter().collect();
                state.advance(Stage::Selected);
            }
            Some(Stage::Selected) => {
                let selected = state.selected.iter().copied().collect();
                state.compilations = compile_trajectory(state.clips.len(), &selected);
                state.advance(Stage::Compiled);
            }
            Some(Stage::Compiled) => {
                state.compilations = caption_compilations(
                    self.gateway,
                    self.settings,
                    &state.compilations,
                    &state.clips,
                    qa,
                )?;
                state.advance(Stage::CueCaptioned);
            }
            Some(Stage::CueCaptioned) => {
                let final_cue = state
                    .compilations
                    .last()
                    .and_then(|c| c.caption.as_deref())
                    .unwrap_or_default();
                if !filter_low_quality(self.gateway, self.settings, final_cue, qa)? {
                    return Err(Rejection::new(
                        RejectReason::InsufficientCues,
                        "filter said no",
                    ));
                }
                state.advance(Stage::Filtered);
            }
            Some(Stage::Filtered) => {
                let cues: Vec<String> = state
                    .compilations
                    .iter()
                    .map(|c| c.caption.clone().unwrap_or_default())
                    .collect();
                let rationale = summarize_rationale(self.gateway, self.settings, &cues, qa)?;
                state.rationale_raw = Some(rationale.raw);
                state.rationale = Some(rationale.text);
                state.advance(Stage::Summarized);
            }
            Some(Stage::Summarized) => {
                let rationale = state.rationale.clone().unwrap_or_default();
                let target = render_target(&rationale, &qa.answer)
                    .map_err(|e| Rejection::new(RejectReason::EmptyRationale, e))?;
                state.record = Some(SftSample {
                    id: input.id.clone(),
                    video_id: input.video_id.clone(),
                    question: qa.question.clone(),
                    answer: qa.answer.clone(),
                    rationale,
                    target,
                    prompt: training_prompt(qa),
                });
                state.advance(Stage::Emitted);
            }
            Some(Stage::Emitted | Stage::Rejected) => unreachable!("terminal stage"),
        }
        Ok(())
    }
}

/// Groups clip records by video id.
pub fn group_clips(clips: Vec<Clip>) -> BTreeMap<String, Vec<Clip>> {
    let mut map: BTreeMap<String, Vec<Clip>> = BTreeMap::new();
    for clip in clips {
        map.entry(clip.video_id.clone()).or_default().push(clip);
    }
    map
}

pub fn inputs_from_records(records: &[QaRecord]) -> Vec<SftInput> {
    crate::model::assign_sample_ids(records)
        .into_iter()
        .zip(records)
        .map(|(id, r)| SftInput {
            id,
            video_id: r.video_id.clone(),
            qa: r.qa.clone(),
        })
        .collect()
}

pub fn rejected_path(output: &Path) -> PathBuf {
    sibling(output, "rejected")
}

pub fn default_state_dir(output: &Path) -> PathBuf {
    sibling(output, "state")
}

fn sibling(output: &Path, suffix: &str) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

/// Runs every sample to a terminal stage and writes the dataset (input
/// order) plus the rejected sidecar. Per-sample failures become rejections;
/// only I/O and state errors abort the run.
pub fn run_sft_pipeline(
    gateway: &Gateway,
    clips: &BTreeMap<String, Vec<Clip>>,
    inputs: &[SftInput],
    settings: &SftSettings,
    output: &Path,
) -> Result<Report, SftError> {
    let ctx = Ctx {
        gateway,
        settings,
        store: StateStore {
            dir: settings
                .state_dir
                .clone()
                .unwrap_or_else(|| default_state_dir(output)),
        },
        clips,
    };
    let calls_before = gateway.calls();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.parallelism.max(1))
        .build()
        .map_err(|e| SftError::Pool(e.to_string()))?;
    let states: Vec<PipelineState> = pool.install(|| {
        inputs
            .par_iter()
            .map(|input| ctx.run_sample(input))
            .collect::<Result<_, _>>()
    })?;

    let mut emitted = Vec::new();
    let mut rejected = Vec::new();
    let mut reasons: BTreeMap<String, usize> = BTreeMap::new();
    for (input, state) in inputs.iter().zip(&states) {
        match (&state.record, state.reject_reason) {
            (Some(record), _) => emitted.push(record.clone()),
            (None, Some(reason)) => {
                *reasons.entry(reason.to_string()).or_default() += 1;
                rejected.push(RejectedSample {
                    id: input.id.clone(),
                    video_id: input.video_id.clone(),
                    reason,
                    detail: state.reject_detail.clone().unwrap_or_default(),
                });
            }
            (None, None) => unreachable!("terminal state without record or reason"),
        }
    }
    write_records(output, &emitted)?;
    write_records(&rejected_path(output), &rejected)?;

    let mut report = Report::new("build-sft");
    report.push("samples", inputs.len());
    report.push("emitted", emitted.len());
    report.push("rejected", rejected.len());
    for (reason, count) in reasons {
        report.push(format!("rejected.{reason}"), count);
    }
    report.push("backend_calls", gateway.calls() - calls_before);
    Ok(report)
}

/// Reads clip and QA record files and runs the pipeline.
pub fn run_sft_from_files(
    gateway: &Gateway,
    clips_path: &Path,
    qa_path: &Path,
    settings: &SftSettings,
    output: &Path,
) -> Result<Report, SftError> {
    let clips = group_clips(read_records(clips_path)?);
    let qa: Vec<QaRecord> = read_records(qa_path)?;
    run_sft_pipeline(gateway, &clips, &inputs_from_records(&qa), settings, output)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stages_only_move_forward() {
        let mut s = PipelineState::new("v#0");
        s.advance(Stage::Captioned);
        s.advance(Stage::Selected);
        let r = std::panic::catch_unwind(move || {
            let mut s = s;
            s.advance(Stage::Captioned)
        });
        assert!(r.is_err());
    }

    #[test]
    fn rejected_is_terminal() {
        let mut s = PipelineState::new("v#0");
        s.reject(Rejection::new(RejectReason::CaptionFailed, "x"));
        let r = std::panic::catch_unwind(move || {
            let mut s = s;
            s.advance(Stage::Emitted)
        });
        assert!(r.is_err());
    }

    #[test]
    fn reasons_display_in_snake_case() {
        assert_eq!(
            RejectReason::InsufficientCues.to_string(),
            "insufficient_cues"
        );
        assert_eq!(
            RejectReason::SelectionOutOfRange.to_string(),
            "selection_out_of_range"
        );
    }

    #[test]
    fn trajectory_lines() {
        assert_eq!(
            linearize_trajectory(&["a".into(), "b".into()]),
            "Step 1: a\nStep 2: b"
        );
    }

    #[test]
    fn compile_trajectory_chain() {
        let chain = compile_trajectory(4, &[0, 2].into_iter().collect());
        let sets: Vec<_> = chain.iter().map(|c| c.clip_indices.clone()).collect();
        assert_eq!(sets, vec![vec![0, 1, 2, 3], vec![0, 2]]);
    }
}
