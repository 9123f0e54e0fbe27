//! Reasoning-demand annotation and RL dataset construction.
//!
//! Each multiple-choice question is answered `M` times by the MLLM without
//! reasoning. With `alpha` correct answers the question's reasoning demand
//! is `e^(-alpha/M)` and its difficulty `1 - alpha/M`. Questions outside the
//! difficulty band are dropped, and the rest are balanced across difficulty
//! tiers.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Config;
use crate::gateway::{
    render_prompt, ChatRequest, Gateway, MediaRef, Message, ModelRole, PromptTemplate,
};
use crate::model::{assign_sample_ids, QaPair, QaRecord, QaType, RlSample};
use crate::records::{read_records, write_records, RecordError};
use crate::report::Report;
use crate::reward::{answer_matches, extract_answer};

/// Slack on band edges so that e.g. `1 - 8/10` still counts as 0.2.
const BAND_SLACK: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum RlError {
    #[error("sample {0} is not multiple-choice")]
    NonMultipleChoice(String),
    #[error("invalid band: lo {lo} must be < hi {hi}")]
    InvalidBand { lo: f64, hi: f64 },
    #[error("m_trials must be >= 1")]
    InvalidTrials,
    #[error("sample {id}: {reason}")]
    InvalidSample { id: String, reason: String },
    #[error(transparent)]
    Records(#[from] RecordError),
    #[error("worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub sample_id: String,
    pub trial_index: u32,
    pub raw_reply: String,
    pub extracted: Option<String>,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemandEstimate {
    pub alpha: u32,
    pub reasoning_demand: f64,
    pub difficulty: f64,
    pub trials: Vec<TrialRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialSettings {
    pub temperature: f64,
    pub max_tokens: u32,
    /// Trial `k` is sent with seed `seed + k`.
    pub seed: u64,
}

impl From<&Config> for TrialSettings {
    fn from(c: &Config) -> Self {
        Self {
            temperature: c.trial_temperature,
            max_tokens: c.max_tokens,
            seed: c.seed,
        }
    }
}

pub fn direct_answer_prompt(qa: &QaPair) -> String {
    render_prompt(
        PromptTemplate::DirectAnswer,
        &[("Question", &qa.question_with_options())],
    )
    .expect("question bound")
}

/// Runs `m_trials` independent no-reasoning answers and counts the correct
/// ones. Unparseable replies and gateway failures count as incorrect.
pub fn estimate_demand(
    gateway: &Gateway,
    settings: &TrialSettings,
    sample_id: &str,
    video_id: &str,
    qa: &QaPair,
    m_trials: u32,
) -> Result<DemandEstimate, RlError> {
    if qa.qa_type != QaType::MultipleChoice {
        return Err(RlError::NonMultipleChoice(sample_id.to_string()));
    }
    if m_trials == 0 {
        return Err(RlError::InvalidTrials);
    }
    let prompt = direct_answer_prompt(qa);
    let media = vec![MediaRef {
        video_id: video_id.to_string(),
        span_s: None,
    }];
    let trials: Vec<TrialRecord> = (0..m_trials)
        .into_par_iter()
        .map(|k| {
            let mut request = ChatRequest::new(
                ModelRole::Mllm,
                Message::user(prompt.clone()).with_media(media.clone()),
            );
            request.temperature = settings.temperature;
            request.max_tokens = settings.max_tokens;
            request.seed = Some(settings.seed.wrapping_add(k as u64));
            let raw_reply = match gateway.complete(&request) {
                Ok(reply) => reply,
                Err(e) => {
                    log::warn!("{sample_id} trial {k}: {e}; counted incorrect");
                    String::new()
                }
            };
            let extracted = Some(extract_answer(&raw_reply).to_string()).filter(|s| !s.is_empty());
            let correct = extracted
                .as_deref()
                .is_some_and(|a| answer_matches(a, &qa.answer, QaType::MultipleChoice, None));
            TrialRecord {
                sample_id: sample_id.to_string(),
                trial_index: k,
                raw_reply,
                extracted,
                correct,
            }
        })
        .collect();
    let alpha = trials.iter().filter(|t| t.correct).count() as u32;
    Ok(DemandEstimate {
        alpha,
        reasoning_demand: crate::model::reasoning_demand(alpha, m_trials),
        difficulty: crate::model::difficulty(alpha, m_trials),
        trials,
    })
}

pub fn trials_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".trials");
    PathBuf::from(s)
}

/// Annotates every multiple-choice QA record with its reasoning demand.
/// Writes unfiltered [`RlSample`] records and a trials sidecar.
pub fn run_estimate_demand(
    gateway: &Gateway,
    records: &[QaRecord],
    settings: &TrialSettings,
    m_trials: u32,
    parallelism: usize,
    output: &Path,
) -> Result<Report, RlError> {
    if m_trials == 0 {
        return Err(RlError::InvalidTrials);
    }
    let ids = assign_sample_ids(records);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| RlError::Pool(e.to_string()))?;
    let calls_before = gateway.calls();
    let results: Vec<Result<(RlSample, Vec<TrialRecord>), RlError>> = pool.install(|| {
        ids.par_iter()
            .zip(records)
            .map(|(id, record)| {
                record.qa.validate().map_err(|e| RlError::InvalidSample {
                    id: id.clone(),
                    reason: e.to_string(),
                })?;
                let est = estimate_demand(
                    gateway,
                    settings,
                    id,
                    &record.video_id,
                    &record.qa,
                    m_trials,
                )?;
                let sample = RlSample::new(
                    id.clone(),
                    record.video_id.clone(),
                    &record.qa,
                    est.alpha,
                    m_trials,
                )
                .map_err(|e| RlError::InvalidSample {
                    id: id.clone(),
                    reason: e.to_string(),
                })?;
                Ok((sample, est.trials))
            })
            .collect()
    });

    let mut report = Report::new("estimate-demand");
    let mut samples = Vec::new();
    let mut trials = Vec::new();
    let mut skipped: BTreeMap<&'static str, usize> = BTreeMap::new();
    for result in results {
        match result {
            Ok((sample, t)) => {
                samples.push(sample);
                trials.extend(t);
            }
            Err(RlError::NonMultipleChoice(id)) => {
                log::info!("{id}: skipped, not multiple-choice");
                *skipped.entry("skipped.non_multiple_choice").or_default() += 1;
            }
            Err(RlError::InvalidSample { id, reason }) => {
                log::warn!("{id}: skipped, {reason}");
                *skipped.entry("skipped.invalid_qa").or_default() += 1;
            }
            Err(e) => return Err(e),
        }
    }
    write_records(output, &samples)?;
    write_records(&trials_path(output), &trials)?;
    report.push("samples", records.len());
    report.push("annotated", samples.len());
    for (k, v) in skipped {
        report.push(k, v);
    }
    let mut alpha_hist = BTreeMap::new();
    for s in &samples {
        *alpha_hist.entry(s.alpha).or_insert(0usize) += 1;
    }
    for (alpha, n) in alpha_hist {
        report.push(format!("alpha.{alpha}"), n);
    }
    report.push("backend_calls", gateway.calls() - calls_before);
    Ok(report)
}

/// Keeps samples with `lo <= difficulty <= hi`, preserving order.
pub fn filter_by_difficulty(
    samples: &[RlSample],
    lo: f64,
    hi: f64,
) -> Result<Vec<RlSample>, RlError> {
    if lo.is_nan() || hi.is_nan() || lo >= hi {
        return Err(RlError::InvalidBand { lo, hi });
    }
    Ok(samples
        .iter()
        .filter(|s| s.difficulty >= lo - BAND_SLACK && s.difficulty <= hi + BAND_SLACK)
        .cloned()
        .collect())
}

/// Exact difficulty `(M - alpha) / M` as a reduced fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Tier {
    pub num: u32,
    pub den: u32,
}

impl Tier {
    pub fn of(sample: &RlSample) -> Self {
        let (num, den) = (sample.m_trials - sample.alpha, sample.m_trials);
        let g = gcd(num, den).max(1);
        Tier {
            num: num / g,
            den: den / g,
        }
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl Ord for Tier {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.num as u64 * other.den as u64).cmp(&(other.num as u64 * self.den as u64))
    }
}

impl PartialOrd for Tier {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BalanceOutcome {
    pub samples: Vec<RlSample>,
    /// Output count per tier, ascending difficulty.
    pub per_tier: Vec<(Tier, usize)>,
    pub warnings: Vec<String>,
}

/// Draws `floor(target / tiers)` samples per tier uniformly without
/// replacement, then tops up one sample at a time round-robin over tiers
/// with supply left. Output size is `min(target, samples.len())`; selected
/// samples keep their input order.
pub fn balance_tiers(samples: &[RlSample], target: usize, seed: u64) -> BalanceOutcome {
    let mut by_tier: BTreeMap<Tier, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        by_tier.entry(Tier::of(s)).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for pool in by_tier.values_mut() {
        pool.shuffle(&mut rng);
    }

    let mut warnings = Vec::new();
    let want = target.min(samples.len());
    if samples.len() < target {
        warnings.push(format!(
            "under-supply: {} samples available for target {target}",
            samples.len()
        ));
    }
    let tiers: Vec<Tier> = by_tier.keys().copied().collect();
    let mut taken = vec![0usize; tiers.len()];
    if !tiers.is_empty() {
        let quota = target / tiers.len();
        for (t, tier) in tiers.iter().enumerate() {
            taken[t] = quota.min(by_tier[tier].len());
            if by_tier[tier].len() < quota {
                warnings.push(format!(
                    "tier {:.4} has {} samples, below quota {quota}",
                    tier.value(),
                    by_tier[tier].len()
                ));
            }
        }
        let mut total: usize = taken.iter().sum();
        while total < want {
            for (t, tier) in tiers.iter().enumerate() {
                if total < want && taken[t] < by_tier[tier].len() {
                    taken[t] += 1;
                    total += 1;
                }
            }
        }
    }

    let mut chosen: Vec<usize> = tiers
        .iter()
        .zip(&taken)
        .flat_map(|(tier, &n)| by_tier[tier][..n].iter().copied())
        .collect();
    chosen.sort_unstable();
    BalanceOutcome {
        samples: chosen.into_iter().map(|i| samples[i].clone()).collect(),
        per_tier: tiers.into_iter().zip(taken).collect(),
        warnings,
    }
}

/// Filters demand records to the band, balances tiers and writes the dataset.
pub fn run_build_rl(
    input: &Path,
    band: (f64, f64),
    target: usize,
    seed: u64,
    output: &Path,
) -> Result<Report, RlError> {
    let samples: Vec<RlSample> = read_records(input)?;
    for s in &samples {
        if !s.is_consistent(1e-12) {
            return Err(RlError::InvalidSample {
                id: s.id.clone(),
                reason: "reasoning_demand/difficulty disagree with alpha/m_trials".into(),
            });
        }
    }
    let in_band = filter_by_difficulty(&samples, band.0, band.1)?;
    let outcome = balance_tiers(&in_band, target, seed);
    write_records(output, &outcome.samples)?;

    let mut report = Report::new("build-rl");
    report.push("input", samples.len());
    report.push("in_band", in_band.len());
    report.push("discarded", samples.len() - in_band.len());
    report.push("emitted", outcome.samples.len());
    for (tier, n) in &outcome.per_tier {
        report.push(format!("tier.{}", tier.value()), *n);
    }
    for w in outcome.warnings {
        log::warn!("{w}");
        report.warn(w);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AnswerOption;

    fn sample(i: usize, alpha: u32, m: u32) -> RlSample {
        let qa = QaPair {
            question: format!("q{i}"),
            answer: "A".into(),
            qa_type: QaType::MultipleChoice,
            options: Some(vec![AnswerOption {
                label: "A".into(),
                text: "x".into(),
            }]),
        };
        RlSample::new(format!("v#{i}"), "v".into(), &qa, alpha, m).unwrap()
    }

    #[test]
    fn band_filter_examples() {
        let s = vec![sample(0, 7, 8), sample(1, 6, 8), sample(2, 1, 8)];
        let kept = filter_by_difficulty(&s, 0.2, 0.8).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].difficulty, 0.25);
        assert!(matches!(
            filter_by_difficulty(&s, 0.8, 0.8),
            Err(RlError::InvalidBand { .. })
        ));
    }

    #[test]
    fn band_edges_are_inclusive() {
        // 1 - 8/10 is 0.19999999999999996 in floating point.
        let s = vec![sample(0, 8, 10), sample(1, 2, 10)];
        assert_eq!(filter_by_difficulty(&s, 0.2, 0.8).unwrap().len(), 2);
    }

    #[test]
    fn tiers_reduce_fractions() {
        assert_eq!(Tier::of(&sample(0, 4, 8)), Tier::of(&sample(0, 2, 4)));
        assert!(Tier::of(&sample(0, 6, 8)) < Tier::of(&sample(0, 4, 8)));
    }

    #[test]
    fn single_tier_supplies_everything() {
        let s: Vec<_> = (0..10).map(|i| sample(i, 4, 8)).collect();
        let out = balance_tiers(&s, 6, 1);
        assert_eq!(out.samples.len(), 6);
        assert_eq!(out.per_tier.len(), 1);
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn empty_supply() {
        let out = balance_tiers(&[], 5, 0);
        assert!(out.samples.is_empty());
        assert_eq!(out.warnings.len(), 1);
    }

    #[test]
    fn deterministic_for_a_seed() {
        let s: Vec<_> = (0..50).map(|i| sample(i, 2 + (i % 5) as u32, 8)).collect();
        assert_eq!(balance_tiers(&s, 17, 9), balance_tiers(&s, 17, 9));
        assert_ne!(
            balance_tiers(&s, 17, 9).samples,
            balance_tiers(&s, 17, 10).samples
        );
    }
}
