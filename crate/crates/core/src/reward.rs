//! Rewards, group-relative advantages and the clipped GRPO surrogate.
//!
//! A correct response earns the question's reasoning demand `gamma =
//! e^(-alpha/M)`; a wrong one earns 0. Group normalization uses the sample
//! standard deviation (divisor `G - 1`), which makes the normalized
//! advantages of a `{0, gamma}` group independent of `gamma`:
//!
//! ```text
//! A_correct =  sqrt((G-1)(G-x) / (G x))      0 <  x <= G
//! A_wrong   = -sqrt(x (G-1) / (G (G-x)))     0 <= x <  G
//! ```
//!
//! Multiplying the normalized advantages by `gamma` restores the dependence
//! on reasoning demand. There is no format reward: a response without an
//! `<answer>` block is scored as wrong.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{QaType, ANSWER_CLOSE, ANSWER_OPEN};

#[derive(Debug, Error, PartialEq)]
pub enum RewardError {
    #[error("value out of range: {0}")]
    Range(String),
    #[error("a group needs at least 2 responses, got {0}")]
    GroupTooSmall(usize),
    #[error("response {response}: log-prob sequences are misaligned ({detail})")]
    MisalignedSequences { response: usize, detail: String },
    #[error("non-finite value in {0}")]
    NonFinite(String),
}

/// Content of the last `<answer>...</answer>` block, trimmed. Empty when no
/// complete block exists.
pub fn extract_answer(response: &str) -> &str {
    let Some(close) = response.rfind(ANSWER_CLOSE) else {
        return "";
    };
    let head = &response[..close];
    match head.rfind(ANSWER_OPEN) {
        Some(open) => head[open + ANSWER_OPEN.len()..].trim(),
        None => "",
    }
}

/// Compares an extracted answer with the gold answer.
///
/// Multiple choice: case-insensitive label match, ignoring a trailing period
/// and enclosing parentheses. Numerical: exact match after trimming, or
/// within `numeric_rel_tol` of the gold value when a tolerance is given.
/// Everything else: exact match after trimming. An empty extraction never
/// matches.
pub fn answer_matches(
    extracted: &str,
    gold: &str,
    qa_type: QaType,
    numeric_rel_tol: Option<f64>,
) -> bool {
    let extracted = extracted.trim();
    if extracted.is_empty() {
        return false;
    }
    match qa_type {
        QaType::MultipleChoice => {
            let label = extracted
                .trim_end_matches('.')
                .trim_start_matches('(')
                .trim_end_matches(')')
                .trim();
            label.eq_ignore_ascii_case(gold.trim())
        }
        QaType::Numerical => {
            if extracted == gold.trim() {
                return true;
            }
            let Some(tol) = numeric_rel_tol else {
                return false;
            };
            match (extracted.parse::<f64>(), gold.trim().parse::<f64>()) {
                (Ok(a), Ok(b)) => (a - b).abs() <= tol * b.abs(),
                _ => false,
            }
        }
        QaType::OpenEnded => extracted == gold.trim(),
    }
}

pub fn vanilla_reward(correct: bool) -> f64 {
    if correct {
        1.0
    } else {
        0.0
    }
}

pub fn rd_reward(correct: bool, alpha: u32, m: u32) -> Result<f64, RewardError> {
    if m == 0 || alpha > m {
        return Err(RewardError::Range(format!("alpha={alpha}, m={m}")));
    }
    Ok(if correct {
        (-(alpha as f64) / m as f64).exp()
    } else {
        0.0
    })
}

/// `(r_i - mean) / std` with the sample standard deviation. A group whose
/// rewards are all equal gets all-zero advantages.
pub fn normalize_advantages(rewards: &[f64]) -> Result<Vec<f64>, RewardError> {
    let g = rewards.len();
    if g < 2 {
        return Err(RewardError::GroupTooSmall(g));
    }
    if rewards.iter().any(|r| !r.is_finite()) {
        return Err(RewardError::NonFinite("rewards".into()));
    }
    let mean = rewards.iter().sum::<f64>() / g as f64;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (g - 1) as f64;
    let std = var.sqrt();
    if std == 0.0 || rewards.iter().all(|&r| r == rewards[0]) {
        return Ok(vec![0.0; g]);
    }
    Ok(rewards.iter().map(|r| (r - mean) / std).collect())
}

/// Advantages of a correct and a wrong response in a binary group of size
/// `g` with `x` correct responses. A side with no members is `None`, except
/// that the all-correct group reports `a_correct = 0` and the all-wrong
/// group reports `a_wrong = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedFormAdvantages {
    pub correct: Option<f64>,
    pub wrong: Option<f64>,
}

pub fn closed_form_advantages(g: u32, x: u32) -> Result<ClosedFormAdvantages, RewardError> {
    if g < 2 {
        return Err(RewardError::GroupTooSmall(g as usize));
    }
    if x > g {
        return Err(RewardError::Range(format!("x={x} > G={g}")));
    }
    let (gf, xf) = (g as f64, x as f64);
    let correct = match x {
        0 => None,
        x if x == g => Some(0.0),
        _ => Some(((gf - 1.0) * (gf - xf) / (gf * xf)).sqrt()),
    };
    let wrong = match x {
        0 => Some(0.0),
        x if x == g => None,
        _ => Some(-(xf * (gf - 1.0) / (gf * (gf - xf))).sqrt()),
    };
    Ok(ClosedFormAdvantages { correct, wrong })
}

pub fn scale_advantages(advantages: &[f64], gamma: f64) -> Result<Vec<f64>, RewardError> {
    check_gamma(gamma)?;
    Ok(advantages.iter().map(|a| a * gamma).collect())
}

fn check_gamma(gamma: f64) -> Result<(), RewardError> {
    if gamma > 0.0 && gamma <= 1.0 {
        Ok(())
    } else {
        Err(RewardError::Range(format!("gamma={gamma} outside (0, 1]")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResponseOutcome {
    pub response_text: String,
    pub correct: bool,
    pub reward: f64,
    pub advantage: f64,
    pub scaled_advantage: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardGroup {
    pub gamma: f64,
    pub outcomes: Vec<ResponseOutcome>,
}

impl RewardGroup {
    /// Scores a group from correctness flags.
    pub fn from_correctness(
        gamma: f64,
        responses: Vec<(String, bool)>,
    ) -> Result<Self, RewardError> {
        check_gamma(gamma)?;
        let rewards: Vec<f64> = responses
            .iter()
            .map(|(_, c)| if *c { gamma } else { 0.0 })
            .collect();
        let advantages = normalize_advantages(&rewards)?;
        let scaled = scale_advantages(&advantages, gamma)?;
        let outcomes = responses
            .into_iter()
            .zip(rewards)
            .zip(advantages.into_iter().zip(scaled))
            .map(
                |(((response_text, correct), reward), (advantage, scaled_advantage))| {
                    ResponseOutcome {
                        response_text,
                        correct,
                        reward,
                        advantage,
                        scaled_advantage,
                    }
                },
            )
            .collect();
        Ok(Self { gamma, outcomes })
    }

    /// Scores raw responses: the extracted answer must match `gold`.
    pub fn from_responses(
        gamma: f64,
        responses: &[String],
        gold: &str,
        qa_type: QaType,
        numeric_rel_tol: Option<f64>,
    ) -> Result<Self, RewardError> {
        let flagged = responses
            .iter()
            .map(|r| {
                let ok = answer_matches(extract_answer(r), gold, qa_type, numeric_rel_tol);
                (r.clone(), ok)
            })
            .collect();
        Self::from_correctness(gamma, flagged)
    }

    pub fn size(&self) -> usize {
        self.outcomes.len()
    }

    pub fn correct_count(&self) -> usize {
        self.outcomes.iter().filter(|o| o.correct).count()
    }

    pub fn scaled_advantages(&self) -> Vec<f64> {
        self.outcomes.iter().map(|o| o.scaled_advantage).collect()
    }
}

/// Token log-probabilities of one response under the current, old and
/// reference policies, plus its scaled advantage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseLogProbs {
    pub policy: Vec<f64>,
    pub old: Vec<f64>,
    pub reference: Vec<f64>,
    pub advantage: f64,
}

/// One group of responses for [`grpo_objective`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyGroup {
    pub responses: Vec<ResponseLogProbs>,
}

/// Mean over tokens of `exp(ref - cur) - (ref - cur) - 1`.
pub fn kl_estimate(policy: &[f64], reference: &[f64]) -> f64 {
    let sum: f64 = policy
        .iter()
        .zip(reference)
        .map(|(cur, r)| {
            let d = r - cur;
            d.exp() - d - 1.0
        })
        .sum();
    sum / policy.len() as f64
}

/// Clipped surrogate with KL penalty, averaged over responses and groups.
///
/// The importance ratio is taken over the whole response (sum of token
/// log-probs). The KL penalty is not scaled by reasoning demand.
pub fn grpo_objective(groups: &[PolicyGroup], epsilon: f64, beta: f64) -> Result<f64, RewardError> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(RewardError::Range(format!("epsilon={epsilon}")));
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(RewardError::Range(format!("beta={beta}")));
    }
    if groups.is_empty() || groups.iter().any(|g| g.responses.is_empty()) {
        return Err(RewardError::Range("empty group".into()));
    }
    let mut total = 0.0;
    for group in groups {
        let mut group_sum = 0.0;
        for (i, r) in group.responses.iter().enumerate() {
            if r.policy.is_empty()
                || r.policy.len() != r.old.len()
                || r.policy.len() != r.reference.len()
            {
                return Err(RewardError::MisalignedSequences {
                    response: i,
                    detail: format!(
                        "policy={}, old={}, reference={}",
                        r.policy.len(),
                        r.old.len(),
                        r.reference.len()
                    ),
                });
            }
            let finite = r
                .policy
                .iter()
                .chain(&r.old)
                .chain(&r.reference)
                .all(|v| v.is_finite())
                && r.advantage.is_finite();
            if !finite {
                return Err(RewardError::NonFinite(format!("response {i}")));
            }
            let log_ratio: f64 = r.policy.iter().sum::<f64>() - r.old.iter().sum::<f64>();
            let ratio = log_ratio.exp();
            let clipped = ratio.clamp(1.0 - epsilon, 1.0 + epsilon);
            let surrogate = (ratio * r.advantage).min(clipped * r.advantage);
            group_sum += surrogate - beta * kl_estimate(&r.policy, &r.reference);
        }
        total += group_sum / group.responses.len() as f64;
    }
    let objective = total / groups.len() as f64;
    if !objective.is_finite() {
        return Err(RewardError::NonFinite("objective".into()));
    }
    Ok(objective)
}
