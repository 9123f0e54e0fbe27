//! Prompt templates with `{Name}` placeholders.
//!
//! The first four bodies are fixed texts that training data and golden
//! fixtures depend on byte for byte; edit them only together with the
//! fixtures under `tests/golden/`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::QaType;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template {template:?}: placeholder {{{name}}} is unbound")]
    UnboundPlaceholder {
        template: PromptTemplate,
        name: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptTemplate {
    KeyClipSelection,
    LowQualityFilter,
    RationaleGeneration,
    TrainInfer,
    /// No-reasoning answer used for reasoning-demand trials.
    DirectAnswer,
    ClipCaption,
    CueCaption,
}

const KEY_CLIP_SELECTION: &str = concat!(
    "### Task:\n",
    "You are an excellent problem solver with a strong ability to comprehend and analyze long-form video content. ",
    "There is a long video that has been split into multiple semantically coherent clips to help you understand. ",
    "You are provided with the detailed description for each clip, and a question-answer pair based on this long video. ",
    "Please carefully understand this long video based on the detailed descriptions for all clips, along with the question-answer pair. ",
    "And reason how to solve this question using the information provided in the video to arrive at the correct answer. ",
    "Based on your reasoning process, identify which clips are essential for answering the question.\n",
    "\n",
    "### Guidelines:\n",
    "The information provided to you regarding the long video is given in JSON format, which includes the count of clips, ",
    "the index and detailed description for each clip, and a question-answer pair based on this long video. ",
    "You should only provide the indices of your selected clips. No need to explain.\n",
    "\n",
    "### Output Format:\n",
    "It is critical that you respond only with the exact, parseable JSON and not any preamble, explanation, ",
    "or anything else outside of the valid JSON as your outputs will be fed directly to a JSON parser to go into a downstream application. ",
    "Do not include any markup like ```json or anything else that would break our ability to parse the response. ",
    "This is critical, after you are done reasoning and before you respond, ensure that your response is exactly JSON parseable. ",
    "You must respond with a JSON array that matches the following schema: [<index_1>, <index_2>, ..., <index_N>]\n",
    "\n",
    "Please provide the indices of the essential clips for the following video clip descriptions and corresponding question-answer pair:\n",
    "{Video Clip Descriptions}; {Question}; {Answer}",
);

const LOW_QUALITY_FILTER: &str = concat!(
    "I will provide you with a question-answer pair, along with a detailed description of a video. ",
    "You need to judge whether the video content is sufficient to lead to the answer to the question. ",
    "If so, respond with \"Yes\"; otherwise, respond with \"No\". No need to explain. ",
    "Please provide your judgement for the following question-answer pair and video content:\n",
    "{Question}; {Answer}; {Cues}",
);

const RATIONALE_GENERATION: &str = concat!(
    "You are an excellent video assistant with a strong ability to comprehend and analyze long-form video content, ",
    "and you are watching a long video. ",
    "I will provide you with a question-answer pair and explain the process of locating video clips that are increasingly helpful ",
    "for solving the question and reaching the answer. ",
    "Please summarize the locating process in the first-person tone, demonstrating the step-by-step method of how to locate ",
    "the most important clip for the given question. ",
    "While you are summarizing, act as if you can only see the entire video and question, ",
    "and you are unaware of the provided video clip descriptions and the given answer. ",
    "Your response should be concise, presented in a single paragraph, and follow this format: ",
    "\"Step 1: ... Step 2: ... Step 3: ...\". ",
    "Note that the number of steps in your response MUST equal the number of steps in the provided locating process. ",
    "Please provide your summarized locating process for the following data:\n",
    "{Question}; {Answer}; {Reasoning Trajectory}",
);

const TRAIN_INFER: &str = concat!(
    "{Question}\n",
    "First, progressively locate video clips that are increasingly helpful for answering the question, ",
    "and then provide your final answer. ",
    "Put your detailed locating process between the <locate> </locate> tags, ",
    "and your final answer between the <answer> </answer> tags. ",
    "{Task Instruction}",
);

const DIRECT_ANSWER: &str = "{Question}\nAnswer with only the single option letter within the <answer> </answer> tags. Do not explain.";

const CLIP_CAPTION: &str = "Describe this video clip comprehensively, including the scene, the people and objects present, their actions, and any visible text.";

const CUE_CAPTION: &str = "Describe this video in detail, focusing on the specific spatial and temporal visual cues that help answer the following question:\n{Question}";

pub const TASK_INSTRUCTION_MULTIPLE_CHOICE: &str =
    "Provide only the single option letter (e.g., A, B, C, D, etc.) within the <answer> </answer> tags.";
pub const TASK_INSTRUCTION_NUMERICAL: &str =
    "Provide the numerical value (e.g., 42 or 3.14) within the <answer> </answer> tags.";
pub const TASK_INSTRUCTION_OPEN_ENDED: &str =
    "Provide your text answer within the <answer> </answer> tags.";

pub fn task_instruction(qa_type: QaType) -> &'static str {
    match qa_type {
        QaType::MultipleChoice => TASK_INSTRUCTION_MULTIPLE_CHOICE,
        QaType::Numerical => TASK_INSTRUCTION_NUMERICAL,
        QaType::OpenEnded => TASK_INSTRUCTION_OPEN_ENDED,
    }
}

impl PromptTemplate {
    pub const ALL: [PromptTemplate; 7] = [
        PromptTemplate::KeyClipSelection,
        PromptTemplate::LowQualityFilter,
        PromptTemplate::RationaleGeneration,
        PromptTemplate::TrainInfer,
        PromptTemplate::DirectAnswer,
        PromptTemplate::ClipCaption,
        PromptTemplate::CueCaption,
    ];

    pub fn body(self) -> &'static str {
        match self {
            PromptTemplate::KeyClipSelection => KEY_CLIP_SELECTION,
            PromptTemplate::LowQualityFilter => LOW_QUALITY_FILTER,
            PromptTemplate::RationaleGeneration => RATIONALE_GENERATION,
            PromptTemplate::TrainInfer => TRAIN_INFER,
            PromptTemplate::DirectAnswer => DIRECT_ANSWER,
            PromptTemplate::ClipCaption => CLIP_CAPTION,
            PromptTemplate::CueCaption => CUE_CAPTION,
        }
    }

    pub fn placeholders(self) -> &'static [&'static str] {
        match self {
            PromptTemplate::KeyClipSelection => &["Video Clip Descriptions", "Question", "Answer"],
            PromptTemplate::LowQualityFilter => &["Question", "Answer", "Cues"],
            PromptTemplate::RationaleGeneration => &["Question", "Answer", "Reasoning Trajectory"],
            PromptTemplate::TrainInfer => &["Question", "Task Instruction"],
            PromptTemplate::DirectAnswer => &["Question"],
            PromptTemplate::ClipCaption => &[],
            PromptTemplate::CueCaption => &["Question"],
        }
    }

    /// Substitutes each `{Name}` placeholder with its binding in one pass.
    /// Bound text is inserted verbatim and never re-scanned; braces that do
    /// not name a placeholder of this template are left alone.
    pub fn render(self, bindings: &HashMap<&str, &str>) -> Result<String, TemplateError> {
        let body = self.body();
        let names = self.placeholders();
        let mut out = String::with_capacity(body.len() + 256);
        let mut rest = body;
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            let name = after.find('}').map(|close| &after[..close]);
            match name.filter(|n| names.contains(n)) {
                Some(name) => {
                    let value =
                        bindings
                            .get(name)
                            .ok_or_else(|| TemplateError::UnboundPlaceholder {
                                template: self,
                                name: name.to_string(),
                            })?;
                    out.push_str(value);
                    rest = &after[name.len() + 1..];
                }
                None => {
                    out.push('{');
                    rest = after;
                }
            }
        }
        out.push_str(rest);
        Ok(out)
    }
}

/// Renders `template` with `(name, value)` pairs.
pub fn render_prompt(
    template: PromptTemplate,
    bindings: &[(&str, &str)],
) -> Result<String, TemplateError> {
    template.render(&bindings.iter().copied().collect())
}
