use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use toc_core::gateway::{
    BackendFailure, ChatBackend, ChatRequest, Gateway, MockBackend, MockEntry, ModelRole,
    RetryPolicy,
};
use toc_core::model::{AnswerOption, Clip, QaPair, QaType, SftSample};
use toc_core::records::read_records;
use toc_core::sft::{
    rejected_path, run_sft_pipeline, RejectReason, RejectedSample, SftInput, SftSettings,
};

fn clips(video: &str, n: usize) -> Vec<Clip> {
    (0..n)
        .map(|i| Clip::new(video, i, i as f64 * 10.0, (i + 1) as f64 * 10.0))
        .collect()
}

fn mc(question: &str, answer: &str) -> QaPair {
    QaPair {
        question: question.into(),
        answer: answer.into(),
        qa_type: QaType::MultipleChoice,
        options: Some(
            ["red", "blue", "green"]
                .iter()
                .zip(["A", "B", "C"])
                .map(|(t, l)| AnswerOption {
                    label: l.into(),
                    text: t.to_string(),
                })
                .collect(),
        ),
    }
}

fn input(id: &str, video: &str, qa: QaPair) -> SftInput {
    SftInput {
        id: id.into(),
        video_id: video.into(),
        qa,
    }
}

fn base_rules() -> Vec<MockEntry> {
    vec![
        MockEntry::rule(
            &["[bad-json]", "identify which clips"],
            "Sure. The key clips are [0, 2].",
        )
        .role(ModelRole::Llm),
        MockEntry::rule(&["[far]", "identify which clips"], "[0, 9]").role(ModelRole::Llm),
        MockEntry::rule(&["identify which clips"], "[0, 2]").role(ModelRole::Llm),
        MockEntry::rule(&["Describe this video clip"], "Someone holds a cup.")
            .role(ModelRole::Mllm),
        MockEntry::rule(&["visual cues"], "The cup is blue.").role(ModelRole::Mllm),
        MockEntry::rule(&["[weak]", "sufficient to lead"], "No").role(ModelRole::Llm),
        MockEntry::rule(&["sufficient to lead"], "Yes.").role(ModelRole::Llm),
        MockEntry::rule(
            &["[short]", "summarize the locating"],
            "Step 1: I watch everything.",
        )
        .role(ModelRole::Llm),
        MockEntry::rule(
            &["summarize the locating"],
            "Step 1: I scan the video. Step 2: I find the cup.",
        )
        .role(ModelRole::Llm),
    ]
}

fn mock_gateway() -> Gateway {
    Gateway::new(
        Box::new(MockBackend::new(base_rules())),
        RetryPolicy::default(),
        4,
    )
}

fn settings(state: &Path) -> SftSettings {
    SftSettings {
        state_dir: Some(state.to_path_buf()),
        ..SftSettings::default()
    }
}

fn corpus() -> (BTreeMap<String, Vec<Clip>>, Vec<SftInput>) {
    let mut by_video = BTreeMap::new();
    by_video.insert("v1".to_string(), clips("v1", 4));
    by_video.insert("v2".to_string(), clips("v2", 4));
    let inputs = vec![
        input("v1#0", "v1", mc("What colour is the cup?", "B")),
        input("v1#1", "v1", mc("[weak] What colour is the lid?", "A")),
        input("v2#0", "v2", mc("What colour is the mug?", "B")),
    ];
    (by_video, inputs)
}

#[test]
fn rejects_insufficient_cues_and_emits_the_rest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sft.jsonl");
    let (videos, inputs) = corpus();
    let gw = mock_gateway();
    let report = run_sft_pipeline(
        &gw,
        &videos,
        &inputs,
        &settings(&dir.path().join("s")),
        &out,
    )
    .unwrap();

    let emitted: Vec<SftSample> = read_records(&out).unwrap();
    assert_eq!(
        emitted.iter().map(|s| s.id.as_str()).collect::<Vec<_>>(),
        ["v1#0", "v2#0"]
    );
    let rejected: Vec<RejectedSample> = read_records(&rejected_path(&out)).unwrap();
    assert_eq!(rejected.len(), 1);
    assert_eq!(rejected[0].reason, RejectReason::InsufficientCues);
    assert_eq!(report.get("rejected.insufficient_cues").unwrap(), 1);

    let s = &emitted[0];
    assert_eq!(s.rationale, "I scan the video. I find the cup.");
    assert_eq!(
        s.target,
        "<locate>I scan the video. I find the cup.</locate>\n<answer>B</answer>"
    );
    assert!(s
        .prompt
        .starts_with("What colour is the cup?\nA. red\nB. blue\nC. green\nFirst, progressively"));
    assert_eq!(toc_core::reward::extract_answer(&s.target), "B");
}

#[test]
fn rerun_reuses_state_without_backend_calls() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sft.jsonl");
    let (videos, inputs) = corpus();
    let st = settings(&dir.path().join("s"));
    run_sft_pipeline(&mock_gateway(), &videos, &inputs, &st, &out).unwrap();
    let first = std::fs::read(&out).unwrap();

    let gw = mock_gateway();
    let report = run_sft_pipeline(&gw, &videos, &inputs, &st, &out).unwrap();
    assert_eq!(gw.calls(), 0);
    assert_eq!(report.get("backend_calls").unwrap(), 0);
    assert_eq!(std::fs::read(&out).unwrap(), first);
}

#[test]
fn empty_input_writes_empty_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sft.jsonl");
    let report = run_sft_pipeline(
        &mock_gateway(),
        &BTreeMap::new(),
        &[],
        &settings(dir.path()),
        &out,
    )
    .unwrap();
    assert_eq!(std::fs::read(&out).unwrap(), b"");
    assert_eq!(std::fs::read(rejected_path(&out)).unwrap(), b"");
    assert_eq!(report.get("samples").unwrap(), 0);
}

fn single_rejection(qa: QaPair, video_clips: usize, strict: bool) -> RejectReason {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sft.jsonl");
    let mut videos = BTreeMap::new();
    if video_clips > 0 {
        videos.insert("v1".to_string(), clips("v1", video_clips));
    }
    let mut st = settings(&dir.path().join("s"));
    st.strict_parsing = strict;
    run_sft_pipeline(
        &mock_gateway(),
        &videos,
        &[input("v1#0", "v1", qa)],
        &st,
        &out,
    )
    .unwrap();
    let rejected: Vec<RejectedSample> = read_records(&rejected_path(&out)).unwrap();
    rejected.first().map(|r| r.reason).unwrap_or_else(|| {
        let emitted: Vec<SftSample> = read_records(&out).unwrap();
        assert_eq!(emitted.len(), 1);
        panic!("emitted, not rejected")
    })
}

#[test]
fn rejection_reasons() {
    assert_eq!(
        single_rejection(mc("[far] q?", "A"), 4, true),
        RejectReason::SelectionOutOfRange
    );
    assert_eq!(
        single_rejection(mc("[bad-json] q?", "A"), 4, true),
        RejectReason::SelectionUnparseable
    );
    assert_eq!(
        single_rejection(mc("[short] q?", "A"), 4, true),
        RejectReason::StepCountMismatch
    );
    assert_eq!(
        single_rejection(mc("q?", "A"), 0, true),
        RejectReason::MissingClips
    );
    assert_eq!(
        single_rejection(mc("q?", "Z"), 4, true),
        RejectReason::InvalidQa
    );
}

#[test]
fn lenient_parsing_recovers_prose_selection() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sft.jsonl");
    let mut videos = BTreeMap::new();
    videos.insert("v1".to_string(), clips("v1", 4));
    let mut st = settings(&dir.path().join("s"));
    st.strict_parsing = false;
    run_sft_pipeline(
        &mock_gateway(),
        &videos,
        &[input("v1#0", "v1", mc("[bad-json] q?", "A"))],
        &st,
        &out,
    )
    .unwrap();
    let emitted: Vec<SftSample> = read_records(&out).unwrap();
    assert_eq!(emitted.len(), 1);
}

#[test]
fn unavailable_backend_rejects_sample() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sft.jsonl");
    let mut videos = BTreeMap::new();
    videos.insert("v1".to_string(), clips("v1", 2));
    let gw = Gateway::new(
        Box::new(MockBackend::new(vec![MockEntry::failing(
            &[],
            toc_core::gateway::MockFailure::Unavailable,
        )])),
        RetryPolicy {
            max_attempts: 3,
            initial_backoff_ms: 0,
            max_backoff_ms: 0,
        },
        1,
    );
    run_sft_pipeline(
        &gw,
        &videos,
        &[input("v1#0", "v1", mc("q?", "A"))],
        &settings(&dir.path().join("s")),
        &out,
    )
    .unwrap();
    let rejected: Vec<RejectedSample> = read_records(&rejected_path(&out)).unwrap();
    assert_eq!(rejected[0].reason, RejectReason::CaptionFailed);
    assert_eq!(gw.calls(), 3);
}

/// Delegates to the mock until `limit` calls have been made, then panics,
/// standing in for a process killed mid-run.
struct Crashing {
    inner: MockBackend,
    calls: AtomicUsize,
    limit: usize,
}

impl ChatBackend for Crashing {
    fn send(&self, request: &ChatRequest) -> Result<String, BackendFailure> {
        if self.calls.fetch_add(1, Ordering::SeqCst) >= self.limit {
            panic!("simulated crash");
        }
        self.inner.send(request)
    }
}

#[test]
fn crash_then_resume_matches_clean_run() {
    let (videos, inputs) = corpus();
    let clean_dir = tempfile::tempdir().unwrap();
    let clean_out = clean_dir.path().join("sft.jsonl");
    let clean_gw = mock_gateway();
    run_sft_pipeline(
        &clean_gw,
        &videos,
        &inputs,
        &settings(&clean_dir.path().join("s")),
        &clean_out,
    )
    .unwrap();
    let clean_calls = clean_gw.calls();

    for limit in [0, 3, 7, 13, 20] {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("sft.jsonl");
        let st = settings(&dir.path().join("s"));
        let crashing = Gateway::new(
            Box::new(Crashing {
                inner: MockBackend::new(base_rules()),
                calls: AtomicUsize::new(0),
                limit,
            }),
            RetryPolicy::default(),
            1,
        );
        let crashed = catch_unwind(AssertUnwindSafe(|| {
            run_sft_pipeline(&crashing, &videos, &inputs, &st, &out)
        }));
        assert!(crashed.is_err(), "limit {limit} should crash");
        assert!(!out.exists(), "no partial dataset after a crash");

        let gw = mock_gateway();
        run_sft_pipeline(&gw, &videos, &inputs, &st, &out).unwrap();
        // Beyond 9 successful calls at least one sample finished its
        // four-caption first stage, so some work must be skipped.
        if limit > 9 {
            assert!(
                gw.calls() < clean_calls,
                "limit {limit}: resumed run redid all work"
            );
        } else {
            assert!(gw.calls() <= clean_calls);
        }
        assert_eq!(
            std::fs::read(&out).unwrap(),
            std::fs::read(&clean_out).unwrap(),
            "limit {limit}"
        );
        assert_eq!(
            std::fs::read(rejected_path(&out)).unwrap(),
            std::fs::read(rejected_path(&clean_out)).unwrap()
        );
    }
}
