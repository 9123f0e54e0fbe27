use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use toc_core::config::Config;
use toc_core::cue_tree::CueTree;
use toc_core::gateway::ModelRole;
use toc_core::model::{QaRecord, QaType};
use toc_core::records::{read_records, write_records};
use toc_core::report::Report;
use toc_core::reward::{grpo_objective, rd_reward, PolicyGroup, RewardGroup};
use toc_core::rl::{run_build_rl, run_estimate_demand, TrialSettings};
use toc_core::segmentation::{stitch, ShotBoundarySet};
use toc_core::sft::{group_clips, inputs_from_records, run_sft_pipeline, SftSettings};

mod format;

use format::fmt_g;

/// Tree-of-cue data construction and reward tooling.
#[derive(Debug, Parser)]
#[command(name = "toc", version)]
struct Cli {
    /// Report file (newline-delimited records). Defaults to `<output>.report`,
    /// or `toc-<subcommand>.report` for commands without an output file.
    #[arg(long, global = true)]
    report: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Stitch shots into semantically coherent clips.
    Segment(SegmentArgs),
    /// Print the cue tree layers and compilations for a key-clip selection.
    Tree(TreeArgs),
    /// Build the reasoning SFT dataset.
    BuildSft(BuildSftArgs),
    /// Annotate multiple-choice QA with reasoning demand.
    EstimateDemand(EstimateDemandArgs),
    /// Filter by difficulty band and balance tiers into the RL dataset.
    BuildRl(BuildRlArgs),
    /// Score response groups and print rewards and advantages.
    Reward(RewardArgs),
    /// Evaluate the clipped GRPO objective on log-probability groups.
    GrpoEval(GrpoEvalArgs),
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// TOML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    parallelism: Option<usize>,
    /// Base seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<Config> {
        let mut config = match &self.config {
            Some(path) => Config::load(path)?,
            None => Config::default(),
        };
        if let Some(p) = self.parallelism {
            config.parallelism = p;
        }
        if let Some(s) = self.seed {
            config.seed = s;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Args)]
struct SegmentArgs {
    /// Shot boundary records.
    #[arg(long)]
    shots: PathBuf,
    /// Cosine threshold for merging a shot into the running clip.
    #[arg(long)]
    tau: Option<f64>,
    #[command(flatten)]
    config: ConfigArgs,
    /// Output clip records.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct TreeArgs {
    /// Number of clips (leaves).
    #[arg(long)]
    n: usize,
    /// Comma-separated key clip indices.
    #[arg(long, value_delimiter = ',', required = true)]
    select: Vec<usize>,
}

#[derive(Debug, Args)]
struct BuildSftArgs {
    /// Clip records (pre-segmented videos).
    #[arg(long, conflicts_with = "shots", required_unless_present = "shots")]
    videos: Option<PathBuf>,
    /// Shot boundary records; stitched with the configured tau first.
    #[arg(long)]
    shots: Option<PathBuf>,
    /// QA records.
    #[arg(long)]
    qa: PathBuf,
    /// Stitching threshold used with `--shots`
    #[arg(long)]
    tau: Option<f64>,
    /// Accept selection replies with surrounding prose.
    #[arg(long)]
    lenient: bool,
    #[command(flatten)]
    config: ConfigArgs,
    /// Output SFT records.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct EstimateDemandArgs {
    /// QA records.
    #[arg(long)]
    qa: PathBuf,
    /// Trials per question.
    #[arg(long)]
    m: Option<u32>,
    #[command(flatten)]
    config: ConfigArgs,
    /// Output reasoning-demand records.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct BuildRlArgs {
    /// Reasoning-demand records.
    #[arg(long = "in")]
    input: PathBuf,
    /// Inclusive difficulty band `lo:hi`.
    #[arg(long, value_parser = parse_band)]
    band: Option<(f64, f64)>,
    /// Target dataset size.
    #[arg(long)]
    target: Option<usize>,
    #[command(flatten)]
    config: ConfigArgs,
    /// Output RL records.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct RewardArgs {
    /// Group records: `alpha`, `m_trials` and either `correct` flags or
    /// `responses` with `answer` and `qa_type`.
    #[arg(long)]
    group: PathBuf,
    /// Relative tolerance for numerical answers.
    #[arg(long)]
    numeric_rel_tol: Option<f64>,
}

#[derive(Debug, Args)]
struct GrpoEvalArgs {
    /// Policy group records with per-token log-probabilities.
    #[arg(long)]
    logprobs: PathBuf,
    #[arg(long, default_value_t = 0.2)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.04)]
    beta: f64,
}

fn parse_band(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(':').ok_or("expected lo:hi")?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("lo: {e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("hi: {e}"))?;
    if lo.is_nan() || hi.is_nan() || lo >= hi {
        return Err(format!("lo {lo} must be < hi {hi}"));
    }
    Ok((lo, hi))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroupInput {
    #[serde(default)]
    group: Option<String>,
    alpha: u32,
    m_trials: u32,
    #[serde(default)]
    correct: Option<Vec<bool>>,
    #[serde(default)]
    responses: Option<Vec<String>>,
    #[serde(default)]
    answer: Option<String>,
    #[serde(default)]
    qa_type: Option<QaType>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Segment(_) => "segment",
            Command::Tree(_) => "tree",
            Command::BuildSft(_) => "build-sft",
            Command::EstimateDemand(_) => "estimate-demand",
            Command::BuildRl(_) => "build-rl",
            Command::Reward(_) => "reward",
            Command::GrpoEval(_) => "grpo-eval",
        }
    }

    fn output(&self) -> Option<&Path> {
        match self {
            Command::Segment(a) => Some(&a.output),
            Command::BuildSft(a) => Some(&a.output),
            Command::EstimateDemand(a) => Some(&a.output),
            Command::BuildRl(a) => Some(&a.output),
            Command::Tree(_) | Command::Reward(_) | Command::GrpoEval(_) => None,
        }
    }
}

fn segment_all(shots: &[ShotBoundarySet], tau: f64) -> Result<Vec<toc_core::Clip>> {
    let mut clips = Vec::new();
    for set in shots {
        clips.extend(stitch(set, tau)?);
    }
    Ok(clips)
}

fn run(command: &Command, report: &mut Report) -> Result<()> {
    match command {
        Command::Segment(a) => {
            let config = a.config.load()?;
            let tau = a.tau.unwrap_or(config.tau);
            let shots: Vec<ShotBoundarySet> = read_records(&a.shots)?;
            let clips = segment_all(&shots, tau)?;
            write_records(&a.output, &clips)?;
            report.push("videos", shots.len());
            report.push("shots", shots.iter().map(|s| s.shot_count()).sum::<usize>());
            report.push("clips", clips.len());
        }
        Command::Tree(a) => {
            let tree = CueTree::build(a.n)?;
            let subtree = tree.backtrack(a.select.iter().copied())?;
            for (depth, layer) in subtree.layer_intervals().iter().enumerate() {
                let shown: Vec<String> = layer.iter().map(|i| i.to_string()).collect();
                println!("layer {depth}\t{}", shown.join(" "));
            }
            let compilations = subtree.compilations();
            for (step, c) in compilations.iter().enumerate() {
                let ids: Vec<String> = c.clip_indices.iter().map(|i| i.to_string()).collect();
                println!("step {}\t{{{}}}", step + 1, ids.join(","));
            }
            report.push("levels", tree.levels());
            report.push("layers", subtree.layers().len());
            report.push("compilations", compilations.len());
        }
        Command::BuildSft(a) => {
            let mut config = a.config.load()?;
            if a.lenient {
                config.strict_parsing = false;
            }
            let tau = a.tau.unwrap_or(config.tau);
            let gateway = config.gateway(&[ModelRole::Mllm, ModelRole::Llm])?;
            let clips = match (&a.videos, &a.shots) {
                (Some(path), _) => read_records(path)?,
                (None, Some(path)) => {
                    let shots: Vec<ShotBoundarySet> = read_records(path)?;
                    segment_all(&shots, tau)?
                }
                (None, None) => bail!("one of --videos or --shots is required"),
            };
            let qa: Vec<QaRecord> = read_records(&a.qa)?;
            let settings = SftSettings::from(&config);
            let r = run_sft_pipeline(
                &gateway,
                &group_clips(clips),
                &inputs_from_records(&qa),
                &settings,
                &a.output,
            )?;
            report.extend(r);
        }
        Command::EstimateDemand(a) => {
            let mut config = a.config.load()?;
            if let Some(m) = a.m {
                config.m_trials = m;
            }
            config.validate()?;
            let gateway = config.gateway(&[ModelRole::Mllm])?;
            let qa: Vec<QaRecord> = read_records(&a.qa)?;
            let r = run_estimate_demand(
                &gateway,
                &qa,
                &TrialSettings::from(&config),
                config.m_trials,
                config.parallelism,
                &a.output,
            )?;
            report.extend(r);
        }
        Command::BuildRl(a) => {
            let config = a.config.load()?;
            let band = a.band.unwrap_or(config.band);
            let target = a.target.unwrap_or(config.target_rl_size);
            if target == 0 {
                bail!("--target must be >= 1");
            }
            let r = run_build_rl(&a.input, band, target, config.seed, &a.output)?;
            for w in r.warnings() {
                eprintln!("warning: {w}");
            }
            report.extend(r);
        }
        Command::Reward(a) => {
            let groups: Vec<GroupInput> = read_records(&a.group)?;
            println!("group\tresponse\tcorrect\treward\tadvantage\tscaled_advantage");
            for (g, entry) in groups.iter().enumerate() {
                let gamma = rd_reward(true, entry.alpha, entry.m_trials)?;
                let scored = match (&entry.correct, &entry.responses) {
                    (Some(flags), None) => RewardGroup::from_correctness(
                        gamma,
                        flags.iter().map(|&c| (String::new(), c)).collect(),
                    )?,
                    (None, Some(responses)) => {
                        let answer = entry
                            .answer
                            .as_deref()
                            .context("`responses` needs `answer`")?;
                        let qa_type = entry.qa_type.unwrap_or(QaType::MultipleChoice);
                        RewardGroup::from_responses(
                            gamma,
                            responses,
                            answer,
                            qa_type,
                            a.numeric_rel_tol,
                        )?
                    }
                    _ => bail!("group {g}: give exactly one of `correct` or `responses`"),
                };
                let name = entry.group.clone().unwrap_or_else(|| g.to_string());
                for (i, o) in scored.outcomes.iter().enumerate() {
                    println!(
                        "{name}\t{i}\t{}\t{}\t{}\t{}",
                        o.correct,
                        fmt_g(o.reward),
                        fmt_g(o.advantage),
                        fmt_g(o.scaled_advantage)
                    );
                }
                report.push(format!("group.{name}.correct"), scored.correct_count());
            }
            report.push("groups", groups.len());
        }
        Command::GrpoEval(a) => {
            let groups: Vec<PolicyGroup> = read_records(&a.logprobs)?;
            let objective = grpo_objective(&groups, a.epsilon, a.beta)?;
            println!("{}", fmt_g(objective));
            report.push("groups", groups.len());
            report.push("objective", objective);
        }
    }
    Ok(())
}

fn error_kind(err: &anyhow::Error) -> &'static str {
    if err.is::<toc_core::ConfigError>() {
        "config_error"
    } else if err.is::<toc_core::records::RecordError>() {
        "record_error"
    } else {
        "error"
    }
}

fn report_path(cli: &Cli) -> PathBuf {
    if let Some(p) = &cli.report {
        return p.clone();
    }
    match cli.command.output() {
        Some(out) => {
            let mut s = out.as_os_str().to_owned();
            s.push(".report");
            PathBuf::from(s)
        }
        None => PathBuf::from(format!("toc-{}.report", cli.command.name())),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            let json = serde_json::json!({ "error": { "kind": "usage_error", "message": e.kind().to_string() } });
            eprintln!("{json}");
            return ExitCode::from(2);
        }
    };

    let mut report = Report::new(cli.command.name());
    let result = run(&cli.command, &mut report);
    let code = match &result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = error_kind(e);
            let message = format!("{e:#}");
            report.push("error", format!("{kind}: {message}"));
            let json = serde_json::json!({ "error": { "kind": kind, "message": message } });
            eprintln!("{json}");
            ExitCode::from(1)
        }
    };
    let path = report_path(&cli);
    if let Err(e) = report.write(&path) {
        eprintln!(
            "{}",
            serde_json::json!({ "error": { "kind": "record_error", "message": e.to_string() } })
        );
        return ExitCode::from(1);
    }
    code
}
