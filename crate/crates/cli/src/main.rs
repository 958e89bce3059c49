mod config;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use specdec_core::decode::{DecodeParams, DEFAULT_KAPPA};
use specdec_core::harness::{mc_distribution_test, run_experiment, ExperimentConfig, Outputs};
use specdec_core::model::{
    layout_side, load_model_spec, save_model_spec, GridWorldSpec, LinearDrafterSpec, ModelSpec, SharedDrafter,
    TabularModelSpec,
};
use specdec_core::train::{train_drafter, TrainConfig};
use specdec_core::tree::{CandidateMode, TreeMask};
use specdec_core::verify::{RelaxConfig, SiblingMode};

use config::{load_config, parse_seeds, DecodeFile, OracleFile, TrainFile};

#[derive(Parser)]
#[command(name = "specdec", version, about = "Speculative decoding experiments on desk-scale models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decode one sequence per seed and write metrics.
    Decode(DecodeArgs),
    /// Train a linear drafter on target rollouts.
    Train(TrainArgs),
    /// Compare decoded sequence frequencies with the exact target distribution.
    Oracle(OracleArgs),
    /// Write the default model files into a directory.
    Init(InitArgs),
}

#[derive(Args)]
struct DecodeArgs {
    /// JSON file with any of the flags below (camelCase keys).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    drafter: Option<PathBuf>,
    /// ar, vanilla or cascade.
    #[arg(long)]
    mode: Option<String>,
    /// Per-level widths, e.g. 4,2,2,1,1.
    #[arg(long)]
    tree: Option<String>,
    #[arg(long)]
    tau_pos: Option<f64>,
    #[arg(long)]
    tau_seq: Option<f64>,
    #[arg(long)]
    tvd_budget: Option<f64>,
    #[arg(long)]
    enable_i: Option<bool>,
    #[arg(long)]
    enable_c: Option<bool>,
    /// literal or residual_adjusted.
    #[arg(long)]
    sibling_mode: Option<String>,
    /// top_w or sampled.
    #[arg(long)]
    candidate_mode: Option<String>,
    /// Drafter pass cost relative to a target pass.
    #[arg(long)]
    kappa: Option<f64>,
    /// Inclusive range `a..b`, comma list, or both.
    #[arg(long)]
    seeds: Option<String>,
    /// Sequence length (defaults to the full grid).
    #[arg(long)]
    len: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    heatmap: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    tau_seq_train: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of target rollouts.
    #[arg(long)]
    sequences: Option<usize>,
    #[arg(long)]
    hard_ce_weight: Option<f64>,
    #[arg(long)]
    len: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Defaults to the all-zero (uniform) linear drafter.
    #[arg(long)]
    drafter: Option<PathBuf>,
    #[arg(long)]
    mode: Option<String>,
    /// Defaults to a chain as deep as `--len`.
    #[arg(long)]
    tree: Option<String>,
    #[arg(long)]
    tau_pos: Option<f64>,
    #[arg(long)]
    tau_seq: Option<f64>,
    #[arg(long)]
    tvd_budget: Option<f64>,
    /// Defaults to residual_adjusted.
    #[arg(long)]
    sibling_mode: Option<String>,
    /// Defaults to sampled.
    #[arg(long)]
    candidate_mode: Option<String>,
    #[arg(long)]
    len: Option<usize>,
    #[arg(long)]
    samples: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InitArgs {
    #[arg(long, default_value = ".")]
    dir: PathBuf,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Decode(a) => decode(a),
        Command::Train(a) => train(a),
        Command::Oracle(a) => oracle(a),
        Command::Init(a) => init(a),
    }
}

fn required<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.with_context(|| format!("missing --{flag} (flag or config file)"))
}

fn relax_from(
    tau_pos: Option<f64>,
    tau_seq: Option<f64>,
    delta: Option<f64>,
    enable_i: Option<bool>,
    enable_c: Option<bool>,
    sibling: Option<String>,
    default_sibling: SiblingMode,
) -> Result<RelaxConfig> {
    let d = RelaxConfig::default();
    let cfg = RelaxConfig {
        tau_pos: tau_pos.unwrap_or(d.tau_pos),
        tau_seq: tau_seq.unwrap_or(d.tau_seq),
        delta: delta.unwrap_or(d.delta),
        enable_i: enable_i.unwrap_or(d.enable_i),
        enable_c: enable_c.unwrap_or(d.enable_c),
        sibling_mode: sibling.as_deref().map(str::parse).transpose()?.unwrap_or(default_sibling),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn decode(a: DecodeArgs) -> Result<()> {
    let f: DecodeFile = load_config(a.config.as_deref())?;
    let seeds = match (a.seeds, f.seeds) {
        (Some(s), _) => parse_seeds(&s)?,
        (None, Some(s)) => s.resolve()?,
        (None, None) => vec![0],
    };
    let cfg = ExperimentConfig {
        model: required(a.model.or(f.model), "model")?,
        drafter: a.drafter.or(f.drafter),
        mode: required(a.mode.or(f.mode), "mode")?,
        tree: a.tree.or(f.tree).map(|t| t.parse()).transpose()?.unwrap_or_default(),
        candidate_mode: a.candidate_mode.or(f.candidate_mode).map(|m| m.parse()).transpose()?.unwrap_or_default(),
        relax: relax_from(
            a.tau_pos.or(f.tau_pos),
            a.tau_seq.or(f.tau_seq),
            a.tvd_budget.or(f.tvd_budget),
            a.enable_i.or(f.enable_i),
            a.enable_c.or(f.enable_c),
            a.sibling_mode.or(f.sibling_mode),
            SiblingMode::Literal,
        )?,
        kappa: a.kappa.or(f.kappa).unwrap_or(DEFAULT_KAPPA),
        seeds,
        len: a.len.or(f.len),
        outputs: Outputs { metrics: a.out.or(f.out), trace: a.trace.or(f.trace), heatmap: a.heatmap.or(f.heatmap) },
    };
    let result = run_experiment(&cfg)?;
    println!("{}", serde_json::to_string(&result.records(&cfg.mode).last().expect("aggregate record"))?);
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let f: TrainFile = load_config(a.config.as_deref())?;
    let model = required(a.model.or(f.model), "model")?;
    let out = required(a.out.or(f.out), "out")?;
    let d = TrainConfig::default();
    let cfg = TrainConfig {
        c: a.c.or(f.c).unwrap_or(d.c),
        tau_seq_train: a.tau_seq_train.or(f.tau_seq_train).unwrap_or(d.tau_seq_train),
        learning_rate: a.lr.or(f.lr).unwrap_or(d.learning_rate),
        epochs: a.epochs.or(f.epochs).unwrap_or(d.epochs),
        hard_ce_weight: a.hard_ce_weight.or(f.hard_ce_weight).unwrap_or(d.hard_ce_weight),
        seed: a.seed.or(f.seed).unwrap_or(d.seed),
        sequences: a.sequences.or(f.sequences).unwrap_or(d.sequences),
        sequence_len: a.len.or(f.len),
    };
    let target = load_model_spec(&model)?.into_target()?;
    let drafter = train_drafter(target.as_ref(), &cfg)?;
    save_model_spec(&out, &ModelSpec::LinearDrafter(drafter))?;
    Ok(())
}

fn oracle(a: OracleArgs) -> Result<()> {
    let f: OracleFile = load_config(a.config.as_deref())?;
    let model = required(a.model.or(f.model), "model")?;
    let len = required(a.len.or(f.len), "len")?;
    let samples = a.samples.or(f.samples).unwrap_or(100_000);
    let mode = a.mode.or(f.mode).unwrap_or_else(|| "vanilla".into());
    let target = load_model_spec(&model)?.into_target()?;
    let drafter: SharedDrafter = match a.drafter.or(f.drafter) {
        Some(p) => load_model_spec(&p)?.into_drafter()?,
        None => {
            let side = layout_side(target.grid_side(), None, len)?;
            std::sync::Arc::new(LinearDrafterSpec::zeros(target.vocab(), side).build()?)
        }
    };
    let params = DecodeParams {
        mask: match a.tree.or(f.tree) {
            Some(t) => t.parse()?,
            None => TreeMask::chain(len.max(1))?,
        },
        candidate_mode: a.candidate_mode.or(f.candidate_mode).map(|m| m.parse()).transpose()?.unwrap_or(CandidateMode::Sampled),
        relax: relax_from(
            a.tau_pos.or(f.tau_pos),
            a.tau_seq.or(f.tau_seq),
            a.tvd_budget.or(f.tvd_budget),
            None,
            None,
            a.sibling_mode.or(f.sibling_mode),
            SiblingMode::ResidualAdjusted,
        )?,
        kappa: DEFAULT_KAPPA,
    };
    let report = mc_distribution_test(
        target.as_ref(),
        Some(drafter.as_ref()),
        &mode,
        &params,
        samples,
        len,
        a.seed.or(f.seed).unwrap_or(0),
        None,
    )?;
    let line = serde_json::to_string(&report)?;
    if let Some(out) = a.out.or(f.out) {
        write_text(&out, &format!("{line}\n"))?;
    }
    println!("{line}");
    Ok(())
}

fn init(a: InitArgs) -> Result<()> {
    if !a.dir.is_dir() {
        bail!("{} is not a directory", a.dir.display());
    }
    let files = [
        ("gridworld.json", ModelSpec::Gridworld(GridWorldSpec::desk_default())),
        ("tabular.json", ModelSpec::Tabular(TabularModelSpec::random(4, 1, 4, 0))),
        ("tabular-drafter.json", ModelSpec::Tabular(TabularModelSpec::random(4, 1, 4, 1))),
        ("drafter-zero.json", ModelSpec::LinearDrafter(LinearDrafterSpec::zeros(32, 8))),
    ];
    for (name, spec) in files {
        let path = a.dir.join(name);
        save_model_spec(&path, &spec)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
