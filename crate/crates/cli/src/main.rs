//! Command-line front end: synthetic data generation, segmentation, and
//! evaluation of label sequences.
//!
//! Exit codes: 0 success, 2 usage or validation problems, 3 numerical
//! failure during sampling.

mod io;
mod result;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand};
use nalgebra::DMatrix;
use rayon::prelude::*;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;
use trajseg::config::RunConfig;
use trajseg::data::{count_switches, generate_slds, hamming_error, match_labels, toy_spec};
use trajseg::gibbs::{run_chain, ChainResult};
use trajseg::RngStream;

use result::{chain_report, distinct_count, dynamics_report, switch_points, ResultDocument, Timings};

#[derive(Parser)]
#[command(
    name = "trajseg",
    about = "Trajectory segmentation via switching linear dynamics",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic toy trajectory with known mode labels.
    Synth {
        /// Number of time steps.
        #[arg(long = "T", default_value_t = 400)]
        t: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV of observations.
        #[arg(long)]
        out: PathBuf,
        /// Output file of true mode labels.
        #[arg(long)]
        labels: PathBuf,
        /// Optional output CSV of noise-free states.
        #[arg(long)]
        states: Option<PathBuf>,
        /// Segment layout "len:mode,len:mode,..." (defaults to the built-in
        /// six-segment cycle).
        #[arg(long)]
        layout: Option<String>,
    },
    /// Infer a segmentation for a trajectory CSV.
    Segment {
        /// Input CSV (one row per time step).
        #[arg(long)]
        input: PathBuf,
        /// TOML configuration file; flags below override its values.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output JSON result document.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        chains: Option<usize>,
        /// Truncation level L.
        #[arg(long = "L")]
        trunc: Option<usize>,
        #[arg(long)]
        sticky: Option<bool>,
        #[arg(long)]
        resample_hyperparameters: Option<bool>,
        /// Optional ground-truth labels for a hamming_vs_truth field.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Emit tidy long-format plot data (t, dimension, value, mode).
        #[arg(long)]
        emit_plot_data: Option<PathBuf>,
    },
    /// Compare a predicted label file against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Output JSON metrics file.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Synth {
            t,
            seed,
            out,
            labels,
            states,
            layout,
        } => cmd_synth(t, seed, &out, &labels, states.as_deref(), layout.as_deref()),
        Command::Segment {
            input,
            config,
            out,
            seed,
            iterations,
            chains,
            trunc,
            sticky,
            resample_hyperparameters,
            truth,
            emit_plot_data,
        } => cmd_segment(SegmentArgs {
            input,
            config,
            out,
            seed,
            iterations,
            chains,
            trunc,
            sticky,
            resample_hyperparameters,
            truth,
            emit_plot_data,
        }),
        Command::Eval { pred, truth, out } => cmd_eval(&pred, &truth, &out),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

/// 3 for numerical failures inside the sampler, 2 for everything else.
fn exit_code_for(err: &anyhow::Error) -> u8 {
    if let Some(core_err) = err.downcast_ref::<trajseg::Error>() {
        if core_err.is_numerical() {
            return 3;
        }
    }
    2
}

fn parse_layout(text: &str) -> anyhow::Result<Vec<(usize, usize)>> {
    text.split(',')
        .map(|part| {
            let (len, mode) = part
                .trim()
                .split_once(':')
                .ok_or_else(|| anyhow!("layout segment {part:?} is not \"len:mode\""))?;
            Ok((
                len.trim()
                    .parse::<usize>()
                    .with_context(|| format!("bad segment length {len:?}"))?,
                mode.trim()
                    .parse::<usize>()
                    .with_context(|| format!("bad mode index {mode:?}"))?,
            ))
        })
        .collect()
}

fn cmd_synth(
    t: usize,
    seed: u64,
    out: &std::path::Path,
    labels: &std::path::Path,
    states: Option<&std::path::Path>,
    layout: Option<&str>,
) -> anyhow::Result<()> {
    let layout = layout.map(parse_layout).transpose()?;
    let spec = toy_spec::<f64>(t, layout)?;
    let mut rng = RngStream::from_seed(seed);
    let traj = generate_slds(&spec, &mut rng)?;
    io::write_matrix_csv(out, &traj.y)?;
    io::write_labels(labels, &traj.z_true)?;
    if let Some(path) = states {
        io::write_matrix_csv(path, &traj.x_true)?;
    }
    println!(
        "wrote {} steps ({} modes, {} switches) to {}",
        traj.y.nrows(),
        distinct_count(&traj.z_true),
        count_switches(&traj.z_true),
        out.display()
    );
    Ok(())
}

struct SegmentArgs {
    input: PathBuf,
    config: Option<PathBuf>,
    out: PathBuf,
    seed: Option<u64>,
    iterations: Option<usize>,
    chains: Option<usize>,
    trunc: Option<usize>,
    sticky: Option<bool>,
    resample_hyperparameters: Option<bool>,
    truth: Option<PathBuf>,
    emit_plot_data: Option<PathBuf>,
}

fn load_config(args: &SegmentArgs) -> anyhow::Result<RunConfig> {
    let mut config: RunConfig = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read config {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("bad config {}", path.display()))?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(iterations) = args.iterations {
        config.iterations = iterations;
        config.select_window = config.select_window.min(iterations.max(1));
    }
    if let Some(chains) = args.chains {
        config.chains = chains;
    }
    if let Some(trunc) = args.trunc {
        config.trunc = trunc;
    }
    if let Some(sticky) = args.sticky {
        config.sticky = sticky;
    }
    if let Some(resample) = args.resample_hyperparameters {
        config.resample_hyperparameters = resample;
    }
    config.validate()?;
    Ok(config)
}

fn cmd_segment(args: SegmentArgs) -> anyhow::Result<()> {
    let started = Instant::now();
    let config = load_config(&args)?;

    let y = io::read_matrix_csv(&args.input)?;
    if y.iter().any(|v| !v.is_finite()) {
        bail!("{} contains NaN or infinite values", args.input.display());
    }
    let read_input_s = started.elapsed().as_secs_f64();

    let inference_started = Instant::now();
    let chain_results: Vec<ChainResult<f64>> = (0..config.chains)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::from_seed(config.seed.wrapping_add(i as u64));
            run_chain(&y, &config, &mut rng)
        })
        .collect::<trajseg::Result<_>>()?;
    let inference_s = inference_started.elapsed().as_secs_f64();

    let best_chain = chain_results
        .iter()
        .enumerate()
        .max_by(|a, b| {
            a.1.best_log_joint
                .partial_cmp(&b.1.best_log_joint)
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .map(|(i, _)| i)
        .expect("at least one chain");
    let best = &chain_results[best_chain];

    let hamming_vs_truth = match &args.truth {
        Some(path) => {
            let z_true = io::read_labels(path)?;
            Some(hamming_error(&best.best.z, &z_true)?)
        }
        None => None,
    };

    if let Some(path) = &args.emit_plot_data {
        emit_plot_data(path, &y, best)?;
    }

    let reports: Vec<_> = chain_results
        .iter()
        .enumerate()
        .map(|(i, r)| chain_report(config.seed.wrapping_add(i as u64), r, config.burn_in))
        .collect();

    let doc = ResultDocument {
        config_echo: best.config_echo.clone(),
        best_chain,
        z_best: best.best.z.clone(),
        switch_points: switch_points(&best.best.z),
        num_modes_used: distinct_count(&best.best.z),
        dynamics_best: dynamics_report(best),
        log_joint_trace: best
            .log_joint_trace
            .iter()
            .skip(config.burn_in)
            .copied()
            .collect(),
        hamming_vs_truth,
        chains: reports,
        timings: Timings {
            read_input_s,
            inference_s,
            total_s: started.elapsed().as_secs_f64(),
        },
    };
    let json = serde_json::to_string_pretty(&doc)?;
    std::fs::write(&args.out, json.as_bytes())
        .with_context(|| format!("cannot write {}", args.out.display()))?;
    println!(
        "segmented {} steps: {} modes, {} switches, best log-joint {:.3} (chain {best_chain})",
        y.nrows(),
        doc.num_modes_used,
        doc.switch_points.len(),
        best.best_log_joint,
    );
    Ok(())
}

/// Tidy long-format plot data: observed and smoothed series per dimension,
/// labeled with the best mode sequence.
fn emit_plot_data(
    path: &std::path::Path,
    y: &DMatrix<f64>,
    best: &ChainResult<f64>,
) -> anyhow::Result<()> {
    use std::io::Write;
    let file = std::fs::File::create(path)
        .with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "t,dimension,value,mode")?;
    let z = &best.best.z;
    for t in 0..y.nrows() {
        for j in 0..y.ncols() {
            writeln!(w, "{t},y{j},{},{}", y[(t, j)], z[t])?;
        }
        for i in 0..best.best.x.nrows() {
            writeln!(w, "{t},x{i},{},{}", best.best.x[(i, t)], z[t])?;
        }
    }
    Ok(())
}

fn cmd_eval(
    pred: &std::path::Path,
    truth: &std::path::Path,
    out: &std::path::Path,
) -> anyhow::Result<()> {
    let z_pred = io::read_labels(pred)?;
    let z_true = io::read_labels(truth)?;
    let matching = match_labels(&z_pred, &z_true)?;
    let hamming = hamming_error(&z_pred, &z_true)?;

    let pred_labels: Vec<usize> = matching.assignment.keys().copied().collect();
    let mut true_labels = z_true.clone();
    true_labels.sort_unstable();
    true_labels.dedup();
    let confusion: Vec<Vec<usize>> = pred_labels
        .iter()
        .map(|&p| {
            true_labels
                .iter()
                .map(|&t| {
                    z_pred
                        .iter()
                        .zip(&z_true)
                        .filter(|&(&zp, &zt)| zp == p && zt == t)
                        .count()
                })
                .collect()
        })
        .collect();

    let doc = serde_json::json!({
        "hamming_error": hamming,
        "matched_overlap": matching.overlap,
        "label_mapping": matching
            .assignment
            .iter()
            .map(|(&p, &t)| serde_json::json!({"pred": p, "true": t}))
            .collect::<Vec<_>>(),
        "confusion": {
            "pred_labels": pred_labels,
            "true_labels": true_labels,
            "counts": confusion,
        },
        "switches_pred": count_switches(&z_pred),
        "switches_true": count_switches(&z_true),
        "length": z_pred.len(),
    });
    std::fs::write(out, serde_json::to_string_pretty(&doc)?)
        .with_context(|| format!("cannot write {}", out.display()))?;
    println!("hamming error {hamming:.4} over {} steps", z_pred.len());
    Ok(())
}
