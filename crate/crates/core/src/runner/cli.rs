//! Command-line interface.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use super::{compose_config, environment_layer, plot, run_experiment, RunOptions};
use crate::corpus::{generate_synthetic_suite, SynthParams, INTERMEDIATE_TASK, TARGET_TASK};

/// Config-driven multitask and transfer-learning experiments.
#[derive(Debug, Parser)]
#[command(name = "phasekit", version, args_conflicts_with_subcommands = true)]
pub struct Cli {
    /// Config file; repeat to compose several, later files win.
    #[arg(long = "config_file", alias = "config-file", value_name = "PATH")]
    pub config_file: Vec<PathBuf>,
    /// Assignments applied after all config files, e.g. "lr = 0.001, run_name = b".
    #[arg(long)]
    pub overrides: Option<String>,
    /// Replace an existing run directory.
    #[arg(long)]
    pub force: bool,
    /// Continue an existing run from its latest checkpoints.
    #[arg(long)]
    pub resume: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a run's metric events as CSV and SVG curves.
    Plot {
        /// Run directory holding events.jsonl.
        #[arg(long = "run_dir", alias = "run-dir")]
        run_dir: PathBuf,
        /// Output directory; defaults to <run_dir>/plots.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate the synthetic task suite and an example experiment config.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn example_config(data_dir: &std::path::Path) -> String {
    let dir = data_dir.display().to_string().replace('\\', "/");
    format!(
        "include \"tasks.conf\"\n\n\
         exp_name = synth_demo\n\
         run_name = transfer\n\
         data_dir = \"{dir}\"\n\
         project_dir = \"{dir}/runs\"\n\n\
         do_pretrain = 1\n\
         pretrain_tasks = \"{INTERMEDIATE_TASK}\"\n\
         do_target_task_training = 1\n\
         target_tasks = \"{TARGET_TASK}\"\n\
         do_full_eval = 1\n\
         write_preds = \"val,test\"\n\
         write_strict_glue_format = 1\n"
    )
}

fn synth(out: &std::path::Path, seed: u64) -> anyhow::Result<()> {
    let suite = generate_synthetic_suite(seed, &SynthParams::default(), out)?;
    let root = std::fs::canonicalize(&suite.root)?;
    let example = root.join("example.conf");
    std::fs::write(&example, example_config(&root))?;
    println!("wrote {} tasks under {}", suite.descriptors.len(), root.display());
    println!("task definitions: {}", suite.tasks_conf.display());
    println!("example experiment: {}", example.display());
    Ok(())
}

fn plot_run(run_dir: &std::path::Path, out: Option<PathBuf>) -> anyhow::Result<()> {
    let events = super::events::read_events(&run_dir.join("events.jsonl"))?;
    let out = out.unwrap_or_else(|| run_dir.join("plots"));
    let files = plot::write_plots(&events, &out)?;
    println!("wrote {} files to {}", files.len(), out.display());
    Ok(())
}

/// Parses `args` and runs the requested action. Returns the exit code:
/// 0 on success, 2 on usage or config errors, 1 on runtime failures.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    super::init_logging();
    match cli.command {
        Some(Command::Plot { run_dir, out }) => report(plot_run(&run_dir, out)),
        Some(Command::Synth { out, seed }) => report(synth(&out, seed)),
        None => {
            if cli.config_file.is_empty() {
                eprintln!("error: at least one --config_file is required\n\nUsage: phasekit --config_file <PATH>... [--overrides <FRAGMENT>] [--force] [--resume]");
                return 2;
            }
            let cfg = match compose_config(environment_layer(|k| std::env::var(k).ok()), &cli.config_file, cli.overrides.as_deref()) {
                Ok(cfg) => cfg,
                Err(e) => {
                    eprintln!("config error: {e}");
                    return 2;
                }
            };
            let opts = RunOptions { force: cli.force, resume: cli.resume, interrupt: None };
            match run_experiment(&cfg, &opts) {
                Ok(summary) => {
                    for (task, metrics) in &summary.eval {
                        let line: Vec<String> = metrics.iter().map(|(k, v)| format!("{k}={v:.4}")).collect();
                        println!("{task}: {}", line.join(" "));
                    }
                    println!("run directory: {}", summary.run_dir.display());
                    0
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    e.exit_code()
                }
            }
        }
    }
}

fn report(result: anyhow::Result<()>) -> i32 {
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
