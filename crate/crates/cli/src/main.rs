use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use synthfair::classifier::Hyper;
use synthfair::data::{load_csv, write_csv_file, Recipe};
use synthfair::dp::PrivacyBudget;
use synthfair::pipeline::{self, BenchmarkReport, ExperimentConfig, RankTask, BASELINE};
use synthfair::seed::derive_rng;
use synthfair::synth::{build, SynthSettings};

const OUT_DIR_ENV: &str = "SYNTHFAIR_OUT_DIR";

// println! panics when stdout is a closed pipe (e.g. `| head`)
macro_rules! say {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

#[derive(Debug, Parser)]
#[command(name = "synthfair", version, about = "Fairness and utility benchmark for private synthetic data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load a raw CSV through a recipe and write the prepared dataset.
    Prepare {
        /// Built-in recipe id (adult, compas, compas-fair) or recipe file.
        #[arg(long)]
        recipe: String,
        #[arg(long = "in")]
        input: PathBuf,
        /// Defaults to <out dir>/<recipe>.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit one synthesizer on a prepared dataset and sample from it.
    Synth {
        #[arg(long)]
        recipe: String,
        /// Prepared dataset.
        #[arg(long = "in")]
        input: PathBuf,
        /// Synthesizer name.
        #[arg(long)]
        gen: String,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = PrivacyBudget::DEFAULT_DELTA)]
        delta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Rows to sample; defaults to the input size.
        #[arg(long)]
        n: Option<usize>,
        /// Defaults to <out dir>/<recipe>-<gen>.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment grid and write its reports.
    Benchmark {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to <out dir>/<config name>.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Print the grid without running it.
        #[arg(long)]
        dry_run: bool,
    },
}

/// Exit status contract: 1 for usage and config errors, 2 for failures
/// while running.
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        let usage = e.chain().any(|c| {
            matches!(
                c.downcast_ref::<synthfair::Error>(),
                Some(
                    synthfair::Error::Config(_)
                        | synthfair::Error::InvalidArgument(_)
                        | synthfair::Error::UnknownSynthesizer(_)
                        | synthfair::Error::Recipe(_)
                )
            )
        });
        if usage {
            Failure::Usage(e)
        } else {
            Failure::Runtime(e)
        }
    }
}

impl From<synthfair::Error> for Failure {
    fn from(e: synthfair::Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

fn out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV).map_or_else(|| PathBuf::from("out"), PathBuf::from)
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn file_tag(recipe: &str) -> String {
    Path::new(recipe)
        .file_stem()
        .map_or_else(|| recipe.to_string(), |s| s.to_string_lossy().into_owned())
}

fn prepare(recipe_id: &str, input: &Path, out: Option<PathBuf>) -> Result<(), Failure> {
    let recipe = Recipe::resolve(recipe_id).context("resolving recipe")?;
    let prepared = pipeline::prepare(&recipe, input, Hyper::default())
        .with_context(|| format!("preparing {}", input.display()))?;
    let out = out.unwrap_or_else(|| out_dir().join(format!("{}.csv", file_tag(recipe_id))));
    ensure_parent(&out)?;
    write_csv_file(&prepared.data, &out)?;

    let l = &prepared.load;
    say!("rows read:    {}", l.rows_read);
    say!("rows kept:    {}", l.rows_kept);
    say!("rows dropped: {}", l.rows_dropped);
    for (attr, n) in &l.dropped_by_attribute {
        say!("  {attr}: {n}");
    }
    if let Some(m) = &prepared.massage {
        say!(
            "massaging: M = {} (promoted {}, demoted {}), label gap {:.4} -> {:.4}",
            m.m, m.promoted, m.demoted, m.label_gap_before, m.label_gap_after
        );
    }
    say!("n = {}, written to {}", prepared.data.n(), out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn synth(
    recipe_id: &str,
    input: &Path,
    gen: &str,
    eps: f64,
    delta: f64,
    seed: u64,
    n: Option<usize>,
    out: Option<PathBuf>,
) -> Result<(), Failure> {
    let budget = PrivacyBudget::new(eps, delta)?;
    let synthesizer = build(gen, &SynthSettings::default())?;
    if n == Some(0) {
        return Err(Failure::Usage(anyhow::anyhow!("--n must be at least 1")));
    }
    let recipe = Recipe::resolve(recipe_id).context("resolving recipe")?;
    let (data, _) = load_csv(input, &recipe).with_context(|| format!("loading {}", input.display()))?;
    let fitted = synthesizer
        .fit(&data, budget, &mut derive_rng(seed, &[gen, "fit"]))
        .with_context(|| format!("fitting {gen}"))?;
    let rows = n.unwrap_or(data.n());
    let sample = fitted
        .model
        .sample(data.schema(), rows, &mut derive_rng(seed, &[gen, "sample"]))?;
    let out = out.unwrap_or_else(|| out_dir().join(format!("{}-{gen}.csv", file_tag(recipe_id))));
    ensure_parent(&out)?;
    write_csv_file(&sample, &out)?;
    say!(
        "{gen}: eps spent {} of {eps}, {rows} rows written to {}",
        fitted.accountant.spent_epsilon(),
        out.display()
    );
    Ok(())
}

fn fmt_stat(report: &BenchmarkReport, i: usize, metric: &str) -> String {
    match report.cells[i].metrics.get(metric) {
        Some(s) => match (s.mean, s.std) {
            (Some(m), Some(sd)) => format!("{m:.3}±{sd:.3}"),
            (Some(m), None) => format!("{m:.3}"),
            _ => "-".into(),
        },
        None => "-".into(),
    }
}

fn print_summary(report: &BenchmarkReport) {
    say!(
        "{:<12} {:>6} {:>13} {:>13} {:>13} {:>13} {:>5} {:>5}",
        "synthesizer", "eps", "AUC(R)", "AUC(S)", "DSP(R)", "DEO(R)", "degen", "fail"
    );
    for (i, c) in report.cells.iter().enumerate() {
        let eps = c.epsilon.map_or_else(|| "-".into(), |e| e.to_string());
        say!(
            "{:<12} {:>6} {:>13} {:>13} {:>13} {:>13} {:>5} {:>5}",
            c.synthesizer,
            eps,
            fmt_stat(report, i, "r_auc"),
            fmt_stat(report, i, "s_auc"),
            fmt_stat(report, i, "r_dsp"),
            fmt_stat(report, i, "r_deo"),
            c.degenerate,
            c.failed
        );
    }
    for &e in &report.config.epsilons {
        for task in RankTask::ALL {
            if let Some(order) = report.ranking(task, e) {
                say!("rank {task} @ eps={e}: {}", order.join(" > "));
            }
        }
    }
}

fn benchmark(config: &Path, out: Option<PathBuf>, jobs: usize, dry_run: bool) -> Result<(), Failure> {
    let cfg = ExperimentConfig::from_file(config).with_context(|| format!("reading {}", config.display()))?;
    if dry_run {
        say!("dataset {} ({})", cfg.dataset, cfg.data.display());
        say!(
            "{} synthesizers x {} epsilons x {} rounds = {} cells (+1 {BASELINE} baseline)",
            cfg.synthesizers.len(),
            cfg.epsilons.len(),
            cfg.rounds,
            cfg.cell_count()
        );
        for s in &cfg.synthesizers {
            for e in &cfg.epsilons {
                say!("  {s} eps={e} x{}", cfg.rounds);
            }
        }
        return Ok(());
    }
    let started = Instant::now();
    let report = pipeline::run_benchmark(&cfg, jobs)?;
    let dir = out.unwrap_or_else(|| out_dir().join(file_tag(&config.to_string_lossy())));
    let files = pipeline::write_report(&report, &dir)?;
    print_summary(&report);
    say!(
        "{} rounds in {:.1}s, {} files written to {}",
        report.rounds.len(),
        started.elapsed().as_secs_f64(),
        files.len(),
        dir.display()
    );
    let failed = report.failed_rounds();
    if failed > 0 {
        return Err(Failure::Runtime(anyhow::anyhow!("{failed} rounds failed (see {})", dir.display())));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Prepare { recipe, input, out } => prepare(&recipe, &input, out),
        Command::Synth {
            recipe,
            input,
            gen,
            eps,
            delta,
            seed,
            n,
            out,
        } => synth(&recipe, &input, &gen, eps, delta, seed, n, out),
        Command::Benchmark {
            config,
            out,
            jobs,
            dry_run,
        } => benchmark(&config, out, jobs, dry_run),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
