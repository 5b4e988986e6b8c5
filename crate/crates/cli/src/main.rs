use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use ffbench::{emit_plot_data, run_benchmark, write_plot_data, BenchError, RunConfig, PLOT_DATA_CSV};
use ffgood::data::DatasetName;

/// Train Forward-Forward networks over one or more goodness objectives and
/// write result tables.
#[derive(Debug, Parser)]
#[command(name = "ffbench", version)]
struct Cli {
    /// TOML or JSON run config; flags below override its values.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// mnist, fashionmnist, cifar10 or stl10.
    #[arg(long)]
    dataset: Option<DatasetName>,

    /// Goodness name; repeat for a sweep, or pass "all".
    #[arg(long)]
    goodness: Vec<String>,

    #[arg(long)]
    seed: Option<u64>,

    #[arg(long)]
    epochs: Option<usize>,

    /// 2x500 layers, 5 epochs, first 10k train and 1k test samples.
    #[arg(long)]
    desk_scale: bool,

    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Write plot_data.csv. Without DIR, after this run into --out; with DIR,
    /// convert an existing run directory and skip training.
    #[arg(long, value_name = "DIR", num_args = 0..=1)]
    emit_plot_data: Option<Option<PathBuf>>,

    /// With --emit-plot-data, write what exists when some series are missing.
    #[arg(long)]
    allow_partial: bool,
}

fn apply_flags(cli: &Cli, mut cfg: RunConfig) -> RunConfig {
    if let Some(d) = cli.dataset {
        cfg.dataset = d;
    }
    if !cli.goodness.is_empty() {
        cfg.goodness = cli.goodness.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(e) = cli.epochs {
        cfg.ff.insert("epochs".into(), e.into());
    }
    if cli.desk_scale {
        cfg.desk_scale = true;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    cfg
}

fn plot(dir: &std::path::Path, allow_partial: bool) -> Result<(), BenchError> {
    let data = emit_plot_data(dir, allow_partial)?;
    let path = write_plot_data(&dir.join(PLOT_DATA_CSV), &data.rows)?;
    if !data.missing.is_empty() {
        eprintln!(
            "{}",
            serde_json::json!({ "warning": "missing_series", "missing": data.missing })
        );
    }
    println!("wrote {} ({} rows)", path.display(), data.rows.len());
    Ok(())
}

fn run(cli: &Cli) -> Result<(), BenchError> {
    if let Some(Some(dir)) = &cli.emit_plot_data {
        return plot(dir, cli.allow_partial);
    }
    let base = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let resolved = apply_flags(cli, base).resolve()?;
    let outcome = run_benchmark(&resolved)?;
    for row in outcome.rows() {
        println!(
            "{:<28} multipass {:.4}  probe {:.4}  loss {:.4}  flops {}",
            row.goodness, row.multipass_acc, row.class_acc, row.class_loss, row.flops
        );
    }
    println!("wrote {}", resolved.out.display());
    if cli.emit_plot_data.is_some() {
        plot(&resolved.out, cli.allow_partial)?;
    }
    match outcome.non_finite_error() {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
