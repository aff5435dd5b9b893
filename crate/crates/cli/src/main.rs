//! Command-line driver: dataset generation, single algorithm runs,
//! experiment grids from TOML configs, and SSE scoring of saved histograms.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use wavehist::experiment::{
    self, dataset_truth, run_algorithm, write_rows_csv, Algo, ExperimentConfig,
};
use wavehist::ingest::{generate_zipf, DatasetMeta, SampleMode, ZipfConfig};
use wavehist::wavelet::{compute_sse, reconstruct_from_topk, TopK, TopKEntry};

#[derive(Parser)]
#[command(
    name = "wavehist",
    about = "Exact and sampling-based top-k Haar wavelet histograms on a simulated map-reduce cluster"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a binary Zipfian key dataset.
    Generate {
        /// Number of records.
        #[arg(long)]
        n: u64,
        /// Key domain size (keys are drawn from [1, u]).
        #[arg(long)]
        u: u32,
        /// Zipf skew exponent (0 = uniform).
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Bytes per record; the first 4 hold the key.
        #[arg(long, default_value_t = 4)]
        record_size: u16,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one algorithm once against a dataset and append a result row.
    Run {
        /// send-v | send-coef | h-wtopk | basic-s | improved-s | twolevel-s
        #[arg(long)]
        algo: String,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        k: usize,
        /// Sampling error parameter (sampling algorithms only).
        #[arg(long, default_value_t = 0.02)]
        epsilon: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// noreplace | coinflip
        #[arg(long, default_value = "noreplace")]
        samples_mode: String,
        /// Split size in records.
        #[arg(long)]
        beta: u64,
        /// Result CSV (one row; header written when the file is new).
        #[arg(long)]
        out: PathBuf,
        /// Optional per-round communication ledger CSV.
        #[arg(long)]
        ledger_out: Option<PathBuf>,
        /// Optional top-k coefficients CSV (index,value) for `sse`.
        #[arg(long)]
        histogram_out: Option<PathBuf>,
        /// Dataset skew label for the result row (data files do not carry it).
        #[arg(long, default_value_t = f64::NAN)]
        alpha: f64,
    },
    /// Run the full algorithm x seed grid described by a TOML config.
    Experiment {
        #[arg(long)]
        config: PathBuf,
    },
    /// SSE between a dataset's frequency vector and a saved histogram.
    Sse {
        #[arg(long)]
        data: PathBuf,
        /// CSV of `index,value` rows as written by `run --histogram-out`.
        #[arg(long)]
        histogram: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Generate { n, u, alpha, seed, record_size, out } => {
            let cfg = ZipfConfig { n, u, alpha, seed };
            let meta = generate_zipf(&cfg, record_size, &out)
                .with_context(|| format!("generating {}", out.display()))?;
            eprintln!(
                "wrote {} records over [1, {}] (alpha {alpha}, seed {seed}) to {}",
                meta.n,
                meta.u,
                meta.path.display()
            );
        }
        Command::Run {
            algo,
            data,
            k,
            epsilon,
            seed,
            samples_mode,
            beta,
            out,
            ledger_out,
            histogram_out,
            alpha,
        } => {
            let algo = Algo::parse(&algo)?;
            let mode = SampleMode::parse(&samples_mode)?;
            let meta = DatasetMeta::open(&data)?;
            let truth = dataset_truth(&meta, k)?;
            let run = run_algorithm(&meta, algo, k, epsilon, seed, mode, beta, alpha, &truth)?;

            append_result_row(&out, &run.row)?;
            if let Some(path) = ledger_out {
                let mut w = BufWriter::new(File::create(&path)?);
                run.ledger.write_csv(&mut w)?;
            }
            if let Some(path) = histogram_out {
                write_histogram(&path, &run.topk)?;
            }
            println!("{}", run.row.to_csv());
        }
        Command::Experiment { config } => {
            let text = std::fs::read_to_string(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let cfg: ExperimentConfig = toml::from_str(&text)
                .with_context(|| format!("parsing {}", config.display()))?;
            let output = experiment::run_experiment(&cfg)?;

            let mut w = BufWriter::new(File::create(&cfg.output)?);
            write_rows_csv(&output.rows, &mut w)?;
            w.flush()?;
            let ledger_path = ledger_sibling(&cfg.output);
            let mut w = BufWriter::new(File::create(&ledger_path)?);
            output.ledger.write_csv(&mut w)?;
            w.flush()?;
            eprintln!(
                "wrote {} rows to {} (ledger: {})",
                output.rows.len(),
                cfg.output.display(),
                ledger_path.display()
            );
        }
        Command::Sse { data, histogram } => {
            let meta = DatasetMeta::open(&data)?;
            let truth = dataset_truth(&meta, 1)?;
            let topk = read_histogram(&histogram)?;
            let r = reconstruct_from_topk(&topk, meta.padded_u())?;
            let sse = compute_sse(&truth.v, &r)?;
            println!("{sse}");
        }
    }
    Ok(())
}

fn ledger_sibling(output: &Path) -> PathBuf {
    let mut name = output.file_stem().unwrap_or_default().to_os_string();
    name.push("-ledger.csv");
    output.with_file_name(name)
}

fn append_result_row(path: &Path, row: &experiment::ResultRow) -> Result<()> {
    let new = !path.exists();
    let mut file = File::options().create(true).append(true).open(path)?;
    if new {
        writeln!(file, "{}", experiment::RESULT_CSV_HEADER)?;
    }
    writeln!(file, "{}", row.to_csv())?;
    Ok(())
}

fn write_histogram(path: &Path, topk: &TopK) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "index,value")?;
    for e in &topk.entries {
        writeln!(w, "{},{}", e.index, e.value)?;
    }
    w.flush()?;
    Ok(())
}

fn read_histogram(path: &Path) -> Result<TopK> {
    let reader = BufReader::new(File::open(path)?);
    let mut entries = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || (lineno == 0 && line.starts_with("index")) {
            continue;
        }
        let Some((idx, value)) = line.split_once(',') else {
            bail!("{}: line {} is not `index,value`", path.display(), lineno + 1);
        };
        entries.push(TopKEntry {
            index: idx.trim().parse().context("parsing histogram index")?,
            value: value.trim().parse().context("parsing histogram value")?,
        });
    }
    Ok(TopK { entries })
}
