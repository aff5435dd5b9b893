//! Experiment orchestration: run algorithm/seed grids over generated
//! datasets and report SSE and communication per run as CSV rows.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Deserialize;

use crate::approx::{basic_sampling, improved_sampling, twolevel};
use crate::error::{Error, Result};
use crate::exact::{hwtopk, send_coef, send_v};
use crate::ingest::{generate_zipf, DatasetMeta, SampleMode, ZipfConfig};
use crate::sim::{partition_dataset, CommLedger};
use crate::wavelet::{
    compute_sse, haar_transform_dense, reconstruct_from_topk, select_top_k, FrequencyVector, TopK,
};

/// The six algorithms runnable from configs and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum Algo {
    #[serde(rename = "send-v")]
    SendV,
    #[serde(rename = "send-coef")]
    SendCoef,
    #[serde(rename = "h-wtopk")]
    HWTopk,
    #[serde(rename = "basic-s")]
    BasicS,
    #[serde(rename = "improved-s")]
    ImprovedS,
    #[serde(rename = "twolevel-s")]
    TwoLevelS,
}

impl Algo {
    pub const ALL: [Algo; 6] = [
        Algo::SendV,
        Algo::SendCoef,
        Algo::HWTopk,
        Algo::BasicS,
        Algo::ImprovedS,
        Algo::TwoLevelS,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Algo::SendV => "send-v",
            Algo::SendCoef => "send-coef",
            Algo::HWTopk => "h-wtopk",
            Algo::BasicS => "basic-s",
            Algo::ImprovedS => "improved-s",
            Algo::TwoLevelS => "twolevel-s",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown algorithm {s:?}")))
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Algo::SendV | Algo::SendCoef | Algo::HWTopk)
    }
}

/// One CSV row of experiment output.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub algo: &'static str,
    pub trial: u64,
    pub k: usize,
    pub epsilon: f64,
    pub alpha: f64,
    pub m: usize,
    pub pairs: u64,
    pub bytes: u64,
    pub wall_time_ms: u64,
    pub sse: f64,
    pub sse_ideal: f64,
}

pub const RESULT_CSV_HEADER: &str =
    "algo,trial,k,epsilon,alpha,m,pairs,bytes,wall_time_ms,sse,sse_ideal";

impl ResultRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.algo,
            self.trial,
            self.k,
            self.epsilon,
            self.alpha,
            self.m,
            self.pairs,
            self.bytes,
            self.wall_time_ms,
            self.sse,
            self.sse_ideal
        )
    }
}

pub fn write_rows_csv<W: Write>(rows: &[ResultRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{RESULT_CSV_HEADER}")?;
    for row in rows {
        writeln!(w, "{}", row.to_csv())?;
    }
    Ok(())
}

/// Ground truth for one dataset and one k: the exact frequency vector and
/// the SSE of the exact best k-term representation (the lower bound every
/// method is measured against).
#[derive(Debug, Clone)]
pub struct DatasetTruth {
    pub v: FrequencyVector,
    pub ideal_topk: TopK,
    pub sse_ideal: f64,
}

pub fn dataset_truth(meta: &DatasetMeta, k: usize) -> Result<DatasetTruth> {
    let u = meta.padded_u();
    let whole = partition_dataset(meta, meta.n.max(1))?;
    let keys = crate::ingest::read_split_keys(meta, &whole[0])?;
    let v = FrequencyVector::from_keys(keys, u)?;
    let ideal_topk = select_top_k(&haar_transform_dense(&v)?, k);
    let sse_ideal = compute_sse(&v, &reconstruct_from_topk(&ideal_topk, u)?)?;
    Ok(DatasetTruth { v, ideal_topk, sse_ideal })
}

/// Result of one algorithm execution.
#[derive(Debug)]
pub struct SingleRun {
    pub row: ResultRow,
    pub topk: TopK,
    pub ledger: CommLedger,
}

/// Runs one algorithm once against a dataset, timing it and scoring the
/// resulting histogram against the dataset truth.
#[allow(clippy::too_many_arguments)]
pub fn run_algorithm(
    meta: &DatasetMeta,
    algo: Algo,
    k: usize,
    epsilon: f64,
    seed: u64,
    mode: SampleMode,
    beta: u64,
    alpha: f64,
    truth: &DatasetTruth,
) -> Result<SingleRun> {
    let mut splits = partition_dataset(meta, beta)?;
    let m = splits.len();
    let mut ledger = CommLedger::new();
    let started = Instant::now();
    let topk = match algo {
        Algo::SendV => send_v(meta, &mut splits, k, &mut ledger)?,
        Algo::SendCoef => send_coef(meta, &mut splits, k, &mut ledger)?,
        Algo::HWTopk => hwtopk(meta, &mut splits, k, &mut ledger)?,
        Algo::BasicS => {
            basic_sampling(meta, &mut splits, k, epsilon, seed, mode, &mut ledger)?.topk
        }
        Algo::ImprovedS => {
            improved_sampling(meta, &mut splits, k, epsilon, seed, mode, &mut ledger)?.topk
        }
        Algo::TwoLevelS => {
            twolevel(meta, &mut splits, k, epsilon, seed, mode, &mut ledger)?.topk
        }
    };
    let wall_time_ms = started.elapsed().as_millis() as u64;
    let u = meta.padded_u();
    let sse = compute_sse(&truth.v, &reconstruct_from_topk(&topk, u)?)?;
    let totals = ledger.totals(algo.name());
    Ok(SingleRun {
        row: ResultRow {
            algo: algo.name(),
            trial: seed,
            k,
            epsilon,
            alpha,
            m,
            pairs: totals.pairs,
            bytes: totals.bytes,
            wall_time_ms,
            sse,
            sse_ideal: truth.sse_ideal,
        },
        topk,
        ledger,
    })
}

fn default_record_size() -> u16 {
    4
}

fn default_sample_mode() -> String {
    SampleMode::WithoutReplacement.as_str().to_string()
}

fn default_dataset_seed() -> u64 {
    1
}

/// Declarative experiment: one dataset, a set of algorithms, a list of
/// trial seeds. Parsed from TOML by the CLI.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algos: Vec<Algo>,
    pub k: usize,
    pub epsilon: f64,
    pub n: u64,
    pub u: u32,
    pub alpha: f64,
    /// Split size in records.
    pub beta: u64,
    /// Explicit trial seeds; when empty, seeds `1..=trials` are used.
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub trials: u32,
    pub output: PathBuf,
    #[serde(default = "default_record_size")]
    pub record_size: u16,
    #[serde(default = "default_sample_mode")]
    pub sample_mode: String,
    /// Seed for dataset generation (independent of trial seeds).
    #[serde(default = "default_dataset_seed")]
    pub dataset_seed: u64,
    /// Existing dataset to reuse; generated here when absent.
    #[serde(default)]
    pub data: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn effective_seeds(&self) -> Result<Vec<u64>> {
        if !self.seeds.is_empty() {
            Ok(self.seeds.clone())
        } else if self.trials > 0 {
            Ok((1..=self.trials as u64).collect())
        } else {
            Err(Error::InvalidConfig("config needs seeds or a trials count".into()))
        }
    }

    fn dataset_path(&self) -> PathBuf {
        if let Some(path) = &self.data {
            return path.clone();
        }
        let dir = self.output.parent().unwrap_or_else(|| Path::new("."));
        dir.join(format!(
            "zipf-n{}-u{}-a{}-s{}.bin",
            self.n, self.u, self.alpha, self.dataset_seed
        ))
    }
}

/// Experiment output: one row per (algorithm, seed), plus the merged ledger
/// with per-round totals summed over trials.
#[derive(Debug)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub ledger: CommLedger,
}

/// Opens or generates the configured dataset and validates its shape.
pub fn prepare_dataset(cfg: &ExperimentConfig) -> Result<DatasetMeta> {
    let path = cfg.dataset_path();
    if path.exists() {
        let meta = DatasetMeta::open(&path)?;
        if meta.n != cfg.n || meta.u != cfg.u {
            return Err(Error::InvalidConfig(format!(
                "dataset {} has n={}, u={} but config says n={}, u={}",
                path.display(),
                meta.n,
                meta.u,
                cfg.n,
                cfg.u
            )));
        }
        Ok(meta)
    } else {
        let zipf = ZipfConfig { n: cfg.n, u: cfg.u, alpha: cfg.alpha, seed: cfg.dataset_seed };
        generate_zipf(&zipf, cfg.record_size, &path)
    }
}

/// Runs the full (algorithm x seed) grid of a config. Deterministic: the
/// same config produces identical rows (wall time aside) and ledgers.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let mode = SampleMode::parse(&cfg.sample_mode)?;
    let seeds = cfg.effective_seeds()?;
    let meta = prepare_dataset(cfg)?;
    let truth = dataset_truth(&meta, cfg.k)?;

    let mut rows = Vec::with_capacity(cfg.algos.len() * seeds.len());
    let mut ledger = CommLedger::new();
    for &algo in &cfg.algos {
        for &seed in &seeds {
            let run = run_algorithm(
                &meta, algo, cfg.k, cfg.epsilon, seed, mode, cfg.beta, cfg.alpha, &truth,
            )?;
            ledger.merge(&run.ledger);
            rows.push(run.row);
        }
    }
    Ok(ExperimentOutput { rows, ledger })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmpdir(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join("wavehist-experiment-tests").join(name);
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    fn small_config(dir: &Path) -> ExperimentConfig {
        ExperimentConfig {
            algos: vec![Algo::SendV, Algo::HWTopk, Algo::TwoLevelS],
            k: 4,
            epsilon: 0.1,
            n: 4000,
            u: 128,
            alpha: 1.1,
            beta: 1000,
            seeds: vec![1, 2],
            trials: 0,
            output: dir.join("rows.csv"),
            record_size: 4,
            sample_mode: "noreplace".into(),
            dataset_seed: 9,
            data: None,
        }
    }

    #[test]
    fn algo_names_round_trip() {
        for algo in Algo::ALL {
            assert_eq!(Algo::parse(algo.name()).unwrap(), algo);
        }
        assert!(Algo::parse("send-sketch").is_err());
    }

    #[test]
    fn exact_algorithms_attain_the_ideal_sse() {
        let cfg = small_config(&tmpdir("ideal"));
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.rows.len(), 6);
        for row in &out.rows {
            if row.algo == "send-v" || row.algo == "h-wtopk" {
                assert!(
                    (row.sse - row.sse_ideal).abs() <= 1e-9 * (1.0 + row.sse_ideal),
                    "{}: sse {} vs ideal {}",
                    row.algo,
                    row.sse,
                    row.sse_ideal
                );
            } else {
                assert!(row.sse >= row.sse_ideal - 1e-9);
            }
            assert_eq!(row.m, 4);
        }
    }

    #[test]
    fn full_k_reconstruction_has_zero_sse() {
        let dir = tmpdir("full-k");
        let mut cfg = small_config(&dir);
        cfg.algos = vec![Algo::SendV];
        cfg.k = 128;
        cfg.seeds = vec![1];
        let out = run_experiment(&cfg).unwrap();
        assert!(out.rows[0].sse.abs() <= 1e-9);
    }

    #[test]
    fn rerun_reproduces_rows_and_ledger() {
        let cfg = small_config(&tmpdir("determinism"));
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        let strip = |rows: &[ResultRow]| -> Vec<ResultRow> {
            rows.iter().map(|r| ResultRow { wall_time_ms: 0, ..r.clone() }).collect()
        };
        assert_eq!(strip(&a.rows), strip(&b.rows));
        assert_eq!(a.ledger, b.ledger);
    }

    #[test]
    fn config_shape_errors_are_reported() {
        let dir = tmpdir("mismatch");
        let mut cfg = small_config(&dir);
        cfg.data = Some(dir.join("explicit.bin"));
        run_experiment(&cfg).unwrap();
        // same dataset file, contradictory config
        cfg.n = 5000;
        assert!(matches!(run_experiment(&cfg), Err(Error::InvalidConfig(_))));

        let mut cfg2 = small_config(&dir);
        cfg2.seeds.clear();
        cfg2.trials = 0;
        assert!(cfg2.effective_seeds().is_err());
    }

    #[test]
    fn csv_rows_have_the_documented_schema() {
        let row = ResultRow {
            algo: "send-v",
            trial: 3,
            k: 30,
            epsilon: 0.02,
            alpha: 1.1,
            m: 8,
            pairs: 10,
            bytes: 80,
            wall_time_ms: 5,
            sse: 1.5,
            sse_ideal: 1.5,
        };
        assert_eq!(row.to_csv(), "send-v,3,30,0.02,1.1,8,10,80,5,1.5,1.5");
        let mut out = Vec::new();
        write_rows_csv(&[row], &mut out).unwrap();
        assert!(String::from_utf8(out).unwrap().starts_with(RESULT_CSV_HEADER));
    }
}
