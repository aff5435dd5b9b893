//! Binary key datasets on disk: generation, sequential split reads, and
//! random sampling inside a split.
//!
//! File layout (all integers little-endian):
//!
//! ```text
//! magic "WVH1" | version u16 | record_size u16 | u u32 | n u64 | records...
//! ```
//!
//! Each of the `n` fixed-size records starts with a 4-byte unsigned key in
//! `[1, u]`; any remaining record bytes are opaque payload (zero-filled by
//! the generator). Offsets are computable from the record index alone, which
//! is what the random-offset sampler relies on.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::sim::SplitDescriptor;

pub const MAGIC: &[u8; 4] = b"WVH1";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: u64 = 20;
pub const MIN_RECORD_SIZE: u16 = 4;

/// Refuse to generate datasets larger than this; desk-scale runs never come
/// close and a typo in `n` should not fill the disk.
pub const MAX_DATASET_BYTES: u64 = 16 << 30;

/// Description of a dataset file: record count, key domain, record layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetMeta {
    pub n: u64,
    pub u: u32,
    pub record_size: u16,
    pub path: PathBuf,
}

impl DatasetMeta {
    /// Reads and validates the header of an existing dataset file.
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path)?;
        let file_len = file.metadata()?.len();
        let mut reader = BufReader::new(file);
        let mut header = [0u8; HEADER_LEN as usize];
        reader
            .read_exact(&mut header)
            .map_err(|_| Error::BadFormat(format!("{}: header too short", path.display())))?;
        if &header[0..4] != MAGIC {
            return Err(Error::BadFormat(format!("{}: bad magic", path.display())));
        }
        let version = u16::from_le_bytes([header[4], header[5]]);
        if version != FORMAT_VERSION {
            return Err(Error::BadFormat(format!("unsupported version {version}")));
        }
        let record_size = u16::from_le_bytes([header[6], header[7]]);
        let u = u32::from_le_bytes(header[8..12].try_into().unwrap());
        let n = u64::from_le_bytes(header[12..20].try_into().unwrap());
        if record_size < MIN_RECORD_SIZE {
            return Err(Error::BadFormat(format!("record size {record_size} below 4")));
        }
        let expected = HEADER_LEN + n * record_size as u64;
        if file_len != expected {
            return Err(Error::BadFormat(format!(
                "{}: file length {file_len} != header + n * record_size = {expected}",
                path.display()
            )));
        }
        Ok(Self { n, u, record_size, path: path.to_path_buf() })
    }

    /// Key domain after zero-padding up to a power of two; all transforms
    /// run over this domain.
    pub fn padded_u(&self) -> u32 {
        crate::wavelet::padded_domain(self.u)
    }

    pub fn byte_offset_of_record(&self, index: u64) -> u64 {
        HEADER_LEN + index * self.record_size as u64
    }
}

/// Parameters for synthetic Zipfian data: key frequencies proportional to
/// `rank^-alpha`, with a seeded random rank-to-key bijection and globally
/// shuffled record order.
#[derive(Debug, Clone, PartialEq)]
pub struct ZipfConfig {
    pub n: u64,
    pub u: u32,
    pub alpha: f64,
    pub seed: u64,
}

/// Generates a Zipfian dataset file. Deterministic per config: the same
/// seed yields a byte-identical file.
pub fn generate_zipf(cfg: &ZipfConfig, record_size: u16, out: &Path) -> Result<DatasetMeta> {
    if cfg.n == 0 {
        return Err(Error::InvalidConfig("n must be at least 1".into()));
    }
    if cfg.u < 2 {
        return Err(Error::InvalidConfig("u must be at least 2".into()));
    }
    if !(cfg.alpha >= 0.0) {
        return Err(Error::InvalidConfig(format!("alpha {} must be >= 0", cfg.alpha)));
    }
    if record_size < MIN_RECORD_SIZE {
        return Err(Error::InvalidConfig(format!(
            "record size {record_size} must be at least {MIN_RECORD_SIZE}"
        )));
    }
    let total_bytes = cfg
        .n
        .checked_mul(record_size as u64)
        .and_then(|b| b.checked_add(HEADER_LEN))
        .filter(|&b| b <= MAX_DATASET_BYTES)
        .ok_or_else(|| {
            Error::InvalidConfig(format!(
                "dataset of {} records x {record_size} bytes exceeds the {MAX_DATASET_BYTES}-byte limit",
                cfg.n
            ))
        })?;
    let _ = total_bytes;

    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);

    // Inverse-CDF sampling over cumulative rank weights.
    let u = cfg.u as usize;
    let mut cumulative = Vec::with_capacity(u);
    let mut acc = 0.0f64;
    for rank in 0..u {
        acc += ((rank + 1) as f64).powf(-cfg.alpha);
        cumulative.push(acc);
    }
    let total_weight = acc;

    // Ranks are mapped to keys through a seeded permutation so that key
    // identity carries no rank information.
    let mut rank_to_key: Vec<u32> = (1..=cfg.u).collect();
    rank_to_key.shuffle(&mut rng);

    let mut keys = Vec::with_capacity(cfg.n as usize);
    for _ in 0..cfg.n {
        let r = rng.gen::<f64>() * total_weight;
        let rank = cumulative.partition_point(|&c| c < r).min(u - 1);
        keys.push(rank_to_key[rank]);
    }
    // Global shuffle of record order: identical keys must not run together
    // in the file.
    keys.shuffle(&mut rng);

    write_dataset(&keys, cfg.u, record_size, out)
}

/// Writes an explicit key sequence as a dataset file (records in the given
/// order, payload zero-filled).
pub fn write_dataset(keys: &[u32], u: u32, record_size: u16, out: &Path) -> Result<DatasetMeta> {
    if record_size < MIN_RECORD_SIZE {
        return Err(Error::InvalidConfig(format!(
            "record size {record_size} must be at least {MIN_RECORD_SIZE}"
        )));
    }
    for &key in keys {
        if key == 0 || key > u {
            return Err(Error::KeyOutOfRange { key, u });
        }
    }
    let mut writer = BufWriter::new(File::create(out)?);
    writer.write_all(MAGIC)?;
    writer.write_all(&FORMAT_VERSION.to_le_bytes())?;
    writer.write_all(&record_size.to_le_bytes())?;
    writer.write_all(&u.to_le_bytes())?;
    writer.write_all(&(keys.len() as u64).to_le_bytes())?;
    let padding = vec![0u8; record_size as usize - 4];
    for &key in keys {
        writer.write_all(&key.to_le_bytes())?;
        writer.write_all(&padding)?;
    }
    writer.flush()?;
    Ok(DatasetMeta {
        n: keys.len() as u64,
        u,
        record_size,
        path: out.to_path_buf(),
    })
}

/// Sequentially reads every record key of one split.
pub fn read_split_keys(meta: &DatasetMeta, split: &SplitDescriptor) -> Result<Vec<u32>> {
    let file = File::open(&meta.path)?;
    let mut reader = BufReader::new(file);
    reader.seek(SeekFrom::Start(split.byte_range.0))?;
    let mut record = vec![0u8; meta.record_size as usize];
    let mut keys = Vec::with_capacity(split.n_records as usize);
    for _ in 0..split.n_records {
        reader.read_exact(&mut record)?;
        keys.push(u32::from_le_bytes(record[0..4].try_into().unwrap()));
    }
    Ok(keys)
}

/// First-level sampling mode. The production sampler draws a fixed-size
/// sample without replacement by random record offsets; coin-flip mode keeps
/// each record independently with probability `p`, matching the independence
/// assumptions of the estimator analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMode {
    WithoutReplacement,
    CoinFlip,
}

impl SampleMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "noreplace" => Ok(Self::WithoutReplacement),
            "coinflip" => Ok(Self::CoinFlip),
            other => Err(Error::InvalidConfig(format!(
                "unknown samples mode {other:?} (expected noreplace or coinflip)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::WithoutReplacement => "noreplace",
            Self::CoinFlip => "coinflip",
        }
    }
}

/// First-level sampling parameters: rate `p = 1/(epsilon^2 * n)`, clamped
/// to 1 for small datasets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleConfig {
    pub epsilon: f64,
    pub p: f64,
    pub seed: u64,
    pub mode: SampleMode,
}

impl SampleConfig {
    pub fn new(epsilon: f64, n: u64, seed: u64, mode: SampleMode) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidConfig(format!("epsilon {epsilon} must be > 0")));
        }
        if n == 0 {
            return Err(Error::InvalidConfig("n must be at least 1".into()));
        }
        let p = (1.0 / (epsilon * epsilon * n as f64)).min(1.0);
        Ok(Self { epsilon, p, seed, mode })
    }
}

/// Deterministic per-split RNG stream derived from `(seed, split id)`, so
/// splits can be processed in any order without changing results. `stream`
/// separates independent uses within one split (e.g. record sampling versus
/// per-key coin flips).
pub fn split_rng(seed: u64, split_id: u64, stream: u64) -> ChaCha12Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&split_id.to_le_bytes());
    key[16..24].copy_from_slice(&stream.to_le_bytes());
    ChaCha12Rng::from_seed(key)
}

/// Samples records from one split and returns aggregated `(key, count)`
/// pairs in ascending key order.
///
/// Without replacement: exactly `round(p * n_j)` distinct record offsets are
/// drawn, sorted ascending, and read in a single forward sweep. Coin-flip:
/// each record position is kept independently with probability `p`, also a
/// single forward sweep. Deterministic per `(seed, split id)`.
pub fn sample_split(
    meta: &DatasetMeta,
    split: &SplitDescriptor,
    cfg: &SampleConfig,
) -> Result<Vec<(u32, u64)>> {
    let mut rng = split_rng(cfg.seed, split.id as u64, 0);
    let n_j = split.n_records as usize;
    let offsets: Vec<usize> = match cfg.mode {
        SampleMode::WithoutReplacement => {
            let amount = (cfg.p * n_j as f64 + 0.5).floor() as usize;
            let mut picked = rand::seq::index::sample(&mut rng, n_j, amount.min(n_j)).into_vec();
            picked.sort_unstable();
            picked
        }
        SampleMode::CoinFlip => (0..n_j).filter(|_| rng.gen::<f64>() < cfg.p).collect(),
    };

    let mut file = File::open(&meta.path)?;
    let mut record = vec![0u8; meta.record_size as usize];
    let mut counts: std::collections::HashMap<u32, u64> = std::collections::HashMap::new();
    for idx in offsets {
        file.seek(SeekFrom::Start(
            split.byte_range.0 + idx as u64 * meta.record_size as u64,
        ))?;
        file.read_exact(&mut record)?;
        let key = u32::from_le_bytes(record[0..4].try_into().unwrap());
        *counts.entry(key).or_insert(0) += 1;
    }
    let mut out: Vec<(u32, u64)> = counts.into_iter().collect();
    out.sort_unstable_by_key(|&(key, _)| key);
    Ok(out)
}
