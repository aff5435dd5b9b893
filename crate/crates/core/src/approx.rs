//! One-round sampling-based approximate wavelet histograms.
//!
//! All three algorithms draw a first-level record sample per split at rate
//! `p = 1/(epsilon^2 * n)` and differ in what they emit:
//!
//! * [`basic_sampling`] — every sampled key, aggregated as one
//!   `(key, count)` pair per split.
//! * [`improved_sampling`] — only keys whose sampled count reaches
//!   `epsilon * t_j` (with `t_j` the split's sample size), capping each
//!   split at `1/epsilon` pairs but biasing the estimate low.
//! * [`twolevel`] — a second sampling level over the per-split counts:
//!   counts at or above `1/(epsilon * sqrt(m))` are sent exactly, smaller
//!   counts survive as bare presence pairs with probability proportional to
//!   the count. The estimator `s_hat(x) = rho(x) + M/(epsilon * sqrt(m))`
//!   (exact partial sum plus presence count scaled back up) stays unbiased
//!   with standard deviation at most `1/epsilon`, for an expected
//!   `O(sqrt(m)/epsilon)` emitted pairs.
//!
//! Presence pairs travel as a zero count, so an exact count of zero is never
//! emitted and the wire stays unambiguous.

use std::collections::HashSet;

use rand::Rng;

use crate::error::{Error, Result};
use crate::ingest::{sample_split, split_rng, DatasetMeta, SampleConfig, SampleMode};
use crate::sim::{run_job, CommLedger, EmitValue, Emission, MapOutput, SplitDescriptor};
use crate::wavelet::{haar_forward, select_top_k, CoeffSet, FrequencyVector, TopK};

pub const BASIC_S: &str = "basic-s";
pub const IMPROVED_S: &str = "improved-s";
pub const TWOLEVEL_S: &str = "twolevel-s";

/// RNG stream id for the second sampling level, distinct from the
/// first-level stream used by `sample_split`.
const SECOND_LEVEL_STREAM: u64 = 1;

/// Outcome of a sampling run: the selected coefficients and the estimated
/// frequency vector they were computed from.
#[derive(Debug, Clone)]
pub struct SamplingRun {
    pub topk: TopK,
    pub v_hat: Vec<f64>,
}

/// Second-level emission for one sampled key of one split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TwoLevelEmission {
    pub key: u32,
    pub payload: TwoLevelPayload,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TwoLevelPayload {
    /// The split's exact sampled count; sent when it reaches the threshold
    /// `1/(epsilon * sqrt(m))`.
    Exact(u64),
    /// Presence-only pair for a sub-threshold key, kept with probability
    /// `epsilon * sqrt(m) * count`.
    Presence,
}

/// Applies the second sampling level to one split's aggregated sample
/// counts. Iterates keys in the given (ascending) order so the RNG stream
/// is consumed deterministically.
pub fn twolevel_map<R: Rng>(
    s_j: &[(u32, u64)],
    epsilon: f64,
    m: usize,
    rng: &mut R,
) -> Vec<TwoLevelEmission> {
    let scale = epsilon * (m as f64).sqrt();
    let threshold = 1.0 / scale;
    let mut out = Vec::new();
    for &(key, count) in s_j {
        if count == 0 {
            continue;
        }
        if count as f64 >= threshold {
            out.push(TwoLevelEmission { key, payload: TwoLevelPayload::Exact(count) });
        } else {
            // algebraically already < 1 here; the clamp is a guard
            let prob = (scale * count as f64).min(1.0);
            if rng.gen::<f64>() < prob {
                out.push(TwoLevelEmission { key, payload: TwoLevelPayload::Presence });
            }
        }
    }
    out
}

/// Combines one key's received pairs into the estimate `s_hat(x) =
/// rho(x) + M/(epsilon * sqrt(m))`. A split reporting the same key twice
/// (in particular mixing an exact count with a presence pair) is a protocol
/// violation.
pub fn twolevel_estimate_key(
    received: &[(usize, TwoLevelPayload)],
    epsilon: f64,
    m: usize,
) -> Result<f64> {
    let mut seen = HashSet::with_capacity(received.len());
    let mut rho = 0u64;
    let mut presence = 0u64;
    for &(source, payload) in received {
        if !seen.insert(source) {
            return Err(Error::Protocol(format!(
                "split {source} reported the same key twice"
            )));
        }
        match payload {
            TwoLevelPayload::Exact(c) => rho += c,
            TwoLevelPayload::Presence => presence += 1,
        }
    }
    Ok(rho as f64 + presence as f64 / (epsilon * (m as f64).sqrt()))
}

/// Dense estimated frequency vector from all keys' grouped emissions;
/// keys never emitted estimate to zero.
pub fn twolevel_estimate<'a, I>(groups: I, epsilon: f64, m: usize, p: f64, u: u32) -> Result<Vec<f64>>
where
    I: IntoIterator<Item = (u32, &'a [(usize, TwoLevelPayload)])>,
{
    let mut v_hat = vec![0.0f64; u as usize];
    for (key, received) in groups {
        if key == 0 || key > u {
            return Err(Error::KeyOutOfRange { key, u });
        }
        v_hat[key as usize - 1] = twolevel_estimate_key(received, epsilon, m)? / p;
    }
    Ok(v_hat)
}

/// Variance bound for the estimator of detail coefficient `i`, conditioned
/// on the realized global sample counts:
/// `epsilon * 2^j * n / (u * sqrt(m) * p)` times the sampled mass on the
/// basis vector's support. Derived from the per-key presence variance
/// `Var[M] <= epsilon * sqrt(m) * s(x)` scaled through `v_hat = s_hat / p`
/// and the squared basis magnitude `2^j / u`.
pub fn coeff_variance_bound(
    i: u32,
    sample: &FrequencyVector,
    epsilon: f64,
    m: usize,
    n: u64,
    p: f64,
) -> Result<f64> {
    let u = sample.u();
    if i < 2 || i > u {
        return Err(Error::InvalidConfig(format!(
            "variance bound is defined for detail coefficients 2..={u}, got {i}"
        )));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidConfig(format!("sample rate {p} outside (0, 1]")));
    }
    let level = 31 - (i - 1).leading_zeros(); // j with i = 2^j + k + 1
    let k = (i - 1) - (1 << level);
    let block = (u >> level) as usize; // support width of psi_i
    let start = k as usize * block;
    let support_sum: u64 = sample.counts()[start..start + block].iter().sum();
    Ok(epsilon * (1u64 << level) as f64 * n as f64 / (u as f64 * (m as f64).sqrt() * p)
        * support_sum as f64)
}

fn finish(v_hat: Vec<f64>, k: usize) -> Result<SamplingRun> {
    let coeffs = CoeffSet::from_coeffs(haar_forward(&v_hat)?)?;
    Ok(SamplingRun { topk: select_top_k(&coeffs, k), v_hat })
}

fn count_emission(x: u32, c: u64) -> Result<Emission> {
    let c = u32::try_from(c)
        .map_err(|_| Error::InvalidConfig(format!("sampled count for key {x} exceeds u32")))?;
    Ok(Emission { key: x, value: EmitValue::Count(c) })
}

/// First-level sampling only: each split emits every sampled key with its
/// aggregated count; the estimate is `v_hat(x) = s(x)/p`.
pub fn basic_sampling(
    meta: &DatasetMeta,
    splits: &mut [SplitDescriptor],
    k: usize,
    epsilon: f64,
    seed: u64,
    mode: SampleMode,
    ledger: &mut CommLedger,
) -> Result<SamplingRun> {
    let u = meta.padded_u();
    let cfg = SampleConfig::new(epsilon, meta.n, seed, mode)?;
    let mut s_global = vec![0u64; u as usize];
    run_job(
        splits,
        BASIC_S,
        1,
        &[],
        ledger,
        |split, _| {
            let emissions = sample_split(meta, split, &cfg)?
                .into_iter()
                .map(|(x, c)| count_emission(x, c))
                .collect::<Result<Vec<_>>>()?;
            Ok(MapOutput { emissions, state: Vec::new() })
        },
        |key, group| {
            for r in group {
                if let EmitValue::Count(c) = r.value {
                    s_global[key as usize - 1] += c as u64;
                }
            }
        },
    )?;
    let v_hat: Vec<f64> = s_global.into_iter().map(|c| c as f64 / cfg.p).collect();
    finish(v_hat, k)
}

/// First-level sampling with the per-split low-count cutoff: split `j`
/// emits `(x, s_j(x))` only when `s_j(x) >= epsilon * t_j`, so it sends at
/// most `1/epsilon` pairs. The estimate ignores the dropped counts and is
/// therefore biased low by up to `epsilon * n` per key.
pub fn improved_sampling(
    meta: &DatasetMeta,
    splits: &mut [SplitDescriptor],
    k: usize,
    epsilon: f64,
    seed: u64,
    mode: SampleMode,
    ledger: &mut CommLedger,
) -> Result<SamplingRun> {
    let u = meta.padded_u();
    let cfg = SampleConfig::new(epsilon, meta.n, seed, mode)?;
    let mut s_received = vec![0u64; u as usize];
    run_job(
        splits,
        IMPROVED_S,
        1,
        &[],
        ledger,
        |split, _| {
            let s_j = sample_split(meta, split, &cfg)?;
            let t_j: u64 = s_j.iter().map(|&(_, c)| c).sum();
            let cutoff = epsilon * t_j as f64;
            let emissions = s_j
                .into_iter()
                .filter(|&(_, c)| c as f64 >= cutoff)
                .map(|(x, c)| count_emission(x, c))
                .collect::<Result<Vec<_>>>()?;
            Ok(MapOutput { emissions, state: Vec::new() })
        },
        |key, group| {
            for r in group {
                if let EmitValue::Count(c) = r.value {
                    s_received[key as usize - 1] += c as u64;
                }
            }
        },
    )?;
    let v_hat: Vec<f64> = s_received.into_iter().map(|c| c as f64 / cfg.p).collect();
    finish(v_hat, k)
}

/// Two-level sampling end to end: first-level record sample, second-level
/// per-key emission, unbiased reducer-side estimation, transform, top-k.
pub fn twolevel(
    meta: &DatasetMeta,
    splits: &mut [SplitDescriptor],
    k: usize,
    epsilon: f64,
    seed: u64,
    mode: SampleMode,
    ledger: &mut CommLedger,
) -> Result<SamplingRun> {
    let u = meta.padded_u();
    let m = splits.len();
    let cfg = SampleConfig::new(epsilon, meta.n, seed, mode)?;
    let mut v_hat = vec![0.0f64; u as usize];
    let mut reduce_error: Option<Error> = None;
    run_job(
        splits,
        TWOLEVEL_S,
        1,
        &[],
        ledger,
        |split, _| {
            let s_j = sample_split(meta, split, &cfg)?;
            let mut rng = split_rng(seed, split.id as u64, SECOND_LEVEL_STREAM);
            let emissions = twolevel_map(&s_j, epsilon, m, &mut rng)
                .into_iter()
                .map(|e| match e.payload {
                    TwoLevelPayload::Exact(c) => count_emission(e.key, c),
                    TwoLevelPayload::Presence => {
                        Ok(Emission { key: e.key, value: EmitValue::Count(0) })
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(MapOutput { emissions, state: Vec::new() })
        },
        |key, group| {
            if reduce_error.is_some() {
                return;
            }
            let received: Vec<(usize, TwoLevelPayload)> = group
                .iter()
                .map(|r| {
                    let payload = match r.value {
                        EmitValue::Count(0) => TwoLevelPayload::Presence,
                        EmitValue::Count(c) => TwoLevelPayload::Exact(c as u64),
                        _ => TwoLevelPayload::Presence,
                    };
                    (r.source, payload)
                })
                .collect();
            match twolevel_estimate_key(&received, epsilon, m) {
                Ok(s_hat) => v_hat[key as usize - 1] = s_hat / cfg.p,
                Err(e) => reduce_error = Some(e),
            }
        },
    )?;
    if let Some(e) = reduce_error {
        return Err(e);
    }
    finish(v_hat, k)
}
