//! Shared test helpers: an independent brute-force transform oracle built
//! directly from explicit basis vectors, plus random instance generation.

#![allow(dead_code)]

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use wavehist::ingest::{generate_zipf, DatasetMeta, ZipfConfig};
use wavehist::sim::{partition_dataset, SplitDescriptor};
use wavehist::wavelet::{magnitude_order, TopK, TopKEntry};

/// Explicit orthonormal Haar basis vector `psi_i` (1-based index) over a
/// power-of-two domain. Independent of the library's recursive transform.
pub fn basis_vector(u: usize, i: usize) -> Vec<f64> {
    assert!(u.is_power_of_two() && i >= 1 && i <= u);
    let mut psi = vec![0.0; u];
    if i == 1 {
        let value = 1.0 / (u as f64).sqrt();
        psi.iter_mut().for_each(|x| *x = value);
        return psi;
    }
    let level = (i - 1).ilog2() as usize;
    let block_index = (i - 1) - (1 << level);
    let block = u >> level; // support width
    let start = block_index * block;
    let magnitude = 1.0 / (block as f64).sqrt();
    for x in start..start + block / 2 {
        psi[x] = -magnitude;
    }
    for x in start + block / 2..start + block {
        psi[x] = magnitude;
    }
    psi
}

/// Brute-force transform: dot products against every basis vector, O(u^2).
pub fn oracle_transform(signal: &[f64]) -> Vec<f64> {
    let u = signal.len();
    (1..=u)
        .map(|i| {
            basis_vector(u, i)
                .iter()
                .zip(signal)
                .map(|(a, b)| a * b)
                .sum()
        })
        .collect()
}

/// Brute-force top-k over a dense coefficient slice with the fixed
/// magnitude-descending, smaller-index tie-break.
pub fn oracle_top_k(coeffs: &[f64], k: usize) -> TopK {
    let mut entries: Vec<(u32, f64)> = coeffs
        .iter()
        .enumerate()
        .map(|(idx, &w)| (idx as u32 + 1, w))
        .collect();
    entries.sort_by(magnitude_order);
    entries.truncate(k);
    TopK {
        entries: entries
            .into_iter()
            .map(|(index, value)| TopKEntry { index, value })
            .collect(),
    }
}

/// Identical index sets and per-index values within 1e-9. Entry order is
/// not compared: coefficients whose true magnitudes tie exactly may sort
/// either way once float summation order perturbs them at the 1e-14 level.
pub fn assert_topk_eq(label: &str, got: &TopK, want: &TopK) {
    let got_set: std::collections::BTreeSet<u32> = got.indices().into_iter().collect();
    let want_set: std::collections::BTreeSet<u32> = want.indices().into_iter().collect();
    assert_eq!(
        got_set, want_set,
        "{label}: index sets differ\n got: {:?}\nwant: {:?}",
        got.entries, want.entries
    );
    let want_values: std::collections::BTreeMap<u32, f64> =
        want.entries.iter().map(|e| (e.index, e.value)).collect();
    for g in &got.entries {
        let w = want_values[&g.index];
        assert!(
            (g.value - w).abs() <= 1e-9 * (1.0 + w.abs()),
            "{label}: value mismatch at index {}: {} vs {}",
            g.index,
            g.value,
            w
        );
    }
}

/// One randomly drawn distributed instance.
pub struct Instance {
    pub meta: DatasetMeta,
    pub splits: Vec<SplitDescriptor>,
    pub u: u32,
    pub n: u64,
    pub m: usize,
    pub alpha: f64,
    pub k: usize,
}

/// Draws a random instance from the acceptance grid: `u` in 2^4..2^10,
/// `n <= 1e5`, `m` in 2..16, `alpha` in {0, 0.8, 1.1, 1.4}, `k` in 1..10.
pub fn random_instance(dir: &Path, trial: u64, rng: &mut ChaCha12Rng) -> Instance {
    let u = 1u32 << rng.gen_range(4..=10);
    let n = rng.gen_range(200..=100_000u64);
    let m = rng.gen_range(2..=16usize);
    let alpha = [0.0, 0.8, 1.1, 1.4][rng.gen_range(0..4)];
    let k = rng.gen_range(1..=10usize);
    let cfg = ZipfConfig { n, u, alpha, seed: rng.gen() };
    let path = dir.join(format!("instance-{trial}.bin"));
    let meta = generate_zipf(&cfg, 4, &path).expect("generate instance");
    let beta = n.div_ceil(m as u64);
    let splits = partition_dataset(&meta, beta).expect("partition instance");
    Instance { meta, u, n, m: splits.len(), alpha, k, splits }
}
