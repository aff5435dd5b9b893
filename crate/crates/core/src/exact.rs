//! Exact best-k-term wavelet histograms on the simulated cluster.
//!
//! Two baselines and the three-round top-k protocol:
//!
//! * [`send_v`] — every mapper emits its split's local frequencies; the
//!   coordinator aggregates the global frequency vector and transforms it.
//! * [`send_coef`] — every mapper transforms locally and emits all non-zero
//!   local coefficients; the coordinator sums them per index (coefficients
//!   are linear in the signal, so the sums are the global coefficients).
//! * [`hwtopk`] — a threshold top-k protocol adapted to signed scores.
//!   Scores here are local wavelet coefficients, which can be positive or
//!   negative, and the target is the k largest aggregated magnitudes, so the
//!   coordinator tracks a two-sided interval `[tau_minus, tau_plus]` per item
//!   instead of a one-sided partial-sum bound.
//!
//! H-WTopk rounds: (1) each split sends its k highest and k lowest local
//! coefficients, marking its k-th highest/lowest values so the coordinator
//! can bound unseen scores; the k-th largest magnitude lower bound becomes
//! threshold T1. (2) splits send every held-back coefficient with magnitude
//! above `T1/m`; the coordinator refines bounds, computes T2 the same way,
//! and prunes candidates whose magnitude upper bound falls below T2.
//! (3) splits send any still-unsent scores for surviving candidates, making
//! those aggregates exact. Split state (the local coefficient list and the
//! sent-index bookkeeping) persists across rounds in the split descriptor.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use crate::error::{Error, Result};
use crate::ingest::{read_split_keys, DatasetMeta};
use crate::sim::{
    run_job, CoefTag, CommLedger, EmitValue, Emission, MapOutput, SplitDescriptor,
};
use crate::wavelet::{
    haar_transform_dense, haar_transform_sparse, magnitude_order, select_top_k, CoeffSet,
    FrequencyVector, TopK, TopKEntry,
};

pub const SEND_V: &str = "send-v";
pub const SEND_COEF: &str = "send-coef";
pub const HWTOPK: &str = "h-wtopk";

/// Coordinator-side record for one candidate coefficient index.
///
/// `missing[j-1]` is true while split `j` has not yet reported its local
/// score for this item. Bounds satisfy `tau_minus <= w_i <= tau_plus`,
/// `tau <= |w_i| <= tau_prime` whenever they are current.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemState {
    pub index: u32,
    /// Partial sum of the local scores received so far.
    pub partial_sum: f64,
    pub missing: Vec<bool>,
    pub tau_plus: f64,
    pub tau_minus: f64,
    /// Lower bound on the aggregate magnitude.
    pub tau: f64,
    /// Upper bound on the aggregate magnitude.
    pub tau_prime: f64,
}

impl ItemState {
    pub fn new(index: u32, m: usize) -> Self {
        Self {
            index,
            partial_sum: 0.0,
            missing: vec![true; m],
            tau_plus: 0.0,
            tau_minus: 0.0,
            tau: 0.0,
            tau_prime: 0.0,
        }
    }

    /// Absorbs the exact local score of split `source` (1-based).
    pub fn receive(&mut self, source: usize, w: f64) {
        debug_assert!(self.missing[source - 1], "split {source} sent item {} twice", self.index);
        self.partial_sum += w;
        self.missing[source - 1] = false;
    }

    pub fn missing_count(&self) -> usize {
        self.missing.iter().filter(|&&b| b).count()
    }

    /// Round-1 bounds: each missing split contributes its marked k-th
    /// highest (resp. lowest) sent score as the upper (resp. lower) bound on
    /// the score it has not sent.
    pub fn set_round1_bounds(&mut self, kth_high: &[f64], kth_low: &[f64]) {
        let mut plus = self.partial_sum;
        let mut minus = self.partial_sum;
        for (j, &miss) in self.missing.iter().enumerate() {
            if miss {
                plus += kth_high[j];
                minus += kth_low[j];
            }
        }
        self.tau_plus = plus;
        self.tau_minus = minus;
        self.derive_magnitude_bounds();
    }

    /// Round-2 refinement: a split that stayed silent in round 2 holds a
    /// score of magnitude at most `T1/m`, so each missing contribution is
    /// the intersection of that cap with the round-1 marker bound. Using
    /// the cap alone could loosen a round-1 bound (markers can sit below
    /// `T1/m`), which would break the T2 >= T1 monotonicity of the
    /// thresholds; the intersection only ever tightens.
    pub fn refine_bounds(&mut self, kth_high: &[f64], kth_low: &[f64], t1_over_m: f64) {
        let mut plus = self.partial_sum;
        let mut minus = self.partial_sum;
        for (j, &miss) in self.missing.iter().enumerate() {
            if miss {
                plus += kth_high[j].min(t1_over_m);
                minus += kth_low[j].max(-t1_over_m);
            }
        }
        self.tau_plus = plus;
        self.tau_minus = minus;
        self.derive_magnitude_bounds();
    }

    /// `tau = 0` when the score interval straddles zero, else the distance
    /// from zero to the nearer end; `tau_prime` is the farther end.
    fn derive_magnitude_bounds(&mut self) {
        self.tau_prime = self.tau_plus.abs().max(self.tau_minus.abs());
        self.tau = if self.tau_minus <= 0.0 && self.tau_plus >= 0.0 {
            0.0
        } else {
            self.tau_plus.abs().min(self.tau_minus.abs())
        };
    }
}

/// The k-th largest of the given magnitude lower bounds, or 0 when fewer
/// than `k` exist (pruning stays disabled until k candidates are bounded).
pub fn prune_threshold(taus: &[f64], k: usize) -> f64 {
    if taus.len() < k || k == 0 {
        return 0.0;
    }
    let mut sorted = taus.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    sorted[k - 1]
}

/// Round-2 mapper rule: emit every local coefficient of magnitude strictly
/// above `T1/m` that was not already sent in round 1.
pub fn round2_filter(
    coeffs: &[(u32, f64)],
    t1: f64,
    m: usize,
    already_sent: &HashSet<u32>,
) -> Vec<(u32, f64)> {
    let threshold = t1 / m as f64;
    coeffs
        .iter()
        .filter(|&&(i, w)| w.abs() > threshold && !already_sent.contains(&i))
        .copied()
        .collect()
}

/// Result of the round-2 coordinator step.
#[derive(Debug)]
pub struct PruneOutcome {
    pub t2: f64,
    /// Items removed from the candidate set, with their refined bounds.
    pub pruned: Vec<ItemState>,
}

/// Refines every candidate's bounds with the round-2 cap, computes T2 as
/// the k-th largest refined magnitude lower bound, and deletes candidates
/// whose magnitude upper bound is strictly below T2. No item whose true
/// aggregate magnitude reaches the true k-th largest can be deleted.
pub fn refine_and_prune(
    items: &mut BTreeMap<u32, ItemState>,
    kth_high: &[f64],
    kth_low: &[f64],
    t1: f64,
    k: usize,
) -> PruneOutcome {
    let m = kth_high.len();
    let t1_over_m = t1 / m as f64;
    for item in items.values_mut() {
        item.refine_bounds(kth_high, kth_low, t1_over_m);
    }
    let taus: Vec<f64> = items.values().map(|it| it.tau).collect();
    let t2 = prune_threshold(&taus, k);
    let doomed: Vec<u32> = items
        .values()
        .filter(|it| it.tau_prime < t2)
        .map(|it| it.index)
        .collect();
    let pruned = doomed
        .iter()
        .map(|i| items.remove(i).expect("pruned item present"))
        .collect();
    PruneOutcome { t2, pruned }
}

/// Merges explicitly scored items with the implicit zero coefficients of the
/// rest of the domain and selects the top k under the magnitude/index order.
/// The zero fill only matters in degenerate instances where the k-th largest
/// magnitude is zero; in that case the protocol has already received every
/// non-zero coefficient, so absent indices are exactly zero.
fn complete_top_k(mut scored: Vec<(u32, f64)>, u: u32, k: usize) -> TopK {
    scored.sort_unstable_by(magnitude_order);
    let k = k.min(u as usize);
    let present: HashSet<u32> = scored.iter().map(|&(i, _)| i).collect();
    let mut zeros = (1..=u).filter(|i| !present.contains(i)).peekable();
    let mut scored = scored.into_iter().peekable();
    let mut entries = Vec::with_capacity(k);
    while entries.len() < k {
        let next = match (scored.peek(), zeros.peek()) {
            (Some(&s), Some(&z)) => {
                if magnitude_order(&s, &(z, 0.0)) == std::cmp::Ordering::Less {
                    scored.next().unwrap()
                } else {
                    (zeros.next().unwrap(), 0.0)
                }
            }
            (Some(_), None) => scored.next().unwrap(),
            (None, Some(_)) => (zeros.next().unwrap(), 0.0),
            (None, None) => break,
        };
        entries.push(TopKEntry { index: next.0, value: next.1 });
    }
    TopK { entries }
}

fn local_coefficients(
    meta: &DatasetMeta,
    split: &SplitDescriptor,
    u: u32,
) -> Result<Vec<(u32, f64)>> {
    let keys = read_split_keys(meta, split)?;
    let v = FrequencyVector::from_keys(keys, u)?;
    haar_transform_sparse(&v.nonzero_entries(), u)
}

/// Baseline: mappers emit `(key, local count)` for every distinct key; the
/// coordinator sums to the global frequency vector, transforms, and selects.
pub fn send_v(
    meta: &DatasetMeta,
    splits: &mut [SplitDescriptor],
    k: usize,
    ledger: &mut CommLedger,
) -> Result<TopK> {
    let u = meta.padded_u();
    let mut sums = vec![0u64; u as usize];
    run_job(
        splits,
        SEND_V,
        1,
        &[],
        ledger,
        |split, _| {
            let keys = read_split_keys(meta, split)?;
            let v = FrequencyVector::from_keys(keys, u)?;
            let emissions = v
                .nonzero_entries()
                .into_iter()
                .map(|(x, c)| {
                    let c = u32::try_from(c).map_err(|_| {
                        Error::InvalidConfig(format!("count for key {x} exceeds u32"))
                    })?;
                    Ok(Emission { key: x, value: EmitValue::Count(c) })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(MapOutput { emissions, state: Vec::new() })
        },
        |key, group| {
            let total: u64 = group
                .iter()
                .map(|r| match r.value {
                    EmitValue::Count(c) => c as u64,
                    _ => 0,
                })
                .sum();
            sums[key as usize - 1] = total;
        },
    )?;
    let v = FrequencyVector::from_counts(sums)?;
    Ok(select_top_k(&haar_transform_dense(&v)?, k))
}

/// Baseline: mappers transform locally and emit every non-zero local
/// coefficient; the coordinator sums per index and selects over the full
/// (zero-filled) coefficient domain.
pub fn send_coef(
    meta: &DatasetMeta,
    splits: &mut [SplitDescriptor],
    k: usize,
    ledger: &mut CommLedger,
) -> Result<TopK> {
    let u = meta.padded_u();
    let mut sums = vec![0.0f64; u as usize];
    run_job(
        splits,
        SEND_COEF,
        1,
        &[],
        ledger,
        |split, _| {
            let emissions = local_coefficients(meta, split, u)?
                .into_iter()
                .map(|(i, w)| Emission { key: i, value: EmitValue::Coeff(w) })
                .collect();
            Ok(MapOutput { emissions, state: Vec::new() })
        },
        |key, group| {
            for r in group {
                if let EmitValue::Coeff(w) = r.value {
                    sums[key as usize - 1] += w;
                }
            }
        },
    )?;
    Ok(select_top_k(&CoeffSet::from_coeffs(sums)?, k))
}

/// Diagnostic snapshot of an H-WTopk run for bound/pruning verification.
#[derive(Debug, Clone)]
pub struct HwTopkTrace {
    pub t1: f64,
    pub t2: f64,
    /// Candidate states with round-1 bounds.
    pub round1_items: Vec<ItemState>,
    /// Candidate states with refined round-2 bounds, before pruning.
    pub round2_items: Vec<ItemState>,
    pub pruned: Vec<u32>,
    pub survivors: Vec<u32>,
}

/// Exact top-k by magnitude in three rounds. Identical result to the
/// centralized computation.
pub fn hwtopk(
    meta: &DatasetMeta,
    splits: &mut [SplitDescriptor],
    k: usize,
    ledger: &mut CommLedger,
) -> Result<TopK> {
    hwtopk_traced(meta, splits, k, ledger).map(|(topk, _)| topk)
}

/// [`hwtopk`] plus the coordinator's thresholds, bounds, and pruning
/// decisions.
pub fn hwtopk_traced(
    meta: &DatasetMeta,
    splits: &mut [SplitDescriptor],
    k: usize,
    ledger: &mut CommLedger,
) -> Result<(TopK, HwTopkTrace)> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    let u = meta.padded_u();
    let m = splits.len();

    // Round 1: local top-k and bottom-k by signed value, with the k-th
    // highest and k-th lowest pairs tagged.
    let mut items: BTreeMap<u32, ItemState> = BTreeMap::new();
    let mut kth_high = vec![0.0f64; m];
    let mut kth_low = vec![0.0f64; m];
    run_job(
        splits,
        HWTOPK,
        1,
        &[],
        ledger,
        |split, _| round1_map(meta, split, u, k),
        |key, group| {
            let item = items.entry(key).or_insert_with(|| ItemState::new(key, m));
            for r in group {
                if let EmitValue::Tagged(tag, w) = r.value {
                    item.receive(r.source, w);
                    match tag {
                        CoefTag::KthHigh => kth_high[r.source - 1] = w,
                        CoefTag::KthLow => kth_low[r.source - 1] = w,
                        CoefTag::Exact => {}
                    }
                } else {
                    debug_assert!(false, "unexpected round-1 payload");
                }
            }
        },
    )?;
    for item in items.values_mut() {
        item.set_round1_bounds(&kth_high, &kth_low);
    }
    let taus: Vec<f64> = items.values().map(|it| it.tau).collect();
    let t1 = prune_threshold(&taus, k);
    let round1_items: Vec<ItemState> = items.values().cloned().collect();

    // Round 2: everything with local magnitude above T1/m.
    run_job(
        splits,
        HWTOPK,
        2,
        &t1.to_le_bytes(),
        ledger,
        |split, bcast| round2_map(split, bcast, m),
        |key, group| {
            let item = items.entry(key).or_insert_with(|| ItemState::new(key, m));
            for r in group {
                if let EmitValue::Coeff(w) = r.value {
                    item.receive(r.source, w);
                }
            }
        },
    )?;
    let outcome = refine_and_prune(&mut items, &kth_high, &kth_low, t1, k);
    let mut round2_items: Vec<ItemState> = items.values().cloned().collect();
    round2_items.extend(outcome.pruned.iter().cloned());
    round2_items.sort_by_key(|it| it.index);
    let survivors: Vec<u32> = items.keys().copied().collect();

    // Round 3: exact completion for the survivors.
    let mut r_bytes = Vec::with_capacity(survivors.len() * 4);
    for &i in &survivors {
        r_bytes.extend_from_slice(&i.to_le_bytes());
    }
    run_job(
        splits,
        HWTOPK,
        3,
        &r_bytes,
        ledger,
        round3_map,
        |key, group| {
            let item = items.get_mut(&key).expect("round-3 emission outside candidate set");
            for r in group {
                if let EmitValue::Coeff(w) = r.value {
                    item.receive(r.source, w);
                }
            }
        },
    )?;

    let scored: Vec<(u32, f64)> = items.iter().map(|(&i, it)| (i, it.partial_sum)).collect();
    let topk = complete_top_k(scored, u, k);
    if let Some(last) = topk.entries.last() {
        debug_assert!(
            last.value.abs() >= outcome.t2 - 1e-9 * (1.0 + outcome.t2.abs()),
            "selected magnitude {} below pruning threshold {}",
            last.value.abs(),
            outcome.t2
        );
    }
    let trace = HwTopkTrace {
        t1,
        t2: outcome.t2,
        round1_items,
        round2_items,
        pruned: outcome.pruned.iter().map(|it| it.index).collect(),
        survivors,
    };
    Ok((topk, trace))
}

fn round1_map(
    meta: &DatasetMeta,
    split: &SplitDescriptor,
    u: u32,
    k: usize,
) -> Result<MapOutput> {
    let local = local_coefficients(meta, split, u)?;
    let mut by_value = local.clone();
    by_value.sort_unstable_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let len = by_value.len();

    let chosen: BTreeSet<u32> = by_value
        .iter()
        .take(k)
        .chain(by_value.iter().rev().take(k))
        .map(|&(i, _)| i)
        .collect();
    // Unsent coefficients are either worse-ranked non-zeros or implicit
    // zeros, so a marker is only a sound bound when the k-th value is on the
    // right side of zero; otherwise zero itself is the bound and the
    // coordinator's default of 0 for unmarked splits covers it.
    let kth_high_idx =
        (len >= k && by_value[k - 1].1 > 0.0).then(|| by_value[k - 1].0);
    let kth_low_idx =
        (len >= k && by_value[len - k].1 < 0.0).then(|| by_value[len - k].0);

    let mut sent = HashSet::with_capacity(chosen.len());
    let mut emissions = Vec::with_capacity(chosen.len());
    for &(i, w) in local.iter().filter(|&&(i, _)| chosen.contains(&i)) {
        let tag = if kth_high_idx == Some(i) {
            CoefTag::KthHigh
        } else if kth_low_idx == Some(i) {
            CoefTag::KthLow
        } else {
            CoefTag::Exact
        };
        emissions.push(Emission { key: i, value: EmitValue::Tagged(tag, w) });
        sent.insert(i);
    }
    Ok(MapOutput { emissions, state: encode_state(&local, &sent) })
}

fn round2_map(split: &SplitDescriptor, broadcast: &[u8], m: usize) -> Result<MapOutput> {
    let (coeffs, mut sent) = decode_state(&split.state)?;
    let t1 = f64::from_le_bytes(
        broadcast
            .try_into()
            .map_err(|_| Error::Protocol("round-2 broadcast must be 8 bytes".into()))?,
    );
    let mut emissions = Vec::new();
    for (i, w) in round2_filter(&coeffs, t1, m, &sent) {
        emissions.push(Emission { key: i, value: EmitValue::Coeff(w) });
        sent.insert(i);
    }
    Ok(MapOutput { emissions, state: encode_state(&coeffs, &sent) })
}

fn round3_map(split: &SplitDescriptor, broadcast: &[u8]) -> Result<MapOutput> {
    let (coeffs, mut sent) = decode_state(&split.state)?;
    if broadcast.len() % 4 != 0 {
        return Err(Error::Protocol("round-3 broadcast must be packed u32 indices".into()));
    }
    let wanted: HashSet<u32> = broadcast
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let to_send: Vec<(u32, f64)> = coeffs
        .iter()
        .filter(|&&(i, _)| wanted.contains(&i) && !sent.contains(&i))
        .copied()
        .collect();
    let mut emissions = Vec::new();
    for (i, w) in to_send {
        emissions.push(Emission { key: i, value: EmitValue::Coeff(w) });
        sent.insert(i);
    }
    Ok(MapOutput { emissions, state: encode_state(&coeffs, &sent) })
}

// Split state codec: the local coefficient list plus the sent-index set,
// little-endian and length-prefixed.

fn encode_state(coeffs: &[(u32, f64)], sent: &HashSet<u32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + coeffs.len() * 12 + sent.len() * 4);
    out.extend_from_slice(&(coeffs.len() as u32).to_le_bytes());
    for &(i, w) in coeffs {
        out.extend_from_slice(&i.to_le_bytes());
        out.extend_from_slice(&w.to_le_bytes());
    }
    let mut sent_sorted: Vec<u32> = sent.iter().copied().collect();
    sent_sorted.sort_unstable();
    out.extend_from_slice(&(sent_sorted.len() as u32).to_le_bytes());
    for i in sent_sorted {
        out.extend_from_slice(&i.to_le_bytes());
    }
    out
}

fn decode_state(bytes: &[u8]) -> Result<(Vec<(u32, f64)>, HashSet<u32>)> {
    let bad = || Error::Protocol("corrupt split state".into());
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let slice = bytes.get(pos..pos + n).ok_or_else(bad)?;
        pos += n;
        Ok(slice)
    };
    let n_coeffs = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let mut coeffs = Vec::with_capacity(n_coeffs);
    for _ in 0..n_coeffs {
        let i = u32::from_le_bytes(take(4)?.try_into().unwrap());
        let w = f64::from_le_bytes(take(8)?.try_into().unwrap());
        coeffs.push((i, w));
    }
    let n_sent = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let mut sent = HashSet::with_capacity(n_sent);
    for _ in 0..n_sent {
        sent.insert(u32::from_le_bytes(take(4)?.try_into().unwrap()));
    }
    if pos != bytes.len() {
        return Err(bad());
    }
    Ok((coeffs, sent))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::write_dataset;
    use crate::sim::partition_dataset;

    const SQRT_2: f64 = std::f64::consts::SQRT_2;

    fn assert_close(a: f64, b: f64) {
        assert!((a - b).abs() <= 1e-9, "{a} != {b}");
    }

    fn tmpfile(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("wavehist-exact-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn round1_bounds_hand_example() {
        // m=2, exact score 5 from split 1; split 2 marked kth-high 3, kth-low -4
        let mut item = ItemState::new(9, 2);
        item.receive(1, 5.0);
        item.set_round1_bounds(&[0.0, 3.0], &[0.0, -4.0]);
        assert_close(item.tau_plus, 8.0);
        assert_close(item.tau_minus, 1.0);
        assert_close(item.tau, 1.0);
        assert_close(item.tau_prime, 8.0);
    }

    #[test]
    fn straddling_interval_gives_zero_tau() {
        let mut item = ItemState::new(1, 2);
        item.receive(1, -1.0);
        item.set_round1_bounds(&[0.0, 3.0], &[0.0, -2.0]);
        assert_close(item.tau_plus, 2.0);
        assert_close(item.tau_minus, -3.0);
        assert_close(item.tau, 0.0);
        assert_close(item.tau_prime, 3.0);
    }

    #[test]
    fn fully_received_item_has_tight_bounds() {
        let mut item = ItemState::new(4, 2);
        item.receive(1, -2.5);
        item.receive(2, -1.0);
        item.set_round1_bounds(&[9.0, 9.0], &[-9.0, -9.0]);
        assert_close(item.tau_plus, -3.5);
        assert_close(item.tau_minus, -3.5);
        assert_close(item.tau, 3.5);
        assert_close(item.tau_prime, 3.5);
    }

    #[test]
    fn prune_threshold_picks_kth_largest() {
        assert_close(prune_threshold(&[3.0, 1.0, 0.0], 2), 1.0);
        assert_close(prune_threshold(&[3.0, 1.0, 0.0], 1), 3.0);
        assert_close(prune_threshold(&[3.0, 1.0], 5), 0.0);
        assert_close(prune_threshold(&[], 1), 0.0);
    }

    #[test]
    fn round2_filter_applies_threshold_and_bookkeeping() {
        let locals = vec![(1, 3.0), (2, -2.5), (3, 1.0)];
        let sent = HashSet::new();
        let out = round2_filter(&locals, 10.0, 5, &sent);
        assert_eq!(out, vec![(1, 3.0), (2, -2.5)]);

        // zero threshold sends every unsent non-zero
        let out = round2_filter(&locals, 0.0, 5, &sent);
        assert_eq!(out.len(), 3);

        let all_sent: HashSet<u32> = [1, 2, 3].into_iter().collect();
        assert!(round2_filter(&locals, 0.0, 5, &all_sent).is_empty());
    }

    #[test]
    fn refine_and_prune_drops_low_upper_bounds() {
        // item 7: interval [-0.5, 1.5] -> tau' = 1.5; item 8 fully known at 2
        let mut items = BTreeMap::new();
        let mut weak = ItemState::new(7, 1);
        weak.receive(1, 0.5);
        weak.missing = vec![true]; // pretend split 1 never sent it
        weak.partial_sum = 0.5;
        items.insert(7, weak);
        let mut strong = ItemState::new(8, 1);
        strong.receive(1, 2.0);
        items.insert(8, strong);

        let outcome = refine_and_prune(&mut items, &[1.0], &[-1.0], 2.0, 1);
        assert_close(outcome.t2, 2.0);
        assert_eq!(outcome.pruned.len(), 1);
        assert_eq!(outcome.pruned[0].index, 7);
        assert_close(outcome.pruned[0].tau_plus, 1.5);
        assert_close(outcome.pruned[0].tau_minus, -0.5);
        assert_close(outcome.pruned[0].tau_prime, 1.5);
        assert!(items.contains_key(&8));
    }

    #[test]
    fn refine_keeps_items_at_or_above_t2() {
        // interval [1, 3] -> tau' = 3 >= T2 = 2 -> kept
        let mut items = BTreeMap::new();
        let mut it = ItemState::new(3, 1);
        it.partial_sum = 2.0;
        items.insert(3, it);
        let mut anchor = ItemState::new(4, 1);
        anchor.receive(1, 2.0);
        items.insert(4, anchor);

        let outcome = refine_and_prune(&mut items, &[1.0], &[-1.0], 1.0, 1);
        assert_close(outcome.t2, 2.0);
        let kept = &items[&3];
        assert_close(kept.tau_plus, 3.0);
        assert_close(kept.tau_minus, 1.0);
        assert_close(kept.tau_prime, 3.0);
        assert!(outcome.pruned.is_empty());
    }

    fn two_split_dataset() -> (DatasetMeta, Vec<SplitDescriptor>) {
        // split A = [1,1,2], split B = [3,3,3,4]; v = (2,1,3,1)
        let meta = write_dataset(&[1, 1, 2, 3, 3, 3, 4], 4, 4, &tmpfile("ab.bin")).unwrap();
        let splits = partition_dataset(&meta, 3).unwrap();
        assert_eq!(splits.len(), 3); // 3 + 3 + 1 records
        // repartition by hand so the example's split boundaries hold
        let meta2 = meta.clone();
        let splits = vec![
            SplitDescriptor {
                id: 1,
                byte_range: (meta2.byte_offset_of_record(0), 3 * 4),
                n_records: 3,
                state: Vec::new(),
            },
            SplitDescriptor {
                id: 2,
                byte_range: (meta2.byte_offset_of_record(3), 4 * 4),
                n_records: 4,
                state: Vec::new(),
            },
        ];
        (meta, splits)
    }

    #[test]
    fn send_v_matches_centralized_and_counts_pairs() {
        let (meta, mut splits) = two_split_dataset();
        let mut ledger = CommLedger::new();
        let topk = send_v(&meta, &mut splits, 2, &mut ledger).unwrap();
        assert_eq!(topk.indices(), vec![1, 4]);
        assert_close(topk.entries[0].value, 3.5);
        assert_close(topk.entries[1].value, -SQRT_2);
        // two distinct keys per split
        assert_eq!(ledger.row(SEND_V, 1).pairs, 4);
        assert_eq!(ledger.row(SEND_V, 1).bytes, 4 * 8);
    }

    #[test]
    fn send_coef_local_emissions_match_sparse_transform() {
        // split A alone: v_A = (2,1,0,0)
        let meta = write_dataset(&[1, 1, 2], 4, 4, &tmpfile("a-only.bin")).unwrap();
        let mut splits = partition_dataset(&meta, 100).unwrap();
        let mut ledger = CommLedger::new();
        let topk = send_coef(&meta, &mut splits, 4, &mut ledger).unwrap();
        assert_eq!(ledger.row(SEND_COEF, 1).pairs, 3);
        assert_eq!(ledger.row(SEND_COEF, 1).bytes, 3 * 12);

        let coeffs = haar_transform_sparse(&[(1, 2), (2, 1)], 4).unwrap();
        assert_eq!(coeffs.len(), 3);
        assert_close(coeffs[0].1, 1.5);
        assert_close(coeffs[1].1, -1.5);
        assert_close(coeffs[2].1, -1.0 / SQRT_2);

        // single split: identical to the centralized computation
        assert_eq!(topk.indices(), vec![1, 2, 3, 4]);
    }

    #[test]
    fn empty_split_emits_nothing() {
        let meta = write_dataset(&[], 4, 4, &tmpfile("empty.bin")).unwrap();
        let mut splits = partition_dataset(&meta, 10).unwrap();
        assert_eq!(splits.len(), 1);
        let mut ledger = CommLedger::new();
        let topk = send_coef(&meta, &mut splits, 2, &mut ledger).unwrap();
        assert_eq!(ledger.row(SEND_COEF, 1).pairs, 0);
        // all-zero coefficients: selection falls back to smallest indices
        assert_eq!(topk.indices(), vec![1, 2]);
    }

    #[test]
    fn hwtopk_matches_oracle_on_hand_example() {
        let (meta, mut splits) = two_split_dataset();
        let mut ledger = CommLedger::new();
        let (topk, trace) = hwtopk_traced(&meta, &mut splits, 2, &mut ledger).unwrap();
        assert_eq!(topk.indices(), vec![1, 4]);
        assert_close(topk.entries[0].value, 3.5);
        assert_close(topk.entries[1].value, -SQRT_2);
        assert!(trace.t2 >= trace.t1);
    }

    #[test]
    fn hwtopk_single_split_finishes_in_round_one() {
        let meta = write_dataset(&[1, 1, 2, 3, 3, 3, 4, 2], 4, 4, &tmpfile("single.bin")).unwrap();
        let mut splits = partition_dataset(&meta, 1000).unwrap();
        assert_eq!(splits.len(), 1);
        let mut ledger = CommLedger::new();

        let v = FrequencyVector::from_keys(
            read_split_keys(&meta, &splits[0].clone()).unwrap(),
            4,
        )
        .unwrap();
        let oracle = select_top_k(&haar_transform_dense(&v).unwrap(), 2);

        let topk = hwtopk(&meta, &mut splits, 2, &mut ledger).unwrap();
        assert_eq!(topk.indices(), oracle.indices());
        assert_eq!(ledger.row(HWTOPK, 2).pairs, 0);
        assert_eq!(ledger.row(HWTOPK, 3).pairs, 0);
    }

    #[test]
    fn state_codec_round_trips() {
        let coeffs = vec![(1, 1.5), (7, -0.25), (900, 1e-3)];
        let sent: HashSet<u32> = [7, 900].into_iter().collect();
        let blob = encode_state(&coeffs, &sent);
        let (c2, s2) = decode_state(&blob).unwrap();
        assert_eq!(coeffs, c2);
        assert_eq!(sent, s2);
        assert!(decode_state(&blob[..blob.len() - 1]).is_err());
    }

    #[test]
    fn complete_top_k_pads_with_smallest_zero_indices() {
        let topk = complete_top_k(vec![(5, 2.0)], 8, 3);
        assert_eq!(topk.indices(), vec![5, 1, 2]);
        assert_close(topk.entries[1].value, 0.0);
    }
}
