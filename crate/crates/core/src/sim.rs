//! Deterministic single-reducer map-reduce simulator.
//!
//! A job runs one mapper per split and a single reducer acting as the
//! coordinator. Mappers emit key-value pairs; the framework groups them by
//! key, sorts keys ascending (values within a group ordered by source split),
//! and feeds each group to the reduce function. Per-split state blobs
//! returned by mappers are persisted on the [`SplitDescriptor`] and handed
//! back in the next round, and a broadcast payload is delivered to every
//! mapper with its cost charged per copy.
//!
//! Every emitted pair is charged to the [`CommLedger`] as
//! `4 key bytes + value bytes`, with value bytes per the accounting table:
//! `u32` count = 4, `f64` coefficient = 8, tagged coefficient = 9 (the tag
//! byte marks a split's k-th highest/lowest score), bare marker = 0.
//! Broadcasts are charged as `m` copies of the serialized payload and
//! reported separately from mapper-to-reducer traffic.

use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::ingest::DatasetMeta;

/// One contiguous portion of the input file, processed by one mapper task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitDescriptor {
    /// Split index `j`, 1-based.
    pub id: usize,
    /// `(offset, length)` of the split's bytes within the file.
    pub byte_range: (u64, u64),
    /// Number of records in the split.
    pub n_records: u64,
    /// Opaque state blob surviving across rounds; written by this split's
    /// mapper, read back by the same split next round.
    pub state: Vec<u8>,
}

/// Tag distinguishing a split's marked round-one pairs from plain scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoefTag {
    Exact,
    KthHigh,
    KthLow,
}

/// Typed emission payload; the byte cost feeds the communication ledger.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EmitValue {
    /// Mapper-side aggregated count, 4 bytes on the wire.
    Count(u32),
    /// Wavelet coefficient, 8 bytes.
    Coeff(f64),
    /// Coefficient plus a 1-byte tag, 9 bytes.
    Tagged(CoefTag, f64),
    /// Bare marker pair; the pair still costs its 4-byte key.
    Null,
}

impl EmitValue {
    pub fn byte_cost(&self) -> u64 {
        match self {
            EmitValue::Count(_) => 4,
            EmitValue::Coeff(_) => 8,
            EmitValue::Tagged(_, _) => 9,
            EmitValue::Null => 0,
        }
    }
}

pub const KEY_BYTES: u64 = 4;

/// One intermediate key-value pair produced by a mapper.
#[derive(Debug, Clone, PartialEq)]
pub struct Emission {
    pub key: u32,
    pub value: EmitValue,
}

/// A value as seen by the reducer: emission payload plus the originating
/// split id.
#[derive(Debug, Clone, PartialEq)]
pub struct Received {
    pub source: usize,
    pub value: EmitValue,
}

/// What a mapper returns: its emissions plus the state blob to persist for
/// the next round (empty blob for stateless mappers).
#[derive(Debug, Default)]
pub struct MapOutput {
    pub emissions: Vec<Emission>,
    pub state: Vec<u8>,
}

/// Per-(algorithm, round) communication counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LedgerRow {
    pub pairs: u64,
    pub bytes: u64,
    pub broadcast_bytes: u64,
}

/// Counts of emitted key-value pairs and bytes per algorithm and round,
/// including broadcast copies.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CommLedger {
    rows: BTreeMap<(String, u32), LedgerRow>,
}

impl CommLedger {
    pub fn new() -> Self {
        Self::default()
    }

    fn row_mut(&mut self, algo: &str, round: u32) -> &mut LedgerRow {
        self.rows.entry((algo.to_string(), round)).or_default()
    }

    pub fn charge_emission(&mut self, algo: &str, round: u32, value: &EmitValue) {
        let row = self.row_mut(algo, round);
        row.pairs += 1;
        row.bytes += KEY_BYTES + value.byte_cost();
    }

    pub fn charge_broadcast(&mut self, algo: &str, round: u32, copies: usize, payload_len: usize) {
        self.row_mut(algo, round).broadcast_bytes += copies as u64 * payload_len as u64;
    }

    pub fn row(&self, algo: &str, round: u32) -> LedgerRow {
        self.rows.get(&(algo.to_string(), round)).copied().unwrap_or_default()
    }

    /// Sum over all rounds of one algorithm.
    pub fn totals(&self, algo: &str) -> LedgerRow {
        let mut total = LedgerRow::default();
        for ((a, _), row) in &self.rows {
            if a == algo {
                total.pairs += row.pairs;
                total.bytes += row.bytes;
                total.broadcast_bytes += row.broadcast_bytes;
            }
        }
        total
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u32, LedgerRow)> + '_ {
        self.rows.iter().map(|((a, r), row)| (a.as_str(), *r, *row))
    }

    /// Folds another ledger's rows into this one.
    pub fn merge(&mut self, other: &CommLedger) {
        for ((a, r), row) in &other.rows {
            let dst = self.row_mut(a, *r);
            dst.pairs += row.pairs;
            dst.bytes += row.bytes;
            dst.broadcast_bytes += row.broadcast_bytes;
        }
    }

    /// CSV export: `algorithm,round,pairs,bytes,broadcast_bytes`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "algorithm,round,pairs,bytes,broadcast_bytes")?;
        for ((a, r), row) in &self.rows {
            writeln!(w, "{a},{r},{},{},{}", row.pairs, row.bytes, row.broadcast_bytes)?;
        }
        Ok(())
    }
}

/// Partitions a dataset into `ceil(n / beta)` contiguous splits of `beta`
/// records each (the last split may be short). An empty or undersized
/// dataset still yields a single split.
pub fn partition_dataset(meta: &DatasetMeta, beta: u64) -> Result<Vec<SplitDescriptor>> {
    if beta == 0 {
        return Err(Error::InvalidConfig("split size beta must be at least 1".into()));
    }
    let record_size = meta.record_size as u64;
    let mut splits = Vec::new();
    let mut start = 0u64;
    let mut id = 1usize;
    loop {
        let len = beta.min(meta.n - start);
        splits.push(SplitDescriptor {
            id,
            byte_range: (meta.byte_offset_of_record(start), len * record_size),
            n_records: len,
            state: Vec::new(),
        });
        start += len;
        id += 1;
        if start >= meta.n {
            break;
        }
    }
    Ok(splits)
}

/// Runs one map-reduce round: every mapper in split order, then the grouped
/// reduce. See [`run_job_with_order`] for the scheduling knob.
pub fn run_job<M, R>(
    splits: &mut [SplitDescriptor],
    algo: &str,
    round: u32,
    broadcast: &[u8],
    ledger: &mut CommLedger,
    map_fn: M,
    reduce_fn: R,
) -> Result<()>
where
    M: Fn(&SplitDescriptor, &[u8]) -> Result<MapOutput>,
    R: FnMut(u32, &[Received]),
{
    let order: Vec<usize> = (0..splits.len()).collect();
    run_job_with_order(splits, algo, round, broadcast, ledger, &order, map_fn, reduce_fn)
}

/// Like [`run_job`] but executes mappers in the given order. Output and
/// ledger are invariant under the schedule: emissions are grouped by key and
/// each group is sorted by source split before reduction.
#[allow(clippy::too_many_arguments)]
pub fn run_job_with_order<M, R>(
    splits: &mut [SplitDescriptor],
    algo: &str,
    round: u32,
    broadcast: &[u8],
    ledger: &mut CommLedger,
    order: &[usize],
    map_fn: M,
    mut reduce_fn: R,
) -> Result<()>
where
    M: Fn(&SplitDescriptor, &[u8]) -> Result<MapOutput>,
    R: FnMut(u32, &[Received]),
{
    assert_eq!(order.len(), splits.len(), "schedule must cover every split");
    ledger.charge_broadcast(algo, round, splits.len(), broadcast.len());

    let mut groups: BTreeMap<u32, Vec<Received>> = BTreeMap::new();
    for &slot in order {
        let split = &splits[slot];
        let out = map_fn(split, broadcast)?;
        for emission in out.emissions {
            ledger.charge_emission(algo, round, &emission.value);
            groups
                .entry(emission.key)
                .or_default()
                .push(Received { source: split.id, value: emission.value });
        }
        splits[slot].state = out.state;
    }

    for (key, group) in groups.iter_mut() {
        group.sort_by_key(|r| r.source);
        reduce_fn(*key, group);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::write_dataset;

    fn tmpfile(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("wavehist-sim-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    fn meta_with_n(n: u64) -> DatasetMeta {
        let keys: Vec<u32> = (0..n).map(|i| (i % 7 + 1) as u32).collect();
        write_dataset(&keys, 8, 4, &tmpfile(&format!("sim-{n}.bin"))).unwrap()
    }

    #[test]
    fn partition_sizes_and_coverage() {
        let meta = meta_with_n(1000);
        let splits = partition_dataset(&meta, 256).unwrap();
        let sizes: Vec<u64> = splits.iter().map(|s| s.n_records).collect();
        assert_eq!(sizes, vec![256, 256, 256, 232]);
        assert_eq!(splits.iter().map(|s| s.id).collect::<Vec<_>>(), vec![1, 2, 3, 4]);

        // contiguous, disjoint, covering
        let mut expected = crate::ingest::HEADER_LEN;
        for s in &splits {
            assert_eq!(s.byte_range.0, expected);
            expected += s.byte_range.1;
        }
        assert_eq!(expected, crate::ingest::HEADER_LEN + 1000 * 4);

        let single = partition_dataset(&meta, 5000).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].n_records, 1000);
    }

    #[test]
    fn byte_costs_follow_accounting_table() {
        assert_eq!(EmitValue::Count(7).byte_cost(), 4);
        assert_eq!(EmitValue::Coeff(1.5).byte_cost(), 8);
        assert_eq!(EmitValue::Tagged(CoefTag::KthHigh, -2.0).byte_cost(), 9);
        assert_eq!(EmitValue::Null.byte_cost(), 0);
    }

    #[test]
    fn silent_mappers_reach_reducer_with_zero_groups() {
        let meta = meta_with_n(30);
        let mut splits = partition_dataset(&meta, 10).unwrap();
        let mut ledger = CommLedger::new();
        let mut groups = 0;
        run_job(
            &mut splits,
            "t",
            1,
            &[],
            &mut ledger,
            |_, _| Ok(MapOutput::default()),
            |_, _| groups += 1,
        )
        .unwrap();
        assert_eq!(groups, 0);
        assert_eq!(ledger.row("t", 1), LedgerRow::default());
    }

    #[test]
    fn ledger_charges_every_emission_once() {
        let meta = meta_with_n(30);
        let mut splits = partition_dataset(&meta, 10).unwrap();
        let mut ledger = CommLedger::new();
        run_job(
            &mut splits,
            "t",
            1,
            &[],
            &mut ledger,
            |split, _| {
                Ok(MapOutput {
                    emissions: vec![Emission {
                        key: split.id as u32,
                        value: EmitValue::Coeff(1.0),
                    }],
                    state: Vec::new(),
                })
            },
            |_, _| {},
        )
        .unwrap();
        // 3 emissions with 4-byte keys and 8-byte values
        let row = ledger.row("t", 1);
        assert_eq!(row.pairs, 3);
        assert_eq!(row.bytes, 36);
    }

    #[test]
    fn broadcast_charged_per_mapper_copy() {
        let meta = meta_with_n(30);
        let mut splits = partition_dataset(&meta, 10).unwrap();
        let mut ledger = CommLedger::new();
        run_job(
            &mut splits,
            "t",
            2,
            &[0u8; 8],
            &mut ledger,
            |_, bcast| {
                assert_eq!(bcast.len(), 8);
                Ok(MapOutput::default())
            },
            |_, _| {},
        )
        .unwrap();
        assert_eq!(ledger.row("t", 2).broadcast_bytes, 3 * 8);
    }

    #[test]
    fn grouping_is_sorted_and_schedule_invariant() {
        let meta = meta_with_n(40);
        let run = |order: &[usize]| {
            let mut splits = partition_dataset(&meta, 10).unwrap();
            let mut ledger = CommLedger::new();
            let mut seen: Vec<(u32, Vec<usize>, Vec<EmitValue>)> = Vec::new();
            run_job_with_order(
                &mut splits,
                "t",
                1,
                &[],
                &mut ledger,
                order,
                |split, _| {
                    let mut emissions = vec![Emission {
                        key: 100,
                        value: EmitValue::Count(split.id as u32),
                    }];
                    if split.id % 2 == 0 {
                        emissions.push(Emission { key: 7, value: EmitValue::Null });
                    }
                    Ok(MapOutput { emissions, state: vec![split.id as u8] })
                },
                |key, group| {
                    seen.push((
                        key,
                        group.iter().map(|r| r.source).collect(),
                        group.iter().map(|r| r.value).collect(),
                    ));
                },
            )
            .unwrap();
            (seen, ledger, splits.iter().map(|s| s.state.clone()).collect::<Vec<_>>())
        };

        let (seen_a, ledger_a, states_a) = run(&[0, 1, 2, 3]);
        let (seen_b, ledger_b, states_b) = run(&[3, 1, 0, 2]);
        assert_eq!(seen_a, seen_b);
        assert_eq!(ledger_a, ledger_b);
        assert_eq!(states_a, states_b);

        // keys ascending, one group per distinct key, sources ascending
        assert_eq!(seen_a[0].0, 7);
        assert_eq!(seen_a[1].0, 100);
        assert_eq!(seen_a[1].1, vec![1, 2, 3, 4]);
    }

    #[test]
    fn state_persists_between_rounds() {
        let meta = meta_with_n(20);
        let mut splits = partition_dataset(&meta, 10).unwrap();
        let mut ledger = CommLedger::new();
        run_job(
            &mut splits,
            "t",
            1,
            &[],
            &mut ledger,
            |split, _| Ok(MapOutput { emissions: vec![], state: vec![split.id as u8; 3] }),
            |_, _| {},
        )
        .unwrap();
        run_job(
            &mut splits,
            "t",
            2,
            &[],
            &mut ledger,
            |split, _| {
                assert_eq!(split.state, vec![split.id as u8; 3]);
                Ok(MapOutput { emissions: vec![], state: split.state.clone() })
            },
            |_, _| {},
        )
        .unwrap();
    }

    #[test]
    fn mapper_error_aborts_job() {
        let meta = meta_with_n(20);
        let mut splits = partition_dataset(&meta, 10).unwrap();
        let mut ledger = CommLedger::new();
        let result = run_job(
            &mut splits,
            "t",
            1,
            &[],
            &mut ledger,
            |split, _| {
                if split.id == 2 {
                    Err(Error::Protocol("boom".into()))
                } else {
                    Ok(MapOutput::default())
                }
            },
            |_, _| {},
        );
        assert!(matches!(result, Err(Error::Protocol(_))));
    }

    #[test]
    fn ledger_csv_format() {
        let mut ledger = CommLedger::new();
        ledger.charge_emission("a", 1, &EmitValue::Count(1));
        ledger.charge_broadcast("a", 2, 4, 8);
        let mut out = Vec::new();
        ledger.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(
            text,
            "algorithm,round,pairs,bytes,broadcast_bytes\na,1,1,8,0\na,2,0,0,32\n"
        );
    }
}
