//! Cluster partitioning of a multi-writer corpus.
//!
//! A global test split is drawn uniformly first; the remaining lines assign
//! each writer to the highest cluster threshold not exceeding its line count.
//! Writers in clusters 20..1000 then hold out a fixed per-writer number of
//! lines as per-cluster test sets.

use super::LineRecord;
use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

/// Minimum remaining-line thresholds defining the clusters.
pub const CLUSTER_THRESHOLDS: [usize; 7] = [1, 22, 55, 110, 225, 550, 1100];
/// Cluster names, by training-line convention.
pub const CLUSTER_LABELS: [usize; 7] = [1, 20, 50, 100, 200, 500, 1000];
/// Per-writer hold-out counts into the per-cluster test sets.
pub const CLUSTER_HOLDOUT: [usize; 7] = [0, 2, 5, 10, 25, 50, 100];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    TestCluster,
    TestGlobal,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "TRN",
            Split::TestCluster => "TST_C",
            Split::TestGlobal => "TST_G",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "TRN" => Some(Split::Train),
            "TST_C" => Some(Split::TestCluster),
            "TST_G" => Some(Split::TestGlobal),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClusterPartition {
    /// Writer -> cluster label (one of CLUSTER_LABELS).
    pub writer_cluster: BTreeMap<usize, usize>,
    /// Sample id -> split.
    pub splits: BTreeMap<usize, Split>,
    pub tst_global: BTreeSet<usize>,
}

impl ClusterPartition {
    pub fn train_ids(&self) -> Vec<usize> {
        self.ids_with(Split::Train)
    }

    pub fn ids_with(&self, split: Split) -> Vec<usize> {
        self.splits
            .iter()
            .filter(|(_, &s)| s == split)
            .map(|(&id, _)| id)
            .collect()
    }

    /// Per-cluster test ids, keyed by cluster label.
    pub fn cluster_test_ids(&self, records: &[LineRecord]) -> BTreeMap<usize, Vec<usize>> {
        let mut out: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (&id, &split) in &self.splits {
            if split == Split::TestCluster {
                let wsi = records[id].wsi;
                let label = self.writer_cluster[&wsi];
                out.entry(label).or_default().push(id);
            }
        }
        out
    }

    /// Structured text file: sample id, cluster label, split.
    pub fn save_with_records(&self, path: &Path, records: &[LineRecord]) -> Result<()> {
        let mut out = String::new();
        for (&id, &split) in &self.splits {
            let label = self.writer_cluster[&records[id].wsi];
            out.push_str(&format!("{id}\t{label}\t{}\n", split.as_str()));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<BTreeMap<usize, (usize, Split)>> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut out = BTreeMap::new();
        for (ln, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split('\t').collect();
            let bad = || Error::Format {
                what: "partition",
                path: path.to_path_buf(),
                detail: format!("line {}", ln + 1),
            };
            if parts.len() != 3 {
                return Err(bad());
            }
            let id: usize = parts[0].parse().map_err(|_| bad())?;
            let label: usize = parts[1].parse().map_err(|_| bad())?;
            let split = Split::parse(parts[2]).ok_or_else(bad)?;
            out.insert(id, (label, split));
        }
        Ok(out)
    }
}

/// Highest threshold not exceeding `count`, reported as the cluster label.
pub fn cluster_label_for_count(count: usize) -> usize {
    let mut label = CLUSTER_LABELS[0];
    for (t, l) in CLUSTER_THRESHOLDS.iter().zip(CLUSTER_LABELS.iter()) {
        if count >= *t {
            label = *l;
        }
    }
    label
}

fn holdout_for_label(label: usize) -> usize {
    CLUSTER_LABELS
        .iter()
        .position(|&l| l == label)
        .map(|i| CLUSTER_HOLDOUT[i])
        .unwrap_or(0)
}

pub fn partition(
    records: &[LineRecord],
    tst_global_fraction: f64,
    seed: u64,
) -> Result<ClusterPartition> {
    if records.is_empty() {
        return Err(Error::Invalid("cannot partition an empty manifest".into()));
    }
    if !(0.0..1.0).contains(&tst_global_fraction) {
        return Err(Error::Config(format!(
            "tst_global_fraction {tst_global_fraction} out of [0, 1)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7061727469);

    // Global draw first, uniformly over all samples.
    let n_global = (records.len() as f64 * tst_global_fraction).round() as usize;
    let mut ids: Vec<usize> = (0..records.len()).collect();
    ids.shuffle(&mut rng);
    let tst_global: BTreeSet<usize> = ids[..n_global].iter().copied().collect();

    // Remaining lines per writer.
    let mut remaining: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for r in records {
        remaining.entry(r.wsi).or_default();
    }
    for (id, r) in records.iter().enumerate() {
        if !tst_global.contains(&id) {
            remaining.get_mut(&r.wsi).unwrap().push(id);
        }
    }

    let mut writer_cluster = BTreeMap::new();
    let mut splits: BTreeMap<usize, Split> = BTreeMap::new();
    for &id in &tst_global {
        splits.insert(id, Split::TestGlobal);
    }
    for (&wsi, lines) in &remaining {
        if lines.is_empty() {
            log::warn!("writer {wsi} has no lines left after the global draw; assigning cluster 1 with zero training lines");
        }
        let label = cluster_label_for_count(lines.len());
        writer_cluster.insert(wsi, label);
        let holdout = holdout_for_label(label);
        let mut shuffled = lines.clone();
        shuffled.shuffle(&mut rng);
        for (i, &id) in shuffled.iter().enumerate() {
            splits.insert(
                id,
                if i < holdout {
                    Split::TestCluster
                } else {
                    Split::Train
                },
            );
        }
    }

    Ok(ClusterPartition {
        writer_cluster,
        splits,
        tst_global,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn records_for_counts(counts: &[usize]) -> Vec<LineRecord> {
        let mut records = Vec::new();
        for (wsi, &n) in counts.iter().enumerate() {
            for i in 0..n {
                records.push(LineRecord {
                    rel_path: format!("images/w{wsi}_l{i}.png"),
                    wsi,
                    transcript: "abc".into(),
                });
            }
        }
        records
    }

    #[test]
    fn label_rule_examples() {
        assert_eq!(cluster_label_for_count(60), 50); // threshold 55
        assert_eq!(cluster_label_for_count(21), 1);
        assert_eq!(cluster_label_for_count(22), 20);
        assert_eq!(cluster_label_for_count(1100), 1000);
        assert_eq!(cluster_label_for_count(0), 1);
    }

    #[test]
    fn writer_with_60_lines_goes_to_cluster_50_with_5_held_out() {
        let records = records_for_counts(&[60]);
        let p = partition(&records, 0.0, 1).unwrap();
        assert_eq!(p.writer_cluster[&0], 50);
        let trn = p.train_ids().len();
        let tst_c = p.ids_with(Split::TestCluster).len();
        assert_eq!((trn, tst_c), (55, 5));
    }

    #[test]
    fn writer_with_21_lines_goes_to_cluster_1_no_holdout() {
        let records = records_for_counts(&[21]);
        let p = partition(&records, 0.0, 1).unwrap();
        assert_eq!(p.writer_cluster[&0], 1);
        assert_eq!(p.ids_with(Split::TestCluster).len(), 0);
        assert_eq!(p.train_ids().len(), 21);
    }

    #[test]
    fn writer_with_1100_lines_goes_to_cluster_1000_holding_100() {
        let records = records_for_counts(&[1100]);
        let p = partition(&records, 0.0, 1).unwrap();
        assert_eq!(p.writer_cluster[&0], 1000);
        assert_eq!(p.ids_with(Split::TestCluster).len(), 100);
        assert_eq!(p.train_ids().len(), 1000);
    }

    #[test]
    fn partition_invariants_hold_across_seeds() {
        let counts = [5usize, 10, 23, 40, 60, 112, 230, 560, 1150, 3, 21, 22];
        let records = records_for_counts(&counts);
        for seed in 0..20u64 {
            let p = partition(&records, 0.0125, seed).unwrap();
            // disjoint and total
            assert_eq!(p.splits.len(), records.len());
            let trn = p.train_ids().len();
            let tst_c = p.ids_with(Split::TestCluster).len();
            let tst_g = p.ids_with(Split::TestGlobal).len();
            assert_eq!(trn + tst_c + tst_g, records.len());

            // per-writer holdout counts are exactly the scheme's numbers
            for (&wsi, &label) in &p.writer_cluster {
                let expected = holdout_for_label(label);
                let held = p
                    .splits
                    .iter()
                    .filter(|(&id, &s)| records[id].wsi == wsi && s == Split::TestCluster)
                    .count();
                assert_eq!(held, expected, "writer {wsi} cluster {label} seed {seed}");

                // cluster is the highest threshold <= remaining count
                let rem = p
                    .splits
                    .iter()
                    .filter(|(&id, &s)| records[id].wsi == wsi && s != Split::TestGlobal)
                    .count();
                assert_eq!(cluster_label_for_count(rem), label);
            }
        }
    }

    #[test]
    fn empty_manifest_is_an_error() {
        assert!(partition(&[], 0.0, 1).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("partition.tsv");
        let records = records_for_counts(&[30, 60]);
        let p = partition(&records, 0.1, 3).unwrap();
        p.save_with_records(&path, &records).unwrap();
        let loaded = ClusterPartition::load(&path).unwrap();
        assert_eq!(loaded.len(), records.len());
        for (&id, &split) in &p.splits {
            let (label, s) = loaded[&id];
            assert_eq!(s, split);
            assert_eq!(label, p.writer_cluster[&records[id].wsi]);
        }
    }
}
