//! Patient-coherent train/val/test splitting.
//!
//! The drawing unit is a patient group; samples without a patient id form
//! singleton groups. Groups are shuffled per class (majority label) and packed
//! greedily until each partition reaches its round-half-up target.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{SplitTag, TaskDataset};
use crate::error::{BenchError, Result};
use crate::rng;

pub use crate::data::SplitTag as Split;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    assignment: BTreeMap<String, SplitTag>,
    /// `None` when the assignment was loaded from a file.
    seed: Option<u64>,
    /// `(test_fraction, val_fraction)`.
    ratios: Option<(f64, f64)>,
}

impl SplitAssignment {
    pub fn from_map(assignment: BTreeMap<String, SplitTag>) -> Self {
        SplitAssignment {
            assignment,
            seed: None,
            ratios: None,
        }
    }

    pub fn get(&self, id: &str) -> Option<SplitTag> {
        self.assignment.get(id).copied()
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn ratios(&self) -> Option<(f64, f64)> {
        self.ratios
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, SplitTag)> {
        self.assignment.iter().map(|(k, v)| (k, *v))
    }

    pub fn count(&self, tag: SplitTag) -> usize {
        self.assignment.values().filter(|&&t| t == tag).count()
    }

    /// Dataset rows assigned to `tag`, in dataset order.
    pub fn rows(&self, ds: &TaskDataset, tag: SplitTag) -> Vec<usize> {
        ds.sample_ids()
            .iter()
            .enumerate()
            .filter(|(_, id)| self.get(id) == Some(tag))
            .map(|(i, _)| i)
            .collect()
    }

    /// Stable fingerprint of the test partition (sorted test ids).
    pub fn test_fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for (id, tag) in &self.assignment {
            if *tag == SplitTag::Test {
                h.update(id.as_bytes());
                h.update([0u8]);
            }
        }
        hex::encode(&h.finalize()[..8])
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["sample_id", "split"])?;
        for (id, tag) in &self.assignment {
            w.write_record([id.as_str(), tag.as_str()])?;
        }
        w.flush().map_err(|e| BenchError::io("<split csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        if rdr.headers()?.iter().collect::<Vec<_>>() != ["sample_id", "split"] {
            return Err(BenchError::Format("split CSV header must be `sample_id,split`".into()));
        }
        let mut map = BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec?;
            let id = rec[0].to_owned();
            let tag: SplitTag = rec[1].parse()?;
            if map.insert(id.clone(), tag).is_some() {
                return Err(BenchError::Validation(format!("sample {id:?} assigned twice")));
            }
        }
        Ok(Self::from_map(map))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| BenchError::io(path, e))?;
        self.write_csv(f)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| BenchError::io(path, e))?;
        Self::read_csv(f)
    }
}

pub(crate) fn round_half_up(x: f64) -> usize {
    (x + 0.5 + 1e-9).floor().max(0.0) as usize
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum GroupKey {
    Patient(String),
    Sample(String),
}

#[derive(Debug, Clone)]
struct Group {
    rows: Vec<usize>,
    class: usize,
}

/// Patient groups in canonical key order; the result does not depend on row order.
fn patient_groups(ds: &TaskDataset) -> Vec<Group> {
    let mut by_key: BTreeMap<GroupKey, Vec<usize>> = BTreeMap::new();
    for (row, id) in ds.sample_ids().iter().enumerate() {
        let key = match ds.patient(row) {
            Some(p) => GroupKey::Patient(p.to_owned()),
            None => GroupKey::Sample(id.clone()),
        };
        by_key.entry(key).or_default().push(row);
    }
    by_key
        .into_values()
        .map(|mut rows| {
            rows.sort_by(|&a, &b| ds.sample_ids()[a].cmp(&ds.sample_ids()[b]));
            let mut counts = vec![0usize; ds.num_classes()];
            for &r in &rows {
                counts[ds.targets()[r]] += 1;
            }
            // majority label; ties resolve to the smallest class index
            let class = counts
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
                .map(|(c, _)| c)
                .unwrap_or(0);
            Group { rows, class }
        })
        .collect()
}

/// Pops groups class by class until `target` samples are taken, overshooting by
/// less than one group. Per-class quotas follow the cumulative class share.
fn draw(pool: &mut [VecDeque<Group>], target: usize) -> Vec<Group> {
    let sizes: Vec<usize> = pool
        .iter()
        .map(|q| q.iter().map(|g| g.rows.len()).sum())
        .collect();
    let total: usize = sizes.iter().sum();
    let mut taken = 0usize;
    let mut chosen = Vec::new();
    if total == 0 || target == 0 {
        return chosen;
    }
    let mut cum = 0usize;
    for (c, queue) in pool.iter_mut().enumerate() {
        cum += sizes[c];
        let quota = (2 * target * cum + total) / (2 * total);
        while taken < quota {
            match queue.pop_front() {
                Some(g) => {
                    taken += g.rows.len();
                    chosen.push(g);
                }
                None => break,
            }
        }
    }
    for queue in pool.iter_mut() {
        while taken < target {
            match queue.pop_front() {
                Some(g) => {
                    taken += g.rows.len();
                    chosen.push(g);
                }
                None => break,
            }
        }
    }
    chosen
}

/// Deterministic patient-coherent split.
///
/// A predefined test set (any `split_tag == test` in the labels) is kept
/// verbatim and only val is drawn from the rest. Patients with some samples
/// tagged test are moved to test entirely so no patient straddles partitions.
pub fn make_splits(
    ds: &TaskDataset,
    test_fraction: f64,
    val_fraction: f64,
    seed: u64,
) -> Result<SplitAssignment> {
    for (name, f) in [("test_fraction", test_fraction), ("val_fraction", val_fraction)] {
        if !(f > 0.0 && f < 1.0) {
            return Err(BenchError::InvalidInput(format!("{name} must lie in (0, 1), got {f}")));
        }
    }
    let n = ds.len();
    let groups = patient_groups(ds);
    let predefined = ds.labels().has_predefined_test();

    let mut test_groups = Vec::new();
    let mut free = Vec::new();
    if predefined {
        for g in groups {
            if g.rows.iter().any(|&r| ds.split_tag(r) == Some(SplitTag::Test)) {
                if g.rows.iter().any(|&r| ds.split_tag(r) != Some(SplitTag::Test)) {
                    log::warn!(
                        "task {}: patient group of {:?} is partly tagged test; whole group moved to test",
                        ds.name(),
                        ds.sample_ids()[g.rows[0]]
                    );
                }
                test_groups.push(g);
            } else {
                free.push(g);
            }
        }
        if free.is_empty() {
            return Err(BenchError::Validation(format!(
                "task {}: no training data (every sample is predefined test)",
                ds.name()
            )));
        }
    } else {
        let largest = groups.iter().map(|g| g.rows.len()).max().unwrap_or(0);
        let train_share = 1.0 - test_fraction - val_fraction * (1.0 - test_fraction);
        if largest as f64 > train_share * n as f64 {
            return Err(BenchError::Unsplittable(format!(
                "task {}: one patient group holds {largest} of {n} samples",
                ds.name()
            )));
        }
        free = groups;
    }

    let mut rng = rng::seeded(seed);
    let mut pool: Vec<VecDeque<Group>> = vec![VecDeque::new(); ds.num_classes()];
    let mut per_class: Vec<Vec<Group>> = vec![Vec::new(); ds.num_classes()];
    for g in free {
        per_class[g.class].push(g);
    }
    for (c, mut gs) in per_class.into_iter().enumerate() {
        gs.shuffle(&mut rng);
        pool[c] = gs.into();
    }

    if !predefined {
        test_groups = draw(&mut pool, round_half_up(test_fraction * n as f64));
    }
    let test_n: usize = test_groups.iter().map(|g| g.rows.len()).sum();
    let val_groups = draw(&mut pool, round_half_up(val_fraction * (n - test_n) as f64));

    let mut assignment = BTreeMap::new();
    let mut assign = |gs: &[Group], tag: SplitTag| {
        for g in gs {
            for &r in &g.rows {
                assignment.insert(ds.sample_ids()[r].clone(), tag);
            }
        }
    };
    assign(&test_groups, SplitTag::Test);
    assign(&val_groups, SplitTag::Val);
    let train_groups: Vec<Group> = pool.into_iter().flatten().collect();
    if train_groups.is_empty() {
        return Err(BenchError::Validation(format!(
            "task {}: no training data left after splitting",
            ds.name()
        )));
    }
    assign(&train_groups, SplitTag::Train);

    let split = SplitAssignment {
        assignment,
        seed: Some(seed),
        ratios: Some((test_fraction, val_fraction)),
    };
    let audit = audit_split(ds, &split);
    if !audit.missing_train_classes.is_empty() {
        log::warn!(
            "task {}: classes absent from train: {}",
            ds.name(),
            audit.missing_train_classes.join(", ")
        );
    }
    Ok(split)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitReport {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    /// Per split, per class (canonical order) sample counts.
    pub class_counts: BTreeMap<SplitTag, Vec<usize>>,
    pub leaked_patients: usize,
    pub leaked_patient_ids: Vec<String>,
    pub empty_splits: Vec<SplitTag>,
    pub missing_train_classes: Vec<String>,
    pub unassigned: Vec<String>,
}

/// Sizes, class balance and patient leakage of a split.
pub fn audit_split(ds: &TaskDataset, split: &SplitAssignment) -> SplitReport {
    let mut class_counts: BTreeMap<SplitTag, Vec<usize>> = SplitTag::ALL
        .iter()
        .map(|&t| (t, vec![0; ds.num_classes()]))
        .collect();
    let mut patient_splits: BTreeMap<&str, BTreeSet<SplitTag>> = BTreeMap::new();
    let mut unassigned = Vec::new();
    for (row, id) in ds.sample_ids().iter().enumerate() {
        match split.get(id) {
            Some(tag) => {
                class_counts.get_mut(&tag).expect("all tags present")[ds.targets()[row]] += 1;
                if let Some(p) = ds.patient(row) {
                    patient_splits.entry(p).or_default().insert(tag);
                }
            }
            None => unassigned.push(id.clone()),
        }
    }
    let leaked_patient_ids: Vec<String> = patient_splits
        .iter()
        .filter(|(_, s)| s.len() > 1)
        .map(|(p, _)| (*p).to_owned())
        .collect();
    let size = |t: SplitTag| class_counts[&t].iter().sum::<usize>();
    let empty_splits = SplitTag::ALL.into_iter().filter(|&t| size(t) == 0).collect();
    let missing_train_classes = class_counts[&SplitTag::Train]
        .iter()
        .zip(ds.class_list())
        .filter(|(n, _)| **n == 0)
        .map(|(_, c)| c.clone())
        .collect();
    SplitReport {
        train: size(SplitTag::Train),
        val: size(SplitTag::Val),
        test: size(SplitTag::Test),
        leaked_patients: leaked_patient_ids.len(),
        leaked_patient_ids,
        empty_splits,
        missing_train_classes,
        unassigned,
        class_counts,
    }
}
