use std::collections::{BTreeMap, HashMap, HashSet};

use serde::Serialize;

use super::{EmbeddingSet, LabelEntry, LabelTable, SplitTag};
use crate::error::{BenchError, Result};
use crate::linalg::Matrix;

/// Embeddings joined with their labels.
///
/// Rows follow the embedding file order. `targets[i]` is the canonical class
/// index of row `i`, i.e. the lexicographic rank of its label in `class_list`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskDataset {
    name: String,
    embeddings: EmbeddingSet,
    labels: LabelTable,
    class_list: Vec<String>,
    targets: Vec<usize>,
}

/// Ids dropped while joining, from either side.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct JoinReport {
    pub dropped_embeddings: Vec<String>,
    pub dropped_labels: Vec<String>,
}

impl JoinReport {
    pub fn is_clean(&self) -> bool {
        self.dropped_embeddings.is_empty() && self.dropped_labels.is_empty()
    }
}

/// Joins embeddings with labels over the intersection of their ids.
pub fn join(
    embeddings: &EmbeddingSet,
    labels: &LabelTable,
    name: &str,
) -> Result<(TaskDataset, JoinReport)> {
    let mut keep = Vec::new();
    let mut report = JoinReport::default();
    let mut present = HashSet::with_capacity(embeddings.len());
    for (row, id) in embeddings.sample_ids().iter().enumerate() {
        present.insert(id.as_str());
        if labels.get(id).is_some() {
            keep.push(row);
        } else {
            report.dropped_embeddings.push(id.clone());
        }
    }
    for (id, _) in labels.iter() {
        if !present.contains(id.as_str()) {
            report.dropped_labels.push(id.clone());
        }
    }
    if keep.is_empty() {
        return Err(BenchError::Validation(format!(
            "task {name:?}: embeddings and labels share no sample id"
        )));
    }
    let embeddings = if keep.len() == embeddings.len() {
        embeddings.clone()
    } else {
        embeddings.select(&keep)?
    };
    let entries: BTreeMap<String, LabelEntry> = embeddings
        .sample_ids()
        .iter()
        .map(|id| (id.clone(), labels.get(id).cloned().expect("joined id")))
        .collect();
    let labels = LabelTable::from_entries_unchecked(entries);
    let class_list = labels.classes();
    if class_list.len() < 2 {
        return Err(BenchError::Validation(format!(
            "task {name:?}: fewer than 2 classes after join"
        )));
    }
    let index: HashMap<&str, usize> = class_list
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let targets = embeddings
        .sample_ids()
        .iter()
        .map(|id| index[labels.get(id).expect("joined id").label.as_str()])
        .collect();
    Ok((
        TaskDataset {
            name: name.to_owned(),
            embeddings,
            labels,
            class_list,
            targets,
        },
        report,
    ))
}

impl TaskDataset {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.embeddings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.dim()
    }

    pub fn embeddings(&self) -> &EmbeddingSet {
        &self.embeddings
    }

    pub fn labels(&self) -> &LabelTable {
        &self.labels
    }

    pub fn class_list(&self) -> &[String] {
        &self.class_list
    }

    pub fn num_classes(&self) -> usize {
        self.class_list.len()
    }

    pub fn sample_ids(&self) -> &[String] {
        self.embeddings.sample_ids()
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    fn entry(&self, row: usize) -> &LabelEntry {
        self.labels
            .get(&self.sample_ids()[row])
            .expect("dataset rows always carry labels")
    }

    pub fn patient(&self, row: usize) -> Option<&str> {
        self.entry(row).patient_id.as_deref()
    }

    pub fn split_tag(&self, row: usize) -> Option<SplitTag> {
        self.entry(row).split_tag
    }

    /// Row features widened to f64.
    pub fn features(&self, rows: &[usize]) -> Matrix {
        let d = self.dim();
        let mut data = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            data.extend(self.embeddings.row(r).iter().map(|&v| f64::from(v)));
        }
        Matrix::from_vec(rows.len(), d, data)
    }

    pub fn targets_of(&self, rows: &[usize]) -> Vec<usize> {
        rows.iter().map(|&r| self.targets[r]).collect()
    }

    /// Row index of every sample id.
    pub fn row_index(&self) -> HashMap<&str, usize> {
        self.sample_ids()
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect()
    }

    /// Keeps only rows whose id is in `ids`, preserving order.
    pub fn restrict(&self, ids: &HashSet<String>) -> Result<TaskDataset> {
        let rows: Vec<usize> = (0..self.len())
            .filter(|&r| ids.contains(&self.sample_ids()[r]))
            .collect();
        if rows.is_empty() {
            return Err(BenchError::Validation(format!(
                "task {:?}: no samples left after restriction",
                self.name
            )));
        }
        let emb = self.embeddings.select(&rows)?;
        join(&emb, &self.labels, &self.name).map(|(d, _)| d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb(ids: &[&str]) -> EmbeddingSet {
        let vals = (0..ids.len() * 2).map(|v| v as f32).collect();
        EmbeddingSet::new(ids.iter().map(|s| s.to_string()).collect(), 2, vals, "m").unwrap()
    }

    #[test]
    fn identical_ids_drop_nothing() {
        let labels = LabelTable::from_pairs([("a", "x"), ("b", "y"), ("c", "x")]).unwrap();
        let (ds, rep) = join(&emb(&["a", "b", "c"]), &labels, "t").unwrap();
        assert!(rep.is_clean());
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.targets(), &[0, 1, 0]);
    }

    #[test]
    fn extra_label_is_reported() {
        let labels =
            LabelTable::from_pairs([("a", "x"), ("b", "y"), ("c", "x"), ("z", "y")]).unwrap();
        let (ds, rep) = join(&emb(&["a", "b", "c"]), &labels, "t").unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(rep.dropped_labels, vec!["z"]);
        assert!(rep.dropped_embeddings.is_empty());
    }

    #[test]
    fn single_class_after_join_fails() {
        let labels = LabelTable::from_pairs([("a", "x"), ("b", "x"), ("q", "y")]).unwrap();
        let err = join(&emb(&["a", "b"]), &labels, "t").unwrap_err();
        assert!(err.to_string().contains("fewer than 2 classes"));
    }

    #[test]
    fn empty_intersection_fails() {
        let labels = LabelTable::from_pairs([("q", "x"), ("r", "y")]).unwrap();
        assert!(join(&emb(&["a", "b"]), &labels, "t").is_err());
    }

    #[test]
    fn join_is_idempotent() {
        let labels =
            LabelTable::from_pairs([("b", "y"), ("a", "x"), ("c", "z"), ("d", "x")]).unwrap();
        let (ds, _) = join(&emb(&["c", "a", "b"]), &labels, "t").unwrap();
        let (again, rep) = join(ds.embeddings(), ds.labels(), "t").unwrap();
        assert!(rep.is_clean());
        assert_eq!(again, ds);
    }

    #[test]
    fn class_order_ignores_input_order() {
        let l1 = LabelTable::from_pairs([("a", "zeta"), ("b", "alpha"), ("c", "mid")]).unwrap();
        let l2 = LabelTable::from_pairs([("c", "mid"), ("a", "zeta"), ("b", "alpha")]).unwrap();
        let (d1, _) = join(&emb(&["a", "b", "c"]), &l1, "t").unwrap();
        let (d2, _) = join(&emb(&["b", "c", "a"]), &l2, "t").unwrap();
        assert_eq!(d1.class_list(), d2.class_list());
        assert_eq!(d1.class_list(), &["alpha", "mid", "zeta"]);
    }
}
