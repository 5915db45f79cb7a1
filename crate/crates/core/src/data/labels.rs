use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

/// Partition a sample belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Val,
    Test,
}

impl SplitTag {
    pub const ALL: [SplitTag; 3] = [SplitTag::Train, SplitTag::Val, SplitTag::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::Val => "val",
            SplitTag::Test => "test",
        }
    }
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SplitTag {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitTag::Train),
            "val" => Ok(SplitTag::Val),
            "test" => Ok(SplitTag::Test),
            other => Err(BenchError::Format(format!("unknown split tag {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelEntry {
    pub label: String,
    pub patient_id: Option<String>,
    pub split_tag: Option<SplitTag>,
}

impl LabelEntry {
    pub fn new(label: impl Into<String>) -> Self {
        LabelEntry {
            label: label.into(),
            patient_id: None,
            split_tag: None,
        }
    }

    pub fn with_patient(mut self, patient: impl Into<String>) -> Self {
        self.patient_id = Some(patient.into());
        self
    }

    pub fn with_split(mut self, tag: SplitTag) -> Self {
        self.split_tag = Some(tag);
        self
    }
}

/// Class labels keyed by sample id, with optional patient and split tags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelTable {
    entries: BTreeMap<String, LabelEntry>,
}

#[derive(Serialize, Deserialize)]
struct LabelRow {
    sample_id: String,
    label: String,
    patient_id: String,
    split_tag: String,
}

const HEADER: [&str; 4] = ["sample_id", "label", "patient_id", "split_tag"];

impl LabelTable {
    pub fn new(entries: BTreeMap<String, LabelEntry>) -> Result<Self> {
        let table = LabelTable { entries };
        for (id, e) in &table.entries {
            if id.is_empty() {
                return Err(BenchError::Validation("empty sample id in label table".into()));
            }
            if e.label.is_empty() {
                return Err(BenchError::Validation(format!("empty class label for {id:?}")));
            }
        }
        if table.classes().len() < 2 {
            return Err(BenchError::Validation(
                "label table has fewer than 2 classes".into(),
            ));
        }
        Ok(table)
    }

    pub(crate) fn from_entries_unchecked(entries: BTreeMap<String, LabelEntry>) -> Self {
        LabelTable { entries }
    }

    pub fn from_pairs<I, S, L>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, L)>,
        S: Into<String>,
        L: Into<String>,
    {
        let mut entries = BTreeMap::new();
        for (id, label) in pairs {
            let id = id.into();
            if entries.insert(id.clone(), LabelEntry::new(label)).is_some() {
                return Err(BenchError::Validation(format!("duplicate sample id {id:?}")));
            }
        }
        Self::new(entries)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&LabelEntry> {
        self.entries.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &LabelEntry)> {
        self.entries.iter()
    }

    /// Distinct labels, sorted lexicographically.
    pub fn classes(&self) -> Vec<String> {
        self.entries
            .values()
            .map(|e| e.label.as_str())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .map(str::to_owned)
            .collect()
    }

    pub fn has_predefined_test(&self) -> bool {
        self.entries
            .values()
            .any(|e| e.split_tag == Some(SplitTag::Test))
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != HEADER {
            return Err(BenchError::Format(format!(
                "label CSV header must be `{}`, found `{}`",
                HEADER.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut entries = BTreeMap::new();
        for row in rdr.deserialize() {
            let row: LabelRow = row?;
            let entry = LabelEntry {
                label: row.label,
                patient_id: (!row.patient_id.is_empty()).then_some(row.patient_id),
                split_tag: if row.split_tag.is_empty() {
                    None
                } else {
                    Some(row.split_tag.parse()?)
                },
            };
            if entries.insert(row.sample_id.clone(), entry).is_some() {
                return Err(BenchError::Validation(format!(
                    "duplicate sample id {:?} in label table",
                    row.sample_id
                )));
            }
        }
        Self::new(entries)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(HEADER)?;
        for (id, e) in &self.entries {
            w.write_record([
                id.as_str(),
                e.label.as_str(),
                e.patient_id.as_deref().unwrap_or(""),
                e.split_tag.map_or("", SplitTag::as_str),
            ])?;
        }
        w.flush().map_err(|e| BenchError::io("<label csv>", e))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| BenchError::io(path, e))?;
        Self::read_csv(file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| BenchError::io(path, e))?;
        self.write_csv(file)
    }
}
