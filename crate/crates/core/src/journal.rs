//! Append-only record of annotated voxels.
//!
//! Persisted as JSON lines: a `campaign` header record followed by one
//! `entry` record per annotated voxel, in the order they were committed.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::campaign::{Budget, Mode};
use crate::error::{Error, Result};
use crate::strategy::Strategy;
use crate::voxel::VoxelCoord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JournalEntry {
    pub scan_id: String,
    pub round: u32,
    pub coord: VoxelCoord,
    pub strategy: Strategy,
    pub score: f64,
    pub point_indices: Vec<u32>,
    pub revealed_labels: Vec<u16>,
}

/// Campaign settings that a journal must agree with to be resumed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JournalHeader {
    pub mode: Mode,
    pub strategy: Strategy,
    pub voxel_size: f64,
    pub budget: Budget,
    pub seed: u64,
    pub classes: u16,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum Record {
    Campaign(JournalHeader),
    Entry(JournalEntry),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationJournal {
    header: JournalHeader,
    entries: Vec<JournalEntry>,
    keys: HashSet<(String, VoxelCoord)>,
}

impl AnnotationJournal {
    pub fn new(header: JournalHeader) -> Self {
        AnnotationJournal {
            header,
            entries: Vec::new(),
            keys: HashSet::new(),
        }
    }

    pub fn header(&self) -> &JournalHeader {
        &self.header
    }

    pub fn entries(&self) -> &[JournalEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, scan_id: &str, coord: &VoxelCoord) -> bool {
        self.keys.contains(&(scan_id.to_string(), *coord))
    }

    pub fn validate_entry(&self, entry: &JournalEntry) -> Result<()> {
        if entry.point_indices.len() != entry.revealed_labels.len() {
            return Err(Error::Integrity(format!(
                "scan {} voxel {}: {} indices but {} labels",
                entry.scan_id,
                entry.coord,
                entry.point_indices.len(),
                entry.revealed_labels.len()
            )));
        }
        if let Some(l) = entry
            .revealed_labels
            .iter()
            .find(|&&l| l > self.header.classes)
        {
            return Err(Error::Integrity(format!(
                "scan {} voxel {}: label {l} beyond {} classes",
                entry.scan_id, entry.coord, self.header.classes
            )));
        }
        if self.contains(&entry.scan_id, &entry.coord) {
            return Err(Error::Integrity(format!(
                "scan {} voxel {} is already annotated",
                entry.scan_id, entry.coord
            )));
        }
        Ok(())
    }

    pub fn append(&mut self, entry: JournalEntry) -> Result<()> {
        self.validate_entry(&entry)?;
        self.keys.insert((entry.scan_id.clone(), entry.coord));
        self.entries.push(entry);
        Ok(())
    }

    /// Appends all entries or none of them.
    pub fn append_all(&mut self, entries: Vec<JournalEntry>) -> Result<()> {
        let mut batch = HashSet::new();
        for e in &entries {
            self.validate_entry(e)?;
            if !batch.insert((e.scan_id.as_str(), e.coord)) {
                return Err(Error::Integrity(format!(
                    "scan {} voxel {} appears twice in one batch",
                    e.scan_id, e.coord
                )));
            }
        }
        for e in entries {
            self.keys.insert((e.scan_id.clone(), e.coord));
            self.entries.push(e);
        }
        Ok(())
    }

    pub fn last_round(&self) -> u32 {
        self.entries.iter().map(|e| e.round).max().unwrap_or(0)
    }

    pub fn total_points(&self) -> usize {
        self.entries.iter().map(|e| e.point_indices.len()).sum()
    }

    pub fn header_line(&self) -> String {
        serde_json::to_string(&Record::Campaign(self.header.clone()))
            .expect("journal header serializes")
    }

    pub fn entry_line(entry: &JournalEntry) -> String {
        serde_json::to_string(&Record::Entry(entry.clone())).expect("journal entry serializes")
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = self.header_line();
        out.push('\n');
        for e in &self.entries {
            out.push_str(&Self::entry_line(e));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut journal: Option<AnnotationJournal> = None;
        for (lineno, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l)) {
            if line.trim().is_empty() {
                continue;
            }
            let record: Record = serde_json::from_str(line)
                .map_err(|e| Error::Integrity(format!("journal line {lineno}: {e}")))?;
            match (record, journal.as_mut()) {
                (Record::Campaign(h), None) => journal = Some(AnnotationJournal::new(h)),
                (Record::Campaign(_), Some(_)) => {
                    return Err(Error::Integrity(format!(
                        "journal line {lineno}: second campaign header"
                    )))
                }
                (Record::Entry(_), None) => {
                    return Err(Error::Integrity("journal has no campaign header".into()))
                }
                (Record::Entry(e), Some(j)) => j
                    .append(e)
                    .map_err(|err| Error::Integrity(format!("journal line {lineno}: {err}")))?,
            }
        }
        journal.ok_or_else(|| Error::Integrity("empty journal".into()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

/// Durable append-only journal file.
#[derive(Debug)]
pub struct JournalWriter {
    path: PathBuf,
    file: File,
}

impl JournalWriter {
    /// Starts a new journal file holding only the header.
    pub fn create(path: impl AsRef<Path>, journal: &AnnotationJournal) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        file.write_all(journal.to_jsonl().as_bytes())
            .and_then(|_| file.sync_data())
            .map_err(|e| Error::io(&path, e))?;
        Ok(JournalWriter { path, file })
    }

    pub fn open_append(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new()
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(JournalWriter { path, file })
    }

    /// Writes the entries in one buffered write followed by a sync.
    pub fn append(&mut self, entries: &[JournalEntry]) -> Result<()> {
        if entries.is_empty() {
            return Ok(());
        }
        let mut buf = String::new();
        for e in entries {
            buf.push_str(&AnnotationJournal::entry_line(e));
            buf.push('\n');
        }
        self.file
            .write_all(buf.as_bytes())
            .and_then(|_| self.file.sync_data())
            .map_err(|e| Error::io(&self.path, e))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}
