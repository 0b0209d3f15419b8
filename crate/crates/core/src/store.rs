//! Profile database: one record per entity key holding its descriptions,
//! their frequencies, categories and provenance.
//!
//! A directory-backed store keeps two files:
//!
//! * `snapshot.db` starts with the header `PROFILEDB v1`, then one JSON
//!   profile per line.
//! * `journal.log` is an append-only list of JSON records applied on top of
//!   the snapshot when the store is opened.
//!
//! [`ProfileStore::commit`] folds the journal into a fresh snapshot.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::extract::{normalize_key, CategorizedDescription, DescriptionKind};
use crate::lexdb::Categorization;
use crate::text::{self, Tag, Token};

pub const SNAPSHOT_HEADER: &str = "PROFILEDB v1";
const SNAPSHOT_FILE: &str = "snapshot.db";
const JOURNAL_FILE: &str = "journal.log";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("storage error on {path}: {message}")]
    Storage { path: PathBuf, message: String },
    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("unknown category {0:?}")]
    UnknownCategory(String),
    #[error("max must be at least 1")]
    InvalidMax,
    #[error("no profile for key {0:?}")]
    MissingKey(String),
}

fn storage(path: &Path, err: impl std::fmt::Display) -> StoreError {
    StoreError::Storage {
        path: path.to_path_buf(),
        message: err.to_string(),
    }
}

/// Serde adapter storing token lists as tagged text.
pub(crate) mod tagged {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::text::{parse_tagged, render_tagged, Token};

    pub fn serialize<S: Serializer>(tokens: &[Token], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&render_tagged(tokens))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Token>, D::Error> {
        let line = String::deserialize(d)?;
        parse_tagged(&line).map_err(serde::de::Error::custom)
    }
}

/// Identity of a description inside a profile: lowercase surface text.
pub fn description_surface(tokens: &[Token]) -> String {
    text::surface(tokens).to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileEntry {
    #[serde(with = "tagged")]
    pub tokens: Vec<Token>,
    pub surface: String,
    pub frequency: u64,
    /// Unknown for entries imported from the plain text format.
    pub kind: Option<DescriptionKind>,
    pub categories: Vec<Categorization>,
    pub source: String,
    pub first_seen: NaiveDate,
    pub last_seen: NaiveDate,
}

impl ProfileEntry {
    pub fn has_category(&self, category: &str) -> bool {
        self.categories.iter().any(|c| c.category == category)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Profile {
    pub key: String,
    /// Entity tokens as first seen; empty for imported profiles.
    #[serde(with = "tagged", default)]
    pub entity: Vec<Token>,
    pub source: String,
    pub created: NaiveDate,
    pub entries: Vec<ProfileEntry>,
}

impl Profile {
    pub fn new(key: &str, source: &str, created: NaiveDate) -> Self {
        Profile {
            key: normalize_key(key),
            entity: Vec::new(),
            source: source.to_string(),
            created,
            entries: Vec::new(),
        }
    }

    pub fn entry(&self, surface: &str) -> Option<&ProfileEntry> {
        self.entries.iter().find(|e| e.surface == surface)
    }

    pub fn total_frequency(&self) -> u64 {
        self.entries.iter().map(|e| e.frequency).sum()
    }

    /// Entity tokens, rebuilt from the key with capitalized words when the
    /// profile carries none.
    pub fn entity_tokens(&self) -> Vec<Token> {
        if !self.entity.is_empty() {
            return self.entity.clone();
        }
        self.key
            .split_whitespace()
            .filter_map(|w| {
                let mut chars = w.chars();
                let first = chars.next()?;
                let word: String = first.to_uppercase().chain(chars).collect();
                Token::new(word, Tag::NP).ok()
            })
            .collect()
    }

    /// Entries sorted by frequency descending, then surface ascending.
    pub fn ranked(&self) -> Vec<&ProfileEntry> {
        let mut out: Vec<&ProfileEntry> = self.entries.iter().collect();
        out.sort_by(|a, b| rank_order(a, b));
        out
    }

    fn apply(&mut self, obs: &Observation) {
        if self.entity.is_empty() {
            self.entity = obs.entity.clone();
        }
        let surface = description_surface(&obs.tokens);
        match self.entries.iter_mut().find(|e| e.surface == surface) {
            Some(entry) => {
                entry.frequency += 1;
                entry.first_seen = entry.first_seen.min(obs.date);
                entry.last_seen = entry.last_seen.max(obs.date);
                if entry.kind.is_none() {
                    entry.kind = obs.kind;
                }
                // One trigger per category; the first one seen stays.
                for cat in &obs.categories {
                    if !entry.has_category(&cat.category) {
                        entry.categories.push(cat.clone());
                    }
                }
            }
            None => self.entries.push(ProfileEntry {
                tokens: obs.tokens.clone(),
                surface,
                frequency: 1,
                kind: obs.kind,
                categories: obs.categories.clone(),
                source: obs.source.clone(),
                first_seen: obs.date,
                last_seen: obs.date,
            }),
        }
    }
}

fn rank_order(a: &ProfileEntry, b: &ProfileEntry) -> std::cmp::Ordering {
    b.frequency
        .cmp(&a.frequency)
        .then_with(|| a.surface.cmp(&b.surface))
}

/// One sighting of a description, the unit of every store update.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub key: String,
    #[serde(with = "tagged", default)]
    pub entity: Vec<Token>,
    #[serde(with = "tagged")]
    pub tokens: Vec<Token>,
    pub kind: Option<DescriptionKind>,
    pub categories: Vec<Categorization>,
    pub source: String,
    pub date: NaiveDate,
}

impl Observation {
    pub fn new(key: &str, tokens: Vec<Token>, source: &str, date: NaiveDate) -> Self {
        Observation {
            key: normalize_key(key),
            entity: Vec::new(),
            tokens,
            kind: None,
            categories: Vec::new(),
            source: source.to_string(),
            date,
        }
    }
}

impl From<&CategorizedDescription> for Observation {
    fn from(cd: &CategorizedDescription) -> Self {
        let d = &cd.description;
        Observation {
            key: d.entity_key.clone(),
            entity: d.entity.clone(),
            tokens: d.tokens.clone(),
            kind: Some(d.kind),
            categories: cd.categories.clone(),
            source: d.source.clone(),
            date: d.date,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
enum JournalRecord {
    Upsert(Observation),
    Put(Profile),
}

#[derive(Debug)]
struct Backing {
    dir: PathBuf,
    journal: File,
}

/// In-memory profile map, optionally backed by a directory on disk.
#[derive(Debug)]
pub struct ProfileStore {
    profiles: BTreeMap<String, Profile>,
    categories: BTreeSet<String>,
    backing: Option<Backing>,
}

impl ProfileStore {
    pub fn in_memory<I, S>(categories: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ProfileStore {
            profiles: BTreeMap::new(),
            categories: categories.into_iter().map(Into::into).collect(),
            backing: None,
        }
    }

    /// Opens (creating if needed) a store directory and replays its journal.
    pub fn open<I, S>(dir: &Path, categories: I) -> Result<Self, StoreError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        fs::create_dir_all(dir).map_err(|e| storage(dir, e))?;
        let mut store = Self::in_memory(categories);

        let snapshot = dir.join(SNAPSHOT_FILE);
        if snapshot.exists() {
            store.profiles = read_snapshot(&snapshot)?;
        }

        let journal_path = dir.join(JOURNAL_FILE);
        if journal_path.exists() {
            for record in read_journal(&journal_path)? {
                store.apply(&record);
            }
        }
        let journal = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&journal_path)
            .map_err(|e| storage(&journal_path, e))?;
        store.backing = Some(Backing {
            dir: dir.to_path_buf(),
            journal,
        });
        Ok(store)
    }

    pub fn path(&self) -> Option<&Path> {
        self.backing.as_ref().map(|b| b.dir.as_path())
    }

    pub fn categories(&self) -> impl Iterator<Item = &str> {
        self.categories.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.profiles.keys().map(String::as_str)
    }

    pub fn profiles(&self) -> impl Iterator<Item = &Profile> {
        self.profiles.values()
    }

    /// Exact lookup on the normalized key.
    pub fn get(&self, key: &str) -> Option<&Profile> {
        self.profiles.get(&normalize_key(key))
    }

    pub fn upsert(&mut self, obs: Observation) -> Result<&Profile, StoreError> {
        let key = obs.key.clone();
        let record = JournalRecord::Upsert(obs);
        self.append(std::slice::from_ref(&record))?;
        self.apply(&record);
        Ok(&self.profiles[&key])
    }

    /// Applies a batch with a single journal write. Returns the touched keys
    /// in first-touch order.
    pub fn upsert_batch<I>(&mut self, batch: I) -> Result<Vec<String>, StoreError>
    where
        I: IntoIterator<Item = Observation>,
    {
        let records: Vec<JournalRecord> = batch.into_iter().map(JournalRecord::Upsert).collect();
        self.append(&records)?;
        let mut touched = Vec::new();
        for record in &records {
            if let JournalRecord::Upsert(obs) = record {
                if !touched.contains(&obs.key) {
                    touched.push(obs.key.clone());
                }
            }
            self.apply(record);
        }
        Ok(touched)
    }

    /// Replaces the profile stored under `profile.key`.
    pub fn put_profile(&mut self, profile: Profile) -> Result<(), StoreError> {
        let record = JournalRecord::Put(profile);
        self.append(std::slice::from_ref(&record))?;
        self.apply(&record);
        Ok(())
    }

    pub fn query(
        &self,
        key: &str,
        filter: Option<&[String]>,
        max: Option<usize>,
    ) -> Result<Vec<ProfileEntry>, StoreError> {
        if max == Some(0) {
            return Err(StoreError::InvalidMax);
        }
        if let Some(filter) = filter {
            if let Some(bad) = filter.iter().find(|c| !self.categories.contains(*c)) {
                return Err(StoreError::UnknownCategory(bad.clone()));
            }
        }
        let Some(profile) = self.get(key) else {
            return Ok(Vec::new());
        };
        let mut out: Vec<ProfileEntry> = profile
            .ranked()
            .into_iter()
            .filter(|e| match filter {
                Some(f) => f.iter().any(|c| e.has_category(c)),
                None => true,
            })
            .cloned()
            .collect();
        if let Some(max) = max {
            out.truncate(max);
        }
        Ok(out)
    }

    /// Writes a fresh snapshot and truncates the journal.
    pub fn commit(&mut self) -> Result<(), StoreError> {
        let Some(backing) = self.backing.as_mut() else {
            return Ok(());
        };
        let snapshot = backing.dir.join(SNAPSHOT_FILE);
        let tmp = backing.dir.join("snapshot.db.tmp");
        let mut body = String::from(SNAPSHOT_HEADER);
        body.push('\n');
        for profile in self.profiles.values() {
            let line = serde_json::to_string(profile).map_err(|e| storage(&tmp, e))?;
            body.push_str(&line);
            body.push('\n');
        }
        {
            let mut file = File::create(&tmp).map_err(|e| storage(&tmp, e))?;
            file.write_all(body.as_bytes()).map_err(|e| storage(&tmp, e))?;
            file.sync_all().map_err(|e| storage(&tmp, e))?;
        }
        fs::rename(&tmp, &snapshot).map_err(|e| storage(&snapshot, e))?;
        let journal_path = backing.dir.join(JOURNAL_FILE);
        backing.journal.set_len(0).map_err(|e| storage(&journal_path, e))?;
        backing.journal.sync_all().map_err(|e| storage(&journal_path, e))?;
        Ok(())
    }

    pub fn export_text(&self, key: &str) -> Result<String, StoreError> {
        self.get(key)
            .map(export_profile)
            .ok_or_else(|| StoreError::MissingKey(normalize_key(key)))
    }

    fn append(&mut self, records: &[JournalRecord]) -> Result<(), StoreError> {
        let Some(backing) = self.backing.as_mut() else {
            return Ok(());
        };
        let path = backing.dir.join(JOURNAL_FILE);
        let mut buf = String::new();
        for record in records {
            buf.push_str(&serde_json::to_string(record).map_err(|e| storage(&path, e))?);
            buf.push('\n');
        }
        backing
            .journal
            .write_all(buf.as_bytes())
            .and_then(|_| backing.journal.flush())
            .map_err(|e| storage(&path, e))
    }

    fn apply(&mut self, record: &JournalRecord) {
        match record {
            JournalRecord::Upsert(obs) => self
                .profiles
                .entry(obs.key.clone())
                .or_insert_with(|| Profile::new(&obs.key, &obs.source, obs.date))
                .apply(obs),
            JournalRecord::Put(profile) => {
                self.profiles.insert(profile.key.clone(), profile.clone());
            }
        }
    }
}

fn read_snapshot(path: &Path) -> Result<BTreeMap<String, Profile>, StoreError> {
    let file = File::open(path).map_err(|e| storage(path, e))?;
    let mut lines = BufReader::new(file).lines();
    match lines.next() {
        Some(Ok(header)) if header.trim_end() == SNAPSHOT_HEADER => {}
        Some(Err(e)) => return Err(storage(path, e)),
        _ => {
            return Err(StoreError::Format {
                line: 1,
                message: format!("expected header {SNAPSHOT_HEADER:?}"),
            })
        }
    }
    let mut profiles = BTreeMap::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| storage(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let profile: Profile = serde_json::from_str(&line).map_err(|e| StoreError::Format {
            line: i + 2,
            message: e.to_string(),
        })?;
        profiles.insert(profile.key.clone(), profile);
    }
    Ok(profiles)
}

fn read_journal(path: &Path) -> Result<Vec<JournalRecord>, StoreError> {
    let raw = fs::read_to_string(path).map_err(|e| storage(path, e))?;
    let complete = raw.ends_with('\n');
    let lines: Vec<&str> = raw.lines().collect();
    let mut records = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(record) => records.push(record),
            // torn tail from an interrupted append
            Err(_) if i + 1 == lines.len() && !complete => break,
            Err(e) => {
                return Err(StoreError::Format {
                    line: i + 1,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(records)
}

/// KEY / SOURCE / DESCRIPTION / FREQUENCY block, most frequent first.
pub fn export_profile(profile: &Profile) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "KEY: {}", profile.key);
    let _ = writeln!(out, "SOURCE: {}", profile.source);
    for entry in profile.ranked() {
        let _ = writeln!(out, "DESCRIPTION: {}", entry.surface);
        let _ = writeln!(out, "FREQUENCY: {}", entry.frequency);
    }
    out
}

/// Parses a block written by [`export_profile`]. Fields the block does not
/// carry get defaults: UNK tags, the epoch date, no kind, no categories.
pub fn import_text(block: &str) -> Result<Profile, StoreError> {
    let mut lines = block
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end()))
        .filter(|(_, l)| !l.is_empty());

    let mut field = |name: &str| -> Result<(usize, String), StoreError> {
        let (n, line) = lines.next().ok_or_else(|| StoreError::Format {
            line: 0,
            message: format!("missing {name} line"),
        })?;
        let value = line
            .strip_prefix(name)
            .and_then(|rest| rest.strip_prefix(':'))
            .ok_or_else(|| StoreError::Format {
                line: n,
                message: format!("expected {name}:"),
            })?;
        Ok((n, value.trim().to_string()))
    };

    let (_, key) = field("KEY")?;
    let (_, source) = field("SOURCE")?;
    let epoch = NaiveDate::default();
    let mut profile = Profile::new(&key, &source, epoch);

    loop {
        let (n, surface) = match field("DESCRIPTION") {
            Ok(v) => v,
            Err(StoreError::Format { line: 0, .. }) => break,
            Err(e) => return Err(e),
        };
        let (fl, freq) = field("FREQUENCY")?;
        let frequency: u64 = freq.parse().map_err(|_| StoreError::Format {
            line: fl,
            message: format!("bad frequency {freq:?}"),
        })?;
        if frequency == 0 {
            return Err(StoreError::Format {
                line: fl,
                message: "frequency must be at least 1".into(),
            });
        }
        let tokens: Vec<Token> = surface
            .split_whitespace()
            .map(|w| Token::new(w, Tag::UNK))
            .collect::<Result<_, _>>()
            .map_err(|e| StoreError::Format {
                line: n,
                message: e.to_string(),
            })?;
        if tokens.is_empty() {
            return Err(StoreError::Format {
                line: n,
                message: "empty description".into(),
            });
        }
        let surface = description_surface(&tokens);
        if profile.entry(&surface).is_some() {
            return Err(StoreError::Format {
                line: n,
                message: format!("duplicate description {surface:?}"),
            });
        }
        profile.entries.push(ProfileEntry {
            tokens,
            surface,
            frequency,
            kind: None,
            categories: Vec::new(),
            source: source.clone(),
            first_seen: epoch,
            last_seen: epoch,
        });
    }
    Ok(profile)
}
