//! Line-delimited request/response recordings for network-free replay.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::CompletionResponse;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CassetteMode {
    Record,
    Replay,
    Live,
}

impl std::str::FromStr for CassetteMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "record" => Ok(CassetteMode::Record),
            "replay" => Ok(CassetteMode::Replay),
            "live" => Ok(CassetteMode::Live),
            other => Err(format!("unknown cassette mode `{other}` (expected record|replay|live)")),
        }
    }
}

/// A provider failure captured during recording.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordedError {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<u16>,
    pub body: String,
}

/// One cassette line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub key: String,
    pub request_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<CompletionResponse>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<RecordedError>,
}

impl CassetteEntry {
    pub fn outcome(&self) -> Result<&CompletionResponse, &RecordedError> {
        match (&self.response, &self.error) {
            (Some(r), _) => Ok(r),
            (None, Some(e)) => Err(e),
            (None, None) => unreachable!("entries are validated on load"),
        }
    }
}

#[derive(Debug, Error)]
pub enum CassetteError {
    #[error("cassette {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cassette {path} line {line}: {message}")]
    Corrupt { path: String, line: usize, message: String },
    #[error("replay mode needs an existing cassette file, {0} not found")]
    Missing(String),
}

#[derive(Debug)]
pub struct Cassette {
    mode: CassetteMode,
    path: Option<PathBuf>,
    entries: Mutex<HashMap<String, CassetteEntry>>,
    writer: Mutex<Option<File>>,
}

impl Cassette {
    /// Opens a cassette file. Replay needs the file; record appends to it,
    /// creating it if absent; live never touches it.
    pub fn open(path: impl AsRef<Path>, mode: CassetteMode) -> Result<Self, CassetteError> {
        let path = path.as_ref().to_path_buf();
        let shown = path.display().to_string();
        let io = |source| CassetteError::Io {
            path: shown.clone(),
            source,
        };
        let entries = match mode {
            CassetteMode::Live => HashMap::new(),
            CassetteMode::Replay if !path.exists() => return Err(CassetteError::Missing(shown)),
            _ if path.exists() => load_entries(&path)?,
            _ => HashMap::new(),
        };
        let writer = if mode == CassetteMode::Record {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(io)?;
            }
            Some(OpenOptions::new().create(true).append(true).open(&path).map_err(io)?)
        } else {
            None
        };
        Ok(Self {
            mode,
            path: Some(path),
            entries: Mutex::new(entries),
            writer: Mutex::new(writer),
        })
    }

    /// A cassette that lives only in memory (record mode keeps entries, persists nothing).
    pub fn in_memory(mode: CassetteMode) -> Self {
        Self {
            mode,
            path: None,
            entries: Mutex::new(HashMap::new()),
            writer: Mutex::new(None),
        }
    }

    /// Builds a replay cassette from entries.
    pub fn from_entries(entries: impl IntoIterator<Item = CassetteEntry>) -> Self {
        let c = Self::in_memory(CassetteMode::Replay);
        {
            let mut map = c.entries.lock().expect("cassette lock");
            for e in entries {
                map.insert(e.key.clone(), e);
            }
        }
        c
    }

    pub fn mode(&self) -> CassetteMode {
        self.mode
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cassette lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &str) -> Option<CassetteEntry> {
        self.entries.lock().expect("cassette lock").get(key).cloned()
    }

    /// Stores an entry; in record mode with a file, the line is written and
    /// synced before this returns.
    pub fn record(&self, entry: CassetteEntry) -> Result<(), CassetteError> {
        {
            let mut writer = self.writer.lock().expect("cassette writer lock");
            if let Some(file) = writer.as_mut() {
                let shown = self.path.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
                let io = |source| CassetteError::Io {
                    path: shown.clone(),
                    source,
                };
                let mut line = serde_json::to_string(&entry).expect("entry serializes");
                line.push('\n');
                file.write_all(line.as_bytes()).map_err(io)?;
                file.sync_data().map_err(io)?;
            }
        }
        self.entries
            .lock()
            .expect("cassette lock")
            .insert(entry.key.clone(), entry);
        Ok(())
    }

    /// All entries, sorted by key.
    pub fn entries(&self) -> Vec<CassetteEntry> {
        let mut v: Vec<_> = self.entries.lock().expect("cassette lock").values().cloned().collect();
        v.sort_by(|a, b| a.key.cmp(&b.key));
        v
    }
}

fn load_entries(path: &Path) -> Result<HashMap<String, CassetteEntry>, CassetteError> {
    let shown = path.display().to_string();
    let file = File::open(path).map_err(|source| CassetteError::Io {
        path: shown.clone(),
        source,
    })?;
    let mut map = HashMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| CassetteError::Io {
            path: shown.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let corrupt = |message: String| CassetteError::Corrupt {
            path: shown.clone(),
            line: i + 1,
            message,
        };
        let entry: CassetteEntry = serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
        if entry.response.is_none() == entry.error.is_none() {
            return Err(corrupt("entry needs exactly one of response, error".into()));
        }
        map.insert(entry.key.clone(), entry);
    }
    Ok(map)
}
