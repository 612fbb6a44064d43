use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{CompletionRequest, Provider, ProviderError, Reply};

/// One line of a fixture file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureRecord {
    pub key: String,
    pub response: String,
}

/// Answers exactly from recorded exchanges.
pub struct ReplayProvider {
    responses: HashMap<String, String>,
}

impl ReplayProvider {
    pub fn from_records(records: impl IntoIterator<Item = FixtureRecord>) -> Self {
        Self {
            responses: records.into_iter().map(|r| (r.key, r.response)).collect(),
        }
    }

    /// Loads a JSONL fixture file of `{key, response}` objects.
    pub fn load(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let path = path.as_ref();
        let reader = BufReader::new(fs::File::open(path)?);
        let mut records = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: FixtureRecord = serde_json::from_str(&line).map_err(|e| {
                std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("{}:{}: {e}", path.display(), i + 1),
                )
            })?;
            records.push(record);
        }
        Ok(Self::from_records(records))
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl Provider for ReplayProvider {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<Reply, ProviderError> {
        self.responses
            .get(request.key)
            .map(|r| Reply::from_text(r.clone()))
            .ok_or_else(|| ProviderError::MissingFixture(request.key.to_string()))
    }
}

/// Wraps a provider and records every exchange it answers.
pub struct RecordingProvider {
    inner: Arc<dyn Provider>,
    recorded: Mutex<BTreeMap<String, String>>,
}

impl RecordingProvider {
    pub fn new(inner: Arc<dyn Provider>) -> Self {
        Self {
            inner,
            recorded: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn records(&self) -> Vec<FixtureRecord> {
        self.recorded
            .lock()
            .expect("recording lock poisoned")
            .iter()
            .map(|(key, response)| FixtureRecord {
                key: key.clone(),
                response: response.clone(),
            })
            .collect()
    }

    /// Appends the recorded exchanges, sorted by key, to a JSONL writer.
    pub fn write_jsonl(&self, mut out: impl Write) -> std::io::Result<()> {
        for record in self.records() {
            serde_json::to_writer(&mut out, &record)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

impl Provider for RecordingProvider {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<Reply, ProviderError> {
        let reply = self.inner.complete(request)?;
        self.recorded
            .lock()
            .expect("recording lock poisoned")
            .insert(request.key.to_string(), reply.to_wire());
        Ok(reply)
    }

    fn is_live(&self) -> bool {
        self.inner.is_live()
    }
}
