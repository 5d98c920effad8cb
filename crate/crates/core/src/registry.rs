//! Persistent topic registry: topics, their scoring configs and threshold
//! provenance, under a version counter that grows by one per mutation.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil::{self, WriteLock};
use crate::matcher::{Calibration, ScoringConfig, Topic};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicEntry {
    pub topic: Topic,
    pub config: ScoringConfig,
    /// Embedding source the exemplar vectors came from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_tag: Option<String>,
    /// Registry version at which this entry last changed.
    pub version: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TopicRegistry {
    pub version: u64,
    pub topics: BTreeMap<String, TopicEntry>,
}

impl TopicRegistry {
    pub fn get(&self, name: &str) -> Result<&TopicEntry> {
        self.topics
            .get(name)
            .ok_or_else(|| Error::UnknownTopic(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.topics.keys().map(String::as_str)
    }

    fn bump(&mut self) -> u64 {
        self.version += 1;
        self.version
    }

    fn check_version(entry: &TopicEntry, expected: Option<u64>) -> Result<()> {
        match expected {
            Some(expected) if expected != entry.version => Err(Error::VersionConflict {
                expected,
                current: entry.version,
            }),
            _ => Ok(()),
        }
    }

    /// Registers a topic. An existing name is replaced only with `overwrite`.
    pub fn define(
        &mut self,
        topic: Topic,
        config: ScoringConfig,
        source_tag: Option<String>,
        overwrite: bool,
    ) -> Result<u64> {
        let name = topic.name().to_string();
        if self.topics.contains_key(&name) && !overwrite {
            return Err(Error::TopicExists(name));
        }
        let version = self.bump();
        self.topics.insert(
            name,
            TopicEntry {
                topic,
                config,
                source_tag,
                version,
            },
        );
        Ok(version)
    }

    /// Swaps a topic's exemplar set, keeping its config.
    pub fn replace_topic(&mut self, topic: Topic, expected_version: Option<u64>) -> Result<u64> {
        let entry = self.get(topic.name())?;
        Self::check_version(entry, expected_version)?;
        let version = self.bump();
        let entry = self.topics.get_mut(topic.name()).expect("checked above");
        entry.topic = topic;
        entry.version = version;
        Ok(version)
    }

    pub fn set_config(
        &mut self,
        name: &str,
        config: ScoringConfig,
        expected_version: Option<u64>,
    ) -> Result<u64> {
        Self::check_version(self.get(name)?, expected_version)?;
        let version = self.bump();
        let entry = self.topics.get_mut(name).expect("checked above");
        entry.config = config;
        entry.version = version;
        Ok(version)
    }

    /// Stores a calibrated threshold on the topic's config.
    pub fn set_calibration(&mut self, name: &str, calibration: Calibration) -> Result<u64> {
        let config = self.get(name)?.config.clone().with_calibration(calibration);
        self.set_config(name, config, None)
    }

    pub fn remove(&mut self, name: &str) -> Result<u64> {
        if self.topics.remove(name).is_none() {
            return Err(Error::UnknownTopic(name.to_string()));
        }
        Ok(self.bump())
    }
}

/// The registry as a single JSON file, replaced atomically on every write.
#[derive(Debug, Clone)]
pub struct RegistryStore {
    path: PathBuf,
}

impl RegistryStore {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        RegistryStore { path: path.into() }
    }

    /// `<data_dir>/topics.json`.
    pub fn in_dir(data_dir: &Path) -> Self {
        Self::new(data_dir.join("topics.json"))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// A missing file is an empty registry at version 0.
    pub fn load(&self) -> Result<TopicRegistry> {
        match fs::read(&self.path) {
            Ok(bytes) => Ok(serde_json::from_slice(&bytes)?),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(TopicRegistry::default()),
            Err(e) => Err(Error::io(&self.path, e)),
        }
    }

    pub fn save(&self, registry: &TopicRegistry) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(registry)?;
        bytes.push(b'\n');
        fsutil::write_atomic(&self.path, &bytes)
    }

    /// Load, mutate and save under an exclusive lock. Nothing is written if
    /// `f` fails.
    pub fn update<T>(&self, f: impl FnOnce(&mut TopicRegistry) -> Result<T>) -> Result<T> {
        let _lock = WriteLock::acquire(&self.path)?;
        let mut registry = self.load()?;
        let out = f(&mut registry)?;
        self.save(&registry)?;
        Ok(out)
    }
}
