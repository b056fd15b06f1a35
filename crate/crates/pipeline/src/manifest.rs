//! Dataset manifest: which recordings exist, their class and split.
//!
//! ```toml
//! [[entry]]
//! audio_path = "audio/w_01.wav"
//! class = "W"
//! recording_id = "w01"
//! split = "train"
//! ```
//!
//! Relative paths resolve against the manifest's directory.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ClassLabel {
    W,
    X,
    Y,
    Z,
    Noise,
}

impl ClassLabel {
    pub const SHIPS: [ClassLabel; 4] = [Self::W, Self::X, Self::Y, Self::Z];

    /// Byte written into LFR1 headers.
    pub fn code(self) -> u8 {
        match self {
            Self::W => 0,
            Self::X => 1,
            Self::Y => 2,
            Self::Z => 3,
            Self::Noise => 4,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        [Self::W, Self::X, Self::Y, Self::Z, Self::Noise]
            .into_iter()
            .find(|c| c.code() == code)
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Train => "train",
            Self::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub audio_path: PathBuf,
    pub class: ClassLabel,
    pub recording_id: String,
    pub split: Split,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    #[serde(rename = "entry", default)]
    pub entries: Vec<ManifestEntry>,
}

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("duplicate audio path {}", .0.display())]
    DuplicatePath(PathBuf),
    #[error("duplicate recording id `{0}`")]
    DuplicateId(String),
    #[error("empty recording id for {}", .0.display())]
    EmptyId(PathBuf),
    #[error("class {class} has no {split} recordings")]
    MissingSplit { class: ClassLabel, split: Split },
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self, ManifestError> {
        let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut manifest: Self = toml::from_str(&text).map_err(|source| ManifestError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for e in &mut manifest.entries {
            if e.audio_path.is_relative() {
                e.audio_path = base.join(&e.audio_path);
            }
        }
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest fields are plain data")
    }

    pub fn validate(&self) -> Result<(), ManifestError> {
        let mut paths = HashSet::new();
        let mut ids = HashSet::new();
        for e in &self.entries {
            if e.recording_id.trim().is_empty() {
                return Err(ManifestError::EmptyId(e.audio_path.clone()));
            }
            if !paths.insert(&e.audio_path) {
                return Err(ManifestError::DuplicatePath(e.audio_path.clone()));
            }
            if !ids.insert(&e.recording_id) {
                return Err(ManifestError::DuplicateId(e.recording_id.clone()));
            }
        }
        Ok(())
    }

    /// Every ship class that appears must appear in both splits.
    pub fn check_classification(&self) -> Result<(), ManifestError> {
        let present: BTreeSet<(ClassLabel, Split)> = self
            .entries
            .iter()
            .filter(|e| e.class != ClassLabel::Noise)
            .map(|e| (e.class, e.split))
            .collect();
        for &(class, _) in &present {
            for split in [Split::Train, Split::Test] {
                if !present.contains(&(class, split)) {
                    return Err(ManifestError::MissingSplit { class, split });
                }
            }
        }
        Ok(())
    }

    pub fn noise(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(|e| e.class == ClassLabel::Noise)
    }

    pub fn ships(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(|e| e.class != ClassLabel::Noise)
    }
}
