//! Corpus manifest: which files make up a corpus and how to read them.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{IngestError, MelodyRule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PieceEntry {
    /// Path to the MusicXML file, relative to the manifest's directory.
    pub path: PathBuf,
    pub piece_id: String,
    pub composer: String,
    /// Grouping used by the corpus heatmaps; defaults to the composer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    #[serde(default)]
    pub melody: MelodyRule,
}

impl PieceEntry {
    pub fn group(&self) -> &str {
        self.group.as_deref().unwrap_or(&self.composer)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    #[serde(rename = "piece")]
    pub pieces: Vec<PieceEntry>,
}

impl CorpusManifest {
    /// Reads a TOML manifest (`[[piece]]` tables) or, for `.json` files, the
    /// same structure as JSON.
    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text = std::fs::read_to_string(path).map_err(|source| IngestError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let manifest: Self = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| IngestError::Manifest(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| IngestError::Manifest(e.to_string()))?
        };
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let mut seen = HashSet::new();
        for piece in &self.pieces {
            if piece.piece_id.is_empty() {
                return Err(IngestError::Manifest(format!(
                    "entry for {} has an empty piece_id",
                    piece.path.display()
                )));
            }
            if !seen.insert(piece.piece_id.as_str()) {
                return Err(IngestError::Manifest(format!(
                    "duplicate piece_id `{}`",
                    piece.piece_id
                )));
            }
        }
        Ok(())
    }

    /// Resolves entry paths against the manifest location.
    pub fn resolve(&self, manifest_path: &Path, entry: &PieceEntry) -> PathBuf {
        let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
        base.join(&entry.path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_and_rules() {
        let text = r#"
[[piece]]
path = "a.musicxml"
piece_id = "a"
composer = "Bach"
melody = "part:P2"

[[piece]]
path = "b.musicxml"
piece_id = "b"
composer = "Bach"
group = "Suites"
"#;
        let m: CorpusManifest = toml::from_str(text).unwrap();
        m.validate().unwrap();
        assert_eq!(m.pieces[0].melody, MelodyRule::Part("P2".into()));
        assert_eq!(m.pieces[1].melody, MelodyRule::Highest);
        assert_eq!(m.pieces[1].group(), "Suites");
        assert_eq!(m.pieces[0].group(), "Bach");
        let again: CorpusManifest = toml::from_str(&m.to_toml()).unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let text = r#"
[[piece]]
path = "a.xml"
piece_id = "a"
composer = "x"
[[piece]]
path = "b.xml"
piece_id = "a"
composer = "x"
"#;
        let m: CorpusManifest = toml::from_str(text).unwrap();
        assert!(m.validate().is_err());
    }
}
