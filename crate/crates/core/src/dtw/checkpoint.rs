//! Binary chunk files and the manifest of completed pair ranges.
//!
//! Chunk layout, little-endian:
//!
//! ```text
//! magic     8   b"MGDTWCK\0"
//! version   4   u32
//! corpus   32   sha-256
//! features 32   sha-256
//! start     8   u64, first pair index
//! end       8   u64, one past the last pair index
//! count     8   u64, end - start
//! records  16n  (i u32, j u32, distance f64)
//! footer   32   sha-256 of everything above
//! ```

use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::DtwError;
use crate::atomic::write_atomic;
use crate::hashing::{sha256, Hash};

pub const CHUNK_MAGIC: &[u8; 8] = b"MGDTWCK\0";
pub const CHUNK_VERSION: u32 = 1;
pub const CHUNK_HEADER_LEN: usize = 8 + 4 + 32 + 32 + 8 + 8 + 8;
pub const CHUNK_RECORD_LEN: usize = 16;
const FOOTER_LEN: usize = 32;
const MANIFEST: &str = "manifest.jsonl";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairRecord {
    pub i: u32,
    pub j: u32,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chunk {
    pub range: Range<u64>,
    pub records: Vec<PairRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub start: u64,
    pub end: u64,
    pub corpus_hash: String,
    pub feature_hash: String,
}

impl ManifestEntry {
    pub fn range(&self) -> Range<u64> {
        self.start..self.end
    }
}

/// Directory of chunk files bound to one corpus and feature configuration.
pub struct CheckpointStore {
    dir: PathBuf,
    corpus_hash: Hash,
    feature_hash: Hash,
    manifest_lock: Mutex<()>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DtwError + '_ {
    move |source| DtwError::Io { path: path.display().to_string(), source }
}

impl CheckpointStore {
    pub fn open(dir: impl Into<PathBuf>, corpus_hash: Hash, feature_hash: Hash) -> Result<Self, DtwError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        Ok(CheckpointStore { dir, corpus_hash, feature_hash, manifest_lock: Mutex::new(()) })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn chunk_file_name(range: &Range<u64>) -> String {
        format!("chunk-{:010}-{:010}.bin", range.start, range.end)
    }

    pub fn encode(&self, chunk: &Chunk) -> Vec<u8> {
        let n = chunk.records.len();
        let mut out = Vec::with_capacity(CHUNK_HEADER_LEN + n * CHUNK_RECORD_LEN + FOOTER_LEN);
        out.extend_from_slice(CHUNK_MAGIC);
        out.extend_from_slice(&CHUNK_VERSION.to_le_bytes());
        out.extend_from_slice(&self.corpus_hash);
        out.extend_from_slice(&self.feature_hash);
        out.extend_from_slice(&chunk.range.start.to_le_bytes());
        out.extend_from_slice(&chunk.range.end.to_le_bytes());
        out.extend_from_slice(&(n as u64).to_le_bytes());
        for r in &chunk.records {
            out.extend_from_slice(&r.i.to_le_bytes());
            out.extend_from_slice(&r.j.to_le_bytes());
            out.extend_from_slice(&r.distance.to_le_bytes());
        }
        let digest = sha256(&out);
        out.extend_from_slice(&digest);
        out
    }

    /// Parses and verifies a chunk. Hash mismatches against the store's
    /// corpus or feature configuration are reported as stale, anything
    /// structurally wrong as corrupt.
    pub fn decode(&self, name: &str, bytes: &[u8]) -> Result<Chunk, DtwError> {
        let corrupt = |reason: &str| DtwError::CorruptChunk { chunk: name.to_string(), reason: reason.to_string() };
        if bytes.len() < CHUNK_HEADER_LEN + FOOTER_LEN {
            return Err(corrupt("truncated header"));
        }
        let (body, footer) = bytes.split_at(bytes.len() - FOOTER_LEN);
        if sha256(body) != footer {
            return Err(corrupt("checksum mismatch"));
        }
        if &body[..8] != CHUNK_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(body[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(body[o..o + 8].try_into().unwrap());
        let version = u32_at(8);
        if version != CHUNK_VERSION {
            return Err(corrupt(&format!("unsupported version {version}")));
        }
        self.check_hash(name, "corpus", &self.corpus_hash, &body[12..44])?;
        self.check_hash(name, "feature-config", &self.feature_hash, &body[44..76])?;
        let (start, end, count) = (u64_at(76), u64_at(84), u64_at(92));
        if end < start || end - start != count {
            return Err(corrupt("pair range does not match record count"));
        }
        let records_len = body.len() - CHUNK_HEADER_LEN;
        if records_len as u64 != count * CHUNK_RECORD_LEN as u64 {
            return Err(corrupt("record section length mismatch"));
        }
        let records = body[CHUNK_HEADER_LEN..]
            .chunks_exact(CHUNK_RECORD_LEN)
            .map(|r| PairRecord {
                i: u32::from_le_bytes(r[0..4].try_into().unwrap()),
                j: u32::from_le_bytes(r[4..8].try_into().unwrap()),
                distance: f64::from_le_bytes(r[8..16].try_into().unwrap()),
            })
            .collect();
        Ok(Chunk { range: start..end, records })
    }

    fn check_hash(&self, name: &str, what: &'static str, expected: &Hash, found: &[u8]) -> Result<(), DtwError> {
        if expected.as_slice() != found {
            return Err(DtwError::StaleCache {
                chunk: name.to_string(),
                what,
                expected: hex::encode(expected),
                found: hex::encode(found),
            });
        }
        Ok(())
    }

    /// Persists a chunk, then records it in the manifest. Both writes are
    /// atomic; a crash between them leaves an orphan file that is simply
    /// recomputed.
    pub fn write_chunk(&self, chunk: &Chunk) -> Result<PathBuf, DtwError> {
        let name = Self::chunk_file_name(&chunk.range);
        let path = self.dir.join(&name);
        write_atomic(&path, &self.encode(chunk)).map_err(io_err(&path))?;

        let _guard = self.manifest_lock.lock().expect("manifest lock poisoned");
        let mut entries = self.read_manifest_unchecked()?;
        entries.push(ManifestEntry {
            file: name,
            start: chunk.range.start,
            end: chunk.range.end,
            corpus_hash: hex::encode(self.corpus_hash),
            feature_hash: hex::encode(self.feature_hash),
        });
        check_overlaps(&entries)?;
        self.write_manifest(&entries)?;
        Ok(path)
    }

    pub fn read_chunk(&self, entry: &ManifestEntry) -> Result<Chunk, DtwError> {
        let path = self.dir.join(&entry.file);
        let bytes = fs::read(&path).map_err(|e| DtwError::CorruptChunk {
            chunk: entry.file.clone(),
            reason: format!("unreadable: {e}"),
        })?;
        let chunk = self.decode(&entry.file, &bytes)?;
        if chunk.range != entry.range() {
            return Err(DtwError::CorruptChunk {
                chunk: entry.file.clone(),
                reason: format!("header range {:?} disagrees with manifest {:?}", chunk.range, entry.range()),
            });
        }
        Ok(chunk)
    }

    /// Manifest entries, validated for hash agreement and disjoint ranges.
    pub fn manifest(&self) -> Result<Vec<ManifestEntry>, DtwError> {
        let entries = self.read_manifest_unchecked()?;
        for e in &entries {
            let corpus = hex::decode(&e.corpus_hash).unwrap_or_default();
            let features = hex::decode(&e.feature_hash).unwrap_or_default();
            self.check_hash(&e.file, "corpus", &self.corpus_hash, &corpus)?;
            self.check_hash(&e.file, "feature-config", &self.feature_hash, &features)?;
        }
        check_overlaps(&entries)?;
        Ok(entries)
    }

    /// Drops the entry for `file` so its range can be recomputed.
    pub fn forget(&self, file: &str) -> Result<(), DtwError> {
        let _guard = self.manifest_lock.lock().expect("manifest lock poisoned");
        let entries: Vec<_> = self.read_manifest_unchecked()?.into_iter().filter(|e| e.file != file).collect();
        self.write_manifest(&entries)
    }

    fn manifest_path(&self) -> PathBuf {
        self.dir.join(MANIFEST)
    }

    fn read_manifest_unchecked(&self) -> Result<Vec<ManifestEntry>, DtwError> {
        let path = self.manifest_path();
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(io_err(&path)(e)),
        };
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(n, line)| {
                serde_json::from_str(line).map_err(|e| DtwError::CorruptChunk {
                    chunk: MANIFEST.to_string(),
                    reason: format!("line {}: {e}", n + 1),
                })
            })
            .collect()
    }

    fn write_manifest(&self, entries: &[ManifestEntry]) -> Result<(), DtwError> {
        let mut text = String::new();
        for e in entries {
            text.push_str(&serde_json::to_string(e).expect("manifest entry serializes"));
            text.push('\n');
        }
        let path = self.manifest_path();
        write_atomic(&path, text.as_bytes()).map_err(io_err(&path))
    }
}

fn check_overlaps(entries: &[ManifestEntry]) -> Result<(), DtwError> {
    let mut ranges: Vec<Range<u64>> = entries.iter().map(ManifestEntry::range).collect();
    ranges.sort_by_key(|r| (r.start, r.end));
    for w in ranges.windows(2) {
        if w[1].start < w[0].end {
            return Err(DtwError::OverlappingRanges { first: w[0].clone(), second: w[1].clone() });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(dir: &Path) -> CheckpointStore {
        CheckpointStore::open(dir, [1; 32], [2; 32]).unwrap()
    }

    fn chunk(range: Range<u64>) -> Chunk {
        let records = range
            .clone()
            .map(|k| PairRecord { i: k as u32, j: k as u32 + 1, distance: k as f64 / 3.0 })
            .collect();
        Chunk { range, records }
    }

    #[test]
    fn write_read_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = store(dir.path());
        let c = chunk(0..5);
        s.write_chunk(&c).unwrap();
        let entries = s.manifest().unwrap();
        assert_eq!(entries.len(), 1);
        assert_eq!(s.read_chunk(&entries[0]).unwrap(), c);
        let bytes = fs::read(dir.path().join(&entries[0].file)).unwrap();
        assert_eq!(bytes.len(), CHUNK_HEADER_LEN + 5 * CHUNK_RECORD_LEN + 32);
    }

    #[test]
    fn overlapping_ranges_are_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let s = store(dir.path());
        s.write_chunk(&chunk(0..10)).unwrap();
        assert!(matches!(s.write_chunk(&chunk(5..12)), Err(DtwError::OverlappingRanges { .. })));

        // a hand-edited manifest is rejected the same way
        let line = |a: u64, b: u64| {
            serde_json::to_string(&ManifestEntry {
                file: format!("f{a}"),
                start: a,
                end: b,
                corpus_hash: hex::encode([1u8; 32]),
                feature_hash: hex::encode([2u8; 32]),
            })
            .unwrap()
        };
        fs::write(dir.path().join(MANIFEST), format!("{}\n{}\n", line(0, 4), line(3, 8))).unwrap();
        assert!(matches!(s.manifest(), Err(DtwError::OverlappingRanges { .. })));
    }

    #[test]
    fn seven_chunks_cover_hundred_pairs() {
        let dir = tempfile::tempdir().unwrap();
        let s = store(dir.path());
        let size = 100u64.div_ceil(7);
        let mut start = 0;
        while start < 100 {
            let end = (start + size).min(100);
            s.write_chunk(&chunk(start..end)).unwrap();
            start = end;
        }
        let entries = s.manifest().unwrap();
        assert_eq!(entries.len(), 7);
        let mut covered = vec![0u32; 100];
        for e in &entries {
            for k in e.range() {
                covered[k as usize] += 1;
            }
        }
        assert!(covered.iter().all(|&c| c == 1));
    }

    #[test]
    fn foreign_hash_is_stale() {
        let dir = tempfile::tempdir().unwrap();
        store(dir.path()).write_chunk(&chunk(0..3)).unwrap();
        let other = CheckpointStore::open(dir.path(), [1; 32], [9; 32]).unwrap();
        match other.manifest() {
            Err(DtwError::StaleCache { what, .. }) => assert_eq!(what, "feature-config"),
            r => panic!("expected stale cache, got {r:?}"),
        }
    }

    #[test]
    fn flipped_byte_names_the_chunk() {
        let dir = tempfile::tempdir().unwrap();
        let s = store(dir.path());
        let path = s.write_chunk(&chunk(0..4)).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[CHUNK_HEADER_LEN + 3] ^= 0xff;
        fs::write(&path, bytes).unwrap();
        let entry = &s.manifest().unwrap()[0];
        match s.read_chunk(entry) {
            Err(DtwError::CorruptChunk { chunk, .. }) => assert_eq!(chunk, "chunk-0000000000-0000000004.bin"),
            r => panic!("expected corruption, got {r:?}"),
        }
    }
}
