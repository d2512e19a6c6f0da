//! Feature cache: `features.bin` holds one binary record per utterance
//! (id, kind code, T, D, row-major little-endian f32 values) and
//! `index.txt` maps each id to its byte offset.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use spoofvae_core::corpus::TrialRecord;
use spoofvae_core::features::{FeatureKind, FeatureMatrix};

use crate::error::{Error, Result};
use crate::fsx;

pub const DATA_FILE: &str = "features.bin";
pub const INDEX_FILE: &str = "index.txt";
const INDEX_HEADER: &str = "# spoofvae feature cache v1";

pub fn encode_record(id: &str, m: &FeatureMatrix, out: &mut Vec<u8>) {
    let id_len = u16::try_from(id.len()).expect("utterance ids are short");
    out.extend_from_slice(&id_len.to_le_bytes());
    out.extend_from_slice(id.as_bytes());
    out.push(m.kind().code());
    out.extend_from_slice(&(m.frames() as u32).to_le_bytes());
    out.extend_from_slice(&(m.dims() as u32).to_le_bytes());
    for v in m.values() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
}

/// Decode the record at the start of `bytes`, returning it and its length.
pub fn decode_record(bytes: &[u8]) -> std::result::Result<(String, FeatureMatrix, usize), String> {
    let take = |at: usize, n: usize| {
        bytes
            .get(at..at + n)
            .ok_or_else(|| "truncated record".to_string())
    };
    let id_len = u16::from_le_bytes(take(0, 2)?.try_into().unwrap()) as usize;
    let id = std::str::from_utf8(take(2, id_len)?)
        .map_err(|_| "utterance id is not UTF-8".to_string())?;
    let mut at = 2 + id_len;
    let code = take(at, 1)?[0];
    let kind =
        FeatureKind::from_code(code).ok_or_else(|| format!("unknown feature kind code {code}"))?;
    let frames = u32::from_le_bytes(take(at + 1, 4)?.try_into().unwrap()) as usize;
    let dims = u32::from_le_bytes(take(at + 5, 4)?.try_into().unwrap()) as usize;
    at += 9;
    let n = frames.checked_mul(dims).ok_or("record size overflows")?;
    let raw = take(at, 4 * n)?;
    let values = raw
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
        .collect();
    let m = FeatureMatrix::new(kind, frames, dims, values).map_err(|e| e.to_string())?;
    Ok((id.to_string(), m, at + 4 * n))
}

/// Accumulates records in memory and writes the cache on
/// [`FeatureCacheWriter::finish`].
pub struct FeatureCacheWriter {
    dir: PathBuf,
    data: Vec<u8>,
    index: String,
    ids: HashSet<String>,
}

impl FeatureCacheWriter {
    pub fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            data: Vec::new(),
            index: format!("{INDEX_HEADER}\n"),
            ids: HashSet::new(),
        }
    }

    pub fn push(&mut self, id: &str, m: &FeatureMatrix) -> Result<()> {
        if id.is_empty() || id.contains(char::is_whitespace) {
            return Err(Error::format(
                &self.dir,
                format!("utterance id `{id}` is empty or has whitespace"),
            ));
        }
        if !self.ids.insert(id.to_string()) {
            return Err(Error::DuplicateId {
                path: self.dir.clone(),
                id: id.to_string(),
            });
        }
        let _ = writeln!(self.index, "{id} {}", self.data.len());
        encode_record(id, m, &mut self.data);
        Ok(())
    }

    pub fn finish(self) -> Result<()> {
        fsx::write_bytes(&self.dir.join(DATA_FILE), &self.data)?;
        // the index is written last; its presence marks a complete cache
        fsx::write_bytes(&self.dir.join(INDEX_FILE), self.index.as_bytes())
    }
}

/// A cache loaded into memory.
#[derive(Debug, Clone)]
pub struct FeatureCache {
    dir: PathBuf,
    data: Vec<u8>,
    offsets: HashMap<String, usize>,
    order: Vec<String>,
}

impl FeatureCache {
    pub fn exists(dir: &Path) -> bool {
        dir.join(INDEX_FILE).is_file() && dir.join(DATA_FILE).is_file()
    }

    pub fn open(dir: &Path) -> Result<Self> {
        let index_path = dir.join(INDEX_FILE);
        let text = fsx::read_text(&index_path)?;
        let data = fsx::read_bytes(&dir.join(DATA_FILE))?;
        let mut offsets = HashMap::new();
        let mut order = Vec::new();
        let mut lines = text.lines().enumerate();
        if lines.next().map(|(_, l)| l) != Some(INDEX_HEADER) {
            return Err(Error::parse(&index_path, 1, "not a feature cache index"));
        }
        for (i, line) in lines {
            let bad = || Error::parse(&index_path, i + 1, "expected `utt_id offset`");
            let (id, off) = line.split_once(' ').ok_or_else(bad)?;
            let off: usize = off.parse().map_err(|_| bad())?;
            if off >= data.len() {
                return Err(Error::parse(
                    &index_path,
                    i + 1,
                    "offset past the end of the data file",
                ));
            }
            if offsets.insert(id.to_string(), off).is_some() {
                return Err(Error::DuplicateId {
                    path: index_path.clone(),
                    id: id.to_string(),
                });
            }
            order.push(id.to_string());
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            data,
            offsets,
            order,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Ids in insertion order.
    pub fn ids(&self) -> &[String] {
        &self.order
    }

    pub fn contains(&self, id: &str) -> bool {
        self.offsets.contains_key(id)
    }

    pub fn get(&self, id: &str) -> Result<FeatureMatrix> {
        let off = *self.offsets.get(id).ok_or_else(|| Error::UnknownId {
            id: id.to_string(),
            what: format!("feature cache {}", self.dir.display()),
        })?;
        let (stored, m, _) = decode_record(&self.data[off..])
            .map_err(|msg| Error::format(self.dir.join(DATA_FILE), msg))?;
        if stored != id {
            return Err(Error::format(
                self.dir.join(DATA_FILE),
                format!("index points `{id}` at record `{stored}`"),
            ));
        }
        Ok(m)
    }

    /// Features for `records`, in order, all of `kind`.
    pub fn load(&self, records: &[TrialRecord], kind: FeatureKind) -> Result<Vec<FeatureMatrix>> {
        records
            .iter()
            .map(|r| {
                let m = self.get(&r.utt_id)?;
                if m.kind() != kind {
                    return Err(Error::format(
                        &self.dir,
                        format!(
                            "`{}` holds {} features, expected {kind}",
                            r.utt_id,
                            m.kind()
                        ),
                    ));
                }
                Ok(m)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(kind: FeatureKind, frames: usize, dims: usize, seed: f64) -> FeatureMatrix {
        let v = (0..frames * dims)
            .map(|i| (i as f64 * 0.1 + seed).sin())
            .collect();
        FeatureMatrix::new(kind, frames, dims, v).unwrap()
    }

    #[test]
    fn record_layout() {
        let m = matrix(FeatureKind::Cqcc, 2, 3, 0.0);
        let mut buf = Vec::new();
        encode_record("E_1", &m, &mut buf);
        assert_eq!(buf.len(), 2 + 3 + 1 + 4 + 4 + 6 * 4);
        assert_eq!(&buf[..5], &[3, 0, b'E', b'_', b'1']);
        assert_eq!(buf[5], FeatureKind::Cqcc.code());
        assert_eq!(&buf[6..10], &2u32.to_le_bytes());
        let (id, back, used) = decode_record(&buf).unwrap();
        assert_eq!((id.as_str(), used), ("E_1", buf.len()));
        for (a, b) in back.values().iter().zip(m.values()) {
            assert_eq!(*a, f64::from(*b as f32));
        }
        assert!(decode_record(&buf[..buf.len() - 1]).is_err());
    }

    #[test]
    fn write_then_open() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = FeatureCacheWriter::new(dir.path());
        let a = matrix(FeatureKind::Spectrogram, 4, 5, 1.0);
        let b = matrix(FeatureKind::CqccResidual, 3, 2, 2.0);
        w.push("a", &a).unwrap();
        w.push("b", &b).unwrap();
        assert!(w.push("a", &a).is_err());
        w.finish().unwrap();
        let c = FeatureCache::open(dir.path()).unwrap();
        assert_eq!(c.ids(), ["a", "b"]);
        assert_eq!(c.get("b").unwrap().kind(), FeatureKind::CqccResidual);
        assert_eq!(c.get("a").unwrap().dims(), 5);
        let err = c.get("zz").unwrap_err().to_string();
        assert!(err.contains("`zz`"), "{err}");
    }
}
