//! On-disk formats: NDJSON corpus, binary segment file, split manifest and
//! feature CSV. Every format starts with a `format_version`.

use std::collections::BTreeMap;
use std::io::{BufRead, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureVector, FEATURE_NAMES};
use crate::preprocess::{FhrSegment, MaskCode, NormStats, SplitAssignment, SEGMENT_LEN};
use crate::synth::{Condition, CtgRecord};

pub const FORMAT_VERSION: u32 = 1;
pub const SEGMENTS_MAGIC: &[u8; 8] = b"CTGSEGS\0";

/// Writes `bytes` to a temporary file beside `path`, then renames it into
/// place so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct CorpusHeader {
    format_version: u32,
    kind: String,
}

const CORPUS_KIND: &str = "ctg_corpus";

/// Header line followed by one record per line; missing samples are `null`.
pub fn corpus_to_ndjson(records: &[CtgRecord]) -> Result<String> {
    let mut out = serde_json::to_string(&CorpusHeader {
        format_version: FORMAT_VERSION,
        kind: CORPUS_KIND.into(),
    })?;
    out.push('\n');
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

fn parse_err(what: &'static str, line: usize, detail: impl ToString) -> Error {
    Error::Parse {
        what,
        line,
        detail: detail.to_string(),
    }
}

pub fn read_corpus(reader: impl BufRead) -> Result<Vec<CtgRecord>> {
    let mut records = Vec::new();
    let mut header_seen = false;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        if !header_seen {
            let h: CorpusHeader = serde_json::from_str(&line).map_err(|e| parse_err("corpus", n, e))?;
            if h.kind != CORPUS_KIND || h.format_version != FORMAT_VERSION {
                return Err(parse_err(
                    "corpus",
                    n,
                    format!("unsupported header kind `{}` version {}", h.kind, h.format_version),
                ));
            }
            header_seen = true;
            continue;
        }
        let r: CtgRecord = serde_json::from_str(&line).map_err(|e| parse_err("corpus", n, e))?;
        r.validate().map_err(|e| parse_err("corpus", n, e))?;
        records.push(r);
    }
    if !header_seen {
        return Err(parse_err("corpus", 1, "missing format_version header"));
    }
    Ok(records)
}

pub fn load_corpus(path: &Path) -> Result<Vec<CtgRecord>> {
    read_corpus(std::io::BufReader::new(std::fs::File::open(path)?))
}

/// Binary segment file: magic, `u32` version, `u64` count, then per
/// segment `u32` id length, id bytes, `f64` start offset, `u8` label,
/// 1200 `f64` values and 1200 `u8` mask codes, all little-endian.
pub fn segments_to_bytes(segments: &[FhrSegment]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(20 + segments.len() * (SEGMENT_LEN * 9 + 32));
    out.extend_from_slice(SEGMENTS_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(segments.len() as u64).to_le_bytes());
    for s in segments {
        s.validate()?;
        let id = s.parent_id.as_bytes();
        out.extend_from_slice(&(id.len() as u32).to_le_bytes());
        out.extend_from_slice(id);
        out.extend_from_slice(&s.start_offset.to_le_bytes());
        out.push(s.label);
        for v in &s.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend(s.mask.iter().map(|&m| m as u8));
    }
    Ok(out)
}

fn take<'a>(r: &mut &'a [u8], n: usize, index: usize) -> Result<&'a [u8]> {
    if r.len() < n {
        return Err(Error::Format(format!("segment file truncated in segment {index}")));
    }
    let (head, tail) = r.split_at(n);
    *r = tail;
    Ok(head)
}

pub fn segments_from_bytes(bytes: &[u8]) -> Result<Vec<FhrSegment>> {
    let mut r = bytes;
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| Error::Format("truncated segment file".into()))?;
    if &magic != SEGMENTS_MAGIC {
        return Err(Error::Format("not a segment file".into()));
    }
    let version = u32::from_le_bytes(take(&mut r, 4, 0)?.try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported segment file version {version}")));
    }
    let count = u64::from_le_bytes(take(&mut r, 8, 0)?.try_into().expect("8 bytes")) as usize;
    let mut out = Vec::with_capacity(count.min(1 << 20));
    for i in 0..count {
        let id_len = u32::from_le_bytes(take(&mut r, 4, i)?.try_into().expect("4 bytes")) as usize;
        let parent_id = String::from_utf8(take(&mut r, id_len, i)?.to_vec())
            .map_err(|_| Error::Format(format!("segment {i}: parent id is not UTF-8")))?;
        let start_offset = f64::from_le_bytes(take(&mut r, 8, i)?.try_into().expect("8 bytes"));
        let label = take(&mut r, 1, i)?[0];
        let values = take(&mut r, 8 * SEGMENT_LEN, i)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let mask = take(&mut r, SEGMENT_LEN, i)?
            .iter()
            .map(|&m| MaskCode::from_u8(m))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::Format(format!("segment {i}: {e}")))?;
        let seg = FhrSegment {
            parent_id,
            start_offset,
            values,
            mask,
            label,
        };
        seg.validate().map_err(|e| Error::Format(format!("segment {i}: {e}")))?;
        out.push(seg);
    }
    if !r.is_empty() {
        return Err(Error::Format("trailing bytes after the last segment".into()));
    }
    Ok(out)
}

pub fn load_segments(path: &Path) -> Result<Vec<FhrSegment>> {
    segments_from_bytes(&std::fs::read(path)?)
}

/// Split membership, normalisation statistics and condition tags written
/// by the preprocessing step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub format_version: u32,
    pub seed: u64,
    pub ratios: [f64; 3],
    pub norm: NormStats,
    pub splits: SplitAssignment,
    pub conditions: BTreeMap<String, Vec<Condition>>,
}

impl SplitManifest {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: SplitManifest = serde_json::from_str(text).map_err(|e| parse_err("split manifest", e.line(), e))?;
        if m.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported manifest version {}", m.format_version)));
        }
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// One row per segment; unavailable features are written as `NA` with the
/// reason in the last column.
pub fn features_csv(rows: &[(String, f64, Result<FeatureVector>)]) -> String {
    let mut out = format!("# format_version={FORMAT_VERSION}\nctg_id,start_offset");
    for n in FEATURE_NAMES {
        out.push(',');
        out.push_str(n);
    }
    out.push_str(",status\n");
    for (id, offset, f) in rows {
        out.push_str(&format!("{id},{offset}"));
        match f {
            Ok(f) => {
                for v in f.values() {
                    out.push_str(&format!(",{v}"));
                }
                out.push_str(",ok\n");
            }
            Err(e) => {
                out.push_str(&",NA".repeat(FEATURE_NAMES.len()));
                out.push_str(&format!(",\"{}\"\n", e.to_string().replace('"', "'")));
            }
        }
    }
    out
}
