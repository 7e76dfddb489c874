//! Binary `.fseb` embedding files.
//!
//! Layout, all integers little-endian:
//!
//! | offset        | size             | content                              |
//! |---------------|------------------|--------------------------------------|
//! | 0             | 4                | magic `FSEB`                         |
//! | 4             | 4                | `u32` version (= 1)                  |
//! | 8             | 4                | `u32` J, metadata length in bytes    |
//! | 12            | J                | UTF-8 JSON metadata object           |
//! | 12 + J        | 4 * count        | `u32` labels                         |
//! | 12 + J + 4c   | 4 * count * dim  | `f32` vectors, row-major             |
//!
//! The metadata object carries exactly the keys `dataset`, `backbone`, `dim`,
//! `count`, `class_names`, `image_size` and `preprocess`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EmbeddingDataset, ExtractionInfo};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"FSEB";
pub const FORMAT_VERSION: u32 = 1;

const PREAMBLE_LEN: usize = 12;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    dataset: String,
    backbone: String,
    dim: u64,
    count: u64,
    class_names: Vec<String>,
    image_size: u32,
    preprocess: String,
}

/// Serializes a dataset into the canonical byte layout.
pub fn encode(ds: &EmbeddingDataset) -> Result<Vec<u8>> {
    ds.validate()?;
    let header = Header {
        dataset: ds.dataset_name.clone(),
        backbone: ds.backbone_name.clone(),
        dim: ds.dim as u64,
        count: ds.count() as u64,
        class_names: ds.class_names.clone(),
        image_size: ds.extraction.image_size,
        preprocess: ds.extraction.preprocess.clone(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Format(e.to_string()))?;
    let json_len = u32::try_from(json.len())
        .map_err(|_| Error::Validation("metadata block exceeds 4 GiB".into()))?;

    let mut out =
        Vec::with_capacity(PREAMBLE_LEN + json.len() + 4 * ds.labels.len() + 4 * ds.vectors.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&json_len.to_le_bytes());
    out.extend_from_slice(&json);
    for &l in &ds.labels {
        out.extend_from_slice(&l.to_le_bytes());
    }
    for &v in &ds.vectors {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

fn need(bytes: &[u8], end: usize, what: &'static str) -> Result<()> {
    if bytes.len() < end {
        return Err(Error::Corrupt {
            what,
            expected: end as u64,
            actual: bytes.len() as u64,
        });
    }
    Ok(())
}

fn u32_at(bytes: &[u8], offset: usize) -> u32 {
    u32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap())
}

/// Parses and validates a complete `.fseb` image.
pub fn decode(bytes: &[u8]) -> Result<EmbeddingDataset> {
    let magic_len = bytes.len().min(MAGIC.len());
    if bytes[..magic_len] != MAGIC[..magic_len] {
        return Err(Error::Format("bad magic, not an .fseb file".into()));
    }
    need(bytes, PREAMBLE_LEN, "preamble")?;
    let version = u32_at(bytes, 4);
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let json_len = u32_at(bytes, 8) as usize;
    let json_end = PREAMBLE_LEN + json_len;
    need(bytes, json_end, "metadata block")?;
    let header: Header = serde_json::from_slice(&bytes[PREAMBLE_LEN..json_end])
        .map_err(|e| Error::Format(format!("metadata: {e}")))?;

    let count = usize::try_from(header.count)
        .map_err(|_| Error::Format("count does not fit in memory".into()))?;
    let dim = usize::try_from(header.dim)
        .map_err(|_| Error::Format("dim does not fit in memory".into()))?;
    let payload = count
        .checked_mul(dim)
        .and_then(|cells| cells.checked_add(count))
        .and_then(|words| words.checked_mul(4))
        .and_then(|payload| payload.checked_add(json_end))
        .ok_or_else(|| Error::Format("declared count x dim overflows".into()))?;
    need(bytes, payload, "label/vector payload")?;
    if bytes.len() != payload {
        return Err(Error::Corrupt {
            what: "trailing bytes after payload",
            expected: payload as u64,
            actual: bytes.len() as u64,
        });
    }

    let labels_end = json_end + 4 * count;
    let labels = bytes[json_end..labels_end]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let vectors = bytes[labels_end..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();

    EmbeddingDataset::new(
        header.dataset,
        header.backbone,
        dim,
        header.class_names,
        labels,
        vectors,
        ExtractionInfo {
            image_size: header.image_size,
            preprocess: header.preprocess,
        },
    )
}

/// Writes `ds` to `sink` and returns the number of bytes written.
///
/// Nothing is written when the dataset fails validation.
pub fn write_dataset<W: Write>(ds: &EmbeddingDataset, mut sink: W) -> Result<u64> {
    let bytes = encode(ds)?;
    sink.write_all(&bytes)?;
    sink.flush()?;
    Ok(bytes.len() as u64)
}

pub fn read_dataset<R: Read>(mut source: R) -> Result<EmbeddingDataset> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    decode(&bytes)
}

/// Writes `ds` to `path` through a temporary file in the same directory.
pub fn save(ds: &EmbeddingDataset, path: &Path) -> Result<u64> {
    let bytes = encode(ds)?;
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(&bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(bytes.len() as u64)
}

pub fn load(path: &Path) -> Result<EmbeddingDataset> {
    read_dataset(BufReader::new(File::open(path)?))
}

/// Debug export, one row per record: `id,label,class_name,v0..v{dim-1}`.
///
/// The CSV is never read back; `.fseb` is the only interchange format.
pub fn export_csv<W: Write>(ds: &EmbeddingDataset, sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(sink));
    let mut header = vec![
        "id".to_string(),
        "label".to_string(),
        "class_name".to_string(),
    ];
    header.extend((0..ds.dim).map(|d| format!("v{d}")));
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..ds.count() {
        let label = ds.label(i);
        let mut record = vec![
            i.to_string(),
            label.to_string(),
            ds.class_names[label].clone(),
        ];
        record.extend(ds.row(i).iter().map(|v| v.to_string()));
        w.write_record(&record).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("csv: {other:?}")),
    }
}
