//! Dataset directory layout.
//!
//! `features.bin`, `prototypes.bin` and `labels.bin` share one header:
//!
//! ```text
//! "DSPDATA1"  u32 rows  u32 cols  payload (row-major, little-endian)
//! ```
//!
//! The payload is `f32` except in `labels.bin`, which holds `u32` class ids
//! with `cols = 1`. `split.txt` is line based:
//!
//! ```text
//! class<TAB><id><TAB>seen|unseen     one line per class
//! <sample_index><TAB><tag>           one line per sample
//! ```
//!
//! Blank lines and lines starting with `#` are ignored.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{SplitTag, ZslDataset};
use crate::binio::ByteReader;
use crate::error::{Error, Result};
use crate::evolvement::prototypes_csv;
use crate::tensor::Tensor;

pub const DATA_MAGIC: &[u8; 8] = b"DSPDATA1";
pub const FEATURES_FILE: &str = "features.bin";
pub const LABELS_FILE: &str = "labels.bin";
pub const PROTOTYPES_FILE: &str = "prototypes.bin";
pub const SPLIT_FILE: &str = "split.txt";
pub const TRUE_PROTOTYPES_FILE: &str = "true_prototypes.bin";

fn header(rows: usize, cols: usize) -> Result<Vec<u8>> {
    let to_u32 = |v: usize| {
        u32::try_from(v).map_err(|_| Error::InvalidArgument(format!("dimension {v} exceeds u32")))
    };
    let mut out = Vec::from(&DATA_MAGIC[..]);
    out.extend_from_slice(&to_u32(rows)?.to_le_bytes());
    out.extend_from_slice(&to_u32(cols)?.to_le_bytes());
    Ok(out)
}

pub fn encode_matrix(t: &Tensor) -> Result<Vec<u8>> {
    let mut out = header(t.rows(), t.cols())?;
    out.reserve(t.len() * 4);
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

fn encode_labels(labels: &[u32]) -> Result<Vec<u8>> {
    let mut out = header(labels.len(), 1)?;
    for v in labels {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

fn read_header(r: &mut ByteReader<'_>) -> Result<(usize, usize)> {
    r.magic(DATA_MAGIC, "DSPDATA1")?;
    Ok((r.u32()? as usize, r.u32()? as usize))
}

fn expect_end(r: &ByteReader<'_>) -> Result<()> {
    if r.at_end() {
        Ok(())
    } else {
        Err(r.fail("trailing bytes after payload"))
    }
}

pub fn decode_matrix(bytes: &[u8], file: &str) -> Result<Tensor> {
    let mut r = ByteReader::new(bytes, file);
    let (rows, cols) = read_header(&mut r)?;
    let values = r.f32s(rows as u64 * cols as u64)?;
    expect_end(&r)?;
    Tensor::new(rows, cols, values)
}

fn decode_labels(bytes: &[u8], file: &str) -> Result<Vec<u32>> {
    let mut r = ByteReader::new(bytes, file);
    let (rows, cols) = read_header(&mut r)?;
    if cols != 1 {
        return Err(r.fail(format!("label file must have 1 column, header says {cols}")));
    }
    let labels = r.u32s(rows as u64)?;
    expect_end(&r)?;
    Ok(labels)
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_matrix(path: &Path, t: &Tensor) -> Result<()> {
    write(path, encode_matrix(t)?)
}

pub fn read_matrix(path: &Path) -> Result<Tensor> {
    decode_matrix(&read(path)?, &path.display().to_string())
}

fn encode_split(ds: &ZslDataset) -> String {
    let mut classes: Vec<(u32, &str)> = ds
        .seen_ids
        .iter()
        .map(|&c| (c, "seen"))
        .chain(ds.unseen_ids.iter().map(|&c| (c, "unseen")))
        .collect();
    classes.sort_unstable();
    let mut out = String::new();
    for (c, kind) in classes {
        writeln!(out, "class\t{c}\t{kind}").unwrap();
    }
    for (i, tag) in ds.tags.iter().enumerate() {
        writeln!(out, "{i}\t{tag}").unwrap();
    }
    out
}

struct SplitFile {
    seen: Vec<u32>,
    unseen: Vec<u32>,
    tags: Vec<SplitTag>,
}

fn parse_split(text: &str, file: &str, samples: usize) -> Result<SplitFile> {
    let fail = |line: usize, msg: String| Error::Format {
        file: file.to_string(),
        msg: format!("line {}: {msg}", line + 1),
    };
    let mut seen = Vec::new();
    let mut unseen = Vec::new();
    let mut tags: Vec<Option<SplitTag>> = vec![None; samples];
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        match fields.as_slice() {
            ["class", id, kind] => {
                let id: u32 = id
                    .parse()
                    .map_err(|_| fail(ln, format!("bad class id `{id}`")))?;
                match *kind {
                    "seen" => seen.push(id),
                    "unseen" => unseen.push(id),
                    other => {
                        return Err(fail(
                            ln,
                            format!("class kind must be seen or unseen, got `{other}`"),
                        ))
                    }
                }
            }
            [idx, tag] => {
                let i: usize = idx
                    .parse()
                    .map_err(|_| fail(ln, format!("bad sample index `{idx}`")))?;
                let tag: SplitTag = tag.parse().map_err(|e| fail(ln, e))?;
                let slot = tags.get_mut(i).ok_or_else(|| {
                    fail(ln, format!("sample index {i} beyond {samples} samples"))
                })?;
                if slot.replace(tag).is_some() {
                    return Err(fail(ln, format!("sample index {i} tagged twice")));
                }
            }
            _ => {
                return Err(fail(
                    ln,
                    "expected `<index>\\t<tag>` or `class\\t<id>\\t<kind>`".into(),
                ))
            }
        }
    }
    let tags = tags
        .into_iter()
        .enumerate()
        .map(|(i, t)| {
            t.ok_or_else(|| Error::Format {
                file: file.to_string(),
                msg: format!("sample {i} has no split tag"),
            })
        })
        .collect::<Result<_>>()?;
    Ok(SplitFile { seen, unseen, tags })
}

pub fn save_dataset(ds: &ZslDataset, dir: &Path) -> Result<()> {
    ds.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(&dir.join(FEATURES_FILE), encode_matrix(&ds.features)?)?;
    write(&dir.join(LABELS_FILE), encode_labels(&ds.labels)?)?;
    write(&dir.join(PROTOTYPES_FILE), encode_matrix(&ds.prototypes)?)?;
    write(&dir.join(SPLIT_FILE), encode_split(ds))
}

/// Reads and validates a dataset directory.
pub fn load_dataset(dir: &Path) -> Result<ZslDataset> {
    let features = read_matrix(&dir.join(FEATURES_FILE))?;
    let labels_path = dir.join(LABELS_FILE);
    let labels = decode_labels(&read(&labels_path)?, &labels_path.display().to_string())?;
    let prototypes = read_matrix(&dir.join(PROTOTYPES_FILE))?;
    let split_path = dir.join(SPLIT_FILE);
    let text = String::from_utf8(read(&split_path)?).map_err(|_| Error::Format {
        file: split_path.display().to_string(),
        msg: "not valid UTF-8".into(),
    })?;
    if labels.len() != features.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} has {} rows but {} has {}",
            FEATURES_FILE,
            features.rows(),
            LABELS_FILE,
            labels.len()
        )));
    }
    let split = parse_split(&text, &split_path.display().to_string(), labels.len())?;
    ZslDataset::new(
        features,
        labels,
        split.tags,
        prototypes,
        split.seen,
        split.unseen,
    )
}

pub fn save_true_prototypes(z: &Tensor, dir: &Path) -> Result<()> {
    write_matrix(&dir.join(TRUE_PROTOTYPES_FILE), z)
}

/// Reads `true_prototypes.bin` when the directory has one.
pub fn load_true_prototypes(dir: &Path) -> Result<Option<Tensor>> {
    let path = dir.join(TRUE_PROTOTYPES_FILE);
    if !path.exists() {
        return Ok(None);
    }
    read_matrix(&path).map(Some)
}

/// Human-readable mirrors: `features.csv` and `prototypes.csv`.
pub fn write_csv_mirrors(ds: &ZslDataset, dir: &Path) -> Result<()> {
    let mut out = String::from("index,label,tag");
    for j in 0..ds.feature_dim() {
        write!(out, ",f_{j}").unwrap();
    }
    out.push('\n');
    for i in 0..ds.len() {
        write!(out, "{i},{},{}", ds.labels[i], ds.tags[i]).unwrap();
        for v in ds.features.row(i) {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    write(&dir.join("features.csv"), out)?;
    let ids: Vec<u32> = (0..ds.num_classes() as u32).collect();
    write(
        &dir.join("prototypes.csv"),
        prototypes_csv(&ids, &ds.prototypes),
    )
}
