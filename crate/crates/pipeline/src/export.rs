//! LFR1 tensor files and their JSON index.
//!
//! Layout, all little-endian:
//!
//! | bytes | field |
//! |-------|-------|
//! | 4     | magic `LFR1` |
//! | 4     | rows (u32) |
//! | 4     | cols (u32) |
//! | 4     | sample count (u32) |
//! | 1     | label code (u8) |
//! | ...   | `count * rows * cols` f32, row-major per sample |

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::manifest::{ClassLabel, Split};

pub const MAGIC: [u8; 4] = *b"LFR1";
pub const HEADER_LEN: usize = 17;
pub const INDEX_FILE: &str = "index.json";

/// One exported sample: `fft_size/2` rows by `frames_per_sample` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTensor {
    pub data: Array2<f32>,
    pub label: ClassLabel,
    pub recording_id: String,
    pub split: Split,
    pub start_frame: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum ExportError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ExportError + '_ {
    move |source| ExportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn encode_lfr1(rows: usize, cols: usize, label: ClassLabel, samples: &[&Array2<f32>]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + samples.len() * rows * cols * 4);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    out.extend_from_slice(&(samples.len() as u32).to_le_bytes());
    out.push(label.code());
    for s in samples {
        assert_eq!(s.dim(), (rows, cols), "sample shape differs from the header");
        for v in s.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lfr1File {
    pub rows: usize,
    pub cols: usize,
    pub label_code: u8,
    pub samples: Vec<Array2<f32>>,
}

pub fn decode_lfr1(bytes: &[u8]) -> Result<Lfr1File, String> {
    if bytes.len() < HEADER_LEN {
        return Err(format!("{} bytes is shorter than the header", bytes.len()));
    }
    if bytes[..4] != MAGIC {
        return Err("bad magic".into());
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (rows, cols, count) = (word(4), word(8), word(12));
    let label_code = bytes[16];
    let cells = rows * cols;
    let expected = HEADER_LEN + count * cells * 4;
    if bytes.len() != expected {
        return Err(format!("expected {expected} bytes, found {}", bytes.len()));
    }
    let samples = (0..count)
        .map(|k| {
            let start = HEADER_LEN + k * cells * 4;
            let values = bytes[start..start + cells * 4]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            Array2::from_shape_vec((rows, cols), values).expect("length checked above")
        })
        .collect();
    Ok(Lfr1File {
        rows,
        cols,
        label_code,
        samples,
    })
}

pub fn read_lfr1(path: &Path) -> Result<Lfr1File, ExportError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_lfr1(&bytes).map_err(|message| ExportError::Format {
        path: path.to_path_buf(),
        message,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexFile {
    pub file: String,
    pub split: Split,
    pub label: ClassLabel,
    pub label_code: u8,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexSample {
    pub file: String,
    pub position: usize,
    pub split: Split,
    pub label: ClassLabel,
    pub recording_id: String,
    pub start_frame: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Index {
    pub format: String,
    pub rows: usize,
    pub cols: usize,
    pub files: Vec<IndexFile>,
    pub samples: Vec<IndexSample>,
}

pub fn file_name(split: Split, label: ClassLabel) -> String {
    format!("{split}_{label}.lfr1")
}

/// Writes one LFR1 file per `(split, label)` in `groups` (empty groups give
/// header-only files) plus `index.json`.
pub fn export_samples(
    dir: &Path,
    rows: usize,
    cols: usize,
    groups: &[(Split, ClassLabel)],
    samples: &[SampleTensor],
) -> Result<Index, ExportError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut index = Index {
        format: "LFR1".into(),
        rows,
        cols,
        files: Vec::new(),
        samples: Vec::new(),
    };
    for &(split, label) in groups {
        let name = file_name(split, label);
        let members: Vec<&SampleTensor> = samples
            .iter()
            .filter(|s| s.split == split && s.label == label)
            .collect();
        let data: Vec<&Array2<f32>> = members.iter().map(|s| &s.data).collect();
        let path = dir.join(&name);
        fs::write(&path, encode_lfr1(rows, cols, label, &data)).map_err(io_err(&path))?;
        for (position, s) in members.iter().enumerate() {
            index.samples.push(IndexSample {
                file: name.clone(),
                position,
                split,
                label,
                recording_id: s.recording_id.clone(),
                start_frame: s.start_frame,
            });
        }
        index.files.push(IndexFile {
            file: name,
            split,
            label,
            label_code: label.code(),
            count: members.len(),
        });
    }
    let path = dir.join(INDEX_FILE);
    let text = serde_json::to_string_pretty(&index).expect("index is plain data");
    fs::write(&path, text + "\n").map_err(io_err(&path))?;
    Ok(index)
}
