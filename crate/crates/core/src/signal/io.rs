//! Plain-text recording files and dataset manifests.
//!
//! A recording file is two header lines followed by one decimal sample per
//! line:
//!
//! ```text
//! subject_id=synth-NoPain-0000
//! label=NoPain
//! 0.0123
//! -0.5
//! ```
//!
//! Samples are written with Rust's shortest round-trip formatting, so reading
//! a written file gives back bit-identical values.
//!
//! A manifest lists one recording per line as `<relative path>\t<split>`,
//! with paths resolved against the manifest's directory. Blank lines and
//! lines starting with `#` are ignored.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::{PainLabel, RespirationRecord, SignalError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = SignalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(SignalError::UnknownSplit(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub split: Split,
}

pub fn format_record(rec: &RespirationRecord) -> String {
    let mut out = format!("subject_id={}\nlabel={}\n", rec.subject_id, rec.label);
    for v in rec.samples() {
        out.push_str(&v.to_string());
        out.push('\n');
    }
    out
}

pub fn parse_record(text: &str, path: &Path, sample_rate_hz: f64) -> Result<RespirationRecord, SignalError> {
    let err = |line: usize, message: String| SignalError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines();
    let subject = lines
        .next()
        .and_then(|l| l.strip_prefix("subject_id="))
        .ok_or_else(|| err(1, "expected `subject_id=<id>`".into()))?;
    let label = lines
        .next()
        .and_then(|l| l.strip_prefix("label="))
        .ok_or_else(|| err(2, "expected `label=<NoPain|LowPain|HighPain>`".into()))?;
    let label: PainLabel = label.parse().map_err(|e: SignalError| err(2, e.to_string()))?;
    let mut samples = Vec::new();
    for (i, line) in lines.enumerate() {
        let v: f64 = line
            .trim()
            .parse()
            .map_err(|_| err(i + 3, format!("invalid sample {line:?}")))?;
        samples.push(v);
    }
    RespirationRecord::new(samples, sample_rate_hz, label, subject).map_err(|e| err(0, e.to_string()))
}

pub fn write_record(path: &Path, rec: &RespirationRecord) -> Result<(), SignalError> {
    fs::write(path, format_record(rec)).map_err(|source| SignalError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_record(path: &Path, sample_rate_hz: f64) -> Result<RespirationRecord, SignalError> {
    let text = fs::read_to_string(path).map_err(|source| SignalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_record(&text, path, sample_rate_hz)
}

pub fn format_manifest(entries: &[ManifestEntry]) -> String {
    let mut out = String::from("# path\tsplit\n");
    for e in entries {
        out.push_str(&format!("{}\t{}\n", e.path.display(), e.split));
    }
    out
}

pub fn parse_manifest(text: &str, path: &Path) -> Result<Vec<ManifestEntry>, SignalError> {
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (file, split) = trimmed.split_once('\t').ok_or_else(|| SignalError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: "expected `<path>\\t<split>`".into(),
        })?;
        let split = split.trim().parse().map_err(|e: SignalError| SignalError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        entries.push(ManifestEntry {
            path: PathBuf::from(file),
            split,
        });
    }
    Ok(entries)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>, SignalError> {
    let text = fs::read_to_string(path).map_err(|source| SignalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_manifest(&text, path)
}

/// A manifest's recordings, loaded and grouped by split.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub train: Vec<RespirationRecord>,
    pub val: Vec<RespirationRecord>,
    pub test: Vec<RespirationRecord>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> &[RespirationRecord] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn push(&mut self, split: Split, rec: RespirationRecord) {
        match split {
            Split::Train => self.train.push(rec),
            Split::Val => self.val.push(rec),
            Split::Test => self.test.push(rec),
        }
    }
}

pub fn load_dataset(manifest: &Path, sample_rate_hz: f64) -> Result<Dataset, SignalError> {
    let base = manifest.parent().unwrap_or_else(|| Path::new("."));
    let mut ds = Dataset::default();
    for entry in read_manifest(manifest)? {
        let rec = read_record(&base.join(&entry.path), sample_rate_hz)?;
        ds.push(entry.split, rec);
    }
    Ok(ds)
}

/// Writes one file per record plus `manifest.tsv` into `dir`.
pub fn write_dataset(
    dir: &Path,
    records: &[(RespirationRecord, Split)],
) -> Result<PathBuf, SignalError> {
    fs::create_dir_all(dir).map_err(|source| SignalError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut entries = Vec::with_capacity(records.len());
    for (i, (rec, split)) in records.iter().enumerate() {
        let name = PathBuf::from(format!("rec_{i:05}.txt"));
        write_record(&dir.join(&name), rec)?;
        entries.push(ManifestEntry {
            path: name,
            split: *split,
        });
    }
    let manifest = dir.join("manifest.tsv");
    fs::write(&manifest, format_manifest(&entries)).map_err(|source| SignalError::Io {
        path: manifest.clone(),
        source,
    })?;
    Ok(manifest)
}
