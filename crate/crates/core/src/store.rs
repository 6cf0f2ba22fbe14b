//! On-disk image index and label maps.
//!
//! Index files are UTF-8 text. The first line is a tab-separated header:
//!
//! ```text
//! cbir-index  <version>  <bins_per_channel>  rgb-hist-per-channel
//! ```
//!
//! followed by one line per entry, sorted by id:
//!
//! ```text
//! <id>  <label>  <validity>  <v_0> ... <v_{3B-1}>
//! ```
//!
//! `label` and `validity` are `-` when absent. A label produced by MKNN
//! labeling rather than supplied by a user is written with a leading `*`.
//! Feature values carry 9 significant digits (`{:.8e}`); validity uses the
//! shortest representation that reads back exactly. Every line, including
//! the last, ends with `\n`.
//!
//! Label maps hold one `relative/path<TAB>label` per line. Blank lines and
//! lines starting with `#` are ignored.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use walkdir::WalkDir;

use crate::error::{Error, Result};
use crate::features::{extract_features_from_path, ExtractionParams};
use crate::mknn::TrainSample;

pub const FORMAT_NAME: &str = "cbir-index";
pub const FORMAT_VERSION: u32 = 1;
pub const NORMALIZATION: &str = "rgb-hist-per-channel";
const ABSENT: &str = "-";
const ASSIGNED_MARK: char = '*';

/// File extensions considered images when scanning a directory. Anything
/// else is ignored; these are decoded and skipped if that fails.
const IMAGE_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg", "gif", "bmp", "tif", "tiff", "webp"];

/// Rounds a value to the precision stored in index files.
pub fn quantize(v: f64) -> f64 {
    format!("{v:.8e}").parse().expect("formatted float parses")
}

pub fn quantize_vector(values: &[f64]) -> Vec<f64> {
    values.iter().map(|&v| quantize(v)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelSource {
    /// Supplied by the user through a label map.
    Original,
    /// Assigned by MKNN labeling.
    Assigned,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntryLabel {
    pub name: String,
    pub source: LabelSource,
}

impl EntryLabel {
    pub fn original(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            source: LabelSource::Original,
        }
    }

    pub fn assigned(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            source: LabelSource::Assigned,
        }
    }

    pub fn is_original(&self) -> bool {
        self.source == LabelSource::Original
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub id: String,
    pub vector: Vec<f64>,
    pub label: Option<EntryLabel>,
    pub validity: Option<f64>,
}

impl IndexEntry {
    pub fn new(id: impl Into<String>, vector: Vec<f64>, label: Option<EntryLabel>) -> Self {
        Self {
            id: id.into(),
            vector,
            label,
            validity: None,
        }
    }

    pub fn label_name(&self) -> Option<&str> {
        self.label.as_ref().map(|l| l.name.as_str())
    }
}

fn check_id(id: &str) -> Result<()> {
    if id.is_empty() || id.contains(['\t', '\n', '\r']) {
        return Err(Error::Input(format!("invalid entry id {id:?}")));
    }
    Ok(())
}

pub fn check_label(label: &str) -> Result<()> {
    if label.is_empty()
        || label == ABSENT
        || label.starts_with(ASSIGNED_MARK)
        || label.contains(['\t', '\n', '\r'])
    {
        return Err(Error::Input(format!(
            "invalid label {label:?}: labels must be non-empty, must not be \"-\", \
             start with '*' or contain tabs or newlines"
        )));
    }
    Ok(())
}

fn check_entry(e: &IndexEntry, dim: usize) -> Result<()> {
    check_id(&e.id)?;
    if e.vector.len() != dim {
        return Err(Error::EntryDimension {
            id: e.id.clone(),
            expected: dim,
            found: e.vector.len(),
        });
    }
    if let Some(v) = e.vector.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::Input(format!(
            "entry {}: feature value {v} is not a non-negative number",
            e.id
        )));
    }
    if let Some(label) = &e.label {
        check_label(&label.name)?;
    }
    if let Some(v) = e.validity {
        if e.label.is_none() {
            return Err(Error::Input(format!(
                "entry {} has a validity but no label",
                e.id
            )));
        }
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Input(format!(
                "entry {}: validity {v} outside [0, 1]",
                e.id
            )));
        }
    }
    Ok(())
}

/// Collection of indexed images. Entries are kept sorted by id and their
/// vectors are stored at file precision, so saving and loading is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageIndex {
    version: u32,
    params: ExtractionParams,
    entries: Vec<IndexEntry>,
}

impl ImageIndex {
    pub fn new(params: ExtractionParams, mut entries: Vec<IndexEntry>) -> Result<Self> {
        let dim = params.vector_len();
        let mut seen = HashSet::with_capacity(entries.len());
        for e in &mut entries {
            check_entry(e, dim)?;
            if !seen.insert(e.id.clone()) {
                return Err(Error::Input(format!("duplicate entry id {}", e.id)));
            }
            for v in e.vector.iter_mut() {
                *v = quantize(*v);
            }
        }
        entries.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(Self {
            version: FORMAT_VERSION,
            params,
            entries,
        })
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    pub fn params(&self) -> ExtractionParams {
        self.params
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<IndexEntry> {
        self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&IndexEntry> {
        self.entries
            .binary_search_by(|e| e.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.entries[i])
    }

    pub fn labeled_count(&self) -> usize {
        self.entries.iter().filter(|e| e.label.is_some()).count()
    }

    pub fn unlabeled_count(&self) -> usize {
        self.len() - self.labeled_count()
    }

    /// Labeled entries as training samples. With `original_only`, labels
    /// assigned by a previous labeling run are left out. Stored validities
    /// are carried over.
    pub fn train_samples(&self, original_only: bool) -> Vec<TrainSample> {
        self.entries
            .iter()
            .filter_map(|e| {
                let label = e.label.as_ref()?;
                if original_only && !label.is_original() {
                    return None;
                }
                let sample = TrainSample::new(e.id.clone(), e.vector.clone(), label.name.clone());
                Some(match e.validity {
                    Some(v) => sample.with_validity(v).expect("validated on construction"),
                    None => sample,
                })
            })
            .collect()
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{FORMAT_NAME}\t{}\t{}\t{NORMALIZATION}",
            self.version,
            self.params.bins_per_channel()
        );
        for e in &self.entries {
            out.push_str(&e.id);
            out.push('\t');
            match &e.label {
                None => out.push_str(ABSENT),
                Some(l) => {
                    if !l.is_original() {
                        out.push(ASSIGNED_MARK);
                    }
                    out.push_str(&l.name);
                }
            }
            out.push('\t');
            match e.validity {
                None => out.push_str(ABSENT),
                Some(v) => {
                    let _ = write!(out, "{v}");
                }
            }
            for v in &e.vector {
                let _ = write!(out, "\t{v:.8e}");
            }
            out.push('\n');
        }
        out
    }

    /// Parses index text. `origin` is only used in error messages.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            message,
        };
        if text.is_empty() {
            return Err(Error::Truncated("missing header".into()));
        }
        if !text.ends_with('\n') {
            return Err(Error::Truncated(format!(
                "last line of {} is incomplete",
                origin.display()
            )));
        }

        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().unwrap_or_default().split('\t').collect();
        if header[0] != FORMAT_NAME {
            return Err(parse_err(1, format!("not a {FORMAT_NAME} file")));
        }
        let version: u32 = header
            .get(1)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| parse_err(1, "missing or malformed version".into()))?;
        if version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        if header.len() != 4 {
            return Err(parse_err(
                1,
                format!("header has {} fields, expected 4", header.len()),
            ));
        }
        let bins: usize = header[2]
            .parse()
            .map_err(|_| parse_err(1, format!("malformed bin count {:?}", header[2])))?;
        let params = ExtractionParams::new(bins).map_err(|e| parse_err(1, e.to_string()))?;
        if header[3] != NORMALIZATION {
            return Err(parse_err(
                1,
                format!("unknown normalization {:?}", header[3]),
            ));
        }
        let dim = params.vector_len();

        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            let mut fields = line.split('\t');
            let (Some(id), Some(label), Some(validity)) =
                (fields.next(), fields.next(), fields.next())
            else {
                return Err(parse_err(
                    lineno,
                    "expected id, label and validity fields".into(),
                ));
            };
            let label = match label {
                ABSENT => None,
                l => match l.strip_prefix(ASSIGNED_MARK) {
                    Some(name) => Some(EntryLabel::assigned(name)),
                    None => Some(EntryLabel::original(l)),
                },
            };
            let validity = match validity {
                ABSENT => None,
                v => Some(
                    v.parse::<f64>()
                        .map_err(|_| parse_err(lineno, format!("malformed validity {v:?}")))?,
                ),
            };
            let vector = fields
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| parse_err(lineno, format!("malformed feature value {f:?}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            if vector.len() != dim {
                return Err(Error::EntryDimension {
                    id: id.to_string(),
                    expected: dim,
                    found: vector.len(),
                });
            }
            let entry = IndexEntry {
                id: id.to_string(),
                vector,
                label,
                validity,
            };
            check_entry(&entry, dim).map_err(|err| parse_err(lineno, err.to_string()))?;
            if !seen.insert(entry.id.clone()) {
                return Err(parse_err(
                    lineno,
                    format!("duplicate entry id {}", entry.id),
                ));
            }
            entries.push(entry);
        }
        ImageIndex::new(params, entries)
    }
}

pub fn save_index(index: &ImageIndex, path: &Path) -> Result<()> {
    fs::write(path, index.serialize())?;
    Ok(())
}

pub fn load_index(path: &Path) -> Result<ImageIndex> {
    let bytes = fs::read(path)?;
    let text = String::from_utf8(bytes).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: format!("not valid UTF-8: {e}"),
    })?;
    ImageIndex::parse(&text, path)
}

pub fn parse_label_map(text: &str, origin: &Path) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: origin.to_path_buf(),
            line: lineno,
            message,
        };
        let (path, label) = line
            .split_once('\t')
            .ok_or_else(|| err("expected \"path<TAB>label\"".into()))?;
        if path.is_empty() {
            return Err(err("empty path".into()));
        }
        check_label(label).map_err(|e| err(e.to_string()))?;
        if map.insert(path.to_string(), label.to_string()).is_some() {
            return Err(err(format!("duplicate entry for {path}")));
        }
    }
    Ok(map)
}

pub fn load_label_map(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path)?;
    parse_label_map(&text, path)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedFile {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct BuildReport {
    pub index: ImageIndex,
    pub skipped: Vec<SkippedFile>,
}

fn relative_id(root: &Path, path: &Path) -> Option<String> {
    let rel = path.strip_prefix(root).ok()?;
    let parts: Option<Vec<&str>> = rel.components().map(|c| c.as_os_str().to_str()).collect();
    Some(parts?.join("/"))
}

fn image_files(root: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut files = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry =
            entry.map_err(|e| Error::Input(format!("cannot scan {}: {e}", root.display())))?;
        if !entry.file_type().is_file() || entry.file_name().to_string_lossy().starts_with('.') {
            continue;
        }
        let is_image = entry
            .path()
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
        if !is_image {
            continue;
        }
        if let Some(id) = relative_id(root, entry.path()) {
            files.push((id, entry.into_path()));
        }
    }
    Ok(files)
}

/// Indexes every image under `image_dir`. Files that fail to decode are
/// reported in the returned skip list.
pub fn build_index(
    image_dir: &Path,
    labels: Option<&Path>,
    params: ExtractionParams,
) -> Result<BuildReport> {
    if !image_dir.is_dir() {
        return Err(Error::Input(format!(
            "{} is not a directory",
            image_dir.display()
        )));
    }
    let label_map = labels.map(load_label_map).transpose()?.unwrap_or_default();
    let files = image_files(image_dir)?;
    if files.is_empty() {
        return Err(Error::Input(format!(
            "no image files found in {}",
            image_dir.display()
        )));
    }

    let extracted: Vec<(String, Result<Vec<f64>>)> = files
        .into_par_iter()
        .map(|(id, path)| {
            let fv = extract_features_from_path(&path, params).map(|f| f.into_values());
            (id, fv)
        })
        .collect();

    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    for (id, fv) in extracted {
        match fv {
            Ok(vector) => {
                let label = label_map.get(&id).map(EntryLabel::original);
                entries.push(IndexEntry::new(id, vector, label));
            }
            Err(e) => skipped.push(SkippedFile {
                id,
                reason: e.to_string(),
            }),
        }
    }
    if entries.is_empty() {
        return Err(Error::Input(format!(
            "no decodable images in {} ({} skipped)",
            image_dir.display(),
            skipped.len()
        )));
    }
    Ok(BuildReport {
        index: ImageIndex::new(params, entries)?,
        skipped,
    })
}
