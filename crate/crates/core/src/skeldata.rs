//! Skeletal joint-orientation sequences: parsing, resampling, windowing and
//! dataset splitting.
//!
//! A sequence is a `T×D` matrix of Euler angles in degrees, one row per frame,
//! with `D = 3·M` for `M` tracked joints.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numcore::Tensor;

/// Default length every repetition is resampled to before windowing.
pub const DEFAULT_CANONICAL_T: usize = 240;
/// Upper end of the KIMORE clinical rating scale.
pub const KIMORE_SCORE_MAX: f64 = 50.0;
pub const VICON_JOINTS: usize = 39;
pub const KINECT_JOINTS: usize = 25;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("empty sequence")]
    EmptySequence,
    #[error("window error: {0}")]
    Window(String),
    #[error("split error: {0}")]
    Split(String),
    #[error("invalid sequence: {0}")]
    Invalid(String),
    #[error("manifest error: {0}")]
    Manifest(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Device {
    Vicon,
    Kinect,
}

impl Device {
    pub fn nominal_frame_rate(self) -> f64 {
        match self {
            Device::Vicon => 100.0,
            Device::Kinect => 30.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Correct,
    Incorrect,
    #[default]
    Unlabeled,
}

/// Text layouts accepted by [`load_sequence`]. Both are one frame per row,
/// comma- or whitespace-separated, with three angle columns per joint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FileFormat {
    /// UI-PRMD joint-angle export; Vicon when 39 joints, Kinect otherwise.
    #[default]
    UiprmdAngles,
    /// KIMORE-style Kinect export.
    Kimore,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkeletalSequence {
    pub id: String,
    frames: Tensor,
    joint_count: usize,
    pub frame_rate: f64,
    pub device: Device,
    pub label: Label,
    pub clinical_score: Option<f64>,
}

impl SkeletalSequence {
    /// Wraps a `T×D` matrix, checking `D = 3·M`, `T ≥ 1` and finiteness.
    pub fn new(id: impl Into<String>, frames: Tensor, device: Device) -> Result<Self, DataError> {
        let (t, d) = frames
            .dims2()
            .map_err(|e| DataError::Invalid(e.to_string()))?;
        if t == 0 {
            return Err(DataError::EmptySequence);
        }
        if d == 0 || d % 3 != 0 {
            return Err(DataError::Invalid(format!(
                "{d} feature columns is not a positive multiple of 3"
            )));
        }
        if !frames.is_finite() {
            return Err(DataError::Invalid("non-finite angle".into()));
        }
        Ok(Self {
            id: id.into(),
            frames,
            joint_count: d / 3,
            frame_rate: device.nominal_frame_rate(),
            device,
            label: Label::Unlabeled,
            clinical_score: None,
        })
    }

    pub fn with_label(mut self, label: Label) -> Self {
        self.label = label;
        self
    }

    /// Returns a copy with new frame data and the same metadata.
    pub fn with_frames(&self, frames: Tensor) -> Result<Self, DataError> {
        let mut out = Self::new(self.id.clone(), frames, self.device)?;
        out.frame_rate = self.frame_rate;
        out.label = self.label;
        out.clinical_score = self.clinical_score;
        Ok(out)
    }

    pub fn frames(&self) -> &Tensor {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn feature_dim(&self) -> usize {
        self.frames.shape()[1]
    }

    pub fn joint_count(&self) -> usize {
        self.joint_count
    }

    /// KIMORE clinical score mapped from `[0, 50]` to `[0, 1]`.
    pub fn normalized_clinical_score(&self) -> Option<f64> {
        self.clinical_score
            .map(|s| (s / KIMORE_SCORE_MAX).clamp(0.0, 1.0))
    }
}

fn split_tokens(line: &str) -> Vec<&str> {
    if line.contains(',') {
        let mut toks: Vec<&str> = line.split(',').map(str::trim).collect();
        if toks.last() == Some(&"") {
            toks.pop();
        }
        toks
    } else {
        line.split_whitespace().collect()
    }
}

/// Parses a sequence from text; `origin` is used in error messages.
pub fn parse_sequence(
    text: &str,
    format: FileFormat,
    id: &str,
    origin: &str,
) -> Result<SkeletalSequence, DataError> {
    let perr = |line: usize, msg: String| DataError::Parse {
        path: origin.to_string(),
        line,
        msg,
    };
    let mut cols: Option<usize> = None;
    let mut data = Vec::new();
    let mut rows = 0;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let toks = split_tokens(line);
        match cols {
            None => {
                if !toks.len().is_multiple_of(3) {
                    return Err(perr(
                        line_no,
                        format!("{} columns is not divisible by 3", toks.len()),
                    ));
                }
                cols = Some(toks.len());
            }
            Some(c) if c != toks.len() => {
                return Err(perr(
                    line_no,
                    format!("expected {c} columns, found {}", toks.len()),
                ));
            }
            _ => {}
        }
        for tok in toks {
            let v: f64 = tok
                .parse()
                .map_err(|_| perr(line_no, format!("non-numeric token {tok:?}")))?;
            if !v.is_finite() {
                return Err(perr(line_no, format!("non-finite value {tok:?}")));
            }
            data.push(v);
        }
        rows += 1;
    }
    let cols = cols.ok_or(DataError::EmptySequence)?;
    if cols == 0 {
        return Err(perr(1, "row without values".into()));
    }
    let frames = Tensor::new(&[rows, cols], data).map_err(|e| DataError::Invalid(e.to_string()))?;
    let joints = cols / 3;
    let device = match format {
        FileFormat::UiprmdAngles if joints == VICON_JOINTS => Device::Vicon,
        _ => Device::Kinect,
    };
    SkeletalSequence::new(id, frames, device)
}

pub fn load_sequence(path: &Path, format: FileFormat) -> Result<SkeletalSequence, DataError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_sequence(&text, format, &id, &path.display().to_string())
}

/// Serialises frames as comma-separated rows.
///
/// Values use the shortest representation that parses back to the same
/// `f64`, so `parse_sequence(write_sequence(x))` is bit-exact.
pub fn write_sequence(seq: &SkeletalSequence) -> String {
    let d = seq.feature_dim();
    let mut out = String::new();
    for row in seq.frames.data().chunks(d) {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn save_sequence(seq: &SkeletalSequence, path: &Path) -> Result<(), DataError> {
    fs::write(path, write_sequence(seq)).map_err(io_err(path))
}

/// Per-feature linear interpolation onto `target_t` equally spaced positions
/// over `[0, T−1]`. The first and last frames are reproduced exactly.
pub fn resample_sequence(
    x: &SkeletalSequence,
    target_t: usize,
) -> Result<SkeletalSequence, DataError> {
    let t = x.len();
    if t == 0 {
        return Err(DataError::EmptySequence);
    }
    if target_t < 2 {
        return Err(DataError::Window(format!(
            "resample target length {target_t} must be at least 2"
        )));
    }
    let d = x.feature_dim();
    let src = x.frames.data();
    let mut out = Vec::with_capacity(target_t * d);
    for i in 0..target_t {
        let pos = (i * (t - 1)) as f64 / (target_t - 1) as f64;
        let lo = (pos.floor() as usize).min(t - 1);
        let frac = pos - lo as f64;
        let a = &src[lo * d..(lo + 1) * d];
        if frac == 0.0 || lo + 1 >= t {
            out.extend_from_slice(a);
        } else {
            let b = &src[(lo + 1) * d..(lo + 2) * d];
            out.extend(a.iter().zip(b).map(|(&p, &q)| p + frac * (q - p)));
        }
    }
    let frames = Tensor::new(&[target_t, d], out).map_err(|e| DataError::Invalid(e.to_string()))?;
    x.with_frames(frames)
}

/// Non-overlapping `W×D` slices of a sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedSequence {
    pub windows: Vec<Tensor>,
    pub window: usize,
}

impl WindowedSequence {
    pub fn count(&self) -> usize {
        self.windows.len()
    }
}

/// What to do with the trailing `T mod W` frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RemainderPolicy {
    #[default]
    Drop,
    /// Resample to the nearest positive multiple of `W` first.
    ResampleToMultiple,
}

/// Splits into `N = floor(T/W)` contiguous windows; the remainder is dropped.
pub fn window_slice(x: &SkeletalSequence, w: usize) -> Result<WindowedSequence, DataError> {
    let t = x.len();
    if w == 0 {
        return Err(DataError::Window("window length must be positive".into()));
    }
    if t < w {
        return Err(DataError::Window(format!(
            "sequence of {t} frames is shorter than window {w}"
        )));
    }
    let d = x.feature_dim();
    let windows = x
        .frames
        .data()
        .chunks_exact(w * d)
        .map(|c| Tensor::new(&[w, d], c.to_vec()).expect("window shape"))
        .collect();
    Ok(WindowedSequence { windows, window: w })
}

pub fn window_slice_with(
    x: &SkeletalSequence,
    w: usize,
    policy: RemainderPolicy,
) -> Result<WindowedSequence, DataError> {
    match policy {
        RemainderPolicy::Drop => window_slice(x, w),
        RemainderPolicy::ResampleToMultiple => {
            if w == 0 {
                return Err(DataError::Window("window length must be positive".into()));
            }
            let n = ((x.len() as f64 / w as f64).round() as usize).max(1);
            let target = (n * w).max(2);
            if target == x.len() {
                window_slice(x, w)
            } else {
                window_slice(&resample_sequence(x, target)?, w)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit<T> {
    pub train: Vec<T>,
    pub validation: Vec<T>,
    pub seed: u64,
}

/// Seeded shuffle followed by a `floor(ratio·n)` / rest split.
///
/// Both sides always receive at least one item.
pub fn split_dataset<T: Clone>(
    items: &[T],
    ratio: f64,
    seed: u64,
) -> Result<DatasetSplit<T>, DataError> {
    if items.len() < 2 {
        return Err(DataError::Split(format!(
            "need at least 2 sequences, got {}",
            items.len()
        )));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(DataError::Split(format!("ratio {ratio} outside (0, 1)")));
    }
    let n = items.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((ratio * n as f64 + 1e-9).floor() as usize).clamp(1, n - 1);
    Ok(DatasetSplit {
        train: order[..n_train].iter().map(|&i| items[i].clone()).collect(),
        validation: order[n_train..].iter().map(|&i| items[i].clone()).collect(),
        seed,
    })
}

/// One row of a dataset manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub sequence_id: String,
    pub exercise: String,
    pub subject: String,
    pub label: Label,
    pub frames: usize,
    pub joints: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clinical_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct DatasetManifest {
    pub format: FileFormat,
    pub entries: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl DatasetManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serialises")
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, DataError> {
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, self.to_json() + "\n").map_err(io_err(&path))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self, DataError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|e| DataError::Manifest(format!("{}: {e}", path.display())))
    }

    /// Exercises in sorted order.
    pub fn exercises(&self) -> Vec<String> {
        let mut ex: Vec<String> = self.entries.iter().map(|e| e.exercise.clone()).collect();
        ex.sort();
        ex.dedup();
        ex
    }
}

/// Parses UI-PRMD style names `mNN_sNN_eNN_angles[_inc].txt` into
/// `(exercise, subject, repetition, label)`.
pub fn parse_uiprmd_name(name: &str) -> Option<(String, String, String, Label)> {
    let stem = name.strip_suffix(".txt")?;
    let (stem, label) = match stem.strip_suffix("_inc") {
        Some(s) => (s, Label::Incorrect),
        None => (stem, Label::Correct),
    };
    let stem = stem.strip_suffix("_angles")?;
    let parts: Vec<&str> = stem.split('_').collect();
    let [m, s, e] = parts.as_slice() else {
        return None;
    };
    let ok = |p: &str, c: char| p.starts_with(c) && p.len() > 1 && p[1..].chars().all(|ch| ch.is_ascii_digit());
    if !(ok(m, 'm') && ok(s, 's') && ok(e, 'e')) {
        return None;
    }
    Some((m.to_string(), s.to_string(), e.to_string(), label))
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), DataError> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(io_err(dir))?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_files(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

/// Builds a manifest for a directory tree of UI-PRMD angle files.
///
/// Files whose names do not follow the UI-PRMD pattern are ignored.
pub fn scan_uiprmd(dir: &Path) -> Result<DatasetManifest, DataError> {
    let mut files = Vec::new();
    collect_files(dir, &mut files)?;
    let mut entries = Vec::new();
    for path in files {
        let Some(name) = path.file_name().map(|n| n.to_string_lossy().into_owned()) else {
            continue;
        };
        let Some((exercise, subject, _, label)) = parse_uiprmd_name(&name) else {
            continue;
        };
        let seq = load_sequence(&path, FileFormat::UiprmdAngles)?;
        let rel = path.strip_prefix(dir).unwrap_or(&path);
        entries.push(ManifestEntry {
            file: rel.to_string_lossy().into_owned(),
            sequence_id: name.trim_end_matches(".txt").to_string(),
            exercise,
            subject,
            label,
            frames: seq.len(),
            joints: seq.joint_count(),
            clinical_score: None,
        });
    }
    if entries.is_empty() {
        return Err(DataError::Manifest(format!(
            "no UI-PRMD angle files under {}",
            dir.display()
        )));
    }
    Ok(DatasetManifest {
        format: FileFormat::UiprmdAngles,
        entries,
    })
}

/// A loaded sequence together with its manifest row.
#[derive(Debug, Clone)]
pub struct DatasetItem {
    pub entry: ManifestEntry,
    pub sequence: SkeletalSequence,
}

/// Loads every sequence of a dataset directory.
///
/// Uses `manifest.json` when present and falls back to scanning UI-PRMD names.
pub fn load_dataset(dir: &Path) -> Result<(DatasetManifest, Vec<DatasetItem>), DataError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest = if manifest_path.exists() {
        DatasetManifest::read(&manifest_path)?
    } else {
        scan_uiprmd(dir)?
    };
    let mut items = Vec::with_capacity(manifest.entries.len());
    for entry in &manifest.entries {
        let mut seq = load_sequence(&dir.join(&entry.file), manifest.format)?;
        seq.id = entry.sequence_id.clone();
        seq.label = entry.label;
        seq.clinical_score = entry.clinical_score;
        items.push(DatasetItem {
            entry: entry.clone(),
            sequence: seq,
        });
    }
    Ok((manifest, items))
}

/// Groups items by exercise id (sorted).
pub fn by_exercise(items: &[DatasetItem]) -> BTreeMap<String, Vec<DatasetItem>> {
    let mut out: BTreeMap<String, Vec<DatasetItem>> = BTreeMap::new();
    for it in items {
        out.entry(it.entry.exercise.clone()).or_default().push(it.clone());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(rows: &[Vec<f64>]) -> SkeletalSequence {
        SkeletalSequence::new("t", Tensor::from_rows(rows).unwrap(), Device::Kinect).unwrap()
    }

    fn ramp(t: usize, d: usize) -> SkeletalSequence {
        let rows: Vec<Vec<f64>> = (0..t)
            .map(|i| (0..d).map(|j| i as f64 * (j + 1) as f64 - 3.0).collect())
            .collect();
        seq(&rows)
    }

    #[test]
    fn parses_small_file() {
        let s = parse_sequence("0,0,0,0,0,0\n1,1,1,1,1,1\n", FileFormat::UiprmdAngles, "x", "mem")
            .unwrap();
        assert_eq!((s.len(), s.joint_count(), s.feature_dim()), (2, 2, 6));
        assert_eq!(s.device, Device::Kinect);
    }

    #[test]
    fn device_follows_joint_count() {
        let vicon_row = vec!["1.5"; 117].join(",");
        let s = parse_sequence(&vicon_row, FileFormat::UiprmdAngles, "v", "mem").unwrap();
        assert_eq!(s.feature_dim(), 117);
        assert_eq!(s.device, Device::Vicon);
        let kinect_row = vec!["0.25"; 75].join(" ");
        let s = parse_sequence(&kinect_row, FileFormat::Kimore, "k", "mem").unwrap();
        assert_eq!(s.joint_count(), KINECT_JOINTS);
        assert_eq!(s.device, Device::Kinect);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let err = parse_sequence("1,2,3\n1,2,x\n", FileFormat::Kimore, "e", "f.txt").unwrap_err();
        assert!(matches!(err, DataError::Parse { line: 2, .. }), "{err}");
        let err = parse_sequence("1,2,3\n\n1,2,3,4,5,6\n", FileFormat::Kimore, "e", "f.txt")
            .unwrap_err();
        assert!(matches!(err, DataError::Parse { line: 3, .. }), "{err}");
        let err = parse_sequence("1,2\n", FileFormat::Kimore, "e", "f.txt").unwrap_err();
        assert!(matches!(err, DataError::Parse { line: 1, .. }), "{err}");
        let err = parse_sequence("1,2,NaN\n", FileFormat::Kimore, "e", "f.txt").unwrap_err();
        assert!(matches!(err, DataError::Parse { .. }));
        assert!(matches!(
            parse_sequence("\n\n", FileFormat::Kimore, "e", "f.txt"),
            Err(DataError::EmptySequence)
        ));
    }

    #[test]
    fn trailing_comma_tolerated() {
        let s = parse_sequence("1,2,3,\n4,5,6,\n", FileFormat::Kimore, "e", "m").unwrap();
        assert_eq!(s.feature_dim(), 3);
    }

    #[test]
    fn resample_examples() {
        let s = seq(&[vec![0.0, 0.0, 0.0], vec![4.0, 8.0, -4.0]]);
        let r = resample_sequence(&s, 3).unwrap();
        assert_eq!(r.frames().data(), &[0.0, 0.0, 0.0, 2.0, 4.0, -2.0, 4.0, 8.0, -4.0]);
        let x = ramp(17, 3);
        assert_eq!(resample_sequence(&x, 17).unwrap(), x);
        assert!(resample_sequence(&x, 1).is_err());
    }

    #[test]
    fn resampling_a_ramp_stays_linear() {
        let x = ramp(13, 6);
        for target in [2, 5, 29, 240] {
            let r = resample_sequence(&x, target).unwrap();
            assert_eq!(r.frames().row(0), x.frames().row(0));
            assert_eq!(r.frames().row(target - 1), x.frames().row(12));
            for i in 0..target {
                let pos = i as f64 * 12.0 / (target - 1) as f64;
                for j in 0..6 {
                    let expected = pos * (j + 1) as f64 - 3.0;
                    assert!((r.frames().at(i, j) - expected).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn window_counts() {
        let w = window_slice(&ramp(120, 3), 40).unwrap();
        assert_eq!(w.count(), 3);
        let x = ramp(250, 3);
        let w = window_slice(&x, 40).unwrap();
        assert_eq!(w.count(), 6);
        // index-slicing oracle
        for (n, win) in w.windows.iter().enumerate() {
            for r in 0..40 {
                assert_eq!(win.row(r), x.frames().row(n * 40 + r));
            }
        }
        assert!(matches!(window_slice(&ramp(10, 3), 40), Err(DataError::Window(_))));
    }

    #[test]
    fn resample_to_multiple_policy() {
        let w = window_slice_with(&ramp(250, 3), 40, RemainderPolicy::ResampleToMultiple).unwrap();
        assert_eq!(w.count(), 6);
        let w = window_slice_with(&ramp(10, 3), 40, RemainderPolicy::ResampleToMultiple).unwrap();
        assert_eq!(w.count(), 1);
    }

    #[test]
    fn split_examples() {
        let items: Vec<usize> = (0..10).collect();
        let s = split_dataset(&items, 0.8, 7).unwrap();
        assert_eq!((s.train.len(), s.validation.len()), (8, 2));
        assert_eq!(s, split_dataset(&items, 0.8, 7).unwrap());
        let mut all: Vec<usize> = s.train.iter().chain(&s.validation).copied().collect();
        all.sort();
        assert_eq!(all, items);
        let s = split_dataset(&[1, 2, 3, 4], 0.5, 1).unwrap();
        assert_eq!((s.train.len(), s.validation.len()), (2, 2));
        assert!(split_dataset(&[1], 0.8, 1).is_err());
        assert!(split_dataset(&[1, 2], 1.0, 1).is_err());
    }

    #[test]
    fn uiprmd_names() {
        assert_eq!(
            parse_uiprmd_name("m01_s02_e03_angles.txt"),
            Some(("m01".into(), "s02".into(), "e03".into(), Label::Correct))
        );
        assert_eq!(
            parse_uiprmd_name("m10_s10_e01_angles_inc.txt").map(|p| p.3),
            Some(Label::Incorrect)
        );
        assert_eq!(parse_uiprmd_name("m01_s02_e03_positions.txt"), None);
        assert_eq!(parse_uiprmd_name("readme.txt"), None);
    }

    #[test]
    fn clinical_score_normalisation() {
        let mut s = ramp(3, 3);
        s.clinical_score = Some(35.0);
        assert_eq!(s.normalized_clinical_score(), Some(0.7));
    }
}
