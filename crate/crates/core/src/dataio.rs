//! Toy signal generators, CSV datasets and filter files.
//!
//! CSV layout: a 1D dataset is one signal per line. A 2D dataset is a
//! sequence of `n x n` blocks, each followed by a single blank line. Values
//! are written in shortest round-trip form.
//!
//! Filter file: the tap count on the first line, then the taps separated by
//! spaces with 17 significant digits.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::{Array1, Array2};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dwt::{check_len, Signal};
use crate::error::{Error, Result};
use crate::filter_bank::FilterBank;

/// An ordered, uniformly shaped collection of signals.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    signals: Vec<Signal>,
    pub provenance: String,
}

impl Dataset {
    pub fn new(signals: Vec<Signal>, provenance: impl Into<String>) -> Result<Self> {
        for s in &signals {
            s.validate()?;
        }
        if let Some(first) = signals.first() {
            let shape = first.shape();
            if let Some(i) = signals.iter().position(|s| s.shape() != shape) {
                return Err(Error::Shape(format!(
                    "signal {i} has shape {:?}, expected {shape:?}",
                    signals[i].shape()
                )));
            }
        }
        Ok(Self {
            signals,
            provenance: provenance.into(),
        })
    }

    pub fn signals(&self) -> &[Signal] {
        &self.signals
    }

    pub fn into_signals(self) -> Vec<Signal> {
        self.signals
    }

    pub fn len(&self) -> usize {
        self.signals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signals.is_empty()
    }

    /// Shape shared by every signal, `None` when empty.
    pub fn shape(&self) -> Option<Vec<usize>> {
        self.signals.first().map(Signal::shape)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenKind {
    PointLike,
    GaussianBlobs,
    SinusoidNoise,
    Constant,
}

impl GenKind {
    pub fn name(&self) -> &'static str {
        match self {
            GenKind::PointLike => "point-like",
            GenKind::GaussianBlobs => "gaussian-blobs",
            GenKind::SinusoidNoise => "sinusoid-noise",
            GenKind::Constant => "constant",
        }
    }
}

impl FromStr for GenKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "point-like" => Ok(GenKind::PointLike),
            "gaussian-blobs" => Ok(GenKind::GaussianBlobs),
            "sinusoid-noise" => Ok(GenKind::SinusoidNoise),
            "constant" => Ok(GenKind::Constant),
            other => Err(Error::UnknownKind(other.to_string())),
        }
    }
}

/// Generator knobs. Each kind reads only the fields it needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenParams {
    /// Number of delta spikes per point-like signal.
    pub spikes: usize,
    /// Number of Gaussians per blob signal.
    pub blobs: usize,
    /// Mean Gaussian width in samples.
    pub sigma: f64,
    /// Number of sinusoid components.
    pub waves: usize,
    /// White-noise standard deviation.
    pub noise: f64,
    /// Mean level of constant signals.
    pub level: f64,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            spikes: 3,
            blobs: 2,
            sigma: 1.5,
            waves: 3,
            noise: 0.1,
            level: 1.0,
        }
    }
}

/// Deterministic toy dataset of `count` signals of `shape` (`[n]` or `[n, n]`).
pub fn generate(
    kind: GenKind,
    shape: &[usize],
    count: usize,
    seed: u64,
    params: &GenParams,
) -> Result<Dataset> {
    let side = match shape {
        [n] | [n, _] => *n,
        _ => return Err(Error::Shape(format!("unsupported shape {shape:?}"))),
    };
    if let [r, c] = shape {
        if r != c {
            return Err(Error::Shape(format!(
                "2D shape must be square, got {r}x{c}"
            )));
        }
    }
    check_len(side)?;
    let two_d = shape.len() == 2;
    let total = if two_d { side * side } else { side };
    if kind == GenKind::PointLike && (params.spikes == 0 || params.spikes > total) {
        return Err(Error::InvalidConfig(format!(
            "cannot place {} spikes in {total} samples",
            params.spikes
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut signals = Vec::with_capacity(count);
    for _ in 0..count {
        let flat = match kind {
            GenKind::PointLike => point_like(&mut rng, total, params),
            GenKind::GaussianBlobs => blobs(&mut rng, side, two_d, params),
            GenKind::SinusoidNoise => sinusoids(&mut rng, side, two_d, params),
            GenKind::Constant => {
                let level = params.level * rng.random_range(0.5..1.5);
                vec![level; total]
            }
        };
        signals.push(if two_d {
            Signal::TwoD(Array2::from_shape_vec((side, side), flat).expect("square"))
        } else {
            Signal::OneD(Array1::from(flat))
        });
    }
    let provenance = format!(
        "{} shape={shape:?} count={count} seed={seed} {params:?}",
        kind.name()
    );
    Dataset::new(signals, provenance)
}

fn point_like(rng: &mut ChaCha8Rng, total: usize, params: &GenParams) -> Vec<f64> {
    let mut out = vec![0.0; total];
    for pos in sample(rng, total, params.spikes).into_iter() {
        out[pos] = rng.random_range(0.1..1.0);
    }
    out
}

fn coords(side: usize, two_d: bool) -> Vec<(f64, f64)> {
    if two_d {
        (0..side * side)
            .map(|i| ((i / side) as f64, (i % side) as f64))
            .collect()
    } else {
        (0..side).map(|i| (i as f64, 0.0)).collect()
    }
}

fn blobs(rng: &mut ChaCha8Rng, side: usize, two_d: bool, params: &GenParams) -> Vec<f64> {
    let pts = coords(side, two_d);
    let mut out = vec![0.0; pts.len()];
    for _ in 0..params.blobs {
        let cy = rng.random_range(0.0..side as f64);
        let cx = if two_d {
            rng.random_range(0.0..side as f64)
        } else {
            0.0
        };
        let width = params.sigma * rng.random_range(0.5..1.5);
        let amp = rng.random_range(0.5..1.5);
        for (v, (y, x)) in out.iter_mut().zip(&pts) {
            let r2 = (y - cy).powi(2) + (x - cx).powi(2);
            *v += amp * (-r2 / (2.0 * width * width)).exp();
        }
    }
    out
}

fn sinusoids(rng: &mut ChaCha8Rng, side: usize, two_d: bool, params: &GenParams) -> Vec<f64> {
    let pts = coords(side, two_d);
    let mut out = vec![0.0; pts.len()];
    let max_freq = (side / 2).max(1);
    for _ in 0..params.waves {
        let ky = rng.random_range(1..=max_freq) as f64;
        let kx = if two_d {
            rng.random_range(0..=max_freq) as f64
        } else {
            0.0
        };
        let phase = rng.random_range(0.0..2.0 * PI);
        let amp = rng.random_range(0.5..1.5);
        for (v, (y, x)) in out.iter_mut().zip(&pts) {
            *v += amp * (2.0 * PI * (ky * y + kx * x) / side as f64 + phase).sin();
        }
    }
    for v in out.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *v += params.noise * z;
    }
    out
}

/// How to interpret a CSV file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Layout {
    /// 2D when the file contains a blank line, 1D otherwise.
    #[default]
    Auto,
    OneD,
    TwoD,
}

impl FromStr for Layout {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "auto" => Ok(Layout::Auto),
            "1d" => Ok(Layout::OneD),
            "2d" => Ok(Layout::TwoD),
            other => Err(format!(
                "unknown layout `{other}` (expected auto, 1d or 2d)"
            )),
        }
    }
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    read_csv_with(path, Layout::Auto)
}

pub fn read_csv_with(path: impl AsRef<Path>, layout: Layout) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_csv(&text, layout, path)
}

pub fn parse_csv(text: &str, layout: Layout, path: &Path) -> Result<Dataset> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .collect();
    let has_blank = lines.iter().any(|(_, l)| l.trim().is_empty());
    let two_d = match layout {
        Layout::Auto => has_blank,
        Layout::OneD => false,
        Layout::TwoD => true,
    };
    let err = |line: usize, msg: String| Error::Csv {
        path: path.to_path_buf(),
        line,
        msg,
    };

    let mut width: Option<usize> = None;
    let mut rows: Vec<(usize, Option<Vec<f64>>)> = Vec::new();
    for &(no, line) in &lines {
        if line.trim().is_empty() {
            if !two_d {
                return Err(err(no, "blank line in a 1D dataset".into()));
            }
            rows.push((no, None));
            continue;
        }
        let values = line
            .split(',')
            .enumerate()
            .map(|(col, field)| {
                let field = field.trim();
                match field.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    _ => Err(err(
                        no,
                        format!("field {} `{field}` is not a finite number", col + 1),
                    )),
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        match width {
            None => {
                check_len(values.len()).map_err(|e| err(no, e.to_string()))?;
                width = Some(values.len());
            }
            Some(w) if w != values.len() => {
                return Err(err(
                    no,
                    format!("row has {} values, expected {w}", values.len()),
                ))
            }
            _ => {}
        }
        rows.push((no, Some(values)));
    }

    let mut signals = Vec::new();
    if two_d {
        let side = width.unwrap_or(0);
        // (first line, rows) of each blank-separated block
        let mut blocks: Vec<(usize, Vec<Vec<f64>>)> = Vec::new();
        let mut current: Option<(usize, Vec<Vec<f64>>)> = None;
        for (no, row) in rows {
            match row {
                None => blocks.extend(current.take()),
                Some(values) => current
                    .get_or_insert_with(|| (no, Vec::new()))
                    .1
                    .push(values),
            }
        }
        blocks.extend(current);
        for (start, block) in blocks {
            if block.len() > side {
                return Err(err(start + side, format!("block exceeds {side} rows")));
            }
            if block.len() < side {
                return Err(err(
                    start,
                    format!("block has {} rows but {side} columns", block.len()),
                ));
            }
            let data =
                Array2::from_shape_vec((side, side), block.concat()).expect("block size checked");
            signals.push(Signal::TwoD(data));
        }
    } else {
        for (_, row) in rows {
            signals.push(Signal::OneD(Array1::from(
                row.expect("1D rows are never blank"),
            )));
        }
    }
    Dataset::new(signals, path.display().to_string())
}

pub fn format_csv(signals: &[Signal]) -> String {
    let mut out = String::new();
    let push_row = |out: &mut String, row: &mut dyn Iterator<Item = &f64>| {
        for (i, v) in row.enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v:?}");
        }
        out.push('\n');
    };
    for s in signals {
        match s {
            Signal::OneD(v) => push_row(&mut out, &mut v.iter()),
            Signal::TwoD(m) => {
                for row in m.rows() {
                    push_row(&mut out, &mut row.iter());
                }
                out.push('\n');
            }
        }
    }
    out
}

pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &format_csv(dataset.signals()))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn format_filter(fb: &FilterBank) -> String {
    let taps: Vec<String> = fb.coeffs().iter().map(|v| format!("{v:.16e}")).collect();
    format!("{}\n{}\n", fb.len(), taps.join(" "))
}

pub fn save_filter(fb: &FilterBank, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &format_filter(fb))
}

pub fn load_filter(path: impl AsRef<Path>) -> Result<FilterBank> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_filter(&text, path)
}

/// Byte offset of `sub` within `text`; `sub` must be a subslice of it.
fn offset_in(text: &str, sub: &str) -> usize {
    sub.as_ptr() as usize - text.as_ptr() as usize
}

pub fn parse_filter(text: &str, path: &Path) -> Result<FilterBank> {
    let err = |offset: usize, msg: String| Error::FilterFile {
        path: PathBuf::from(path),
        offset,
        msg,
    };
    let mut lines = text.split_inclusive('\n');
    let head = lines
        .next()
        .ok_or_else(|| err(0, "missing tap count".into()))?;
    let count_str = head.trim();
    let count: usize = count_str.parse().map_err(|_| {
        err(
            offset_in(text, head),
            format!("bad tap count `{count_str}`"),
        )
    })?;
    if count < 2 || !count.is_multiple_of(2) {
        return Err(err(
            offset_in(text, head),
            format!("tap count must be even and >= 2, got {count}"),
        ));
    }
    let body = lines.next().unwrap_or("");
    let mut taps = Vec::with_capacity(count);
    for tok in body.split_ascii_whitespace() {
        let v: f64 = tok
            .parse()
            .map_err(|_| err(offset_in(text, tok), format!("bad coefficient `{tok}`")))?;
        taps.push(v);
    }
    if taps.len() != count {
        let at = if taps.len() < count {
            text.len()
        } else {
            offset_in(text, body)
        };
        return Err(err(
            at,
            format!("expected {count} coefficients, found {}", taps.len()),
        ));
    }
    if let Some(extra) = lines.find(|l| !l.trim().is_empty()) {
        return Err(err(
            offset_in(text, extra),
            "unexpected trailing content".into(),
        ));
    }
    FilterBank::new(taps).map_err(|e| err(offset_in(text, body), e.to_string()))
}
