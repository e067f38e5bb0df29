//! JSON and CSV formats.
//!
//! A complex matrix is `{"rows", "cols", "re": [[..]], "im": [[..]]}` with
//! row-major nested arrays. Frames additionally carry `"n"` and `"k"`, which
//! is how loop files tell frame samples from projection samples. A norm
//! vector is either a bare array (with `k` the rounded sum) or
//! `{"d": [..], "k": k}`. Every report starts with a provenance object:
//! toolkit version, seed and the full run configuration. Floats are written
//! in shortest round-trip form.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{FrameError, Result};
use crate::hermitian::{CMat, Frame, ProjectionMatrix, C64};
use crate::polytope::NormVector;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl MatrixJson {
    pub fn from_matrix(m: &CMat) -> Self {
        let (rows, cols) = m.shape();
        MatrixJson {
            rows,
            cols,
            n: None,
            k: None,
            re: (0..rows).map(|i| (0..cols).map(|j| m[(i, j)].re).collect()).collect(),
            im: (0..rows).map(|i| (0..cols).map(|j| m[(i, j)].im).collect()).collect(),
        }
    }

    pub fn to_matrix(&self) -> Result<CMat> {
        let shape_ok = self.re.len() == self.rows
            && self.im.len() == self.rows
            && self.re.iter().chain(&self.im).all(|row| row.len() == self.cols);
        if !shape_ok {
            return Err(FrameError::Parse(format!(
                "matrix declares {}x{} but its re/im arrays do not match",
                self.rows, self.cols
            )));
        }
        if self.re.iter().chain(&self.im).flatten().any(|x| !x.is_finite()) {
            return Err(FrameError::Parse("matrix has non-finite entries".into()));
        }
        Ok(CMat::from_fn(self.rows, self.cols, |i, j| C64::new(self.re[i][j], self.im[i][j])))
    }

    pub fn is_frame(&self) -> bool {
        self.n.is_some() || self.k.is_some()
    }
}

pub fn frame_to_json(f: &Frame) -> Value {
    let mut m = MatrixJson::from_matrix(f.matrix());
    m.n = Some(f.n());
    m.k = Some(f.k());
    serde_json::to_value(m).expect("matrix serializes")
}

pub fn projection_to_json(p: &ProjectionMatrix) -> Value {
    serde_json::to_value(MatrixJson::from_matrix(p.matrix())).expect("matrix serializes")
}

pub fn frame_from_json(v: &Value) -> Result<Frame> {
    let m: MatrixJson = serde_json::from_value(v.clone())?;
    if let (Some(n), Some(k)) = (m.n, m.k) {
        if n != m.cols || k != m.rows {
            return Err(FrameError::Parse(format!(
                "frame declares n = {n}, k = {k} but the matrix is {}x{}",
                m.rows, m.cols
            )));
        }
    }
    Frame::new(m.to_matrix()?)
}

pub fn projection_from_json(v: &Value) -> Result<ProjectionMatrix> {
    let m: MatrixJson = serde_json::from_value(v.clone())?;
    ProjectionMatrix::new(m.to_matrix()?)
}

pub fn norm_vector_to_json(d: &NormVector) -> Value {
    json!({ "d": d.d(), "k": d.k() })
}

pub fn norm_vector_from_json(v: &Value) -> Result<NormVector> {
    match v {
        Value::Array(_) => NormVector::infer(serde_json::from_value(v.clone())?),
        Value::Object(map) => {
            let d: Vec<f64> = serde_json::from_value(
                map.get("d")
                    .cloned()
                    .ok_or_else(|| FrameError::Parse("norm vector object needs a \"d\" array".into()))?,
            )?;
            match map.get("k") {
                Some(k) => NormVector::new(d, serde_json::from_value(k.clone())?),
                None => NormVector::infer(d),
            }
        }
        _ => Err(FrameError::Parse("norm vector must be an array or an object".into())),
    }
}

/// Raw entries (and `k`, if given) from a command-line argument: a JSON file
/// path, inline JSON, or comma-separated numbers. No polytope check.
pub fn parse_values(arg: &str) -> Result<(Vec<f64>, Option<usize>)> {
    let trimmed = arg.trim();
    let json = if trimmed.starts_with('[') || trimmed.starts_with('{') {
        Some(serde_json::from_str(trimmed)?)
    } else if Path::new(trimmed).is_file() {
        Some(read_json(trimmed)?)
    } else {
        None
    };
    match json {
        Some(Value::Array(a)) => Ok((serde_json::from_value(Value::Array(a))?, None)),
        Some(Value::Object(map)) => {
            let d = map
                .get("d")
                .cloned()
                .ok_or_else(|| FrameError::Parse("norm vector object needs a \"d\" array".into()))?;
            let k = map.get("k").map(|k| serde_json::from_value(k.clone())).transpose()?;
            Ok((serde_json::from_value(d)?, k))
        }
        Some(_) => Err(FrameError::Parse("norm vector must be an array or an object".into())),
        None => {
            let values = trimmed
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| FrameError::Parse(format!("bad number {s:?} in {arg:?}: {e}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok((values, None))
        }
    }
}

/// Norm vector from a command-line argument (see [`parse_values`]). An
/// explicit `k` overrides the one in the input, which overrides the rounded
/// sum.
pub fn parse_norm_vector(arg: &str, k: Option<usize>) -> Result<NormVector> {
    let (d, k_in) = parse_values(arg)?;
    match k.or(k_in) {
        Some(k) => NormVector::new(d, k),
        None => NormVector::infer(d),
    }
}

/// The object under `key` if present (report files), else `v` itself.
fn unwrap_key<'a>(v: &'a Value, key: &str) -> &'a Value {
    v.get(key).filter(|inner| inner.is_object()).unwrap_or(v)
}

/// A frame from a bare matrix file or a report with a `"frame"` field.
pub fn load_frame(path: impl AsRef<Path>) -> Result<Frame> {
    frame_from_json(unwrap_key(&read_json(path)?, "frame"))
}

/// A projection from a bare matrix file or a report with a `"projection"`
/// field.
pub fn load_projection(path: impl AsRef<Path>) -> Result<ProjectionMatrix> {
    projection_from_json(unwrap_key(&read_json(path)?, "projection"))
}

/// Samples of a loop file.
#[derive(Debug, Clone)]
pub enum LoopSamples {
    Frames(Vec<Frame>),
    Projections(Vec<ProjectionMatrix>),
}

#[derive(Debug, Clone)]
pub struct LoopFile {
    pub d: Option<NormVector>,
    pub samples: LoopSamples,
}

impl LoopFile {
    /// Gram projections of frame samples, or the projection samples as is.
    pub fn projections(&self) -> Result<Vec<ProjectionMatrix>> {
        match &self.samples {
            LoopSamples::Projections(p) => Ok(p.clone()),
            LoopSamples::Frames(f) => f.iter().map(crate::hermitian::gram_projection).collect(),
        }
    }
}

pub fn loop_from_json(v: &Value) -> Result<LoopFile> {
    let d = match v.get("d") {
        Some(Value::Null) | None => None,
        Some(d) => Some(norm_vector_from_json(d)?),
    };
    let raw = v
        .get("samples")
        .and_then(Value::as_array)
        .ok_or_else(|| FrameError::Parse("loop needs a \"samples\" array".into()))?;
    if raw.is_empty() {
        return Err(FrameError::Parse("loop has no samples".into()));
    }
    let parsed: Vec<MatrixJson> = raw
        .iter()
        .map(|s| serde_json::from_value(s.clone()).map_err(FrameError::from))
        .collect::<Result<_>>()?;
    let frames = parsed[0].is_frame();
    if parsed.iter().any(|m| m.is_frame() != frames) {
        return Err(FrameError::Parse("loop mixes frame and projection samples".into()));
    }
    let samples = if frames {
        LoopSamples::Frames(raw.iter().map(frame_from_json).collect::<Result<_>>()?)
    } else {
        LoopSamples::Projections(raw.iter().map(projection_from_json).collect::<Result<_>>()?)
    };
    Ok(LoopFile { d, samples })
}

pub fn loop_to_json(d: Option<&NormVector>, samples: &LoopSamples) -> Value {
    let samples: Vec<Value> = match samples {
        LoopSamples::Frames(f) => f.iter().map(frame_to_json).collect(),
        LoopSamples::Projections(p) => p.iter().map(projection_to_json).collect(),
    };
    json!({ "d": d.map(norm_vector_to_json), "samples": samples })
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub config: Value,
}

impl Provenance {
    pub fn new(seed: u64, config: Value) -> Self {
        Provenance {
            tool: "frametop",
            version: VERSION,
            seed,
            config,
        }
    }

    /// `{"provenance": .., <body fields>}`.
    pub fn wrap(&self, body: Value) -> Value {
        let mut out = serde_json::Map::new();
        out.insert("provenance".into(), serde_json::to_value(self).expect("provenance serializes"));
        match body {
            Value::Object(map) => out.extend(map),
            other => {
                out.insert("result".into(), other);
            }
        }
        Value::Object(out)
    }

    /// One-line CSV comment carrying the same information.
    pub fn csv_comment(&self) -> String {
        format!("# provenance: {}", serde_json::to_string(self).expect("provenance serializes"))
    }
}

pub fn read_json(path: impl AsRef<Path>) -> Result<Value> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| FrameError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| FrameError::Parse(format!("{}: {e}", path.display())))
}

pub fn write_json(path: impl AsRef<Path>, value: &Value) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| FrameError::Io(format!("{}: {e}", path.display())))
}

/// CSV text: the provenance comment, a header row, then the records.
pub fn csv_string(provenance: &Provenance, header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| FrameError::Io(e.to_string()))?;
    for row in rows {
        w.write_record(row).map_err(|e| FrameError::Io(e.to_string()))?;
    }
    let body = w.into_inner().map_err(|e| FrameError::Io(e.to_string()))?;
    let body = String::from_utf8(body).map_err(|e| FrameError::Io(e.to_string()))?;
    Ok(format!("{}\n{body}", provenance.csv_comment()))
}

pub fn write_csv(path: impl AsRef<Path>, provenance: &Provenance, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, csv_string(provenance, header, rows)?).map_err(|e| FrameError::Io(format!("{}: {e}", path.display())))
}

/// Space-separated list, for CSV cells.
/// Shortest round-trip decimal, switching to exponent form for very large or
/// small magnitudes (the same digits serde_json writes).
pub fn float(x: f64) -> String {
    format!("{x:?}")
}

/// Floats joined by `sep`, each via [`float`].
pub fn join_floats(items: &[f64], sep: &str) -> String {
    items.iter().map(|&x| float(x)).collect::<Vec<_>>().join(sep)
}

pub fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ")
}
