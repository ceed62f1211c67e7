//! File formats: `lso-ann-v1` and `lso-snn-v1` JSON networks, header-less
//! decimal CSV matrices, and integer label columns.
//!
//! Files always hold `f64`. Values are written with Rust's shortest
//! round-trip formatting, so save → load reproduces every matrix bit-exactly.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{LsoError, Result};
use crate::matrix::Matrix;
use crate::netmodel::{Activation, AnnLayer, AnnNetwork, SnnLayer, SnnNetwork};
use crate::neuron::NeuronParams;

pub const ANN_FORMAT: &str = "lso-ann-v1";
pub const SNN_FORMAT: &str = "lso-snn-v1";

#[derive(Serialize, Deserialize)]
pub(crate) struct AnnLayerRecord {
    pub activation: Activation,
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct AnnFile {
    format: String,
    layers: Vec<AnnLayerRecord>,
}

#[derive(Serialize, Deserialize)]
struct SnnLayerRecord {
    is_output: bool,
    rows: usize,
    cols: usize,
    decoders: Vec<f64>,
    neuron: NeuronParams<f64>,
}

#[derive(Serialize, Deserialize)]
struct SnnFile {
    format: String,
    tau_syn: f64,
    layers: Vec<SnnLayerRecord>,
    layer_scales: Vec<f64>,
}

fn parse_error(path: &Path, message: impl Into<String>) -> LsoError {
    LsoError::Parse {
        path: path.to_path_buf(),
        location: None,
        message: message.into(),
    }
}

pub(crate) fn read_json<D: DeserializeOwned>(path: &Path) -> Result<D> {
    let text = fs::read_to_string(path).map_err(|e| LsoError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| LsoError::Parse {
        path: path.to_path_buf(),
        location: Some((e.line(), e.column())),
        message: e.to_string(),
    })
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut text = serde_json::to_string(value)
        .map_err(|e| parse_error(path, format!("serialization failed: {e}")))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| LsoError::io(path, e))
}

/// Like [`write_json`] but indented, for human-read reports.
pub fn write_json_pretty<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| parse_error(path, format!("serialization failed: {e}")))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| LsoError::io(path, e))
}

fn check_format(path: &Path, found: &str, expected: &str) -> Result<()> {
    if found == expected {
        Ok(())
    } else {
        Err(parse_error(
            path,
            format!("format tag \"{found}\", expected \"{expected}\""),
        ))
    }
}

pub(crate) fn record_matrix(
    path: &Path,
    what: &str,
    layer: usize,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
) -> Result<Matrix<f64>> {
    Matrix::new(rows, cols, data)
        .map_err(|e| parse_error(path, format!("layer {layer} {what}: {e}")))
}

pub(crate) fn ann_layer_from_record(
    path: &Path,
    index: usize,
    rec: AnnLayerRecord,
) -> Result<AnnLayer<f64>> {
    let weights = record_matrix(path, "weights", index, rec.rows, rec.cols, rec.weights)?;
    Ok(AnnLayer::new(weights, rec.activation))
}

pub(crate) fn ann_layer_record(layer: &AnnLayer<f64>) -> AnnLayerRecord {
    AnnLayerRecord {
        activation: layer.activation,
        rows: layer.in_dim(),
        cols: layer.out_dim(),
        weights: layer.weights.as_slice().to_vec(),
    }
}

pub fn load_ann(path: impl AsRef<Path>) -> Result<AnnNetwork<f64>> {
    let path = path.as_ref();
    let file: AnnFile = read_json(path)?;
    check_format(path, &file.format, ANN_FORMAT)?;
    let layers = file
        .layers
        .into_iter()
        .enumerate()
        .map(|(i, rec)| ann_layer_from_record(path, i, rec))
        .collect::<Result<Vec<_>>>()?;
    AnnNetwork::new(layers).map_err(|e| parse_error(path, e.to_string()))
}

pub fn save_ann(path: impl AsRef<Path>, net: &AnnNetwork<f64>) -> Result<()> {
    let file = AnnFile {
        format: ANN_FORMAT.into(),
        layers: net.layers().iter().map(ann_layer_record).collect(),
    };
    write_json(path.as_ref(), &file)
}

pub fn load_snn(path: impl AsRef<Path>) -> Result<SnnNetwork<f64>> {
    let path = path.as_ref();
    let file: SnnFile = read_json(path)?;
    check_format(path, &file.format, SNN_FORMAT)?;
    let layers = file
        .layers
        .into_iter()
        .enumerate()
        .map(|(i, rec)| {
            let decoders = record_matrix(path, "decoders", i, rec.rows, rec.cols, rec.decoders)?;
            Ok(SnnLayer {
                decoders,
                neuron: rec.neuron,
                is_output: rec.is_output,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    SnnNetwork::new(layers, file.tau_syn, file.layer_scales)
        .map_err(|e| parse_error(path, e.to_string()))
}

pub fn save_snn(path: impl AsRef<Path>, net: &SnnNetwork<f64>) -> Result<()> {
    let file = SnnFile {
        format: SNN_FORMAT.into(),
        tau_syn: net.tau_syn(),
        layers: net
            .layers()
            .iter()
            .map(|l| SnnLayerRecord {
                is_output: l.is_output,
                rows: l.decoders.rows(),
                cols: l.decoders.cols(),
                decoders: l.decoders.as_slice().to_vec(),
                neuron: l.neuron,
            })
            .collect(),
        layer_scales: net.layer_scales().to_vec(),
    };
    write_json(path.as_ref(), &file)
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| LsoError::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn csv_error(path: &Path, err: csv::Error) -> LsoError {
    let location = err.position().map(|p| (p.line() as usize, 1));
    match err.into_kind() {
        csv::ErrorKind::Io(source) => LsoError::io(path, source),
        kind => LsoError::Parse {
            path: path.to_path_buf(),
            location,
            message: format!("{kind:?}"),
        },
    }
}

/// Parse CSV text into a matrix. Blank lines are skipped.
pub fn parse_matrix_csv(path: &Path, reader: impl std::io::Read) -> Result<Matrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut data = Vec::new();
    let mut rows = 0usize;
    let mut cols = None;
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(rows + 1, |p| p.line() as usize);
        if cols.is_some_and(|c| c != record.len()) {
            return Err(LsoError::Parse {
                path: path.to_path_buf(),
                location: Some((line, 1)),
                message: format!(
                    "row has {} fields, expected {}",
                    record.len(),
                    cols.unwrap_or(0)
                ),
            });
        }
        cols = Some(record.len());
        for (j, field) in record.iter().enumerate() {
            let value: f64 = field.parse().map_err(|_| LsoError::Parse {
                path: path.to_path_buf(),
                location: Some((line, j + 1)),
                message: format!("not a number: \"{field}\""),
            })?;
            if !value.is_finite() {
                return Err(LsoError::Parse {
                    path: path.to_path_buf(),
                    location: Some((line, j + 1)),
                    message: format!("non-finite value \"{field}\""),
                });
            }
            data.push(value);
        }
        rows += 1;
    }
    Matrix::new(rows, cols.unwrap_or(0), data).map_err(|e| parse_error(path, e.to_string()))
}

pub fn load_matrix_csv(path: impl AsRef<Path>) -> Result<Matrix<f64>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| LsoError::io(path, e))?;
    parse_matrix_csv(path, file)
}

pub fn matrix_to_csv_string(m: &Matrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn save_matrix_csv(path: impl AsRef<Path>, m: &Matrix<f64>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, matrix_to_csv_string(m)).map_err(|e| LsoError::io(path, e))
}

/// Class labels: one non-negative integer per row (a single-column CSV).
pub fn load_labels_csv(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let mut rdr = csv_reader(path)?;
    let mut labels = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(labels.len() + 1, |p| p.line() as usize);
        if record.len() != 1 {
            return Err(LsoError::Parse {
                path: path.to_path_buf(),
                location: Some((line, 1)),
                message: format!("expected one label per row, found {} fields", record.len()),
            });
        }
        let field = &record[0];
        let label = field
            .parse::<usize>()
            .ok()
            .or_else(|| {
                field
                    .parse::<f64>()
                    .ok()
                    .filter(|v| *v >= 0.0 && v.fract() == 0.0)
                    .map(|v| v as usize)
            })
            .ok_or_else(|| LsoError::Parse {
                path: path.to_path_buf(),
                location: Some((line, 1)),
                message: format!("not a class index: \"{field}\""),
            })?;
        labels.push(label);
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_text_parses() {
        let m = parse_matrix_csv(Path::new("inline"), "1.0,2.0\n3.0,4.0".as_bytes()).unwrap();
        assert_eq!(m, Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]));
    }

    #[test]
    fn csv_reports_bad_field_location() {
        let err = parse_matrix_csv(Path::new("x.csv"), "1,2\n3,abc\n".as_bytes()).unwrap_err();
        match err {
            LsoError::Parse { location, .. } => assert_eq!(location, Some((2, 2))),
            e => panic!("unexpected {e}"),
        }
        assert!(parse_matrix_csv(Path::new("x.csv"), "1,2\n3\n".as_bytes()).is_err());
        assert!(parse_matrix_csv(Path::new("x.csv"), "1,NaN\n".as_bytes()).is_err());
        assert!(parse_matrix_csv(Path::new("x.csv"), "1,inf\n".as_bytes()).is_err());
    }

    #[test]
    fn csv_writer_round_trips_awkward_values() {
        let m = Matrix::from_rows(&[[0.1, -1e-300, 1.0 / 3.0], [5e300, -0.0, 123456789.125]]);
        let back = parse_matrix_csv(Path::new("m"), matrix_to_csv_string(&m).as_bytes()).unwrap();
        for (a, b) in m.as_slice().iter().zip(back.as_slice()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
