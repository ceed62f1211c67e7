//! Rewrite strided convolutions as dense weight matrices.
//!
//! Images are flattened channel-last in row-major spatial order: element
//! `(h, w, c)` sits at index `(h·width + w)·channels + c`. Output feature maps
//! use the same layout with filters as channels. Zero padding contributes
//! nothing, so padded positions simply have no row in the dense matrix.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{LsoError, Result};
use crate::io::{ann_layer_from_record, ann_layer_record, read_json, record_matrix, write_json, AnnLayerRecord};
use crate::matrix::Matrix;
use crate::netmodel::{Activation, AnnLayer, AnnNetwork};
use crate::scalar::Real;

pub const CONV_FORMAT: &str = "lso-conv-v1";

/// One convolution layer. `filters` is `(filter_h·filter_w·in_c) × num_filters`
/// with rows ordered `(dh, dw, c)` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvSpec<T> {
    pub in_h: usize,
    pub in_w: usize,
    pub in_c: usize,
    pub filter_h: usize,
    pub filter_w: usize,
    pub num_filters: usize,
    pub stride: usize,
    pub pad: usize,
    pub filters: Matrix<T>,
}

impl<T: Real> ConvSpec<T> {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("in_h", self.in_h),
            ("in_w", self.in_w),
            ("in_c", self.in_c),
            ("filter_h", self.filter_h),
            ("filter_w", self.filter_w),
            ("num_filters", self.num_filters),
            ("stride", self.stride),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(LsoError::Geometry(format!("{name} must be at least 1")));
        }
        for (axis, size, filter) in [("height", self.in_h, self.filter_h), ("width", self.in_w, self.filter_w)] {
            let span = size + 2 * self.pad;
            if filter > span {
                return Err(LsoError::Geometry(format!(
                    "{axis}: filter {filter} larger than padded input {size}+2·{}",
                    self.pad
                )));
            }
            if !(span - filter).is_multiple_of(self.stride) {
                return Err(LsoError::Geometry(format!(
                    "{axis}: ({size} + 2·{} − {filter}) is not divisible by stride {}",
                    self.pad, self.stride
                )));
            }
        }
        let want = (self.filter_h * self.filter_w * self.in_c, self.num_filters);
        if self.filters.shape() != want {
            return Err(LsoError::Geometry(format!(
                "filter matrix is {}x{}, expected {}x{}",
                self.filters.rows(),
                self.filters.cols(),
                want.0,
                want.1
            )));
        }
        Ok(())
    }

    pub fn out_h(&self) -> usize {
        (self.in_h + 2 * self.pad - self.filter_h) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.in_w + 2 * self.pad - self.filter_w) / self.stride + 1
    }

    pub fn in_len(&self) -> usize {
        self.in_h * self.in_w * self.in_c
    }

    pub fn out_len(&self) -> usize {
        self.out_h() * self.out_w() * self.num_filters
    }
}

/// Dense `W` with `x · W` equal to the strided convolution of flattened `x`.
pub fn conv_to_dense<T: Real>(spec: &ConvSpec<T>) -> Result<Matrix<T>> {
    spec.validate()?;
    let (oh_n, ow_n) = (spec.out_h(), spec.out_w());
    let nf = spec.num_filters;
    let mut w = Matrix::zeros(spec.in_len(), spec.out_len());
    for oh in 0..oh_n {
        for ow in 0..ow_n {
            let out_base = (oh * ow_n + ow) * nf;
            for dh in 0..spec.filter_h {
                let Some(ih) = (oh * spec.stride + dh).checked_sub(spec.pad).filter(|&h| h < spec.in_h) else {
                    continue;
                };
                for dw in 0..spec.filter_w {
                    let Some(iw) = (ow * spec.stride + dw).checked_sub(spec.pad).filter(|&v| v < spec.in_w) else {
                        continue;
                    };
                    for c in 0..spec.in_c {
                        let row = (ih * spec.in_w + iw) * spec.in_c + c;
                        let frow = (dh * spec.filter_w + dw) * spec.in_c + c;
                        for f in 0..nf {
                            w.set(row, out_base + f, spec.filters.get(frow, f));
                        }
                    }
                }
            }
        }
    }
    Ok(w)
}

/// Convert a conv stack followed by dense layers into one dense network.
/// Every converted convolution uses ReLU.
pub fn flatten_network<T: Real>(
    conv_layers: &[ConvSpec<T>],
    fc_layers: Vec<AnnLayer<T>>,
) -> Result<AnnNetwork<T>> {
    for (i, pair) in conv_layers.windows(2).enumerate() {
        let (a, b) = (&pair[0], &pair[1]);
        if (a.out_h(), a.out_w(), a.num_filters) != (b.in_h, b.in_w, b.in_c) {
            return Err(LsoError::Geometry(format!(
                "conv layer {i} produces {}x{}x{} but conv layer {} expects {}x{}x{}",
                a.out_h(),
                a.out_w(),
                a.num_filters,
                i + 1,
                b.in_h,
                b.in_w,
                b.in_c
            )));
        }
    }
    let mut layers = Vec::with_capacity(conv_layers.len() + fc_layers.len());
    for (i, spec) in conv_layers.iter().enumerate() {
        let w = conv_to_dense(spec).map_err(|e| match e {
            LsoError::Geometry(msg) => LsoError::Geometry(format!("conv layer {i}: {msg}")),
            other => other.in_layer(i),
        })?;
        layers.push(AnnLayer::new(w, Activation::Relu));
    }
    if let (Some(last), Some(first_fc)) = (conv_layers.last(), fc_layers.first()) {
        if last.out_len() != first_fc.in_dim() {
            return Err(LsoError::Geometry(format!(
                "conv layer {} produces {} values but fc layer 0 expects {}",
                conv_layers.len() - 1,
                last.out_len(),
                first_fc.in_dim()
            )));
        }
    }
    layers.extend(fc_layers);
    AnnNetwork::new(layers)
}

#[derive(Serialize, Deserialize)]
struct ConvLayerRecord {
    filter: [usize; 3],
    num_filters: usize,
    stride: usize,
    #[serde(default)]
    pad: usize,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ConvFile {
    format: String,
    input: [usize; 3],
    layers: Vec<ConvLayerRecord>,
    fc: Vec<AnnLayerRecord>,
}

/// A convolutional network as stored in an `lso-conv-v1` file.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvNetwork<T> {
    pub conv: Vec<ConvSpec<T>>,
    pub fc: Vec<AnnLayer<T>>,
}

impl<T: Real> ConvNetwork<T> {
    pub fn flatten(&self) -> Result<AnnNetwork<T>> {
        flatten_network(&self.conv, self.fc.clone())
    }
}

pub fn load_conv(path: impl AsRef<Path>) -> Result<ConvNetwork<f64>> {
    let path = path.as_ref();
    let file: ConvFile = read_json(path)?;
    if file.format != CONV_FORMAT {
        return Err(LsoError::Parse {
            path: path.to_path_buf(),
            location: None,
            message: format!("format tag \"{}\", expected \"{CONV_FORMAT}\"", file.format),
        });
    }
    let [mut h, mut w, mut c] = file.input;
    let mut conv = Vec::with_capacity(file.layers.len());
    for (i, rec) in file.layers.into_iter().enumerate() {
        let [fh, fw, ic] = rec.filter;
        if ic != c {
            return Err(LsoError::Geometry(format!(
                "conv layer {i}: filter depth {ic} does not match {c} input channels"
            )));
        }
        let filters = record_matrix(path, "weights", i, fh * fw * ic, rec.num_filters, rec.weights)?;
        let spec = ConvSpec {
            in_h: h,
            in_w: w,
            in_c: c,
            filter_h: fh,
            filter_w: fw,
            num_filters: rec.num_filters,
            stride: rec.stride,
            pad: rec.pad,
            filters,
        };
        spec.validate()
            .map_err(|e| LsoError::Geometry(format!("conv layer {i}: {e}")))?;
        (h, w, c) = (spec.out_h(), spec.out_w(), spec.num_filters);
        conv.push(spec);
    }
    let fc = file
        .fc
        .into_iter()
        .enumerate()
        .map(|(i, rec)| ann_layer_from_record(path, i, rec))
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvNetwork { conv, fc })
}

pub fn save_conv(path: impl AsRef<Path>, net: &ConvNetwork<f64>) -> Result<()> {
    let first = net
        .conv
        .first()
        .ok_or_else(|| LsoError::InvalidArgument("conv network has no conv layers".into()))?;
    let file = ConvFile {
        format: CONV_FORMAT.into(),
        input: [first.in_h, first.in_w, first.in_c],
        layers: net
            .conv
            .iter()
            .map(|s| ConvLayerRecord {
                filter: [s.filter_h, s.filter_w, s.in_c],
                num_filters: s.num_filters,
                stride: s.stride,
                pad: s.pad,
                weights: s.filters.as_slice().to_vec(),
            })
            .collect(),
        fc: net.fc.iter().map(ann_layer_record).collect(),
    };
    write_json(path.as_ref(), &file)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(in_hwc: (usize, usize, usize), f: (usize, usize), nf: usize, stride: usize, pad: usize, filters: Matrix<f64>) -> ConvSpec<f64> {
        ConvSpec {
            in_h: in_hwc.0,
            in_w: in_hwc.1,
            in_c: in_hwc.2,
            filter_h: f.0,
            filter_w: f.1,
            num_filters: nf,
            stride,
            pad,
            filters,
        }
    }

    #[test]
    fn one_dimensional_unrolling() {
        let s = spec((1, 4, 1), (1, 2), 1, 2, 0, Matrix::from_rows(&[[1.0], [2.0]]));
        let w = conv_to_dense(&s).unwrap();
        assert_eq!(w, Matrix::from_rows(&[[1.0, 0.0], [2.0, 0.0], [0.0, 1.0], [0.0, 2.0]]));
    }

    #[test]
    fn unit_filter_is_identity() {
        let s = spec((3, 3, 1), (1, 1), 1, 1, 0, Matrix::from_rows(&[[1.0]]));
        assert_eq!(conv_to_dense(&s).unwrap(), Matrix::identity(9));
    }

    #[test]
    fn zero_filters_give_zero_block() {
        let s = spec((4, 4, 2), (2, 2), 3, 2, 0, Matrix::zeros(8, 3));
        let w = conv_to_dense(&s).unwrap();
        assert_eq!(w.shape(), (32, 12));
        assert_eq!(w.zero_fraction(), 1.0);
    }

    #[test]
    fn padding_drops_rows() {
        // 2x2 input, 3x3 filter of ones, pad 1 -> 2x2 output, each the sum of the whole image
        let s = spec((2, 2, 1), (3, 3), 1, 1, 1, Matrix::from_fn(9, 1, |_, _| 1.0));
        let w = conv_to_dense(&s).unwrap();
        assert_eq!(w.shape(), (4, 4));
        assert!(w.as_slice().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn geometry_errors() {
        let bad_stride = spec((5, 5, 1), (2, 2), 1, 2, 0, Matrix::zeros(4, 1));
        let msg = conv_to_dense(&bad_stride).unwrap_err().to_string();
        assert!(msg.contains("stride 2"), "{msg}");
        let too_big = spec((2, 2, 1), (3, 3), 1, 1, 0, Matrix::zeros(9, 1));
        assert!(conv_to_dense(&too_big).is_err());
        let wrong_filters = spec((4, 4, 1), (2, 2), 2, 2, 0, Matrix::zeros(4, 1));
        assert!(conv_to_dense(&wrong_filters).is_err());
    }

    #[test]
    fn chain_break_names_pair() {
        let a = spec((4, 4, 1), (2, 2), 2, 2, 0, Matrix::zeros(4, 2));
        let b = spec((3, 3, 2), (1, 1), 1, 1, 0, Matrix::zeros(2, 1));
        let msg = flatten_network(&[a, b], vec![]).unwrap_err().to_string();
        assert!(msg.contains("conv layer 0") && msg.contains("conv layer 1"), "{msg}");
    }
}
