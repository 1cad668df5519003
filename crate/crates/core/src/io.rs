//! On-disk arrays: raw little-endian f32 plus a JSON sidecar at
//! `<path>.json` describing shape, kind and geometry.
//!
//! Values are narrowed to f32 on write, so `write(read(file))` reproduces
//! the file byte for byte. Sidecars carry no timestamps.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, Sinogram, ValueRange};
use crate::operators::{IdentityOperator, MeasurementOperator, RadonOperator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Image,
    Sinogram,
}

/// Which operator produced a sinogram.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorKind {
    Radon,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    /// `[rows, cols]`: `[height, width]` for images, `[angles, detectors]`
    /// for sinograms.
    pub shape: [usize; 2],
    pub kind: Kind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub angles: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<ValueRange>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operator: Option<OperatorKind>,
    /// `[height, width]` of the image a sinogram was measured from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_shape: Option<[usize; 2]>,
}

/// Measurement geometry stored alongside a sinogram.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Geometry {
    pub operator: OperatorKind,
    /// `(height, width)`.
    pub image_shape: (usize, usize),
}

impl Geometry {
    /// Rebuilds the operator that produced `sinogram`.
    pub fn build(&self, sinogram: &Sinogram) -> Result<Box<dyn MeasurementOperator>> {
        let (h, w) = self.image_shape;
        match self.operator {
            OperatorKind::Identity => {
                if sinogram.shape() != (h, w) {
                    return Err(Error::shape(format!("{h}x{w}"), format!("{:?}", sinogram.shape())));
                }
                Ok(Box::new(IdentityOperator::new(h, w)))
            }
            OperatorKind::Radon => {
                if h != w {
                    return Err(Error::Parameter(format!(
                        "radon geometry needs a square image, got {h}x{w}"
                    )));
                }
                Ok(Box::new(RadonOperator::with_angles(
                    h,
                    sinogram.angles().to_vec(),
                    sinogram.n_detectors(),
                )?))
            }
        }
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn format_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.display().to_string(),
        message: message.into(),
    }
}

pub fn encode_f32(values: &[f64]) -> Vec<u8> {
    values
        .iter()
        .flat_map(|&v| (v as f32).to_le_bytes())
        .collect()
}

pub fn decode_f32(bytes: &[u8]) -> Option<Vec<f64>> {
    if bytes.len() % 4 != 0 {
        return None;
    }
    Some(
        bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
    )
}

fn write_pair(path: &Path, values: &[f64], sidecar: &Sidecar) -> Result<()> {
    fs::write(path, encode_f32(values)).map_err(|e| io_err(path, e))?;
    let side = sidecar_path(path);
    let mut json = serde_json::to_string_pretty(sidecar).expect("sidecar serializes");
    json.push('\n');
    fs::write(&side, json).map_err(|e| io_err(&side, e))
}

fn read_pair(path: &Path) -> Result<(Vec<f64>, Sidecar)> {
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| io_err(&side, e))?;
    let sidecar: Sidecar =
        serde_json::from_str(&text).map_err(|e| format_err(&side, e.to_string()))?;
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let values =
        decode_f32(&bytes).ok_or_else(|| format_err(path, "length is not a multiple of 4 bytes"))?;
    let [rows, cols] = sidecar.shape;
    if values.len() != rows * cols {
        return Err(format_err(
            path,
            format!("sidecar shape {rows}x{cols} needs {} values, file has {}", rows * cols, values.len()),
        ));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(format_err(path, format!("non-finite value {v}")));
    }
    Ok((values, sidecar))
}

pub fn write_image(path: &Path, image: &Image) -> Result<()> {
    let sidecar = Sidecar {
        shape: [image.height(), image.width()],
        kind: Kind::Image,
        angles: Vec::new(),
        range: Some(image.range()),
        operator: None,
        image_shape: None,
    };
    write_pair(path, image.pixels(), &sidecar)
}

pub fn read_image(path: &Path) -> Result<Image> {
    let (values, sidecar) = read_pair(path)?;
    if sidecar.kind != Kind::Image {
        return Err(format_err(path, "expected an image, found a sinogram"));
    }
    let [h, w] = sidecar.shape;
    let img = Image::new(w, h, values).map_err(|e| format_err(path, e.to_string()))?;
    Ok(img.with_range(sidecar.range.unwrap_or(ValueRange::Unit)))
}

pub fn write_sinogram(path: &Path, sinogram: &Sinogram, geometry: &Geometry) -> Result<()> {
    let (h, w) = geometry.image_shape;
    let sidecar = Sidecar {
        shape: [sinogram.n_angles(), sinogram.n_detectors()],
        kind: Kind::Sinogram,
        angles: sinogram.angles().to_vec(),
        range: None,
        operator: Some(geometry.operator),
        image_shape: Some([h, w]),
    };
    write_pair(path, sinogram.values(), &sidecar)
}

pub fn read_sinogram(path: &Path) -> Result<(Sinogram, Geometry)> {
    let (values, sidecar) = read_pair(path)?;
    if sidecar.kind != Kind::Sinogram {
        return Err(format_err(path, "expected a sinogram, found an image"));
    }
    let [rows, cols] = sidecar.shape;
    let sino = Sinogram::new(rows, cols, values, sidecar.angles)
        .map_err(|e| format_err(path, e.to_string()))?;
    let operator = sidecar.operator.unwrap_or(OperatorKind::Radon);
    let image_shape = match sidecar.image_shape {
        Some([h, w]) => (h, w),
        None if operator == OperatorKind::Identity => (rows, cols),
        None => return Err(format_err(path, "radon sinogram without image_shape")),
    };
    Ok((
        sino,
        Geometry {
            operator,
            image_shape,
        },
    ))
}
