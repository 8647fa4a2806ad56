use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{encode, encode_batch, Activation, AutoencoderParams, DenseLayer};
use super::train::{train, TrainConfig};
use crate::container::{Tensor, TensorFile};
use crate::error::{Error, Result};
use crate::numeric::{Matrix, Rng};

pub const AENC_KIND: [u8; 4] = *b"AENC";

/// Per-feature min-max scaling to `[0, 1]`; constant features map to 0.5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows.first().ok_or(Error::EmptyInput("scaler fit"))?;
        let mut min = first.clone();
        let mut max = first.clone();
        for r in rows {
            if r.len() != min.len() {
                return Err(Error::dims("feature vector", min.len(), r.len()));
            }
            for (j, &v) in r.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!("feature {j}")));
                }
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        Ok(Self { min, max })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// Scales and clamps into `[0, 1]`.
    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::dims("feature vector", self.dim(), x.len()));
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("feature {i} is {}", x[i])));
        }
        Ok(x.iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(&v, (&lo, &hi))| {
                let range = hi - lo;
                if range > 0.0 {
                    ((v - lo) / range).clamp(0.0, 1.0)
                } else {
                    0.5
                }
            })
            .collect())
    }
}

/// Trained network plus the input scaler it was trained behind.
#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder {
    pub params: AutoencoderParams,
    pub scaler: MinMaxScaler,
}

impl Autoencoder {
    /// Fits the scaler, initializes from `config.seed` and trains.
    pub fn fit(raw: &[Vec<f64>], config: &TrainConfig) -> Result<(Self, Vec<f64>)> {
        config.validate()?;
        let scaler = MinMaxScaler::fit(raw)?;
        if config.layer_sizes.first() != Some(&scaler.dim()) {
            return Err(Error::dims(
                "autoencoder input width",
                config.layer_sizes.first().copied().unwrap_or(0),
                scaler.dim(),
            ));
        }
        let scaled = raw
            .iter()
            .map(|r| scaler.transform(r))
            .collect::<Result<Vec<_>>>()?;
        let mut params = AutoencoderParams::initialized(&config.layer_sizes, &mut Rng::new(config.seed).child(0))?;
        let trace = train(&scaled, &mut params, config)?;
        Ok((Self { params, scaler }, trace))
    }

    pub fn input_dim(&self) -> usize {
        self.params.input_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.params.latent_dim()
    }

    pub fn scale(&self, raw: &[f64]) -> Result<Vec<f64>> {
        self.scaler.transform(raw)
    }

    pub fn encode_raw(&self, raw: &[f64]) -> Result<Vec<f64>> {
        encode(&self.scale(raw)?, &self.params)
    }

    pub fn encode_all(&self, raw: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let scaled = raw.iter().map(|r| self.scale(r)).collect::<Result<Vec<_>>>()?;
        if scaled.is_empty() {
            return Ok(Vec::new());
        }
        let m = Matrix::from_rows(&scaled)?;
        let z = encode_batch(&m, &self.params)?;
        Ok((0..z.rows()).map(|i| z.row(i).to_vec()).collect())
    }

    pub fn to_tensor_file(&self) -> TensorFile {
        let mut f = TensorFile::new(AENC_KIND);
        let sizes = self.params.layer_sizes();
        f.set_int("num_sizes", sizes.len() as i64);
        for (i, s) in sizes.iter().enumerate() {
            f.set_int(&format!("size.{i}"), *s as i64);
        }
        let push = |f: &mut TensorFile, p: String, l: &DenseLayer| {
            f.push(Tensor::new(
                format!("{p}.weight"),
                vec![l.weight.rows(), l.weight.cols()],
                l.weight.data().to_vec(),
            ));
            f.push(Tensor::new(format!("{p}.bias"), vec![l.bias.len()], l.bias.clone()));
        };
        for (i, l) in self.params.encoder.iter().enumerate() {
            push(&mut f, format!("encoder.{i}"), l);
        }
        for (i, l) in self.params.decoder.iter().enumerate() {
            push(&mut f, format!("decoder.{i}"), l);
        }
        f.push(Tensor::new("scaler.min", vec![self.scaler.dim()], self.scaler.min.clone()));
        f.push(Tensor::new("scaler.max", vec![self.scaler.dim()], self.scaler.max.clone()));
        f
    }

    pub fn from_tensor_file(f: &TensorFile) -> Result<Self> {
        if f.kind != AENC_KIND {
            return Err(Error::Format(format!(
                "expected an autoencoder container, found kind {:?}",
                String::from_utf8_lossy(&f.kind)
            )));
        }
        let count = f.usize("num_sizes")?;
        let sizes = (0..count)
            .map(|i| f.usize(&format!("size.{i}")))
            .collect::<Result<Vec<_>>>()?;
        let mut params = AutoencoderParams::zeros(&sizes)
            .map_err(|e| Error::Format(format!("model header: {e}")))?;
        let load = |p: String, l: &mut DenseLayer| -> Result<()> {
            let (r, c) = l.weight.shape();
            let w = f.expect(&format!("{p}.weight"), &[r, c])?;
            l.weight.data_mut().copy_from_slice(&w.data);
            l.bias = f.expect(&format!("{p}.bias"), &[c])?.data.clone();
            Ok(())
        };
        for (i, l) in params.encoder.iter_mut().enumerate() {
            load(format!("encoder.{i}"), l)?;
        }
        for (i, l) in params.decoder.iter_mut().enumerate() {
            load(format!("decoder.{i}"), l)?;
        }
        let d = sizes[0];
        let scaler = MinMaxScaler {
            min: f.expect("scaler.min", &[d])?.data.clone(),
            max: f.expect("scaler.max", &[d])?.data.clone(),
        };
        if !params.is_finite() {
            return Err(Error::NonFinite("autoencoder parameters".into()));
        }
        debug_assert!(params.encoder.last().map(|l| l.activation) == Some(Activation::Sigmoid));
        Ok(Self { params, scaler })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_tensor_file().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_tensor_file(&TensorFile::load(path)?)
    }
}
