//! Fourier spectrum analysis of token feature maps.
//!
//! Per channel, the rows x cols map is 2-D Fourier transformed; amplitudes
//! are binned by normalized radial frequency (r = 1 at the half-diagonal,
//! i.e. the Nyquist corner). The reported value per layer is
//!
//! ```text
//! delta = ln(mean amplitude, r in [0.9, 1.0] + eps)
//!       - ln(mean amplitude, r in [0.0, 0.1] + eps)
//! ```
//!
//! averaged over channels. Values near 0 mean strong retention of
//! high-frequency content; strongly negative values mean the energy sits in
//! low frequencies.

use ndarray::Array2;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{TensorFile, TensorKind};

/// Per-layer token features on a spatial grid; the class token, when
/// present in the source tensor, is dropped at construction.
#[derive(Debug, Clone)]
pub struct FeatureMap {
    pub layers: usize,
    pub rows: usize,
    pub cols: usize,
    pub channels: usize,
    /// One `(rows*cols) x channels` matrix per layer.
    pub maps: Vec<Array2<f64>>,
}

impl FeatureMap {
    pub fn new(rows: usize, cols: usize, channels: usize, maps: Vec<Array2<f64>>) -> Result<Self> {
        if rows == 0 || cols == 0 || channels == 0 || maps.is_empty() {
            return Err(Error::InvalidInput("feature map dims must be >= 1".into()));
        }
        for (l, m) in maps.iter().enumerate() {
            if m.nrows() != rows * cols || m.ncols() != channels {
                return Err(Error::DimMismatch(format!(
                    "layer {l} map is {}x{}, expected {}x{channels}",
                    m.nrows(),
                    m.ncols(),
                    rows * cols
                )));
            }
        }
        Ok(Self { layers: maps.len(), rows, cols, channels, maps })
    }

    /// Decode a features [`TensorFile`], dropping the class token row.
    pub fn from_tensor_file(t: &TensorFile) -> Result<Self> {
        if t.header.kind != TensorKind::Features {
            return Err(Error::Format("tensor file does not hold feature maps".into()));
        }
        let n = t.header.tokens();
        let c = t.header.channels;
        let skip = usize::from(t.header.class_token);
        let maps = (0..t.header.layers)
            .map(|l| {
                let full =
                    Array2::from_shape_vec((n, c), t.data[l * n * c..(l + 1) * n * c].to_vec())
                        .map_err(|e| Error::Format(e.to_string()))?;
                Ok(full.slice(ndarray::s![skip.., ..]).to_owned())
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(t.header.rows, t.header.cols, c, maps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumConfig {
    /// Upper edge of the low-frequency band.
    pub low_cut: f64,
    /// Lower edge of the high-frequency band.
    pub high_cut: f64,
    pub epsilon: f64,
    /// Report log base 10 instead of natural log.
    pub log10: bool,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self { low_cut: 0.1, high_cut: 0.9, epsilon: 1e-12, log10: false }
    }
}

/// 2-D FFT amplitudes of one rows x cols real map.
fn fft2_amplitudes(map: &[f64], rows: usize, cols: usize, planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let mut buf: Vec<Complex<f64>> = map.iter().map(|&v| Complex::new(v, 0.0)).collect();
    let fft_cols = planner.plan_fft_forward(cols);
    for r in 0..rows {
        fft_cols.process(&mut buf[r * cols..(r + 1) * cols]);
    }
    let fft_rows = planner.plan_fft_forward(rows);
    let mut col = vec![Complex::new(0.0, 0.0); rows];
    for c in 0..cols {
        for r in 0..rows {
            col[r] = buf[r * cols + c];
        }
        fft_rows.process(&mut col);
        for r in 0..rows {
            buf[r * cols + c] = col[r];
        }
    }
    buf.into_iter().map(|z| z.norm()).collect()
}

/// Normalized radial frequency per spectrum cell: 0 at DC, 1 at the
/// half-diagonal (Nyquist corner).
fn radial_frequencies(rows: usize, cols: usize) -> Vec<f64> {
    let half = (((rows / 2) * (rows / 2) + (cols / 2) * (cols / 2)) as f64).sqrt();
    let mut out = Vec::with_capacity(rows * cols);
    for kr in 0..rows {
        let fr = kr.min(rows - kr) as f64;
        for kc in 0..cols {
            let fc = kc.min(cols - kc) as f64;
            out.push((fr * fr + fc * fc).sqrt() / half);
        }
    }
    out
}

/// Per-layer delta log amplitude, averaged over channels.
pub fn delta_log_amplitude(fmap: &FeatureMap, cfg: &SpectrumConfig) -> Result<Vec<(usize, f64)>> {
    if fmap.rows < 2 || fmap.cols < 2 {
        return Err(Error::InvalidInput(format!(
            "spectrum needs a grid of at least 2x2, got {}x{}",
            fmap.rows, fmap.cols
        )));
    }
    if !(cfg.low_cut > 0.0 && cfg.low_cut < cfg.high_cut && cfg.high_cut <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "bad spectrum bands: low_cut {} high_cut {}",
            cfg.low_cut, cfg.high_cut
        )));
    }
    let radial = radial_frequencies(fmap.rows, fmap.cols);
    let low_idx: Vec<usize> =
        (0..radial.len()).filter(|&i| radial[i] <= cfg.low_cut).collect();
    let high_idx: Vec<usize> =
        (0..radial.len()).filter(|&i| radial[i] >= cfg.high_cut).collect();

    let values: Vec<(usize, f64)> = (0..fmap.layers)
        .into_par_iter()
        .map(|l| {
            let mut planner = FftPlanner::new();
            let m = &fmap.maps[l];
            let mut delta_sum = 0.0;
            for ch in 0..fmap.channels {
                let map: Vec<f64> = m.column(ch).to_vec();
                let amps = fft2_amplitudes(&map, fmap.rows, fmap.cols, &mut planner);
                let low =
                    low_idx.iter().map(|&i| amps[i]).sum::<f64>() / low_idx.len() as f64;
                let high =
                    high_idx.iter().map(|&i| amps[i]).sum::<f64>() / high_idx.len() as f64;
                let mut delta = (high + cfg.epsilon).ln() - (low + cfg.epsilon).ln();
                if cfg.log10 {
                    delta /= std::f64::consts::LN_10;
                }
                delta_sum += delta;
            }
            (l, delta_sum / fmap.channels as f64)
        })
        .collect();
    Ok(values)
}
