//! Photonic modes: normalised frequency-domain wavelets `β(f)` defined on
//! the positive-frequency bins of a design grid.
//!
//! Every bin `k` stands for the cell `[f_k - Δf/2, f_k + Δf/2]`. Flat
//! sub-bands weight each bin by the fraction of its cell that lies inside
//! the band, which keeps widths exact and mirror pairs `f ↔ f_p - f`
//! symmetric when the band edges fall on bin centres.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

const NORM_TOL: f64 = 1e-9;

/// Frequency grid shared by modes, kernels and spectral states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeGrid {
    pub sample_rate: f64,
    /// Length of the real transform the grid is derived from.
    pub design_len: usize,
    /// Analysis band `[f_min, f_max]` in Hz.
    pub band: (f64, f64),
}

impl ModeGrid {
    pub fn new(sample_rate: f64, design_len: usize, f_min: f64, f_max: f64) -> Result<Self> {
        if !(sample_rate > 0.0) {
            return Err(Error::config("sample rate must be positive"));
        }
        if design_len < 4 || design_len % 2 != 0 {
            return Err(Error::config("design length must be even and >= 4"));
        }
        if !(f_min >= 0.0 && f_max > f_min && f_max <= sample_rate / 2.0) {
            return Err(Error::config(format!(
                "analysis band [{f_min}, {f_max}] must lie inside [0, {}]",
                sample_rate / 2.0
            )));
        }
        Ok(ModeGrid {
            sample_rate,
            design_len,
            band: (f_min, f_max),
        })
    }

    pub fn spacing(&self) -> f64 {
        self.sample_rate / self.design_len as f64
    }

    /// Number of bins from dc to Nyquist inclusive.
    pub fn n_bins(&self) -> usize {
        self.design_len / 2 + 1
    }

    pub fn frequency(&self, k: usize) -> f64 {
        k as f64 * self.spacing()
    }

    fn check_band(&self, lo: f64, hi: f64) -> Result<()> {
        let slack = 1e-9 * self.spacing();
        if lo < self.band.0 - slack || hi > self.band.1 + slack {
            return Err(Error::config(format!(
                "band [{:.6e}, {:.6e}] Hz leaves the analysis band [{:.6e}, {:.6e}] Hz",
                lo, hi, self.band.0, self.band.1
            )));
        }
        Ok(())
    }

    /// Fraction of bin `k`'s cell covered by `[lo, hi]`.
    fn cell_weight(&self, k: usize, lo: f64, hi: f64) -> f64 {
        let df = self.spacing();
        let f = self.frequency(k);
        let a = lo.max(f - 0.5 * df);
        let b = hi.min(f + 0.5 * df);
        ((b - a) / df).clamp(0.0, 1.0)
    }
}

/// Spectral shape of a narrow sub-band.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubBandShape {
    #[default]
    Rect,
    RaisedCosine,
}

/// A normalised mode `β(f)`, sampled on positive-frequency bins.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeSpec {
    label: String,
    grid_spacing: f64,
    values: Vec<Complex64>,
}

impl ModeSpec {
    /// Builds a mode from raw bin values and normalises it.
    pub fn from_values(label: impl Into<String>, grid_spacing: f64, values: Vec<Complex64>) -> Result<Self> {
        if !(grid_spacing > 0.0) {
            return Err(Error::config("grid spacing must be positive"));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::config("mode values must be finite"));
        }
        let mut mode = ModeSpec {
            label: label.into(),
            grid_spacing,
            values,
        };
        let norm = mode.norm();
        if norm <= 0.0 {
            return Err(Error::config(format!("mode '{}' has no support on the grid", mode.label)));
        }
        let scale = 1.0 / norm.sqrt();
        mode.values.iter_mut().for_each(|v| *v *= scale);
        Ok(mode)
    }

    /// Narrow mode centred on `f0` with total width `bandwidth`.
    pub fn monochromatic(grid: &ModeGrid, f0: f64, bandwidth: f64, shape: SubBandShape) -> Result<Self> {
        if !(bandwidth >= grid.spacing() * (1.0 - 1e-12)) {
            return Err(Error::config(format!(
                "bandwidth {bandwidth:.4e} Hz is below the grid spacing {:.4e} Hz",
                grid.spacing()
            )));
        }
        let lo = f0 - 0.5 * bandwidth;
        let hi = f0 + 0.5 * bandwidth;
        if !(lo > 0.0) {
            return Err(Error::config("monochromatic band must stay above dc"));
        }
        grid.check_band(lo, hi)?;
        let values = (0..grid.n_bins())
            .map(|k| {
                let w = grid.cell_weight(k, lo, hi);
                let amp = match shape {
                    SubBandShape::Rect => w.sqrt(),
                    SubBandShape::RaisedCosine => {
                        let x = (grid.frequency(k) - f0) / bandwidth;
                        if x.abs() < 0.5 {
                            0.5 * (1.0 + (2.0 * PI * x).cos())
                        } else {
                            0.0
                        }
                    }
                };
                Complex64::new(amp, 0.0)
            })
            .collect();
        let label = format!("mono {:.4} GHz/{:.0} MHz", f0 * 1e-9, bandwidth * 1e-6);
        ModeSpec::from_values(label, grid.spacing(), values)
    }

    /// `√(1-λ) β₁ + e^{iφ} √λ β₂` with `β₁,₂` rectangular sub-bands at `f1`, `f2`.
    pub fn bichromatic(
        grid: &ModeGrid,
        f1: f64,
        f2: f64,
        bandwidth: f64,
        lambda: f64,
        rel_phase: f64,
    ) -> Result<Self> {
        if (f2 - f1).abs() <= bandwidth {
            return Err(Error::config(format!(
                "sub-bands at {:.4e} and {:.4e} Hz overlap for width {:.4e} Hz",
                f1, f2, bandwidth
            )));
        }
        let a = ModeSpec::monochromatic(grid, f1, bandwidth, SubBandShape::Rect)?;
        let b = ModeSpec::monochromatic(grid, f2, bandwidth, SubBandShape::Rect)?;
        let mut mode = ModeSpec::combine(&a, &b, lambda, rel_phase)?;
        mode.label = format!(
            "bichromatic {:.4}&{:.4} GHz/{:.0} MHz λ={:.3}",
            f1 * 1e-9,
            f2 * 1e-9,
            bandwidth * 1e-6,
            lambda
        );
        Ok(mode)
    }

    /// Flat mode `|β|² = 1/(f_hi - f_lo)` on `[f_lo, f_hi]`.
    pub fn wideband(grid: &ModeGrid, f_lo: f64, f_hi: f64) -> Result<Self> {
        if !(f_hi > f_lo && f_lo > 0.0) {
            return Err(Error::config(format!("invalid wideband bounds [{f_lo}, {f_hi}]")));
        }
        grid.check_band(f_lo, f_hi)?;
        let values = (0..grid.n_bins())
            .map(|k| Complex64::new(grid.cell_weight(k, f_lo, f_hi).sqrt(), 0.0))
            .collect();
        let label = format!("wideband {:.4}-{:.4} GHz", f_lo * 1e-9, f_hi * 1e-9);
        ModeSpec::from_values(label, grid.spacing(), values)
    }

    /// Weighted superposition of two orthogonal modes.
    pub fn combine(a: &ModeSpec, b: &ModeSpec, lambda: f64, rel_phase: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::config(format!("lambda {lambda} outside [0, 1]")));
        }
        let ov = a.overlap(b)?;
        if ov.norm() > 1e-9 {
            return Err(Error::config(format!(
                "modes '{}' and '{}' are not orthogonal (overlap {:.3e})",
                a.label,
                b.label,
                ov.norm()
            )));
        }
        let wa = (1.0 - lambda).sqrt();
        let wb = Complex64::from_polar(lambda.sqrt(), rel_phase);
        let values = a
            .values
            .iter()
            .zip(&b.values)
            .map(|(x, y)| x * wa + y * wb)
            .collect();
        ModeSpec::from_values(format!("{} + {}", a.label, b.label), a.grid_spacing, values)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn grid_spacing(&self) -> f64 {
        self.grid_spacing
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn n_bins(&self) -> usize {
        self.values.len()
    }

    pub fn frequency(&self, k: usize) -> f64 {
        k as f64 * self.grid_spacing
    }

    /// `Σ |β|² Δf`.
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid_spacing
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm() - 1.0).abs() < NORM_TOL
    }

    /// Lowest and highest bins carrying weight.
    pub fn support(&self) -> Option<(usize, usize)> {
        let first = self.values.iter().position(|v| v.norm_sqr() > 0.0)?;
        let last = self.values.iter().rposition(|v| v.norm_sqr() > 0.0)?;
        Some((first, last))
    }

    /// Integrated `|β|²` bandwidth, `1 / Σ|β|⁴Δf` in Hz.
    pub fn effective_bandwidth(&self) -> f64 {
        let s4: f64 = self.values.iter().map(|v| v.norm_sqr().powi(2)).sum::<f64>() * self.grid_spacing;
        1.0 / s4
    }

    fn same_grid(&self, other: &ModeSpec) -> Result<()> {
        if self.values.len() != other.values.len()
            || (self.grid_spacing - other.grid_spacing).abs() > 1e-12 * self.grid_spacing
        {
            return Err(Error::mismatch(format!(
                "modes '{}' and '{}' live on different grids",
                self.label, other.label
            )));
        }
        Ok(())
    }

    /// `Σ a*(f) b(f) Δf`.
    pub fn overlap(&self, other: &ModeSpec) -> Result<Complex64> {
        self.same_grid(other)?;
        let s: Complex64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.conj() * b)
            .sum();
        Ok(s * self.grid_spacing)
    }

    /// L2 distance `(Σ|a-b|²Δf)^{1/2}`.
    pub fn distance(&self, other: &ModeSpec) -> Result<f64> {
        self.same_grid(other)?;
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        Ok((s * self.grid_spacing).sqrt())
    }

    /// Complex time-domain wavelet `β(t_n) = Σ_k β_k e^{-2πi f_k t_n} Δf` on
    /// the design grid's time axis, `t_n = n / (L Δf)`.
    pub fn time_domain(&self) -> Vec<Complex64> {
        let len = 2 * (self.values.len() - 1);
        let mut buf = vec![Complex64::new(0.0, 0.0); len];
        for (k, v) in self.values.iter().enumerate() {
            buf[k] = v * self.grid_spacing;
        }
        FftPlanner::new().plan_fft_forward(len).process(&mut buf);
        buf
    }

    /// `Σ |β(t)|² Δt` of [`ModeSpec::time_domain`].
    pub fn time_domain_energy(&self) -> f64 {
        let td = self.time_domain();
        let dt = 1.0 / (td.len() as f64 * self.grid_spacing);
        td.iter().map(|v| v.norm_sqr()).sum::<f64>() * dt
    }

    /// Structured text form (TOML) with the contiguous support only.
    pub fn to_text(&self) -> Result<String> {
        let (first, last) = self.support().unwrap_or((0, 0));
        let slice = &self.values[first..=last];
        let text = ModeText {
            label: self.label.clone(),
            grid_spacing: self.grid_spacing,
            n_bins: self.values.len(),
            first_bin: first,
            re: slice.iter().map(|v| v.re).collect(),
            im: slice.iter().map(|v| v.im).collect(),
        };
        Ok(toml::to_string(&text)?)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let t: ModeText = toml::from_str(text)?;
        if t.re.len() != t.im.len() || t.first_bin + t.re.len() > t.n_bins {
            return Err(Error::format("mode bin list inconsistent with n_bins"));
        }
        let mut values = vec![Complex64::new(0.0, 0.0); t.n_bins];
        for (i, (re, im)) in t.re.iter().zip(&t.im).enumerate() {
            values[t.first_bin + i] = Complex64::new(*re, *im);
        }
        ModeSpec::from_values(t.label, t.grid_spacing, values)
    }
}

#[derive(Serialize, Deserialize)]
struct ModeText {
    label: String,
    grid_spacing: f64,
    n_bins: usize,
    first_bin: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}
