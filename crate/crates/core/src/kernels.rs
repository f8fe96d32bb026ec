//! Quadrature kernels: the closed-form Fresnel-regularised taps of
//! `k(t) = 1/√(Z h |t|)` and the frequency-domain composition
//! `k(f) β(f) / |g(f)|` that turns a mode into a finished filter.
//!
//! Sign conventions: a filter `h[n]` has response
//! `H(f) = Σ_n h[n] e^{-2πi f n Δt}`. The X kernel (`Θ = 0`) is odd in time
//! with response `-i/√(Zhf)` for `f > 0`; the P kernel (`Θ = π/2`) is even
//! with response `1/√(Zhf)`. Both are scaled by `Δt` relative to the
//! continuum kernel so that `x[n] = Σ_m h[m] v[n-m]` is a dimensionless
//! quadrature with vacuum variance `½`.

use num_complex::Complex64;
use realfft::RealFftPlanner;
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::constants::PLANCK;
use crate::error::{Error, Result};
use crate::modes::ModeSpec;
use crate::special::fresnel;

/// Which quadrature a kernel extracts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quadrature {
    /// `Θ = 0`.
    #[default]
    X,
    /// `Θ = π/2`.
    P,
}

impl Quadrature {
    pub fn theta(self) -> f64 {
        match self {
            Quadrature::X => 0.0,
            Quadrature::P => std::f64::consts::FRAC_PI_2,
        }
    }

    /// Response phase for `f > 0`.
    pub fn phase(self) -> Complex64 {
        match self {
            Quadrature::X => Complex64::new(0.0, -1.0),
            Quadrature::P => Complex64::new(1.0, 0.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub sample_rate: f64,
    /// Odd tap count.
    pub n_taps: usize,
    /// Line impedance in ohms.
    pub impedance: f64,
    pub quadrature: Quadrature,
}

impl KernelConfig {
    pub fn new(sample_rate: f64, n_taps: usize, impedance: f64, quadrature: Quadrature) -> Result<Self> {
        let cfg = KernelConfig {
            sample_rate,
            n_taps,
            impedance,
            quadrature,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_taps % 2 == 0 || self.n_taps == 0 {
            return Err(Error::config(format!("n_taps must be odd, got {}", self.n_taps)));
        }
        if !(self.sample_rate > 0.0) || !(self.impedance > 0.0) {
            return Err(Error::config("sample rate and impedance must be positive"));
        }
        Ok(())
    }

    pub fn nyquist(&self) -> f64 {
        0.5 * self.sample_rate
    }
}

/// Time-domain window applied when truncating a designed response.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    Rect,
    Hann,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComposeOptions {
    /// Length of the design transform; the mode grid must have spacing
    /// `sample_rate / design_len`.
    pub design_len: usize,
    pub window: Window,
    /// Modes may not carry weight below this frequency (Hz).
    pub dc_guard: f64,
}

impl Default for ComposeOptions {
    fn default() -> Self {
        ComposeOptions {
            design_len: 1 << 14,
            window: Window::Rect,
            dc_guard: 100e6,
        }
    }
}

/// A finished real tap array. `taps[center_index]` multiplies the sample
/// aligned with the output.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteKernel {
    taps: Vec<f64>,
    center_index: usize,
    sample_rate: f64,
    impedance: f64,
    quadrature: Quadrature,
    provenance: String,
    retention: f64,
    scale: f64,
    effective_mode: Option<ModeSpec>,
}

impl DiscreteKernel {
    /// Wraps an arbitrary odd-length tap array.
    pub fn from_taps(taps: Vec<f64>, sample_rate: f64, provenance: impl Into<String>) -> Result<Self> {
        if taps.len() % 2 == 0 {
            return Err(Error::config("tap arrays must have odd length"));
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::numerical("non-finite tap"));
        }
        Ok(DiscreteKernel {
            center_index: taps.len() / 2,
            taps,
            sample_rate,
            impedance: f64::NAN,
            quadrature: Quadrature::X,
            provenance: provenance.into(),
            retention: 1.0,
            scale: 1.0,
            effective_mode: None,
        })
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn center_index(&self) -> usize {
        self.center_index
    }

    /// Tap at signed index `n` relative to the centre.
    pub fn tap(&self, n: i64) -> f64 {
        let i = self.center_index as i64 + n;
        if i < 0 || i >= self.taps.len() as i64 {
            0.0
        } else {
            self.taps[i as usize]
        }
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn impedance(&self) -> f64 {
        self.impedance
    }

    pub fn quadrature(&self) -> Quadrature {
        self.quadrature
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    /// Fraction of the untruncated designed filter energy `Σh²` kept by the
    /// window.
    pub fn retention(&self) -> f64 {
        self.retention
    }

    /// Factor applied after truncation to restore unit effective mode norm.
    pub fn normalization(&self) -> f64 {
        self.scale
    }

    /// The normalised mode actually measured by this kernel once the chain
    /// gain modulus is undone.
    pub fn effective_mode(&self) -> Option<&ModeSpec> {
        self.effective_mode.as_ref()
    }

    /// `H(f_k)` on a grid of `len` points, `f_k = k·sample_rate/len`,
    /// `k = 0..=len/2`.
    pub fn response(&self, len: usize) -> Result<Vec<Complex64>> {
        if len < self.taps.len() {
            return Err(Error::config("response grid shorter than the kernel"));
        }
        let mut buf = vec![0.0; len];
        let c = self.center_index as i64;
        for (i, t) in self.taps.iter().enumerate() {
            let n = i as i64 - c;
            buf[n.rem_euclid(len as i64) as usize] = *t;
        }
        let fft = RealFftPlanner::<f64>::new().plan_fft_forward(len);
        let mut out = fft.make_output_vec();
        fft.process(&mut buf, &mut out)
            .map_err(|e| Error::numerical(e.to_string()))?;
        Ok(out)
    }

    /// Writes `index,tap` rows with signed indices.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["index", "tap"])?;
        let c = self.center_index as i64;
        for (i, t) in self.taps.iter().enumerate() {
            wr.write_record([(i as i64 - c).to_string(), format!("{t:.17e}")])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// The closed-form discretised kernel: values of `k(nΔt)` with the pole at
/// `t = 0` regularised by Fresnel integrals of `√(2|n|)`.
pub fn quadrature_kernel(cfg: &KernelConfig) -> Result<DiscreteKernel> {
    cfg.validate()?;
    let pref = 2.0 * (2.0 * cfg.nyquist() / (cfg.impedance * PLANCK)).sqrt();
    let c = (cfg.n_taps / 2) as i64;
    let taps = (-c..=c)
        .map(|n| {
            if n == 0 {
                return match cfg.quadrature {
                    Quadrature::X => 0.0,
                    Quadrature::P => pref * std::f64::consts::SQRT_2,
                };
            }
            let an = n.unsigned_abs() as f64;
            let (cf, sf) = fresnel((2.0 * an).sqrt());
            match cfg.quadrature {
                Quadrature::X => pref * (n.signum() as f64) * sf / an.sqrt(),
                Quadrature::P => pref * cf / an.sqrt(),
            }
        })
        .collect();
    Ok(DiscreteKernel {
        center_index: c as usize,
        taps,
        sample_rate: cfg.sample_rate,
        impedance: cfg.impedance,
        quadrature: cfg.quadrature,
        provenance: format!("closed-form {:?} kernel, {} taps", cfg.quadrature, cfg.n_taps),
        retention: 1.0,
        scale: 1.0,
        effective_mode: None,
    })
}

/// Designs `k(f) β(f) / |g(f)|` on the mode grid, inverse transforms it,
/// truncates it to the tap count of `quad` and rescales so the effective mode
/// (`H |g| √(Zhf)`) has unit norm.
///
/// `gain` holds `|g(f_k)|` on the same bins as `mode`.
pub fn compose(mode: &ModeSpec, quad: &DiscreteKernel, gain: &[f64], opts: &ComposeOptions) -> Result<DiscreteKernel> {
    let len = opts.design_len;
    let fs = quad.sample_rate;
    let z = quad.impedance;
    if !(z > 0.0) {
        return Err(Error::config("compose needs a quadrature kernel with an impedance"));
    }
    if len % 2 != 0 || mode.n_bins() != len / 2 + 1 {
        return Err(Error::mismatch(format!(
            "mode has {} bins, design length {} needs {}",
            mode.n_bins(),
            len,
            len / 2 + 1
        )));
    }
    let df = fs / len as f64;
    if (mode.grid_spacing() - df).abs() > 1e-9 * df {
        return Err(Error::mismatch(format!(
            "mode grid spacing {} Hz differs from design spacing {} Hz",
            mode.grid_spacing(),
            df
        )));
    }
    if gain.len() != mode.n_bins() {
        return Err(Error::mismatch("gain curve and mode have different bin counts"));
    }
    let n_taps = quad.len();
    if n_taps > len {
        return Err(Error::config("kernel longer than the design transform"));
    }

    let phase = quad.quadrature.phase();
    let nyq = len / 2;
    let mut spec = vec![Complex64::new(0.0, 0.0); nyq + 1];
    for (k, b) in mode.values().iter().enumerate() {
        if b.norm_sqr() == 0.0 {
            continue;
        }
        let f = k as f64 * df;
        if f < opts.dc_guard {
            return Err(Error::config(format!(
                "mode '{}' has weight at {:.3e} Hz, inside the {:.3e} Hz dc guard",
                mode.label(),
                f,
                opts.dc_guard
            )));
        }
        if k == nyq {
            return Err(Error::config("mode has weight at the Nyquist bin"));
        }
        if !(gain[k] > 0.0) || !gain[k].is_finite() {
            return Err(Error::config(format!(
                "gain vanishes at {:.3e} Hz inside the support of mode '{}'",
                f,
                mode.label()
            )));
        }
        spec[k] = phase * b / ((z * PLANCK * f).sqrt() * gain[k]);
    }

    let inv = RealFftPlanner::<f64>::new().plan_fft_inverse(len);
    let mut full = inv.make_output_vec();
    inv.process(&mut spec, &mut full)
        .map_err(|e| Error::numerical(e.to_string()))?;
    let inv_len = 1.0 / len as f64;
    full.iter_mut().for_each(|v| *v *= inv_len);

    let c = (n_taps / 2) as i64;
    let total: f64 = full.iter().map(|v| v * v).sum();
    let mut taps: Vec<f64> = (-c..=c)
        .map(|n| {
            let w = match opts.window {
                Window::Rect => 1.0,
                Window::Hann => {
                    0.5 * (1.0 + (std::f64::consts::TAU * n as f64 / (n_taps + 1) as f64).cos())
                }
            };
            w * full[n.rem_euclid(len as i64) as usize]
        })
        .collect();
    let kept: f64 = taps.iter().map(|v| v * v).sum();
    if !(total > 0.0) {
        return Err(Error::numerical("designed filter is identically zero"));
    }

    let mut kernel = DiscreteKernel {
        center_index: c as usize,
        taps: taps.clone(),
        sample_rate: fs,
        impedance: z,
        quadrature: quad.quadrature,
        provenance: format!(
            "{:?} kernel for '{}', {} taps, {:?} window, design length {}",
            quad.quadrature,
            mode.label(),
            n_taps,
            opts.window,
            len
        ),
        retention: kept / total,
        scale: 1.0,
        effective_mode: None,
    };

    let resp = kernel.response(len)?;
    let eff: Vec<Complex64> = resp
        .iter()
        .enumerate()
        .map(|(k, h)| {
            if k == 0 {
                return Complex64::new(0.0, 0.0);
            }
            let f = k as f64 * df;
            h * gain[k] * (z * PLANCK * f).sqrt() / phase
        })
        .collect();
    let norm: f64 = eff.iter().map(|v| v.norm_sqr()).sum::<f64>() * df;
    if !(norm > 0.0) {
        return Err(Error::numerical("truncated kernel has no in-band response"));
    }
    let scale = 1.0 / norm.sqrt();
    taps.iter_mut().for_each(|t| *t *= scale);
    kernel.taps = taps;
    kernel.scale = scale;
    kernel.effective_mode = Some(
        ModeSpec::from_values(format!("effective {}", mode.label()), df, eff)?,
    );
    Ok(kernel)
}

/// Closed-form kernel for `quadrature` composed with `mode`; the sample rate
/// follows from the mode grid and the design length.
pub fn design_kernel(
    mode: &ModeSpec,
    quadrature: Quadrature,
    n_taps: usize,
    impedance: f64,
    gain: &[f64],
    opts: &ComposeOptions,
) -> Result<DiscreteKernel> {
    let fs = mode.grid_spacing() * opts.design_len as f64;
    let quad = quadrature_kernel(&KernelConfig::new(fs, n_taps, impedance, quadrature)?)?;
    compose(mode, &quad, gain, opts)
}
