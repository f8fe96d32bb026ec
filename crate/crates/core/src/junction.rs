//! Photoassisted noise of an ac+dc biased tunnel junction.
//!
//! Conventions: the symmetrised current noise density is
//! `S2(f, V) = s(eV + hf) + s(eV - hf)` with `s(E) = E coth(E/2kT) / 2R`,
//! and occupancy is `n̄ = S2 R / (2hf) - ½`, which is Bose-Einstein in
//! equilibrium. The pair correlator between `f` and `f₂ = f_p - f` is
//!
//! `X(f) = Σ_m J_m(z) [J_{m-1}(z) s(eV_m - hf₂) + J_{m+1}(z) s(eV_m + hf₂)]`
//!
//! with `V_m = V_dc + m h f_p / e`, and `m̄ = X R / (2h √(f f₂))`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::constants::{BOLTZMANN, ELEMENTARY_CHARGE, PLANCK};
use crate::error::{Error, Result};
use crate::modes::ModeSpec;
use crate::special::{bessel_j_orders, x_coth_x};

/// Occupancies below this are rounding noise of `S2 R / 2hf - ½`.
pub const OCCUPANCY_FLOOR: f64 = 1e-13;

/// Relative slack allowed on the pair physicality bound.
pub const PHYSICALITY_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JunctionModel {
    /// Ohms.
    pub resistance: f64,
    /// Electron temperature, kelvin.
    pub te: f64,
    /// Volts.
    pub vdc: f64,
    /// RMS ac current at the pump frequency, amperes.
    pub iac_rms: f64,
    /// Pump frequency, Hz.
    pub f_pump: f64,
}

impl JunctionModel {
    pub fn new(resistance: f64, te: f64, vdc: f64, iac_rms: f64, f_pump: f64) -> Result<Self> {
        let m = JunctionModel {
            resistance,
            te,
            vdc,
            iac_rms,
            f_pump,
        };
        m.validate()?;
        Ok(m)
    }

    /// Operating point used for the squeezing measurements: `R = 52.5 Ω`,
    /// `Tₑ = 17 mK`, `V_dc = h f_p / 2e`, `I_ac = 0.43 µA` rms at 12 GHz.
    pub fn squeezing_operating_point() -> Self {
        let f_pump = 12e9;
        JunctionModel {
            resistance: 52.5,
            te: 17e-3,
            vdc: PLANCK * f_pump / (2.0 * ELEMENTARY_CHARGE),
            iac_rms: 0.43e-6,
            f_pump,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.resistance > 0.0 && self.te > 0.0 && self.f_pump > 0.0) {
            return Err(Error::config("junction needs R > 0, Te > 0 and f_p > 0"));
        }
        if !(self.iac_rms >= 0.0) || !self.vdc.is_finite() {
            return Err(Error::config("invalid junction bias"));
        }
        Ok(())
    }

    /// Peak ac voltage `√2 I_rms R`.
    pub fn vac(&self) -> f64 {
        std::f64::consts::SQRT_2 * self.iac_rms * self.resistance
    }

    /// Photoassisted parameter `e V_ac / (h f_p)`.
    pub fn z(&self) -> f64 {
        ELEMENTARY_CHARGE * self.vac() / (PLANCK * self.f_pump)
    }

    fn n_orders(&self) -> usize {
        10usize.max((3.0 * self.z()).ceil() as usize)
    }

    /// `s(E) = E coth(E / 2kTₑ) / 2R` in A²/Hz.
    pub fn s(&self, energy: f64) -> f64 {
        let two_kt = 2.0 * BOLTZMANN * self.te;
        two_kt * x_coth_x(energy / two_kt) / (2.0 * self.resistance)
    }

    /// Undriven symmetrised noise density at bias `v`.
    pub fn s2(&self, f: f64, v: f64) -> f64 {
        let e = ELEMENTARY_CHARGE * v;
        let hf = PLANCK * f;
        self.s(e + hf) + self.s(e - hf)
    }

    /// Photoassisted noise density at the model's bias and drive.
    pub fn s2_driven(&self, f: f64) -> f64 {
        let nmax = self.n_orders();
        let j = bessel_j_orders(self.z(), nmax);
        let step = PLANCK * self.f_pump / ELEMENTARY_CHARGE;
        let mut acc = j[0] * j[0] * self.s2(f, self.vdc);
        for (n, jn) in j.iter().enumerate().skip(1) {
            let w = jn * jn;
            acc += w * (self.s2(f, self.vdc + n as f64 * step) + self.s2(f, self.vdc - n as f64 * step));
        }
        acc
    }

    /// Mean photon occupancy per mode at `f`.
    pub fn occupancy(&self, f: f64) -> f64 {
        self.s2_driven(f) * self.resistance / (2.0 * PLANCK * f) - 0.5
    }

    /// Pair correlator `⟨a(f) a(f_p - f)⟩`, real with this gauge.
    pub fn pair_correlator(&self, f: f64) -> Result<f64> {
        let f2 = self.f_pump - f;
        if !(f > 0.0 && f2 > 0.0) {
            return Err(Error::config(format!(
                "pair correlator needs 0 < f < f_p, got f = {f:.4e} Hz"
            )));
        }
        let z = self.z();
        if z == 0.0 {
            return Ok(0.0);
        }
        let nmax = self.n_orders() as i64;
        let j = bessel_j_orders(z, nmax as usize + 1);
        let jn = |n: i64| {
            let v = j[n.unsigned_abs() as usize];
            if n < 0 && n % 2 != 0 {
                -v
            } else {
                v
            }
        };
        let step = PLANCK * self.f_pump;
        let hf2 = PLANCK * f2;
        let e_dc = ELEMENTARY_CHARGE * self.vdc;
        let mut x = 0.0;
        for m in -nmax..=nmax {
            let em = e_dc + m as f64 * step;
            x += jn(m) * (jn(m - 1) * self.s(em - hf2) + jn(m + 1) * self.s(em + hf2));
        }
        Ok(x * self.resistance / (2.0 * PLANCK * (f * f2).sqrt()))
    }

    /// Same model at another dc current `I_dc` (`V_dc = I_dc R`).
    pub fn at_dc_current(&self, idc: f64) -> Self {
        JunctionModel {
            vdc: idc * self.resistance,
            ..self.clone()
        }
    }
}

/// Bose-Einstein occupation `1/(e^{hf/kT} - 1)`.
pub fn bose_einstein(f: f64, t: f64) -> f64 {
    1.0 / (PLANCK * f / (BOLTZMANN * t)).exp_m1()
}

/// Per-bin occupancy and pair correlator on a positive-frequency grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralState {
    grid_spacing: f64,
    n_bar: Vec<f64>,
    m_bar: Vec<Complex64>,
    /// `f_p / Δf` when pairs are present.
    pair_index: Option<usize>,
}

impl SpectralState {
    /// Validates a state; `pair_index` is `f_p/Δf`. Pair values must be
    /// mirror symmetric and satisfy the Gaussian physicality bound.
    pub fn new(grid_spacing: f64, n_bar: Vec<f64>, m_bar: Vec<Complex64>, pair_index: Option<usize>) -> Result<Self> {
        let s = SpectralState::new_unchecked(grid_spacing, n_bar, m_bar, pair_index)?;
        s.check_physical()?;
        Ok(s)
    }

    /// Like [`SpectralState::new`] but skips the physicality bound, for
    /// exercising estimators on classical states that have no quantum
    /// counterpart.
    pub fn new_unchecked(
        grid_spacing: f64,
        n_bar: Vec<f64>,
        m_bar: Vec<Complex64>,
        pair_index: Option<usize>,
    ) -> Result<Self> {
        if !(grid_spacing > 0.0) {
            return Err(Error::config("grid spacing must be positive"));
        }
        if n_bar.len() != m_bar.len() {
            return Err(Error::mismatch("n_bar and m_bar lengths differ"));
        }
        if n_bar.iter().any(|n| !n.is_finite() || *n < -1e-12) {
            return Err(Error::physicality("occupancy must be finite and non-negative"));
        }
        match pair_index {
            None => {
                if m_bar.iter().any(|m| m.norm_sqr() > 0.0) {
                    return Err(Error::config("pair correlations need a pump frequency"));
                }
            }
            Some(k) => {
                for (i, m) in m_bar.iter().enumerate() {
                    if m.norm_sqr() == 0.0 {
                        continue;
                    }
                    if i == 0 || i >= k {
                        return Err(Error::config(format!("bin {i} has a pair partner outside (0, f_p)")));
                    }
                    let partner = k - i;
                    if partner >= m_bar.len() || (m_bar[partner] - m).norm() > 1e-9 * m.norm() {
                        return Err(Error::config(format!(
                            "pair correlator not symmetric between bins {i} and {partner}"
                        )));
                    }
                }
            }
        }
        Ok(SpectralState {
            grid_spacing,
            n_bar,
            m_bar,
            pair_index,
        })
    }

    /// Flat thermal occupancy `n` on every bin except dc.
    pub fn thermal_flat(grid_spacing: f64, n_bins: usize, n: f64) -> Result<Self> {
        let mut n_bar = vec![n; n_bins];
        n_bar[0] = 0.0;
        SpectralState::new(grid_spacing, n_bar, vec![Complex64::new(0.0, 0.0); n_bins], None)
    }

    pub fn vacuum(grid_spacing: f64, n_bins: usize) -> Result<Self> {
        SpectralState::thermal_flat(grid_spacing, n_bins, 0.0)
    }

    /// Evaluates the junction model on every bin.
    pub fn from_junction(model: &JunctionModel, grid_spacing: f64, n_bins: usize) -> Result<Self> {
        model.validate()?;
        let ratio = model.f_pump / grid_spacing;
        let k = ratio.round();
        let paired = model.z() > 0.0;
        if paired && (ratio - k).abs() > 1e-9 * ratio {
            return Err(Error::config(format!(
                "pump frequency {:.6e} Hz is not on the {:.6e} Hz grid",
                model.f_pump, grid_spacing
            )));
        }
        let k = k as usize;
        let mut n_bar = vec![0.0; n_bins];
        let mut m_bar = vec![Complex64::new(0.0, 0.0); n_bins];
        for i in 1..n_bins {
            let f = i as f64 * grid_spacing;
            n_bar[i] = model.occupancy(f).max(0.0);
            if paired && i < k {
                m_bar[i] = Complex64::new(model.pair_correlator(f)?, 0.0);
            }
        }
        // Enforce exact mirror symmetry of the evaluated correlator.
        if paired {
            for i in 1..k.min(n_bins) {
                let j = k - i;
                if j < n_bins && j > i {
                    let avg = 0.5 * (m_bar[i] + m_bar[j]);
                    m_bar[i] = avg;
                    m_bar[j] = avg;
                }
            }
        }
        SpectralState::new(grid_spacing, n_bar, m_bar, paired.then_some(k))
    }

    /// Pair-correlated state with `n̄ ≡ n` and `m̄ ≡ m` on the mirror bands
    /// `[f_p/2 - span, f_p/2 + span]` and `n̄ ≡ n` elsewhere.
    pub fn squeezed_flat(
        grid_spacing: f64,
        n_bins: usize,
        pair_index: usize,
        n: f64,
        m: f64,
        span_bins: usize,
        check: bool,
    ) -> Result<Self> {
        let mut n_bar = vec![n; n_bins];
        n_bar[0] = 0.0;
        let mut m_bar = vec![Complex64::new(0.0, 0.0); n_bins];
        let centre = pair_index / 2;
        if pair_index % 2 != 0 || centre + span_bins >= n_bins.min(pair_index) || span_bins >= centre {
            return Err(Error::config("squeezed band does not fit the grid"));
        }
        for mb in &mut m_bar[centre - span_bins..=centre + span_bins] {
            *mb = Complex64::new(m, 0.0);
        }
        if check {
            SpectralState::new(grid_spacing, n_bar, m_bar, Some(pair_index))
        } else {
            SpectralState::new_unchecked(grid_spacing, n_bar, m_bar, Some(pair_index))
        }
    }

    pub fn grid_spacing(&self) -> f64 {
        self.grid_spacing
    }

    pub fn n_bins(&self) -> usize {
        self.n_bar.len()
    }

    pub fn n_bar(&self) -> &[f64] {
        &self.n_bar
    }

    pub fn m_bar(&self) -> &[Complex64] {
        &self.m_bar
    }

    pub fn pair_index(&self) -> Option<usize> {
        self.pair_index
    }

    pub fn f_pump(&self) -> Option<f64> {
        self.pair_index.map(|k| k as f64 * self.grid_spacing)
    }

    /// `|m̄(f)|² ≤ min(n̄(f)(n̄(f₂)+1), n̄(f₂)(n̄(f)+1))` for every pair.
    pub fn check_physical(&self) -> Result<()> {
        let Some(k) = self.pair_index else {
            return Ok(());
        };
        for (i, m) in self.m_bar.iter().enumerate() {
            let m2 = m.norm_sqr();
            if m2 == 0.0 {
                continue;
            }
            let (a, b) = (self.n_bar[i], self.n_bar[k - i]);
            let bound = (a * (b + 1.0)).min(b * (a + 1.0));
            if m2 > bound * (1.0 + PHYSICALITY_TOL) + 1e-300 {
                return Err(Error::physicality(format!(
                    "|m̄|² = {:.6e} exceeds min(n₁(n₂+1), n₂(n₁+1)) = {:.6e} at {:.6e} Hz",
                    m2,
                    bound,
                    i as f64 * self.grid_spacing
                )));
            }
        }
        Ok(())
    }

    /// Rows `f,n_bar,re_m_bar,im_m_bar`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["f_hz", "n_bar", "re_m_bar", "im_m_bar"])?;
        for (i, (n, m)) in self.n_bar.iter().zip(&self.m_bar).enumerate() {
            wr.write_record([
                format!("{:.9e}", i as f64 * self.grid_spacing),
                format!("{n:.17e}"),
                format!("{:.17e}", m.re),
                format!("{:.17e}", m.im),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Quadratic phase `φ(f) = α (f - f_ref)²`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Dispersion {
    /// rad/Hz².
    pub alpha: f64,
    pub f_ref: f64,
}

impl Dispersion {
    pub fn none() -> Self {
        Dispersion::default()
    }

    /// Total rotation `total` (radians) accumulated between `f_lo` and `f_hi`.
    pub fn from_total_rotation(total: f64, f_lo: f64, f_hi: f64) -> Self {
        Dispersion {
            alpha: total / (f_hi - f_lo).powi(2),
            f_ref: f_lo,
        }
    }

    /// `5π` across 1-10 GHz.
    pub fn measured_chain() -> Self {
        Dispersion::from_total_rotation(5.0 * std::f64::consts::PI, 1e9, 10e9)
    }

    pub fn phase(&self, f: f64) -> f64 {
        self.alpha * (f - self.f_ref).powi(2)
    }
}

/// Photon statistics expected for a Gaussian state seen through a mode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub n: f64,
    pub m: f64,
    pub v_minus: f64,
    pub v_plus: f64,
}

impl Prediction {
    pub fn var_n(&self) -> f64 {
        self.n * (self.n + 1.0) + self.m * self.m
    }

    pub fn squeezing_db(&self) -> f64 {
        10.0 * (self.v_minus / 0.5).log10()
    }
}

/// `n = Σ|β|²n̄Δf`, `m = |Σ β(f)β(f₂)e^{i[φ(f)+φ(f₂)]} m̄(f) Δf|`.
pub fn predict(mode: &ModeSpec, state: &SpectralState, dispersion: &Dispersion) -> Result<Prediction> {
    if (mode.grid_spacing() - state.grid_spacing).abs() > 1e-9 * state.grid_spacing {
        return Err(Error::mismatch("mode and state grids differ"));
    }
    let (_, last) = mode
        .support()
        .ok_or_else(|| Error::config("mode has no support"))?;
    if last >= state.n_bins() {
        return Err(Error::config(format!(
            "mode '{}' extends beyond the state grid",
            mode.label()
        )));
    }
    let df = state.grid_spacing;
    let beta = mode.values();
    let n: f64 = beta
        .iter()
        .zip(&state.n_bar)
        .map(|(b, n)| b.norm_sqr() * n)
        .sum::<f64>()
        * df;
    let mut pair = Complex64::new(0.0, 0.0);
    if let Some(k) = state.pair_index {
        for (i, b) in beta.iter().enumerate().take(k.min(beta.len())).skip(1) {
            let j = k - i;
            if j >= beta.len() || b.norm_sqr() == 0.0 {
                continue;
            }
            let phi = dispersion.phase(i as f64 * df) + dispersion.phase(j as f64 * df);
            pair += b * beta[j] * Complex64::from_polar(1.0, phi) * state.m_bar[i];
        }
    }
    let m = pair.norm() * df;
    Ok(Prediction {
        n,
        m,
        v_minus: n + 0.5 - m,
        v_plus: n + 0.5 + m,
    })
}

/// Energy-weighted mean frequency `(f₁n̄₁ + f₂n̄₂)/(n̄₁ + n̄₂)` of the
/// bichromatic mode along a dc current sweep. Points where the total
/// occupancy is below [`OCCUPANCY_FLOOR`] are omitted.
pub fn effective_frequency(model: &JunctionModel, idc: &[f64], f1: f64, f2: f64) -> Result<Vec<(f64, f64)>> {
    if f1 == f2 {
        return Ok(idc.iter().map(|&i| (i, f1)).collect());
    }
    let mut out = Vec::with_capacity(idc.len());
    for &i in idc {
        let m = model.at_dc_current(i);
        let n1 = m.occupancy(f1).max(0.0);
        let n2 = m.occupancy(f2).max(0.0);
        if n1 + n2 > OCCUPANCY_FLOOR {
            out.push((i, (f1 * n1 + f2 * n2) / (n1 + n2)));
        }
    }
    Ok(out)
}
