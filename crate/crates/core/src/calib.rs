//! Shot-noise thermometry and reference interlacing.
//!
//! The output density of the chain at bias current `I` is modelled as
//! `PSD(f, I) = a(f) S2(f, I R, Tₑ) + b(f)` with `a = G Z R / 2` and
//! `b = G Z k T_N`, where `G` is the power gain, `Z` the line impedance and
//! `T_N` the input-referred amplifier noise temperature. For fixed `Tₑ` the
//! model is linear in `(a, b)`, so `Tₑ` is the only nonlinear parameter.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{BOLTZMANN, ELEMENTARY_CHARGE};
use crate::error::{Error, Result};
use crate::junction::JunctionModel;
use crate::synth::Curve;

/// Minimum number of distinct bias points.
pub const MIN_BIAS_POINTS: usize = 7;
/// Minimum number of frequency bins.
pub const MIN_BINS: usize = 2;
/// The largest bias must reach `e|V| ≥ 5 k Tₑ`.
pub const CROSSOVER_FACTOR: f64 = 5.0;

const SCAN_LO: f64 = 1e-3;
const SCAN_HI: f64 = 2.0;
const SCAN_POINTS: usize = 161;
const MAX_ITER: usize = 100;

/// Noise spectra on a `frequency × bias current` grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasSpectra {
    pub freqs: Vec<f64>,
    pub currents: Vec<f64>,
    /// `psd[i][j]` at `freqs[i]`, `currents[j]`, V²/Hz.
    pub psd: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize, Serialize)]
struct Row {
    f_hz: f64,
    idc_a: f64,
    psd: f64,
}

impl BiasSpectra {
    pub fn new(freqs: Vec<f64>, currents: Vec<f64>, psd: Vec<Vec<f64>>) -> Result<Self> {
        if psd.len() != freqs.len() || psd.iter().any(|r| r.len() != currents.len()) {
            return Err(Error::config("spectra grid does not match its axes"));
        }
        if psd.iter().flatten().any(|v| !v.is_finite()) || freqs.iter().any(|&f| !(f > 0.0)) {
            return Err(Error::config("spectra must be finite at positive frequencies"));
        }
        Ok(BiasSpectra { freqs, currents, psd })
    }

    /// Builds the grid from `(f, I_dc, PSD)` rows; every pair must appear once.
    pub fn from_rows(rows: &[(f64, f64, f64)]) -> Result<Self> {
        let mut freqs: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let mut currents: Vec<f64> = rows.iter().map(|r| r.1).collect();
        for v in [&mut freqs, &mut currents] {
            v.sort_by(f64::total_cmp);
            v.dedup();
        }
        if freqs.len() * currents.len() != rows.len() {
            return Err(Error::config(format!(
                "{} rows do not fill a {}×{} frequency-bias grid",
                rows.len(),
                freqs.len(),
                currents.len()
            )));
        }
        let mut psd = vec![vec![f64::NAN; currents.len()]; freqs.len()];
        for &(f, i, p) in rows {
            let a = freqs.partition_point(|&x| x < f);
            let b = currents.partition_point(|&x| x < i);
            if !psd[a][b].is_nan() {
                return Err(Error::config(format!("duplicate row at f = {f}, I = {i}")));
            }
            psd[a][b] = p;
        }
        BiasSpectra::new(freqs, currents, psd)
    }

    /// Reads CSV with header `f_hz,idc_a,psd`.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rows = Vec::new();
        for rec in csv::Reader::from_reader(r).deserialize() {
            let row: Row = rec?;
            rows.push((row.f_hz, row.idc_a, row.psd));
        }
        BiasSpectra::from_rows(&rows)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for (f, row) in self.freqs.iter().zip(&self.psd) {
            for (i, p) in self.currents.iter().zip(row) {
                out.serialize(Row {
                    f_hz: *f,
                    idc_a: *i,
                    psd: *p,
                })?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn scaled(&self, kappa: f64) -> Self {
        BiasSpectra {
            psd: self.psd.iter().map(|r| r.iter().map(|v| v * kappa).collect()).collect(),
            ..self.clone()
        }
    }
}

/// Fit of one frequency bin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinFit {
    pub f: f64,
    pub gain_db: f64,
    pub gain_db_err: f64,
    /// Kelvin.
    pub noise_temp: f64,
    pub noise_temp_err: f64,
    /// Covariance of `(a, b)` at the shared `Tₑ`.
    pub cov_ab: [[f64; 2]; 2],
    /// `Tₑ` fitted to this bin alone.
    pub te_bin: f64,
    pub residual_rms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibResult {
    /// Shared electron temperature, K.
    pub te: f64,
    pub te_err: f64,
    pub resistance: f64,
    pub impedance: f64,
    pub bins: Vec<BinFit>,
    /// Residual RMS over all points, V²/Hz.
    pub residual_rms: f64,
    /// Residual RMS relative to the RMS of the data.
    pub residual_rel: f64,
}

impl CalibResult {
    pub fn gain_curve(&self) -> Curve {
        Curve::Table {
            f: self.bins.iter().map(|b| b.f).collect(),
            v: self.bins.iter().map(|b| b.gain_db).collect(),
        }
    }

    pub fn noise_temp_curve(&self) -> Curve {
        Curve::Table {
            f: self.bins.iter().map(|b| b.f).collect(),
            v: self.bins.iter().map(|b| b.noise_temp).collect(),
        }
    }

    /// Standard deviation of the per-bin `Tₑ` values.
    pub fn te_scatter(&self) -> f64 {
        let n = self.bins.len() as f64;
        let mean = self.bins.iter().map(|b| b.te_bin).sum::<f64>() / n;
        (self.bins.iter().map(|b| (b.te_bin - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "f_hz",
            "gain_db",
            "gain_db_err",
            "noise_temp_k",
            "noise_temp_err_k",
            "te_bin_k",
            "residual_rms",
        ])?;
        for b in &self.bins {
            out.write_record(
                [b.f, b.gain_db, b.gain_db_err, b.noise_temp, b.noise_temp_err, b.te_bin, b.residual_rms]
                    .iter()
                    .map(|v| format!("{v:e}")),
            )?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Basis values `S2(f, I R, Tₑ)` over the bias axis.
fn basis(f: f64, currents: &[f64], r: f64, te: f64) -> Vec<f64> {
    let m = JunctionModel {
        resistance: r,
        te,
        vdc: 0.0,
        iac_rms: 0.0,
        f_pump: 1.0,
    };
    currents.iter().map(|&i| m.s2(f, i * r)).collect()
}

/// Linear least squares of `y ≈ a s + b`; returns `(a, b, rss, (SᵀS)⁻¹)`.
fn linear_fit(s: &[f64], y: &[f64]) -> (f64, f64, f64, [[f64; 2]; 2]) {
    let n = s.len() as f64;
    let ms = s.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = s.iter().map(|v| (v - ms).powi(2)).sum();
    let sxy: f64 = s.iter().zip(y).map(|(v, w)| (v - ms) * (w - my)).sum();
    let a = sxy / sxx;
    let b = my - a * ms;
    let rss = s.iter().zip(y).map(|(v, w)| (w - a * v - b).powi(2)).sum();
    let sum_s2: f64 = s.iter().map(|v| v * v).sum();
    let det = n * sxx;
    let inv = [[n / det, -ms * n / det], [-ms * n / det, sum_s2 / det]];
    (a, b, rss, inv)
}

/// Residuals after projecting out `(a, b)`, and their `Tₑ` derivative
/// `(I - P) a ∂s/∂Tₑ`.
fn projected(f: f64, currents: &[f64], y: &[f64], r: f64, te: f64) -> (Vec<f64>, Vec<f64>) {
    let s = basis(f, currents, r, te);
    let (a, b, _, _) = linear_fit(&s, y);
    let h = te * 1e-5;
    let ds: Vec<f64> = basis(f, currents, r, te + h)
        .iter()
        .zip(basis(f, currents, r, te - h))
        .map(|(p, m)| a * (p - m) / (2.0 * h))
        .collect();
    // Project the derivative off span{s, 1}.
    let (ca, cb, _, _) = linear_fit(&s, &ds);
    let j: Vec<f64> = s.iter().zip(&ds).map(|(sv, d)| d - ca * sv - cb).collect();
    let res: Vec<f64> = s.iter().zip(y).map(|(sv, w)| w - a * sv - b).collect();
    (res, j)
}

/// Gauss-Newton on `ln Tₑ` for the variable-projection residual summed over
/// bins with weights `w`. Returns `Tₑ` and the weighted `JᵀJ` in `Tₑ`.
fn refine(bins: &[(f64, &[f64])], w: &[f64], currents: &[f64], r: f64, te0: f64) -> Result<(f64, f64)> {
    let mut te = te0;
    let mut jtj = 0.0;
    let rss_at = |te: f64| -> f64 {
        bins.iter()
            .zip(w)
            .map(|((f, y), w)| w * linear_fit(&basis(*f, currents, r, te), y).2)
            .sum()
    };
    let mut rss = rss_at(te);
    for _ in 0..MAX_ITER {
        let (mut g, mut h) = (0.0, 0.0);
        for ((f, y), w) in bins.iter().zip(w) {
            let (res, j) = projected(*f, currents, y, r, te);
            // d(model)/d(ln Tₑ) = Tₑ d(model)/dTₑ.
            g += w * res.iter().zip(&j).map(|(e, d)| e * d * te).sum::<f64>();
            h += w * j.iter().map(|d| (d * te).powi(2)).sum::<f64>();
        }
        jtj = h / (te * te);
        if !(h > 0.0) {
            return Err(Error::numerical("thermometry fit has no sensitivity to Tₑ"));
        }
        let mut step = g / h;
        let mut accepted = false;
        for _ in 0..30 {
            let trial = te * step.exp();
            let trial_rss = rss_at(trial);
            if trial_rss <= rss {
                te = trial;
                rss = trial_rss;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted || step.abs() < 1e-14 {
            break;
        }
    }
    Ok((te, jtj))
}

fn scan(bins: &[(f64, &[f64])], w: &[f64], currents: &[f64], r: f64) -> f64 {
    let ratio = (SCAN_HI / SCAN_LO).ln();
    (0..SCAN_POINTS)
        .map(|i| SCAN_LO * (ratio * i as f64 / (SCAN_POINTS - 1) as f64).exp())
        .map(|te| {
            let rss: f64 = bins
                .iter()
                .zip(w)
                .map(|((f, y), w)| w * linear_fit(&basis(*f, currents, r, te), y).2)
                .sum();
            (te, rss)
        })
        .fold((SCAN_LO, f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best })
        .0
}

/// Fits gain, noise temperature and a shared electron temperature to
/// noise-versus-bias spectra of a junction of resistance `resistance` seen
/// through a line of impedance `impedance`.
pub fn fit_thermometry(data: &BiasSpectra, resistance: f64, impedance: f64) -> Result<CalibResult> {
    if !(resistance > 0.0 && impedance > 0.0) {
        return Err(Error::config("resistance and impedance must be positive"));
    }
    let mut distinct = data.currents.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < MIN_BIAS_POINTS {
        return Err(Error::config(format!(
            "thermometry needs at least {MIN_BIAS_POINTS} distinct bias points, got {}",
            distinct.len()
        )));
    }
    if data.freqs.len() < MIN_BINS {
        return Err(Error::config(format!(
            "thermometry needs at least {MIN_BINS} frequency bins, got {}",
            data.freqs.len()
        )));
    }
    let currents = &data.currents;
    let r = resistance;
    let bins: Vec<(f64, &[f64])> = data.freqs.iter().copied().zip(data.psd.iter().map(|v| v.as_slice())).collect();

    // Per-bin fits give each bin's Tₑ and residual variance; the shared fit
    // weights bins by inverse residual variance.
    let n_pts = currents.len();
    let per_bin: Vec<(f64, f64)> = bins
        .par_iter()
        .map(|b| {
            let one = std::slice::from_ref(b);
            let te = refine(one, &[1.0], currents, r, scan(one, &[1.0], currents, r))?.0;
            let rss = linear_fit(&basis(b.0, currents, r, te), b.1).2;
            Ok((te, rss / n_pts.saturating_sub(3).max(1) as f64))
        })
        .collect::<Result<_>>()?;
    let floor = per_bin.iter().map(|p| p.1).fold(0.0, f64::max) * 1e-12;
    let weights: Vec<f64> = per_bin.iter().map(|p| 1.0 / p.1.max(floor).max(f64::MIN_POSITIVE)).collect();

    let (te, jtj) = refine(&bins, &weights, currents, r, scan(&bins, &weights, currents, r))?;

    let max_bias = currents.iter().fold(0.0f64, |m, i| m.max((i * r).abs()));
    if ELEMENTARY_CHARGE * max_bias < CROSSOVER_FACTOR * BOLTZMANN * te {
        return Err(Error::config(format!(
            "bias range reaches e|V| = {:.3e} J, below 5kTₑ = {:.3e} J; the thermal-to-shot crossover is unobserved",
            ELEMENTARY_CHARGE * max_bias,
            CROSSOVER_FACTOR * BOLTZMANN * te
        )));
    }

    let dof = (bins.len() * n_pts).saturating_sub(2 * bins.len() + 1).max(1) as f64;
    let mut total_rss = 0.0;
    let mut total_sq = 0.0;
    let mut chi2 = 0.0;
    let mut fits = Vec::with_capacity(bins.len());
    for (((f, y), (te_bin, _)), w) in bins.iter().zip(&per_bin).zip(&weights) {
        let s = basis(*f, currents, r, te);
        let (a, b, rss, inv) = linear_fit(&s, y);
        total_rss += rss;
        chi2 += w * rss;
        total_sq += y.iter().map(|v| v * v).sum::<f64>();
        fits.push((*f, a, b, rss, inv, *te_bin));
    }
    // Weighted JᵀJ scaled by the reduced χ² of the shared fit.
    let te_err = if jtj > 0.0 { (chi2 / dof / jtj).sqrt() } else { f64::NAN };

    let bins_out = fits
        .into_iter()
        .map(|(f, a, b, rss, inv, te_bin)| {
            let sigma2 = rss / n_pts.saturating_sub(2).max(1) as f64;
            let cov = [
                [sigma2 * inv[0][0], sigma2 * inv[0][1]],
                [sigma2 * inv[1][0], sigma2 * inv[1][1]],
            ];
            let g = 2.0 * a / (impedance * r);
            let tn = b * r / (2.0 * a * BOLTZMANN);
            let ra = cov[0][0].sqrt() / a;
            let rb = cov[1][1].sqrt() / b.abs().max(f64::MIN_POSITIVE);
            let corr = cov[0][1] / (a * b);
            let tn_rel = (ra * ra + rb * rb - 2.0 * corr).max(0.0).sqrt();
            BinFit {
                f,
                gain_db: 10.0 * g.log10(),
                gain_db_err: 10.0 / std::f64::consts::LN_10 * ra,
                noise_temp: tn,
                noise_temp_err: tn.abs() * tn_rel,
                cov_ab: cov,
                te_bin,
                residual_rms: (rss / n_pts as f64).sqrt(),
            }
        })
        .collect::<Vec<_>>();
    if bins_out.iter().any(|b| !b.gain_db.is_finite()) {
        return Err(Error::numerical("fitted gain is not positive"));
    }
    let n_all = (bins.len() * n_pts) as f64;
    Ok(CalibResult {
        te,
        te_err,
        resistance,
        impedance,
        bins: bins_out,
        residual_rms: (total_rss / n_all).sqrt(),
        residual_rel: (total_rss / total_sq).sqrt(),
    })
}

/// One acquisition of an interlaced run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Acquisition {
    /// Source off (`I_dc = 0`, `I_ac = 0`).
    Reference,
    /// Index into the condition list.
    Condition(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub entries: Vec<Acquisition>,
}

impl Schedule {
    /// Positions of the references adjacent to each condition's acquisition.
    pub fn references_for(&self, condition: usize) -> Vec<usize> {
        let Some(pos) = self
            .entries
            .iter()
            .position(|e| *e == Acquisition::Condition(condition))
        else {
            return Vec::new();
        };
        let before = self.entries[..pos].iter().rposition(|e| *e == Acquisition::Reference);
        let after = self.entries[pos + 1..]
            .iter()
            .position(|e| *e == Acquisition::Reference)
            .map(|p| p + pos + 1);
        before.into_iter().chain(after).collect()
    }
}

/// References before the first condition, after every `ref_period`
/// conditions and after the last one.
pub fn interlace_plan(n_conditions: usize, ref_period: usize) -> Result<Schedule> {
    if ref_period == 0 {
        return Err(Error::config("reference period must be at least 1"));
    }
    let mut entries = Vec::new();
    if n_conditions == 0 {
        return Ok(Schedule { entries });
    }
    entries.push(Acquisition::Reference);
    for c in 0..n_conditions {
        entries.push(Acquisition::Condition(c));
        if (c + 1) % ref_period == 0 || c + 1 == n_conditions {
            entries.push(Acquisition::Reference);
        }
    }
    Ok(Schedule { entries })
}
