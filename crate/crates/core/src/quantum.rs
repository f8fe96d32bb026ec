//! Photocount statistics from quadrature moments, and Gaussian quantum
//! information metrics of two-mode states.
//!
//! Quadratures have vacuum variance ½. For a stream `x`, `n = ⟨x²⟩ - ½` and
//! `⟨δn²⟩ = (2/3)⟨x⁴⟩ - ⟨x²⟩² - ¼`; the time average over the pump phase
//! makes these exact for stationary and pair-correlated Gaussian light.

use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

use crate::dsp::accumulator::feature;
use crate::dsp::{jackknife, jackknife_paired, Estimate, Layout, MomentAccumulator};
use crate::error::{Error, Result};

/// Number of standard errors beyond which a physicality violation is an
/// error rather than a fluctuation.
pub const VIOLATION_SIGMAS: f64 = 3.0;

fn n_from(x2: f64) -> f64 {
    x2 - 0.5
}

fn var_n_from(x2: f64, x4: f64) -> f64 {
    2.0 / 3.0 * x4 - x2 * x2 - 0.25
}

fn fano_from(x2: f64, x4: f64) -> f64 {
    var_n_from(x2, x4) / n_from(x2)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhotonStats {
    pub n: Estimate,
    pub var_n: Estimate,
    pub fano: Estimate,
    pub samples: u64,
}

impl PhotonStats {
    /// Statistics of an exactly known state.
    pub fn exact(n: f64, var_n: f64) -> Self {
        PhotonStats {
            n: Estimate::new(n, 0.0),
            var_n: Estimate::new(var_n, 0.0),
            fano: Estimate::new(var_n / n, 0.0),
            samples: 0,
        }
    }
}

/// Single-stream photon statistics with jackknife errors.
pub fn photon_stats(acc: &MomentAccumulator) -> Result<PhotonStats> {
    if acc.layout() != Layout::Single {
        return Err(Error::mismatch("photon_stats needs a single-stream accumulator"));
    }
    if acc.is_empty() {
        return Err(Error::config("accumulator holds no samples"));
    }
    Ok(PhotonStats {
        n: jackknife(acc, |m| n_from(m[feature::X2])),
        var_n: jackknife(acc, |m| var_n_from(m[feature::X2], m[feature::X4])),
        fano: jackknife(acc, |m| fano_from(m[feature::X2], m[feature::X4])),
        samples: acc.count(),
    })
}

/// Second and fourth cumulants of a quadrature.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cumulants {
    /// `⟨x²⟩`.
    pub c2: f64,
    /// `⟨x⁴⟩ - 3⟨x²⟩²`.
    pub c4: f64,
}

impl Cumulants {
    pub fn from_moments(x2: f64, x4: f64) -> Self {
        Cumulants {
            c2: x2,
            c4: x4 - 3.0 * x2 * x2,
        }
    }

    /// `C2_s = C2_c - C2_r + ½`, `C4_s = C4_c - C4_r`.
    pub fn subtract_reference(&self, reference: &Cumulants) -> Cumulants {
        Cumulants {
            c2: self.c2 - reference.c2 + 0.5,
            c4: self.c4 - reference.c4,
        }
    }

    pub fn n(&self) -> f64 {
        self.c2 - 0.5
    }

    pub fn var_n(&self) -> f64 {
        2.0 / 3.0 * self.c4 + self.c2 * self.c2 - 0.25
    }
}

fn cumulants_of(m: &[f64]) -> Cumulants {
    Cumulants::from_moments(m[feature::X2], m[feature::X4])
}

/// Cumulants of a single-stream accumulator with jackknife errors.
pub fn cumulants(acc: &MomentAccumulator) -> Result<(Estimate, Estimate)> {
    if acc.layout() != Layout::Single {
        return Err(Error::mismatch("cumulants need a single-stream accumulator"));
    }
    Ok((
        jackknife(acc, |m| cumulants_of(m).c2),
        jackknife(acc, |m| cumulants_of(m).c4),
    ))
}

/// Sample-only statistics from a condition and a reference measured with the
/// same kernels.
pub fn reference_subtract(cond: &MomentAccumulator, reference: &MomentAccumulator) -> Result<PhotonStats> {
    if cond.layout() != Layout::Single || reference.layout() != Layout::Single {
        return Err(Error::mismatch("reference subtraction needs single-stream accumulators"));
    }
    if cond.provenance() != reference.provenance() {
        return Err(Error::mismatch(format!(
            "condition kernels '{}' differ from reference kernels '{}'",
            cond.provenance(),
            reference.provenance()
        )));
    }
    let sub = |c: &[f64], r: &[f64]| cumulants_of(c).subtract_reference(&cumulants_of(r));
    let n = jackknife_paired(cond, reference, |c, r| sub(c, r).n())?;
    let var_n = jackknife_paired(cond, reference, |c, r| sub(c, r).var_n())?;
    let fano = jackknife_paired(cond, reference, |c, r| {
        let s = sub(c, r);
        s.var_n() / s.n()
    })?;
    Ok(PhotonStats {
        n,
        var_n,
        fano,
        samples: cond.count(),
    })
}

/// Cross statistics of two sub-modes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairStats {
    pub n1: Estimate,
    pub n2: Estimate,
    pub var_n1: Estimate,
    pub var_n2: Estimate,
    /// `⟨δn₁δn₂⟩`.
    pub corr: Estimate,
    /// `⟨δN̂²⟩/4` with `N̂ = n̂₁ + n̂₂`.
    pub var_n_total_quarter: Estimate,
}

/// Pair statistics from `(x₁, p₁, x₂, p₂)` moments; `uᵢ = (xᵢ² + pᵢ²)/2`
/// estimates `n̂ᵢ + ½`.
pub fn pair_stats(acc: &MomentAccumulator) -> Result<PairStats> {
    use feature::*;
    if acc.layout() != Layout::Pair {
        return Err(Error::mismatch("pair_stats needs a pair accumulator"));
    }
    if acc.is_empty() {
        return Err(Error::config("accumulator holds no samples"));
    }
    let corr = |m: &[f64]| m[U1_U2] - m[U1] * m[U2];
    let v1 = |m: &[f64]| var_n_from(m[X1_2], m[X1_4]);
    let v2 = |m: &[f64]| var_n_from(m[X2_2], m[X2_4]);
    Ok(PairStats {
        n1: jackknife(acc, |m| m[U1] - 0.5),
        n2: jackknife(acc, |m| m[U2] - 0.5),
        var_n1: jackknife(acc, v1),
        var_n2: jackknife(acc, v2),
        corr: jackknife(acc, corr),
        var_n_total_quarter: jackknife(acc, |m| 0.25 * (v1(m) + v2(m)) + 0.5 * corr(m)),
    })
}

/// `⟨Δ̂²⟩` for a Gaussian two-mode state: `¼[n₁(n₂+1) + n₂(n₁+1) + 2|m|²]`.
pub fn delta_squared(n1: f64, n2: f64, m: f64) -> f64 {
    0.25 * (n1 * (n2 + 1.0) + n2 * (n1 + 1.0) + 2.0 * m * m)
}

/// Squeezing derived from single-mode statistics under a Gaussian assumption.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Squeezing {
    pub m: f64,
    pub v_minus: f64,
    pub v_plus: f64,
    /// `10 log₁₀(V₋/½)`.
    pub squeezing_db: f64,
    /// `var_n < n(n+1)`: `m` was clamped to zero.
    pub below_thermal: bool,
}

pub fn m_and_variances(n: f64, var_n: f64) -> Squeezing {
    let radicand = var_n - n * (n + 1.0);
    let below_thermal = radicand < 0.0;
    let m = radicand.max(0.0).sqrt();
    let v_minus = n + 0.5 - m;
    Squeezing {
        m,
        v_minus,
        v_plus: n + 0.5 + m,
        squeezing_db: 10.0 * (v_minus / 0.5).log10(),
        below_thermal,
    }
}

/// Squeezing of measured statistics, with jackknife-free error propagation
/// of `V₋` in dB from the `n` and `var_n` errors (treated as independent).
pub fn squeezing_from_stats(stats: &PhotonStats) -> (Squeezing, f64) {
    let s = m_and_variances(stats.n.value, stats.var_n.value);
    let h = 1e-7;
    let d_dn = (m_and_variances(stats.n.value + h, stats.var_n.value).squeezing_db - s.squeezing_db) / h;
    let d_dv = (m_and_variances(stats.n.value, stats.var_n.value + h).squeezing_db - s.squeezing_db) / h;
    let err = ((d_dn * stats.n.stderr).powi(2) + (d_dv * stats.var_n.stderr).powi(2)).sqrt();
    (s, err)
}

/// Entanglement and steering class of a two-mode Gaussian state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrelationClass {
    Separable,
    Entangled,
    SteerableAToB,
    SteerableBToA,
    TwoWay,
}

impl std::fmt::Display for CorrelationClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            CorrelationClass::Separable => "separable",
            CorrelationClass::Entangled => "entangled",
            CorrelationClass::SteerableAToB => "steerable-a-to-b",
            CorrelationClass::SteerableBToA => "steerable-b-to-a",
            CorrelationClass::TwoWay => "two-way",
        };
        f.write_str(s)
    }
}

/// Two-mode Gaussian state in standard form, `(X_A, P_A, X_B, P_B)` order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianBipartite {
    pub n_a: f64,
    pub n_b: f64,
    /// Non-negative pair amplitude.
    pub m: f64,
    /// `m` was reduced onto the physical boundary.
    pub clamped: bool,
}

/// Largest physical `m` for occupancies `(n_a, n_b)`.
pub fn max_pair_amplitude(n_a: f64, n_b: f64) -> f64 {
    (n_a * (n_b + 1.0)).min(n_b * (n_a + 1.0)).max(0.0).sqrt()
}

/// Roots `ν±` of `ν⁴ - Δν² + det = 0`; the smaller from `ν₋²ν₊² = det`
/// to avoid cancellation.
fn symplectic_pair(delta: f64, det: f64) -> (f64, f64) {
    let root = (delta * delta - 4.0 * det).max(0.0).sqrt();
    let plus2 = (delta + root) / 2.0;
    let minus2 = if plus2 > 0.0 { det / plus2 } else { 0.0 };
    (minus2.max(0.0).sqrt(), plus2.sqrt())
}

impl GaussianBipartite {
    pub fn new(n_a: f64, n_b: f64, m: f64) -> Result<Self> {
        if !(n_a >= 0.0 && n_b >= 0.0 && m >= 0.0) {
            return Err(Error::physicality(format!(
                "occupancies and pair amplitude must be non-negative: ({n_a}, {n_b}, {m})"
            )));
        }
        let bound = max_pair_amplitude(n_a, n_b);
        if m > bound * (1.0 + 1e-12) + 1e-15 {
            return Err(Error::physicality(format!(
                "m = {m} exceeds the physical bound {bound} for n_A = {n_a}, n_B = {n_b}"
            )));
        }
        Ok(GaussianBipartite {
            n_a,
            n_b,
            m: m.min(bound),
            clamped: false,
        })
    }

    /// Builds a state from measured values, clamping `m` (and negative
    /// occupancies) onto the physical set when the excess is within
    /// [`VIOLATION_SIGMAS`] standard errors.
    pub fn from_measured(n_a: Estimate, n_b: Estimate, m: Estimate) -> Result<Self> {
        let clamp_n = |e: Estimate| -> Result<f64> {
            if e.value >= 0.0 {
                Ok(e.value)
            } else if -e.value <= VIOLATION_SIGMAS * e.stderr {
                Ok(0.0)
            } else {
                Err(Error::physicality(format!("occupancy {} is negative beyond 3σ", e.value)))
            }
        };
        let (a, b) = (clamp_n(n_a)?, clamp_n(n_b)?);
        let mv = m.value.abs();
        let bound = max_pair_amplitude(a, b);
        if mv <= bound {
            let mut g = GaussianBipartite::new(a, b, mv)?;
            g.clamped = n_a.value < 0.0 || n_b.value < 0.0;
            return Ok(g);
        }
        if mv - bound <= VIOLATION_SIGMAS * m.stderr {
            let mut g = GaussianBipartite::new(a, b, bound)?;
            g.clamped = true;
            return Ok(g);
        }
        Err(Error::physicality(format!(
            "m = {mv} ± {} exceeds the physical bound {bound} by more than 3σ",
            m.stderr
        )))
    }

    /// Two-mode squeezed vacuum of squeezing parameter `r`.
    pub fn tmsv(r: f64) -> Self {
        let s = r.sinh();
        GaussianBipartite {
            n_a: s * s,
            n_b: s * s,
            m: s * r.cosh(),
            clamped: false,
        }
    }

    pub fn a(&self) -> f64 {
        self.n_a + 0.5
    }

    pub fn b(&self) -> f64 {
        self.n_b + 0.5
    }

    pub fn covariance(&self) -> Matrix4<f64> {
        let (a, b, m) = (self.a(), self.b(), self.m);
        Matrix4::new(
            a, 0.0, m, 0.0, //
            0.0, a, 0.0, -m, //
            m, 0.0, b, 0.0, //
            0.0, -m, 0.0, b,
        )
    }

    pub fn det_a(&self) -> f64 {
        self.a() * self.a()
    }

    pub fn det_b(&self) -> f64 {
        self.b() * self.b()
    }

    pub fn det_c(&self) -> f64 {
        -self.m * self.m
    }

    pub fn det(&self) -> f64 {
        (self.a() * self.b() - self.m * self.m).powi(2)
    }

    /// Symplectic eigenvalues `(ν₋, ν₊)`.
    pub fn symplectic_eigenvalues(&self) -> (f64, f64) {
        symplectic_pair(self.det_a() + self.det_b() + 2.0 * self.det_c(), self.det())
    }

    /// Smallest symplectic eigenvalue of the partial transpose.
    pub fn nu_tilde_minus(&self) -> f64 {
        symplectic_pair(self.det_a() + self.det_b() - 2.0 * self.det_c(), self.det()).0
    }

    /// PPT entanglement: `2ν̃₋ < 1`.
    pub fn is_entangled(&self) -> bool {
        2.0 * self.nu_tilde_minus() < 1.0
    }

    /// Entanglement of formation in ebits.
    pub fn entanglement_of_formation(&self) -> f64 {
        entanglement_of_formation(2.0 * self.nu_tilde_minus())
    }

    /// `|n_A - n_B| / (n_A + n_B) > 0.1`: the formula used by
    /// [`Self::entanglement_of_formation`] is then an estimate.
    pub fn is_asymmetric(&self) -> bool {
        let s = self.n_a + self.n_b;
        s > 0.0 && (self.n_a - self.n_b).abs() / s > 0.1
    }

    pub fn purity_a(&self) -> f64 {
        1.0 / (2.0 * self.det_a().sqrt())
    }

    pub fn purity_b(&self) -> f64 {
        1.0 / (2.0 * self.det_b().sqrt())
    }

    pub fn purity(&self) -> f64 {
        1.0 / (4.0 * self.det().sqrt())
    }

    /// `η = μ_A μ_B / μ`.
    pub fn eta(&self) -> f64 {
        self.purity_a() * self.purity_b() / self.purity()
    }

    /// Gaussian steerability of B by A.
    pub fn steering_a_to_b(&self) -> f64 {
        (0.5 * (4.0 * self.det_a() / (16.0 * self.det())).ln()).max(0.0)
    }

    /// Gaussian steerability of A by B.
    pub fn steering_b_to_a(&self) -> f64 {
        (0.5 * (4.0 * self.det_b() / (16.0 * self.det())).ln()).max(0.0)
    }

    pub fn class(&self) -> CorrelationClass {
        let (ab, ba) = (self.steering_a_to_b() > 0.0, self.steering_b_to_a() > 0.0);
        match (ab, ba) {
            (true, true) => CorrelationClass::TwoWay,
            (true, false) => CorrelationClass::SteerableAToB,
            (false, true) => CorrelationClass::SteerableBToA,
            (false, false) if self.is_entangled() => CorrelationClass::Entangled,
            _ => CorrelationClass::Separable,
        }
    }

    pub fn report(&self) -> SteeringReport {
        SteeringReport {
            eta: self.eta(),
            mu_a: self.purity_a(),
            mu_b: self.purity_b(),
            mu: self.purity(),
            g_a_to_b: self.steering_a_to_b(),
            g_b_to_a: self.steering_b_to_a(),
            e_f: self.entanglement_of_formation(),
            class: self.class(),
            asymmetric: self.is_asymmetric(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteeringReport {
    pub eta: f64,
    pub mu_a: f64,
    pub mu_b: f64,
    pub mu: f64,
    pub g_a_to_b: f64,
    pub g_b_to_a: f64,
    pub e_f: f64,
    pub class: CorrelationClass,
    pub asymmetric: bool,
}

/// `E_f(x)` for `x = 2ν̃₋`; zero for `x ≥ 1`.
pub fn entanglement_of_formation(x: f64) -> f64 {
    if !(x < 1.0) {
        return 0.0;
    }
    if x <= 0.0 {
        return f64::INFINITY;
    }
    let cp = (x.powf(-0.5) + x.sqrt()).powi(2) / 4.0;
    let cm = (x.powf(-0.5) - x.sqrt()).powi(2) / 4.0;
    let xlog = |c: f64| if c > 0.0 { c * c.log2() } else { 0.0 };
    xlog(cp) - xlog(cm)
}

/// `x = 2ν̃₋` of a pure state squeezed by `db` decibels.
pub fn pure_squeezing_x(db: f64) -> f64 {
    10f64.powf(-db.abs() / 10.0)
}

/// Entanglement rate `2 Δf E_f(Δf)` of wideband modes.
pub fn entanglement_rate_wideband(delta_f: &[f64], e_f: &[f64]) -> Result<Vec<f64>> {
    check_curve(delta_f, e_f)?;
    Ok(delta_f.iter().zip(e_f).map(|(d, e)| 2.0 * d * e).collect())
}

/// Entanglement rate `2 ∫₀^{Δf} E_f(ν) dν` of a bank of bichromatic modes,
/// by the trapezoid rule with `E_f` held at its first sample below the
/// first grid point.
pub fn entanglement_rate_bichromatic(delta_f: &[f64], e_f: &[f64]) -> Result<Vec<f64>> {
    check_curve(delta_f, e_f)?;
    let mut out = Vec::with_capacity(delta_f.len());
    let mut acc = 2.0 * delta_f[0] * e_f[0];
    out.push(acc);
    for i in 1..delta_f.len() {
        acc += (delta_f[i] - delta_f[i - 1]) * (e_f[i] + e_f[i - 1]);
        out.push(acc);
    }
    Ok(out)
}

fn check_curve(x: &[f64], y: &[f64]) -> Result<()> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::config("rate curve needs matching, non-empty samples"));
    }
    if x[0] < 0.0 || x.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::config("Δf samples must be non-negative and increasing"));
    }
    Ok(())
}

/// `V₋(λ) = ½ + (1-λ)n₁ + λn₂ - 2√(λ(1-λ)) m` for the λ-weighted mode.
pub fn v_minus_lambda(n1: f64, n2: f64, m12: f64, lambda: f64) -> f64 {
    0.5 + (1.0 - lambda) * n1 + lambda * n2 - 2.0 * (lambda * (1.0 - lambda)).sqrt() * m12
}

/// `λ = a⁴/(1+a⁴)` relating the Duan scaling `a` to the mode weight.
pub fn lambda_from_duan_a(a: f64) -> f64 {
    let a4 = a.powi(4);
    a4 / (1.0 + a4)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DuanReport {
    /// `V₋(λ) < ½`: separability excluded.
    pub inseparable: Vec<bool>,
    pub lambda_star: f64,
    pub v_min: f64,
}

pub fn duan_check(lambdas: &[f64], v_minus: &[f64]) -> Result<DuanReport> {
    if lambdas.is_empty() || lambdas.len() != v_minus.len() {
        return Err(Error::config("λ sweep needs matching, non-empty samples"));
    }
    let (i, v_min) = v_minus
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, v)| if v < bv { (i, v) } else { (bi, bv) });
    Ok(DuanReport {
        inseparable: v_minus.iter().map(|&v| v < 0.5).collect(),
        lambda_star: lambdas[i],
        v_min,
    })
}

/// One drive point of a nonlinearity sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CumulantPoint {
    pub c2: f64,
    pub c4: f64,
    pub c4_err: f64,
    /// Fourth cumulant expected from the source itself.
    #[serde(default)]
    pub expected_c4: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearityReport {
    pub slope: f64,
    pub slope_err: f64,
    pub intercept: f64,
    pub used: usize,
    /// Slope consistent with zero within 3σ.
    pub linear: bool,
}

/// Weighted fit `C4 = α C2 + β`. Points whose expected source `C4` exceeds
/// three of their standard errors carry a legitimate fourth cumulant and
/// are masked out.
pub fn c4_vs_c2_diagnostic(points: &[CumulantPoint]) -> Result<LinearityReport> {
    let used: Vec<&CumulantPoint> = points
        .iter()
        .filter(|p| p.expected_c4.abs() <= 3.0 * p.c4_err)
        .collect();
    if used.len() < 3 {
        return Err(Error::config(format!(
            "nonlinearity fit needs at least 3 unmasked points, got {}",
            used.len()
        )));
    }
    let w: Vec<f64> = used.iter().map(|p| 1.0 / p.c4_err.powi(2).max(1e-300)).collect();
    let sw: f64 = w.iter().sum();
    let sx: f64 = used.iter().zip(&w).map(|(p, w)| w * p.c2).sum();
    let sy: f64 = used.iter().zip(&w).map(|(p, w)| w * p.c4).sum();
    let sxx: f64 = used.iter().zip(&w).map(|(p, w)| w * p.c2 * p.c2).sum();
    let sxy: f64 = used.iter().zip(&w).map(|(p, w)| w * p.c2 * p.c4).sum();
    let det = sw * sxx - sx * sx;
    if !(det > 0.0) {
        return Err(Error::numerical("degenerate C2 values in nonlinearity fit"));
    }
    let slope = (sw * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;
    let slope_err = (sw / det).sqrt();
    Ok(LinearityReport {
        slope,
        slope_err,
        intercept,
        used: used.len(),
        linear: slope.abs() <= 3.0 * slope_err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eq7_examples() {
        assert_eq!(n_from(0.5), 0.0);
        assert!(var_n_from(0.5, 0.75).abs() < 1e-15);
        assert!((var_n_from(1.5, 6.75) - 2.0).abs() < 1e-14);
        // Time-averaged squeezed Gaussian: ⟨x⁴⟩ = 3[(n+½)² + m²/2].
        let (n, m) = (0.5f64, 0.5f64);
        let x4 = 3.0 * ((n + 0.5).powi(2) + m * m / 2.0);
        assert!((var_n_from(n + 0.5, x4) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn m_and_variances_cases() {
        let t = m_and_variances(0.7, 0.7 * 1.7);
        assert!(t.m.abs() < 1e-7 && !t.below_thermal);
        let below = m_and_variances(0.7, 1.0);
        assert!(below.below_thermal && below.m == 0.0);
        let n = 0.3;
        let pure = m_and_variances(n, 2.0 * n * (n + 1.0));
        assert!((pure.m - (n * (n + 1.0)).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn vacuum_and_thermal_covariances() {
        let v = GaussianBipartite::new(0.0, 0.0, 0.0).unwrap();
        assert!((v.det() - 1.0 / 16.0).abs() < 1e-15);
        let (a, b) = v.symplectic_eigenvalues();
        assert!((a - 0.5).abs() < 1e-15 && (b - 0.5).abs() < 1e-15);
        let t = GaussianBipartite::new(0.8, 0.8, 0.0).unwrap();
        let (a, b) = t.symplectic_eigenvalues();
        assert!((a - 1.3).abs() < 1e-12 && (b - 1.3).abs() < 1e-12);
        assert_eq!(t.class(), CorrelationClass::Separable);
        assert_eq!(t.entanglement_of_formation(), 0.0);
    }

    #[test]
    fn unphysical_pairs_rejected_or_clamped() {
        assert!(matches!(GaussianBipartite::new(0.1, 0.1, 0.4), Err(Error::Physicality(_))));
        let ok = GaussianBipartite::from_measured(
            Estimate::new(0.1, 0.01),
            Estimate::new(0.1, 0.01),
            Estimate::new(0.34, 0.01),
        )
        .unwrap();
        assert!(ok.clamped && (ok.m - (0.11f64).sqrt()).abs() < 1e-12);
        assert!(GaussianBipartite::from_measured(
            Estimate::new(0.1, 0.01),
            Estimate::new(0.1, 0.01),
            Estimate::new(0.5, 0.01),
        )
        .is_err());
    }

    #[test]
    fn rates_agree_at_small_bandwidth() {
        let df = [1e6, 2e6, 3e6];
        let ef = [0.23, 0.2299, 0.2298];
        let w = entanglement_rate_wideband(&df, &ef).unwrap();
        let b = entanglement_rate_bichromatic(&df, &ef).unwrap();
        assert!((w[0] - b[0]).abs() < 1e-12);
        assert!(entanglement_rate_bichromatic(&[2.0, 1.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn duan_lambda_mapping() {
        assert_eq!(lambda_from_duan_a(1.0), 0.5);
        assert!(lambda_from_duan_a(2.0) > 0.9);
        let r = duan_check(&[0.0, 0.5, 1.0], &[0.6, 0.45, 0.55]).unwrap();
        assert_eq!(r.inseparable, vec![false, true, false]);
        assert_eq!(r.lambda_star, 0.5);
    }

    #[test]
    fn linear_fit_recovers_slope() {
        let pts: Vec<CumulantPoint> = (1..6)
            .map(|i| CumulantPoint {
                c2: i as f64,
                c4: 0.3 * i as f64 + 0.1,
                c4_err: 0.01,
                expected_c4: 0.0,
            })
            .collect();
        let r = c4_vs_c2_diagnostic(&pts).unwrap();
        assert!((r.slope - 0.3).abs() < 1e-12 && (r.intercept - 0.1).abs() < 1e-12);
        assert!(!r.linear);
    }
}
