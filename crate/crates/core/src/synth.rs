//! Synthesis of digitiser-like voltage traces for a Gaussian spectral state,
//! followed by the measurement chain: amplifier noise, gain, dispersion and
//! ADC quantisation.
//!
//! A segment of `N` samples is built in the frequency domain. Bin `j`
//! (`0 < j < N/2`) carries `V_j = -i √(Z h f_j Δf / 2) a_j` with
//! `⟨|a_j|²⟩ = n̄ + ½` and `⟨a_j a_{K-j}⟩ = m̄`, `K = f_p/Δf`; dc and Nyquist
//! bins are empty. The real trace is `v[n] = Σ_j 2 Re(V_j e^{2πi j n / N})`,
//! whose one-sided density is `Z h f (n̄ + ½)`.
//!
//! Segment `s` draws from ChaCha8 seeded with `seed` on stream `s`, so
//! segments are reproducible individually and in any order.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use realfft::{ComplexToReal, RealFftPlanner};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::constants::{BOLTZMANN, PLANCK};
use crate::dsp::TraceSegment;
use crate::error::{Error, Result};
use crate::junction::{Dispersion, SpectralState};

/// Piecewise-linear function of frequency, constant beyond its ends.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Curve {
    Constant(f64),
    Table { f: Vec<f64>, v: Vec<f64> },
}

impl Curve {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Curve::Constant(c) => *c,
            Curve::Table { f, v } => interp(f, v, x),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Curve::Table { f, v } = self {
            if f.is_empty() || f.len() != v.len() {
                return Err(Error::config("curve table needs matching, non-empty f and v"));
            }
            if f.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::config("curve frequencies must increase"));
            }
        }
        Ok(())
    }
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[xs.len() - 1] {
        return ys[ys.len() - 1];
    }
    let i = xs.partition_point(|&v| v <= x) - 1;
    let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] + t * (ys[i + 1] - ys[i])
}

/// Mid-tread quantiser with saturating clip and optional cubic distortion
/// `w → w + ε w³` applied to `w = v / fullscale` before rounding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdcModel {
    pub bits: u16,
    /// Volts mapped to code `2^{bits-1}`.
    pub fullscale: f64,
    #[serde(default)]
    pub nonlinearity: f64,
}

impl AdcModel {
    pub fn validate(&self) -> Result<()> {
        if !(8..=16).contains(&self.bits) {
            return Err(Error::config(format!("ADC bits {} outside [8, 16]", self.bits)));
        }
        if !(self.fullscale > 0.0) {
            return Err(Error::config("ADC full scale must be positive"));
        }
        Ok(())
    }

    /// Volts per code.
    pub fn scale(&self) -> f64 {
        self.fullscale / (1u32 << (self.bits - 1)) as f64
    }

    /// Quantises volts; returns codes and the clipped fraction.
    pub fn quantize(&self, v: &[f64]) -> (Vec<i16>, f64) {
        let half = (1i32 << (self.bits - 1)) as f64;
        let (lo, hi) = (-half, half - 1.0);
        let eps = self.nonlinearity;
        let mut clipped = 0usize;
        let codes = v
            .iter()
            .map(|&x| {
                let w = x / self.fullscale;
                let c = ((w + eps * w * w * w) * half).round();
                if c < lo || c > hi {
                    clipped += 1;
                }
                c.clamp(lo, hi) as i16
            })
            .collect();
        (codes, clipped as f64 / v.len().max(1) as f64)
    }
}

/// Everything between the sample and the digitiser.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainModel {
    /// Power gain in dB.
    pub gain_db: Curve,
    /// Input-referred amplifier noise temperature, K.
    pub noise_temp: Curve,
    #[serde(default)]
    pub dispersion: Dispersion,
    #[serde(default)]
    pub adc: Option<AdcModel>,
}

impl ChainModel {
    /// Unit gain, no noise, no dispersion, no ADC.
    pub fn ideal() -> Self {
        ChainModel {
            gain_db: Curve::Constant(0.0),
            noise_temp: Curve::Constant(0.0),
            dispersion: Dispersion::none(),
            adc: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.gain_db.validate()?;
        self.noise_temp.validate()?;
        if let Some(adc) = &self.adc {
            adc.validate()?;
        }
        Ok(())
    }

    /// Voltage gain modulus `|g(f)|`.
    pub fn gain(&self, f: f64) -> f64 {
        10f64.powf(self.gain_db.eval(f) / 20.0)
    }

    /// `|g(f)|` sampled on `n_bins` bins of spacing `df`.
    pub fn gain_curve(&self, df: f64, n_bins: usize) -> Vec<f64> {
        (0..n_bins).map(|k| self.gain(k as f64 * df)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub sample_rate: f64,
    /// Samples per segment, even.
    pub segment_len: usize,
    /// Ohms.
    pub impedance: f64,
    pub seed: u64,
    /// Reject states violating the quantum pair bound.
    pub enforce_physicality: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            sample_rate: 32e9,
            segment_len: 1 << 20,
            impedance: 50.0,
            seed: 0,
            enforce_physicality: true,
        }
    }
}

/// How one bin is drawn.
#[derive(Clone, Copy, Debug)]
enum BinLaw {
    Empty,
    /// `a = √N ξ`.
    Free { sqrt_n: f64 },
    /// Lower bin of a pair with partner `j`; `a₁ = √N₁ ξ₁`,
    /// `a₂ = (m/√N₁) ξ₁* + d ξ₂`.
    PairLow { partner: usize, sqrt_n1: f64, c: Complex64, d: f64 },
    PairHigh,
    /// Bin paired with itself: `⟨a²⟩ = m`.
    SelfPair { sd_re: f64, sd_im: f64, rot: Complex64 },
}

/// Generates independent Gaussian segments realising a spectral state.
pub struct Synthesizer {
    cfg: SynthConfig,
    laws: Vec<BinLaw>,
    /// `-i √(Z h f Δf / 2)` times chain transfer per bin.
    volt: Vec<Complex64>,
    /// Amplifier-noise amplitude after the chain, per bin.
    amp_noise: Vec<Complex64>,
    adc: Option<AdcModel>,
    c2r: Arc<dyn ComplexToReal<f64>>,
}

impl Synthesizer {
    /// Builds a synthesiser with an ideal chain.
    pub fn new(state: &SpectralState, cfg: SynthConfig) -> Result<Self> {
        Synthesizer::with_chain(state, cfg, &ChainModel::ideal())
    }

    pub fn with_chain(state: &SpectralState, cfg: SynthConfig, chain: &ChainModel) -> Result<Self> {
        chain.validate()?;
        let n = cfg.segment_len;
        if n < 4 || n % 2 != 0 {
            return Err(Error::config("segment length must be even and >= 4"));
        }
        if !(cfg.sample_rate > 0.0 && cfg.impedance > 0.0) {
            return Err(Error::config("sample rate and impedance must be positive"));
        }
        let df = cfg.sample_rate / n as f64;
        let nyq = n / 2;
        let top = (state.n_bins() - 1) as f64 * state.grid_spacing();
        if top < cfg.sample_rate / 2.0 * (1.0 - 1e-12) {
            return Err(Error::config(format!(
                "state grid stops at {top:.4e} Hz, below Nyquist {:.4e} Hz",
                cfg.sample_rate / 2.0
            )));
        }
        if cfg.enforce_physicality {
            state.check_physical()?;
        }
        let pair_k = match state.f_pump() {
            Some(fp) => {
                let r = fp / df;
                if (r - r.round()).abs() > 1e-9 * r {
                    return Err(Error::config(format!(
                        "pump frequency {fp:.6e} Hz is not a multiple of the segment bin width {df:.6e} Hz"
                    )));
                }
                Some(r.round() as usize)
            }
            None => None,
        };

        let sample_state = |f: f64| -> (f64, Complex64) {
            let x = f / state.grid_spacing();
            let i = (x.floor() as usize).min(state.n_bins() - 1);
            let t = x - i as f64;
            if i + 1 >= state.n_bins() || t == 0.0 {
                return (state.n_bar()[i], state.m_bar()[i]);
            }
            let nb = state.n_bar()[i] * (1.0 - t) + state.n_bar()[i + 1] * t;
            let mb = state.m_bar()[i] * (1.0 - t) + state.m_bar()[i + 1] * t;
            (nb, mb)
        };

        let mut laws = vec![BinLaw::Empty; nyq + 1];
        for j in 1..nyq {
            let f = j as f64 * df;
            let (n1, m) = sample_state(f);
            let big_n1 = n1 + 0.5;
            let partner = pair_k.and_then(|k| (k > j).then(|| k - j)).filter(|&p| p > 0 && p < nyq);
            laws[j] = match partner {
                Some(p) if m.norm_sqr() > 0.0 => {
                    if p == j {
                        let mag = m.norm();
                        if mag > big_n1 {
                            return Err(Error::physicality(format!(
                                "|m̄| = {mag} exceeds n̄ + ½ at {f:.4e} Hz; no Gaussian realisation"
                            )));
                        }
                        BinLaw::SelfPair {
                            sd_re: ((big_n1 + mag) / 2.0).sqrt(),
                            sd_im: ((big_n1 - mag) / 2.0).sqrt(),
                            rot: Complex64::from_polar(1.0, m.arg() / 2.0),
                        }
                    } else if p < j {
                        BinLaw::PairHigh
                    } else {
                        let (n2, _) = sample_state(p as f64 * df);
                        let big_n2 = n2 + 0.5;
                        let d2 = big_n2 - m.norm_sqr() / big_n1;
                        if d2 < -1e-12 * big_n2 {
                            return Err(Error::physicality(format!(
                                "|m̄|² exceeds (n̄₁+½)(n̄₂+½) at {f:.4e} Hz; no Gaussian realisation"
                            )));
                        }
                        BinLaw::PairLow {
                            partner: p,
                            sqrt_n1: big_n1.sqrt(),
                            c: m / big_n1.sqrt(),
                            d: d2.max(0.0).sqrt(),
                        }
                    }
                }
                _ => BinLaw::Free { sqrt_n: big_n1.sqrt() },
            };
        }

        let zh = cfg.impedance * PLANCK;
        let mut volt = vec![Complex64::new(0.0, 0.0); nyq + 1];
        let mut amp_noise = vec![Complex64::new(0.0, 0.0); nyq + 1];
        for j in 1..nyq {
            let f = j as f64 * df;
            let transfer = Complex64::from_polar(chain.gain(f), chain.dispersion.phase(f));
            volt[j] = Complex64::new(0.0, -(zh * f * df / 2.0).sqrt()) * transfer;
            let tn = chain.noise_temp.eval(f);
            if tn < 0.0 {
                return Err(Error::config("noise temperature must be non-negative"));
            }
            amp_noise[j] = (cfg.impedance * BOLTZMANN * tn * df / 2.0).sqrt() * transfer;
        }

        let c2r = RealFftPlanner::<f64>::new().plan_fft_inverse(n);
        Ok(Synthesizer {
            cfg,
            laws,
            volt,
            amp_noise,
            adc: chain.adc.clone(),
            c2r,
        })
    }

    pub fn config(&self) -> &SynthConfig {
        &self.cfg
    }

    pub fn segment_len(&self) -> usize {
        self.cfg.segment_len
    }

    pub fn sample_rate(&self) -> f64 {
        self.cfg.sample_rate
    }

    pub fn adc(&self) -> Option<&AdcModel> {
        self.adc.as_ref()
    }

    fn rng(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(index);
        rng
    }

    /// Analog voltage at the digitiser input for segment `index`.
    pub fn voltage_segment(&self, index: u64) -> Vec<f64> {
        let mut rng = self.rng(index);
        let nyq = self.cfg.segment_len / 2;
        let mut spec = vec![Complex64::new(0.0, 0.0); nyq + 1];
        let mut xi = || -> Complex64 {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
        };
        for j in 1..nyq {
            match self.laws[j] {
                BinLaw::Empty | BinLaw::PairHigh => {}
                BinLaw::Free { sqrt_n } => spec[j] = xi() * sqrt_n,
                BinLaw::PairLow { partner, sqrt_n1, c, d } => {
                    let x1 = xi();
                    let x2 = xi();
                    spec[j] = x1 * sqrt_n1;
                    spec[partner] = c * x1.conj() + x2 * d;
                }
                BinLaw::SelfPair { sd_re, sd_im, rot } => {
                    let x = xi() * std::f64::consts::SQRT_2;
                    spec[j] = Complex64::new(x.re * sd_re, x.im * sd_im) * rot;
                }
            }
        }
        let any_noise = self.amp_noise.iter().any(|a| a.norm_sqr() > 0.0);
        for j in 1..nyq {
            spec[j] *= self.volt[j];
            if any_noise {
                spec[j] += xi() * self.amp_noise[j];
            }
        }
        let mut out = self.c2r.make_output_vec();
        self.c2r
            .process(&mut spec, &mut out)
            .expect("spectrum sized by the planner");
        out
    }

    /// Digitised segment. Without an ADC model the codes use a 16-bit
    /// quantiser spanning ±8 standard deviations of the analog trace.
    pub fn segment(&self, index: u64) -> Result<(TraceSegment, f64)> {
        let v = self.voltage_segment(index);
        let adc = match &self.adc {
            Some(a) => a.clone(),
            None => {
                let rms = (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
                AdcModel {
                    bits: 16,
                    fullscale: 8.0 * rms.max(f64::MIN_POSITIVE),
                    nonlinearity: 0.0,
                }
            }
        };
        let (codes, clipped) = adc.quantize(&v);
        if clipped > 0.01 {
            log::warn!(
                "segment {index}: {:.2}% of samples clipped; reduce the ADC input range",
                100.0 * clipped
            );
        }
        let seg = TraceSegment::new(codes, self.cfg.sample_rate, adc.scale(), adc.bits, index)?;
        Ok((seg, clipped))
    }
}
