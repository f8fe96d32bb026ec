//! Run configuration: a TOML document describing the source, the chain, the
//! modes and the analysis, with builders for every pipeline stage.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dsp::DEFAULT_FFT_LEN;
use crate::error::{Error, Result};
use crate::junction::{JunctionModel, SpectralState};
use crate::kernels::{design_kernel, ComposeOptions, DiscreteKernel, Quadrature, Window};
use crate::modes::{ModeGrid, ModeSpec, SubBandShape};
use crate::pipeline::{Analyzer, Probe};
use crate::synth::{ChainModel, SynthConfig, Synthesizer};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub sample_rate: f64,
    pub segment_len: usize,
    /// Segments per acquisition.
    pub segments: u64,
    pub seed: u64,
    #[serde(default = "default_impedance")]
    pub impedance: f64,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

fn default_impedance() -> f64 {
    50.0
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// Source state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StateConfig {
    Vacuum,
    Thermal {
        n: f64,
    },
    Junction(JunctionModel),
    /// Flat pair-correlated band of half-width `span` around `f_pump/2`.
    Squeezed {
        n: f64,
        m: f64,
        f_pump: f64,
        span: f64,
        #[serde(default = "yes")]
        check: bool,
    },
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModeConfig {
    Monochromatic {
        label: String,
        f0: f64,
        bandwidth: f64,
        #[serde(default)]
        raised_cosine: bool,
    },
    Bichromatic {
        label: String,
        f1: f64,
        f2: f64,
        bandwidth: f64,
        #[serde(default = "half")]
        lambda: f64,
        #[serde(default)]
        phase: f64,
    },
    Wideband {
        label: String,
        f_lo: f64,
        f_hi: f64,
    },
    /// Two monochromatic sub-modes analysed jointly.
    Pair {
        label: String,
        f1: f64,
        f2: f64,
        bandwidth: f64,
    },
}

fn half() -> f64 {
    0.5
}

impl ModeConfig {
    pub fn label(&self) -> &str {
        match self {
            ModeConfig::Monochromatic { label, .. }
            | ModeConfig::Bichromatic { label, .. }
            | ModeConfig::Wideband { label, .. }
            | ModeConfig::Pair { label, .. } => label,
        }
    }

    fn bands(&self) -> Vec<(f64, f64)> {
        match *self {
            ModeConfig::Monochromatic { f0, bandwidth, .. } => vec![(f0 - bandwidth / 2.0, f0 + bandwidth / 2.0)],
            ModeConfig::Bichromatic { f1, f2, bandwidth, .. } | ModeConfig::Pair { f1, f2, bandwidth, .. } => vec![
                (f1 - bandwidth / 2.0, f1 + bandwidth / 2.0),
                (f2 - bandwidth / 2.0, f2 + bandwidth / 2.0),
            ],
            ModeConfig::Wideband { f_lo, f_hi, .. } => vec![(f_lo, f_hi)],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    #[serde(default = "default_taps")]
    pub n_taps: usize,
    #[serde(default = "default_fft")]
    pub fft_len: usize,
    #[serde(default = "default_fft")]
    pub design_len: usize,
    #[serde(default)]
    pub hann: bool,
    #[serde(default = "default_guard")]
    pub dc_guard: f64,
    /// Divide the chain gain out of the kernels; needs a gain curve in the
    /// chain or a calibration file.
    #[serde(default)]
    pub deconvolve: bool,
    #[serde(default)]
    pub calibration: Option<PathBuf>,
    #[serde(default)]
    pub lambda_grid: Vec<f64>,
    #[serde(default)]
    pub delta_f_grid: Vec<f64>,
    /// Sideband frequencies of a squeezing-spectrum sweep.
    #[serde(default)]
    pub sweep: Vec<f64>,
    #[serde(default = "default_sweep_bw")]
    pub sweep_bandwidth: f64,
    /// Lower frequency of the pair analysed over the Δf grid.
    #[serde(default = "default_pair_f")]
    pub pair_frequency: f64,
}

fn default_pair_f() -> f64 {
    4.25e9
}

fn default_taps() -> usize {
    257
}

fn default_fft() -> usize {
    DEFAULT_FFT_LEN
}

fn default_guard() -> f64 {
    100e6
}

fn default_sweep_bw() -> f64 {
    200e6
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection {
            n_taps: default_taps(),
            fft_len: default_fft(),
            design_len: default_fft(),
            hann: false,
            dc_guard: default_guard(),
            deconvolve: false,
            calibration: None,
            lambda_grid: Vec::new(),
            delta_f_grid: Vec::new(),
            sweep: Vec::new(),
            sweep_bandwidth: default_sweep_bw(),
            pair_frequency: default_pair_f(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub state: StateConfig,
    #[serde(default = "ChainModel::ideal")]
    pub chain: ChainModel,
    #[serde(default)]
    pub modes: Vec<ModeConfig>,
    #[serde(default)]
    pub analysis: AnalysisSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        RunConfig::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> Result<String> {
        let json = serde_json::to_vec(self)?;
        Ok(hex::encode(Sha256::digest(&json)))
    }

    pub fn nyquist(&self) -> f64 {
        self.run.sample_rate / 2.0
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.run;
        if !(r.sample_rate > 0.0 && r.impedance > 0.0) {
            return Err(Error::config("sample rate and impedance must be positive"));
        }
        if r.segment_len < 4 || r.segment_len % 2 != 0 || r.segments == 0 {
            return Err(Error::config("segment length must be even and >= 4, with at least one segment"));
        }
        self.chain.validate()?;
        let a = &self.analysis;
        if a.n_taps % 2 == 0 || a.n_taps < 3 {
            return Err(Error::config("n_taps must be odd and >= 3"));
        }
        if a.fft_len < 2 * a.n_taps || !a.fft_len.is_power_of_two() {
            return Err(Error::config("fft_len must be a power of two of at least twice n_taps"));
        }
        if r.segment_len < 2 * a.n_taps {
            return Err(Error::config("segment length must be at least twice the kernel length"));
        }
        if a.deconvolve && a.calibration.is_none() && self.chain.gain_db == crate::synth::Curve::Constant(0.0) {
            return Err(Error::config(
                "gain deconvolution requested without a calibration file or a chain gain curve",
            ));
        }
        let nyq = self.nyquist();
        let mut labels = std::collections::HashSet::new();
        for m in &self.modes {
            if !labels.insert(m.label()) {
                return Err(Error::config(format!("duplicate mode label '{}'", m.label())));
            }
            for (lo, hi) in m.bands() {
                if !(lo >= a.dc_guard && hi <= nyq && lo < hi) {
                    return Err(Error::config(format!(
                        "mode '{}' band [{lo:.4e}, {hi:.4e}] Hz lies outside [{:.4e}, {nyq:.4e}] Hz",
                        m.label(),
                        a.dc_guard
                    )));
                }
            }
        }
        if a.lambda_grid.iter().any(|l| !(0.0..=1.0).contains(l)) {
            return Err(Error::config("λ grid values must lie in [0, 1]"));
        }
        if a.delta_f_grid.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::config("Δf grid values must be positive"));
        }
        Ok(())
    }

    pub fn f_pump(&self) -> Option<f64> {
        match &self.state {
            StateConfig::Junction(m) => Some(m.f_pump),
            StateConfig::Squeezed { f_pump, .. } => Some(*f_pump),
            _ => None,
        }
    }

    fn require_pump(&self, what: &str) -> Result<f64> {
        self.f_pump()
            .ok_or_else(|| Error::config(format!("{what} needs a pumped state (junction or squeezed)")))
    }

    /// For each sweep frequency `f`: a bichromatic mode at `(f, f_p - f)` and
    /// the pair of its two halves.
    pub fn sweep_modes(&self) -> Result<Vec<(f64, ModeConfig, ModeConfig)>> {
        let fp = self.require_pump("a squeezing sweep")?;
        if self.analysis.sweep.is_empty() {
            return Err(Error::config("analysis.sweep is empty"));
        }
        let bw = self.analysis.sweep_bandwidth;
        Ok(self
            .analysis
            .sweep
            .iter()
            .map(|&f| {
                (
                    f,
                    ModeConfig::Bichromatic {
                        label: format!("bichromatic {f:.6e}"),
                        f1: f,
                        f2: fp - f,
                        bandwidth: bw,
                        lambda: 0.5,
                        phase: 0.0,
                    },
                    ModeConfig::Pair {
                        label: format!("pair {f:.6e}"),
                        f1: f,
                        f2: fp - f,
                        bandwidth: bw,
                    },
                )
            })
            .collect())
    }

    /// Pairs at `(f, f_p - f)` with bandwidth Δf for every Δf on the grid.
    pub fn delta_f_modes(&self) -> Result<Vec<(f64, ModeConfig)>> {
        let fp = self.require_pump("a Δf sweep")?;
        if self.analysis.delta_f_grid.is_empty() {
            return Err(Error::config("analysis.delta_f_grid is empty"));
        }
        let f = self.analysis.pair_frequency;
        Ok(self
            .analysis
            .delta_f_grid
            .iter()
            .map(|&df| {
                (
                    df,
                    ModeConfig::Pair {
                        label: format!("pair df={df:.6e}"),
                        f1: f,
                        f2: fp - f,
                        bandwidth: df,
                    },
                )
            })
            .collect())
    }

    pub fn grid(&self) -> Result<ModeGrid> {
        ModeGrid::new(self.run.sample_rate, self.analysis.design_len, self.analysis.dc_guard, self.nyquist())
    }

    pub fn state(&self) -> Result<SpectralState> {
        let g = self.grid()?;
        let (df, nb) = (g.spacing(), g.n_bins());
        match &self.state {
            StateConfig::Vacuum => SpectralState::vacuum(df, nb),
            StateConfig::Thermal { n } => SpectralState::thermal_flat(df, nb, *n),
            StateConfig::Junction(model) => SpectralState::from_junction(model, df, nb),
            StateConfig::Squeezed {
                n,
                m,
                f_pump,
                span,
                check,
            } => {
                let k = (f_pump / df).round() as usize;
                SpectralState::squeezed_flat(df, nb, k, *n, *m, (span / df).round() as usize, *check)
            }
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        let physical = !matches!(self.state, StateConfig::Squeezed { check: false, .. });
        SynthConfig {
            sample_rate: self.run.sample_rate,
            segment_len: self.run.segment_len,
            impedance: self.run.impedance,
            seed: self.run.seed,
            enforce_physicality: physical,
        }
    }

    pub fn synthesizer(&self) -> Result<Synthesizer> {
        Synthesizer::with_chain(&self.state()?, self.synth_config(), &self.chain)
    }

    pub fn compose_options(&self) -> ComposeOptions {
        ComposeOptions {
            design_len: self.analysis.design_len,
            window: if self.analysis.hann { Window::Hann } else { Window::Rect },
            dc_guard: self.analysis.dc_guard,
        }
    }

    /// `|g|` used in kernel design: unity unless deconvolution is requested.
    pub fn design_gain(&self, calibrated: Option<&ChainModel>) -> Result<Vec<f64>> {
        let g = self.grid()?;
        if !self.analysis.deconvolve {
            return Ok(vec![1.0; g.n_bins()]);
        }
        let chain = calibrated.unwrap_or(&self.chain);
        Ok(chain.gain_curve(g.spacing(), g.n_bins()))
    }

    pub fn mode_spec(&self, m: &ModeConfig) -> Result<Vec<ModeSpec>> {
        let g = self.grid()?;
        let specs = match *m {
            ModeConfig::Monochromatic {
                f0,
                bandwidth,
                raised_cosine,
                ..
            } => {
                let shape = if raised_cosine { SubBandShape::RaisedCosine } else { SubBandShape::Rect };
                vec![ModeSpec::monochromatic(&g, f0, bandwidth, shape)?]
            }
            ModeConfig::Bichromatic {
                f1,
                f2,
                bandwidth,
                lambda,
                phase,
                ..
            } => vec![ModeSpec::bichromatic(&g, f1, f2, bandwidth, lambda, phase)?],
            ModeConfig::Wideband { f_lo, f_hi, .. } => vec![ModeSpec::wideband(&g, f_lo, f_hi)?],
            ModeConfig::Pair { f1, f2, bandwidth, .. } => vec![
                ModeSpec::monochromatic(&g, f1, bandwidth, SubBandShape::Rect)?,
                ModeSpec::monochromatic(&g, f2, bandwidth, SubBandShape::Rect)?,
            ],
        };
        Ok(specs.into_iter().map(|s| s.with_label(m.label())).collect())
    }

    /// Kernels and probes for `modes`: one X kernel per single mode, X and P
    /// kernels for both halves of a pair.
    pub fn analyzer_for(&self, modes: &[ModeConfig], calibrated: Option<&ChainModel>) -> Result<(Analyzer, Vec<DiscreteKernel>)> {
        let gain = self.design_gain(calibrated)?;
        let opts = self.compose_options();
        let (taps, z) = (self.analysis.n_taps, self.run.impedance);
        let mut kernels = Vec::new();
        let mut probes = Vec::new();
        for m in modes {
            let specs = self.mode_spec(m)?;
            match m {
                ModeConfig::Pair { .. } => {
                    let base = kernels.len();
                    for s in &specs {
                        kernels.push(design_kernel(s, Quadrature::X, taps, z, &gain, &opts)?);
                        kernels.push(design_kernel(s, Quadrature::P, taps, z, &gain, &opts)?);
                    }
                    probes.push(Probe::Pair {
                        x1: base,
                        p1: base + 1,
                        x2: base + 2,
                        p2: base + 3,
                    });
                }
                _ => {
                    probes.push(Probe::Single { x: kernels.len() });
                    kernels.push(design_kernel(&specs[0], Quadrature::X, taps, z, &gain, &opts)?);
                }
            }
        }
        let analyzer = Analyzer::new(&kernels, probes, self.analysis.fft_len)?;
        Ok((analyzer, kernels))
    }
}

/// Provenance record written next to every output file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub segments: u64,
    pub command: String,
    pub outputs: Vec<PathBuf>,
}

impl Provenance {
    pub fn new(cfg: &RunConfig, command: &str, outputs: Vec<PathBuf>) -> Result<Self> {
        Ok(Provenance {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: cfg.hash()?,
            seed: cfg.run.seed,
            segments: cfg.run.segments,
            command: command.to_string(),
            outputs,
        })
    }

    /// Writes `<path>.provenance.json` beside `path`.
    pub fn write_sidecar(&self, path: &Path) -> Result<PathBuf> {
        let mut side = path.as_os_str().to_owned();
        side.push(".provenance.json");
        let side = PathBuf::from(side);
        std::fs::write(&side, serde_json::to_string_pretty(self)?)?;
        Ok(side)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[run]
sample_rate = 32e9
segment_len = 1048576
segments = 2
seed = 7

[state]
kind = "thermal"
n = 0.5

[[modes]]
kind = "monochromatic"
label = "m6"
f0 = 6e9
bandwidth = 200e6
"#;

    #[test]
    fn minimal_config_round_trips() {
        let cfg = RunConfig::from_toml(MINIMAL).unwrap();
        let back = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.hash().unwrap(), back.hash().unwrap());
        assert_eq!(cfg.analysis.n_taps, 257);
    }

    #[test]
    fn bands_beyond_nyquist_are_rejected() {
        let bad = MINIMAL.replace("f0 = 6e9", "f0 = 16.05e9");
        assert!(matches!(RunConfig::from_toml(&bad), Err(Error::Config(_))));
        let low = MINIMAL.replace("f0 = 6e9", "f0 = 0.1e9");
        assert!(RunConfig::from_toml(&low).is_err());
    }

    #[test]
    fn deconvolution_needs_a_gain_source() {
        let text = format!("{MINIMAL}\n[analysis]\ndeconvolve = true\n");
        assert!(matches!(RunConfig::from_toml(&text), Err(Error::Config(_))));
    }
}
