use photocount::constants::PLANCK;
use photocount::dsp::DEFAULT_FFT_LEN;
use photocount::junction::{predict, Dispersion, SpectralState};
use photocount::kernels::{design_kernel, ComposeOptions, DiscreteKernel, Quadrature};
use photocount::modes::{ModeGrid, ModeSpec, SubBandShape};
use photocount::pipeline::{Analyzer, Probe};
use photocount::quantum::{pair_stats, photon_stats};
use photocount::synth::{AdcModel, ChainModel, Curve, SynthConfig, Synthesizer};
use photocount::Error;
use realfft::RealFftPlanner;

const FS: f64 = 32e9;
const LEN: usize = 1 << 14;
const Z: f64 = 50.0;

fn grid() -> ModeGrid {
    ModeGrid::new(FS, LEN, 1e9, 15e9).unwrap()
}

fn kernel(mode: &ModeSpec, q: Quadrature) -> DiscreteKernel {
    let gain = vec![1.0; mode.n_bins()];
    design_kernel(mode, q, 257, Z, &gain, &ComposeOptions::default()).unwrap()
}

fn cfg(segment_len: usize, seed: u64) -> SynthConfig {
    SynthConfig {
        segment_len,
        seed,
        ..SynthConfig::default()
    }
}

fn mean_periodogram(v: &[f64], df: f64, f_lo: f64, f_hi: f64) -> f64 {
    let n = v.len();
    let fwd = RealFftPlanner::<f64>::new().plan_fft_forward(n);
    let mut buf = v.to_vec();
    let mut spec = fwd.make_output_vec();
    fwd.process(&mut buf, &mut spec).unwrap();
    let (a, b) = ((f_lo / df) as usize, (f_hi / df) as usize);
    // One-sided density of bin j: 2|X_j|² / (N² Δf).
    let sum: f64 = (a..b)
        .map(|j| 2.0 * spec[j].norm_sqr() / (n as f64 * n as f64 * df) / (Z * PLANCK * j as f64 * df))
        .sum();
    sum / (b - a) as f64
}

#[test]
fn synthesized_density_matches_state() {
    let g = grid();
    let n = 0.7;
    let state = SpectralState::thermal_flat(g.spacing(), g.n_bins(), n).unwrap();
    let synth = Synthesizer::new(&state, cfg(1 << 20, 3)).unwrap();
    let v = synth.voltage_segment(0);
    let df = FS / v.len() as f64;
    for &(lo, hi) in &[(2e9, 3e9), (9e9, 10e9)] {
        let ratio = mean_periodogram(&v, df, lo, hi) / (n + 0.5);
        assert!((ratio - 1.0).abs() < 0.02, "band {lo:e}: ratio {ratio}");
    }
}

#[test]
fn vacuum_and_thermal_through_the_pipeline() {
    let g = grid();
    let mode = ModeSpec::monochromatic(&g, 6e9, 200e6, SubBandShape::Rect).unwrap();
    let k = kernel(&mode, Quadrature::X);
    let analyzer = Analyzer::new(&[k], vec![Probe::Single { x: 0 }], DEFAULT_FFT_LEN).unwrap();
    for &n in &[0.0, 1.0] {
        let state = SpectralState::thermal_flat(g.spacing(), g.n_bins(), n).unwrap();
        let synth = Synthesizer::new(&state, cfg(1 << 20, 11)).unwrap();
        let (accs, rep) = analyzer.run(16, |i| Ok(synth.voltage_segment(i))).unwrap();
        assert_eq!(rep.samples, 16 << 20);
        let st = photon_stats(&accs[0]).unwrap();
        assert!(st.n.z_score(n) < 4.0 && (st.n.value - n).abs() < 0.01, "n={n}: {:?}", st.n);
        if n > 0.0 {
            assert!(st.fano.z_score(n + 1.0) < 4.0, "fano {:?}", st.fano);
        }
    }
}

#[test]
fn quantised_trace_gives_same_statistics_as_analog() {
    let g = grid();
    let mode = ModeSpec::monochromatic(&g, 5e9, 400e6, SubBandShape::Rect).unwrap();
    let k = kernel(&mode, Quadrature::P);
    let analyzer = Analyzer::new(&[k], vec![Probe::Single { x: 0 }], DEFAULT_FFT_LEN).unwrap();
    let state = SpectralState::thermal_flat(g.spacing(), g.n_bins(), 0.5).unwrap();
    let synth = Synthesizer::new(&state, cfg(1 << 18, 5)).unwrap();
    let (analog, _) = analyzer.run(8, |i| Ok(synth.voltage_segment(i))).unwrap();
    let (digital, _) = analyzer.run(8, |i| Ok(synth.segment(i)?.0)).unwrap();
    let a = photon_stats(&analog[0]).unwrap();
    let d = photon_stats(&digital[0]).unwrap();
    assert!((a.n.value - d.n.value).abs() < 1e-4, "{:?} {:?}", a.n, d.n);
}

#[test]
fn segments_are_reproducible_and_independent_of_order() {
    let g = grid();
    let state = SpectralState::thermal_flat(g.spacing(), g.n_bins(), 0.2).unwrap();
    let a = Synthesizer::new(&state, cfg(1 << 12, 42)).unwrap();
    let b = Synthesizer::new(&state, cfg(1 << 12, 42)).unwrap();
    let later_first = b.voltage_segment(3);
    assert_eq!(a.voltage_segment(3), later_first);
    assert_eq!(a.voltage_segment(0), b.voltage_segment(0));
    assert_ne!(a.voltage_segment(0), a.voltage_segment(1));
    let c = Synthesizer::new(&state, cfg(1 << 12, 43)).unwrap();
    assert_ne!(a.voltage_segment(0), c.voltage_segment(0));
}

#[test]
fn physicality_is_enforced_unless_bypassed() {
    let g = grid();
    let k = (12e9 / g.spacing()).round() as usize;
    let span = (1e9 / g.spacing()) as usize;
    let state = SpectralState::squeezed_flat(g.spacing(), g.n_bins(), k, 0.0292, 0.183, span, false).unwrap();
    let err = Synthesizer::new(&state, cfg(1 << 20, 0)).err().unwrap();
    assert!(matches!(err, Error::Physicality(_)), "{err}");
    let relaxed = SynthConfig {
        enforce_physicality: false,
        ..cfg(1 << 20, 0)
    };
    assert!(Synthesizer::new(&state, relaxed.clone()).is_ok());
    // No Gaussian realisation at all once |m̄| > n̄ + ½.
    let impossible = SpectralState::squeezed_flat(g.spacing(), g.n_bins(), k, 0.1, 0.7, span, false).unwrap();
    assert!(matches!(
        Synthesizer::new(&impossible, relaxed).err().unwrap(),
        Error::Physicality(_)
    ));
}

#[test]
fn pump_must_fall_on_the_segment_grid() {
    let g = grid();
    let k = (12e9 / g.spacing()).round() as usize;
    let state = SpectralState::squeezed_flat(g.spacing(), g.n_bins(), k, 0.3, 0.2, 100, true).unwrap();
    assert!(matches!(
        Synthesizer::new(&state, cfg(1_000_002, 0)).err().unwrap(),
        Error::Config(_)
    ));
}

#[test]
fn pair_correlations_appear_between_sidebands() {
    let g = grid();
    let k = (12e9 / g.spacing()).round() as usize;
    let span = (3e9 / g.spacing()) as usize;
    let (n, m) = (0.3, 0.5);
    let state = SpectralState::squeezed_flat(g.spacing(), g.n_bins(), k, n, m, span, true).unwrap();
    let m1 = ModeSpec::monochromatic(&g, 4.5e9, 200e6, SubBandShape::Rect).unwrap();
    let m2 = ModeSpec::monochromatic(&g, 7.5e9, 200e6, SubBandShape::Rect).unwrap();
    let kernels = vec![
        kernel(&m1, Quadrature::X),
        kernel(&m1, Quadrature::P),
        kernel(&m2, Quadrature::X),
        kernel(&m2, Quadrature::P),
    ];
    let analyzer = Analyzer::new(
        &kernels,
        vec![Probe::Pair { x1: 0, p1: 1, x2: 2, p2: 3 }],
        DEFAULT_FFT_LEN,
    )
    .unwrap();
    let synth = Synthesizer::new(&state, cfg(1 << 20, 9)).unwrap();
    let (accs, _) = analyzer.run(8, |i| Ok(synth.voltage_segment(i))).unwrap();
    let ps = pair_stats(&accs[0]).unwrap();
    assert!(ps.n1.z_score(n) < 4.0 && ps.n2.z_score(n) < 4.0, "{ps:?}");
    // ⟨δn₁δn₂⟩ = |⟨a₁a₂⟩|² for the mirrored rect modes.
    let bichro = ModeSpec::combine(&m1, &m2, 0.5, 0.0).unwrap();
    let expected_m = predict(&bichro, &state, &Dispersion::none()).unwrap().m;
    assert!((expected_m - m).abs() < 1e-9);
    assert!(ps.corr.z_score(m * m) < 4.0, "corr {:?} vs {}", ps.corr, m * m);
}

#[test]
fn chain_gain_scales_the_trace() {
    let g = grid();
    let state = SpectralState::vacuum(g.spacing(), g.n_bins()).unwrap();
    let chain = ChainModel {
        gain_db: Curve::Constant(20.0),
        ..ChainModel::ideal()
    };
    let plain = Synthesizer::new(&state, cfg(1 << 12, 1)).unwrap().voltage_segment(0);
    let gained = Synthesizer::with_chain(&state, cfg(1 << 12, 1), &chain)
        .unwrap()
        .voltage_segment(0);
    for (a, b) in plain.iter().zip(&gained) {
        assert!((b - 10.0 * a).abs() <= 1e-9 * b.abs().max(1e-12));
    }
}

#[test]
fn clipping_fraction_is_reported() {
    let g = grid();
    let state = SpectralState::vacuum(g.spacing(), g.n_bins()).unwrap();
    let v = Synthesizer::new(&state, cfg(1 << 14, 2)).unwrap().voltage_segment(0);
    let rms = (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
    let chain = ChainModel {
        adc: Some(AdcModel {
            bits: 8,
            fullscale: rms,
            nonlinearity: 0.0,
        }),
        ..ChainModel::ideal()
    };
    let (_, clipped) = Synthesizer::with_chain(&state, cfg(1 << 14, 2), &chain)
        .unwrap()
        .segment(0)
        .unwrap();
    // P(|v| > σ) for a Gaussian is 0.317.
    assert!((clipped - 0.317).abs() < 0.03, "{clipped}");
}
