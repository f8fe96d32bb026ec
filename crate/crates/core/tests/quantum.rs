use nalgebra::Matrix4;
use photocount::dsp::{Layout, MomentAccumulator, DEFAULT_FFT_LEN};
use photocount::junction::SpectralState;
use photocount::kernels::{design_kernel, ComposeOptions, Quadrature};
use photocount::modes::{ModeGrid, ModeSpec, SubBandShape};
use photocount::pipeline::{Analyzer, Probe};
use photocount::quantum::*;
use photocount::synth::{ChainModel, Curve, SynthConfig, Synthesizer};
use photocount::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Symplectic spectrum as the singular values of `σ^½ Ω σ^½`.
fn symplectic_oracle(sigma: &Matrix4<f64>) -> (f64, f64) {
    let omega = Matrix4::new(
        0.0, 1.0, 0.0, 0.0, //
        -1.0, 0.0, 0.0, 0.0, //
        0.0, 0.0, 0.0, 1.0, //
        0.0, 0.0, -1.0, 0.0,
    );
    let eig = sigma.symmetric_eigen();
    let root = eig.eigenvectors
        * Matrix4::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()))
        * eig.eigenvectors.transpose();
    let mut sv: Vec<f64> = (root * omega * root).singular_values().iter().copied().collect();
    sv.sort_by(f64::total_cmp);
    (sv[0], sv[3])
}

fn partial_transpose(sigma: &Matrix4<f64>) -> Matrix4<f64> {
    let flip = Matrix4::from_diagonal(&nalgebra::Vector4::new(1.0, 1.0, 1.0, -1.0));
    flip * sigma * flip
}

fn random_physical(rng: &mut ChaCha8Rng) -> GaussianBipartite {
    let n_a = rng.random_range(0.0..3.0);
    let n_b = rng.random_range(0.0..3.0);
    let m = rng.random_range(0.0..=1.0) * max_pair_amplitude(n_a, n_b);
    GaussianBipartite::new(n_a, n_b, m).unwrap()
}

proptest! {
    #[test]
    fn symplectic_eigenvalues_match_eigen_oracle(n_a in 0.0f64..5.0, n_b in 0.0f64..5.0, frac in 0.0f64..1.0) {
        let g = GaussianBipartite::new(n_a, n_b, frac * max_pair_amplitude(n_a, n_b)).unwrap();
        let (lo, hi) = g.symplectic_eigenvalues();
        let (olo, ohi) = symplectic_oracle(&g.covariance());
        prop_assert!((lo - olo).abs() < 1e-7 && (hi - ohi).abs() < 1e-7, "{lo} {olo} {hi} {ohi}");
        let (pt, _) = symplectic_oracle(&partial_transpose(&g.covariance()));
        prop_assert!((g.nu_tilde_minus() - pt).abs() < 1e-7);
        // Physical states obey the uncertainty principle ν₋ ≥ ½.
        prop_assert!(lo >= 0.5 - 1e-7);
    }

    #[test]
    fn steering_implies_entanglement(n_a in 0.0f64..4.0, n_b in 0.0f64..4.0, frac in 0.0f64..1.0) {
        let g = GaussianBipartite::new(n_a, n_b, frac * max_pair_amplitude(n_a, n_b)).unwrap();
        if g.steering_a_to_b() > 0.0 || g.steering_b_to_a() > 0.0 {
            prop_assert!(g.is_entangled());
        }
        prop_assert!(g.eta() > 0.0 && g.purity() <= 1.0 + 1e-9);
    }
}

#[test]
fn tmsv_closed_forms() {
    for &r in &[0.05, 0.3, 1.0, 2.5] {
        let g = GaussianBipartite::tmsv(r);
        assert!((g.steering_a_to_b() - (2.0 * r).cosh().ln()).abs() < 1e-9);
        assert!((g.steering_b_to_a() - (2.0 * r).cosh().ln()).abs() < 1e-9);
        assert!((g.purity() - 1.0).abs() < 1e-9);
        assert!((g.eta() - (2.0 * r).cosh().powi(-2)).abs() < 1e-9);
        assert_eq!(g.class(), CorrelationClass::TwoWay);
        let (c2, s2) = (r.cosh().powi(2), r.sinh().powi(2));
        let oracle = c2 * c2.log2() - s2 * s2.log2();
        assert!((g.entanglement_of_formation() - oracle).abs() < 1e-9 * oracle.max(1.0));
        assert!((2.0 * g.nu_tilde_minus() - (-2.0 * r).exp()).abs() < 1e-9);
    }
}

#[test]
fn entanglement_of_formation_of_two_db_squeezing() {
    let e = entanglement_of_formation(pure_squeezing_x(2.0));
    assert!((e - 0.307).abs() < 0.005, "{e}");
    assert_eq!(entanglement_of_formation(1.0), 0.0);
    assert_eq!(entanglement_of_formation(1.7), 0.0);
}

#[test]
fn class_hierarchy_examples() {
    let sep = GaussianBipartite::new(1.0, 1.0, 0.3).unwrap();
    assert_eq!(sep.class(), CorrelationClass::Separable);
    // Entangled without steering: a noisy symmetric state just past PPT.
    let n = 1.0;
    let ent = GaussianBipartite::new(n, n, n + 0.1).unwrap();
    assert!(ent.is_entangled());
    assert_eq!(ent.class(), CorrelationClass::Entangled);
    // G_{B→A} = ½ ln(4 det B / 16 det σ) = ½ ln(25/21.16) > 0 while G_{A→B} < 0.
    let asym = GaussianBipartite::new(0.2, 2.0, max_pair_amplitude(0.2, 2.0)).unwrap();
    assert_eq!(asym.class(), CorrelationClass::SteerableBToA);
    assert!((asym.steering_b_to_a() - 0.5 * (25.0f64 / 21.16).ln()).abs() < 1e-9);
    assert!(asym.is_asymmetric());
    assert!(!GaussianBipartite::tmsv(0.5).is_asymmetric());
}

#[test]
fn random_states_never_steer_without_entanglement() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut violations = 0;
    for _ in 0..10_000 {
        let g = random_physical(&mut rng);
        if (g.steering_a_to_b() > 0.0 || g.steering_b_to_a() > 0.0) && !g.is_entangled() {
            violations += 1;
        }
    }
    assert_eq!(violations, 0);
}

#[test]
fn lambda_weighted_mode_by_monte_carlo() {
    // Classical sampling of a correlated pair: ⟨d²⟩ = 2√(λ(1-λ)) ⟨a₁a₂⟩.
    let (n1, n2, m) = (0.8f64, 0.6f64, 0.5f64);
    let (big1, big2) = (n1 + 0.5, n2 + 0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let samples = 400_000;
    let lam = 0.3f64;
    let (mut d2, mut dd) = (num_complex::Complex64::new(0.0, 0.0), 0.0);
    let mut xi = || {
        num_complex::Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)) * std::f64::consts::FRAC_1_SQRT_2
    };
    for _ in 0..samples {
        let (x1, x2) = (xi(), xi());
        let a1 = x1 * big1.sqrt();
        let a2 = x1.conj() * (m / big1.sqrt()) + x2 * (big2 - m * m / big1).sqrt();
        let d = a1 * (1.0 - lam).sqrt() + a2 * lam.sqrt();
        d2 += d * d;
        dd += d.norm_sqr();
    }
    let d2 = d2.norm() / samples as f64;
    let expected = 2.0 * (lam * (1.0 - lam)).sqrt() * m;
    assert!((d2 - expected).abs() < 0.01, "{d2} {expected}");
    let v_minus = dd / samples as f64 - d2;
    assert!((v_minus - v_minus_lambda(n1, n2, m, lam)).abs() < 0.01);
}

#[test]
fn v_minus_minimum_leans_toward_the_quieter_mode() {
    let (n1, n2, m) = (0.4, 0.1, 0.3);
    let lams: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
    let v: Vec<f64> = lams.iter().map(|&l| v_minus_lambda(n1, n2, m, l)).collect();
    let r = duan_check(&lams, &v).unwrap();
    assert!(r.lambda_star > 0.5 && r.v_min < 0.5);
}

fn reference_pair(n_signal: f64, noise_temp: f64) -> (MomentAccumulator, MomentAccumulator) {
    let grid = ModeGrid::new(32e9, 1 << 14, 1e9, 15e9).unwrap();
    let mode = ModeSpec::monochromatic(&grid, 6e9, 400e6, SubBandShape::Rect).unwrap();
    let chain = ChainModel {
        gain_db: Curve::Constant(0.0),
        noise_temp: Curve::Constant(noise_temp),
        ..ChainModel::ideal()
    };
    let gain = chain.gain_curve(grid.spacing(), grid.n_bins());
    let k = design_kernel(&mode, Quadrature::X, 257, 50.0, &gain, &ComposeOptions::default()).unwrap();
    let analyzer = Analyzer::new(&[k], vec![Probe::Single { x: 0 }], DEFAULT_FFT_LEN).unwrap();
    let run = |n: f64, seed: u64| {
        let state = SpectralState::thermal_flat(grid.spacing(), grid.n_bins(), n).unwrap();
        let cfg = SynthConfig {
            segment_len: 1 << 20,
            seed,
            ..SynthConfig::default()
        };
        let synth = Synthesizer::with_chain(&state, cfg, &chain).unwrap();
        analyzer.run(16, |i| Ok(synth.voltage_segment(i))).unwrap().0.remove(0)
    };
    (run(n_signal, 1), run(0.0, 2))
}

#[test]
fn reference_subtraction_removes_amplifier_noise() {
    let n = 0.5;
    let (cond, reference) = reference_pair(n, 0.3);
    let raw = photon_stats(&cond).unwrap();
    assert!(raw.n.value > n + 0.5, "amplifier noise should dominate: {:?}", raw.n);
    let s = reference_subtract(&cond, &reference).unwrap();
    assert!(s.n.z_score(n) < 4.0, "{:?}", s.n);
    assert!(s.var_n.z_score(n * (n + 1.0)) < 4.0, "{:?}", s.var_n);
}

#[test]
fn reference_subtraction_rejects_foreign_kernels() {
    let a = MomentAccumulator::new(Layout::Single, "kernel-a");
    let b = MomentAccumulator::new(Layout::Single, "kernel-b");
    assert!(matches!(reference_subtract(&a, &b), Err(Error::Mismatch(_))));
}

#[test]
fn rates_have_the_expected_shapes() {
    let df: Vec<f64> = (1..=400).map(|i| i as f64 * 10e6).collect();
    let ef: Vec<f64> = df.iter().map(|d| 0.23 * (-d / 1e9).exp()).collect();
    let wide = entanglement_rate_wideband(&df, &ef).unwrap();
    let bi = entanglement_rate_bichromatic(&df, &ef).unwrap();
    let peak = wide.iter().cloned().fold(0.0, f64::max);
    assert!(peak > wide[0] && peak > *wide.last().unwrap());
    assert!(bi.windows(2).all(|w| w[1] >= w[0]));
    assert!((bi.last().unwrap() - 2.0 * 0.23e9).abs() / (2.0 * 0.23e9) < 0.05);
}

#[test]
fn masked_points_are_left_out_of_the_linearity_fit() {
    let mut pts: Vec<CumulantPoint> = (1..=5)
        .map(|i| CumulantPoint {
            c2: i as f64,
            c4: 0.0,
            c4_err: 0.01,
            expected_c4: 0.0,
        })
        .collect();
    pts.push(CumulantPoint {
        c2: 6.0,
        c4: 5.0,
        c4_err: 0.01,
        expected_c4: 5.0,
    });
    let r = c4_vs_c2_diagnostic(&pts).unwrap();
    assert_eq!(r.used, 5);
    assert!(r.linear && r.slope.abs() < 1e-12);
}
