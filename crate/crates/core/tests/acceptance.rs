//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`). Set `PHOTOCOUNT_ACCEPTANCE` to a
//! comma-separated list of criterion numbers to run a subset. The process
//! fails if any criterion fails, except those listed in [`HARDWARE_BOUND`]
//! whose outcome depends on the host and is reported without failing the run.

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::Matrix4;
use photocount::config::{AnalysisSection, ModeConfig, RunConfig, RunSection, StateConfig};
use photocount::constants::{BOLTZMANN, ELEMENTARY_CHARGE, PLANCK};
use photocount::dsp::{ConvolutionEngine, MomentAccumulator};
use photocount::junction::{predict, Dispersion, JunctionModel};
use photocount::kernels::DiscreteKernel;
use photocount::pipeline::Analyzer;
use photocount::quantum::{
    cumulants, duan_check, entanglement_of_formation, entanglement_rate_bichromatic, entanglement_rate_wideband,
    max_pair_amplitude, pair_stats, photon_stats, pure_squeezing_x, squeezing_from_stats, c4_vs_c2_diagnostic,
    CumulantPoint, GaussianBipartite, PhotonStats,
};
use photocount::synth::{AdcModel, ChainModel, Curve};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Criteria whose threshold is a property of the host CPU.
const HARDWARE_BOUND: &[u32] = &[11];

const FS: f64 = 32e9;
/// 2^22 samples: the 12 GHz pump lies on the segment grid.
const SEG: usize = 1 << 22;
const F_PUMP: f64 = 12e9;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn run_config(state: StateConfig, chain: ChainModel, modes: Vec<ModeConfig>, seed: u64) -> RunConfig {
    RunConfig {
        run: RunSection {
            sample_rate: FS,
            segment_len: SEG,
            segments: 1,
            seed,
            impedance: 50.0,
            workers: None,
            output_dir: "out".into(),
        },
        state,
        chain,
        modes,
        analysis: AnalysisSection::default(),
    }
}

fn mono(label: &str, f0: f64, bandwidth: f64) -> ModeConfig {
    ModeConfig::Monochromatic {
        label: label.into(),
        f0,
        bandwidth,
        raised_cosine: false,
    }
}

fn bichromatic(label: &str, f1: f64, f2: f64, lambda: f64) -> ModeConfig {
    ModeConfig::Bichromatic {
        label: label.into(),
        f1,
        f2,
        bandwidth: 200e6,
        lambda,
        phase: 0.0,
    }
}

fn wideband(label: &str, f_lo: f64, f_hi: f64) -> ModeConfig {
    ModeConfig::Wideband {
        label: label.into(),
        f_lo,
        f_hi,
    }
}

fn pair(label: &str, f1: f64, f2: f64) -> ModeConfig {
    ModeConfig::Pair {
        label: label.into(),
        f1,
        f2,
        bandwidth: 200e6,
    }
}

fn families() -> Vec<ModeConfig> {
    vec![
        mono("monochromatic 6 GHz", 6e9, 200e6),
        bichromatic("bichromatic 4.5 & 7.5 GHz", 4.5e9, 7.5e9, 0.5),
        wideband("wideband 4-8 GHz", 4e9, 8e9),
    ]
}

struct Acquired {
    accs: Vec<MomentAccumulator>,
    kernels: Vec<DiscreteKernel>,
    samples: u64,
}

/// Synthesises `segments` segments of `cfg` and analyses every mode. With
/// `digitise`, the analysed trace is the quantised one.
fn acquire(cfg: &RunConfig, segments: u64, digitise: bool) -> Acquired {
    let (analyzer, kernels): (Analyzer, Vec<DiscreteKernel>) = cfg.analyzer_for(&cfg.modes, None).unwrap();
    let synth = cfg.synthesizer().unwrap();
    let (accs, report) = if digitise {
        analyzer.run(segments, |i| Ok(synth.segment(i)?.0)).unwrap()
    } else {
        analyzer.run(segments, |i| Ok(synth.voltage_segment(i))).unwrap()
    };
    Acquired {
        accs,
        kernels,
        samples: report.samples,
    }
}

fn vacuum_anchor() -> Outcome {
    let cfg = run_config(StateConfig::Vacuum, ChainModel::ideal(), families(), 101);
    let segments = 1_000_000_000u64.div_ceil(SEG as u64);
    let acq = acquire(&cfg, segments, true);
    let mut pass = true;
    let mut parts = Vec::new();
    for (mode, acc) in cfg.modes.iter().zip(&acq.accs) {
        let s = photon_stats(acc).unwrap();
        let x2 = s.n.value + 0.5;
        let ok = (x2 - 0.5).abs() <= 0.002 && s.n.value.abs() <= 3.0 * s.n.stderr;
        pass &= ok;
        parts.push(format!("{}: <x²> = {:.5}, n = {:+.1e} ± {:.1e}", mode.label(), x2, s.n.value, s.n.stderr));
    }
    outcome(pass, format!("{:.2e} samples; {}", acq.samples as f64, parts.join("; ")))
}

fn thermal_law() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, &n) in [0.1, 0.5, 1.0, 2.0].iter().enumerate() {
        let cfg = run_config(StateConfig::Thermal { n }, ChainModel::ideal(), families(), 200 + i as u64);
        let acq = acquire(&cfg, 48, false);
        for (mode, acc) in cfg.modes.iter().zip(&acq.accs) {
            let s = photon_stats(acc).unwrap();
            let z = s.fano.z_score(n + 1.0);
            pass &= z <= 3.0;
            parts.push(format!("n={n} {}: F = {:.4} ± {:.4}", short(mode.label()), s.fano.value, s.fano.stderr));
        }
    }
    outcome(pass, parts.join("; "))
}

fn short(label: &str) -> &str {
    label.split_whitespace().next().unwrap_or(label)
}

fn number_splitting() -> Outcome {
    let n = 1.0;
    let modes = vec![bichromatic("bi", 4.5e9, 7.5e9, 0.5), pair("pair", 4.5e9, 7.5e9)];
    let cfg = run_config(StateConfig::Thermal { n }, ChainModel::ideal(), modes, 300);
    let acq = acquire(&cfg, 48, false);
    let single = photon_stats(&acq.accs[0]).unwrap();
    let ps = pair_stats(&acq.accs[1]).unwrap();
    let corr_ok = ps.corr.value.abs() <= 3.0 * ps.corr.stderr;
    // Independent of the library helper: Δ² for an uncorrelated pair.
    let (n1, n2) = (ps.n1.value, ps.n2.value);
    let delta2 = 0.25 * (n1 * (n2 + 1.0) + n2 * (n1 + 1.0));
    let gap = single.var_n.value - ps.var_n_total_quarter.value;
    let gap_err = single.var_n.stderr.hypot(ps.var_n_total_quarter.stderr);
    let below = gap > 3.0 * gap_err;
    let matches = (gap - delta2).abs() <= 3.0 * gap_err;
    outcome(
        corr_ok && below && matches,
        format!(
            "<dn1 dn2> = {:+.4} ± {:.4}; var_n = {:.4}, varN/4 = {:.4}, gap {:.4} ± {:.4} vs Δ² {:.4}",
            ps.corr.value,
            ps.corr.stderr,
            single.var_n.value,
            ps.var_n_total_quarter.value,
            gap,
            gap_err,
            delta2
        ),
    )
}

fn squeezed_estimator() -> Outcome {
    let (n, m) = (0.0292, 0.183);
    let state = StateConfig::Squeezed {
        n,
        m,
        f_pump: F_PUMP,
        span: 2e9,
        check: false,
    };
    let modes = vec![bichromatic("bi", 4.5e9, 7.5e9, 0.5)];
    let acq = acquire(&run_config(state, ChainModel::ideal(), modes.clone(), 400), 48, false);
    let s = photon_stats(&acq.accs[0]).unwrap();
    let (sq, db_err) = squeezing_from_stats(&s);
    let db_ok = (sq.squeezing_db - -1.6).abs() <= 0.2;
    let var_expected = n * (n + 1.0) + m * m;
    let var_ok = s.var_n.z_score(var_expected) <= 3.0;

    // Pure pair: m² = n(n+1) doubles the thermal Fano factor.
    let np = 0.5;
    let pure = StateConfig::Squeezed {
        n: np,
        m: (np * (np + 1.0)).sqrt(),
        f_pump: F_PUMP,
        span: 2e9,
        check: true,
    };
    let pp = photon_stats(&acquire(&run_config(pure, ChainModel::ideal(), modes.clone(), 401), 24, false).accs[0]).unwrap();
    let th = photon_stats(&acquire(&run_config(StateConfig::Thermal { n: np }, ChainModel::ideal(), modes, 402), 24, false).accs[0])
        .unwrap();
    let ratio = pp.fano.value / th.fano.value;
    let ratio_err = ratio * (pp.fano.stderr / pp.fano.value).hypot(th.fano.stderr / th.fano.value);
    // Gated on the exact thermal law; the measured thermal companion is reported.
    let pure_ok = pp.fano.z_score(2.0 * (np + 1.0)) <= 3.0;
    outcome(
        db_ok && var_ok && pure_ok,
        format!(
            "V- = {:.3} ± {:.3} dB; var_n = {:.5} ± {:.5} vs {:.5}; pure-pair Fano {:.4} ± {:.4} vs {:.1}; measured thermal {:.4}, ratio {:.3} ± {:.3}",
            sq.squeezing_db,
            db_err,
            s.var_n.value,
            s.var_n.stderr,
            var_expected,
            pp.fano.value,
            pp.fano.stderr,
            2.0 * (np + 1.0),
            th.fano.value,
            ratio,
            ratio_err
        ),
    )
}

fn entanglement_closed_form() -> Outcome {
    let e2 = entanglement_of_formation(pure_squeezing_x(2.0));
    let anchor = (e2 - 0.307).abs() <= 0.005 && format!("{e2:.1}") == "0.3";
    let db: Vec<f64> = (0..=100).map(|i| 10.0 + 0.5 * i as f64).collect();
    let e: Vec<f64> = db.iter().map(|&d| entanglement_of_formation(pure_squeezing_x(d))).collect();
    let k = db.len() as f64;
    let (mx, my) = (db.iter().sum::<f64>() / k, e.iter().sum::<f64>() / k);
    let sxy: f64 = db.iter().zip(&e).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = db.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    // Large squeezing: E_f → log₂(1/4x) + 1/ln 2, i.e. log₂10/10 bit per dB.
    let asymptote = 10f64.log2() / 10.0;
    let local_dev = db
        .windows(2)
        .zip(e.windows(2))
        .map(|(d, y)| ((y[1] - y[0]) / (d[1] - d[0]) / slope - 1.0).abs())
        .fold(0.0, f64::max);
    let growth = (slope / asymptote - 1.0).abs() < 0.02 && local_dev < 0.02;
    outcome(
        anchor && growth,
        format!(
            "E_f(2 dB) = {e2:.4}; slope {slope:.5} bit/dB vs {asymptote:.5}; worst local slope deviation {:.2}%",
            100.0 * local_dev
        ),
    )
}

fn entanglement_rates() -> Outcome {
    let width = 2e9;
    let df: Vec<f64> = (1..=1600).map(|i| i as f64 * 5e6).collect();
    let ef: Vec<f64> = df.iter().map(|d| 0.23 * (-(d / width).powi(2)).exp()).collect();
    let bi = entanglement_rate_bichromatic(&df, &ef).unwrap();
    let wide = entanglement_rate_wideband(&df, &ef).unwrap();
    let total = *bi.last().unwrap();
    // Closed form of 2∫₀^∞ 0.23 e^{-(ν/w)²} dν.
    let limit = 0.23 * std::f64::consts::PI.sqrt() * width;
    let tail = total - bi[bi.len() * 3 / 4];
    let saturates = bi.windows(2).all(|w| w[1] >= w[0]) && tail < 0.01 * total && (total / limit - 1.0).abs() < 0.005;
    let order = (0.1e9..=10e9).contains(&total);
    let (ipk, peak) = wide
        .iter()
        .copied()
        .enumerate()
        .fold((0, 0.0), |(bi_, bv), (i, v)| if v > bv { (i, v) } else { (bi_, bv) });
    let peaks = ipk > 0 && ipk + 1 < wide.len() && *wide.last().unwrap() < 0.1 * peak && (0.1e9..=10e9).contains(&peak);
    let agree_low = (wide[0] / bi[0] - 1.0).abs() < 0.01;
    outcome(
        saturates && order && peaks && agree_low,
        format!(
            "bichromatic saturates at {:.3} Gebit/s (limit {:.3}); wideband peaks at {:.3} Gebit/s, Δf = {:.2} GHz, ends at {:.2e}",
            total / 1e9,
            limit / 1e9,
            peak / 1e9,
            df[ipk] / 1e9,
            wide.last().unwrap()
        ),
    )
}

/// Smallest partial-transpose symplectic eigenvalue from the singular values
/// of `σ̃^½ Ω σ̃^½`.
fn ppt_oracle(g: &GaussianBipartite) -> f64 {
    let s = g.covariance();
    let flip = Matrix4::from_diagonal(&nalgebra::Vector4::new(1.0, 1.0, 1.0, -1.0));
    let pt = flip * s * flip;
    let omega = Matrix4::new(
        0.0, 1.0, 0.0, 0.0, //
        -1.0, 0.0, 0.0, 0.0, //
        0.0, 0.0, 0.0, 1.0, //
        0.0, 0.0, -1.0, 0.0,
    );
    let eig = pt.symmetric_eigen();
    let root = eig.eigenvectors * Matrix4::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt())) * eig.eigenvectors.transpose();
    (root * omega * root)
        .singular_values()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

fn steering_hierarchy() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(700);
    let (mut violations, mut steerable) = (0, 0);
    for _ in 0..10_000 {
        let n_a = rng.random_range(0.0..3.0);
        let n_b = rng.random_range(0.0..3.0);
        let m = rng.random_range(0.0..=1.0) * max_pair_amplitude(n_a, n_b);
        let g = GaussianBipartite::new(n_a, n_b, m).unwrap();
        if g.steering_a_to_b() > 0.0 || g.steering_b_to_a() > 0.0 {
            steerable += 1;
            if 2.0 * ppt_oracle(&g) >= 1.0 {
                violations += 1;
            }
        }
    }
    let worst = (1..=200)
        .map(|i| {
            let r = i as f64 * 0.01;
            (GaussianBipartite::tmsv(r).steering_a_to_b() - (2.0 * r).cosh().ln()).abs()
        })
        .fold(0.0, f64::max);
    outcome(
        violations == 0 && steerable > 0 && worst < 1e-9,
        format!("{steerable} steerable of 10⁴, {violations} without PPT entanglement; TMSV worst |G - ln cosh 2r| = {worst:.1e}"),
    )
}

fn duan_sweep() -> Outcome {
    let lambdas: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
    let mut modes: Vec<ModeConfig> =
        lambdas.iter().map(|&l| bichromatic(&format!("λ={l}"), 4.25e9, 7.75e9, l)).collect();
    modes.push(pair("pair", 4.25e9, 7.75e9));
    let state = StateConfig::Junction(JunctionModel::squeezing_operating_point());
    let cfg = run_config(state, ChainModel::ideal(), modes, 800);
    let acq = acquire(&cfg, 48, false);
    let mut v = Vec::new();
    let mut m = Vec::new();
    for acc in &acq.accs[..lambdas.len()] {
        let (sq, _) = squeezing_from_stats(&photon_stats(acc).unwrap());
        v.push(sq.v_minus);
        m.push(sq.m);
    }
    let measured = duan_check(&lambdas, &v).unwrap();
    let ps = pair_stats(&acq.accs[lambdas.len()]).unwrap();
    let m12 = ps.corr.value.max(0.0).sqrt();
    let fine: Vec<f64> = (1..1000).map(|i| i as f64 / 1000.0).collect();
    let vf: Vec<f64> = fine
        .iter()
        .map(|&l| 0.5 + (1.0 - l) * ps.n1.value + l * ps.n2.value - 2.0 * (l * (1.0 - l)).sqrt() * m12)
        .collect();
    let from_pair = duan_check(&fine, &vf).unwrap();
    let imax = m.iter().copied().enumerate().fold((0, f64::MIN), |a, (i, x)| if x > a.1 { (i, x) } else { a }).0;
    let m_peak_ok = (lambdas[imax] - 0.5).abs() <= 0.1 + 1e-12;
    let pass = measured.lambda_star > 0.5 && from_pair.lambda_star > 0.5 && m_peak_ok;
    let vs: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    outcome(
        pass,
        format!(
            "λ* = {:.1} (λ-modes), {:.3} (pair n1={:.3} n2={:.3} m={:.3}); m(λ) peaks at {:.1}; V-(λ) = [{}]",
            measured.lambda_star,
            from_pair.lambda_star,
            ps.n1.value,
            ps.n2.value,
            m12,
            lambdas[imax],
            vs.join(", ")
        ),
    )
}

fn calibration_round_trip() -> Outcome {
    use photocount::calib::{fit_thermometry, BiasSpectra};
    let (r, z, te) = (52.5, 50.0, 17.4e-3);
    // Direct photo-assisted-free S2 of a biased junction, A²/Hz.
    let s2 = |f: f64, v: f64| {
        let term = |e: f64| {
            let x = e / (2.0 * BOLTZMANN * te);
            if x.abs() < 1e-12 {
                2.0 * BOLTZMANN * te / (2.0 * r)
            } else {
                e / x.tanh() / (2.0 * r)
            }
        };
        term(ELEMENTARY_CHARGE * v + PLANCK * f) + term(ELEMENTARY_CHARGE * v - PLANCK * f)
    };
    let gain_db = |f: f64| 70.0 + 2.0 * (f / 1e9 - 6.0);
    let t_n = |f: f64| 3.0 + 0.25 * (f / 1e9 - 4.0);
    let freqs: Vec<f64> = (0..9).map(|i| 4e9 + i as f64 * 0.5e9).collect();
    let currents: Vec<f64> = (-480..=480).map(|i| i as f64 * 0.005e-6).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(900);
    let psd = freqs
        .iter()
        .map(|&f| {
            let g = 10f64.powf(gain_db(f) / 10.0);
            currents
                .iter()
                .map(|&i| {
                    let clean = g * z * (r * s2(f, i * r) / 2.0 + BOLTZMANN * t_n(f));
                    clean * (1.0 + 2e-4 * rng.sample::<f64, _>(StandardNormal))
                })
                .collect()
        })
        .collect();
    let fit = fit_thermometry(&BiasSpectra::new(freqs, currents, psd).unwrap(), r, z).unwrap();
    let worst_gain = fit.bins.iter().map(|b| (b.gain_db - gain_db(b.f)).abs()).fold(0.0, f64::max);
    let te_dev = fit.te / te - 1.0;
    outcome(
        te_dev.abs() < 0.02 && worst_gain < 0.1,
        format!(
            "Te = {:.3} ± {:.3} mK ({:+.2}%); worst gain error {:.4} dB over {} bins",
            1e3 * fit.te,
            1e3 * fit.te_err,
            100.0 * te_dev,
            worst_gain,
            fit.bins.len()
        ),
    )
}

/// Amplifier noise temperature: the amplifier dominates C2 as in a real chain.
const NL_NOISE_TEMP: f64 = 10.0;

/// C4 against C2 for a drive sweep digitised with a cubic ADC whose full scale
/// is `fullscale_factor` times the undriven rms voltage. Every drive point uses
/// the same analog realisation at both full scales.
fn nonlinear_sweep(fullscale_factor: f64, rms0: f64) -> Vec<CumulantPoint> {
    [0.0, 1.0, 2.0, 3.0, 4.0]
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let chain = ChainModel {
                noise_temp: Curve::Constant(NL_NOISE_TEMP),
                adc: Some(AdcModel {
                    bits: 10,
                    fullscale: fullscale_factor * rms0,
                    nonlinearity: 2.0,
                }),
                ..ChainModel::ideal()
            };
            let modes = vec![wideband("wide", 4e9, 8e9)];
            let cfg = run_config(StateConfig::Thermal { n }, chain, modes, 1000 + i as u64);
            let acc = &acquire(&cfg, 32, true).accs[0];
            let (c2, c4) = cumulants(acc).unwrap();
            CumulantPoint {
                c2: c2.value,
                c4: c4.value,
                c4_err: c4.stderr,
                expected_c4: 0.0,
            }
        })
        .collect()
}

fn nonlinearity_diagnostic() -> Outcome {
    let chain = ChainModel {
        noise_temp: Curve::Constant(NL_NOISE_TEMP),
        ..ChainModel::ideal()
    };
    let cfg = run_config(StateConfig::Thermal { n: 0.0 }, chain, vec![wideband("wide", 4e9, 8e9)], 999);
    let v = cfg.synthesizer().unwrap().voltage_segment(0);
    let rms0 = (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
    // Undriven rms at 0.15 of full scale, then at 0.075 (input amplitude halved).
    let full = c4_vs_c2_diagnostic(&nonlinear_sweep(1.0 / 0.15, rms0)).unwrap();
    let half = c4_vs_c2_diagnostic(&nonlinear_sweep(2.0 / 0.15, rms0)).unwrap();
    let reduction = full.slope / half.slope;
    let reduction_err = reduction * (full.slope_err / full.slope).hypot(half.slope_err / half.slope);
    let pass = !full.linear && full.slope > 0.0 && reduction >= 4.0;
    outcome(
        pass,
        format!(
            "slope {:.4} ± {:.4} at full drive, {:.4} ± {:.4} at half amplitude; reduction {:.2} ± {:.2}",
            full.slope, full.slope_err, half.slope, half.slope_err, reduction, reduction_err
        ),
    )
}

fn engine_correctness_and_throughput() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1100);
    let kernels: Vec<DiscreteKernel> = (0..4)
        .map(|i| {
            let taps = (0..257).map(|_| rng.random_range(-1.0..1.0)).collect();
            DiscreteKernel::from_taps(taps, FS, format!("random {i}")).unwrap()
        })
        .collect();
    let refs: Vec<&DiscreteKernel> = kernels.iter().collect();
    let trace: Vec<f64> = (0..60_000).map(|_| rng.sample(StandardNormal)).collect();
    let engine = ConvolutionEngine::new(&refs, 4096).unwrap();
    let mut worst = 0.0f64;
    engine
        .process(&trace, |start, outs| {
            for (k, out) in kernels.iter().zip(outs) {
                for (j, y) in out.iter().enumerate() {
                    let t = (start + j) as i64;
                    let direct: f64 = (-128..=128).map(|m| k.tap(m) * trace[(t - m) as usize]).sum();
                    let scale = k.taps().iter().map(|h| h.abs()).sum::<f64>();
                    worst = worst.max((y - direct).abs() / scale);
                }
            }
            Ok(())
        })
        .unwrap();

    // Throughput on one worker with four designed mode kernels.
    let modes = vec![
        mono("a", 5e9, 200e6),
        mono("b", 6e9, 200e6),
        bichromatic("c", 4.5e9, 7.5e9, 0.5),
        wideband("d", 4e9, 8e9),
    ];
    let mut cfg = run_config(StateConfig::Vacuum, ChainModel::ideal(), modes, 1101);
    cfg.analysis.fft_len = 4096;
    let (analyzer, _) = cfg.analyzer_for(&cfg.modes, None).unwrap();
    let input: Vec<f64> = (0..SEG).map(|_| rng.sample(StandardNormal)).collect();
    let segments = 24;
    let (secs, samples) = photocount::pipeline::with_workers(Some(1), || {
        let t0 = Instant::now();
        let (_, rep) = analyzer.run(segments, |_| Ok(&input)).unwrap();
        (t0.elapsed().as_secs_f64(), rep.samples)
    })
    .unwrap();
    let rate = samples as f64 / secs;
    outcome(
        worst < 1e-12 && rate >= 50e6,
        format!(
            "worst relative deviation from direct convolution {worst:.1e}; {:.1} MSa/s on one core (257 taps, 4 modes)",
            rate / 1e6
        ),
    )
}

fn m_of(s: &PhotonStats) -> (f64, f64) {
    let (sq, _) = squeezing_from_stats(s);
    // m = √(var_n − n(n+1)); first-order error propagation.
    let dm_dvar = 0.5 / sq.m.max(1e-12);
    let dm_dn = -(2.0 * s.n.value + 1.0) * dm_dvar;
    (sq.m, (dm_dvar * s.var_n.stderr).hypot(dm_dn * s.n.stderr))
}

fn dispersion_sensitivity() -> Outcome {
    let modes = vec![bichromatic("bi", 4.25e9, 7.75e9, 0.5), wideband("wide", 3.5e9, 8.5e9)];
    let state = StateConfig::Junction(JunctionModel::squeezing_operating_point());
    let flat = run_config(state.clone(), ChainModel::ideal(), modes.clone(), 1200);
    let bent = run_config(
        state,
        ChainModel {
            dispersion: Dispersion::measured_chain(),
            ..ChainModel::ideal()
        },
        modes,
        1200,
    );
    let a = acquire(&flat, 96, false);
    let b = acquire(&bent, 96, false);
    let sa: Vec<(f64, f64)> = a.accs.iter().map(|x| m_of(&photon_stats(x).unwrap())).collect();
    let sb: Vec<(f64, f64)> = b.accs.iter().map(|x| m_of(&photon_stats(x).unwrap())).collect();
    let st = flat.state().unwrap();
    let pred = |k: &DiscreteKernel, d: &Dispersion| predict(k.effective_mode().unwrap(), &st, d).unwrap().m;
    let bi_ratio = sb[0].0 / sa[0].0;
    let wide_drop = sa[1].0 - sb[1].0;
    let wide_err = sa[1].1.hypot(sb[1].1);
    let pred_bi = pred(&a.kernels[0], &Dispersion::measured_chain()) / pred(&a.kernels[0], &Dispersion::none());
    let pred_wide = pred(&a.kernels[1], &Dispersion::measured_chain()) / pred(&a.kernels[1], &Dispersion::none());
    outcome(
        (bi_ratio - 1.0).abs() < 0.01 && wide_drop > 3.0 * wide_err,
        format!(
            "bichromatic m {:.4} → {:.4} (ratio {:.4}, predicted {:.4}); wideband m {:.4} → {:.4} (drop {:.4} ± {:.4}, predicted ratio {:.3})",
            sa[0].0, sb[0].0, bi_ratio, pred_bi, sa[1].0, sb[1].0, wide_drop, wide_err, pred_wide
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, fn() -> Outcome); 12] = [
        (1, "vacuum anchor", vacuum_anchor),
        (2, "thermal Fano law", thermal_law),
        (3, "total number vs bichromatic number variance", number_splitting),
        (4, "squeezed-state estimator", squeezed_estimator),
        (5, "entanglement of formation closed form", entanglement_closed_form),
        (6, "entanglement rates", entanglement_rates),
        (7, "steering hierarchy", steering_hierarchy),
        (8, "Duan λ sweep", duan_sweep),
        (9, "calibration round trip", calibration_round_trip),
        (10, "ADC nonlinearity diagnostic", nonlinearity_diagnostic),
        (11, "engine correctness and throughput", engine_correctness_and_throughput),
        (12, "dispersion sensitivity", dispersion_sensitivity),
    ];
    let only: Option<Vec<u32>> = std::env::var("PHOTOCOUNT_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let mut blocking = 0;
    for (id, name, check) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let t0 = Instant::now();
        let o = check();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        let note = if !o.pass && HARDWARE_BOUND.contains(&id) { " [host-bound]" } else { "" };
        println!("{tag} {id:>2} {name}{note} ({:.0} s): {}", t0.elapsed().as_secs_f64(), o.detail);
        if !o.pass && !HARDWARE_BOUND.contains(&id) {
            blocking += 1;
        }
    }
    if blocking == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
