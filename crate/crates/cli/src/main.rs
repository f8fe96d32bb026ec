//! `photocount`: synthesise digitiser traces, count photons in arbitrary
//! modes, and report entanglement, steering and calibration results.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use photocount::calib::{fit_thermometry, BiasSpectra};
use photocount::config::{ModeConfig, Provenance, RunConfig};
use photocount::dsp::{MomentAccumulator, TraceReader, TraceSegment};
use photocount::junction::predict;
use photocount::kernels::DiscreteKernel;
use photocount::pipeline::{with_workers, workers_from_env, Analyzer, Probe};
use photocount::quantum::{
    entanglement_rate_bichromatic, entanglement_rate_wideband, m_and_variances, pair_stats, photon_stats,
    reference_subtract, squeezing_from_stats, GaussianBipartite, PairStats, PhotonStats,
};
use photocount::synth::ChainModel;
use photocount::{Error, Result};

#[derive(Parser)]
#[command(name = "photocount", version, about = "Photon counting in arbitrary modes from digitised voltage traces")]
struct Cli {
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true, env = "PHOTOCOUNT_WORKERS")]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesise a trace file from the configured state and chain.
    Synth {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to `<output_dir>/trace.pctr`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Photon statistics for every configured mode.
    Analyze(Source),
    /// Squeezing spectrum over the configured sideband sweep.
    Spectrum(Source),
    /// Entanglement of formation and rates over the Δf grid.
    Entangle(Source),
    /// Purities, steerability and correlation class over the Δf grid.
    Steer(Source),
    /// Fit gain, noise temperature and electron temperature to noise spectra.
    Calibrate {
        /// CSV with columns f_hz, idc_a, psd.
        #[arg(long)]
        spectra: PathBuf,
        #[arg(long)]
        resistance: f64,
        #[arg(long, default_value_t = 50.0)]
        impedance: f64,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Measure analysis throughput against worker count.
    Bench {
        #[arg(long, default_value_t = 257)]
        taps: usize,
        #[arg(long, default_value_t = 4)]
        modes: usize,
        /// Samples per segment.
        #[arg(long, default_value_t = 1 << 22)]
        segment_len: usize,
        #[arg(long, default_value_t = 8)]
        segments: u64,
        #[arg(long, default_value_t = 1 << 14)]
        fft_len: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Source {
    #[arg(long)]
    config: PathBuf,
    /// Trace file to analyse; synthesised on the fly from the config if absent.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Source-off trace for reference subtraction.
    #[arg(long, conflicts_with = "synth_reference")]
    reference: Option<PathBuf>,
    /// Synthesise a vacuum reference through the configured chain.
    #[arg(long)]
    synth_reference: bool,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Physicality(_) => 3,
        Error::Io(_) => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let workers = cli.workers.or_else(workers_from_env);
    let result = with_workers(workers, || run(cli.command)).and_then(|r| r);
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth { config, out } => cmd_synth(&config, out),
        Command::Analyze(src) => cmd_analyze(&src),
        Command::Spectrum(src) => cmd_spectrum(&src),
        Command::Entangle(src) => cmd_pairs(&src, PairReport::Entangle),
        Command::Steer(src) => cmd_pairs(&src, PairReport::Steer),
        Command::Calibrate {
            spectra,
            resistance,
            impedance,
            out_dir,
        } => cmd_calibrate(&spectra, resistance, impedance, &out_dir),
        Command::Bench {
            taps,
            modes,
            segment_len,
            segments,
            fft_len,
            out,
        } => cmd_bench(taps, modes, segment_len, segments, fft_len, out),
    }
}

fn write_outputs(cfg: &RunConfig, command: &str, files: &[PathBuf]) -> Result<()> {
    let prov = Provenance::new(cfg, command, files.to_vec())?;
    for f in files {
        prov.write_sidecar(f)?;
    }
    Ok(())
}

fn cmd_synth(config: &Path, out: Option<PathBuf>) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let out = out.unwrap_or_else(|| cfg.run.output_dir.join("trace.pctr"));
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let synth = cfg.synthesizer()?;
    let mut w = BufWriter::new(File::create(&out)?);
    let batch = rayon::current_num_threads().max(1) as u64;
    let mut worst_clip = 0.0f64;
    let mut next = 0;
    while next < cfg.run.segments {
        let end = (next + batch).min(cfg.run.segments);
        let segs: Vec<(TraceSegment, f64)> = {
            use rayon::prelude::*;
            (next..end).into_par_iter().map(|i| synth.segment(i)).collect::<Result<_>>()?
        };
        for (s, clip) in &segs {
            s.write_to(&mut w)?;
            worst_clip = worst_clip.max(*clip);
        }
        next = end;
    }
    w.flush()?;
    write_outputs(&cfg, "synth", &[out.clone()])?;
    println!(
        "wrote {} segments of {} samples to {} (worst clipping {:.3}%)",
        cfg.run.segments,
        cfg.run.segment_len,
        out.display(),
        100.0 * worst_clip
    );
    Ok(())
}

/// Calibrated chain when the config names a calibration file.
fn calibrated_chain(cfg: &RunConfig) -> Result<Option<ChainModel>> {
    let Some(path) = &cfg.analysis.calibration else {
        return Ok(None);
    };
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("calibration file {}: {e}", path.display())))?;
    let fit: photocount::calib::CalibResult = serde_json::from_str(&text)?;
    Ok(Some(ChainModel {
        gain_db: fit.gain_curve(),
        noise_temp: fit.noise_temp_curve(),
        ..cfg.chain.clone()
    }))
}

/// Runs `analyzer` over a trace file in batches of segments.
fn analyze_trace(analyzer: &Analyzer, path: &Path, sample_rate: f64) -> Result<Vec<MomentAccumulator>> {
    let mut reader = TraceReader::new(BufReader::new(File::open(path)?));
    let batch = rayon::current_num_threads().max(1);
    let mut total = analyzer.new_accumulators();
    loop {
        let mut segs = Vec::with_capacity(batch);
        for _ in 0..batch {
            match reader.next() {
                Some(s) => segs.push(s?),
                None => break,
            }
        }
        if segs.is_empty() {
            break;
        }
        if let Some(bad) = segs.iter().find(|s| (s.sample_rate - sample_rate).abs() > 1e-6 * sample_rate) {
            return Err(Error::Mismatch(format!(
                "trace sample rate {} Hz differs from configured {} Hz",
                bad.sample_rate, sample_rate
            )));
        }
        let (accs, _) = analyzer.run(segs.len() as u64, |i| Ok(&segs[i as usize]))?;
        total = total.into_iter().zip(accs).map(|(a, b)| a.merge(b)).collect::<Result<_>>()?;
    }
    Ok(total)
}

fn acquire(cfg: &RunConfig, analyzer: &Analyzer, src: &Source) -> Result<(Vec<MomentAccumulator>, Option<Vec<MomentAccumulator>>)> {
    let cond = match &src.trace {
        Some(p) => analyze_trace(analyzer, p, cfg.run.sample_rate)?,
        None => {
            let synth = cfg.synthesizer()?;
            analyzer.run(cfg.run.segments, |i| Ok(synth.segment(i)?.0))?.0
        }
    };
    let reference = if let Some(p) = &src.reference {
        Some(analyze_trace(analyzer, p, cfg.run.sample_rate)?)
    } else if src.synth_reference {
        let mut vac = cfg.clone();
        vac.state = photocount::config::StateConfig::Vacuum;
        vac.run.seed = cfg.run.seed.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let synth = vac.synthesizer()?;
        Some(analyzer.run(cfg.run.segments, |i| Ok(synth.segment(i)?.0))?.0)
    } else {
        None
    };
    Ok((cond, reference))
}

fn single_stats(acc: &MomentAccumulator, reference: Option<&MomentAccumulator>) -> Result<PhotonStats> {
    match reference {
        Some(r) => reference_subtract(acc, r),
        None => photon_stats(acc),
    }
}

/// Pair statistics; with a reference, its occupancies are subtracted.
fn pair_stats_ref(acc: &MomentAccumulator, reference: Option<&MomentAccumulator>) -> Result<PairStats> {
    let mut s = pair_stats(acc)?;
    if let Some(r) = reference {
        let z = pair_stats(r)?;
        let sub = |a: photocount::dsp::Estimate, b: photocount::dsp::Estimate| {
            photocount::dsp::Estimate::new(a.value - b.value, a.stderr.hypot(b.stderr))
        };
        s.n1 = sub(s.n1, z.n1);
        s.n2 = sub(s.n2, z.n2);
    }
    Ok(s)
}

fn check_invariants(label: &str, s: &PhotonStats) -> Result<()> {
    for (what, e) in [("n", s.n), ("var_n", s.var_n)] {
        if e.value < -3.0 * e.stderr.max(0.0) {
            return Err(Error::Physicality(format!(
                "mode '{label}': {what} = {} ± {} is negative beyond 3σ",
                e.value, e.stderr
            )));
        }
    }
    Ok(())
}

fn out_dir(cfg: &RunConfig, src: &Source) -> Result<PathBuf> {
    let d = src.out_dir.clone().unwrap_or_else(|| cfg.run.output_dir.clone());
    fs::create_dir_all(&d)?;
    Ok(d)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(File::create(path)?);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

#[derive(Serialize)]
struct ModeRow {
    config_hash: String,
    label: String,
    samples: u64,
    n: f64,
    n_err: f64,
    var_n: f64,
    var_n_err: f64,
    fano: f64,
    fano_err: f64,
    m: f64,
    v_minus_db: f64,
    v_minus_db_err: f64,
    below_thermal: bool,
    predicted_n: Option<f64>,
    predicted_m: Option<f64>,
    predicted_v_minus_db: Option<f64>,
}

#[derive(Serialize)]
struct PairRow {
    config_hash: String,
    label: String,
    samples: u64,
    n1: f64,
    n1_err: f64,
    n2: f64,
    n2_err: f64,
    corr: f64,
    corr_err: f64,
    var_n_total_quarter: f64,
    var_n_total_quarter_err: f64,
}

/// Prediction for a single-mode probe from the kernel's effective mode.
fn prediction(cfg: &RunConfig, kernel: &DiscreteKernel, synthesized: bool) -> Result<Option<photocount::junction::Prediction>> {
    if !synthesized {
        return Ok(None);
    }
    let Some(mode) = kernel.effective_mode() else {
        return Ok(None);
    };
    let state = cfg.state()?;
    Ok(Some(predict(mode, &state, &cfg.chain.dispersion)?))
}

fn cmd_analyze(src: &Source) -> Result<()> {
    let cfg = RunConfig::load(&src.config)?;
    if cfg.modes.is_empty() {
        return Err(Error::Config("no modes configured".into()));
    }
    let cal = calibrated_chain(&cfg)?;
    let (analyzer, kernels) = cfg.analyzer_for(&cfg.modes, cal.as_ref())?;
    let (accs, reference) = acquire(&cfg, &analyzer, src)?;
    let hash = cfg.hash()?;
    let mut singles = Vec::new();
    let mut pairs = Vec::new();
    for (i, (mode, probe)) in cfg.modes.iter().zip(analyzer.probes()).enumerate() {
        let r = reference.as_ref().map(|r| &r[i]);
        match *probe {
            Probe::Single { x } => {
                let s = single_stats(&accs[i], r)?;
                check_invariants(mode.label(), &s)?;
                let (sq, sq_err) = squeezing_from_stats(&s);
                let p = prediction(&cfg, &kernels[x], src.trace.is_none())?;
                singles.push(ModeRow {
                    config_hash: hash.clone(),
                    label: mode.label().to_string(),
                    samples: s.samples,
                    n: s.n.value,
                    n_err: s.n.stderr,
                    var_n: s.var_n.value,
                    var_n_err: s.var_n.stderr,
                    fano: s.fano.value,
                    fano_err: s.fano.stderr,
                    m: sq.m,
                    v_minus_db: sq.squeezing_db,
                    v_minus_db_err: sq_err,
                    below_thermal: sq.below_thermal,
                    predicted_n: p.map(|p| p.n),
                    predicted_m: p.map(|p| p.m),
                    predicted_v_minus_db: p.map(|p| p.squeezing_db()),
                });
            }
            Probe::Pair { .. } => {
                let s = pair_stats_ref(&accs[i], r)?;
                pairs.push(PairRow {
                    config_hash: hash.clone(),
                    label: mode.label().to_string(),
                    samples: accs[i].count(),
                    n1: s.n1.value,
                    n1_err: s.n1.stderr,
                    n2: s.n2.value,
                    n2_err: s.n2.stderr,
                    corr: s.corr.value,
                    corr_err: s.corr.stderr,
                    var_n_total_quarter: s.var_n_total_quarter.value,
                    var_n_total_quarter_err: s.var_n_total_quarter.stderr,
                });
            }
        }
    }
    let dir = out_dir(&cfg, src)?;
    let mut files = Vec::new();
    if !singles.is_empty() {
        let p = dir.join("modes.csv");
        write_csv(&p, &singles)?;
        files.push(p);
    }
    if !pairs.is_empty() {
        let p = dir.join("pairs.csv");
        write_csv(&p, &pairs)?;
        files.push(p);
    }
    let json = dir.join("results.json");
    write_json(&json, &serde_json::json!({ "config_hash": hash, "modes": singles, "pairs": pairs }))?;
    files.push(json);
    write_outputs(&cfg, "analyze", &files)?;
    for row in &singles {
        println!(
            "{:<24} n = {:.5} ± {:.5}  fano = {:.4} ± {:.4}  V- = {:+.3} dB",
            row.label, row.n, row.n_err, row.fano, row.fano_err, row.v_minus_db
        );
    }
    for row in &pairs {
        println!(
            "{:<24} n1 = {:.5}  n2 = {:.5}  <dn1 dn2> = {:.5} ± {:.5}",
            row.label, row.n1, row.n2, row.corr, row.corr_err
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct SpectrumRow {
    config_hash: String,
    f_hz: f64,
    n: f64,
    var_n: f64,
    /// Pair amplitude from single-mode statistics of the bichromatic mode.
    m_bichromatic: f64,
    m_bichromatic_err: f64,
    v_minus_db: f64,
    v_minus_db_err: f64,
    /// Pair amplitude from cross-correlation of the two halves.
    m_cross: f64,
    predicted_m: Option<f64>,
    predicted_v_minus_db: Option<f64>,
}

fn cmd_spectrum(src: &Source) -> Result<()> {
    let cfg = RunConfig::load(&src.config)?;
    let sweep = cfg.sweep_modes()?;
    let modes: Vec<ModeConfig> = sweep.iter().flat_map(|(_, b, p)| [b.clone(), p.clone()]).collect();
    let cal = calibrated_chain(&cfg)?;
    let (analyzer, kernels) = cfg.analyzer_for(&modes, cal.as_ref())?;
    let (accs, reference) = acquire(&cfg, &analyzer, src)?;
    let hash = cfg.hash()?;
    let mut rows = Vec::new();
    for (j, (f, _, _)) in sweep.iter().enumerate() {
        let (bi, pr) = (2 * j, 2 * j + 1);
        let r = reference.as_ref();
        let s = single_stats(&accs[bi], r.map(|r| &r[bi]))?;
        let (sq, sq_err) = squeezing_from_stats(&s);
        let m_err = {
            let h = 1e-7;
            let dm = |dn: f64, dv: f64| m_and_variances(s.n.value + dn, s.var_n.value + dv).m;
            let a = (dm(h, 0.0) - sq.m) / h * s.n.stderr;
            let b = (dm(0.0, h) - sq.m) / h * s.var_n.stderr;
            a.hypot(b)
        };
        let ps = pair_stats_ref(&accs[pr], r.map(|r| &r[pr]))?;
        let x = match analyzer.probes()[bi] {
            Probe::Single { x } => x,
            Probe::Pair { .. } => unreachable!("bichromatic modes use single probes"),
        };
        let p = prediction(&cfg, &kernels[x], src.trace.is_none())?;
        rows.push(SpectrumRow {
            config_hash: hash.clone(),
            f_hz: *f,
            n: s.n.value,
            var_n: s.var_n.value,
            m_bichromatic: sq.m,
            m_bichromatic_err: m_err,
            v_minus_db: sq.squeezing_db,
            v_minus_db_err: sq_err,
            m_cross: ps.corr.value.max(0.0).sqrt(),
            predicted_m: p.map(|p| p.m),
            predicted_v_minus_db: p.map(|p| p.squeezing_db()),
        });
    }
    let dir = out_dir(&cfg, src)?;
    let path = dir.join("spectrum.csv");
    write_csv(&path, &rows)?;
    write_outputs(&cfg, "spectrum", &[path.clone()])?;
    println!("wrote {} sweep points to {}", rows.len(), path.display());
    Ok(())
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum PairReport {
    Entangle,
    Steer,
}

#[derive(Serialize)]
struct EntangleRow {
    config_hash: String,
    delta_f_hz: f64,
    n_a: f64,
    n_b: f64,
    m: f64,
    m_err: f64,
    clamped: bool,
    two_nu_tilde_minus: f64,
    e_f: f64,
    rate_wideband_ebit_s: f64,
    rate_bichromatic_ebit_s: f64,
    asymmetric: bool,
}

#[derive(Serialize)]
struct SteerRow {
    config_hash: String,
    delta_f_hz: f64,
    mu_a: f64,
    mu_b: f64,
    mu: f64,
    eta: f64,
    g_a_to_b: f64,
    g_b_to_a: f64,
    class: String,
    clamped: bool,
}

fn cmd_pairs(src: &Source, report: PairReport) -> Result<()> {
    let cfg = RunConfig::load(&src.config)?;
    let grid = cfg.delta_f_modes()?;
    let modes: Vec<ModeConfig> = grid.iter().map(|(_, m)| m.clone()).collect();
    let cal = calibrated_chain(&cfg)?;
    let (analyzer, _) = cfg.analyzer_for(&modes, cal.as_ref())?;
    let (accs, reference) = acquire(&cfg, &analyzer, src)?;
    let hash = cfg.hash()?;
    let mut states = Vec::new();
    for (i, (df, _)) in grid.iter().enumerate() {
        let s = pair_stats_ref(&accs[i], reference.as_ref().map(|r| &r[i]))?;
        let m = photocount::dsp::Estimate::new(
            s.corr.value.max(0.0).sqrt(),
            if s.corr.value > 0.0 { s.corr.stderr / (2.0 * s.corr.value.sqrt()) } else { s.corr.stderr.sqrt() },
        );
        let g = GaussianBipartite::from_measured(s.n1, s.n2, m)?;
        states.push((*df, g, m));
    }
    let dir = out_dir(&cfg, src)?;
    let path = match report {
        PairReport::Entangle => {
            let dfs: Vec<f64> = states.iter().map(|s| s.0).collect();
            let ef: Vec<f64> = states.iter().map(|s| s.1.entanglement_of_formation()).collect();
            let wide = entanglement_rate_wideband(&dfs, &ef)?;
            let bi = entanglement_rate_bichromatic(&dfs, &ef)?;
            let rows: Vec<EntangleRow> = states
                .iter()
                .enumerate()
                .map(|(i, (df, g, m))| EntangleRow {
                    config_hash: hash.clone(),
                    delta_f_hz: *df,
                    n_a: g.n_a,
                    n_b: g.n_b,
                    m: g.m,
                    m_err: m.stderr,
                    clamped: g.clamped,
                    two_nu_tilde_minus: 2.0 * g.nu_tilde_minus(),
                    e_f: ef[i],
                    rate_wideband_ebit_s: wide[i],
                    rate_bichromatic_ebit_s: bi[i],
                    asymmetric: g.is_asymmetric(),
                })
                .collect();
            for r in &rows {
                println!(
                    "Δf = {:.3e} Hz  E_f = {:.4}  wideband {:.3e} ebit/s  bichromatic {:.3e} ebit/s",
                    r.delta_f_hz, r.e_f, r.rate_wideband_ebit_s, r.rate_bichromatic_ebit_s
                );
            }
            let p = dir.join("entangle.csv");
            write_csv(&p, &rows)?;
            p
        }
        PairReport::Steer => {
            let rows: Vec<SteerRow> = states
                .iter()
                .map(|(df, g, _)| {
                    let r = g.report();
                    SteerRow {
                        config_hash: hash.clone(),
                        delta_f_hz: *df,
                        mu_a: r.mu_a,
                        mu_b: r.mu_b,
                        mu: r.mu,
                        eta: r.eta,
                        g_a_to_b: r.g_a_to_b,
                        g_b_to_a: r.g_b_to_a,
                        class: r.class.to_string(),
                        clamped: g.clamped,
                    }
                })
                .collect();
            for r in &rows {
                println!("Δf = {:.3e} Hz  η = {:.4}  class {}", r.delta_f_hz, r.eta, r.class);
            }
            let p = dir.join("steer.csv");
            write_csv(&p, &rows)?;
            p
        }
    };
    write_outputs(&cfg, if report == PairReport::Entangle { "entangle" } else { "steer" }, &[path])?;
    Ok(())
}

fn cmd_calibrate(spectra: &Path, resistance: f64, impedance: f64, out_dir: &Path) -> Result<()> {
    let data = BiasSpectra::read_csv(File::open(spectra)?)?;
    let fit = fit_thermometry(&data, resistance, impedance)?;
    fs::create_dir_all(out_dir)?;
    let json = out_dir.join("calibration.json");
    write_json(&json, &fit)?;
    let csv_path = out_dir.join("calibration.csv");
    fit.write_csv(File::create(&csv_path)?)?;
    println!(
        "Te = {:.3} ± {:.3} mK over {} bins; residual {:.2e} relative; per-bin Te scatter {:.3} mK",
        1e3 * fit.te,
        1e3 * fit.te_err,
        fit.bins.len(),
        fit.residual_rel,
        1e3 * fit.te_scatter()
    );
    Ok(())
}

#[derive(Serialize)]
struct BenchRow {
    workers: usize,
    taps: usize,
    modes: usize,
    samples: u64,
    seconds: f64,
    samples_per_s: f64,
    samples_per_s_per_worker: f64,
}

fn cmd_bench(taps: usize, modes: usize, segment_len: usize, segments: u64, fft_len: usize, out: Option<PathBuf>) -> Result<()> {
    use rand::{Rng, SeedableRng};
    if modes == 0 || taps % 2 == 0 {
        return Err(Error::Config("bench needs at least one mode and an odd tap count".into()));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let kernels: Vec<DiscreteKernel> = (0..modes)
        .map(|i| {
            let t: Vec<f64> = (0..taps).map(|_| rng.random_range(-1.0..1.0)).collect();
            DiscreteKernel::from_taps(t, 32e9, format!("bench {i}"))
        })
        .collect::<Result<_>>()?;
    let probes = (0..modes).map(|x| Probe::Single { x }).collect();
    let analyzer = Analyzer::new(&kernels, probes, fft_len)?;
    let trace: Vec<f64> = (0..segment_len).map(|_| rng.random_range(-1.0..1.0)).collect();
    let max = rayon::current_num_threads();
    let mut counts: Vec<usize> = std::iter::successors(Some(1usize), |w| Some(w * 2)).take_while(|w| *w < max).collect();
    counts.push(max);
    let mut rows = Vec::new();
    for w in counts {
        let (secs, n) = with_workers(Some(w), || -> Result<(f64, u64)> {
            let t0 = Instant::now();
            let (_, rep) = analyzer.run(segments, |_| Ok(&trace))?;
            Ok((t0.elapsed().as_secs_f64(), rep.samples))
        })??;
        let rate = n as f64 / secs;
        println!(
            "{w:>3} workers: {:.1} MSa/s total, {:.1} MSa/s per worker",
            rate / 1e6,
            rate / 1e6 / w as f64
        );
        rows.push(BenchRow {
            workers: w,
            taps,
            modes,
            samples: n,
            seconds: secs,
            samples_per_s: rate,
            samples_per_s_per_worker: rate / w as f64,
        });
    }
    if let Some(p) = out {
        if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        write_csv(&p, &rows)?;
    }
    Ok(())
}
