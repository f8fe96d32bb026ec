//! Segment-parallel analysis: one convolution pass per segment feeds every
//! probe's accumulator. Segments are mapped in parallel and merged in
//! segment order, so results do not depend on the worker count.

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::dsp::{ConvolutionEngine, Layout, MomentAccumulator, SampleSource, SegmentReport};
use crate::error::{Error, Result};
use crate::kernels::DiscreteKernel;

/// Which kernel outputs an accumulator consumes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Probe {
    Single { x: usize },
    Pair { x1: usize, p1: usize, x2: usize, p2: usize },
}

impl Probe {
    fn layout(&self) -> Layout {
        match self {
            Probe::Single { .. } => Layout::Single,
            Probe::Pair { .. } => Layout::Pair,
        }
    }

    fn indices(&self) -> Vec<usize> {
        match *self {
            Probe::Single { x } => vec![x],
            Probe::Pair { x1, p1, x2, p2 } => vec![x1, p1, x2, p2],
        }
    }
}

pub struct Analyzer {
    engine: ConvolutionEngine,
    probes: Vec<Probe>,
    provenance: Vec<String>,
}

/// Totals over every analysed segment.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunReport {
    pub segments: u64,
    pub samples: u64,
    pub valid: u64,
    pub discarded: u64,
}

impl Analyzer {
    pub fn new(kernels: &[DiscreteKernel], probes: Vec<Probe>, fft_len: usize) -> Result<Self> {
        let refs: Vec<&DiscreteKernel> = kernels.iter().collect();
        let engine = ConvolutionEngine::new(&refs, fft_len)?;
        for p in &probes {
            if p.indices().iter().any(|&i| i >= kernels.len()) {
                return Err(Error::config(format!("probe {p:?} references a missing kernel")));
            }
        }
        let provenance = probes
            .iter()
            .map(|p| {
                let mut h = Sha256::new();
                h.update(format!("{p:?}|fft={fft_len}|"));
                for i in p.indices() {
                    let k = &kernels[i];
                    h.update(k.provenance().as_bytes());
                    for t in k.taps() {
                        h.update(t.to_le_bytes());
                    }
                }
                hex::encode(&h.finalize()[..12])
            })
            .collect();
        Ok(Analyzer {
            engine,
            probes,
            provenance,
        })
    }

    pub fn engine(&self) -> &ConvolutionEngine {
        &self.engine
    }

    pub fn probes(&self) -> &[Probe] {
        &self.probes
    }

    pub fn new_accumulators(&self) -> Vec<MomentAccumulator> {
        self.probes
            .iter()
            .zip(&self.provenance)
            .map(|(p, h)| MomentAccumulator::new(p.layout(), h.clone()))
            .collect()
    }

    /// Convolves one segment and feeds every probe.
    pub fn analyze_segment<S: SampleSource + ?Sized>(
        &self,
        src: &S,
        accs: &mut [MomentAccumulator],
    ) -> Result<SegmentReport> {
        if accs.len() != self.probes.len() {
            return Err(Error::mismatch("one accumulator per probe required"));
        }
        let report = self.engine.process(src, |_, outs| {
            for (p, acc) in self.probes.iter().zip(accs.iter_mut()) {
                match *p {
                    Probe::Single { x } => acc.push_single(outs[x])?,
                    Probe::Pair { x1, p1, x2, p2 } => acc.push_pair(outs[x1], outs[p1], outs[x2], outs[p2])?,
                }
            }
            Ok(())
        })?;
        for acc in accs.iter_mut() {
            acc.edge_discard += report.discarded as u64;
        }
        Ok(report)
    }

    /// Analyses segments `0..n_segments` produced on demand by `source`.
    pub fn run<S, F>(&self, n_segments: u64, source: F) -> Result<(Vec<MomentAccumulator>, RunReport)>
    where
        S: SampleSource,
        F: Fn(u64) -> Result<S> + Sync,
    {
        let parts: Vec<(Vec<MomentAccumulator>, SegmentReport, usize)> = (0..n_segments)
            .into_par_iter()
            .map(|i| {
                let src = source(i)?;
                let mut accs = self.new_accumulators();
                let rep = self.analyze_segment(&src, &mut accs)?;
                Ok((accs, rep, src.len()))
            })
            .collect::<Result<_>>()?;
        let mut total = self.new_accumulators();
        let mut report = RunReport::default();
        for (accs, rep, len) in parts {
            total = total
                .into_iter()
                .zip(accs)
                .map(|(a, b)| a.merge(b))
                .collect::<Result<_>>()?;
            report.segments += 1;
            report.samples += len as u64;
            report.valid += rep.valid as u64;
            report.discarded += rep.discarded as u64;
        }
        Ok((total, report))
    }
}

/// Worker count from `PHOTOCOUNT_WORKERS`, if set.
pub fn workers_from_env() -> Option<usize> {
    std::env::var("PHOTOCOUNT_WORKERS").ok()?.parse().ok().filter(|&n| n > 0)
}

/// Runs `f` on a pool of `workers` threads (default: all cores).
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        b = b.num_threads(n);
    }
    let pool = b.build().map_err(|e| Error::config(e.to_string()))?;
    Ok(pool.install(f))
}
