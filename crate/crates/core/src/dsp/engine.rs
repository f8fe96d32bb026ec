//! Overlap-add convolution of one input stream with a bank of kernels.
//!
//! Each block of `N - K + 1` input samples is forward transformed once; every
//! kernel then costs one spectrum product and one inverse transform. Output
//! sample `t` of a segment is `Σ_m h[m] v[t - m]` for the centred taps `h`;
//! only outputs whose full support lies inside the segment are emitted, so
//! `(K - 1)/2` samples are discarded at each segment edge.

use std::sync::Arc;

use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

use crate::error::{Error, Result};
use crate::kernels::DiscreteKernel;

use super::trace::SampleSource;

pub const DEFAULT_FFT_LEN: usize = 1 << 14;

pub struct ConvolutionEngine {
    fft_len: usize,
    block: usize,
    klen: usize,
    sample_rate: f64,
    spectra: Vec<Vec<Complex64>>,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
}

/// What one call to [`ConvolutionEngine::process`] produced.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SegmentReport {
    /// Outputs emitted per kernel.
    pub valid: usize,
    /// Input samples without a valid output.
    pub discarded: usize,
}

impl ConvolutionEngine {
    /// Builds an engine for kernels of any odd lengths; shorter kernels are
    /// zero-padded to a common centred length.
    pub fn new(kernels: &[&DiscreteKernel], fft_len: usize) -> Result<Self> {
        let first = kernels
            .first()
            .ok_or_else(|| Error::config("engine needs at least one kernel"))?;
        let sample_rate = first.sample_rate();
        for k in kernels {
            if (k.sample_rate() - sample_rate).abs() > 1e-9 * sample_rate {
                return Err(Error::mismatch("kernels built for different sample rates"));
            }
        }
        let half = kernels.iter().map(|k| k.center_index()).max().unwrap_or(0);
        let klen = 2 * half + 1;
        if fft_len < 2 * klen || fft_len % 2 != 0 {
            return Err(Error::config(format!(
                "FFT length {fft_len} must be even and at least twice the kernel length {klen}"
            )));
        }
        let mut planner = RealFftPlanner::<f64>::new();
        let r2c = planner.plan_fft_forward(fft_len);
        let c2r = planner.plan_fft_inverse(fft_len);
        let inv = 1.0 / fft_len as f64;
        let mut spectra = Vec::with_capacity(kernels.len());
        for k in kernels {
            let mut buf = vec![0.0; fft_len];
            let offset = half - k.center_index();
            for (i, t) in k.taps().iter().enumerate() {
                buf[offset + i] = *t * inv;
            }
            let mut spec = r2c.make_output_vec();
            r2c.process(&mut buf, &mut spec)
                .map_err(|e| Error::numerical(e.to_string()))?;
            spectra.push(spec);
        }
        Ok(ConvolutionEngine {
            fft_len,
            block: fft_len - klen + 1,
            klen,
            sample_rate,
            spectra,
            r2c,
            c2r,
        })
    }

    pub fn n_kernels(&self) -> usize {
        self.spectra.len()
    }

    pub fn fft_len(&self) -> usize {
        self.fft_len
    }

    /// Common padded kernel length `K`.
    pub fn kernel_len(&self) -> usize {
        self.klen
    }

    /// Samples discarded at each segment edge.
    pub fn edge(&self) -> usize {
        (self.klen - 1) / 2
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    /// Number of valid outputs for a segment of `n` samples.
    pub fn valid_len(&self, n: usize) -> usize {
        n.saturating_sub(self.klen - 1)
    }

    /// Convolves one segment, handing aligned output slices (one per kernel)
    /// to `sink` together with the segment index of their first sample.
    pub fn process<S, F>(&self, src: &S, mut sink: F) -> Result<SegmentReport>
    where
        S: SampleSource + ?Sized,
        F: FnMut(usize, &[&[f64]]) -> Result<()>,
    {
        if let Some(fs) = src.sample_rate() {
            if (fs - self.sample_rate).abs() > 1e-9 * self.sample_rate {
                return Err(Error::mismatch(format!(
                    "trace sample rate {fs} Hz differs from kernel sample rate {} Hz",
                    self.sample_rate
                )));
            }
        }
        let m = src.len();
        let nk = self.spectra.len();
        let k1 = self.klen - 1;
        let valid = self.valid_len(m);
        if valid == 0 {
            return Ok(SegmentReport { valid: 0, discarded: m });
        }

        let n = self.fft_len;
        let mut input = vec![0.0; n];
        let mut spec = self.r2c.make_output_vec();
        let mut work = self.c2r.make_input_vec();
        let mut fwd_scratch = self.r2c.make_scratch_vec();
        let mut inv_scratch = self.c2r.make_scratch_vec();
        let mut tails = vec![vec![0.0; k1]; nk];
        let mut outs = vec![vec![0.0; n]; nk];
        let last_bin = spec.len() - 1;

        let mut s = 0;
        while s < m {
            let b = self.block.min(m - s);
            src.fill(s, &mut input[..b]);
            input[b..].iter_mut().for_each(|v| *v = 0.0);
            self.r2c
                .process_with_scratch(&mut input, &mut spec, &mut fwd_scratch)
                .map_err(|e| Error::numerical(e.to_string()))?;
            for ((g, tail), out) in self.spectra.iter().zip(&mut tails).zip(&mut outs) {
                for ((w, x), h) in work.iter_mut().zip(&spec).zip(g) {
                    *w = x * h;
                }
                work[0].im = 0.0;
                work[last_bin].im = 0.0;
                self.c2r
                    .process_with_scratch(&mut work, out, &mut inv_scratch)
                    .map_err(|e| Error::numerical(e.to_string()))?;
                // out[..b] becomes final; out[b..b+K-1] carries into the next block.
                let overlap = k1.min(b);
                for (o, t) in out[..overlap].iter_mut().zip(&tail[..overlap]) {
                    *o += t;
                }
                for j in 0..k1 {
                    let carry = if b + j < k1 { tail[b + j] } else { 0.0 };
                    tail[j] = out[b + j] + carry;
                }
            }
            // Linear-convolution indices s..s+b are final; keep [K-1, M-1].
            let lo = s.max(k1);
            let hi = (s + b).min(m);
            if lo < hi {
                let slices: Vec<&[f64]> = outs.iter().map(|c| &c[lo - s..hi - s]).collect();
                sink(lo - self.edge(), &slices)?;
            }
            s += b;
        }
        Ok(SegmentReport {
            valid,
            discarded: m - valid,
        })
    }
}
