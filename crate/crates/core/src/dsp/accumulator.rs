//! Streaming moment accumulation.
//!
//! Samples are folded into fixed-size chunks with plain `f64` partial sums.
//! Chunk records are kept so error bars can be formed by jackknife over
//! contiguous groups of chunks; grand totals are formed with compensated
//! (Neumaier) summation over chunks so that sums over 10¹² samples keep
//! full precision.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Samples per chunk record.
pub const CHUNK_LEN: u64 = 1 << 16;

/// Maximum number of jackknife groups.
pub const MAX_GROUPS: usize = 64;

/// Fewest groups for which error bars are considered reliable.
pub const MIN_GROUPS: usize = 32;

/// Which quadrature streams feed an accumulator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Layout {
    /// One stream `x`: features `x², x⁴`.
    Single,
    /// Two quadrature pairs `(x₁, p₁, x₂, p₂)`: features
    /// `x₁², x₁⁴, x₂², x₂⁴, u₁, u₂, u₁², u₂², u₁u₂` with `uᵢ = (xᵢ² + pᵢ²)/2`.
    Pair,
}

impl Layout {
    pub fn n_features(self) -> usize {
        match self {
            Layout::Single => 2,
            Layout::Pair => 9,
        }
    }
}

pub mod feature {
    pub const X2: usize = 0;
    pub const X4: usize = 1;

    pub const X1_2: usize = 0;
    pub const X1_4: usize = 1;
    pub const X2_2: usize = 2;
    pub const X2_4: usize = 3;
    pub const U1: usize = 4;
    pub const U2: usize = 5;
    pub const U1_SQ: usize = 6;
    pub const U2_SQ: usize = 7;
    pub const U1_U2: usize = 8;
}

/// Compensated running sum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Chunk {
    count: u64,
    sums: Vec<f64>,
}

impl Chunk {
    fn empty(nf: usize) -> Self {
        Chunk {
            count: 0,
            sums: vec![0.0; nf],
        }
    }
}

/// Time-averaged moment sums for one probe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentAccumulator {
    layout: Layout,
    provenance: String,
    chunks: Vec<Chunk>,
    open: Chunk,
    /// Samples dropped at segment boundaries so far.
    pub edge_discard: u64,
}

impl MomentAccumulator {
    pub fn new(layout: Layout, provenance: impl Into<String>) -> Self {
        MomentAccumulator {
            layout,
            provenance: provenance.into(),
            chunks: Vec::new(),
            open: Chunk::empty(layout.n_features()),
            edge_discard: 0,
        }
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn count(&self) -> u64 {
        self.chunks.iter().map(|c| c.count).sum::<u64>() + self.open.count
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    fn seal(&mut self) {
        let nf = self.layout.n_features();
        let full = std::mem::replace(&mut self.open, Chunk::empty(nf));
        self.chunks.push(full);
    }

    /// Adds samples of a single stream.
    pub fn push_single(&mut self, x: &[f64]) -> Result<()> {
        if self.layout != Layout::Single {
            return Err(Error::mismatch("single stream pushed into a pair accumulator"));
        }
        let mut rest = x;
        while !rest.is_empty() {
            let room = (CHUNK_LEN - self.open.count) as usize;
            let (head, tail) = rest.split_at(room.min(rest.len()));
            // Four independent partial sums keep the adds pipelined.
            let (mut s2, mut s4) = ([0.0f64; 4], [0.0f64; 4]);
            let quads = head.chunks_exact(4);
            let rem = quads.remainder();
            for q in quads {
                for l in 0..4 {
                    let v2 = q[l] * q[l];
                    s2[l] += v2;
                    s4[l] += v2 * v2;
                }
            }
            for (l, &v) in rem.iter().enumerate() {
                let v2 = v * v;
                s2[l] += v2;
                s4[l] += v2 * v2;
            }
            let s2 = (s2[0] + s2[1]) + (s2[2] + s2[3]);
            let s4 = (s4[0] + s4[1]) + (s4[2] + s4[3]);
            self.open.sums[feature::X2] += s2;
            self.open.sums[feature::X4] += s4;
            self.open.count += head.len() as u64;
            if self.open.count == CHUNK_LEN {
                self.seal();
            }
            rest = tail;
        }
        Ok(())
    }

    /// Adds aligned samples of two quadrature pairs.
    pub fn push_pair(&mut self, x1: &[f64], p1: &[f64], x2: &[f64], p2: &[f64]) -> Result<()> {
        if self.layout != Layout::Pair {
            return Err(Error::mismatch("pair streams pushed into a single accumulator"));
        }
        let n = x1.len();
        if p1.len() != n || x2.len() != n || p2.len() != n {
            return Err(Error::mismatch("quadrature streams are not aligned"));
        }
        let mut start = 0;
        while start < n {
            let room = (CHUNK_LEN - self.open.count) as usize;
            let end = n.min(start + room);
            let mut s = [0.0f64; 9];
            for i in start..end {
                let a2 = x1[i] * x1[i];
                let b2 = x2[i] * x2[i];
                let u1 = 0.5 * (a2 + p1[i] * p1[i]);
                let u2 = 0.5 * (b2 + p2[i] * p2[i]);
                s[0] += a2;
                s[1] += a2 * a2;
                s[2] += b2;
                s[3] += b2 * b2;
                s[4] += u1;
                s[5] += u2;
                s[6] += u1 * u1;
                s[7] += u2 * u2;
                s[8] += u1 * u2;
            }
            for (o, v) in self.open.sums.iter_mut().zip(s) {
                *o += v;
            }
            self.open.count += (end - start) as u64;
            if self.open.count == CHUNK_LEN {
                self.seal();
            }
            start = end;
        }
        Ok(())
    }

    /// Combines two accumulators of the same provenance. Chunk records are
    /// concatenated; totals are independent of order up to compensated
    /// rounding.
    pub fn merge(mut self, other: MomentAccumulator) -> Result<MomentAccumulator> {
        if self.layout != other.layout || self.provenance != other.provenance {
            return Err(Error::mismatch(format!(
                "cannot merge accumulators '{}' ({:?}) and '{}' ({:?})",
                self.provenance, self.layout, other.provenance, other.layout
            )));
        }
        if self.open.count > 0 {
            self.seal();
        }
        self.chunks.extend(other.chunks);
        self.open = other.open;
        self.edge_discard += other.edge_discard;
        Ok(self)
    }

    fn all_chunks(&self) -> impl Iterator<Item = &Chunk> {
        self.chunks
            .iter()
            .chain(std::iter::once(&self.open))
            .filter(|c| c.count > 0)
    }

    /// Exact-as-possible totals of every feature.
    pub fn sums(&self) -> Vec<f64> {
        let nf = self.layout.n_features();
        let mut acc = vec![KahanSum::default(); nf];
        for c in self.all_chunks() {
            for (a, v) in acc.iter_mut().zip(&c.sums) {
                a.add(*v);
            }
        }
        acc.iter().map(KahanSum::value).collect()
    }

    /// Feature means.
    pub fn means(&self) -> Vec<f64> {
        let n = self.count() as f64;
        self.sums().into_iter().map(|s| s / n).collect()
    }

    pub fn mean(&self, feature: usize) -> f64 {
        self.means()[feature]
    }

    /// Per-group (count, sums) over at most `groups` contiguous groups.
    fn grouped(&self, groups: usize) -> Vec<(u64, Vec<f64>)> {
        let chunks: Vec<&Chunk> = self.all_chunks().collect();
        let n = chunks.len();
        let g = groups.min(n).max(1);
        let nf = self.layout.n_features();
        (0..g)
            .map(|i| {
                let lo = i * n / g;
                let hi = (i + 1) * n / g;
                let mut acc = vec![KahanSum::default(); nf];
                let mut count = 0;
                for c in &chunks[lo..hi] {
                    count += c.count;
                    for (a, v) in acc.iter_mut().zip(&c.sums) {
                        a.add(*v);
                    }
                }
                (count, acc.iter().map(KahanSum::value).collect())
            })
            .collect()
    }

    /// Number of jackknife groups that will be used.
    pub fn n_groups(&self) -> usize {
        self.all_chunks().count().min(MAX_GROUPS)
    }
}

/// Estimate and standard error of a statistic of feature means.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn new(value: f64, stderr: f64) -> Self {
        Estimate { value, stderr }
    }

    /// `|value - target|` in units of the standard error.
    pub fn z_score(&self, target: f64) -> f64 {
        (self.value - target).abs() / self.stderr
    }
}

fn leave_one_out(groups: &[(u64, Vec<f64>)], total: &(u64, Vec<f64>), i: usize) -> Vec<f64> {
    let n = (total.0 - groups[i].0) as f64;
    total
        .1
        .iter()
        .zip(&groups[i].1)
        .map(|(t, g)| (t - g) / n)
        .collect()
}

fn totals(groups: &[(u64, Vec<f64>)]) -> (u64, Vec<f64>) {
    let nf = groups.first().map_or(0, |g| g.1.len());
    let mut acc = vec![KahanSum::default(); nf];
    let mut count = 0;
    for (c, s) in groups {
        count += c;
        for (a, v) in acc.iter_mut().zip(s) {
            a.add(*v);
        }
    }
    (count, acc.iter().map(KahanSum::value).collect())
}

fn jackknife_se(values: &[f64]) -> f64 {
    let g = values.len() as f64;
    let mean = values.iter().sum::<f64>() / g;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    ((g - 1.0) / g * ss).sqrt()
}

/// Delete-one-group jackknife of `stat(means)`.
pub fn jackknife<F: Fn(&[f64]) -> f64>(acc: &MomentAccumulator, stat: F) -> Estimate {
    let value = stat(&acc.means());
    let groups = acc.grouped(MAX_GROUPS);
    if groups.len() < 2 {
        return Estimate::new(value, f64::NAN);
    }
    let total = totals(&groups);
    let loo: Vec<f64> = (0..groups.len())
        .map(|i| stat(&leave_one_out(&groups, &total, i)))
        .collect();
    Estimate::new(value, jackknife_se(&loo))
}

/// Jackknife of `stat(means_a, means_b)` deleting matching groups of two
/// independent accumulators together.
pub fn jackknife_paired<F: Fn(&[f64], &[f64]) -> f64>(
    a: &MomentAccumulator,
    b: &MomentAccumulator,
    stat: F,
) -> Result<Estimate> {
    if a.layout != b.layout {
        return Err(Error::mismatch("paired jackknife needs accumulators of the same layout"));
    }
    let value = stat(&a.means(), &b.means());
    let g = a.n_groups().min(b.n_groups());
    let ga = a.grouped(g);
    let gb = b.grouped(g);
    if ga.len() < 2 || ga.len() != gb.len() {
        return Ok(Estimate::new(value, f64::NAN));
    }
    let ta = totals(&ga);
    let tb = totals(&gb);
    let loo: Vec<f64> = (0..ga.len())
        .map(|i| stat(&leave_one_out(&ga, &ta, i), &leave_one_out(&gb, &tb, i)))
        .collect();
    Ok(Estimate::new(value, jackknife_se(&loo)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_stream_moments() {
        let mut acc = MomentAccumulator::new(Layout::Single, "t");
        acc.push_single(&vec![1.5; 200_000]).unwrap();
        assert_eq!(acc.count(), 200_000);
        assert!((acc.mean(feature::X2) - 2.25).abs() < 1e-15);
        assert!((acc.mean(feature::X4) - 1.5f64.powi(4)).abs() < 1e-14);
    }

    #[test]
    fn merge_with_empty_is_identity() {
        let mut a = MomentAccumulator::new(Layout::Single, "t");
        a.push_single(&[1.0, 2.0, 3.0]).unwrap();
        let merged = a.clone().merge(MomentAccumulator::new(Layout::Single, "t")).unwrap();
        assert_eq!(merged.sums(), a.sums());
        assert_eq!(merged.count(), a.count());
    }

    #[test]
    fn provenance_and_layout_checked() {
        let a = MomentAccumulator::new(Layout::Single, "a");
        let b = MomentAccumulator::new(Layout::Single, "b");
        assert!(matches!(a.clone().merge(b), Err(Error::Mismatch(_))));
        let p = MomentAccumulator::new(Layout::Pair, "a");
        assert!(a.merge(p).is_err());
        let mut s = MomentAccumulator::new(Layout::Single, "a");
        assert!(s.push_pair(&[1.0], &[1.0], &[1.0], &[1.0]).is_err());
        let mut p = MomentAccumulator::new(Layout::Pair, "a");
        assert!(matches!(p.push_pair(&[1.0], &[1.0, 2.0], &[1.0], &[1.0]), Err(Error::Mismatch(_))));
    }

    #[test]
    fn identical_pairs_give_variance_as_correlation() {
        let mut acc = MomentAccumulator::new(Layout::Pair, "t");
        let x: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.37).sin()).collect();
        let p: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.11).cos()).collect();
        acc.push_pair(&x, &p, &x, &p).unwrap();
        let m = acc.means();
        let corr = m[feature::U1_U2] - m[feature::U1] * m[feature::U2];
        let var = m[feature::U1_SQ] - m[feature::U1] * m[feature::U1];
        assert!((corr - var).abs() < 1e-15);
    }

    #[test]
    fn kahan_recovers_small_terms() {
        let mut k = KahanSum::default();
        k.add(1e16);
        for _ in 0..1000 {
            k.add(1.0);
        }
        k.add(-1e16);
        assert_eq!(k.value(), 1000.0);
    }
}
