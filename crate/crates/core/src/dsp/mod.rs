//! Streaming signal processing: trace I/O, overlap-add convolution and
//! moment accumulation.

pub mod accumulator;
pub mod engine;
pub mod trace;

pub use accumulator::{jackknife, jackknife_paired, Estimate, Layout, MomentAccumulator};
pub use engine::{ConvolutionEngine, SegmentReport, DEFAULT_FFT_LEN};
pub use trace::{SampleSource, TraceReader, TraceSegment};
