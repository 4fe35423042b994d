//! Memory-reference traces.
//!
//! A trace is an ordered stream of [`TraceEvent`]s with non-decreasing
//! cycles. Real traces arrive through the companion CLI crate's file
//! loaders; this module owns the event record itself, the in-memory trace,
//! and seeded synthetic generators (strided and mixed strided/random) used
//! for experiments and tests.

use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Whether an access reads or writes the addressed location.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AccessKind {
    Read,
    Write,
}

/// One memory reference: issue cycle, PC of the instruction, byte address,
/// and access kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TraceEvent {
    pub cycle: u64,
    pub pc: u64,
    pub address: u64,
    pub kind: AccessKind,
}

/// Ordered stream of trace events.
///
/// Implementations must yield events with non-decreasing `cycle`; running
/// out of events is the normal terminal state, not an error.
pub trait TraceSource: Iterator<Item = TraceEvent> {
    /// Number of events the source will yield in total, when known up front.
    fn declared_len(&self) -> Option<usize> {
        None
    }
}

/// Validation and generation errors for traces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceError {
    /// Event at `index` has a smaller cycle than its predecessor.
    CycleRegression { index: usize, prev: u64, cycle: u64 },
    /// A strided stream was asked to produce zero events.
    ZeroCount,
    /// A strided stream with stride 0 never advances; reject it.
    ZeroStride,
    /// A random stream was given an empty address range.
    EmptyRange { lo: u64, hi: u64 },
    /// `gen_mixed` needs at least one stream.
    NoStreams,
}

impl fmt::Display for TraceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceError::CycleRegression { index, prev, cycle } => write!(
                f,
                "event {index} has cycle {cycle} but the previous event was at {prev}"
            ),
            TraceError::ZeroCount => write!(f, "stream count must be at least 1"),
            TraceError::ZeroStride => write!(f, "strided stream stride must be non-zero"),
            TraceError::EmptyRange { lo, hi } => {
                write!(f, "random stream address range {lo:#x}..{hi:#x} is empty")
            }
            TraceError::NoStreams => write!(f, "mixed trace needs at least one stream"),
        }
    }
}

impl core::error::Error for TraceError {}

/// An in-memory trace, validated at construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VecTrace {
    events: Vec<TraceEvent>,
    pos: usize,
}

impl VecTrace {
    /// Wraps a validated event list. Fails if cycles ever regress.
    pub fn new(events: Vec<TraceEvent>) -> Result<Self, TraceError> {
        for i in 1..events.len() {
            if events[i].cycle < events[i - 1].cycle {
                return Err(TraceError::CycleRegression {
                    index: i,
                    prev: events[i - 1].cycle,
                    cycle: events[i].cycle,
                });
            }
        }
        Ok(VecTrace { events, pos: 0 })
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// A fresh source over the same events, positioned at the start.
    pub fn reset(&self) -> VecTrace {
        VecTrace {
            events: self.events.clone(),
            pos: 0,
        }
    }
}

impl Iterator for VecTrace {
    type Item = TraceEvent;

    fn next(&mut self) -> Option<TraceEvent> {
        let ev = self.events.get(self.pos).copied();
        if ev.is_some() {
            self.pos += 1;
        }
        ev
    }
}

impl TraceSource for VecTrace {
    fn declared_len(&self) -> Option<usize> {
        Some(self.events.len() - self.pos)
    }
}

/// Parameters of one constant-stride access stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StridedSpec {
    pub pc: u64,
    pub base: u64,
    /// Byte stride between consecutive accesses; may be negative, never 0.
    pub stride: i64,
    pub count: u64,
    pub start_cycle: u64,
    /// Cycles between consecutive accesses of this stream.
    pub inter_arrival: u64,
    pub kind: AccessKind,
}

/// Parameters of one uniformly random access stream over `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomSpec {
    pub pc: u64,
    pub lo: u64,
    pub hi: u64,
    pub count: u64,
    pub start_cycle: u64,
    pub inter_arrival: u64,
    pub kind: AccessKind,
}

/// One component stream of a mixed trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamSpec {
    Strided(StridedSpec),
    Random(RandomSpec),
}

/// Generates a single constant-stride stream.
pub fn gen_strided(spec: &StridedSpec) -> Result<VecTrace, TraceError> {
    if spec.count == 0 {
        return Err(TraceError::ZeroCount);
    }
    if spec.stride == 0 {
        return Err(TraceError::ZeroStride);
    }
    let mut events = Vec::with_capacity(spec.count as usize);
    let mut addr = spec.base;
    let mut cycle = spec.start_cycle;
    for _ in 0..spec.count {
        events.push(TraceEvent {
            cycle,
            pc: spec.pc,
            address: addr,
            kind: spec.kind,
        });
        addr = addr.wrapping_add_signed(spec.stride);
        cycle = cycle.saturating_add(spec.inter_arrival);
    }
    Ok(VecTrace { events, pos: 0 })
}

/// Generates and merges several streams into one trace.
///
/// Events are ordered by `(cycle, stream index, address)`, so interleaving is
/// fully determined by the specs and the seed. Random streams draw from a
/// counter-based RNG seeded from `(seed, stream index)`, which makes every
/// stream reproducible independently of the others.
pub fn gen_mixed(specs: &[StreamSpec], seed: u64) -> Result<VecTrace, TraceError> {
    if specs.is_empty() {
        return Err(TraceError::NoStreams);
    }
    let mut tagged: Vec<(TraceEvent, usize)> = Vec::new();
    for (idx, spec) in specs.iter().enumerate() {
        match spec {
            StreamSpec::Strided(s) => {
                let stream = gen_strided(s)?;
                tagged.extend(stream.events.into_iter().map(|e| (e, idx)));
            }
            StreamSpec::Random(r) => {
                if r.count == 0 {
                    return Err(TraceError::ZeroCount);
                }
                if r.lo >= r.hi {
                    return Err(TraceError::EmptyRange { lo: r.lo, hi: r.hi });
                }
                let mut rng = stream_rng(seed, idx);
                let mut cycle = r.start_cycle;
                for _ in 0..r.count {
                    tagged.push((
                        TraceEvent {
                            cycle,
                            pc: r.pc,
                            address: rng.random_range(r.lo..r.hi),
                            kind: r.kind,
                        },
                        idx,
                    ));
                    cycle = cycle.saturating_add(r.inter_arrival);
                }
            }
        }
    }
    tagged.sort_by_key(|(e, idx)| (e.cycle, *idx, e.address));
    let events = tagged.into_iter().map(|(e, _)| e).collect();
    Ok(VecTrace { events, pos: 0 })
}

fn stream_rng(seed: u64, stream_idx: usize) -> ChaCha12Rng {
    // Golden-ratio mixing keeps per-stream seeds distinct even for adjacent
    // stream indices and small user seeds.
    let mixed = seed ^ (stream_idx as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    ChaCha12Rng::seed_from_u64(mixed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn strided_stream_walks_by_stride() {
        let spec = StridedSpec {
            pc: 0x400,
            base: 0x1000,
            stride: 64,
            count: 4,
            start_cycle: 10,
            inter_arrival: 5,
            kind: AccessKind::Read,
        };
        let t = gen_strided(&spec).unwrap();
        let addrs: Vec<u64> = t.events().iter().map(|e| e.address).collect();
        let cycles: Vec<u64> = t.events().iter().map(|e| e.cycle).collect();
        assert_eq!(addrs, vec![0x1000, 0x1040, 0x1080, 0x10c0]);
        assert_eq!(cycles, vec![10, 15, 20, 25]);
    }

    #[test]
    fn negative_stride_walks_down() {
        let spec = StridedSpec {
            pc: 1,
            base: 0x2000,
            stride: -64,
            count: 3,
            start_cycle: 0,
            inter_arrival: 1,
            kind: AccessKind::Write,
        };
        let t = gen_strided(&spec).unwrap();
        let addrs: Vec<u64> = t.events().iter().map(|e| e.address).collect();
        assert_eq!(addrs, vec![0x2000, 0x1fc0, 0x1f80]);
    }

    #[test]
    fn strided_rejects_degenerate_specs() {
        let mut spec = StridedSpec {
            pc: 0,
            base: 0,
            stride: 0,
            count: 1,
            start_cycle: 0,
            inter_arrival: 1,
            kind: AccessKind::Read,
        };
        assert_eq!(gen_strided(&spec), Err(TraceError::ZeroStride));
        spec.stride = 8;
        spec.count = 0;
        assert_eq!(gen_strided(&spec), Err(TraceError::ZeroCount));
    }

    #[test]
    fn two_equal_rate_streams_interleave_perfectly() {
        let mk = |pc, base| {
            StreamSpec::Strided(StridedSpec {
                pc,
                base,
                stride: 64,
                count: 3,
                start_cycle: 0,
                inter_arrival: 10,
                kind: AccessKind::Read,
            })
        };
        let t = gen_mixed(&[mk(1, 0x0), mk(2, 0x10000)], 7).unwrap();
        let pcs: Vec<u64> = t.events().iter().map(|e| e.pc).collect();
        assert_eq!(pcs, vec![1, 2, 1, 2, 1, 2]);
    }

    #[test]
    fn mixed_ties_break_by_stream_index() {
        // Both streams emit at cycle 5; stream 0 must come out first even
        // though its address is larger.
        let s = |pc, base| {
            StreamSpec::Strided(StridedSpec {
                pc,
                base,
                stride: 64,
                count: 1,
                start_cycle: 5,
                inter_arrival: 1,
                kind: AccessKind::Read,
            })
        };
        let t = gen_mixed(&[s(9, 0x500), s(3, 0x100)], 0).unwrap();
        let pcs: Vec<u64> = t.events().iter().map(|e| e.pc).collect();
        assert_eq!(pcs, vec![9, 3]);
    }

    #[test]
    fn mixed_is_deterministic_per_seed() {
        let specs = [
            StreamSpec::Random(RandomSpec {
                pc: 4,
                lo: 0,
                hi: 1 << 20,
                count: 100,
                start_cycle: 0,
                inter_arrival: 3,
                kind: AccessKind::Read,
            }),
            StreamSpec::Strided(StridedSpec {
                pc: 5,
                base: 1 << 30,
                stride: 64,
                count: 100,
                start_cycle: 1,
                inter_arrival: 3,
                kind: AccessKind::Write,
            }),
        ];
        let a = gen_mixed(&specs, 42).unwrap();
        let b = gen_mixed(&specs, 42).unwrap();
        let c = gen_mixed(&specs, 43).unwrap();
        assert_eq!(a.events(), b.events());
        assert_ne!(a.events(), c.events());
    }

    #[test]
    fn mixed_rejects_empty_inputs() {
        assert_eq!(gen_mixed(&[], 0).unwrap_err(), TraceError::NoStreams);
        let bad = StreamSpec::Random(RandomSpec {
            pc: 0,
            lo: 8,
            hi: 8,
            count: 1,
            start_cycle: 0,
            inter_arrival: 1,
            kind: AccessKind::Read,
        });
        assert_eq!(gen_mixed(&[bad], 0).unwrap_err(), TraceError::EmptyRange { lo: 8, hi: 8 });
    }

    #[test]
    fn vec_trace_rejects_cycle_regression() {
        let ev = |cycle| TraceEvent {
            cycle,
            pc: 0,
            address: 0,
            kind: AccessKind::Read,
        };
        let err = VecTrace::new(vec![ev(5), ev(4)]).unwrap_err();
        assert_eq!(
            err,
            TraceError::CycleRegression {
                index: 1,
                prev: 5,
                cycle: 4
            }
        );
    }

    #[test]
    fn vec_trace_iterates_and_reports_len() {
        let spec = StridedSpec {
            pc: 0,
            base: 0,
            stride: 1,
            count: 5,
            start_cycle: 0,
            inter_arrival: 1,
            kind: AccessKind::Read,
        };
        let mut t = gen_strided(&spec).unwrap();
        assert_eq!(t.declared_len(), Some(5));
        t.next();
        t.next();
        assert_eq!(t.declared_len(), Some(3));
        assert_eq!(t.count(), 3);
    }
}
