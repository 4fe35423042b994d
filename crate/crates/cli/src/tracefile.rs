//! On-disk trace formats.
//!
//! Text traces are one access per line, `<cycle> <pc> <address> <R|W>`, with
//! pc and address in hex (a leading `0x` is accepted); `#` starts a comment
//! and blank lines are skipped. Binary traces are packed little-endian
//! records of 25 bytes: cycle (u64), pc (u64), address (u64), kind (u8,
//! 0 = read, 1 = write). Both readers reject cycle regressions and name the
//! offending line or record.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use retsim_core::{AccessKind, TraceEvent, VecTrace};

/// Bytes per binary trace record.
pub const BINARY_RECORD_LEN: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceFormat {
    Text,
    Binary,
}

impl TraceFormat {
    /// Parses a format name as it appears in configs and CLI flags.
    pub fn parse(name: &str) -> Option<TraceFormat> {
        match name {
            "text" => Some(TraceFormat::Text),
            "binary" => Some(TraceFormat::Binary),
            _ => None,
        }
    }

    /// Picks a format from the file extension: `.bin` means binary,
    /// anything else is text.
    pub fn infer(path: &Path) -> TraceFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") => TraceFormat::Binary,
            _ => TraceFormat::Text,
        }
    }
}

#[derive(Debug, Error)]
pub enum TraceFileError {
    #[error("cannot read trace {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Malformed {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error(
        "{path}: file length {len} is not a multiple of the {record}-byte record size \
         (truncated record at byte {offset})"
    )]
    Truncated {
        path: PathBuf,
        len: u64,
        offset: u64,
        record: usize,
    },
    #[error("{path}: record {index}: unknown access kind {value} (expected 0 or 1)")]
    BadKind {
        path: PathBuf,
        index: usize,
        value: u8,
    },
    #[error("{path}: {at}: cycle {cycle} is earlier than the previous event at {prev}")]
    CycleRegression {
        path: PathBuf,
        at: String,
        cycle: u64,
        prev: u64,
    },
}

pub fn read(path: &Path, format: TraceFormat) -> Result<VecTrace, TraceFileError> {
    match format {
        TraceFormat::Text => read_text(path),
        TraceFormat::Binary => read_binary(path),
    }
}

pub fn write(path: &Path, format: TraceFormat, trace: &VecTrace) -> Result<(), TraceFileError> {
    let io_err = |source| TraceFileError::Io {
        path: path.to_path_buf(),
        source,
    };
    match format {
        TraceFormat::Text => {
            let mut out = String::new();
            for e in trace.events() {
                let kind = match e.kind {
                    AccessKind::Read => 'R',
                    AccessKind::Write => 'W',
                };
                out.push_str(&format!("{} {:x} {:x} {}\n", e.cycle, e.pc, e.address, kind));
            }
            fs::write(path, out).map_err(io_err)
        }
        TraceFormat::Binary => {
            let mut out = Vec::with_capacity(trace.len() * BINARY_RECORD_LEN);
            for e in trace.events() {
                out.extend_from_slice(&e.cycle.to_le_bytes());
                out.extend_from_slice(&e.pc.to_le_bytes());
                out.extend_from_slice(&e.address.to_le_bytes());
                out.push(match e.kind {
                    AccessKind::Read => 0,
                    AccessKind::Write => 1,
                });
            }
            let mut f = fs::File::create(path).map_err(io_err)?;
            f.write_all(&out).map_err(io_err)
        }
    }
}

fn read_text(path: &Path) -> Result<VecTrace, TraceFileError> {
    let text = fs::read_to_string(path).map_err(|source| TraceFileError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let malformed = |line: usize, reason: String| TraceFileError::Malformed {
        path: path.to_path_buf(),
        line,
        reason,
    };

    let mut events = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(malformed(
                line_no,
                format!("expected 4 fields (cycle pc address kind), found {}", fields.len()),
            ));
        }
        let cycle = fields[0]
            .parse::<u64>()
            .map_err(|_| malformed(line_no, format!("bad cycle '{}'", fields[0])))?;
        let pc = parse_hex(fields[1])
            .ok_or_else(|| malformed(line_no, format!("bad pc '{}'", fields[1])))?;
        let address = parse_hex(fields[2])
            .ok_or_else(|| malformed(line_no, format!("bad address '{}'", fields[2])))?;
        let kind = match fields[3] {
            "R" | "r" => AccessKind::Read,
            "W" | "w" => AccessKind::Write,
            other => {
                return Err(malformed(
                    line_no,
                    format!("bad access kind '{other}' (expected R or W)"),
                ))
            }
        };
        if let Some(prev) = events.last().map(|e: &(usize, TraceEvent)| e.1.cycle) {
            if cycle < prev {
                return Err(TraceFileError::CycleRegression {
                    path: path.to_path_buf(),
                    at: format!("line {line_no}"),
                    cycle,
                    prev,
                });
            }
        }
        events.push((line_no, TraceEvent { cycle, pc, address, kind }));
    }
    let events = events.into_iter().map(|(_, e)| e).collect();
    // Regressions were rejected above, so construction cannot fail.
    Ok(VecTrace::new(events).expect("text reader enforces cycle order"))
}

fn parse_hex(field: &str) -> Option<u64> {
    let digits = field.strip_prefix("0x").or_else(|| field.strip_prefix("0X")).unwrap_or(field);
    u64::from_str_radix(digits, 16).ok()
}

fn read_binary(path: &Path) -> Result<VecTrace, TraceFileError> {
    let bytes = fs::read(path).map_err(|source| TraceFileError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if bytes.len() % BINARY_RECORD_LEN != 0 {
        let len = bytes.len() as u64;
        return Err(TraceFileError::Truncated {
            path: path.to_path_buf(),
            len,
            offset: len - len % BINARY_RECORD_LEN as u64,
            record: BINARY_RECORD_LEN,
        });
    }

    let mut events = Vec::with_capacity(bytes.len() / BINARY_RECORD_LEN);
    for (index, record) in bytes.chunks_exact(BINARY_RECORD_LEN).enumerate() {
        let word = |i: usize| u64::from_le_bytes(record[i * 8..i * 8 + 8].try_into().unwrap());
        let cycle = word(0);
        let kind = match record[24] {
            0 => AccessKind::Read,
            1 => AccessKind::Write,
            value => {
                return Err(TraceFileError::BadKind {
                    path: path.to_path_buf(),
                    index,
                    value,
                })
            }
        };
        if let Some(prev) = events.last().map(|e: &TraceEvent| e.cycle) {
            if cycle < prev {
                return Err(TraceFileError::CycleRegression {
                    path: path.to_path_buf(),
                    at: format!("record {index}"),
                    cycle,
                    prev,
                });
            }
        }
        events.push(TraceEvent {
            cycle,
            pc: word(1),
            address: word(2),
            kind,
        });
    }
    Ok(VecTrace::new(events).expect("binary reader enforces cycle order"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use retsim_core::trace::{gen_strided, StridedSpec};

    fn sample_trace() -> VecTrace {
        gen_strided(&StridedSpec {
            pc: 0x400,
            base: 0x1000,
            stride: 64,
            count: 40,
            start_cycle: 5,
            inter_arrival: 7,
            kind: AccessKind::Write,
        })
        .unwrap()
    }

    #[test]
    fn text_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.trace");
        let trace = sample_trace();
        write(&path, TraceFormat::Text, &trace).unwrap();
        let back = read(&path, TraceFormat::Text).unwrap();
        assert_eq!(back.events(), trace.events());
    }

    #[test]
    fn binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        let trace = sample_trace();
        write(&path, TraceFormat::Binary, &trace).unwrap();
        assert_eq!(
            fs::metadata(&path).unwrap().len(),
            (trace.len() * BINARY_RECORD_LEN) as u64
        );
        let back = read(&path, TraceFormat::Binary).unwrap();
        assert_eq!(back.events(), trace.events());
    }

    #[test]
    fn text_skips_comments_and_blanks() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.trace");
        fs::write(&path, "# header\n\n10 400 1000 R\n20 400 1040 W # trailing\n").unwrap();
        let trace = read(&path, TraceFormat::Text).unwrap();
        assert_eq!(trace.len(), 2);
        assert_eq!(trace.events()[1].kind, AccessKind::Write);
        assert_eq!(trace.events()[1].address, 0x1040);
    }

    #[test]
    fn text_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.trace");
        fs::write(&path, "10 400 1000 R\n20 400 zzzz R\n").unwrap();
        match read(&path, TraceFormat::Text).unwrap_err() {
            TraceFileError::Malformed { line, reason, .. } => {
                assert_eq!(line, 2);
                assert!(reason.contains("zzzz"));
            }
            other => panic!("unexpected error: {other}"),
        }

        fs::write(&path, "10 400 1000 R\n20 400 1040\n").unwrap();
        match read(&path, TraceFormat::Text).unwrap_err() {
            TraceFileError::Malformed { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn text_rejects_cycle_regression() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.trace");
        fs::write(&path, "10 400 1000 R\n30 400 1040 R\n20 400 1080 R\n").unwrap();
        match read(&path, TraceFormat::Text).unwrap_err() {
            TraceFileError::CycleRegression { at, cycle, prev, .. } => {
                assert_eq!(at, "line 3");
                assert_eq!((cycle, prev), (20, 30));
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn binary_rejects_truncation_and_bad_kind() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        let trace = sample_trace();
        write(&path, TraceFormat::Binary, &trace).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.pop();
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            read(&path, TraceFormat::Binary).unwrap_err(),
            TraceFileError::Truncated { .. }
        ));

        write(&path, TraceFormat::Binary, &trace).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[BINARY_RECORD_LEN * 3 + 24] = 7;
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            read(&path, TraceFormat::Binary).unwrap_err(),
            TraceFileError::BadKind { index: 3, value: 7, .. }
        ));
    }

    #[test]
    fn format_inference() {
        assert_eq!(TraceFormat::infer(Path::new("a/b.bin")), TraceFormat::Binary);
        assert_eq!(TraceFormat::infer(Path::new("a/b.trace")), TraceFormat::Text);
        assert_eq!(TraceFormat::infer(Path::new("plain")), TraceFormat::Text);
        assert_eq!(TraceFormat::parse("binary"), Some(TraceFormat::Binary));
        assert_eq!(TraceFormat::parse("csv"), None);
    }
}
