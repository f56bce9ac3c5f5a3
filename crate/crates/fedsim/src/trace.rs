//! The CSV trace: one header row, then one row per communication round.

use std::io::{self, Write};

use fedsim_core::engine::StepTrace;

pub const HEADER: &str =
    "round,total_local_steps,comm_rounds,sq_dist,sq_dist_rel,lyapunov,grad_norm_sq";

pub struct TraceWriter<W: Write> {
    out: W,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(mut out: W) -> io::Result<Self> {
        writeln!(out, "{HEADER}")?;
        Ok(Self { out })
    }

    pub fn row(&mut self, t: &StepTrace) -> io::Result<()> {
        writeln!(
            self.out,
            "{},{},{},{:e},{:e},{:e},{:e}",
            t.round,
            t.total_local_steps,
            t.comm_rounds,
            t.sq_dist,
            t.sq_dist_rel,
            t.lyapunov,
            t.grad_norm_sq
        )
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// Parses a trace back into records; used by tests and tooling.
pub fn read_trace(text: &str) -> Result<Vec<StepTrace>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(HEADER) => {}
        other => return Err(format!("unexpected header {other:?}")),
    }
    lines
        .enumerate()
        .map(|(k, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(format!("row {}: expected 7 fields, got {}", k + 1, f.len()));
            }
            let int = |s: &str| s.parse::<u64>().map_err(|e| format!("row {}: {e}", k + 1));
            let real = |s: &str| s.parse::<f64>().map_err(|e| format!("row {}: {e}", k + 1));
            Ok(StepTrace {
                round: int(f[0])?,
                total_local_steps: int(f[1])?,
                comm_rounds: int(f[2])?,
                sq_dist: real(f[3])?,
                sq_dist_rel: real(f[4])?,
                lyapunov: real(f[5])?,
                grad_norm_sq: real(f[6])?,
            })
        })
        .collect()
}
