//! Thread-scaling benchmark: one fixed strong-error workload timed at
//! several worker counts.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{strong_error, ErrorReport, ExperimentConfig};
use crate::report::fmt_f64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub threads: usize,
    pub seconds: f64,
    /// Single-thread time over this time.
    pub speedup: f64,
    /// Whether the numbers match the single-thread run bit for bit.
    pub identical: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchTable {
    pub rows: Vec<BenchRow>,
    pub report: ErrorReport,
}

impl BenchTable {
    pub fn all_identical(&self) -> bool {
        self.rows.iter().all(|r| r.identical)
    }

    pub fn to_csv(&self) -> Result<String> {
        let echo =
            serde_json::to_string(&self.report.config).map_err(|e| Error::Parse(e.to_string()))?;
        let mut out = format!("# bench config={echo}\nthreads,seconds,speedup,identical\n");
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{}",
                r.threads,
                fmt_f64(r.seconds),
                fmt_f64(r.speedup),
                r.identical
            )
            .unwrap();
        }
        Ok(out)
    }
}

fn same_numbers(a: &ErrorReport, b: &ErrorReport) -> bool {
    a.per_n.len() == b.per_n.len()
        && a.per_n.iter().zip(&b.per_n).all(|(x, y)| {
            x.n == y.n
                && x.error.to_bits() == y.error.to_bits()
                && x.stderr.to_bits() == y.stderr.to_bits()
        })
        && a.fitted_slope.map(f64::to_bits) == b.fitted_slope.map(f64::to_bits)
}

fn timed(cfg: &ExperimentConfig, threads: usize) -> Result<(f64, ErrorReport)> {
    let c = cfg.clone().with_threads(threads);
    let start = Instant::now();
    let report = strong_error(&c)?;
    Ok((start.elapsed().as_secs_f64(), report))
}

/// Times `strong_error(cfg)` at each worker count in `thread_list`. The
/// single-thread run is always performed as the baseline.
pub fn bench(cfg: &ExperimentConfig, thread_list: &[usize]) -> Result<BenchTable> {
    if thread_list.is_empty() {
        return Err(Error::Config(
            "bench needs at least one thread count".into(),
        ));
    }
    if thread_list.contains(&0) {
        return Err(Error::Config("thread counts must be positive".into()));
    }
    cfg.validate()?;
    let (base_secs, base) = timed(cfg, 1)?;
    let mut rows = Vec::with_capacity(thread_list.len());
    for &t in thread_list {
        let row = if t == 1 {
            BenchRow {
                threads: 1,
                seconds: base_secs,
                speedup: 1.0,
                identical: true,
            }
        } else {
            let (secs, rep) = timed(cfg, t)?;
            BenchRow {
                threads: t,
                seconds: secs,
                speedup: base_secs / secs,
                identical: same_numbers(&base, &rep),
            }
        };
        rows.push(row);
    }
    Ok(BenchTable { rows, report: base })
}
