use mdcert_core::sdp::sweep::{run_cell, RateRow, RowStatus, SweepConfig};
use rayon::prelude::*;
use serde::Serialize;

use crate::args::SweepArgs;
use crate::error::{CliError, CliResult};
use crate::files::{fmt_f64, parse_json, read_bytes, sidecar_path, write_json, TOOL, VERSION};

pub const SWEEP_HEADER: [&str; 6] = ["kappa_f", "kappa_phi", "lambda", "eta1", "rate", "status"];

#[derive(Debug, Serialize)]
struct RowMessage<'a> {
    row: usize,
    status: RowStatus,
    message: &'a str,
}

#[derive(Debug, Serialize)]
struct SweepMeta<'a> {
    tool: &'static str,
    version: &'static str,
    config: &'a SweepConfig,
    tolerances: mdcert_core::sdp::EngineOptions,
    jobs: usize,
    rows: usize,
    certified: usize,
    messages: Vec<RowMessage<'a>>,
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn write_rows(path: &std::path::Path, rows: &[RateRow]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let fail = |e: csv::Error| CliError::Runtime(format!("{}: {e}", path.display()));
    w.write_record(SWEEP_HEADER).map_err(fail)?;
    for r in rows {
        w.write_record([
            fmt_f64(r.kappa_f),
            fmt_f64(r.kappa_phi),
            opt(r.lambda),
            opt(r.eta1),
            fmt_f64(r.rate),
            r.status.as_str().to_string(),
        ])
        .map_err(fail)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn run(a: &SweepArgs) -> CliResult<()> {
    let cfg: SweepConfig = parse_json(&read_bytes(&a.config)?, &a.config)?;
    cfg.validate().map_err(|e| match e {
        mdcert_core::Error::InvalidParameter { name, reason } => {
            CliError::Usage(format!("{}: invalid field at `/{name}`: {reason}", a.config.display()))
        }
        other => CliError::from(other),
    })?;
    let opts = a.tol.options();
    let jobs = match a.jobs {
        Some(0) => return Err(CliError::Usage("--jobs must be positive".into())),
        Some(j) => j,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let cells = cfg.cells();
    log::info!("{} cells on {jobs} threads", cells.len());
    let rows: Vec<RateRow> = pool.install(|| {
        cells
            .par_iter()
            .map(|c| run_cell(&cfg, c, &opts))
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect()
    });
    write_rows(&a.out, &rows)?;

    let messages = rows
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.message.as_deref().map(|m| RowMessage { row: i, status: r.status, message: m }))
        .collect();
    let meta = SweepMeta {
        tool: TOOL,
        version: VERSION,
        config: &cfg,
        tolerances: opts,
        jobs,
        rows: rows.len(),
        certified: rows.iter().filter(|r| r.status == RowStatus::Certified).count(),
        messages,
    };
    write_json(&sidecar_path(&a.out), &meta)
}
