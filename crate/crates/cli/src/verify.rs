use mdcert_core::sim::Topology;
use mdcert_core::verify::{check_thm1_bound, check_thm2_bound, check_thm3_bound, check_thm4_bound, BoundReport};
use serde::Serialize;

use crate::args::{ModeArg, VerifyArgs};
use crate::certify;
use crate::error::{CliError, CliResult};
use crate::files::{read_json, read_trajectory, sha256_hex, sidecar_path, write_json, InstanceSeeds, TrajectoryMeta, TOOL, VERSION};
use crate::simulate;

#[derive(Debug, Serialize)]
struct VerifyConfig {
    cert: String,
    traj: String,
    out: String,
}

#[derive(Debug, Serialize)]
struct VerifyReport {
    tool: &'static str,
    version: &'static str,
    config: VerifyConfig,
    instance_seeds: InstanceSeeds,
    cert_sha256: String,
    cert_matches_trajectory: bool,
    holds: bool,
    #[serde(flatten)]
    report: BoundReport,
}

pub fn run(a: &VerifyArgs) -> CliResult<()> {
    let (cert, bytes) = certify::load(&a.cert)?;
    std::fs::metadata(&a.traj).map_err(|e| CliError::io(&a.traj, e))?;
    let meta_path = sidecar_path(&a.traj);
    let meta: TrajectoryMeta = read_json(&meta_path)?;
    let traj = read_trajectory(&a.traj, &meta)?;
    let hash = sha256_hex(&bytes);
    let same_cert = hash == meta.cert_sha256;
    if !same_cert {
        log::warn!("{} is not the certificate the trajectory was simulated from", a.cert.display());
    }
    let inst = simulate::instance(&cert, &meta.config.problem, &meta.seeds)?;

    let mut report = match (cert.topology, cert.mode) {
        (Topology::Centralized, ModeArg::Sc) => check_thm1_bound(&traj, &cert.centralized()?, &inst.dgf)?,
        (Topology::Centralized, ModeArg::Convex) => check_thm2_bound(&traj, &cert.convex_centralized()?, &inst.dgf)?,
        (Topology::Distributed, ModeArg::Sc) => check_thm3_bound(&traj, &cert.distributed()?)?,
        (Topology::Distributed, ModeArg::Convex) => {
            check_thm4_bound(&traj, &cert.convex_distributed()?, &inst.obj)?
        }
    };
    let s = meta.seeds;
    report.seeds = vec![s.base, s.objective, s.dgf, s.x0];
    report.seeds.extend_from_slice(&cert.seeds);

    let holds = report.holds();
    let first = report.first_violation_k;
    let max = report.max_violation;
    write_json(
        &a.out,
        &VerifyReport {
            tool: TOOL,
            version: VERSION,
            config: VerifyConfig {
                cert: a.cert.display().to_string(),
                traj: a.traj.display().to_string(),
                out: a.out.display().to_string(),
            },
            instance_seeds: s,
            cert_sha256: hash,
            cert_matches_trajectory: same_cert,
            holds,
            report,
        },
    )?;
    match first {
        None => {
            log::info!("bound holds, max violation {max:e}");
            Ok(())
        }
        Some(k) => Err(CliError::Violation(format!("bound exceeded first at k = {k} (max violation {max:e})"))),
    }
}
