use mdcert_core::network::{Graph, NetworkSpec};
use mdcert_core::sim::{
    make_dgf, make_objective, run_centralized, run_distributed, seeded_start, DgfKind, DgfOracle, DgfParams,
    MirrorMap, ObjectiveOracle, Topology,
};

use crate::args::SimulateArgs;
use crate::certify;
use crate::error::{CliError, CliResult};
use crate::files::{
    default_seed, read_json, sha256_hex, sidecar_path, write_json, write_trajectory, CertFile, InstanceSeeds,
    ProblemConfig, RecordMeta, SimulateConfig, TrajectoryMeta, TOOL, VERSION,
};

/// Slack when comparing a network's spectral norm with the certified one.
const LAMBDA_SLACK: f64 = 1e-9;

pub struct Instance {
    pub dgf: DgfOracle,
    pub obj: ObjectiveOracle,
    pub net: Option<NetworkSpec>,
}

/// Resolves defaults that depend on the certificate (the `separable_smooth` weight).
pub fn resolve(cert: &CertFile, mut problem: ProblemConfig) -> CliResult<ProblemConfig> {
    if let Some(c) = &problem.class {
        if *c != cert.class {
            return Err(CliError::Usage(format!(
                "problem class {c:?} differs from the certificate class {:?}",
                cert.class
            )));
        }
    }
    if problem.dim == 0 {
        return Err(CliError::Usage("problem dimension must be positive".into()));
    }
    if !(problem.x0_scale >= 0.0 && problem.x0_scale.is_finite()) {
        return Err(CliError::Usage("x0_scale must be finite and nonnegative".into()));
    }
    if problem.dgf == DgfKind::SeparableSmooth && problem.alpha.is_none() {
        problem.alpha = Some(cert.class.l_phi - 1.0);
    }
    Ok(problem)
}

pub fn network(cert: &CertFile, problem: &ProblemConfig) -> CliResult<NetworkSpec> {
    let lambda = cert
        .lambda
        .ok_or_else(|| CliError::Usage("distributed certificate lacks `lambda`".into()))?;
    let net = match &cert.graph {
        Some(g) => NetworkSpec::build(&Graph::new(g.n, &g.edges)?, Some(g.eta2))?,
        None => NetworkSpec::with_lambda(lambda, problem.agents)?,
    };
    if net.lambda > lambda + LAMBDA_SLACK {
        return Err(CliError::Usage(format!(
            "network has lambda = {} above the certified {lambda}",
            net.lambda
        )));
    }
    Ok(net)
}

pub fn instance(cert: &CertFile, problem: &ProblemConfig, seeds: &InstanceSeeds) -> CliResult<Instance> {
    let pc = cert.problem_class()?;
    let params = DgfParams {
        bounds: pc.phi,
        alpha: problem.alpha.unwrap_or(0.0),
        dim: problem.dim,
    };
    let dgf = make_dgf(problem.dgf, &params, seeds.dgf)?;
    if !pc.phi.contains(&dgf.bounds()) {
        return Err(CliError::Usage(format!(
            "mirror map bounds ({}, {}) lie outside the certified ({}, {})",
            dgf.bounds().mu(),
            dgf.bounds().l(),
            pc.phi.mu(),
            pc.phi.l()
        )));
    }
    let (net, n) = match cert.topology {
        Topology::Centralized => (None, 1),
        Topology::Distributed => {
            let net = network(cert, problem)?;
            let n = net.n;
            (Some(net), n)
        }
    };
    let obj = make_objective(problem.objective, pc.f, n, problem.dim, seeds.objective)?;
    Ok(Instance { dgf, obj, net })
}

pub fn run(a: &SimulateArgs) -> CliResult<()> {
    let (cert, bytes) = certify::load(&a.cert)?;
    let problem = match &a.problem {
        Some(path) => read_json::<ProblemConfig>(path)?,
        None => {
            let d = ProblemConfig::default();
            ProblemConfig {
                objective: a.objective.map_or(d.objective, Into::into),
                dgf: a.dgf.map_or(d.dgf, Into::into),
                dim: a.dim.unwrap_or(d.dim),
                agents: a.agents.unwrap_or(d.agents),
                alpha: a.alpha,
                x0_scale: a.x0_scale.unwrap_or(d.x0_scale),
                ..d
            }
        }
    };
    let problem = resolve(&cert, problem)?;
    let seeds = InstanceSeeds::from_base(match a.seed {
        Some(s) => s,
        None => default_seed()?,
    });
    let inst = instance(&cert, &problem, &seeds)?;
    let n = inst.obj.n();
    let len = n * problem.dim;
    let x0 = match &problem.x0 {
        Some(x) if x.len() == len => x.clone(),
        Some(x) => {
            return Err(CliError::Usage(format!("x0 has {} entries, expected {len}", x.len())));
        }
        None => seeded_start(len, problem.x0_scale, seeds.x0),
    };
    let step = cert.step()?;
    let rec = match &inst.net {
        None => run_centralized(&inst.dgf, &inst.obj, step, &x0, a.iters)?,
        Some(net) => run_distributed(&inst.dgf, &inst.obj, net, step, &x0, a.iters, cert.p_matrix()?.as_ref())?,
    };
    write_trajectory(&a.out, &rec)?;
    let meta = TrajectoryMeta {
        tool: TOOL.into(),
        version: VERSION.into(),
        config: SimulateConfig {
            cert: a.cert.display().to_string(),
            problem,
            iters: a.iters,
            out: a.out.display().to_string(),
        },
        seeds,
        cert_sha256: sha256_hex(&bytes),
        record: RecordMeta::of(&rec),
        ergodic_gap: rec.ergodic_gap.clone(),
    };
    write_json(&sidecar_path(&a.out), &meta)?;
    log::info!("wrote {} iterates to {}", rec.len(), a.out.display());
    Ok(())
}
