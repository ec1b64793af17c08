use std::path::Path;

use mdcert_core::network::{Graph, NetworkSpec};
use mdcert_core::sdp::{
    analytic_rho, default_eta_grid, max_eps_centralized, max_eps_centralized_at, max_eps_distributed,
    min_rho_centralized, min_rho_distributed,
};
use serde_json::json;

use crate::args::{CertifyCentralizedArgs, CertifyDistributedArgs, Eta2Arg, GraphKind, ModeArg};
use crate::error::{CliError, CliResult};
use crate::files::{default_seed, read_bytes, write_json, CertFile, GraphMeta};

pub fn centralized(a: &CertifyCentralizedArgs) -> CliResult<()> {
    let pc = a.class.class(a.mode)?;
    let opts = a.tol.options();
    if let Some(eta) = a.eta {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(CliError::Usage("--eta must be positive and finite".into()));
        }
    }
    let grid = match (a.mode, a.optimize_eta, a.eta_grid) {
        (ModeArg::Convex, true, Some(g)) => Some(g.points()?),
        (ModeArg::Convex, true, None) => Some(default_eta_grid(&pc)),
        (_, _, Some(_)) => return Err(CliError::Usage("--eta-grid applies to --mode convex --optimize-eta".into())),
        _ => None,
    };
    let config = json!({
        "command": "certify-centralized",
        "class": a.class,
        "mode": a.mode,
        "eta": a.eta,
        "optimize_eta": a.optimize_eta,
        "eta_grid": grid,
        "tolerances": opts,
        "out": a.out,
    });

    let file = match a.mode {
        ModeArg::Sc => {
            let c = min_rho_centralized(&pc, a.eta, &opts)?;
            log::info!("certified rho = {} at eta = {}", c.rho, c.eta);
            CertFile::from_centralized(&c, a.class, analytic_rho(&pc), opts, config)
        }
        ModeArg::Convex => {
            let c = match (a.eta, grid) {
                (Some(eta), _) => max_eps_centralized_at(&pc, eta, &opts)?
                    .ok_or_else(|| CliError::NoCertificate(format!("no eps > 0 certified at eta = {eta}")))?,
                (None, Some(grid)) => max_eps_centralized(&pc, &grid, &opts)?,
                (None, None) => unreachable!("clap requires --eta or --optimize-eta"),
            };
            log::info!("certified eps = {} at eta = {}", c.eps, c.eta);
            CertFile::from_convex_centralized(&c, a.class, opts, config)
        }
    };
    write_json(&a.out, &file)
}

fn build_graph(a: &CertifyDistributedArgs) -> CliResult<Option<(Graph, GraphMeta)>> {
    let meta = |kind: &str, g: &Graph| GraphMeta {
        kind: kind.into(),
        n: g.n(),
        p: None,
        seed: None,
        file: None,
        eta2: f64::NAN,
        eta2_auto: false,
        laplacian_eigenvalues: Vec::new(),
        edges: g.edges().to_vec(),
    };
    if let Some(path) = &a.graph_file {
        let text = String::from_utf8(read_bytes(path)?)
            .map_err(|_| CliError::Usage(format!("{}: not UTF-8 text", path.display())))?;
        let g = Graph::parse_edge_list(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let mut m = meta("file", &g);
        m.file = Some(path.display().to_string());
        return Ok(Some((g, m)));
    }
    let Some(kind) = a.graph else {
        return Ok(None);
    };
    let n = a.n.ok_or_else(|| CliError::Usage("--graph needs --n".into()))?;
    if a.p.is_some() && kind != GraphKind::Er {
        return Err(CliError::Usage("--p applies to --graph er".into()));
    }
    let (g, p, seed) = match kind {
        GraphKind::Ring => (Graph::ring(n)?, None, None),
        GraphKind::Path => (Graph::path(n)?, None, None),
        GraphKind::Star => (Graph::star(n)?, None, None),
        GraphKind::Complete => (Graph::complete(n)?, None, None),
        GraphKind::Er => {
            let p = a.p.ok_or_else(|| CliError::Usage("--graph er needs --p".into()))?;
            let seed = match a.graph_seed {
                Some(s) => s,
                None => default_seed()?,
            };
            (Graph::erdos_renyi(n, p, seed)?, Some(p), Some(seed))
        }
    };
    let mut m = meta(GraphMeta::kind_name(kind), &g);
    m.p = p;
    m.seed = seed;
    Ok(Some((g, m)))
}

pub fn distributed(a: &CertifyDistributedArgs) -> CliResult<()> {
    let pc = a.class.class(a.mode)?;
    let opts = a.tol.options();
    let graph = build_graph(a)?;
    let (lambda, graph_meta) = match graph {
        Some((g, mut meta)) => {
            let eta2 = match a.eta2 {
                Eta2Arg::Auto => None,
                Eta2Arg::Value(v) => Some(v),
            };
            let net = NetworkSpec::build(&g, eta2)?;
            meta.eta2 = net.eta2;
            meta.eta2_auto = eta2.is_none();
            meta.laplacian_eigenvalues = net.laplacian_eigenvalues();
            (net.lambda, Some(meta))
        }
        None => {
            let lambda = a.lambda.expect("clap requires a network source");
            if !(lambda >= 0.0 && lambda.is_finite()) {
                return Err(CliError::Usage("--lambda must be finite and nonnegative".into()));
            }
            (lambda, None)
        }
    };
    if lambda >= 1.0 {
        log::warn!("lambda = {lambda} >= 1: the network does not contract disagreement");
        return Err(CliError::NoCertificate(format!("lambda = {lambda} >= 1 admits no certificate")));
    }
    let grid = match a.eta1_grid {
        Some(g) => g.points()?,
        None => default_eta_grid(&pc),
    };
    let config = json!({
        "command": "certify-distributed",
        "class": a.class,
        "mode": a.mode,
        "lambda": lambda,
        "graph": graph_meta.as_ref().map(|m| json!({"kind": m.kind, "n": m.n, "p": m.p, "seed": m.seed, "file": m.file})),
        "eta2": graph_meta.as_ref().map(|m| m.eta2),
        "eta1_grid": grid,
        "tolerances": opts,
        "out": a.out,
    });
    log::info!("lambda = {lambda}");

    let file = match a.mode {
        ModeArg::Sc => {
            let c = min_rho_distributed(&pc, lambda, &grid, &opts)?;
            log::info!("certified rho = {} at eta1 = {}", c.rho, c.vars.eta1);
            CertFile::from_distributed(&c, a.class, lambda, graph_meta, opts, config)
        }
        ModeArg::Convex => {
            let c = max_eps_distributed(&pc, lambda, &grid, &opts)?;
            log::info!("certified eps = {} at eta1 = {}", c.eps, c.vars.eta1);
            CertFile::from_convex_distributed(&c, a.class, lambda, graph_meta, opts, config)
        }
    };
    write_json(&a.out, &file)
}

/// Reads a certificate and checks that its stored class is valid.
pub fn load(path: &Path) -> CliResult<(CertFile, Vec<u8>)> {
    let bytes = read_bytes(path)?;
    let cert: CertFile = crate::files::parse_json(&bytes, path)?;
    cert.problem_class()?;
    Ok((cert, bytes))
}
