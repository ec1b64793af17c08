//! On-disk formats: certificate JSON, trajectory CSV with its metadata
//! sidecar, and shared helpers.

use std::fs;
use std::path::{Path, PathBuf};

use mdcert_core::lmi::{
    CentralizedCertificate, ConvexCentralizedCertificate, ConvexDistributedCertificate, DistributedCertificate,
    DistributedMultipliers,
};
use mdcert_core::sdp::EngineOptions;
use mdcert_core::sim::{FixedPoint, Topology, TrajectoryRecord};
use mdcert_core::{ProblemClass, SectorBounds, SymMatrix};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::args::{ClassArgs, GraphKind, ModeArg};
use crate::error::{CliError, CliResult};

pub const TOOL: &str = "mdcert";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const SEED_ENV: &str = "MIRROR_CERT_SEED";
pub const TRAJECTORY_HEADER: [&str; 5] = ["k", "bregman", "dist_sq", "pnorm_sq", "fgap"];

/// Seed used when no flag is given: `MIRROR_CERT_SEED`, else 0.
pub fn default_seed() -> CliResult<u64> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{SEED_ENV}=`{v}` is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

/// Seventeen significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

/// JSON pointer of a `serde_path_to_error` path.
pub fn json_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    out
}

pub fn parse_json<T: DeserializeOwned>(bytes: &[u8], origin: &Path) -> CliResult<T> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let pointer = json_pointer(e.path());
        CliError::Usage(format!(
            "{}: invalid field at `{}`: {}",
            origin.display(),
            if pointer.is_empty() { "/" } else { &pointer },
            e.inner()
        ))
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    parse_json(&read_bytes(path)?, path)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// `<path>.meta.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphMeta {
    /// `ring`, `path`, `star`, `complete`, `er` or `file`.
    pub kind: String,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    pub eta2: f64,
    pub eta2_auto: bool,
    pub laplacian_eigenvalues: Vec<f64>,
    pub edges: Vec<(usize, usize)>,
}

impl GraphMeta {
    pub fn kind_name(kind: GraphKind) -> &'static str {
        match kind {
            GraphKind::Ring => "ring",
            GraphKind::Path => "path",
            GraphKind::Star => "star",
            GraphKind::Complete => "complete",
            GraphKind::Er => "er",
        }
    }
}

fn rows2(m: &SymMatrix) -> [[f64; 2]; 2] {
    [[m.get(0, 0), m.get(0, 1)], [m.get(1, 0), m.get(1, 1)]]
}

fn sym2(name: &str, r: &[[f64; 2]; 2]) -> CliResult<SymMatrix> {
    SymMatrix::new(2, &[r[0][0], r[0][1], r[1][0], r[1][1]]).map_err(|e| CliError::Usage(format!("{name}: {e}")))
}

/// Certificate file. Rate fields depend on `topology` and `mode`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertFile {
    pub tool: String,
    pub version: String,
    pub topology: Topology,
    pub mode: ModeArg,
    pub class: ClassArgs,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta1: Option<f64>,
    pub sigma_f: f64,
    pub sigma_phi: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_lambda: Option<f64>,
    #[serde(rename = "P", default, skip_serializing_if = "Option::is_none")]
    pub p: Option<[[f64; 2]; 2]>,
    #[serde(rename = "Sigma_eq", default, skip_serializing_if = "Option::is_none")]
    pub sigma_eq: Option<[[f64; 2]; 2]>,
    /// Largest LMI eigenvalue (centralized).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    /// Largest eigenvalue per subspace block (distributed).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residuals: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analytic_rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit_surrogate_kappa_phi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphMeta>,
    pub tolerances: EngineOptions,
    /// Fully resolved command configuration.
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
}

impl CertFile {
    fn base(topology: Topology, mode: ModeArg, class: ClassArgs, tolerances: EngineOptions, config: serde_json::Value) -> Self {
        CertFile {
            tool: TOOL.into(),
            version: VERSION.into(),
            topology,
            mode,
            class,
            rho: None,
            eps: None,
            eta: None,
            eta1: None,
            sigma_f: 0.0,
            sigma_phi: 0.0,
            sigma_lambda: None,
            p: None,
            sigma_eq: None,
            residual: None,
            residuals: None,
            analytic_rho: None,
            limit_surrogate_kappa_phi: None,
            lambda: None,
            graph: None,
            tolerances,
            config,
            seeds: Vec::new(),
        }
    }

    pub fn from_centralized(c: &CentralizedCertificate, class: ClassArgs, analytic_rho: f64, tol: EngineOptions, config: serde_json::Value) -> Self {
        CertFile {
            rho: Some(c.rho),
            eta: Some(c.eta),
            sigma_f: c.sigma_f,
            sigma_phi: c.sigma_phi,
            residual: Some(c.residual),
            analytic_rho: Some(analytic_rho),
            limit_surrogate_kappa_phi: c.limit_surrogate_kappa_phi,
            ..Self::base(Topology::Centralized, ModeArg::Sc, class, tol, config)
        }
    }

    pub fn from_convex_centralized(c: &ConvexCentralizedCertificate, class: ClassArgs, tol: EngineOptions, config: serde_json::Value) -> Self {
        CertFile {
            eps: Some(c.eps),
            eta: Some(c.eta),
            sigma_f: c.sigma_f,
            sigma_phi: c.sigma_phi,
            residual: Some(c.residual),
            ..Self::base(Topology::Centralized, ModeArg::Convex, class, tol, config)
        }
    }

    fn with_multipliers(mut self, v: &DistributedMultipliers, residuals: [f64; 2], lambda: f64, graph: Option<GraphMeta>) -> Self {
        self.eta1 = Some(v.eta1);
        self.sigma_f = v.sigma_f;
        self.sigma_phi = v.sigma_phi;
        self.sigma_lambda = Some(v.sigma_lambda);
        self.p = Some(rows2(&v.p));
        self.sigma_eq = Some(rows2(&v.sigma_eq));
        self.residuals = Some(residuals);
        self.lambda = Some(lambda);
        if let Some(g) = &graph {
            if let Some(s) = g.seed {
                self.seeds.push(s);
            }
        }
        self.graph = graph;
        self
    }

    pub fn from_distributed(
        c: &DistributedCertificate,
        class: ClassArgs,
        lambda: f64,
        graph: Option<GraphMeta>,
        tol: EngineOptions,
        config: serde_json::Value,
    ) -> Self {
        let mut f = Self::base(Topology::Distributed, ModeArg::Sc, class, tol, config);
        f.rho = Some(c.rho);
        f.with_multipliers(&c.vars, c.residuals, lambda, graph)
    }

    pub fn from_convex_distributed(
        c: &ConvexDistributedCertificate,
        class: ClassArgs,
        lambda: f64,
        graph: Option<GraphMeta>,
        tol: EngineOptions,
        config: serde_json::Value,
    ) -> Self {
        let mut f = Self::base(Topology::Distributed, ModeArg::Convex, class, tol, config);
        f.eps = Some(c.eps);
        f.with_multipliers(&c.vars, c.residuals, lambda, graph)
    }

    pub fn problem_class(&self) -> CliResult<ProblemClass> {
        self.class.class(self.mode)
    }

    fn need<T: Copy>(&self, v: Option<T>, name: &str) -> CliResult<T> {
        v.ok_or_else(|| CliError::Usage(format!("certificate lacks `{name}`")))
    }

    pub fn centralized(&self) -> CliResult<CentralizedCertificate> {
        Ok(CentralizedCertificate {
            rho: self.need(self.rho, "rho")?,
            eta: self.need(self.eta, "eta")?,
            sigma_f: self.sigma_f,
            sigma_phi: self.sigma_phi,
            residual: self.residual.unwrap_or(f64::NAN),
            limit_surrogate_kappa_phi: self.limit_surrogate_kappa_phi,
        })
    }

    pub fn convex_centralized(&self) -> CliResult<ConvexCentralizedCertificate> {
        Ok(ConvexCentralizedCertificate {
            eps: self.need(self.eps, "eps")?,
            eta: self.need(self.eta, "eta")?,
            sigma_f: self.sigma_f,
            sigma_phi: self.sigma_phi,
            residual: self.residual.unwrap_or(f64::NAN),
        })
    }

    fn multipliers(&self) -> CliResult<DistributedMultipliers> {
        Ok(DistributedMultipliers {
            eta1: self.need(self.eta1, "eta1")?,
            p: sym2("P", &self.need(self.p, "P")?)?,
            sigma_eq: sym2("Sigma_eq", &self.need(self.sigma_eq, "Sigma_eq")?)?,
            sigma_f: self.sigma_f,
            sigma_phi: self.sigma_phi,
            sigma_lambda: self.need(self.sigma_lambda, "sigma_lambda")?,
        })
    }

    pub fn distributed(&self) -> CliResult<DistributedCertificate> {
        Ok(DistributedCertificate {
            rho: self.need(self.rho, "rho")?,
            vars: self.multipliers()?,
            residuals: self.residuals.unwrap_or([f64::NAN; 2]),
        })
    }

    pub fn convex_distributed(&self) -> CliResult<ConvexDistributedCertificate> {
        Ok(ConvexDistributedCertificate {
            eps: self.need(self.eps, "eps")?,
            vars: self.multipliers()?,
            residuals: self.residuals.unwrap_or([f64::NAN; 2]),
        })
    }

    /// Step-size the simulator runs with.
    pub fn step(&self) -> CliResult<f64> {
        match self.topology {
            Topology::Centralized => self.need(self.eta, "eta"),
            Topology::Distributed => self.need(self.eta1, "eta1"),
        }
    }

    pub fn p_matrix(&self) -> CliResult<Option<SymMatrix>> {
        self.p.as_ref().map(|p| sym2("P", p)).transpose()
    }
}

/// Problem instance a trajectory was generated from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    #[serde(default = "default_objective")]
    pub objective: mdcert_core::sim::ObjectiveKind,
    #[serde(default = "default_dgf")]
    pub dgf: mdcert_core::sim::DgfKind,
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Agents when the certificate carries no graph.
    #[serde(default = "default_agents")]
    pub agents: usize,
    /// Curvature weight of `separable_smooth` (default: `L_phi - 1`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default = "default_x0_scale")]
    pub x0_scale: f64,
    /// Explicit initial point (stacked, agent-major); overrides the seeded one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    /// When present, must equal the certificate's class.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<ClassArgs>,
}

fn default_objective() -> mdcert_core::sim::ObjectiveKind {
    mdcert_core::sim::ObjectiveKind::Quadratic
}
fn default_dgf() -> mdcert_core::sim::DgfKind {
    mdcert_core::sim::DgfKind::DiagQuadratic
}
fn default_dim() -> usize {
    10
}
fn default_agents() -> usize {
    5
}
fn default_x0_scale() -> f64 {
    1.0
}

impl Default for ProblemConfig {
    fn default() -> Self {
        ProblemConfig {
            objective: default_objective(),
            dgf: default_dgf(),
            dim: default_dim(),
            agents: default_agents(),
            alpha: None,
            x0_scale: default_x0_scale(),
            x0: None,
            class: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceSeeds {
    pub base: u64,
    pub objective: u64,
    pub dgf: u64,
    pub x0: u64,
}

impl InstanceSeeds {
    pub fn from_base(base: u64) -> Self {
        InstanceSeeds {
            base,
            objective: base,
            dgf: base.wrapping_add(1),
            x0: base.wrapping_add(2),
        }
    }
}

/// Trajectory metadata needed to check bounds without re-simulating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub topology: Topology,
    pub n: usize,
    pub d: usize,
    pub eta: f64,
    pub eta2: Option<f64>,
    pub lambda: Option<f64>,
    pub f_bounds: SectorBounds,
    pub phi_bounds: SectorBounds,
    #[serde(rename = "P")]
    pub p: [[f64; 2]; 2],
    pub p_is_default: bool,
    pub x_min: Vec<f64>,
    pub f_star: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub tool: String,
    pub version: String,
    pub config: SimulateConfig,
    pub seeds: InstanceSeeds,
    pub cert_sha256: String,
    pub record: RecordMeta,
    /// Function gap at the ergodic average for `K = 1, 2, ...`.
    pub ergodic_gap: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulateConfig {
    pub cert: String,
    pub problem: ProblemConfig,
    pub iters: usize,
    pub out: String,
}

fn p_rows(p: &SymMatrix) -> [[f64; 2]; 2] {
    if p.dim() == 2 {
        rows2(p)
    } else {
        [[1.0, 0.0], [0.0, 1.0]]
    }
}

impl RecordMeta {
    pub fn of(rec: &TrajectoryRecord) -> Self {
        RecordMeta {
            topology: rec.topology,
            n: rec.n,
            d: rec.d,
            eta: rec.eta,
            eta2: rec.eta2,
            lambda: rec.lambda,
            f_bounds: rec.f_bounds,
            phi_bounds: rec.phi_bounds,
            p: p_rows(&rec.p),
            p_is_default: rec.p_is_default,
            x_min: rec.fixed_point.x_min.clone(),
            f_star: rec.fixed_point.f_star,
        }
    }
}

pub fn write_trajectory(path: &Path, rec: &TrajectoryRecord) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let fail = |e: csv::Error| CliError::Runtime(format!("{}: {e}", path.display()));
    w.write_record(TRAJECTORY_HEADER).map_err(fail)?;
    for k in 0..rec.len() {
        w.write_record([
            k.to_string(),
            fmt_f64(rec.bregman[k]),
            fmt_f64(rec.dist_sq[k]),
            fmt_f64(rec.pnorm_sq[k]),
            fmt_f64(rec.fgap[k]),
        ])
        .map_err(fail)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Rebuilds a record (without per-iterate states) from the CSV and its sidecar.
pub fn read_trajectory(path: &Path, meta: &TrajectoryMeta) -> CliResult<TrajectoryRecord> {
    let bad = |msg: String| CliError::Usage(format!("{}: {msg}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != TRAJECTORY_HEADER {
        return Err(bad(format!("expected header `{}`", TRAJECTORY_HEADER.join(","))));
    }
    let m = &meta.record;
    let mut rec = TrajectoryRecord {
        topology: m.topology,
        n: m.n,
        d: m.d,
        eta: m.eta,
        eta2: m.eta2,
        lambda: m.lambda,
        f_bounds: m.f_bounds,
        phi_bounds: m.phi_bounds,
        p: sym2("P", &m.p)?,
        p_is_default: m.p_is_default,
        fixed_point: FixedPoint {
            x_min: m.x_min.clone(),
            x_star: Vec::new(),
            z_star: Vec::new(),
            y_star: Vec::new(),
            u_star: Vec::new(),
            v_star: Vec::new(),
            f_star: m.f_star,
        },
        bregman: Vec::new(),
        dist_sq: Vec::new(),
        pnorm_sq: Vec::new(),
        fgap: Vec::new(),
        ergodic_gap: meta.ergodic_gap.clone(),
        states: None,
    };
    for (row, result) in r.records().enumerate() {
        let line = row + 2;
        let record = result.map_err(|e| bad(e.to_string()))?;
        let field = |i: usize| -> CliResult<f64> {
            let t = record.get(i).ok_or_else(|| bad(format!("line {line}: missing column {}", TRAJECTORY_HEADER[i])))?;
            t.trim().parse().map_err(|_| bad(format!("line {line}: `{t}` is not a number")))
        };
        let k: usize = record
            .get(0)
            .and_then(|t| t.trim().parse().ok())
            .ok_or_else(|| bad(format!("line {line}: bad iteration index")))?;
        if k != row {
            return Err(bad(format!("line {line}: expected k = {row}, found {k}")));
        }
        rec.bregman.push(field(1)?);
        rec.dist_sq.push(field(2)?);
        rec.pnorm_sq.push(field(3)?);
        rec.fgap.push(field(4)?);
    }
    let expected = match rec.topology {
        Topology::Centralized => rec.len().saturating_sub(1),
        Topology::Distributed => rec.len(),
    };
    if rec.ergodic_gap.len() != expected {
        return Err(bad(format!(
            "{} rows need {expected} ergodic values, the sidecar holds {}",
            rec.len(),
            rec.ergodic_gap.len()
        )));
    }
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn csv_numbers_round_trip(v in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            prop_assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn sidecar_appends_suffix() {
        assert_eq!(sidecar_path(Path::new("out/t.csv")), PathBuf::from("out/t.csv.meta.json"));
    }

    #[test]
    fn pointer_of_nested_field() {
        #[derive(Debug, Deserialize)]
        #[allow(dead_code)]
        struct Outer {
            a: Vec<Inner>,
        }
        #[derive(Debug, Deserialize)]
        #[allow(dead_code)]
        struct Inner {
            b: f64,
        }
        let err = parse_json::<Outer>(br#"{"a": [{"b": 1}, {"b": "x"}]}"#, Path::new("f.json")).unwrap_err();
        assert!(err.to_string().contains("`/a/1/b`"), "{err}");
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn seeds_are_offset_from_the_base() {
        let s = InstanceSeeds::from_base(u64::MAX);
        assert_eq!((s.objective, s.dgf, s.x0), (u64::MAX, 0, 1));
    }
}
