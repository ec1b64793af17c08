use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use mdcert_core::sdp::{log_grid, EngineOptions};
use mdcert_core::sim::{DgfKind, ObjectiveKind};
use mdcert_core::ProblemClass;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "mdcert", version, about = "Convergence-rate certificates for centralized and distributed mirror descent")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Certify a rate for centralized mirror descent.
    CertifyCentralized(CertifyCentralizedArgs),
    /// Certify a rate for distributed mirror descent over a network.
    CertifyDistributed(CertifyDistributedArgs),
    /// Simulate the algorithm of a certificate and record a trajectory.
    Simulate(SimulateArgs),
    /// Check a recorded trajectory against the bound of a certificate.
    Verify(VerifyArgs),
    /// Certify over a grid of condition numbers, spectral gaps and step-sizes.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeArg {
    /// Strongly convex objective, exponential rate `rho`.
    Sc,
    /// Convex objective, O(1/k) rate with constant `eps`.
    Convex,
}

#[derive(Debug, Clone, Copy, Args, Serialize, Deserialize, PartialEq)]
pub struct ClassArgs {
    #[arg(long = "mu-f")]
    pub mu_f: f64,
    #[arg(long = "L-f")]
    #[serde(rename = "L_f")]
    pub l_f: f64,
    #[arg(long = "mu-phi")]
    pub mu_phi: f64,
    #[arg(long = "L-phi")]
    #[serde(rename = "L_phi")]
    pub l_phi: f64,
}

impl ClassArgs {
    pub fn class(&self, mode: ModeArg) -> CliResult<ProblemClass> {
        let pc = ProblemClass::from_params(self.mu_f, self.l_f, self.mu_phi, self.l_phi)?;
        let is_convex = self.mu_f == 0.0;
        match (mode, is_convex) {
            (ModeArg::Sc, true) => Err(CliError::Usage("--mode sc needs --mu-f > 0".into())),
            (ModeArg::Convex, false) => Err(CliError::Usage("--mode convex needs --mu-f 0".into())),
            _ => Ok(pc),
        }
    }
}

#[derive(Debug, Clone, Copy, Args, Serialize)]
pub struct ToleranceArgs {
    /// Strict margin on the largest LMI eigenvalue.
    #[arg(long, default_value_t = EngineOptions::default().delta)]
    pub delta: f64,
    /// Bisection width on rho.
    #[arg(long, default_value_t = EngineOptions::default().rho_width)]
    pub rho_width: f64,
    /// Bisection width on eps.
    #[arg(long, default_value_t = EngineOptions::default().eps_width)]
    pub eps_width: f64,
}

impl ToleranceArgs {
    pub fn options(&self) -> EngineOptions {
        EngineOptions {
            delta: self.delta,
            rho_width: self.rho_width,
            eps_width: self.eps_width,
            ..EngineOptions::default()
        }
    }
}

/// `lo:hi:steps`, expanded to `steps` log-spaced points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

impl GridSpec {
    pub fn points(&self) -> CliResult<Vec<f64>> {
        Ok(log_grid(self.lo, self.hi, self.steps)?)
    }
}

impl std::str::FromStr for GridSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, steps] = parts[..] else {
            return Err("expected lo:hi:steps".into());
        };
        let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}"));
        let g = GridSpec {
            lo: num(lo)?,
            hi: num(hi)?,
            steps: steps.trim().parse().map_err(|e| format!("`{steps}`: {e}"))?,
        };
        log_grid(g.lo, g.hi, g.steps).map_err(|e| e.to_string())?;
        Ok(g)
    }
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("step").required(true).args(["eta", "optimize_eta"])))]
pub struct CertifyCentralizedArgs {
    #[command(flatten)]
    pub class: ClassArgs,
    /// Fixed step-size.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Optimize the step-size (exactly in sc mode, over --eta-grid in convex mode).
    #[arg(long)]
    pub optimize_eta: bool,
    /// Step-size grid for --optimize-eta in convex mode.
    #[arg(long, value_name = "LO:HI:STEPS")]
    pub eta_grid: Option<GridSpec>,
    #[arg(long, value_enum, default_value = "sc")]
    pub mode: ModeArg,
    #[command(flatten)]
    pub tol: ToleranceArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphKind {
    Ring,
    Path,
    Star,
    Complete,
    Er,
}

/// `auto` or a positive number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Eta2Arg {
    Auto,
    Value(f64),
}

impl std::str::FromStr for Eta2Arg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "auto" {
            return Ok(Eta2Arg::Auto);
        }
        match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(Eta2Arg::Value(v)),
            _ => Err("expected `auto` or a positive number".into()),
        }
    }
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("network").required(true).args(["lambda", "graph", "graph_file"])))]
pub struct CertifyDistributedArgs {
    #[command(flatten)]
    pub class: ClassArgs,
    /// Spectral norm of the mixing deviation, instead of a graph.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, value_enum, requires = "n")]
    pub graph: Option<GraphKind>,
    /// Edge-list file: a line `n m`, then `m` lines `i j` (0-based).
    #[arg(long)]
    pub graph_file: Option<PathBuf>,
    /// Number of agents for --graph.
    #[arg(long)]
    pub n: Option<usize>,
    /// Edge probability for --graph er.
    #[arg(long)]
    pub p: Option<f64>,
    /// Seed for --graph er (defaults to MIRROR_CERT_SEED, then 0).
    #[arg(long)]
    pub graph_seed: Option<u64>,
    /// Consensus step-size, or `auto` for the choice minimizing lambda.
    #[arg(long, default_value = "auto")]
    pub eta2: Eta2Arg,
    /// Grid of algorithm step-sizes (default: 64 points up to 40 mu_phi / (mu_f + L_f)).
    #[arg(long, value_name = "LO:HI:STEPS")]
    pub eta1_grid: Option<GridSpec>,
    #[arg(long, value_enum, default_value = "sc")]
    pub mode: ModeArg,
    #[command(flatten)]
    pub tol: ToleranceArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveArg {
    Quadratic,
    LogisticL2,
}

impl From<ObjectiveArg> for ObjectiveKind {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::Quadratic => ObjectiveKind::Quadratic,
            ObjectiveArg::LogisticL2 => ObjectiveKind::LogisticL2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DgfArg {
    Euclidean,
    DiagQuadratic,
    SeparableSmooth,
}

impl From<DgfArg> for DgfKind {
    fn from(d: DgfArg) -> Self {
        match d {
            DgfArg::Euclidean => DgfKind::Euclidean,
            DgfArg::DiagQuadratic => DgfKind::DiagQuadratic,
            DgfArg::SeparableSmooth => DgfKind::SeparableSmooth,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub cert: PathBuf,
    /// Problem description (JSON); replaces the seeded-instance flags below.
    #[arg(long, conflicts_with_all = ["objective", "dgf", "dim", "agents", "alpha", "x0_scale"])]
    pub problem: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub objective: Option<ObjectiveArg>,
    #[arg(long, value_enum)]
    pub dgf: Option<DgfArg>,
    /// Dimension of each agent's variable.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Agents, for certificates issued from --lambda alone.
    #[arg(long)]
    pub agents: Option<usize>,
    /// Curvature weight of the separable_smooth mirror map.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Standard deviation of the seeded initial point.
    #[arg(long)]
    pub x0_scale: Option<f64>,
    #[arg(long)]
    pub iters: usize,
    /// Instance seed (defaults to MIRROR_CERT_SEED, then 0).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub cert: PathBuf,
    /// Trajectory CSV; its metadata is read from `<traj>.meta.json`.
    #[arg(long)]
    pub traj: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    pub jobs: Option<usize>,
    #[command(flatten)]
    pub tol: ToleranceArgs,
}
