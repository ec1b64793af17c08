//! Undirected graphs, Laplacians, consensus weights and the consensus
//! projectors `J1 = (I - 11ᵀ/n) ⊗ I_d`, `J2 = (11ᵀ/n) ⊗ I_d`.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result, SymMatrix};

/// Connected undirected graph without self-loops.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl Graph {
    /// Validates the edge list; duplicate edges (in either orientation) are merged.
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n < 2 {
            return Err(Error::param("n", "a graph needs at least two agents"));
        }
        let mut norm = Vec::with_capacity(edges.len());
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::param("edges", format!("edge ({i}, {j}) references an agent outside 0..{n}")));
            }
            if i == j {
                return Err(Error::param("edges", format!("self-loop at agent {i}")));
            }
            norm.push((i.min(j), i.max(j)));
        }
        norm.sort_unstable();
        norm.dedup();
        let g = Graph { n, edges: norm };
        if !g.is_connected() {
            return Err(Error::Disconnected);
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    fn is_connected(&self) -> bool {
        let mut adj = vec![Vec::new(); self.n];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    queue.push_back(w);
                }
            }
        }
        count == self.n
    }

    pub fn ring(n: usize) -> Result<Self> {
        if n < 3 {
            return Self::path(n);
        }
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Self::new(n, &edges)
    }

    pub fn path(n: usize) -> Result<Self> {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::new(n, &edges)
    }

    /// Agent 0 is the hub.
    pub fn star(n: usize) -> Result<Self> {
        let edges: Vec<_> = (1..n).map(|i| (0, i)).collect();
        Self::new(n, &edges)
    }

    pub fn complete(n: usize) -> Result<Self> {
        let edges: Vec<_> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
        Self::new(n, &edges)
    }

    /// Parses the edge-list format: a header line `n m`, then `m` lines
    /// `i j` with 0-based agent indices. Blank lines and `#` comments are
    /// skipped. Errors carry 1-based line numbers.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(k, l)| (k + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let (hline, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            reason: "missing header `n m`".into(),
        })?;
        let [n, m] = pair(hline, header)?;
        let mut edges = Vec::with_capacity(m);
        for (line, l) in lines {
            if edges.len() == m {
                return Err(Error::Parse {
                    line,
                    reason: format!("more than the {m} declared edges"),
                });
            }
            let [i, j] = pair(line, l)?;
            if i >= n || j >= n {
                return Err(Error::Parse {
                    line,
                    reason: format!("agent index out of range 0..{n}"),
                });
            }
            if i == j {
                return Err(Error::Parse {
                    line,
                    reason: format!("self-loop at agent {i}"),
                });
            }
            edges.push((i, j));
        }
        if edges.len() != m {
            return Err(Error::Parse {
                line: text.lines().count().max(1),
                reason: format!("expected {m} edges, found {}", edges.len()),
            });
        }
        Self::new(n, &edges)
    }

    /// G(n, p) resampled until connected (at most 1000 draws).
    pub fn erdos_renyi(n: usize, p: f64, seed: u64) -> Result<Self> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::param("p", "edge probability must lie in (0, 1]"));
        }
        if n < 2 {
            return Err(Error::param("n", "a graph needs at least two agents"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..1000 {
            let mut edges = Vec::new();
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng.gen::<f64>() < p {
                        edges.push((i, j));
                    }
                }
            }
            match Self::new(n, &edges) {
                Ok(g) => return Ok(g),
                Err(Error::Disconnected) => continue,
                Err(e) => return Err(e),
            }
        }
        Err(Error::NotConverged(format!(
            "no connected G({n}, {p}) sample in 1000 draws"
        )))
    }
}

fn pair(line: usize, l: &str) -> Result<[usize; 2]> {
    let mut it = l.split_whitespace();
    let mut next = || -> Result<usize> {
        let tok = it.next().ok_or(Error::Parse {
            line,
            reason: "expected two integers".into(),
        })?;
        tok.parse().map_err(|_| Error::Parse {
            line,
            reason: format!("`{tok}` is not a nonnegative integer"),
        })
    };
    let out = [next()?, next()?];
    if it.next().is_some() {
        return Err(Error::Parse {
            line,
            reason: "expected exactly two integers".into(),
        });
    }
    Ok(out)
}

/// Degree matrix minus adjacency.
pub fn laplacian_of(g: &Graph) -> SymMatrix {
    let mut l = SymMatrix::zeros(g.n);
    for &(i, j) in &g.edges {
        l.set(i, i, l.get(i, i) + 1.0);
        l.set(j, j, l.get(j, j) + 1.0);
        l.set(i, j, -1.0);
    }
    l
}

/// Consensus weights `W = I - eta2 L`, `ΔW = W - 11ᵀ/n` and `λ = ‖ΔW‖`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NetworkSpec {
    pub n: usize,
    pub laplacian: SymMatrix,
    pub eta2: f64,
    pub w: SymMatrix,
    pub delta_w: SymMatrix,
    pub lambda: f64,
}

impl NetworkSpec {
    /// Builds the weights; without `eta2` the choice `2 / (λ_2(L) + λ_n(L))`
    /// minimizing `λ` is used.
    pub fn build(g: &Graph, eta2: Option<f64>) -> Result<Self> {
        let laplacian = laplacian_of(g);
        let eta2 = match eta2 {
            Some(e) if e > 0.0 && e.is_finite() => e,
            Some(_) => return Err(Error::param("eta2", "must be positive and finite")),
            None => {
                let ev = laplacian.eigenvalues();
                2.0 / (ev[1] + ev[ev.len() - 1])
            }
        };
        Ok(Self::from_laplacian(laplacian, eta2))
    }

    fn from_laplacian(laplacian: SymMatrix, eta2: f64) -> Self {
        let n = laplacian.dim();
        let w = SymMatrix::identity(n).add_scaled(-eta2, &laplacian).expect("same dimension");
        let avg = SymMatrix::symmetrized(DMatrix::from_element(n, n, 1.0 / n as f64));
        let delta_w = w.sub(&avg).expect("same dimension");
        let lambda = delta_w.spectral_norm();
        if lambda >= 1.0 {
            log::warn!("consensus step eta2 = {eta2} gives ‖ΔW‖ = {lambda} >= 1");
        }
        NetworkSpec {
            n,
            laplacian,
            eta2,
            w,
            delta_w,
            lambda,
        }
    }

    /// The degenerate one-agent network (`L = 0`, `ΔW = 0`).
    pub fn single_agent() -> Self {
        Self::from_laplacian(SymMatrix::zeros(1), 1.0)
    }

    /// A complete graph on `n` agents whose weights realize `‖ΔW‖ = lambda`
    /// (`eta2 = (1 - lambda) / n`).
    pub fn with_lambda(lambda: f64, n: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&lambda) {
            return Err(Error::param("lambda", "must lie in [0, 1)"));
        }
        let g = Graph::complete(n)?;
        Self::build(&g, Some((1.0 - lambda) / n as f64))
    }

    /// Eigenvalues of the Laplacian in ascending order.
    pub fn laplacian_eigenvalues(&self) -> Vec<f64> {
        self.laplacian.eigenvalues()
    }
}

/// `(J1, J2)` for `n` agents of dimension `d`.
pub fn consensus_projectors(n: usize, d: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let avg = DMatrix::from_element(n, n, 1.0 / n as f64);
    let id = DMatrix::<f64>::identity(d, d);
    let j2 = avg.kronecker(&id);
    let j1 = DMatrix::<f64>::identity(n * d, n * d) - &j2;
    (j1, j2)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BlockReductionReport {
    pub q_psd: bool,
    pub q1_psd: bool,
    pub q2_psd: bool,
    pub q_min_eigenvalue: f64,
    pub q1_min_eigenvalue: f64,
    pub q2_min_eigenvalue: f64,
}

impl BlockReductionReport {
    /// Whether `Q ⪰ 0` agrees with `Q1 ⪰ 0 and Q2 ⪰ 0`.
    pub fn agrees(&self) -> bool {
        self.q_psd == (self.q1_psd && self.q2_psd)
    }
}

/// Forms `Q = Q1 ⊗ J1 + Q2 ⊗ J2` and compares its semidefiniteness with that
/// of the two small blocks.
pub fn block_reduction_check(q1: &SymMatrix, q2: &SymMatrix, n: usize, d: usize) -> Result<BlockReductionReport> {
    let m = q1.dim();
    if q2.dim() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: q2.dim(),
        });
    }
    if !(2..=10).contains(&m) {
        return Err(Error::param("m", "block size must lie in 2..=10"));
    }
    if n == 0 || d == 0 || n * d > 64 {
        return Err(Error::param("n", "need n, d >= 1 and n * d <= 64"));
    }
    let (j1, j2) = consensus_projectors(n, d);
    let q = q1.as_matrix().kronecker(&j1) + q2.as_matrix().kronecker(&j2);
    let q = SymMatrix::symmetrized(q);
    let (qm, q1m, q2m) = (q.min_eigenvalue(), q1.min_eigenvalue(), q2.min_eigenvalue());
    let tol = |s: &SymMatrix| -1e-10 * (1.0 + s.as_matrix().amax());
    Ok(BlockReductionReport {
        q_psd: qm >= tol(&q),
        q1_psd: q1m >= tol(q1),
        q2_psd: q2m >= tol(q2),
        q_min_eigenvalue: qm,
        q1_min_eigenvalue: q1m,
        q2_min_eigenvalue: q2m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand_distr::StandardNormal;

    fn rows(m: &SymMatrix) -> Vec<Vec<f64>> {
        m.rows()
    }

    #[test]
    fn small_laplacians() {
        let k3 = laplacian_of(&Graph::complete(3).unwrap());
        assert_eq!(rows(&k3), vec![vec![2.0, -1.0, -1.0], vec![-1.0, 2.0, -1.0], vec![-1.0, -1.0, 2.0]]);
        let p3 = laplacian_of(&Graph::path(3).unwrap());
        assert_eq!(rows(&p3), vec![vec![1.0, -1.0, 0.0], vec![-1.0, 2.0, -1.0], vec![0.0, -1.0, 1.0]]);
    }

    #[test]
    fn ring_spectrum_is_circulant() {
        let ev = laplacian_of(&Graph::ring(5).unwrap()).eigenvalues();
        let mut expect: Vec<f64> = (0..5)
            .map(|k| 2.0 - 2.0 * libm::cos(2.0 * core::f64::consts::PI * k as f64 / 5.0))
            .collect();
        expect.sort_by(f64::total_cmp);
        for (a, b) in ev.iter().zip(&expect) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn edge_list_round_trip_and_errors() {
        let g = Graph::parse_edge_list("# ring\n3 3\n0 1\n1 2\n\n2 0\n").unwrap();
        assert_eq!(g, Graph::ring(3).unwrap());
        let line = |t: &str| match Graph::parse_edge_list(t) {
            Err(Error::Parse { line, .. }) => line,
            other => panic!("{other:?}"),
        };
        assert_eq!(line(""), 1);
        assert_eq!(line("3 2\n0 1\n1 x\n"), 3);
        assert_eq!(line("3 2\n0 1\n1 5\n"), 3);
        assert_eq!(line("3 1\n0 1\n1 2\n"), 3);
        assert_eq!(line("3 2\n0 0\n"), 2);
        assert_eq!(line("3 2 7\n"), 1);
        assert_eq!(Graph::parse_edge_list("4 2\n0 1\n2 3\n"), Err(Error::Disconnected));
    }

    #[test]
    fn rejects_bad_graphs() {
        assert_eq!(Graph::new(4, &[(0, 1), (2, 3)]), Err(Error::Disconnected));
        assert!(Graph::new(3, &[(0, 0), (1, 2)]).is_err());
        assert!(Graph::new(3, &[(0, 3)]).is_err());
        assert!(Graph::new(1, &[]).is_err());
        let g = Graph::new(3, &[(0, 1), (1, 0), (1, 2)]).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
    }

    #[test]
    fn complete_graph_with_uniform_weights_mixes_exactly() {
        for n in 2..7 {
            let net = NetworkSpec::build(&Graph::complete(n).unwrap(), Some(1.0 / n as f64)).unwrap();
            assert!(net.lambda < 1e-12);
        }
    }

    #[test]
    fn auto_step_examples() {
        let ring = NetworkSpec::build(&Graph::ring(5).unwrap(), None).unwrap();
        assert_abs_diff_eq!(ring.eta2, 0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(ring.lambda, 0.447_213_595_499_958, epsilon = 1e-9);
        let star = NetworkSpec::build(&Graph::star(4).unwrap(), None).unwrap();
        assert_abs_diff_eq!(star.eta2, 0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(star.lambda, 0.6, epsilon = 1e-12);
    }

    #[test]
    fn weight_invariants() {
        for g in [Graph::ring(6), Graph::star(5), Graph::path(4), Graph::erdos_renyi(8, 0.4, 3)] {
            let g = g.unwrap();
            let net = NetworkSpec::build(&g, None).unwrap();
            let n = g.n();
            for i in 0..n {
                let lrow: f64 = (0..n).map(|j| net.laplacian.get(i, j)).sum();
                let wrow: f64 = (0..n).map(|j| net.w.get(i, j)).sum();
                let dcol: f64 = (0..n).map(|j| net.delta_w.get(j, i)).sum();
                assert_abs_diff_eq!(lrow, 0.0, epsilon = 1e-12);
                assert_abs_diff_eq!(wrow, 1.0, epsilon = 1e-12);
                assert_abs_diff_eq!(dcol, 0.0, epsilon = 1e-12);
            }
            assert!(net.laplacian.min_eigenvalue() > -1e-12);
            assert!(net.lambda < 1.0);
            // Spectrum of ΔW: 0 together with 1 - eta2 μ over the nonzero Laplacian spectrum.
            let lev = net.laplacian_eigenvalues();
            let mut expect: Vec<f64> = lev[1..].iter().map(|m| 1.0 - net.eta2 * m).collect();
            expect.push(0.0);
            expect.sort_by(f64::total_cmp);
            for (a, b) in net.delta_w.eigenvalues().iter().zip(&expect) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-10);
            }
            assert_abs_diff_eq!(net.lambda, net.delta_w.spectral_norm(), epsilon = 1e-10);
        }
    }

    #[test]
    fn lambda_zero_iff_single_nonzero_eigenvalue() {
        let k4 = NetworkSpec::build(&Graph::complete(4).unwrap(), Some(0.25)).unwrap();
        assert!(k4.lambda < 1e-12);
        let k4_off = NetworkSpec::build(&Graph::complete(4).unwrap(), Some(0.2)).unwrap();
        assert!(k4_off.lambda > 0.1);
        let ring = NetworkSpec::build(&Graph::ring(5).unwrap(), Some(0.3)).unwrap();
        assert!(ring.lambda > 0.1);
    }

    #[test]
    fn prescribed_lambda_network() {
        for lambda in [0.0, 0.2, 0.55, 0.9] {
            let net = NetworkSpec::with_lambda(lambda, 5).unwrap();
            assert_abs_diff_eq!(net.lambda, lambda, epsilon = 1e-12);
        }
        assert!(NetworkSpec::with_lambda(1.0, 5).is_err());
    }

    #[test]
    fn erdos_renyi_is_seeded_and_connected() {
        let a = Graph::erdos_renyi(10, 0.3, 42).unwrap();
        let b = Graph::erdos_renyi(10, 0.3, 42).unwrap();
        assert_eq!(a, b);
        assert!(Graph::erdos_renyi(10, 0.0, 1).is_err());
    }

    #[test]
    fn projector_identities() {
        let (j1, j2) = consensus_projectors(4, 3);
        let tol = 1e-12;
        assert!((&j1 * &j1 - &j1).amax() < tol);
        assert!((&j2 * &j2 - &j2).amax() < tol);
        assert!((&j1 * &j2).amax() < tol);
        assert!((&j2 * &j1).amax() < tol);
    }

    #[test]
    fn block_reduction_examples() {
        let id = SymMatrix::identity(2);
        let r = block_reduction_check(&id, &id, 3, 1).unwrap();
        assert!(r.q_psd && r.q1_psd && r.q2_psd && r.agrees());
        let q1 = SymMatrix::from_diagonal(&[1.0, -1.0]);
        let r = block_reduction_check(&q1, &id, 3, 1).unwrap();
        assert!(!r.q_psd && !r.q1_psd && r.agrees());
    }

    #[test]
    fn block_reduction_agrees_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut both = 0;
        for _ in 0..200 {
            let mut draw = || {
                let g = DMatrix::<f64>::from_fn(5, 5, |_, _| rng.sample(StandardNormal));
                let shift: f64 = rng.gen_range(-0.5..1.0);
                SymMatrix::symmetrized(&g * g.transpose() * 0.2 + DMatrix::identity(5, 5) * shift)
            };
            let (q1, q2) = (draw(), draw());
            let r = block_reduction_check(&q1, &q2, 4, 2).unwrap();
            assert!(r.agrees());
            both += (r.q1_psd && r.q2_psd) as usize;
        }
        assert!(both > 0);
    }
}
