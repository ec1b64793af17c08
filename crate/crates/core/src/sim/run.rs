//! Centralized and distributed mirror descent.

use alloc::vec;
use alloc::vec::Vec;

use super::dgf::MirrorMap;
use super::objective::ObjectiveOracle;
use super::trajectory::{FixedPoint, IterState, Topology, TrajectoryRecord, MAX_RETAINED_DIM, MAX_RETAINED_ITERATES};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::network::NetworkSpec;
use crate::{Error, Result, SymMatrix};

/// Agreement tolerance between the per-agent and stacked recursions.
pub const CONSISTENCY_TOL: f64 = 1e-10;

/// Gaussian initial point with standard deviation `scale`.
pub fn seeded_start(len: usize, scale: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn dot_diff(a: &[f64], a0: &[f64], b: &[f64], b0: &[f64]) -> f64 {
    a.iter()
        .zip(a0)
        .zip(b.iter().zip(b0))
        .map(|((x, x0), (y, y0))| (x - x0) * (y - y0))
        .sum()
}

fn amax(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn finite(v: &[f64], iteration: usize) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { iteration })
    }
}

/// Stationary point of the centralized (`net = None`) or distributed algorithm.
pub fn fixed_point<M: MirrorMap + ?Sized>(dgf: &M, obj: &ObjectiveOracle, net: Option<&NetworkSpec>) -> Result<FixedPoint> {
    let n = obj.n();
    if let Some(net) = net {
        if net.n != n {
            return Err(Error::DimensionMismatch { expected: net.n, found: n });
        }
    }
    if let Some(k) = dgf.coord_dim() {
        // Every agent must use the same map, or z★ is not consensual.
        if k != obj.dim() {
            return Err(Error::DimensionMismatch { expected: obj.dim(), found: k });
        }
    }
    let x_min = obj.minimizer()?;
    let f_star = obj.value(&x_min);
    let x_star: Vec<f64> = (0..n).flat_map(|_| x_min.iter().copied()).collect();
    let z_star = dgf.grad(&x_star);
    Ok(match net {
        None => FixedPoint {
            u_star: obj.grad(&x_min),
            x_min,
            x_star,
            z_star,
            y_star: Vec::new(),
            v_star: Vec::new(),
            f_star,
        },
        Some(_) => {
            let u_star: Vec<f64> = (0..n).flat_map(|i| obj.local_grad(i, &x_min)).collect();
            FixedPoint {
                y_star: u_star.iter().map(|v| -v).collect(),
                v_star: vec![0.0; n * x_min.len()],
                u_star,
                x_min,
                x_star,
                z_star,
                f_star,
            }
        }
    })
}

fn retain(iters: usize, dim: usize) -> bool {
    iters <= MAX_RETAINED_ITERATES && dim <= MAX_RETAINED_DIM
}

/// Runs `z⁺ = z - η ∇f(x)`, `x = ∇φ*(z)` from `z⁰ = ∇φ(x⁰)` and records
/// iterates `k = 0, ..., iters - 1`.
pub fn run_centralized<M: MirrorMap + ?Sized>(
    dgf: &M,
    obj: &ObjectiveOracle,
    eta: f64,
    x0: &[f64],
    iters: usize,
) -> Result<TrajectoryRecord> {
    if obj.n() != 1 {
        return Err(Error::param("obj", "centralized runs need a single objective"));
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::param("eta", "must be positive and finite"));
    }
    let d = obj.dim();
    if x0.len() != d {
        return Err(Error::DimensionMismatch { expected: d, found: x0.len() });
    }
    let fp = fixed_point(dgf, obj, None)?;
    let keep = retain(iters, d);
    let mut rec = empty_record(Topology::Centralized, 1, d, eta, dgf, obj, fp, SymMatrix::identity(1), true, iters, keep);

    let mut z = dgf.grad(x0);
    let mut xsum = vec![0.0; d];
    for k in 0..iters {
        finite(&z, k)?;
        let x = dgf.conj_grad(&z)?;
        let u = obj.grad(&x);
        finite(&u, k)?;
        let fp = &rec.fixed_point;
        rec.bregman.push(dgf.bregman(&fp.x_star, &x));
        rec.dist_sq.push(sq_dist(&x, &fp.x_star));
        rec.pnorm_sq.push(sq_dist(&z, &fp.z_star));
        rec.fgap.push(obj.value(&x) - fp.f_star);
        if k >= 1 {
            xsum.iter_mut().zip(&x).for_each(|(s, v)| *s += v);
            let avg: Vec<f64> = xsum.iter().map(|s| s / k as f64).collect();
            rec.ergodic_gap.push(obj.value(&avg) - fp.f_star);
        }
        let next: Vec<f64> = z.iter().zip(&u).map(|(zi, ui)| zi - eta * ui).collect();
        if let Some(states) = rec.states.as_mut() {
            states.push(IterState {
                z,
                y: Vec::new(),
                x,
                u,
                v: Vec::new(),
            });
        }
        z = next;
    }
    Ok(rec)
}

#[allow(clippy::too_many_arguments)]
fn empty_record<M: MirrorMap + ?Sized>(
    topology: Topology,
    n: usize,
    d: usize,
    eta: f64,
    dgf: &M,
    obj: &ObjectiveOracle,
    fixed_point: FixedPoint,
    p: SymMatrix,
    p_is_default: bool,
    iters: usize,
    keep: bool,
) -> TrajectoryRecord {
    TrajectoryRecord {
        topology,
        n,
        d,
        eta,
        eta2: None,
        lambda: None,
        f_bounds: obj.bounds(),
        phi_bounds: dgf.bounds(),
        p,
        p_is_default,
        fixed_point,
        bregman: Vec::with_capacity(iters),
        dist_sq: Vec::with_capacity(iters),
        pnorm_sq: Vec::with_capacity(iters),
        fgap: Vec::with_capacity(iters),
        ergodic_gap: Vec::with_capacity(iters),
        states: keep.then(|| Vec::with_capacity(iters)),
    }
}

/// `(J2 Z, ΔW Z)` for an agent-major stacked `Z`.
fn mix(net: &NetworkSpec, z: &[f64], d: usize) -> (Vec<f64>, Vec<f64>) {
    let n = net.n;
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for c in 0..d {
            mean[c] += z[i * d + c];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let j2z: Vec<f64> = (0..n).flat_map(|_| mean.iter().copied()).collect();
    let mut v = vec![0.0; n * d];
    for i in 0..n {
        for j in 0..n {
            let w = net.delta_w.get(i, j);
            if w != 0.0 {
                for c in 0..d {
                    v[i * d + c] += w * z[j * d + c];
                }
            }
        }
    }
    (j2z, v)
}

fn column_sums_small(v: &[f64], n: usize, d: usize) -> f64 {
    (0..d)
        .map(|c| (0..n).map(|i| v[i * d + c]).sum::<f64>().abs())
        .fold(0.0, f64::max)
}

/// Runs the distributed recursion per agent,
///
/// `z_i⁺ = z_i - η₁(∇f_i(x_i) + y_i) - η₂(𝓛z)_i`, `y_i⁺ = y_i + η₂(𝓛z)_i`,
///
/// from `z⁰ = ∇φ(x⁰)`, `y⁰ = 0`, and cross-checks every step against the
/// stacked form `z⁺ = J2 z - η₁(u + y) + v`, `y⁺ = y + J1 z - v`, `v = ΔW z`.
/// `x0` is agent-major of length `n * d`. `p` weights the `ξ = (z, y)` norm.
pub fn run_distributed<M: MirrorMap + ?Sized>(
    dgf: &M,
    obj: &ObjectiveOracle,
    net: &NetworkSpec,
    eta1: f64,
    x0: &[f64],
    iters: usize,
    p: Option<&SymMatrix>,
) -> Result<TrajectoryRecord> {
    let (n, d) = (obj.n(), obj.dim());
    if net.n != n {
        return Err(Error::DimensionMismatch { expected: net.n, found: n });
    }
    if !(eta1 >= 0.0 && eta1.is_finite()) {
        return Err(Error::param("eta1", "must be finite and nonnegative"));
    }
    if x0.len() != n * d {
        return Err(Error::DimensionMismatch { expected: n * d, found: x0.len() });
    }
    let (pm, p_default) = match p {
        Some(p) if p.dim() == 2 => (p.clone(), false),
        Some(p) => return Err(Error::DimensionMismatch { expected: 2, found: p.dim() }),
        None => (SymMatrix::identity(2), true),
    };
    let fp = fixed_point(dgf, obj, Some(net))?;
    let keep = retain(iters, n * d);
    let mut rec = empty_record(Topology::Distributed, n, d, eta1, dgf, obj, fp, pm, p_default, iters, keep);
    rec.eta2 = Some(net.eta2);
    rec.lambda = Some(net.lambda);
    let (p11, p12, p22) = (rec.p.get(0, 0), rec.p.get(0, 1), rec.p.get(1, 1));

    let mut z = dgf.grad(x0);
    let mut y = vec![0.0; n * d];
    let mut xsum = vec![0.0; n * d];
    for k in 0..iters {
        finite(&z, k)?;
        finite(&y, k)?;
        let x = dgf.conj_grad(&z)?;
        let mut u = Vec::with_capacity(n * d);
        for i in 0..n {
            u.extend(obj.local_grad(i, &x[i * d..(i + 1) * d]));
        }
        finite(&u, k)?;

        let fp = &rec.fixed_point;
        rec.bregman.push(dgf.bregman(&fp.x_star, &x));
        rec.dist_sq.push(sq_dist(&x, &fp.x_star));
        rec.pnorm_sq.push(
            p11 * sq_dist(&z, &fp.z_star)
                + 2.0 * p12 * dot_diff(&z, &fp.z_star, &y, &fp.y_star)
                + p22 * sq_dist(&y, &fp.y_star),
        );
        let gap: f64 = (0..n).map(|i| obj.value(&x[i * d..(i + 1) * d]) - fp.f_star).sum();
        rec.fgap.push(gap);
        xsum.iter_mut().zip(&x).for_each(|(s, v)| *s += v);
        let kk = (k + 1) as f64;
        let erg: f64 = (0..n)
            .map(|i| {
                let avg: Vec<f64> = xsum[i * d..(i + 1) * d].iter().map(|s| s / kk).collect();
                obj.value(&avg) - fp.f_star
            })
            .sum();
        rec.ergodic_gap.push(erg);

        // Per-agent recursion.
        let mut z_next = vec![0.0; n * d];
        let mut y_next = vec![0.0; n * d];
        for i in 0..n {
            for c in 0..d {
                let mut lz = 0.0;
                for j in 0..n {
                    let l = net.laplacian.get(i, j);
                    if l != 0.0 {
                        lz += l * z[j * d + c];
                    }
                }
                let a = i * d + c;
                z_next[a] = z[a] - eta1 * (u[a] + y[a]) - net.eta2 * lz;
                y_next[a] = y[a] + net.eta2 * lz;
            }
        }

        // Stacked recursion.
        let (j2z, v) = mix(net, &z, d);
        let scale = 1.0 + amax(&z).max(amax(&y)).max(amax(&u));
        let mut worst: f64 = 0.0;
        for a in 0..n * d {
            let zs = j2z[a] - eta1 * (u[a] + y[a]) + v[a];
            let ys = y[a] + (z[a] - j2z[a]) - v[a];
            worst = worst.max((zs - z_next[a]).abs()).max((ys - y_next[a]).abs());
        }
        if worst > CONSISTENCY_TOL * scale {
            return Err(Error::Inconsistent { iteration: k, gap: worst });
        }
        let cons = column_sums_small(&y, n, d).max(column_sums_small(&v, n, d));
        if cons > CONSISTENCY_TOL * scale {
            return Err(Error::Inconsistent { iteration: k, gap: cons });
        }

        if let Some(states) = rec.states.as_mut() {
            states.push(IterState { z, y, x, u, v });
        }
        z = z_next;
        y = y_next;
    }
    Ok(rec)
}
