//! The stationary measure on the boundary of a free group, the transfer
//! operator `P` on cylinder functions, the Poisson equation and the variance
//! formula.
//!
//! Boundary functions are discretized by cylinders: a depth-`m` function takes
//! one value per reduced word of length `m`. Cylinders are indexed with
//! [`encode_reduced`], under which the extensions of a cylinder form a
//! contiguous block.

use std::io::Write;

use rand::Rng;
use serde::Serialize;

use crate::ball::{decode_reduced, encode_reduced, reduced_count};
use crate::error::{Error, Result};
use crate::group::Letter;
use crate::tree::{RayConvergence, TreeMetric};
use crate::walk::{stream_rng, StepDistribution};

/// Largest number of cylinders any table may hold.
pub const MAX_CYLINDERS: usize = 5_000_000;

const STATIONARY_TOLERANCE: f64 = 1e-12;
const STATIONARY_MAX_ITER: usize = 100_000;

/// Letters of a symmetric free-group measure, as (letters, weight).
struct Support {
    rank: usize,
    steps: Vec<(Vec<Letter>, f64)>,
    max_len: usize,
}

impl Support {
    fn new(mu: &StepDistribution) -> Result<Self> {
        let rank = mu
            .spec()
            .rank()
            .ok_or_else(|| Error::Capability("boundary dynamics are implemented for free groups".into()))?;
        if !mu.is_symmetric() {
            return Err(Error::Domain("boundary dynamics require a symmetric measure".into()));
        }
        let steps: Vec<(Vec<Letter>, f64)> = mu
            .support()
            .iter()
            .map(|(g, w)| (g.as_free().expect("free").letters().to_vec(), *w))
            .collect();
        let max_len = steps.iter().map(|(g, _)| g.len()).max().unwrap_or(0).max(1);
        Ok(Support { rank, steps, max_len })
    }

    fn inverses(&self) -> Vec<(Vec<Letter>, f64)> {
        self.steps
            .iter()
            .map(|(g, w)| (g.iter().rev().map(|l| l.inverse()).collect(), *w))
            .collect()
    }
}

fn check_count(rank: usize, depth: usize) -> Result<usize> {
    let count = (2 * rank - 1)
        .checked_pow(depth.saturating_sub(1) as u32)
        .and_then(|p| p.checked_mul(2 * rank))
        .filter(|&c| c <= MAX_CYLINDERS)
        .ok_or_else(|| Error::Resource {
            what: format!("cylinder table of depth {depth}"),
            needed: usize::MAX,
            cap: MAX_CYLINDERS,
        })?;
    Ok(if depth == 0 { 1 } else { count })
}

/// Writes the reduced form of `g w` into `out`; `false` if `w` is used up.
fn left_act(g: &[Letter], w: &[Letter], out: &mut Vec<Letter>) -> bool {
    let k = g
        .iter()
        .rev()
        .zip(w)
        .take_while(|(a, b)| a.inverse() == **b)
        .count();
    if k == w.len() && k < g.len() {
        // Cancellation stopped only because w ran out.
        out.clear();
        return false;
    }
    out.clear();
    out.extend_from_slice(&g[..g.len() - k]);
    out.extend_from_slice(&w[k..]);
    true
}

/// `table[w * |elems| + j]` = depth-`to` index of `elems[j] . [w]`, for `w` at depth `from`.
fn action_table(rank: usize, from: usize, to: usize, elems: &[(Vec<Letter>, f64)]) -> Vec<u32> {
    let count = reduced_count(rank, from);
    let mut table = Vec::with_capacity(count * elems.len());
    let mut buf = Vec::new();
    for w in 0..count {
        let word = decode_reduced(w, from, rank);
        for (g, _) in elems {
            let ok = left_act(g, &word, &mut buf);
            debug_assert!(ok && buf.len() >= to);
            table.push(encode_reduced(&buf[..to], rank) as u32);
        }
    }
    table
}

/// Range of depth-`deep` indices extending the depth-`shallow` cylinder `i`.
fn block(rank: usize, shallow: usize, deep: usize, i: usize) -> std::ops::Range<usize> {
    if shallow == 0 {
        return 0..reduced_count(rank, deep);
    }
    let width = (2 * rank - 1).pow((deep - shallow) as u32);
    i * width..(i + 1) * width
}

/// A probability measure on depth-`m` cylinders of the boundary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationaryMeasure {
    pub rank: usize,
    pub depth: usize,
    pub probs: Vec<f64>,
    /// Total-variation change of the last fixed-point iteration.
    pub residual: f64,
    pub iterations: usize,
}

impl StationaryMeasure {
    pub fn prob(&self, letters: &[Letter]) -> f64 {
        self.probs[encode_reduced(letters, self.rank)]
    }

    /// The induced measure on shallower cylinders.
    pub fn marginal(&self, depth: usize) -> Result<StationaryMeasure> {
        if depth > self.depth {
            return Err(Error::Precision(format!(
                "cannot refine a depth-{} measure to depth {depth}",
                self.depth
            )));
        }
        let count = reduced_count(self.rank, depth);
        let probs = (0..count)
            .map(|i| self.probs[block(self.rank, depth, self.depth, i)].iter().sum())
            .collect();
        Ok(StationaryMeasure {
            rank: self.rank,
            depth,
            probs,
            residual: self.residual,
            iterations: self.iterations,
        })
    }

    pub fn total_variation(&self, other: &StationaryMeasure) -> Result<f64> {
        if self.rank != other.rank || self.depth != other.depth {
            return Err(Error::Domain("measures live on different cylinder sets".into()));
        }
        Ok(0.5 * self.probs.iter().zip(&other.probs).map(|(a, b)| (a - b).abs()).sum::<f64>())
    }

    /// Largest `|nu([w]) - sum_s nu([ws])|` over all shallower levels of `finer`.
    pub fn consistency_residual(&self, finer: &StationaryMeasure) -> Result<f64> {
        let m = finer.marginal(self.depth)?;
        Ok(self
            .probs
            .iter()
            .zip(&m.probs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "cylinder,nu")?;
        for (i, p) in self.probs.iter().enumerate() {
            writeln!(w, "{},{p:e}", cylinder_label(self.rank, self.depth, i))?;
        }
        Ok(())
    }
}

pub fn cylinder_label(rank: usize, depth: usize, i: usize) -> String {
    let parts: Vec<String> = decode_reduced(i, depth, rank).iter().map(|l| l.to_string()).collect();
    parts.join(".")
}

/// The fixed point of `nu -> mu * nu` on depth-`m` cylinders.
///
/// The iterate lives at depth `D = m + L`. Each sweep extends it to depth
/// `D + L` with the order-`L` Markov chain read off its own last letters, then
/// pushes the extension forward by one step of `mu`, which lands exactly on
/// depth `D`. For nearest-neighbour measures the stationary measure is itself
/// Markov, so the extension is exact and so is the fixed point.
pub fn solve_stationary(mu: &StepDistribution, m: usize) -> Result<StationaryMeasure> {
    if m == 0 {
        return Err(Error::Domain("cylinder depth must be at least 1".into()));
    }
    if !mu.is_non_elementary() {
        return Err(Error::Domain("the support generates an elementary subgroup".into()));
    }
    let sup = Support::new(mu)?;
    let (rank, l) = (sup.rank, sup.max_len);
    let depth = m + l;
    let ext = depth + l;
    check_count(rank, ext)?;
    let count = reduced_count(rank, depth);
    let table = action_table(rank, ext, depth, &sup.steps);
    let ns = sup.steps.len();

    // Uniform non-backtracking start.
    let mut nu = vec![1.0 / count as f64; count];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < STATIONARY_MAX_ITER {
        iterations += 1;
        let extended = markov_extend(rank, depth, ext, l, &nu);
        let mut next = vec![0.0; count];
        for (w, p) in extended.iter().enumerate() {
            if *p == 0.0 {
                continue;
            }
            for (j, (_, weight)) in sup.steps.iter().enumerate() {
                next[table[w * ns + j] as usize] += weight * p;
            }
        }
        residual = 0.5 * next.iter().zip(&nu).map(|(a, b)| (a - b).abs()).sum::<f64>();
        nu = next;
        if residual < STATIONARY_TOLERANCE {
            break;
        }
    }
    if residual >= STATIONARY_TOLERANCE {
        return Err(Error::Numeric {
            message: format!("stationary measure did not converge in {iterations} iterations"),
            residual,
        });
    }
    let deep = StationaryMeasure {
        rank,
        depth,
        probs: nu,
        residual,
        iterations,
    };
    deep.marginal(m)
}

/// Extends a depth-`from` measure to depth `to` by the order-`r` chain whose
/// transitions are the conditional laws of its own last `r + 1` letters.
fn markov_extend(rank: usize, from: usize, to: usize, r: usize, nu: &[f64]) -> Vec<f64> {
    let q = 2 * rank - 1;
    let windows = reduced_count(rank, r);
    let mut trans = vec![0.0; windows * q];
    for (w, p) in nu.iter().enumerate() {
        let word = decode_reduced(w, from, rank);
        let tail = &word[from - r - 1..];
        let win = encode_reduced(&tail[..r], rank);
        let digit = encode_reduced(&tail[r - 1..], rank) % q;
        trans[win * q + digit] += p;
    }
    for row in trans.chunks_mut(q) {
        let s: f64 = row.iter().sum();
        if s > 0.0 {
            row.iter_mut().for_each(|x| *x /= s);
        } else {
            row.iter_mut().for_each(|x| *x = 1.0 / q as f64);
        }
    }
    let mut cur = nu.to_vec();
    for depth in from..to {
        let mut next = vec![0.0; cur.len() * q];
        for (i, p) in cur.iter().enumerate() {
            let word = decode_reduced(i, depth, rank);
            let win = encode_reduced(&word[depth - r..], rank);
            for d in 0..q {
                next[i * q + d] = p * trans[win * q + d];
            }
        }
        cur = next;
    }
    cur
}

/// Frequencies of the stabilized depth-`m` prefixes of sample paths.
pub fn empirical_stationary(rays: &[RayConvergence], rank: usize, m: usize) -> Result<StationaryMeasure> {
    let count = check_count(rank, m)?;
    let mut probs = vec![0.0; count];
    let mut used = 0usize;
    for r in rays.iter().filter(|r| r.stabilized) {
        let p = r.prefix.as_ref().expect("stabilized rays have a prefix");
        if p.depth() < m {
            return Err(Error::Precision(format!("ray prefix shorter than depth {m}")));
        }
        probs[encode_reduced(&p.prefix()[..m], rank)] += 1.0;
        used += 1;
    }
    if used < 10 {
        return Err(Error::Statistical(format!("only {used} stabilized rays")));
    }
    probs.iter_mut().for_each(|p| *p /= used as f64);
    Ok(StationaryMeasure {
        rank,
        depth: m,
        probs,
        residual: 0.0,
        iterations: used,
    })
}

/// A function of the first `depth` letters of a boundary point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CylinderFunction {
    pub rank: usize,
    pub depth: usize,
    pub values: Vec<f64>,
}

impl CylinderFunction {
    pub fn constant(rank: usize, depth: usize, c: f64) -> Self {
        CylinderFunction {
            rank,
            depth,
            values: vec![c; reduced_count(rank, depth)],
        }
    }

    /// Indicator of the cylinder `[w]`, at depth `|w|`.
    pub fn indicator(rank: usize, w: &[Letter]) -> Self {
        let mut f = Self::constant(rank, w.len(), 0.0);
        f.values[encode_reduced(w, rank)] = 1.0;
        f
    }

    pub fn from_fn(rank: usize, depth: usize, f: impl Fn(&[Letter]) -> f64) -> Self {
        let values = (0..reduced_count(rank, depth))
            .map(|i| f(&decode_reduced(i, depth, rank)))
            .collect();
        CylinderFunction { rank, depth, values }
    }

    pub fn at(&self, letters: &[Letter]) -> f64 {
        self.values[encode_reduced(&letters[..self.depth], self.rank)]
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// The same function viewed at a larger depth.
    pub fn lift(&self, depth: usize) -> CylinderFunction {
        let mut values = Vec::with_capacity(reduced_count(self.rank, depth));
        let width = if self.depth == 0 {
            reduced_count(self.rank, depth)
        } else {
            (2 * self.rank - 1).pow((depth - self.depth) as u32)
        };
        for v in &self.values {
            values.extend(std::iter::repeat_n(*v, width));
        }
        CylinderFunction {
            rank: self.rank,
            depth,
            values,
        }
    }

    /// `int phi dnu`, with `nu` marginalized to this depth.
    pub fn integrate(&self, nu: &StationaryMeasure) -> Result<f64> {
        let nu = nu.marginal(self.depth)?;
        Ok(self.values.iter().zip(&nu.probs).map(|(a, b)| a * b).sum())
    }

    /// Hölder seminorm for the boundary distance `exp(-(xi, eta)_e)`.
    pub fn holder_seminorm(&self, alpha: f64) -> f64 {
        let mut best: f64 = 0.0;
        for j in 0..self.depth {
            let scale = (alpha * j as f64).exp();
            for i in 0..reduced_count(self.rank, j) {
                let vals = &self.values[block(self.rank, j, self.depth, i)];
                let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
                best = best.max((hi - lo) * scale);
            }
        }
        best
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "cylinder,value")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{},{v:e}", cylinder_label(self.rank, self.depth, i))?;
        }
        Ok(())
    }
}

/// `(P phi)(xi) = sum_g mu(g) phi(g^-1 xi)`, exact at depth `m + L`.
#[allow(non_snake_case)]
pub fn apply_P(mu: &StepDistribution, phi: &CylinderFunction) -> Result<CylinderFunction> {
    let sup = Support::new(mu)?;
    let deep = phi.depth + sup.max_len;
    check_count(sup.rank, deep)?;
    let inv = sup.inverses();
    let table = action_table(sup.rank, deep, phi.depth, &inv);
    Ok(pull(&table, &inv, phi, deep))
}

fn pull(table: &[u32], inv: &[(Vec<Letter>, f64)], phi: &CylinderFunction, deep: usize) -> CylinderFunction {
    let ns = inv.len();
    let values = table
        .chunks(ns)
        .map(|row| row.iter().zip(inv).map(|(&t, (_, w))| w * phi.values[t as usize]).sum())
        .collect();
    CylinderFunction {
        rank: phi.rank,
        depth: deep,
        values,
    }
}

/// `nu`-conditional average of `phi` over depth-`m'` cylinders.
pub fn project_depth(phi: &CylinderFunction, nu: &StationaryMeasure, target: usize) -> Result<CylinderFunction> {
    if target > phi.depth {
        return Err(Error::Precision(format!(
            "cannot project a depth-{} function to depth {target}",
            phi.depth
        )));
    }
    if target == phi.depth {
        return Ok(phi.clone());
    }
    let nu = nu.marginal(phi.depth)?;
    let count = reduced_count(phi.rank, target);
    let mut values = Vec::with_capacity(count);
    for i in 0..count {
        let b = block(phi.rank, target, phi.depth, i);
        let mass: f64 = nu.probs[b.clone()].iter().sum();
        if mass <= 0.0 {
            return Err(Error::Numeric {
                message: format!("stationary measure has no mass on cylinder {i} at depth {target}"),
                residual: mass,
            });
        }
        let s: f64 = nu.probs[b.clone()].iter().zip(&phi.values[b]).map(|(p, v)| p * v).sum();
        values.push(s / mass);
    }
    Ok(CylinderFunction {
        rank: phi.rank,
        depth: target,
        values,
    })
}

/// `P` followed by projection back to depth `m`: the operator the Neumann
/// series and the power iteration run on.
pub struct TransferOperator {
    rank: usize,
    depth: usize,
    lift: usize,
    inv: Vec<(Vec<Letter>, f64)>,
    table: Vec<u32>,
    nu: StationaryMeasure,
}

impl TransferOperator {
    /// Solves for `nu` at depth `m + L` internally.
    pub fn new(mu: &StepDistribution, m: usize) -> Result<Self> {
        let sup = Support::new(mu)?;
        let deep = m + sup.max_len;
        check_count(sup.rank, deep)?;
        let nu = solve_stationary(mu, deep)?;
        Self::with_measure(mu, m, nu)
    }

    /// `nu` must have depth at least `m + L`.
    pub fn with_measure(mu: &StepDistribution, m: usize, nu: StationaryMeasure) -> Result<Self> {
        let sup = Support::new(mu)?;
        let deep = m + sup.max_len;
        let nu = nu.marginal(deep)?;
        let inv = sup.inverses();
        let table = action_table(sup.rank, deep, m, &inv);
        Ok(TransferOperator {
            rank: sup.rank,
            depth: m,
            lift: deep,
            inv,
            table,
            nu,
        })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Stationary measure at depth `m + L`.
    pub fn measure(&self) -> &StationaryMeasure {
        &self.nu
    }

    /// Exact `P phi` at depth `m + L`.
    pub fn apply_p(&self, phi: &CylinderFunction) -> Result<CylinderFunction> {
        self.check(phi)?;
        Ok(pull(&self.table, &self.inv, phi, self.lift))
    }

    /// `T phi = project(P phi)` at depth `m`.
    pub fn apply(&self, phi: &CylinderFunction) -> Result<CylinderFunction> {
        project_depth(&self.apply_p(phi)?, &self.nu, self.depth)
    }

    pub fn mean(&self, phi: &CylinderFunction) -> Result<f64> {
        phi.integrate(&self.nu)
    }

    fn check(&self, phi: &CylinderFunction) -> Result<()> {
        if phi.depth != self.depth || phi.rank != self.rank {
            return Err(Error::Domain(format!(
                "operator acts on depth-{} functions, got depth {}",
                self.depth, phi.depth
            )));
        }
        Ok(())
    }
}

/// `h_xi(g)` for a prefix of `xi` at least as long as `g`.
fn busemann(g: &[Letter], xi: &[Letter], metric: &TreeMetric) -> f64 {
    let k = g.iter().zip(xi).take_while(|(a, b)| a == b).count();
    metric.length(g) - 2.0 * metric.length(&g[..k])
}

/// `psi(xi) = sum_g mu(g) h_xi(g) - A`.
pub fn psi(mu: &StepDistribution, a: f64, m: usize, metric: &TreeMetric) -> Result<CylinderFunction> {
    let sup = Support::new(mu)?;
    if m < sup.max_len {
        return Err(Error::Precision(format!(
            "depth {m} is below the support length {}",
            sup.max_len
        )));
    }
    check_count(sup.rank, m)?;
    Ok(CylinderFunction::from_fn(sup.rank, m, |xi| {
        sup.steps.iter().map(|(g, w)| w * busemann(g, xi, metric)).sum::<f64>() - a
    }))
}

/// `A = sum_xi nu(xi) sum_g mu(g) h_xi(g)`.
pub fn drift_formula(mu: &StepDistribution, nu: &StationaryMeasure, metric: &TreeMetric) -> Result<f64> {
    let sup = Support::new(mu)?;
    if nu.depth < sup.max_len {
        return Err(Error::Precision("stationary measure is shallower than the support".into()));
    }
    let f = psi(mu, 0.0, nu.depth, metric)?;
    f.integrate(nu)
}

/// Solution of the Poisson equation and its convergence record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoissonSolution {
    pub u: CylinderFunction,
    pub iterations: usize,
    /// `sup |T^n psi|` for each term of the Neumann series.
    pub norms: Vec<f64>,
    pub tau_hat: f64,
    /// `sup |(I - T) u - psi|` at the solved depth.
    pub residual: f64,
    /// `sup |u - P u - psi|` at depth `m + L`, without projection.
    pub lifted_residual: f64,
    pub mean_u: f64,
}

/// `u = sum_n T^n psi`, stopped once `|T^n psi| < tol (1 - tau)`.
pub fn solve_poisson(op: &TransferOperator, psi: &CylinderFunction, tol: f64) -> Result<PoissonSolution> {
    let mean = op.mean(psi)?;
    if mean.abs() > 10.0 * tol.max(1e-12) {
        return Err(Error::Domain(format!("psi has mean {mean:e}, not zero")));
    }
    let mut term = psi.clone();
    let mut u = psi.clone();
    let mut norms = vec![term.sup_norm()];
    let mut tau: f64 = 0.0;
    let mut iterations = 0;
    const MAX_ITER: usize = 10_000;
    while norms[iterations] > 0.0 {
        // Terms this far below tolerance are rounding noise with no usable decay rate.
        if norms[iterations] < 1e-3 * tol {
            break;
        }
        if iterations >= 8 {
            tau = decay_rate(&norms);
            if tau >= 1.0 {
                return Err(Error::Spectral { tau });
            }
            if norms[iterations] < tol * (1.0 - tau) {
                break;
            }
        }
        if iterations >= MAX_ITER {
            return Err(Error::Numeric {
                message: "Neumann series did not converge".into(),
                residual: norms[iterations],
            });
        }
        term = op.apply(&term)?;
        u.values.iter_mut().zip(&term.values).for_each(|(a, b)| *a += b);
        iterations += 1;
        norms.push(term.sup_norm());
    }
    let tu = op.apply(&u)?;
    let residual = u
        .values
        .iter()
        .zip(&tu.values)
        .zip(&psi.values)
        .map(|((u, t), p)| (u - t - p).abs())
        .fold(0.0, f64::max);
    let pu = op.apply_p(&u)?;
    let lu = u.lift(pu.depth);
    let lp = psi.lift(pu.depth);
    let lifted_residual = lu
        .values
        .iter()
        .zip(&pu.values)
        .zip(&lp.values)
        .map(|((u, t), p)| (u - t - p).abs())
        .fold(0.0, f64::max);
    let mean_u = op.mean(&u)?;
    Ok(PoissonSolution {
        u,
        iterations,
        norms,
        tau_hat: tau,
        residual,
        lifted_residual,
        mean_u,
    })
}

/// Geometric mean of successive norm ratios over the last half of a series.
fn decay_rate(norms: &[f64]) -> f64 {
    let n = norms.len();
    let start = n / 2;
    let (mut s, mut k) = (0.0, 0);
    for i in start.max(1)..n {
        if norms[i - 1] > 0.0 && norms[i] > 0.0 {
            s += (norms[i] / norms[i - 1]).ln();
            k += 1;
        }
    }
    if k == 0 {
        0.0
    } else {
        (s / k as f64).exp()
    }
}

/// Power-iteration record for the decay of `T` on mean-zero functions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralEstimate {
    pub depth: usize,
    pub tau_hat: f64,
    pub norms: Vec<f64>,
}

/// Power iteration of `T` on mean-zero functions from a seeded start vector.
pub fn spectral_radius_estimate(op: &TransferOperator, iterations: usize, seed: u64) -> Result<SpectralEstimate> {
    if op.depth < 1 {
        return Err(Error::Domain("depth 0 carries only constants".into()));
    }
    let mut rng = stream_rng(seed, 0);
    let count = reduced_count(op.rank, op.depth);
    let mut phi = CylinderFunction {
        rank: op.rank,
        depth: op.depth,
        values: (0..count).map(|_| rng.random::<f64>() - 0.5).collect(),
    };
    power_iterate(op, &mut phi, iterations)
}

/// Runs `phi <- T phi - mean` and records the sup norms of the unnormalized iterates.
pub fn power_iterate(op: &TransferOperator, phi: &mut CylinderFunction, iterations: usize) -> Result<SpectralEstimate> {
    center(op, phi)?;
    let mut running = phi.sup_norm();
    let mut norms = vec![running];
    let mut scale = running;
    for _ in 0..iterations {
        if scale == 0.0 {
            break;
        }
        // Keep the iterate at unit size; only the ratios matter.
        phi.values.iter_mut().for_each(|v| *v /= scale);
        *phi = op.apply(phi)?;
        center(op, phi)?;
        scale = phi.sup_norm();
        running *= scale;
        norms.push(running);
    }
    Ok(SpectralEstimate {
        depth: op.depth,
        tau_hat: decay_rate(&norms),
        norms,
    })
}

fn center(op: &TransferOperator, phi: &mut CylinderFunction) -> Result<()> {
    let m = op.mean(phi)?;
    phi.values.iter_mut().for_each(|v| *v -= m);
    Ok(())
}

/// `sup` over boundary pairs of `sum_g mu^{*n}(g) exp(alpha ((xi,eta) - (g^-1 xi, g^-1 eta)))`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Proximality {
    pub n: usize,
    pub alpha: f64,
    pub value: f64,
    pub worst_pair: usize,
}

pub fn proximality_integral(
    mu_n: &StepDistribution,
    n: usize,
    alpha: f64,
    pairs: &[(crate::tree::BoundaryPoint, crate::tree::BoundaryPoint)],
    metric: &TreeMetric,
) -> Result<Proximality> {
    if pairs.is_empty() {
        return Err(Error::Domain("no boundary pairs supplied".into()));
    }
    let mut value = f64::NEG_INFINITY;
    let mut worst_pair = 0;
    for (k, (xi, eta)) in pairs.iter().enumerate() {
        if xi == eta {
            return Err(Error::Domain("boundary pairs must be distinct".into()));
        }
        let mut s = 0.0;
        for (g, w) in mu_n.support() {
            let c = crate::tree::gromov_busemann_cocycle(g, xi, eta, metric)?;
            s += w * (alpha * c.rhs).exp();
        }
        if s > value {
            value = s;
            worst_pair = k;
        }
    }
    Ok(Proximality {
        n,
        alpha,
        value,
        worst_pair,
    })
}

/// `sigma^2 = sum_xi nu(xi) sum_g mu(g) (h_xi(g) - A + u(g^-1 xi) - u(xi))^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Variance {
    pub sigma2: f64,
    pub degenerate: bool,
}

pub fn sigma_squared_formula(
    mu: &StepDistribution,
    nu: &StationaryMeasure,
    u: &CylinderFunction,
    a: f64,
    metric: &TreeMetric,
) -> Result<Variance> {
    let sup = Support::new(mu)?;
    let deep = u.depth.max(sup.max_len) + sup.max_len;
    let nu = nu.marginal(deep)?;
    let u_deep = u.lift(u.depth.max(sup.max_len));
    let inv = sup.inverses();
    let table = action_table(sup.rank, deep, u_deep.depth, &inv);
    let ns = inv.len();
    let mut total = 0.0;
    for (w, p) in nu.probs.iter().enumerate() {
        if *p == 0.0 {
            continue;
        }
        let xi = decode_reduced(w, deep, sup.rank);
        let here = u_deep.at(&xi);
        let mut s = 0.0;
        for (j, (g, weight)) in sup.steps.iter().enumerate() {
            let x = busemann(g, &xi, metric) - a + u_deep.values[table[w * ns + j] as usize] - here;
            s += weight * x * x;
        }
        total += p * s;
    }
    Ok(Variance {
        sigma2: total,
        degenerate: total < 1e-6,
    })
}
