//! Truncated Green kernels, the Green metric, first-passage probabilities,
//! Martin kernels and the Hilbert metric on the cone they span.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::ball::IndexedBall;
use crate::error::{Error, Result};
use crate::group::{GroupElement, GroupSpec, Metric};
use crate::walk::{StepDistribution, DEFAULT_SUPPORT_CAP};

const OUTSIDE: u32 = u32::MAX;
const CHUNK: usize = 1 << 16;

/// Deterministic parallel sum: fixed chunks, serial combination.
pub(crate) fn stable_sum(v: &[f64]) -> f64 {
    v.par_chunks(CHUNK)
        .map(|c| c.iter().sum::<f64>())
        .collect::<Vec<f64>>()
        .iter()
        .sum()
}

/// One step of the walk restricted to a ball, in pull form:
/// `next(y) = sum_g mu(g) prev(y g^-1)`.
struct BallChain {
    ball: IndexedBall,
    pulls: Vec<(Vec<u32>, f64)>,
    step_length: usize,
}

impl BallChain {
    fn new(mu: &StepDistribution, ball: IndexedBall) -> Result<Self> {
        let spec = mu.spec();
        if ball.len() >= OUTSIDE as usize {
            return Err(Error::Resource {
                what: "ball index".into(),
                needed: ball.len(),
                cap: OUTSIDE as usize - 1,
            });
        }
        let mut pulls = Vec::with_capacity(mu.len());
        for (g, w) in mu.support() {
            let inv = spec.invert(g)?;
            let table: Vec<u32> = (0..ball.len())
                .into_par_iter()
                .map(|y| ball.step(y, &inv).map_or(OUTSIDE, |t| t as u32))
                .collect();
            pulls.push((table, *w));
        }
        Ok(BallChain {
            ball,
            pulls,
            step_length: mu.max_length().max(1),
        })
    }

    /// Elements reachable in `n` steps lie within this prefix of the ball.
    fn active(&self, n: usize) -> usize {
        self.ball.prefix_len(n.saturating_mul(self.step_length))
    }

    fn pull(&self, prev: &[f64], next: &mut [f64], active: usize) {
        next[..active].par_iter_mut().enumerate().for_each(|(y, out)| {
            let mut acc = 0.0;
            for (table, w) in &self.pulls {
                let t = table[y];
                if t != OUTSIDE {
                    acc += w * prev[t as usize];
                }
            }
            *out = acc;
        });
    }
}

/// Truncation and leakage diagnostics of a [`GreenTable`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GreenDiagnostics {
    pub truncation: usize,
    pub radius: usize,
    pub work_radius: usize,
    /// Estimated spectral radius of the walk.
    pub rho_hat: Option<f64>,
    /// Bound on the omitted terms `n > N`.
    pub tail_bound: f64,
    pub leaked_mass: f64,
    /// Bound on the loss from paths that left the working ball.
    pub leak_bound: f64,
    pub error_bound: f64,
    /// `mu^{*2m}(e)` for every `2m` computed exactly.
    pub return_probabilities: Vec<f64>,
}

/// `G_N(e, x)` for `x` in a ball of radius `R`.
#[derive(Debug, Clone)]
pub struct GreenTable {
    spec: GroupSpec,
    mu: StepDistribution,
    ball: IndexedBall,
    values: Vec<f64>,
    leaked_per_step: Vec<f64>,
    diagnostics: GreenDiagnostics,
}

/// Options for [`green_kernel`].
#[derive(Debug, Clone, Copy)]
pub struct GreenOptions {
    /// Fail with an accuracy error if the error bound exceeds this.
    pub tolerance: Option<f64>,
    pub cap: usize,
}

impl Default for GreenOptions {
    fn default() -> Self {
        GreenOptions {
            tolerance: None,
            cap: DEFAULT_SUPPORT_CAP,
        }
    }
}

/// `G_N(e, x) = sum_{n <= N} mu^{*n}(x)` on `ball(R)`, computed by ball-restricted
/// convolution on the largest ball within the support cap.
pub fn green_kernel(mu: &StepDistribution, n: usize, r: usize, opts: GreenOptions) -> Result<GreenTable> {
    if !mu.is_symmetric() {
        return Err(Error::Domain("the Green kernel pipeline requires a symmetric measure".into()));
    }
    let spec = mu.spec();
    let length = mu.max_length().max(1);
    let wanted = r.saturating_add(n.saturating_mul(length));
    let ball = IndexedBall::build_capped(spec, r, wanted, opts.cap)?;
    let work_radius = ball.radius();
    let chain = BallChain::new(mu, ball)?;
    let size = chain.ball.len();

    let mut prev = vec![0.0; size];
    let mut next = vec![0.0; size];
    let mut green = vec![0.0; size];
    prev[0] = 1.0;
    green[0] = 1.0;
    let mut mass = 1.0;
    let mut leaked_per_step = Vec::with_capacity(n);
    let mut returns = Vec::new();
    // mu^{*k}(e) is exact while no path of length k can leave the ball and come back.
    let exact_limit = 2 * (work_radius + 1) / length;
    for k in 1..=n {
        let active = chain.active(k);
        chain.pull(&prev, &mut next, active);
        let new_mass = stable_sum(&next[..active]);
        leaked_per_step.push((mass - new_mass).max(0.0));
        mass = new_mass;
        green[..active]
            .par_iter_mut()
            .zip(&next[..active])
            .for_each(|(g, p)| *g += p);
        if k % 2 == 0 && k < exact_limit {
            returns.push(next[0]);
        }
        std::mem::swap(&mut prev, &mut next);
    }

    let rho_hat = estimate_rho(&returns, spec.is_hyperbolic());
    let tail_bound = match rho_hat {
        Some(rho) if rho < 1.0 => rho.powi(n as i32 + 1) / (1.0 - rho),
        _ => f64::INFINITY,
    };
    let leaked_mass: f64 = leaked_per_step.iter().sum();
    let leak_bound = if leaked_mass == 0.0 {
        0.0
    } else {
        // Leaked mass re-enters ball(R) only after crossing this many levels.
        let gap = work_radius + 1 - r;
        let lo = chain.ball.prefix_len(gap.saturating_sub(1));
        let hi = chain.ball.prefix_len(gap);
        let far = if gap > work_radius || lo == hi {
            green[0]
        } else {
            green[lo..hi].iter().cloned().fold(0.0, f64::max)
        };
        leaked_mass * far
    };
    let error_bound = tail_bound + leak_bound;
    if let Some(tol) = opts.tolerance {
        if !(error_bound <= tol) {
            return Err(Error::Accuracy {
                bound: error_bound,
                tolerance: tol,
            });
        }
    }

    let keep = chain.ball.prefix_len(r);
    green.truncate(keep);
    let BallChain { ball, .. } = chain;
    let ball = shrink(ball, r);
    Ok(GreenTable {
        spec: spec.clone(),
        mu: mu.clone(),
        ball,
        values: green,
        leaked_per_step,
        diagnostics: GreenDiagnostics {
            truncation: n,
            radius: r,
            work_radius,
            rho_hat,
            tail_bound,
            leaked_mass,
            leak_bound,
            error_bound,
            return_probabilities: returns,
        },
    })
}

fn shrink(ball: IndexedBall, r: usize) -> IndexedBall {
    match ball {
        IndexedBall::Tree(t) if t.radius() > r => {
            IndexedBall::Tree(crate::ball::TreeBall::new(t.rank(), r))
        }
        IndexedBall::Hashed {
            spec,
            radius,
            mut offsets,
            mut elements,
            mut index,
        } if radius > r => {
            offsets.truncate(r + 2);
            let keep = offsets[r + 1];
            for g in elements.drain(keep..) {
                index.remove(&g);
            }
            IndexedBall::Hashed {
                spec,
                radius: r,
                offsets,
                elements,
                index,
            }
        }
        other => other,
    }
}

/// Spectral radius from successive return-probability ratios. On hyperbolic
/// groups `mu^{*2m}(e) ~ C m^{-3/2} rho^{2m}`, and the polynomial factor is divided out.
fn estimate_rho(returns: &[f64], hyperbolic: bool) -> Option<f64> {
    let m = returns.len();
    if m < 2 || returns[m - 2] <= 0.0 {
        return None;
    }
    let mut ratio = returns[m - 1] / returns[m - 2];
    if hyperbolic {
        let mm = m as f64;
        ratio /= ((mm - 1.0) / mm).powf(1.5);
    }
    Some(ratio.sqrt().min(1.0))
}

impl GreenTable {
    pub fn spec(&self) -> &GroupSpec {
        &self.spec
    }

    pub fn measure(&self) -> &StepDistribution {
        &self.mu
    }

    pub fn radius(&self) -> usize {
        self.diagnostics.radius
    }

    pub fn truncation(&self) -> usize {
        self.diagnostics.truncation
    }

    pub fn diagnostics(&self) -> &GreenDiagnostics {
        &self.diagnostics
    }

    pub fn leaked_per_step(&self) -> &[f64] {
        &self.leaked_per_step
    }

    pub fn ball(&self) -> &IndexedBall {
        &self.ball
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Values in ball index order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn index_of(&self, x: &GroupElement) -> Result<usize> {
        self.ball.index_of(x).ok_or_else(|| {
            Error::Range(format!(
                "{} is outside the table ball of radius {}",
                self.spec.display(x),
                self.radius()
            ))
        })
    }

    /// `G_N(e, x)`.
    pub fn value(&self, x: &GroupElement) -> Result<f64> {
        Ok(self.values[self.index_of(x)?])
    }

    /// `G_N(x, y) = G_N(e, x^-1 y)`.
    pub fn kernel(&self, x: &GroupElement, y: &GroupElement) -> Result<f64> {
        self.value(&self.spec.multiply(&self.spec.invert(x)?, y)?)
    }

    pub fn element(&self, i: usize) -> GroupElement {
        self.ball.element(i)
    }

    /// Writes `element,value` rows.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "element,green")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{},{v:e}", self.spec.display(&self.element(i)))?;
        }
        Ok(())
    }
}

/// `d_G(x, y) = log G_N(e, e) - log G_N(e, x^-1 y)`.
pub fn green_metric(table: &GreenTable, x: &GroupElement, y: &GroupElement) -> Result<f64> {
    Ok(table.values[0].ln() - table.kernel(x, y)?.ln())
}

/// The Green metric of a table as a [`Metric`].
#[derive(Debug, Clone, Copy)]
pub struct GreenMetric<'a>(pub &'a GreenTable);

impl Metric for GreenMetric<'_> {
    fn distance(&self, x: &GroupElement, y: &GroupElement) -> Result<f64> {
        green_metric(self.0, x, y)
    }

    fn norm(&self, x: &GroupElement) -> Result<f64> {
        Ok(self.0.values[0].ln() - self.0.value(x)?.ln())
    }
}

/// `F_N(x, y)`: probability that the walk from `x` visits `y` within `N` steps.
pub fn first_passage(
    mu: &StepDistribution,
    x: &GroupElement,
    y: &GroupElement,
    n: usize,
    cap: usize,
) -> Result<f64> {
    let spec = mu.spec();
    let z = spec.multiply(&spec.invert(x)?, y)?;
    if z.is_identity() {
        return Ok(1.0);
    }
    let dz = spec.word_length(&z)? as usize;
    let length = mu.max_length().max(1);
    let ball = IndexedBall::build_capped(spec, dz, dz + n * length, cap)?;
    let target = ball.index_of(&z).expect("target inside ball");
    let chain = BallChain::new(mu, ball)?;
    let size = chain.ball.len();
    let mut prev = vec![0.0; size];
    let mut next = vec![0.0; size];
    prev[0] = 1.0;
    let mut hit = 0.0;
    for k in 1..=n {
        let active = chain.active(k);
        chain.pull(&prev, &mut next, active);
        if target < active {
            hit += next[target];
            next[target] = 0.0;
        }
        std::mem::swap(&mut prev, &mut next);
    }
    Ok(hit)
}

/// Fitted constants of `d_S / C - b <= d_G <= C d_S + b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuasiIsometryFit {
    pub c: f64,
    pub b: f64,
    pub pairs: usize,
}

/// Fits `(C, b)` over all pairs whose difference lies in `ball(r)`.
///
/// `C` is the extreme distortion on the outer half of the ball, where the
/// additive constant is negligible; `b` is then the smallest offset making the
/// inequality hold everywhere.
pub fn quasi_isometry_constants(table: &GreenTable, r: usize) -> Result<QuasiIsometryFit> {
    if r > table.radius() {
        return Err(Error::Range(format!(
            "radius {r} exceeds the table radius {}",
            table.radius()
        )));
    }
    let count = table.ball.prefix_len(r);
    let g0 = table.values[0].ln();
    let pts: Vec<(f64, f64)> = (1..count)
        .map(|i| {
            let ds = table.spec.word_length(&table.element(i)).expect("same spec") as f64;
            (ds, g0 - table.values[i].ln())
        })
        .collect();
    if pts.is_empty() {
        return Ok(QuasiIsometryFit { c: 1.0, b: 0.0, pairs: 0 });
    }
    let max_d = pts.iter().map(|p| p.0).fold(0.0, f64::max);
    let outer = (max_d / 2.0).ceil();
    let mut c: f64 = 1.0;
    for &(ds, dg) in pts.iter().filter(|p| p.0 >= outer) {
        if dg > 0.0 {
            c = c.max(dg / ds).max(ds / dg);
        } else {
            c = f64::INFINITY;
        }
    }
    let b = pts
        .iter()
        .map(|&(ds, dg)| (dg - c * ds).max(ds / c - dg).max(0.0))
        .fold(0.0, f64::max);
    Ok(QuasiIsometryFit { c, b, pairs: count })
}

/// `K_y(z) = G(z, y) / G(e, y)` for `z` in a ball.
#[derive(Debug, Clone)]
pub struct MartinKernelView<'a> {
    table: &'a GreenTable,
    pole: GroupElement,
    radius: usize,
    values: Vec<f64>,
}

impl<'a> MartinKernelView<'a> {
    /// Requires `|y| + radius <= table radius`.
    pub fn new(table: &'a GreenTable, y: &GroupElement, radius: usize) -> Result<Self> {
        let spec = &table.spec;
        let gy = table.value(y)?;
        let count = table.ball.prefix_len(radius);
        if radius > table.radius() {
            return Err(Error::Range(format!("view radius {radius} exceeds the table")));
        }
        let mut values = Vec::with_capacity(count);
        for i in 0..count {
            let z = table.element(i);
            values.push(table.kernel(&z, y).map_err(|_| {
                Error::Range(format!(
                    "pole {} is too far out for a view of radius {radius}",
                    spec.display(y)
                ))
            })? / gy);
        }
        Ok(MartinKernelView {
            table,
            pole: y.clone(),
            radius,
            values,
        })
    }

    pub fn pole(&self) -> &GroupElement {
        &self.pole
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    /// Values in ball index order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, z: &GroupElement) -> Result<f64> {
        let i = self.table.index_of(z)?;
        self.values
            .get(i)
            .copied()
            .ok_or_else(|| Error::Range("point outside the view ball".into()))
    }
}

/// The Hilbert distance between two kernels and where its extremes sit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HilbertDistance {
    pub distance: f64,
    /// `inf_z K_y(z) / K_x(z)`.
    pub alpha: f64,
    /// `sup_z K_y(z) / K_x(z)`.
    pub beta: f64,
    pub argmin: String,
    pub argmax: String,
}

/// `1/2 log(beta / alpha)` with the order evaluated pointwise over the common ball.
pub fn hilbert_metric(view_x: &MartinKernelView, view_y: &MartinKernelView) -> Result<HilbertDistance> {
    if !std::ptr::eq(view_x.table, view_y.table) {
        return Err(Error::Domain("views are over different tables".into()));
    }
    let count = view_x.values.len().min(view_y.values.len());
    if count == 0 {
        return Err(Error::Domain("empty ball".into()));
    }
    let (alpha, beta, lo, hi) = ratio_extremes(&view_x.values[..count], &view_y.values[..count]);
    let spec = &view_x.table.spec;
    Ok(HilbertDistance {
        distance: half_log_ratio(alpha, beta),
        alpha,
        beta,
        argmin: spec.display(&view_x.table.element(lo)),
        argmax: spec.display(&view_x.table.element(hi)),
    })
}

fn ratio_extremes(kx: &[f64], ky: &[f64]) -> (f64, f64, usize, usize) {
    let mut alpha = f64::INFINITY;
    let mut beta = 0.0;
    let (mut lo, mut hi) = (0, 0);
    for (i, (&a, &b)) in kx.iter().zip(ky).enumerate() {
        let r = if a > 0.0 { b / a } else if b > 0.0 { f64::INFINITY } else { 1.0 };
        if r < alpha {
            alpha = r;
            lo = i;
        }
        if r > beta {
            beta = r;
            hi = i;
        }
    }
    (alpha, beta, lo, hi)
}

fn half_log_ratio(alpha: f64, beta: f64) -> f64 {
    if alpha <= 0.0 || !beta.is_finite() {
        f64::INFINITY
    } else {
        0.5 * (beta / alpha).ln()
    }
}

/// Result of comparing the Hilbert metric on Martin kernels with the Green metric.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HilbertReport {
    pub radius: usize,
    pub pole_radius: usize,
    pub truncation: usize,
    pub pairs: usize,
    pub max_deviation: f64,
    pub worst_x: String,
    pub worst_y: String,
    pub worst_hilbert: f64,
    pub worst_green: f64,
    pub argmin: String,
    pub argmax: String,
    pub table: GreenDiagnostics,
}

/// Max over poles `x, y` in `ball(R - 2)` of `|rho(K_x, K_y) - d_G(x, y)|`,
/// with the cone order evaluated on `ball(R)`.
pub fn verify_hilbert_green(mu: &StepDistribution, r: usize, n: usize, cap: usize) -> Result<HilbertReport> {
    if r < 2 {
        return Err(Error::Domain("Hilbert verification needs R >= 2".into()));
    }
    let pole_radius = r - 2;
    let table = green_kernel(mu, n, pole_radius + r, GreenOptions { tolerance: None, cap })?;
    let spec = &table.spec;
    let poles = table.ball.prefix_len(pole_radius);
    let views: Vec<MartinKernelView> = (0..poles)
        .into_par_iter()
        .map(|i| MartinKernelView::new(&table, &table.element(i), r))
        .collect::<Result<_>>()?;
    let g0 = table.values[0].ln();
    let rows: Vec<(f64, usize, f64, f64, usize, usize)> = (0..poles)
        .into_par_iter()
        .map(|i| {
            let x = table.element(i);
            let xinv = spec.invert(&x).expect("same spec");
            let mut worst = (0.0, i, 0.0, 0.0, 0, 0);
            for j in 0..poles {
                let (alpha, beta, lo, hi) = ratio_extremes(&views[i].values, &views[j].values);
                let h = half_log_ratio(alpha, beta);
                let z = spec.multiply(&xinv, &table.element(j)).expect("same spec");
                let d = g0 - table.value(&z).expect("difference inside table").ln();
                let dev = (h - d).abs();
                if dev > worst.0 || (j == 0 && i == 0) {
                    worst = (dev, j, h, d, lo, hi);
                }
            }
            worst
        })
        .collect();
    let (wi, best) = rows
        .iter()
        .enumerate()
        .fold((0, rows[0]), |acc, (i, r)| if r.0 > acc.1 .0 { (i, *r) } else { acc });
    Ok(HilbertReport {
        radius: r,
        pole_radius,
        truncation: n,
        pairs: poles * poles,
        max_deviation: best.0,
        worst_x: spec.display(&table.element(wi)),
        worst_y: spec.display(&table.element(best.1)),
        worst_hilbert: best.2,
        worst_green: best.3,
        argmin: spec.display(&table.element(best.4)),
        argmax: spec.display(&table.element(best.5)),
        table: table.diagnostics.clone(),
    })
}
