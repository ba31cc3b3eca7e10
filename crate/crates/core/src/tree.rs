//! Hyperbolic geometry of free-group Cayley trees: boundary points as finite
//! prefixes of infinite reduced words, Gromov products, horofunctions, the
//! boundary action and convergence of sample paths to the boundary.

use std::fmt;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::group::{FreeWord, GroupElement, GroupSpec, Letter, Metric};
use crate::walk::{stream_rng, StepDistribution, Trajectory};

/// A boundary point known through a reduced prefix of explicit depth.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BoundaryPoint {
    prefix: Vec<Letter>,
}

impl BoundaryPoint {
    pub fn new(prefix: Vec<Letter>) -> Result<Self> {
        if prefix.is_empty() {
            return Err(Error::Domain("a boundary point needs a nonempty prefix".into()));
        }
        if prefix.windows(2).any(|w| w[1] == w[0].inverse()) {
            return Err(Error::Domain("boundary prefix is not reduced".into()));
        }
        Ok(BoundaryPoint { prefix })
    }

    /// `head` followed by `cycle` repeated, cut at `depth` letters.
    pub fn ray(head: &[Letter], cycle: &[Letter], depth: usize) -> Result<Self> {
        if cycle.is_empty() {
            return Err(Error::Domain("empty cycle".into()));
        }
        let letters = head.iter().chain(cycle.iter().cycle()).take(depth).copied().collect();
        Self::new(letters)
    }

    /// Parses `a.b.a-` style tokens.
    pub fn parse(spec: &GroupSpec, s: &str) -> Result<Self> {
        let g = spec.parse_element(s)?;
        let w = g
            .as_free()
            .ok_or_else(|| Error::Capability("boundary points need a free group".into()))?;
        if w.len() != s.split('.').map(|t| token_len(t)).sum::<usize>() {
            return Err(Error::Domain(format!("boundary prefix '{s}' is not reduced")));
        }
        Self::new(w.letters().to_vec())
    }

    pub fn depth(&self) -> usize {
        self.prefix.len()
    }

    pub fn prefix(&self) -> &[Letter] {
        &self.prefix
    }

    /// The cylinder representative cut to `m` letters.
    pub fn truncate(&self, m: usize) -> Result<Self> {
        if m > self.depth() {
            return Err(Error::Precision(format!(
                "cannot refine a depth-{} prefix to depth {m}",
                self.depth()
            )));
        }
        Self::new(self.prefix[..m].to_vec())
    }
}

fn token_len(t: &str) -> usize {
    match t.split_once('^') {
        Some((_, p)) => p.trim_start_matches('-').parse().unwrap_or(1),
        None => usize::from(t != "e" && !t.is_empty()),
    }
}

impl fmt::Display for BoundaryPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.prefix.iter().map(|l| l.to_string()).collect();
        write!(f, "{}", parts.join("."))
    }
}

impl Serialize for BoundaryPoint {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// A path metric on the Cayley tree with a length per generator.
///
/// Unit weights give the word metric. For a nearest-neighbour measure the
/// Green metric is the tree metric with weights `-log F(e, s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeMetric {
    weights: Vec<f64>,
}

impl TreeMetric {
    pub fn word(rank: usize) -> Self {
        TreeMetric {
            weights: vec![1.0; 2 * rank],
        }
    }

    /// Weights indexed by letter code; must be positive and inversion invariant.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.len() < 4 || weights.len() % 2 != 0 {
            return Err(Error::Domain("one weight per letter is required".into()));
        }
        for (c, w) in weights.iter().enumerate() {
            if !(*w > 0.0 && w.is_finite()) || (weights[c ^ 1] - w).abs() > 1e-12 {
                return Err(Error::Domain(format!("invalid weight {w} for letter code {c}")));
            }
        }
        Ok(TreeMetric { weights })
    }

    /// The Green metric of a symmetric nearest-neighbour measure.
    pub fn green(mu: &StepDistribution) -> Result<Self> {
        let f = nearest_neighbour_first_passage(mu)?;
        Self::new(f.iter().map(|p| -p.ln()).collect())
    }

    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::new(self.weights.iter().map(|w| w * s).collect())
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn letter(&self, l: Letter) -> f64 {
        self.weights[l.code()]
    }

    pub fn length(&self, letters: &[Letter]) -> f64 {
        letters.iter().map(|&l| self.letter(l)).sum()
    }

    /// `(x, y)_e`: the length of the common prefix.
    pub fn product_at_identity(&self, x: &[Letter], y: &[Letter]) -> f64 {
        let k = x.iter().zip(y).take_while(|(a, b)| a == b).count();
        self.length(&x[..k])
    }

    fn free<'a>(&self, g: &'a GroupElement) -> Result<&'a FreeWord> {
        g.as_free()
            .ok_or_else(|| Error::Domain("tree metrics act on free-group elements".into()))
    }
}

impl Metric for TreeMetric {
    fn distance(&self, x: &GroupElement, y: &GroupElement) -> Result<f64> {
        let (x, y) = (self.free(x)?.letters(), self.free(y)?.letters());
        let k = x.iter().zip(y).take_while(|(a, b)| a == b).count();
        Ok(self.length(&x[k..]) + self.length(&y[k..]))
    }

    fn norm(&self, x: &GroupElement) -> Result<f64> {
        Ok(self.length(self.free(x)?.letters()))
    }
}

/// `F(e, s)` for each letter `s` of a symmetric measure supported on the
/// generators, from the fixed point `F_s = mu(s) + F_s sum_{t != s} mu(t) F_{t^-1}`.
pub fn nearest_neighbour_first_passage(mu: &StepDistribution) -> Result<Vec<f64>> {
    let rank = mu
        .spec()
        .rank()
        .ok_or_else(|| Error::Capability("first-passage fixed point needs a free group".into()))?;
    let mut m = vec![0.0; 2 * rank];
    for (g, w) in mu.support() {
        match g.as_free().map(|w| w.letters()) {
            Some([l]) => m[l.code()] = *w,
            _ => {
                return Err(Error::Capability(
                    "the tree Green metric needs a nearest-neighbour measure".into(),
                ))
            }
        }
    }
    let mut f = vec![0.0; 2 * rank];
    for _ in 0..100_000 {
        let mut next = vec![0.0; 2 * rank];
        let mut delta: f64 = 0.0;
        for s in 0..2 * rank {
            let back: f64 = (0..2 * rank).filter(|&t| t != s).map(|t| m[t] * f[t ^ 1]).sum();
            next[s] = m[s] / (1.0 - back);
            delta = delta.max((next[s] - f[s]).abs());
        }
        f = next;
        if delta < 1e-16 {
            break;
        }
    }
    if f.iter().any(|&p| p <= 0.0) {
        return Err(Error::Domain("some generator has zero weight".into()));
    }
    Ok(f)
}

/// `((d(x,z) + d(y,z) - d(x,y)) / 2`.
pub fn gromov_product(metric: &dyn Metric, x: &GroupElement, y: &GroupElement, z: &GroupElement) -> Result<f64> {
    let dxz = metric.distance(x, z)?;
    let dyz = metric.distance(y, z)?;
    let dxy = metric.distance(x, y)?;
    Ok((dxz + dyz - dxy) / 2.0)
}

/// How [`estimate_delta`] visits 4-tuples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeltaMode {
    Exhaustive,
    Sampled { tuples: usize, seed: u64 },
}

/// `max min{(x,z)_w, (z,y)_w} - (x,y)_w` over 4-tuples, clamped at 0.
pub fn estimate_delta(metric: &dyn Metric, points: &[GroupElement], mode: DeltaMode) -> Result<f64> {
    let n = points.len();
    if n < 4 {
        return Err(Error::Domain("delta estimation needs at least 4 points".into()));
    }
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v = metric.distance(&points[i], &points[j])?;
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    let d = &d;
    let gp = move |x: usize, y: usize, w: usize| (d[x * n + w] + d[y * n + w] - d[x * n + y]) / 2.0;
    let quad = move |x: usize, y: usize, z: usize, w: usize| gp(x, z, w).min(gp(z, y, w)) - gp(x, y, w);
    let worst = match mode {
        DeltaMode::Exhaustive => (0..n)
            .into_par_iter()
            .map(|w| {
                let mut best = 0.0f64;
                for x in 0..n {
                    for y in 0..n {
                        for z in 0..n {
                            best = best.max(quad(x, y, z, w));
                        }
                    }
                }
                best
            })
            .reduce(|| 0.0, f64::max),
        DeltaMode::Sampled { tuples, seed } => {
            let mut rng = stream_rng(seed, 0);
            let mut best = 0.0f64;
            for _ in 0..tuples {
                let (x, y, z, w) = (
                    rng.random_range(0..n),
                    rng.random_range(0..n),
                    rng.random_range(0..n),
                    rng.random_range(0..n),
                );
                best = best.max(quad(x, y, z, w));
            }
            best
        }
    };
    Ok(worst.max(0.0))
}

/// Number of leading letters of `x` that agree with `xi`, failing when the
/// prefix of `xi` runs out before the comparison is decided.
fn decided_prefix(x: &[Letter], xi: &BoundaryPoint) -> Result<usize> {
    let k = x.iter().zip(&xi.prefix).take_while(|(a, b)| a == b).count();
    if k == xi.depth() && x.len() > k {
        return Err(Error::Precision(format!(
            "a depth-{} prefix cannot decide the position of a word of length {}",
            xi.depth(),
            x.len()
        )));
    }
    Ok(k)
}

/// `h_xi(x) = d(x, e) - 2 (x, xi)_e`.
pub fn horofunction_eval(xi: &BoundaryPoint, x: &GroupElement, metric: &TreeMetric) -> Result<f64> {
    let x = metric.free(x)?.letters();
    let k = decided_prefix(x, xi)?;
    Ok(metric.length(x) - 2.0 * metric.length(&x[..k]))
}

/// `g . xi` together with the normalizing shift `h_xi(g^-1)`, so that
/// `(g.h_xi)(x) = h_xi(g^-1 x) - h_xi(g^-1) = h_{g xi}(x)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryAction {
    pub point: BoundaryPoint,
    pub cocycle: f64,
}

pub fn boundary_action(g: &GroupElement, xi: &BoundaryPoint, metric: &TreeMetric) -> Result<BoundaryAction> {
    let g = metric.free(g)?.letters();
    let ginv: Vec<Letter> = g.iter().rev().map(|l| l.inverse()).collect();
    // Letters of g cancelled against the head of xi.
    let k = ginv.iter().zip(&xi.prefix).take_while(|(a, b)| a == b).count();
    if k >= xi.depth() {
        return Err(Error::Precision(format!(
            "acting by a word of length {} consumes the whole depth-{} prefix",
            g.len(),
            xi.depth()
        )));
    }
    let mut letters = g[..g.len() - k].to_vec();
    letters.extend_from_slice(&xi.prefix[k..]);
    let cocycle = metric.length(&ginv) - 2.0 * metric.length(&ginv[..k]);
    Ok(BoundaryAction {
        point: BoundaryPoint::new(letters)?,
        cocycle,
    })
}

/// Outcome of following `Z_n` towards the boundary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RayConvergence {
    pub depth: usize,
    pub steps: usize,
    /// The length-`depth` prefix of `Z_n` at the end, if `|Z_n| >= depth`.
    pub prefix: Option<BoundaryPoint>,
    /// Step after which the prefix never changed.
    pub stabilization_time: Option<usize>,
    /// The prefix was constant over at least the second half of the trajectory.
    pub stabilized: bool,
}

/// Streams steps of a free-group walk and records when the length-`m`
/// prefix of `Z_n` was last disturbed.
#[derive(Debug, Clone)]
pub struct RayTracker {
    depth: usize,
    word: FreeWord,
    steps: usize,
    last_change: usize,
}

impl RayTracker {
    pub fn new(depth: usize) -> Self {
        RayTracker {
            depth,
            word: FreeWord::identity(),
            steps: 0,
            last_change: 0,
        }
    }

    #[inline]
    pub fn step(&mut self, g: &FreeWord) {
        let low = self.word.right_mul_assign(g);
        self.steps += 1;
        if low < self.depth {
            self.last_change = self.steps;
        }
    }

    pub fn word(&self) -> &FreeWord {
        &self.word
    }

    pub fn finish(&self) -> RayConvergence {
        let formed = self.word.len() >= self.depth;
        let prefix = formed.then(|| BoundaryPoint {
            prefix: self.word.prefix(self.depth).to_vec(),
        });
        let time = formed.then_some(self.last_change);
        RayConvergence {
            depth: self.depth,
            steps: self.steps,
            stabilized: formed && 2 * self.last_change <= self.steps,
            prefix,
            stabilization_time: time,
        }
    }
}

pub fn ray_convergence(trajectory: &Trajectory, m: usize) -> Result<RayConvergence> {
    if m == 0 {
        return Err(Error::Domain("ray depth must be at least 1".into()));
    }
    let mut tracker = RayTracker::new(m);
    for g in &trajectory.steps {
        let w = g
            .as_free()
            .ok_or_else(|| Error::Capability("ray convergence needs a free group".into()))?;
        tracker.step(w);
    }
    Ok(tracker.finish())
}

/// `d(Z_n, e) - h_xi(Z_n)` along a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BusemannTrace {
    pub values: Vec<f64>,
    pub max: f64,
}

pub fn busemann_vs_distance(
    spec: &GroupSpec,
    trajectory: &Trajectory,
    xi: &BoundaryPoint,
    metric: &TreeMetric,
) -> Result<BusemannTrace> {
    let mut values = Vec::with_capacity(trajectory.len() + 1);
    for z in trajectory.partial_products(spec) {
        let d = metric.norm(&z)?;
        values.push(d - horofunction_eval(xi, &z, metric)?);
    }
    let max = values.iter().cloned().fold(0.0, f64::max);
    Ok(BusemannTrace { values, max })
}

/// Both sides of `(xi, eta)_e - (g^-1 xi, g^-1 eta)_e = -1/2 (h_xi(g) + h_eta(g))`,
/// with the alternative constant `2 (h_xi(g) + h_eta(g))` for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CocycleIdentity {
    pub lhs: f64,
    pub rhs: f64,
    pub alternative_rhs: f64,
}

pub fn gromov_busemann_cocycle(
    g: &GroupElement,
    xi: &BoundaryPoint,
    eta: &BoundaryPoint,
    metric: &TreeMetric,
) -> Result<CocycleIdentity> {
    let before = boundary_product(xi, eta, metric)?;
    let ginv = GroupElement::Free(metric.free(g)?.inverse());
    let gxi = boundary_action(&ginv, xi, metric)?.point;
    let geta = boundary_action(&ginv, eta, metric)?.point;
    let after = boundary_product(&gxi, &geta, metric)?;
    let hsum = horofunction_eval(xi, g, metric)? + horofunction_eval(eta, g, metric)?;
    Ok(CocycleIdentity {
        lhs: before - after,
        rhs: -0.5 * hsum,
        alternative_rhs: 2.0 * hsum,
    })
}

/// `(xi, eta)_e` for distinct boundary points.
pub fn boundary_product(xi: &BoundaryPoint, eta: &BoundaryPoint, metric: &TreeMetric) -> Result<f64> {
    let k = xi.prefix.iter().zip(&eta.prefix).take_while(|(a, b)| a == b).count();
    if k == xi.depth().min(eta.depth()) {
        return Err(Error::Precision(
            "prefixes agree to full depth; the points cannot be separated".into(),
        ));
    }
    Ok(metric.length(&xi.prefix[..k]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f2() -> GroupSpec {
        GroupSpec::free(2).unwrap()
    }

    fn el(s: &str) -> GroupElement {
        f2().parse_element(s).unwrap()
    }

    const A: Letter = Letter(0);
    const B: Letter = Letter(2);

    #[test]
    fn gromov_products() {
        let m = TreeMetric::word(2);
        let e = el("e");
        assert_eq!(gromov_product(&m, &el("a"), &el("a.a"), &e).unwrap(), 1.0);
        assert_eq!(gromov_product(&m, &el("a"), &el("b"), &e).unwrap(), 0.0);
        assert_eq!(gromov_product(&m, &el("a.b"), &el("a.b-"), &e).unwrap(), 1.0);
    }

    #[test]
    fn horofunction_examples() {
        let m = TreeMetric::word(2);
        let a_inf = BoundaryPoint::ray(&[], &[A], 6).unwrap();
        let ab_inf = BoundaryPoint::ray(&[A], &[B], 6).unwrap();
        assert_eq!(horofunction_eval(&a_inf, &el("a"), &m).unwrap(), -1.0);
        assert_eq!(horofunction_eval(&a_inf, &el("b"), &m).unwrap(), 1.0);
        assert_eq!(horofunction_eval(&ab_inf, &el("a.a"), &m).unwrap(), 0.0);
        assert_eq!(horofunction_eval(&a_inf, &el("e"), &m).unwrap(), 0.0);
        let short = BoundaryPoint::ray(&[], &[A], 2).unwrap();
        assert!(matches!(
            horofunction_eval(&short, &el("a^3"), &m),
            Err(Error::Precision(_))
        ));
    }

    #[test]
    fn boundary_action_examples() {
        let m = TreeMetric::word(2);
        let a_inf = BoundaryPoint::ray(&[], &[A], 6).unwrap();
        let ab_inf = BoundaryPoint::ray(&[A], &[B], 6).unwrap();
        let act = boundary_action(&el("a"), &a_inf, &m).unwrap();
        assert_eq!(act.point, BoundaryPoint::ray(&[], &[A], 7).unwrap());
        let act = boundary_action(&el("a-"), &ab_inf, &m).unwrap();
        assert_eq!(act.point, BoundaryPoint::ray(&[], &[B], 5).unwrap());
        let act = boundary_action(&el("b"), &a_inf, &m).unwrap();
        assert_eq!(act.point.to_string(), "b.a.a.a.a.a.a");
        assert!(matches!(
            boundary_action(&el("a^-6"), &a_inf, &m),
            Err(Error::Precision(_))
        ));
    }

    #[test]
    fn cocycle_identity_examples() {
        let m = TreeMetric::word(2);
        let xi = BoundaryPoint::ray(&[], &[A], 8).unwrap();
        let eta = BoundaryPoint::ray(&[A], &[B], 8).unwrap();
        let c = gromov_busemann_cocycle(&el("a"), &xi, &eta, &m).unwrap();
        assert_eq!((c.lhs, c.rhs, c.alternative_rhs), (1.0, 1.0, -4.0));
        let c = gromov_busemann_cocycle(&el("e"), &xi, &eta, &m).unwrap();
        assert_eq!((c.lhs, c.rhs), (0.0, 0.0));
        let c = gromov_busemann_cocycle(&el("b"), &xi, &eta, &m).unwrap();
        assert_eq!(c.lhs, c.rhs);
    }

    #[test]
    fn green_tree_weights_for_srw() {
        let mu = StepDistribution::uniform_generators(&f2());
        let f = nearest_neighbour_first_passage(&mu).unwrap();
        assert!(f.iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-14));
        let mu = StepDistribution::parse(&f2(), "a:3/8,a-:3/8,b:1/8,b-:1/8").unwrap();
        let f = nearest_neighbour_first_passage(&mu).unwrap();
        let w = [3.0 / 8.0, 3.0 / 8.0, 1.0 / 8.0, 1.0 / 8.0];
        for s in 0..4 {
            let back: f64 = (0..4).filter(|&t| t != s).map(|t| w[t] * f[t ^ 1]).sum();
            assert!((f[s] - w[s] - f[s] * back).abs() < 1e-14);
        }
        let long = StepDistribution::parse(&f2(), "a.b:1/2,b-.a-:1/2").unwrap();
        assert!(matches!(nearest_neighbour_first_passage(&long), Err(Error::Capability(_))));
    }

    #[test]
    fn deterministic_ray() {
        let spec = f2();
        let ab = el("a.b");
        let t = Trajectory {
            seed: 0,
            index: 0,
            steps: vec![ab; 10],
        };
        let r = ray_convergence(&t, 4).unwrap();
        assert!(r.stabilized);
        assert_eq!(r.prefix.unwrap().to_string(), "a.b.a.b");
        assert_eq!(r.stabilization_time, Some(2));
        let e = Trajectory { seed: 0, index: 0, steps: vec![spec.identity(); 5] };
        assert!(!ray_convergence(&e, 2).unwrap().stabilized);
    }

    #[test]
    fn parse_and_display_prefix() {
        let p = BoundaryPoint::parse(&f2(), "a.b.a-").unwrap();
        assert_eq!(p.to_string(), "a.b.a-");
        assert!(BoundaryPoint::parse(&f2(), "a.a-").is_err());
        assert_eq!(serde_json::to_string(&p).unwrap(), "\"a.b.a-\"");
    }
}
