//! Step distributions, convolution powers and seeded trajectory sampling.

use std::collections::HashMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::group::{GroupElement, GroupSpec, Metric};

/// Default cap on the support of any convolution product.
pub const DEFAULT_SUPPORT_CAP: usize = 5_000_000;

const MASS_TOLERANCE: f64 = 1e-12;

/// A finitely supported probability measure on a group.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDistribution {
    spec: GroupSpec,
    support: Vec<(GroupElement, f64)>,
    symmetric: bool,
}

impl StepDistribution {
    /// Validates and canonicalizes a measure. Repeated elements are merged.
    pub fn new(spec: &GroupSpec, support: Vec<(GroupElement, f64)>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::Domain("a step distribution needs a nonempty support".into()));
        }
        let mut merged: HashMap<GroupElement, f64> = HashMap::new();
        for (g, w) in support {
            spec.check(&g)?;
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::Domain(format!("weight of {g} must be positive, got {w}")));
            }
            *merged.entry(g).or_insert(0.0) += w;
        }
        let total: f64 = merged.values().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::Domain(format!("weights sum to {total}, not 1")));
        }
        Ok(Self::from_map(spec, merged))
    }

    fn from_map(spec: &GroupSpec, map: HashMap<GroupElement, f64>) -> Self {
        let mut support: Vec<(GroupElement, f64)> = map.into_iter().collect();
        support.sort_by(|a, b| a.0.cmp(&b.0));
        let lookup: HashMap<&GroupElement, f64> = support.iter().map(|(g, w)| (g, *w)).collect();
        let symmetric = support.iter().all(|(g, w)| {
            let inv = spec.invert(g).expect("same spec");
            lookup
                .get(&inv)
                .is_some_and(|v| (v - w).abs() <= 1e-12 * w.max(*v).max(1e-300))
        });
        StepDistribution {
            spec: spec.clone(),
            support,
            symmetric,
        }
    }

    /// Point mass at `g`.
    pub fn dirac(spec: &GroupSpec, g: GroupElement) -> Result<Self> {
        Self::new(spec, vec![(g, 1.0)])
    }

    /// Simple random walk: uniform on the standard symmetric generators.
    pub fn uniform_generators(spec: &GroupSpec) -> Self {
        let gens = spec.generators();
        let w = 1.0 / gens.len() as f64;
        Self::new(spec, gens.into_iter().map(|g| (g, w)).collect()).expect("generators are valid")
    }

    /// Parses `uniform-generators` or a list like `a:3/8,a-:3/8,b:1/8,b-:1/8`.
    pub fn parse(spec: &GroupSpec, s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "uniform-generators" || s == "uniform" {
            return Ok(Self::uniform_generators(spec));
        }
        let mut support = Vec::new();
        for (start, entry) in split_top_level(s) {
            let Some((word, weight)) = entry.rsplit_once(':') else {
                return Err(Error::parse(start, format!("expected word:weight, got '{entry}'")));
            };
            let weight_at = start + word.len() + 1;
            let g = spec.parse_element(word.trim()).map_err(|e| match e {
                Error::Parse { position, message } => Error::parse(start + position, message),
                other => other,
            })?;
            support.push((g, parse_weight(weight.trim(), weight_at)?));
        }
        Self::new(spec, support)
    }

    pub fn spec(&self) -> &GroupSpec {
        &self.spec
    }

    pub fn support(&self) -> &[(GroupElement, f64)] {
        &self.support
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn weight(&self, g: &GroupElement) -> f64 {
        self.support
            .binary_search_by(|(h, _)| h.cmp(g))
            .map(|i| self.support[i].1)
            .unwrap_or(0.0)
    }

    pub fn total_mass(&self) -> f64 {
        self.support.iter().map(|(_, w)| w).sum()
    }

    /// Longest word length in the support.
    pub fn max_length(&self) -> usize {
        self.support
            .iter()
            .map(|(g, _)| self.spec.word_length(g).expect("same spec") as usize)
            .max()
            .unwrap_or(0)
    }

    /// Heuristic non-elementarity: two elements of the symmetrized support
    /// fail to commute. Always true for the (non-hyperbolic) lamplighter.
    pub fn is_non_elementary(&self) -> bool {
        let mut elems: Vec<GroupElement> = Vec::new();
        for (g, _) in &self.support {
            elems.push(g.clone());
            elems.push(self.spec.invert(g).expect("same spec"));
        }
        for (i, g) in elems.iter().enumerate() {
            for h in &elems[i + 1..] {
                let gh = self.spec.multiply(g, h).expect("same spec");
                let hg = self.spec.multiply(h, g).expect("same spec");
                if gh != hg {
                    return true;
                }
            }
        }
        false
    }

    /// Rejects measures that are not symmetric and non-elementary.
    pub fn require_walkable(&self) -> Result<()> {
        if !self.symmetric {
            return Err(Error::Domain("the measure is not symmetric".into()));
        }
        if !self.is_non_elementary() {
            return Err(Error::Domain(
                "the support generates an elementary subgroup".into(),
            ));
        }
        Ok(())
    }

    /// Cumulative weights used by the samplers.
    pub fn cumulative(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut out: Vec<f64> = self
            .support
            .iter()
            .map(|(_, w)| {
                acc += w;
                acc
            })
            .collect();
        if let Some(last) = out.last_mut() {
            *last = f64::INFINITY;
        }
        out
    }

    /// Wire form used in reports: `word:weight` pairs.
    pub fn describe(&self) -> String {
        let parts: Vec<String> = self
            .support
            .iter()
            .map(|(g, w)| format!("{}:{w}", self.spec.display(g)))
            .collect();
        parts.join(",")
    }
}

/// Splits on commas outside braces, returning each piece with its byte offset.
fn split_top_level(s: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '{' => depth += 1,
            '}' => depth -= 1,
            ',' if depth == 0 => {
                out.push((start, &s[start..i]));
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push((start, &s[start..]));
    out
}

fn parse_weight(s: &str, at: usize) -> Result<f64> {
    let bad = || Error::parse(at, format!("invalid weight '{s}'"));
    if let Some((p, q)) = s.split_once('/') {
        let p: f64 = p.trim().parse().map_err(|_| bad())?;
        let q: f64 = q.trim().parse().map_err(|_| bad())?;
        if q == 0.0 {
            return Err(bad());
        }
        Ok(p / q)
    } else {
        s.parse().map_err(|_| bad())
    }
}

/// `(m1 * m2)(x) = sum_g m1(g) m2(g^-1 x)`.
pub fn convolve(m1: &StepDistribution, m2: &StepDistribution, cap: usize) -> Result<StepDistribution> {
    if m1.spec != m2.spec {
        return Err(Error::Domain(format!(
            "cannot convolve measures on {} and {}",
            m1.spec, m2.spec
        )));
    }
    let spec = &m1.spec;
    let mut map: HashMap<GroupElement, f64> = HashMap::new();
    for (g, a) in &m1.support {
        for (h, b) in &m2.support {
            let x = spec.multiply(g, h)?;
            *map.entry(x).or_insert(0.0) += a * b;
            if map.len() > cap {
                return Err(Error::Resource {
                    what: "convolution support".into(),
                    needed: m1.len().saturating_mul(m2.len()),
                    cap,
                });
            }
        }
    }
    Ok(StepDistribution::from_map(spec, map))
}

/// `mu^{*n}`, with `mu^{*0}` the point mass at the identity.
pub fn convolution_power(mu: &StepDistribution, n: usize, cap: usize) -> Result<StepDistribution> {
    let mut acc = StepDistribution::dirac(&mu.spec, mu.spec.identity())?;
    for _ in 0..n {
        acc = convolve(&acc, mu, cap)?;
    }
    Ok(acc)
}

/// `sum_g mu(g) exp(beta d(g, e))`.
pub fn exponential_moment(mu: &StepDistribution, beta: f64, metric: &dyn Metric) -> Result<f64> {
    if beta <= 0.0 {
        return Err(Error::Domain(format!("beta must be positive, got {beta}")));
    }
    let mut total = 0.0;
    for (g, w) in &mu.support {
        total += w * (beta * metric.norm(g)?).exp();
    }
    Ok(total)
}

/// The random stream of trajectory `index` under `seed`.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Draws support indices of a measure from a seeded stream.
pub struct StepSampler<'a> {
    cumulative: &'a [f64],
    rng: ChaCha8Rng,
}

impl<'a> StepSampler<'a> {
    pub fn new(cumulative: &'a [f64], seed: u64, index: u64) -> Self {
        StepSampler {
            cumulative,
            rng: stream_rng(seed, index),
        }
    }

    #[inline]
    pub fn next_index(&mut self) -> usize {
        let u = (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        self.cumulative.partition_point(|&c| c <= u)
    }
}

/// A sampled path of the walk.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub seed: u64,
    pub index: u64,
    pub steps: Vec<GroupElement>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// `Z_0 = e, Z_k = Z_{k-1} g_k`.
    pub fn partial_products<'a>(&'a self, spec: &'a GroupSpec) -> impl Iterator<Item = GroupElement> + 'a {
        let mut z = spec.identity();
        std::iter::once(z.clone()).chain(self.steps.iter().map(move |g| {
            spec.right_mul_assign(&mut z, g).expect("same spec");
            z.clone()
        }))
    }

    pub fn endpoint(&self, spec: &GroupSpec) -> GroupElement {
        let mut z = spec.identity();
        for g in &self.steps {
            spec.right_mul_assign(&mut z, g).expect("same spec");
        }
        z
    }
}

/// `n` i.i.d. steps from stream 0 of `seed`.
pub fn sample_trajectory(mu: &StepDistribution, n: usize, seed: u64) -> Trajectory {
    sample_trajectory_indexed(mu, n, seed, 0)
}

/// `n` i.i.d. steps from stream `index` of `seed`.
pub fn sample_trajectory_indexed(mu: &StepDistribution, n: usize, seed: u64, index: u64) -> Trajectory {
    let cdf = mu.cumulative();
    let mut sampler = StepSampler::new(&cdf, seed, index);
    let steps = (0..n)
        .map(|_| mu.support[sampler.next_index()].0.clone())
        .collect();
    Trajectory { seed, index, steps }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::WordMetric;

    fn f2() -> GroupSpec {
        GroupSpec::free(2).unwrap()
    }

    #[test]
    fn srw_convolution_values() {
        let spec = f2();
        let mu = StepDistribution::uniform_generators(&spec);
        let mu2 = convolve(&mu, &mu, DEFAULT_SUPPORT_CAP).unwrap();
        assert!((mu2.weight(&spec.identity()) - 0.25).abs() < 1e-15);
        assert!((mu2.weight(&spec.parse_element("a.b").unwrap()) - 1.0 / 16.0).abs() < 1e-15);
        let d = StepDistribution::dirac(&spec, spec.identity()).unwrap();
        assert_eq!(convolve(&d, &mu, 100).unwrap(), mu);
        assert_eq!(convolution_power(&mu, 1, 100).unwrap(), mu);
        assert_eq!(convolution_power(&mu, 3, 1000).unwrap().weight(&spec.identity()), 0.0);
    }

    #[test]
    fn return_probability_matches_path_count() {
        // Count closed paths of length 4 among all 4^4 generator sequences.
        let spec = f2();
        let gens = spec.generators();
        let mut closed = 0;
        for code in 0..256usize {
            let mut z = spec.identity();
            for k in 0..4 {
                spec.right_mul_assign(&mut z, &gens[(code >> (2 * k)) & 3]).unwrap();
            }
            closed += z.is_identity() as usize;
        }
        // out-back twice (4 * 4) plus out-out-back-back (4 * 3)
        assert_eq!(closed, 28);
        let mu = StepDistribution::uniform_generators(&spec);
        let p = convolution_power(&mu, 4, 1000).unwrap().weight(&spec.identity());
        assert!((p - closed as f64 / 256.0).abs() < 1e-15);
    }

    #[test]
    fn cap_is_echoed() {
        let mu = StepDistribution::uniform_generators(&f2());
        match convolution_power(&mu, 3, 10) {
            Err(Error::Resource { cap, .. }) => assert_eq!(cap, 10),
            other => panic!("expected resource error, got {other:?}"),
        }
    }

    #[test]
    fn symmetry_and_elementarity() {
        let spec = f2();
        let mu = StepDistribution::parse(&spec, "a:3/8,a-:3/8,b:1/8,b-:1/8").unwrap();
        assert!(mu.is_symmetric() && mu.is_non_elementary());
        let skew = StepDistribution::parse(&spec, "a:1/2,a-:1/4,b:1/8,b-:1/8").unwrap();
        assert!(!skew.is_symmetric());
        let line = StepDistribution::parse(&spec, "a:0.5,a-:0.5").unwrap();
        assert!(line.is_symmetric() && !line.is_non_elementary());
        assert!(line.require_walkable().is_err());
        assert!(StepDistribution::parse(&spec, "a:0.5,b:0.4").is_err());
        assert!(matches!(
            StepDistribution::parse(&spec, "a:0.5,a-:x"),
            Err(Error::Parse { position: 9, .. })
        ));
        let lamp = StepDistribution::parse(&GroupSpec::lamplighter(), "lamps{0:1,1:1}@0:1").unwrap();
        assert_eq!(lamp.len(), 1);
    }

    #[test]
    fn exponential_moments() {
        let spec = f2();
        let mu = StepDistribution::uniform_generators(&spec);
        let m = exponential_moment(&mu, 1.0, &WordMetric(&spec)).unwrap();
        assert!((m - 1f64.exp()).abs() < 1e-12);
        let d = StepDistribution::dirac(&spec, spec.identity()).unwrap();
        assert_eq!(exponential_moment(&d, 2.5, &WordMetric(&spec)).unwrap(), 1.0);
    }

    #[test]
    fn sampling_is_deterministic() {
        let spec = f2();
        let mu = StepDistribution::uniform_generators(&spec);
        let t1 = sample_trajectory(&mu, 500, 42);
        let t2 = sample_trajectory(&mu, 500, 42);
        assert_eq!(t1, t2);
        assert_ne!(t1, sample_trajectory_indexed(&mu, 500, 42, 1));
        assert_eq!(sample_trajectory(&mu, 0, 1).endpoint(&spec), spec.identity());
        let z: Vec<_> = t1.partial_products(&spec).collect();
        assert_eq!(z.len(), 501);
        assert_eq!(z[500], t1.endpoint(&spec));
    }

    #[test]
    fn sampler_frequencies() {
        let spec = f2();
        let mu = StepDistribution::parse(&spec, "a:3/8,a-:3/8,b:1/8,b-:1/8").unwrap();
        let cdf = mu.cumulative();
        let mut s = StepSampler::new(&cdf, 7, 0);
        let mut counts = vec![0usize; mu.len()];
        let n = 200_000;
        for _ in 0..n {
            counts[s.next_index()] += 1;
        }
        for (k, (_, w)) in mu.support().iter().enumerate() {
            let f = counts[k] as f64 / n as f64;
            assert!((f - w).abs() < 4.0 * (w * (1.0 - w) / n as f64).sqrt());
        }
    }
}
