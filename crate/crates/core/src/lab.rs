use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::CylinderFunction;
use crate::error::{Error, Result};
use crate::group::{FreeWord, GroupElement, GroupSpec};
use crate::stats::{linear_fit, mean, standard_error, variance};
use crate::tree::{boundary_action, horofunction_eval, BoundaryPoint, TreeMetric};
use crate::walk::{StepDistribution, StepSampler};

/// z-value of the reported two-sided 95% confidence intervals.
pub const Z95: f64 = 1.959963984540054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    #[default]
    Word,
    Green,
}

impl MetricKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "word" => Ok(MetricKind::Word),
            "green" => Ok(MetricKind::Green),
            other => Err(Error::parse(0, format!("unknown metric '{other}' (expected word|green)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Word => "word",
            MetricKind::Green => "green",
        }
    }
}

/// A walk together with the metric used to measure `d(Z_n, e)`.
///
/// Free groups carry an explicit tree metric (word or Green); other groups
/// use their word length.
#[derive(Debug, Clone)]
pub struct LabWalk {
    mu: StepDistribution,
    cdf: Vec<f64>,
    tree: Option<TreeMetric>,
    kind: MetricKind,
}

impl LabWalk {
    pub fn new(mu: &StepDistribution, kind: MetricKind) -> Result<Self> {
        let tree = match (mu.spec().is_free(), kind) {
            (true, MetricKind::Word) => Some(TreeMetric::word(mu.spec().rank().expect("free group"))),
            (true, MetricKind::Green) => Some(TreeMetric::green(mu)?),
            (false, MetricKind::Word) => None,
            (false, MetricKind::Green) => {
                return Err(Error::Capability(
                    "lab experiments use the Green metric on free groups only".into(),
                ))
            }
        };
        Ok(LabWalk {
            mu: mu.clone(),
            cdf: mu.cumulative(),
            tree,
            kind,
        })
    }

    pub fn measure(&self) -> &StepDistribution {
        &self.mu
    }

    pub fn spec(&self) -> &GroupSpec {
        self.mu.spec()
    }

    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    pub fn tree_metric(&self) -> Option<&TreeMetric> {
        self.tree.as_ref()
    }

    fn walker(&self) -> Walker<'_> {
        match &self.tree {
            Some(metric) => Walker::Tree {
                word: FreeWord::identity(),
                length: 0.0,
                metric,
            },
            None => Walker::General {
                spec: self.mu.spec(),
                z: self.mu.spec().identity(),
            },
        }
    }

    /// Runs trajectory `index` for `n` steps, calling `visit(k, walker)` after step `k`.
    fn run(&self, n: usize, seed: u64, index: u64, mut visit: impl FnMut(usize, &Walker<'_>)) {
        let mut sampler = StepSampler::new(&self.cdf, seed, index);
        let mut w = self.walker();
        visit(0, &w);
        for k in 1..=n {
            w.step(&self.mu.support()[sampler.next_index()].0);
            visit(k, &w);
        }
    }

    /// `d(Z_k, e)` at the requested (increasing) checkpoints.
    fn distances_at(&self, checkpoints: &[usize], seed: u64, index: u64) -> Vec<f64> {
        let n = checkpoints.last().copied().unwrap_or(0);
        let mut out = Vec::with_capacity(checkpoints.len());
        let mut next = 0;
        self.run(n, seed, index, |k, w| {
            while next < checkpoints.len() && checkpoints[next] == k {
                out.push(w.distance());
                next += 1;
            }
        });
        out
    }
}

enum Walker<'a> {
    Tree {
        word: FreeWord,
        length: f64,
        metric: &'a TreeMetric,
    },
    General {
        spec: &'a GroupSpec,
        z: GroupElement,
    },
}

impl Walker<'_> {
    #[inline]
    fn step(&mut self, g: &GroupElement) {
        match self {
            Walker::Tree { word, length, metric } => {
                let g = g.as_free().expect("tree walker on a free group");
                for &l in g.letters() {
                    if word.push(l) {
                        *length -= metric.letter(l);
                    } else {
                        *length += metric.letter(l);
                    }
                }
            }
            Walker::General { spec, z } => spec.right_mul_assign(z, g).expect("same spec"),
        }
    }

    fn distance(&self) -> f64 {
        match self {
            Walker::Tree { word, length, .. } => {
                if word.is_empty() {
                    0.0
                } else {
                    *length
                }
            }
            Walker::General { spec, z } => spec.word_length(z).expect("same spec") as f64,
        }
    }

    fn free_word(&self) -> Option<&FreeWord> {
        match self {
            Walker::Tree { word, .. } => Some(word),
            Walker::General { .. } => None,
        }
    }
}

fn dyadic_checkpoints(n: usize) -> Vec<usize> {
    let mut cps: Vec<usize> = std::iter::successors(Some(1usize), |k| k.checked_mul(2))
        .take_while(|&k| k <= n)
        .collect();
    if cps.last() != Some(&n) {
        cps.push(n);
    }
    cps
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubadditivePoint {
    pub k: usize,
    pub mean: f64,
    pub std_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftEstimate {
    pub metric: MetricKind,
    pub n: usize,
    pub trajectories: usize,
    pub seed: u64,
    pub mean: f64,
    pub std_err: f64,
    /// Half-width of the 95% normal interval.
    pub ci: f64,
    /// `E[d(Z_k, e)] / k` at `k = 1, 2, 4, ..., n`.
    pub subadditive: Vec<SubadditivePoint>,
    /// No increase along the dyadic sequence beyond two combined standard errors.
    pub subadditive_monotone: bool,
    /// Slope of `log E d(Z_k)` against `log k` over `k >= n/64`.
    pub loglog_slope: f64,
    /// The slope is below 0.9: growth looks sublinear.
    pub sublinear: bool,
}

pub fn estimate_drift(walk: &LabWalk, n: usize, trajectories: usize, seed: u64) -> Result<DriftEstimate> {
    if n < 100 {
        return Err(Error::Domain(format!("drift estimation needs n >= 100, got {n}")));
    }
    if trajectories < 2 {
        return Err(Error::Domain("drift estimation needs at least two trajectories".into()));
    }
    let cps = dyadic_checkpoints(n);
    let rows: Vec<Vec<f64>> = (0..trajectories as u64)
        .into_par_iter()
        .map(|i| walk.distances_at(&cps, seed, i))
        .collect();
    let column = |j: usize| -> Vec<f64> { rows.iter().map(|r| r[j] / cps[j] as f64).collect() };
    let subadditive: Vec<SubadditivePoint> = (0..cps.len())
        .map(|j| {
            let c = column(j);
            SubadditivePoint {
                k: cps[j],
                mean: mean(&c),
                std_err: standard_error(&c),
            }
        })
        .collect();
    let subadditive_monotone = subadditive
        .windows(2)
        .all(|p| p[1].mean <= p[0].mean + 2.0 * (p[0].std_err + p[1].std_err) + 1e-12);
    let last = subadditive.last().expect("n >= 1");
    let tail: Vec<(f64, f64)> = subadditive
        .iter()
        .filter(|p| p.k * 64 >= n && p.mean > 0.0)
        .map(|p| ((p.k as f64).ln(), (p.mean * p.k as f64).ln()))
        .collect();
    let loglog_slope = linear_fit(&tail).map(|f| f.0).unwrap_or(f64::NAN);
    Ok(DriftEstimate {
        metric: walk.kind(),
        n,
        trajectories,
        seed,
        mean: last.mean,
        std_err: last.std_err,
        ci: Z95 * last.std_err,
        subadditive_monotone,
        sublinear: loglog_slope < 0.9,
        loglog_slope,
        subadditive,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CltSamples {
    pub n: usize,
    pub drift: f64,
    pub seed: u64,
    pub samples: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
}

/// `(d(Z_n, e) - n A) / sqrt(n)`, one sample per trajectory.
pub fn clt_samples(walk: &LabWalk, n: usize, trajectories: usize, seed: u64, drift: f64) -> Result<CltSamples> {
    if trajectories == 0 {
        return Err(Error::Domain("at least one trajectory is required".into()));
    }
    let samples: Vec<f64> = if n == 0 {
        vec![0.0; trajectories]
    } else {
        let norm = (n as f64).sqrt();
        (0..trajectories as u64)
            .into_par_iter()
            .map(|i| (walk.distances_at(&[n], seed, i)[0] - n as f64 * drift) / norm)
            .collect()
    };
    Ok(CltSamples {
        n,
        drift,
        seed,
        mean: mean(&samples),
        variance: variance(&samples),
        samples,
    })
}

pub const LIL_START: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LilPoint {
    pub n: usize,
    /// `(d(Z_n, e) - n A) / sqrt(n log log n)`.
    pub statistic: f64,
    /// `(d(Z_n, e) - n A) / sqrt(2 n log log n)`.
    pub statistic_sqrt2: f64,
    pub running_max: f64,
    pub running_max_sqrt2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LilTrace {
    pub seed: u64,
    pub sigma: f64,
    pub drift: f64,
    pub points: Vec<LilPoint>,
    /// `|statistic_sqrt2(n_max)| > 5 sigma`: the centring is wrong.
    pub diverging: bool,
}

fn lil_checkpoints(n_max: usize) -> Vec<usize> {
    let mut cps = Vec::new();
    let per_decade = 20.0;
    let mut j = 0;
    loop {
        let n = (LIL_START as f64 * 10f64.powf(j as f64 / per_decade)).round() as usize;
        if n >= n_max {
            break;
        }
        if cps.last() != Some(&n) {
            cps.push(n);
        }
        j += 1;
    }
    cps.push(n_max);
    cps
}

/// The LIL statistics along one trajectory, with running maxima over every `n >= 1000`.
pub fn lil_trace(walk: &LabWalk, n_max: usize, seed: u64, sigma: f64, drift: f64) -> Result<LilTrace> {
    if n_max < LIL_START {
        return Err(Error::Domain(format!("n_max must be at least {LIL_START}")));
    }
    if !(sigma >= 0.0) {
        return Err(Error::Domain(format!("sigma must be non-negative, got {sigma}")));
    }
    let cps = lil_checkpoints(n_max);
    let mut points = Vec::with_capacity(cps.len());
    let (mut max1, mut max2) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut next = 0;
    walk.run(n_max, seed, 0, |k, w| {
        if k < LIL_START {
            return;
        }
        let nf = k as f64;
        let scale = (nf * nf.ln().ln()).sqrt();
        let centred = w.distance() - nf * drift;
        let s1 = centred / scale;
        let s2 = s1 / std::f64::consts::SQRT_2;
        max1 = max1.max(s1);
        max2 = max2.max(s2);
        if next < cps.len() && cps[next] == k {
            points.push(LilPoint {
                n: k,
                statistic: s1,
                statistic_sqrt2: s2,
                running_max: max1,
                running_max_sqrt2: max2,
            });
            next += 1;
        }
    });
    let last = points.last().expect("n_max >= 1000").statistic_sqrt2;
    Ok(LilTrace {
        seed,
        sigma,
        drift,
        diverging: last.abs() > 5.0 * sigma.max(1e-12),
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LilEnvelopePoint {
    pub n: usize,
    /// Maximum over seeds of the running maximum, both normalizations.
    pub running_max: f64,
    pub running_max_sqrt2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LilEnsemble {
    pub sigma: f64,
    pub lower: f64,
    pub upper: f64,
    pub envelope: Vec<LilEnvelopePoint>,
    /// The `sqrt(2 n log log n)` envelope stays in `[lower sigma, upper sigma]`.
    pub within: bool,
    pub diverging: bool,
    pub traces: Vec<LilTrace>,
}

/// LIL traces for seeds `seed, seed + 1, ...`, combined into the running envelope.
pub fn lil_ensemble(walk: &LabWalk, n_max: usize, seed: u64, seeds: usize, sigma: f64, drift: f64) -> Result<LilEnsemble> {
    if seeds == 0 {
        return Err(Error::Domain("at least one seed is required".into()));
    }
    let traces: Vec<LilTrace> = (0..seeds as u64)
        .into_par_iter()
        .map(|s| lil_trace(walk, n_max, seed.wrapping_add(s), sigma, drift))
        .collect::<Result<_>>()?;
    let envelope: Vec<LilEnvelopePoint> = (0..traces[0].points.len())
        .map(|j| LilEnvelopePoint {
            n: traces[0].points[j].n,
            running_max: traces.iter().map(|t| t.points[j].running_max).fold(f64::NEG_INFINITY, f64::max),
            running_max_sqrt2: traces
                .iter()
                .map(|t| t.points[j].running_max_sqrt2)
                .fold(f64::NEG_INFINITY, f64::max),
        })
        .collect();
    let (lower, upper) = (0.3, 3.0);
    let within = envelope
        .iter()
        .all(|p| p.running_max_sqrt2 >= lower * sigma && p.running_max_sqrt2 <= upper * sigma);
    Ok(LilEnsemble {
        sigma,
        lower,
        upper,
        within,
        diverging: traces.iter().any(|t| t.diverging),
        envelope,
        traces,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MartingaleOptions {
    pub trajectories: usize,
    pub steps: usize,
    pub seed: u64,
    pub bin_depth: usize,
    pub min_count: usize,
}

impl Default for MartingaleOptions {
    fn default() -> Self {
        MartingaleOptions {
            trajectories: 2000,
            steps: 50,
            seed: 0,
            bin_depth: 2,
            min_count: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleBin {
    pub cylinder: String,
    pub count: usize,
    pub mean: f64,
    pub std_err: f64,
    /// `mean / std_err`.
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleReport {
    pub options: MartingaleOptions,
    pub drift: f64,
    pub bins: Vec<MartingaleBin>,
    pub max_abs_z: f64,
    pub worst_bin: String,
    pub passed: bool,
    /// `max_g |d(g, e)| + |A| + 2 |u|_inf`.
    pub increment_bound: f64,
    #[serde(skip)]
    pub increments: Vec<f64>,
}

/// Bins the increments `X_k = h_z(g_k) - A + u(g_k^-1 z) - u(z)`, `z = Z_{k-1}^-1 xi`,
/// by the first `bin_depth` letters of `z`.
pub fn martingale_check(
    mu: &StepDistribution,
    u: &CylinderFunction,
    drift: f64,
    xi: &BoundaryPoint,
    metric: &TreeMetric,
    opts: MartingaleOptions,
) -> Result<MartingaleReport> {
    let rank = mu
        .spec()
        .rank()
        .ok_or_else(|| Error::Capability("martingale check needs a free group".into()))?;
    if u.rank != rank {
        return Err(Error::Domain("u lives on a different free group".into()));
    }
    if opts.bin_depth == 0 || opts.trajectories == 0 || opts.steps == 0 {
        return Err(Error::Domain("bin depth, trajectories and steps must be positive".into()));
    }
    let l = mu.max_length();
    let needed = u.depth.max(opts.bin_depth) + opts.steps * l + 1;
    if xi.depth() < needed {
        return Err(Error::Precision(format!(
            "boundary point has depth {}, the check needs {needed}",
            xi.depth()
        )));
    }
    let support = mu.support();
    let inverses: Vec<GroupElement> = support
        .iter()
        .map(|(g, _)| mu.spec().invert(g))
        .collect::<Result<_>>()?;
    let cdf = mu.cumulative();
    let per_traj: Vec<Vec<(usize, f64)>> = (0..opts.trajectories as u64)
        .into_par_iter()
        .map(|i| -> Result<Vec<(usize, f64)>> {
            let mut sampler = StepSampler::new(&cdf, opts.seed, i);
            let mut zeta = xi.clone();
            let mut out = Vec::with_capacity(opts.steps);
            for _ in 0..opts.steps {
                let j = sampler.next_index();
                let next = boundary_action(&inverses[j], &zeta, metric)?.point;
                let x = horofunction_eval(&zeta, &support[j].0, metric)? - drift + u.at(next.prefix())
                    - u.at(zeta.prefix());
                out.push((crate::ball::encode_reduced(&zeta.prefix()[..opts.bin_depth], rank), x));
                zeta = next;
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let nbins = crate::ball::reduced_count(rank, opts.bin_depth);
    let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); nbins];
    let mut increments = Vec::with_capacity(opts.trajectories * opts.steps);
    for traj in &per_traj {
        for &(b, x) in traj {
            buckets[b].push(x);
            increments.push(x);
        }
    }
    let mut bins = Vec::with_capacity(nbins);
    let mut sparse = Vec::new();
    for (b, xs) in buckets.iter().enumerate() {
        let label = crate::dynamics::cylinder_label(rank, opts.bin_depth, b);
        if xs.len() < opts.min_count {
            sparse.push(format!("{label} ({})", xs.len()));
        }
        let m = mean(xs);
        let se = standard_error(xs);
        let z = if se > 0.0 {
            m / se
        } else if m.abs() < 1e-12 {
            0.0
        } else {
            f64::INFINITY
        };
        bins.push(MartingaleBin {
            cylinder: label,
            count: xs.len(),
            mean: m,
            std_err: se,
            z,
        });
    }
    if !sparse.is_empty() {
        return Err(Error::Statistical(format!(
            "bins below {} increments: {}",
            opts.min_count,
            sparse.join(", ")
        )));
    }
    let (worst, max_abs_z) = bins
        .iter()
        .enumerate()
        .map(|(i, b)| (i, b.z.abs()))
        .fold((0, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
    let max_step = support
        .iter()
        .map(|(g, _)| g.as_free().map(|w| metric.length(w.letters())).unwrap_or(0.0))
        .fold(0.0, f64::max);
    Ok(MartingaleReport {
        options: opts,
        drift,
        worst_bin: bins[worst].cylinder.clone(),
        bins,
        max_abs_z,
        passed: max_abs_z <= 3.0,
        increment_bound: max_step + drift.abs() + 2.0 * u.sup_norm(),
        increments,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LindebergRow {
    pub epsilon: f64,
    /// Smallest `n` with `epsilon sqrt(n) >= bound`.
    pub crossover_n: u64,
    /// The Lindeberg term at the requested `n`.
    pub term: f64,
    /// The term at the crossover; zero unless an increment exceeds the bound.
    pub term_at_crossover: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LindebergTable {
    pub n: u64,
    pub bound: f64,
    pub rows: Vec<LindebergRow>,
    pub max_increment: f64,
    pub tail_detected: bool,
}

/// `(1/n) sum_k E[X_k^2 1{|X_k| > eps sqrt(n)}]` estimated from pooled increments.
pub fn lindeberg_check(increments: &[f64], bound: f64, epsilons: &[f64], n: u64) -> Result<LindebergTable> {
    if increments.is_empty() {
        return Err(Error::Statistical("no increments supplied".into()));
    }
    if !(bound > 0.0) || n == 0 {
        return Err(Error::Domain("bound and n must be positive".into()));
    }
    let term = |threshold: f64| -> f64 {
        increments
            .iter()
            .filter(|x| x.abs() > threshold)
            .map(|x| x * x)
            .sum::<f64>()
            / increments.len() as f64
    };
    let mut rows = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        if !(eps > 0.0) {
            return Err(Error::Domain(format!("epsilon must be positive, got {eps}")));
        }
        let mut crossover = ((bound / eps).powi(2)).ceil().max(1.0) as u64;
        while eps * (crossover as f64).sqrt() < bound {
            crossover += 1;
        }
        rows.push(LindebergRow {
            epsilon: eps,
            crossover_n: crossover,
            term: term(eps * (n as f64).sqrt()),
            term_at_crossover: term(eps * (crossover as f64).sqrt()),
        });
    }
    let max_increment = increments.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    Ok(LindebergTable {
        n,
        bound,
        tail_detected: rows.iter().any(|r| r.term_at_crossover > 0.0),
        rows,
        max_increment,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentFit {
    pub grid: Vec<usize>,
    pub means: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub trajectories: usize,
    pub seed: u64,
}

/// `n` values `10^3 .. 10^5`, three per decade.
pub fn default_exponent_grid() -> Vec<usize> {
    vec![1000, 2154, 4642, 10000, 21544, 46416, 100000]
}

/// Least-squares slope of `log E d(Z_n, e)` against `log n` (word metric).
pub fn lamplighter_exponent(mu: &StepDistribution, grid: &[usize], trajectories: usize, seed: u64) -> Result<ExponentFit> {
    if grid.len() < 2 || grid.windows(2).any(|w| w[0] >= w[1]) || grid[0] == 0 {
        return Err(Error::Domain("the n grid must be increasing and positive".into()));
    }
    if grid[grid.len() - 1] < 100 * grid[0] {
        return Err(Error::Domain("the n grid must span at least two decades".into()));
    }
    if trajectories == 0 {
        return Err(Error::Domain("at least one trajectory is required".into()));
    }
    let walk = LabWalk::new(mu, MetricKind::Word)?;
    let rows: Vec<Vec<f64>> = (0..trajectories as u64)
        .into_par_iter()
        .map(|i| walk.distances_at(grid, seed, i))
        .collect();
    let means: Vec<f64> = (0..grid.len())
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / trajectories as f64)
        .collect();
    if means.iter().any(|&m| m <= 0.0) {
        return Err(Error::Statistical("the walk did not leave the identity on average".into()));
    }
    let pts: Vec<(f64, f64)> = grid
        .iter()
        .zip(&means)
        .map(|(&n, &m)| ((n as f64).ln(), m.ln()))
        .collect();
    let (slope, intercept) = linear_fit(&pts)?;
    Ok(ExponentFit {
        grid: grid.to_vec(),
        means,
        slope,
        intercept,
        trajectories,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CylinderDrift {
    pub cylinder: String,
    /// `E[h_xi(Z_n)] / n` for a representative `xi` of the cylinder.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositivityReport {
    pub drift: DriftEstimate,
    /// `A - 3 CI`.
    pub lower_bound: f64,
    pub drift_positive: bool,
    pub cylinder_depth: usize,
    pub cylinders: Vec<CylinderDrift>,
    pub cylinder_inf: Option<f64>,
    pub passed: bool,
}

/// Checks `A > 0` and `inf_cylinders E[h_xi(Z_n)]/n > 0` on a hyperbolic group.
pub fn positivity_check(
    walk: &LabWalk,
    n: usize,
    trajectories: usize,
    seed: u64,
    cylinder_depth: usize,
) -> Result<PositivityReport> {
    let mu = walk.measure();
    if !mu.spec().is_hyperbolic() {
        return Err(Error::Capability(
            "drift positivity is a hyperbolic-group statement; this group is not hyperbolic".into(),
        ));
    }
    if !mu.is_symmetric() || !mu.is_non_elementary() {
        return Err(Error::Domain("positivity needs a symmetric non-elementary measure".into()));
    }
    let drift = estimate_drift(walk, n, trajectories, seed)?;
    let lower_bound = drift.mean - 3.0 * drift.ci;
    let mut cylinders = Vec::new();
    let mut cylinder_inf = None;
    if let Some(metric) = walk.tree_metric() {
        if cylinder_depth == 0 {
            return Err(Error::Domain("cylinder depth must be at least 1".into()));
        }
        let rank = mu.spec().rank().expect("free group");
        let depth = n * mu.max_length() + cylinder_depth + 1;
        let reps: Vec<BoundaryPoint> = (0..crate::ball::reduced_count(rank, cylinder_depth))
            .map(|i| {
                let w = crate::ball::decode_reduced(i, cylinder_depth, rank);
                let tail = [*w.last().expect("depth >= 1")];
                BoundaryPoint::ray(&w, &tail, depth)
            })
            .collect::<Result<_>>()?;
        let per_traj: Vec<Vec<f64>> = (0..trajectories as u64)
            .into_par_iter()
            .map(|i| -> Result<Vec<f64>> {
                let mut end = None;
                walk.run(n, seed, i, |k, w| {
                    if k == n {
                        end = w.free_word().cloned();
                    }
                });
                let z = GroupElement::Free(end.expect("free walker"));
                reps.iter().map(|xi| horofunction_eval(xi, &z, metric)).collect()
            })
            .collect::<Result<_>>()?;
        for (c, _) in reps.iter().enumerate() {
            let value = per_traj.iter().map(|r| r[c]).sum::<f64>() / (trajectories * n) as f64;
            cylinders.push(CylinderDrift {
                cylinder: crate::dynamics::cylinder_label(rank, cylinder_depth, c),
                value,
            });
        }
        cylinder_inf = cylinders.iter().map(|c| c.value).reduce(f64::min);
    }
    let drift_positive = lower_bound > 0.0;
    Ok(PositivityReport {
        passed: drift_positive && cylinder_inf.is_none_or(|v| v > 0.0),
        drift,
        lower_bound,
        drift_positive,
        cylinder_depth,
        cylinders,
        cylinder_inf,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f2() -> GroupSpec {
        GroupSpec::free(2).unwrap()
    }

    #[test]
    fn checkpoints() {
        assert_eq!(dyadic_checkpoints(10), vec![1, 2, 4, 8, 10]);
        assert_eq!(dyadic_checkpoints(8), vec![1, 2, 4, 8]);
        let cps = lil_checkpoints(100_000);
        assert_eq!(cps[0], 1000);
        assert_eq!(*cps.last().unwrap(), 100_000);
        assert!(cps.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn walker_lengths_match_group_arithmetic() {
        let spec = f2();
        let mu = StepDistribution::uniform_generators(&spec);
        let green = LabWalk::new(&mu, MetricKind::Green).unwrap();
        let word = LabWalk::new(&mu, MetricKind::Word).unwrap();
        let cps: Vec<usize> = (0..=200).collect();
        let dg = green.distances_at(&cps, 3, 1);
        let dw = word.distances_at(&cps, 3, 1);
        let l3 = 3f64.ln();
        for (g, w) in dg.iter().zip(&dw) {
            assert!((g - l3 * w).abs() < 1e-9);
        }
        let traj = crate::walk::sample_trajectory_indexed(&mu, 200, 3, 1);
        for (k, z) in traj.partial_products(&spec).enumerate() {
            assert_eq!(spec.word_length(&z).unwrap() as f64, dw[k]);
        }
    }

    #[test]
    fn drift_is_deterministic_and_near_half() {
        let mu = StepDistribution::uniform_generators(&f2());
        let walk = LabWalk::new(&mu, MetricKind::Word).unwrap();
        let a = estimate_drift(&walk, 1000, 200, 11).unwrap();
        let b = estimate_drift(&walk, 1000, 200, 11).unwrap();
        assert_eq!(a, b);
        assert!((a.mean - 0.5).abs() < 0.01, "{}", a.mean);
        assert_eq!(a.subadditive[0].k, 1);
        assert_eq!(a.subadditive[0].mean, 1.0);
        assert!(a.subadditive_monotone);
        assert!(!a.sublinear);
    }

    #[test]
    fn clt_with_zero_steps_is_zero() {
        let mu = StepDistribution::uniform_generators(&f2());
        let walk = LabWalk::new(&mu, MetricKind::Word).unwrap();
        let s = clt_samples(&walk, 0, 10, 1, 0.5).unwrap();
        assert!(s.samples.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn lil_on_deterministic_walk_is_zero() {
        let spec = f2();
        let a = spec.parse_element("a").unwrap();
        let mu = StepDistribution::dirac(&spec, a).unwrap();
        let walk = LabWalk::new(&mu, MetricKind::Word).unwrap();
        let t = lil_trace(&walk, 5000, 0, 0.0, 1.0).unwrap();
        assert!(t.points.iter().all(|p| p.statistic == 0.0 && p.statistic_sqrt2 == 0.0));
        assert!(!t.diverging);
    }

    #[test]
    fn lindeberg_zero_after_crossover() {
        let xs = [1.0, -1.5, 0.5, 1.5];
        let t = lindeberg_check(&xs, 1.5, &[0.1, 10.0], 1).unwrap();
        assert_eq!(t.rows[1].term, 0.0);
        assert_eq!(t.rows[0].crossover_n, 225);
        assert_eq!(t.rows[0].term, (1.0 + 2.25 + 0.25 + 2.25) / 4.0);
        assert!(!t.tail_detected);
        let heavy = [1.0, 40.0];
        assert!(lindeberg_check(&heavy, 1.5, &[0.5], 1).unwrap().tail_detected);
    }

    #[test]
    fn positivity_rejects_lamplighter() {
        let mu = StepDistribution::uniform_generators(&GroupSpec::lamplighter());
        let walk = LabWalk::new(&mu, MetricKind::Word).unwrap();
        assert!(matches!(
            positivity_check(&walk, 100, 10, 0, 2),
            Err(Error::Capability(_))
        ));
        assert!(matches!(
            LabWalk::new(&mu, MetricKind::Green),
            Err(Error::Capability(_))
        ));
    }
}
