//! Euler simulation of `dX = A(X₋) dZ` up to the first exit from a ball,
//! plus the estimators built on exit records: mean exit time, radial exit
//! histograms, Lévy-system occupation sums and harmonic values.
//!
//! Path `k` draws from its own ChaCha stream `k` under the master seed, so an
//! ensemble is identical for any thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{Ball, CoefficientField};
use crate::levy::{nu_radial_set, RadialSet};
use crate::stable::{RandomStream, StabilityIndex, StableSampler};

/// Two-sided normal quantile for 95% intervals.
pub const Z95: f64 = 1.959963984540054;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub time_step: f64,
    pub max_steps: u64,
    pub paths: usize,
    pub master_seed: u64,
    pub step_halving_levels: u32,
    /// Largest tolerated fraction of paths that hit `max_steps`.
    pub censor_threshold: f64,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        Self {
            time_step: 1e-3,
            max_steps: 200_000,
            paths: 100_000,
            master_seed: 0x5eed,
            step_halving_levels: 2,
            censor_threshold: 1e-3,
        }
    }
}

impl SimulationSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.time_step > 0.0) || !self.time_step.is_finite() {
            return Err(invalid("time_step", "must be positive"));
        }
        if self.paths == 0 {
            return Err(invalid("paths", "need at least one path"));
        }
        if self.max_steps == 0 {
            return Err(invalid("max_steps", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.censor_threshold) {
            return Err(invalid("censor_threshold", "must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn with_paths(self, paths: usize) -> Self {
        Self { paths, ..self }
    }

    pub fn with_seed(self, master_seed: u64) -> Self {
        Self { master_seed, ..self }
    }

    pub fn with_time_step(self, time_step: f64) -> Self {
        Self { time_step, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExitRecord {
    pub exit_time: f64,
    pub exit_radius: f64,
    pub steps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExitEnsemble {
    pub start: Vec<f64>,
    pub ball: Ball,
    pub spec: SimulationSpec,
    pub records: Vec<ExitRecord>,
    /// Exit positions, row-major `records.len() × d`.
    pub exit_points: Vec<f64>,
    pub censored: usize,
    /// Per-path `Σ_n V(X_n) Δt` when an occupation functional was supplied.
    pub occupancy: Option<Vec<f64>>,
}

impl ExitEnsemble {
    pub fn exit_point(&self, k: usize) -> &[f64] {
        let d = self.ball.dim();
        &self.exit_points[k * d..(k + 1) * d]
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Mean of `g(exit point)` with a normal 95% interval.
    pub fn mean_of(&self, g: impl Fn(&[f64]) -> f64) -> MeanEstimate {
        MeanEstimate::from_values((0..self.len()).map(|k| g(self.exit_point(k))))
    }

    /// Fraction of exit radii in `[r, r + κ]`.
    pub fn boundary_mass(&self, kappa: f64) -> f64 {
        let lim = self.ball.radius() + kappa;
        let hits = self.records.iter().filter(|r| r.exit_radius <= lim).count();
        hits as f64 / self.len().max(1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

impl MeanEstimate {
    /// Welford accumulation in iteration order.
    pub fn from_values(values: impl IntoIterator<Item = f64>) -> Self {
        let (mut n, mut mean, mut m2) = (0usize, 0.0, 0.0);
        for v in values {
            n += 1;
            let delta = v - mean;
            mean += delta / n as f64;
            m2 += delta * (v - mean);
        }
        let se = if n > 1 { (m2 / (n - 1) as f64 / n as f64).sqrt() } else { f64::INFINITY };
        Self {
            mean,
            se,
            ci_low: mean - Z95 * se,
            ci_high: mean + Z95 * se,
            n,
        }
    }
}

/// An optional functional summed along the path before exit.
pub type Occupation<'a> = &'a (dyn Fn(&[f64]) -> f64 + Sync);

struct PathOutcome {
    record: Option<ExitRecord>,
    point: Vec<f64>,
    occupancy: f64,
}

#[allow(clippy::too_many_arguments)]
fn run_path(
    x0: &[f64],
    ball: &Ball,
    field: &dyn CoefficientField,
    sampler: &StableSampler,
    scale: f64,
    spec: &SimulationSpec,
    index: u64,
    occupation: Option<Occupation<'_>>,
) -> PathOutcome {
    let d = x0.len();
    let mut rng = RandomStream::new(spec.master_seed, index);
    let mut x = x0.to_vec();
    let mut m = vec![0.0; d * d];
    let mut dz = vec![0.0; d];
    let constant = field.is_constant();
    if constant {
        field.matrix_into(x0, &mut m);
    }
    let center = ball.center();
    let r2 = ball.radius() * ball.radius();
    let mut occ = 0.0;
    for n in 0..spec.max_steps {
        if let Some(f) = occupation {
            occ += f(&x) * spec.time_step;
        }
        if !constant {
            field.matrix_into(&x, &mut m);
        }
        for z in dz.iter_mut() {
            *z = sampler.increment(scale, &mut rng);
        }
        let mut dist2 = 0.0;
        for (i, xi) in x.iter_mut().enumerate() {
            let row = &m[i * d..(i + 1) * d];
            *xi += row.iter().zip(&dz).map(|(a, b)| a * b).sum::<f64>();
            dist2 += (*xi - center[i]) * (*xi - center[i]);
        }
        if dist2 >= r2 {
            return PathOutcome {
                record: Some(ExitRecord {
                    exit_time: (n + 1) as f64 * spec.time_step,
                    exit_radius: dist2.sqrt(),
                    steps: n + 1,
                }),
                point: x,
                occupancy: occ,
            };
        }
    }
    PathOutcome {
        record: None,
        point: x,
        occupancy: occ,
    }
}

/// Simulates `spec.paths` paths from `x0` until they leave `ball`.
pub fn simulate_exit(
    x0: &[f64],
    ball: &Ball,
    field: &dyn CoefficientField,
    alpha: StabilityIndex,
    spec: &SimulationSpec,
) -> Result<ExitEnsemble> {
    simulate_exit_with(x0, ball, field, alpha, spec, None)
}

/// As [`simulate_exit`], additionally summing `occupation(X_n) Δt` over pre-exit states.
pub fn simulate_exit_with(
    x0: &[f64],
    ball: &Ball,
    field: &dyn CoefficientField,
    alpha: StabilityIndex,
    spec: &SimulationSpec,
    occupation: Option<Occupation<'_>>,
) -> Result<ExitEnsemble> {
    spec.validate()?;
    if x0.len() != ball.dim() || field.dim() != ball.dim() {
        return Err(invalid("dimension", "start point, ball and field must agree"));
    }
    if !ball.contains(x0) {
        return Err(Error::OutsideDomain("start point must lie in the open ball".into()));
    }
    let sampler = StableSampler::new(alpha);
    let scale = sampler.time_scale(spec.time_step)?;
    let outcomes: Vec<PathOutcome> = (0..spec.paths)
        .into_par_iter()
        .with_min_len(256)
        .map(|k| run_path(x0, ball, field, &sampler, scale, spec, k as u64, occupation))
        .collect();
    let censored = outcomes.iter().filter(|o| o.record.is_none()).count();
    let fraction = censored as f64 / spec.paths as f64;
    if fraction > spec.censor_threshold {
        return Err(Error::Censored {
            censored,
            paths: spec.paths,
            fraction,
            threshold: spec.censor_threshold,
        });
    }
    let d = ball.dim();
    let mut records = Vec::with_capacity(spec.paths - censored);
    let mut exit_points = Vec::with_capacity((spec.paths - censored) * d);
    let mut occ = occupation.map(|_| Vec::with_capacity(spec.paths - censored));
    for o in outcomes {
        if let Some(rec) = o.record {
            records.push(rec);
            exit_points.extend_from_slice(&o.point);
            if let Some(v) = occ.as_mut() {
                v.push(o.occupancy);
            }
        }
    }
    Ok(ExitEnsemble {
        start: x0.to_vec(),
        ball: ball.clone(),
        spec: *spec,
        records,
        exit_points,
        censored,
        occupancy: occ,
    })
}

pub fn estimate_exit_time_mean(ensemble: &ExitEnsemble) -> MeanEstimate {
    MeanEstimate::from_values(ensemble.records.iter().map(|r| r.exit_time))
}

/// `Êτ / (r² - |x - z|²)^{α/2}`.
pub fn exit_time_ratio(ensemble: &ExitEnsemble, alpha: StabilityIndex) -> (f64, f64) {
    let m = estimate_exit_time_mean(ensemble);
    let r = ensemble.ball.radius();
    let rho = ensemble.ball.dist_to_center(&ensemble.start);
    let env = (r * r - rho * rho).powf(0.5 * alpha.get());
    (m.mean / env, m.se / env)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Binning {
    /// Log-spaced bins on `(r, near_factor·r]`.
    pub log_bins: usize,
    /// Decades spanned by the log bins below `(near_factor - 1) r`.
    pub log_decades: f64,
    pub near_factor: f64,
    /// Ratio of consecutive edges beyond `near_factor·r`.
    pub growth: f64,
    /// Last finite edge as a multiple of `r`; everything beyond is overflow.
    pub far_factor: f64,
}

impl Default for Binning {
    fn default() -> Self {
        Self {
            log_bins: 40,
            log_decades: 3.0,
            near_factor: 1.25,
            growth: 1.25,
            far_factor: 20.0,
        }
    }
}

impl Binning {
    pub fn validate(&self) -> Result<()> {
        if self.log_bins == 0 || !(self.log_decades > 0.0) {
            return Err(invalid("binning", "need log bins spanning a positive range"));
        }
        if !(self.near_factor > 1.0 && self.growth > 1.0 && self.far_factor > self.near_factor) {
            return Err(invalid("binning", "need 1 < near_factor < far_factor and growth > 1"));
        }
        Ok(())
    }

    /// Finite edges from `r` to `far_factor·r`, strictly increasing.
    pub fn edges(&self, r: f64) -> Result<Vec<f64>> {
        self.validate()?;
        let span = (self.near_factor - 1.0) * r;
        let mut edges = vec![r];
        for k in 0..=self.log_bins {
            let e = -self.log_decades * (1.0 - k as f64 / self.log_bins as f64);
            edges.push(r + span * 10f64.powf(e));
        }
        let far = self.far_factor * r;
        let mut e = self.near_factor * r * self.growth;
        while e < far * (1.0 - 1e-12) {
            edges.push(e);
            e *= self.growth;
        }
        edges.push(far);
        Ok(edges)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: u64,
    pub density: f64,
    pub density_low: f64,
    pub density_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialHistogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub overflow: u64,
    pub total: u64,
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if successes == trials { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

impl RadialHistogram {
    pub fn from_radii(radii: impl IntoIterator<Item = f64>, edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("edges", "need at least two strictly increasing edges"));
        }
        let bins = edges.len() - 1;
        let mut counts = vec![0u64; bins];
        let (mut overflow, mut total) = (0u64, 0u64);
        let last = *edges.last().unwrap();
        for y in radii {
            total += 1;
            if y > last {
                overflow += 1;
                continue;
            }
            // bins are (lo, hi]; the first also takes y = r
            let idx = edges.partition_point(|e| *e < y);
            counts[idx.saturating_sub(1).min(bins - 1)] += 1;
        }
        Ok(Self {
            bin_edges: edges,
            counts,
            overflow,
            total,
        })
    }

    pub fn bins(&self) -> Vec<HistogramBin> {
        let n = self.total.max(1) as f64;
        self.counts
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let (lo, hi) = (self.bin_edges[i], self.bin_edges[i + 1]);
                let w = hi - lo;
                let (pl, ph) = wilson_interval(c, self.total, Z95);
                HistogramBin {
                    lo,
                    hi,
                    count: c,
                    density: c as f64 / (n * w),
                    density_low: pl / w,
                    density_high: ph / w,
                }
            })
            .collect()
    }

    pub fn overflow_fraction(&self) -> f64 {
        self.overflow as f64 / self.total.max(1) as f64
    }

    pub fn empty_bins(&self) -> Vec<usize> {
        (0..self.counts.len()).filter(|&i| self.counts[i] == 0).collect()
    }
}

pub fn estimate_exit_density(ensemble: &ExitEnsemble, binning: &Binning) -> Result<RadialHistogram> {
    let edges = binning.edges(ensemble.ball.radius())?;
    RadialHistogram::from_radii(ensemble.records.iter().map(|r| r.exit_radius), edges)
}

fn radial_contains(shape: RadialSet, dist: f64) -> bool {
    match shape {
        RadialSet::Ring { radius, eta } => dist >= radius && dist <= radius + eta,
        RadialSet::Exterior { radius } => dist >= radius,
    }
}

fn inner_radius(shape: RadialSet) -> f64 {
    match shape {
        RadialSet::Ring { radius, .. } | RadialSet::Exterior { radius } => radius,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GreenCheck {
    /// Empirical `P(X_τ ∈ V)`.
    pub lhs: MeanEstimate,
    /// Path average of `Σ_n ν(X_n, V) Δt`.
    pub rhs: MeanEstimate,
    /// Per-path difference, whose SE accounts for the shared paths.
    pub difference: MeanEstimate,
}

impl GreenCheck {
    pub fn combined_se(&self) -> f64 {
        (self.lhs.se.powi(2) + self.rhs.se.powi(2)).sqrt()
    }

    pub fn agrees(&self, k: f64) -> bool {
        (self.lhs.mean - self.rhs.mean).abs() <= k * self.combined_se()
    }
}

/// Both sides of `P^x(X_τ ∈ V) = ∫_D ν(y, V) G_D(x, dy)` for `V` radial about the ball center.
pub fn estimate_green_integral(
    x0: &[f64],
    ball: &Ball,
    field: &dyn CoefficientField,
    alpha: StabilityIndex,
    spec: &SimulationSpec,
    shape: RadialSet,
) -> Result<GreenCheck> {
    if !(inner_radius(shape) > ball.radius()) {
        return Err(invalid("V", "must be at positive distance from the ball"));
    }
    let z0 = ball.center().to_vec();
    let nu = |y: &[f64]| nu_radial_set(y, field, &z0, shape, alpha).unwrap_or(f64::NAN);
    let ens = simulate_exit_with(x0, ball, field, alpha, spec, Some(&nu))?;
    let occ = ens.occupancy.as_ref().expect("occupancy requested");
    if occ.iter().any(|v| !v.is_finite()) {
        return Err(Error::OutsideDomain("jump measure undefined along a path".into()));
    }
    let hit: Vec<f64> = ens.records.iter().map(|r| radial_contains(shape, r.exit_radius) as u8 as f64).collect();
    Ok(GreenCheck {
        lhs: MeanEstimate::from_values(hit.iter().copied()),
        rhs: MeanEstimate::from_values(occ.iter().copied()),
        difference: MeanEstimate::from_values(hit.iter().zip(occ).map(|(h, o)| h - o)),
    })
}

/// `u(x₀) = E g(X_τ)` by plain Monte Carlo.
pub fn harmonic_eval(
    x0: &[f64],
    ball: &Ball,
    field: &dyn CoefficientField,
    alpha: StabilityIndex,
    spec: &SimulationSpec,
    g: impl Fn(&[f64]) -> f64,
) -> Result<MeanEstimate> {
    Ok(simulate_exit(x0, ball, field, alpha, spec)?.mean_of(g))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NestedCheck {
    pub direct: MeanEstimate,
    pub nested: MeanEstimate,
    pub inner_radius: f64,
}

impl NestedCheck {
    pub fn agrees(&self, k: f64) -> bool {
        let se = (self.direct.se.powi(2) + self.nested.se.powi(2)).sqrt();
        (self.direct.mean - self.nested.mean).abs() <= k * se
    }
}

/// Compares `u(x₀)` with `E u(X_{τ_{B'}})` for the concentric ball `B'` of radius
/// `inner_radius`, estimating `u` at each intermediate exit with `inner_paths` paths.
#[allow(clippy::too_many_arguments)]
pub fn strong_markov_check(
    x0: &[f64],
    ball: &Ball,
    field: &dyn CoefficientField,
    alpha: StabilityIndex,
    spec: &SimulationSpec,
    inner_radius: f64,
    outer_paths: usize,
    inner_paths: usize,
    g: &(dyn Fn(&[f64]) -> f64 + Sync),
) -> Result<NestedCheck> {
    if !(inner_radius > ball.dist_to_center(x0) && inner_radius < ball.radius()) {
        return Err(invalid("inner_radius", "must separate x0 from the outer sphere"));
    }
    let direct = harmonic_eval(x0, ball, field, alpha, spec, g)?;
    let small = Ball::new(ball.center().to_vec(), inner_radius)?;
    let first = simulate_exit(x0, &small, field, alpha, &spec.with_paths(outer_paths))?;
    let values: Vec<f64> = (0..first.len())
        .map(|k| {
            let y = first.exit_point(k);
            if !ball.contains(y) {
                return Ok(g(y));
            }
            // a fresh seed block per outer path keeps the stages independent
            let inner = spec
                .with_paths(inner_paths)
                .with_seed(spec.master_seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(k as u64 + 1)));
            Ok(harmonic_eval(y, ball, field, alpha, &inner, g)?.mean)
        })
        .collect::<Result<_>>()?;
    Ok(NestedCheck {
        direct,
        nested: MeanEstimate::from_values(values),
        inner_radius,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SandwichPoint {
    pub depth: f64,
    pub lower: f64,
    pub estimate: MeanEstimate,
    pub upper: f64,
    pub passed: bool,
}

/// Checks `F_{b₂,Θ}(x) - 3SE ≤ û(x) ≤ f_{b₁,θ}(x) + 3SE` with `u` the exit
/// probability into the barrier ring.
#[allow(clippy::too_many_arguments)]
pub fn barrier_sandwich_check(
    points: &[Vec<f64>],
    ball: &Ball,
    field: &dyn CoefficientField,
    alpha: StabilityIndex,
    spec: &SimulationSpec,
    upper: &dyn Fn(&[f64]) -> Result<f64>,
    lower: &dyn Fn(&[f64]) -> Result<f64>,
    ring: RadialSet,
) -> Result<Vec<SandwichPoint>> {
    points
        .iter()
        .map(|x| {
            let est = harmonic_eval(x, ball, field, alpha, spec, |y| {
                radial_contains(ring, ball.dist_to_center(y)) as u8 as f64
            })?;
            let (lo, hi) = (lower(x)?, upper(x)?);
            Ok(SandwichPoint {
                depth: ball.delta(x),
                lower: lo,
                estimate: est,
                upper: hi,
                passed: lo - 3.0 * est.se <= est.mean && est.mean <= hi + 3.0 * est.se,
            })
        })
        .collect()
}

/// `P^x(X_{τ_{B_x}} ∈ D^c)` with `B_x = B(x, δ_D(x)/3)`. The time step is
/// shrunk by `(r_x / r)^α` so the inner ball is resolved like the outer one.
pub fn uniform_exit_probability(
    x: &[f64],
    ball: &Ball,
    field: &dyn CoefficientField,
    alpha: StabilityIndex,
    spec: &SimulationSpec,
) -> Result<MeanEstimate> {
    let delta = ball.delta(x);
    if !(delta > 0.0) {
        return Err(Error::OutsideDomain("x must lie in the open ball".into()));
    }
    let rx = delta / 3.0;
    let bx = Ball::new(x.to_vec(), rx)?;
    let dt = spec.time_step * (rx / ball.radius()).powf(alpha.get());
    let ens = simulate_exit(x, &bx, field, alpha, &spec.with_time_step(dt))?;
    Ok(ens.mean_of(|y| (!ball.contains(y)) as u8 as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HalvingLevel {
    pub time_step: f64,
    pub exit_time: MeanEstimate,
    pub set_probability: MeanEstimate,
}

/// Mean exit time and `P(X_τ ∈ V)` at `time_step / 2^k`, `k = 0..=levels`.
pub fn step_halving_study(
    x0: &[f64],
    ball: &Ball,
    field: &dyn CoefficientField,
    alpha: StabilityIndex,
    spec: &SimulationSpec,
    shape: RadialSet,
) -> Result<Vec<HalvingLevel>> {
    (0..=spec.step_halving_levels)
        .map(|k| {
            let dt = spec.time_step / 2f64.powi(k as i32);
            let s = SimulationSpec {
                time_step: dt,
                max_steps: spec.max_steps << k,
                ..*spec
            };
            let ens = simulate_exit(x0, ball, field, alpha, &s)?;
            Ok(HalvingLevel {
                time_step: dt,
                exit_time: estimate_exit_time_mean(&ens),
                set_probability: ens.mean_of(|y| radial_contains(shape, ball.dist_to_center(y)) as u8 as f64),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{builtin_fields, IdentityField};

    fn a(x: f64) -> StabilityIndex {
        StabilityIndex::new(x).unwrap()
    }

    fn small_spec(paths: usize) -> SimulationSpec {
        SimulationSpec {
            time_step: 1e-3,
            paths,
            ..Default::default()
        }
    }

    #[test]
    fn records_are_exits() {
        let b = Ball::centered(2, 1.0).unwrap();
        let ens = simulate_exit(&[0.3, 0.0], &b, &IdentityField::new(2), a(1.0), &small_spec(2000)).unwrap();
        assert_eq!(ens.len(), 2000);
        assert!(ens.records.iter().all(|r| r.exit_radius >= 1.0 && r.exit_time > 0.0));
        for k in 0..ens.len() {
            let p = ens.exit_point(k);
            assert!((b.dist_to_center(p) - ens.records[k].exit_radius).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let b = Ball::centered(2, 1.0).unwrap();
        let f = &builtin_fields(2)[2];
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| simulate_exit(&[0.1, 0.2], &b, f.as_ref(), a(1.3), &small_spec(3000)).unwrap())
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn censoring_is_reported() {
        let b = Ball::centered(2, 1.0).unwrap();
        let spec = SimulationSpec {
            max_steps: 3,
            ..small_spec(100)
        };
        match simulate_exit(&[0.0, 0.0], &b, &IdentityField::new(2), a(1.0), &spec) {
            Err(Error::Censored { paths: 100, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn center_exit_time_matches_closed_form() {
        // with A = I the mean exit time from the center is r^α / (d Ã_α) = 0.5
        let b = Ball::centered(2, 1.0).unwrap();
        let ens = simulate_exit(&[0.0, 0.0], &b, &IdentityField::new(2), a(1.0), &small_spec(20_000)).unwrap();
        let m = estimate_exit_time_mean(&ens);
        assert!((m.mean - 0.5).abs() < 0.03, "{m:?}");
    }

    #[test]
    fn histogram_edges_and_mass() {
        let edges = Binning::default().edges(1.0).unwrap();
        assert_eq!(edges[0], 1.0);
        assert!((edges[1] - 1.00025).abs() < 1e-12);
        assert!((edges[41] - 1.25).abs() < 1e-12);
        assert_eq!(*edges.last().unwrap(), 20.0);
        let h = RadialHistogram::from_radii([1.0, 1.1, 2.0, 25.0, 20.0], edges).unwrap();
        assert_eq!(h.counts.iter().sum::<u64>() + h.overflow, h.total);
        assert_eq!(h.overflow, 1);
        let mass: f64 = h.bins().iter().map(|b| b.density * (b.hi - b.lo)).sum::<f64>() + h.overflow_fraction();
        assert!((mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wilson_bounds() {
        let (lo, hi) = wilson_interval(0, 100, Z95);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.05);
        let (lo, hi) = wilson_interval(50, 100, Z95);
        assert!(lo < 0.5 && hi > 0.5);
    }

    #[test]
    fn harmonic_constant_and_indicator() {
        let b = Ball::centered(2, 1.0).unwrap();
        let id = IdentityField::new(2);
        let one = harmonic_eval(&[0.2, 0.2], &b, &id, a(1.5), &small_spec(1000), |_| 1.0).unwrap();
        assert_eq!(one.mean, 1.0);
        let ring = harmonic_eval(&[0.2, 0.2], &b, &id, a(1.5), &small_spec(4000), |y| {
            let r = b.dist_to_center(y);
            (r > 1.25 && r < 1.5) as u8 as f64
        })
        .unwrap();
        assert!(ring.mean > 0.0 && ring.mean < 1.0);
    }
}
