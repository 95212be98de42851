//! Experiment pipelines. Each returns a serializable report; writing files
//! is left to [`super::commands`].

use serde::Serialize;

use crate::barrier::{
    build_theta, f_cap_theta_eval, f_theta_eval, theta_class_audit, BarrierParams, DampedTheta, PhiProfile,
    PiecewiseTheta, ThetaAudit, ThetaPieceRow,
};
use crate::error::Result;
use crate::exit::{
    barrier_sandwich_check, estimate_exit_density, estimate_exit_time_mean, estimate_green_integral, exit_time_ratio,
    harmonic_eval, simulate_exit, uniform_exit_probability, GreenCheck, MeanEstimate, RadialHistogram,
    SandwichPoint, SimulationSpec,
};
use crate::geometry::{norm, Ball, CoefficientField};
use crate::levy::{exterior_constant, mu_exterior_lower, mu_ring_measure, RadialSet};
use crate::quad::audit::{ladder_stable, sign_audit_sub, sign_audit_super, Lg_closed_form, SignAuditReport};
use crate::quad::gk::Tolerance;
use crate::quad::profile::{HProfile, LambdaProfile, RingProfile};
use crate::quad::{full_generator, pv_directional, ScalarField};
use crate::stable::{compute_a_tilde_alpha, RandomStream, StabilityIndex};

use super::config::Resolved;
use super::verdict::{ratio_rows, verdict_from_rows, RatioReport};

fn unit(d: usize, i: usize) -> Vec<f64> {
    let mut e = vec![0.0; d];
    e[i] = 1.0;
    e
}

/// Seed for the `k`-th independent run under one master seed.
pub fn run_seed(master: u64, k: u64) -> u64 {
    master ^ 0x9e37_79b9_7f4a_7c15u64.wrapping_mul(k + 1)
}

/// Polar grid in the `(e₁, e_d)` plane with radii up to `r - margin`.
pub fn interior_grid(ball: &Ball, points: usize, margin: f64) -> Vec<Vec<f64>> {
    let d = ball.dim();
    let radii = (points as f64).sqrt().round().max(1.0) as usize;
    let angles = points.div_ceil(radii);
    let top = ball.radius() - margin;
    let mut out = Vec::with_capacity(points);
    'outer: for k in 0..radii {
        let rad = top * (k as f64 + 0.5) / radii as f64;
        for j in 0..angles {
            if out.len() == points {
                break 'outer;
            }
            let phi = std::f64::consts::TAU * (j as f64 + 0.25 * k as f64) / angles as f64;
            let mut x = ball.center().to_vec();
            x[0] += rad * phi.cos();
            x[d - 1] += rad * phi.sin();
            out.push(x);
        }
    }
    out
}

// ---------------------------------------------------------------- theta

#[derive(Debug, Clone, Serialize)]
pub struct ThetaProfileRow {
    pub v: f64,
    pub theta: f64,
    pub dtheta: f64,
    pub d2theta: f64,
    pub cap_theta: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ThetaBuildReport {
    pub params: BarrierParams,
    pub theta: PiecewiseTheta,
    pub pieces: Vec<ThetaPieceRow>,
    pub audit: ThetaAudit,
    #[serde(skip)]
    pub profile: Vec<ThetaProfileRow>,
}

pub fn run_theta_build(res: &Resolved) -> Result<ThetaBuildReport> {
    let theta = build_theta(&res.params)?;
    let audit = theta_class_audit(&theta, &res.params, res.config.audit.theta_grid_points)?;
    let big = DampedTheta::new(res.params.r, res.params.eps)?;
    let r2 = theta.r * theta.r;
    let profile = (0..400)
        .map(|i| {
            let v = r2 * i as f64 / 400.0;
            Ok(ThetaProfileRow {
                v,
                theta: theta.value(v),
                dtheta: theta.derivative(v),
                d2theta: theta.second_derivative(v),
                cap_theta: big.value(v)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ThetaBuildReport {
        params: res.params,
        pieces: theta.pieces(),
        theta,
        audit,
        profile,
    })
}

// ---------------------------------------------------------------- generator

#[derive(Debug, Clone, Serialize)]
pub struct IdentityCheck {
    pub name: String,
    pub points: usize,
    pub max_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityRow {
    pub check: String,
    pub x1: f64,
    pub xd: f64,
    pub value: f64,
    pub expected: f64,
    pub error: f64,
    pub error_estimate: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GeneratorReport {
    pub checks: Vec<IdentityCheck>,
    #[serde(skip)]
    pub rows: Vec<IdentityRow>,
}

impl GeneratorReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

fn collect_check(
    name: &str,
    tolerance: f64,
    points: &[Vec<f64>],
    rows: &mut Vec<IdentityRow>,
    mut eval: impl FnMut(&[f64]) -> Result<(f64, f64, f64, f64)>,
) -> Result<IdentityCheck> {
    let mut max_error = 0.0f64;
    for x in points {
        // (value, expected, scaled error, quadrature error estimate)
        let (value, expected, error, est) = eval(x)?;
        max_error = max_error.max(error);
        rows.push(IdentityRow {
            check: name.into(),
            x1: x[0],
            xd: x[x.len() - 1],
            value,
            expected,
            error,
            error_estimate: est,
        });
    }
    Ok(IdentityCheck {
        name: name.into(),
        points: points.len(),
        max_error,
        tolerance,
        pass: max_error <= tolerance,
    })
}

/// `𝓛_{e_d}λ = -Ã_α`, `𝓛_{e_d}h = 0`, the ring closed form, the full
/// generator on `λ` under the configured field, and `|v|^α` homogeneity on `λ`.
pub fn generator_identities(res: &Resolved, points: usize) -> Result<GeneratorReport> {
    let ball = &res.ball;
    let d = ball.dim();
    let r = ball.radius();
    let alpha = res.alpha;
    let spec = &res.quadrature;
    let ed = unit(d, d - 1);
    let tilde = compute_a_tilde_alpha(alpha);
    let lam = LambdaProfile::new(ball, alpha);
    let h = HProfile::new(ball, alpha);
    let ring = RingProfile::barrier_ring(ball, res.params.eps, res.params.eta_ring);
    let mut rows = Vec::new();
    let mut checks = Vec::new();

    let grid = interior_grid(ball, points, 0.01 * r);
    checks.push(collect_check("lambda_identity", 1e-6, &grid, &mut rows, |x| {
        let g = pv_directional(&lam, x, &ed, alpha, spec)?;
        Ok((g.value, -tilde, (g.value + tilde).abs() / tilde, g.error_estimate))
    })?);

    let grid_h = interior_grid(ball, points, 0.05 * r);
    checks.push(collect_check("h_identity", 1e-5, &grid_h, &mut rows, |x| {
        let g = pv_directional(&h, x, &ed, alpha, spec)?;
        Ok((g.value, 0.0, g.value.abs() / h.eval(x), g.error_estimate))
    })?);

    let grid_g = interior_grid(ball, 50, 0.01 * r);
    checks.push(collect_check("ring_closed_form", 1e-6, &grid_g, &mut rows, |x| {
        let g = pv_directional(&ring, x, &ed, alpha, spec)?;
        let exact = Lg_closed_form(x, ball, res.params.eps, res.params.eta_ring, alpha)?;
        Ok((g.value, exact, (g.value / exact - 1.0).abs(), g.error_estimate))
    })?);

    let field = res.field.as_ref();
    let grid_f = interior_grid(ball, 20, 0.05 * r);
    checks.push(collect_check("full_generator_lambda", 1e-6, &grid_f, &mut rows, |x| {
        let g = full_generator(&lam, x, field, alpha, spec)?;
        let weight: f64 = field.columns(x).iter().map(|c| norm(c).powf(alpha.get())).sum();
        let expect = -tilde * weight;
        Ok((g.value, expect, (g.value / expect - 1.0).abs(), g.error_estimate))
    })?);

    let two_ed: Vec<f64> = ed.iter().map(|c| 2.0 * c).collect();
    checks.push(collect_check("homogeneity", 1e-6, &grid_f, &mut rows, |x| {
        let g = pv_directional(&lam, x, &two_ed, alpha, spec)?;
        let expect = -tilde * 2f64.powf(alpha.get());
        Ok((g.value, expect, (g.value / expect - 1.0).abs(), g.error_estimate))
    })?);

    Ok(GeneratorReport { checks, rows })
}

// ---------------------------------------------------------------- sign audits

#[derive(Debug, Clone, Serialize)]
pub struct SignAuditPair {
    pub alpha: f64,
    pub r: f64,
    pub super_audit: SignAuditReport,
    pub sub_audit: SignAuditReport,
    pub super_refined_exponent: Option<i32>,
    pub sub_refined_exponent: Option<i32>,
}

impl SignAuditPair {
    pub fn b1(&self) -> Option<f64> {
        self.super_audit.b
    }
    pub fn b2(&self) -> Option<f64> {
        self.sub_audit.b
    }
    pub fn stable(&self) -> bool {
        ladder_stable(self.super_audit.ladder_exponent, self.super_refined_exponent)
            && ladder_stable(self.sub_audit.ladder_exponent, self.sub_refined_exponent)
    }
    pub fn passed(&self) -> bool {
        self.super_audit.passed() && self.sub_audit.passed() && self.stable()
    }
}

/// Both audits on the configured grid and on the grid refined ×2.
pub fn sign_audits(res: &Resolved) -> Result<SignAuditPair> {
    sign_audits_for(&res.params, &res.ball, res.alpha, res)
}

pub fn sign_audits_for(params: &BarrierParams, ball: &Ball, alpha: StabilityIndex, res: &Resolved) -> Result<SignAuditPair> {
    let theta = build_theta(params)?;
    let grid = res.audit_grid;
    let fine = grid.refined(2);
    let q = &res.quadrature;
    let super_audit = sign_audit_super(&theta, params, ball, alpha, &grid, q)?;
    let sub_audit = sign_audit_sub(params, ball, alpha, &grid, q)?;
    let super_fine = sign_audit_super(&theta, params, ball, alpha, &fine, q)?;
    let sub_fine = sign_audit_sub(params, ball, alpha, &fine, q)?;
    Ok(SignAuditPair {
        alpha: alpha.get(),
        r: ball.radius(),
        super_audit,
        sub_audit,
        super_refined_exponent: super_fine.ladder_exponent,
        sub_refined_exponent: sub_fine.ladder_exponent,
    })
}

// ---------------------------------------------------------------- jump-measure lemmas

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Bracket {
    pub samples: usize,
    pub min: f64,
    pub max: f64,
}

impl Bracket {
    fn from(values: impl IntoIterator<Item = f64>) -> Self {
        let (mut n, mut lo, mut hi) = (0, f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            n += 1;
            lo = lo.min(v);
            hi = hi.max(v);
        }
        Self {
            samples: n,
            min: lo,
            max: hi,
        }
    }

    pub fn finite_positive(&self) -> bool {
        self.samples > 0 && self.min > 0.0 && self.max.is_finite()
    }
}

fn random_in_ball(rng: &mut RandomStream, d: usize, radius: f64) -> Vec<f64> {
    loop {
        let p: Vec<f64> = (0..d).map(|_| radius * (2.0 * rng.uniform_open() - 1.0)).collect();
        if norm(&p) < radius {
            return p;
        }
    }
}

/// Ratio `μ(ring) / (Σ|a_i|^α η / R^{1+α})` over random admissible configurations.
pub fn ring_measure_bracket(field: &dyn CoefficientField, alpha: StabilityIndex, samples: usize, seed: u64) -> Result<Bracket> {
    let d = field.dim();
    let a = alpha.get();
    let mut rng = RandomStream::new(seed, 11);
    let mut vals = Vec::with_capacity(samples);
    for _ in 0..samples {
        let big_r = 0.5 + 2.5 * rng.uniform_open();
        let r = 0.8 * big_r * rng.uniform_open().max(1e-3);
        let eta = r * rng.uniform_open();
        let y = random_in_ball(&mut rng, d, r);
        let z0 = vec![0.0; d];
        let m = mu_ring_measure(&y, field, &z0, big_r, eta, alpha)?;
        let weight: f64 = field.columns(&y).iter().map(|c| norm(c).powf(a)).sum();
        vals.push(m / (weight * eta / big_r.powf(1.0 + a)));
    }
    Ok(Bracket::from(vals))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ExteriorLemmaReport {
    pub c: f64,
    pub min_sum: f64,
    pub samples: usize,
    pub violations: usize,
    pub min_ratio: f64,
}

/// Checks exact exterior mass ≥ `c/(R - |x - z₀|)^α` on random `x`, `y ∈ B(x, r_x)`.
pub fn exterior_lemma(field: &dyn CoefficientField, alpha: StabilityIndex, samples: usize, seed: u64) -> Result<ExteriorLemmaReport> {
    let d = field.dim();
    let c = exterior_constant(field, alpha, 3.0, 200, 720, seed)?;
    let mut rng = RandomStream::new(seed, 12);
    let (mut violations, mut min_ratio) = (0, f64::INFINITY);
    for _ in 0..samples {
        let big_r = 0.5 + 2.0 * rng.uniform_open();
        let x = random_in_ball(&mut rng, d, big_r);
        let depth = big_r - norm(&x);
        let off = random_in_ball(&mut rng, d, depth / 3.0 * 0.999);
        let y: Vec<f64> = x.iter().zip(&off).map(|(a, b)| a + b).collect();
        let b = mu_exterior_lower(&x, &y, field, &vec![0.0; d], big_r, alpha, c.c)?;
        if !b.holds() {
            violations += 1;
        }
        min_ratio = min_ratio.min(b.exact / b.envelope);
    }
    Ok(ExteriorLemmaReport {
        c: c.c,
        min_sum: c.min_sum,
        samples,
        violations,
        min_ratio,
    })
}

// ---------------------------------------------------------------- Monte Carlo checks

fn spec_for(res: &Resolved, paths: usize, k: u64) -> SimulationSpec {
    res.simulation.with_paths(paths).with_seed(run_seed(res.simulation.master_seed, k))
}

/// Points at the given depths (multiples of `r`) along the configured direction.
pub fn points_at_depths(res: &Resolved, depths_rel: &[f64]) -> Result<Vec<Vec<f64>>> {
    depths_rel
        .iter()
        .map(|t| res.ball.point_at_depth(&res.config.start.direction, t * res.ball.radius()))
        .collect()
}

/// Geometric depths from `r` down to `last·r`.
pub fn geometric_depths(count: usize, last: f64) -> Vec<f64> {
    if count == 1 {
        return vec![1.0];
    }
    (0..count).map(|k| last.powf(k as f64 / (count - 1) as f64)).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeRow {
    pub depth: f64,
    pub exit_time: MeanEstimate,
    pub ratio: f64,
    pub ratio_se: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeReport {
    pub rows: Vec<EnvelopeRow>,
    pub bracket: Bracket,
    pub spread: f64,
}

/// `Êτ / (r² - |x - z|²)^{α/2}` across depths.
pub fn exit_time_envelope(res: &Resolved, field: &dyn CoefficientField, depths_rel: &[f64], paths: usize) -> Result<EnvelopeReport> {
    let pts = points_at_depths(res, depths_rel)?;
    let mut rows = Vec::new();
    for (k, x) in pts.iter().enumerate() {
        let ens = simulate_exit(x, &res.ball, field, res.alpha, &spec_for(res, paths, 100 + k as u64))?;
        let (ratio, ratio_se) = exit_time_ratio(&ens, res.alpha);
        rows.push(EnvelopeRow {
            depth: res.ball.delta(x),
            exit_time: estimate_exit_time_mean(&ens),
            ratio,
            ratio_se,
        });
    }
    let bracket = Bracket::from(rows.iter().map(|r| r.ratio));
    Ok(EnvelopeReport {
        spread: bracket.max / bracket.min,
        rows,
        bracket,
    })
}

/// Lévy-system identity for `V = ring(2r, r/4)` from the ball center.
pub fn green_identity(res: &Resolved, field: &dyn CoefficientField, paths: usize) -> Result<GreenCheck> {
    let r = res.ball.radius();
    estimate_green_integral(
        res.ball.center(),
        &res.ball,
        field,
        res.alpha,
        &spec_for(res, paths, 200),
        RadialSet::Ring {
            radius: 2.0 * r,
            eta: 0.25 * r,
        },
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct InteriorRingRow {
    pub depth: f64,
    pub probability: MeanEstimate,
    pub envelope: f64,
    pub ratio: f64,
}

/// `P^x(2r ≤ |X_τ - z| ≤ 2r + r/4)` against `(r² - |x - z|²)^{α/2} η / R^{1+α}`.
pub fn far_ring_envelope(res: &Resolved, depths_rel: &[f64], paths: usize) -> Result<Vec<InteriorRingRow>> {
    let r = res.ball.radius();
    let (big_r, eta) = (2.0 * r, 0.25 * r);
    let a = res.alpha.get();
    points_at_depths(res, depths_rel)?
        .iter()
        .enumerate()
        .map(|(k, x)| {
            let p = harmonic_eval(x, &res.ball, res.field.as_ref(), res.alpha, &spec_for(res, paths, 300 + k as u64), |y| {
                let dist = res.ball.dist_to_center(y);
                (dist >= big_r && dist <= big_r + eta) as u8 as f64
            })?;
            let rho = res.ball.dist_to_center(x);
            let envelope = (r * r - rho * rho).powf(0.5 * a) * eta / big_r.powf(1.0 + a);
            Ok(InteriorRingRow {
                depth: res.ball.delta(x),
                probability: p,
                envelope,
                ratio: p.mean / envelope,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct UniformExitRow {
    pub depth: f64,
    pub probability: MeanEstimate,
}

/// `P^x(X_{τ_{B_x}} ∈ D^c)` across depths; the minimum is the observed `p`.
pub fn uniform_exit(res: &Resolved, depths_rel: &[f64], paths: usize) -> Result<Vec<UniformExitRow>> {
    points_at_depths(res, depths_rel)?
        .iter()
        .enumerate()
        .map(|(k, x)| {
            Ok(UniformExitRow {
                depth: res.ball.delta(x),
                probability: uniform_exit_probability(
                    x,
                    &res.ball,
                    res.field.as_ref(),
                    res.alpha,
                    &spec_for(res, paths, 400 + k as u64),
                )?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundaryMassRow {
    pub kappa_rel_r: f64,
    pub mass: f64,
}

/// Mass of `[r, r + κ]` for `κ ∈ {10⁻¹, 10⁻², 10⁻³} r` from the ball center.
pub fn boundary_mass_study(res: &Resolved, paths: usize) -> Result<Vec<BoundaryMassRow>> {
    let ens = simulate_exit(res.ball.center(), &res.ball, res.field.as_ref(), res.alpha, &spec_for(res, paths, 500))?;
    let r = res.ball.radius();
    Ok([1e-1, 1e-2, 1e-3]
        .iter()
        .map(|&k| BoundaryMassRow {
            kappa_rel_r: k,
            mass: ens.boundary_mass(k * r),
        })
        .collect())
}

/// Sandwich `F_{b₂,Θ} ≤ u ≤ f_{b₁,θ}` for the exit probability into the barrier ring.
pub fn barrier_sandwich(res: &Resolved, b1: f64, b2: f64, depths_rel: &[f64], paths: usize) -> Result<Vec<SandwichPoint>> {
    let params = res.params;
    let ball = &res.ball;
    let alpha = res.alpha;
    let theta = build_theta(&params)?;
    let big = DampedTheta::new(params.r, params.eps)?;
    let w1 = params.with_b(b1).weight(alpha);
    let w2 = params.with_b(b2).weight(alpha);
    // g vanishes inside the ball, so only the weighted radial parts remain
    let upper = |x: &[f64]| Ok(w1 * f_theta_eval(x, &theta, ball, alpha));
    let lower = |x: &[f64]| Ok(w2 * f_cap_theta_eval(x, &big, ball, alpha));
    let pts = points_at_depths(res, depths_rel)?;
    let spec = spec_for(res, paths, 600);
    barrier_sandwich_check(
        &pts,
        ball,
        res.field.as_ref(),
        alpha,
        &spec,
        &upper,
        &lower,
        RadialSet::Ring {
            radius: params.r + params.eps,
            eta: params.eta_ring,
        },
    )
}

// ---------------------------------------------------------------- simulation and verdicts

#[derive(Debug, Clone, Serialize)]
pub struct SimulationRow {
    pub field: String,
    pub depth: f64,
    pub paths: usize,
    pub censored: usize,
    pub exit_time: MeanEstimate,
    pub mass_kappa_1e1: f64,
    pub mass_kappa_1e2: f64,
    pub mass_kappa_1e3: f64,
    pub overflow_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct SimulationRun {
    pub summary: SimulationRow,
    pub histogram: RadialHistogram,
    pub ensemble: crate::exit::ExitEnsemble,
}

/// One ensemble per configured start point under the primary field.
pub fn run_simulate(res: &Resolved) -> Result<Vec<SimulationRun>> {
    let r = res.ball.radius();
    res.start_points()?
        .iter()
        .enumerate()
        .map(|(k, x)| {
            let ens = simulate_exit(x, &res.ball, res.field.as_ref(), res.alpha, &spec_for(res, res.simulation.paths, k as u64))?;
            let hist = estimate_exit_density(&ens, &res.binning)?;
            Ok(SimulationRun {
                summary: SimulationRow {
                    field: res.field.name().into(),
                    depth: res.ball.delta(x),
                    paths: res.simulation.paths,
                    censored: ens.censored,
                    exit_time: estimate_exit_time_mean(&ens),
                    mass_kappa_1e1: ens.boundary_mass(0.1 * r),
                    mass_kappa_1e2: ens.boundary_mass(0.01 * r),
                    mass_kappa_1e3: ens.boundary_mass(0.001 * r),
                    overflow_fraction: hist.overflow_fraction(),
                },
                histogram: hist,
                ensemble: ens,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct FieldSpread {
    pub field: String,
    pub max_spread: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DensityVerdict {
    pub reports: Vec<RatioReport>,
    pub field_spreads: Vec<FieldSpread>,
    pub field_spread_ratio: f64,
    pub field_spread_ratio_max: f64,
    pub pass: bool,
}

/// Exit-radius histograms against `φ` for every field and start point.
pub fn run_density_verdict(res: &Resolved) -> Result<DensityVerdict> {
    let starts = res.start_points()?;
    let r = res.ball.radius();
    let mut reports = Vec::new();
    let mut field_spreads = Vec::new();
    for (fi, field) in res.all_fields().into_iter().enumerate() {
        let mut worst: f64 = 1.0;
        for (k, x) in starts.iter().enumerate() {
            let run = (fi * starts.len() + k) as u64;
            let ens = simulate_exit(x, &res.ball, field, res.alpha, &spec_for(res, res.simulation.paths, 1000 + run))?;
            let hist = estimate_exit_density(&ens, &res.binning)?;
            let depth = res.ball.delta(x);
            let phi = PhiProfile::new(depth, r, res.alpha)?;
            let rows = ratio_rows(&hist, &phi)?;
            let verdict = verdict_from_rows(&rows, res.config.verdict.spread_max);
            worst = worst.max(verdict.spread);
            reports.push(RatioReport {
                field: field.name().into(),
                depth,
                start: x.clone(),
                paths: res.simulation.paths,
                overflow_fraction: hist.overflow_fraction(),
                rows,
                verdict,
            });
        }
        field_spreads.push(FieldSpread {
            field: field.name().into(),
            max_spread: worst,
        });
    }
    let hi = field_spreads.iter().map(|f| f.max_spread).fold(f64::NEG_INFINITY, f64::max);
    let lo = field_spreads.iter().map(|f| f.max_spread).fold(f64::INFINITY, f64::min);
    let field_spread_ratio = hi / lo;
    let bound = res.config.verdict.field_spread_ratio_max;
    Ok(DensityVerdict {
        pass: reports.iter().all(|r| r.verdict.pass) && field_spread_ratio <= bound,
        reports,
        field_spreads,
        field_spread_ratio,
        field_spread_ratio_max: bound,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SmallRingRow {
    pub depth: f64,
    pub u: MeanEstimate,
    pub phi_integral: f64,
    pub ratio: f64,
    /// `û` with the ring width halved, over `û`.
    pub halved_width_ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SmallRingReport {
    pub eps: f64,
    pub eta_ring: f64,
    pub rows: Vec<SmallRingRow>,
    pub spread: f64,
    pub spread_max: f64,
    pub pass: bool,
}

/// `û(x) = P^x(X_τ ∈ ring)` against `∫_{ring} φ` for the configured start points.
pub fn run_small_ring_check(res: &Resolved) -> Result<SmallRingReport> {
    let (eps, eta) = (res.params.eps, res.params.eta_ring);
    let r = res.ball.radius();
    let tol = Tolerance {
        abs: 1e-14,
        rel: 1e-10,
        max_subdivisions: 2000,
    };
    let inner = r + eps;
    let mut rows = Vec::new();
    for (k, x) in res.start_points()?.iter().enumerate() {
        let ens = simulate_exit(x, &res.ball, res.field.as_ref(), res.alpha, &spec_for(res, res.simulation.paths, 700 + k as u64))?;
        let in_ring = |w: f64| {
            move |y: &[f64]| {
                let dd = res.ball.dist_to_center(y);
                (dd > inner && dd < inner + w) as u8 as f64
            }
        };
        let u = ens.mean_of(in_ring(eta));
        let half = ens.mean_of(in_ring(0.5 * eta));
        let depth = res.ball.delta(x);
        let phi = PhiProfile::new(depth, r, res.alpha)?;
        let phi_integral = phi.integral(inner, inner + eta, &tol)?;
        rows.push(SmallRingRow {
            depth,
            u,
            phi_integral,
            ratio: u.mean / phi_integral,
            halved_width_ratio: half.mean / u.mean,
        });
    }
    let bracket = Bracket::from(rows.iter().map(|r| r.ratio));
    let spread = bracket.max / bracket.min;
    let spread_max = res.config.verdict.spread_max;
    Ok(SmallRingReport {
        eps,
        eta_ring: eta,
        pass: bracket.finite_positive() && spread <= spread_max,
        rows,
        spread,
        spread_max,
    })
}

// ---------------------------------------------------------------- lemma bundle

#[derive(Debug, Clone, Serialize)]
pub struct AuditEntry {
    pub name: String,
    pub pass: bool,
    pub observed: serde_json::Value,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditBundle {
    pub entries: Vec<AuditEntry>,
}

impl AuditBundle {
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn summary_lines(&self) -> Vec<String> {
        self.entries
            .iter()
            .map(|e| match &e.error {
                Some(err) => format!("FAIL {} ({err})", e.name),
                None => format!("{} {}", if e.pass { "PASS" } else { "FAIL" }, e.name),
            })
            .collect()
    }
}

fn entry<T: Serialize>(name: &str, result: Result<(bool, T)>) -> AuditEntry {
    match result {
        Ok((pass, obs)) => AuditEntry {
            name: name.into(),
            pass,
            observed: serde_json::to_value(obs).unwrap_or(serde_json::Value::Null),
            error: None,
        },
        Err(e) => AuditEntry {
            name: name.into(),
            pass: false,
            observed: serde_json::Value::Null,
            error: Some(e.to_string()),
        },
    }
}

/// Everything that can be checked without the long density runs. Failures
/// are recorded per entry and do not stop the bundle.
pub fn run_lemma_audits(res: &Resolved) -> AuditBundle {
    let seed = res.simulation.master_seed;
    let paths = res.config.audit.uniform_exit_paths;
    let mut entries = Vec::new();
    let gen = generator_identities(res, res.config.audit.identity_grid_points);
    match gen {
        Ok(g) => {
            for c in g.checks {
                entries.push(entry(&c.name.clone(), Ok((c.pass, c))));
            }
        }
        Err(e) => entries.push(entry::<()>("generator_identities", Err(e))),
    }
    entries.push(entry(
        "theta_class",
        build_theta(&res.params).and_then(|t| {
            let a = theta_class_audit(&t, &res.params, res.config.audit.theta_grid_points)?;
            Ok((a.all_pass(), a))
        }),
    ));
    let audits = sign_audits(res);
    let (b1, b2) = match &audits {
        Ok(p) => (p.b1(), p.b2()),
        Err(_) => (None, None),
    };
    entries.push(entry(
        "sign_audits",
        audits.map(|p| {
            let obs = serde_json::json!({
                "b1": p.b1(), "b2": p.b2(),
                "b1_exponent": p.super_audit.ladder_exponent, "b2_exponent": p.sub_audit.ladder_exponent,
                "b1_refined_exponent": p.super_refined_exponent, "b2_refined_exponent": p.sub_refined_exponent,
                "super_regions": p.super_audit.regions, "sub_regions": p.sub_audit.regions,
            });
            (p.passed(), obs)
        }),
    ));
    entries.push(entry(
        "ring_measure_bracket",
        ring_measure_bracket(res.field.as_ref(), res.alpha, 10_000, seed).map(|b| (b.finite_positive(), b)),
    ));
    entries.push(entry(
        "exterior_lower_bound",
        exterior_lemma(res.field.as_ref(), res.alpha, 10_000, seed).map(|r| (r.violations == 0 && r.c > 0.0, r)),
    ));
    entries.push(entry(
        "far_ring_envelope",
        far_ring_envelope(res, &[1.0, 0.5, 0.1], paths).map(|rows| {
            let b = Bracket::from(rows.iter().map(|r| r.ratio));
            (b.finite_positive(), serde_json::json!({ "bracket": b, "rows": rows }))
        }),
    ));
    entries.push(entry(
        "uniform_exit",
        uniform_exit(res, &geometric_depths(res.config.audit.uniform_exit_points, 0.01), paths / 4).map(|rows| {
            let p = rows.iter().map(|r| r.probability.mean).fold(f64::INFINITY, f64::min);
            (p > 0.0, serde_json::json!({ "observed_p": p, "rows": rows }))
        }),
    ));
    entries.push(entry(
        "levy_system_identity",
        green_identity(res, res.field.as_ref(), paths * 5).map(|g| (g.agrees(3.0), g)),
    ));
    entries.push(entry(
        "exit_time_envelope",
        exit_time_envelope(res, res.field.as_ref(), &geometric_depths(10, 0.02), paths).map(|e| (e.spread <= 20.0, e)),
    ));
    entries.push(entry(
        "barrier_sandwich",
        match (b1, b2) {
            (Some(b1), Some(b2)) => barrier_sandwich(res, b1, b2, &geometric_depths(10, 0.02), paths)
                .map(|pts| (pts.iter().all(|p| p.passed), serde_json::json!({ "b1": b1, "b2": b2, "points": pts }))),
            _ => Err(crate::Error::NoLadderValue {
                lo: crate::quad::audit::LADDER_MIN_EXP,
                hi: crate::quad::audit::LADDER_MAX_EXP,
            }),
        },
    ));
    AuditBundle { entries }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::config::ExperimentConfig;

    #[test]
    fn grid_sizes_and_margins() {
        let b = Ball::centered(3, 2.0).unwrap();
        let g = interior_grid(&b, 100, 0.1);
        assert_eq!(g.len(), 100);
        assert!(g.iter().all(|x| b.delta(x) > 0.1 - 1e-12));
        assert_eq!(geometric_depths(10, 0.02).len(), 10);
        assert!((geometric_depths(10, 0.02)[9] - 0.02).abs() < 1e-15);
    }

    #[test]
    fn generator_identities_pass_by_default() {
        let res = ExperimentConfig::default().resolve().unwrap();
        let rep = generator_identities(&res, 25).unwrap();
        for c in &rep.checks {
            assert!(c.pass, "{c:?}");
        }
    }

    #[test]
    fn small_bracket_checks() {
        let res = ExperimentConfig::default().resolve().unwrap();
        let b = ring_measure_bracket(res.field.as_ref(), res.alpha, 500, 1).unwrap();
        assert!(b.finite_positive());
        let e = exterior_lemma(res.field.as_ref(), res.alpha, 500, 1).unwrap();
        assert_eq!(e.violations, 0);
    }
}
