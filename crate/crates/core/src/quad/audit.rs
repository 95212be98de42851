//! Sign audits for the barriers `f_{b,θ}` and `F_{b,Θ}` in the reduced
//! direction `e_d`, and the closed form of `𝓛_{e_d} g`.
//!
//! Both barriers are `w(b) f + g` with `w(b)` linear in `b`, so `𝓛 f` and
//! `𝓛 g` are computed once per grid point and the ladder search is a scan.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use super::profile::{FCapThetaProfile, FThetaProfile, RadialProfile};
use super::{pv_radial, GeneratorValue, QuadratureSpec};
use crate::barrier::{barrier_weight, BarrierParams, DampedTheta, PiecewiseTheta};
use crate::error::{invalid, Error, Result};
use crate::geometry::{shell_q, Ball};
use crate::stable::{compute_a_alpha, StabilityIndex};

/// Ladder `b = 2^k` for `k` in this range.
pub const LADDER_MIN_EXP: i32 = -20;
pub const LADDER_MAX_EXP: i32 = 20;

/// Chord half-lengths of the spheres of radius `r + ε` and `r + ε + η`
/// along `e_d` through `x`, returned with `x_d` (all relative to the center).
fn ring_chords(x: &[f64], ball: &Ball, eps: f64, eta_ring: f64) -> (f64, f64, f64, f64) {
    let d = x.len();
    let y: Vec<f64> = x.iter().zip(ball.center()).map(|(a, c)| a - c).collect();
    let tilde: f64 = y[..d - 1].iter().map(|t| t * t).sum();
    let xd = y[d - 1];
    let r3 = ball.radius() + eps;
    let r4 = r3 + eta_ring;
    ((r3 * r3 - tilde).sqrt(), (r4 * r4 - tilde).sqrt(), xd, tilde + xd * xd)
}

/// Exact `𝓛_{e_d} g(x)` for the ring indicator `g`, `x` inside the ball.
#[allow(non_snake_case)]
pub fn Lg_closed_form(x: &[f64], ball: &Ball, eps: f64, eta_ring: f64, alpha: StabilityIndex) -> Result<f64> {
    if x.len() != ball.dim() {
        return Err(invalid("x", "dimension differs from the ball"));
    }
    if !(ball.delta(x) > 0.0) {
        return Err(Error::OutsideDomain("x must lie in the open ball".into()));
    }
    let a = alpha.get();
    let (s3, s4, xd, rho) = ring_chords(x, ball, eps, eta_ring);
    let r3 = ball.radius() + eps;
    let r4 = r3 + eta_ring;
    // S - x_d = (R² - |x|²)/(S + x_d) avoids cancellation when x_d ≈ S
    let dist = |s: f64, rr: f64, sign: f64| {
        let plus = s + sign * xd;
        if plus > 0.5 * s {
            (rr * rr - rho) / plus
        } else {
            s - sign * xd
        }
    };
    let m3 = dist(s3, r3, 1.0);
    let m4 = dist(s4, r4, 1.0);
    let p3 = dist(s3, r3, -1.0);
    let p4 = dist(s4, r4, -1.0);
    let sum = m3.powf(-a) - m4.powf(-a) + p3.powf(-a) - p4.powf(-a);
    Ok(compute_a_alpha(alpha) / a * sum)
}

/// The scale `(S₂^α ∨ q^{α/2}) / q^{1+α/2} · (ε/δ ∧ 1)^{1+α}` that brackets `𝓛_{e_d} g`.
pub fn lg_shape_scale(x: &[f64], ball: &Ball, eps: f64, alpha: StabilityIndex) -> f64 {
    let a = alpha.get();
    let r = ball.radius();
    let d = x.len();
    let y: Vec<f64> = x.iter().zip(ball.center()).map(|(p, c)| p - c).collect();
    let tilde: f64 = y[..d - 1].iter().map(|t| t * t).sum();
    let s2 = (r * r - tilde).max(0.0).sqrt();
    let q = shell_q(r, eps);
    let delta = ball.delta(x);
    s2.powf(a).max(q.powf(0.5 * a)) / q.powf(1.0 + 0.5 * a) * (eps / delta).min(1.0).powf(1.0 + a)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum AuditRegion {
    /// `|x| < r - ε`.
    Inner,
    /// `r - ε ≤ |x| ≤ r - ε + ε/N`.
    Transition,
    /// `r - ε + ε/N < |x| < r`.
    Outer,
}

impl AuditRegion {
    pub fn classify(dist: f64, r: f64, eps: f64, n: f64) -> Self {
        if dist < r - eps {
            AuditRegion::Inner
        } else if dist <= r - eps + eps / n {
            AuditRegion::Transition
        } else {
            AuditRegion::Outer
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            AuditRegion::Inner => "inner",
            AuditRegion::Transition => "transition",
            AuditRegion::Outer => "outer",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AuditGridSpec {
    pub angles: usize,
    pub inner_radii: usize,
    pub transition_radii: usize,
    pub outer_radii: usize,
    /// Closest approach to the sphere, as a fraction of `r`.
    pub margin_fraction: f64,
}

impl Default for AuditGridSpec {
    fn default() -> Self {
        Self {
            angles: 10,
            inner_radii: 8,
            transition_radii: 4,
            outer_radii: 8,
            margin_fraction: 1e-3,
        }
    }
}

impl AuditGridSpec {
    pub fn refined(self, factor: usize) -> Self {
        Self {
            inner_radii: self.inner_radii * factor,
            transition_radii: self.transition_radii * factor,
            outer_radii: self.outer_radii * factor,
            ..self
        }
    }

    pub fn len(&self) -> usize {
        self.angles * (self.inner_radii + self.transition_radii + self.outer_radii)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditPoint {
    pub x: Vec<f64>,
    pub radius: f64,
    pub region: AuditRegion,
}

/// Points in the `(e_1, e_d)` half-plane `x_d ≥ 0`, `x_1 ≥ 0`, radii split by region.
pub fn audit_points(ball: &Ball, eps: f64, n: f64, grid: &AuditGridSpec) -> Result<Vec<AuditPoint>> {
    let r = ball.radius();
    let d = ball.dim();
    let margin = grid.margin_fraction * r;
    let outer_top = eps - eps / n;
    if grid.angles == 0 || !(margin > 0.0 && margin < outer_top) {
        return Err(invalid("grid", "need angles > 0 and 0 < margin < eps - eps/N"));
    }
    let mut radii = Vec::new();
    for k in 0..grid.inner_radii {
        radii.push((r - eps) * k as f64 / grid.inner_radii as f64);
    }
    let tr = grid.transition_radii.max(1);
    for k in 0..grid.transition_radii {
        let frac = if tr == 1 { 0.5 } else { k as f64 / (tr - 1) as f64 };
        radii.push(r - eps + frac * eps / n);
    }
    for k in 0..grid.outer_radii {
        let t = (k + 1) as f64 / grid.outer_radii as f64;
        radii.push(r - outer_top * (margin / outer_top).powf(t));
    }
    let mut out = Vec::with_capacity(radii.len() * grid.angles);
    for &rad in &radii {
        for j in 0..grid.angles {
            let phi = std::f64::consts::FRAC_PI_2 * j as f64 / (grid.angles.max(2) - 1) as f64;
            let mut x = ball.center().to_vec();
            x[0] += rad * phi.cos();
            x[d - 1] += rad * phi.sin();
            out.push(AuditPoint {
                x,
                radius: rad,
                region: AuditRegion::classify(rad, r, eps, n),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditKind {
    /// `𝓛 f_{b,θ} ≤ 0`, smallest admissible `b`.
    Super,
    /// `𝓛 F_{b,Θ} ≥ 0`, largest admissible `b`.
    Sub,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointMargin {
    pub x: Vec<f64>,
    pub radius: f64,
    pub region: AuditRegion,
    pub lf: f64,
    pub lf_error: f64,
    pub lg: f64,
    pub lg_error: f64,
    /// `w(b) 𝓛f + 𝓛g` at the reported `b`.
    pub value: f64,
    pub tolerance: f64,
    /// Signed slack: positive means the inequality holds.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionSummary {
    pub region: AuditRegion,
    pub points: usize,
    pub min_margin: f64,
    /// Extreme admissible `b` on this region alone.
    pub region_b: Option<f64>,
    pub max_lf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignAuditReport {
    pub kind: AuditKind,
    pub alpha: f64,
    pub r: f64,
    pub eps: f64,
    pub eta_ring: f64,
    pub n: f64,
    pub b: Option<f64>,
    pub ladder_exponent: Option<i32>,
    pub weight: Option<f64>,
    pub regions: Vec<RegionSummary>,
    pub points: Vec<PointMargin>,
}

impl SignAuditReport {
    pub fn passed(&self) -> bool {
        self.b.is_some() && self.points.iter().all(|p| p.margin >= 0.0)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("x1,xd,radius,region,lf,lf_error,lg,lg_error,value,tolerance,margin\n");
        for p in &self.points {
            let _ = writeln!(
                s,
                "{:.17e},{:.17e},{:.17e},{},{:.17e},{:.6e},{:.17e},{:.6e},{:.17e},{:.6e},{:.17e}",
                p.x[0],
                p.x[p.x.len() - 1],
                p.radius,
                p.region.label(),
                p.lf,
                p.lf_error,
                p.lg,
                p.lg_error,
                p.value,
                p.tolerance,
                p.margin
            );
        }
        s
    }
}

/// Relative slack allowed on top of the quadrature error estimates.
pub const AUDIT_REL_TOL: f64 = 1e-9;

struct PointTerms {
    point: AuditPoint,
    lf: GeneratorValue,
    lg: f64,
}

fn point_terms(
    profile: &dyn RadialProfile,
    points: Vec<AuditPoint>,
    ball: &Ball,
    params: &BarrierParams,
    alpha: StabilityIndex,
    spec: &QuadratureSpec,
) -> Result<Vec<PointTerms>> {
    let d = ball.dim();
    let mut ed = vec![0.0; d];
    ed[d - 1] = 1.0;
    points
        .into_par_iter()
        .map(|point| {
            let lf = pv_radial(profile, &point.x, &ed, alpha, spec)?;
            let lg = Lg_closed_form(&point.x, ball, params.eps, params.eta_ring, alpha)?;
            Ok(PointTerms { point, lf, lg })
        })
        .collect()
}

fn evaluate(t: &PointTerms, w: f64, kind: AuditKind) -> PointMargin {
    let lg_error = f64::EPSILON * 8.0 * t.lg.abs();
    let value = w * t.lf.value + t.lg;
    let tolerance =
        AUDIT_REL_TOL * (w * t.lf.value.abs() + t.lg.abs()) + w * t.lf.error_estimate + lg_error;
    let margin = match kind {
        AuditKind::Super => tolerance - value,
        AuditKind::Sub => value + tolerance,
    };
    PointMargin {
        x: t.point.x.clone(),
        radius: t.point.radius,
        region: t.point.region,
        lf: t.lf.value,
        lf_error: t.lf.error_estimate,
        lg: t.lg,
        lg_error,
        value,
        tolerance,
        margin,
    }
}

fn ladder(kind: AuditKind) -> Vec<i32> {
    let up: Vec<i32> = (LADDER_MIN_EXP..=LADDER_MAX_EXP).collect();
    match kind {
        AuditKind::Super => up,
        AuditKind::Sub => up.into_iter().rev().collect(),
    }
}

fn search(terms: &[&PointTerms], params: &BarrierParams, alpha: StabilityIndex, kind: AuditKind) -> Option<i32> {
    ladder(kind).into_iter().find(|&k| {
        let w = barrier_weight(2f64.powi(k), params.r, params.eps, params.eta_ring, alpha);
        terms.iter().all(|t| evaluate(t, w, kind).margin >= 0.0)
    })
}

fn build_report(
    kind: AuditKind,
    terms: Vec<PointTerms>,
    params: &BarrierParams,
    alpha: StabilityIndex,
) -> SignAuditReport {
    let all: Vec<&PointTerms> = terms.iter().collect();
    let found = search(&all, params, alpha, kind);
    // failures are reported at the ladder end that comes closest
    let report_k = found.unwrap_or(match kind {
        AuditKind::Super => LADDER_MAX_EXP,
        AuditKind::Sub => LADDER_MIN_EXP,
    });
    let w = barrier_weight(2f64.powi(report_k), params.r, params.eps, params.eta_ring, alpha);
    let points: Vec<PointMargin> = terms.iter().map(|t| evaluate(t, w, kind)).collect();
    let mut regions = Vec::new();
    for region in [AuditRegion::Inner, AuditRegion::Transition, AuditRegion::Outer] {
        let sub: Vec<&PointTerms> = terms.iter().filter(|t| t.point.region == region).collect();
        if sub.is_empty() {
            continue;
        }
        let margins = points.iter().filter(|p| p.region == region).map(|p| p.margin);
        regions.push(RegionSummary {
            region,
            points: sub.len(),
            min_margin: margins.fold(f64::INFINITY, f64::min),
            region_b: search(&sub, params, alpha, kind).map(|k| 2f64.powi(k)),
            max_lf: sub.iter().map(|t| t.lf.value).fold(f64::NEG_INFINITY, f64::max),
        });
    }
    SignAuditReport {
        kind,
        alpha: alpha.get(),
        r: params.r,
        eps: params.eps,
        eta_ring: params.eta_ring,
        n: params.n,
        b: found.map(|k| 2f64.powi(k)),
        ladder_exponent: found,
        weight: found.map(|_| w),
        regions,
        points,
    }
}

fn check_setup(params: &BarrierParams, ball: &Ball) -> Result<()> {
    params.validate()?;
    if (params.r - ball.radius()).abs() > 1e-12 * params.r {
        return Err(invalid("ball", "radius differs from the barrier parameters"));
    }
    if ball.dim() < 2 {
        return Err(invalid("ball", "dimension must be at least 2"));
    }
    Ok(())
}

/// Smallest `b = 2^k` with `𝓛_{e_d} f_{b,θ} ≤ tol` on the grid.
pub fn sign_audit_super(
    theta: &PiecewiseTheta,
    params: &BarrierParams,
    ball: &Ball,
    alpha: StabilityIndex,
    grid: &AuditGridSpec,
    spec: &QuadratureSpec,
) -> Result<SignAuditReport> {
    check_setup(params, ball)?;
    let profile = FThetaProfile::new(ball, theta.clone(), alpha);
    let points = audit_points(ball, params.eps, params.n, grid)?;
    let terms = point_terms(&profile, points, ball, params, alpha, spec)?;
    Ok(build_report(AuditKind::Super, terms, params, alpha))
}

/// Largest `b = 2^k` with `𝓛_{e_d} F_{b,Θ} ≥ -tol` on the grid.
pub fn sign_audit_sub(
    params: &BarrierParams,
    ball: &Ball,
    alpha: StabilityIndex,
    grid: &AuditGridSpec,
    spec: &QuadratureSpec,
) -> Result<SignAuditReport> {
    check_setup(params, ball)?;
    let big = DampedTheta::new(params.r, params.eps)?;
    let profile = FCapThetaProfile::new(ball, big, alpha);
    let points = audit_points(ball, params.eps, params.n, grid)?;
    let terms = point_terms(&profile, points, ball, params, alpha, spec)?;
    Ok(build_report(AuditKind::Sub, terms, params, alpha))
}

/// Whether two ladder outcomes agree to within one step.
pub fn ladder_stable(a: Option<i32>, b: Option<i32>) -> bool {
    matches!((a, b), (Some(x), Some(y)) if (x - y).abs() <= 1)
}
