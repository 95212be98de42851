//! Radial test functions `f(y) = P(|y - c|²)` with the break structure the
//! quadrature needs: support radius, interior joins and jumps.

use serde::{Deserialize, Serialize};

use crate::barrier::{DampedTheta, PiecewiseTheta};
use crate::geometry::Ball;
use crate::stable::StabilityIndex;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BreakKind {
    /// At least C² across the sphere.
    Smooth,
    /// Bounded with a jump.
    Jump,
    /// Behaves like `(R² - ρ)^exponent` from inside, zero outside.
    Edge { exponent: f64 },
}

impl BreakKind {
    pub fn is_hard(self) -> bool {
        !matches!(self, BreakKind::Smooth)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadialBreak {
    pub radius: f64,
    pub kind: BreakKind,
}

/// A function of `ρ = |y - c|²` vanishing for `ρ ≥ R_s²`.
pub trait RadialProfile: Send + Sync {
    fn center(&self) -> &[f64];
    fn support_radius(&self) -> f64;
    fn support_kind(&self) -> BreakKind;
    /// Spheres strictly inside the support where the profile is not analytic.
    fn interior_breaks(&self) -> Vec<RadialBreak>;
    /// `P(ρ)` given `ρ` and `gap = R_s² - ρ > 0`.
    fn value(&self, rho: f64, gap: f64) -> f64;
    /// `(P'(ρ), P''(ρ))` when available.
    fn derivatives(&self, rho: f64, gap: f64) -> Option<(f64, f64)>;

    fn eval_point(&self, y: &[f64]) -> f64 {
        let rho: f64 = y.iter().zip(self.center()).map(|(a, c)| (a - c) * (a - c)).sum();
        let gap = self.support_radius().powi(2) - rho;
        if gap > 0.0 {
            self.value(rho, gap)
        } else {
            0.0
        }
    }
}

fn power_derivs(gap: f64, a: f64) -> [f64; 3] {
    // d/dρ of gap^a with gap = R² - ρ
    let p = gap.powf(a);
    [p, -a * p / gap, a * (a - 1.0) * p / (gap * gap)]
}

/// `λ(y) = (r² - |y - c|²)^{α/2}`.
#[derive(Debug, Clone)]
pub struct LambdaProfile {
    center: Vec<f64>,
    r: f64,
    half_alpha: f64,
}

impl LambdaProfile {
    pub fn new(ball: &Ball, alpha: StabilityIndex) -> Self {
        Self {
            center: ball.center().to_vec(),
            r: ball.radius(),
            half_alpha: 0.5 * alpha.get(),
        }
    }
}

impl RadialProfile for LambdaProfile {
    fn center(&self) -> &[f64] {
        &self.center
    }
    fn support_radius(&self) -> f64 {
        self.r
    }
    fn support_kind(&self) -> BreakKind {
        BreakKind::Edge { exponent: self.half_alpha }
    }
    fn interior_breaks(&self) -> Vec<RadialBreak> {
        Vec::new()
    }
    fn value(&self, _rho: f64, gap: f64) -> f64 {
        gap.powf(self.half_alpha)
    }
    fn derivatives(&self, _rho: f64, gap: f64) -> Option<(f64, f64)> {
        let d = power_derivs(gap, self.half_alpha);
        Some((d[1], d[2]))
    }
}

/// `h(y) = (r² - |y - c|²)^{α/2 - 1}`.
#[derive(Debug, Clone)]
pub struct HProfile {
    center: Vec<f64>,
    r: f64,
    exponent: f64,
}

impl HProfile {
    pub fn new(ball: &Ball, alpha: StabilityIndex) -> Self {
        Self {
            center: ball.center().to_vec(),
            r: ball.radius(),
            exponent: 0.5 * alpha.get() - 1.0,
        }
    }
}

impl RadialProfile for HProfile {
    fn center(&self) -> &[f64] {
        &self.center
    }
    fn support_radius(&self) -> f64 {
        self.r
    }
    fn support_kind(&self) -> BreakKind {
        BreakKind::Edge { exponent: self.exponent }
    }
    fn interior_breaks(&self) -> Vec<RadialBreak> {
        Vec::new()
    }
    fn value(&self, _rho: f64, gap: f64) -> f64 {
        gap.powf(self.exponent)
    }
    fn derivatives(&self, _rho: f64, gap: f64) -> Option<(f64, f64)> {
        let d = power_derivs(gap, self.exponent);
        Some((d[1], d[2]))
    }
}

fn product_derivs(l: [f64; 3], t: [f64; 3]) -> (f64, f64) {
    (l[1] * t[0] + l[0] * t[1], l[2] * t[0] + 2.0 * l[1] * t[1] + l[0] * t[2])
}

/// `f_θ(y) = λ(y) θ(|y - c|²)`.
#[derive(Debug, Clone)]
pub struct FThetaProfile {
    center: Vec<f64>,
    theta: PiecewiseTheta,
    half_alpha: f64,
}

impl FThetaProfile {
    pub fn new(ball: &Ball, theta: PiecewiseTheta, alpha: StabilityIndex) -> Self {
        Self {
            center: ball.center().to_vec(),
            theta,
            half_alpha: 0.5 * alpha.get(),
        }
    }
}

impl RadialProfile for FThetaProfile {
    fn center(&self) -> &[f64] {
        &self.center
    }
    fn support_radius(&self) -> f64 {
        self.theta.r
    }
    fn support_kind(&self) -> BreakKind {
        BreakKind::Edge { exponent: self.half_alpha }
    }
    fn interior_breaks(&self) -> Vec<RadialBreak> {
        [self.theta.t0, self.theta.t1, self.theta.t2]
            .iter()
            .map(|t| RadialBreak {
                radius: t.sqrt(),
                kind: BreakKind::Smooth,
            })
            .collect()
    }
    fn value(&self, rho: f64, gap: f64) -> f64 {
        gap.powf(self.half_alpha) * self.theta.eval_gap(rho, gap)[0]
    }
    fn derivatives(&self, rho: f64, gap: f64) -> Option<(f64, f64)> {
        Some(product_derivs(power_derivs(gap, self.half_alpha), self.theta.eval_gap(rho, gap)))
    }
}

/// `F_Θ(y) = λ(y) Θ(|y - c|²)`.
#[derive(Debug, Clone)]
pub struct FCapThetaProfile {
    center: Vec<f64>,
    big: DampedTheta,
    half_alpha: f64,
}

impl FCapThetaProfile {
    pub fn new(ball: &Ball, big: DampedTheta, alpha: StabilityIndex) -> Self {
        Self {
            center: ball.center().to_vec(),
            big,
            half_alpha: 0.5 * alpha.get(),
        }
    }
}

impl RadialProfile for FCapThetaProfile {
    fn center(&self) -> &[f64] {
        &self.center
    }
    fn support_radius(&self) -> f64 {
        self.big.r
    }
    fn support_kind(&self) -> BreakKind {
        BreakKind::Edge { exponent: self.half_alpha }
    }
    fn interior_breaks(&self) -> Vec<RadialBreak> {
        vec![RadialBreak {
            radius: self.big.t0.sqrt(),
            kind: BreakKind::Smooth,
        }]
    }
    fn value(&self, rho: f64, gap: f64) -> f64 {
        gap.powf(self.half_alpha) * self.big.eval_gap(rho, gap)[0]
    }
    fn derivatives(&self, rho: f64, gap: f64) -> Option<(f64, f64)> {
        Some(product_derivs(power_derivs(gap, self.half_alpha), self.big.eval_gap(rho, gap)))
    }
}

/// Indicator of the open ring `inner < |y - c| < outer`.
#[derive(Debug, Clone)]
pub struct RingProfile {
    center: Vec<f64>,
    inner: f64,
    outer: f64,
}

impl RingProfile {
    pub fn new(center: &[f64], inner: f64, outer: f64) -> Self {
        Self {
            center: center.to_vec(),
            inner,
            outer,
        }
    }

    /// The ring `r + ε < |y - z| < r + ε + η` around `ball`.
    pub fn barrier_ring(ball: &Ball, eps: f64, eta_ring: f64) -> Self {
        let inner = ball.radius() + eps;
        Self::new(ball.center(), inner, inner + eta_ring)
    }
}

impl RadialProfile for RingProfile {
    fn center(&self) -> &[f64] {
        &self.center
    }
    fn support_radius(&self) -> f64 {
        self.outer
    }
    fn support_kind(&self) -> BreakKind {
        BreakKind::Jump
    }
    fn interior_breaks(&self) -> Vec<RadialBreak> {
        vec![RadialBreak {
            radius: self.inner,
            kind: BreakKind::Jump,
        }]
    }
    fn value(&self, rho: f64, _gap: f64) -> f64 {
        if rho > self.inner * self.inner {
            1.0
        } else {
            0.0
        }
    }
    fn derivatives(&self, _rho: f64, _gap: f64) -> Option<(f64, f64)> {
        Some((0.0, 0.0))
    }
}
