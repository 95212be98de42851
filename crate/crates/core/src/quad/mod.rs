//! Principal-value evaluation of the directional operator
//! `𝓛_v f(x) = 𝒜_α ∫_0^∞ [f(x+vw) + f(x-vw) - 2f(x)] w^{-1-α} dw`
//! and of the full generator `Σ_i 𝓛_{a_i(x)} f(x)`.
//!
//! Radial test functions are integrated exactly up to quadrature error: the
//! line `x + vw` is cut at its crossings with every break sphere, the core
//! `[0, δ]` uses the symmetric second difference under `w = δ s^{1/(2-α)}`,
//! and edge blowups `(R² - ρ)^γ` are flattened by a power substitution.

pub mod audit;
pub mod gk;
pub mod profile;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{dot, norm, CoefficientField};
use crate::stable::{compute_a_alpha, StabilityIndex};
use gk::{integrate_pieces, integrate_right_singular, integrate_with_floor, Estimate, Tolerance};
use profile::{BreakKind, RadialProfile};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum TailPolicy {
    /// Requires a compactly supported radial function; tails are exact.
    ExactCompactSupport,
    /// Integrate the second difference on `[0, cutoff]` and drop the rest.
    Truncate { cutoff: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub tolerance: Tolerance,
    /// Core half-width as a fraction of the distance to the nearest jump or edge.
    pub inner_fraction: f64,
    /// Core half-width for functions without break information.
    pub generic_inner_radius: f64,
    /// Below `taylor_fraction * δ` the second difference is replaced by `f''(0) w²`.
    pub taylor_fraction: f64,
    pub tail: TailPolicy,
    pub edge_substitution: bool,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            tolerance: Tolerance::default(),
            inner_fraction: 0.5,
            generic_inner_radius: 0.05,
            taylor_fraction: 1e-3,
            tail: TailPolicy::ExactCompactSupport,
            edge_substitution: true,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        self.tolerance.validate()?;
        if !(self.inner_fraction > 0.0 && self.inner_fraction < 1.0) {
            return Err(invalid("inner_fraction", "must lie in (0, 1)"));
        }
        if !(self.generic_inner_radius > 0.0) {
            return Err(invalid("generic_inner_radius", "must be positive"));
        }
        if !(self.taylor_fraction >= 0.0 && self.taylor_fraction < 1.0) {
            return Err(invalid("taylor_fraction", "must lie in [0, 1)"));
        }
        if let TailPolicy::Truncate { cutoff } = self.tail {
            if !(cutoff > 0.0) {
                return Err(invalid("cutoff", "truncation cutoff must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct GeneratorValue {
    pub value: f64,
    pub error_estimate: f64,
    pub subdivisions_used: usize,
}

impl GeneratorValue {
    fn from_estimate(e: Estimate, scale: f64) -> Self {
        Self {
            value: e.value * scale,
            error_estimate: e.error * scale.abs(),
            subdivisions_used: e.subdivisions,
        }
    }

    pub fn add(self, o: GeneratorValue) -> Self {
        Self {
            value: self.value + o.value,
            error_estimate: self.error_estimate + o.error_estimate,
            subdivisions_used: self.subdivisions_used + o.subdivisions_used,
        }
    }
}

/// A bounded Borel function on `ℝ^d`, optionally with radial structure.
pub trait ScalarField: Sync {
    fn eval(&self, y: &[f64]) -> f64;
    fn as_radial(&self) -> Option<&dyn RadialProfile> {
        None
    }
}

impl<T: RadialProfile> ScalarField for T {
    fn eval(&self, y: &[f64]) -> f64 {
        self.eval_point(y)
    }
    fn as_radial(&self) -> Option<&dyn RadialProfile> {
        Some(self)
    }
}

/// Wraps a closure as a [`ScalarField`] without radial structure.
pub struct FnField<F>(pub F);

impl<F: Fn(&[f64]) -> f64 + Sync> ScalarField for FnField<F> {
    fn eval(&self, y: &[f64]) -> f64 {
        (self.0)(y)
    }
}

/// Line `w ↦ P(|y + vw|²)` with the support-sphere gap kept in factored form.
struct RadialLine<'a> {
    p: &'a dyn RadialProfile,
    rs2: f64,
    c: f64,
    w_minus: f64,
    w_plus: f64,
}

/// Roots `w₋ < w₊` of `|y + vw|² = R²`, via the product formula for stability.
pub(crate) fn line_roots(b: f64, c: f64, rho0: f64, r2: f64) -> Option<(f64, f64)> {
    let disc = b * b - c * (rho0 - r2);
    if !(disc > 0.0) {
        return None;
    }
    let s = disc.sqrt();
    let prod = (rho0 - r2) / c;
    if b >= 0.0 {
        let wm = (-b - s) / c;
        let wp = if wm != 0.0 { prod / wm } else { (-b + s) / c };
        Some((wm, wp))
    } else {
        let wp = (-b + s) / c;
        let wm = if wp != 0.0 { prod / wp } else { (-b - s) / c };
        Some((wm, wp))
    }
}

impl RadialLine<'_> {
    fn from_gap(&self, gap: f64) -> f64 {
        if gap <= 0.0 {
            return 0.0;
        }
        self.p.value(self.rs2 - gap, gap)
    }

    fn at(&self, w: f64) -> f64 {
        let gap = self.c * (self.w_plus - w) * (w - self.w_minus);
        self.from_gap(gap)
    }

    /// Value at distance `t` inside either root; the gap is symmetric in the side.
    fn inside_root(&self, t: f64) -> f64 {
        let gap = self.c * t * ((self.w_plus - self.w_minus) - t);
        self.from_gap(gap)
    }
}

/// The second difference loses about `ε|f(x)|/w²` to rounding; integrated over the
/// core above the Taylor cutoff this is the level below which refinement is futile.
fn rounding_floor(taylor_fraction: f64, qexp: f64, f0: f64, delta: f64, a: f64) -> f64 {
    let s_t = taylor_fraction.max(1e-6).powf(1.0 / qexp);
    16.0 * f64::EPSILON * qexp * f0.abs() * delta.powf(-a) * (s_t.powf(1.0 - 2.0 * qexp) - 1.0) / (2.0 * qexp - 1.0)
}

fn constants(alpha: StabilityIndex) -> (f64, f64) {
    (compute_a_alpha(alpha), alpha.get())
}

/// `𝓛_v f(x)` for a radial, compactly supported profile.
pub fn pv_radial(
    p: &dyn RadialProfile,
    x: &[f64],
    v: &[f64],
    alpha: StabilityIndex,
    spec: &QuadratureSpec,
) -> Result<GeneratorValue> {
    spec.validate()?;
    let d = p.center().len();
    if x.len() != d || v.len() != d {
        return Err(invalid("dimension", "x, v and the profile center must agree"));
    }
    let c = dot(v, v);
    if !(c > 0.0) {
        return Err(invalid("v", "direction must be nonzero"));
    }
    let (a_const, a) = constants(alpha);
    let y: Vec<f64> = x.iter().zip(p.center()).map(|(xi, ci)| xi - ci).collect();
    let b = dot(&y, v);
    let rho0 = dot(&y, &y);
    let rs = p.support_radius();
    let rs2 = rs * rs;
    if !(rho0 < rs2) {
        return Err(Error::OutsideDomain(format!(
            "x must lie inside the support sphere of radius {rs}"
        )));
    }
    let (w_minus, w_plus) = line_roots(b, c, rho0, rs2).expect("interior point has two crossings");
    let line = RadialLine {
        p,
        rs2,
        c,
        w_minus,
        w_plus,
    };

    // feature positions along the line
    let mut hard: Vec<f64> = vec![w_minus, w_plus];
    let mut smooth: Vec<f64> = Vec::new();
    for br in p.interior_breaks() {
        if let Some((m, pl)) = line_roots(b, c, rho0, br.radius * br.radius) {
            let target = if br.kind.is_hard() { &mut hard } else { &mut smooth };
            target.push(m);
            target.push(pl);
        }
    }
    let nearest_hard = hard.iter().map(|w| w.abs()).fold(f64::INFINITY, f64::min);
    if !(nearest_hard > 0.0) {
        return Err(Error::OutsideDomain("x lies on a discontinuity sphere".into()));
    }
    let delta = spec.inner_fraction * nearest_hard;

    let gap0 = c * w_plus * (-w_minus);
    let f0 = line.from_gap(gap0);
    let tail_scale = f0.abs() * delta.powf(-a) / a;
    let floor = spec.tolerance.rel * tail_scale;
    let tol = &spec.tolerance;

    // core: ∫_0^δ D(w) w^{-1-α} dw with w = δ s^q, q = 1/(2 - α)
    let second = p.derivatives(rho0, gap0).map(|(d1, d2)| 4.0 * b * b * d2 + 2.0 * c * d1);
    let w_taylor = spec.taylor_fraction * delta;
    let qexp = 1.0 / (2.0 - a);
    let pref = qexp * delta.powf(2.0 - a);
    let core_fn = |s: f64| {
        let w = delta * s.powf(qexp);
        let ratio = match second {
            Some(f2) if w < w_taylor => f2,
            _ => (line.at(w) + line.at(-w) - 2.0 * f0) / (w * w),
        };
        pref * ratio
    };
    let core_cuts: Vec<f64> = smooth
        .iter()
        .map(|w| w.abs())
        .filter(|w| *w > 0.0 && *w < delta)
        .map(|w| (w / delta).powf(1.0 / qexp))
        .collect();
    let noise = rounding_floor(spec.taylor_fraction, qexp, f0, delta, a);
    let core = integrate_pieces(&core_fn, 0.0, 1.0, &core_cuts, tol, floor.max(noise))?;

    // one-sided far pieces on [δ, edge]
    let mut far = Estimate::default();
    for side in [1.0f64, -1.0] {
        let edge = if side > 0.0 { w_plus } else { -w_minus };
        let mut cuts: Vec<f64> = hard
            .iter()
            .chain(smooth.iter())
            .map(|w| side * w)
            .filter(|u| *u > delta && *u < edge)
            .collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let g = |u: f64| line.at(side * u) * u.powf(-1.0 - a);
        let last = cuts.last().copied().unwrap_or(delta);
        match p.support_kind() {
            BreakKind::Edge { exponent } if spec.edge_substitution => {
                far = far.add(integrate_pieces(&g, delta, last, &cuts, tol, floor)?);
                let h = |t: f64| line.inside_root(t) * (edge - t).powf(-1.0 - a);
                far = far.add(integrate_right_singular(h, last, edge, exponent, tol, floor)?);
            }
            _ => {
                far = far.add(integrate_pieces(&g, delta, edge, &cuts, tol, floor)?);
            }
        }
    }

    let tail = -2.0 * f0 * delta.powf(-a) / a;
    let total = Estimate {
        value: core.value + far.value + tail,
        error: core.error + far.error + f64::EPSILON * tail.abs(),
        subdivisions: core.subdivisions + far.subdivisions,
    };
    Ok(GeneratorValue::from_estimate(total, a_const))
}

/// `𝓛_v f(x)` for a function without radial structure, under the truncation policy.
pub fn pv_generic(
    f: &dyn ScalarField,
    x: &[f64],
    v: &[f64],
    alpha: StabilityIndex,
    spec: &QuadratureSpec,
) -> Result<GeneratorValue> {
    spec.validate()?;
    if x.len() != v.len() {
        return Err(invalid("dimension", "x and v must agree"));
    }
    if !(norm(v) > 0.0) {
        return Err(invalid("v", "direction must be nonzero"));
    }
    let cutoff = match spec.tail {
        TailPolicy::Truncate { cutoff } => cutoff,
        TailPolicy::ExactCompactSupport => {
            return Err(invalid("tail", "exact tails need a radial profile"));
        }
    };
    let (a_const, a) = constants(alpha);
    let at = |w: f64| {
        let y: Vec<f64> = x.iter().zip(v).map(|(xi, vi)| xi + vi * w).collect();
        f.eval(&y)
    };
    let f0 = f.eval(x);
    let delta = spec.generic_inner_radius.min(cutoff);
    let qexp = 1.0 / (2.0 - a);
    let pref = qexp * delta.powf(2.0 - a);
    let tol = &spec.tolerance;
    let floor = tol.rel * f0.abs() * delta.powf(-a) / a;
    // no derivative information: freeze the quotient below the Taylor cutoff
    let w_min = spec.taylor_fraction.max(1e-6) * delta;
    let core = integrate_with_floor(
        |s: f64| {
            let w = (delta * s.powf(qexp)).max(w_min);
            pref * (at(w) + at(-w) - 2.0 * f0) / (w * w)
        },
        0.0,
        1.0,
        tol,
        floor.max(rounding_floor(spec.taylor_fraction, qexp, f0, delta, a)),
    )?;
    let far = integrate_with_floor(
        |w: f64| (at(w) + at(-w) - 2.0 * f0) * w.powf(-1.0 - a),
        delta,
        cutoff,
        tol,
        floor,
    )?;
    Ok(GeneratorValue::from_estimate(core.add(far), a_const))
}

/// Dispatches to the radial engine when the function exposes radial structure.
pub fn pv_directional(
    f: &dyn ScalarField,
    x: &[f64],
    v: &[f64],
    alpha: StabilityIndex,
    spec: &QuadratureSpec,
) -> Result<GeneratorValue> {
    match (f.as_radial(), spec.tail) {
        (Some(p), TailPolicy::ExactCompactSupport) => pv_radial(p, x, v, alpha, spec),
        _ => pv_generic(f, x, v, alpha, spec),
    }
}

/// `𝓛_v f(x) = |v|^α 𝓛_{v/|v|} f(x)`.
pub fn scaling_reduce(
    f: &dyn ScalarField,
    x: &[f64],
    v: &[f64],
    alpha: StabilityIndex,
    spec: &QuadratureSpec,
) -> Result<GeneratorValue> {
    let n = norm(v);
    if !(n > 0.0) {
        return Err(invalid("v", "direction must be nonzero"));
    }
    let unit: Vec<f64> = v.iter().map(|c| c / n).collect();
    let g = pv_directional(f, x, &unit, alpha, spec)?;
    let s = n.powf(alpha.get());
    Ok(GeneratorValue {
        value: g.value * s,
        error_estimate: g.error_estimate * s,
        subdivisions_used: g.subdivisions_used,
    })
}

/// `𝓛 f(x) = Σ_i 𝓛_{a_i(x)} f(x)` over the columns of `A(x)`.
pub fn full_generator(
    f: &dyn ScalarField,
    x: &[f64],
    field: &dyn CoefficientField,
    alpha: StabilityIndex,
    spec: &QuadratureSpec,
) -> Result<GeneratorValue> {
    if field.dim() != x.len() {
        return Err(invalid("field", "dimension differs from x"));
    }
    let mut acc = GeneratorValue::default();
    for col in field.columns(x) {
        acc = acc.add(pv_directional(f, x, &col, alpha, spec)?);
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::profile::*;
    use super::*;
    use crate::barrier::{build_theta, choose_theta_params, default_n, DampedTheta};
    use crate::geometry::{builtin_fields, Ball};
    use crate::stable::{compute_a_tilde_alpha, RandomStream};
    use proptest::prelude::*;

    fn a(x: f64) -> StabilityIndex {
        StabilityIndex::new(x).unwrap()
    }

    fn ball(d: usize) -> Ball {
        Ball::centered(d, 1.0).unwrap()
    }

    #[test]
    fn roots_are_stable_and_ordered() {
        let (m, p) = line_roots(0.3, 1.0, 0.09, 1.0).unwrap();
        assert!(m < 0.0 && p > 0.0);
        for w in [m, p] {
            assert!((0.09 + 0.6 * w + w * w - 1.0).abs() < 1e-15);
        }
        assert!(line_roots(0.0, 1.0, 2.0, 1.0).is_none());
    }

    #[test]
    fn lambda_identity_at_center() {
        for al in [0.5, 1.0, 1.5] {
            let alpha = a(al);
            let lp = LambdaProfile::new(&ball(2), alpha);
            let g = pv_directional(&lp, &[0.0, 0.0], &[0.0, 1.0], alpha, &QuadratureSpec::default()).unwrap();
            let exact = -compute_a_tilde_alpha(alpha);
            assert!((g.value / exact - 1.0).abs() < 1e-8, "alpha {al}: {} vs {exact}", g.value);
        }
    }

    #[test]
    fn h_is_harmonic_off_center() {
        for al in [0.5, 1.0, 1.5] {
            let alpha = a(al);
            let hp = HProfile::new(&ball(3), alpha);
            for x in [[0.2, 0.1, 0.5], [0.0, 0.9, 0.3], [0.6, 0.0, -0.7]] {
                let g = pv_directional(&hp, &x, &[0.0, 0.0, 1.0], alpha, &QuadratureSpec::default()).unwrap();
                let hx = hp.eval(&x);
                assert!(g.value.abs() < 1e-7 * hx, "alpha {al} x {x:?}: {}", g.value);
            }
        }
    }

    #[test]
    fn constant_is_in_the_kernel() {
        let spec = QuadratureSpec {
            tail: TailPolicy::Truncate { cutoff: 5.0 },
            ..Default::default()
        };
        let g = pv_directional(&FnField(|_: &[f64]| 3.5), &[0.1, 0.2], &[0.0, 1.0], a(1.2), &spec).unwrap();
        assert_eq!(g.value, 0.0);
    }

    #[test]
    fn zero_direction_rejected() {
        let lp = LambdaProfile::new(&ball(2), a(1.0));
        assert!(pv_directional(&lp, &[0.0, 0.0], &[0.0, 0.0], a(1.0), &QuadratureSpec::default()).is_err());
        assert!(pv_directional(&lp, &[2.0, 0.0], &[0.0, 1.0], a(1.0), &QuadratureSpec::default()).is_err());
    }

    #[test]
    fn homogeneity_and_rotation() {
        let alpha = a(1.3);
        let lp = LambdaProfile::new(&ball(2), alpha);
        let spec = QuadratureSpec::default();
        let x = [0.3, -0.4];
        let e = pv_directional(&lp, &x, &[0.0, 1.0], alpha, &spec).unwrap().value;
        let two = pv_directional(&lp, &x, &[0.0, 2.0], alpha, &spec).unwrap().value;
        assert!((two / e - 2f64.powf(1.3)).abs() < 1e-8);
        let red = scaling_reduce(&lp, &x, &[0.0, 2.0], alpha, &spec).unwrap().value;
        assert!((red / two - 1.0).abs() < 1e-8);
        let e1 = pv_directional(&lp, &x, &[1.0, 0.0], alpha, &spec).unwrap().value;
        assert!((e1 / e - 1.0).abs() < 1e-8);
    }

    #[test]
    fn full_generator_identity_field() {
        let alpha = a(0.7);
        let lp = LambdaProfile::new(&ball(3), alpha);
        let fields = builtin_fields(3);
        let g = full_generator(&lp, &[0.1, 0.2, -0.3], fields[0].as_ref(), alpha, &QuadratureSpec::default()).unwrap();
        let exact = -3.0 * compute_a_tilde_alpha(alpha);
        assert!((g.value / exact - 1.0).abs() < 1e-8);
    }

    #[test]
    fn nonpositive_radial_generator_stays_nonpositive_for_every_field() {
        let alpha = a(1.0);
        let b = ball(2);
        let eps = 0.25;
        let p = choose_theta_params(1.0, eps, eps, default_n(1.0, eps), alpha).unwrap();
        let fp = FThetaProfile::new(&b, build_theta(&p).unwrap(), alpha);
        let spec = QuadratureSpec::default();
        let mut rng = RandomStream::new(5, 0);
        for field in builtin_fields(2) {
            for _ in 0..20 {
                let rad = 0.95 * rng.uniform_open();
                let ang = 6.283 * rng.uniform_open();
                let x = [rad * ang.cos(), rad * ang.sin()];
                let g = full_generator(&fp, &x, field.as_ref(), alpha, &spec).unwrap();
                assert!(g.value < 0.0, "{} at {x:?}: {}", field.name(), g.value);
            }
        }
    }

    #[test]
    fn generic_engine_agrees_with_radial_engine() {
        let alpha = a(1.0);
        let b = ball(2);
        let ring = RingProfile::barrier_ring(&b, 0.25, 0.25);
        let x = [0.2, 0.3];
        let exact = pv_directional(&ring, &x, &[0.0, 1.0], alpha, &QuadratureSpec::default()).unwrap();
        let spec = QuadratureSpec {
            tail: TailPolicy::Truncate { cutoff: 10.0 },
            tolerance: Tolerance {
                abs: 1e-10,
                rel: 1e-9,
                max_subdivisions: 5000,
            },
            ..Default::default()
        };
        let f = FnField(|y: &[f64]| ring.eval(y));
        let gen = pv_directional(&f, &x, &[0.0, 1.0], alpha, &spec).unwrap();
        assert!((gen.value - exact.value).abs() < 1e-7, "{} vs {}", gen.value, exact.value);
    }

    #[test]
    fn edge_substitution_matters_for_h() {
        let alpha = a(0.5);
        let hp = HProfile::new(&ball(2), alpha);
        let plain = QuadratureSpec {
            edge_substitution: false,
            ..Default::default()
        };
        // without the substitution the blowup is either rejected or less accurate
        let x = [0.0, 0.5];
        let with = pv_directional(&hp, &x, &[0.0, 1.0], alpha, &QuadratureSpec::default()).unwrap();
        assert!(with.value.abs() < 1e-7 * hp.eval(&x));
        if let Ok(g) = pv_directional(&hp, &x, &[0.0, 1.0], alpha, &plain) {
            assert!(g.error_estimate >= with.error_estimate);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn linearity_of_the_generic_engine(c1 in -2.0f64..2.0, c2 in -2.0f64..2.0, u in 0.0f64..0.8, phi in 0.0f64..6.28) {
            let alpha = a(1.2);
            let b = ball(2);
            let lam = LambdaProfile::new(&b, alpha);
            let eps = 0.25;
            let big = FCapThetaProfile::new(&b, DampedTheta::new(1.0, eps).unwrap(), alpha);
            let spec = QuadratureSpec {
                tail: TailPolicy::Truncate { cutoff: 4.0 },
                tolerance: Tolerance { abs: 1e-9, rel: 1e-8, max_subdivisions: 10_000 },
                ..Default::default()
            };
            let x = [u * phi.cos(), u * phi.sin()];
            let v = [0.0, 1.0];
            let f = FnField(|y: &[f64]| lam.eval(y));
            let g = FnField(|y: &[f64]| big.eval(y));
            let comb = FnField(|y: &[f64]| c1 * lam.eval(y) + c2 * big.eval(y));
            let lf = pv_directional(&f, &x, &v, alpha, &spec).unwrap();
            let lg = pv_directional(&g, &x, &v, alpha, &spec).unwrap();
            let lc = pv_directional(&comb, &x, &v, alpha, &spec).unwrap();
            let err = lc.error_estimate + c1.abs() * lf.error_estimate + c2.abs() * lg.error_estimate;
            prop_assert!((lc.value - c1 * lf.value - c2 * lg.value).abs() <= err + 1e-9);
        }

        #[test]
        fn transverse_rotation_invariance(t in 0.0f64..0.8, xd in -0.5f64..0.5, phi in 0.0f64..6.28) {
            let alpha = a(0.8);
            let b = ball(3);
            let lp = HProfile::new(&b, alpha);
            let spec = QuadratureSpec::default();
            let v = [0.0, 0.0, 1.0];
            let g1 = pv_directional(&lp, &[t, 0.0, xd], &v, alpha, &spec).unwrap();
            let g2 = pv_directional(&lp, &[t * phi.cos(), t * phi.sin(), xd], &v, alpha, &spec).unwrap();
            let scale = lp.eval(&[t, 0.0, xd]);
            prop_assert!((g1.value - g2.value).abs() <= 1e-7 * scale);
        }
    }
}
