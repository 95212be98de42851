//! Exact jump-measure geometry for the rectilinear Lévy measure
//! `μ(dw) = 𝒜_α Σ_i |w_i|^{-1-α} dw_i ⊗ δ_0(other axes)`.
//!
//! Pre-images of radial sets under `w ↦ y + A(y) w` are unions of intervals
//! on each axis, bounded by the roots of `|y - z₀ + a v| = R`. Masses are
//! closed-form antiderivatives of `|v|^{-1-α}`.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::geometry::{dot, norm, CoefficientField};
use crate::quad::line_roots;
use crate::stable::{compute_a_alpha, RandomStream, StabilityIndex};

/// Roots `v₋ < 0 < v₊` of `|y - z₀ + a v| = R` for `|y - z₀| < R`.
pub fn ring_roots(y: &[f64], a: &[f64], z0: &[f64], big_r: f64) -> Result<(f64, f64)> {
    if y.len() != a.len() || y.len() != z0.len() {
        return Err(invalid("dimension", "y, a and z0 must agree"));
    }
    let c = dot(a, a);
    if !(c > 0.0) || !c.is_finite() {
        return Err(invalid("a", "column must be nonzero"));
    }
    let p: Vec<f64> = y.iter().zip(z0).map(|(u, z)| u - z).collect();
    let rho = dot(&p, &p);
    if !(big_r > 0.0) || !(rho < big_r * big_r) {
        return Err(Error::OutsideDomain(format!("|y - z0| must be below R = {big_r}")));
    }
    Ok(line_roots(dot(&p, a), c, rho, big_r * big_r).expect("interior point"))
}

/// `λ² = |p|² - (a/|a| · p)²`, the squared distance from `z₀` to the jump line.
pub fn lambda_sq(p: &[f64], a: &[f64]) -> f64 {
    let na = norm(a);
    let t = dot(p, a) / na;
    (dot(p, p) - t * t).max(0.0)
}

/// `∫_lo^hi v^{-1-α} dv` for `0 < lo ≤ hi ≤ ∞`, stable for narrow intervals.
pub fn interval_mass(lo: f64, hi: f64, alpha: f64) -> f64 {
    debug_assert!(lo > 0.0 && hi >= lo);
    if hi.is_infinite() {
        return lo.powf(-alpha) / alpha;
    }
    lo.powf(-alpha) * -(-alpha * ((hi - lo) / lo).ln_1p()).exp_m1() / alpha
}

/// Mass of `[lo, hi]` when the segment avoids the origin.
fn segment_mass(lo: f64, hi: f64, alpha: f64) -> Result<f64> {
    if hi <= lo {
        return Ok(0.0);
    }
    if lo > 0.0 {
        Ok(interval_mass(lo, hi, alpha))
    } else if hi < 0.0 {
        Ok(interval_mass(-hi, -lo, alpha))
    } else {
        Err(Error::OutsideDomain("pre-image contains the origin; mass is infinite".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColumnPreimage {
    pub column: Vec<f64>,
    /// `[v₋(R+η), v₋(R)]`.
    pub minus: (f64, f64),
    /// `[v₊(R), v₊(R+η)]`.
    pub plus: (f64, f64),
    pub lambda_sq: f64,
}

impl ColumnPreimage {
    pub fn plus_len(&self) -> f64 {
        self.plus.1 - self.plus.0
    }
    pub fn minus_len(&self) -> f64 {
        self.minus.1 - self.minus.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RingPreimage {
    pub columns: Vec<ColumnPreimage>,
}

/// The axis intervals hit by `R ≤ |y + a_i v - z₀| ≤ R + η` for `|y - z₀| < R`.
pub fn ring_preimage(
    y: &[f64],
    field: &dyn CoefficientField,
    z0: &[f64],
    big_r: f64,
    eta_ring: f64,
) -> Result<RingPreimage> {
    if !(eta_ring > 0.0) {
        return Err(invalid("eta_ring", "must be positive"));
    }
    let p: Vec<f64> = y.iter().zip(z0).map(|(u, z)| u - z).collect();
    let outer = big_r + eta_ring;
    let mut columns = Vec::with_capacity(field.dim());
    for a in field.columns(y) {
        let (m_in, p_in) = ring_roots(y, &a, z0, big_r)?;
        let na = norm(&a);
        let ls = lambda_sq(&p, &a);
        // widths from the difference of square roots, rationalized
        let root_in = (big_r * big_r - ls).sqrt();
        let root_out = (outer * outer - ls).sqrt();
        let width = eta_ring * (2.0 * big_r + eta_ring) / (na * (root_in + root_out));
        columns.push(ColumnPreimage {
            column: a,
            minus: (m_in - width, m_in),
            plus: (p_in, p_in + width),
            lambda_sq: ls,
        });
    }
    Ok(RingPreimage { columns })
}

/// Whether `|y - z₀| < r` and `0 < η < r < 4R/5` can hold for some `r`.
pub fn ring_hypothesis_holds(y: &[f64], z0: &[f64], big_r: f64, eta_ring: f64) -> bool {
    let p: Vec<f64> = y.iter().zip(z0).map(|(u, z)| u - z).collect();
    eta_ring > 0.0 && norm(&p).max(eta_ring) < 0.8 * big_r
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RingMeasure {
    pub value: f64,
    /// False when the configuration is outside the two-sided guarantee.
    pub in_regime: bool,
}

/// Exact `μ{w : R ≤ |y + A(y)w - z₀| ≤ R + η}` under the two-sided-bound hypotheses.
pub fn mu_ring_measure(
    y: &[f64],
    field: &dyn CoefficientField,
    z0: &[f64],
    big_r: f64,
    eta_ring: f64,
    alpha: StabilityIndex,
) -> Result<f64> {
    if !ring_hypothesis_holds(y, z0, big_r, eta_ring) {
        return Err(invalid("R", "need max(|y - z0|, eta) < 4R/5"));
    }
    Ok(mu_ring_measure_relaxed(y, field, z0, big_r, eta_ring, alpha)?.value)
}

/// Same integral for any configuration with finite mass; tags the regime.
pub fn mu_ring_measure_relaxed(
    y: &[f64],
    field: &dyn CoefficientField,
    z0: &[f64],
    big_r: f64,
    eta_ring: f64,
    alpha: StabilityIndex,
) -> Result<RingMeasure> {
    if !(big_r > 0.0 && eta_ring > 0.0) {
        return Err(invalid("R", "radius and width must be positive"));
    }
    if y.len() != field.dim() || z0.len() != y.len() {
        return Err(invalid("dimension", "y, z0 and the field must agree"));
    }
    let a = alpha.get();
    let p: Vec<f64> = y.iter().zip(z0).map(|(u, z)| u - z).collect();
    let rho = dot(&p, &p);
    let mut total = 0.0;
    if rho < big_r * big_r {
        for col in ring_preimage(y, field, z0, big_r, eta_ring)?.columns {
            let (m0, m1) = col.minus;
            let (p0, p1) = col.plus;
            total += interval_mass(-m1, -m0, a) + interval_mass(p0, p1, a);
        }
    } else {
        let outer = big_r + eta_ring;
        if rho <= outer * outer {
            return Err(Error::OutsideDomain("y lies in the ring; mass is infinite".into()));
        }
        for col in field.columns(y) {
            let c = dot(&col, &col);
            let b = dot(&p, &col);
            let Some((o0, o1)) = line_roots(b, c, rho, outer * outer) else {
                continue;
            };
            match line_roots(b, c, rho, big_r * big_r) {
                Some((i0, i1)) => {
                    total += segment_mass(o0, i0, a)? + segment_mass(i1, o1, a)?;
                }
                None => total += segment_mass(o0, o1, a)?,
            }
        }
    }
    Ok(RingMeasure {
        value: compute_a_alpha(alpha) * total,
        in_regime: ring_hypothesis_holds(y, z0, big_r, eta_ring),
    })
}

/// Exact `μ{w : |y + A(y)w - z₀| ≥ R}` for `|y - z₀| < R`.
pub fn mu_exterior_measure(
    y: &[f64],
    field: &dyn CoefficientField,
    z0: &[f64],
    big_r: f64,
    alpha: StabilityIndex,
) -> Result<f64> {
    if y.len() != field.dim() || z0.len() != y.len() {
        return Err(invalid("dimension", "y, z0 and the field must agree"));
    }
    let a = alpha.get();
    let mut total = 0.0;
    for col in field.columns(y) {
        let (m, p) = ring_roots(y, &col, z0, big_r)?;
        total += ((-m).powf(-a) + p.powf(-a)) / a;
    }
    Ok(compute_a_alpha(alpha) * total)
}

/// Observed constant `c = 𝒜_α/α · 8^{-α} · min_{y, |z|=1} Σ_i |a_i(y)·z|^α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExteriorConstant {
    pub c: f64,
    pub min_sum: f64,
    pub y_samples: usize,
    pub z_samples: usize,
}

fn sphere_directions(d: usize, count: usize, rng: &mut RandomStream) -> Vec<Vec<f64>> {
    if d == 2 {
        return (0..count)
            .map(|k| {
                let t = std::f64::consts::PI * k as f64 / count as f64;
                vec![t.cos(), t.sin()]
            })
            .collect();
    }
    (0..count)
        .map(|_| loop {
            let z: Vec<f64> = (0..d).map(|_| 2.0 * rng.uniform_open() - 1.0).collect();
            let n = norm(&z);
            if n > 1e-3 && n <= 1.0 {
                break z.iter().map(|c| c / n).collect();
            }
        })
        .collect()
}

/// Estimates the exterior constant on random `y ∈ [-box, box]^d` and a direction grid.
pub fn exterior_constant(
    field: &dyn CoefficientField,
    alpha: StabilityIndex,
    box_half: f64,
    y_samples: usize,
    z_samples: usize,
    seed: u64,
) -> Result<ExteriorConstant> {
    if y_samples == 0 || z_samples == 0 || !(box_half > 0.0) {
        return Err(invalid("samples", "need positive sample counts and box"));
    }
    let d = field.dim();
    let mut rng = RandomStream::new(seed, 0);
    let dirs = sphere_directions(d, z_samples, &mut rng);
    let a = alpha.get();
    let mut min_sum = f64::INFINITY;
    for k in 0..y_samples {
        let y: Vec<f64> = if k == 0 {
            vec![0.0; d]
        } else {
            (0..d).map(|_| box_half * (2.0 * rng.uniform_open() - 1.0)).collect()
        };
        let cols = field.columns(&y);
        for z in &dirs {
            let s: f64 = cols.iter().map(|c| dot(c, z).abs().powf(a)).sum();
            min_sum = min_sum.min(s);
        }
    }
    Ok(ExteriorConstant {
        c: compute_a_alpha(alpha) / a * 8f64.powf(-a) * min_sum,
        min_sum,
        y_samples,
        z_samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExteriorBound {
    pub exact: f64,
    pub envelope: f64,
    pub c: f64,
}

impl ExteriorBound {
    pub fn holds(&self) -> bool {
        self.exact >= self.envelope
    }
}

/// Exact exterior mass at `y ∈ B(x, r_x)` against the envelope `c / (R - |x - z₀|)^α`.
#[allow(clippy::too_many_arguments)]
pub fn mu_exterior_lower(
    x: &[f64],
    y: &[f64],
    field: &dyn CoefficientField,
    z0: &[f64],
    big_r: f64,
    alpha: StabilityIndex,
    c: f64,
) -> Result<ExteriorBound> {
    let px: Vec<f64> = x.iter().zip(z0).map(|(u, z)| u - z).collect();
    let depth = big_r - norm(&px);
    if !(depth > 0.0) {
        return Err(Error::OutsideDomain("|x - z0| must be below R".into()));
    }
    let dxy: f64 = x.iter().zip(y).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt();
    if !(dxy < depth / 3.0) {
        return Err(invalid("y", "must lie in B(x, (R - |x - z0|)/3)"));
    }
    Ok(ExteriorBound {
        exact: mu_exterior_measure(y, field, z0, big_r, alpha)?,
        envelope: c / depth.powf(alpha.get()),
        c,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum RadialSet {
    /// `R ≤ |u - z₀| ≤ R + η`.
    Ring { radius: f64, eta: f64 },
    /// `|u - z₀| ≥ R`.
    Exterior { radius: f64 },
}

/// `ν(y, U) = μ{w : y + A(y) w ∈ U}` for a radial `U` about `z₀`.
pub fn nu_radial_set(
    y: &[f64],
    field: &dyn CoefficientField,
    z0: &[f64],
    shape: RadialSet,
    alpha: StabilityIndex,
) -> Result<f64> {
    match shape {
        RadialSet::Ring { radius, eta } => Ok(mu_ring_measure_relaxed(y, field, z0, radius, eta, alpha)?.value),
        RadialSet::Exterior { radius } => mu_exterior_measure(y, field, z0, radius, alpha),
    }
}

/// Monte Carlo estimate of the ring mass: samples `μ` restricted to
/// `m ≤ |v| ≤ M` on each axis by inverse CDF. Returns `(estimate, standard error)`.
#[allow(clippy::too_many_arguments)]
pub fn mu_ring_monte_carlo(
    y: &[f64],
    field: &dyn CoefficientField,
    z0: &[f64],
    big_r: f64,
    eta_ring: f64,
    alpha: StabilityIndex,
    window: (f64, f64),
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let (lo, hi) = window;
    if !(lo > 0.0 && hi > lo) || samples < 2 {
        return Err(invalid("window", "need 0 < m < M and at least two samples"));
    }
    let a = alpha.get();
    let cols = field.columns(y);
    let per_axis = 2.0 * compute_a_alpha(alpha) * interval_mass(lo, hi, a);
    let total = per_axis * cols.len() as f64;
    let (l, h) = (lo.powf(-a), hi.powf(-a));
    let mut rng = RandomStream::new(seed, 1);
    let p: Vec<f64> = y.iter().zip(z0).map(|(u, z)| u - z).collect();
    let (r2, o2) = (big_r * big_r, (big_r + eta_ring).powi(2));
    let mut hits = 0usize;
    for _ in 0..samples {
        let i = ((rng.uniform_open() * cols.len() as f64) as usize).min(cols.len() - 1);
        let u = rng.uniform_open();
        let mag = (l - u * (l - h)).powf(-1.0 / a);
        let v = if rng.uniform_open() < 0.5 { mag } else { -mag };
        let dist2: f64 = p.iter().zip(&cols[i]).map(|(pj, aj)| (pj + aj * v).powi(2)).sum();
        if dist2 >= r2 && dist2 <= o2 {
            hits += 1;
        }
    }
    let frac = hits as f64 / samples as f64;
    let se = (frac * (1.0 - frac) / samples as f64).sqrt();
    Ok((total * frac, total * se))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{builtin_fields, IdentityField};
    use proptest::prelude::*;

    fn a(x: f64) -> StabilityIndex {
        StabilityIndex::new(x).unwrap()
    }

    #[test]
    fn hand_quadratic() {
        let (m, p) = ring_roots(&[0.3, 0.0], &[0.0, 1.0], &[0.0, 0.0], 1.0).unwrap();
        assert!((p - 0.91f64.sqrt()).abs() < 1e-15);
        assert!((m + 0.91f64.sqrt()).abs() < 1e-15);
        let (m, p) = ring_roots(&[1.0, 1.0], &[0.0, 2.0], &[1.0, 1.0], 3.0).unwrap();
        assert_eq!((m, p), (-1.5, 1.5));
        assert!(ring_roots(&[0.0, 0.0], &[0.0, 0.0], &[0.0, 0.0], 1.0).is_err());
        assert!(ring_roots(&[2.0, 0.0], &[0.0, 1.0], &[0.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn centered_identity_values() {
        let id = IdentityField::new(2);
        for al in [0.5, 1.0, 1.5] {
            let ring = mu_ring_measure(&[0.0, 0.0], &id, &[0.0, 0.0], 2.0, 0.3, a(al)).unwrap();
            let aa = compute_a_alpha(a(al));
            let expect = 2.0 * aa * (2.0 / al) * (2f64.powf(-al) - 2.3f64.powf(-al));
            assert!((ring / expect - 1.0).abs() < 1e-13);
            let ext = mu_exterior_measure(&[0.0, 0.0], &id, &[0.0, 0.0], 2.0, a(al)).unwrap();
            assert!((ext / (4.0 * aa * 2f64.powf(-al) / al) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn hypothesis_gate() {
        let id = IdentityField::new(2);
        assert!(mu_ring_measure(&[0.9, 0.0], &id, &[0.0, 0.0], 1.0, 0.1, a(1.0)).is_err());
        let relaxed = mu_ring_measure_relaxed(&[0.9, 0.0], &id, &[0.0, 0.0], 1.0, 0.1, a(1.0)).unwrap();
        assert!(!relaxed.in_regime && relaxed.value > 0.0);
        assert!(mu_ring_measure_relaxed(&[1.05, 0.0], &id, &[0.0, 0.0], 1.0, 0.1, a(1.0)).is_err());
        let outside = mu_ring_measure_relaxed(&[3.0, 0.0], &id, &[0.0, 0.0], 1.0, 0.1, a(1.0)).unwrap();
        assert!(outside.value > 0.0);
    }

    #[test]
    fn outside_ring_matches_direct_intervals() {
        // y = (3, 0), axis 1 hits [-3.1+... ]: |3 + v| in [1, 1.1] gives v in [-4.1, -4] ∪ [-2, -1.9]
        let id = IdentityField::new(2);
        let al = 0.8;
        let got = mu_ring_measure_relaxed(&[3.0, 0.0], &id, &[0.0, 0.0], 1.0, 0.1, a(al)).unwrap().value;
        let expect = compute_a_alpha(a(al)) * (interval_mass(4.0, 4.1, al) + interval_mass(1.9, 2.0, al));
        assert!((got / expect - 1.0).abs() < 1e-13);
    }

    #[test]
    fn narrow_ring_is_linear_in_width() {
        let id = IdentityField::new(3);
        let y = [0.1, -0.2, 0.3];
        let m1 = mu_ring_measure(&y, &id, &[0.0; 3], 1.0, 1e-6, a(1.2)).unwrap();
        let m2 = mu_ring_measure(&y, &id, &[0.0; 3], 1.0, 2e-6, a(1.2)).unwrap();
        assert!((m2 / m1 - 2.0).abs() < 1e-5);
    }

    #[test]
    fn monte_carlo_oracle() {
        let fields = builtin_fields(2);
        let field = fields[2].as_ref();
        let y = [0.2, -0.1];
        let alpha = a(1.0);
        let exact = mu_ring_measure(&y, field, &[0.0, 0.0], 1.0, 0.3, alpha).unwrap();
        let (est, se) = mu_ring_monte_carlo(&y, field, &[0.0, 0.0], 1.0, 0.3, alpha, (0.05, 50.0), 1_000_000, 9).unwrap();
        assert!((est - exact).abs() < 3.0 * se, "{est} ± {se} vs {exact}");
    }

    #[test]
    fn exterior_constant_positive() {
        for f in builtin_fields(2) {
            let c = exterior_constant(f.as_ref(), a(1.0), 2.0, 50, 360, 3).unwrap();
            assert!(c.c > 0.0, "{}", f.name());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]
        #[test]
        fn plug_back_and_bracket(
            px in -0.7f64..0.7, py in -0.7f64..0.7, ax in -2.0f64..2.0, ay in -2.0f64..2.0,
            big_r in 1.0f64..3.0, eta_frac in 0.01f64..0.79
        ) {
            prop_assume!(ax.abs() + ay.abs() > 0.1);
            let y = [px * big_r, py * big_r];
            prop_assume!(norm(&y) < 0.79 * big_r);
            let col = [ax, ay];
            let (m, p) = ring_roots(&y, &col, &[0.0, 0.0], big_r).unwrap();
            for v in [m, p] {
                let r = ((y[0] + ax * v).powi(2) + (y[1] + ay * v).powi(2)).sqrt();
                prop_assert!((r - big_r).abs() < 1e-12 * big_r);
            }
            let eta = eta_frac * big_r;
            let na = norm(&col);
            let (m2, p2) = ring_roots(&y, &col, &[0.0, 0.0], big_r + eta).unwrap();
            for len in [p2 - p, m - m2] {
                prop_assert!(len >= eta / na * (1.0 - 1e-12) && len <= 4.0 * eta / na);
            }
        }

        #[test]
        fn monotone_and_additive(
            px in -0.5f64..0.5, py in -0.5f64..0.5, eta in 0.01f64..0.5, big_r in 1.0f64..2.0
        ) {
            let fields = builtin_fields(2);
            let y = [px, py];
            let z0 = [0.0, 0.0];
            for f in &fields {
                let f = f.as_ref();
                let al = a(1.3);
                let ring = mu_ring_measure_relaxed(&y, f, &z0, big_r, eta, al).unwrap().value;
                let wider = mu_ring_measure_relaxed(&y, f, &z0, big_r, eta * 1.1, al).unwrap().value;
                let further = mu_ring_measure_relaxed(&y, f, &z0, big_r * 1.1, eta, al).unwrap().value;
                prop_assert!(wider > ring && further < ring);
                let ext = nu_radial_set(&y, f, &z0, RadialSet::Exterior { radius: big_r }, al).unwrap();
                let ext2 = nu_radial_set(&y, f, &z0, RadialSet::Exterior { radius: big_r + eta }, al).unwrap();
                prop_assert!((ring + ext2 - ext).abs() <= 1e-12 * ext);
            }
        }
    }
}
