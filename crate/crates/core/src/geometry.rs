//! Balls, coefficient fields `x -> A(x)` and the chord geometry along `e_d`.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::stable::RandomStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    center: Vec<f64>,
    radius: f64,
}

impl Ball {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.len() < 2 {
            return Err(invalid("ball.center", "dimension must be at least 2"));
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(invalid("ball.radius", format!("{radius} is not positive")));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(invalid("ball.center", "non-finite coordinate"));
        }
        Ok(Self { center, radius })
    }

    pub fn centered(dim: usize, radius: f64) -> Result<Self> {
        Self::new(vec![0.0; dim], radius)
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn dist_to_center(&self, x: &[f64]) -> f64 {
        dist(x, &self.center)
    }

    /// `r - |x - z|`; negative outside.
    pub fn delta(&self, x: &[f64]) -> f64 {
        self.radius - self.dist_to_center(x)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.delta(x) > 0.0
    }

    /// Point at depth `delta` below the sphere along the unit vector `dir`.
    pub fn point_at_depth(&self, dir: &[f64], delta: f64) -> Result<Vec<f64>> {
        let n = norm(dir);
        if dir.len() != self.dim() || n == 0.0 {
            return Err(invalid("direction", "must be a nonzero vector of the ball dimension"));
        }
        if !(delta > 0.0 && delta <= self.radius) {
            return Err(invalid("delta", format!("{delta} not in (0, r]")));
        }
        let s = (self.radius - delta) / n;
        Ok(self.center.iter().zip(dir).map(|(c, d)| c + s * d).collect())
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// State-dependent matrix `A(x)` with entry bound `eta1` and determinant
/// lower bound `eta2`. Matrices are written row-major into caller buffers so
/// the simulation loop does not allocate.
pub trait CoefficientField: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn eta1(&self) -> f64;
    fn eta2(&self) -> f64;
    fn matrix_into(&self, x: &[f64], out: &mut [f64]);

    /// `true` when `A` does not depend on `x`.
    fn is_constant(&self) -> bool {
        false
    }

    fn matrix(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let mut m = vec![0.0; d * d];
        self.matrix_into(x, &mut m);
        m
    }

    /// i-th column `a_i(x)`.
    fn column(&self, x: &[f64], i: usize) -> Vec<f64> {
        let d = self.dim();
        let m = self.matrix(x);
        (0..d).map(|row| m[row * d + i]).collect()
    }

    fn columns(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let d = self.dim();
        let m = self.matrix(x);
        (0..d).map(|i| (0..d).map(|row| m[row * d + i]).collect()).collect()
    }
}

impl fmt::Debug for dyn CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CoefficientField({}, d={})", self.name(), self.dim())
    }
}

#[derive(Debug, Clone)]
pub struct IdentityField {
    dim: usize,
}

impl IdentityField {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl CoefficientField for IdentityField {
    fn name(&self) -> &str {
        "identity"
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn eta1(&self) -> f64 {
        1.0
    }
    fn eta2(&self) -> f64 {
        1.0
    }
    fn is_constant(&self) -> bool {
        true
    }
    fn matrix_into(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for i in 0..self.dim {
            out[i * self.dim + i] = 1.0;
        }
    }
}

/// Constant diagonal field `diag(s_1, ..., s_d)` with positive entries.
#[derive(Debug, Clone)]
pub struct DiagonalField {
    diag: Vec<f64>,
}

impl DiagonalField {
    pub fn new(diag: Vec<f64>) -> Result<Self> {
        if diag.len() < 2 || diag.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(invalid("diagonal", "need d >= 2 positive finite entries"));
        }
        Ok(Self { diag })
    }
}

impl CoefficientField for DiagonalField {
    fn name(&self) -> &str {
        "diagonal"
    }
    fn dim(&self) -> usize {
        self.diag.len()
    }
    fn eta1(&self) -> f64 {
        self.diag.iter().cloned().fold(0.0, f64::max)
    }
    fn eta2(&self) -> f64 {
        self.diag.iter().product()
    }
    fn is_constant(&self) -> bool {
        true
    }
    fn matrix_into(&self, _x: &[f64], out: &mut [f64]) {
        let d = self.diag.len();
        out.fill(0.0);
        for i in 0..d {
            out[i * d + i] = self.diag[i];
        }
    }
}

/// `A(x) = s(x) R(x)`: a rotation in the `(e_1, e_2)` plane by
/// `angle(x) = pi/3 * sin(x_1 + 2 x_2)` scaled by
/// `s(x) = 1.25 + 0.75 sin(3 x_1 - x_2)`, so `s` ranges over `[0.5, 2]`.
/// Entries are bounded by 2 and `det A = s^d >= 2^{-d}`.
#[derive(Debug, Clone)]
pub struct RotationScaleField {
    dim: usize,
}

impl RotationScaleField {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(invalid("dim", "rotation field needs d >= 2"));
        }
        Ok(Self { dim })
    }

    fn scale(x: &[f64]) -> f64 {
        1.25 + 0.75 * (3.0 * x[0] - x[1]).sin()
    }

    fn angle(x: &[f64]) -> f64 {
        PI / 3.0 * (x[0] + 2.0 * x[1]).sin()
    }
}

impl CoefficientField for RotationScaleField {
    fn name(&self) -> &str {
        "rotation"
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn eta1(&self) -> f64 {
        2.0
    }
    fn eta2(&self) -> f64 {
        0.5f64.powi(self.dim as i32)
    }
    fn matrix_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        let s = Self::scale(x);
        let (sn, cs) = Self::angle(x).sin_cos();
        out.fill(0.0);
        for i in 2..d {
            out[i * d + i] = s;
        }
        out[0] = s * cs;
        out[1] = -s * sn;
        out[d] = s * sn;
        out[d + 1] = s * cs;
    }
}

/// Field names accepted by [`field_by_name`].
pub const FIELD_NAMES: [&str; 3] = ["identity", "diagonal", "rotation"];

/// Identity, the constant anisotropic `diag(2, 1, ..., 1)`, and the rotation-and-scale field.
pub fn builtin_fields(dim: usize) -> Vec<Box<dyn CoefficientField>> {
    FIELD_NAMES
        .iter()
        .map(|n| field_by_name(n, dim).expect("builtin field"))
        .collect()
}

pub fn field_by_name(name: &str, dim: usize) -> Result<Box<dyn CoefficientField>> {
    if dim < 2 {
        return Err(invalid("dim", "d must be at least 2"));
    }
    match name {
        "identity" => Ok(Box::new(IdentityField::new(dim))),
        "diagonal" => {
            let mut diag = vec![1.0; dim];
            diag[0] = 2.0;
            Ok(Box::new(DiagonalField::new(diag)?))
        }
        "rotation" => Ok(Box::new(RotationScaleField::new(dim)?)),
        other => Err(invalid("field", format!("unknown field `{other}`; known: {FIELD_NAMES:?}"))),
    }
}

/// Determinant by Gaussian elimination with partial pivoting.
pub fn determinant(m: &[f64], d: usize) -> f64 {
    let mut a = m.to_vec();
    let mut det = 1.0;
    for col in 0..d {
        let pivot = (col..d)
            .max_by(|&i, &j| a[i * d + col].abs().partial_cmp(&a[j * d + col].abs()).unwrap())
            .unwrap();
        if a[pivot * d + col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            for k in 0..d {
                a.swap(pivot * d + k, col * d + k);
            }
            det = -det;
        }
        let p = a[col * d + col];
        det *= p;
        for row in col + 1..d {
            let factor = a[row * d + col] / p;
            for k in col..d {
                a[row * d + k] -= factor * a[col * d + k];
            }
        }
    }
    det
}

/// Observed bounds of a field on random probe points.
#[derive(Debug, Clone, Serialize)]
pub struct FieldProbe {
    pub points: usize,
    pub max_entry: f64,
    pub min_det: f64,
    /// Largest `|A(x) - A(y)|_max` over pairs at distance `pair_gap`.
    pub max_increment: f64,
    pub pair_gap: f64,
}

/// Probes `points` random locations in the cube `[-extent, extent]^d`.
pub fn probe_field(
    field: &dyn CoefficientField,
    points: usize,
    extent: f64,
    pair_gap: f64,
    rng: &mut RandomStream,
) -> FieldProbe {
    let d = field.dim();
    let mut x = vec![0.0; d];
    let mut y = vec![0.0; d];
    let mut ma = vec![0.0; d * d];
    let mut mb = vec![0.0; d * d];
    let mut out = FieldProbe {
        points,
        max_entry: 0.0,
        min_det: f64::INFINITY,
        max_increment: 0.0,
        pair_gap,
    };
    for _ in 0..points {
        for xi in x.iter_mut() {
            *xi = extent * (2.0 * rng.uniform_open() - 1.0);
        }
        let mut dir: Vec<f64> = (0..d).map(|_| rng.uniform_open() - 0.5).collect();
        let n = norm(&dir);
        dir.iter_mut().for_each(|v| *v *= pair_gap / n);
        for k in 0..d {
            y[k] = x[k] + dir[k];
        }
        field.matrix_into(&x, &mut ma);
        field.matrix_into(&y, &mut mb);
        out.max_entry = ma.iter().fold(out.max_entry, |m, v| m.max(v.abs()));
        out.min_det = out.min_det.min(determinant(&ma, d));
        let inc = ma.iter().zip(&mb).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        out.max_increment = out.max_increment.max(inc);
    }
    out
}

/// Chord lengths of the spheres of radii `r - eps`, `r - eps + eps/N`,
/// `r - 3eps/4`, `r - eps/2`, `r`, `r + eps`, `r + eps + eta` along the line
/// through `x` parallel to `e_d`. Coordinates are relative to the ball center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChordGeometry {
    pub s1: f64,
    pub s_star: f64,
    pub s_dstar: f64,
    pub s_tristar: f64,
    pub s2: f64,
    pub s3: f64,
    pub s4: f64,
    pub q: f64,
    pub delta: f64,
    /// `|x_d|`, the last coordinate after reflection to `x_d >= 0`.
    pub xd: f64,
    pub x_tilde_norm: f64,
}

/// `q = r^2 - (r - eps)^2`.
#[inline]
pub fn shell_q(r: f64, eps: f64) -> f64 {
    eps * (2.0 * r - eps)
}

pub fn chord_geometry(x: &[f64], r: f64, eps: f64, eta_ring: f64, n: f64) -> Result<ChordGeometry> {
    if !(r > 0.0) {
        return Err(invalid("r", "radius must be positive"));
    }
    if !(eps > 0.0 && eps <= r / 4.0) {
        return Err(invalid("eps", format!("{eps} not in (0, r/4]")));
    }
    if !(eta_ring > 0.0 && eta_ring <= eps) {
        return Err(invalid("eta_ring", format!("{eta_ring} not in (0, eps]")));
    }
    if !(n >= 4.0) {
        return Err(invalid("N", format!("{n} < 4")));
    }
    if x.len() < 2 {
        return Err(invalid("x", "dimension must be at least 2"));
    }
    let d = x.len();
    let tilde_sq: f64 = x[..d - 1].iter().map(|v| v * v).sum();
    let xd = x[d - 1].abs();
    let norm_x = (tilde_sq + xd * xd).sqrt();
    if norm_x >= r {
        return Err(Error::OutsideDomain(format!("|x| = {norm_x} >= r = {r}")));
    }
    let chord = |rad: f64| ((rad * rad - tilde_sq).max(0.0)).sqrt();
    Ok(ChordGeometry {
        s1: chord(r - eps),
        s_star: chord(r - eps + eps / n),
        s_dstar: chord(r - 0.75 * eps),
        s_tristar: chord(r - 0.5 * eps),
        s2: chord(r),
        s3: chord(r + eps),
        s4: chord(r + eps + eta_ring),
        q: shell_q(r, eps),
        delta: r - norm_x,
        xd,
        x_tilde_norm: tilde_sq.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ball_validation() {
        assert!(Ball::new(vec![0.0], 1.0).is_err());
        assert!(Ball::new(vec![0.0, 0.0], 0.0).is_err());
        let b = Ball::new(vec![1.0, 0.0], 2.0).unwrap();
        assert_eq!(b.delta(&[1.0, 0.0]), 2.0);
        assert_eq!(b.delta(&[3.0, 0.0]), 0.0);
        assert!(b.delta(&[4.0, 0.0]) < 0.0);
        let p = b.point_at_depth(&[0.0, 1.0], 0.5).unwrap();
        assert!((b.delta(&p) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn identity_and_diagonal() {
        let id = IdentityField::new(3);
        assert_eq!(id.eta1(), 1.0);
        assert_eq!(id.eta2(), 1.0);
        assert_eq!(id.column(&[0.3, 0.1, 0.0], 1), vec![0.0, 1.0, 0.0]);
        let dg = field_by_name("diagonal", 2).unwrap();
        assert_eq!(determinant(&dg.matrix(&[0.0, 0.0]), 2), 2.0);
        assert!(dg.eta2() <= 2.0);
    }

    #[test]
    fn rotation_field_bounds_hold_on_probes() {
        for d in [2usize, 3] {
            let f = RotationScaleField::new(d).unwrap();
            let mut rng = RandomStream::new(17, d as u64);
            let p = probe_field(&f, 10_000, 5.0, 1e-6, &mut rng);
            assert!(p.max_entry <= f.eta1() + 1e-12);
            assert!(p.min_det >= f.eta2() - 1e-12, "min det {}", p.min_det);
            // continuity: a 1e-6 step moves entries by O(1e-6)
            assert!(p.max_increment < 1e-5);
        }
    }

    #[test]
    fn determinant_matches_closed_form() {
        let m = [2.0, 1.0, 0.5, 3.0];
        assert!((determinant(&m, 2) - 5.5).abs() < 1e-15);
        let m3 = [0.0, 1.0, 2.0, 1.0, 0.0, 3.0, 4.0, -3.0, 8.0];
        assert!((determinant(&m3, 3) - (-2.0)).abs() < 1e-12);
    }

    #[test]
    fn chords_at_center() {
        let g = chord_geometry(&[0.0, 0.0], 1.0, 0.25, 0.1, 4.0).unwrap();
        assert_eq!(g.s1, 0.75);
        assert_eq!(g.s2, 1.0);
        assert_eq!(g.s3, 1.25);
        assert!((g.s4 - 1.35).abs() < 1e-15);
        assert!((g.q - 7.0 / 16.0).abs() < 1e-15);
        assert_eq!(g.delta, 1.0);
    }

    #[test]
    fn clamp_at_inner_radius() {
        let g = chord_geometry(&[0.75, 0.1], 1.0, 0.25, 0.25, 4.0).unwrap();
        assert_eq!(g.s1, 0.0);
        assert!((g.s2 * g.s2 - g.q).abs() < 1e-15);
    }

    #[test]
    fn reflection_and_rejections() {
        let a = chord_geometry(&[0.2, -0.3], 1.0, 0.25, 0.1, 4.0).unwrap();
        let b = chord_geometry(&[0.2, 0.3], 1.0, 0.25, 0.1, 4.0).unwrap();
        assert_eq!(a, b);
        assert!(chord_geometry(&[1.0, 0.0], 1.0, 0.25, 0.1, 4.0).is_err());
        assert!(chord_geometry(&[0.0, 0.0], 1.0, 0.3, 0.1, 4.0).is_err());
        assert!(chord_geometry(&[0.0, 0.0], 1.0, 0.25, 0.3, 4.0).is_err());
        assert!(chord_geometry(&[0.0, 0.0], 1.0, 0.25, 0.1, 3.0).is_err());
    }

    #[test]
    fn chord_gap_bound_brute_force() {
        let mut rng = RandomStream::new(3, 0);
        let (r, eps) = (1.0, 0.25);
        let mut checked = 0;
        while checked < 100_000 {
            let x = [2.0 * rng.uniform_open() - 1.0, 2.0 * rng.uniform_open() - 1.0];
            if norm(&x) >= r {
                continue;
            }
            let g = chord_geometry(&x, r, eps, 0.2, 4.0).unwrap();
            assert!(g.s2 - g.s1 <= g.q / g.s2 * (1.0 + 1e-12));
            if g.s1 > 0.0 {
                assert!(((g.s2 * g.s2 - g.s1 * g.s1) / g.q - 1.0).abs() < 1e-9);
            }
            checked += 1;
        }
    }

    proptest! {
        #[test]
        fn chord_chain_is_monotone(
            r in 0.1f64..10.0,
            eps_frac in 0.01f64..1.0,
            eta_frac in 0.01f64..1.0,
            n in 4.0f64..100.0,
            u in 0.0f64..0.999,
            phi in 0.0f64..6.283,
        ) {
            let eps = eps_frac * r / 4.0;
            let eta = eta_frac * eps;
            let x = [u * r * phi.cos(), u * r * phi.sin()];
            let g = chord_geometry(&x, r, eps, eta, n).unwrap();
            prop_assert!(g.s1 <= g.s_star && g.s_star <= g.s_dstar && g.s_dstar <= g.s_tristar);
            prop_assert!(g.s_tristar <= g.s2 && g.s2 <= g.s3 && g.s3 <= g.s4);
            prop_assert!(g.delta >= 0.0);
            let ratio = (g.s4 - g.s3) * g.s3 / (eta * r);
            prop_assert!((0.5..=2.5).contains(&ratio), "ratio {}", ratio);
        }
    }
}
