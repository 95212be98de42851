//! Explicit scalar functions: `λ`, `h`, the piecewise `θ` of class 𝒢(r, ε),
//! the damped `Θ`, the barriers `f_{b,θ}`, `F_{b,Θ}`, the ring indicator `g`
//! and the comparison density `φ`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{norm_sq, shell_q, Ball};
use crate::quad::gk::{integrate_with_floor, Tolerance};
use crate::stable::StabilityIndex;

/// `(r² - |y|²)^{α/2}` inside `B(0, r)`, zero outside.
pub fn lambda_eval(y: &[f64], r: f64, alpha: StabilityIndex) -> f64 {
    let gap = r * r - norm_sq(y);
    if gap > 0.0 {
        gap.powf(0.5 * alpha.get())
    } else {
        0.0
    }
}

/// `(r² - |y|²)^{α/2 - 1}` inside `B(0, r)`, zero outside. Undefined on the sphere.
pub fn h_eval(y: &[f64], r: f64, alpha: StabilityIndex) -> Result<f64> {
    let gap = r * r - norm_sq(y);
    if gap == 0.0 {
        return Err(Error::OutsideDomain("h is singular on |y| = r".into()));
    }
    Ok(if gap > 0.0 { gap.powf(0.5 * alpha.get() - 1.0) } else { 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierParams {
    pub r: f64,
    pub eps: f64,
    pub eta_ring: f64,
    pub n: f64,
    pub k1: f64,
    pub k2: f64,
    pub b: f64,
}

impl BarrierParams {
    pub fn q(&self) -> f64 {
        shell_q(self.r, self.eps)
    }

    /// `K = K₁q + K₂`.
    pub fn k_total(&self) -> f64 {
        self.k1 * self.q() + self.k2
    }

    /// `b η r^{1-α/2} / ε^{α/2}`, the weight of `f_θ` in `f_{b,θ}`.
    pub fn weight(&self, alpha: StabilityIndex) -> f64 {
        barrier_weight(self.b, self.r, self.eps, self.eta_ring, alpha)
    }

    pub fn with_b(self, b: f64) -> Self {
        Self { b, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        validate_shell(self.r, self.eps, self.eta_ring)?;
        if !(self.n >= 4.0) || !self.n.is_finite() {
            return Err(invalid("N", format!("{} < 4", self.n)));
        }
        if !(self.b > 0.0) || !self.b.is_finite() {
            return Err(invalid("b", "must be positive"));
        }
        let cap = self.r * self.eps / 8.0;
        let kq = self.k1 * self.q();
        if !(kq > 0.0 && kq < cap) {
            return Err(invalid("K1", format!("K1*q = {kq} not in (0, r*eps/8)")));
        }
        if !(self.k2 > 0.0 && self.k2 < cap) {
            return Err(invalid("K2", format!("{} not in (0, r*eps/8)", self.k2)));
        }
        if self.k_total() > self.eps / self.n {
            return Err(invalid("K", format!("K1*q + K2 = {} > eps/N", self.k_total())));
        }
        Ok(())
    }
}

pub(crate) fn validate_shell(r: f64, eps: f64, eta_ring: f64) -> Result<()> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(invalid("r", "must be positive"));
    }
    if !(eps > 0.0 && eps <= r / 4.0) {
        return Err(invalid("eps", format!("{eps} not in (0, r/4]")));
    }
    if !(eta_ring > 0.0 && eta_ring <= eps) {
        return Err(invalid("eta_ring", format!("{eta_ring} not in (0, eps]")));
    }
    Ok(())
}

pub fn barrier_weight(b: f64, r: f64, eps: f64, eta_ring: f64, alpha: StabilityIndex) -> f64 {
    let a = alpha.get();
    b * eta_ring * r.powf(1.0 - 0.5 * a) / eps.powf(0.5 * a)
}

/// Smallest `N` accepted by default: twice `r (r ∨ 1)² / ε`, which is at least 8.
pub fn default_n(r: f64, eps: f64) -> f64 {
    (2.0 * r * r.max(1.0).powi(2) / eps).max(4.0)
}

/// Picks `K₁, K₂` by halving both from half their caps until `K ≤ ε/N` and
/// `‖θ‖_∞ - 1/q ≤ N^{-(4+α)}`.
pub fn choose_theta_params(r: f64, eps: f64, eta_ring: f64, n: f64, alpha: StabilityIndex) -> Result<BarrierParams> {
    validate_shell(r, eps, eta_ring)?;
    if !(n >= 4.0) || !n.is_finite() {
        return Err(invalid("N", format!("{n} < 4")));
    }
    let q = shell_q(r, eps);
    let cap = r * eps / 8.0;
    let mut k1 = 0.5 * cap / q;
    let mut k2 = 0.5 * cap;
    let sup_bound = n.powf(-(4.0 + alpha.get()));
    for _ in 0..2000 {
        let excess = (k1 + 2.0 * k1 * k1 / 3.0) / q + k2 * (1.0 + k1) / (2.0 * q * q);
        if k1 * q + k2 <= eps / n && excess <= sup_bound {
            return Ok(BarrierParams {
                r,
                eps,
                eta_ring,
                n,
                k1,
                k2,
                b: 1.0,
            });
        }
        k1 *= 0.5;
        k2 *= 0.5;
    }
    Err(invalid("N", "no admissible K1, K2 found"))
}

/// The four-piece `θ`, stored as shifted monomials around `T₀` and `T₁`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseTheta {
    pub r: f64,
    pub q: f64,
    pub t0: f64,
    pub t1: f64,
    pub t2: f64,
    /// Coefficients of `(v - T₀)^k` on `(T₀, T₁]`.
    pub c_mid: [f64; 4],
    /// Coefficients of `(v - T₁)^k` on `(T₁, T₂]`.
    pub c_top: [f64; 5],
    pub sup_value: f64,
    /// Exact widths `K₁q` and `K₂`; `T₁ - T₀` and `T₂ - T₁` round when they
    /// fall below the spacing of floats near `T₀`.
    pub mid_width: f64,
    pub top_width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ThetaPiece {
    Inverse,
    Cubic,
    Quartic,
    Flat,
}

#[derive(Debug, Clone, Serialize)]
pub struct ThetaPieceRow {
    pub piece: usize,
    pub kind: ThetaPiece,
    pub start: f64,
    pub end: f64,
    pub anchor: f64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

fn poly(c: &[f64], t: f64) -> [f64; 3] {
    let mut v = 0.0;
    let mut d1 = 0.0;
    let mut d2 = 0.0;
    for (k, ck) in c.iter().enumerate().rev() {
        v = v * t + ck;
        if k >= 1 {
            d1 = d1 * t + k as f64 * ck;
        }
        if k >= 2 {
            d2 = d2 * t + (k * (k - 1)) as f64 * ck;
        }
    }
    [v, d1, d2]
}

pub fn build_theta(params: &BarrierParams) -> Result<PiecewiseTheta> {
    params.validate()?;
    let (r, eps) = (params.r, params.eps);
    let q = params.q();
    let (k1, k2) = (params.k1, params.k2);
    let t0 = (r - eps).powi(2);
    let t1 = t0 + k1 * q;
    let t2 = t1 + k2;
    let c_mid = [1.0 / q, 1.0 / (q * q), 1.0 / q.powi(3), -1.0 / (3.0 * q.powi(4) * k1)];
    let theta_t1 = (1.0 + k1 + 2.0 * k1 * k1 / 3.0) / q;
    let dtheta_t1 = (1.0 + k1) / (q * q);
    let c_top = [
        theta_t1,
        dtheta_t1,
        0.0,
        -dtheta_t1 / (k2 * k2),
        dtheta_t1 / (2.0 * k2.powi(3)),
    ];
    Ok(PiecewiseTheta {
        r,
        q,
        t0,
        t1,
        t2,
        c_mid,
        c_top,
        sup_value: theta_t1 + 0.5 * k2 * dtheta_t1,
        mid_width: k1 * q,
        top_width: k2,
    })
}

impl PiecewiseTheta {
    pub fn piece_of(&self, v: f64) -> ThetaPiece {
        if v <= self.t0 {
            ThetaPiece::Inverse
        } else if v <= self.t1 {
            ThetaPiece::Cubic
        } else if v <= self.t2 {
            ThetaPiece::Quartic
        } else {
            ThetaPiece::Flat
        }
    }

    /// `[θ, θ', θ'']` at `v`, with `gap = r² - v` supplied for accuracy near `r²`.
    pub fn eval_gap(&self, v: f64, gap: f64) -> [f64; 3] {
        self.eval_piece(self.piece_of(v), v, gap)
    }

    /// Evaluates the formula of one piece at `v`, used for one-sided limits.
    pub fn eval_piece(&self, piece: ThetaPiece, v: f64, gap: f64) -> [f64; 3] {
        match piece {
            ThetaPiece::Inverse => {
                let i = 1.0 / gap;
                [i, i * i, 2.0 * i * i * i]
            }
            ThetaPiece::Cubic => self.eval_local(piece, v - self.t0),
            ThetaPiece::Quartic => self.eval_local(piece, v - self.t1),
            ThetaPiece::Flat => [self.sup_value, 0.0, 0.0],
        }
    }

    /// A polynomial piece at offset `s` from its left end (`T₀` or `T₁`).
    /// The inverse piece is taken at `v = T₀ - s`.
    pub fn eval_local(&self, piece: ThetaPiece, s: f64) -> [f64; 3] {
        match piece {
            ThetaPiece::Inverse => self.eval_piece(piece, self.t0 - s, self.q + s),
            ThetaPiece::Cubic => poly(&self.c_mid, s),
            ThetaPiece::Quartic => {
                // derivatives in factored form; the monomial sums cancel near T₂
                let k2 = self.top_width;
                let tau = s / k2;
                let d1 = self.c_top[1];
                [
                    poly(&self.c_top, s)[0],
                    d1 * (1.0 - tau).powi(2) * (1.0 + 2.0 * tau),
                    -6.0 * d1 * tau * (1.0 - tau) / k2,
                ]
            }
            ThetaPiece::Flat => [self.sup_value, 0.0, 0.0],
        }
    }

    pub fn value(&self, v: f64) -> f64 {
        self.eval_gap(v, self.r * self.r - v)[0]
    }

    pub fn derivative(&self, v: f64) -> f64 {
        self.eval_gap(v, self.r * self.r - v)[1]
    }

    pub fn second_derivative(&self, v: f64) -> f64 {
        self.eval_gap(v, self.r * self.r - v)[2]
    }

    /// Largest absolute term in the value and derivative formulas of the pieces
    /// meeting at `v`; the rounding scale for one-sided comparisons.
    pub fn term_scale(&self, v: f64) -> [f64; 3] {
        self.term_scale_local(v - self.t0, v - self.t1)
    }

    /// [`Self::term_scale`] with the offsets from `T₀` and `T₁` given directly.
    pub fn term_scale_local(&self, s_mid: f64, s_top: f64) -> [f64; 3] {
        let abs_terms = |c: &[f64], t: f64| {
            let mut out = [0.0f64; 3];
            for (k, ck) in c.iter().enumerate() {
                let ck = ck.abs();
                out[0] = out[0].max(ck * t.abs().powi(k as i32));
                if k >= 1 {
                    out[1] = out[1].max(k as f64 * ck * t.abs().powi(k as i32 - 1));
                }
                if k >= 2 {
                    out[2] = out[2].max((k * (k - 1)) as f64 * ck * t.abs().powi(k as i32 - 2));
                }
            }
            out
        };
        let a = abs_terms(&self.c_mid, s_mid);
        let b = abs_terms(&self.c_top, s_top);
        [a[0].max(b[0]), a[1].max(b[1]), a[2].max(b[2])]
    }

    /// `K` with `T₂ = (r - ε + K)²`.
    pub fn flat_offset(&self, eps: f64) -> f64 {
        let w = self.mid_width + self.top_width;
        w / ((self.t0 + w).sqrt() + (self.r - eps))
    }

    pub fn pieces(&self) -> Vec<ThetaPieceRow> {
        let r2 = self.r * self.r;
        vec![
            ThetaPieceRow {
                piece: 0,
                kind: ThetaPiece::Inverse,
                start: 0.0,
                end: self.t0,
                anchor: r2,
                c0: f64::NAN,
                c1: f64::NAN,
                c2: f64::NAN,
                c3: f64::NAN,
                c4: f64::NAN,
            },
            ThetaPieceRow {
                piece: 1,
                kind: ThetaPiece::Cubic,
                start: self.t0,
                end: self.t1,
                anchor: self.t0,
                c0: self.c_mid[0],
                c1: self.c_mid[1],
                c2: self.c_mid[2],
                c3: self.c_mid[3],
                c4: 0.0,
            },
            ThetaPieceRow {
                piece: 2,
                kind: ThetaPiece::Quartic,
                start: self.t1,
                end: self.t2,
                anchor: self.t1,
                c0: self.c_top[0],
                c1: self.c_top[1],
                c2: self.c_top[2],
                c3: self.c_top[3],
                c4: self.c_top[4],
            },
            ThetaPieceRow {
                piece: 3,
                kind: ThetaPiece::Flat,
                start: self.t2,
                end: r2,
                anchor: self.t2,
                c0: self.sup_value,
                c1: 0.0,
                c2: 0.0,
                c3: 0.0,
                c4: 0.0,
            },
        ]
    }
}

/// The damped function `Θ`: `1/(r² - v)` up to `(r-ε)²`, then
/// `(1 - t³)/(r² - v)` with `t = (v - (r-ε)²)/q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DampedTheta {
    pub r: f64,
    pub q: f64,
    pub t0: f64,
}

impl DampedTheta {
    pub fn new(r: f64, eps: f64) -> Result<Self> {
        if !(r > 0.0) || !(eps > 0.0 && eps <= r / 4.0) {
            return Err(invalid("eps", format!("{eps} not in (0, r/4]")));
        }
        Ok(Self {
            r,
            q: shell_q(r, eps),
            t0: (r - eps).powi(2),
        })
    }

    /// `[Θ, Θ', Θ'']` with `gap = r² - v`. On the outer shell `1 - t = gap/q`,
    /// so `Θ = (1 + t + t²)/q` without cancellation.
    pub fn eval_gap(&self, v: f64, gap: f64) -> [f64; 3] {
        if v <= self.t0 {
            let i = 1.0 / gap;
            [i, i * i, 2.0 * i * i * i]
        } else {
            let t = 1.0 - gap / self.q;
            let q = self.q;
            [(1.0 + t + t * t) / q, (1.0 + 2.0 * t) / (q * q), 2.0 / (q * q * q)]
        }
    }

    pub fn value(&self, v: f64) -> Result<f64> {
        let r2 = self.r * self.r;
        if !(v >= 0.0 && v < r2) {
            return Err(invalid("v", format!("{v} not in [0, r^2)")));
        }
        Ok(self.eval_gap(v, r2 - v)[0])
    }
}

pub fn theta_cap_eval(v: f64, r: f64, eps: f64) -> Result<f64> {
    DampedTheta::new(r, eps)?.value(v)
}

/// Indicator of the open ring `r + ε < |y - z| < r + ε + η`.
pub fn g_indicator(y: &[f64], ball: &Ball, eps: f64, eta_ring: f64) -> f64 {
    let d = ball.dist_to_center(y);
    let inner = ball.radius() + eps;
    if d > inner && d < inner + eta_ring {
        1.0
    } else {
        0.0
    }
}

fn relative(x: &[f64], ball: &Ball) -> Vec<f64> {
    x.iter().zip(ball.center()).map(|(a, c)| a - c).collect()
}

/// `f_θ(x) = λ(x) θ(|x|²)` inside the ball, relative to its center.
pub fn f_theta_eval(x: &[f64], theta: &PiecewiseTheta, ball: &Ball, alpha: StabilityIndex) -> f64 {
    let y = relative(x, ball);
    let v = norm_sq(&y);
    let gap = ball.radius().powi(2) - v;
    if gap <= 0.0 {
        return 0.0;
    }
    gap.powf(0.5 * alpha.get()) * theta.eval_gap(v, gap)[0]
}

pub fn f_cap_theta_eval(x: &[f64], big: &DampedTheta, ball: &Ball, alpha: StabilityIndex) -> f64 {
    let y = relative(x, ball);
    let v = norm_sq(&y);
    let gap = ball.radius().powi(2) - v;
    if gap <= 0.0 {
        return 0.0;
    }
    gap.powf(0.5 * alpha.get()) * big.eval_gap(v, gap)[0]
}

fn check_ball(params: &BarrierParams, ball: &Ball) -> Result<()> {
    if (params.r - ball.radius()).abs() > 1e-12 * params.r {
        return Err(invalid("ball", "radius differs from the barrier parameters"));
    }
    Ok(())
}

pub fn f_b_theta_eval(
    x: &[f64],
    params: &BarrierParams,
    theta: &PiecewiseTheta,
    ball: &Ball,
    alpha: StabilityIndex,
) -> Result<f64> {
    check_ball(params, ball)?;
    Ok(params.weight(alpha) * f_theta_eval(x, theta, ball, alpha) + g_indicator(x, ball, params.eps, params.eta_ring))
}

#[allow(non_snake_case)]
pub fn F_b_Theta_eval(x: &[f64], params: &BarrierParams, ball: &Ball, alpha: StabilityIndex) -> Result<f64> {
    check_ball(params, ball)?;
    let big = DampedTheta::new(params.r, params.eps)?;
    Ok(params.weight(alpha) * f_cap_theta_eval(x, &big, ball, alpha) + g_indicator(x, ball, params.eps, params.eta_ring))
}

/// The comparison density `φ` for a start point at depth `delta` in a ball of radius `r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhiProfile {
    pub delta: f64,
    pub r: f64,
    pub alpha: f64,
}

impl PhiProfile {
    pub fn new(delta: f64, r: f64, alpha: StabilityIndex) -> Result<Self> {
        if !(r > 0.0) {
            return Err(invalid("r", "must be positive"));
        }
        if !(delta > 0.0 && delta <= r) {
            return Err(Error::OutsideDomain(format!("depth {delta} not in (0, r]")));
        }
        Ok(Self {
            delta,
            r,
            alpha: alpha.get(),
        })
    }

    pub fn density(&self, y: f64) -> Result<f64> {
        if !(y > self.r) {
            return Err(invalid("y", format!("{y} <= r = {}", self.r)));
        }
        Ok(self.density_unchecked(y))
    }

    fn density_unchecked(&self, y: f64) -> f64 {
        let h = 0.5 * self.alpha;
        (self.delta * self.r).powf(h) / ((y - self.r).powf(h) * y.powf(h) * (y + self.delta - self.r))
    }

    /// `∫_a^b φ` for `r ≤ a < b ≤ ∞`.
    pub fn integral(&self, a: f64, b: f64, tol: &Tolerance) -> Result<f64> {
        if !(a >= self.r) || !(b > a) {
            return Err(invalid("interval", format!("[{a}, {b}] must satisfy r <= a < b")));
        }
        let r = self.r;
        let h = 0.5 * self.alpha;
        let c = (self.delta * r).powf(h);
        let split = if b.is_finite() { b } else { a.max(r) + 4.0 * r };
        // y = r + u^p removes the (y - r)^{-α/2} edge
        let p = 1.0 / (1.0 - h);
        let (ua, ub) = ((a - r).powf(1.0 / p), (split - r).powf(1.0 / p));
        let delta = self.delta;
        let core = integrate_with_floor(
            |u: f64| {
                let w = u.powf(p);
                let y = r + w;
                c * p / (y.powf(h) * (w + delta))
            },
            ua,
            ub,
            tol,
            0.0,
        )?;
        if b.is_finite() {
            return Ok(core.value);
        }
        // y = B t^{-1/α} maps the power tail onto a bounded integrand
        let alpha = self.alpha;
        let tail = integrate_with_floor(
            |t: f64| {
                let y = split * t.powf(-1.0 / alpha);
                self.density_unchecked(y) * split / alpha * t.powf(-1.0 / alpha - 1.0)
            },
            0.0,
            1.0,
            tol,
            0.0,
        )?;
        Ok(core.value + tail.value)
    }
}

pub fn phi_comparison(x: &[f64], y: f64, ball: &Ball, alpha: StabilityIndex) -> Result<f64> {
    let delta = ball.delta(x);
    PhiProfile::new(delta, ball.radius(), alpha)?.density(y)
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionResult {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ThetaAudit {
    pub conditions: Vec<ConditionResult>,
    pub grid_points: usize,
    pub max_theta_times_q: f64,
    pub max_dtheta_times_q2: f64,
    pub max_cap_theta_times_q: f64,
    pub max_cap_dtheta_times_q2: f64,
    pub c1_theta: f64,
    pub c2_theta: f64,
    pub c1_cap_theta: f64,
    pub c2_cap_theta: f64,
}

impl ThetaAudit {
    pub fn all_pass(&self) -> bool {
        self.conditions.iter().all(|c| c.pass)
    }
}

/// Audit grid on `[0, r²)`: uniform points plus points geometrically refined toward `r²`.
pub fn audit_grid(theta: &PiecewiseTheta, points: usize) -> Vec<f64> {
    let r2 = theta.r * theta.r;
    let half = points / 2;
    let mut v: Vec<f64> = (0..half).map(|i| r2 * i as f64 / half as f64).collect();
    let rest = points - half;
    for i in 0..rest {
        let gap = theta.q * 2.0 * 1e-8f64.powf(i as f64 / (rest.max(2) - 1) as f64);
        v.push(r2 - gap.min(r2));
    }
    v.retain(|x| *x >= 0.0 && *x < r2);
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Checks the class-𝒢 conditions and the θ, θ' bounds on a grid of `points` values.
pub fn theta_class_audit(theta: &PiecewiseTheta, params: &BarrierParams, points: usize) -> Result<ThetaAudit> {
    let r2 = theta.r * theta.r;
    let q = theta.q;
    let grid = audit_grid(theta, points);
    let big = DampedTheta::new(params.r, params.eps)?;
    let mut conditions = Vec::new();

    // (i) 1/(r² - v) on [0, T₀] and constant beyond (r - ε + K)²
    let k = theta.flat_offset(params.eps);
    let mut dev_inner = 0.0f64;
    let mut dev_flat = 0.0f64;
    for &v in &grid {
        let val = theta.value(v);
        if v <= theta.t0 {
            dev_inner = dev_inner.max((val * (r2 - v) - 1.0).abs());
        } else if v >= theta.t2 {
            dev_flat = dev_flat.max((val / theta.sup_value - 1.0).abs());
        }
    }
    conditions.push(ConditionResult {
        name: "i_shape",
        pass: dev_inner < 1e-12 && dev_flat == 0.0 && k > 0.0 && k <= params.eps / 4.0,
        detail: format!("inner deviation {dev_inner:e}, flat deviation {dev_flat:e}, K = {k:e}"),
    });

    // (ii) C² joins
    let mut worst = 0.0f64;
    let (w1, w2) = (theta.mid_width, theta.top_width);
    // (left piece, its local offset, right piece, its local offset, offsets from T₀ and T₁)
    let joins = [
        (ThetaPiece::Inverse, 0.0, ThetaPiece::Cubic, 0.0, (0.0, -w1)),
        (ThetaPiece::Cubic, w1, ThetaPiece::Quartic, 0.0, (w1, 0.0)),
        (ThetaPiece::Quartic, w2, ThetaPiece::Flat, 0.0, (w1 + w2, w2)),
    ];
    for (left, sl, right, sr, (sm, st)) in joins {
        let l = theta.eval_local(left, sl);
        let rr = theta.eval_local(right, sr);
        let terms = theta.term_scale_local(sm, st);
        for j in 0..3 {
            let scale = terms[j].max(1.0 / q.powi(j as i32 + 1));
            worst = worst.max((l[j] - rr[j]).abs() / scale);
        }
    }
    conditions.push(ConditionResult {
        name: "ii_c2",
        pass: worst < 1e-9,
        detail: format!("largest scaled one-sided mismatch {worst:e}"),
    });

    // (iii) strictly increasing on (T₀, T₂)
    let mut inc = true;
    for &v in grid.iter().filter(|v| **v > theta.t0 && **v < theta.t2) {
        if theta.derivative(v) <= 0.0 {
            inc = false;
        }
    }
    // the audit grid may be coarse on (T₀, T₂); sweep both pieces by local offset
    for i in 1..200 {
        let t = i as f64 / 200.0;
        let mid = theta.eval_local(ThetaPiece::Cubic, t * w1)[1];
        let top = theta.eval_local(ThetaPiece::Quartic, t * w2)[1];
        if !(mid > 0.0 && top > 0.0) {
            inc = false;
        }
    }
    conditions.push(ConditionResult {
        name: "iii_increasing",
        pass: inc,
        detail: format!("theta' > 0 on (T0, T2), widths K1*q = {w1:e}, K2 = {w2:e}"),
    });

    // (iv) θ'' maximal at T₀
    let d2_t0 = theta.second_derivative(theta.t0);
    let mut max_d2 = f64::NEG_INFINITY;
    let mut arg = 0.0;
    for &v in &grid {
        let d2 = theta.second_derivative(v);
        if d2 > max_d2 {
            max_d2 = d2;
            arg = v;
        }
    }
    for i in 1..200 {
        let t = i as f64 / 200.0;
        for (piece, s, v) in [
            (ThetaPiece::Cubic, t * w1, theta.t0 + t * w1),
            (ThetaPiece::Quartic, t * w2, theta.t1 + t * w2),
        ] {
            let d2 = theta.eval_local(piece, s)[2];
            if d2 > max_d2 {
                max_d2 = d2;
                arg = v;
            }
        }
    }
    conditions.push(ConditionResult {
        name: "iv_max_second_derivative",
        pass: max_d2 <= d2_t0 * (1.0 + 1e-12),
        detail: format!("grid max {max_d2:e} at v = {arg:e}; theta''(T0) = {d2_t0:e}"),
    });

    let mut audit = ThetaAudit {
        conditions,
        grid_points: grid.len(),
        max_theta_times_q: 0.0,
        max_dtheta_times_q2: 0.0,
        max_cap_theta_times_q: 0.0,
        max_cap_dtheta_times_q2: 0.0,
        c1_theta: f64::INFINITY,
        c2_theta: 0.0,
        c1_cap_theta: f64::INFINITY,
        c2_cap_theta: 0.0,
    };
    for &v in &grid {
        let gap = r2 - v;
        let t = theta.eval_gap(v, gap);
        let c = big.eval_gap(v, gap);
        audit.max_theta_times_q = audit.max_theta_times_q.max(t[0] * q);
        audit.max_dtheta_times_q2 = audit.max_dtheta_times_q2.max(t[1] * q * q);
        audit.max_cap_theta_times_q = audit.max_cap_theta_times_q.max(c[0] * q);
        audit.max_cap_dtheta_times_q2 = audit.max_cap_dtheta_times_q2.max(c[1] * q * q);
        let m = gap.max(q);
        audit.c1_theta = audit.c1_theta.min(t[0] * m);
        audit.c2_theta = audit.c2_theta.max(t[0] * m);
        audit.c1_cap_theta = audit.c1_cap_theta.min(c[0] * m);
        audit.c2_cap_theta = audit.c2_cap_theta.max(c[0] * m);
    }
    audit.conditions.push(ConditionResult {
        name: "bound_theta_4_over_q",
        pass: audit.max_theta_times_q <= 4.0 && audit.max_cap_theta_times_q <= 4.0,
        detail: format!(
            "max theta*q = {:.6}, max Theta*q = {:.6}",
            audit.max_theta_times_q, audit.max_cap_theta_times_q
        ),
    });
    audit.conditions.push(ConditionResult {
        name: "bound_dtheta_3_over_q2",
        pass: audit.max_dtheta_times_q2 <= 3.0 && audit.max_cap_dtheta_times_q2 <= 3.0,
        detail: format!(
            "max theta'*q^2 = {:.6}, max Theta'*q^2 = {:.6}",
            audit.max_dtheta_times_q2, audit.max_cap_dtheta_times_q2
        ),
    });
    Ok(audit)
}
