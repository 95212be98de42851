//! Plain SVG text generation for report figures.

use std::fmt::Write as _;

use crate::barrier::{DampedTheta, PiecewiseTheta};
use crate::quad::audit::SignAuditReport;

use super::verdict::RatioReport;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mark {
    Line,
    Dots,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Optional `(low, high)` whiskers, one per point.
    pub whiskers: Option<Vec<(f64, f64)>>,
    pub mark: Mark,
    pub color: Option<String>,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>, mark: Mark) -> Self {
        Self {
            label: label.into(),
            points,
            whiskers: None,
            mark,
            color: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            if v.is_finite() && (!log || v > 0.0) {
                let t = if log { v.log10() } else { v };
                lo = lo.min(t);
                hi = hi.max(t);
            }
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        } else if hi - lo < 1e-12 {
            (lo, hi) = (lo - 0.5, hi + 0.5);
        } else {
            let pad = 0.04 * (hi - lo);
            (lo, hi) = (lo - pad, hi + pad);
        }
        Self { lo, hi, log }
    }

    fn map(&self, v: f64, a: f64, b: f64) -> Option<f64> {
        if !v.is_finite() || (self.log && v <= 0.0) {
            return None;
        }
        let t = if self.log { v.log10() } else { v };
        Some(a + (t - self.lo) / (self.hi - self.lo) * (b - a))
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            let (a, b) = (self.lo.ceil() as i32, self.hi.floor() as i32);
            let step = ((b - a) / 8).max(1);
            return (a..=b).step_by(step as usize).map(|k| (10f64.powi(k), format!("1e{k}"))).collect();
        }
        (0..=5)
            .map(|k| {
                let v = self.lo + (self.hi - self.lo) * k as f64 / 5.0;
                (v, format!("{v:.3}"))
            })
            .collect()
    }
}

impl Plot {
    pub fn to_svg(&self) -> String {
        let all = || self.series.iter().flat_map(|s| s.points.iter());
        let whisk = || self.series.iter().filter_map(|s| s.whiskers.as_ref()).flatten();
        let xa = Axis::fit(all().map(|p| p.0), self.log_x);
        let ya = Axis::fit(all().map(|p| p.1).chain(whisk().flat_map(|w| [w.0, w.1])), self.log_y);
        let (x0, x1, y0, y1) = (LEFT, W - RIGHT, H - BOTTOM, TOP);
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(s, r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            W / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            s,
            r#"<rect x="{x0}" y="{y1}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            x1 - x0,
            y0 - y1
        );
        for (v, label) in xa.ticks() {
            if let Some(px) = xa.map(v, x0, x1) {
                let _ = writeln!(
                    s,
                    r#"<line x1="{px:.2}" y1="{y0}" x2="{px:.2}" y2="{}" stroke="black"/><text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"#,
                    y0 + 5.0,
                    y0 + 18.0,
                    escape(&label)
                );
            }
        }
        for (v, label) in ya.ticks() {
            if let Some(py) = ya.map(v, y0, y1) {
                let _ = writeln!(
                    s,
                    r#"<line x1="{}" y1="{py:.2}" x2="{x0}" y2="{py:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
                    x0 - 5.0,
                    x0 - 8.0,
                    py + 4.0,
                    escape(&label)
                );
            }
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            (x0 + x1) / 2.0,
            H - 10.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0,
            escape(&self.y_label)
        );
        for (i, ser) in self.series.iter().enumerate() {
            let color = ser.color.clone().unwrap_or_else(|| PALETTE[i % PALETTE.len()].to_string());
            let mapped: Vec<Option<(f64, f64)>> = ser
                .points
                .iter()
                .map(|&(x, y)| Some((xa.map(x, x0, x1)?, ya.map(y, y0, y1)?)))
                .collect();
            match ser.mark {
                Mark::Line => {
                    let pts: Vec<String> = mapped.iter().flatten().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                    if !pts.is_empty() {
                        let _ = writeln!(
                            s,
                            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                            pts.join(" ")
                        );
                    }
                }
                Mark::Dots => {
                    for (x, y) in mapped.iter().flatten() {
                        let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="2.5" fill="{color}"/>"#);
                    }
                }
            }
            if let Some(w) = &ser.whiskers {
                for (p, &(lo, hi)) in ser.points.iter().zip(w) {
                    let (Some(px), Some(a), Some(b)) = (xa.map(p.0, x0, x1), ya.map(lo, y0, y1), ya.map(hi, y0, y1))
                    else {
                        continue;
                    };
                    let _ = writeln!(
                        s,
                        r#"<line x1="{px:.2}" y1="{a:.2}" x2="{px:.2}" y2="{b:.2}" stroke="{color}" stroke-width="0.8"/>"#
                    );
                }
            }
            let ly = TOP + 14.0 + 14.0 * i as f64;
            let _ = writeln!(
                s,
                r#"<rect x="{}" y="{}" width="10" height="10" fill="{color}"/><text x="{}" y="{}">{}</text>"#,
                x1 - 150.0,
                ly - 9.0,
                x1 - 135.0,
                ly,
                escape(&ser.label)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    (lo * hi).sqrt()
}

/// Empirical exit density against `φ` scaled by the median ratio, log-log.
pub fn density_overlay(report: &RatioReport) -> Plot {
    let live: Vec<_> = report.rows.iter().filter(|r| r.count > 0).collect();
    let mut ratios: Vec<f64> = live.iter().map(|r| r.ratio).collect();
    ratios.sort_by(f64::total_cmp);
    let scale = ratios.get(ratios.len() / 2).copied().unwrap_or(1.0);
    let mut emp = Series::new(
        "empirical density",
        live.iter().map(|r| (midpoint(r.bin_lo, r.bin_hi), r.density)).collect(),
        Mark::Dots,
    );
    emp.whiskers = Some(live.iter().map(|r| (r.density_low, r.density_high)).collect());
    let phi = Series::new(
        format!("phi x {scale:.3}"),
        report.rows.iter().map(|r| (midpoint(r.bin_lo, r.bin_hi), scale * r.phi_avg)).collect(),
        Mark::Line,
    );
    Plot {
        title: format!("exit radius density, {} field, depth {:.3}", report.field, report.depth),
        x_label: "exit radius".into(),
        y_label: "density".into(),
        log_x: true,
        log_y: true,
        series: vec![emp, phi],
    }
}

/// Per-bin ratio `f̂/φ` with its interval.
pub fn ratio_plot(reports: &[RatioReport]) -> Plot {
    let series = reports
        .iter()
        .map(|rep| {
            let live: Vec<_> = rep.rows.iter().filter(|r| r.count > 0).collect();
            let mut s = Series::new(
                format!("{} depth {:.3}", rep.field, rep.depth),
                live.iter().map(|r| (midpoint(r.bin_lo, r.bin_hi) - rep_radius(rep), r.ratio)).collect(),
                Mark::Dots,
            );
            s.whiskers = Some(live.iter().map(|r| (r.ratio_low, r.ratio_high)).collect());
            s
        })
        .collect();
    Plot {
        title: "density ratio by bin".into(),
        x_label: "exit radius minus r".into(),
        y_label: "ratio".into(),
        log_x: true,
        log_y: true,
        series,
    }
}

fn rep_radius(rep: &RatioReport) -> f64 {
    rep.rows.first().map(|r| r.bin_lo).unwrap_or(0.0)
}

/// `qθ(v)` and `qΘ(v)` over `[0, r²)`.
pub fn theta_profiles(theta: &PiecewiseTheta, big: &DampedTheta, samples: usize) -> Plot {
    let r2 = theta.r * theta.r;
    let n = samples.max(2);
    let vs: Vec<f64> = (0..n).map(|i| r2 * i as f64 / n as f64).collect();
    let th = vs.iter().map(|&v| (v, theta.q * theta.value(v))).collect();
    let cap = vs.iter().filter_map(|&v| Some((v, big.q * big.value(v).ok()?))).collect();
    Plot {
        title: "theta and damped Theta (scaled by q)".into(),
        x_label: "v = |x|^2".into(),
        y_label: "q times value".into(),
        log_x: false,
        log_y: false,
        series: vec![Series::new("theta", th, Mark::Line), Series::new("Theta", cap, Mark::Line)],
    }
}

/// Audit points in the `(x₁, x_d)` plane, colored by whether the margin holds.
pub fn audit_margin_map(report: &SignAuditReport) -> Plot {
    let (pass, fail): (Vec<_>, Vec<_>) = report.points.iter().partition(|p| p.margin >= 0.0);
    let pts = |v: &[&crate::quad::audit::PointMargin]| v.iter().map(|p| (p.x[0], p.x[p.x.len() - 1])).collect();
    let mut ok = Series::new("margin holds", pts(&pass), Mark::Dots);
    ok.color = Some("#2ca02c".into());
    let mut bad = Series::new("margin fails", pts(&fail), Mark::Dots);
    bad.color = Some("#d62728".into());
    Plot {
        title: format!("{:?} audit, alpha {}, r {}", report.kind, report.alpha, report.r),
        x_label: "x1".into(),
        y_label: "xd".into(),
        log_x: false,
        log_y: false,
        series: vec![ok, bad],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_plot_is_well_formed() {
        let svg = Plot::default().to_svg();
        roxmltree::Document::parse(&svg).unwrap();
    }

    #[test]
    fn escapes_and_log_axes() {
        let p = Plot {
            title: "a < b & c".into(),
            log_x: true,
            log_y: true,
            series: vec![Series::new("s", vec![(1.0, 1.0), (10.0, 0.0), (100.0, 0.01)], Mark::Line)],
            ..Default::default()
        };
        let svg = p.to_svg();
        let doc = roxmltree::Document::parse(&svg).unwrap();
        assert!(doc.descendants().any(|n| n.has_tag_name("polyline")));
    }
}
