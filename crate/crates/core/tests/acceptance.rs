//! Acceptance run: one PASS/FAIL line per criterion. Tolerances and budgets
//! are pinned below. Exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use rectilinear::barrier::{build_theta, choose_theta_params, default_n, theta_class_audit};
use rectilinear::geometry::{field_by_name, norm, CoefficientField};
use rectilinear::levy::{mu_ring_measure, mu_ring_monte_carlo, ring_preimage, ring_roots};
use rectilinear::quad::audit::{sign_audit_sub, sign_audit_super, Lg_closed_form};
use rectilinear::quad::profile::RingProfile;
use rectilinear::quad::pv_directional;
use rectilinear::report::pipeline::{
    barrier_sandwich, boundary_mass_study, exit_time_envelope, generator_identities, geometric_depths, green_identity,
    interior_grid, run_density_verdict, sign_audits,
};
use rectilinear::report::{run_command, Command, ExperimentConfig, Resolved};
use rectilinear::stable::{compute_a_alpha, compute_a_tilde_alpha, RandomStream, StabilityIndex};

const ALPHAS: [f64; 3] = [0.5, 1.0, 1.5];

const TOL_LAMBDA: f64 = 1e-6;
const TOL_H: f64 = 1e-5;
const TOL_CONSTANTS: f64 = 1e-12;
const TOL_RING_CLOSED_FORM: f64 = 1e-6;
const TOL_PLUG_BACK: f64 = 1e-12;
const SE_MULTIPLIER: f64 = 3.0;
const ENVELOPE_SPREAD_MAX: f64 = 20.0;
const DENSITY_SPREAD_MAX: f64 = 25.0;
const FIELD_SPREAD_RATIO_MAX: f64 = 2.0;
const BOUNDARY_MASS_MAX: f64 = 0.02;

struct Outcome {
    pass: bool,
    detail: String,
}

fn run(
    id: usize,
    title: &str,
    budget: Option<Duration>,
    results: &mut Vec<bool>,
    f: impl FnOnce() -> Result<Outcome, String>,
) {
    let t0 = Instant::now();
    let out = f().unwrap_or_else(|e| Outcome {
        pass: false,
        detail: format!("error: {e}"),
    });
    let took = t0.elapsed();
    let in_budget = budget.is_none_or(|b| took <= b);
    let pass = out.pass && in_budget;
    let budget_note = match budget {
        Some(b) => format!(", budget {} s{}", b.as_secs(), if in_budget { "" } else { " EXCEEDED" }),
        None => String::new(),
    };
    println!(
        "{} [{id:>2}] {title}: {} ({:.1} s{budget_note})",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        took.as_secs_f64()
    );
    results.push(pass);
}

fn config(alpha: f64, r: f64) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.alpha = alpha;
    c.ball.radius_abs = r;
    c
}

fn resolve(c: &ExperimentConfig) -> Result<Resolved, String> {
    c.resolve().map_err(|e| e.to_string())
}

fn identity_check(name: &str, tol: f64) -> Result<Outcome, String> {
    let mut worst = 0.0f64;
    let mut pass = true;
    for alpha in ALPHAS {
        let res = resolve(&config(alpha, 1.0))?;
        let rep = generator_identities(&res, 100).map_err(|e| e.to_string())?;
        let c = rep.checks.iter().find(|c| c.name == name).ok_or("missing check")?;
        worst = worst.max(c.max_error);
        pass &= c.points == 100 && c.max_error <= tol;
    }
    Ok(Outcome {
        pass,
        detail: format!("max relative error {worst:.2e} over alpha {ALPHAS:?}, 100 points each (tol {tol:.0e})"),
    })
}

fn c4_theta() -> Result<Outcome, String> {
    let mut rng = RandomStream::new(4, 0);
    let alpha = StabilityIndex::new(1.0).unwrap();
    let mut failures = Vec::new();
    let (mut max_tq, mut max_dq) = (0.0f64, 0.0f64);
    for k in 0..20 {
        let r = 0.25 * 16f64.powf(rng.uniform_open());
        let eps = r * (0.02 + 0.23 * rng.uniform_open());
        let n = default_n(r, eps) * (1.0 + 3.0 * rng.uniform_open());
        let params = choose_theta_params(r, eps, eps, n, alpha).map_err(|e| e.to_string())?;
        let theta = build_theta(&params).map_err(|e| e.to_string())?;
        let audit = theta_class_audit(&theta, &params, 10_000).map_err(|e| e.to_string())?;
        max_tq = max_tq.max(audit.max_theta_times_q);
        max_dq = max_dq.max(audit.max_dtheta_times_q2);
        if !audit.all_pass() {
            failures.push(format!("#{k} (r={r:.3}, eps={eps:.3}, N={n:.1})"));
        }
    }
    Ok(Outcome {
        pass: failures.is_empty(),
        detail: format!(
            "20 triples, 1e4 grid points; max q*theta {max_tq:.4} (<= 4), max q^2*theta' {max_dq:.4} (<= 3); failures {failures:?}"
        ),
    })
}

fn c5_sign_audits() -> Result<Outcome, String> {
    let mut pass = true;
    let mut seen = Vec::new();
    for alpha in ALPHAS {
        for r in [1.0, 2.0] {
            let res = resolve(&config(alpha, r))?;
            if res.audit_grid.len() != 200 {
                return Err(format!("grid has {} points", res.audit_grid.len()));
            }
            let pair = sign_audits(&res).map_err(|e| e.to_string())?;
            pass &= pair.passed();
            seen.push(format!(
                "a={alpha},r={r}: b1=2^{:?}/{:?} b2=2^{:?}/{:?}",
                pair.super_audit.ladder_exponent,
                pair.super_refined_exponent,
                pair.sub_audit.ladder_exponent,
                pair.sub_refined_exponent
            ));
        }
    }
    Ok(Outcome {
        pass,
        detail: format!("200-point grid / refined x2: {}", seen.join("; ")),
    })
}

fn c6_ring() -> Result<Outcome, String> {
    let mut worst = 0.0f64;
    for alpha in ALPHAS {
        let res = resolve(&config(alpha, 1.0))?;
        let (eps, eta) = (res.params.eps, res.params.eta_ring);
        let ring = RingProfile::barrier_ring(&res.ball, eps, eta);
        let ed = [0.0, 1.0];
        for x in interior_grid(&res.ball, 50, 0.01) {
            let q = pv_directional(&ring, &x, &ed, res.alpha, &res.quadrature).map_err(|e| e.to_string())?;
            let exact = Lg_closed_form(&x, &res.ball, eps, eta, res.alpha).map_err(|e| e.to_string())?;
            worst = worst.max((q.value / exact - 1.0).abs());
        }
    }
    Ok(Outcome {
        pass: worst <= TOL_RING_CLOSED_FORM,
        detail: format!("max relative difference {worst:.2e} on 50 points per alpha (tol {TOL_RING_CLOSED_FORM:.0e})"),
    })
}

fn c7_levy() -> Result<Outcome, String> {
    let mut rng = RandomStream::new(7, 0);
    let d = 3;
    let z0 = vec![0.0; d];
    let mut worst_residual = 0.0f64;
    let mut bracket_violations = 0usize;
    let instances = 100_000;
    for _ in 0..instances {
        let big_r = 0.5 + 3.0 * rng.uniform_open();
        let a: Vec<f64> = (0..d).map(|_| 4.0 * rng.uniform_open() - 2.0).collect();
        if norm(&a) < 1e-3 {
            continue;
        }
        let y: Vec<f64> = loop {
            let p: Vec<f64> = (0..d).map(|_| big_r * (2.0 * rng.uniform_open() - 1.0)).collect();
            if norm(&p) < 0.999 * big_r {
                break p;
            }
        };
        let (m, p) = ring_roots(&y, &a, &z0, big_r).map_err(|e| e.to_string())?;
        for v in [m, p] {
            let pt: Vec<f64> = y.iter().zip(&a).map(|(yi, ai)| yi + ai * v).collect();
            worst_residual = worst_residual.max((norm(&pt) - big_r).abs() / big_r);
        }
    }
    // interval-length bracket under the two-sided hypotheses
    let fields: Vec<Box<dyn CoefficientField>> =
        ["identity", "diagonal", "rotation"].iter().map(|n| field_by_name(n, d).unwrap()).collect();
    let mut checked = 0usize;
    for k in 0..instances {
        let field = fields[k % 3].as_ref();
        let big_r = 0.5 + 3.0 * rng.uniform_open();
        let r = 0.8 * big_r * rng.uniform_open().max(1e-3);
        let eta = r * rng.uniform_open().max(1e-6);
        let y: Vec<f64> = loop {
            let p: Vec<f64> = (0..d).map(|_| r * (2.0 * rng.uniform_open() - 1.0)).collect();
            if norm(&p) < r {
                break p;
            }
        };
        let pre = ring_preimage(&y, field, &z0, big_r, eta).map_err(|e| e.to_string())?;
        for c in &pre.columns {
            let unit = eta / norm(&c.column);
            for len in [c.plus_len(), c.minus_len()] {
                if !(len >= unit * (1.0 - 1e-12) && len <= 4.0 * unit) {
                    bracket_violations += 1;
                }
            }
        }
        checked += 1;
    }
    // Monte Carlo oracle for the exact measure
    let alpha = StabilityIndex::new(1.0).unwrap();
    let mut mc = Vec::new();
    let mut mc_pass = true;
    for (i, f) in fields.iter().enumerate() {
        let y = [0.2, -0.1, 0.05];
        let exact = mu_ring_measure(&y, f.as_ref(), &z0, 1.0, 0.3, alpha).map_err(|e| e.to_string())?;
        let (est, se) = mu_ring_monte_carlo(&y, f.as_ref(), &z0, 1.0, 0.3, alpha, (0.05, 50.0), 1_000_000, 70 + i as u64)
            .map_err(|e| e.to_string())?;
        let z = (est - exact).abs() / se;
        mc_pass &= z <= SE_MULTIPLIER;
        mc.push(format!("{} {z:.2} SE", f.name()));
    }
    Ok(Outcome {
        pass: worst_residual < TOL_PLUG_BACK && bracket_violations == 0 && mc_pass,
        detail: format!(
            "plug-back max residual {worst_residual:.1e} on {instances} instances (tol {TOL_PLUG_BACK:.0e}); \
             bracket violations {bracket_violations}/{checked}; MC at 1e6 samples: {}",
            mc.join(", ")
        ),
    })
}

fn c8_green() -> Result<Outcome, String> {
    let res = resolve(&ExperimentConfig::default())?;
    let mut pass = true;
    let mut notes = Vec::new();
    for name in ["identity", "rotation"] {
        let field = field_by_name(name, res.ball.dim()).map_err(|e| e.to_string())?;
        let g = green_identity(&res, field.as_ref(), 100_000).map_err(|e| e.to_string())?;
        let z = (g.lhs.mean - g.rhs.mean).abs() / g.combined_se();
        pass &= g.agrees(SE_MULTIPLIER);
        notes.push(format!("{name}: lhs {:.5} rhs {:.5} ({z:.2} SE)", g.lhs.mean, g.rhs.mean));
    }
    Ok(Outcome {
        pass,
        detail: format!("1e5 paths, V = ring(2r, r/4): {}", notes.join("; ")),
    })
}

fn c9_envelope() -> Result<Outcome, String> {
    let res = resolve(&ExperimentConfig::default())?;
    let e = exit_time_envelope(&res, res.field.as_ref(), &geometric_depths(10, 0.02), 100_000).map_err(|e| e.to_string())?;
    Ok(Outcome {
        pass: e.spread <= ENVELOPE_SPREAD_MAX && e.bracket.finite_positive(),
        detail: format!(
            "ratio bracket [{:.4}, {:.4}], spread {:.3} (max {ENVELOPE_SPREAD_MAX}), 10 depths, 1e5 paths each",
            e.bracket.min, e.bracket.max, e.spread
        ),
    })
}

fn c10_density() -> Result<Outcome, String> {
    let mut c = ExperimentConfig::default();
    c.simulation.paths = 1_000_000;
    c.field.name = "identity".into();
    c.field.compare = vec!["diagonal".into()];
    c.start.depths_rel_r = vec![1.0, 0.1, 0.02];
    c.verdict.spread_max = DENSITY_SPREAD_MAX;
    c.verdict.field_spread_ratio_max = FIELD_SPREAD_RATIO_MAX;
    let res = resolve(&c)?;
    let v = run_density_verdict(&res).map_err(|e| e.to_string())?;
    let runs: Vec<String> = v
        .reports
        .iter()
        .map(|r| format!("{}@{:.2}r {:.2}", r.field, r.depth, r.verdict.spread))
        .collect();
    Ok(Outcome {
        pass: v.pass,
        detail: format!(
            "1e6 paths; spreads {} (max {DENSITY_SPREAD_MAX}); field spread ratio {:.3} (max {FIELD_SPREAD_RATIO_MAX})",
            runs.join(", "),
            v.field_spread_ratio
        ),
    })
}

fn c11_boundary() -> Result<Outcome, String> {
    let res = resolve(&ExperimentConfig::default())?;
    let rows = boundary_mass_study(&res, res.simulation.paths).map_err(|e| e.to_string())?;
    let masses: Vec<f64> = rows.iter().map(|r| r.mass).collect();
    let decreasing = masses.windows(2).all(|w| w[1] < w[0]);
    let last = *masses.last().unwrap();
    Ok(Outcome {
        pass: decreasing && last < BOUNDARY_MASS_MAX,
        detail: format!(
            "alpha 1, start at center, dt {:.0e}, {} paths: masses {:?} at kappa/r = 1e-1, 1e-2, 1e-3 (last < {BOUNDARY_MASS_MAX})",
            res.simulation.time_step, res.simulation.paths, masses
        ),
    })
}

fn c12_sandwich() -> Result<Outcome, String> {
    let res = resolve(&ExperimentConfig::default())?;
    let theta = build_theta(&res.params).map_err(|e| e.to_string())?;
    let sup = sign_audit_super(&theta, &res.params, &res.ball, res.alpha, &res.audit_grid, &res.quadrature)
        .map_err(|e| e.to_string())?;
    let sub = sign_audit_sub(&res.params, &res.ball, res.alpha, &res.audit_grid, &res.quadrature).map_err(|e| e.to_string())?;
    let (b1, b2) = (sup.b.ok_or("no b1")?, sub.b.ok_or("no b2")?);
    let pts = barrier_sandwich(&res, b1, b2, &geometric_depths(10, 0.02), res.simulation.paths).map_err(|e| e.to_string())?;
    let failed = pts.iter().filter(|p| !p.passed).count();
    let tightest = pts
        .iter()
        .map(|p| (p.estimate.mean - p.lower).min(p.upper - p.estimate.mean) / p.estimate.se.max(f64::MIN_POSITIVE))
        .fold(f64::INFINITY, f64::min);
    Ok(Outcome {
        pass: failed == 0 && pts.len() == 10,
        detail: format!(
            "b1 = {b1}, b2 = {b2}, {} points, {failed} outside the 3 SE band; tightest side {tightest:.1} SE",
            pts.len()
        ),
    })
}

fn read_tree(root: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    for e in std::fs::read_dir(root).map_err(|e| e.to_string())? {
        let p = e.map_err(|e| e.to_string())?.path();
        let bytes = std::fs::read(&p).map_err(|e| e.to_string())?;
        out.insert(p.file_name().unwrap().to_string_lossy().into_owned(), bytes);
    }
    Ok(out)
}

fn c13_determinism() -> Result<Outcome, String> {
    // both runs use the same directory so the embedded config is identical
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path().join("run");
    let mut c = ExperimentConfig::default();
    c.output_dir = root.to_string_lossy().into_owned();
    let mut trees = Vec::new();
    for _ in 0..2 {
        if root.exists() {
            std::fs::remove_dir_all(&root).map_err(|e| e.to_string())?;
        }
        for cmd in Command::ALL {
            run_command(cmd, &c).map_err(|e| format!("{}: {e}", cmd.name()))?;
        }
        trees.push(read_tree(&root)?);
    }
    let differing: Vec<&String> = trees[0]
        .iter()
        .filter(|(k, v)| trees[1].get(*k) != Some(v))
        .map(|(k, _)| k)
        .collect();
    let same_names = trees[0].keys().eq(trees[1].keys());
    Ok(Outcome {
        pass: same_names && differing.is_empty(),
        detail: format!(
            "{} files per run, all seven commands at default settings; differing {:?}",
            trees[0].len(),
            differing
        ),
    })
}

fn main() {
    let mut results = Vec::new();
    let secs = Duration::from_secs;
    run(1, "generator identity on lambda", Some(secs(60)), &mut results, || {
        identity_check("lambda_identity", TOL_LAMBDA)
    });
    run(2, "generator identity on h", Some(secs(120)), &mut results, || identity_check("h_identity", TOL_H));
    run(3, "hand constants", None, &mut results, || {
        let one = StabilityIndex::new(1.0).unwrap();
        let e1 = (compute_a_alpha(one) * std::f64::consts::PI - 1.0).abs();
        let e2 = (compute_a_tilde_alpha(one) - 1.0).abs();
        Ok(Outcome {
            pass: e1 <= TOL_CONSTANTS && e2 <= TOL_CONSTANTS,
            detail: format!("A_1 relative error {e1:.1e}, tilde A_1 relative error {e2:.1e} (tol {TOL_CONSTANTS:.0e})"),
        })
    });
    run(4, "theta construction", Some(secs(10)), &mut results, c4_theta);
    run(5, "sign audits", Some(secs(900)), &mut results, c5_sign_audits);
    run(6, "ring closed form against quadrature", None, &mut results, c6_ring);
    run(7, "jump-measure geometry", None, &mut results, c7_levy);
    run(8, "Levy system identity", Some(secs(300)), &mut results, c8_green);
    run(9, "exit-time envelope", Some(secs(600)), &mut results, c9_envelope);
    run(10, "exit density verdict", Some(secs(1800)), &mut results, c10_density);
    run(11, "boundary non-hitting", None, &mut results, c11_boundary);
    run(12, "barrier sandwich", None, &mut results, c12_sandwich);
    run(13, "determinism", None, &mut results, c13_determinism);
    let passed = results.iter().filter(|p| **p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
