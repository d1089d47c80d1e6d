//! The acceptance criteria as a reusable, serializable report.
//!
//! Each criterion is a function of the seed returning a [`CriterionReport`];
//! the command line and the acceptance tests share them.

use crate::bodies::{BodySpec, CapacityBall, ConvexBody, EllipsoidBody, IntersectionBody};
use crate::bounds::{
    area_feasibility, bound_f, bound_inradius, bound_inradius_geometric, bound_simple,
    bound_simple_geometric, linear_search, solve_embedding, GridSpec, AREA_TOL,
};
use crate::ehz::{ehz_capacity, scaled_limit_experiment, EhzOptions};
use crate::orbits::{
    corner_start, glide_action, glide_orbit, integrate_orbit, min_action_scan, ArcKind, Entry,
    GlideBranch, OrbitFrame, ScanResult, corner_rho2_max,
};
use crate::symcore::{
    matrix_a_gw, matrix_a_orbit, matrix_mt, matrix_s, symplectic_defect,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use serde_json::{json, Value};
use std::f64::consts::PI;
use std::str::FromStr;
use std::time::Instant;

/// Random starts per orbit scan.
pub const SCAN_SAMPLES: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Quick,
    Full,
}

impl FromStr for Level {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "quick" => Ok(Level::Quick),
            "full" => Ok(Level::Full),
            other => Err(format!("unknown level {other:?} (expected quick or full)")),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionReport {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub measured: Value,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionReport {
    /// One line: `[PASS] 3 intersection capacity: ...`.
    pub fn line(&self) -> String {
        format!(
            "[{}] {:>2} {}: {} ({:.1} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.seconds
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub level: Level,
    pub seed: u64,
    pub all_passed: bool,
    pub criteria: Vec<CriterionReport>,
}

impl VerifyReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data")
    }
}

pub const CRITERIA: [u8; 11] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11];
pub const QUICK: [u8; 4] = [1, 2, 4, 6];

pub fn run(level: Level, seed: u64) -> VerifyReport {
    let ids: &[u8] = match level {
        Level::Quick => &QUICK,
        Level::Full => &CRITERIA,
    };
    let criteria: Vec<CriterionReport> = ids.iter().map(|&id| criterion(id, seed)).collect();
    VerifyReport {
        level,
        seed,
        all_passed: criteria.iter().all(|c| c.passed),
        criteria,
    }
}

pub fn criterion(id: u8, seed: u64) -> CriterionReport {
    let start = Instant::now();
    let (name, passed, measured, detail) = match id {
        1 => normalization(seed),
        2 => ellipsoid_oracle(seed),
        3 => intersection_capacity(seed),
        4 => orbit_census(seed),
        5 => alternating_bound(seed),
        6 => transit_invariant(seed),
        7 => limit_experiment(seed),
        8 => bound_table(seed),
        9 => linear_remark(seed),
        10 => area_chain(seed),
        11 => property_suites(seed),
        _ => ("unknown", false, Value::Null, format!("no criterion {id}")),
    };
    CriterionReport {
        id,
        name,
        passed,
        measured,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

type Outcome = (&'static str, bool, Value, String);

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn normalization(seed: u64) -> Outcome {
    let start = Instant::now();
    let ball = CapacityBall::new(1.0, 2).expect("valid radius");
    match ehz_capacity(&ball, 256, 8, seed) {
        Ok(r) => {
            let secs = start.elapsed().as_secs_f64();
            let ok = rel(r.capacity, 1.0) <= 0.02 && secs < 30.0;
            (
                "normalization",
                ok,
                json!({"capacity": r.capacity, "converged": r.converged, "seconds": secs}),
                format!("c(B4(1)) = {:.6}", r.capacity),
            )
        }
        Err(e) => ("normalization", false, Value::Null, e.to_string()),
    }
}

fn ellipsoid_oracle(seed: u64) -> Outcome {
    let start = Instant::now();
    let mut rows = Vec::new();
    let mut ok = true;
    let mut parts = Vec::new();
    for t in [0.25, 0.5, 0.75] {
        let e = EllipsoidBody::normal_form(&[1.0, t]).expect("valid radii");
        match ehz_capacity(&e, 256, 8, seed) {
            Ok(r) => {
                ok &= rel(r.capacity, t) <= 0.02;
                rows.push(json!({"t": t, "capacity": r.capacity, "converged": r.converged}));
                parts.push(format!("E(1,{t}) = {:.6}", r.capacity));
            }
            Err(e) => {
                ok = false;
                parts.push(e.to_string());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    (
        "ellipsoid oracle",
        ok && secs < 90.0,
        json!({"rows": rows, "seconds": secs}),
        parts.join(", "),
    )
}

fn intersection_capacity(seed: u64) -> Outcome {
    let start = Instant::now();
    let mut rows = Vec::new();
    let mut ok = true;
    let mut parts = Vec::new();
    for t in [0.25, 0.5, 0.75] {
        let body = IntersectionBody::ball_cap_orbit_cylinder(t).expect("t in (0,1)");
        match ehz_capacity(&body, 256, 8, seed) {
            Ok(r) => {
                ok &= rel(r.capacity, t) <= 0.03;
                rows.push(json!({
                    "t": t,
                    "capacity": r.capacity,
                    "converged": r.converged,
                    "grad_norm": r.grad_norm,
                }));
                parts.push(format!("t={t}: {:.6}", r.capacity));
            }
            Err(e) => {
                ok = false;
                parts.push(e.to_string());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    (
        "intersection capacity",
        ok && secs < 600.0,
        json!({"rows": rows, "seconds": secs}),
        parts.join(", "),
    )
}

fn scans(ts: &[f64], seed: u64) -> Result<Vec<ScanResult>, String> {
    ts.iter()
        .map(|&t| min_action_scan(t, SCAN_SAMPLES, seed).map_err(|e| e.to_string()))
        .collect()
}

fn orbit_census(seed: u64) -> Outcome {
    let name = "orbit census";
    let scans = match scans(&[0.25, 0.5, 0.75], seed) {
        Ok(s) => s,
        Err(e) => return (name, false, Value::Null, e),
    };
    let mut ok = true;
    let mut rows = Vec::new();
    for s in &scans {
        let t = s.t;
        let plus = glide_orbit(t, GlideBranch::Plus).map(|o| o.line_action);
        let minus = (t < 0.5).then(|| glide_orbit(t, GlideBranch::Minus).map(|o| o.line_action));
        let plus_err = plus.as_ref().map_or(f64::INFINITY, |a| (a - t).abs());
        let minus_err = match &minus {
            Some(Ok(a)) => (a - t * (3.0 - 4.0 * t * t)).abs(),
            Some(Err(_)) => f64::INFINITY,
            None => 0.0,
        };
        let closed_plus = glide_action(t, GlideBranch::Plus).map_or(f64::INFINITY, |a| (a - t).abs());
        ok &= (s.min_action - t).abs() <= 1e-3
            && plus_err <= 1e-12
            && minus_err <= 1e-12
            && closed_plus <= 1e-12;
        rows.push(json!({
            "t": t,
            "min_action": s.min_action,
            "closed_orbits": s.closed.len(),
            "glide_plus_line_action_error": plus_err,
            "glide_minus_line_action_error": minus_err,
            "glide_minus": s.glide_minus,
        }));
    }
    let detail = scans
        .iter()
        .map(|s| format!("t={}: min {:.9}", s.t, s.min_action))
        .collect::<Vec<_>>()
        .join(", ");
    (name, ok, json!({"rows": rows}), detail)
}

fn alternating_bound(seed: u64) -> Outcome {
    let name = "alternating-orbit bound";
    let scans = match scans(&[0.3, 0.45], seed) {
        Ok(s) => s,
        Err(e) => return (name, false, Value::Null, e),
    };
    let mut ok = true;
    let mut rows = Vec::new();
    let mut parts = Vec::new();
    for s in &scans {
        let actions: Vec<f64> = s.mixed().map(|o| o.action).collect();
        let margin = actions.iter().fold(f64::INFINITY, |m, a| m.min(a - s.t));
        ok &= !actions.is_empty() && margin > 0.0;
        rows.push(json!({"t": s.t, "mixed_orbits": actions.len(), "margin": margin}));
        parts.push(format!("t={}: {} mixed, margin {:.6}", s.t, actions.len(), margin));
    }
    (name, ok, json!({"rows": rows}), parts.join(", "))
}

fn transit_invariant(seed: u64) -> Outcome {
    let name = "S2-transit invariant";
    let ts = [0.25, 0.3, 0.45, 0.5, 0.75];
    let scans = match scans(&ts, seed) {
        Ok(s) => s,
        Err(e) => return (name, false, Value::Null, e),
    };
    let (mut transit, mut sphere) = (0.0f64, 0.0f64);
    let (mut arcs, mut corners) = (0usize, 0usize);
    let mut check_orbit = |o: &crate::orbits::CharacteristicOrbit| {
        for a in &o.arcs {
            if a.kind == ArcKind::S2 {
                arcs += 1;
                for k in 0..2 {
                    let d = (a.start.z_norm_sq(k).sqrt() - a.end.z_norm_sq(k).sqrt()).abs();
                    transit = transit.max(d);
                }
            }
            if a.kind != ArcKind::CornerGlide {
                for p in [&a.start, &a.end] {
                    corners += 1;
                    sphere = sphere.max((p.norm().powi(2) - 1.0 / PI).abs());
                }
            }
        }
    };
    for s in &scans {
        for o in &s.closed {
            check_orbit(o);
        }
    }
    // Unclosed runs from corner starts add more arcs.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5a5a);
    for &t in &ts {
        let frame = OrbitFrame::new(t).expect("t in (0,1)");
        for _ in 0..40 {
            let rho = corner_rho2_max(t).sqrt() * rng.random::<f64>();
            let ang: f64 = rng.random_range(0.0..2.0 * PI);
            let entry = if rng.random::<bool>() { Entry::S1 } else { Entry::S2 };
            if let Some(p) = corner_start(&frame, rho * ang.cos(), rho * ang.sin(), entry) {
                if let Ok(o) = integrate_orbit(&p, &frame, 12, 1e-3) {
                    check_orbit(&o);
                }
            }
        }
    }
    let ok = arcs > 0 && transit <= 1e-7 && sphere <= 1e-9;
    (
        name,
        ok,
        json!({"s2_arcs": arcs, "corner_points": corners, "max_norm_change": transit, "max_sphere_defect": sphere}),
        format!("{arcs} S2 arcs, max |z_k| change {transit:.2e}, max sphere defect {sphere:.2e}"),
    )
}

fn limit_experiment(seed: u64) -> Outcome {
    let name = "limit experiment";
    let k = match (BodySpec::MtImage { t: 0.5, r: 1.0 }).build() {
        Ok(k) => k,
        Err(e) => return (name, false, Value::Null, e.to_string()),
    };
    let opts = EhzOptions::new(256, 8, seed);
    match scaled_limit_experiment(&k, &[1.0, 2.0, 4.0, 8.0], &opts, 0.03) {
        Ok(table) => {
            let caps: Vec<f64> = table.rows.iter().map(|r| r.capacity).collect();
            let noise = 2e-3;
            let monotone = caps.windows(2).all(|w| w[1] <= w[0] + noise);
            let last = *caps.last().unwrap_or(&f64::NAN);
            let ok = monotone && last <= 0.5 + 0.03;
            (
                name,
                ok,
                serde_json::to_value(&table).unwrap_or(Value::Null),
                format!(
                    "c(A^L K) = {}",
                    caps.iter().map(|c| format!("{c:.5}")).collect::<Vec<_>>().join(", ")
                ),
            )
        }
        Err(e) => (name, false, Value::Null, e.to_string()),
    }
}

fn bound_table(_seed: u64) -> Outcome {
    let name = "bound table";
    let grid = GridSpec::percent().values();
    let start = Instant::now();
    let f_ok = grid
        .iter()
        .all(|&t| bound_f(t).is_ok_and(|f| f >= t - 0.07));
    let f_secs = start.elapsed().as_secs_f64();
    let mut embed_err = 0.0f64;
    let mut equal_err = 0.0f64;
    let mut geo_err = 0.0f64;
    let mut dominated = Vec::new();
    let mut failed = Vec::new();
    for &t in &grid {
        let (Ok(f), Ok(s), Ok(i)) = (bound_f(t), bound_simple(t), bound_inradius(t)) else {
            failed.push(t);
            continue;
        };
        match solve_embedding(t) {
            Ok(sol) => {
                embed_err = embed_err.max((sol.capacity - f).abs());
                equal_err = equal_err.max(sol.radius_gap()).max(sol.singular_gap());
            }
            Err(_) => failed.push(t),
        }
        match (bound_simple_geometric(t), bound_inradius_geometric(t)) {
            (Ok(a), Ok(b)) => geo_err = geo_err.max((a - s).abs()).max((b - i).abs()),
            _ => failed.push(t),
        }
        if f < s.max(i) - 1e-12 {
            dominated.push(t);
        }
    }
    let ok = f_ok && f_secs < 1.0 && failed.is_empty() && embed_err <= 1e-5 && geo_err <= 1e-9;
    (
        name,
        ok,
        json!({
            "f_ge_t_minus_007": f_ok,
            "f_check_seconds": f_secs,
            "max_embedding_error": embed_err,
            "max_equalization_gap": equal_err,
            "max_rederivation_error": geo_err,
            "f_not_dominant_at": dominated,
            "failed": failed,
        }),
        format!(
            "|solve - f| <= {embed_err:.1e}, re-derivations <= {geo_err:.1e}, f >= t - 0.07: {f_ok}"
        ),
    )
}

fn linear_remark(seed: u64) -> Outcome {
    let name = "linear-search remark";
    let start = Instant::now();
    let f = bound_f(0.5).expect("t in (0,1)");
    let first = match linear_search(0.5, 10_000, seed) {
        Ok(r) => r,
        Err(e) => return (name, false, Value::Null, e.to_string()),
    };
    let secs = start.elapsed().as_secs_f64();
    let exceeded = first.best > f + 1e-4;
    // An exceedance only fails the criterion if it is large and reproducible.
    let reproduced = exceeded
        && first.improvement > 1e-3
        && linear_search(0.5, 10_000, seed.wrapping_add(1)).is_ok_and(|r| r.improvement > 1e-3);
    let ok = !reproduced && first.above_t == 0 && secs < 120.0;
    (
        name,
        ok,
        json!({"report": first, "f": f, "exceeded": exceeded, "reproduced": reproduced, "seconds": secs}),
        format!(
            "best {:.9} vs f(0.5) = {:.9}, improvement {:.2e}, {} samples above t",
            first.best, f, first.improvement, first.above_t
        ),
    )
}

/// Points of the 50×50 grid where `lower <= exact` fails.
#[derive(Debug, Clone, Serialize)]
pub struct AreaViolation {
    pub t: f64,
    pub h: f64,
    pub excess: f64,
}

/// The `(t, h)` grid of the area criterion: `t = i/51`, `h` evenly spaced
/// over `[0, (1+t)/2]`.
pub fn area_grid() -> Vec<(f64, Vec<f64>)> {
    (1..=50)
        .map(|i| {
            let t = i as f64 / 51.0;
            let hmax = 0.5 * (1.0 + t);
            (t, (0..50).map(|j| hmax * (j as f64 / 49.0)).collect())
        })
        .collect()
}

fn area_chain(_seed: u64) -> Outcome {
    let name = "area feasibility";
    let mut disc_fail = 0;
    let mut violations = Vec::new();
    let mut outside_prediction = 0;
    for (t, hs) in area_grid() {
        let rows = match area_feasibility(t, &hs) {
            Ok(r) => r,
            Err(e) => return (name, false, Value::Null, e.to_string()),
        };
        for r in rows {
            if !r.disc_le_lower || r.disc > r.exact + AREA_TOL {
                disc_fail += 1;
            }
            if !r.lower_le_exact {
                // Where D(1−h) fits inside the ellipse the exact area is 1−h.
                if !(t * t > 1.0 - r.h) {
                    outside_prediction += 1;
                }
                violations.push(AreaViolation {
                    t,
                    h: r.h,
                    excess: r.lower - r.exact,
                });
            }
        }
    }
    let worst = violations.iter().map(|v| v.excess).fold(0.0, f64::max);
    let ok = disc_fail == 0 && violations.is_empty();
    (
        name,
        ok,
        json!({
            "grid_points": 2500,
            "disc_chain_failures": disc_fail,
            "lower_bound_violations": violations.len(),
            "violations_outside_h_gt_1_minus_t2": outside_prediction,
            "worst_excess": worst,
            "violations": violations,
        }),
        format!(
            "disc <= lower and disc <= exact everywhere: {}; lower > exact at {} points (all with h > 1 - t^2: {}), worst excess {:.4}",
            disc_fail == 0,
            violations.len(),
            outside_prediction == 0,
            worst
        ),
    )
}

fn property_suites(seed: u64) -> Outcome {
    let name = "property suites";
    let samples = 1000;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss = |rng: &mut ChaCha8Rng, n: usize| -> Vec<f64> {
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    };

    // Printed matrices are symplectic.
    let mut sym = 0.0f64;
    for _ in 0..samples {
        let t: f64 = rng.random_range(0.01..0.99);
        let d1: f64 = rng.random_range(0.2..5.0);
        let d2: f64 = rng.random_range((1.0 / d1)..(1.0 / d1 + 5.0));
        let n = rng.random_range(2..=4);
        let mats = [
            matrix_mt(t, n).map(|m| m.into_matrix()),
            matrix_a_gw(t, n).map(|m| m.into_matrix()),
            matrix_a_orbit(t).map(|m| m.a_inv.into_matrix()),
            matrix_s(d1, d2, n).map(|m| m.into_matrix()),
        ];
        for m in mats {
            sym = sym.max(m.ok().and_then(|m| symplectic_defect(&m).ok()).unwrap_or(f64::INFINITY));
        }
    }

    // Support-function axioms on balls, ellipsoids and intersections.
    let mut axiom = 0.0f64;
    for k in 0..samples {
        let t: f64 = rng.random_range(0.05..0.95);
        let body: Box<dyn ConvexBody> = match k % 3 {
            0 => Box::new(CapacityBall::new(rng.random_range(0.1..3.0), 2).expect("r > 0")),
            1 => {
                let radii = [rng.random_range(0.1..2.0), rng.random_range(0.1..2.0)];
                Box::new(EllipsoidBody::normal_form(&radii).expect("positive radii"))
            }
            _ => Box::new(IntersectionBody::ball_cap_orbit_cylinder(t).expect("t in (0,1)")),
        };
        let u = gauss(&mut rng, 4);
        let v = gauss(&mut rng, 4);
        let lam: f64 = rng.random_range(0.1..10.0);
        let mut x = vec![0.0; 4];
        let (Some(hu), Some(hv)) = (
            body.support_point(&u, &mut x).finite(),
            body.support(&v).finite(),
        ) else {
            axiom = f64::INFINITY;
            continue;
        };
        let scaled: Vec<f64> = u.iter().map(|a| lam * a).collect();
        let sum: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + b).collect();
        let hl = body.support(&scaled).finite().unwrap_or(f64::INFINITY);
        let hs = body.support(&sum).finite().unwrap_or(f64::INFINITY);
        let attained = (x.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>() - hu).abs();
        let scale = hu.abs().max(1.0);
        axiom = axiom
            .max((hl - lam * hu).abs() / (lam * scale))
            .max((hs - hu - hv).max(0.0) / scale)
            .max(attained / scale);
        if !body.contains(&x, 1e-7) {
            axiom = f64::INFINITY;
        }
    }

    // Arc actions agree with line integrals along integrated orbits.
    let mut action = 0.0f64;
    let mut arcs = 0usize;
    while arcs < samples {
        let t: f64 = rng.random_range(0.1..0.9);
        let frame = OrbitFrame::new(t).expect("t in (0,1)");
        let rho = corner_rho2_max(t).sqrt() * rng.random::<f64>();
        let ang: f64 = rng.random_range(0.0..2.0 * PI);
        let Some(p) = corner_start(&frame, rho * ang.cos(), rho * ang.sin(), Entry::S2) else {
            continue;
        };
        if let Ok(o) = integrate_orbit(&p, &frame, 10, 1e-3) {
            for a in &o.arcs {
                action = action.max((a.action - a.line_action).abs());
                arcs += 1;
            }
        } else {
            arcs += 1;
        }
    }

    // Determinism of the seeded estimators.
    let ball = CapacityBall::new(1.0, 2).expect("r > 0");
    let a = ehz_capacity(&ball, 64, 3, seed).map(|r| r.capacity.to_bits());
    let b = ehz_capacity(&ball, 64, 3, seed).map(|r| r.capacity.to_bits());
    let s1 = min_action_scan(0.4, 30, seed).map(|s| s.summary_json());
    let s2 = min_action_scan(0.4, 30, seed).map(|s| s.summary_json());
    let deterministic = a.is_ok() && a == b && s1.is_ok() && s1 == s2;

    let ok = sym <= 1e-9 && axiom <= 1e-8 && action <= 1e-9 && deterministic;
    (
        name,
        ok,
        json!({
            "samples": samples,
            "max_symplectic_defect": sym,
            "max_support_axiom_defect": axiom,
            "max_action_mismatch": action,
            "arcs_checked": arcs,
            "deterministic": deterministic,
        }),
        format!(
            "symplectic {sym:.1e}, support axioms {axiom:.1e}, action {action:.1e}, deterministic {deterministic}"
        ),
    )
}
