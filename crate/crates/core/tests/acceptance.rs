//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use rand::Rng;
use steplen::dynsys::{backward_step, step_matrix, EulerMap, LinearSystem, Method, StepMap};
use steplen::invariance::{
    cross_positive_polyhedral, discrete_ellipsoid, discrete_lorenz, discrete_polyhedron, lorenz_test, Outcome, Verdict,
};
use steplen::numkernel::{spectral_norm, Matrix, Vector};
use steplen::oracle::{sample_verify, singularity_scan};
use steplen::sets::{classify_point, Ellipsoid, LocationKind, PolyhedralCone, SetSpec};
use steplen::thresholds::{
    backward_euler_uniform, forward_euler_uniform_polyhedron, local_backward_euler, optimal_uniform, tau_bar,
    DEFAULT_TOL_DT,
};
use steplen::Error;

const TOL: f64 = 1e-9;
const ORACLE_SAMPLES: usize = 10_000;
const ORACLE_SEED: u64 = 2024;

/// An exact verdict kept for the sampling cross-check.
struct Record {
    a: Matrix,
    method: Method,
    dt: f64,
    set: SetSpec,
    verdict: Verdict,
}

#[derive(Default)]
struct Ctx {
    records: Vec<Record>,
    max_dim: usize,
}

impl Ctx {
    fn record(&mut self, a: &Matrix, method: Method, dt: f64, set: &SetSpec, verdict: Verdict) {
        self.max_dim = self.max_dim.max(a.nrows());
        self.records.push(Record { a: a.clone(), method, dt, set: set.clone(), verdict });
    }
}

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

type Outcome_ = Result<String, String>;

fn step(a: &Matrix, m: Method, dt: f64) -> Matrix {
    step_matrix(&LinearSystem::new(a.clone()).unwrap(), m, dt).unwrap()
}

fn ellipsoid(s: &SetSpec) -> &Ellipsoid {
    match s {
        SetSpec::Ellipsoid(e) => e,
        _ => unreachable!(),
    }
}

fn lorenz(s: &SetSpec) -> &steplen::sets::LorenzCone {
    match s {
        SetSpec::LorenzCone(c) => c,
        _ => unreachable!(),
    }
}

fn rotation_disk(ctx: &mut Ctx) -> Outcome_ {
    let (a, s) = rotation();
    let e = ellipsoid(&s);
    for dt in [0.01, 0.1, 1.0] {
        let m = step(&a, Method::ForwardEuler, dt);
        let v = discrete_ellipsoid(&m, e, TOL).map_err(|e| e.to_string())?;
        ensure!(v.outcome == Outcome::Fails, "forward Euler at dt={dt}: {:?}", v.outcome);
        let w = v.witness_vector().unwrap();
        ensure!((e.level(&w) - 1.0).abs() <= 1e-12, "witness not on the circle at dt={dt}");
        let growth = (&m * &w).norm_squared() - (1.0 + dt * dt) * w.norm_squared();
        ensure!(growth.abs() <= 1e-12, "image norm^2 off by {growth:e} at dt={dt}");
        ctx.record(&a, Method::ForwardEuler, dt, &s, v);
    }
    for dt in [0.1, 1.0, 10.0, 1000.0] {
        let v = discrete_ellipsoid(&step(&a, Method::BackwardEuler, dt), e, TOL).map_err(|e| e.to_string())?;
        ensure!(v.outcome == Outcome::Holds, "backward Euler at dt={dt}: {:?}", v.outcome);
        ctx.record(&a, Method::BackwardEuler, dt, &s, v);
    }
    let r = backward_euler_uniform(&a, &s, TOL, false).map_err(|e| e.to_string())?;
    ensure!(r.value == f64::INFINITY, "backward-Euler uniform threshold {}", r.value);
    Ok("FE fails at 3 steplengths, BE holds at 4, uniform BE threshold inf".into())
}

fn spiral_lorenz(ctx: &mut Ctx) -> Outcome_ {
    let (a, s) = spiral_cone();
    let c = lorenz(&s);
    for k in 1..=20 {
        let dt = k as f64 / 20.0;
        let v = discrete_lorenz(&step(&a, Method::ForwardEuler, dt), c, TOL).map_err(|e| e.to_string())?;
        ensure!(v.outcome == Outcome::Fails, "forward Euler at dt={dt}: {:?} ({})", v.outcome, v.certificate);
        ctx.record(&a, Method::ForwardEuler, dt, &s, v);
    }
    for k in 0..20 {
        let dt = 0.99 * k as f64 / 19.0;
        let v = discrete_lorenz(&step(&a, Method::BackwardEuler, dt), c, TOL).map_err(|e| e.to_string())?;
        ensure!(v.outcome == Outcome::Holds, "backward Euler at dt={dt}: {:?} ({})", v.outcome, v.certificate);
        ctx.record(&a, Method::BackwardEuler, dt, &s, v);
    }
    let r = optimal_uniform(&a, &s, Method::BackwardEuler, None, TOL, DEFAULT_TOL_DT).map_err(|e| e.to_string())?;
    ensure!((r.value - 1.0).abs() <= 1e-6, "optimal BE threshold {}", r.value);
    Ok(format!("FE fails on 20 points, BE holds on 20 points, optimal BE = {:.12}", r.value))
}

fn symmetric_wedge(ctx: &mut Ctx) -> Outcome_ {
    let (a, s) = wedge();
    let c = lorenz(&s);
    let t = tau_bar(&a).map_err(|e| e.to_string())?;
    ensure!((t.value - 0.25).abs() <= 1e-12 && !t.inclusive, "tau_bar {} inclusive={}", t.value, t.inclusive);
    let r = optimal_uniform(&a, &s, Method::BackwardEuler, None, TOL, DEFAULT_TOL_DT).map_err(|e| e.to_string())?;
    ensure!((r.value - 0.25).abs() <= 1e-9, "optimal BE threshold {}", r.value);

    let grid = 100_000;
    let step_dt = 1.0 / (grid - 1) as f64;
    let hits = singularity_scan(&a, 1.0, grid, 1e-12).map_err(|e| e.to_string())?;
    ensure!(hits.len() == 2, "singularity scan found {hits:?}");
    ensure!(hits[0].contains(0.25, step_dt) && hits[1].contains(0.5, step_dt), "singularity scan found {hits:?}");

    // beyond 1/2 the quadratic condition is met again but the cone is reversed
    let spurious = r.diagnostic("spurious_branch_points").unwrap_or(0.0);
    let beyond = r.diagnostic("scan_holds_beyond").unwrap_or(-1.0);
    ensure!(spurious > 0.0 && beyond == 0.0, "post-hoc scan: spurious={spurious}, holds beyond={beyond}");
    for dt in [0.6, 0.75, 2.0] {
        let m = step(&a, Method::BackwardEuler, dt);
        let t = lorenz_test(&m, c).map_err(|e| e.to_string())?;
        ensure!(t.quadratic_holds(TOL) && !t.orientation_holds(TOL), "dt={dt} is not on the reversed branch");
        let v = discrete_lorenz(&m, c, TOL).map_err(|e| e.to_string())?;
        ensure!(v.outcome == Outcome::Fails, "dt={dt} not rejected: {:?}", v.outcome);
        ctx.record(&a, Method::BackwardEuler, dt, &s, v);
    }
    for dt in [0.05, 0.1, 0.2, 0.24, 0.3, 0.4] {
        let v = discrete_lorenz(&step(&a, Method::BackwardEuler, dt), c, TOL).map_err(|e| e.to_string())?;
        let expect = if dt < 0.25 { Outcome::Holds } else { Outcome::Fails };
        ensure!(v.outcome == expect, "dt={dt}: {:?}", v.outcome);
        ctx.record(&a, Method::BackwardEuler, dt, &s, v);
    }
    Ok(format!(
        "tau_bar = {}, optimal BE = {:.12}, singular at [{:.6}, {:.6}] and [{:.6}, {:.6}], {} reversed-branch scan points rejected",
        t.value, r.value, hits[0].lo, hits[0].hi, hits[1].lo, hits[1].hi, spurious
    ))
}

fn ellipsoid_backward_euler(ctx: &mut Ctx) -> Outcome_ {
    let mut rng = rng(4);
    let dts = [1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0];
    let mut checks = 0;
    for i in 0..200 {
        let n = 2 + i % 5;
        let rank = rng.random_range(1..=n);
        let inst = flow_invariant(&mut rng, n, rank);
        let s: SetSpec = Ellipsoid::new(inst.q.clone()).map_err(|e| e.to_string())?.into();
        for &dt in &dts {
            let v = discrete_ellipsoid(&step(&inst.a, Method::BackwardEuler, dt), ellipsoid(&s), TOL)
                .map_err(|e| e.to_string())?;
            ensure!(v.outcome == Outcome::Holds, "instance {i} (n={n}) dt={dt}: {:?} margin {:e}", v.outcome, v.margin);
            ctx.record(&inst.a, Method::BackwardEuler, dt, &s, v);
            checks += 1;
        }
    }
    Ok(format!("{checks} backward-Euler checks on 200 instances, zero failures"))
}

fn gamma_soundness(_ctx: &mut Ctx) -> Outcome_ {
    let mut rng = rng(5);
    let (mut counts, mut skipped) = ([0usize; 3], 0usize);
    for i in 0..100 {
        let n = 2 + i % 2;
        let inst = flow_invariant(&mut rng, n, 1);
        let e = Ellipsoid::new(inst.q.clone()).map_err(|e| e.to_string())?;
        let s: SetSpec = e.clone().into();
        let to_boundary = |v: &Vector| v / e.level(v).sqrt();
        let mut points: Vec<(&str, Vector)> = Vec::new();
        for _ in 0..3 {
            let r: f64 = rng.random_range(0.05..0.95);
            points.push(("interior", to_boundary(&random_unit(&mut rng, n)) * r));
        }
        for _ in 0..2 {
            points.push(("boundary-inward", to_boundary(&random_unit(&mut rng, n))));
        }
        // the velocity is tangential exactly where x is orthogonal to the range of S
        let f = inst.s.column(0).normalize();
        let mut t = random_unit(&mut rng, n);
        t -= &f * f.dot(&t);
        points.push(("boundary-tangential", to_boundary(&t)));

        let sys = LinearSystem::new(inst.a.clone()).unwrap();
        let a_norm = spectral_norm(&inst.a);
        for (want, x) in points {
            let r = match local_backward_euler(&inst.a, &s, &x, TOL) {
                Ok(r) => r,
                Err(Error::BranchPreconditionFailed(_)) if want == "boundary-tangential" => {
                    skipped += 1;
                    continue;
                }
                Err(err) => return Err(format!("instance {i}, {want}: {err}")),
            };
            let got = r.branch.clone().unwrap_or_default();
            ensure!(got == want, "instance {i}: expected branch {want}, got {got}");
            ensure!(r.value > 0.0 && r.value < 1.0 / a_norm, "instance {i}: gamma {} outside (0, 1/||A||)", r.value);
            counts[["interior", "boundary-inward", "boundary-tangential"].iter().position(|b| *b == want).unwrap()] += 1;
            for k in 0..20 {
                let dt = r.value * k as f64 / 20.0;
                let y = backward_step(&sys, dt, &x).map_err(|e| e.to_string())?;
                let loc = classify_point(&s, &y, TOL).map_err(|e| e.to_string())?;
                ensure!(loc.kind != LocationKind::Outside, "instance {i}, {want}, dt={dt}: image margin {:e}", loc.margin);
            }
        }
    }
    ensure!(counts[2] > 0, "no tangential point was constructible");
    Ok(format!(
        "interior {}, inward {}, tangential {} (not constructible: {skipped}), 20 steplengths each, zero exits",
        counts[0], counts[1], counts[2]
    ))
}

fn square_forward_euler(ctx: &mut Ctx) -> Outcome_ {
    let a = -Matrix::identity(2, 2);
    let p = unit_square();
    let s: SetSpec = p.clone().into();
    let r = forward_euler_uniform_polyhedron(&a, &p, TOL).map_err(|e| e.to_string())?;
    ensure!((r.value - 1.0).abs() <= 1e-12 && r.inclusive, "ratio test gives {}", r.value);
    // a zero band would admit dt = 1 + band, so the bisection runs with a tight tolerance
    let o = optimal_uniform(&a, &s, Method::ForwardEuler, Some(10.0), 1e-12, DEFAULT_TOL_DT).map_err(|e| e.to_string())?;
    ensure!((o.value - r.value).abs() <= 1e-9, "optimal {} vs ratio test {}", o.value, r.value);
    let v = discrete_polyhedron(&step(&a, Method::ForwardEuler, 1.01), &p, TOL).map_err(|e| e.to_string())?;
    ensure!(v.outcome == Outcome::Fails, "dt=1.01: {:?}", v.outcome);
    ensure!(v.witness.as_deref() == Some(&[1.0, 1.0][..]), "witness {:?}", v.witness);
    ctx.record(&a, Method::ForwardEuler, 1.01, &s, v);
    for dt in [0.25, 0.5, 1.0] {
        let v = discrete_polyhedron(&step(&a, Method::ForwardEuler, dt), &p, TOL).map_err(|e| e.to_string())?;
        ensure!(v.outcome == Outcome::Holds, "dt={dt}: {:?}", v.outcome);
        ctx.record(&a, Method::ForwardEuler, dt, &s, v);
    }
    Ok(format!("ratio test = {}, optimal = {:.12}, dt=1.01 fails at vertex (1,1)", r.value, o.value))
}

fn oracle_agreement(ctx: &mut Ctx) -> Outcome_ {
    let (mut holds, mut fails, mut other) = (0, 0, 0);
    for (i, rec) in ctx.records.iter().enumerate() {
        let map = EulerMap::new(LinearSystem::new(rec.a.clone()).unwrap(), rec.method);
        match rec.verdict.outcome {
            Outcome::Holds => {
                let r = sample_verify(&map, rec.dt, &rec.set, ORACLE_SAMPLES, ORACLE_SEED, TOL).map_err(|e| e.to_string())?;
                ensure!(
                    r.violations == 0,
                    "record {i} ({} {} dt={}): exact Holds but {} sampled violations",
                    rec.set.kind(),
                    rec.method,
                    rec.dt,
                    r.violations
                );
                holds += 1;
            }
            Outcome::Fails => {
                let w = rec.verdict.witness_vector().ok_or(format!("record {i}: Fails without witness"))?;
                let inside = classify_point(&rec.set, &w, TOL).map_err(|e| e.to_string())?;
                ensure!(inside.is_member(), "record {i}: witness is not in the set");
                let y = map.apply(rec.dt, &w).map_err(|e| e.to_string())?;
                let loc = classify_point(&rec.set, &y, TOL).map_err(|e| e.to_string())?;
                ensure!(loc.kind == LocationKind::Outside, "record {i}: witness image is {:?}", loc.kind);
                fails += 1;
            }
            Outcome::Inconclusive => other += 1,
        }
    }
    ensure!(other == 0, "{other} exact checks were inconclusive");
    Ok(format!("{holds} Holds verdicts confirmed by {ORACLE_SAMPLES}-point sampling, {fails} witnesses re-violate"))
}

fn metzler(ctx: &mut Ctx) -> Outcome_ {
    let mut rng = rng(8);
    let orthant = PolyhedralCone::orthant(4);
    let (mut agree, mut n_holds) = (0, 0);
    for i in 0..100 {
        let mut a = Matrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
        if i % 2 == 0 {
            a = a.map(f64::abs);
            // put some entries right at the tolerance edge
            let (r, c) = (rng.random_range(0..4), rng.random_range(0..4));
            if r != c {
                a[(r, c)] = [0.0, -1e-12, -1e-6][i % 3];
            }
        }
        let min_off = (0..4)
            .flat_map(|r| (0..4).map(move |c| (r, c)))
            .filter(|(r, c)| r != c)
            .map(|(r, c)| a[(r, c)])
            .fold(f64::INFINITY, f64::min);
        let v = cross_positive_polyhedral(&a, &orthant, TOL).map_err(|e| e.to_string())?;
        ensure!(v.holds_p() == (min_off >= -TOL), "matrix {i}: verdict {:?}, min off-diagonal {min_off:e}", v.outcome);
        agree += 1;
        n_holds += v.holds_p() as usize;
    }
    ctx.max_dim = ctx.max_dim.max(4);
    Ok(format!("{agree}/100 agree ({n_holds} cross-positive)"))
}

struct Criterion {
    id: u8,
    name: &'static str,
    budget: Duration,
    run: fn(&mut Ctx) -> Outcome_,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { id: 1, name: "rotation on the unit disk", budget: Duration::from_secs(1), run: rotation_disk },
        Criterion { id: 2, name: "spiral on a 3-D Lorenz cone", budget: Duration::from_secs(5), run: spiral_lorenz },
        Criterion { id: 3, name: "symmetric system on a planar cone", budget: Duration::from_secs(2), run: symmetric_wedge },
        Criterion { id: 4, name: "backward Euler on flow-invariant ellipsoids", budget: Duration::from_secs(30), run: ellipsoid_backward_euler },
        Criterion { id: 5, name: "local threshold soundness", budget: Duration::from_secs(30), run: gamma_soundness },
        Criterion { id: 6, name: "forward Euler on the unit square", budget: Duration::from_secs(1), run: square_forward_euler },
        Criterion { id: 7, name: "exact checks agree with sampling", budget: Duration::from_secs(60), run: oracle_agreement },
        Criterion { id: 8, name: "cross-positivity on the orthant is Metzler", budget: Duration::from_secs(2), run: metzler },
    ];
    let start = Instant::now();
    let mut ctx = Ctx::default();
    let mut failed = 0;
    for c in &criteria {
        let t0 = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(|| (c.run)(&mut ctx))).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let took = t0.elapsed();
        let res = match res {
            Ok(d) if took > c.budget => Err(format!("{d}; over budget")),
            r => r,
        };
        let (tag, detail) = match &res {
            Ok(d) => ("PASS", d.as_str()),
            Err(d) => ("FAIL", d.as_str()),
        };
        failed += res.is_err() as usize;
        println!("{tag} criterion {} {} ({:.2}s / {}s): {detail}", c.id, c.name, took.as_secs_f64(), c.budget.as_secs());
    }
    let total = start.elapsed();
    let ok9 = total < Duration::from_secs(180) && ctx.max_dim <= 10;
    failed += !ok9 as usize;
    println!(
        "{} criterion 9 suite wall clock ({:.2}s / 180s): max dimension {}",
        if ok9 { "PASS" } else { "FAIL" },
        total.as_secs_f64(),
        ctx.max_dim
    );
    if failed == 0 {
        println!("acceptance: all 9 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    }
}
