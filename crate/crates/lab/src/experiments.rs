//! The five experiments. Each returns its rows and checks; writing is left
//! to the caller.

use kahlerlab_core::curvature::curvature_from_jet;
use kahlerlab_core::gluelab::*;
use kahlerlab_core::jets::{complex_coords, taylor_jet, ChartPoint, FnField, ScalarField};
use kahlerlab_core::masolver::*;
use kahlerlab_core::models::{fubini_study, ModelGeometry};
use kahlerlab_core::regmax::{derivative_scaling, verify_properties, Mollifier, PropertyTolerances, RegMax};
use kahlerlab_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::artifacts::{Bound, Check, Outcome, Row};
use crate::config::{ExperimentConfig, GeometryKind, Validated};
use crate::error::{LabResult, NumericContext};

/// Extra binary artifacts, by file name.
pub type Files = Vec<(String, Vec<u8>)>;

/// Name, toward F, two derivative multi-indices, bound on the growth.
type Probe = (&'static str, bool, [u8; 2], [u8; 2], f64);

pub fn regmax_check(cfg: &ExperimentConfig) -> LabResult<Outcome> {
    let r = &cfg.regmax;
    let seed = cfg.run.seed;
    let mut out = Outcome::default();
    for eta in &r.widths {
        let rm = RegMax::polynomial(eta).numeric("regmax")?;
        let name = format!("properties eta={eta:?}");
        match verify_properties(&rm, r.samples, seed, PropertyTolerances::default()) {
            Ok(p) => out.checks.push(Check::flag(
                name,
                true,
                format!(
                    "{} samples: monotonicity {:.1e}, convexity {:.1e}, bounds {:.1e}, coordinate drop {:.1e}, translation {:.1e}, psh {:.1e}",
                    p.samples, p.monotonicity, p.convexity, p.bounds, p.coordinate_drop, p.translation, p.plurisubharmonicity
                ),
            )),
            Err(e @ Error::PropertyViolation { .. }) => out.checks.push(Check::flag(name, false, e.to_string())),
            Err(e) => return Err(e).numeric("regmax"),
        }
    }
    let widths = log_space(r.scaling_min, r.scaling_max, r.scaling_count);
    for d in derivative_scaling(Mollifier::Polynomial, &widths, r.scaling_samples, seed).numeric("regmax")? {
        let alpha: Vec<f64> = d.alpha.iter().map(|&a| f64::from(a)).collect();
        out.rows.push(Row::new("scaling", &alpha, "REGMAX").driver(d.predicted).scalar(d.fit.slope));
        out.checks.push(Check::slope(format!("scaling alpha={:?}", d.alpha), Bound::Within, &d.fit, d.predicted, r.slope_tol));
    }
    Ok(out)
}

fn flat() -> FnField {
    FnField::new(2, |x| {
        let z = complex_coords(x);
        Ok(&z[0].norm_sqr() + &z[1].norm_sqr().scale(2.0))
    })
}

pub fn curvature_truth(cfg: &ExperimentConfig) -> LabResult<Outcome> {
    let c = &cfg.curvature;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.run.seed);
    let mut out = Outcome::default();
    let models: [(&str, FnField, f64); 3] = [("flat-C2", flat(), 0.0), ("fubini-study-P1", fubini_study(1), 2.0), ("fubini-study-P2", fubini_study(2), 6.0)];
    for (name, field, want) in &models {
        let mut vals = Vec::with_capacity(c.points);
        for _ in 0..c.points {
            let z: Vec<(f64, f64)> = (0..field.dim()).map(|_| (rng.random_range(-c.radius..c.radius), rng.random_range(-c.radius..c.radius))).collect();
            let p = ChartPoint::from_reals(&z);
            let curv = curvature_from_jet(&taylor_jet(field, &p, 4).numeric("curvature")?).numeric("curvature")?;
            let r2: f64 = z.iter().map(|(a, b)| a * a + b * b).sum();
            out.rows.push(Row::new(*name, &p.reals(), "-").driver(r2).scalar(curv.scalar).eigen_range(curv.metric.eigen_range()));
            vals.push(curv.scalar);
        }
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let sd = (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64).sqrt();
        out.checks.push(Check::new(format!("{name} mean S"), Bound::Within, mean, *want, c.tol).detail(format!("{} points", vals.len())));
        out.checks.push(Check::new(format!("{name} stdev S"), Bound::AtMost, sd, 0.0, c.tol));
    }
    Ok(out)
}

fn wave(x: &[f64]) -> f64 {
    0.1 * x[0].cos() * x[3].cos() + 0.05 * (x[0] + x[2]).sin() + 0.08 * (x[1] - x[2]).cos()
}

fn sup_diff(a: &[f64], b: impl Fn(usize) -> f64) -> f64 {
    a.iter().enumerate().map(|(i, v)| (v - b(i)).abs()).fold(0.0, f64::max)
}

fn solution_row(series: &str, point: &[f64], driver: Option<f64>, s: &MASolution) -> Row {
    let mut r = Row::new(series, point, "TORUS").eigen_range((s.min_eigenvalue(), s.max_eigenvalue()));
    r.driver = driver;
    r
}

/// Newton solves on the flat torus; also returns one grid file per
/// smoothing scale.
pub fn ma_solve(cfg: &ExperimentConfig) -> LabResult<(Outcome, Files)> {
    let s = &cfg.solver;
    let (l, m, a_n) = (cfg.geometry.l, cfg.geometry.m, cfg.glue.a_n);
    let opts = NewtonOptions {
        tol: s.tol,
        accept_tol: s.accept_tol,
        max_iter: s.max_iter,
        damping: 1.0,
        linear_tol: s.linear_tol,
        linear_max_iter: s.linear_max_iter,
    };
    let mut out = Outcome::default();
    let mut files = Files::new();

    let u = solve(&MAProblem::uniform(s.n, s.grid).numeric("masolver")?, &opts).numeric("masolver")?;
    let e = u.phi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    out.rows.push(solution_row("uniform", &[], None, &u));
    out.checks.push(Check::new("uniform density sup|phi|", Bound::AtMost, e, 0.0, 1e-10));

    let prob = MAProblem::manufactured(s.n, s.grid, wave).numeric("masolver")?;
    let sol = solve_newton(&prob, &opts).numeric("masolver")?;
    let mean = (0..prob.grid.len()).map(|i| wave(&prob.grid.point(i))).sum::<f64>() / prob.grid.len() as f64;
    let err = sup_diff(&sol.phi, |i| wave(&prob.grid.point(i)) - mean);
    out.rows.push(solution_row("manufactured", &[], None, &sol));
    out.checks.push(Check::new("manufactured recovery sup error", Bound::AtMost, err, 0.0, 1e-6).detail(format!("{} Newton steps", sol.history.len() - 1)));
    let ratios = sol.tail_ratios();
    out.checks.push(Check::flag(
        "manufactured quadratic Newton tail",
        !ratios.is_empty() && sol.quadratic_tail(1e3),
        format!("r_(k+1)/r_k^2 = {ratios:.3?}"),
    ));
    out.checks.push(Check::new("manufactured mass defect", Bound::AtMost, sol.mass_defect, 0.0, 1e-8));

    let mut a_fits = Vec::new();
    let mut sols = Vec::new();
    for &delta in &s.deltas {
        let mut prob = MAProblem::smoothed_divisors(s.n, s.grid, l, m, delta).numeric("masolver")?;
        if let Some(p) = s.p {
            prob = prob.with_lp_exponent(p).numeric("masolver")?;
        }
        let sol = solve_newton(&prob, &opts).numeric("masolver")?;
        let paun = paun_bound_check(&sol, &prob).numeric("masolver")?;
        out.rows.push(solution_row("continuation", &sol.grid.point(paun.argmax), Some(delta), &sol));
        out.checks.push(
            Check::new(format!("delta={delta:e} fitted A"), Bound::Info, paun.a_fit, 0.0, 0.0)
                .detail(format!("lambda_min {:.4}, max Lambda/lambda {:.3}, osc {:.4}", paun.min_eigenvalue, paun.ellipticity, sol.osc)),
        );
        files.push((format!("ma-solve-delta-{delta:e}.grid"), GridFile::from_solution(&sol, &prob).to_bytes()));
        a_fits.push(paun.a_fit);
        sols.push((prob, sol));
    }
    let ratio = a_fits.iter().copied().fold(0.0, f64::max) / a_fits.iter().copied().fold(f64::INFINITY, f64::min);
    out.checks.push(Check::new("continuation max A / min A", Bound::AtMost, ratio, s.a_ratio_max, 0.0));

    let sep = SeparableSolution::new(l, m).numeric("masolver")?;
    for (i, r) in separable_estimates(&sep, a_n, 1e-3, 1e-1, 7).numeric("masolver")?.iter().enumerate() {
        let name = format!("separable {} vs {}", r.quantity, r.driver);
        let c = match r.expected {
            Some(e) if i < 2 => Check::slope(name, Bound::Within, &r.fit, e, 0.02),
            _ => Check::slope(name, Bound::AtLeast, &r.fit, r.bound, r.slack),
        };
        out.checks.push(c);
    }

    let (af, lf, mf) = (f64::from(a_n), f64::from(l), f64::from(m));
    let radius = 2.0 * sols[0].1.grid.spacing();
    let probes: [Probe; 4] = [
        ("d4_F", true, [2, 0], [2, 0], -2.0 - 2.0 * af / lf),
        ("d4_D", false, [0, 2], [0, 2], -2.0 - 2.0 * af * mf / lf),
        ("d3_F", true, [2, 0], [1, 0], -1.0 - 2.0 * af / lf),
        ("d3_D", false, [0, 2], [0, 1], -1.0 - 2.0 * af * mf / lf),
    ];
    for (name, at_f, da, db, bound) in probes {
        let vals: Vec<f64> = sols
            .iter()
            .map(|(p, s)| {
                let c = if at_f { p.f_center.clone() } else { p.d_center.clone() };
                local_derivative_max(s, &c.unwrap_or_default(), radius, &da, &db)
            })
            .collect();
        let r = continuation_exponent(&s.deltas, &vals, name, bound, 0.1).numeric("masolver")?;
        out.checks.push(Check::slope(format!("torus {name} vs sqrt(delta)"), Bound::AtLeast, &r.fit, bound, 0.1));
    }
    Ok((out, files))
}

fn decay_rows(out: &mut Outcome, series: &str, rows: &[DecayRow]) {
    for r in rows {
        out.rows.push(Row::new(series, &r.point, r.label.as_str()).driver(r.driver).scalar(r.scalar).eigen_range(r.eigen_range));
    }
}

pub fn glue_scan(cfg: &ExperimentConfig, val: &Validated) -> LabResult<Outcome> {
    let gl = &cfg.glue;
    let geom = &val.geometry;
    let base = val.glue;
    let cs = log_space(gl.c_min, gl.c_max, gl.c_count);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.run.seed);
    let mut out = Outcome::default();

    // piecewise identity on PURE points with a wide dominance margin
    let mid = base.with_c((gl.c_min * gl.c_max).sqrt());
    let glued = GluedPotential::new(geom, 0, &mid, PhiProvider::Zero).numeric("gluelab")?;
    let comps = glued.components();
    let eta_max = mid.eta().iter().copied().fold(0.0, f64::max);
    let (mut worst, mut count) = (0.0f64, 0usize);
    for _ in 0..200 * gl.samples {
        if count == gl.samples {
            break;
        }
        let rd = 10f64.powf(rng.random_range(-6.0..0.0));
        let rf = 10f64.powf(rng.random_range(-3.0..0.0));
        let (t1, t2) = (rng.random_range(0.0..std::f64::consts::TAU), rng.random_range(0.0..std::f64::consts::TAU));
        let p = ChartPoint::from_reals(&[(rf * t1.cos(), rf * t1.sin()), (rd * t2.cos(), rd * t2.sin())]);
        let Ok(vals) = glued.values(&p) else { continue };
        let label = label_for(&vals, &glued.eta());
        if !label.is_pure() || dominance_margin(&vals, &glued.eta()) < 10.0 * eta_max {
            continue;
        }
        let k = match label {
            RegionLabel::DPure => 0,
            RegionLabel::FPure => 1,
            _ => 2,
        };
        let a = taylor_jet(&glued, &p, 4).numeric("gluelab")?;
        let b = taylor_jet(comps[k].as_ref(), &p, 4).numeric("gluelab")?;
        let scale = b.max_partial();
        for (x, y) in a.series().coeffs().iter().zip(b.series().coeffs()) {
            worst = worst.max((x - y).norm() / scale);
        }
        out.rows.push(Row::new("piecewise", &p.reals(), label.as_str()).driver(mid.c));
        count += 1;
    }
    out.checks.push(
        Check::new("piecewise identity jet defect", Bound::AtMost, worst, 0.0, 1e-10).detail(format!("{count} PURE points at c = {:.4}", mid.c)),
    );
    out.checks.push(Check::flag("piecewise sample size", count == gl.samples, format!("{count} of {} requested", gl.samples)));

    // c₀ of a compact sample set, then S at twice that c
    let ys: Vec<ChartPoint> = (0..12)
        .map(|_| ChartPoint::from_reals(&[(rng.random_range(0.2..0.7), rng.random_range(-0.3..0.3)), (rng.random_range(0.2..0.7), rng.random_range(-0.3..0.3))]))
        .collect();
    let c0 = c0_bisection(geom, 0, &base, &PhiProvider::Zero, &ys, 1e-3, 1e6).numeric("gluelab")?;
    out.checks.push(Check::new("c0 of the interior sample set", Bound::Info, c0, 0.0, 0.0).detail(format!("{} points", ys.len())));
    let inner = GluedPotential::new(geom, 0, &base.with_c(2.0 * c0), PhiProvider::Zero).numeric("gluelab")?;
    let mut s_max = 0.0f64;
    for y in &ys {
        let g = glued_scalar_curvature(&inner, y).numeric("gluelab")?;
        out.rows.push(Row::new("interior", &y.reals(), g.label.as_str()).driver(2.0 * c0).scalar(g.scalar).eigen_range(g.eigen_range));
        s_max = s_max.max(g.scalar.abs());
    }
    out.checks.push(Check::new("INTERIOR_PURE max |S|", Bound::AtMost, s_max, 0.0, 1e-6));

    for &label in &val.labels {
        let pt = overlap_point(geom, &base, label).numeric("gluelab")?;
        let g = GluedPotential::new(geom, 0, &base, PhiProvider::Zero).numeric("gluelab")?;
        let (lam, comp) = positivity_check(&g, &pt).numeric("gluelab")?;
        out.checks.push(Check::new(format!("positivity at {label}"), Bound::AtLeast, lam, comp, 1e-6));
        if label == RegionLabel::Overlap23 {
            let mut ok = true;
            for &c in &cs {
                let p = overlap_point(geom, &base.with_c(c), label).numeric("gluelab")?;
                ok &= overlap23_side_condition(geom, 0, base.v, gl.a_n, &p);
            }
            out.checks.push(Check::flag("side condition along the OVERLAP_23 sweep", ok, format!("{} values of c", cs.len())));
        }
        let r = c_sweep(geom, &base, label, &cs, gl.slack).numeric("gluelab")?;
        decay_rows(&mut out, &format!("c_sweep/{label}"), &r.rows);
        out.checks.push(
            Check::slope(format!("c-sweep {label} slope of log|S| vs log c"), Bound::AtMost, &r.fit, r.predicted, gl.slack)
                .detail(format!("c in [{}, {}]", gl.c_min, gl.c_max)),
        );
    }
    Ok(out)
}

/// Start points of the normal paths toward `D` and toward `F`.
fn decay_anchors(kind: GeometryKind) -> (ChartPoint, ChartPoint) {
    let d = match kind {
        // (0.3, 0.045) lies on z₁² = 2z₂
        GeometryKind::P2Conic => ChartPoint::from_reals(&[(0.3, 0.0), (0.045, 0.0)]),
        _ => ChartPoint::from_reals(&[(0.3, 0.0), (0.0, 0.0)]),
    };
    (d, ChartPoint::from_reals(&[(0.0, 0.0), (0.4, 0.2)]))
}

pub fn decay_fit(cfg: &ExperimentConfig, val: &Validated) -> LabResult<Outcome> {
    let d = &cfg.decay;
    let dg: &ModelGeometry = &val.decay_geometry;
    let (qd, qf) = decay_anchors(cfg.decay.geometry);
    let v = cfg.glue.v;
    let kappa = val.glue.kappa_f64();
    let beta = f64::from(dg.beta);
    let mut out = Outcome::default();

    let w = d.omega0_window;
    let r = omega0_decay(dg, 0, &qd, w[0], w[1], d.count, d.slack).numeric("gluelab")?;
    decay_rows(&mut out, "omega0", &r.rows);
    out.checks.push(Check::slope("omega0 slope of log|S| vs log|sigma_D|^2", Bound::AtLeast, &r.fit, r.predicted, d.slack));

    let w = d.gamma_window;
    let r = gamma_decay(dg, 0, v, kappa, &qf, w[0], w[1], d.count, 1.0 / beta, d.slack).numeric("gluelab")?;
    decay_rows(&mut out, "gamma", &r.rows);
    out.checks.push(Check::slope("gamma pre-floor slope of log|S| vs log|sigma_F|^2", Bound::AtLeast, &r.fit, r.predicted, d.slack));

    let w = d.floor_window;
    let r = gamma_decay(dg, 0, v, kappa, &qf, w[0], w[1], d.count, 0.0, 0.0).numeric("gluelab")?;
    decay_rows(&mut out, "gamma_floor", &r.rows);
    let lo = r.rows.first().map_or(f64::NAN, |x| x.eigen_range.0);
    out.checks.push(
        Check::new("gamma floor eigenvalue spread", Bound::AtMost, r.eigen_spread(), 0.0, d.floor_spread)
            .detail(format!("lambda_min = {:.4} v^(-1/beta)", lo * v.powf(1.0 / beta))),
    );
    let mut c = Check::slope("gamma floor slope of log|S| vs log|sigma_F|^2", Bound::Info, &r.fit, 0.0, 0.0);
    c.detail = "recorded; saturation is judged by the eigenvalue spread".into();
    out.checks.push(c);

    let g = &val.geometry;
    let pre = quadratic_term_check(g, v, d.quadratic_other, (d.theta_window[0], d.theta_window[1]), (d.g_window[0], d.g_window[1]), d.count)
        .numeric("gluelab")?;
    let floor = quadratic_term_check(g, v, d.quadratic_other, (d.theta_window[0], d.theta_window[1]), (d.g_floor_window[0], d.g_floor_window[1]), d.count)
        .numeric("gluelab")?;
    for r in pre.iter().chain(floor.iter().skip(2)) {
        let mut c = Check::new(format!("growth {}", r.name), Bound::AtMost, r.growth(), r.bound, r.slack);
        c.stderr = Some(r.fit.stderr);
        c.ci95 = Some([-r.fit.ci95.1, -r.fit.ci95.0]);
        out.checks.push(c);
    }
    Ok(out)
}
