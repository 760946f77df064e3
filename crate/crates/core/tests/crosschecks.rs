use kahlerlab_core::curvature::curvature_from_jet;
use kahlerlab_core::gluelab::*;
use kahlerlab_core::jets::{fd_jet, taylor_jet, ChartPoint};
use kahlerlab_core::masolver::{solve_newton, GridFile, MAProblem, NewtonOptions};
use kahlerlab_core::models::ModelGeometry;
use num_rational::Ratio;

fn setup(c: f64) -> (ModelGeometry, GlueParams) {
    let g = ModelGeometry::bidisc(9, 1, 3, Ratio::new(1, 2)).unwrap().with_b0(4.5);
    (g, GlueParams::constrained(c, 1e-12, Ratio::new(1, 2), Ratio::new(1, 4), 1.0).unwrap())
}

#[test]
fn overlap_curvature_matches_refined_differences() {
    let (g, p) = setup(10.0);
    for label in [RegionLabel::Overlap12, RegionLabel::Overlap13, RegionLabel::Triple] {
        let pt = overlap_point(&g, &p, label).unwrap();
        let glued = GluedPotential::new(&g, 0, &p, PhiProvider::Zero).unwrap();
        let s = glued_scalar_curvature(&glued, &pt).unwrap().scalar;
        // the difference quotient converges to the jet value as the step shrinks
        let errs: Vec<f64> = [0.01, 0.003, 0.001]
            .iter()
            .map(|f| {
                let fd = fd_jet(&glued, &pt, 4, pt.coords[1].norm() * f).unwrap();
                (curvature_from_jet(&fd).unwrap().scalar - s).abs() / s.abs()
            })
            .collect();
        assert!(errs[2] < 1e-3, "{label}: {errs:?}");
        assert!(errs[2] < errs[0], "{label}: {errs:?}");
    }
}

#[test]
fn glued_metric_stays_above_active_components() {
    let (g, p) = setup(10.0);
    let glued = GluedPotential::new(&g, 0, &p, PhiProvider::Zero).unwrap();
    for label in [RegionLabel::Overlap12, RegionLabel::Overlap13, RegionLabel::Overlap23, RegionLabel::Triple] {
        let pt = overlap_point(&g, &p, label).unwrap();
        let (lam, comp) = positivity_check(&glued, &pt).unwrap();
        assert!(lam >= comp - 1e-6, "{label}: {lam} < {comp}");
    }
}

#[test]
fn d_pure_metric_is_theta_metric() {
    let (g, p) = setup(20.0);
    let glued = GluedPotential::new(&g, 0, &p, PhiProvider::Zero).unwrap();
    let theta = g.potential_theta(0).unwrap();
    for wd in [1e-3, 1e-4, 1e-5] {
        let pt = ChartPoint::from_reals(&[(0.6, 0.2), (wd, 0.0)]);
        assert_eq!(glued.classify(&pt).unwrap(), RegionLabel::DPure);
        let a = taylor_jet(&glued, &pt, 2).unwrap();
        let b = taylor_jet(theta.as_ref(), &pt, 2).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let (x, y) = (a.mixed(i, j), b.mixed(i, j));
                assert!((x - y).norm() <= 1e-10 * y.norm().max(1.0));
            }
        }
    }
}

#[test]
fn torus_solution_roundtrips_through_grid_file() {
    let prob = MAProblem::smoothed_divisors(2, 8, 3, 1, 0.1).unwrap();
    let sol = solve_newton(&prob, &NewtonOptions::default()).unwrap();
    let file = GridFile::from_solution(&sol, &prob);
    let back = GridFile::from_bytes(&file.to_bytes()).unwrap();
    assert_eq!(back, file);
    assert_eq!(back.data, sol.phi);
}

#[test]
fn c0_of_a_union_is_the_largest_single_c0() {
    let (g, p) = setup(1.0);
    let ys = [
        ChartPoint::from_reals(&[(0.5, 0.0), (0.5, 0.0)]),
        ChartPoint::from_reals(&[(0.5, 0.0), (0.05, 0.0)]),
        ChartPoint::from_reals(&[(0.2, 0.3), (0.8, 0.0)]),
    ];
    let single: Vec<f64> = ys
        .iter()
        .map(|y| c0_bisection(&g, 0, &p, &PhiProvider::Zero, core::slice::from_ref(y), 1.0, 1e5).unwrap())
        .collect();
    let all = c0_bisection(&g, 0, &p, &PhiProvider::Zero, &ys, 1.0, 1e5).unwrap();
    let max = single.iter().copied().fold(0.0, f64::max);
    assert!((all - max).abs() <= 1e-8 * max, "{single:?} {all}");
}
