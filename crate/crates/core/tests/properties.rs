use kahlerlab_core::gluelab::{dominance_margin, label_for, GlueParams, RegionLabel};
use kahlerlab_core::regmax::RegMax;
use num_rational::Ratio;
use proptest::prelude::*;

fn triple() -> impl Strategy<Value = [f64; 3]> {
    prop::array::uniform3(-20.0..20.0f64)
}

fn widths() -> impl Strategy<Value = [f64; 3]> {
    prop::array::uniform3(0.05..5.0f64)
}

proptest! {
    #[test]
    fn labels_survive_affine_rescaling(v in triple(), eta in widths(), s in 0.01..100.0f64, shift in -50.0..50.0f64) {
        let w = v.map(|x| s * x + shift);
        let e = eta.map(|x| s * x);
        // skip ties on a band edge, where rounding may flip the comparison
        let near_edge = (0..3).any(|k| (0..3).any(|j| j != k && ((v[k] + eta[k]) - (v[j] - eta[j])).abs() < 1e-9));
        prop_assume!(!near_edge);
        prop_assert_eq!(label_for(&v, &eta), label_for(&w, &e));
    }

    #[test]
    fn pure_label_iff_positive_margin(v in triple(), eta in widths()) {
        let pure = label_for(&v, &eta).is_pure();
        let m = dominance_margin(&v, &eta);
        prop_assume!(m.abs() > 1e-9);
        prop_assert_eq!(pure, m > 0.0);
    }

    #[test]
    fn pure_regions_return_the_dominant_value(v in triple(), eta in widths()) {
        let rm = RegMax::polynomial(&eta).unwrap();
        let m = rm.value(&v).unwrap();
        let label = label_for(&v, &eta);
        let idx = match label {
            RegionLabel::DPure => Some(0),
            RegionLabel::FPure => Some(1),
            RegionLabel::InteriorPure => Some(2),
            _ => None,
        };
        if let Some(k) = idx {
            prop_assert!((m - v[k]).abs() <= 1e-12 * v[k].abs().max(1.0));
        }
        let hi = v.iter().zip(&eta).map(|(a, b)| a + b).fold(f64::NEG_INFINITY, f64::max);
        let lo = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(m >= lo - 1e-12 && m <= hi + 1e-12);
    }

    #[test]
    fn constrained_parameters_are_exact(kn in 1i64..20, a1n in 1i64..20) {
        let kappa = Ratio::new(kn, 21);
        let a1 = Ratio::new(a1n, 21);
        let p = GlueParams::constrained(10.0, 1e-12, kappa, a1, 1.0).unwrap();
        prop_assert_eq!(p.constraint_defect(), Ratio::from_integer(0));
        prop_assert!(p.validate().is_ok());
    }
}
