use num_complex::Complex64;
use proptest::prelude::*;

use qdslab::model::{
    check_lindblad_condition, diffusion_to_lindblad, lindblad_to_diffusion, DiffusionForm, LindbladModel, LindbladTerm,
};

fn complex() -> impl Strategy<Value = Complex64> {
    (-1.5f64..1.5, -1.5f64..1.5).prop_map(|(re, im)| Complex64::new(re, im))
}

fn term() -> impl Strategy<Value = LindbladTerm> {
    (complex(), complex(), complex()).prop_map(|(a, b, g)| LindbladTerm::new(vec![a], vec![b], g))
}

fn model() -> impl Strategy<Value = LindbladModel> {
    prop::collection::vec(term(), 1..5).prop_map(|terms| LindbladModel::new(1, terms).unwrap())
}

/// Valid forms sampled through the slack above the Lindblad boundary.
fn valid_form() -> impl Strategy<Value = DiffusionForm> {
    (0.01f64..2.0, -1.0f64..1.0, -1.0f64..1.0, 0.0f64..1.0).prop_map(|(dpp, dpq, eta, slack)| {
        let dqq = (dpq * dpq + eta * eta / 4.0) / dpp + slack;
        DiffusionForm::scalar(dpp, dqq, dpq, eta)
    })
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

fn fields(f: &DiffusionForm) -> [f64; 4] {
    [f.dpp[(0, 0)], f.dqq[(0, 0)], f.dpq[(0, 0)], f.eta]
}

proptest! {
    #[test]
    fn diffusion_round_trip(form in valid_form()) {
        let back = lindblad_to_diffusion(&diffusion_to_lindblad(&form).unwrap()).unwrap();
        for (a, b) in fields(&form).iter().zip(fields(&back)) {
            prop_assert!(close(*a, b, 1e-12), "{a} vs {b}");
        }
    }

    #[test]
    fn lindblad_images_satisfy_the_condition(m in model()) {
        let form = lindblad_to_diffusion(&m).unwrap();
        prop_assert!(check_lindblad_condition(&form).unwrap().valid);
    }

    #[test]
    fn single_operator_sits_on_the_boundary(a in complex(), b in complex()) {
        let m = LindbladModel::new(1, vec![LindbladTerm::new(vec![a], vec![b], Complex64::new(0.0, 0.0))]).unwrap();
        let report = check_lindblad_condition(&lindblad_to_diffusion(&m).unwrap()).unwrap();
        prop_assert!(report.margin.abs() <= 1e-14 * (1.0 + a.norm_sqr() * b.norm_sqr()), "margin {}", report.margin);
    }

    #[test]
    fn coefficients_scale_quadratically(m in model(), s in -3.0f64..3.0) {
        let base = fields(&lindblad_to_diffusion(&m).unwrap());
        let scaled = fields(&lindblad_to_diffusion(&m.scaled(s)).unwrap());
        for (a, b) in base.iter().zip(scaled) {
            prop_assert!(close(a * s * s, b, 1e-12));
        }
    }

    #[test]
    fn validity_matches_margin_and_signs(dpp in -1.0f64..1.0, dqq in -1.0f64..1.0, dpq in -1.0f64..1.0, eta in -1.0f64..1.0) {
        let r = check_lindblad_condition(&DiffusionForm::scalar(dpp, dqq, dpq, eta)).unwrap();
        prop_assert_eq!(r.valid, r.margin >= 0.0 && dpp >= 0.0 && dqq >= 0.0);
    }
}
