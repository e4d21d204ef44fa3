use proptest::prelude::*;

use qdslab::grid::SpatialGrid;
use qdslab::model::DiffusionForm;
use qdslab::propagator::{step_diffusion, step_potential, step_transport};
use qdslab::states::{mollify_truncate, random_mixed, wigner_transform_with_residue, WignerGrid};

fn state(seed: u64, rank: usize) -> WignerGrid {
    let grid = SpatialGrid::line(128, 16.0).unwrap();
    let (rho, _) = random_mixed(grid, rank, 4, seed).unwrap();
    let (w, residue) = wigner_transform_with_residue(&rho).unwrap();
    assert!(residue <= 1e-12, "imaginary residue {residue}");
    w
}

fn relative_change(a: f64, b: f64) -> f64 {
    ((a - b) / a).abs()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn substeps_conserve_mass(
        seed in 0u64..1000,
        rank in 1usize..4,
        dt in 0.001f64..0.1,
        amp in -1.0f64..1.0,
        k in 0.2f64..1.5,
        dpp in 0.0f64..0.5,
        dqq in 0.0f64..0.5,
        eta in 0.0f64..0.5,
    ) {
        let mut w = state(seed, rank);
        let m0 = w.mass();
        step_transport(&mut w, dt).unwrap();
        prop_assert!(relative_change(m0, w.mass()) <= 1e-12);
        let v: Vec<f64> = w.grid_x.coordinates().iter().map(|x| 0.5 * x * x + amp * (k * x).cos()).collect();
        step_potential(&mut w, &v, dt).unwrap();
        prop_assert!(relative_change(m0, w.mass()) <= 1e-12);
        step_diffusion(&mut w, &DiffusionForm::scalar(dpp, dqq, 0.0, eta), dt).unwrap();
        prop_assert!(relative_change(m0, w.mass()) <= 1e-12);
    }

    #[test]
    fn mollified_states_stay_positive(seed in 0u64..1000, rank in 1usize..4, n in 1usize..8) {
        let grid = SpatialGrid::line(128, 16.0).unwrap();
        let (rho, _) = random_mixed(grid, rank, 4, seed).unwrap();
        let sigma = mollify_truncate(&rho, n).unwrap();
        let diag = sigma.spectral_diagnostics().unwrap();
        prop_assert!(diag.min_eigenvalue >= -1e-12);
        prop_assert!(sigma.trace() <= rho.trace());
    }
}
