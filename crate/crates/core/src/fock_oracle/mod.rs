//! Reference dynamics in a truncated oscillator basis.
//!
//! Operators are the truncated matrices of `X = (a + a^+)/sqrt 2` and
//! `D = (a - a^+)/sqrt 2`; all products are taken between truncated matrices,
//! so every generator built here is exactly of Lindblad form on the truncated
//! space whenever its coefficient matrix is positive semidefinite.

pub mod moments;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::SpatialGrid;
use crate::model::{diffusion_to_lindblad, DiffusionForm, ExternalPotential, LindbladModel, ParsedModel};
use crate::states::{hermite_functions, wigner_transform, DensityState, WignerGrid};

pub use moments::{integrate_moments, MomentGenerator, MomentState};

/// Largest supported truncation.
pub const MAX_LEVELS: usize = 64;

type CMatrix = DMatrix<Complex64>;

const I: Complex64 = Complex64::new(0.0, 1.0);

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FockTruncation {
    pub levels: usize,
    pub x: CMatrix,
    /// Truncated derivative `d/dx`; momentum is `-i D`.
    pub dx: CMatrix,
    pub hamiltonian: CMatrix,
}

impl FockTruncation {
    /// Operators for `levels` oscillator states with
    /// `H = -D^2/2 + conf X^2/2 + V1(X) - i mu (X D + D X)`.
    pub fn new(levels: usize, mu: f64, confinement: bool, v1: &ExternalPotential) -> Result<Self> {
        if levels < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 oscillator levels, got {levels}")));
        }
        if levels > MAX_LEVELS {
            return Err(Error::TooLarge { dim: levels, cap: MAX_LEVELS });
        }
        let mut a = CMatrix::zeros(levels, levels);
        for n in 1..levels {
            a[(n - 1, n)] = c((n as f64).sqrt());
        }
        let ad = a.adjoint();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let x = (&a + &ad) * c(s);
        let dx = (&a - &ad) * c(s);
        let mut hamiltonian = -(&dx * &dx) * c(0.5) - (&x * &dx + &dx * &x) * (I * mu);
        if confinement {
            hamiltonian += &x * &x * c(0.5);
        }
        hamiltonian += potential_of_x(&x, v1)?;
        Ok(Self { levels, x, dx, hamiltonian })
    }

    pub fn p(&self) -> CMatrix {
        &self.dx * (-I)
    }
}

/// `V(X)` through the eigenbasis of the truncated position matrix.
fn potential_of_x(x: &CMatrix, v1: &ExternalPotential) -> Result<CMatrix> {
    if v1.is_none() {
        return Ok(CMatrix::zeros(x.nrows(), x.ncols()));
    }
    let eig = SymmetricEigen::new(x.clone());
    let values = eig
        .eigenvalues
        .iter()
        .map(|&xk| v1.analytic_value(&[xk]).map(c))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Error::Unsupported("tabulated potentials have no oscillator-basis form".into()))?;
    let u = &eig.eigenvectors;
    Ok(u * CMatrix::from_diagonal(&nalgebra::DVector::from_vec(values)) * u.adjoint())
}

/// Truncated operators for a one-dimensional model; the Hamiltonian carries its `mu`.
pub fn build_fock(model: &LindbladModel, levels: usize) -> Result<FockTruncation> {
    model.validate()?;
    check_model(model.dim, model.hartree.is_some())?;
    FockTruncation::new(levels, model.mu, model.confinement, &model.v1)
}

fn check_model(dim: usize, hartree: bool) -> Result<()> {
    if dim != 1 {
        return Err(Error::Unsupported("the oscillator-basis oracle is implemented for d = 1".into()));
    }
    if hartree {
        return Err(Error::Unsupported("the oscillator-basis oracle has no Hartree term".into()));
    }
    Ok(())
}

/// `rho -> A rho + rho B + sum_k c_k L_k rho R_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Superoperator {
    pub levels: usize,
    pub left: CMatrix,
    pub right: CMatrix,
    pub sandwiches: Vec<(Complex64, CMatrix, CMatrix)>,
}

impl Superoperator {
    fn hamiltonian(h: &CMatrix) -> Self {
        Self { levels: h.nrows(), left: h * (-I), right: h * I, sandwiches: Vec::new() }
    }

    /// Adds `coeff (A rho B - (1/2) {B A, rho})`.
    fn add_dissipator(&mut self, coeff: Complex64, a: &CMatrix, b: &CMatrix) {
        let ba = b * a * (coeff * 0.5);
        self.left -= &ba;
        self.right -= &ba;
        self.sandwiches.push((coeff, a.clone(), b.clone()));
    }

    /// Adds `coeff [A, rho]`.
    fn add_commutator(&mut self, coeff: Complex64, a: &CMatrix) {
        self.left += a * coeff;
        self.right -= a * coeff;
    }

    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        let mut out = &self.left * rho + rho * &self.right;
        for (coeff, a, b) in &self.sandwiches {
            out += a * rho * b * *coeff;
        }
        out
    }

    /// Dense `N^2 x N^2` matrix on column-stacked `vec(rho)`.
    pub fn to_matrix(&self) -> CMatrix {
        let id = CMatrix::identity(self.levels, self.levels);
        let mut m = id.kronecker(&self.left) + self.right.transpose().kronecker(&id);
        for (coeff, a, b) in &self.sandwiches {
            m += b.transpose().kronecker(a) * *coeff;
        }
        m
    }

    /// Upper bound on the norm induced by the Frobenius norm.
    fn norm_bound(&self) -> f64 {
        self.left.norm()
            + self.right.norm()
            + self.sandwiches.iter().map(|(k, a, b)| k.norm() * a.norm() * b.norm()).sum::<f64>()
    }
}

/// `-i[H, rho] + sum_j (L_j rho L_j^+ - (1/2){L_j^+ L_j, rho})` with `L_j = alpha X + beta D + gamma`.
pub fn build_generator(fock: &FockTruncation, model: &LindbladModel) -> Result<Superoperator> {
    model.validate()?;
    check_model(model.dim, model.hartree.is_some())?;
    let id = CMatrix::identity(fock.levels, fock.levels);
    let mut g = Superoperator::hamiltonian(&fock.hamiltonian);
    for t in &model.terms {
        let l = &fock.x * t.alpha[0] + &fock.dx * t.beta[0] + &id * t.gamma;
        g.add_dissipator(c(1.0), &l, &l.adjoint());
    }
    Ok(g)
}

/// Kossakowski form `sum_kl K_kl (R_k rho R_l - (1/2){R_l R_k, rho})` on `R = (X, P)`, plus
/// the drift commutators and `-i[H, rho]` with the truncation's Hamiltonian.
///
/// Equal to [`build_generator`] for the model the form was derived from; for a
/// form that violates the Lindblad condition the result is not completely positive.
pub fn build_diffusion_generator(fock: &FockTruncation, form: &DiffusionForm) -> Result<Superoperator> {
    if form.dim() != 1 {
        return Err(Error::Unsupported("the oscillator-basis oracle is implemented for d = 1".into()));
    }
    let k = form.kossakowski();
    let r = [fock.x.clone(), fock.p()];
    let mut g = Superoperator::hamiltonian(&fock.hamiltonian);
    for a in 0..2 {
        for b in 0..2 {
            if k[(a, b)] != c(0.0) {
                g.add_dissipator(k[(a, b)], &r[a], &r[b]);
            }
        }
    }
    g.add_commutator(I * form.drift_x[0], &fock.x);
    g.add_commutator(c(form.drift_p[0]), &fock.dx);
    Ok(g)
}

/// Generator of a parsed model. Diffusion models are assembled from their
/// Kossakowski form; the Hamiltonian carries `mu + eta/2`.
pub fn generator_for(model: &ParsedModel, levels: usize) -> Result<Superoperator> {
    match model {
        ParsedModel::Lindblad(m) => build_generator(&build_fock(m, levels)?, m),
        ParsedModel::Diffusion { form, mu, confinement, v1, hartree } => {
            check_model(form.dim(), hartree.is_some())?;
            let fock = FockTruncation::new(levels, mu + form.eta / 2.0, *confinement, v1)?;
            build_diffusion_generator(&fock, form)
        }
    }
}

/// Lindblad model for a diffusion form, falling back to a bare `mu` when the
/// form violates the Lindblad condition.
pub fn hamiltonian_model(form: &DiffusionForm, mu: f64) -> Result<LindbladModel> {
    match diffusion_to_lindblad(form) {
        Ok(m) => {
            let total = m.mu + mu;
            Ok(m.with_mu(total))
        }
        Err(Error::NotLindblad(_)) => Ok(LindbladModel::new(form.dim(), vec![])?.with_mu(form.eta / 2.0 + mu)),
        Err(e) => Err(e),
    }
}

/// `exp(t G) rho0` by a scaled Taylor series.
pub fn propagate(generator: &Superoperator, rho0: &CMatrix, t: f64) -> Result<CMatrix> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::InvalidInput(format!("propagation time must be >= 0, got {t}")));
    }
    if rho0.nrows() != generator.levels || rho0.ncols() != generator.levels {
        return Err(Error::GridMismatch(format!(
            "state is {}x{}, generator acts on {} levels",
            rho0.nrows(),
            rho0.ncols(),
            generator.levels
        )));
    }
    let substeps = (t * generator.norm_bound() / 0.5).ceil().max(1.0) as usize;
    let tau = t / substeps as f64;
    let mut rho = rho0.clone();
    for _ in 0..substeps {
        let mut term = rho.clone();
        for k in 1..=80 {
            term = generator.apply(&term) * c(tau / k as f64);
            rho += &term;
            if term.norm() <= 1e-18 * rho.norm() {
                break;
            }
        }
    }
    if rho.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("propagated state"));
    }
    Ok(rho)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChoiReport {
    pub min_eigenvalue: f64,
    /// `max |tr_out(C) - I|`, the trace-preservation defect.
    pub trace_defect: f64,
}

/// Smallest eigenvalue of the Choi matrix `sum_ij |i><j| (x) exp(t G)(|i><j|)`.
pub fn choi_cp_check(generator: &Superoperator, t: f64) -> Result<ChoiReport> {
    let n = generator.levels;
    let mut choi = CMatrix::zeros(n * n, n * n);
    let mut defect: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let mut unit = CMatrix::zeros(n, n);
            unit[(i, j)] = c(1.0);
            let image = propagate(generator, &unit, t)?;
            let expected = if i == j { c(1.0) } else { c(0.0) };
            defect = defect.max((image.trace() - expected).norm());
            for a in 0..n {
                for b in 0..n {
                    choi[(i * n + a, j * n + b)] = image[(a, b)];
                }
            }
        }
    }
    let herm = (&choi + choi.adjoint()) * c(0.5);
    let min_eigenvalue = herm.symmetric_eigenvalues().min();
    Ok(ChoiReport { min_eigenvalue, trace_defect: defect })
}

/// Position-space state with kernel `sum_ab rho_ab h_a(x) h_b(y)`.
pub fn fock_to_density(rho: &CMatrix, grid: SpatialGrid) -> Result<DensityState> {
    if grid.dim != 1 {
        return Err(Error::Unsupported("oscillator-basis states are one-dimensional".into()));
    }
    let h = hermite_functions(rho.nrows(), &grid.coordinates());
    let hm = CMatrix::from_fn(grid.points, rho.nrows(), |i, a| c(h[a][i]));
    let herm = (rho + rho.adjoint()) * c(0.5);
    DensityState::from_kernel(grid, &hm * herm * hm.transpose())
}

pub fn fock_to_wigner(rho: &CMatrix, grid: SpatialGrid) -> Result<WignerGrid> {
    wigner_transform(&fock_to_density(rho, grid)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{lindblad_to_diffusion, LindbladTerm};

    fn ground(n: usize) -> CMatrix {
        let mut rho = CMatrix::zeros(n, n);
        rho[(0, 0)] = c(1.0);
        rho
    }

    #[test]
    fn operators_satisfy_truncated_algebra() {
        let f = FockTruncation::new(8, 0.0, true, &ExternalPotential::None).unwrap();
        let comm = &f.x * f.p() - f.p() * &f.x;
        for k in 0..7 {
            assert!((comm[(k, k)] - I).norm() < 1e-14);
        }
        assert!((f.hamiltonian[(3, 3)].re - 3.5).abs() < 1e-14);
        assert!(FockTruncation::new(1, 0.0, true, &ExternalPotential::None).is_err());
        assert!(matches!(
            FockTruncation::new(65, 0.0, true, &ExternalPotential::None),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn dense_matrix_matches_action() {
        let model = LindbladModel::new(1, vec![LindbladTerm::new(vec![c(0.4)], vec![Complex64::new(0.2, 0.3)], c(0.1))])
            .unwrap()
            .with_confinement(true)
            .with_mu(0.3);
        let g = build_generator(&build_fock(&model, 5).unwrap(), &model).unwrap();
        let rho = CMatrix::from_fn(5, 5, |a, b| Complex64::new((a + 2 * b) as f64, a as f64 - b as f64));
        let vec = nalgebra::DVector::from_column_slice(rho.as_slice());
        let out = g.to_matrix() * vec;
        let direct = g.apply(&rho);
        assert!((nalgebra::DVector::from_column_slice(direct.as_slice()) - out).norm() < 1e-12);
    }

    #[test]
    fn amplitude_damping_decays_the_excited_state() {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let model = LindbladModel::new(1, vec![LindbladTerm::real_1d(r, r, 0.0)]).unwrap().with_confinement(true);
        let g = build_generator(&build_fock(&model, 6).unwrap(), &model).unwrap();
        let mut rho = CMatrix::zeros(6, 6);
        rho[(1, 1)] = c(1.0);
        let out = propagate(&g, &rho, 0.7).unwrap();
        assert!((out[(1, 1)].re - (-0.7f64).exp()).abs() < 1e-13);
        assert!((out.trace().re - 1.0).abs() < 1e-13);
        assert!(propagate(&g, &rho, -1.0).is_err());
    }

    #[test]
    fn diffusion_generator_reproduces_the_lindblad_generator() {
        let model = LindbladModel::new(
            1,
            vec![
                LindbladTerm::new(vec![Complex64::new(0.5, 0.1)], vec![Complex64::new(0.2, -0.3)], Complex64::new(0.3, 0.2)),
                LindbladTerm::new(vec![c(0.0)], vec![c(0.4)], Complex64::new(-0.1, 0.5)),
            ],
        )
        .unwrap()
        .with_confinement(true)
        .with_mu(0.15);
        let fock = build_fock(&model, 7).unwrap();
        let a = build_generator(&fock, &model).unwrap().to_matrix();
        let form = lindblad_to_diffusion(&model).unwrap();
        let b = build_diffusion_generator(&fock, &form).unwrap().to_matrix();
        assert!((&a - &b).camax() < 1e-12, "{}", (a - b).camax());
    }

    #[test]
    fn choi_matrix_detects_complete_positivity() {
        let model = LindbladModel::new(1, vec![LindbladTerm::real_1d(0.6, 0.3, 0.0)]).unwrap().with_confinement(true);
        let g = build_generator(&build_fock(&model, 6).unwrap(), &model).unwrap();
        let report = choi_cp_check(&g, 0.1).unwrap();
        assert!(report.min_eigenvalue > -1e-12);
        assert!(report.trace_defect < 1e-12);

        // Caldeira-Leggett: friction without position noise.
        let cl = DiffusionForm::scalar(0.5, 0.0, 0.0, 0.5);
        let fock = FockTruncation::new(6, 0.25, true, &ExternalPotential::None).unwrap();
        let g = build_diffusion_generator(&fock, &cl).unwrap();
        assert!(choi_cp_check(&g, 0.1).unwrap().min_eigenvalue < -1e-4);
    }

    #[test]
    fn fock_ground_state_maps_to_the_gaussian_wigner_function() {
        let grid = SpatialGrid::line(80, 10.0).unwrap();
        let w = fock_to_wigner(&ground(4), grid).unwrap();
        let (xs, ps) = (w.grid_x.coordinates(), w.grid_xi.coordinates());
        let mut err: f64 = 0.0;
        for i in 0..80 {
            for l in 0..80 {
                let exact = (-(xs[i] * xs[i] + ps[l] * ps[l])).exp() / std::f64::consts::PI;
                err = err.max((w.at(i, l) - exact).abs());
            }
        }
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn non_lindblad_form_falls_back_to_bare_hamiltonian() {
        let cl = DiffusionForm::scalar(0.5, 0.0, 0.0, 0.5);
        let m = hamiltonian_model(&cl, 0.0).unwrap();
        assert!(m.terms.is_empty());
        assert!((m.mu - 0.25).abs() < 1e-15);
    }
}
