//! Closed equations for the first and second moments of a quadratic model.
//!
//! With `R = (x, p)`, `[R_a, R_b] = i J_ab`, Hamiltonian `(1/2) R^T G R` and
//! Lindblad operators `L_j = c_j . R + gamma_j`, `c_j = (alpha_j, i beta_j)`, the
//! adjoint generator maps linear and quadratic observables to linear and
//! quadratic observables:
//!
//! ```text
//! d<R>/dt = M <R> + b tr,   M = J G + (i/2) J (K - K^T),   b = -J sum_j Im(c_j conj gamma_j)
//! dS/dt   = M S + S M^T + tr J Re(K) J^T + b <R>^T + <R> b^T
//! ```
//!
//! where `K = sum_j c_j c_j^+` and `S_ab = <(R_a R_b + R_b R_a)/2>`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::FockTruncation;
use crate::error::{Error, Result};
use crate::model::{DiffusionForm, ExternalPotential, HartreeCoupling, LindbladModel, ParsedModel};
use crate::propagator::PhaseSpaceMoments;

/// Largest tolerated imaginary part of a coefficient before it is reported.
pub const IMAGINARY_TOLERANCE: f64 = 1e-10;

/// `tr(rho)`, `tr(rho R)` and the symmetrized second moments, all unnormalized.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentState {
    pub trace: f64,
    pub mean: DVector<f64>,
    pub second: DMatrix<f64>,
}

impl MomentState {
    pub fn dim(&self) -> usize {
        self.mean.len() / 2
    }

    pub fn from_phase_space(m: &PhaseSpaceMoments) -> Self {
        Self {
            trace: m.trace,
            mean: DVector::from_vec(vec![m.x, m.p]),
            second: DMatrix::from_row_slice(2, 2, &[m.xx, m.xp, m.xp, m.pp]),
        }
    }

    pub fn to_phase_space(&self) -> Result<PhaseSpaceMoments> {
        if self.dim() != 1 {
            return Err(Error::Unsupported("phase-space moments are one-dimensional".into()));
        }
        Ok(PhaseSpaceMoments {
            trace: self.trace,
            x: self.mean[0],
            p: self.mean[1],
            xx: self.second[(0, 0)],
            xp: self.second[(0, 1)],
            pp: self.second[(1, 1)],
        })
    }

    /// Moments of an oscillator-basis density matrix.
    pub fn from_fock(rho: &DMatrix<Complex64>, fock: &FockTruncation) -> Self {
        let r = [fock.x.clone(), fock.p()];
        let expect = |a: &DMatrix<Complex64>| (rho * a).trace().re;
        let mut second = DMatrix::zeros(2, 2);
        for a in 0..2 {
            for b in 0..2 {
                second[(a, b)] = 0.5 * expect(&(&r[a] * &r[b] + &r[b] * &r[a]));
            }
        }
        Self {
            trace: rho.trace().re,
            mean: DVector::from_vec(vec![expect(&r[0]), expect(&r[1])]),
            second,
        }
    }

    /// `<|p|^2/2 + conf |x|^2/2>`.
    pub fn energy(&self, confinement: bool) -> f64 {
        let d = self.dim();
        let (mut kin, mut pot) = (0.0, 0.0);
        for k in 0..d {
            kin += self.second[(d + k, d + k)];
            pot += self.second[(k, k)];
        }
        0.5 * kin + if confinement { 0.5 * pot } else { 0.0 }
    }

    pub fn max_abs_diff(&self, other: &MomentState) -> f64 {
        let mean = (&self.mean - &other.mean).amax();
        let second = (&self.second - &other.second).amax();
        (self.trace - other.trace).abs().max(mean).max(second)
    }

    fn axpy(&self, h: f64, k: &MomentState) -> MomentState {
        MomentState {
            trace: self.trace + h * k.trace,
            mean: &self.mean + &k.mean * h,
            second: &self.second + &k.second * h,
        }
    }
}

/// Coefficients of the moment equations.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentGenerator {
    pub drift: DMatrix<f64>,
    pub constant: DVector<f64>,
    pub diffusion: DMatrix<f64>,
    /// Largest imaginary part discarded while forming the real coefficients.
    pub imaginary_residual: f64,
}

fn symplectic(d: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * d, 2 * d);
    for k in 0..d {
        j[(k, d + k)] = 1.0;
        j[(d + k, k)] = -1.0;
    }
    j
}

fn quadratic_hamiltonian(d: usize, mu: f64, confinement: bool) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(2 * d, 2 * d);
    for k in 0..d {
        g[(k, k)] = if confinement { 1.0 } else { 0.0 };
        g[(d + k, d + k)] = 1.0;
        g[(k, d + k)] = 2.0 * mu;
        g[(d + k, k)] = 2.0 * mu;
    }
    g
}

fn check_quadratic(v1: &ExternalPotential, hartree: Option<HartreeCoupling>) -> Result<()> {
    if hartree.is_some() {
        return Err(Error::Unsupported("moment equations do not close with a Hartree term".into()));
    }
    if !v1.is_none() {
        return Err(Error::Unsupported("moment equations do not close with an external potential".into()));
    }
    Ok(())
}

impl MomentGenerator {
    fn assemble(g: DMatrix<f64>, k: DMatrix<Complex64>, pull: DVector<f64>) -> Result<Self> {
        let d2 = g.nrows();
        let j = symplectic(d2 / 2);
        let jc = j.map(|v| Complex64::new(v, 0.0));
        let anti = (&k - k.transpose()) * Complex64::new(0.0, 0.5);
        let drift_c = &jc * g.map(|v| Complex64::new(v, 0.0)) + &jc * anti;
        let diff_c = &jc * (&k + k.transpose()) * Complex64::new(0.5, 0.0) * jc.transpose();
        let residual = drift_c.iter().chain(diff_c.iter()).map(|z| z.im.abs()).fold(0.0, f64::max);
        let re = |m: &DMatrix<Complex64>| m.map(|z| z.re);
        let generator =
            Self { drift: re(&drift_c), constant: -(&j * pull), diffusion: re(&diff_c), imaginary_residual: residual };
        if residual > IMAGINARY_TOLERANCE {
            return Err(Error::InvalidInput(format!(
                "moment coefficients have imaginary parts up to {residual:e}"
            )));
        }
        Ok(generator)
    }

    pub fn from_lindblad(model: &LindbladModel) -> Result<Self> {
        model.validate()?;
        check_quadratic(&model.v1, model.hartree)?;
        let d = model.dim;
        let mut k = DMatrix::<Complex64>::zeros(2 * d, 2 * d);
        let mut pull = DVector::<f64>::zeros(2 * d);
        for t in &model.terms {
            let coeffs: Vec<Complex64> =
                t.alpha.iter().copied().chain(t.beta.iter().map(|b| b * Complex64::new(0.0, 1.0))).collect();
            for a in 0..2 * d {
                pull[a] += (coeffs[a] * t.gamma.conj()).im;
                for b in 0..2 * d {
                    k[(a, b)] += coeffs[a] * coeffs[b].conj();
                }
            }
        }
        Self::assemble(quadratic_hamiltonian(d, model.mu, model.confinement), k, pull)
    }

    /// Template dynamics of `form` with an extra `mu (x.p + p.x)`.
    pub fn from_diffusion(form: &DiffusionForm, mu: f64, confinement: bool) -> Result<Self> {
        let d = form.dim();
        let pull = DVector::from_iterator(2 * d, form.drift_x.iter().chain(&form.drift_p).copied());
        Self::assemble(quadratic_hamiltonian(d, mu + form.eta / 2.0, confinement), form.kossakowski(), pull)
    }

    pub fn from_parsed(model: &ParsedModel) -> Result<Self> {
        match model {
            ParsedModel::Lindblad(m) => Self::from_lindblad(m),
            ParsedModel::Diffusion { form, mu, confinement, v1, hartree } => {
                check_quadratic(v1, *hartree)?;
                Self::from_diffusion(form, *mu, *confinement)
            }
        }
    }

    pub fn derivative(&self, s: &MomentState) -> MomentState {
        let mean = &self.drift * &s.mean + &self.constant * s.trace;
        let cross = &self.constant * s.mean.transpose();
        let second = &self.drift * &s.second
            + &s.second * self.drift.transpose()
            + &self.diffusion * s.trace
            + &cross
            + cross.transpose();
        MomentState { trace: 0.0, mean, second }
    }

    /// `d/dt <|p|^2/2 + conf |x|^2/2>`.
    pub fn energy_rate(&self, s: &MomentState, confinement: bool) -> f64 {
        self.derivative(s).energy(confinement)
    }
}

/// Classical fourth-order Runge-Kutta; returns the states at `k t_end / steps`.
pub fn integrate_moments(
    generator: &MomentGenerator,
    initial: &MomentState,
    t_end: f64,
    steps: usize,
) -> Result<Vec<MomentState>> {
    if steps == 0 || !(t_end.is_finite() && t_end >= 0.0) {
        return Err(Error::InvalidInput("need steps >= 1 and t_end >= 0".into()));
    }
    if initial.mean.len() != generator.constant.len() {
        return Err(Error::GridMismatch("moment state and generator dimensions differ".into()));
    }
    let h = t_end / steps as f64;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(initial.clone());
    let mut s = initial.clone();
    for _ in 0..steps {
        let k1 = generator.derivative(&s);
        let k2 = generator.derivative(&s.axpy(h / 2.0, &k1));
        let k3 = generator.derivative(&s.axpy(h / 2.0, &k2));
        let k4 = generator.derivative(&s.axpy(h, &k3));
        s = s.axpy(h / 6.0, &k1).axpy(h / 3.0, &k2).axpy(h / 3.0, &k3).axpy(h / 6.0, &k4);
        out.push(s.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock_oracle::{build_fock, build_generator, propagate};
    use crate::model::LindbladTerm;

    fn ground_moments() -> MomentState {
        MomentState {
            trace: 1.0,
            mean: DVector::zeros(2),
            second: DMatrix::identity(2, 2) * 0.5,
        }
    }

    #[test]
    fn amplitude_damping_keeps_the_ground_state() {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let model = LindbladModel::new(1, vec![LindbladTerm::real_1d(r, r, 0.0)]).unwrap().with_confinement(true);
        let g = MomentGenerator::from_lindblad(&model).unwrap();
        let d = g.derivative(&ground_moments());
        assert!(d.second.amax() < 1e-15 && d.mean.amax() < 1e-15);
        assert_eq!(g.imaginary_residual, 0.0);
    }

    #[test]
    fn position_noise_heats_at_rate_dpp() {
        let model = LindbladModel::new(1, vec![LindbladTerm::real_1d(0.6, 0.0, 0.0)]).unwrap().with_confinement(true);
        let g = MomentGenerator::from_lindblad(&model).unwrap();
        assert!((g.energy_rate(&ground_moments(), true) - 0.18).abs() < 1e-15);
    }

    #[test]
    fn moment_equations_match_the_oscillator_basis() {
        let model = LindbladModel::new(
            1,
            vec![
                LindbladTerm::new(vec![Complex64::new(0.4, 0.1)], vec![Complex64::new(0.3, -0.2)], Complex64::new(0.2, 0.1)),
                LindbladTerm::real_1d(0.0, 0.3, 0.0),
            ],
        )
        .unwrap()
        .with_confinement(true)
        .with_mu(0.1);
        let fock = build_fock(&model, 40).unwrap();
        let gen = build_generator(&fock, &model).unwrap();
        let mut rho = DMatrix::<Complex64>::zeros(40, 40);
        rho[(0, 0)] = Complex64::new(0.6, 0.0);
        rho[(1, 1)] = Complex64::new(0.4, 0.0);
        rho[(0, 1)] = Complex64::new(0.2, 0.1);
        rho[(1, 0)] = Complex64::new(0.2, -0.1);
        let start = MomentState::from_fock(&rho, &fock);
        let end = MomentState::from_fock(&propagate(&gen, &rho, 0.5).unwrap(), &fock);
        let ode = integrate_moments(&MomentGenerator::from_lindblad(&model).unwrap(), &start, 0.5, 200).unwrap();
        assert!(end.max_abs_diff(ode.last().unwrap()) < 1e-9, "{}", end.max_abs_diff(ode.last().unwrap()));
    }

    #[test]
    fn diffusion_form_matches_its_lindblad_model() {
        let model = LindbladModel::new(1, vec![LindbladTerm::new(vec![Complex64::new(0.5, 0.0)], vec![Complex64::new(0.2, 0.3)], Complex64::new(0.1, -0.4))])
            .unwrap()
            .with_confinement(true);
        let form = crate::model::lindblad_to_diffusion(&model).unwrap();
        let a = MomentGenerator::from_lindblad(&model).unwrap();
        let b = MomentGenerator::from_diffusion(&form, model.mu - form.eta / 2.0, true).unwrap();
        assert!((&a.drift - &b.drift).amax() < 1e-15);
        assert!((&a.diffusion - &b.diffusion).amax() < 1e-15);
        assert!((&a.constant - &b.constant).amax() < 1e-15);
    }

    #[test]
    fn hartree_and_potentials_are_rejected() {
        let model = LindbladModel::new(1, vec![]).unwrap().with_hartree(Some(HartreeCoupling::default()));
        assert!(MomentGenerator::from_lindblad(&model).is_err());
        let model = LindbladModel::new(1, vec![])
            .unwrap()
            .with_v1(ExternalPotential::Cosine { amplitude: 0.1, wavenumber: 1.0 });
        assert!(MomentGenerator::from_lindblad(&model).is_err());
    }
}
