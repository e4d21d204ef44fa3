//! Open-system model in its two parameterizations.
//!
//! A [`LindbladModel`] lists Lindblad operators `L_j = alpha_j . x + beta_j . grad + gamma_j`
//! together with the adjusted Hamiltonian `-Delta/2 + V - i mu [x, grad]_+`. A
//! [`DiffusionForm`] carries the phase-space Fokker-Planck coefficients of the
//! operator
//!
//! ```text
//! Q w = Dpp Lap_xi w + 2 eta div_xi(xi w) + Dqq Lap_x w + 2 Dpq div_x(grad_xi w)
//!       - drift_x . grad_xi w + drift_p . grad_x w
//! ```
//!
//! with `xi` the momentum variable of the Wigner function. The conversion
//! between the two goes through the Kossakowski matrix of the dissipator in
//! the canonical basis `(x, p)`, `p = -i grad`:
//!
//! ```text
//! K = [[ 2 Dpp,            -2 Dpq - i eta ],
//!      [ -2 Dpq + i eta,    2 Dqq        ]]
//! ```
//!
//! which is positive semidefinite exactly when the Lindblad condition
//! `Dpp Dqq - Dpq^2 >= eta^2 / 4`, `Dpp, Dqq >= 0` holds. The friction term
//! `2 eta div_xi(xi w)` is only produced together with the Hamiltonian
//! adjustment `mu = eta / 2`; other values of `mu` leave a residual dilation
//! in `x` (see [`ConversionNotes`]).

mod config;

pub use config::{
    apply_overrides, parse_experiment, parse_model_config, CompareSection, ExperimentConfig, FockSection,
    GridSection, InitialSection, ParsedModel, RunSection,
};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{ensure_finite, Error, Result};

/// One Lindblad operator `alpha . x + beta . grad + gamma`.
#[derive(Debug, Clone, PartialEq)]
pub struct LindbladTerm {
    pub alpha: Vec<Complex64>,
    pub beta: Vec<Complex64>,
    pub gamma: Complex64,
}

impl LindbladTerm {
    pub fn new(alpha: Vec<Complex64>, beta: Vec<Complex64>, gamma: Complex64) -> Self {
        Self { alpha, beta, gamma }
    }

    /// One-dimensional operator with real coefficients.
    pub fn real_1d(alpha: f64, beta: f64, gamma: f64) -> Self {
        Self {
            alpha: vec![Complex64::new(alpha, 0.0)],
            beta: vec![Complex64::new(beta, 0.0)],
            gamma: Complex64::new(gamma, 0.0),
        }
    }

    fn scaled(&self, s: f64) -> Self {
        Self {
            alpha: self.alpha.iter().map(|a| a * s).collect(),
            beta: self.beta.iter().map(|b| b * s).collect(),
            gamma: self.gamma,
        }
    }
}

/// Bounded perturbation `V1` of the confinement potential.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum ExternalPotential {
    #[default]
    None,
    /// `amplitude * exp(-|x - center|^2 / (2 width^2))`
    Gaussian { amplitude: f64, width: f64, center: Vec<f64> },
    /// `amplitude * prod_k cos(wavenumber * x_k)`
    Cosine { amplitude: f64, wavenumber: f64 },
    /// Samples on the centred 1-D grid with `values.len()` points and the given half-width.
    Tabulated { half_width: f64, values: Vec<f64> },
}

impl ExternalPotential {
    pub fn is_none(&self) -> bool {
        matches!(self, ExternalPotential::None)
    }

    /// Pointwise value for the analytic variants.
    pub fn analytic_value(&self, x: &[f64]) -> Option<f64> {
        match self {
            ExternalPotential::None => Some(0.0),
            ExternalPotential::Gaussian { amplitude, width, center } => {
                let r2: f64 = x
                    .iter()
                    .enumerate()
                    .map(|(k, xk)| {
                        let c = center.get(k).copied().unwrap_or(0.0);
                        (xk - c) * (xk - c)
                    })
                    .sum();
                Some(amplitude * (-r2 / (2.0 * width * width)).exp())
            }
            ExternalPotential::Cosine { amplitude, wavenumber } => {
                Some(amplitude * x.iter().map(|xk| (wavenumber * xk).cos()).product::<f64>())
            }
            ExternalPotential::Tabulated { .. } => None,
        }
    }
}

/// Repulsive mean-field coupling `strength * phi[rho]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HartreeCoupling {
    pub strength: f64,
}

impl Default for HartreeCoupling {
    fn default() -> Self {
        Self { strength: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LindbladModel {
    pub dim: usize,
    pub terms: Vec<LindbladTerm>,
    pub mu: f64,
    pub confinement: bool,
    pub v1: ExternalPotential,
    pub hartree: Option<HartreeCoupling>,
}

impl LindbladModel {
    pub fn new(dim: usize, terms: Vec<LindbladTerm>) -> Result<Self> {
        let model = Self {
            dim,
            terms,
            mu: 0.0,
            confinement: false,
            v1: ExternalPotential::None,
            hartree: None,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    pub fn with_confinement(mut self, on: bool) -> Self {
        self.confinement = on;
        self
    }

    pub fn with_hartree(mut self, coupling: Option<HartreeCoupling>) -> Self {
        self.hartree = coupling;
        self
    }

    pub fn with_v1(mut self, v1: ExternalPotential) -> Self {
        self.v1 = v1;
        self
    }

    /// Number of Lindblad operators.
    pub fn m(&self) -> usize {
        self.terms.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.dim) {
            return Err(Error::InvalidInput(format!("dimension {} not in 1..=3", self.dim)));
        }
        for (j, t) in self.terms.iter().enumerate() {
            if t.alpha.len() != self.dim || t.beta.len() != self.dim {
                return Err(Error::InvalidInput(format!(
                    "Lindblad term {j}: alpha/beta must have {} components",
                    self.dim
                )));
            }
            let flat: Vec<f64> = t
                .alpha
                .iter()
                .chain(&t.beta)
                .chain(std::iter::once(&t.gamma))
                .flat_map(|c| [c.re, c.im])
                .collect();
            ensure_finite(&flat, "Lindblad coefficients")?;
        }
        ensure_finite(&[self.mu], "mu")?;
        if let Some(h) = self.hartree {
            if !(h.strength.is_finite() && h.strength > 0.0) {
                return Err(Error::InvalidInput(
                    "Hartree coupling must be repulsive (strength > 0)".into(),
                ));
            }
        }
        Ok(())
    }

    /// Multiply every `alpha_j`, `beta_j` by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self { terms: self.terms.iter().map(|t| t.scaled(s)).collect(), ..self.clone() }
    }

    /// `sum_j Re(alpha_j . conj(beta_j))`.
    pub fn dilation_rate(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| t.alpha.iter().zip(&t.beta).map(|(a, b)| (a * b.conj()).re).sum::<f64>())
            .sum()
    }

    /// The value of `mu` for which the dissipator's position dilation cancels.
    pub fn required_mu(&self) -> f64 {
        0.5 * self.dilation_rate()
    }
}

/// Fokker-Planck coefficients; matrices are `d x d` and symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionForm {
    pub dpp: DMatrix<f64>,
    pub dqq: DMatrix<f64>,
    pub dpq: DMatrix<f64>,
    pub eta: f64,
    pub drift_x: Vec<f64>,
    pub drift_p: Vec<f64>,
}

impl DiffusionForm {
    pub fn isotropic(dim: usize, dpp: f64, dqq: f64, dpq: f64, eta: f64) -> Self {
        Self {
            dpp: DMatrix::identity(dim, dim) * dpp,
            dqq: DMatrix::identity(dim, dim) * dqq,
            dpq: DMatrix::identity(dim, dim) * dpq,
            eta,
            drift_x: vec![0.0; dim],
            drift_p: vec![0.0; dim],
        }
    }

    /// Scalar coefficients in one dimension.
    pub fn scalar(dpp: f64, dqq: f64, dpq: f64, eta: f64) -> Self {
        Self::isotropic(1, dpp, dqq, dpq, eta)
    }

    pub fn dim(&self) -> usize {
        self.dpp.nrows()
    }

    pub fn with_drift(mut self, drift_x: Vec<f64>, drift_p: Vec<f64>) -> Self {
        self.drift_x = drift_x;
        self.drift_p = drift_p;
        self
    }

    fn all_values(&self) -> Vec<f64> {
        self.dpp
            .iter()
            .chain(self.dqq.iter())
            .chain(self.dpq.iter())
            .chain(std::iter::once(&self.eta))
            .chain(&self.drift_x)
            .chain(&self.drift_p)
            .copied()
            .collect()
    }

    fn check_shape(&self) -> Result<()> {
        let d = self.dim();
        let square = |m: &DMatrix<f64>| m.nrows() == d && m.ncols() == d;
        if !(square(&self.dpp) && square(&self.dqq) && square(&self.dpq))
            || self.drift_x.len() != d
            || self.drift_p.len() != d
        {
            return Err(Error::InvalidInput("diffusion coefficient shapes disagree".into()));
        }
        Ok(())
    }

    /// The `2d x 2d` Kossakowski matrix of the dissipator in the basis `(x_1..x_d, p_1..p_d)`.
    pub fn kossakowski(&self) -> DMatrix<Complex64> {
        let d = self.dim();
        let mut k = DMatrix::<Complex64>::zeros(2 * d, 2 * d);
        for a in 0..d {
            for b in 0..d {
                k[(a, b)] = Complex64::new(2.0 * self.dpp[(a, b)], 0.0);
                k[(d + a, d + b)] = Complex64::new(2.0 * self.dqq[(a, b)], 0.0);
                let im = if a == b { self.eta } else { 0.0 };
                k[(a, d + b)] = Complex64::new(-2.0 * self.dpq[(a, b)], -im);
                k[(d + b, a)] = Complex64::new(-2.0 * self.dpq[(a, b)], im);
            }
        }
        k
    }
}

/// Outcome of the Lindblad-admissibility check.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidityReport {
    pub valid: bool,
    pub margin: f64,
    pub messages: Vec<String>,
}

/// Relative slack used when deciding `margin >= 0` on rounded inputs.
const MARGIN_REL_TOL: f64 = 1e-14;

fn min_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Checks `Dpp Dqq - Dpq^2 >= eta^2/4` and `Dpp, Dqq >= 0`.
///
/// In one dimension the margin is evaluated literally as
/// `dpp*dqq - dpq*dpq - eta*eta/4`. For `d > 1` the margin is the smallest
/// eigenvalue of the symmetrized `Dpp Dqq - Dpq^2` minus `eta^2/4`.
pub fn check_lindblad_condition(form: &DiffusionForm) -> Result<ValidityReport> {
    form.check_shape()?;
    ensure_finite(&form.all_values(), "diffusion coefficients")?;
    let d = form.dim();
    let (margin, pp_min, qq_min, scale) = if d == 1 {
        let (dpp, dqq, dpq, eta) = (form.dpp[(0, 0)], form.dqq[(0, 0)], form.dpq[(0, 0)], form.eta);
        let margin = dpp * dqq - dpq * dpq - eta * eta / 4.0;
        let scale = (dpp * dqq).abs().max(dpq * dpq).max(eta * eta / 4.0);
        (margin, dpp, dqq, scale)
    } else {
        let prod = &form.dpp * &form.dqq - &form.dpq * &form.dpq;
        let margin = min_sym_eigenvalue(&prod) - form.eta * form.eta / 4.0;
        let scale = prod.abs().max().max(form.eta * form.eta / 4.0);
        (margin, min_sym_eigenvalue(&form.dpp), min_sym_eigenvalue(&form.dqq), scale)
    };
    let slack = MARGIN_REL_TOL * scale;
    let mut messages = Vec::new();
    if margin < -slack {
        messages.push(format!(
            "Dpp*Dqq - Dpq^2 - eta^2/4 = {margin:.6e} < 0: the diffusion operator is not of Lindblad form"
        ));
        if d == 1 && form.dqq[(0, 0)] == 0.0 && form.dpq[(0, 0)] == 0.0 && form.eta > 0.0 {
            messages.push(
                "Dqq = Dpq = 0 with eta > 0 is the Caldeira-Leggett choice, which is never of Lindblad form"
                    .into(),
            );
        }
    }
    if pp_min < -slack {
        messages.push(format!("Dpp has negative part {pp_min:.6e}"));
    }
    if qq_min < -slack {
        messages.push(format!("Dqq has negative part {qq_min:.6e}"));
    }
    Ok(ValidityReport { valid: messages.is_empty(), margin, messages })
}

/// Side information produced when mapping a Lindblad model to diffusion form.
#[derive(Debug, Clone, PartialEq)]
pub struct ConversionNotes {
    /// `mu` at which the position dilation cancels, `sum_j Re(alpha_j . conj(beta_j)) / 2`.
    pub required_mu: f64,
    pub mu_mismatch: bool,
    pub warnings: Vec<String>,
}

/// Maps Lindblad coefficients onto the phase-space Fokker-Planck template.
///
/// `Dpp = sum_j Re(alpha_j alpha_j^*)/2`, `Dqq = sum_j Re(beta_j beta_j^*)/2`,
/// `Dpq = -sum_j Im(alpha_j beta_j^*)/2` (symmetric part), `eta = sum_j Re(alpha_j . conj beta_j)`
/// (trace over axes divided by `d`), `drift_x = sum_j Im(alpha_j conj gamma_j)`,
/// `drift_p = sum_j Re(beta_j conj gamma_j)`.
pub fn lindblad_to_diffusion(model: &LindbladModel) -> Result<DiffusionForm> {
    Ok(lindblad_to_diffusion_with_notes(model)?.0)
}

pub fn lindblad_to_diffusion_with_notes(model: &LindbladModel) -> Result<(DiffusionForm, ConversionNotes)> {
    model.validate()?;
    let d = model.dim;
    let mut dpp = DMatrix::<f64>::zeros(d, d);
    let mut dqq = DMatrix::<f64>::zeros(d, d);
    let mut dpq = DMatrix::<f64>::zeros(d, d);
    let mut friction = DMatrix::<f64>::zeros(d, d);
    let mut rot_x = DMatrix::<f64>::zeros(d, d);
    let mut rot_p = DMatrix::<f64>::zeros(d, d);
    let mut drift_x = vec![0.0; d];
    let mut drift_p = vec![0.0; d];
    for t in &model.terms {
        for k in 0..d {
            for l in 0..d {
                let aa = t.alpha[k] * t.alpha[l].conj();
                let bb = t.beta[k] * t.beta[l].conj();
                let ab = t.alpha[k] * t.beta[l].conj();
                dpp[(k, l)] += 0.5 * aa.re;
                dqq[(k, l)] += 0.5 * bb.re;
                dpq[(k, l)] -= 0.5 * ab.im;
                friction[(k, l)] += ab.re;
                rot_x[(k, l)] += aa.im;
                rot_p[(k, l)] += bb.im;
            }
            drift_x[k] += (t.alpha[k] * t.gamma.conj()).im;
            drift_p[k] += (t.beta[k] * t.gamma.conj()).re;
        }
    }
    let dpq_sym = (&dpq + dpq.transpose()) * 0.5;
    let eta = friction.trace() / d as f64;
    let mut warnings = Vec::new();
    let scale = 1e-12 * (1.0 + friction.abs().max() + dpp.abs().max() + dqq.abs().max());
    if (&friction - DMatrix::<f64>::identity(d, d) * eta).abs().max() > scale {
        warnings.push("friction matrix Re(alpha_k conj beta_l) is not isotropic; only its mean is kept".into());
    }
    if (&dpq - &dpq_sym).abs().max() > scale {
        warnings.push("antisymmetric part of Im(alpha_k conj beta_l) is dropped".into());
    }
    if rot_x.abs().max() > scale || rot_p.abs().max() > scale {
        warnings.push("Im(alpha_k conj alpha_l) / Im(beta_k conj beta_l) rotation terms are dropped".into());
    }
    let required_mu = model.required_mu();
    let mu_mismatch = (model.mu - required_mu).abs() > 1e-12 * (1.0 + required_mu.abs());
    if mu_mismatch {
        warnings.push(format!(
            "mu = {} differs from the value {} that cancels the position dilation",
            model.mu, required_mu
        ));
    }
    let form = DiffusionForm { dpp, dqq, dpq: dpq_sym, eta, drift_x, drift_p };
    Ok((form, ConversionNotes { required_mu, mu_mismatch, warnings }))
}

/// Builds Lindblad operators realizing `form`; the result carries `mu = eta/2`.
///
/// Per axis (diagonal coefficient matrices): `L_1 = a x + b grad` with
/// `a = sqrt(2 Dpp)`, `b = (eta + 2i Dpq)/a`, plus `L_2 = c grad` with
/// `c = sqrt(2 Dqq - |b|^2)`; `Dpp = 0` uses `L = sqrt(2 Dqq) grad`.
/// Non-diagonal matrices go through the eigendecomposition of the Kossakowski matrix.
pub fn diffusion_to_lindblad(form: &DiffusionForm) -> Result<LindbladModel> {
    let report = check_lindblad_condition(form)?;
    if !report.valid {
        return Err(Error::NotLindblad(Box::new(report)));
    }
    let d = form.dim();
    let diagonal = |m: &DMatrix<f64>| {
        (0..d).all(|a| (0..d).all(|b| a == b || m[(a, b)] == 0.0))
    };
    let mut terms = if diagonal(&form.dpp) && diagonal(&form.dqq) && diagonal(&form.dpq) {
        per_axis_terms(form)?
    } else {
        kossakowski_terms(form)
    };
    if d > 1 && form.drift_x.iter().chain(&form.drift_p).any(|v| *v != 0.0) {
        attach_drift_general(form, &mut terms)?;
    }
    let mut model = LindbladModel::new(d, terms)?;
    model.mu = model.required_mu();
    Ok(model)
}

fn unit(d: usize, k: usize, v: Complex64) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); d];
    out[k] = v;
    out
}

fn per_axis_terms(form: &DiffusionForm) -> Result<Vec<LindbladTerm>> {
    let d = form.dim();
    let zero = Complex64::new(0.0, 0.0);
    let mut terms = Vec::new();
    for k in 0..d {
        let (dpp, dqq, dpq, eta) = (form.dpp[(k, k)], form.dqq[(k, k)], form.dpq[(k, k)], form.eta);
        let (gx, gp) = if d == 1 { (form.drift_x[0], form.drift_p[0]) } else { (0.0, 0.0) };
        if dpp > 0.0 {
            let a = (2.0 * dpp).sqrt();
            let b = Complex64::new(eta, 2.0 * dpq) / a;
            let c = (2.0 * dqq - b.norm_sqr()).max(0.0).sqrt();
            // drift_x = Im(a conj gamma_1) fixes Im gamma_1; drift_p is shared with L_2.
            let g1_im = -gx / a;
            let mut gamma1 = Complex64::new(0.0, g1_im);
            let mut gamma2 = zero;
            let rest = gp - (b * gamma1.conj()).re;
            if rest != 0.0 {
                if c > 1e-300 {
                    gamma2 = Complex64::new(rest / c, 0.0);
                } else if b.re.abs() > 1e-300 {
                    gamma1.re = rest / b.re;
                } else {
                    return Err(Error::Unsupported(
                        "drift_p cannot be realized on the boundary with Re(b) = 0".into(),
                    ));
                }
            }
            terms.push(LindbladTerm::new(unit(d, k, Complex64::new(a, 0.0)), unit(d, k, b), gamma1));
            if c > 0.0 || gamma2 != zero {
                terms.push(LindbladTerm::new(vec![zero; d], unit(d, k, Complex64::new(c, 0.0)), gamma2));
            }
        } else {
            if eta != 0.0 || dpq != 0.0 || gx != 0.0 {
                return Err(Error::Unsupported(
                    "Dpp = 0 requires eta = Dpq = drift_x = 0".into(),
                ));
            }
            if dqq > 0.0 {
                let c = (2.0 * dqq).sqrt();
                let gamma = Complex64::new(gp / c, 0.0);
                terms.push(LindbladTerm::new(vec![zero; d], unit(d, k, Complex64::new(c, 0.0)), gamma));
            } else if gp != 0.0 {
                return Err(Error::Unsupported("drift_p without any diffusion".into()));
            }
        }
    }
    Ok(terms)
}

fn kossakowski_terms(form: &DiffusionForm) -> Vec<LindbladTerm> {
    let d = form.dim();
    let k = form.kossakowski();
    let eig = k.clone().symmetric_eigen();
    let cutoff = 1e-14 * k.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let mut terms = Vec::new();
    for (idx, lambda) in eig.eigenvalues.iter().enumerate() {
        if *lambda <= cutoff {
            continue;
        }
        let v = eig.eigenvectors.column(idx);
        let s = lambda.sqrt();
        // M_ab = c_a conj(c_b) with c = (alpha, i beta): eigenvector e gives c = sqrt(lambda) e.
        let alpha: Vec<Complex64> = (0..d).map(|a| v[a] * s).collect();
        let beta: Vec<Complex64> = (0..d).map(|a| v[d + a] * s * Complex64::new(0.0, -1.0)).collect();
        terms.push(LindbladTerm::new(alpha, beta, Complex64::new(0.0, 0.0)));
    }
    terms
}

/// Adds `gamma_j` to existing terms by least squares so that the drift vectors match.
fn attach_drift_general(form: &DiffusionForm, terms: &mut [LindbladTerm]) -> Result<()> {
    let d = form.dim();
    let m = terms.len();
    // Unknowns: Re gamma_j, Im gamma_j. drift_x_k = Im(alpha_jk conj g) = Im(alpha) Re g - Re(alpha) Im g.
    let mut a = DMatrix::<f64>::zeros(2 * d, 2 * m);
    let mut rhs = nalgebra::DVector::<f64>::zeros(2 * d);
    for k in 0..d {
        rhs[k] = form.drift_x[k];
        rhs[d + k] = form.drift_p[k];
        for (j, t) in terms.iter().enumerate() {
            a[(k, 2 * j)] = t.alpha[k].im;
            a[(k, 2 * j + 1)] = -t.alpha[k].re;
            a[(d + k, 2 * j)] = t.beta[k].re;
            a[(d + k, 2 * j + 1)] = t.beta[k].im;
        }
    }
    let svd = a.clone().svd(true, true);
    let sol = svd
        .solve(&rhs, 1e-13)
        .map_err(|e| Error::Unsupported(format!("drift least squares failed: {e}")))?;
    if (&a * &sol - &rhs).norm() > 1e-10 * (1.0 + rhs.norm()) {
        return Err(Error::Unsupported("drift vector not realizable with these operators".into()));
    }
    for (j, t) in terms.iter_mut().enumerate() {
        t.gamma = Complex64::new(sol[2 * j], sol[2 * j + 1]);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn boundary_example_is_valid_with_zero_margin() {
        let r = check_lindblad_condition(&DiffusionForm::scalar(1.0, 1.0, 0.0, 2.0)).unwrap();
        assert!(r.valid);
        assert_eq!(r.margin, 0.0);
    }

    #[test]
    fn degenerate_zero_case() {
        let r = check_lindblad_condition(&DiffusionForm::scalar(1.0, 0.0, 0.0, 0.0)).unwrap();
        assert!(r.valid);
        assert_eq!(r.margin, 0.0);
    }

    #[test]
    fn caldeira_leggett_is_rejected() {
        let r = check_lindblad_condition(&DiffusionForm::scalar(1.0, 0.0, 0.0, 1.0)).unwrap();
        assert!(!r.valid);
        assert_eq!(r.margin, -0.25);
        assert!(r.messages.iter().any(|m| m.contains("Caldeira-Leggett")));
    }

    #[test]
    fn non_finite_input_is_rejected() {
        assert!(check_lindblad_condition(&DiffusionForm::scalar(f64::NAN, 0.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn single_operator_images() {
        let m = LindbladModel::new(1, vec![LindbladTerm::real_1d(1.0, 0.0, 0.0)]).unwrap();
        let d = lindblad_to_diffusion(&m).unwrap();
        assert_eq!(d, DiffusionForm::scalar(0.5, 0.0, 0.0, 0.0));

        let m = LindbladModel::new(1, vec![LindbladTerm::real_1d(0.0, 1.0, 0.0)]).unwrap();
        let d = lindblad_to_diffusion(&m).unwrap();
        assert_eq!(d, DiffusionForm::scalar(0.0, 0.5, 0.0, 0.0));

        let m = LindbladModel::new(1, vec![LindbladTerm::real_1d(1.0, 1.0, 0.0)]).unwrap();
        let d = lindblad_to_diffusion(&m).unwrap();
        assert_eq!(d, DiffusionForm::scalar(0.5, 0.5, 0.0, 1.0));
        assert_eq!(check_lindblad_condition(&d).unwrap().margin, 0.0);
    }

    #[test]
    fn inverse_of_pure_momentum_diffusion_is_one_position_operator() {
        let m = diffusion_to_lindblad(&DiffusionForm::scalar(0.5, 0.0, 0.0, 0.0)).unwrap();
        assert_eq!(m.m(), 1);
        assert!(close(m.terms[0].alpha[0].norm(), 1.0, 1e-15));
        assert_eq!(m.terms[0].beta[0].norm(), 0.0);
    }

    #[test]
    fn boundary_inverse_uses_one_operator() {
        let m = diffusion_to_lindblad(&DiffusionForm::scalar(0.5, 0.5, 0.0, 1.0)).unwrap();
        assert_eq!(m.m(), 1);
        let back = lindblad_to_diffusion(&m).unwrap();
        assert!(close(back.dqq[(0, 0)], 0.5, 1e-15));
        assert!(close(back.eta, 1.0, 1e-15));
    }

    #[test]
    fn invalid_form_cannot_be_inverted() {
        let err = diffusion_to_lindblad(&DiffusionForm::scalar(1.0, 0.0, 0.0, 1.0)).unwrap_err();
        assert!(matches!(err, Error::NotLindblad(_)));
    }

    #[test]
    fn mu_mismatch_is_a_warning() {
        let m = LindbladModel::new(1, vec![LindbladTerm::real_1d(1.0, 1.0, 0.0)]).unwrap();
        let (_, notes) = lindblad_to_diffusion_with_notes(&m).unwrap();
        assert!(notes.mu_mismatch);
        assert_eq!(notes.required_mu, 0.5);
        let (_, notes) = lindblad_to_diffusion_with_notes(&m.with_mu(0.5)).unwrap();
        assert!(!notes.mu_mismatch);
    }

    #[test]
    fn drift_round_trip_1d() {
        let form = DiffusionForm::scalar(0.4, 0.3, 0.05, 0.2).with_drift(vec![0.1], vec![-0.2]);
        let back = lindblad_to_diffusion(&diffusion_to_lindblad(&form).unwrap()).unwrap();
        assert!(close(back.drift_x[0], 0.1, 1e-14));
        assert!(close(back.drift_p[0], -0.2, 1e-14));
    }

    #[test]
    fn anisotropic_round_trip_via_kossakowski() {
        let mut form = DiffusionForm::isotropic(2, 1.0, 1.0, 0.0, 0.5);
        form.dpp[(0, 1)] = 0.2;
        form.dpp[(1, 0)] = 0.2;
        form.dqq[(1, 1)] = 0.7;
        let model = diffusion_to_lindblad(&form).unwrap();
        assert!(model.m() <= 4);
        let back = lindblad_to_diffusion(&model).unwrap();
        assert!((&back.dpp - &form.dpp).abs().max() < 1e-12);
        assert!((&back.dqq - &form.dqq).abs().max() < 1e-12);
        assert!((back.eta - form.eta).abs() < 1e-12);
    }
}
