//! Density matrices on a grid, in rank or kernel form, with their Wigner
//! functions and diagnostics.
//!
//! A rank-form state is `rho = sum_j lambda_j |psi_j><psi_j|` with each
//! `psi_j` of unit discrete norm `sum |psi|^2 h^d = 1`. The vectors need not be
//! orthogonal (mollified states are not); every diagnostic goes through the
//! Gram matrix of the vectors, so it is exact for any rank decomposition. A
//! kernel-form state stores `rho(x_a, x_b)`, acting as `(rho psi)(x_a) =
//! sum_b rho(x_a, x_b) psi(x_b) h^d`.

pub mod initial;
pub mod mollify;
pub mod snapshot;
pub mod wigner;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{fft_nd, SpatialGrid};

pub use initial::{
    fock_mixture, gaussian_packet, ground_state, hermite_functions, hermite_projection, random_mixed, superposition,
};
pub use mollify::{convolution_operator_norm, mollify_truncate, MollifierPair};
pub use wigner::{inverse_wigner, momentum_grid, wigner_transform, wigner_transform_with_residue, WignerGrid};

/// Largest grid size for which dense kernels and eigensolves are formed.
pub const KERNEL_CAP: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct RankTerm {
    pub weight: f64,
    pub psi: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Representation {
    Ranks(Vec<RankTerm>),
    Kernel(DMatrix<Complex64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityState {
    pub grid: SpatialGrid,
    pub repr: Representation,
}

/// How [`DensityState::particle_density`] evaluates `n(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DensityMethod {
    /// `n = sum_j lambda_j |psi_j|^2`, or the kernel diagonal.
    RankSum,
    /// `n_eps(x) = int rho(x + y/2, x - y/2) G_eps(y) dy` with a normalized
    /// Gaussian of standard deviation `eps`. With `richardson`, returns
    /// `(4 n_{eps/2} - n_eps) / 3`, cancelling the `eps^2` term.
    Mollified { epsilon: f64, richardson: bool },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralDiagnostics {
    pub trace: f64,
    pub min_eigenvalue: f64,
    pub purity: f64,
    pub trace_norm: f64,
}

/// The three pieces of `||Lambda psi||^2 = ||psi||^2 + ||grad psi||^2 + ||x psi||^2`,
/// weighted by the occupations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyNormParts {
    pub mass: f64,
    pub gradient: f64,
    pub moment: f64,
}

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

pub(crate) fn check_hermitian(k: &DMatrix<Complex64>, rel_tol: f64) -> Result<()> {
    let scale = k.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let mut worst = 0.0f64;
    for a in 0..k.nrows() {
        for b in a..k.ncols() {
            worst = worst.max((k[(a, b)] - k[(b, a)].conj()).norm());
        }
    }
    if worst > rel_tol * scale {
        return Err(Error::InvalidInput(format!(
            "kernel is not Hermitian: max |rho(x,y) - conj rho(y,x)| = {worst:.3e}"
        )));
    }
    Ok(())
}

/// Nonzero spectrum of `sum_j c_j |v_j><v_j|`. The columns are reduced by a
/// Householder QR, `V = Q R`, and the spectrum is that of `R diag(c) R^*`;
/// unlike a Gram-matrix square root this stays accurate when the `v_j` are
/// nearly dependent.
fn low_rank_spectrum(columns: &[Vec<Complex64>], coeffs: &[f64]) -> Vec<f64> {
    if coeffs.is_empty() {
        return Vec::new();
    }
    let rows = columns[0].len();
    let v = DMatrix::from_fn(rows, columns.len(), |i, j| columns[j][i]);
    let r = v.qr().r();
    let c = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        coeffs.len(),
        coeffs.iter().map(|&v| Complex64::new(v, 0.0)),
    ));
    let m = &r * c * r.adjoint();
    let m = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
    SymmetricEigen::new(m).eigenvalues.iter().copied().collect()
}

fn scaled_columns(vectors: impl Iterator<Item = Vec<Complex64>>, weight: f64) -> Vec<Vec<Complex64>> {
    let s = weight.sqrt();
    vectors.map(|v| v.into_iter().map(|z| z * s).collect()).collect()
}

/// Trace norm `||rho - sigma||_1` of two rank-form states on the same grid.
pub fn trace_norm_distance(rho: &DensityState, sigma: &DensityState) -> Result<f64> {
    if rho.grid != sigma.grid {
        return Err(Error::GridMismatch("trace-norm distance needs identical grids".into()));
    }
    let a = rho.to_rank_form()?;
    let b = sigma.to_rank_form()?;
    let (mut vectors, mut coeffs) = (Vec::new(), Vec::new());
    for t in a.ranks() {
        vectors.push(t.psi.clone());
        coeffs.push(t.weight);
    }
    for t in b.ranks() {
        vectors.push(t.psi.clone());
        coeffs.push(-t.weight);
    }
    let spectrum = low_rank_spectrum(&scaled_columns(vectors.into_iter(), rho.grid.cell_volume()), &coeffs);
    Ok(spectrum.iter().map(|v| v.abs()).sum())
}

impl DensityState {
    /// Rank-form state. Each vector is normalized and its weight rescaled by
    /// the squared norm, so the operator is unchanged.
    pub fn from_ranks(grid: SpatialGrid, terms: Vec<(f64, Vec<Complex64>)>) -> Result<Self> {
        let dv = grid.cell_volume();
        let mut ranks = Vec::with_capacity(terms.len());
        for (weight, mut psi) in terms {
            if psi.len() != grid.len() {
                return Err(Error::GridMismatch(format!(
                    "rank vector has {} entries, grid has {}",
                    psi.len(),
                    grid.len()
                )));
            }
            if !weight.is_finite() || psi.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
                return Err(Error::NonFinite("rank term"));
            }
            let norm_sq = psi.iter().map(|v| v.norm_sqr()).sum::<f64>() * dv;
            if norm_sq == 0.0 {
                continue;
            }
            let inv = 1.0 / norm_sq.sqrt();
            psi.iter_mut().for_each(|v| *v *= inv);
            ranks.push(RankTerm { weight: weight * norm_sq, psi });
        }
        Ok(Self { grid, repr: Representation::Ranks(ranks) })
    }

    /// Pure state `|psi><psi| / ||psi||^2` of unit trace.
    pub fn pure(grid: SpatialGrid, psi: Vec<Complex64>) -> Result<Self> {
        let mut state = Self::from_ranks(grid, vec![(1.0, psi)])?;
        if let Representation::Ranks(r) = &mut state.repr {
            r.iter_mut().for_each(|t| t.weight = 1.0);
        }
        Ok(state)
    }

    pub fn zero(grid: SpatialGrid) -> Self {
        Self { grid, repr: Representation::Ranks(Vec::new()) }
    }

    pub fn from_kernel(grid: SpatialGrid, kernel: DMatrix<Complex64>) -> Result<Self> {
        if kernel.nrows() != grid.len() || kernel.ncols() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "kernel is {}x{}, grid has {} points",
                kernel.nrows(),
                kernel.ncols(),
                grid.len()
            )));
        }
        if kernel.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::NonFinite("kernel"));
        }
        check_hermitian(&kernel, 1e-12)?;
        Ok(Self { grid, repr: Representation::Kernel(kernel) })
    }

    /// Rank terms; empty for kernel-form states.
    pub fn ranks(&self) -> &[RankTerm] {
        match &self.repr {
            Representation::Ranks(r) => r,
            Representation::Kernel(_) => &[],
        }
    }

    pub fn is_rank_form(&self) -> bool {
        matches!(self.repr, Representation::Ranks(_))
    }

    fn check_cap(&self) -> Result<()> {
        if self.grid.len() > KERNEL_CAP {
            return Err(Error::TooLarge { dim: self.grid.len(), cap: KERNEL_CAP });
        }
        Ok(())
    }

    /// Dense kernel `rho(x_a, x_b)`.
    pub fn kernel(&self) -> Result<DMatrix<Complex64>> {
        match &self.repr {
            Representation::Kernel(k) => Ok(k.clone()),
            Representation::Ranks(ranks) => {
                self.check_cap()?;
                let n = self.grid.len();
                let mut k = DMatrix::from_element(n, n, ZERO);
                for t in ranks {
                    for b in 0..n {
                        let cb = t.psi[b].conj() * t.weight;
                        for a in 0..n {
                            k[(a, b)] += t.psi[a] * cb;
                        }
                    }
                }
                Ok(k)
            }
        }
    }

    /// Rank form; kernels are diagonalized densely.
    pub fn to_rank_form(&self) -> Result<DensityState> {
        let kernel = match &self.repr {
            Representation::Ranks(_) => return Ok(self.clone()),
            Representation::Kernel(k) => k,
        };
        self.check_cap()?;
        let dv = self.grid.cell_volume();
        let eig = SymmetricEigen::new(kernel * Complex64::new(dv, 0.0));
        let largest = eig.eigenvalues.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let inv = 1.0 / dv.sqrt();
        let terms = eig
            .eigenvalues
            .iter()
            .enumerate()
            .filter(|(_, v)| v.abs() > 1e-15 * largest)
            .map(|(j, &v)| (v, eig.eigenvectors.column(j).iter().map(|c| c * inv).collect()))
            .collect();
        DensityState::from_ranks(self.grid, terms)
    }

    pub fn trace(&self) -> f64 {
        match &self.repr {
            Representation::Ranks(r) => r.iter().map(|t| t.weight).sum(),
            Representation::Kernel(k) => k.diagonal().iter().map(|v| v.re).sum::<f64>() * self.grid.cell_volume(),
        }
    }

    pub fn scaled(&self, s: f64) -> DensityState {
        let repr = match &self.repr {
            Representation::Ranks(r) => Representation::Ranks(
                r.iter().map(|t| RankTerm { weight: t.weight * s, psi: t.psi.clone() }).collect(),
            ),
            Representation::Kernel(k) => Representation::Kernel(k * Complex64::new(s, 0.0)),
        };
        DensityState { grid: self.grid, repr }
    }

    pub fn particle_density(&self, method: DensityMethod) -> Result<Vec<f64>> {
        Ok(self.particle_density_with_warnings(method)?.0)
    }

    /// Particle density, plus warnings (mollification width below the grid spacing).
    pub fn particle_density_with_warnings(&self, method: DensityMethod) -> Result<(Vec<f64>, Vec<String>)> {
        match method {
            DensityMethod::RankSum => Ok((self.rank_sum_density(), Vec::new())),
            DensityMethod::Mollified { epsilon, richardson } => {
                if !(epsilon.is_finite() && epsilon > 0.0) {
                    return Err(Error::InvalidInput(format!("mollification width must be > 0, got {epsilon}")));
                }
                if self.grid.dim != 1 {
                    return Err(Error::Unsupported("mollified density is implemented for d = 1".into()));
                }
                let h = self.grid.spacing();
                let mut warnings = Vec::new();
                let finest = if richardson { epsilon / 2.0 } else { epsilon };
                if finest < h {
                    warnings.push(format!(
                        "mollification width {finest:.3e} is below the grid spacing {h:.3e}"
                    ));
                }
                let g = wigner::kernel_to_relative(&self.kernel()?);
                let coarse = self.mollified_from_relative(&g, epsilon);
                if !richardson {
                    return Ok((coarse, warnings));
                }
                let fine = self.mollified_from_relative(&g, epsilon / 2.0);
                let out = fine.iter().zip(&coarse).map(|(f, c)| (4.0 * f - c) / 3.0).collect();
                Ok((out, warnings))
            }
        }
    }

    fn rank_sum_density(&self) -> Vec<f64> {
        match &self.repr {
            Representation::Kernel(k) => k.diagonal().iter().map(|v| v.re).collect(),
            Representation::Ranks(ranks) => {
                let mut n = vec![0.0; self.grid.len()];
                for t in ranks {
                    for (acc, v) in n.iter_mut().zip(&t.psi) {
                        *acc += t.weight * v.norm_sqr();
                    }
                }
                n
            }
        }
    }

    fn mollified_from_relative(&self, g: &[Complex64], epsilon: f64) -> Vec<f64> {
        let n = self.grid.points;
        let h = self.grid.spacing();
        let norm = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * epsilon);
        let weights: Vec<f64> = (0..n)
            .map(|j| {
                let y = (j as f64 - (n / 2) as f64) * h;
                norm * (-y * y / (2.0 * epsilon * epsilon)).exp() * h
            })
            .collect();
        g.chunks(n)
            .map(|row| row.iter().zip(&weights).map(|(v, w)| v.re * w).sum())
            .collect()
    }

    /// Trace, smallest eigenvalue, purity `tr rho^2` and trace norm.
    pub fn spectral_diagnostics(&self) -> Result<SpectralDiagnostics> {
        let spectrum: Vec<f64> = match &self.repr {
            Representation::Ranks(ranks) => {
                let columns = scaled_columns(ranks.iter().map(|t| t.psi.clone()), self.grid.cell_volume());
                let coeffs: Vec<f64> = ranks.iter().map(|t| t.weight).collect();
                let mut s = low_rank_spectrum(&columns, &coeffs);
                if ranks.len() < self.grid.len() {
                    s.push(0.0);
                }
                s
            }
            Representation::Kernel(k) => {
                self.check_cap()?;
                let dv = self.grid.cell_volume();
                SymmetricEigen::new(k * Complex64::new(dv, 0.0)).eigenvalues.iter().copied().collect()
            }
        };
        Ok(SpectralDiagnostics {
            trace: self.trace(),
            min_eigenvalue: spectrum.iter().copied().reduce(f64::min).unwrap_or(0.0),
            purity: spectrum.iter().map(|v| v * v).sum(),
            trace_norm: spectrum.iter().map(|v| v.abs()).sum(),
        })
    }

    /// Occupation-weighted `||psi||^2`, `||grad psi||^2`, `||x psi||^2`.
    pub fn energy_norm_parts(&self) -> Result<EnergyNormParts> {
        let state = self.to_rank_form()?;
        let len = state.grid.len();
        let sq = |v: &[Complex64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>();
        let mut parts = EnergyNormParts { mass: 0.0, gradient: 0.0, moment: 0.0 };
        for (t, col) in state.ranks().iter().zip(state.energy_columns()) {
            parts.mass += t.weight * sq(&col[..len]);
            parts.gradient += t.weight * sq(&col[len..2 * len]);
            parts.moment += t.weight * sq(&col[2 * len..]);
        }
        Ok(parts)
    }

    /// `||rho||_E = tr |Lambda rho Lambda|` with `Lambda^2 = 1 - Delta + |x|^2`.
    ///
    /// Each `Lambda psi_j` is represented by the stacked vector
    /// `(psi_j, |k| psi_j^, |x| psi_j)`, whose inner products reproduce
    /// `<Lambda psi_i, Lambda psi_j>` exactly. For indefinite states this is
    /// the sum of the energy norms of the positive and negative parts.
    pub fn energy_norm(&self) -> Result<f64> {
        let state = self.to_rank_form()?;
        let coeffs: Vec<f64> = state.ranks().iter().map(|t| t.weight).collect();
        let spectrum = low_rank_spectrum(&state.energy_columns(), &coeffs);
        Ok(spectrum.iter().map(|v| v.abs()).sum())
    }

    fn energy_columns(&self) -> Vec<Vec<Complex64>> {
        let grid = self.grid;
        let len = grid.len();
        let root_dv = grid.cell_volume().sqrt();
        let root_dk = (grid.cell_volume() / len as f64).sqrt();
        let dims = grid.dims();
        let k = grid.wavenumbers();
        let abs_k: Vec<f64> = (0..len)
            .map(|idx| {
                let m = grid.unravel(idx);
                (0..grid.dim).map(|a| k[m[a]] * k[m[a]]).sum::<f64>().sqrt()
            })
            .collect();
        let abs_x: Vec<f64> = (0..len).map(|idx| grid.radius_squared(idx).sqrt()).collect();
        self.ranks()
            .par_iter()
            .map(|t| {
                let mut spectrum = t.psi.clone();
                fft_nd(&mut spectrum, &dims, false);
                let mut col = Vec::with_capacity(3 * len);
                col.extend(t.psi.iter().map(|v| v * root_dv));
                col.extend(spectrum.iter().zip(&abs_k).map(|(v, a)| v * a * root_dk));
                col.extend(t.psi.iter().zip(&abs_x).map(|(v, a)| v * a * root_dv));
                col
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn line(n: usize, l: f64) -> SpatialGrid {
        SpatialGrid::line(n, l).unwrap()
    }

    fn hermite_state(grid: SpatialGrid, weights: &[f64]) -> DensityState {
        let h = hermite_functions(weights.len(), &grid.coordinates());
        let terms = weights
            .iter()
            .zip(h)
            .map(|(&w, f)| (w, f.into_iter().map(|v| Complex64::new(v, 0.0)).collect()))
            .collect();
        DensityState::from_ranks(grid, terms).unwrap()
    }

    #[test]
    fn two_level_mixture_diagnostics() {
        let s = hermite_state(line(64, 8.0), &[0.7, 0.3]);
        let d = s.spectral_diagnostics().unwrap();
        assert_relative_eq!(d.trace, 1.0, epsilon = 1e-12);
        assert_relative_eq!(d.purity, 0.58, epsilon = 1e-12);
        assert!(d.min_eigenvalue.abs() < 1e-12);
        assert_relative_eq!(d.trace_norm, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn kernel_and_rank_forms_agree() {
        let s = hermite_state(line(48, 7.0), &[0.5, 0.3, 0.2]);
        let k = DensityState::from_kernel(s.grid, s.kernel().unwrap()).unwrap();
        assert_relative_eq!(k.trace(), s.trace(), epsilon = 1e-10);
        let a = s.spectral_diagnostics().unwrap();
        let b = k.spectral_diagnostics().unwrap();
        assert_relative_eq!(a.purity, b.purity, epsilon = 1e-10);
        let back = k.to_rank_form().unwrap();
        assert!(trace_norm_distance(&back, &s).unwrap() < 1e-10);
    }

    #[test]
    fn ground_state_energy_norm_is_two() {
        let s = hermite_state(line(128, 8.0), &[1.0]);
        assert_relative_eq!(s.energy_norm().unwrap(), 2.0, epsilon = 1e-8);
        assert_eq!(DensityState::zero(s.grid).energy_norm().unwrap(), 0.0);
    }

    #[test]
    fn indefinite_energy_norm_adds_parts() {
        let grid = line(128, 8.0);
        let a = hermite_state(grid, &[1.0]);
        let h = hermite_functions(2, &grid.coordinates());
        let b = DensityState::from_ranks(
            grid,
            vec![
                (1.0, h[0].iter().map(|&v| Complex64::new(v, 0.0)).collect()),
                (-1.0, h[1].iter().map(|&v| Complex64::new(v, 0.0)).collect()),
            ],
        )
        .unwrap();
        // |0><0| has norm 2, |1><1| has norm 1 + 3/2 + 3/2 = 4.
        assert_relative_eq!(b.energy_norm().unwrap(), 6.0, epsilon = 1e-8);
        assert_relative_eq!(a.energy_norm().unwrap(), 2.0, epsilon = 1e-8);
    }

    #[test]
    fn rank_sum_density_matches_gaussian() {
        let grid = line(128, 8.0);
        let s = hermite_state(grid, &[1.0]);
        let n = s.particle_density(DensityMethod::RankSum).unwrap();
        for (x, v) in grid.coordinates().iter().zip(&n) {
            let exact = (-x * x).exp() / std::f64::consts::PI.sqrt();
            assert!((v - exact).abs() < 1e-10);
        }
    }

    #[test]
    fn mollified_density_converges() {
        let grid = line(512, 8.0);
        let s = hermite_state(grid, &[0.6, 0.4]);
        let exact = s.particle_density(DensityMethod::RankSum).unwrap();
        let h = grid.spacing();
        let err = |eps: f64, richardson: bool| -> f64 {
            let n = s.particle_density(DensityMethod::Mollified { epsilon: eps, richardson }).unwrap();
            n.iter().zip(&exact).map(|(a, b)| (a - b).abs()).sum::<f64>() * h
        };
        let e: Vec<f64> = [0.2, 0.1, 0.05].iter().map(|&eps| err(eps, false)).collect();
        assert!(e[0] > e[1] && e[1] > e[2]);
        assert!((e[0] / e[1]).log2() > 1.0 && (e[1] / e[2]).log2() > 1.0);
        assert!(err(0.2, true) < e[1]);
    }

    #[test]
    fn narrow_mollifier_warns() {
        let s = hermite_state(line(32, 4.0), &[1.0]);
        let (_, warnings) = s
            .particle_density_with_warnings(DensityMethod::Mollified { epsilon: 0.1, richardson: false })
            .unwrap();
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn non_hermitian_kernel_is_rejected() {
        let grid = line(8, 2.0);
        let mut k = DMatrix::from_element(8, 8, ZERO);
        k[(0, 1)] = Complex64::new(1.0, 0.0);
        assert!(DensityState::from_kernel(grid, k).is_err());
    }
}
