//! Self-consistent Hartree potential, energy functionals and the a-priori
//! diagnostics built on them.
//!
//! In three dimensions `phi = n * 1/(4 pi |x|)` is the free-space Coulomb
//! potential, computed on a zero-padded grid (padding factor 2 per axis). The
//! kernel is split as `erf(r/a)/(4 pi r) + erfc(r/a)/(4 pi r)`: the smooth
//! long-range part is sampled in real space with minimum-image distances on
//! the padded box, the short-range part is applied through its exact Fourier
//! multiplier `(1 - exp(-k^2 a^2 / 4)) / k^2`. With `a` a few grid spacings
//! both pieces are spectrally accurate for resolved densities.
//!
//! In one dimension `phi = n * (-|x|/2)`, the free-space Green's function of
//! `-d^2/dx^2`, evaluated by prefix sums with a fourth-order quadrature
//! correction. With this kernel `phi` and `E^sc` are negative, and the
//! positivity statements below apply to `d = 3` only.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use statrs::function::erf::erf;

use crate::error::{ensure_finite, Error, Result};
use crate::grid::{fft_nd, fft_wavenumbers, SpatialGrid};
use crate::model::HartreeCoupling;
use crate::states::{DensityMethod, DensityState};

/// Options for [`PoissonSolver`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PoissonOptions {
    /// Permit `d = 2` (logarithmic kernel, second-order accurate at the origin cell).
    pub allow_2d: bool,
}

/// Free-space Poisson solver with a cached transfer function.
#[derive(Debug, Clone)]
pub struct PoissonSolver {
    grid: SpatialGrid,
    padded: Vec<usize>,
    multiplier: Vec<Complex64>,
}

fn minimum_image(i: usize, m: usize, h: f64) -> f64 {
    let s = if i <= m / 2 { i as f64 } else { i as f64 - m as f64 };
    s * h
}

impl PoissonSolver {
    pub fn new(grid: SpatialGrid, options: PoissonOptions) -> Result<Self> {
        match grid.dim {
            1 => Ok(Self { grid, padded: Vec::new(), multiplier: Vec::new() }),
            2 if !options.allow_2d => Err(Error::Unsupported(
                "two-dimensional Hartree coupling is disabled; set allow_2d to opt in".into(),
            )),
            2 | 3 => Ok(Self::padded(grid)),
            d => Err(Error::InvalidInput(format!("dimension {d} not supported"))),
        }
    }

    fn padded(grid: SpatialGrid) -> Self {
        let d = grid.dim;
        let m = 2 * grid.points;
        let padded = vec![m; d];
        let h = grid.spacing();
        let total = m.pow(d as u32);
        let a = 3.0 * h;
        let mut kernel: Vec<Complex64> = (0..total)
            .into_par_iter()
            .map(|idx| {
                let mut rest = idx;
                let mut r2 = 0.0;
                for _ in 0..d {
                    let x = minimum_image(rest % m, m, h);
                    r2 += x * x;
                    rest /= m;
                }
                let r = r2.sqrt();
                let v = if d == 3 {
                    if r == 0.0 {
                        1.0 / (2.0 * PI.powf(1.5) * a)
                    } else {
                        erf(r / a) / (4.0 * PI * r)
                    }
                } else if r == 0.0 {
                    // Cell average of -ln(r)/(2 pi) over the origin square.
                    -((h / 2.0).ln() + (2f64.ln() - 3.0 + PI / 2.0) / 2.0) / (2.0 * PI)
                } else {
                    -r.ln() / (2.0 * PI)
                };
                Complex64::new(v * h.powi(d as i32), 0.0)
            })
            .collect();
        fft_nd(&mut kernel, &padded, false);
        if d == 3 {
            let k = fft_wavenumbers(m, h);
            kernel.par_iter_mut().enumerate().for_each(|(idx, v)| {
                let (i, j, l) = (idx / (m * m), (idx / m) % m, idx % m);
                let k2 = k[i] * k[i] + k[j] * k[j] + k[l] * k[l];
                let short = if k2 == 0.0 { a * a / 4.0 } else { (1.0 - (-k2 * a * a / 4.0).exp()) / k2 };
                *v += short;
            });
        }
        Self { grid, padded, multiplier: kernel }
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    /// Potential at the grid points.
    pub fn solve(&self, n: &[f64]) -> Result<Vec<f64>> {
        if n.len() != self.grid.len() {
            return Err(Error::GridMismatch(format!("density has {} entries, grid {}", n.len(), self.grid.len())));
        }
        ensure_finite(n, "density")?;
        if self.grid.dim == 1 {
            return Ok(potential_1d_fine(&self.grid, n).into_iter().step_by(2).collect());
        }
        let d = self.grid.dim;
        let np = self.grid.points;
        let m = 2 * np;
        let mut buf = vec![Complex64::new(0.0, 0.0); m.pow(d as u32)];
        for (idx, &v) in n.iter().enumerate() {
            buf[self.padded_index(idx)] = Complex64::new(v, 0.0);
        }
        fft_nd(&mut buf, &self.padded, false);
        buf.par_iter_mut().zip(&self.multiplier).for_each(|(v, k)| *v *= k);
        fft_nd(&mut buf, &self.padded, true);
        let scale = 1.0 / buf.len() as f64;
        Ok((0..n.len()).map(|idx| buf[self.padded_index(idx)].re * scale).collect())
    }

    fn padded_index(&self, idx: usize) -> usize {
        let m = self.grid.unravel(idx);
        let mp = 2 * self.grid.points;
        (0..self.grid.dim).fold(0, |acc, a| acc * mp + m[a])
    }
}

/// Solves `-Delta phi = n` in free space on the grid of `n`.
pub fn solve_poisson(grid: SpatialGrid, n: &[f64], options: PoissonOptions) -> Result<Vec<f64>> {
    PoissonSolver::new(grid, options)?.solve(n)
}

/// One-dimensional potential `-(1/2) int |z - y| n(y) dy` at the `2N` points
/// `z_k = -L + k h / 2` (grid points at even `k`, midpoints at odd `k`).
///
/// The quadrature is the rectangle sum over the grid plus the Euler-Maclaurin
/// correction for the kink of `|z - y|` at `y = z`, which makes it fourth order.
pub fn potential_1d_fine(grid: &SpatialGrid, n: &[f64]) -> Vec<f64> {
    let h = grid.spacing();
    let x = grid.coordinates();
    let count = n.len();
    // Prefix sums of n_j and x_j n_j.
    let mut m0 = vec![0.0; count + 1];
    let mut m1 = vec![0.0; count + 1];
    for j in 0..count {
        m0[j + 1] = m0[j] + n[j] * h;
        m1[j + 1] = m1[j] + x[j] * n[j] * h;
    }
    let (t0, t1) = (m0[count], m1[count]);
    (0..2 * count)
        .map(|k| {
            let z = -grid.half_width + k as f64 * h / 2.0;
            // Number of grid points with x_j <= z.
            let below = (k / 2 + 1).min(count);
            let left = z * m0[below] - m1[below];
            let right = (t1 - m1[below]) - z * (t0 - m0[below]);
            let correction = if k % 2 == 0 {
                -h * h * n[k / 2] / 12.0
            } else {
                let nz = 0.5 * (n[k / 2] + n[(k / 2 + 1) % count]);
                h * h * nz / 24.0
            };
            -0.5 * (left + right) + correction
        })
        .collect()
}

/// Isotropic Gaussian fitted to the monopole and second moment of `n`, used
/// to split off the slowly decaying part of `phi` in three dimensions.
struct MonopoleFit {
    charge: f64,
    center: [f64; 3],
    sigma: f64,
}

impl MonopoleFit {
    fn new(grid: &SpatialGrid, n: &[f64]) -> Self {
        let dv = grid.cell_volume();
        let charge: f64 = n.iter().sum::<f64>() * dv;
        let mut center = [0.0; 3];
        for (idx, v) in n.iter().enumerate() {
            let x = grid.position(idx);
            for a in 0..3 {
                center[a] += x[a] * v * dv / charge;
            }
        }
        let mut second = 0.0;
        for (idx, v) in n.iter().enumerate() {
            let x = grid.position(idx);
            second += (0..3).map(|a| (x[a] - center[a]).powi(2)).sum::<f64>() * v * dv / charge;
        }
        Self { charge, center, sigma: (second / 3.0).sqrt().max(grid.spacing()) }
    }

    fn radius(&self, grid: &SpatialGrid, idx: usize) -> f64 {
        let x = grid.position(idx);
        (0..3).map(|a| (x[a] - self.center[a]).powi(2)).sum::<f64>().sqrt()
    }

    fn density(&self, r: f64) -> f64 {
        let s2 = self.sigma * self.sigma;
        self.charge * (2.0 * PI * s2).powf(-1.5) * (-r * r / (2.0 * s2)).exp()
    }

    fn potential(&self, r: f64) -> f64 {
        let c = self.sigma * std::f64::consts::SQRT_2;
        if r < 1e-12 {
            self.charge * 2.0 / (PI.sqrt() * c) / (4.0 * PI)
        } else {
            self.charge * erf(r / c) / (4.0 * PI * r)
        }
    }

    /// `int |grad phi_g|^2 = Q^2 / (4 pi^{3/2} sigma)` for the Gaussian charge.
    fn field_energy(&self) -> f64 {
        self.charge * self.charge / (4.0 * PI.powf(1.5) * self.sigma)
    }
}

fn spectral_apply(grid: &SpatialGrid, f: &[f64], symbol: impl Fn(&[f64; 3]) -> f64 + Sync) -> Vec<f64> {
    let dims = grid.dims();
    let k = grid.wavenumbers();
    let mut buf: Vec<Complex64> = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_nd(&mut buf, &dims, false);
    buf.par_iter_mut().enumerate().for_each(|(idx, v)| {
        let m = grid.unravel(idx);
        let mut kv = [0.0; 3];
        for a in 0..grid.dim {
            kv[a] = k[m[a]];
        }
        *v *= symbol(&kv);
    });
    fft_nd(&mut buf, &dims, true);
    let scale = 1.0 / grid.len() as f64;
    buf.iter().map(|v| v.re * scale).collect()
}

/// Relative L2 residual of `-Delta phi = n` on the interior (two cells away
/// from the boundary). The Laplacian is spectral, applied to `phi` minus the
/// potential of a fitted Gaussian charge, whose Laplacian is added analytically.
pub fn poisson_residual(grid: &SpatialGrid, n: &[f64], phi: &[f64]) -> Result<f64> {
    if grid.dim != 3 {
        return Err(Error::Unsupported("the Poisson residual check is for d = 3".into()));
    }
    let fit = MonopoleFit::new(grid, n);
    let remainder: Vec<f64> =
        phi.iter().enumerate().map(|(idx, p)| p - fit.potential(fit.radius(grid, idx))).collect();
    let lap = spectral_apply(grid, &remainder, |k| k[0] * k[0] + k[1] * k[1] + k[2] * k[2]);
    let np = grid.points;
    let (mut num, mut den) = (0.0, 0.0);
    for idx in 0..grid.len() {
        let m = grid.unravel(idx);
        if (0..3).any(|a| m[a] < 2 || m[a] + 2 >= np) {
            continue;
        }
        let r = lap[idx] + fit.density(fit.radius(grid, idx)) - n[idx];
        num += r * r;
        den += n[idx] * n[idx];
    }
    Ok((num / den).sqrt())
}

/// `int |grad phi|^2` over all space. With `phi = r + phi_g` (`phi_g` the
/// potential of a fitted Gaussian charge `n_g`) this is
/// `int |grad r|^2 + 2 int r n_g + int |grad phi_g|^2`; the first two terms are
/// computed on the grid, the last in closed form.
pub fn field_energy(grid: &SpatialGrid, n: &[f64], phi: &[f64]) -> Result<f64> {
    if grid.dim != 3 {
        return Err(Error::Unsupported("the field energy is for d = 3".into()));
    }
    let fit = MonopoleFit::new(grid, n);
    let dv = grid.cell_volume();
    let remainder: Vec<f64> =
        phi.iter().enumerate().map(|(idx, p)| p - fit.potential(fit.radius(grid, idx))).collect();
    let lap = spectral_apply(grid, &remainder, |k| k[0] * k[0] + k[1] * k[1] + k[2] * k[2]);
    let gradient: f64 = remainder.iter().zip(&lap).map(|(r, l)| r * l).sum::<f64>() * dv;
    let cross: f64 = remainder
        .iter()
        .enumerate()
        .map(|(idx, r)| r * fit.density(fit.radius(grid, idx)))
        .sum::<f64>()
        * dv;
    Ok(gradient + 2.0 * cross + fit.field_energy())
}

/// Energies of a state at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReport {
    pub time: f64,
    pub trace: f64,
    /// Smallest eigenvalue, `NaN` when not computed.
    pub min_eig: f64,
    pub ekin: f64,
    pub eext: f64,
    pub esc: f64,
    pub etot: f64,
    pub energy_norm: f64,
}

/// Density, potential and self-consistent energy `E^sc = (s/2) int phi n`.
#[derive(Debug, Clone, PartialEq)]
pub struct HartreeField {
    pub n: Vec<f64>,
    pub phi: Vec<f64>,
    pub esc: f64,
}

impl HartreeField {
    pub fn new(solver: &PoissonSolver, n: Vec<f64>, coupling: HartreeCoupling) -> Result<Self> {
        let phi: Vec<f64> = solver.solve(&n)?.into_iter().map(|v| v * coupling.strength).collect();
        let esc = 0.5 * phi.iter().zip(&n).map(|(p, v)| p * v).sum::<f64>() * solver.grid().cell_volume();
        Ok(Self { n, phi, esc })
    }
}

/// Kinetic, external and self-consistent energies of a state.
///
/// `ekin = (1/2) sum lambda_j ||grad psi_j||^2` (spectral gradient),
/// `eext = (1/2) sum lambda_j ||x psi_j||^2` when `confinement`, and
/// `esc` from [`HartreeField`] when a coupling is given.
pub fn energy_functionals(
    rho: &DensityState,
    confinement: bool,
    hartree: Option<HartreeCoupling>,
) -> Result<EnergyReport> {
    let state = rho.to_rank_form()?;
    let parts = state.energy_norm_parts()?;
    let ekin = 0.5 * parts.gradient;
    let eext = if confinement { 0.5 * parts.moment } else { 0.0 };
    let esc = match hartree {
        Some(c) => {
            let solver = PoissonSolver::new(rho.grid, PoissonOptions::default())?;
            HartreeField::new(&solver, state.particle_density(DensityMethod::RankSum)?, c)?.esc
        }
        None => 0.0,
    };
    Ok(EnergyReport {
        time: 0.0,
        trace: state.trace(),
        min_eig: f64::NAN,
        ekin,
        eext,
        esc,
        etot: ekin + eext + esc,
        energy_norm: state.energy_norm()?,
    })
}

/// `||n||_p / (tr(rho)^theta E^kin^{1 - theta})` with `theta = (3 - p) / (2p)`.
///
/// The constant of the corresponding Lieb-Thirring inequality is not computed.
pub fn lieb_thirring_ratio(rho: &DensityState, p: f64) -> Result<f64> {
    if rho.grid.dim != 3 {
        return Err(Error::Unsupported("the Lieb-Thirring ratio is defined for d = 3".into()));
    }
    if !(1.0..=3.0).contains(&p) {
        return Err(Error::InvalidInput(format!("p = {p} not in [1, 3]")));
    }
    let trace = rho.trace();
    let ekin = 0.5 * rho.energy_norm_parts()?.gradient;
    let theta = (3.0 - p) / (2.0 * p);
    if ekin <= 0.0 && trace != 0.0 && theta < 1.0 {
        return Err(Error::InvalidInput("kinetic energy vanishes for a nonzero state".into()));
    }
    let n = rho.particle_density(DensityMethod::RankSum)?;
    let dv = rho.grid.cell_volume();
    let norm = (n.iter().map(|v| v.abs().powf(p)).sum::<f64>() * dv).powf(1.0 / p);
    let denom = trace.powf(theta) * if theta < 1.0 { ekin.powf(1.0 - theta) } else { 1.0 };
    Ok(norm / denom)
}

/// Outcome of [`gronwall_monitor`].
#[derive(Debug, Clone, PartialEq)]
pub struct GronwallReport {
    /// Largest centred finite-difference value of `d/dt ln etot`.
    pub empirical_k: f64,
    /// First sample violating either bound.
    pub first_violation: Option<usize>,
    pub passed: bool,
}

/// Checks `etot(t) <= exp(K t) etot(0) (1 + tol)` and `d/dt ln etot <= K + tol`.
pub fn gronwall_monitor(reports: &[EnergyReport], k: f64, tol: f64) -> Result<GronwallReport> {
    let first = reports.first().ok_or_else(|| Error::InvalidInput("empty trajectory".into()))?;
    if !(first.etot > 0.0) {
        return Err(Error::InvalidInput(format!("etot(0) = {} must be positive", first.etot)));
    }
    if !(k.is_finite() && k >= 0.0) {
        return Err(Error::InvalidInput(format!("K = {k} must be finite and >= 0")));
    }
    if reports.len() >= 3 {
        let dt0 = reports[1].time - reports[0].time;
        let uneven = reports.windows(2).any(|w| ((w[1].time - w[0].time) - dt0).abs() > 1e-9 * dt0.abs().max(1.0));
        if uneven || dt0 <= 0.0 {
            return Err(Error::InvalidInput("reports must be uniformly spaced in time".into()));
        }
    }
    let mut first_violation = None;
    let mut empirical_k = 0.0f64;
    for (i, r) in reports.iter().enumerate() {
        let bound = (k * (r.time - first.time)).exp() * first.etot * (1.0 + tol);
        let mut violated = r.etot > bound;
        if i > 0 && i + 1 < reports.len() {
            let (a, b) = (&reports[i - 1], &reports[i + 1]);
            let rate = (b.etot.ln() - a.etot.ln()) / (b.time - a.time);
            empirical_k = empirical_k.max(rate);
            violated |= rate > k + tol;
        }
        if violated && first_violation.is_none() {
            first_violation = Some(i);
        }
    }
    Ok(GronwallReport { empirical_k, first_violation, passed: first_violation.is_none() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::initial::ground_state;

    #[test]
    fn one_dimensional_potential_matches_direct_sum() {
        let grid = SpatialGrid::line(16, 3.0).unwrap();
        let n: Vec<f64> = grid.coordinates().iter().map(|x| (-x * x).exp() * (1.0 + 0.3 * x)).collect();
        let fine = potential_1d_fine(&grid, &n);
        let h = grid.spacing();
        for (k, v) in fine.iter().enumerate() {
            let z = -3.0 + k as f64 * h / 2.0;
            let direct: f64 =
                -0.5 * grid.coordinates().iter().zip(&n).map(|(x, m)| (z - x).abs() * m).sum::<f64>() * h;
            let nz = if k % 2 == 0 { n[k / 2] } else { 0.5 * (n[k / 2] + n[(k / 2 + 1) % 16]) };
            let correction = if k % 2 == 0 { -h * h * nz / 12.0 } else { h * h * nz / 24.0 };
            assert!((v - direct - correction).abs() < 1e-13);
        }
    }

    #[test]
    fn one_dimensional_gaussian_potential() {
        // -(1/2) int |x - y| e^{-y^2}/sqrt(pi) dy = -(x erf(x) + e^{-x^2}/sqrt(pi)) / 2.
        let grid = SpatialGrid::line(512, 10.0).unwrap();
        let n: Vec<f64> = grid.coordinates().iter().map(|x| (-x * x).exp() / PI.sqrt()).collect();
        let fine = potential_1d_fine(&grid, &n);
        for (k, p) in fine.iter().enumerate() {
            let x = -10.0 + k as f64 * grid.spacing() / 2.0;
            let exact = -(x * erf(x) + (-x * x).exp() / PI.sqrt()) / 2.0;
            assert!((p - exact).abs() < 1e-7, "{x} {p} {exact}");
        }
    }

    #[test]
    fn two_dimensions_need_opt_in() {
        let grid = SpatialGrid::new(2, 8, 2.0).unwrap();
        assert!(matches!(PoissonSolver::new(grid, PoissonOptions::default()), Err(Error::Unsupported(_))));
        assert!(PoissonSolver::new(grid, PoissonOptions { allow_2d: true }).is_ok());
    }

    #[test]
    fn nan_density_is_rejected() {
        let grid = SpatialGrid::line(8, 2.0).unwrap();
        let mut n = vec![0.0; 8];
        n[3] = f64::NAN;
        assert!(solve_poisson(grid, &n, PoissonOptions::default()).is_err());
    }

    #[test]
    fn ground_state_energies() {
        let grid = SpatialGrid::line(128, 8.0).unwrap();
        let rho = ground_state(grid).unwrap();
        let e = energy_functionals(&rho, true, None).unwrap();
        assert!((e.ekin - 0.25).abs() < 1e-10);
        assert!((e.eext - 0.25).abs() < 1e-10);
        assert_eq!(e.etot, e.ekin + e.eext + e.esc);
        assert!((e.energy_norm - 2.0).abs() < 1e-8);
    }

    #[test]
    fn self_consistent_energy_is_quadratic() {
        let grid = SpatialGrid::line(512, 10.0).unwrap();
        let rho = ground_state(grid).unwrap();
        let h = Some(HartreeCoupling::default());
        let a = energy_functionals(&rho, true, h).unwrap();
        let b = energy_functionals(&rho.scaled(3.0), true, h).unwrap();
        assert!((b.esc - 9.0 * a.esc).abs() < 1e-12 * a.esc.abs());
        assert!((b.ekin - 3.0 * a.ekin).abs() < 1e-12);
        // E|X - Y| = sqrt(2/pi) for independent N(0, 1/2) variables.
        assert!((a.esc + 0.25 * (2.0 / PI).sqrt()).abs() < 1e-7);
    }

    #[test]
    fn three_dimensional_gaussian_charge() {
        let grid = SpatialGrid::new(3, 32, 6.0).unwrap();
        let sigma: f64 = 0.8;
        let n: Vec<f64> = (0..grid.len())
            .map(|i| (2.0 * PI * sigma * sigma).powf(-1.5) * (-grid.radius_squared(i) / (2.0 * sigma * sigma)).exp())
            .collect();
        let phi = solve_poisson(grid, &n, PoissonOptions::default()).unwrap();
        let mut worst = 0.0f64;
        for (i, p) in phi.iter().enumerate() {
            let r = grid.radius_squared(i).sqrt();
            let exact = if r == 0.0 {
                (2.0 / PI).sqrt() / (4.0 * PI * sigma)
            } else {
                erf(r / (sigma * std::f64::consts::SQRT_2)) / (4.0 * PI * r)
            };
            worst = worst.max(((p - exact) / exact).abs());
        }
        assert!(worst < 1e-4, "{worst}");
        assert!(phi.iter().all(|&p| p > 0.0));
        assert!(poisson_residual(&grid, &n, &phi).unwrap() < 1e-6);
        let dv = grid.cell_volume();
        let pn: f64 = phi.iter().zip(&n).map(|(p, v)| p * v).sum::<f64>() * dv;
        let grad = field_energy(&grid, &n, &phi).unwrap();
        assert!(((pn - grad) / pn).abs() < 1e-6, "{pn} {grad}");
    }

    #[test]
    fn monitor_flags_growth() {
        let mk = |t: f64, e: f64| EnergyReport {
            time: t,
            trace: 1.0,
            min_eig: f64::NAN,
            ekin: e,
            eext: 0.0,
            esc: 0.0,
            etot: e,
            energy_norm: 1.0 + 2.0 * e,
        };
        let flat: Vec<_> = (0..5).map(|i| mk(i as f64 * 0.1, 1.0)).collect();
        let r = gronwall_monitor(&flat, 0.0, 1e-12).unwrap();
        assert!(r.passed && r.empirical_k.abs() < 1e-12);
        let growing: Vec<_> = (0..5).map(|i| mk(i as f64 * 0.1, (0.5 * i as f64 * 0.1).exp())).collect();
        let r = gronwall_monitor(&growing, 0.1, 1e-9).unwrap();
        assert_eq!(r.first_violation, Some(1));
        assert!((r.empirical_k - 0.5).abs() < 1e-3);
        assert!(gronwall_monitor(&[mk(0.0, 0.0)], 1.0, 0.0).is_err());
    }
}
