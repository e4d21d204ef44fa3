//! Discrete Wigner transform in one dimension.
//!
//! With `x_i` the centred grid of spacing `h` on `[-L, L)`, the relative
//! coordinate is sampled at `y_m = m h`, `m = -N/2 .. N/2 - 1`, and the
//! momentum grid is the FFT dual `xi_l = (l - N/2) pi / L`. For even `m` the
//! value `rho(x_i + y_m/2, x_i - y_m/2)` is a kernel entry (indices taken mod
//! `N`); for odd `m` it sits half-way between two entries of the `m`-th
//! diagonal and is obtained by a unitary half-sample Fourier shift along that
//! diagonal. The map kernel -> `g(i, m)` is therefore a bijection, and the
//! transform is exactly invertible on the grid.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use super::DensityState;
use crate::error::{Error, Result};
use crate::grid::{CenteredFft, SpatialGrid};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Real Wigner function on the product of a position and a momentum grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WignerGrid {
    pub grid_x: SpatialGrid,
    /// Momentum grid with spacing `pi / L` and `N` points.
    pub grid_xi: SpatialGrid,
    /// `values[i * N + l] = w(x_i, xi_l)`.
    pub values: Vec<f64>,
}

/// Momentum grid dual to `grid`: `N` points, half-width `N pi / (2 L)`.
pub fn momentum_grid(grid: &SpatialGrid) -> Result<SpatialGrid> {
    SpatialGrid::new(grid.dim, grid.points, grid.points as f64 * PI / (2.0 * grid.half_width))
}

impl WignerGrid {
    pub fn new(grid_x: SpatialGrid, values: Vec<f64>) -> Result<Self> {
        if grid_x.dim != 1 {
            return Err(Error::Unsupported("Wigner grids are one-dimensional".into()));
        }
        let n = grid_x.points;
        if values.len() != n * n {
            return Err(Error::GridMismatch(format!(
                "expected {} Wigner values, got {}",
                n * n,
                values.len()
            )));
        }
        Ok(Self { grid_xi: momentum_grid(&grid_x)?, grid_x, values })
    }

    pub fn points(&self) -> usize {
        self.grid_x.points
    }

    pub fn dx(&self) -> f64 {
        self.grid_x.spacing()
    }

    pub fn dxi(&self) -> f64 {
        self.grid_xi.spacing()
    }

    pub fn at(&self, i: usize, l: usize) -> f64 {
        self.values[i * self.points() + l]
    }

    /// `sum w dx dxi`.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.dx() * self.dxi()
    }

    /// Position marginal `sum_l w(x_i, xi_l) dxi`, equal to the kernel diagonal.
    pub fn position_density(&self) -> Vec<f64> {
        let n = self.points();
        let dxi = self.dxi();
        self.values.chunks(n).map(|row| row.iter().sum::<f64>() * dxi).collect()
    }

    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.dx() * self.dxi()).sqrt()
    }

    pub fn max_abs_diff(&self, other: &WignerGrid) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn wrap(i: isize, n: usize) -> usize {
    i.rem_euclid(n as isize) as usize
}

/// Half-sample shift of a periodic sequence: `out[k] = s(k + sign/2)` for the
/// trigonometric interpolant `s`. Unitary, so `shift(-1)` undoes `shift(+1)`.
fn half_shift(buf: &mut [Complex64], sign: f64, planner: &mut FftPlanner<f64>) {
    let n = buf.len();
    planner.plan_fft_forward(n).process(buf);
    for (q, c) in buf.iter_mut().enumerate() {
        let s = if q < n / 2 { q as f64 } else { q as f64 - n as f64 };
        *c *= Complex64::from_polar(1.0 / n as f64, sign * PI * s / n as f64);
    }
    planner.plan_fft_inverse(n).process(buf);
}

/// Samples `g[i * N + j] = rho(x_i + y_m / 2, x_i - y_m / 2)` with `m = j - N/2`.
pub(crate) fn kernel_to_relative(kernel: &DMatrix<Complex64>) -> Vec<Complex64> {
    let n = kernel.nrows();
    let half = (n / 2) as isize;
    let columns: Vec<(usize, Vec<Complex64>)> = (0..n)
        .into_par_iter()
        .map_init(FftPlanner::new, |planner, j| {
            let m = j as isize - half;
            let mut col = vec![ZERO; n];
            if m % 2 == 0 {
                for (i, v) in col.iter_mut().enumerate() {
                    let i = i as isize;
                    *v = kernel[(wrap(i + m / 2, n), wrap(i - m / 2, n))];
                }
            } else {
                let mut diag: Vec<Complex64> =
                    (0..n).map(|k| kernel[(wrap(k as isize + m, n), k)]).collect();
                half_shift(&mut diag, 1.0, planner);
                let offset = (m + 1).div_euclid(2);
                for (i, v) in col.iter_mut().enumerate() {
                    *v = diag[wrap(i as isize - offset, n)];
                }
            }
            (j, col)
        })
        .collect();
    let mut g = vec![ZERO; n * n];
    for (j, col) in columns {
        for (i, v) in col.into_iter().enumerate() {
            g[i * n + j] = v;
        }
    }
    g
}

/// Inverse of [`kernel_to_relative`].
pub(crate) fn relative_to_kernel(g: &[Complex64], n: usize) -> DMatrix<Complex64> {
    let half = (n / 2) as isize;
    let diagonals: Vec<(isize, Vec<Complex64>)> = (0..n)
        .into_par_iter()
        .map_init(FftPlanner::new, |planner, j| {
            let m = j as isize - half;
            let mut diag = vec![ZERO; n];
            if m % 2 == 0 {
                for i in 0..n {
                    let b = wrap(i as isize - m / 2, n);
                    diag[b] = g[i * n + j];
                }
            } else {
                let offset = (m + 1).div_euclid(2);
                for (k, v) in diag.iter_mut().enumerate() {
                    *v = g[wrap(k as isize + offset, n) * n + j];
                }
                half_shift(&mut diag, -1.0, planner);
            }
            (m, diag)
        })
        .collect();
    let mut kernel = DMatrix::from_element(n, n, ZERO);
    for (m, diag) in diagonals {
        for (b, v) in diag.into_iter().enumerate() {
            kernel[(wrap(b as isize + m, n), b)] = v;
        }
    }
    kernel
}

/// Wigner transform `w(x, xi) = (2 pi)^{-1} int rho(x + y/2, x - y/2) e^{-i xi y} dy`.
///
/// The sign of the exponent makes `xi` the momentum `p = -i d/dx`, so a
/// state with `<p> = p0` has its Wigner function centred at `xi = p0`.
pub fn wigner_transform(rho: &DensityState) -> Result<WignerGrid> {
    Ok(wigner_transform_with_residue(rho)?.0)
}

/// As [`wigner_transform`], also returning the discarded imaginary part
/// relative to the peak of `|w|`. It is nonzero only through kernel entries
/// at separation `|y| = L` and through the Nyquist mode of the half-sample shift.
pub fn wigner_transform_with_residue(rho: &DensityState) -> Result<(WignerGrid, f64)> {
    if rho.grid.dim != 1 {
        return Err(Error::Unsupported("the Wigner transform is implemented for d = 1".into()));
    }
    let kernel = rho.kernel()?;
    super::check_hermitian(&kernel, 1e-12)?;
    let n = rho.grid.points;
    let h = rho.grid.spacing();
    let mut g = kernel_to_relative(&kernel);
    let fft = CenteredFft::new(n);
    g.par_chunks_mut(n).for_each(|row| fft.forward(row));
    let scale = h / (2.0 * PI);
    let peak = g.iter().map(|v| v.re.abs()).fold(0.0, f64::max);
    let residue = g.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
    let relative = if peak > 0.0 { residue / peak } else { residue };
    let w = WignerGrid::new(rho.grid, g.into_iter().map(|v| v.re * scale).collect())?;
    Ok((w, relative))
}

/// Kernel `rho(x + y/2, x - y/2) = int w(x, xi) e^{i xi y} dxi`, resampled to the grid.
pub fn inverse_wigner(w: &WignerGrid) -> Result<DensityState> {
    let n = w.points();
    let dxi = w.dxi();
    let fft = CenteredFft::new(n);
    let mut g: Vec<Complex64> = w.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    g.par_chunks_mut(n).for_each(|row| {
        fft.inverse(row);
        for v in row.iter_mut() {
            *v *= dxi * n as f64;
        }
    });
    let kernel = relative_to_kernel(&g, n);
    // Exact for band-limited w; otherwise removes the anti-Hermitian part
    // carried by the |y| = L column and the Nyquist mode of the half shift.
    let kernel = (&kernel + kernel.adjoint()) * Complex64::new(0.5, 0.0);
    DensityState::from_kernel(w.grid_x, kernel)
}
