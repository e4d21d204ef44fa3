//! Compactly supported mollifier and cutoff, and the regularized states
//! `sigma_n = chi_n (phi_n * rho * phi_n) chi_n` built from them.

use num_complex::Complex64;

use super::{DensityState, Representation};
use crate::error::{Error, Result};
use crate::grid::{fft_nd, SpatialGrid};

/// `exp(-1/t)` for `t > 0`, else 0.
fn smooth_step(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

/// Standard bump `exp(-1/(1 - |x|^2))` on the unit ball (unnormalized).
pub fn bump(r2: f64) -> f64 {
    if r2 < 1.0 {
        (-1.0 / (1.0 - r2)).exp()
    } else {
        0.0
    }
}

/// Radial cutoff profile: 1 on `r <= 1/2`, 0 on `r >= 1`, smooth in between.
pub fn cutoff(r: f64) -> f64 {
    let a = smooth_step(1.0 - r);
    let b = smooth_step(r - 0.5);
    if a + b == 0.0 {
        0.0
    } else {
        a / (a + b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MollifierPair {
    pub n: usize,
    pub grid: SpatialGrid,
    /// `n^d phi(n x)` normalized so that `sum phi_n h^d = 1`.
    pub phi_n: Vec<f64>,
    /// `chi(|x| / n)`.
    pub chi_n: Vec<f64>,
}

impl MollifierPair {
    pub fn new(grid: SpatialGrid, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("mollifier scale must be positive".into()));
        }
        if n as f64 > grid.half_width {
            return Err(Error::InvalidInput(format!(
                "cutoff radius {n} exceeds the grid half-width {}",
                grid.half_width
            )));
        }
        let nf = n as f64;
        let mut phi_n: Vec<f64> = (0..grid.len()).map(|idx| bump(grid.radius_squared(idx) * nf * nf)).collect();
        let total: f64 = phi_n.iter().sum::<f64>() * grid.cell_volume();
        phi_n.iter_mut().for_each(|v| *v /= total);
        let chi_n = (0..grid.len()).map(|idx| cutoff(grid.radius_squared(idx).sqrt() / nf)).collect();
        Ok(Self { n, grid, phi_n, chi_n })
    }

    /// Transfer function of `f -> phi_n * f` in FFT order.
    fn multiplier(&self) -> Vec<Complex64> {
        transfer_function(&self.grid, &self.phi_n)
    }
}

/// FFT of a centred kernel, moved so that its origin sits at index 0, times `h^d`.
fn transfer_function(grid: &SpatialGrid, kernel: &[f64]) -> Vec<Complex64> {
    let n = grid.points;
    let mut buf = vec![Complex64::new(0.0, 0.0); grid.len()];
    for (idx, v) in kernel.iter().enumerate() {
        let m = grid.unravel(idx);
        let mut target = 0;
        for axis in 0..grid.dim {
            target = target * n + (m[axis] + n / 2) % n;
        }
        buf[target] = Complex64::new(v * grid.cell_volume(), 0.0);
    }
    fft_nd(&mut buf, &grid.dims(), false);
    buf
}

/// The regularized state with ranks `(lambda_j, chi_n (phi_n * psi_j))`.
pub fn mollify_truncate(rho: &DensityState, n: usize) -> Result<DensityState> {
    let pair = MollifierPair::new(rho.grid, n)?;
    let state = rho.to_rank_form()?;
    let Representation::Ranks(ranks) = &state.repr else { unreachable!() };
    let multiplier = pair.multiplier();
    let dims = rho.grid.dims();
    let inv_len = 1.0 / rho.grid.len() as f64;
    let terms = ranks
        .iter()
        .map(|t| {
            let mut buf = t.psi.clone();
            fft_nd(&mut buf, &dims, false);
            buf.iter_mut().zip(&multiplier).for_each(|(v, m)| *v *= m);
            fft_nd(&mut buf, &dims, true);
            buf.iter_mut().zip(&pair.chi_n).for_each(|(v, c)| *v *= c * inv_len);
            (t.weight, buf)
        })
        .collect();
    DensityState::from_ranks(rho.grid, terms)
}

/// Operator norm on the grid of convolution by `x_1 phi_n`: the largest modulus of its transfer function.
pub fn convolution_operator_norm(grid: SpatialGrid, n: usize) -> Result<f64> {
    let pair = MollifierPair::new(grid, n)?;
    let weighted: Vec<f64> =
        pair.phi_n.iter().enumerate().map(|(idx, v)| v * grid.position(idx)[0]).collect();
    Ok(transfer_function(&grid, &weighted).iter().map(|v| v.norm()).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mollifier_pair_properties() {
        let grid = SpatialGrid::line(512, 4.0).unwrap();
        for n in [1usize, 2, 4] {
            let p = MollifierPair::new(grid, n).unwrap();
            let total: f64 = p.phi_n.iter().sum::<f64>() * grid.spacing();
            assert!((total - 1.0).abs() < 1e-10);
            assert!(p.phi_n.iter().all(|&v| v >= 0.0));
            // Even: phi(x_i) = phi(-x_i) with x_{N/2 + k} = -x_{N/2 - k}.
            for k in 1..256 {
                assert_eq!(p.phi_n[256 + k], p.phi_n[256 - k]);
            }
            for (x, c) in grid.coordinates().iter().zip(&p.chi_n) {
                assert!((0.0..=1.0).contains(c));
                if x.abs() <= n as f64 / 2.0 {
                    assert_eq!(*c, 1.0);
                }
                if x.abs() >= n as f64 {
                    assert_eq!(*c, 0.0);
                }
            }
        }
    }

    #[test]
    fn scale_beyond_grid_is_rejected() {
        let grid = SpatialGrid::line(64, 4.0).unwrap();
        assert!(MollifierPair::new(grid, 5).is_err());
        assert!(MollifierPair::new(grid, 0).is_err());
    }
}
