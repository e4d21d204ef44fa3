//! Uniform periodic grids and the FFT plumbing shared by every module.
//!
//! Coordinates are centred: on an axis with `n` points and half-width `L`,
//! point `i` sits at `x_i = (i - n/2) h` with `h = 2L / n`, so the origin is
//! always a grid point. `n` must be even.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Isotropic tensor grid on `[-L, L)^d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialGrid {
    pub dim: usize,
    pub points: usize,
    pub half_width: f64,
}

impl SpatialGrid {
    pub fn new(dim: usize, points: usize, half_width: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidInput(format!("dimension {dim} not in 1..=3")));
        }
        if points < 4 || points % 2 != 0 {
            return Err(Error::InvalidInput(format!(
                "points per axis must be even and >= 4, got {points}"
            )));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::InvalidInput(format!("half-width must be > 0, got {half_width}")));
        }
        Ok(Self { dim, points, half_width })
    }

    pub fn line(points: usize, half_width: f64) -> Result<Self> {
        Self::new(1, points, half_width)
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.points as f64
    }

    /// Volume element `h^d`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn coordinate(&self, i: usize) -> f64 {
        (i as f64 - (self.points / 2) as f64) * self.spacing()
    }

    pub fn coordinates(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.coordinate(i)).collect()
    }

    /// Multi-index of flat position `idx` (row-major, last axis fastest).
    pub fn unravel(&self, mut idx: usize) -> [usize; 3] {
        let mut out = [0usize; 3];
        for axis in (0..self.dim).rev() {
            out[axis] = idx % self.points;
            idx /= self.points;
        }
        out
    }

    /// Cartesian position of flat index `idx`; unused axes are zero.
    pub fn position(&self, idx: usize) -> [f64; 3] {
        let m = self.unravel(idx);
        let mut x = [0.0; 3];
        for axis in 0..self.dim {
            x[axis] = self.coordinate(m[axis]);
        }
        x
    }

    pub fn radius_squared(&self, idx: usize) -> f64 {
        self.position(idx).iter().map(|v| v * v).sum()
    }

    /// Angular wavenumbers in FFT (uncentred) order.
    pub fn wavenumbers(&self) -> Vec<f64> {
        fft_wavenumbers(self.points, self.spacing())
    }

    pub fn dims(&self) -> Vec<usize> {
        vec![self.points; self.dim]
    }
}

/// Wavenumbers `2 pi j / (n h)` in standard FFT order; the Nyquist entry is negative.
pub fn fft_wavenumbers(n: usize, h: f64) -> Vec<f64> {
    let base = 2.0 * PI / (n as f64 * h);
    (0..n)
        .map(|j| {
            let s = if j < n / 2 { j as isize } else { j as isize - n as isize };
            s as f64 * base
        })
        .collect()
}

/// DFT between centred coordinate and centred frequency indices:
/// `F_m = sum_j f_j exp(-2 pi i (j - n/2)(m - n/2) / n)`.
#[derive(Clone)]
pub struct CenteredFft {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    global_sign: f64,
}

impl std::fmt::Debug for CenteredFft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CenteredFft").field("n", &self.n).finish()
    }
}

impl CenteredFft {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            global_sign: if (n / 2) % 2 == 0 { 1.0 } else { -1.0 },
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn alternate(&self, buf: &mut [Complex64], extra: f64) {
        for (j, v) in buf.iter_mut().enumerate() {
            let s = if j % 2 == 0 { extra } else { -extra };
            *v *= s;
        }
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.alternate(buf, 1.0);
        self.forward.process(buf);
        self.alternate(buf, self.global_sign);
    }

    /// Inverse transform including the `1/n` factor.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.alternate(buf, 1.0);
        self.inverse.process(buf);
        self.alternate(buf, self.global_sign / self.n as f64);
    }
}

/// Plain (uncentred) FFT along one axis of a row-major array. The inverse
/// direction is unnormalised.
pub fn fft_along_axis(data: &mut [Complex64], dims: &[usize], axis: usize, plan: &Arc<dyn Fft<f64>>) {
    let n = dims[axis];
    let stride: usize = dims[axis + 1..].iter().product();
    let block = n * stride;
    if stride == 1 {
        data.par_chunks_mut(n).for_each(|line| plan.process(line));
        return;
    }
    data.par_chunks_mut(block).for_each(|chunk| {
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        for offset in 0..stride {
            for (k, v) in line.iter_mut().enumerate() {
                *v = chunk[offset + k * stride];
            }
            plan.process(&mut line);
            for (k, v) in line.iter().enumerate() {
                chunk[offset + k * stride] = *v;
            }
        }
    });
}

/// Full d-dimensional FFT (forward, or unnormalised inverse).
pub fn fft_nd(data: &mut [Complex64], dims: &[usize], inverse: bool) {
    let mut planner = FftPlanner::new();
    for axis in 0..dims.len() {
        let plan = if inverse {
            planner.plan_fft_inverse(dims[axis])
        } else {
            planner.plan_fft_forward(dims[axis])
        };
        fft_along_axis(data, dims, axis, &plan);
    }
}

/// Squared-gradient norm `h^d sum |grad f|^2` of a periodic grid function, via Parseval.
pub fn spectral_gradient_norm_sq(grid: &SpatialGrid, f: &[Complex64]) -> f64 {
    let mut buf = f.to_vec();
    let dims = grid.dims();
    fft_nd(&mut buf, &dims, false);
    let k = grid.wavenumbers();
    let mut acc = 0.0;
    for (idx, v) in buf.iter().enumerate() {
        let m = grid.unravel(idx);
        let k2: f64 = (0..grid.dim).map(|a| k[m[a]] * k[m[a]]).sum();
        acc += k2 * v.norm_sqr();
    }
    acc * grid.cell_volume() / grid.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centred_fft_matches_direct_sum() {
        for n in [6usize, 8] {
            let fft = CenteredFft::new(n);
            let data: Vec<Complex64> =
                (0..n).map(|j| Complex64::new(j as f64 * 0.3 - 1.0, (j * j) as f64 * 0.1)).collect();
            let mut buf = data.clone();
            fft.forward(&mut buf);
            for m in 0..n {
                let mut direct = Complex64::new(0.0, 0.0);
                for (j, v) in data.iter().enumerate() {
                    let phase = -2.0 * PI * (j as f64 - (n / 2) as f64) * (m as f64 - (n / 2) as f64)
                        / n as f64;
                    direct += v * Complex64::from_polar(1.0, phase);
                }
                assert!((direct - buf[m]).norm() < 1e-12);
            }
            fft.inverse(&mut buf);
            for (a, b) in buf.iter().zip(&data) {
                assert!((a - b).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn origin_is_a_grid_point() {
        let g = SpatialGrid::line(16, 4.0).unwrap();
        assert_eq!(g.coordinate(8), 0.0);
        assert_eq!(g.coordinate(0), -4.0);
    }

    #[test]
    fn rejects_odd_points() {
        assert!(SpatialGrid::line(15, 1.0).is_err());
        assert!(SpatialGrid::new(4, 16, 1.0).is_err());
    }
}
