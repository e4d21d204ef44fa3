//! Exactly solvable substeps of the phase-space equation on a one-dimensional
//! Wigner grid.
//!
//! Storage is `values[i * N + l] = w(x_i, xi_l)`; viewed as a column-major
//! `N x N` matrix this is `M[(l, i)]`, with contiguous `xi` lines.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{ensure_finite, Error, Result};
use crate::grid::{CenteredFft, SpatialGrid};
use crate::model::{DiffusionForm, ExternalPotential};
use crate::states::WignerGrid;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

fn check_line(w: &WignerGrid) -> Result<()> {
    if w.grid_x.dim != 1 {
        return Err(Error::Unsupported("the phase-space propagator is implemented for d = 1".into()));
    }
    Ok(())
}

/// Applies `f(i, line)` to every `x` line `w(., xi_l)`, in parallel.
fn for_each_x_line(values: &mut [f64], n: usize, f: impl Fn(usize, &mut [Complex64]) + Sync) {
    let mut cols: Vec<Complex64> = vec![ZERO; n * n];
    cols.par_chunks_mut(n).enumerate().for_each(|(l, col)| {
        for (i, c) in col.iter_mut().enumerate() {
            *c = Complex64::new(values[i * n + l], 0.0);
        }
        f(l, col);
    });
    values.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        for (l, v) in row.iter_mut().enumerate() {
            *v = cols[l * n + i].re;
        }
    });
}

/// Free streaming `d_t w + xi d_x w = 0`, exact: the `x` transform of each
/// `xi` line is multiplied by `exp(-i k xi dt)`.
#[derive(Clone)]
pub struct TransportStep {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    k: Vec<f64>,
    xi: Vec<f64>,
}

impl TransportStep {
    pub fn new(grid_x: &SpatialGrid, grid_xi: &SpatialGrid) -> Self {
        let n = grid_x.points;
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            k: grid_x.wavenumbers(),
            xi: grid_xi.coordinates(),
        }
    }

    pub fn apply(&self, values: &mut [f64], dt: f64) {
        let n = self.n;
        let scale = 1.0 / n as f64;
        for_each_x_line(values, n, |l, line| {
            self.forward.process(line);
            let shift = self.xi[l] * dt;
            for (c, k) in line.iter_mut().zip(&self.k) {
                *c *= Complex64::from_polar(scale, -k * shift);
            }
            self.inverse.process(line);
        });
    }
}

pub fn step_transport(w: &mut WignerGrid, dt: f64) -> Result<()> {
    check_line(w)?;
    TransportStep::new(&w.grid_x, &w.grid_xi).apply(&mut w.values, dt);
    Ok(())
}

/// Potential sampled at the `2N` half-grid points `z_k = -L + k h / 2`, periodically extended.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfGridPotential {
    pub values: Vec<f64>,
}

impl HalfGridPotential {
    pub fn zero(grid: &SpatialGrid) -> Self {
        Self { values: vec![0.0; 2 * grid.points] }
    }

    /// Confinement `x^2/2` and an analytic external potential, evaluated directly.
    /// Tabulated potentials are resampled to the grid and interpolated.
    pub fn from_model(grid: &SpatialGrid, confinement: bool, v1: &ExternalPotential) -> Result<Self> {
        let h = grid.spacing();
        let mut values: Vec<f64> = (0..2 * grid.points)
            .map(|k| {
                let z = -grid.half_width + k as f64 * h / 2.0;
                if confinement {
                    z * z / 2.0
                } else {
                    0.0
                }
            })
            .collect();
        match v1 {
            ExternalPotential::None => {}
            ExternalPotential::Tabulated { half_width, values: table } => {
                if table.len() != grid.points || (half_width - grid.half_width).abs() > 1e-12 * grid.half_width {
                    return Err(Error::GridMismatch(
                        "tabulated potential must be sampled on the simulation grid".into(),
                    ));
                }
                let fine = Self::interpolate(table)?;
                values.iter_mut().zip(&fine.values).for_each(|(v, f)| *v += f);
            }
            analytic => {
                for (k, v) in values.iter_mut().enumerate() {
                    let z = -grid.half_width + k as f64 * h / 2.0;
                    *v += analytic.analytic_value(&[z]).unwrap_or(0.0);
                }
            }
        }
        ensure_finite(&values, "potential")?;
        Ok(Self { values })
    }

    /// Grid values at even entries, trigonometric interpolation at the midpoints.
    pub fn interpolate(on_grid: &[f64]) -> Result<Self> {
        ensure_finite(on_grid, "potential")?;
        let n = on_grid.len();
        let mut planner = FftPlanner::new();
        let mut buf: Vec<Complex64> = on_grid.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        planner.plan_fft_forward(n).process(&mut buf);
        for (q, c) in buf.iter_mut().enumerate() {
            let s = if q < n / 2 { q as f64 } else { q as f64 - n as f64 };
            // The Nyquist mode is split symmetrically, so the result stays real.
            let phase = if q == n / 2 { Complex64::new((PI / 2.0).cos(), 0.0) } else { Complex64::from_polar(1.0, PI * s / n as f64) };
            *c *= phase / n as f64;
        }
        planner.plan_fft_inverse(n).process(&mut buf);
        let mut values = vec![0.0; 2 * n];
        for i in 0..n {
            values[2 * i] = on_grid[i];
            values[2 * i + 1] = buf[i].re;
        }
        Ok(Self { values })
    }

    pub fn add(&mut self, other: &[f64], scale: f64) {
        self.values.iter_mut().zip(other).for_each(|(v, o)| *v += scale * o);
    }
}

/// Phase table `exp(-i dt (V(x_i + y_m/2) - V(x_i - y_m/2)))` for the relative-coordinate samples.
#[derive(Debug, Clone)]
pub struct PotentialStep {
    n: usize,
    fft: CenteredFft,
    phases: Vec<Complex64>,
}

impl PotentialStep {
    pub fn new(potential: &HalfGridPotential, n: usize, dt: f64) -> Self {
        let two_n = 2 * n as isize;
        let half = (n / 2) as isize;
        let v = &potential.values;
        let phases = (0..n * n)
            .into_par_iter()
            .map(|idx| {
                let (i, j) = ((idx / n) as isize, (idx % n) as isize);
                let m = j - half;
                let plus = v[(2 * i + m).rem_euclid(two_n) as usize];
                let minus = v[(2 * i - m).rem_euclid(two_n) as usize];
                Complex64::from_polar(1.0, -dt * (plus - minus))
            })
            .collect();
        Self { n, fft: CenteredFft::new(n), phases }
    }

    /// `xi -> y`, multiply, `y -> xi`. The two transforms' constants cancel:
    /// `dxi N h / (2 pi) = 1`.
    pub fn apply(&self, values: &mut [f64]) {
        let n = self.n;
        values.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            let mut line: Vec<Complex64> = row.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            self.fft.inverse(&mut line);
            for (c, p) in line.iter_mut().zip(&self.phases[i * n..(i + 1) * n]) {
                *c *= p;
            }
            self.fft.forward(&mut line);
            for (r, c) in row.iter_mut().zip(&line) {
                *r = c.re;
            }
        });
    }
}

/// `d_t w + Theta[V] w = 0` over `dt` for a potential given on the `x` grid.
pub fn step_potential(w: &mut WignerGrid, v: &[f64], dt: f64) -> Result<()> {
    check_line(w)?;
    if v.len() != w.points() {
        return Err(Error::GridMismatch(format!("potential has {} samples, grid {}", v.len(), w.points())));
    }
    let fine = HalfGridPotential::interpolate(v)?;
    PotentialStep::new(&fine, w.points(), dt).apply(&mut w.values);
    Ok(())
}

/// Linear Fokker-Planck operator with exact Gaussian Green's function:
///
/// ```text
/// d_t w = a d_xi(xi w) + e d_x(x w) + Dpp d_xi^2 w + Dqq d_x^2 w + 2 Dpq d_x d_xi w
///         - drift_x d_xi w + drift_p d_x w
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticFlow {
    pub dpp: f64,
    pub dqq: f64,
    pub dpq: f64,
    /// `a`: relaxation rate of `xi`.
    pub friction: f64,
    /// `e`: relaxation rate of `x` (negative values dilate).
    pub dilation: f64,
    pub drift_x: f64,
    pub drift_p: f64,
}

impl QuadraticFlow {
    /// The template `Q` of a diffusion form: `a = 2 eta`, `e = 0`.
    pub fn from_diffusion(form: &DiffusionForm) -> Result<Self> {
        if form.dim() != 1 {
            return Err(Error::Unsupported("the phase-space propagator is implemented for d = 1".into()));
        }
        Ok(Self {
            dpp: form.dpp[(0, 0)],
            dqq: form.dqq[(0, 0)],
            dpq: form.dpq[(0, 0)],
            friction: 2.0 * form.eta,
            dilation: 0.0,
            drift_x: form.drift_x[0],
            drift_p: form.drift_p[0],
        })
    }

    pub fn is_zero(&self) -> bool {
        [self.dpp, self.dqq, self.dpq, self.friction, self.dilation, self.drift_x, self.drift_p]
            .iter()
            .all(|v| *v == 0.0)
    }
}

/// `int_0^t exp(-c s) ds`.
fn relaxed_time(c: f64, t: f64) -> f64 {
    if (c * t).abs() < 1e-8 {
        t * (1.0 - c * t / 2.0 + (c * t).powi(2) / 6.0)
    } else {
        -(-c * t).exp_m1() / c
    }
}

/// Real `N x N` matrix pushing samples at `u_l'` to `s u_l'` by band-limited interpolation.
fn rescale_matrix(n: usize, s: f64) -> DMatrix<f64> {
    let nf = n as f64;
    DMatrix::from_fn(n, n, |l, lp| {
        let u = 2.0 * PI / nf * ((l as f64 - nf / 2.0) - s * (lp as f64 - nf / 2.0));
        let den = (u / 2.0).sin();
        if den.abs() < 1e-12 {
            let sum: f64 = (0..n).map(|j| ((j as f64 - nf / 2.0) * u).cos()).sum();
            sum / nf
        } else {
            (u / 2.0).cos() * (nf * u / 2.0).sin() / den / nf
        }
    })
}

/// Cached exact step of a [`QuadraticFlow`] for one `dt`.
#[derive(Debug, Clone)]
pub struct DiffusionStep {
    n: usize,
    fft: CenteredFft,
    xi_rescale: Option<DMatrix<f64>>,
    x_rescale_t: Option<DMatrix<f64>>,
    /// Indexed `[m * N + j]` for `(k_m, theta_j)`.
    multiplier: Vec<Complex64>,
}

impl DiffusionStep {
    pub fn new(flow: &QuadraticFlow, grid_x: &SpatialGrid, dt: f64) -> Self {
        let n = grid_x.points;
        let h = grid_x.spacing();
        let a = flow.friction;
        let e = flow.dilation;
        let xi_rescale = (a != 0.0).then(|| rescale_matrix(n, (-a * dt).exp()));
        let x_rescale_t = (e != 0.0).then(|| rescale_matrix(n, (-e * dt).exp()).transpose());
        let (i2a, i2e, iae, ia, ie) = (
            relaxed_time(2.0 * a, dt),
            relaxed_time(2.0 * e, dt),
            relaxed_time(a + e, dt),
            relaxed_time(a, dt),
            relaxed_time(e, dt),
        );
        let dk = PI / grid_x.half_width;
        let multiplier = (0..n * n)
            .map(|idx| {
                let k = ((idx / n) as f64 - (n / 2) as f64) * dk;
                let th = ((idx % n) as f64 - (n / 2) as f64) * h;
                let re = -flow.dpp * th * th * i2a - flow.dqq * k * k * i2e - 2.0 * flow.dpq * k * th * iae;
                let im = -flow.drift_x * th * ia + flow.drift_p * k * ie;
                Complex64::new(re, im).exp()
            })
            .collect();
        Self { n, fft: CenteredFft::new(n), xi_rescale, x_rescale_t, multiplier }
    }

    pub fn apply(&self, values: &mut Vec<f64>) {
        let n = self.n;
        // Column-major view: m[(l, i)] = w(x_i, xi_l).
        let mut m = DMatrix::from_vec(n, n, std::mem::take(values));
        if let Some(s) = &self.xi_rescale {
            m = s * m;
        }
        if let Some(st) = &self.x_rescale_t {
            m *= st;
        }
        let data: Vec<f64> = m.data.into();
        // Transform along xi (contiguous), then along x.
        let mut buf: Vec<Complex64> = data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        buf.par_chunks_mut(n).for_each(|line| self.fft.forward(line));
        let mut t = transpose(&buf, n);
        t.par_chunks_mut(n).enumerate().for_each(|(j, line)| {
            self.fft.forward(line);
            for (m, c) in line.iter_mut().enumerate() {
                *c *= self.multiplier[m * n + j];
            }
            self.fft.inverse(line);
        });
        let mut buf = transpose(&t, n);
        buf.par_chunks_mut(n).for_each(|line| self.fft.inverse(line));
        *values = buf.into_iter().map(|c| c.re).collect();
    }
}

fn transpose(a: &[Complex64], n: usize) -> Vec<Complex64> {
    let mut out = vec![ZERO; n * n];
    out.par_chunks_mut(n).enumerate().for_each(|(r, row)| {
        for (c, v) in row.iter_mut().enumerate() {
            *v = a[c * n + r];
        }
    });
    out
}

/// `d_t w = Q w` over `dt` for a diffusion form (friction `2 eta` on `xi`).
pub fn step_diffusion(w: &mut WignerGrid, form: &DiffusionForm, dt: f64) -> Result<()> {
    check_line(w)?;
    if form.eta < 0.0 {
        return Err(Error::InvalidInput(format!("friction eta = {} must be >= 0", form.eta)));
    }
    let flow = QuadraticFlow::from_diffusion(form)?;
    DiffusionStep::new(&flow, &w.grid_x, dt).apply(&mut w.values);
    Ok(())
}
