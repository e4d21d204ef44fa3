//! Oscillator eigenfunctions and the standard initial states built from them.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::DensityState;
use crate::error::{Error, Result};
use crate::grid::SpatialGrid;

/// Normalized Hermite functions `h_0 .. h_{levels-1}` at the points `x`, by the
/// stable three-term recurrence.
pub fn hermite_functions(levels: usize, x: &[f64]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(levels);
    if levels == 0 {
        return out;
    }
    let pi_quarter = std::f64::consts::PI.powf(-0.25);
    out.push(x.iter().map(|v| pi_quarter * (-v * v / 2.0).exp()).collect());
    for n in 0..levels.saturating_sub(1) {
        let a = (2.0 / (n + 1) as f64).sqrt();
        let b = (n as f64 / (n + 1) as f64).sqrt();
        let next: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let prev = if n == 0 { 0.0 } else { out[n - 1][i] };
                a * v * out[n][i] - b * prev
            })
            .collect();
        out.push(next);
    }
    out
}

fn complexify(v: &[f64]) -> Vec<Complex64> {
    v.iter().map(|&r| Complex64::new(r, 0.0)).collect()
}

fn require_line(grid: &SpatialGrid, what: &str) -> Result<()> {
    if grid.dim != 1 {
        return Err(Error::Unsupported(format!("{what} is implemented for d = 1")));
    }
    Ok(())
}

/// Oscillator ground state `pi^{-d/4} exp(-|x|^2/2)` in any dimension.
pub fn ground_state(grid: SpatialGrid) -> Result<DensityState> {
    let c = std::f64::consts::PI.powf(-(grid.dim as f64) / 4.0);
    let psi = (0..grid.len())
        .map(|idx| Complex64::new(c * (-grid.radius_squared(idx) / 2.0).exp(), 0.0))
        .collect();
    DensityState::pure(grid, psi)
}

/// Gaussian packet `exp(-(x - x0)^2 / (2 sigma^2) + i p0 x)`; `sigma = 1` is a coherent state.
pub fn gaussian_packet(grid: SpatialGrid, x0: f64, p0: f64, sigma: f64) -> Result<DensityState> {
    require_line(&grid, "the Gaussian packet")?;
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidInput(format!("packet width must be > 0, got {sigma}")));
    }
    let psi = grid
        .coordinates()
        .iter()
        .map(|&x| Complex64::from_polar((-(x - x0).powi(2) / (2.0 * sigma * sigma)).exp(), p0 * x))
        .collect();
    DensityState::pure(grid, psi)
}

/// `sum_n w_n |h_n><h_n|`; weights must be non-negative.
pub fn fock_mixture(grid: SpatialGrid, weights: &[f64]) -> Result<DensityState> {
    require_line(&grid, "the Fock mixture")?;
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidInput("Fock weights must be finite and >= 0".into()));
    }
    let h = hermite_functions(weights.len(), &grid.coordinates());
    let terms = weights.iter().zip(&h).filter(|(w, _)| **w > 0.0).map(|(&w, f)| (w, complexify(f))).collect();
    DensityState::from_ranks(grid, terms)
}

/// Pure state `sum_n c_n h_n`, normalized.
pub fn superposition(grid: SpatialGrid, amplitudes: &[Complex64]) -> Result<DensityState> {
    require_line(&grid, "the Fock superposition")?;
    let norm: f64 = amplitudes.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if !(norm.is_finite() && norm > 0.0) {
        return Err(Error::InvalidInput("superposition amplitudes must be finite and not all zero".into()));
    }
    let h = hermite_functions(amplitudes.len(), &grid.coordinates());
    let mut psi = vec![Complex64::new(0.0, 0.0); grid.len()];
    for (c, f) in amplitudes.iter().zip(&h) {
        for (p, v) in psi.iter_mut().zip(f) {
            *p += c / norm * v;
        }
    }
    DensityState::pure(grid, psi)
}

/// Random mixed state of the given rank supported on the first `levels`
/// oscillator levels. Also returns its matrix in that Fock basis.
pub fn random_mixed(
    grid: SpatialGrid,
    rank: usize,
    levels: usize,
    seed: u64,
) -> Result<(DensityState, DMatrix<Complex64>)> {
    require_line(&grid, "the random state")?;
    if rank == 0 || rank > levels {
        return Err(Error::InvalidInput(format!("need 1 <= rank <= levels, got rank {rank}, levels {levels}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(rank);
    while basis.len() < rank {
        let mut v: Vec<Complex64> =
            (0..levels).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        for b in &basis {
            let p: Complex64 = b.iter().zip(&v).map(|(x, y)| x.conj() * y).sum();
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi -= p * bi;
            }
        }
        let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|c| *c /= norm);
            basis.push(v);
        }
    }
    let raw: Vec<f64> = (0..rank).map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();

    let mut fock = DMatrix::from_element(levels, levels, Complex64::new(0.0, 0.0));
    for (w, v) in weights.iter().zip(&basis) {
        for a in 0..levels {
            for b in 0..levels {
                fock[(a, b)] += v[a] * v[b].conj() * *w;
            }
        }
    }
    let h = hermite_functions(levels, &grid.coordinates());
    let terms = weights
        .iter()
        .zip(&basis)
        .map(|(&w, v)| {
            let mut psi = vec![Complex64::new(0.0, 0.0); grid.len()];
            for (c, f) in v.iter().zip(&h) {
                for (p, x) in psi.iter_mut().zip(f) {
                    *p += c * x;
                }
            }
            (w, psi)
        })
        .collect();
    Ok((DensityState::from_ranks(grid, terms)?, fock))
}

/// Matrix `<h_a| rho |h_b>` of a one-dimensional state in the first `levels` oscillator levels.
pub fn hermite_projection(rho: &DensityState, levels: usize) -> Result<DMatrix<Complex64>> {
    require_line(&rho.grid, "the Hermite projection")?;
    let state = rho.to_rank_form()?;
    let h = hermite_functions(levels, &rho.grid.coordinates());
    let dx = rho.grid.spacing();
    let mut out = DMatrix::from_element(levels, levels, Complex64::new(0.0, 0.0));
    for t in state.ranks() {
        let c: Vec<Complex64> =
            h.iter().map(|f| f.iter().zip(&t.psi).map(|(a, p)| p * *a).sum::<Complex64>() * dx).collect();
        for a in 0..levels {
            for b in 0..levels {
                out[(a, b)] += c[a] * c[b].conj() * t.weight;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_functions_are_orthonormal_on_a_fine_grid() {
        let grid = SpatialGrid::line(256, 12.0).unwrap();
        let h = hermite_functions(12, &grid.coordinates());
        let dx = grid.spacing();
        for a in 0..12 {
            for b in 0..12 {
                let ip: f64 = h[a].iter().zip(&h[b]).map(|(u, v)| u * v).sum::<f64>() * dx;
                let expected = if a == b { 1.0 } else { 0.0 };
                assert!((ip - expected).abs() < 1e-12, "{a} {b} {ip}");
            }
        }
    }

    #[test]
    fn hermite_one_matches_closed_form() {
        let x = [0.3, -1.2];
        let h = hermite_functions(2, &x);
        for (i, &v) in x.iter().enumerate() {
            let exact = std::f64::consts::SQRT_2 * std::f64::consts::PI.powf(-0.25) * v * (-v * v / 2.0).exp();
            assert!((h[1][i] - exact).abs() < 1e-15);
        }
    }

    #[test]
    fn random_state_projection_recovers_fock_matrix() {
        let grid = SpatialGrid::line(128, 10.0).unwrap();
        let (rho, fock) = random_mixed(grid, 3, 6, 7).unwrap();
        let proj = hermite_projection(&rho, 6).unwrap();
        assert!((proj - &fock).camax() < 1e-10);
        assert!((fock.trace().re - 1.0).abs() < 1e-14);
    }

    #[test]
    fn coherent_packet_has_poisson_occupations() {
        let grid = SpatialGrid::line(128, 10.0).unwrap();
        let rho = gaussian_packet(grid, 1.0, 0.5, 1.0).unwrap();
        let proj = hermite_projection(&rho, 20).unwrap();
        let z2: f64 = (1.0 + 0.25) / 2.0;
        assert!((rho.trace() - 1.0).abs() < 1e-15);
        let mut fact = 1.0;
        for n in 0..6 {
            if n > 0 {
                fact *= n as f64;
            }
            let expected = (-z2).exp() * z2.powi(n as i32) / fact;
            assert!((proj[(n, n)].re - expected).abs() < 1e-10);
        }
    }
}
