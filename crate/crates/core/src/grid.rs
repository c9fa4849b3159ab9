//! Uniform grids for the confinement line and the periodic transport plane.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Uniform grid on `[-L, L)` with `n` points and spacing `2L/n`.
///
/// Index 0 sits on the Dirichlet wall `z = -L`; the unknowns of the
/// confinement problem live on the interior indices `1..n`, which are
/// mirror-symmetric about `n/2` (`z = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D {
    half_length: f64,
    n: usize,
    dz: f64,
    points: Vec<f64>,
}

impl Grid1D {
    pub fn new(half_length: f64, n: usize) -> Result<Self> {
        if !(half_length.is_finite() && half_length > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "half length must be positive, got {half_length}"
            )));
        }
        if n < 8 || n % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "z point count must be even and >= 8, got {n}"
            )));
        }
        let dz = 2.0 * half_length / n as f64;
        let mid = (n / 2) as i64;
        // integer offsets keep z_{n-j} = -z_j bit-exact
        let points = (0..n).map(|j| (j as i64 - mid) as f64 * dz).collect();
        Ok(Self {
            half_length,
            n,
            dz,
            points,
        })
    }

    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dz(&self) -> f64 {
        self.dz
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Index of the mirror point `-z_j`; `None` for the wall node.
    pub fn mirror(&self, j: usize) -> Option<usize> {
        if j == 0 || j >= self.n {
            None
        } else {
            Some(self.n - j)
        }
    }

    /// Number of interior unknowns (`n - 1`).
    pub fn interior_len(&self) -> usize {
        self.n - 1
    }
}

/// Periodic box `[-Lx/2, Lx/2) x [-Ly/2, Ly/2)` with power-of-two sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2D {
    lx: f64,
    ly: f64,
    nx: usize,
    ny: usize,
    xi: Vec<f64>,
    eta: Vec<f64>,
}

/// Periodic Fourier duals `2 pi k / L` with the negative-frequency wrap.
pub fn wavenumbers(n: usize, length: f64) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let kk = if k < n.div_ceil(2) { k as i64 } else { k as i64 - n as i64 };
            2.0 * PI * kk as f64 / length
        })
        .collect()
}

impl Grid2D {
    pub fn new(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self> {
        for (name, l) in [("lx", lx), ("ly", ly)] {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::InvalidGrid(format!("{name} must be positive, got {l}")));
            }
        }
        for (name, n) in [("nx", nx), ("ny", ny)] {
            if n < 2 || !n.is_power_of_two() {
                return Err(Error::InvalidGrid(format!(
                    "{name} must be a power of two >= 2, got {n}"
                )));
            }
        }
        Ok(Self {
            lx,
            ly,
            nx,
            ny,
            xi: wavenumbers(nx, lx),
            eta: wavenumbers(ny, ly),
        })
    }

    pub fn lx(&self) -> f64 {
        self.lx
    }
    pub fn ly(&self) -> f64 {
        self.ly
    }
    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn dx(&self) -> f64 {
        self.lx / self.nx as f64
    }
    pub fn dy(&self) -> f64 {
        self.ly / self.ny as f64
    }
    /// Area element `dx dy`.
    pub fn area_element(&self) -> f64 {
        self.dx() * self.dy()
    }
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn xi(&self) -> &[f64] {
        &self.xi
    }
    pub fn eta(&self) -> &[f64] {
        &self.eta
    }
    pub fn x(&self, i: usize) -> f64 {
        -0.5 * self.lx + i as f64 * self.dx()
    }
    pub fn y(&self, j: usize) -> f64 {
        -0.5 * self.ly + j as f64 * self.dy()
    }
    /// `|k|^2 = xi_k^2 + eta_l^2` for flat index `k * ny + l`.
    pub fn k2(&self, idx: usize) -> f64 {
        let (k, l) = (idx / self.ny, idx % self.ny);
        self.xi[k] * self.xi[k] + self.eta[l] * self.eta[l]
    }

    /// Returns true when flat index `idx` lies within `cells` of the box edge.
    pub fn near_boundary(&self, idx: usize, cells: usize) -> bool {
        let (i, j) = (idx / self.ny, idx % self.ny);
        i < cells || j < cells || i + cells >= self.nx || j + cells >= self.ny
    }

    /// Fraction of `density` (sampled on the grid) carried within `cells` of the edge.
    pub fn boundary_fraction(&self, density: &[f64], cells: usize) -> f64 {
        let total: f64 = density.iter().sum();
        if total <= 0.0 {
            return 0.0;
        }
        let edge: f64 = density
            .iter()
            .enumerate()
            .filter(|(i, _)| self.near_boundary(*i, cells))
            .map(|(_, d)| d)
            .sum();
        edge / total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn z_grid_is_mirror_symmetric() {
        let g = Grid1D::new(12.0, 2048).unwrap();
        assert_eq!(g.points()[0], -12.0);
        for j in 1..g.len() {
            let m = g.mirror(j).unwrap();
            assert!((g.points()[m] + g.points()[j]).abs() <= 1e-12 * 12.0);
        }
        assert_eq!(g.points()[1024], 0.0);
        assert!(g.mirror(0).is_none());
    }

    #[test]
    fn rejects_odd_or_tiny_z_grids() {
        assert!(Grid1D::new(1.0, 7).is_err());
        assert!(Grid1D::new(1.0, 4).is_err());
        assert!(Grid1D::new(-1.0, 16).is_err());
    }

    #[test]
    fn wavenumbers_wrap() {
        let k = wavenumbers(8, 2.0 * PI);
        assert_eq!(k, vec![0.0, 1.0, 2.0, 3.0, -4.0, -3.0, -2.0, -1.0]);
    }

    #[test]
    fn rejects_non_power_of_two() {
        assert!(Grid2D::new(1.0, 1.0, 48, 64).is_err());
        assert!(Grid2D::new(1.0, 1.0, 64, 64).is_ok());
    }
}
