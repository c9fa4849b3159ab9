//! Reduced state `{phi_p(x, y)}` of the limit system.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{project_modes, synth_modes, Field3D, Repr, TailReport, XySpace};
use crate::fourier::Fft2;
use crate::grid::Grid2D;
use crate::spectrum::EigenBasis;

/// `P` complex planes in physical (x, y) space, one per confinement mode.
#[derive(Debug, Clone)]
pub struct ModeSet {
    plane: Grid2D,
    basis: Arc<EigenBasis>,
    pub t: f64,
    modes: Vec<Vec<Complex64>>,
}

impl ModeSet {
    pub fn zeros(plane: &Grid2D, basis: &Arc<EigenBasis>) -> Self {
        Self {
            plane: plane.clone(),
            basis: basis.clone(),
            t: 0.0,
            modes: vec![vec![Complex64::default(); plane.len()]; basis.len()],
        }
    }

    pub fn from_modes(plane: &Grid2D, basis: &Arc<EigenBasis>, modes: Vec<Vec<Complex64>>) -> Result<Self> {
        if modes.len() != basis.len() || modes.iter().any(|m| m.len() != plane.len()) {
            return Err(Error::SizeMismatch(format!(
                "expected {} planes of {} points",
                basis.len(),
                plane.len()
            )));
        }
        Ok(Self {
            plane: plane.clone(),
            basis: basis.clone(),
            t: 0.0,
            modes,
        })
    }

    /// `phi_p = <f chi_p>` from a grid-z field in physical space.
    pub fn from_field(f: &Field3D, basis: &Arc<EigenBasis>) -> Result<(Self, TailReport)> {
        if f.space() != XySpace::Physical {
            return Err(Error::SizeMismatch("initial field must be in physical space".into()));
        }
        let (m, tail) = project_modes(f, basis)?;
        let p_count = basis.len();
        let mut modes = vec![vec![Complex64::default(); f.plane().len()]; p_count];
        for (idx, col) in m.data().chunks_exact(p_count).enumerate() {
            for (p, c) in col.iter().enumerate() {
                modes[p][idx] = *c;
            }
        }
        Ok((
            Self {
                plane: f.plane().clone(),
                basis: basis.clone(),
                t: 0.0,
                modes,
            },
            tail,
        ))
    }

    /// Mode-z field holding the same coefficients.
    pub fn to_mode_field(&self) -> Result<Field3D> {
        let p_count = self.len();
        let mut data = vec![Complex64::default(); self.plane.len() * p_count];
        for (p, m) in self.modes.iter().enumerate() {
            for (idx, v) in m.iter().enumerate() {
                data[idx * p_count + p] = *v;
            }
        }
        Field3D::from_parts(
            Repr::ModeZ,
            XySpace::Physical,
            self.plane.clone(),
            self.basis.grid().clone(),
            Some(self.basis.clone()),
            data,
        )
    }

    /// `Phi = sum_p phi_p chi_p` on the z grid.
    pub fn to_grid_field(&self) -> Result<Field3D> {
        synth_modes(&self.to_mode_field()?)
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }
    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }
    pub fn plane(&self) -> &Grid2D {
        &self.plane
    }
    pub fn basis(&self) -> &Arc<EigenBasis> {
        &self.basis
    }
    pub fn mode(&self, p: usize) -> &[Complex64] {
        &self.modes[p]
    }
    pub fn mode_mut(&mut self, p: usize) -> &mut [Complex64] {
        &mut self.modes[p]
    }
    pub fn modes(&self) -> &[Vec<Complex64>] {
        &self.modes
    }
    pub fn modes_mut(&mut self) -> &mut [Vec<Complex64>] {
        &mut self.modes
    }

    /// `mu_p = ||phi_p||^2`.
    pub fn masses(&self) -> Vec<f64> {
        let w = self.plane.area_element();
        self.modes
            .iter()
            .map(|m| m.iter().map(|v| v.norm_sqr()).sum::<f64>() * w)
            .collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.masses().iter().sum()
    }

    /// `sum_p |phi_p|^2` on the plane.
    pub fn density(&self) -> Vec<f64> {
        let mut rho = vec![0.0; self.plane.len()];
        for m in &self.modes {
            for (r, v) in rho.iter_mut().zip(m) {
                *r += v.norm_sqr();
            }
        }
        rho
    }

    pub fn check_finite(&self) -> Result<()> {
        for (p, m) in self.modes.iter().enumerate() {
            if let Some(i) = m.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
                return Err(Error::NonFinite {
                    index: p * self.plane.len() + i,
                });
            }
        }
        Ok(())
    }

    /// Apply a Fourier multiplier `symbol(p, idx)` to every mode.
    pub fn map_spectral<F>(&self, fft: &Fft2, symbol: F) -> ModeSet
    where
        F: Fn(usize, usize) -> Complex64,
    {
        let mut out = self.clone();
        for (p, m) in out.modes.iter_mut().enumerate() {
            fft.forward(m, 1);
            for (idx, v) in m.iter_mut().enumerate() {
                *v *= symbol(p, idx);
            }
            fft.inverse(m, 1);
        }
        out
    }
}
