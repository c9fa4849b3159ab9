#![allow(dead_code)]

use std::sync::Arc;

use num_complex::Complex64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cyqw::field::Field3D;
use cyqw::grid::{Grid1D, Grid2D};
use cyqw::potential::{build_potential, PotentialSpec};
use cyqw::spectrum::{solve_eigs, EigenBasis};

pub fn basis_for(spec: &PotentialSpec, lz: f64, nz: usize, count: usize) -> Arc<EigenBasis> {
    let g = Grid1D::new(lz, nz).unwrap();
    let v = build_potential(spec, &g).unwrap();
    Arc::new(solve_eigs(&v.values, spec.b, &g, count).unwrap())
}

pub fn harmonic(a: f64, b: f64, lz: f64, nz: usize, count: usize) -> Arc<EigenBasis> {
    basis_for(&PotentialSpec::harmonic(a, b), lz, nz, count)
}

/// `exp(-|x - c|^2 / (2 s^2)) e^{i k.x}` on the plane.
pub fn plane_gaussian(plane: &Grid2D, c: (f64, f64), s: f64, k: (f64, f64)) -> Vec<Complex64> {
    let mut g = Vec::with_capacity(plane.len());
    for i in 0..plane.nx() {
        let x = plane.x(i);
        for j in 0..plane.ny() {
            let y = plane.y(j);
            let r2 = (x - c.0).powi(2) + (y - c.1).powi(2);
            g.push(Complex64::from_polar((-r2 / (2.0 * s * s)).exp(), k.0 * x + k.1 * y));
        }
    }
    g
}

pub fn separable(plane: &Grid2D, basis: &EigenBasis, g: &[Complex64], h: &[f64]) -> Field3D {
    Field3D::separable(plane, basis.grid(), g, h).unwrap()
}

/// Mode-`p` field `g(x, y) chi_p(z)`.
pub fn mode_field(plane: &Grid2D, basis: &EigenBasis, g: &[Complex64], p: usize) -> Field3D {
    separable(plane, basis, g, basis.chi(p))
}

/// Seeded uniform stream in `[-1, 1)`.
pub struct Noise(ChaCha8Rng);

impl Noise {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn next(&mut self) -> f64 {
        self.0.random_range(-1.0..1.0)
    }

    pub fn complex(&mut self) -> Complex64 {
        Complex64::new(self.next(), self.next())
    }
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}
