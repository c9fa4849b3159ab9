//! Complex fields on the (x, y) plane times the confinement direction.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fourier::Fft2;
use crate::grid::{Grid1D, Grid2D};
use crate::spectrum::EigenBasis;

/// What the fastest index of a [`Field3D`] stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Repr {
    /// samples `z_j` on the full z grid
    GridZ,
    /// coefficients on the eigenmodes `chi_p`
    ModeZ,
}

/// Whether the (x, y) indices are physical positions or wavevectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XySpace {
    Physical,
    Fourier,
}

#[derive(Debug, Clone)]
pub struct Field3D {
    repr: Repr,
    space: XySpace,
    plane: Grid2D,
    zgrid: Grid1D,
    basis: Option<Arc<EigenBasis>>,
    data: Vec<Complex64>,
}

/// Mass outside `span{chi_0..chi_{P-1}}` after a projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailReport {
    pub total: f64,
    pub captured: f64,
    /// `(total - captured) / total`, 0 for the zero field
    pub fraction: f64,
    pub warn: bool,
}

/// Relative tail mass above which projections raise the warn flag.
pub const TAIL_WARN: f64 = 1e-6;

impl Field3D {
    pub fn zeros_grid(plane: &Grid2D, zgrid: &Grid1D) -> Self {
        Self {
            repr: Repr::GridZ,
            space: XySpace::Physical,
            plane: plane.clone(),
            zgrid: zgrid.clone(),
            basis: None,
            data: vec![Complex64::default(); plane.len() * zgrid.len()],
        }
    }

    pub fn zeros_modes(plane: &Grid2D, basis: &Arc<EigenBasis>) -> Self {
        Self {
            repr: Repr::ModeZ,
            space: XySpace::Physical,
            plane: plane.clone(),
            zgrid: basis.grid().clone(),
            basis: Some(basis.clone()),
            data: vec![Complex64::default(); plane.len() * basis.len()],
        }
    }

    /// Samples `f(x, y, z)`; the Dirichlet wall sample `z_0` is forced to 0.
    pub fn from_fn<F>(plane: &Grid2D, zgrid: &Grid1D, f: F) -> Self
    where
        F: Fn(f64, f64, f64) -> Complex64,
    {
        let mut out = Self::zeros_grid(plane, zgrid);
        let nz = zgrid.len();
        for i in 0..plane.nx() {
            let x = plane.x(i);
            for j in 0..plane.ny() {
                let y = plane.y(j);
                let base = (i * plane.ny() + j) * nz;
                for (k, z) in zgrid.points().iter().enumerate().skip(1) {
                    out.data[base + k] = f(x, y, *z);
                }
            }
        }
        out
    }

    /// Separable field `g(x, y) h(z)` with `g` given on the plane grid.
    pub fn separable(plane: &Grid2D, zgrid: &Grid1D, g: &[Complex64], h: &[f64]) -> Result<Self> {
        if g.len() != plane.len() || h.len() != zgrid.len() {
            return Err(Error::SizeMismatch("separable factors do not match grids".into()));
        }
        let mut out = Self::zeros_grid(plane, zgrid);
        let nz = zgrid.len();
        for (idx, gv) in g.iter().enumerate() {
            for k in 1..nz {
                out.data[idx * nz + k] = gv * h[k];
            }
        }
        Ok(out)
    }

    pub fn from_parts(
        repr: Repr,
        space: XySpace,
        plane: Grid2D,
        zgrid: Grid1D,
        basis: Option<Arc<EigenBasis>>,
        data: Vec<Complex64>,
    ) -> Result<Self> {
        let depth = match repr {
            Repr::GridZ => zgrid.len(),
            Repr::ModeZ => basis
                .as_ref()
                .ok_or_else(|| Error::SizeMismatch("mode representation needs a basis".into()))?
                .len(),
        };
        if data.len() != plane.len() * depth {
            return Err(Error::SizeMismatch(format!(
                "{} values for a {}x{}x{} field",
                data.len(),
                plane.nx(),
                plane.ny(),
                depth
            )));
        }
        Ok(Self {
            repr,
            space,
            plane,
            zgrid,
            basis,
            data,
        })
    }

    pub fn repr(&self) -> Repr {
        self.repr
    }
    pub fn space(&self) -> XySpace {
        self.space
    }
    pub fn plane(&self) -> &Grid2D {
        &self.plane
    }
    pub fn zgrid(&self) -> &Grid1D {
        &self.zgrid
    }
    pub fn basis(&self) -> Option<&Arc<EigenBasis>> {
        self.basis.as_ref()
    }
    pub fn data(&self) -> &[Complex64] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }
    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    /// Length of the fastest axis (`n_z` or `P`).
    pub fn depth(&self) -> usize {
        match self.repr {
            Repr::GridZ => self.zgrid.len(),
            Repr::ModeZ => self.basis.as_ref().map_or(0, |b| b.len()),
        }
    }

    /// Quadrature weight per stored value for `sum |f|^2 dV`.
    pub fn weight(&self) -> f64 {
        match self.repr {
            Repr::GridZ => self.plane.area_element() * self.zgrid.dz(),
            Repr::ModeZ => self.plane.area_element(),
        }
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            Some(index) => Err(Error::NonFinite { index }),
            None => Ok(()),
        }
    }

    pub fn scale(&mut self, s: Complex64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    /// `self - other`, requiring identical layout.
    pub fn sub(&self, other: &Field3D) -> Result<Field3D> {
        self.same_layout(other)?;
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a -= b;
        }
        Ok(out)
    }

    fn same_layout(&self, other: &Field3D) -> Result<()> {
        if self.repr != other.repr
            || self.space != other.space
            || self.plane != other.plane
            || self.zgrid != other.zgrid
            || self.data.len() != other.data.len()
        {
            return Err(Error::SizeMismatch("fields have different layouts".into()));
        }
        Ok(())
    }

    /// Per-column z-integrated density `<|f|^2>` on the plane (physical space only).
    pub fn z_density(&self) -> Result<Vec<f64>> {
        if self.space != XySpace::Physical {
            return Err(Error::SizeMismatch("density needs physical (x,y) samples".into()));
        }
        let d = self.depth();
        let w = match self.repr {
            Repr::GridZ => self.zgrid.dz(),
            Repr::ModeZ => 1.0,
        };
        Ok(self
            .data
            .chunks_exact(d)
            .map(|c| c.iter().map(|v| v.norm_sqr()).sum::<f64>() * w)
            .collect())
    }
}

/// Forward or inverse unitary (x, y) transform; the representation is preserved.
pub fn fourier_xy(f: &Field3D, forward: bool, fft: &Fft2) -> Result<Field3D> {
    if fft.nx() != f.plane.nx() || fft.ny() != f.plane.ny() {
        return Err(Error::SizeMismatch(format!(
            "transform is {}x{}, field plane is {}x{}",
            fft.nx(),
            fft.ny(),
            f.plane.nx(),
            f.plane.ny()
        )));
    }
    let want = if forward { XySpace::Physical } else { XySpace::Fourier };
    if f.space != want {
        return Err(Error::SizeMismatch(format!(
            "field is already in {:?} space",
            f.space
        )));
    }
    let mut out = f.clone();
    let depth = f.depth();
    if forward {
        fft.forward(&mut out.data, depth);
        out.space = XySpace::Fourier;
    } else {
        fft.inverse(&mut out.data, depth);
        out.space = XySpace::Physical;
    }
    Ok(out)
}

/// `phi_p = <f chi_p>` for every column; returns the mode field and the tail.
pub fn project_modes(f: &Field3D, basis: &Arc<EigenBasis>) -> Result<(Field3D, TailReport)> {
    if f.repr != Repr::GridZ {
        return Err(Error::SizeMismatch("projection needs a grid-z field".into()));
    }
    if f.zgrid != *basis.grid() {
        return Err(Error::SizeMismatch("field and basis use different z grids".into()));
    }
    let nz = f.zgrid.len();
    let p_count = basis.len();
    let dz = f.zgrid.dz();
    let mut data = vec![Complex64::default(); f.plane.len() * p_count];
    for (col, out) in f.data.chunks_exact(nz).zip(data.chunks_exact_mut(p_count)) {
        for (p, o) in out.iter_mut().enumerate() {
            let chi = basis.chi(p);
            let mut acc = Complex64::default();
            for k in 1..nz {
                acc += col[k] * chi[k];
            }
            *o = acc * dz;
        }
    }
    let total: f64 = f.data.iter().map(|v| v.norm_sqr()).sum::<f64>() * f.weight();
    let captured: f64 = data.iter().map(|v| v.norm_sqr()).sum::<f64>() * f.plane.area_element();
    let fraction = if total > 0.0 {
        ((total - captured) / total).max(0.0)
    } else {
        0.0
    };
    let tail = TailReport {
        total,
        captured,
        fraction,
        warn: fraction > TAIL_WARN,
    };
    let out = Field3D {
        repr: Repr::ModeZ,
        space: f.space,
        plane: f.plane.clone(),
        zgrid: f.zgrid.clone(),
        basis: Some(basis.clone()),
        data,
    };
    Ok((out, tail))
}

/// `sum_p phi_p chi_p(z)` back on the z grid.
pub fn synth_modes(f: &Field3D) -> Result<Field3D> {
    if f.repr != Repr::ModeZ {
        return Err(Error::SizeMismatch("synthesis needs a mode-z field".into()));
    }
    let basis = f.basis.as_ref().expect("mode field carries its basis");
    let nz = f.zgrid.len();
    let p_count = basis.len();
    let mut data = vec![Complex64::default(); f.plane.len() * nz];
    for (coef, out) in f.data.chunks_exact(p_count).zip(data.chunks_exact_mut(nz)) {
        for (p, c) in coef.iter().enumerate() {
            let chi = basis.chi(p);
            for k in 1..nz {
                out[k] += c * chi[k];
            }
        }
    }
    Ok(Field3D {
        repr: Repr::GridZ,
        space: f.space,
        plane: f.plane.clone(),
        zgrid: f.zgrid.clone(),
        basis: None,
        data,
    })
}
