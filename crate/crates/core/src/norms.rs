//! L2 and confinement-adapted Sobolev norms.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{fourier_xy, Field3D, Repr, XySpace, TAIL_WARN};
use crate::fourier::Fft2;
use crate::spectrum::EigenBasis;

/// Sobolev index `m`, restricted to `0..=8`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SobolevIndex(u32);

impl SobolevIndex {
    pub const MAX: u32 = 8;

    pub fn new(m: u32) -> Result<Self> {
        if m > Self::MAX {
            return Err(Error::SobolevRange(m));
        }
        Ok(Self(m))
    }

    pub fn get(self) -> u32 {
        self.0
    }
}

/// `(sum |f|^2 dV)^{1/2}` by Riemann sum.
pub fn l2_norm(f: &Field3D) -> Result<f64> {
    f.check_finite()?;
    let s: f64 = f.data().iter().map(|v| v.norm_sqr()).sum();
    Ok((s * f.weight()).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BmNorm {
    pub value: f64,
    /// relative mass outside the basis span (0 for mode fields)
    pub tail_fraction: f64,
    /// set when `tail_fraction` exceeds `1e-6`
    pub tail_warn: bool,
}

/// `(||f||^2 + ||(-Lap_xy)^{m/2} f||^2 + ||H_z^{m/2} f||^2)^{1/2}`.
///
/// Mode fields use `sum (1 + |k|^{2m} + E_p^m) |f_{p,k}|^2`. Grid fields use
/// `<f, H_z^m f>` with the discrete operator of `basis`, which equals the
/// eigenmode sum plus the exact contribution of the part outside the span.
/// `m = 0` returns the plain L2 norm.
pub fn bm_norm(f: &Field3D, m: SobolevIndex, basis: &EigenBasis, fft: &Fft2) -> Result<BmNorm> {
    f.check_finite()?;
    let m = m.get();
    if m == 0 {
        return Ok(BmNorm {
            value: l2_norm(f)?,
            tail_fraction: 0.0,
            tail_warn: false,
        });
    }
    let spectral;
    let g = match f.space() {
        XySpace::Fourier => f,
        XySpace::Physical => {
            spectral = fourier_xy(f, true, fft)?;
            &spectral
        }
    };
    let plane = g.plane();
    let depth = g.depth();
    let mi = m as i32;
    let mut sum = 0.0;
    let mut tail_fraction = 0.0;
    match g.repr() {
        Repr::ModeZ => {
            let b = g.basis().expect("mode field carries its basis");
            if b.len() != depth || b.fingerprint() != basis.fingerprint() {
                return Err(Error::SizeMismatch("field was projected on another basis".into()));
            }
            let em: Vec<f64> = basis.energies().iter().map(|e| e.powi(mi)).collect();
            for (idx, col) in g.data().chunks_exact(depth).enumerate() {
                let k2m = plane.k2(idx).powi(mi);
                for (c, e) in col.iter().zip(&em) {
                    sum += (1.0 + k2m + e) * c.norm_sqr();
                }
            }
            sum *= g.weight();
        }
        Repr::GridZ => {
            if g.zgrid() != basis.grid() {
                return Err(Error::SizeMismatch("field and basis use different z grids".into()));
            }
            let n = depth;
            let dz = g.zgrid().dz();
            let mut total = 0.0;
            let mut captured = 0.0;
            let mut re = vec![0.0; n];
            let mut im = vec![0.0; n];
            let mut tmp = vec![0.0; n];
            for (idx, col) in g.data().chunks_exact(n).enumerate() {
                let k2m = plane.k2(idx).powi(mi);
                let l2: f64 = col.iter().map(|v| v.norm_sqr()).sum();
                if l2 == 0.0 {
                    continue;
                }
                for k in 0..n {
                    re[k] = col[k].re;
                    im[k] = col[k].im;
                }
                let h = hm_quadratic(basis, &re, m, &mut tmp) + hm_quadratic(basis, &im, m, &mut tmp);
                sum += (1.0 + k2m) * l2 + h;
                total += l2 * dz;
                for chi in basis.modes() {
                    let c: Complex64 = col.iter().zip(chi).map(|(v, x)| v * x).sum::<Complex64>() * dz;
                    captured += c.norm_sqr();
                }
            }
            sum *= g.weight();
            if total > 0.0 {
                tail_fraction = ((total - captured) / total).max(0.0);
            }
        }
    }
    Ok(BmNorm {
        value: sum.max(0.0).sqrt(),
        tail_fraction,
        tail_warn: tail_fraction > TAIL_WARN,
    })
}

/// `v^T H^m v` (unweighted) using `ceil(m/2)` operator applications.
fn hm_quadratic(basis: &EigenBasis, v: &[f64], m: u32, tmp: &mut [f64]) -> f64 {
    let n = v.len();
    let mut cur = v.to_vec();
    for _ in 0..m / 2 {
        basis.apply_hz(&cur, tmp);
        cur.copy_from_slice(&tmp[..n]);
    }
    if m % 2 == 0 {
        cur.iter().map(|x| x * x).sum()
    } else {
        basis.apply_hz(&cur, tmp);
        cur.iter().zip(tmp.iter()).map(|(a, b)| a * b).sum()
    }
}

/// `sum |f|^2` over an (x, y) plane array with a caller-provided weight.
pub fn plane_mass(values: &[Complex64], weight: f64) -> f64 {
    values.iter().map(|v| v.norm_sqr()).sum::<f64>() * weight
}
