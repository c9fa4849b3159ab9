//! Free-space Poisson convolutions by zero-padded FFT.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{Field3D, Repr, XySpace};
use crate::fourier::{Fft2, Fft3, PaddedConv3};
use crate::grid::{Grid1D, Grid2D};
use crate::modes::ModeSet;
use crate::norms::{bm_norm, SobolevIndex};
use crate::spectrum::EigenBasis;

/// Padded-grid cap for the 3D kernel.
pub const MAX_PADDED_POINTS: usize = 1 << 24;

/// Mass fraction within two cells of the box edge above which W is flagged.
pub const EDGE_WARN: f64 = 1e-6;

/// `int_{[-a,a]x[-b,b]} dx dy / sqrt(x^2 + y^2 + c^2)`.
pub fn rect_integral_inv_r(a: f64, b: f64, c: f64) -> f64 {
    let f = |x: f64, y: f64| -> f64 {
        let r = (x * x + y * y + c * c).sqrt();
        let mut v = 0.0;
        if x > 0.0 {
            v += x * (y + r).ln();
        }
        if y > 0.0 {
            v += y * (x + r).ln();
        }
        if c > 0.0 && x > 0.0 && y > 0.0 {
            v -= c * (x * y / (c * r)).atan();
        }
        v
    };
    if c == 0.0 {
        let r = (a * a + b * b).sqrt();
        return 4.0 * (a * ((b + r) / a).ln() + b * ((a + r) / b).ln());
    }
    4.0 * (f(a, b) - f(0.0, b) - f(a, 0.0) + f(0.0, 0.0))
}

fn wrapped(i: usize, n: usize) -> f64 {
    if i < n / 2 {
        i as f64
    } else {
        i as f64 - n as f64
    }
}

/// Real Fourier multiplier of `1 / (4 pi sqrt(x^2 + y^2))` on the 2x padded plane.
#[derive(Debug, Clone)]
pub struct Kernel2D {
    plane: Grid2D,
    mx: usize,
    my: usize,
    fft: Fft2,
    multiplier: Vec<f64>,
    /// analytic cell average used at the origin
    pub origin_value: f64,
    /// largest imaginary part discarded from the transformed kernel
    pub odd_residue: f64,
}

/// Real Fourier multiplier of `1 / (4 pi sqrt(x^2 + y^2 + eps^2 z^2))`, padded in all axes.
#[derive(Debug, Clone)]
pub struct Kernel3D {
    plane: Grid2D,
    zgrid: Grid1D,
    eps: f64,
    dims: (usize, usize, usize),
    conv: PaddedConv3,
    multiplier: Vec<f64>,
    pub odd_residue: f64,
}

/// `int_0^|x| int_0^|y|` of the inverse distance, signed by `sgn(x) sgn(y)`.
fn quadrant_integral(x: f64, y: f64, c: f64) -> f64 {
    let (ax, ay) = (x.abs(), y.abs());
    if ax == 0.0 || ay == 0.0 {
        return 0.0;
    }
    let f = |x: f64, y: f64| -> f64 {
        let r = (x * x + y * y + c * c).sqrt();
        let mut v = 0.0;
        if x > 0.0 && y + r > 0.0 {
            v += x * (y + r).ln();
        }
        if y > 0.0 && x + r > 0.0 {
            v += y * (x + r).ln();
        }
        if c > 0.0 && x > 0.0 && y > 0.0 {
            v -= c * (x * y / (c * r)).atan();
        }
        v
    };
    let q = f(ax, ay) - f(0.0, ay) - f(ax, 0.0) + f(0.0, 0.0);
    q * x.signum() * y.signum()
}

/// `int_{[x0,x1]x[y0,y1]} dx dy / sqrt(x^2 + y^2 + c^2)`.
pub fn cell_integral_inv_r(x0: f64, x1: f64, y0: f64, y1: f64, c: f64) -> f64 {
    quadrant_integral(x1, y1, c) - quadrant_integral(x0, y1, c) - quadrant_integral(x1, y0, c)
        + quadrant_integral(x0, y0, c)
}

/// Cells per side summed exactly before the continuum tail takes over.
const ORIGIN_NEAR: i64 = 32;

/// Origin weight of the corrected quadrature for `1 / sqrt(x^2 + y^2 + c^2)` on
/// the `(dx, dy)` lattice: `sum_j w_j f(x_j)` with `w_j = dA K(x_j)` off the
/// origin is then second-order accurate for smooth `f`.
///
/// The weight is the origin-cell integral plus the midpoint defects of all
/// other cells; defects beyond `ORIGIN_NEAR` cells come from the flux of
/// `(dx^2 d_xx + dy^2 d_yy) K / 24` through the square boundary.
pub fn origin_weight_inv_r(dx: f64, dy: f64, c: f64) -> f64 {
    let area = dx * dy;
    let mut w = rect_integral_inv_r(0.5 * dx, 0.5 * dy, c);
    for m in -ORIGIN_NEAR..=ORIGIN_NEAR {
        let x = m as f64 * dx;
        for n in -ORIGIN_NEAR..=ORIGIN_NEAR {
            if m == 0 && n == 0 {
                continue;
            }
            let y = n as f64 * dy;
            let exact = cell_integral_inv_r(x - 0.5 * dx, x + 0.5 * dx, y - 0.5 * dy, y + 0.5 * dy, c);
            w += exact - area / (x * x + y * y + c * c).sqrt();
        }
    }
    let (bx, by) = ((ORIGIN_NEAR as f64 + 0.5) * dx, (ORIGIN_NEAR as f64 + 0.5) * dy);
    let d = (bx * bx + by * by + c * c).sqrt();
    let flux_xx = 4.0 * bx * by / ((bx * bx + c * c) * d);
    let flux_yy = 4.0 * bx * by / ((by * by + c * c) * d);
    w + (dx * dx * flux_xx + dy * dy * flux_yy) / 24.0
}

pub fn kernel2d_sample(dx: f64, dy: f64, x: f64, y: f64) -> f64 {
    if x == 0.0 && y == 0.0 {
        origin_weight_inv_r(dx, dy, 0.0) / (4.0 * PI * dx * dy)
    } else {
        1.0 / (4.0 * PI * (x * x + y * y).sqrt())
    }
}

pub fn kernel3d_sample(dx: f64, dy: f64, dz: f64, eps: f64, x: f64, y: f64, z: f64) -> f64 {
    if x == 0.0 && y == 0.0 {
        // the in-plane origin weight is corrected for every z, so the kernel
        // reduces exactly to the 2D one as eps -> 0
        let w = origin_weight_inv_r(dx, dy, eps * z.abs());
        // the z sum of the slice integrals C - 2 pi eps |z| misses
        // -pi eps dz^2 / 2 in the origin cell and gains pi eps dz^2 / 6 from
        // the jump of its slope
        let kink = if z == 0.0 { PI * eps * dz / 3.0 } else { 0.0 };
        (w - kink) / (4.0 * PI * dx * dy)
    } else {
        1.0 / (4.0 * PI * (x * x + y * y + eps * eps * z * z).sqrt())
    }
}

impl Kernel2D {
    pub fn new(plane: &Grid2D) -> Self {
        let (nx, ny) = (plane.nx(), plane.ny());
        let (mx, my) = (2 * nx, 2 * ny);
        let (dx, dy) = (plane.dx(), plane.dy());
        let mut k = vec![Complex64::default(); mx * my];
        for i in 0..mx {
            let x = wrapped(i, mx) * dx;
            for j in 0..my {
                let y = wrapped(j, my) * dy;
                k[i * my + j] = Complex64::new(kernel2d_sample(dx, dy, x, y), 0.0);
            }
        }
        let fft = Fft2::new(mx, my);
        fft.forward(&mut k, 1);
        let s = ((mx * my) as f64).sqrt() * plane.area_element();
        let odd_residue = k.iter().fold(0.0f64, |m, v| m.max(v.im.abs())) * s;
        let multiplier = k.iter().map(|v| v.re * s).collect();
        Self {
            plane: plane.clone(),
            mx,
            my,
            fft,
            multiplier,
            origin_value: kernel2d_sample(dx, dy, 0.0, 0.0),
            odd_residue,
        }
    }

    pub fn plane(&self) -> &Grid2D {
        &self.plane
    }

    pub fn multiplier(&self) -> &[f64] {
        &self.multiplier
    }

    /// Largest relative deviation of the multiplier from `M(-k) = M(k)`.
    pub fn evenness_defect(&self) -> f64 {
        even_defect(&self.multiplier, &[self.mx, self.my])
    }

    /// `W = K * rho` on the plane (linear, not periodic, convolution).
    pub fn potential(&self, density: &[f64]) -> Result<Vec<f64>> {
        let (nx, ny) = (self.plane.nx(), self.plane.ny());
        if density.len() != nx * ny {
            return Err(Error::SizeMismatch(format!(
                "density has {} points, plane has {}",
                density.len(),
                nx * ny
            )));
        }
        let mut buf = vec![Complex64::default(); self.mx * self.my];
        for i in 0..nx {
            for j in 0..ny {
                buf[i * self.my + j] = Complex64::new(density[i * ny + j], 0.0);
            }
        }
        self.fft.forward(&mut buf, 1);
        for (v, m) in buf.iter_mut().zip(&self.multiplier) {
            *v *= *m;
        }
        self.fft.inverse(&mut buf, 1);
        let mut w = vec![0.0; nx * ny];
        for i in 0..nx {
            for j in 0..ny {
                w[i * ny + j] = buf[i * self.my + j].re;
            }
        }
        Ok(w)
    }
}

fn even_defect(m: &[f64], dims: &[usize]) -> f64 {
    let max = m.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut worst = 0.0f64;
    let total: usize = dims.iter().product();
    for idx in 0..total {
        let mut rem = idx;
        let mut mirror = 0;
        let mut stride = total;
        for &d in dims {
            stride /= d;
            let c = rem / stride;
            rem %= stride;
            mirror += ((d - c) % d) * stride;
        }
        worst = worst.max((m[idx] - m[mirror]).abs());
    }
    if max > 0.0 {
        worst / max
    } else {
        0.0
    }
}

impl Kernel3D {
    pub fn new(plane: &Grid2D, zgrid: &Grid1D, eps: f64) -> Result<Self> {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::InvalidPotential(format!("eps must be > 0, got {eps}")));
        }
        let (nx, ny, nz) = (plane.nx(), plane.ny(), zgrid.len());
        let dims = (2 * nx, 2 * ny, 2 * nz);
        let required = dims.0 * dims.1 * dims.2;
        if required > MAX_PADDED_POINTS {
            return Err(Error::MemoryBudget {
                required,
                available: MAX_PADDED_POINTS,
            });
        }
        let (dx, dy, dz) = (plane.dx(), plane.dy(), zgrid.dz());
        let mut k = vec![Complex64::default(); required];
        for i in 0..dims.0 {
            let x = wrapped(i, dims.0) * dx;
            for j in 0..dims.1 {
                let y = wrapped(j, dims.1) * dy;
                let base = (i * dims.1 + j) * dims.2;
                for l in 0..dims.2 {
                    let z = wrapped(l, dims.2) * dz;
                    k[base + l] = Complex64::new(kernel3d_sample(dx, dy, dz, eps, x, y, z), 0.0);
                }
            }
        }
        let fft = Fft3::new(dims.0, dims.1, dims.2);
        fft.forward(&mut k);
        let s = (required as f64).sqrt() * plane.area_element() * dz;
        let odd_residue = k.iter().fold(0.0f64, |m, v| m.max(v.im.abs())) * s;
        let multiplier = k.iter().map(|v| v.re * s).collect();
        Ok(Self {
            plane: plane.clone(),
            zgrid: zgrid.clone(),
            eps,
            dims,
            conv: PaddedConv3::new(nx, ny, nz),
            multiplier,
            odd_residue,
        })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn evenness_defect(&self) -> f64 {
        even_defect(&self.multiplier, &[self.dims.0, self.dims.1, self.dims.2])
    }

    /// `V = K_eps * rho` for a density on the (x, y, z) grid, z fastest.
    pub fn potential(&self, density: &[f64]) -> Result<Vec<f64>> {
        let (nx, ny, nz) = (self.plane.nx(), self.plane.ny(), self.zgrid.len());
        if density.len() != nx * ny * nz {
            return Err(Error::SizeMismatch("density does not match the 3D grid".into()));
        }
        let out = self.conv.convolve(density, &self.multiplier);
        Ok(out)
    }
}

/// Self-consistent limit potential and its boundary audit.
#[derive(Debug, Clone)]
pub struct SelfConsistentW {
    pub w: Vec<f64>,
    /// density fraction within two cells of the box edge
    pub edge_fraction: f64,
    pub edge_warn: bool,
}

pub fn selfconsistent_w_from_density(density: &[f64], kernel: &Kernel2D) -> Result<SelfConsistentW> {
    if let Some(i) = density.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index: i });
    }
    let w = kernel.potential(density)?;
    let edge_fraction = kernel.plane().boundary_fraction(density, 2);
    Ok(SelfConsistentW {
        w,
        edge_fraction,
        edge_warn: edge_fraction > EDGE_WARN,
    })
}

/// `W = K_2d * sum_p |phi_p|^2`.
pub fn selfconsistent_w(m: &ModeSet, kernel: &Kernel2D) -> Result<SelfConsistentW> {
    selfconsistent_w_from_density(&m.density(), kernel)
}

/// `F_0(u) = (K_2d * <|u|^2>) u` on a physical-space field of either representation.
pub fn apply_f0(f: &Field3D, kernel: &Kernel2D) -> Result<(Field3D, SelfConsistentW)> {
    let density = f.z_density()?;
    let w = selfconsistent_w_from_density(&density, kernel)?;
    let mut out = f.clone();
    let d = f.depth();
    for (col, wv) in out.data_mut().chunks_exact_mut(d).zip(&w.w) {
        col.iter_mut().for_each(|v| *v *= *wv);
    }
    Ok((out, w))
}

/// `F_0` on the limit state: every mode times the same `W`.
pub fn apply_f0_modes(m: &ModeSet, kernel: &Kernel2D) -> Result<(ModeSet, SelfConsistentW)> {
    let w = selfconsistent_w(m, kernel)?;
    let mut out = m.clone();
    for mode in out.modes_mut() {
        for (v, wv) in mode.iter_mut().zip(&w.w) {
            *v *= *wv;
        }
    }
    Ok((out, w))
}

/// `V^eps = K_eps * |u|^2` on a grid-z, physical-space field.
pub fn potential_f1(f: &Field3D, kernel: &Kernel3D) -> Result<Vec<f64>> {
    if f.repr() != Repr::GridZ || f.space() != XySpace::Physical {
        return Err(Error::SizeMismatch("F1 needs a physical grid-z field".into()));
    }
    let density: Vec<f64> = f.data().iter().map(|v| v.norm_sqr()).collect();
    kernel.potential(&density)
}

/// `F_1(u) = V^eps u`.
pub fn apply_f1(f: &Field3D, kernel: &Kernel3D) -> Result<Field3D> {
    let v = potential_f1(f, kernel)?;
    let mut out = f.clone();
    for (u, vv) in out.data_mut().iter_mut().zip(&v) {
        *u *= *vv;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelGapReport {
    pub eps: Vec<f64>,
    /// `||F_1(u) - F_0(u)||_{B^1}`
    pub gap: Vec<f64>,
    /// gap over `||u||_{B^2}^3`
    pub normalized: Vec<f64>,
    pub slope: f64,
    pub monotone: bool,
}

pub fn kernel_gap_estimate(u: &Field3D, eps: &[f64], basis: &EigenBasis) -> Result<KernelGapReport> {
    let plane = u.plane();
    let fft = Fft2::new(plane.nx(), plane.ny());
    let k2 = Kernel2D::new(plane);
    let (f0, _) = apply_f0(u, &k2)?;
    let b2 = bm_norm(u, SobolevIndex::new(2)?, basis, &fft)?.value;
    let mut gap = Vec::with_capacity(eps.len());
    for &e in eps {
        let k3 = Kernel3D::new(plane, u.zgrid(), e)?;
        let f1 = apply_f1(u, &k3)?;
        let d = f1.sub(&f0)?;
        gap.push(bm_norm(&d, SobolevIndex::new(1)?, basis, &fft)?.value);
    }
    let normalized = gap.iter().map(|g| g / (b2 * b2 * b2)).collect();
    let slope = crate::fit::loglog_slope(eps, &gap);
    let mut order: Vec<usize> = (0..eps.len()).collect();
    order.sort_by(|&a, &b| eps[b].total_cmp(&eps[a]));
    let monotone = order.windows(2).all(|w| gap[w[1]] < gap[w[0]]);
    Ok(KernelGapReport {
        eps: eps.to_vec(),
        gap,
        normalized,
        slope,
        monotone,
    })
}

impl KernelGapReport {
    /// `kernelgap.csv`: `eps,gap,normalized_gap` with a `slope` footer row.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "eps,gap,normalized_gap")?;
        for i in 0..self.eps.len() {
            writeln!(
                w,
                "{:.17e},{:.17e},{:.17e}",
                self.eps[i], self.gap[i], self.normalized[i]
            )?;
        }
        writeln!(w, "slope,{:.17e},", self.slope)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rect_integral_matches_midpoint_sum() {
        for &(a, b, c) in &[(0.3, 0.5, 0.0), (0.25, 0.25, 0.1), (0.5, 0.2, 2.0)] {
            let n = 2000;
            let (hx, hy) = (2.0 * a / n as f64, 2.0 * b / n as f64);
            let mut s = 0.0;
            for i in 0..n {
                let x = -a + (i as f64 + 0.5) * hx;
                for j in 0..n {
                    let y = -b + (j as f64 + 0.5) * hy;
                    s += 1.0 / (x * x + y * y + c * c).sqrt();
                }
            }
            s *= hx * hy;
            let exact = rect_integral_inv_r(a, b, c);
            // midpoint rule converges slowly at the c = 0 singularity
            assert!((s - exact).abs() < 2e-3 * exact, "{a} {b} {c}: {s} vs {exact}");
        }
    }

    #[test]
    fn kernel3d_column_tends_to_2d_average() {
        let (dx, dy) = (0.25, 0.25);
        let k2 = kernel2d_sample(dx, dy, 0.0, 0.0);
        let k3 = kernel3d_sample(dx, dy, 0.1, 1e-9, 0.0, 0.0, 0.7);
        assert!((k2 - k3).abs() < 1e-7 * k2);
    }

    #[test]
    fn memory_cap_enforced() {
        let plane = Grid2D::new(1.0, 1.0, 512, 512).unwrap();
        let z = Grid1D::new(1.0, 64).unwrap();
        assert!(matches!(
            Kernel3D::new(&plane, &z, 0.1),
            Err(Error::MemoryBudget { .. })
        ));
    }

    #[test]
    fn point_mass_reproduces_kernel_samples() {
        let plane = Grid2D::new(8.0, 8.0, 32, 32).unwrap();
        let k = Kernel2D::new(&plane);
        let mut rho = vec![0.0; plane.len()];
        let c = 16 * 32 + 16;
        rho[c] = 1.0 / plane.area_element();
        let w = k.potential(&rho).unwrap();
        for idx in [c + 1, c + 5, c + 32 * 3 + 2, 0] {
            let (i, j) = (idx / 32, idx % 32);
            let x = (i as f64 - 16.0) * plane.dx();
            let y = (j as f64 - 16.0) * plane.dy();
            let want = kernel2d_sample(plane.dx(), plane.dy(), x, y);
            assert!((w[idx] - want).abs() < 1e-6 * want, "{idx}");
        }
        assert!(k.evenness_defect() < 1e-12);
    }

    #[test]
    fn square_origin_weight_is_the_lattice_constant() {
        // 4 |zeta(1/2)| beta(1/2), the regularized inverse-distance sum of Z^2
        let want = 4.0 * 1.460_354_508_809_586_8 * 0.667_691_457_189_609_1;
        let w = origin_weight_inv_r(1.0, 1.0, 0.0);
        assert!((w - want).abs() < 1e-6, "{w} vs {want}");
        let w = origin_weight_inv_r(0.3, 0.3, 0.0);
        assert!((w - 0.3 * want).abs() < 1e-6, "{w}");
    }

    #[test]
    fn cell_integral_tiles_the_centered_rectangle() {
        for &c in &[0.0, 0.3] {
            let mut s = 0.0;
            for &(x0, x1) in &[(-0.4, 0.1), (0.1, 0.6)] {
                for &(y0, y1) in &[(-0.2, -0.05), (-0.05, 0.2)] {
                    s += cell_integral_inv_r(x0, x1, y0, y1, c);
                }
            }
            let direct = cell_integral_inv_r(-0.4, 0.6, -0.2, 0.2, c);
            assert!((s - direct).abs() < 1e-13, "{s} vs {direct}");
            let sym = rect_integral_inv_r(0.6, 0.2, c);
            let halves = cell_integral_inv_r(-0.6, 0.6, -0.2, 0.2, c);
            assert!((sym - halves).abs() < 1e-13);
        }
    }

    #[test]
    fn origin_weight_tail_is_converged() {
        // a wider exact zone must agree once both carry the flux tail
        let (dx, dy, c) = (0.5, 0.25, 0.1);
        let far = 96i64;
        let mut w = rect_integral_inv_r(0.5 * dx, 0.5 * dy, c);
        for m in -far..=far {
            for n in -far..=far {
                if m == 0 && n == 0 {
                    continue;
                }
                let (x, y) = (m as f64 * dx, n as f64 * dy);
                w += cell_integral_inv_r(x - 0.5 * dx, x + 0.5 * dx, y - 0.5 * dy, y + 0.5 * dy, c)
                    - dx * dy / (x * x + y * y + c * c).sqrt();
            }
        }
        let (bx, by) = ((far as f64 + 0.5) * dx, (far as f64 + 0.5) * dy);
        let d = (bx * bx + by * by + c * c).sqrt();
        let tail = (dx * dx * 4.0 * bx * by / ((bx * bx + c * c) * d)
            + dy * dy * 4.0 * bx * by / ((by * by + c * c) * d))
            / 24.0;
        let got = origin_weight_inv_r(dx, dy, c);
        assert!((got - w - tail).abs() < 1e-6, "{got} vs {w} + {tail}");
    }

    #[test]
    fn isotropic_kernel_matches_gaussian_charge() {
        let plane = Grid2D::new(16.0, 16.0, 32, 32).unwrap();
        let z = Grid1D::new(8.0, 32).unwrap();
        let k = Kernel3D::new(&plane, &z, 1.0).unwrap();
        let charge = (2.0 * PI).powf(1.5);
        let mut rho = Vec::new();
        let mut exact = Vec::new();
        for i in 0..32 {
            for j in 0..32 {
                for &zz in z.points() {
                    let (x, y) = (plane.x(i), plane.y(j));
                    let r = (x * x + y * y + zz * zz).sqrt();
                    rho.push((-0.5 * r * r).exp());
                    let v = if r > 0.0 {
                        libm::erf(r / 2f64.sqrt()) / r
                    } else {
                        (2.0 / PI).sqrt()
                    };
                    exact.push(charge * v / (4.0 * PI));
                }
            }
        }
        let v = k.potential(&rho).unwrap();
        let worst = v.iter().zip(&exact).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(worst < 1e-3, "{worst}");
    }

    #[test]
    fn thin_kernel_origin_tends_to_2d_value() {
        let (dx, dy) = (0.25, 0.25);
        let k2 = kernel2d_sample(dx, dy, 0.0, 0.0);
        let k3 = kernel3d_sample(dx, dy, 0.1, 1e-9, 0.0, 0.0, 0.0);
        assert!((k2 - k3).abs() < 1e-7 * k2);
    }
}
