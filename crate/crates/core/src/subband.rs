//! Subband couplings, cyclotron effective-mass coefficients and the
//! oscillatory operators of the filtered dynamics.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fourier::Fft2;
use crate::modes::ModeSet;
use crate::spectrum::{confined_eigensystem, EigenBasis, DEGENERACY_GUARD};

/// `a_pq = <2 B z chi_p chi_q>` by Riemann sum, with symmetry and
/// zero-diagonal checks.
pub fn coupling_coeffs(basis: &EigenBasis) -> Result<Vec<Vec<f64>>> {
    let p_count = basis.len();
    let z = basis.grid().points();
    let dz = basis.grid().dz();
    let b2 = 2.0 * basis.b();
    let weighted: Vec<Vec<f64>> = (0..p_count)
        .map(|p| basis.chi(p).iter().zip(z).map(|(c, z)| b2 * z * c).collect())
        .collect();
    let mut a = vec![vec![0.0; p_count]; p_count];
    for p in 0..p_count {
        for q in 0..p_count {
            a[p][q] = weighted[p].iter().zip(basis.chi(q)).map(|(w, c)| w * c).sum::<f64>() * dz;
        }
    }
    let max = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    for p in 0..p_count {
        if a[p][p].abs() > 1e-10 * max {
            return Err(Error::Invariant(format!(
                "a_{p}{p} = {:e} is not zero; the z grid or potential is not symmetric",
                a[p][p]
            )));
        }
        for q in 0..p {
            if (a[p][q] - a[q][p]).abs() > 1e-12 * max {
                return Err(Error::Invariant(format!("a_pq not symmetric at ({p},{q})")));
            }
        }
    }
    Ok(a)
}

/// `alpha_p` in the two algebraically equivalent forms.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveMass {
    /// `1 - sum_{q != p} a_pq^2 / (E_q - E_p)`
    pub alpha: Vec<f64>,
    /// `1 + sum_{q != p} a_pq^2 / (E_p - E_q)`
    pub alpha_alt: Vec<f64>,
    /// `sum_{q < P} a_pq^2` actually included
    pub captured: Vec<f64>,
}

pub fn effective_mass_coeffs(a: &[Vec<f64>], e: &[f64]) -> Result<EffectiveMass> {
    let p_count = e.len();
    if a.len() != p_count || a.iter().any(|r| r.len() != p_count) {
        return Err(Error::SizeMismatch(format!(
            "coupling matrix does not match {p_count} energies"
        )));
    }
    let mut alpha = Vec::with_capacity(p_count);
    let mut alpha_alt = Vec::with_capacity(p_count);
    let mut captured = Vec::with_capacity(p_count);
    for p in 0..p_count {
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        let mut c = 0.0;
        for q in 0..p_count {
            if q == p {
                continue;
            }
            let gap = e[q] - e[p];
            if gap.abs() < DEGENERACY_GUARD * e[p].abs().max(1.0) {
                return Err(Error::Degenerate { p, gap });
            }
            let a2 = a[p][q] * a[p][q];
            s1 += a2 / gap;
            s2 += a2 / (e[p] - e[q]);
            c += a2;
        }
        let (f1, f2) = (1.0 - s1, 1.0 + s2);
        if (f1 - f2).abs() > 1e-12 * f1.abs().max(1.0) {
            return Err(Error::Invariant(format!(
                "alpha_{p}: forms disagree ({f1} vs {f2})"
            )));
        }
        alpha.push(f1);
        alpha_alt.push(f2);
        captured.push(c);
    }
    Ok(EffectiveMass {
        alpha,
        alpha_alt,
        captured,
    })
}

/// Couplings, effective masses and truncation diagnostics for one basis.
#[derive(Debug, Clone)]
pub struct CouplingData {
    pub a: Vec<Vec<f64>>,
    pub alpha: Vec<f64>,
    pub alpha_alt: Vec<f64>,
    /// bound on `|sum_{q >= P} a_pq^2 / (E_q - E_p)|` (infinite for `p = P-1`)
    pub tail_bound: Vec<f64>,
    pub trusted: Vec<bool>,
    pub energies: Vec<f64>,
    pub fingerprint: [u8; 32],
}

/// Modes within this many of the top mode are reported as untrusted.
pub const UNTRUSTED_TOP: usize = 4;

impl CouplingData {
    pub fn from_basis(basis: &EigenBasis) -> Result<Self> {
        let a = coupling_coeffs(basis)?;
        let e = basis.energies();
        let em = effective_mass_coeffs(&a, e)?;
        let p_count = e.len();
        let z = basis.grid().points();
        let dz = basis.grid().dz();
        let b = basis.b();
        let top = e[p_count - 1];
        let mut tail_bound = Vec::with_capacity(p_count);
        for p in 0..p_count {
            // sum rule: sum over all q of a_pq^2 = 4 B^2 <z^2 chi_p^2>
            let moment: f64 = basis.chi(p).iter().zip(z).map(|(c, z)| c * c * z * z).sum::<f64>() * dz;
            let rest = (4.0 * b * b * moment - em.captured[p]).max(0.0);
            let denom = top - e[p];
            tail_bound.push(if denom > 0.0 { rest / denom } else { f64::INFINITY });
            if rest == 0.0 {
                *tail_bound.last_mut().unwrap() = 0.0;
            }
        }
        let trusted = (0..p_count).map(|p| p + UNTRUSTED_TOP < p_count).collect();
        Ok(Self {
            a,
            alpha: em.alpha,
            alpha_alt: em.alpha_alt,
            tail_bound,
            trusted,
            energies: e.to_vec(),
            fingerprint: basis.fingerprint(),
        })
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    /// `(min, max)` of `alpha_p` over trusted modes.
    pub fn alpha_range(&self) -> (f64, f64) {
        self.alpha
            .iter()
            .zip(&self.trusted)
            .filter(|(_, t)| **t)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (a, _)| (lo.min(*a), hi.max(*a)))
    }

    pub fn first_negative_alpha(&self) -> Option<(usize, f64)> {
        self.alpha.iter().copied().enumerate().find(|(_, a)| *a < 0.0)
    }

    /// `effmass.csv`: `p,E_p,alpha_p,tail_bound_p,trusted`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "p,E_p,alpha_p,tail_bound_p,trusted")?;
        for p in 0..self.len() {
            writeln!(
                w,
                "{p},{:.17e},{:.17e},{:.17e},{}",
                self.energies[p], self.alpha[p], self.tail_bound[p], self.trusted[p]
            )?;
        }
        Ok(())
    }
}

/// `A_0 = -d_x^2 sum_p alpha_p Pi_p`: mode `p` times `alpha_p xi^2` in Fourier space.
pub fn apply_a0(m: &ModeSet, alpha: &[f64], fft: &Fft2) -> Result<ModeSet> {
    if alpha.len() != m.len() {
        return Err(Error::SizeMismatch(format!(
            "{} coefficients for {} modes",
            alpha.len(),
            m.len()
        )));
    }
    let plane = m.plane().clone();
    let ny = plane.ny();
    let xi = plane.xi().to_vec();
    Ok(m.map_spectral(fft, |p, idx| {
        let x = xi[idx / ny];
        Complex64::new(alpha[p] * x * x, 0.0)
    }))
}

fn check_sizes(m: &ModeSet, a: &[Vec<f64>], e: &[f64]) -> Result<()> {
    let p = m.len();
    if a.len() != p || e.len() != p || a.iter().any(|r| r.len() != p) {
        return Err(Error::SizeMismatch("coupling data does not match the mode set".into()));
    }
    Ok(())
}

/// `a(tau)`: mode `p` of the output is `-sum_{q != p} e^{i tau (E_p - E_q)} a_pq (i d_x phi_q)`.
pub fn oscillatory_a(tau: f64, m: &ModeSet, a: &[Vec<f64>], e: &[f64], fft: &Fft2) -> Result<ModeSet> {
    check_sizes(m, a, e)?;
    Ok(mix_modes(m, fft, |p, q| {
        let ph = tau * (e[p] - e[q]);
        // -(i d_x) = xi in Fourier space
        Complex64::new(ph.cos(), ph.sin()) * a[p][q]
    }))
}

/// Primitive `A(tau) = int_0^tau a(s) ds` in closed form.
pub fn oscillatory_big_a(tau: f64, m: &ModeSet, a: &[Vec<f64>], e: &[f64], fft: &Fft2) -> Result<ModeSet> {
    check_sizes(m, a, e)?;
    Ok(mix_modes(m, fft, |p, q| {
        let w = e[p] - e[q];
        let ph = tau * w;
        let i = Complex64::new(0.0, 1.0);
        // a(s) coefficient is e^{i s w} a_pq xi; integrate in s
        (Complex64::new(ph.cos(), ph.sin()) - 1.0) / (i * w) * a[p][q]
    }))
}

/// Output `p` is `sum_{q != p} coef(p, q) xi phi_q` (spectral in x).
fn mix_modes<F>(m: &ModeSet, fft: &Fft2, coef: F) -> ModeSet
where
    F: Fn(usize, usize) -> Complex64,
{
    let p_count = m.len();
    let plane = m.plane();
    let ny = plane.ny();
    let xi = plane.xi();
    let hats: Vec<Vec<Complex64>> = m
        .modes()
        .iter()
        .map(|v| {
            let mut h = v.clone();
            fft.forward(&mut h, 1);
            h
        })
        .collect();
    let mut out = ModeSet::zeros(plane, m.basis());
    out.t = m.t;
    for p in 0..p_count {
        let dst = out.mode_mut(p);
        for q in 0..p_count {
            if q == p {
                continue;
            }
            let c = coef(p, q);
            if c == Complex64::default() {
                continue;
            }
            for (idx, (d, h)) in dst.iter_mut().zip(&hats[q]).enumerate() {
                *d += c * xi[idx / ny] * h;
            }
        }
        fft.inverse(dst, 1);
    }
    out
}

/// Resonant (zero-frequency) part of `A(tau) a(tau) + i d_x^2`.
///
/// `coeff[p][n]` multiplies `i d_x^2 phi_n` in output mode `p`; the averaging
/// identity predicts `coeff[p][p] = alpha_p` and no off-diagonal entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondOrderAverage {
    pub coeff: Vec<Vec<f64>>,
}

pub fn second_order_average(a: &[Vec<f64>], e: &[f64]) -> SecondOrderAverage {
    let p_count = e.len();
    let scale = e.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let tol = DEGENERACY_GUARD * scale;
    let mut coeff = vec![vec![0.0; p_count]; p_count];
    for p in 0..p_count {
        for q in 0..p_count {
            if q == p {
                continue;
            }
            let w = e[p] - e[q];
            for n in 0..p_count {
                if n == q {
                    continue;
                }
                // i (e^{i tau (E_p - E_n)} - e^{i tau (E_q - E_n)}) / (E_p - E_q) a_pq a_qn d_x^2 u_n
                let amp = a[p][q] * a[q][n] / w;
                if (e[p] - e[n]).abs() <= tol {
                    coeff[p][n] += amp;
                }
                if (e[q] - e[n]).abs() <= tol {
                    coeff[p][n] -= amp;
                }
            }
        }
        coeff[p][p] += 1.0;
    }
    SecondOrderAverage { coeff }
}

impl SecondOrderAverage {
    /// Per-p `|coeff_pp - alpha_p|`, and the largest off-diagonal magnitude.
    pub fn discrepancy(&self, alpha: &[f64]) -> (Vec<f64>, f64) {
        let diag = self
            .coeff
            .iter()
            .enumerate()
            .map(|(p, row)| (row[p] - alpha[p]).abs())
            .collect();
        let mut off = 0.0f64;
        for (p, row) in self.coeff.iter().enumerate() {
            for (n, v) in row.iter().enumerate() {
                if n != p {
                    off = off.max(v.abs());
                }
            }
        }
        (diag, off)
    }
}

/// Per-wavevector eigenvalues of `-d_z^2 + V_c + (eps xi + B z)^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct DispersionProbe {
    pub eps: f64,
    pub xi: Vec<f64>,
    /// `lambda[k][p]` at `+xi_k`
    pub lambda: Vec<Vec<f64>>,
    pub lambda_minus: Vec<Vec<f64>>,
    pub lambda0: Vec<f64>,
    /// `curvature[k][p] = (lambda(xi) - 2 lambda(0) + lambda(-xi)) / (2 eps^2 xi^2)`
    pub curvature: Vec<Vec<f64>>,
    /// `max_{k,p} |curvature - alpha_p|` over the probed modes
    pub max_deviation: f64,
}

/// Lowest `count` eigenvalues of the x-Fourier symbol of `H_eps` at one wavevector.
pub fn shifted_eigenvalues(basis: &EigenBasis, eps: f64, xi: f64, count: usize) -> Result<Vec<f64>> {
    let grid = basis.grid();
    let b = basis.b();
    let total: Vec<f64> = basis
        .vc()
        .iter()
        .zip(grid.points())
        .map(|(v, z)| {
            let s = eps * xi + b * z;
            v + s * s
        })
        .collect();
    confined_eigensystem(&total, grid, count, basis.order(), false)
        .map(|s| s.energies)
        .map_err(|e| Error::ShiftedSolve {
            xi,
            source: Box::new(e),
        })
}

pub fn dispersion_check(
    basis: &EigenBasis,
    eps: f64,
    xi_probe: &[f64],
    alpha: &[f64],
) -> Result<DispersionProbe> {
    let count = alpha.len().min(basis.len());
    let lambda0 = shifted_eigenvalues(basis, eps, 0.0, count)?;
    let solved: Vec<(Vec<f64>, Vec<f64>)> = xi_probe
        .par_iter()
        .map(|&xi| -> Result<_> {
            Ok((
                shifted_eigenvalues(basis, eps, xi, count)?,
                shifted_eigenvalues(basis, eps, -xi, count)?,
            ))
        })
        .collect::<Result<_>>()?;
    let mut lambda = Vec::new();
    let mut lambda_minus = Vec::new();
    let mut curvature = Vec::new();
    let mut max_deviation = 0.0f64;
    for (xi, (lp, lm)) in xi_probe.iter().zip(solved) {
        let c: Vec<f64> = (0..count)
            .map(|p| {
                if *xi == 0.0 {
                    f64::NAN
                } else {
                    (lp[p] - 2.0 * lambda0[p] + lm[p]) / (2.0 * eps * eps * xi * xi)
                }
            })
            .collect();
        for p in 0..count {
            if c[p].is_finite() {
                max_deviation = max_deviation.max((c[p] - alpha[p]).abs());
            }
        }
        lambda.push(lp);
        lambda_minus.push(lm);
        curvature.push(c);
    }
    Ok(DispersionProbe {
        eps,
        xi: xi_probe.to_vec(),
        lambda,
        lambda_minus,
        lambda0,
        curvature,
        max_deviation,
    })
}

impl DispersionProbe {
    /// Largest `|curvature - alpha_p|` restricted to modes `p < count`.
    pub fn max_deviation_below(&self, alpha: &[f64], count: usize) -> f64 {
        let mut m = 0.0f64;
        for c in &self.curvature {
            for p in 0..count.min(c.len()) {
                if c[p].is_finite() {
                    m = m.max((c[p] - alpha[p]).abs());
                }
            }
        }
        m
    }

    /// `dispersion.csv`: `xi,p,lambda,curvature`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "xi,p,lambda,curvature")?;
        for (k, xi) in self.xi.iter().enumerate() {
            for p in 0..self.lambda[k].len() {
                writeln!(
                    w,
                    "{xi:.17e},{p},{:.17e},{:.17e}",
                    self.lambda[k][p], self.curvature[k][p]
                )?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid1D;
    use crate::potential::{build_potential, PotentialSpec};
    use crate::spectrum::solve_eigs;

    fn basis(spec: PotentialSpec, n: usize, l: f64, p: usize) -> EigenBasis {
        let g = Grid1D::new(l, n).unwrap();
        let v = build_potential(&spec, &g).unwrap();
        solve_eigs(&v.values, spec.b, &g, p).unwrap()
    }

    #[test]
    fn zero_field_gives_unit_alpha() {
        let b = basis(PotentialSpec::harmonic(1.0, 0.0), 512, 10.0, 10);
        let c = CouplingData::from_basis(&b).unwrap();
        assert!(c.a.iter().flatten().all(|v| *v == 0.0));
        assert!(c.alpha.iter().all(|a| *a == 1.0));
        assert!(c.tail_bound.iter().all(|t| *t == 0.0));
    }

    #[test]
    fn two_forms_agree_exactly() {
        let b = basis(PotentialSpec::power(1.0, 4.0, 0.7), 512, 8.0, 12);
        let c = CouplingData::from_basis(&b).unwrap();
        for (x, y) in c.alpha.iter().zip(&c.alpha_alt) {
            assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn degenerate_energies_rejected() {
        let a = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert!(matches!(
            effective_mass_coeffs(&a, &[1.0, 1.0]),
            Err(Error::Degenerate { .. })
        ));
    }

    #[test]
    fn resonant_average_reproduces_alpha() {
        let b = basis(PotentialSpec::power(1.0, 4.0, 1.0), 512, 8.0, 12);
        let c = CouplingData::from_basis(&b).unwrap();
        let avg = second_order_average(&c.a, b.energies());
        let (d, off) = avg.discrepancy(&c.alpha);
        assert!(d.iter().all(|x| *x < 1e-12), "{d:?}");
        assert!(off < 1e-12);
    }

    #[test]
    fn effmass_csv_columns() {
        let b = basis(PotentialSpec::harmonic(1.0, 1.0), 256, 8.0, 6);
        let c = CouplingData::from_basis(&b).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("p,E_p,alpha_p,tail_bound_p,trusted\n"));
        assert!(s.lines().nth(1).unwrap().ends_with(",true"));
        assert!(s.lines().last().unwrap().ends_with(",false"));
    }
}
