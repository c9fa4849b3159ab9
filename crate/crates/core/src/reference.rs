//! Direct integration of the full confined 3D system and its analytic harmonic benchmark.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use sha2::{Digest, Sha256};

use crate::eigen::SymBanded;
use crate::error::{Error, Result};
use crate::field::{fourier_xy, Field3D, Repr, XySpace};
use crate::fourier::Fft2;
use crate::grid::{wavenumbers, Grid1D, Grid2D};
use crate::limit::psi_app;
use crate::modes::ModeSet;
use crate::norms::{bm_norm, SobolevIndex};
use crate::poisson::{apply_f0, potential_f1, Kernel2D, Kernel3D};
use crate::spectrum::{confined_eigensystem, weyl_frequency, EigenBasis};

/// Fraction of `L_z` a potential-minimum shift may reach before a column is rejected.
pub const SHIFT_MARGIN: f64 = 0.5;

/// Eigenpairs of `-d_z^2 + V_c + (eps xi + B z)^2` for every x-wavevector of the plane.
#[derive(Debug, Clone)]
pub struct ShiftedBasisTable {
    eps: f64,
    b: f64,
    plane: Grid2D,
    zgrid: Grid1D,
    pz: usize,
    /// `lambda[k][p]`
    lambda: Vec<Vec<f64>>,
    /// `chi[k]` holds `pz` full-grid rows
    chi: Vec<Vec<f64>>,
    ops: Vec<SymBanded>,
    fingerprint: [u8; 32],
}

/// `-B eps xi / (a_w^2 + B^2)`: location of the shifted potential minimum.
fn minimum_shift(vc: &[f64], zgrid: &Grid1D, b: f64, eps: f64, xi: f64) -> f64 {
    let a = weyl_frequency(vc, zgrid);
    let w2 = a * a + b * b;
    if w2 == 0.0 {
        0.0
    } else {
        -b * eps * xi / w2
    }
}

impl ShiftedBasisTable {
    /// `pz = None` keeps the complete discrete basis (`n_z - 1` modes).
    pub fn build(basis: &EigenBasis, eps: f64, plane: &Grid2D, pz: Option<usize>) -> Result<Self> {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::config("epsilon", format!("must be > 0, got {eps}")));
        }
        let zgrid = basis.grid().clone();
        let n = zgrid.len();
        let pz = pz.unwrap_or(n - 1);
        if pz == 0 || pz > n - 1 {
            return Err(Error::SizeMismatch(format!("P_z = {pz} outside 1..={}", n - 1)));
        }
        let b = basis.b();
        let vc = basis.vc();
        let margin = SHIFT_MARGIN * zgrid.half_length();
        for &xi in plane.xi() {
            let shift = minimum_shift(vc, &zgrid, b, eps, xi);
            if shift.abs() > margin {
                return Err(Error::ShiftOutOfBox { xi, shift, margin });
            }
        }
        let order = basis.order();
        let solved: Vec<Result<(Vec<f64>, Vec<f64>, SymBanded)>> = plane
            .xi()
            .par_iter()
            .map(|&xi| {
                let total: Vec<f64> = vc
                    .iter()
                    .zip(zgrid.points())
                    .map(|(v, z)| {
                        let s = eps * xi + b * z;
                        v + s * s
                    })
                    .collect();
                let sys = confined_eigensystem(&total, &zgrid, pz, order, true).map_err(|e| Error::ShiftedSolve {
                    xi,
                    source: Box::new(e),
                })?;
                let flat = sys.chi.into_iter().flatten().collect();
                Ok((sys.energies, flat, sys.op))
            })
            .collect();
        let mut lambda = Vec::with_capacity(plane.nx());
        let mut chi = Vec::with_capacity(plane.nx());
        let mut ops = Vec::with_capacity(plane.nx());
        for r in solved {
            let (l, c, op) = r?;
            lambda.push(l);
            chi.push(c);
            ops.push(op);
        }
        let mut h = Sha256::new();
        h.update(b"shifted");
        h.update(basis.fingerprint());
        h.update(eps.to_le_bytes());
        h.update((pz as u64).to_le_bytes());
        for xi in plane.xi() {
            h.update(xi.to_le_bytes());
        }
        Ok(Self {
            eps,
            b,
            plane: plane.clone(),
            zgrid,
            pz,
            lambda,
            chi,
            ops,
            fingerprint: h.finalize().into(),
        })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }
    pub fn b(&self) -> f64 {
        self.b
    }
    pub fn plane(&self) -> &Grid2D {
        &self.plane
    }
    pub fn zgrid(&self) -> &Grid1D {
        &self.zgrid
    }
    pub fn pz(&self) -> usize {
        self.pz
    }
    pub fn fingerprint(&self) -> [u8; 32] {
        self.fingerprint
    }
    /// `lambda_p(xi_k)`
    pub fn lambda(&self, k: usize) -> &[f64] {
        &self.lambda[k]
    }
    pub fn chi(&self, k: usize, p: usize) -> &[f64] {
        let n = self.zgrid.len();
        &self.chi[k][p * n..(p + 1) * n]
    }

    /// Index of the `xi = 0` column.
    pub fn zero_column(&self) -> usize {
        0
    }

    /// Largest `|<chi_p, chi_q>| - delta_pq` over every column.
    pub fn orthonormality_defect(&self) -> f64 {
        let dz = self.zgrid.dz();
        let mut worst = 0.0f64;
        for k in 0..self.lambda.len() {
            for p in 0..self.pz {
                for q in 0..=p {
                    let d: f64 = self.chi(k, p).iter().zip(self.chi(k, q)).map(|(a, b)| a * b).sum::<f64>() * dz;
                    let want = if p == q { 1.0 } else { 0.0 };
                    worst = worst.max((d - want).abs());
                }
            }
        }
        worst
    }
}

/// Nonlinear substep of the full solver.
#[derive(Debug, Clone)]
pub enum Nonlinearity {
    None,
    F0(Kernel2D),
    F1(Kernel3D),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonlinearityKind {
    None,
    F0,
    F1,
}

impl Nonlinearity {
    pub fn build(kind: NonlinearityKind, plane: &Grid2D, zgrid: &Grid1D, eps: f64) -> Result<Self> {
        Ok(match kind {
            NonlinearityKind::None => Nonlinearity::None,
            NonlinearityKind::F0 => Nonlinearity::F0(Kernel2D::new(plane)),
            NonlinearityKind::F1 => Nonlinearity::F1(Kernel3D::new(plane, zgrid, eps)?),
        })
    }

    /// Potential `V(x, y, z)` (z fastest) generated by a physical grid-z field.
    pub fn potential(&self, f: &Field3D) -> Result<Option<Vec<f64>>> {
        match self {
            Nonlinearity::None => Ok(None),
            Nonlinearity::F1(k) => Ok(Some(potential_f1(f, k)?)),
            Nonlinearity::F0(k) => {
                let (_, w) = apply_f0(f, k)?;
                let nz = f.depth();
                let mut v = Vec::with_capacity(w.w.len() * nz);
                for x in &w.w {
                    v.extend(std::iter::repeat_n(*x, nz));
                }
                Ok(Some(v))
            }
        }
    }
}

/// Strang splitting with the exact linear flow `exp(-i t (H_eps/eps^2 - d_y^2))`.
#[derive(Debug, Clone)]
pub struct FullStepper {
    table: Arc<ShiftedBasisTable>,
    fft: Fft2,
    dt: f64,
    nonlinearity: Nonlinearity,
    /// `exp(-i dt/2 (lambda_p(xi)/eps^2 + eta^2)) - 1` per column and mode
    half: Vec<Complex64>,
    full: Vec<Complex64>,
}

fn phase_table(table: &ShiftedBasisTable, tau: f64) -> Vec<Complex64> {
    let plane = &table.plane;
    let (ny, pz) = (plane.ny(), table.pz);
    let inv = 1.0 / (table.eps * table.eps);
    let mut out = Vec::with_capacity(plane.len() * pz);
    for idx in 0..plane.len() {
        let (k, l) = (idx / ny, idx % ny);
        let eta = plane.eta()[l];
        for lam in &table.lambda[k] {
            let ph = -tau * (lam * inv + eta * eta);
            out.push(Complex64::new(ph.cos(), ph.sin()) - 1.0);
        }
    }
    out
}

impl FullStepper {
    pub fn new(table: Arc<ShiftedBasisTable>, dt: f64, nonlinearity: Nonlinearity) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::config("time.dt", format!("must be > 0, got {dt}")));
        }
        let plane = table.plane.clone();
        Ok(Self {
            fft: Fft2::new(plane.nx(), plane.ny()),
            half: phase_table(&table, 0.5 * dt),
            full: phase_table(&table, dt),
            table,
            dt,
            nonlinearity,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn table(&self) -> &Arc<ShiftedBasisTable> {
        &self.table
    }

    /// `dt (max lambda - min lambda) / eps^2`: phase swept per step by the stiff part.
    pub fn phase_per_step(&self) -> f64 {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for l in &self.table.lambda {
            for v in l {
                lo = lo.min(*v);
                hi = hi.max(*v);
            }
        }
        self.dt * (hi - lo) / (self.table.eps * self.table.eps)
    }

    /// Apply the linear flow with the per-mode `phase - 1` table; modes outside the table are left unchanged.
    fn linear(&self, f: &mut Field3D, phases: &[Complex64]) -> Result<()> {
        let spectral = fourier_xy(f, true, &self.fft)?;
        let mut data = spectral.into_data();
        let n = self.table.zgrid.len();
        let pz = self.table.pz;
        let ny = self.table.plane.ny();
        let dz = self.table.zgrid.dz();
        let table = &self.table;
        data.par_chunks_mut(n).enumerate().for_each(|(idx, col)| {
            let k = idx / ny;
            let chi = &table.chi[k];
            let ph = &phases[idx * pz..(idx + 1) * pz];
            let mut coef = vec![Complex64::default(); pz];
            for (p, c) in coef.iter_mut().enumerate() {
                let row = &chi[p * n..(p + 1) * n];
                let (mut re, mut im) = (0.0, 0.0);
                for j in 1..n {
                    re += row[j] * col[j].re;
                    im += row[j] * col[j].im;
                }
                *c = Complex64::new(re, im) * dz * ph[p];
            }
            for (p, c) in coef.iter().enumerate() {
                let row = &chi[p * n..(p + 1) * n];
                for j in 1..n {
                    col[j] += c * row[j];
                }
            }
        });
        let g = Field3D::from_parts(
            Repr::GridZ,
            XySpace::Fourier,
            f.plane().clone(),
            f.zgrid().clone(),
            None,
            data,
        )?;
        *f = fourier_xy(&g, false, &self.fft)?;
        Ok(())
    }

    /// Mass fraction of `f` outside the span of the tabulated shifted modes.
    pub fn tail_fraction(&self, f: &Field3D) -> Result<f64> {
        let spectral = fourier_xy(f, true, &self.fft)?;
        let n = self.table.zgrid.len();
        let pz = self.table.pz;
        let ny = self.table.plane.ny();
        let dz = self.table.zgrid.dz();
        let table = &self.table;
        let per_col: Vec<(f64, f64)> = spectral
            .data()
            .par_chunks(n)
            .enumerate()
            .map(|(idx, col)| {
                let chi = &table.chi[idx / ny];
                let total: f64 = col[1..].iter().map(|v| v.norm_sqr()).sum::<f64>() * dz;
                let mut kept = 0.0;
                for p in 0..pz {
                    let row = &chi[p * n..(p + 1) * n];
                    let c: Complex64 = (1..n).map(|j| col[j] * row[j]).sum::<Complex64>() * dz;
                    kept += c.norm_sqr();
                }
                (kept, total)
            })
            .collect();
        let (kept, total) = per_col.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
        if total == 0.0 {
            return Ok(0.0);
        }
        Ok(((total - kept) / total).max(0.0))
    }

    pub fn step(&self, f: &mut Field3D, step: usize) -> Result<()> {
        if f.repr() != Repr::GridZ || f.space() != XySpace::Physical {
            return Err(Error::SizeMismatch("full solver works on physical grid-z fields".into()));
        }
        if f.plane() != &self.table.plane || f.zgrid() != &self.table.zgrid {
            return Err(Error::SizeMismatch("field and shifted table use different grids".into()));
        }
        match &self.nonlinearity {
            Nonlinearity::None => self.linear(f, &self.full)?,
            nl => {
                self.linear(f, &self.half)?;
                let v = nl.potential(f)?.expect("nonlinear");
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NanAtStep { step });
                }
                let dt = self.dt;
                f.data_mut().par_iter_mut().zip(v.par_iter()).for_each(|(u, vv)| {
                    let ph = -dt * vv;
                    *u *= Complex64::new(ph.cos(), ph.sin());
                });
                self.linear(f, &self.half)?;
            }
        }
        if f.check_finite().is_err() {
            return Err(Error::NanAtStep { step });
        }
        Ok(())
    }

    /// `E = <Psi, H_eps Psi>/eps^2 + ||d_y Psi||^2 + 1/2 int V |Psi|^2`, using the banded operators directly.
    pub fn energy(&self, f: &Field3D) -> Result<f64> {
        let spectral = fourier_xy(f, true, &self.fft)?;
        let n = self.table.zgrid.len();
        let ny = self.table.plane.ny();
        let dz = self.table.zgrid.dz();
        let inv = 1.0 / (self.table.eps * self.table.eps);
        let table = &self.table;
        let plane = &self.table.plane;
        let per_col: Vec<f64> = spectral
            .data()
            .par_chunks(n)
            .enumerate()
            .map(|(idx, col)| {
                let k = idx / ny;
                let eta = plane.eta()[idx % ny];
                let op = &table.ops[k];
                let re: Vec<f64> = col[1..].iter().map(|v| v.re).collect();
                let im: Vec<f64> = col[1..].iter().map(|v| v.im).collect();
                let mut h = vec![0.0; n - 1];
                op.matvec(&re, &mut h);
                let mut q: f64 = h.iter().zip(&re).map(|(a, b)| a * b).sum();
                op.matvec(&im, &mut h);
                q += h.iter().zip(&im).map(|(a, b)| a * b).sum::<f64>();
                let l2: f64 = col.iter().map(|v| v.norm_sqr()).sum();
                (q * inv + eta * eta * l2) * dz
            })
            .collect();
        let mut e = per_col.iter().sum::<f64>() * plane.area_element();
        if let Some(v) = self.nonlinearity.potential(f)? {
            let s: f64 = v.iter().zip(f.data()).map(|(a, u)| a * u.norm_sqr()).sum();
            e += 0.5 * s * f.weight();
        }
        Ok(e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FullParams {
    pub dt: f64,
    pub steps: usize,
    pub snapshot_every: usize,
    /// mass and energy cadence; 0 records only the endpoints
    pub diag_every: usize,
}

#[derive(Debug, Clone)]
pub struct FullRun {
    /// `(t, Psi(t))`, initial datum first (empty when streamed to an observer)
    pub snapshots: Vec<(f64, Field3D)>,
    pub t: Vec<f64>,
    pub mass: Vec<f64>,
    pub energy: Vec<f64>,
    pub halt: Option<String>,
    pub phase_per_step: f64,
    pub final_state: Option<Field3D>,
}

impl FullRun {
    pub fn final_state(&self) -> &Field3D {
        self.final_state.as_ref().expect("run finished")
    }

    /// Largest per-step relative mass change.
    pub fn max_step_mass_drift(&self) -> f64 {
        let m0 = self.mass.first().copied().unwrap_or(0.0);
        if m0 == 0.0 {
            return 0.0;
        }
        self.mass.windows(2).fold(0.0f64, |a, w| a.max((w[1] - w[0]).abs() / m0))
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,mass,energy")?;
        for i in 0..self.t.len() {
            writeln!(w, "{:.17e},{:.17e},{:.17e}", self.t[i], self.mass[i], self.energy[i])?;
        }
        Ok(())
    }
}

/// Integrate the full system, keeping every snapshot in memory.
pub fn evolve_full(psi0: &Field3D, stepper: &FullStepper, params: &FullParams) -> Result<FullRun> {
    let mut kept = Vec::new();
    let mut run = evolve_full_with(psi0, stepper, params, &mut |t, f| {
        kept.push((t, f.clone()));
        Ok(())
    })?;
    run.snapshots = kept;
    Ok(run)
}

/// Integrate the full system, handing each snapshot `(t, Psi)` to `observer`
/// instead of storing it; mass and energy are recorded every `diag_every` steps.
pub fn evolve_full_with(
    psi0: &Field3D,
    stepper: &FullStepper,
    params: &FullParams,
    observer: &mut dyn FnMut(f64, &Field3D) -> Result<()>,
) -> Result<FullRun> {
    let mut f = psi0.clone();
    observer(0.0, &f)?;
    let mut run = FullRun {
        snapshots: Vec::new(),
        t: vec![0.0],
        mass: vec![crate::norms::l2_norm(&f)?.powi(2)],
        energy: vec![stepper.energy(&f)?],
        halt: None,
        phase_per_step: stepper.phase_per_step(),
        final_state: None,
    };
    for step in 1..=params.steps {
        if let Err(e) = stepper.step(&mut f, step) {
            match e {
                Error::NanAtStep { step } => {
                    run.halt = Some(format!("NaN detected at step {step}"));
                    break;
                }
                other => return Err(other),
            }
        }
        let last = step == params.steps;
        let t = step as f64 * params.dt;
        if (params.diag_every > 0 && step % params.diag_every == 0) || last {
            run.t.push(t);
            run.mass.push(crate::norms::l2_norm(&f)?.powi(2));
            run.energy.push(stepper.energy(&f)?);
        }
        if (params.snapshot_every > 0 && step % params.snapshot_every == 0) || last {
            observer(t, &f)?;
        }
    }
    run.final_state = Some(f);
    Ok(run)
}

/// Normalized Hermite functions of `-d^2 + w^2 z^2` (energies `w (2n + 1)`) on the grid.
pub fn hermite_functions(w: f64, grid: &Grid1D, count: usize) -> Vec<Vec<f64>> {
    let sw = w.sqrt();
    let norm = (w / PI).powf(0.25);
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(count);
    for n in 0..count {
        let v: Vec<f64> = grid
            .points()
            .iter()
            .enumerate()
            .map(|(j, z)| {
                let s = sw * z;
                match n {
                    0 => norm * (-0.5 * s * s).exp(),
                    1 => std::f64::consts::SQRT_2 * s * out[0][j],
                    _ => {
                        let nf = n as f64;
                        (2.0 / nf).sqrt() * s * out[n - 1][j] - ((nf - 1.0) / nf).sqrt() * out[n - 2][j]
                    }
                }
            })
            .collect();
        out.push(v);
    }
    out
}

/// Spectral translation `f(z) -> f(z + d)` of every z column of a Fourier-xy field.
fn shift_columns(data: &mut [Complex64], plane: &Grid2D, zgrid: &Grid1D, shift_of_xi: &(dyn Fn(f64) -> f64 + Sync)) {
    let n = zgrid.len();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let kz = wavenumbers(n, 2.0 * zgrid.half_length());
    let ny = plane.ny();
    data.par_chunks_mut(n).enumerate().for_each(|(idx, col)| {
        let d = shift_of_xi(plane.xi()[idx / ny]);
        if d == 0.0 {
            return;
        }
        fwd.process(col);
        for (c, k) in col.iter_mut().zip(&kz) {
            *c *= Complex64::from_polar(1.0 / n as f64, k * d);
        }
        inv.process(col);
    });
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicBenchmark {
    pub a: f64,
    pub b: f64,
    pub eps: f64,
    /// number of Hermite functions in the expansion
    pub hermite_count: usize,
}

/// Exact solution of the linear harmonic problem at each of `times`.
///
/// `Theta` maps `Psi_hat(xi, y, z)` to `Psi_hat(xi, y, z - s eps xi)` with
/// `s = B / (a^2 + B^2)`, the sign matching the forward transform `e^{-i xi x}`.
/// In the shifted frame the z flow is harmonic with frequency `sqrt(a^2 + B^2)`
/// and the in-plane flow is `exp(-i t (alpha xi^2 + eta^2))`.
pub fn analytic_harmonic_benchmark(
    psi0: &Field3D,
    bench: &HarmonicBenchmark,
    times: &[f64],
) -> Result<Vec<Field3D>> {
    if psi0.repr() != Repr::GridZ || psi0.space() != XySpace::Physical {
        return Err(Error::SizeMismatch("benchmark needs a physical grid-z datum".into()));
    }
    let plane = psi0.plane().clone();
    let zgrid = psi0.zgrid().clone();
    let (a, b, eps) = (bench.a, bench.b, bench.eps);
    let w2 = a * a + b * b;
    let w = w2.sqrt();
    let s = b / w2;
    let alpha = a * a / w2;
    let margin = SHIFT_MARGIN * zgrid.half_length();
    let fft = Fft2::new(plane.nx(), plane.ny());
    let mut hat = fourier_xy(psi0, true, &fft)?.into_data();
    let n = zgrid.len();
    let ny = plane.ny();
    let total: f64 = hat.iter().map(|v| v.norm_sqr()).sum();
    for (idx, col) in hat.chunks_exact(n).enumerate() {
        let mass: f64 = col.iter().map(|v| v.norm_sqr()).sum();
        let xi = plane.xi()[idx / ny];
        let shift = s * eps * xi;
        if mass > 1e-20 * total && shift.abs() > margin {
            return Err(Error::ShiftOutOfBox { xi, shift, margin });
        }
    }
    shift_columns(&mut hat, &plane, &zgrid, &|xi| -s * eps * xi);
    let herm = hermite_functions(w, &zgrid, bench.hermite_count);
    let dz = zgrid.dz();
    // expansion coefficients and the left-over part of each column
    let coefs: Vec<Vec<Complex64>> = hat
        .par_chunks(n)
        .map(|col| {
            herm.iter()
                .map(|h| col.iter().zip(h).map(|(v, x)| v * x).sum::<Complex64>() * dz)
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let mut data = hat.clone();
        data.par_chunks_mut(n).enumerate().for_each(|(idx, col)| {
            let xi = plane.xi()[idx / ny];
            let eta = plane.eta()[idx % ny];
            let plane_phase = t * (alpha * xi * xi + eta * eta);
            for (m, (c, h)) in coefs[idx].iter().zip(&herm).enumerate() {
                let th = crate::limit::mode_phase(t, w * (2 * m + 1) as f64, eps) + plane_phase;
                let d = c * (Complex64::new(th.cos(), -th.sin()) - 1.0);
                for j in 0..n {
                    col[j] += d * h[j];
                }
            }
        });
        shift_columns(&mut data, &plane, &zgrid, &|xi| s * eps * xi);
        let f = Field3D::from_parts(Repr::GridZ, XySpace::Fourier, plane.clone(), zgrid.clone(), None, data)?;
        out.push(fourier_xy(&f, false, &fft)?);
    }
    Ok(out)
}

/// `e(t) = ||Psi(t) - Psi_app(t)||_{B^1}` at matched snapshot times.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCurve {
    pub eps: f64,
    pub t: Vec<f64>,
    pub e: Vec<f64>,
    pub sup: f64,
}

pub fn theorem_error(
    full: &[(f64, Field3D)],
    limit: &[ModeSet],
    basis: &EigenBasis,
    eps: f64,
) -> Result<ErrorCurve> {
    if full.len() != limit.len() {
        return Err(Error::TimeMismatch(format!(
            "{} full snapshots vs {} limit snapshots",
            full.len(),
            limit.len()
        )));
    }
    let mut t = Vec::with_capacity(full.len());
    let mut e = Vec::with_capacity(full.len());
    for ((tf, f), m) in full.iter().zip(limit) {
        let fft = Fft2::new(f.plane().nx(), f.plane().ny());
        e.push(snapshot_error(f, *tf, m, basis, eps, &fft)?);
        t.push(*tf);
    }
    Ok(ErrorCurve::from_samples(eps, t, e))
}

/// `e(t) = ||Psi(t) - Psi_app(t)||_{B^1}` for one snapshot pair.
pub fn snapshot_error(full: &Field3D, t: f64, limit: &ModeSet, basis: &EigenBasis, eps: f64, fft: &Fft2) -> Result<f64> {
    if (t - limit.t).abs() > 1e-9 * t.abs().max(1.0) {
        return Err(Error::TimeMismatch(format!("full t = {t}, limit t = {}", limit.t)));
    }
    let app = psi_app(limit, eps)?;
    let d = full.sub(&app)?;
    Ok(bm_norm(&d, SobolevIndex::new(1)?, basis, fft)?.value)
}

impl ErrorCurve {
    pub fn from_samples(eps: f64, t: Vec<f64>, e: Vec<f64>) -> Self {
        let sup = e.iter().fold(0.0f64, |a, b| a.max(*b));
        Self { eps, t, e, sup }
    }

    /// Rows `eps,t,e` for `error.csv`.
    pub fn write_rows<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        for (t, e) in self.t.iter().zip(&self.e) {
            writeln!(w, "{:.17e},{:.17e},{:.17e}", self.eps, t, e)?;
        }
        Ok(())
    }
}
