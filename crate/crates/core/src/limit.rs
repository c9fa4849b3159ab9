//! Time integration of the reduced multi-subband system.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{project_modes, synth_modes, Field3D, Repr, TailReport, XySpace};
use crate::fourier::Fft2;
use crate::io::{encode_modeset, WriterLane};
use crate::modes::ModeSet;
use crate::poisson::{selfconsistent_w, Kernel2D};
use crate::spectrum::EigenBasis;

/// Default threshold on the projected tail of the initial datum.
pub const INIT_TAIL_THRESHOLD: f64 = 1e-6;

/// Blow-up guard: halt once the B1 norm exceeds this multiple of its initial value.
pub const BLOWUP_FACTOR: f64 = 1e3;

/// `phi_p(0) = <psi0 chi_p>`; rejects data with too much mass outside the basis.
pub fn init_modes(psi0: &Field3D, basis: &Arc<EigenBasis>, threshold: f64) -> Result<(ModeSet, TailReport)> {
    psi0.check_finite()?;
    let (m, tail) = ModeSet::from_field(psi0, basis)?;
    if tail.fraction > threshold {
        return Err(Error::TailTooLarge {
            tail: tail.fraction,
            threshold,
        });
    }
    Ok((m, tail))
}

/// Strang splitting of `i d_t phi_p = -alpha_p d_x^2 phi_p - d_y^2 phi_p + W phi_p`.
#[derive(Debug, Clone)]
pub struct LimitStepper {
    fft: Fft2,
    dt: f64,
    kernel: Option<Kernel2D>,
    /// `exp(-i dt/2 (alpha_p xi^2 + eta^2))` per mode
    half: Vec<Vec<Complex64>>,
}

impl LimitStepper {
    /// `kernel = None` switches the self-consistent potential off.
    pub fn new(plane: &crate::grid::Grid2D, alpha: &[f64], dt: f64, kernel: Option<Kernel2D>) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::config("time.dt", format!("must be > 0, got {dt}")));
        }
        let ny = plane.ny();
        let half = alpha
            .iter()
            .map(|a| {
                (0..plane.len())
                    .map(|idx| {
                        let xi = plane.xi()[idx / ny];
                        let eta = plane.eta()[idx % ny];
                        let ph = -0.5 * dt * (a * xi * xi + eta * eta);
                        Complex64::new(ph.cos(), ph.sin())
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            fft: Fft2::new(plane.nx(), plane.ny()),
            dt,
            kernel,
            half,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn kernel(&self) -> Option<&Kernel2D> {
        self.kernel.as_ref()
    }

    pub fn fft(&self) -> &Fft2 {
        &self.fft
    }

    fn kinetic_half(&self, m: &mut ModeSet) {
        let fft = &self.fft;
        m.modes_mut()
            .par_iter_mut()
            .zip(self.half.par_iter())
            .for_each(|(v, ph)| {
                fft.forward(v, 1);
                v.iter_mut().zip(ph).for_each(|(a, b)| *a *= b);
                fft.inverse(v, 1);
            });
    }

    /// One step in place; `step` only labels a NaN failure.
    pub fn step(&self, m: &mut ModeSet, step: usize) -> Result<()> {
        if m.len() != self.half.len() {
            return Err(Error::SizeMismatch("stepper built for another mode count".into()));
        }
        self.kinetic_half(m);
        if let Some(k) = &self.kernel {
            // W from the post-half-kinetic state; |phi_p| is unchanged by the phase
            let w = selfconsistent_w(m, k)?.w;
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::NanAtStep { step });
            }
            let rot: Vec<Complex64> = w
                .iter()
                .map(|v| {
                    let ph = -self.dt * v;
                    Complex64::new(ph.cos(), ph.sin())
                })
                .collect();
            m.modes_mut()
                .par_iter_mut()
                .for_each(|v| v.iter_mut().zip(&rot).for_each(|(a, r)| *a *= r));
        }
        self.kinetic_half(m);
        m.t += self.dt;
        if m.check_finite().is_err() {
            return Err(Error::NanAtStep { step });
        }
        Ok(())
    }
}

/// Single step with a freshly built stepper.
pub fn step_limit(m: &ModeSet, dt: f64, alpha: &[f64], kernel: Option<&Kernel2D>) -> Result<ModeSet> {
    let s = LimitStepper::new(m.plane(), alpha, dt, kernel.cloned())?;
    let mut out = m.clone();
    s.step(&mut out, 0)?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Energies {
    /// `sum_p E_p mu_p`
    pub e_conf: f64,
    /// `kinetic_x + kinetic_y + interaction`
    pub e_tr: f64,
    /// `sum_p alpha_p ||d_x phi_p||^2`
    pub kinetic_x: f64,
    /// `sum_p ||d_y phi_p||^2`
    pub kinetic_y: f64,
    /// `1/2 sum W rho dA`
    pub interaction: f64,
    /// `||.||_{B^1}` of the state
    pub b1: f64,
}

/// Confinement and transport energies plus the B1 norm in one Fourier pass.
pub fn energies(m: &ModeSet, alpha: &[f64], kernel: Option<&Kernel2D>, fft: &Fft2) -> Result<Energies> {
    if alpha.len() != m.len() {
        return Err(Error::SizeMismatch("one alpha per mode expected".into()));
    }
    let plane = m.plane();
    let ny = plane.ny();
    let da = plane.area_element();
    let e = m.basis().energies();
    let per_mode: Vec<(f64, f64, f64, f64)> = m
        .modes()
        .par_iter()
        .map(|v| {
            let mut h = v.clone();
            fft.forward(&mut h, 1);
            let (mut mass, mut kx, mut ky, mut k2) = (0.0, 0.0, 0.0, 0.0);
            for (idx, c) in h.iter().enumerate() {
                let n = c.norm_sqr();
                let xi = plane.xi()[idx / ny];
                let eta = plane.eta()[idx % ny];
                mass += n;
                kx += xi * xi * n;
                ky += eta * eta * n;
                k2 += (xi * xi + eta * eta) * n;
            }
            (mass * da, kx * da, ky * da, k2 * da)
        })
        .collect();
    let (mut e_conf, mut kinetic_x, mut kinetic_y, mut b1sq) = (0.0, 0.0, 0.0, 0.0);
    for (p, (mass, kx, ky, k2)) in per_mode.iter().enumerate() {
        e_conf += e[p] * mass;
        kinetic_x += alpha[p] * kx;
        kinetic_y += ky;
        b1sq += (1.0 + e[p]) * mass + k2;
    }
    let interaction = match kernel {
        Some(k) => {
            let rho = m.density();
            let w = selfconsistent_w(m, k)?.w;
            0.5 * w.iter().zip(&rho).map(|(a, b)| a * b).sum::<f64>() * da
        }
        None => 0.0,
    };
    Ok(Energies {
        e_conf,
        e_tr: kinetic_x + kinetic_y + interaction,
        kinetic_x,
        kinetic_y,
        interaction,
        b1: b1sq.sqrt(),
    })
}

/// Time series written to `diag.csv`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: Vec<f64>,
    pub mass: Vec<f64>,
    pub masses: Vec<Vec<f64>>,
    pub e_conf: Vec<f64>,
    pub e_tr: Vec<f64>,
    pub kinetic_x: Vec<f64>,
    pub kinetic_y: Vec<f64>,
    pub interaction: Vec<f64>,
    pub b1: Vec<f64>,
}

impl DiagnosticsRecord {
    pub fn push(&mut self, m: &ModeSet, en: &Energies) {
        if let Some(last) = self.t.last() {
            debug_assert!(m.t > *last, "diagnostics out of order");
        }
        let masses = m.masses();
        self.t.push(m.t);
        self.mass.push(masses.iter().sum());
        self.masses.push(masses);
        self.e_conf.push(en.e_conf);
        self.e_tr.push(en.e_tr);
        self.kinetic_x.push(en.kinetic_x);
        self.kinetic_y.push(en.kinetic_y);
        self.interaction.push(en.interaction);
        self.b1.push(en.b1);
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// `max_t |s(t) - s(0)| / |s(0)|`.
    pub fn relative_drift(series: &[f64]) -> f64 {
        let Some(&s0) = series.first() else {
            return 0.0;
        };
        let d = series.iter().fold(0.0f64, |m, s| m.max((s - s0).abs()));
        if s0 == 0.0 {
            d
        } else {
            d / s0.abs()
        }
    }

    /// Largest relative drift of any per-mode mass.
    pub fn max_mode_mass_drift(&self) -> f64 {
        let Some(first) = self.masses.first() else {
            return 0.0;
        };
        let total: f64 = first.iter().sum();
        let mut worst = 0.0f64;
        for row in &self.masses {
            for (a, b) in row.iter().zip(first) {
                worst = worst.max((a - b).abs());
            }
        }
        if total > 0.0 {
            worst / total
        } else {
            worst
        }
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        let p_count = self.masses.first().map_or(0, |m| m.len());
        write!(w, "t,mass,e_conf,e_tr,kinetic_x,kinetic_y,interaction,b1")?;
        for p in 0..p_count {
            write!(w, ",mu_{p}")?;
        }
        writeln!(w)?;
        for i in 0..self.len() {
            write!(
                w,
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                self.t[i],
                self.mass[i],
                self.e_conf[i],
                self.e_tr[i],
                self.kinetic_x[i],
                self.kinetic_y[i],
                self.interaction[i],
                self.b1[i]
            )?;
            for mu in &self.masses[i] {
                write!(w, ",{mu:.17e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum HaltReason {
    Nan { step: usize },
    BlowUp { step: usize, ratio: f64 },
}

impl fmt::Display for HaltReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HaltReason::Nan { step } => write!(f, "NaN detected at step {step}"),
            HaltReason::BlowUp { step, ratio } => write!(
                f,
                "possible T_max reached: B1 norm grew by {ratio:.3e} at step {step}"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitParams {
    pub dt: f64,
    pub steps: usize,
    /// keep a snapshot every this many steps (0 keeps only the endpoints)
    pub snapshot_every: usize,
    /// append diagnostics every this many steps
    pub diag_every: usize,
    pub override_negative_alpha: bool,
}

#[derive(Debug, Clone)]
pub struct LimitRun {
    pub final_state: ModeSet,
    /// initial state first, then every `snapshot_every` steps
    pub snapshots: Vec<ModeSet>,
    pub diag: DiagnosticsRecord,
    pub halt: Option<HaltReason>,
    /// set when the density ever came within two cells of the box edge
    pub edge_warn: bool,
}

/// Integrate the limit system from `init`; snapshots go to `out` through the writer lane.
pub fn evolve_limit(
    init: &ModeSet,
    alpha: &[f64],
    kernel: Option<&Kernel2D>,
    params: &LimitParams,
    out: Option<(&WriterLane, &Path)>,
) -> Result<LimitRun> {
    if !params.override_negative_alpha {
        if let Some((p, value)) = alpha.iter().copied().enumerate().find(|(_, a)| *a < 0.0) {
            return Err(Error::NegativeAlpha { p, value });
        }
    }
    let stepper = LimitStepper::new(init.plane(), alpha, params.dt, kernel.cloned())?;
    let fft = stepper.fft().clone();
    let mut m = init.clone();
    let mut diag = DiagnosticsRecord::default();
    let e0 = energies(&m, alpha, kernel, &fft)?;
    diag.push(&m, &e0);
    let b1_0 = e0.b1;
    let mut snapshots = vec![m.clone()];
    let mut edge_warn = false;
    let send = |m: &ModeSet, k: usize| -> Result<()> {
        if let Some((lane, dir)) = out {
            lane.send(dir.join(format!("limit-{k:06}.cyqw")), encode_modeset(m)?)?;
        }
        Ok(())
    };
    send(&m, 0)?;
    let mut halt = None;
    for step in 1..=params.steps {
        let before = m.clone();
        if let Err(e) = stepper.step(&mut m, step) {
            match e {
                Error::NanAtStep { step } => {
                    halt = Some(HaltReason::Nan { step });
                    m = before;
                    break;
                }
                other => return Err(other),
            }
        }
        let last = step == params.steps;
        if params.diag_every > 0 && (step % params.diag_every == 0 || last) {
            let en = energies(&m, alpha, kernel, &fft)?;
            if let Some(k) = kernel {
                edge_warn |= k.plane().boundary_fraction(&m.density(), 2) > crate::poisson::EDGE_WARN;
            }
            diag.push(&m, &en);
            if b1_0 > 0.0 && en.b1 > BLOWUP_FACTOR * b1_0 {
                halt = Some(HaltReason::BlowUp {
                    step,
                    ratio: en.b1 / b1_0,
                });
                snapshots.push(m.clone());
                send(&m, step)?;
                break;
            }
        }
        if (params.snapshot_every > 0 && step % params.snapshot_every == 0) || last {
            snapshots.push(m.clone());
            send(&m, step)?;
        }
    }
    Ok(LimitRun {
        final_state: m,
        snapshots,
        diag,
        halt,
        edge_warn,
    })
}

const TWO_PI_HI: f64 = 6.283185307179586;
const TWO_PI_LO: f64 = 2.4492935982947064e-16;

/// `t E / eps^2` reduced mod 2 pi with double-double intermediate arithmetic.
pub fn mode_phase(t: f64, e: f64, eps: f64) -> f64 {
    let p = t * e;
    let pe = t.mul_add(e, -p);
    let s = eps * eps;
    let se = eps.mul_add(eps, -s);
    let q1 = p / s;
    let r = (-q1).mul_add(s, p) + pe - q1 * se;
    let q2 = r / s;
    let n = (q1 / TWO_PI_HI).floor();
    let red = (-n).mul_add(TWO_PI_HI, q1);
    (red - n * TWO_PI_LO + q2).rem_euclid(TWO_PI_HI)
}

/// `e^{-i t E_p / eps^2}`.
pub fn mode_rotation(t: f64, e: f64, eps: f64) -> Complex64 {
    let th = mode_phase(t, e, eps);
    Complex64::new(th.cos(), -th.sin())
}

/// `Psi_app = sum_p e^{-i t E_p/eps^2} phi_p chi_p` by rotating the mode coefficients.
pub fn psi_app(m: &ModeSet, eps: f64) -> Result<Field3D> {
    let mut r = m.clone();
    let e = m.basis().energies().to_vec();
    for (p, v) in r.modes_mut().iter_mut().enumerate() {
        let c = mode_rotation(m.t, e[p], eps);
        v.iter_mut().for_each(|x| *x *= c);
    }
    r.to_grid_field()
}

/// The same state built from the unfiltered grid field by applying `e^{-i t H_z/eps^2}`.
pub fn psi_app_from_filtered(m: &ModeSet, eps: f64) -> Result<Field3D> {
    let phi = m.to_grid_field()?;
    apply_confinement_flow(&phi, m.basis(), m.t, eps)
}

/// `e^{-i t H_z / eps^2}` on a grid-z field through its eigenmode expansion.
pub fn apply_confinement_flow(f: &Field3D, basis: &Arc<EigenBasis>, t: f64, eps: f64) -> Result<Field3D> {
    if f.repr() != Repr::GridZ || f.space() != XySpace::Physical {
        return Err(Error::SizeMismatch("confinement flow needs a physical grid-z field".into()));
    }
    let (mut c, _) = project_modes(f, basis)?;
    let rot: Vec<Complex64> = basis.energies().iter().map(|e| mode_rotation(t, *e, eps)).collect();
    let p_count = basis.len();
    for col in c.data_mut().chunks_exact_mut(p_count) {
        col.iter_mut().zip(&rot).for_each(|(v, r)| *v *= r);
    }
    synth_modes(&c)
}
