mod common;

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use proptest::prelude::*;

use common::{harmonic, mode_field, plane_gaussian, rel, separable};
use cyqw::fourier::Fft2;
use cyqw::grid::{Grid1D, Grid2D};
use cyqw::limit::{
    energies, evolve_limit, init_modes, psi_app, psi_app_from_filtered, step_limit, LimitParams, LimitStepper,
};
use cyqw::modes::ModeSet;
use cyqw::poisson::Kernel2D;
use cyqw::spectrum::EigenBasis;
use cyqw::subband::CouplingData;
use cyqw::Error;

fn setup() -> (Arc<EigenBasis>, Grid2D, Vec<f64>) {
    let basis = harmonic(1.0, 1.0, 6.0, 128, 4);
    let plane = Grid2D::new(12.8, 12.8, 32, 32).unwrap();
    let alpha = CouplingData::from_basis(&basis).unwrap().alpha;
    (basis, plane, alpha)
}

fn two_mode_state(basis: &Arc<EigenBasis>, plane: &Grid2D) -> ModeSet {
    let mut modes = vec![vec![Complex64::default(); plane.len()]; basis.len()];
    modes[0] = plane_gaussian(plane, (0.0, 0.0), 1.0, (0.5, 0.0));
    modes[1] = plane_gaussian(plane, (0.5, -0.3), 0.9, (0.0, 0.4)).iter().map(|v| v * 0.6).collect();
    ModeSet::from_modes(plane, basis, modes).unwrap()
}

fn params(dt: f64, steps: usize) -> LimitParams {
    LimitParams {
        dt,
        steps,
        snapshot_every: 0,
        diag_every: 1,
        override_negative_alpha: false,
    }
}

fn distance(a: &ModeSet, b: &ModeSet) -> f64 {
    let da = a.plane().area_element();
    a.modes()
        .iter()
        .flatten()
        .zip(b.modes().iter().flatten())
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt()
        * da.sqrt()
}

/// `int exp(-z^2 / (2 s^2)) H_p(z)` on a fine grid with the analytic Hermite function.
fn hermite_overlap(w: f64, s: f64, p: usize) -> f64 {
    let g = Grid1D::new(12.0, 1 << 14).unwrap();
    let h = cyqw::reference::hermite_functions(w, &g, p + 1);
    g.points().iter().zip(&h[p]).map(|(z, v)| (-z * z / (2.0 * s * s)).exp() * v).sum::<f64>() * g.dz()
}

#[test]
fn single_mode_datum_populates_one_mode() {
    let (basis, plane, _) = setup();
    let g = plane_gaussian(&plane, (0.0, 0.0), 1.0, (0.0, 0.0));
    let (m, _) = init_modes(&mode_field(&plane, &basis, &g, 0), &basis, 1e-6).unwrap();
    let masses = m.masses();
    assert!(masses[0] > 0.1);
    assert!(masses[1..].iter().all(|v| *v < 1e-20 * masses[0]));
}

#[test]
fn equal_superposition_splits_mass() {
    let (basis, plane, _) = setup();
    let g = plane_gaussian(&plane, (0.0, 0.0), 1.0, (0.0, 0.0));
    let h: Vec<f64> = basis.chi(0).iter().zip(basis.chi(1)).map(|(a, b)| (a + b) / 2f64.sqrt()).collect();
    let (m, _) = init_modes(&separable(&plane, &basis, &g, &h), &basis, 1e-6).unwrap();
    let g2: f64 = g.iter().map(|v| v.norm_sqr()).sum::<f64>() * plane.area_element();
    let masses = m.masses();
    assert!(rel(masses[0], 0.5 * g2) < 1e-12 && rel(masses[1], 0.5 * g2) < 1e-12);
}

#[test]
fn gaussian_datum_masses_match_hermite_quadrature() {
    let basis = harmonic(1.0, 1.0, 8.0, 512, 6);
    let plane = Grid2D::new(12.8, 12.8, 32, 32).unwrap();
    let g = plane_gaussian(&plane, (0.0, 0.0), 1.0, (0.0, 0.0));
    let s = 0.8;
    let h: Vec<f64> = basis.grid().points().iter().map(|z| (-z * z / (2.0 * s * s)).exp()).collect();
    let (m, tail) = init_modes(&separable(&plane, &basis, &g, &h), &basis, 1e-3).unwrap();
    let g2: f64 = g.iter().map(|v| v.norm_sqr()).sum::<f64>() * plane.area_element();
    let w = 2f64.sqrt();
    for p in 0..6 {
        let want = g2 * hermite_overlap(w, s, p).powi(2);
        let got = m.masses()[p];
        if p % 2 == 1 {
            assert!(got < 1e-20, "{p}: {got}");
        } else {
            assert!(rel(got, want) < 1e-8, "{p}: {got} vs {want}");
        }
    }
    assert!(tail.fraction < 1e-3);
}

#[test]
fn free_flow_matches_anisotropic_gaussian_spreading() {
    let (basis, _, _) = setup();
    let plane = Grid2D::new(25.6, 25.6, 128, 128).unwrap();
    let alpha = [0.5, 0.5, 0.5, 0.5];
    let p = 2;
    let s2 = 1.0;
    let mut modes = vec![vec![Complex64::default(); plane.len()]; 4];
    modes[p] = plane_gaussian(&plane, (0.0, 0.0), 1.0, (0.0, 0.0));
    let mut m = ModeSet::from_modes(&plane, &basis, modes).unwrap();
    let stepper = LimitStepper::new(&plane, &alpha, 0.1, None).unwrap();
    for k in 0..10 {
        stepper.step(&mut m, k).unwrap();
    }
    // i u_t = -D u_xx maps the variance s^2 to s^2 + 2 i D t
    let t = 1.0;
    let i = Complex64::new(0.0, 1.0);
    let sx = s2 + 2.0 * i * alpha[p] * t;
    let sy = s2 + 2.0 * i * t;
    let mut worst = 0.0f64;
    for (idx, v) in m.mode(p).iter().enumerate() {
        let (x, y) = (plane.x(idx / 128), plane.y(idx % 128));
        let want = (s2 / sx).sqrt() * (-x * x / (2.0 * sx)).exp() * (s2 / sy).sqrt() * (-y * y / (2.0 * sy)).exp();
        worst = worst.max((v - want).norm());
    }
    assert!(worst < 1e-6, "{worst}");
    assert!((m.t - 1.0).abs() < 1e-12);
}

#[test]
fn zero_state_stays_zero() {
    let (basis, plane, alpha) = setup();
    let k = Kernel2D::new(&plane);
    let out = step_limit(&ModeSet::zeros(&plane, &basis), 0.05, &alpha, Some(&k)).unwrap();
    assert!(out.modes().iter().flatten().all(|v| *v == Complex64::default()));
}

#[test]
fn energies_of_simple_states() {
    let (basis, plane, alpha) = setup();
    let fft = Fft2::new(32, 32);
    let k = Kernel2D::new(&plane);
    let e = energies(&ModeSet::zeros(&plane, &basis), &alpha, Some(&k), &fft).unwrap();
    assert_eq!((e.e_conf, e.e_tr), (0.0, 0.0));
    let mut modes = vec![vec![Complex64::default(); plane.len()]; 4];
    modes[3] = plane_gaussian(&plane, (0.0, 0.0), 1.0, (1.0, 0.0));
    let m = ModeSet::from_modes(&plane, &basis, modes).unwrap();
    let e = energies(&m, &alpha, Some(&k), &fft).unwrap();
    assert!(rel(e.e_conf, basis.energy(3) * m.masses()[3]) < 1e-13);
}

#[test]
fn nonlinear_run_conserves_both_energies() {
    let (basis, plane, alpha) = setup();
    let k = Kernel2D::new(&plane);
    let m = two_mode_state(&basis, &plane);
    let run = evolve_limit(&m, &alpha, Some(&k), &params(1e-3, 1000), None).unwrap();
    assert!(run.halt.is_none());
    let d = &run.diag;
    let drift = |s: &[f64]| s.iter().map(|v| (v - s[0]).abs()).fold(0.0, f64::max) / s[0].abs();
    assert!(drift(&d.e_conf) < 1e-10);
    assert!(drift(&d.e_tr) < 1e-6, "{}", drift(&d.e_tr));
    assert!(d.max_mode_mass_drift() < 1e-10);
}

#[test]
fn coercive_harmonic_run_reaches_the_final_time() {
    let (basis, plane, alpha) = setup();
    let k = Kernel2D::new(&plane);
    let run = evolve_limit(&two_mode_state(&basis, &plane), &alpha, Some(&k), &params(0.05, 60), None).unwrap();
    assert!(run.halt.is_none());
    assert!((run.final_state.t - 3.0).abs() < 1e-12);
}

#[test]
fn splitting_is_second_order() {
    let (basis, plane, alpha) = setup();
    let k = Kernel2D::new(&plane);
    let m = two_mode_state(&basis, &plane);
    let mut ends = Vec::new();
    for (dt, steps) in [(0.04, 25), (0.02, 50), (0.01, 100)] {
        ends.push(evolve_limit(&m, &alpha, Some(&k), &params(dt, steps), None).unwrap().final_state);
    }
    let r = distance(&ends[0], &ends[1]) / distance(&ends[1], &ends[2]);
    assert!((3.5..=4.5).contains(&r), "{r}");
}

#[test]
fn linear_flow_keeps_fourier_moduli() {
    let (basis, plane, alpha) = setup();
    let fft = Fft2::new(32, 32);
    let m = two_mode_state(&basis, &plane);
    let run = evolve_limit(&m, &alpha, None, &params(0.05, 20), None).unwrap();
    for (a, b) in m.modes().iter().zip(run.final_state.modes()) {
        let (mut ha, mut hb) = (a.clone(), b.clone());
        fft.forward(&mut ha, 1);
        fft.forward(&mut hb, 1);
        for (x, y) in ha.iter().zip(&hb) {
            assert!((x.norm() - y.norm()).abs() < 1e-12);
        }
    }
}

#[test]
fn negative_alpha_is_refused_unless_overridden() {
    let (basis, plane, _) = setup();
    let m = two_mode_state(&basis, &plane);
    let alpha = [0.5, -0.1, 0.5, 0.5];
    let err = evolve_limit(&m, &alpha, None, &params(0.01, 2), None).unwrap_err();
    assert!(matches!(err, Error::NegativeAlpha { p: 1, .. }));
    let mut p = params(0.01, 2);
    p.override_negative_alpha = true;
    assert!(evolve_limit(&m, &alpha, None, &p, None).is_ok());
}

#[test]
fn filtered_and_unfiltered_outputs_agree() {
    let (basis, plane, alpha) = setup();
    let k = Kernel2D::new(&plane);
    let run = evolve_limit(&two_mode_state(&basis, &plane), &alpha, Some(&k), &params(0.02, 10), None).unwrap();
    let a = psi_app(&run.final_state, 0.1).unwrap();
    let b = psi_app_from_filtered(&run.final_state, 0.1).unwrap();
    let worst = a.data().iter().zip(b.data()).fold(0.0f64, |m, (x, y)| m.max((x - y).norm()));
    assert!(worst < 1e-12, "{worst}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn steps_preserve_every_mode_mass(dt in 0.005f64..0.1) {
        let (basis, plane, alpha) = setup();
        let k = Kernel2D::new(&plane);
        let m = two_mode_state(&basis, &plane);
        let out = step_limit(&m, dt, &alpha, Some(&k)).unwrap();
        for (a, b) in m.masses().iter().zip(out.masses()) {
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300));
        }
    }

    #[test]
    fn global_phase_commutes_with_the_flow(theta in 0.0f64..(2.0 * PI)) {
        let (basis, plane, alpha) = setup();
        let k = Kernel2D::new(&plane);
        let m = two_mode_state(&basis, &plane);
        let c = Complex64::from_polar(1.0, theta);
        let mut rotated = m.clone();
        rotated.modes_mut().iter_mut().flatten().for_each(|v| *v *= c);
        let a = evolve_limit(&m, &alpha, Some(&k), &params(0.02, 5), None).unwrap().final_state;
        let b = evolve_limit(&rotated, &alpha, Some(&k), &params(0.02, 5), None).unwrap().final_state;
        for (x, y) in a.modes().iter().flatten().zip(b.modes().iter().flatten()) {
            prop_assert!((x * c - y).norm() < 1e-13);
        }
    }
}
