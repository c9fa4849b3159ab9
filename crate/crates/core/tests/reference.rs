mod common;

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use proptest::prelude::*;

use common::{harmonic, plane_gaussian, rel, separable};
use cyqw::field::Field3D;
use cyqw::grid::Grid2D;
use cyqw::limit::{mode_phase, psi_app};
use cyqw::modes::ModeSet;
use cyqw::norms::l2_norm;
use cyqw::reference::{
    analytic_harmonic_benchmark, evolve_full, theorem_error, FullParams, FullStepper, HarmonicBenchmark, Nonlinearity,
    NonlinearityKind, ShiftedBasisTable,
};
use cyqw::spectrum::EigenBasis;

fn datum(plane: &Grid2D, basis: &EigenBasis) -> Field3D {
    let g = plane_gaussian(plane, (0.0, 0.0), 1.0, (0.0, 0.0));
    let h: Vec<f64> = basis.chi(0).iter().zip(basis.chi(1)).map(|(a, b)| a + 0.5 * b).collect();
    separable(plane, basis, &g, &h)
}

fn stepper(basis: &EigenBasis, plane: &Grid2D, eps: f64, dt: f64, kind: NonlinearityKind) -> FullStepper {
    let table = Arc::new(ShiftedBasisTable::build(basis, eps, plane, None).unwrap());
    let nl = Nonlinearity::build(kind, plane, basis.grid(), eps).unwrap();
    FullStepper::new(table, dt, nl).unwrap()
}

fn run(st: &FullStepper, f: &Field3D, dt: f64, steps: usize) -> cyqw::reference::FullRun {
    let p = FullParams {
        dt,
        steps,
        snapshot_every: 0,
        diag_every: 1,
    };
    evolve_full(f, st, &p).unwrap()
}

fn l2_dist(a: &Field3D, b: &Field3D) -> f64 {
    l2_norm(&a.sub(b).unwrap()).unwrap()
}

#[test]
fn zero_wavevector_column_is_the_confinement_basis() {
    let basis = harmonic(1.0, 1.0, 8.0, 128, 6);
    let plane = Grid2D::new(8.0, 8.0, 8, 4).unwrap();
    let t = ShiftedBasisTable::build(&basis, 0.2, &plane, Some(10)).unwrap();
    let k = t.zero_column();
    for p in 0..6 {
        assert!(rel(t.lambda(k)[p], basis.energy(p)) < 1e-10);
        let d = t.chi(k, p).iter().zip(basis.chi(p)).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(d < 1e-10, "{p}: {d}");
    }
}

#[test]
fn harmonic_shifted_levels_complete_the_square() {
    let (a, b, eps) = (1.0, 1.0, 1.0);
    let basis = harmonic(a, b, 14.0, 1024, 6);
    let plane = Grid2D::new(8.0, 8.0, 8, 4).unwrap();
    let t = ShiftedBasisTable::build(&basis, eps, &plane, Some(6)).unwrap();
    let w2: f64 = a * a + b * b;
    for (k, xi) in plane.xi().iter().enumerate() {
        for p in 0..6 {
            let want = (2 * p + 1) as f64 * w2.sqrt() + eps * eps * xi * xi * a * a / w2;
            assert!(rel(t.lambda(k)[p], want) < 1e-8, "xi={xi} p={p}: {} vs {want}", t.lambda(k)[p]);
        }
    }
    assert!(t.orthonormality_defect() < 1e-10);
}

#[test]
fn field_free_shift_is_additive() {
    let basis = harmonic(1.0, 0.0, 8.0, 128, 5);
    let plane = Grid2D::new(6.0, 6.0, 8, 4).unwrap();
    let eps = 0.4;
    let t = ShiftedBasisTable::build(&basis, eps, &plane, Some(5)).unwrap();
    for (k, xi) in plane.xi().iter().enumerate() {
        for p in 0..5 {
            assert!(rel(t.lambda(k)[p], basis.energy(p) + eps * eps * xi * xi) < 1e-10);
        }
    }
}

#[test]
fn interacting_run_conserves_mass_and_energy() {
    let basis = harmonic(1.0, 1.0, 6.0, 128, 4);
    let plane = Grid2D::new(12.8, 12.8, 16, 16).unwrap();
    let eps = 0.1;
    let dt = 1e-3;
    let st = stepper(&basis, &plane, eps, dt, NonlinearityKind::F1);
    let r = run(&st, &datum(&plane, &basis), dt, 500);
    assert!(r.halt.is_none());
    assert!(r.max_step_mass_drift() < 1e-12, "{}", r.max_step_mass_drift());
    let e0 = r.energy[0];
    let drift = r.energy.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max) / e0.abs();
    assert!(drift < 1e-5, "{drift}");
}

#[test]
fn linear_flow_is_independent_of_the_step() {
    let basis = harmonic(1.0, 1.0, 6.0, 128, 4);
    let plane = Grid2D::new(12.8, 12.8, 16, 16).unwrap();
    let eps = 0.1;
    let f = datum(&plane, &basis);
    let a = run(&stepper(&basis, &plane, eps, 0.05, NonlinearityKind::None), &f, 0.05, 10);
    let b = run(&stepper(&basis, &plane, eps, 0.02, NonlinearityKind::None), &f, 0.02, 25);
    let d = l2_dist(a.final_state(), b.final_state()) / l2_norm(&f).unwrap();
    assert!(d < 1e-10, "{d}");
}

#[test]
fn linear_run_matches_the_analytic_benchmark() {
    let basis = harmonic(1.0, 1.0, 8.0, 256, 4);
    let plane = Grid2D::new(12.8, 12.8, 16, 16).unwrap();
    let eps = 0.2;
    let dt = 0.25;
    let f = datum(&plane, &basis);
    let r = run(&stepper(&basis, &plane, eps, dt, NonlinearityKind::None), &f, dt, 2);
    let bench = HarmonicBenchmark {
        a: 1.0,
        b: 1.0,
        eps,
        hermite_count: 40,
    };
    let exact = analytic_harmonic_benchmark(&f, &bench, &[0.5]).unwrap();
    let d = l2_dist(r.final_state(), &exact[0]) / l2_norm(&f).unwrap();
    assert!(d < 1e-6, "{d}");
}

#[test]
fn benchmark_at_time_zero_returns_the_datum() {
    let basis = harmonic(1.0, 1.0, 8.0, 96, 4);
    let plane = Grid2D::new(12.8, 12.8, 16, 16).unwrap();
    let f = datum(&plane, &basis);
    let bench = HarmonicBenchmark {
        a: 1.0,
        b: 1.0,
        eps: 0.3,
        hermite_count: 16,
    };
    let out = analytic_harmonic_benchmark(&f, &bench, &[0.0]).unwrap();
    assert!(l2_dist(&out[0], &f) < 1e-12 * l2_norm(&f).unwrap());
}

#[test]
fn field_free_benchmark_is_a_product_flow() {
    let basis = harmonic(1.0, 0.0, 8.0, 128, 2);
    let plane = Grid2D::new(25.6, 25.6, 64, 64).unwrap();
    let g = plane_gaussian(&plane, (0.0, 0.0), 1.0, (0.0, 0.0));
    let f = separable(&plane, &basis, &g, basis.chi(0));
    let (eps, t) = (0.25, 0.5);
    let bench = HarmonicBenchmark {
        a: 1.0,
        b: 0.0,
        eps,
        hermite_count: 8,
    };
    let out = analytic_harmonic_benchmark(&f, &bench, &[t]).unwrap();
    // free Gaussian spreading in both directions times the ground-state phase
    let i = Complex64::new(0.0, 1.0);
    let sig = 1.0 + 2.0 * i * t;
    let th = mode_phase(t, 1.0, eps);
    let phase = Complex64::from_polar(1.0, -th);
    let want = Field3D::from_fn(&plane, basis.grid(), |x, y, z| {
        let h = PI.powf(-0.25) * (-0.5 * z * z).exp();
        phase / sig * (-(x * x + y * y) / (2.0 * sig)).exp() * h
    });
    let d = l2_dist(&out[0], &want) / l2_norm(&f).unwrap();
    assert!(d < 1e-6, "{d}");
}

#[test]
fn identical_trajectories_have_zero_error() {
    let basis = harmonic(1.0, 1.0, 6.0, 128, 3);
    let plane = Grid2D::new(8.0, 8.0, 16, 16).unwrap();
    let eps = 0.1;
    let mut modes = vec![vec![Complex64::default(); plane.len()]; 3];
    modes[0] = plane_gaussian(&plane, (0.0, 0.0), 1.0, (0.5, 0.0));
    modes[2] = plane_gaussian(&plane, (0.3, 0.0), 0.8, (0.0, 0.0));
    let mut snaps = Vec::new();
    let mut full = Vec::new();
    for t in [0.0, 0.25, 0.5] {
        let mut m = ModeSet::from_modes(&plane, &basis, modes.clone()).unwrap();
        m.t = t;
        full.push((t, psi_app(&m, eps).unwrap()));
        snaps.push(m);
    }
    let curve = theorem_error(&full, &snaps, &basis, eps).unwrap();
    assert_eq!(curve.t, vec![0.0, 0.25, 0.5]);
    assert!(curve.sup < 1e-12, "{}", curve.sup);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn every_substep_is_unitary(kind in 0u8..3, dt in 0.001f64..0.05) {
        let basis = harmonic(1.0, 1.0, 6.0, 128, 3);
        let plane = Grid2D::new(8.0, 8.0, 8, 8).unwrap();
        let kind = [NonlinearityKind::None, NonlinearityKind::F0, NonlinearityKind::F1][kind as usize];
        let st = stepper(&basis, &plane, 0.2, dt, kind);
        let r = run(&st, &datum(&plane, &basis), dt, 4);
        prop_assert!(r.max_step_mass_drift() < 1e-12);
    }

    #[test]
    fn global_phase_propagates(theta in 0.0f64..(2.0 * PI)) {
        let basis = harmonic(1.0, 1.0, 6.0, 128, 3);
        let plane = Grid2D::new(8.0, 8.0, 8, 8).unwrap();
        let st = stepper(&basis, &plane, 0.2, 0.01, NonlinearityKind::F1);
        let f = datum(&plane, &basis);
        let c = Complex64::from_polar(1.0, theta);
        let mut g = f.clone();
        g.scale(c);
        let mut a = run(&st, &f, 0.01, 5).final_state().clone();
        a.scale(c);
        let b = run(&st, &g, 0.01, 5);
        prop_assert!(l2_dist(&a, b.final_state()) < 1e-12 * l2_norm(&f).unwrap());
    }
}
