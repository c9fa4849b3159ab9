mod common;

use num_complex::Complex64;
use proptest::prelude::*;

use common::{basis_for, harmonic, mode_field, plane_gaussian, rel};
use cyqw::field::{project_modes, synth_modes};
use cyqw::grid::{Grid1D, Grid2D};
use cyqw::potential::{build_potential, PotentialKind, PotentialSpec};
use cyqw::spectrum::{check_gap, weyl_frequency, EigenBasis};
use cyqw::Error;

fn potential(kind: u8, a: f64, b: f64, g: &Grid1D) -> PotentialSpec {
    match kind {
        0 => PotentialSpec::harmonic(a, b),
        1 => PotentialSpec::power(a, 4.0, b),
        _ => PotentialSpec::gaussian_perturbed(a, 0.7, 0.8, b, g),
    }
}

fn audit_basis(basis: &EigenBasis) -> Result<(), String> {
    let g = basis.grid();
    let dz = g.dz();
    let p = basis.len();
    for i in 0..p {
        for j in 0..p {
            let s: f64 = basis.chi(i).iter().zip(basis.chi(j)).map(|(x, y)| x * y).sum::<f64>() * dz;
            let want = if i == j { 1.0 } else { 0.0 };
            if (s - want).abs() > 1e-10 {
                return Err(format!("orthonormality ({i},{j}): {s}"));
            }
        }
    }
    for w in basis.energies().windows(2) {
        if w[1] <= w[0] {
            return Err("energies not strictly ascending".into());
        }
    }
    for q in 0..p {
        let c = basis.chi(q);
        let sign = if q % 2 == 0 { 1.0 } else { -1.0 };
        for j in 1..g.len() {
            let m = g.mirror(j).unwrap();
            if (c[j] - sign * c[m]).abs() > 1e-8 {
                return Err(format!("parity of mode {q} at {j}"));
            }
        }
    }
    let w = weyl_frequency(basis.vc(), g);
    let mut out = vec![0.0; g.len()];
    for q in 0..p {
        let e = basis.energy(q);
        let bound = (w * w + basis.b() * basis.b()).sqrt() * (2 * q + 1) as f64;
        if e < bound - 1e-6 * e {
            return Err(format!("Weyl bound at {q}: {e} < {bound}"));
        }
        basis.apply_hz(basis.chi(q), &mut out);
        let r: f64 = out.iter().zip(basis.chi(q)).map(|(x, y)| x * y).sum::<f64>() * dz;
        if (r - e).abs() > 1e-8 * e {
            return Err(format!("Rayleigh quotient of mode {q}: {r} vs {e}"));
        }
    }
    Ok(())
}

#[test]
fn field_free_harmonic_levels_are_odd_integers() {
    let basis = harmonic(1.0, 0.0, 12.0, 2048, 10);
    for p in 0..10 {
        assert!(rel(basis.energy(p), (2 * p + 1) as f64) < 1e-6, "{p}");
    }
}

#[test]
fn magnetized_harmonic_levels() {
    let basis = harmonic(1.0, 1.0, 12.0, 2048, 10);
    for p in 0..10 {
        assert!(rel(basis.energy(p), (2 * p + 1) as f64 * 2f64.sqrt()) < 1e-6, "{p}");
    }
}

#[test]
fn harmonic_samples_are_exact_and_audit_passes() {
    let g = Grid1D::new(6.0, 128).unwrap();
    let v = build_potential(&PotentialSpec::harmonic(1.0, 0.0), &g).unwrap();
    for (z, vz) in g.points().iter().zip(&v.values) {
        assert_eq!(*vz, z * z);
    }
    assert!(v.audit.pass);
    assert!((v.audit.a - 1.0).abs() < 1e-12);
    assert!((v.audit.m - 2.0).abs() < 1e-9);
}

#[test]
fn quartic_growth_is_superquadratic_and_gaps_grow() {
    let g = Grid1D::new(8.0, 1024).unwrap();
    let spec = PotentialSpec::power(1.0, 4.0, 1.0);
    let v = build_potential(&spec, &g).unwrap();
    assert!(v.audit.m > 3.0, "{:?}", v.audit);
    let basis = basis_for(&spec, 8.0, 1024, 10);
    let gaps = check_gap(&basis).unwrap().gaps;
    assert!(gaps.windows(2).all(|w| w[1] > w[0]), "{gaps:?}");
}

#[test]
fn odd_table_is_rejected() {
    let g = Grid1D::new(4.0, 64).unwrap();
    let samples: Vec<f64> = g.points().iter().map(|z| z * z + 0.3 * z).collect();
    let spec = PotentialSpec {
        kind: PotentialKind::Tabulated { samples },
        b: 0.0,
    };
    assert!(matches!(build_potential(&spec, &g), Err(Error::InvalidPotential(_))));
}

#[test]
fn harmonic_gaps_are_uniform_with_zero_exponent() {
    let basis = harmonic(1.3, 0.6, 10.0, 1024, 10);
    let r = check_gap(&basis).unwrap();
    let want = 2.0 * (1.3f64 * 1.3 + 0.6 * 0.6).sqrt();
    assert!(r.gaps.iter().all(|g| rel(*g, want) < 1e-6), "{:?}", r.gaps);
    assert_eq!(r.n0_integer, 0);
    assert!(r.n0 < 1e-6);
}

#[test]
fn three_mode_fit_is_low_confidence() {
    let r = check_gap(&harmonic(1.0, 1.0, 6.0, 128, 3)).unwrap();
    assert!(r.low_confidence);
    assert_eq!(r.gaps.len(), 2);
}

#[test]
fn projection_picks_the_populated_mode() {
    let basis = harmonic(1.0, 1.0, 6.0, 128, 6);
    let plane = Grid2D::new(8.0, 8.0, 16, 16).unwrap();
    let g = plane_gaussian(&plane, (0.0, 0.0), 1.0, (0.5, 0.0));
    let f = mode_field(&plane, &basis, &g, 2);
    let (m, tail) = project_modes(&f, &basis).unwrap();
    assert!(tail.fraction < 1e-12);
    for (idx, col) in m.data().chunks_exact(6).enumerate() {
        for (p, c) in col.iter().enumerate() {
            if p == 2 {
                assert!((c - g[idx]).norm() < 1e-10);
            } else {
                assert!(c.norm() < 1e-10);
            }
        }
    }
}

#[test]
fn orthogonal_field_projects_to_zero_with_warning() {
    let big = harmonic(1.0, 1.0, 6.0, 128, 8);
    let small = harmonic(1.0, 1.0, 6.0, 128, 4);
    let plane = Grid2D::new(4.0, 4.0, 8, 8).unwrap();
    let f = mode_field(&plane, &big, &vec![Complex64::new(1.0, 0.0); plane.len()], 6);
    let (m, tail) = project_modes(&f, &small).unwrap();
    assert!(m.data().iter().all(|c| c.norm() < 1e-10));
    assert!(tail.warn);
    assert!(tail.fraction > 1.0 - 1e-9);
}

#[test]
fn eigenvalues_are_converged_under_refinement() {
    for spec in [PotentialSpec::harmonic(1.0, 1.0), PotentialSpec::power(1.0, 4.0, 1.0)] {
        let coarse = basis_for(&spec, 10.0, 1024, 10);
        let fine = basis_for(&spec, 10.0, 2048, 10);
        for p in 0..=5 {
            assert!(rel(coarse.energy(p), fine.energy(p)) < 1e-6, "{spec:?} {p}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn basis_invariants_hold(kind in 0u8..3, a in 0.7f64..1.6, b in 0.0f64..1.5) {
        let g = Grid1D::new(8.0, 256).unwrap();
        let spec = potential(kind, a, b, &g);
        let basis = basis_for(&spec, 8.0, 256, 8);
        prop_assert!(audit_basis(&basis).is_ok(), "{:?}", audit_basis(&basis));
        prop_assert!(basis.chi(0)[1..].iter().all(|x| *x >= -1e-12), "ground state changes sign");
    }

    #[test]
    fn projection_is_idempotent(seed in any::<u64>()) {
        let basis = harmonic(1.0, 1.0, 6.0, 128, 6);
        let plane = Grid2D::new(4.0, 4.0, 8, 8).unwrap();
        let mut noise = common::Noise::new(seed);
        let w = basis.grid().len();
        let mut f = cyqw::field::Field3D::zeros_grid(&plane, basis.grid());
        for (k, v) in f.data_mut().iter_mut().enumerate() {
            let z = basis.grid().points()[k % w];
            if k % w != 0 {
                *v = noise.complex() * (-z * z).exp();
            }
        }
        let (p1, _) = project_modes(&f, &basis).unwrap();
        let (p2, _) = project_modes(&synth_modes(&p1).unwrap(), &basis).unwrap();
        let worst = p1.data().iter().zip(p2.data()).fold(0.0f64, |m, (a, b)| m.max((a - b).norm()));
        let scale = p1.data().iter().fold(0.0f64, |m, a| m.max(a.norm()));
        prop_assert!(worst < 1e-10 * scale.max(1.0));
    }
}
