//! Eigenpairs of the confinement operator `H_z = -d^2/dz^2 + B^2 z^2 + V_c(z)`.

use sha2::{Digest, Sha256};

use crate::eigen::SymBanded;
use crate::error::{Error, Result};
use crate::grid::Grid1D;

/// Default finite-difference order of the z Laplacian.
pub const DEFAULT_FD_ORDER: usize = 8;

/// Relative gap below which two eigenvalues are treated as a discretization failure.
pub const DEGENERACY_GUARD: f64 = 1e-10;

/// Lowest eigenpairs of `H_z` on a Dirichlet grid.
///
/// `chi[p]` is stored on the full grid (the wall sample is 0) and normalized
/// so that `sum_j chi_p(z_j)^2 dz = 1`.
#[derive(Debug, Clone)]
pub struct EigenBasis {
    grid: Grid1D,
    b: f64,
    order: usize,
    vc: Vec<f64>,
    op: SymBanded,
    energies: Vec<f64>,
    chi: Vec<Vec<f64>>,
    fingerprint: [u8; 32],
}

/// Eigenpairs of an arbitrary (not necessarily even) confined operator.
#[derive(Debug, Clone)]
pub(crate) struct Eigensystem {
    pub energies: Vec<f64>,
    pub chi: Vec<Vec<f64>>,
    pub op: SymBanded,
}

/// `(E, chi)` for `-d^2/dz^2 + total` with `total` sampled on the full grid.
///
/// Runs the orthonormality, simplicity and Rayleigh checks (simplicity only
/// for the banded path); parity and the Weyl bound are left to the caller
/// since `total` need not be even.
pub(crate) fn confined_eigensystem(
    total: &[f64],
    grid: &Grid1D,
    count: usize,
    order: usize,
    dense: bool,
) -> Result<Eigensystem> {
    let n = grid.len();
    if total.len() != n {
        return Err(Error::SizeMismatch(format!(
            "potential has {} samples, grid has {n}",
            total.len()
        )));
    }
    let dz = grid.dz();
    let op = SymBanded::schrodinger(&total[1..], dz, order)?;
    let (energies, vecs) = if dense {
        let (mut e, mut v) = op.all_eigenpairs_dense();
        e.truncate(count);
        v.truncate(count);
        (e, v)
    } else {
        op.lowest_eigenpairs(count)?
    };
    let scale = 1.0 / dz.sqrt();
    let chi: Vec<Vec<f64>> = vecs
        .into_iter()
        .map(|v| {
            let mut c = Vec::with_capacity(n);
            c.push(0.0);
            c.extend(v.iter().map(|x| x * scale));
            let s = sign_of_first_extremum(&c);
            c.iter_mut().for_each(|x| *x *= s);
            c
        })
        .collect();
    let sys = Eigensystem { energies, chi, op };
    verify_common(&sys, dz, !dense)?;
    Ok(sys)
}

/// Sign of the first interior local extremum of `c` that rises above the tail noise.
fn sign_of_first_extremum(c: &[f64]) -> f64 {
    let max = c.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let floor = 1e-3 * max;
    for j in 1..c.len() {
        let a = c[j].abs();
        let right = c.get(j + 1).map_or(0.0, |x| x.abs());
        if a >= floor && a >= c[j - 1].abs() && a >= right {
            return if c[j] < 0.0 { -1.0 } else { 1.0 };
        }
    }
    1.0
}

fn verify_common(sys: &Eigensystem, dz: f64, simple: bool) -> Result<()> {
    let p_count = sys.energies.len();
    for p in 0..p_count {
        for q in 0..=p {
            let d: f64 = sys.chi[p].iter().zip(&sys.chi[q]).map(|(a, b)| a * b).sum::<f64>() * dz;
            let want = if p == q { 1.0 } else { 0.0 };
            if (d - want).abs() > 1e-10 {
                return Err(Error::Invariant(format!(
                    "orthonormality: <chi_{p}, chi_{q}> = {d:e}"
                )));
            }
        }
    }
    // complete dense bases only need orthonormality; near-degenerate wall states are harmless there
    for p in 0..p_count.saturating_sub(1) {
        if !simple {
            break;
        }
        let gap = sys.energies[p + 1] - sys.energies[p];
        if gap <= DEGENERACY_GUARD * sys.energies[p].abs().max(1.0) {
            return Err(Error::Degenerate { p, gap });
        }
    }
    let mut hv = vec![0.0; sys.op.len()];
    for p in 0..p_count {
        sys.op.matvec(&sys.chi[p][1..], &mut hv);
        let rq: f64 = hv.iter().zip(&sys.chi[p][1..]).map(|(a, b)| a * b).sum::<f64>() * dz;
        let e = sys.energies[p];
        if (rq - e).abs() > 1e-8 * e.abs().max(1.0) {
            return Err(Error::Invariant(format!(
                "Rayleigh consistency: <H chi_{p}, chi_{p}> = {rq} vs E = {e}"
            )));
        }
    }
    Ok(())
}

/// `P` lowest eigenpairs of `H_z` for sampled `V_c` (from `build_potential`).
pub fn solve_eigs(vc: &[f64], b: f64, grid: &Grid1D, count: usize) -> Result<EigenBasis> {
    solve_eigs_with_order(vc, b, grid, count, DEFAULT_FD_ORDER)
}

pub fn solve_eigs_with_order(
    vc: &[f64],
    b: f64,
    grid: &Grid1D,
    count: usize,
    order: usize,
) -> Result<EigenBasis> {
    let n = grid.len();
    if count == 0 || count > n / 4 {
        return Err(Error::SizeMismatch(format!(
            "mode count {count} must satisfy 1 <= P <= n_z/4 = {}",
            n / 4
        )));
    }
    if vc.len() != n {
        return Err(Error::SizeMismatch(format!(
            "potential has {} samples, grid has {n}",
            vc.len()
        )));
    }
    let total = total_potential(vc, b, grid);
    let sys = confined_eigensystem(&total, grid, count, order, false)?;
    finish_basis(sys, vc, b, grid, order)
}

fn total_potential(vc: &[f64], b: f64, grid: &Grid1D) -> Vec<f64> {
    vc.iter()
        .zip(grid.points())
        .map(|(v, z)| v + b * b * z * z)
        .collect()
}

/// Parity and Weyl checks on top of the generic ones, then seal the basis.
fn finish_basis(sys: Eigensystem, vc: &[f64], b: f64, grid: &Grid1D, order: usize) -> Result<EigenBasis> {
    let n = grid.len();
    for (p, c) in sys.chi.iter().enumerate() {
        let parity = if p % 2 == 0 { 1.0 } else { -1.0 };
        let mut worst = 0.0f64;
        for j in 1..n {
            let m = grid.mirror(j).expect("interior");
            worst = worst.max((c[j] - parity * c[m]).abs());
        }
        if worst > 1e-8 {
            return Err(Error::Invariant(format!(
                "parity alternation: chi_{p} deviates by {worst:e}"
            )));
        }
    }
    let a = weyl_frequency(vc, grid);
    let omega = (a * a + b * b).sqrt();
    for (p, e) in sys.energies.iter().enumerate() {
        let bound = omega * (2 * p + 1) as f64;
        if *e < bound - 1e-6 * e.abs() {
            return Err(Error::Invariant(format!(
                "Weyl bound: E_{p} = {e} below {bound}"
            )));
        }
    }

    let fingerprint = potential_fingerprint(vc, b, grid, order);
    Ok(EigenBasis {
        grid: grid.clone(),
        b,
        order,
        vc: vc.to_vec(),
        op: sys.op,
        energies: sys.energies,
        chi: sys.chi,
        fingerprint,
    })
}

/// Largest `a` with `a^2 z^2 <= V_c(z)` at every sampled `z != 0`.
pub fn weyl_frequency(vc: &[f64], grid: &Grid1D) -> f64 {
    let mut a2 = f64::INFINITY;
    for (v, z) in vc.iter().zip(grid.points()).skip(1) {
        if *z != 0.0 {
            a2 = a2.min(v / (z * z));
        }
    }
    a2.max(0.0).sqrt()
}

/// Content hash of everything that determines a basis.
pub fn potential_fingerprint(vc: &[f64], b: f64, grid: &Grid1D, order: usize) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"H_z");
    h.update((grid.len() as u64).to_le_bytes());
    h.update(grid.half_length().to_le_bytes());
    h.update(b.to_le_bytes());
    h.update((order as u64).to_le_bytes());
    for v in vc {
        h.update(v.to_le_bytes());
    }
    h.finalize().into()
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl EigenBasis {
    /// Reassemble a basis from cached eigenpairs, re-running every invariant check.
    pub(crate) fn from_parts(
        grid: Grid1D,
        b: f64,
        order: usize,
        vc: Vec<f64>,
        energies: Vec<f64>,
        chi: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n = grid.len();
        if vc.len() != n || chi.len() != energies.len() || chi.iter().any(|c| c.len() != n) {
            return Err(Error::SizeMismatch("cached eigenpairs do not match the grid".into()));
        }
        if chi.iter().any(|c| c[0] != 0.0) {
            return Err(Error::Invariant("cached mode is nonzero at the wall".into()));
        }
        let total = total_potential(&vc, b, &grid);
        let op = SymBanded::schrodinger(&total[1..], grid.dz(), order)?;
        let sys = Eigensystem { energies, chi, op };
        verify_common(&sys, grid.dz(), true)?;
        finish_basis(sys, &vc, b, &grid, order)
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }
    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }
    pub fn energies(&self) -> &[f64] {
        &self.energies
    }
    pub fn energy(&self, p: usize) -> f64 {
        self.energies[p]
    }
    pub fn chi(&self, p: usize) -> &[f64] {
        &self.chi[p]
    }
    pub fn modes(&self) -> &[Vec<f64>] {
        &self.chi
    }
    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }
    pub fn b(&self) -> f64 {
        self.b
    }
    pub fn order(&self) -> usize {
        self.order
    }
    pub fn vc(&self) -> &[f64] {
        &self.vc
    }
    pub fn operator(&self) -> &SymBanded {
        &self.op
    }
    pub fn fingerprint(&self) -> [u8; 32] {
        self.fingerprint
    }
    pub fn fingerprint_hex(&self) -> String {
        hex(&self.fingerprint)
    }

    /// `H_z v` with the discrete operator; `v` and `out` live on the full grid.
    pub fn apply_hz(&self, v: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
        self.op.matvec(&v[1..], &mut out[1..]);
    }

    /// `<f chi_p>` by Riemann sum for a real profile `f` on the full grid.
    pub fn project_real(&self, f: &[f64], p: usize) -> f64 {
        self.chi[p].iter().zip(f).map(|(a, b)| a * b).sum::<f64>() * self.grid.dz()
    }

    /// Write `eigs.csv` rows `p,E_p,gap` (gap empty on the last row).
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "p,E_p,gap")?;
        for (p, e) in self.energies.iter().enumerate() {
            match self.energies.get(p + 1) {
                Some(next) => writeln!(w, "{p},{e:.17e},{:.17e}", next - e)?,
                None => writeln!(w, "{p},{e:.17e},")?,
            }
        }
        Ok(())
    }
}

/// Spectral-gap audit against `E_{p+1} - E_p >= C (1 + p)^{-n_0}`.
#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    pub gaps: Vec<f64>,
    /// fitted decay exponent, clipped at 0 when the gaps do not shrink
    pub n0: f64,
    /// smallest integer exponent for which `C` below is a valid constant
    pub n0_integer: u32,
    /// `min_p gap_p (1 + p)^{n0_integer}`
    pub c: f64,
    pub pass: bool,
    pub low_confidence: bool,
}

pub fn check_gap(basis: &EigenBasis) -> Result<GapReport> {
    let e = basis.energies();
    if e.len() < 3 {
        return Err(Error::SizeMismatch(format!(
            "gap audit needs at least 3 modes, got {}",
            e.len()
        )));
    }
    let gaps: Vec<f64> = e.windows(2).map(|w| w[1] - w[0]).collect();
    let xs: Vec<f64> = (0..gaps.len()).map(|p| (1.0 + p as f64).ln()).collect();
    let ys: Vec<f64> = gaps.iter().map(|g| g.ln()).collect();
    let (slope, _) = crate::fit::least_squares_line(&xs, &ys);
    let n0 = if slope.is_finite() { (-slope).max(0.0) } else { 0.0 };
    // tolerance absorbs rounding in equal gaps
    let n0_integer = (n0 - 1e-6).max(0.0).ceil() as u32;
    let c = gaps
        .iter()
        .enumerate()
        .map(|(p, g)| g * (1.0 + p as f64).powi(n0_integer as i32))
        .fold(f64::INFINITY, f64::min);
    Ok(GapReport {
        pass: gaps.iter().all(|g| *g > 0.0),
        gaps,
        n0,
        n0_integer,
        c,
        low_confidence: e.len() == 3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{build_potential, PotentialSpec};

    fn harmonic(a: f64, b: f64, n: usize, l: f64, p: usize) -> EigenBasis {
        let g = Grid1D::new(l, n).unwrap();
        let v = build_potential(&PotentialSpec::harmonic(a, b), &g).unwrap();
        solve_eigs(&v.values, b, &g, p).unwrap()
    }

    #[test]
    fn ground_state_has_no_sign_change() {
        let basis = harmonic(1.0, 0.5, 256, 8.0, 6);
        let c = basis.chi(0);
        assert!(c[1..].iter().all(|x| *x >= -1e-14));
    }

    #[test]
    fn sign_convention_positive_first_extremum() {
        let basis = harmonic(1.0, 1.0, 512, 8.0, 8);
        for p in 0..8 {
            let c = basis.chi(p);
            let j = (1..c.len() - 1)
                .find(|&j| {
                    c[j].abs() > 1e-3 && c[j].abs() >= c[j - 1].abs() && c[j].abs() >= c[j + 1].abs()
                })
                .unwrap();
            assert!(c[j] > 0.0, "mode {p}");
        }
    }

    #[test]
    fn rejects_too_many_modes() {
        let g = Grid1D::new(6.0, 64).unwrap();
        let v = build_potential(&PotentialSpec::harmonic(1.0, 0.0), &g).unwrap();
        assert!(matches!(solve_eigs(&v.values, 0.0, &g, 17), Err(Error::SizeMismatch(_))));
        // 16 modes pass the count rule; the coarse grid then trips the Weyl check
        assert!(matches!(solve_eigs(&v.values, 0.0, &g, 16), Err(Error::Invariant(_))));
        assert!(solve_eigs(&v.values, 0.0, &g, 4).is_ok());
    }

    #[test]
    fn harmonic_gaps_are_uniform() {
        let basis = harmonic(1.0, 1.0, 1024, 10.0, 10);
        let r = check_gap(&basis).unwrap();
        assert!(r.pass);
        assert!(r.n0 < 1e-6, "n0 = {}", r.n0);
        assert_eq!(r.n0_integer, 0);
        for g in &r.gaps {
            assert!((g - 2.0 * 2f64.sqrt()).abs() < 1e-6);
        }
    }

    #[test]
    fn three_modes_flag_low_confidence() {
        let basis = harmonic(1.0, 0.0, 256, 8.0, 3);
        let r = check_gap(&basis).unwrap();
        assert!(r.low_confidence);
        assert_eq!(r.gaps.len(), 2);
    }

    #[test]
    fn eigs_csv_header_and_rows() {
        let basis = harmonic(1.0, 0.0, 256, 8.0, 4);
        let mut buf = Vec::new();
        basis.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "p,E_p,gap");
        assert_eq!(lines.len(), 5);
        assert!(lines[4].ends_with(','));
    }
}
