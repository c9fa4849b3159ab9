//! Confinement potentials and their admissibility audit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid1D;

/// Shape of the even confinement potential `V_c(z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialKind {
    /// `a^2 z^2`
    Harmonic { a: f64 },
    /// `a ((1 + z^2)^{s/2} - 1)`: smooth even core, `a |z|^s` growth.
    Power { a: f64, s: f64 },
    /// `a^2 z^2 + V1(z)` with `V1` sampled on the z grid.
    PerturbedHarmonic { a: f64, v1: Vec<f64> },
    /// Raw samples on the z grid.
    Tabulated { samples: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    /// Magnetic field strength `B`.
    pub b: f64,
}

impl PotentialSpec {
    pub fn harmonic(a: f64, b: f64) -> Self {
        Self {
            kind: PotentialKind::Harmonic { a },
            b,
        }
    }

    pub fn power(a: f64, s: f64, b: f64) -> Self {
        Self {
            kind: PotentialKind::Power { a, s },
            b,
        }
    }

    /// `a^2 z^2 + amplitude exp(-z^2 / width^2)` sampled on `grid`.
    pub fn gaussian_perturbed(a: f64, amplitude: f64, width: f64, b: f64, grid: &Grid1D) -> Self {
        let v1 = grid
            .points()
            .iter()
            .map(|z| amplitude * (-(z * z) / (width * width)).exp())
            .collect();
        Self {
            kind: PotentialKind::PerturbedHarmonic { a, v1 },
            b,
        }
    }

    /// Closed-form harmonic frequency `a` when the potential is exactly `a^2 z^2`.
    pub fn harmonic_frequency(&self) -> Option<f64> {
        match self.kind {
            PotentialKind::Harmonic { a } => Some(a),
            _ => None,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !self.b.is_finite() || self.b < 0.0 {
            return Err(Error::InvalidPotential(format!(
                "field strength B must be finite and >= 0, got {}",
                self.b
            )));
        }
        match &self.kind {
            PotentialKind::Harmonic { a } | PotentialKind::PerturbedHarmonic { a, .. } => {
                if !(a.is_finite() && *a > 0.0) {
                    return Err(Error::InvalidPotential(format!("a must be > 0, got {a}")));
                }
            }
            PotentialKind::Power { a, s } => {
                if !(a.is_finite() && *a > 0.0) {
                    return Err(Error::InvalidPotential(format!("a must be > 0, got {a}")));
                }
                if !(s.is_finite() && *s >= 2.0) {
                    return Err(Error::InvalidPotential(format!("exponent s must be >= 2, got {s}")));
                }
            }
            PotentialKind::Tabulated { .. } => {}
        }
        Ok(())
    }
}

/// Growth audit `a^2 z^2 <= V_c(z) <= C |z|^M` over `|z| >= 1` on the grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthAudit {
    /// largest `a` with `a^2 z^2 <= V_c` on the sampled range
    pub a: f64,
    /// least-squares slope of `log V_c` against `log |z|`
    pub m: f64,
    /// smallest `C` with `V_c <= C |z|^M` on the sampled range
    pub c: f64,
    pub pass: bool,
}

/// Sampled `V_c` (without the magnetic term) plus diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPotential {
    pub values: Vec<f64>,
    /// largest correction applied by the symmetrization
    pub symmetrization: f64,
    /// true when the correction exceeded `1e-12 max V_c`
    pub symmetrized_flag: bool,
    pub audit: GrowthAudit,
}

/// Relative odd part above which a tabulated potential is rejected as non-even.
const ODD_REJECT: f64 = 1e-8;

pub fn build_potential(spec: &PotentialSpec, grid: &Grid1D) -> Result<SampledPotential> {
    spec.validate()?;
    let z = grid.points();
    let n = grid.len();
    let mut values: Vec<f64> = match &spec.kind {
        PotentialKind::Harmonic { a } => z.iter().map(|z| a * a * z * z).collect(),
        PotentialKind::Power { a, s } => z
            .iter()
            .map(|z| a * ((1.0 + z * z).powf(0.5 * s) - 1.0))
            .collect(),
        PotentialKind::PerturbedHarmonic { a, v1 } => {
            check_len(v1.len(), n, "V1 table")?;
            z.iter().zip(v1).map(|(z, v)| a * a * z * z + v).collect()
        }
        PotentialKind::Tabulated { samples } => {
            check_len(samples.len(), n, "tabulated potential")?;
            samples.clone()
        }
    };
    if let Some(j) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index: j });
    }
    let vmax = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let mut odd = 0.0f64;
    for j in 1..n {
        let m = grid.mirror(j).expect("interior index");
        odd = odd.max(0.5 * (values[j] - values[m]).abs());
    }
    let tabulated = matches!(
        spec.kind,
        PotentialKind::Tabulated { .. } | PotentialKind::PerturbedHarmonic { .. }
    );
    if tabulated && odd > ODD_REJECT * vmax.max(f64::MIN_POSITIVE) {
        return Err(Error::InvalidPotential(format!(
            "sampled potential is not even: odd part {odd:e} vs max {vmax:e}"
        )));
    }
    if odd > 0.0 {
        let old = values.clone();
        for j in 1..n {
            let m = grid.mirror(j).expect("interior index");
            values[j] = 0.5 * (old[j] + old[m]);
        }
    }
    let min = values[1..].iter().fold(f64::INFINITY, |m, v| m.min(*v));
    if min < 0.0 {
        return Err(Error::InvalidPotential(format!(
            "potential is negative somewhere (min {min:e})"
        )));
    }
    let audit = growth_audit(&values, z);
    Ok(SampledPotential {
        values,
        symmetrization: odd,
        symmetrized_flag: odd > 1e-12 * vmax,
        audit,
    })
}

fn check_len(got: usize, want: usize, what: &str) -> Result<()> {
    if got != want {
        return Err(Error::SizeMismatch(format!("{what} has {got} samples, grid has {want}")));
    }
    Ok(())
}

fn growth_audit(values: &[f64], z: &[f64]) -> GrowthAudit {
    let mut a2 = f64::INFINITY;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (v, z) in values.iter().zip(z).skip(1) {
        let az = z.abs();
        if az >= 1.0 {
            a2 = a2.min(v / (z * z));
            if *v > 0.0 {
                xs.push(az.ln());
                ys.push(v.ln());
            }
        }
    }
    if xs.len() < 2 || !a2.is_finite() {
        return GrowthAudit {
            a: 0.0,
            m: f64::NAN,
            c: f64::NAN,
            pass: false,
        };
    }
    let (slope, _) = crate::fit::least_squares_line(&xs, &ys);
    let c = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - slope * x).exp())
        .fold(0.0f64, f64::max);
    let a = a2.max(0.0).sqrt();
    GrowthAudit {
        a,
        m: slope,
        c,
        pass: a > 0.0 && slope.is_finite() && c.is_finite(),
    }
}
