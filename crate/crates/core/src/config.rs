//! Run configuration: TOML sections `potential`, `grids`, `epsilon`, `time`,
//! `solver`, `io` and `initial`, all keys optional except the potential kind.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid1D, Grid2D};
use crate::potential::PotentialSpec;
use crate::reference::NonlinearityKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub potential: PotentialConfig,
    #[serde(default)]
    pub grids: GridsConfig,
    #[serde(default)]
    pub epsilon: EpsilonConfig,
    #[serde(default)]
    pub time: TimeConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub io: IoConfig,
    #[serde(default)]
    pub initial: InitialConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialName {
    Harmonic,
    Power,
    PerturbedHarmonic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    pub kind: PotentialName,
    #[serde(default = "one")]
    pub a: f64,
    /// magnetic field strength
    #[serde(default = "one")]
    pub b: f64,
    /// growth exponent (`power` only)
    pub s: Option<f64>,
    /// Gaussian bump height and width (`perturbed_harmonic` only)
    pub amplitude: Option<f64>,
    pub width: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridsConfig {
    pub nz: usize,
    /// half-width of the z interval
    pub lz: f64,
    pub nx: usize,
    pub ny: usize,
    /// full periods of the x-y box
    pub lx: f64,
    pub ly: f64,
    /// retained confinement modes `P`
    pub modes: usize,
    pub fd_order: usize,
}

impl Default for GridsConfig {
    fn default() -> Self {
        Self {
            nz: 128,
            lz: 6.0,
            nx: 64,
            ny: 64,
            lx: 12.8,
            ly: 12.8,
            modes: 8,
            fd_order: crate::spectrum::DEFAULT_FD_ORDER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpsilonConfig {
    /// strictly decreasing
    pub values: Vec<f64>,
}

impl Default for EpsilonConfig {
    fn default() -> Self {
        Self {
            values: vec![0.2, 0.1, 0.05],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeConfig {
    pub t_final: f64,
    pub dt: f64,
    pub snapshot_every: usize,
    pub diag_every: usize,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self {
            t_final: 0.5,
            dt: 0.01,
            snapshot_every: 1,
            diag_every: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub nonlinearity: NonlinearityKind,
    /// shifted modes per x-wavevector in the full solver
    pub pz: usize,
    /// extra modes solved only to converge `alpha_p` of the top retained modes
    pub alpha_extra: usize,
    pub tail_threshold: f64,
    pub override_negative_alpha: bool,
    /// report when `dt` exceeds this fraction of `eps^2 / (lambda_max - lambda_min)`
    pub phase_fraction: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            nonlinearity: NonlinearityKind::F1,
            pz: 24,
            alpha_extra: 4,
            tail_threshold: crate::limit::INIT_TAIL_THRESHOLD,
            override_negative_alpha: false,
            phase_fraction: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoConfig {
    pub out: PathBuf,
    /// relative paths resolve against `out`
    pub cache: PathBuf,
    pub write_snapshots: bool,
    pub writer_queue: usize,
}

impl Default for IoConfig {
    fn default() -> Self {
        Self {
            out: PathBuf::from("out"),
            cache: PathBuf::from("cache"),
            write_snapshots: false,
            writer_queue: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialName {
    /// `A exp(-(x^2+y^2)/(2 sigma^2)) exp(-omega (z - z0)^2 / 2)`
    Gaussian,
    /// `A exp(-(x^2+y^2)/(2 sigma^2)) sum_n c_n h_n(z)`, Hermite functions of frequency `omega`
    Hermite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialConfig {
    pub kind: InitialName,
    pub amplitude: f64,
    pub sigma: f64,
    pub z_center: f64,
    /// defaults to `sqrt(a^2 + B^2)`
    pub omega: Option<f64>,
    pub coefficients: Vec<f64>,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self {
            kind: InitialName::Gaussian,
            amplitude: 1.0,
            sigma: 1.0,
            z_center: 0.5,
            omega: None,
            coefficients: vec![1.0],
        }
    }
}

fn one() -> f64 {
    1.0
}

fn reject(key: &str, message: impl Into<String>) -> Error {
    Error::config(key, message)
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(reject(key, format!("must be finite and > 0, got {v}")))
    }
}

pub fn parse_config(path: &Path) -> Result<Config> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| reject("<file>", format!("cannot read {}: {e}", path.display())))?;
    Config::from_toml(&text)
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| {
            let key = e
                .message()
                .split('`')
                .nth(1)
                .unwrap_or("<document>")
                .to_string();
            reject(&key, e.message().trim())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.potential;
        positive("potential.a", p.a)?;
        if !(p.b.is_finite() && p.b >= 0.0) {
            return Err(reject("potential.b", format!("must be finite and >= 0, got {}", p.b)));
        }
        match p.kind {
            PotentialName::Harmonic => {
                for (k, v) in [("potential.s", p.s), ("potential.amplitude", p.amplitude), ("potential.width", p.width)] {
                    if v.is_some() {
                        return Err(reject(k, "not used by the harmonic potential"));
                    }
                }
            }
            PotentialName::Power => {
                let s = p.s.ok_or_else(|| reject("potential.s", "required for kind = \"power\""))?;
                if !(s.is_finite() && s >= 2.0) {
                    return Err(reject("potential.s", format!("growth exponent must be >= 2, got {s}")));
                }
            }
            PotentialName::PerturbedHarmonic => {
                let amp = p
                    .amplitude
                    .ok_or_else(|| reject("potential.amplitude", "required for kind = \"perturbed_harmonic\""))?;
                if !amp.is_finite() {
                    return Err(reject("potential.amplitude", "must be finite"));
                }
                positive(
                    "potential.width",
                    p.width
                        .ok_or_else(|| reject("potential.width", "required for kind = \"perturbed_harmonic\""))?,
                )?;
            }
        }

        let g = &self.grids;
        positive("grids.lz", g.lz)?;
        positive("grids.lx", g.lx)?;
        positive("grids.ly", g.ly)?;
        if g.nz < 16 {
            return Err(reject("grids.nz", format!("need at least 16 points, got {}", g.nz)));
        }
        for (k, n) in [("grids.nx", g.nx), ("grids.ny", g.ny)] {
            if n < 2 || !n.is_power_of_two() {
                return Err(reject(k, format!("must be a power of two >= 2, got {n}")));
            }
        }
        if g.modes == 0 || g.modes > g.nz / 4 {
            return Err(reject(
                "grids.modes",
                format!(
                    "resolution rule P <= n_z/4 (at least four z points per retained mode) violated: P = {}, n_z/4 = {}",
                    g.modes,
                    g.nz / 4
                ),
            ));
        }
        if !crate::eigen::SUPPORTED_FD_ORDERS.contains(&g.fd_order) {
            return Err(reject(
                "grids.fd_order",
                format!("must be one of {:?}, got {}", crate::eigen::SUPPORTED_FD_ORDERS, g.fd_order),
            ));
        }

        let eps = &self.epsilon.values;
        if eps.is_empty() {
            return Err(reject("epsilon.values", "need at least one value"));
        }
        for e in eps {
            positive("epsilon.values", *e)?;
        }
        if eps.windows(2).any(|w| w[1] >= w[0]) {
            return Err(reject("epsilon.values", "must be strictly decreasing"));
        }

        let t = &self.time;
        positive("time.t_final", t.t_final)?;
        positive("time.dt", t.dt)?;
        let steps = t.t_final / t.dt;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
            return Err(reject("time.dt", format!("t_final = {} is not a multiple of dt = {}", t.t_final, t.dt)));
        }

        let s = &self.solver;
        if s.pz < g.modes || s.pz > g.nz - 1 {
            return Err(reject(
                "solver.pz",
                format!("must satisfy P = {} <= pz <= n_z - 1 = {}, got {}", g.modes, g.nz - 1, s.pz),
            ));
        }
        positive("solver.tail_threshold", s.tail_threshold)?;
        positive("solver.phase_fraction", s.phase_fraction)?;
        if self.io.writer_queue == 0 {
            return Err(reject("io.writer_queue", "must be >= 1"));
        }

        let i = &self.initial;
        positive("initial.sigma", i.sigma)?;
        if !i.amplitude.is_finite() {
            return Err(reject("initial.amplitude", "must be finite"));
        }
        if let Some(w) = i.omega {
            positive("initial.omega", w)?;
        }
        if i.z_center.abs() > 0.5 * g.lz {
            return Err(reject(
                "initial.z_center",
                format!("|z0| must stay within half the z box ({}), got {}", 0.5 * g.lz, i.z_center),
            ));
        }
        if i.kind == InitialName::Hermite && (i.coefficients.is_empty() || i.coefficients.iter().all(|c| *c == 0.0)) {
            return Err(reject("initial.coefficients", "need at least one nonzero coefficient"));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.time.t_final / self.time.dt).round() as usize
    }

    pub fn zgrid(&self) -> Result<Grid1D> {
        Grid1D::new(self.grids.lz, self.grids.nz)
    }

    pub fn plane(&self) -> Result<Grid2D> {
        Grid2D::new(self.grids.lx, self.grids.ly, self.grids.nx, self.grids.ny)
    }

    pub fn potential_spec(&self, zgrid: &Grid1D) -> PotentialSpec {
        let p = &self.potential;
        match p.kind {
            PotentialName::Harmonic => PotentialSpec::harmonic(p.a, p.b),
            PotentialName::Power => PotentialSpec::power(p.a, p.s.unwrap_or(2.0), p.b),
            PotentialName::PerturbedHarmonic => {
                PotentialSpec::gaussian_perturbed(p.a, p.amplitude.unwrap_or(0.0), p.width.unwrap_or(1.0), p.b, zgrid)
            }
        }
    }

    /// `sqrt(a^2 + B^2)` unless `initial.omega` is set.
    pub fn initial_omega(&self) -> f64 {
        self.initial
            .omega
            .unwrap_or_else(|| self.potential.a.hypot(self.potential.b))
    }

    pub fn cache_dir(&self, out: &Path) -> PathBuf {
        if self.io.cache.is_absolute() {
            self.io.cache.clone()
        } else {
            out.join(&self.io.cache)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[potential]\nkind = \"harmonic\"\n";

    fn key_of(e: Error) -> String {
        match e {
            Error::Config { key, .. } => key,
            other => panic!("expected a config error, got {other}"),
        }
    }

    #[test]
    fn minimal_harmonic_config_is_fully_defaulted() {
        let c = Config::from_toml(MINIMAL).unwrap();
        assert_eq!(c.potential.a, 1.0);
        assert_eq!(c.potential.b, 1.0);
        assert_eq!(c.grids, GridsConfig::default());
        assert_eq!(c.epsilon.values, vec![0.2, 0.1, 0.05]);
        assert_eq!(c.steps(), 50);
        assert_eq!(c.solver.nonlinearity, NonlinearityKind::F1);
        assert_eq!(Config::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn nonpositive_epsilon_rejected() {
        for v in ["0.0", "-0.1"] {
            let e = Config::from_toml(&format!("{MINIMAL}[epsilon]\nvalues = [{v}]\n")).unwrap_err();
            assert_eq!(key_of(e), "epsilon.values");
        }
    }

    #[test]
    fn too_many_modes_cites_resolution_rule() {
        let e = Config::from_toml(&format!("{MINIMAL}[grids]\nnz = 32\nmodes = 9\n")).unwrap_err();
        let text = e.to_string();
        assert!(text.contains("grids.modes") && text.contains("n_z/4"), "{text}");
    }

    #[test]
    fn unknown_keys_rejected_with_name() {
        let e = Config::from_toml(&format!("{MINIMAL}[grids]\nnzz = 64\n")).unwrap_err();
        assert!(e.to_string().contains("nzz"), "{e}");
        let e = Config::from_toml(&format!("{MINIMAL}[extra]\nx = 1\n")).unwrap_err();
        assert!(e.to_string().contains("extra"), "{e}");
        let e = Config::from_toml("[potential]\nkind = \"harmonic\"\nc = 2.0\n").unwrap_err();
        assert!(e.to_string().contains('c'), "{e}");
    }

    #[test]
    fn cross_constraints() {
        let cases = [
            ("[grids]\nnx = 48\n", "grids.nx"),
            ("[time]\ndt = 0.03\nt_final = 0.5\n", "time.dt"),
            ("[solver]\npz = 4\n", "solver.pz"),
            ("[epsilon]\nvalues = [0.1, 0.2]\n", "epsilon.values"),
            ("[grids]\nfd_order = 3\n", "grids.fd_order"),
        ];
        for (extra, key) in cases {
            let e = Config::from_toml(&format!("{MINIMAL}{extra}")).unwrap_err();
            assert_eq!(key_of(e), key, "{extra}");
        }
        let e = Config::from_toml("[potential]\nkind = \"power\"\n").unwrap_err();
        assert_eq!(key_of(e), "potential.s");
    }
}
