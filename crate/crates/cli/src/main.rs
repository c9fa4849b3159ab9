use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use cyqw::config::{parse_config, Config};
use cyqw::error::{Error, Result};
use cyqw::harness::{desk_config, run_acceptance, run_sweep, Setup, Suite, TableCache};
use cyqw::io::{encode_field, RunManifest, WriterLane};
use cyqw::norms::l2_norm;
use cyqw::poisson::kernel_gap_estimate;
use cyqw::reference::{
    analytic_harmonic_benchmark, evolve_full_with, FullParams, FullStepper, HarmonicBenchmark, Nonlinearity,
    NonlinearityKind,
};
use cyqw::spectrum::check_gap;
use cyqw::subband::dispersion_check;

#[derive(Parser)]
#[command(name = "cyqw", version, about = "Confined magnetized Schrödinger–Poisson solvers and their limit model")]
struct Cli {
    /// TOML run configuration (defaults to the harmonic desk setup)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// output directory (overrides `io.out`)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// worker threads for the parallel maps
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// run the limit system even when some alpha_p is negative
    #[arg(long, global = true)]
    override_negative_alpha: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// confinement eigenpairs -> eigs.csv
    Eigs,
    /// coupling coefficients and effective masses -> effmass.csv
    Effmass,
    /// subband curvatures at small eps -> dispersion.csv
    Dispersion {
        #[arg(long, default_value_t = 1e-2)]
        eps: f64,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
        xi: Vec<f64>,
    },
    /// ||F1 - F0|| over the configured eps list -> kernelgap.csv
    Kernels,
    /// limit system -> diag.csv and snapshots
    EvolveLimit,
    /// full confined system at one eps -> full.csv and snapshots
    EvolveFull {
        /// defaults to the first configured value
        #[arg(long)]
        eps: Option<f64>,
    },
    /// linear full solver against the exact harmonic solution -> bench.csv
    BenchHarmonic,
    /// limit-model error sweep over eps -> error.csv, sweep.csv
    Sweep,
    /// acceptance suite -> report.csv, summary.txt
    Accept {
        /// spectrum | effmass | kernels | limit | full | sweep | all
        suite: String,
    },
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(p) => parse_config(p)?,
        None => desk_config(),
    };
    if let Some(o) = &cli.out {
        cfg.io.out = o.clone();
    }
    if cli.override_negative_alpha {
        cfg.solver.override_negative_alpha = true;
    }
    Ok(cfg)
}

struct Run {
    out: PathBuf,
    manifest: RunManifest,
}

impl Run {
    fn new(cfg: &Config) -> Result<Self> {
        fs::create_dir_all(&cfg.io.out)?;
        Ok(Self {
            out: cfg.io.out.clone(),
            manifest: RunManifest::new(&cfg.to_toml()),
        })
    }

    fn csv(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut v = Vec::new();
        f(&mut v)?;
        let p = self.out.join(name);
        fs::write(&p, v)?;
        self.manifest.add_artifact(&self.out, &p)?;
        println!("wrote {}", p.display());
        Ok(())
    }

    fn setup(&mut self, cfg: &Config) -> Result<Setup> {
        let t = Instant::now();
        let s = Setup::new(cfg, Some(&cfg.cache_dir(&self.out)))?;
        self.manifest.add_phase("setup", t.elapsed().as_secs_f64());
        self.manifest.add_fingerprint("basis", &s.basis.fingerprint());
        for n in &s.notes {
            eprintln!("note: {n}");
        }
        self.manifest.notes.extend(s.notes.iter().cloned());
        Ok(s)
    }

    fn lane(&self, cfg: &Config) -> Option<WriterLane> {
        cfg.io.write_snapshots.then(|| WriterLane::spawn(cfg.io.writer_queue))
    }

    fn finish(mut self, lane: Option<WriterLane>) -> Result<()> {
        if let Some(l) = lane {
            for p in l.finish()? {
                self.manifest.add_artifact(&self.out, &p)?;
            }
        }
        self.manifest.write(&self.out.join("manifest.toml"))
    }
}

/// `Ok(true)` when the command's own checks pass.
fn run(cli: &Cli) -> Result<bool> {
    if let Cmd::Accept { suite } = &cli.cmd {
        let suite: Suite = suite.parse()?;
        let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("accept"));
        let report = run_acceptance(suite, &out)?;
        print!("{}", report.summary());
        return Ok(report.passed());
    }
    let cfg = load_config(cli)?;
    let mut run = Run::new(&cfg)?;
    let mut ok = true;
    match &cli.cmd {
        Cmd::Eigs => {
            let s = run.setup(&cfg)?;
            run.csv("eigs.csv", |w| s.basis.write_csv(w))?;
            let gap = check_gap(&s.basis)?;
            println!("{gap:?}");
            run.finish(None)?;
        }
        Cmd::Effmass => {
            let s = run.setup(&cfg)?;
            run.csv("effmass.csv", |w| s.coupling.write_csv(w))?;
            if let Some((p, a)) = s.coupling.first_negative_alpha() {
                eprintln!("warning: alpha_{p} = {a} is negative");
                ok = false;
            }
            run.finish(None)?;
        }
        Cmd::Dispersion { eps, xi } => {
            if !(eps.is_finite() && *eps > 0.0) {
                return Err(Error::Config {
                    key: "--eps".into(),
                    message: format!("must be > 0, got {eps}"),
                });
            }
            let s = run.setup(&cfg)?;
            let probe = dispersion_check(&s.basis, *eps, xi, &s.alpha)?;
            println!("max |curvature - alpha_p| = {:.3e}", probe.max_deviation);
            run.csv("dispersion.csv", |w| probe.write_csv(w))?;
            run.finish(None)?;
        }
        Cmd::Kernels => {
            let s = run.setup(&cfg)?;
            let u = s.initial_field()?;
            let r = kernel_gap_estimate(&u, &cfg.epsilon.values, &s.basis)?;
            println!("slope {:.4} monotone {}", r.slope, r.monotone);
            ok = r.monotone && r.slope >= 1.0 / 3.0 - 0.05;
            run.csv("kernelgap.csv", |w| r.write_csv(w))?;
            run.finish(None)?;
        }
        Cmd::EvolveLimit => {
            let s = run.setup(&cfg)?;
            let lane = run.lane(&cfg);
            let dir = run.out.join("snapshots");
            let t = Instant::now();
            let r = s.run_limit(lane.as_ref().map(|l| (l, dir.as_path())))?;
            run.manifest.add_phase("limit", t.elapsed().as_secs_f64());
            run.csv("diag.csv", |w| r.diag.write_csv(w))?;
            if let Some(h) = &r.halt {
                eprintln!("halted: {h}");
                run.manifest.halt_reason = Some(h.to_string());
                ok = false;
            }
            run.finish(lane)?;
        }
        Cmd::EvolveFull { eps } => {
            let eps = eps.unwrap_or(cfg.epsilon.values[0]);
            let s = run.setup(&cfg)?;
            let table = TableCache::default().get(&s.basis, eps, &s.plane, Some(cfg.solver.pz))?;
            run.manifest.add_fingerprint("table", &table.fingerprint());
            let nl = Nonlinearity::build(cfg.solver.nonlinearity, &s.plane, &s.zgrid, eps)?;
            let stepper = FullStepper::new(table, cfg.time.dt, nl)?;
            let psi0 = s.initial_field()?;
            println!("shifted-mode tail of the initial datum: {:.3e}", stepper.tail_fraction(&psi0)?);
            let lane = run.lane(&cfg);
            let dir = run.out.join("snapshots");
            let params = FullParams {
                dt: cfg.time.dt,
                steps: cfg.steps(),
                snapshot_every: cfg.time.snapshot_every,
                diag_every: cfg.time.diag_every,
            };
            let t = Instant::now();
            let mut k = 0usize;
            let r = evolve_full_with(&psi0, &stepper, &params, &mut |t, f| {
                if let Some(l) = &lane {
                    l.send(dir.join(format!("full-{k:06}.cyqw")), encode_field(f, t))?;
                }
                k += 1;
                Ok(())
            })?;
            run.manifest.add_phase("full", t.elapsed().as_secs_f64());
            run.csv("full.csv", |w| r.write_csv(w))?;
            if let Some(h) = &r.halt {
                eprintln!("halted: {h}");
                run.manifest.halt_reason = Some(h.clone());
                ok = false;
            }
            run.finish(lane)?;
        }
        Cmd::BenchHarmonic => {
            let Some(a) = cfg.potential_spec(&cfg.zgrid()?).harmonic_frequency() else {
                return Err(Error::Config {
                    key: "potential.kind".into(),
                    message: "the analytic benchmark needs the harmonic potential".into(),
                });
            };
            let s = run.setup(&cfg)?;
            let psi0 = s.initial_field()?;
            let mut rows = String::from("eps,t,l2_diff\n");
            let mut tables = TableCache::default();
            for &eps in &cfg.epsilon.values {
                let table = tables.get(&s.basis, eps, &s.plane, None)?;
                let stepper = FullStepper::new(table, cfg.time.dt, Nonlinearity::build(NonlinearityKind::None, &s.plane, &s.zgrid, eps)?)?;
                let bench = HarmonicBenchmark {
                    a,
                    b: cfg.potential.b,
                    eps,
                    hermite_count: (s.zgrid.len() / 4).max(8),
                };
                let params = FullParams {
                    dt: cfg.time.dt,
                    steps: cfg.steps(),
                    snapshot_every: cfg.time.snapshot_every,
                    diag_every: 0,
                };
                let mut worst = 0.0f64;
                evolve_full_with(&psi0, &stepper, &params, &mut |t, f| {
                    let exact = analytic_harmonic_benchmark(&psi0, &bench, &[t])?;
                    let d = l2_norm(&f.sub(&exact[0])?)?;
                    worst = worst.max(d);
                    rows.push_str(&format!("{eps:.17e},{t:.17e},{d:.17e}\n"));
                    Ok(())
                })?;
                println!("eps {eps}: max L2 difference {worst:.3e}");
            }
            run.csv("bench.csv", |w| Ok(w.extend_from_slice(rows.as_bytes())))?;
            run.finish(None)?;
        }
        Cmd::Sweep => {
            let r = run_sweep(&cfg, &cfg.epsilon.values, &run.out)?;
            for (i, e) in r.eps.iter().enumerate() {
                match &r.failed[i] {
                    None => println!("eps {e}: sup B1 error {:.6e}", r.sup[i]),
                    Some(m) => println!("eps {e}: failed ({m})"),
                }
            }
            match r.slope {
                Some(s) => println!("log-log slope {s:.4}"),
                None => println!("log-log slope undefined (fewer than two successful epsilons)"),
            }
            println!("strictly decreasing: {}", r.monotone);
            ok = r.monotone;
        }
        Cmd::Accept { .. } => unreachable!(),
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: --threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e @ (Error::Config { .. } | Error::Usage(_))) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
