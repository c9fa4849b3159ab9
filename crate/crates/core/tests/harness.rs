use cyqw::config::{parse_config, Config};
use cyqw::error::Error;
use cyqw::harness::{desk_config, run_acceptance, Setup, Suite};

#[test]
fn config_file_round_trips_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("run.toml");
    std::fs::write(&p, "[potential]\nkind = \"harmonic\"\na = 2.0\n\n[grids]\nnz = 256\nmodes = 6\n").unwrap();
    let c = parse_config(&p).unwrap();
    assert_eq!(c.potential.a, 2.0);
    assert_eq!(c.grids.nz, 256);
    assert_eq!(c.grids.modes, 6);
    assert!(matches!(parse_config(&dir.path().join("missing.toml")), Err(Error::Config { .. })));
}

#[test]
fn desk_config_validates_and_sets_up() {
    let c = desk_config();
    c.validate().unwrap();
    let again = Config::from_toml(&c.to_toml()).unwrap();
    assert_eq!(again, c);
    let s = Setup::new(&c, None).unwrap();
    assert_eq!(s.basis.len(), c.grids.modes);
    assert!(s.coupling.alpha.iter().all(|a| *a > 0.0));
}

#[test]
fn effmass_suite_passes_with_half_alpha_rows() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_acceptance(Suite::Effmass, dir.path()).unwrap();
    assert!(r.passed(), "{}", r.summary());
    assert_eq!(r.criteria().iter().map(|c| c.0).collect::<Vec<_>>(), vec![2, 3, 4, 5]);
    let csv = std::fs::read_to_string(dir.path().join("c2/effmass_a1_b1.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "0");
    assert!((row[2].parse::<f64>().unwrap() - 0.5).abs() < 1e-6);
    assert!(dir.path().join("report.csv").exists());
}

#[test]
fn unknown_suite_is_a_usage_error() {
    assert!(matches!("everything".parse::<Suite>(), Err(Error::Usage(_))));
}
