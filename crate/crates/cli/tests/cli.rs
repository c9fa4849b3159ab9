use std::process::Command;

fn cyqw() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cyqw"))
}

#[test]
fn bad_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    std::fs::write(&p, "[potential]\nkind = \"harmonic\"\n[epsilon]\nvalues = [-0.1]\n").unwrap();
    let out = cyqw().arg("--config").arg(&p).arg("--out").arg(dir.path()).arg("eigs").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epsilon.values"));
}

#[test]
fn unknown_suite_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = cyqw().args(["accept", "bogus", "--out"]).arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown suite"));
}

#[test]
fn eigs_writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("run.toml");
    std::fs::write(&p, "[potential]\nkind = \"harmonic\"\n[grids]\nnz = 256\nlz = 8.0\nmodes = 6\n").unwrap();
    let out = cyqw().arg("--config").arg(&p).arg("--out").arg(dir.path()).arg("eigs").output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("eigs.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
    let manifest = std::fs::read_to_string(dir.path().join("manifest.toml")).unwrap();
    assert!(manifest.contains("eigs.csv"));
}

#[test]
fn spectrum_suite_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = cyqw().args(["accept", "spectrum", "--out"]).arg(dir.path()).output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{text}");
    assert!(text.contains("criterion  1: PASS"), "{text}");
}
