//! Binary field container, eigenbasis cache, run manifest and the writer lane.
//!
//! Header layout (256 bytes, little endian):
//!
//! | offset | content |
//! |---|---|
//! | 0 | magic `CYQW` |
//! | 4 | version `u16` = 1 |
//! | 6 | representation `u8`: 0 grid-z, 1 mode-z, 2 eigenbasis |
//! | 7 | (x, y) space `u8`: 0 physical, 1 Fourier |
//! | 8 | `n_x, n_y, depth, n_z` as `u32` |
//! | 24 | `L_x, L_y, L_z, t` as `f64` |
//! | 56 | sha256 fingerprint of the eigenbasis (zero when absent) |
//! | 88 | `B` as `f64` |
//! | 96 | finite-difference order `u32` |
//!
//! Field payloads are interleaved `(re, im)` `f64` with the z sample or mode
//! index fastest. Eigenbasis payloads hold `E_p`, then `V_c`, then every `chi_p`.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::mpsc::{sync_channel, SyncSender};
use std::sync::Arc;
use std::thread::JoinHandle;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::field::{Field3D, Repr, XySpace};
use crate::grid::{Grid1D, Grid2D};
use crate::modes::ModeSet;
use crate::spectrum::{hex, EigenBasis};

pub const MAGIC: &[u8; 4] = b"CYQW";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 256;

const TAG_GRID: u8 = 0;
const TAG_MODE: u8 = 1;
const TAG_BASIS: u8 = 2;

#[derive(Debug, Clone, PartialEq)]
struct Header {
    repr: u8,
    space: u8,
    nx: u32,
    ny: u32,
    depth: u32,
    nz: u32,
    lx: f64,
    ly: f64,
    lz: f64,
    t: f64,
    fingerprint: [u8; 32],
    b: f64,
    order: u32,
}

impl Header {
    fn encode(&self) -> Vec<u8> {
        let mut h = vec![0u8; HEADER_LEN];
        h[0..4].copy_from_slice(MAGIC);
        h[4..6].copy_from_slice(&VERSION.to_le_bytes());
        h[6] = self.repr;
        h[7] = self.space;
        for (i, v) in [self.nx, self.ny, self.depth, self.nz].iter().enumerate() {
            h[8 + 4 * i..12 + 4 * i].copy_from_slice(&v.to_le_bytes());
        }
        for (i, v) in [self.lx, self.ly, self.lz, self.t].iter().enumerate() {
            h[24 + 8 * i..32 + 8 * i].copy_from_slice(&v.to_le_bytes());
        }
        h[56..88].copy_from_slice(&self.fingerprint);
        h[88..96].copy_from_slice(&self.b.to_le_bytes());
        h[96..100].copy_from_slice(&self.order.to_le_bytes());
        h
    }

    fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format(format!("{} bytes, header needs {HEADER_LEN}", bytes.len())));
        }
        if &bytes[0..4] != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let u = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
        let f = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
        let mut fingerprint = [0u8; 32];
        fingerprint.copy_from_slice(&bytes[56..88]);
        Ok(Self {
            repr: bytes[6],
            space: bytes[7],
            nx: u(8),
            ny: u(12),
            depth: u(16),
            nz: u(20),
            lx: f(24),
            ly: f(32),
            lz: f(40),
            t: f(48),
            fingerprint,
            b: f(88),
            order: u(96),
        })
    }
}

fn push_f64s(out: &mut Vec<u8>, v: &[f64]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn read_f64s(bytes: &[u8], count: usize) -> Result<Vec<f64>> {
    if bytes.len() < 8 * count {
        return Err(Error::Format("payload truncated".into()));
    }
    Ok(bytes[..8 * count]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

/// Serialize a field at time `t`.
pub fn encode_field(f: &Field3D, t: f64) -> Vec<u8> {
    let plane = f.plane();
    let header = Header {
        repr: match f.repr() {
            Repr::GridZ => TAG_GRID,
            Repr::ModeZ => TAG_MODE,
        },
        space: match f.space() {
            XySpace::Physical => 0,
            XySpace::Fourier => 1,
        },
        nx: plane.nx() as u32,
        ny: plane.ny() as u32,
        depth: f.depth() as u32,
        nz: f.zgrid().len() as u32,
        lx: plane.lx(),
        ly: plane.ly(),
        lz: f.zgrid().half_length(),
        t,
        fingerprint: f.basis().map_or([0u8; 32], |b| b.fingerprint()),
        b: f.basis().map_or(0.0, |b| b.b()),
        order: f.basis().map_or(0, |b| b.order() as u32),
    };
    let mut out = header.encode();
    out.reserve(16 * f.data().len());
    for v in f.data() {
        out.extend_from_slice(&v.re.to_le_bytes());
        out.extend_from_slice(&v.im.to_le_bytes());
    }
    out
}

/// Inverse of [`encode_field`]; mode fields need the basis they were projected on.
pub fn decode_field(bytes: &[u8], basis: Option<&Arc<EigenBasis>>) -> Result<(Field3D, f64)> {
    let h = Header::decode(bytes)?;
    let (repr, basis) = match h.repr {
        TAG_GRID => (Repr::GridZ, None),
        TAG_MODE => {
            let b = basis.ok_or_else(|| Error::Format("mode field needs its eigenbasis".into()))?;
            if b.fingerprint() != h.fingerprint {
                return Err(Error::Format("eigenbasis fingerprint mismatch".into()));
            }
            (Repr::ModeZ, Some(b.clone()))
        }
        other => return Err(Error::Format(format!("representation tag {other} is not a field"))),
    };
    let space = match h.space {
        0 => XySpace::Physical,
        1 => XySpace::Fourier,
        other => return Err(Error::Format(format!("space tag {other}"))),
    };
    let plane = Grid2D::new(h.lx, h.ly, h.nx as usize, h.ny as usize)?;
    let zgrid = Grid1D::new(h.lz, h.nz as usize)?;
    let count = plane.len() * h.depth as usize;
    let raw = read_f64s(&bytes[HEADER_LEN..], 2 * count)?;
    if bytes.len() != HEADER_LEN + 16 * count {
        return Err(Error::Format("trailing bytes after payload".into()));
    }
    let data = raw.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect();
    Ok((Field3D::from_parts(repr, space, plane, zgrid, basis, data)?, h.t))
}

/// Snapshot of a limit state as a mode-z container.
pub fn encode_modeset(m: &ModeSet) -> Result<Vec<u8>> {
    Ok(encode_field(&m.to_mode_field()?, m.t))
}

pub fn encode_basis(b: &EigenBasis) -> Vec<u8> {
    let header = Header {
        repr: TAG_BASIS,
        space: 0,
        nx: 0,
        ny: 0,
        depth: b.len() as u32,
        nz: b.grid().len() as u32,
        lx: 0.0,
        ly: 0.0,
        lz: b.grid().half_length(),
        t: 0.0,
        fingerprint: b.fingerprint(),
        b: b.b(),
        order: b.order() as u32,
    };
    let mut out = header.encode();
    push_f64s(&mut out, b.energies());
    push_f64s(&mut out, b.vc());
    for chi in b.modes() {
        push_f64s(&mut out, chi);
    }
    out
}

/// Load a cached basis; every eigenbasis invariant is re-checked.
pub fn decode_basis(bytes: &[u8]) -> Result<EigenBasis> {
    let h = Header::decode(bytes)?;
    if h.repr != TAG_BASIS {
        return Err(Error::Format("not an eigenbasis container".into()));
    }
    let (p, n) = (h.depth as usize, h.nz as usize);
    let vals = read_f64s(&bytes[HEADER_LEN..], p + n + p * n)?;
    if bytes.len() != HEADER_LEN + 8 * (p + n + p * n) {
        return Err(Error::Format("trailing bytes after payload".into()));
    }
    let grid = Grid1D::new(h.lz, n)?;
    let energies = vals[..p].to_vec();
    let vc = vals[p..p + n].to_vec();
    let chi = vals[p + n..].chunks_exact(n).map(|c| c.to_vec()).collect();
    let basis = EigenBasis::from_parts(grid, h.b, h.order as usize, vc, energies, chi)?;
    if basis.fingerprint() != h.fingerprint {
        return Err(Error::Format("stored fingerprint does not match the potential".into()));
    }
    Ok(basis)
}

/// Cached `count`-mode basis under `dir`, keyed by its potential fingerprint; rebuilt on a miss or a bad file.
pub fn cached_basis<F>(dir: &Path, key: &[u8; 32], count: usize, build: F) -> Result<Arc<EigenBasis>>
where
    F: FnOnce() -> Result<EigenBasis>,
{
    let path = dir.join(format!("basis-{}-{count}.cyqw", &hex(key)[..16]));
    if let Ok(bytes) = fs::read(&path) {
        if let Ok(b) = decode_basis(&bytes) {
            if &b.fingerprint() == key && b.len() == count {
                return Ok(Arc::new(b));
            }
        }
    }
    let b = build()?;
    fs::create_dir_all(dir)?;
    fs::write(&path, encode_basis(&b))?;
    Ok(Arc::new(b))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    /// path relative to the manifest directory
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTiming {
    pub name: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config: String,
    #[serde(default)]
    pub fingerprints: Vec<ArtifactEntry>,
    #[serde(default)]
    pub artifacts: Vec<ArtifactEntry>,
    #[serde(default)]
    pub phases: Vec<PhaseTiming>,
    pub halt_reason: Option<String>,
    /// report-only warnings raised during the run
    #[serde(default)]
    pub notes: Vec<String>,
}

impl RunManifest {
    pub fn new(config: &str) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.to_string(),
            ..Self::default()
        }
    }

    /// Record `path` (under `root`) with its current hash.
    pub fn add_artifact(&mut self, root: &Path, path: &Path) -> Result<()> {
        let rel = path.strip_prefix(root).unwrap_or(path);
        let entry = ArtifactEntry {
            path: rel.to_string_lossy().into_owned(),
            sha256: file_sha256(path)?,
        };
        self.artifacts.retain(|a| a.path != entry.path);
        self.artifacts.push(entry);
        Ok(())
    }

    pub fn add_fingerprint(&mut self, name: &str, fp: &[u8; 32]) {
        self.fingerprints.push(ArtifactEntry {
            path: name.to_string(),
            sha256: hex(fp),
        });
    }

    pub fn add_phase(&mut self, name: &str, seconds: f64) {
        self.phases.push(PhaseTiming {
            name: name.to_string(),
            seconds,
        });
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::Manifest(e.to_string()))?;
        fs::write(path, text)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Manifest(e.to_string()))
    }

    /// Every listed artifact exists under `root` and still hashes to its entry.
    pub fn verify(&self, root: &Path) -> Result<()> {
        for a in &self.artifacts {
            let p = root.join(&a.path);
            if !p.exists() {
                return Err(Error::Manifest(format!("missing artifact {}", a.path)));
            }
            let h = file_sha256(&p)?;
            if h != a.sha256 {
                return Err(Error::Manifest(format!("fingerprint mismatch for {}", a.path)));
            }
        }
        Ok(())
    }
}

/// Dedicated file writer fed through a bounded queue; a full queue blocks the sender.
pub struct WriterLane {
    tx: Option<SyncSender<(PathBuf, Vec<u8>)>>,
    handle: Option<JoinHandle<Result<Vec<PathBuf>>>>,
}

impl WriterLane {
    pub fn spawn(capacity: usize) -> Self {
        let (tx, rx) = sync_channel::<(PathBuf, Vec<u8>)>(capacity.max(1));
        let handle = std::thread::spawn(move || {
            let mut written = Vec::new();
            for (path, bytes) in rx {
                if let Some(parent) = path.parent() {
                    fs::create_dir_all(parent)?;
                }
                fs::write(&path, bytes)?;
                written.push(path);
            }
            Ok(written)
        });
        Self {
            tx: Some(tx),
            handle: Some(handle),
        }
    }

    pub fn send(&self, path: PathBuf, bytes: Vec<u8>) -> Result<()> {
        self.tx
            .as_ref()
            .expect("lane open")
            .send((path, bytes))
            .map_err(|_| Error::Io(std::io::Error::other("writer lane closed")))
    }

    /// Close the queue and wait for every pending write; returns the written paths in order.
    pub fn finish(mut self) -> Result<Vec<PathBuf>> {
        self.tx.take();
        self.handle
            .take()
            .expect("lane joined once")
            .join()
            .map_err(|_| Error::Io(std::io::Error::other("writer lane panicked")))?
    }
}

impl Drop for WriterLane {
    fn drop(&mut self) {
        self.tx.take();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{build_potential, PotentialSpec};
    use crate::spectrum::solve_eigs;

    fn basis() -> Arc<EigenBasis> {
        let g = Grid1D::new(6.0, 128).unwrap();
        let v = build_potential(&PotentialSpec::harmonic(1.0, 1.0), &g).unwrap();
        Arc::new(solve_eigs(&v.values, 1.0, &g, 4).unwrap())
    }

    #[test]
    fn grid_field_round_trip() {
        let plane = Grid2D::new(4.0, 2.0, 8, 4).unwrap();
        let z = Grid1D::new(3.0, 16).unwrap();
        let f = Field3D::from_fn(&plane, &z, |x, y, z| Complex64::new(x + z, y * z));
        let bytes = encode_field(&f, 0.25);
        assert_eq!(&bytes[0..4], b"CYQW");
        let (g, t) = decode_field(&bytes, None).unwrap();
        assert_eq!(t, 0.25);
        assert_eq!(g.data(), f.data());
        assert_eq!(g.plane(), f.plane());
    }

    #[test]
    fn basis_cache_round_trip_and_tamper() {
        let b = basis();
        let bytes = encode_basis(&b);
        let c = decode_basis(&bytes).unwrap();
        assert_eq!(c.energies(), b.energies());
        assert_eq!(c.fingerprint(), b.fingerprint());
        let mut bad = bytes.clone();
        // perturb E_0
        bad[HEADER_LEN + 6] ^= 0x08;
        assert!(decode_basis(&bad).is_err());
    }

    #[test]
    fn mode_field_requires_matching_basis() {
        let b = basis();
        let plane = Grid2D::new(4.0, 4.0, 4, 4).unwrap();
        let m = ModeSet::zeros(&plane, &b);
        let bytes = encode_modeset(&m).unwrap();
        assert!(decode_field(&bytes, None).is_err());
        let (f, _) = decode_field(&bytes, Some(&b)).unwrap();
        assert_eq!(f.repr(), Repr::ModeZ);
    }

    #[test]
    fn manifest_detects_changes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        fs::write(&p, "x\n1\n").unwrap();
        let mut m = RunManifest::new("[grids]\n");
        m.add_artifact(dir.path(), &p).unwrap();
        let mp = dir.path().join("manifest.toml");
        m.write(&mp).unwrap();
        let back = RunManifest::read(&mp).unwrap();
        back.verify(dir.path()).unwrap();
        fs::write(&p, "x\n2\n").unwrap();
        assert!(back.verify(dir.path()).is_err());
    }

    #[test]
    fn writer_lane_preserves_order() {
        let dir = tempfile::tempdir().unwrap();
        let lane = WriterLane::spawn(1);
        for i in 0..5 {
            lane.send(dir.path().join(format!("{i}.bin")), vec![i as u8]).unwrap();
        }
        let paths = lane.finish().unwrap();
        assert_eq!(paths.len(), 5);
        assert_eq!(fs::read(&paths[3]).unwrap(), vec![3u8]);
    }
}
