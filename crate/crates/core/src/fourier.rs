//! Unitary 2D FFTs over the transport plane for batched fields.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Planned forward/inverse transforms for an `nx x ny` plane.
///
/// Data are laid out as `((i * ny + j) * batch + b)`, i.e. the batch index
/// (z sample or mode) is fastest.
#[derive(Clone)]
pub struct Fft2 {
    nx: usize,
    ny: usize,
    fx: Arc<dyn Fft<f64>>,
    fy: Arc<dyn Fft<f64>>,
    ix: Arc<dyn Fft<f64>>,
    iy: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Fft2({}x{})", self.nx, self.ny)
    }
}

impl Fft2 {
    pub fn new(nx: usize, ny: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            nx,
            ny,
            fx: planner.plan_fft_forward(nx),
            fy: planner.plan_fft_forward(ny),
            ix: planner.plan_fft_inverse(nx),
            iy: planner.plan_fft_inverse(ny),
        }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn forward(&self, data: &mut [Complex64], batch: usize) {
        self.run(data, batch, &self.fx, &self.fy);
    }

    pub fn inverse(&self, data: &mut [Complex64], batch: usize) {
        self.run(data, batch, &self.ix, &self.iy);
    }

    fn run(&self, data: &mut [Complex64], batch: usize, fx: &Arc<dyn Fft<f64>>, fy: &Arc<dyn Fft<f64>>) {
        let (nx, ny) = (self.nx, self.ny);
        assert_eq!(data.len(), nx * ny * batch, "buffer does not match plane x batch");
        let norm = 1.0 / ((nx * ny) as f64).sqrt();
        if batch == 1 {
            // rows are contiguous
            let mut scratch = vec![Complex64::default(); fy.get_inplace_scratch_len()];
            for row in data.chunks_exact_mut(ny) {
                fy.process_with_scratch(row, &mut scratch);
            }
        } else {
            transform_axis(data, nx, ny, batch, fy);
        }
        transform_axis(data, 1, nx, ny * batch, fx);
        data.iter_mut().for_each(|v| *v *= norm);
    }
}

/// Planned unitary transforms of an `nx x ny x nz` box (z fastest).
#[derive(Clone)]
pub struct Fft3 {
    xy: Fft2,
    nz: usize,
    fz: Arc<dyn Fft<f64>>,
    iz: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Fft3({}x{}x{})", self.xy.nx(), self.xy.ny(), self.nz)
    }
}

impl Fft3 {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            xy: Fft2::new(nx, ny),
            nz,
            fz: planner.plan_fft_forward(nz),
            iz: planner.plan_fft_inverse(nz),
        }
    }

    pub fn len(&self) -> usize {
        self.xy.nx() * self.xy.ny() * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.z_lines(data, &self.fz);
        self.xy.forward(data, self.nz);
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        self.z_lines(data, &self.iz);
        self.xy.inverse(data, self.nz);
    }

    fn z_lines(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        for line in data.chunks_exact_mut(self.nz) {
            fft.process_with_scratch(line, &mut scratch);
        }
        let norm = 1.0 / (self.nz as f64).sqrt();
        data.iter_mut().for_each(|v| *v *= norm);
    }
}

/// Linear convolution of a real `nx x ny x nz` array through a box padded to
/// twice its size per axis; transforms skip lines that are known to be zero on
/// the way in and lines that are discarded on the way out.
#[derive(Clone)]
pub struct PaddedConv3 {
    n: (usize, usize, usize),
    m: (usize, usize, usize),
    fwd: [Arc<dyn Fft<f64>>; 3],
    inv: [Arc<dyn Fft<f64>>; 3],
}

impl std::fmt::Debug for PaddedConv3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "PaddedConv3({}x{}x{})", self.m.0, self.m.1, self.m.2)
    }
}

impl PaddedConv3 {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Self {
        let m = (2 * nx, 2 * ny, 2 * nz);
        let mut planner = FftPlanner::new();
        Self {
            n: (nx, ny, nz),
            m,
            fwd: [
                planner.plan_fft_forward(m.0),
                planner.plan_fft_forward(m.1),
                planner.plan_fft_forward(m.2),
            ],
            inv: [
                planner.plan_fft_inverse(m.0),
                planner.plan_fft_inverse(m.1),
                planner.plan_fft_inverse(m.2),
            ],
        }
    }

    pub fn padded_len(&self) -> usize {
        self.m.0 * self.m.1 * self.m.2
    }

    /// `IFFT(mult * FFT(pad(rho)))` restricted to the unpadded box, with unitary
    /// scaling (the multiplier is the unitary transform of the kernel times `sqrt(N)`).
    pub fn convolve(&self, rho: &[f64], mult: &[f64]) -> Vec<f64> {
        let (nx, ny, nz) = self.n;
        let (mx, my, mz) = self.m;
        assert_eq!(rho.len(), nx * ny * nz);
        assert_eq!(mult.len(), mx * my * mz);
        let mut buf = vec![Complex64::default(); mx * my * mz];
        for i in 0..nx {
            for j in 0..ny {
                let dst = (i * my + j) * mz;
                let src = (i * ny + j) * nz;
                for l in 0..nz {
                    buf[dst + l] = Complex64::new(rho[src + l], 0.0);
                }
            }
            // the first ny z-lines of this x-slab are contiguous
            let slab = &mut buf[i * my * mz..(i * my + ny) * mz];
            self.fwd[2].process(slab);
        }
        let mut tmp = vec![Complex64::default(); my.max(mx) * mz.max(my)];
        for i in 0..nx {
            self.y_pass(&mut buf[i * my * mz..(i + 1) * my * mz], &mut tmp, &self.fwd[1], ny, my);
        }
        self.x_pass(&mut buf, &mut tmp, &self.fwd[0]);
        buf.iter_mut().zip(mult).for_each(|(v, k)| *v *= *k);
        self.x_pass(&mut buf, &mut tmp, &self.inv[0]);
        for i in 0..nx {
            self.y_pass(&mut buf[i * my * mz..(i + 1) * my * mz], &mut tmp, &self.inv[1], my, ny);
        }
        let scale = 1.0 / (mx * my * mz) as f64;
        let mut out = vec![0.0; nx * ny * nz];
        for i in 0..nx {
            let slab = &mut buf[i * my * mz..(i * my + ny) * mz];
            self.inv[2].process(slab);
            for j in 0..ny {
                let src = (i * my + j) * mz;
                let dst = (i * ny + j) * nz;
                for l in 0..nz {
                    out[dst + l] = buf[src + l].re * scale;
                }
            }
        }
        out
    }

    /// Transform along y inside one x-slab; reads the first `read` and writes the first `write` y-rows.
    fn y_pass(&self, slab: &mut [Complex64], tmp: &mut [Complex64], fft: &Arc<dyn Fft<f64>>, read: usize, write: usize) {
        let (my, mz) = (self.m.1, self.m.2);
        let lines = &mut tmp[..my * mz];
        lines.iter_mut().for_each(|v| *v = Complex64::default());
        for j in 0..read {
            for l in 0..mz {
                lines[l * my + j] = slab[j * mz + l];
            }
        }
        fft.process(lines);
        for j in 0..write {
            for l in 0..mz {
                slab[j * mz + l] = lines[l * my + j];
            }
        }
    }

    fn x_pass(&self, buf: &mut [Complex64], tmp: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let (mx, my, mz) = self.m;
        let stride = my * mz;
        let lines = &mut tmp[..mx * mz];
        for j in 0..my {
            for i in 0..mx {
                let row = &buf[i * stride + j * mz..i * stride + (j + 1) * mz];
                for (l, v) in row.iter().enumerate() {
                    lines[l * mx + i] = *v;
                }
            }
            fft.process(lines);
            for i in 0..mx {
                let row = &mut buf[i * stride + j * mz..i * stride + (j + 1) * mz];
                for (l, v) in row.iter_mut().enumerate() {
                    *v = lines[l * mx + i];
                }
            }
        }
    }
}

/// FFT along the middle axis of an `(outer, len, inner)` array.
fn transform_axis(
    data: &mut [Complex64],
    outer: usize,
    len: usize,
    inner: usize,
    fft: &Arc<dyn Fft<f64>>,
) {
    let mut buf = vec![Complex64::default(); len * inner];
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    for o in 0..outer {
        let block = &mut data[o * len * inner..(o + 1) * len * inner];
        // transpose to (inner, len) so each line is contiguous
        for a in 0..len {
            for i in 0..inner {
                buf[i * len + a] = block[a * inner + i];
            }
        }
        for line in buf.chunks_exact_mut(len) {
            fft.process_with_scratch(line, &mut scratch);
        }
        for a in 0..len {
            for i in 0..inner {
                block[a * inner + i] = buf[i * len + a];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
    }

    #[test]
    fn round_trip_and_parseval() {
        let f = Fft2::new(16, 8);
        let mut s = 7u64;
        let data: Vec<Complex64> = (0..16 * 8 * 3)
            .map(|_| Complex64::new(lcg(&mut s), lcg(&mut s)))
            .collect();
        let mut work = data.clone();
        f.forward(&mut work, 3);
        let e0: f64 = data.iter().map(|v| v.norm_sqr()).sum();
        let e1: f64 = work.iter().map(|v| v.norm_sqr()).sum();
        assert!((e0 - e1).abs() < 1e-12 * e0);
        f.inverse(&mut work, 3);
        for (a, b) in data.iter().zip(&work) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn padded_convolution_matches_direct_sum() {
        let (nx, ny, nz) = (4, 2, 6);
        let mut s = 3u64;
        let rho: Vec<f64> = (0..nx * ny * nz).map(|_| lcg(&mut s)).collect();
        // kernel on the padded displacement grid, wrapped indexing
        let (mx, my, mz) = (2 * nx, 2 * ny, 2 * nz);
        let kern = |a: usize, b: usize, c: usize| -> f64 { 1.0 / (1.0 + (a * a + 2 * b * b + 3 * c * c) as f64) };
        let wrap = |i: usize, m: usize| if i < m / 2 { i } else { m - i };
        let mut k = vec![Complex64::default(); mx * my * mz];
        for i in 0..mx {
            for j in 0..my {
                for l in 0..mz {
                    k[(i * my + j) * mz + l] = Complex64::new(kern(wrap(i, mx), wrap(j, my), wrap(l, mz)), 0.0);
                }
            }
        }
        let f3 = Fft3::new(mx, my, mz);
        f3.forward(&mut k);
        let root = ((mx * my * mz) as f64).sqrt();
        let mult: Vec<f64> = k.iter().map(|v| v.re * root).collect();
        let got = PaddedConv3::new(nx, ny, nz).convolve(&rho, &mult);
        for i in 0..nx {
            for j in 0..ny {
                for l in 0..nz {
                    let mut want = 0.0;
                    for a in 0..nx {
                        for b in 0..ny {
                            for c in 0..nz {
                                want += kern(i.abs_diff(a), j.abs_diff(b), l.abs_diff(c)) * rho[(a * ny + b) * nz + c];
                            }
                        }
                    }
                    let g = got[(i * ny + j) * nz + l];
                    assert!((g - want).abs() < 1e-12, "{i} {j} {l}: {g} vs {want}");
                }
            }
        }
    }

    #[test]
    fn batch_lines_are_independent() {
        let f = Fft2::new(8, 8);
        let mut two = vec![Complex64::default(); 64 * 2];
        let mut one = vec![Complex64::default(); 64];
        for i in 0..64 {
            let v = Complex64::new((i as f64).sin(), (3.0 * i as f64).cos());
            two[i * 2 + 1] = v;
            one[i] = v;
        }
        f.forward(&mut two, 2);
        f.forward(&mut one, 1);
        for i in 0..64 {
            assert!(two[i * 2].norm() == 0.0);
            assert!((two[i * 2 + 1] - one[i]).norm() < 1e-14);
        }
    }
}
