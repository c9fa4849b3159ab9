//! Symmetric banded eigensolver: spectrum slicing by bisection on LDL^T
//! inertia counts, eigenvectors by inverse iteration on a pivoted band LU.
//!
//! For bandwidth 1 the inertia count is the classical Sturm sequence of a
//! symmetric tridiagonal matrix.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Accepted finite-difference orders of the z Laplacian.
pub const SUPPORTED_FD_ORDERS: [usize; 5] = [2, 4, 6, 8, 10];

/// Central-difference coefficients `c_0..c_K` of `u''` for the given order
/// (`u''_j ~ (c_0 u_j + sum_k c_k (u_{j+k} + u_{j-k})) / h^2`).
pub fn second_derivative_stencil(order: usize) -> Result<Vec<f64>> {
    let c = match order {
        2 => vec![-2.0, 1.0],
        4 => vec![-5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0],
        6 => vec![-49.0 / 18.0, 3.0 / 2.0, -3.0 / 20.0, 1.0 / 90.0],
        8 => vec![-205.0 / 72.0, 8.0 / 5.0, -1.0 / 5.0, 8.0 / 315.0, -1.0 / 560.0],
        10 => vec![
            -5269.0 / 1800.0,
            5.0 / 3.0,
            -5.0 / 21.0,
            5.0 / 126.0,
            -5.0 / 1008.0,
            1.0 / 3150.0,
        ],
        _ => {
            return Err(Error::InvalidGrid(format!(
                "finite-difference order must be one of 2, 4, 6, 8, 10; got {order}"
            )))
        }
    };
    Ok(c)
}

/// Symmetric banded matrix with a varying diagonal and constant off-diagonals
/// (Toeplitz Laplacian plus a multiplicative potential).
#[derive(Debug, Clone, PartialEq)]
pub struct SymBanded {
    diag: Vec<f64>,
    /// `bands[k-1]` is the value on the k-th super/sub diagonal.
    bands: Vec<f64>,
}

impl SymBanded {
    pub fn new(diag: Vec<f64>, bands: Vec<f64>) -> Self {
        Self { diag, bands }
    }

    /// `-d^2/dz^2 + potential` with homogeneous Dirichlet data outside the samples.
    pub fn schrodinger(potential: &[f64], dz: f64, order: usize) -> Result<Self> {
        let c = second_derivative_stencil(order)?;
        let h2 = dz * dz;
        let diag = potential.iter().map(|v| -c[0] / h2 + v).collect();
        let bands = c[1..].iter().map(|ck| -ck / h2).collect();
        Ok(Self { diag, bands })
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn bandwidth(&self) -> usize {
        self.bands.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn bands(&self) -> &[f64] {
        &self.bands
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let d = i.abs_diff(j);
        if d == 0 {
            self.diag[i]
        } else if d <= self.bands.len() {
            self.bands[d - 1]
        } else {
            0.0
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let n = self.len();
        let kb = self.bandwidth();
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            for k in 1..=kb {
                let b = self.bands[k - 1];
                if i >= k {
                    acc += b * x[i - k];
                }
                if i + k < n {
                    acc += b * x[i + k];
                }
            }
            y[i] = acc;
        }
    }

    /// Gershgorin interval containing the spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.len();
        let kb = self.bandwidth();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let mut r = 0.0;
            for k in 1..=kb {
                let b = self.bands[k - 1].abs();
                if i >= k {
                    r += b;
                }
                if i + k < n {
                    r += b;
                }
            }
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// Number of eigenvalues strictly below `sigma` (inertia of `A - sigma I`).
    pub fn count_below(&self, sigma: f64) -> usize {
        let n = self.len();
        let kb = self.bandwidth();
        let (lo, hi) = self.gershgorin();
        let tiny = f64::EPSILON * (hi.abs().max(lo.abs())).max(1.0) * 1e-4;
        // l[i*kb + (d-1)] = L_{i, i-d}
        let mut l = vec![0.0; n * kb.max(1)];
        let mut dvals = vec![0.0; n];
        let mut count = 0;
        for i in 0..n {
            let mut di = self.diag[i] - sigma;
            for d in 1..=kb.min(i) {
                let lij = l[i * kb + d - 1];
                di -= lij * lij * dvals[i - d];
            }
            if di.abs() < tiny {
                di = -tiny;
            }
            dvals[i] = di;
            if di < 0.0 {
                count += 1;
            }
            for d in 1..=kb {
                let r = i + d;
                if r >= n {
                    break;
                }
                let mut s = self.bands[d - 1];
                let jstart = r.saturating_sub(kb);
                for j in jstart..i {
                    s -= l[r * kb + (r - j) - 1] * l[i * kb + (i - j) - 1] * dvals[j];
                }
                l[r * kb + d - 1] = s / di;
            }
        }
        count
    }

    /// Rayleigh quotient `x^T A x / x^T x`.
    pub fn rayleigh(&self, x: &[f64]) -> f64 {
        let mut y = vec![0.0; x.len()];
        self.matvec(x, &mut y);
        let num: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let den: f64 = x.iter().map(|a| a * a).sum();
        num / den
    }

    /// The `count` lowest eigenpairs; eigenvectors have unit Euclidean norm.
    pub fn lowest_eigenpairs(&self, count: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let n = self.len();
        if count == 0 || count > n {
            return Err(Error::SizeMismatch(format!(
                "requested {count} eigenpairs of a {n}x{n} matrix"
            )));
        }
        let (glo, ghi) = self.gershgorin();
        let scale = glo.abs().max(ghi.abs()).max(1.0);
        let mut values = Vec::with_capacity(count);
        for p in 0..count {
            // smallest x with count_below(x) >= p + 1
            let mut lo = if p == 0 { glo } else { values[p - 1] };
            let mut hi = ghi;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if !(mid > lo && mid < hi) || hi - lo <= 4.0 * f64::EPSILON * scale {
                    break;
                }
                if self.count_below(mid) > p {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            values.push(0.5 * (lo + hi));
        }

        let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(count);
        let kb = self.bandwidth();
        for (p, lambda) in values.iter_mut().enumerate() {
            let mut v = start_vector(n, p);
            let mut shift = *lambda;
            let mut best = f64::INFINITY;
            // shift stays pinned at the bisection value so the iteration cannot
            // drift to a neighbouring eigenvalue
            let lu = BandLu::factor(self, *lambda, kb);
            for it in 0..10 {
                lu.solve(&mut v);
                for q in &vectors {
                    let proj: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
                    v.iter_mut().zip(q).for_each(|(vi, qi)| *vi -= proj * qi);
                }
                let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
                if !(norm.is_finite() && norm > 0.0) {
                    return Err(Error::NoConvergence { mode: p, iterations: it + 1 });
                }
                v.iter_mut().for_each(|a| *a /= norm);
                let rq = self.rayleigh(&v);
                let mut av = vec![0.0; n];
                self.matvec(&v, &mut av);
                let resid = av
                    .iter()
                    .zip(&v)
                    .map(|(a, b)| (a - rq * b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                shift = rq;
                if it >= 2 && (resid <= 64.0 * f64::EPSILON * scale || resid > 0.5 * best) {
                    best = best.min(resid);
                    break;
                }
                best = best.min(resid);
            }
            if best > 1e-8 * scale {
                return Err(Error::NoConvergence { mode: p, iterations: 10 });
            }
            if (shift - *lambda).abs() > 1e-6 * scale {
                return Err(Error::Invariant(format!(
                    "inverse iteration for mode {p} converged to {shift}, bisection gave {lambda}"
                )));
            }
            *lambda = shift;
            vectors.push(v);
        }
        Ok((values, vectors))
    }

    /// Full eigendecomposition through a dense symmetric solver.
    pub fn all_eigenpairs_dense(&self) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = self.len();
        let m = DMatrix::from_fn(n, n, |i, j| self.entry(i, j));
        let eig = SymmetricEigen::new(m);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let vectors = order
            .iter()
            .map(|&k| eig.eigenvectors.column(k).iter().copied().collect())
            .collect();
        (values, vectors)
    }
}

fn start_vector(n: usize, p: usize) -> Vec<f64> {
    // deterministic, not orthogonal to any low mode
    (0..n)
        .map(|i| {
            let t = (i as f64 + 0.5) / n as f64;
            1.0 + 0.25 * (7.3 * t + p as f64).sin() + 0.1 * (31.7 * t).cos()
        })
        .collect()
}

/// LU factorization with partial pivoting of `A - shift I` in band storage.
struct BandLu {
    n: usize,
    kl: usize,
    width: usize,
    /// row r stores columns r - kl ..= r + 2 kl (after pivoting fill-in)
    rows: Vec<f64>,
    mult: Vec<f64>,
    piv: Vec<usize>,
}

impl BandLu {
    fn factor(a: &SymBanded, shift: f64, kb: usize) -> Self {
        let n = a.len();
        let kl = kb;
        let width = 3 * kl + 1;
        let mut rows = vec![0.0; n * width];
        let at = |r: usize, c: usize| r * width + (c + kl - r);
        for r in 0..n {
            let c0 = r.saturating_sub(kl);
            let c1 = (r + kl).min(n - 1);
            for c in c0..=c1 {
                let mut v = a.entry(r, c);
                if r == c {
                    v -= shift;
                }
                rows[at(r, c)] = v;
            }
        }
        let (glo, ghi) = a.gershgorin();
        let tiny = f64::EPSILON * glo.abs().max(ghi.abs()).max(1.0);
        let mut mult = vec![0.0; n * kl.max(1)];
        let mut piv = vec![0; n];
        for i in 0..n {
            let rmax = (i + kl).min(n - 1);
            let mut p = i;
            let mut best = rows[at(i, i)].abs();
            for r in i + 1..=rmax {
                let v = rows[at(r, i)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            piv[i] = p;
            let cmax = (i + 2 * kl).min(n - 1);
            if p != i {
                for c in i..=cmax {
                    rows.swap(at(i, c), at(p, c));
                }
            }
            if rows[at(i, i)].abs() < tiny {
                rows[at(i, i)] = tiny;
            }
            let pivot = rows[at(i, i)];
            for r in i + 1..=rmax {
                let m = rows[at(r, i)] / pivot;
                mult[i * kl.max(1) + (r - i - 1)] = m;
                rows[at(r, i)] = 0.0;
                if m != 0.0 {
                    for c in i + 1..=cmax {
                        rows[at(r, c)] -= m * rows[at(i, c)];
                    }
                }
            }
        }
        Self {
            n,
            kl,
            width,
            rows,
            mult,
            piv,
        }
    }

    fn solve(&self, b: &mut [f64]) {
        let (n, kl, width) = (self.n, self.kl, self.width);
        let at = |r: usize, c: usize| r * width + (c + kl - r);
        for i in 0..n {
            let p = self.piv[i];
            if p != i {
                b.swap(i, p);
            }
            let rmax = (i + kl).min(n - 1);
            for r in i + 1..=rmax {
                b[r] -= self.mult[i * kl.max(1) + (r - i - 1)] * b[i];
            }
        }
        for i in (0..n).rev() {
            let cmax = (i + 2 * kl).min(n - 1);
            let mut s = b[i];
            for c in i + 1..=cmax {
                s -= self.rows[at(i, c)] * b[c];
            }
            b[i] = s / self.rows[at(i, i)];
        }
    }
}
