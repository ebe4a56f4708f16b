//! Dense eigendecomposition for small complex matrices.
//!
//! The Fourier matrices analyzed in this crate are complex perturbations of
//! row-stochastic matrices with at most a few dozen states, so a textbook
//! Schur decomposition (Householder reduction to Hessenberg form followed by
//! shifted QR with Givens rotations) is both adequate and dependency-free.
//! Eigenvectors are recovered from the triangular factor by substitution,
//! which is well conditioned for the simple, well-separated eigenvalues the
//! callers care about.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

const C_ZERO: Complex64 = Complex64::new(0.0, 0.0);
const C_ONE: Complex64 = Complex64::new(1.0, 0.0);

/// 1-norm of a complex scalar, cheaper than the modulus and good enough for
/// deflation thresholds.
fn cabs1(z: Complex64) -> f64 {
    z.re.abs() + z.im.abs()
}

/// Complex Givens rotation `G = [[c, s], [-conj(s), c]]` with real `c`,
/// mapping `(f, g)` to `(r, 0)`.
fn givens(f: Complex64, g: Complex64) -> (f64, Complex64, Complex64) {
    if g == C_ZERO {
        return (1.0, C_ZERO, f);
    }
    if f == C_ZERO {
        let ng = g.norm();
        return (0.0, g.conj() / ng, Complex64::new(ng, 0.0));
    }
    let nf = f.norm();
    let h = (nf * nf + g.norm_sqr()).sqrt();
    let c = nf / h;
    let phase = f / nf;
    let s = phase * g.conj() / h;
    (c, s, phase * h)
}

/// Schur decomposition `A = Z T Z^H` with unitary `Z` and upper-triangular `T`.
pub struct ComplexEigen {
    t: DMatrix<Complex64>,
    z: DMatrix<Complex64>,
    values: Vec<Complex64>,
}

impl ComplexEigen {
    pub fn new(a: &DMatrix<Complex64>) -> Result<Self> {
        let n = a.nrows();
        if n != a.ncols() {
            return Err(Error::Numeric("matrix is not square".into()));
        }
        if n == 0 {
            return Err(Error::Numeric("empty matrix".into()));
        }
        let mut t = a.clone();
        let mut z = DMatrix::identity(n, n);
        if n > 2 {
            hessenberg(&mut t, &mut z);
        }
        qr_schur(&mut t, &mut z)?;
        let values = (0..n).map(|i| t[(i, i)]).collect();
        Ok(Self { t, z, values })
    }

    /// Eigenvalues in Schur order (unsorted).
    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn spectral_radius(&self) -> f64 {
        self.values.iter().map(|l| l.norm()).fold(0.0, f64::max)
    }

    /// Index of the eigenvalue of largest modulus.
    pub fn dominant_index(&self) -> usize {
        let mut best = 0;
        for i in 1..self.values.len() {
            if self.values[i].norm() > self.values[best].norm() {
                best = i;
            }
        }
        best
    }

    /// Largest modulus among eigenvalues other than `idx`; 0 for 1x1 matrices.
    pub fn subdominant_modulus(&self, idx: usize) -> f64 {
        self.values
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != idx)
            .map(|(_, l)| l.norm())
            .fold(0.0, f64::max)
    }

    /// Minimal distance from eigenvalue `idx` to the rest of the spectrum.
    pub fn separation(&self, idx: usize) -> f64 {
        self.values
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != idx)
            .map(|(_, l)| (l - self.values[idx]).norm())
            .fold(f64::INFINITY, f64::min)
    }

    /// Right eigenvector for the eigenvalue at Schur index `idx`, unit norm.
    /// Only meaningful for simple eigenvalues.
    pub fn right_eigenvector(&self, idx: usize) -> DVector<Complex64> {
        let n = self.t.nrows();
        let lambda = self.values[idx];
        let mut y = DVector::from_element(n, C_ZERO);
        y[idx] = C_ONE;
        for j in (0..idx).rev() {
            let mut acc = C_ZERO;
            for k in (j + 1)..=idx {
                acc += self.t[(j, k)] * y[k];
            }
            let mut den = self.t[(j, j)] - lambda;
            if den.norm() < 1e-300 {
                den = Complex64::new(1e-300, 0.0);
            }
            y[j] = -acc / den;
        }
        let mut v = &self.z * y;
        let norm = v.norm();
        if norm > 0.0 {
            v /= Complex64::new(norm, 0.0);
        }
        v
    }

    /// Left eigenvector `w` with `w^H A = lambda w^H`, unit norm.
    pub fn left_eigenvector(&self, idx: usize) -> DVector<Complex64> {
        let n = self.t.nrows();
        let lambda_bar = self.values[idx].conj();
        let mut y = DVector::from_element(n, C_ZERO);
        y[idx] = C_ONE;
        for j in (idx + 1)..n {
            let mut acc = C_ZERO;
            for k in idx..j {
                acc += self.t[(k, j)].conj() * y[k];
            }
            let mut den = lambda_bar - self.t[(j, j)].conj();
            if den.norm() < 1e-300 {
                den = Complex64::new(1e-300, 0.0);
            }
            y[j] = acc / den;
        }
        let mut w = &self.z * y;
        let norm = w.norm();
        if norm > 0.0 {
            w /= Complex64::new(norm, 0.0);
        }
        w
    }

    /// Spectral projector `v w^H / (w^H v)` onto the eigenspace at `idx`.
    pub fn projector(&self, idx: usize) -> DMatrix<Complex64> {
        let v = self.right_eigenvector(idx);
        let w = self.left_eigenvector(idx);
        let denom: Complex64 = w.iter().zip(v.iter()).map(|(wi, vi)| wi.conj() * vi).sum();
        let n = v.len();
        let mut p = DMatrix::from_element(n, n, C_ZERO);
        for i in 0..n {
            for j in 0..n {
                p[(i, j)] = v[i] * w[j].conj() / denom;
            }
        }
        p
    }
}

/// Householder reduction to upper Hessenberg form, accumulating the
/// transformation into `z`.
fn hessenberg(h: &mut DMatrix<Complex64>, z: &mut DMatrix<Complex64>) {
    let n = h.nrows();
    for k in 0..n - 2 {
        // Reflector annihilating column k below the subdiagonal.
        let alpha = h[(k + 1, k)];
        let mut xnorm_sq = 0.0;
        for i in k + 2..n {
            xnorm_sq += h[(i, k)].norm_sqr();
        }
        if xnorm_sq == 0.0 && alpha.im == 0.0 {
            continue;
        }
        let beta = -(alpha.norm_sqr() + xnorm_sq).sqrt()
            * if alpha.re >= 0.0 { 1.0 } else { -1.0 };
        let beta = Complex64::new(beta, 0.0);
        let tau = (beta - alpha) / beta;
        let scale = C_ONE / (alpha - beta);
        // v = [1, x_rest * scale]
        let mut v = vec![C_ONE; n - k - 1];
        for i in k + 2..n {
            v[i - k - 1] = h[(i, k)] * scale;
        }
        // The reflector with H^H x = beta e1 is H = I - tau v v^H; the
        // similarity is H^H A H, so the left factor carries conj(tau).
        for j in k..n {
            let mut dot = C_ZERO;
            for i in k + 1..n {
                dot += v[i - k - 1].conj() * h[(i, j)];
            }
            let f = tau.conj() * dot;
            for i in k + 1..n {
                let vi = v[i - k - 1];
                h[(i, j)] -= f * vi;
            }
        }
        // Right: columns k+1..n of all rows.
        for i in 0..n {
            let mut dot = C_ZERO;
            for j in k + 1..n {
                dot += h[(i, j)] * v[j - k - 1];
            }
            let f = dot * tau;
            for j in k + 1..n {
                h[(i, j)] -= f * v[j - k - 1].conj();
            }
        }
        for i in 0..n {
            let mut dot = C_ZERO;
            for j in k + 1..n {
                dot += z[(i, j)] * v[j - k - 1];
            }
            let f = dot * tau;
            for j in k + 1..n {
                z[(i, j)] -= f * v[j - k - 1].conj();
            }
        }
        h[(k + 1, k)] = beta;
        for i in k + 2..n {
            h[(i, k)] = C_ZERO;
        }
    }
}

/// Wilkinson shift: eigenvalue of the trailing 2x2 block closest to the
/// bottom-right entry.
fn wilkinson_shift(h: &DMatrix<Complex64>, hi: usize) -> Complex64 {
    let a = h[(hi - 1, hi - 1)];
    let b = h[(hi - 1, hi)];
    let c = h[(hi, hi - 1)];
    let d = h[(hi, hi)];
    let tr = a + d;
    let det = a * d - b * c;
    let disc = (tr * tr * 0.25 - det).sqrt();
    let l1 = tr * 0.5 + disc;
    let l2 = tr * 0.5 - disc;
    if (l1 - d).norm() <= (l2 - d).norm() {
        l1
    } else {
        l2
    }
}

/// Shifted QR iteration with deflation on a Hessenberg matrix; on return `h`
/// is upper triangular and `z` accumulates the Schur vectors.
fn qr_schur(h: &mut DMatrix<Complex64>, z: &mut DMatrix<Complex64>) -> Result<()> {
    let n = h.nrows();
    if n == 1 {
        return Ok(());
    }
    let eps = f64::EPSILON;
    let mut hi = n - 1;
    let mut iter_block = 0usize;
    let mut iter_total = 0usize;
    let max_total = 60 * n;
    loop {
        // Deflate converged trailing 1x1 blocks.
        while hi > 0 {
            let s = cabs1(h[(hi - 1, hi - 1)]) + cabs1(h[(hi, hi)]);
            let s = if s == 0.0 { 1.0 } else { s };
            if cabs1(h[(hi, hi - 1)]) <= eps * s {
                h[(hi, hi - 1)] = C_ZERO;
                hi -= 1;
                iter_block = 0;
            } else {
                break;
            }
        }
        if hi == 0 {
            return Ok(());
        }
        // Active block [lo..=hi].
        let mut lo = hi;
        while lo > 0 {
            let s = cabs1(h[(lo - 1, lo - 1)]) + cabs1(h[(lo, lo)]);
            let s = if s == 0.0 { 1.0 } else { s };
            if cabs1(h[(lo, lo - 1)]) <= eps * s {
                h[(lo, lo - 1)] = C_ZERO;
                break;
            }
            lo -= 1;
        }
        iter_block += 1;
        iter_total += 1;
        if iter_total > max_total {
            return Err(Error::Numeric(format!(
                "QR iteration did not converge after {max_total} sweeps"
            )));
        }
        let sigma = if iter_block % 12 == 0 {
            // Exceptional shift to break rare cycling.
            h[(hi, hi)] + Complex64::new(0.75 * h[(hi, hi - 1)].norm(), 0.0)
        } else {
            wilkinson_shift(h, hi)
        };
        for k in lo..=hi {
            h[(k, k)] -= sigma;
        }
        // QR factorization of the shifted block by Givens rotations.
        let mut rots = Vec::with_capacity(hi - lo);
        for k in lo..hi {
            let (c, s, r) = givens(h[(k, k)], h[(k + 1, k)]);
            h[(k, k)] = r;
            h[(k + 1, k)] = C_ZERO;
            for j in k + 1..n {
                let a = h[(k, j)];
                let b = h[(k + 1, j)];
                h[(k, j)] = Complex64::new(c, 0.0) * a + s * b;
                h[(k + 1, j)] = -s.conj() * a + Complex64::new(c, 0.0) * b;
            }
            rots.push((c, s));
        }
        // Form R Q^H and accumulate Z.
        for (off, &(c, s)) in rots.iter().enumerate() {
            let k = lo + off;
            let cc = Complex64::new(c, 0.0);
            for i in 0..=(k + 1).min(n - 1) {
                let a = h[(i, k)];
                let b = h[(i, k + 1)];
                h[(i, k)] = a * cc + b * s.conj();
                h[(i, k + 1)] = -a * s + b * cc;
            }
            for i in 0..n {
                let a = z[(i, k)];
                let b = z[(i, k + 1)];
                z[(i, k)] = a * cc + b * s.conj();
                z[(i, k + 1)] = -a * s + b * cc;
            }
        }
        for k in lo..=hi {
            h[(k, k)] += sigma;
        }
    }
}

/// Fundamental matrix `(I - Q + P)^{-1}` of an ergodic chain, where `P` is the
/// rank-one projector onto the stationary law.
pub fn fundamental_matrix(q: &DMatrix<f64>, pi: &[f64]) -> Result<DMatrix<f64>> {
    let n = q.nrows();
    let mut m = DMatrix::identity(n, n) - q;
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] += pi[j];
        }
    }
    m.try_inverse()
        .ok_or_else(|| Error::Numeric("fundamental matrix is singular".into()))
}
