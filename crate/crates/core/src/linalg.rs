//! Dense kernels for the small `I x I` complex matrices living at every TF
//! point, plus a real SPD solver used by the metrics projections.
//!
//! Matrices are row-major slices of length `n * n`.

use num_complex::Complex;

use crate::Real;

#[inline]
pub fn zero<T: Real>() -> Complex<T> {
    Complex::new(T::zero(), T::zero())
}

#[inline]
pub fn re<T: Real>(x: T) -> Complex<T> {
    Complex::new(x, T::zero())
}

pub fn identity<T: Real>(n: usize) -> Vec<Complex<T>> {
    let mut out = vec![zero(); n * n];
    for i in 0..n {
        out[i * n + i] = re(T::one());
    }
    out
}

/// `out = a * b`
pub fn mul<T: Real>(a: &[Complex<T>], b: &[Complex<T>], out: &mut [Complex<T>], n: usize) {
    for i in 0..n {
        for j in 0..n {
            let mut acc = zero();
            for k in 0..n {
                acc += a[i * n + k] * b[k * n + j];
            }
            out[i * n + j] = acc;
        }
    }
}

/// `out = a * b^H`
pub fn mul_adj<T: Real>(a: &[Complex<T>], b: &[Complex<T>], out: &mut [Complex<T>], n: usize) {
    for i in 0..n {
        for j in 0..n {
            let mut acc = zero();
            for k in 0..n {
                acc += a[i * n + k] * b[j * n + k].conj();
            }
            out[i * n + j] = acc;
        }
    }
}

/// `out = a * v`
pub fn mul_vec<T: Real>(a: &[Complex<T>], v: &[Complex<T>], out: &mut [Complex<T>], n: usize) {
    for i in 0..n {
        let mut acc = zero();
        for k in 0..n {
            acc += a[i * n + k] * v[k];
        }
        out[i] = acc;
    }
}

pub fn trace<T: Real>(a: &[Complex<T>], n: usize) -> Complex<T> {
    (0..n).fold(zero(), |acc, i| acc + a[i * n + i])
}

/// Real part of `trace(a * b)` without forming the product.
pub fn trace_of_product<T: Real>(a: &[Complex<T>], b: &[Complex<T>], n: usize) -> T {
    let mut acc = T::zero();
    for i in 0..n {
        for k in 0..n {
            acc += (a[i * n + k] * b[k * n + i]).re;
        }
    }
    acc
}

/// Replace `a` by `(a + a^H) / 2`.
pub fn hermitize<T: Real>(a: &mut [Complex<T>], n: usize) {
    let half = T::lit(0.5);
    for i in 0..n {
        a[i * n + i] = re(a[i * n + i].re);
        for j in (i + 1)..n {
            let avg = (a[i * n + j] + a[j * n + i].conj()).scale(half);
            a[i * n + j] = avg;
            a[j * n + i] = avg.conj();
        }
    }
}

/// Lower Cholesky factor of a Hermitian positive definite matrix, or `None`
/// when a pivot is not strictly positive.
pub fn cholesky<T: Real>(a: &[Complex<T>], l: &mut [Complex<T>], n: usize) -> Option<()> {
    l.iter_mut().for_each(|x| *x = zero());
    for j in 0..n {
        let mut d = a[j * n + j].re;
        for k in 0..j {
            d -= l[j * n + k].norm_sqr();
        }
        if !(d > T::zero()) || !d.is_finite() {
            return None;
        }
        let djj = d.sqrt();
        l[j * n + j] = re(djj);
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k].conj();
            }
            l[i * n + j] = s.unscale(djj);
        }
    }
    Some(())
}

/// Scratch buffers for Cholesky-based inversion.
#[derive(Debug, Clone)]
pub struct HpdWorkspace<T> {
    n: usize,
    l: Vec<Complex<T>>,
    linv: Vec<Complex<T>>,
}

impl<T: Real> HpdWorkspace<T> {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            l: vec![zero(); n * n],
            linv: vec![zero(); n * n],
        }
    }

    /// Inverse of a Hermitian positive definite matrix; returns
    /// `log det(a)` as a by-product.
    pub fn inverse(&mut self, a: &[Complex<T>], out: &mut [Complex<T>]) -> Option<T> {
        let n = self.n;
        cholesky(a, &mut self.l, n)?;
        let l = &self.l;
        let linv = &mut self.linv;
        linv.iter_mut().for_each(|x| *x = zero());
        // forward substitution, column by column of the identity
        for c in 0..n {
            for i in c..n {
                let mut s = if i == c { re(T::one()) } else { zero() };
                for k in c..i {
                    s -= l[i * n + k] * linv[k * n + c];
                }
                linv[i * n + c] = s.unscale(l[i * n + i].re);
            }
        }
        // a^-1 = L^-H L^-1
        for i in 0..n {
            for j in 0..n {
                let mut acc = zero();
                for k in i.max(j)..n {
                    acc += linv[k * n + i].conj() * linv[k * n + j];
                }
                out[i * n + j] = acc;
            }
        }
        let mut logdet = T::zero();
        for i in 0..n {
            logdet += l[i * n + i].re.ln();
        }
        Some(logdet + logdet)
    }

    /// `log det(a)` of a Hermitian positive definite matrix.
    pub fn logdet(&mut self, a: &[Complex<T>]) -> Option<T> {
        let n = self.n;
        cholesky(a, &mut self.l, n)?;
        let mut logdet = T::zero();
        for i in 0..n {
            logdet += self.l[i * n + i].re.ln();
        }
        Some(logdet + logdet)
    }
}

/// Cholesky factor of a real symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct SpdCholesky<T> {
    n: usize,
    l: Vec<T>,
}

impl<T: Real> SpdCholesky<T> {
    /// Factor `a` (row-major, `n x n`). Returns `None` if a pivot is not positive.
    pub fn new(a: &[T], n: usize) -> Option<Self> {
        let mut l = vec![T::zero(); n * n];
        for j in 0..n {
            let mut d = a[j * n + j];
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > T::zero()) {
                return None;
            }
            let djj = d.sqrt();
            l[j * n + j] = djj;
            for i in (j + 1)..n {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / djj;
            }
        }
        Some(Self { n, l })
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let (n, l) = (self.n, &self.l);
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= l[i * n + k] * y[k];
            }
            y[i] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= l[k * n + i] * y[k];
            }
            y[i] = s / l[i * n + i];
        }
        y
    }
}

/// Solve `a x = b` for a real symmetric positive definite `a` (row-major,
/// `n x n`). Returns `None` if the factorization breaks down.
pub fn solve_spd<T: Real>(a: &[T], b: &[T], n: usize) -> Option<Vec<T>> {
    SpdCholesky::new(a, n).map(|c| c.solve(b))
}
