use ndarray::{Array2, ArrayView2, Axis, Zip};

use crate::config::Adapt;
use crate::{Error, Real, Result};

/// Nonnegative factor of a hierarchical NMF chain.
///
/// A factor created as diagonal keeps its zero pattern under multiplicative
/// updates, so products involving it are computed as row/column scalings.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorMatrix<T> {
    values: Array2<T>,
    adapt: Adapt,
    diagonal: bool,
}

impl<T: Real> FactorMatrix<T> {
    pub fn new(values: Array2<T>, adapt: Adapt) -> Result<Self> {
        if values.iter().any(|&x| !(x >= T::zero()) || !x.is_finite()) {
            return Err(Error::InvalidConfig(
                "factor entries must be finite and nonnegative".into(),
            ));
        }
        Ok(Self {
            values,
            adapt,
            diagonal: false,
        })
    }

    pub fn fixed(values: Array2<T>) -> Result<Self> {
        Self::new(values, Adapt::Fixed)
    }

    pub fn free(values: Array2<T>) -> Result<Self> {
        Self::new(values, Adapt::Free)
    }

    /// `n x n` identity, stored densely but multiplied as a diagonal.
    pub fn identity(n: usize, adapt: Adapt) -> Self {
        Self {
            values: Array2::eye(n),
            adapt,
            diagonal: true,
        }
    }

    pub fn values(&self) -> &Array2<T> {
        &self.values
    }

    pub fn adapt(&self) -> Adapt {
        self.adapt
    }

    pub fn is_free(&self) -> bool {
        self.adapt == Adapt::Free
    }

    pub fn is_diagonal(&self) -> bool {
        self.diagonal
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn mean(&self) -> T {
        self.values.mean().unwrap_or_else(T::zero)
    }

    /// Direct write access. Callers must respect the adapt flag.
    pub(crate) fn values_mut(&mut self) -> &mut Array2<T> {
        &mut self.values
    }

    /// `self * rhs`
    pub fn lmul(&self, rhs: ArrayView2<'_, T>) -> Array2<T> {
        if self.diagonal {
            let mut out = rhs.to_owned();
            for (mut row, d) in out.axis_iter_mut(Axis(0)).zip(self.values.diag()) {
                row.mapv_inplace(|x| x * *d);
            }
            out
        } else {
            self.values.dot(&rhs)
        }
    }

    /// `self^T * rhs`
    pub fn lmul_t(&self, rhs: ArrayView2<'_, T>) -> Array2<T> {
        if self.diagonal {
            self.lmul(rhs)
        } else {
            self.values.t().dot(&rhs)
        }
    }

    /// `lhs * self`
    pub fn rmul(&self, lhs: ArrayView2<'_, T>) -> Array2<T> {
        if self.diagonal {
            let mut out = lhs.to_owned();
            for (mut col, d) in out.axis_iter_mut(Axis(1)).zip(self.values.diag()) {
                col.mapv_inplace(|x| x * *d);
            }
            out
        } else {
            lhs.dot(&self.values)
        }
    }

    /// `lhs * self^T`
    pub fn rmul_t(&self, lhs: ArrayView2<'_, T>) -> Array2<T> {
        if self.diagonal {
            self.rmul(lhs)
        } else {
            lhs.dot(&self.values.t())
        }
    }

    /// Multiplicative update `self <- self * num / max(den, floor)`.
    /// Positive entries never underflow to zero; zero entries stay zero.
    pub(crate) fn apply_ratio(&mut self, num: &Array2<T>, den: &Array2<T>, floor: T) {
        Zip::from(&mut self.values).and(num).and(den).for_each(|x, &n, &d| {
            if *x > T::zero() {
                *x = (*x * n / d.max(floor)).max(T::min_positive_value());
            }
        });
    }
}

/// Which factor of a four-level chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Level {
    W,
    U,
    G,
    H,
}

impl Level {
    pub const ALL: [Level; 4] = [Level::W, Level::U, Level::G, Level::H];
}

/// Four-level chain `W U G H` producing an `F x N` power matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBlock<T> {
    pub w: FactorMatrix<T>,
    pub u: FactorMatrix<T>,
    pub g: FactorMatrix<T>,
    pub h: FactorMatrix<T>,
}

impl<T: Real> SpectralBlock<T> {
    pub fn new(
        w: FactorMatrix<T>,
        u: FactorMatrix<T>,
        g: FactorMatrix<T>,
        h: FactorMatrix<T>,
    ) -> Result<Self> {
        let b = Self { w, u, g, h };
        b.check()?;
        Ok(b)
    }

    pub fn check(&self) -> Result<()> {
        if self.w.cols() != self.u.rows()
            || self.u.cols() != self.g.rows()
            || self.g.cols() != self.h.rows()
        {
            return Err(Error::Shape(format!(
                "factor chain {}x{} . {}x{} . {}x{} . {}x{} does not compose",
                self.w.rows(),
                self.w.cols(),
                self.u.rows(),
                self.u.cols(),
                self.g.rows(),
                self.g.cols(),
                self.h.rows(),
                self.h.cols()
            )));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.w.rows()
    }

    pub fn frames(&self) -> usize {
        self.h.cols()
    }

    pub fn factor(&self, level: Level) -> &FactorMatrix<T> {
        match level {
            Level::W => &self.w,
            Level::U => &self.u,
            Level::G => &self.g,
            Level::H => &self.h,
        }
    }

    pub fn factor_mut(&mut self, level: Level) -> &mut FactorMatrix<T> {
        match level {
            Level::W => &mut self.w,
            Level::U => &mut self.u,
            Level::G => &mut self.g,
            Level::H => &mut self.h,
        }
    }

    /// `G H`
    pub fn gh(&self) -> Array2<T> {
        self.h.rmul(self.g.values().view())
    }

    /// `U G H`
    pub fn ugh(&self) -> Array2<T> {
        self.u.lmul(self.gh().view())
    }

    /// `W U`
    pub fn wu(&self) -> Array2<T> {
        self.w.lmul(self.u.values().view())
    }

    /// `W U G`
    pub fn wug(&self) -> Array2<T> {
        self.g.rmul(self.wu().view())
    }

    /// `W U G H`
    pub fn product(&self) -> Array2<T> {
        self.w.lmul(self.ugh().view())
    }
}
