//! Tridiagonal systems and the Thomas algorithm.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Row `i` reads `alpha[i] u[i-1] + beta[i] u[i] + gamma[i] u[i+1] = rhs[i]`;
/// `alpha[0]` and `gamma[last]` are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalSystem<T: Real = f64> {
    pub alpha: Vec<T>,
    pub beta: Vec<T>,
    pub gamma: Vec<T>,
    pub rhs: Vec<T>,
}

impl<T: Real> TridiagonalSystem<T> {
    pub fn with_len(n: usize) -> Self {
        Self {
            alpha: vec![T::zero(); n],
            beta: vec![T::zero(); n],
            gamma: vec![T::zero(); n],
            rhs: vec![T::zero(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    /// `|beta_i| >= |alpha_i| + |gamma_i|` on every row.
    pub fn is_diagonally_dominant(&self) -> bool {
        let n = self.len();
        (0..n).all(|i| {
            let a = if i > 0 {
                self.alpha[i].abs()
            } else {
                T::zero()
            };
            let c = if i + 1 < n {
                self.gamma[i].abs()
            } else {
                T::zero()
            };
            self.beta[i].abs() >= a + c
        })
    }

    /// `A u`.
    pub fn apply(&self, u: &[T]) -> Vec<T> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut v = self.beta[i] * u[i];
                if i > 0 {
                    v = v + self.alpha[i] * u[i - 1];
                }
                if i + 1 < n {
                    v = v + self.gamma[i] * u[i + 1];
                }
                v
            })
            .collect()
    }

    /// `max_i |(A u - rhs)_i|`.
    pub fn residual(&self, u: &[T]) -> T {
        let n = self.len();
        let mut worst = T::zero();
        for i in 0..n {
            let mut v = self.beta[i] * u[i] - self.rhs[i];
            if i > 0 {
                v = v + self.alpha[i] * u[i - 1];
            }
            if i + 1 < n {
                v = v + self.gamma[i] * u[i + 1];
            }
            worst = worst.max(v.abs());
        }
        worst
    }
}

/// Solves the system by forward elimination and back substitution.
/// A zero (or non-finite) pivot yields [`Error::SingularSystem`].
pub fn thomas_solve<T: Real>(sys: &TridiagonalSystem<T>) -> Result<Vec<T>> {
    let mut c = Vec::new();
    let mut d = Vec::new();
    thomas_solve_into(sys, &mut c, &mut d)?;
    Ok(d)
}

/// Allocation-reusing variant; the solution is left in `out`.
pub(crate) fn thomas_solve_into<T: Real>(
    sys: &TridiagonalSystem<T>,
    scratch: &mut Vec<T>,
    out: &mut Vec<T>,
) -> Result<()> {
    let n = sys.len();
    scratch.clear();
    scratch.resize(n, T::zero());
    out.clear();
    out.resize(n, T::zero());
    if n == 0 {
        return Ok(());
    }
    let pivot_ok = |p: T| p != T::zero() && p.is_finite();
    let mut p = sys.beta[0];
    if !pivot_ok(p) {
        return Err(Error::SingularSystem { row: 0 });
    }
    let mut inv = p.recip();
    scratch[0] = sys.gamma[0] * inv;
    out[0] = sys.rhs[0] * inv;
    for i in 1..n {
        p = sys.beta[i] - sys.alpha[i] * scratch[i - 1];
        if !pivot_ok(p) {
            return Err(Error::SingularSystem { row: i });
        }
        inv = p.recip();
        scratch[i] = if i + 1 < n {
            sys.gamma[i] * inv
        } else {
            T::zero()
        };
        out[i] = (sys.rhs[i] - sys.alpha[i] * out[i - 1]) * inv;
    }
    for i in (0..n - 1).rev() {
        let next = out[i + 1];
        out[i] = out[i] - scratch[i] * next;
    }
    Ok(())
}
