//! Shape-preserving interpolation used for sampled boundaries and the Psi table.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Monotone piecewise-cubic Hermite interpolant (Fritsch–Carlson slopes with
/// the harmonic-mean rule). Monotone data yields a monotone interpolant.
#[derive(Debug, Clone)]
pub struct MonotoneCubic<T: Real = f64> {
    xs: Vec<T>,
    ys: Vec<T>,
    slopes: Vec<T>,
}

impl<T: Real> MonotoneCubic<T> {
    pub fn new(xs: Vec<T>, ys: Vec<T>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::invalid("ys", "length differs from xs"));
        }
        if xs.len() < 2 {
            return Err(Error::invalid("xs", "need at least two nodes"));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid(
                "xs",
                "abscissae must be strictly increasing",
            ));
        }
        let slopes = pchip_slopes(&xs, &ys);
        Ok(Self { xs, ys, slopes })
    }

    pub fn xs(&self) -> &[T] {
        &self.xs
    }

    pub fn ys(&self) -> &[T] {
        &self.ys
    }

    fn segment(&self, x: T) -> usize {
        let n = self.xs.len();
        let i = self.xs.partition_point(|&xi| xi <= x);
        i.clamp(1, n - 1) - 1
    }

    /// Evaluates the interpolant; outside the node range the end cubic is
    /// continued.
    pub fn eval(&self, x: T) -> T {
        let i = self.segment(x);
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let h = x1 - x0;
        let t = (x - x0) / h;
        let (y0, y1) = (self.ys[i], self.ys[i + 1]);
        let (d0, d1) = (self.slopes[i], self.slopes[i + 1]);
        hermite(t, h, y0, y1, d0, d1)
    }

    /// Evaluates the cubic of segment `i` (between nodes `i` and `i + 1`).
    pub(crate) fn eval_segment(&self, i: usize, x: T) -> T {
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let h = x1 - x0;
        hermite(
            (x - x0) / h,
            h,
            self.ys[i],
            self.ys[i + 1],
            self.slopes[i],
            self.slopes[i + 1],
        )
    }

    pub fn derivative(&self, x: T) -> T {
        let i = self.segment(x);
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let h = x1 - x0;
        let t = (x - x0) / h;
        let (y0, y1) = (self.ys[i], self.ys[i + 1]);
        let (d0, d1) = (self.slopes[i], self.slopes[i + 1]);
        let two = T::lit(2.0);
        let three = T::lit(3.0);
        let six = T::lit(6.0);
        let dh00 = (six * t * t - six * t) / h;
        let dh10 = three * t * t - T::lit(4.0) * t + T::one();
        let dh01 = -dh00;
        let dh11 = three * t * t - two * t;
        dh00 * y0 + dh10 * d0 + dh01 * y1 + dh11 * d1
    }
}

#[inline]
pub(crate) fn hermite<T: Real>(t: T, h: T, y0: T, y1: T, d0: T, d1: T) -> T {
    let two = T::lit(2.0);
    let three = T::lit(3.0);
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = two * t3 - three * t2 + T::one();
    let h10 = t3 - two * t2 + t;
    let h01 = -two * t3 + three * t2;
    let h11 = t3 - t2;
    h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
}

/// Node derivatives of the PCHIP interpolant.
pub(crate) fn pchip_slopes<T: Real>(xs: &[T], ys: &[T]) -> Vec<T> {
    let n = xs.len();
    let h: Vec<T> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<T> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / h[i]).collect();
    let mut d = vec![T::zero(); n];
    if n == 2 {
        d[0] = delta[0];
        d[1] = delta[0];
        return d;
    }
    let two = T::lit(2.0);
    for k in 1..n - 1 {
        let (dl, dr) = (delta[k - 1], delta[k]);
        if dl * dr <= T::zero() {
            d[k] = T::zero();
        } else {
            let w1 = two * h[k] + h[k - 1];
            let w2 = h[k] + two * h[k - 1];
            d[k] = (w1 + w2) / (w1 / dl + w2 / dr);
        }
    }
    d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

fn end_slope<T: Real>(h0: T, h1: T, del0: T, del1: T) -> T {
    let two = T::lit(2.0);
    let three = T::lit(3.0);
    let d = ((two * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d.signum() != del0.signum() {
        T::zero()
    } else if del0.signum() != del1.signum() && d.abs() > (three * del0).abs() {
        three * del0
    } else {
        d
    }
}

/// Piecewise-linear interpolation on a uniform grid `x_i = i*h`, i = 0..len-1.
/// Values beyond the last node return `right`.
#[inline]
pub fn linear_uniform<T: Real>(values: &[T], h: T, x: T, right: T) -> T {
    let last = values.len() - 1;
    let s = x / h;
    if s >= T::from_usize_lossy(last) {
        return if s == T::from_usize_lossy(last) {
            values[last]
        } else {
            right
        };
    }
    let i = s.floor().to_usize().unwrap_or(0).min(last - 1);
    let w = s - T::from_usize_lossy(i);
    values[i] + w * (values[i + 1] - values[i])
}
