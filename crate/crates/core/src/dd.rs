//! Double-double arithmetic, just enough for phase reduction and for
//! compensated accumulation.
//!
//! A value is the unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`.

use std::ops::{Add, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DoubleDouble {
    pub hi: f64,
    pub lo: f64,
}

/// Error-free sum: `a + b == s + e` exactly.
#[inline]
pub fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let e = (a - (s - bb)) + (b - bb);
    (s, e)
}

/// Error-free sum when `|a| >= |b|`.
#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn split(a: f64) -> (f64, f64) {
    let c = 134_217_729.0 * a;
    let hi = c - (c - a);
    (hi, a - hi)
}

/// Error-free product: `a * b == p + e` exactly.
///
/// Uses Veltkamp splitting rather than `mul_add`, which falls back to a slow
/// software routine on targets without FMA. Valid for `|a|, |b| < 2^996`.
#[inline]
pub fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let (ah, al) = split(a);
    let (bh, bl) = split(b);
    let e = ((ah * bh - p) + ah * bl + al * bh) + al * bl;
    (p, e)
}

impl DoubleDouble {
    pub const ZERO: Self = Self { hi: 0.0, lo: 0.0 };

    pub fn new(hi: f64, lo: f64) -> Self {
        let (hi, lo) = two_sum(hi, lo);
        Self { hi, lo }
    }

    pub fn from_f64(x: f64) -> Self {
        Self { hi: x, lo: 0.0 }
    }

    /// The exact product of two doubles.
    pub fn from_product(a: f64, b: f64) -> Self {
        let (hi, lo) = two_prod(a, b);
        Self { hi, lo }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    /// Fractional part in `[0, 1)`, rounded to a double at the end.
    ///
    /// The integer part of `hi` is removed exactly, so the result keeps the
    /// absolute accuracy of `lo` even when `hi` is huge.
    pub fn fract(self) -> f64 {
        let f = self.hi - self.hi.floor();
        let r = f + self.lo;
        let r = r - r.floor();
        // `r` can round up to exactly 1.0 when it is a hair below it.
        if r >= 1.0 {
            0.0
        } else {
            r
        }
    }

    pub fn add_f64(self, b: f64) -> Self {
        let (s, e) = two_sum(self.hi, b);
        let (hi, lo) = quick_two_sum(s, e + self.lo);
        Self { hi, lo }
    }

    pub fn mul_f64(self, b: f64) -> Self {
        let (p, e) = two_prod(self.hi, b);
        let (hi, lo) = quick_two_sum(p, e + self.lo * b);
        Self { hi, lo }
    }
}

impl Add for DoubleDouble {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let (s, e1) = two_sum(self.hi, o.hi);
        let (t, e2) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e1 + t);
        let (hi, lo) = quick_two_sum(s, e + e2);
        Self { hi, lo }
    }
}

impl Neg for DoubleDouble {
    type Output = Self;
    fn neg(self) -> Self {
        Self { hi: -self.hi, lo: -self.lo }
    }
}

impl Sub for DoubleDouble {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self + (-o)
    }
}

impl Mul for DoubleDouble {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let (p, e) = two_prod(self.hi, o.hi);
        let e = e + (self.hi * o.lo + self.lo * o.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Self { hi, lo }
    }
}

/// Fractional part of `a * b` computed from the exact product.
#[inline]
pub fn frac_product(a: f64, b: f64) -> f64 {
    DoubleDouble::from_product(a, b).fract()
}

/// Accumulates doubles with a double-double running total.
#[derive(Clone, Copy, Debug, Default)]
pub struct Accumulator(DoubleDouble);

impl Accumulator {
    pub fn add(&mut self, x: f64) {
        self.0 = self.0.add_f64(x);
    }

    pub fn total(&self) -> f64 {
        self.0.to_f64()
    }
}

/// Sum of a slice in a fixed order, independent of thread count.
///
/// Fixed-size chunks are summed with compensation; chunk totals are then
/// combined pairwise in index order.
pub fn fixed_sum(xs: &[f64]) -> f64 {
    const CHUNK: usize = 1024;
    let mut partial: Vec<DoubleDouble> = xs
        .chunks(CHUNK)
        .map(|c| {
            let mut acc = DoubleDouble::ZERO;
            for &x in c {
                acc = acc.add_f64(x);
            }
            acc
        })
        .collect();
    while partial.len() > 1 {
        partial = partial
            .chunks(2)
            .map(|p| if p.len() == 2 { p[0] + p[1] } else { p[0] })
            .collect();
    }
    partial.first().map_or(0.0, |d| d.to_f64())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_prod_is_exact_on_representable_case() {
        // (1 + 2^-30)^2 = 1 + 2^-29 + 2^-60; the last term is the error.
        let a = 1.0 + 2f64.powi(-30);
        let (p, e) = two_prod(a, a);
        assert_eq!(p, 1.0 + 2f64.powi(-29));
        assert_eq!(e, 2f64.powi(-60));
    }

    #[test]
    fn fract_survives_large_integer_parts() {
        let x = DoubleDouble::new(2f64.powi(40), 0.25);
        assert_eq!(x.fract(), 0.25);
        let y = DoubleDouble::new(-3.0, 0.125);
        assert_eq!(y.fract(), 0.125);
        let z = DoubleDouble::new(5.0, -1e-300);
        assert!(z.fract() < 1.0);
    }

    #[test]
    fn fixed_sum_cancels_where_naive_sum_fails() {
        let mut xs = vec![1e16, 1.0, -1e16];
        xs.extend(std::iter::repeat_n(1.0, 5000));
        assert_eq!(fixed_sum(&xs), 5001.0);
    }

    #[test]
    fn product_of_double_doubles_is_exact_when_it_fits() {
        let a = DoubleDouble::new(2f64.powi(27), 1.0);
        let sq = a * a;
        // (2^27 + 1)^2 = 2^54 + 2^28 + 1 needs 55 bits.
        assert_eq!(sq.hi, 2f64.powi(54) + 2f64.powi(28));
        assert_eq!(sq.lo, 1.0);
    }
}
