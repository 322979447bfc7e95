//! Minimal double-double arithmetic (~31 significant digits).
//!
//! The C1 continuity solve needs it: near the matched cutoff the residual
//! function lives several orders of magnitude below what cancellation-prone
//! f64 evaluation can resolve, especially for node ratios close to 1. This is
//! cold code, used only during parameter construction.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

pub const LN2: Dd = Dd { hi: 0.6931471805599453, lo: 2.3190468138462996e-17 };
pub const PI: Dd = Dd { hi: 3.141592653589793, lo: 1.2246467991473532e-16 };

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    #[inline]
    pub fn from_f64(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    #[inline]
    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    #[inline]
    pub fn add(self, other: Dd) -> Dd {
        let (s1, s2) = two_sum(self.hi, other.hi);
        let s2 = s2 + self.lo + other.lo;
        let (hi, lo) = quick_two_sum(s1, s2);
        Dd { hi, lo }
    }

    #[inline]
    pub fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }

    #[inline]
    pub fn sub(self, other: Dd) -> Dd {
        self.add(other.neg())
    }

    #[inline]
    pub fn mul(self, other: Dd) -> Dd {
        let (p1, p2) = two_prod(self.hi, other.hi);
        let p2 = p2 + self.hi * other.lo + self.lo * other.hi;
        let (hi, lo) = quick_two_sum(p1, p2);
        Dd { hi, lo }
    }

    #[inline]
    pub fn mul_f64(self, other: f64) -> Dd {
        let (p1, p2) = two_prod(self.hi, other);
        let p2 = p2 + self.lo * other;
        let (hi, lo) = quick_two_sum(p1, p2);
        Dd { hi, lo }
    }

    pub fn div(self, other: Dd) -> Dd {
        let q1 = self.hi / other.hi;
        let r = self.sub(other.mul_f64(q1));
        let q2 = r.hi / other.hi;
        let r = r.sub(other.mul_f64(q2));
        let q3 = r.hi / other.hi;
        let (s1, s2) = quick_two_sum(q1, q2);
        Dd { hi: s1, lo: s2 }.add(Dd::from_f64(q3))
    }

    pub fn sqrt(self) -> Dd {
        // one Newton step in double-double from the f64 estimate
        let x0 = Dd::from_f64(self.hi.sqrt());
        x0.add(self.div(x0)).mul_f64(0.5)
    }

    /// exp with full double-double accuracy (argument reduction by ln 2, short
    /// Taylor series, binary re-squaring).
    pub fn exp(self) -> Dd {
        if self.hi < -709.0 {
            return Dd::ZERO;
        }
        if self.hi > 709.0 {
            return Dd::from_f64(f64::INFINITY);
        }
        let k = (self.hi / LN2.hi).round();
        let r = self.sub(LN2.mul_f64(k));
        // scale down by 2^9 so the Taylor series converges in a few terms
        const SCALE_BITS: i32 = 9;
        let r = r.mul_f64(1.0 / (1u64 << SCALE_BITS) as f64);
        // t = exp(r) - 1 by Taylor
        let mut term = r;
        let mut t = r;
        for n in 2..=14 {
            term = term.mul(r).mul_f64(1.0 / n as f64);
            t = t.add(term);
            if term.hi.abs() < 1e-35 {
                break;
            }
        }
        // undo the scaling with (1+t)^2 = 1 + (2t + t^2)
        for _ in 0..SCALE_BITS {
            t = t.mul_f64(2.0).add(t.mul(t));
        }
        let e = Dd::ONE.add(t);
        // multiply by 2^k exactly
        let factor = (k as i32).max(-1022).min(1023);
        let pow = f64::powi(2.0, factor);
        e.mul_f64(pow)
    }

    /// Natural logarithm of a positive double-double.
    pub fn ln(self) -> Dd {
        debug_assert!(self.hi > 0.0);
        let y = self.hi.ln();
        // a * exp(-y) = 1 + d with |d| ~ 1e-16; ln(a) = y + ln(1+d)
        let d = self.mul(Dd::from_f64(-y).exp()).sub(Dd::ONE);
        Dd::from_f64(y).add(d).sub(d.mul(d).mul_f64(0.5))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn add_mul_keep_extra_digits() {
        // (1 + 1e-20) - 1 survives in double-double
        let x = Dd::from_f64(1.0).add(Dd::from_f64(1e-20));
        let d = x.sub(Dd::ONE);
        assert!((d.to_f64() - 1e-20).abs() < 1e-33);
        // multiplication keeps ~31 digits: (1+2^-53)^2 = 1 + 2^-52 (+2^-106,
        // which sits at the representable edge and may be dropped)
        let y = Dd::from_f64(1.0).add(Dd::from_f64(2f64.powi(-53)));
        let sq = y.mul(y).sub(Dd::ONE).sub(Dd::from_f64(2f64.powi(-52)));
        assert!(sq.to_f64().abs() <= 2f64.powi(-104));
    }

    #[test]
    fn div_and_sqrt() {
        let x = Dd::from_f64(2.0);
        let r = x.sqrt();
        let back = r.mul(r).sub(x);
        assert!(back.to_f64().abs() < 1e-30);
        let q = Dd::from_f64(1.0).div(Dd::from_f64(3.0));
        let back = q.mul_f64(3.0).sub(Dd::ONE);
        assert!(back.to_f64().abs() < 1e-30);
    }

    #[test]
    fn exp_reference_values() {
        // reference values computed in extended precision
        let cases = [
            (1.0, "2.71828182845904523536028747135"),
            (-1.0, "0.367879441171442321595523770161"),
            (0.5, "1.64872127070012814684865078781"),
            (-37.5, "5.17555500580186853485109070574e-17"),
        ];
        for (x, want) in cases {
            let got = Dd::from_f64(x).exp();
            let want: f64 = want.parse().unwrap();
            let rel = ((got.to_f64() - want) / want).abs();
            assert!(rel < 1e-15, "exp({x}): {} vs {want}", got.to_f64());
            // extra digits: check exp(1)*exp(-1) == 1 to dd accuracy
        }
        let one = Dd::from_f64(1.0).exp().mul(Dd::from_f64(-1.0).exp()).sub(Dd::ONE);
        assert!(one.to_f64().abs() < 5e-27, "got {:e}", one.to_f64());
        // functional identity at dd accuracy: exp(a)^2 = exp(2a). Each call
        // carries ~1e-27 relative error from the re-squaring ladder.
        let a = Dd::from_f64(0.7391);
        let lhs = a.exp().mul(a.exp());
        let rhs = a.mul_f64(2.0).exp();
        assert!(lhs.sub(rhs).to_f64().abs() / rhs.to_f64() < 3e-26);
    }

    #[test]
    fn ln_inverts_exp() {
        for &x in &[0.037, 0.9, 1.0 + 1e-14, 3.7, 120.0] {
            let l = Dd::from_f64(x).ln();
            let back = l.exp().sub(Dd::from_f64(x));
            assert!(
                back.to_f64().abs() < 1e-28 * x,
                "ln({x}) round trip off by {:e}",
                back.to_f64()
            );
        }
    }
}
