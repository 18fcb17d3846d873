//! Compensated double-double arithmetic for the synthesis recursions.
//!
//! Peeling a protocol off a polynomial state amplifies any deviation from
//! exact normalization by roughly the inverse endpoint norm at every level.
//! Carrying the recursion state in double-double form keeps the noise
//! injected per step near 1e-32, so only the input's own float deviation is
//! subject to that amplification. Classic error-free transformations
//! (two_sum, two_prod via fused multiply-add) as in Dekker and Bailey.

/// An unevaluated sum hi + lo with |lo| <= ulp(hi)/2.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub(crate) struct Dd {
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
    (p, f64::mul_add(a, b, -p))
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    #[inline]
    pub fn from_f64(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.hi + self.lo
    }

    #[inline]
    pub fn add(self, other: Dd) -> Dd {
        let (s1, s2) = two_sum(self.hi, other.hi);
        let (t1, t2) = two_sum(self.lo, other.lo);
        let (s1, s2) = quick_two_sum(s1, s2 + t1);
        let (hi, lo) = quick_two_sum(s1, s2 + t2);
        Dd { hi, lo }
    }

    #[inline]
    pub fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
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
    pub fn div(self, other: Dd) -> Dd {
        let q1 = self.hi / other.hi;
        let r = self.sub(other.mul(Dd::from_f64(q1)));
        let q2 = (r.hi + r.lo) / (other.hi + other.lo);
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo }
    }

    /// Square root by one Newton step on the f64 seed.
    pub fn sqrt(self) -> Dd {
        if self.hi <= 0.0 {
            return Dd::ZERO;
        }
        let y = Dd::from_f64(self.hi.sqrt());
        self.div(y).add(y).mul(Dd::from_f64(0.5))
    }
}

/// A complex number with double-double parts.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub(crate) struct DdC {
    pub re: Dd,
    pub im: Dd,
}

impl DdC {
    pub const ZERO: DdC = DdC {
        re: Dd::ZERO,
        im: Dd::ZERO,
    };

    #[inline]
    pub fn from_f64(re: f64, im: f64) -> Self {
        DdC {
            re: Dd::from_f64(re),
            im: Dd::from_f64(im),
        }
    }

    #[inline]
    pub fn add(self, other: DdC) -> DdC {
        DdC {
            re: self.re.add(other.re),
            im: self.im.add(other.im),
        }
    }

    #[inline]
    pub fn sub(self, other: DdC) -> DdC {
        DdC {
            re: self.re.sub(other.re),
            im: self.im.sub(other.im),
        }
    }

    #[inline]
    pub fn mul(self, other: DdC) -> DdC {
        DdC {
            re: self.re.mul(other.re).sub(self.im.mul(other.im)),
            im: self.re.mul(other.im).add(self.im.mul(other.re)),
        }
    }

    #[inline]
    pub fn conj(self) -> DdC {
        DdC {
            re: self.re,
            im: self.im.neg(),
        }
    }

    #[inline]
    pub fn scale(self, s: Dd) -> DdC {
        DdC {
            re: self.re.mul(s),
            im: self.im.mul(s),
        }
    }

    #[inline]
    pub fn norm_sqr(self) -> Dd {
        self.re.mul(self.re).add(self.im.mul(self.im))
    }

    pub fn value(self) -> crate::linalg::Complex64 {
        crate::linalg::Complex64::new(self.re.value(), self.im.value())
    }
}

/// ⟨u|v⟩ over fixed-length slices, conjugate-linear in the first argument.
pub(crate) fn inner(u: &[DdC], v: &[DdC]) -> DdC {
    let mut acc = DdC::ZERO;
    for (a, b) in u.iter().zip(v) {
        acc = acc.add(a.conj().mul(*b));
    }
    acc
}

pub(crate) fn norm_sqr(v: &[DdC]) -> Dd {
    let mut acc = Dd::ZERO;
    for x in v {
        acc = acc.add(x.norm_sqr());
    }
    acc
}

/// v / ‖v‖; the caller checks that the norm is meaningfully positive.
pub(crate) fn normalized<const N: usize>(v: &[DdC; N]) -> [DdC; N] {
    let inv = Dd::ONE.div(norm_sqr(v).sqrt());
    let mut out = *v;
    for x in &mut out {
        *x = x.scale(inv);
    }
    out
}

/// v - u⟨u|v⟩ for a unit vector u.
pub(crate) fn deflate<const N: usize>(v: &[DdC; N], u: &[DdC; N]) -> [DdC; N] {
    let c = inner(u, v);
    let mut out = *v;
    for (o, b) in out.iter_mut().zip(u) {
        *o = o.sub(b.mul(c));
    }
    out
}

/// Multiplies v by the phase of z, leaving v unchanged when z vanishes.
pub(crate) fn phase_align<const N: usize>(v: &[DdC; N], z: DdC) -> [DdC; N] {
    let m = z.norm_sqr();
    if m.hi <= 1e-200 {
        return *v;
    }
    let inv = Dd::ONE.div(m.sqrt());
    let phase = z.scale(inv);
    let mut out = *v;
    for x in &mut out {
        *x = x.mul(phase);
    }
    out
}
