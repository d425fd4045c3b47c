//! Exact admissibility arithmetic for Strichartz exponent pairs.
//!
//! Exponents in `[1, inf]` are stored by their reciprocals, so `inf` is the
//! rational 0 and every relation below is linear with rational coefficients.

use std::fmt;
use std::str::FromStr;

use num_rational::Rational64;
use num_traits::{One, Zero};
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Exponent {
    inv: Rational64,
}

impl Exponent {
    pub fn infinity() -> Self {
        Self { inv: Rational64::zero() }
    }

    /// The exponent `num / den`, which must be at least 1.
    pub fn new(num: i64, den: i64) -> Result<Self> {
        if den == 0 || num == 0 {
            return Err(Error::InvalidParameter(format!("bad exponent {num}/{den}")));
        }
        Self::from_inverse(Rational64::new(den, num))
    }

    pub fn integer(q: i64) -> Result<Self> {
        Self::new(q, 1)
    }

    /// Builds the exponent whose reciprocal is `inv` (0 for infinity).
    pub fn from_inverse(inv: Rational64) -> Result<Self> {
        if inv < Rational64::zero() || inv > Rational64::one() {
            return Err(Error::InvalidParameter(format!("exponent 1/({inv}) outside [1, inf]")));
        }
        Ok(Self { inv })
    }

    pub fn inverse(&self) -> Rational64 {
        self.inv
    }

    pub fn is_infinite(&self) -> bool {
        self.inv.is_zero()
    }

    /// `None` for infinity.
    pub fn value(&self) -> Option<Rational64> {
        (!self.is_infinite()).then(|| self.inv.recip())
    }

    /// Holder conjugate `q'` with `1/q + 1/q' = 1`.
    pub fn conjugate(&self) -> Self {
        Self { inv: Rational64::one() - self.inv }
    }

    pub fn to_f64(&self) -> f64 {
        match self.value() {
            None => f64::INFINITY,
            Some(v) => *v.numer() as f64 / *v.denom() as f64,
        }
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.value() {
            None => write!(f, "inf"),
            Some(v) => write!(f, "{v}"),
        }
    }
}

impl FromStr for Exponent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if matches!(s, "inf" | "infinity" | "∞") {
            return Ok(Self::infinity());
        }
        let bad = || Error::Parse(format!("bad exponent '{s}'"));
        let (num, den) = match s.split_once('/') {
            Some((a, b)) => (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?),
            None => (s.parse().map_err(|_| bad())?, 1),
        };
        Self::new(num, den)
    }
}

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairFamily {
    /// `2/q + N/r = N/2`, `2 <= q, r <= inf`, `(q, r, N) != (2, inf, 2)`.
    Schrodinger,
    /// `4/q + N/r = N/2`, `2 <= q, r <= inf`, `(q, r, N) != (2, inf, 4)`.
    Biharmonic,
    /// `4/q + N/r = N/2 - s`, `2N/(N-2s) <= r <= 2N/(N-4)`, for `-2 < s < 2`
    /// (negative `s` is used by the dual family).
    Lambda(Rational64),
    /// Conjugates `(q', r')` of pairs in `Lambda(-s)`.
    DualLambda(Rational64),
}

impl fmt::Display for PairFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Schrodinger => write!(f, "S_admissible"),
            Self::Biharmonic => write!(f, "B_admissible"),
            Self::Lambda(s) => write!(f, "Lambda_s(s={s})"),
            Self::DualLambda(s) => write!(f, "dual_Lambda_s(s={s})"),
        }
    }
}

impl Serialize for PairFamily {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PairSpec {
    pub q: Exponent,
    pub r: Exponent,
    pub family: PairFamily,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Given {
    Q(Exponent),
    R(Exponent),
}

fn rat(n: i64) -> Rational64 {
    Rational64::from_integer(n)
}

/// `(a, c, rhs)` in `a/q + N/r = rhs` plus the admissible range of `1/r`.
struct Relation {
    a: Rational64,
    rhs: Rational64,
    inv_r_range: (Rational64, Rational64),
    inv_q_range: (Rational64, Rational64),
}

fn relation(n: u32, family: PairFamily) -> Result<Relation> {
    let nr = rat(n as i64);
    let half = Rational64::new(1, 2);
    match family {
        PairFamily::Schrodinger => {
            Ok(Relation { a: rat(2), rhs: nr * half, inv_r_range: (rat(0), half), inv_q_range: (rat(0), half) })
        }
        PairFamily::Biharmonic => {
            Ok(Relation { a: rat(4), rhs: nr * half, inv_r_range: (rat(0), half), inv_q_range: (rat(0), half) })
        }
        PairFamily::Lambda(s) => {
            if !(s > rat(-2) && s < rat(2)) {
                return Err(Error::InvalidParameter(format!("Lambda_s needs -2 < s < 2, got {s}")));
            }
            // 2N/(N-2s) <= r <= 2N/(N-4) in reciprocals; a nonpositive
            // N-4 leaves r unbounded above
            let hi = (nr - rat(2) * s) / (rat(2) * nr);
            let lo = ((nr - rat(4)) / (rat(2) * nr)).max(rat(0));
            Ok(Relation { a: rat(4), rhs: nr * half - s, inv_r_range: (lo, hi.min(rat(1))), inv_q_range: (rat(0), rat(1)) })
        }
        PairFamily::DualLambda(_) => unreachable!("dual family is reduced to Lambda(-s) by the callers"),
    }
}

/// The endpoint `(q, r) = (2, inf)` excluded in the critical dimension.
pub fn excluded_endpoint(n: u32, q: &Exponent, r: &Exponent, family: PairFamily) -> bool {
    let q2 = q.inverse() == Rational64::new(1, 2);
    match family {
        PairFamily::Schrodinger => q2 && r.is_infinite() && n == 2,
        PairFamily::Biharmonic => q2 && r.is_infinite() && n == 4,
        _ => false,
    }
}

fn within(x: Rational64, (lo, hi): (Rational64, Rational64)) -> bool {
    x >= lo && x <= hi
}

/// Exact membership test.
pub fn pair_check(n: u32, q: Exponent, r: Exponent, family: PairFamily) -> Result<bool> {
    if n == 0 {
        return Err(Error::InvalidParameter("dimension must be positive".into()));
    }
    if let PairFamily::DualLambda(s) = family {
        return pair_check(n, q.conjugate(), r.conjugate(), PairFamily::Lambda(-s));
    }
    let rel = relation(n, family)?;
    let holds = rel.a * q.inverse() + rat(n as i64) * r.inverse() == rel.rhs;
    Ok(holds
        && within(q.inverse(), rel.inv_q_range)
        && within(r.inverse(), rel.inv_r_range)
        && !excluded_endpoint(n, &q, &r, family))
}

/// Solves the family relation for the missing exponent and checks the range.
pub fn pair_solve(n: u32, family: PairFamily, given: Given) -> Result<PairSpec> {
    if n == 0 {
        return Err(Error::InvalidParameter("dimension must be positive".into()));
    }
    if let PairFamily::DualLambda(s) = family {
        let g = match given {
            Given::Q(q) => Given::Q(q.conjugate()),
            Given::R(r) => Given::R(r.conjugate()),
        };
        let p = pair_solve(n, PairFamily::Lambda(-s), g)?;
        return Ok(PairSpec { q: p.q.conjugate(), r: p.r.conjugate(), family });
    }
    let rel = relation(n, family)?;
    let nr = rat(n as i64);
    let no_pair = |what: String| Error::NoPair(format!("{family}, N={n}: {what}"));
    let (q, r) = match given {
        Given::Q(q) => {
            let inv_r = (rel.rhs - rel.a * q.inverse()) / nr;
            let r = Exponent::from_inverse(inv_r).map_err(|_| no_pair(format!("q={q} gives 1/r = {inv_r}")))?;
            (q, r)
        }
        Given::R(r) => {
            let inv_q = (rel.rhs - nr * r.inverse()) / rel.a;
            let q = Exponent::from_inverse(inv_q).map_err(|_| no_pair(format!("r={r} gives 1/q = {inv_q}")))?;
            (q, r)
        }
    };
    if !pair_check(n, q, r, family)? {
        return Err(no_pair(format!("(q, r) = ({q}, {r}) outside the admissible range")));
    }
    Ok(PairSpec { q, r, family })
}
