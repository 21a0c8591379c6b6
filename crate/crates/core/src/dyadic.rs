//! Exact nonnegative dyadic rationals `num / 2^exp`.

use std::cmp::Ordering;
use std::fmt;

use crate::error::{FramexError, Result};

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dyadic {
    num: u128,
    exp: u32,
}

impl fmt::Debug for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/2^{}", self.num, self.exp)
    }
}

impl Dyadic {
    pub const ZERO: Dyadic = Dyadic { num: 0, exp: 0 };

    /// Canonical form: odd numerator unless the exponent is 0.
    pub fn new(num: u128, exp: u32) -> Self {
        if num == 0 {
            return Dyadic::ZERO;
        }
        let shift = num.trailing_zeros().min(exp);
        Dyadic {
            num: num >> shift,
            exp: exp - shift,
        }
    }

    pub fn integer(n: u128) -> Self {
        Dyadic { num: n, exp: 0 }
    }

    /// `2^{-l}` for any integer `l`.
    pub fn pow2_neg(l: i32) -> Self {
        if l >= 0 {
            Dyadic { num: 1, exp: l as u32 }
        } else {
            Dyadic {
                num: 1u128 << (-l) as u32,
                exp: 0,
            }
        }
    }

    /// Exact conversion of a finite nonnegative double.
    pub fn from_f64(x: f64) -> Result<Self> {
        if !x.is_finite() || x < 0.0 {
            return Err(FramexError::precondition(format!(
                "{x} is not a finite nonnegative number"
            )));
        }
        if x == 0.0 {
            return Ok(Dyadic::ZERO);
        }
        let bits = x.to_bits();
        let raw_exp = ((bits >> 52) & 0x7ff) as i32;
        let frac = bits & ((1u64 << 52) - 1);
        let (mantissa, e) = if raw_exp == 0 {
            (frac, -1074)
        } else {
            (frac | (1u64 << 52), raw_exp - 1075)
        };
        let shift = mantissa.trailing_zeros() as i32;
        let (m, e) = ((mantissa >> shift) as u128, e + shift);
        if e >= 0 {
            if e > 127 - 53 {
                return Err(FramexError::precondition(format!("{x} is too large")));
            }
            Ok(Dyadic { num: m << e, exp: 0 })
        } else if -e > 127 {
            Err(FramexError::precondition(format!(
                "{x} needs more than 127 binary places"
            )))
        } else {
            Ok(Dyadic::new(m, (-e) as u32))
        }
    }

    pub fn numerator(self) -> u128 {
        self.num
    }

    pub fn exponent(self) -> u32 {
        self.exp
    }

    pub fn is_zero(self) -> bool {
        self.num == 0
    }

    pub fn is_integer(self) -> bool {
        self.exp == 0
    }

    pub fn to_f64(self) -> f64 {
        // exact whenever the numerator has at most 53 significant bits
        (self.num as f64) * 2f64.powi(-(self.exp as i32))
    }

    fn aligned(self, other: Dyadic) -> (u128, u128, u32) {
        let e = self.exp.max(other.exp);
        let a = self
            .num
            .checked_shl(e - self.exp)
            .filter(|v| v >> (e - self.exp) == self.num)
            .expect("dyadic overflow");
        let b = other
            .num
            .checked_shl(e - other.exp)
            .filter(|v| v >> (e - other.exp) == other.num)
            .expect("dyadic overflow");
        (a, b, e)
    }

    pub fn add(self, other: Dyadic) -> Dyadic {
        let (a, b, e) = self.aligned(other);
        Dyadic::new(a.checked_add(b).expect("dyadic overflow"), e)
    }

    pub fn checked_sub(self, other: Dyadic) -> Option<Dyadic> {
        let (a, b, e) = self.aligned(other);
        a.checked_sub(b).map(|n| Dyadic::new(n, e))
    }

    pub fn floor(self) -> u128 {
        self.num >> self.exp
    }

    pub fn ceil(self) -> u128 {
        let f = self.floor();
        if self.is_integer() {
            f
        } else {
            f + 1
        }
    }

    /// `self · 2^k` as an integer, if it is one.
    pub fn scaled_integer(self, k: u32) -> Option<u128> {
        if k >= self.exp {
            self.num.checked_shl(k - self.exp).filter(|v| v >> (k - self.exp) == self.num)
        } else {
            None
        }
    }

    /// Exponents `l_1 < l_2 < …` with `self = Σ 2^{-l_j}`, in order of
    /// decreasing magnitude.
    pub fn binary_exponents(self) -> Vec<i32> {
        let mut out = Vec::with_capacity(self.num.count_ones() as usize);
        let mut rest = self.num;
        while rest != 0 {
            let p = 127 - rest.leading_zeros() as i32;
            out.push(self.exp as i32 - p);
            rest &= !(1u128 << p);
        }
        out
    }
}

impl PartialOrd for Dyadic {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Dyadic {
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b, _) = self.aligned(*other);
        a.cmp(&b)
    }
}
