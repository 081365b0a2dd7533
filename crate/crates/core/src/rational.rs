//! Exact rational uncertainty parameters.

use std::fmt;
use std::str::FromStr;

use num_integer::Integer;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseEpsError {
    #[error("expected a rational \"p/q\", got {0:?}")]
    Syntax(String),
    #[error("epsilon must be positive")]
    NonPositive,
}

/// Uncertainty level `p/q`, always stored in lowest terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Eps {
    num: u64,
    den: u64,
}

impl Eps {
    pub fn new(num: u64, den: u64) -> Result<Self, ParseEpsError> {
        if num == 0 || den == 0 {
            return Err(ParseEpsError::NonPositive);
        }
        let g = num.gcd(&den);
        Ok(Eps {
            num: num / g,
            den: den / g,
        })
    }

    pub fn num(self) -> u64 {
        self.num
    }

    pub fn den(self) -> u64 {
        self.den
    }

    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `ceil(1/eps)`.
    pub fn ceil_inverse(self) -> u64 {
        self.den.div_ceil(self.num)
    }
}

impl fmt::Display for Eps {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for Eps {
    type Err = ParseEpsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = || ParseEpsError::Syntax(s.to_string());
        let (p, q) = match s.split_once('/') {
            Some((p, q)) => (p.trim(), q.trim()),
            None => (s, "1"),
        };
        let p: u64 = p.parse().map_err(|_| bad())?;
        let q: u64 = q.parse().map_err(|_| bad())?;
        Eps::new(p, q)
    }
}

impl TryFrom<String> for Eps {
    type Error = ParseEpsError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Eps> for String {
    fn from(e: Eps) -> String {
        e.to_string()
    }
}

/// Perturbation factor `num/den >= 1` as an exact ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Kappa {
    pub num: u128,
    pub den: u128,
}

impl Kappa {
    pub fn new(num: u128, den: u128) -> Self {
        assert!(den > 0 && num >= den, "kappa must be at least 1");
        let g = num.gcd(&den);
        Kappa {
            num: num / g,
            den: den / g,
        }
    }

    /// `g <= kappa * b`, evaluated exactly.
    #[inline]
    pub fn permits(self, b: u64, g: u64) -> bool {
        g as u128 * self.den <= self.num * b as u128
    }

    /// `floor(kappa * z)`.
    pub fn floor_mul(self, z: u64) -> u64 {
        (self.num * z as u128 / self.den) as u64
    }

    /// `ceil(a / kappa)`.
    pub fn ceil_div(self, a: u64) -> u64 {
        (a as u128 * self.den).div_ceil(self.num) as u64
    }

    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// The effective uncertainty `kappa - 1`.
    pub fn excess(self) -> f64 {
        (self.num - self.den) as f64 / self.den as f64
    }
}

impl fmt::Display for Kappa {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}
