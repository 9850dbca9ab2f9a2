//! Extended-real energies. `+∞` is a distinguished value rather than a large float, so
//! hard constraints stay exact and sums with an infinite term are absorbing.

use std::fmt;
use std::iter::Sum;
use std::ops::Add;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub enum Energy {
    Finite(f64),
    Infinite,
}

impl Energy {
    pub const ZERO: Energy = Energy::Finite(0.0);

    /// Maps non-finite floats (`+inf`) onto [`Energy::Infinite`].
    pub fn from_f64(v: f64) -> Energy {
        if v == f64::INFINITY {
            Energy::Infinite
        } else {
            debug_assert!(!v.is_nan(), "energy is NaN");
            Energy::Finite(v)
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Energy::Finite(_))
    }

    pub fn is_infinite(self) -> bool {
        !self.is_finite()
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Energy::Finite(v) => Some(v),
            Energy::Infinite => None,
        }
    }

    /// The value as a float, with `+inf` for the infinite energy.
    pub fn to_f64(self) -> f64 {
        match self {
            Energy::Finite(v) => v,
            Energy::Infinite => f64::INFINITY,
        }
    }

    /// Boltzmann weight `exp(-beta * E)`; zero for infinite energy. `beta = 0` gives 1
    /// for every finite energy.
    pub fn weight(self, beta: f64) -> f64 {
        match self {
            Energy::Finite(v) => (-beta * v).exp(),
            Energy::Infinite => 0.0,
        }
    }

    pub fn min(self, other: Energy) -> Energy {
        if other < self {
            other
        } else {
            self
        }
    }
}

impl Default for Energy {
    fn default() -> Self {
        Energy::ZERO
    }
}

impl Add for Energy {
    type Output = Energy;

    fn add(self, rhs: Energy) -> Energy {
        match (self, rhs) {
            (Energy::Finite(a), Energy::Finite(b)) => Energy::Finite(a + b),
            _ => Energy::Infinite,
        }
    }
}

impl Add<f64> for Energy {
    type Output = Energy;

    fn add(self, rhs: f64) -> Energy {
        match self {
            Energy::Finite(a) => Energy::Finite(a + rhs),
            Energy::Infinite => Energy::Infinite,
        }
    }
}

impl Sum for Energy {
    fn sum<I: Iterator<Item = Energy>>(iter: I) -> Energy {
        iter.fold(Energy::ZERO, |acc, e| acc + e)
    }
}

impl fmt::Display for Energy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Energy::Finite(v) => write!(f, "{v}"),
            Energy::Infinite => f.write_str("inf"),
        }
    }
}

// Serialized as a number, or the string "inf" (JSON has no infinity literal).
impl Serialize for Energy {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Energy::Finite(v) => s.serialize_f64(*v),
            Energy::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Energy {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(Energy::from_f64(v)),
            Repr::Text(t) if t == "inf" || t == "+inf" => Ok(Energy::Infinite),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("bad energy {t:?}"))),
        }
    }
}

/// `log(sum(exp(x_i)))` with max-subtraction; `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(values: impl IntoIterator<Item = f64>) -> f64 {
    let values: Vec<f64> = values.into_iter().collect();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Streaming log-sum-exp accumulator.
#[derive(Clone, Copy, Debug)]
pub struct LogSum {
    max: f64,
    scaled: f64,
}

impl Default for LogSum {
    fn default() -> Self {
        LogSum { max: f64::NEG_INFINITY, scaled: 0.0 }
    }
}

impl LogSum {
    pub fn add(&mut self, log_term: f64) {
        if log_term == f64::NEG_INFINITY {
            return;
        }
        if log_term > self.max {
            self.scaled = self.scaled * (self.max - log_term).exp() + 1.0;
            self.max = log_term;
        } else {
            self.scaled += (log_term - self.max).exp();
        }
    }

    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled.ln()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infinity_is_absorbing() {
        assert_eq!(Energy::Finite(1.0) + Energy::Infinite, Energy::Infinite);
        let total: Energy = [Energy::Finite(1.0), Energy::Finite(2.0)].into_iter().sum();
        assert_eq!(total, Energy::Finite(3.0));
        assert!(Energy::Finite(1e300) < Energy::Infinite);
        assert_eq!(Energy::Infinite.weight(1.0), 0.0);
        assert_eq!(Energy::Finite(5.0).weight(0.0), 1.0);
    }

    #[test]
    fn serde_uses_inf_string() {
        let s = serde_json::to_string(&vec![Energy::Finite(1.5), Energy::Infinite]).unwrap();
        assert_eq!(s, r#"[1.5,"inf"]"#);
        let back: Vec<Energy> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, vec![Energy::Finite(1.5), Energy::Infinite]);
    }

    #[test]
    fn log_sum_matches_direct() {
        let xs = [-1.0, 0.5, 3.0, -700.0];
        let direct = xs.iter().map(|x: &f64| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(xs) - direct).abs() < 1e-14);
        let mut acc = LogSum::default();
        xs.iter().for_each(|&x| acc.add(x));
        assert!((acc.value() - direct).abs() < 1e-14);
        assert_eq!(log_sum_exp(Vec::<f64>::new()), f64::NEG_INFINITY);
    }
}
