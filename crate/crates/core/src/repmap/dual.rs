use std::ops::{Add, Mul, Neg, Sub};

/// First-order dual number `re + eps·ε` with `ε² = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual {
    pub re: f64,
    pub eps: f64,
}

impl Dual {
    pub const ZERO: Dual = Dual { re: 0.0, eps: 0.0 };

    pub fn new(re: f64, eps: f64) -> Self {
        Self { re, eps }
    }

    pub fn constant(re: f64) -> Self {
        Self { re, eps: 0.0 }
    }

    pub fn scale(self, c: f64) -> Self {
        Self {
            re: self.re * c,
            eps: self.eps * c,
        }
    }

    pub fn exp(self) -> Self {
        let e = self.re.exp();
        Self { re: e, eps: e * self.eps }
    }

    pub fn tanh(self) -> Self {
        let t = self.re.tanh();
        Self {
            re: t,
            eps: (1.0 - t * t) * self.eps,
        }
    }

    /// Derivative at exactly zero is taken as zero.
    pub fn relu(self) -> Self {
        if self.re > 0.0 {
            self
        } else {
            Self::ZERO
        }
    }

    pub fn softplus(self) -> Self {
        let x = self.re;
        let value = if x > 0.0 {
            x + (-x).exp().ln_1p()
        } else {
            x.exp().ln_1p()
        };
        let slope = if x >= 0.0 {
            1.0 / (1.0 + (-x).exp())
        } else {
            let e = x.exp();
            e / (1.0 + e)
        };
        Self {
            re: value,
            eps: slope * self.eps,
        }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, rhs: Dual) -> Dual {
        Dual::new(self.re + rhs.re, self.eps + rhs.eps)
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, rhs: Dual) -> Dual {
        Dual::new(self.re - rhs.re, self.eps - rhs.eps)
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, rhs: Dual) -> Dual {
        Dual::new(self.re * rhs.re, self.re * rhs.eps + self.eps * rhs.re)
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual::new(-self.re, -self.eps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule() {
        let x = Dual::new(3.0, 1.0);
        let y = x * x - x;
        assert_eq!(y, Dual::new(6.0, 5.0));
    }

    #[test]
    fn activations_match_closed_form_derivatives() {
        let x = Dual::new(0.3, 2.0);
        let t = x.tanh();
        assert!((t.eps - 2.0 * (1.0 - 0.3f64.tanh().powi(2))).abs() < 1e-15);
        let s = x.softplus();
        assert!((s.re - (1.0 + 0.3f64.exp()).ln()).abs() < 1e-15);
        assert!((s.eps - 2.0 / (1.0 + (-0.3f64).exp())).abs() < 1e-15);
        assert_eq!(Dual::new(0.0, 1.0).relu(), Dual::ZERO);
        assert_eq!(Dual::new(-1.0, 1.0).relu(), Dual::ZERO);
        assert_eq!(Dual::new(1.0, 1.0).relu(), Dual::new(1.0, 1.0));
        let big = Dual::new(800.0, 1.0).softplus();
        assert_eq!(big.re, 800.0);
        assert_eq!(big.eps, 1.0);
    }
}
