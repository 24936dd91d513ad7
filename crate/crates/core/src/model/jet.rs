//! Truncated Taylor arithmetic, used to differentiate the cut-off functions.

use std::ops::{Add, Mul, Neg, Sub};

pub const JET_ORDER: usize = 4;

/// Taylor coefficients `c[k]` of `f(x0 + h) = sum c[k] h^k`, truncated after
/// `JET_ORDER`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet(pub [f64; JET_ORDER + 1]);

impl Jet {
    pub fn constant(v: f64) -> Self {
        let mut c = [0.0; JET_ORDER + 1];
        c[0] = v;
        Jet(c)
    }

    /// The affine map `x -> (x - offset) * slope` expanded at `x`.
    pub fn affine(x: f64, offset: f64, slope: f64) -> Self {
        let mut c = [0.0; JET_ORDER + 1];
        c[0] = (x - offset) * slope;
        c[1] = slope;
        Jet(c)
    }

    pub fn value(&self) -> f64 {
        self.0[0]
    }

    /// `d^k f / dx^k` at the expansion point.
    pub fn derivative(&self, k: usize) -> f64 {
        if k > JET_ORDER {
            return 0.0;
        }
        let fact: f64 = (1..=k).map(|m| m as f64).product();
        self.0[k] * fact
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0.0)
    }

    pub fn exp(&self) -> Self {
        let mut g = [0.0; JET_ORDER + 1];
        g[0] = self.0[0].exp();
        for k in 1..=JET_ORDER {
            let mut acc = 0.0;
            for j in 1..=k {
                acc += j as f64 * self.0[j] * g[k - j];
            }
            g[k] = acc / k as f64;
        }
        Jet(g)
    }

    pub fn recip(&self) -> Self {
        let mut r = [0.0; JET_ORDER + 1];
        let inv = 1.0 / self.0[0];
        r[0] = inv;
        for k in 1..=JET_ORDER {
            let mut acc = 0.0;
            for j in 1..=k {
                acc += self.0[j] * r[k - j];
            }
            r[k] = -inv * acc;
        }
        Jet(r)
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, rhs: Jet) -> Jet {
        let mut c = self.0;
        for (a, b) in c.iter_mut().zip(rhs.0) {
            *a += b;
        }
        Jet(c)
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        self + (-rhs)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        Jet(self.0.map(|c| -c))
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        let mut c = [0.0; JET_ORDER + 1];
        for (i, &a) in self.0.iter().enumerate() {
            for (j, &b) in rhs.0.iter().enumerate().take(JET_ORDER + 1 - i) {
                c[i + j] += a * b;
            }
        }
        Jet(c)
    }
}

/// `exp(-1/u)` for `u > 0`, zero otherwise.
fn flat(u: Jet) -> Jet {
    if u.value() <= 0.0 {
        Jet::constant(0.0)
    } else {
        (-u.recip()).exp()
    }
}

/// Smooth step: 0 for `u <= 0`, 1 for `u >= 1`, infinitely differentiable.
pub fn smooth_step(u: Jet) -> Jet {
    if u.value() <= 0.0 {
        return Jet::constant(0.0);
    }
    if u.value() >= 1.0 {
        return Jet::constant(1.0);
    }
    let rising = flat(u);
    let falling = flat(Jet::constant(1.0) - u);
    rising * (rising + falling).recip()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step_scalar(u: f64) -> f64 {
        smooth_step(Jet::affine(u, 0.0, 1.0)).value()
    }

    #[test]
    fn step_limits_and_symmetry() {
        assert_eq!(step_scalar(-0.3), 0.0);
        assert_eq!(step_scalar(0.0), 0.0);
        assert_eq!(step_scalar(1.0), 1.0);
        assert_eq!(step_scalar(4.0), 1.0);
        assert!((step_scalar(0.5) - 0.5).abs() < 1e-15);
        for u in [0.1, 0.27, 0.6, 0.93] {
            assert!((step_scalar(u) + step_scalar(1.0 - u) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn jet_derivatives_match_finite_differences() {
        let h = 1e-4;
        for u in [0.2, 0.45, 0.71] {
            let jet = smooth_step(Jet::affine(u, 0.0, 1.0));
            for k in 1..=3 {
                let lower = smooth_step(Jet::affine(u - h, 0.0, 1.0)).derivative(k - 1);
                let upper = smooth_step(Jet::affine(u + h, 0.0, 1.0)).derivative(k - 1);
                let fd = (upper - lower) / (2.0 * h);
                let d = jet.derivative(k);
                assert!((fd - d).abs() < 1e-5 * (1.0 + d.abs()), "u={u} k={k}: {fd} vs {d}");
            }
        }
    }

    #[test]
    fn exp_and_recip_of_polynomial() {
        // f(x) = 1 + x at x = 0.5: exp(f) derivatives are all exp(1.5).
        let f = Jet::affine(0.5, -1.0, 1.0);
        let e = f.exp();
        for k in 0..=JET_ORDER {
            assert!((e.derivative(k) - 1.5f64.exp()).abs() < 1e-12);
        }
        // 1/(1+x): k-th derivative (-1)^k k! / (1+x)^(k+1)
        let r = f.recip();
        let mut fact = 1.0;
        for k in 0..=JET_ORDER {
            if k > 0 {
                fact *= k as f64;
            }
            let expected = if k % 2 == 0 { 1.0 } else { -1.0 } * fact / 1.5f64.powi(k as i32 + 1);
            assert!((r.derivative(k) - expected).abs() < 1e-12);
        }
    }
}
