use super::{Coefficient, CoefficientField, SmoothDomain};

/// Polynomial in `(t, x)`: a sum of terms `c · t^p · x^q`.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly2 {
    terms: Vec<(f64, u32, u32)>,
}

fn falling(n: u32, k: usize) -> f64 {
    (0..k as u32).map(|m| (n - m) as f64).product()
}

impl Poly2 {
    /// Terms given as `(coefficient, time power, space power)`.
    pub fn new(terms: Vec<(f64, u32, u32)>) -> Self {
        Self { terms }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![(c, 0, 0)])
    }

    pub fn monomial(c: f64, t_pow: u32, x_pow: u32) -> Self {
        Self::new(vec![(c, t_pow, x_pow)])
    }

    pub fn derivative(&self, i: usize, j: usize, t: f64, x: f64) -> f64 {
        let mut acc = 0.0;
        for &(c, p, q) in &self.terms {
            if (p as usize) < i || (q as usize) < j {
                continue;
            }
            let scale = falling(p, i) * falling(q, j);
            acc += c * scale * t.powi((p as usize - i) as i32) * x.powi((q as usize - j) as i32);
        }
        acc
    }

    fn depends_on_time(&self) -> bool {
        self.terms.iter().any(|&(c, p, _)| p > 0 && c != 0.0)
    }
}

/// Coefficients given by bivariate polynomials; all derivatives are exact.
#[derive(Debug, Clone)]
pub struct PolyField {
    drift: Poly2,
    diffusion: Poly2,
    max_order: (usize, usize),
    domain: SmoothDomain,
}

impl PolyField {
    pub fn new(drift: Poly2, diffusion: Poly2) -> Self {
        Self {
            drift,
            diffusion,
            max_order: (3, 4),
            domain: SmoothDomain::everywhere(),
        }
    }

    /// Restrict the declared derivative orders, e.g. to exercise capability
    /// errors with a field that only claims low regularity.
    pub fn with_max_order(mut self, order: (usize, usize)) -> Self {
        self.max_order = order;
        self
    }
}

impl CoefficientField for PolyField {
    fn partial(&self, which: Coefficient, i: usize, j: usize, t: f64, x: f64) -> Option<f64> {
        if i > self.max_order.0 || j > self.max_order.1 {
            return None;
        }
        let p = match which {
            Coefficient::Drift => &self.drift,
            Coefficient::Diffusion => &self.diffusion,
        };
        Some(p.derivative(i, j, t, x))
    }

    fn max_order(&self, _which: Coefficient) -> (usize, usize) {
        self.max_order
    }

    fn smooth_domain(&self) -> &SmoothDomain {
        &self.domain
    }

    fn is_autonomous(&self) -> bool {
        !self.drift.depends_on_time() && !self.diffusion.depends_on_time()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_of_monomials() {
        let p = Poly2::new(vec![(2.0, 2, 3), (-1.0, 0, 1)]);
        // 2 t² x³ − x
        assert_eq!(p.derivative(0, 0, 2.0, 3.0), 2.0 * 4.0 * 27.0 - 3.0);
        assert_eq!(p.derivative(0, 1, 2.0, 3.0), 2.0 * 4.0 * 3.0 * 9.0 - 1.0);
        assert_eq!(p.derivative(1, 2, 2.0, 3.0), 2.0 * 2.0 * 2.0 * 6.0 * 3.0);
        assert_eq!(p.derivative(3, 0, 2.0, 3.0), 0.0);
        assert_eq!(p.derivative(0, 4, 2.0, 3.0), 0.0);
    }
}
