//! Built-in equations.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    Coefficient, CoefficientField, ExactSolution, Family, InitialValue, Interval, Poly2, PolyField,
    ReferenceKind, SdeSpec, SmoothDomain,
};
use crate::error::{argument, Result};
use crate::schemes::SchemeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CatalogName {
    /// `dX = (δ − βX) dt + σ√|X| dW`
    Cir,
    /// `dX = −X⁵ dt + X dW`
    Quintic,
    /// `dX = sgn(X)(1 + X) dt + dW`
    SgnDrift,
    /// `dX = sgn(X) dt + dW`
    SgnDriftPlain,
    /// `dX = αX dt + βX dW`
    Gbm,
    /// CIR with δ = 1, β = 0, σ = 2.
    SquaredBessel,
}

impl std::str::FromStr for CatalogName {
    type Err = crate::error::LabError;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .or_else(|_| argument(format!("unknown catalog equation '{s}'")))
    }
}

/// Parameters for [`catalog`]. Unset fields take the documented defaults:
/// `delta = 2`, `beta = 0` (CIR) or `1` (GBM), `sigma = 2`, `alpha = 0.5`,
/// `x0 = 1` (`0.5` for the sign-drift equations), `horizon = 1`.
///
/// Rate targets quoted for CIR assume the normalization `sigma = 2`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogParams {
    pub delta: Option<f64>,
    pub beta: Option<f64>,
    pub sigma: Option<f64>,
    pub alpha: Option<f64>,
    pub x0: Option<f64>,
    pub horizon: Option<f64>,
}

pub fn catalog(name: CatalogName, params: &CatalogParams) -> Result<SdeSpec> {
    let horizon = params.horizon.unwrap_or(1.0);
    if !(horizon > 0.0 && horizon.is_finite()) {
        return argument(format!("horizon must be positive, got {horizon}"));
    }
    match name {
        CatalogName::Cir | CatalogName::SquaredBessel => {
            let (delta, beta, sigma) = if name == CatalogName::SquaredBessel {
                (1.0, 0.0, 2.0)
            } else {
                (
                    params.delta.unwrap_or(2.0),
                    params.beta.unwrap_or(0.0),
                    params.sigma.unwrap_or(2.0),
                )
            };
            let x0 = params.x0.unwrap_or(1.0);
            if !(delta > 0.0 && sigma > 0.0 && beta >= 0.0 && x0 > 0.0) {
                return argument(format!(
                    "CIR requires delta, sigma, x0 > 0 and beta >= 0 (got delta={delta}, beta={beta}, sigma={sigma}, x0={x0})"
                ));
            }
            let field = CirField::new(delta, beta, sigma);
            // The drift-implicit square-root scheme needs 4δ > σ².
            let reference = if 4.0 * delta > sigma * sigma {
                ReferenceKind::Scheme(SchemeId::DriftImplicitSqrt)
            } else {
                ReferenceKind::Scheme(SchemeId::Milstein)
            };
            let label = if name == CatalogName::SquaredBessel {
                "squared_bessel".to_string()
            } else {
                format!("cir(delta={delta},beta={beta},sigma={sigma})")
            };
            Ok(SdeSpec::new(label, Arc::new(field), horizon, InitialValue::fixed(x0))?
                .with_family(Family::Cir { delta, beta, sigma })
                .with_reference(reference))
        }
        CatalogName::Quintic => {
            let x0 = params.x0.unwrap_or(1.0);
            if x0 == 0.0 || !x0.is_finite() {
                return argument("quintic drift requires a finite nonzero x0");
            }
            let field = PolyField::new(Poly2::monomial(-1.0, 0, 5), Poly2::monomial(1.0, 0, 1))
                .with_max_order((2, 3));
            Ok(SdeSpec::new("quintic", Arc::new(field), horizon, InitialValue::fixed(x0))?
                .with_family(Family::Quintic)
                .with_reference(ReferenceKind::Scheme(SchemeId::TamedMilstein)))
        }
        CatalogName::SgnDrift | CatalogName::SgnDriftPlain => {
            let x0 = params.x0.unwrap_or(0.5);
            if !x0.is_finite() {
                return argument("x0 must be finite");
            }
            let plain = name == CatalogName::SgnDriftPlain;
            let (label, family) = if plain {
                ("sgn_drift_plain", Family::SgnDriftPlain)
            } else {
                ("sgn_drift", Family::SgnDrift)
            };
            Ok(SdeSpec::new(label, Arc::new(SgnField::new(plain)), horizon, InitialValue::fixed(x0))?
                .with_family(family)
                .with_reference(ReferenceKind::Scheme(SchemeId::Euler)))
        }
        CatalogName::Gbm => {
            let alpha = params.alpha.unwrap_or(0.5);
            let beta = params.beta.unwrap_or(1.0);
            let x0 = params.x0.unwrap_or(1.0);
            if !(alpha.is_finite() && beta.is_finite() && x0.is_finite()) {
                return argument("GBM parameters must be finite");
            }
            let field = PolyField::new(Poly2::monomial(alpha, 0, 1), Poly2::monomial(beta, 0, 1))
                .with_max_order((2, 3));
            let exact = ExactSolution::new(move |x0, t, w| {
                x0 * ((alpha - 0.5 * beta * beta) * t + beta * w).exp()
            });
            Ok(SdeSpec::new(
                format!("gbm(alpha={alpha},beta={beta})"),
                Arc::new(field),
                horizon,
                InitialValue::fixed(x0),
            )?
            .with_family(Family::Gbm { alpha, beta })
            .with_exact_solution(exact))
        }
    }
}

/// `a(x) = δ − βx`, `b(x) = σ√|x|`, smooth on `x > 0`.
#[derive(Debug, Clone)]
pub struct CirField {
    delta: f64,
    beta: f64,
    sigma: f64,
    domain: SmoothDomain,
}

impl CirField {
    pub fn new(delta: f64, beta: f64, sigma: f64) -> Self {
        Self {
            delta,
            beta,
            sigma,
            domain: SmoothDomain::space(vec![Interval::new(0.0, f64::INFINITY)]),
        }
    }
}

impl CoefficientField for CirField {
    fn partial(&self, which: Coefficient, i: usize, j: usize, _t: f64, x: f64) -> Option<f64> {
        if i > 2 || j > 3 {
            return None;
        }
        if i > 0 {
            return Some(0.0);
        }
        let v = match which {
            Coefficient::Drift => match j {
                0 => self.delta - self.beta * x,
                1 => -self.beta,
                _ => 0.0,
            },
            Coefficient::Diffusion => {
                let r = x.abs().sqrt();
                let s = if x < 0.0 { -1.0 } else { 1.0 };
                match j {
                    0 => self.sigma * r,
                    1 => s * self.sigma / (2.0 * r),
                    2 => -self.sigma / (4.0 * r * r * r),
                    _ => s * 3.0 * self.sigma / (8.0 * r.powi(5)),
                }
            }
        };
        Some(v)
    }

    fn max_order(&self, _which: Coefficient) -> (usize, usize) {
        (2, 3)
    }

    fn smooth_domain(&self) -> &SmoothDomain {
        &self.domain
    }

    fn is_autonomous(&self) -> bool {
        true
    }
}

/// `a(x) = sgn(x)(1 + x)` (or `sgn(x)` when plain), `b = 1`, with
/// `sgn(0) = 1`; smooth on `ℝ∖{0}`.
#[derive(Debug, Clone)]
pub struct SgnField {
    plain: bool,
    domain: SmoothDomain,
}

impl SgnField {
    pub fn new(plain: bool) -> Self {
        Self {
            plain,
            domain: SmoothDomain::space(vec![
                Interval::new(f64::NEG_INFINITY, 0.0),
                Interval::new(0.0, f64::INFINITY),
            ]),
        }
    }
}

impl CoefficientField for SgnField {
    fn partial(&self, which: Coefficient, i: usize, j: usize, _t: f64, x: f64) -> Option<f64> {
        if i > 2 || j > 3 {
            return None;
        }
        if i > 0 {
            return Some(0.0);
        }
        let sgn = if x >= 0.0 { 1.0 } else { -1.0 };
        let v = match (which, j) {
            (Coefficient::Drift, 0) if self.plain => sgn,
            (Coefficient::Drift, 0) => sgn * (1.0 + x),
            (Coefficient::Drift, 1) if !self.plain => sgn,
            (Coefficient::Diffusion, 0) => 1.0,
            _ => 0.0,
        };
        Some(v)
    }

    fn max_order(&self, _which: Coefficient) -> (usize, usize) {
        (2, 3)
    }

    fn smooth_domain(&self) -> &SmoothDomain {
        &self.domain
    }

    fn is_autonomous(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::lie_gap;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn all_catalog() -> Vec<SdeSpec> {
        let mut out = Vec::new();
        for name in [
            CatalogName::Cir,
            CatalogName::Quintic,
            CatalogName::SgnDrift,
            CatalogName::SgnDriftPlain,
            CatalogName::Gbm,
            CatalogName::SquaredBessel,
        ] {
            out.push(catalog(name, &CatalogParams::default()).unwrap());
        }
        out.push(
            catalog(
                CatalogName::Cir,
                &CatalogParams {
                    delta: Some(0.5),
                    beta: Some(1.0),
                    sigma: Some(1.3),
                    ..Default::default()
                },
            )
            .unwrap(),
        );
        out
    }

    /// Sample a point inside the smooth domain, away from its boundary.
    fn sample_point(spec: &SdeSpec, rng: &mut ChaCha8Rng) -> (f64, f64) {
        loop {
            let t = rng.random::<f64>() * spec.horizon;
            let x = -5.0 + 10.0 * rng.random::<f64>();
            let h = 1e-5 * (x.abs() + 1.0);
            let dom = spec.coeffs.smooth_domain();
            if x.abs() > 0.1 && dom.contains(t, x - 2.0 * h) && dom.contains(t, x + 2.0 * h) {
                return (t, x);
            }
        }
    }

    #[test]
    fn declared_derivatives_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for spec in all_catalog() {
            for which in [Coefficient::Drift, Coefficient::Diffusion] {
                let (mi, mj) = spec.coeffs.max_order(which);
                for _ in 0..100 {
                    let (t, x) = sample_point(&spec, &mut rng);
                    let h = 1e-5 * (x.abs() + 1.0);
                    for i in 0..=mi {
                        for j in 0..mj {
                            let f = |x| spec.partial(which, i, j, t, x).unwrap();
                            let fd = (f(x + h) - f(x - h)) / (2.0 * h);
                            let d = spec.partial(which, i, j + 1, t, x).unwrap();
                            assert!(
                                (fd - d).abs() <= 1e-5 * d.abs().max(1.0),
                                "{} {:?} ({i},{}) at x={x}: fd={fd} declared={d}",
                                spec.name,
                                which,
                                j + 1
                            );
                        }
                    }
                    for j in 0..=mj.min(2) {
                        // autonomous: time derivatives vanish
                        let dt = spec.partial(which, 1, j, t, x).unwrap();
                        assert_eq!(dt, 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn autonomous_fields_ignore_time() {
        for spec in all_catalog() {
            for x in [0.4, 1.1, 3.0] {
                for which in [Coefficient::Drift, Coefficient::Diffusion] {
                    for j in 0..=3 {
                        assert_eq!(
                            spec.partial(which, 0, j, 0.05, x).unwrap(),
                            spec.partial(which, 0, j, 0.95, x).unwrap()
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn coefficient_values_are_total() {
        for spec in all_catalog() {
            for x in [-7.0, -1.0, 0.0, 1e-300, 2.0, 1e6] {
                assert!(spec.drift(0.0, x).is_finite(), "{} drift at {x}", spec.name);
                assert!(spec.diffusion(0.0, x).is_finite(), "{} diffusion at {x}", spec.name);
            }
        }
    }

    #[test]
    fn gbm_exact_solution_formula() {
        let spec = catalog(
            CatalogName::Gbm,
            &CatalogParams {
                alpha: Some(0.3),
                beta: Some(0.6),
                x0: Some(2.0),
                horizon: Some(1.5),
                ..Default::default()
            },
        )
        .unwrap();
        let exact = spec.exact_solution.as_ref().unwrap();
        let w = 0.37;
        let expected = 2.0 * ((0.3f64 - 0.18) * 1.5 + 0.6 * w).exp();
        assert_eq!(exact.eval(2.0, 1.5, w), expected);
        assert_eq!(spec.reference, ReferenceKind::Exact);
    }

    #[test]
    fn squared_bessel_is_cir_one_zero_two() {
        let sb = catalog(CatalogName::SquaredBessel, &CatalogParams::default()).unwrap();
        let cir = catalog(
            CatalogName::Cir,
            &CatalogParams {
                delta: Some(1.0),
                beta: Some(0.0),
                sigma: Some(2.0),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(sb.family, cir.family);
        for x in [0.2, 1.0, 3.3] {
            assert_eq!(sb.drift(0.0, x), cir.drift(0.0, x));
            assert_eq!(sb.diffusion(0.0, x), cir.diffusion(0.0, x));
            assert_eq!(lie_gap(&sb, 0.0, x).unwrap(), 0.0);
        }
    }

    #[test]
    fn sgn_drift_plain_has_zero_gap() {
        let s = catalog(CatalogName::SgnDriftPlain, &CatalogParams::default()).unwrap();
        for x in [-3.0, -0.1, 0.2, 5.0] {
            assert_eq!(lie_gap(&s, 0.0, x).unwrap(), 0.0);
        }
    }

    #[test]
    fn invalid_parameters_rejected() {
        let bad = |p: CatalogParams| catalog(CatalogName::Cir, &p).is_err();
        assert!(bad(CatalogParams { delta: Some(-1.0), ..Default::default() }));
        assert!(bad(CatalogParams { sigma: Some(0.0), ..Default::default() }));
        assert!(bad(CatalogParams { beta: Some(-0.1), ..Default::default() }));
        assert!(bad(CatalogParams { x0: Some(0.0), ..Default::default() }));
        assert!(catalog(CatalogName::Quintic, &CatalogParams { x0: Some(0.0), ..Default::default() }).is_err());
        assert!(catalog(CatalogName::Gbm, &CatalogParams { horizon: Some(-1.0), ..Default::default() }).is_err());
        assert!("heston".parse::<CatalogName>().is_err());
        assert_eq!("sgn_drift_plain".parse::<CatalogName>().unwrap(), CatalogName::SgnDriftPlain);
    }
}
