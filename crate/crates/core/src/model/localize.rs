//! Localized coefficients `ã = η₁ a`, `b̃ = η₁ b + s·η₂` built from smooth
//! cut-offs around nested intervals `I₁ ⊃ I₂ ⊃ I₃`.
//!
//! `η₁` is 1 on `I₂` and 0 off `I₁`; `η₂` is 0 on `I₃` and 1 off `I₂`.
//! `s` is the sign of `b` on `I₁`, so `|b̃|` stays bounded away from zero for
//! either sign of the diffusion. On `I₃` evaluation is forwarded to the
//! original field, which makes the two fields agree bit for bit there.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::jet::{smooth_step, Jet, JET_ORDER};
use super::{Coefficient, CoefficientField, Family, Interval, ReferenceKind, SdeSpec, SmoothDomain};
use crate::error::{argument, LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NestedIntervals {
    pub outer: Interval,
    pub middle: Interval,
    pub inner: Interval,
}

impl NestedIntervals {
    pub fn new(outer: Interval, middle: Interval, inner: Interval) -> Self {
        Self { outer, middle, inner }
    }
}

#[derive(Debug, Clone)]
pub struct LocalizedField {
    original: Arc<dyn CoefficientField>,
    nest: NestedIntervals,
    sign: f64,
    domain: SmoothDomain,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, m| acc * (n - m) as f64 / (m + 1) as f64)
}

impl LocalizedField {
    pub fn intervals(&self) -> NestedIntervals {
        self.nest
    }

    /// `η₁` as a jet in `x`.
    pub fn eta1(&self, x: f64) -> Jet {
        let (o, m) = (self.nest.outer, self.nest.middle);
        let left = smooth_step(Jet::affine(x, o.lo, 1.0 / (m.lo - o.lo)));
        let right = smooth_step(Jet::affine(x, o.hi, -1.0 / (o.hi - m.hi)));
        left * right
    }

    /// `η₂` as a jet in `x`.
    pub fn eta2(&self, x: f64) -> Jet {
        let (m, i) = (self.nest.middle, self.nest.inner);
        let left = smooth_step(Jet::affine(x, m.lo, 1.0 / (i.lo - m.lo)));
        let right = smooth_step(Jet::affine(x, m.hi, -1.0 / (m.hi - i.hi)));
        Jet::constant(1.0) - left * right
    }
}

impl CoefficientField for LocalizedField {
    fn partial(&self, which: Coefficient, i: usize, j: usize, t: f64, x: f64) -> Option<f64> {
        let (mi, mj) = self.max_order(which);
        if i > mi || j > mj {
            return None;
        }
        if self.nest.inner.contains(x) {
            return self.original.partial(which, i, j, t, x);
        }
        let e1 = self.eta1(x);
        let mut acc = 0.0;
        if !e1.is_zero() {
            for m in 0..=j {
                let d = e1.derivative(m);
                if d != 0.0 {
                    acc += binomial(j, m) * d * self.original.partial(which, i, j - m, t, x)?;
                }
            }
        }
        if which == Coefficient::Diffusion && i == 0 {
            acc += self.sign * self.eta2(x).derivative(j);
        }
        Some(acc)
    }

    fn max_order(&self, which: Coefficient) -> (usize, usize) {
        let (i, j) = self.original.max_order(which);
        (i, j.min(JET_ORDER))
    }

    fn smooth_domain(&self) -> &SmoothDomain {
        &self.domain
    }

    fn is_autonomous(&self) -> bool {
        self.original.is_autonomous()
    }
}

const SIGN_SCAN: usize = 1024;

/// Replace `(a, b)` by bounded, globally Lipschitz coefficients that agree
/// with the originals on the inner interval.
pub fn localize(spec: &SdeSpec, nest: NestedIntervals) -> Result<SdeSpec> {
    let NestedIntervals { outer, middle, inner } = nest;
    if inner.is_empty() || !inner.is_bounded() {
        return argument("inner interval must be bounded and non-empty");
    }
    if !inner.closure_within(&middle) || !middle.closure_within(&outer) || !outer.is_bounded() {
        return argument(format!(
            "intervals must be strictly nested with bounded closures: {outer} ⊃ {middle} ⊃ {inner}"
        ));
    }
    let dom = spec.coeffs.smooth_domain();
    let outer_ok = dom.space.iter().any(|s| outer.closure_within(s))
        && dom.time.0 <= 0.0
        && spec.horizon <= dom.time.1;
    if !outer_ok {
        return argument(format!("closure of {outer} must lie inside the smoothness domain"));
    }

    let times: Vec<f64> = if spec.coeffs.is_autonomous() {
        vec![0.0]
    } else {
        (0..=32).map(|k| spec.horizon * k as f64 / 32.0).collect()
    };
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &t in &times {
        for k in 0..=SIGN_SCAN {
            let x = outer.lo + outer.width() * k as f64 / SIGN_SCAN as f64;
            let b = spec.diffusion(t, x);
            lo = lo.min(b);
            hi = hi.max(b);
        }
    }
    let sign = if lo > 0.0 {
        1.0
    } else if hi < 0.0 {
        -1.0
    } else {
        return Err(LabError::Precondition(format!(
            "diffusion vanishes or changes sign on the closure of {outer}"
        )));
    };

    let field = LocalizedField {
        original: spec.coeffs.clone(),
        nest,
        sign,
        domain: SmoothDomain {
            time: dom.time,
            space: vec![Interval::REAL_LINE],
        },
    };
    let mut out = SdeSpec::new(
        format!("localized[{}]", spec.name),
        Arc::new(field),
        spec.horizon,
        spec.initial,
    )?
    .with_family(Family::Localized)
    .with_reference(ReferenceKind::StrongTaylor);
    out.exact_solution = None;
    Ok(out)
}
