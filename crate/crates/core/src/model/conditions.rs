//! Grid-based checks of the hypotheses of the lower-bound theorems.

use serde::{Deserialize, Serialize};

use super::{lie_gap_unchecked, Coefficient, Interval, SdeSpec};
use crate::error::{argument, Result};

/// Values below this modulus count as vanishing.
pub const NONVANISHING_THRESHOLD: f64 = 1e-12;

pub const DEFAULT_GRID_SIZE: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TheoremId {
    /// Error at the final time; needs the bracket 𝒢 to be nonzero.
    Pointwise,
    /// Supremum norm.
    Sup,
    /// `L_p` norms and the maximum pointwise error.
    Lp,
}

impl TheoremId {
    pub const ALL: [TheoremId; 3] = [TheoremId::Pointwise, TheoremId::Sup, TheoremId::Lp];

    /// Derivative orders `(time, space)` the local theorem requires on `[t0,T] × I`.
    pub fn required_order(self) -> (usize, usize) {
        match self {
            TheoremId::Sup => (1, 1),
            TheoremId::Lp => (1, 2),
            TheoremId::Pointwise => (2, 3),
        }
    }

    pub fn needs_lie_gap(self) -> bool {
        self == TheoremId::Pointwise
    }
}

impl std::fmt::Display for TheoremId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            TheoremId::Pointwise => "pointwise",
            TheoremId::Sup => "sup",
            TheoremId::Lp => "lp",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Satisfied,
    Violated,
    Undeclared,
}

/// Flag plus the grid minimum that decided it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub holds: bool,
    pub grid_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub equation: String,
    pub theorem_id: TheoremId,
    pub interval_lo: f64,
    pub interval_hi: f64,
    pub t0: f64,
    pub grid_size: usize,
    pub b_nonvanishing: bool,
    pub b_min_abs: f64,
    /// `None` when the bracket could not be evaluated on the interval.
    pub lie_gap_nonvanishing: Option<bool>,
    pub lie_gap_min_abs: Option<f64>,
    pub smoothness_declared: bool,
    pub verdict: Verdict,
}

impl ConditionReport {
    /// Flat JSON object.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report is plain data")
    }

    pub fn b_witness(&self) -> Witness {
        Witness {
            holds: self.b_nonvanishing,
            grid_min: self.b_min_abs,
        }
    }
}

fn interior_grid(interval: &Interval, n: usize) -> impl Iterator<Item = f64> + '_ {
    let w = interval.width();
    (0..n).map(move |i| interval.lo + (i as f64 + 0.5) * w / n as f64)
}

pub fn check_conditions(
    spec: &SdeSpec,
    theorem_id: TheoremId,
    interval: Interval,
    t0: f64,
    grid_size: usize,
) -> Result<ConditionReport> {
    if interval.is_empty() {
        return argument(format!("empty interval {interval}"));
    }
    if !interval.is_bounded() {
        return argument("condition checks need a bounded interval");
    }
    if grid_size == 0 {
        return argument("grid_size must be positive");
    }
    if !(0.0..spec.horizon).contains(&t0) {
        return argument(format!("t0 = {t0} must lie in [0, {})", spec.horizon));
    }

    let times: Vec<f64> = if spec.coeffs.is_autonomous() {
        vec![t0]
    } else {
        let m = grid_size.clamp(2, 32);
        (0..m)
            .map(|k| t0 + (spec.horizon - t0) * k as f64 / (m - 1) as f64)
            .collect()
    };

    let mut b_min = f64::INFINITY;
    for &t in &times {
        for x in interior_grid(&interval, grid_size) {
            b_min = b_min.min(spec.diffusion(t, x).abs());
        }
    }
    let b_nonvanishing = b_min > NONVANISHING_THRESHOLD;

    let (ri, rj) = theorem_id.required_order();
    let orders_ok = [Coefficient::Drift, Coefficient::Diffusion].iter().all(|&c| {
        let (mi, mj) = spec.coeffs.max_order(c);
        ri <= mi && rj <= mj
    });
    let domain_ok = spec
        .coeffs
        .smooth_domain()
        .covers(t0, spec.horizon, &interval);
    let smoothness_declared = orders_ok && domain_ok;

    let gap_orders = spec.provides(1, 2);
    let (lie_gap_nonvanishing, lie_gap_min_abs) = if gap_orders {
        let dom = spec.coeffs.smooth_domain();
        let mut min = f64::INFINITY;
        let mut seen = 0usize;
        for x in interior_grid(&interval, grid_size) {
            if dom.contains(t0, x) {
                seen += 1;
                min = min.min(lie_gap_unchecked(spec, t0, x).abs());
            }
        }
        if seen == 0 {
            (None, None)
        } else {
            (Some(min > NONVANISHING_THRESHOLD && seen == grid_size), Some(min))
        }
    } else {
        (None, None)
    };

    let numeric_violation =
        !b_nonvanishing || (theorem_id.needs_lie_gap() && lie_gap_nonvanishing == Some(false));
    let verdict = if numeric_violation {
        Verdict::Violated
    } else if !smoothness_declared
        || (theorem_id.needs_lie_gap() && lie_gap_nonvanishing.is_none())
    {
        Verdict::Undeclared
    } else {
        Verdict::Satisfied
    };

    Ok(ConditionReport {
        equation: spec.name.clone(),
        theorem_id,
        interval_lo: interval.lo,
        interval_hi: interval.hi,
        t0,
        grid_size,
        b_nonvanishing,
        b_min_abs: b_min,
        lie_gap_nonvanishing,
        lie_gap_min_abs,
        smoothness_declared,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{catalog, CatalogName, CatalogParams, InitialValue, Poly2, PolyField};
    use std::sync::Arc;

    fn cir(delta: f64, beta: f64) -> SdeSpec {
        catalog(
            CatalogName::Cir,
            &CatalogParams {
                delta: Some(delta),
                beta: Some(beta),
                ..Default::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn squared_bessel_fails_pointwise_only() {
        let s = cir(1.0, 0.0);
        let i = Interval::new(0.5, 2.0);
        let r = check_conditions(&s, TheoremId::Pointwise, i, 0.0, DEFAULT_GRID_SIZE).unwrap();
        assert_eq!(r.verdict, Verdict::Violated);
        assert_eq!(r.lie_gap_nonvanishing, Some(false));
        for th in [TheoremId::Sup, TheoremId::Lp] {
            let r = check_conditions(&s, th, i, 0.0, DEFAULT_GRID_SIZE).unwrap();
            assert_eq!(r.verdict, Verdict::Satisfied);
        }
    }

    #[test]
    fn cir_pointwise_iff_delta_ne_one_or_beta_ne_zero() {
        for delta in [0.5, 1.0, 2.0, 5.0] {
            for beta in [0.0, 1.0] {
                let r = check_conditions(
                    &cir(delta, beta),
                    TheoremId::Pointwise,
                    Interval::new(0.5, 2.0),
                    0.0,
                    DEFAULT_GRID_SIZE,
                )
                .unwrap();
                let expected = delta != 1.0 || beta != 0.0;
                assert_eq!(r.verdict == Verdict::Satisfied, expected, "delta={delta} beta={beta}");
            }
        }
    }

    #[test]
    fn quintic_satisfies_all() {
        let q = catalog(CatalogName::Quintic, &CatalogParams::default()).unwrap();
        for th in TheoremId::ALL {
            let r = check_conditions(&q, th, Interval::new(0.5, 1.5), 0.0, 256).unwrap();
            assert_eq!(r.verdict, Verdict::Satisfied, "{th}");
            assert!(r.smoothness_declared);
        }
    }

    #[test]
    fn vanishing_diffusion_violates_sup() {
        let f = PolyField::new(Poly2::constant(1.0), Poly2::constant(0.0));
        let spec = SdeSpec::new("b0", Arc::new(f), 1.0, InitialValue::fixed(0.0)).unwrap();
        let r = check_conditions(&spec, TheoremId::Sup, Interval::new(0.0, 1.0), 0.0, 64).unwrap();
        assert_eq!(r.verdict, Verdict::Violated);
        assert!(!r.b_nonvanishing);
        assert_eq!(r.b_min_abs, 0.0);
    }

    #[test]
    fn interval_crossing_singularity_is_undeclared() {
        let s = catalog(CatalogName::SgnDrift, &CatalogParams::default()).unwrap();
        let r = check_conditions(&s, TheoremId::Sup, Interval::new(-1.0, 1.0), 0.0, 64).unwrap();
        assert!(!r.smoothness_declared);
        assert_eq!(r.verdict, Verdict::Undeclared);
    }

    #[test]
    fn argument_errors() {
        let q = catalog(CatalogName::Quintic, &CatalogParams::default()).unwrap();
        assert!(check_conditions(&q, TheoremId::Sup, Interval::new(1.0, 1.0), 0.0, 8).is_err());
        assert!(check_conditions(&q, TheoremId::Sup, Interval::new(0.0, 1.0), 1.0, 8).is_err());
        assert!(check_conditions(&q, TheoremId::Sup, Interval::REAL_LINE, 0.0, 8).is_err());
    }

    #[test]
    fn report_serializes_flat() {
        let q = catalog(CatalogName::Quintic, &CatalogParams::default()).unwrap();
        let r = check_conditions(&q, TheoremId::Pointwise, Interval::new(0.5, 1.5), 0.0, 16).unwrap();
        let v = r.to_json();
        let obj = v.as_object().unwrap();
        assert!(obj.values().all(|v| !v.is_object() && !v.is_array()));
        assert_eq!(obj["verdict"], "satisfied");
        assert_eq!(obj["theorem_id"], "pointwise");
    }
}
