//! Scalar SDE models `dX = a(t,X) dt + b(t,X) dW`.
//!
//! A model is a [`CoefficientField`] (the coefficients together with their
//! partial derivatives `a^(i,j)`, `b^(i,j)`, where `i` counts time and `j`
//! space derivatives) plus a horizon, an initial value law and optionally a
//! closed-form solution map.

mod catalog;
mod conditions;
pub(crate) mod jet;
mod localize;
mod poly;

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::schemes::SchemeId;

pub use catalog::{catalog, CatalogName, CatalogParams};
pub use conditions::{
    check_conditions, ConditionReport, TheoremId, Verdict, Witness, DEFAULT_GRID_SIZE,
    NONVANISHING_THRESHOLD,
};
pub use localize::{localize, LocalizedField, NestedIntervals};
pub use poly::{Poly2, PolyField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coefficient {
    Drift,
    Diffusion,
}

impl Coefficient {
    pub fn label(self) -> &'static str {
        match self {
            Coefficient::Drift => "drift",
            Coefficient::Diffusion => "diffusion",
        }
    }
}

/// Open interval `(lo, hi)`; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const REAL_LINE: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo < x && x < self.hi
    }

    pub fn is_empty(&self) -> bool {
        !(self.lo < self.hi)
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    /// Closure of `self` is contained in the open interval `outer`.
    pub fn closure_within(&self, outer: &Interval) -> bool {
        outer.lo < self.lo && self.hi < outer.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.lo, self.hi)
    }
}

/// Region on which the declared derivatives are valid: a closed time
/// interval times a union of open space intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothDomain {
    pub time: (f64, f64),
    pub space: Vec<Interval>,
}

impl SmoothDomain {
    pub fn everywhere() -> Self {
        Self {
            time: (f64::NEG_INFINITY, f64::INFINITY),
            space: vec![Interval::REAL_LINE],
        }
    }

    pub fn space(space: Vec<Interval>) -> Self {
        Self {
            time: (f64::NEG_INFINITY, f64::INFINITY),
            space,
        }
    }

    pub fn contains(&self, t: f64, x: f64) -> bool {
        self.time.0 <= t && t <= self.time.1 && self.space.iter().any(|i| i.contains(x))
    }

    /// Whether `[t0, t1] x I` lies inside the domain.
    pub fn covers(&self, t0: f64, t1: f64, interval: &Interval) -> bool {
        self.time.0 <= t0
            && t1 <= self.time.1
            && self
                .space
                .iter()
                .any(|s| s.lo <= interval.lo && interval.hi <= s.hi)
    }
}

/// Coefficients of a scalar SDE together with their partial derivatives.
///
/// `partial(which, i, j, t, x)` returns `∂_t^i ∂_x^j` of the drift or
/// diffusion coefficient at `(t, x)`, or `None` when that order is not
/// provided. Order `(0, 0)` must be available everywhere.
pub trait CoefficientField: Send + Sync + fmt::Debug {
    fn partial(&self, which: Coefficient, i: usize, j: usize, t: f64, x: f64) -> Option<f64>;

    /// Largest `(i, j)` such that all orders `(i', j') <= (i, j)` are provided.
    fn max_order(&self, which: Coefficient) -> (usize, usize);

    fn smooth_domain(&self) -> &SmoothDomain;

    fn is_autonomous(&self) -> bool;
}

/// Law of `X(0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialValue {
    Fixed { value: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl InitialValue {
    pub fn fixed(value: f64) -> Self {
        InitialValue::Fixed { value }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            InitialValue::Fixed { value } => value,
            InitialValue::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
        }
    }

    pub fn fixed_value(&self) -> Option<f64> {
        match *self {
            InitialValue::Fixed { value } => Some(value),
            InitialValue::Uniform { .. } => None,
        }
    }
}

/// Closed-form solution `(x0, t, W(t)) -> X(t)`.
#[derive(Clone)]
pub struct ExactSolution(Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>);

impl ExactSolution {
    pub fn new(f: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self(Arc::new(f))
    }

    pub fn eval(&self, x0: f64, t: f64, w: f64) -> f64 {
        (self.0)(x0, t, w)
    }
}

impl fmt::Debug for ExactSolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ExactSolution(..)")
    }
}

/// How reference solutions are produced for a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    /// Use the closed-form solution.
    Exact,
    /// Run the given scheme on a refinement of the path.
    Scheme(SchemeId),
    /// Order-3/2 strong Taylor scheme using the oracle's span integrals.
    StrongTaylor,
    /// Nothing designated.
    None,
}

/// Which equation family a model belongs to; drives scheme applicability
/// and reference designation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Cir { delta: f64, beta: f64, sigma: f64 },
    Quintic,
    SgnDrift,
    SgnDriftPlain,
    Gbm { alpha: f64, beta: f64 },
    Localized,
    Custom,
}

#[derive(Debug, Clone)]
pub struct SdeSpec {
    pub name: String,
    pub coeffs: Arc<dyn CoefficientField>,
    pub horizon: f64,
    pub initial: InitialValue,
    pub exact_solution: Option<ExactSolution>,
    pub family: Family,
    pub reference: ReferenceKind,
}

impl SdeSpec {
    pub fn new(
        name: impl Into<String>,
        coeffs: Arc<dyn CoefficientField>,
        horizon: f64,
        initial: InitialValue,
    ) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(LabError::Argument(format!("horizon must be positive, got {horizon}")));
        }
        Ok(Self {
            name: name.into(),
            coeffs,
            horizon,
            initial,
            exact_solution: None,
            family: Family::Custom,
            reference: ReferenceKind::None,
        })
    }

    pub fn with_exact_solution(mut self, exact: ExactSolution) -> Self {
        self.exact_solution = Some(exact);
        self.reference = ReferenceKind::Exact;
        self
    }

    pub fn with_reference(mut self, reference: ReferenceKind) -> Self {
        self.reference = reference;
        self
    }

    pub fn with_family(mut self, family: Family) -> Self {
        self.family = family;
        self
    }

    pub fn with_initial(mut self, initial: InitialValue) -> Self {
        self.initial = initial;
        self
    }

    #[inline]
    pub fn drift(&self, t: f64, x: f64) -> f64 {
        self.coeffs
            .partial(Coefficient::Drift, 0, 0, t, x)
            .expect("coefficient values are always available")
    }

    #[inline]
    pub fn diffusion(&self, t: f64, x: f64) -> f64 {
        self.coeffs
            .partial(Coefficient::Diffusion, 0, 0, t, x)
            .expect("coefficient values are always available")
    }

    /// Partial derivative, failing with a capability error if the order is
    /// not provided. No domain check.
    #[inline]
    pub fn partial(&self, which: Coefficient, i: usize, j: usize, t: f64, x: f64) -> Result<f64> {
        self.coeffs
            .partial(which, i, j, t, x)
            .ok_or(LabError::Capability {
                which: which.label(),
                i,
                j,
            })
    }

    /// Whether all orders `(i', j') <= (i, j)` of both coefficients exist.
    pub fn provides(&self, i: usize, j: usize) -> bool {
        [Coefficient::Drift, Coefficient::Diffusion].iter().all(|&c| {
            let (mi, mj) = self.coeffs.max_order(c);
            i <= mi && j <= mj
        })
    }

    pub fn require(&self, which: Coefficient, i: usize, j: usize) -> Result<()> {
        let (mi, mj) = self.coeffs.max_order(which);
        if i <= mi && j <= mj {
            Ok(())
        } else {
            Err(LabError::Capability {
                which: which.label(),
                i,
                j,
            })
        }
    }
}

/// The bracket `𝒢 = a^(0,1) b − b^(1,0) − a b^(0,1) − ½ b² b^(0,2)`.
///
/// For autonomous equations this is `a'b − ab' − ½b²b''`, the Lie bracket of
/// the Stratonovich drift with the diffusion.
pub fn lie_gap(spec: &SdeSpec, t: f64, x: f64) -> Result<f64> {
    spec.require(Coefficient::Drift, 0, 1)?;
    spec.require(Coefficient::Diffusion, 1, 0)?;
    spec.require(Coefficient::Diffusion, 0, 2)?;
    if !spec.coeffs.smooth_domain().contains(t, x) {
        return Err(LabError::Domain { t, x });
    }
    Ok(lie_gap_unchecked(spec, t, x))
}

/// [`lie_gap`] without capability or domain checks; callers guarantee both.
#[inline]
pub(crate) fn lie_gap_unchecked(spec: &SdeSpec, t: f64, x: f64) -> f64 {
    let f = &spec.coeffs;
    let get = |c, i, j| f.partial(c, i, j, t, x).unwrap_or(f64::NAN);
    let a = get(Coefficient::Drift, 0, 0);
    let a01 = get(Coefficient::Drift, 0, 1);
    let b = get(Coefficient::Diffusion, 0, 0);
    let b10 = get(Coefficient::Diffusion, 1, 0);
    let b01 = get(Coefficient::Diffusion, 0, 1);
    let b02 = get(Coefficient::Diffusion, 0, 2);
    a01 * b - b10 - a * b01 - 0.5 * b * b * b02
}
