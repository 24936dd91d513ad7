//! One-step schemes on equidistant grids.
//!
//! Every scheme reads the Brownian path through a [`BrownianSource`], so
//! several schemes (and reference solutions) can be driven by the same
//! [`PathState`] and see bit-identical increments. `W(0) = 0` is never
//! requested, so a scheme with `k` steps costs exactly `k` evaluations.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{argument, LabError, Result};
use crate::model::{lie_gap_unchecked, Coefficient, Family, SdeSpec};
use crate::oracle::{BrownianSource, PathState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeId {
    Euler,
    Milstein,
    WagnerPlatenTruncated,
    TamedEuler,
    TamedMilstein,
    DriftImplicitSqrt,
}

impl SchemeId {
    pub const ALL: [SchemeId; 6] = [
        SchemeId::Euler,
        SchemeId::Milstein,
        SchemeId::WagnerPlatenTruncated,
        SchemeId::TamedEuler,
        SchemeId::TamedMilstein,
        SchemeId::DriftImplicitSqrt,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SchemeId::Euler => "euler",
            SchemeId::Milstein => "milstein",
            SchemeId::WagnerPlatenTruncated => "wagner_platen_truncated",
            SchemeId::TamedEuler => "tamed_euler",
            SchemeId::TamedMilstein => "tamed_milstein",
            SchemeId::DriftImplicitSqrt => "drift_implicit_sqrt",
        }
    }

    /// Whether the scheme has a continuous-time interpolant.
    pub fn has_continuous_form(self) -> bool {
        matches!(
            self,
            SchemeId::Euler | SchemeId::Milstein | SchemeId::TamedEuler | SchemeId::TamedMilstein
        )
    }

    /// Whether the scheme can run on `spec` at all.
    pub fn applicable(self, spec: &SdeSpec) -> Result<()> {
        match self {
            SchemeId::Euler | SchemeId::TamedEuler => Ok(()),
            SchemeId::Milstein | SchemeId::TamedMilstein => spec.require(Coefficient::Diffusion, 0, 1),
            SchemeId::WagnerPlatenTruncated => {
                spec.require(Coefficient::Drift, 1, 2)?;
                spec.require(Coefficient::Diffusion, 1, 2)
            }
            SchemeId::DriftImplicitSqrt => implicit_sqrt_params(spec).map(|_| ()),
        }
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeId {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        SchemeId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| LabError::Argument(format!("unknown scheme `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub scheme_id: SchemeId,
    pub k: usize,
    #[serde(default)]
    pub continuous_time: bool,
}

impl SchemeConfig {
    pub fn new(scheme_id: SchemeId, k: usize) -> Self {
        Self {
            scheme_id,
            k,
            continuous_time: false,
        }
    }

    pub fn continuous(mut self) -> Self {
        self.continuous_time = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return argument("a scheme needs at least one step");
        }
        if self.continuous_time && !self.scheme_id.has_continuous_form() {
            return argument(format!("{} has no continuous-time form", self.scheme_id));
        }
        Ok(())
    }
}

/// `t_ℓ = T·(ℓ/k)`. Written so that `grid_time(m·ℓ, m·k, T)` and
/// `grid_time(ℓ, k, T)` are bitwise equal: nested grids share their knots.
#[inline]
pub fn grid_time(l: usize, k: usize, horizon: f64) -> f64 {
    horizon * (l as f64 / k as f64)
}

/// Coefficients of the continuous-time interpolant on one span:
/// `X(t) = X(t_ℓ) + drift·s + diffusion·ΔW(t) + correction·(ΔW(t)² − s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpanForm {
    pub drift: f64,
    pub diffusion: f64,
    pub correction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Interpolation {
    Linear,
    Continuous(Vec<SpanForm>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryOutput {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// `W(t_ℓ)` as seen by the scheme.
    pub brownian: Vec<f64>,
    pub interpolation: Interpolation,
}

impl TrajectoryOutput {
    pub fn endpoint(&self) -> f64 {
        *self.values.last().expect("trajectories are never empty")
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("trajectories are never empty")
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self.interpolation, Interpolation::Continuous(_))
    }

    fn locate(&self, t: f64) -> Result<usize> {
        if !(t >= 0.0 && t <= self.horizon()) {
            return argument(format!("{t} lies outside [0, {}]", self.horizon()));
        }
        Ok(self.times.partition_point(|&s| s <= t) - 1)
    }

    /// Piecewise-linear interpolant of the grid values.
    pub fn evaluate_linear(&self, t: f64) -> Result<f64> {
        let l = self.locate(t)?;
        if self.times[l] == t {
            return Ok(self.values[l]);
        }
        let (t0, t1) = (self.times[l], self.times[l + 1]);
        let lambda = (t - t0) / (t1 - t0);
        Ok(self.values[l] + lambda * (self.values[l + 1] - self.values[l]))
    }

    /// Value of the trajectory at `t ∈ [0, T]`. Grid values are returned as
    /// stored; continuous forms read `W(t)` from `source` off the grid.
    pub fn evaluate<S: BrownianSource + ?Sized>(&self, t: f64, source: &mut S) -> Result<f64> {
        match &self.interpolation {
            Interpolation::Linear => self.evaluate_linear(t),
            Interpolation::Continuous(forms) => {
                let l = self.locate(t)?;
                if self.times[l] == t {
                    return Ok(self.values[l]);
                }
                let f = forms[l];
                let s = t - self.times[l];
                let dw = source.value(t)? - self.brownian[l];
                Ok(self.values[l] + f.drift * s + f.diffusion * dw + f.correction * (dw * dw - s))
            }
        }
    }

    /// Same grid values with the piecewise-linear evaluator.
    pub fn interpolate_linear(mut self) -> Self {
        self.interpolation = Interpolation::Linear;
        self
    }

    /// `t,value` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,value")?;
        for (t, x) in self.times.iter().zip(&self.values) {
            writeln!(out, "{t},{x}")?;
        }
        Ok(())
    }
}

/// Result of one step: new state and the span's interpolation data.
type Step = (f64, SpanForm);

fn drive<S, F>(spec: &SdeSpec, x0: f64, k: usize, source: &mut S, continuous: bool, mut step: F) -> Result<TrajectoryOutput>
where
    S: BrownianSource + ?Sized,
    F: FnMut(f64, f64, f64, f64) -> Result<Step>,
{
    if k == 0 {
        return argument("a scheme needs at least one step");
    }
    let horizon = spec.horizon;
    let mut times = Vec::with_capacity(k + 1);
    let mut values = Vec::with_capacity(k + 1);
    let mut brownian = Vec::with_capacity(k + 1);
    let mut forms = Vec::with_capacity(if continuous { k } else { 0 });
    let (mut t, mut x, mut w) = (0.0, x0, 0.0);
    times.push(t);
    values.push(x);
    brownian.push(w);
    for l in 1..=k {
        let t_next = grid_time(l, k, horizon);
        let w_next = source.value(t_next)?;
        let (x_next, form) = step(t, x, t_next - t, w_next - w)?;
        if continuous {
            forms.push(form);
        }
        t = t_next;
        x = x_next;
        w = w_next;
        times.push(t);
        values.push(x);
        brownian.push(w);
    }
    let interpolation = if continuous {
        Interpolation::Continuous(forms)
    } else {
        Interpolation::Linear
    };
    Ok(TrajectoryOutput {
        times,
        values,
        brownian,
        interpolation,
    })
}

#[inline]
fn euler_update(x: f64, a: f64, b: f64, h: f64, dw: f64) -> f64 {
    x + a * h + b * dw
}

#[inline]
fn milstein_update(x: f64, a: f64, b: f64, c: f64, h: f64, dw: f64) -> f64 {
    euler_update(x, a, b, h, dw) + c * (dw * dw - h)
}

/// `a·h/(1 + h|a|)` expressed as a rate.
#[inline]
fn tamed(a: f64, h: f64) -> f64 {
    a / (1.0 + h * a.abs())
}

pub fn run_euler<S: BrownianSource + ?Sized>(spec: &SdeSpec, x0: f64, k: usize, source: &mut S, continuous: bool) -> Result<TrajectoryOutput> {
    drive(spec, x0, k, source, continuous, |t, x, h, dw| {
        let (a, b) = (spec.drift(t, x), spec.diffusion(t, x));
        Ok((
            euler_update(x, a, b, h, dw),
            SpanForm {
                drift: a,
                diffusion: b,
                correction: 0.0,
            },
        ))
    })
}

pub fn run_milstein<S: BrownianSource + ?Sized>(spec: &SdeSpec, x0: f64, k: usize, source: &mut S, continuous: bool) -> Result<TrajectoryOutput> {
    spec.require(Coefficient::Diffusion, 0, 1)?;
    drive(spec, x0, k, source, continuous, |t, x, h, dw| {
        let (a, b) = (spec.drift(t, x), spec.diffusion(t, x));
        let c = 0.5 * b * spec.partial(Coefficient::Diffusion, 0, 1, t, x)?;
        Ok((
            milstein_update(x, a, b, c, h, dw),
            SpanForm {
                drift: a,
                diffusion: b,
                correction: c,
            },
        ))
    })
}

/// Derivatives entering the truncated Wagner–Platen step at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaylorCoefficients {
    pub a: f64,
    pub b: f64,
    pub a10: f64,
    pub a01: f64,
    pub a02: f64,
    pub b10: f64,
    pub b01: f64,
    pub b02: f64,
}

impl TaylorCoefficients {
    pub fn at(spec: &SdeSpec, t: f64, x: f64) -> Result<Self> {
        use Coefficient::*;
        Ok(Self {
            a: spec.drift(t, x),
            b: spec.diffusion(t, x),
            a10: spec.partial(Drift, 1, 0, t, x)?,
            a01: spec.partial(Drift, 0, 1, t, x)?,
            a02: spec.partial(Drift, 0, 2, t, x)?,
            b10: spec.partial(Diffusion, 1, 0, t, x)?,
            b01: spec.partial(Diffusion, 0, 1, t, x)?,
            b02: spec.partial(Diffusion, 0, 2, t, x)?,
        })
    }

    /// Coefficient of `ΔW·h`.
    pub fn mixed(&self) -> f64 {
        self.b10 + self.a * self.b01 - 0.5 * self.b * self.b01 * self.b01
    }

    /// Coefficient of `ΔW³`.
    pub fn cubic(&self) -> f64 {
        (self.b * self.b01 * self.b01 + self.b * self.b * self.b02) / 6.0
    }

    /// Coefficient of `h²`.
    pub fn quadratic(&self) -> f64 {
        0.5 * (self.a10 + self.a * self.a01 + 0.5 * self.b * self.b * self.a02)
    }

    /// Truncated Wagner–Platen step: the Milstein step plus the three
    /// terms in `ΔW·h`, `ΔW³` and `h²`.
    pub fn wagner_platen_step(&self, x: f64, h: f64, dw: f64) -> f64 {
        let c = 0.5 * self.b * self.b01;
        milstein_update(x, self.a, self.b, c, h, dw)
            + self.mixed() * dw * h
            + self.cubic() * dw * dw * dw
            + self.quadratic() * h * h
    }
}

fn require_wagner_platen(spec: &SdeSpec) -> Result<()> {
    SchemeId::WagnerPlatenTruncated.applicable(spec)
}

pub fn run_wagner_platen_truncated<S: BrownianSource + ?Sized>(spec: &SdeSpec, x0: f64, k: usize, source: &mut S) -> Result<TrajectoryOutput> {
    require_wagner_platen(spec)?;
    drive(spec, x0, k, source, false, |t, x, h, dw| {
        let c = TaylorCoefficients::at(spec, t, x)?;
        Ok((c.wagner_platen_step(x, h, dw), SpanForm { drift: 0.0, diffusion: 0.0, correction: 0.0 }))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TamedVariant {
    Euler,
    Milstein,
}

/// Drift-tamed schemes: the drift increment `a·h` becomes `a·h/(1 + h|a|)`.
pub fn run_tamed<S: BrownianSource + ?Sized>(
    spec: &SdeSpec,
    x0: f64,
    k: usize,
    source: &mut S,
    variant: TamedVariant,
    continuous: bool,
) -> Result<TrajectoryOutput> {
    if variant == TamedVariant::Milstein {
        spec.require(Coefficient::Diffusion, 0, 1)?;
    }
    drive(spec, x0, k, source, continuous, |t, x, h, dw| {
        let a = tamed(spec.drift(t, x), h);
        let b = spec.diffusion(t, x);
        let c = match variant {
            TamedVariant::Euler => 0.0,
            TamedVariant::Milstein => 0.5 * b * spec.partial(Coefficient::Diffusion, 0, 1, t, x)?,
        };
        let x_next = match variant {
            TamedVariant::Euler => euler_update(x, a, b, h, dw),
            TamedVariant::Milstein => milstein_update(x, a, b, c, h, dw),
        };
        Ok((
            x_next,
            SpanForm {
                drift: a,
                diffusion: b,
                correction: c,
            },
        ))
    })
}

/// `(δ, β, σ)` of a CIR model for which the implicit square-root scheme is
/// well defined, i.e. `4δ > σ²`.
pub fn implicit_sqrt_params(spec: &SdeSpec) -> Result<(f64, f64, f64)> {
    match spec.family {
        Family::Cir { delta, beta, sigma } if 4.0 * delta > sigma * sigma => Ok((delta, beta, sigma)),
        Family::Cir { delta, sigma, .. } => Err(LabError::Precondition(format!(
            "the implicit square-root scheme needs 4δ > σ², got δ = {delta}, σ = {sigma}"
        ))),
        _ => Err(LabError::Precondition(format!(
            "the implicit square-root scheme applies to CIR models only, not `{}`",
            spec.name
        ))),
    }
}

/// One step of the drift-implicit scheme for `Y = √X`:
/// `Y' = Y + ((δ − σ²/4)/(2Y') − βY'/2)·h + σΔW/2`, solved for its positive root.
#[inline]
pub fn implicit_sqrt_step(y: f64, delta: f64, beta: f64, sigma: f64, h: f64, dw: f64) -> f64 {
    let a = 1.0 + 0.5 * beta * h;
    let b = y + 0.5 * sigma * dw;
    let c = (delta - 0.25 * sigma * sigma) * h;
    (b + (b * b + 2.0 * a * c).sqrt()) / (2.0 * a)
}

pub fn run_drift_implicit_sqrt<S: BrownianSource + ?Sized>(spec: &SdeSpec, x0: f64, k: usize, source: &mut S) -> Result<TrajectoryOutput> {
    let (delta, beta, sigma) = implicit_sqrt_params(spec)?;
    if !(x0 >= 0.0) {
        return Err(LabError::Precondition(format!("CIR needs x0 ≥ 0, got {x0}")));
    }
    let mut y = x0.sqrt();
    drive(spec, x0, k, source, false, |_, _, h, dw| {
        y = implicit_sqrt_step(y, delta, beta, sigma, h, dw);
        Ok((y * y, SpanForm { drift: 0.0, diffusion: 0.0, correction: 0.0 }))
    })
}

/// Order-3/2 strong Taylor scheme: the truncated Wagner–Platen step plus
/// `𝒢·∫(W − W(t_ℓ)) dt`. Uses the oracle's span integrals, so it needs a
/// [`PathState`]; it is a reference device, not a member of the method class.
pub fn run_strong_taylor(spec: &SdeSpec, x0: f64, k: usize, path: &mut PathState) -> Result<TrajectoryOutput> {
    require_wagner_platen(spec)?;
    if k == 0 {
        return argument("a scheme needs at least one step");
    }
    let mut times = vec![0.0];
    let mut values = vec![x0];
    let mut brownian = vec![0.0];
    let (mut t, mut x, mut w) = (0.0, x0, 0.0);
    for l in 1..=k {
        let t_next = grid_time(l, k, spec.horizon);
        let w_next = path.evaluate(t_next)?;
        let c = TaylorCoefficients::at(spec, t, x)?;
        let area = path.increment_integral(t, t_next)?;
        x = c.wagner_platen_step(x, t_next - t, w_next - w) + lie_gap_unchecked(spec, t, x) * area;
        t = t_next;
        w = w_next;
        times.push(t);
        values.push(x);
        brownian.push(w);
    }
    Ok(TrajectoryOutput {
        times,
        values,
        brownian,
        interpolation: Interpolation::Linear,
    })
}

pub fn run_scheme<S: BrownianSource + ?Sized>(spec: &SdeSpec, x0: f64, config: SchemeConfig, source: &mut S) -> Result<TrajectoryOutput> {
    config.validate()?;
    let SchemeConfig {
        scheme_id,
        k,
        continuous_time,
    } = config;
    match scheme_id {
        SchemeId::Euler => run_euler(spec, x0, k, source, continuous_time),
        SchemeId::Milstein => run_milstein(spec, x0, k, source, continuous_time),
        SchemeId::WagnerPlatenTruncated => run_wagner_platen_truncated(spec, x0, k, source),
        SchemeId::TamedEuler => run_tamed(spec, x0, k, source, TamedVariant::Euler, continuous_time),
        SchemeId::TamedMilstein => run_tamed(spec, x0, k, source, TamedVariant::Milstein, continuous_time),
        SchemeId::DriftImplicitSqrt => run_drift_implicit_sqrt(spec, x0, k, source),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{catalog, CatalogName, CatalogParams, InitialValue, Poly2, PolyField};
    use crate::rng::StreamKey;
    use std::sync::Arc;

    fn poly(drift: Poly2, diffusion: Poly2, horizon: f64) -> SdeSpec {
        SdeSpec::new("poly", Arc::new(PolyField::new(drift, diffusion)), horizon, InitialValue::fixed(0.0)).unwrap()
    }

    fn gbm(alpha: f64, beta: f64) -> SdeSpec {
        catalog(
            CatalogName::Gbm,
            &CatalogParams {
                alpha: Some(alpha),
                beta: Some(beta),
                ..Default::default()
            },
        )
        .unwrap()
    }

    fn cir(delta: f64, beta: f64, sigma: f64) -> SdeSpec {
        catalog(
            CatalogName::Cir,
            &CatalogParams {
                delta: Some(delta),
                beta: Some(beta),
                sigma: Some(sigma),
                ..Default::default()
            },
        )
        .unwrap()
    }

    /// A path whose single increment over `[0, T]` is `w`.
    fn fixed(w: f64, horizon: f64) -> PathState {
        PathState::from_knots(StreamKey::new(0, 0), &[(horizon, w)]).unwrap()
    }

    #[test]
    fn nested_grids_share_knots() {
        for k in [1, 3, 7, 16, 100] {
            for l in 0..=k {
                assert_eq!(grid_time(16 * l, 16 * k, 0.7).to_bits(), grid_time(l, k, 0.7).to_bits());
            }
            assert_eq!(grid_time(k, k, 0.7), 0.7);
        }
    }

    #[test]
    fn euler_trivial_cases() {
        let still = poly(Poly2::constant(0.0), Poly2::constant(0.0), 1.0);
        let mut p = PathState::from_seed(1, 0);
        let out = run_euler(&still, 0.3, 10, &mut p, true).unwrap();
        assert!(out.values.iter().all(|&v| v == 0.3));
        assert_eq!(out.evaluate(0.55, &mut p).unwrap(), 0.3);
        assert_eq!(p.cost(), 11);

        let ramp = poly(Poly2::constant(1.0), Poly2::constant(0.0), 2.0);
        let out = run_euler(&ramp, 0.0, 1, &mut PathState::from_seed(1, 0), false).unwrap();
        assert_eq!(out.endpoint(), 2.0);

        let g = gbm(0.0, 1.0);
        let out = run_euler(&g, 1.0, 1, &mut fixed(0.37, 1.0), false).unwrap();
        assert_eq!(out.endpoint(), 1.0 + 0.37);
    }

    #[test]
    fn milstein_single_step_and_euler_coincidence() {
        let f = poly(Poly2::constant(0.0), Poly2::monomial(1.0, 0, 1), 1.0);
        let w = -0.8;
        let out = run_milstein(&f, 1.0, 1, &mut fixed(w, 1.0), false).unwrap();
        assert!((out.endpoint() - (1.0 + w + 0.5 * (w * w - 1.0))).abs() < 1e-15);

        let additive = poly(Poly2::new(vec![(1.0, 0, 0), (-2.0, 0, 3)]), Poly2::constant(0.7), 1.0);
        let e = run_euler(&additive, 0.2, 64, &mut PathState::from_seed(4, 2), true).unwrap();
        let m = run_milstein(&additive, 0.2, 64, &mut PathState::from_seed(4, 2), true).unwrap();
        assert!(e.values.iter().zip(&m.values).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn milstein_continuous_form_matches_nodes() {
        let g = gbm(0.3, 0.8);
        let mut p = PathState::from_seed(5, 0);
        let out = run_milstein(&g, 1.0, 8, &mut p, true).unwrap();
        for l in 0..=8 {
            assert_eq!(out.evaluate(out.times[l], &mut p).unwrap(), out.values[l]);
        }
        // just below a node the continuous form approaches the node value
        let t = out.times[3] - 1e-12;
        assert!((out.evaluate(t, &mut p).unwrap() - out.values[3]).abs() < 1e-5);
        assert!(out.evaluate(1.5, &mut p).is_err());
    }

    #[test]
    fn wagner_platen_reductions() {
        let additive = poly(Poly2::constant(0.4), Poly2::constant(1.3), 1.0);
        let e = run_euler(&additive, 0.0, 32, &mut PathState::from_seed(6, 0), false).unwrap();
        let wp = run_wagner_platen_truncated(&additive, 0.0, 32, &mut PathState::from_seed(6, 0)).unwrap();
        assert!(e.values.iter().zip(&wp.values).all(|(a, b)| a.to_bits() == b.to_bits()));

        let linear = poly(Poly2::monomial(1.0, 0, 1), Poly2::constant(0.0), 1.0);
        let out = run_wagner_platen_truncated(&linear, 1.0, 1, &mut PathState::from_seed(6, 0)).unwrap();
        assert_eq!(out.endpoint(), 2.5);
    }

    #[test]
    fn wagner_platen_gbm_step_matches_expansion() {
        let (alpha, beta) = (0.7, 0.9);
        let g = gbm(alpha, beta);
        for &(w, h) in &[(0.3, 1.0), (-1.1, 0.5), (0.05, 0.01)] {
            let x = 1.7;
            // symbolic expansion of the six terms for a = αx, b = βx
            let expected = x
                + alpha * x * h
                + beta * x * w
                + 0.5 * beta * beta * x * (w * w - h)
                + (alpha * beta * x - 0.5 * beta.powi(3) * x) * w * h
                + beta.powi(3) * x / 6.0 * w.powi(3)
                + 0.5 * alpha * alpha * x * h * h;
            let c = TaylorCoefficients::at(&g, 0.0, x).unwrap();
            assert!((c.wagner_platen_step(x, h, w) - expected).abs() < 1e-13);
        }
    }

    #[test]
    fn scheme_capabilities() {
        let low = SdeSpec::new(
            "low",
            Arc::new(PolyField::new(Poly2::constant(1.0), Poly2::monomial(1.0, 0, 1)).with_max_order((0, 0))),
            1.0,
            InitialValue::fixed(1.0),
        )
        .unwrap();
        let mut p = PathState::from_seed(0, 0);
        assert!(run_euler(&low, 1.0, 4, &mut p, false).is_ok());
        assert!(matches!(run_milstein(&low, 1.0, 4, &mut p, false), Err(LabError::Capability { .. })));
        assert!(matches!(run_wagner_platen_truncated(&low, 1.0, 4, &mut p), Err(LabError::Capability { .. })));
        assert!(run_scheme(&low, 1.0, SchemeConfig::new(SchemeId::Euler, 0), &mut p).is_err());
        assert!(SchemeConfig::new(SchemeId::WagnerPlatenTruncated, 4).continuous().validate().is_err());
        assert_eq!("tamed_milstein".parse::<SchemeId>().unwrap(), SchemeId::TamedMilstein);
        assert!("rk4".parse::<SchemeId>().is_err());
    }

    #[test]
    fn taming_bound_for_bounded_coefficients() {
        let m: f64 = 2.0;
        for k in [16usize, 64, 256, 1024] {
            let h = 1.0 / k as f64;
            for i in 0..=40 {
                let a = -m + 2.0 * m * i as f64 / 40.0;
                let diff = (a * h - tamed(a, h) * h).abs();
                assert!(diff <= m * m / k as f64 * h + 1e-18);
            }
        }
    }

    #[test]
    fn tamed_matches_untamed_for_zero_drift() {
        let f = poly(Poly2::constant(0.0), Poly2::monomial(0.5, 0, 1), 1.0);
        let a = run_tamed(&f, 1.0, 32, &mut PathState::from_seed(8, 0), TamedVariant::Milstein, false).unwrap();
        let b = run_milstein(&f, 1.0, 32, &mut PathState::from_seed(8, 0), false).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn implicit_sqrt_deterministic_limit() {
        // with σ = 0: Y' = Y + δh/(2Y'), so Y' = (1 + √(1 + 2δh))/2 from Y = 1
        let y = implicit_sqrt_step(1.0, 1.0, 0.0, 0.0, 0.5, 0.0);
        let expected = (1.0 + 2f64.sqrt()) / 2.0;
        assert!((y - expected).abs() < 1e-15);
        assert!((y * y - (3.0 + 2.0 * 2f64.sqrt()) / 4.0).abs() < 1e-15);
    }

    #[test]
    fn implicit_sqrt_validity_and_positivity() {
        let bad = cir(0.5, 0.0, 2.0);
        let mut p = PathState::from_seed(0, 0);
        assert!(matches!(run_drift_implicit_sqrt(&bad, 1.0, 4, &mut p), Err(LabError::Precondition(_))));
        assert!(run_drift_implicit_sqrt(&gbm(0.1, 0.2), 1.0, 4, &mut p).is_err());
        let good = cir(5.0, 1.0, 2.0);
        for r in 0..10_000 {
            let mut p = PathState::from_seed(9, r);
            let out = run_drift_implicit_sqrt(&good, 1.0, 32, &mut p).unwrap();
            assert!(out.values.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn linear_interpolation() {
        let g = gbm(0.3, 0.8);
        let mut p = PathState::from_seed(10, 0);
        let out = run_euler(&g, 1.0, 4, &mut p, true).unwrap().interpolate_linear();
        for l in 0..=4 {
            assert_eq!(out.evaluate_linear(out.times[l]).unwrap(), out.values[l]);
        }
        let mid = out.evaluate_linear(0.375).unwrap();
        assert!((mid - 0.5 * (out.values[1] + out.values[2])).abs() < 1e-15);
        let mut csv = Vec::new();
        out.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 6);
    }

    #[test]
    fn linear_and_continuous_euler_converge() {
        let g = gbm(0.3, 0.8);
        let fine = 4096;
        let mut dist = Vec::new();
        for k in [16usize, 256] {
            let mut total = 0.0;
            for r in 0..50 {
                let mut p = PathState::from_seed(12, r);
                let cont = run_euler(&g, 1.0, k, &mut p, true).unwrap();
                let lin = cont.clone().interpolate_linear();
                let mut acc = 0.0;
                for j in 0..=fine {
                    let t = grid_time(j, fine, 1.0);
                    let d = (cont.evaluate(t, &mut p).unwrap() - lin.evaluate_linear(t).unwrap()).abs();
                    acc += if j == 0 || j == fine { 0.5 * d } else { d };
                }
                total += acc / fine as f64;
            }
            dist.push(total / 50.0);
        }
        assert!(dist[0] > 0.0 && dist[1] < dist[0] / 2.0, "{dist:?}");
    }

    #[test]
    fn strong_taylor_adds_bracket_times_area() {
        let q = catalog(CatalogName::Quintic, &CatalogParams::default()).unwrap();
        let mut p = PathState::from_seed(13, 0);
        let st = run_strong_taylor(&q, 1.0, 4, &mut p).unwrap();
        let mut x = 1.0;
        for l in 0..4 {
            let (t0, t1) = (st.times[l], st.times[l + 1]);
            let c = TaylorCoefficients::at(&q, t0, x).unwrap();
            let dw = st.brownian[l + 1] - st.brownian[l];
            x = c.wagner_platen_step(x, t1 - t0, dw) + (-4.0 * x.powi(5)) * p.increment_integral(t0, t1).unwrap();
            assert!((x - st.values[l + 1]).abs() < 1e-12);
        }
    }
}
