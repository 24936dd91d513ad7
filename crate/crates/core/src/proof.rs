//! Weight processes and auxiliary schemes behind the lower error bounds,
//! as computable diagnostics.
//!
//! Everything here works on the unit horizon `T = 1`. A model on `[0, T]`
//! maps to one on `[0, 1]` by `X̃(s) = X(sT)`, which solves the equation with
//! coefficients `T·a(sT, x)` and `√T·b(sT, x)` driven by `W̃(s) = W(sT)/√T`.
//!
//! Quantities built from span integrals `∫(W − W(t_ℓ)) dt` use the oracle's
//! integral draws. They are oracle assisted: no method observes them and
//! they never add to any evaluation count.

use std::io::{self, Write};

use crate::error::{argument, Result};
use crate::model::{lie_gap_unchecked, Coefficient, SdeSpec};
use crate::oracle::{BrownianSource, PathState};
use crate::schemes::{run_milstein, run_wagner_platen_truncated, TrajectoryOutput};

fn unit_horizon(spec: &SdeSpec) -> Result<()> {
    if spec.horizon != 1.0 {
        return argument(format!(
            "proof diagnostics run on the unit horizon; rescale `{}` from T = {}",
            spec.name, spec.horizon
        ));
    }
    Ok(())
}

/// Discrete weights along a truncated Wagner–Platen trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightPath {
    /// `t_ℓ = ℓ/k`, `ℓ = 0..=k`.
    pub times: Vec<f64>,
    /// Wagner–Platen iterates `X̂(t_ℓ)`.
    pub scheme: Vec<f64>,
    /// `m̂_ℓ = 1 + a^(0,1)·h + b^(0,1)·ΔW_ℓ`, `ℓ = 0..k`.
    pub multipliers: Vec<f64>,
    /// `ℳ̂(t_ℓ) = m̂_ℓ ⋯ m̂_{k−1}`, `ℓ = 0..=k`, with `ℳ̂(t_k) = 1`.
    pub products: Vec<f64>,
    /// `𝒢(t_ℓ, X̂(t_ℓ))`, `ℓ = 0..k`.
    pub lie_gaps: Vec<f64>,
    /// `Ŷ(t_ℓ) = ℳ̂(t_{ℓ+1})·𝒢(t_ℓ, X̂(t_ℓ))`, `ℓ = 0..k`.
    pub weights: Vec<f64>,
    /// Brownian values at the grid.
    pub brownian: Vec<f64>,
}

impl WeightPath {
    pub fn steps(&self) -> usize {
        self.multipliers.len()
    }
}

pub fn build_weight_path(spec: &SdeSpec, x0: f64, path: &mut PathState, k: usize) -> Result<WeightPath> {
    unit_horizon(spec)?;
    let wp = run_wagner_platen_truncated(spec, x0, k, path)?;
    weights_along(spec, wp)
}

fn weights_along(spec: &SdeSpec, wp: TrajectoryOutput) -> Result<WeightPath> {
    let k = wp.steps();
    let mut multipliers = Vec::with_capacity(k);
    let mut lie_gaps = Vec::with_capacity(k);
    for l in 0..k {
        let (t, x) = (wp.times[l], wp.values[l]);
        let h = wp.times[l + 1] - t;
        let dw = wp.brownian[l + 1] - wp.brownian[l];
        let a01 = spec.partial(Coefficient::Drift, 0, 1, t, x)?;
        let b01 = spec.partial(Coefficient::Diffusion, 0, 1, t, x)?;
        multipliers.push(1.0 + a01 * h + b01 * dw);
        lie_gaps.push(lie_gap_unchecked(spec, t, x));
    }
    let mut products = vec![1.0; k + 1];
    for l in (0..k).rev() {
        products[l] = multipliers[l] * products[l + 1];
    }
    let weights = (0..k).map(|l| products[l + 1] * lie_gaps[l]).collect();
    Ok(WeightPath {
        times: wp.times,
        scheme: wp.values,
        multipliers,
        products,
        lie_gaps,
        weights,
        brownian: wp.brownian,
    })
}

/// Auxiliary scheme `X̄ = X̂ + Q̄` with
/// `Q̄(t_{ℓ+1}) = m̂_ℓ·Q̄(t_ℓ) + 𝒢(t_ℓ, X̂(t_ℓ))·∫_{t_ℓ}^{t_{ℓ+1}} (W − W(t_ℓ)) dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxState {
    pub weights: WeightPath,
    pub q: Vec<f64>,
    pub aux: Vec<f64>,
    /// `∫_{t_ℓ}^{t_{ℓ+1}} (W − W(t_ℓ)) dt`.
    pub areas: Vec<f64>,
}

impl AuxState {
    pub fn endpoint(&self) -> f64 {
        *self.aux.last().expect("non-empty")
    }

    /// `X̂(1) + Σ_r Ŷ(t_r)·∫_r`, the closed form of the endpoint.
    pub fn endpoint_by_weights(&self) -> f64 {
        let sum: f64 = self.weights.weights.iter().zip(&self.areas).map(|(y, a)| y * a).sum();
        self.weights.scheme.last().expect("non-empty") + sum
    }

    /// Relative discrepancy between the recursion and the closed form.
    pub fn identity_residual(&self) -> f64 {
        let (a, b) = (self.endpoint(), self.endpoint_by_weights());
        (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
    }
}

pub fn build_aux_scheme(spec: &SdeSpec, x0: f64, path: &mut PathState, k: usize) -> Result<AuxState> {
    let weights = build_weight_path(spec, x0, path, k)?;
    let mut areas = Vec::with_capacity(k);
    for l in 0..k {
        areas.push(path.area(weights.times[l], weights.times[l + 1])?);
    }
    let mut q = Vec::with_capacity(k + 1);
    q.push(0.0);
    for l in 0..k {
        q.push(weights.multipliers[l] * q[l] + weights.lie_gaps[l] * areas[l]);
    }
    let aux = weights.scheme.iter().zip(&q).map(|(x, q)| x + q).collect();
    Ok(AuxState { weights, q, aux, areas })
}

/// `R̂ = (1/k)·Σ_ℓ |Ŷ(t_ℓ)|^{2/3}`.
pub fn rhat(weights: &WeightPath) -> f64 {
    let k = weights.steps();
    weights.weights.iter().map(|y| y.abs().powf(2.0 / 3.0)).sum::<f64>() / k as f64
}

/// `Σ_ℓ Ŷ(t_ℓ)² / (12 k³ (d_ℓ + 1)²)` where `d_ℓ` counts the additional
/// observations a method makes inside span `ℓ`.
pub fn conditional_variance_bound(weights: &WeightPath, occupancy: &[usize]) -> Result<f64> {
    let k = weights.steps();
    if occupancy.len() != k {
        return argument(format!("need one occupancy per span, got {} for k = {k}", occupancy.len()));
    }
    let k3 = (k as f64).powi(3);
    Ok(weights
        .weights
        .iter()
        .zip(occupancy)
        .map(|(y, &d)| y * y / (12.0 * k3 * ((d + 1) as f64).powi(2)))
        .sum())
}

/// `𝒴(t) = ℳ(t)·𝒢(t, X(t))` at every node of `reference`, with
/// `ℳ(t) = exp(∫_t^1 (a^(0,1) − ½(b^(0,1))²) du + ∫_t^1 b^(0,1) dW)` by
/// left-point sums on the reference grid.
pub fn weight_process(spec: &SdeSpec, reference: &TrajectoryOutput) -> Result<Vec<f64>> {
    unit_horizon(spec)?;
    let k = reference.steps();
    let mut exponent = vec![0.0; k + 1];
    for l in (0..k).rev() {
        let (t, x) = (reference.times[l], reference.values[l]);
        let h = reference.times[l + 1] - t;
        let dw = reference.brownian[l + 1] - reference.brownian[l];
        let a01 = spec.partial(Coefficient::Drift, 0, 1, t, x)?;
        let b01 = spec.partial(Coefficient::Diffusion, 0, 1, t, x)?;
        exponent[l] = exponent[l + 1] + (a01 - 0.5 * b01 * b01) * h + b01 * dw;
    }
    spec.require(Coefficient::Diffusion, 1, 0)?;
    spec.require(Coefficient::Diffusion, 0, 2)?;
    Ok((0..=k)
        .map(|l| exponent[l].exp() * lie_gap_unchecked(spec, reference.times[l], reference.values[l]))
        .collect())
}

/// `𝒴(t)` for a node `t` of the reference grid.
pub fn weight_continuous(spec: &SdeSpec, reference: &TrajectoryOutput, t: f64) -> Result<f64> {
    let Some(l) = reference.times.iter().position(|&s| s == t) else {
        return argument(format!("{t} is not a node of the reference grid"));
    };
    Ok(weight_process(spec, reference)?[l])
}

/// Continuous-time Milstein scheme with the correction
/// `½(bb^(0,1))(t_ℓ, X̂(t_ℓ))·((W(t) − W(t_ℓ))² − (t − t_ℓ))` removed on each
/// span `(t_ℓ, t_{ℓ+1}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MilsteinAux {
    pub milstein: TrajectoryOutput,
}

pub fn milstein_aux(spec: &SdeSpec, x0: f64, path: &mut PathState, k: usize) -> Result<MilsteinAux> {
    unit_horizon(spec)?;
    Ok(MilsteinAux {
        milstein: run_milstein(spec, x0, k, path, true)?,
    })
}

impl MilsteinAux {
    pub fn evaluate<S: BrownianSource + ?Sized>(&self, t: f64, source: &mut S) -> Result<f64> {
        let m = &self.milstein;
        let x = m.evaluate(t, source)?;
        if t == 0.0 {
            return Ok(x);
        }
        let crate::schemes::Interpolation::Continuous(forms) = &m.interpolation else {
            unreachable!("built with the continuous form");
        };
        // span (t_ℓ, t_{ℓ+1}] containing t
        let l = m.times.partition_point(|&s| s < t) - 1;
        let s = t - m.times[l];
        let dw = if t == m.times[l + 1] {
            m.brownian[l + 1] - m.brownian[l]
        } else {
            source.value(t)? - m.brownian[l]
        };
        Ok(x - forms[l].correction * (dw * dw - s))
    }

    /// Values at the nodes `t_1..t_k` (and `X(0)` at `t_0`).
    pub fn node_values(&self) -> Vec<f64> {
        let m = &self.milstein;
        let crate::schemes::Interpolation::Continuous(forms) = &m.interpolation else {
            unreachable!("built with the continuous form");
        };
        let mut out = vec![m.values[0]];
        for l in 0..m.steps() {
            let h = m.times[l + 1] - m.times[l];
            let dw = m.brownian[l + 1] - m.brownian[l];
            out.push(m.values[l + 1] - forms[l].correction * (dw * dw - h));
        }
        out
    }
}

/// Per-ℓ rows `t,m_hat,M_hat,Y_hat,Q_bar`.
pub fn write_weights_csv<W: Write>(aux: &AuxState, mut out: W) -> io::Result<()> {
    let w = &aux.weights;
    writeln!(out, "t,m_hat,M_hat,Y_hat,Q_bar")?;
    for l in 0..=w.steps() {
        let m = w.multipliers.get(l).map_or(String::new(), |v| v.to_string());
        let y = w.weights.get(l).map_or(String::new(), |v| v.to_string());
        writeln!(out, "{},{m},{},{y},{}", w.times[l], w.products[l], aux.q[l])?;
    }
    Ok(())
}
