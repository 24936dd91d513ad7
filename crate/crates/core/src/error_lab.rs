//! Monte Carlo strong errors, reference solutions and rate experiments.
//!
//! Every replication builds one [`PathState`], computes the reference on the
//! fine grid `t_j = jT/k_ref` and then runs each approximation for each `n`
//! on the same path. All `n` therefore share their Brownian values, and the
//! path metrics are evaluated on the reference grid.
//!
//! Replications are processed in fixed chunks reduced in index order, so
//! results depend on `(plan, seed)` only and never on the thread count.

use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{argument, LabError, Result};
use crate::method::{run_method, AdaptiveMethod};
use crate::model::{ReferenceKind, SdeSpec};
use crate::oracle::{BrownianSource, PathState};
use crate::rng::{StreamKey, StreamPurpose};
use crate::schemes::{grid_time, run_scheme, run_strong_taylor, Interpolation, SchemeConfig, SchemeId, TrajectoryOutput};
use crate::stats::{log_corrected_fit, loglog_fit, mean_se, wilson, LogLogFit, Proportion};

pub const DEFAULT_REFERENCE_FACTOR: usize = 16;
/// Required ratio between the smallest measured error and the reference's
/// own error against its half-resolution version.
pub const GATE_FACTOR: f64 = 8.0;
const CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "p", rename_all = "snake_case")]
pub enum ErrorMetric {
    /// `E|X(T) − X̂(T)|`.
    Endpoint,
    /// `E‖X − X̂‖_p`.
    Lp(f64),
    /// `E‖X − X̂‖_∞`.
    Sup,
    /// `sup_t E|X(t) − X̂(t)|`.
    MaxPointwise,
}

impl ErrorMetric {
    pub fn validate(self) -> Result<()> {
        match self {
            ErrorMetric::Lp(p) if !(p >= 1.0 && p.is_finite()) => argument(format!("L_p needs finite p ≥ 1, got {p}")),
            _ => Ok(()),
        }
    }

    pub fn needs_path(self) -> bool {
        !matches!(self, ErrorMetric::Endpoint)
    }
}

impl fmt::Display for ErrorMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ErrorMetric::Endpoint => write!(f, "endpoint"),
            ErrorMetric::Lp(p) => write!(f, "L{p}"),
            ErrorMetric::Sup => write!(f, "sup"),
            ErrorMetric::MaxPointwise => write!(f, "max_pointwise"),
        }
    }
}

/// Builds the member of a method family with budget `n`.
pub trait MethodFamily: Send + Sync {
    fn name(&self) -> String;
    fn build(&self, n: usize) -> Result<Box<dyn AdaptiveMethod>>;
}

impl<F> MethodFamily for (String, F)
where
    F: Fn(usize) -> Result<Box<dyn AdaptiveMethod>> + Send + Sync,
{
    fn name(&self) -> String {
        self.0.clone()
    }

    fn build(&self, n: usize) -> Result<Box<dyn AdaptiveMethod>> {
        (self.1)(n)
    }
}

#[derive(Clone)]
pub enum Approximation {
    /// Equidistant scheme with `k = n`.
    Scheme { scheme: SchemeId, continuous: bool },
    Method(Arc<dyn MethodFamily>),
}

impl Approximation {
    pub fn scheme(scheme: SchemeId) -> Self {
        Approximation::Scheme { scheme, continuous: false }
    }

    pub fn continuous(scheme: SchemeId) -> Self {
        Approximation::Scheme { scheme, continuous: true }
    }

    pub fn name(&self) -> String {
        match self {
            Approximation::Scheme { scheme, continuous: false } => format!("{scheme}+linear"),
            Approximation::Scheme { scheme, continuous: true } => format!("{scheme}+continuous"),
            Approximation::Method(m) => m.name(),
        }
    }
}

impl fmt::Debug for Approximation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// `X` on `t_j = jT/k_ref`, run on the same path as the approximations.
pub fn reference_solution(spec: &SdeSpec, x0: f64, path: &mut PathState, k_ref: usize) -> Result<TrajectoryOutput> {
    if k_ref == 0 {
        return argument("the reference needs at least one step");
    }
    match spec.reference {
        ReferenceKind::Exact => {
            let Some(exact) = &spec.exact_solution else {
                return Err(LabError::Configuration(format!("`{}` has no closed-form solution", spec.name)));
            };
            let times: Vec<f64> = (0..=k_ref).map(|l| grid_time(l, k_ref, spec.horizon)).collect();
            let mut brownian = vec![0.0];
            for &t in &times[1..] {
                brownian.push(path.value(t)?);
            }
            let values = times.iter().zip(&brownian).map(|(&t, &w)| exact.eval(x0, t, w)).collect();
            Ok(TrajectoryOutput {
                times,
                values,
                brownian,
                interpolation: Interpolation::Linear,
            })
        }
        ReferenceKind::Scheme(id) => run_scheme(spec, x0, SchemeConfig::new(id, k_ref), path),
        ReferenceKind::StrongTaylor => run_strong_taylor(spec, x0, k_ref, path),
        ReferenceKind::None => Err(LabError::Configuration(format!(
            "`{}` has neither a closed-form solution nor a designated reference scheme",
            spec.name
        ))),
    }
}

fn reference_label(spec: &SdeSpec) -> String {
    match spec.reference {
        ReferenceKind::Exact => "exact".into(),
        ReferenceKind::Scheme(id) => id.to_string(),
        ReferenceKind::StrongTaylor => "strong_taylor".into(),
        ReferenceKind::None => "none".into(),
    }
}

#[derive(Debug, Clone)]
pub struct ErrorPlan {
    pub spec: SdeSpec,
    pub approximations: Vec<Approximation>,
    pub metrics: Vec<ErrorMetric>,
    pub ns: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    pub reference_factor: usize,
}

impl ErrorPlan {
    pub fn new(spec: SdeSpec, approximations: Vec<Approximation>, metrics: Vec<ErrorMetric>, ns: Vec<usize>, replications: usize, seed: u64) -> Self {
        ErrorPlan {
            spec,
            approximations,
            metrics,
            ns,
            replications,
            seed,
            reference_factor: DEFAULT_REFERENCE_FACTOR,
        }
    }

    /// `reference_factor · lcm(ns)`.
    pub fn reference_steps(&self) -> usize {
        self.reference_factor * self.ns.iter().fold(1, |a, &b| lcm(a, b))
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications < 2 {
            return argument("need at least 2 replications");
        }
        if self.ns.is_empty() || self.ns.contains(&0) {
            return argument("n values must be positive");
        }
        if self.approximations.is_empty() || self.metrics.is_empty() {
            return argument("nothing to estimate");
        }
        if self.reference_factor < DEFAULT_REFERENCE_FACTOR {
            return argument(format!("the reference needs at least {DEFAULT_REFERENCE_FACTOR}× the largest n"));
        }
        for m in &self.metrics {
            m.validate()?;
        }
        for a in &self.approximations {
            if let Approximation::Scheme { scheme, continuous } = a {
                scheme.applicable(&self.spec)?;
                SchemeConfig { scheme_id: *scheme, k: 1, continuous_time: *continuous }.validate()?;
            }
        }
        Ok(())
    }

    fn cell_count(&self) -> usize {
        self.approximations.len() * self.ns.len() * self.metrics.len()
    }

    fn cell_index(&self, a: usize, i: usize, m: usize) -> usize {
        (a * self.ns.len() + i) * self.metrics.len() + m
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 { a } else { gcd(b, a % b) }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

/// Pointwise absolute differences on the uniform grid `0..=K` → metric.
fn path_metric(metric: ErrorMetric, diffs: &[f64], horizon: f64) -> f64 {
    let k = diffs.len() - 1;
    let h = horizon / k as f64;
    match metric {
        ErrorMetric::Endpoint => diffs[k],
        ErrorMetric::Lp(p) => {
            let inner: f64 = diffs.iter().map(|d| d.powf(p)).sum::<f64>() - 0.5 * (diffs[0].powf(p) + diffs[k].powf(p));
            (inner * h).powf(1.0 / p)
        }
        ErrorMetric::Sup | ErrorMetric::MaxPointwise => diffs.iter().fold(0.0f64, |m, &d| m.max(d)),
    }
}

/// Every other node of `diffs`.
fn halve(diffs: &[f64]) -> Vec<f64> {
    diffs.iter().step_by(2).copied().collect()
}

struct Outcome {
    values: Vec<f64>,
    costs: Vec<usize>,
    nodes: Vec<Option<Vec<f64>>>,
    gate: Option<Vec<f64>>,
    drift: Option<f64>,
}

fn replicate(plan: &ErrorPlan, methods: &[Vec<Option<Box<dyn AdaptiveMethod>>>], r: u64, k_ref: usize) -> Result<Outcome> {
    let spec = &plan.spec;
    let key = StreamKey::new(plan.seed, r);
    let x0 = spec.initial.draw(&mut key.rng(StreamPurpose::Initial));
    let mut path = PathState::new(key);
    let reference = reference_solution(spec, x0, &mut path, k_ref)?;
    let needs_path = plan.metrics.iter().any(|m| m.needs_path());
    let monitor = r % 100 == 0;
    let mut values = vec![0.0; plan.cell_count()];
    let mut costs = vec![0; plan.approximations.len() * plan.ns.len()];
    let mut nodes = vec![None; plan.cell_count()];
    let mut drift = None::<f64>;
    for (a, approx) in plan.approximations.iter().enumerate() {
        for (i, &n) in plan.ns.iter().enumerate() {
            let stride = k_ref / n;
            let (trajectory, endpoint, cost) = match approx {
                Approximation::Scheme { scheme, continuous } => {
                    let t = run_scheme(spec, x0, SchemeConfig { scheme_id: *scheme, k: n, continuous_time: *continuous }, &mut path)?;
                    for l in 0..=n {
                        if t.brownian[l].to_bits() != reference.brownian[l * stride].to_bits() {
                            return Err(LabError::Precondition(format!(
                                "scheme and reference disagree on W({})",
                                t.times[l]
                            )));
                        }
                    }
                    let e = t.endpoint();
                    (Some(t), e, n)
                }
                Approximation::Method(_) => {
                    let method = methods[a][i].as_ref().expect("built up front");
                    let run = run_method(method.as_ref(), spec, &mut path, x0)?;
                    let e = run.output.endpoint();
                    let t = run.output.path().cloned();
                    (t, e, run.cost)
                }
            };
            costs[a * plan.ns.len() + i] = cost;
            let diffs = if needs_path {
                let Some(t) = &trajectory else {
                    return argument(format!("{} returns no path; only the endpoint metric applies", approx.name()));
                };
                let mut d = Vec::with_capacity(k_ref + 1);
                for j in 0..=k_ref {
                    d.push((t.evaluate(reference.times[j], &mut path)? - reference.values[j]).abs());
                }
                Some(d)
            } else {
                None
            };
            for (m, &metric) in plan.metrics.iter().enumerate() {
                let c = plan.cell_index(a, i, m);
                values[c] = match (&diffs, metric) {
                    (_, ErrorMetric::Endpoint) => (endpoint - reference.endpoint()).abs(),
                    (Some(d), _) => path_metric(metric, d, spec.horizon),
                    (None, _) => unreachable!(),
                };
                if let (Some(d), ErrorMetric::MaxPointwise) = (&diffs, metric) {
                    nodes[c] = Some(d.clone());
                }
                if let (true, Some(d), ErrorMetric::Lp(_) | ErrorMetric::Sup) = (monitor, &diffs, metric) {
                    let coarse = path_metric(metric, &halve(d), spec.horizon);
                    if values[c] > 0.0 {
                        let rel = (coarse - values[c]).abs() / values[c];
                        drift = Some(drift.map_or(rel, |x| x.max(rel)));
                    }
                }
            }
        }
    }
    let gate = if monitor && spec.reference != ReferenceKind::Exact {
        let half = reference_solution(spec, x0, &mut path, k_ref / 2)?;
        let d: Vec<f64> = (0..=k_ref / 2)
            .map(|j| (reference.values[2 * j] - half.values[j]).abs())
            .collect();
        Some(plan.metrics.iter().map(|&m| path_metric(m, &d, spec.horizon)).collect())
    } else {
        None
    };
    Ok(Outcome {
        values,
        costs,
        nodes,
        gate,
        drift,
    })
}

#[derive(Default)]
struct Acc {
    values: Vec<Vec<f64>>,
    costs: Vec<Vec<f64>>,
    node_sums: Vec<Option<(Vec<f64>, Vec<f64>)>>,
    gate: Vec<Vec<f64>>,
    drift: Option<f64>,
}

impl Acc {
    fn new(cells: usize, runs: usize, metrics: usize) -> Self {
        Acc {
            values: vec![Vec::new(); cells],
            costs: vec![Vec::new(); runs],
            node_sums: vec![None; cells],
            gate: vec![Vec::new(); metrics],
            drift: None,
        }
    }

    fn push(&mut self, o: Outcome) {
        for (v, x) in self.values.iter_mut().zip(o.values) {
            v.push(x);
        }
        for (v, c) in self.costs.iter_mut().zip(o.costs) {
            v.push(c as f64);
        }
        for (slot, d) in self.node_sums.iter_mut().zip(o.nodes) {
            if let Some(d) = d {
                let (s, q) = slot.get_or_insert_with(|| (vec![0.0; d.len()], vec![0.0; d.len()]));
                for (j, x) in d.iter().enumerate() {
                    s[j] += x;
                    q[j] += x * x;
                }
            }
        }
        if let Some(g) = o.gate {
            for (v, x) in self.gate.iter_mut().zip(g) {
                v.push(x);
            }
        }
        if let Some(d) = o.drift {
            self.drift = Some(self.drift.map_or(d, |x: f64| x.max(d)));
        }
    }

    fn merge(&mut self, other: Acc) {
        for (v, w) in self.values.iter_mut().zip(other.values) {
            v.extend(w);
        }
        for (v, w) in self.costs.iter_mut().zip(other.costs) {
            v.extend(w);
        }
        for (slot, o) in self.node_sums.iter_mut().zip(other.node_sums) {
            match (slot.as_mut(), o) {
                (Some((s, q)), Some((s2, q2))) => {
                    for j in 0..s.len() {
                        s[j] += s2[j];
                        q[j] += q2[j];
                    }
                }
                (None, o) => *slot = o,
                (Some(_), None) => {}
            }
        }
        for (v, w) in self.gate.iter_mut().zip(other.gate) {
            v.extend(w);
        }
        if let Some(d) = other.drift {
            self.drift = Some(self.drift.map_or(d, |x| x.max(d)));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellEstimate {
    pub approximation: String,
    pub metric: ErrorMetric,
    pub n: usize,
    pub mean: f64,
    pub se: f64,
    /// Node of the maximal pointwise mean, for [`ErrorMetric::MaxPointwise`].
    pub argmax_time: Option<f64>,
    pub mean_cost: f64,
    pub budget_violated: bool,
    /// Per-replication errors in replication order; empty for
    /// [`ErrorMetric::MaxPointwise`].
    #[serde(skip)]
    pub values: Vec<f64>,
    /// Pointwise mean errors on the reference grid, for
    /// [`ErrorMetric::MaxPointwise`].
    #[serde(skip)]
    pub pointwise_means: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceInfo {
    pub kind: String,
    pub steps: usize,
    /// Per metric: smallest measured mean error over the mean distance between
    /// the reference and its half-resolution version. `None` for closed forms.
    pub gate_ratios: Vec<Option<f64>>,
    pub gate_pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTable {
    pub spec: String,
    pub ns: Vec<usize>,
    pub metrics: Vec<ErrorMetric>,
    pub replications: usize,
    pub seed: u64,
    pub cells: Vec<CellEstimate>,
    pub reference: ReferenceInfo,
    /// Largest relative change of a path metric when the grid is halved,
    /// over every 100th replication.
    pub quadrature_drift: Option<f64>,
    pub runtime_secs: f64,
}

impl ErrorTable {
    pub fn cell(&self, approximation: &str, metric: ErrorMetric, n: usize) -> Option<&CellEstimate> {
        self.cells
            .iter()
            .find(|c| c.approximation == approximation && c.metric == metric && c.n == n)
    }

    /// Cells of one approximation and metric in `n` order.
    pub fn series(&self, approximation: &str, metric: ErrorMetric) -> Vec<&CellEstimate> {
        self.ns.iter().filter_map(|&n| self.cell(approximation, metric, n)).collect()
    }
}

pub fn estimate_errors(plan: &ErrorPlan) -> Result<ErrorTable> {
    plan.validate()?;
    let start = Instant::now();
    let k_ref = plan.reference_steps();
    let methods: Vec<Vec<Option<Box<dyn AdaptiveMethod>>>> = plan
        .approximations
        .iter()
        .map(|a| {
            plan.ns
                .iter()
                .map(|&n| match a {
                    Approximation::Method(f) => f.build(n).map(Some),
                    Approximation::Scheme { .. } => Ok(None),
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let runs = plan.approximations.len() * plan.ns.len();
    let chunks: Vec<Result<Acc>> = (0..plan.replications.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = Acc::new(plan.cell_count(), runs, plan.metrics.len());
            for r in c * CHUNK..((c + 1) * CHUNK).min(plan.replications) {
                acc.push(replicate(plan, &methods, r as u64, k_ref)?);
            }
            Ok(acc)
        })
        .collect();
    let mut total = Acc::new(plan.cell_count(), runs, plan.metrics.len());
    for c in chunks {
        total.merge(c?);
    }
    let m = plan.replications as f64;
    let mut cells = Vec::with_capacity(plan.cell_count());
    for (a, approx) in plan.approximations.iter().enumerate() {
        for (i, &n) in plan.ns.iter().enumerate() {
            let costs = &total.costs[a * plan.ns.len() + i];
            let (mean_cost, cost_se) = mean_se(costs);
            let budget = match approx {
                Approximation::Scheme { .. } => n,
                Approximation::Method(_) => methods[a][i].as_ref().expect("built").budget(),
            };
            let budget_violated = mean_cost > budget as f64 + 2.0 * cost_se.max(0.0);
            for (mi, &metric) in plan.metrics.iter().enumerate() {
                let c = plan.cell_index(a, i, mi);
                let (mean, se, argmax_time, values, pointwise_means) = if metric == ErrorMetric::MaxPointwise {
                    let (s, q) = total.node_sums[c].take().expect("path metric");
                    let means: Vec<f64> = s.iter().map(|x| x / m).collect();
                    let j = (0..means.len()).fold(0, |b, j| if means[j] > means[b] { j } else { b });
                    let var = (q[j] / m - means[j] * means[j]).max(0.0) * m / (m - 1.0);
                    (means[j], (var / m).sqrt(), Some(grid_time(j, k_ref, plan.spec.horizon)), Vec::new(), means)
                } else {
                    let v = std::mem::take(&mut total.values[c]);
                    let (mean, se) = mean_se(&v);
                    (mean, se, None, v, Vec::new())
                };
                cells.push(CellEstimate {
                    approximation: approx.name(),
                    metric,
                    n,
                    mean,
                    se,
                    argmax_time,
                    mean_cost,
                    budget_violated,
                    values,
                    pointwise_means,
                });
            }
        }
    }
    let gate_ratios: Vec<Option<f64>> = plan
        .metrics
        .iter()
        .enumerate()
        .map(|(mi, &metric)| {
            if total.gate[mi].is_empty() {
                return None;
            }
            let (g, _) = mean_se(&total.gate[mi]);
            let smallest = cells
                .iter()
                .filter(|c| c.metric == metric)
                .fold(f64::INFINITY, |s, c| s.min(c.mean));
            Some(if g == 0.0 { f64::INFINITY } else { smallest / g })
        })
        .collect();
    let gate_pass = gate_ratios.iter().all(|r| r.is_none_or(|r| r >= GATE_FACTOR));
    Ok(ErrorTable {
        spec: plan.spec.name.clone(),
        ns: plan.ns.clone(),
        metrics: plan.metrics.clone(),
        replications: plan.replications,
        seed: plan.seed,
        cells,
        reference: ReferenceInfo {
            kind: reference_label(&plan.spec),
            steps: k_ref,
            gate_ratios,
            gate_pass,
        },
        quadrature_drift: total.drift,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

pub fn mc_error(spec: &SdeSpec, approximation: Approximation, metric: ErrorMetric, n: usize, replications: usize, seed: u64) -> Result<CellEstimate> {
    if replications < 100 {
        return argument("need at least 100 replications");
    }
    let plan = ErrorPlan::new(spec.clone(), vec![approximation], vec![metric], vec![n], replications, seed);
    Ok(estimate_errors(&plan)?.cells.remove(0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTarget {
    /// Expected slope of `ln err` against `ln n`.
    pub exponent: f64,
    /// Rate carries a `√ln(n+1)` factor; judged by the log-corrected fit.
    pub log_factor: bool,
    pub band: (f64, f64),
    pub source: String,
}

impl RateTarget {
    pub fn new(exponent: f64, band: (f64, f64), source: impl Into<String>) -> Self {
        RateTarget {
            exponent,
            log_factor: false,
            band,
            source: source.into(),
        }
    }

    pub fn with_log_factor(mut self) -> Self {
        self.log_factor = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub spec: String,
    pub approximation: String,
    pub metric: ErrorMetric,
    pub ns: Vec<usize>,
    pub means: Vec<f64>,
    pub ses: Vec<f64>,
    pub replications: usize,
    pub seed: u64,
    pub fit: LogLogFit,
    pub log_corrected: Option<LogLogFit>,
    pub target: RateTarget,
    pub reference: ReferenceInfo,
    pub verdict: bool,
    pub runtime_secs: f64,
}

impl RateReport {
    /// Slope the verdict is based on.
    pub fn judged_slope(&self) -> f64 {
        match (&self.log_corrected, self.target.log_factor) {
            (Some(f), true) => f.slope,
            _ => self.fit.slope,
        }
    }

    pub fn rss_improved(&self) -> Option<bool> {
        self.log_corrected.map(|f| f.rss < self.fit.rss)
    }

    /// Recomputes the verdict from the stored fields.
    pub fn derive_verdict(&self) -> bool {
        let s = self.judged_slope();
        let in_band = s >= self.target.band.0 && s <= self.target.band.1;
        in_band && (!self.target.log_factor || self.rss_improved() == Some(true))
    }

    /// `n,mean,se,M,seed` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "n,mean,se,M,seed")?;
        for i in 0..self.ns.len() {
            writeln!(out, "{},{},{},{},{}", self.ns[i], self.means[i], self.ses[i], self.replications, self.seed)?;
        }
        Ok(())
    }

    /// Two-column `n mean` data for gnuplot.
    pub fn write_plot_data<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "# {} {} {}", self.spec, self.approximation, self.metric)?;
        for i in 0..self.ns.len() {
            writeln!(out, "{} {}", self.ns[i], self.means[i])?;
        }
        Ok(())
    }
}

/// Fits one series of `table` against `target`.
pub fn rate_report(table: &ErrorTable, approximation: &str, metric: ErrorMetric, target: RateTarget) -> Result<RateReport> {
    let series = table.series(approximation, metric);
    if series.len() < 3 {
        return argument(format!("no series for {approximation} / {metric}"));
    }
    let ns: Vec<usize> = series.iter().map(|c| c.n).collect();
    let x: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let means: Vec<f64> = series.iter().map(|c| c.mean).collect();
    let ses: Vec<f64> = series.iter().map(|c| c.se).collect();
    let weights: Vec<f64> = means.iter().zip(&ses).map(|(m, s)| if *s > 0.0 { (m / s).powi(2) } else { 1.0 }).collect();
    let fit = loglog_fit(&x, &means, Some(&weights))?;
    let log_corrected = if target.log_factor {
        Some(log_corrected_fit(&x, &means, Some(&weights))?)
    } else {
        None
    };
    let mut report = RateReport {
        spec: table.spec.clone(),
        approximation: approximation.into(),
        metric,
        ns,
        means,
        ses,
        replications: table.replications,
        seed: table.seed,
        fit,
        log_corrected,
        target,
        reference: table.reference.clone(),
        verdict: false,
        runtime_secs: table.runtime_secs,
    };
    report.verdict = report.derive_verdict();
    Ok(report)
}

fn check_geometric(ns: &[usize]) -> Result<()> {
    if ns.len() < 4 {
        return argument("a rate experiment needs at least 4 values of n");
    }
    let q = ns[1] as f64 / ns[0] as f64;
    let geometric = q > 1.0 && ns.windows(2).all(|w| ((w[1] as f64 / w[0] as f64) - q).abs() < 1e-12 * q);
    if !geometric {
        return argument(format!("n grid {ns:?} is not geometric"));
    }
    Ok(())
}

pub fn rate_experiment(
    spec: &SdeSpec,
    approximation: Approximation,
    metric: ErrorMetric,
    ns: &[usize],
    replications: usize,
    seed: u64,
    target: RateTarget,
) -> Result<RateReport> {
    check_geometric(ns)?;
    let name = approximation.name();
    let plan = ErrorPlan::new(spec.clone(), vec![approximation], vec![metric], ns.to_vec(), replications, seed);
    rate_report(&estimate_errors(&plan)?, &name, metric, target)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateShape {
    /// `1/n`.
    InverseN,
    /// `√(ln(n+1)/n)`.
    LogRoot,
    /// `1/√n`.
    InverseSqrt,
}

impl RateShape {
    pub fn eval(self, n: usize) -> f64 {
        let n = n as f64;
        match self {
            RateShape::InverseN => 1.0 / n,
            RateShape::LogRoot => ((n + 1.0).ln() / n).sqrt(),
            RateShape::InverseSqrt => 1.0 / n.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub ns: Vec<usize>,
    pub c: f64,
    pub rate: RateShape,
    pub estimates: Vec<Proportion>,
    /// Smallest lower Wilson bound over `n`.
    pub floor: f64,
}

/// `ℙ(error ≥ c·rate(n))` per `n` from the stored replications of `table`.
pub fn probability_tail(table: &ErrorTable, approximation: &str, metric: ErrorMetric, rate: RateShape, c: f64) -> Result<TailReport> {
    if metric == ErrorMetric::MaxPointwise {
        return argument("exceedance needs per-replication errors");
    }
    let series = table.series(approximation, metric);
    if series.is_empty() {
        return argument(format!("no series for {approximation} / {metric}"));
    }
    let estimates: Vec<Proportion> = series
        .iter()
        .map(|cell| {
            let threshold = c * rate.eval(cell.n);
            let hits = cell.values.iter().filter(|&&e| e >= threshold).count();
            wilson(hits as u64, cell.values.len() as u64, 0.95)
        })
        .collect();
    Ok(TailReport {
        ns: series.iter().map(|c| c.n).collect(),
        c,
        rate,
        floor: estimates.iter().fold(f64::INFINITY, |m, p| m.min(p.lower)),
        estimates,
    })
}
