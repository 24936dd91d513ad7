//! Sequential methods that observe the driving Brownian motion pointwise.
//!
//! A method is a triple of rules acting on the data vector
//! `D_k = (X(0), W(τ_1), …, W(τ_k))`: a site rule `ψ_k(D_{k−1}) = τ_k`, a
//! stopping rule `χ_k(D_k) ∈ {STOP, GO}` and an output rule `φ_k(D_k)`.
//! The rules get the equation and the data vector and nothing else, so any
//! implementation of [`AdaptiveMethod`] is information admissible by
//! construction; [`check_admissible`] re-verifies it from a transcript.

use std::collections::BTreeMap;
use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{argument, LabError, Result};
use crate::model::{Interval, SdeSpec};
use crate::oracle::{BrownianSource, PathState};
use crate::rng::{StreamKey, StreamPurpose};
use crate::schemes::{grid_time, run_scheme, Interpolation, SchemeConfig, SchemeId, TrajectoryOutput};
use crate::stats::mean_se;

/// Default cap on the number of evaluations of a single run.
pub const DEFAULT_COST_CAP: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputSpace {
    ScalarAtT,
    PathC,
    PathLp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Stop,
    Go,
}

/// `D_k`: the initial value followed by the observations `(τ_i, W(τ_i))`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataVector {
    pub x0: f64,
    pub observations: Vec<(f64, f64)>,
}

impl DataVector {
    pub fn new(x0: f64) -> Self {
        Self {
            x0,
            observations: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// `D_j` for `j ≤ k`.
    pub fn prefix(&self, j: usize) -> DataVector {
        DataVector {
            x0: self.x0,
            observations: self.observations[..j].to_vec(),
        }
    }
}

/// Brownian values restricted to what a data vector contains.
#[derive(Debug, Clone)]
pub struct Recorded(BTreeMap<u64, f64>);

impl Recorded {
    pub fn new(data: &DataVector) -> Self {
        let mut map: BTreeMap<u64, f64> = data.observations.iter().map(|&(t, w)| (t.to_bits(), w)).collect();
        map.insert(0f64.to_bits(), 0.0);
        Self(map)
    }
}

impl BrownianSource for Recorded {
    fn value(&mut self, t: f64) -> Result<f64> {
        self.0
            .get(&(t + 0.0).to_bits())
            .copied()
            .ok_or_else(|| LabError::Argument(format!("W({t}) was not observed")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MethodOutput {
    Scalar(f64),
    Path(TrajectoryOutput),
}

impl MethodOutput {
    pub fn endpoint(&self) -> f64 {
        match self {
            MethodOutput::Scalar(x) => *x,
            MethodOutput::Path(p) => p.endpoint(),
        }
    }

    pub fn path(&self) -> Option<&TrajectoryOutput> {
        match self {
            MethodOutput::Path(p) => Some(p),
            MethodOutput::Scalar(_) => None,
        }
    }
}

pub trait AdaptiveMethod: Send + Sync {
    fn name(&self) -> String;

    /// `ψ_k(D_{k−1})` for `k ≥ 1`; any site in `[0, ∞)`.
    fn next_site(&self, spec: &SdeSpec, k: usize, data: &DataVector) -> f64;

    /// `χ_k(D_k)`.
    fn stop(&self, spec: &SdeSpec, k: usize, data: &DataVector) -> Decision;

    /// `φ_k(D_k)`.
    fn output(&self, spec: &SdeSpec, k: usize, data: &DataVector) -> Result<MethodOutput>;

    /// Declared bound `n` on the average number of evaluations.
    fn budget(&self) -> usize;

    fn output_space(&self) -> OutputSpace;
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodRun {
    pub output: MethodOutput,
    /// `ν`.
    pub cost: usize,
    pub transcript: Vec<(f64, f64)>,
    /// Oracle cost before and after the run.
    pub oracle_cost_delta: usize,
    pub sites_beyond_horizon: usize,
}

impl MethodRun {
    pub fn data(&self, x0: f64) -> DataVector {
        DataVector {
            x0,
            observations: self.transcript.clone(),
        }
    }

    /// `k,tau,w` rows.
    pub fn write_transcript_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "k,tau,w")?;
        for (k, (t, w)) in self.transcript.iter().enumerate() {
            writeln!(out, "{},{t},{w}", k + 1)?;
        }
        Ok(())
    }
}

pub fn run_method<M: AdaptiveMethod + ?Sized>(method: &M, spec: &SdeSpec, path: &mut PathState, x0: f64) -> Result<MethodRun> {
    run_method_capped(method, spec, path, x0, DEFAULT_COST_CAP)
}

/// Runs the ψ/χ loop; fails with [`LabError::Divergence`] once `cap`
/// evaluations are used without stopping.
pub fn run_method_capped<M: AdaptiveMethod + ?Sized>(
    method: &M,
    spec: &SdeSpec,
    path: &mut PathState,
    x0: f64,
    cap: usize,
) -> Result<MethodRun> {
    let start = path.cost();
    let mut data = DataVector::new(x0);
    let mut k = 0;
    loop {
        if k == cap {
            return Err(LabError::Divergence { cap });
        }
        k += 1;
        let tau = method.next_site(spec, k, &data);
        let w = path.evaluate(tau)?;
        data.observations.push((tau, w));
        if method.stop(spec, k, &data) == Decision::Stop {
            break;
        }
    }
    let output = method.output(spec, k, &data)?;
    let beyond = data.observations.iter().filter(|(t, _)| *t > spec.horizon).count();
    Ok(MethodRun {
        output,
        cost: k,
        transcript: data.observations,
        oracle_cost_delta: path.cost() - start,
        sites_beyond_horizon: beyond,
    })
}

/// Replays the rules on every prefix of the transcript: each `τ_k` must be
/// reproduced bitwise from `D_{k−1}`, `χ` must say GO before `ν` and STOP at
/// `ν`.
pub fn check_admissible<M: AdaptiveMethod + ?Sized>(method: &M, spec: &SdeSpec, x0: f64, run: &MethodRun) -> bool {
    let data = run.data(x0);
    let nu = data.len();
    (1..=nu).all(|k| {
        let site = method.next_site(spec, k, &data.prefix(k - 1));
        let decision = method.stop(spec, k, &data.prefix(k));
        let expected = if k == nu { Decision::Stop } else { Decision::Go };
        site.to_bits() == data.observations[k - 1].0.to_bits() && decision == expected
    })
}

/// Member of the equidistant class: observes `W(ℓT/n)`, `ℓ = 1..n`, and
/// runs a scheme on the collected values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquidistantMethod {
    pub n: usize,
    pub scheme: SchemeId,
    pub horizon: f64,
    pub output_space: OutputSpace,
}

pub fn equidistant_wrapper(n: usize, scheme: SchemeId, horizon: f64) -> Result<EquidistantMethod> {
    if n == 0 {
        return argument("an equidistant method needs n ≥ 1");
    }
    if !(horizon > 0.0) {
        return argument("horizon must be positive");
    }
    Ok(EquidistantMethod {
        n,
        scheme,
        horizon,
        output_space: OutputSpace::PathC,
    })
}

impl EquidistantMethod {
    pub fn with_output_space(mut self, space: OutputSpace) -> Self {
        self.output_space = space;
        self
    }
}

impl AdaptiveMethod for EquidistantMethod {
    fn name(&self) -> String {
        format!("equidistant[{}, n={}]", self.scheme, self.n)
    }

    fn next_site(&self, _spec: &SdeSpec, k: usize, _data: &DataVector) -> f64 {
        grid_time(k, self.n, self.horizon)
    }

    fn stop(&self, _spec: &SdeSpec, k: usize, _data: &DataVector) -> Decision {
        if k >= self.n {
            Decision::Stop
        } else {
            Decision::Go
        }
    }

    fn output(&self, spec: &SdeSpec, _k: usize, data: &DataVector) -> Result<MethodOutput> {
        let config = SchemeConfig::new(self.scheme, self.n);
        let traj = run_scheme(spec, data.x0, config, &mut Recorded::new(data))?;
        Ok(match self.output_space {
            OutputSpace::ScalarAtT => MethodOutput::Scalar(traj.endpoint()),
            _ => MethodOutput::Path(traj),
        })
    }

    fn budget(&self) -> usize {
        self.n
    }

    fn output_space(&self) -> OutputSpace {
        self.output_space
    }
}

/// Euler stepping on `B = ⌊n/m⌋` base intervals; a base interval whose
/// starting state lies in `region` is traversed in `m` substeps. At most
/// `B·m ≤ n` evaluations on every path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveDemo {
    pub n: usize,
    pub region: Interval,
    pub fine_factor: usize,
    pub horizon: f64,
}

pub fn adaptive_demo(n: usize, region: Interval, fine_factor: usize, horizon: f64) -> Result<AdaptiveDemo> {
    if fine_factor == 0 || n < 2 * fine_factor {
        return argument(format!("need n ≥ 2m, got n = {n}, m = {fine_factor}"));
    }
    if !(horizon > 0.0) {
        return argument("horizon must be positive");
    }
    Ok(AdaptiveDemo {
        n,
        region,
        fine_factor,
        horizon,
    })
}

struct Replay {
    next: Option<f64>,
    times: Vec<f64>,
    values: Vec<f64>,
    brownian: Vec<f64>,
}

impl AdaptiveDemo {
    pub fn base_intervals(&self) -> usize {
        self.n / self.fine_factor
    }

    /// Re-derives the Euler states and the next site from the data alone.
    fn replay(&self, spec: &SdeSpec, data: &DataVector) -> Replay {
        let base = self.base_intervals();
        let mut x = data.x0;
        let (mut t, mut w) = (0.0, 0.0);
        let mut times = vec![t];
        let mut values = vec![x];
        let mut brownian = vec![w];
        let mut obs = data.observations.iter();
        for j in 0..base {
            let sub = if self.region.contains(x) { self.fine_factor } else { 1 };
            for s in 1..=sub {
                let site = grid_time(j * sub + s, base * sub, self.horizon);
                let Some(&(_, w_next)) = obs.next() else {
                    return Replay {
                        next: Some(site),
                        times,
                        values,
                        brownian,
                    };
                };
                x = x + spec.drift(t, x) * (site - t) + spec.diffusion(t, x) * (w_next - w);
                t = site;
                w = w_next;
                times.push(t);
                values.push(x);
                brownian.push(w);
            }
        }
        Replay {
            next: None,
            times,
            values,
            brownian,
        }
    }
}

impl AdaptiveMethod for AdaptiveDemo {
    fn name(&self) -> String {
        format!(
            "adaptive_demo[n={}, m={}, I={}]",
            self.n, self.fine_factor, self.region
        )
    }

    fn next_site(&self, spec: &SdeSpec, _k: usize, data: &DataVector) -> f64 {
        self.replay(spec, data).next.unwrap_or(self.horizon)
    }

    fn stop(&self, spec: &SdeSpec, _k: usize, data: &DataVector) -> Decision {
        match self.replay(spec, data).next {
            None => Decision::Stop,
            Some(_) => Decision::Go,
        }
    }

    fn output(&self, spec: &SdeSpec, _k: usize, data: &DataVector) -> Result<MethodOutput> {
        let r = self.replay(spec, data);
        Ok(MethodOutput::Path(TrajectoryOutput {
            times: r.times,
            values: r.values,
            brownian: r.brownian,
            interpolation: Interpolation::Linear,
        }))
    }

    fn budget(&self) -> usize {
        self.n
    }

    fn output_space(&self) -> OutputSpace {
        OutputSpace::PathC
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub mean: f64,
    pub se: f64,
    pub max: usize,
    pub budget: usize,
    pub replications: usize,
    /// Runs stopped by the evaluation cap; excluded from the mean.
    pub capped: usize,
    pub sites_beyond_horizon: usize,
    /// Mean exceeds the budget by more than two standard errors.
    pub budget_violated: bool,
}

/// Monte Carlo estimate of `E[ν]` over `replications` independent paths.
pub fn average_cost<M: AdaptiveMethod + ?Sized>(method: &M, spec: &SdeSpec, replications: usize, seed: u64) -> Result<CostEstimate> {
    if replications < 2 {
        return argument("need at least 2 replications");
    }
    let runs: Vec<Result<(usize, usize)>> = (0..replications as u64)
        .into_par_iter()
        .map(|r| {
            let key = StreamKey::new(seed, r);
            let x0 = spec.initial.draw(&mut key.rng(StreamPurpose::Initial));
            let mut path = PathState::new(key);
            match run_method(method, spec, &mut path, x0) {
                Ok(run) => Ok((run.cost, run.sites_beyond_horizon)),
                Err(LabError::Divergence { .. }) => Ok((usize::MAX, 0)),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut costs = Vec::with_capacity(replications);
    let mut capped = 0;
    let mut beyond = 0;
    for r in runs {
        let (c, b) = r?;
        if c == usize::MAX {
            capped += 1;
        } else {
            costs.push(c as f64);
            beyond += b;
        }
    }
    let (mean, se) = mean_se(&costs);
    let se = if se.is_nan() { 0.0 } else { se };
    let budget = method.budget();
    Ok(CostEstimate {
        mean,
        se,
        max: costs.iter().fold(0.0f64, |m, &c| m.max(c)) as usize,
        budget,
        replications,
        capped,
        sites_beyond_horizon: beyond,
        budget_violated: mean > budget as f64 + 2.0 * se,
    })
}
