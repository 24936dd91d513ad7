//! Coupled runs of an equation and its localization on one Brownian path.
//!
//! Exits are detected at grid nodes only. A node counts as an exit when a
//! step starts from it, so an excursion at the final node `t_k` alone is not
//! an exit: it cannot influence any iterate.

use std::io::{self, Write};

use rayon::prelude::*;

use crate::error::{argument, Result};
use crate::model::{Interval, SdeSpec};
use crate::oracle::PathState;
use crate::rng::{StreamKey, StreamPurpose};
use crate::schemes::{run_scheme, SchemeConfig, TrajectoryOutput};
use crate::stats::{wilson, Proportion};

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingResult {
    pub original: TrajectoryOutput,
    pub localized: TrajectoryOutput,
    /// First node `t_0..t_{k-1}` at which either trajectory lies outside `I`.
    pub exit_index: Option<usize>,
    /// Last node through which both trajectories agree bitwise.
    pub agreed_through: usize,
    pub stayed: bool,
}

impl CouplingResult {
    pub fn steps(&self) -> usize {
        self.original.steps()
    }

    pub fn fully_agreed(&self) -> bool {
        self.agreed_through == self.steps()
    }

    /// Agreement through the step before the first exit.
    pub fn prefix_holds(&self) -> bool {
        match self.exit_index {
            None => self.fully_agreed(),
            Some(e) => self.agreed_through >= e,
        }
    }
}

pub fn coupled_simulate(
    spec: &SdeSpec,
    localized: &SdeSpec,
    interval: Interval,
    config: SchemeConfig,
    x0: f64,
    path: &mut PathState,
) -> Result<CouplingResult> {
    if spec.horizon != localized.horizon {
        return argument(format!(
            "horizons differ: {} vs {}",
            spec.horizon, localized.horizon
        ));
    }
    let original = run_scheme(spec, x0, config, path)?;
    let local = run_scheme(localized, x0, config, path)?;
    if original.times != local.times {
        return argument("trajectories live on different grids");
    }
    let k = original.steps();
    let exit_index = (0..k).find(|&l| !interval.contains(original.values[l]) || !interval.contains(local.values[l]));
    let agreed_through = original
        .values
        .iter()
        .zip(&local.values)
        .position(|(a, b)| a.to_bits() != b.to_bits())
        .map_or(k, |l| l - 1);
    Ok(CouplingResult {
        original,
        localized: local,
        stayed: exit_index.is_none(),
        exit_index,
        agreed_through,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct CouplingRecord {
    pub replication: u64,
    pub exit_index: Option<usize>,
    pub agreed_through: usize,
    pub stayed: bool,
    pub fully_agreed: bool,
    pub prefix_holds: bool,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CouplingSummary {
    pub records: Vec<CouplingRecord>,
    pub never_exited: usize,
    pub full_agreement: usize,
    pub prefix_agreement: usize,
    /// Paths that left `I` yet agree at every node.
    pub agreed_after_exit: usize,
}

impl CouplingSummary {
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "replication,exit_index,agreed_through,stayed")?;
        for r in &self.records {
            let e = r.exit_index.map_or(String::new(), |e| e.to_string());
            writeln!(out, "{},{e},{},{}", r.replication, r.agreed_through, r.stayed)?;
        }
        Ok(())
    }
}

/// Couples `replications` paths with initial values drawn from `spec`.
pub fn coupling_batch(
    spec: &SdeSpec,
    localized: &SdeSpec,
    interval: Interval,
    config: SchemeConfig,
    replications: usize,
    seed: u64,
) -> Result<CouplingSummary> {
    let records: Vec<Result<CouplingRecord>> = (0..replications as u64)
        .into_par_iter()
        .map(|r| {
            let key = StreamKey::new(seed, r);
            let x0 = spec.initial.draw(&mut key.rng(StreamPurpose::Initial));
            let c = coupled_simulate(spec, localized, interval, config, x0, &mut PathState::new(key))?;
            Ok(CouplingRecord {
                replication: r,
                exit_index: c.exit_index,
                agreed_through: c.agreed_through,
                stayed: c.stayed,
                fully_agreed: c.fully_agreed(),
                prefix_holds: c.prefix_holds(),
            })
        })
        .collect();
    let records = records.into_iter().collect::<Result<Vec<_>>>()?;
    let count = |f: fn(&CouplingRecord) -> bool| records.iter().filter(|r| f(r)).count();
    Ok(CouplingSummary {
        never_exited: count(|r| r.stayed),
        full_agreement: count(|r| r.fully_agreed),
        prefix_agreement: count(|r| r.prefix_holds),
        agreed_after_exit: count(|r| !r.stayed && r.fully_agreed),
        records,
    })
}

/// `ℙ(X̂(t) ∈ I for every node t ≤ until)` with a 95% Wilson interval.
pub fn stay_probability(
    spec: &SdeSpec,
    interval: Interval,
    until: f64,
    config: SchemeConfig,
    replications: usize,
    seed: u64,
) -> Result<Proportion> {
    if replications < 100 {
        return argument("need at least 100 replications");
    }
    let stays: Vec<Result<bool>> = (0..replications as u64)
        .into_par_iter()
        .map(|r| {
            let key = StreamKey::new(seed, r);
            let x0 = spec.initial.draw(&mut key.rng(StreamPurpose::Initial));
            let traj = run_scheme(spec, x0, config, &mut PathState::new(key))?;
            Ok(traj
                .times
                .iter()
                .zip(&traj.values)
                .take_while(|(t, _)| **t <= until)
                .all(|(_, x)| interval.contains(*x)))
        })
        .collect();
    let mut successes = 0;
    for s in stays {
        successes += s? as u64;
    }
    Ok(wilson(successes, replications as u64, 0.95))
}
