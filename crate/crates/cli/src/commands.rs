use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::json;

use sdelab::error_lab::{estimate_errors, rate_report, RateReport};
use sdelab::localization::coupling_batch;
use sdelab::model::{catalog, check_conditions, localize, CatalogName, CatalogParams, ConditionReport, Interval, NestedIntervals};
use sdelab::oracle::{BrownianSource, PathState};
use sdelab::proof::build_aux_scheme;
use sdelab::schemes::{SchemeConfig, SchemeId};
use sdelab::stats::{anderson_tail_check, bridge_l1_sweep, mean_se};

use crate::config::Config;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Identities,
    Coupling,
    Gaussian,
    Oracle,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub suite: Suite,
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn line(pass: bool, what: &str, detail: &str) {
    println!("{} {what}: {detail}", if pass { "PASS" } else { "FAIL" });
}

fn write_json<T: Serialize>(out: &Path, file: &str, value: &T) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let path = out.join(file);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(f), value)?;
    Ok(())
}

fn slug(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect()
}

/// Returns whether every expected verdict matched.
pub fn classify(config: &Config, out: Option<&Path>, dry_run: bool) -> Result<bool> {
    let Some(c) = &config.classify else {
        bail!("config has no \"classify\" section");
    };
    let spec = config.spec.build()?;
    if dry_run {
        println!("{}", serde_json::to_string_pretty(&json!({ "config": config, "equation": spec.name }))?);
        return Ok(true);
    }
    let reports: Vec<ConditionReport> = c
        .theorems
        .iter()
        .map(|&t| check_conditions(&spec, t, c.interval, c.t0, c.grid_size))
        .collect::<sdelab::Result<_>>()?;
    let mut ok = true;
    for r in &reports {
        let expected = c.expect.iter().find(|(t, _)| *t == r.theorem_id).map(|(_, v)| *v);
        let matched = expected.is_none_or(|v| v == r.verdict);
        ok &= matched;
        let detail = format!(
            "{:?} on ({}, {}), min|b| {:.3e}, min|𝒢| {}",
            r.verdict,
            r.interval_lo,
            r.interval_hi,
            r.b_min_abs,
            r.lie_gap_min_abs.map_or("n/a".into(), |g| format!("{g:.3e}"))
        );
        match expected {
            Some(v) => line(matched, &format!("{} {}", r.equation, r.theorem_id), &format!("{detail} (expected {v:?})")),
            None => println!("{} {}: {detail}", r.equation, r.theorem_id),
        }
    }
    if let Some(out) = out {
        write_json(out, "classify.json", &json!({ "config": config, "reports": reports }))?;
    }
    Ok(ok)
}

pub fn rates(config: &Config, out: Option<&Path>, dry_run: bool) -> Result<bool> {
    let Some(rc) = &config.rates else {
        bail!("config has no \"rates\" section");
    };
    let plan = rc.plan(config.spec.build()?, config.seed)?;
    let names: Vec<String> = plan.approximations.iter().map(|a| a.name()).collect();
    if dry_run {
        let resolved = json!({
            "config": config,
            "equation": plan.spec.name,
            "approximations": names,
            "reference": plan.spec.reference,
            "reference_steps": plan.reference_steps(),
            "paths": plan.replications * plan.ns.len(),
        });
        println!("{}", serde_json::to_string_pretty(&resolved)?);
        return Ok(true);
    }
    let table = estimate_errors(&plan)?;
    let mut reports: Vec<RateReport> = Vec::new();
    for t in &rc.targets {
        let r = rate_report(&table, &names[t.approximation], t.metric, t.target())?;
        let detail = format!(
            "slope {:.3} ± {:.3}, band [{}, {}], target {} ({})",
            r.judged_slope(),
            r.fit.slope_se,
            r.target.band.0,
            r.target.band.1,
            r.target.exponent,
            r.target.source
        );
        line(r.verdict, &format!("{} {} {}", r.spec, r.approximation, r.metric), &detail);
        reports.push(r);
    }
    for cell in &table.cells {
        println!("  {} {} n={}: {:.4e} ± {:.1e}", cell.approximation, cell.metric, cell.n, cell.mean, cell.se);
    }
    if let Some(out) = out {
        write_json(out, "rates.json", &json!({ "config": config, "seed": config.seed, "reports": reports, "table": table }))?;
        for r in &reports {
            let stem = slug(&format!("{}_{}", r.approximation, r.metric));
            r.write_csv(BufWriter::new(File::create(out.join(format!("{stem}.csv")))?))?;
            r.write_plot_data(BufWriter::new(File::create(out.join(format!("{stem}.dat")))?))?;
        }
    }
    Ok(reports.iter().all(|r| r.verdict))
}

fn check(suite: Suite, name: &str, pass: bool, detail: String) -> Check {
    line(pass, name, &detail);
    Check { suite, name: name.into(), pass, detail }
}

fn identities(seed: u64) -> Result<Vec<Check>> {
    let q = catalog(CatalogName::Quintic, &CatalogParams::default())?;
    let nest = NestedIntervals::new(Interval::new(0.25, 4.0), Interval::new(0.5, 2.0), Interval::new(0.75, 1.5));
    let s = localize(&q, nest)?;
    let mut worst = 0.0f64;
    for k in [8, 32, 128] {
        for r in 0..300 {
            worst = worst.max(build_aux_scheme(&s, 1.0, &mut PathState::from_seed(seed, r), k)?.identity_residual());
        }
    }
    let gbm = catalog(CatalogName::Gbm, &CatalogParams::default())?;
    let mut largest = 0.0f64;
    for r in 0..100 {
        let aux = build_aux_scheme(&gbm, 1.0, &mut PathState::from_seed(seed, r), 32)?;
        largest = aux.weights.weights.iter().fold(largest, |m, w| m.max(w.abs()));
    }
    Ok(vec![
        check(Suite::Identities, "aux endpoint decomposition", worst <= 1e-10, format!("max relative residual {worst:.2e} (limit 1e-10)")),
        check(Suite::Identities, "GBM weights vanish", largest <= 1e-12, format!("max |Ŷ| {largest:.2e}")),
    ])
}

fn coupling(seed: u64) -> Result<Vec<Check>> {
    let q = catalog(CatalogName::Quintic, &CatalogParams::default())?;
    let nest = NestedIntervals::new(Interval::new(0.05, 8.0), Interval::new(0.1, 4.0), Interval::new(0.2, 2.0));
    let l = localize(&q, nest)?;
    let m = 1000;
    let s = coupling_batch(&q, &l, nest.inner, SchemeConfig::new(SchemeId::TamedMilstein, 64), m, seed)?;
    let staying_agree = s.records.iter().filter(|r| r.stayed).all(|r| r.fully_agreed);
    Ok(vec![
        check(Suite::Coupling, "agreement before exit", s.prefix_agreement == m, format!("{}/{m} paths", s.prefix_agreement)),
        check(
            Suite::Coupling,
            "staying paths agree",
            staying_agree,
            format!("never exited {}, full agreement {}", s.never_exited, s.full_agreement),
        ),
    ])
}

fn gaussian(seed: u64) -> Result<Vec<Check>> {
    let mut failed = Vec::new();
    let mut s = seed;
    for eps in [0.1, 0.5, 0.9] {
        for sigma in [1.0, 2.0] {
            for mu in [0.0, 3.0] {
                s += 1;
                let c = anderson_tail_check(mu, sigma, 1.0, eps, 10_000, s)?;
                if !c.pass {
                    failed.push(format!("(ε={eps}, σ={sigma}, μ={mu})"));
                }
            }
        }
    }
    let c = bridge_l1_sweep(8, 1.0, 0.1, 10_000, seed + 100)?;
    Ok(vec![
        check(Suite::Gaussian, "normal tail grid", failed.is_empty(), format!("12 cells, failures {failed:?}")),
        check(Suite::Gaussian, "bridge L1 tail", c.is_some(), format!("largest passing c for k=8: {c:?}")),
    ])
}

fn within(est: f64, se: f64, target: f64) -> bool {
    (est - target).abs() <= 3.0 * se
}

fn oracle(seed: u64) -> Result<Vec<Check>> {
    let n = 20_000u64;
    let mut mid = Vec::with_capacity(n as usize);
    let mut span = Vec::with_capacity(n as usize);
    let mut cost_ok = true;
    let k = 16.0;
    for r in 0..n {
        let mut p = PathState::from_seed(seed, r);
        let w1 = p.value(1.0)?;
        let wm = p.value(0.5)?;
        cost_ok &= p.value(0.5)?.to_bits() == wm.to_bits() && p.cost() == 3;
        mid.push((wm - 0.5 * w1).powi(2));
        p.value(1.0 / k)?;
        span.push(p.span_time_integral(0.0, 1.0 / k)?.powi(2));
    }
    let (mv, mse) = mean_se(&mid);
    let (sv, sse) = mean_se(&span);
    let target = 1.0 / (12.0 * k * k * k);
    Ok(vec![
        check(Suite::Oracle, "bridge midpoint variance", within(mv, mse, 0.25), format!("{mv:.5} ± {mse:.5} (0.25)")),
        check(Suite::Oracle, "span integral variance", within(sv, sse, target), format!("{sv:.3e} ± {sse:.1e} ({target:.3e})")),
        check(Suite::Oracle, "repeat queries", cost_ok, "same value, one unit of cost per query".into()),
    ])
}

pub fn verify(suites: &[Suite], seed: u64, out: Option<&Path>) -> Result<bool> {
    let mut checks = Vec::new();
    for &suite in suites {
        checks.extend(match suite {
            Suite::Identities => identities(seed)?,
            Suite::Coupling => coupling(seed)?,
            Suite::Gaussian => gaussian(seed)?,
            Suite::Oracle => oracle(seed)?,
        });
    }
    if let Some(out) = out {
        write_json(out, "verify.json", &json!({ "seed": seed, "suites": suites, "checks": checks }))?;
    }
    Ok(checks.iter().all(|c| c.pass))
}
