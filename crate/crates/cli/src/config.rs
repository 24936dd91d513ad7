//! Versioned JSON experiment configs.

use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use sdelab::error_lab::{Approximation, ErrorMetric, ErrorPlan, MethodFamily, RateTarget, DEFAULT_REFERENCE_FACTOR};
use sdelab::method::{adaptive_demo, equidistant_wrapper, AdaptiveMethod};
use sdelab::model::{
    catalog, localize, CatalogName, CatalogParams, InitialValue, Interval, NestedIntervals, Poly2, PolyField, ReferenceKind,
    SdeSpec, TheoremId, Verdict, DEFAULT_GRID_SIZE,
};
use sdelab::schemes::SchemeId;

pub const CONFIG_VERSION: u32 = 1;

const PACKAGED: &[(&str, &str)] = &[
    ("cir_delta5_endpoint", include_str!("../configs/cir_delta5_endpoint.json")),
    ("quintic_all_metrics", include_str!("../configs/quintic_all_metrics.json")),
    ("classify_catalog", include_str!("../configs/classify_catalog.json")),
];

pub fn packaged_names() -> impl Iterator<Item = &'static str> {
    PACKAGED.iter().map(|(n, _)| *n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    pub spec: SpecConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classify: Option<ClassifyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<RatesConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelConfig {
    Catalog {
        catalog: CatalogName,
        #[serde(default)]
        params: CatalogParams,
    },
    /// Terms `[c, t_power, x_power]`.
    Poly {
        drift: Vec<(f64, u32, u32)>,
        diffusion: Vec<(f64, u32, u32)>,
        #[serde(default = "unit")]
        horizon: f64,
        initial: InitialValue,
    },
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecConfig {
    #[serde(flatten)]
    pub model: ModelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub localize: Option<NestedIntervals>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceKind>,
}

impl SpecConfig {
    pub fn build(&self) -> Result<SdeSpec> {
        let mut spec = match &self.model {
            ModelConfig::Catalog { catalog: name, params } => catalog(*name, params)?,
            ModelConfig::Poly { drift, diffusion, horizon, initial } => {
                let field = PolyField::new(Poly2::new(drift.clone()), Poly2::new(diffusion.clone()));
                SdeSpec::new("poly", Arc::new(field), *horizon, *initial)?
            }
        };
        if let Some(nest) = self.localize {
            spec = localize(&spec, nest)?;
        }
        if let Some(r) = self.reference {
            spec = spec.with_reference(r);
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyConfig {
    pub interval: Interval,
    #[serde(default)]
    pub t0: f64,
    #[serde(default = "all_theorems")]
    pub theorems: Vec<TheoremId>,
    #[serde(default = "default_grid")]
    pub grid_size: usize,
    /// Expected verdicts; a mismatch makes the run fail.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub expect: Vec<(TheoremId, Verdict)>,
}

fn all_theorems() -> Vec<TheoremId> {
    TheoremId::ALL.to_vec()
}

fn default_grid() -> usize {
    DEFAULT_GRID_SIZE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ApproximationConfig {
    Scheme {
        scheme: SchemeId,
        #[serde(default)]
        continuous: bool,
    },
    Equidistant {
        scheme: SchemeId,
    },
    AdaptiveDemo {
        region: Interval,
        #[serde(default = "two")]
        fine_factor: usize,
    },
}

fn two() -> usize {
    2
}

impl ApproximationConfig {
    pub fn build(&self, horizon: f64) -> Approximation {
        match *self {
            ApproximationConfig::Scheme { scheme, continuous: false } => Approximation::scheme(scheme),
            ApproximationConfig::Scheme { scheme, continuous: true } => Approximation::continuous(scheme),
            ApproximationConfig::Equidistant { scheme } => {
                let family = (format!("equidistant[{scheme}]"), move |n: usize| {
                    Ok(Box::new(equidistant_wrapper(n, scheme, horizon)?) as Box<dyn AdaptiveMethod>)
                });
                Approximation::Method(Arc::new(family) as Arc<dyn MethodFamily>)
            }
            ApproximationConfig::AdaptiveDemo { region, fine_factor } => {
                let family = (format!("adaptive_demo[{region}, m={fine_factor}]"), move |n: usize| {
                    Ok(Box::new(adaptive_demo(n, region, fine_factor, horizon)?) as Box<dyn AdaptiveMethod>)
                });
                Approximation::Method(Arc::new(family) as Arc<dyn MethodFamily>)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    /// Index into `approximations`.
    pub approximation: usize,
    pub metric: ErrorMetric,
    pub exponent: f64,
    pub band: (f64, f64),
    #[serde(default)]
    pub log_factor: bool,
    #[serde(default)]
    pub source: String,
}

impl TargetConfig {
    pub fn target(&self) -> RateTarget {
        let t = RateTarget::new(self.exponent, self.band, self.source.clone());
        if self.log_factor {
            t.with_log_factor()
        } else {
            t
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesConfig {
    pub approximations: Vec<ApproximationConfig>,
    pub metrics: Vec<ErrorMetric>,
    pub ns: Vec<usize>,
    pub replications: usize,
    #[serde(default = "default_factor")]
    pub reference_factor: usize,
    #[serde(default)]
    pub targets: Vec<TargetConfig>,
}

fn default_factor() -> usize {
    DEFAULT_REFERENCE_FACTOR
}

impl RatesConfig {
    pub fn plan(&self, spec: SdeSpec, seed: u64) -> Result<ErrorPlan> {
        let horizon = spec.horizon;
        let approximations = self.approximations.iter().map(|a| a.build(horizon)).collect();
        let mut plan = ErrorPlan::new(spec, approximations, self.metrics.clone(), self.ns.clone(), self.replications, seed);
        plan.reference_factor = self.reference_factor;
        plan.validate()?;
        for t in &self.targets {
            if t.approximation >= self.approximations.len() {
                bail!("target refers to approximation {} but only {} are listed", t.approximation, self.approximations.len());
            }
            if !self.metrics.contains(&t.metric) {
                bail!("target metric {} is not among the measured metrics", t.metric);
            }
        }
        Ok(plan)
    }
}

impl Config {
    pub fn parse(text: &str, origin: &str) -> Result<Config> {
        let config: Config = serde_json::from_str(text).map_err(|e| {
            anyhow::anyhow!("{origin}:{}:{}: {e}", e.line(), e.column())
        })?;
        if config.version != CONFIG_VERSION {
            bail!("{origin}: config version {} is not supported (expected {CONFIG_VERSION})", config.version);
        }
        Ok(config)
    }

    /// A file path, or the name of a packaged config.
    pub fn load(source: &str) -> Result<Config> {
        let path = Path::new(source);
        if path.exists() {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {source}"))?;
            return Config::parse(&text, source);
        }
        match PACKAGED.iter().find(|(n, _)| *n == source) {
            Some((name, text)) => Config::parse(text, name),
            None => bail!(
                "{source}: no such file and no packaged config of that name (packaged: {})",
                packaged_names().collect::<Vec<_>>().join(", ")
            ),
        }
    }
}
