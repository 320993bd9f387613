//! TOML run description: a `[run]` section, optional per-model sections
//! (`[static]`, `[semi_dynamic]`, `[fully_dynamic]`, `[capacity]`) that
//! apply when that model is selected, and `[sweep]` / `[plan]` grids.
//! Command-line flags override file values.

use std::path::Path;

use anyhow::{anyhow, bail, Context};
use serde::{Deserialize, Serialize};

use spatial_match::engines::{Model, SimConfig};
use spatial_match::experiments::{SweepParam, SweepSpec};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fields {
    pub model: Option<String>,
    pub d: Option<usize>,
    #[serde(rename = "N")]
    pub horizon: Option<u64>,
    #[serde(rename = "M")]
    pub excess: Option<u64>,
    pub m: Option<u64>,
    pub n: Option<u64>,
    pub policy: Option<String>,
    pub in_leaf: Option<String>,
    pub init: Option<String>,
    pub norm: Option<String>,
    pub seed: Option<u64>,
    pub reps: Option<u32>,
    pub warmup: Option<u64>,
    pub beta: Option<f64>,
    pub l0: Option<u32>,
    pub audit: Option<bool>,
    pub exact_cap: Option<usize>,
}

macro_rules! overlay {
    ($dst:expr, $src:expr, $($f:ident),*) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl Fields {
    pub fn overlay(&mut self, other: &Fields) {
        overlay!(
            self, other, model, d, horizon, excess, m, n, policy, in_leaf, init, norm, seed,
            reps, warmup, beta, l0, audit, exact_cap
        );
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub param: String,
    pub values: Option<Vec<u64>>,
    /// Inclusive exponent range `[lo, hi]`, expanded to `2^lo ..= 2^hi`.
    pub powers_of_two: Option<[u32; 2]>,
    pub excess_per_horizon: Option<f64>,
    pub horizon_per_free: Option<u64>,
}

/// Capacity planning grid. For each load `n` the free-supply grid spans
/// `[max(lo * g, 4), hi * g]` with `g = n^{d/(d+1)}`, `points` values spaced
/// geometrically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSection {
    pub n: Option<Vec<u64>>,
    pub n_powers_of_two: Option<[u32; 2]>,
    #[serde(default = "default_lo")]
    pub lo: f64,
    #[serde(default = "default_hi")]
    pub hi: f64,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_horizon_per_free")]
    pub horizon_per_free: u64,
}

fn default_lo() -> f64 {
    0.125
}
fn default_hi() -> f64 {
    2.0
}
fn default_points() -> usize {
    25
}
fn default_horizon_per_free() -> u64 {
    200
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub run: Fields,
    #[serde(rename = "static")]
    pub static_model: Option<Fields>,
    pub semi_dynamic: Option<Fields>,
    pub fully_dynamic: Option<Fields>,
    pub capacity: Option<Fields>,
    pub sweep: Option<SweepSection>,
    pub plan: Option<PlanSection>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    fn section(&self, model: Model) -> Option<&Fields> {
        match model {
            Model::Static => self.static_model.as_ref(),
            Model::SemiDynamic => self.semi_dynamic.as_ref(),
            Model::FullyDynamic => self.fully_dynamic.as_ref(),
            Model::Capacity => self.capacity.as_ref(),
        }
    }

    /// `[run]`, then the selected model's section, then `flags`.
    pub fn resolve(&self, flags: &Fields) -> anyhow::Result<SimConfig> {
        let model = self.model(flags)?;
        to_sim_config(model, &self.merged(model, flags), false)
    }

    /// As [`ConfigFile::resolve`] but `N` may be left out when the grid
    /// sets it (a sweep over `N`, `horizon_per_free`, or a plan).
    pub fn resolve_base(&self, flags: &Fields) -> anyhow::Result<SimConfig> {
        let model = self.model(flags)?;
        let grid_sets_horizon = self.plan.is_some()
            || self
                .sweep
                .as_ref()
                .is_some_and(|s| s.param == "N" || s.horizon_per_free.is_some());
        to_sim_config(model, &self.merged(model, flags), grid_sets_horizon)
    }

    fn model(&self, flags: &Fields) -> anyhow::Result<Model> {
        let mut merged = self.run.clone();
        merged.overlay(flags);
        let model: Model = merged
            .model
            .as_deref()
            .ok_or_else(|| anyhow!("missing required field `model`"))?
            .parse()?;
        Ok(model)
    }

    fn merged(&self, model: Model, flags: &Fields) -> Fields {
        let mut fields = self.run.clone();
        if let Some(section) = self.section(model) {
            fields.overlay(section);
        }
        fields.overlay(flags);
        fields
    }
}

fn to_sim_config(model: Model, f: &Fields, horizon_optional: bool) -> anyhow::Result<SimConfig> {
    let mut cfg = SimConfig {
        model,
        ..SimConfig::default()
    };
    cfg.d = f.d.ok_or_else(|| anyhow!("missing required field `d`"))?;
    match f.horizon {
        Some(n) => cfg.horizon = n,
        None if horizon_optional => {}
        None => bail!("missing required field `N`"),
    }
    if let Some(v) = f.excess {
        cfg.excess = v;
    }
    cfg.free_supply = f.m;
    cfg.load = f.n;
    if let Some(s) = &f.policy {
        cfg.policy = s.parse()?;
    }
    if let Some(s) = &f.in_leaf {
        cfg.in_leaf = s.parse()?;
    }
    if let Some(s) = &f.init {
        cfg.init = s.parse()?;
    }
    if let Some(s) = &f.norm {
        cfg.norm = s.parse()?;
    }
    if let Some(v) = f.seed {
        cfg.seed = v;
    }
    if let Some(v) = f.reps {
        cfg.replications = v;
    }
    cfg.warmup = f.warmup;
    cfg.beta = f.beta;
    cfg.depth = f.l0;
    if let Some(v) = f.audit {
        cfg.audit = v;
    }
    if let Some(v) = f.exact_cap {
        cfg.exact_cap = v;
    }
    Ok(cfg)
}

fn expand(values: &Option<Vec<u64>>, powers: &Option<[u32; 2]>, what: &str) -> anyhow::Result<Vec<u64>> {
    let v = match (values, powers) {
        (Some(v), None) => v.clone(),
        (None, Some([lo, hi])) => (*lo..=*hi).map(|k| 1u64 << k).collect(),
        (Some(_), Some(_)) => bail!("give either values or powers_of_two for {what}, not both"),
        (None, None) => bail!("missing grid for {what}"),
    };
    if v.is_empty() {
        bail!("empty grid for {what}");
    }
    Ok(v)
}

impl SweepSection {
    pub fn spec(&self) -> anyhow::Result<SweepSpec> {
        let param: SweepParam = self.param.parse()?;
        let mut spec = SweepSpec::new(param, expand(&self.values, &self.powers_of_two, "sweep")?);
        spec.excess_per_horizon = self.excess_per_horizon;
        spec.horizon_per_free = self.horizon_per_free;
        Ok(spec)
    }
}

impl PlanSection {
    pub fn n_grid(&self) -> anyhow::Result<Vec<u64>> {
        expand(&self.n, &self.n_powers_of_two, "plan")
    }
}
