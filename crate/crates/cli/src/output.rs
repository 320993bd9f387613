//! Output files and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use spatial_match::engines::{CostReport, SimConfig};
use spatial_match::experiments::{CapacityPlan, SweepPoint};

pub const SCHEMA_VERSION: u32 = 1;

/// Everything needed to rerun an output directory.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config_sha256: String,
    pub config: Value,
    pub seed: u64,
    pub version: &'static str,
    pub started_at: String,
    pub finished_at: String,
    pub outputs: Vec<PathBuf>,
}

/// JSON with object keys sorted and no whitespace.
pub fn canonical_json(v: &Value) -> String {
    fn sorted(v: &Value) -> Value {
        match v {
            Value::Object(map) => {
                let mut keys: Vec<&String> = map.keys().collect();
                keys.sort();
                Value::Object(keys.into_iter().map(|k| (k.clone(), sorted(&map[k]))).collect())
            }
            Value::Array(xs) => Value::Array(xs.iter().map(sorted).collect()),
            other => other.clone(),
        }
    }
    serde_json::to_string(&sorted(v)).expect("values serialize")
}

pub fn config_hash(config: &Value) -> String {
    hex::encode(Sha256::digest(canonical_json(config).as_bytes()))
}

pub struct OutDir {
    root: PathBuf,
    written: Vec<PathBuf>,
}

impl OutDir {
    pub fn create(root: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(OutDir {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.root.join(name);
        self.written.push(PathBuf::from(name));
        p
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> anyhow::Result<()> {
        let p = self.path(name);
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(&p, text).with_context(|| format!("writing {}", p.display()))
    }

    pub fn csv(&mut self, name: &str) -> anyhow::Result<csv::Writer<fs::File>> {
        let p = self.path(name);
        csv::Writer::from_path(&p).with_context(|| format!("writing {}", p.display()))
    }

    pub fn finish(mut self, mut manifest: RunManifest) -> anyhow::Result<()> {
        manifest.outputs = std::mem::take(&mut self.written);
        manifest.outputs.push(PathBuf::from("manifest.json"));
        let p = self.root.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        fs::write(&p, text).with_context(|| format!("writing {}", p.display()))
    }
}

/// Report without the per-period samples, which go to `periods.csv`.
pub fn trimmed(report: &CostReport) -> CostReport {
    CostReport {
        raw_samples: None,
        ..report.clone()
    }
}

pub fn simulate_summary(config: &SimConfig, report: &CostReport) -> Value {
    serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "kind": "simulate",
        "config": config,
        "report": trimmed(report),
    })
}

pub fn sweep_summary(config: &SimConfig, param: &str, points: &[SweepPoint], fit: &Value) -> Value {
    let points: Vec<Value> = points
        .iter()
        .map(|p| {
            serde_json::json!({
                "value": p.value,
                "config": p.config,
                "report": trimmed(&p.report),
            })
        })
        .collect();
    serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "kind": "sweep",
        "config": config,
        "scale_param": param,
        "points": points,
        "fit": fit,
    })
}

pub fn plan_summary(config: &SimConfig, plan: &CapacityPlan) -> Value {
    serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "kind": "plan",
        "config": config,
        "plan": plan,
        "fit": plan.fit,
    })
}

pub fn write_periods(w: &mut csv::Writer<fs::File>, report: &CostReport) -> anyhow::Result<()> {
    w.write_record(["replication", "sample", "distance"])?;
    for (rep, samples) in report.raw_samples.iter().flatten().enumerate() {
        for (t, x) in samples.iter().enumerate() {
            w.write_record([rep.to_string(), t.to_string(), x.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep(w: &mut csv::Writer<fs::File>, param: &str, points: &[SweepPoint]) -> anyhow::Result<()> {
    w.write_record(["scale_param", "value", "mean_cost", "stderr", "per_level_json"])?;
    for p in points {
        let stderr = p.report.stderr.map(|s| s.to_string()).unwrap_or_default();
        w.write_record([
            param.to_string(),
            p.value.to_string(),
            p.report.mean_cost.to_string(),
            stderr,
            serde_json::to_string(&p.report.per_level)?,
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_plan(w: &mut csv::Writer<fs::File>, plan: &CapacityPlan) -> anyhow::Result<()> {
    w.write_record(["n", "m", "match_cost", "total", "stderr", "m_star", "at_boundary"])?;
    for row in &plan.rows {
        for c in &row.curve {
            w.write_record([
                row.n.to_string(),
                c.m.to_string(),
                c.match_cost.to_string(),
                c.total.to_string(),
                c.stderr.map(|s| s.to_string()).unwrap_or_default(),
                row.m_star.to_string(),
                row.at_boundary.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_key_order() {
        let a: Value = serde_json::from_str(r#"{"b": 1, "a": [1, 2]}"#).unwrap();
        let b: Value = serde_json::from_str(r#"{"a": [1, 2], "b": 1}"#).unwrap();
        assert_eq!(config_hash(&a), config_hash(&b));
        assert_ne!(config_hash(&a), config_hash(&serde_json::json!({"b": 2, "a": [1, 2]})));
    }
}
