//! Experiment configuration: a flat `key = value` file, overridable from
//! the command line. Unknown keys are rejected.
//!
//! ```text
//! # comments start with '#'
//! preset = custom
//! resolution = 256
//! eps_list = 0.2, 0.1, 0.05, 0.025, 0.0125
//! seed = 7
//! output_dir = runs/custom
//! cost = quadratic            # custom preset only: cost, mean0, sd0, mean1, sd1
//! sd1 = 0.5
//! tolerance.entropy_slope = 0.05
//! ```

use std::collections::BTreeMap;
use std::path::PathBuf;

use eotlab_core::rates::{validate_eps_list, CustomSpec, Preset};
use eotlab_core::tolerances::ToleranceTable;
use serde::Serialize;

pub const MIN_RESOLUTION: usize = 64;
pub const MAX_RESOLUTION: usize = 4096;

const CUSTOM_KEYS: [&str; 5] = ["cost", "mean0", "sd0", "mean1", "sd1"];

/// Raw settings before preset defaults are applied.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    pub preset: Option<String>,
    pub resolution: Option<usize>,
    pub eps_list: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub custom: BTreeMap<String, String>,
    pub tolerance_overrides: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub preset: Preset,
    /// per-axis cells (total nodes for gaussian2d); ignored by discrete2x2
    pub resolution: usize,
    pub eps_list: Vec<f64>,
    pub seed: u64,
    pub tolerance_overrides: BTreeMap<String, f64>,
    pub output_dir: PathBuf,
    pub custom: Option<CustomSpec>,
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("{key}: cannot parse '{v}'"))
}

pub fn parse_eps_list(v: &str) -> Result<Vec<f64>, String> {
    v.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| parse_num("eps_list", s))
        .collect()
}

/// Parses the flat config format. Duplicate and unknown keys are errors.
pub fn parse_settings(text: &str) -> Result<Settings, String> {
    let mut s = Settings::default();
    let mut seen = std::collections::HashSet::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected 'key = value'", no + 1))?;
        let (key, value) = (key.trim(), value.trim());
        if !seen.insert(key.to_string()) {
            return Err(format!("line {}: duplicate key '{key}'", no + 1));
        }
        let at = |e: String| format!("line {}: {e}", no + 1);
        match key {
            "preset" => s.preset = Some(value.to_string()),
            "resolution" => s.resolution = Some(parse_num(key, value).map_err(at)?),
            "eps_list" => s.eps_list = Some(parse_eps_list(value).map_err(at)?),
            "seed" => s.seed = Some(parse_num(key, value).map_err(at)?),
            "output_dir" => s.output_dir = Some(PathBuf::from(value)),
            k if CUSTOM_KEYS.contains(&k) => {
                s.custom.insert(k.to_string(), value.to_string());
            }
            k => match k.strip_prefix("tolerance.") {
                Some(name) if ToleranceTable::NAMES.contains(&name) => {
                    s.tolerance_overrides
                        .insert(name.to_string(), parse_num(key, value).map_err(at)?);
                }
                Some(name) => return Err(at(format!("unknown tolerance '{name}'"))),
                None => return Err(at(format!("unknown key '{k}'"))),
            },
        }
    }
    Ok(s)
}

impl Settings {
    /// Fields set in `other` replace those in `self`.
    pub fn overlay(mut self, other: Settings) -> Settings {
        self.preset = other.preset.or(self.preset);
        self.resolution = other.resolution.or(self.resolution);
        self.eps_list = other.eps_list.or(self.eps_list);
        self.seed = other.seed.or(self.seed);
        self.output_dir = other.output_dir.or(self.output_dir);
        self.custom.extend(other.custom);
        self.tolerance_overrides.extend(other.tolerance_overrides);
        self
    }

    pub fn resolve(self) -> Result<ExperimentConfig, String> {
        let name = self
            .preset
            .ok_or("no preset given (use --preset or a 'preset' key)")?;
        let preset = Preset::from_name(&name).map_err(|e| e.to_string())?;
        let resolution = if preset == Preset::Discrete2x2 {
            preset.default_resolution()
        } else {
            let r = self.resolution.unwrap_or(preset.default_resolution());
            if !r.is_power_of_two() || !(MIN_RESOLUTION..=MAX_RESOLUTION).contains(&r) {
                return Err(format!(
                    "resolution {r} must be a power of two between {MIN_RESOLUTION} and {MAX_RESOLUTION}"
                ));
            }
            r
        };
        let eps_list = self.eps_list.unwrap_or_else(|| preset.default_eps());
        validate_eps_list(&eps_list).map_err(|e| e.to_string())?;
        let mut table = ToleranceTable::default();
        for (k, v) in &self.tolerance_overrides {
            table.set(k, *v).map_err(|e| e.to_string())?;
        }
        let custom = if preset == Preset::Custom {
            Some(custom_spec(&self.custom)?)
        } else if let Some(k) = self.custom.keys().next() {
            return Err(format!("'{k}' only applies to the custom preset"));
        } else {
            None
        };
        Ok(ExperimentConfig {
            preset,
            resolution,
            eps_list,
            seed: self.seed.unwrap_or(0),
            tolerance_overrides: self.tolerance_overrides,
            output_dir: self
                .output_dir
                .unwrap_or_else(|| PathBuf::from("eotlab-out").join(preset.name())),
            custom,
        })
    }
}

fn custom_spec(kv: &BTreeMap<String, String>) -> Result<CustomSpec, String> {
    let mut spec = CustomSpec::default();
    for (k, v) in kv {
        match k.as_str() {
            "cost" => spec.cost = v.clone(),
            "mean0" => spec.mean0 = parse_num(k, v)?,
            "sd0" => spec.sd0 = parse_num(k, v)?,
            "mean1" => spec.mean1 = parse_num(k, v)?,
            "sd1" => spec.sd1 = parse_num(k, v)?,
            _ => unreachable!("custom keys are filtered while parsing"),
        }
    }
    Ok(spec)
}

impl ExperimentConfig {
    pub fn tolerances(&self) -> ToleranceTable {
        let mut t = ToleranceTable::default();
        for (k, v) in &self.tolerance_overrides {
            t.set(k, *v).expect("overrides are validated in resolve");
        }
        t
    }
}
