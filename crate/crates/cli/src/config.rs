//! Scenario configuration: a TOML file with flat key=value entries grouped
//! in sections, every key overridable on the command line with repeated
//! `--set section.key=value` flags. The schema is closed: unknown keys are
//! rejected with the offending key named.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;

use nlos_explore::explore::{ExploreParams, Mode, PredictorSpec};
use nlos_explore::grid::{GridKind, OccupancyGrid, Pose};
use nlos_explore::mapgen::{generate, suggested_start, MapGenParams, MapKind};
use nlos_explore::spad::SensorConfig;

/// One line per config key, shown under `--help` for every subcommand that
/// accepts a config file.
pub const CONFIG_KEY_HELP: &str = "\
Configuration keys (TOML file via --config, each overridable with --set KEY=VALUE):
  map.path             PGM ground-truth map to load (overrides the generator)
  map.kind             generator kind: corridor|L_deadend|rooms|maze (default L_deadend)
  map.width            generated map width, cells (default 60)
  map.height           generated map height, cells (default 40)
  map.corridor_width   corridor width, cells (default 4)
  map.n_rooms          number of rooms for kind=rooms (default 4)
  map.seed             generator seed (default 0)
  sensor.n_primary     primary rays per scan (default 2500)
  sensor.m_secondary   secondary fan rays per primary hit (default 181)
  sensor.max_range     sensor range, meters (default 20.0)
  sensor.pulse_energy  per-ray pulse energy, joules (default 1e-9)
  sensor.wavelength    laser wavelength, meters (default 532e-9)
  sensor.efficiency    detector efficiency in (0,1] (default 0.2)
  sensor.reflectance   surface reflectance in (0,1] (default 0.5)
  sensor.bin_width     histogram bin width, seconds (default 0.1m of path per bin)
  sensor.n_bins        histogram bins (default 800)
  sensor.record_secondary  keep per-deposit geometry in scans (default false)
  explore.mode         los|nlos|nearest_frontier (default nlos)
  explore.steps        step budget (default 1000)
  explore.gap          peak separation gap, bins (default 3)
  explore.filter_percentile  evidence filter percentile (default 97.0)
  explore.radii        builtin-predictor closing radii (default [1, 2, 3])
  explore.min_frontier_size  smallest frontier cluster targeted (default 5)
  explore.lambda       distance penalty per path cell (default 1.0)
  explore.replan_interval    forced replan period, steps (default 20)
  explore.snapshot_interval  PNG snapshot period, steps; 0 disables (default 0)
  explore.start        start poses, list of [x, y] cell coordinates
                       (default: an automatically chosen free cell)
  predictor.kind       builtin|external (default builtin)
  predictor.command    external predictor executable (required for external)
  predictor.k          external ensemble size (default 3)
  predictor.timeout_s  external predictor timeout, seconds (default 60)
  output.dir           output directory (default \"out\")";

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub map: MapSection,
    #[serde(default)]
    pub sensor: SensorSection,
    #[serde(default)]
    pub explore: ExploreSection,
    #[serde(default)]
    pub predictor: PredictorSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSection {
    pub path: Option<PathBuf>,
    pub kind: Option<String>,
    pub width: Option<usize>,
    pub height: Option<usize>,
    pub corridor_width: Option<usize>,
    pub n_rooms: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSection {
    pub n_primary: Option<usize>,
    pub m_secondary: Option<usize>,
    pub max_range: Option<f64>,
    pub pulse_energy: Option<f64>,
    pub wavelength: Option<f64>,
    pub efficiency: Option<f64>,
    pub reflectance: Option<f64>,
    pub bin_width: Option<f64>,
    pub n_bins: Option<usize>,
    pub record_secondary: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExploreSection {
    pub mode: Option<String>,
    pub steps: Option<usize>,
    pub gap: Option<usize>,
    pub filter_percentile: Option<f64>,
    pub radii: Option<Vec<i32>>,
    pub min_frontier_size: Option<usize>,
    pub lambda: Option<f64>,
    pub replan_interval: Option<usize>,
    pub snapshot_interval: Option<usize>,
    pub start: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictorSection {
    pub kind: Option<String>,
    pub command: Option<String>,
    pub k: Option<usize>,
    pub timeout_s: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

/// Load the config file (all defaults when absent) and apply `--set`
/// overrides, then validate against the closed schema.
pub fn load(path: Option<&Path>, sets: &[String]) -> Result<Config, String> {
    let mut table: toml::Table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| format!("cannot read config {}: {e}", p.display()))?;
            text.parse()
                .map_err(|e| format!("config {}: {e}", p.display()))?
        }
        None => toml::Table::new(),
    };
    for set in sets {
        let (key, raw) = set
            .split_once('=')
            .ok_or_else(|| format!("--set {set:?}: expected KEY=VALUE"))?;
        let value = parse_toml_value(raw);
        let mut parts = key.split('.').collect::<Vec<_>>();
        if parts.len() != 2 {
            return Err(format!(
                "--set key {key:?} must be section.key (e.g. explore.steps)"
            ));
        }
        let leaf = parts.pop().unwrap();
        let section = parts[0];
        let entry = table
            .entry(section.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        match entry.as_table_mut() {
            Some(t) => {
                t.insert(leaf.to_string(), value);
            }
            None => return Err(format!("config section {section:?} is not a table")),
        }
    }
    Config::deserialize(toml::Value::Table(table)).map_err(|e| format!("config: {e}"))
}

/// Parse an override value with TOML semantics, falling back to a string.
fn parse_toml_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    if let Ok(t) = doc.parse::<toml::Table>() {
        if let Some(v) = t.get("v") {
            return v.clone();
        }
    }
    toml::Value::String(raw.to_string())
}

impl Config {
    pub fn sensor(&self) -> Result<SensorConfig, String> {
        let d = SensorConfig::default();
        let s = &self.sensor;
        let cfg = SensorConfig {
            n_primary: s.n_primary.unwrap_or(d.n_primary),
            m_secondary: s.m_secondary.unwrap_or(d.m_secondary),
            max_range: s.max_range.unwrap_or(d.max_range),
            pulse_energy: s.pulse_energy.unwrap_or(d.pulse_energy),
            wavelength: s.wavelength.unwrap_or(d.wavelength),
            efficiency: s.efficiency.unwrap_or(d.efficiency),
            reflectance: s.reflectance.unwrap_or(d.reflectance),
            bin_width: s.bin_width.unwrap_or(d.bin_width),
            n_bins: s.n_bins.unwrap_or(d.n_bins),
            record_secondary: s.record_secondary.unwrap_or(d.record_secondary),
        };
        cfg.validate().map_err(|e| format!("sensor: {e}"))?;
        Ok(cfg)
    }

    pub fn map(&self) -> Result<OccupancyGrid, String> {
        let m = &self.map;
        if let Some(path) = &m.path {
            return OccupancyGrid::load(path, GridKind::GroundTruth)
                .map_err(|e| format!("map.path {}: {e}", path.display()));
        }
        let kind: MapKind = m
            .kind
            .as_deref()
            .unwrap_or("L_deadend")
            .parse()
            .map_err(|e| format!("map.kind: {e}"))?;
        let d = MapGenParams::default();
        let params = MapGenParams {
            width: m.width.unwrap_or(d.width),
            height: m.height.unwrap_or(d.height),
            corridor_width: m.corridor_width.unwrap_or(d.corridor_width),
            n_rooms: m.n_rooms.unwrap_or(d.n_rooms),
            seed: m.seed.unwrap_or(d.seed),
        };
        generate(kind, &params).map_err(|e| format!("map: {e}"))
    }

    pub fn predictor(&self) -> Result<PredictorSpec, String> {
        match self.predictor.kind.as_deref().unwrap_or("builtin") {
            "builtin" => Ok(PredictorSpec::Builtin),
            "external" => {
                let command = self
                    .predictor
                    .command
                    .clone()
                    .ok_or("predictor.command is required when predictor.kind = \"external\"")?;
                Ok(PredictorSpec::External {
                    command,
                    k: self.predictor.k.unwrap_or(3),
                    timeout: Duration::from_secs_f64(self.predictor.timeout_s.unwrap_or(60.0)),
                })
            }
            other => Err(format!(
                "predictor.kind: unknown kind {other:?} (expected builtin|external)"
            )),
        }
    }

    pub fn explore_params(&self) -> Result<ExploreParams, String> {
        let e = &self.explore;
        let d = ExploreParams::default();
        let mode: Mode = e
            .mode
            .as_deref()
            .map(str::parse)
            .transpose()
            .map_err(|err| format!("explore.mode: {err}"))?
            .unwrap_or(d.mode);
        let radii = e.radii.clone().unwrap_or(d.radii);
        if radii.is_empty() || radii.iter().any(|&r| r < 0) {
            return Err("explore.radii must be non-empty and non-negative".into());
        }
        Ok(ExploreParams {
            mode,
            steps: e.steps.unwrap_or(d.steps),
            gap: e.gap.unwrap_or(d.gap),
            filter_percentile: e.filter_percentile.unwrap_or(d.filter_percentile),
            radii,
            min_frontier_size: e.min_frontier_size.unwrap_or(d.min_frontier_size),
            lambda: e.lambda.unwrap_or(d.lambda),
            replan_interval: e.replan_interval.unwrap_or(d.replan_interval),
            record_maps: false,
            predictor: self.predictor()?,
            snapshot_interval: e.snapshot_interval.unwrap_or(0),
            snapshot_dir: None,
        })
    }

    /// Configured start poses, or the map's suggested start when unset.
    pub fn start_poses(&self, gt: &OccupancyGrid) -> Vec<Pose> {
        match &self.explore.start {
            Some(list) if !list.is_empty() => {
                list.iter().map(|&[x, y]| Pose::new(x, y)).collect()
            }
            _ => vec![Pose::at_cell(suggested_start(gt))],
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output.dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}
