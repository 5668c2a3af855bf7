//! Declarative scenarios and parameter sweeps.
//!
//! A scenario is a TOML document naming a model, an integrator setup and a
//! list of observables; running it yields one table row per sample time. A
//! sweep wraps a base scenario with axes of parameter values and reduces each
//! point's time series to steady-state records.

use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Deserialize;
use thiserror::Error;

use crate::correlations::{
    discord_two_qubit_with, mutual_information_in, negativity, partial_trace, purity, Bipartition, DiscordOptions, LogBase,
};
use crate::error::{CorrelationError, DynamicsError, ModelError};
use crate::lindblad::{evolve_observed, IntegrationStats, IntegratorConfig, LindbladGenerator};
use crate::models::{
    build_bacteria_model, build_tardigrade_model, BacteriaModelParams, NoiseChannels, TardigradeModelParams, TimeUnit,
};
use crate::tensorspace::{ground_state, CompositeSpace, DensityMatrix};

/// Config schema understood by this build.
pub const SCHEMA_VERSION: u32 = 1;

/// Columns present in every time-series table ahead of the observables.
pub const FIXED_COLUMNS: [&str; 4] = ["t", "re_trace", "im_trace", "purity"];

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read `{path}`: {source}")]
    ReadConfig {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Correlation(#[from] CorrelationError),
    #[error("cannot write `{path}`: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl ScenarioError {
    /// True for problems with the configuration itself, as opposed to
    /// failures while running it.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            ScenarioError::ReadConfig { .. } | ScenarioError::Parse(_) | ScenarioError::Config(_) | ScenarioError::Model(_)
        )
    }
}

fn config_err(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Config(msg.into())
}

fn read_file(path: &Path) -> Result<String, ScenarioError> {
    std::fs::read_to_string(path).map_err(|source| ScenarioError::ReadConfig {
        path: path.to_path_buf(),
        source,
    })
}

fn check_schema(version: u32) -> Result<(), ScenarioError> {
    if version == SCHEMA_VERSION {
        Ok(())
    } else {
        Err(config_err(format!("schema_version {version} is not supported (expected {SCHEMA_VERSION})")))
    }
}

/// Model selection; the remaining keys of the `[model]` table are the
/// parameters of the chosen model.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Bacteria(BacteriaModelParams),
    Tardigrade(TardigradeModelParams),
}

impl ModelSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelSpec::Bacteria(_) => "bacteria",
            ModelSpec::Tardigrade(_) => "tardigrade",
        }
    }

    pub fn time_unit(&self) -> TimeUnit {
        match self {
            ModelSpec::Bacteria(_) => BacteriaModelParams::TIME_UNIT,
            ModelSpec::Tardigrade(_) => TardigradeModelParams::TIME_UNIT,
        }
    }

    pub fn noise_channels(&self) -> NoiseChannels {
        match self {
            ModelSpec::Bacteria(p) => p.noise_channels,
            ModelSpec::Tardigrade(p) => p.noise_channels,
        }
    }

    pub fn set_noise_channels(&mut self, channels: NoiseChannels) {
        match self {
            ModelSpec::Bacteria(p) => p.noise_channels = channels,
            ModelSpec::Tardigrade(p) => p.noise_channels = channels,
        }
    }

    pub fn space(&self) -> Result<CompositeSpace, ModelError> {
        match self {
            ModelSpec::Bacteria(p) => {
                p.validate()?;
                p.space()
            }
            ModelSpec::Tardigrade(p) => {
                p.validate()?;
                p.space()
            }
        }
    }

    pub fn build(&self) -> Result<(CompositeSpace, LindbladGenerator), ModelError> {
        match self {
            ModelSpec::Bacteria(p) => build_bacteria_model(p),
            ModelSpec::Tardigrade(p) => build_tardigrade_model(p),
        }
    }
}

/// One observable column. Subsystems are referred to by label.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObservableSpec {
    /// Purity of the reduced state on `subsystems` (all when empty).
    Purity {
        #[serde(default)]
        subsystems: Vec<String>,
        name: Option<String>,
    },
    /// `|Tr ρ - 1|`.
    Trace { name: Option<String> },
    /// Negativity across `side_a | side_b`; `side_b` defaults to the rest.
    Negativity {
        side_a: Vec<String>,
        #[serde(default)]
        side_b: Vec<String>,
        name: Option<String>,
    },
    /// Discord of the two-qubit reduced state on `pair`, measuring `measured`.
    Discord {
        pair: [String; 2],
        measured: String,
        name: Option<String>,
    },
    MutualInformation {
        side_a: Vec<String>,
        #[serde(default)]
        side_b: Vec<String>,
        name: Option<String>,
    },
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub name: Option<String>,
    /// CSV destination; standard output when absent.
    #[serde(default)]
    pub output: Option<PathBuf>,
    pub model: ModelSpec,
    /// Overrides the model's own `noise_channels`.
    #[serde(default)]
    pub noise_channels: Option<NoiseChannels>,
    /// Times are in the model's unit (fs for bacteria, ns for tardigrade).
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub log_base: LogBase,
    pub observables: Vec<ObservableSpec>,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        check_schema(cfg.schema_version)?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        Self::from_toml_str(&read_file(path)?).map_err(|e| prefix_path(path, e))
    }

    /// The model with the `noise_channels` override applied.
    pub fn effective_model(&self) -> ModelSpec {
        let mut m = self.model.clone();
        if let Some(c) = self.noise_channels {
            m.set_noise_channels(c);
        }
        m
    }

    /// Checks everything short of assembling the generator.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        check_schema(self.schema_version)?;
        self.integrator
            .validate()
            .map_err(|e| config_err(format!("[integrator]: {e}")))?;
        let space = self.effective_model().space()?;
        resolve_observables(&space, &self.observables, self.log_base)?;
        Ok(())
    }
}

fn prefix_path(path: &Path, e: ScenarioError) -> ScenarioError {
    match e {
        ScenarioError::Parse(m) => ScenarioError::Parse(format!("{}: {m}", path.display())),
        ScenarioError::Config(m) => ScenarioError::Config(format!("{}: {m}", path.display())),
        other => other,
    }
}

#[derive(Clone, Debug)]
enum Probe {
    Purity(Option<Vec<usize>>),
    TraceError,
    Negativity(Bipartition),
    Discord { pair: [usize; 2], measured_side: usize, opts: DiscordOptions },
    MutualInformation(Bipartition, LogBase),
}

/// An observable resolved against a concrete space.
#[derive(Clone, Debug)]
pub struct Observable {
    name: String,
    probe: Probe,
}

impl Observable {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn evaluate(&self, rho: &DensityMatrix) -> Result<f64, CorrelationError> {
        match &self.probe {
            Probe::Purity(None) => Ok(purity(rho)),
            Probe::Purity(Some(keep)) => Ok(purity(&partial_trace(rho, keep)?)),
            Probe::TraceError => Ok((rho.trace() - 1.0).norm()),
            Probe::Negativity(part) => negativity(rho, part),
            Probe::Discord { pair, measured_side, opts } => {
                discord_two_qubit_with(&partial_trace(rho, pair)?, *measured_side, opts)
            }
            Probe::MutualInformation(part, base) => mutual_information_in(rho, part, *base),
        }
    }
}

fn lookup(space: &CompositeSpace, label: &str) -> Result<usize, ScenarioError> {
    space.index_of(label).ok_or_else(|| {
        let known: Vec<&str> = space.subsystems().iter().map(|s| s.label()).collect();
        config_err(format!("unknown subsystem `{label}` (known: {})", known.join(", ")))
    })
}

fn lookup_all(space: &CompositeSpace, labels: &[String]) -> Result<Vec<usize>, ScenarioError> {
    labels.iter().map(|l| lookup(space, l)).collect()
}

fn bipartition(space: &CompositeSpace, side_a: &[String], side_b: &[String]) -> Result<Bipartition, ScenarioError> {
    let a = lookup_all(space, side_a)?;
    let b = if side_b.is_empty() {
        (0..space.len()).filter(|s| !a.contains(s)).collect()
    } else {
        lookup_all(space, side_b)?
    };
    Bipartition::new(a, b).map_err(|e| config_err(e.to_string()))
}

fn labels(space: &CompositeSpace, sites: &[usize]) -> String {
    sites
        .iter()
        .map(|&s| space.subsystems()[s].label())
        .collect::<Vec<_>>()
        .join("+")
}

fn resolve(space: &CompositeSpace, spec: &ObservableSpec, base: LogBase) -> Result<Observable, ScenarioError> {
    let (name, probe) = match spec {
        ObservableSpec::Purity { subsystems, name } => {
            if subsystems.is_empty() {
                (name.clone().unwrap_or_else(|| "purity(all)".into()), Probe::Purity(None))
            } else {
                let mut keep = lookup_all(space, subsystems)?;
                keep.sort_unstable();
                keep.dedup();
                let default = format!("purity({})", labels(space, &keep));
                (name.clone().unwrap_or(default), Probe::Purity(Some(keep)))
            }
        }
        ObservableSpec::Trace { name } => (name.clone().unwrap_or_else(|| "trace_error".into()), Probe::TraceError),
        ObservableSpec::Negativity { side_a, side_b, name } => {
            let part = bipartition(space, side_a, side_b)?;
            let default = format!("negativity({}|{})", labels(space, part.side_a()), labels(space, part.side_b()));
            (name.clone().unwrap_or(default), Probe::Negativity(part))
        }
        ObservableSpec::MutualInformation { side_a, side_b, name } => {
            let part = bipartition(space, side_a, side_b)?;
            let default = format!("mutual_info({}|{})", labels(space, part.side_a()), labels(space, part.side_b()));
            (name.clone().unwrap_or(default), Probe::MutualInformation(part, base))
        }
        ObservableSpec::Discord { pair, measured, name } => {
            let (i, j) = (lookup(space, &pair[0])?, lookup(space, &pair[1])?);
            if i == j {
                return Err(config_err(format!("discord pair repeats `{}`", pair[0])));
            }
            let m = lookup(space, measured)?;
            if m != i && m != j {
                return Err(config_err(format!("measured subsystem `{measured}` is not part of the discord pair")));
            }
            for s in [i, j] {
                if space.subsystems()[s].dim() != 2 {
                    return Err(config_err(format!(
                        "discord needs two-level subsystems, `{}` has dimension {}",
                        space.subsystems()[s].label(),
                        space.subsystems()[s].dim()
                    )));
                }
            }
            let pair = [i.min(j), i.max(j)];
            let default = format!(
                "discord({}|{};measured={measured})",
                space.subsystems()[pair[0]].label(),
                space.subsystems()[pair[1]].label()
            );
            let probe = Probe::Discord {
                pair,
                measured_side: usize::from(m == pair[1]),
                opts: DiscordOptions { base, ..DiscordOptions::default() },
            };
            (name.clone().unwrap_or(default), probe)
        }
    };
    if name.is_empty() || name.contains([',', '\n', '"']) {
        return Err(config_err(format!("column name {name:?} must be non-empty without commas, quotes or newlines")));
    }
    Ok(Observable { name, probe })
}

fn resolve_observables(space: &CompositeSpace, specs: &[ObservableSpec], base: LogBase) -> Result<Vec<Observable>, ScenarioError> {
    if specs.is_empty() {
        return Err(config_err("at least one [[observables]] entry is required"));
    }
    let obs: Vec<Observable> = specs.iter().map(|s| resolve(space, s, base)).collect::<Result<_, _>>()?;
    let mut seen: Vec<&str> = FIXED_COLUMNS.to_vec();
    for o in &obs {
        if seen.contains(&o.name.as_str()) {
            return Err(config_err(format!("duplicate column `{}`", o.name)));
        }
        seen.push(&o.name);
    }
    Ok(obs)
}

/// A scenario with its generator assembled, ready to run.
pub struct Scenario {
    config: ScenarioConfig,
    model: ModelSpec,
    space: CompositeSpace,
    generator: LindbladGenerator,
    observables: Vec<Observable>,
}

impl Scenario {
    pub fn build(config: &ScenarioConfig) -> Result<Self, ScenarioError> {
        check_schema(config.schema_version)?;
        config
            .integrator
            .validate()
            .map_err(|e| config_err(format!("[integrator]: {e}")))?;
        let model = config.effective_model();
        let (space, generator) = model.build()?;
        let observables = resolve_observables(&space, &config.observables, config.log_base)?;
        Ok(Self {
            config: config.clone(),
            model,
            space,
            generator,
            observables,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn space(&self) -> &CompositeSpace {
        &self.space
    }

    pub fn generator(&self) -> &LindbladGenerator {
        &self.generator
    }

    pub fn observables(&self) -> &[Observable] {
        &self.observables
    }

    pub fn time_unit(&self) -> TimeUnit {
        self.model.time_unit()
    }

    pub fn columns(&self) -> Vec<String> {
        FIXED_COLUMNS
            .iter()
            .map(|s| s.to_string())
            .chain(self.observables.iter().map(|o| o.name.clone()))
            .collect()
    }

    /// Bytes held by one density matrix.
    pub fn state_bytes(&self) -> usize {
        let n = self.space.total_dim();
        n * n * std::mem::size_of::<num_complex::Complex64>()
    }

    /// Rough peak for a run: the state, seven stage buffers, two scratch
    /// matrices and the apply workspace.
    pub fn working_set_bytes(&self) -> usize {
        12 * self.state_bytes()
    }

    /// Evolves from the all-ground product state.
    pub fn run(&self) -> Result<TimeSeries, ScenarioError> {
        self.run_from(&ground_state(&self.space))
    }

    pub fn run_from(&self, rho0: &DensityMatrix) -> Result<TimeSeries, ScenarioError> {
        let traj = evolve_observed(&self.generator, rho0, &self.config.integrator, |t, rho| {
            let tr = rho.trace();
            let mut row = Vec::with_capacity(FIXED_COLUMNS.len() + self.observables.len());
            row.extend([t, tr.re, tr.im, purity(rho)]);
            for o in &self.observables {
                row.push(o.evaluate(rho).inspect_err(|_| {
                    log::warn!("observable `{}` failed at t = {t}", o.name);
                })?);
            }
            Ok::<_, ScenarioError>(row)
        })?;
        Ok(TimeSeries {
            time_unit: self.time_unit(),
            columns: self.columns(),
            rows: traj.samples,
            stats: traj.stats,
        })
    }
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<TimeSeries, ScenarioError> {
    Scenario::build(cfg)?.run()
}

/// Sampled observables, one row per sample time.
#[derive(Clone, Debug)]
pub struct TimeSeries {
    pub time_unit: TimeUnit,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub stats: IntegrationStats,
}

impl TimeSeries {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r[0]).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# units: t={}", self.time_unit.symbol())?;
        writeln!(w, "{}", self.columns.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|&x| format_float(x)).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        w.flush()
    }
}

/// 17 significant digits, enough to round-trip an `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Tail-average definition of a steady value.
#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SteadyStateRule {
    /// Fraction of the samples, counted from the end, that form the tail.
    pub tail_fraction: f64,
    /// Allowed spread relative to the tail mean.
    pub rel_band: f64,
    /// Allowed spread when the tail mean is below `small_mean`.
    pub abs_band: f64,
    pub small_mean: f64,
}

impl Default for SteadyStateRule {
    fn default() -> Self {
        Self {
            tail_fraction: 0.1,
            rel_band: 0.05,
            abs_band: 1e-4,
            small_mean: 1e-3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SteadyValue {
    pub value: f64,
    pub converged: bool,
    /// Least-squares slope over the tail, per time unit.
    pub slope: f64,
}

impl SteadyStateRule {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.tail_fraction > 0.0 && self.tail_fraction <= 1.0) {
            return Err(config_err("steady_state.tail_fraction must lie in (0, 1]"));
        }
        if !(self.rel_band >= 0.0 && self.abs_band >= 0.0 && self.small_mean >= 0.0) {
            return Err(config_err("steady_state bands must be non-negative"));
        }
        Ok(())
    }

    pub fn tail_len(&self, n: usize) -> usize {
        ((n as f64 * self.tail_fraction).ceil() as usize).clamp(1, n.max(1))
    }

    /// Tail mean of `values`. Converged when the tail spread stays inside
    /// the band and the fitted slope does not move the value by more than
    /// the band across the tail.
    pub fn extract(&self, times: &[f64], values: &[f64]) -> SteadyValue {
        let k = self.tail_len(values.len());
        let (t, v) = (&times[times.len() - k..], &values[values.len() - k..]);
        let mean = v.iter().sum::<f64>() / k as f64;
        let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        let band = if mean.abs() < self.small_mean {
            self.abs_band
        } else {
            self.rel_band * mean.abs()
        };
        let slope = ls_slope(t, v);
        let span = t[k - 1] - t[0];
        let converged = mean.is_finite() && hi - lo < band && (slope * span).abs() < band.max(f64::MIN_POSITIVE);
        SteadyValue {
            value: mean,
            converged,
            slope,
        }
    }
}

fn ls_slope(t: &[f64], v: &[f64]) -> f64 {
    let n = t.len() as f64;
    if t.len() < 2 {
        return 0.0;
    }
    let tm = t.iter().sum::<f64>() / n;
    let vm = v.iter().sum::<f64>() / n;
    let (mut num, mut den) = (0.0, 0.0);
    for (&ti, &vi) in t.iter().zip(v) {
        num += (ti - tm) * (vi - vm);
        den += (ti - tm) * (ti - tm);
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Steady values of one sweep point, for `purity` and every observable.
#[derive(Clone, Debug, PartialEq)]
pub struct SteadyStateRecord {
    pub point: Vec<toml::Value>,
    pub columns: Vec<String>,
    pub values: Vec<SteadyValue>,
}

impl SteadyStateRecord {
    pub fn from_series(point: Vec<toml::Value>, series: &TimeSeries, rule: &SteadyStateRule) -> Self {
        let times = series.times();
        let skip = FIXED_COLUMNS.len() - 1;
        let columns = series.columns[skip..].to_vec();
        let values = columns
            .iter()
            .map(|c| rule.extract(&times, &series.column(c).expect("column exists")))
            .collect();
        Self { point, columns, values }
    }

    pub fn get(&self, column: &str) -> Option<SteadyValue> {
        self.columns.iter().position(|c| c == column).map(|k| self.values[k])
    }

    pub fn all_converged(&self) -> bool {
        self.values.iter().all(|v| v.converged)
    }
}

/// Inclusive grid of `count` equally spaced values.
#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Linspace {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

/// A dotted path into the base scenario (e.g. `model.g_ql`) and its values.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub path: String,
    #[serde(default)]
    pub values: Vec<toml::Value>,
    #[serde(default)]
    pub linspace: Option<Linspace>,
}

impl SweepAxis {
    pub fn points(&self) -> Result<Vec<toml::Value>, ScenarioError> {
        match (&self.linspace, self.values.is_empty()) {
            (Some(_), false) => Err(config_err(format!("axis `{}`: give either values or linspace, not both", self.path))),
            (None, true) => Err(config_err(format!("axis `{}` has no values", self.path))),
            (None, false) => Ok(self.values.clone()),
            (Some(ls), true) => {
                if ls.count == 0 || !(ls.start.is_finite() && ls.stop.is_finite()) {
                    return Err(config_err(format!("axis `{}`: linspace needs finite ends and count >= 1", self.path)));
                }
                if ls.count == 1 {
                    return Ok(vec![toml::Value::Float(ls.start)]);
                }
                let step = (ls.stop - ls.start) / (ls.count - 1) as f64;
                Ok((0..ls.count)
                    .map(|k| {
                        let x = if k + 1 == ls.count { ls.stop } else { ls.start + step * k as f64 };
                        toml::Value::Float(x)
                    })
                    .collect())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// A scenario document; its own `schema_version` may be omitted.
    pub base: toml::Table,
    pub axes: Vec<SweepAxis>,
    #[serde(default)]
    pub steady_state: SteadyStateRule,
}

/// One point of the Cartesian product with its concrete scenario.
#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub values: Vec<toml::Value>,
    pub config: ScenarioConfig,
}

impl SweepConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        check_schema(cfg.schema_version)?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        Self::from_toml_str(&read_file(path)?).map_err(|e| prefix_path(path, e))
    }

    pub fn axis_names(&self) -> Vec<String> {
        self.axes.iter().map(|a| a.path.clone()).collect()
    }

    /// Expands the axes, last axis varying fastest, and checks that every
    /// point is a valid scenario with the same columns.
    pub fn points(&self) -> Result<Vec<SweepPoint>, ScenarioError> {
        check_schema(self.schema_version)?;
        self.steady_state.validate()?;
        if self.axes.is_empty() {
            return Err(config_err("at least one [[axes]] entry is required"));
        }
        let grids: Vec<Vec<toml::Value>> = self.axes.iter().map(SweepAxis::points).collect::<Result<_, _>>()?;
        let total: usize = grids.iter().map(Vec::len).product();
        let mut points = Vec::with_capacity(total);
        let mut columns: Option<Vec<String>> = None;
        for flat in 0..total {
            let mut rem = flat;
            let mut values = vec![toml::Value::Boolean(false); grids.len()];
            for (k, g) in grids.iter().enumerate().rev() {
                values[k] = g[rem % g.len()].clone();
                rem /= g.len();
            }
            let mut doc = self.base.clone();
            doc.entry("schema_version")
                .or_insert(toml::Value::Integer(self.schema_version.into()));
            for (axis, v) in self.axes.iter().zip(&values) {
                set_path(&mut doc, &axis.path, v.clone())?;
            }
            let config: ScenarioConfig = toml::Value::Table(doc)
                .try_into()
                .map_err(|e: toml::de::Error| config_err(format!("sweep point {}: {e}", describe(&self.axes, &values))))?;
            config
                .validate()
                .map_err(|e| config_err(format!("sweep point {}: {e}", describe(&self.axes, &values))))?;
            let space = config.effective_model().space()?;
            let cols: Vec<String> = resolve_observables(&space, &config.observables, config.log_base)?
                .into_iter()
                .map(|o| o.name)
                .collect();
            match &columns {
                None => columns = Some(cols),
                Some(c) if *c != cols => {
                    return Err(config_err(format!(
                        "sweep point {} changes the observable columns",
                        describe(&self.axes, &values)
                    )))
                }
                Some(_) => {}
            }
            points.push(SweepPoint { values, config });
        }
        Ok(points)
    }
}

fn describe(axes: &[SweepAxis], values: &[toml::Value]) -> String {
    axes.iter()
        .zip(values)
        .map(|(a, v)| format!("{}={v}", a.path))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Sets `path` (dot-separated keys) inside `doc`, creating tables on the way.
fn set_path(doc: &mut toml::Table, path: &str, value: toml::Value) -> Result<(), ScenarioError> {
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(config_err(format!("malformed axis path `{path}`")));
    }
    let (last, parents) = keys.split_last().expect("split yields at least one key");
    let mut table = doc;
    for k in parents {
        let entry = table
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| config_err(format!("axis path `{path}`: `{k}` is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub values: Vec<toml::Value>,
    pub result: Result<SteadyStateRecord, ScenarioError>,
}

#[derive(Debug)]
pub struct SweepResult {
    pub axes: Vec<String>,
    pub time_unit: TimeUnit,
    pub outcomes: Vec<SweepOutcome>,
}

impl SweepResult {
    pub fn records(&self) -> impl Iterator<Item = &SteadyStateRecord> {
        self.outcomes.iter().filter_map(|o| o.result.as_ref().ok())
    }

    pub fn failures(&self) -> impl Iterator<Item = (&[toml::Value], &ScenarioError)> {
        self.outcomes
            .iter()
            .filter_map(|o| o.result.as_ref().err().map(|e| (o.values.as_slice(), e)))
    }

    /// Swept columns, then `value`, `converged` and `slope` per observable.
    /// Failed points are left out.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# units: t={}", self.time_unit.symbol())?;
        let Some(first) = self.records().next() else {
            writeln!(w, "{}", self.axes.join(","))?;
            return w.flush();
        };
        let mut header = self.axes.clone();
        for c in &first.columns {
            header.extend([c.clone(), format!("{c}:converged"), format!("{c}:slope")]);
        }
        writeln!(w, "{}", header.join(","))?;
        for rec in self.records() {
            let mut cells: Vec<String> = rec.point.iter().map(format_value).collect();
            for v in &rec.values {
                cells.extend([format_float(v.value), v.converged.to_string(), format_float(v.slope)]);
            }
            writeln!(w, "{}", cells.join(","))?;
        }
        w.flush()
    }
}

fn format_value(v: &toml::Value) -> String {
    match v {
        toml::Value::Float(x) => format_float(*x),
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Runs every point on the current rayon pool. Failures are recorded per
/// point and do not stop the sweep.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult, ScenarioError> {
    let points = cfg.points()?;
    let time_unit = points[0].config.model.time_unit();
    let rule = cfg.steady_state;
    let total = points.len();
    let outcomes = points
        .into_par_iter()
        .enumerate()
        .map(|(k, p)| {
            let result = run_scenario(&p.config).map(|s| SteadyStateRecord::from_series(p.values.clone(), &s, &rule));
            match &result {
                Ok(_) => log::info!("sweep point {}/{total} done ({})", k + 1, describe(&cfg.axes, &p.values)),
                Err(e) => log::error!("sweep point {} failed: {e}", describe(&cfg.axes, &p.values)),
            }
            SweepOutcome { values: p.values, result }
        })
        .collect();
    Ok(SweepResult {
        axes: cfg.axis_names(),
        time_unit,
        outcomes,
    })
}

/// Configs shipped with the crate.
pub mod bundled {
    /// Whether a bundled document is a single scenario or a sweep.
    #[derive(Clone, Copy, Debug, PartialEq, Eq)]
    pub enum Kind {
        Scenario,
        Sweep,
    }

    pub const ALL: &[(&str, Kind, &str)] = &[
        ("bacteria_ci", Kind::Scenario, include_str!("../configs/bacteria_ci.toml")),
        ("bacteria_full", Kind::Scenario, include_str!("../configs/bacteria_full.toml")),
        ("bacteria_ci_channels", Kind::Sweep, include_str!("../configs/bacteria_ci_channels.toml")),
        ("bacteria_full_channels", Kind::Sweep, include_str!("../configs/bacteria_full_channels.toml")),
        ("tardigrade", Kind::Scenario, include_str!("../configs/tardigrade.toml")),
        ("tardigrade_two_modes", Kind::Scenario, include_str!("../configs/tardigrade_two_modes.toml")),
        ("tardigrade_noise_sweep", Kind::Sweep, include_str!("../configs/tardigrade_noise_sweep.toml")),
        ("tardigrade_coupling_sweep", Kind::Sweep, include_str!("../configs/tardigrade_coupling_sweep.toml")),
    ];

    pub fn get(name: &str) -> Option<(Kind, &'static str)> {
        ALL.iter().find(|(n, _, _)| *n == name).map(|&(_, k, text)| (k, text))
    }

    pub fn names() -> impl Iterator<Item = &'static str> {
        ALL.iter().map(|(n, _, _)| *n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
        schema_version = 1
        [model]
        kind = "tardigrade"
        light_truncation = 2
        tardigrade_truncation = 2
        [integrator]
        t_final = 1.0
        n_samples = 11
        [[observables]]
        kind = "negativity"
        side_a = ["light1"]
        [[observables]]
        kind = "discord"
        pair = ["qubit", "light1"]
        measured = "qubit"
    "#;

    #[test]
    fn parses_and_names_columns() {
        let cfg = ScenarioConfig::from_toml_str(SMALL).unwrap();
        let sc = Scenario::build(&cfg).unwrap();
        assert_eq!(sc.space().total_dim(), 8);
        assert_eq!(
            sc.columns(),
            [
                "t",
                "re_trace",
                "im_trace",
                "purity",
                "negativity(light1|tardigrade+qubit)",
                "discord(light1|qubit;measured=qubit)"
            ]
        );
    }

    #[test]
    fn run_produces_one_row_per_sample() {
        let cfg = ScenarioConfig::from_toml_str(SMALL).unwrap();
        let ts = run_scenario(&cfg).unwrap();
        assert_eq!(ts.rows.len(), 11);
        assert_eq!(ts.rows[0][3], 1.0);
        assert_eq!(ts.rows[0][4], 0.0);
        let mut buf = Vec::new();
        ts.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("# units: t=ns"));
        assert!(lines.next().unwrap().starts_with("t,re_trace,im_trace,purity,"));
        assert_eq!(lines.count(), 11);
    }

    #[test]
    fn reruns_are_bit_identical() {
        let cfg = ScenarioConfig::from_toml_str(SMALL).unwrap();
        assert_eq!(run_scenario(&cfg).unwrap().rows, run_scenario(&cfg).unwrap().rows);
    }

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23] {
            let s = format_float(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
        assert_eq!(format_float(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn rejects_unknown_fields_and_labels() {
        let bad = SMALL.replace("t_final = 1.0", "t_final = 1.0\nt_fnal = 2.0");
        let err = ScenarioConfig::from_toml_str(&bad).unwrap_err();
        assert!(matches!(err, ScenarioError::Parse(ref m) if m.contains("t_fnal")), "{err}");

        let bad = SMALL.replace("light_truncation = 2", "light_truncaton = 2");
        assert!(ScenarioConfig::from_toml_str(&bad).is_err());

        let bad = SMALL.replace(r#"side_a = ["light1"]"#, r#"side_a = ["light9"]"#);
        let cfg = ScenarioConfig::from_toml_str(&bad).unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(err.is_config_error());
        assert!(err.to_string().contains("light9"));
    }

    #[test]
    fn rejects_schema_and_empty_observables() {
        let bad = SMALL.replace("schema_version = 1", "schema_version = 7");
        assert!(matches!(ScenarioConfig::from_toml_str(&bad), Err(ScenarioError::Config(_))));
        let head = "observables = []\n".to_string() + SMALL.split("[[observables]]").next().unwrap();
        let cfg = ScenarioConfig::from_toml_str(&head).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn discord_requires_qubits() {
        let bad = SMALL.replace(r#"pair = ["qubit", "light1"]"#, r#"pair = ["qubit", "tardigrade"]"#);
        let bad = bad.replace("tardigrade_truncation = 2", "tardigrade_truncation = 3");
        let err = ScenarioConfig::from_toml_str(&bad).unwrap().validate().unwrap_err();
        assert!(err.to_string().contains("two-level"), "{err}");
    }

    #[test]
    fn noise_override_applies() {
        let text = SMALL.replace("schema_version = 1", "schema_version = 1\nnoise_channels = \"none\"");
        let cfg = ScenarioConfig::from_toml_str(&text).unwrap();
        assert_eq!(cfg.effective_model().noise_channels(), NoiseChannels::None);
        assert!(Scenario::build(&cfg).unwrap().generator().jumps().is_empty());
    }

    #[test]
    fn steady_rule_bands() {
        let rule = SteadyStateRule::default();
        let t: Vec<f64> = (0..100).map(f64::from).collect();
        let flat: Vec<f64> = t.iter().map(|_| 0.5).collect();
        let v = rule.extract(&t, &flat);
        assert_eq!(rule.tail_len(100), 10);
        assert!(v.converged && v.value == 0.5 && v.slope == 0.0);

        let ramp: Vec<f64> = t.iter().map(|x| 0.5 + 0.01 * x).collect();
        let v = rule.extract(&t, &ramp);
        assert!(!v.converged);
        assert!((v.slope - 0.01).abs() < 1e-12);

        let tiny: Vec<f64> = t.iter().map(|x| 1e-5 * (x * 0.7).sin()).collect();
        assert!(rule.extract(&t, &tiny).converged);
    }

    #[test]
    fn whole_series_tail_fits_slope() {
        let rule = SteadyStateRule { tail_fraction: 1.0, ..Default::default() };
        let t: Vec<f64> = (0..10).map(f64::from).collect();
        let v: Vec<f64> = t.iter().map(|x| 1.0 + 0.0049 * x).collect();
        let s = rule.extract(&t, &v);
        assert!((s.slope - 0.0049).abs() < 1e-12);
        assert!(s.converged);
        let v: Vec<f64> = t.iter().map(|x| 1.0 + 0.006 * x).collect();
        assert!(!rule.extract(&t, &v).converged);
    }

    fn small_sweep(axes: &str) -> String {
        let base = SMALL.replace("schema_version = 1", "").replace("[model]", "[base.model]");
        let base = base
            .replace("[integrator]", "[base.integrator]")
            .replace("[[observables]]", "[[base.observables]]");
        format!("schema_version = 1\n{base}\n{axes}")
    }

    #[test]
    fn sweep_expands_cartesian_product() {
        let text = small_sweep(
            "[[axes]]\npath = \"model.noise_exponent\"\nvalues = [1.0, 2.0]\n\
             [[axes]]\npath = \"model.g_ql\"\nlinspace = { start = 0.0, stop = 0.3e9, count = 3 }\n",
        );
        let cfg = SweepConfig::from_toml_str(&text).unwrap();
        let pts = cfg.points().unwrap();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[1].values, [toml::Value::Float(1.0), toml::Value::Float(0.15e9)]);
        match &pts[5].config.model {
            ModelSpec::Tardigrade(p) => {
                assert_eq!(p.noise_exponent, Some(2.0));
                assert_eq!(p.g_ql, 0.3e9);
            }
            other => panic!("unexpected model {other:?}"),
        }
    }

    #[test]
    fn sweep_rejects_bad_paths_and_values() {
        let text = small_sweep("[[axes]]\npath = \"model.g_qll\"\nvalues = [0.0]\n");
        let err = SweepConfig::from_toml_str(&text).unwrap().points().unwrap_err();
        assert!(err.is_config_error() && err.to_string().contains("g_qll"), "{err}");

        let text = small_sweep("[[axes]]\npath = \"model.g_ql\"\nvalues = []\n");
        assert!(SweepConfig::from_toml_str(&text).unwrap().points().is_err());

        let text = small_sweep("[[axes]]\npath = \"model.g_ql\"\nvalues = [5.0e9]\n");
        assert!(SweepConfig::from_toml_str(&text).unwrap().points().is_err());
    }

    #[test]
    fn single_point_sweep_matches_scenario_tail() {
        let text = small_sweep("[[axes]]\npath = \"model.g_ql\"\nvalues = [0.15e9]\n");
        let sweep = SweepConfig::from_toml_str(&text).unwrap();
        let res = run_sweep(&sweep).unwrap();
        let rec = res.records().next().unwrap();

        let cfg = ScenarioConfig::from_toml_str(SMALL).unwrap();
        let ts = run_scenario(&cfg).unwrap();
        let direct = SteadyStateRecord::from_series(rec.point.clone(), &ts, &sweep.steady_state);
        assert_eq!(*rec, direct);
        assert_eq!(rec.columns[0], "purity");
    }

    #[test]
    fn sweep_records_failures_and_continues() {
        let mut text = small_sweep("[[axes]]\npath = \"integrator.max_steps\"\nvalues = [1, 100000]\n");
        text = text.replace("t_final = 1.0", "t_final = 1.0\ndt_initial = 1e-3");
        let res = run_sweep(&SweepConfig::from_toml_str(&text).unwrap()).unwrap();
        assert_eq!(res.failures().count(), 1);
        assert_eq!(res.records().count(), 1);
        let mut buf = Vec::new();
        res.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("integrator.max_steps,purity,purity:converged,purity:slope,"));
        assert!(lines[2].starts_with("100000,"));
    }

    #[test]
    fn bundled_configs_parse() {
        for &(name, kind, text) in bundled::ALL {
            match kind {
                bundled::Kind::Scenario => ScenarioConfig::from_toml_str(text)
                    .and_then(|c| c.validate())
                    .unwrap_or_else(|e| panic!("{name}: {e}")),
                bundled::Kind::Sweep => {
                    SweepConfig::from_toml_str(text)
                        .and_then(|c| c.points())
                        .unwrap_or_else(|e| panic!("{name}: {e}"));
                }
            }
        }
        assert!(bundled::get("bacteria_ci").is_some());
        assert!(bundled::get("nope").is_none());
    }
}
