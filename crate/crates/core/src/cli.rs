//! Command-line front end: `simulate`, `sweep`, `validate` and `list`.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 for usage errors and
//! missing or malformed configs.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

use crate::scenarios::{bundled, run_sweep, Scenario, ScenarioConfig, ScenarioError, SweepConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "qprobe", version, about = "Open-system dynamics of cavity probe models")]
struct Cli {
    /// Worker threads for sweeps and large matrix products (default: all cores).
    #[arg(long, global = true, value_name = "N", value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one scenario and write its time series as CSV.
    Simulate(Source),
    /// Run a parameter sweep and write steady-state values as CSV.
    Sweep(Source),
    /// Parse and build a scenario or sweep, then report sizes without running it.
    Validate(Source),
    /// List the bundled configs.
    List,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Profile {
    /// Reduced bacteria model (dimension 36).
    Ci,
    /// Full bacteria model (dimension 2500).
    Full,
}

#[derive(Args, Debug)]
#[group(skip)]
#[command(group(ArgGroup::new("source").required(true).args(["config", "bundled", "profile"])))]
struct Source {
    /// TOML scenario or sweep file.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// A bundled config by name (see `qprobe list`).
    #[arg(long, value_name = "NAME")]
    bundled: Option<String>,
    /// Bundled bacteria config at the given size.
    #[arg(long, value_enum)]
    profile: Option<Profile>,
    /// Output CSV path, `-` for stdout; overrides the config's `output`.
    #[arg(long, short, value_name = "PATH")]
    output: Option<PathBuf>,
}

/// Parsed config text and where it came from.
struct Loaded {
    origin: String,
    text: String,
}

impl Source {
    fn load(&self, sweep: bool) -> Result<Loaded, ScenarioError> {
        let named = |name: &str| -> Result<Loaded, ScenarioError> {
            let (_, text) = bundled::get(name).ok_or_else(|| {
                let names: Vec<&str> = bundled::names().collect();
                ScenarioError::Config(format!("no bundled config `{name}` (available: {})", names.join(", ")))
            })?;
            Ok(Loaded {
                origin: format!("bundled:{name}"),
                text: text.to_string(),
            })
        };
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::ReadConfig {
                path: path.clone(),
                source,
            })?;
            return Ok(Loaded {
                origin: path.display().to_string(),
                text,
            });
        }
        if let Some(name) = &self.bundled {
            return named(name);
        }
        let name = match (self.profile.expect("clap enforces one source"), sweep) {
            (Profile::Ci, false) => "bacteria_ci",
            (Profile::Full, false) => "bacteria_full",
            (Profile::Ci, true) => "bacteria_ci_channels",
            (Profile::Full, true) => "bacteria_full_channels",
        };
        named(name)
    }
}

fn with_origin(origin: &str, e: ScenarioError) -> ScenarioError {
    match e {
        ScenarioError::Parse(m) => ScenarioError::Parse(format!("{origin}: {m}")),
        ScenarioError::Config(m) => ScenarioError::Config(format!("{origin}: {m}")),
        other => other,
    }
}

fn is_sweep_document(text: &str) -> Result<bool, ScenarioError> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ScenarioError::Parse(e.to_string()))?;
    Ok(table.contains_key("axes"))
}

/// Output sink: explicit flag, then the config's `output`, then stdout.
fn open_output(flag: Option<&Path>, configured: Option<&Path>) -> Result<(Box<dyn Write>, PathBuf), ScenarioError> {
    let path = flag.or(configured).map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("-"));
    if path.as_os_str() == "-" {
        return Ok((Box::new(BufWriter::new(io::stdout().lock())), path));
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| ScenarioError::Write {
            path: path.clone(),
            source,
        })?;
    }
    let f = File::create(&path).map_err(|source| ScenarioError::Write {
        path: path.clone(),
        source,
    })?;
    Ok((Box::new(BufWriter::new(f)), path))
}

fn write_err(path: PathBuf) -> impl FnOnce(io::Error) -> ScenarioError {
    move |source| ScenarioError::Write { path, source }
}

fn simulate(src: &Source) -> Result<i32, ScenarioError> {
    let loaded = src.load(false)?;
    let cfg = ScenarioConfig::from_toml_str(&loaded.text).map_err(|e| with_origin(&loaded.origin, e))?;
    let scenario = Scenario::build(&cfg).map_err(|e| with_origin(&loaded.origin, e))?;
    log::info!("simulating {} on {}", scenario.model().kind(), scenario.space());
    let series = scenario.run()?;
    let (sink, path) = open_output(src.output.as_deref(), cfg.output.as_deref())?;
    series.write_csv(sink).map_err(write_err(path.clone()))?;
    if path.as_os_str() != "-" {
        eprintln!("wrote {} rows to {}", series.rows.len(), path.display());
    }
    Ok(EXIT_OK)
}

fn sweep(src: &Source) -> Result<i32, ScenarioError> {
    let loaded = src.load(true)?;
    let cfg = SweepConfig::from_toml_str(&loaded.text).map_err(|e| with_origin(&loaded.origin, e))?;
    let result = run_sweep(&cfg).map_err(|e| with_origin(&loaded.origin, e))?;
    let (sink, path) = open_output(src.output.as_deref(), cfg.output.as_deref())?;
    result.write_csv(sink).map_err(write_err(path.clone()))?;
    let failed: Vec<_> = result.failures().collect();
    for (values, e) in &failed {
        let point: Vec<String> = cfg
            .axis_names()
            .iter()
            .zip(values.iter())
            .map(|(a, v)| format!("{a}={v}"))
            .collect();
        eprintln!("error: sweep point {} failed: {e}", point.join(", "));
    }
    let ok = result.outcomes.len() - failed.len();
    if path.as_os_str() != "-" {
        eprintln!("wrote {ok} of {} sweep points to {}", result.outcomes.len(), path.display());
    }
    Ok(if failed.is_empty() { EXIT_OK } else { EXIT_RUNTIME })
}

fn human_bytes(b: usize) -> String {
    let units = ["B", "KiB", "MiB", "GiB", "TiB"];
    let mut x = b as f64;
    let mut k = 0;
    while x >= 1024.0 && k + 1 < units.len() {
        x /= 1024.0;
        k += 1;
    }
    if k == 0 {
        format!("{b} B")
    } else {
        format!("{x:.1} {}", units[k])
    }
}

fn report_scenario(out: &mut impl Write, scenario: &Scenario) -> io::Result<()> {
    let cfg = scenario.config();
    let n = scenario.space().total_dim();
    let super_bytes = (n as u128).pow(4) * 16;
    writeln!(out, "model: {}", scenario.model().kind())?;
    writeln!(out, "space: {}", scenario.space())?;
    writeln!(out, "total_dim: {n}")?;
    writeln!(out, "hamiltonian_nnz: {}", scenario.generator().hamiltonian().matrix().nnz())?;
    let jumps: Vec<&str> = scenario.generator().jumps().iter().map(|j| j.label()).collect();
    writeln!(out, "jump_operators: {} [{}]", jumps.len(), jumps.join(", "))?;
    writeln!(
        out,
        "density_matrix_memory: {} bytes ({})",
        scenario.state_bytes(),
        human_bytes(scenario.state_bytes())
    )?;
    writeln!(
        out,
        "integrator_memory_estimate: {} bytes ({})",
        scenario.working_set_bytes(),
        human_bytes(scenario.working_set_bytes())
    )?;
    writeln!(out, "dense_superoperator_would_need: {super_bytes} bytes (not built)")?;
    writeln!(
        out,
        "time_grid: {} samples over {} {} ({:?})",
        cfg.integrator.n_samples,
        cfg.integrator.t_final,
        scenario.time_unit().symbol(),
        cfg.integrator.method
    )?;
    writeln!(out, "columns: {}", scenario.columns().join(","))
}

fn validate(src: &Source) -> Result<i32, ScenarioError> {
    // a profile picks the single-scenario config here
    let loaded = src.load(false)?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let werr = |source| ScenarioError::Write {
        path: PathBuf::from("-"),
        source,
    };
    writeln!(out, "config: {}", loaded.origin).map_err(werr)?;
    if is_sweep_document(&loaded.text).map_err(|e| with_origin(&loaded.origin, e))? {
        let cfg = SweepConfig::from_toml_str(&loaded.text).map_err(|e| with_origin(&loaded.origin, e))?;
        let points = cfg.points().map_err(|e| with_origin(&loaded.origin, e))?;
        writeln!(out, "kind: sweep").map_err(werr)?;
        writeln!(out, "axes: {}", cfg.axis_names().join(", ")).map_err(werr)?;
        writeln!(out, "points: {}", points.len()).map_err(werr)?;
        let largest = points
            .iter()
            .max_by_key(|p| p.config.effective_model().space().map(|s| s.total_dim()).unwrap_or(0))
            .expect("a sweep has at least one point");
        writeln!(out, "largest point:").map_err(werr)?;
        let scenario = Scenario::build(&largest.config).map_err(|e| with_origin(&loaded.origin, e))?;
        report_scenario(&mut out, &scenario).map_err(werr)?;
    } else {
        let cfg = ScenarioConfig::from_toml_str(&loaded.text).map_err(|e| with_origin(&loaded.origin, e))?;
        let scenario = Scenario::build(&cfg).map_err(|e| with_origin(&loaded.origin, e))?;
        writeln!(out, "kind: scenario").map_err(werr)?;
        report_scenario(&mut out, &scenario).map_err(werr)?;
    }
    Ok(EXIT_OK)
}

fn list() -> i32 {
    for &(name, kind, _) in bundled::ALL {
        println!("{name}\t{}", if kind == bundled::Kind::Sweep { "sweep" } else { "scenario" });
    }
    EXIT_OK
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        pool = pool.num_threads(n as usize);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return EXIT_RUNTIME;
        }
    };
    let outcome = pool.install(|| match &cli.command {
        Command::Simulate(src) => simulate(src),
        Command::Sweep(src) => sweep(src),
        Command::Validate(src) => validate(src),
        Command::List => Ok(list()),
    });
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                EXIT_CONFIG
            } else {
                EXIT_RUNTIME
            }
        }
    }
}
