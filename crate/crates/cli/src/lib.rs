//! Scenario-driven front end of the `wgqed` simulator.

pub mod error;
pub mod run;
pub mod scenario;
pub mod table;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde_json::json;

pub use error::CliError;
pub use run::run;
pub use scenario::{parse_scenario, parse_scenario_file, Command, Scenario};
pub use table::{write_table, Cell, Format, ResultTable};

pub const TOOL: &str = "wgqed";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Command-line overrides of a scenario.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub seed: Option<u64>,
}

/// Files written by [`run_file`].
#[derive(Clone, Debug)]
pub struct RunReport {
    pub tables: Vec<PathBuf>,
    pub manifest: PathBuf,
}

/// Applies overrides to a parsed scenario.
pub fn apply_options(mut scenario: Scenario, options: &RunOptions) -> Scenario {
    if let Some(seed) = options.seed {
        scenario.seed = seed;
    }
    if let Some(format) = options.format {
        scenario.output.format = format;
    }
    if let Some(out) = &options.out {
        scenario.output.dir = out.display().to_string();
    }
    scenario
}

/// Runs `scenario` and stamps every table with the shared metadata.
pub fn run_tables(scenario: &Scenario) -> Result<Vec<ResultTable>, CliError> {
    let hash = scenario.hash();
    let mut tables = run(scenario)?;
    for t in &mut tables {
        let mut meta = vec![
            ("tool".to_string(), format!("{TOOL} {VERSION}")),
            ("command".to_string(), scenario.command.name().to_string()),
            ("table".to_string(), t.name.clone()),
            ("scenario_hash".to_string(), hash.clone()),
            ("seed".to_string(), scenario.seed.to_string()),
            ("units".to_string(), "rates in Gamma_1D,1, times in 1/Gamma_1D,1, lengths in wavelengths".to_string()),
        ];
        meta.append(&mut t.metadata);
        t.metadata = meta;
    }
    Ok(tables)
}

fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::validation("threads", e.to_string()))
}

/// Parses, runs and writes one scenario file.
pub fn run_file(path: &Path, options: &RunOptions) -> Result<RunReport, CliError> {
    if options.threads == Some(0) {
        return Err(CliError::validation("threads", "need at least one thread"));
    }
    let scenario = apply_options(parse_scenario_file(path)?, options);
    let dir = PathBuf::from(&scenario.output.dir);
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64());
    let clock = Instant::now();
    let pool = pool(options.threads)?;
    let threads = pool.current_num_threads();
    let tables = pool.install(|| run_tables(&scenario))?;
    let stem = scenario.stem();
    let format = scenario.output.format;
    let mut written = Vec::new();
    for t in &tables {
        let p = dir.join(format!("{stem}_{}.{}", t.name, format.extension()));
        write_table(t, format, &p)?;
        written.push(p);
    }
    let manifest = dir.join(format!("{stem}_manifest.json"));
    let inputs = serde_json::to_value(&scenario).map_err(|e| CliError::Numeric(e.to_string()))?;
    let doc = json!({
        "tool": TOOL,
        "version": VERSION,
        "core_version": VERSION,
        "command": scenario.command.name(),
        "scenario_path": path.display().to_string(),
        "scenario_hash": scenario.hash(),
        "seed": scenario.seed,
        "threads": threads,
        "format": format.extension(),
        "inputs": inputs,
        "outputs": written.iter().map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned())).collect::<Vec<_>>(),
        "started_unix": started,
        "wall_time_seconds": clock.elapsed().as_secs_f64(),
    });
    let text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Numeric(e.to_string()))? + "\n";
    fs::write(&manifest, text).map_err(|e| CliError::io(&manifest, e))?;
    Ok(RunReport { tables: written, manifest })
}

/// Scenario for `predict -N n -M m`.
pub fn predict_scenario(n: usize, m: usize, rates: Option<(f64, f64)>) -> Result<Scenario, CliError> {
    let mut text = format!("version = 1\ncommand = \"predict\"\n[chain]\nn = {n}\n[predict]\nm = {m}\n");
    if let Some((a, b)) = rates {
        text.push_str(&format!("gamma_1 = {a:?}\ngamma_2 = {b:?}\n"));
    }
    parse_scenario(&text)
}
