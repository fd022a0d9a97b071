//! Scenario files: a versioned TOML document naming one command, the chain
//! and the parameter block of that command.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;
use crate::table::Format;
use wgqed::Tolerances;

/// Scenario format understood by this build.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Spectrum,
    Scan,
    Correlations,
    Transmit,
    Prepare,
    Release,
    Disorder,
    Predict,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Scan => "scan",
            Command::Correlations => "correlations",
            Command::Transmit => "transmit",
            Command::Prepare => "prepare",
            Command::Release => "release",
            Command::Disorder => "disorder",
            Command::Predict => "predict",
        }
    }
}

fn one() -> f64 {
    1.0
}

fn two() -> usize {
    2
}

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_dir")]
    pub dir: String,
    #[serde(default)]
    pub format: Format,
    /// File name prefix; the command name when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stem: Option<String>,
}

fn default_dir() -> String {
    "out".into()
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { dir: default_dir(), format: Format::Csv, stem: None }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignSpec {
    #[default]
    Uniform,
    Alternating,
}

/// Chain block. Rates are in units of `rate_unit`, positions in wavelengths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default = "one")]
    pub spacing: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positions: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_1d: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detunings: Option<Vec<f64>>,
    #[serde(default)]
    pub gamma_nr: f64,
    #[serde(default)]
    pub gamma_dep: f64,
    /// Levels per site: 2 for qubits, 3 for transmons.
    #[serde(default = "two")]
    pub levels: usize,
    #[serde(default)]
    pub anharmonicity: f64,
    #[serde(default, skip_serializing_if = "is_default")]
    pub signs: SignSpec,
}

impl Default for ChainSpec {
    fn default() -> Self {
        ChainSpec {
            n: None,
            spacing: 1.0,
            positions: None,
            gamma_1d: None,
            detunings: None,
            gamma_nr: 0.0,
            gamma_dep: 0.0,
            levels: 2,
            anharmonicity: 0.0,
            signs: SignSpec::Uniform,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSpec {
    /// Excitation sectors to diagonalize.
    #[serde(default = "first_sector")]
    pub m: Vec<usize>,
}

fn first_sector() -> Vec<usize> {
    vec![1]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSpec {
    #[serde(default = "one_usize")]
    pub m: usize,
    pub n_min: usize,
    pub n_max: usize,
    pub d_min: f64,
    pub d_max: f64,
    pub d_points: usize,
}

fn one_usize() -> usize {
    1
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateKind {
    /// Analytic dark state of `set_a`.
    #[default]
    Dark,
    /// Eigenstate `mode` of the `M`-excitation block, by increasing rate.
    Subradiant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationSpec {
    #[serde(default = "two")]
    pub m: usize,
    #[serde(default)]
    pub state: StateKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub set_a: Option<Vec<usize>>,
    #[serde(default)]
    pub mode: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransmitSpec {
    /// Dark states to probe; `0` is the ground state.
    #[serde(default = "ground_only")]
    pub states: Vec<usize>,
    #[serde(default = "default_probe")]
    pub amplitude: f64,
    #[serde(default = "default_probe_duration")]
    pub duration: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detuning_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detuning_max: Option<f64>,
    #[serde(default = "default_detuning_points")]
    pub detuning_points: usize,
    /// Samples in the averaging window.
    #[serde(default = "default_probe_samples")]
    pub samples: usize,
}

fn ground_only() -> Vec<usize> {
    vec![0]
}

fn default_probe() -> f64 {
    0.01
}

fn default_probe_duration() -> f64 {
    50.0
}

fn default_detuning_points() -> usize {
    161
}

fn default_probe_samples() -> usize {
    201
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriveSpec {
    #[default]
    Local,
    Waveguide,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeSpec {
    Rectangular,
    Gaussian,
    Constant,
}

/// One drive pulse. `amplitude` is the peak of a Gaussian.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSpec {
    #[serde(default, skip_serializing_if = "is_default")]
    pub kind: DriveSpec,
    /// Driven sites of a local pulse; `set_a` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<Vec<usize>>,
    pub shape: ShapeSpec,
    pub amplitude: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_on: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_off: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fwhm: Option<f64>,
    #[serde(default)]
    pub detuning: f64,
}

/// Preparation and release sequences.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSpec {
    /// Storing sites; the first `m` sites when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub set_a: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    pub pulses: Vec<PulseSpec>,
    pub duration: f64,
    pub samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<usize>,
    #[serde(default = "default_rtol")]
    pub rtol: f64,
    #[serde(default = "default_atol")]
    pub atol: f64,
    /// Time at which `set_b` is detuned (release only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switch_time: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switch_detuning: Option<f64>,
}

fn default_rtol() -> f64 {
    1e-8
}

fn default_atol() -> f64 {
    1e-10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisorderSpec {
    /// Position standard deviations in wavelengths.
    pub epsilons: Vec<f64>,
    pub trials: usize,
    #[serde(default = "default_disorder_duration")]
    pub duration: f64,
    #[serde(default = "default_disorder_samples")]
    pub samples: usize,
    #[serde(default = "default_disorder_cap")]
    pub cap: usize,
    #[serde(default = "default_disorder_rtol")]
    pub rtol: f64,
    #[serde(default = "default_disorder_atol")]
    pub atol: f64,
}

fn default_disorder_duration() -> f64 {
    25.0
}

fn default_disorder_samples() -> usize {
    501
}

fn default_disorder_cap() -> usize {
    3
}

fn default_disorder_rtol() -> f64 {
    1e-6
}

fn default_disorder_atol() -> f64 {
    1e-8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictSpec {
    pub m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_2: Option<f64>,
}

/// A parsed scenario. After [`parse_scenario`] every optional field that has
/// a default is filled in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    pub command: Command,
    #[serde(default)]
    pub seed: u64,
    /// Value of the first site's waveguide rate in the file's rate unit.
    #[serde(default = "one")]
    pub rate_unit: f64,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<ChainSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<SpectrumSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlations: Option<CorrelationSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transmit: Option<TransmitSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prepare: Option<ProtocolSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub release: Option<ProtocolSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disorder: Option<DisorderSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predict: Option<PredictSpec>,
}

fn invalid(field: &str, message: impl Into<String>) -> CliError {
    CliError::validation(field, message)
}

fn no_dark_state(n: usize, m: usize) -> CliError {
    invalid("m", format!("no dark state for 2M > N (N = {n}, M = {m})"))
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

/// Parses and validates a scenario document.
pub fn parse_scenario(text: &str) -> Result<Scenario, CliError> {
    let mut s: Scenario = toml::from_str(text).map_err(|e| {
        let (line, column) = match e.span() {
            Some(r) => {
                let (l, c) = line_col(text, r.start);
                (Some(l), Some(c))
            }
            None => (None, None),
        };
        let message = e.message().to_string();
        let field = message.strip_prefix("unknown field `").and_then(|r| r.split('`').next()).map(str::to_string);
        CliError::Validation { message: format!("parse error: {message}"), field, line, column }
    })?;
    s.normalize()?;
    Ok(s)
}

/// Reads and parses a scenario file.
pub fn parse_scenario_file(path: &Path) -> Result<Scenario, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let text = String::from_utf8(bytes).map_err(|e| invalid("file", format!("{}: not UTF-8: {e}", path.display())))?;
    parse_scenario(&text)
}

fn check_positive(field: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must be finite and > 0, got {v}")))
    }
}

fn check_tolerances(prefix: &str, rtol: f64, atol: f64) -> Result<(), CliError> {
    if !(rtol.is_finite() && rtol >= Tolerances::MIN_RTOL) {
        return Err(invalid(&format!("{prefix}.rtol"), format!("must be finite and >= {:e}, got {rtol}", Tolerances::MIN_RTOL)));
    }
    if !(atol.is_finite() && atol >= Tolerances::MIN_ATOL) {
        return Err(invalid(&format!("{prefix}.atol"), format!("must be finite and >= {:e}, got {atol}", Tolerances::MIN_ATOL)));
    }
    Ok(())
}

fn check_sites(field: &str, sites: &[usize], n: usize) -> Result<(), CliError> {
    if let Some(s) = sites.iter().find(|&&s| s >= n) {
        return Err(invalid(field, format!("site {s} out of range for N = {n}")));
    }
    Ok(())
}

impl Scenario {
    /// Canonical TOML rendering.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// SHA-256 of the canonical rendering with the `[output]` block reset.
    pub fn hash(&self) -> String {
        let inputs = Scenario { output: OutputSpec::default(), ..self.clone() };
        hex::encode(Sha256::digest(inputs.to_toml().as_bytes()))
    }

    pub fn stem(&self) -> String {
        self.output.stem.clone().unwrap_or_else(|| self.command.name().to_string())
    }

    /// Site count of the chain block.
    pub fn n_sites(&self) -> Result<usize, CliError> {
        self.chain.as_ref().and_then(|c| c.n).ok_or_else(|| invalid("chain.n", "missing chain size"))
    }

    fn present_blocks(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        let mut mark = |present: bool, name| {
            if present {
                v.push(name)
            }
        };
        mark(self.spectrum.is_some(), "spectrum");
        mark(self.scan.is_some(), "scan");
        mark(self.correlations.is_some(), "correlations");
        mark(self.transmit.is_some(), "transmit");
        mark(self.prepare.is_some(), "prepare");
        mark(self.release.is_some(), "release");
        mark(self.disorder.is_some(), "disorder");
        mark(self.predict.is_some(), "predict");
        v
    }

    /// Checks the scenario and fills in defaults.
    pub fn normalize(&mut self) -> Result<(), CliError> {
        if self.version != FORMAT_VERSION {
            return Err(invalid("version", format!("unsupported scenario version {} (expected {FORMAT_VERSION})", self.version)));
        }
        let command = self.command.name();
        if let Some(other) = self.present_blocks().into_iter().find(|b| *b != command) {
            return Err(invalid(other, format!("block [{other}] does not belong to command `{command}`")));
        }
        check_positive("rate_unit", self.rate_unit)?;
        if self.output.dir.is_empty() {
            return Err(invalid("output.dir", "empty output directory"));
        }
        if let Some(stem) = &self.output.stem {
            if stem.is_empty() || stem.contains(['/', '\\']) {
                return Err(invalid("output.stem", "stem must be a plain file name prefix"));
            }
        }
        if self.command != Command::Scan {
            let chain = self.chain.get_or_insert_with(ChainSpec::default);
            chain.normalize(self.rate_unit)?;
        } else if let Some(chain) = &self.chain {
            if chain.n.is_some() || chain.positions.is_some() || chain.gamma_1d.is_some() || chain.detunings.is_some() {
                return Err(invalid("chain", "scan chains are regular; only losses may be set"));
            }
        }
        match self.command {
            Command::Spectrum => {
                let n = self.n_sites()?;
                let spec = self.spectrum.get_or_insert_with(|| SpectrumSpec { m: first_sector() });
                if spec.m.is_empty() {
                    return Err(invalid("spectrum.m", "no sectors requested"));
                }
                if let Some(&m) = spec.m.iter().find(|&&m| m == 0 || m > n) {
                    return Err(invalid("spectrum.m", format!("sector {m} outside 1..={n}")));
                }
            }
            Command::Scan => {
                let spec = self.scan.as_ref().ok_or_else(|| invalid("scan", "missing [scan] block"))?;
                if spec.m == 0 {
                    return Err(invalid("scan.m", "M must be >= 1"));
                }
                if spec.n_min < spec.m.max(1) || spec.n_max < spec.n_min {
                    return Err(invalid("scan.n_min", "need M <= n_min <= n_max"));
                }
                if !(spec.d_min.is_finite() && spec.d_max.is_finite() && spec.d_max >= spec.d_min) {
                    return Err(invalid("scan.d_max", "need finite d_min <= d_max"));
                }
                if spec.d_points == 0 || (spec.d_points == 1 && spec.d_max != spec.d_min) {
                    return Err(invalid("scan.d_points", "need at least one point (two for a range)"));
                }
            }
            Command::Correlations => {
                let n = self.n_sites()?;
                let spec = self.correlations.get_or_insert(CorrelationSpec { m: 2, state: StateKind::Dark, set_a: None, mode: 0 });
                if spec.m < 2 || spec.m > n {
                    return Err(invalid("correlations.m", "correlations need 2 <= M <= N"));
                }
                match spec.state {
                    StateKind::Dark => {
                        if 2 * spec.m > n {
                            return Err(no_dark_state(n, spec.m));
                        }
                        let set_a = spec.set_a.get_or_insert_with(|| (0..spec.m).collect());
                        check_sites("correlations.set_a", set_a, n)?;
                        if set_a.len() != spec.m {
                            return Err(invalid("correlations.set_a", format!("set_a must hold M = {} sites", spec.m)));
                        }
                    }
                    StateKind::Subradiant => {
                        if spec.set_a.is_some() {
                            return Err(invalid("correlations.set_a", "set_a applies to dark states only"));
                        }
                    }
                }
            }
            Command::Transmit => {
                let n = self.n_sites()?;
                let spec = self.transmit.get_or_insert_with(|| TransmitSpec {
                    states: ground_only(),
                    amplitude: default_probe(),
                    duration: default_probe_duration(),
                    detuning_min: None,
                    detuning_max: None,
                    detuning_points: default_detuning_points(),
                    samples: default_probe_samples(),
                });
                if spec.states.is_empty() {
                    return Err(invalid("transmit.states", "no states to probe"));
                }
                if let Some(&m) = spec.states.iter().find(|&&m| 2 * m > n) {
                    return Err(no_dark_state(n, m));
                }
                check_positive("transmit.amplitude", spec.amplitude)?;
                check_positive("transmit.duration", spec.duration)?;
                let span = 1.5 * n as f64 * self.rate_unit;
                let lo = *spec.detuning_min.get_or_insert(-span);
                let hi = *spec.detuning_max.get_or_insert(span);
                if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                    return Err(invalid("transmit.detuning_max", "need detuning_min < detuning_max"));
                }
                if spec.detuning_points < 2 {
                    return Err(invalid("transmit.detuning_points", "need at least two detunings"));
                }
                if spec.samples < 2 {
                    return Err(invalid("transmit.samples", "need at least two samples"));
                }
            }
            Command::Prepare | Command::Release => {
                let n = self.n_sites()?;
                let release = self.command == Command::Release;
                let name = command;
                let spec = if release { self.release.as_mut() } else { self.prepare.as_mut() }.ok_or_else(|| invalid(name, format!("missing [{name}] block")))?;
                spec.normalize(name, n, release)?;
            }
            Command::Disorder => {
                let n = self.n_sites()?;
                let spec = self.disorder.as_ref().ok_or_else(|| invalid("disorder", "missing [disorder] block"))?;
                if n < 4 {
                    return Err(no_dark_state(n, 2));
                }
                if spec.epsilons.is_empty() || spec.epsilons.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
                    return Err(invalid("disorder.epsilons", "need finite standard deviations >= 0"));
                }
                if spec.trials == 0 {
                    return Err(invalid("disorder.trials", "need at least one trial"));
                }
                check_positive("disorder.duration", spec.duration)?;
                check_tolerances("disorder", spec.rtol, spec.atol)?;
                if spec.samples < 2 {
                    return Err(invalid("disorder.samples", "need at least two samples"));
                }
                if spec.cap <= 2 {
                    return Err(invalid("disorder.cap", "cap must exceed the two stored excitations"));
                }
            }
            Command::Predict => {
                let n = self.n_sites()?;
                let spec = self.predict.as_ref().ok_or_else(|| invalid("predict", "missing [predict] block"))?;
                if spec.m == 0 || 2 * spec.m > n {
                    return Err(no_dark_state(n, spec.m));
                }
                match (spec.gamma_1, spec.gamma_2) {
                    (None, None) => {}
                    (Some(a), Some(b)) => {
                        check_positive("predict.gamma_1", a)?;
                        check_positive("predict.gamma_2", b)?;
                    }
                    _ => return Err(invalid("predict.gamma_2", "gamma_1 and gamma_2 go together")),
                }
            }
        }
        Ok(())
    }
}

impl ChainSpec {
    fn normalize(&mut self, rate_unit: f64) -> Result<(), CliError> {
        if let Some(p) = &self.positions {
            match self.n {
                Some(n) if n != p.len() => return Err(invalid("chain.positions", format!("{} positions for n = {n}", p.len()))),
                _ => self.n = Some(p.len()),
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(invalid("chain.positions", "non-finite position"));
            }
        }
        let n = self.n.ok_or_else(|| invalid("chain.n", "missing chain size"))?;
        if n == 0 {
            return Err(invalid("chain.n", "empty chain"));
        }
        if !self.spacing.is_finite() {
            return Err(invalid("chain.spacing", "non-finite spacing"));
        }
        for (field, v) in [("chain.gamma_1d", &mut self.gamma_1d), ("chain.detunings", &mut self.detunings)] {
            let fill = if field == "chain.gamma_1d" { rate_unit } else { 0.0 };
            let v = v.get_or_insert_with(|| vec![fill; n]);
            if v.len() != n {
                return Err(invalid(field, format!("{} values for n = {n}", v.len())));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(invalid(field, "non-finite value"));
            }
        }
        if self.gamma_1d.as_ref().is_some_and(|g| g.iter().any(|&x| x < 0.0)) {
            return Err(invalid("chain.gamma_1d", "couplings must be >= 0"));
        }
        for (field, v) in [("chain.gamma_nr", self.gamma_nr), ("chain.gamma_dep", self.gamma_dep)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(field, format!("must be finite and >= 0, got {v}")));
            }
        }
        if !(2..=3).contains(&self.levels) {
            return Err(invalid("chain.levels", "levels must be 2 or 3"));
        }
        if !self.anharmonicity.is_finite() {
            return Err(invalid("chain.anharmonicity", "non-finite"));
        }
        Ok(())
    }
}

impl ProtocolSpec {
    fn normalize(&mut self, name: &str, n: usize, release: bool) -> Result<(), CliError> {
        let f = |k: &str| format!("{name}.{k}");
        let set_a = match (&self.set_a, self.m) {
            (Some(a), Some(m)) if a.len() != m => return Err(invalid(&f("m"), format!("m = {m} but set_a has {} sites", a.len()))),
            (Some(a), _) => a.clone(),
            (None, Some(m)) => (0..m).collect(),
            (None, None) => return Err(invalid(&f("set_a"), "give set_a or m")),
        };
        check_sites(&f("set_a"), &set_a, n)?;
        let m = set_a.len();
        if m == 0 || 2 * m > n {
            return Err(no_dark_state(n, m));
        }
        self.m = Some(m);
        self.set_a = Some(set_a.clone());
        if self.pulses.is_empty() {
            return Err(invalid(&f("pulses"), "no drive pulses"));
        }
        for (k, p) in self.pulses.iter_mut().enumerate() {
            let pf = |key: &str| format!("{name}.pulses[{k}].{key}");
            match p.kind {
                DriveSpec::Local => {
                    let t = p.targets.get_or_insert_with(|| set_a.clone());
                    check_sites(&pf("targets"), t, n)?;
                }
                DriveSpec::Waveguide => {
                    if p.targets.is_some() {
                        return Err(invalid(&pf("targets"), "waveguide drives address every site"));
                    }
                }
            }
            if !(p.amplitude.is_finite() && p.amplitude >= 0.0) {
                return Err(invalid(&pf("amplitude"), "must be finite and >= 0"));
            }
            if !p.detuning.is_finite() {
                return Err(invalid(&pf("detuning"), "non-finite"));
            }
            let (need, forbid): (&[&str], &[&str]) = match p.shape {
                ShapeSpec::Rectangular => (&["t_on", "t_off"], &["center", "fwhm"]),
                ShapeSpec::Gaussian => (&["center", "fwhm"], &["t_on", "t_off"]),
                ShapeSpec::Constant => (&[], &["t_on", "t_off", "center", "fwhm"]),
            };
            let get = |key: &str| match key {
                "t_on" => p.t_on,
                "t_off" => p.t_off,
                "center" => p.center,
                _ => p.fwhm,
            };
            if let Some(k) = need.iter().find(|k| get(k).is_none()) {
                return Err(invalid(&pf(k), "required for this pulse shape"));
            }
            if let Some(k) = forbid.iter().find(|k| get(k).is_some()) {
                return Err(invalid(&pf(k), "not used by this pulse shape"));
            }
            if let (Some(a), Some(b)) = (p.t_on, p.t_off) {
                if !(a.is_finite() && b.is_finite() && b > a) {
                    return Err(invalid(&pf("t_off"), "need t_off > t_on"));
                }
            }
            if let Some(w) = p.fwhm {
                check_positive(&pf("fwhm"), w)?;
            }
        }
        check_positive(&f("duration"), self.duration)?;
        if self.samples < 2 {
            return Err(invalid(&f("samples"), "need at least two samples"));
        }
        if let Some(c) = self.cap {
            if c < m {
                return Err(invalid(&f("cap"), format!("cap {c} below M = {m}")));
            }
        }
        check_tolerances(name, self.rtol, self.atol)?;
        match (release, self.switch_time, self.switch_detuning) {
            (true, Some(t), Some(d)) => {
                if !(t.is_finite() && d.is_finite()) {
                    return Err(invalid(&f("switch_time"), "non-finite release"));
                }
            }
            (true, _, _) => return Err(invalid(&f("switch_time"), "release needs switch_time and switch_detuning")),
            (false, None, None) => {}
            (false, _, _) => return Err(invalid(&f("switch_time"), "switch settings belong to the release command")),
        }
        Ok(())
    }
}
