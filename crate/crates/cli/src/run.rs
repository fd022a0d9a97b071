//! Dispatch of a scenario to the simulator and conversion of the results to
//! tables.

use wgqed::analysis::{decay_spectrum_on, min_decay_scan, spatial_correlations, transmission_spectrum, ProbeSettings};
use wgqed::darkstates::{analytic_predictions, dark_state_with, population_profile};
use wgqed::dynamics::EngineKind;
use wgqed::protocols::{compact_basis, disorder_ensemble, prepare_dark_state, protocol_basis, protocol_target, storage_release, Release};
use wgqed::{ChainGeometry, CorrelationMap, DisorderConfig, DrivePulse, Envelope, EvolveOptions, Partition, ProtocolConfig, SectorBasis, Signs, StateVector, Tolerances};

use crate::error::CliError;
use crate::scenario::{ChainSpec, Command, DriveSpec, ProtocolSpec, Scenario, ShapeSpec, SignSpec, StateKind};
use crate::table::{Cell, ResultTable};

/// Runs `scenario` and returns its tables, without shared metadata.
pub fn run(scenario: &Scenario) -> Result<Vec<ResultTable>, CliError> {
    let u = Units(scenario.rate_unit);
    match scenario.command {
        Command::Spectrum => spectrum(scenario, u),
        Command::Scan => scan(scenario),
        Command::Correlations => correlations(scenario, u),
        Command::Transmit => transmit(scenario, u),
        Command::Prepare | Command::Release => protocol(scenario, u),
        Command::Disorder => disorder(scenario, u),
        Command::Predict => predict(scenario, u),
    }
}

/// Conversion from file units to units of the first site's waveguide rate.
#[derive(Clone, Copy)]
struct Units(f64);

impl Units {
    fn rate(self, v: f64) -> f64 {
        v / self.0
    }

    fn time(self, v: f64) -> f64 {
        v * self.0
    }
}

fn block<'a, T>(b: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
    b.as_ref().ok_or_else(|| CliError::validation(name, format!("missing [{name}] block")))
}

fn chain(s: &Scenario) -> Result<&ChainSpec, CliError> {
    block(&s.chain, "chain")
}

fn signs(c: &ChainSpec) -> Signs {
    match c.signs {
        SignSpec::Uniform => Signs::Uniform,
        SignSpec::Alternating => Signs::Alternating,
    }
}

fn geometry(c: &ChainSpec, u: Units) -> Result<ChainGeometry, CliError> {
    let n = c.n.ok_or_else(|| CliError::validation("chain.n", "missing chain size"))?;
    let positions = c.positions.clone().unwrap_or_else(|| (0..n).map(|j| j as f64 * c.spacing).collect());
    let per_site = |v: &Option<Vec<f64>>, fill: f64| v.clone().unwrap_or_else(|| vec![fill; n]).into_iter().map(|x| u.rate(x)).collect::<Vec<_>>();
    let g = ChainGeometry::from_positions(positions)
        .with_gamma_1d(per_site(&c.gamma_1d, u.0))
        .with_detunings(per_site(&c.detunings, 0.0))
        .with_losses(u.rate(c.gamma_nr), u.rate(c.gamma_dep))
        .with_anharmonicity(u.rate(c.anharmonicity));
    g.validate()?;
    Ok(g)
}

fn engine_name(e: EngineKind) -> &'static str {
    match e {
        EngineKind::Dense => "dense",
        EngineKind::Symmetric => "symmetric",
    }
}

fn spectrum(s: &Scenario, u: Units) -> Result<Vec<ResultTable>, CliError> {
    let c = chain(s)?;
    let geo = geometry(c, u)?;
    let n = geo.n_sites();
    let mut t = ResultTable::new("rates", &["m", "index", "rate", "shift"]);
    for &m in &block(&s.spectrum, "spectrum")?.m {
        let basis = SectorBasis::sites(n, c.levels, m)?;
        let spec = decay_spectrum_on(&geo, &basis, m)?;
        for (k, mode) in spec.modes.iter().enumerate() {
            t.push(vec![m.into(), k.into(), mode.rate.into(), mode.shift.into()]);
        }
        t.meta(format!("dark_count_m{m}"), spec.count_below(1e-10));
        t.meta_float(format!("max_rate_m{m}"), spec.max_rate());
    }
    Ok(vec![t])
}

fn scan(s: &Scenario) -> Result<Vec<ResultTable>, CliError> {
    let spec = block(&s.scan, "scan")?;
    let u = Units(s.rate_unit);
    let losses = s.chain.as_ref().map_or((0.0, 0.0), |c| (u.rate(c.gamma_nr), u.rate(c.gamma_dep)));
    let n_values: Vec<usize> = (spec.n_min..=spec.n_max).collect();
    let d_values: Vec<f64> = if spec.d_points == 1 {
        vec![spec.d_min]
    } else {
        (0..spec.d_points).map(|k| spec.d_min + (spec.d_max - spec.d_min) * k as f64 / (spec.d_points - 1) as f64).collect()
    };
    let grid = min_decay_scan(&n_values, &d_values, spec.m, |n, d| {
        let g = ChainGeometry::regular(n, d).with_losses(losses.0, losses.1);
        g.validate()?;
        Ok(g)
    })?;
    let mut t = ResultTable::new("gamma_min", &["N", "d", "gamma_min"]);
    for cell in &grid.cells {
        t.push(vec![cell.n.into(), cell.spacing.into(), cell.gamma_min.into()]);
    }
    t.meta("m", spec.m);
    t.meta("failures", grid.failures());
    for cell in grid.cells.iter().filter(|c| c.error.is_some()) {
        t.meta(format!("failed_N{}_d{}", cell.n, cell.spacing), cell.error.as_deref().unwrap_or(""));
    }
    Ok(vec![t])
}

fn correlation_table(name: &str, map: &CorrelationMap, lead: Option<f64>) -> ResultTable {
    let mut cols = vec!["n", "m", "value"];
    if lead.is_some() {
        cols.insert(0, "epsilon");
    }
    let mut t = ResultTable::new(name, &cols);
    let n = map.n_sites();
    for i in 0..n {
        for j in 0..n {
            let mut row: Vec<Cell> = vec![i.into(), j.into(), map.values[(i, j)].into()];
            if let Some(e) = lead {
                row.insert(0, e.into());
            }
            t.push(row);
        }
    }
    t
}

fn correlations(s: &Scenario, u: Units) -> Result<Vec<ResultTable>, CliError> {
    let c = chain(s)?;
    let spec = block(&s.correlations, "correlations")?;
    let geo = geometry(c, u)?;
    let n = geo.n_sites();
    let basis = SectorBasis::sites(n, 2, spec.m)?;
    let mut meta: Vec<(String, String)> = vec![("m".into(), spec.m.to_string())];
    let state = match spec.state {
        StateKind::Dark => {
            let set_a = spec.set_a.as_deref().ok_or_else(|| CliError::validation("correlations.set_a", "missing set_a"))?;
            let p = Partition::new(n, set_a)?;
            meta.push(("state".into(), "dark".into()));
            dark_state_with(n, spec.m, &p, &basis, signs(c))?
        }
        StateKind::Subradiant => {
            let modes = decay_spectrum_on(&geo, &basis, spec.m)?.modes;
            let mode = modes.get(spec.mode).ok_or_else(|| CliError::validation("correlations.mode", format!("the sector has {} modes", modes.len())))?;
            meta.push(("state".into(), format!("subradiant mode {}", spec.mode)));
            meta.push(("rate".into(), crate::table::format_float(mode.rate)));
            mode.vector.clone()
        }
    };
    let map = spatial_correlations(&state)?;
    let mut corr = correlation_table("correlations", &map, None);
    corr.metadata = meta.clone();
    corr.meta_float("pair_weight", map.pair_weight());
    corr.meta_float("odd_separation_share", map.odd_separation_share());
    let mut pops = ResultTable::new("populations", &["site", "population"]);
    pops.metadata = meta;
    for (j, p) in population_profile(&state).into_iter().enumerate() {
        pops.push(vec![j.into(), p.into()]);
    }
    Ok(vec![corr, pops])
}

/// Sites grouped by coupling and detuning, plus membership of `set_a`.
fn classes(geo: &ChainGeometry, set_a: &[usize]) -> Vec<Vec<usize>> {
    let mut out: Vec<((u64, u64, bool), Vec<usize>)> = Vec::new();
    for j in 0..geo.n_sites() {
        let key = (geo.gamma_1d[j].to_bits(), geo.detunings[j].to_bits(), set_a.contains(&j));
        match out.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(j),
            None => out.push((key, vec![j])),
        }
    }
    out.into_iter().map(|(_, v)| v).collect()
}

fn probe_state(geo: &ChainGeometry, c: &ChainSpec, m: usize) -> Result<StateVector, CliError> {
    let n = geo.n_sites();
    if m == 0 {
        let basis = compact_basis(geo, &classes(geo, &[]), 2)?;
        return Ok(StateVector::ground(&basis));
    }
    let mut config = ProtocolConfig::new(geo.clone(), Partition::first(n, m)?, Vec::new(), 1.0, 2);
    config.signs = signs(c);
    let basis = protocol_basis(&config)?;
    Ok(protocol_target(&config, &basis)?)
}

fn transmit(s: &Scenario, u: Units) -> Result<Vec<ResultTable>, CliError> {
    let c = chain(s)?;
    let spec = block(&s.transmit, "transmit")?;
    let geo = geometry(c, u)?;
    let (lo, hi) = (spec.detuning_min.unwrap_or(f64::NAN), spec.detuning_max.unwrap_or(f64::NAN));
    let k = spec.detuning_points;
    let detunings: Vec<f64> = (0..k).map(|i| u.rate(lo + (hi - lo) * i as f64 / (k - 1) as f64)).collect();
    let mut settings = ProbeSettings::new(geo.n_sites(), u.rate(spec.amplitude), u.time(spec.duration)).with_detunings(detunings);
    settings.samples = spec.samples;
    let mut t = ResultTable::new("transmission", &["m", "detuning", "transmission"]);
    for &m in &spec.states {
        let state = probe_state(&geo, c, m)?;
        let label = if m == 0 { "ground".to_string() } else { format!("dark_{m}") };
        let curve = transmission_spectrum(&state, &geo, &settings, &label)?;
        for (d, v) in curve.detunings.iter().zip(&curve.transmission) {
            t.push(vec![m.into(), (*d).into(), (*v).into()]);
        }
        t.meta_float(format!("fwhm_m{m}"), curve.fwhm().unwrap_or(f64::NAN));
        t.meta_float(format!("min_m{m}"), curve.min());
        t.meta_float(format!("max_deviation_m{m}"), curve.max_deviation_from_one());
        for (i, w) in curve.warnings.iter().enumerate() {
            t.meta(format!("warning_m{m}_{i}"), w);
        }
    }
    Ok(vec![t])
}

fn envelope(p: &crate::scenario::PulseSpec, u: Units) -> Envelope {
    let a = u.rate(p.amplitude);
    let t = |v: Option<f64>| u.time(v.unwrap_or(f64::NAN));
    match p.shape {
        ShapeSpec::Rectangular => Envelope::Rectangular { amplitude: a, t_on: t(p.t_on), t_off: t(p.t_off) },
        ShapeSpec::Gaussian => Envelope::Gaussian { peak: a, center: t(p.center), fwhm: t(p.fwhm) },
        ShapeSpec::Constant => Envelope::Constant { amplitude: a },
    }
}

fn protocol_config(spec: &ProtocolSpec, c: &ChainSpec, u: Units) -> Result<ProtocolConfig, CliError> {
    let geo = geometry(c, u)?;
    let set_a = spec.set_a.as_deref().ok_or_else(|| CliError::validation("set_a", "missing set_a"))?;
    let partition = Partition::new(geo.n_sites(), set_a)?;
    let pulses = spec
        .pulses
        .iter()
        .map(|p| {
            let mut d = match p.kind {
                DriveSpec::Local => DrivePulse::local(p.targets.clone().unwrap_or_default(), envelope(p, u)),
                DriveSpec::Waveguide => DrivePulse::waveguide(envelope(p, u), 0.0),
            };
            d.detuning = u.rate(p.detuning);
            d
        })
        .collect();
    let mut config = ProtocolConfig::new(geo, partition, pulses, u.time(spec.duration), spec.samples);
    config.signs = signs(c);
    config.cap = spec.cap;
    config.options = EvolveOptions { tolerances: Tolerances { rtol: spec.rtol, atol: spec.atol }, ..EvolveOptions::default() };
    if let (Some(time), Some(detuning)) = (spec.switch_time, spec.switch_detuning) {
        config.release = Some(Release { detuning: u.rate(detuning), time: u.time(time) });
    }
    config.validate()?;
    Ok(config)
}

fn protocol(s: &Scenario, u: Units) -> Result<Vec<ResultTable>, CliError> {
    let c = chain(s)?;
    let release = s.command == Command::Release;
    let spec = if release { block(&s.release, "release")? } else { block(&s.prepare, "prepare")? };
    let config = protocol_config(spec, c, u)?;
    let run = if release { storage_release(&config)? } else { prepare_dark_state(&config)? };
    let names: Vec<String> = run.series.names().to_vec();
    let mut cols = vec!["time"];
    cols.extend(names.iter().map(String::as_str));
    let mut series = ResultTable::new("timeseries", &cols);
    let channels: Vec<Vec<f64>> = names.iter().map(|n| run.series.real(n).expect("listed channel")).collect();
    for (i, &time) in run.series.times.iter().enumerate() {
        let mut row: Vec<Cell> = vec![time.into()];
        row.extend(channels.iter().map(|ch| Cell::from(ch[i])));
        series.push(row);
    }
    let mut summary = ResultTable::new("summary", &["name", "value"]);
    let mut put = |name: &str, v: f64| summary.push(vec![name.into(), v.into()]);
    put("max_fidelity", run.summary.max_fidelity);
    put("max_fidelity_time", run.summary.max_fidelity_time);
    put("energy_balance_residual", run.summary.energy_balance_residual);
    if let Some(r) = &run.release {
        put("peak_intensity", r.peak_intensity);
        put("peak_time", r.peak_time);
        put("storage_tau", r.storage_tau);
        put("storage_ratio", r.storage_ratio);
        put("approximation_error", r.approximation_error);
        put("pulse_area", r.pulse_area);
        put("single_site_angle", r.single_site_angle);
        put("collective_angle", r.collective_angle);
        put("calibrated_peak", r.calibrated_peak);
    }
    for t in [&mut series, &mut summary] {
        t.meta("engine", engine_name(run.engine));
        t.meta("basis_dimension", run.basis.dimension());
        t.meta("m", config.m());
    }
    Ok(vec![series, summary])
}

fn disorder(s: &Scenario, u: Units) -> Result<Vec<ResultTable>, CliError> {
    let c = chain(s)?;
    let spec = block(&s.disorder, "disorder")?;
    let geo = geometry(c, u)?;
    let mut config = DisorderConfig::central_pair(geo.n_sites(), spec.epsilons.clone(), spec.trials, s.seed)?;
    config.geometry = geo;
    config.duration = u.time(spec.duration);
    config.samples = spec.samples;
    config.cap = spec.cap;
    config.options.tolerances = Tolerances { rtol: spec.rtol, atol: spec.atol };
    config.validate()?;
    let result = disorder_ensemble(&config)?;
    let mut ens = ResultTable::new(
        "ensemble",
        &["epsilon", "trials", "peak_overlap", "peak_overlap_stderr", "peak_time", "peak_time_stderr", "decay_rate", "decay_rate_stderr", "failures"],
    );
    let mut corr = ResultTable::new("correlations", &["epsilon", "n", "m", "value"]);
    for cell in &result.cells {
        ens.push(vec![
            cell.epsilon.into(),
            cell.peak_overlap.count.into(),
            cell.peak_overlap.mean.into(),
            cell.peak_overlap.stderr.into(),
            cell.peak_time.mean.into(),
            cell.peak_time.stderr.into(),
            cell.decay_rate.mean.into(),
            cell.decay_rate.stderr.into(),
            cell.failures.into(),
        ]);
        corr.rows.extend(correlation_table("correlations", &cell.correlations, Some(cell.epsilon)).rows);
        for (i, e) in cell.errors.iter().enumerate() {
            ens.meta(format!("error_eps{}_{i}", cell.epsilon), e);
        }
    }
    for t in [&mut ens, &mut corr] {
        t.meta("trials", result.trials);
    }
    Ok(vec![ens, corr])
}

fn predict(s: &Scenario, u: Units) -> Result<Vec<ResultTable>, CliError> {
    let n = s.n_sites()?;
    let spec = block(&s.predict, "predict")?;
    let rates = spec.gamma_1.zip(spec.gamma_2).map(|(a, b)| (u.rate(a), u.rate(b)));
    let mut t = ResultTable::new("predictions", &["name", "value", "adopted"]);
    for p in analytic_predictions(n, spec.m, rates)? {
        t.push(vec![p.name.into(), p.value.into(), p.adopted.into()]);
    }
    t.meta("n", n);
    t.meta("m", spec.m);
    Ok(vec![t])
}
