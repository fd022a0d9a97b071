//! Scenario runners: dark-state preparation, storage and release, and
//! positional-disorder ensembles.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::analysis::{trapezoid, CorrelationMap};
use crate::darkstates::{dark_state_two_rate, dark_state_with, Partition, Signs};
use crate::dynamics::{evolve_with, DensityState, EngineKind, EvolutionSchedule, EvolveOptions, Observable, TimeSeries, Tolerances};
use crate::error::{Error, Result};
use crate::hamiltonian::{mode_couplings, propagation_phase, ChainGeometry, DriveKind, DrivePulse, Envelope};
use crate::hilbert::{BasisRef, OperatorMatrix, SectorBasis, StateVector};

/// Detuning switched on for `set_b` at `time`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Release {
    pub detuning: f64,
    pub time: f64,
}

/// How the Hilbert space is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BasisMode {
    /// Collective modes for sites that are interchangeable, else sites.
    #[default]
    Auto,
    Sites,
}

/// A preparation (and optional release) sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolConfig {
    pub geometry: ChainGeometry,
    /// `set_a` holds the storing sites; the target has `M = |set_a|` quanta.
    pub partition: Partition,
    pub signs: Signs,
    pub pulses: Vec<DrivePulse>,
    pub release: Option<Release>,
    pub duration: f64,
    pub samples: usize,
    /// Excitation cap; `M + 2` when absent.
    pub cap: Option<usize>,
    pub basis: BasisMode,
    pub options: EvolveOptions,
}

impl ProtocolConfig {
    pub fn new(geometry: ChainGeometry, partition: Partition, pulses: Vec<DrivePulse>, duration: f64, samples: usize) -> Self {
        ProtocolConfig {
            geometry,
            partition,
            signs: Signs::Uniform,
            pulses,
            release: None,
            duration,
            samples,
            cap: None,
            basis: BasisMode::Auto,
            options: EvolveOptions::default(),
        }
    }

    /// Gaussian pulse of peak `0.25`, FWHM `8` centred at `t = 3` on the first
    /// `m` of `n` sites at unit spacing, release by `50` on the rest at `t = 12`.
    pub fn release_sequence(n: usize, m: usize) -> Result<Self> {
        let partition = Partition::first(n, m)?;
        let pulse = DrivePulse::local(partition.set_a().to_vec(), Envelope::Gaussian { peak: 0.25, center: 3.0, fwhm: 8.0 });
        let mut c = ProtocolConfig::new(ChainGeometry::regular(n, 1.0), partition, vec![pulse], 30.0, 1501);
        c.release = Some(Release { detuning: 50.0, time: 12.0 });
        Ok(c)
    }

    pub fn m(&self) -> usize {
        self.partition.m()
    }

    pub fn with_release(mut self, release: Release) -> Self {
        self.release = Some(release);
        self
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = Some(cap);
        self
    }

    /// End of the preparation drive: the switch-off time of rectangular
    /// pulses and `center + fwhm / 2` of Gaussian ones.
    pub fn preparation_end(&self) -> f64 {
        self.pulses
            .iter()
            .map(|p| match p.envelope {
                Envelope::Rectangular { t_off, .. } => t_off,
                Envelope::Gaussian { center, fwhm, .. } => center + 0.5 * fwhm,
                Envelope::Constant { .. } => f64::INFINITY,
            })
            .fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        let n = self.geometry.n_sites();
        let m = self.m();
        if self.partition.n_sites() != n {
            return Err(Error::param("partition", format!("partition covers {} sites, chain has {n}", self.partition.n_sites())));
        }
        if 2 * m > n {
            return Err(Error::NoDarkState { n, m });
        }
        for p in &self.pulses {
            p.validate(n)?;
            if p.kind == DriveKind::Local {
                if p.targets.len() > n - 1 {
                    return Err(Error::param("targets", "at most N - 1 sites may be driven"));
                }
                if p.targets.iter().any(|t| !self.partition.set_a().contains(t)) {
                    return Err(Error::param("targets", "drive targets must lie in set_a"));
                }
            }
        }
        if let Some(r) = self.release {
            if !(r.detuning.is_finite() && r.time.is_finite()) {
                return Err(Error::param("release", "non-finite release"));
            }
            if r.time < self.preparation_end() {
                return Err(Error::param("release", format!("release at t = {} precedes the end of preparation", r.time)));
            }
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::param("duration", "must be > 0"));
        }
        if self.samples < 2 {
            return Err(Error::param("samples", "need at least two samples"));
        }
        if let Some(c) = self.cap {
            if c < m {
                return Err(Error::param("cap", format!("cap {c} below M = {m}")));
            }
        }
        Ok(())
    }

    fn schedule(&self) -> EvolutionSchedule {
        let mut s = EvolutionSchedule::new(self.duration, self.samples);
        s.pulses = self.pulses.clone();
        if let Some(r) = self.release {
            s = s.with_step(self.partition.set_b().to_vec(), r.detuning, r.time);
        }
        s
    }
}

/// Groups sites that no part of the configuration tells apart.
fn site_classes(config: &ProtocolConfig) -> Vec<Vec<usize>> {
    let g = &config.geometry;
    let mut classes: Vec<(Vec<u64>, Vec<usize>)> = Vec::new();
    for j in 0..g.n_sites() {
        let mut key = vec![g.gamma_1d[j].to_bits(), g.detunings[j].to_bits(), config.partition.set_a().contains(&j) as u64];
        key.extend(config.pulses.iter().map(|p| p.driven_sites(g.n_sites()).contains(&j) as u64));
        match classes.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(j),
            None => classes.push((key, vec![j])),
        }
    }
    classes.into_iter().map(|(_, v)| v).collect()
}

/// Basis used for `config`.
pub fn protocol_basis(config: &ProtocolConfig) -> Result<BasisRef> {
    let n = config.geometry.n_sites();
    let cap = config.cap.unwrap_or(config.m() + 2).min(n);
    if config.basis == BasisMode::Auto {
        return compact_basis(&config.geometry, &site_classes(config), cap);
    }
    SectorBasis::sites(n, 2, cap)
}

/// Collective modes over `classes` when the chain treats each class as one
/// mode, otherwise the two-level site basis. Both hold up to `cap` quanta.
pub fn compact_basis(geometry: &ChainGeometry, classes: &[Vec<usize>], cap: usize) -> Result<BasisRef> {
    let n = geometry.n_sites();
    let cap = cap.min(n);
    if classes.len() < n {
        if let Ok(b) = SectorBasis::grouped(n, classes, cap) {
            if mode_couplings(geometry, &b).is_ok() {
                return Ok(b);
            }
        }
    }
    SectorBasis::sites(n, 2, cap)
}

/// Target dark state of `config` on `basis`. Chains whose couplings take one
/// value on `set_a` and another on `set_b` use the two-rate form.
pub fn protocol_target(config: &ProtocolConfig, basis: &BasisRef) -> Result<StateVector> {
    let g = &config.geometry.gamma_1d;
    let p = &config.partition;
    let n = p.n_sites();
    let uniform_on = |s: &[usize]| s.iter().all(|&j| g[j] == g[s[0]]);
    let (ga, gb) = (g[p.set_a()[0]], p.set_b().first().map_or(g[p.set_a()[0]], |&j| g[j]));
    if ga != gb && config.m() <= 2 && uniform_on(p.set_a()) && uniform_on(p.set_b()) && config.signs == Signs::Uniform {
        dark_state_two_rate(p, ga, gb, basis)
    } else {
        dark_state_with(n, config.m(), p, basis, config.signs)
    }
}

/// Scalars extracted from a run.
#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolSummary {
    pub max_fidelity: f64,
    pub max_fidelity_time: f64,
    /// `|N(0) + int P_drive - int emission - g_nr int N - N(end)|`, relative
    /// to the largest excitation reached.
    pub energy_balance_residual: f64,
}

/// Scalars of a storage-and-release run.
#[derive(Clone, Debug, PartialEq)]
pub struct ReleaseSummary {
    pub peak_intensity: f64,
    pub peak_time: f64,
    /// Switch time minus the first time the fidelity reaches 99% of its maximum.
    pub storage_tau: f64,
    /// Largest intensity between storage start and the switch, over the peak.
    pub storage_ratio: f64,
    /// Largest `|I - I_no_interference|` after the switch, over the peak.
    pub approximation_error: f64,
    /// `int Omega dt` of the first pulse from `t = 0` to the end of the run.
    pub pulse_area: f64,
    /// Rotation angle `2 A` of one isolated driven site.
    pub single_site_angle: f64,
    /// `2 sqrt(M) A`, the angle of the symmetric mode of the driven set.
    pub collective_angle: f64,
    /// Peak amplitude that would make the single-site angle exactly `pi`.
    pub calibrated_peak: f64,
}

/// Outcome of a protocol run.
#[derive(Clone, Debug)]
pub struct ProtocolRun {
    pub series: TimeSeries,
    pub summary: ProtocolSummary,
    pub release: Option<ReleaseSummary>,
    pub engine: EngineKind,
    pub basis: BasisRef,
}

fn weights(sites: &[usize], f: impl Fn(usize) -> C64) -> Vec<(usize, C64)> {
    sites.iter().map(|&j| (j, f(j))).collect()
}

fn run_protocol(config: &ProtocolConfig) -> Result<ProtocolRun> {
    config.validate()?;
    let g = &config.geometry;
    let n = g.n_sites();
    let basis = protocol_basis(config)?;
    let target = protocol_target(config, &basis)?;
    let p = &config.partition;
    let m = config.m() as f64;
    let all: Vec<usize> = (0..n).collect();
    let field = |s: &[usize], sign: f64| {
        weights(s, |j| {
            let x = g.positions[j];
            let (sin, cos) = propagation_phase(x);
            C64::new(cos, sign * x.signum() * sin) * (g.gamma_1d[j] / 2.0).sqrt()
        })
    };
    let flat = |s: &[usize]| weights(s, |j| C64::new((g.gamma_1d[j] / 2.0).sqrt(), 0.0));
    let unit = |s: &[usize]| weights(s, |_| C64::new(1.0 / (s.len() as f64).sqrt(), 0.0));

    let mut obs: Vec<(String, Observable)> = vec![
        ("fidelity".into(), Observable::Fidelity(target.clone())),
        ("intensity".into(), Observable::Intensity { input: C64::new(0.0, 0.0) }),
        ("total_excitation".into(), Observable::TotalExcitation),
        ("emission_right".into(), Observable::Correlator { a: field(&all, -1.0), b: field(&all, -1.0) }),
        ("emission_left".into(), Observable::Correlator { a: field(&all, 1.0), b: field(&all, 1.0) }),
    ];
    for (k, pulse) in config.pulses.iter().enumerate() {
        let s = pulse.driven_sites(n);
        obs.push((format!("drive_coherence_{k}"), Observable::Lowering(weights(&s, |_| C64::new(1.0, 0.0)))));
    }
    if config.release.is_some() {
        obs.push(("s1s1".into(), Observable::Correlator { a: unit(p.set_a()), b: unit(p.set_a()) }));
        obs.push(("s2s2".into(), Observable::Correlator { a: unit(p.set_b()), b: unit(p.set_b()) }));
        obs.push(("s1s2".into(), Observable::Correlator { a: unit(p.set_a()), b: unit(p.set_b()) }));
        obs.push(("field_aa".into(), Observable::Correlator { a: flat(p.set_a()), b: flat(p.set_a()) }));
        obs.push(("field_bb".into(), Observable::Correlator { a: flat(p.set_b()), b: flat(p.set_b()) }));
        obs.push(("product_population".into(), Observable::AllExcited(p.set_a().to_vec())));
    }
    for j in 0..n {
        obs.push((format!("pop_{j}"), Observable::Population(j)));
    }
    let schedule = config.schedule();
    let ev = evolve_with(&DensityState::ground(&basis), &schedule, g, &obs, config.options)?;
    let raw = ev.series;
    let t = raw.times.clone();
    let re = |name: &str| raw.real(name).expect("recorded channel");

    let fid = re("fidelity");
    let excitation = re("total_excitation");
    let emission: Vec<f64> = re("emission_right").iter().zip(re("emission_left")).map(|(a, b)| a + b).collect();
    let mut drive_power = vec![0.0; t.len()];
    for (k, pulse) in config.pulses.iter().enumerate() {
        let coh = raw.channel(&format!("drive_coherence_{k}")).expect("recorded channel");
        for (i, &ti) in t.iter().enumerate() {
            drive_power[i] += -2.0 * (pulse.raising_coefficient(ti).conj() * coh[i]).im;
        }
    }
    let lost = g.gamma_nr * trapezoid(&t, &excitation);
    let residual = excitation[0] + trapezoid(&t, &drive_power) - trapezoid(&t, &emission) - lost - excitation[t.len() - 1];
    let peak_excitation = excitation.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let (i_max, &f_max) = fid.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("nonempty grid");
    let summary = ProtocolSummary { max_fidelity: f_max, max_fidelity_time: t[i_max], energy_balance_residual: residual.abs() / peak_excitation };

    let mut series = TimeSeries::new(t.clone());
    series.push_real("fidelity", fid.clone())?;
    series.push_real("fidelity_squared", fid.iter().map(|f| f * f).collect())?;
    let intensity = re("intensity");
    series.push_real("intensity", intensity.clone())?;
    series.push_real("total_excitation", excitation)?;
    series.push_real("emission_rate", emission)?;
    series.push_real("drive_power", drive_power)?;

    let mut release = None;
    if let Some(r) = config.release {
        let approx: Vec<f64> = re("field_aa").iter().zip(re("field_bb")).map(|(a, b)| a + b).collect();
        series.push_real("s1s1", re("s1s1"))?;
        series.push_real("s2s2", re("s2s2"))?;
        series.push_real("re_s1s2", re("s1s2"))?;
        series.push_real("intensity_no_interference", approx.clone())?;
        series.push_real("product_population", re("product_population"))?;
        let after: Vec<usize> = (0..t.len()).filter(|&i| t[i] >= r.time).collect();
        let &i_peak = after.iter().max_by(|&&a, &&b| intensity[a].total_cmp(&intensity[b])).ok_or_else(|| Error::param("release", "switch after the end of the run"))?;
        let peak = intensity[i_peak];
        let i99 = fid.iter().position(|&f| f >= 0.99 * f_max).expect("maximum is reached");
        let start = t[i99].min(r.time);
        let storage_peak = (0..t.len()).filter(|&i| t[i] >= start && t[i] < r.time).map(|i| intensity[i]).fold(0.0, f64::max);
        let approx_err = after.iter().map(|&i| (approx[i] - intensity[i]).abs()).fold(0.0, f64::max);
        let env = config.pulses.first().map(|p| p.envelope);
        let area = env.map_or(0.0, |e| e.area(0.0, config.duration));
        let peak_amp = env.map_or(0.0, |e| match e {
            Envelope::Gaussian { peak, .. } => peak,
            Envelope::Rectangular { amplitude, .. } | Envelope::Constant { amplitude } => amplitude,
        });
        release = Some(ReleaseSummary {
            peak_intensity: peak,
            peak_time: t[i_peak],
            storage_tau: r.time - t[i99],
            storage_ratio: storage_peak / peak,
            approximation_error: approx_err / peak,
            pulse_area: area,
            single_site_angle: 2.0 * area,
            collective_angle: 2.0 * m.sqrt() * area,
            calibrated_peak: if area > 0.0 { peak_amp * PI / (2.0 * area) } else { f64::NAN },
        });
    }
    for j in 0..n {
        let name = format!("pop_{j}");
        series.push_real(name.clone(), re(&name))?;
    }
    Ok(ProtocolRun { series, summary, release, engine: ev.engine, basis })
}

/// Drives the chain from the ground state and tracks the overlap with the
/// target dark state.
pub fn prepare_dark_state(config: &ProtocolConfig) -> Result<ProtocolRun> {
    if config.release.is_some() {
        return Err(Error::param("release", "use storage_release for sequences with a release"));
    }
    run_protocol(config)
}

/// Preparation, storage and detuning-triggered release.
pub fn storage_release(config: &ProtocolConfig) -> Result<ProtocolRun> {
    if config.release.is_none() {
        return Err(Error::param("release", "missing release step"));
    }
    run_protocol(config)
}

/// Maximum preparation fidelity over a `(gamma_dep, gamma_nr)` grid, with
/// `gamma_dep` as the slow index.
pub fn max_fidelity_grid(config: &ProtocolConfig, dephasing: &[f64], loss: &[f64]) -> Result<Vec<(f64, f64, f64)>> {
    let jobs: Vec<(f64, f64)> = dephasing.iter().flat_map(|&d| loss.iter().map(move |&l| (d, l))).collect();
    jobs.par_iter()
        .map(|&(dep, nr)| {
            let mut c = config.clone();
            c.geometry = c.geometry.with_losses(nr, dep);
            Ok((dep, nr, prepare_dark_state(&c)?.summary.max_fidelity))
        })
        .collect()
}

/// Positional-disorder ensemble settings.
#[derive(Clone, Debug, PartialEq)]
pub struct DisorderConfig {
    /// Ordered chain; each position gets an independent normal displacement.
    pub geometry: ChainGeometry,
    pub partition: Partition,
    pub pulses: Vec<DrivePulse>,
    /// Standard deviations in units of the wavelength.
    pub epsilons: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub duration: f64,
    pub samples: usize,
    /// Excitation cap of the site basis.
    pub cap: usize,
    pub options: EvolveOptions,
}

impl DisorderConfig {
    /// `n` sites at unit spacing, the central pair driven by a rectangular
    /// pulse of amplitude `0.25` and length `2 pi`. The basis holds up to three
    /// excitations and the integrator runs at `rtol = 1e-6`, `atol = 1e-8`.
    pub fn central_pair(n: usize, epsilons: Vec<f64>, trials: usize, seed: u64) -> Result<Self> {
        if n < 4 {
            return Err(Error::NoDarkState { n, m: 2 });
        }
        let pair = vec![n / 2 - 1, n / 2];
        let pulse = DrivePulse::local(pair.clone(), Envelope::Rectangular { amplitude: 0.25, t_on: 0.0, t_off: 2.0 * PI });
        Ok(DisorderConfig {
            geometry: ChainGeometry::regular(n, 1.0),
            partition: Partition::new(n, &pair)?,
            pulses: vec![pulse],
            epsilons,
            trials,
            seed,
            duration: 25.0,
            samples: 501,
            cap: 3,
            options: EvolveOptions { tolerances: Tolerances { rtol: 1e-6, atol: 1e-8 }, ..EvolveOptions::default() },
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if self.trials == 0 {
            return Err(Error::param("trials", "need at least one trial"));
        }
        if self.epsilons.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
            return Err(Error::param("epsilons", "standard deviations must be finite and >= 0"));
        }
        if self.cap < self.partition.m() {
            return Err(Error::param("cap", "cap below the target excitation"));
        }
        ProtocolConfig::new(self.geometry.clone(), self.partition.clone(), self.pulses.clone(), self.duration, self.samples).validate()
    }

    /// Standard normal displacements of trial `trial`, one per site. Every
    /// trial draws from its own stream of the seeded generator.
    pub fn displacements(&self, trial: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(trial as u64);
        (0..self.geometry.n_sites()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
    }
}

/// Mean and standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub count: usize,
}

impl Estimate {
    pub fn of(values: &[f64]) -> Estimate {
        let k = values.len();
        if k == 0 {
            return Estimate { mean: f64::NAN, stderr: f64::NAN, count: 0 };
        }
        if values.iter().all(|&v| v == values[0]) {
            return Estimate { mean: values[0], stderr: 0.0, count: k };
        }
        let mean = values.iter().sum::<f64>() / k as f64;
        let stderr = if k > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
            (var / k as f64).sqrt()
        } else {
            0.0
        };
        Estimate { mean, stderr, count: k }
    }
}

/// Result of one disorder trial.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialOutcome {
    pub peak_overlap: f64,
    pub peak_time: f64,
    pub decay_rate: f64,
    pub correlations: CorrelationMap,
}

/// Statistics for one disorder strength.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleCell {
    pub epsilon: f64,
    pub peak_overlap: Estimate,
    pub peak_time: Estimate,
    pub decay_rate: Estimate,
    pub correlations: CorrelationMap,
    pub failures: usize,
    pub errors: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleResult {
    pub cells: Vec<EnsembleCell>,
    pub trials: usize,
    pub seed: u64,
}

/// `-d ln F / dt` by least squares over the samples after the peak where
/// `0.3 F_max <= F <= 0.9 F_max`; over the whole tail when fewer than three
/// samples qualify.
pub fn fit_decay_rate(times: &[f64], fidelity: &[f64]) -> f64 {
    let (ip, &fmax) = match fidelity.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)) {
        Some(x) => x,
        None => return f64::NAN,
    };
    let mut idx: Vec<usize> = (ip..fidelity.len()).filter(|&i| fidelity[i] <= 0.9 * fmax && fidelity[i] >= 0.3 * fmax).collect();
    if idx.len() < 3 {
        idx = (ip..fidelity.len()).filter(|&i| fidelity[i] > 0.0).collect();
    }
    if idx.len() < 2 {
        return f64::NAN;
    }
    let k = idx.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &i in &idx {
        let (x, y) = (times[i], fidelity[i].ln());
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let den = k * sxx - sx * sx;
    if den <= 0.0 {
        return f64::NAN;
    }
    -(k * sxy - sx * sy) / den
}

/// One disorder realisation with site displacements `shift` (in wavelengths).
pub fn disorder_trial(config: &DisorderConfig, shift: &[f64]) -> Result<TrialOutcome> {
    let n = config.geometry.n_sites();
    let positions: Vec<f64> = config.geometry.positions.iter().zip(shift).map(|(x, s)| x + s).collect();
    let mut geo = config.geometry.clone();
    geo.positions = positions;
    let basis = SectorBasis::sites(n, 2, config.cap)?;
    let target = dark_state_with(n, config.partition.m(), &config.partition, &basis, Signs::Uniform)?;
    let mut obs = vec![("fidelity".to_string(), Observable::Fidelity(target))];
    let mut pairs = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            let mut occ = vec![0u8; n];
            occ[a] = 1;
            occ[b] = 1;
            let k = basis.index_of(&occ).expect("two-excitation state in basis");
            let proj = OperatorMatrix::from_triplets(&basis, vec![(k, k, C64::new(1.0, 0.0))]);
            obs.push((format!("c_{a}_{b}"), Observable::Operator(proj)));
            pairs.push((a, b));
        }
    }
    let mut schedule = EvolutionSchedule::new(config.duration, config.samples);
    schedule.pulses = config.pulses.clone();
    let s = evolve_sector_observables(&DensityState::ground(&basis), &schedule, &geo, &obs, config.options)?;
    let fid = s.real("fidelity").expect("recorded channel");
    let (ip, &peak) = fid.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("nonempty grid");
    let mut c = DMatrix::zeros(n, n);
    for (a, b) in pairs {
        let v = s.channel(&format!("c_{a}_{b}")).expect("recorded channel")[ip].re;
        c[(a, b)] = v;
        c[(b, a)] = v;
    }
    Ok(TrialOutcome {
        peak_overlap: peak,
        peak_time: s.times[ip],
        decay_rate: fit_decay_rate(&s.times, &fid),
        correlations: CorrelationMap { values: c },
    })
}

/// End of the last drive when every pulse is rectangular.
fn drive_end(pulses: &[DrivePulse]) -> Option<f64> {
    pulses.iter().try_fold(0.0, |end: f64, p| match p.envelope {
        Envelope::Rectangular { t_off, .. } => Some(end.max(t_off)),
        _ => None,
    })
}

/// Evolution for observables that do not couple different excitation
/// numbers. Once the drives are off, coherences between excitation numbers
/// no longer influence such observables, so they are dropped and the rest of
/// the run evolves only the diagonal blocks.
fn evolve_sector_observables(
    initial: &DensityState,
    schedule: &EvolutionSchedule,
    geometry: &ChainGeometry,
    observables: &[(String, Observable)],
    options: EvolveOptions,
) -> Result<TimeSeries> {
    let split = match drive_end(&schedule.pulses) {
        Some(t) if t > 0.0 && t < schedule.duration && schedule.steps.is_empty() => t,
        _ => return Ok(evolve_with(initial, schedule, geometry, observables, options)?.series),
    };
    let cut = schedule.grid.partition_point(|&t| t <= split);
    let mut first = schedule.clone();
    first.duration = split;
    first.grid.truncate(cut);
    let ev = evolve_with(initial, &first, geometry, observables, options)?;
    let end = ev.final_state.ok_or_else(|| Error::Basis("drive phase left no density matrix".into()))?;
    let second = EvolutionSchedule {
        pulses: Vec::new(),
        steps: Vec::new(),
        duration: schedule.duration - split,
        grid: schedule.grid[cut..].iter().map(|t| (t - split).max(0.0)).collect(),
    };
    let rest = evolve_with(&end.sector_diagonal(), &second, geometry, observables, options)?.series;
    let mut out = TimeSeries::new(schedule.grid.clone());
    for (name, _) in observables {
        let mut v = ev.series.channel(name).expect("recorded channel").to_vec();
        v.extend_from_slice(rest.channel(name).expect("recorded channel"));
        out.push(name.clone(), v)?;
    }
    Ok(out)
}

/// Runs `trials` realisations per disorder strength. Trials run in parallel;
/// results are merged in trial order, so the output does not depend on
/// scheduling.
pub fn disorder_ensemble(config: &DisorderConfig) -> Result<EnsembleResult> {
    config.validate()?;
    let shifts: Vec<Vec<f64>> = (0..config.trials).map(|k| config.displacements(k)).collect();
    let jobs: Vec<(usize, usize)> = (0..config.epsilons.len()).flat_map(|e| (0..config.trials).map(move |k| (e, k))).collect();
    let ordered = config.epsilons.contains(&0.0).then(|| disorder_trial(config, &vec![0.0; config.geometry.n_sites()]));
    let outcomes: Vec<Result<TrialOutcome>> = jobs
        .par_iter()
        .map(|&(e, k)| {
            let eps = config.epsilons[e];
            match &ordered {
                // every ordered trial is the same chain
                Some(r) if eps == 0.0 => r.clone(),
                _ => {
                    let shift: Vec<f64> = shifts[k].iter().map(|z| eps * z).collect();
                    disorder_trial(config, &shift)
                }
            }
        })
        .collect();
    let n = config.geometry.n_sites();
    let mut cells = Vec::new();
    for (e, &eps) in config.epsilons.iter().enumerate() {
        let chunk = &outcomes[e * config.trials..(e + 1) * config.trials];
        let ok: Vec<&TrialOutcome> = chunk.iter().filter_map(|r| r.as_ref().ok()).collect();
        let errors: Vec<String> = chunk.iter().filter_map(|r| r.as_ref().err().map(|x| x.to_string())).collect();
        let pick = |f: &dyn Fn(&TrialOutcome) -> f64| ok.iter().map(|o| f(o)).filter(|v| v.is_finite()).collect::<Vec<f64>>();
        let maps: Vec<CorrelationMap> = ok.iter().map(|o| o.correlations.clone()).collect();
        cells.push(EnsembleCell {
            epsilon: eps,
            peak_overlap: Estimate::of(&pick(&|o| o.peak_overlap)),
            peak_time: Estimate::of(&pick(&|o| o.peak_time)),
            decay_rate: Estimate::of(&pick(&|o| o.decay_rate)),
            correlations: if maps.is_empty() { CorrelationMap { values: DMatrix::zeros(n, n) } } else { CorrelationMap::mean(&maps)? },
            failures: errors.len(),
            errors,
        });
    }
    Ok(EnsembleResult { cells, trials: config.trials, seed: config.seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_drive_keeps_fidelity_of_ground_state() {
        let p = Partition::first(4, 1).unwrap();
        let cfg = ProtocolConfig::new(ChainGeometry::regular(4, 1.0), p, vec![], 5.0, 11);
        let run = prepare_dark_state(&cfg).unwrap();
        assert!(run.series.real("fidelity").unwrap().iter().all(|f| f.abs() < 1e-14));
    }

    #[test]
    fn auto_basis_groups_interchangeable_sites() {
        let cfg = ProtocolConfig::release_sequence(16, 2).unwrap();
        let b = protocol_basis(&cfg).unwrap();
        assert_eq!(b.modes().len(), 2);
        let mut disordered = cfg.clone();
        disordered.geometry.positions[5] += 0.01;
        assert!(protocol_basis(&disordered).unwrap().is_site_basis());
    }

    #[test]
    fn continuous_drive_prepares_two_rate_dark_state() {
        let mut g = vec![20.0; 6];
        g[0] = 1.0;
        let geo = ChainGeometry::regular(6, 1.0).with_gamma_1d(g);
        let pulse = DrivePulse::local(vec![0], Envelope::Constant { amplitude: 0.3 });
        let cfg = ProtocolConfig::new(geo, Partition::first(6, 1).unwrap(), vec![pulse], 30.0, 301);
        let ideal = prepare_dark_state(&cfg).unwrap();
        assert!(ideal.summary.max_fidelity > 0.95, "{}", ideal.summary.max_fidelity);
        assert!(ideal.summary.energy_balance_residual < 1e-3, "{}", ideal.summary.energy_balance_residual);
        let mut noisy = cfg.clone();
        noisy.geometry = noisy.geometry.with_losses(0.0, 0.1);
        let lossy = prepare_dark_state(&noisy).unwrap();
        assert_eq!(lossy.engine, EngineKind::Symmetric);
        let a = ideal.series.real("fidelity").unwrap();
        let b = lossy.series.real("fidelity").unwrap();
        let running = |v: &[f64]| v.iter().scan(0.0f64, |m, &x| { *m = m.max(x); Some(*m) }).collect::<Vec<_>>();
        for (k, (x, y)) in running(&a).iter().zip(running(&b)).enumerate().skip(1) {
            assert!(y < *x, "{k} {x} {y}");
        }
        assert!(lossy.summary.max_fidelity < ideal.summary.max_fidelity);
    }

    #[test]
    fn release_before_preparation_is_rejected() {
        let mut cfg = ProtocolConfig::release_sequence(8, 2).unwrap();
        cfg.release = Some(Release { detuning: 50.0, time: 5.0 });
        assert!(matches!(storage_release(&cfg), Err(Error::Parameter { name: "release", .. })));
    }

    #[test]
    fn decay_fit_recovers_rate() {
        let t: Vec<f64> = (0..200).map(|k| k as f64 * 0.05).collect();
        let f: Vec<f64> = t.iter().map(|&x| if x < 1.0 { x } else { (-0.7 * (x - 1.0)).exp() }).collect();
        assert!((fit_decay_rate(&t, &f) - 0.7).abs() < 1e-10);
    }

    #[test]
    fn substreams_do_not_depend_on_trial_count() {
        let a = DisorderConfig::central_pair(6, vec![0.01], 3, 7).unwrap();
        let mut b = a.clone();
        b.trials = 10;
        assert_eq!(a.displacements(2), b.displacements(2));
        assert_ne!(a.displacements(1), a.displacements(2));
    }

    #[test]
    fn zero_disorder_trials_agree() {
        let mut cfg = DisorderConfig::central_pair(6, vec![0.0], 3, 1).unwrap();
        cfg.duration = 10.0;
        cfg.samples = 101;
        let r = disorder_ensemble(&cfg).unwrap();
        let c = &r.cells[0];
        assert_eq!(c.failures, 0);
        assert_eq!(c.peak_overlap.stderr, 0.0);
        assert!(c.peak_overlap.mean > 0.5);
    }
}
