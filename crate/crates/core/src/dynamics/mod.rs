//! Lindblad evolution with correlated waveguide decay, uncorrelated loss and
//! dephasing, and time-dependent drives.
//!
//! Two engines share one integrator. The density-matrix engine stores `rho`
//! on a [`SectorBasis`](crate::hilbert::SectorBasis) and works for any site
//! basis, and for grouped bases as long as every dissipator is collective.
//! The symmetric engine stores `rho` in a basis of permutation-symmetrized
//! site operators, which keeps local loss and dephasing exact for chains made
//! of a few groups of equivalent sites.

mod dense;
mod integrator;
mod symmetric;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::hamiltonian::{mode_couplings, ChainGeometry, DriveKind, DrivePulse};
use crate::hilbert::{collective_lowering, same_basis, BasisRef, OperatorMatrix, StateVector};

pub use integrator::{StepStats, Tolerances};

pub(crate) use dense::DenseEngine;
pub(crate) use symmetric::SymmetricEngine;

/// Density matrix over a basis, stored row-major.
#[derive(Clone, Debug)]
pub struct DensityState {
    basis: BasisRef,
    data: Vec<C64>,
}

impl DensityState {
    pub fn pure(state: &StateVector) -> Self {
        let a = state.amplitudes();
        let d = a.len();
        let mut data = vec![C64::new(0.0, 0.0); d * d];
        for i in 0..d {
            if a[i] == C64::new(0.0, 0.0) {
                continue;
            }
            for j in 0..d {
                data[i * d + j] = a[i] * a[j].conj();
            }
        }
        DensityState { basis: state.basis().clone(), data }
    }

    pub fn ground(basis: &BasisRef) -> Self {
        Self::pure(&StateVector::ground(basis))
    }

    pub fn from_matrix(basis: &BasisRef, m: &DMatrix<C64>) -> Result<Self> {
        let d = basis.dimension();
        if m.nrows() != d || m.ncols() != d {
            return Err(Error::Dimension(format!("{}x{} matrix for dimension {d}", m.nrows(), m.ncols())));
        }
        let data = (0..d * d).map(|k| m[(k / d, k % d)]).collect();
        Ok(DensityState { basis: basis.clone(), data })
    }

    pub(crate) fn from_raw(basis: &BasisRef, data: Vec<C64>) -> Self {
        debug_assert_eq!(data.len(), basis.dimension().pow(2));
        DensityState { basis: basis.clone(), data }
    }

    pub fn basis(&self) -> &BasisRef {
        &self.basis
    }

    /// Copy with all coherences between different excitation numbers removed.
    pub fn sector_diagonal(&self) -> Self {
        let d = self.dim();
        let ex: Vec<usize> = (0..d).map(|i| self.basis.excitation(i)).collect();
        let mut data = self.data.clone();
        for i in 0..d {
            for j in 0..d {
                if ex[j] != ex[i] {
                    data[i * d + j] = C64::new(0.0, 0.0);
                }
            }
        }
        DensityState { basis: self.basis.clone(), data }
    }

    /// True when no coherence between different excitation numbers is present.
    pub fn is_sector_diagonal(&self) -> bool {
        let d = self.dim();
        let ex: Vec<usize> = (0..d).map(|i| self.basis.excitation(i)).collect();
        (0..d).all(|i| (0..d).all(|j| ex[i] == ex[j] || self.data[i * d + j] == C64::new(0.0, 0.0)))
    }

    pub fn dim(&self) -> usize {
        self.basis.dimension()
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.dim() + j]
    }

    pub(crate) fn raw(&self) -> &[C64] {
        &self.data
    }

    pub fn matrix(&self) -> DMatrix<C64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| self.data[i * d + j])
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim()).map(|i| self.get(i, i)).sum()
    }

    /// Largest `|rho_ij - conj(rho_ji)|`.
    pub fn hermiticity_error(&self) -> f64 {
        hermiticity_error(&self.data, self.dim())
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let m = self.matrix();
        let h = (&m + m.adjoint()) * C64::new(0.5, 0.0);
        h.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `<psi| rho |psi>`.
    pub fn fidelity(&self, psi: &StateVector) -> Result<f64> {
        check_basis(&self.basis, psi.basis())?;
        let a = psi.amplitudes();
        let d = self.dim();
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..d {
            if a[i] == C64::new(0.0, 0.0) {
                continue;
            }
            let row = &self.data[i * d..(i + 1) * d];
            let s: C64 = row.iter().zip(a).map(|(r, b)| r * b).sum();
            acc += a[i].conj() * s;
        }
        Ok(acc.re)
    }
}

pub(crate) fn hermiticity_error(data: &[C64], d: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..d {
        for j in i..d {
            worst = worst.max((data[i * d + j] - data[j * d + i].conj()).norm());
        }
    }
    worst
}

fn check_basis(a: &BasisRef, b: &BasisRef) -> Result<()> {
    if same_basis(a, b) {
        Ok(())
    } else {
        Err(Error::Dimension("objects live on different bases".into()))
    }
}

/// A detuning `value` added to `sites` from `time` on.
#[derive(Clone, Debug, PartialEq)]
pub struct DetuningStep {
    pub sites: Vec<usize>,
    pub value: f64,
    pub time: f64,
}

/// `d rho / dt` for a fixed total Hamiltonian `h_total` (the effective
/// Hamiltonian plus any Hermitian drive), with the dissipators of `geometry`.
pub fn lindblad_derivative(rho: &DensityState, h_total: &OperatorMatrix, geometry: &ChainGeometry) -> Result<DMatrix<C64>> {
    check_basis(rho.basis(), h_total.basis())?;
    let basis = rho.basis();
    let mc = mode_couplings(geometry, basis)?;
    let (jumps, occupations) = dense::dissipators(&mc, basis)?;
    let d = rho.dim();
    let out = DenseEngine::static_derivative(h_total.csr(), &jumps, 2.0 * mc.dephasing, &occupations, rho.raw(), d);
    Ok(DMatrix::from_fn(d, d, |i, j| out[i * d + j]))
}

/// `Tr(op rho)`.
pub fn expectation(rho: &DensityState, op: &OperatorMatrix) -> Result<C64> {
    check_basis(rho.basis(), op.basis())?;
    let d = rho.dim();
    Ok(op.triplets().map(|(i, j, v)| v * rho.raw()[j * d + i]).sum())
}

/// `<E^dagger E>` for `E = E_in + i sum_j sqrt(Gamma_j / 2) s_j`.
pub fn output_field_intensity(rho: &DensityState, geometry: &ChainGeometry, input: C64) -> Result<f64> {
    let op = Observable::Intensity { input }.operator(geometry, rho.basis())?;
    Ok(expectation(rho, &op)?.re)
}

/// Drives, detuning switches, duration and sampling grid of one evolution.
#[derive(Clone, Debug, PartialEq)]
pub struct EvolutionSchedule {
    pub pulses: Vec<DrivePulse>,
    pub steps: Vec<DetuningStep>,
    pub duration: f64,
    pub grid: Vec<f64>,
}

impl EvolutionSchedule {
    /// No drives, `samples` evenly spaced points over `[0, duration]`.
    pub fn new(duration: f64, samples: usize) -> Self {
        let grid = if samples <= 1 {
            vec![duration]
        } else {
            (0..samples).map(|k| duration * k as f64 / (samples - 1) as f64).collect()
        };
        EvolutionSchedule { pulses: Vec::new(), steps: Vec::new(), duration, grid }
    }

    pub fn with_pulse(mut self, pulse: DrivePulse) -> Self {
        self.pulses.push(pulse);
        self
    }

    pub fn with_step(mut self, sites: Vec<usize>, value: f64, time: f64) -> Self {
        self.steps.push(DetuningStep { sites, value, time });
        self
    }

    pub fn validate(&self, n_sites: usize) -> Result<()> {
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::param("duration", "must be finite and > 0"));
        }
        if self.grid.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::param("grid", "times must be nondecreasing"));
        }
        if self.grid.iter().any(|&t| !(0.0..=self.duration).contains(&t)) {
            return Err(Error::param("grid", "sample times must lie in [0, duration]"));
        }
        for p in &self.pulses {
            p.validate(n_sites)?;
        }
        let wg: Vec<f64> = self.pulses.iter().filter(|p| p.kind == DriveKind::Waveguide).map(|p| p.detuning).collect();
        if wg.windows(2).any(|w| w[0] != w[1]) {
            return Err(Error::param("pulses", "waveguide pulses must share one probe detuning"));
        }
        for s in &self.steps {
            if !(s.value.is_finite() && s.time.is_finite() && s.time >= 0.0) {
                return Err(Error::param("steps", "detuning steps need finite value and time >= 0"));
            }
            if s.sites.is_empty() || s.sites.iter().any(|&j| j >= n_sites) {
                return Err(Error::param("steps", "detuning step sites out of range"));
            }
        }
        Ok(())
    }

    /// Probe detuning shared by the waveguide pulses (the frame frequency).
    pub fn probe_detuning(&self) -> f64 {
        self.pulses.iter().find(|p| p.kind == DriveKind::Waveguide).map_or(0.0, |p| p.detuning)
    }

    pub(crate) fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.pulses.iter().flat_map(|p| p.envelope.edges()).collect();
        b.extend(self.steps.iter().map(|s| s.time));
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }
}

/// Sampled observables.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    names: Vec<String>,
    data: Vec<Vec<C64>>,
}

impl TimeSeries {
    pub fn new(times: Vec<f64>) -> Self {
        TimeSeries { times, names: Vec::new(), data: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn push(&mut self, name: impl Into<String>, values: Vec<C64>) -> Result<()> {
        if values.len() != self.times.len() {
            return Err(Error::Dimension(format!("channel with {} samples for {} times", values.len(), self.times.len())));
        }
        self.names.push(name.into());
        self.data.push(values);
        Ok(())
    }

    pub fn push_real(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        self.push(name, values.into_iter().map(|v| C64::new(v, 0.0)).collect())
    }

    pub fn channel(&self, name: &str) -> Option<&[C64]> {
        self.names.iter().position(|n| n == name).map(|k| &self.data[k][..])
    }

    /// Real parts of a channel.
    pub fn real(&self, name: &str) -> Option<Vec<f64>> {
        self.channel(name).map(|c| c.iter().map(|z| z.re).collect())
    }
}

/// Quantities that can be recorded during an evolution. All are expectation
/// values `Tr(O rho)` of some operator `O`.
#[derive(Clone, Debug)]
pub enum Observable {
    /// `<n_j>` of one site.
    Population(usize),
    /// Total number of quanta.
    TotalExcitation,
    /// `<prod_j n_j>` over the listed sites.
    AllExcited(Vec<usize>),
    /// Probability of exactly `m` quanta.
    SectorWeight(usize),
    /// `<A^dagger B>` with `A = sum a_j s_j`, `B = sum b_j s_j`.
    Correlator { a: Vec<(usize, C64)>, b: Vec<(usize, C64)> },
    /// `<B>` with `B = sum b_j s_j`.
    Lowering(Vec<(usize, C64)>),
    /// Output-field intensity `<E^dagger E>` for a coherent input amplitude.
    Intensity { input: C64 },
    /// `<psi| rho |psi>`.
    Fidelity(StateVector),
    /// Arbitrary operator on the evolution basis.
    Operator(OperatorMatrix),
}

impl Observable {
    /// Field lowering operator `sum_j sqrt(Gamma_j / 2) s_j`.
    pub fn field_weights(geometry: &ChainGeometry) -> Vec<(usize, C64)> {
        geometry.gamma_1d.iter().enumerate().map(|(j, g)| (j, C64::new((g / 2.0).sqrt(), 0.0))).collect()
    }

    /// The operator `O` on `basis`.
    pub fn operator(&self, geometry: &ChainGeometry, basis: &BasisRef) -> Result<OperatorMatrix> {
        let weighted = |w: &[(usize, C64)]| -> Result<OperatorMatrix> {
            let (s, c): (Vec<usize>, Vec<C64>) = w.iter().copied().unzip();
            collective_lowering(basis, &s, &c)
        };
        Ok(match self {
            Observable::Population(j) => {
                basis.check_site(*j)?;
                let m = basis.mode_of_site(*j);
                let k = basis.modes()[m].sites().len() as f64;
                OperatorMatrix::diagonal(basis, |occ| C64::new(occ[m] as f64 / k, 0.0))
            }
            Observable::TotalExcitation => crate::hilbert::total_number(basis),
            Observable::AllExcited(sites) => {
                let modes = whole_modes(basis, sites)?;
                OperatorMatrix::diagonal(basis, |occ| {
                    let all = modes.iter().all(|&(m, full)| if full { occ[m] as usize == basis.modes()[m].sites().len() } else { occ[m] > 0 });
                    C64::new(if all { 1.0 } else { 0.0 }, 0.0)
                })
            }
            Observable::SectorWeight(m) => {
                let r = basis.sector_range(*m);
                let t = r.map(|k| (k, k, C64::new(1.0, 0.0))).collect();
                OperatorMatrix::from_triplets(basis, t)
            }
            Observable::Correlator { a, b } => {
                let a = weighted(a)?;
                let b = weighted(b)?;
                &a.adjoint() * &b
            }
            Observable::Lowering(b) => weighted(b)?,
            Observable::Intensity { input } => {
                check_sites(geometry, basis)?;
                let l = weighted(&Self::field_weights(geometry))?;
                let i = C64::new(0.0, 1.0);
                let mut o = &l.adjoint() * &l;
                o = &o + &l.scale(i * input.conj());
                o = &o + &l.adjoint().scale(-i * input);
                &o + &OperatorMatrix::identity(basis).scale(C64::new(input.norm_sqr(), 0.0))
            }
            Observable::Fidelity(psi) => {
                check_basis(basis, psi.basis())?;
                let a = psi.amplitudes();
                let support: Vec<usize> = (0..a.len()).filter(|&k| a[k] != C64::new(0.0, 0.0)).collect();
                let t = support.iter().flat_map(|&i| support.iter().map(move |&j| (i, j, a[i] * a[j].conj()))).collect();
                OperatorMatrix::from_triplets(basis, t)
            }
            Observable::Operator(op) => {
                check_basis(basis, op.basis())?;
                op.clone()
            }
        })
    }
}

/// Resolves a site list to modes. Each entry is `(mode, covers_whole_mode)`;
/// partial coverage is only allowed for single-site modes.
fn whole_modes(basis: &BasisRef, sites: &[usize]) -> Result<Vec<(usize, bool)>> {
    let mut count = vec![0usize; basis.modes().len()];
    for &s in sites {
        basis.check_site(s)?;
        count[basis.mode_of_site(s)] += 1;
    }
    let mut out = Vec::new();
    for (m, &c) in count.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let size = basis.modes()[m].sites().len();
        if size > 1 && c != size {
            return Err(Error::Basis(format!("site set covers collective mode {m} only partially")));
        }
        out.push((m, size > 1 || basis.modes()[m].levels() == 2));
    }
    Ok(out)
}

fn check_sites(geometry: &ChainGeometry, basis: &BasisRef) -> Result<()> {
    if geometry.n_sites() != basis.n_sites() {
        return Err(Error::Dimension(format!(
            "geometry has {} sites, basis has {}",
            geometry.n_sites(),
            basis.n_sites()
        )));
    }
    Ok(())
}

/// A right-hand side `dy/dt = f(t, y)` for the integrator.
pub trait MasterEquation {
    fn dim(&self) -> usize;
    fn derivative(&mut self, t: f64, y: &[C64], dy: &mut [C64]);
    /// Times at which the generator may jump.
    fn breakpoints(&self) -> Vec<f64>;
}

/// Which engine to run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EngineChoice {
    /// Density matrix on grouped bases when every dissipator is collective,
    /// the symmetric engine otherwise.
    #[default]
    Auto,
    Dense,
    Symmetric,
}

/// Evolution settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvolveOptions {
    pub tolerances: Tolerances,
    pub engine: EngineChoice,
    /// Allowed `|Tr rho - Tr rho(0)|` at every sample.
    pub trace_tol: f64,
    /// Allowed `max |rho - rho^dagger|` at every sample.
    pub hermiticity_tol: f64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions { tolerances: Tolerances::default(), engine: EngineChoice::Auto, trace_tol: 1e-8, hermiticity_tol: 1e-10 }
    }
}

/// Engine that ran an evolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EngineKind {
    Dense,
    Symmetric,
}

/// Result of [`evolve_with`].
#[derive(Clone, Debug)]
pub struct Evolution {
    pub series: TimeSeries,
    /// Final density matrix; absent when the symmetric engine ran.
    pub final_state: Option<DensityState>,
    pub stats: StepStats,
    pub engine: EngineKind,
}

/// Integrates the master equation and samples `observables` on the schedule's
/// grid with default options.
pub fn evolve(
    initial: &DensityState,
    schedule: &EvolutionSchedule,
    geometry: &ChainGeometry,
    observables: &[(String, Observable)],
) -> Result<TimeSeries> {
    Ok(evolve_with(initial, schedule, geometry, observables, EvolveOptions::default())?.series)
}

/// Linear data needed to check trace and Hermiticity of a state vector.
pub(crate) struct Invariants {
    /// `Tr rho = sum w y_i`.
    pub trace: Vec<(usize, C64)>,
    /// Pairs `(i, j)` with `y_i = conj(y_j)` for Hermitian `rho`.
    pub mirror: Vec<(usize, usize)>,
}

impl Invariants {
    pub fn trace(&self, y: &[C64]) -> C64 {
        self.trace.iter().map(|&(i, w)| w * y[i]).sum()
    }

    pub fn hermiticity_error(&self, y: &[C64]) -> f64 {
        self.mirror.iter().map(|&(i, j)| (y[i] - y[j].conj()).norm_sqr()).fold(0.0, f64::max).sqrt()
    }
}

pub(crate) trait Engine: MasterEquation {
    fn load(&mut self, rho: &DensityState) -> Result<Vec<C64>>;
    fn compile(&self, obs: &Observable, geometry: &ChainGeometry) -> Result<Vec<(usize, C64)>>;
    fn invariants(&self) -> Invariants;
}

pub fn evolve_with(
    initial: &DensityState,
    schedule: &EvolutionSchedule,
    geometry: &ChainGeometry,
    observables: &[(String, Observable)],
    options: EvolveOptions,
) -> Result<Evolution> {
    check_sites(geometry, initial.basis())?;
    schedule.validate(geometry.n_sites())?;
    let basis = initial.basis();
    let kind = match options.engine {
        EngineChoice::Dense => EngineKind::Dense,
        EngineChoice::Symmetric => EngineKind::Symmetric,
        EngineChoice::Auto => {
            if basis.is_site_basis() || DenseEngine::new(geometry, basis, schedule).is_ok() {
                EngineKind::Dense
            } else {
                EngineKind::Symmetric
            }
        }
    };
    match kind {
        EngineKind::Dense => {
            let mut e = DenseEngine::new(geometry, basis, schedule)?;
            let (series, y, stats) = run(&mut e, initial, schedule, geometry, observables, options)?;
            Ok(Evolution { series, final_state: Some(DensityState::from_raw(basis, y)), stats, engine: kind })
        }
        EngineKind::Symmetric => {
            let mut e = SymmetricEngine::new(geometry, basis, schedule)?;
            let (series, _, stats) = run(&mut e, initial, schedule, geometry, observables, options)?;
            Ok(Evolution { series, final_state: None, stats, engine: kind })
        }
    }
}

fn run<E: Engine>(
    engine: &mut E,
    initial: &DensityState,
    schedule: &EvolutionSchedule,
    geometry: &ChainGeometry,
    observables: &[(String, Observable)],
    options: EvolveOptions,
) -> Result<(TimeSeries, Vec<C64>, StepStats)> {
    let y0 = engine.load(initial)?;
    let functionals = observables.iter().map(|(_, o)| engine.compile(o, geometry)).collect::<Result<Vec<_>>>()?;
    let inv = engine.invariants();
    let tr0 = inv.trace(&y0);
    let mut values = vec![vec![C64::new(0.0, 0.0); schedule.grid.len()]; observables.len()];
    let (y, stats) = integrator::integrate(engine, y0, schedule.duration, &schedule.grid, options.tolerances, |k, t, y| {
        let dt = (inv.trace(y) - tr0).norm();
        if dt > options.trace_tol {
            return Err(Error::Invariant { time: t, what: format!("trace drifted by {dt:e}") });
        }
        let dh = inv.hermiticity_error(y);
        if dh > options.hermiticity_tol {
            return Err(Error::Invariant { time: t, what: format!("hermiticity error {dh:e}") });
        }
        for (f, v) in functionals.iter().zip(values.iter_mut()) {
            v[k] = f.iter().map(|&(i, w)| w * y[i]).sum();
        }
        Ok(())
    })?;
    let mut series = TimeSeries::new(schedule.grid.clone());
    for ((name, _), v) in observables.iter().zip(values) {
        series.push(name.clone(), v)?;
    }
    Ok((series, y, stats))
}
