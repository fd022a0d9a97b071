//! Decay spectra, subradiance scans, spatial correlations and weak-probe
//! transmission.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::dynamics::{evolve_with, DensityState, EvolutionSchedule, EvolveOptions, Observable};
use crate::error::{Error, Result};
use crate::hamiltonian::{effective_hamiltonian, ChainGeometry, DriveKind, DrivePulse, Envelope};
use crate::hilbert::{BasisRef, SectorBasis, StateVector};

const ZERO: C64 = C64::new(0.0, 0.0);

/// One eigenpair of an excitation block of `H_eff`.
#[derive(Clone, Debug)]
pub struct DecayMode {
    pub eigenvalue: C64,
    /// `-2 Im(lambda)`.
    pub rate: f64,
    /// `Re(lambda)`.
    pub shift: f64,
    pub vector: StateVector,
}

/// Eigen-decomposition of the `M`-excitation block, sorted by rate.
#[derive(Clone, Debug)]
pub struct DecaySpectrum {
    pub m: usize,
    pub modes: Vec<DecayMode>,
}

impl DecaySpectrum {
    pub fn rates(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.rate).collect()
    }

    /// Smallest rate, clamped at zero.
    pub fn min_rate(&self) -> f64 {
        self.modes.first().map_or(f64::NAN, |m| m.rate.max(0.0))
    }

    pub fn max_rate(&self) -> f64 {
        self.modes.last().map_or(f64::NAN, |m| m.rate)
    }

    /// Number of modes with rate below `tol`.
    pub fn count_below(&self, tol: f64) -> usize {
        self.modes.iter().filter(|m| m.rate < tol).count()
    }
}

fn diagnostics(a: &DMatrix<C64>) -> Error {
    Error::Eigensolver {
        dim: a.nrows(),
        max_abs: a.iter().map(|z| z.norm()).fold(0.0, f64::max),
        frobenius: a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt(),
    }
}

fn schur(a: &DMatrix<C64>) -> Result<(DMatrix<C64>, DMatrix<C64>)> {
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(diagnostics(a));
    }
    let n = a.nrows();
    nalgebra::Schur::try_new(a.clone(), 1e-15, 1000 * n.max(10)).map(|s| s.unpack()).ok_or_else(|| diagnostics(a))
}

/// Eigenvalues of a general complex matrix.
pub fn eigenvalues(a: &DMatrix<C64>) -> Result<Vec<C64>> {
    let (_, t) = schur(a)?;
    Ok(t.diagonal().iter().copied().collect())
}

/// Eigenpairs of a general complex matrix; vectors have unit norm.
pub fn eigenpairs(a: &DMatrix<C64>) -> Result<Vec<(C64, DVector<C64>)>> {
    let (q, t) = schur(a)?;
    let n = t.nrows();
    let scale = t.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let small = scale * f64::EPSILON * n as f64;
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let lam = t[(k, k)];
        let mut y = DVector::from_element(n, ZERO);
        y[k] = C64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let s: C64 = (i + 1..=k).map(|j| t[(i, j)] * y[j]).sum();
            let mut den = t[(i, i)] - lam;
            if den.norm() < small {
                den = C64::new(small, 0.0);
            }
            y[i] = -s / den;
        }
        let v = &q * y;
        let norm = v.norm();
        out.push((lam, v / C64::new(norm, 0.0)));
    }
    Ok(out)
}

/// Rotates `v` so its largest-magnitude entry is real and positive.
pub fn fix_phase(v: &mut [C64]) {
    let Some(big) = v.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())) else { return };
    if big.norm() == 0.0 {
        return;
    }
    let ph = big.conj() / big.norm();
    v.iter_mut().for_each(|z| *z *= ph);
}

/// Spectrum of the `M`-excitation block of `H_eff` for two-level sites.
pub fn decay_spectrum(geometry: &ChainGeometry, m: usize) -> Result<DecaySpectrum> {
    let n = geometry.n_sites();
    if m > n {
        return Err(Error::param("M", format!("M = {m} exceeds N = {n}")));
    }
    let basis = SectorBasis::sites(n, 2, m)?;
    decay_spectrum_on(geometry, &basis, m)
}

/// Spectrum of the `M`-excitation block on an arbitrary basis.
pub fn decay_spectrum_on(geometry: &ChainGeometry, basis: &BasisRef, m: usize) -> Result<DecaySpectrum> {
    geometry.validate()?;
    if m > basis.max_excitation() {
        return Err(Error::param("M", format!("basis cap {} below {m}", basis.max_excitation())));
    }
    let h = effective_hamiltonian(geometry, basis)?;
    let block = h.sector_block(m);
    let range = basis.sector_range(m);
    let mut modes = Vec::with_capacity(block.nrows());
    for (lam, v) in eigenpairs(&block)? {
        let mut amps = vec![ZERO; basis.dimension()];
        amps[range.clone()].copy_from_slice(v.as_slice());
        fix_phase(&mut amps);
        modes.push(DecayMode { eigenvalue: lam, rate: -2.0 * lam.im, shift: lam.re, vector: StateVector::new(basis, amps)? });
    }
    modes.sort_by(|a, b| a.rate.total_cmp(&b.rate));
    Ok(DecaySpectrum { m, modes })
}

/// Smallest decay rate of the `M`-excitation block (eigenvalues only).
pub fn min_decay_rate(geometry: &ChainGeometry, m: usize) -> Result<f64> {
    let n = geometry.n_sites();
    if m == 0 || m > n {
        return Err(Error::param("M", format!("needs 1 <= M <= N, got M = {m}, N = {n}")));
    }
    geometry.validate()?;
    let basis = SectorBasis::sites(n, 2, m)?;
    let h = effective_hamiltonian(geometry, &basis)?;
    let ev = eigenvalues(&h.sector_block(m))?;
    Ok(ev.iter().map(|l| -2.0 * l.im).fold(f64::INFINITY, f64::min).max(0.0))
}

/// One cell of a [`ScanGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct ScanCell {
    pub n: usize,
    pub spacing: f64,
    /// `Gamma_min / Gamma_1D`, `NaN` when `error` is set.
    pub gamma_min: f64,
    pub error: Option<String>,
}

/// `Gamma_min` over an `(N, d)` grid, stored with `N` as the slow index.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanGrid {
    pub n_values: Vec<usize>,
    pub d_values: Vec<f64>,
    pub m: usize,
    pub cells: Vec<ScanCell>,
}

impl ScanGrid {
    pub fn get(&self, i_n: usize, i_d: usize) -> &ScanCell {
        &self.cells[i_n * self.d_values.len() + i_d]
    }

    pub fn failures(&self) -> usize {
        self.cells.iter().filter(|c| c.error.is_some()).count()
    }
}

/// Scans `Gamma_min` over chains built by `template(N, d)`. Failed cells are
/// annotated and the scan goes on.
pub fn min_decay_scan<F>(n_values: &[usize], d_values: &[f64], m: usize, template: F) -> Result<ScanGrid>
where
    F: Fn(usize, f64) -> Result<ChainGeometry> + Sync,
{
    if n_values.is_empty() || d_values.is_empty() {
        return Err(Error::param("axes", "scan axes must be nonempty"));
    }
    let jobs: Vec<(usize, f64)> = n_values.iter().flat_map(|&n| d_values.iter().map(move |&d| (n, d))).collect();
    let cells = jobs
        .par_iter()
        .map(|&(n, d)| match template(n, d).and_then(|g| min_decay_rate(&g, m)) {
            Ok(v) => ScanCell { n, spacing: d, gamma_min: v, error: None },
            Err(e) => ScanCell { n, spacing: d, gamma_min: f64::NAN, error: Some(e.to_string()) },
        })
        .collect();
    Ok(ScanGrid { n_values: n_values.to_vec(), d_values: d_values.to_vec(), m, cells })
}

/// Regular lossless chain, the default scan template.
pub fn regular_chain(n: usize, d: f64) -> Result<ChainGeometry> {
    let g = ChainGeometry::regular(n, d);
    g.validate()?;
    Ok(g)
}

/// `C_nm = |<e_n e_m|psi>|^2`; the diagonal holds double occupation.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationMap {
    pub values: DMatrix<f64>,
}

impl CorrelationMap {
    pub fn n_sites(&self) -> usize {
        self.values.nrows()
    }

    /// `sum_{n<m} C_nm`.
    pub fn pair_weight(&self) -> f64 {
        let n = self.n_sites();
        (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| self.values[(i, j)]).sum()
    }

    /// Share of the pair weight on pairs whose separation is odd.
    pub fn odd_separation_share(&self) -> f64 {
        let n = self.n_sites();
        let odd: f64 = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).filter(|(i, j)| (j - i) % 2 == 1).map(|(i, j)| self.values[(i, j)]).sum();
        odd / self.pair_weight()
    }

    /// Entry-wise mean of several maps.
    pub fn mean(maps: &[CorrelationMap]) -> Result<CorrelationMap> {
        let first = maps.first().ok_or_else(|| Error::param("maps", "nothing to average"))?;
        let mut acc = DMatrix::zeros(first.n_sites(), first.n_sites());
        for m in maps {
            if m.n_sites() != first.n_sites() {
                return Err(Error::Dimension("correlation maps of different size".into()));
            }
            acc += &m.values;
        }
        Ok(CorrelationMap { values: acc / maps.len() as f64 })
    }
}

/// Two-excitation correlations of `state`.
pub fn spatial_correlations(state: &StateVector) -> Result<CorrelationMap> {
    let sites = if state.basis().is_site_basis() { state.clone() } else { state.expand_to_sites()? };
    Ok(correlations_of(sites.basis(), |k| sites.amplitudes()[k].norm_sqr()))
}

/// Two-excitation correlations `<e_n e_m| rho |e_n e_m>` of a density matrix.
pub fn density_correlations(rho: &DensityState) -> Result<CorrelationMap> {
    if !rho.basis().is_site_basis() {
        return Err(Error::Basis("density correlations need a site basis".into()));
    }
    Ok(correlations_of(rho.basis(), |k| rho.get(k, k).re))
}

fn correlations_of(basis: &BasisRef, weight: impl Fn(usize) -> f64) -> CorrelationMap {
    let n = basis.n_sites();
    let mut c = DMatrix::zeros(n, n);
    if basis.max_excitation() >= 2 {
        for k in basis.sector_range(2) {
            let occ = basis.state(k);
            let occupied: Vec<usize> = (0..n).filter(|&j| occ[j] > 0).collect();
            let w = weight(k);
            match occupied[..] {
                [a, b] => {
                    c[(a, b)] = w;
                    c[(b, a)] = w;
                }
                [a] => c[(a, a)] = w,
                _ => {}
            }
        }
    }
    CorrelationMap { values: c }
}

/// Settings of a transmission sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeSettings {
    /// Probe Rabi frequency `Omega_wg`.
    pub amplitude: f64,
    /// Pulse length; the estimator averages over its second half.
    pub duration: f64,
    pub detunings: Vec<f64>,
    /// Samples in the averaging window.
    pub samples: usize,
    pub options: EvolveOptions,
}

impl ProbeSettings {
    /// 161 detunings over `[-1.5 N, 1.5 N]`.
    pub fn new(n_sites: usize, amplitude: f64, duration: f64) -> Self {
        let span = 1.5 * n_sites as f64;
        let detunings = (0..161).map(|k| -span + 2.0 * span * k as f64 / 160.0).collect();
        ProbeSettings { amplitude, duration, detunings, samples: 201, options: EvolveOptions::default() }
    }

    pub fn with_detunings(mut self, detunings: Vec<f64>) -> Self {
        self.detunings = detunings;
        self
    }
}

/// Weak-probe transmission `T(Delta)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransmissionCurve {
    pub detunings: Vec<f64>,
    pub transmission: Vec<f64>,
    pub label: String,
    pub amplitude: f64,
    pub duration: f64,
    pub warnings: Vec<String>,
}

impl TransmissionCurve {
    pub fn min(&self) -> f64 {
        self.transmission.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_deviation_from_one(&self) -> f64 {
        self.transmission.iter().map(|t| (t - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Full width of the dip at half depth below 1, by linear interpolation.
    /// `None` if the curve does not cross the half level on both sides.
    pub fn fwhm(&self) -> Option<f64> {
        let t = &self.transmission;
        let x = &self.detunings;
        let (k0, &tmin) = t.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1))?;
        let level = 1.0 - 0.5 * (1.0 - tmin);
        if tmin >= 1.0 {
            return None;
        }
        let cross = |i: usize, j: usize| x[i] + (level - t[i]) * (x[j] - x[i]) / (t[j] - t[i]);
        let right = (k0..t.len() - 1).find(|&i| t[i] <= level && t[i + 1] > level).map(|i| cross(i, i + 1))?;
        let left = (1..=k0).rev().find(|&i| t[i] <= level && t[i - 1] > level).map(|i| cross(i, i - 1))?;
        Some(right - left)
    }
}

/// Probe Rabi frequency above which a transmission run is flagged.
pub const WEAK_PROBE_LIMIT: f64 = 0.1;

/// Input amplitude matching a waveguide drive `omega`: `E_in = -omega / sqrt(Gamma/2)`.
pub fn probe_input(geometry: &ChainGeometry, omega: f64) -> C64 {
    C64::new(-omega / (geometry.mean_gamma_1d() / 2.0).sqrt(), 0.0)
}

/// Sweeps a constant waveguide probe over `settings.detunings` starting from
/// `initial` and records the time-averaged `<E^dagger E> / |E_in|^2`.
pub fn transmission_spectrum(initial: &StateVector, geometry: &ChainGeometry, settings: &ProbeSettings, label: &str) -> Result<TransmissionCurve> {
    geometry.validate()?;
    let (omega, duration) = (settings.amplitude, settings.duration);
    if !(omega.is_finite() && omega > 0.0) {
        return Err(Error::param("amplitude", "probe amplitude must be > 0"));
    }
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::param("duration", "must be > 0"));
    }
    if settings.samples < 2 {
        return Err(Error::param("samples", "need at least two samples"));
    }
    let mut warnings = Vec::new();
    if omega > WEAK_PROBE_LIMIT {
        warnings.push(format!("probe amplitude {omega} exceeds the weak-drive limit {WEAK_PROBE_LIMIT}"));
    }
    let input = probe_input(geometry, omega);
    let rho0 = DensityState::pure(initial);
    let grid: Vec<f64> = (0..settings.samples).map(|k| 0.5 * duration * (1.0 + k as f64 / (settings.samples - 1) as f64)).collect();
    let transmission = settings
        .detunings
        .par_iter()
        .map(|&delta| {
            let pulse = DrivePulse::waveguide(Envelope::Constant { amplitude: omega }, delta);
            let mut schedule = EvolutionSchedule::new(duration, 2).with_pulse(pulse);
            schedule.grid = grid.clone();
            let obs = [("I".to_string(), Observable::Intensity { input })];
            let ev = evolve_with(&rho0, &schedule, geometry, &obs, settings.options)?;
            let i = ev.series.real("I").expect("channel recorded");
            Ok(trapezoid_mean(&grid, &i) / input.norm_sqr())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(TransmissionCurve {
        detunings: settings.detunings.clone(),
        transmission,
        label: label.to_string(),
        amplitude: omega,
        duration,
        warnings,
    })
}

/// Time average by the trapezoid rule.
pub fn trapezoid_mean(t: &[f64], y: &[f64]) -> f64 {
    let span = t[t.len() - 1] - t[0];
    trapezoid(t, y) / span
}

/// `int y dt` by the trapezoid rule.
pub fn trapezoid(t: &[f64], y: &[f64]) -> f64 {
    t.windows(2).zip(y.windows(2)).map(|(t, y)| 0.5 * (t[1] - t[0]) * (y[0] + y[1])).sum()
}

/// Whether a pulse is a waveguide probe.
pub fn is_probe(pulse: &DrivePulse) -> bool {
    pulse.kind == DriveKind::Waveguide
}
