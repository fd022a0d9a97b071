//! Density-matrix engine on a sector basis.

use std::ops::Range;

use nalgebra::SymmetricEigen;
use num_complex::Complex64 as C64;

use super::{whole_modes, DensityState, Engine, EvolutionSchedule, Invariants, MasterEquation, Observable};
use crate::error::{Error, Result};
use crate::hamiltonian::{hamiltonian_from_modes, mode_couplings, ChainGeometry, DrivePulse, ModeCouplings};
use crate::hilbert::{mode_lowering, same_basis, BasisRef, OperatorMatrix};
use crate::sparse::Csr;

const ZERO: C64 = C64::new(0.0, 0.0);

pub(crate) enum Coef {
    Raise(DrivePulse),
    Lower(DrivePulse),
    Step { value: f64, time: f64 },
}

impl Coef {
    pub fn at(&self, t: f64) -> C64 {
        match self {
            Coef::Raise(p) => p.raising_coefficient(t),
            Coef::Lower(p) => p.raising_coefficient(t).conj(),
            Coef::Step { value, time } => {
                if t >= *time {
                    C64::new(*value, 0.0)
                } else {
                    ZERO
                }
            }
        }
    }
}

/// Collective jump operators `sqrt(lambda_k) sum_a u_ka A_a^-` from the
/// eigendecomposition of the mode-level dissipative coupling.
pub(crate) fn collective_jumps(gamma: &nalgebra::DMatrix<f64>, basis: &BasisRef) -> Vec<OperatorMatrix> {
    let eig = SymmetricEigen::new(gamma.clone());
    let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let lowering: Vec<OperatorMatrix> = (0..basis.modes().len()).map(|a| mode_lowering(basis, a)).collect();
    let mut out = Vec::new();
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam <= 1e-13 * top.max(1.0) {
            continue;
        }
        let mut l = OperatorMatrix::zero(basis);
        for (a, la) in lowering.iter().enumerate() {
            let u = eig.eigenvectors[(a, k)];
            if u != 0.0 {
                l = &l + &la.scale(C64::new(lam.sqrt() * u, 0.0));
            }
        }
        out.push(l);
    }
    out
}

pub(crate) struct DenseEngine {
    basis: BasisRef,
    dim: usize,
    h0: Csr,
    timed: Vec<(Csr, Coef)>,
    jumps: Vec<Csr>,
    dephasing: f64,
    occupations: Vec<Vec<f64>>,
    breakpoints: Vec<f64>,
    sectors: Vec<Range<usize>>,
    /// Evolve only the blocks diagonal in excitation number.
    blocks: bool,
    x: Vec<C64>,
    y: Vec<C64>,
    yt: Vec<C64>,
}

/// Jump operators and, when dephasing is on, the occupation table.
pub(crate) fn dissipators(mc: &ModeCouplings, basis: &BasisRef) -> Result<(Vec<Csr>, Vec<Vec<f64>>)> {
    for (a, m) in basis.modes().iter().enumerate() {
        if !m.is_single_site() && (mc.local_decay[a] > 1e-14 || mc.dephasing > 0.0) {
            return Err(Error::Basis(format!(
                "collective mode {a} carries uncorrelated loss or dephasing; use the symmetric engine"
            )));
        }
    }
    let mut jumps: Vec<Csr> = collective_jumps(&mc.gamma, basis).into_iter().map(|l| l.csr().clone()).collect();
    for (a, &rate) in mc.local_decay.iter().enumerate() {
        if rate > 1e-14 {
            jumps.push(mode_lowering(basis, a).scale(C64::new(rate.sqrt(), 0.0)).csr().clone());
        }
    }
    let occupations = if mc.dephasing > 0.0 {
        basis.states().map(|occ| occ.iter().map(|&n| n as f64).collect()).collect()
    } else {
        Vec::new()
    };
    Ok((jumps, occupations))
}

/// Number operator summed over `sites`.
pub(crate) fn number_on(basis: &BasisRef, sites: &[usize]) -> Result<OperatorMatrix> {
    let modes = whole_modes(basis, sites)?;
    Ok(OperatorMatrix::diagonal(basis, |occ| C64::new(modes.iter().map(|&(m, _)| occ[m] as f64).sum(), 0.0)))
}

impl DenseEngine {
    pub fn new(geometry: &ChainGeometry, basis: &BasisRef, schedule: &EvolutionSchedule) -> Result<Self> {
        let mut mc = mode_couplings(geometry, basis)?;
        let probe = schedule.probe_detuning();
        mc.onsite.iter_mut().for_each(|o| *o += probe);
        let (jumps, occupations) = dissipators(&mc, basis)?;
        let h0 = hamiltonian_from_modes(&mc, basis).csr().clone();
        let mut timed = Vec::new();
        for p in &schedule.pulses {
            let up = p.raising_operator(basis)?;
            timed.push((up.adjoint().csr().clone(), Coef::Lower(p.clone())));
            timed.push((up.csr().clone(), Coef::Raise(p.clone())));
        }
        for s in &schedule.steps {
            timed.push((number_on(basis, &s.sites)?.csr().clone(), Coef::Step { value: s.value, time: s.time }));
        }
        let d = basis.dimension();
        Ok(DenseEngine {
            basis: basis.clone(),
            dim: d,
            h0,
            timed,
            jumps,
            dephasing: 2.0 * mc.dephasing,
            occupations,
            breakpoints: schedule.breakpoints(),
            sectors: (0..=basis.max_excitation()).map(|m| basis.sector_range(m)).filter(|r| !r.is_empty()).collect(),
            blocks: false,
            x: vec![ZERO; d * d],
            y: vec![ZERO; d * d],
            yt: vec![ZERO; d * d],
        })
    }

    /// Derivative for a fixed total Hamiltonian, without time dependence.
    pub(crate) fn static_derivative(h: &Csr, jumps: &[Csr], dephasing: f64, occupations: &[Vec<f64>], rho: &[C64], d: usize) -> Vec<C64> {
        let mut out = vec![ZERO; d * d];
        let mut x = vec![ZERO; d * d];
        let mut y = vec![ZERO; d * d];
        h.mul_dense_acc(rho, d, C64::new(1.0, 0.0), &mut x);
        let mut yt = vec![ZERO; d * d];
        finish(&x, &mut y, &mut yt, jumps, dephasing, occupations, rho, d, &mut out);
        out
    }
}

#[allow(clippy::too_many_arguments)]
fn finish(x: &[C64], y: &mut [C64], yt: &mut [C64], jumps: &[Csr], dephasing: f64, occupations: &[Vec<f64>], rho: &[C64], d: usize, out: &mut [C64]) {
    let mi = C64::new(0.0, -1.0);
    for i in 0..d {
        for j in 0..d {
            out[i * d + j] = mi * (x[i * d + j] - x[j * d + i].conj());
        }
    }
    for l in jumps {
        y.iter_mut().for_each(|v| *v = ZERO);
        l.mul_dense_acc(rho, d, C64::new(1.0, 0.0), y);
        for i in 0..d {
            for j in 0..d {
                yt[i * d + j] = y[j * d + i].conj();
            }
        }
        l.mul_dense_acc(yt, d, C64::new(1.0, 0.0), out);
    }
    if dephasing > 0.0 {
        for i in 0..d {
            for j in 0..d {
                let w: f64 = occupations[i].iter().zip(&occupations[j]).map(|(a, b)| a * b).sum();
                if w != 0.0 {
                    out[i * d + j] += rho[i * d + j] * (dephasing * w);
                }
            }
        }
    }
    // mirror entries are computed by different sums; pair them exactly so
    // Hermiticity survives long runs
    for i in 0..d {
        out[i * d + i].im = 0.0;
        for j in i + 1..d {
            let v = 0.5 * (out[i * d + j] + out[j * d + i].conj());
            out[i * d + j] = v;
            out[j * d + i] = v.conj();
        }
    }
}

impl DenseEngine {
    fn derivative_blocks(&mut self, t: f64, rho: &[C64], out: &mut [C64]) {
        let d = self.dim;
        let one = C64::new(1.0, 0.0);
        let mi = C64::new(0.0, -1.0);
        self.x.iter_mut().for_each(|v| *v = ZERO);
        out.iter_mut().for_each(|v| *v = ZERO);
        for r in &self.sectors {
            self.h0.mul_window_acc(rho, d, one, &mut self.x, r.clone(), r.clone());
            for (op, coef) in &self.timed {
                let c = coef.at(t);
                if c != ZERO {
                    op.mul_window_acc(rho, d, c, &mut self.x, r.clone(), r.clone());
                }
            }
            for i in r.clone() {
                for j in r.clone() {
                    out[i * d + j] = mi * (self.x[i * d + j] - self.x[j * d + i].conj());
                }
            }
        }
        for l in &self.jumps {
            for w in self.sectors.windows(2) {
                let (lo, hi) = (w[0].clone(), w[1].clone());
                for i in lo.clone() {
                    self.y[i * d + hi.start..i * d + hi.end].iter_mut().for_each(|v| *v = ZERO);
                }
                l.mul_window_acc(rho, d, one, &mut self.y, lo.clone(), hi.clone());
                for j in hi.clone() {
                    for i in lo.clone() {
                        self.yt[j * d + i] = self.y[i * d + j].conj();
                    }
                }
                l.mul_window_acc(&self.yt, d, one, out, lo.clone(), lo);
            }
        }
        for r in &self.sectors {
            for i in r.clone() {
                for j in r.clone() {
                    if self.dephasing > 0.0 {
                        let w: f64 = self.occupations[i].iter().zip(&self.occupations[j]).map(|(a, b)| a * b).sum();
                        out[i * d + j] += rho[i * d + j] * (self.dephasing * w);
                    }
                }
            }
            for i in r.clone() {
                out[i * d + i].im = 0.0;
                for j in i + 1..r.end {
                    let v = 0.5 * (out[i * d + j] + out[j * d + i].conj());
                    out[i * d + j] = v;
                    out[j * d + i] = v.conj();
                }
            }
        }
    }
}

impl MasterEquation for DenseEngine {
    fn dim(&self) -> usize {
        self.dim * self.dim
    }

    fn derivative(&mut self, t: f64, rho: &[C64], out: &mut [C64]) {
        if self.blocks {
            return self.derivative_blocks(t, rho, out);
        }
        let d = self.dim;
        self.x.iter_mut().for_each(|v| *v = ZERO);
        self.h0.mul_dense_acc(rho, d, C64::new(1.0, 0.0), &mut self.x);
        for (op, coef) in &self.timed {
            let c = coef.at(t);
            if c != ZERO {
                op.mul_dense_acc(rho, d, c, &mut self.x);
            }
        }
        finish(&self.x, &mut self.y, &mut self.yt, &self.jumps, self.dephasing, &self.occupations, rho, d, out);
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.breakpoints.clone()
    }
}

impl Engine for DenseEngine {
    fn load(&mut self, rho: &DensityState) -> Result<Vec<C64>> {
        if !same_basis(&self.basis, rho.basis()) {
            return Err(Error::Dimension("initial state on a different basis".into()));
        }
        let drives = self.timed.iter().any(|(_, c)| !matches!(c, Coef::Step { .. }));
        self.blocks = !drives && rho.is_sector_diagonal();
        Ok(rho.raw().to_vec())
    }

    fn compile(&self, obs: &Observable, geometry: &ChainGeometry) -> Result<Vec<(usize, C64)>> {
        let op = obs.operator(geometry, &self.basis)?;
        let d = self.dim;
        Ok(op.triplets().map(|(i, j, v)| (j * d + i, v)).collect())
    }

    fn invariants(&self) -> Invariants {
        let d = self.dim;
        Invariants {
            trace: (0..d).map(|i| (i * d + i, C64::new(1.0, 0.0))).collect(),
            mirror: (0..d).flat_map(|i| (i..d).map(move |j| (i * d + j, j * d + i))).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::SectorBasis;

    #[test]
    fn block_derivative_matches_full_on_sector_diagonal_states() {
        let geo = ChainGeometry::from_positions(vec![0.0, 1.03, 1.97, 3.11, 4.0]).with_losses(0.02, 0.03);
        let basis = SectorBasis::sites(5, 2, 3).unwrap();
        let schedule = EvolutionSchedule::new(1.0, 2).with_step(vec![1, 3], 0.7, 0.0);
        let d = basis.dimension();
        let mut rho = vec![ZERO; d * d];
        for i in 0..d {
            for j in 0..d {
                if basis.excitation(i) == basis.excitation(j) {
                    let (a, b) = (i.min(j) as f64, i.max(j) as f64);
                    let v = C64::new((0.3 * a + 0.7 * b).sin(), if i == j { 0.0 } else { (a - 2.0 * b).cos() });
                    rho[i * d + j] = if i <= j { v } else { v.conj() };
                }
            }
        }
        let state = DensityState::from_raw(&basis, rho.clone());
        let mut e = DenseEngine::new(&geo, &basis, &schedule).unwrap();
        e.load(&state).unwrap();
        assert!(e.blocks);
        let mut fast = vec![ZERO; d * d];
        e.derivative(0.5, &rho, &mut fast);
        e.blocks = false;
        let mut full = vec![ZERO; d * d];
        e.derivative(0.5, &rho, &mut full);
        let worst = fast.iter().zip(&full).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(worst < 1e-12, "{worst}");
    }

    #[test]
    fn drives_keep_the_full_generator() {
        let geo = ChainGeometry::regular(3, 1.0);
        let basis = SectorBasis::sites(3, 2, 2).unwrap();
        let pulse = DrivePulse::local(vec![0], crate::hamiltonian::Envelope::Constant { amplitude: 0.1 });
        let schedule = EvolutionSchedule::new(1.0, 2).with_pulse(pulse);
        let mut e = DenseEngine::new(&geo, &basis, &schedule).unwrap();
        e.load(&DensityState::ground(&basis)).unwrap();
        assert!(!e.blocks);
    }
}
