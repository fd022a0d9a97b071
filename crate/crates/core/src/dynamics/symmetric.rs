//! Engine on permutation-symmetrized site operators.
//!
//! Inside a group of `K` equivalent two-level sites the state is expanded as
//! `rho = sum_q c_q P(q)`, where `P(q)` is the sum of all distinct tensor
//! products with `q = (gg, ge, eg, ee)` factors of `|g><g|`, `|g><e|`,
//! `|e><g|` and `|e><e|`. Any superoperator of the form `sum_j S_j` maps this
//! space into itself, so local loss and dephasing stay exact.

use std::collections::HashMap;

use num_complex::Complex64 as C64;

use super::dense::Coef;
use super::{check_basis, check_sites, whole_modes, DensityState, Engine, EvolutionSchedule, Invariants, MasterEquation, Observable};
use crate::error::{Error, Result};
use crate::hamiltonian::{mode_couplings, ChainGeometry};
use crate::hilbert::{mode_weights, BasisRef};
use crate::sparse::Csr;
use crate::util::{binomial, multinomial};

const GG: usize = 0;
const GE: usize = 1;
const EG: usize = 2;
const EE: usize = 3;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

type Triplets = Vec<(usize, usize, C64)>;

pub(crate) struct SymmetricEngine {
    basis: BasisRef,
    sizes: Vec<usize>,
    elems: Vec<Box<[u8]>>,
    index: HashMap<Box<[u8]>, usize>,
    trace: Vec<f64>,
    l0: Csr,
    timed: Vec<(Csr, Coef)>,
    breakpoints: Vec<f64>,
}

fn add_scaled(t: &mut Triplets, m: &Csr, s: C64) {
    if s != ZERO {
        t.extend(m.triplets().map(|(r, c, v)| (r, c, v * s)));
    }
}

impl SymmetricEngine {
    pub fn new(geometry: &ChainGeometry, basis: &BasisRef, schedule: &EvolutionSchedule) -> Result<Self> {
        if !basis.is_two_level() {
            return Err(Error::Basis("the symmetric engine needs two-level sites".into()));
        }
        let mut mc = mode_couplings(geometry, basis)?;
        let probe = schedule.probe_detuning();
        mc.onsite.iter_mut().for_each(|o| *o += probe);
        let sizes: Vec<usize> = basis.modes().iter().map(|m| m.sites().len()).collect();
        let elems = enumerate(&sizes, basis.max_excitation());
        let index = elems.iter().enumerate().map(|(k, e)| (e.clone(), k)).collect();
        let mut engine = SymmetricEngine {
            basis: basis.clone(),
            sizes,
            elems,
            index,
            trace: Vec::new(),
            l0: Csr::zero(0, 0),
            timed: Vec::new(),
            breakpoints: schedule.breakpoints(),
        };
        engine.trace = engine.elems.iter().map(|q| engine.trace_of(q)).collect();

        let g = engine.sizes.len();
        let lower_l: Vec<Csr> = (0..g).map(|a| engine.one_site(a, &[(EG, GG), (EE, GE)])).collect();
        let raise_l: Vec<Csr> = (0..g).map(|a| engine.one_site(a, &[(GG, EG), (GE, EE)])).collect();
        let lower_r: Vec<Csr> = (0..g).map(|a| engine.one_site(a, &[(GG, GE), (EG, EE)])).collect();
        let raise_r: Vec<Csr> = (0..g).map(|a| engine.one_site(a, &[(GE, GG), (EE, EG)])).collect();
        let number_l: Vec<Csr> = (0..g).map(|a| engine.one_site(a, &[(EG, EG), (EE, EE)])).collect();
        let number_r: Vec<Csr> = (0..g).map(|a| engine.one_site(a, &[(GE, GE), (EE, EE)])).collect();

        let mut t = Vec::new();
        for a in 0..g {
            for b in 0..g {
                let h = mc.hop[(a, b)];
                if h != ZERO {
                    add_scaled(&mut t, &raise_l[a].compose(&lower_l[b]), -I * h);
                    add_scaled(&mut t, &lower_r[a].compose(&raise_r[b]), I * h.conj());
                }
                let gm = mc.gamma[(a, b)];
                if gm != 0.0 {
                    add_scaled(&mut t, &lower_l[a].compose(&raise_r[b]), C64::new(gm, 0.0));
                }
            }
            add_scaled(&mut t, &number_l[a], -I * mc.onsite[a]);
            add_scaled(&mut t, &number_r[a], I * mc.onsite[a].conj());
            if mc.local_decay[a] > 1e-14 {
                add_scaled(&mut t, &engine.one_site(a, &[(EE, GG)]), C64::new(mc.local_decay[a], 0.0));
            }
            if mc.dephasing > 0.0 {
                add_scaled(&mut t, &engine.one_site(a, &[(EE, EE)]), C64::new(2.0 * mc.dephasing, 0.0));
            }
        }
        let n = engine.elems.len();
        engine.l0 = Csr::from_triplets(n, n, t);

        for p in &schedule.pulses {
            let sites = p.driven_sites(basis.n_sites());
            let modes = mode_weights(basis, &sites, &vec![ONE; sites.len()])?;
            let (mut up, mut down) = (Vec::new(), Vec::new());
            for &(a, _) in &modes {
                add_scaled(&mut up, &raise_l[a], -I);
                add_scaled(&mut up, &raise_r[a], I);
                add_scaled(&mut down, &lower_l[a], -I);
                add_scaled(&mut down, &lower_r[a], I);
            }
            engine.timed.push((Csr::from_triplets(n, n, up), Coef::Raise(p.clone())));
            engine.timed.push((Csr::from_triplets(n, n, down), Coef::Lower(p.clone())));
        }
        for s in &schedule.steps {
            let mut m = Vec::new();
            for (a, _) in whole_modes(basis, &s.sites)? {
                add_scaled(&mut m, &number_l[a], -I);
                add_scaled(&mut m, &number_r[a], I);
            }
            engine.timed.push((Csr::from_triplets(n, n, m), Coef::Step { value: s.value, time: s.time }));
        }
        Ok(engine)
    }

    /// `sum_{j in mode a} S_j`, where `S_j` turns one factor of type `from`
    /// into type `to` with unit weight.
    fn one_site(&self, a: usize, moves: &[(usize, usize)]) -> Csr {
        let mut t = Vec::new();
        let mut target = vec![0u8; self.sizes.len() * 4];
        for (k, q) in self.elems.iter().enumerate() {
            for &(from, to) in moves {
                if q[4 * a + from] == 0 {
                    continue;
                }
                target.copy_from_slice(q);
                target[4 * a + from] -= 1;
                target[4 * a + to] += 1;
                if let Some(&r) = self.index.get(&target[..]) {
                    t.push((r, k, C64::new(target[4 * a + to] as f64, 0.0)));
                }
            }
        }
        let n = self.elems.len();
        Csr::from_triplets(n, n, t)
    }

    fn trace_of(&self, q: &[u8]) -> f64 {
        let mut w = 1.0;
        for (a, _) in self.sizes.iter().enumerate() {
            let c = &q[4 * a..4 * a + 4];
            if c[GE] != 0 || c[EG] != 0 {
                return 0.0;
            }
            w *= multinomial(&[c[GG] as usize, c[EE] as usize]);
        }
        w
    }

    /// Occupations of the ket and bra patterns of `q`, `prod_a multinomial(q_a)`
    /// and `prod_a 1 / sqrt(C(K, k) C(K, l))`.
    fn dicke_parts(&self, q: &[u8]) -> (Vec<u8>, Vec<u8>, f64, f64) {
        let g = self.sizes.len();
        let mut ket = vec![0u8; g];
        let mut bra = vec![0u8; g];
        let mut count = 1.0;
        let mut norm = 1.0;
        for (a, &k) in self.sizes.iter().enumerate() {
            let c = &q[4 * a..4 * a + 4];
            ket[a] = c[EG] + c[EE];
            bra[a] = c[GE] + c[EE];
            let counts: Vec<usize> = c.iter().map(|&x| x as usize).collect();
            count *= multinomial(&counts);
            norm /= (binomial(k, ket[a] as usize) * binomial(k, bra[a] as usize)).sqrt();
        }
        (ket, bra, count, norm)
    }

    /// Trace functional `w` of the left multiplication `m`: `Tr(m rho) = w . c`.
    fn through_trace(&self, m: &[(usize, usize, C64)]) -> Vec<(usize, C64)> {
        let mut w = vec![ZERO; self.elems.len()];
        for &(r, c, v) in m {
            w[c] += v * self.trace[r];
        }
        w.into_iter().enumerate().filter(|(_, v)| *v != ZERO).collect()
    }

    /// `Tr(O rho)` for `O` acting on the symmetric subspace, given by its
    /// elements in the grouped basis.
    fn symmetric_operator(&self, element: impl Fn(usize, usize) -> C64) -> Vec<(usize, C64)> {
        let mut out = Vec::new();
        for (k, q) in self.elems.iter().enumerate() {
            let (ket, bra, count, norm) = self.dicke_parts(q);
            let w = count * norm;
            let (Some(i), Some(j)) = (self.basis.index_of(&ket), self.basis.index_of(&bra)) else {
                continue;
            };
            let v = element(j, i) * w;
            if v != ZERO {
                out.push((k, v));
            }
        }
        out
    }

    fn lowering_maps(&self, weights: &[(usize, C64)], raise: bool) -> Triplets {
        let mut t = Vec::new();
        for &(a, w) in weights {
            if raise {
                add_scaled(&mut t, &self.one_site(a, &[(GG, EG), (GE, EE)]), w.conj());
            } else {
                add_scaled(&mut t, &self.one_site(a, &[(EG, GG), (EE, GE)]), w);
            }
        }
        t
    }

    fn correlator(&self, a: &[(usize, C64)], b: &[(usize, C64)]) -> Triplets {
        let n = self.elems.len();
        let up = Csr::from_triplets(n, n, self.lowering_maps(a, true));
        let down = Csr::from_triplets(n, n, self.lowering_maps(b, false));
        up.compose(&down).triplets().collect()
    }

    fn weights(&self, w: &[(usize, C64)]) -> Result<Vec<(usize, C64)>> {
        let (s, c): (Vec<usize>, Vec<C64>) = w.iter().copied().unzip();
        mode_weights(&self.basis, &s, &c)
    }
}

/// All count tuples with total ket and bra excitation at most `cap`.
fn enumerate(sizes: &[usize], cap: usize) -> Vec<Box<[u8]>> {
    fn rec(sizes: &[usize], cap: usize, a: usize, ket: usize, bra: usize, cur: &mut Vec<u8>, out: &mut Vec<Box<[u8]>>) {
        if a == sizes.len() {
            out.push(cur.clone().into_boxed_slice());
            return;
        }
        let k = sizes[a];
        for ee in 0..=k {
            for eg in 0..=k - ee {
                if ket + ee + eg > cap {
                    break;
                }
                for ge in 0..=k - ee - eg {
                    if bra + ee + ge > cap {
                        break;
                    }
                    let gg = k - ee - eg - ge;
                    cur.extend_from_slice(&[gg as u8, ge as u8, eg as u8, ee as u8]);
                    rec(sizes, cap, a + 1, ket + ee + eg, bra + ee + ge, cur, out);
                    cur.truncate(cur.len() - 4);
                }
            }
        }
    }
    let mut out = Vec::new();
    rec(sizes, cap, 0, 0, 0, &mut Vec::new(), &mut out);
    out
}

impl MasterEquation for SymmetricEngine {
    fn dim(&self) -> usize {
        self.elems.len()
    }

    fn derivative(&mut self, t: f64, y: &[C64], dy: &mut [C64]) {
        dy.iter_mut().for_each(|v| *v = ZERO);
        self.l0.apply_acc(y, ONE, dy);
        for (m, coef) in &self.timed {
            let c = coef.at(t);
            if c != ZERO {
                m.apply_acc(y, c, dy);
            }
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.breakpoints.clone()
    }
}

impl Engine for SymmetricEngine {
    fn load(&mut self, rho: &DensityState) -> Result<Vec<C64>> {
        check_basis(&self.basis, rho.basis())?;
        Ok(self
            .elems
            .iter()
            .map(|q| {
                let (ket, bra, _, norm) = self.dicke_parts(q);
                match (self.basis.index_of(&ket), self.basis.index_of(&bra)) {
                    (Some(i), Some(j)) => rho.get(i, j) * norm,
                    _ => ZERO,
                }
            })
            .collect())
    }

    fn compile(&self, obs: &Observable, geometry: &ChainGeometry) -> Result<Vec<(usize, C64)>> {
        let n = self.elems.len();
        let number = |a: usize, s: f64| -> Triplets {
            let mut t = Vec::new();
            add_scaled(&mut t, &self.one_site(a, &[(EG, EG), (EE, EE)]), C64::new(s, 0.0));
            t
        };
        Ok(match obs {
            Observable::Population(j) => {
                self.basis.check_site(*j)?;
                let a = self.basis.mode_of_site(*j);
                self.through_trace(&number(a, 1.0 / self.sizes[a] as f64))
            }
            Observable::TotalExcitation => {
                let t: Triplets = (0..self.sizes.len()).flat_map(|a| number(a, 1.0)).collect();
                self.through_trace(&t)
            }
            Observable::AllExcited(sites) => {
                let covered = whole_modes(&self.basis, sites)?;
                let mut out = Vec::new();
                for (k, q) in self.elems.iter().enumerate() {
                    let mut w = 1.0;
                    for (a, &size) in self.sizes.iter().enumerate() {
                        let c = &q[4 * a..4 * a + 4];
                        if covered.iter().any(|&(m, _)| m == a) {
                            if c[EE] as usize != size {
                                w = 0.0;
                            }
                        } else if c[GE] != 0 || c[EG] != 0 {
                            w = 0.0;
                        } else {
                            w *= multinomial(&[c[GG] as usize, c[EE] as usize]);
                        }
                    }
                    if w != 0.0 {
                        out.push((k, C64::new(w, 0.0)));
                    }
                }
                out
            }
            Observable::SectorWeight(m) => self
                .elems
                .iter()
                .enumerate()
                .filter(|(k, q)| self.trace[*k] != 0.0 && (0..self.sizes.len()).map(|a| q[4 * a + EE] as usize).sum::<usize>() == *m)
                .map(|(k, _)| (k, C64::new(self.trace[k], 0.0)))
                .collect(),
            Observable::Correlator { a, b } => self.through_trace(&self.correlator(&self.weights(a)?, &self.weights(b)?)),
            Observable::Lowering(b) => self.through_trace(&self.lowering_maps(&self.weights(b)?, false)),
            Observable::Intensity { input } => {
                check_sites(geometry, &self.basis)?;
                let l = self.weights(&Observable::field_weights(geometry))?;
                let mut t = self.correlator(&l, &l);
                t.extend(self.lowering_maps(&l, false).into_iter().map(|(r, c, v)| (r, c, v * I * input.conj())));
                t.extend(self.lowering_maps(&l, true).into_iter().map(|(r, c, v)| (r, c, v * -I * input)));
                t.extend((0..n).map(|k| (k, k, C64::new(input.norm_sqr(), 0.0))));
                self.through_trace(&t)
            }
            Observable::Fidelity(psi) => {
                check_basis(&self.basis, psi.basis())?;
                let a = psi.amplitudes();
                self.symmetric_operator(|i, j| a[i] * a[j].conj())
            }
            Observable::Operator(op) => {
                check_basis(&self.basis, op.basis())?;
                self.symmetric_operator(|i, j| op.get(i, j))
            }
        })
    }

    fn invariants(&self) -> Invariants {
        let mut mirror = Vec::new();
        let mut swapped = vec![0u8; self.sizes.len() * 4];
        for (k, q) in self.elems.iter().enumerate() {
            swapped.copy_from_slice(q);
            for a in 0..self.sizes.len() {
                swapped.swap(4 * a + GE, 4 * a + EG);
            }
            let j = self.index[&swapped[..]];
            if k <= j {
                mirror.push((k, j));
            }
        }
        Invariants {
            trace: self.trace.iter().enumerate().filter(|(_, w)| **w != 0.0).map(|(k, &w)| (k, C64::new(w, 0.0))).collect(),
            mirror,
        }
    }
}
