//! Excitation-number truncated Hilbert spaces and the operators acting on them.
//!
//! A [`SectorBasis`] is built from *modes*. In the ordinary site basis every
//! mode is one physical site with `local_dim` levels (2 for a qubit, more for a
//! bosonic transmon). A grouped basis instead collapses a set of equivalent
//! two-level sites into a single mode that only holds their permutation
//! symmetric (Dicke) states; its ladder matrix elements are
//! `sqrt(n (K - n + 1))` for a group of `K` sites. Collective operators over
//! whole groups have the same matrix elements in either description, which is
//! what lets symmetric problems run on a much smaller space.
//!
//! States are ordered first by total excitation, then in descending
//! lexicographic order of the occupation vector, so `|e_1 g>` precedes
//! `|g e_2>`. Site indices are zero-based throughout.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Mul, Sub};
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::sparse::Csr;
use crate::util::binomial;

/// Shared handle to an immutable basis.
pub type BasisRef = Arc<SectorBasis>;

/// One bosonic or collective degree of freedom of a [`SectorBasis`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mode {
    sites: Vec<usize>,
    levels: usize,
}

impl Mode {
    /// Physical sites represented by this mode (sorted).
    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    /// Number of local levels per site.
    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn is_single_site(&self) -> bool {
        self.sites.len() == 1
    }

    /// Largest occupation the mode can hold.
    pub fn max_occupation(&self) -> usize {
        if self.is_single_site() {
            self.levels - 1
        } else {
            self.sites.len()
        }
    }

    /// `<n-1| a |n>` for the mode's lowering operator.
    pub fn lowering_element(&self, n: usize) -> f64 {
        if n == 0 {
            return 0.0;
        }
        if self.is_single_site() {
            (n as f64).sqrt()
        } else {
            let k = self.sites.len();
            ((n * (k + 1 - n)) as f64).sqrt()
        }
    }
}

/// Enumerated occupation-number basis with a cap on the total excitation.
pub struct SectorBasis {
    n_sites: usize,
    modes: Vec<Mode>,
    mode_of_site: Vec<usize>,
    max_excitation: usize,
    states: Vec<Box<[u8]>>,
    index: HashMap<Box<[u8]>, usize>,
    sector_starts: Vec<usize>,
}

impl fmt::Debug for SectorBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SectorBasis")
            .field("n_sites", &self.n_sites)
            .field("modes", &self.modes.len())
            .field("max_excitation", &self.max_excitation)
            .field("dimension", &self.states.len())
            .finish()
    }
}

impl PartialEq for SectorBasis {
    fn eq(&self, other: &Self) -> bool {
        self.n_sites == other.n_sites
            && self.max_excitation == other.max_excitation
            && self.modes == other.modes
    }
}

/// Site basis of `n_sites` sites with `local_dim` levels each and at most
/// `max_excitation` quanta in total.
pub fn enumerate_basis(n_sites: usize, local_dim: usize, max_excitation: usize) -> Result<BasisRef> {
    SectorBasis::sites(n_sites, local_dim, max_excitation)
}

impl SectorBasis {
    pub fn sites(n_sites: usize, local_dim: usize, max_excitation: usize) -> Result<BasisRef> {
        if n_sites == 0 {
            return Err(Error::param("n_sites", "need at least one site"));
        }
        if local_dim < 2 {
            return Err(Error::param("local_dim", format!("must be >= 2, got {local_dim}")));
        }
        if local_dim > u8::MAX as usize {
            return Err(Error::param("local_dim", "too many local levels"));
        }
        let most = n_sites * (local_dim - 1);
        if max_excitation > most {
            return Err(Error::param(
                "max_excitation",
                format!("{max_excitation} exceeds the {most} quanta the sites can hold"),
            ));
        }
        let modes = (0..n_sites).map(|s| Mode { sites: vec![s], levels: local_dim }).collect();
        Ok(Arc::new(Self::build(n_sites, modes, max_excitation)))
    }

    /// Basis in which each group of two-level sites is one collective mode.
    ///
    /// The groups must partition `0..n_sites`; they are stored ordered by their
    /// smallest site. A cap above `n_sites` is clamped.
    pub fn grouped(n_sites: usize, groups: &[Vec<usize>], max_excitation: usize) -> Result<BasisRef> {
        if n_sites == 0 {
            return Err(Error::param("n_sites", "need at least one site"));
        }
        if n_sites > u8::MAX as usize {
            return Err(Error::param("n_sites", "too many sites for a grouped basis"));
        }
        let mut seen = vec![false; n_sites];
        let mut modes = Vec::with_capacity(groups.len());
        for g in groups {
            if g.is_empty() {
                return Err(Error::param("groups", "empty group"));
            }
            let mut sites = g.clone();
            sites.sort_unstable();
            for &s in &sites {
                if s >= n_sites {
                    return Err(Error::param("groups", format!("site {s} out of range")));
                }
                if seen[s] {
                    return Err(Error::param("groups", format!("site {s} appears twice")));
                }
                seen[s] = true;
            }
            modes.push(Mode { sites, levels: 2 });
        }
        if let Some(missing) = seen.iter().position(|&b| !b) {
            return Err(Error::param("groups", format!("site {missing} is not in any group")));
        }
        modes.sort_by_key(|m| m.sites[0]);
        Ok(Arc::new(Self::build(n_sites, modes, max_excitation.min(n_sites))))
    }

    fn build(n_sites: usize, modes: Vec<Mode>, max_excitation: usize) -> Self {
        let mut mode_of_site = vec![0; n_sites];
        for (k, m) in modes.iter().enumerate() {
            for &s in &m.sites {
                mode_of_site[s] = k;
            }
        }
        let caps: Vec<usize> = modes.iter().map(Mode::max_occupation).collect();
        // capacity of modes[i..]
        let mut suffix = vec![0usize; caps.len() + 1];
        for i in (0..caps.len()).rev() {
            suffix[i] = suffix[i + 1] + caps[i];
        }
        let mut states = Vec::new();
        let mut sector_starts = Vec::with_capacity(max_excitation + 2);
        let mut cur = vec![0u8; caps.len()];
        for m in 0..=max_excitation {
            sector_starts.push(states.len());
            fill(&caps, &suffix, 0, m, &mut cur, &mut states);
        }
        sector_starts.push(states.len());
        let index = states.iter().enumerate().map(|(k, s)| (s.clone(), k)).collect();
        SectorBasis { n_sites, modes, mode_of_site, max_excitation, states, index, sector_starts }
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn mode_of_site(&self, site: usize) -> usize {
        self.mode_of_site[site]
    }

    pub fn max_excitation(&self) -> usize {
        self.max_excitation
    }

    pub fn dimension(&self) -> usize {
        self.states.len()
    }

    /// Occupations (one entry per mode) of basis state `k`.
    pub fn state(&self, k: usize) -> &[u8] {
        &self.states[k]
    }

    pub fn states(&self) -> impl Iterator<Item = &[u8]> {
        self.states.iter().map(|s| &**s)
    }

    pub fn index_of(&self, occupations: &[u8]) -> Option<usize> {
        self.index.get(occupations).copied()
    }

    pub fn excitation(&self, k: usize) -> usize {
        self.states[k].iter().map(|&n| n as usize).sum()
    }

    /// Index range of the states holding exactly `m` quanta.
    pub fn sector_range(&self, m: usize) -> std::ops::Range<usize> {
        if m > self.max_excitation {
            return self.states.len()..self.states.len();
        }
        self.sector_starts[m]..self.sector_starts[m + 1]
    }

    /// True when every mode is a single physical site.
    pub fn is_site_basis(&self) -> bool {
        self.modes.iter().all(Mode::is_single_site)
    }

    /// Local dimension shared by all sites, if this is a site basis.
    pub fn local_dim(&self) -> Option<usize> {
        if self.is_site_basis() {
            Some(self.modes[0].levels)
        } else {
            None
        }
    }

    /// All sites are two-level systems.
    pub fn is_two_level(&self) -> bool {
        self.modes.iter().all(|m| m.levels == 2)
    }

    pub(crate) fn check_site(&self, site: usize) -> Result<()> {
        if site >= self.n_sites {
            return Err(Error::param("site", format!("site {site} out of range for {} sites", self.n_sites)));
        }
        Ok(())
    }
}

fn fill(caps: &[usize], suffix: &[usize], pos: usize, remaining: usize, cur: &mut [u8], out: &mut Vec<Box<[u8]>>) {
    if pos == caps.len() {
        if remaining == 0 {
            out.push(cur.to_vec().into_boxed_slice());
        }
        return;
    }
    if remaining > suffix[pos] {
        return;
    }
    for n in (0..=remaining.min(caps[pos])).rev() {
        cur[pos] = n as u8;
        fill(caps, suffix, pos + 1, remaining - n, cur, out);
    }
    cur[pos] = 0;
}

/// Sparse complex matrix acting on the states of a [`SectorBasis`].
#[derive(Clone, Debug)]
pub struct OperatorMatrix {
    basis: BasisRef,
    m: Csr,
}

impl OperatorMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed and
    /// exact zeros dropped.
    pub fn from_triplets(basis: &BasisRef, triplets: Vec<(usize, usize, C64)>) -> Self {
        let d = basis.dimension();
        OperatorMatrix { basis: basis.clone(), m: Csr::from_triplets(d, d, triplets) }
    }

    pub(crate) fn csr(&self) -> &Csr {
        &self.m
    }

    pub fn zero(basis: &BasisRef) -> Self {
        Self::from_triplets(basis, Vec::new())
    }

    pub fn identity(basis: &BasisRef) -> Self {
        Self::diagonal(basis, |_| C64::new(1.0, 0.0))
    }

    /// Diagonal operator with entry `f(occupations)` on each basis state.
    pub fn diagonal(basis: &BasisRef, f: impl Fn(&[u8]) -> C64) -> Self {
        let t = (0..basis.dimension()).map(|k| (k, k, f(basis.state(k)))).collect();
        Self::from_triplets(basis, t)
    }

    pub fn basis(&self) -> &BasisRef {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.dimension()
    }

    pub fn nnz(&self) -> usize {
        self.m.nnz()
    }

    /// Nonzeros of row `r` as `(col, value)` pairs.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        self.m.row(r)
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        self.m.triplets()
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.m.get(r, c)
    }

    pub fn adjoint(&self) -> Self {
        OperatorMatrix { basis: self.basis.clone(), m: self.m.adjoint() }
    }

    pub fn scale(&self, s: C64) -> Self {
        OperatorMatrix { basis: self.basis.clone(), m: self.m.scale(s) }
    }

    /// `self * other`.
    pub fn compose(&self, other: &OperatorMatrix) -> Self {
        assert!(same_basis(&self.basis, &other.basis), "compose: basis mismatch");
        OperatorMatrix { basis: self.basis.clone(), m: self.m.compose(&other.m) }
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.dim());
        self.m.apply(x)
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut d = DMatrix::zeros(self.dim(), self.dim());
        for (r, c, v) in self.triplets() {
            d[(r, c)] += v;
        }
        d
    }

    /// Largest `|A_rc - conj(A_cr)|`.
    pub fn hermiticity_error(&self) -> f64 {
        let adj = self.m.adjoint();
        self.m.axpy(C64::new(-1.0, 0.0), &adj).triplets().map(|(_, _, v)| v.norm()).fold(0.0, f64::max)
    }

    /// Restriction to the sector with exactly `m` quanta, as a dense block.
    pub fn sector_block(&self, m: usize) -> DMatrix<C64> {
        let range = self.basis.sector_range(m);
        let n = range.len();
        let mut d = DMatrix::zeros(n, n);
        for r in range.clone() {
            for (c, v) in self.row(r) {
                if range.contains(&c) {
                    d[(r - range.start, c - range.start)] += v;
                }
            }
        }
        d
    }

    fn combine(&self, other: &OperatorMatrix, sign: f64) -> Self {
        assert!(same_basis(&self.basis, &other.basis), "operator basis mismatch");
        OperatorMatrix { basis: self.basis.clone(), m: self.m.axpy(C64::new(sign, 0.0), &other.m) }
    }
}

impl Add for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn add(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        self.combine(rhs, 1.0)
    }
}

impl Sub for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn sub(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        self.combine(rhs, -1.0)
    }
}

impl Mul for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn mul(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        self.compose(rhs)
    }
}

impl Mul<C64> for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn mul(self, rhs: C64) -> OperatorMatrix {
        self.scale(rhs)
    }
}

impl Mul<f64> for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn mul(self, rhs: f64) -> OperatorMatrix {
        self.scale(C64::new(rhs, 0.0))
    }
}

pub(crate) fn same_basis(a: &BasisRef, b: &BasisRef) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

/// Complex amplitudes over the states of a [`SectorBasis`].
#[derive(Clone, Debug)]
pub struct StateVector {
    basis: BasisRef,
    amps: Vec<C64>,
}

impl StateVector {
    pub fn new(basis: &BasisRef, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != basis.dimension() {
            return Err(Error::Dimension(format!(
                "{} amplitudes for a basis of dimension {}",
                amps.len(),
                basis.dimension()
            )));
        }
        Ok(StateVector { basis: basis.clone(), amps })
    }

    /// The all-ground state `|G>`.
    pub fn ground(basis: &BasisRef) -> Self {
        let mut amps = vec![C64::new(0.0, 0.0); basis.dimension()];
        amps[0] = C64::new(1.0, 0.0);
        StateVector { basis: basis.clone(), amps }
    }

    /// Basis state with the given per-mode occupations.
    pub fn occupation(basis: &BasisRef, occupations: &[u8]) -> Result<Self> {
        let k = basis
            .index_of(occupations)
            .ok_or_else(|| Error::Basis(format!("occupation {occupations:?} not in basis")))?;
        let mut amps = vec![C64::new(0.0, 0.0); basis.dimension()];
        amps[k] = C64::new(1.0, 0.0);
        Ok(StateVector { basis: basis.clone(), amps })
    }

    pub fn basis(&self) -> &BasisRef {
        &self.basis
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n <= 0.0 || !n.is_finite() {
            return Err(Error::DegenerateState(format!("cannot normalize a vector of norm {n}")));
        }
        Ok(StateVector { basis: self.basis.clone(), amps: self.amps.iter().map(|a| a / n).collect() })
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> C64 {
        assert!(same_basis(&self.basis, &other.basis), "inner: basis mismatch");
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn apply(&self, op: &OperatorMatrix) -> StateVector {
        assert!(same_basis(&self.basis, op.basis()), "apply: basis mismatch");
        StateVector { basis: self.basis.clone(), amps: op.apply(&self.amps) }
    }

    /// `<self|op|self>`.
    pub fn expectation(&self, op: &OperatorMatrix) -> C64 {
        self.inner(&self.apply(op))
    }

    pub fn scaled(&self, s: C64) -> StateVector {
        StateVector { basis: self.basis.clone(), amps: self.amps.iter().map(|a| a * s).collect() }
    }

    /// Weight in the sector with exactly `m` quanta.
    pub fn sector_weight(&self, m: usize) -> f64 {
        self.amps[self.basis.sector_range(m)].iter().map(|a| a.norm_sqr()).sum()
    }

    /// Rewrites a grouped-basis state in the site basis of the same cap.
    pub fn expand_to_sites(&self) -> Result<StateVector> {
        if self.basis.is_site_basis() {
            return Ok(self.clone());
        }
        let basis = &self.basis;
        let sites = SectorBasis::sites(basis.n_sites(), 2, basis.max_excitation())?;
        let mut amps = vec![C64::new(0.0, 0.0); sites.dimension()];
        let mut counts = vec![0u8; basis.modes().len()];
        for (k, occ) in sites.states().enumerate() {
            counts.iter_mut().for_each(|c| *c = 0);
            for (s, &n) in occ.iter().enumerate() {
                counts[basis.mode_of_site(s)] += n;
            }
            if let Some(g) = basis.index_of(&counts) {
                let w: f64 = basis
                    .modes()
                    .iter()
                    .zip(&counts)
                    .map(|(m, &c)| binomial(m.sites().len(), c as usize))
                    .product();
                amps[k] = self.amps[g] / w.sqrt();
            }
        }
        StateVector::new(&sites, amps)
    }
}

/// Lowering operator of a whole mode: `a` for a site, `J^-` for a group.
pub fn mode_lowering(basis: &BasisRef, mode: usize) -> OperatorMatrix {
    let m = &basis.modes()[mode];
    let mut t = Vec::new();
    let mut target = vec![0u8; basis.modes().len()];
    for (k, occ) in basis.states().enumerate() {
        let n = occ[mode] as usize;
        if n == 0 {
            continue;
        }
        target.copy_from_slice(occ);
        target[mode] -= 1;
        let r = basis.index_of(&target).expect("lowering stays inside the basis");
        t.push((r, k, C64::new(m.lowering_element(n), 0.0)));
    }
    OperatorMatrix::from_triplets(basis, t)
}

/// Lowering operator of one site.
pub fn site_lowering(basis: &BasisRef, site: usize) -> Result<OperatorMatrix> {
    basis.check_site(site)?;
    let mode = basis.mode_of_site(site);
    if !basis.modes()[mode].is_single_site() {
        return Err(Error::Basis(format!("site {site} is merged into a collective mode")));
    }
    Ok(mode_lowering(basis, mode))
}

pub fn site_raising(basis: &BasisRef, site: usize) -> Result<OperatorMatrix> {
    Ok(site_lowering(basis, site)?.adjoint())
}

/// Occupation of one site (`sigma^dagger sigma` for a qubit).
pub fn site_number(basis: &BasisRef, site: usize) -> Result<OperatorMatrix> {
    basis.check_site(site)?;
    let mode = basis.mode_of_site(site);
    if !basis.modes()[mode].is_single_site() {
        return Err(Error::Basis(format!("site {site} is merged into a collective mode")));
    }
    Ok(OperatorMatrix::diagonal(basis, |occ| C64::new(occ[mode] as f64, 0.0)))
}

/// Total number of quanta.
pub fn total_number(basis: &BasisRef) -> OperatorMatrix {
    OperatorMatrix::diagonal(basis, |occ| C64::new(occ.iter().map(|&n| n as f64).sum(), 0.0))
}

/// `sum_j w_j sigma_j` over `sites`.
///
/// In a grouped basis each touched group must be covered completely and with
/// a single weight; the result is then `w * J^-` of that group.
pub fn collective_lowering(basis: &BasisRef, sites: &[usize], weights: &[C64]) -> Result<OperatorMatrix> {
    let mut total = OperatorMatrix::zero(basis);
    for (m, w) in mode_weights(basis, sites, weights)? {
        total = &total + &mode_lowering(basis, m).scale(w);
    }
    Ok(total)
}

/// Per-mode weights of `sum_j w_j sigma_j`, checked as in [`collective_lowering`].
pub(crate) fn mode_weights(basis: &BasisRef, sites: &[usize], weights: &[C64]) -> Result<Vec<(usize, C64)>> {
    if sites.is_empty() {
        return Err(Error::param("sites", "empty site set"));
    }
    if sites.len() != weights.len() {
        return Err(Error::param("weights", format!("{} weights for {} sites", weights.len(), sites.len())));
    }
    if weights.iter().any(|w| !w.re.is_finite() || !w.im.is_finite()) {
        return Err(Error::param("weights", "non-finite weight"));
    }
    let mut per_mode: Vec<Option<(C64, usize)>> = vec![None; basis.modes().len()];
    let mut seen = vec![false; basis.n_sites()];
    for (&s, &w) in sites.iter().zip(weights) {
        basis.check_site(s)?;
        if seen[s] {
            return Err(Error::param("sites", format!("site {s} listed twice")));
        }
        seen[s] = true;
        let m = basis.mode_of_site(s);
        match &mut per_mode[m] {
            slot @ None => *slot = Some((w, 1)),
            Some((w0, count)) => {
                if (*w0 - w).norm() > 1e-15 * w0.norm().max(1.0) {
                    return Err(Error::Basis(format!("non-uniform weights inside collective mode {m}")));
                }
                *count += 1;
            }
        }
    }
    let mut out = Vec::new();
    for (m, slot) in per_mode.iter().enumerate() {
        if let Some((w, count)) = slot {
            if *count != basis.modes()[m].sites().len() {
                return Err(Error::Basis(format!("site set covers collective mode {m} only partially")));
            }
            out.push((m, *w));
        }
    }
    Ok(out)
}

/// Uniform symmetric lowering operator `sum_j sigma_j / sqrt(K)` over `sites`.
pub fn symmetric_lowering(basis: &BasisRef, sites: &[usize]) -> Result<OperatorMatrix> {
    let w = C64::new(1.0 / (sites.len().max(1) as f64).sqrt(), 0.0);
    collective_lowering(basis, sites, &vec![w; sites.len()])
}

/// Applies `sum_k c_k prod(factors_k)` to `|G>` and normalizes.
///
/// Factors are raising operators and act right to left, so `[A, B]` means
/// `A B |G>`. Returns the normalized state and the norm before normalization.
pub fn state_from_polynomial(basis: &BasisRef, terms: &[(C64, Vec<OperatorMatrix>)]) -> Result<(StateVector, f64)> {
    let ground = StateVector::ground(basis);
    let mut acc = vec![C64::new(0.0, 0.0); basis.dimension()];
    for (c, factors) in terms {
        if factors.len() > basis.max_excitation() {
            return Err(Error::param(
                "terms",
                format!("a product of {} raising operators exceeds the cap {}", factors.len(), basis.max_excitation()),
            ));
        }
        let mut v = ground.clone();
        for f in factors.iter().rev() {
            if !same_basis(basis, f.basis()) {
                return Err(Error::Dimension("polynomial factor built on another basis".into()));
            }
            v = v.apply(f);
        }
        for (a, x) in acc.iter_mut().zip(v.amplitudes()) {
            *a += c * x;
        }
    }
    let raw = StateVector::new(basis, acc)?;
    let norm = raw.norm();
    if norm < 1e-300 {
        return Err(Error::DegenerateState("polynomial annihilates the ground state".into()));
    }
    Ok((raw.normalized()?, norm))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn basis_dimensions() {
        assert_eq!(enumerate_basis(2, 2, 2).unwrap().dimension(), 4);
        assert_eq!(enumerate_basis(8, 2, 2).unwrap().dimension(), 37);
        assert_eq!(enumerate_basis(16, 2, 3).unwrap().dimension(), 697);
    }

    #[test]
    fn two_qubit_ordering() {
        let b = enumerate_basis(2, 2, 2).unwrap();
        let s: Vec<&[u8]> = b.states().collect();
        assert_eq!(s, vec![&[0, 0][..], &[1, 0], &[0, 1], &[1, 1]]);
    }

    #[test]
    fn index_round_trips_and_is_sorted() {
        let b = enumerate_basis(5, 3, 4).unwrap();
        let mut prev: Option<(usize, Vec<u8>)> = None;
        for k in 0..b.dimension() {
            assert_eq!(b.index_of(b.state(k)), Some(k));
            let key = (b.excitation(k), b.state(k).to_vec());
            if let Some((pe, po)) = &prev {
                assert!(key.0 > *pe || (key.0 == *pe && key.1 < *po));
            }
            prev = Some(key);
        }
    }

    #[test]
    fn invalid_bounds() {
        assert!(enumerate_basis(0, 2, 0).is_err());
        assert!(enumerate_basis(3, 1, 0).is_err());
        assert!(enumerate_basis(3, 2, 4).is_err());
    }

    #[test]
    fn qubit_and_boson_lowering() {
        let b = enumerate_basis(1, 2, 1).unwrap();
        let s = site_lowering(&b, 0).unwrap();
        let e = StateVector::occupation(&b, &[1]).unwrap();
        assert!((e.apply(&s).amplitudes()[0] - c(1.0)).norm() < 1e-15);
        assert!(StateVector::ground(&b).apply(&s).norm() < 1e-15);

        let b3 = enumerate_basis(1, 3, 2).unwrap();
        let a = site_lowering(&b3, 0).unwrap();
        let two = StateVector::occupation(&b3, &[2]).unwrap();
        let one = b3.index_of(&[1]).unwrap();
        assert!((two.apply(&a).amplitudes()[one] - c(2f64.sqrt())).norm() < 1e-15);
    }

    #[test]
    fn number_on_doubly_excited() {
        let b = enumerate_basis(2, 2, 2).unwrap();
        let s = site_lowering(&b, 0).unwrap();
        let n = s.adjoint().compose(&s);
        let ee = StateVector::occupation(&b, &[1, 1]).unwrap();
        assert!((ee.expectation(&n) - c(1.0)).norm() < 1e-15);
        assert!(site_lowering(&b, 2).is_err());
    }

    #[test]
    fn collective_examples() {
        let b = enumerate_basis(2, 2, 2).unwrap();
        let w = 1.0 / 2f64.sqrt();
        let s = collective_lowering(&b, &[0, 1], &[c(w), c(w)]).unwrap();
        let out = StateVector::occupation(&b, &[1, 1]).unwrap().apply(&s);
        assert!((out.amplitudes()[1] - c(w)).norm() < 1e-15);
        assert!((out.amplitudes()[2] - c(w)).norm() < 1e-15);

        let sym = StateVector::new(&b, vec![c(0.0), c(w), c(w), c(0.0)]).unwrap();
        let anti = collective_lowering(&b, &[0, 1], &[c(w), c(-w)]).unwrap();
        assert!(sym.apply(&anti).norm() < 1e-15);
        assert!(collective_lowering(&b, &[], &[]).is_err());
    }

    #[test]
    fn symmetric_mode_normalization() {
        let b = enumerate_basis(6, 2, 2).unwrap();
        let s2 = symmetric_lowering(&b, &[2, 3, 4, 5]).unwrap();
        let v = StateVector::ground(&b).apply(&s2.adjoint()).apply(&s2);
        assert!((v.amplitudes()[0] - c(1.0)).norm() < 1e-14);
    }

    #[test]
    fn polynomial_states() {
        let b = enumerate_basis(2, 2, 2).unwrap();
        let up0 = site_raising(&b, 0).unwrap();
        let (v, n) = state_from_polynomial(&b, &[(c(1.0), vec![up0])]).unwrap();
        assert!((n - 1.0).abs() < 1e-15);
        assert!((v.amplitudes()[1] - c(1.0)).norm() < 1e-15);

        let s1d = symmetric_lowering(&b, &[0, 1]).unwrap().adjoint();
        let (v, _) = state_from_polynomial(&b, &[(c(1.0), vec![s1d.clone(), s1d.clone()])]).unwrap();
        assert!((v.amplitudes()[3].norm() - 1.0).abs() < 1e-15);

        let s = site_lowering(&b, 0).unwrap();
        assert!(matches!(
            state_from_polynomial(&b, &[(c(1.0), vec![s])]),
            Err(Error::DegenerateState(_))
        ));
    }

    #[test]
    fn grouped_basis_matches_dicke_counting() {
        let g = SectorBasis::grouped(6, &[vec![0, 1], vec![2, 3, 4, 5]], 3).unwrap();
        // (nA, nB) with nA <= 2, nB <= 4, total <= 3
        assert_eq!(g.dimension(), 1 + 2 + 3 + 3);
        assert!(site_lowering(&g, 0).is_err());
        assert!(symmetric_lowering(&g, &[0, 2]).is_err());
        let s2 = symmetric_lowering(&g, &[2, 3, 4, 5]).unwrap();
        let (v, _) = state_from_polynomial(&g, &[(c(1.0), vec![s2.adjoint(), s2.adjoint()])]).unwrap();
        let full = v.expand_to_sites().unwrap();
        let sites = full.basis().clone();
        let s2_site = symmetric_lowering(&sites, &[2, 3, 4, 5]).unwrap();
        let (w, _) = state_from_polynomial(&sites, &[(c(1.0), vec![s2_site.adjoint(), s2_site.adjoint()])]).unwrap();
        assert!((full.inner(&w).norm() - 1.0).abs() < 1e-14);
    }
}
