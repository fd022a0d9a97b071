//! Analytic dark, bright and symmetric states of the chain and their
//! closed-form predictions.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::hilbert::{collective_lowering, site_lowering, state_from_polynomial, BasisRef, OperatorMatrix, StateVector};
use crate::util::binomial;

/// Split of the sites into the `M` storing qubits and the rest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    set_a: Vec<usize>,
    set_b: Vec<usize>,
}

impl Partition {
    /// `set_a` holds the storing sites; the complement is taken over `0..n`.
    pub fn new(n_sites: usize, set_a: &[usize]) -> Result<Self> {
        let mut a = set_a.to_vec();
        a.sort_unstable();
        a.dedup();
        if a.len() != set_a.len() {
            return Err(Error::param("set_a", "repeated site"));
        }
        if a.is_empty() {
            return Err(Error::param("set_a", "needs at least one site"));
        }
        if let Some(&s) = a.iter().find(|&&s| s >= n_sites) {
            return Err(Error::param("set_a", format!("site {s} out of range for {n_sites} sites")));
        }
        let b = (0..n_sites).filter(|j| a.binary_search(j).is_err()).collect();
        Ok(Partition { set_a: a, set_b: b })
    }

    /// The first `m` sites.
    pub fn first(n_sites: usize, m: usize) -> Result<Self> {
        Self::new(n_sites, &(0..m).collect::<Vec<_>>())
    }

    pub fn set_a(&self) -> &[usize] {
        &self.set_a
    }

    pub fn set_b(&self) -> &[usize] {
        &self.set_b
    }

    pub fn m(&self) -> usize {
        self.set_a.len()
    }

    pub fn n_sites(&self) -> usize {
        self.set_a.len() + self.set_b.len()
    }
}

/// Sign pattern of the collective operators. `Alternating` uses
/// `(-1)^j` on site `j` and belongs to odd multiples of half a wavelength.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Signs {
    #[default]
    Uniform,
    Alternating,
}

impl Signs {
    fn of(self, site: usize) -> f64 {
        match self {
            Signs::Uniform => 1.0,
            Signs::Alternating if site % 2 == 1 => -1.0,
            Signs::Alternating => 1.0,
        }
    }
}

fn check_basis(n: usize, m: usize, basis: &BasisRef) -> Result<()> {
    if basis.n_sites() != n {
        return Err(Error::Dimension(format!("basis has {} sites, expected {n}", basis.n_sites())));
    }
    if basis.max_excitation() < m {
        return Err(Error::param("basis", format!("excitation cap {} below {m}", basis.max_excitation())));
    }
    Ok(())
}

/// `sum_{j in sites} s_j a_j^dagger` scaled by `scale`.
fn raising(basis: &BasisRef, sites: &[usize], scale: f64, signs: Signs) -> Result<OperatorMatrix> {
    let w: Vec<C64> = sites.iter().map(|&j| C64::new(scale * signs.of(j), 0.0)).collect();
    Ok(collective_lowering(basis, sites, &w)?.adjoint())
}

fn power(op: &OperatorMatrix, k: usize) -> Vec<OperatorMatrix> {
    vec![op.clone(); k]
}

/// Normalized symmetric state `(sum_j s_j^dagger)^M |G>`.
pub fn symmetric_state(n: usize, m: usize, basis: &BasisRef) -> Result<StateVector> {
    check_basis(n, m, basis)?;
    if m == 0 || m > n {
        return Err(Error::param("M", format!("needs 1 <= M <= N, got M = {m}, N = {n}")));
    }
    let all: Vec<usize> = (0..n).collect();
    let up = raising(basis, &all, 1.0, Signs::Uniform)?;
    Ok(state_from_polynomial(basis, &[(C64::new(1.0, 0.0), power(&up, m))])?.0)
}

/// `M`-excitation dark state built from the symmetric operators of the two
/// sides of `partition`.
pub fn dark_state(n: usize, m: usize, partition: &Partition, basis: &BasisRef) -> Result<StateVector> {
    dark_state_with(n, m, partition, basis, Signs::Uniform)
}

/// [`dark_state`] with a chosen sign pattern.
pub fn dark_state_with(n: usize, m: usize, partition: &Partition, basis: &BasisRef, signs: Signs) -> Result<StateVector> {
    Ok(dark_state_raw(n, m, partition, basis, signs)?.0)
}

/// Dark state and the norm of the unnormalized polynomial
/// `sum_k (-1)^k C(N-M-k, M-k) [sqrt(M) S1^dagger]^(M-k) [sqrt(N-M) S2^dagger]^k |G>`.
pub fn dark_state_raw(n: usize, m: usize, partition: &Partition, basis: &BasisRef, signs: Signs) -> Result<(StateVector, f64)> {
    if partition.n_sites() != n || partition.m() != m {
        return Err(Error::param("partition", format!("expected {m} of {n} sites in set A")));
    }
    if 2 * m > n {
        return Err(Error::NoDarkState { n, m });
    }
    check_basis(n, m, basis)?;
    // sqrt(M) S1^dagger and sqrt(N-M) S2^dagger are plain site sums
    let s1 = raising(basis, partition.set_a(), 1.0, signs)?;
    let s2 = raising(basis, partition.set_b(), 1.0, signs)?;
    let terms: Vec<(C64, Vec<OperatorMatrix>)> = (0..=m)
        .map(|k| {
            let c = if k % 2 == 0 { 1.0 } else { -1.0 } * binomial(n - m - k, m - k);
            let mut f = power(&s1, m - k);
            f.extend(power(&s2, k));
            (C64::new(c, 0.0), f)
        })
        .collect();
    state_from_polynomial(basis, &terms)
}

/// Prefactor `sqrt((N-2M+1)! (N-2M)! / ((N-M+1)! (N-M)!))` that normalizes
/// the dark-state polynomial.
pub fn dark_state_prefactor(n: usize, m: usize) -> f64 {
    use crate::util::ln_factorial;
    (0.5 * (ln_factorial(n - 2 * m + 1) + ln_factorial(n - 2 * m) - ln_factorial(n - m + 1) - ln_factorial(n - m))).exp()
}

/// Dark state when the first `M` sites couple with rate `gamma_1` and the
/// others with `gamma_2`, for `M` in {1, 2}.
pub fn dark_state_nonuniform(n: usize, m: usize, gamma_1: f64, gamma_2: f64, basis: &BasisRef) -> Result<StateVector> {
    if !(1..=2).contains(&m) {
        return Err(Error::param("M", format!("closed form only for M = 1, 2, got {m}")));
    }
    if 2 * m > n {
        return Err(Error::NoDarkState { n, m });
    }
    dark_state_two_rate(&Partition::first(n, m)?, gamma_1, gamma_2, basis)
}

/// [`dark_state_nonuniform`] for any partition: `set_a` couples with
/// `gamma_1`, `set_b` with `gamma_2`.
pub fn dark_state_two_rate(partition: &Partition, gamma_1: f64, gamma_2: f64, basis: &BasisRef) -> Result<StateVector> {
    let (n, m) = (partition.n_sites(), partition.m());
    if !(gamma_1 > 0.0 && gamma_2 > 0.0 && gamma_1.is_finite() && gamma_2.is_finite()) {
        return Err(Error::param("gamma", "rates must be finite and > 0"));
    }
    if !(1..=2).contains(&m) {
        return Err(Error::param("M", format!("closed form only for M = 1, 2, got {m}")));
    }
    if 2 * m > n {
        return Err(Error::NoDarkState { n, m });
    }
    check_basis(n, m, basis)?;
    let k = (n - m) as f64;
    let s1 = raising(basis, partition.set_a(), 1.0 / (m as f64).sqrt(), Signs::Uniform)?;
    let s2 = raising(basis, partition.set_b(), 1.0 / k.sqrt(), Signs::Uniform)?;
    let c = |x: f64| C64::new(x, 0.0);
    let terms = if m == 1 {
        vec![(c((k * gamma_2).sqrt()), vec![s1]), (c(-gamma_1.sqrt()), vec![s2])]
    } else {
        let b = -(2.0 * gamma_1 / (k * gamma_2)).sqrt();
        let cc = gamma_1 / (gamma_2 * (k - 1.0));
        vec![(c(1.0), vec![s1.clone(), s1.clone()]), (c(b), vec![s1, s2.clone()]), (c(cc), vec![s2.clone(), s2])]
    };
    Ok(state_from_polynomial(basis, &terms)?.0)
}

/// Two-quantum bosonic states `(Phi_S, Phi_D)` of a transmon chain, with the
/// first transmon holding most of `Phi_D`.
pub fn transmon_dark_states(n: usize, basis: &BasisRef) -> Result<(StateVector, StateVector)> {
    match basis.local_dim() {
        Some(l) if l >= 3 => {}
        _ => return Err(Error::Basis("transmon states need a site basis with at least three levels".into())),
    }
    if n < 2 {
        return Err(Error::param("N", "needs at least two transmons"));
    }
    check_basis(n, 2, basis)?;
    let all: Vec<usize> = (0..n).collect();
    let up = raising(basis, &all, 1.0, Signs::Uniform)?;
    let (phi_s, _) = state_from_polynomial(basis, &[(C64::new(1.0, 0.0), vec![up.clone(), up])])?;
    let a1 = site_lowering(basis, 0)?.adjoint();
    let rest: Vec<usize> = (1..n).collect();
    let s2 = raising(basis, &rest, 1.0 / ((n - 1) as f64).sqrt(), Signs::Uniform)?;
    let mode = &a1.scale(C64::new(((n - 1) as f64).sqrt(), 0.0)) - &s2;
    let (phi_d, _) = state_from_polynomial(basis, &[(C64::new(1.0, 0.0), vec![mode.clone(), mode])])?;
    Ok((phi_s, phi_d))
}

/// Per-site `<n_j>`; sites of a collective mode share its occupation equally.
pub fn population_profile(state: &StateVector) -> Vec<f64> {
    let basis = state.basis();
    let mut per_mode = vec![0.0; basis.modes().len()];
    for (k, a) in state.amplitudes().iter().enumerate() {
        let p = a.norm_sqr();
        if p == 0.0 {
            continue;
        }
        for (m, &n) in basis.state(k).iter().enumerate() {
            per_mode[m] += p * n as f64;
        }
    }
    (0..basis.n_sites())
        .map(|j| {
            let m = basis.mode_of_site(j);
            per_mode[m] / basis.modes()[m].sites().len() as f64
        })
        .collect()
}

/// Two-excitation state `(sigma_a^dagger S_rest^dagger - sqrt(N-1)/(N-2) (S_rest^dagger)^2) |G>`
/// reached from the single-excitation dark state stored on `site` under a
/// waveguide drive. It decays at `(N-2)`.
pub fn ladder_bright_state(n: usize, site: usize, basis: &BasisRef) -> Result<StateVector> {
    if n < 3 {
        return Err(Error::param("N", "needs at least three sites"));
    }
    check_basis(n, 2, basis)?;
    let p = Partition::new(n, &[site])?;
    let nf = n as f64;
    let a = site_lowering(basis, site)?.adjoint();
    let s2 = raising(basis, p.set_b(), 1.0 / (nf - 1.0).sqrt(), Signs::Uniform)?;
    let c = |x: f64| C64::new(x, 0.0);
    let terms = vec![(c(1.0), vec![a, s2.clone()]), (c(-(nf - 1.0).sqrt() / (nf - 2.0)), vec![s2.clone(), s2])];
    Ok(state_from_polynomial(basis, &terms)?.0)
}

/// Two-excitation dark state as the normalized sum of the pair states
/// `((S_nm^dagger)^2 + (S_ij^dagger)^2 - S_nm^dagger S_ij^dagger)|G>` over all pairs
/// `i < j` outside `pair = {n, m}`, with `S_xy^dagger = (sigma_x^dagger + sigma_y^dagger)/sqrt(2)`.
pub fn pairwise_dark_state(n: usize, pair: [usize; 2], basis: &BasisRef) -> Result<StateVector> {
    let p = Partition::new(n, &pair)?;
    if n < 4 {
        return Err(Error::NoDarkState { n, m: 2 });
    }
    check_basis(n, 2, basis)?;
    let r = 0.5f64.sqrt();
    let snm = raising(basis, p.set_a(), r, Signs::Uniform)?;
    let c = |x: f64| C64::new(x, 0.0);
    let mut terms = Vec::new();
    for (k, &i) in p.set_b().iter().enumerate() {
        for &j in &p.set_b()[k + 1..] {
            let sij = raising(basis, &[i, j], r, Signs::Uniform)?;
            terms.push((c(1.0), vec![snm.clone(), snm.clone()]));
            terms.push((c(1.0), vec![sij.clone(), sij.clone()]));
            terms.push((c(-1.0), vec![snm.clone(), sij]));
        }
    }
    Ok(state_from_polynomial(basis, &terms)?.0)
}

/// Named closed-form value.
#[derive(Clone, Debug, PartialEq)]
pub struct AnalyticPrediction {
    pub name: &'static str,
    pub value: f64,
    pub n: usize,
    pub m: usize,
    /// False for alternative readings kept for comparison only.
    pub adopted: bool,
}

/// Closed-form predictions for `N` sites and `M` excitations. `rates` are
/// `(gamma_1, gamma_2)` for the two-rate chain.
pub fn analytic_predictions(n: usize, m: usize, rates: Option<(f64, f64)>) -> Result<Vec<AnalyticPrediction>> {
    if m == 0 || 2 * m > n {
        return Err(Error::NoDarkState { n, m });
    }
    let (nf, mf) = (n as f64, m as f64);
    let row = |name, value, adopted| AnalyticPrediction { name, value, n, m, adopted };
    let per_excitation = (nf - 2.0 * mf + 1.0) / (nf - 2.0 * mf + 2.0);
    let mut out = vec![
        row("population_fraction", per_excitation, true),
        row("set_a_population", mf * per_excitation, true),
        row("set_a_population_literal", per_excitation, false),
        row("symmetric_rate", mf * (nf - mf + 1.0), true),
        row("bright_ladder_rate", (mf - 1.0) * (nf - mf), true),
        row("probe_linewidth", nf - 2.0 * mf, true),
        row("degeneracy", binomial(n, m) - binomial(n, m - 1), true),
        row("degeneracy_literal", binomial(n, n - m) - if n > m { binomial(n, n - m - 1) } else { 0.0 }, false),
        row("dark_state_prefactor", dark_state_prefactor(n, m), true),
        row("ground_bright_overlap", (1.0 / nf).sqrt(), true),
        row("ground_dark_overlap", (1.0 - 1.0 / nf).sqrt(), true),
        row("mutual_dark_overlap", 1.0 / (nf - 1.0), true),
        row("pair_drive_strength", ((nf - 3.0) / (nf - 1.0)).max(0.0).sqrt(), true),
        row("transmon_population_fraction", 2.0 * (nf - 1.0) / nf, true),
        row("transmon_symmetric_rate", 2.0 * nf, true),
    ];
    if n >= 3 {
        let base = ((nf - 3.0) / nf).sqrt();
        out.push(row("ladder_drive_strength", base * nf / (nf - 1.0), true));
        out.push(row("ladder_drive_strength_literal", base * (1.0 + 1.0 / ((nf - 1.0) * (nf - 2.0)).sqrt()), false));
    }
    if let Some((g1, g2)) = rates {
        if !(g1 > 0.0 && g2 > 0.0) {
            return Err(Error::param("rates", "must be > 0"));
        }
        out.push(row("nonuniform_first_population", (nf - 1.0) * g2 / (g1 + (nf - 1.0) * g2), true));
    }
    Ok(out)
}

/// Value of a named prediction.
pub fn prediction(list: &[AnalyticPrediction], name: &str) -> Option<f64> {
    list.iter().find(|p| p.name == name).map(|p| p.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{effective_hamiltonian, ChainGeometry};
    use crate::hilbert::SectorBasis;

    fn residual(geo: &ChainGeometry, psi: &StateVector) -> f64 {
        let h = effective_hamiltonian(geo, psi.basis()).unwrap();
        psi.apply(&h).norm()
    }

    #[test]
    fn symmetric_examples() {
        let b = SectorBasis::sites(2, 2, 1).unwrap();
        let s = symmetric_state(2, 1, &b).unwrap();
        let r = 0.5f64.sqrt();
        assert!((s.amplitudes()[1].re - r).abs() < 1e-15 && (s.amplitudes()[2].re - r).abs() < 1e-15);
        let b8 = SectorBasis::sites(8, 2, 2).unwrap();
        let s = symmetric_state(8, 2, &b8).unwrap();
        for k in b8.sector_range(2) {
            assert!((s.amplitudes()[k].re - (1.0 / 28.0f64).sqrt()).abs() < 1e-14);
        }
        let h = effective_hamiltonian(&ChainGeometry::regular(8, 1.0), &b8).unwrap();
        let hs = s.apply(&h);
        let expect = s.scaled(C64::new(0.0, -7.0));
        assert!(hs.amplitudes().iter().zip(expect.amplitudes()).all(|(a, b)| (a - b).norm() < 1e-12));
    }

    #[test]
    fn single_excitation_dark_state_amplitudes() {
        let b = SectorBasis::sites(8, 2, 1).unwrap();
        let d = dark_state(8, 1, &Partition::first(8, 1).unwrap(), &b).unwrap();
        let mut occ = [0u8; 8];
        occ[0] = 1;
        assert!((d.amplitudes()[b.index_of(&occ).unwrap()].re - (7.0f64 / 8.0).sqrt()).abs() < 1e-14);
        occ = [0, 0, 0, 1, 0, 0, 0, 0];
        assert!((d.amplitudes()[b.index_of(&occ).unwrap()].re + (1.0f64 / 56.0).sqrt()).abs() < 1e-14);
        let p = population_profile(&d);
        assert!((p[0] - 7.0 / 8.0).abs() < 1e-14);
        assert!(p[1..].iter().all(|x| (x - 1.0 / 56.0).abs() < 1e-14));
    }

    #[test]
    fn polynomial_norm_matches_prefactor() {
        for (n, m) in [(8, 1), (8, 2), (8, 3), (10, 4), (12, 6), (7, 3)] {
            let b = SectorBasis::sites(n, 2, m).unwrap();
            let (_, norm) = dark_state_raw(n, m, &Partition::first(n, m).unwrap(), &b, Signs::Uniform).unwrap();
            assert!((norm * dark_state_prefactor(n, m) - 1.0).abs() < 1e-12, "{n} {m}");
        }
        assert!((dark_state_prefactor(8, 2) - (1.0f64 / 1260.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn two_excitation_closed_form() {
        let n = 8;
        let nf = n as f64;
        let b = SectorBasis::sites(n, 2, 2).unwrap();
        let p = Partition::first(n, 2).unwrap();
        let s1 = raising(&b, p.set_a(), 0.5f64.sqrt(), Signs::Uniform).unwrap();
        let s2 = raising(&b, p.set_b(), 1.0 / (nf - 2.0).sqrt(), Signs::Uniform).unwrap();
        let c = |x: f64| C64::new(x, 0.0);
        let pre = (5.0f64 / 7.0).sqrt();
        let terms = vec![
            (c(pre), vec![s1.clone(), s1.clone()]),
            (c(-pre * 2f64.sqrt() / (nf - 2.0).sqrt()), vec![s1, s2.clone()]),
            (c(pre / (nf - 3.0)), vec![s2.clone(), s2]),
        ];
        let (shown, norm) = state_from_polynomial(&b, &terms).unwrap();
        assert!((norm - 1.0).abs() < 1e-12, "{norm}");
        assert!((shown.inner(&dark_state(n, 2, &p, &b).unwrap()).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bright_ladder_state_rate() {
        let b = SectorBasis::sites(8, 2, 2).unwrap();
        let psi = ladder_bright_state(8, 0, &b).unwrap();
        let h = effective_hamiltonian(&ChainGeometry::regular(8, 1.0), &b).unwrap();
        let expect = psi.scaled(C64::new(0.0, -3.0));
        assert!(psi.apply(&h).amplitudes().iter().zip(expect.amplitudes()).all(|(a, b)| (a - b).norm() < 1e-12));
    }

    #[test]
    fn pairwise_sum_and_mutual_overlap() {
        for n in [6usize, 8, 10] {
            let b = SectorBasis::sites(n, 2, 2).unwrap();
            let pw = pairwise_dark_state(n, [0, 1], &b).unwrap();
            let d = dark_state(n, 2, &Partition::first(n, 2).unwrap(), &b).unwrap();
            assert!((pw.inner(&d).norm() - 1.0).abs() < 1e-12);
            let one = dark_state(n, 1, &Partition::new(n, &[0]).unwrap(), &b).unwrap();
            let two = dark_state(n, 1, &Partition::new(n, &[1]).unwrap(), &b).unwrap();
            assert!((one.inner(&two).norm() - 1.0 / (n as f64 - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn three_excitation_closed_form() {
        let n = 9;
        let nf = n as f64;
        let b = SectorBasis::sites(n, 2, 3).unwrap();
        let p = Partition::first(n, 3).unwrap();
        let s1 = raising(&b, p.set_a(), 1.0 / 3f64.sqrt(), Signs::Uniform).unwrap();
        let s2 = raising(&b, p.set_b(), 1.0 / (nf - 3.0).sqrt(), Signs::Uniform).unwrap();
        let c = |x: f64| C64::new(x, 0.0);
        let pre = ((nf - 5.0) / (nf - 2.0)).sqrt();
        let terms = vec![
            (c(pre * 3f64.sqrt() / 2.0), vec![s1.clone(), s1.clone(), s1.clone()]),
            (c(-pre * 1.5 / (nf - 3.0).sqrt()), vec![s1.clone(), s1.clone(), s2.clone()]),
            (c(pre * 3f64.sqrt() / (nf - 4.0)), vec![s1.clone(), s2.clone(), s2.clone()]),
            (c(-pre * (nf - 3.0).sqrt() / ((nf - 4.0) * (nf - 5.0))), vec![s2.clone(), s2.clone(), s2]),
        ];
        let (shown, norm) = state_from_polynomial(&b, &terms).unwrap();
        let general = dark_state(n, 3, &p, &b).unwrap();
        assert!((shown.inner(&general).norm() - 1.0).abs() < 1e-12);
        assert!((norm - 1.0).abs() < 1e-12, "{norm}");
    }

    #[test]
    fn dark_states_are_null_and_orthogonal() {
        for n in 4..=8 {
            for m in 1..=n / 2 {
                let b = SectorBasis::sites(n, 2, m).unwrap();
                let d = dark_state(n, m, &Partition::first(n, m).unwrap(), &b).unwrap();
                assert!(residual(&ChainGeometry::regular(n, 1.0), &d) < 1e-12);
                let s = symmetric_state(n, m, &b).unwrap();
                assert!(s.inner(&d).norm() < 1e-12);
                let alt = dark_state_with(n, m, &Partition::first(n, m).unwrap(), &b, Signs::Alternating).unwrap();
                assert!(residual(&ChainGeometry::regular(n, 0.5), &alt) < 1e-12);
            }
        }
    }

    #[test]
    fn two_excitation_dark_state_on_groups() {
        let grouped = SectorBasis::grouped(8, &[vec![0, 1], (2..8).collect()], 2).unwrap();
        let d = dark_state(8, 2, &Partition::first(8, 2).unwrap(), &grouped).unwrap();
        assert!(residual(&ChainGeometry::regular(8, 1.0), &d) < 1e-12);
        let p = population_profile(&d);
        assert!((p[0] + p[1] - 5.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn no_dark_state_beyond_half_filling() {
        let b = SectorBasis::sites(5, 2, 3).unwrap();
        assert!(matches!(dark_state(5, 3, &Partition::first(5, 3).unwrap(), &b), Err(Error::NoDarkState { n: 5, m: 3 })));
    }

    #[test]
    fn nonuniform_states() {
        let b = SectorBasis::sites(6, 2, 1).unwrap();
        let d = dark_state_nonuniform(6, 1, 1.0, 20.0, &b).unwrap();
        assert!((population_profile(&d)[0] - 100.0 / 101.0).abs() < 1e-12);
        let geo = ChainGeometry::regular(6, 1.0).with_gamma_1d(vec![1.0, 20.0, 20.0, 20.0, 20.0, 20.0]);
        assert!(residual(&geo, &d) < 1e-12);

        let b8 = SectorBasis::sites(8, 2, 2).unwrap();
        let d2 = dark_state_nonuniform(8, 2, 1.0, 4.0, &b8).unwrap();
        let mut g = vec![4.0; 8];
        g[0] = 1.0;
        g[1] = 1.0;
        assert!(residual(&ChainGeometry::regular(8, 1.0).with_gamma_1d(g), &d2) < 1e-12);
        let uniform = dark_state(8, 2, &Partition::first(8, 2).unwrap(), &b8).unwrap();
        let same = dark_state_nonuniform(8, 2, 1.0, 1.0, &b8).unwrap();
        assert!((uniform.inner(&same).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn transmon_states() {
        for n in [2usize, 4] {
            let b = SectorBasis::sites(n, 3, 2).unwrap();
            let (phi_s, phi_d) = transmon_dark_states(n, &b).unwrap();
            let p = population_profile(&phi_d);
            assert!((p[0] - 2.0 * (n as f64 - 1.0) / n as f64).abs() < 1e-12);
            let all: Vec<usize> = (0..n).collect();
            let l = collective_lowering(&b, &all, &vec![C64::new(1.0, 0.0); n]).unwrap();
            assert!(phi_d.apply(&l).norm() < 1e-12);
            let h = effective_hamiltonian(&ChainGeometry::regular(n, 1.0), &b).unwrap();
            let hs = phi_s.apply(&h);
            let expect = phi_s.scaled(C64::new(0.0, -(n as f64)));
            assert!(hs.amplitudes().iter().zip(expect.amplitudes()).all(|(a, b)| (a - b).norm() < 1e-12));
        }
        assert!(transmon_dark_states(3, &SectorBasis::sites(3, 2, 2).unwrap()).is_err());
    }

    #[test]
    fn prediction_examples() {
        let p = analytic_predictions(8, 1, None).unwrap();
        assert!((prediction(&p, "ground_dark_overlap").unwrap() - 0.935_414_346_693_485_4).abs() < 1e-12);
        assert_eq!(prediction(&p, "degeneracy"), Some(7.0));
        let p2 = analytic_predictions(8, 2, Some((1.0, 4.0))).unwrap();
        assert_eq!(prediction(&p2, "degeneracy"), Some(20.0));
        assert!((prediction(&p2, "population_fraction").unwrap() - 5.0 / 6.0).abs() < 1e-15);
        assert!((prediction(&p2, "ladder_drive_strength_literal").unwrap() - 0.912_556_9).abs() < 1e-6);
        assert!(analytic_predictions(5, 3, None).is_err());
    }
}
