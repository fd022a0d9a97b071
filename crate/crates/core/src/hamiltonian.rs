//! Waveguide-mediated couplings, the effective non-Hermitian Hamiltonian and
//! drive generators.
//!
//! Units: rates in units of the reference waveguide coupling, positions in
//! units of the guided wavelength, times in inverse rate units.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::hilbert::{collective_lowering, total_number, BasisRef, OperatorMatrix};

const SNAP: f64 = 1e-12;

/// Qubit chain parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainGeometry {
    /// Positions in units of the guided wavelength.
    pub positions: Vec<f64>,
    /// Individual decay rate into the waveguide.
    pub gamma_1d: Vec<f64>,
    /// Static detuning of each site from the reference frequency.
    pub detunings: Vec<f64>,
    /// Non-radiative decay rate, equal for all sites.
    pub gamma_nr: f64,
    /// Pure dephasing rate, equal for all sites.
    pub gamma_dep: f64,
    /// Transmon anharmonicity `U` (irrelevant for two-level sites).
    pub anharmonicity: f64,
}

impl ChainGeometry {
    /// Evenly spaced chain of `n` lossless sites with unit coupling.
    pub fn regular(n: usize, spacing: f64) -> Self {
        Self::from_positions((0..n).map(|j| j as f64 * spacing).collect())
    }

    pub fn from_positions(positions: Vec<f64>) -> Self {
        let n = positions.len();
        ChainGeometry {
            positions,
            gamma_1d: vec![1.0; n],
            detunings: vec![0.0; n],
            gamma_nr: 0.0,
            gamma_dep: 0.0,
            anharmonicity: 0.0,
        }
    }

    pub fn with_gamma_1d(mut self, gamma_1d: Vec<f64>) -> Self {
        self.gamma_1d = gamma_1d;
        self
    }

    pub fn with_detunings(mut self, detunings: Vec<f64>) -> Self {
        self.detunings = detunings;
        self
    }

    pub fn with_losses(mut self, gamma_nr: f64, gamma_dep: f64) -> Self {
        self.gamma_nr = gamma_nr;
        self.gamma_dep = gamma_dep;
        self
    }

    pub fn with_anharmonicity(mut self, u: f64) -> Self {
        self.anharmonicity = u;
        self
    }

    pub fn n_sites(&self) -> usize {
        self.positions.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.positions.len();
        if n == 0 {
            return Err(Error::param("positions", "empty chain"));
        }
        if self.gamma_1d.len() != n || self.detunings.len() != n {
            return Err(Error::Dimension(format!(
                "{} positions, {} couplings, {} detunings",
                n,
                self.gamma_1d.len(),
                self.detunings.len()
            )));
        }
        if self.positions.iter().any(|x| !x.is_finite()) {
            return Err(Error::param("positions", "non-finite position"));
        }
        if self.gamma_1d.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(Error::param("gamma_1d", "couplings must be finite and >= 0"));
        }
        if self.detunings.iter().any(|d| !d.is_finite()) {
            return Err(Error::param("detunings", "non-finite detuning"));
        }
        for (name, v) in [("gamma_nr", self.gamma_nr), ("gamma_dep", self.gamma_dep)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::param(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        if !self.anharmonicity.is_finite() {
            return Err(Error::param("anharmonicity", "non-finite"));
        }
        Ok(())
    }

    /// Mean waveguide coupling.
    pub fn mean_gamma_1d(&self) -> f64 {
        self.gamma_1d.iter().sum::<f64>() / self.gamma_1d.len().max(1) as f64
    }
}

/// `(sin, cos)` of the propagation phase `2 pi |dx|`, exact on quarter-wavelength
/// multiples.
pub fn propagation_phase(dx: f64) -> (f64, f64) {
    let quarters = 4.0 * dx.abs();
    let r = quarters.round();
    if (quarters - r).abs() < SNAP {
        match (r as u64) % 4 {
            0 => (0.0, 1.0),
            1 => (1.0, 0.0),
            2 => (0.0, -1.0),
            _ => (-1.0, 0.0),
        }
    } else {
        let phi = 2.0 * PI * dx.abs();
        (phi.sin(), phi.cos())
    }
}

/// Coherent (`j`) and dissipative (`gamma`) coupling matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingMatrices {
    pub j: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
}

impl CouplingMatrices {
    /// `J - i Gamma / 2`.
    pub fn complex(&self) -> DMatrix<C64> {
        self.j.zip_map(&self.gamma, |j, g| C64::new(j, -0.5 * g))
    }
}

pub fn coupling_matrices(geometry: &ChainGeometry) -> Result<CouplingMatrices> {
    geometry.validate()?;
    let n = geometry.n_sites();
    let mut j = DMatrix::zeros(n, n);
    let mut gamma = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            let amp = (geometry.gamma_1d[a] * geometry.gamma_1d[b]).sqrt();
            let (s, c) = propagation_phase(geometry.positions[a] - geometry.positions[b]);
            j[(a, b)] = 0.5 * amp * s;
            gamma[(a, b)] = amp * c;
        }
    }
    Ok(CouplingMatrices { j, gamma })
}

/// Site couplings reduced to the modes of a basis.
///
/// `hop[(a, b)]` multiplies `A_a^+ A_b^-`; inside a collective mode it is the
/// common off-diagonal coupling, and `onsite[a]` absorbs the remainder of the
/// diagonal. `local_decay[a]` is the per-site rate of the uncorrelated decay
/// channel left over inside a group, plus non-radiative loss.
#[derive(Clone, Debug)]
pub(crate) struct ModeCouplings {
    pub hop: DMatrix<C64>,
    pub onsite: Vec<C64>,
    pub gamma: DMatrix<f64>,
    pub local_decay: Vec<f64>,
    pub dephasing: f64,
    pub anharmonic: C64,
}

fn uniform<T: Copy>(vals: impl IntoIterator<Item = T>, close: impl Fn(T, T) -> bool) -> Option<T> {
    let mut it = vals.into_iter();
    let first = it.next()?;
    it.all(|v| close(first, v)).then_some(first)
}

fn near(a: f64, b: f64) -> bool {
    (a - b).abs() <= SNAP * a.abs().max(b.abs()).max(1.0)
}

pub(crate) fn mode_couplings(geometry: &ChainGeometry, basis: &BasisRef) -> Result<ModeCouplings> {
    if geometry.n_sites() != basis.n_sites() {
        return Err(Error::Dimension(format!(
            "geometry has {} sites, basis has {}",
            geometry.n_sites(),
            basis.n_sites()
        )));
    }
    let cm = coupling_matrices(geometry)?;
    let modes = basis.modes();
    let g = modes.len();
    let mut hop = DMatrix::zeros(g, g);
    let mut gamma = DMatrix::zeros(g, g);
    let mut onsite = vec![C64::new(0.0, 0.0); g];
    let mut local_decay = vec![geometry.gamma_nr; g];
    let non_uniform = |what: &str, a: usize| Error::Basis(format!("{what} is not uniform over collective mode {a}"));
    for a in 0..g {
        let sa = modes[a].sites();
        for b in 0..g {
            let sb = modes[b].sites();
            let pairs = sa.iter().flat_map(|&m| sb.iter().map(move |&n| (m, n))).filter(|(m, n)| m != n);
            let j = uniform(pairs.clone().map(|(m, n)| cm.j[(m, n)]), near);
            let gm = uniform(pairs.map(|(m, n)| cm.gamma[(m, n)]), near);
            if a != b {
                let (j, gm) = (j.ok_or_else(|| non_uniform("coupling", a))?, gm.ok_or_else(|| non_uniform("coupling", a))?);
                hop[(a, b)] = C64::new(j, -0.5 * gm);
                gamma[(a, b)] = gm;
            }
        }
        let jd = uniform(sa.iter().map(|&m| cm.j[(m, m)]), near).ok_or_else(|| non_uniform("coupling", a))?;
        let gd = uniform(sa.iter().map(|&m| cm.gamma[(m, m)]), near).ok_or_else(|| non_uniform("coupling", a))?;
        let det = uniform(sa.iter().map(|&m| geometry.detunings[m]), near).ok_or_else(|| non_uniform("detuning", a))?;
        // off-diagonal coupling inside the mode (equal to the diagonal one for a single site)
        let (jo, go) = if sa.len() > 1 {
            let pairs = sa.iter().flat_map(|&m| sa.iter().map(move |&n| (m, n))).filter(|(m, n)| m != n);
            (
                uniform(pairs.clone().map(|(m, n)| cm.j[(m, n)]), near).ok_or_else(|| non_uniform("coupling", a))?,
                uniform(pairs.map(|(m, n)| cm.gamma[(m, n)]), near).ok_or_else(|| non_uniform("coupling", a))?,
            )
        } else {
            (jd, gd)
        };
        hop[(a, a)] = C64::new(jo, -0.5 * go);
        gamma[(a, a)] = go;
        local_decay[a] += gd - go;
        onsite[a] = C64::new(jd - jo + det, -0.5 * (gd - go) - 0.5 * geometry.gamma_nr - geometry.gamma_dep);
    }
    if local_decay.iter().any(|&r| r < -SNAP) {
        return Err(Error::Basis("grouping implies a negative uncorrelated decay rate".into()));
    }
    Ok(ModeCouplings {
        hop,
        onsite,
        gamma,
        local_decay,
        dephasing: geometry.gamma_dep,
        anharmonic: C64::new(-0.5 * geometry.anharmonicity, -geometry.gamma_dep),
    })
}

/// Builds `sum_mn (J_mn - i Gamma_mn/2) s_m^+ s_n + sum_m (Delta_m - i(g_nr + 2 g_dep)/2) n_m
/// - (U/2) sum_m n_m (n_m - 1)` on `basis`.
///
/// For sites with more than two levels the dephasing contribution is
/// `-i g_dep n_m^2`, which reduces to the two-level form when `n_m^2 = n_m`.
/// Grouped bases require couplings and detunings that are uniform over each
/// group.
pub fn effective_hamiltonian(geometry: &ChainGeometry, basis: &BasisRef) -> Result<OperatorMatrix> {
    let mc = mode_couplings(geometry, basis)?;
    Ok(hamiltonian_from_modes(&mc, basis))
}

pub(crate) fn hamiltonian_from_modes(mc: &ModeCouplings, basis: &BasisRef) -> OperatorMatrix {
    let modes = basis.modes();
    let g = modes.len();
    let mut t = Vec::new();
    let mut target = vec![0u8; g];
    for (k, occ) in basis.states().enumerate() {
        let mut diag = C64::new(0.0, 0.0);
        for a in 0..g {
            let n = occ[a] as usize;
            if n == 0 {
                continue;
            }
            diag += mc.onsite[a] * n as f64;
            if modes[a].is_single_site() {
                diag += mc.anharmonic * (n * (n - 1)) as f64;
            }
            let lb = modes[a].lowering_element(n);
            diag += mc.hop[(a, a)] * lb * lb;
        }
        if diag != C64::new(0.0, 0.0) {
            t.push((k, k, diag));
        }
        for b in 0..g {
            let nb = occ[b] as usize;
            if nb == 0 {
                continue;
            }
            let lb = modes[b].lowering_element(nb);
            for a in 0..g {
                if a == b || mc.hop[(a, b)] == C64::new(0.0, 0.0) {
                    continue;
                }
                let na = occ[a] as usize;
                if na >= modes[a].max_occupation() {
                    continue;
                }
                target.copy_from_slice(occ);
                target[b] -= 1;
                target[a] += 1;
                let r = basis.index_of(&target).expect("hopping conserves excitation");
                t.push((r, k, mc.hop[(a, b)] * lb * modes[a].lowering_element(na + 1)));
            }
        }
    }
    OperatorMatrix::from_triplets(basis, t)
}

/// Whether a drive addresses chosen sites or enters through the waveguide.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DriveKind {
    Local,
    Waveguide,
}

/// Time profile `Omega(t)` of a drive.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Envelope {
    Rectangular { amplitude: f64, t_on: f64, t_off: f64 },
    Gaussian { peak: f64, center: f64, fwhm: f64 },
    Constant { amplitude: f64 },
}

impl Envelope {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Envelope::Rectangular { amplitude, t_on, t_off } => {
                if t >= t_on && t < t_off {
                    amplitude
                } else {
                    0.0
                }
            }
            Envelope::Gaussian { peak, center, fwhm } => {
                let s = fwhm / (8.0 * 2f64.ln()).sqrt();
                peak * (-0.5 * ((t - center) / s).powi(2)).exp()
            }
            Envelope::Constant { amplitude } => amplitude,
        }
    }

    /// `int_a^b Omega(t) dt`.
    pub fn area(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        match *self {
            Envelope::Rectangular { amplitude, t_on, t_off } => amplitude * (b.min(t_off) - a.max(t_on)).max(0.0),
            Envelope::Gaussian { peak, center, fwhm } => {
                let s = fwhm / (8.0 * 2f64.ln()).sqrt();
                let z = |t: f64| libm::erf((t - center) / (s * 2f64.sqrt()));
                peak * s * (PI / 2.0).sqrt() * (z(b) - z(a))
            }
            Envelope::Constant { amplitude } => amplitude * (b - a),
        }
    }

    /// Discontinuities of the profile.
    pub fn edges(&self) -> Vec<f64> {
        match *self {
            Envelope::Rectangular { t_on, t_off, .. } => vec![t_on, t_off],
            _ => Vec::new(),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok_amp = |a: f64| a.is_finite() && a >= 0.0;
        match *self {
            Envelope::Rectangular { amplitude, t_on, t_off } => {
                if !ok_amp(amplitude) {
                    return Err(Error::param("amplitude", "must be finite and >= 0"));
                }
                if !(t_on.is_finite() && t_off.is_finite() && t_off > t_on) {
                    return Err(Error::param("t_off", "rectangular pulse needs t_off > t_on"));
                }
            }
            Envelope::Gaussian { peak, center, fwhm } => {
                if !ok_amp(peak) {
                    return Err(Error::param("peak", "must be finite and >= 0"));
                }
                if !(fwhm.is_finite() && fwhm > 0.0) {
                    return Err(Error::param("fwhm", "must be > 0"));
                }
                if !center.is_finite() {
                    return Err(Error::param("center", "non-finite"));
                }
            }
            Envelope::Constant { amplitude } => {
                if !ok_amp(amplitude) {
                    return Err(Error::param("amplitude", "must be finite and >= 0"));
                }
            }
        }
        Ok(())
    }
}

/// A coherent drive `Omega(t) sum_j (e^{-i delta t} s_j^+ + h.c.)`.
///
/// For the waveguide kind all sites are driven in phase, the frame rotates
/// with the probe and `detuning` enters as a static `Delta_wg sum_j n_j`
/// term. For the local kind `detuning` is the carrier offset and appears as a
/// rotating phase.
#[derive(Clone, Debug, PartialEq)]
pub struct DrivePulse {
    pub kind: DriveKind,
    pub targets: Vec<usize>,
    pub envelope: Envelope,
    pub detuning: f64,
}

impl DrivePulse {
    pub fn local(targets: Vec<usize>, envelope: Envelope) -> Self {
        DrivePulse { kind: DriveKind::Local, targets, envelope, detuning: 0.0 }
    }

    pub fn waveguide(envelope: Envelope, detuning: f64) -> Self {
        DrivePulse { kind: DriveKind::Waveguide, targets: Vec::new(), envelope, detuning }
    }

    pub fn validate(&self, n_sites: usize) -> Result<()> {
        self.envelope.validate()?;
        if !self.detuning.is_finite() {
            return Err(Error::param("detuning", "non-finite"));
        }
        if self.kind == DriveKind::Local {
            if self.targets.is_empty() {
                return Err(Error::param("targets", "local drive without targets"));
            }
            if let Some(&s) = self.targets.iter().find(|&&s| s >= n_sites) {
                return Err(Error::param("targets", format!("site {s} out of range for {n_sites} sites")));
            }
        }
        Ok(())
    }

    /// Sites the drive acts on.
    pub fn driven_sites(&self, n_sites: usize) -> Vec<usize> {
        match self.kind {
            DriveKind::Local => self.targets.clone(),
            DriveKind::Waveguide => (0..n_sites).collect(),
        }
    }

    /// Complex amplitude multiplying `sum_j s_j^+` at time `t`.
    pub fn raising_coefficient(&self, t: f64) -> C64 {
        let omega = self.envelope.value(t);
        match self.kind {
            DriveKind::Local if self.detuning != 0.0 => C64::from_polar(omega, -self.detuning * t),
            _ => C64::new(omega, 0.0),
        }
    }

    /// Raising part `sum_j s_j^+` over the driven sites.
    pub(crate) fn raising_operator(&self, basis: &BasisRef) -> Result<OperatorMatrix> {
        self.validate(basis.n_sites())?;
        let sites = self.driven_sites(basis.n_sites());
        let ones = vec![C64::new(1.0, 0.0); sites.len()];
        Ok(collective_lowering(basis, &sites, &ones)?.adjoint())
    }
}

/// Hermitian drive Hamiltonian of `pulse` at time `t`.
pub fn drive_generator(pulse: &DrivePulse, geometry: &ChainGeometry, basis: &BasisRef, t: f64) -> Result<OperatorMatrix> {
    if geometry.n_sites() != basis.n_sites() {
        return Err(Error::Dimension("geometry and basis site counts differ".into()));
    }
    let up = pulse.raising_operator(basis)?;
    let c = pulse.raising_coefficient(t);
    let mut h = &up.scale(c) + &up.adjoint().scale(c.conj());
    if pulse.kind == DriveKind::Waveguide && pulse.detuning != 0.0 {
        h = &h + &total_number(basis).scale(C64::new(pulse.detuning, 0.0));
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{enumerate_basis, site_lowering, symmetric_lowering, SectorBasis};

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn two_site_couplings() {
        for (d, j, g) in [(1.0, 0.0, 1.0), (0.25, 0.5, 0.0), (0.5, 0.0, -1.0)] {
            let cm = coupling_matrices(&ChainGeometry::regular(2, d)).unwrap();
            assert_eq!(cm.j[(0, 1)], j);
            assert_eq!(cm.gamma[(0, 1)], g);
            assert_eq!(cm.j[(0, 0)], 0.0);
            assert_eq!(cm.gamma[(1, 1)], 1.0);
        }
    }

    #[test]
    fn single_qubit_hamiltonian() {
        let b = enumerate_basis(1, 2, 1).unwrap();
        let h = effective_hamiltonian(&ChainGeometry::regular(1, 1.0), &b).unwrap();
        assert_eq!(h.get(1, 1), C64::new(0.0, -0.5));
        assert_eq!(h.nnz(), 1);
    }

    #[test]
    fn quarter_wave_zeros() {
        let cm = coupling_matrices(&ChainGeometry::regular(6, 0.75)).unwrap();
        for m in 0..5 {
            assert_eq!(cm.gamma[(m, m + 1)], 0.0);
        }
        for m in 0..4 {
            assert_eq!(cm.j[(m, m + 2)], 0.0);
        }
    }

    #[test]
    fn collective_form_at_mirror_spacing() {
        let (n, m) = (7, 2);
        let (g1, g2) = (1.0, 3.0);
        let gammas: Vec<f64> = (0..n).map(|j| if j < m { g1 } else { g2 }).collect();
        let geo = ChainGeometry::regular(n, 1.0).with_gamma_1d(gammas);
        let b = enumerate_basis(n, 2, 3).unwrap();
        let h = effective_hamiltonian(&geo, &b).unwrap();
        let a: Vec<usize> = (0..m).collect();
        let rest: Vec<usize> = (m..n).collect();
        let s1 = symmetric_lowering(&b, &a).unwrap();
        let s2 = symmetric_lowering(&b, &rest).unwrap();
        let gbar = 0.5 * ((m * (n - m)) as f64 * g1 * g2).sqrt();
        let i = C64::new(0.0, 1.0);
        let t1 = (&s1.adjoint() * &s1).scale(-i * (m as f64 * g1 / 2.0));
        let t2 = (&s2.adjoint() * &s2).scale(-i * ((n - m) as f64 * g2 / 2.0));
        let t3 = (&(&s1.adjoint() * &s2) + &(&s2.adjoint() * &s1)).scale(-i * gbar);
        let rebuilt = &(&t1 + &t2) + &t3;
        let diff = (&h - &rebuilt).to_dense();
        assert!(diff.iter().all(|z| z.norm() < 1e-14));
    }

    #[test]
    fn hamiltonian_conserves_excitation() {
        let geo = ChainGeometry::regular(5, 0.3).with_detunings(vec![0.1, 0.0, -0.2, 0.0, 0.4]).with_losses(0.05, 0.02);
        let b = enumerate_basis(5, 2, 3).unwrap();
        let h = effective_hamiltonian(&geo, &b).unwrap();
        for (r, k, _) in h.triplets() {
            assert_eq!(b.excitation(r), b.excitation(k));
        }
    }

    #[test]
    fn grouped_hamiltonian_matches_site_hamiltonian() {
        let n = 6;
        let geo = ChainGeometry::regular(n, 1.0).with_detunings(vec![0.0, 0.0, 2.0, 2.0, 2.0, 2.0]);
        let groups = vec![vec![0, 1], vec![2, 3, 4, 5]];
        let gb = SectorBasis::grouped(n, &groups, 3).unwrap();
        let sb = enumerate_basis(n, 2, 3).unwrap();
        let hg = effective_hamiltonian(&geo, &gb).unwrap();
        let hs = effective_hamiltonian(&geo, &sb).unwrap();
        // compare through expansion of every grouped basis state
        for k in 0..gb.dimension() {
            let mut amps = vec![c(0.0); gb.dimension()];
            amps[k] = c(1.0);
            let v = crate::hilbert::StateVector::new(&gb, amps).unwrap();
            let lhs = v.apply(&hg).expand_to_sites().unwrap();
            let rhs = v.expand_to_sites().unwrap().apply(&hs);
            let err: f64 = lhs.amplitudes().iter().zip(rhs.amplitudes()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(err < 1e-13, "state {k}: {err}");
        }
        let bad = ChainGeometry::regular(n, 0.3);
        assert!(effective_hamiltonian(&bad, &gb).is_err());
    }

    #[test]
    fn transmon_on_site_terms() {
        let geo = ChainGeometry::regular(1, 1.0).with_anharmonicity(0.4).with_losses(0.0, 0.1);
        let b = enumerate_basis(1, 3, 2).unwrap();
        let h = effective_hamiltonian(&geo, &b).unwrap();
        // n = 2: -i*Gamma/2*2 - i*g_dep*4 - U
        let expect = C64::new(-0.4, -1.0 - 0.4);
        assert!((h.get(2, 2) - expect).norm() < 1e-14);
    }

    #[test]
    fn drive_examples() {
        let b = enumerate_basis(3, 2, 2).unwrap();
        let geo = ChainGeometry::regular(3, 1.0);
        let p = DrivePulse::local(vec![0], Envelope::Rectangular { amplitude: 0.3, t_on: 0.0, t_off: 1.0 });
        let h = drive_generator(&p, &geo, &b, 0.5).unwrap();
        let s = site_lowering(&b, 0).unwrap();
        let expect = (&s + &s.adjoint()).scale(c(0.3));
        assert!((&h - &expect).to_dense().iter().all(|z| z.norm() < 1e-15));
        assert_eq!(drive_generator(&p, &geo, &b, 1.5).unwrap().nnz(), 0);
        assert!(h.hermiticity_error() < 1e-15);

        let bad = DrivePulse::local(vec![5], Envelope::Constant { amplitude: 0.1 });
        assert!(drive_generator(&bad, &geo, &b, 0.0).is_err());
    }

    #[test]
    fn gaussian_half_maximum_and_area() {
        let env = Envelope::Gaussian { peak: 0.25, center: 3.0, fwhm: 8.0 };
        assert!((env.value(7.0) - 0.125).abs() < 1e-15);
        assert!((env.value(-1.0) - 0.125).abs() < 1e-15);
        let s = 8.0 / (8.0 * 2f64.ln()).sqrt();
        let full = 0.25 * s * (2.0 * PI).sqrt();
        assert!((env.area(-1e3, 1e3) - full).abs() < 1e-12);
        // trapezoid check of the truncated area
        let n = 200_000;
        let h = 100.0 / n as f64;
        let trap: f64 = (0..=n).map(|k| env.value(k as f64 * h) * if k == 0 || k == n { 0.5 } else { 1.0 }).sum::<f64>() * h;
        assert!((env.area(0.0, 100.0) - trap).abs() < 1e-8);
    }
}
