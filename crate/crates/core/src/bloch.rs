//! Single-particle two-band model: Bloch coefficients, band energies and
//! eigenvectors, exceptional twists, the real-space form with optional hopping
//! noise, and the antiunitary symmetry check.

use std::f64::consts::TAU;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::linalg::csqrt;
use crate::{CMat, Error, Result, C64};

/// Physical parameters of one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSpec {
    l: usize,
    m: f64,
    phi: f64,
    u: C64,
    disorder_sigma: f64,
    seed: u64,
}

impl ModelSpec {
    pub fn new(l: usize, m: f64) -> Result<Self> {
        if l < 2 {
            return Err(Error::InvalidModel(format!("L = {l} must be at least 2")));
        }
        if !m.is_finite() {
            return Err(Error::InvalidModel("m must be finite".into()));
        }
        Ok(Self {
            l,
            m,
            phi: 0.0,
            u: C64::new(0.0, 0.0),
            disorder_sigma: 0.0,
            seed: 0,
        })
    }

    /// Sets the twist, reduced into [0, 2π).
    pub fn with_phi(mut self, phi: f64) -> Self {
        self.phi = phi.rem_euclid(TAU);
        if self.phi >= TAU {
            self.phi = 0.0;
        }
        self
    }

    pub fn with_u(mut self, u: C64) -> Self {
        self.u = u;
        self
    }

    pub fn with_real_u(self, u: f64) -> Self {
        self.with_u(C64::new(u, 0.0))
    }

    pub fn with_disorder(mut self, sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "disorder sigma = {sigma} must be finite and non-negative"
            )));
        }
        self.disorder_sigma = sigma;
        self.seed = seed;
        Ok(self)
    }

    pub fn l(&self) -> usize {
        self.l
    }
    pub fn m(&self) -> f64 {
        self.m
    }
    pub fn phi(&self) -> f64 {
        self.phi
    }
    pub fn u(&self) -> C64 {
        self.u
    }
    pub fn disorder_sigma(&self) -> f64 {
        self.disorder_sigma
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn is_clean(&self) -> bool {
        self.disorder_sigma == 0.0
    }

    /// Tolerance below which m_k or p_k counts as zero.
    pub fn defect_tol(&self) -> f64 {
        1e-10 * self.m.abs().max(1.0)
    }
}

/// Band index ±.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Band {
    Plus,
    Minus,
}

impl Band {
    pub fn sign(self) -> f64 {
        match self {
            Band::Plus => 1.0,
            Band::Minus => -1.0,
        }
    }

    pub fn from_sign(s: f64) -> Self {
        if s >= 0.0 {
            Band::Plus
        } else {
            Band::Minus
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Band::Plus => Band::Minus,
            Band::Minus => Band::Plus,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Band::Plus => '+',
            Band::Minus => '-',
        }
    }
}

/// Sublattice orbital. The numeric value is the offset inside a unit cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Orbital {
    A = 0,
    B = 1,
}

impl Orbital {
    pub fn index(self) -> usize {
        self as usize
    }
    pub fn other(self) -> Self {
        match self {
            Orbital::A => Orbital::B,
            Orbital::B => Orbital::A,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochCoeffs {
    pub k: usize,
    pub theta: f64,
    pub m_k: f64,
    pub p_k: f64,
}

impl BlochCoeffs {
    /// Coefficients at an arbitrary shifted momentum.
    pub fn at_theta(theta: f64, m: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self {
            k: 0,
            theta,
            m_k: m - c - s,
            p_k: m - c + s,
        }
    }

    /// E_{(k,+)} = √p_k · √m_k with principal roots.
    pub fn energy_plus(&self) -> C64 {
        csqrt(self.p_k) * csqrt(self.m_k)
    }

    /// The 2×2 Bloch matrix [[0, m_k], [p_k, 0]].
    pub fn matrix(&self) -> CMat {
        let mut h = CMat::zeros(2, 2);
        h[(0, 1)] = C64::new(self.m_k, 0.0);
        h[(1, 0)] = C64::new(self.p_k, 0.0);
        h
    }
}

/// Shifted momentum θ = (2πk + φ)/L. `k` wraps modulo L.
pub fn theta(k: usize, model: &ModelSpec) -> f64 {
    (TAU * (k % model.l) as f64 + model.phi) / model.l as f64
}

pub fn bloch_coefficients(k: usize, model: &ModelSpec) -> BlochCoeffs {
    let k = k % model.l;
    BlochCoeffs {
        k,
        ..BlochCoeffs::at_theta(theta(k, model), model.m)
    }
}

/// E_{(k,±)} under the principal-root convention.
pub fn band_energy(k: usize, band: Band, model: &ModelSpec) -> C64 {
    bloch_coefficients(k, model).energy_plus() * band.sign()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleParticleMode {
    pub k: usize,
    pub band: Band,
    pub energy: C64,
    /// (a, b) amplitudes.
    pub right: [C64; 2],
    /// (a, b) covector entries, paired bilinearly with `right`.
    pub left: [C64; 2],
    /// Set when m_k or p_k vanishes; vectors are then only unit-normalized.
    pub defective: bool,
}

/// Both band modes of momentum `k`, ordered (+, −).
pub fn single_particle_spectrum(k: usize, model: &ModelSpec) -> [SingleParticleMode; 2] {
    let c = bloch_coefficients(k, model);
    let sm = csqrt(c.m_k);
    let sp = csqrt(c.p_k);
    let e = sp * sm;
    let tol = model.defect_tol();
    let defective = c.m_k.abs() < tol || c.p_k.abs() < tol;
    let norm = (e * 2.0).sqrt();
    [Band::Plus, Band::Minus].map(|band| {
        let s = band.sign();
        let mut right = [sm * s, sp];
        let mut left = [sp * s, sm];
        if defective {
            for v in [&mut right, &mut left] {
                let n = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
                if n > 0.0 {
                    v[0] /= n;
                    v[1] /= n;
                }
            }
        } else {
            for x in right.iter_mut().chain(left.iter_mut()) {
                *x /= norm;
            }
        }
        SingleParticleMode {
            k: c.k,
            band,
            energy: e * s,
            right,
            left,
            defective,
        }
    })
}

/// Which Bloch coefficient vanishes at an exceptional twist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    MZero,
    PZero,
}

impl Family {
    pub fn label(self) -> &'static str {
        match self {
            Family::MZero => "M_ZERO",
            Family::PZero => "P_ZERO",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExceptionalTwist {
    pub k_e: usize,
    pub phi_e: f64,
    pub family: Family,
    pub theta_e: f64,
}

impl ExceptionalTwist {
    /// The model evaluated at this twist.
    pub fn model(&self, base: &ModelSpec) -> ModelSpec {
        base.with_phi(self.phi_e)
    }
}

/// The four shifted momenta where m_k or p_k vanishes, each mapped onto its
/// unique (k_e, φ_e) with φ_e ∈ [0, 2π). Sorted by θ_e.
pub fn solve_exceptional_twists(model: &ModelSpec) -> Result<Vec<ExceptionalTwist>> {
    let m = model.m;
    if m * m >= 2.0 {
        return Err(Error::NoSolution { m });
    }
    let r = (2.0 - m * m).sqrt();
    let l = model.l as f64;
    let mut out: Vec<ExceptionalTwist> = [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)]
        .into_iter()
        .map(|(s1, s2)| {
            let th = (2.0 * (s1 * r + s2).atan2(m + 1.0)).rem_euclid(TAU);
            let c = BlochCoeffs::at_theta(th, m);
            let family = if c.m_k.abs() <= c.p_k.abs() {
                Family::MZero
            } else {
                Family::PZero
            };
            let x = th * l / TAU;
            let k_e = (x.floor() as usize).min(model.l - 1);
            let phi_e = (th * l - TAU * k_e as f64).clamp(0.0, TAU);
            ExceptionalTwist {
                k_e,
                phi_e,
                family,
                theta_e: th,
            }
        })
        .collect();
    out.sort_by(|a, b| a.theta_e.total_cmp(&b.theta_e));
    Ok(out)
}

/// How Gaussian hopping factors are attached to the real-space couplings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum NoisePlacement {
    /// The two inter-cell amplitudes mapped onto each other by the
    /// antiunitary symmetry share one factor; the intra-cell a→b and b→a
    /// amplitudes get independent factors. Keeps the spectrum closed under
    /// complex conjugation for real U.
    #[default]
    Paired,
    /// Independent factor on every directed amplitude.
    Directed,
    /// Independent factor on every directed inter-cell amplitude, intra-cell
    /// couplings untouched.
    InterCellDirected,
}

/// Number of directed hopping amplitudes per unit cell.
pub const COUPLINGS_PER_CELL: usize = 6;

/// Multiplicative factors, six per cell in the order
/// a_j†b_{j+1}, a_{j+1}†b_j, b_j†a_{j+1}, b_{j+1}†a_j, a_j†b_j, b_j†a_j.
#[derive(Debug, Clone, PartialEq)]
pub struct DisorderRealization {
    factors: Vec<f64>,
}

impl DisorderRealization {
    pub fn clean(l: usize) -> Self {
        Self {
            factors: vec![1.0; COUPLINGS_PER_CELL * l],
        }
    }

    pub fn from_factors(l: usize, factors: Vec<f64>) -> Result<Self> {
        let expected = COUPLINGS_PER_CELL * l;
        if factors.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: factors.len(),
            });
        }
        Ok(Self { factors })
    }

    /// Draws factors with mean 1 and standard deviation `sigma` from a
    /// ChaCha8 stream seeded by `seed`. `sigma = 0` gives exact ones.
    pub fn sample(l: usize, sigma: f64, seed: u64, placement: NoisePlacement) -> Result<Self> {
        if sigma == 0.0 {
            return Ok(Self::clean(l));
        }
        let normal = Normal::new(1.0, sigma)
            .map_err(|e| Error::InvalidModel(format!("disorder sigma: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = Vec::with_capacity(COUPLINGS_PER_CELL * l);
        for _ in 0..l {
            match placement {
                NoisePlacement::Paired => {
                    let ab = normal.sample(&mut rng);
                    let ba = normal.sample(&mut rng);
                    let intra_ab = normal.sample(&mut rng);
                    let intra_ba = normal.sample(&mut rng);
                    f.extend([ab, ab, ba, ba, intra_ab, intra_ba]);
                }
                NoisePlacement::Directed => {
                    f.extend((0..COUPLINGS_PER_CELL).map(|_| normal.sample(&mut rng)));
                }
                NoisePlacement::InterCellDirected => {
                    f.extend((0..4).map(|_| normal.sample(&mut rng)));
                    f.extend([1.0, 1.0]);
                }
            }
        }
        Ok(Self { factors: f })
    }

    pub fn factors(&self) -> &[f64] {
        &self.factors
    }

    pub fn sites(&self) -> usize {
        self.factors.len() / COUPLINGS_PER_CELL
    }
}

/// Real-space mode index of (site, orbital).
pub fn site_mode(j: usize, orbital: Orbital) -> usize {
    2 * j + orbital.index()
}

/// Real-space single-particle matrix over modes (j, a/b). The twist is spread
/// over all inter-cell bonds as a phase e^{iφ/L}; the hopping is
/// t = e^{i3π/4}/√2 and its conjugate.
pub fn build_real_space_single_particle(
    model: &ModelSpec,
    noise: Option<&DisorderRealization>,
) -> Result<CMat> {
    let l = model.l;
    let clean;
    let f = match noise {
        Some(n) => {
            if n.factors.len() != COUPLINGS_PER_CELL * l {
                return Err(Error::DimensionMismatch {
                    expected: COUPLINGS_PER_CELL * l,
                    got: n.factors.len(),
                });
            }
            n.factors.as_slice()
        }
        None => {
            clean = DisorderRealization::clean(l);
            clean.factors.as_slice()
        }
    };
    let t = C64::new(-0.5, 0.5);
    let tc = t.conj();
    let w = C64::from_polar(1.0, model.phi / l as f64);
    let wc = w.conj();
    let m = C64::new(model.m, 0.0);
    let mut h = CMat::zeros(2 * l, 2 * l);
    use Orbital::{A, B};
    for j in 0..l {
        let jp = (j + 1) % l;
        let c = &f[COUPLINGS_PER_CELL * j..COUPLINGS_PER_CELL * (j + 1)];
        h[(site_mode(j, A), site_mode(jp, B))] += t * w * c[0];
        h[(site_mode(jp, A), site_mode(j, B))] += tc * wc * c[1];
        h[(site_mode(j, B), site_mode(jp, A))] += tc * w * c[2];
        h[(site_mode(jp, B), site_mode(j, A))] += t * wc * c[3];
        h[(site_mode(j, A), site_mode(j, B))] += m * c[4];
        h[(site_mode(j, B), site_mode(j, A))] += m * c[5];
    }
    Ok(h)
}

/// Unitary with U[(j,c),(k,c)] = e^{i2πkj/L}/√L; U† H_real U is block
/// diagonal with the Bloch matrices at modes (k, a/b) = 2k + c.
pub fn fourier_rotation(l: usize) -> CMat {
    let norm = 1.0 / (l as f64).sqrt();
    CMat::from_fn(2 * l, 2 * l, |r, c| {
        if r % 2 != c % 2 {
            return C64::new(0.0, 0.0);
        }
        let (j, k) = (r / 2, c / 2);
        C64::from_polar(norm, TAU * ((k * j) % l) as f64 / l as f64)
    })
}

/// Block-diagonal matrix of all Bloch matrices over momentum modes.
pub fn bloch_block_diagonal(model: &ModelSpec) -> CMat {
    let l = model.l;
    let mut h = CMat::zeros(2 * l, 2 * l);
    for k in 0..l {
        let c = bloch_coefficients(k, model);
        h[(2 * k, 2 * k + 1)] = C64::new(c.m_k, 0.0);
        h[(2 * k + 1, 2 * k)] = C64::new(c.p_k, 0.0);
    }
    h
}

/// Orbital part of the symmetry permutation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OrbitalMap {
    /// Orbitals kept; the relation that holds for the matrix built by
    /// [`build_real_space_single_particle`].
    #[default]
    Identity,
    /// Orbitals exchanged a ↔ b.
    Swap,
}

/// Permutation of site inversion j → −j mod L combined with `orbital`.
pub fn inversion_permutation(l: usize, orbital: OrbitalMap) -> CMat {
    let mut p = CMat::zeros(2 * l, 2 * l);
    for j in 0..l {
        for c in [Orbital::A, Orbital::B] {
            let c2 = match orbital {
                OrbitalMap::Identity => c,
                OrbitalMap::Swap => c.other(),
            };
            p[(site_mode((l - j) % l, c2), site_mode(j, c))] = C64::new(1.0, 0.0);
        }
    }
    p
}

/// max |H* − P H Pᵀ| for the site-inversion permutation P.
pub fn check_pt_symmetry(h: &CMat, l: usize, orbital: OrbitalMap) -> Result<f64> {
    if h.nrows() != 2 * l || h.ncols() != 2 * l {
        return Err(Error::DimensionMismatch {
            expected: 2 * l,
            got: h.nrows(),
        });
    }
    let p = inversion_permutation(l, orbital);
    let rhs = &p * h * p.transpose();
    let mut r = 0.0f64;
    for i in 0..2 * l {
        for j in 0..2 * l {
            r = r.max((h[(i, j)].conj() - rhs[(i, j)]).norm());
        }
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{eig_right, max_abs};
    use proptest::prelude::*;

    fn model(l: usize, m: f64, phi: f64) -> ModelSpec {
        ModelSpec::new(l, m).unwrap().with_phi(phi)
    }

    #[test]
    fn zero_momentum_at_zero_twist() {
        let c = bloch_coefficients(0, &model(6, 0.7, 0.0));
        assert_eq!(c.theta, 0.0);
        assert!((c.m_k + 0.3).abs() < 1e-15 && (c.p_k + 0.3).abs() < 1e-15);
    }

    #[test]
    fn equal_negative_coefficients_give_real_energy() {
        let c = BlochCoeffs {
            k: 0,
            theta: 0.0,
            m_k: -0.3,
            p_k: -0.3,
        };
        let e = c.energy_plus();
        assert!((e - C64::new(-0.3, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn vanishing_m_aligns_both_vectors() {
        let tw = solve_exceptional_twists(&model(6, 0.7, 0.0)).unwrap();
        let t = tw.iter().find(|t| t.family == Family::MZero).unwrap();
        let modes = single_particle_spectrum(t.k_e, &t.model(&model(6, 0.7, 0.0)));
        assert!(modes[0].defective);
        assert!(modes[0].energy.norm() < 1e-5);
        let overlap = crate::linalg::inner(&modes[0].right, &modes[1].right).norm();
        assert!((overlap - 1.0).abs() < 1e-9);
    }

    #[test]
    fn exceptional_twists_for_reference_mass() {
        let tw = solve_exceptional_twists(&model(6, 0.7, 0.0)).unwrap();
        assert_eq!(tw.len(), 4);
        for t in &tw {
            let c = BlochCoeffs::at_theta(t.theta_e, 0.7);
            let v = match t.family {
                Family::MZero => c.m_k,
                Family::PZero => c.p_k,
            };
            assert!(v.abs() < 1e-10);
            let c2 = bloch_coefficients(t.k_e, &model(6, 0.7, t.phi_e));
            assert!((c2.theta - t.theta_e).abs() < 1e-12);
        }
        let target = 2.0 * ((10.0 + 151f64.sqrt()) / 17.0).atan();
        assert!(tw.iter().any(|t| (t.theta_e - target).abs() < 1e-12));
        assert_eq!(
            solve_exceptional_twists(&model(6, 1.5, 0.0)),
            Err(Error::NoSolution { m: 1.5 })
        );
    }

    #[test]
    fn twist_formula_for_seven_sites() {
        let base = model(7, 0.6, 0.0);
        let tw = solve_exceptional_twists(&base).unwrap();
        let phi = 2.0 * (std::f64::consts::PI + ((5.0 - 41f64.sqrt()) / 8.0).atan()) * 7.0
            - TAU * 6.0;
        assert!(tw.iter().any(|t| t.k_e == 6 && (t.phi_e - phi).abs() < 1e-10));
    }

    #[test]
    fn real_space_rotates_onto_bloch_blocks() {
        for (l, phi) in [(2, 0.3), (3, 1.7), (6, 4.1), (7, 6.0)] {
            let m = model(l, 0.7, phi);
            let h = build_real_space_single_particle(&m, None).unwrap();
            let u = fourier_rotation(l);
            let hk = u.adjoint() * &h * &u;
            let diff = &hk - bloch_block_diagonal(&m);
            assert!(max_abs(diff.as_ref()) < 1e-12, "L={l}");
        }
    }

    #[test]
    fn clean_matrix_has_inversion_symmetry() {
        let m = model(6, 0.7, 2.2);
        let h = build_real_space_single_particle(&m, None).unwrap();
        assert!(check_pt_symmetry(&h, 6, OrbitalMap::Identity).unwrap() < 1e-12);
        assert!(check_pt_symmetry(&h, 6, OrbitalMap::Swap).unwrap() > 0.1);
        let noise = DisorderRealization::sample(6, 0.05, 3, NoisePlacement::Paired).unwrap();
        let hd = build_real_space_single_particle(&m, Some(&noise)).unwrap();
        assert!(check_pt_symmetry(&hd, 6, OrbitalMap::Identity).unwrap() > 0.0);
        let mut hp = h.clone();
        hp[(0, 3)] += C64::new(0.1, 0.2);
        assert!(check_pt_symmetry(&hp, 6, OrbitalMap::Identity).unwrap() > 0.0);
    }

    #[test]
    fn paired_noise_keeps_conjugation_closure() {
        let m = model(6, 0.7, 2.0);
        for (placement, closed) in [
            (NoisePlacement::Paired, true),
            (NoisePlacement::Directed, false),
        ] {
            let noise = DisorderRealization::sample(6, 0.05, 7, placement).unwrap();
            let h = build_real_space_single_particle(&m, Some(&noise)).unwrap();
            let (ev, _) = eig_right(h.as_ref()).unwrap();
            let gap = ev
                .iter()
                .map(|x| {
                    ev.iter()
                        .map(|y| (x.conj() - y).norm())
                        .fold(f64::INFINITY, f64::min)
                })
                .fold(0.0, f64::max);
            assert_eq!(gap < 1e-10, closed, "{placement:?}: {gap:e}");
        }
    }

    #[test]
    fn wrong_noise_length_is_rejected() {
        let m = model(4, 0.7, 0.0);
        let n = DisorderRealization::clean(3);
        assert!(matches!(
            build_real_space_single_particle(&m, Some(&n)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn zero_sigma_draws_exact_ones() {
        let n = DisorderRealization::sample(5, 0.0, 9, NoisePlacement::Directed).unwrap();
        assert!(n.factors().iter().all(|&f| f == 1.0));
    }

    proptest! {
        #[test]
        fn coefficient_identities(k in 0usize..12, phi in 0.0..TAU, m in -1.3f64..1.3, l in 2usize..12) {
            let md = model(l, m, phi);
            let c = bloch_coefficients(k, &md);
            let th = c.theta;
            prop_assert!((c.m_k + c.p_k - 2.0 * (m - th.cos())).abs() < 1e-14);
            prop_assert!((c.p_k - c.m_k - 2.0 * th.sin()).abs() < 1e-14);
            let e = c.energy_plus();
            prop_assert!((e * e - c.m_k * c.p_k).norm() < 1e-12);
            prop_assert!(e.re.abs() < 1e-14 || e.im.abs() < 1e-14);
            let det = c.matrix().determinant();
            prop_assert!((det + c.m_k * c.p_k).norm() < 1e-14);
        }

        #[test]
        fn closed_form_matches_direct_eigensolve(mk in -2.0f64..2.0, pk in -2.0f64..2.0) {
            prop_assume!(mk.abs() > 1e-3 && pk.abs() > 1e-3);
            let c = BlochCoeffs { k: 0, theta: 0.0, m_k: mk, p_k: pk };
            let (ev, vecs) = eig_right(c.matrix().as_ref()).unwrap();
            let e = c.energy_plus();
            for (i, z) in ev.iter().enumerate() {
                let s = if (z - e).norm() < (z + e).norm() { 1.0 } else { -1.0 };
                prop_assert!((z - e * s).norm() < 1e-12);
                let r = [csqrt(mk) * s, csqrt(pk)];
                let ov = crate::linalg::inner(&r, &[vecs[(0, i)], vecs[(1, i)]]).norm()
                    / crate::linalg::norm(&r);
                prop_assert!((ov - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn modes_are_biorthonormal(k in 0usize..6, phi in 0.0..TAU) {
            let md = model(6, 0.7, phi);
            let modes = single_particle_spectrum(k, &md);
            prop_assume!(!modes[0].defective);
            prop_assume!(modes[0].energy.norm() > 1e-3);
            for a in &modes {
                for b in &modes {
                    let p = crate::linalg::pair(&a.left, &b.right);
                    let want = if a.band == b.band { 1.0 } else { 0.0 };
                    prop_assert!((p - C64::new(want, 0.0)).norm() < 1e-10);
                }
            }
        }

        #[test]
        fn twist_solutions_close_under_reflection(m in -1.4f64..1.4) {
            let tw = solve_exceptional_twists(&model(5, m, 0.0)).unwrap();
            for t in &tw {
                let mirror = (TAU - t.theta_e).rem_euclid(TAU);
                let hit = tw.iter().any(|u| {
                    let d = (u.theta_e - mirror).rem_euclid(TAU);
                    d.min(TAU - d) < 1e-9 && u.family != t.family
                });
                prop_assert!(hit);
            }
        }
    }
}
