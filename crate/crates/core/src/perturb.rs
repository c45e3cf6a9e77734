//! Effective Hamiltonians on degenerate two- and three-fermion subspaces and
//! the closed-form EP-line predictions derived from them.
//!
//! All square roots are principal and taken of the individual Bloch
//! coefficients (√m_k·√p_q rather than √(m_k p_q)); this is the convention
//! under which the effective matrices equal the Fock-space projections.

use std::f64::consts::{PI, TAU};
use std::fmt;

use crate::bloch::{
    band_energy, bloch_coefficients, single_particle_spectrum, Band, ExceptionalTwist, Family,
    ModelSpec, Orbital,
};
use crate::fock::{apply_ops, mode, FockBasis, Labeling, Ladder};
use crate::linalg::{csqrt, eigenvalues};
use crate::{CMat, Error, Result, C64};

/// Relative tolerance of the realness classification.
pub const REALNESS_TOL: f64 = 1e-10;
/// Below this |a| or |δ| the emergent formulas are not evaluated.
pub const DEGENERATE_TOL: f64 = 1e-12;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// A single-particle band state (k, ξ).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModeLabel {
    pub k: usize,
    pub band: Band,
}

impl ModeLabel {
    pub fn new(k: usize, band: Band) -> Self {
        Self { k, band }
    }
}

impl fmt::Display for ModeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "E({},{})", self.k, self.band.symbol())
    }
}

/// Labels of the non-interacting two-fermion states used by the effective
/// descriptions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StateLabel {
    /// |E_(k,ξk); E_(q,ξq)⟩ with k ≠ q.
    Pair(ModeLabel, ModeLabel),
    /// |Φ_p⟩ = a†_p b†_p |0⟩.
    Trivial(usize),
    /// |c_ke; E_(q,±)⟩ with c ∈ {a, b}, used where the band vectors at k_e
    /// are defective.
    Generalized {
        orbital: Orbital,
        k_e: usize,
        other: ModeLabel,
    },
}

impl fmt::Display for StateLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateLabel::Pair(a, b) => write!(f, "|{a};{b}>"),
            StateLabel::Trivial(p) => write!(f, "|Phi_{p}>"),
            StateLabel::Generalized { orbital, k_e, other } => {
                let c = match orbital {
                    Orbital::A => 'a',
                    Orbital::B => 'b',
                };
                write!(f, "|{c}_{k_e};{other}>")
            }
        }
    }
}

/// Right and left Fock vectors of a labelled state. Left vectors are
/// covectors paired bilinearly (no conjugation) with right vectors.
#[derive(Debug, Clone)]
pub struct TwoParticleState {
    pub label: StateLabel,
    pub right: Vec<C64>,
    pub left: Vec<C64>,
}

/// Fock vector of c†_{f0} c†_{f1} … |0⟩ where each factor creates the
/// orbital superposition `amps` at momentum k.
///
/// Read as a covector this is also ⟨0| … c_{f1} c_{f0}, the bra with the
/// factor order reversed, so left states use the same call with left
/// single-particle covectors.
pub fn product_state(basis: &FockBasis, factors: &[(usize, [C64; 2])]) -> Vec<C64> {
    let mut v = vec![ZERO; basis.len()];
    let n = factors.len();
    for choice in 0..(1usize << n) {
        let mut amp = ONE;
        let mut ops = Vec::with_capacity(n);
        for (i, &(k, amps)) in factors.iter().enumerate() {
            let orb = if choice >> i & 1 == 0 { Orbital::A } else { Orbital::B };
            amp *= amps[orb.index()];
            ops.push(Ladder::Create(mode(k, orb)));
        }
        if amp == ZERO {
            continue;
        }
        if let Some((s, sign)) = apply_ops(&ops, 0) {
            if let Some(pos) = basis.position(s) {
                v[pos] += amp * sign;
            }
        }
    }
    v
}

fn unit(orbital: Orbital) -> [C64; 2] {
    match orbital {
        Orbital::A => [ONE, ZERO],
        Orbital::B => [ZERO, ONE],
    }
}

fn band_vectors(label: ModeLabel, model: &ModelSpec) -> Result<([C64; 2], [C64; 2])> {
    let modes = single_particle_spectrum(label.k, model);
    let sp = modes[usize::from(label.band == Band::Minus)];
    if sp.defective {
        return Err(Error::DefectiveInput(format!(
            "{label} has a vanishing Bloch coefficient"
        )));
    }
    Ok((sp.right, sp.left))
}

/// Builds a labelled two-fermion state in the momentum Fock basis.
pub fn two_particle_state(
    label: StateLabel,
    model: &ModelSpec,
    basis: &FockBasis,
) -> Result<TwoParticleState> {
    if basis.labeling() != Labeling::Momentum {
        return Err(Error::LabelingMismatch {
            expected: "momentum",
        });
    }
    if basis.n() != 2 {
        return Err(Error::InvalidFilling {
            n: basis.n(),
            modes: basis.mode_count(),
        });
    }
    let l = model.l();
    let (rf, lf): (Vec<(usize, [C64; 2])>, Vec<(usize, [C64; 2])>) = match label {
        StateLabel::Pair(a, b) => {
            if a.k % l == b.k % l {
                return Err(Error::InvalidModel(format!(
                    "paired state needs distinct momenta, got {a} and {b}"
                )));
            }
            let (ra, la) = band_vectors(a, model)?;
            let (rb, lb) = band_vectors(b, model)?;
            (vec![(a.k % l, ra), (b.k % l, rb)], vec![(a.k % l, la), (b.k % l, lb)])
        }
        StateLabel::Trivial(p) => {
            let f = vec![(p % l, unit(Orbital::A)), (p % l, unit(Orbital::B))];
            (f.clone(), f)
        }
        StateLabel::Generalized { orbital, k_e, other } => {
            if k_e % l == other.k % l {
                return Err(Error::InvalidModel(format!(
                    "generalized state needs q != k_e, got {k_e}"
                )));
            }
            let (r, lv) = band_vectors(other, model)?;
            let e = unit(orbital);
            (vec![(k_e % l, e), (other.k % l, r)], vec![(k_e % l, e), (other.k % l, lv)])
        }
    };
    Ok(TwoParticleState {
        label,
        right: product_state(basis, &rf),
        left: product_state(basis, &lf),
    })
}

/// ⟨bra₀;bra₁| H_int |ket₀;ket₁⟩ between paired band states.
pub fn hint_matrix_element(bra: [ModeLabel; 2], ket: [ModeLabel; 2], model: &ModelSpec) -> C64 {
    let l = model.l();
    let ks = [bra[0].k, bra[1].k, ket[0].k, ket[1].k];
    if !(ks[0] + ks[1] + 2 * l - ks[2] - ks[3]).is_multiple_of(l) {
        return ZERO;
    }
    let labels = [bra[0], bra[1], ket[0], ket[1]];
    let mut sm = [ZERO; 4];
    let mut sp = [ZERO; 4];
    let mut se = [ZERO; 4];
    let mut xi = [0.0; 4];
    for (i, lab) in labels.iter().enumerate() {
        let b = bloch_coefficients(lab.k, model);
        sm[i] = csqrt(b.m_k);
        sp[i] = csqrt(b.p_k);
        se[i] = b.energy_plus().sqrt();
        xi[i] = lab.band.sign();
    }
    let pre = ONE / (se[0] * se[1] * se[2] * se[3] * (4.0 * l as f64));
    let body = sm[0] * sp[1] * sp[2] * sm[3] * (xi[1] * xi[3])
        - sm[0] * sp[1] * sm[2] * sp[3] * (xi[1] * xi[2])
        + sp[0] * sm[1] * sm[2] * sp[3] * (xi[0] * xi[2])
        - sp[0] * sm[1] * sp[2] * sm[3] * (xi[0] * xi[3]);
    pre * body
}

/// a = (√m_k√p_q − ξ√p_k√m_q) / (2√E_(k,+)√E_(q,+)).
pub fn a_coefficient(k: usize, q: usize, xi: Band, model: &ModelSpec) -> Result<C64> {
    let bk = bloch_coefficients(k, model);
    let bq = bloch_coefficients(q, model);
    let den = bk.energy_plus().sqrt() * bq.energy_plus().sqrt() * 2.0;
    if den.norm() < model.defect_tol() {
        return Err(Error::DefectiveCoefficient(format!(
            "E(k={k}) or E(q={q}) vanishes"
        )));
    }
    Ok((csqrt(bk.m_k) * csqrt(bq.p_k) - csqrt(bk.p_k) * csqrt(bq.m_k) * xi.sign()) / den)
}

/// δ = E_(k,+) + E_(q,ξ).
pub fn degeneracy_delta(k: usize, q: usize, xi: Band, model: &ModelSpec) -> C64 {
    band_energy(k, Band::Plus, model) + band_energy(q, xi, model)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EffectiveKind {
    I,
    II2,
    II3,
    II4,
    IIIOdd,
    IIIEven,
}

impl EffectiveKind {
    pub fn dim(self) -> usize {
        match self {
            EffectiveKind::I | EffectiveKind::II2 => 2,
            EffectiveKind::II3 | EffectiveKind::IIIOdd | EffectiveKind::IIIEven => 3,
            EffectiveKind::II4 => 4,
        }
    }
}

/// Subspace parameters of an effective description.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EffectiveParams {
    /// Kinds I and III: defective momentum k_e and partner mode q.
    Defective { k_e: usize, q: ModeLabel },
    /// Kind II: the degenerate pair (k, q, ξ).
    Degenerate { k: usize, q: usize, xi: Band },
    /// Kind II from raw (δ, a, ξ).
    Raw { delta: C64, a: C64, xi: Band },
}

#[derive(Debug, Clone)]
pub struct EffectiveHamiltonian {
    pub kind: EffectiveKind,
    pub matrix: CMat,
    pub state_labels: Vec<String>,
    pub params: EffectiveParams,
    pub phi: f64,
    pub u: C64,
    pub l: usize,
    pub m: f64,
}

/// The p with 2p ≡ k+q (mod L), smallest first.
fn half_momenta(k: usize, q: usize, l: usize) -> Vec<usize> {
    (0..l).filter(|&p| (2 * p + 2 * l - k - q).is_multiple_of(l)).collect()
}

fn trivial_label(k: usize, q: usize, l: usize) -> String {
    let ps = half_momenta(k, q, l);
    match ps.as_slice() {
        [p] => StateLabel::Trivial(*p).to_string(),
        [p, pp] => format!("(|Phi_{p}>+|Phi_{pp}>)/sqrt2"),
        _ => "none".to_string(),
    }
}

impl EffectiveHamiltonian {
    /// Kind I on {|a_ke; E_q⟩, |b_ke; E_q⟩} at the model's (φ, U).
    pub fn inherited(k_e: usize, q: ModeLabel, model: &ModelSpec) -> Result<Self> {
        let l = model.l();
        if k_e % l == q.k % l {
            return Err(Error::InvalidModel("q must differ from k_e".into()));
        }
        let be = bloch_coefficients(k_e, model);
        let bq = bloch_coefficients(q.k, model);
        check_nonzero(&bq, model)?;
        let (sm, sp) = (csqrt(bq.m_k), csqrt(bq.p_k));
        let eq = band_energy(q.k, q.band, model);
        let s = -q.band.sign();
        let g = model.u() / (2.0 * l as f64);
        let mut h = CMat::zeros(2, 2);
        h[(0, 0)] = eq + g;
        h[(1, 1)] = eq + g;
        h[(0, 1)] = c(be.m_k) + g * s * sm / sp;
        h[(1, 0)] = c(be.p_k) + g * s * sp / sm;
        Ok(Self {
            kind: EffectiveKind::I,
            matrix: h,
            state_labels: [Orbital::A, Orbital::B]
                .map(|orbital| {
                    StateLabel::Generalized {
                        orbital,
                        k_e: k_e % l,
                        other: q,
                    }
                    .to_string()
                })
                .to_vec(),
            params: EffectiveParams::Defective { k_e: k_e % l, q },
            phi: model.phi(),
            u: model.u(),
            l,
            m: model.m(),
        })
    }

    /// Kind II on the degenerate pair Ψ± (plus the Φ states when they share
    /// the sector). `kind` must be one of II2, II3, II4 and match L, k+q.
    pub fn emergent(kind: EffectiveKind, k: usize, q: usize, xi: Band, model: &ModelSpec) -> Result<Self> {
        let l = model.l();
        if k % l == q % l {
            return Err(Error::InvalidModel("emergent subspace needs k != q".into()));
        }
        let even_l = l.is_multiple_of(2);
        let even_sum = (k + q).is_multiple_of(2);
        let ok = match kind {
            EffectiveKind::II2 => even_l && !even_sum,
            EffectiveKind::II3 => !even_l,
            EffectiveKind::II4 => even_l && even_sum,
            _ => {
                return Err(Error::ParityMismatch(format!("{kind:?} is not an emergent kind")));
            }
        };
        if !ok {
            return Err(Error::ParityMismatch(format!(
                "{kind:?} does not apply to L={l}, k+q={}",
                k + q
            )));
        }
        let delta = degeneracy_delta(k, q, xi, model);
        let a = a_coefficient(k, q, xi, model)?;
        let mut out = Self::emergent_from_params(kind, delta, a, xi, model.u(), l)?;
        let plus = StateLabel::Pair(ModeLabel::new(k % l, Band::Plus), ModeLabel::new(q % l, xi));
        let minus = StateLabel::Pair(ModeLabel::new(k % l, Band::Minus), ModeLabel::new(q % l, xi.flip()));
        let mut labels = Vec::new();
        if kind == EffectiveKind::II4 {
            let ps = half_momenta(k, q, l);
            labels.push(format!("(|Phi_{}>-|Phi_{}>)/sqrt2", ps[0], ps[1]));
        }
        if kind != EffectiveKind::II2 {
            labels.push(trivial_label(k, q, l));
        }
        labels.push(plus.to_string());
        labels.push(minus.to_string());
        out.state_labels = labels;
        out.params = EffectiveParams::Degenerate { k: k % l, q: q % l, xi };
        out.phi = model.phi();
        out.m = model.m();
        Ok(out)
    }

    /// Kind II assembled from raw (δ, a, ξ, U, L). Ordering is
    /// (Ψ_s, Ψ_a, Ψ+, Ψ−) with the leading entries present only for the
    /// larger kinds.
    pub fn emergent_from_params(
        kind: EffectiveKind,
        delta: C64,
        a: C64,
        xi: Band,
        u: C64,
        l: usize,
    ) -> Result<Self> {
        let x = xi.sign();
        let g = u / l as f64;
        let a2 = a * a;
        let h = match kind {
            EffectiveKind::II2 => {
                let e = g * a2 * x;
                CMat::from_fn(2, 2, |i, j| {
                    let d = [delta, -delta][i];
                    let v = if i == j { -e } else { e };
                    if i == j { d + v } else { v }
                })
            }
            EffectiveKind::II3 => {
                let b = [[ONE, a * x, -a * x], [-a, -a2 * x, a2 * x], [a, a2 * x, -a2 * x]];
                let d = [ZERO, delta, -delta];
                CMat::from_fn(3, 3, |i, j| g * b[i][j] + if i == j { d[i] } else { ZERO })
            }
            EffectiveKind::II4 => {
                let r = a * 2f64.sqrt();
                let b = [
                    [ZERO, ZERO, ZERO, ZERO],
                    [ZERO, c(2.0), r * x, -r * x],
                    [ZERO, -r, -a2 * x, a2 * x],
                    [ZERO, r, a2 * x, -a2 * x],
                ];
                let d = [ZERO, ZERO, delta, -delta];
                CMat::from_fn(4, 4, |i, j| g * b[i][j] + if i == j { d[i] } else { ZERO })
            }
            _ => return Err(Error::ParityMismatch(format!("{kind:?} is not an emergent kind"))),
        };
        Ok(Self {
            kind,
            matrix: h,
            state_labels: Vec::new(),
            params: EffectiveParams::Raw { delta, a, xi },
            phi: f64::NAN,
            u,
            l,
            m: f64::NAN,
        })
    }

    /// Kind III on {Ψ_a, |a_ke; E_q⟩, |b_ke; E_q⟩}, the annihilation-capable
    /// description. Ψ_a is Φ_p (odd L) or (Φ_p + Φ_p')/√2 (even L) with
    /// 2p ≡ k_e + q.
    pub fn annihilation(k_e: usize, q: ModeLabel, model: &ModelSpec) -> Result<Self> {
        let l = model.l();
        if k_e % l == q.k % l {
            return Err(Error::InvalidModel("q must differ from k_e".into()));
        }
        let even = l.is_multiple_of(2);
        if even && (k_e + q.k) % 2 == 1 {
            return Err(Error::ParityMismatch(format!(
                "k_e+q = {} is odd for even L; no Phi state shares the sector",
                k_e + q.k
            )));
        }
        let be = bloch_coefficients(k_e, model);
        let bq = bloch_coefficients(q.k, model);
        check_nonzero(&bq, model)?;
        let (sm, sp) = (csqrt(bq.m_k), csqrt(bq.p_k));
        let eq = band_energy(q.k, q.band, model);
        let s = -q.band.sign();
        let (f, d): (f64, f64) = if even { (16.0, 4.0) } else { (4.0, 2.0) };
        let cf = f.powf(0.25);
        let rpm = (sp / sm).sqrt() * cf;
        let rmp = (sm / sp).sqrt() * cf;
        let b = [
            [c(d), rpm, rmp * s],
            [rmp, ONE, sm / sp * s],
            [rpm * s, sp / sm * s, ONE],
        ];
        let g = model.u() / (2.0 * l as f64);
        let h0 = [[ZERO, ZERO, ZERO], [ZERO, eq, c(be.m_k)], [ZERO, c(be.p_k), eq]];
        let h = CMat::from_fn(3, 3, |i, j| h0[i][j] + g * b[i][j]);
        let mut labels = vec![trivial_label(k_e, q.k, l)];
        labels.extend([Orbital::A, Orbital::B].map(|orbital| {
            StateLabel::Generalized {
                orbital,
                k_e: k_e % l,
                other: q,
            }
            .to_string()
        }));
        Ok(Self {
            kind: if even {
                EffectiveKind::IIIEven
            } else {
                EffectiveKind::IIIOdd
            },
            matrix: h,
            state_labels: labels,
            params: EffectiveParams::Defective { k_e: k_e % l, q },
            phi: model.phi(),
            u: model.u(),
            l,
            m: model.m(),
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

fn check_nonzero(b: &crate::bloch::BlochCoeffs, model: &ModelSpec) -> Result<()> {
    if b.m_k.abs() < model.defect_tol() || b.p_k.abs() < model.defect_tol() {
        return Err(Error::DefectiveCoefficient(format!(
            "partner momentum {} has a vanishing coefficient",
            b.k
        )));
    }
    Ok(())
}

/// Right Fock vectors of the annihilation subspace, in the order used by
/// [`EffectiveHamiltonian::annihilation`]. Left vectors coincide for Ψ_a and
/// use left band covectors otherwise; both are returned.
pub fn annihilation_states(
    k_e: usize,
    q: ModeLabel,
    model: &ModelSpec,
    basis: &FockBasis,
) -> Result<Vec<TwoParticleState>> {
    let l = model.l();
    let ps = half_momenta(k_e, q.k, l);
    let psi_a: Vec<C64> = match ps.as_slice() {
        [p] => two_particle_state(StateLabel::Trivial(*p), model, basis)?.right,
        [p, pp] => {
            let x = two_particle_state(StateLabel::Trivial(*p), model, basis)?.right;
            let y = two_particle_state(StateLabel::Trivial(*pp), model, basis)?.right;
            x.iter().zip(&y).map(|(a, b)| (a + b) / 2f64.sqrt()).collect()
        }
        _ => return Err(Error::ParityMismatch("no Phi state in the sector".into())),
    };
    let mut out = vec![TwoParticleState {
        label: StateLabel::Trivial(ps[0]),
        right: psi_a.clone(),
        left: psi_a,
    }];
    for orbital in [Orbital::A, Orbital::B] {
        out.push(two_particle_state(
            StateLabel::Generalized {
                orbital,
                k_e,
                other: q,
            },
            model,
            basis,
        )?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Realness {
    Real,
    Imaginary,
    Complex,
}

impl Realness {
    pub fn classify(u: C64) -> Self {
        let scale = u.norm();
        if u.im.abs() <= REALNESS_TOL * scale {
            Realness::Real
        } else if u.re.abs() <= REALNESS_TOL * scale {
            Realness::Imaginary
        } else {
            Realness::Complex
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Realness::Real => "REAL",
            Realness::Imaginary => "IMAGINARY",
            Realness::Complex => "COMPLEX",
        }
    }
}

/// Which closed form produced a prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PredictionSource {
    Inherited {
        k_e: usize,
        q: ModeLabel,
        family: Family,
    },
    Emergent {
        kind: EffectiveKind,
        k: usize,
        q: usize,
        xi: Band,
    },
    ThreeFermion {
        k_e: usize,
        k: ModeLabel,
        q: ModeLabel,
        family: Family,
    },
}

/// One branch of a predicted EP line evaluated at a twist.
#[derive(Debug, Clone, PartialEq)]
pub struct EPPrediction {
    pub source: PredictionSource,
    /// Branch signs (s1, s2); s2 is 0 where only one sign exists.
    pub branch: (i8, i8),
    pub phi: f64,
    pub u: C64,
    pub realness: Realness,
    pub involved_states: Vec<String>,
}

impl EPPrediction {
    pub fn branch_id(&self) -> String {
        let s = |x: i8| match x {
            1 => "+",
            -1 => "-",
            _ => "",
        };
        format!("{}{}", s(self.branch.0), s(self.branch.1))
    }
}

/// U^m = ±2L m_ke √p_q/√m_q or U^p = ±2L p_ke √m_q/√p_q, the sign being the
/// band of q. The family must name the coefficient that vanishes at φ_e.
pub fn predict_u_inherited(
    twist: &ExceptionalTwist,
    q: ModeLabel,
    model: &ModelSpec,
) -> Result<EPPrediction> {
    let l = model.l();
    let be = bloch_coefficients(twist.k_e, model);
    let bq = bloch_coefficients(q.k, model);
    check_nonzero(&bq, model)?;
    let (sm, sp) = (csqrt(bq.m_k), csqrt(bq.p_k));
    let two_l = 2.0 * l as f64 * q.band.sign();
    let u = match twist.family {
        Family::MZero => sp / sm * (two_l * be.m_k),
        Family::PZero => sm / sp * (two_l * be.p_k),
    };
    Ok(EPPrediction {
        source: PredictionSource::Inherited {
            k_e: twist.k_e,
            q,
            family: twist.family,
        },
        branch: (q.band.sign() as i8, 0),
        phi: model.phi(),
        u,
        realness: Realness::classify(u),
        involved_states: [Orbital::A, Orbital::B]
            .map(|orbital| {
                StateLabel::Generalized {
                    orbital,
                    k_e: twist.k_e,
                    other: q,
                }
                .to_string()
            })
            .to_vec(),
    })
}

/// All inherited branches (every q ≠ k_e, both bands) at the model's twist.
pub fn inherited_branches(twist: &ExceptionalTwist, model: &ModelSpec) -> Result<Vec<EPPrediction>> {
    let mut out = Vec::new();
    for q in (0..model.l()).filter(|&q| q != twist.k_e) {
        for band in [Band::Plus, Band::Minus] {
            out.push(predict_u_inherited(twist, ModeLabel::new(q, band), model)?);
        }
    }
    Ok(out)
}

/// Result of an emergent-line prediction.
#[derive(Debug, Clone, PartialEq)]
pub enum EmergentPrediction {
    Branches(Vec<EPPrediction>),
    /// |δ| or |a| below [`DEGENERATE_TOL`]: the formulas are not evaluated.
    ExactlyDegenerate,
}

/// Emergent EP interaction strengths U(δ, a, ξ, L) for the given kind, as
/// (branch, U) pairs. 2×2: ±iLδ/a²; 3×3/4×4: four branches.
///
/// The 3×3/4×4 radicand (A ± B)/den is evaluated on whichever side avoids
/// cancellation, using A² − B² = −4ξ(2a²−ξ)³ resp. −64ξ(a²−ξ)³, so that
/// ξ(A+B)/den = −2/(A−B) exactly.
pub fn emergent_u_values(
    kind: EffectiveKind,
    delta: C64,
    a: C64,
    xi: Band,
    l: usize,
) -> Result<Option<Vec<((i8, i8), C64)>>> {
    let x = xi.sign();
    let ld = delta * l as f64;
    match kind {
        EffectiveKind::II2 => {
            if a.norm() < DEGENERATE_TOL {
                return Err(Error::DivisionByZero("a = 0 in the 2x2 emergent formula".into()));
            }
            if delta.norm() < DEGENERATE_TOL {
                return Ok(None);
            }
            let u = C64::i() * ld / (a * a);
            Ok(Some(vec![((1, 0), u), ((-1, 0), -u)]))
        }
        EffectiveKind::II3 | EffectiveKind::II4 => {
            if a.norm() < DEGENERATE_TOL || delta.norm() < DEGENERATE_TOL {
                return Ok(None);
            }
            let a2 = a * a;
            let (big_a, big_b, den) = if kind == EffectiveKind::II3 {
                (
                    a2 * a2 - a2 * (10.0 * x) - 2.0,
                    a * (a2 + 4.0 * x).powi(3).sqrt(),
                    (a2 * 2.0 - x).powi(3) * 2.0,
                )
            } else {
                (
                    a2 * a2 - a2 * (20.0 * x) - 8.0,
                    a * (a2 + 8.0 * x).powi(3).sqrt(),
                    (a2 - x).powi(3) * 32.0,
                )
            };
            let mut out = Vec::with_capacity(4);
            for s1 in [1i8, -1] {
                for s2 in [1i8, -1] {
                    let plus = big_a + big_b * s2 as f64;
                    let minus = big_a - big_b * s2 as f64;
                    let inner = if plus.norm() >= minus.norm() {
                        plus * x / den
                    } else {
                        -2.0 / minus
                    };
                    out.push(((s1, s2), ld * inner.sqrt() * s1 as f64));
                }
            }
            Ok(Some(out))
        }
        _ => Err(Error::ParityMismatch(format!("{kind:?} is not an emergent kind"))),
    }
}

/// Emergent-line predictions for the degenerate pair (k, q, ξ) at the
/// model's twist.
pub fn predict_u_emergent(
    kind: EffectiveKind,
    k: usize,
    q: usize,
    xi: Band,
    model: &ModelSpec,
) -> Result<EmergentPrediction> {
    let eff = EffectiveHamiltonian::emergent(kind, k, q, xi, model)?;
    let (delta, a) = (degeneracy_delta(k, q, xi, model), a_coefficient(k, q, xi, model)?);
    let Some(values) = emergent_u_values(kind, delta, a, xi, model.l())? else {
        return Ok(EmergentPrediction::ExactlyDegenerate);
    };
    let l = model.l();
    Ok(EmergentPrediction::Branches(
        values
            .into_iter()
            .map(|(branch, u)| EPPrediction {
                source: PredictionSource::Emergent {
                    kind,
                    k: k % l,
                    q: q % l,
                    xi,
                },
                branch,
                phi: model.phi(),
                u,
                realness: Realness::classify(u),
                involved_states: eff.state_labels.clone(),
            })
            .collect(),
    ))
}

/// Cardano coefficients (x, y, c) of the non-trivial 3×3 problem of kinds
/// II3 and II4; the eigenvalues are c + roots of λ³ − xλ/3·… as produced
/// by [`cubic_eigenvalues`]. c is trace/3.
pub fn cardano_coefficients(
    kind: EffectiveKind,
    delta: C64,
    a: C64,
    xi: Band,
    u: C64,
    l: usize,
) -> Result<(C64, C64, C64)> {
    let x = xi.sign();
    let g = u / l as f64;
    let a2 = a * a;
    let d2 = delta * delta;
    match kind {
        EffectiveKind::II3 => {
            let t = a2 * 2.0 - x;
            Ok((
                d2 * 3.0 + g * g * t * t,
                d2 * g * (a2 + x) * (9.0 * x) + g.powi(3) * t.powi(3) * x,
                g * (ONE - a2 * (2.0 * x)) / 3.0,
            ))
        }
        EffectiveKind::II4 => {
            let t = a2 * 2.0 - 2.0 * x;
            Ok((
                d2 * 3.0 + g * g * t * t,
                d2 * g * (a2 + 2.0 * x) * (9.0 * x) + g.powi(3) * t.powi(3) * x,
                g * (ONE - a2 * x) * (2.0 / 3.0),
            ))
        }
        _ => Err(Error::ParityMismatch(format!("{kind:?} has no cubic form"))),
    }
}

/// λ_n = −(ω^{−n}/3)·x/C − (ω^n/3)·C + c, C = ∛(√(y²−x³) + y), n = 0, 1, 2.
pub fn cubic_eigenvalues(x: C64, y: C64, c0: C64) -> [C64; 3] {
    let mut big_c = ((y * y - x.powi(3)).sqrt() + y).cbrt();
    if big_c.norm() < 1e-300 {
        // the other root of the quadratic; both vanish only for x = y = 0
        big_c = (y - (y * y - x.powi(3)).sqrt()).cbrt();
        if big_c.norm() < 1e-300 {
            return [c0; 3];
        }
    }
    let w = C64::from_polar(1.0, TAU / 3.0);
    [0, 1, 2].map(|n| {
        let wn = w.powi(n);
        -(x / big_c) / (wn * 3.0) - wn * big_c / 3.0 + c0
    })
}

/// Direct eigenvalues of the non-trivial block of a kind II3/II4 matrix.
pub fn direct_cubic_eigenvalues(eff: &EffectiveHamiltonian) -> Result<Vec<C64>> {
    let h = &eff.matrix;
    let off = usize::from(eff.kind == EffectiveKind::II4);
    let n = h.nrows() - off;
    let block = CMat::from_fn(n, n, |i, j| h[(i + off, j + off)]);
    eigenvalues(block.as_ref())
}

/// Continuously tracked eigenvalue along U ∈ [0, U_target] at fixed φ.
#[derive(Debug, Clone)]
pub struct TrackedEigenvalue {
    pub label: String,
    /// (U, λ) samples.
    pub path: Vec<(C64, C64)>,
}

/// Pairs `prev` predictions with `next` values by minimal total distance.
/// Returns the permutation and the ratio of best to second-best cost.
fn best_assignment(pred: &[C64], next: &[C64]) -> (Vec<usize>, f64, f64) {
    let n = pred.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = (f64::INFINITY, perm.clone());
    let mut second = f64::INFINITY;
    permute(&mut perm, 0, &mut |p| {
        let cost: f64 = p.iter().enumerate().map(|(i, &j)| (pred[i] - next[j]).norm()).sum();
        if cost < best.0 {
            second = best.0;
            best = (cost, p.to_vec());
        } else if cost < second {
            second = cost;
        }
    });
    (best.1, best.0, second)
}

fn permute(p: &mut Vec<usize>, i: usize, f: &mut dyn FnMut(&[usize])) {
    if i == p.len() {
        f(p);
        return;
    }
    for j in i..p.len() {
        p.swap(i, j);
        permute(p, i + 1, f);
        p.swap(i, j);
    }
}

/// Tracks each eigenvalue of `family(U)` from U = 0 (where the matrix must
/// be diagonal; label i starts at entry (i, i)) to `u_target` in `steps`
/// equal steps. Assignment is by nearest match to a linear extrapolation;
/// a step is rejected as too coarse when a matched jump exceeds half of the
/// gap to the nearest other prediction or when the best and second-best
/// assignments are not clearly separated. The final step may land on an
/// EP and is exempt.
pub fn track_eigenvalues(
    family: &dyn Fn(C64) -> CMat,
    labels: &[String],
    u_target: C64,
    steps: usize,
) -> Result<Vec<TrackedEigenvalue>> {
    let steps = steps.max(1);
    let h0 = family(ZERO);
    let n = h0.nrows();
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: labels.len(),
        });
    }
    let mut tracks: Vec<TrackedEigenvalue> = (0..n)
        .map(|i| TrackedEigenvalue {
            label: labels[i].clone(),
            path: vec![(ZERO, h0[(i, i)])],
        })
        .collect();
    let h = 1.0 / steps as f64;
    for s in 1..=steps {
        let u = u_target * (s as f64 * h);
        let vals = eigenvalues(family(u).as_ref())?;
        let pred: Vec<C64> = tracks
            .iter()
            .map(|t| {
                let p = &t.path;
                match p.len() {
                    1 => p[0].1,
                    len => p[len - 1].1 * 2.0 - p[len - 2].1,
                }
            })
            .collect();
        let (perm, cost, second) = best_assignment(&pred, &vals);
        if s < steps {
            let jump_ok = (0..n).all(|i| {
                let gap = (0..n)
                    .filter(|&j| j != i && (pred[i] - pred[j]).norm() > 1e-12)
                    .map(|j| (pred[i] - pred[j]).norm())
                    .fold(f64::INFINITY, f64::min);
                (pred[i] - vals[perm[i]]).norm() <= 0.5 * gap
            });
            let separated = second.is_infinite() || cost <= 0.5 * second || second - cost > 1e-9;
            if !jump_ok || !separated {
                return Err(Error::StepTooCoarse { step: h });
            }
        }
        for (i, t) in tracks.iter_mut().enumerate() {
            t.path.push((u, vals[perm[i]]));
        }
    }
    Ok(tracks)
}

/// Retries [`track_eigenvalues`] with doubled step counts up to `max_steps`.
pub fn track_eigenvalues_adaptive(
    family: &dyn Fn(C64) -> CMat,
    labels: &[String],
    u_target: C64,
    mut steps: usize,
    max_steps: usize,
) -> Result<Vec<TrackedEigenvalue>> {
    loop {
        match track_eigenvalues(family, labels, u_target, steps) {
            Err(Error::StepTooCoarse { step }) if steps * 2 <= max_steps => {
                let _ = step;
                steps *= 2;
            }
            other => return other,
        }
    }
}

/// The two tracks whose endpoints are closest.
pub fn colliding_pair(tracks: &[TrackedEigenvalue]) -> Option<(usize, usize, f64)> {
    let ends: Vec<C64> = tracks.iter().filter_map(|t| t.path.last().map(|p| p.1)).collect();
    let mut best: Option<(usize, usize, f64)> = None;
    for i in 0..ends.len() {
        for j in i + 1..ends.len() {
            let d = (ends[i] - ends[j]).norm();
            if best.is_none_or(|b| d < b.2) {
                best = Some((i, j, d));
            }
        }
    }
    best
}

/// 2×2 effective Hamiltonian of three fermions on
/// {|a_ke; E_k; E_q⟩, |b_ke; E_k; E_q⟩}.
pub fn three_fermion_effective(
    k_e: usize,
    k: ModeLabel,
    q: ModeLabel,
    model: &ModelSpec,
) -> Result<CMat> {
    let (dg, ab, ba) = three_fermion_elements(k_e, k, q, model)?;
    let be = bloch_coefficients(k_e, model);
    let e = band_energy(k.k, k.band, model) + band_energy(q.k, q.band, model);
    let u = model.u();
    let mut h = CMat::zeros(2, 2);
    h[(0, 0)] = e + u * dg;
    h[(1, 1)] = e + u * dg;
    h[(0, 1)] = c(be.m_k) + u * ab;
    h[(1, 0)] = c(be.p_k) + u * ba;
    Ok(h)
}

/// (diagonal, upper, lower) interaction elements of the three-fermion
/// subspace, per unit U.
fn three_fermion_elements(
    k_e: usize,
    k: ModeLabel,
    q: ModeLabel,
    model: &ModelSpec,
) -> Result<(C64, C64, C64)> {
    let l = model.l();
    let (ke, kk, kq) = (k_e % l, k.k % l, q.k % l);
    if kk == ke || kq == ke || kk == kq {
        return Err(Error::InvalidModel(format!(
            "three-fermion subspace needs distinct k_e, k, q; got {ke}, {kk}, {kq}"
        )));
    }
    let bk = bloch_coefficients(kk, model);
    let bq = bloch_coefficients(kq, model);
    check_nonzero(&bk, model)?;
    check_nonzero(&bq, model)?;
    let (ek, eq) = (bk.energy_plus(), bq.energy_plus());
    let (xk, xq) = (k.band.sign(), q.band.sign());
    let lf = l as f64;
    let dg = (ek * eq * 6.0 - xk * xq * (bk.m_k * bq.p_k + bk.p_k * bq.m_k)) / (ek * eq * 4.0 * lf);
    let ab = -(eq * bk.m_k * xk + ek * bq.m_k * xq) / (ek * eq * 2.0 * lf);
    let ba = -(eq * bk.p_k * xk + ek * bq.p_k * xq) / (ek * eq * 2.0 * lf);
    Ok((dg, ab, ba))
}

/// U^m = 2 m_ke L E_k E_q / (ξk m_k E_q + ξq m_q E_k), and the p analogue.
pub fn predict_u_three_fermion(
    twist: &ExceptionalTwist,
    k: ModeLabel,
    q: ModeLabel,
    model: &ModelSpec,
) -> Result<EPPrediction> {
    let (_, ab, ba) = three_fermion_elements(twist.k_e, k, q, model)?;
    let be = bloch_coefficients(twist.k_e, model);
    let u = match twist.family {
        Family::MZero => -c(be.m_k) / ab,
        Family::PZero => -c(be.p_k) / ba,
    };
    let l = model.l();
    let states = [Orbital::A, Orbital::B]
        .map(|o| {
            let ch = if o == Orbital::A { 'a' } else { 'b' };
            format!("|{ch}_{};{};{}>", twist.k_e % l, k, q)
        })
        .to_vec();
    Ok(EPPrediction {
        source: PredictionSource::ThreeFermion {
            k_e: twist.k_e % l,
            k,
            q,
            family: twist.family,
        },
        branch: (k.band.sign() as i8, q.band.sign() as i8),
        phi: model.phi(),
        u,
        realness: Realness::classify(u),
        involved_states: states,
    })
}

/// All three-fermion branches (k < q, both ≠ k_e, all band pairs).
pub fn three_fermion_branches(
    twist: &ExceptionalTwist,
    model: &ModelSpec,
) -> Result<Vec<EPPrediction>> {
    let l = model.l();
    let mut out = Vec::new();
    for k in 0..l {
        for q in k + 1..l {
            if k == twist.k_e || q == twist.k_e {
                continue;
            }
            for bk in [Band::Plus, Band::Minus] {
                for bq in [Band::Plus, Band::Minus] {
                    out.push(predict_u_three_fermion(
                        twist,
                        ModeLabel::new(k, bk),
                        ModeLabel::new(q, bq),
                        model,
                    )?);
                }
            }
        }
    }
    Ok(out)
}

/// A U-independent EP line of |Φ_k̃; c_ke⟩ states pinned at φ_e.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerticalLine {
    pub k_tilde: usize,
    pub k_tot: usize,
    pub phi: f64,
}

/// The L−1 vertical lines of the three-fermion problem: the Φ_k̃ pair is
/// inert under H_int within the subspace, so the single-particle Jordan
/// block at k_e survives for every U.
pub fn three_fermion_vertical_lines(twist: &ExceptionalTwist, l: usize) -> Vec<VerticalLine> {
    (0..l)
        .filter(|&kt| kt != twist.k_e % l)
        .map(|kt| VerticalLine {
            k_tilde: kt,
            k_tot: (2 * kt + twist.k_e) % l,
            phi: twist.phi_e,
        })
        .collect()
}

/// Twists in [0, 2π) where E_(k,+) + E_(q,ξ) = 0, by sign-change scan of
/// Re δ + Im δ followed by bisection to 1e−12; spurious sign changes with
/// |δ| > 1e−8 at the root are discarded.
pub fn find_phi_d(k: usize, q: usize, xi: Band, base: &ModelSpec) -> Vec<f64> {
    let f = |phi: f64| {
        let d = degeneracy_delta(k, q, xi, &base.with_phi(phi));
        d.re + d.im
    };
    let n = 4000;
    let grid: Vec<f64> = (0..=n).map(|i| TAU * i as f64 / n as f64).collect();
    let mut roots: Vec<f64> = Vec::new();
    for w in grid.windows(2) {
        let (mut lo, mut hi) = (w[0], w[1]);
        let (mut flo, fhi) = (f(lo), f(hi));
        if flo == 0.0 {
            hi = lo;
        } else if flo.signum() == fhi.signum() {
            continue;
        }
        while hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            let fm = f(mid);
            if fm.signum() == flo.signum() && fm != 0.0 {
                lo = mid;
                flo = fm;
            } else {
                hi = mid;
            }
        }
        let r = 0.5 * (lo + hi);
        let r = if r >= TAU { r - TAU } else { r };
        if degeneracy_delta(k, q, xi, &base.with_phi(r)).norm() < 1e-8
            && !roots.iter().any(|&x| (x - r).abs() < 1e-9)
        {
            roots.push(r);
        }
    }
    roots
}

/// True for the high-symmetry twists 0 and π where degeneracies are
/// generic and the emergent formulas do not apply.
pub fn is_high_symmetry(phi: f64) -> bool {
    let p = phi.rem_euclid(TAU);
    p < 1e-9 || (p - PI).abs() < 1e-9 || (TAU - p) < 1e-9
}
