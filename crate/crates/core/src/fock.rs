//! Fermionic Fock space over 2L modes: basis enumeration, operator lifting,
//! the two Hamiltonian pieces H0 and H_int, and total-momentum sectors.
//!
//! A basis state is a bitmask of occupied modes. Mode index is 2k + orbital
//! (momentum labeling) or 2j + orbital (real-space labeling). The state with
//! occupied modes i1 < i2 < … is c†_{i1} c†_{i2} … |0⟩, so applying c†_p or
//! c_p picks up (−1)^(number of occupied modes below p).

use std::collections::HashMap;
use std::sync::Arc;

use crate::bloch::{self, DisorderRealization, ModelSpec, Orbital};
use crate::linalg::determinant;
use crate::{CMat, Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Labeling {
    Momentum,
    RealSpace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FockBasis {
    l: usize,
    n: usize,
    labeling: Labeling,
    states: Vec<u64>,
    index: HashMap<u64, usize>,
}

/// All N-fermion occupations of 2L modes, ascending by bitmask value.
pub fn enumerate_basis(l: usize, n: usize, labeling: Labeling) -> Result<FockBasis> {
    let modes = 2 * l;
    if n == 0 || n > modes || modes > 63 {
        return Err(Error::InvalidFilling { n, modes });
    }
    let mut states = Vec::new();
    let mut s: u64 = (1u64 << n) - 1;
    let limit = 1u64 << modes;
    // Gosper's hack walks N-bit masks in increasing order.
    while s < limit {
        states.push(s);
        let c = s & s.wrapping_neg();
        let r = s + c;
        s = (((r ^ s) >> 2) / c) | r;
    }
    let index = states.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    Ok(FockBasis {
        l,
        n,
        labeling,
        states,
        index,
    })
}

impl FockBasis {
    pub fn l(&self) -> usize {
        self.l
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn mode_count(&self) -> usize {
        2 * self.l
    }
    pub fn labeling(&self) -> Labeling {
        self.labeling
    }
    pub fn states(&self) -> &[u64] {
        &self.states
    }
    pub fn len(&self) -> usize {
        self.states.len()
    }
    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
    pub fn position(&self, state: u64) -> Option<usize> {
        self.index.get(&state).copied()
    }

    /// Occupied modes of a state in ascending order.
    pub fn occupied(state: u64) -> impl Iterator<Item = usize> {
        (0..64).filter(move |&p| state >> p & 1 == 1)
    }

    /// Total momentum mod L of a momentum-labeled state.
    pub fn total_momentum(&self, state: u64) -> usize {
        Self::occupied(state).map(|p| p / 2).sum::<usize>() % self.l
    }
}

/// Mode index of (cell or momentum, orbital).
pub fn mode(k: usize, orbital: Orbital) -> usize {
    2 * k + orbital.index()
}

/// Ladder operator: `Create(p)` is c†_p, `Annihilate(p)` is c_p.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ladder {
    Create(usize),
    Annihilate(usize),
}

/// Applies a product of ladder operators, rightmost first. Returns the new
/// bitmask and the fermionic sign, or `None` if the result vanishes.
pub fn apply_ops(ops: &[Ladder], state: u64) -> Option<(u64, f64)> {
    let mut s = state;
    let mut sign = 1.0;
    for op in ops.iter().rev() {
        let (p, create) = match *op {
            Ladder::Create(p) => (p, true),
            Ladder::Annihilate(p) => (p, false),
        };
        let bit = 1u64 << p;
        if (s & bit != 0) == create {
            return None;
        }
        if (s & (bit - 1)).count_ones() % 2 == 1 {
            sign = -sign;
        }
        s ^= bit;
    }
    Some((s, sign))
}

/// Dense operator on a Fock basis.
#[derive(Debug, Clone)]
pub struct ManyBodyOperator {
    pub basis: Arc<FockBasis>,
    pub matrix: CMat,
}

impl ManyBodyOperator {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Sparse list of (row, col, value) for Σ_pq h_pq c†_p c_q.
fn one_body_entries(basis: &FockBasis, p: usize, q: usize) -> Vec<(usize, usize, f64)> {
    basis
        .states
        .iter()
        .enumerate()
        .filter_map(|(i, &s)| {
            let (t, sg) = apply_ops(&[Ladder::Create(p), Ladder::Annihilate(q)], s)?;
            Some((basis.index[&t], i, sg))
        })
        .collect()
}

/// Lifts a 2L×2L one-body matrix to Σ_pq h_pq c†_p c_q.
pub fn lift_one_body(basis: &FockBasis, h: &CMat) -> Result<CMat> {
    let modes = basis.mode_count();
    if h.nrows() != modes || h.ncols() != modes {
        return Err(Error::DimensionMismatch {
            expected: modes,
            got: h.nrows(),
        });
    }
    let d = basis.len();
    let mut out = CMat::zeros(d, d);
    for p in 0..modes {
        for q in 0..modes {
            let v = h[(p, q)];
            if v == C64::new(0.0, 0.0) {
                continue;
            }
            for (r, c, sg) in one_body_entries(basis, p, q) {
                out[(r, c)] += v * sg;
            }
        }
    }
    Ok(out)
}

/// Non-interacting many-body Hamiltonian Σ_k m_k a†_k b_k + p_k b†_k a_k.
pub fn assemble_h0_many(basis: &Arc<FockBasis>, model: &ModelSpec) -> Result<ManyBodyOperator> {
    if basis.labeling != Labeling::Momentum {
        return Err(Error::LabelingMismatch {
            expected: "momentum",
        });
    }
    check_size(basis, model)?;
    let matrix = lift_one_body(basis, &bloch::bloch_block_diagonal(model))?;
    Ok(ManyBodyOperator {
        basis: Arc::clone(basis),
        matrix,
    })
}

/// Non-interacting many-body Hamiltonian from the real-space matrix.
pub fn assemble_h0_real_space(
    basis: &Arc<FockBasis>,
    model: &ModelSpec,
    noise: Option<&DisorderRealization>,
) -> Result<ManyBodyOperator> {
    if basis.labeling != Labeling::RealSpace {
        return Err(Error::LabelingMismatch {
            expected: "real-space",
        });
    }
    check_size(basis, model)?;
    let h = bloch::build_real_space_single_particle(model, noise)?;
    Ok(ManyBodyOperator {
        basis: Arc::clone(basis),
        matrix: lift_one_body(basis, &h)?,
    })
}

fn check_size(basis: &FockBasis, model: &ModelSpec) -> Result<()> {
    if basis.l != model.l() {
        return Err(Error::DimensionMismatch {
            expected: model.l(),
            got: basis.l,
        });
    }
    Ok(())
}

/// Occupation count Σ_j n_j^a n_j^b of a real-space state.
fn double_occupancy(state: u64, l: usize) -> usize {
    (0..l)
        .filter(|&j| state >> (2 * j) & 0b11 == 0b11)
        .count()
}

/// Density interaction Σ_j n_j^a n_j^b, diagonal in real space and
/// (1/L) Σ a†_k a_{k+q} b†_{k'} b_{k'−q} in momentum space.
pub fn assemble_hint(basis: &Arc<FockBasis>) -> ManyBodyOperator {
    let d = basis.len();
    let l = basis.l;
    let mut out = CMat::zeros(d, d);
    match basis.labeling {
        Labeling::RealSpace => {
            for (i, &s) in basis.states.iter().enumerate() {
                out[(i, i)] = C64::new(double_occupancy(s, l) as f64, 0.0);
            }
        }
        Labeling::Momentum => {
            let w = 1.0 / l as f64;
            for (i, &s) in basis.states.iter().enumerate() {
                for k in 0..l {
                    for kp in 0..l {
                        for q in 0..l {
                            let ops = [
                                Ladder::Create(mode(k, Orbital::A)),
                                Ladder::Annihilate(mode((k + q) % l, Orbital::A)),
                                Ladder::Create(mode(kp, Orbital::B)),
                                Ladder::Annihilate(mode((kp + l - q) % l, Orbital::B)),
                            ];
                            if let Some((t, sg)) = apply_ops(&ops, s) {
                                out[(basis.index[&t], i)] += C64::new(sg * w, 0.0);
                            }
                        }
                    }
                }
            }
        }
    }
    ManyBodyOperator {
        basis: Arc::clone(basis),
        matrix: out,
    }
}

/// Slater-determinant change of basis W[S,T] = det(U[S,T]) between a
/// real-space basis (rows) and a momentum basis (columns) built from the
/// single-particle rotation U. Then O_momentum = W† O_real W.
pub fn many_body_rotation(real: &FockBasis, momentum: &FockBasis, u: &CMat) -> Result<CMat> {
    if real.len() != momentum.len() || real.n != momentum.n {
        return Err(Error::DimensionMismatch {
            expected: real.len(),
            got: momentum.len(),
        });
    }
    let n = real.n;
    let d = real.len();
    let occ: Vec<Vec<usize>> = real
        .states
        .iter()
        .map(|&s| FockBasis::occupied(s).collect())
        .collect();
    let occ_k: Vec<Vec<usize>> = momentum
        .states
        .iter()
        .map(|&s| FockBasis::occupied(s).collect())
        .collect();
    Ok(CMat::from_fn(d, d, |r, c| {
        let sub = CMat::from_fn(n, n, |i, j| u[(occ[r][i], occ_k[c][j])]);
        determinant(sub.as_ref())
    }))
}

/// Basis positions sharing one total momentum.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MomentumSector {
    pub k_tot: usize,
    pub members: Vec<usize>,
}

impl MomentumSector {
    pub fn len(&self) -> usize {
        self.members.len()
    }
    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Partition of a momentum basis by total momentum mod L.
pub fn momentum_sectors(basis: &FockBasis, model: &ModelSpec) -> Result<Vec<MomentumSector>> {
    if basis.labeling != Labeling::Momentum {
        return Err(Error::LabelingMismatch {
            expected: "momentum",
        });
    }
    if !model.is_clean() {
        return Err(Error::NotTranslationInvariant {
            sigma: model.disorder_sigma(),
        });
    }
    let mut sectors: Vec<MomentumSector> = (0..basis.l)
        .map(|k_tot| MomentumSector {
            k_tot,
            members: Vec::new(),
        })
        .collect();
    for (i, &s) in basis.states.iter().enumerate() {
        sectors[basis.total_momentum(s)].members.push(i);
    }
    Ok(sectors)
}

pub fn extract_block(matrix: &CMat, sector: &MomentumSector) -> CMat {
    let m = &sector.members;
    CMat::from_fn(m.len(), m.len(), |i, j| matrix[(m[i], m[j])])
}

/// Precomputed momentum-space H(φ, U) = Σ_k (m_k A_k + p_k B_k) + U·H_int,
/// optionally restricted to one total-momentum sector. Cheap to evaluate
/// repeatedly across a parameter grid.
#[derive(Debug, Clone)]
pub struct MomentumHamiltonian {
    l: usize,
    m: f64,
    basis: Arc<FockBasis>,
    members: Vec<usize>,
    k_tot: Option<usize>,
    /// Per momentum k: entries of a†_k b_k and of b†_k a_k inside the block.
    hop: Vec<[Vec<(usize, usize, f64)>; 2]>,
    hint: CMat,
}

impl MomentumHamiltonian {
    pub fn new(model: &ModelSpec, n: usize, k_tot: Option<usize>) -> Result<Self> {
        let basis = Arc::new(enumerate_basis(model.l(), n, Labeling::Momentum)?);
        let members: Vec<usize> = match k_tot {
            Some(k) => {
                momentum_sectors(&basis, &ModelSpec::new(model.l(), model.m())?)?[k % model.l()]
                    .members
                    .clone()
            }
            None => (0..basis.len()).collect(),
        };
        let mut local = vec![usize::MAX; basis.len()];
        for (i, &g) in members.iter().enumerate() {
            local[g] = i;
        }
        let restrict = |entries: Vec<(usize, usize, f64)>| -> Vec<(usize, usize, f64)> {
            entries
                .into_iter()
                .filter(|&(r, c, _)| local[r] != usize::MAX && local[c] != usize::MAX)
                .map(|(r, c, v)| (local[r], local[c], v))
                .collect()
        };
        let hop = (0..model.l())
            .map(|k| {
                [
                    restrict(one_body_entries(&basis, mode(k, Orbital::A), mode(k, Orbital::B))),
                    restrict(one_body_entries(&basis, mode(k, Orbital::B), mode(k, Orbital::A))),
                ]
            })
            .collect();
        let full_hint = assemble_hint(&basis).matrix;
        let hint = CMat::from_fn(members.len(), members.len(), |i, j| {
            full_hint[(members[i], members[j])]
        });
        Ok(Self {
            l: model.l(),
            m: model.m(),
            basis,
            members,
            k_tot: k_tot.map(|k| k % model.l()),
            hop,
            hint,
        })
    }

    pub fn dim(&self) -> usize {
        self.members.len()
    }
    pub fn basis(&self) -> &Arc<FockBasis> {
        &self.basis
    }
    pub fn members(&self) -> &[usize] {
        &self.members
    }
    pub fn k_tot(&self) -> Option<usize> {
        self.k_tot
    }
    pub fn hint(&self) -> &CMat {
        &self.hint
    }
    pub fn l(&self) -> usize {
        self.l
    }
    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn matrix(&self, phi: f64, u: C64) -> CMat {
        let model = ModelSpec::new(self.l, self.m)
            .expect("validated at construction")
            .with_phi(phi);
        let mut h = CMat::from_fn(self.dim(), self.dim(), |i, j| self.hint[(i, j)] * u);
        for (k, [ab, ba]) in self.hop.iter().enumerate() {
            let c = bloch::bloch_coefficients(k, &model);
            for &(r, col, s) in ab {
                h[(r, col)] += C64::new(c.m_k * s, 0.0);
            }
            for &(r, col, s) in ba {
                h[(r, col)] += C64::new(c.p_k * s, 0.0);
            }
        }
        h
    }

    /// Position inside the block of a full-basis state, if present.
    pub fn local_index(&self, state: u64) -> Option<usize> {
        let g = self.basis.position(state)?;
        self.members.iter().position(|&x| x == g)
    }
}

/// Real-space H(φ, U) for a fixed hopping-noise realization. The one-body
/// part is lifted from the 2L×2L real-space matrix at each φ.
#[derive(Debug, Clone)]
pub struct RealSpaceHamiltonian {
    model: ModelSpec,
    noise: DisorderRealization,
    basis: Arc<FockBasis>,
    /// Entries of c†_p c_q for every ordered mode pair that carries hopping.
    hop: Vec<((usize, usize), Vec<(usize, usize, f64)>)>,
    hint_diag: Vec<f64>,
}

impl RealSpaceHamiltonian {
    pub fn new(model: &ModelSpec, n: usize, noise: DisorderRealization) -> Result<Self> {
        let l = model.l();
        if noise.sites() != l {
            return Err(Error::DimensionMismatch {
                expected: bloch::COUPLINGS_PER_CELL * l,
                got: noise.factors().len(),
            });
        }
        let basis = Arc::new(enumerate_basis(l, n, Labeling::RealSpace)?);
        let pattern = bloch::build_real_space_single_particle(&model.with_phi(0.3), None)?;
        let mut hop = Vec::new();
        for p in 0..2 * l {
            for q in 0..2 * l {
                if pattern[(p, q)].norm() > 0.0 {
                    hop.push(((p, q), one_body_entries(&basis, p, q)));
                }
            }
        }
        let hint_diag = basis
            .states
            .iter()
            .map(|&s| double_occupancy(s, l) as f64)
            .collect();
        Ok(Self {
            model: *model,
            noise,
            basis,
            hop,
            hint_diag,
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }
    pub fn basis(&self) -> &Arc<FockBasis> {
        &self.basis
    }
    pub fn noise(&self) -> &DisorderRealization {
        &self.noise
    }

    pub fn matrix(&self, phi: f64, u: C64) -> CMat {
        let h1 = bloch::build_real_space_single_particle(
            &self.model.with_phi(phi),
            Some(&self.noise),
        )
        .expect("noise length validated at construction");
        let d = self.dim();
        let mut h = CMat::zeros(d, d);
        for (i, &v) in self.hint_diag.iter().enumerate() {
            h[(i, i)] = u * v;
        }
        for ((p, q), entries) in &self.hop {
            let v = h1[(*p, *q)];
            for &(r, c, s) in entries {
                h[(r, c)] += v * s;
            }
        }
        h
    }
}
