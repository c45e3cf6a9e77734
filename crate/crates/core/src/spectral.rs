//! Non-hermitian eigenanalysis: paired right and left eigenvectors, the
//! min-angle EP quantifier, eigenvector robustness and Jordan structure.

use std::f64::consts::FRAC_PI_2;

use faer::MatRef;

use crate::linalg::{self, col_vec, eig_right, inner, pair, shifted};
use crate::{CMat, Error, Result, C64};

/// Relative size of |l·r| / (‖l‖‖r‖) below which a pair counts as
/// near-defective and is left unnormalized. At this conditioning the
/// normalized pairs still reach biorthogonality ~1e−10.
pub const DEFECT_FLAG_TOL: f64 = 1e-6;

/// EP threshold on min_angle at sweep resolution.
pub const SWEEP_THRESHOLD: f64 = 1e-3;

/// EP threshold on min_angle after refinement.
pub const REFINED_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<C64>,
    /// Unit-norm right eigenvectors as columns.
    pub right: CMat,
    /// Left covectors as rows, paired bilinearly: left[i,:]·right[:,j].
    pub left: CMat,
    /// max |left_i·right_j − δ_ij| over unflagged pairs.
    pub biorth_residual: f64,
    /// Near-defective eigenpairs.
    pub flags: Vec<bool>,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn right_vector(&self, i: usize) -> Vec<C64> {
        col_vec(self.right.as_ref(), i)
    }

    pub fn left_vector(&self, i: usize) -> Vec<C64> {
        linalg::row_vec(self.left.as_ref(), i)
    }
}

/// Indices of eigenvalues grouped by single linkage at distance `tol`.
fn link_clusters(values: &[C64], tol: f64) -> Vec<Vec<usize>> {
    let n = values.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if (values[i] - values[j]).norm() <= tol {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(i);
    }
    groups
}

/// Right eigenvectors from A, left covectors from the adjoint problem, matched
/// greedily by conjugate proximity of the eigenvalues and biorthonormalized
/// inside each cluster of nearly equal eigenvalues.
pub fn decompose(a: MatRef<'_, C64>) -> Result<SpectralDecomposition> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: a.ncols(),
        });
    }
    if (0..n).any(|j| (0..n).any(|i| !a[(i, j)].is_finite())) {
        return Err(Error::EigensolveFailure("non-finite matrix entry".into()));
    }
    let (values, right) = eig_right(a)?;
    let ah = a.adjoint().to_owned();
    let (adj_values, adj_vectors) = eig_right(ah.as_ref())?;

    // Greedy assignment on sorted distances |conj(μ_j) − λ_i|.
    let mut cand: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            cand.push(((adj_values[j].conj() - values[i]).norm(), i, j));
        }
    }
    cand.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut match_of = vec![usize::MAX; n];
    let mut used = vec![false; n];
    for &(_, i, j) in &cand {
        if match_of[i] == usize::MAX && !used[j] {
            match_of[i] = j;
            used[j] = true;
        }
    }
    // Row i of `left` is the conjugate of the matched adjoint eigenvector.
    let mut left = CMat::from_fn(n, n, |i, k| adj_vectors[(k, match_of[i])].conj());

    // Rounding splits a defective pair by ~√ε, so clusters are linked at the
    // default cluster tolerance rather than at machine precision.
    let clusters = link_clusters(&values, default_cluster_tol(a));
    let mut flags = vec![false; n];
    for cl in &clusters {
        let g = CMat::from_fn(cl.len(), cl.len(), |r, c| {
            pair(
                &linalg::row_vec(left.as_ref(), cl[r]),
                &col_vec(right.as_ref(), cl[c]),
            )
        });
        let sv = linalg::singular_values(g.as_ref())?;
        let smax = sv.first().copied().unwrap_or(0.0);
        let smin = sv.last().copied().unwrap_or(0.0);
        // Left and right vectors are unit length, so |G| ≤ 1 entrywise.
        if smin < DEFECT_FLAG_TOL || smin < DEFECT_FLAG_TOL * smax {
            for &i in cl {
                flags[i] = true;
            }
            continue;
        }
        let ginv = linalg::inverse(g.as_ref());
        let rows: Vec<Vec<C64>> = cl
            .iter()
            .map(|&i| linalg::row_vec(left.as_ref(), i))
            .collect();
        for (r, &i) in cl.iter().enumerate() {
            for k in 0..n {
                left[(i, k)] = (0..cl.len()).map(|c| ginv[(r, c)] * rows[c][k]).sum();
            }
        }
    }

    let mut biorth_residual = 0.0f64;
    for i in (0..n).filter(|&i| !flags[i]) {
        let l = linalg::row_vec(left.as_ref(), i);
        for j in (0..n).filter(|&j| !flags[j]) {
            let want = if i == j { 1.0 } else { 0.0 };
            let p = pair(&l, &col_vec(right.as_ref(), j));
            biorth_residual = biorth_residual.max((p - C64::new(want, 0.0)).norm());
        }
    }
    Ok(SpectralDecomposition {
        eigenvalues: values,
        right,
        left,
        biorth_residual,
        flags,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AngleReport {
    pub min_angle: f64,
    pub argmin_pair: (usize, usize),
    /// For each eigenvector, its smallest angle to any other one.
    pub pairwise_min_per_vector: Vec<f64>,
}

/// Angle between unit vectors, arccos of the clamped overlap modulus.
/// Nearly parallel pairs use atan2(‖x − ⟨y|x⟩y‖, |⟨y|x⟩|), which stays
/// accurate where arccos loses half the digits.
pub fn vector_angle(x: &[C64], y: &[C64]) -> f64 {
    angle_from_overlap(x, y, inner(y, x))
}

fn angle_from_overlap(x: &[C64], y: &[C64], g: C64) -> f64 {
    let c = g.norm();
    if c < 0.99 {
        return c.clamp(0.0, 1.0).acos();
    }
    let s = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| (xi - g * yi).norm_sqr())
        .sum::<f64>()
        .sqrt();
    s.atan2(c)
}

/// Minimum over unordered pairs of arccos|⟨r_i|r_j⟩| with unit columns.
pub fn min_angle_of_vectors(right: MatRef<'_, C64>) -> AngleReport {
    let n = right.ncols();
    let mut per = vec![FRAC_PI_2; n];
    let mut best = (FRAC_PI_2, (0, 0));
    if n < 2 {
        return AngleReport {
            min_angle: FRAC_PI_2,
            argmin_pair: (0, 0),
            pairwise_min_per_vector: per,
        };
    }
    let gram = right.adjoint() * right;
    let mut first = true;
    for i in 0..n {
        for j in i + 1..n {
            let g = gram[(i, j)];
            let ang = if g.norm() < 0.99 {
                g.norm().clamp(0.0, 1.0).acos()
            } else {
                angle_from_overlap(&col_vec(right, j), &col_vec(right, i), g)
            };
            per[i] = per[i].min(ang);
            per[j] = per[j].min(ang);
            if first || ang < best.0 {
                best = (ang, (i, j));
                first = false;
            }
        }
    }
    AngleReport {
        min_angle: best.0,
        argmin_pair: best.1,
        pairwise_min_per_vector: per,
    }
}

pub fn min_angle(dec: &SpectralDecomposition) -> AngleReport {
    min_angle_of_vectors(dec.right.as_ref())
}

/// Right-only eigensolve followed by the angle report; the sweep fast path.
/// Also returns the eigenvalues so callers can follow the argmin pair.
pub fn min_angle_of_matrix(a: MatRef<'_, C64>) -> Result<(AngleReport, Vec<C64>)> {
    let (values, right) = eig_right(a)?;
    Ok((min_angle_of_vectors(right.as_ref()), values))
}

/// β_i = arccos|⟨r_i|ref⟩| for every right eigenvector.
pub fn vector_robustness(dec: &SpectralDecomposition, reference: &[C64]) -> Result<Vec<f64>> {
    if reference.len() != dec.dim() {
        return Err(Error::DimensionMismatch {
            expected: dec.dim(),
            got: reference.len(),
        });
    }
    Ok((0..dec.dim())
        .map(|i| vector_angle(&dec.right_vector(i), reference))
        .collect())
}

#[derive(Debug, Clone)]
pub struct JordanCluster {
    pub members: Vec<usize>,
    pub center: C64,
    pub diameter: f64,
    /// Jordan block sizes, largest first; they sum to the multiplicity.
    pub block_sizes: Vec<usize>,
    /// Orthonormal basis of ker((A − λ)^r), r the multiplicity.
    pub generalized_vectors: CMat,
}

impl JordanCluster {
    pub fn multiplicity(&self) -> usize {
        self.members.len()
    }
    /// Longest Jordan chain in the cluster.
    pub fn chain_length(&self) -> usize {
        self.block_sizes.first().copied().unwrap_or(1)
    }
}

#[derive(Debug, Clone)]
pub struct JordanReport {
    pub eigenvalues: Vec<C64>,
    pub clusters: Vec<JordanCluster>,
}

impl JordanReport {
    pub fn chain_lengths(&self) -> Vec<usize> {
        self.clusters.iter().map(JordanCluster::chain_length).collect()
    }

    /// Number of clusters whose longest chain has the given length.
    pub fn count_chains(&self, length: usize) -> usize {
        self.clusters
            .iter()
            .filter(|c| c.chain_length() == length)
            .count()
    }

    pub fn max_chain_length(&self) -> usize {
        self.chain_lengths().into_iter().max().unwrap_or(0)
    }
}

/// Default cluster tolerance 1e−6·max(1, ‖A‖_max).
pub fn default_cluster_tol(a: MatRef<'_, C64>) -> f64 {
    1e-6 * linalg::max_abs(a).max(1.0)
}

/// Default relative rank tolerance on singular values.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// Clusters eigenvalues at `cluster_tol` and, per cluster with centre λ̄ and
/// multiplicity r, reads the Jordan structure off the nullities of
/// (A − λ̄)^j, j = 1..r, counting singular values below
/// max(`rank_tol`·σ_max, diameter^j).
/// The last nullity is pinned to r, since the cluster's algebraic
/// multiplicity fixes it and roundoff at higher powers would only blur it.
pub fn jordan_analysis(a: MatRef<'_, C64>, cluster_tol: f64, rank_tol: f64) -> Result<JordanReport> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: a.ncols(),
        });
    }
    let values = linalg::eigenvalues(a)?;
    let groups = link_clusters(&values, cluster_tol);
    let vals = values.as_slice();

    let mut centers = Vec::with_capacity(groups.len());
    for g in &groups {
        let c = g.iter().map(|&i| values[i]).sum::<C64>() / g.len() as f64;
        let diameter = g
            .iter()
            .flat_map(|&i| g.iter().map(move |&j| (vals[i] - vals[j]).norm()))
            .fold(0.0, f64::max);
        if diameter > cluster_tol / 10.0 {
            return Err(Error::AmbiguousClustering {
                diameter,
                tol: cluster_tol,
            });
        }
        centers.push((c, diameter));
    }
    for (gi, g) in groups.iter().enumerate() {
        for h in groups.iter().skip(gi + 1) {
            let gap = g
                .iter()
                .flat_map(|&i| h.iter().map(move |&j| (vals[i] - vals[j]).norm()))
                .fold(f64::INFINITY, f64::min);
            if gap < 10.0 * cluster_tol {
                return Err(Error::AmbiguousClustering {
                    diameter: gap,
                    tol: cluster_tol,
                });
            }
        }
    }

    let mut clusters = Vec::with_capacity(groups.len());
    for (g, (center, diameter)) in groups.into_iter().zip(centers) {
        let r = g.len();
        let b = shifted(a, center);
        let mut power = b.clone();
        let mut nullities = Vec::with_capacity(r);
        for j in 1..=r {
            if j > 1 {
                power = &power * &b;
            }
            let sv = linalg::singular_values(power.as_ref())?;
            let smax = sv.first().copied().unwrap_or(0.0);
            // A resolved cluster with well-separated eigenvectors has its small
            // singular values near diameter^j; a near-defective one falls
            // well below that.
            let cut = (rank_tol * smax.max(f64::MIN_POSITIVE)).max(diameter.powi(j as i32));
            let null = sv.iter().filter(|&&s| s <= cut).count().min(r);
            nullities.push(null);
        }
        // Nullities are non-decreasing and reach r at the top power.
        for j in 1..r {
            nullities[j] = nullities[j].max(nullities[j - 1]);
        }
        nullities[r - 1] = r;
        if nullities[0] == 0 {
            nullities[0] = 1;
        }
        let block_sizes = block_sizes_from_nullities(&nullities);
        let generalized_vectors = smallest_right_singular_vectors(&power, r)?;
        clusters.push(JordanCluster {
            members: g,
            center,
            diameter,
            block_sizes,
            generalized_vectors,
        });
    }
    Ok(JordanReport {
        eigenvalues: values,
        clusters,
    })
}

/// Weyr characteristic to Jordan block sizes. With n_0 = 0, the number of
/// blocks of size ≥ j is n_j − n_{j−1}. Counts that increase with j (from
/// rank blur) are clipped so the sizes stay consistent.
fn block_sizes_from_nullities(nullities: &[usize]) -> Vec<usize> {
    let r = *nullities.last().unwrap_or(&0);
    let mut at_least: Vec<usize> = Vec::with_capacity(nullities.len());
    let mut prev = 0;
    for &nj in nullities {
        let cnt = nj - prev;
        let cap = at_least.last().copied().unwrap_or(usize::MAX);
        at_least.push(cnt.min(cap));
        prev = nj;
    }
    let mut sizes = Vec::new();
    for j in (0..at_least.len()).rev() {
        let next = at_least.get(j + 1).copied().unwrap_or(0);
        for _ in 0..at_least[j].saturating_sub(next) {
            sizes.push(j + 1);
        }
    }
    // Anything lost to clipping joins the longest chain.
    let total: usize = sizes.iter().sum();
    if total < r {
        if let Some(first) = sizes.first_mut() {
            *first += r - total;
        } else {
            sizes.push(r);
        }
    }
    sizes
}

fn smallest_right_singular_vectors(a: &CMat, r: usize) -> Result<CMat> {
    let n = a.ncols();
    let svd = a
        .svd()
        .map_err(|e| Error::EigensolveFailure(format!("{e:?}")))?;
    let v = svd.V();
    let s = svd.S();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| s[i].re.total_cmp(&s[j].re));
    Ok(CMat::from_fn(n, r.min(n), |row, c| v[(row, order[c])]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;
    use proptest::prelude::*;

    #[test]
    fn resolved_cluster_reads_by_eigenvector_geometry() {
        // two resolved eigenvalues 1e-4 apart: orthogonal vectors are
        // diagonalizable, a perturbed Jordan block is not
        let d = 1e-4;
        let mut diag = CMat::zeros(3, 3);
        diag[(0, 0)] = C64::new(d / 2.0, 0.0);
        diag[(1, 1)] = C64::new(-d / 2.0, 0.0);
        diag[(2, 2)] = C64::new(1.0, 0.0);
        let rep = jordan_analysis(diag.as_ref(), 1e-2, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(rep.max_chain_length(), 1);
        let mut jb = diag.clone();
        jb[(0, 1)] = C64::new(1.0, 0.0);
        let rep = jordan_analysis(jb.as_ref(), 1e-2, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(rep.count_chains(2), 1);
    }
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_matrix(n: usize, rng: &mut ChaCha8Rng) -> CMat {
        CMat::from_fn(n, n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    #[test]
    fn diagonal_matrix() {
        let mut a = CMat::zeros(2, 2);
        a[(0, 0)] = c(1.0, 0.0);
        a[(1, 1)] = c(0.0, 2.0);
        let d = decompose(a.as_ref()).unwrap();
        assert!(d.biorth_residual < 1e-14);
        let mut ev = d.eigenvalues.clone();
        ev.sort_by(|x, y| x.im.total_cmp(&y.im));
        assert_eq!(ev, vec![c(1.0, 0.0), c(0.0, 2.0)]);
        assert!((min_angle(&d).min_angle - FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn jordan_block_is_flagged() {
        let mut a = CMat::zeros(2, 2);
        a[(0, 1)] = c(1.0, 0.0);
        let d = decompose(a.as_ref()).unwrap();
        assert!(d.flags.iter().all(|&f| f));
        assert!(min_angle(&d).min_angle < 1e-6);
        let j = jordan_analysis(a.as_ref(), 1e-6, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(j.clusters.len(), 1);
        assert_eq!(j.chain_lengths(), vec![2]);
    }

    #[test]
    fn random_matrices_are_biorthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [3, 8, 20] {
            let a = random_matrix(n, &mut rng);
            let d = decompose(a.as_ref()).unwrap();
            assert!(d.flags.iter().all(|&f| !f));
            assert!(d.biorth_residual < 1e-8, "{}", d.biorth_residual);
            for i in 0..n {
                let r = d.right_vector(i);
                let ar = linalg::apply(a.as_ref(), &r);
                let res = ar
                    .iter()
                    .zip(&r)
                    .map(|(x, y)| (x - d.eigenvalues[i] * y).norm())
                    .fold(0.0, f64::max);
                assert!(res < 1e-10 * max_abs(a.as_ref()));
                let l = d.left_vector(i);
                let la = linalg::apply_left(&l, a.as_ref());
                let res = la
                    .iter()
                    .zip(&l)
                    .map(|(x, y)| (x - d.eigenvalues[i] * y).norm())
                    .fold(0.0, f64::max);
                assert!(res < 1e-9 * linalg::norm(&l));
            }
        }
    }

    #[test]
    fn degenerate_diagonalizable_cluster_is_biorthonormalized() {
        // Non-normal matrix with a two-fold semisimple eigenvalue.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = random_matrix(4, &mut rng);
        let mut d = CMat::zeros(4, 4);
        for (i, v) in [1.0, 1.0, -0.5, 2.0].into_iter().enumerate() {
            d[(i, i)] = c(v, 0.0);
        }
        let a = &s * &d * linalg::inverse(s.as_ref());
        let dec = decompose(a.as_ref()).unwrap();
        assert!(dec.flags.iter().all(|&f| !f));
        assert!(dec.biorth_residual < 1e-8);
    }

    #[test]
    fn hermitian_input_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = random_matrix(6, &mut rng);
        let h = &r + r.adjoint();
        let d = decompose(h.as_ref()).unwrap();
        assert!((min_angle(&d).min_angle - FRAC_PI_2).abs() < 1e-8);
    }

    #[test]
    fn robustness_against_own_vector_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_matrix(5, &mut rng);
        let d = decompose(a.as_ref()).unwrap();
        let beta = vector_robustness(&d, &d.right_vector(2)).unwrap();
        assert!(beta[2] < 1e-7);
        let rnd: Vec<C64> = (0..5).map(|i| c(1.0, i as f64)).collect();
        let n = linalg::norm(&rnd);
        let rnd: Vec<C64> = rnd.iter().map(|x| x / n).collect();
        let beta = vector_robustness(&d, &rnd).unwrap();
        assert!(beta.iter().cloned().fold(f64::INFINITY, f64::min) > 0.0);
    }

    #[test]
    fn planted_jordan_structure_is_recovered() {
        // J3(0.5) ⊕ J2(−1) ⊕ diag(2i, 3) under a random similarity.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut j = CMat::zeros(7, 7);
        for i in 0..3 {
            j[(i, i)] = c(0.5, 0.0);
        }
        j[(0, 1)] = c(1.0, 0.0);
        j[(1, 2)] = c(1.0, 0.0);
        j[(3, 3)] = c(-1.0, 0.0);
        j[(4, 4)] = c(-1.0, 0.0);
        j[(3, 4)] = c(1.0, 0.0);
        j[(5, 5)] = c(0.0, 2.0);
        j[(6, 6)] = c(3.0, 0.0);
        let s = &linalg::identity(7) + &(&random_matrix(7, &mut rng) * faer::Scale(c(0.3, 0.0)));
        let a = &s * &j * linalg::inverse(s.as_ref());
        let rep = jordan_analysis(a.as_ref(), 1e-3, 1e-8).unwrap();
        let mut lens = rep.chain_lengths();
        lens.sort();
        assert_eq!(lens, vec![1, 1, 2, 3]);
        let c3 = rep.clusters.iter().find(|c| c.chain_length() == 3).unwrap();
        assert_eq!(c3.generalized_vectors.ncols(), 3);
        let b = shifted(a.as_ref(), c(0.5, 0.0));
        let b3 = &(&b * &b) * &b;
        let k = &b3 * &c3.generalized_vectors;
        assert!(max_abs(k.as_ref()) < 1e-6);
    }

    #[test]
    fn near_cluster_distance_is_ambiguous() {
        let mut a = CMat::zeros(2, 2);
        a[(0, 0)] = c(0.0, 0.0);
        a[(1, 1)] = c(5e-6, 0.0);
        assert!(matches!(
            jordan_analysis(a.as_ref(), 1e-6, 1e-8),
            Err(Error::AmbiguousClustering { .. })
        ));
    }

    #[test]
    fn weyr_characteristic_conversion() {
        assert_eq!(block_sizes_from_nullities(&[1, 2]), vec![2]);
        assert_eq!(block_sizes_from_nullities(&[2, 2]), vec![1, 1]);
        assert_eq!(block_sizes_from_nullities(&[1, 2, 3]), vec![3]);
        assert_eq!(block_sizes_from_nullities(&[2, 3, 3]), vec![2, 1]);
        assert_eq!(block_sizes_from_nullities(&[1, 1, 3]), vec![3]);
    }

    proptest! {
        #[test]
        fn min_angle_ignores_phases_and_order(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_matrix(6, &mut rng);
            let (_, r) = eig_right(a.as_ref()).unwrap();
            let base = min_angle_of_vectors(r.as_ref()).min_angle;
            let perm: Vec<usize> = vec![3, 0, 5, 1, 4, 2];
            let phases: Vec<C64> = (0..6)
                .map(|_| C64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU)))
                .collect();
            let twisted = CMat::from_fn(6, 6, |i, j| r[(i, perm[j])] * phases[j]);
            let other = min_angle_of_vectors(twisted.as_ref()).min_angle;
            prop_assert!((base - other).abs() < 1e-12);
            prop_assert!((0.0..=FRAC_PI_2).contains(&base));
        }

        #[test]
        fn normal_matrices_have_right_angles(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r = random_matrix(5, &mut rng);
            let h = &r + r.adjoint();
            let ang = min_angle_of_matrix(h.as_ref()).unwrap().0.min_angle;
            prop_assert!(ang >= FRAC_PI_2 - 1e-6);
        }
    }
}
