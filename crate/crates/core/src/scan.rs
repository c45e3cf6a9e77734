//! Parameter-plane exploration: parallel (φ, U) sweeps of the min-angle
//! field, EP refinement, line tracing, EP3 location, and circle/sphere
//! probes.

use std::f64::consts::{PI, TAU};
use std::time::Instant;

use rayon::prelude::*;

use crate::bloch::{DisorderRealization, ModelSpec, NoisePlacement};
use crate::fock::{MomentumHamiltonian, RealSpaceHamiltonian};
use crate::spectral::{
    default_cluster_tol, jordan_analysis, min_angle_of_matrix, AngleReport, JordanReport,
    DEFAULT_RANK_TOL, REFINED_THRESHOLD, SWEEP_THRESHOLD,
};
use crate::{linalg, CMat, Error, Result, C64};

/// A family H(φ, U) that can be evaluated concurrently.
pub trait ParametricHamiltonian: Sync {
    fn dim(&self) -> usize;
    fn matrix(&self, phi: f64, u: C64) -> CMat;
}

impl ParametricHamiltonian for MomentumHamiltonian {
    fn dim(&self) -> usize {
        MomentumHamiltonian::dim(self)
    }
    fn matrix(&self, phi: f64, u: C64) -> CMat {
        MomentumHamiltonian::matrix(self, phi, u)
    }
}

impl ParametricHamiltonian for RealSpaceHamiltonian {
    fn dim(&self) -> usize {
        RealSpaceHamiltonian::dim(self)
    }
    fn matrix(&self, phi: f64, u: C64) -> CMat {
        RealSpaceHamiltonian::matrix(self, phi, u)
    }
}

/// Adapter for closures, e.g. effective Hamiltonians.
pub struct FnHamiltonian<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(f64, C64) -> CMat + Sync> FnHamiltonian<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(f64, C64) -> CMat + Sync> ParametricHamiltonian for FnHamiltonian<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn matrix(&self, phi: f64, u: C64) -> CMat {
        (self.f)(phi, u)
    }
}

/// The many-body family for a model: momentum space (optionally one
/// sector) when clean, real space with one seeded noise realization
/// otherwise. The realization is fixed for the whole family so every cell
/// of a sweep sees the same disordered system.
pub fn hamiltonian_for(
    model: &ModelSpec,
    n: usize,
    sector: Option<usize>,
    placement: NoisePlacement,
) -> Result<Box<dyn ParametricHamiltonian>> {
    if model.is_clean() {
        return Ok(Box::new(MomentumHamiltonian::new(model, n, sector)?));
    }
    if sector.is_some() {
        return Err(Error::NotTranslationInvariant {
            sigma: model.disorder_sigma(),
        });
    }
    let noise = DisorderRealization::sample(model.l(), model.disorder_sigma(), model.seed(), placement)?;
    Ok(Box::new(RealSpaceHamiltonian::new(model, n, noise)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

impl Range {
    pub fn new(lo: f64, hi: f64, steps: usize) -> Self {
        Self { lo, hi, steps }
    }

    pub fn value(&self, i: usize) -> f64 {
        self.lo + (self.hi - self.lo) * i as f64 / (self.steps - 1) as f64
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.steps).map(|i| self.value(i))
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.steps - 1) as f64
    }

    fn validate(&self, what: &str) -> Result<()> {
        if self.steps < 2 {
            return Err(Error::InvalidSpec(format!("{what}: steps must be at least 2")));
        }
        if !self.lo.is_finite() || !self.hi.is_finite() || self.lo >= self.hi {
            return Err(Error::InvalidSpec(format!(
                "{what}: need finite lo < hi, got [{}, {}]",
                self.lo, self.hi
            )));
        }
        Ok(())
    }
}

/// Whether the swept interaction is real (hermitian H_int coupling) or
/// purely imaginary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum UAxis {
    #[default]
    Real,
    Imaginary,
}

impl UAxis {
    pub fn to_complex(self, v: f64) -> C64 {
        match self {
            UAxis::Real => C64::new(v, 0.0),
            UAxis::Imaginary => C64::new(0.0, v),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub phi: Range,
    pub u: Range,
    pub axis: UAxis,
    pub sector: Option<usize>,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        self.phi.validate("phi")?;
        self.u.validate("U")
    }

    pub fn len(&self) -> usize {
        self.phi.steps * self.u.steps
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// (φ, U) of a row-major cell index (U rows, φ columns).
    pub fn point(&self, idx: usize) -> (f64, C64) {
        let (iu, ip) = (idx / self.phi.steps, idx % self.phi.steps);
        (self.phi.value(ip), self.axis.to_complex(self.u.value(iu)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub min_angle: f64,
    pub argmin: (usize, usize),
    /// Set when the eigensolve failed; the angle is then NaN.
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub grid: GridSpec,
    /// Row-major: index = iu·phi.steps + iφ.
    pub cells: Vec<Cell>,
    pub elapsed_secs: f64,
}

impl SweepResult {
    pub fn angle(&self, iu: usize, ip: usize) -> f64 {
        self.cells[iu * self.grid.phi.steps + ip].min_angle
    }

    pub fn row(&self, iu: usize) -> &[Cell] {
        let w = self.grid.phi.steps;
        &self.cells[iu * w..(iu + 1) * w]
    }
}

pub fn angle_at(ham: &dyn ParametricHamiltonian, phi: f64, u: C64) -> Result<AngleReport> {
    Ok(min_angle_of_matrix(ham.matrix(phi, u).as_ref())?.0)
}

/// The min angle needs at least one pair of eigenvectors.
fn require_pairs(ham: &dyn ParametricHamiltonian) -> Result<()> {
    if ham.dim() < 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: ham.dim(),
        });
    }
    Ok(())
}

fn angle_or_nan(ham: &dyn ParametricHamiltonian, phi: f64, u: C64) -> f64 {
    angle_at(ham, phi, u).map_or(f64::NAN, |r| r.min_angle)
}

/// Evaluates the min-angle field on the grid. Cells are independent and
/// gathered by index, so the result does not depend on the worker count.
pub fn sweep(grid: &GridSpec, ham: &dyn ParametricHamiltonian) -> Result<SweepResult> {
    grid.validate()?;
    require_pairs(ham)?;
    let start = Instant::now();
    let cells = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let (phi, u) = grid.point(idx);
            match angle_at(ham, phi, u) {
                Ok(r) => Cell {
                    min_angle: r.min_angle,
                    argmin: r.argmin_pair,
                    error: None,
                },
                Err(e) => Cell {
                    min_angle: f64::NAN,
                    argmin: (0, 0),
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(SweepResult {
        grid: *grid,
        cells,
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}

/// Golden-section minimum of `f` on [lo, hi].
pub fn golden_min(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    let mut iter = 0;
    while hi - lo > tol && iter < 200 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        }
        iter += 1;
    }
    if f1 <= f2 { (x1, f1) } else { (x2, f2) }
}

/// Sampled scan followed by golden refinement around each sampled local
/// minimum whose value is below `prefilter`; returns (x, f) of all refined
/// minima sorted by x.
pub fn local_minima_1d(
    f: &dyn Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    samples: usize,
    prefilter: f64,
    tol: f64,
) -> Vec<(f64, f64)> {
    let xs: Vec<f64> = (0..samples)
        .map(|i| lo + (hi - lo) * i as f64 / (samples - 1) as f64)
        .collect();
    let fs: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let mut out = Vec::new();
    for i in 0..samples {
        let left = if i > 0 { fs[i - 1] } else { f64::INFINITY };
        let right = if i + 1 < samples { fs[i + 1] } else { f64::INFINITY };
        if fs[i] <= left && fs[i] < right && fs[i] < prefilter {
            let a = xs[i.saturating_sub(1)];
            let b = xs[(i + 1).min(samples - 1)];
            out.push(golden_min(f, a, b, tol));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RefineStatus {
    Converged,
    Lost,
}

#[derive(Debug, Clone)]
pub struct RefinedEp {
    pub phi: f64,
    /// Coordinate along the swept U axis.
    pub u: f64,
    pub min_angle: f64,
    pub status: RefineStatus,
    /// Jordan analysis at the refined point, when clustering was unambiguous.
    pub jordan: Option<JordanReport>,
    /// Chain length of the cluster holding the coalescing pair (0 if unknown).
    pub chain: usize,
}

impl RefinedEp {
    pub fn chain_length(&self) -> usize {
        self.chain
    }
}

/// Jordan analysis with the cluster tolerance opened to the observed pair
/// splitting, so a refined EP2 is not split by residual sqrt-sensitivity.
/// Tolerances grow geometrically until the clustering is unambiguous and
/// eigenvalues `i`, `j` share a cluster.
pub fn confirm_defective(h: &CMat, pair: (usize, usize), pair_gap: f64) -> Option<JordanReport> {
    let base = default_cluster_tol(h.as_ref());
    let mut tol = base.max(20.0 * pair_gap);
    let cap = 1e-2 * linalg::max_abs(h.as_ref()).max(1.0);
    while tol <= cap {
        if let Ok(rep) = jordan_analysis(h.as_ref(), tol, DEFAULT_RANK_TOL) {
            if rep.clusters.iter().any(|c| c.members.contains(&pair.0) && c.members.contains(&pair.1)) {
                return Some(rep);
            }
        }
        tol *= 10f64.sqrt();
    }
    None
}

/// Chain length of the cluster containing eigenvalue `i`.
pub fn chain_length_of(rep: &JordanReport, i: usize) -> usize {
    rep.clusters
        .iter()
        .find(|c| c.members.contains(&i))
        .map_or(0, |c| c.chain_length())
}

fn finish(ham: &dyn ParametricHamiltonian, phi: f64, u: f64, axis: UAxis) -> Result<RefinedEp> {
    let h = ham.matrix(phi, axis.to_complex(u));
    let (rep, vals) = min_angle_of_matrix(h.as_ref())?;
    let (i, j) = rep.argmin_pair;
    let gap = (vals[i] - vals[j]).norm();
    let status = if rep.min_angle < REFINED_THRESHOLD {
        RefineStatus::Converged
    } else {
        RefineStatus::Lost
    };
    let jordan = if status == RefineStatus::Converged {
        confirm_defective(&h, (i, j), gap)
    } else {
        None
    };
    let chain = jordan.as_ref().map_or(0, |r| chain_length_of(r, i));
    Ok(RefinedEp {
        phi,
        u,
        min_angle: rep.min_angle,
        status,
        jordan,
        chain,
    })
}

/// Refines an EP crossing at fixed φ within U ∈ [u_lo, u_hi]: sampled
/// scan, then golden section around the deepest sample.
pub fn refine_at_phi(
    ham: &dyn ParametricHamiltonian,
    phi: f64,
    axis: UAxis,
    u_lo: f64,
    u_hi: f64,
) -> Result<RefinedEp> {
    let f = |u: f64| angle_or_nan(ham, phi, axis.to_complex(u));
    let minima = local_minima_1d(&f, u_lo, u_hi, 41, f64::INFINITY, 1e-14 * (1.0 + u_hi.abs()));
    let best = minima
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::InvalidSpec("empty refinement bracket".into()))?;
    finish(ham, phi, best.0, axis)
}

/// Refines a seed (φ, U) by alternating golden-section searches in U and in
/// φ over shrinking brackets of half-widths (h_phi, h_u). LOST when the
/// angle stays above the refined threshold.
pub fn refine_ep(
    ham: &dyn ParametricHamiltonian,
    seed: (f64, f64),
    axis: UAxis,
    h_phi: f64,
    h_u: f64,
) -> Result<RefinedEp> {
    let (mut phi, mut u) = seed;
    let (mut hp, mut hu) = (h_phi, h_u);
    let mut best = f64::INFINITY;
    for _ in 0..6 {
        let fu = |x: f64| angle_or_nan(ham, phi, axis.to_complex(x));
        let (nu, au) = golden_min(&fu, u - hu, u + hu, 1e-14 * (1.0 + u.abs()));
        if au < best {
            u = nu;
            best = au;
        }
        if best < REFINED_THRESHOLD {
            break;
        }
        let fp = |x: f64| angle_or_nan(ham, x, axis.to_complex(u));
        let (np, ap) = golden_min(&fp, phi - hp, phi + hp, 1e-14 * (1.0 + phi.abs()));
        if ap < best {
            phi = np;
            best = ap;
        }
        if best < REFINED_THRESHOLD {
            break;
        }
        hp *= 0.5;
        hu *= 0.5;
    }
    finish(ham, phi, u, axis)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EndpointTag {
    Boundary,
    Annihilation,
    Lost,
    /// The line reversed direction (cusp); annihilation candidate until
    /// confirmed.
    Turn,
    /// Point budget exhausted.
    Budget,
}

impl EndpointTag {
    pub fn label(self) -> &'static str {
        match self {
            EndpointTag::Boundary => "BOUNDARY",
            EndpointTag::Annihilation => "ANNIHILATION",
            EndpointTag::Lost => "LOST",
            EndpointTag::Turn => "TURN",
            EndpointTag::Budget => "BUDGET",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinePoint {
    pub phi: f64,
    pub u: f64,
    pub min_angle: f64,
    pub chain_length: usize,
    /// Mean of the coalescing eigenvalue pair.
    pub lambda: C64,
}

/// Angle between the right eigenvectors of the two eigenvalues nearest
/// `lambda`, and the mean of that pair.
pub fn pair_angle_near(ham: &dyn ParametricHamiltonian, phi: f64, u: C64, lambda: C64) -> Result<(f64, C64)> {
    let (vals, vecs) = linalg::eig_right(ham.matrix(phi, u).as_ref())?;
    let (i, j) = nearest_pair(&vals, lambda);
    let a = crate::spectral::vector_angle(&linalg::col_vec(vecs.as_ref(), i), &linalg::col_vec(vecs.as_ref(), j));
    Ok((a, (vals[i] + vals[j]) / 2.0))
}

fn nearest_pair(vals: &[C64], lambda: C64) -> (usize, usize) {
    let mut idx: Vec<usize> = (0..vals.len()).collect();
    idx.sort_by(|&a, &b| (vals[a] - lambda).norm().total_cmp(&(vals[b] - lambda).norm()));
    (idx[0], idx[1])
}

/// Pair angle, pair mean and Jordan chain length at a traced point.
fn line_point_report(ham: &dyn ParametricHamiltonian, phi: f64, u: C64, lambda: C64) -> Result<(f64, C64, usize)> {
    let h = ham.matrix(phi, u);
    let (vals, vecs) = linalg::eig_right(h.as_ref())?;
    let (i, j) = nearest_pair(&vals, lambda);
    let a = crate::spectral::vector_angle(&linalg::col_vec(vecs.as_ref(), i), &linalg::col_vec(vecs.as_ref(), j));
    // jordan_analysis recomputes the same eigenvalues; map the pair by value
    let gap = (vals[i] - vals[j]).norm();
    let chain = confirm_defective_near(&h, (vals[i] + vals[j]) / 2.0, gap).unwrap_or(0);
    Ok((a, (vals[i] + vals[j]) / 2.0, chain))
}

/// Chain length of the cluster nearest `center`, with the tolerance ladder
/// of [`confirm_defective`].
fn confirm_defective_near(h: &CMat, center: C64, pair_gap: f64) -> Option<usize> {
    let base = default_cluster_tol(h.as_ref());
    let mut tol = base.max(20.0 * pair_gap);
    let cap = 1e-2 * linalg::max_abs(h.as_ref()).max(1.0);
    while tol <= cap {
        if let Ok(rep) = jordan_analysis(h.as_ref(), tol, DEFAULT_RANK_TOL) {
            if let Some(c) = rep
                .clusters
                .iter()
                .filter(|c| c.multiplicity() >= 2)
                .min_by(|a, b| (a.center - center).norm().total_cmp(&(b.center - center).norm()))
            {
                if (c.center - center).norm() <= tol {
                    return Some(c.chain_length());
                }
            }
        }
        tol *= 10f64.sqrt();
    }
    None
}

/// Mean of the eigenvalue pair with the smallest eigenvector angle.
pub fn coalescing_value(ham: &dyn ParametricHamiltonian, phi: f64, u: C64) -> Result<C64> {
    let (rep, vals) = min_angle_of_matrix(ham.matrix(phi, u).as_ref())?;
    let (i, j) = rep.argmin_pair;
    Ok((vals[i] + vals[j]) / 2.0)
}

#[derive(Debug, Clone)]
pub struct EPLine {
    pub points: Vec<LinePoint>,
    pub end: EndpointTag,
    pub axis: UAxis,
    pub labels: Vec<String>,
}

impl EPLine {
    pub fn last(&self) -> Option<&LinePoint> {
        self.points.last()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceOptions {
    pub step: f64,
    pub min_step: f64,
    pub max_points: usize,
    pub phi_bounds: (f64, f64),
    pub u_bounds: (f64, f64),
    pub axis: UAxis,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self {
            step: 1e-2,
            min_step: 1e-5,
            max_points: 2000,
            phi_bounds: (0.0, TAU),
            u_bounds: (-2.0, 2.0),
            axis: UAxis::Real,
        }
    }
}

fn normalize(v: (f64, f64)) -> (f64, f64) {
    let n = v.0.hypot(v.1);
    (v.0 / n, v.1 / n)
}

/// Predictor-corrector continuation along the angle-minimum valley from a
/// refined start in the initial direction `dir` (in (φ, U)). The corrector
/// searches the normal through the predicted point for the refined minimum
/// nearest the prediction; steps that fail or jump are halved down to
/// `min_step`.
pub fn trace_line(
    ham: &dyn ParametricHamiltonian,
    start: (f64, f64),
    dir: (f64, f64),
    opts: &TraceOptions,
) -> Result<EPLine> {
    require_pairs(ham)?;
    let axis = opts.axis;
    let first = finish(ham, start.0, start.1, axis)?;
    let mut points = vec![LinePoint {
        phi: first.phi,
        u: first.u,
        min_angle: first.min_angle,
        chain_length: first.chain_length(),
        lambda: coalescing_value(ham, first.phi, axis.to_complex(first.u))?,
    }];
    let mut dir = normalize(dir);
    let mut h = opts.step;
    let inside = |p: (f64, f64)| {
        p.0 >= opts.phi_bounds.0 && p.0 <= opts.phi_bounds.1 && p.1 >= opts.u_bounds.0 && p.1 <= opts.u_bounds.1
    };
    let end = loop {
        if points.len() >= opts.max_points {
            break EndpointTag::Budget;
        }
        let p = *points.last().expect("non-empty");
        let pred = (p.phi + h * dir.0, p.u + h * dir.1);
        if !inside(pred) {
            break EndpointTag::Boundary;
        }
        let n = (-dir.1, dir.0);
        // The objective follows this line's own eigenvalue pair, so crossings
        // with other lines in the same block do not capture the corrector.
        let lam_pred = match points.len() {
            1 => p.lambda,
            k => p.lambda * 2.0 - points[k - 2].lambda,
        };
        let f = |s: f64| {
            pair_angle_near(ham, pred.0 + s * n.0, axis.to_complex(pred.1 + s * n.1), lam_pred)
                .map_or(f64::NAN, |x| x.0)
        };
        let minima = local_minima_1d(&f, -h, h, 21, SWEEP_THRESHOLD * 30.0, 1e-15 + 1e-13 * h);
        let pick = minima
            .into_iter()
            .filter(|m| m.1 < REFINED_THRESHOLD)
            .min_by(|a, b| a.0.abs().total_cmp(&b.0.abs()));
        let accepted = pick.and_then(|(s, a)| {
            let q = (pred.0 + s * n.0, pred.1 + s * n.1);
            let d = (q.0 - p.phi, q.1 - p.u);
            let len = d.0.hypot(d.1);
            (len > 0.2 * h && len < 2.0 * h).then_some((q, a, normalize(d)))
        });
        match accepted {
            Some((q, _a, nd)) => {
                if nd.0 * dir.0 + nd.1 * dir.1 < 0.0 {
                    break EndpointTag::Turn;
                }
                let (angle, lambda, chain) = line_point_report(ham, q.0, axis.to_complex(q.1), lam_pred)?;
                points.push(LinePoint {
                    phi: q.0,
                    u: q.1,
                    min_angle: angle,
                    chain_length: chain,
                    lambda,
                });
                dir = nd;
                h = (h * 1.5).min(opts.step);
            }
            None => {
                h *= 0.5;
                if h < opts.min_step {
                    break EndpointTag::Lost;
                }
            }
        }
    };
    Ok(EPLine {
        points,
        end,
        axis,
        labels: Vec::new(),
    })
}

/// An order-3 coalescence located on the real-U plane.
#[derive(Debug, Clone)]
pub struct Ep3Location {
    pub phi: f64,
    pub u: f64,
    pub triple: [C64; 3],
    pub diameter: f64,
    pub iterations: usize,
}

fn tightest_triple(vals: &[C64], near: Option<C64>) -> [C64; 3] {
    let n = vals.len();
    let mut best = (f64::INFINITY, [vals[0]; 3]);
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let t = [vals[i], vals[j], vals[k]];
                let d = (t[0] - t[1]).norm() + (t[0] - t[2]).norm() + (t[1] - t[2]).norm();
                let c = (t[0] + t[1] + t[2]) / 3.0;
                let score = d + near.map_or(0.0, |z| (c - z).norm());
                if score < best.0 {
                    best = (score, t);
                }
            }
        }
    }
    best.1
}

fn centered_invariants(t: &[C64; 3]) -> (C64, C64, C64) {
    let c = (t[0] + t[1] + t[2]) / 3.0;
    let m = [t[0] - c, t[1] - c, t[2] - c];
    (c, m[0] * m[1] + m[0] * m[2] + m[1] * m[2], m[0] * m[1] * m[2])
}

/// Newton search for (φ, U) where three eigenvalues coalesce: the centred
/// elementary symmetric functions e2, e3 of the tightest eigenvalue triple
/// vanish. Only their real parts are driven to zero; the spectrum's
/// conjugation symmetry keeps the imaginary parts zero on the real-U plane.
pub fn locate_ep3(ham: &dyn ParametricHamiltonian, guess: (f64, f64)) -> Result<Ep3Location> {
    if ham.dim() < 3 {
        return Err(Error::DimensionMismatch {
            expected: 3,
            got: ham.dim(),
        });
    }
    let eval = |p: (f64, f64), near: Option<C64>| -> Result<([C64; 3], C64, [f64; 2])> {
        let vals = linalg::eigenvalues(ham.matrix(p.0, C64::new(p.1, 0.0)).as_ref())?;
        let t = tightest_triple(&vals, near);
        let (c, e2, e3) = centered_invariants(&t);
        Ok((t, c, [e2.re, e3.re]))
    };
    let (mut p, mut iters) = (guess, 0);
    let (_, mut center, mut fval) = eval(p, None)?;
    let h = 1e-7;
    for it in 0..60 {
        iters = it + 1;
        let (_, _, fp) = eval((p.0 + h, p.1), Some(center))?;
        let (_, _, fu) = eval((p.0, p.1 + h), Some(center))?;
        let j = [
            [(fp[0] - fval[0]) / h, (fu[0] - fval[0]) / h],
            [(fp[1] - fval[1]) / h, (fu[1] - fval[1]) / h],
        ];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det.abs() < 1e-300 {
            break;
        }
        let dphi = (j[1][1] * fval[0] - j[0][1] * fval[1]) / det;
        let du = (-j[1][0] * fval[0] + j[0][0] * fval[1]) / det;
        let mut lam = 1.0;
        let norm0 = fval[0].hypot(fval[1]);
        let mut next = None;
        while lam > 1e-4 {
            let q = (p.0 - lam * dphi, p.1 - lam * du);
            let (_, c, fq) = eval(q, Some(center))?;
            if fq[0].hypot(fq[1]) < norm0 {
                next = Some((q, c, fq));
                break;
            }
            lam *= 0.5;
        }
        let Some((q, c, fq)) = next else { break };
        let step = (q.0 - p.0).hypot(q.1 - p.1);
        p = q;
        center = c;
        fval = fq;
        if step < 1e-13 {
            break;
        }
    }
    let (t, _, _) = eval(p, Some(center))?;
    let diameter = (0..3)
        .flat_map(|i| (i + 1..3).map(move |j| (i, j)))
        .map(|(i, j)| (t[i] - t[j]).norm())
        .fold(0.0, f64::max);
    Ok(Ep3Location {
        phi: p.0,
        u: p.1,
        triple: t,
        diameter,
        iterations: iters,
    })
}

/// Outcome of tracing two lines towards a common endpoint.
#[derive(Debug, Clone)]
pub struct AnnihilationResult {
    pub line_a: EPLine,
    pub line_b: EPLine,
    pub endpoint: Option<Ep3Location>,
    /// Jordan analysis of the full Hamiltonian at the endpoint.
    pub jordan: Option<JordanReport>,
}

/// Traces both lines; when their ends meet within `merge_tol` (|Δφ|+|ΔU|)
/// the common endpoint is located as an EP3 and, if the full Hamiltonian
/// there has a chain of length 3 at the triple, both ends are tagged
/// ANNIHILATION.
pub fn trace_annihilation(
    ham: &dyn ParametricHamiltonian,
    start_a: ((f64, f64), (f64, f64)),
    start_b: ((f64, f64), (f64, f64)),
    opts: &TraceOptions,
    merge_tol: f64,
) -> Result<AnnihilationResult> {
    let mut line_a = trace_line(ham, start_a.0, start_a.1, opts)?;
    let mut line_b = trace_line(ham, start_b.0, start_b.1, opts)?;
    let (Some(ea), Some(eb)) = (line_a.last().copied(), line_b.last().copied()) else {
        return Ok(AnnihilationResult {
            line_a,
            line_b,
            endpoint: None,
            jordan: None,
        });
    };
    let gap = (ea.phi - eb.phi).abs() + (ea.u - eb.u).abs();
    if gap > merge_tol {
        return Ok(AnnihilationResult {
            line_a,
            line_b,
            endpoint: None,
            jordan: None,
        });
    }
    let guess = (0.5 * (ea.phi + eb.phi), 0.5 * (ea.u + eb.u));
    let ep3 = locate_ep3(ham, guess)?;
    let near = |e: &LinePoint| (e.phi - ep3.phi).abs() + (e.u - ep3.u).abs() <= merge_tol;
    let h = ham.matrix(ep3.phi, C64::new(ep3.u, 0.0));
    let jordan = ep3_jordan(&h, &ep3);
    let order3 = jordan.as_ref().is_some_and(|j| j.max_chain_length() >= 3);
    if order3 && near(&ea) && near(&eb) {
        line_a.end = EndpointTag::Annihilation;
        line_b.end = EndpointTag::Annihilation;
    }
    Ok(AnnihilationResult {
        line_a,
        line_b,
        endpoint: Some(ep3),
        jordan,
    })
}

/// Jordan analysis at a located EP3 with the cluster tolerance opened to
/// the residual triple splitting.
pub fn ep3_jordan(h: &CMat, ep3: &Ep3Location) -> Option<JordanReport> {
    let base = default_cluster_tol(h.as_ref());
    [10.0, 30.0, 100.0]
        .iter()
        .find_map(|&f| jordan_analysis(h.as_ref(), base.max(f * ep3.diameter), DEFAULT_RANK_TOL).ok())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dip {
    pub theta: f64,
    pub min_angle: f64,
}

#[derive(Debug, Clone)]
pub struct CircleProbe {
    pub thetas: Vec<f64>,
    pub angles: Vec<f64>,
    pub dips: Vec<Dip>,
}

/// Min angle on the ellipse (φ_c + r_φ cos θ, U_c + r_U sin θ). Sampled
/// cyclic local minima are refined by golden section; a refined minimum
/// below the sweep threshold counts as a line crossing.
pub fn circle_probe(
    ham: &dyn ParametricHamiltonian,
    center: (f64, f64),
    radii: (f64, f64),
    samples: usize,
    axis: UAxis,
) -> Result<CircleProbe> {
    if radii.0 <= 0.0 || radii.1 <= 0.0 || samples < 3 {
        return Err(Error::InvalidSpec("circle probe needs positive radii and >= 3 samples".into()));
    }
    require_pairs(ham)?;
    let at = |t: f64| {
        angle_or_nan(
            ham,
            center.0 + radii.0 * t.cos(),
            axis.to_complex(center.1 + radii.1 * t.sin()),
        )
    };
    let thetas: Vec<f64> = (0..samples).map(|i| TAU * i as f64 / samples as f64).collect();
    let angles: Vec<f64> = thetas.par_iter().map(|&t| at(t)).collect();
    let dt = TAU / samples as f64;
    let mut dips = Vec::new();
    for i in 0..samples {
        let prev = angles[(i + samples - 1) % samples];
        let next = angles[(i + 1) % samples];
        if angles[i] <= prev && angles[i] < next {
            let (t, a) = golden_min(&at, thetas[i] - dt, thetas[i] + dt, 1e-14);
            if a < SWEEP_THRESHOLD {
                dips.push(Dip {
                    theta: t.rem_euclid(TAU),
                    min_angle: a,
                });
            }
        }
    }
    Ok(CircleProbe {
        thetas,
        angles,
        dips,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereDip {
    pub nu: f64,
    pub eta: f64,
    pub min_angle: f64,
    pub phi: f64,
    pub u: C64,
}

#[derive(Debug, Clone)]
pub struct SphereProbe {
    pub nus: Vec<f64>,
    pub etas: Vec<f64>,
    /// angles[iη][iν].
    pub angles: Vec<Vec<f64>>,
    pub dips: Vec<SphereDip>,
}

/// Point on the probe sphere: (φ, Re U, Im U) =
/// (r_φ cos ν sin η + φ_c, r_U sin ν sin η + U_c, r_U cos η).
pub fn sphere_point(center: (f64, f64), radii: (f64, f64), nu: f64, eta: f64) -> (f64, C64) {
    (
        center.0 + radii.0 * nu.cos() * eta.sin(),
        C64::new(center.1 + radii.1 * nu.sin() * eta.sin(), radii.1 * eta.cos()),
    )
}

/// Nelder–Mead on a 2-vector.
pub fn nelder_mead(f: &dyn Fn([f64; 2]) -> f64, x0: [f64; 2], scale: [f64; 2], iters: usize) -> ([f64; 2], f64) {
    let mut s: Vec<([f64; 2], f64)> = [x0, [x0[0] + scale[0], x0[1]], [x0[0], x0[1] + scale[1]]]
        .into_iter()
        .map(|x| (x, f(x)))
        .collect();
    let lerp = |a: [f64; 2], b: [f64; 2], t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
    for _ in 0..iters {
        s.sort_by(|a, b| a.1.total_cmp(&b.1));
        let c = [(s[0].0[0] + s[1].0[0]) / 2.0, (s[0].0[1] + s[1].0[1]) / 2.0];
        let xr = lerp(c, s[2].0, -1.0);
        let fr = f(xr);
        if fr < s[0].1 {
            let xe = lerp(c, s[2].0, -2.0);
            let fe = f(xe);
            s[2] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < s[1].1 {
            s[2] = (xr, fr);
        } else {
            let xc = lerp(c, s[2].0, 0.5);
            let fc = f(xc);
            if fc < s[2].1 {
                s[2] = (xc, fc);
            } else {
                let best = s[0].0;
                for v in s.iter_mut().skip(1) {
                    v.0 = lerp(best, v.0, 0.5);
                    v.1 = f(v.0);
                }
            }
        }
        let spread = (s[1].0[0] - s[0].0[0]).abs() + (s[1].0[1] - s[0].0[1]).abs()
            + (s[2].0[0] - s[0].0[0]).abs()
            + (s[2].0[1] - s[0].0[1]).abs();
        if spread < 1e-15 {
            break;
        }
    }
    s.sort_by(|a, b| a.1.total_cmp(&b.1));
    s[0]
}

/// Min-angle field on the (ν, η) sphere around `center`, with dip
/// extraction: grid local minima well below the field median are refined
/// by Nelder–Mead (restarted from the incumbent) and kept when the refined
/// angle is below the sweep threshold; near-duplicates are merged.
pub fn sphere_probe(
    ham: &dyn ParametricHamiltonian,
    center: (f64, f64),
    radii: (f64, f64),
    n_nu: usize,
    n_eta: usize,
) -> Result<SphereProbe> {
    if radii.0 <= 0.0 || radii.1 <= 0.0 || n_nu < 3 || n_eta < 3 {
        return Err(Error::InvalidSpec("sphere probe needs positive radii and >= 3 samples per axis".into()));
    }
    require_pairs(ham)?;
    let nus: Vec<f64> = (0..n_nu).map(|i| TAU * i as f64 / n_nu as f64).collect();
    let etas: Vec<f64> = (0..n_eta).map(|i| PI * i as f64 / (n_eta - 1) as f64).collect();
    let at = |nu: f64, eta: f64| {
        let (phi, u) = sphere_point(center, radii, nu, eta);
        angle_or_nan(ham, phi, u)
    };
    let flat: Vec<f64> = (0..n_nu * n_eta)
        .into_par_iter()
        .map(|idx| at(nus[idx % n_nu], etas[idx / n_nu]))
        .collect();
    let angles: Vec<Vec<f64>> = flat.chunks(n_nu).map(|c| c.to_vec()).collect();
    let mut sorted: Vec<f64> = flat.iter().copied().filter(|x| x.is_finite()).collect();
    sorted.sort_by(f64::total_cmp);
    let median = sorted.get(sorted.len() / 2).copied().unwrap_or(0.0);
    // Only a cheap cut: every candidate must still refine below the sweep
    // threshold. Shallow grid minima (~median/2) can be true crossings.
    let prefilter = median;
    let mut cands = Vec::new();
    for ie in 1..n_eta - 1 {
        for iv in 0..n_nu {
            let v = angles[ie][iv];
            if v >= prefilter {
                continue;
            }
            let mut is_min = true;
            for de in [-1i64, 0, 1] {
                for dv in [-1i64, 0, 1] {
                    if de == 0 && dv == 0 {
                        continue;
                    }
                    let e = (ie as i64 + de) as usize;
                    let w = ((iv as i64 + dv).rem_euclid(n_nu as i64)) as usize;
                    if angles[e][w] < v {
                        is_min = false;
                    }
                }
            }
            if is_min {
                cands.push((nus[iv], etas[ie]));
            }
        }
    }
    let dnu = TAU / n_nu as f64;
    let deta = PI / (n_eta - 1) as f64;
    let obj = |x: [f64; 2]| at(x[0], x[1]);
    let mut dips: Vec<SphereDip> = Vec::new();
    for (nu0, eta0) in cands {
        let mut x = [nu0, eta0];
        let mut fx = obj(x);
        let mut sc = [dnu * 0.5, deta * 0.5];
        for _ in 0..6 {
            let (nx, nf) = nelder_mead(&obj, x, sc, 400);
            if nf < fx {
                x = nx;
                fx = nf;
            }
            if fx < REFINED_THRESHOLD {
                break;
            }
            sc = [sc[0] * 0.1, sc[1] * 0.1];
        }
        if fx < SWEEP_THRESHOLD {
            let nu = x[0].rem_euclid(TAU);
            let dup = dips.iter().any(|d| {
                let dn = (d.nu - nu).abs();
                dn.min(TAU - dn) < 2.0 * dnu && (d.eta - x[1]).abs() < 2.0 * deta
            });
            if !dup {
                let (phi, u) = sphere_point(center, radii, nu, x[1]);
                dips.push(SphereDip {
                    nu,
                    eta: x[1],
                    min_angle: fx,
                    phi,
                    u,
                });
            }
        }
    }
    Ok(SphereProbe {
        nus,
        etas,
        angles,
        dips,
    })
}

/// Per-row minimum of a sweep refined by golden section in φ between the
/// neighbours of the deepest sample. Returns (φ, angle) per row.
pub fn refined_row_minima(sweep: &SweepResult, ham: &dyn ParametricHamiltonian) -> Vec<(f64, f64)> {
    let g = &sweep.grid;
    (0..g.u.steps)
        .into_par_iter()
        .map(|iu| {
            let row = sweep.row(iu);
            let (ip, _) = row
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.min_angle.total_cmp(&b.1.min_angle))
                .expect("non-empty row");
            let u = g.axis.to_complex(g.u.value(iu));
            let lo = g.phi.value(ip.saturating_sub(1));
            let hi = g.phi.value((ip + 1).min(g.phi.steps - 1));
            let f = |phi: f64| angle_or_nan(ham, phi, u);
            golden_min(&f, lo, hi, 1e-13)
        })
        .collect()
}

/// A connected valley: one φ per row, consecutive rows within `max_jump`
/// in φ, every refined row minimum below `threshold`. Rows are searched
/// for all refined local minima in a φ window around the previous row's
/// pick.
pub fn valley_path(
    ham: &dyn ParametricHamiltonian,
    grid: &GridSpec,
    start_phi: f64,
    window: f64,
    threshold: f64,
) -> Result<Vec<(f64, f64, f64)>> {
    grid.validate()?;
    let mut out = Vec::with_capacity(grid.u.steps);
    let mut phi = start_phi;
    for iu in 0..grid.u.steps {
        let u = grid.axis.to_complex(grid.u.value(iu));
        let f = |p: f64| angle_or_nan(ham, p, u);
        let minima = local_minima_1d(&f, phi - window, phi + window, 41, f64::INFINITY, 1e-13);
        let Some(&(p, a)) = minima
            .iter()
            .filter(|m| m.1 < threshold)
            .min_by(|x, y| (x.0 - phi).abs().total_cmp(&(y.0 - phi).abs()))
        else {
            return Ok(out);
        };
        out.push((p, grid.u.value(iu), a));
        phi = p;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bloch::{solve_exceptional_twists, Band};
    use crate::perturb::{predict_u_inherited, ModeLabel, Realness};
    use proptest::prelude::*;

    fn mh(l: usize, n: usize, sector: Option<usize>) -> MomentumHamiltonian {
        MomentumHamiltonian::new(&ModelSpec::new(l, 0.7).unwrap(), n, sector).unwrap()
    }

    #[test]
    fn grid_validation() {
        let bad = GridSpec {
            phi: Range::new(0.0, 1.0, 1),
            u: Range::new(0.0, 1.0, 3),
            axis: UAxis::Real,
            sector: None,
        };
        assert!(matches!(sweep(&bad, &mh(3, 2, None)), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn empty_sector_rejected() {
        let ham = MomentumHamiltonian::new(&ModelSpec::new(2, 0.7).unwrap(), 4, Some(1)).unwrap();
        let grid = GridSpec {
            phi: Range::new(0.0, 1.0, 2),
            u: Range::new(0.0, 1.0, 2),
            axis: UAxis::Real,
            sector: Some(1),
        };
        assert!(matches!(sweep(&grid, &ham), Err(Error::DimensionMismatch { expected: 2, .. })));
    }

    #[test]
    fn sweep_is_independent_of_worker_count() {
        let ham = mh(3, 2, None);
        let grid = GridSpec {
            phi: Range::new(0.1, 6.0, 9),
            u: Range::new(-1.0, 1.0, 7),
            axis: UAxis::Real,
            sector: None,
        };
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| sweep(&grid, &ham)).unwrap();
        let b = four.install(|| sweep(&grid, &ham)).unwrap();
        for (x, y) in a.cells.iter().zip(&b.cells) {
            assert_eq!(x.min_angle.to_bits(), y.min_angle.to_bits());
            assert!((0.0..=PI / 2.0 + 1e-12).contains(&x.min_angle));
        }
    }

    #[test]
    fn twist_periodicity_glues_spectrum() {
        let ham = mh(4, 2, None);
        let sorted = |phi: f64| {
            let mut v = linalg::eigenvalues(ham.matrix(phi, C64::new(0.4, 0.0)).as_ref()).unwrap();
            v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
            v
        };
        let (a, b) = (sorted(0.0), sorted(TAU));
        let err = linalg::match_spectra(&a, &b);
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn sector_angles_lower_bound_full() {
        let l = 3;
        let full = mh(l, 2, None);
        let secs: Vec<_> = (0..l).map(|k| mh(l, 2, Some(k))).collect();
        for (phi, u) in [(0.7, 0.3), (2.0, -0.5), (5.0, 0.9)] {
            let u = C64::new(u, 0.0);
            let f = angle_at(&full, phi, u).unwrap().min_angle;
            let s = secs.iter().map(|h| angle_at(h, phi, u).unwrap().min_angle).fold(f64::INFINITY, f64::min);
            assert!(f <= s + 1e-10);
        }
    }

    #[test]
    fn refine_converges_to_single_particle_ep() {
        let base = ModelSpec::new(3, 0.7).unwrap();
        let tw = solve_exceptional_twists(&base).unwrap()[0];
        let ham = MomentumHamiltonian::new(&base, 2, None).unwrap();
        let r = refine_at_phi(&ham, tw.phi_e, UAxis::Real, -0.05, 0.05).unwrap();
        assert_eq!(r.status, RefineStatus::Converged);
        assert!(r.u.abs() < 1e-6, "{}", r.u);
        let r = refine_ep(&ham, (tw.phi_e + 0.003, 0.0), UAxis::Real, 0.01, 1e-9).unwrap();
        assert_eq!(r.status, RefineStatus::Converged);
        assert!((r.phi - tw.phi_e).abs() < 1e-8, "{}", r.phi - tw.phi_e);
        assert!(r.chain_length() >= 2);
    }

    #[test]
    fn inherited_seed_refines_near_prediction() {
        let base = ModelSpec::new(6, 0.7).unwrap();
        let tw = solve_exceptional_twists(&base).unwrap()[1];
        let phi = tw.phi_e + 0.03;
        let m = base.with_phi(phi);
        let ham = MomentumHamiltonian::new(&base, 2, None).unwrap();
        let mut checked = 0;
        for q in (0..6).filter(|&q| q != tw.k_e) {
            for band in [Band::Plus, Band::Minus] {
                let p = predict_u_inherited(&tw, ModeLabel::new(q, band), &m).unwrap();
                if p.realness != Realness::Real || p.u.re.abs() > 0.2 || p.u.re.abs() < 1e-3 {
                    continue;
                }
                let w = 0.2 * p.u.re.abs();
                let r = refine_at_phi(&ham, phi, UAxis::Real, p.u.re - w, p.u.re + w).unwrap();
                assert_eq!(r.status, RefineStatus::Converged);
                assert!(((r.u - p.u.re) / p.u.re).abs() < 0.1, "{} vs {}", r.u, p.u.re);
                checked += 1;
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn circle_dips() {
        let base = ModelSpec::new(3, 0.7).unwrap();
        let tw = solve_exceptional_twists(&base).unwrap()[0];
        let ham = MomentumHamiltonian::new(&base, 2, None).unwrap();
        // a small circle around the U = 0 single-particle EP: the inherited
        // fan passes through it, so each crossing line gives two dips
        let c = circle_probe(&ham, (tw.phi_e, 0.0), (0.01, 0.01), 360, UAxis::Real).unwrap();
        assert!(!c.dips.is_empty() && c.dips.len().is_multiple_of(2), "{:?}", c.dips);
        // far from any line
        let e = circle_probe(&ham, (3.0, 1.5), (0.01, 0.01), 180, UAxis::Real).unwrap();
        let lowest = e.angles.iter().copied().fold(f64::INFINITY, f64::min);
        if e.dips.is_empty() {
            assert!(lowest > 1e-3);
        }
    }

    #[test]
    fn golden_finds_cusp() {
        let f = |x: f64| (x - 0.3).abs().sqrt();
        let (x, v) = golden_min(&f, 0.0, 1.0, 1e-14);
        assert!((x - 0.3).abs() < 1e-12 && v < 1e-6);
    }

    #[test]
    fn nelder_mead_finds_cusp() {
        let f = |x: [f64; 2]| ((x[0] - 0.2).powi(2) + (x[1] + 0.1).powi(2)).sqrt().sqrt();
        let (x, v) = nelder_mead(&f, [0.0, 0.0], [0.05, 0.05], 800);
        assert!(v < 1e-6, "{x:?} {v}");
    }

    #[test]
    fn sphere_equator_matches_circle() {
        let ham = mh(3, 2, Some(0));
        let (c, r) = ((1.0, 0.2), (0.05, 0.05));
        for nu in [0.0, 1.0, 2.5] {
            let (phi, u) = sphere_point(c, r, nu, PI / 2.0);
            assert!(u.im.abs() < 1e-15);
            let a = angle_at(&ham, phi, u).unwrap().min_angle;
            let b = angle_at(&ham, c.0 + r.0 * nu.cos(), C64::new(c.1 + r.1 * nu.sin(), 0.0)).unwrap().min_angle;
            assert!((a - b).abs() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn sweep_angles_in_range(phi in 0.0..TAU, u in -1.0..1.0f64) {
            let ham = mh(3, 2, None);
            let a = angle_at(&ham, phi, C64::new(u, 0.0)).unwrap().min_angle;
            prop_assert!((0.0..=PI / 2.0 + 1e-12).contains(&a));
        }
    }
}
