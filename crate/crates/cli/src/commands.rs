//! The subcommands proper. Each reads a validated config and writes its
//! tables (and heatmaps) through the output set.

use nhep::bloch::{solve_exceptional_twists, Band, ModelSpec};
use nhep::perturb::{
    inherited_branches, predict_u_emergent, three_fermion_branches, EPPrediction, EffectiveKind,
    EmergentPrediction, PredictionSource,
};
use nhep::scan::{
    circle_probe, hamiltonian_for, refine_ep, sphere_point, sphere_probe, sweep, trace_annihilation, trace_line,
    EPLine, GridSpec, ParametricHamiltonian, RefineStatus, SweepResult, TraceOptions, UAxis,
};
use nhep::Error;
use rayon::prelude::*;

use crate::config::{Command, Format, PredictFamily, RunConfig, TraceBlock};
use crate::output::{num, render_pgm, render_svg, Field, OutputSet};
use crate::CliError;

pub fn execute(cmd: Command, cfg: &RunConfig, set: &mut OutputSet) -> Result<(), CliError> {
    match cmd {
        Command::Sweep => run_sweep(cfg, set),
        Command::ProbeCircle => run_circle(cfg, set),
        Command::ProbeSphere => run_sphere(cfg, set),
        Command::Trace => run_trace(cfg, set),
        Command::Predict => run_predict(cfg, set),
        Command::Disorder => run_disorder(cfg, set),
    }
}

fn ham(cfg: &RunConfig, model: &ModelSpec) -> Result<Box<dyn ParametricHamiltonian>, CliError> {
    Ok(hamiltonian_for(model, cfg.run.n, cfg.run.sector, cfg.model.placement.into())?)
}

fn u_cols(u: nhep::C64) -> [String; 2] {
    [num(u.re), num(u.im)]
}

/// Writes `stem.svg` or `stem.pgm` when the format asks for one.
fn heatmap(set: &mut OutputSet, format: Format, stem: &str, field: &Field, title: &str) -> Result<(), CliError> {
    match format {
        Format::Csv => Ok(()),
        Format::CsvSvg => set.write_bytes(&format!("{stem}.svg"), render_svg(field, title).as_bytes()),
        Format::CsvPgm => set.write_bytes(&format!("{stem}.pgm"), &render_pgm(field)),
    }
}

const SWEEP_HEADER: [&str; 6] = ["phi", "u_re", "u_im", "min_angle", "argmin_i", "argmin_j"];

fn sweep_rows(res: &SweepResult) -> Vec<Vec<String>> {
    res.cells
        .iter()
        .enumerate()
        .map(|(idx, c)| {
            let (phi, u) = res.grid.point(idx);
            let [re, im] = u_cols(u);
            vec![
                num(phi),
                re,
                im,
                num(c.min_angle),
                c.argmin.0.to_string(),
                c.argmin.1.to_string(),
            ]
        })
        .collect()
}

fn write_sweep(set: &mut OutputSet, format: Format, stem: &str, res: &SweepResult) -> Result<(), CliError> {
    set.write_csv(&format!("{stem}.csv"), &SWEEP_HEADER, &sweep_rows(res))?;
    let values: Vec<f64> = res.cells.iter().map(|c| c.min_angle).collect();
    write_field(set, format, stem, &res.grid, &values)
}

fn write_field(set: &mut OutputSet, format: Format, stem: &str, grid: &GridSpec, values: &[f64]) -> Result<(), CliError> {
    let field = Field {
        width: grid.phi.steps,
        height: grid.u.steps,
        values,
    };
    heatmap(set, format, stem, &field, stem)
}

fn run_sweep(cfg: &RunConfig, set: &mut OutputSet) -> Result<(), CliError> {
    let model = cfg.model_spec()?;
    let grid = cfg.grid()?;
    let res = sweep(&grid, ham(cfg, &model)?.as_ref())?;
    report_failed_cells(&res);
    write_sweep(set, cfg.output.format, "sweep", &res)
}

fn report_failed_cells(res: &SweepResult) {
    let failed = res.cells.iter().filter(|c| c.error.is_some()).count();
    if failed > 0 {
        eprintln!("warning: {failed} cells failed to diagonalize and are written as NaN");
    }
}

fn run_circle(cfg: &RunConfig, set: &mut OutputSet) -> Result<(), CliError> {
    let c = cfg.run.circle.expect("validated");
    let model = cfg.model_spec()?;
    let axis: UAxis = cfg.run.axis.into();
    let center = (c.center[0], c.center[1]);
    let radii = (c.radii[0], c.radii[1]);
    let probe = circle_probe(ham(cfg, &model)?.as_ref(), center, radii, c.samples, axis)?;
    let point = |t: f64| (center.0 + radii.0 * t.cos(), axis.to_complex(center.1 + radii.1 * t.sin()));
    let row = |t: f64, a: f64| {
        let (phi, u) = point(t);
        let [re, im] = u_cols(u);
        vec![num(t), num(phi), re, im, num(a)]
    };
    let header = ["theta", "phi", "u_re", "u_im", "min_angle"];
    let rows: Vec<_> = probe.thetas.iter().zip(&probe.angles).map(|(&t, &a)| row(t, a)).collect();
    set.write_csv("circle.csv", &header, &rows)?;
    let dips: Vec<_> = probe.dips.iter().map(|d| row(d.theta, d.min_angle)).collect();
    set.write_csv("circle_dips.csv", &header, &dips)
}

fn run_sphere(cfg: &RunConfig, set: &mut OutputSet) -> Result<(), CliError> {
    let s = cfg.run.sphere.expect("validated");
    let model = cfg.model_spec()?;
    let center = (s.center[0], s.center[1]);
    let radii = (s.radii[0], s.radii[1]);
    let probe = sphere_probe(ham(cfg, &model)?.as_ref(), center, radii, s.n_nu, s.n_eta)?;
    let header = ["nu", "eta", "phi", "u_re", "u_im", "min_angle"];
    let row = |nu: f64, eta: f64, phi: f64, u: nhep::C64, a: f64| {
        let [re, im] = u_cols(u);
        vec![num(nu), num(eta), num(phi), re, im, num(a)]
    };
    let mut rows = Vec::with_capacity(s.n_nu * s.n_eta);
    for (ie, &eta) in probe.etas.iter().enumerate() {
        for (iv, &nu) in probe.nus.iter().enumerate() {
            let (phi, u) = sphere_point(center, radii, nu, eta);
            rows.push(row(nu, eta, phi, u, probe.angles[ie][iv]));
        }
    }
    set.write_csv("sphere.csv", &header, &rows)?;
    let dips: Vec<_> = probe.dips.iter().map(|d| row(d.nu, d.eta, d.phi, d.u, d.min_angle)).collect();
    set.write_csv("sphere_dips.csv", &header, &dips)?;
    let values: Vec<f64> = probe.angles.concat();
    let field = Field {
        width: s.n_nu,
        height: s.n_eta,
        values: &values,
    };
    heatmap(set, cfg.output.format, "sphere", &field, "sphere")
}

fn trace_options(t: &TraceBlock, axis: UAxis) -> TraceOptions {
    TraceOptions {
        step: t.step,
        min_step: t.min_step,
        max_points: t.max_points,
        phi_bounds: (t.phi_bounds[0], t.phi_bounds[1]),
        u_bounds: (t.u_bounds[0], t.u_bounds[1]),
        axis,
    }
}

fn write_line(set: &mut OutputSet, name: &str, line: &EPLine) -> Result<(), CliError> {
    let last = line.points.len().saturating_sub(1);
    let rows: Vec<_> = line
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let [re, im] = u_cols(line.axis.to_complex(p.u));
            let tag = if i == last { line.end.label() } else { "" };
            vec![i.to_string(), num(p.phi), re, im, num(p.min_angle), tag.to_string()]
        })
        .collect();
    set.write_csv(
        &format!("trace_{name}.csv"),
        &["idx", "phi", "u_re", "u_im", "min_angle", "endpoint_tag"],
        &rows,
    )
}

fn run_trace(cfg: &RunConfig, set: &mut OutputSet) -> Result<(), CliError> {
    let t = cfg.run.trace.as_ref().expect("validated");
    let model = cfg.model_spec()?;
    let h = ham(cfg, &model)?;
    let axis: UAxis = cfg.run.axis.into();
    let opts = trace_options(t, axis);
    let seeds: Vec<((f64, f64), (f64, f64))> = t
        .lines
        .iter()
        .map(|line| {
            let raw = (line.start[0], line.start[1]);
            let start = if t.refine_start {
                let r = refine_ep(h.as_ref(), raw, axis, t.step, t.step)?;
                if r.status == RefineStatus::Converged {
                    (r.phi, r.u)
                } else {
                    eprintln!("warning: seed of line {} did not refine onto an EP", line.name);
                    raw
                }
            } else {
                raw
            };
            Ok((start, (line.direction[0], line.direction[1])))
        })
        .collect::<Result<_, Error>>()?;
    match t.merge_tol {
        Some(tol) => {
            let res = trace_annihilation(h.as_ref(), seeds[0], seeds[1], &opts, tol)?;
            write_line(set, &t.lines[0].name, &res.line_a)?;
            write_line(set, &t.lines[1].name, &res.line_b)?;
            let rows: Vec<_> = res
                .endpoint
                .iter()
                .map(|ep| {
                    let chain = res.jordan.as_ref().map_or(0, |j| j.max_chain_length());
                    vec![num(ep.phi), num(ep.u), num(ep.diameter), chain.to_string()]
                })
                .collect();
            set.write_csv("trace_endpoint.csv", &["phi", "u", "diameter", "max_chain_length"], &rows)
        }
        None => {
            let lines = seeds
                .par_iter()
                .map(|&(start, dir)| trace_line(h.as_ref(), start, dir, &opts))
                .collect::<Result<Vec<_>, Error>>()?;
            for (seed, line) in t.lines.iter().zip(&lines) {
                write_line(set, &seed.name, line)?;
            }
            Ok(())
        }
    }
}

/// Which emergent kind applies to the pair (k, q) on a chain of length L.
fn emergent_kind(l: usize, k: usize, q: usize) -> EffectiveKind {
    match (l.is_multiple_of(2), (k + q).is_multiple_of(2)) {
        (false, _) => EffectiveKind::II3,
        (true, false) => EffectiveKind::II2,
        (true, true) => EffectiveKind::II4,
    }
}

fn source_label(p: &EPPrediction) -> String {
    let body = match p.source {
        PredictionSource::Inherited { k_e, q, family } => format!("inherited/{}/k_e={k_e}/{q}", family.label()),
        PredictionSource::Emergent { kind, k, q, xi } => format!("emergent/{kind:?}/k={k}/q={q}/xi={}", xi.symbol()),
        PredictionSource::ThreeFermion { k_e, k, q, family } => {
            format!("three_fermion/{}/k_e={k_e}/{k}/{q}", family.label())
        }
    };
    format!("{body}/{}", p.branch_id())
}

fn predictions(cfg: &RunConfig) -> Result<Vec<EPPrediction>, CliError> {
    let p = cfg.run.predict.as_ref().expect("validated");
    let base = cfg.model_spec()?;
    let l = base.l();
    let range: nhep::scan::Range = p.phi.into();
    let in_range = |phi: f64| phi >= range.lo.min(range.hi) && phi <= range.lo.max(range.hi);
    match p.family {
        PredictFamily::Inherited | PredictFamily::ThreeFermion => {
            let mut out = Vec::new();
            for tw in solve_exceptional_twists(&base)?.into_iter().filter(|t| in_range(t.phi_e)) {
                let model = tw.model(&base);
                if p.family == PredictFamily::Inherited {
                    out.extend(inherited_branches(&tw, &model)?);
                } else {
                    out.extend(three_fermion_branches(&tw, &model)?);
                }
            }
            Ok(out)
        }
        PredictFamily::Emergent => {
            let xis: Vec<Band> = match p.xi {
                Some(x) => vec![Band::from_sign(x as f64)],
                None => vec![Band::Plus, Band::Minus],
            };
            let mut pairs = Vec::new();
            for k in 0..l {
                for q in 0..l {
                    if k == q || p.k.is_some_and(|x| x != k) || p.q.is_some_and(|x| x != q) {
                        continue;
                    }
                    let kind = emergent_kind(l, k, q);
                    if p.kind.is_some_and(|want| EffectiveKind::from(want) != kind) {
                        continue;
                    }
                    for &xi in &xis {
                        pairs.push((kind, k, q, xi));
                    }
                }
            }
            let per_phi = range
                .values()
                .collect::<Vec<_>>()
                .into_par_iter()
                .map(|phi| {
                    let model = base.with_phi(phi);
                    let mut out = Vec::new();
                    for &(kind, k, q, xi) in &pairs {
                        match predict_u_emergent(kind, k, q, xi, &model) {
                            Ok(EmergentPrediction::Branches(b)) => out.extend(b),
                            Ok(EmergentPrediction::ExactlyDegenerate) => {}
                            // a vanishing coefficient leaves the formula undefined at this twist only
                            Err(Error::DivisionByZero(_) | Error::DefectiveInput(_) | Error::DefectiveCoefficient(_)) => {}
                            Err(e) => return Err(e),
                        }
                    }
                    Ok(out)
                })
                .collect::<Result<Vec<_>, Error>>()?;
            Ok(per_phi.concat())
        }
    }
}

fn run_predict(cfg: &RunConfig, set: &mut OutputSet) -> Result<(), CliError> {
    let rows: Vec<_> = predictions(cfg)?
        .iter()
        .map(|p| {
            let [re, im] = u_cols(p.u);
            vec![
                num(p.phi),
                re,
                im,
                p.realness.label().to_string(),
                source_label(p),
                p.involved_states.join(" "),
            ]
        })
        .collect();
    set.write_csv(
        "predict.csv",
        &["phi", "u_re", "u_im", "realness", "branch_id", "state_labels"],
        &rows,
    )
}

/// Seed of realization `r`; realization 0 uses the configured seed.
pub fn realization_seed(seed: u64, r: usize) -> u64 {
    seed.wrapping_add(r as u64)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.retain(|x| !x.is_nan());
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn run_disorder(cfg: &RunConfig, set: &mut OutputSet) -> Result<(), CliError> {
    let d = cfg.run.disorder.as_ref().expect("validated");
    let grid = cfg.grid()?;
    let base = ModelSpec::new(cfg.model.l, cfg.model.m)?;
    let mut summary = Vec::with_capacity(d.sigmas.len());
    for (is, &sigma) in d.sigmas.iter().enumerate() {
        let mut fields: Vec<Vec<f64>> = Vec::with_capacity(d.realizations);
        for r in 0..d.realizations {
            let model = base.with_disorder(sigma, realization_seed(cfg.model.seed, r))?;
            let res = sweep(&grid, ham(cfg, &model)?.as_ref())?;
            report_failed_cells(&res);
            let stem = format!("disorder_s{is}_r{r}");
            set.write_csv(&format!("{stem}.csv"), &SWEEP_HEADER, &sweep_rows(&res))?;
            fields.push(res.cells.iter().map(|c| c.min_angle).collect());
        }
        let med: Vec<f64> = (0..grid.len())
            .map(|i| median(fields.iter().map(|f| f[i]).collect()))
            .collect();
        let rows: Vec<_> = med
            .iter()
            .enumerate()
            .map(|(idx, &a)| {
                let (phi, u) = grid.point(idx);
                let [re, im] = u_cols(u);
                vec![num(phi), re, im, num(a)]
            })
            .collect();
        let stem = format!("disorder_s{is}_median");
        set.write_csv(&format!("{stem}.csv"), &["phi", "u_re", "u_im", "median_min_angle"], &rows)?;
        write_field(set, cfg.output.format, &stem, &grid, &med)?;
        let floor = med.iter().copied().filter(|a| !a.is_nan()).fold(f64::INFINITY, f64::min);
        summary.push(vec![is.to_string(), num(sigma), d.realizations.to_string(), num(floor)]);
    }
    set.write_csv(
        "disorder_summary.csv",
        &["sigma_index", "sigma", "realizations", "median_floor"],
        &summary,
    )
}
