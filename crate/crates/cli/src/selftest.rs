//! Quick numerical checks for a fresh build: one line per check, numerical
//! failure exit code when any fails.

use nhep::bloch::{bloch_coefficients, solve_exceptional_twists, Family, ModelSpec};
use nhep::fock::MomentumHamiltonian;
use nhep::scan::{angle_at, sweep, GridSpec, Range, UAxis};
use nhep::spectral::REFINED_THRESHOLD;
use nhep::C64;

use crate::CliError;

type Check = (&'static str, fn() -> Result<String, String>);

const CHECKS: [Check; 3] = [
    ("twists", twists),
    ("defective at U = 0", defective_at_zero),
    ("sweep reproducible across workers", reproducible),
];

fn twists() -> Result<String, String> {
    let model = ModelSpec::new(6, 0.7).map_err(|e| e.to_string())?;
    let tw = solve_exceptional_twists(&model).map_err(|e| e.to_string())?;
    if tw.len() != 4 {
        return Err(format!("{} twists, expected 4", tw.len()));
    }
    let worst = tw
        .iter()
        .map(|t| {
            let b = bloch_coefficients(t.k_e, &t.model(&model));
            match t.family {
                Family::MZero => b.m_k.abs(),
                Family::PZero => b.p_k.abs(),
            }
        })
        .fold(0.0, f64::max);
    if worst > 1e-12 {
        return Err(format!("vanishing coefficient only down to {worst:e}"));
    }
    Ok(format!("4 twists, residual {worst:.1e}"))
}

fn defective_at_zero() -> Result<String, String> {
    let model = ModelSpec::new(3, 0.7).map_err(|e| e.to_string())?;
    let tw = solve_exceptional_twists(&model).map_err(|e| e.to_string())?;
    let h = MomentumHamiltonian::new(&model, 2, None).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for t in &tw {
        let a = angle_at(&h, t.phi_e, C64::new(0.0, 0.0)).map_err(|e| e.to_string())?;
        worst = worst.max(a.min_angle);
    }
    if worst < REFINED_THRESHOLD {
        Ok(format!("max angle {worst:.1e}"))
    } else {
        Err(format!("angle {worst:e} at an exceptional twist"))
    }
}

fn reproducible() -> Result<String, String> {
    let model = ModelSpec::new(3, 0.7).map_err(|e| e.to_string())?;
    let h = MomentumHamiltonian::new(&model, 2, Some(0)).map_err(|e| e.to_string())?;
    let grid = GridSpec {
        phi: Range::new(0.5, 1.0, 9),
        u: Range::new(-0.5, 0.5, 7),
        axis: UAxis::Real,
        sector: Some(0),
    };
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| e.to_string())?;
        pool.install(|| sweep(&grid, &h))
            .map(|r| r.cells.iter().map(|c| c.min_angle.to_bits()).collect::<Vec<_>>())
            .map_err(|e| e.to_string())
    };
    if run(1)? == run(3)? {
        Ok(format!("{} cells bitwise equal", grid.len()))
    } else {
        Err("sweeps differ between 1 and 3 workers".into())
    }
}

pub fn run() -> Result<(), CliError> {
    let mut failed = Vec::new();
    for (name, check) in CHECKS {
        match check() {
            Ok(detail) => println!("[PASS] {name}: {detail}"),
            Err(detail) => {
                println!("[FAIL] {name}: {detail}");
                failed.push(name);
            }
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Check(failed.join(", ")))
    }
}
