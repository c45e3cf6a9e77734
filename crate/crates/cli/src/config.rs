//! Run configuration: TOML (or JSON) with model, run and output sections.
//! Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use nhep::bloch::{ModelSpec, NoisePlacement};
use nhep::perturb::EffectiveKind;
use nhep::scan::{GridSpec, Range, UAxis};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelBlock,
    pub run: RunBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub l: usize,
    pub m: f64,
    #[serde(default)]
    pub disorder_sigma: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub placement: Placement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    #[default]
    Paired,
    Directed,
    InterCellDirected,
}

impl From<Placement> for NoisePlacement {
    fn from(p: Placement) -> Self {
        match p {
            Placement::Paired => NoisePlacement::Paired,
            Placement::Directed => NoisePlacement::Directed,
            Placement::InterCellDirected => NoisePlacement::InterCellDirected,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Sweep,
    ProbeCircle,
    ProbeSphere,
    Trace,
    Predict,
    Disorder,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Sweep => "sweep",
            Command::ProbeCircle => "probe-circle",
            Command::ProbeSphere => "probe-sphere",
            Command::Trace => "trace",
            Command::Predict => "predict",
            Command::Disorder => "disorder",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    #[default]
    Real,
    Imaginary,
}

impl From<Axis> for UAxis {
    fn from(a: Axis) -> Self {
        match a {
            Axis::Real => UAxis::Real,
            Axis::Imaginary => UAxis::Imaginary,
        }
    }
}

fn two() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlock {
    /// When present it must name the subcommand being run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    #[serde(default = "two")]
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sector: Option<usize>,
    #[serde(default)]
    pub axis: Axis,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub circle: Option<CircleBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sphere: Option<SphereBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<TraceBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predict: Option<PredictBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disorder: Option<DisorderBlock>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeBlock {
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

impl From<RangeBlock> for Range {
    fn from(r: RangeBlock) -> Self {
        Range::new(r.lo, r.hi, r.steps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub phi: RangeBlock,
    pub u: RangeBlock,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircleBlock {
    pub center: [f64; 2],
    pub radii: [f64; 2],
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SphereBlock {
    pub center: [f64; 2],
    pub radii: [f64; 2],
    pub n_nu: usize,
    pub n_eta: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineSeed {
    pub name: String,
    /// (φ, U) seed on the line.
    pub start: [f64; 2],
    /// Initial direction in the (φ, U) plane.
    pub direction: [f64; 2],
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceBlock {
    pub lines: Vec<LineSeed>,
    pub step: f64,
    pub min_step: f64,
    pub max_points: usize,
    pub phi_bounds: [f64; 2],
    pub u_bounds: [f64; 2],
    /// Refine each seed onto the line before tracing.
    #[serde(default = "yes")]
    pub refine_start: bool,
    /// With exactly two lines: look for a common EP3 endpoint closer than
    /// this in |Δφ| + |ΔU|.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub merge_tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictFamily {
    Inherited,
    Emergent,
    ThreeFermion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Ii2,
    Ii3,
    Ii4,
}

impl From<Kind> for EffectiveKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Ii2 => EffectiveKind::II2,
            Kind::Ii3 => EffectiveKind::II3,
            Kind::Ii4 => EffectiveKind::II4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictBlock {
    pub family: PredictFamily,
    pub phi: RangeBlock,
    /// Emergent only; all three kinds when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<Kind>,
    /// Emergent only: restrict to one (k, q, ξ) with ξ = ±1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<i8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisorderBlock {
    pub sigmas: Vec<f64>,
    pub realizations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Csv,
    #[serde(rename = "csv+svg")]
    CsvSvg,
    #[serde(rename = "csv+pgm")]
    CsvPgm,
}

impl std::str::FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "csv+svg" => Ok(Format::CsvSvg),
            "csv+pgm" => Ok(Format::CsvPgm),
            _ => Err(format!("unknown format {s:?}; expected csv, csv+svg or csv+pgm")),
        }
    }
}

fn out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default = "out_dir")]
    pub directory: PathBuf,
    #[serde(default)]
    pub format: Format,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self {
            directory: out_dir(),
            format: Format::Csv,
        }
    }
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    /// Reads TOML, or JSON when the extension is `.json`.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| bad(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| bad(e.to_string()))
    }

    #[cfg(test)]
    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| bad(e.to_string()))
    }

    pub fn model_spec(&self) -> Result<ModelSpec, CliError> {
        let spec = ModelSpec::new(self.model.l, self.model.m).map_err(|e| bad(e.to_string()))?;
        spec.with_disorder(self.model.disorder_sigma, self.model.seed)
            .map_err(|e| bad(e.to_string()))
    }

    pub fn grid(&self) -> Result<GridSpec, CliError> {
        let g = self.run.grid.ok_or_else(|| bad("run.grid is required"))?;
        let spec = GridSpec {
            phi: g.phi.into(),
            u: g.u.into(),
            axis: self.run.axis.into(),
            sector: self.run.sector,
        };
        spec.validate().map_err(|e| bad(e.to_string()))?;
        Ok(spec)
    }

    /// Checks everything the subcommand will need before any compute.
    pub fn validate_for(&self, cmd: Command) -> Result<(), CliError> {
        if let Some(c) = self.run.command {
            if c != cmd {
                return Err(bad(format!(
                    "config is for `{}` but `{}` was requested",
                    c.name(),
                    cmd.name()
                )));
            }
        }
        let model = self.model_spec()?;
        let l = self.model.l;
        if !(1..=2 * l).contains(&self.run.n) {
            return Err(bad(format!("run.n must be in 1..={}", 2 * l)));
        }
        if let Some(s) = self.run.sector {
            if s >= l {
                return Err(bad(format!("run.sector must be below L = {l}")));
            }
            if !model.is_clean() {
                return Err(bad("momentum sectors are undefined with disorder"));
            }
        }
        let finite = |xs: &[f64], what: &str| {
            if xs.iter().all(|x| x.is_finite()) {
                Ok(())
            } else {
                Err(bad(format!("{what} must be finite")))
            }
        };
        match cmd {
            Command::Sweep => {
                self.grid()?;
            }
            Command::ProbeCircle => {
                let c = self.run.circle.ok_or_else(|| bad("run.circle is required"))?;
                finite(&[c.center[0], c.center[1], c.radii[0], c.radii[1]], "run.circle")?;
                if c.radii.iter().any(|&r| r <= 0.0) || c.samples < 3 {
                    return Err(bad("run.circle needs positive radii and at least 3 samples"));
                }
            }
            Command::ProbeSphere => {
                let s = self.run.sphere.ok_or_else(|| bad("run.sphere is required"))?;
                finite(&[s.center[0], s.center[1], s.radii[0], s.radii[1]], "run.sphere")?;
                if s.radii.iter().any(|&r| r <= 0.0) || s.n_nu < 3 || s.n_eta < 3 {
                    return Err(bad("run.sphere needs positive radii and at least 3 samples per axis"));
                }
            }
            Command::Trace => {
                let t = self.run.trace.as_ref().ok_or_else(|| bad("run.trace is required"))?;
                if t.lines.is_empty() {
                    return Err(bad("run.trace.lines is empty"));
                }
                if !(t.step > 0.0 && t.min_step > 0.0 && t.min_step <= t.step) || t.max_points < 2 {
                    return Err(bad("run.trace needs 0 < min_step <= step and max_points >= 2"));
                }
                if t.phi_bounds[0] >= t.phi_bounds[1] || t.u_bounds[0] >= t.u_bounds[1] {
                    return Err(bad("run.trace bounds must be increasing"));
                }
                for line in &t.lines {
                    finite(&[line.start[0], line.start[1], line.direction[0], line.direction[1]], "trace seed")?;
                    if line.direction == [0.0, 0.0] {
                        return Err(bad(format!("line {}: zero direction", line.name)));
                    }
                    if line.name.is_empty() || !line.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                        return Err(bad(format!("line name {:?} must be non-empty [A-Za-z0-9_-]", line.name)));
                    }
                }
                if t.merge_tol.is_some() && t.lines.len() != 2 {
                    return Err(bad("run.trace.merge_tol needs exactly two lines"));
                }
            }
            Command::Predict => {
                let p = self.run.predict.as_ref().ok_or_else(|| bad("run.predict is required"))?;
                let probe = GridSpec {
                    phi: p.phi.into(),
                    u: Range::new(0.0, 1.0, 2),
                    axis: UAxis::Real,
                    sector: None,
                };
                probe.validate().map_err(|e| bad(e.to_string()))?;
                if p.family != PredictFamily::Emergent && (p.kind.is_some() || p.k.is_some() || p.q.is_some() || p.xi.is_some()) {
                    return Err(bad("kind, k, q and xi apply to the emergent family only"));
                }
                if p.k.is_some_and(|k| k >= l) || p.q.is_some_and(|q| q >= l) {
                    return Err(bad(format!("k and q must be below L = {l}")));
                }
                if p.xi.is_some_and(|x| x != 1 && x != -1) {
                    return Err(bad("xi must be +1 or -1"));
                }
            }
            Command::Disorder => {
                let d = self.run.disorder.as_ref().ok_or_else(|| bad("run.disorder is required"))?;
                if d.sigmas.is_empty() || d.sigmas.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
                    return Err(bad("run.disorder.sigmas must be positive"));
                }
                if d.realizations == 0 {
                    return Err(bad("run.disorder.realizations must be at least 1"));
                }
                if self.run.n != 2 {
                    return Err(bad("disorder runs are defined for N = 2"));
                }
                if self.run.sector.is_some() {
                    return Err(bad("momentum sectors are undefined with disorder"));
                }
                self.grid()?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SWEEP: &str = r#"
[model]
l = 6
m = 0.7

[run]
command = "sweep"
sector = 0

[run.grid]
phi = { lo = 4.6, hi = 4.9, steps = 31 }
u = { lo = -0.5, hi = 0.5, steps = 21 }

[output]
directory = "runs/a"
format = "csv+svg"
"#;

    #[test]
    fn parses_and_validates() {
        let c = RunConfig::from_toml(SWEEP).unwrap();
        assert_eq!(c.run.n, 2);
        assert_eq!(c.output.format, Format::CsvSvg);
        c.validate_for(Command::Sweep).unwrap();
        assert!(matches!(c.validate_for(Command::Trace), Err(CliError::Config(_))));
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = SWEEP.replace("m = 0.7", "m = 0.7\nmass = 1");
        assert!(matches!(RunConfig::from_toml(&text), Err(CliError::Config(_))));
        let text = SWEEP.replace("steps = 31 }", "steps = 31, step = 2 }");
        assert!(RunConfig::from_toml(&text).is_err());
    }

    #[test]
    fn sector_with_disorder_rejected() {
        let text = SWEEP.replace("m = 0.7", "m = 0.7\ndisorder_sigma = 0.01");
        let c = RunConfig::from_toml(&text).unwrap();
        assert!(c.validate_for(Command::Sweep).is_err());
    }

    #[test]
    fn json_matches_toml() {
        let c = RunConfig::from_toml(SWEEP).unwrap();
        let j = serde_json::to_string(&c).unwrap();
        assert_eq!(RunConfig::from_json(&j).unwrap(), c);
    }

    fn arb_config() -> impl Strategy<Value = RunConfig> {
        (
            2usize..12,
            -1.4f64..1.4,
            0.0f64..0.1,
            // TOML integers are signed 64-bit
            0u64..i64::MAX as u64,
            prop_oneof![Just(Placement::Paired), Just(Placement::Directed), Just(Placement::InterCellDirected)],
            1usize..4,
            proptest::option::of(0usize..2),
            (-10.0f64..0.0, 0.1f64..10.0, 2usize..400),
            proptest::option::of((proptest::collection::vec(0.001f64..0.2, 1..4), 1usize..5)),
            proptest::option::of(0.0f64..1.0),
        )
            .prop_map(|(l, m, sigma, seed, placement, n, sector, (lo, hi, steps), dis, merge)| RunConfig {
                model: ModelBlock {
                    l,
                    m,
                    disorder_sigma: sigma,
                    seed,
                    placement,
                },
                run: RunBlock {
                    command: None,
                    n,
                    sector,
                    axis: Axis::Imaginary,
                    grid: Some(GridBlock {
                        phi: RangeBlock { lo, hi, steps },
                        u: RangeBlock { lo, hi, steps },
                    }),
                    circle: Some(CircleBlock {
                        center: [lo, hi],
                        radii: [0.1, 0.2],
                        samples: steps,
                    }),
                    sphere: None,
                    trace: Some(TraceBlock {
                        lines: vec![LineSeed {
                            name: "A".into(),
                            start: [lo, hi],
                            direction: [1.0, -2.5],
                        }],
                        step: 1e-3,
                        min_step: 1e-6,
                        max_points: steps,
                        phi_bounds: [lo, hi],
                        u_bounds: [lo, hi],
                        refine_start: false,
                        merge_tol: merge,
                    }),
                    predict: Some(PredictBlock {
                        family: PredictFamily::Emergent,
                        phi: RangeBlock { lo, hi, steps },
                        kind: Some(Kind::Ii3),
                        k: sector,
                        q: None,
                        xi: Some(-1),
                    }),
                    disorder: dis.map(|(sigmas, realizations)| DisorderBlock { sigmas, realizations }),
                },
                output: OutputBlock {
                    directory: PathBuf::from(format!("out/{seed}")),
                    format: Format::CsvPgm,
                },
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn toml_round_trip(c in arb_config()) {
            let text = c.to_toml().unwrap();
            prop_assert_eq!(RunConfig::from_toml(&text).unwrap(), c);
        }

        #[test]
        fn json_round_trip(c in arb_config()) {
            let text = serde_json::to_string_pretty(&c).unwrap();
            prop_assert_eq!(RunConfig::from_json(&text).unwrap(), c);
        }
    }
}
