//! Run configuration: a flat `key = value` text format with benchmark presets.
//!
//! ```text
//! # comments start with '#'
//! benchmark = sod-square        # preset applied first, other keys override it
//! geometry = unit-square        # unit-square | ubend | patch:<file>
//! ubend.width = 1
//! ubend.leg_length = 2
//! ubend.inner_radius = 0.5
//! degree = 2
//! n = 66x66                     # functions per direction ("66" means 66x66)
//! gamma = 1.4
//! dt = 0.0005
//! t_final = 0.231
//! scheme = fct                  # galerkin | low-order | fct
//! control_vars = density,pressure
//! bc.xi0_min = slip_wall        # slip_wall | farfield | transmissive, one key per side
//! farfield = 1,0,0,1            # rho,vx,vy,p for far-field sides
//! ic = sod-x                    # sod-x | sod-lower-leg
//! ic.split = 0.5
//! sample_line = segment:0,0.5,1,0.5   # or: centerline
//! n_samples = 512
//! grid = 66x66
//! out = out
//! entropy_fix = none            # or the factor ε of the floor ε ĉ
//! prelimit = false
//! failsafe = true
//! timing = false                # wall-clock column in the diagnostics
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::afc::ControlVariable;
use crate::bc::{BoundaryKind, BoundarySpec};
use crate::error::{Error, Result};
use crate::euler::Primitive;
use crate::geometry::{Side, UBendParams};
use crate::timeint::Scheme;
use crate::MAX_DIM;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Benchmark {
    SodSquare,
    SodUbend,
}

impl Benchmark {
    pub fn name(self) -> &'static str {
        match self {
            Benchmark::SodSquare => "sod-square",
            Benchmark::SodUbend => "sod-ubend",
        }
    }
}

impl FromStr for Benchmark {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "sod-square" => Ok(Benchmark::SodSquare),
            "sod-ubend" => Ok(Benchmark::SodUbend),
            other => Err(Error::Config(format!("unknown benchmark '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum GeometrySource {
    UnitSquare,
    UBend(UBendParams),
    PatchFile(PathBuf),
}

/// Sod data split by a diaphragm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitialCondition {
    /// Left state where `x < split`.
    SodX { split: f64 },
    /// Left state where `y < 0` and `x < split` (the lower leg of the U-bend).
    SodLowerLeg { split: f64 },
}

impl InitialCondition {
    /// Primitive state at `x` with a zero velocity of `dim` components.
    pub fn eval(&self, x: &[f64], dim: usize) -> Primitive<f64> {
        let left = match *self {
            InitialCondition::SodX { split } => x[0] < split,
            InitialCondition::SodLowerLeg { split } => x[1] < 0.0 && x[0] < split,
        };
        let v = [0.0; MAX_DIM];
        if left {
            Primitive::new(1.0, &v[..dim], 1.0)
        } else {
            Primitive::new(0.125, &v[..dim], 0.1)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SampleLine {
    Segment { from: [f64; 2], to: [f64; 2] },
    /// The curve `ξ₁ = 1/2` of the patch, parameterized by arc length.
    Centerline,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub benchmark: Option<Benchmark>,
    pub geometry: GeometrySource,
    pub degree: usize,
    pub n: [usize; 2],
    pub gamma: f64,
    pub dt: f64,
    pub t_final: f64,
    pub scheme: Scheme,
    pub control_vars: Vec<ControlVariable>,
    pub boundary: BoundarySpec<f64>,
    pub initial: InitialCondition,
    pub sample_line: SampleLine,
    pub n_samples: usize,
    pub grid: [usize; 2],
    pub output_dir: PathBuf,
    pub entropy_fix: Option<f64>,
    pub prelimit: bool,
    pub failsafe: bool,
    pub timing: bool,
}

/// Functions per direction of the U-bend preset: along the channel, across it.
pub const UBEND_RESOLUTION: [usize; 2] = [258, 18];

impl RunConfig {
    pub fn preset(benchmark: Benchmark) -> Self {
        match benchmark {
            Benchmark::SodSquare => Self {
                benchmark: Some(benchmark),
                geometry: GeometrySource::UnitSquare,
                degree: 2,
                n: [66, 66],
                gamma: 1.4,
                dt: 0.0005,
                t_final: 0.231,
                scheme: Scheme::Fct,
                control_vars: vec![ControlVariable::Density, ControlVariable::Pressure],
                boundary: BoundarySpec::uniform(2, BoundaryKind::SlipWall),
                initial: InitialCondition::SodX { split: 0.5 },
                sample_line: SampleLine::Segment { from: [0.0, 0.5], to: [1.0, 0.5] },
                n_samples: 512,
                grid: [66, 66],
                output_dir: PathBuf::from("out"),
                entropy_fix: None,
                prelimit: false,
                failsafe: true,
                timing: false,
            },
            Benchmark::SodUbend => Self {
                benchmark: Some(benchmark),
                geometry: GeometrySource::UBend(UBendParams::default()),
                n: UBEND_RESOLUTION,
                dt: 0.001,
                boundary: BoundarySpec::uniform(2, BoundaryKind::SlipWall)
                    .with_side(Side { axis: 0, upper: false }, BoundaryKind::Transmissive)
                    .with_side(Side { axis: 0, upper: true }, BoundaryKind::Transmissive),
                initial: InitialCondition::SodLowerLeg { split: 0.0 },
                sample_line: SampleLine::Centerline,
                grid: [UBEND_RESOLUTION[0], UBEND_RESOLUTION[1]],
                ..Self::preset(Benchmark::SodSquare)
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.degree < 1 {
            return bad("degree must be at least 1".into());
        }
        if self.n.iter().any(|&n| n < self.degree + 1) {
            return bad(format!("need at least {} functions per direction", self.degree + 1));
        }
        if !(self.gamma > 1.0) {
            return bad(format!("gamma {} must exceed 1", self.gamma));
        }
        if !(self.dt > 0.0) || !(self.t_final >= 0.0) {
            return bad("dt must be positive and t_final non-negative".into());
        }
        if self.control_vars.is_empty() {
            return bad("at least one control variable is required".into());
        }
        if self.n_samples < 2 || self.grid.iter().any(|&g| g < 2) {
            return bad("sampling needs at least two points per direction".into());
        }
        if let Some(eps) = self.entropy_fix {
            if !(eps > 0.0) {
                return bad("entropy_fix must be positive".into());
            }
        }
        self.boundary.validate()
    }

    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let err = |what: &str| Error::Config(format!("invalid value '{value}' for {what}"));
        let float = |v: &str| v.trim().parse::<f64>().map_err(|_| err(key));
        let int = |v: &str| v.trim().parse::<usize>().map_err(|_| err(key));
        let boolean = |v: &str| match v.trim() {
            "true" | "on" | "yes" | "1" => Ok(true),
            "false" | "off" | "no" | "0" => Ok(false),
            _ => Err(err(key)),
        };
        let pair = |v: &str| -> Result<[usize; 2]> {
            match v.split_once('x') {
                Some((a, b)) => Ok([int(a)?, int(b)?]),
                None => {
                    let n = int(v)?;
                    Ok([n, n])
                }
            }
        };
        let ubend = |g: &GeometrySource| match g {
            GeometrySource::UBend(p) => *p,
            _ => UBendParams::default(),
        };
        match key.trim() {
            "benchmark" => *self = Self::preset(value.parse()?),
            "geometry" => {
                self.geometry = match value {
                    "unit-square" => GeometrySource::UnitSquare,
                    "ubend" => GeometrySource::UBend(ubend(&self.geometry)),
                    v => match v.strip_prefix("patch:") {
                        Some(path) => GeometrySource::PatchFile(PathBuf::from(path.trim())),
                        None => return Err(err("geometry")),
                    },
                }
            }
            k @ ("ubend.width" | "ubend.leg_length" | "ubend.inner_radius") => {
                let mut p = ubend(&self.geometry);
                let v = float(value)?;
                match k {
                    "ubend.width" => p.width = v,
                    "ubend.leg_length" => p.leg_length = v,
                    _ => p.inner_radius = v,
                }
                self.geometry = GeometrySource::UBend(p);
            }
            "degree" => self.degree = int(value)?,
            "n" => self.n = pair(value)?,
            "gamma" => self.gamma = float(value)?,
            "dt" => self.dt = float(value)?,
            "t_final" | "tfinal" => self.t_final = float(value)?,
            "scheme" => self.scheme = value.parse()?,
            "control_vars" => {
                self.control_vars = value.split(',').map(str::parse).collect::<Result<Vec<_>>>()?;
            }
            "farfield" => {
                let v: Vec<f64> = value.split(',').map(float).collect::<Result<_>>()?;
                if v.len() != 4 {
                    return Err(err("farfield (expected rho,vx,vy,p)"));
                }
                self.boundary.farfield = Some(Primitive::new(v[0], &v[1..3], v[3]));
            }
            "ic" => {
                let split = match self.initial {
                    InitialCondition::SodX { split } | InitialCondition::SodLowerLeg { split } => split,
                };
                self.initial = match value {
                    "sod-x" => InitialCondition::SodX { split },
                    "sod-lower-leg" => InitialCondition::SodLowerLeg { split },
                    _ => return Err(err("ic")),
                }
            }
            "ic.split" => {
                let s = float(value)?;
                match &mut self.initial {
                    InitialCondition::SodX { split } | InitialCondition::SodLowerLeg { split } => *split = s,
                }
            }
            "sample_line" => {
                self.sample_line = if value == "centerline" {
                    SampleLine::Centerline
                } else {
                    let coords = value.strip_prefix("segment:").ok_or_else(|| err("sample_line"))?;
                    let v: Vec<f64> = coords.split(',').map(float).collect::<Result<_>>()?;
                    if v.len() != 4 {
                        return Err(err("sample_line"));
                    }
                    SampleLine::Segment { from: [v[0], v[1]], to: [v[2], v[3]] }
                }
            }
            "n_samples" => self.n_samples = int(value)?,
            "grid" => self.grid = pair(value)?,
            "out" | "output_dir" => self.output_dir = PathBuf::from(value),
            "entropy_fix" => self.entropy_fix = if value == "none" { None } else { Some(float(value)?) },
            "prelimit" => self.prelimit = boolean(value)?,
            "failsafe" => self.failsafe = boolean(value)?,
            "timing" => self.timing = boolean(value)?,
            k => match k.strip_prefix("bc.").and_then(Side::parse) {
                Some(side) => self.boundary.set(side, value.parse()?)?,
                None => return Err(Error::Config(format!("unknown key '{k}'"))),
            },
        }
        Ok(())
    }

    /// Parses a configuration text. A `benchmark` line is applied before every other key.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", lineno + 1)))?;
            entries.push((k.trim().to_string(), v.trim().to_string()));
        }
        let mut cfg = Self::preset(Benchmark::SodSquare);
        for (k, v) in entries.iter().filter(|(k, _)| k == "benchmark") {
            cfg.set(k, v)?;
        }
        for (k, v) in entries.iter().filter(|(k, _)| k != "benchmark") {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    /// Every key written out explicitly, floats with 17 significant digits.
    pub fn serialize(&self) -> String {
        let f = |x: f64| format!("{x:.16e}");
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        if let Some(b) = self.benchmark {
            line("benchmark", b.name().into());
        }
        match &self.geometry {
            GeometrySource::UnitSquare => line("geometry", "unit-square".into()),
            GeometrySource::UBend(p) => {
                line("geometry", "ubend".into());
                line("ubend.width", f(p.width));
                line("ubend.leg_length", f(p.leg_length));
                line("ubend.inner_radius", f(p.inner_radius));
            }
            GeometrySource::PatchFile(path) => line("geometry", format!("patch:{}", path.display())),
        }
        line("degree", self.degree.to_string());
        line("n", format!("{}x{}", self.n[0], self.n[1]));
        line("gamma", f(self.gamma));
        line("dt", f(self.dt));
        line("t_final", f(self.t_final));
        line("scheme", self.scheme.name().into());
        line("control_vars", self.control_vars.iter().map(|c| c.name()).collect::<Vec<_>>().join(","));
        for (side, kind) in self.boundary.sides() {
            line(&format!("bc.{}", side.name()), kind.name().into());
        }
        if let Some(p) = self.boundary.farfield {
            line("farfield", [p.rho, p.v[0], p.v[1], p.p].map(f).join(","));
        }
        let (ic, split) = match self.initial {
            InitialCondition::SodX { split } => ("sod-x", split),
            InitialCondition::SodLowerLeg { split } => ("sod-lower-leg", split),
        };
        line("ic", ic.into());
        line("ic.split", f(split));
        match self.sample_line {
            SampleLine::Centerline => line("sample_line", "centerline".into()),
            SampleLine::Segment { from, to } => {
                line("sample_line", format!("segment:{}", [from[0], from[1], to[0], to[1]].map(f).join(",")))
            }
        }
        line("n_samples", self.n_samples.to_string());
        line("grid", format!("{}x{}", self.grid[0], self.grid[1]));
        line("out", self.output_dir.display().to_string());
        line("entropy_fix", self.entropy_fix.map_or("none".into(), f));
        line("prelimit", self.prelimit.to_string());
        line("failsafe", self.failsafe.to_string());
        line("timing", self.timing.to_string());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_match_the_benchmarks() {
        let c = RunConfig::preset(Benchmark::SodSquare);
        assert_eq!((c.n, c.degree, c.dt, c.t_final), ([66, 66], 2, 0.0005, 0.231));
        assert_eq!(c.scheme, Scheme::Fct);
        let u = RunConfig::preset(Benchmark::SodUbend);
        assert_eq!(u.dt, 0.001);
        assert_eq!(u.t_final, 0.231);
        assert_eq!(u.boundary.kind(Side { axis: 0, upper: false }), BoundaryKind::Transmissive);
        assert_eq!(u.boundary.kind(Side { axis: 1, upper: true }), BoundaryKind::SlipWall);
        c.validate().unwrap();
        u.validate().unwrap();
    }

    #[test]
    fn roundtrip() {
        for b in [Benchmark::SodSquare, Benchmark::SodUbend] {
            let mut c = RunConfig::preset(b);
            c.entropy_fix = Some(0.1);
            c.boundary.farfield = Some(Primitive::new(1.0, &[0.1, 0.2], 0.9));
            c.dt = 1.0 / 3000.0;
            let text = c.serialize();
            let back = RunConfig::parse(&text).unwrap();
            assert_eq!(back, c);
            assert_eq!(back.serialize(), text);
        }
    }

    #[test]
    fn parsing_overrides_and_errors() {
        let c = RunConfig::parse("scheme = galerkin\nn = 20 # comment\nbenchmark = sod-ubend\nbc.xi1_max = transmissive").unwrap();
        assert_eq!(c.scheme, Scheme::Galerkin);
        assert_eq!(c.n, [20, 20]);
        assert_eq!(c.dt, 0.001);
        assert_eq!(c.boundary.kind(Side { axis: 1, upper: true }), BoundaryKind::Transmissive);
        assert!(RunConfig::parse("nonsense = 1").is_err());
        assert!(RunConfig::parse("dt").is_err());
        assert!(RunConfig::parse("scheme = implicit").is_err());
        assert!(RunConfig::parse("control_vars = density,entropy").is_err());
        let c = RunConfig::parse("n = 30x12\nsample_line = segment:0,0.25,1,0.25").unwrap();
        assert_eq!(c.n, [30, 12]);
        assert_eq!(c.sample_line, SampleLine::Segment { from: [0.0, 0.25], to: [1.0, 0.25] });
    }
}
