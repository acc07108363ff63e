//! Run orchestration: geometry and discretization from a [`RunConfig`], initial condition,
//! time loop, sampling and output files.

pub mod config;
pub mod output;
pub mod riemann;

pub use config::{Benchmark, GeometrySource, InitialCondition, RunConfig, SampleLine};
pub use output::{write_outputs, OutputFiles};
pub use riemann::{exact_riemann, sod_states, RiemannSolution};

use crate::afc::{AfcOptions, Discretization, SolutionField};
use crate::error::{Error, Result};
use crate::euler::{GasModel, Primitive, State};
use crate::geometry::{self, GeometryMap};
use crate::linalg::DimVec;
use crate::timeint::{self, RunOutcome, StepDiagnostics, TimeLoopConfig};
use crate::Real;

/// Coefficients by collocation at the images of the Greville points.
pub fn set_initial_condition<T: Real>(geo: &GeometryMap<T>, ic: impl Fn(&DimVec<T>) -> Primitive<T>, gas: &GasModel<T>) -> Result<SolutionField<T>> {
    let dim = geo.dim();
    let mut field = SolutionField::zeros(dim, geo.basis().len());
    for (i, g) in geo.basis().greville_points().iter().enumerate() {
        let x = geo.map_point(&g[..dim])?;
        let prim = ic(&x);
        if prim.dim != dim {
            return Err(Error::Config(format!("initial condition has {} velocity components, patch has dimension {dim}", prim.dim)));
        }
        if !prim.is_admissible() {
            return Err(Error::InvalidState(format!(
                "initial condition inadmissible at x = {:?}: rho = {}, p = {}",
                &x[..dim],
                prim.rho,
                prim.p
            )));
        }
        field.set_state(i, &prim.to_state(gas));
    }
    Ok(field)
}

/// Value of the spline expansion of `field` at the parametric point `xi`.
pub fn evaluate<T: Real>(field: &SolutionField<T>, geo: &GeometryMap<T>, xi: &[T]) -> Result<State<T>> {
    let nv = field.nvar();
    let mut vars = [T::zero(); crate::MAX_VARS];
    for (j, phi) in geo.basis().eval(xi)? {
        for (k, v) in vars[..nv].iter_mut().enumerate() {
            *v += phi * field.coeffs[j * nv + k];
        }
    }
    Ok(State::from_vars(&vars[..nv], field.dim))
}

/// One sampled point of a two-dimensional field; `None` values mark points outside the patch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleRow {
    pub s: f64,
    pub x: [f64; 2],
    pub values: Option<SampleValues>,
}

/// `(ρ, v_x, v_y, p, E)` with `E = ρE / ρ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleValues {
    pub rho: f64,
    pub v: [f64; 2],
    pub p: f64,
    pub e: f64,
}

fn sample_values(u: &State<f64>, gas: &GasModel<f64>) -> SampleValues {
    let v = u.velocity();
    SampleValues { rho: u.rho, v: [v[0], v[1]], p: u.pressure_unchecked(gas), e: u.rho_e / u.rho }
}

/// True when the control points are the Greville points, i.e. the map is the identity.
fn is_identity_map(geo: &GeometryMap<f64>) -> bool {
    let d = geo.dim();
    geo.basis()
        .greville_points()
        .iter()
        .zip(geo.control_points())
        .all(|(g, c)| (0..d).all(|k| (g[k] - c[k]).abs() <= 1e-14))
}

/// Chord-length table of the curve `ξ ↦ x(ξ, 1/2)` used to place centerline samples.
fn centerline_table(geo: &GeometryMap<f64>, resolution: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut xi = Vec::with_capacity(resolution + 1);
    let mut s = Vec::with_capacity(resolution + 1);
    let mut prev = geo.map_point(&[0.0, 0.5])?;
    let mut acc = 0.0;
    for k in 0..=resolution {
        let t = k as f64 / resolution as f64;
        let x = geo.map_point(&[t, 0.5])?;
        acc += ((x[0] - prev[0]).powi(2) + (x[1] - prev[1]).powi(2)).sqrt();
        prev = x;
        xi.push(t);
        s.push(acc);
    }
    Ok((xi, s))
}

/// Samples a two-dimensional field at `n` points along `line`; `s` is the arc coordinate.
pub fn sample_line(field: &SolutionField<f64>, geo: &GeometryMap<f64>, line: &SampleLine, n: usize, gas: &GasModel<f64>) -> Result<Vec<SampleRow>> {
    if geo.dim() != 2 {
        return Err(Error::Config("line sampling needs a two-dimensional patch".into()));
    }
    let n = n.max(2);
    let mut rows = Vec::with_capacity(n);
    match *line {
        SampleLine::Segment { from, to } => {
            let identity = is_identity_map(geo);
            let length = ((to[0] - from[0]).powi(2) + (to[1] - from[1]).powi(2)).sqrt();
            for k in 0..n {
                let t = k as f64 / (n - 1) as f64;
                let x = [from[0] + t * (to[0] - from[0]), from[1] + t * (to[1] - from[1])];
                let xi = if identity {
                    (0..2).all(|l| (0.0..=1.0).contains(&x[l])).then_some([x[0], x[1], 0.0])
                } else {
                    geo.inverse_map(&x)
                };
                let values = match xi {
                    Some(xi) => Some(sample_values(&evaluate(field, geo, &xi[..2])?, gas)),
                    None => None,
                };
                rows.push(SampleRow { s: t * length, x, values });
            }
        }
        SampleLine::Centerline => {
            let (xi_tab, s_tab) = centerline_table(geo, 64 * n)?;
            let total = *s_tab.last().unwrap_or(&0.0);
            let mut seg = 0;
            for k in 0..n {
                let s = total * k as f64 / (n - 1) as f64;
                while seg + 2 < s_tab.len() && s_tab[seg + 1] < s {
                    seg += 1;
                }
                let (s0, s1) = (s_tab[seg], s_tab[seg + 1]);
                let w = if s1 > s0 { ((s - s0) / (s1 - s0)).clamp(0.0, 1.0) } else { 0.0 };
                let xi = [xi_tab[seg] + w * (xi_tab[seg + 1] - xi_tab[seg]), 0.5];
                let x = geo.map_point(&xi)?;
                let u = evaluate(field, geo, &xi)?;
                rows.push(SampleRow { s, x: [x[0], x[1]], values: Some(sample_values(&u, gas)) });
            }
        }
    }
    Ok(rows)
}

/// Field values on a uniform `nx × ny` parametric grid, `x` running fastest.
pub fn sample_grid(field: &SolutionField<f64>, geo: &GeometryMap<f64>, grid: [usize; 2], gas: &GasModel<f64>) -> Result<Vec<SampleRow>> {
    if geo.dim() != 2 {
        return Err(Error::Config("grid sampling needs a two-dimensional patch".into()));
    }
    let [nx, ny] = grid.map(|g| g.max(2));
    let mut rows = Vec::with_capacity(nx * ny);
    for b in 0..ny {
        for a in 0..nx {
            let xi = [a as f64 / (nx - 1) as f64, b as f64 / (ny - 1) as f64];
            let x = geo.map_point(&xi)?;
            let u = evaluate(field, geo, &xi)?;
            rows.push(SampleRow { s: 0.0, x: [x[0], x[1]], values: Some(sample_values(&u, gas)) });
        }
    }
    Ok(rows)
}

pub fn build_geometry(cfg: &RunConfig) -> Result<GeometryMap<f64>> {
    match &cfg.geometry {
        GeometrySource::UnitSquare => geometry::make_unit_square(cfg.n, cfg.degree),
        GeometrySource::UBend(p) => geometry::make_ubend(*p, cfg.n, cfg.degree),
        GeometrySource::PatchFile(path) => GeometryMap::read_patch_file(path),
    }
}

pub fn build_discretization(cfg: &RunConfig) -> Result<Discretization<f64>> {
    cfg.validate()?;
    let geo = build_geometry(cfg)?;
    let options = AfcOptions {
        control_vars: cfg.control_vars.clone(),
        entropy_fix: cfg.entropy_fix,
        prelimit: cfg.prelimit,
        failsafe: cfg.failsafe,
    };
    Discretization::new(geo, cfg.boundary.clone(), GasModel::new(cfg.gamma)?, options)
}

pub fn initial_field(cfg: &RunConfig, disc: &Discretization<f64>) -> Result<SolutionField<f64>> {
    let dim = disc.dim();
    set_initial_condition(&disc.geometry, |x| cfg.initial.eval(&x[..dim], dim), &disc.gas)
}

/// Everything a run produced.
#[derive(Debug)]
pub struct RunReport {
    pub outcome: RunOutcome<f64>,
    /// Algebraic CFL number of the initial and (if admissible) the final field.
    pub cfl: (f64, Option<f64>),
    pub line: Vec<SampleRow>,
    pub files: OutputFiles,
}

/// Runs a configuration without touching the file system.
pub fn simulate(cfg: &RunConfig, hook: impl FnMut(&StepDiagnostics<f64>)) -> Result<(Discretization<f64>, RunOutcome<f64>)> {
    let disc = build_discretization(cfg)?;
    let field = initial_field(cfg, &disc)?;
    let loop_cfg = TimeLoopConfig { timing: cfg.timing, ..TimeLoopConfig::new(cfg.dt, cfg.t_final)? };
    let outcome = timeint::run(&disc, field, cfg.scheme, &loop_cfg, hook);
    Ok((disc, outcome))
}

/// Runs a configuration and writes its outputs to `cfg.output_dir`.
pub fn run_config(cfg: &RunConfig, hook: impl FnMut(&StepDiagnostics<f64>)) -> Result<RunReport> {
    let (disc, outcome) = simulate(cfg, hook)?;
    let cfl = (disc.cfl(&initial_field(cfg, &disc)?, cfg.dt)?, disc.cfl(&outcome.field, cfg.dt).ok());
    let line = sample_line(&outcome.field, &disc.geometry, &cfg.sample_line, cfg.n_samples, &disc.gas)?;
    let grid = sample_grid(&outcome.field, &disc.geometry, cfg.grid, &disc.gas)?;
    let files = write_outputs(&cfg.output_dir, cfg, &line, &grid, &outcome)?;
    Ok(RunReport { outcome, cfl, line, files })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_unit_interval, make_unit_square};

    #[test]
    fn constant_ic_gives_constant_coefficients() {
        let geo = make_unit_square::<f64>([6, 5], 2).unwrap();
        let gas = GasModel::air();
        let prim = Primitive::new(0.7, &[0.2, -0.1], 1.3);
        let f = set_initial_condition(&geo, |_| prim, &gas).unwrap();
        let u = prim.to_state(&gas).to_vars();
        for i in 0..f.n_dofs {
            assert_eq!(f.dof(i), &u[..4]);
        }
        let rows = sample_line(&f, &geo, &SampleLine::Segment { from: [0.0, 0.3], to: [1.0, 0.3] }, 17, &gas).unwrap();
        for r in rows {
            let v = r.values.unwrap();
            assert!((v.rho - 0.7).abs() < 1e-14 && (v.p - 1.3).abs() < 1e-13 && (v.v[0] - 0.2).abs() < 1e-14);
        }
    }

    #[test]
    fn sod_ic_is_two_valued_by_greville_side() {
        let geo = make_unit_square::<f64>([10, 4], 2).unwrap();
        let gas = GasModel::air();
        let ic = InitialCondition::SodX { split: 0.5 };
        let f = set_initial_condition(&geo, |x| ic.eval(&x[..2], 2), &gas).unwrap();
        let grev = geo.basis().greville_points();
        for i in 0..f.n_dofs {
            let expect = if grev[i][0] < 0.5 { 1.0 } else { 0.125 };
            assert_eq!(f.state(i).rho, expect);
        }
    }

    #[test]
    fn linear_density_is_reproduced_in_1d() {
        let geo = make_unit_interval::<f64>(9, 3).unwrap();
        let gas = GasModel::air();
        let f = set_initial_condition(&geo, |x| Primitive::new(1.0 + x[0], &[0.0], 1.0), &gas).unwrap();
        for k in 0..=40 {
            let xi = k as f64 / 40.0;
            let u = evaluate(&f, &geo, &[xi]).unwrap();
            assert!((u.rho - (1.0 + xi)).abs() < 1e-13);
        }
    }

    #[test]
    fn inadmissible_ic_is_rejected() {
        let geo = make_unit_square::<f64>([4, 4], 1).unwrap();
        let gas = GasModel::air();
        assert!(set_initial_condition(&geo, |_| Primitive::new(-1.0, &[0.0, 0.0], 1.0), &gas).is_err());
        assert!(set_initial_condition(&geo, |_| Primitive::new(1.0, &[0.0], 1.0), &gas).is_err());
    }

    #[test]
    fn points_outside_the_patch_are_missing() {
        let geo = make_unit_square::<f64>([5, 5], 2).unwrap();
        let gas = GasModel::air();
        let f = set_initial_condition(&geo, |_| Primitive::new(1.0, &[0.0, 0.0], 1.0), &gas).unwrap();
        let rows = sample_line(&f, &geo, &SampleLine::Segment { from: [-0.5, 0.5], to: [0.5, 0.5] }, 11, &gas).unwrap();
        assert!(rows[0].values.is_none());
        assert!(rows[10].values.is_some());
        assert!((rows[10].s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn centerline_is_uniform_in_arc_length() {
        let p = geometry::UBendParams::default();
        let geo = geometry::make_ubend::<f64>(p, [30, 6], 2).unwrap();
        let gas = GasModel::air();
        let f = set_initial_condition(&geo, |_| Primitive::new(1.0, &[0.0, 0.0], 1.0), &gas).unwrap();
        let rows = sample_line(&f, &geo, &SampleLine::Centerline, 101, &gas).unwrap();
        let total = rows.last().unwrap().s;
        assert!((total - p.centerline_length()).abs() < 1e-2 * total);
        for w in rows.windows(2) {
            let d = ((w[1].x[0] - w[0].x[0]).powi(2) + (w[1].x[1] - w[0].x[1]).powi(2)).sqrt();
            assert!((d - total / 100.0).abs() < 1e-3 * total / 100.0 + 1e-6);
        }
    }
}
