//! Explicit SSP-RK3 time stepping and the time loop for the three schemes.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::afc::{self, Discretization, SolutionField};
use crate::assembly::{LumpedMass, SparseOperator};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Applies `M⁻¹` to an `N × nvar` right-hand side.
pub trait MassSolver<T> {
    fn solve(&self, rhs: &[T], nvar: usize, out: &mut [T]);
}

impl<T: Real> MassSolver<T> for LumpedMass<T> {
    fn solve(&self, rhs: &[T], nvar: usize, out: &mut [T]) {
        for (i, &m) in self.m.iter().enumerate() {
            for k in 0..nvar {
                out[i * nvar + k] = rhs[i * nvar + k] / m;
            }
        }
    }
}

/// Consistent mass inverted by lumped-preconditioned Richardson iteration
/// `x ← x + M_L⁻¹ (b − M_C x)`, starting from `M_L⁻¹ b`.
pub struct ConsistentMass<'a, T> {
    pub mass: &'a SparseOperator<T>,
    pub lumped: &'a LumpedMass<T>,
    pub iterations: usize,
}

impl<T: Real> MassSolver<T> for ConsistentMass<'_, T> {
    fn solve(&self, rhs: &[T], nvar: usize, out: &mut [T]) {
        let n = self.lumped.len();
        self.lumped.solve(rhs, nvar, out);
        let mut comp = vec![T::zero(); n];
        for _ in 0..self.iterations {
            for k in 0..nvar {
                for i in 0..n {
                    comp[i] = out[i * nvar + k];
                }
                let mx = self.mass.matvec(&comp);
                for i in 0..n {
                    out[i * nvar + k] += (rhs[i * nvar + k] - mx[i]) / self.lumped.m[i];
                }
            }
        }
    }
}

/// `M U⁽¹⁾ = M Uⁿ + Δt R(Uⁿ)`, `M U⁽²⁾ = ¾ M Uⁿ + ¼ (M U⁽¹⁾ + Δt R(U⁽¹⁾))`,
/// `M Uⁿ⁺¹ = ⅓ M Uⁿ + ⅔ (M U⁽²⁾ + Δt R(U⁽²⁾))`.
pub fn ssprk3_step<T: Real, M: MassSolver<T>>(
    u: &[T],
    nvar: usize,
    mut rhs: impl FnMut(&[T]) -> Result<Vec<T>>,
    mass: &M,
    dt: T,
) -> Result<Vec<T>> {
    let n = u.len();
    let mut du = vec![T::zero(); n];
    let mut stage = |k: usize, x: &[T], du: &mut [T]| -> Result<()> {
        let r = rhs(x).map_err(|e| Error::Stage { stage: k, source: Box::new(e) })?;
        mass.solve(&r, nvar, du);
        Ok(())
    };
    stage(1, u, &mut du)?;
    let u1: Vec<T> = u.iter().zip(&du).map(|(&a, &d)| a + dt * d).collect();
    stage(2, &u1, &mut du)?;
    // ¾a + ¼b written as a + ¼(b − a), so that R ≡ 0 leaves U bitwise unchanged
    let c4 = T::lit(0.25);
    let u2: Vec<T> = (0..n).map(|i| u[i] + c4 * (u1[i] + dt * du[i] - u[i])).collect();
    stage(3, &u2, &mut du)?;
    let c23 = T::two() / T::lit(3.0);
    Ok((0..n).map(|i| u[i] + c23 * (u2[i] + dt * du[i] - u[i])).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Consistent-mass group Galerkin, no stabilization.
    Galerkin,
    /// Lumped mass plus Roe-type artificial viscosity.
    LowOrder,
    /// Linearized flux-corrected transport.
    Fct,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Galerkin => "galerkin",
            Scheme::LowOrder => "low-order",
            Scheme::Fct => "fct",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "galerkin" => Ok(Scheme::Galerkin),
            "low-order" | "low_order" | "loworder" => Ok(Scheme::LowOrder),
            "fct" => Ok(Scheme::Fct),
            other => Err(Error::Config(format!("unknown scheme '{other}'"))),
        }
    }
}

/// Richardson sweeps per stage for the consistent-mass Galerkin scheme.
pub const GALERKIN_MASS_ITERATIONS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeLoopConfig<T> {
    pub dt: T,
    pub t_final: T,
    /// Record wall-clock time per step (makes diagnostics non-reproducible).
    pub timing: bool,
}

impl<T: Real> TimeLoopConfig<T> {
    pub fn new(dt: T, t_final: T) -> Result<Self> {
        if !(dt > T::zero()) || !(t_final >= T::zero()) || !dt.is_finite() || !t_final.is_finite() {
            return Err(Error::Config(format!("invalid time step {dt} or final time {t_final}")));
        }
        if t_final > T::zero() && dt > t_final {
            return Err(Error::Config(format!("time step {dt} exceeds final time {t_final}")));
        }
        Ok(Self { dt, t_final, timing: false })
    }

    /// `ceil(T / Δt)`, ignoring a relative excess below `1e-9` from rounding of the ratio.
    pub fn n_steps(&self) -> usize {
        let ratio = (self.t_final / self.dt).to_f64_lossy();
        let floor = ratio.floor();
        if ratio - floor <= 1e-9 * ratio.max(1.0) {
            floor as usize
        } else {
            floor as usize + 1
        }
    }

    /// Time after step `k` (1-based); the last step lands exactly on `t_final`.
    pub fn time_after(&self, k: usize) -> T {
        if k >= self.n_steps() {
            self.t_final
        } else {
            (T::from_usize_lossy(k) * self.dt).min(self.t_final)
        }
    }
}

/// One row of the per-step diagnostics series.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepDiagnostics<T> {
    pub step: usize,
    pub t: T,
    pub min_rho: T,
    pub max_rho: T,
    pub min_p: T,
    pub max_p: T,
    pub mass: T,
    pub energy: T,
    pub min_alpha: T,
    pub mean_alpha: T,
    pub ms_per_step: f64,
}

impl<T: Real> StepDiagnostics<T> {
    pub fn measure(disc: &Discretization<T>, field: &SolutionField<T>, step: usize, alpha: (T, T), ms: f64) -> Self {
        let nv = field.nvar();
        let mut min_rho = T::infinity();
        let mut max_rho = T::neg_infinity();
        let mut min_p = T::infinity();
        let mut max_p = T::neg_infinity();
        for i in 0..field.n_dofs {
            let u = field.state(i);
            let p = u.pressure_unchecked(&disc.gas);
            min_rho = min_rho.min(u.rho);
            max_rho = max_rho.max(u.rho);
            min_p = min_p.min(p);
            max_p = max_p.max(p);
        }
        let totals = field.totals(&disc.lumped);
        Self {
            step,
            t: field.t,
            min_rho,
            max_rho,
            min_p,
            max_p,
            mass: totals[0],
            energy: totals[nv - 1],
            min_alpha: alpha.0,
            mean_alpha: alpha.1,
            ms_per_step: ms,
        }
    }
}

/// Final field and diagnostics; `failure` holds the time and cause of an aborted run.
#[derive(Debug)]
pub struct RunOutcome<T> {
    pub field: SolutionField<T>,
    pub diagnostics: Vec<StepDiagnostics<T>>,
    pub failure: Option<(T, Error)>,
}

impl<T> RunOutcome<T> {
    pub fn is_success(&self) -> bool {
        self.failure.is_none()
    }
}

/// Advances one step of the chosen scheme; returns the new field and `(min α, mean α)`.
pub fn advance<T: Real>(disc: &Discretization<T>, field: &SolutionField<T>, scheme: Scheme, dt: T) -> Result<(SolutionField<T>, (T, T))> {
    let nvar = field.nvar();
    let (dim, n, t) = (field.dim, field.n_dofs, field.t);
    match scheme {
        Scheme::Fct => {
            let step = afc::fct_step(disc, field, dt)?;
            let alpha = (step.min_alpha(), step.mean_alpha());
            Ok((step.field, alpha))
        }
        Scheme::LowOrder => {
            let pred = afc::predictor_step(disc, field, dt)?;
            Ok((pred.u_tilde, (T::zero(), T::zero())))
        }
        Scheme::Galerkin => {
            let mass = ConsistentMass { mass: &disc.mass, lumped: &disc.lumped, iterations: GALERKIN_MASS_ITERATIONS };
            let next = ssprk3_step(
                &field.coeffs,
                nvar,
                |u: &[T]| afc::galerkin_residual(disc, &SolutionField { dim, n_dofs: n, coeffs: u.to_vec(), t }),
                &mass,
                dt,
            )?;
            Ok((SolutionField { dim, n_dofs: n, coeffs: next, t: t + dt }, (T::one(), T::one())))
        }
    }
}

/// Marches `field` to `t_final`; `hook` sees every diagnostics record as it is produced.
pub fn run<T: Real>(
    disc: &Discretization<T>,
    mut field: SolutionField<T>,
    scheme: Scheme,
    config: &TimeLoopConfig<T>,
    mut hook: impl FnMut(&StepDiagnostics<T>),
) -> RunOutcome<T> {
    let steps = config.n_steps();
    let mut diagnostics = Vec::with_capacity(steps);
    for k in 1..=steps {
        let t_next = config.time_after(k);
        let dt = t_next - field.t;
        let start = Instant::now();
        match advance(disc, &field, scheme, dt) {
            Ok((mut next, alpha)) => {
                next.t = t_next;
                let ms = if config.timing { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
                let rec = StepDiagnostics::measure(disc, &next, k, alpha, ms);
                hook(&rec);
                diagnostics.push(rec);
                field = next;
            }
            Err(e) => {
                let t = field.t;
                return RunOutcome { field, diagnostics, failure: Some((t, e)) };
            }
        }
    }
    RunOutcome { field, diagnostics, failure: None }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::afc::AfcOptions;
    use crate::bc::{BoundaryKind, BoundarySpec};
    use crate::euler::{GasModel, Primitive};
    use crate::geometry::make_unit_square;

    struct Identity;
    impl MassSolver<f64> for Identity {
        fn solve(&self, rhs: &[f64], _nvar: usize, out: &mut [f64]) {
            out.copy_from_slice(rhs);
        }
    }

    fn scalar_step(lambda: f64, dt: f64, u: f64) -> f64 {
        ssprk3_step(&[u], 1, |x: &[f64]| Ok(vec![lambda * x[0]]), &Identity, dt).unwrap()[0]
    }

    #[test]
    fn zero_rhs_is_identity() {
        let u = vec![1.0, -2.0, 3.5];
        let next = ssprk3_step(&u, 1, |x: &[f64]| Ok(vec![0.0; x.len()]), &Identity, 0.3).unwrap();
        assert_eq!(next, u);
    }

    #[test]
    fn amplification_factor() {
        for &z in &[-2.5, -1.0, -0.1, 0.0, 0.3, 1.0] {
            let amp = scalar_step(z, 1.0, 1.0);
            let poly = 1.0 + z + z * z / 2.0 + z * z * z / 6.0;
            assert!((amp - poly).abs() <= 1e-14 * poly.abs().max(1.0), "z = {z}");
        }
    }

    #[test]
    fn third_order_convergence() {
        let solve = |n: usize| {
            let dt = 1.0 / n as f64;
            let mut u = 1.0;
            for _ in 0..n {
                u = ssprk3_step(&[u], 1, |x: &[f64]| Ok(vec![-x[0] + (x[0] * x[0]).sin() * 0.0]), &Identity, dt).unwrap()[0];
            }
            (u - (-1.0f64).exp()).abs()
        };
        let (e1, e2) = (solve(20), solve(40));
        let order = (e1 / e2).log2();
        assert!(order >= 2.99, "order {order}");
    }

    #[test]
    fn dense_linear_system_oracle() {
        // u' = M⁻¹ K u with a lumped diagonal M: one step equals (I + Z + Z²/2 + Z³/6) u
        let m = LumpedMass { m: vec![0.5, 1.0, 2.0] };
        let k = [[-1.0, 0.5, 0.0], [0.25, -1.0, 0.75], [0.0, 0.3, -0.6]];
        let dt = 0.1;
        let u0 = [1.0, 2.0, -1.0];
        let next = ssprk3_step(
            &u0,
            1,
            |x: &[f64]| Ok((0..3).map(|r| (0..3).map(|c| k[r][c] * x[c]).sum()).collect()),
            &m,
            dt,
        )
        .unwrap();
        let z: Vec<Vec<f64>> = (0..3).map(|r| (0..3).map(|c| dt * k[r][c] / m.m[r]).collect()).collect();
        let apply = |v: &[f64]| -> Vec<f64> { (0..3).map(|r| (0..3).map(|c| z[r][c] * v[c]).sum()).collect() };
        let z1 = apply(&u0);
        let z2 = apply(&z1);
        let z3 = apply(&z2);
        for r in 0..3 {
            let expect = u0[r] + z1[r] + z2[r] / 2.0 + z3[r] / 6.0;
            assert!((next[r] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn stage_errors_carry_the_stage() {
        let mut calls = 0;
        let err = ssprk3_step(
            &[1.0],
            1,
            |_x: &[f64]| {
                calls += 1;
                if calls == 2 {
                    Err(Error::InvalidState("boom".into()))
                } else {
                    Ok(vec![1.0])
                }
            },
            &Identity,
            0.1,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Stage { stage: 2, .. }));
    }

    #[test]
    fn step_count_and_truncation() {
        let c = TimeLoopConfig::new(0.0005, 0.231).unwrap();
        assert_eq!(c.n_steps(), 462);
        assert_eq!(c.time_after(462), 0.231);
        let c = TimeLoopConfig::<f64>::new(0.1, 0.25).unwrap();
        assert_eq!(c.n_steps(), 3);
        assert!((c.time_after(2) - 0.2).abs() < 1e-15);
        assert_eq!(c.time_after(3), 0.25);
        assert!(TimeLoopConfig::new(0.5, 0.25).is_err());
        assert_eq!(TimeLoopConfig::new(0.1, 0.0).unwrap().n_steps(), 0);
    }

    fn small_problem() -> (Discretization<f64>, SolutionField<f64>) {
        let geo = make_unit_square([10, 10], 2).unwrap();
        let gas = GasModel::air();
        let disc = Discretization::new(geo, BoundarySpec::uniform(2, BoundaryKind::SlipWall), gas, AfcOptions::default()).unwrap();
        let grev = disc.geometry.basis().greville_points();
        let mut f = SolutionField::zeros(2, disc.n_dofs());
        for (i, g) in grev.iter().enumerate() {
            let p = if g[0] < 0.5 { Primitive::new(1.0, &[0.0, 0.0], 1.0) } else { Primitive::new(0.125, &[0.0, 0.0], 0.1) };
            f.set_state(i, &p.to_state(&gas));
        }
        (disc, f)
    }

    #[test]
    fn run_examples() {
        let (disc, f) = small_problem();
        let out = run(&disc, f.clone(), Scheme::Fct, &TimeLoopConfig::new(0.01, 0.0).unwrap(), |_| {});
        assert!(out.is_success());
        assert_eq!(out.field, f);
        assert!(out.diagnostics.is_empty());

        let cfg = TimeLoopConfig::new(0.004, 0.03).unwrap();
        let a = run(&disc, f.clone(), Scheme::Fct, &cfg, |_| {});
        let b = run(&disc, f.clone(), Scheme::Fct, &cfg, |_| {});
        assert!(a.is_success());
        assert_eq!(a.diagnostics.len(), 8);
        assert_eq!(a.diagnostics.last().unwrap().t, 0.03);
        assert_eq!(a.diagnostics, b.diagnostics);
        assert_eq!(a.field.coeffs, b.field.coeffs);
    }

    #[test]
    fn low_order_equals_fct_without_correction() {
        let (disc, f) = small_problem();
        let (lo, _) = advance(&disc, &f, Scheme::LowOrder, 0.004).unwrap();
        let step = afc::fct_step(&disc, &f, 0.004).unwrap();
        let zero = vec![0.0; step.workspace.fluxes.len()];
        let forced = afc::correct(&step.predicted, &zero, &step.workspace.fluxes, &disc.edges, &disc.lumped, 0.004);
        assert_eq!(lo.coeffs, forced.coeffs);
    }
}
