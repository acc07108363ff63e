//! Algebraic flux correction: edge-based Galerkin and low-order residuals, the linearized FCT
//! predictor, antidiffusive fluxes, Zalesak limiting on density and pressure, and the corrected
//! update.
//!
//! Fields store `N × nvar` coefficients row-major (DOF-major). Edge loops run in parallel and
//! are reduced sequentially in edge order, so results do not depend on the thread count.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::assembly::{self, BoundaryTrace, Edge, EdgeSet, LumpedMass, SparseOperator};
use crate::bc::{self, BoundarySpec};
use crate::error::{Error, Result};
use crate::euler::{self, FluxTensor, GasModel, State};
use crate::geometry::{build_quadrature, GeometryMap, QuadratureRule, Side};
use crate::linalg::{self, VarMat, VarVec};
use crate::scalar::Real;
use crate::timeint::{self, MassSolver};

/// Coefficients `U_j` of the conservative variables and the time they belong to.
#[derive(Clone, Debug, PartialEq)]
pub struct SolutionField<T> {
    pub dim: usize,
    pub n_dofs: usize,
    pub coeffs: Vec<T>,
    pub t: T,
}

impl<T: Real> SolutionField<T> {
    pub fn zeros(dim: usize, n_dofs: usize) -> Self {
        Self { dim, n_dofs, coeffs: vec![T::zero(); n_dofs * (dim + 2)], t: T::zero() }
    }

    pub fn constant(dim: usize, n_dofs: usize, u: &State<T>) -> Self {
        let mut f = Self::zeros(dim, n_dofs);
        for i in 0..n_dofs {
            f.set_state(i, u);
        }
        f
    }

    pub fn from_coeffs(dim: usize, coeffs: Vec<T>, t: T) -> Result<Self> {
        let nvar = dim + 2;
        if !coeffs.len().is_multiple_of(nvar) {
            return Err(Error::InvalidState(format!("{} coefficients do not split into {nvar} variables", coeffs.len())));
        }
        Ok(Self { dim, n_dofs: coeffs.len() / nvar, coeffs, t })
    }

    #[inline]
    pub fn nvar(&self) -> usize {
        self.dim + 2
    }

    #[inline]
    pub fn dof(&self, i: usize) -> &[T] {
        let nv = self.nvar();
        &self.coeffs[i * nv..(i + 1) * nv]
    }

    #[inline]
    pub fn state(&self, i: usize) -> State<T> {
        State::from_vars(self.dof(i), self.dim)
    }

    pub fn set_state(&mut self, i: usize, u: &State<T>) {
        let nv = self.nvar();
        self.coeffs[i * nv..(i + 1) * nv].copy_from_slice(&u.to_vars()[..nv]);
    }

    /// `Σ_i m_i U_i` per variable.
    pub fn totals(&self, lumped: &LumpedMass<T>) -> VarVec<T> {
        let nv = self.nvar();
        let mut out = linalg::zero_vec();
        for (i, &m) in lumped.m.iter().enumerate() {
            for k in 0..nv {
                out[k] += m * self.coeffs[i * nv + k];
            }
        }
        out
    }

    /// First DOF whose coefficient state has non-positive density or pressure.
    pub fn check_admissible(&self, gas: &GasModel<T>) -> Result<()> {
        for i in 0..self.n_dofs {
            let u = self.state(i);
            let p = u.pressure_unchecked(gas);
            let reason = if !(u.rho > T::zero()) || !u.rho.is_finite() {
                format!("density {}", u.rho)
            } else if !(p > T::zero()) || !p.is_finite() {
                format!("pressure {p}")
            } else {
                continue;
            };
            return Err(Error::InadmissibleDof { dof: i, time: self.t.to_f64_lossy(), reason });
        }
        Ok(())
    }

    fn check_density(&self) -> Result<()> {
        for i in 0..self.n_dofs {
            let rho = self.coeffs[i * self.nvar()];
            if !(rho > T::zero()) || !rho.is_finite() {
                return Err(Error::InadmissibleDof {
                    dof: i,
                    time: self.t.to_f64_lossy(),
                    reason: format!("density {rho}"),
                });
            }
        }
        Ok(())
    }
}

/// Scalar quantity whose coefficient values the limiter keeps within local bounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ControlVariable {
    Density,
    Pressure,
}

impl ControlVariable {
    pub fn name(self) -> &'static str {
        match self {
            ControlVariable::Density => "density",
            ControlVariable::Pressure => "pressure",
        }
    }

    pub fn eval<T: Real>(self, u: &State<T>, gas: &GasModel<T>) -> T {
        match self {
            ControlVariable::Density => u.rho,
            ControlVariable::Pressure => u.pressure_unchecked(gas),
        }
    }
}

impl fmt::Display for ControlVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ControlVariable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "density" | "rho" => Ok(ControlVariable::Density),
            "pressure" | "p" => Ok(ControlVariable::Pressure),
            other => Err(Error::Config(format!("unknown control variable '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AfcOptions<T> {
    pub control_vars: Vec<ControlVariable>,
    /// Harten floor `ε ĉ` on `|λ_k|`; `None` uses `|Λ|` unmodified.
    pub entropy_fix: Option<T>,
    /// Cancel antidiffusive fluxes that point down the density gradient before limiting.
    pub prelimit: bool,
    /// Reduce correction factors around DOFs whose nonlinear control variables leave their bounds.
    pub failsafe: bool,
}

impl<T: Real> Default for AfcOptions<T> {
    fn default() -> Self {
        Self {
            control_vars: vec![ControlVariable::Density, ControlVariable::Pressure],
            entropy_fix: None,
            prelimit: false,
            failsafe: true,
        }
    }
}

/// Everything assembled once per run: patch, operators, edges, boundary traces and physics.
#[derive(Clone, Debug)]
pub struct Discretization<T> {
    pub geometry: GeometryMap<T>,
    pub quadrature: QuadratureRule<T>,
    pub mass: SparseOperator<T>,
    pub lumped: LumpedMass<T>,
    pub divergence: Vec<SparseOperator<T>>,
    pub edges: EdgeSet<T>,
    pub traces: Vec<BoundaryTrace<T>>,
    pub bc: BoundarySpec<T>,
    pub gas: GasModel<T>,
    pub options: AfcOptions<T>,
}

impl<T: Real> Discretization<T> {
    pub fn new(geometry: GeometryMap<T>, bc: BoundarySpec<T>, gas: GasModel<T>, options: AfcOptions<T>) -> Result<Self> {
        if bc.dim() != geometry.dim() {
            return Err(Error::Config("boundary specification does not match the patch dimension".into()));
        }
        bc.validate()?;
        let quadrature = build_quadrature(geometry.basis(), geometry.default_points_per_span())?;
        let (mass, divergence) = assembly::assemble_operators(&geometry, &quadrature)?;
        let lumped = assembly::lump_mass(&mass)?;
        let edges = assembly::build_edges(geometry.basis(), &mass, &divergence)?;
        let traces = Side::all(geometry.dim())
            .map(|s| assembly::assemble_boundary(&geometry, &quadrature, s))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { geometry, quadrature, mass, lumped, divergence, edges, traces, bc, gas, options })
    }

    pub fn dim(&self) -> usize {
        self.geometry.dim()
    }

    pub fn n_dofs(&self) -> usize {
        self.lumped.len()
    }

    pub fn nvar(&self) -> usize {
        self.dim() + 2
    }

    /// Algebraic CFL number `Δt max_i (Σ_j |e_ij| λ_ij) / m_i` for a field.
    pub fn cfl(&self, field: &SolutionField<T>, dt: T) -> Result<T> {
        let mut rate = vec![T::zero(); self.n_dofs()];
        for e in &self.edges.edges {
            if e.norm_e == T::zero() {
                continue;
            }
            let (ui, uj) = (field.state(e.i), field.state(e.j));
            let s = euler::max_wave_speed(&ui, &e.dir, &self.gas)?.max(euler::max_wave_speed(&uj, &e.dir, &self.gas)?);
            rate[e.i] += e.norm_e * s;
            rate[e.j] += e.norm_e * s;
        }
        Ok(rate.iter().zip(&self.lumped.m).fold(T::zero(), |c, (&r, &m)| c.max(dt * r / m)))
    }
}

/// Nodal fluxes `F_j = F(U_j)` of the group formulation.
pub fn nodal_fluxes<T: Real>(field: &SolutionField<T>, gas: &GasModel<T>) -> Result<Vec<FluxTensor<T>>> {
    field.check_density()?;
    Ok((0..field.n_dofs).into_par_iter().map(|i| euler::flux_unchecked(&field.state(i), gas)).collect())
}

#[inline]
fn dot_flux<T: Real>(w: &[T], f: &FluxTensor<T>, nvar: usize) -> VarVec<T> {
    let mut out = linalg::zero_vec();
    for (l, &wl) in w.iter().enumerate().take(f.dim) {
        for k in 0..nvar {
            out[k] += wl * f.columns[l][k];
        }
    }
    out
}

/// `e_ij·(F_j − F_i)`: the Galerkin edge term, added to rows `i` and `j` alike.
#[inline]
fn galerkin_edge<T: Real>(e: &Edge<T>, fluxes: &[FluxTensor<T>], nvar: usize) -> VarVec<T> {
    let (fi, fj) = (&fluxes[e.i], &fluxes[e.j]);
    let mut out = linalg::zero_vec();
    for l in 0..fi.dim {
        for k in 0..nvar {
            out[k] += e.e_ij[l] * (fj.columns[l][k] - fi.columns[l][k]);
        }
    }
    out
}

/// `Σ_{j≠i} e_ij·(F_j − F_i)`; vanishes identically for a constant field.
pub fn interior_galerkin_term<T: Real>(edges: &EdgeSet<T>, fluxes: &[FluxTensor<T>]) -> Vec<T> {
    let nvar = edges.dim + 2;
    let terms: Vec<VarVec<T>> = edges.edges.par_iter().map(|e| galerkin_edge(e, fluxes, nvar)).collect();
    let mut r = vec![T::zero(); edges.n_dofs * nvar];
    for (e, g) in edges.edges.iter().zip(&terms) {
        for k in 0..nvar {
            r[e.i * nvar + k] += g[k];
            r[e.j * nvar + k] += g[k];
        }
    }
    r
}

/// `Σ_j s_ij·F_j + σ_i·F_i`: the part of `Σ_j c_ji·F_j` not captured by the edge differences.
pub fn boundary_consistency_term<T: Real>(edges: &EdgeSet<T>, fluxes: &[FluxTensor<T>]) -> Vec<T> {
    let nvar = edges.dim + 2;
    let mut r = vec![T::zero(); edges.n_dofs * nvar];
    add_boundary_consistency(edges, fluxes, &mut r);
    r
}

fn add_boundary_consistency<T: Real>(edges: &EdgeSet<T>, fluxes: &[FluxTensor<T>], r: &mut [T]) {
    let nvar = edges.dim + 2;
    let d = edges.dim;
    for bp in &edges.boundary_pairs {
        let a = dot_flux(&bp.s_ij[..d], &fluxes[bp.j], nvar);
        for k in 0..nvar {
            r[bp.i * nvar + k] += a[k];
        }
        if bp.i != bp.j {
            let b = dot_flux(&bp.s_ij[..d], &fluxes[bp.i], nvar);
            for k in 0..nvar {
                r[bp.j * nvar + k] += b[k];
            }
        }
    }
    for (i, sigma) in &edges.sigma {
        let a = dot_flux(&sigma[..d], &fluxes[*i], nvar);
        for k in 0..nvar {
            r[i * nvar + k] += a[k];
        }
    }
}

/// Boundary flux term `S` of the discretization's boundary specification.
pub fn boundary_term<T: Real>(disc: &Discretization<T>, field: &SolutionField<T>) -> Result<Vec<T>> {
    bc::assemble_boundary_term(field, &disc.bc, &disc.traces, &disc.gas, disc.options.entropy_fix)
}

/// Right-hand side of `M dU/dt = R(U)` for the unstabilized group Galerkin scheme:
/// edge differences, boundary consistency, minus the boundary flux `S`.
pub fn galerkin_residual<T: Real>(disc: &Discretization<T>, field: &SolutionField<T>) -> Result<Vec<T>> {
    let fluxes = nodal_fluxes(field, &disc.gas)?;
    let mut r = interior_galerkin_term(&disc.edges, &fluxes);
    add_boundary_consistency(&disc.edges, &fluxes, &mut r);
    let s = boundary_term(disc, field)?;
    for (a, b) in r.iter_mut().zip(&s) {
        *a -= *b;
    }
    Ok(r)
}

/// `D_ij (u_j − u_i)` with `D_ij = |e_ij| R |Λ| R⁻¹` at the Roe mean of `u_i`, `u_j`.
#[inline]
fn viscous_edge<T: Real>(e: &Edge<T>, ui: &State<T>, uj: &State<T>, gas: &GasModel<T>, fix: Option<T>) -> Result<VarVec<T>> {
    if e.norm_e == T::zero() {
        return Ok(linalg::zero_vec());
    }
    let nvar = ui.nvar();
    let roe = euler::roe_average_unchecked(ui, uj, gas)?;
    let es = euler::eig_decompose_unchecked(&roe, &e.dir, gas);
    let mut scale = es.abs_lambda(fix.map(|eps| eps * roe.c));
    for s in scale.iter_mut().take(nvar) {
        *s *= e.norm_e;
    }
    let (a, b) = (ui.to_vars(), uj.to_vars());
    let mut du = linalg::zero_vec();
    for k in 0..nvar {
        du[k] = b[k] - a[k];
    }
    Ok(es.apply_scaled(&scale, &du))
}

/// The artificial viscosity tensor of an edge as a dense matrix.
pub fn viscosity_matrix<T: Real>(
    edge: &Edge<T>,
    ui: &State<T>,
    uj: &State<T>,
    gas: &GasModel<T>,
    entropy_fix: Option<T>,
) -> Result<VarMat<T>> {
    let nvar = ui.nvar();
    if edge.norm_e == T::zero() {
        return Ok(linalg::zero_mat());
    }
    let roe = euler::roe_average(ui, uj, gas)?;
    let es = euler::eig_decompose(&roe, &edge.dir[..ui.dim], gas)?;
    let lam = es.abs_lambda(entropy_fix.map(|eps| eps * roe.c));
    let mut d = linalg::zero_mat();
    for c in 0..nvar {
        let mut unit = linalg::zero_vec();
        unit[c] = T::one();
        let col = es.apply_scaled(&lam, &unit);
        for r in 0..nvar {
            d[r][c] = edge.norm_e * col[r];
        }
    }
    Ok(d)
}

/// `Σ_{j≠i} D_ij (U_j − U_i)` as an `N × nvar` array.
fn viscous_term<T: Real>(edges: &EdgeSet<T>, field: &SolutionField<T>, gas: &GasModel<T>, fix: Option<T>) -> Result<Vec<T>> {
    let nvar = field.nvar();
    let terms = edges
        .edges
        .par_iter()
        .map(|e| viscous_edge(e, &field.state(e.i), &field.state(e.j), gas, fix))
        .collect::<Result<Vec<_>>>()?;
    let mut r = vec![T::zero(); field.n_dofs * nvar];
    for (e, v) in edges.edges.iter().zip(&terms) {
        for k in 0..nvar {
            r[e.i * nvar + k] += v[k];
            r[e.j * nvar + k] -= v[k];
        }
    }
    Ok(r)
}

/// Low-order right-hand side `R̃ = R + Σ_{j≠i} D_ij (U_j − U_i)`.
pub fn low_order_residual<T: Real>(disc: &Discretization<T>, field: &SolutionField<T>) -> Result<Vec<T>> {
    field.check_admissible(&disc.gas)?;
    let mut r = galerkin_residual(disc, field)?;
    let v = viscous_term(&disc.edges, field, &disc.gas, disc.options.entropy_fix)?;
    for (a, b) in r.iter_mut().zip(&v) {
        *a += *b;
    }
    Ok(r)
}

/// Predicted solution `Ũ` and its rate `U̇ ≈ M_L⁻¹ R̃(Ũ)`.
#[derive(Clone, Debug)]
pub struct Prediction<T> {
    pub u_tilde: SolutionField<T>,
    pub u_dot: Vec<T>,
}

/// One SSP-RK3 step of the low-order scheme `M_L dŨ/dt = R̃(Ũ)` from `field`.
pub fn predictor_step<T: Real>(disc: &Discretization<T>, field: &SolutionField<T>, dt: T) -> Result<Prediction<T>> {
    if !(dt > T::zero()) {
        return Err(Error::Config(format!("time step {dt} must be positive")));
    }
    let (dim, t0) = (field.dim, field.t);
    let next = timeint::ssprk3_step(
        &field.coeffs,
        field.nvar(),
        |u: &[T]| low_order_residual(disc, &SolutionField { dim, n_dofs: field.n_dofs, coeffs: u.to_vec(), t: t0 }),
        &disc.lumped,
        dt,
    )?;
    let u_tilde = SolutionField { dim, n_dofs: field.n_dofs, coeffs: next, t: t0 + dt };
    let rate = low_order_residual(disc, &u_tilde)?;
    let mut u_dot = vec![T::zero(); rate.len()];
    disc.lumped.solve(&rate, field.nvar(), &mut u_dot);
    Ok(Prediction { u_tilde, u_dot })
}

/// `F_ij = m_ij (U̇_i − U̇_j) + D̃_ij (Ũ_i − Ũ_j)`, one entry per edge (`F_ji = −F_ij`).
pub fn antidiffusive_fluxes<T: Real>(disc: &Discretization<T>, u_tilde: &SolutionField<T>, u_dot: &[T]) -> Result<Vec<VarVec<T>>> {
    u_tilde.check_admissible(&disc.gas)?;
    let nvar = u_tilde.nvar();
    let (gas, fix) = (&disc.gas, disc.options.entropy_fix);
    disc.edges
        .edges
        .par_iter()
        .map(|e| {
            // D̃ (Ũ_j − Ũ_i), so the sign flips below
            let v = viscous_edge(e, &u_tilde.state(e.i), &u_tilde.state(e.j), gas, fix)?;
            let mut f = linalg::zero_vec();
            for k in 0..nvar {
                f[k] = e.m_ij * (u_dot[e.i * nvar + k] - u_dot[e.j * nvar + k]) - v[k];
            }
            Ok(f)
        })
        .collect()
}

/// Control variable values at the DOF coefficients.
pub fn control_values<T: Real>(field: &SolutionField<T>, var: ControlVariable, gas: &GasModel<T>) -> Vec<T> {
    (0..field.n_dofs).map(|i| var.eval(&field.state(i), gas)).collect()
}

/// Local bounds over the stencil `{j : m_ij ≠ 0}`, which includes `i` itself.
pub fn compute_bounds<T: Real>(values: &[T], edges: &EdgeSet<T>) -> (Vec<T>, Vec<T>) {
    let mut lo = values.to_vec();
    let mut hi = values.to_vec();
    for e in &edges.edges {
        let (a, b) = (values[e.i], values[e.j]);
        lo[e.i] = lo[e.i].min(b);
        hi[e.i] = hi[e.i].max(b);
        lo[e.j] = lo[e.j].min(a);
        hi[e.j] = hi[e.j].max(a);
    }
    (lo, hi)
}

/// Antidiffusive flux of a control variable. Pressure uses the linearization about the edge's
/// Roe mean: `(γ−1)(F_E − v̂·F_m + ½|v̂|² F_ρ)`.
pub fn control_fluxes<T: Real>(
    var: ControlVariable,
    fluxes: &[VarVec<T>],
    u_tilde: &SolutionField<T>,
    edges: &EdgeSet<T>,
    gas: &GasModel<T>,
) -> Result<Vec<T>> {
    let d = u_tilde.dim;
    match var {
        ControlVariable::Density => Ok(fluxes.iter().map(|f| f[0]).collect()),
        ControlVariable::Pressure => edges
            .edges
            .par_iter()
            .zip(fluxes)
            .map(|(e, f)| {
                let roe = euler::roe_average_unchecked(&u_tilde.state(e.i), &u_tilde.state(e.j), gas)?;
                let mut vm = T::zero();
                let mut q = T::zero();
                for l in 0..d {
                    vm += roe.v[l] * f[1 + l];
                    q += roe.v[l] * roe.v[l];
                }
                Ok(gas.gm1() * (f[d + 1] - vm + T::half() * q * f[0]))
            })
            .collect(),
    }
}

/// Zalesak's sums, budgets, ratios and resulting edge factors for one control variable.
#[derive(Clone, Debug, Default)]
pub struct ZalesakFactors<T> {
    pub p_plus: Vec<T>,
    pub p_minus: Vec<T>,
    pub q_plus: Vec<T>,
    pub q_minus: Vec<T>,
    pub r_plus: Vec<T>,
    pub r_minus: Vec<T>,
    pub alpha: Vec<T>,
}

/// Zalesak limiter for scalar edge fluxes `f_ij` (flux into `i`; `f_ji = −f_ij`).
pub fn zalesak<T: Real>(
    flux: &[T],
    edges: &EdgeSet<T>,
    values: &[T],
    lo: &[T],
    hi: &[T],
    lumped: &LumpedMass<T>,
    dt: T,
) -> ZalesakFactors<T> {
    let n = values.len();
    let mut p_plus = vec![T::zero(); n];
    let mut p_minus = vec![T::zero(); n];
    for (e, &f) in edges.edges.iter().zip(flux) {
        if f > T::zero() {
            p_plus[e.i] += f;
            p_minus[e.j] -= f;
        } else {
            p_minus[e.i] += f;
            p_plus[e.j] -= f;
        }
    }
    let q_plus: Vec<T> = (0..n).map(|i| lumped.m[i] * (hi[i] - values[i]) / dt).collect();
    let q_minus: Vec<T> = (0..n).map(|i| lumped.m[i] * (lo[i] - values[i]) / dt).collect();
    let ratio = |q: T, p: T| if p == T::zero() { T::one() } else { T::one().min(q / p).max(T::zero()) };
    let r_plus: Vec<T> = (0..n).map(|i| ratio(q_plus[i], p_plus[i])).collect();
    let r_minus: Vec<T> = (0..n).map(|i| ratio(q_minus[i], p_minus[i])).collect();
    let alpha = edges
        .edges
        .iter()
        .zip(flux)
        .map(|(e, &f)| {
            if f > T::zero() {
                r_plus[e.i].min(r_minus[e.j])
            } else {
                r_minus[e.i].min(r_plus[e.j])
            }
        })
        .collect();
    ZalesakFactors { p_plus, p_minus, q_plus, q_minus, r_plus, r_minus, alpha }
}

/// Bounds and limiter state of one control variable.
#[derive(Clone, Debug)]
pub struct ControlBounds<T> {
    pub var: ControlVariable,
    pub values: Vec<T>,
    pub min: Vec<T>,
    pub max: Vec<T>,
    pub factors: ZalesakFactors<T>,
}

/// Per-step limiter data.
#[derive(Clone, Debug, Default)]
pub struct LimiterWorkspace<T> {
    pub fluxes: Vec<VarVec<T>>,
    pub alpha: Vec<T>,
    pub bounds: Vec<ControlBounds<T>>,
    /// Rounds of factor reduction the failsafe needed (0 if none).
    pub failsafe_rounds: usize,
}

/// Synchronized correction factors `α_ij = min_u α_ij^u`, stored in `ws.alpha`.
pub fn limit<T: Real>(disc: &Discretization<T>, ws: &mut LimiterWorkspace<T>, u_tilde: &SolutionField<T>, dt: T) -> Result<()> {
    let gas = &disc.gas;
    if disc.options.prelimit {
        let rho = control_values(u_tilde, ControlVariable::Density, gas);
        for (e, f) in disc.edges.edges.iter().zip(ws.fluxes.iter_mut()) {
            if f[0] * (rho[e.j] - rho[e.i]) > T::zero() {
                *f = linalg::zero_vec();
            }
        }
    }
    ws.alpha = vec![T::one(); disc.edges.edges.len()];
    ws.bounds.clear();
    for &var in &disc.options.control_vars {
        let values = control_values(u_tilde, var, gas);
        let (min, max) = compute_bounds(&values, &disc.edges);
        let fu = control_fluxes(var, &ws.fluxes, u_tilde, &disc.edges, gas)?;
        let factors = zalesak(&fu, &disc.edges, &values, &min, &max, &disc.lumped, dt);
        for (a, &b) in ws.alpha.iter_mut().zip(&factors.alpha) {
            *a = a.min(b);
        }
        ws.bounds.push(ControlBounds { var, values, min, max, factors });
    }
    Ok(())
}

/// `U_i = Ũ_i + Δt/m_i Σ_{j≠i} α_ij F_ij`.
pub fn correct<T: Real>(
    u_tilde: &SolutionField<T>,
    alpha: &[T],
    fluxes: &[VarVec<T>],
    edges: &EdgeSet<T>,
    lumped: &LumpedMass<T>,
    dt: T,
) -> SolutionField<T> {
    let nvar = u_tilde.nvar();
    let mut fbar = vec![T::zero(); u_tilde.coeffs.len()];
    for ((e, f), &a) in edges.edges.iter().zip(fluxes).zip(alpha) {
        if a == T::zero() {
            continue;
        }
        for k in 0..nvar {
            let af = a * f[k];
            fbar[e.i * nvar + k] += af;
            fbar[e.j * nvar + k] -= af;
        }
    }
    let mut out = u_tilde.clone();
    for (i, &m) in lumped.m.iter().enumerate() {
        let s = dt / m;
        for k in 0..nvar {
            out.coeffs[i * nvar + k] += s * fbar[i * nvar + k];
        }
    }
    out
}

fn bound_slack<T: Real>(lo: T, hi: T) -> T {
    let tol = T::lit(1e-12).max(T::epsilon() * T::lit(64.0));
    tol * (T::one() + lo.abs().max(hi.abs()))
}

/// DOFs whose corrected state is inadmissible or leaves a control-variable bound.
fn offending_dofs<T: Real>(field: &SolutionField<T>, bounds: &[ControlBounds<T>], gas: &GasModel<T>) -> Vec<bool> {
    (0..field.n_dofs)
        .map(|i| {
            let u = field.state(i);
            let p = u.pressure_unchecked(gas);
            if !(u.rho > T::zero()) || !(p > T::zero()) {
                return true;
            }
            bounds.iter().any(|b| {
                let v = b.var.eval(&u, gas);
                let slack = bound_slack(b.min[i], b.max[i]);
                !(v >= b.min[i] - slack && v <= b.max[i] + slack)
            })
        })
        .collect()
}

const FAILSAFE_STEPS: usize = 4;

/// Corrected update with the failsafe: factors on edges touching offending DOFs are reduced in
/// steps of `1/4` until every DOF satisfies its bounds. Terminates because `α = 0` reproduces `Ũ`.
pub fn correct_failsafe<T: Real>(
    disc: &Discretization<T>,
    ws: &mut LimiterWorkspace<T>,
    u_tilde: &SolutionField<T>,
    dt: T,
) -> SolutionField<T> {
    let step = T::one() / T::from_usize_lossy(FAILSAFE_STEPS);
    let mut level = vec![FAILSAFE_STEPS; ws.alpha.len()];
    let base = ws.alpha.clone();
    ws.failsafe_rounds = 0;
    loop {
        let next = correct(u_tilde, &ws.alpha, &ws.fluxes, &disc.edges, &disc.lumped, dt);
        let bad = offending_dofs(&next, &ws.bounds, &disc.gas);
        if !bad.iter().any(|&b| b) {
            return next;
        }
        let mut changed = false;
        for (k, e) in disc.edges.edges.iter().enumerate() {
            if (bad[e.i] || bad[e.j]) && level[k] > 0 && ws.alpha[k] > T::zero() {
                level[k] -= 1;
                ws.alpha[k] = base[k] * step * T::from_usize_lossy(level[k]);
                changed = true;
            }
        }
        ws.failsafe_rounds += 1;
        if !changed {
            return next;
        }
    }
}

/// Post-check `ũ_i^min − 1e−10 ≤ u_i ≤ ũ_i^max + 1e−10` for every control variable.
pub fn check_bounds<T: Real>(field: &SolutionField<T>, bounds: &[ControlBounds<T>], gas: &GasModel<T>) -> Result<()> {
    let tol = T::lit(1e-10);
    for b in bounds {
        for i in 0..field.n_dofs {
            let v = b.var.eval(&field.state(i), gas);
            if !(v >= b.min[i] - tol && v <= b.max[i] + tol) {
                return Err(Error::BoundViolation {
                    dof: i,
                    variable: b.var.name(),
                    value: v.to_f64_lossy(),
                    lo: b.min[i].to_f64_lossy(),
                    hi: b.max[i].to_f64_lossy(),
                });
            }
        }
    }
    Ok(())
}

/// Outcome of one linearized FCT step.
#[derive(Clone, Debug)]
pub struct FctStep<T> {
    pub field: SolutionField<T>,
    pub workspace: LimiterWorkspace<T>,
    pub predicted: SolutionField<T>,
}

impl<T: Real> FctStep<T> {
    pub fn min_alpha(&self) -> T {
        self.workspace.alpha.iter().fold(T::one(), |a, &b| a.min(b))
    }

    pub fn mean_alpha(&self) -> T {
        let n = self.workspace.alpha.len();
        if n == 0 {
            return T::one();
        }
        self.workspace.alpha.iter().copied().sum::<T>() / T::from_usize_lossy(n)
    }
}

/// Predictor, antidiffusive fluxes, limiting and correction.
pub fn fct_step<T: Real>(disc: &Discretization<T>, field: &SolutionField<T>, dt: T) -> Result<FctStep<T>> {
    let Prediction { u_tilde, u_dot } = predictor_step(disc, field, dt)?;
    let mut ws = LimiterWorkspace { fluxes: antidiffusive_fluxes(disc, &u_tilde, &u_dot)?, ..Default::default() };
    limit(disc, &mut ws, &u_tilde, dt)?;
    let next = if disc.options.failsafe {
        correct_failsafe(disc, &mut ws, &u_tilde, dt)
    } else {
        correct(&u_tilde, &ws.alpha, &ws.fluxes, &disc.edges, &disc.lumped, dt)
    };
    check_bounds(&next, &ws.bounds, &disc.gas)?;
    next.check_admissible(&disc.gas)?;
    Ok(FctStep { field: next, workspace: ws, predicted: u_tilde })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bc::BoundaryKind;
    use crate::euler::Primitive;
    use crate::geometry::{make_unit_interval, make_unit_square};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gas() -> GasModel<f64> {
        GasModel::air()
    }

    fn walls(geo: GeometryMap<f64>) -> Discretization<f64> {
        let bc = BoundarySpec::uniform(geo.dim(), BoundaryKind::SlipWall);
        Discretization::new(geo, bc, gas(), AfcOptions::default()).unwrap()
    }

    fn random_field(disc: &Discretization<f64>, seed: u64, amp: f64) -> SolutionField<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = disc.dim();
        let mut f = SolutionField::zeros(d, disc.n_dofs());
        for i in 0..disc.n_dofs() {
            let v: Vec<f64> = (0..d).map(|_| amp * rng.gen_range(-1.0..1.0)).collect();
            let p = Primitive::new(1.0 + amp * rng.gen_range(-0.5..0.5), &v, 1.0 + amp * rng.gen_range(-0.5..0.5));
            f.set_state(i, &p.to_state(&disc.gas));
        }
        f
    }

    fn sod_1d(disc: &Discretization<f64>) -> SolutionField<f64> {
        let grev = disc.geometry.basis().greville_points();
        let mut f = SolutionField::zeros(1, disc.n_dofs());
        for (i, g) in grev.iter().enumerate() {
            let p = if g[0] < 0.5 { Primitive::new(1.0, &[0.0], 1.0) } else { Primitive::new(0.125, &[0.0], 0.1) };
            f.set_state(i, &p.to_state(&disc.gas));
        }
        f
    }

    #[test]
    fn constant_field_interior_term_vanishes() {
        let disc = walls(make_unit_square([6, 6], 2).unwrap());
        let u = Primitive::new(0.8, &[0.3, -0.2], 1.4).to_state(&gas());
        let field = SolutionField::constant(2, disc.n_dofs(), &u);
        let fl = nodal_fluxes(&field, &gas()).unwrap();
        assert!(interior_galerkin_term(&disc.edges, &fl).iter().all(|&v| v == 0.0));
        assert!(viscous_term(&disc.edges, &field, &gas(), None).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn edge_form_matches_transpose_product() {
        for geo in [make_unit_interval(9, 1).unwrap(), make_unit_square([5, 6], 2).unwrap()] {
            let disc = walls(geo);
            let field = random_field(&disc, 3, 0.4);
            let nv = field.nvar();
            let fl = nodal_fluxes(&field, &gas()).unwrap();
            let mut r = interior_galerkin_term(&disc.edges, &fl);
            for (a, b) in r.iter_mut().zip(boundary_consistency_term(&disc.edges, &fl)) {
                *a += b;
            }
            let mut oracle = vec![0.0; r.len()];
            for (l, c) in disc.divergence.iter().enumerate() {
                for k in 0..nv {
                    let comp: Vec<f64> = fl.iter().map(|f| f.columns[l][k]).collect();
                    let ct = c.matvec_transpose(&comp);
                    for i in 0..disc.n_dofs() {
                        oracle[i * nv + k] += ct[i];
                    }
                }
            }
            for (a, b) in r.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn free_stream_preserved_with_farfield() {
        let geo = make_unit_square([7, 7], 2).unwrap();
        let inf = Primitive::new(1.2, &[0.5, 0.25], 0.9);
        let bc = BoundarySpec::uniform(2, BoundaryKind::Farfield).with_farfield(inf);
        let disc = Discretization::new(geo, bc, gas(), AfcOptions::default()).unwrap();
        let field = SolutionField::constant(2, disc.n_dofs(), &inf.to_state(&gas()));
        let r = low_order_residual(&disc, &field).unwrap();
        assert!(r.iter().all(|v| v.abs() < 1e-11));
    }

    #[test]
    fn viscosity_symmetry_and_supersonic_limit() {
        let disc = walls(make_unit_square([5, 5], 2).unwrap());
        let g = gas();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for e in disc.edges.edges.iter().take(40) {
            let a = Primitive::new(rng.gen_range(0.2..2.0), &[rng.gen_range(-1.0..1.0), 0.3], rng.gen_range(0.2..2.0)).to_state(&g);
            let b = Primitive::new(rng.gen_range(0.2..2.0), &[0.1, rng.gen_range(-1.0..1.0)], rng.gen_range(0.2..2.0)).to_state(&g);
            let dij = viscosity_matrix(e, &a, &b, &g, None).unwrap();
            let mut flipped = *e;
            flipped.dir = [-e.dir[0], -e.dir[1], 0.0];
            let dji = viscosity_matrix(&flipped, &b, &a, &g, None).unwrap();
            assert!(linalg::max_abs_diff(&dij, &dji, 4) < 1e-12);
        }
        // supersonic along the edge direction: D ΔU = |e| ΔF·n
        let e = disc.edges.edges.iter().find(|e| e.norm_e > 0.0).unwrap();
        let n = &e.dir[..2];
        let a = Primitive::new(1.0, &[4.0 * n[0], 4.0 * n[1]], 1.0 / 1.4).to_state(&g);
        let b = Primitive::new(1.1, &[4.2 * n[0], 4.2 * n[1]], 1.1 / 1.4).to_state(&g);
        let dm = viscosity_matrix(e, &a, &b, &g, None).unwrap();
        let (ua, ub) = (a.to_vars(), b.to_vars());
        let du: VarVec<f64> = std::array::from_fn(|k| ub[k] - ua[k]);
        let lhs = linalg::matvec(&dm, &du, 4);
        let fa = euler::flux(&a, &g).unwrap().normal(n);
        let fb = euler::flux(&b, &g).unwrap().normal(n);
        for k in 0..4 {
            assert_abs_diff_eq!(lhs[k], e.norm_e * (fb[k] - fa[k]), epsilon = 1e-10);
        }
    }

    #[test]
    fn single_edge_low_order_hand_check() {
        // two linear functions on [0, 1]: one edge, e_01 = (c_10 - c_01)/2 = -1/2
        let disc = walls(make_unit_interval(2, 1).unwrap());
        assert_eq!(disc.edges.edges.len(), 1);
        let e = disc.edges.edges[0];
        assert_abs_diff_eq!(e.e_ij[0], -0.5, epsilon = 1e-15);
        let g = gas();
        let (a, b) = (Primitive::new(1.0, &[0.2], 1.0).to_state(&g), Primitive::new(0.5, &[-0.1], 0.4).to_state(&g));
        let mut field = SolutionField::zeros(1, 2);
        field.set_state(0, &a);
        field.set_state(1, &b);
        let r = low_order_residual(&disc, &field).unwrap();
        let gal = galerkin_residual(&disc, &field).unwrap();
        let dm = viscosity_matrix(&e, &a, &b, &g, None).unwrap();
        let (ua, ub) = (a.to_vars(), b.to_vars());
        let du: VarVec<f64> = std::array::from_fn(|k| ub[k] - ua[k]);
        let v = linalg::matvec(&dm, &du, 3);
        for k in 0..3 {
            assert_abs_diff_eq!(r[k], gal[k] + v[k], epsilon = 1e-14);
            assert_abs_diff_eq!(r[3 + k], gal[3 + k] - v[k], epsilon = 1e-14);
        }
    }

    #[test]
    fn residual_conservation() {
        let disc = walls(make_unit_square([6, 7], 2).unwrap());
        let field = random_field(&disc, 5, 0.3);
        let r = low_order_residual(&disc, &field).unwrap();
        let s = boundary_term(&disc, &field).unwrap();
        for k in 0..4 {
            let total: f64 = (0..disc.n_dofs()).map(|i| r[i * 4 + k] + s[i * 4 + k]).sum();
            assert!(total.abs() < 1e-10, "{k}: {total}");
        }
    }

    #[test]
    fn predictor_keeps_rest_state_and_sod_positivity() {
        let disc = walls(make_unit_square([8, 8], 2).unwrap());
        let rest = SolutionField::constant(2, disc.n_dofs(), &Primitive::new(1.0, &[0.0, 0.0], 1.0).to_state(&gas()));
        let p = predictor_step(&disc, &rest, 0.01).unwrap();
        for (a, b) in p.u_tilde.coeffs.iter().zip(&rest.coeffs) {
            assert!((a - b).abs() < 1e-14);
        }
        let disc = walls(make_unit_interval(66, 2).unwrap());
        let field = sod_1d(&disc);
        let p = predictor_step(&disc, &field, 0.0005).unwrap();
        p.u_tilde.check_admissible(&gas()).unwrap();
    }

    #[test]
    fn antidiffusive_flux_definitions() {
        let disc = walls(make_unit_square([5, 5], 2).unwrap());
        let u = Primitive::new(0.8, &[0.3, -0.2], 1.4).to_state(&gas());
        let field = SolutionField::constant(2, disc.n_dofs(), &u);
        let udot = vec![0.25; field.coeffs.len()];
        let f = antidiffusive_fluxes(&disc, &field, &udot).unwrap();
        assert!(f.iter().all(|v| v.iter().all(|&x| x == 0.0)));

        let disc = walls(make_unit_interval(2, 1).unwrap());
        let g = gas();
        let (a, b) = (Primitive::new(1.0, &[0.2], 1.0).to_state(&g), Primitive::new(0.5, &[-0.1], 0.4).to_state(&g));
        let mut field = SolutionField::zeros(1, 2);
        field.set_state(0, &a);
        field.set_state(1, &b);
        let udot = vec![0.1, -0.2, 0.3, -0.4, 0.5, 0.6];
        let f = antidiffusive_fluxes(&disc, &field, &udot).unwrap();
        let e = disc.edges.edges[0];
        assert_abs_diff_eq!(e.m_ij, 1.0 / 6.0, epsilon = 1e-15);
        let dm = viscosity_matrix(&e, &a, &b, &g, None).unwrap();
        let (ua, ub) = (a.to_vars(), b.to_vars());
        let du: VarVec<f64> = std::array::from_fn(|k| ua[k] - ub[k]);
        let dv = linalg::matvec(&dm, &du, 3);
        for k in 0..3 {
            assert_abs_diff_eq!(f[0][k], (udot[k] - udot[3 + k]) / 6.0 + dv[k], epsilon = 1e-14);
        }
    }

    #[test]
    fn bounds_examples() {
        let disc = walls(make_unit_interval(3, 1).unwrap());
        let (lo, hi) = compute_bounds(&[0.0, 1.0, 0.0], &disc.edges);
        assert_eq!((lo[1], hi[1]), (0.0, 1.0));
        assert_eq!((lo[0], hi[0]), (0.0, 1.0));
        let (lo, hi) = compute_bounds(&[2.0, 2.0, 2.0], &disc.edges);
        assert!(lo.iter().chain(&hi).all(|&v| v == 2.0));
        // quadratic basis has a wider stencil: bounds never tighten
        let wide = walls(make_unit_interval(5, 2).unwrap());
        let narrow = walls(make_unit_interval(5, 1).unwrap());
        let vals = [0.3, 1.2, -0.4, 0.9, 0.1];
        let (lw, hw) = compute_bounds(&vals, &wide.edges);
        let (ln, hn) = compute_bounds(&vals, &narrow.edges);
        for i in 0..5 {
            assert!(lw[i] <= ln[i] && hw[i] >= hn[i]);
        }
    }

    #[test]
    fn zalesak_trivial_cases() {
        let disc = walls(make_unit_interval(4, 1).unwrap());
        let vals = [1.0, 0.5, 0.7, 0.2];
        let (lo, hi) = compute_bounds(&vals, &disc.edges);
        let z = zalesak(&[0.0; 3], &disc.edges, &vals, &lo, &hi, &disc.lumped, 0.1);
        assert!(z.alpha.iter().all(|&a| a == 1.0));
        // DOF 0 is a local maximum (Q⁺ = 0): positive flux into it is cancelled
        let z = zalesak(&[0.3, 0.0, 0.0], &disc.edges, &vals, &lo, &hi, &disc.lumped, 0.1);
        assert_eq!(z.alpha[0], 0.0);
    }

    #[test]
    fn alpha_one_reproduces_linearized_galerkin() {
        let disc = walls(make_unit_square([6, 6], 2).unwrap());
        let field = random_field(&disc, 9, 0.2);
        let dt = 1e-3;
        let Prediction { u_tilde, u_dot } = predictor_step(&disc, &field, dt).unwrap();
        let f = antidiffusive_fluxes(&disc, &u_tilde, &u_dot).unwrap();
        let ones = vec![1.0; f.len()];
        let corrected = correct(&u_tilde, &ones, &f, &disc.edges, &disc.lumped, dt);
        // Σ_j F_ij = R(Ũ) − (M_C U̇)_i
        let gal = galerkin_residual(&disc, &u_tilde).unwrap();
        let nv = 4;
        for k in 0..nv {
            let comp: Vec<f64> = (0..disc.n_dofs()).map(|i| u_dot[i * nv + k]).collect();
            let mc = disc.mass.matvec(&comp);
            for i in 0..disc.n_dofs() {
                let expect = u_tilde.coeffs[i * nv + k] + dt / disc.lumped.m[i] * (gal[i * nv + k] - mc[i]);
                assert!((corrected.coeffs[i * nv + k] - expect).abs() < 1e-12);
            }
        }
        let zero = vec![0.0; f.len()];
        assert_eq!(correct(&u_tilde, &zero, &f, &disc.edges, &disc.lumped, dt).coeffs, u_tilde.coeffs);
    }

    #[test]
    fn fct_step_bounds_and_conservation() {
        let disc = walls(make_unit_interval(40, 2).unwrap());
        let field = sod_1d(&disc);
        let step = fct_step(&disc, &field, 0.002).unwrap();
        let before = step.predicted.totals(&disc.lumped);
        let after = step.field.totals(&disc.lumped);
        for k in 0..3 {
            assert!((before[k] - after[k]).abs() <= 1e-12 * before[k].abs().max(1.0));
        }
        for b in &step.workspace.bounds {
            for i in 0..disc.n_dofs() {
                let v = b.var.eval(&step.field.state(i), &gas());
                assert!(v >= b.min[i] - 1e-10 && v <= b.max[i] + 1e-10);
            }
        }
        let a = &step.workspace.alpha;
        assert!(a.iter().all(|&x| (0.0..=1.0).contains(&x)));
        assert!(step.min_alpha() < 1.0);
    }

    #[test]
    fn smooth_linear_density_is_not_limited() {
        // linearized scalar subcase: density fluxes from a linear profile with matching bounds
        let disc = walls(make_unit_interval(12, 1).unwrap());
        let vals: Vec<f64> = disc.geometry.basis().greville_points().iter().map(|g| 1.0 + g[0]).collect();
        let (lo, hi) = compute_bounds(&vals, &disc.edges);
        let h = 1.0 / 11.0;
        let dt = 0.2 * h;
        // antidiffusion of a uniform slope: equal fluxes along the chain cancel at interior DOFs
        let flux: Vec<f64> = disc.edges.edges.iter().map(|_| 0.01).collect();
        let z = zalesak(&flux, &disc.edges, &vals, &lo, &hi, &disc.lumped, dt);
        for (e, &a) in disc.edges.edges.iter().zip(&z.alpha) {
            if e.i > 0 && e.j < 11 {
                assert!(a >= 1.0 - 1e-8, "edge ({}, {}) α = {a}", e.i, e.j);
            }
        }
    }
}
