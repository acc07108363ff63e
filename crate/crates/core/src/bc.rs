//! Weakly imposed boundary conditions and the boundary flux term `S_i = ∫_Γ φ_i F_n ds`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::afc::SolutionField;
use crate::assembly::BoundaryTrace;
use crate::error::{Error, Result};
use crate::euler::{self, GasModel, Primitive, State};
use crate::geometry::Side;
use crate::linalg::{self, VarVec};
use crate::scalar::Real;
use crate::MAX_DIM;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BoundaryKind {
    /// Impermeable wall: only the pressure acts on the momentum.
    SlipWall,
    /// Upwind flux towards a prescribed free-stream state.
    Farfield,
    /// Exact flux of the interior trace.
    Transmissive,
}

impl BoundaryKind {
    pub fn name(self) -> &'static str {
        match self {
            BoundaryKind::SlipWall => "slip_wall",
            BoundaryKind::Farfield => "farfield",
            BoundaryKind::Transmissive => "transmissive",
        }
    }
}

impl fmt::Display for BoundaryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BoundaryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "slip_wall" | "slip-wall" | "wall" => Ok(BoundaryKind::SlipWall),
            "farfield" | "far-field" => Ok(BoundaryKind::Farfield),
            "transmissive" | "outflow" => Ok(BoundaryKind::Transmissive),
            other => Err(Error::Config(format!("unknown boundary kind '{other}'"))),
        }
    }
}

/// Boundary kind of every patch side, plus the free-stream state for far-field sides.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundarySpec<T> {
    dim: usize,
    kinds: Vec<BoundaryKind>,
    pub farfield: Option<Primitive<T>>,
}

impl<T: Real> BoundarySpec<T> {
    pub fn uniform(dim: usize, kind: BoundaryKind) -> Self {
        Self { dim, kinds: vec![kind; 2 * dim], farfield: None }
    }

    pub fn with_side(mut self, side: Side, kind: BoundaryKind) -> Self {
        self.kinds[side.id()] = kind;
        self
    }

    pub fn with_farfield(mut self, state: Primitive<T>) -> Self {
        self.farfield = Some(state);
        self
    }

    pub fn set(&mut self, side: Side, kind: BoundaryKind) -> Result<()> {
        if side.axis >= self.dim {
            return Err(Error::Config(format!("side {} does not exist in {} dimensions", side.name(), self.dim)));
        }
        self.kinds[side.id()] = kind;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self, side: Side) -> BoundaryKind {
        self.kinds[side.id()]
    }

    pub fn sides(&self) -> impl Iterator<Item = (Side, BoundaryKind)> + '_ {
        self.kinds.iter().enumerate().map(|(id, &k)| (Side::from_id(id), k))
    }

    pub fn validate(&self) -> Result<()> {
        if self.kinds.contains(&BoundaryKind::Farfield) {
            match &self.farfield {
                None => return Err(Error::Config("far-field boundary without a free-stream state".into())),
                Some(s) if !s.is_admissible() || s.dim != self.dim => {
                    return Err(Error::Config("far-field state is not admissible".into()))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// `F_n = (0, p n, 0)`.
pub fn wall_flux<T: Real>(u: &State<T>, n: &[T], gas: &GasModel<T>) -> Result<VarVec<T>> {
    let p = euler::pressure(u, gas)?;
    if !(p > T::zero()) {
        return Err(Error::InvalidState(format!("wall trace pressure {p} is not positive")));
    }
    let mut f = linalg::zero_vec();
    for l in 0..u.dim {
        f[1 + l] = p * n[l];
    }
    Ok(f)
}

/// Roe flux between the interior trace `u` and the free stream `u_inf`:
/// `½ n·(F(u) + F(u_∞)) − ½ |Â(n)| (u_∞ − u)`.
pub fn farfield_flux<T: Real>(
    u: &State<T>,
    u_inf: &State<T>,
    n: &[T],
    gas: &GasModel<T>,
    entropy_fix: Option<T>,
) -> Result<VarVec<T>> {
    let roe = euler::roe_average(u, u_inf, gas)?;
    let es = euler::eig_decompose(&roe, n, gas)?;
    let fa = euler::flux(u, gas)?.normal(n);
    let fb = euler::flux(u_inf, gas)?.normal(n);
    let (ua, ub) = (u.to_vars(), u_inf.to_vars());
    let nvar = u.nvar();
    let mut du = linalg::zero_vec();
    for k in 0..nvar {
        du[k] = ub[k] - ua[k];
    }
    let floor = entropy_fix.map(|eps| eps * roe.c);
    let diss = es.apply_scaled(&es.abs_lambda(floor), &du);
    let mut out = linalg::zero_vec();
    for k in 0..nvar {
        out[k] = T::half() * (fa[k] + fb[k] - diss[k]);
    }
    Ok(out)
}

/// `n·F(u)`.
pub fn transmissive_flux<T: Real>(u: &State<T>, n: &[T], gas: &GasModel<T>) -> Result<VarVec<T>> {
    euler::pressure(u, gas)?;
    Ok(euler::flux(u, gas)?.normal(n))
}

pub fn boundary_flux<T: Real>(
    kind: BoundaryKind,
    u: &State<T>,
    farfield: Option<&State<T>>,
    n: &[T],
    gas: &GasModel<T>,
    entropy_fix: Option<T>,
) -> Result<VarVec<T>> {
    match kind {
        BoundaryKind::SlipWall => wall_flux(u, n, gas),
        BoundaryKind::Transmissive => transmissive_flux(u, n, gas),
        BoundaryKind::Farfield => {
            let inf = farfield.ok_or_else(|| Error::Config("far-field boundary without a free-stream state".into()))?;
            farfield_flux(u, inf, n, gas, entropy_fix)
        }
    }
}

/// `S_i = Σ_q w_q φ_i(ξ_q) F_n(U^h(ξ_q), n_q)` over every patch side, as an `N × nvar` array.
pub fn assemble_boundary_term<T: Real>(
    field: &SolutionField<T>,
    spec: &BoundarySpec<T>,
    traces: &[BoundaryTrace<T>],
    gas: &GasModel<T>,
    entropy_fix: Option<T>,
) -> Result<Vec<T>> {
    let nvar = field.nvar();
    let dim = field.dim;
    let inf = spec.farfield.map(|p| p.to_state(gas));
    let mut s = vec![T::zero(); field.n_dofs * nvar];
    for trace in traces {
        let kind = spec.kind(trace.side);
        let fluxes: Vec<Result<VarVec<T>>> = trace
            .points
            .par_iter()
            .enumerate()
            .map(|(q, pt)| {
                let mut vars = [T::zero(); MAX_DIM + 2];
                for &(j, phi) in &pt.active {
                    for (k, v) in vars.iter_mut().enumerate().take(nvar) {
                        *v += phi * field.coeffs[j * nvar + k];
                    }
                }
                let u = State::from_vars(&vars, dim);
                boundary_flux(kind, &u, inf.as_ref(), &pt.normal, gas, entropy_fix).map_err(|e| Error::Boundary {
                    side: trace.side.name(),
                    point: q,
                    source: Box::new(e),
                })
            })
            .collect();
        for (pt, f) in trace.points.iter().zip(fluxes) {
            let f = f?;
            for &(i, phi) in &pt.active {
                let wphi = pt.weight * phi;
                for k in 0..nvar {
                    s[i * nvar + k] += wphi * f[k];
                }
            }
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble_boundary;
    use crate::geometry::{build_quadrature, make_unit_square};
    use approx::assert_abs_diff_eq;

    fn gas() -> GasModel<f64> {
        GasModel::air()
    }

    fn state(rho: f64, v: &[f64], p: f64) -> State<f64> {
        Primitive::new(rho, v, p).to_state(&gas())
    }

    #[test]
    fn wall_flux_examples() {
        let g = gas();
        let f = wall_flux(&state(1.0, &[0.0, 0.0], 1.0), &[1.0, 0.0], &g).unwrap();
        assert_eq!(&f[..4], &[0.0, 1.0, 0.0, 0.0]);
        // tangential flow: wall flux is the full normal flux
        let n = [0.6, 0.8];
        let u = state(0.7, &[0.8 * 1.3, -0.6 * 1.3], 2.1);
        let fw = wall_flux(&u, &n, &g).unwrap();
        let fe = euler::flux(&u, &g).unwrap().normal(&n);
        for k in 0..4 {
            assert_abs_diff_eq!(fw[k], fe[k], epsilon = 1e-12);
        }
        let f2 = wall_flux(&state(0.7, &[0.0, 0.0], 4.2), &n, &g).unwrap();
        let f1 = wall_flux(&state(0.7, &[0.0, 0.0], 2.1), &n, &g).unwrap();
        for k in 0..4 {
            assert_abs_diff_eq!(f2[k], 2.0 * f1[k], epsilon = 1e-14);
        }
    }

    #[test]
    fn farfield_flux_examples() {
        let g = gas();
        let n = [0.6, -0.8];
        let u = state(0.9, &[0.3, 0.2], 1.1);
        let f = farfield_flux(&u, &u, &n, &g, None).unwrap();
        let fe = euler::flux(&u, &g).unwrap().normal(&n);
        for k in 0..4 {
            assert_abs_diff_eq!(f[k], fe[k], epsilon = 1e-14);
        }
        // c = 1 for p = ρ/γ; both states supersonic along ±n
        let out_a = state(1.0, &[3.0 * 0.6, -3.0 * 0.8], 1.0 / 1.4);
        let out_b = state(1.2, &[3.2 * 0.6, -3.2 * 0.8], 1.2 / 1.4);
        let f = farfield_flux(&out_a, &out_b, &n, &g, None).unwrap();
        let fa = euler::flux(&out_a, &g).unwrap().normal(&n);
        for k in 0..4 {
            assert_abs_diff_eq!(f[k], fa[k], epsilon = 1e-12 * (1.0 + fa[k].abs()));
        }
        let in_a = state(1.0, &[-3.0 * 0.6, 3.0 * 0.8], 1.0 / 1.4);
        let in_b = state(1.2, &[-3.2 * 0.6, 3.2 * 0.8], 1.2 / 1.4);
        let f = farfield_flux(&in_a, &in_b, &n, &g, None).unwrap();
        let fb = euler::flux(&in_b, &g).unwrap().normal(&n);
        for k in 0..4 {
            assert_abs_diff_eq!(f[k], fb[k], epsilon = 1e-12 * (1.0 + fb[k].abs()));
        }
    }

    #[test]
    fn spec_parsing_and_validation() {
        assert_eq!("slip_wall".parse::<BoundaryKind>().unwrap(), BoundaryKind::SlipWall);
        assert!("periodic".parse::<BoundaryKind>().is_err());
        let spec = BoundarySpec::<f64>::uniform(2, BoundaryKind::Farfield);
        assert!(spec.validate().is_err());
        let spec = spec.with_farfield(Primitive::new(1.0, &[0.0, 0.0], 1.0));
        assert!(spec.validate().is_ok());
        let spec = BoundarySpec::<f64>::uniform(2, BoundaryKind::SlipWall)
            .with_side(Side { axis: 0, upper: true }, BoundaryKind::Transmissive);
        assert_eq!(spec.kind(Side { axis: 0, upper: true }), BoundaryKind::Transmissive);
        assert_eq!(spec.kind(Side { axis: 1, upper: true }), BoundaryKind::SlipWall);
    }

    fn square_setup(n: usize) -> (usize, Vec<BoundaryTrace<f64>>) {
        let geo = make_unit_square::<f64>([n, n], 2).unwrap();
        let quad = build_quadrature(geo.basis(), 3).unwrap();
        let traces = Side::all(2).map(|s| assemble_boundary(&geo, &quad, s).unwrap()).collect();
        (geo.basis().len(), traces)
    }

    #[test]
    fn closed_box_at_rest_has_no_net_force() {
        let (n, traces) = square_setup(7);
        let field = SolutionField::constant(2, n, &state(1.0, &[0.0, 0.0], 1.0));
        let spec = BoundarySpec::uniform(2, BoundaryKind::SlipWall);
        let s = assemble_boundary_term(&field, &spec, &traces, &gas(), None).unwrap();
        for k in 0..4 {
            let total: f64 = (0..n).map(|i| s[i * 4 + k]).sum();
            assert!(total.abs() < 1e-10, "component {k}: {total}");
        }
        // interior DOFs see nothing
        let basis_n = 7;
        for i in 0..n {
            let (a, b) = (i % basis_n, i / basis_n);
            if a > 0 && a < basis_n - 1 && b > 0 && b < basis_n - 1 {
                assert!(s[i * 4..i * 4 + 4].iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn transmissive_constant_state_matches_surface_integral() {
        let (n, traces) = square_setup(6);
        let u = state(0.8, &[0.4, -0.3], 1.5);
        let field = SolutionField::constant(2, n, &u);
        let spec = BoundarySpec::uniform(2, BoundaryKind::Transmissive);
        let s = assemble_boundary_term(&field, &spec, &traces, &gas(), None).unwrap();
        let f = euler::flux(&u, &gas()).unwrap();
        // each face contributes ±F^axis, the whole boundary nothing
        for k in 0..4 {
            let total: f64 = (0..n).map(|i| s[i * 4 + k]).sum();
            assert_abs_diff_eq!(total, 0.0, epsilon = 1e-12);
        }
        for side in Side::all(2) {
            let one = assemble_boundary_term(&field, &spec, &traces[side.id()..side.id() + 1], &gas(), None).unwrap();
            let sign = if side.upper { 1.0 } else { -1.0 };
            for k in 0..4 {
                let total: f64 = (0..n).map(|i| one[i * 4 + k]).sum();
                assert_abs_diff_eq!(total, sign * f.columns[side.axis][k], epsilon = 1e-13);
            }
        }
    }
}
