//! Ideal-gas Euler physics: states, equation of state, flux tensor, Roe linearization and the
//! eigensystem of the directional flux Jacobian.
//!
//! Conservative variables are ordered `(ρ, ρv_1, …, ρv_d, ρE)`; `nvar = d + 2`.

use crate::error::{Error, Result};
use crate::linalg::{self, DimVec, VarMat, VarVec};
use crate::scalar::Real;
use crate::MAX_DIM;

/// Ideal polytropic gas with heat capacity ratio `gamma`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GasModel<T> {
    pub gamma: T,
}

impl<T: Real> GasModel<T> {
    pub fn new(gamma: T) -> Result<Self> {
        if !(gamma > T::one()) {
            return Err(Error::InvalidState(format!("heat capacity ratio {gamma} must exceed 1")));
        }
        Ok(Self { gamma })
    }

    /// Dry air, `γ = 1.4`.
    pub fn air() -> Self {
        Self { gamma: T::lit(1.4) }
    }

    #[inline]
    pub fn gm1(&self) -> T {
        self.gamma - T::one()
    }
}

impl<T: Real> Default for GasModel<T> {
    fn default() -> Self {
        Self::air()
    }
}

/// Conservative state `U = (ρ, ρv, ρE)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct State<T> {
    pub dim: usize,
    pub rho: T,
    pub mom: DimVec<T>,
    pub rho_e: T,
}

/// Primitive state `(ρ, v, p)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Primitive<T> {
    pub dim: usize,
    pub rho: T,
    pub v: DimVec<T>,
    pub p: T,
}

impl<T: Real> Primitive<T> {
    pub fn new(rho: T, v: &[T], p: T) -> Self {
        let mut vv = [T::zero(); MAX_DIM];
        vv[..v.len()].copy_from_slice(v);
        Self { dim: v.len(), rho, v: vv, p }
    }

    pub fn is_admissible(&self) -> bool {
        self.rho > T::zero() && self.p > T::zero() && self.rho.is_finite() && self.p.is_finite()
    }

    pub fn to_state(&self, gas: &GasModel<T>) -> State<T> {
        let mut mom = [T::zero(); MAX_DIM];
        let mut v2 = T::zero();
        for k in 0..self.dim {
            mom[k] = self.rho * self.v[k];
            v2 += self.v[k] * self.v[k];
        }
        State { dim: self.dim, rho: self.rho, mom, rho_e: self.p / gas.gm1() + T::half() * self.rho * v2 }
    }

    pub fn sound_speed(&self, gas: &GasModel<T>) -> T {
        (gas.gamma * self.p / self.rho).sqrt()
    }
}

impl<T: Real> State<T> {
    pub fn nvar(&self) -> usize {
        self.dim + 2
    }

    /// Reads `(ρ, ρv, ρE)` from a slice of length `dim + 2`.
    pub fn from_vars(vars: &[T], dim: usize) -> Self {
        let mut mom = [T::zero(); MAX_DIM];
        mom[..dim].copy_from_slice(&vars[1..=dim]);
        Self { dim, rho: vars[0], mom, rho_e: vars[dim + 1] }
    }

    pub fn to_vars(&self) -> VarVec<T> {
        let mut out = linalg::zero_vec();
        out[0] = self.rho;
        out[1..=self.dim].copy_from_slice(&self.mom[..self.dim]);
        out[self.dim + 1] = self.rho_e;
        out
    }

    pub fn velocity(&self) -> DimVec<T> {
        let mut v = [T::zero(); MAX_DIM];
        for k in 0..self.dim {
            v[k] = self.mom[k] / self.rho;
        }
        v
    }

    fn kinetic(&self) -> T {
        let m2 = (0..self.dim).fold(T::zero(), |s, k| s + self.mom[k] * self.mom[k]);
        T::half() * m2 / self.rho
    }

    /// `p` without admissibility checks.
    #[inline]
    pub fn pressure_unchecked(&self, gas: &GasModel<T>) -> T {
        gas.gm1() * (self.rho_e - self.kinetic())
    }

    pub fn to_primitive(&self, gas: &GasModel<T>) -> Result<Primitive<T>> {
        let p = pressure(self, gas)?;
        Ok(Primitive { dim: self.dim, rho: self.rho, v: self.velocity(), p })
    }

    /// Specific total enthalpy `H = (ρE + p) / ρ`.
    pub fn enthalpy(&self, gas: &GasModel<T>) -> T {
        (self.rho_e + self.pressure_unchecked(gas)) / self.rho
    }
}

fn check_density<T: Real>(u: &State<T>) -> Result<()> {
    if !(u.rho > T::zero()) || !u.rho.is_finite() {
        return Err(Error::InvalidState(format!("density {} is not positive", u.rho)));
    }
    Ok(())
}

fn check_admissible<T: Real>(u: &State<T>, gas: &GasModel<T>) -> Result<T> {
    let p = pressure(u, gas)?;
    if !(p > T::zero()) || !p.is_finite() {
        return Err(Error::InvalidState(format!("pressure {p} is not positive")));
    }
    Ok(p)
}

/// Equation of state `p = (γ − 1)(ρE − ρ|v|²/2)`.
pub fn pressure<T: Real>(u: &State<T>, gas: &GasModel<T>) -> Result<T> {
    check_density(u)?;
    Ok(u.pressure_unchecked(gas))
}

/// Flux tensor with one column `F^l ∈ R^{d+2}` per spatial direction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FluxTensor<T> {
    pub dim: usize,
    pub columns: [VarVec<T>; MAX_DIM],
}

impl<T: Real> FluxTensor<T> {
    /// `n · F = Σ_l n_l F^l`.
    pub fn normal(&self, n: &[T]) -> VarVec<T> {
        let mut out = linalg::zero_vec();
        for l in 0..self.dim {
            for k in 0..self.dim + 2 {
                out[k] += n[l] * self.columns[l][k];
            }
        }
        out
    }
}

/// `F = [ρv; ρv⊗v + pI; (ρE + p)v]`.
pub fn flux<T: Real>(u: &State<T>, gas: &GasModel<T>) -> Result<FluxTensor<T>> {
    check_density(u)?;
    Ok(flux_unchecked(u, gas))
}

#[inline]
pub(crate) fn flux_unchecked<T: Real>(u: &State<T>, gas: &GasModel<T>) -> FluxTensor<T> {
    let d = u.dim;
    let p = u.pressure_unchecked(gas);
    let v = u.velocity();
    let mut columns = [linalg::zero_vec(); MAX_DIM];
    for (l, col) in columns.iter_mut().enumerate().take(d) {
        col[0] = u.mom[l];
        for k in 0..d {
            col[1 + k] = u.mom[k] * v[l];
        }
        col[1 + l] += p;
        col[d + 1] = (u.rho_e + p) * v[l];
    }
    FluxTensor { dim: d, columns }
}

/// Density-weighted Roe mean values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoeState<T> {
    pub dim: usize,
    pub rho: T,
    pub v: DimVec<T>,
    pub h: T,
    pub c: T,
}

impl<T: Real> RoeState<T> {
    /// Directional Jacobian `A(n)` at the mean values.
    pub fn jacobian(&self, n: &[T], gas: &GasModel<T>) -> VarMat<T> {
        flux_jacobian(self.dim, &self.v, self.h, n, gas)
    }
}

/// `√ρ`-weighted averages of velocity and total enthalpy (Roe's linearization).
pub fn roe_average<T: Real>(ui: &State<T>, uj: &State<T>, gas: &GasModel<T>) -> Result<RoeState<T>> {
    check_admissible(ui, gas)?;
    check_admissible(uj, gas)?;
    roe_average_unchecked(ui, uj, gas)
}

#[inline]
pub(crate) fn roe_average_unchecked<T: Real>(ui: &State<T>, uj: &State<T>, gas: &GasModel<T>) -> Result<RoeState<T>> {
    let d = ui.dim;
    let (wi, wj) = (ui.rho.sqrt(), uj.rho.sqrt());
    let inv = T::one() / (wi + wj);
    let mut v = [T::zero(); MAX_DIM];
    let mut v2 = T::zero();
    for k in 0..d {
        // √ρ v = ρv / √ρ
        v[k] = (ui.mom[k] / wi + uj.mom[k] / wj) * inv;
        v2 += v[k] * v[k];
    }
    let h = (ui.enthalpy(gas) * wi + uj.enthalpy(gas) * wj) * inv;
    let c2 = gas.gm1() * (h - T::half() * v2);
    if !(c2 > T::zero()) || !c2.is_finite() {
        return Err(Error::InvalidState(format!("Roe mean sound speed squared {c2} is not positive")));
    }
    Ok(RoeState { dim: d, rho: wi * wj, v, h, c: c2.sqrt() })
}

/// Analytic directional flux Jacobian `A(n) = Σ_l n_l ∂F^l/∂U` in terms of `v` and `H`.
pub fn flux_jacobian<T: Real>(dim: usize, v: &[T], h: T, n: &[T], gas: &GasModel<T>) -> VarMat<T> {
    let g1 = gas.gm1();
    let d = dim;
    let vn = linalg::dot(&v[..d], &n[..d]);
    let q = T::half() * linalg::dot(&v[..d], &v[..d]);
    let mut a = linalg::zero_mat();
    a[0][1..=d].copy_from_slice(&n[..d]);
    for r in 0..d {
        a[1 + r][0] = g1 * q * n[r] - v[r] * vn;
        for k in 0..d {
            a[1 + r][1 + k] = v[r] * n[k] - g1 * n[r] * v[k];
        }
        a[1 + r][1 + r] += vn;
        a[1 + r][d + 1] = g1 * n[r];
    }
    a[d + 1][0] = vn * (g1 * q - h);
    for k in 0..d {
        a[d + 1][1 + k] = h * n[k] - g1 * vn * v[k];
    }
    a[d + 1][d + 1] = gas.gamma * vn;
    a
}

/// Orthonormal tangents completing `n` to a basis of `R^d`.
fn tangents<T: Real>(n: &[T], d: usize) -> [DimVec<T>; MAX_DIM - 1] {
    let mut t = [[T::zero(); MAX_DIM]; MAX_DIM - 1];
    match d {
        1 => {}
        2 => t[0] = [-n[1], n[0], T::zero()],
        _ => {
            // Start from the axis least aligned with n.
            let axis = (0..3)
                .min_by(|&a, &b| n[a].abs().partial_cmp(&n[b].abs()).unwrap_or(std::cmp::Ordering::Equal))
                .unwrap_or(0);
            let mut e = [T::zero(); MAX_DIM];
            e[axis] = T::one();
            let proj = n[axis];
            let mut t1 = [e[0] - proj * n[0], e[1] - proj * n[1], e[2] - proj * n[2]];
            let len = linalg::norm(&t1);
            for c in t1.iter_mut() {
                *c /= len;
            }
            let t2 = [
                n[1] * t1[2] - n[2] * t1[1],
                n[2] * t1[0] - n[0] * t1[2],
                n[0] * t1[1] - n[1] * t1[0],
            ];
            t[0] = t1;
            t[1] = t2;
        }
    }
    t
}

/// Diagonalization `A(n) = R Λ R⁻¹`. Eigenvalues are ordered
/// `(v·n − c, v·n, …, v·n, v·n + c)`: acoustic, entropy, `d − 1` shear, acoustic.
#[derive(Clone, Copy, Debug)]
pub struct Eigensystem<T> {
    pub nvar: usize,
    pub r: VarMat<T>,
    pub lambda: VarVec<T>,
    pub r_inv: VarMat<T>,
}

impl<T: Real> Eigensystem<T> {
    /// `R f(Λ) R⁻¹ x` for a diagonal scaling `f`.
    pub fn apply_scaled(&self, scale: &VarVec<T>, x: &VarVec<T>) -> VarVec<T> {
        let mut w = linalg::matvec(&self.r_inv, x, self.nvar);
        for k in 0..self.nvar {
            w[k] *= scale[k];
        }
        linalg::matvec(&self.r, &w, self.nvar)
    }

    pub fn reconstruct(&self) -> VarMat<T> {
        let mut rl = self.r;
        for row in rl.iter_mut().take(self.nvar) {
            for k in 0..self.nvar {
                row[k] *= self.lambda[k];
            }
        }
        linalg::matmul(&rl, &self.r_inv, self.nvar)
    }

    /// `|λ_k|`, optionally with Harten's smooth floor `(λ² + δ²) / 2δ` for `|λ| < δ`.
    pub fn abs_lambda(&self, floor: Option<T>) -> VarVec<T> {
        let mut out = linalg::zero_vec();
        for k in 0..self.nvar {
            let a = self.lambda[k].abs();
            out[k] = match floor {
                Some(delta) if delta > T::zero() && a < delta => (a * a + delta * delta) / (T::two() * delta),
                _ => a,
            };
        }
        out
    }
}

pub fn eig_decompose<T: Real>(roe: &RoeState<T>, n: &[T], gas: &GasModel<T>) -> Result<Eigensystem<T>> {
    let d = roe.dim;
    if !(roe.c > T::zero()) {
        return Err(Error::InvalidState(format!("degenerate Roe sound speed {}", roe.c)));
    }
    let nn = linalg::norm(&n[..d]);
    if (nn - T::one()).abs() > T::lit(1e-6) {
        return Err(Error::InvalidState(format!("direction has norm {nn}, expected 1")));
    }
    Ok(eig_decompose_unchecked(roe, n, gas))
}

pub(crate) fn eig_decompose_unchecked<T: Real>(roe: &RoeState<T>, n: &[T], gas: &GasModel<T>) -> Eigensystem<T> {
    let d = roe.dim;
    let nvar = d + 2;
    let (v, h, c) = (&roe.v, roe.h, roe.c);
    let vn = linalg::dot(&v[..d], &n[..d]);
    let q = T::half() * linalg::dot(&v[..d], &v[..d]);
    let b1 = gas.gm1() / (c * c);
    let b2 = b1 * q;
    let t = tangents(n, d);
    let last = nvar - 1;

    let mut r = linalg::zero_mat();
    let mut li = linalg::zero_mat();
    let mut lambda = linalg::zero_vec();

    // acoustic (v·n − c)
    lambda[0] = vn - c;
    r[0][0] = T::one();
    for k in 0..d {
        r[1 + k][0] = v[k] - c * n[k];
    }
    r[d + 1][0] = h - c * vn;
    li[0][0] = T::half() * (b2 + vn / c);
    for k in 0..d {
        li[0][1 + k] = T::half() * (-b1 * v[k] - n[k] / c);
    }
    li[0][d + 1] = T::half() * b1;

    // entropy
    lambda[1] = vn;
    r[0][1] = T::one();
    for k in 0..d {
        r[1 + k][1] = v[k];
    }
    r[d + 1][1] = q;
    li[1][0] = T::one() - b2;
    for k in 0..d {
        li[1][1 + k] = b1 * v[k];
    }
    li[1][d + 1] = -b1;

    // shear
    for (s, tk) in t.iter().enumerate().take(d - 1) {
        let col = 2 + s;
        lambda[col] = vn;
        let vt = linalg::dot(&v[..d], &tk[..d]);
        for k in 0..d {
            r[1 + k][col] = tk[k];
            li[col][1 + k] = tk[k];
        }
        r[d + 1][col] = vt;
        li[col][0] = -vt;
    }

    // acoustic (v·n + c)
    lambda[last] = vn + c;
    r[0][last] = T::one();
    for k in 0..d {
        r[1 + k][last] = v[k] + c * n[k];
    }
    r[d + 1][last] = h + c * vn;
    li[last][0] = T::half() * (b2 - vn / c);
    for k in 0..d {
        li[last][1 + k] = T::half() * (-b1 * v[k] + n[k] / c);
    }
    li[last][d + 1] = T::half() * b1;

    Eigensystem { nvar, r, lambda, r_inv: li }
}

/// `|v·n| + c`.
pub fn max_wave_speed<T: Real>(u: &State<T>, n: &[T], gas: &GasModel<T>) -> Result<T> {
    let p = check_admissible(u, gas)?;
    let v = u.velocity();
    let vn = linalg::dot(&v[..u.dim], &n[..u.dim]);
    Ok(vn.abs() + (gas.gamma * p / u.rho).sqrt())
}
