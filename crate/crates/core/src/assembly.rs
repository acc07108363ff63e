//! Consistent and lumped mass matrices, discrete divergence operators, the edge list with its
//! antisymmetric coefficients, and boundary quadrature traces.
//!
//! Assembly walks the knot-span cells of the patch in lexicographic order. Cell blocks may be
//! computed in parallel; they are scattered in cell order so results are bitwise reproducible.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{GeometryMap, QuadratureRule, Side};
use crate::linalg::{self, DimVec};
use crate::scalar::Real;
use crate::splines::TensorBasis;
use crate::MAX_DIM;

/// Row-compressed sparse matrix whose pattern is the support-overlap graph of the basis.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseOperator<T> {
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> SparseOperator<T> {
    /// Zero operator with the symmetric support-overlap pattern of `basis`.
    pub fn with_pattern(basis: &TensorBasis<T>) -> Result<Self> {
        let n = basis.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for i in 0..n {
            col_idx.extend(basis.support_overlap(i)?);
            row_ptr.push(col_idx.len());
        }
        let values = vec![T::zero(); col_idx.len()];
        Ok(Self { row_ptr, col_idx, values })
    }

    pub fn rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn row_cols(&self, i: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    fn position(&self, i: usize, j: usize) -> Option<usize> {
        let cols = self.row_cols(i);
        cols.binary_search(&j).ok().map(|k| self.row_ptr[i] + k)
    }

    /// Entry `(i, j)`, zero outside the pattern.
    pub fn get(&self, i: usize, j: usize) -> T {
        self.position(i, j).map_or(T::zero(), |k| self.values[k])
    }

    fn add(&mut self, i: usize, j: usize, v: T) {
        let k = self.position(i, j).expect("entry inside the support-overlap pattern");
        self.values[k] += v;
    }

    pub fn same_pattern(&self, other: &Self) -> bool {
        self.row_ptr == other.row_ptr && self.col_idx == other.col_idx
    }

    pub fn pattern_is_symmetric(&self) -> bool {
        (0..self.rows()).all(|i| self.row_cols(i).iter().all(|&j| self.position(j, i).is_some()))
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        (0..self.rows()).map(|i| self.row(i).fold(T::zero(), |s, (j, a)| s + a * x[j])).collect()
    }

    /// `y = Aᵀ x`.
    pub fn matvec_transpose(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.rows()];
        for i in 0..self.rows() {
            for (j, a) in self.row(i) {
                y[j] += a * x[i];
            }
        }
        y
    }

    /// Coordinate (triplet) text dump: a header line `rows nnz`, then `i j value` per entry.
    pub fn to_triplets(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} {}", self.rows(), self.nnz());
        for i in 0..self.rows() {
            for (j, v) in self.row(i) {
                let _ = writeln!(s, "{i} {j} {:.16e}", v.to_f64_lossy());
            }
        }
        s
    }
}

/// `(point, weight, values, derivatives)` of the active functions at one quadrature point.
type PointTable<T> = (T, T, Vec<T>, Vec<T>);

/// Per-direction basis values at every quadrature point of that direction.
struct DirectionTable<T> {
    /// For each span rule: (span, one entry per point).
    spans: Vec<(usize, Vec<PointTable<T>>)>,
}

fn direction_tables<T: Real>(basis: &TensorBasis<T>, quad: &QuadratureRule<T>) -> Vec<DirectionTable<T>> {
    basis
        .directions()
        .iter()
        .zip(&quad.directions)
        .map(|(kv, rules)| {
            let p = kv.degree();
            DirectionTable {
                spans: rules
                    .iter()
                    .map(|r| {
                        let pts = r
                            .points
                            .iter()
                            .zip(&r.weights)
                            .map(|(&x, &w)| {
                                let mut v = vec![T::zero(); p + 1];
                                let mut d = vec![T::zero(); p + 1];
                                kv.basis_and_deriv_in_span(r.span, x, &mut v, &mut d);
                                (x, w, v, d)
                            })
                            .collect();
                        (r.span, pts)
                    })
                    .collect(),
            }
        })
        .collect()
}

/// Dense cell blocks of `M` and `C^l`, with the flat indices of the active functions.
struct CellBlock<T> {
    dofs: Vec<usize>,
    mass: Vec<T>,
    div: Vec<Vec<T>>,
}

fn assemble_cell<T: Real>(
    geo: &GeometryMap<T>,
    tables: &[DirectionTable<T>],
    cell: &[usize; MAX_DIM],
) -> CellBlock<T> {
    let basis = geo.basis();
    let d = geo.dim();
    let degrees: Vec<usize> = basis.directions().iter().map(|k| k.degree()).collect();
    let counts: Vec<usize> = degrees.iter().map(|p| p + 1).collect();
    let nloc: usize = counts.iter().product();
    let spans: Vec<&(usize, Vec<PointTable<T>>)> = (0..d).map(|l| &tables[l].spans[cell[l]]).collect();

    let mut dofs = Vec::with_capacity(nloc);
    let mut locals = Vec::with_capacity(nloc);
    for a in 0..nloc {
        let mut rest = a;
        let mut multi = [0usize; MAX_DIM];
        let mut local = [0usize; MAX_DIM];
        for l in 0..d {
            local[l] = rest % counts[l];
            rest /= counts[l];
            multi[l] = spans[l].0 - degrees[l] + local[l];
        }
        dofs.push(basis.flat_index(&multi[..d]));
        locals.push(local);
    }

    let mut mass = vec![T::zero(); nloc * nloc];
    let mut div = vec![vec![T::zero(); nloc * nloc]; d];
    let npts: Vec<usize> = spans.iter().map(|s| s.1.len()).collect();
    let total: usize = npts.iter().product();
    let mut phi = vec![T::zero(); nloc];
    let mut grad_ref = vec![[T::zero(); MAX_DIM]; nloc];
    let mut grad = vec![[T::zero(); MAX_DIM]; nloc];
    for q in 0..total {
        let mut rest = q;
        let mut qi = [0usize; MAX_DIM];
        let mut w = T::one();
        for l in 0..d {
            qi[l] = rest % npts[l];
            rest /= npts[l];
            w *= spans[l].1[qi[l]].1;
        }
        for a in 0..nloc {
            let mut v = T::one();
            for l in 0..d {
                v *= spans[l].1[qi[l]].2[locals[a][l]];
            }
            phi[a] = v;
            for g in 0..d {
                let mut prod = T::one();
                for l in 0..d {
                    let entry = &spans[l].1[qi[l]];
                    prod *= if l == g { entry.3[locals[a][l]] } else { entry.2[locals[a][l]] };
                }
                grad_ref[a][g] = prod;
            }
        }
        let mut jm = [[T::zero(); MAX_DIM]; MAX_DIM];
        let ctrl = geo.control_points();
        for a in 0..nloc {
            let c = &ctrl[dofs[a]];
            for k in 0..d {
                for l in 0..d {
                    jm[k][l] += c[k] * grad_ref[a][l];
                }
            }
        }
        let det = linalg::det(&jm, d);
        let inv = linalg::inverse(&jm, d);
        let jw = w * det.abs();
        for a in 0..nloc {
            let mut g = [T::zero(); MAX_DIM];
            for k in 0..d {
                for l in 0..d {
                    g[k] += inv[l][k] * grad_ref[a][l];
                }
            }
            grad[a] = g;
        }
        for a in 0..nloc {
            let pa = phi[a] * jw;
            for b in a..nloc {
                let v = pa * phi[b];
                mass[a * nloc + b] += v;
                if b != a {
                    mass[b * nloc + a] += v;
                }
            }
            for b in 0..nloc {
                for (l, dl) in div.iter_mut().enumerate() {
                    dl[a * nloc + b] += pa * grad[b][l];
                }
            }
        }
    }
    CellBlock { dofs, mass, div }
}

/// Consistent mass matrix and divergence operators from one pass over the cells.
pub fn assemble_operators<T: Real>(
    geo: &GeometryMap<T>,
    quad: &QuadratureRule<T>,
) -> Result<(SparseOperator<T>, Vec<SparseOperator<T>>)> {
    let basis = geo.basis();
    let d = geo.dim();
    let tables = direction_tables(basis, quad);
    let ncells: Vec<usize> = tables.iter().map(|t| t.spans.len()).collect();
    let total: usize = ncells.iter().product();
    let blocks: Vec<CellBlock<T>> = (0..total)
        .into_par_iter()
        .map(|c| {
            let mut rest = c;
            let mut cell = [0usize; MAX_DIM];
            for l in 0..d {
                cell[l] = rest % ncells[l];
                rest /= ncells[l];
            }
            assemble_cell(geo, &tables, &cell)
        })
        .collect();

    let mut mass = SparseOperator::with_pattern(basis)?;
    let mut div = vec![mass.clone(); d];
    for block in &blocks {
        let n = block.dofs.len();
        for (a, &i) in block.dofs.iter().enumerate() {
            for (b, &j) in block.dofs.iter().enumerate() {
                mass.add(i, j, block.mass[a * n + b]);
                for l in 0..d {
                    div[l].add(i, j, block.div[l][a * n + b]);
                }
            }
        }
    }
    Ok((mass, div))
}

/// `m_ij = ∫ φ_i φ_j dx`.
pub fn assemble_mass<T: Real>(geo: &GeometryMap<T>, quad: &QuadratureRule<T>) -> Result<SparseOperator<T>> {
    Ok(assemble_operators(geo, quad)?.0)
}

/// `c^l_ij = ∫ φ_i ∂φ_j/∂x_l dx` for `l = 0..d`.
pub fn assemble_divergence<T: Real>(
    geo: &GeometryMap<T>,
    quad: &QuadratureRule<T>,
) -> Result<Vec<SparseOperator<T>>> {
    Ok(assemble_operators(geo, quad)?.1)
}

/// Row-sum lumped mass matrix `M_L = diag(m_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LumpedMass<T> {
    pub m: Vec<T>,
}

impl<T: Real> LumpedMass<T> {
    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn total(&self) -> T {
        self.m.iter().copied().sum()
    }
}

pub fn lump_mass<T: Real>(mass: &SparseOperator<T>) -> Result<LumpedMass<T>> {
    let m: Vec<T> = (0..mass.rows()).map(|i| mass.row(i).map(|(_, v)| v).sum()).collect();
    if let Some((i, v)) = m.iter().enumerate().find(|(_, &v)| !(v > T::zero())) {
        return Err(Error::Assembly(format!("non-positive lumped mass {v} in row {i}")));
    }
    Ok(LumpedMass { m })
}

/// Unordered DOF pair `{i, j}` with `i < j`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge<T> {
    pub i: usize,
    pub j: usize,
    pub m_ij: T,
    /// `e_ij = (c_ji - c_ij) / 2`; `e_ji = -e_ij`.
    pub e_ij: DimVec<T>,
    pub norm_e: T,
    /// `e_ij / |e_ij|` (zero when `|e_ij| = 0`).
    pub dir: DimVec<T>,
}

/// Symmetric boundary coupling `s_ij = (c_ij + c_ji) / 2` between DOFs on a common face.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryPair<T> {
    pub i: usize,
    pub j: usize,
    pub s_ij: DimVec<T>,
}

/// Edge-based representation of the divergence operators.
///
/// The Galerkin term `Σ_j c_ji·F_j` of row `i` splits exactly into
/// `Σ_{j≠i} e_ij·(F_j − F_i)` plus the boundary part `Σ_j s_ij·F_j + σ_i·F_i`, where
/// `σ_i = Σ_j e_ij`. Both `s_ij` and `σ_i` vanish unless the supports reach the boundary.
#[derive(Clone, Debug)]
pub struct EdgeSet<T> {
    pub dim: usize,
    pub n_dofs: usize,
    pub edges: Vec<Edge<T>>,
    /// Pairs `i <= j` on a common face, including `i == j`.
    pub boundary_pairs: Vec<BoundaryPair<T>>,
    /// `(i, σ_i)` for DOFs on the boundary layer.
    pub sigma: Vec<(usize, DimVec<T>)>,
}

/// Faces (as bit mask over side ids) on whose trace the basis function `i` does not vanish.
fn face_mask<T: Real>(basis: &TensorBasis<T>, i: usize) -> u32 {
    let mi = basis.multi_index(i);
    let mut mask = 0;
    for l in 0..basis.dim() {
        if mi[l] == 0 {
            mask |= 1 << Side { axis: l, upper: false }.id();
        }
        if mi[l] + 1 == basis.direction(l).len() {
            mask |= 1 << Side { axis: l, upper: true }.id();
        }
    }
    mask
}

pub fn build_edges<T: Real>(
    basis: &TensorBasis<T>,
    mass: &SparseOperator<T>,
    div: &[SparseOperator<T>],
) -> Result<EdgeSet<T>> {
    let d = div.len();
    if d != basis.dim() || mass.rows() != basis.len() {
        return Err(Error::Assembly("operators do not match the basis".into()));
    }
    if div.iter().any(|c| !c.same_pattern(mass)) {
        return Err(Error::Assembly("mass and divergence operators have different sparsity patterns".into()));
    }
    if !mass.pattern_is_symmetric() {
        return Err(Error::Assembly("sparsity pattern is not symmetric".into()));
    }
    let n = basis.len();
    let masks: Vec<u32> = (0..n).map(|i| face_mask(basis, i)).collect();
    let mut edges = Vec::with_capacity((mass.nnz() - n) / 2);
    let mut boundary_pairs = Vec::new();
    let mut sigma_all = vec![[T::zero(); MAX_DIM]; n];
    for i in 0..n {
        for &j in mass.row_cols(i) {
            let mut e = [T::zero(); MAX_DIM];
            for l in 0..d {
                e[l] = (div[l].get(j, i) - div[l].get(i, j)) * T::half();
                sigma_all[i][l] += e[l];
            }
            if masks[i] & masks[j] != 0 && i <= j {
                let mut s = [T::zero(); MAX_DIM];
                for l in 0..d {
                    s[l] = (div[l].get(i, j) + div[l].get(j, i)) * T::half();
                }
                boundary_pairs.push(BoundaryPair { i, j, s_ij: s });
            }
            if j > i {
                let norm_e = linalg::norm(&e[..d]);
                let mut dir = [T::zero(); MAX_DIM];
                if norm_e > T::zero() {
                    for l in 0..d {
                        dir[l] = e[l] / norm_e;
                    }
                }
                edges.push(Edge { i, j, m_ij: mass.get(i, j), e_ij: e, norm_e, dir });
            }
        }
    }
    let sigma = (0..n).filter(|&i| masks[i] != 0).map(|i| (i, sigma_all[i])).collect();
    Ok(EdgeSet { dim: d, n_dofs: n, edges, boundary_pairs, sigma })
}

/// Quadrature point on a patch face.
#[derive(Clone, Debug)]
pub struct BoundaryPoint<T> {
    pub xi: DimVec<T>,
    pub x: DimVec<T>,
    /// Reference weight times the surface measure.
    pub weight: T,
    pub normal: DimVec<T>,
    /// Non-zero basis functions on the face at this point.
    pub active: Vec<(usize, T)>,
}

/// Quadrature trace of one face of the patch.
#[derive(Clone, Debug)]
pub struct BoundaryTrace<T> {
    pub side: Side,
    pub points: Vec<BoundaryPoint<T>>,
}

impl<T: Real> BoundaryTrace<T> {
    /// Length (area) of the face.
    pub fn measure(&self) -> T {
        self.points.iter().map(|p| p.weight).sum()
    }
}

/// Face quadrature with outward unit normals from Nanson's relation
/// `n ds = ±|det J| J^{-T} e_axis dξ'`.
pub fn assemble_boundary<T: Real>(
    geo: &GeometryMap<T>,
    quad: &QuadratureRule<T>,
    side: Side,
) -> Result<BoundaryTrace<T>> {
    let d = geo.dim();
    if side.axis >= d {
        return Err(Error::Geometry(format!("side {} does not exist in {d} dimensions", side.name())));
    }
    let others: Vec<usize> = (0..d).filter(|&l| l != side.axis).collect();
    let per_dir: Vec<Vec<(usize, T, T)>> = others.iter().map(|&l| quad.flat(l).collect()).collect();
    let counts: Vec<usize> = per_dir.iter().map(Vec::len).collect();
    let total: usize = counts.iter().product();
    let fixed = if side.upper { T::one() } else { T::zero() };
    let sign = if side.upper { T::one() } else { -T::one() };
    let mut points = Vec::with_capacity(total);
    for k in 0..total {
        let mut rest = k;
        let mut xi = [T::zero(); MAX_DIM];
        let mut w = T::one();
        xi[side.axis] = fixed;
        for (m, &l) in others.iter().enumerate() {
            let (_, x, wl) = per_dir[m][rest % counts[m]];
            rest /= counts[m];
            xi[l] = x;
            w *= wl;
        }
        let (x, jac) = geo.map_with_jacobian(&xi)?;
        let inv = jac.inverse();
        let mut nvec = [T::zero(); MAX_DIM];
        for (c, nc) in nvec.iter_mut().enumerate().take(d) {
            *nc = sign * inv[side.axis][c];
        }
        let len = linalg::norm(&nvec[..d]);
        for nc in nvec.iter_mut().take(d) {
            *nc /= len;
        }
        let active = geo
            .basis()
            .eval(&xi[..d])?
            .into_iter()
            .filter(|&(_, v)| v != T::zero())
            .collect();
        points.push(BoundaryPoint { xi, x, weight: w * jac.det.abs() * len, normal: nvec, active });
    }
    Ok(BoundaryTrace { side, points })
}
