//! Single-patch B-Spline geometry mapping from the reference domain `[0,1]^d`, its Jacobian,
//! span-wise Gauss-Legendre quadrature and the two benchmark patches.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{self, DimMat, DimVec};
use crate::scalar::Real;
use crate::splines::{KnotVector, TensorBasis};
use crate::MAX_DIM;

/// Gauss-Legendre nodes and weights on `[-1, 1]`, computed in double precision.
pub fn gauss_legendre(q: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(q >= 1, "need at least one quadrature point");
    let mut nodes = vec![0.0; q];
    let mut weights = vec![0.0; q];
    let qf = q as f64;
    for i in 0..q.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (qf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=q {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pq = if q == 1 { x } else { p1 };
            let pqm1 = if q == 1 { 1.0 } else { p0 };
            dp = qf * (x * pq - pqm1) / (x * x - 1.0);
            let dx = pq / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        if q == 1 {
            x = 0.0;
            dp = 1.0;
        }
        nodes[i] = -x;
        nodes[q - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[q - 1 - i] = w;
    }
    if q == 1 {
        weights[0] = 2.0;
    }
    (nodes, weights)
}

/// Quadrature points of one non-empty knot span.
#[derive(Clone, Debug)]
pub struct SpanRule<T> {
    /// Knot span index `s` (the span `[t_s, t_{s+1})`).
    pub span: usize,
    pub points: Vec<T>,
    pub weights: Vec<T>,
}

/// Per-direction Gauss-Legendre rules grouped by knot span.
#[derive(Clone, Debug)]
pub struct QuadratureRule<T> {
    pub points_per_span: usize,
    pub directions: Vec<Vec<SpanRule<T>>>,
}

/// Maps `q` Gauss points into every non-empty span of every direction of `basis`.
pub fn build_quadrature<T: Real>(basis: &TensorBasis<T>, q: usize) -> Result<QuadratureRule<T>> {
    if q == 0 {
        return Err(Error::Geometry("quadrature needs at least one point per span".into()));
    }
    let (nodes, weights) = gauss_legendre(q);
    let directions = basis
        .directions()
        .iter()
        .map(|kv| {
            kv.nonempty_spans()
                .into_iter()
                .map(|s| {
                    let (a, b) = (kv.knots()[s], kv.knots()[s + 1]);
                    let half = (b - a) * T::half();
                    let mid = (a + b) * T::half();
                    SpanRule {
                        span: s,
                        points: nodes.iter().map(|&x| mid + half * T::lit(x)).collect(),
                        weights: weights.iter().map(|&w| half * T::lit(w)).collect(),
                    }
                })
                .collect()
        })
        .collect();
    Ok(QuadratureRule { points_per_span: q, directions })
}

impl<T: Real> QuadratureRule<T> {
    /// All points of direction `l` as `(span, point, weight)` triples.
    pub fn flat(&self, l: usize) -> impl Iterator<Item = (usize, T, T)> + '_ {
        self.directions[l]
            .iter()
            .flat_map(|r| r.points.iter().zip(&r.weights).map(move |(&x, &w)| (r.span, x, w)))
    }
}

/// Jacobian `J_{kl} = ∂x_k/∂ξ_l` of the geometry map at a parameter point.
#[derive(Clone, Copy, Debug)]
pub struct Jacobian<T> {
    pub dim: usize,
    pub matrix: DimMat<T>,
    pub det: T,
}

impl<T: Real> Jacobian<T> {
    pub fn inverse(&self) -> DimMat<T> {
        linalg::inverse(&self.matrix, self.dim)
    }

    /// Physical gradient `J^{-T} ∇̂` of a function with parametric gradient `grad_ref`.
    pub fn push_forward(&self, inv: &DimMat<T>, grad_ref: &DimVec<T>) -> DimVec<T> {
        let mut out = [T::zero(); MAX_DIM];
        for (k, o) in out.iter_mut().enumerate().take(self.dim) {
            for l in 0..self.dim {
                *o += inv[l][k] * grad_ref[l];
            }
        }
        out
    }
}

/// One of the `2d` faces of the reference cube: `ξ_axis = 0` (`upper == false`) or `= 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Side {
    pub axis: usize,
    pub upper: bool,
}

impl Side {
    pub fn all(dim: usize) -> impl Iterator<Item = Side> {
        (0..dim).flat_map(|axis| [Side { axis, upper: false }, Side { axis, upper: true }])
    }

    /// Flat id `2 * axis + upper`.
    pub fn id(self) -> usize {
        2 * self.axis + usize::from(self.upper)
    }

    pub fn from_id(id: usize) -> Self {
        Side { axis: id / 2, upper: id % 2 == 1 }
    }

    /// Name used in configuration files: `xi0_min`, `xi0_max`, `xi1_min`, ...
    pub fn name(self) -> String {
        format!("xi{}_{}", self.axis, if self.upper { "max" } else { "min" })
    }

    pub fn parse(name: &str) -> Option<Self> {
        let rest = name.strip_prefix("xi")?;
        let (axis, end) = rest.split_once('_')?;
        let axis: usize = axis.parse().ok()?;
        match end {
            "min" => Some(Side { axis, upper: false }),
            "max" => Some(Side { axis, upper: true }),
            _ => None,
        }
    }
}

/// Isoparametric B-Spline patch `x(ξ) = Σ_j P_j φ_j(ξ)`.
#[derive(Clone, Debug)]
pub struct GeometryMap<T> {
    basis: TensorBasis<T>,
    control: Vec<DimVec<T>>,
    orientation: T,
}

impl<T: Real> GeometryMap<T> {
    /// Builds the map and checks that `det J` is non-zero with constant sign at all quadrature
    /// points (`p + 1` Gauss points per span and direction).
    pub fn new(basis: TensorBasis<T>, control: Vec<DimVec<T>>) -> Result<Self> {
        if control.len() != basis.len() {
            return Err(Error::Geometry(format!(
                "{} control points for {} basis functions",
                control.len(),
                basis.len()
            )));
        }
        let mut geo = Self { basis, control, orientation: T::one() };
        let q = geo.default_points_per_span();
        let quad = build_quadrature(&geo.basis, q)?;
        let mut sign = 0i8;
        let mut min_abs = T::infinity();
        let mut failure = None;
        geo.for_each_quadrature_point(&quad, |xi, _| {
            if failure.is_some() {
                return;
            }
            match geo.jacobian(xi) {
                Ok(j) => {
                    let s = if j.det > T::zero() { 1 } else if j.det < T::zero() { -1 } else { 0 };
                    if s == 0 || (sign != 0 && s != sign) || !j.det.is_finite() {
                        failure = Some(format!("det J = {} at ξ = {:?}", j.det, &xi[..geo.dim()]));
                    }
                    sign = s;
                    min_abs = min_abs.min(j.det.abs());
                }
                Err(e) => failure = Some(e.to_string()),
            }
        });
        if let Some(msg) = failure {
            return Err(Error::Geometry(format!("singular or folded parameterization: {msg}")));
        }
        geo.orientation = if sign < 0 { -T::one() } else { T::one() };
        Ok(geo)
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn basis(&self) -> &TensorBasis<T> {
        &self.basis
    }

    pub fn control_points(&self) -> &[DimVec<T>] {
        &self.control
    }

    /// Sign of `det J` over the patch.
    pub fn orientation(&self) -> T {
        self.orientation
    }

    /// `max_l (p_l + 1)`, the default Gauss points per span.
    pub fn default_points_per_span(&self) -> usize {
        self.basis.directions().iter().map(|kv| kv.degree() + 1).max().unwrap_or(1)
    }

    fn check_reference(&self, xi: &[T]) -> Result<()> {
        for &x in &xi[..self.dim()] {
            if x.is_nan() || x < T::zero() || x > T::one() {
                return Err(Error::Domain { value: x.to_f64_lossy(), lo: 0.0, hi: 1.0 });
            }
        }
        Ok(())
    }

    pub fn map_point(&self, xi: &[T]) -> Result<DimVec<T>> {
        self.check_reference(xi)?;
        let mut x = [T::zero(); MAX_DIM];
        for (j, phi) in self.basis.eval(&xi[..self.dim()])? {
            for (k, xk) in x.iter_mut().enumerate().take(self.dim()) {
                *xk += self.control[j][k] * phi;
            }
        }
        Ok(x)
    }

    pub fn jacobian(&self, xi: &[T]) -> Result<Jacobian<T>> {
        self.check_reference(xi)?;
        let d = self.dim();
        let mut m = [[T::zero(); MAX_DIM]; MAX_DIM];
        for (j, _, grad) in self.basis.eval_with_grad(&xi[..d])? {
            for k in 0..d {
                for l in 0..d {
                    m[k][l] += self.control[j][k] * grad[l];
                }
            }
        }
        Ok(Jacobian { dim: d, matrix: m, det: linalg::det(&m, d) })
    }

    /// Physical point and Jacobian in one evaluation.
    pub fn map_with_jacobian(&self, xi: &[T]) -> Result<(DimVec<T>, Jacobian<T>)> {
        self.check_reference(xi)?;
        let d = self.dim();
        let mut x = [T::zero(); MAX_DIM];
        let mut m = [[T::zero(); MAX_DIM]; MAX_DIM];
        for (j, phi, grad) in self.basis.eval_with_grad(&xi[..d])? {
            for k in 0..d {
                x[k] += self.control[j][k] * phi;
                for l in 0..d {
                    m[k][l] += self.control[j][k] * grad[l];
                }
            }
        }
        Ok((x, Jacobian { dim: d, matrix: m, det: linalg::det(&m, d) }))
    }

    /// Visits every tensor quadrature point with its reference weight.
    pub fn for_each_quadrature_point(&self, quad: &QuadratureRule<T>, mut f: impl FnMut(&DimVec<T>, T)) {
        let d = self.dim();
        let per_dir: Vec<Vec<(usize, T, T)>> = (0..d).map(|l| quad.flat(l).collect()).collect();
        let counts: Vec<usize> = per_dir.iter().map(Vec::len).collect();
        let total: usize = counts.iter().product();
        for k in 0..total {
            let mut rest = k;
            let mut xi = [T::zero(); MAX_DIM];
            let mut w = T::one();
            for l in 0..d {
                let (_, x, wl) = per_dir[l][rest % counts[l]];
                rest /= counts[l];
                xi[l] = x;
                w *= wl;
            }
            f(&xi, w);
        }
    }

    /// `∫ |det J| dξ`, the patch area (volume).
    pub fn measure(&self, quad: &QuadratureRule<T>) -> Result<T> {
        let mut total = T::zero();
        let mut err = None;
        self.for_each_quadrature_point(quad, |xi, w| match self.jacobian(xi) {
            Ok(j) => total += w * j.det.abs(),
            Err(e) => err = Some(e),
        });
        match err {
            Some(e) => Err(e),
            None => Ok(total),
        }
    }

    /// Newton iteration for `x(ξ) = target`, started from the Greville point whose image is
    /// closest to the target. Returns `None` when the point is outside the patch.
    pub fn inverse_map(&self, target: &[T]) -> Option<DimVec<T>> {
        let d = self.dim();
        let tol = T::lit(1e-12);
        let grev = self.basis.greville_points();
        let dist2 = |a: &DimVec<T>| (0..d).fold(T::zero(), |s, k| s + (a[k] - target[k]).powi(2));
        let start = (0..grev.len())
            .min_by(|&a, &b| {
                dist2(&self.control[a]).partial_cmp(&dist2(&self.control[b])).unwrap_or(std::cmp::Ordering::Equal)
            })
            .map(|j| grev[j])?;
        let mut xi = start;
        let scale = self
            .control
            .iter()
            .flat_map(|c| c[..d].iter().map(|v| v.abs()))
            .fold(T::one(), T::max);
        for _ in 0..50 {
            let (x, jac) = self.map_with_jacobian(&xi).ok()?;
            let mut r = [T::zero(); MAX_DIM];
            for k in 0..d {
                r[k] = target[k] - x[k];
            }
            let rn = linalg::norm(&r[..d]);
            if rn <= tol * scale {
                return Some(xi);
            }
            let inv = jac.inverse();
            for l in 0..d {
                let mut step = T::zero();
                for k in 0..d {
                    step += inv[l][k] * r[k];
                }
                // Clamp to the reference domain; a point outside the patch stalls on the boundary.
                xi[l] = (xi[l] + step).max(T::zero()).min(T::one());
            }
        }
        let (x, _) = self.map_with_jacobian(&xi).ok()?;
        let rn = (0..d).fold(T::zero(), |s, k| s + (x[k] - target[k]).powi(2)).sqrt();
        if rn <= T::lit(1e-9) * scale {
            Some(xi)
        } else {
            None
        }
    }

    /// Plain-text patch description (`key = value` lines, one `cp` line per control point).
    pub fn to_patch_string(&self) -> String {
        let mut s = String::from("# igafct patch v1\n");
        let d = self.dim();
        let _ = writeln!(s, "dim = {d}");
        for (l, kv) in self.basis.directions().iter().enumerate() {
            let _ = writeln!(s, "degree.{l} = {}", kv.degree());
            let knots: Vec<String> = kv.knots().iter().map(|k| format!("{:.16e}", k.to_f64_lossy())).collect();
            let _ = writeln!(s, "knots.{l} = {}", knots.join(" "));
        }
        for c in &self.control {
            let xs: Vec<String> = c[..d].iter().map(|v| format!("{:.16e}", v.to_f64_lossy())).collect();
            let _ = writeln!(s, "cp = {}", xs.join(" "));
        }
        s
    }

    pub fn from_patch_str(text: &str) -> Result<Self> {
        let bad = |m: String| Error::Config(format!("patch file: {m}"));
        let mut dim = None;
        let mut degrees = [None; MAX_DIM];
        let mut knots: [Option<Vec<f64>>; MAX_DIM] = Default::default();
        let mut control = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) =
                line.split_once('=').ok_or_else(|| bad(format!("line {}: expected key = value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let nums = || -> Result<Vec<f64>> {
                value
                    .split_whitespace()
                    .map(|t| t.parse::<f64>().map_err(|e| bad(format!("line {}: {e}", lineno + 1))))
                    .collect()
            };
            let axis = |k: &str| -> Result<usize> {
                let l: usize = k.parse().map_err(|_| bad(format!("line {}: bad axis", lineno + 1)))?;
                if l >= MAX_DIM {
                    return Err(bad(format!("line {}: axis {l} too large", lineno + 1)));
                }
                Ok(l)
            };
            match key.split_once('.') {
                None if key == "dim" => dim = Some(value.parse::<usize>().map_err(|e| bad(e.to_string()))?),
                None if key == "cp" => control.push(nums()?),
                Some(("degree", l)) => {
                    degrees[axis(l)?] = Some(value.parse::<usize>().map_err(|e| bad(e.to_string()))?)
                }
                Some(("knots", l)) => knots[axis(l)?] = Some(nums()?),
                _ => return Err(bad(format!("line {}: unknown key `{key}`", lineno + 1))),
            }
        }
        let dim = dim.ok_or_else(|| bad("missing `dim`".into()))?;
        if dim == 0 || dim > MAX_DIM {
            return Err(bad(format!("dimension {dim} not supported")));
        }
        let mut kvs = Vec::with_capacity(dim);
        for l in 0..dim {
            let p = degrees[l].ok_or_else(|| bad(format!("missing degree.{l}")))?;
            let k = knots[l].take().ok_or_else(|| bad(format!("missing knots.{l}")))?;
            kvs.push(KnotVector::new(p, k.into_iter().map(T::lit).collect())?);
        }
        let ctrl = control
            .into_iter()
            .map(|c| {
                if c.len() != dim {
                    return Err(bad(format!("control point with {} coordinates", c.len())));
                }
                let mut p = [T::zero(); MAX_DIM];
                for (k, v) in c.into_iter().enumerate() {
                    p[k] = T::lit(v);
                }
                Ok(p)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(TensorBasis::new(kvs)?, ctrl)
    }

    pub fn write_patch_file(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_patch_string()).map_err(|source| Error::Io { path: path.into(), source })
    }

    pub fn read_patch_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.into(), source })?;
        Self::from_patch_str(&text)
    }
}

/// Axis-aligned box `[0, extent_0] × ...` with control points on the Greville grid, so that the
/// map is affine (and the identity for unit extents).
pub fn make_box<T: Real>(extent: &[T], n_per_dir: &[usize], degree: usize) -> Result<GeometryMap<T>> {
    if extent.len() != n_per_dir.len() {
        return Err(Error::Geometry("extent and resolution dimensions differ".into()));
    }
    let kvs = n_per_dir
        .iter()
        .map(|&n| KnotVector::uniform(degree, n))
        .collect::<Result<Vec<_>>>()?;
    let basis = TensorBasis::new(kvs)?;
    let control = basis
        .greville_points()
        .into_iter()
        .map(|g| {
            let mut p = [T::zero(); MAX_DIM];
            for (l, &e) in extent.iter().enumerate() {
                p[l] = g[l] * e;
            }
            p
        })
        .collect();
    GeometryMap::new(basis, control)
}

/// Unit square `[0,1]²` with `n_per_dir` uniform open B-Splines of degree `degree` per axis.
pub fn make_unit_square<T: Real>(n_per_dir: [usize; 2], degree: usize) -> Result<GeometryMap<T>> {
    make_box(&[T::one(), T::one()], &n_per_dir, degree)
}

/// Unit interval with `n` uniform open B-Splines.
pub fn make_unit_interval<T: Real>(n: usize, degree: usize) -> Result<GeometryMap<T>> {
    make_box(&[T::one()], &[n], degree)
}

/// Dimensions of the idealized U-bend channel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UBendParams {
    /// Channel width `w`.
    pub width: f64,
    /// Length `L` of each straight leg.
    pub leg_length: f64,
    /// Inner bend radius `r`.
    pub inner_radius: f64,
}

impl Default for UBendParams {
    fn default() -> Self {
        Self { width: 1.0, leg_length: 2.0, inner_radius: 0.5 }
    }
}

impl UBendParams {
    /// Area of the idealized region: two legs plus a half annulus.
    pub fn exact_area(&self) -> f64 {
        let (w, l, r) = (self.width, self.leg_length, self.inner_radius);
        2.0 * l * w + std::f64::consts::PI * ((r + w).powi(2) - r * r) / 2.0
    }

    /// Centerline length of the channel.
    pub fn centerline_length(&self) -> f64 {
        2.0 * self.leg_length + std::f64::consts::PI * (self.inner_radius + 0.5 * self.width)
    }

    /// Breakpoints of the six coarse spans along the channel (leg, four 45° arcs, leg).
    fn coarse_breaks(&self) -> [f64; 7] {
        [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0].map(|k| k / 6.0)
    }

    /// Coarse along-channel control polygon (8 points) at bend radius `radius`.
    ///
    /// The bend is centred at the origin; the lower leg runs along `y = -radius` from
    /// `x = -L` to `0`, the bend turns through `x > 0`, the upper leg returns along `y = radius`.
    /// Arc vertices lie on the circumscribed octagon so that each quadratic span is the
    /// tangent-intersection approximation of a 45° arc.
    fn coarse_polygon(&self, radius: f64) -> [[f64; 2]; 8] {
        let tan = (std::f64::consts::PI / 8.0).tan();
        let rv = radius / (std::f64::consts::PI / 8.0).cos();
        let mut pts = [[0.0; 2]; 8];
        pts[0] = [-self.leg_length, -radius];
        pts[1] = [-radius * tan, -radius];
        for k in 0..4 {
            let angle = (-67.5 + 45.0 * k as f64).to_radians();
            pts[2 + k] = [rv * angle.cos(), rv * angle.sin()];
        }
        pts[6] = [-radius * tan, radius];
        pts[7] = [-self.leg_length, radius];
        pts
    }

    /// Number of fine spans allotted to each coarse span, proportional to its centerline length.
    fn distribute_spans(&self, total: usize) -> [usize; 6] {
        let rc = self.inner_radius + 0.5 * self.width;
        let arc = rc * std::f64::consts::FRAC_PI_4;
        let lens = [self.leg_length, arc, arc, arc, arc, self.leg_length];
        let sum: f64 = lens.iter().sum();
        let mut counts = [1usize; 6];
        let spare = total - 6;
        let ideal: Vec<f64> = lens.iter().map(|l| spare as f64 * l / sum).collect();
        let mut used = 0;
        for k in 0..6 {
            let f = ideal[k].floor() as usize;
            counts[k] += f;
            used += f;
        }
        let mut order: Vec<usize> = (0..6).collect();
        order.sort_by(|&a, &b| {
            let fa = ideal[a] - ideal[a].floor();
            let fb = ideal[b] - ideal[b].floor();
            fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
        });
        for &k in order.iter().take(spare - used) {
            counts[k] += 1;
        }
        counts
    }
}

/// Single-patch U-bend: two straight legs joined by a 180° bend whose inner and outer walls are
/// quadratic B-Spline approximations of circular arcs (two spans per 90°).
///
/// Direction 0 runs along the channel, direction 1 across it (inner wall at `ξ₁ = 0`).
/// Degree 2 is obtained by exact knot insertion; other degrees interpolate the quadratic patch
/// at the Greville points of the requested basis.
pub fn make_ubend<T: Real>(params: UBendParams, n_per_dir: [usize; 2], degree: usize) -> Result<GeometryMap<T>> {
    let UBendParams { width, leg_length, inner_radius } = params;
    if !(width > 0.0 && leg_length > 0.0 && inner_radius > 0.0) {
        return Err(Error::Geometry("U-bend dimensions must be positive".into()));
    }
    let [n_along, n_across] = n_per_dir;
    if n_along < degree + 6 {
        return Err(Error::Geometry(format!(
            "U-bend needs at least {} functions along the channel",
            degree + 6
        )));
    }
    let spans = params.distribute_spans(n_along - degree);
    let breaks = params.coarse_breaks();
    let mut knots = vec![0.0; degree + 1];
    for (k, &count) in spans.iter().enumerate() {
        let (a, b) = (breaks[k], breaks[k + 1]);
        for m in 1..=count {
            if k == 5 && m == count {
                break;
            }
            knots.push(a + (b - a) * m as f64 / count as f64);
        }
    }
    knots.extend(std::iter::repeat_n(1.0, degree + 1));
    let along = KnotVector::<f64>::new(degree, knots)?;
    let across = KnotVector::<f64>::uniform(degree, n_across)?;

    // Coarse quadratic description along the channel.
    let coarse_knots: Vec<f64> = [0.0, 0.0, 0.0]
        .into_iter()
        .chain(breaks[1..6].iter().copied())
        .chain([1.0, 1.0, 1.0])
        .collect();
    let coarse = KnotVector::<f64>::new(2, coarse_knots)?;

    // Along-channel fine control points for a given radius.
    let along_ctrl: Box<dyn Fn(f64) -> Result<Vec<[f64; 2]>>> = if degree == 2 {
        let transfer = coarse.refinement_matrix(&along)?;
        Box::new(move |radius: f64| {
            let poly = params.coarse_polygon(radius);
            Ok(transfer
                .iter()
                .map(|row| {
                    let mut p = [0.0; 2];
                    for (w, c) in row.iter().zip(&poly) {
                        p[0] += w * c[0];
                        p[1] += w * c[1];
                    }
                    p
                })
                .collect())
        })
    } else {
        let grev = along.greville_points();
        let n = along.len();
        let mut colloc = vec![vec![0.0; n]; n];
        for (i, &g) in grev.iter().enumerate() {
            let (s, v) = along.eval_basis(g)?;
            for (a, &val) in v.iter().enumerate() {
                colloc[i][s + a] = val;
            }
        }
        let coarse = coarse.clone();
        Box::new(move |radius: f64| {
            let poly = params.coarse_polygon(radius);
            let mut rhs = [vec![0.0; n], vec![0.0; n]];
            for (i, &g) in grev.iter().enumerate() {
                let (s, v) = coarse.eval_basis(g)?;
                for (a, &val) in v.iter().enumerate() {
                    rhs[0][i] += val * poly[s + a][0];
                    rhs[1][i] += val * poly[s + a][1];
                }
            }
            let xs = linalg::solve_dense(colloc.clone(), rhs[0].clone())?;
            let ys = linalg::solve_dense(colloc.clone(), rhs[1].clone())?;
            Ok(xs.into_iter().zip(ys).map(|(x, y)| [x, y]).collect())
        })
    };

    // The polygon is linear in the radius; Greville interpolation across is exact.
    let across_grev = across.greville_points();
    let mut control = vec![[T::zero(); MAX_DIM]; n_along * n_across];
    for (j, &g) in across_grev.iter().enumerate() {
        let radius = inner_radius + width * g;
        for (i, p) in along_ctrl(radius)?.into_iter().enumerate() {
            control[i + n_along * j] = [T::lit(p[0]), T::lit(p[1]), T::zero()];
        }
    }
    let to_t = |kv: &KnotVector<f64>| KnotVector::new(kv.degree(), kv.knots().iter().map(|&k| T::lit(k)).collect());
    let basis = TensorBasis::new(vec![to_t(&along)?, to_t(&across)?])?;
    GeometryMap::new(basis, control)
}
