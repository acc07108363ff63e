//! Univariate B-Spline bases on open knot vectors and their tensor products.
//!
//! Evaluation uses the Cox-de Boor triangle; spans are half-open `[t_s, t_{s+1})`
//! except for the last non-empty span, which is closed so that the right end point
//! of the parameter range evaluates to the interpolating end function.

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::MAX_DIM;

/// Open (clamped) knot vector together with the polynomial degree.
#[derive(Clone, Debug, PartialEq)]
pub struct KnotVector<T> {
    degree: usize,
    knots: Vec<T>,
}

impl<T: Real> KnotVector<T> {
    /// Validates an open knot vector: non-decreasing, end knots repeated exactly `degree + 1`
    /// times and at least `degree + 1` basis functions.
    pub fn new(degree: usize, knots: Vec<T>) -> Result<Self> {
        if degree == 0 {
            return Err(Error::KnotVector("degree must be at least 1".into()));
        }
        if knots.iter().any(|k| !k.is_finite()) {
            return Err(Error::KnotVector("non-finite knot".into()));
        }
        if knots.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::KnotVector("knots must be non-decreasing".into()));
        }
        if knots.len() < 2 * (degree + 1) {
            return Err(Error::KnotVector(format!(
                "need at least {} knots for degree {degree}, got {}",
                2 * (degree + 1),
                knots.len()
            )));
        }
        let first = knots[0];
        let last = knots[knots.len() - 1];
        if !(first < last) {
            return Err(Error::KnotVector("empty parameter range".into()));
        }
        let lead = knots.iter().take_while(|&&k| k == first).count();
        let trail = knots.iter().rev().take_while(|&&k| k == last).count();
        if lead != degree + 1 || trail != degree + 1 {
            return Err(Error::KnotVector(format!(
                "end knots must be repeated exactly {} times (found {lead} and {trail})",
                degree + 1
            )));
        }
        // Interior multiplicity above the degree would disconnect the basis.
        let mut run = 1;
        for w in knots[degree..knots.len() - degree].windows(2) {
            run = if w[0] == w[1] { run + 1 } else { 1 };
            if run > degree {
                return Err(Error::KnotVector("interior knot multiplicity exceeds degree".into()));
            }
        }
        Ok(Self { degree, knots })
    }

    /// Open knot vector on `[0, 1]` with `n` basis functions and equidistant interior knots.
    pub fn uniform(degree: usize, n: usize) -> Result<Self> {
        if n < degree + 1 {
            return Err(Error::KnotVector(format!(
                "{n} basis functions is fewer than degree + 1 = {}",
                degree + 1
            )));
        }
        let spans = n - degree;
        let mut knots = vec![T::zero(); degree + 1];
        for k in 1..spans {
            knots.push(T::from_usize_lossy(k) / T::from_usize_lossy(spans));
        }
        knots.extend(std::iter::repeat_n(T::one(), degree + 1));
        Self::new(degree, knots)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[T] {
        &self.knots
    }

    /// Always true; only clamped knot vectors are constructible.
    pub fn is_open(&self) -> bool {
        true
    }

    /// Number of basis functions.
    pub fn len(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn first(&self) -> T {
        self.knots[0]
    }

    pub fn last(&self) -> T {
        self.knots[self.knots.len() - 1]
    }

    /// Distinct breakpoints, including both ends.
    pub fn breakpoints(&self) -> Vec<T> {
        let mut out: Vec<T> = Vec::new();
        for &k in &self.knots {
            if out.last() != Some(&k) {
                out.push(k);
            }
        }
        out
    }

    /// Indices `s` of the non-empty spans `[t_s, t_{s+1})`.
    pub fn nonempty_spans(&self) -> Vec<usize> {
        (self.degree..self.len()).filter(|&s| self.knots[s] < self.knots[s + 1]).collect()
    }

    fn check_domain(&self, x: T) -> Result<()> {
        if x.is_nan() || x < self.first() || x > self.last() {
            return Err(Error::Domain {
                value: x.to_f64_lossy(),
                lo: self.first().to_f64_lossy(),
                hi: self.last().to_f64_lossy(),
            });
        }
        Ok(())
    }

    /// Span index `s` with `t_s <= x < t_{s+1}` (closed on the last non-empty span).
    pub fn find_span(&self, x: T) -> Result<usize> {
        self.check_domain(x)?;
        let n = self.len();
        if x >= self.knots[n] {
            // Right end: last non-empty span.
            let mut s = n - 1;
            while self.knots[s] == self.knots[s + 1] {
                s -= 1;
            }
            return Ok(s);
        }
        let (mut lo, mut hi) = (self.degree, n);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if x < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(lo)
    }

    /// Values of the `p + 1` basis functions active at `x`, starting at the returned index.
    pub fn eval_basis(&self, x: T) -> Result<(usize, Vec<T>)> {
        let span = self.find_span(x)?;
        let mut values = vec![T::zero(); self.degree + 1];
        self.basis_in_span(span, x, &mut values);
        Ok((span - self.degree, values))
    }

    /// First derivatives of the active basis functions at `x`.
    pub fn eval_basis_deriv(&self, x: T) -> Result<(usize, Vec<T>)> {
        let span = self.find_span(x)?;
        let p = self.degree;
        let mut values = vec![T::zero(); p + 1];
        let mut derivs = vec![T::zero(); p + 1];
        self.basis_and_deriv_in_span(span, x, &mut values, &mut derivs);
        Ok((span - p, derivs))
    }

    /// Values and first derivatives in one pass.
    pub fn eval_basis_and_deriv(&self, x: T) -> Result<(usize, Vec<T>, Vec<T>)> {
        let span = self.find_span(x)?;
        let p = self.degree;
        let mut values = vec![T::zero(); p + 1];
        let mut derivs = vec![T::zero(); p + 1];
        self.basis_and_deriv_in_span(span, x, &mut values, &mut derivs);
        Ok((span - p, values, derivs))
    }

    /// Cox-de Boor triangle for the non-vanishing functions of `span`.
    pub(crate) fn basis_in_span(&self, span: usize, x: T, out: &mut [T]) {
        KnotVectorView { degree: self.degree, knots: &self.knots }.basis_in_span(span, x, out);
    }

    /// Values of degree `p` and derivatives from the degree `p - 1` functions:
    /// `N'_{i,p} = p (N_{i,p-1} / (t_{i+p} - t_i) - N_{i+1,p-1} / (t_{i+p+1} - t_{i+1}))`.
    pub(crate) fn basis_and_deriv_in_span(&self, span: usize, x: T, values: &mut [T], derivs: &mut [T]) {
        let p = self.degree;
        let t = &self.knots;
        // Lower-degree values N_{span-p+1 .. span, p-1}.
        let mut low = vec![T::zero(); p];
        let lower = KnotVectorView { degree: p - 1, knots: t };
        lower.basis_in_span(span, x, &mut low);
        self.basis_in_span(span, x, values);
        let pf = T::from_usize_lossy(p);
        for k in 0..=p {
            let i = span - p + k;
            let mut d = T::zero();
            // N_{i,p-1} is low[k-1] (active lower functions start at span-p+1).
            if k >= 1 {
                let denom = t[i + p] - t[i];
                if denom > T::zero() {
                    d += low[k - 1] / denom;
                }
            }
            if k < p {
                let denom = t[i + p + 1] - t[i + 1];
                if denom > T::zero() {
                    d -= low[k] / denom;
                }
            }
            derivs[k] = pf * d;
        }
    }

    /// Greville abscissae `(t_{i+1} + ... + t_{i+p}) / p`.
    pub fn greville_points(&self) -> Vec<T> {
        let p = self.degree;
        let pf = T::from_usize_lossy(p);
        (0..self.len())
            .map(|i| self.knots[i + 1..=i + p].iter().copied().sum::<T>() / pf)
            .collect()
    }

    /// Range `lo..=hi` of basis indices whose support overlaps that of `i` on a set of
    /// positive length.
    pub fn overlap_window(&self, i: usize) -> (usize, usize) {
        let p = self.degree;
        let t = &self.knots;
        let overlaps = |j: usize| {
            let a = if t[i] > t[j] { t[i] } else { t[j] };
            let b = if t[i + p + 1] < t[j + p + 1] { t[i + p + 1] } else { t[j + p + 1] };
            a < b
        };
        let lo = (i.saturating_sub(p)..=i).find(|&j| overlaps(j)).unwrap_or(i);
        let hi = (i..=(i + p).min(self.len() - 1)).rev().find(|&j| overlaps(j)).unwrap_or(i);
        (lo, hi)
    }

    /// Knot vector with the additional knots `extra` merged in (multiset union).
    pub fn with_inserted(&self, extra: &[T]) -> Result<Self> {
        let mut knots = self.knots.clone();
        knots.extend_from_slice(extra);
        knots.sort_by(|a, b| a.partial_cmp(b).expect("finite knots"));
        Self::new(self.degree, knots)
    }

    /// Dense transfer matrix `T` (fine × coarse) such that fine control points are `T · coarse`,
    /// built by repeated single-knot (Boehm) insertion. `finer` must contain every knot of
    /// `self` with at least the same multiplicity.
    pub fn refinement_matrix(&self, finer: &KnotVector<T>) -> Result<Vec<Vec<T>>> {
        if finer.degree != self.degree || finer.first() != self.first() || finer.last() != self.last() {
            return Err(Error::KnotVector("refinement must keep degree and parameter range".into()));
        }
        // Knots present in `finer` but not in `self` (multiset difference).
        let mut extra = Vec::new();
        let (mut a, mut b) = (0, 0);
        while b < finer.knots.len() {
            if a < self.knots.len() && self.knots[a] == finer.knots[b] {
                a += 1;
                b += 1;
            } else if a < self.knots.len() && self.knots[a] < finer.knots[b] {
                return Err(Error::KnotVector("finer knot vector does not contain coarse knots".into()));
            } else {
                extra.push(finer.knots[b]);
                b += 1;
            }
        }
        if a != self.knots.len() {
            return Err(Error::KnotVector("finer knot vector does not contain coarse knots".into()));
        }

        let n0 = self.len();
        let mut rows: Vec<Vec<T>> = (0..n0)
            .map(|i| (0..n0).map(|j| if i == j { T::one() } else { T::zero() }).collect())
            .collect();
        let mut current = self.knots.clone();
        let p = self.degree;
        for u in extra {
            let n = current.len() - p - 1;
            let view = KnotVectorView { degree: p, knots: &current };
            let k = view.span_of(u, n);
            let mut next = Vec::with_capacity(n + 1);
            for i in 0..=n {
                let row: Vec<T> = if i + p <= k {
                    rows[i].clone()
                } else if i > k {
                    rows[i - 1].clone()
                } else {
                    let alpha = (u - current[i]) / (current[i + p] - current[i]);
                    rows[i - 1]
                        .iter()
                        .zip(&rows[i])
                        .map(|(&prev, &cur)| (T::one() - alpha) * prev + alpha * cur)
                        .collect()
                };
                next.push(row);
            }
            rows = next;
            let pos = current.partition_point(|&x| x <= u);
            current.insert(pos, u);
        }
        Ok(rows)
    }
}

/// Borrowed knot data of arbitrary degree, used for lower-degree recursions.
struct KnotVectorView<'a, T> {
    degree: usize,
    knots: &'a [T],
}

impl<T: Real> KnotVectorView<'_, T> {
    fn basis_in_span(&self, span: usize, x: T, out: &mut [T]) {
        let p = self.degree;
        let t = self.knots;
        let mut left = vec![T::zero(); p + 1];
        let mut right = vec![T::zero(); p + 1];
        out[0] = T::one();
        for j in 1..=p {
            left[j] = x - t[span + 1 - j];
            right[j] = t[span + j] - x;
            let mut saved = T::zero();
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = if denom > T::zero() { out[r] / denom } else { T::zero() };
                out[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            out[j] = saved;
        }
    }

    fn span_of(&self, u: T, n: usize) -> usize {
        let mut s = self.degree;
        while s + 1 < n && self.knots[s + 1] <= u {
            s += 1;
        }
        s
    }
}

/// Tensor product of univariate open B-Spline bases; flat indices are lexicographic with the
/// first direction running fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorBasis<T> {
    directions: Vec<KnotVector<T>>,
}

impl<T: Real> TensorBasis<T> {
    pub fn new(directions: Vec<KnotVector<T>>) -> Result<Self> {
        if directions.is_empty() || directions.len() > MAX_DIM {
            return Err(Error::KnotVector(format!(
                "tensor basis needs 1..={MAX_DIM} directions, got {}",
                directions.len()
            )));
        }
        Ok(Self { directions })
    }

    pub fn dim(&self) -> usize {
        self.directions.len()
    }

    pub fn direction(&self, l: usize) -> &KnotVector<T> {
        &self.directions[l]
    }

    pub fn directions(&self) -> &[KnotVector<T>] {
        &self.directions
    }

    pub fn shape(&self) -> [usize; MAX_DIM] {
        let mut s = [1; MAX_DIM];
        for (l, kv) in self.directions.iter().enumerate() {
            s[l] = kv.len();
        }
        s
    }

    /// Total number of tensor-product basis functions.
    pub fn len(&self) -> usize {
        self.directions.iter().map(KnotVector::len).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn multi_index(&self, flat: usize) -> [usize; MAX_DIM] {
        let mut out = [0; MAX_DIM];
        let mut rest = flat;
        for (l, kv) in self.directions.iter().enumerate() {
            out[l] = rest % kv.len();
            rest /= kv.len();
        }
        out
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        let mut idx = 0;
        for l in (0..self.dim()).rev() {
            idx = idx * self.directions[l].len() + multi[l];
        }
        idx
    }

    /// Non-zero basis values at `xi` as `(flat index, value)` pairs.
    pub fn eval(&self, xi: &[T]) -> Result<Vec<(usize, T)>> {
        let per_dir: Vec<(usize, Vec<T>)> = self
            .directions
            .iter()
            .zip(xi)
            .map(|(kv, &x)| kv.eval_basis(x))
            .collect::<Result<_>>()?;
        let mut out = Vec::new();
        self.for_each_active(&per_dir, |flat, local| {
            let v = (0..self.dim()).fold(T::one(), |acc, l| acc * per_dir[l].1[local[l]]);
            out.push((flat, v));
        });
        Ok(out)
    }

    /// Non-zero basis values and parametric gradients at `xi`.
    pub fn eval_with_grad(&self, xi: &[T]) -> Result<Vec<(usize, T, [T; MAX_DIM])>> {
        let per_dir: Vec<(usize, Vec<T>, Vec<T>)> = self
            .directions
            .iter()
            .zip(xi)
            .map(|(kv, &x)| kv.eval_basis_and_deriv(x))
            .collect::<Result<_>>()?;
        let starts: Vec<(usize, Vec<T>)> = per_dir.iter().map(|(s, v, _)| (*s, v.clone())).collect();
        let d = self.dim();
        let mut out = Vec::new();
        self.for_each_active(&starts, |flat, local| {
            let mut value = T::one();
            let mut grad = [T::zero(); MAX_DIM];
            for l in 0..d {
                value *= per_dir[l].1[local[l]];
            }
            for (g, gl) in grad.iter_mut().enumerate().take(d) {
                let mut prod = T::one();
                for l in 0..d {
                    prod *= if l == g { per_dir[l].2[local[l]] } else { per_dir[l].1[local[l]] };
                }
                *gl = prod;
            }
            out.push((flat, value, grad));
        });
        Ok(out)
    }

    fn for_each_active<V>(&self, per_dir: &[(usize, V)], mut f: impl FnMut(usize, &[usize; MAX_DIM])) {
        let d = self.dim();
        let counts: Vec<usize> = self.directions.iter().map(|kv| kv.degree() + 1).collect();
        let total: usize = counts.iter().product();
        let mut local = [0usize; MAX_DIM];
        let mut multi = [0usize; MAX_DIM];
        for k in 0..total {
            let mut rest = k;
            for l in 0..d {
                local[l] = rest % counts[l];
                rest /= counts[l];
                multi[l] = per_dir[l].0 + local[l];
            }
            f(self.flat_index(&multi[..d]), &local);
        }
    }

    /// Flat indices `j` (including `i`) whose support overlaps that of `i` on a set of positive
    /// measure: the Cartesian product of the univariate overlap windows, sorted ascending.
    pub fn support_overlap(&self, i: usize) -> Result<Vec<usize>> {
        if i >= self.len() {
            return Err(Error::IndexOutOfRange { index: i, size: self.len() });
        }
        let d = self.dim();
        let mi = self.multi_index(i);
        let windows: Vec<(usize, usize)> =
            (0..d).map(|l| self.directions[l].overlap_window(mi[l])).collect();
        let mut out = Vec::new();
        let mut multi = [0usize; MAX_DIM];
        fn rec<T: Real>(
            basis: &TensorBasis<T>,
            windows: &[(usize, usize)],
            l: usize,
            multi: &mut [usize; MAX_DIM],
            out: &mut Vec<usize>,
        ) {
            if l == 0 {
                for j in windows[0].0..=windows[0].1 {
                    multi[0] = j;
                    out.push(basis.flat_index(&multi[..windows.len()]));
                }
                return;
            }
            for j in windows[l].0..=windows[l].1 {
                multi[l] = j;
                rec(basis, windows, l - 1, multi, out);
            }
        }
        rec(self, &windows, d - 1, &mut multi, &mut out);
        out.sort_unstable();
        Ok(out)
    }

    /// Greville points of every tensor-product function, as flat-indexed parameter tuples.
    pub fn greville_points(&self) -> Vec<[T; MAX_DIM]> {
        let per_dir: Vec<Vec<T>> = self.directions.iter().map(KnotVector::greville_points).collect();
        (0..self.len())
            .map(|i| {
                let mi = self.multi_index(i);
                let mut xi = [T::zero(); MAX_DIM];
                for l in 0..self.dim() {
                    xi[l] = per_dir[l][mi[l]];
                }
                xi
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn kv(p: usize, k: &[f64]) -> KnotVector<f64> {
        KnotVector::new(p, k.to_vec()).unwrap()
    }

    #[test]
    fn linear_hats_at_midpoint() {
        let (first, v) = kv(1, &[0., 0., 1., 1.]).eval_basis(0.5).unwrap();
        assert_eq!(first, 0);
        assert_abs_diff_eq!(v[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(v[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn quadratic_bernstein_at_midpoint() {
        // B_{0,2}(1/2) = 1/4, B_{1,2}(1/2) = 2·1/2·1/2, B_{2,2}(1/2) = 1/4
        let (first, v) = kv(2, &[0., 0., 0., 1., 1., 1.]).eval_basis(0.5).unwrap();
        assert_eq!(first, 0);
        for (a, b) in v.iter().zip([0.25, 0.5, 0.25]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn derivative_examples() {
        let (first, d) = kv(1, &[0., 0., 1., 1.]).eval_basis_deriv(0.3).unwrap();
        assert_eq!(first, 0);
        assert_abs_diff_eq!(d[0], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d[1], 1.0, epsilon = 1e-15);
        // d/dx of ((1-x)^2, 2x(1-x), x^2) at 1/2 = (-1, 0, 1)
        let (_, d) = kv(2, &[0., 0., 0., 1., 1., 1.]).eval_basis_deriv(0.5).unwrap();
        for (a, b) in d.iter().zip([-1.0, 0.0, 1.0]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn right_endpoint_is_closed() {
        let k = kv(2, &[0., 0., 0., 0.5, 1., 1., 1.]);
        let (first, v) = k.eval_basis(1.0).unwrap();
        assert_eq!(first, 1);
        assert_abs_diff_eq!(v[2], 1.0, epsilon = 1e-15);
        assert!(k.eval_basis(1.0 + 1e-12).is_err());
        assert!(k.eval_basis(-1e-12).is_err());
    }

    #[test]
    fn greville_examples() {
        assert_eq!(kv(2, &[0., 0., 0., 0.5, 1., 1., 1.]).greville_points(), vec![0.0, 0.25, 0.75, 1.0]);
        assert_eq!(kv(1, &[0., 0., 1., 1.]).greville_points(), vec![0.0, 1.0]);
        assert_eq!(kv(2, &[0., 0., 0., 1., 1., 1.]).greville_points(), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn rejects_invalid_knot_vectors() {
        assert!(KnotVector::new(2, vec![0., 0., 1., 1., 1.]).is_err());
        assert!(KnotVector::new(1, vec![0., 0., 0., 1., 1.]).is_err());
        assert!(KnotVector::new(1, vec![0., 0., 0.6, 0.4, 1., 1.]).is_err());
        assert!(KnotVector::new(2, vec![0., 0., 0., 0.5, 0.5, 0.5, 1., 1., 1.]).is_err());
        assert!(KnotVector::<f64>::uniform(2, 2).is_err());
    }

    /// Brute-force window: all j whose supports intersect in an interval of positive length.
    fn brute_window(k: &KnotVector<f64>, i: usize) -> Vec<usize> {
        let t = k.knots();
        let p = k.degree();
        (0..k.len())
            .filter(|&j| t[i].max(t[j]) < t[i + p + 1].min(t[j + p + 1]))
            .collect()
    }

    #[test]
    fn support_overlap_examples() {
        let b1 = TensorBasis::new(vec![KnotVector::<f64>::uniform(1, 4).unwrap()]).unwrap();
        assert_eq!(b1.support_overlap(0).unwrap(), vec![0, 1]);
        assert!(b1.support_overlap(4).is_err());

        let k2 = kv(2, &[0., 0., 0., 0.25, 0.5, 0.75, 1., 1., 1.]);
        for i in 0..k2.len() {
            let (lo, hi) = k2.overlap_window(i);
            assert_eq!((lo..=hi).collect::<Vec<_>>(), brute_window(&k2, i));
            assert!(hi - lo < 5);
        }
        let b = TensorBasis::new(vec![k2.clone()]).unwrap();
        assert_eq!(b.support_overlap(2).unwrap(), vec![0, 1, 2, 3, 4]);

        let b2 = TensorBasis::new(vec![k2.clone(), KnotVector::uniform(2, 4).unwrap()]).unwrap();
        let i = b2.flat_index(&[2, 1]);
        let mut expected = Vec::new();
        for j1 in 0..4 {
            for j0 in brute_window(&k2, 2) {
                if brute_window(b2.direction(1), 1).contains(&j1) {
                    expected.push(b2.flat_index(&[j0, j1]));
                }
            }
        }
        expected.sort_unstable();
        assert_eq!(b2.support_overlap(i).unwrap(), expected);
    }

    #[test]
    fn repeated_interior_knot_window_matches_brute_force() {
        let k = kv(2, &[0., 0., 0., 0.3, 0.3, 0.6, 1., 1., 1.]);
        for i in 0..k.len() {
            let (lo, hi) = k.overlap_window(i);
            assert_eq!((lo..=hi).collect::<Vec<_>>(), brute_window(&k, i));
        }
    }

    #[test]
    fn refinement_reproduces_curve() {
        let coarse = kv(2, &[0., 0., 0., 0.5, 1., 1., 1.]);
        let fine = coarse.with_inserted(&[0.25, 0.5, 0.75]).unwrap();
        let t = coarse.refinement_matrix(&fine).unwrap();
        let ctrl = [0.3, -1.0, 2.0, 0.7];
        let fine_ctrl: Vec<f64> =
            t.iter().map(|row| row.iter().zip(&ctrl).map(|(a, b)| a * b).sum()).collect();
        let eval = |k: &KnotVector<f64>, c: &[f64], x: f64| {
            let (s, v) = k.eval_basis(x).unwrap();
            v.iter().enumerate().map(|(a, b)| b * c[s + a]).sum::<f64>()
        };
        for i in 0..=50 {
            let x = i as f64 / 50.0;
            assert_abs_diff_eq!(eval(&coarse, &ctrl, x), eval(&fine, &fine_ctrl, x), epsilon = 1e-14);
        }
        let not_nested = kv(2, &[0., 0., 0., 0.4, 1., 1., 1.]);
        assert!(coarse.refinement_matrix(&not_nested).is_err());
    }

    #[test]
    fn single_precision_partition_of_unity() {
        let k = KnotVector::<f32>::uniform(3, 9).unwrap();
        for i in 0..=20 {
            let (_, v) = k.eval_basis(i as f32 / 20.0).unwrap();
            assert!((v.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        }
    }

    fn arb_knots() -> impl Strategy<Value = KnotVector<f64>> {
        (1usize..=4, proptest::collection::vec(0.01f64..1.0, 0..6)).prop_map(|(p, mut inner)| {
            inner.sort_by(|a, b| a.partial_cmp(b).unwrap());
            inner.dedup();
            let mut k = vec![0.0; p + 1];
            k.extend(inner);
            k.extend(vec![1.0; p + 1]);
            KnotVector::new(p, k).unwrap()
        })
    }

    proptest! {
        #[test]
        fn partition_of_unity_and_nonnegativity(k in arb_knots(), x in 0.0f64..=1.0) {
            let (first, v) = k.eval_basis(x).unwrap();
            prop_assert_eq!(v.len(), k.degree() + 1);
            prop_assert!(first + k.degree() < k.len());
            prop_assert!(v.iter().all(|&b| b >= 0.0));
            prop_assert!((v.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            let (_, d) = k.eval_basis_deriv(x).unwrap();
            prop_assert!(d.iter().sum::<f64>().abs() <= 1e-9 * (1.0 + d.iter().map(|a| a.abs()).sum::<f64>()));
        }

        #[test]
        fn derivative_matches_central_differences(k in arb_knots(), x in 0.0f64..=1.0) {
            let h = 1e-6;
            let bps = k.breakpoints();
            // stay inside one span so the stencil sees a single polynomial piece
            prop_assume!(bps.iter().all(|&b| (b - x).abs() > 3.0 * h));
            let (s, d) = k.eval_basis_deriv(x).unwrap();
            let (s1, vp) = k.eval_basis(x + h).unwrap();
            let (s2, vm) = k.eval_basis(x - h).unwrap();
            prop_assert_eq!(s, s1);
            prop_assert_eq!(s, s2);
            for a in 0..d.len() {
                let fd = (vp[a] - vm[a]) / (2.0 * h);
                prop_assert!((fd - d[a]).abs() <= 1e-6 * (1.0 + d[a].abs()), "fd {} vs {}", fd, d[a]);
            }
        }

        #[test]
        fn greville_points_nondecreasing_in_range(k in arb_knots()) {
            let g = k.greville_points();
            prop_assert_eq!(g.len(), k.len());
            prop_assert!(g.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(g.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }

        #[test]
        fn tensor_partition_of_unity(x in 0.0f64..=1.0, y in 0.0f64..=1.0) {
            let b = TensorBasis::new(vec![
                KnotVector::uniform(2, 7).unwrap(),
                KnotVector::new(2, vec![0., 0., 0., 0.2, 0.7, 1., 1., 1.]).unwrap(),
            ]).unwrap();
            let vals = b.eval(&[x, y]).unwrap();
            prop_assert_eq!(vals.len(), 9);
            prop_assert!((vals.iter().map(|v| v.1).sum::<f64>() - 1.0).abs() <= 1e-12);
            let grads = b.eval_with_grad(&[x, y]).unwrap();
            for l in 0..2 {
                prop_assert!(grads.iter().map(|g| g.2[l]).sum::<f64>().abs() <= 1e-10);
            }
        }
    }
}
