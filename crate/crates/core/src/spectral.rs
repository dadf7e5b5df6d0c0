//! Singular value decompositions, spectral functions and their derivatives.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::penalty::{PenaltySpec, Side};

pub type Mat = DMatrix<f64>;

/// Default relative tolerance for grouping equal singular values.
pub const GROUP_TOL: f64 = 1e-8;
/// Singular values below this fraction of the largest are treated as zero.
pub const ZERO_TOL: f64 = 1e-12;

/// Dimensions and singular values of a matrix in its tall orientation (`m >= n`).
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub m: usize,
    pub n: usize,
    /// Nonincreasing, length `n`.
    pub sigma: Vec<f64>,
}

impl Spectrum {
    /// Builds a spectrum from given singular values, sorting them.
    pub fn new(m: usize, n: usize, mut sigma: Vec<f64>) -> Result<Spectrum> {
        if m < n || sigma.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "spectrum needs m >= n and n values, got m={m}, n={n}, {} values",
                sigma.len()
            )));
        }
        if sigma.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite);
        }
        if let Some(&s) = sigma.iter().find(|&&s| s < 0.0) {
            return Err(Error::NegativeInput(s));
        }
        sigma.sort_by(|a, b| b.total_cmp(a));
        Ok(Spectrum { m, n, sigma })
    }
}

impl AsRef<Spectrum> for Spectrum {
    fn as_ref(&self) -> &Spectrum {
        self
    }
}

/// Thin SVD `Y = U diag(sigma) V'` of the tall orientation of `Y`.
///
/// Singular values are nonincreasing and the largest-magnitude entry of each column
/// of `U` is positive.
#[derive(Clone, Debug)]
pub struct SvdDecomposition {
    /// `m x n`
    pub u: Mat,
    /// `n x n`
    pub v: Mat,
    pub spectrum: Spectrum,
    /// True when the input was wide and has been transposed.
    pub transposed: bool,
}

impl AsRef<Spectrum> for SvdDecomposition {
    fn as_ref(&self) -> &Spectrum {
        &self.spectrum
    }
}

impl SvdDecomposition {
    pub fn m(&self) -> usize {
        self.spectrum.m
    }
    pub fn n(&self) -> usize {
        self.spectrum.n
    }
    pub fn sigma(&self) -> &[f64] {
        &self.spectrum.sigma
    }

    /// `U diag(values) V'` returned in the orientation of the original input.
    pub fn compose(&self, values: &[f64]) -> Mat {
        let out = compose(&self.u, values, &self.v);
        if self.transposed {
            out.transpose()
        } else {
            out
        }
    }

    /// Reconstructs the original matrix.
    pub fn reconstruct(&self) -> Mat {
        self.compose(self.sigma())
    }

    /// The tall-orientation matrix the decomposition describes.
    pub fn working_matrix(&self) -> Mat {
        compose(&self.u, self.sigma(), &self.v)
    }
}

fn compose(u: &Mat, values: &[f64], v: &Mat) -> Mat {
    let keep: Vec<usize> = (0..values.len()).filter(|&k| values[k] != 0.0).collect();
    if keep.is_empty() {
        return Mat::zeros(u.nrows(), v.nrows());
    }
    let mut uk = Mat::zeros(u.nrows(), keep.len());
    let mut vk = Mat::zeros(v.nrows(), keep.len());
    for (c, &k) in keep.iter().enumerate() {
        uk.set_column(c, &(u.column(k) * values[k]));
        vk.set_column(c, &v.column(k));
    }
    uk * vk.transpose()
}

fn check_matrix(y: &Mat) -> Result<()> {
    if y.nrows() == 0 || y.ncols() == 0 {
        return Err(Error::ShapeMismatch("matrix must be nonempty".into()));
    }
    if y.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(())
}

/// Accepted residual of a library SVD, relative to the Frobenius norm of the input.
const SVD_CHECK_TOL: f64 = 1e-12;
const JACOBI_TOL: f64 = 4.0 * f64::EPSILON;
const JACOBI_MAX_SWEEPS: usize = 60;

/// Thin SVD `(U, s, V)` with `min(rows, cols)` columns, in no particular order.
///
/// nalgebra occasionally returns an inconsistent factorization for exactly
/// rank-deficient inputs, so its output is checked and redone by one-sided Jacobi
/// when the check fails.
pub(crate) fn thin_svd(a: &Mat) -> Result<(Mat, Vec<f64>, Mat)> {
    if a.nrows() < a.ncols() {
        let (u, s, v) = thin_svd(&a.transpose())?;
        return Ok((v, s, u));
    }
    let dec = a.clone().svd(true, true);
    if let (Some(u), Some(vt)) = (dec.u, dec.v_t) {
        let s: Vec<f64> = dec.singular_values.iter().copied().collect();
        let v = vt.transpose();
        if consistent(a, &u, &s, &v) {
            return Ok((u, s, v));
        }
    }
    jacobi_svd(a)
}

fn consistent(a: &Mat, u: &Mat, s: &[f64], v: &Mat) -> bool {
    let k = s.len();
    if s.iter().any(|x| !x.is_finite()) {
        return false;
    }
    let tol = SVD_CHECK_TOL;
    let mut us = u.clone();
    for (j, &sj) in s.iter().enumerate() {
        us.column_mut(j).scale_mut(sj);
    }
    let resid = (us * v.transpose() - a).norm();
    let eye = Mat::identity(k, k);
    resid <= tol * a.norm()
        && (u.tr_mul(u) - &eye).amax() <= tol
        && (v.tr_mul(v) - &eye).amax() <= tol
}

/// Hestenes one-sided Jacobi on a tall matrix.
fn jacobi_svd(a: &Mat) -> Result<(Mat, Vec<f64>, Mat)> {
    let (m, n) = a.shape();
    let mut w = a.clone();
    let mut v = Mat::identity(n, n);
    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(q).norm_squared();
                let gamma = w.column(p).dot(&w.column(q));
                if gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Nonconvergence("one-sided Jacobi svd".into()));
    }
    let sigma: Vec<f64> = (0..n).map(|j| w.column(j).norm()).collect();
    let smax = sigma.iter().fold(0.0f64, |x, &y| x.max(y));
    let mut u = Mat::zeros(m, n);
    let mut done = vec![false; n];
    for j in 0..n {
        if sigma[j] > ZERO_TOL * smax {
            u.set_column(j, &(w.column(j) / sigma[j]));
            done[j] = true;
        }
    }
    // Columns for zero singular values: orthonormal completion from the unit vectors.
    let mut basis = 0;
    for j in 0..n {
        while !done[j] {
            let mut e = DVector::zeros(m);
            e[basis] = 1.0;
            basis += 1;
            for _ in 0..2 {
                for k in (0..n).filter(|&k| done[k]) {
                    let proj = u.column(k).dot(&e);
                    e -= u.column(k) * proj;
                }
            }
            let norm = e.norm();
            if norm > 1e-3 {
                u.set_column(j, &(e / norm));
                done[j] = true;
            }
        }
    }
    Ok((u, sigma, v))
}

fn rotate(x: &mut Mat, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..x.nrows() {
        let (a, b) = (x[(i, p)], x[(i, q)]);
        x[(i, p)] = c * a - s * b;
        x[(i, q)] = s * a + c * b;
    }
}

/// Thin SVD with sorted singular values and a deterministic sign convention.
pub fn svd(y: &Mat) -> Result<SvdDecomposition> {
    check_matrix(y)?;
    let transposed = y.nrows() < y.ncols();
    let work = if transposed { y.transpose() } else { y.clone() };
    let (m, n) = work.shape();
    let (u0, s0, v0) = thin_svd(&work)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s0[b].total_cmp(&s0[a]));
    let mut u = Mat::zeros(m, n);
    let mut v = Mat::zeros(n, n);
    let mut sigma = Vec::with_capacity(n);
    for (k, &j) in order.iter().enumerate() {
        let mut uc = u0.column(j).into_owned();
        let mut vc = v0.column(j).into_owned();
        let imax = uc.iamax();
        if uc[imax] < 0.0 {
            uc.neg_mut();
            vc.neg_mut();
        }
        u.set_column(k, &uc);
        v.set_column(k, &vc);
        sigma.push(s0[j].max(0.0));
    }
    Ok(SvdDecomposition { u, v, spectrum: Spectrum { m, n, sigma }, transposed })
}

/// Singular values only, in the tall orientation.
pub fn spectrum(y: &Mat) -> Result<Spectrum> {
    check_matrix(y)?;
    let (m, n) = if y.nrows() >= y.ncols() { y.shape() } else { (y.ncols(), y.nrows()) };
    let mut sigma: Vec<f64> = y.singular_values().iter().map(|s| s.max(0.0)).collect();
    sigma.sort_by(|a, b| b.total_cmp(a));
    Ok(Spectrum { m, n, sigma })
}

/// A scalar function applied to singular values (or eigenvalues).
pub trait SpectralFunction: Sync {
    fn value(&self, x: f64) -> f64;

    /// Derivative at `x`, or `None` where the function is not differentiable.
    fn derivative(&self, x: f64) -> Option<f64>;

    /// One-sided directional derivative `lim_{t -> 0+} (f(x + t h) - f(x)) / t`.
    fn directional(&self, x: f64, h: f64) -> Result<f64> {
        self.derivative(x).map(|d| d * h).ok_or(Error::NotDirectionallyDifferentiable(x))
    }
}

impl<F: SpectralFunction + ?Sized> SpectralFunction for &F {
    fn value(&self, x: f64) -> f64 {
        (**self).value(x)
    }
    fn derivative(&self, x: f64) -> Option<f64> {
        (**self).derivative(x)
    }
    fn directional(&self, x: f64, h: f64) -> Result<f64> {
        (**self).directional(x, h)
    }
}

/// `f(x) = x`.
#[derive(Clone, Copy, Debug)]
pub struct Identity;

impl SpectralFunction for Identity {
    fn value(&self, x: f64) -> f64 {
        x
    }
    fn derivative(&self, _: f64) -> Option<f64> {
        Some(1.0)
    }
}

/// `f(x) = c x`.
#[derive(Clone, Copy, Debug)]
pub struct Scaled(pub f64);

impl SpectralFunction for Scaled {
    fn value(&self, x: f64) -> f64 {
        self.0 * x
    }
    fn derivative(&self, _: f64) -> Option<f64> {
        Some(self.0)
    }
}

/// `f(x) = x^2`.
#[derive(Clone, Copy, Debug)]
pub struct Square;

impl SpectralFunction for Square {
    fn value(&self, x: f64) -> f64 {
        x * x
    }
    fn derivative(&self, x: f64) -> Option<f64> {
        Some(2.0 * x)
    }
}

/// Proximal map of a penalty, defined on `[0, inf)`. At zero it reports the right
/// derivative, which is the two-sided derivative of its odd extension.
#[derive(Clone, Copy, Debug)]
pub struct Prox(pub PenaltySpec);

impl SpectralFunction for Prox {
    fn value(&self, x: f64) -> f64 {
        self.0.prox(x).unwrap_or(f64::NAN)
    }
    fn derivative(&self, x: f64) -> Option<f64> {
        if x == 0.0 {
            return self.0.prox_one_sided_derivative(0.0, Side::Right).ok();
        }
        self.0.prox_derivative(x).ok()
    }
    fn directional(&self, x: f64, h: f64) -> Result<f64> {
        if h == 0.0 {
            return Ok(0.0);
        }
        let side = if h > 0.0 { Side::Right } else { Side::Left };
        if x == 0.0 {
            return Ok(h * self.0.prox_one_sided_derivative(0.0, Side::Right)?);
        }
        Ok(h * self.0.prox_one_sided_derivative(x, side)?)
    }
}

/// Odd extension `f(x) = -g(-x)` for `x < 0` of a function `g` on `[0, inf)`.
#[derive(Clone, Copy, Debug)]
pub struct OddExtension<F>(pub F);

impl<F: SpectralFunction> SpectralFunction for OddExtension<F> {
    fn value(&self, x: f64) -> f64 {
        if x < 0.0 {
            -self.0.value(-x)
        } else {
            self.0.value(x)
        }
    }
    fn derivative(&self, x: f64) -> Option<f64> {
        self.0.derivative(x.abs())
    }
    fn directional(&self, x: f64, h: f64) -> Result<f64> {
        if x > 0.0 {
            self.0.directional(x, h)
        } else if x < 0.0 {
            // f'(x; h) = g'(-x; -h) for the odd extension.
            self.0.directional(-x, -h).map(|d| -d)
        } else {
            self.0.directional(0.0, h.abs()).map(|d| d * h.signum())
        }
    }
}

fn spectral_values<F: SpectralFunction + ?Sized>(sigma: &[f64], f: &F) -> Result<Vec<f64>> {
    sigma
        .iter()
        .map(|&s| {
            let v = f.value(s);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::UndefinedAt(s))
            }
        })
        .collect()
}

/// `S(Y) = U diag(f(sigma)) V'`.
pub fn apply_spectral<F: SpectralFunction + ?Sized>(svd: &SvdDecomposition, f: &F) -> Result<Mat> {
    Ok(svd.compose(&spectral_values(svd.sigma(), f)?))
}

/// Best rank-`k` approximation. Errors when `sigma_k` and `sigma_{k+1}` tie, where the
/// truncation is not unique.
pub fn truncate_rank(svd: &SvdDecomposition, k: usize) -> Result<Mat> {
    let n = svd.n();
    if k > n {
        return Err(Error::RankOutOfRange { k, max: n });
    }
    let s = svd.sigma();
    if k > 0 && k < n {
        let tol = GROUP_TOL * s[0].max(1.0);
        if s[k - 1] - s[k] <= tol && s[k - 1] > ZERO_TOL * s[0] {
            return Err(Error::TiedAtCut(k));
        }
    }
    let vals: Vec<f64> = (0..n).map(|i| if i < k { s[i] } else { 0.0 }).collect();
    Ok(svd.compose(&vals))
}

/// A group of (numerically) equal values.
#[derive(Clone, Debug, PartialEq)]
pub struct Group {
    pub value: f64,
    pub indices: Vec<usize>,
}

impl Group {
    pub fn multiplicity(&self) -> usize {
        self.indices.len()
    }
}

/// Groups nonincreasing values: a value joins the current group when it lies within
/// `tol * max(|v_1|, 1)` of the group's first member. The group value is the mean.
pub fn group_values(values: &[f64], tol: f64) -> Vec<Group> {
    let scale = values.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let eps = tol * scale;
    let mut groups: Vec<Group> = Vec::new();
    let mut first = f64::NAN;
    for (i, &v) in values.iter().enumerate() {
        match groups.last_mut() {
            Some(g) if (first - v).abs() <= eps => g.indices.push(i),
            _ => {
                first = v;
                groups.push(Group { value: v, indices: vec![i] });
            }
        }
    }
    for g in &mut groups {
        g.value = g.indices.iter().map(|&i| values[i]).sum::<f64>() / g.multiplicity() as f64;
    }
    groups
}

/// Distinct singular values with multiplicities; values below `ZERO_TOL * sigma_1`
/// are clamped to zero first, and a zero group (if any) comes last.
pub fn multiplicity_groups(sigma: &[f64], tol: f64) -> Vec<Group> {
    let s1 = sigma.first().copied().unwrap_or(0.0);
    let clamped: Vec<f64> =
        sigma.iter().map(|&s| if s <= ZERO_TOL * s1 { 0.0 } else { s }).collect();
    let mut groups = group_values(&clamped, tol);
    // A group that reaches zero within tolerance counts as the zero group.
    if let Some(g) = groups.last_mut() {
        if g.indices.iter().any(|&i| clamped[i] == 0.0) {
            g.value = 0.0;
        }
    }
    groups
}

/// Divergence of `Y -> U f(Sigma) V'` by the closed-form spectral expression.
///
/// `f` must vanish at zero, be differentiable at repeated singular values and at
/// zero when zero is a singular value, and be directionally differentiable at simple
/// ones. When `f` has a kink at a simple singular value the directional divergence
/// (sum of one-sided partials along `+e_ij`) is returned.
pub fn divergence<F: SpectralFunction + ?Sized>(
    svd: &SvdDecomposition,
    f: &F,
    tol: f64,
) -> Result<f64> {
    let f0 = f.value(0.0);
    if f0.abs() > 1e-12 {
        return Err(Error::NonzeroAtZero(f0));
    }
    let m = svd.m() as f64;
    let n = svd.n() as f64;
    let groups = multiplicity_groups(svd.sigma(), tol);
    let mut total = 0.0;
    let mut pos: Vec<(f64, f64, f64)> = Vec::new();
    for g in &groups {
        let d = g.multiplicity() as f64;
        let s = g.value;
        if s == 0.0 {
            let dp = f.derivative(0.0).ok_or(Error::NotDirectionallyDifferentiable(0.0))?;
            total += d * (m - n + d) * dp;
            pos.push((d, 0.0, 0.0));
            continue;
        }
        let fs = f.value(s);
        if !fs.is_finite() {
            return Err(Error::UndefinedAt(s));
        }
        match f.derivative(s) {
            Some(dp) => total += d * (d + 1.0) / 2.0 * dp,
            None if g.multiplicity() == 1 => {
                let k = g.indices[0];
                let split = |x: &[f64]| {
                    x.iter().fold((0.0, 0.0), |(p, q), &v| {
                        if v > 0.0 {
                            (p + v * v, q)
                        } else {
                            (p, q + v * v)
                        }
                    })
                };
                let (up, un) = split(svd.u.column(k).as_slice());
                let (vp, vn) = split(svd.v.column(k).as_slice());
                let same = up * vp + un * vn;
                let opposite = up * vn + un * vp;
                total += same * f.directional(s, 1.0)? - opposite * f.directional(s, -1.0)?;
            }
            None => return Err(Error::RequiresFullDifferentiability(s)),
        }
        total += ((m - n) * d + d * (d - 1.0) / 2.0) * fs / s;
        pos.push((d, s, fs));
    }
    for (a, &(di, si, fi)) in pos.iter().enumerate() {
        for (b, &(dj, sj, fj)) in pos.iter().enumerate() {
            if a != b {
                total += di * dj * (si * fi - sj * fj) / (si * si - sj * sj);
            }
        }
    }
    Ok(total)
}

/// Symmetric dilation `[[0, Y], [Y', 0]]` of the tall orientation of `Y` with its
/// eigendecomposition `P diag(sigma_star) P'`.
#[derive(Clone, Debug)]
pub struct Symmetrization {
    pub ystar: Mat,
    pub p: Mat,
    /// `(sigma, -sigma, 0, ..., 0)` of length `m + n`.
    pub sigma_star: DVector<f64>,
}

/// Orthonormal completion of the columns of `u` (`m x n`, orthonormal) to a basis of
/// `R^m`, built greedily from coordinate vectors.
pub fn orthonormal_complement(u: &Mat) -> Result<Mat> {
    let (m, n) = u.shape();
    let mut basis: Vec<DVector<f64>> = (0..n).map(|k| u.column(k).into_owned()).collect();
    let mut used = vec![false; m];
    let mut out = Mat::zeros(m, m - n);
    for c in 0..(m - n) {
        let mut best: Option<(usize, DVector<f64>, f64)> = None;
        for i in (0..m).filter(|&i| !used[i]) {
            let mut r = DVector::zeros(m);
            r[i] = 1.0;
            for _ in 0..2 {
                for b in &basis {
                    let proj = b.dot(&r);
                    r.axpy(-proj, b, 1.0);
                }
            }
            let norm = r.norm();
            if best.as_ref().map_or(true, |b| norm > b.2) {
                best = Some((i, r, norm));
            }
        }
        let (i, r, norm) = best.ok_or(Error::ComplementFailure)?;
        if norm < 1e-8 {
            return Err(Error::ComplementFailure);
        }
        used[i] = true;
        let r = r / norm;
        out.set_column(c, &r);
        basis.push(r);
    }
    Ok(out)
}

pub fn symmetrize(svd: &SvdDecomposition) -> Result<Symmetrization> {
    let (m, n) = (svd.m(), svd.n());
    let y = svd.working_matrix();
    let mut ystar = Mat::zeros(m + n, m + n);
    ystar.view_mut((0, m), (m, n)).copy_from(&y);
    ystar.view_mut((m, 0), (n, m)).copy_from(&y.transpose());
    let ubar = orthonormal_complement(&svd.u)?;
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mut p = Mat::zeros(m + n, m + n);
    p.view_mut((0, 0), (m, n)).copy_from(&(&svd.u * r));
    p.view_mut((0, n), (m, n)).copy_from(&(&svd.u * r));
    p.view_mut((0, 2 * n), (m, m - n)).copy_from(&ubar);
    p.view_mut((m, 0), (n, n)).copy_from(&(&svd.v * r));
    p.view_mut((m, n), (n, n)).copy_from(&(&svd.v * -r));
    let s = svd.sigma();
    let sigma_star = DVector::from_fn(m + n, |i, _| {
        if i < n {
            s[i]
        } else if i < 2 * n {
            -s[i - n]
        } else {
            0.0
        }
    });
    Ok(Symmetrization { ystar, p, sigma_star })
}

/// Eigendecomposition `X = E diag(lambda) E'` with eigenvalues grouped by multiplicity.
#[derive(Clone, Debug)]
pub struct EigenBasis {
    pub vectors: Mat,
    pub values: Vec<f64>,
    pub groups: Vec<Group>,
}

impl EigenBasis {
    /// Sorts the pairs so eigenvalues are nonincreasing, then groups them.
    pub fn new(vectors: Mat, values: Vec<f64>, tol: f64) -> EigenBasis {
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
        let vals: Vec<f64> = order.iter().map(|&i| values[i]).collect();
        let vecs = vectors.select_columns(order.iter());
        let groups = group_values(&vals, tol);
        EigenBasis { vectors: vecs, values: vals, groups }
    }

    pub fn of_symmetric(x: &Mat, tol: f64) -> Result<EigenBasis> {
        check_symmetric(x)?;
        let e = SymmetricEigen::new(x.clone());
        Ok(EigenBasis::new(e.eigenvectors, e.eigenvalues.iter().copied().collect(), tol))
    }

    pub fn of_symmetrization(s: &Symmetrization, tol: f64) -> EigenBasis {
        EigenBasis::new(s.p.clone(), s.sigma_star.iter().copied().collect(), tol)
    }

    /// `F(X) = E diag(f(lambda)) E'`.
    pub fn apply<F: SpectralFunction + ?Sized>(&self, f: &F) -> Result<Mat> {
        let vals = spectral_values(&self.values, f)?;
        let scaled = Mat::from_fn(self.vectors.nrows(), self.vectors.ncols(), |i, j| {
            self.vectors[(i, j)] * vals[j]
        });
        Ok(scaled * self.vectors.transpose())
    }

    /// Directional derivative expressed in the eigenbasis: returns `Phi` such that
    /// `F'(X; H) = E Phi E'` where `htilde = E' H E`.
    pub fn derivative_in_basis<F: SpectralFunction + ?Sized>(
        &self,
        f: &F,
        htilde: &Mat,
    ) -> Result<Mat> {
        let dim = self.values.len();
        let mut phi = Mat::zeros(dim, dim);
        for (a, ga) in self.groups.iter().enumerate() {
            for (b, gb) in self.groups.iter().enumerate() {
                if a == b {
                    continue;
                }
                let (la, lb) = (ga.value, gb.value);
                let fa = f.value(la);
                let fb = f.value(lb);
                let coef = (fa - fb) / (la - lb);
                for &i in &ga.indices {
                    for &j in &gb.indices {
                        phi[(i, j)] = coef * htilde[(i, j)];
                    }
                }
            }
            let idx = &ga.indices;
            let lam = ga.value;
            if idx.len() == 1 {
                let i = idx[0];
                phi[(i, i)] = f.directional(lam, htilde[(i, i)])?;
                continue;
            }
            let block = Mat::from_fn(idx.len(), idx.len(), |r, c| htilde[(idx[r], idx[c])]);
            let psi = if let Some(d) = f.derivative(lam) {
                block * d
            } else {
                let sym = (&block + block.transpose()) * 0.5;
                let e = SymmetricEigen::new(sym);
                let mu: Vec<f64> =
                    e.eigenvalues.iter().map(|&mu| f.directional(lam, mu)).collect::<Result<_>>()?;
                let q = &e.eigenvectors;
                let scaled = Mat::from_fn(q.nrows(), q.ncols(), |r, c| q[(r, c)] * mu[c]);
                scaled * q.transpose()
            };
            for (r, &i) in idx.iter().enumerate() {
                for (c, &j) in idx.iter().enumerate() {
                    phi[(i, j)] = psi[(r, c)];
                }
            }
        }
        Ok(phi)
    }

    /// `F'(X; H)` for symmetric `H`.
    pub fn directional_derivative<F: SpectralFunction + ?Sized>(&self, f: &F, h: &Mat) -> Result<Mat> {
        check_symmetric(h)?;
        let e = &self.vectors;
        let htilde = e.transpose() * h * e;
        let phi = self.derivative_in_basis(f, &htilde)?;
        Ok(e * phi * e.transpose())
    }
}

fn check_symmetric(x: &Mat) -> Result<()> {
    if !x.is_square() {
        return Err(Error::Asymmetric);
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let scale = x.amax().max(1.0);
    if (x - x.transpose()).amax() > 1e-12 * scale {
        return Err(Error::Asymmetric);
    }
    Ok(())
}

/// `F(X) = E diag(f(lambda)) E'` for symmetric `X`.
pub fn matrix_function<F: SpectralFunction + ?Sized>(x: &Mat, f: &F) -> Result<Mat> {
    EigenBasis::of_symmetric(x, GROUP_TOL)?.apply(f)
}

/// Directional derivative `F'(X; H)` of the symmetric matrix function induced by `f`.
pub fn shapiro_directional_derivative<F: SpectralFunction + ?Sized>(
    x: &Mat,
    f: &F,
    h: &Mat,
    tol: f64,
) -> Result<Mat> {
    if h.shape() != x.shape() {
        return Err(Error::ShapeMismatch("direction must match the matrix".into()));
    }
    EigenBasis::of_symmetric(x, tol)?.directional_derivative(f, h)
}

/// Divergence of `Y -> U f(Sigma) V'` assembled from directional derivatives of the
/// odd extension of `f` on the symmetric dilation of `Y`.
pub fn divergence_by_symmetrization<F: SpectralFunction + ?Sized>(
    svd: &SvdDecomposition,
    f: &F,
    tol: f64,
) -> Result<f64> {
    let f0 = f.value(0.0);
    if f0.abs() > 1e-12 {
        return Err(Error::NonzeroAtZero(f0));
    }
    let sym = symmetrize(svd)?;
    let basis = EigenBasis::of_symmetrization(&sym, tol);
    let (m, n) = (svd.m(), svd.n());
    let p = &basis.vectors;
    let dim = m + n;
    let odd = OddExtension(f);
    let mut total = 0.0;
    for i in 0..m {
        let a = p.row(i).transpose();
        for j in 0..n {
            let b = p.row(m + j).transpose();
            let htilde = Mat::from_fn(dim, dim, |r, c| a[r] * b[c] + b[r] * a[c]);
            let phi = basis.derivative_in_basis(&odd, &htilde)?;
            total += (a.transpose() * &phi * &b)[(0, 0)];
        }
    }
    Ok(total)
}
