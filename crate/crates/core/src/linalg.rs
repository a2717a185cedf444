//! Dense numerical kernels shared by the estimator and the GSVD cross-check.
//!
//! The generalized singular value decomposition follows the CS-decomposition
//! route: the stacked pair `[A; B]` is QR-factorized and the two row blocks of
//! the orthonormal factor are decomposed with a common right basis. No
//! cross-product matrix is ever formed.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance used when checking symmetry of an input.
const SYMMETRY_TOL: f64 = 1e-10;

pub(crate) fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

pub(crate) fn is_symmetric(a: &DMatrix<f64>, tol: f64) -> bool {
    if !a.is_square() {
        return false;
    }
    let scale = max_abs(a).max(1.0);
    let n = a.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            if (a[(i, j)] - a[(j, i)]).abs() > tol * scale {
                return false;
            }
        }
    }
    true
}

/// Replaces `a` by `(a + a')/2`.
pub(crate) fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

/// Solves `A X = rhs` for symmetric positive-definite `A` via Cholesky.
pub fn solve_spd(a: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !is_symmetric(a, SYMMETRY_TOL) {
        return Err(Error::InvalidInput(
            "solve_spd: matrix is not symmetric".into(),
        ));
    }
    if rhs.nrows() != a.nrows() {
        return Err(Error::InvalidInput(format!(
            "solve_spd: rhs has {} rows, matrix has {}",
            rhs.nrows(),
            a.nrows()
        )));
    }
    let chol = a.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    Ok(chol.solve(rhs))
}

/// `log |A|` for symmetric positive-definite `A`.
pub fn spd_logdet(a: &DMatrix<f64>) -> Result<f64> {
    let chol = a.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    Ok(chol_logdet(&chol))
}

pub(crate) fn chol_logdet(chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>) -> f64 {
    let l = chol.l_dirty();
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
}

/// Inverse of a symmetric positive-definite matrix.
pub fn spd_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = a.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let mut inv = chol.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

/// Full SVD `a = U diag(s) V'` with square `U`, `V` and `s` descending.
pub(crate) struct Svd {
    pub u: DMatrix<f64>,
    pub s: Vec<f64>,
    pub v: DMatrix<f64>,
}

// nalgebra's bidiagonal SVD can silently return wrong factors when singular
// values repeat, so factorizations go through faer.
pub(crate) fn svd(a: &DMatrix<f64>) -> Result<Svd> {
    let m = faer::Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)]);
    let d = m
        .svd()
        .map_err(|_| Error::SingularSystem("SVD did not converge".into()))?;
    let back = |x: faer::MatRef<'_, f64>| DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)]);
    Ok(Svd {
        u: back(d.U()),
        s: d.S().column_vector().iter().copied().collect(),
        v: back(d.V()),
    })
}

/// Singular values sorted in descending order.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let m = faer::Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)]);
    let mut s = m.singular_values().unwrap_or_else(|_| {
        a.clone()
            .svd(false, false)
            .singular_values
            .iter()
            .copied()
            .collect()
    });
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Default rank threshold `max(rows, cols) · eps · σ_max`.
pub fn rank_tolerance(a: &DMatrix<f64>, sigma_max: f64) -> f64 {
    a.nrows().max(a.ncols()) as f64 * f64::EPSILON * sigma_max
}

pub fn numerical_rank(a: &DMatrix<f64>) -> usize {
    let s = singular_values(a);
    let Some(&smax) = s.first() else { return 0 };
    if smax == 0.0 {
        return 0;
    }
    let tol = rank_tolerance(a, smax);
    s.iter().filter(|&&v| v > tol).count()
}

/// Moore-Penrose pseudoinverse with the default rank threshold. The zero
/// matrix maps to the (transposed) zero matrix.
pub fn pseudoinverse(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return DMatrix::zeros(n, m);
    }
    let Ok(d) = svd(a) else {
        return nalgebra_pseudoinverse(a);
    };
    let smax = d.s.first().copied().unwrap_or(0.0);
    let mut out = DMatrix::zeros(n, m);
    if smax == 0.0 {
        return out;
    }
    let tol = rank_tolerance(a, smax);
    for (k, &s) in d.s.iter().enumerate() {
        if s > tol {
            out += (d.v.column(k) / s) * d.u.column(k).transpose();
        }
    }
    out
}

fn nalgebra_pseudoinverse(a: &DMatrix<f64>) -> DMatrix<f64> {
    let smax = singular_values(a).first().copied().unwrap_or(0.0);
    let tol = rank_tolerance(a, smax);
    a.clone()
        .pseudo_inverse(tol)
        .unwrap_or_else(|_| DMatrix::zeros(a.ncols(), a.nrows()))
}

/// `A^{-1/2}` for symmetric positive-definite `A` through its eigen-decomposition.
pub fn spd_inverse_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !is_symmetric(a, SYMMETRY_TOL) {
        return Err(Error::NotPositiveDefinite);
    }
    let n = a.nrows();
    let eig = a.clone().symmetric_eigen();
    let lmax = eig.eigenvalues.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
    if eig
        .eigenvalues
        .iter()
        .any(|&v| v <= n as f64 * f64::EPSILON * lmax || !v.is_finite())
    {
        return Err(Error::NotPositiveDefinite);
    }
    let scale = DVector::from_iterator(n, eig.eigenvalues.iter().map(|&v| 1.0 / v.sqrt()));
    let q = &eig.eigenvectors;
    let mut out = q * DMatrix::from_diagonal(&scale) * q.transpose();
    symmetrize(&mut out);
    Ok(out)
}

/// Fills the `None` slots with unit vectors orthogonal to every other column.
fn complete_orthonormal(cols: Vec<Option<DVector<f64>>>, dim: usize) -> DMatrix<f64> {
    let mut basis: Vec<DVector<f64>> = cols.iter().flatten().cloned().collect();
    let mut filled = Vec::with_capacity(cols.len());
    let mut candidate = 0usize;
    for slot in cols {
        match slot {
            Some(v) => filled.push(v),
            None => {
                loop {
                    assert!(
                        candidate < dim,
                        "orthonormal completion ran out of candidates"
                    );
                    let mut e = DVector::zeros(dim);
                    e[candidate] = 1.0;
                    candidate += 1;
                    // two passes of Gram-Schmidt
                    for _ in 0..2 {
                        for b in &basis {
                            let proj = b.dot(&e);
                            e.axpy(-proj, b, 1.0);
                        }
                    }
                    let norm = e.norm();
                    if norm > 1e-6 {
                        e /= norm;
                        basis.push(e.clone());
                        filled.push(e);
                        break;
                    }
                }
            }
        }
    }
    DMatrix::from_columns(&filled)
}

/// Generalized singular value decomposition of a pair `(A, B)` with
/// `A` of size `n × p̃` and `B` of size `m × p̃`.
///
/// Layout: `A = U [0 S] G⁻¹` with `S = blockdiag{S₁, I_{p̃−m}}` (n × n) and
/// `B = V [M 0] G⁻¹` with `M = blockdiag{I_{p̃−n}, M₁}` (m × m). The columns of
/// `G` are ordered by ascending A-side value, so the first `p̃ − n` columns
/// span `Null(A)` and the trailing `c = p̃ − m` columns span `Null(B)`.
#[derive(Debug, Clone)]
pub struct GsvdFactors {
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub g_inv: DMatrix<f64>,
    /// Paired values of the middle block, `0 < σ₁ ≤ … ≤ σ_ℓ < 1`.
    pub sigma: Vec<f64>,
    /// `1 > μ₁ ≥ … ≥ μ_ℓ > 0`, with `σ_k² + μ_k² = 1`.
    pub mu: Vec<f64>,
    /// All `p̃` computed A-side values in column order of `G` (diagnostics).
    pub sigma_all: Vec<f64>,
    /// All `p̃` computed B-side values in column order of `G`.
    pub mu_all: Vec<f64>,
    pub ell: usize,
    pub null_dim: usize,
    pub n: usize,
    pub m: usize,
    pub p: usize,
}

impl GsvdFactors {
    /// The `n × p̃` matrix `[0 S]`.
    pub fn s_matrix(&self) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(self.n, self.p);
        let offset = self.p - self.n;
        for j in 0..self.n {
            let k = offset + j;
            s[(j, k)] = if j < self.ell { self.sigma[j] } else { 1.0 };
        }
        s
    }

    /// The `m × p̃` matrix `[M 0]`.
    pub fn m_matrix(&self) -> DMatrix<f64> {
        let mut mm = DMatrix::zeros(self.m, self.p);
        let offset = self.p - self.n;
        for k in 0..self.m {
            mm[(k, k)] = if k < offset { 1.0 } else { self.mu[k - offset] };
        }
        mm
    }

    /// Index (into the columns of `G`) of the first middle-block pair.
    pub fn first_paired(&self) -> usize {
        self.p - self.n
    }

    /// `G⁻ᵀ`, whose columns are the vectors `g̃_k`.
    pub fn g_inv_transpose(&self) -> DMatrix<f64> {
        self.g_inv.transpose()
    }
}

/// Computes the GSVD of `(a, b)`; see [`GsvdFactors`] for the layout.
///
/// Requires `n ≤ p̃`, `m ≤ p̃`, `p̃ ≤ n + m` and `rank([A; B]) = p̃`.
pub fn gsvd_pair(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<GsvdFactors> {
    let (n, p) = a.shape();
    let m = b.nrows();
    if b.ncols() != p {
        return Err(Error::InvalidInput(format!(
            "gsvd_pair: column counts differ ({p} vs {})",
            b.ncols()
        )));
    }
    if n == 0 || m == 0 || n > p || m > p || p > n + m {
        return Err(Error::ShapeAssumptionViolated(format!(
            "gsvd_pair needs n <= p, m <= p <= n + m (n={n}, m={m}, p={p})"
        )));
    }

    let mut stacked = DMatrix::zeros(n + m, p);
    stacked.rows_mut(0, n).copy_from(a);
    stacked.rows_mut(n, m).copy_from(b);
    let qr = stacked.qr();
    let q = qr.q();
    let r = qr.r();

    let rs = singular_values(&r);
    let rmax = rs[0];
    let tol = (n + m).max(p) as f64 * f64::EPSILON * rmax;
    let rank = rs.iter().filter(|&&s| s > tol).count();
    if rmax == 0.0 || rank < p {
        return Err(Error::StackedRankDeficient { rank, cols: p });
    }

    let q1 = q.rows(0, n).into_owned();
    let q2 = q.rows(n, m).into_owned();

    // Right basis from the SVD of Q1, padded to square so the full basis
    // (including Null(Q1)) comes out of one factorization.
    let mut q1p = DMatrix::zeros(p, p);
    q1p.rows_mut(0, n).copy_from(&q1);
    let svd1 = svd(&q1p)?;
    let u1 = svd1.u;
    let z_all = svd1.v;
    let c_all = svd1.s;

    struct Pair {
        c: f64,
        s: f64,
        z: DVector<f64>,
        u: Option<DVector<f64>>,
        v: Option<DVector<f64>>,
    }

    let unit_or_none = |v: DVector<f64>| {
        if (v.norm() - 1.0).abs() < 1e-8 {
            Some(v)
        } else {
            None
        }
    };

    let split = std::f64::consts::FRAC_1_SQRT_2;
    let mut pairs: Vec<Pair> = Vec::with_capacity(p);
    let mut big: Vec<usize> = Vec::new();
    for k in 0..p {
        let c = c_all[k];
        if c >= split {
            big.push(k);
            continue;
        }
        // B side well conditioned: derive v from the shared right vector.
        let z = z_all.column(k).into_owned();
        let t = &q2 * &z;
        let s = t.norm();
        let v = if s > 0.0 { unit_or_none(t / s) } else { None };
        let u = unit_or_none(u1.column(k).rows(0, n).into_owned());
        pairs.push(Pair { c, s, z, u, v });
    }

    if !big.is_empty() {
        // A side well conditioned: rediagonalize the block through Q2 so the
        // small B-side values keep absolute accuracy.
        let k1 = big.len();
        let z1 = DMatrix::from_columns(
            &big.iter()
                .map(|&k| z_all.column(k).into_owned())
                .collect::<Vec<_>>(),
        );
        let t1 = &q2 * &z1;
        let rows = m.max(k1);
        let mut t1p = DMatrix::zeros(rows, k1);
        t1p.rows_mut(0, m).copy_from(&t1);
        let svd2 = svd(&t1p)?;
        let v2 = svd2.u;
        let y = svd2.v;
        let zr = &z1 * &y;
        for j in 0..k1 {
            let z = zr.column(j).into_owned();
            let a_side = &q1 * &z;
            let c = a_side.norm();
            let s = svd2.s[j];
            let u = if c > 0.0 {
                unit_or_none(a_side / c)
            } else {
                None
            };
            let v = unit_or_none(v2.column(j).rows(0, m).into_owned());
            pairs.push(Pair { c, s, z, u, v });
        }
    }

    // Normalize each pair onto the unit circle and order by ascending A-side value.
    let mut ordered: Vec<(f64, f64, f64, Pair)> = pairs
        .into_iter()
        .map(|pr| {
            let radius = pr.c.hypot(pr.s);
            (pr.c / radius, pr.s / radius, radius, pr)
        })
        .collect();
    ordered.sort_by(|x, y| x.0.total_cmp(&y.0).then(y.1.total_cmp(&x.1)));

    let offset = p - n;
    let ell = n + m - p;

    let mut z_scaled = DMatrix::zeros(p, p);
    let mut g_inv_left = DMatrix::zeros(p, p);
    let mut sigma_all = Vec::with_capacity(p);
    let mut mu_all = Vec::with_capacity(p);
    let mut u_cols: Vec<Option<DVector<f64>>> = vec![None; n];
    let mut v_cols: Vec<Option<DVector<f64>>> = vec![None; m];
    for (k, (sig, mu, radius, pr)) in ordered.into_iter().enumerate() {
        z_scaled.set_column(k, &(&pr.z / radius));
        g_inv_left.set_row(k, &(pr.z.transpose() * radius));
        sigma_all.push(sig);
        mu_all.push(mu);
        if k >= offset {
            u_cols[k - offset] = pr.u;
        }
        if k < m {
            v_cols[k] = pr.v;
        }
    }
    // Completion keeps the supplied columns and only fills ambiguous slots.
    let u = complete_orthonormal(u_cols, n);
    let v = complete_orthonormal(v_cols, m);

    // G = R⁻¹ Z diag(1/r),  G⁻¹ = diag(r) Z' R
    let g = r
        .solve_upper_triangular(&z_scaled)
        .ok_or_else(|| Error::StackedRankDeficient {
            rank: p - 1,
            cols: p,
        })?;
    let g_inv = &g_inv_left * &r;

    let sigma = sigma_all[offset..offset + ell].to_vec();
    let mu = mu_all[offset..offset + ell].to_vec();

    Ok(GsvdFactors {
        u,
        v,
        g,
        g_inv,
        sigma,
        mu,
        sigma_all,
        mu_all,
        ell,
        null_dim: p - m,
        n,
        m,
        p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / b.norm().max(1e-300)
    }

    fn check_reconstruction(a: &DMatrix<f64>, b: &DMatrix<f64>, f: &GsvdFactors) {
        let ra = &f.u * f.s_matrix() * &f.g_inv;
        let rb = &f.v * f.m_matrix() * &f.g_inv;
        assert!(rel_err(&ra, a) < 1e-10, "A residual {}", rel_err(&ra, a));
        assert!(rel_err(&rb, b) < 1e-10, "B residual {}", rel_err(&rb, b));
        let n = f.u.nrows();
        let m = f.v.nrows();
        assert!((f.u.transpose() * &f.u - DMatrix::identity(n, n)).norm() < 1e-10);
        assert!((f.v.transpose() * &f.v - DMatrix::identity(m, m)).norm() < 1e-10);
        assert!((&f.g * &f.g_inv - DMatrix::identity(f.p, f.p)).norm() < 1e-9);
    }

    #[test]
    fn identity_pair_splits_evenly() {
        let a = DMatrix::<f64>::identity(2, 2);
        let f = gsvd_pair(&a, &a).unwrap();
        assert_eq!(f.ell, 2);
        for k in 0..2 {
            assert!((f.sigma[k] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-14);
            assert!((f.mu[k] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-14);
        }
        check_reconstruction(&a, &a, &f);
    }

    #[test]
    fn quotient_values_match_svd_of_a_binv() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(n, p) in &[(3usize, 5usize), (5, 5), (2, 7)] {
            let a = random_matrix(&mut rng, n, p);
            let b = random_matrix(&mut rng, p, p) + DMatrix::identity(p, p) * 2.0;
            let f = gsvd_pair(&a, &b).unwrap();
            check_reconstruction(&a, &b, &f);
            let binv = b.clone().try_inverse().unwrap();
            let mut expected = singular_values(&(&a * binv));
            expected.sort_by(|x, y| x.total_cmp(y));
            let mut got: Vec<f64> = f.sigma.iter().zip(&f.mu).map(|(s, m)| s / m).collect();
            got.sort_by(|x, y| x.total_cmp(y));
            assert_eq!(got.len(), expected.len());
            for (g, e) in got.iter().zip(&expected) {
                assert!((g - e).abs() <= 1e-9 * e.abs().max(1.0), "{g} vs {e}");
            }
        }
    }

    #[test]
    fn second_difference_null_space_saturates() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = 5;
        let mut b = DMatrix::zeros(p - 2, p);
        for i in 0..p - 2 {
            b[(i, i)] = 1.0;
            b[(i, i + 1)] = -2.0;
            b[(i, i + 2)] = 1.0;
        }
        let a = random_matrix(&mut rng, 3, p);
        let f = gsvd_pair(&a, &b).unwrap();
        assert_eq!(f.null_dim, 2);
        check_reconstruction(&a, &b, &f);
        let saturated = f
            .sigma_all
            .iter()
            .filter(|&&s| (s - 1.0).abs() < 1e-12)
            .count();
        assert_eq!(saturated, 2);
        for k in 0..f.ell {
            assert!(f.sigma[k] > 0.0 && f.sigma[k] < 1.0);
            assert!((f.sigma[k].powi(2) + f.mu[k].powi(2) - 1.0).abs() < 1e-12);
        }
        // trailing columns of G span Null(B)
        for k in (p - 2)..p {
            assert!((&b * f.g.column(k)).norm() < 1e-10 * f.g.column(k).norm());
        }
    }

    #[test]
    fn ordering_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let a = random_matrix(&mut rng, 6, 9);
        let b = random_matrix(&mut rng, 8, 9);
        let f = gsvd_pair(&a, &b).unwrap();
        check_reconstruction(&a, &b, &f);
        for k in 1..f.ell {
            assert!(f.sigma[k] >= f.sigma[k - 1]);
            assert!(f.mu[k] <= f.mu[k - 1]);
        }
    }

    #[test]
    fn stacked_rank_deficiency_is_rejected() {
        let a = DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert!(matches!(
            gsvd_pair(&a, &b),
            Err(Error::StackedRankDeficient { .. })
        ));
    }

    #[test]
    fn bad_shapes_are_rejected() {
        let a = DMatrix::<f64>::identity(4, 2);
        let b = DMatrix::<f64>::identity(2, 2);
        assert!(matches!(
            gsvd_pair(&a, &b),
            Err(Error::ShapeAssumptionViolated(_))
        ));
    }

    #[test]
    fn solve_spd_examples() {
        let rhs = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let x = solve_spd(&DMatrix::identity(3, 3), &rhs).unwrap();
        assert_eq!(x, rhs);
        let x = solve_spd(&(DMatrix::identity(3, 3) * 2.0), &rhs).unwrap();
        assert!((x - &rhs / 2.0).norm() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = random_matrix(&mut rng, 8, 8);
        let a = &b * b.transpose() + DMatrix::identity(8, 8);
        let rhs = random_matrix(&mut rng, 8, 3);
        let x = solve_spd(&a, &rhs).unwrap();
        let oracle = a.clone().try_inverse().unwrap() * &rhs;
        assert!(rel_err(&x, &oracle) < 1e-10);
        assert!((&a * &x - &rhs).norm() <= 1e-8 * rhs.norm());
    }

    #[test]
    fn solve_spd_rejects_indefinite() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            solve_spd(&a, &DMatrix::identity(2, 2)),
            Err(Error::NotPositiveDefinite)
        ));
    }

    #[test]
    fn pseudoinverse_examples() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        assert!(rel_err(&pseudoinverse(&a), &a.clone().try_inverse().unwrap()) < 1e-12);
        assert_eq!(pseudoinverse(&DMatrix::zeros(3, 2)), DMatrix::zeros(2, 3));

        let u = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let v = DVector::from_vec(vec![3.0, 1.0]);
        let outer = &u * v.transpose();
        let expected = (&v * u.transpose()) / (u.norm_squared() * v.norm_squared());
        assert!(rel_err(&pseudoinverse(&outer), &expected) < 1e-12);
    }

    #[test]
    fn pseudoinverse_penrose_conditions() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_matrix(&mut rng, 6, 3) * random_matrix(&mut rng, 3, 5);
        let x = pseudoinverse(&a);
        let tol = 1e-9;
        assert!(rel_err(&(&a * &x * &a), &a) < tol);
        assert!(rel_err(&(&x * &a * &x), &x) < tol);
        let ax = &a * &x;
        assert!(rel_err(&ax.transpose(), &ax) < tol);
        let xa = &x * &a;
        assert!(rel_err(&xa.transpose(), &xa) < tol);
    }

    #[test]
    fn inverse_sqrt_squares_to_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let b = random_matrix(&mut rng, 5, 5);
        let a = &b * b.transpose() + DMatrix::identity(5, 5) * 0.5;
        let h = spd_inverse_sqrt(&a).unwrap();
        let inv = a.clone().try_inverse().unwrap();
        assert!(rel_err(&(&h * &h), &inv) < 1e-10);
    }
}
