//! Dense complex linear algebra on top of `nalgebra`.
//!
//! Everything here is a pure function of its inputs. Tolerances come from a
//! [`NumericPolicy`]; the plain entry points use [`NumericPolicy::default`].

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen, QR};

use crate::error::{Error, Result};

pub use nalgebra::Complex;

pub type C64 = Complex<f64>;
pub type ComplexMatrix = DMatrix<C64>;
pub type ComplexVector = DVector<C64>;

/// Tolerances shared by the factorizations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumericPolicy {
    /// Maximum ‖M − Mᴴ‖_F / ‖M‖_F accepted as Hermitian.
    pub hermitian_tol: f64,
    /// Smallest eigenvalue must exceed this times the largest.
    pub pd_ratio: f64,
    /// Smallest |R_ii| of a QR factor must exceed this times the largest for
    /// a basis to count as full rank.
    pub rank_ratio: f64,
    /// Norm below which a whitened test vector counts as zero.
    pub degenerate_norm: f64,
}

impl Default for NumericPolicy {
    fn default() -> Self {
        NumericPolicy {
            hermitian_tol: 1e-8,
            // a few ulps: the Gaussian-shaped covariance at N = 24 has
            // condition number ~5e14 and must still be accepted
            pd_ratio: 4.0 * f64::EPSILON,
            rank_ratio: 1e-10,
            degenerate_norm: 1e-14,
        }
    }
}

pub fn c64(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

pub fn ensure_finite(m: &ComplexMatrix, what: &'static str) -> Result<()> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::Dimension(format!("{what} is empty")));
    }
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub fn ensure_finite_vector(v: &ComplexVector, what: &'static str) -> Result<()> {
    if v.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// (M + Mᴴ)/2
pub fn symmetrize(m: &ComplexMatrix) -> ComplexMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Real part of vᴴ·M·v.
pub fn quad_form(m: &ComplexMatrix, v: &ComplexVector) -> f64 {
    v.dotc(&(m * v)).re
}

/// ‖A − B‖_F / ‖B‖_F, falling back to the absolute residual when B vanishes.
pub fn relative_residual(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    let diff = (a - b).norm();
    let scale = b.norm();
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// |a − b| / max(|a|, |b|), zero when both vanish.
pub fn relative_difference(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Eigendecomposition of a Hermitian positive-definite matrix, symmetrized
/// first. Eigenvalues are returned unsorted, as `nalgebra` produces them.
pub fn hpd_eigen(m: &ComplexMatrix, policy: &NumericPolicy) -> Result<SymmetricEigen<C64, nalgebra::Dyn>> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    ensure_finite(m, "Hermitian matrix")?;
    let scale = m.norm();
    let asymmetry = if scale > 0.0 { (m - m.adjoint()).norm() / scale } else { 0.0 };
    if asymmetry > policy.hermitian_tol {
        return Err(Error::NotHermitian { asymmetry });
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(min > 0.0) || min <= policy.pd_ratio * max {
        return Err(Error::NotPositiveDefinite {
            min_eigenvalue: min,
            max_eigenvalue: max,
        });
    }
    Ok(eig)
}

fn recompose(eig: &SymmetricEigen<C64, nalgebra::Dyn>, f: impl Fn(f64) -> f64) -> ComplexMatrix {
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        let s = f(lambda);
        scaled.column_mut(j).scale_mut(s);
    }
    symmetrize(&(scaled * v.adjoint()))
}

/// M^{-1/2} for Hermitian positive-definite M.
pub fn hermitian_sqrt_inv(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    hermitian_sqrt_inv_with(m, &NumericPolicy::default())
}

pub fn hermitian_sqrt_inv_with(m: &ComplexMatrix, policy: &NumericPolicy) -> Result<ComplexMatrix> {
    let eig = hpd_eigen(m, policy)?;
    Ok(recompose(&eig, |l| 1.0 / l.sqrt()))
}

/// M^{1/2} for Hermitian positive-definite M.
pub fn hermitian_sqrt(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    hermitian_sqrt_with(m, &NumericPolicy::default())
}

pub fn hermitian_sqrt_with(m: &ComplexMatrix, policy: &NumericPolicy) -> Result<ComplexMatrix> {
    let eig = hpd_eigen(m, policy)?;
    Ok(recompose(&eig, f64::sqrt))
}

/// M^{-1} for Hermitian positive-definite M. The eigendecomposition only
/// validates; the inverse comes from a Cholesky factor, which keeps entries
/// accurate to about cond·eps relative to the result rather than to the
/// largest eigenvalue's scale.
pub fn hermitian_inverse(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    hpd_eigen(m, &NumericPolicy::default())?;
    Ok(symmetrize(&cholesky(m)?.inverse()))
}

/// Cholesky factor of a Hermitian matrix that must be positive definite.
/// Cheaper than [`hpd_eigen`] and without the condition-number check.
pub fn cholesky(m: &ComplexMatrix) -> Result<Cholesky<C64, nalgebra::Dyn>> {
    Cholesky::new(symmetrize(m)).ok_or(Error::NotPositiveDefinite {
        min_eigenvalue: f64::NAN,
        max_eigenvalue: f64::NAN,
    })
}

/// J = J_u·D_J with J_u = J(JᴴJ)^{-1/2} semi-unitary and D_J = (JᴴJ)^{1/2}.
pub fn polar_decompose(j: &ComplexMatrix) -> Result<(ComplexMatrix, ComplexMatrix)> {
    polar_decompose_with(j, &NumericPolicy::default())
}

pub fn polar_decompose_with(
    j: &ComplexMatrix,
    policy: &NumericPolicy,
) -> Result<(ComplexMatrix, ComplexMatrix)> {
    ensure_finite(j, "interference matrix")?;
    if j.ncols() > j.nrows() {
        return Err(Error::InterferenceRankDeficient);
    }
    let gram = j.adjoint() * j;
    let eig = hpd_eigen(&gram, policy).map_err(|_| Error::InterferenceRankDeficient)?;
    let inv_root = recompose(&eig, |l| 1.0 / l.sqrt());
    let root = recompose(&eig, f64::sqrt);
    Ok((j * inv_root, root))
}

/// Orthonormal basis of the orthogonal complement of the column space of J,
/// taken as the trailing N − q columns of the full unitary factor of a
/// Householder QR of J_u.
pub fn orth_complement(j: &ComplexMatrix) -> Result<ComplexMatrix> {
    orth_complement_with(j, &NumericPolicy::default())
}

pub fn orth_complement_with(j: &ComplexMatrix, policy: &NumericPolicy) -> Result<ComplexMatrix> {
    let (n, q) = j.shape();
    if q >= n {
        return Err(Error::SubspaceFillsSpace { n, q });
    }
    let (ju, _) = polar_decompose_with(j, policy)?;
    let qr = QR::new(ju);
    let mut q_adj = ComplexMatrix::identity(n, n);
    qr.q_tr_mul(&mut q_adj);
    Ok(q_adj.rows(q, n - q).adjoint())
}

/// P_A = A(AᴴA)^{-1}Aᴴ.
pub fn projector(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    projector_with(a, &NumericPolicy::default())
}

pub fn projector_with(a: &ComplexMatrix, policy: &NumericPolicy) -> Result<ComplexMatrix> {
    let q = orthonormal_basis_with(a, policy)?;
    Ok(symmetrize(&(&q * q.adjoint())))
}

/// Orthonormal basis of the column space of A from a thin Householder QR.
pub fn orthonormal_basis_with(a: &ComplexMatrix, policy: &NumericPolicy) -> Result<ComplexMatrix> {
    ensure_finite(a, "projector basis")?;
    let (rows, cols) = a.shape();
    if cols > rows {
        return Err(Error::RankDeficient { rows, cols });
    }
    let qr = QR::new(a.clone());
    let (min, max) = diagonal_range(&qr.r());
    if !(min > policy.rank_ratio * max) {
        return Err(Error::RankDeficient { rows, cols });
    }
    Ok(qr.q())
}

fn diagonal_range(r: &ComplexMatrix) -> (f64, f64) {
    r.diagonal()
        .iter()
        .map(|z| z.norm())
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Upper-triangular T with Y·Yᴴ = Tᴴ·T, from a QR of Yᴴ. Y·Yᴴ is never
/// formed, so directions with tiny power keep their relative accuracy.
pub fn gram_factor(y: &ComplexMatrix) -> Result<ComplexMatrix> {
    ensure_finite(y, "data matrix")?;
    let (rows, cols) = y.shape();
    if cols < rows {
        return Err(Error::RankDeficient { rows, cols });
    }
    let t = QR::new(y.adjoint()).r();
    let (min, max) = diagonal_range(&t);
    if !(min > f64::EPSILON * max) {
        return Err(Error::RankDeficient { rows, cols });
    }
    Ok(t)
}

/// T^{-ᴴ}·B for an upper-triangular factor T from [`gram_factor`]. The
/// result whitens B against Tᴴ·T.
pub fn whiten_by_factor(t: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    let w = t.adjoint().solve_lower_triangular(b).ok_or(Error::NonFinite("triangular solve"))?;
    ensure_finite(&w, "whitened data")?;
    Ok(w)
}

/// vᴴ(AᴴA)^{-1}v computed from a QR of A.
pub fn gram_inverse_quad_form(a: &ComplexMatrix, v: &ComplexVector) -> Result<f64> {
    if a.ncols() != v.len() {
        return Err(Error::Dimension(format!("A has {} columns, v has {} entries", a.ncols(), v.len())));
    }
    let t = gram_factor(&a.adjoint())?;
    let w = whiten_by_factor(&t, &ComplexMatrix::from_column_slice(v.len(), 1, v.as_slice()))?;
    Ok(w.norm_squared())
}

/// I − P_A.
pub fn complement_projector(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    let p = projector(a)?;
    Ok(ComplexMatrix::identity(p.nrows(), p.ncols()) - p)
}

/// S = X_L·X_Lᴴ, without the 1/L normalization.
pub fn sample_covariance(x: &ComplexMatrix) -> ComplexMatrix {
    let s = x * x.adjoint();
    symmetrize(&s)
}

/// Horizontal concatenation [A, B].
pub fn hstack(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    if a.nrows() != b.nrows() {
        return Err(Error::Dimension(format!(
            "cannot stack {} rows beside {} rows",
            a.nrows(),
            b.nrows()
        )));
    }
    let mut out = ComplexMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::complex_gaussian_matrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn real(rows: usize, cols: usize, data: &[f64]) -> ComplexMatrix {
        ComplexMatrix::from_row_iterator(rows, cols, data.iter().map(|&x| c64(x, 0.0)))
    }

    fn random_hpd(n: usize, r: &mut ChaCha8Rng) -> ComplexMatrix {
        let a = complex_gaussian_matrix(r, n, 2 * n);
        sample_covariance(&a) + ComplexMatrix::identity(n, n).scale(0.1)
    }

    fn basis(n: usize, cols: &[usize]) -> ComplexMatrix {
        let mut m = ComplexMatrix::zeros(n, cols.len());
        for (j, &i) in cols.iter().enumerate() {
            m[(i, j)] = c64(1.0, 0.0);
        }
        m
    }

    #[test]
    fn polar_unit_column() {
        let j = basis(3, &[0]);
        let (ju, d) = polar_decompose(&j).unwrap();
        assert!(relative_residual(&ju, &j) < 1e-15);
        assert!((d[(0, 0)] - c64(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn polar_scaling_case() {
        let j = real(2, 1, &[2.0, 0.0]);
        let (ju, d) = polar_decompose(&j).unwrap();
        assert!(relative_residual(&ju, &real(2, 1, &[1.0, 0.0])) < 1e-15);
        assert!((d[(0, 0)] - c64(2.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn polar_reconstructs_random() {
        let j = complex_gaussian_matrix(&mut rng(1), 6, 2);
        let (ju, d) = polar_decompose(&j).unwrap();
        assert!(relative_residual(&(&ju * &d), &j) < 1e-12);
        let gram = ju.adjoint() * &ju;
        assert!(relative_residual(&gram, &ComplexMatrix::identity(2, 2)) < 1e-12);
        assert!(relative_residual(&d, &d.adjoint()) < 1e-14);
    }

    #[test]
    fn polar_rejects_rank_deficient() {
        let mut j = complex_gaussian_matrix(&mut rng(2), 5, 2);
        let first = j.column(0).into_owned();
        j.set_column(1, &first.scale(3.0));
        assert_eq!(polar_decompose(&j).unwrap_err(), Error::InterferenceRankDeficient);
    }

    #[test]
    fn complement_of_unit_vector() {
        let j = basis(3, &[0]);
        let jp = orth_complement(&j).unwrap();
        assert_eq!(jp.shape(), (3, 2));
        let cross = jp.adjoint() * &j;
        assert!(cross.norm() < 1e-15);
        // spans {e2, e3}
        assert!(jp.row(0).norm() < 1e-15);
        let p = &jp * jp.adjoint();
        assert!(relative_residual(&p, &(basis(3, &[1, 2]) * basis(3, &[1, 2]).adjoint())) < 1e-14);
    }

    #[test]
    fn complement_of_two_axes() {
        let j = basis(4, &[0, 1]);
        let jp = orth_complement(&j).unwrap();
        let p = &jp * jp.adjoint();
        let expected = basis(4, &[2, 3]) * basis(4, &[2, 3]).adjoint();
        assert!(relative_residual(&p, &expected) < 1e-14);
    }

    #[test]
    fn complement_completes_unitary() {
        let j = complex_gaussian_matrix(&mut rng(3), 24, 6);
        let jp = orth_complement(&j).unwrap();
        let (ju, _) = polar_decompose(&j).unwrap();
        let u = hstack(&ju, &jp).unwrap();
        let eye = ComplexMatrix::identity(24, 24);
        assert!((u.adjoint() * &u - &eye).norm() < 1e-10);
        assert!((&u * u.adjoint() - &eye).norm() < 1e-10);
        assert!((jp.adjoint() * &j).norm() < 1e-10 * j.norm());
    }

    #[test]
    fn complement_rejects_full_space() {
        let j = complex_gaussian_matrix(&mut rng(4), 3, 3);
        assert!(matches!(orth_complement(&j), Err(Error::SubspaceFillsSpace { n: 3, q: 3 })));
    }

    #[test]
    fn sqrt_inv_of_scaled_identity() {
        let t = hermitian_sqrt_inv(&ComplexMatrix::identity(2, 2).scale(4.0)).unwrap();
        assert!(relative_residual(&t, &ComplexMatrix::identity(2, 2).scale(0.5)) < 1e-15);
    }

    #[test]
    fn sqrt_inv_of_diagonal() {
        let t = hermitian_sqrt_inv(&real(2, 2, &[1.0, 0.0, 0.0, 9.0])).unwrap();
        assert!(relative_residual(&t, &real(2, 2, &[1.0, 0.0, 0.0, 1.0 / 3.0])) < 1e-15);
    }

    #[test]
    fn sqrt_inv_whitens_random_hpd() {
        let m = random_hpd(8, &mut rng(5));
        let t = hermitian_sqrt_inv(&m).unwrap();
        assert!((&t * &m * &t - ComplexMatrix::identity(8, 8)).norm() < 1e-9);
        assert!(relative_residual(&t, &t.adjoint()) < 1e-14);
        assert!((&t * &m - &m * &t).norm() < 1e-9 * m.norm());
        let root = hermitian_sqrt(&m).unwrap();
        assert!(relative_residual(&(&root * &root), &m) < 1e-12);
    }

    #[test]
    fn sqrt_inv_reports_smallest_eigenvalue() {
        let m = real(2, 2, &[1.0, 0.0, 0.0, -2.0]);
        match hermitian_sqrt_inv(&m) {
            Err(Error::NotPositiveDefinite { min_eigenvalue, .. }) => {
                assert!((min_eigenvalue + 2.0).abs() < 1e-12)
            }
            other => panic!("unexpected {other:?}"),
        }
        // below the conditioning floor
        let m = real(2, 2, &[1.0, 0.0, 0.0, 1e-16]);
        assert!(matches!(hermitian_sqrt_inv(&m), Err(Error::NotPositiveDefinite { .. })));
        let loose = NumericPolicy { pd_ratio: 1e-17, ..NumericPolicy::default() };
        assert!(hermitian_sqrt_inv_with(&m, &loose).is_ok());
    }

    #[test]
    fn sqrt_inv_rejects_non_hermitian() {
        let m = real(2, 2, &[2.0, 1.0, 0.0, 2.0]);
        assert!(matches!(hermitian_sqrt_inv(&m), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn projector_trivial_cases() {
        let p = projector(&basis(3, &[0])).unwrap();
        assert!(relative_residual(&p, &real(3, 3, &[1., 0., 0., 0., 0., 0., 0., 0., 0.])) < 1e-15);
        let eye = ComplexMatrix::identity(4, 4);
        assert!(relative_residual(&projector(&eye).unwrap(), &eye) < 1e-14);
    }

    #[test]
    fn projector_properties_random() {
        let a = complex_gaussian_matrix(&mut rng(6), 10, 3);
        let p = projector(&a).unwrap();
        assert!((&p * &p - &p).norm() < 1e-10);
        assert!((&p - p.adjoint()).norm() < 1e-10);
        assert!((p.trace() - c64(3.0, 0.0)).norm() < 1e-10);
        assert!((&p * &a - &a).norm() < 1e-10 * a.norm());
    }

    #[test]
    fn projector_rejects_rank_deficient() {
        let mut a = complex_gaussian_matrix(&mut rng(7), 5, 2);
        let first = a.column(0).into_owned();
        a.set_column(1, &first);
        assert!(matches!(projector(&a), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn gram_factor_reproduces_sample_covariance() {
        let y = complex_gaussian_matrix(&mut rng(8), 5, 9);
        let t = gram_factor(&y).unwrap();
        assert!(relative_residual(&(t.adjoint() * &t), &sample_covariance(&y)) < 1e-13);
        for i in 0..5 {
            for j in 0..i {
                assert_eq!(t[(i, j)], c64(0.0, 0.0));
            }
        }
        // whitening against the factor gives the inverse quadratic form
        let v = complex_gaussian_matrix(&mut rng(9), 5, 1);
        let w = whiten_by_factor(&t, &v).unwrap();
        let direct = quad_form(&hermitian_inverse(&sample_covariance(&y)).unwrap(), &v.column(0).into_owned());
        assert!(relative_difference(w.norm_squared(), direct) < 1e-12);
        assert!(matches!(gram_factor(&complex_gaussian_matrix(&mut rng(8), 5, 4)), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn gram_inverse_quad_form_matches_explicit_inverse() {
        let a = complex_gaussian_matrix(&mut rng(10), 7, 3);
        let v = complex_gaussian_matrix(&mut rng(11), 3, 1).column(0).into_owned();
        let direct = quad_form(&hermitian_inverse(&(a.adjoint() * &a)).unwrap(), &v);
        assert!(relative_difference(gram_inverse_quad_form(&a, &v).unwrap(), direct) < 1e-12);
        // A = I gives ‖v‖²
        let eye = ComplexMatrix::identity(3, 3);
        assert!(relative_difference(gram_inverse_quad_form(&eye, &v).unwrap(), v.norm_squared()) < 1e-15);
    }

    #[test]
    fn sample_covariance_trivial_cases() {
        let s = sample_covariance(&basis(2, &[0]));
        assert!(relative_residual(&s, &real(2, 2, &[1., 0., 0., 0.])) < 1e-15);
        let eye = ComplexMatrix::identity(2, 2);
        assert!(relative_residual(&sample_covariance(&eye), &eye) < 1e-15);
    }

    #[test]
    fn sample_covariance_is_psd_with_bounded_rank() {
        let x = complex_gaussian_matrix(&mut rng(8), 4, 8);
        let s = sample_covariance(&x);
        assert!((&s - s.adjoint()).norm() < 1e-14);
        let eig = SymmetricEigen::new(s.clone());
        assert!(eig.eigenvalues.min() > -1e-12);
        // wide data: full rank 4; tall data of 2 columns: rank 2
        let x2 = complex_gaussian_matrix(&mut rng(9), 4, 2);
        let mut ev: Vec<f64> = SymmetricEigen::new(sample_covariance(&x2)).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        assert!(ev[0].abs() < 1e-12 && ev[1].abs() < 1e-12 && ev[2] > 1e-6);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn projector_depends_only_on_column_space(seed in any::<u64>(), n in 3usize..10, k in 1usize..3) {
                let mut r = rng(seed);
                let a = complex_gaussian_matrix(&mut r, n, k);
                let c = complex_gaussian_matrix(&mut r, k, k) + ComplexMatrix::identity(k, k).scale(2.0);
                let p1 = projector(&a).unwrap();
                let p2 = projector(&(&a * &c)).unwrap();
                prop_assert!((p1 - p2).norm() < 1e-9);
            }

            #[test]
            fn sqrt_inv_commutes(seed in any::<u64>(), n in 1usize..9) {
                let m = random_hpd(n, &mut rng(seed));
                let t = hermitian_sqrt_inv(&m).unwrap();
                prop_assert!((&t * &m - &m * &t).norm() < 1e-9 * m.norm());
            }
        }
    }
}
