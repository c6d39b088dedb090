//! Pointwise constitutive laws.
//!
//! Compressible Mooney-Rivlin energy
//!
//! ```text
//! Psi(F) = lambda/4 (J^2 - 1) - (lambda/2 + mu) ln J + mu/2 (I1 - 3)
//! ```
//!
//! with `J = det F` and `I1 = tr(F^T F)`, its first Piola-Kirchhoff stress
//! and material tangent, plus the small-strain linear-elastic law that the
//! untangler solves. All functions are generic over the dimension `D`;
//! `D = 2` is plane strain, where the out-of-plane stretch is 1 and adds 1
//! to `I1`.

use nalgebra::SMatrix;

use crate::error::{Error, Result};

pub type Mat<const D: usize> = SMatrix<f64, D, D>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialParams {
    pub lambda: f64,
    pub mu: f64,
}

impl MaterialParams {
    pub fn new(lambda: f64, mu: f64) -> Result<Self> {
        if !(lambda > 0.0 && mu > 0.0 && lambda.is_finite() && mu.is_finite()) {
            return Err(Error::Argument(format!(
                "Lame parameters must be positive, got lambda = {lambda}, mu = {mu}"
            )));
        }
        Ok(Self { lambda, mu })
    }

    /// Both Lame parameters multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            lambda: self.lambda * s,
            mu: self.mu * s,
        }
    }
}

/// `lambda = nu E / ((1 + nu)(1 - 2 nu))`, `mu = E / (2 (1 + nu))`.
pub fn lame_from_young_poisson(young: f64, nu: f64) -> Result<MaterialParams> {
    if !(young > 0.0 && young.is_finite()) {
        return Err(Error::Argument(format!("Young's modulus must be positive, got {young}")));
    }
    if !(nu > 0.0 && nu < 0.5) {
        return Err(Error::Argument(format!(
            "Poisson ratio must lie in (0, 0.5), got {nu}"
        )));
    }
    MaterialParams::new(
        nu * young / ((1.0 + nu) * (1.0 - 2.0 * nu)),
        young / (2.0 * (1.0 + nu)),
    )
}

pub(crate) fn det<const D: usize>(m: &Mat<D>) -> f64 {
    match D {
        1 => m[(0, 0)],
        2 => m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)],
        3 => {
            m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)])
                - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
                + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)])
        }
        _ => unreachable!("dimension {D} not supported"),
    }
}

/// `F^{-T}` via the cofactor matrix: `cof(F) = J F^{-T}`.
fn inverse_transpose<const D: usize>(m: &Mat<D>, j: f64) -> Mat<D> {
    let mut cof = Mat::<D>::zeros();
    match D {
        2 => {
            cof[(0, 0)] = m[(1, 1)];
            cof[(0, 1)] = -m[(1, 0)];
            cof[(1, 0)] = -m[(0, 1)];
            cof[(1, 1)] = m[(0, 0)];
        }
        3 => {
            for i in 0..3 {
                for k in 0..3 {
                    let (i1, i2) = ((i + 1) % 3, (i + 2) % 3);
                    let (k1, k2) = ((k + 1) % 3, (k + 2) % 3);
                    cof[(i, k)] = m[(i1, k1)] * m[(i2, k2)] - m[(i1, k2)] * m[(i2, k1)];
                }
            }
        }
        _ => unreachable!("dimension {D} not supported"),
    }
    cof / j
}

/// Deformation measures of one constant-strain element.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementKinematics<const D: usize> {
    pub f: Mat<D>,
    pub j: f64,
    /// First invariant in the 3D embedding (plane strain adds 1).
    pub i1: f64,
    pub green_strain: Mat<D>,
}

impl<const D: usize> ElementKinematics<D> {
    pub fn new(f: Mat<D>) -> Self {
        let c = f.transpose() * f;
        Self {
            j: det(&f),
            i1: first_invariant(&f),
            green_strain: (c - Mat::<D>::identity()) * 0.5,
            f,
        }
    }
}

fn first_invariant<const D: usize>(f: &Mat<D>) -> f64 {
    let tr = f.iter().map(|x| x * x).sum::<f64>();
    if D == 2 {
        tr + 1.0
    } else {
        tr
    }
}

/// Mooney-Rivlin energy density. Undefined for `det F <= 0`.
pub fn mr_energy<const D: usize>(f: &Mat<D>, p: &MaterialParams) -> Result<f64> {
    let j = det(f);
    if !(j > 0.0) {
        return Err(Error::Domain { det: j });
    }
    let i1 = first_invariant(f);
    Ok(0.25 * p.lambda * (j * j - 1.0) - (0.5 * p.lambda + p.mu) * j.ln() + 0.5 * p.mu * (i1 - 3.0))
}

/// First Piola-Kirchhoff stress `P = (lambda/2 J^2 - lambda/2 - mu) F^{-T} + mu F`.
///
/// Defined for inverted elements (`J < 0`) too; only `J = 0` is rejected.
pub fn mr_stress<const D: usize>(f: &Mat<D>, p: &MaterialParams) -> Result<Mat<D>> {
    let j = det(f);
    if j == 0.0 || !j.is_finite() {
        return Err(Error::Singular { element: None });
    }
    let g = inverse_transpose(f, j);
    let a = 0.5 * p.lambda * j * j - 0.5 * p.lambda - p.mu;
    Ok(g * a + f * p.mu)
}

/// Fourth-order tensor `A[i][J][k][L] = dP_iJ / dF_kL`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tangent<const D: usize>(pub [[[[f64; D]; D]; D]; D]);

impl<const D: usize> Tangent<D> {
    pub fn zeros() -> Self {
        Self([[[[0.0; D]; D]; D]; D])
    }

    #[inline]
    pub fn get(&self, i: usize, jj: usize, k: usize, l: usize) -> f64 {
        self.0[i][jj][k][l]
    }

    pub fn max_abs(&self) -> f64 {
        self.0
            .iter()
            .flatten()
            .flatten()
            .flatten()
            .fold(0.0f64, |m, x| m.max(x.abs()))
    }

    /// Largest `|A_iJkL - A_kLiJ|`.
    pub fn major_asymmetry(&self) -> f64 {
        let mut m = 0.0f64;
        for i in 0..D {
            for jj in 0..D {
                for k in 0..D {
                    for l in 0..D {
                        m = m.max((self.0[i][jj][k][l] - self.0[k][l][i][jj]).abs());
                    }
                }
            }
        }
        m
    }
}

/// Material tangent of the Mooney-Rivlin law. With `G = F^{-T}` and
/// `a = lambda/2 J^2 - lambda/2 - mu`:
///
/// ```text
/// A_iJkL = lambda J^2 G_iJ G_kL - a G_iL G_kJ + mu d_ik d_JL
/// ```
pub fn mr_tangent<const D: usize>(f: &Mat<D>, p: &MaterialParams) -> Result<Tangent<D>> {
    let j = det(f);
    if j == 0.0 || !j.is_finite() {
        return Err(Error::Singular { element: None });
    }
    let g = inverse_transpose(f, j);
    let a = 0.5 * p.lambda * j * j - 0.5 * p.lambda - p.mu;
    let b = p.lambda * j * j;
    let mut t = Tangent::<D>::zeros();
    for i in 0..D {
        for jj in 0..D {
            for k in 0..D {
                for l in 0..D {
                    let mut v = b * g[(i, jj)] * g[(k, l)] - a * g[(i, l)] * g[(k, jj)];
                    if i == k && jj == l {
                        v += p.mu;
                    }
                    t.0[i][jj][k][l] = v;
                }
            }
        }
    }
    Ok(t)
}

fn small_strain<const D: usize>(f: &Mat<D>) -> Mat<D> {
    let h = f - Mat::<D>::identity();
    (h + h.transpose()) * 0.5
}

/// `mu sum E_ij^2 + lambda/2 (tr E)^2` with `E = sym(F - I)`.
pub fn linear_elastic_energy<const D: usize>(f: &Mat<D>, p: &MaterialParams) -> f64 {
    let e = small_strain(f);
    p.mu * e.iter().map(|x| x * x).sum::<f64>() + 0.5 * p.lambda * e.trace().powi(2)
}

/// `2 mu E + lambda tr(E) I`.
pub fn linear_elastic_stress<const D: usize>(f: &Mat<D>, p: &MaterialParams) -> Mat<D> {
    let e = small_strain(f);
    e * (2.0 * p.mu) + Mat::<D>::identity() * (p.lambda * e.trace())
}

/// Isotropic elasticity tensor `lambda d_iJ d_kL + mu (d_ik d_JL + d_iL d_Jk)`.
pub fn linear_elastic_tangent<const D: usize>(p: &MaterialParams) -> Tangent<D> {
    let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    let mut t = Tangent::<D>::zeros();
    for i in 0..D {
        for jj in 0..D {
            for k in 0..D {
                for l in 0..D {
                    t.0[i][jj][k][l] =
                        p.lambda * d(i, jj) * d(k, l) + p.mu * (d(i, k) * d(jj, l) + d(i, l) * d(jj, k));
                }
            }
        }
    }
    t
}

/// Newton's method on the scalar barrier `Psi(J) = -c ln J`. The Newton
/// quotient `Psi'(J) / Psi''(J) = (-c/J) / (c/J^2)` simplifies to `-J` for
/// every `c > 0`, so the update is `J -> 2J`. The quotient is evaluated in
/// that simplified form; dividing the two rounded derivatives would be off
/// by an ulp. Returns `steps + 1` iterates.
pub fn scalar_newton_doubling(j0: f64, steps: usize) -> Vec<f64> {
    let newton_quotient = |j: f64| -j;
    let mut out = Vec::with_capacity(steps + 1);
    let mut j = j0;
    out.push(j);
    for _ in 0..steps {
        j -= newton_quotient(j);
        out.push(j);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix2, Matrix3, Rotation3, Vector3};
    use proptest::prelude::*;

    fn params() -> MaterialParams {
        lame_from_young_poisson(1.0, 0.3).unwrap()
    }

    #[test]
    fn lame_values() {
        let p = params();
        assert!((p.lambda - 0.3 / 0.52).abs() < 1e-15);
        assert!((p.mu - 1.0 / 2.6).abs() < 1e-15);
        assert!((p.lambda - 0.576923076923077).abs() < 1e-12);
        assert!((p.mu - 0.384615384615385).abs() < 1e-12);

        let q = lame_from_young_poisson(2.0, 0.3).unwrap();
        assert!((q.lambda - 2.0 * p.lambda).abs() < 1e-15);
        assert!((q.mu - 2.0 * p.mu).abs() < 1e-15);

        let near = lame_from_young_poisson(1.0, 0.499).unwrap();
        assert!((near.lambda / near.mu - 499.0).abs() < 1e-9);

        assert!(lame_from_young_poisson(1.0, 0.5).is_err());
        assert!(lame_from_young_poisson(-1.0, 0.3).is_err());
    }

    #[test]
    fn reference_state_is_stress_free() {
        let p = params();
        assert_eq!(mr_energy(&Matrix2::identity(), &p).unwrap(), 0.0);
        assert_eq!(mr_energy(&Matrix3::identity(), &p).unwrap(), 0.0);
        assert!(mr_stress(&Matrix3::identity(), &p).unwrap().amax() < 1e-15);
        assert!(mr_stress(&Matrix2::identity(), &p).unwrap().amax() < 1e-15);
    }

    #[test]
    fn plane_strain_uniaxial_stretch() {
        let p = params();
        let f = Matrix2::new(2.0, 0.0, 0.0, 1.0);
        // J = 2, I1 = 4 + 1 + 1.
        let want = p.lambda * 0.75 - (0.5 * p.lambda + p.mu) * 2f64.ln() + 1.5 * p.mu;
        assert!((mr_energy(&f, &p).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn stress_grows_linearly_in_large_stretch() {
        let p = params();
        for t in [1e2, 1e3, 1e4] {
            let f = Matrix2::new(t, 0.0, 0.0, 1.0 / t);
            let s = mr_stress(&f, &p).unwrap();
            // J = 1: P11 = -mu / t + mu t.
            assert!((s[(0, 0)] - p.mu * (t - 1.0 / t)).abs() < 1e-12 * t);
        }
    }

    #[test]
    fn energy_rejects_inverted_and_stress_extends() {
        let p = params();
        let f = Matrix2::new(-1.0, 0.0, 0.0, 1.0);
        assert!(matches!(mr_energy(&f, &p), Err(Error::Domain { .. })));
        assert!(mr_stress(&f, &p).is_ok());
        let z = Matrix2::new(1.0, 0.0, 0.0, 0.0);
        assert!(matches!(mr_stress(&z, &p), Err(Error::Singular { .. })));
        assert!(matches!(mr_tangent(&z, &p), Err(Error::Singular { .. })));
    }

    #[test]
    fn tangent_at_identity_is_isotropic_elasticity() {
        let p = params();
        let a = mr_tangent(&Matrix3::identity(), &p).unwrap();
        let c = linear_elastic_tangent::<3>(&p);
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    for l in 0..3 {
                        assert!((a.get(i, j, k, l) - c.get(i, j, k, l)).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn linear_energy_cases() {
        let p = params();
        assert_eq!(linear_elastic_energy(&Matrix2::identity(), &p), 0.0);
        let w = Matrix3::new(1.0, 0.3, -0.2, -0.3, 1.0, 0.5, 0.2, -0.5, 1.0);
        assert!(linear_elastic_energy(&w, &p).abs() < 1e-15);
        let e = 0.1;
        let f = Matrix2::new(1.0 + e, 0.0, 0.0, 1.0);
        let want = p.mu * e * e + 0.5 * p.lambda * e * e;
        assert!((linear_elastic_energy(&f, &p) - want).abs() < 1e-15);
    }

    #[test]
    fn doubling_sequences() {
        assert_eq!(scalar_newton_doubling(0.5, 2), vec![0.5, 1.0, 2.0]);
        assert_eq!(scalar_newton_doubling(-0.25, 2), vec![-0.25, -0.5, -1.0]);
        assert_eq!(scalar_newton_doubling(1.0, 1), vec![1.0, 2.0]);
    }

    #[test]
    fn kinematics_invariants() {
        let f = Matrix2::new(1.2, 0.3, -0.1, 0.9);
        let k = ElementKinematics::new(f);
        assert!((k.j - (1.2 * 0.9 + 0.03)).abs() < 1e-15);
        assert!((k.i1 - (1.44 + 0.09 + 0.01 + 0.81 + 1.0)).abs() < 1e-14);
        let c = f.transpose() * f;
        assert!(((k.green_strain * 2.0 + Matrix2::identity()) - c).amax() < 1e-15);
    }

    fn rand_f3() -> impl Strategy<Value = Matrix3<f64>> {
        proptest::array::uniform9(-0.6f64..0.6).prop_map(|a| Matrix3::identity() + Matrix3::from_row_slice(&a))
    }

    proptest! {
        #[test]
        fn objectivity(f in rand_f3(), axis in proptest::array::uniform3(-1.0f64..1.0), angle in -3.0f64..3.0) {
            prop_assume!(det(&f) > 0.1);
            let ax = Vector3::from(axis);
            prop_assume!(ax.norm() > 1e-3);
            let r = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(ax), angle);
            let p = params();
            let a = mr_energy(&f, &p).unwrap();
            let b = mr_energy(&(r.matrix() * f), &p).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }

        #[test]
        fn plane_strain_embedding(a in proptest::array::uniform4(-0.5f64..0.5)) {
            let f2 = Matrix2::identity() + Matrix2::from_row_slice(&a);
            prop_assume!(det(&f2) > 0.05);
            let mut f3 = Matrix3::identity();
            f3.fixed_view_mut::<2, 2>(0, 0).copy_from(&f2);
            let p = params();
            let e2 = mr_energy(&f2, &p).unwrap();
            let e3 = mr_energy(&f3, &p).unwrap();
            prop_assert!((e2 - e3).abs() <= 1e-14 * (1.0 + e2.abs()));
            let s2 = mr_stress(&f2, &p).unwrap();
            let s3 = mr_stress(&f3, &p).unwrap();
            prop_assert!((s2 - s3.fixed_view::<2, 2>(0, 0)).amax() <= 1e-14 * (1.0 + s2.amax()));
        }

        #[test]
        fn tangent_major_symmetry(f in rand_f3()) {
            prop_assume!(det(&f).abs() > 0.1);
            let a = mr_tangent(&f, &params()).unwrap();
            prop_assert!(a.major_asymmetry() <= 1e-12 * (1.0 + a.max_abs()));
        }
    }
}
