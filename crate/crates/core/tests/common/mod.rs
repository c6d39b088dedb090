#![allow(dead_code)]

use nalgebra::{Rotation2, Rotation3};
use proptest::prelude::*;
use ubn_core::material::{mr_energy, mr_stress, Mat, MaterialParams, Tangent};

pub fn params() -> MaterialParams {
    ubn_core::material::lame_from_young_poisson(1.0, 0.3).unwrap()
}

/// `R (I + s M)` with a random rotation, `M` entries in `[-1, 1]`, and
/// `det` restricted to `[0.2, 5]`.
pub fn gradient3() -> impl Strategy<Value = Mat<3>> {
    (
        prop::array::uniform3(-3.2f64..3.2),
        prop::array::uniform9(-1.0f64..1.0),
        0.0f64..0.9,
    )
        .prop_map(|(ang, m, s)| {
            let r = Rotation3::from_euler_angles(ang[0], ang[1], ang[2]).into_inner();
            let m = Mat::<3>::from_row_slice(&m);
            r * (Mat::<3>::identity() + m * s)
        })
        .prop_filter("det in [0.2, 5]", |f| (0.2..=5.0).contains(&f.determinant()))
}

pub fn gradient2() -> impl Strategy<Value = Mat<2>> {
    (
        -3.2f64..3.2,
        prop::array::uniform4(-1.0f64..1.0),
        0.0f64..0.9,
    )
        .prop_map(|(ang, m, s)| {
            let r = Rotation2::new(ang).into_inner();
            let m = Mat::<2>::from_row_slice(&m);
            r * (Mat::<2>::identity() + m * s)
        })
        .prop_filter("det in [0.2, 5]", |f| (0.2..=5.0).contains(&f.determinant()))
}

/// Central differences of the energy, one entry of `F` at a time.
pub fn fd_stress<const D: usize>(f: &Mat<D>, p: &MaterialParams, h: f64) -> Mat<D> {
    let mut out = Mat::<D>::zeros();
    for i in 0..D {
        for j in 0..D {
            let mut fp = *f;
            let mut fm = *f;
            fp[(i, j)] += h;
            fm[(i, j)] -= h;
            out[(i, j)] = (mr_energy(&fp, p).unwrap() - mr_energy(&fm, p).unwrap()) / (2.0 * h);
        }
    }
    out
}

/// Central differences of the stress: entry `[i][J][k][L]` is
/// `dP_iJ / dF_kL`.
pub fn fd_tangent<const D: usize>(f: &Mat<D>, p: &MaterialParams, h: f64) -> Tangent<D> {
    let mut t = Tangent::<D>::zeros();
    for k in 0..D {
        for l in 0..D {
            let mut fp = *f;
            let mut fm = *f;
            fp[(k, l)] += h;
            fm[(k, l)] -= h;
            let d = (mr_stress(&fp, p).unwrap() - mr_stress(&fm, p).unwrap()) / (2.0 * h);
            for i in 0..D {
                for j in 0..D {
                    t.0[i][j][k][l] = d[(i, j)];
                }
            }
        }
    }
    t
}

pub fn tangent_diff<const D: usize>(a: &Tangent<D>, b: &Tangent<D>) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..D {
        for j in 0..D {
            for k in 0..D {
                for l in 0..D {
                    m = m.max((a.0[i][j][k][l] - b.0[i][j][k][l]).abs());
                }
            }
        }
    }
    m
}

pub fn max_abs<const D: usize>(m: &Mat<D>) -> f64 {
    m.iter().fold(0.0, |a, x| a.max(x.abs()))
}
