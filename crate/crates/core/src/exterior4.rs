//! Exact exterior algebra at a point of oriented 4-space.
//!
//! Forms are stored by coefficients in lexicographic coordinate bases:
//! 2-forms on `{dx0^dx1, dx0^dx2, dx0^dx3, dx1^dx2, dx1^dx3, dx2^dx3}`,
//! 3-forms on `{dx012, dx013, dx023, dx123}`.
//!
//! Norm convention: the basis `{dx^i ^ dx^j}` is declared orthonormal for
//! the Euclidean metric. The standard self-dual frame
//! `w1 = dx01 + dx23, w2 = dx02 - dx13, w3 = dx03 + dx12` then has
//! `|w|^2 = 2` and `w ^ w = 2 dvol`. A frame element with `t ^ t = 2 dvol`
//! is called *wedge-unit*; all "unit self-dual form" preconditions in this
//! crate mean wedge-unit. Metric reconstruction scales the metric so that
//! its Riemannian volume form is half the supplied wedge-square volume,
//! which keeps the reconstructed frame wedge-unit (see [`reconstruct_metric`]).

use nalgebra::{Matrix3, Matrix4, Matrix6};
use thiserror::Error;

/// Index pairs of the 2-form basis, lexicographic.
pub const BASIS2: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
/// Index triples of the 3-form basis, lexicographic.
pub const BASIS3: [(usize, usize, usize); 4] = [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)];

/// Sign of `e_I ^ e_{I^c}` against `dx0123`, indexed like [`BASIS2`].
const WEDGE22_SIGN: [f64; 6] = [1.0, -1.0, 1.0, 1.0, -1.0, 1.0];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExteriorError {
    #[error("frame is not wedge-definite")]
    NotDefinite,
    #[error("volume form is degenerate or wrongly oriented")]
    DegenerateVolume,
    #[error("form is not self-dual (or not wedge-unit) for the given metric")]
    NotSelfDual,
    #[error("covector must be nonzero")]
    ZeroCovector,
}

macro_rules! form_type {
    ($name:ident, $n:expr) => {
        #[derive(Clone, Copy, Debug, PartialEq, Default)]
        pub struct $name(pub [f64; $n]);

        impl $name {
            pub fn zero() -> Self {
                Self([0.0; $n])
            }

            pub fn norm_sq(&self) -> f64 {
                self.0.iter().map(|c| c * c).sum()
            }

            pub fn norm(&self) -> f64 {
                self.norm_sq().sqrt()
            }

            pub fn scale(&self, s: f64) -> Self {
                let mut out = self.0;
                for c in &mut out {
                    *c *= s;
                }
                Self(out)
            }

            pub fn add(&self, other: &Self) -> Self {
                let mut out = self.0;
                for (c, o) in out.iter_mut().zip(other.0.iter()) {
                    *c += o;
                }
                Self(out)
            }

            pub fn sub(&self, other: &Self) -> Self {
                let mut out = self.0;
                for (c, o) in out.iter_mut().zip(other.0.iter()) {
                    *c -= o;
                }
                Self(out)
            }
        }

        impl std::ops::Add for $name {
            type Output = $name;
            fn add(self, rhs: $name) -> $name {
                $name::add(&self, &rhs)
            }
        }

        impl std::ops::Sub for $name {
            type Output = $name;
            fn sub(self, rhs: $name) -> $name {
                $name::sub(&self, &rhs)
            }
        }

        impl std::ops::Mul<f64> for $name {
            type Output = $name;
            fn mul(self, rhs: f64) -> $name {
                self.scale(rhs)
            }
        }

        impl std::ops::Neg for $name {
            type Output = $name;
            fn neg(self) -> $name {
                self.scale(-1.0)
            }
        }
    };
}

form_type!(Form1, 4);
form_type!(Form2, 6);
form_type!(Form3, 4);
form_type!(Vec4, 4);

/// 4-form, stored as its coefficient against `dx0 ^ dx1 ^ dx2 ^ dx3`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Form4(pub f64);

/// Orientation of the coordinate 4-space: sign of `dx0123` as a volume class.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Orientation {
    Positive,
    Negative,
}

impl Orientation {
    pub fn sign(self) -> f64 {
        match self {
            Orientation::Positive => 1.0,
            Orientation::Negative => -1.0,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Orientation::Positive => Orientation::Negative,
            Orientation::Negative => Orientation::Positive,
        }
    }
}

/// A triple of 2-forms: triples of symplectic forms, curvature frames.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Frame3 {
    pub w: [Form2; 3],
}

impl Frame3 {
    pub fn new(w1: Form2, w2: Form2, w3: Form2) -> Self {
        Frame3 { w: [w1, w2, w3] }
    }

    /// The standard self-dual frame of Euclidean 4-space.
    pub fn standard() -> Self {
        Frame3::new(
            Form2([1.0, 0.0, 0.0, 0.0, 0.0, 1.0]),
            Form2([0.0, 1.0, 0.0, 0.0, -1.0, 0.0]),
            Form2([0.0, 0.0, 1.0, 1.0, 0.0, 0.0]),
        )
    }

    /// The standard anti-self-dual frame (second summands flipped).
    pub fn standard_asd() -> Self {
        Frame3::new(
            Form2([1.0, 0.0, 0.0, 0.0, 0.0, -1.0]),
            Form2([0.0, 1.0, 0.0, 0.0, 1.0, 0.0]),
            Form2([0.0, 0.0, 1.0, -1.0, 0.0, 0.0]),
        )
    }
}

/// Riemannian metric with an orientation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metric4 {
    pub g: Matrix4<f64>,
    pub orientation: Orientation,
}

impl Metric4 {
    pub fn euclidean() -> Self {
        Metric4 {
            g: Matrix4::identity(),
            orientation: Orientation::Positive,
        }
    }

    pub fn sqrt_det(&self) -> f64 {
        self.g.determinant().max(0.0).sqrt()
    }

    pub fn inverse(&self) -> Matrix4<f64> {
        self.g.try_inverse().expect("metric must be invertible")
    }

    /// Riemannian volume form (carries the orientation sign in the
    /// `dx0123` coefficient).
    pub fn volume_form(&self) -> Form4 {
        Form4(self.orientation.sign() * self.sqrt_det())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Definiteness {
    PositiveDefinite,
    NegativeDefinite,
    NotDefinite,
}

/// Slot and sign of `dx^i ^ dx^j` in the 2-form basis, for any `i != j`.
pub fn pair_slot(i: usize, j: usize) -> (usize, f64) {
    debug_assert!(i != j);
    let (a, b, s) = if i < j { (i, j, 1.0) } else { (j, i, -1.0) };
    let slot = match (a, b) {
        (0, 1) => 0,
        (0, 2) => 1,
        (0, 3) => 2,
        (1, 2) => 3,
        (1, 3) => 4,
        (2, 3) => 5,
        _ => unreachable!(),
    };
    (slot, s)
}

/// Slot and sign of `dx^i ^ dx^j ^ dx^k` in the 3-form basis, distinct indices.
pub fn triple_slot(i: usize, j: usize, k: usize) -> (usize, f64) {
    let mut idx = [i, j, k];
    let mut sign = 1.0;
    // sort three elements, tracking parity
    for a in 0..2 {
        for b in 0..2 - a {
            if idx[b] > idx[b + 1] {
                idx.swap(b, b + 1);
                sign = -sign;
            }
        }
    }
    let slot = match (idx[0], idx[1], idx[2]) {
        (0, 1, 2) => 0,
        (0, 1, 3) => 1,
        (0, 2, 3) => 2,
        (1, 2, 3) => 3,
        _ => unreachable!("indices must be distinct"),
    };
    (slot, sign)
}

/// Coefficient of `a ^ b` against `dx0123`. Symmetric in its arguments.
pub fn wedge_pair(a: &Form2, b: &Form2) -> f64 {
    (0..6).map(|k| WEDGE22_SIGN[k] * a.0[k] * b.0[5 - k]).sum()
}

pub fn wedge11(a: &Form1, b: &Form1) -> Form2 {
    let mut out = [0.0; 6];
    for (slot, (i, j)) in BASIS2.iter().enumerate() {
        out[slot] = a.0[*i] * b.0[*j] - a.0[*j] * b.0[*i];
    }
    Form2(out)
}

pub fn wedge12(a: &Form1, w: &Form2) -> Form3 {
    let mut out = [0.0; 4];
    for (slot, (i, j, k)) in BASIS3.iter().enumerate() {
        let (jk, s_jk) = pair_slot(*j, *k);
        let (ik, s_ik) = pair_slot(*i, *k);
        let (ij, s_ij) = pair_slot(*i, *j);
        out[slot] = a.0[*i] * s_jk * w.0[jk] - a.0[*j] * s_ik * w.0[ik] + a.0[*k] * s_ij * w.0[ij];
    }
    Form3(out)
}

pub fn wedge13(a: &Form1, t: &Form3) -> Form4 {
    // basis3 = [012, 013, 023, 123]
    Form4(a.0[0] * t.0[3] - a.0[1] * t.0[2] + a.0[2] * t.0[1] - a.0[3] * t.0[0])
}

/// Interior product of a vector with a 1-form: plain pairing.
pub fn interior1(u: &Vec4, a: &Form1) -> f64 {
    (0..4).map(|i| u.0[i] * a.0[i]).sum()
}

pub fn interior2(u: &Vec4, w: &Form2) -> Form1 {
    let mut out = [0.0; 4];
    for (slot, (i, j)) in BASIS2.iter().enumerate() {
        out[*j] += u.0[*i] * w.0[slot];
        out[*i] -= u.0[*j] * w.0[slot];
    }
    Form1(out)
}

pub fn interior3(u: &Vec4, t: &Form3) -> Form2 {
    let mut out = [0.0; 6];
    for (slot, (i, j, k)) in BASIS3.iter().enumerate() {
        let (jk, s_jk) = pair_slot(*j, *k);
        let (ik, s_ik) = pair_slot(*i, *k);
        let (ij, s_ij) = pair_slot(*i, *j);
        out[jk] += u.0[*i] * t.0[slot] * s_jk;
        out[ik] -= u.0[*j] * t.0[slot] * s_ik;
        out[ij] += u.0[*k] * t.0[slot] * s_ij;
    }
    Form2(out)
}

pub fn interior4(u: &Vec4, f: &Form4) -> Form3 {
    // iota_u (dx0123) = u0 dx123 - u1 dx023 + u2 dx013 - u3 dx012
    Form3([-f.0 * u.0[3], f.0 * u.0[2], -f.0 * u.0[1], f.0 * u.0[0]])
}

/// Wedge Gram matrix `G_ij = wedge_pair(w_i, w_j)` of a frame.
pub fn gram_matrix(f: &Frame3) -> Matrix3<f64> {
    let mut g = Matrix3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            g[(i, j)] = wedge_pair(&f.w[i], &f.w[j]);
        }
    }
    g
}

/// Strict positive-definiteness of a symmetric 3x3 matrix (Sylvester).
pub fn is_positive_definite3(m: &Matrix3<f64>) -> bool {
    let d1 = m[(0, 0)];
    let d2 = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let d3 = m.determinant();
    d1 > 0.0 && d2 > 0.0 && d3 > 0.0
}

/// Eigenvalues of a symmetric 3x3 matrix, ascending (closed form).
pub fn sym3_eigenvalues(m: &Matrix3<f64>) -> [f64; 3] {
    let p1 = m[(0, 1)] * m[(0, 1)] + m[(0, 2)] * m[(0, 2)] + m[(1, 2)] * m[(1, 2)];
    let q = m.trace() / 3.0;
    if p1 <= 1e-300 {
        let mut d = [m[(0, 0)], m[(1, 1)], m[(2, 2)]];
        d.sort_by(|a, b| a.partial_cmp(b).unwrap());
        return d;
    }
    let p2 = (m[(0, 0)] - q).powi(2) + (m[(1, 1)] - q).powi(2) + (m[(2, 2)] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let b = (m - Matrix3::identity() * q) / p;
    let r = (b.determinant() / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let e1 = q + 2.0 * p * phi.cos();
    let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    let e2 = 3.0 * q - e1 - e3;
    let mut d = [e1, e2, e3];
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    d
}

/// Symmetric inverse square root of a positive-definite 3x3 matrix.
pub fn sym3_inv_sqrt(m: &Matrix3<f64>) -> Option<Matrix3<f64>> {
    let eig = nalgebra::SymmetricEigen::new(*m);
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return None;
    }
    let d = Matrix3::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    Some(eig.eigenvectors * d * eig.eigenvectors.transpose())
}

/// Unnormalized Urbantke contraction: for a wedge-definite frame this is
/// (up to a global sign) a positive multiple of the metric making the
/// frame self-dual. `W_ab = (1/6) eps_ijk <iota_a w_i ^ iota_b w_j ^ w_k>`.
pub fn urbantke(f: &Frame3) -> Matrix4<f64> {
    const EPS: [(usize, usize, usize, f64); 6] = [
        (0, 1, 2, 1.0),
        (1, 2, 0, 1.0),
        (2, 0, 1, 1.0),
        (1, 0, 2, -1.0),
        (0, 2, 1, -1.0),
        (2, 1, 0, -1.0),
    ];
    let mut w = Matrix4::zeros();
    let mut basis = [Vec4::zero(); 4];
    for (a, e) in basis.iter_mut().enumerate() {
        e.0[a] = 1.0;
    }
    let contr: Vec<[Form1; 4]> = f
        .w
        .iter()
        .map(|wi| {
            [
                interior2(&basis[0], wi),
                interior2(&basis[1], wi),
                interior2(&basis[2], wi),
                interior2(&basis[3], wi),
            ]
        })
        .collect();
    for a in 0..4 {
        for b in a..4 {
            let mut acc = 0.0;
            for &(i, j, k, s) in &EPS {
                acc += s * wedge_pair(&wedge11(&contr[i][a], &contr[j][b]), &f.w[k]);
            }
            let val = acc / 6.0;
            w[(a, b)] = val;
            w[(b, a)] = val;
        }
    }
    w
}

/// Induced orientation of a wedge-definite frame: the orientation of 4-space
/// for which the frame spans the self-dual forms. `None` if not definite.
pub fn induced_orientation(f: &Frame3) -> Option<Orientation> {
    let g = gram_matrix(f);
    if is_positive_definite3(&g) {
        Some(Orientation::Positive)
    } else if is_positive_definite3(&(-g)) {
        Some(Orientation::Negative)
    } else {
        None
    }
}

/// Recover the metric making a wedge-definite frame self-dual, scaled so the
/// supplied volume form equals the frame's wedge-square scale: the returned
/// metric has Riemannian volume `vol/2` in the crate convention (so a
/// hyperkaehler frame with its own `mu = (1/3) sum w^2` reconstructs to a
/// metric in which the frame is wedge-unit).
pub fn reconstruct_metric(f: &Frame3, vol: Form4) -> Result<Metric4, ExteriorError> {
    let orientation = induced_orientation(f).ok_or(ExteriorError::NotDefinite)?;
    if vol.0 * orientation.sign() <= 0.0 {
        return Err(ExteriorError::DegenerateVolume);
    }
    let mut w = urbantke(f);
    if w[(0, 0)] < 0.0 {
        w = -w;
    }
    let scale = w.amax();
    let det = w.determinant();
    if !(det > 1e-14 * scale.powi(4)) {
        return Err(ExteriorError::NotDefinite);
    }
    // leading minors, to reject indefinite W that slipped past the sign flip
    let m2 = w.fixed_view::<2, 2>(0, 0).determinant();
    let m3 = w.fixed_view::<3, 3>(0, 0).determinant();
    if !(w[(0, 0)] > 0.0 && m2 > 0.0 && m3 > 0.0) {
        return Err(ExteriorError::NotDefinite);
    }
    let c = (vol.0.abs() / (2.0 * det.sqrt())).sqrt();
    Ok(Metric4 {
        g: w * c,
        orientation,
    })
}

/// Upper-triangular factor `T` with `g = T^t T` and `det T > 0`; the rows of
/// `T` are then a positively oriented g-orthonormal coframe.
fn coframe_factor(g: &Matrix4<f64>) -> Matrix4<f64> {
    let chol = nalgebra::Cholesky::new(*g).expect("metric must be positive definite");
    chol.l().transpose()
}

/// Rows of the returned matrix are a g-orthonormal coframe oriented
/// compatibly with the metric's orientation.
pub fn oriented_coframe(m: &Metric4) -> Matrix4<f64> {
    let mut t = coframe_factor(&m.g);
    if m.orientation == Orientation::Negative {
        for c in 0..4 {
            t[(3, c)] = -t[(3, c)];
        }
    }
    t
}

/// Pull a 2-form back through the linear map with matrix `a`:
/// `(phi^* w)(u, v) = w(a u, a v)` on coefficient vectors.
pub fn pullback_form2(a: &Matrix4<f64>, w: &Form2) -> Form2 {
    let mut out = [0.0; 6];
    for (slot, (p, q)) in BASIS2.iter().enumerate() {
        let mut acc = 0.0;
        for (k, (i, j)) in BASIS2.iter().enumerate() {
            acc += w.0[k] * (a[(*i, *p)] * a[(*j, *q)] - a[(*i, *q)] * a[(*j, *p)]);
        }
        out[slot] = acc;
    }
    Form2(out)
}

/// Standard self-dual combinations of an orthonormal coframe given as the
/// rows of `t`.
fn sd_frame_from_coframe(t: &Matrix4<f64>) -> [Form2; 3] {
    let row = |i: usize| Form1([t[(i, 0)], t[(i, 1)], t[(i, 2)], t[(i, 3)]]);
    let (f0, f1, f2, f3) = (row(0), row(1), row(2), row(3));
    [
        wedge11(&f0, &f1).add(&wedge11(&f2, &f3)),
        wedge11(&f0, &f2).sub(&wedge11(&f1, &f3)),
        wedge11(&f0, &f3).add(&wedge11(&f1, &f2)),
    ]
}

/// Classify a frame as positively/negatively definite with respect to the
/// given ambient orientation. A frame is definite when its wedge Gram matrix
/// is definite; the sign records whether the frame is an oriented basis of
/// the self-dual bundle it induces (the standard frame is the oriented
/// reference).
pub fn classify(f: &Frame3, orientation: Orientation) -> Definiteness {
    let induced = match induced_orientation(f) {
        Some(o) => o,
        None => return Definiteness::NotDefinite,
    };
    // the ambient orientation flips the wedge sign but not definiteness
    let _ = orientation;
    let g = gram_matrix(f);
    let mu = Form4(g.trace() / 3.0);
    let metric = match reconstruct_metric(f, mu) {
        Ok(m) => m,
        Err(_) => return Definiteness::NotDefinite,
    };
    let t = oriented_coframe(&metric);
    let theta = sd_frame_from_coframe(&t);
    let mut m = Matrix3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            m[(i, j)] = induced.sign() * wedge_pair(&f.w[i], &theta[j]);
        }
    }
    if m.determinant() > 0.0 {
        Definiteness::PositiveDefinite
    } else {
        Definiteness::NegativeDefinite
    }
}

fn lambda2_entry(m: &Matrix4<f64>, a: (usize, usize), b: (usize, usize)) -> f64 {
    m[(a.0, b.0)] * m[(a.1, b.1)] - m[(a.0, b.1)] * m[(a.1, b.0)]
}

/// Second exterior power of a 4x4 matrix, on the lexicographic 2-form basis.
pub fn lambda2(m: &Matrix4<f64>) -> Matrix6<f64> {
    let mut out = Matrix6::zeros();
    for (r, &a) in BASIS2.iter().enumerate() {
        for (c, &b) in BASIS2.iter().enumerate() {
            out[(r, c)] = lambda2_entry(m, a, b);
        }
    }
    out
}

/// Third exterior power of a 4x4 matrix, on the lexicographic 3-form basis.
pub fn lambda3(m: &Matrix4<f64>) -> Matrix4<f64> {
    let mut out = Matrix4::zeros();
    for (r, &(i, j, k)) in BASIS3.iter().enumerate() {
        for (c, &(p, q, s)) in BASIS3.iter().enumerate() {
            out[(r, c)] = m[(i, p)] * (m[(j, q)] * m[(k, s)] - m[(j, s)] * m[(k, q)])
                - m[(i, q)] * (m[(j, p)] * m[(k, s)] - m[(j, s)] * m[(k, p)])
                + m[(i, s)] * (m[(j, p)] * m[(k, q)] - m[(j, q)] * m[(k, p)]);
        }
    }
    out
}

pub fn hodge_star0(m: &Metric4, c: f64) -> Form4 {
    Form4(m.orientation.sign() * m.sqrt_det() * c)
}

pub fn hodge_star1(m: &Metric4, a: &Form1) -> Form3 {
    let ginv = m.inverse();
    let mut r = [0.0; 4];
    for i in 0..4 {
        r[i] = (0..4).map(|j| ginv[(i, j)] * a.0[j]).sum();
    }
    let s = m.orientation.sign() * m.sqrt_det();
    // slots [012, 013, 023, 123]: eps(i, complement)
    Form3([-s * r[3], s * r[2], -s * r[1], s * r[0]])
}

pub fn hodge_star2(m: &Metric4, w: &Form2) -> Form2 {
    let g2 = lambda2(&m.inverse());
    let mut r = [0.0; 6];
    for i in 0..6 {
        r[i] = (0..6).map(|j| g2[(i, j)] * w.0[j]).sum();
    }
    let s = m.orientation.sign() * m.sqrt_det();
    let mut out = [0.0; 6];
    for k in 0..6 {
        out[5 - k] = s * WEDGE22_SIGN[k] * r[k];
    }
    Form2(out)
}

pub fn hodge_star3(m: &Metric4, t: &Form3) -> Form1 {
    let g3 = lambda3(&m.inverse());
    let mut r = [0.0; 4];
    for i in 0..4 {
        r[i] = (0..4).map(|j| g3[(i, j)] * t.0[j]).sum();
    }
    let s = m.orientation.sign() * m.sqrt_det();
    // slots [012, 013, 023, 123] dualize to [dx3, -dx2, dx1, -dx0]
    Form1([-s * r[3], s * r[2], -s * r[1], s * r[0]])
}

pub fn hodge_star4(m: &Metric4, f: &Form4) -> f64 {
    m.orientation.sign() * f.0 / m.sqrt_det()
}

/// Split a 2-form into its self-dual and anti-self-dual parts.
pub fn sd_split(m: &Metric4, w: &Form2) -> (Form2, Form2) {
    let star = hodge_star2(m, w);
    (
        w.add(&star).scale(0.5),
        w.sub(&star).scale(0.5),
    )
}

pub fn sd_project(m: &Metric4, w: &Form2) -> Form2 {
    sd_split(m, w).0
}

/// Checks that `theta` is self-dual and wedge-unit (`theta^theta = 2 dvol`).
fn check_wedge_unit_sd(m: &Metric4, theta: &Form2) -> Result<(), ExteriorError> {
    let (sd, asd) = sd_split(m, theta);
    if asd.norm() > 1e-9 * sd.norm().max(1e-300) {
        return Err(ExteriorError::NotSelfDual);
    }
    let two_vol = 2.0 * m.orientation.sign() * m.sqrt_det();
    if (wedge_pair(theta, theta) / two_vol - 1.0).abs() > 1e-9 {
        return Err(ExteriorError::NotSelfDual);
    }
    Ok(())
}

/// Almost-complex structure of a wedge-unit self-dual form:
/// `J(alpha) = *(alpha ^ theta)`. Satisfies `J^2 = -Id` and is a
/// g-isometry of 1-forms.
pub fn j_map(m: &Metric4, theta: &Form2, alpha: &Form1) -> Result<Form1, ExteriorError> {
    check_wedge_unit_sd(m, theta)?;
    Ok(hodge_star3(m, &wedge12(alpha, theta)))
}

fn j_apply(m: &Metric4, theta: &Form2, alpha: &Form1) -> Form1 {
    hodge_star3(m, &wedge12(alpha, theta))
}

/// Connection 1-forms of the unique torsion-free metric connection on the
/// self-dual bundle, expressed in a wedge-unit oriented frame `theta` with
/// exterior derivatives `dtheta`. The covariant derivative acts on the frame
/// as `D theta_1 = a3 (x) theta_2 - a2 (x) theta_3` and cyclic.
pub fn connection_from_frame(
    m: &Metric4,
    theta: &[Form2; 3],
    dtheta: &[Form3; 3],
) -> [Form1; 3] {
    let k: Vec<Form1> = dtheta.iter().map(|dt| hodge_star3(m, dt)).collect();
    let j = |i: usize, a: &Form1| j_apply(m, &theta[i], a);
    let alpha = |i: usize, jn: usize, kn: usize| {
        j(jn, &k[kn])
            .sub(&j(kn, &k[jn]))
            .sub(&k[i])
            .scale(0.5)
    };
    [alpha(0, 1, 2), alpha(1, 2, 0), alpha(2, 0, 1)]
}
