//! Pointwise linear analysis at a definite frame: linearisations of the
//! normalized wedge Gram matrix, the principal symbols of the flow and of
//! the gauge-fixed operator, the short exact sequence behind ellipticity,
//! and the negativity estimates behind parabolicity.
//!
//! All maps are assembled as dense matrices in coordinates that are
//! orthonormal for the reconstructed metric, so metric adjoints are plain
//! transposes. Spaces and dimensions:
//! `Lambda^1 (x) E = 12`, `TX (+) E = 7`, `S^2_0 E = 5` (inside `S^2 E = 6`),
//! `Lambda^2 (x) E = 18`.

use crate::exterior4::{
    self, gram_matrix, interior2, lambda2, oriented_coframe, reconstruct_metric, wedge11,
    wedge_pair, ExteriorError, Form1, Form2, Form4, Frame3, Metric4, Vec4, BASIS2,
};
use nalgebra::{DMatrix, Matrix3, Matrix4, Matrix6, SMatrix, SVector};
use serde::Serialize;

pub type Mat6x18 = SMatrix<f64, 6, 18>;
pub type Mat18x12 = SMatrix<f64, 18, 12>;
pub type Mat12x4 = SMatrix<f64, 12, 4>;
pub type Mat12x3 = SMatrix<f64, 12, 3>;
pub type Mat12 = SMatrix<f64, 12, 12>;
pub type Mat6 = Matrix6<f64>;
pub type V6 = SVector<f64, 6>;
pub type V12 = SVector<f64, 12>;
pub type V18 = SVector<f64, 18>;

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Pointwise data of a definite frame, expressed in a metric-orthonormal,
/// orientation-compatible coframe. In these coordinates the metric is
/// Euclidean, the frame is wedge-positive with `mu = 2`, and the frame
/// elements satisfy `(F_i, F_j) = 2 Q_ij`.
#[derive(Clone, Debug)]
pub struct SymbolData {
    /// frame in orthonormal coordinates
    pub frame: Frame3,
    pub q: Matrix3<f64>,
    pub tr_q2: f64,
    /// reconstructed metric in the original coordinates
    pub metric: Metric4,
    /// covector coefficient transform into the orthonormal coframe
    to_onb_covector: Matrix4<f64>,
    /// vector coefficient transform into the orthonormal frame
    to_onb_vector: Matrix4<f64>,
    to_onb_form2: Matrix6<f64>,
}

impl SymbolData {
    /// Build symbol data from a frame given in ambient coordinates.
    pub fn from_frame(f: &Frame3) -> Result<Self, ExteriorError> {
        let gram = gram_matrix(f);
        let mu = Form4(gram.trace() / 3.0);
        let metric = reconstruct_metric(f, mu)?;
        let t = oriented_coframe(&metric);
        let to_onb_vector = t;
        let to_onb_covector = t
            .transpose()
            .try_inverse()
            .expect("coframe factor is invertible");
        let to_onb_form2 = lambda2(&to_onb_covector);
        let frame = Frame3::new(
            apply6(&to_onb_form2, &f.w[0]),
            apply6(&to_onb_form2, &f.w[1]),
            apply6(&to_onb_form2, &f.w[2]),
        );
        let mut q = Matrix3::zeros();
        let mu_onb = (0..3).map(|i| wedge_pair(&frame.w[i], &frame.w[i])).sum::<f64>() / 3.0;
        debug_assert!((mu_onb - 2.0).abs() < 1e-8, "mu in ONB coords is 2, got {mu_onb}");
        for i in 0..3 {
            for j in 0..3 {
                q[(i, j)] = wedge_pair(&frame.w[i], &frame.w[j]) / mu_onb;
            }
        }
        Ok(SymbolData {
            frame,
            tr_q2: (q * q).trace(),
            q,
            metric,
            to_onb_covector,
            to_onb_vector,
            to_onb_form2,
        })
    }

    pub fn covector_to_onb(&self, a: &Form1) -> Form1 {
        let mut out = [0.0; 4];
        for i in 0..4 {
            out[i] = (0..4).map(|j| self.to_onb_covector[(i, j)] * a.0[j]).sum();
        }
        Form1(out)
    }

    pub fn vector_to_onb(&self, u: &Vec4) -> Vec4 {
        let mut out = [0.0; 4];
        for i in 0..4 {
            out[i] = (0..4).map(|j| self.to_onb_vector[(i, j)] * u.0[j]).sum();
        }
        Vec4(out)
    }

    pub fn form2_to_onb(&self, w: &Form2) -> Form2 {
        apply6(&self.to_onb_form2, w)
    }
}

fn apply6(m: &Matrix6<f64>, w: &Form2) -> Form2 {
    let mut out = [0.0; 6];
    for i in 0..6 {
        out[i] = (0..6).map(|j| m[(i, j)] * w.0[j]).sum();
    }
    Form2(out)
}

/// Orthonormal coordinates of a symmetric 3x3 matrix under `<M,N> = tr(MN)`:
/// `[m00, m11, m22, sqrt2 m01, sqrt2 m02, sqrt2 m12]`.
pub fn sym3_to_coords(m: &Matrix3<f64>) -> V6 {
    V6::from_column_slice(&[
        m[(0, 0)],
        m[(1, 1)],
        m[(2, 2)],
        SQRT2 * m[(0, 1)],
        SQRT2 * m[(0, 2)],
        SQRT2 * m[(1, 2)],
    ])
}

pub fn coords_to_sym3(v: &V6) -> Matrix3<f64> {
    let s = 1.0 / SQRT2;
    Matrix3::new(
        v[0],
        s * v[3],
        s * v[4],
        s * v[3],
        v[1],
        s * v[5],
        s * v[4],
        s * v[5],
        v[2],
    )
}

fn frame_to_v18(t: &[Form2; 3]) -> V18 {
    let mut out = V18::zeros();
    for i in 0..3 {
        for k in 0..6 {
            out[6 * i + k] = t[i].0[k];
        }
    }
    out
}

fn v18_to_frame(v: &V18) -> [Form2; 3] {
    let mut out = [Form2::zero(); 3];
    for i in 0..3 {
        for k in 0..6 {
            out[i].0[k] = v[6 * i + k];
        }
    }
    out
}

fn form1_triple_to_v12(a: &[Form1; 3]) -> V12 {
    let mut out = V12::zeros();
    for i in 0..3 {
        for m in 0..4 {
            out[4 * i + m] = a[i].0[m];
        }
    }
    out
}

fn v12_to_form1_triple(v: &V12) -> [Form1; 3] {
    let mut out = [Form1::zero(); 3];
    for i in 0..3 {
        for m in 0..4 {
            out[i].0[m] = v[4 * i + m];
        }
    }
    out
}

/// Matrix of `L(T) = (F . T) / mu` from `Lambda^2 (x) E` (18) to `S^2 E` (6),
/// in the S^2 orthonormal coordinates. `L(T)_ij = (T_i^F_j + T_j^F_i)/(2 mu)`.
pub fn build_l(d: &SymbolData) -> Mat6x18 {
    let mu = 2.0;
    let f = &d.frame.w;
    let mut l = Mat6x18::zeros();
    // wedge_pair(e_k, w) picks up WEDGE22_SIGN[k] * w[5-k]
    let wedge_row = |w: &Form2| -> [f64; 6] {
        let mut row = [0.0; 6];
        for (k, r) in row.iter_mut().enumerate() {
            let sign = [1.0, -1.0, 1.0, 1.0, -1.0, 1.0][k];
            *r = sign * w.0[5 - k];
        }
        row
    };
    let rows: Vec<[f64; 6]> = f.iter().map(wedge_row).collect();
    // diagonal entries (i,i): T_i ^ F_i / mu
    for i in 0..3 {
        for k in 0..6 {
            l[(i, 6 * i + k)] += rows[i][k] / mu;
        }
    }
    // off-diagonal (i,j), i<j: sqrt2 * (T_i^F_j + T_j^F_i) / (2 mu)
    let off = [(0usize, 1usize, 3usize), (0, 2, 4), (1, 2, 5)];
    for &(i, j, slot) in &off {
        for k in 0..6 {
            l[(slot, 6 * i + k)] += SQRT2 * rows[j][k] / (2.0 * mu);
            l[(slot, 6 * j + k)] += SQRT2 * rows[i][k] / (2.0 * mu);
        }
    }
    l
}

/// Matrix of `u -> iota_u F` from `TX` (4) to `Lambda^1 (x) E` (12).
pub fn build_s(d: &SymbolData) -> Mat12x4 {
    let mut s = Mat12x4::zeros();
    for nu in 0..4 {
        let mut e = Vec4::zero();
        e.0[nu] = 1.0;
        for i in 0..3 {
            let contr = interior2(&e, &d.frame.w[i]);
            for m in 0..4 {
                s[(4 * i + m, nu)] = contr.0[m];
            }
        }
    }
    s
}

/// Matrix of `x -> alpha (x) x` from `E` (3) to `Lambda^1 (x) E` (12).
pub fn build_w_vertex(alpha: &Form1) -> Mat12x3 {
    let mut w = Mat12x3::zeros();
    for i in 0..3 {
        for m in 0..4 {
            w[(4 * i + m, i)] = alpha.0[m];
        }
    }
    w
}

/// Matrix of `b -> alpha ^ b` from `Lambda^1 (x) E` (12) to `Lambda^2 (x) E` (18).
pub fn build_w_wedge(alpha: &Form1) -> Mat18x12 {
    let mut w = Mat18x12::zeros();
    for mu in 0..4 {
        let mut e = Form1::zero();
        e.0[mu] = 1.0;
        let col = wedge11(alpha, &e);
        for i in 0..3 {
            for k in 0..6 {
                w[(6 * i + k, 4 * i + mu)] = col.0[k];
            }
        }
    }
    w
}

/// Projection onto the orthogonal complement of `Q` in `S^2 E`.
pub fn build_pi(d: &SymbolData) -> Mat6 {
    let q = sym3_to_coords(&d.q);
    Mat6::identity() - q * q.transpose() / d.tr_q2
}

/// `Theta(M) = 8 M + (8/9) tr(Q^2) (tr M) Id`, a positive multiplier.
pub fn build_theta(d: &SymbolData) -> Mat6 {
    let v = V6::from_column_slice(&[1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
    Mat6::identity() * 8.0 + v * v.transpose() * (8.0 / 9.0 * d.tr_q2)
}

/// Symmetric square root of `Theta`.
pub fn build_theta_sqrt(d: &SymbolData) -> Mat6 {
    let vhat = V6::from_column_slice(&[1.0, 1.0, 1.0, 0.0, 0.0, 0.0]) / 3.0_f64.sqrt();
    let on_trace = (8.0 + 8.0 / 3.0 * d.tr_q2).sqrt();
    let off = 8.0_f64.sqrt();
    Mat6::identity() * off + vhat * vhat.transpose() * (on_trace - off)
}

/// `P = Theta^{1/2} Pi L`, the half-density of the flow's principal part.
pub fn build_p(d: &SymbolData) -> Mat6x18 {
    build_theta_sqrt(d) * build_pi(d) * build_l(d)
}

/// Apply `L` to a triple of 2-forms (given in ONB coordinates).
pub fn l_apply(d: &SymbolData, t: &[Form2; 3]) -> Matrix3<f64> {
    coords_to_sym3(&(build_l(d) * frame_to_v18(t)))
}

/// Metric adjoint of `L`; in these coordinates `L*(M) = M(F)/2`.
pub fn l_star_apply(d: &SymbolData, m: &Matrix3<f64>) -> [Form2; 3] {
    v18_to_frame(&(build_l(d).transpose() * sym3_to_coords(m)))
}

/// Linearisation of the normalized wedge Gram matrix in a curvature
/// direction `T`: `2 L(T) - (2/3) tr(L(T)) Q`. Trace-free.
pub fn delta_q(d: &SymbolData, t: &[Form2; 3]) -> Matrix3<f64> {
    let lt = l_apply(d, t);
    lt * 2.0 - d.q * (2.0 / 3.0 * lt.trace())
}

/// Linearised `B` in compact projector form: `Pi Theta Pi (L(T))`.
pub fn delta_b_compact(d: &SymbolData, t: &[Form2; 3]) -> Matrix3<f64> {
    let pi = build_pi(d);
    let th = build_theta(d);
    coords_to_sym3(&(pi * th * pi * (build_l(d) * frame_to_v18(t))))
}

/// Linearised `B` in expanded four-term form, with the scalar trace terms
/// read as multiples of the identity.
pub fn delta_b_expanded(d: &SymbolData, t: &[Form2; 3]) -> Matrix3<f64> {
    let lt = l_apply(d, t);
    let tr_lt = lt.trace();
    let tr_qlt = (d.q * lt).trace();
    lt * 8.0 - d.q * (8.0 / 3.0 * tr_lt) - Matrix3::identity() * (8.0 / 3.0 * tr_qlt)
        + Matrix3::identity() * (8.0 / 9.0 * tr_lt * d.tr_q2)
}

/// Pointwise `Q` of a frame, for finite-difference oracles.
pub fn q_of_frame(f: &Frame3) -> Option<Matrix3<f64>> {
    let g = gram_matrix(f);
    let mu = g.trace() / 3.0;
    if mu.abs() < 1e-300 {
        return None;
    }
    Some(g / mu)
}

/// Pointwise `B = 4Q - (2/3) tr(Q^2) Id` of a frame.
pub fn b_of_frame(f: &Frame3) -> Option<Matrix3<f64>> {
    let q = q_of_frame(f)?;
    Some(q * 4.0 - Matrix3::identity() * (2.0 / 3.0 * (q * q).trace()))
}

/// Symbol of the Gram-matrix linearisation in the direction `alpha`
/// (ambient coordinates), as a 6x12 matrix into S^2 coordinates; its values
/// are trace-free, so the rank is at most 5.
pub fn sigma_alpha(d: &SymbolData, alpha: &Form1) -> Result<SMatrix<f64, 6, 12>, ExteriorError> {
    if alpha.norm() == 0.0 {
        return Err(ExteriorError::ZeroCovector);
    }
    let a = d.covector_to_onb(alpha);
    let lw = build_l(d) * build_w_wedge(&a);
    let qv = sym3_to_coords(&d.q);
    let trace_row = V6::from_column_slice(&[1.0, 1.0, 1.0, 0.0, 0.0, 0.0]).transpose() * lw;
    Ok(lw * 2.0 - qv * trace_row * (2.0 / 3.0))
}

fn rank_of(m: &DMatrix<f64>, tol_rel: f64) -> usize {
    let svd = m.clone().svd(false, false);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    svd.singular_values.iter().filter(|&&s| s > tol_rel * smax).count()
}

/// Orthonormal basis of the null space of `m` (columns), via the symmetric
/// eigendecomposition of `m^t m`.
fn null_space(m: &DMatrix<f64>, rank: usize) -> DMatrix<f64> {
    let n = m.ncols();
    let gram = m.transpose() * m;
    let eig = nalgebra::SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let mut out = DMatrix::zeros(n, n - rank);
    for (col, &idx) in order.iter().take(n - rank).enumerate() {
        for i in 0..n {
            out[(i, col)] = eig.eigenvectors[(i, idx)];
        }
    }
    out
}

/// Orthonormal basis of the column space of `m`, via thin QR.
fn col_space(m: &DMatrix<f64>) -> DMatrix<f64> {
    let qr = m.clone().qr();
    qr.q()
}

#[derive(Clone, Debug, Serialize)]
pub struct ExactSequenceReport {
    pub rank_inject: usize,
    pub rank_symbol: usize,
    /// spectral distance between the projectors onto ker(sigma) and
    /// im(S + w): `sin` of the largest principal angle
    pub subspace_gap: f64,
    pub exact: bool,
}

/// Certify pointwise exactness of
/// `0 -> TX (+) E -> Lambda^1 (x) E -> S^2_0 E -> 0`
/// at the given data and covector: ranks 7 and 5, and the kernel of the
/// symbol equals the image of the injection.
pub fn exact_sequence_check(
    d: &SymbolData,
    alpha: &Form1,
    gap_tol: f64,
) -> Result<ExactSequenceReport, ExteriorError> {
    let sigma = sigma_alpha(d, alpha)?;
    let a = d.covector_to_onb(alpha);
    let s = build_s(d);
    let w = build_w_vertex(&a);
    let mut inject = DMatrix::zeros(12, 7);
    for r in 0..12 {
        for c in 0..4 {
            inject[(r, c)] = s[(r, c)];
        }
        for c in 0..3 {
            inject[(r, 4 + c)] = w[(r, c)];
        }
    }
    let sigma_d = DMatrix::from_fn(6, 12, |r, c| sigma[(r, c)]);
    let rank_inject = rank_of(&inject, 1e-10);
    let rank_symbol = rank_of(&sigma_d, 1e-10);

    let kernel = null_space(&sigma_d, rank_symbol);
    let image = col_space(&inject);
    let pk = &kernel * kernel.transpose();
    let pi = &image * image.transpose();
    let gap_m = pk - pi;
    let gap = gap_m
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max);

    Ok(ExactSequenceReport {
        rank_inject,
        rank_symbol,
        subspace_gap: gap,
        exact: rank_inject == 7 && rank_symbol == 5 && gap < gap_tol,
    })
}

/// Literal symbol of the gauge-adjusted flow,
/// `Sigma(alpha) = -(H* H + S S* w*w + w w*)`, assembled in orthonormal
/// coordinates. The composition is not symmetric; its quadratic form is,
/// and [`parabolic_symbol`] reports the eigenvalues of the symmetric part.
pub fn parabolic_symbol_operator(d: &SymbolData, alpha: &Form1) -> Result<Mat12, ExteriorError> {
    if alpha.norm() == 0.0 {
        return Err(ExteriorError::ZeroCovector);
    }
    let a = d.covector_to_onb(alpha);
    let h = build_p(d) * build_w_wedge(&a);
    let s = build_s(d);
    let wv = build_w_vertex(&a);
    let ww = build_w_wedge(&a);
    Ok(-(h.transpose() * h + s * s.transpose() * (ww.transpose() * ww) + wv * wv.transpose()))
}

#[derive(Clone, Debug, Serialize)]
pub struct ParabolicReport {
    /// eigenvalues of the symmetrized symbol, ascending
    pub eigenvalues: Vec<f64>,
    pub max_eigenvalue: f64,
    pub negative_definite: bool,
}

/// Eigenvalue report for the quadratic form of `Sigma(alpha)`.
pub fn parabolic_symbol(d: &SymbolData, alpha: &Form1) -> Result<ParabolicReport, ExteriorError> {
    let sigma = parabolic_symbol_operator(d, alpha)?;
    let sym = (sigma + sigma.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(sym);
    let mut ev: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let max = *ev.last().unwrap();
    Ok(ParabolicReport {
        eigenvalues: ev,
        max_eigenvalue: max,
        negative_definite: max < 0.0,
    })
}

/// Quadratic form `-(Sigma(alpha) b, b)` evaluated on a tangent vector
/// (in ONB coordinates).
pub fn parabolic_quadratic_form(d: &SymbolData, alpha: &Form1, b: &[Form1; 3]) -> f64 {
    let sigma = parabolic_symbol_operator(d, alpha).expect("nonzero alpha");
    let bv = form1_triple_to_v12(b);
    -(sigma * bv).dot(&bv)
}

/// `|S* b|^2 + |w* b|^2` for the parabolicity lower bound.
pub fn gauge_component_norms(d: &SymbolData, alpha: &Form1, b: &[Form1; 3]) -> (f64, f64) {
    let a = d.covector_to_onb(alpha);
    let bv = form1_triple_to_v12(b);
    let s_star = build_s(d).transpose() * bv;
    let w_star = build_w_vertex(&a).transpose() * bv;
    (s_star.norm_squared(), w_star.norm_squared())
}

/// Dimension of `V_alpha = im(P w_alpha)`.
pub fn v_alpha_dim(d: &SymbolData, alpha: &Form1) -> Result<usize, ExteriorError> {
    if alpha.norm() == 0.0 {
        return Err(ExteriorError::ZeroCovector);
    }
    let a = d.covector_to_onb(alpha);
    let h = build_p(d) * build_w_wedge(&a);
    let hd = DMatrix::from_fn(6, 12, |r, c| h[(r, c)]);
    Ok(rank_of(&hd, 1e-10))
}

/// Symbol pairing of the gauge-path flow on an infinitesimal gauge element
/// `(phi, u)`: `-|alpha|^2 (|phi|^2 + |S u|^2)`.
pub fn uniqueness_symbol(d: &SymbolData, alpha: &Form1, phi: &[f64; 3], u: &Vec4) -> f64 {
    let a = d.covector_to_onb(alpha);
    let uf = d.vector_to_onb(u);
    let s = build_s(d);
    let su = s * nalgebra::Vector4::from_column_slice(&uf.0);
    let alpha_sq = a.norm_sq();
    let phi_sq: f64 = phi.iter().map(|x| x * x).sum();
    -alpha_sq * (phi_sq + su.norm_squared())
}

/// Convention constant in `L(alpha ^ iota_u F) = c alpha(u) Q`. With the
/// `{dx^i ^ dx^j}`-orthonormal scale (wedge-unit frames, `L(F) = Q`) the
/// constant is `1/2`; it is pinned here once and `l_circ_s_residual` checks
/// the identity against it.
pub const L_CIRC_S_CONSTANT: f64 = 0.5;

/// Contraction of `alpha (x) iota_u F` into `L`; equals
/// `L_CIRC_S_CONSTANT * alpha(u) Q` for all covectors and vectors.
pub fn l_circ_s_residual(d: &SymbolData, alpha: &Form1, u: &Vec4) -> f64 {
    let a = d.covector_to_onb(alpha);
    let uf = d.vector_to_onb(u);
    let t = [
        wedge11(&a, &interior2(&uf, &d.frame.w[0])),
        wedge11(&a, &interior2(&uf, &d.frame.w[1])),
        wedge11(&a, &interior2(&uf, &d.frame.w[2])),
    ];
    let lhs = l_apply(d, &t);
    let rhs = d.q * (L_CIRC_S_CONSTANT * exterior4::interior1(&Vec4(a.0), &Form1(uf.0)));
    (lhs - rhs).norm() / rhs.norm().max(1e-9)
}

/// Random definite frames for property suites: a GL(3) fibre mix and a GL(4)
/// coordinate change applied to the standard frame, rejection-sampled to
/// stay safely wedge-definite.
pub fn random_definite_frame<R: rand::Rng>(rng: &mut R, spread: f64) -> Frame3 {
    loop {
        let mut mix = Matrix3::identity();
        for i in 0..3 {
            for j in 0..3 {
                mix[(i, j)] += rng.random_range(-spread..spread);
            }
        }
        let mut l: Matrix4<f64> = Matrix4::identity();
        for i in 0..4 {
            for j in 0..4 {
                l[(i, j)] += rng.random_range(-spread..spread);
            }
        }
        if l.determinant().abs() < 0.2 {
            continue;
        }
        let l_inv = match l.try_inverse() {
            Some(m) => m,
            None => continue,
        };
        let std = Frame3::standard();
        let mixed: Vec<Form2> = (0..3)
            .map(|i| {
                let mut acc = Form2::zero();
                for j in 0..3 {
                    acc = acc.add(&std.w[j].scale(mix[(i, j)]));
                }
                exterior4::pullback_form2(&l_inv, &acc)
            })
            .collect();
        let f = Frame3::new(mixed[0], mixed[1], mixed[2]);
        let g = gram_matrix(&f);
        // keep the conditioning decent for 1e-12-level identities
        let ev = exterior4::sym3_eigenvalues(&g);
        if ev[0] > 0.15 * ev[2] && ev[2] > 0.1 {
            return f;
        }
    }
}

/// The 4-dimensional contraction identity evaluated on data reconstructed
/// from a frame (not only the Euclidean metric): returns the residual scale.
pub fn contraction_identity_residual(
    d: &SymbolData,
    c1: &[f64; 3],
    c2: &[f64; 3],
    alpha: &Form1,
    u: &Vec4,
) -> f64 {
    let a = d.covector_to_onb(alpha);
    let uf = d.vector_to_onb(u);
    let mut b1 = Form2::zero();
    let mut b2 = Form2::zero();
    for i in 0..3 {
        b1 = b1.add(&d.frame.w[i].scale(c1[i]));
        b2 = b2.add(&d.frame.w[i].scale(c2[i]));
    }
    let ip2 = |x: &Form2, y: &Form2| (0..6).map(|k| x.0[k] * y.0[k]).sum::<f64>();
    let lhs = ip2(&wedge11(&a, &interior2(&uf, &b1)), &b2)
        + ip2(&wedge11(&a, &interior2(&uf, &b2)), &b1);
    let rhs = ip2(&b1, &b2) * exterior4::interior1(&Vec4(a.0), &Form1(uf.0));
    let scale = (b1.norm() * b2.norm() * a.norm() * uf.norm()).max(1e-9);
    (lhs - rhs).abs() / scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn perfect_data() -> SymbolData {
        SymbolData::from_frame(&Frame3::standard()).unwrap()
    }

    fn random_data(r: &mut ChaCha8Rng) -> SymbolData {
        SymbolData::from_frame(&random_definite_frame(r, 0.35)).unwrap()
    }

    fn random_form1(r: &mut ChaCha8Rng) -> Form1 {
        let mut c = [0.0; 4];
        for v in &mut c {
            *v = r.random_range(-1.0..1.0);
        }
        Form1(c)
    }

    fn random_frame2(r: &mut ChaCha8Rng) -> [Form2; 3] {
        let mut out = [Form2::zero(); 3];
        for f in &mut out {
            for c in &mut f.0 {
                *c = r.random_range(-1.0..1.0);
            }
        }
        out
    }

    #[test]
    fn onb_transform_properties() {
        let mut r = rng(11);
        for _ in 0..20 {
            let d = random_data(&mut r);
            // frame is wedge-positive with mu = 2 and Q matches trace 3
            assert_relative_eq!(d.q.trace(), 3.0, epsilon = 1e-10);
            // (F_i, F_j) = 2 Q_ij in flat coordinates
            for i in 0..3 {
                for j in 0..3 {
                    let ip: f64 = (0..6).map(|k| d.frame.w[i].0[k] * d.frame.w[j].0[k]).sum();
                    assert_relative_eq!(ip, 2.0 * d.q[(i, j)], epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn l_matrix_form_and_kernel() {
        let mut r = rng(12);
        for _ in 0..40 {
            let d = random_data(&mut r);
            // L(F) = Q
            let q = l_apply(&d, &d.frame.w.clone());
            assert!((q - d.q).norm() < 1e-11);
            // L vanishes on anti-self-dual inputs
            let asd = Frame3::standard_asd();
            let mut t = [Form2::zero(); 3];
            for (i, ti) in t.iter_mut().enumerate() {
                // anti-self-dual for the reconstructed metric: transform back?
                // in ONB coords the ASD forms are the flat standard ones.
                *ti = asd.w[i].scale(r.random_range(-1.0..1.0));
            }
            let m = l_apply(&d, &t);
            assert!(m.norm() < 1e-11);
            // matrix form (T Q + Q T^t)/2 on self-dual inputs T = sum T_ij F_j
            let mut tmat = Matrix3::zeros();
            for i in 0..3 {
                for j in 0..3 {
                    tmat[(i, j)] = r.random_range(-1.0..1.0);
                }
            }
            let mut t2 = [Form2::zero(); 3];
            for i in 0..3 {
                for j in 0..3 {
                    t2[i] = t2[i].add(&d.frame.w[j].scale(tmat[(i, j)]));
                }
            }
            let lhs = l_apply(&d, &t2);
            let rhs = (tmat * d.q + d.q * tmat.transpose()) * 0.5;
            assert!((lhs - rhs).norm() < 1e-10 * rhs.norm().max(1.0));
        }
    }

    #[test]
    fn l_star_is_adjoint_and_half_curvature_contraction() {
        let mut r = rng(13);
        for _ in 0..40 {
            let d = random_data(&mut r);
            let t = random_frame2(&mut r);
            let mut m = Matrix3::zeros();
            for i in 0..3 {
                for j in i..3 {
                    let v = r.random_range(-1.0..1.0);
                    m[(i, j)] = v;
                    m[(j, i)] = v;
                }
            }
            let lt = l_apply(&d, &t);
            let lstar = l_star_apply(&d, &m);
            let lhs = (m * lt).trace();
            let rhs: f64 = (0..3)
                .map(|i| (0..6).map(|k| lstar[i].0[k] * t[i].0[k]).sum::<f64>())
                .sum();
            assert_relative_eq!(lhs, rhs, max_relative = 1e-12, epsilon = 1e-13);
            // closed form: L*(M) = M(F)/2 in these coordinates
            for i in 0..3 {
                let mut mf = Form2::zero();
                for j in 0..3 {
                    mf = mf.add(&d.frame.w[j].scale(m[(i, j)]));
                }
                assert!(lstar[i].sub(&mf.scale(0.5)).norm() < 1e-11);
            }
        }
    }

    #[test]
    fn delta_q_trace_free_and_scale_direction() {
        let d = perfect_data();
        // direction T = F gives delta Q = 0 at perfect data
        let dq = delta_q(&d, &d.frame.w.clone());
        assert!(dq.norm() < 1e-12);
        let mut r = rng(14);
        for _ in 0..200 {
            let d = random_data(&mut r);
            let t = random_frame2(&mut r);
            assert!(delta_q(&d, &t).trace().abs() < 1e-12);
        }
    }

    #[test]
    fn delta_q_matches_finite_differences() {
        let mut r = rng(15);
        for _ in 0..30 {
            let f = random_definite_frame(&mut r, 0.3);
            let d = SymbolData::from_frame(&f).unwrap();
            // a random curvature direction, in ambient coordinates
            let mut t_amb = [Form2::zero(); 3];
            for ti in &mut t_amb {
                for c in &mut ti.0 {
                    *c = r.random_range(-1.0..1.0);
                }
            }
            let t_onb = [
                d.form2_to_onb(&t_amb[0]),
                d.form2_to_onb(&t_amb[1]),
                d.form2_to_onb(&t_amb[2]),
            ];
            let predicted = delta_q(&d, &t_onb);
            // Richardson-extrapolated central differences of Q(F + eps T),
            // computed in ambient coordinates (Q is coordinate-free)
            let fd = |eps: f64| {
                let plus = Frame3::new(
                    f.w[0].add(&t_amb[0].scale(eps)),
                    f.w[1].add(&t_amb[1].scale(eps)),
                    f.w[2].add(&t_amb[2].scale(eps)),
                );
                let minus = Frame3::new(
                    f.w[0].sub(&t_amb[0].scale(eps)),
                    f.w[1].sub(&t_amb[1].scale(eps)),
                    f.w[2].sub(&t_amb[2].scale(eps)),
                );
                (q_of_frame(&plus).unwrap() - q_of_frame(&minus).unwrap()) / (2.0 * eps)
            };
            let h = 1e-3;
            let richardson = (fd(h / 2.0) * 4.0 - fd(h)) / 3.0;
            assert!(
                (predicted - richardson).norm() <= 1e-6 * richardson.norm().max(1e-3),
                "dq mismatch {}",
                (predicted - richardson).norm()
            );
        }
    }

    #[test]
    fn delta_b_two_forms_agree_and_match_fd() {
        let mut r = rng(16);
        let mut max_dev: f64 = 0.0;
        for _ in 0..500 {
            let d = random_data(&mut r);
            let t = random_frame2(&mut r);
            let compact = delta_b_compact(&d, &t);
            let expanded = delta_b_expanded(&d, &t);
            let dev = (compact - expanded).norm() / expanded.norm().max(1e-6);
            max_dev = max_dev.max(dev);
        }
        assert!(max_dev < 1e-12, "two delta-B forms disagree: {max_dev}");

        // kernel of the projector: directions with L(T) proportional to Q
        let d = perfect_data();
        let t = d.frame.w.clone();
        assert!(delta_b_compact(&d, &t).norm() < 1e-11);

        // finite differences of B(F + eps T)
        for _ in 0..20 {
            let f = random_definite_frame(&mut r, 0.3);
            let d = SymbolData::from_frame(&f).unwrap();
            let mut t_amb = [Form2::zero(); 3];
            for ti in &mut t_amb {
                for c in &mut ti.0 {
                    *c = r.random_range(-1.0..1.0);
                }
            }
            let t_onb = [
                d.form2_to_onb(&t_amb[0]),
                d.form2_to_onb(&t_amb[1]),
                d.form2_to_onb(&t_amb[2]),
            ];
            // delta_b corresponds to the linearisation of the full-gradient B
            // at fixed time normalization: B = 4Q - (2/3)tr(Q^2) Id, and
            // delta_b = 4 delta_q - (4/3) tr(Q delta_q) Id.
            let predicted = delta_b_compact(&d, &t_onb);
            let fd = |eps: f64| {
                let plus = Frame3::new(
                    f.w[0].add(&t_amb[0].scale(eps)),
                    f.w[1].add(&t_amb[1].scale(eps)),
                    f.w[2].add(&t_amb[2].scale(eps)),
                );
                let minus = Frame3::new(
                    f.w[0].sub(&t_amb[0].scale(eps)),
                    f.w[1].sub(&t_amb[1].scale(eps)),
                    f.w[2].sub(&t_amb[2].scale(eps)),
                );
                (b_of_frame(&plus).unwrap() - b_of_frame(&minus).unwrap()) / (2.0 * eps)
            };
            let h = 1e-3;
            let richardson = (fd(h / 2.0) * 4.0 - fd(h)) / 3.0;
            assert!(
                (predicted - richardson).norm() <= 1e-6 * richardson.norm().max(1e-3),
                "delta-B vs finite differences: {}",
                (predicted - richardson).norm()
            );
        }
    }

    #[test]
    fn sigma_rank_and_compositions() {
        let mut r = rng(17);
        for _ in 0..200 {
            let d = random_data(&mut r);
            let alpha = random_form1(&mut r);
            if alpha.norm() < 0.1 {
                continue;
            }
            let sigma = sigma_alpha(&d, &alpha).unwrap();
            let sd = DMatrix::from_fn(6, 12, |i, j| sigma[(i, j)]);
            assert_eq!(rank_of(&sd, 1e-10), 5);
            let a = d.covector_to_onb(&alpha);
            let comp_w = sigma * build_w_vertex(&a);
            assert!(comp_w.norm() < 1e-12 * sigma.norm().max(1.0));
            let comp_s = sigma * build_s(&d);
            assert!(comp_s.norm() < 1e-12 * sigma.norm().max(1.0));
        }
    }

    #[test]
    fn sigma_rejects_zero_covector() {
        let d = perfect_data();
        assert!(matches!(
            sigma_alpha(&d, &Form1::zero()),
            Err(ExteriorError::ZeroCovector)
        ));
    }

    #[test]
    fn exact_sequence_on_random_draws() {
        let mut r = rng(18);
        for _ in 0..200 {
            let d = random_data(&mut r);
            let alpha = random_form1(&mut r);
            if alpha.norm() < 0.1 {
                continue;
            }
            let rep = exact_sequence_check(&d, &alpha, 1e-8).unwrap();
            assert!(rep.exact, "{rep:?}");
            // scaling alpha keeps the same kernel and image
            let rep2 = exact_sequence_check(&d, &alpha.scale(3.7), 1e-8).unwrap();
            assert!(rep2.exact);
        }
    }

    #[test]
    fn parabolic_symbol_examples() {
        let d = perfect_data();
        let alpha = Form1([1.0, 0.0, 0.0, 0.0]);
        // pure vertex direction alpha (x) x is a -1 eigenvector of the
        // literal composition
        let sigma = parabolic_symbol_operator(&d, &alpha).unwrap();
        for i in 0..3 {
            let mut b = [Form1::zero(); 3];
            b[i] = alpha;
            let bv = form1_triple_to_v12(&b);
            let out = sigma * bv;
            assert!((out + bv).norm() < 1e-12);
        }
        let mut r = rng(19);
        for _ in 0..200 {
            let d = random_data(&mut r);
            let alpha = random_form1(&mut r);
            if alpha.norm() < 0.1 {
                continue;
            }
            let rep = parabolic_symbol(&d, &alpha).unwrap();
            assert!(rep.negative_definite, "max eig {}", rep.max_eigenvalue);
            assert_eq!(v_alpha_dim(&d, &alpha).unwrap(), 5);
        }
    }

    #[test]
    fn parabolic_lower_bound_at_perfect_data() {
        let d = perfect_data();
        let kappa = 1.0 - 3.0_f64.sqrt() / 2.0;
        let mut r = rng(20);
        for _ in 0..500 {
            let mut alpha = random_form1(&mut r);
            if alpha.norm() < 0.1 {
                continue;
            }
            alpha = alpha.scale(1.0 / alpha.norm());
            let mut b = [Form1::zero(); 3];
            for bi in &mut b {
                *bi = random_form1(&mut r);
            }
            let lhs = parabolic_quadratic_form(&d, &alpha, &b);
            let (s2, w2) = gauge_component_norms(&d, &alpha, &b);
            assert!(
                lhs >= kappa * (s2 + w2) - 1e-10,
                "bound violated: {lhs} < {}",
                kappa * (s2 + w2)
            );
        }
    }

    #[test]
    fn uniqueness_symbol_values() {
        let d = perfect_data();
        let alpha = Form1([0.0, 1.0, 0.0, 0.0]);
        // phi = 0, u nonzero: -3 |alpha|^2 |u|^2 at perfect data
        let u = Vec4([0.7, -0.2, 0.4, 0.1]);
        let got = uniqueness_symbol(&d, &alpha, &[0.0; 3], &u);
        let u2: f64 = u.0.iter().map(|x| x * x).sum();
        assert_relative_eq!(got, -3.0 * u2, max_relative = 1e-12);
        // u = 0: -|alpha|^2 |phi|^2
        let got2 = uniqueness_symbol(&d, &alpha, &[1.0, 2.0, -1.0], &Vec4::zero());
        assert_relative_eq!(got2, -6.0, max_relative = 1e-12);
        assert_eq!(uniqueness_symbol(&d, &alpha, &[0.0; 3], &Vec4::zero()), 0.0);
    }

    #[test]
    fn l_circ_s_identity() {
        let mut r = rng(21);
        for _ in 0..1000 {
            let d = random_data(&mut r);
            let alpha = random_form1(&mut r);
            let u = Vec4(random_form1(&mut r).0);
            if alpha.norm() < 0.1 || u.norm() < 0.1 {
                continue;
            }
            let res = l_circ_s_residual(&d, &alpha, &u);
            assert!(res < 1e-12, "L(alpha ^ iota_u F) != alpha(u) Q: {res}");
        }
    }

    #[test]
    fn contraction_identity_on_reconstructed_metrics() {
        let mut r = rng(22);
        for _ in 0..1000 {
            let d = random_data(&mut r);
            let c1 = [
                r.random_range(-1.0..1.0),
                r.random_range(-1.0..1.0),
                r.random_range(-1.0..1.0),
            ];
            let c2 = [
                r.random_range(-1.0..1.0),
                r.random_range(-1.0..1.0),
                r.random_range(-1.0..1.0),
            ];
            let alpha = random_form1(&mut r);
            let u = Vec4(random_form1(&mut r).0);
            let res = contraction_identity_residual(&d, &c1, &c2, &alpha, &u);
            assert!(res < 1e-12, "residual {res}");
        }
    }

    #[test]
    fn equivariance_under_constant_rotations() {
        // conjugating the frame by R in SO(3) conjugates Q and preserves
        // symbol ranks and eigenvalues
        let mut r = rng(23);
        for _ in 0..20 {
            let f = random_definite_frame(&mut r, 0.3);
            // Rodrigues rotation from a random axis
            let axis = {
                let v = random_form1(&mut r);
                let n = (v.0[0] * v.0[0] + v.0[1] * v.0[1] + v.0[2] * v.0[2]).sqrt();
                [v.0[0] / n, v.0[1] / n, v.0[2] / n]
            };
            let th: f64 = r.random_range(-3.0..3.0);
            let k = Matrix3::new(
                0.0, -axis[2], axis[1], axis[2], 0.0, -axis[0], -axis[1], axis[0], 0.0,
            );
            let rot = Matrix3::identity() + k * th.sin() + k * k * (1.0 - th.cos());
            let mut rotated = [Form2::zero(); 3];
            for i in 0..3 {
                for j in 0..3 {
                    rotated[i] = rotated[i].add(&f.w[j].scale(rot[(i, j)]));
                }
            }
            let d1 = SymbolData::from_frame(&f).unwrap();
            let d2 = SymbolData::from_frame(&Frame3::new(rotated[0], rotated[1], rotated[2]))
                .unwrap();
            let qc = rot * d1.q * rot.transpose();
            assert!((d2.q - qc).norm() < 1e-10);
            let alpha = random_form1(&mut r);
            if alpha.norm() < 0.1 {
                continue;
            }
            let e1 = parabolic_symbol(&d1, &alpha).unwrap().eigenvalues;
            let e2 = parabolic_symbol(&d2, &alpha).unwrap().eigenvalues;
            for (a, b) in e1.iter().zip(e2.iter()) {
                assert_relative_eq!(a, b, max_relative = 1e-8, epsilon = 1e-10);
            }
        }
    }
}
