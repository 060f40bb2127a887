//! Discrete calculus on structured 4D grids: periodic 4-torus grids and
//! bounded chart grids with frozen boundary layers.
//!
//! The load-bearing contract is adjointness: `codifferential` is built as
//! `M_{p-1}^{-1} D^t M_p` with the exact transpose of the discrete exterior
//! derivative and per-site mass matrices of the metric field, so
//! `<d a, b>_g = <a, d* b>_g` holds to rounding. This is what makes the
//! discrete flows exact gradient flows of the discrete energies.

use crate::exterior4::{lambda2, lambda3, Form2, Metric4, Orientation, BASIS2, BASIS3};
use nalgebra::{Matrix4, Matrix6};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LatticeError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("field shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("snapshot i/o: {0}")]
    Snapshot(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Topology {
    Periodic,
    ChartFrozenBoundary { width: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Scheme {
    Centered2,
    Spectral,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub shape: [usize; 4],
    pub spacing: [f64; 4],
    pub topology: Topology,
}

impl Grid {
    pub fn new(
        shape: [usize; 4],
        spacing: [f64; 4],
        topology: Topology,
    ) -> Result<Grid, LatticeError> {
        if shape.iter().any(|&n| n < 4) {
            return Err(LatticeError::InvalidGrid("all axes need >= 4 sites".into()));
        }
        if spacing.iter().any(|&h| !(h > 0.0)) {
            return Err(LatticeError::InvalidGrid("spacing must be positive".into()));
        }
        if let Topology::ChartFrozenBoundary { width } = topology {
            if width < 1 {
                return Err(LatticeError::InvalidGrid(
                    "frozen boundary width must cover the stencil radius".into(),
                ));
            }
            if shape.iter().any(|&n| n <= 2 * width) {
                return Err(LatticeError::InvalidGrid(
                    "frozen boundary leaves no interior".into(),
                ));
            }
        }
        Ok(Grid {
            shape,
            spacing,
            topology,
        })
    }

    /// Unit 4-torus with `n` sites per axis, sites at `i/n`.
    pub fn periodic_unit(n: usize) -> Grid {
        Grid::new([n; 4], [1.0 / n as f64; 4], Topology::Periodic).expect("valid grid")
    }

    /// Cell-centered chart `[-half, half]^4` with `n` sites per axis and a
    /// frozen boundary layer `width` sites deep.
    pub fn chart(n: usize, half_extent: f64, width: usize) -> Grid {
        let h = 2.0 * half_extent / n as f64;
        Grid::new([n; 4], [h; 4], Topology::ChartFrozenBoundary { width }).expect("valid grid")
    }

    pub fn sites(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// Site strides of the row-major ordering.
    pub fn strides(&self) -> [usize; 4] {
        let n = self.shape;
        [n[1] * n[2] * n[3], n[2] * n[3], n[3], 1]
    }

    pub fn index(&self, m: [usize; 4]) -> usize {
        let s = self.strides();
        m[0] * s[0] + m[1] * s[1] + m[2] * s[2] + m[3] * s[3]
    }

    pub fn multi(&self, mut site: usize) -> [usize; 4] {
        let s = self.strides();
        let mut m = [0; 4];
        for a in 0..4 {
            m[a] = site / s[a];
            site %= s[a];
        }
        m
    }

    /// Coordinates of a site: `i h` on the torus, cell centers symmetric
    /// about the origin on a chart.
    pub fn coords(&self, site: usize) -> [f64; 4] {
        let m = self.multi(site);
        let mut x = [0.0; 4];
        for a in 0..4 {
            x[a] = match self.topology {
                Topology::Periodic => m[a] as f64 * self.spacing[a],
                Topology::ChartFrozenBoundary { .. } => {
                    (m[a] as f64 - (self.shape[a] as f64 - 1.0) / 2.0) * self.spacing[a]
                }
            };
        }
        x
    }

    /// True on the frozen layer of a chart grid (never on a torus).
    pub fn is_frozen(&self, site: usize) -> bool {
        match self.topology {
            Topology::Periodic => false,
            Topology::ChartFrozenBoundary { width } => {
                let m = self.multi(site);
                (0..4).any(|a| m[a] < width || m[a] >= self.shape[a] - width)
            }
        }
    }

    pub fn axis_length(&self, a: usize) -> f64 {
        self.shape[a] as f64 * self.spacing[a]
    }
}

pub fn ncomp(degree: usize) -> usize {
    match degree {
        0 | 4 => 1,
        1 | 3 => 4,
        2 => 6,
        _ => panic!("form degree out of range"),
    }
}

/// Lattice-sampled `k`-tuple of `p`-forms; per-site layout is fibre-major
/// with form components innermost.
#[derive(Clone, Debug, PartialEq)]
pub struct FormField {
    pub grid: Grid,
    pub degree: usize,
    pub rank: usize,
    pub data: Vec<f64>,
}

impl FormField {
    pub fn zeros(grid: &Grid, degree: usize, rank: usize) -> FormField {
        let len = grid.sites() * rank * ncomp(degree);
        FormField {
            grid: grid.clone(),
            degree,
            rank,
            data: vec![0.0; len],
        }
    }

    pub fn block(&self) -> usize {
        self.rank * ncomp(self.degree)
    }

    pub fn site(&self, s: usize) -> &[f64] {
        let b = self.block();
        &self.data[s * b..(s + 1) * b]
    }

    pub fn site_mut(&mut self, s: usize) -> &mut [f64] {
        let b = self.block();
        &mut self.data[s * b..(s + 1) * b]
    }

    pub fn comp(&self, s: usize, fibre: usize, c: usize) -> f64 {
        self.data[s * self.block() + fibre * ncomp(self.degree) + c]
    }

    pub fn comp_mut(&mut self, s: usize, fibre: usize, c: usize) -> &mut f64 {
        let b = self.block();
        let nc = ncomp(self.degree);
        &mut self.data[s * b + fibre * nc + c]
    }

    pub fn axpy(&mut self, alpha: f64, other: &FormField) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (d, o) in self.data.iter_mut().zip(other.data.iter()) {
            *d += alpha * o;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for d in &mut self.data {
            *d *= alpha;
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Zero all components on the frozen boundary layer.
    pub fn zero_frozen(&mut self) {
        if matches!(self.grid.topology, Topology::Periodic) {
            return;
        }
        let b = self.block();
        for s in 0..self.grid.sites() {
            if self.grid.is_frozen(s) {
                for v in &mut self.data[s * b..(s + 1) * b] {
                    *v = 0.0;
                }
            }
        }
    }

    /// Flat little-l2 inner product (no metric weights).
    pub fn dot_flat(&self, other: &FormField) -> f64 {
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a * b)
            .sum()
    }
}

/// 1D second-order stencil pass along `axis`, accumulating
/// `sign * D(src-lane)` into a dst lane. Lanes are selected by per-site
/// component offsets; `transpose` applies the exact transpose of the scheme.
#[allow(clippy::too_many_arguments)]
fn axis_pass(
    grid: &Grid,
    scheme: Scheme,
    axis: usize,
    src: &[f64],
    src_block: usize,
    src_off: usize,
    dst: &mut [f64],
    dst_block: usize,
    dst_off: usize,
    sign: f64,
    transpose: bool,
) {
    let n = grid.shape[axis];
    let stride = grid.strides()[axis];
    let inv2h = 1.0 / (2.0 * grid.spacing[axis]);
    let periodic = matches!(grid.topology, Topology::Periodic);

    let mut line_src = vec![0.0; n];
    let mut line_dst = vec![0.0; n];
    let mut fft_buf: Vec<Complex<f64>> = Vec::new();
    let mut planner = FftPlanner::new();

    // enumerate line base sites: all multi-indices with m[axis] = 0
    let shape = grid.shape;
    let mut outer_shape = shape;
    outer_shape[axis] = 1;
    let total_lines: usize = outer_shape.iter().product();
    for line in 0..total_lines {
        // decode into a base multi-index
        let mut rem = line;
        let mut m = [0usize; 4];
        for a in 0..4 {
            let span = if a == axis { 1 } else { shape[a] };
            let after: usize = (a + 1..4)
                .map(|b| if b == axis { 1 } else { shape[b] })
                .product();
            m[a] = rem / after;
            let _ = span;
            rem %= after;
        }
        let base = grid.index(m);
        for k in 0..n {
            line_src[k] = src[(base + k * stride) * src_block + src_off];
        }
        match scheme {
            Scheme::Centered2 => {
                if periodic {
                    // transpose of the periodic centered stencil is its negative
                    let s = if transpose { -inv2h } else { inv2h };
                    for k in 0..n {
                        let kp = (k + 1) % n;
                        let km = (k + n - 1) % n;
                        line_dst[k] = s * (line_src[kp] - line_src[km]);
                    }
                } else if !transpose {
                    for k in 1..n - 1 {
                        line_dst[k] = inv2h * (line_src[k + 1] - line_src[k - 1]);
                    }
                    line_dst[0] =
                        inv2h * (-3.0 * line_src[0] + 4.0 * line_src[1] - line_src[2]);
                    line_dst[n - 1] = inv2h
                        * (3.0 * line_src[n - 1] - 4.0 * line_src[n - 2] + line_src[n - 3]);
                } else {
                    for v in line_dst.iter_mut() {
                        *v = 0.0;
                    }
                    for k in 1..n - 1 {
                        line_dst[k - 1] -= inv2h * line_src[k];
                        line_dst[k + 1] += inv2h * line_src[k];
                    }
                    line_dst[0] += -3.0 * inv2h * line_src[0];
                    line_dst[1] += 4.0 * inv2h * line_src[0];
                    line_dst[2] += -inv2h * line_src[0];
                    line_dst[n - 1] += 3.0 * inv2h * line_src[n - 1];
                    line_dst[n - 2] += -4.0 * inv2h * line_src[n - 1];
                    line_dst[n - 3] += inv2h * line_src[n - 1];
                }
            }
            Scheme::Spectral => {
                assert!(periodic, "spectral scheme requires a periodic grid");
                let len = grid.axis_length(axis);
                fft_buf.clear();
                fft_buf.extend(line_src.iter().map(|&v| Complex::new(v, 0.0)));
                let fft = planner.plan_fft_forward(n);
                fft.process(&mut fft_buf);
                let tpl = 2.0 * std::f64::consts::PI / len;
                for (m_idx, v) in fft_buf.iter_mut().enumerate() {
                    let freq = if 2 * m_idx < n {
                        m_idx as isize
                    } else if 2 * m_idx == n {
                        0 // zero the Nyquist derivative
                    } else {
                        m_idx as isize - n as isize
                    };
                    let k = tpl * freq as f64;
                    let ik = Complex::new(0.0, if transpose { -k } else { k });
                    *v *= ik;
                }
                let ifft = planner.plan_fft_inverse(n);
                ifft.process(&mut fft_buf);
                for k in 0..n {
                    line_dst[k] = fft_buf[k].re / n as f64;
                }
            }
        }
        for k in 0..n {
            dst[(base + k * stride) * dst_block + dst_off] += sign * line_dst[k];
        }
    }
}

/// Terms of the exterior derivative from degree `p`:
/// `(out_component, axis, in_component, sign)`.
fn d_terms(p: usize) -> Vec<(usize, usize, usize, f64)> {
    match p {
        0 => (0..4).map(|mu| (mu, mu, 0, 1.0)).collect(),
        1 => {
            let mut t = Vec::new();
            for (slot, (i, j)) in BASIS2.iter().enumerate() {
                t.push((slot, *i, *j, 1.0));
                t.push((slot, *j, *i, -1.0));
            }
            t
        }
        2 => {
            let pair = |a: usize, b: usize| BASIS2.iter().position(|&p| p == (a, b)).unwrap();
            let mut t = Vec::new();
            for (slot, (i, j, k)) in BASIS3.iter().enumerate() {
                t.push((slot, *i, pair(*j, *k), 1.0));
                t.push((slot, *j, pair(*i, *k), -1.0));
                t.push((slot, *k, pair(*i, *j), 1.0));
            }
            t
        }
        3 => vec![
            (0, 0, 3, 1.0),
            (0, 1, 2, -1.0),
            (0, 2, 1, 1.0),
            (0, 3, 0, -1.0),
        ],
        _ => panic!("no exterior derivative from degree {p}"),
    }
}

/// Discrete exterior derivative.
pub fn d_apply(f: &FormField, scheme: Scheme) -> FormField {
    let p = f.degree;
    let mut out = FormField::zeros(&f.grid, p + 1, f.rank);
    let (ncs, ncd) = (ncomp(p), ncomp(p + 1));
    for fibre in 0..f.rank {
        for &(oc, axis, ic, sign) in &d_terms(p) {
            axis_pass(
                &f.grid,
                scheme,
                axis,
                &f.data,
                f.block(),
                fibre * ncs + ic,
                &mut out.data,
                f.rank * ncd,
                fibre * ncd + oc,
                sign,
                false,
            );
        }
    }
    out
}

/// Exact transpose of [`d_apply`] (flat little-l2 pairing): maps degree
/// `p+1` fields to degree `p` fields.
pub fn d_transpose_apply(f: &FormField, scheme: Scheme) -> FormField {
    let p = f.degree - 1;
    let mut out = FormField::zeros(&f.grid, p, f.rank);
    let (ncs, ncd) = (ncomp(p + 1), ncomp(p));
    for fibre in 0..f.rank {
        for &(oc, axis, ic, sign) in &d_terms(p) {
            // transpose: gather from the out-component, scatter to in-component
            axis_pass(
                &f.grid,
                scheme,
                axis,
                &f.data,
                f.block(),
                fibre * ncs + oc,
                &mut out.data,
                f.rank * ncd,
                fibre * ncd + ic,
                sign,
                true,
            );
        }
    }
    out
}

/// Per-site metric data: the minor matrices needed for mass matrices and
/// their inverses on every form degree.
#[derive(Clone, Debug)]
pub struct SiteGeom {
    pub g: Matrix4<f64>,
    pub ginv: Matrix4<f64>,
    pub lam2ginv: Matrix6<f64>,
    pub lam2g: Matrix6<f64>,
    /// sqrt(det g): the Riemannian density
    pub w: f64,
    pub orientation: f64,
}

impl SiteGeom {
    pub fn from_metric(m: &Metric4) -> SiteGeom {
        let ginv = m.inverse();
        SiteGeom {
            g: m.g,
            ginv,
            lam2ginv: lambda2(&ginv),
            lam2g: lambda2(&m.g),
            w: m.sqrt_det(),
            orientation: m.orientation.sign(),
        }
    }

    pub fn euclidean() -> SiteGeom {
        SiteGeom::from_metric(&Metric4::euclidean())
    }

    pub fn metric4(&self) -> Metric4 {
        Metric4 {
            g: self.g,
            orientation: if self.orientation > 0.0 {
                Orientation::Positive
            } else {
                Orientation::Negative
            },
        }
    }
}

#[derive(Clone, Debug)]
pub struct MetricField {
    pub grid: Grid,
    pub geoms: Vec<SiteGeom>,
}

impl MetricField {
    pub fn euclidean(grid: &Grid) -> MetricField {
        MetricField {
            grid: grid.clone(),
            geoms: vec![SiteGeom::euclidean(); grid.sites()],
        }
    }
}

fn apply_mass(geom: &SiteGeom, degree: usize, values: &mut [f64]) {
    match degree {
        0 => values[0] *= geom.w,
        1 => {
            let v = Matrix4::from_fn(|i, _| values[i]) * Matrix4::identity();
            let _ = v;
            let x = nalgebra::Vector4::from_column_slice(values);
            let y = geom.ginv * x * geom.w;
            values.copy_from_slice(y.as_slice());
        }
        2 => {
            let x = nalgebra::Vector6::from_column_slice(values);
            let y = geom.lam2ginv * x * geom.w;
            values.copy_from_slice(y.as_slice());
        }
        3 => {
            let l3 = lambda3(&geom.ginv);
            let x = nalgebra::Vector4::from_column_slice(values);
            let y = l3 * x * geom.w;
            values.copy_from_slice(y.as_slice());
        }
        4 => values[0] *= geom.w / geom.g.determinant(),
        _ => unreachable!(),
    }
}

fn apply_mass_inverse(geom: &SiteGeom, degree: usize, values: &mut [f64]) {
    match degree {
        0 => values[0] /= geom.w,
        1 => {
            let x = nalgebra::Vector4::from_column_slice(values);
            let y = geom.g * x / geom.w;
            values.copy_from_slice(y.as_slice());
        }
        2 => {
            let x = nalgebra::Vector6::from_column_slice(values);
            let y = geom.lam2g * x / geom.w;
            values.copy_from_slice(y.as_slice());
        }
        3 => {
            let l3 = lambda3(&geom.g);
            let x = nalgebra::Vector4::from_column_slice(values);
            let y = l3 * x / geom.w;
            values.copy_from_slice(y.as_slice());
        }
        4 => values[0] *= geom.g.determinant() / geom.w,
        _ => unreachable!(),
    }
}

/// Apply the per-site mass matrix of the metric field to every fibre.
pub fn mass_apply(f: &FormField, mf: &MetricField) -> FormField {
    let mut out = f.clone();
    let nc = ncomp(f.degree);
    let b = f.block();
    for s in 0..f.grid.sites() {
        let geom = &mf.geoms[s];
        let block = &mut out.data[s * b..(s + 1) * b];
        for fibre in 0..f.rank {
            apply_mass(geom, f.degree, &mut block[fibre * nc..(fibre + 1) * nc]);
        }
    }
    out
}

/// Metric L2 inner product of two fields (mass matrix plus cell volume).
pub fn mass_inner(a: &FormField, b: &FormField, mf: &MetricField) -> f64 {
    debug_assert_eq!(a.degree, b.degree);
    let ma = mass_apply(a, mf);
    ma.dot_flat(b) * a.grid.cell_volume()
}

/// Metric-weighted codifferential: the exact mass-matrix adjoint of
/// [`d_apply`]. Maps degree `p` fields to degree `p-1`.
pub fn codifferential(f: &FormField, mf: &MetricField, scheme: Scheme) -> FormField {
    assert!(f.degree >= 1, "codifferential needs degree >= 1");
    let weighted = mass_apply(f, mf);
    let mut out = d_transpose_apply(&weighted, scheme);
    let nc = ncomp(out.degree);
    let b = out.block();
    for s in 0..out.grid.sites() {
        let geom = &mf.geoms[s];
        let block = &mut out.data[s * b..(s + 1) * b];
        for fibre in 0..out.rank {
            apply_mass_inverse(geom, out.degree, &mut block[fibre * nc..(fibre + 1) * nc]);
        }
    }
    out
}

/// Riemann-sum integral of a scalar 4-form field.
pub fn integrate(f: &FormField) -> f64 {
    assert!(f.degree == 4 && f.rank == 1);
    f.data.iter().sum::<f64>() * f.grid.cell_volume()
}

/// Integral of the wedge product of two scalar 2-form fields.
pub fn integrate_wedge22(a: &FormField, b: &FormField, fa: usize, fb: usize) -> f64 {
    debug_assert!(a.degree == 2 && b.degree == 2);
    let sites = a.grid.sites();
    let mut acc = 0.0;
    for s in 0..sites {
        let wa = form2_at(a, s, fa);
        let wb = form2_at(b, s, fb);
        acc += crate::exterior4::wedge_pair(&wa, &wb);
    }
    acc * a.grid.cell_volume()
}

pub fn form2_at(f: &FormField, site: usize, fibre: usize) -> Form2 {
    let nc = ncomp(2);
    let base = site * f.block() + fibre * nc;
    Form2([
        f.data[base],
        f.data[base + 1],
        f.data[base + 2],
        f.data[base + 3],
        f.data[base + 4],
        f.data[base + 5],
    ])
}

pub fn set_form2_at(f: &mut FormField, site: usize, fibre: usize, w: &Form2) {
    let nc = ncomp(2);
    let base = site * f.block() + fibre * nc;
    f.data[base..base + 6].copy_from_slice(&w.0);
}

// ---------------------------------------------------------------------------
// snapshots

pub const CONVENTION_TAG: &str = "lex-basis/dx-onb/mu-half-dvol/v1";

#[derive(Serialize, Deserialize)]
struct SnapshotHeader {
    shape: [usize; 4],
    spacing: [f64; 4],
    topology: Topology,
    fibre_rank: usize,
    form_degree: usize,
    scheme: String,
    convention: String,
}

/// Write a field as a one-line JSON header followed by little-endian f64s
/// in row-major site order, components innermost.
pub fn write_snapshot<W: std::io::Write>(
    f: &FormField,
    scheme: Scheme,
    mut w: W,
) -> Result<(), LatticeError> {
    let header = SnapshotHeader {
        shape: f.grid.shape,
        spacing: f.grid.spacing,
        topology: f.grid.topology,
        fibre_rank: f.rank,
        form_degree: f.degree,
        scheme: format!("{scheme:?}"),
        convention: CONVENTION_TAG.to_string(),
    };
    let mut line = serde_json::to_string(&header).map_err(|e| LatticeError::Snapshot(e.to_string()))?;
    line.push('\n');
    w.write_all(line.as_bytes())
        .map_err(|e| LatticeError::Snapshot(e.to_string()))?;
    for v in &f.data {
        w.write_all(&v.to_le_bytes())
            .map_err(|e| LatticeError::Snapshot(e.to_string()))?;
    }
    Ok(())
}

pub fn read_snapshot<R: std::io::Read>(mut r: R) -> Result<FormField, LatticeError> {
    let mut raw = Vec::new();
    r.read_to_end(&mut raw)
        .map_err(|e| LatticeError::Snapshot(e.to_string()))?;
    let nl = raw
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| LatticeError::Snapshot("missing header line".into()))?;
    let header: SnapshotHeader = serde_json::from_slice(&raw[..nl])
        .map_err(|e| LatticeError::Snapshot(e.to_string()))?;
    let grid = Grid::new(header.shape, header.spacing, header.topology)
        .map_err(|e| LatticeError::Snapshot(e.to_string()))?;
    let expected = grid.sites() * header.fibre_rank * ncomp(header.form_degree);
    let body = &raw[nl + 1..];
    if body.len() != expected * 8 {
        return Err(LatticeError::Snapshot(format!(
            "payload has {} bytes, expected {}",
            body.len(),
            expected * 8
        )));
    }
    let data: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(FormField {
        grid,
        degree: header.form_degree,
        rank: header.fibre_rank,
        data,
    })
}

// ---------------------------------------------------------------------------
// band-limited random fields

/// Smooth band-limited random field on a periodic grid: a sum over the
/// lowest `shells` Fourier shells (`0 < |k|^2 <= shells`) with unit-normal
/// coefficients. Deterministic in the generator.
pub fn band_limited_field<R: rand::Rng>(
    grid: &Grid,
    degree: usize,
    rank: usize,
    shells: i64,
    rng: &mut R,
) -> FormField {
    assert!(matches!(grid.topology, Topology::Periodic));
    let mut modes: Vec<[i64; 4]> = Vec::new();
    let kmax = (shells as f64).sqrt() as i64;
    for k0 in -kmax..=kmax {
        for k1 in -kmax..=kmax {
            for k2 in -kmax..=kmax {
                for k3 in -kmax..=kmax {
                    let k2sum = k0 * k0 + k1 * k1 + k2 * k2 + k3 * k3;
                    if k2sum > 0 && k2sum <= shells {
                        // one representative per +-k pair
                        if (k0, k1, k2, k3) > (-k0, -k1, -k2, -k3) {
                            modes.push([k0, k1, k2, k3]);
                        }
                    }
                }
            }
        }
    }
    let nc = ncomp(degree);
    let mut out = FormField::zeros(grid, degree, rank);
    let normal = |rng: &mut R| -> f64 {
        // Box-Muller
        let u1: f64 = rng.random_range(1e-12..1.0);
        let u2: f64 = rng.random_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    };
    let mut coeffs = Vec::with_capacity(modes.len());
    for _ in &modes {
        let mut c = vec![0.0; 2 * rank * nc];
        for v in &mut c {
            *v = normal(rng);
        }
        coeffs.push(c);
    }
    for s in 0..grid.sites() {
        let x = grid.coords(s);
        let block = out.site_mut(s);
        for (k, c) in modes.iter().zip(coeffs.iter()) {
            let mut phase = 0.0;
            for a in 0..4 {
                phase += k[a] as f64 * x[a] / grid.axis_length(a);
            }
            phase *= 2.0 * std::f64::consts::PI;
            let (sin, cos) = phase.sin_cos();
            for j in 0..rank * nc {
                block[j] += c[2 * j] * cos + c[2 * j + 1] * sin;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exterior4::{hodge_star2, hodge_star3, Form1, Metric4};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fill_random(f: &mut FormField, seed: u64) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        for v in &mut f.data {
            *v = r.random_range(-1.0..1.0);
        }
    }

    fn random_metric_field(grid: &Grid, seed: u64) -> MetricField {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let geoms = (0..grid.sites())
            .map(|_| {
                let mut a: Matrix4<f64> = Matrix4::zeros();
                for i in 0..4 {
                    for j in 0..4 {
                        a[(i, j)] = r.random_range(-0.3..0.3);
                    }
                }
                let g = a.transpose() * a + Matrix4::identity();
                SiteGeom::from_metric(&Metric4 {
                    g,
                    orientation: crate::exterior4::Orientation::Positive,
                })
            })
            .collect();
        MetricField {
            grid: grid.clone(),
            geoms,
        }
    }

    #[test]
    fn d_of_constant_is_zero() {
        for topology in [Topology::Periodic, Topology::ChartFrozenBoundary { width: 2 }] {
            let grid = Grid::new([6; 4], [0.25; 4], topology).unwrap();
            let mut f = FormField::zeros(&grid, 1, 3);
            for v in &mut f.data {
                *v = 0.7;
            }
            let df = d_apply(&f, Scheme::Centered2);
            assert!(df.sup_norm() < 1e-13);
        }
    }

    #[test]
    fn d_matches_analytic_derivative() {
        // f = sin(2 pi x0 / L) dx1  ->  (2 pi / L) cos(2 pi x0 / L) dx0^dx1
        let l = 2.0;
        for (n, scheme, tol) in [
            (16usize, Scheme::Centered2, 0.13),
            (32, Scheme::Centered2, 0.033),
            (16, Scheme::Spectral, 1e-12),
        ] {
            let grid = Grid::new([n, 4, 4, 4], [l / n as f64, 0.25, 0.25, 0.25], Topology::Periodic)
                .unwrap();
            let mut f = FormField::zeros(&grid, 1, 1);
            let tpl = 2.0 * std::f64::consts::PI / l;
            for s in 0..grid.sites() {
                let x = grid.coords(s);
                *f.comp_mut(s, 0, 1) = (tpl * x[0]).sin();
            }
            let df = d_apply(&f, scheme);
            let mut err: f64 = 0.0;
            for s in 0..grid.sites() {
                let x = grid.coords(s);
                let expect = tpl * (tpl * x[0]).cos();
                err = err.max((df.comp(s, 0, 0) - expect).abs());
            }
            assert!(err < tol, "scheme {scheme:?} n {n}: err {err}");
        }
    }

    #[test]
    fn centered_error_is_second_order() {
        let l = 1.0;
        let errs: Vec<f64> = [8usize, 16, 32]
            .iter()
            .map(|&n| {
                let grid = Grid::periodic_unit(n);
                let mut f = FormField::zeros(&grid, 0, 1);
                let tpl = 2.0 * std::f64::consts::PI / l;
                for s in 0..grid.sites() {
                    let x = grid.coords(s);
                    f.site_mut(s)[0] = (tpl * x[0]).sin() * (tpl * x[1]).cos();
                }
                let df = d_apply(&f, Scheme::Centered2);
                let mut err: f64 = 0.0;
                for s in 0..grid.sites() {
                    let x = grid.coords(s);
                    let expect = tpl * (tpl * x[0]).cos() * (tpl * x[1]).cos();
                    err = err.max((df.comp(s, 0, 0) - expect).abs());
                }
                err
            })
            .collect();
        let r1 = errs[0] / errs[1];
        let r2 = errs[1] / errs[2];
        assert!((3.4..4.6).contains(&r1), "ratio {r1}");
        assert!((3.6..4.4).contains(&r2), "ratio {r2}");
    }

    #[test]
    fn dd_is_zero() {
        for (topology, scheme) in [
            (Topology::Periodic, Scheme::Centered2),
            (Topology::Periodic, Scheme::Spectral),
            (Topology::ChartFrozenBoundary { width: 2 }, Scheme::Centered2),
        ] {
            let grid = Grid::new([6; 4], [0.2; 4], topology).unwrap();
            let mut f = FormField::zeros(&grid, 1, 1);
            fill_random(&mut f, 3);
            let ddf = d_apply(&d_apply(&f, scheme), scheme);
            assert!(
                ddf.sup_norm() < 1e-12 * f.sup_norm().max(1.0) / grid.spacing[0].powi(2),
                "{topology:?} {scheme:?}: {}",
                ddf.sup_norm()
            );
        }
    }

    #[test]
    fn transpose_is_exact_adjoint_flat() {
        for (topology, scheme) in [
            (Topology::Periodic, Scheme::Centered2),
            (Topology::Periodic, Scheme::Spectral),
            (Topology::ChartFrozenBoundary { width: 2 }, Scheme::Centered2),
        ] {
            let grid = Grid::new([5, 6, 5, 5], [0.3, 0.25, 0.2, 0.35], topology).unwrap();
            let mut a = FormField::zeros(&grid, 1, 3);
            let mut b = FormField::zeros(&grid, 2, 3);
            fill_random(&mut a, 11);
            fill_random(&mut b, 12);
            let lhs = d_apply(&a, scheme).dot_flat(&b);
            let rhs = a.dot_flat(&d_transpose_apply(&b, scheme));
            assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
        }
    }

    #[test]
    fn codifferential_adjointness_random_metric() {
        let grid = Grid::new([5, 4, 6, 5], [0.3, 0.25, 0.2, 0.35], Topology::Periodic).unwrap();
        let mf = random_metric_field(&grid, 5);
        for degree in 1..=3usize {
            let mut a = FormField::zeros(&grid, degree - 1, 3);
            let mut b = FormField::zeros(&grid, degree, 3);
            fill_random(&mut a, 21 + degree as u64);
            fill_random(&mut b, 22 + degree as u64);
            let lhs = mass_inner(&d_apply(&a, Scheme::Centered2), &b, &mf);
            let rhs = mass_inner(&a, &codifferential(&b, &mf, Scheme::Centered2), &mf);
            assert_relative_eq!(lhs, rhs, max_relative = 1e-10);
        }
    }

    #[test]
    fn codifferential_constant_is_zero() {
        let grid = Grid::periodic_unit(6);
        let mf = MetricField::euclidean(&grid);
        let mut f = FormField::zeros(&grid, 2, 1);
        for v in &mut f.data {
            *v = 0.3;
        }
        let out = codifferential(&f, &mf, Scheme::Centered2);
        assert!(out.sup_norm() < 1e-13);
    }

    #[test]
    fn codifferential_matches_minus_star_d_star() {
        // flat periodic: d* = -*d* on 2-forms, with the same discrete d
        let grid = Grid::periodic_unit(8);
        let mf = MetricField::euclidean(&grid);
        let e = Metric4::euclidean();
        let mut f = FormField::zeros(&grid, 2, 1);
        fill_random(&mut f, 9);
        let direct = codifferential(&f, &mf, Scheme::Centered2);
        // *f, then d, then * again, then negate
        let mut starf = FormField::zeros(&grid, 2, 1);
        for s in 0..grid.sites() {
            let w = form2_at(&f, s, 0);
            set_form2_at(&mut starf, s, 0, &hodge_star2(&e, &w));
        }
        let dstar = d_apply(&starf, Scheme::Centered2);
        let mut out = FormField::zeros(&grid, 1, 1);
        for s in 0..grid.sites() {
            let t = crate::exterior4::Form3([
                dstar.comp(s, 0, 0),
                dstar.comp(s, 0, 1),
                dstar.comp(s, 0, 2),
                dstar.comp(s, 0, 3),
            ]);
            let v: Form1 = hodge_star3(&e, &t);
            for c in 0..4 {
                *out.comp_mut(s, 0, c) = -v.0[c];
            }
        }
        let mut dev: f64 = 0.0;
        for (x, y) in direct.data.iter().zip(out.data.iter()) {
            dev = dev.max((x - y).abs());
        }
        assert!(dev < 1e-11, "d* vs -*d*: {dev}");
    }

    #[test]
    fn integrate_examples() {
        let grid = Grid::periodic_unit(8);
        let mut f = FormField::zeros(&grid, 4, 1);
        for v in &mut f.data {
            *v = 1.0;
        }
        assert_relative_eq!(integrate(&f), 1.0, epsilon = 1e-14);

        for s in 0..grid.sites() {
            let x = grid.coords(s);
            f.site_mut(s)[0] = (2.0 * std::f64::consts::PI * x[0]).sin();
        }
        assert!(integrate(&f).abs() < 1e-13);

        // product of per-axis cos^2: integral = prod(L_i / 2)
        for s in 0..grid.sites() {
            let x = grid.coords(s);
            let mut v = 1.0;
            for a in 0..4 {
                v *= (2.0 * std::f64::consts::PI * x[a]).cos().powi(2);
            }
            f.site_mut(s)[0] = v;
        }
        assert_relative_eq!(integrate(&f), 1.0 / 16.0, epsilon = 1e-13);
    }

    #[test]
    fn discrete_stokes() {
        let grid = Grid::new([6, 5, 4, 7], [0.3, 0.2, 0.25, 0.15], Topology::Periodic).unwrap();
        for scheme in [Scheme::Centered2, Scheme::Spectral] {
            let mut f = FormField::zeros(&grid, 3, 1);
            fill_random(&mut f, 31);
            let df = d_apply(&f, scheme);
            assert!(integrate(&df).abs() < 1e-12);
        }
    }

    #[test]
    fn snapshot_roundtrip() {
        let grid = Grid::chart(6, 2.0, 2);
        let mut f = FormField::zeros(&grid, 2, 3);
        fill_random(&mut f, 17);
        let mut buf = Vec::new();
        write_snapshot(&f, Scheme::Centered2, &mut buf).unwrap();
        let g = read_snapshot(buf.as_slice()).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn frozen_mask() {
        let grid = Grid::chart(6, 2.0, 2);
        let frozen = (0..grid.sites()).filter(|&s| grid.is_frozen(s)).count();
        // interior is the middle 2^4 block
        assert_eq!(grid.sites() - frozen, 16);
        let mut f = FormField::zeros(&grid, 1, 1);
        fill_random(&mut f, 4);
        f.zero_frozen();
        for s in 0..grid.sites() {
            if grid.is_frozen(s) {
                assert!(f.site(s).iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::new([3, 4, 4, 4], [1.0; 4], Topology::Periodic).is_err());
        assert!(Grid::new([4; 4], [0.0, 1.0, 1.0, 1.0], Topology::Periodic).is_err());
        assert!(Grid::new([4; 4], [1.0; 4], Topology::ChartFrozenBoundary { width: 2 }).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn dd_zero_property(seed in 0u64..1000) {
            let grid = Grid::periodic_unit(5);
            let mut f = FormField::zeros(&grid, 0, 2);
            fill_random(&mut f, seed);
            let dd = d_apply(&d_apply(&f, Scheme::Centered2), Scheme::Centered2);
            prop_assert!(dd.sup_norm() < 1e-11);
        }
    }
}
