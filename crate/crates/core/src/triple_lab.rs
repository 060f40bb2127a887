//! Definite triples of 2-forms on the periodic 4-torus: the normalized wedge
//! Gram matrix `Q`, the volume density `mu = (1/3) sum w_i ^ w_i`, the energy
//! `F = int tr(Q^2) mu`, period normalization, the downward gradient flow of
//! `F`, gauge actions, and criticality diagnostics.
//!
//! States are parametrised as `w_a = w + da` with a closed reference triple
//! `w` and a triple of 1-form potentials `a`. The flow direction is
//! `-d*(B_a(w_a))` with `B_a = Q_a - (1/6) tr(Q_a^2) Id`; in the discrete
//! L2(g) metric this is exactly `-(1/4) grad F`, the factor 4 being a fixed
//! time rescale.

use crate::exterior4::{
    self, is_positive_definite3, reconstruct_metric, sym3_eigenvalues, Form2, Form4, Frame3,
    Metric4,
};
use crate::flow::{FlowConfig, FlowOutcome, TrajRow, Trajectory};
use crate::lattice::{
    self, band_limited_field, codifferential, d_apply, form2_at, integrate_wedge22, mass_inner,
    set_form2_at, FormField, Grid, MetricField, Scheme, SiteGeom, Topology,
};
use nalgebra::Matrix3;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TripleError {
    #[error("state escaped the definite locus at {count} sites (first: {first:?})")]
    Escaped { count: usize, first: Option<usize> },
    #[error("period Gram matrix is not positive definite")]
    IndefinitePeriod,
    #[error("volume density vanishes at {count} sites")]
    DegenerateVolume { count: usize },
    #[error("line search failed after {halvings} halvings")]
    StepFailure { halvings: usize },
    #[error("reference triple is not discretely closed (residual {residual:.3e})")]
    ReferenceNotClosed { residual: f64 },
    #[error("triple states require a periodic grid")]
    NotPeriodic,
}

/// A definite-triple state: closed reference triple plus 1-form potentials.
#[derive(Clone, Debug)]
pub struct TripleState {
    /// degree 2, rank 3
    pub reference: FormField,
    /// degree 1, rank 3
    pub potential: FormField,
}

impl TripleState {
    pub fn new(reference: FormField, potential: FormField) -> Result<Self, TripleError> {
        if !matches!(reference.grid.topology, Topology::Periodic) {
            return Err(TripleError::NotPeriodic);
        }
        assert_eq!((reference.degree, reference.rank), (2, 3));
        assert_eq!((potential.degree, potential.rank), (1, 3));
        Ok(TripleState {
            reference,
            potential,
        })
    }

    /// Constant standard triple on the unit torus with zero potential.
    pub fn standard(n: usize) -> TripleState {
        let grid = Grid::periodic_unit(n);
        let mut reference = FormField::zeros(&grid, 2, 3);
        let std = Frame3::standard();
        for s in 0..grid.sites() {
            for i in 0..3 {
                set_form2_at(&mut reference, s, i, &std.w[i]);
            }
        }
        TripleState {
            reference,
            potential: FormField::zeros(&grid, 1, 3),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.reference.grid
    }

    /// The current triple `w + da`.
    pub fn omega(&self, scheme: Scheme) -> FormField {
        let mut w = d_apply(&self.potential, scheme);
        w.axpy(1.0, &self.reference);
        w
    }

    /// Checks the reference is discretely closed.
    pub fn validate_reference(&self, scheme: Scheme) -> Result<(), TripleError> {
        let dw = d_apply(&self.reference, scheme);
        let residual = dw.sup_norm();
        if residual > 1e-10 * self.reference.sup_norm().max(1.0) {
            return Err(TripleError::ReferenceNotClosed { residual });
        }
        Ok(())
    }
}

/// Per-site `Q` matrices of a state.
#[derive(Clone, Debug)]
pub struct QField {
    pub grid: Grid,
    pub data: Vec<Matrix3<f64>>,
}

impl QField {
    pub fn sup_deviation_from_identity(&self) -> f64 {
        self.data
            .iter()
            .map(|q| (q - Matrix3::identity()).norm())
            .fold(0.0, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.data
            .iter()
            .map(|q| sym3_eigenvalues(q)[0])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_trace_residual(&self) -> f64 {
        self.data
            .iter()
            .map(|q| (q.trace() - 3.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Pointwise analysis of a triple field: `Q`, `mu`, reconstructed metric,
/// and the escape set.
#[derive(Clone, Debug)]
pub struct TripleAnalysis {
    pub q: QField,
    pub mu: Vec<f64>,
    pub metric: MetricField,
    pub escaped: Vec<usize>,
    pub sup_q_dev: f64,
    pub min_eig_q: f64,
}

impl TripleAnalysis {
    pub fn is_definite(&self) -> bool {
        self.escaped.is_empty()
    }

    pub fn total_volume(&self, grid: &Grid) -> f64 {
        self.mu.iter().sum::<f64>() * grid.cell_volume()
    }
}

struct SiteOut {
    q: Matrix3<f64>,
    mu: f64,
    geom: SiteGeom,
    ok: bool,
}

fn analyze_site(omega: &FormField, s: usize) -> SiteOut {
    let frame = Frame3::new(
        form2_at(omega, s, 0),
        form2_at(omega, s, 1),
        form2_at(omega, s, 2),
    );
    let gram = exterior4::gram_matrix(&frame);
    let mu = gram.trace() / 3.0;
    let fallback = || SiteOut {
        q: Matrix3::identity(),
        mu: 0.0,
        geom: SiteGeom::euclidean(),
        ok: false,
    };
    if !(mu > 0.0) || !is_positive_definite3(&gram) {
        return fallback();
    }
    let q = gram / mu;
    match reconstruct_metric(&frame, Form4(mu)) {
        Ok(metric) => SiteOut {
            q,
            mu,
            geom: SiteGeom::from_metric(&metric),
            ok: true,
        },
        Err(_) => fallback(),
    }
}

/// Pointwise analysis of the current triple, data-parallel over sites.
pub fn analyze(omega: &FormField) -> TripleAnalysis {
    let sites = omega.grid.sites();
    let outs: Vec<SiteOut> = (0..sites)
        .into_par_iter()
        .map(|s| analyze_site(omega, s))
        .collect();
    let mut q = Vec::with_capacity(sites);
    let mut mu = Vec::with_capacity(sites);
    let mut geoms = Vec::with_capacity(sites);
    let mut escaped = Vec::new();
    let mut sup_q_dev: f64 = 0.0;
    let mut min_eig: f64 = f64::INFINITY;
    for (s, o) in outs.into_iter().enumerate() {
        if !o.ok {
            escaped.push(s);
        }
        sup_q_dev = sup_q_dev.max((o.q - Matrix3::identity()).norm());
        min_eig = min_eig.min(sym3_eigenvalues(&o.q)[0]);
        q.push(o.q);
        mu.push(o.mu);
        geoms.push(o.geom);
    }
    TripleAnalysis {
        q: QField {
            grid: omega.grid.clone(),
            data: q,
        },
        mu,
        metric: MetricField {
            grid: omega.grid.clone(),
            geoms,
        },
        escaped,
        sup_q_dev,
        min_eig_q: min_eig,
    }
}

/// Volume density `mu = (1/3) sum w_i ^ w_i` as a 4-form field.
pub fn mu_volume(state: &TripleState, scheme: Scheme) -> FormField {
    let omega = state.omega(scheme);
    let analysis = analyze(&omega);
    let mut out = FormField::zeros(state.grid(), 4, 1);
    for (s, m) in analysis.mu.iter().enumerate() {
        out.site_mut(s)[0] = *m;
    }
    // mu of an escaped site is recomputed raw (it may be <= 0 there)
    for &s in &analysis.escaped {
        let frame = Frame3::new(
            form2_at(&omega, s, 0),
            form2_at(&omega, s, 1),
            form2_at(&omega, s, 2),
        );
        out.site_mut(s)[0] = exterior4::gram_matrix(&frame).trace() / 3.0;
    }
    out
}

/// Per-site `Q`; errors if `mu` vanishes anywhere.
pub fn q_field(state: &TripleState, scheme: Scheme) -> Result<QField, TripleError> {
    let omega = state.omega(scheme);
    let sites = omega.grid.sites();
    let mut data = Vec::with_capacity(sites);
    let mut bad = 0;
    for s in 0..sites {
        let frame = Frame3::new(
            form2_at(&omega, s, 0),
            form2_at(&omega, s, 1),
            form2_at(&omega, s, 2),
        );
        let gram = exterior4::gram_matrix(&frame);
        let mu = gram.trace() / 3.0;
        if mu.abs() < 1e-14 {
            bad += 1;
            data.push(Matrix3::identity());
        } else {
            data.push(gram / mu);
        }
    }
    if bad > 0 {
        return Err(TripleError::DegenerateVolume { count: bad });
    }
    Ok(QField {
        grid: omega.grid.clone(),
        data,
    })
}

/// Discrete energy `F = sum tr(Q^2) mu h^4` of an analyzed state.
pub fn energy_from_analysis(a: &TripleAnalysis, grid: &Grid) -> f64 {
    let cv = grid.cell_volume();
    a.q.data
        .iter()
        .zip(a.mu.iter())
        .map(|(q, mu)| (q * q).trace() * mu)
        .sum::<f64>()
        * cv
}

/// Discrete energy of a state; errors if the state escaped.
pub fn energy_f(state: &TripleState, scheme: Scheme) -> Result<f64, TripleError> {
    let omega = state.omega(scheme);
    let a = analyze(&omega);
    if !a.is_definite() {
        return Err(TripleError::Escaped {
            count: a.escaped.len(),
            first: a.escaped.first().copied(),
        });
    }
    Ok(energy_from_analysis(&a, state.grid()))
}

/// Period Gram matrix `G_ij = int w_i ^ w_j` of the current triple.
pub fn period_gram(state: &TripleState, scheme: Scheme) -> Matrix3<f64> {
    let omega = state.omega(scheme);
    let mut g = Matrix3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            g[(i, j)] = integrate_wedge22(&omega, &omega, i, j);
        }
    }
    g
}

/// Apply the inverse symmetric square root of the period Gram matrix to the
/// triple; afterwards the period Gram is the identity and the total volume
/// is 1.
pub fn normalize_periods(
    state: &TripleState,
    scheme: Scheme,
) -> Result<TripleState, TripleError> {
    let g = period_gram(state, scheme);
    let g_inv_sqrt = exterior4::sym3_inv_sqrt(&g).ok_or(TripleError::IndefinitePeriod)?;
    let mix_field = |f: &FormField| -> FormField {
        let nc = lattice::ncomp(f.degree);
        let mut out = f.clone();
        for s in 0..f.grid.sites() {
            for c in 0..nc {
                let vals = [f.comp(s, 0, c), f.comp(s, 1, c), f.comp(s, 2, c)];
                for i in 0..3 {
                    *out.comp_mut(s, i, c) =
                        (0..3).map(|j| g_inv_sqrt[(i, j)] * vals[j]).sum();
                }
            }
        }
        out
    };
    Ok(TripleState {
        reference: mix_field(&state.reference),
        potential: mix_field(&state.potential),
    })
}

/// `B(w_a)` as a 2-form field: `B = Q - (1/6) tr(Q^2) Id` applied fibrewise.
pub fn b_omega_field(omega: &FormField, analysis: &TripleAnalysis) -> FormField {
    let mut out = FormField::zeros(&omega.grid, 2, 3);
    for s in 0..omega.grid.sites() {
        let q = &analysis.q.data[s];
        let b = q - Matrix3::identity() * ((q * q).trace() / 6.0);
        let w = [
            form2_at(omega, s, 0),
            form2_at(omega, s, 1),
            form2_at(omega, s, 2),
        ];
        for i in 0..3 {
            let mut acc = Form2::zero();
            for j in 0..3 {
                acc = acc.add(&w[j].scale(b[(i, j)]));
            }
            set_form2_at(&mut out, s, i, &acc);
        }
    }
    out
}

/// Flow direction `-d*(B_a(w_a))` for an analyzed state.
pub fn flow_rhs_from(
    omega: &FormField,
    analysis: &TripleAnalysis,
    scheme: Scheme,
) -> FormField {
    let b = b_omega_field(omega, analysis);
    let mut rhs = codifferential(&b, &analysis.metric, scheme);
    rhs.scale(-1.0);
    rhs
}

/// Flow direction of a state; errors if the state escaped.
pub fn flow_rhs_triples(state: &TripleState, scheme: Scheme) -> Result<FormField, TripleError> {
    let omega = state.omega(scheme);
    let a = analyze(&omega);
    if !a.is_definite() {
        return Err(TripleError::Escaped {
            count: a.escaped.len(),
            first: a.escaped.first().copied(),
        });
    }
    Ok(flow_rhs_from(&omega, &a, scheme))
}

/// Tangent triple of the action of a triple of functions: `(df_1, df_2, df_3)`.
/// Leaves `w_a` unchanged because `dd = 0`.
pub fn gauge_action_functions(f: &FormField, scheme: Scheme) -> FormField {
    assert_eq!((f.degree, f.rank), (0, 3));
    d_apply(f, scheme)
}

/// Tangent triple of the vector-field action: `S_a(v) = (iota_v w_a,i)`.
pub fn gauge_action_vector(omega: &FormField, v: &FormField) -> FormField {
    assert_eq!((v.degree, v.rank), (1, 1));
    let mut out = FormField::zeros(&omega.grid, 1, 3);
    for s in 0..omega.grid.sites() {
        let vv = exterior4::Vec4([
            v.comp(s, 0, 0),
            v.comp(s, 0, 1),
            v.comp(s, 0, 2),
            v.comp(s, 0, 3),
        ]);
        for i in 0..3 {
            let w = form2_at(omega, s, i);
            let contr = exterior4::interior2(&vv, &w);
            for c in 0..4 {
                *out.comp_mut(s, i, c) = contr.0[c];
            }
        }
    }
    out
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct CriticalReport {
    /// L2 norm of `d*(B(w_a))`
    pub codifferential_residual: f64,
    /// L2 norm of `d(B(w_a))`
    pub d_residual: f64,
    /// sup-norm deviation of `Q` from its mean
    pub q_constancy: f64,
    pub sup_q_dev: f64,
}

/// Residuals that vanish at a critical point: `B(w_a)` closed and co-closed,
/// `Q` constant.
pub fn critical_check(state: &TripleState, scheme: Scheme) -> CriticalReport {
    let omega = state.omega(scheme);
    let analysis = analyze(&omega);
    let b = b_omega_field(&omega, &analysis);
    let cod = codifferential(&b, &analysis.metric, scheme);
    let codifferential_residual = mass_inner(&cod, &cod, &analysis.metric).sqrt();
    let db = d_apply(&b, scheme);
    let d_residual = mass_inner(&db, &db, &analysis.metric).sqrt();
    let n = analysis.q.data.len() as f64;
    let mean = analysis.q.data.iter().fold(Matrix3::zeros(), |acc, q| acc + q) / n;
    let q_constancy = analysis
        .q
        .data
        .iter()
        .map(|q| (q - mean).norm())
        .fold(0.0, f64::max);
    CriticalReport {
        codifferential_residual,
        d_residual,
        q_constancy,
        sup_q_dev: analysis.sup_q_dev,
    }
}

/// Band-limited random perturbation potentials: the lowest `shells` Fourier
/// shells, scaled so that `sup_x |da(x)| = amplitude * sup_x |w_ref(x)|`
/// in the flat Frobenius norm.
pub fn seeded_perturbation(
    state: &TripleState,
    seed: u64,
    amplitude: f64,
    shells: i64,
    scheme: Scheme,
) -> FormField {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut a = band_limited_field(state.grid(), 1, 3, shells, &mut rng);
    let da = d_apply(&a, scheme);
    let sup_da = site_frobenius_sup(&da);
    let sup_ref = site_frobenius_sup(&state.reference);
    if sup_da > 0.0 {
        a.scale(amplitude * sup_ref / sup_da);
    }
    a
}

fn site_frobenius_sup(f: &FormField) -> f64 {
    let b = f.block();
    (0..f.grid.sites())
        .map(|s| {
            f.data[s * b..(s + 1) * b]
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max)
}

/// Downward gradient flow with Armijo backtracking; `F` strictly decreases
/// at every accepted step and steps are rejected if any site leaves the
/// definite locus.
pub fn run_flow_triples(
    state: &TripleState,
    cfg: &FlowConfig,
) -> Result<(TripleState, Trajectory), TripleError> {
    let scheme = cfg.scheme;
    let grid = state.grid().clone();
    let cv = grid.cell_volume();
    let mut potential = state.potential.clone();
    let mut omega = state.omega(scheme);
    let mut analysis = analyze(&omega);
    if !analysis.is_definite() {
        return Err(TripleError::Escaped {
            count: analysis.escaped.len(),
            first: analysis.escaped.first().copied(),
        });
    }
    let mut f_val = energy_from_analysis(&analysis, &grid);

    let h2 = grid
        .spacing
        .iter()
        .map(|h| h * h)
        .fold(f64::INFINITY, f64::min);
    let step0 = cfg.step_factor * h2;
    let cap = step0 * cfg.step_cap_factor;
    let mut step = step0;

    let mut rows = vec![TrajRow {
        step: 0,
        t: 0.0,
        energy: f_val,
        vol: analysis.mu.iter().sum::<f64>() * cv,
        sup_q_dev: analysis.sup_q_dev,
        min_eig_q: analysis.min_eig_q,
        step_size: 0.0,
        ls_halvings: 0,
        extras: None,
    }];

    if analysis.sup_q_dev < cfg.tol_sup_q {
        return Ok((
            TripleState {
                reference: state.reference.clone(),
                potential,
            },
            Trajectory {
                rows,
                outcome: FlowOutcome::Converged,
            },
        ));
    }

    let mut t = 0.0;
    let mut outcome = FlowOutcome::StepBudgetExhausted;
    for k in 1..=cfg.max_steps {
        let rhs = flow_rhs_from(&omega, &analysis, scheme);
        let rhs_norm2 = mass_inner(&rhs, &rhs, &analysis.metric);
        let d_rhs = d_apply(&rhs, scheme);
        let mut halvings = 0;
        let (next_omega, next_analysis, next_f) = loop {
            let mut trial = omega.clone();
            trial.axpy(step, &d_rhs);
            let trial_analysis = analyze(&trial);
            if trial_analysis.is_definite() {
                let trial_f = energy_from_analysis(&trial_analysis, &grid);
                // rhs = -(1/4) grad F, so the predicted decrease is 4 s |rhs|^2
                if trial_f <= f_val - cfg.armijo_c1 * step * 4.0 * rhs_norm2 {
                    break (trial, trial_analysis, trial_f);
                }
            }
            step *= 0.5;
            halvings += 1;
            if halvings > cfg.max_halvings {
                return Err(TripleError::StepFailure { halvings });
            }
        };
        potential.axpy(step, &rhs);
        omega = next_omega;
        analysis = next_analysis;
        f_val = next_f;
        t += step;
        rows.push(TrajRow {
            step: k,
            t,
            energy: f_val,
            vol: analysis.mu.iter().sum::<f64>() * cv,
            sup_q_dev: analysis.sup_q_dev,
            min_eig_q: analysis.min_eig_q,
            step_size: step,
            ls_halvings: halvings,
            extras: None,
        });
        if analysis.sup_q_dev < cfg.tol_sup_q {
            outcome = FlowOutcome::Converged;
            break;
        }
        if halvings == 0 {
            step = (step * cfg.step_growth).min(cap);
        }
    }

    Ok((
        TripleState {
            reference: state.reference.clone(),
            potential,
        },
        Trajectory { rows, outcome },
    ))
}

/// Standard normalized start for experiments: the period-normalized standard
/// triple on an `n^4` unit torus, perturbed by a seeded band-limited
/// potential of the given relative amplitude.
pub fn perturbed_standard_state(
    n: usize,
    seed: u64,
    amplitude: f64,
    scheme: Scheme,
) -> Result<TripleState, TripleError> {
    let base = TripleState::standard(n);
    let mut state = normalize_periods(&base, scheme)?;
    let a = seeded_perturbation(&state, seed, amplitude, 3, scheme);
    state.potential = a;
    Ok(state)
}
