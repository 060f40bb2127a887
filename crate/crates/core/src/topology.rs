//! Characteristic-class and representation-ring arithmetic for the
//! gauge-fixed linearisation: index formulas, Pontryagin feasibility bounds,
//! and Spin(4) = SU(2)+ x SU(2)- character identities.

use num_rational::Rational64;
use num_traits::{One, Zero};
use serde::Serialize;

/// Euler characteristic and signature of a closed oriented 4-manifold.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TopoData {
    pub chi: i64,
    pub tau: i64,
}

impl TopoData {
    pub fn new(chi: i64, tau: i64) -> Self {
        TopoData { chi, tau }
    }
}

/// Index of the gauge-fixed linearisation: `-5 chi - 7 tau`.
pub fn index(d: TopoData) -> i64 {
    -5 * d.chi - 7 * d.tau
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct PontryaginReport {
    pub chi: i64,
    pub tau: i64,
    /// `p1` of the self-dual bundle: `2 chi + 3 tau`.
    pub p1: i64,
    /// Energy lower bound, as the integer multiple of `pi^2` in `8 pi^2 p1`.
    pub energy_bound_pi2: i64,
    /// A definite connection forces `p1 > 0`.
    pub definite_connection_feasible: bool,
    /// Strict Hitchin-Thorpe inequality `2 chi > 3 |tau|`.
    pub hitchin_thorpe_feasible: bool,
    pub index: i64,
}

pub fn p1_and_bounds(d: TopoData) -> PontryaginReport {
    let p1 = 2 * d.chi + 3 * d.tau;
    PontryaginReport {
        chi: d.chi,
        tau: d.tau,
        p1,
        energy_bound_pi2: 8 * p1,
        definite_connection_feasible: p1 > 0,
        hitchin_thorpe_feasible: 2 * d.chi > 3 * d.tau.abs(),
        index: index(d),
    }
}

/// A characteristic class of a 4-manifold truncated at degree 4, written on
/// the generators `c2(S+)` and `p1(X)`: `rank + a c2 + b p1`.
#[derive(Clone, Copy, Debug, PartialEq)]
struct ClassPoly {
    rank: Rational64,
    c2: Rational64,
    p1: Rational64,
}

impl ClassPoly {
    fn mul(self, other: ClassPoly) -> ClassPoly {
        // degree-8 terms vanish on a 4-manifold
        ClassPoly {
            rank: self.rank * other.rank,
            c2: self.rank * other.c2 + other.rank * self.c2,
            p1: self.rank * other.p1 + other.rank * self.p1,
        }
    }

    fn sub_rank(self, r: i64) -> ClassPoly {
        ClassPoly {
            rank: self.rank - Rational64::from_integer(r),
            ..self
        }
    }

    /// Evaluate the degree-4 part with the integral substitutions
    /// `int c2(S+) = -(2 chi + 3 tau)/4` and `int p1(X) = 3 tau`.
    fn integrate(self, d: TopoData) -> Rational64 {
        let int_c2 = -Rational64::new(2 * d.chi + 3 * d.tau, 4);
        let int_p1 = Rational64::from_integer(3 * d.tau);
        self.c2 * int_c2 + self.p1 * int_p1
    }
}

/// Recompute the index through the A-hat / Chern-character pipeline:
/// `ch(S+) = 2 - c2`, `ch(S2+) = ch(S+)^2 - 1`, `ch(S3+) = ch(S+)(ch(S2+) - 1)`,
/// `ind = -int (1 - p1/24) ch(S3+)`.
pub fn index_via_characters(d: TopoData) -> i64 {
    let a_hat = ClassPoly {
        rank: Rational64::one(),
        c2: Rational64::zero(),
        p1: -Rational64::new(1, 24),
    };
    let ch_s1 = ClassPoly {
        rank: Rational64::from_integer(2),
        c2: -Rational64::one(),
        p1: Rational64::zero(),
    };
    let ch_s2 = ch_s1.mul(ch_s1).sub_rank(1);
    let ch_s3 = ch_s1.mul(ch_s2.sub_rank(1));
    let total = a_hat.mul(ch_s3).integrate(d);
    let ind = -total;
    assert!(ind.is_integer(), "index pipeline must produce an integer");
    ind.to_integer()
}

/// Character of a virtual Spin(4) representation as a Laurent polynomial in
/// the maximal-torus variables `x` (SU(2)+) and `y` (SU(2)-). Exponents run
/// over integer weights, coefficients are integers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CharPoly {
    /// max |exponent| in x and y
    mx: i64,
    my: i64,
    /// dense coefficients, row-major over (x-exponent, y-exponent)
    coeff: Vec<i64>,
}

impl CharPoly {
    fn zero_with(mx: i64, my: i64) -> Self {
        let n = ((2 * mx + 1) * (2 * my + 1)) as usize;
        CharPoly {
            mx,
            my,
            coeff: vec![0; n],
        }
    }

    fn slot(&self, ex: i64, ey: i64) -> usize {
        ((ex + self.mx) * (2 * self.my + 1) + (ey + self.my)) as usize
    }

    pub fn get(&self, ex: i64, ey: i64) -> i64 {
        if ex.abs() > self.mx || ey.abs() > self.my {
            0
        } else {
            self.coeff[self.slot(ex, ey)]
        }
    }

    fn set(&mut self, ex: i64, ey: i64, v: i64) {
        let s = self.slot(ex, ey);
        self.coeff[s] = v;
    }

    pub fn one() -> Self {
        let mut p = CharPoly::zero_with(0, 0);
        p.set(0, 0, 1);
        p
    }

    /// Character of the irreducible `S^a_+ (x) S^b_-` (dimension (a+1)(b+1)):
    /// exponents `-a, -a+2, ..., a` in x times the same pattern in y.
    pub fn irreducible(a: i64, b: i64) -> Self {
        assert!(a >= 0 && b >= 0);
        let mut p = CharPoly::zero_with(a, b);
        let mut ex = -a;
        while ex <= a {
            let mut ey = -b;
            while ey <= b {
                p.set(ex, ey, 1);
                ey += 2;
            }
            ex += 2;
        }
        p
    }

    pub fn dim(&self) -> i64 {
        self.coeff.iter().sum()
    }

    pub fn add(&self, other: &CharPoly) -> CharPoly {
        let mx = self.mx.max(other.mx);
        let my = self.my.max(other.my);
        let mut out = CharPoly::zero_with(mx, my);
        for ex in -mx..=mx {
            for ey in -my..=my {
                out.set(ex, ey, self.get(ex, ey) + other.get(ex, ey));
            }
        }
        out
    }

    pub fn mul(&self, other: &CharPoly) -> CharPoly {
        let mx = self.mx + other.mx;
        let my = self.my + other.my;
        let mut out = CharPoly::zero_with(mx, my);
        for e1 in -self.mx..=self.mx {
            for f1 in -self.my..=self.my {
                let c1 = self.get(e1, f1);
                if c1 == 0 {
                    continue;
                }
                for e2 in -other.mx..=other.mx {
                    for f2 in -other.my..=other.my {
                        let c2 = other.get(e2, f2);
                        if c2 == 0 {
                            continue;
                        }
                        let s = out.slot(e1 + e2, f1 + f2);
                        out.coeff[s] += c1 * c2;
                    }
                }
            }
        }
        out
    }

    /// Substitute `(x, y) -> (x^2, y^2)`, the power-map character `chi(g^2)`
    /// needed for symmetric/exterior squares.
    fn square_vars(&self) -> CharPoly {
        let mut out = CharPoly::zero_with(2 * self.mx, 2 * self.my);
        for ex in -self.mx..=self.mx {
            for ey in -self.my..=self.my {
                let c = self.get(ex, ey);
                if c != 0 {
                    out.set(2 * ex, 2 * ey, c);
                }
            }
        }
        out
    }

    /// Character of the symmetric square: `(chi(g)^2 + chi(g^2)) / 2`.
    pub fn sym_square(&self) -> CharPoly {
        let sq = self.mul(self);
        let pw = self.square_vars();
        let sum = sq.add(&pw);
        sum.halve()
    }

    /// Character of the exterior square: `(chi(g)^2 - chi(g^2)) / 2`.
    pub fn ext_square(&self) -> CharPoly {
        let sq = self.mul(self);
        let pw = self.square_vars();
        let diff = sq.add(&pw.neg());
        diff.halve()
    }

    fn neg(&self) -> CharPoly {
        let mut out = self.clone();
        for c in &mut out.coeff {
            *c = -*c;
        }
        out
    }

    fn halve(&self) -> CharPoly {
        let mut out = self.clone();
        for c in &mut out.coeff {
            assert!(*c % 2 == 0);
            *c /= 2;
        }
        out
    }

    /// Weyl symmetry under inverting either torus variable.
    pub fn is_weyl_symmetric(&self) -> bool {
        for ex in -self.mx..=self.mx {
            for ey in -self.my..=self.my {
                if self.get(ex, ey) != self.get(-ex, ey) || self.get(ex, ey) != self.get(ex, -ey) {
                    return false;
                }
            }
        }
        true
    }

    fn is_zero(&self) -> bool {
        self.coeff.iter().all(|&c| c == 0)
    }

    /// Decompose into irreducibles by repeated leading-term peeling.
    /// Returns `(a, b, multiplicity)` entries; panics if the character is
    /// not a genuine (non-virtual) representation.
    pub fn decompose(&self) -> Vec<(i64, i64, i64)> {
        let mut rem = self.clone();
        let mut out = Vec::new();
        while !rem.is_zero() {
            let mut lead: Option<(i64, i64)> = None;
            for ex in (0..=rem.mx).rev() {
                for ey in (0..=rem.my).rev() {
                    if rem.get(ex, ey) != 0 {
                        if let Some((lx, ly)) = lead {
                            if ex > lx || (ex == lx && ey > ly) {
                                lead = Some((ex, ey));
                            }
                        } else {
                            lead = Some((ex, ey));
                        }
                    }
                }
            }
            let (a, b) = lead.expect("nonzero character has a leading term");
            let m = rem.get(a, b);
            assert!(m > 0, "virtual character encountered in decomposition");
            let irr = CharPoly::irreducible(a, b);
            let mut scaled = irr;
            for c in &mut scaled.coeff {
                *c *= m;
            }
            rem = rem.add(&scaled.neg());
            out.push((a, b, m));
        }
        out.sort();
        out.reverse();
        out
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SpinRepItem {
    pub name: &'static str,
    pub lhs_dim: i64,
    pub rhs_dim: i64,
    pub characters_equal: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpinRepReport {
    pub items: Vec<SpinRepItem>,
    pub all_hold: bool,
}

fn sum_chars(parts: &[(i64, i64)]) -> CharPoly {
    let mut acc = CharPoly::zero_with(0, 0);
    for &(a, b) in parts {
        acc = acc.add(&CharPoly::irreducible(a, b));
    }
    acc
}

/// Verify the six Spin(4) representation identities used by the Dirac-operator
/// identification, as exact character-polynomial identities.
pub fn spinrep_check() -> SpinRepReport {
    let s = |a: i64, b: i64| CharPoly::irreducible(a, b);
    let r4 = s(1, 1); // (R^4) (x) C = S+ (x) S-

    let mut items = Vec::new();
    let mut push = |name: &'static str, lhs: CharPoly, rhs: CharPoly| {
        items.push(SpinRepItem {
            name,
            lhs_dim: lhs.dim(),
            rhs_dim: rhs.dim(),
            characters_equal: lhs.add(&rhs.neg()).is_zero()
                && lhs.is_weyl_symmetric()
                && rhs.is_weyl_symmetric(),
        });
    };

    // 1. R^4 (x) C = S+ (x) S-
    push("r4_complexified", r4.clone(), s(1, 1));
    // 2. Lambda+ (x) C = S2+, via the exterior square of R^4
    let lambda2_r4 = r4.ext_square();
    push(
        "lambda_plus_is_s2",
        lambda2_r4,
        s(2, 0).add(&s(0, 2)),
    );
    // 3. S2_0(S2+) = S4+
    let s2s2 = s(2, 0).sym_square();
    push("sym2_traceless", s2s2, sum_chars(&[(4, 0), (0, 0)]));
    // 4. S3+ (x) S+ = S4+ + S2+
    push(
        "s3_tensor_s1",
        s(3, 0).mul(&s(1, 0)),
        sum_chars(&[(4, 0), (2, 0)]),
    );
    // 5. (S+ (x) S-) (x) S2+ = (S+ (x) S-) + (S3+ (x) S-)
    push(
        "one_forms_tensor_lambda_plus",
        s(1, 1).mul(&s(2, 0)),
        sum_chars(&[(1, 1), (3, 1)]),
    );
    // 6. (S+ (x) S-) (x) (S3+ (x) S-) = S4+ S2- + S2+ S2- + S4+ + S2+
    push(
        "clifford_range",
        s(1, 1).mul(&s(3, 1)),
        sum_chars(&[(4, 2), (2, 2), (4, 0), (2, 0)]),
    );

    let all_hold = items.iter().all(|i| i.characters_equal && i.lhs_dim == i.rhs_dim);
    SpinRepReport { items, all_hold }
}

/// `S+ (x) S+ = C + S2+`, the identity behind `ch(S2+) = ch(S+)^2 - 1`.
pub fn spin_square_identity() -> bool {
    let s1 = CharPoly::irreducible(1, 0);
    let lhs = s1.mul(&s1);
    let rhs = CharPoly::one().add(&CharPoly::irreducible(2, 0));
    lhs.add(&rhs.neg()).is_zero()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_examples() {
        assert_eq!(index(TopoData::new(2, 0)), -10);
        assert_eq!(index(TopoData::new(3, -1)), -8);
        for chi in -5..5 {
            assert_eq!(index(TopoData::new(chi, 0)), -5 * chi);
        }
    }

    #[test]
    fn character_pipeline_matches_index() {
        assert_eq!(index_via_characters(TopoData::new(2, 0)), -10);
        assert_eq!(index_via_characters(TopoData::new(3, -1)), -8);
        for chi in -50..=50 {
            for tau in -50..=50 {
                let d = TopoData::new(chi, tau);
                assert_eq!(index(d), index_via_characters(d));
            }
        }
    }

    #[test]
    fn pontryagin_report_examples() {
        let r = p1_and_bounds(TopoData::new(2, 0));
        assert_eq!(r.p1, 4);
        assert_eq!(r.energy_bound_pi2, 32);
        assert!(r.definite_connection_feasible && r.hitchin_thorpe_feasible);

        let k3 = p1_and_bounds(TopoData::new(24, -16));
        assert_eq!(k3.p1, 0);
        assert!(!k3.definite_connection_feasible);

        let t4 = p1_and_bounds(TopoData::new(0, 0));
        assert!(!t4.definite_connection_feasible);
        assert!(!t4.hitchin_thorpe_feasible);
    }

    #[test]
    fn spin_reps_hold() {
        let report = spinrep_check();
        assert!(report.all_hold, "{report:?}");
        assert_eq!(report.items.len(), 6);
        let item4 = &report.items[3];
        assert_eq!((item4.lhs_dim, item4.rhs_dim), (8, 8));
        let item6 = &report.items[5];
        assert_eq!((item6.lhs_dim, item6.rhs_dim), (32, 32));
        assert!(spin_square_identity());
    }

    #[test]
    fn clebsch_gordan_multiplicity_free() {
        for a in 0..=4i64 {
            for b in 0..=4i64 {
                let prod = CharPoly::irreducible(a, 0).mul(&CharPoly::irreducible(b, 0));
                let dec = prod.decompose();
                let mut expect: Vec<i64> = Vec::new();
                let mut k = (a - b).abs();
                while k <= a + b {
                    expect.push(k);
                    k += 2;
                }
                assert_eq!(dec.len(), expect.len());
                for (x, b2, m) in &dec {
                    assert_eq!(*m, 1);
                    assert_eq!(*b2, 0);
                    assert!(expect.contains(x));
                }
                assert_eq!(prod.dim(), (a + 1) * (b + 1));
            }
        }
    }

    #[test]
    fn char_ring_commutative_associative() {
        let p = CharPoly::irreducible(2, 1);
        let q = CharPoly::irreducible(1, 3);
        let r = CharPoly::irreducible(3, 0);
        assert_eq!(p.mul(&q), q.mul(&p));
        assert_eq!(p.mul(&q).mul(&r), p.mul(&q.mul(&r)));
    }
}
