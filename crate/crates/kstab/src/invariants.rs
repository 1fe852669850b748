//! Intersection numbers on the toric total space and the non-Archimedean
//! invariants DF, M^NA, E^NA, J^NA.
//!
//! The toric chart produces the twisted class A_C with polytope Q_C; all
//! reported invariants are de-twisted using F^2 = 0, (F . A^n) = V and
//! (K_{X/P^1} . A^{n-1} . F) = -Sbar V / n, so they are independent of the
//! twist C. That independence is re-checked on every call and is exact over
//! rational data. The relative canonical class is K_X - pi* K_{P^1} with
//! K_X = -sum of all facet divisors of Q_C and pi* K_{P^1} = -2 (fiber over
//! infinity), realized by the bottom facet because it is always reduced.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::polytope::{mixed_volume, MomentPolytope};
use crate::scalar::Scalar;
use crate::testconfig::{TestConfigPL, TotalFacet};

/// Intersection number of n+1 nef toric classes on a common fan:
/// the (n+1)!-normalized mixed volume of their polytopes.
pub fn intersection_number<S: Scalar>(classes: &[&MomentPolytope<S>]) -> Result<S> {
    mixed_volume(classes)
}

/// All invariants of a test configuration, reported with the twist used.
#[derive(Debug, Clone, Serialize)]
pub struct InvariantReport {
    pub v: f64,
    pub sbar: f64,
    /// (A^{n+1}) on the total space.
    pub a_top: f64,
    /// (K_{X/P^1} . A^n).
    pub k_a_n: f64,
    pub df: f64,
    /// V^{-1} ((X_{0,red} - X_0) . A^n), non-positive.
    pub correction: f64,
    pub mna: f64,
    pub ena: f64,
    pub jna: f64,
    pub reduced: bool,
    pub twist_c_used: f64,
}

/// Exact-valued invariants; see [`InvariantReport`] for the field meanings.
#[derive(Debug, Clone, PartialEq)]
pub struct Invariants<S> {
    pub v: S,
    pub sbar: S,
    pub a_top: S,
    pub k_a_n: S,
    pub df: S,
    pub correction: S,
    pub mna: S,
    pub ena: S,
    pub jna: S,
    pub reduced: bool,
    pub twist_c_used: S,
}

impl<S: Scalar> Invariants<S> {
    pub fn report(&self) -> InvariantReport {
        InvariantReport {
            v: self.v.to_f64(),
            sbar: self.sbar.to_f64(),
            a_top: self.a_top.to_f64(),
            k_a_n: self.k_a_n.to_f64(),
            df: self.df.to_f64(),
            correction: self.correction.to_f64(),
            mna: self.mna.to_f64(),
            ena: self.ena.to_f64(),
            jna: self.jna.to_f64(),
            reduced: self.reduced,
            twist_c_used: self.twist_c_used.to_f64(),
        }
    }
}

/// Kähler volume V = (alpha^n) = n! vol(P).
pub fn kahler_volume<S: Scalar>(p: &MomentPolytope<S>) -> S {
    S::from_int(factorial(p.dim())) * p.volume()
}

/// (c_1 . alpha^{n-1}) = (n-1)! sum_F latvol(F).
pub fn c1_dot_alpha<S: Scalar>(p: &MomentPolytope<S>) -> S {
    S::from_int(factorial(p.dim() - 1)) * p.boundary_lattice_volume()
}

/// Mean scalar curvature Sbar = n (c_1 . alpha^{n-1}) / (alpha^n).
pub fn mean_scalar_curvature<S: Scalar>(p: &MomentPolytope<S>) -> S {
    S::from_int(p.dim() as i64) * c1_dot_alpha(p) / kahler_volume(p)
}

pub fn na_invariants<S: Scalar>(tc: &TestConfigPL<S>, twist: S) -> Result<Invariants<S>> {
    let inv = na_invariants_at(tc, twist.clone())?;
    // Twist invariance is a sharp internal correctness test: recompute at
    // C + 1 and compare everything except the twist record.
    let other = na_invariants_at(tc, twist + S::one())?;
    let tol = 1e-10
        * [&inv.a_top, &inv.k_a_n, &inv.jna, &inv.v]
            .iter()
            .map(|s| s.to_f64().abs())
            .fold(1.0, f64::max);
    for (a, b, name) in [
        (&inv.a_top, &other.a_top, "A_top"),
        (&inv.k_a_n, &other.k_a_n, "K_A_n"),
        (&inv.df, &other.df, "DF"),
        (&inv.correction, &other.correction, "correction"),
        (&inv.mna, &other.mna, "M^NA"),
        (&inv.ena, &other.ena, "E^NA"),
        (&inv.jna, &other.jna, "J^NA"),
    ] {
        if (a.clone() - b.clone()).sign(tol) != std::cmp::Ordering::Equal {
            return Err(Error::Inconsistency(format!(
                "{name} depends on the twist: {a} vs {b}"
            )));
        }
    }
    Ok(inv)
}

fn na_invariants_at<S: Scalar>(tc: &TestConfigPL<S>, twist: S) -> Result<Invariants<S>> {
    let p = tc.base();
    let n = p.dim();
    let np1 = S::from_int(n as i64 + 1);
    let v = kahler_volume(p);
    let sbar = mean_scalar_curvature(p);
    let total = tc.total_space(twist.clone())?;
    let q = &total.polytope;

    // (A^{n+1}) = (n+1)! vol(Q_C) - (n+1) C V.
    let a_top =
        S::from_int(factorial(n + 1)) * q.volume() - np1.clone() * twist.clone() * v.clone();

    // (K_{X/P^1} . A^n) = -sum_F n! latvol(Q_C, F) + 2V + C Sbar V.
    let n_fact = S::from_int(factorial(n));
    let k_a_n = -(n_fact.clone() * q.boundary_lattice_volume())
        + S::from_int(2) * v.clone()
        + twist.clone() * sbar.clone() * v.clone();

    let df = sbar.clone() / np1.clone() * a_top.clone() / v.clone() + k_a_n.clone() / v.clone();

    // Correction: V^{-1} sum_j (1 - m_j) n! latvol(top_j) over the graph facets.
    let fiber = tc.central_fiber();
    let mut correction = S::zero();
    for (idx, label) in total.labels.iter().enumerate() {
        if let TotalFacet::Top(j) = label {
            let m = fiber.components[*j].multiplicity;
            correction =
                correction + S::from_int(1 - m) * n_fact.clone() * q.facet_lattice_volume(idx)?;
        }
    }
    correction = correction / v.clone();

    let mna = df.clone() + correction.clone();
    let ena = a_top.clone() / (np1 * v.clone());

    // (A . beta^n) with beta the pullback class: mixed volume against the
    // trivial-configuration prism, de-twisted by C V + n C'' V.
    let prism_twist = S::one();
    let prism = TestConfigPL::trivial(p.clone()).total_space(prism_twist.clone())?;
    let mut slots: Vec<&MomentPolytope<S>> = vec![q];
    for _ in 0..n {
        slots.push(&prism.polytope);
    }
    let mixed = mixed_volume(&slots)?;
    let a_beta_n =
        mixed - twist.clone() * v.clone() - S::from_int(n as i64) * prism_twist * v.clone();
    let jna = a_beta_n / v.clone() - ena.clone();

    Ok(Invariants {
        v,
        sbar,
        a_top,
        k_a_n,
        df,
        correction,
        mna,
        ena,
        jna,
        reduced: fiber.reduced,
        twist_c_used: twist,
    })
}

/// De-twisted intersection number (A_0 . ... . A_n) of n+1 test
/// configuration classes over bases of equal dimension n:
/// MV(Q_{C_0}, ..., Q_{C_n}) - sum_i C_i MV_n(bases other than i).
pub fn class_intersection<S: Scalar>(classes: &[(&TestConfigPL<S>, S)]) -> Result<S> {
    let Some((first, _)) = classes.first() else {
        return Err(Error::Validation("class_intersection of empty list".into()));
    };
    let n = first.dim();
    if classes.len() != n + 1 {
        return Err(Error::Validation(format!(
            "need n+1 = {} classes, got {}",
            n + 1,
            classes.len()
        )));
    }
    let totals: Vec<_> = classes
        .iter()
        .map(|(tc, c)| tc.total_space(c.clone()))
        .collect::<Result<Vec<_>>>()?;
    let polys: Vec<&MomentPolytope<S>> = totals.iter().map(|t| &t.polytope).collect();
    let mut value = mixed_volume(&polys)?;
    for i in 0..=n {
        let others: Vec<&MomentPolytope<S>> = classes
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, (tc, _))| tc.base())
            .collect();
        let fiber_term = if n == 0 { S::one() } else { mixed_volume(&others)? };
        value = value - classes[i].1.clone() * fiber_term;
    }
    Ok(value)
}

fn factorial(k: usize) -> i64 {
    (1..=k as i64).product::<i64>().max(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polytope::{box_polytope, interval, simplex, Facet, MomentPolytope};
    use crate::scalar::{parse_rational, Rational};
    use crate::testconfig::pl_from_strs;

    fn rat(s: &str) -> Rational {
        parse_rational(s).unwrap()
    }

    fn unit_interval() -> MomentPolytope<Rational> {
        interval(rat("0"), rat("1")).unwrap()
    }

    fn step_tc() -> TestConfigPL<Rational> {
        pl_from_strs(unit_interval(), &[("0", "0"), ("1", "-1/2")]).unwrap()
    }

    /// Boundary-minus-mean oracle for M^NA on toric data:
    /// n! ( int_{dP} f dsigma - Sbar int_P f dmu ) / V, by quadrature.
    fn mna_oracle_1d(tc: &TestConfigPL<Rational>, samples: usize) -> f64 {
        let p = tc.base();
        let lo = Scalar::to_f64(&p.support_min(&[1]));
        let hi = Scalar::to_f64(&p.support_max(&[1]));
        let sbar = Scalar::to_f64(&mean_scalar_curvature(p));
        let v = Scalar::to_f64(&kahler_volume(p));
        let boundary = tc.value_f64(&[lo]) + tc.value_f64(&[hi]);
        let mut mean = 0.0;
        for i in 0..samples {
            let x = lo + (hi - lo) * (i as f64 + 0.5) / samples as f64;
            mean += tc.value_f64(&[x]);
        }
        mean *= (hi - lo) / samples as f64;
        (boundary - sbar * mean) / v
    }

    #[test]
    fn sbar_values() {
        assert_eq!(mean_scalar_curvature(&unit_interval()), rat("2"));
        assert_eq!(mean_scalar_curvature(&simplex(2, rat("1")).unwrap()), rat("6"));
        assert_eq!(
            mean_scalar_curvature(&box_polytope(&[rat("1"), rat("1")]).unwrap()),
            rat("4")
        );
    }

    #[test]
    fn trivial_configuration_vanishes() {
        let tc = TestConfigPL::trivial(unit_interval());
        let inv = na_invariants(&tc, rat("1")).unwrap();
        assert_eq!(inv.a_top, rat("0"));
        assert_eq!(inv.k_a_n, rat("0"));
        assert_eq!(inv.df, rat("0"));
        assert_eq!(inv.mna, rat("0"));
        assert_eq!(inv.ena, rat("0"));
        assert_eq!(inv.jna, rat("0"));
        assert!(inv.reduced);
    }

    #[test]
    fn step_function_df_is_quarter() {
        let inv = na_invariants(&step_tc(), rat("1")).unwrap();
        assert_eq!(inv.v, rat("1"));
        assert_eq!(inv.sbar, rat("2"));
        assert_eq!(inv.df, rat("1/4"));
        assert_eq!(inv.mna, rat("1/4"));
        assert_eq!(inv.correction, rat("0"));
        // E^NA = -n! int f / V = -1/8, J^NA = n! int (f - min f) / V = 1/8.
        assert_eq!(inv.ena, rat("-1/8"));
        assert_eq!(inv.jna, rat("1/8"));
        // Boundary-minus-mean oracle agreement.
        let oracle = mna_oracle_1d(&step_tc(), 400_000);
        assert!((oracle - 0.25).abs() < 1e-5);
    }

    #[test]
    fn intersection_number_prism_cases() {
        // Trivial tc: (A_C^{n+1}) = (n+1)! C vol(P) = (n+1) C V.
        let tc = TestConfigPL::trivial(unit_interval());
        let q = tc.total_space(rat("3")).unwrap().polytope;
        let top = intersection_number(&[&q, &q]).unwrap();
        assert_eq!(top, rat("6")); // 2 * 3 * V, V = 1

        // (F . A^n) = V: the fiber restriction is alpha, realized by the
        // bottom facet lattice volume.
        let ts = step_tc().total_space(rat("1")).unwrap();
        let bottom_idx = ts
            .labels
            .iter()
            .position(|l| *l == TotalFacet::Bottom)
            .unwrap();
        assert_eq!(ts.polytope.facet_lattice_volume(bottom_idx).unwrap(), rat("1"));

        // P^1 step example: (A_C^2) = 2 * 7/8 = 7/4.
        let q = ts.polytope;
        assert_eq!(intersection_number(&[&q, &q]).unwrap(), rat("7/4"));
    }

    #[test]
    fn nonreduced_gap_and_base_change() {
        let tc = pl_from_strs(unit_interval(), &[("0", "0"), ("1/2", "-1/4")]).unwrap();
        let inv = na_invariants(&tc, rat("1")).unwrap();
        assert!(!inv.reduced);
        assert_eq!(inv.mna, rat("1/8"));
        assert_eq!(inv.correction, rat("-1/4"));
        assert_eq!(inv.df, rat("3/8"));
        assert!(inv.mna < inv.df);

        // M^NA doubles under base change by 2, exactly.
        let doubled = tc.base_change(2).unwrap();
        let inv2 = na_invariants(&doubled, rat("2")).unwrap();
        assert_eq!(inv2.mna, rat("1/4"));
        assert_eq!(inv2.mna, inv.mna * rat("2"));
        // After reduction DF = M^NA.
        assert_eq!(inv2.df, inv2.mna);
    }

    #[test]
    fn twist_invariance_exact() {
        let tc = step_tc();
        let a = na_invariants(&tc, rat("1")).unwrap();
        let b = na_invariants(&tc, rat("17/3")).unwrap();
        assert_eq!(a.df, b.df);
        assert_eq!(a.mna, b.mna);
        assert_eq!(a.ena, b.ena);
        assert_eq!(a.jna, b.jna);
        assert_eq!(a.a_top, b.a_top);
        assert_eq!(a.k_a_n, b.k_a_n);
        assert_ne!(a.twist_c_used, b.twist_c_used);
    }

    #[test]
    fn futaki_vanishes_for_linear_on_p1_and_p2() {
        // Product configurations from one-parameter subgroups: integer slopes.
        for a in ["-2", "-1", "1", "2"] {
            let tc = pl_from_strs(unit_interval(), &[(a, "0")]).unwrap();
            let inv = na_invariants(&tc, rat("10")).unwrap();
            assert_eq!(inv.df, rat("0"), "slope {a} on P^1");
            assert_eq!(inv.mna, rat("0"));
        }
        let p2 = simplex(2, rat("1")).unwrap();
        for (ax, ay) in [(1i64, 0i64), (0, 1), (-1, -1), (2, 1)] {
            let tc = TestConfigPL::new(
                p2.clone(),
                vec![crate::testconfig::Piece {
                    slope: vec![
                        Rational::from_integer(ax.into()),
                        Rational::from_integer(ay.into()),
                    ],
                    intercept: rat("0"),
                }],
            )
            .unwrap();
            let inv = na_invariants(&tc, rat("10")).unwrap();
            assert_eq!(inv.df, rat("0"), "slope ({ax},{ay}) on P^2");
        }
    }

    #[test]
    fn hirzebruch_f1_has_destabilizing_direction() {
        // F_1 = conv{(0,0),(2,0),(0,1),(1,1)}.
        let f1 = MomentPolytope::new(
            2,
            vec![
                Facet { normal: vec![1, 0], support: rat("0") },
                Facet { normal: vec![0, 1], support: rat("0") },
                Facet { normal: vec![0, -1], support: rat("1") },
                Facet { normal: vec![-1, -1], support: rat("2") },
            ],
        )
        .unwrap();
        assert_eq!(kahler_volume(&f1), rat("3"));
        assert_eq!(mean_scalar_curvature(&f1), rat("10/3"));
        let tc = TestConfigPL::new(
            f1,
            vec![crate::testconfig::Piece {
                slope: vec![rat("-1"), rat("0")],
                intercept: rat("0"),
            }],
        )
        .unwrap();
        let inv = na_invariants(&tc, rat("10")).unwrap();
        assert_eq!(inv.df, rat("-2/27"));
    }

    #[test]
    fn jna_nonnegative_and_oracle() {
        // J^NA = n! int_P (f - min f) / V: check against quadrature.
        for pieces in [
            vec![("0", "0"), ("1", "-1/2")],
            vec![("-1", "0"), ("2", "-1")],
            vec![("1/2", "0")],
        ] {
            let tc = pl_from_strs(unit_interval(), &pieces).unwrap();
            let inv = na_invariants(&tc, rat("7")).unwrap();
            assert!(inv.jna >= rat("0"));
            let samples = 200_000;
            let min_f = Scalar::to_f64(&tc.min_value());
            let mut int = 0.0;
            for i in 0..samples {
                let x = (i as f64 + 0.5) / samples as f64;
                int += tc.value_f64(&[x]) - min_f;
            }
            int /= samples as f64;
            assert!((Scalar::to_f64(&inv.jna) - int).abs() < 1e-5);
        }
    }

    #[test]
    fn class_intersection_mixed() {
        // (A . beta) on P^1 with the step configuration and the trivial one:
        // both the mixed-volume route and J^NA reconstruction agree.
        let tc = step_tc();
        let trivial = TestConfigPL::trivial(unit_interval());
        let mixed = class_intersection(&[(&tc, rat("1")), (&trivial, rat("2"))]).unwrap();
        // J^NA = (A . beta)/V - E^NA => (A . beta) = V (J^NA + E^NA) = 0.
        assert_eq!(mixed, rat("0"));
        // Pure power through class_intersection matches A_top.
        let top = class_intersection(&[(&tc, rat("1")), (&tc, rat("1"))]).unwrap();
        let inv = na_invariants(&tc, rat("1")).unwrap();
        assert_eq!(top, inv.a_top);
    }

    #[test]
    fn float_pipeline_matches_exact() {
        let tc = step_tc();
        let exact = na_invariants(&tc, rat("1")).unwrap();
        let float = na_invariants(&tc.to_float(), 1.0).unwrap();
        assert!((float.df - Scalar::to_f64(&exact.df)).abs() < 1e-12);
        assert!((float.jna - Scalar::to_f64(&exact.jna)).abs() < 1e-12);
        assert!((float.mna - Scalar::to_f64(&exact.mna)).abs() < 1e-12);
    }

    #[test]
    fn p1xp1_transcendental_class() {
        // [0,1] x [0, sqrt2]: product cscK class, linear directions balance.
        let p = box_polytope(&[1.0, std::f64::consts::SQRT_2]).unwrap();
        let sbar = mean_scalar_curvature(&p);
        assert!((sbar - (2.0 + std::f64::consts::SQRT_2)).abs() < 1e-12);
        for (ax, ay) in [(1i64, 0i64), (0, 1), (1, 1), (-1, 1)] {
            let tc = TestConfigPL::new(
                p.clone(),
                vec![crate::testconfig::Piece {
                    slope: vec![
                        Rational::from_integer(ax.into()),
                        Rational::from_integer(ay.into()),
                    ],
                    intercept: 0.0,
                }],
            )
            .unwrap();
            let inv = na_invariants(&tc, 10.0).unwrap();
            assert!(
                inv.df.abs() < 1e-9,
                "linear ({ax},{ay}) on the transcendental product: DF = {}",
                inv.df
            );
        }
    }
}
