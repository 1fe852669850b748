//! Cohomological test configurations in the toric encoding.
//!
//! A test configuration for the class of a moment polytope P is encoded by
//! a piecewise-linear convex function f(x) = max_j (<a_j, x> + b_j) on P
//! with rational slopes a_j and real intercepts b_j. The slopes generate
//! the rational fan of the total space; the intercepts are the R-divisor
//! data, so they may be irrational while the total space stays a genuine
//! complex variety. The compactified total space over P^1 is the toric
//! variety of the (n+1)-dimensional polytope
//!     Q_C = { (x, s) : x in P, 0 <= s <= C - f(x) },   C > max_P f,
//! whose top graph facets are the central-fiber components and whose bottom
//! facet is the fiber over infinity.

use num_integer::Integer;
use num_traits::Signed;

use crate::error::{Error, Result};
use crate::lattice;
use crate::polytope::{Facet, MomentPolytope, PolytopeData};
use crate::scalar::{NumberInput, Rational, Scalar};

/// One linear piece <a, x> + b with rational slope.
#[derive(Debug, Clone)]
pub struct Piece<S> {
    pub slope: Vec<Rational>,
    pub intercept: S,
}

/// A validated PL convex function on a moment polytope.
#[derive(Debug, Clone)]
pub struct TestConfigPL<S: Scalar> {
    base: MomentPolytope<S>,
    pieces: Vec<Piece<S>>,
}

/// Central fiber combinatorics: one component per active piece.
#[derive(Debug, Clone)]
pub struct CentralFiber<S> {
    pub components: Vec<FiberComponent<S>>,
    pub reduced: bool,
}

#[derive(Debug, Clone)]
pub struct FiberComponent<S> {
    pub piece: usize,
    /// Primitive inner normal of the graph facet in Z^{n+1}.
    pub graph_normal: Vec<i64>,
    /// Multiplicity: the smallest positive integer with m a_j integral.
    pub multiplicity: i64,
    /// Lattice volume of the graph facet (equals vol(R_j)/m_j).
    pub lattice_volume: S,
}

/// Labels for the facets of the compactified total space polytope.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TotalFacet {
    /// s = 0, the fiber over infinity; always reduced.
    Bottom,
    /// Graph facet of piece j, a central-fiber component.
    Top(usize),
    /// Facet of P crossed with the fiber direction.
    Vertical(usize),
}

/// The polytope Q_C together with the facet inventory.
#[derive(Debug, Clone)]
pub struct TotalSpace<S: Scalar> {
    pub polytope: MomentPolytope<S>,
    pub labels: Vec<TotalFacet>,
    pub twist: S,
}

impl<S: Scalar> TestConfigPL<S> {
    /// Validate and normalize PL data: duplicate pieces are merged and
    /// pieces that never attain the max on a set of positive measure are
    /// removed.
    pub fn new(base: MomentPolytope<S>, pieces: Vec<Piece<S>>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::Validation("test configuration needs pieces".into()));
        }
        let n = base.dim();
        for p in &pieces {
            if p.slope.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: p.slope.len(),
                });
            }
        }
        // Exact duplicates collapse; for equal slopes only the largest
        // intercept can be active.
        let mut merged: Vec<Piece<S>> = Vec::new();
        for p in pieces {
            if let Some(q) = merged.iter_mut().find(|q| q.slope == p.slope) {
                if p.intercept > q.intercept {
                    q.intercept = p.intercept;
                }
            } else {
                merged.push(p);
            }
        }
        let tc = Self {
            base,
            pieces: merged,
        };
        let active: Vec<bool> = (0..tc.pieces.len())
            .map(|j| tc.active_region(j).is_ok())
            .collect();
        let pieces: Vec<Piece<S>> = tc
            .pieces
            .into_iter()
            .zip(&active)
            .filter(|(_, &a)| a)
            .map(|(p, _)| p)
            .collect();
        if pieces.is_empty() {
            return Err(Error::Validation(
                "no piece attains the maximum on positive measure".into(),
            ));
        }
        Ok(Self {
            base: tc.base,
            pieces,
        })
    }

    /// The trivial configuration f = 0.
    pub fn trivial(base: MomentPolytope<S>) -> Self {
        let n = base.dim();
        Self {
            base,
            pieces: vec![Piece {
                slope: vec![<Rational as num_traits::Zero>::zero(); n],
                intercept: S::zero(),
            }],
        }
    }

    pub fn base(&self) -> &MomentPolytope<S> {
        &self.base
    }

    pub fn pieces(&self) -> &[Piece<S>] {
        &self.pieces
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn is_trivial(&self) -> bool {
        self.pieces.len() == 1
            && self.pieces[0]
                .slope
                .iter()
                .all(num_traits::Zero::is_zero)
    }

    /// Value of f at a scalar point.
    pub fn value(&self, x: &[S]) -> S {
        self.pieces
            .iter()
            .map(|p| piece_value(p, x))
            .reduce(S::max_of)
            .expect("pieces nonempty")
    }

    pub fn value_f64(&self, x: &[f64]) -> f64 {
        self.pieces
            .iter()
            .map(|p| {
                let mut acc = Scalar::to_f64(&p.intercept);
                for (ai, xi) in p.slope.iter().zip(x) {
                    acc += Scalar::to_f64(ai) * xi;
                }
                acc
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// max_P f, attained at a vertex of the active-region decomposition.
    pub fn max_value(&self) -> S {
        self.pieces
            .iter()
            .map(|p| {
                let (num, den) = integer_slope(&p.slope);
                self.base.support_max(&num) / S::from_int(den) + p.intercept.clone()
            })
            .reduce(S::max_of)
            .expect("pieces nonempty")
    }

    pub fn min_value(&self) -> S {
        // min of a convex max is attained at a vertex of the subdivision;
        // the active regions cover P, so minimize each piece on its region.
        let mut best: Option<S> = None;
        for j in 0..self.pieces.len() {
            let region = self.active_region(j).expect("validated piece is active");
            for v in region.vertices() {
                let val = piece_value(&self.pieces[j], &v);
                best = Some(match best {
                    None => val,
                    Some(b) => S::min_of(b, val),
                });
            }
        }
        best.expect("pieces nonempty")
    }

    /// The closure of { x in P : piece j attains the max }, as a polytope.
    /// Errors when the region has empty interior.
    pub fn active_region(&self, j: usize) -> Result<MomentPolytope<S>> {
        let n = self.base.dim();
        let mut facets: Vec<Facet<S>> = self.base.facets().to_vec();
        for (k, other) in self.pieces.iter().enumerate() {
            if k == j {
                continue;
            }
            // <a_j - a_k, x> >= b_k - b_j, scaled to a primitive integer normal.
            let diff: Vec<Rational> = self.pieces[j]
                .slope
                .iter()
                .zip(&other.slope)
                .map(|(a, b)| a - b)
                .collect();
            let (num, den) = integer_slope(&diff);
            if num.iter().all(|&x| x == 0) {
                continue;
            }
            let g = lattice::content(&num);
            let normal = lattice::primitive(&num);
            let rhs =
                (other.intercept.clone() - self.pieces[j].intercept.clone()) * S::from_int(den);
            facets.push(Facet {
                normal,
                support: -(rhs / S::from_int(g)),
            });
        }
        MomentPolytope::new(n, facets)
    }

    /// Central fiber components with multiplicities.
    pub fn central_fiber(&self) -> CentralFiber<S> {
        let components: Vec<FiberComponent<S>> = (0..self.pieces.len())
            .map(|j| {
                let m = multiplicity(&self.pieces[j].slope);
                let graph_normal = graph_normal(&self.pieces[j].slope);
                let region = self.active_region(j).expect("validated piece is active");
                FiberComponent {
                    piece: j,
                    graph_normal,
                    multiplicity: m,
                    lattice_volume: region.volume() / S::from_int(m),
                }
            })
            .collect();
        let reduced = components.iter().all(|c| c.multiplicity == 1);
        CentralFiber {
            components,
            reduced,
        }
    }

    /// Coefficients of the R-divisor D with A = mu* p1* alpha + [D], on the
    /// central-fiber components. The coefficient on component j is
    /// -m_j (b_j + h_P(a_j)): the support-number difference between the
    /// class of Q_C and the pullback class on the graph facet.
    pub fn divisor_decomposition(&self) -> Vec<(usize, S)> {
        (0..self.pieces.len())
            .map(|j| {
                let p = &self.pieces[j];
                let m = multiplicity(&p.slope);
                let (num, den) = integer_slope(&p.slope);
                let h = self.base.support_max(&num) / S::from_int(den);
                (j, -(S::from_int(m) * (p.intercept.clone() + h)))
            })
            .collect()
    }

    /// Base change by t -> t^d: f becomes d f, multiplicities divide by
    /// gcd(m, d).
    pub fn base_change(&self, d: i64) -> Result<Self> {
        if d <= 0 {
            return Err(Error::Validation(
                "base change degree must be positive".into(),
            ));
        }
        let pieces = self
            .pieces
            .iter()
            .map(|p| Piece {
                slope: p
                    .slope
                    .iter()
                    .map(|a| a * Rational::from_integer(d.into()))
                    .collect(),
                intercept: p.intercept.clone() * S::from_int(d),
            })
            .collect();
        Self::new(self.base.clone(), pieces)
    }

    /// The compactified total space polytope Q_C with labelled facets.
    pub fn total_space(&self, twist: S) -> Result<TotalSpace<S>> {
        let n = self.base.dim();
        let max_f = self.max_value();
        if (twist.clone() - max_f).sign(1e-12) != std::cmp::Ordering::Greater {
            return Err(Error::Validation(
                "twist C must exceed max_P f for a relatively Kähler chart".into(),
            ));
        }
        let mut facets = Vec::new();
        let mut labels = Vec::new();
        let mut bottom = vec![0i64; n + 1];
        bottom[n] = 1;
        facets.push(Facet {
            normal: bottom,
            support: S::zero(),
        });
        labels.push(TotalFacet::Bottom);
        for (i, f) in self.base.facets().iter().enumerate() {
            let mut normal = f.normal.clone();
            normal.push(0);
            facets.push(Facet {
                normal,
                support: f.support.clone(),
            });
            labels.push(TotalFacet::Vertical(i));
        }
        for (j, p) in self.pieces.iter().enumerate() {
            let m = multiplicity(&p.slope);
            facets.push(Facet {
                normal: graph_normal(&p.slope),
                support: S::from_int(m) * (twist.clone() - p.intercept.clone()),
            });
            labels.push(TotalFacet::Top(j));
        }
        let (polytope, kept) = MomentPolytope::new_indexed(n + 1, facets)?;
        let labels = kept.into_iter().map(|i| labels[i].clone()).collect();
        Ok(TotalSpace {
            polytope,
            labels,
            twist,
        })
    }

    /// Convert exact data to the floating-point pipeline.
    pub fn to_float(&self) -> TestConfigPL<f64> {
        TestConfigPL {
            base: crate::polytope::MomentPolytope::new(
                self.base.dim(),
                self.base
                    .facets()
                    .iter()
                    .map(|f| Facet {
                        normal: f.normal.clone(),
                        support: Scalar::to_f64(&f.support),
                    })
                    .collect(),
            )
            .expect("float image of valid polytope"),
            pieces: self
                .pieces
                .iter()
                .map(|p| Piece {
                    slope: p.slope.clone(),
                    intercept: Scalar::to_f64(&p.intercept),
                })
                .collect(),
        }
    }
}

fn piece_value<S: Scalar>(p: &Piece<S>, x: &[S]) -> S {
    let mut acc = p.intercept.clone();
    for (a, xi) in p.slope.iter().zip(x) {
        acc = acc + S::from_rational(a) * xi.clone();
    }
    acc
}

/// Common-denominator form of a rational vector: (d*a as integers, d).
fn integer_slope(slope: &[Rational]) -> (Vec<i64>, i64) {
    let den = multiplicity(slope);
    let num: Vec<i64> = slope
        .iter()
        .map(|a| {
            let scaled = a * Rational::from_integer(den.into());
            debug_assert!(scaled.is_integer());
            num_traits::ToPrimitive::to_i64(&scaled.to_integer()).expect("slope overflow")
        })
        .collect();
    (num, den)
}

/// Smallest positive integer m with m * slope integral.
pub(crate) fn multiplicity(slope: &[Rational]) -> i64 {
    slope.iter().fold(1i64, |acc, a| {
        let den = num_traits::ToPrimitive::to_i64(&a.denom().abs()).expect("denominator overflow");
        acc.lcm(&den)
    })
}

/// Primitive inner normal (-m a, -m) of the graph facet of a piece.
fn graph_normal(slope: &[Rational]) -> Vec<i64> {
    let (num, den) = integer_slope(slope);
    let mut v: Vec<i64> = num.iter().map(|&x| -x).collect();
    v.push(-den);
    debug_assert!(lattice::is_primitive(&v));
    v
}

// ---------------------------------------------------------------------------
// JSON schema: {"pieces": [{"a": ["p/q", ...], "b": number}], "base": <polytope>}

/// Parsed configuration, exact when base supports and intercepts all are.
#[derive(Debug, Clone)]
pub enum TestConfigData {
    Exact(TestConfigPL<Rational>),
    Float(TestConfigPL<f64>),
}

impl TestConfigData {
    pub fn from_json(v: &serde_json::Value, base: PolytopeData) -> Result<Self> {
        let pieces_json = v
            .get("pieces")
            .and_then(|p| p.as_array())
            .ok_or_else(|| Error::Validation("test configuration needs \"pieces\"".into()))?;
        let mut slopes = Vec::new();
        let mut intercepts = Vec::new();
        for pj in pieces_json {
            let a_json = pj
                .get("a")
                .and_then(|a| a.as_array())
                .ok_or_else(|| Error::Validation("piece needs slope array \"a\"".into()))?;
            let slope: Vec<Rational> = a_json
                .iter()
                .map(|x| match NumberInput::from_json(x)? {
                    NumberInput::Exact(r) => Ok(r),
                    NumberInput::Inexact(f) => Err(Error::Validation(format!(
                        "slope entries must be rational (the total-space fan is rational); got {f}"
                    ))),
                })
                .collect::<Result<_>>()?;
            let b = NumberInput::from_json(
                pj.get("b")
                    .ok_or_else(|| Error::Validation("piece needs intercept \"b\"".into()))?,
            )?;
            slopes.push(slope);
            intercepts.push(b);
        }
        match (&base, intercepts.iter().all(NumberInput::is_exact)) {
            (PolytopeData::Exact(p), true) => {
                let pieces = slopes
                    .into_iter()
                    .zip(&intercepts)
                    .map(|(slope, b)| Piece {
                        slope,
                        intercept: b.as_rational().expect("checked exact"),
                    })
                    .collect();
                Ok(TestConfigData::Exact(TestConfigPL::new(p.clone(), pieces)?))
            }
            _ => {
                let pieces = slopes
                    .into_iter()
                    .zip(&intercepts)
                    .map(|(slope, b)| Piece {
                        slope,
                        intercept: b.to_f64(),
                    })
                    .collect();
                Ok(TestConfigData::Float(TestConfigPL::new(
                    base.to_float(),
                    pieces,
                )?))
            }
        }
    }

    pub fn to_float(&self) -> TestConfigPL<f64> {
        match self {
            TestConfigData::Exact(tc) => tc.to_float(),
            TestConfigData::Float(tc) => tc.clone(),
        }
    }
}

/// Convenience: PL function on a 1-d polytope from (slope, intercept) pairs
/// given as rational strings.
pub fn pl_from_strs<S: Scalar>(
    base: MomentPolytope<S>,
    pieces: &[(&str, &str)],
) -> Result<TestConfigPL<S>> {
    let parsed = pieces
        .iter()
        .map(|(a, b)| {
            Ok(Piece {
                slope: vec![crate::scalar::parse_rational(a)?],
                intercept: S::from_rational(&crate::scalar::parse_rational(b)?),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    TestConfigPL::new(base, parsed)
}
