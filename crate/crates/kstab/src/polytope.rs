//! Facet-presented moment polytopes: volumes, facet lattice volumes, mixed
//! volumes and Delzant certificates.
//!
//! A polytope is P = { x : <x, nu_F> >= -c_F } with primitive integer inner
//! normals nu_F and scalar supports c_F. Intersection numbers of toric
//! classes are n!-normalized mixed volumes, so the class of P on the toric
//! n-fold has (alpha^n) = n! vol(P); the standard simplex then pairs to 1.
//!
//! Volumes are computed by the support decomposition
//!     vol_m(P) = (1/m) sum_F c_F latvol(F),
//! valid for any origin, where latvol is the (m-1)-volume of the facet in
//! the lattice of its affine hyperplane. Facets recurse through a unimodular
//! parametrisation of that hyperplane, so everything stays exact over
//! rational supports. Mixed volumes polarise Minkowski-sum volumes.

use std::cmp::Ordering;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice;
use crate::scalar::{NumberInput, Rational, Scalar};

/// Relative tolerance for sign decisions on the floating-point path.
const FLOAT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Facet<S> {
    pub normal: Vec<i64>,
    pub support: S,
}

#[derive(Debug, Clone)]
pub struct MomentPolytope<S: Scalar> {
    dim: usize,
    facets: Vec<Facet<S>>,
    volume: S,
    facet_latvols: Vec<S>,
}

pub type RationalPolytope = MomentPolytope<Rational>;
pub type FloatPolytope = MomentPolytope<f64>;

/// Delzant check result; on failure carries the offending vertex.
#[derive(Debug, Clone, Serialize)]
pub struct DelzantCertificate {
    pub delzant: bool,
    pub failing_vertex: Option<Vec<f64>>,
    pub tight_facets: Option<Vec<usize>>,
    pub normal_det: Option<i64>,
}

impl<S: Scalar> MomentPolytope<S> {
    /// Build a polytope from facet data, validating the invariants:
    /// primitive normals, boundedness, nonempty interior. Redundant facets
    /// are removed; duplicates of a hyperplane keep the tightest support.
    pub fn new(dim: usize, facets: Vec<Facet<S>>) -> Result<Self> {
        Ok(Self::new_indexed(dim, facets)?.0)
    }

    /// As [`MomentPolytope::new`], also returning for each retained facet
    /// the index it had in the input list.
    pub fn new_indexed(dim: usize, facets: Vec<Facet<S>>) -> Result<(Self, Vec<usize>)> {
        if dim == 0 {
            return Err(Error::InvalidPolytope("dimension must be positive".into()));
        }
        if facets.len() < dim + 1 {
            return Err(Error::InvalidPolytope(format!(
                "need at least {} facets in dimension {dim}, got {}",
                dim + 1,
                facets.len()
            )));
        }
        for f in &facets {
            if f.normal.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: f.normal.len(),
                });
            }
            if f.normal.iter().all(|&x| x == 0) {
                return Err(Error::InvalidPolytope("zero facet normal".into()));
            }
            if !lattice::is_primitive(&f.normal) {
                return Err(Error::InvalidPolytope(format!(
                    "normal {:?} is not primitive",
                    f.normal
                )));
            }
        }
        let (deduped, kept) = dedupe_keep_tightest(facets);
        let scale = support_scale(&deduped);
        let (volume, latvols) = volume_and_latvols(dim, &deduped, scale)?;
        if volume.sign(FLOAT_TOL * scale.powi(dim as i32)) != Ordering::Greater {
            return Err(Error::InvalidPolytope(
                "polytope is empty or lower-dimensional".into(),
            ));
        }
        let mut retained = Vec::new();
        let mut retained_latvols = Vec::new();
        let mut retained_idx = Vec::new();
        let tol = FLOAT_TOL * scale.powi(dim as i32 - 1);
        for ((facet, lv), idx) in deduped.into_iter().zip(latvols).zip(kept) {
            if lv.sign(tol) == Ordering::Greater {
                retained.push(facet);
                retained_latvols.push(lv);
                retained_idx.push(idx);
            }
        }
        Ok((
            Self {
                dim,
                facets: retained,
                volume,
                facet_latvols: retained_latvols,
            },
            retained_idx,
        ))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn facets(&self) -> &[Facet<S>] {
        &self.facets
    }

    /// Euclidean m-volume, exact over rational supports.
    pub fn volume(&self) -> S {
        self.volume.clone()
    }

    /// (m-1)-volume of facet `idx` in the lattice of its hyperplane; a
    /// primitive segment has length 1, an endpoint of an interval counts 1.
    pub fn facet_lattice_volume(&self, idx: usize) -> Result<S> {
        self.facet_latvols
            .get(idx)
            .cloned()
            .ok_or_else(|| Error::Validation(format!("no facet with index {idx}")))
    }

    pub fn facet_lattice_volumes(&self) -> &[S] {
        &self.facet_latvols
    }

    /// Sum of all facet lattice volumes (the lattice boundary measure).
    pub fn boundary_lattice_volume(&self) -> S {
        self.facet_latvols
            .iter()
            .fold(S::zero(), |a, b| a + b.clone())
    }

    fn support_scale(&self) -> f64 {
        support_scale(&self.facets)
    }

    /// Vertices by exact enumeration of m-subsets of facets.
    pub fn vertices(&self) -> Vec<Vec<S>> {
        self.vertices_with_tight_sets()
            .into_iter()
            .map(|(v, _)| v)
            .collect()
    }

    fn vertices_with_tight_sets(&self) -> Vec<(Vec<S>, Vec<usize>)> {
        let m = self.dim;
        let tol = FLOAT_TOL * self.support_scale().max(1.0);
        let mut found: Vec<(Vec<S>, Vec<usize>)> = Vec::new();
        for combo in combinations(self.facets.len(), m) {
            let rows: Vec<Vec<i64>> = combo.iter().map(|&i| self.facets[i].normal.clone()).collect();
            let (adj, det) = lattice::adjugate(&rows);
            if det == 0 {
                continue;
            }
            // Solve N x = -c by x = adj * (-c) / det.
            let det_s = S::from_int(i64::try_from(det).expect("vertex determinant overflow"));
            let point: Vec<S> = (0..m)
                .map(|k| {
                    let mut acc = S::zero();
                    for (j, &fi) in combo.iter().enumerate() {
                        let a = i64::try_from(adj[k][j]).expect("adjugate overflow");
                        acc = acc + S::from_int(a) * (-self.facets[fi].support.clone());
                    }
                    acc / det_s.clone()
                })
                .collect();
            if !self.contains(&point, tol) {
                continue;
            }
            if found
                .iter()
                .any(|(p, _)| points_equal(p, &point, tol))
            {
                continue;
            }
            let tight = self.tight_facets(&point, tol);
            found.push((point, tight));
        }
        found
    }

    fn contains(&self, x: &[S], tol: f64) -> bool {
        self.facets.iter().all(|f| {
            let v = dot_scalar(x, &f.normal) + f.support.clone();
            v.sign(tol) != Ordering::Less
        })
    }

    fn tight_facets(&self, x: &[S], tol: f64) -> Vec<usize> {
        self.facets
            .iter()
            .enumerate()
            .filter(|(_, f)| {
                (dot_scalar(x, &f.normal) + f.support.clone()).sign(tol) == Ordering::Equal
            })
            .map(|(i, _)| i)
            .collect()
    }

    /// Vertex-by-vertex smoothness check: at each vertex exactly m facets
    /// meet and their normals form a Z-basis.
    pub fn is_delzant(&self) -> DelzantCertificate {
        for (vertex, tight) in self.vertices_with_tight_sets() {
            let ok = if tight.len() != self.dim {
                false
            } else {
                let rows: Vec<Vec<i64>> =
                    tight.iter().map(|&i| self.facets[i].normal.clone()).collect();
                lattice::det_i128(&rows).abs() == 1
            };
            if !ok {
                let det = if tight.len() == self.dim {
                    let rows: Vec<Vec<i64>> =
                        tight.iter().map(|&i| self.facets[i].normal.clone()).collect();
                    Some(lattice::det_i128(&rows) as i64)
                } else {
                    None
                };
                return DelzantCertificate {
                    delzant: false,
                    failing_vertex: Some(vertex.iter().map(Scalar::to_f64).collect()),
                    tight_facets: Some(tight),
                    normal_det: det,
                };
            }
        }
        DelzantCertificate {
            delzant: true,
            failing_vertex: None,
            tight_facets: None,
            normal_det: None,
        }
    }

    /// Support value max_{x in P} <x, dir> for an integer direction.
    pub fn support_max(&self, dir: &[i64]) -> S {
        let mut best: Option<S> = None;
        for v in self.vertices() {
            let val = dot_scalar(&v, dir);
            best = Some(match best {
                None => val,
                Some(b) => S::max_of(b, val),
            });
        }
        best.expect("polytope has vertices")
    }

    pub fn support_min(&self, dir: &[i64]) -> S {
        let neg: Vec<i64> = dir.iter().map(|&d| -d).collect();
        -self.support_max(&neg)
    }

    /// Translate by an integer vector (volumes and lattice data unchanged).
    pub fn translated(&self, shift: &[i64]) -> Result<Self> {
        let facets = self
            .facets
            .iter()
            .map(|f| Facet {
                normal: f.normal.clone(),
                support: f.support.clone() + S::from_int(lattice::dot(&f.normal, shift)),
            })
            .collect();
        Self::new(self.dim, facets)
    }

    /// Dilate by a positive integer factor.
    pub fn dilated(&self, k: i64) -> Result<Self> {
        if k <= 0 {
            return Err(Error::Validation("dilation factor must be positive".into()));
        }
        let facets = self
            .facets
            .iter()
            .map(|f| Facet {
                normal: f.normal.clone(),
                support: f.support.clone() * S::from_int(k),
            })
            .collect();
        Self::new(self.dim, facets)
    }

    /// Candidate edge directions: primitive null vectors of (m-1)-subsets of
    /// facet normals. A superset of the true edge directions, which is all
    /// the Minkowski machinery needs.
    fn edge_direction_candidates(&self) -> Vec<Vec<i64>> {
        let m = self.dim;
        if m == 1 {
            return vec![vec![1]];
        }
        let mut dirs: Vec<Vec<i64>> = Vec::new();
        for combo in combinations(self.facets.len(), m - 1) {
            let rows: Vec<&[i64]> = combo
                .iter()
                .map(|&i| self.facets[i].normal.as_slice())
                .collect();
            if let Some(d) = lattice::null_direction(&rows) {
                push_dir_mod_sign(&mut dirs, d);
            }
        }
        dirs
    }
}

/// Minkowski sum of polytopes of equal dimension.
///
/// Facet normals of the sum are orthogonal to m-1 independent edge
/// directions of the sum, and every edge direction of the sum is an edge
/// direction of a summand; pooling candidate directions therefore yields a
/// complete (if redundant) inequality description with exact supports.
pub fn minkowski_sum<S: Scalar>(polys: &[&MomentPolytope<S>]) -> Result<MomentPolytope<S>> {
    let Some(first) = polys.first() else {
        return Err(Error::Validation("minkowski_sum of empty list".into()));
    };
    let m = first.dim;
    for p in polys {
        if p.dim != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: p.dim,
            });
        }
    }
    let mut pool: Vec<Vec<i64>> = Vec::new();
    for p in polys {
        for d in p.edge_direction_candidates() {
            push_dir_mod_sign(&mut pool, d);
        }
    }
    let mut normals: Vec<Vec<i64>> = Vec::new();
    if m == 1 {
        normals.push(vec![1]);
        normals.push(vec![-1]);
    } else {
        for combo in combinations(pool.len(), m - 1) {
            let rows: Vec<&[i64]> = combo.iter().map(|&i| pool[i].as_slice()).collect();
            if let Some(u) = lattice::null_direction(&rows) {
                let neg: Vec<i64> = u.iter().map(|&x| -x).collect();
                push_dir_exact(&mut normals, u);
                push_dir_exact(&mut normals, neg);
            }
        }
    }
    let facets: Vec<Facet<S>> = normals
        .into_iter()
        .map(|nu| {
            let mut support = S::zero();
            for p in polys {
                // Inner normal nu: the sum satisfies <x, nu> >= sum of minima.
                support = support + (-p.support_min(&nu));
            }
            Facet { normal: nu, support }
        })
        .collect();
    MomentPolytope::new(m, facets)
}

/// Mixed volume of m polytopes in dimension m, normalized so that
/// mixed_volume(P, ..., P) = m! vol(P). Computed by inclusion-exclusion over
/// Minkowski sub-sums, hence exact over rational supports.
pub fn mixed_volume<S: Scalar>(polys: &[&MomentPolytope<S>]) -> Result<S> {
    let Some(first) = polys.first() else {
        return Err(Error::Validation("mixed_volume of empty list".into()));
    };
    let m = first.dim;
    if polys.len() != m {
        return Err(Error::Validation(format!(
            "mixed_volume needs exactly {m} polytopes in dimension {m}, got {}",
            polys.len()
        )));
    }
    for p in polys {
        if p.dim != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: p.dim,
            });
        }
    }
    let mut acc = S::zero();
    for mask in 1u32..(1u32 << m) {
        let subset: Vec<&MomentPolytope<S>> = (0..m)
            .filter(|&i| mask & (1 << i) != 0)
            .map(|i| polys[i])
            .collect();
        let vol = if subset.len() == 1 {
            subset[0].volume()
        } else {
            minkowski_sum(&subset)?.volume()
        };
        let sign_positive = (m - subset.len()) % 2 == 0;
        acc = if sign_positive { acc + vol } else { acc - vol };
    }
    Ok(acc)
}

// ---------------------------------------------------------------------------
// Volume recursion.

fn support_scale<S: Scalar>(facets: &[Facet<S>]) -> f64 {
    facets
        .iter()
        .map(|f| f.support.to_f64().abs())
        .fold(1.0, f64::max)
}

fn dedupe_keep_tightest<S: Scalar>(facets: Vec<Facet<S>>) -> (Vec<Facet<S>>, Vec<usize>) {
    let mut out: Vec<Facet<S>> = Vec::new();
    let mut idx: Vec<usize> = Vec::new();
    for (i, f) in facets.into_iter().enumerate() {
        if let Some(pos) = out.iter().position(|g| g.normal == f.normal) {
            if f.support < out[pos].support {
                out[pos].support = f.support;
                idx[pos] = i;
            }
        } else {
            out.push(f);
            idx.push(i);
        }
    }
    (out, idx)
}

/// Volume and per-facet lattice volumes of the (possibly redundant) facet
/// list. Redundant facets report lattice volume 0; empty polytopes report
/// volume 0; unbounded data is an error.
fn volume_and_latvols<S: Scalar>(
    dim: usize,
    facets: &[Facet<S>],
    scale: f64,
) -> Result<(S, Vec<S>)> {
    if dim == 1 {
        return volume_dim1(facets, scale);
    }
    let mut latvols = Vec::with_capacity(facets.len());
    let mut vol = S::zero();
    for (i, f) in facets.iter().enumerate() {
        let lv = facet_latvol(dim, facets, i, scale)?;
        vol = vol + f.support.clone() * lv.clone();
        latvols.push(lv);
    }
    vol = vol / S::from_int(dim as i64);
    Ok((vol, latvols))
}

fn volume_dim1<S: Scalar>(facets: &[Facet<S>], scale: f64) -> Result<(S, Vec<S>)> {
    let tol = FLOAT_TOL * scale;
    let mut lo: Option<(S, usize)> = None;
    let mut hi: Option<(S, usize)> = None;
    for (i, f) in facets.iter().enumerate() {
        match f.normal[0] {
            1 => {
                let bound = -f.support.clone();
                if lo.as_ref().map_or(true, |(b, _)| bound > *b) {
                    lo = Some((bound, i));
                }
            }
            -1 => {
                let bound = f.support.clone();
                if hi.as_ref().map_or(true, |(b, _)| bound < *b) {
                    hi = Some((bound, i));
                }
            }
            _ => {
                return Err(Error::InvalidPolytope(
                    "1-d facet normal must be +-1".into(),
                ))
            }
        }
    }
    let (Some((lo, lo_idx)), Some((hi, hi_idx))) = (lo, hi) else {
        return Err(Error::Unbounded);
    };
    let len = hi - lo;
    let mut latvols = vec![S::zero(); facets.len()];
    if len.sign(tol) == Ordering::Less {
        return Ok((S::zero(), latvols));
    }
    // Endpoint facets carry the 0-dimensional counting measure.
    latvols[lo_idx] = S::one();
    latvols[hi_idx] = S::one();
    Ok((len, latvols))
}

fn facet_latvol<S: Scalar>(
    dim: usize,
    facets: &[Facet<S>],
    idx: usize,
    scale: f64,
) -> Result<S> {
    let nu = &facets[idx].normal;
    let c = &facets[idx].support;
    let tol = FLOAT_TOL * scale.max(1.0);
    // Any point on the hyperplane <x, nu> = -c.
    let nu_sq: i64 = nu.iter().map(|&x| x * x).sum();
    let base: Vec<S> = nu
        .iter()
        .map(|&nk| -c.clone() * S::from_int(nk) / S::from_int(nu_sq))
        .collect();
    let cols = lattice::orthogonal_basis(nu);
    let mut sub: Vec<Facet<S>> = Vec::new();
    for (j, g) in facets.iter().enumerate() {
        if j == idx {
            continue;
        }
        let projected: Vec<i64> = cols.iter().map(|col| lattice::dot(col, &g.normal)).collect();
        let offset = g.support.clone() + dot_scalar(&base, &g.normal);
        if projected.iter().all(|&x| x == 0) {
            if offset.sign(tol) == Ordering::Less {
                return Ok(S::zero()); // facet hyperplane misses the polytope
            }
            continue;
        }
        let g_cont = lattice::content(&projected);
        let normal = lattice::primitive(&projected);
        let support = offset / S::from_int(g_cont);
        sub.push(Facet { normal, support });
    }
    if sub.len() < dim {
        // Not enough constraints to bound a (dim-1)-polytope.
        return Err(Error::Unbounded);
    }
    let (sub, _) = dedupe_keep_tightest(sub);
    let (vol, _) = volume_and_latvols(dim - 1, &sub, support_scale(&sub))?;
    Ok(vol)
}

// ---------------------------------------------------------------------------
// Small helpers.

fn dot_scalar<S: Scalar>(x: &[S], nu: &[i64]) -> S {
    x.iter()
        .zip(nu)
        .fold(S::zero(), |acc, (xi, &ni)| acc + xi.clone() * S::from_int(ni))
}

fn points_equal<S: Scalar>(a: &[S], b: &[S], tol: f64) -> bool {
    a.iter()
        .zip(b)
        .all(|(x, y)| (x.clone() - y.clone()).sign(tol) == Ordering::Equal)
}

fn push_dir_mod_sign(pool: &mut Vec<Vec<i64>>, d: Vec<i64>) {
    let neg: Vec<i64> = d.iter().map(|&x| -x).collect();
    if !pool.iter().any(|e| *e == d || *e == neg) {
        pool.push(d);
    }
}

fn push_dir_exact(pool: &mut Vec<Vec<i64>>, d: Vec<i64>) {
    if !pool.iter().any(|e| *e == d) {
        pool.push(d);
    }
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut combo: Vec<usize> = (0..k).collect();
    loop {
        out.push(combo.clone());
        // Advance.
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if combo[i] != i + n - k {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        combo[i] += 1;
        for j in i + 1..k {
            combo[j] = combo[j - 1] + 1;
        }
    }
}

// ---------------------------------------------------------------------------
// JSON schema: {"dim": m, "facets": [{"normal": [int,...], "support": x}]}
// where x is a number or an exact "p/q" string.

/// A polytope parsed from JSON: exact when every support was exact.
#[derive(Debug, Clone)]
pub enum PolytopeData {
    Exact(RationalPolytope),
    Float(FloatPolytope),
}

impl PolytopeData {
    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let dim = v
            .get("dim")
            .and_then(|d| d.as_u64())
            .ok_or_else(|| Error::Validation("polytope JSON needs integer \"dim\"".into()))?
            as usize;
        let facets_json = v
            .get("facets")
            .and_then(|f| f.as_array())
            .ok_or_else(|| Error::Validation("polytope JSON needs \"facets\" array".into()))?;
        let mut normals = Vec::new();
        let mut supports = Vec::new();
        for fj in facets_json {
            let normal: Vec<i64> = fj
                .get("normal")
                .and_then(|n| n.as_array())
                .ok_or_else(|| Error::Validation("facet needs \"normal\" array".into()))?
                .iter()
                .map(|x| {
                    x.as_i64()
                        .ok_or_else(|| Error::Validation("normal entries must be integers".into()))
                })
                .collect::<Result<_>>()?;
            let support = NumberInput::from_json(
                fj.get("support")
                    .ok_or_else(|| Error::Validation("facet needs \"support\"".into()))?,
            )?;
            normals.push(normal);
            supports.push(support);
        }
        if supports.iter().all(NumberInput::is_exact) {
            let facets = normals
                .into_iter()
                .zip(&supports)
                .map(|(normal, s)| Facet {
                    normal,
                    support: s.as_rational().expect("checked exact"),
                })
                .collect();
            Ok(PolytopeData::Exact(MomentPolytope::new(dim, facets)?))
        } else {
            let facets = normals
                .into_iter()
                .zip(&supports)
                .map(|(normal, s)| Facet {
                    normal,
                    support: s.to_f64(),
                })
                .collect();
            Ok(PolytopeData::Float(MomentPolytope::new(dim, facets)?))
        }
    }

    pub fn to_float(&self) -> FloatPolytope {
        match self {
            PolytopeData::Exact(p) => rational_to_float(p),
            PolytopeData::Float(p) => p.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            PolytopeData::Exact(p) => p.dim(),
            PolytopeData::Float(p) => p.dim(),
        }
    }
}

pub fn rational_to_float(p: &RationalPolytope) -> FloatPolytope {
    let facets = p
        .facets()
        .iter()
        .map(|f| Facet {
            normal: f.normal.clone(),
            support: Scalar::to_f64(&f.support),
        })
        .collect();
    MomentPolytope::new(p.dim(), facets).expect("float image of a valid polytope is valid")
}

// ---------------------------------------------------------------------------
// Convenience constructors used throughout the tests and examples.

/// Interval [lo, hi] as a 1-d polytope.
pub fn interval<S: Scalar>(lo: S, hi: S) -> Result<MomentPolytope<S>> {
    MomentPolytope::new(
        1,
        vec![
            Facet {
                normal: vec![1],
                support: -lo,
            },
            Facet {
                normal: vec![-1],
                support: hi,
            },
        ],
    )
}

/// Axis-aligned box prod [0, len_i].
pub fn box_polytope<S: Scalar>(lens: &[S]) -> Result<MomentPolytope<S>> {
    let m = lens.len();
    let mut facets = Vec::new();
    for (i, len) in lens.iter().enumerate() {
        let mut e = vec![0i64; m];
        e[i] = 1;
        facets.push(Facet {
            normal: e.clone(),
            support: S::zero(),
        });
        e[i] = -1;
        facets.push(Facet {
            normal: e,
            support: len.clone(),
        });
    }
    MomentPolytope::new(m, facets)
}

/// Standard simplex conv{0, k e_1, ..., k e_m} (P^m with class k H).
pub fn simplex<S: Scalar>(m: usize, k: S) -> Result<MomentPolytope<S>> {
    let mut facets = Vec::new();
    for i in 0..m {
        let mut e = vec![0i64; m];
        e[i] = 1;
        facets.push(Facet {
            normal: e,
            support: S::zero(),
        });
    }
    facets.push(Facet {
        normal: vec![-1; m],
        support: k,
    });
    MomentPolytope::new(m, facets)
}
