//! Uniform box grids on log coordinates, sampled fields, discrete Hessians
//! and deterministic quadrature.
//!
//! Reductions use Neumaier compensated summation in fixed node order, so
//! results are bit-reproducible regardless of any worker parallelism hint.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid on a box in R^n, n in {1, 2} for the analysis operations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    /// Box bounds per axis.
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Node count per axis (endpoints included).
    pub res: Vec<usize>,
}

impl Grid {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, res: Vec<usize>) -> Result<Self> {
        if lo.len() != hi.len() || lo.len() != res.len() || lo.is_empty() {
            return Err(Error::Validation("grid axes must agree and be nonempty".into()));
        }
        for ((&l, &h), &r) in lo.iter().zip(&hi).zip(&res) {
            if !(l < h) {
                return Err(Error::Validation(format!("empty axis [{l}, {h}]")));
            }
            if r < 4 {
                return Err(Error::Validation("grid needs at least 4 nodes per axis".into()));
            }
        }
        Ok(Self { lo, hi, res })
    }

    pub fn line(lo: f64, hi: f64, res: usize) -> Result<Self> {
        Self::new(vec![lo], vec![hi], vec![res])
    }

    pub fn square(lo: f64, hi: f64, res: usize) -> Result<Self> {
        Self::new(vec![lo, lo], vec![hi, hi], vec![res, res])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn step(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / (self.res[axis] - 1) as f64
    }

    pub fn len(&self) -> usize {
        self.res.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major flattening; the last axis varies fastest.
    pub fn index(&self, multi: &[usize]) -> usize {
        let mut idx = 0;
        for (k, &i) in multi.iter().enumerate() {
            idx = idx * self.res[k] + i;
        }
        idx
    }

    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        let mut multi = vec![0; self.dim()];
        for k in (0..self.dim()).rev() {
            multi[k] = idx % self.res[k];
            idx /= self.res[k];
        }
        multi
    }

    pub fn node(&self, multi: &[usize]) -> Vec<f64> {
        multi
            .iter()
            .enumerate()
            .map(|(k, &i)| self.lo[k] + self.step(k) * i as f64)
            .collect()
    }

    pub fn node_flat(&self, idx: usize) -> Vec<f64> {
        self.node(&self.multi_index(idx))
    }

    /// True when the node is at least `margin` layers from the box boundary.
    pub fn is_interior(&self, multi: &[usize], margin: usize) -> bool {
        multi
            .iter()
            .enumerate()
            .all(|(k, &i)| i >= margin && i + margin < self.res[k])
    }

    pub fn interior_indices(&self, margin: usize) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.is_interior(&self.multi_index(i), margin))
            .collect()
    }

    /// Cell volume for quadrature.
    pub fn cell(&self) -> f64 {
        (0..self.dim()).map(|k| self.step(k)).product()
    }

    /// The coarser grid with every other node (requires odd resolutions).
    pub fn halved(&self) -> Option<Grid> {
        if self.res.iter().any(|&r| r % 2 == 0 || r < 7) {
            return None;
        }
        Some(Grid {
            lo: self.lo.clone(),
            hi: self.hi.clone(),
            res: self.res.iter().map(|&r| (r + 1) / 2).collect(),
        })
    }

    /// JSON schema: {"box": [[lo,hi],...], "resolution": [N,...]}.
    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let bounds = v
            .get("box")
            .and_then(|b| b.as_array())
            .ok_or_else(|| Error::Validation("grid JSON needs \"box\"".into()))?;
        let res = v
            .get("resolution")
            .and_then(|r| r.as_array())
            .ok_or_else(|| Error::Validation("grid JSON needs \"resolution\"".into()))?;
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        for b in bounds {
            let pair = b
                .as_array()
                .filter(|p| p.len() == 2)
                .ok_or_else(|| Error::Validation("box entries are [lo, hi]".into()))?;
            lo.push(pair[0].as_f64().ok_or_else(|| Error::Validation("bad box bound".into()))?);
            hi.push(pair[1].as_f64().ok_or_else(|| Error::Validation("bad box bound".into()))?);
        }
        let res = res
            .iter()
            .map(|r| {
                r.as_u64()
                    .map(|x| x as usize)
                    .ok_or_else(|| Error::Validation("resolution entries are integers".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        Grid::new(lo, hi, res)
    }
}

/// A sampled function on a grid.
#[derive(Debug, Clone)]
pub struct Field {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Validation(format!(
                "field length {} does not match grid length {}",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.node_flat(i))).collect();
        Self { grid, values }
    }

    pub fn zeros(grid: Grid) -> Self {
        let values = vec![0.0; grid.len()];
        Self { grid, values }
    }

    /// Centered second difference along (axis_a, axis_b) at a flat index.
    /// The caller is responsible for staying at interior nodes.
    pub fn second_diff(&self, idx: usize, axis_a: usize, axis_b: usize) -> f64 {
        let g = &self.grid;
        let multi = g.multi_index(idx);
        if axis_a == axis_b {
            let h = g.step(axis_a);
            let mut up = multi.clone();
            up[axis_a] += 1;
            let mut dn = multi.clone();
            dn[axis_a] -= 1;
            (self.values[g.index(&up)] - 2.0 * self.values[idx] + self.values[g.index(&dn)])
                / (h * h)
        } else {
            let ha = g.step(axis_a);
            let hb = g.step(axis_b);
            let mut pp = multi.clone();
            pp[axis_a] += 1;
            pp[axis_b] += 1;
            let mut pm = multi.clone();
            pm[axis_a] += 1;
            pm[axis_b] -= 1;
            let mut mp = multi.clone();
            mp[axis_a] -= 1;
            mp[axis_b] += 1;
            let mut mm = multi.clone();
            mm[axis_a] -= 1;
            mm[axis_b] -= 1;
            (self.values[g.index(&pp)] - self.values[g.index(&pm)] - self.values[g.index(&mp)]
                + self.values[g.index(&mm)])
                / (4.0 * ha * hb)
        }
    }

    /// Discrete Hessian at an interior node, row-major n x n.
    pub fn hessian(&self, idx: usize) -> Vec<f64> {
        let n = self.grid.dim();
        let mut h = vec![0.0; n * n];
        for a in 0..n {
            for b in a..n {
                let v = self.second_diff(idx, a, b);
                h[a * n + b] = v;
                h[b * n + a] = v;
            }
        }
        h
    }

    /// Centered gradient at an interior node.
    pub fn gradient(&self, idx: usize) -> Vec<f64> {
        let g = &self.grid;
        let multi = g.multi_index(idx);
        (0..g.dim())
            .map(|a| {
                let h = g.step(a);
                let mut up = multi.clone();
                up[a] += 1;
                let mut dn = multi.clone();
                dn[a] -= 1;
                (self.values[g.index(&up)] - self.values[g.index(&dn)]) / (2.0 * h)
            })
            .collect()
    }

    /// Trapezoidal quadrature with compensated summation.
    pub fn integrate(&self) -> f64 {
        let g = &self.grid;
        let cell = g.cell();
        let mut sum = NeumaierSum::new();
        for i in 0..g.len() {
            let multi = g.multi_index(i);
            let mut w = 1.0;
            for (k, &m) in multi.iter().enumerate() {
                if m == 0 || m + 1 == g.res[k] {
                    w *= 0.5;
                }
            }
            sum.add(w * self.values[i]);
        }
        sum.total() * cell
    }

    /// Restriction to the halved grid for Richardson error estimates.
    pub fn subsample(&self) -> Option<Field> {
        let coarse = self.grid.halved()?;
        let mut values = Vec::with_capacity(coarse.len());
        for i in 0..coarse.len() {
            let multi = coarse.multi_index(i);
            let fine_multi: Vec<usize> = multi.iter().map(|&m| 2 * m).collect();
            values.push(self.values[self.grid.index(&fine_multi)]);
        }
        Some(Field {
            grid: coarse,
            values,
        })
    }
}

/// Neumaier-compensated accumulator; deterministic in the add order.
#[derive(Debug, Clone, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Symmetric 2x2 eigenvalue bounds; for n = 1 the entry itself.
pub fn min_eigenvalue(h: &[f64], n: usize) -> f64 {
    match n {
        1 => h[0],
        2 => {
            let tr = h[0] + h[3];
            let det = h[0] * h[3] - h[1] * h[2];
            let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
            tr / 2.0 - disc
        }
        _ => panic!("eigenvalue bounds implemented for n <= 2"),
    }
}

pub fn det_matrix(h: &[f64], n: usize) -> f64 {
    match n {
        1 => h[0],
        2 => h[0] * h[3] - h[1] * h[2],
        3 => {
            h[0] * (h[4] * h[8] - h[5] * h[7]) - h[1] * (h[3] * h[8] - h[5] * h[6])
                + h[2] * (h[3] * h[7] - h[4] * h[6])
        }
        _ => panic!("determinant implemented for n <= 3"),
    }
}

/// Normalized mixed discriminant, D(A, ..., A) = det A. For n = 2 the
/// polarization is 2 D(A,B) = tr(A) tr(B) - tr(AB).
pub fn mixed_discriminant(mats: &[&[f64]], n: usize) -> f64 {
    match (n, mats.len()) {
        (1, 1) => mats[0][0],
        (2, 2) => {
            let a = mats[0];
            let b = mats[1];
            0.5 * (a[0] * b[3] + a[3] * b[0] - a[1] * b[2] - a[2] * b[1])
        }
        _ => panic!("mixed discriminant implemented for n <= 2"),
    }
}
