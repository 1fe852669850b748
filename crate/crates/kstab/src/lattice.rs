//! Integer lattice helpers: primitive vectors, orthogonal sublattice bases,
//! null directions and small exact determinants.
//!
//! Everything here is pure integer arithmetic; the polytope code combines
//! these with generic scalar supports.

use num_integer::Integer;

/// gcd of the absolute values of the entries (0 for the zero vector).
pub fn content(v: &[i64]) -> i64 {
    v.iter().fold(0i64, |g, &x| g.gcd(&x.abs()))
}

/// Divide a nonzero vector by its content.
pub fn primitive(v: &[i64]) -> Vec<i64> {
    let g = content(v);
    if g <= 1 {
        return v.to_vec();
    }
    v.iter().map(|&x| x / g).collect()
}

pub fn is_primitive(v: &[i64]) -> bool {
    content(v) == 1
}

pub fn dot(a: &[i64], b: &[i64]) -> i64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Determinant of a square integer matrix (rows), exact in i128.
pub fn det_i128(rows: &[Vec<i64>]) -> i128 {
    let m = rows.len();
    let mut a: Vec<Vec<i128>> = rows
        .iter()
        .map(|r| r.iter().map(|&x| x as i128).collect())
        .collect();
    // Fraction-free Gaussian elimination (Bareiss).
    let mut sign = 1i128;
    let mut prev = 1i128;
    for k in 0..m {
        if a[k][k] == 0 {
            let Some(p) = (k + 1..m).find(|&i| a[i][k] != 0) else {
                return 0;
            };
            a.swap(k, p);
            sign = -sign;
        }
        for i in k + 1..m {
            for j in k + 1..m {
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) / prev;
            }
            a[i][k] = 0;
        }
        prev = a[k][k];
    }
    sign * a[m - 1][m - 1]
}

/// Adjugate matrix and determinant, so that `A * adj = det * I`.
/// Entry growth is bounded for the small dimensions used here (m <= 5).
pub fn adjugate(rows: &[Vec<i64>]) -> (Vec<Vec<i128>>, i128) {
    let m = rows.len();
    let det = det_i128(rows);
    let mut adj = vec![vec![0i128; m]; m];
    for i in 0..m {
        for j in 0..m {
            // Cofactor C_ji for adj[i][j].
            let minor: Vec<Vec<i64>> = (0..m)
                .filter(|&r| r != j)
                .map(|r| {
                    (0..m)
                        .filter(|&c| c != i)
                        .map(|c| rows[r][c])
                        .collect::<Vec<_>>()
                })
                .collect();
            let sign = if (i + j) % 2 == 0 { 1 } else { -1 };
            adj[i][j] = sign as i128 * if m == 1 { 1 } else { det_i128(&minor) };
        }
    }
    (adj, det)
}

/// Integer basis of the sublattice { w in Z^m : <w, normal> = 0 } for a
/// primitive vector `normal`. Returns m-1 basis columns.
pub fn orthogonal_basis(normal: &[i64]) -> Vec<Vec<i64>> {
    let m = normal.len();
    debug_assert!(is_primitive(normal));
    let mut v = normal.to_vec();
    // Columns of a unimodular matrix, maintained so <normal, col_i> = v[i].
    let mut cols: Vec<Vec<i64>> = (0..m)
        .map(|i| {
            let mut e = vec![0i64; m];
            e[i] = 1;
            e
        })
        .collect();
    loop {
        let nonzero: Vec<usize> = (0..m).filter(|&i| v[i] != 0).collect();
        if nonzero.len() <= 1 {
            break;
        }
        let &j = nonzero
            .iter()
            .min_by_key(|&&i| v[i].abs())
            .expect("nonempty");
        for &i in &nonzero {
            if i == j {
                continue;
            }
            let q = v[i].div_euclid(v[j]);
            if q != 0 {
                v[i] -= q * v[j];
                for k in 0..m {
                    let t = q * cols[j][k];
                    cols[i][k] -= t;
                }
            }
        }
    }
    let pivot = (0..m).find(|&i| v[i] != 0).expect("nonzero normal");
    debug_assert_eq!(v[pivot].abs(), 1, "normal must be primitive");
    (0..m).filter(|&i| i != pivot).map(|i| cols[i].clone()).collect()
}

/// Primitive integer vector orthogonal to m-1 directions in Z^m, or None if
/// the directions are linearly dependent.
pub fn null_direction(dirs: &[&[i64]]) -> Option<Vec<i64>> {
    let m = dirs.len() + 1;
    debug_assert!(dirs.iter().all(|d| d.len() == m));
    let mut u = vec![0i128; m];
    for i in 0..m {
        let minor: Vec<Vec<i64>> = dirs
            .iter()
            .map(|d| {
                (0..m)
                    .filter(|&c| c != i)
                    .map(|c| d[c])
                    .collect::<Vec<_>>()
            })
            .collect();
        let sign = if i % 2 == 0 { 1 } else { -1 };
        u[i] = sign as i128 * if m == 1 { 1 } else { det_i128(&minor) };
    }
    if u.iter().all(|&x| x == 0) {
        return None;
    }
    let v: Vec<i64> = u
        .iter()
        .map(|&x| i64::try_from(x).expect("null direction overflows i64"))
        .collect();
    Some(primitive(&v))
}

pub fn lcm_i64(a: i64, b: i64) -> i64 {
    a.lcm(&b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn det_and_adjugate() {
        let a = vec![vec![2, 1], vec![1, 1]];
        assert_eq!(det_i128(&a), 1);
        let (adj, det) = adjugate(&a);
        assert_eq!(det, 1);
        // A * adj = det I
        for i in 0..2 {
            for j in 0..2 {
                let s: i128 = (0..2).map(|k| a[i][k] as i128 * adj[k][j]).sum();
                assert_eq!(s, if i == j { det } else { 0 });
            }
        }
    }

    #[test]
    fn det_three_by_three() {
        let a = vec![vec![1, 2, 3], vec![0, 1, 4], vec![5, 6, 0]];
        assert_eq!(det_i128(&a), 1);
        let singular = vec![vec![1, 2, 3], vec![2, 4, 6], vec![0, 1, 1]];
        assert_eq!(det_i128(&singular), 0);
    }

    #[test]
    fn orthogonal_basis_spans_kernel() {
        for normal in [vec![1, 0], vec![0, -1], vec![2, 3], vec![-3, 5], vec![1, -1]] {
            let basis = orthogonal_basis(&normal);
            assert_eq!(basis.len(), 1);
            assert_eq!(dot(&basis[0], &normal), 0);
            assert!(is_primitive(&basis[0]));
        }
        let basis = orthogonal_basis(&[2, 3, 5]);
        assert_eq!(basis.len(), 2);
        for b in &basis {
            assert_eq!(dot(b, &[2, 3, 5]), 0);
        }
        // Completeness: the span is the full saturated sublattice iff the
        // maximal minors of the 2x3 basis matrix are coprime.
        let minors: Vec<i64> = (0..3)
            .map(|skip| {
                let cols: Vec<usize> = (0..3).filter(|&c| c != skip).collect();
                basis[0][cols[0]] * basis[1][cols[1]] - basis[0][cols[1]] * basis[1][cols[0]]
            })
            .collect();
        assert_eq!(content(&minors), 1, "basis must generate the saturated kernel");
    }

    #[test]
    fn null_direction_cross_product() {
        let d1 = [1i64, 0, 0];
        let d2 = [0i64, 1, 0];
        let u = null_direction(&[&d1, &d2]).unwrap();
        assert_eq!(u, vec![0, 0, 1]);
        let dep = null_direction(&[&d1, &d1]);
        assert!(dep.is_none());
        let e = [1i64, 1];
        let u2 = null_direction(&[&e]).unwrap();
        assert_eq!(dot(&u2, &e), 0);
    }
}
