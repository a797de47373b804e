//! Symmetric eigensolver based on cyclic Jacobi rotations.
//!
//! The covariance matrices produced by this crate are real and symmetric,
//! so the Jacobi method applies unconditionally: every sweep visits each
//! off-diagonal entry and rotates it away, and the off-diagonal mass
//! shrinks until the matrix is diagonal to working precision.
//! Output order and eigenvector signs are fixed deterministically so that
//! identical inputs produce bit-identical results.

use ndarray::Array2;
use thiserror::Error;

/// Convergence threshold: off-diagonal Frobenius norm relative to the
/// input's Frobenius norm.
const OFF_DIAG_TOL: f64 = 1e-12;

/// Maximum number of full sweeps before giving up.
const MAX_SWEEPS: usize = 100;

/// Relative tolerance for the symmetry check on input matrices.
const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum EigError {
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric: max |a_ij - a_ji| = {defect:e} exceeds tolerance")]
    NotSymmetric { defect: f64 },

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("Jacobi iteration did not converge in {sweeps} sweeps: off-diagonal residual {residual:e}")]
    NoConvergence { sweeps: usize, residual: f64 },
}

/// Full orthonormal eigensystem of a symmetric matrix.
///
/// Eigenvalues are sorted in descending order; `vectors` holds the
/// matching eigenvectors as columns. Every eigenvector's sign is fixed
/// so that its component sum is positive (first nonzero component
/// positive when the sum vanishes).
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub values: Vec<f64>,
    pub vectors: Array2<f64>,
}

impl EigenSystem {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Diagonalize a symmetric matrix with cyclic Jacobi rotations.
pub fn eigensystem(matrix: &Array2<f64>) -> Result<EigenSystem, EigError> {
    let n = matrix.nrows();
    if matrix.ncols() != n {
        return Err(EigError::NotSquare {
            rows: n,
            cols: matrix.ncols(),
        });
    }
    check_symmetry(matrix)?;

    // Flat row-major working copy of the upper triangle; eigenvectors
    // accumulate as rows of v so rotations touch contiguous memory.
    let mut a: Vec<f64> = matrix.iter().copied().collect();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let mut d: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    let mut b = d.clone();
    let mut z = vec![0.0; n];

    let norm = frobenius(&a);
    let tol = OFF_DIAG_TOL * norm;

    let mut sweeps = 0;
    loop {
        let mut off_sq = 0.0;
        let mut abs_sum = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                let x = a[p * n + q];
                off_sq += 2.0 * x * x;
                abs_sum += x.abs();
            }
        }
        if off_sq.sqrt() <= tol {
            break;
        }
        if sweeps >= MAX_SWEEPS {
            return Err(EigError::NoConvergence {
                sweeps,
                residual: off_sq.sqrt(),
            });
        }

        // Early sweeps only rotate elements above a shrinking threshold;
        // later sweeps zero elements too small to matter outright.
        let thresh = if sweeps < 3 {
            0.2 * abs_sum / (n * n) as f64
        } else {
            0.0
        };
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                let g = 100.0 * apq.abs();
                if sweeps > 3 && d[p].abs() + g == d[p].abs() && d[q].abs() + g == d[q].abs() {
                    a[p * n + q] = 0.0;
                    continue;
                }
                if apq.abs() <= thresh || apq == 0.0 {
                    continue;
                }
                rotate(&mut a, &mut v, &mut d, &mut z, n, p, q, g);
            }
        }
        for i in 0..n {
            b[i] += z[i];
            d[i] = b[i];
            z[i] = 0.0;
        }
        sweeps += 1;
    }

    let mut values: Vec<f64> = d.clone();
    let mut columns: Vec<Vec<f64>> = (0..n)
        .map(|k| v[k * n..(k + 1) * n].to_vec())
        .collect();

    for col in &mut columns {
        fix_sign(col);
    }

    // Descending eigenvalue order; exact ties broken by lexicographic
    // comparison of the sign-fixed eigenvectors for determinism.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        values[j]
            .partial_cmp(&values[i])
            .unwrap()
            .then_with(|| lex_cmp(&columns[i], &columns[j]))
    });
    values = order.iter().map(|&i| values[i]).collect();

    let mut vectors = Array2::zeros((n, n));
    for (k, &src) in order.iter().enumerate() {
        for i in 0..n {
            vectors[[i, k]] = columns[src][i];
        }
    }

    Ok(EigenSystem { values, vectors })
}

fn check_symmetry(matrix: &Array2<f64>) -> Result<(), EigError> {
    let n = matrix.nrows();
    if matrix.iter().any(|x| !x.is_finite()) {
        return Err(EigError::NonFinite);
    }
    let scale = matrix.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    let mut defect = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            defect = defect.max((matrix[[i, j]] - matrix[[j, i]]).abs());
        }
    }
    if defect > SYMMETRY_TOL * scale.max(1e-300) {
        return Err(EigError::NotSymmetric { defect });
    }
    Ok(())
}

fn frobenius(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// One Jacobi rotation annihilating the upper-triangle element a[p][q].
/// Only the upper triangle of `a` is maintained; eigenvectors live in
/// the rows of `v`; `d` carries the running diagonal with corrections
/// accumulating in `z`.
#[allow(clippy::too_many_arguments)]
fn rotate(
    a: &mut [f64],
    v: &mut [f64],
    d: &mut [f64],
    z: &mut [f64],
    n: usize,
    p: usize,
    q: usize,
    g: f64,
) {
    let apq = a[p * n + q];
    let h = d[q] - d[p];
    // Smaller-angle root of t^2 + 2t*theta - 1 = 0, for stability; for
    // very disparate scales the rotation angle collapses to apq/h.
    let t = if h.abs() + g == h.abs() {
        apq / h
    } else {
        let theta = 0.5 * h / apq;
        let t = 1.0 / (theta.abs() + (1.0 + theta * theta).sqrt());
        if theta < 0.0 {
            -t
        } else {
            t
        }
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;
    let tau = s / (1.0 + c);

    let shift = t * apq;
    z[p] -= shift;
    z[q] += shift;
    d[p] -= shift;
    d[q] += shift;
    a[p * n + q] = 0.0;

    let apply = |x: f64, y: f64| -> (f64, f64) {
        (x - s * (y + tau * x), y + s * (x - tau * y))
    };
    for j in 0..p {
        let (np, nq) = apply(a[j * n + p], a[j * n + q]);
        a[j * n + p] = np;
        a[j * n + q] = nq;
    }
    for j in (p + 1)..q {
        let (np, nq) = apply(a[p * n + j], a[j * n + q]);
        a[p * n + j] = np;
        a[j * n + q] = nq;
    }
    for j in (q + 1)..n {
        let (np, nq) = apply(a[p * n + j], a[q * n + j]);
        a[p * n + j] = np;
        a[q * n + j] = nq;
    }
    let (row_p, row_q) = v.split_at_mut(q * n);
    let row_p = &mut row_p[p * n..p * n + n];
    let row_q = &mut row_q[..n];
    for j in 0..n {
        let (np, nq) = apply(row_p[j], row_q[j]);
        row_p[j] = np;
        row_q[j] = nq;
    }
}

fn fix_sign(col: &mut [f64]) {
    let sum: f64 = col.iter().sum();
    let flip = if sum != 0.0 {
        sum < 0.0
    } else {
        match col.iter().find(|x| **x != 0.0) {
            Some(first) => *first < 0.0,
            None => false,
        }
    };
    if flip {
        for x in col.iter_mut() {
            *x = -*x;
        }
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y).unwrap() {
            std::cmp::Ordering::Equal => continue,
            other => return other,
        }
    }
    std::cmp::Ordering::Equal
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn reconstruction_error(matrix: &Array2<f64>, eig: &EigenSystem) -> f64 {
        let n = eig.dim();
        let mut rebuilt = Array2::<f64>::zeros((n, n));
        for k in 0..n {
            let lam = eig.values[k];
            for i in 0..n {
                for j in 0..n {
                    rebuilt[[i, j]] += lam * eig.vectors[[i, k]] * eig.vectors[[j, k]];
                }
            }
        }
        let diff = (&rebuilt - matrix).iter().map(|x| x * x).sum::<f64>().sqrt();
        let norm = matrix.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            diff
        } else {
            diff / norm
        }
    }

    fn orthonormality_defect(eig: &EigenSystem) -> f64 {
        let n = eig.dim();
        let gram = eig.vectors.t().dot(&eig.vectors);
        let mut defect = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let expect = if i == j { 1.0 } else { 0.0 };
                defect = defect.max((gram[[i, j]] - expect).abs());
            }
        }
        defect
    }

    #[test]
    fn identity_matrix_is_isotropic() {
        let eye = Array2::<f64>::eye(4);
        let eig = eigensystem(&eye).unwrap();
        for lam in &eig.values {
            assert!((lam - 1.0).abs() < 1e-14);
        }
        assert!(reconstruction_error(&eye, &eig) < 1e-12);
        assert!(orthonormality_defect(&eig) < 1e-12);
    }

    #[test]
    fn rank_one_matrix_recovers_generator() {
        // C = v v^T with v = (3,4)/5: lambda_0 = 1, e^0 = v after sign fix.
        let v = [0.6, 0.8];
        let c = arr2(&[[v[0] * v[0], v[0] * v[1]], [v[0] * v[1], v[1] * v[1]]]);
        let eig = eigensystem(&c).unwrap();
        assert!((eig.values[0] - 1.0).abs() < 1e-14);
        assert!(eig.values[1].abs() < 1e-14);
        assert!((eig.vectors[[0, 0]] - v[0]).abs() < 1e-14);
        assert!((eig.vectors[[1, 0]] - v[1]).abs() < 1e-14);
    }

    #[test]
    fn rejects_non_symmetric_input() {
        let c = arr2(&[[1.0, 2.0], [0.5, 1.0]]);
        assert!(matches!(
            eigensystem(&c),
            Err(EigError::NotSymmetric { .. })
        ));
    }

    #[test]
    fn rejects_non_square_input() {
        let c = Array2::<f64>::zeros((2, 3));
        assert!(matches!(eigensystem(&c), Err(EigError::NotSquare { .. })));
    }

    #[test]
    fn rejects_non_finite_input() {
        let c = arr2(&[[1.0, f64::NAN], [f64::NAN, 1.0]]);
        assert!(matches!(eigensystem(&c), Err(EigError::NonFinite)));
        let c = arr2(&[[f64::INFINITY, 0.0], [0.0, 1.0]]);
        assert!(matches!(eigensystem(&c), Err(EigError::NonFinite)));
    }

    #[test]
    fn zero_matrix_is_fine() {
        let c = Array2::<f64>::zeros((3, 3));
        let eig = eigensystem(&c).unwrap();
        assert!(eig.values.iter().all(|&l| l == 0.0));
        assert!(orthonormality_defect(&eig) < 1e-12);
    }

    /// Characteristic-polynomial oracle: det(C - lambda I) by Gaussian
    /// elimination, roots bracketed on the Gershgorin interval and
    /// refined by bisection. Independent of the Jacobi path.
    fn charpoly_roots(matrix: &Array2<f64>) -> Vec<f64> {
        let n = matrix.nrows();
        let det = |lambda: f64| -> f64 {
            let mut m: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| matrix[[i, j]] - if i == j { lambda } else { 0.0 })
                        .collect()
                })
                .collect();
            let mut det = 1.0;
            for col in 0..n {
                let pivot = (col..n)
                    .max_by(|&a, &b| m[a][col].abs().partial_cmp(&m[b][col].abs()).unwrap())
                    .unwrap();
                if m[pivot][col] == 0.0 {
                    return 0.0;
                }
                if pivot != col {
                    m.swap(pivot, col);
                    det = -det;
                }
                det *= m[col][col];
                for row in (col + 1)..n {
                    let f = m[row][col] / m[col][col];
                    for j in col..n {
                        m[row][j] -= f * m[col][j];
                    }
                }
            }
            det
        };

        // Gershgorin bounds.
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let radius: f64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| matrix[[i, j]].abs())
                .sum();
            lo = lo.min(matrix[[i, i]] - radius);
            hi = hi.max(matrix[[i, i]] + radius);
        }
        lo -= 1.0;
        hi += 1.0;

        let samples = 20_000;
        let step = (hi - lo) / samples as f64;
        let mut roots = Vec::new();
        let mut prev = det(lo);
        for k in 1..=samples {
            let x = lo + step * k as f64;
            let cur = det(x);
            if prev == 0.0 {
                roots.push(lo + step * (k - 1) as f64);
            } else if prev.signum() != cur.signum() && cur != 0.0 {
                let mut a = x - step;
                let mut b = x;
                let mut fa = prev;
                for _ in 0..200 {
                    let mid = 0.5 * (a + b);
                    let fm = det(mid);
                    if fm == 0.0 {
                        a = mid;
                        b = mid;
                        break;
                    }
                    if fa.signum() == fm.signum() {
                        a = mid;
                        fa = fm;
                    } else {
                        b = mid;
                    }
                }
                roots.push(0.5 * (a + b));
            }
            prev = cur;
        }
        roots.sort_by(|a, b| b.partial_cmp(a).unwrap());
        roots
    }

    #[test]
    fn eigenvalues_match_characteristic_polynomial_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x8a3f);
        let n = 8;
        let mut c = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in i..n {
                let x: f64 = rng.random_range(-1.0..1.0);
                c[[i, j]] = x;
                c[[j, i]] = x;
            }
        }
        let eig = eigensystem(&c).unwrap();
        let roots = charpoly_roots(&c);
        assert_eq!(roots.len(), n, "oracle must bracket all roots");
        for (lam, root) in eig.values.iter().zip(&roots) {
            assert!(
                (lam - root).abs() < 1e-8,
                "eigenvalue {lam} vs charpoly root {root}"
            );
        }
    }

    #[test]
    fn deterministic_across_repeat_runs() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 12;
        let mut c = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in i..n {
                let x: f64 = rng.random_range(-1.0..1.0);
                c[[i, j]] = x;
                c[[j, i]] = x;
            }
        }
        let first = eigensystem(&c).unwrap();
        let second = eigensystem(&c).unwrap();
        assert_eq!(first.values, second.values);
        assert_eq!(
            first.vectors.as_slice().unwrap(),
            second.vectors.as_slice().unwrap()
        );
    }

    #[test]
    fn trace_is_preserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for n in [2usize, 5, 17, 33] {
            let mut c = Array2::<f64>::zeros((n, n));
            for i in 0..n {
                for j in i..n {
                    let x: f64 = rng.random_range(-2.0..2.0);
                    c[[i, j]] = x;
                    c[[j, i]] = x;
                }
            }
            let trace: f64 = (0..n).map(|i| c[[i, i]]).sum();
            let eig = eigensystem(&c).unwrap();
            let sum: f64 = eig.values.iter().sum();
            assert!(
                (sum - trace).abs() <= 1e-10 * trace.abs().max(1.0),
                "n={n}: trace {trace} vs eigenvalue sum {sum}"
            );
        }
    }
}
