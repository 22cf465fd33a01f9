//! Small dense linear algebra for d×d matrices (d is 2 or 3 in practice,
//! the routines work for any small d). Row-major storage throughout.

use crate::scalar::Scalar;

/// Multiplies two d×d row-major matrices.
pub fn matmul<T: Scalar>(a: &[T], b: &[T], d: usize) -> Vec<T> {
    let mut out = vec![T::zero(); d * d];
    for i in 0..d {
        for k in 0..d {
            let aik = a[i * d + k];
            for j in 0..d {
                out[i * d + j] += aik * b[k * d + j];
            }
        }
    }
    out
}

/// Transposes a d×d row-major matrix.
pub fn transpose<T: Scalar>(a: &[T], d: usize) -> Vec<T> {
    let mut out = vec![T::zero(); d * d];
    for i in 0..d {
        for j in 0..d {
            out[j * d + i] = a[i * d + j];
        }
    }
    out
}

/// Matrix-vector product of a d×d matrix with a d-vector.
pub fn matvec<T: Scalar>(a: &[T], x: &[T], d: usize) -> Vec<T> {
    let mut out = vec![T::zero(); d];
    for i in 0..d {
        for j in 0..d {
            out[i] += a[i * d + j] * x[j];
        }
    }
    out
}

/// Determinant by Gaussian elimination with partial pivoting.
pub fn det<T: Scalar>(a: &[T], d: usize) -> T {
    match d {
        1 => return a[0],
        2 => return a[0] * a[3] - a[1] * a[2],
        3 => {
            return a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6])
                + a[2] * (a[3] * a[7] - a[4] * a[6]);
        }
        _ => {}
    }
    let mut m = a.to_vec();
    let mut sign = T::one();
    for col in 0..d {
        let mut pivot = col;
        for row in col + 1..d {
            if m[row * d + col].abs() > m[pivot * d + col].abs() {
                pivot = row;
            }
        }
        if m[pivot * d + col] == T::zero() {
            return T::zero();
        }
        if pivot != col {
            for j in 0..d {
                m.swap(col * d + j, pivot * d + j);
            }
            sign = -sign;
        }
        let p = m[col * d + col];
        for row in col + 1..d {
            let f = m[row * d + col] / p;
            for j in col..d {
                let sub = f * m[col * d + j];
                m[row * d + j] -= sub;
            }
        }
    }
    let mut out = sign;
    for i in 0..d {
        out *= m[i * d + i];
    }
    out
}

/// Max-abs entry of A·Aᵀ − I, the orthogonality residual.
pub fn orthogonality_residual<T: Scalar>(a: &[T], d: usize) -> T {
    let aat = matmul(a, &transpose(a, d), d);
    let mut worst = T::zero();
    for i in 0..d {
        for j in 0..d {
            let target = if i == j { T::one() } else { T::zero() };
            worst = worst.max((aat[i * d + j] - target).abs());
        }
    }
    worst
}

/// Orthonormalizes the columns of a d×d matrix in place (modified
/// Gram-Schmidt). Returns false if a column collapses to zero.
pub fn orthonormalize_columns<T: Scalar>(m: &mut [T], d: usize) -> bool {
    for j in 0..d {
        for i in 0..j {
            let mut dot = T::zero();
            for k in 0..d {
                dot += m[k * d + i] * m[k * d + j];
            }
            for k in 0..d {
                let sub = dot * m[k * d + i];
                m[k * d + j] -= sub;
            }
        }
        let mut norm = T::zero();
        for k in 0..d {
            norm += m[k * d + j] * m[k * d + j];
        }
        let norm = norm.sqrt();
        if norm <= T::epsilon() * T::of(16.0) {
            return false;
        }
        for k in 0..d {
            m[k * d + j] /= norm;
        }
    }
    true
}

/// Eigendecomposition of a symmetric d×d matrix by cyclic Jacobi sweeps.
/// Returns eigenvalues (descending) and row-major eigenvectors, one per row.
pub fn sym_eigen_desc<T: Scalar>(a: &[T], d: usize) -> (Vec<T>, Vec<T>) {
    let mut m = a.to_vec();
    // v accumulates the rotations; columns are eigenvectors.
    let mut v = vec![T::zero(); d * d];
    for i in 0..d {
        v[i * d + i] = T::one();
    }
    let mut scale = T::zero();
    for x in a {
        scale = scale.max(x.abs());
    }
    if scale == T::zero() {
        scale = T::one();
    }
    let tol = scale * T::epsilon() * T::of(4.0);
    for _sweep in 0..64 {
        let mut off = T::zero();
        for p in 0..d {
            for q in p + 1..d {
                off = off.max(m[p * d + q].abs());
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                let apq = m[p * d + q];
                if apq.abs() <= tol * T::of(1e-3) {
                    continue;
                }
                let app = m[p * d + p];
                let aqq = m[q * d + q];
                let theta = (aqq - app) / (T::of(2.0) * apq);
                let t = {
                    let sign = if theta >= T::zero() { T::one() } else { -T::one() };
                    sign / (theta.abs() + (theta * theta + T::one()).sqrt())
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..d {
                    let mkp = m[k * d + p];
                    let mkq = m[k * d + q];
                    m[k * d + p] = c * mkp - s * mkq;
                    m[k * d + q] = s * mkp + c * mkq;
                }
                for k in 0..d {
                    let mpk = m[p * d + k];
                    let mqk = m[q * d + k];
                    m[p * d + k] = c * mpk - s * mqk;
                    m[q * d + k] = s * mpk + c * mqk;
                }
                for k in 0..d {
                    let vkp = v[k * d + p];
                    let vkq = v[k * d + q];
                    v[k * d + p] = c * vkp - s * vkq;
                    v[k * d + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| {
        m[j * d + j]
            .partial_cmp(&m[i * d + i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let mut vals = Vec::with_capacity(d);
    let mut rows = vec![T::zero(); d * d];
    for (out_row, &idx) in order.iter().enumerate() {
        vals.push(m[idx * d + idx]);
        for k in 0..d {
            rows[out_row * d + k] = v[k * d + idx];
        }
    }
    (vals, rows)
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut out = T::zero();
    for (x, y) in a.iter().zip(b) {
        out += *x * *y;
    }
    out
}

pub fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

pub fn cross3<T: Scalar>(a: &[T], b: &[T]) -> [T; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn det_small() {
        let a = [1.0f64, 2.0, 3.0, 4.0];
        assert_eq!(det(&a, 2), -2.0);
        let id = [1.0f64, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        assert_eq!(det(&id, 3), 1.0);
    }

    #[test]
    fn jacobi_diagonalizes() {
        // A = Q diag(5,2,1) Qᵀ for a known rotation Q.
        let a = [4.0f64, 1.0, 0.5, 1.0, 3.0, 0.25, 0.5, 0.25, 2.0];
        let (vals, rows) = sym_eigen_desc(&a, 3);
        assert!(vals[0] >= vals[1] && vals[1] >= vals[2]);
        // Check A e = λ e for each eigenpair.
        for k in 0..3 {
            let e = &rows[k * 3..k * 3 + 3];
            let ae = matvec(&a, e, 3);
            for i in 0..3 {
                assert!((ae[i] - vals[k] * e[i]).abs() < 1e-12);
            }
        }
        assert!(orthogonality_residual(&rows, 3) < 1e-13);
    }
}
