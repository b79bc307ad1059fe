//! Dense vector helpers and a singular value decomposition.
//!
//! The SVD is Householder QR followed by one-sided (Hestenes) Jacobi on the
//! triangular factor. It is accurate for small singular values, which the
//! numerical-rank check in [`crate::subspace`] relies on.

use crate::Scalar;

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
pub fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

pub fn sub<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

pub fn scale<T: Scalar>(a: &[T], s: T) -> Vec<T> {
    a.iter().map(|&x| x * s).collect()
}

/// `y += alpha * x`
#[inline]
pub fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Unit-length copy of `a`, or `None` for the zero vector.
pub fn normalized<T: Scalar>(a: &[T]) -> Option<Vec<T>> {
    let n = norm(a);
    if n > T::zero() && n.is_finite() {
        Some(a.iter().map(|&x| x / n).collect())
    } else {
        None
    }
}

/// Cosine similarity; zero when either vector is zero.
pub fn cosine<T: Scalar>(a: &[T], b: &[T]) -> T {
    let denom = norm(a) * norm(b);
    if denom > T::zero() {
        dot(a, b) / denom
    } else {
        T::zero()
    }
}

/// Singular values (descending) and matching right singular vectors.
#[derive(Debug, Clone)]
pub struct RightSvd<T> {
    pub singular_values: Vec<T>,
    /// `vectors[i]` pairs with `singular_values[i]`; each has `cols` entries.
    pub vectors: Vec<Vec<T>>,
}

/// Right singular vectors of a row-major `rows x cols` matrix.
///
/// Returns `min(rows, cols)` singular triplets. Vectors paired with a zero
/// singular value are arbitrary unit vectors when `rows >= cols` and zero
/// vectors otherwise.
pub fn right_svd<T: Scalar>(data: &[T], rows: usize, cols: usize) -> RightSvd<T> {
    assert_eq!(data.len(), rows * cols);
    if rows == 0 || cols == 0 {
        return RightSvd {
            singular_values: Vec::new(),
            vectors: Vec::new(),
        };
    }
    if rows >= cols {
        // Column-major copy so Householder works on contiguous columns.
        let mut columns: Vec<Vec<T>> = (0..cols)
            .map(|j| (0..rows).map(|i| data[i * cols + j]).collect())
            .collect();
        householder_r(&mut columns, rows);
        // columns now hold R in their first `cols` entries.
        let mut r: Vec<Vec<T>> = columns.into_iter().map(|mut c| {
            c.truncate(cols);
            c
        }).collect();
        let mut v: Vec<Vec<T>> = (0..cols)
            .map(|j| {
                let mut e = vec![T::zero(); cols];
                e[j] = T::one();
                e
            })
            .collect();
        hestenes(&mut r, Some(&mut v));
        let sigma: Vec<T> = r.iter().map(|c| norm(c)).collect();
        sort_pairs(sigma, v)
    } else {
        // Orthogonalise the rows of A (columns of A^T); the rotated columns are
        // sigma_i * v_i.
        let mut columns: Vec<Vec<T>> = (0..rows)
            .map(|i| data[i * cols..(i + 1) * cols].to_vec())
            .collect();
        hestenes(&mut columns, None);
        let sigma: Vec<T> = columns.iter().map(|c| norm(c)).collect();
        let vectors = columns
            .into_iter()
            .zip(&sigma)
            .map(|(c, &s)| {
                if s > T::zero() {
                    c.into_iter().map(|x| x / s).collect()
                } else {
                    vec![T::zero(); cols]
                }
            })
            .collect();
        sort_pairs(sigma, vectors)
    }
}

fn sort_pairs<T: Scalar>(sigma: Vec<T>, vectors: Vec<Vec<T>>) -> RightSvd<T> {
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&a, &b| sigma[b].partial_cmp(&sigma[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    RightSvd {
        singular_values: order.iter().map(|&i| sigma[i]).collect(),
        vectors: order.iter().map(|&i| vectors[i].clone()).collect(),
    }
}

/// In-place Householder triangularisation of a column-major `rows x n`
/// matrix (`rows >= n`). On return the leading `n x n` block is R.
fn householder_r<T: Scalar>(columns: &mut [Vec<T>], rows: usize) {
    let n = columns.len();
    let two = T::lit(2.0);
    for k in 0..n {
        let alpha = norm(&columns[k][k..rows]);
        if alpha == T::zero() {
            continue;
        }
        let x0 = columns[k][k];
        let signed = if x0 >= T::zero() { -alpha } else { alpha };
        let mut v: Vec<T> = columns[k][k..rows].to_vec();
        v[0] = x0 - signed;
        let vnorm2 = dot(&v, &v);
        if vnorm2 == T::zero() {
            continue;
        }
        columns[k][k] = signed;
        for x in columns[k][k + 1..rows].iter_mut() {
            *x = T::zero();
        }
        for col in columns[k + 1..].iter_mut() {
            let f = two * dot(&v, &col[k..rows]) / vnorm2;
            for (c, &vi) in col[k..rows].iter_mut().zip(&v) {
                *c -= f * vi;
            }
        }
    }
}

/// One-sided Jacobi: rotates columns until they are mutually orthogonal,
/// accumulating the same rotations into `v` when given.
fn hestenes<T: Scalar>(columns: &mut [Vec<T>], mut v: Option<&mut Vec<Vec<T>>>) {
    let n = columns.len();
    let tol = T::epsilon();
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = dot(&columns[p], &columns[p]);
                let beta = dot(&columns[q], &columns[q]);
                let gamma = dot(&columns[p], &columns[q]);
                if gamma == T::zero() || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate(columns, p, q, c, s);
                if let Some(v) = v.as_deref_mut() {
                    rotate(v, p, q, c, s);
                }
            }
        }
        if !rotated {
            break;
        }
    }
}

fn rotate<T: Scalar>(cols: &mut [Vec<T>], p: usize, q: usize, c: T, s: T) {
    let (left, right) = cols.split_at_mut(q);
    let cp = &mut left[p];
    let cq = &mut right[0];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let xp = *x;
        let xq = *y;
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}
