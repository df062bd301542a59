//! Kronecker-product application without forming the product matrix.

use super::dense::DenseMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Transpose {
    No,
    Yes,
}

/// y = (A1 (x) A2) x, where x is ordered with the direction-1 index outer
/// and the direction-2 index inner (row-major n1 x n2 reshape). Cost is
/// O(n1 n2 (n1 + n2)).
pub fn kron_matvec(a1: &DenseMatrix, a2: &DenseMatrix, x: &[f64]) -> Vec<f64> {
    kron_matvec_op(a1, Transpose::No, a2, Transpose::No, x)
}

/// Same as [`kron_matvec`] with optional transposition of either factor.
pub fn kron_matvec_op(
    a1: &DenseMatrix,
    t1: Transpose,
    a2: &DenseMatrix,
    t2: Transpose,
    x: &[f64],
) -> Vec<f64> {
    let (r1, c1) = match t1 {
        Transpose::No => (a1.rows(), a1.cols()),
        Transpose::Yes => (a1.cols(), a1.rows()),
    };
    let (r2, c2) = match t2 {
        Transpose::No => (a2.rows(), a2.cols()),
        Transpose::Yes => (a2.cols(), a2.rows()),
    };
    assert_eq!(x.len(), c1 * c2, "kron operand size mismatch");
    // Step 1: apply A2 along the inner index: T[i1, :] = op(A2) * X[i1, :].
    let mut t = vec![0.0; c1 * r2];
    for i1 in 0..c1 {
        let xrow = &x[i1 * c2..(i1 + 1) * c2];
        let trow = &mut t[i1 * r2..(i1 + 1) * r2];
        match t2 {
            Transpose::No => a2.matvec(xrow, trow),
            Transpose::Yes => a2.matvec_transpose(xrow, trow),
        }
    }
    // Step 2: apply A1 along the outer index: Y[:, j] = op(A1) * T[:, j].
    let mut y = vec![0.0; r1 * r2];
    match t1 {
        Transpose::No => {
            for i1 in 0..r1 {
                let arow = a1.row(i1);
                let yrow = &mut y[i1 * r2..(i1 + 1) * r2];
                for (k1, &a) in arow.iter().enumerate() {
                    if a == 0.0 {
                        continue;
                    }
                    let trow = &t[k1 * r2..(k1 + 1) * r2];
                    for (yv, tv) in yrow.iter_mut().zip(trow.iter()) {
                        *yv += a * tv;
                    }
                }
            }
        }
        Transpose::Yes => {
            for k1 in 0..c1 {
                let arow = a1.row(k1);
                let trow = &t[k1 * r2..(k1 + 1) * r2];
                for (i1, &a) in arow.iter().enumerate() {
                    if a == 0.0 {
                        continue;
                    }
                    let yrow = &mut y[i1 * r2..(i1 + 1) * r2];
                    for (yv, tv) in yrow.iter_mut().zip(trow.iter()) {
                        *yv += a * tv;
                    }
                }
            }
        }
    }
    y
}

/// Explicitly formed Kronecker product; test oracles only.
pub fn kron_dense(a1: &DenseMatrix, a2: &DenseMatrix) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(a1.rows() * a2.rows(), a1.cols() * a2.cols());
    for i1 in 0..a1.rows() {
        for j1 in 0..a1.cols() {
            let v1 = a1[(i1, j1)];
            if v1 == 0.0 {
                continue;
            }
            for i2 in 0..a2.rows() {
                for j2 in 0..a2.cols() {
                    out[(i1 * a2.rows() + i2, j1 * a2.cols() + j2)] = v1 * a2[(i2, j2)];
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::Rng;

    fn random(r: usize, c: usize, rng: &mut Rng) -> DenseMatrix {
        DenseMatrix::from_fn(r, c, |_, _| 0.0).clone().tap(|m| {
            for i in 0..r {
                for j in 0..c {
                    m[(i, j)] = rng.next_signed();
                }
            }
        })
    }

    trait Tap: Sized {
        fn tap(mut self, f: impl FnOnce(&mut Self)) -> Self {
            f(&mut self);
            self
        }
    }
    impl Tap for DenseMatrix {}

    #[test]
    fn identity_factors() {
        let i2 = DenseMatrix::identity(2);
        let i3 = DenseMatrix::identity(3);
        let x: Vec<f64> = (0..6).map(|v| v as f64).collect();
        let y = kron_matvec(&i2, &i3, &x);
        assert_eq!(y, x);
    }

    #[test]
    fn matches_explicit_product() {
        let mut rng = Rng::new(77);
        let a1 = random(2, 2, &mut rng);
        let a2 = random(2, 2, &mut rng);
        let x = rng.vec_signed(4);
        let y = kron_matvec(&a1, &a2, &x);
        let k = kron_dense(&a1, &a2);
        let mut y2 = vec![0.0; 4];
        k.matvec(&x, &mut y2);
        for i in 0..4 {
            assert!((y[i] - y2[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn mixed_product_property() {
        let mut rng = Rng::new(3);
        let a1 = random(3, 3, &mut rng);
        let a2 = random(3, 3, &mut rng);
        let b1 = random(3, 3, &mut rng);
        let b2 = random(3, 3, &mut rng);
        let x = rng.vec_signed(9);
        let lhs = kron_matvec(&a1, &a2, &kron_matvec(&b1, &b2, &x));
        let rhs = kron_matvec(&a1.matmul(&b1), &a2.matmul(&b2), &x);
        for i in 0..9 {
            assert!((lhs[i] - rhs[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn transpose_flags() {
        let mut rng = Rng::new(11);
        let a1 = random(3, 2, &mut rng);
        let a2 = random(4, 3, &mut rng);
        let x = rng.vec_signed(a1.rows() * a2.rows());
        let y = kron_matvec_op(&a1, Transpose::Yes, &a2, Transpose::Yes, &x);
        let k = kron_dense(&a1, &a2).transpose();
        let mut y2 = vec![0.0; k.rows()];
        k.matvec(&x, &mut y2);
        for i in 0..y2.len() {
            assert!((y[i] - y2[i]).abs() < 1e-13);
        }
    }
}
