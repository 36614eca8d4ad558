//! Minimal dense linear algebra: LU factorization with partial pivoting,
//! enough for the small-system steady-state fallback and the Newton polish
//! in the fluid engine.

/// Solves `A x = b` in place for a dense row-major `n x n` matrix.
/// Returns `None` if the matrix is numerically singular.
pub fn lu_solve(n: usize, a: &mut [f64], b: &mut [f64]) -> Option<()> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    let mut perm: Vec<usize> = (0..n).collect();

    for k in 0..n {
        // Partial pivot.
        let mut pivot = k;
        let mut best = a[k * n + k].abs();
        for i in (k + 1)..n {
            let v = a[i * n + k].abs();
            if v > best {
                best = v;
                pivot = i;
            }
        }
        if best < 1e-300 {
            return None;
        }
        if pivot != k {
            for j in 0..n {
                a.swap(k * n + j, pivot * n + j);
            }
            perm.swap(k, pivot);
            b.swap(k, pivot);
        }
        let akk = a[k * n + k];
        for i in (k + 1)..n {
            let factor = a[i * n + k] / akk;
            if factor == 0.0 {
                continue;
            }
            a[i * n + k] = 0.0;
            for j in (k + 1)..n {
                a[i * n + j] -= factor * a[k * n + j];
            }
            b[i] -= factor * b[k];
        }
    }

    // Back substitution.
    for i in (0..n).rev() {
        let mut acc = b[i];
        for j in (i + 1)..n {
            acc -= a[i * n + j] * b[j];
        }
        b[i] = acc / a[i * n + i];
    }
    Some(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        // [2 1; 1 3] x = [5; 10] -> x = [1, 3]
        let mut a = vec![2.0, 1.0, 1.0, 3.0];
        let mut b = vec![5.0, 10.0];
        lu_solve(2, &mut a, &mut b).unwrap();
        assert!((b[0] - 1.0).abs() < 1e-12);
        assert!((b[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_singular() {
        let mut a = vec![1.0, 2.0, 2.0, 4.0];
        let mut b = vec![1.0, 2.0];
        assert!(lu_solve(2, &mut a, &mut b).is_none());
    }
}
