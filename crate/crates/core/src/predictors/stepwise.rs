//! Greedy forward stepwise regression.
//!
//! Each step adds the column with the largest absolute inner product with
//! the current residual (lowest index on ties) and refits unpenalised least
//! squares on the selected set through an incrementally built QR basis.

use nalgebra::DMatrix;

use crate::error::{check_len, Error, Result};

/// Columns whose component orthogonal to the selected set is below this
/// fraction of their norm are treated as linearly dependent.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct StepwiseFit {
    pub beta: Vec<f64>,
    pub fitted: Vec<f64>,
    /// Selected columns, in order of entry.
    pub selected: Vec<usize>,
    pub warnings: Vec<String>,
}

pub fn solve_forward_stepwise(x: &DMatrix<f64>, y: &[f64], k: usize) -> Result<StepwiseFit> {
    let (n, p) = (x.nrows(), x.ncols());
    check_len(n, y.len())?;
    if k > n.min(p) {
        return Err(Error::invalid(format!("k = {k} exceeds min(n, p) = {}", n.min(p))));
    }
    let cols: Vec<&[f64]> = x.as_slice().chunks_exact(n).collect();

    let mut resid = y.to_vec();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    // r_coef[s] holds column s of the upper-triangular R (length s + 1)
    let mut r_coef: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut selected = Vec::with_capacity(k);
    let mut available = vec![true; p];
    let mut warnings = Vec::new();

    while selected.len() < k {
        let mut best: Option<(usize, f64)> = None;
        for j in (0..p).filter(|&j| available[j]) {
            let score = cols[j].iter().zip(&resid).map(|(a, b)| a * b).sum::<f64>().abs();
            if best.map_or(true, |(_, s)| score > s) {
                best = Some((j, score));
            }
        }
        let Some((j, _)) = best else {
            warnings.push(format!("no admissible column left after {} steps", selected.len()));
            break;
        };
        available[j] = false;

        // two passes of modified Gram-Schmidt
        let mut v = cols[j].to_vec();
        let mut coef = vec![0.0; basis.len() + 1];
        for _ in 0..2 {
            for (s, q) in basis.iter().enumerate() {
                let c: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
                coef[s] += c;
                v.iter_mut().zip(q).for_each(|(vi, qi)| *vi -= c * qi);
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let col_norm = cols[j].iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm <= RANK_TOL * col_norm.max(f64::MIN_POSITIVE) {
            warnings.push(format!("column {j} is linearly dependent on the selected set; dropped"));
            continue;
        }
        v.iter_mut().for_each(|a| *a /= norm);
        coef[basis.len()] = norm;

        let c: f64 = v.iter().zip(&resid).map(|(a, b)| a * b).sum();
        resid.iter_mut().zip(&v).for_each(|(r, q)| *r -= c * q);
        basis.push(v);
        r_coef.push(coef);
        selected.push(j);
    }

    // beta_sel = R^{-1} Q^T y by back substitution
    let s = selected.len();
    let qty: Vec<f64> = basis.iter().map(|q| q.iter().zip(y).map(|(a, b)| a * b).sum()).collect();
    let mut b_sel = vec![0.0; s];
    for i in (0..s).rev() {
        let mut acc = qty[i];
        for c in i + 1..s {
            acc -= r_coef[c][i] * b_sel[c];
        }
        b_sel[i] = acc / r_coef[i][i];
    }
    let mut beta = vec![0.0; p];
    for (idx, &j) in selected.iter().enumerate() {
        beta[j] = b_sel[idx];
    }
    let fitted = y.iter().zip(&resid).map(|(a, r)| a - r).collect();
    Ok(StepwiseFit { beta, fitted, selected, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{standard_normal_vec, RngSeed};

    #[test]
    fn zero_steps_is_zero_fit() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let fit = solve_forward_stepwise(&x, &[1.0, 2.0, 3.0], 0).unwrap();
        assert!(fit.fitted.iter().all(|&v| v == 0.0));
        assert!(fit.selected.is_empty());
    }

    #[test]
    fn orthonormal_design_selects_by_inner_product() {
        // 5x5 orthonormal design from a QR of a random matrix; brute force the
        // ordering of |X_j^T y|.
        let mut rng = RngSeed::new(21).rng();
        let a = DMatrix::from_column_slice(5, 5, &standard_normal_vec(&mut rng, 25));
        let q = a.qr().q();
        let y = standard_normal_vec(&mut rng, 5);
        let mut order: Vec<(usize, f64)> = (0..5)
            .map(|j| (j, q.column(j).iter().zip(&y).map(|(a, b)| a * b).sum::<f64>().abs()))
            .collect();
        order.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        let fit = solve_forward_stepwise(&q, &y, 5).unwrap();
        let expected: Vec<usize> = order.iter().map(|o| o.0).collect();
        assert_eq!(fit.selected, expected);
    }

    #[test]
    fn saturated_model_is_least_squares() {
        let mut rng = RngSeed::new(22).rng();
        let x = DMatrix::from_column_slice(12, 4, &standard_normal_vec(&mut rng, 48));
        let y = standard_normal_vec(&mut rng, 12);
        let fit = solve_forward_stepwise(&x, &y, 4).unwrap();
        let ls = (x.transpose() * &x)
            .cholesky()
            .unwrap()
            .solve(&(x.transpose() * nalgebra::DVector::from_column_slice(&y)));
        for j in 0..4 {
            assert!((fit.beta[j] - ls[j]).abs() < 1e-10);
        }
    }

    #[test]
    fn duplicate_column_is_dropped() {
        let x = DMatrix::from_row_slice(4, 3, &[
            1.0, 1.0, 0.0,
            2.0, 2.0, 1.0,
            0.0, 0.0, 1.0,
            1.0, 1.0, 0.0,
        ]);
        let fit = solve_forward_stepwise(&x, &[1.0, 2.0, 0.5, 1.0], 3).unwrap();
        assert_eq!(fit.selected, vec![0, 2]);
        assert_eq!(fit.warnings.len(), 2);
    }

    #[test]
    fn greedy_nesting() {
        let mut rng = RngSeed::new(23).rng();
        let x = DMatrix::from_column_slice(20, 30, &standard_normal_vec(&mut rng, 600));
        let y = standard_normal_vec(&mut rng, 20);
        let small = solve_forward_stepwise(&x, &y, 4).unwrap();
        let large = solve_forward_stepwise(&x, &y, 9).unwrap();
        assert_eq!(&large.selected[..4], &small.selected[..]);
    }

    #[test]
    fn k_too_large_rejected() {
        let x = DMatrix::<f64>::zeros(3, 5);
        assert!(solve_forward_stepwise(&x, &[0.0; 3], 4).is_err());
    }
}
