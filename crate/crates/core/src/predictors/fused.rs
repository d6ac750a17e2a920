//! One-dimensional fused lasso (total-variation denoising) solved exactly.
//!
//! Minimises `0.5 ||y - theta||^2 + lambda * sum |theta[i+1] - theta[i]|` with
//! Johnson's linear-time dynamic program: a forward pass tracks the knots of
//! the piecewise-linear derivative of the message function, a backward pass
//! clips each coordinate into the interval recorded for it.

use crate::error::{Error, Result};

pub fn solve_fused_lasso_1d(y: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::invalid(format!("lambda must be non-negative, got {lambda}")));
    }
    let n = y.len();
    if n <= 1 || lambda == 0.0 {
        return Ok(y.to_vec());
    }

    let mut x = vec![0.0; 2 * n];
    let mut a = vec![0.0; 2 * n];
    let mut b = vec![0.0; 2 * n];
    let mut tm = vec![0.0; n - 1];
    let mut tp = vec![0.0; n - 1];

    tm[0] = -lambda + y[0];
    tp[0] = lambda + y[0];
    let mut l = n - 1;
    let mut r = n;
    x[l] = tm[0];
    x[r] = tp[0];
    a[l] = 1.0;
    b[l] = -y[0] + lambda;
    a[r] = -1.0;
    b[r] = y[0] + lambda;
    let mut afirst = 1.0;
    let mut bfirst = -y[1] - lambda;
    let mut alast = -1.0;
    let mut blast = y[1] - lambda;

    for k in 1..n - 1 {
        let mut lo = l;
        while lo <= r {
            if afirst * x[lo] + bfirst > -lambda {
                break;
            }
            afirst += a[lo];
            bfirst += b[lo];
            lo += 1;
        }
        // hi may step to lo - 1, which is >= l - 1 >= 0 at every stage
        let mut hi = r as isize;
        while hi >= lo as isize {
            let h = hi as usize;
            if -alast * x[h] - blast < lambda {
                break;
            }
            alast += a[h];
            blast += b[h];
            hi -= 1;
        }

        tm[k] = (-lambda - bfirst) / afirst;
        l = lo - 1;
        x[l] = tm[k];
        tp[k] = (lambda + blast) / (-alast);
        r = (hi + 1) as usize;
        x[r] = tp[k];

        a[l] = afirst;
        b[l] = bfirst + lambda;
        a[r] = alast;
        b[r] = blast + lambda;
        afirst = 1.0;
        bfirst = -y[k + 1] - lambda;
        alast = -1.0;
        blast = y[k + 1] - lambda;
    }

    let mut lo = l;
    while lo <= r {
        if afirst * x[lo] + bfirst > 0.0 {
            break;
        }
        afirst += a[lo];
        bfirst += b[lo];
        lo += 1;
    }

    let mut theta = vec![0.0; n];
    theta[n - 1] = -bfirst / afirst;
    for k in (0..n - 1).rev() {
        theta[k] = if theta[k + 1] > tp[k] {
            tp[k]
        } else if theta[k + 1] < tm[k] {
            tm[k]
        } else {
            theta[k + 1]
        };
    }
    Ok(theta)
}

/// Number of maximal constant runs in a piecewise-constant vector.
pub fn count_groups(theta: &[f64]) -> usize {
    if theta.is_empty() {
        return 0;
    }
    1 + theta.windows(2).filter(|w| w[0] != w[1]).count()
}

pub fn objective(y: &[f64], theta: &[f64], lambda: f64) -> f64 {
    let fit: f64 = y.iter().zip(theta).map(|(a, b)| 0.5 * (a - b) * (a - b)).sum();
    let tv: f64 = theta.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    fit + lambda * tv
}
