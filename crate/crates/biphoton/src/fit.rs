//! Small least-squares fitting helpers for peak and dip shapes.

use crate::error::{Error, Result};

/// Solve the square system a·x = b by Gaussian elimination with partial
/// pivoting. Sizes here are tiny (≤ 5 parameters).
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut s = b[col];
        for k in (col + 1)..n {
            s -= a[col][k] * x[k];
        }
        x[col] = s / a[col][col];
    }
    Some(x)
}

/// Damped Gauss-Newton least squares with a numerical Jacobian.
pub fn least_squares<F>(residuals: F, mut params: Vec<f64>, max_iter: usize) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = params.len();
    let mut lambda = 1e-3;
    let mut cost = sum_sq(&residuals(&params));
    for _ in 0..max_iter {
        let r = residuals(&params);
        let m = r.len();
        if m < n {
            return Err(Error::Estimation("fewer residuals than parameters".into()));
        }
        // numerical Jacobian
        let mut jac = vec![vec![0.0; n]; m];
        for k in 0..n {
            let h = 1e-6 * params[k].abs().max(1e-9);
            let mut p_hi = params.clone();
            p_hi[k] += h;
            let mut p_lo = params.clone();
            p_lo[k] -= h;
            let r_hi = residuals(&p_hi);
            let r_lo = residuals(&p_lo);
            for i in 0..m {
                jac[i][k] = (r_hi[i] - r_lo[i]) / (2.0 * h);
            }
        }
        // normal equations with Levenberg damping
        let mut jtj = vec![vec![0.0; n]; n];
        let mut jtr = vec![0.0; n];
        for i in 0..m {
            for a in 0..n {
                jtr[a] += jac[i][a] * r[i];
                for b in 0..n {
                    jtj[a][b] += jac[i][a] * jac[i][b];
                }
            }
        }
        let mut improved = false;
        for _ in 0..8 {
            let mut lhs = jtj.clone();
            for (a, row) in lhs.iter_mut().enumerate() {
                row[a] += lambda * (jtj[a][a].max(1e-12));
            }
            let rhs: Vec<f64> = jtr.iter().map(|v| -v).collect();
            if let Some(step) = solve_dense(lhs, rhs) {
                let trial: Vec<f64> = params.iter().zip(&step).map(|(p, s)| p + s).collect();
                let trial_cost = sum_sq(&residuals(&trial));
                if trial_cost.is_finite() && trial_cost < cost {
                    let rel = (cost - trial_cost) / cost.max(1e-300);
                    params = trial;
                    cost = trial_cost;
                    lambda = (lambda * 0.3).max(1e-12);
                    improved = true;
                    if rel < 1e-12 {
                        return Ok(params);
                    }
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    Ok(params)
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// y = offset + amplitude · exp(−(x−center)²/(2σ²)).
#[derive(Debug, Clone, Copy)]
pub struct GaussianFit {
    pub amplitude: f64,
    pub center: f64,
    pub sigma: f64,
    pub offset: f64,
    pub residual_rms: f64,
}

fn moment_guess(x: &[f64], y: &[f64]) -> (f64, f64, f64, f64) {
    let min = y.iter().cloned().fold(f64::INFINITY, f64::min);
    let (imax, &ymax) =
        y.iter().enumerate().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap();
    let weights: Vec<f64> = y.iter().map(|v| (v - min).max(0.0)).collect();
    let wsum: f64 = weights.iter().sum();
    let (center, sigma) = if wsum > 0.0 {
        let mean = x.iter().zip(&weights).map(|(x, w)| x * w).sum::<f64>() / wsum;
        let var = x.iter().zip(&weights).map(|(x, w)| (x - mean) * (x - mean) * w).sum::<f64>()
            / wsum;
        (mean, var.sqrt().max((x[1] - x[0]).abs()))
    } else {
        (x[imax], (x[x.len() - 1] - x[0]).abs() / 4.0)
    };
    (ymax - min, center, sigma, min)
}

/// Fit a single Gaussian peak. `fit_offset = false` pins the baseline at 0.
pub fn fit_gaussian(x: &[f64], y: &[f64], fit_offset: bool) -> Result<GaussianFit> {
    if x.len() != y.len() || x.len() < 4 {
        return Err(Error::InsufficientData("need at least 4 samples for a Gaussian fit".into()));
    }
    let (a0, c0, s0, o0) = moment_guess(x, y);
    if !(a0.is_finite() && a0 > 0.0) {
        return Err(Error::Estimation("peak fit: data has no positive excursion".into()));
    }
    let model = |p: &[f64], xv: f64| -> f64 {
        let off = if p.len() > 3 { p[3] } else { 0.0 };
        off + p[0] * (-(xv - p[1]) * (xv - p[1]) / (2.0 * p[2] * p[2])).exp()
    };
    let p0 = if fit_offset { vec![a0, c0, s0, o0] } else { vec![a0 + o0, c0, s0] };
    let res = |p: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(&xv, &yv)| model(p, xv) - yv).collect() };
    let p = least_squares(res, p0, 60)?;
    let rms = (sum_sq(&res(&p)) / x.len() as f64).sqrt();
    let fitted = GaussianFit {
        amplitude: p[0],
        center: p[1],
        sigma: p[2].abs(),
        offset: if fit_offset { p[3] } else { 0.0 },
        residual_rms: rms,
    };
    if !fitted.sigma.is_finite() || fitted.sigma <= 0.0 || !fitted.amplitude.is_finite() {
        return Err(Error::Estimation("Gaussian fit diverged".into()));
    }
    Ok(fitted)
}

/// Two identical Gaussians offset symmetrically about a common centre:
/// y = A·[exp(−(x−c−d/2)²/(2σ²)) + exp(−(x−c+d/2)²/(2σ²))].
#[derive(Debug, Clone, Copy)]
pub struct DoubleGaussianFit {
    pub amplitude: f64,
    pub center: f64,
    pub separation: f64,
    pub sigma: f64,
    pub residual_rms: f64,
}

pub fn fit_double_gaussian(x: &[f64], y: &[f64]) -> Result<DoubleGaussianFit> {
    if x.len() != y.len() || x.len() < 6 {
        return Err(Error::InsufficientData("need at least 6 samples for a two-peak fit".into()));
    }
    let (a0, c0, s0, _) = moment_guess(x, y);
    let model = |p: &[f64], xv: f64| -> f64 {
        let (a, c, d, s) = (p[0], p[1], p[2], p[3]);
        a * ((-(xv - c - d / 2.0).powi(2) / (2.0 * s * s)).exp()
            + (-(xv - c + d / 2.0).powi(2) / (2.0 * s * s)).exp())
    };
    let res = |p: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(&xv, &yv)| model(p, xv) - yv).collect() };
    let p = least_squares(res, vec![a0 / 2.0, c0, s0, s0 * 0.7], 80)?;
    let rms = (sum_sq(&res(&p)) / x.len() as f64).sqrt();
    let fitted = DoubleGaussianFit {
        amplitude: p[0],
        center: p[1],
        separation: p[2].abs(),
        sigma: p[3].abs(),
        residual_rms: rms,
    };
    if !fitted.sigma.is_finite() || fitted.sigma <= 0.0 {
        return Err(Error::Estimation("two-peak fit diverged".into()));
    }
    Ok(fitted)
}

/// Gaussian dip on a flat baseline:
/// y = baseline · (1 − depth · exp(−(x−center)²/(2σ²))).
#[derive(Debug, Clone, Copy)]
pub struct DipFit {
    pub baseline: f64,
    /// Fractional dip depth; the fitted minimum is baseline·(1−depth).
    pub depth: f64,
    pub center: f64,
    pub sigma: f64,
    pub residual_rms: f64,
    /// Standard error of `depth` from the linearized covariance.
    pub depth_std_error: f64,
}

pub fn fit_gaussian_dip(x: &[f64], y: &[f64]) -> Result<DipFit> {
    if x.len() != y.len() || x.len() < 5 {
        return Err(Error::InsufficientData("need at least 5 samples for a dip fit".into()));
    }
    let max = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (imin, &ymin) =
        y.iter().enumerate().min_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap();
    if !(max > 0.0) {
        return Err(Error::Estimation("dip fit: no positive baseline".into()));
    }
    let span = (x[x.len() - 1] - x[0]).abs();
    let model = |p: &[f64], xv: f64| -> f64 {
        p[0] * (1.0 - p[1] * (-(xv - p[2]) * (xv - p[2]) / (2.0 * p[3] * p[3])).exp())
    };
    let res = |p: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(&xv, &yv)| model(p, xv) - yv).collect() };
    let p0 = vec![max, 1.0 - ymin / max, x[imin], span / 8.0];
    let p = least_squares(res, p0, 80)?;
    let r = res(&p);
    let rms = (sum_sq(&r) / x.len() as f64).sqrt();

    // linearized 1-sigma error of the depth parameter
    let h = 1e-6_f64.max(1e-6 * p[1].abs());
    let mut p_hi = p.clone();
    p_hi[1] += h;
    let r_hi = res(&p_hi);
    let grad_sq: f64 =
        r_hi.iter().zip(&r).map(|(a, b)| ((a - b) / h).powi(2)).sum();
    let dof = (x.len() as f64 - 4.0).max(1.0);
    let depth_err = if grad_sq > 0.0 {
        (sum_sq(&r) / dof / grad_sq).sqrt()
    } else {
        f64::INFINITY
    };

    let fitted = DipFit {
        baseline: p[0],
        depth: p[1],
        center: p[2],
        sigma: p[3].abs(),
        residual_rms: rms,
        depth_std_error: depth_err,
    };
    if !fitted.sigma.is_finite() || fitted.sigma <= 0.0 || !fitted.baseline.is_finite() {
        return Err(Error::Estimation("dip fit diverged".into()));
    }
    Ok(fitted)
}

/// Full width at half maximum of sampled data, by linear interpolation of
/// the half-maximum crossings around the global peak.
pub fn fwhm_interpolated(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::InsufficientData("need at least 3 samples for a FWHM".into()));
    }
    let (imax, &ymax) =
        y.iter().enumerate().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap();
    if !(ymax > 0.0) {
        return Err(Error::Estimation("FWHM: peak is not positive".into()));
    }
    let half = ymax / 2.0;
    let mut left = None;
    for i in (1..=imax).rev() {
        if y[i - 1] <= half && y[i] > half {
            let f = (half - y[i - 1]) / (y[i] - y[i - 1]);
            left = Some(x[i - 1] + f * (x[i] - x[i - 1]));
            break;
        }
    }
    let mut right = None;
    for i in imax..y.len() - 1 {
        if y[i] > half && y[i + 1] <= half {
            let f = (y[i] - half) / (y[i] - y[i + 1]);
            right = Some(x[i] + f * (x[i + 1] - x[i]));
            break;
        }
    }
    match (left, right) {
        (Some(l), Some(r)) => Ok(r - l),
        _ => Err(Error::Estimation("FWHM: half-maximum crossings not bracketed".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn gaussian_fit_recovers_parameters() {
        let x = linspace(-10.0, 10.0, 101);
        let y: Vec<f64> =
            x.iter().map(|&v| 0.3 + 2.5 * (-(v - 1.2) * (v - 1.2) / (2.0 * 2.0 * 2.0)).exp()).collect();
        let fit = fit_gaussian(&x, &y, true).unwrap();
        assert_relative_eq!(fit.amplitude, 2.5, max_relative = 1e-6);
        assert_relative_eq!(fit.center, 1.2, max_relative = 1e-6);
        assert_relative_eq!(fit.sigma, 2.0, max_relative = 1e-6);
        assert_relative_eq!(fit.offset, 0.3, max_relative = 1e-5);
        assert!(fit.residual_rms < 1e-9);
    }

    #[test]
    fn double_gaussian_fit_recovers_width() {
        let x = linspace(-12.0, 12.0, 161);
        let y: Vec<f64> = x
            .iter()
            .map(|&v| {
                1.4 * ((-(v - 1.5f64).powi(2) / (2.0 * 1.1 * 1.1)).exp()
                    + (-(v + 1.5f64).powi(2) / (2.0 * 1.1 * 1.1)).exp())
            })
            .collect();
        let fit = fit_double_gaussian(&x, &y).unwrap();
        assert_relative_eq!(fit.sigma, 1.1, max_relative = 1e-4);
        assert_relative_eq!(fit.separation, 3.0, max_relative = 1e-4);
    }

    #[test]
    fn dip_fit_recovers_visibility() {
        let x = linspace(-50.0, 50.0, 81);
        let y: Vec<f64> = x
            .iter()
            .map(|&v| 200.0 * (1.0 - 0.62 * (-v * v / (2.0 * 9.0 * 9.0)).exp()))
            .collect();
        let fit = fit_gaussian_dip(&x, &y).unwrap();
        assert_relative_eq!(fit.baseline, 200.0, max_relative = 1e-6);
        assert_relative_eq!(fit.depth, 0.62, max_relative = 1e-6);
        assert_relative_eq!(fit.sigma, 9.0, max_relative = 1e-5);
    }

    #[test]
    fn fwhm_of_sampled_gaussian() {
        let x = linspace(-8.0, 8.0, 400);
        let sigma = 1.7;
        let y: Vec<f64> = x.iter().map(|&v| (-v * v / (2.0 * sigma * sigma)).exp()).collect();
        let w = fwhm_interpolated(&x, &y).unwrap();
        assert_relative_eq!(w, crate::units::sigma_to_fwhm(sigma), max_relative = 1e-3);
    }
}
