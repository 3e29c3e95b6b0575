//! Schmidt decomposition of joint amplitudes and the closed-form
//! Gaussian-model purities.

use faer::Mat;
use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::jsa::{Arm, JointAmplitude, JointIntensity};

/// Relative cutoff below which singular values are treated as numerical
/// noise modes and dropped before computing K.
const LAMBDA_TRUNCATION: f64 = 1e-12;

/// Result of a Schmidt decomposition.
///
/// `lambdas` are the squared Schmidt coefficients in descending order,
/// renormalized to Σλ = 1. Mode matrices hold one mode per column, sampled
/// on the grid axes and orthonormal with respect to the continuous inner
/// product (Σ g_a g_b* Δν = δ_ab).
#[derive(Debug, Clone)]
pub struct SchmidtResult {
    pub lambdas: Vec<f64>,
    pub signal_modes: Array2<Complex64>,
    pub idler_modes: Array2<Complex64>,
    /// Effective number of populated mode pairs, K = 1/Σλ².
    pub schmidt_number: f64,
    /// Heralded single-photon purity, P = 1/K.
    pub purity: f64,
}

impl SchmidtResult {
    /// Von Neumann entanglement entropy, −Σ λ log2 λ.
    pub fn entropy_bits(&self) -> f64 {
        -self.lambdas.iter().filter(|&&l| l > 0.0).map(|l| l * l.log2()).sum::<f64>()
    }
}

fn to_faer(values: &Array2<Complex64>, scale: f64) -> Mat<Complex64> {
    Mat::from_fn(values.nrows(), values.ncols(), |i, j| values[(i, j)] * scale)
}

/// SVD core shared by the amplitude and histogram entry points.
/// `mode_scale` converts discrete singular vectors into functions
/// orthonormal under the continuous inner product.
fn decompose_matrix(
    m: Mat<Complex64>,
    signal_mode_scale: f64,
    idler_mode_scale: f64,
) -> Result<SchmidtResult> {
    let svd = m
        .svd()
        .map_err(|e| Error::Estimation(format!("singular value decomposition failed: {e:?}")))?;

    let s = svd.S();
    let n_min = m.nrows().min(m.ncols());
    let mut raw: Vec<f64> = (0..n_min)
        .map(|k| {
            let v: Complex64 = s[k];
            v.re * v.re
        })
        .collect();
    // singular values come back sorted descending; enforce anyway
    raw.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let max = raw[0];
    if !(max > 0.0) {
        return Err(Error::DegenerateInput("all Schmidt coefficients vanish".into()));
    }
    let kept = raw.iter().take_while(|&&l| l > LAMBDA_TRUNCATION * max).count().max(1);
    raw.truncate(kept);
    let total: f64 = raw.iter().sum();
    let lambdas: Vec<f64> = raw.iter().map(|l| l / total).collect();

    let sum_sq: f64 = lambdas.iter().map(|l| l * l).sum();
    let schmidt_number = 1.0 / sum_sq;

    let u = svd.U();
    let v = svd.V();
    let mut signal_modes = Array2::zeros((m.nrows(), kept));
    let mut idler_modes = Array2::zeros((m.ncols(), kept));
    for k in 0..kept {
        for i in 0..m.nrows() {
            signal_modes[(i, k)] = u[(i, k)] * signal_mode_scale;
        }
        for j in 0..m.ncols() {
            // f = Σ s_k u_k(ν_s) v_k*(ν_i); store the conjugate so that the
            // columns are the idler-side mode functions themselves
            idler_modes[(j, k)] = v[(j, k)].conj() * idler_mode_scale;
        }
    }

    Ok(SchmidtResult {
        lambdas,
        signal_modes,
        idler_modes,
        schmidt_number,
        purity: 1.0 / schmidt_number,
    })
}

/// Decompose a joint amplitude into Schmidt modes.
///
/// The singular value decomposition runs on the cell-area-weighted matrix
/// f·√(Δν_s Δν_i), which makes the Schmidt coefficients (and hence K)
/// independent of grid resolution.
pub fn schmidt_decompose(amp: &JointAmplitude) -> Result<SchmidtResult> {
    let grid = amp.grid();
    let weight = grid.cell_area().sqrt();
    decompose_matrix(
        to_faer(amp.values(), weight),
        1.0 / grid.signal_step().sqrt(),
        1.0 / grid.idler_step().sqrt(),
    )
}

/// Flat-phase Schmidt decomposition of a binned joint distribution (counts
/// or intensities on uniform bins): element-wise square root, then SVD.
/// Bin-width weights are uniform and cancel in the normalized λ.
pub fn schmidt_from_counts(counts: &ndarray::Array2<f64>) -> Result<SchmidtResult> {
    if counts.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidInput("counts must be finite and non-negative".into()));
    }
    if counts.sum() <= 0.0 {
        return Err(Error::DegenerateInput("histogram is empty".into()));
    }
    let m = Mat::from_fn(counts.nrows(), counts.ncols(), |i, j| {
        Complex64::new(counts[(i, j)].sqrt(), 0.0)
    });
    decompose_matrix(m, 1.0, 1.0)
}

/// Schmidt decomposition of a measured intensity, ignoring any joint phase:
/// equivalent to [`schmidt_decompose`] on the element-wise square root of
/// the intensity with zero phase.
pub fn schmidt_from_intensity(jsi: &JointIntensity) -> Result<SchmidtResult> {
    schmidt_decompose(&jsi.sqrt_amplitude())
}

/// Closed-form heralded purity of the Gaussian pump + Gaussian filter model:
/// 1/K = sqrt(1 − 1/(1 + (σ/σ_f)²)²).
pub fn analytic_filtered_purity(sigma_pump: f64, sigma_filter: f64) -> Result<f64> {
    if !(sigma_pump > 0.0) || !(sigma_filter > 0.0) {
        return Err(Error::Domain(format!(
            "bandwidths must be positive, got pump {sigma_pump}, filter {sigma_filter}"
        )));
    }
    let x = sigma_pump / sigma_filter;
    let d = 1.0 + x * x;
    Ok((1.0 - 1.0 / (d * d)).sqrt())
}

/// Heralded purity of a Gaussian ellipse from the fitted widths of its
/// projections onto the frequency-sum and frequency-difference axes:
/// P = sqrt(1 − ((r−1)/(r+1))²) with r = σ_d²/σ_a².
///
/// Symmetric under σ_d ↔ σ_a, so the axis labelling convention does not
/// affect the result.
pub fn purity_from_diagonal_widths(sigma_d: f64, sigma_a: f64) -> Result<f64> {
    if !(sigma_d > 0.0) || !(sigma_a > 0.0) {
        return Err(Error::Domain(format!(
            "widths must be positive, got sigma_d {sigma_d}, sigma_a {sigma_a}"
        )));
    }
    let r = (sigma_d * sigma_d) / (sigma_a * sigma_a);
    let t = (r - 1.0) / (r + 1.0);
    Ok((1.0 - t * t).sqrt())
}

/// Reduced density matrix of one arm, traced over the conjugate arm.
///
/// The returned matrix includes the grid cell weight, so its matrix trace
/// equals the operator trace (1) and Re tr(ρ²) equals the heralded purity.
pub fn marginal_density_matrix(amp: &JointAmplitude, arm: Arm) -> Array2<Complex64> {
    let grid = amp.grid();
    let f = amp.values();
    let (m, scale) = match arm {
        Arm::Signal => {
            // ρ_s = F F† Δν_i, then × Δν_s for the operator weight
            let fa = to_faer(f, 1.0);
            (&fa * fa.adjoint(), grid.cell_area())
        }
        Arm::Idler => {
            // ρ_i = Fᵀ F* Δν_s = (F† F)ᵀ Δν_s, stored so that index order is
            // (ν_i, ν_i′)
            let fa = to_faer(f, 1.0);
            ((fa.adjoint() * &fa).transpose().to_owned(), grid.cell_area())
        }
    };
    let n = m.nrows();
    Array2::from_shape_fn((n, n), |(a, b)| m[(a, b)] * scale)
}

/// Re tr(ρ²) for a density matrix produced by [`marginal_density_matrix`].
pub fn density_purity(rho: &Array2<Complex64>) -> f64 {
    let n = rho.nrows();
    let mut acc = Complex64::new(0.0, 0.0);
    for a in 0..n {
        for b in 0..n {
            acc += rho[(a, b)] * rho[(b, a)];
        }
    }
    acc.re
}
