//! Joint-amplitude construction for SPDC and SFWM sources.
//!
//! The model is a product of a Gaussian pump envelope in the frequency-sum
//! coordinate (with optional quadratic/cubic spectral phase), a parametric
//! phasematching factor, and per-arm spectral filters. Phasematching is kept
//! parametric (Gaussian or sinc ridge with an orientation angle) rather than
//! derived from material dispersion data.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::FrequencyGrid;
use crate::jsa::JointAmplitude;
use crate::units;

/// Pair-generation process; fixes the energy-conservation relation between
/// pump and daughter photons.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Process {
    /// ω_p = ω_s + ω_i.
    Spdc,
    /// 2ω_p = ω_s + ω_i with degenerate pump photons; the pump self-
    /// convolution widens the effective sum-coordinate bandwidth to √2 σ.
    SfwmDegeneratePump,
}

/// Pulsed pump description.
#[derive(Debug, Clone)]
pub struct PumpSpec {
    /// Pump centre wavelength, nm (e.g. 405 for a frequency-doubled
    /// Ti:sapphire beam).
    pub center_wavelength_nm: f64,
    /// Gaussian amplitude bandwidth σ of the pump spectrum, rad/s.
    pub bandwidth_sigma_rad_s: f64,
    /// Group delay dispersion φ₂ applied to the pump, fs².
    pub gdd_fs2: f64,
    /// Third-order dispersion φ₃, fs³.
    pub tod_fs3: f64,
    pub process: Process,
}

impl PumpSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_sigma_rad_s > 0.0) {
            return Err(Error::InvalidInput("pump bandwidth_sigma must be positive".into()));
        }
        if !(self.center_wavelength_nm > 0.0) {
            return Err(Error::InvalidInput("pump centre wavelength must be positive".into()));
        }
        Ok(())
    }

    /// Effective sum-coordinate bandwidth: σ for SPDC, √2 σ for SFWM with a
    /// degenerate pump.
    pub fn effective_sum_sigma(&self) -> f64 {
        match self.process {
            Process::Spdc => self.bandwidth_sigma_rad_s,
            Process::SfwmDegeneratePump => std::f64::consts::SQRT_2 * self.bandwidth_sigma_rad_s,
        }
    }

    /// Number of pump photons annihilated per pair.
    fn pump_order(&self) -> f64 {
        match self.process {
            Process::Spdc => 1.0,
            Process::SfwmDegeneratePump => 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterShape {
    Gaussian,
    /// Top-hat transmission; the `sigma` fields are interpreted as the
    /// half-width of the passband.
    Rect,
}

/// Per-arm spectral filters applied to the collected photons.
#[derive(Debug, Clone)]
pub struct FilterSpec {
    pub signal_sigma_rad_s: f64,
    pub idler_sigma_rad_s: f64,
    pub shape: FilterShape,
}

impl FilterSpec {
    pub fn gaussian(signal_sigma_rad_s: f64, idler_sigma_rad_s: f64) -> Self {
        Self { signal_sigma_rad_s, idler_sigma_rad_s, shape: FilterShape::Gaussian }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.signal_sigma_rad_s > 0.0) || !(self.idler_sigma_rad_s > 0.0) {
            return Err(Error::InvalidInput("filter bandwidths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhasematchModel {
    /// Φ ≡ 1; the joint spectrum is set by the pump envelope alone.
    None,
    Gaussian,
    Sinc,
}

/// Parametric phasematching factor Φ(ν_s, ν_i).
///
/// Φ depends on the detunings through the single coordinate
/// u = (−sin θ · ν_s + cos θ · ν_i) / w, so the ridge of Φ runs along the
/// direction (cos θ, sin θ) in the (ν_s, ν_i) plane. θ = π/4 gives a ridge
/// along ν_s = ν_i, complementary to the pump's anti-diagonal ridge.
#[derive(Debug, Clone)]
pub struct PhasematchSpec {
    pub model: PhasematchModel,
    pub width_sigma_rad_s: f64,
    pub tilt_angle_rad: f64,
}

impl PhasematchSpec {
    pub fn none() -> Self {
        Self { model: PhasematchModel::None, width_sigma_rad_s: 1.0, tilt_angle_rad: 0.0 }
    }

    pub fn gaussian(width_sigma_rad_s: f64, tilt_angle_rad: f64) -> Self {
        Self { model: PhasematchModel::Gaussian, width_sigma_rad_s, tilt_angle_rad }
    }

    pub fn sinc(width_sigma_rad_s: f64, tilt_angle_rad: f64) -> Self {
        Self { model: PhasematchModel::Sinc, width_sigma_rad_s, tilt_angle_rad }
    }

    pub fn validate(&self) -> Result<()> {
        if self.model != PhasematchModel::None && !(self.width_sigma_rad_s > 0.0) {
            return Err(Error::InvalidInput("phasematch width must be positive".into()));
        }
        Ok(())
    }

    fn evaluate(&self, nu_s: f64, nu_i: f64) -> f64 {
        match self.model {
            PhasematchModel::None => 1.0,
            _ => {
                let u = (-self.tilt_angle_rad.sin() * nu_s + self.tilt_angle_rad.cos() * nu_i)
                    / self.width_sigma_rad_s;
                match self.model {
                    PhasematchModel::Gaussian => (-0.5 * u * u).exp(),
                    PhasematchModel::Sinc => {
                        if u.abs() < 1e-9 {
                            1.0
                        } else {
                            u.sin() / u
                        }
                    }
                    PhasematchModel::None => unreachable!(),
                }
            }
        }
    }
}

/// Gaussian mass outside [−t, t] for a 1D Gaussian with the given mean and
/// standard deviation.
fn gaussian_outside(t: f64, mean: f64, std: f64) -> f64 {
    if std <= 0.0 {
        return 0.0;
    }
    let a = (t - mean) / (std * std::f64::consts::SQRT_2);
    let b = (t + mean) / (std * std::f64::consts::SQRT_2);
    0.5 * (erfc(a) + erfc(b))
}

/// Abramowitz-Stegun 7.1.26 complementary error function, |err| < 1.5e-7.
pub(crate) fn erfc(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    poly * (-x * x).exp()
}

/// Accumulated quadratic form of the Gaussian factors of |f|²:
/// |f|² ∝ exp(−νᵀ Q ν). Rect filters and sinc phasematching contribute no
/// decay and are excluded.
fn intensity_quadratic_form(
    sum_sigma: f64,
    pm: &PhasematchSpec,
    filt: Option<&FilterSpec>,
) -> [[f64; 2]; 2] {
    let mut q = [[0.0f64; 2]; 2];
    // pump: exp(−(ν_s+ν_i)²/σ²)
    let a = 1.0 / (sum_sigma * sum_sigma);
    q[0][0] += a;
    q[0][1] += a;
    q[1][0] += a;
    q[1][1] += a;
    if let Some(f) = filt {
        if f.shape == FilterShape::Gaussian {
            q[0][0] += 1.0 / (f.signal_sigma_rad_s * f.signal_sigma_rad_s);
            q[1][1] += 1.0 / (f.idler_sigma_rad_s * f.idler_sigma_rad_s);
        }
    }
    if pm.model == PhasematchModel::Gaussian {
        let n = [-pm.tilt_angle_rad.sin(), pm.tilt_angle_rad.cos()];
        let w = 1.0 / (pm.width_sigma_rad_s * pm.width_sigma_rad_s);
        q[0][0] += w * n[0] * n[0];
        q[0][1] += w * n[0] * n[1];
        q[1][0] += w * n[1] * n[0];
        q[1][1] += w * n[1] * n[1];
    }
    q
}

/// Eigen-decomposition of a symmetric 2×2 matrix; returns
/// [(eigenvalue, unit eigenvector); 2].
fn eigen2(q: [[f64; 2]; 2]) -> [(f64, [f64; 2]); 2] {
    let tr = q[0][0] + q[1][1];
    let det = q[0][0] * q[1][1] - q[0][1] * q[1][0];
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    let l1 = tr / 2.0 + disc;
    let l2 = tr / 2.0 - disc;
    let vec_for = |l: f64| -> [f64; 2] {
        let (vx, vy) = if q[0][1].abs() > 1e-300 {
            (q[0][1], l - q[0][0])
        } else if (l - q[0][0]).abs() < (l - q[1][1]).abs() {
            (1.0, 0.0)
        } else {
            (0.0, 1.0)
        };
        let n = (vx * vx + vy * vy).sqrt();
        if n == 0.0 {
            [1.0, 0.0]
        } else {
            [vx / n, vy / n]
        }
    };
    [(l1, vec_for(l1)), (l2, vec_for(l2))]
}

/// Distance from the origin at which a ray along `dir` exits the grid
/// rectangle.
fn ray_exit(grid: &FrequencyGrid, dir: [f64; 2]) -> f64 {
    let lx = grid.signal_nu()[0].abs().min(grid.signal_nu()[grid.n_signal() - 1].abs());
    let ly = grid.idler_nu()[0].abs().min(grid.idler_nu()[grid.n_idler() - 1].abs());
    let tx = if dir[0].abs() > 1e-12 { lx / dir[0].abs() } else { f64::INFINITY };
    let ty = if dir[1].abs() > 1e-12 { ly / dir[1].abs() } else { f64::INFINITY };
    tx.min(ty)
}

const COVERAGE_THRESHOLD: f64 = 1e-4;

fn principal_axis_outside(grid: &FrequencyGrid, q: [[f64; 2]; 2]) -> f64 {
    let mut outside = 0.0;
    for (lambda, dir) in eigen2(q) {
        if lambda <= 1e-300 {
            continue;
        }
        let std = 1.0 / (2.0 * lambda).sqrt();
        let t_exit = ray_exit(grid, dir);
        if t_exit.is_finite() {
            outside += gaussian_outside(t_exit, 0.0, std);
        }
    }
    outside
}

/// Estimate the intensity mass falling outside the grid from the Gaussian
/// factors' principal axes. Directions with no Gaussian decay (e.g. the
/// anti-diagonal of an unfiltered source) are intentionally exempt: a finite
/// collection band there is a modelling choice, not an error.
fn check_coverage(
    grid: &FrequencyGrid,
    sum_sigma: f64,
    pm: &PhasematchSpec,
    filt: Option<&FilterSpec>,
) -> Result<()> {
    if let Some(f) = filt {
        if f.shape == FilterShape::Rect {
            let lx = grid.signal_nu()[0].abs().min(grid.signal_nu()[grid.n_signal() - 1].abs());
            let ly = grid.idler_nu()[0].abs().min(grid.idler_nu()[grid.n_idler() - 1].abs());
            if f.signal_sigma_rad_s > lx || f.idler_sigma_rad_s > ly {
                return Err(Error::Coverage("rect filter passband extends beyond the grid".into()));
            }
        }
    }
    let outside = principal_axis_outside(grid, intensity_quadratic_form(sum_sigma, pm, filt));
    if outside > COVERAGE_THRESHOLD {
        return Err(Error::Coverage(format!(
            "estimated intensity fraction outside the grid is {outside:.2e} (> {COVERAGE_THRESHOLD:.0e}); enlarge the grid span"
        )));
    }
    Ok(())
}

/// Build the joint spectral amplitude
/// f(ν_s,ν_i) = M · exp[−ν_p²/(2σ_eff²)] · exp[i(φ₂ν_p²/2 + φ₃ν_p³/6)] ·
/// Φ(ν_s,ν_i) · F_s(ν_s) · F_i(ν_i), normalized, where ν_p is the pump
/// detuning fixed by energy conservation.
pub fn build_amplitude(
    pump: &PumpSpec,
    pm: &PhasematchSpec,
    filt: Option<&FilterSpec>,
    grid: &FrequencyGrid,
) -> Result<JointAmplitude> {
    pump.validate()?;
    pm.validate()?;
    if let Some(f) = filt {
        f.validate()?;
    }
    let sigma = pump.effective_sum_sigma();
    check_coverage(grid, sigma, pm, filt)?;

    // offset of the pump detuning when the grid centres are not exactly
    // energy-matched to the pump centre
    let omega_p = units::wavelength_nm_to_angular(pump.center_wavelength_nm);
    let mismatch =
        grid.center_signal_rad_s + grid.center_idler_rad_s - pump.pump_order() * omega_p;

    let phi2 = pump.gdd_fs2 * 1e-30; // fs² → s²
    let phi3 = pump.tod_fs3 * 1e-45; // fs³ → s³

    let mut m = Array2::zeros((grid.n_signal(), grid.n_idler()));
    for (i, &ns) in grid.signal_nu().iter().enumerate() {
        let fs = match filt {
            Some(f) => filter_value(f.shape, f.signal_sigma_rad_s, ns),
            None => 1.0,
        };
        for (j, &ni) in grid.idler_nu().iter().enumerate() {
            let fi = match filt {
                Some(f) => filter_value(f.shape, f.idler_sigma_rad_s, ni),
                None => 1.0,
            };
            let nu_p = ns + ni + mismatch;
            let env = (-nu_p * nu_p / (2.0 * sigma * sigma)).exp();
            let phase = 0.5 * phi2 * nu_p * nu_p + phi3 * nu_p * nu_p * nu_p / 6.0;
            let mag = env * pm.evaluate(ns, ni) * fs * fi;
            let extra = if mag < 0.0 { std::f64::consts::PI } else { 0.0 };
            m[(i, j)] = Complex64::from_polar(mag.abs(), phase + extra);
        }
    }
    JointAmplitude::new(grid.clone(), m)
}

fn filter_value(shape: FilterShape, sigma: f64, nu: f64) -> f64 {
    match shape {
        FilterShape::Gaussian => (-nu * nu / (2.0 * sigma * sigma)).exp(),
        FilterShape::Rect => {
            if nu.abs() <= sigma {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// Real Gaussian ellipse parametrized by its amplitude widths along the
/// frequency-difference diagonal (σ_d) and frequency-sum diagonal (σ_a):
/// f ∝ exp[−(ν_s²+ν_i²)(1/(4σ_d²)+1/(4σ_a²)) − 2ν_sν_i(1/(4σ_a²)−1/(4σ_d²))].
pub fn diagonal_gaussian_amplitude(
    sigma_d: f64,
    sigma_a: f64,
    grid: &FrequencyGrid,
) -> Result<JointAmplitude> {
    if !(sigma_d > 0.0) || !(sigma_a > 0.0) {
        return Err(Error::Domain("ellipse widths must be positive".into()));
    }
    // intensity quadratic form of the ellipse for the coverage estimate
    let qd = 1.0 / (sigma_d * sigma_d);
    let qa = 1.0 / (sigma_a * sigma_a);
    let q = [[(qd + qa) / 2.0, (qa - qd) / 2.0], [(qa - qd) / 2.0, (qd + qa) / 2.0]];
    let outside = principal_axis_outside(grid, q);
    if outside > COVERAGE_THRESHOLD {
        return Err(Error::Coverage(format!(
            "estimated intensity fraction outside the grid is {outside:.2e}; enlarge the grid span"
        )));
    }

    let ca = 1.0 / (4.0 * sigma_d * sigma_d) + 1.0 / (4.0 * sigma_a * sigma_a);
    let cb = 1.0 / (4.0 * sigma_a * sigma_a) - 1.0 / (4.0 * sigma_d * sigma_d);
    let mut m = Array2::zeros((grid.n_signal(), grid.n_idler()));
    for (i, &ns) in grid.signal_nu().iter().enumerate() {
        for (j, &ni) in grid.idler_nu().iter().enumerate() {
            let v = (-(ns * ns + ni * ni) * ca - 2.0 * ns * ni * cb).exp();
            m[(i, j)] = Complex64::new(v, 0.0);
        }
    }
    JointAmplitude::new(grid.clone(), m)
}

/// Closed-form Schmidt number of the diagonal Gaussian ellipse,
/// K = (r+1)/(2√r) with r = σ_d²/σ_a². Useful as an independent oracle.
pub fn diagonal_ellipse_schmidt_number(sigma_d: f64, sigma_a: f64) -> f64 {
    let r = (sigma_d * sigma_d) / (sigma_a * sigma_a);
    (r + 1.0) / (2.0 * r.sqrt())
}

/// Default square grid for a source model: `n` points per axis spanning
/// ±5 marginal standard deviations (of the joint intensity) when the model
/// is bounded, and ±5 pump bandwidths otherwise.
pub fn default_grid(
    pump: &PumpSpec,
    pm: &PhasematchSpec,
    filt: Option<&FilterSpec>,
    n: usize,
) -> Result<FrequencyGrid> {
    pump.validate()?;
    let (sig_wl, idl_wl) = default_centers(pump);
    default_grid_with_centers(pump, pm, filt, n, sig_wl, idl_wl)
}

/// Default photon centre wavelengths implied by energy conservation with
/// degenerate daughters.
pub fn default_centers(pump: &PumpSpec) -> (f64, f64) {
    match pump.process {
        Process::Spdc => (2.0 * pump.center_wavelength_nm, 2.0 * pump.center_wavelength_nm),
        Process::SfwmDegeneratePump => (pump.center_wavelength_nm, pump.center_wavelength_nm),
    }
}

pub fn default_grid_with_centers(
    pump: &PumpSpec,
    pm: &PhasematchSpec,
    filt: Option<&FilterSpec>,
    n: usize,
    signal_wavelength_nm: f64,
    idler_wavelength_nm: f64,
) -> Result<FrequencyGrid> {
    let sigma = pump.effective_sum_sigma();
    let q = intensity_quadratic_form(sigma, pm, filt);
    let det = q[0][0] * q[1][1] - q[0][1] * q[1][0];
    let half_span = if det > 1e-300 {
        // marginal variance of ν_s is [Q⁻¹]₀₀ / 2
        let var_s = q[1][1] / det / 2.0;
        let var_i = q[0][0] / det / 2.0;
        5.0 * var_s.max(var_i).sqrt()
    } else if let Some(f) = filt {
        match f.shape {
            FilterShape::Rect => 1.2 * f.signal_sigma_rad_s.max(f.idler_sigma_rad_s),
            FilterShape::Gaussian => 5.0 * sigma,
        }
    } else {
        5.0 * sigma
    };
    FrequencyGrid::symmetric_two_arm(signal_wavelength_nm, idler_wavelength_nm, half_span, n)
}
