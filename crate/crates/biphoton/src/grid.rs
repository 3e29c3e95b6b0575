//! Rectangular frequency grids for joint spectral functions.

use crate::error::{Error, Result};
use crate::units;

/// Uniform rectangular grid of signal/idler detunings.
///
/// Axes store detunings ν = ω − ω₀ in rad/s; the absolute centre frequencies
/// of each arm are kept separately so grid points can be mapped back to
/// wavelengths. Signal is the row axis everywhere in this crate, idler the
/// column axis.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    signal_nu: Vec<f64>,
    idler_nu: Vec<f64>,
    /// Absolute centre angular frequency of the signal arm, rad/s.
    pub center_signal_rad_s: f64,
    /// Absolute centre angular frequency of the idler arm, rad/s.
    pub center_idler_rad_s: f64,
}

const UNIFORMITY_TOL: f64 = 1e-9;

fn check_axis(name: &str, axis: &[f64]) -> Result<f64> {
    if axis.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "{name} axis needs at least 2 points, got {}",
            axis.len()
        )));
    }
    if axis.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("{name} axis has non-finite values")));
    }
    let step = axis[1] - axis[0];
    if step <= 0.0 {
        return Err(Error::InvalidInput(format!("{name} axis must be strictly increasing")));
    }
    for w in axis.windows(2) {
        let d = w[1] - w[0];
        if d <= 0.0 || ((d - step) / step).abs() > UNIFORMITY_TOL {
            return Err(Error::InvalidInput(format!(
                "{name} axis spacing is not uniform within 1e-9"
            )));
        }
    }
    Ok(step)
}

impl FrequencyGrid {
    /// Build a grid from explicit detuning axes (rad/s) and arm centre
    /// frequencies (rad/s). Axes must be strictly increasing and uniform
    /// within one part in 1e9.
    pub fn new(
        signal_nu: Vec<f64>,
        idler_nu: Vec<f64>,
        center_signal_rad_s: f64,
        center_idler_rad_s: f64,
    ) -> Result<Self> {
        check_axis("signal", &signal_nu)?;
        check_axis("idler", &idler_nu)?;
        if center_signal_rad_s <= 0.0 || center_idler_rad_s <= 0.0 {
            return Err(Error::InvalidInput("centre frequencies must be positive".into()));
        }
        Ok(Self { signal_nu, idler_nu, center_signal_rad_s, center_idler_rad_s })
    }

    /// Square grid of `n` points per axis spanning ±`half_span` rad/s of
    /// detuning around the same centre wavelength on both arms.
    pub fn symmetric(center_wavelength_nm: f64, half_span_rad_s: f64, n: usize) -> Result<Self> {
        Self::symmetric_two_arm(center_wavelength_nm, center_wavelength_nm, half_span_rad_s, n)
    }

    /// Square grid with distinct arm centre wavelengths (non-degenerate
    /// sources).
    pub fn symmetric_two_arm(
        signal_wavelength_nm: f64,
        idler_wavelength_nm: f64,
        half_span_rad_s: f64,
        n: usize,
    ) -> Result<Self> {
        if half_span_rad_s <= 0.0 {
            return Err(Error::InvalidInput("half_span must be positive".into()));
        }
        if n < 2 {
            return Err(Error::InvalidInput("grid needs at least 2 points per axis".into()));
        }
        let axis: Vec<f64> = (0..n)
            .map(|i| -half_span_rad_s + 2.0 * half_span_rad_s * i as f64 / (n as f64 - 1.0))
            .collect();
        Self::new(
            axis.clone(),
            axis,
            units::wavelength_nm_to_angular(signal_wavelength_nm),
            units::wavelength_nm_to_angular(idler_wavelength_nm),
        )
    }

    pub fn signal_nu(&self) -> &[f64] {
        &self.signal_nu
    }

    pub fn idler_nu(&self) -> &[f64] {
        &self.idler_nu
    }

    pub fn n_signal(&self) -> usize {
        self.signal_nu.len()
    }

    pub fn n_idler(&self) -> usize {
        self.idler_nu.len()
    }

    /// Signal-axis spacing, rad/s.
    pub fn signal_step(&self) -> f64 {
        self.signal_nu[1] - self.signal_nu[0]
    }

    /// Idler-axis spacing, rad/s.
    pub fn idler_step(&self) -> f64 {
        self.idler_nu[1] - self.idler_nu[0]
    }

    /// Grid cell area in (rad/s)².
    pub fn cell_area(&self) -> f64 {
        self.signal_step() * self.idler_step()
    }

    /// Absolute angular frequency of signal grid point `i`.
    pub fn signal_omega(&self, i: usize) -> f64 {
        self.center_signal_rad_s + self.signal_nu[i]
    }

    /// Absolute angular frequency of idler grid point `j`.
    pub fn idler_omega(&self, j: usize) -> f64 {
        self.center_idler_rad_s + self.idler_nu[j]
    }

    /// Wavelengths (nm) of the signal grid points. Decreasing in frequency
    /// order: longer wavelengths sit at negative detuning.
    pub fn signal_wavelengths_nm(&self) -> Vec<f64> {
        (0..self.n_signal())
            .map(|i| units::angular_to_wavelength_nm(self.signal_omega(i)))
            .collect()
    }

    pub fn idler_wavelengths_nm(&self) -> Vec<f64> {
        (0..self.n_idler())
            .map(|j| units::angular_to_wavelength_nm(self.idler_omega(j)))
            .collect()
    }

    pub fn center_signal_wavelength_nm(&self) -> f64 {
        units::angular_to_wavelength_nm(self.center_signal_rad_s)
    }

    pub fn center_idler_wavelength_nm(&self) -> f64 {
        units::angular_to_wavelength_nm(self.center_idler_rad_s)
    }
}
