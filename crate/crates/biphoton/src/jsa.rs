//! Joint spectral amplitudes and intensities.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::FrequencyGrid;
use crate::units;

/// Which arm of the pair source.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arm {
    Signal,
    Idler,
}

/// Complex joint spectral amplitude f(ν_s, ν_i) on a [`FrequencyGrid`].
///
/// Normalized at construction to unit L² norm over the grid,
/// Σ |f|² Δν_s Δν_i = 1. Rows index the signal axis, columns the idler axis.
#[derive(Debug, Clone)]
pub struct JointAmplitude {
    grid: FrequencyGrid,
    values: Array2<Complex64>,
}

impl JointAmplitude {
    /// Normalize `values` and wrap them as a joint amplitude.
    pub fn new(grid: FrequencyGrid, mut values: Array2<Complex64>) -> Result<Self> {
        if values.nrows() != grid.n_signal() || values.ncols() != grid.n_idler() {
            return Err(Error::InvalidInput(format!(
                "amplitude matrix is {}x{}, grid is {}x{}",
                values.nrows(),
                values.ncols(),
                grid.n_signal(),
                grid.n_idler()
            )));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidInput("amplitude matrix has non-finite entries".into()));
        }
        let norm_sq: f64 = values.iter().map(|v| v.norm_sqr()).sum::<f64>() * grid.cell_area();
        if norm_sq <= 0.0 {
            return Err(Error::DegenerateInput("amplitude matrix is identically zero".into()));
        }
        let scale = 1.0 / norm_sq.sqrt();
        values.mapv_inplace(|v| v * scale);
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn values(&self) -> &Array2<Complex64> {
        &self.values
    }

    /// |f|² as a normalized [`JointIntensity`].
    pub fn intensity(&self) -> JointIntensity {
        let vals = self.values.mapv(|v| v.norm_sqr());
        JointIntensity::new(self.grid.clone(), vals)
            .expect("intensity of a valid amplitude is valid")
    }

    /// Apply a global phase factor e^{iφ}. All physical quantities derived
    /// from the amplitude are invariant under this.
    pub fn with_global_phase(&self, phi: f64) -> Self {
        let rot = Complex64::from_polar(1.0, phi);
        Self { grid: self.grid.clone(), values: self.values.mapv(|v| v * rot) }
    }

    /// L² norm over the grid; 1 by construction.
    pub fn norm(&self) -> f64 {
        (self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.cell_area()).sqrt()
    }
}

/// Non-negative joint spectral intensity I(ν_s, ν_i) on a [`FrequencyGrid`].
///
/// Normalized at construction so that Σ I Δν_s Δν_i = 1.
#[derive(Debug, Clone)]
pub struct JointIntensity {
    grid: FrequencyGrid,
    values: Array2<f64>,
}

impl JointIntensity {
    pub fn new(grid: FrequencyGrid, mut values: Array2<f64>) -> Result<Self> {
        if values.nrows() != grid.n_signal() || values.ncols() != grid.n_idler() {
            return Err(Error::InvalidInput(format!(
                "intensity matrix is {}x{}, grid is {}x{}",
                values.nrows(),
                values.ncols(),
                grid.n_signal(),
                grid.n_idler()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("intensity matrix has non-finite entries".into()));
        }
        if values.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidInput("intensity matrix has negative entries".into()));
        }
        let total: f64 = values.sum() * grid.cell_area();
        if total <= 0.0 {
            return Err(Error::DegenerateInput("intensity matrix is identically zero".into()));
        }
        values.mapv_inplace(|v| v / total);
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    /// Flat-phase amplitude √I, used when only the intensity was measured.
    pub fn sqrt_amplitude(&self) -> JointAmplitude {
        let vals = self.values.mapv(|v| Complex64::new(v.sqrt(), 0.0));
        JointAmplitude::new(self.grid.clone(), vals)
            .expect("sqrt of a valid intensity is a valid amplitude")
    }

    /// Response raster of the intensity seen through independent Gaussian
    /// apertures on each arm: out[a][b] = ∬ I(λ_s, λ_i) g(λ_s − xs[a];
    /// σ_x) g(λ_i − ys[b]; σ_y) dλ_s dλ_i with unit-peak Gaussians.
    ///
    /// Each axis is integrated in frequency measure with sub-cell
    /// quadrature and linear interpolation of the intensity, so apertures
    /// narrower than a grid cell are still integrated correctly instead of
    /// aliasing against the grid.
    pub fn gaussian_raster(
        &self,
        xs_nm: &[f64],
        ys_nm: &[f64],
        sigma_x_nm: f64,
        sigma_y_nm: f64,
    ) -> Array2<f64> {
        let grid = &self.grid;
        // pass 1: convolve along the signal axis onto the xs positions
        let half = |center_rad_s: f64, sigma_nm: f64| -> f64 {
            // aperture width mapped into frequency at the band centre
            sigma_nm * 2.0 * std::f64::consts::PI * units::C_NM_PER_S
                / (units::angular_to_wavelength_nm(center_rad_s).powi(2))
        };
        let sigma_x_rad = half(self.grid.center_signal_rad_s, sigma_x_nm);
        let sigma_y_rad = half(self.grid.center_idler_rad_s, sigma_y_nm);

        let quad_axis = |axis: &[f64],
                         step: f64,
                         center: f64,
                         positions: &[f64],
                         sigma_nm: f64,
                         sigma_rad: f64|
         -> Array2<f64> {
            // weights[a][i-fine] laid out as (positions × fine grid), with
            // the fine grid refining each cell enough to resolve the kernel
            let refine = (step / (sigma_rad / 2.0)).ceil().max(1.0) as usize;
            let fine_step = step / refine as f64;
            let n_fine = axis.len() * refine;
            let mut w = Array2::zeros((positions.len(), n_fine));
            for (a, &x) in positions.iter().enumerate() {
                for f in 0..n_fine {
                    let nu = axis[0] + (f as f64 + 0.5) * fine_step - step / 2.0;
                    let lam = units::angular_to_wavelength_nm(center + nu);
                    let g = (-(lam - x) * (lam - x) / (2.0 * sigma_nm * sigma_nm)).exp();
                    w[(a, f)] = g * fine_step;
                }
            }
            w
        };

        let ws = quad_axis(
            grid.signal_nu(),
            grid.signal_step(),
            grid.center_signal_rad_s,
            xs_nm,
            sigma_x_nm,
            sigma_x_rad,
        );
        let wi = quad_axis(
            grid.idler_nu(),
            grid.idler_step(),
            grid.center_idler_rad_s,
            ys_nm,
            sigma_y_nm,
            sigma_y_rad,
        );

        // interpolate the intensity onto the fine sub-grids: values are
        // cell averages, treated as piecewise linear between cell centres
        let interp_rows = |w: &Array2<f64>, refine: usize, transpose: bool| -> Array2<f64> {
            // contract the fine axis of w against the (interpolated)
            // intensity along the matching axis
            let (n_a, n_b) = if transpose {
                (self.values.ncols(), self.values.nrows())
            } else {
                (self.values.nrows(), self.values.ncols())
            };
            let mut out = Array2::zeros((w.nrows(), n_b));
            for p in 0..w.nrows() {
                for f in 0..w.ncols() {
                    let g = w[(p, f)];
                    if g < 1e-300 {
                        continue;
                    }
                    // fine sample f sits at cell coordinate (f + 0.5)/refine
                    // − 0.5 relative to cell centres
                    let pos = (f as f64 + 0.5) / refine as f64 - 0.5;
                    let i0 = pos.floor();
                    let t = pos - i0;
                    let i0 = i0 as i64;
                    for (i, frac) in [(i0, 1.0 - t), (i0 + 1, t)] {
                        if i < 0 || i as usize >= n_a || frac == 0.0 {
                            continue;
                        }
                        let i = i as usize;
                        for b in 0..n_b {
                            let v = if transpose {
                                self.values[(b, i)]
                            } else {
                                self.values[(i, b)]
                            };
                            out[(p, b)] += g * frac * v;
                        }
                    }
                }
            }
            out
        };

        let refine_s =
            (grid.signal_step() / (sigma_x_rad / 2.0)).ceil().max(1.0) as usize;
        let refine_i =
            (grid.idler_step() / (sigma_y_rad / 2.0)).ceil().max(1.0) as usize;
        // A[x, idler-cell] = ∫ I g_x dν_s
        let a = interp_rows(&ws, refine_s, false);
        // B[y, signal-position] = per-y idler integration of A
        // done by contracting A's idler axis with the idler weights
        let mut out = Array2::zeros((xs_nm.len(), ys_nm.len()));
        let n_i = grid.n_idler();
        for (b, _) in ys_nm.iter().enumerate() {
            for f in 0..wi.ncols() {
                let g = wi[(b, f)];
                if g < 1e-300 {
                    continue;
                }
                let pos = (f as f64 + 0.5) / refine_i as f64 - 0.5;
                let j0 = pos.floor();
                let t = pos - j0;
                let j0 = j0 as i64;
                for (j, frac) in [(j0, 1.0 - t), (j0 + 1, t)] {
                    if j < 0 || j as usize >= n_i || frac == 0.0 {
                        continue;
                    }
                    let j = j as usize;
                    for (x_idx, _) in xs_nm.iter().enumerate() {
                        out[(x_idx, b)] += g * frac * a[(x_idx, j)];
                    }
                }
            }
        }
        out
    }

    /// Marginal spectral density of one arm, normalized to unit area.
    pub fn marginal(&self, arm: Arm) -> MarginalSpectrum {
        let (axis, center, density) = match arm {
            Arm::Signal => {
                let d: Vec<f64> = (0..self.grid.n_signal())
                    .map(|i| self.values.row(i).sum() * self.grid.idler_step())
                    .collect();
                (self.grid.signal_nu().to_vec(), self.grid.center_signal_rad_s, d)
            }
            Arm::Idler => {
                let d: Vec<f64> = (0..self.grid.n_idler())
                    .map(|j| self.values.column(j).sum() * self.grid.signal_step())
                    .collect();
                (self.grid.idler_nu().to_vec(), self.grid.center_idler_rad_s, d)
            }
        };
        MarginalSpectrum { nu_rad_s: axis, center_rad_s: center, density }
    }
}

/// One-arm spectral density on a uniform detuning axis, unit area.
#[derive(Debug, Clone)]
pub struct MarginalSpectrum {
    /// Detunings ν = ω − ω₀, rad/s, uniform.
    pub nu_rad_s: Vec<f64>,
    /// Absolute centre angular frequency ω₀, rad/s.
    pub center_rad_s: f64,
    /// Spectral density per rad/s; Σ density Δν = 1.
    pub density: Vec<f64>,
}

impl MarginalSpectrum {
    pub fn step(&self) -> f64 {
        self.nu_rad_s[1] - self.nu_rad_s[0]
    }

    /// Mean detuning, rad/s.
    pub fn mean(&self) -> f64 {
        self.nu_rad_s
            .iter()
            .zip(&self.density)
            .map(|(nu, d)| nu * d)
            .sum::<f64>()
            * self.step()
    }

    /// Standard deviation of the density, rad/s.
    pub fn std_dev(&self) -> f64 {
        let m = self.mean();
        let var = self
            .nu_rad_s
            .iter()
            .zip(&self.density)
            .map(|(nu, d)| (nu - m) * (nu - m) * d)
            .sum::<f64>()
            * self.step();
        var.max(0.0).sqrt()
    }

    /// Absolute angular frequency of point `i`.
    pub fn omega(&self, i: usize) -> f64 {
        self.center_rad_s + self.nu_rad_s[i]
    }

    pub fn center_wavelength_nm(&self) -> f64 {
        units::angular_to_wavelength_nm(self.center_rad_s)
    }
}
