//! Physical constants and unit conversions.
//!
//! Internal conventions: angular frequencies and detunings in rad/s,
//! wavelengths in nm, times in ps unless a name says otherwise. Bandwidths
//! named `sigma` are Gaussian standard deviations of the *amplitude*
//! envelope; `fwhm` always refers to the intensity profile.

/// Speed of light in vacuum, m/s.
pub const C_M_PER_S: f64 = 299_792_458.0;

/// Speed of light in nm/s.
pub const C_NM_PER_S: f64 = C_M_PER_S * 1e9;

/// Speed of light in nm/ps (= mm/ns).
pub const C_NM_PER_PS: f64 = C_M_PER_S * 1e-3;

/// Speed of light in nm/fs.
pub const C_NM_PER_FS: f64 = C_M_PER_S * 1e-6;

/// Ratio between the FWHM and the standard deviation of a Gaussian,
/// 2*sqrt(2 ln 2).
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949;

/// Angular frequency (rad/s) of light with the given vacuum wavelength (nm).
pub fn wavelength_nm_to_angular(lambda_nm: f64) -> f64 {
    2.0 * std::f64::consts::PI * C_NM_PER_S / lambda_nm
}

/// Vacuum wavelength (nm) for an angular frequency (rad/s).
pub fn angular_to_wavelength_nm(omega_rad_s: f64) -> f64 {
    2.0 * std::f64::consts::PI * C_NM_PER_S / omega_rad_s
}

/// Convert a small wavelength interval (nm) around `lambda_nm` into the
/// corresponding angular-frequency interval (rad/s), |dω/dλ| = 2πc/λ².
pub fn bandwidth_nm_to_rad_s(delta_lambda_nm: f64, lambda_nm: f64) -> f64 {
    2.0 * std::f64::consts::PI * C_NM_PER_S * delta_lambda_nm / (lambda_nm * lambda_nm)
}

/// Inverse of [`bandwidth_nm_to_rad_s`].
pub fn bandwidth_rad_s_to_nm(delta_omega_rad_s: f64, lambda_nm: f64) -> f64 {
    delta_omega_rad_s * lambda_nm * lambda_nm / (2.0 * std::f64::consts::PI * C_NM_PER_S)
}

/// Convert an ordinary frequency bandwidth (Hz) to rad/s.
pub fn hz_to_rad_s(f_hz: f64) -> f64 {
    2.0 * std::f64::consts::PI * f_hz
}

pub fn fwhm_to_sigma(fwhm: f64) -> f64 {
    fwhm / FWHM_PER_SIGMA
}

pub fn sigma_to_fwhm(sigma: f64) -> f64 {
    sigma * FWHM_PER_SIGMA
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn wavelength_frequency_roundtrip() {
        let w = wavelength_nm_to_angular(810.0);
        assert_relative_eq!(angular_to_wavelength_nm(w), 810.0, max_relative = 1e-12);
        // one optical period at 810 nm is about 2.70 fs
        let period_fs = 2.0 * std::f64::consts::PI / w * 1e15;
        assert_relative_eq!(period_fs, 2.7018, max_relative = 1e-3);
    }

    #[test]
    fn bandwidth_conversion_roundtrip() {
        let dw = bandwidth_nm_to_rad_s(5.2, 405.0);
        assert_relative_eq!(bandwidth_rad_s_to_nm(dw, 405.0), 5.2, max_relative = 1e-12);
    }
}
