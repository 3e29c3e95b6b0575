//! Stimulated-emission-based joint spectral mapping.
//!
//! A narrow tunable seed laser drives the stimulated twin of the
//! spontaneous pair process. The stimulated signal beam is bright enough
//! for an ordinary CCD spectrometer, and its spectrum at each seed
//! frequency is proportional to the corresponding row of the joint
//! spectral intensity, with the seed photon number |A|² as the gain.

use ndarray::Array2;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::events::Histogram2D;
use crate::jsa::JointIntensity;
use crate::rng::{substream, Domain};
use crate::units;

/// Seed-laser scan configuration.
#[derive(Debug, Clone)]
pub struct SeedScanSpec {
    /// Seed linewidth (ordinary frequency), GHz.
    pub seed_bandwidth_ghz: f64,
    /// Seed photon numbers |A|² per pulse window, one scan per entry; the
    /// first entry is the operating power.
    pub seed_powers: Vec<f64>,
    /// Scanned idler band (low, high), nm.
    pub scan_range_nm: (f64, f64),
    pub scan_step_nm: f64,
    /// FWHM of the CCD spectrometer response, nm.
    pub spectrometer_resolution_nm: f64,
    /// Power-independent relative noise of the spectrometer (residual after
    /// shot noise), e.g. 5e-3.
    pub noise_floor_rel: f64,
    /// Exposure per seed position, s.
    pub dwell_s: f64,
    /// Optional saturation scale: the effective gain is |A|²/(1 + |A|²/s).
    pub saturation_photons: Option<f64>,
}

impl SeedScanSpec {
    pub fn standard_30ghz(scan_range_nm: (f64, f64), scan_step_nm: f64, power: f64) -> Self {
        Self {
            seed_bandwidth_ghz: 30.0,
            seed_powers: vec![power],
            scan_range_nm,
            scan_step_nm,
            spectrometer_resolution_nm: 0.06,
            noise_floor_rel: 0.0,
            dwell_s: 1.0,
            saturation_photons: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scan_step_nm > 0.0) || !(self.spectrometer_resolution_nm > 0.0) {
            return Err(Error::InvalidInput("scan step and resolution must be positive".into()));
        }
        if !(self.seed_bandwidth_ghz > 0.0) {
            return Err(Error::InvalidInput("seed bandwidth must be positive".into()));
        }
        if self.seed_powers.is_empty() || self.seed_powers.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::InvalidInput("seed powers must be non-negative".into()));
        }
        if !(self.scan_range_nm.1 > self.scan_range_nm.0) {
            return Err(Error::InvalidInput("scan range must be non-empty".into()));
        }
        Ok(())
    }

    fn seed_positions(&self) -> Vec<f64> {
        let n = ((self.scan_range_nm.1 - self.scan_range_nm.0) / self.scan_step_nm + 1.0 + 1e-9)
            .floor() as usize;
        (0..n).map(|k| self.scan_range_nm.0 + k as f64 * self.scan_step_nm).collect()
    }

    /// Seed line σ in nm at the given centre wavelength.
    fn seed_sigma_nm(&self, lambda_nm: f64) -> f64 {
        units::bandwidth_rad_s_to_nm(
            units::hz_to_rad_s(self.seed_bandwidth_ghz * 1e9),
            lambda_nm,
        )
    }

    fn effective_gain(&self, power: f64) -> f64 {
        match self.saturation_photons {
            Some(s) if s > 0.0 => power / (1.0 + power / s),
            _ => power,
        }
    }
}

/// Result of a stimulated scan.
#[derive(Debug, Clone)]
pub struct StimulatedScan {
    /// Stimulated photon counts; rows are spectrometer (signal) pixels,
    /// columns seed (idler) positions, both nm.
    pub map: Histogram2D,
    /// Noise-free expectation of the same map.
    pub expected: Array2<f64>,
    pub peak_counts: f64,
    pub nominal_acquisition_time_s: f64,
    pub warnings: Vec<String>,
}

/// Noise-free expected stimulated map at a given seed photon number:
/// N(x, y) = |A|² × [JSI ⊛ seed line ⊛ spectrometer response](x, y) × pixel
/// area, i.e. the captured spontaneous-pair probability per pulse window
/// amplified by the seed.
pub fn expected_stimulated_map(
    jsi: &JointIntensity,
    spec: &SeedScanSpec,
    power: f64,
) -> Result<(Vec<f64>, Vec<f64>, Array2<f64>)> {
    spec.validate()?;
    let ys = spec.seed_positions();
    // spectrometer pixels cover the signal support on the same pitch
    let grid = jsi.grid();
    let wl = grid.signal_wavelengths_nm();
    let (lo, hi) = (wl[wl.len() - 1], wl[0]);
    let n_pix = ((hi - lo) / spec.scan_step_nm).ceil() as usize + 1;
    let xs: Vec<f64> = (0..n_pix).map(|k| lo + k as f64 * spec.scan_step_nm).collect();

    let seed_sigma = spec.seed_sigma_nm(0.5 * (spec.scan_range_nm.0 + spec.scan_range_nm.1));
    let res_sigma = units::fwhm_to_sigma(spec.spectrometer_resolution_nm);
    let mut raster = jsi.gaussian_raster(&xs, &ys, res_sigma, seed_sigma);
    let gain = spec.effective_gain(power);
    let pixel_area = spec.scan_step_nm * spec.scan_step_nm;
    // convert the wavelength-densities into per-pixel pair probabilities;
    // the raster integral is in frequency measure, matching the sampler
    raster.mapv_inplace(|v| v * gain * pixel_area);
    Ok((xs, ys, raster))
}

/// Run the scan at the operating power (first entry of `seed_powers`) with
/// shot noise and the spectrometer noise floor.
pub fn run_stimulated_scan(
    jsi: &JointIntensity,
    spec: &SeedScanSpec,
    seed: u64,
) -> Result<StimulatedScan> {
    let power = spec.seed_powers[0];
    let (xs, ys, expected) = expected_stimulated_map(jsi, spec, power)?;
    let peak = expected.iter().cloned().fold(0.0, f64::max);
    let mut warnings = Vec::new();
    if let Some(s) = spec.saturation_photons {
        if power > 0.1 * s {
            warnings.push(format!(
                "seed power {power:.3e} is outside the linear regime (saturation scale {s:.3e})"
            ));
        }
    }

    let n_y = ys.len();
    let mut counts = expected.clone();
    for ((a, b), v) in counts.indexed_iter_mut() {
        let mut rng = substream(seed, Domain::StimulatedScan, (a * n_y + b) as u64);
        let shot = if *v > 0.0 { v.sqrt() } else { 0.0 };
        let floor = spec.noise_floor_rel * peak;
        let sigma = (shot * shot + floor * floor).sqrt();
        if sigma > 0.0 {
            let draw: f64 = Normal::new(0.0, sigma).unwrap().sample(&mut rng);
            *v = (*v + draw).max(0.0);
        }
    }

    let edges_from = |centers: &[f64], step: f64| -> Vec<f64> {
        let mut e: Vec<f64> = centers.iter().map(|c| c - step / 2.0).collect();
        e.push(centers[centers.len() - 1] + step / 2.0);
        e
    };
    let map = Histogram2D::new(
        edges_from(&xs, spec.scan_step_nm),
        edges_from(&ys, spec.scan_step_nm),
        counts,
    )?;
    Ok(StimulatedScan {
        map,
        expected,
        peak_counts: peak,
        nominal_acquisition_time_s: n_y as f64 * spec.dwell_s,
        warnings,
    })
}

/// Raw signal-to-noise figure of a sampled map: mean of the peak
/// neighbourhood divided by the standard deviation of its fluctuations
/// about the noise-free expectation.
pub fn raw_snr(scan: &StimulatedScan) -> f64 {
    let counts = &scan.map.counts;
    let (pi, pj) = scan
        .expected
        .indexed_iter()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(idx, _)| idx)
        .unwrap();
    let mut patch = Vec::new();
    for a in pi.saturating_sub(2)..(pi + 3).min(counts.nrows()) {
        for b in pj.saturating_sub(2)..(pj + 3).min(counts.ncols()) {
            patch.push((counts[(a, b)], scan.expected[(a, b)]));
        }
    }
    let mean: f64 = patch.iter().map(|(c, _)| c).sum::<f64>() / patch.len() as f64;
    let var: f64 =
        patch.iter().map(|(c, e)| (c - e) * (c - e)).sum::<f64>() / patch.len() as f64;
    if var > 0.0 {
        mean / var.sqrt()
    } else {
        f64::INFINITY
    }
}

/// Linearity report for the seed-power series.
#[derive(Debug, Clone, serde::Serialize)]
pub struct LinearityReport {
    /// Least-squares slope of peak counts versus seed photon number.
    pub slope: f64,
    pub max_rel_deviation: f64,
    /// Powers whose peak counts deviate from the linear fit by more than
    /// 1%.
    pub flagged_powers: Vec<f64>,
}

/// Check that stimulated peak counts scale linearly with seed power, using
/// the noise-free expectation so that shot noise cannot mask saturation.
pub fn linearity_check(jsi: &JointIntensity, spec: &SeedScanSpec) -> Result<LinearityReport> {
    spec.validate()?;
    if spec.seed_powers.len() < 3 {
        return Err(Error::InsufficientData(
            "linearity check needs at least 3 seed powers".into(),
        ));
    }
    let mut peaks = Vec::with_capacity(spec.seed_powers.len());
    for &p in &spec.seed_powers {
        let (_, _, expected) = expected_stimulated_map(jsi, spec, p)?;
        peaks.push(expected.iter().cloned().fold(0.0, f64::max));
    }
    let sxx: f64 = spec.seed_powers.iter().map(|p| p * p).sum();
    let sxy: f64 = spec.seed_powers.iter().zip(&peaks).map(|(p, n)| p * n).sum();
    let slope = sxy / sxx;
    let mut max_dev = 0.0;
    let mut flagged = Vec::new();
    for (&p, &n) in spec.seed_powers.iter().zip(&peaks) {
        if p <= 0.0 {
            continue;
        }
        let dev = (n - slope * p).abs() / (slope * p);
        if dev > max_dev {
            max_dev = dev;
        }
        if dev > 0.01 {
            flagged.push(p);
        }
    }
    Ok(LinearityReport { slope, max_rel_deviation: max_dev, flagged_powers: flagged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::FrequencyGrid;
    use crate::source;
    use approx::assert_relative_eq;

    fn bow_tie_like_jsi() -> JointIntensity {
        // non-degenerate arms reminiscent of a fibre pair source; sized so
        // the 30 GHz seed line stays below a quarter of the narrow feature
        let grid = FrequencyGrid::symmetric_two_arm(628.0, 790.0, 2.3e13, 160).unwrap();
        source::diagonal_gaussian_amplitude(4.5e12, 1.8e12, &grid).unwrap().intensity()
    }

    fn spec_for(jsi: &JointIntensity, power: f64) -> SeedScanSpec {
        let wl = jsi.grid().idler_wavelengths_nm();
        let (lo, hi) = (wl[wl.len() - 1], wl[0]);
        SeedScanSpec {
            seed_bandwidth_ghz: 30.0,
            seed_powers: vec![power],
            scan_range_nm: (lo, hi),
            scan_step_nm: 0.02,
            spectrometer_resolution_nm: 0.02,
            noise_floor_rel: 0.0,
            dwell_s: 1.0,
            saturation_photons: None,
        }
    }

    #[test]
    fn noiseless_map_recovers_the_jsi_mode_number() {
        let jsi = bow_tie_like_jsi();
        let truth = crate::schmidt::schmidt_from_intensity(&jsi).unwrap().schmidt_number;
        let spec = spec_for(&jsi, 1e9);
        let (_, _, expected) = expected_stimulated_map(&jsi, &spec, 1e9).unwrap();
        let k = crate::schmidt::schmidt_from_counts(&expected).unwrap().schmidt_number;
        assert!((k - truth).abs() / truth < 0.01, "K {k} vs truth {truth}");
    }

    #[test]
    fn noiseless_map_matches_the_convolved_ellipse() {
        // Gaussian ellipse through Gaussian kernels stays Gaussian
        let (sd, sa) = (4.5e12, 1.8e12);
        let jsi = bow_tie_like_jsi();
        let spec = spec_for(&jsi, 1e9);
        let (xs, ys, expected) = expected_stimulated_map(&jsi, &spec, 1e9).unwrap();
        let jac_s = units::bandwidth_rad_s_to_nm(1.0, 628.0);
        let jac_i = units::bandwidth_rad_s_to_nm(1.0, 790.0);
        let res_sigma = units::fwhm_to_sigma(spec.spectrometer_resolution_nm);
        let seed_sigma = spec.seed_sigma_nm(790.0);
        // covariance of the ellipse in (λs, λi)
        let vd = 0.5 * sd * sd;
        let va = 0.5 * sa * sa;
        let c11 = 0.5 * (vd + va) * jac_s * jac_s + res_sigma * res_sigma;
        let c22 = 0.5 * (vd + va) * jac_i * jac_i + seed_sigma * seed_sigma;
        let c12 = 0.5 * (va - vd) * jac_s * jac_i;
        let det = c11 * c22 - c12 * c12;
        let mut reference = Array2::<f64>::zeros(expected.dim());
        for (a, &x) in xs.iter().enumerate() {
            for (b, &y) in ys.iter().enumerate() {
                let (dx, dy) = (x - 628.0, y - 790.0);
                let q = (c22 * dx * dx - 2.0 * c12 * dx * dy + c11 * dy * dy) / det;
                reference[(a, b)] = (-0.5 * q).exp();
            }
        }
        let et = expected.sum();
        let rt = reference.sum();
        let l1: f64 = expected
            .indexed_iter()
            .map(|((a, b), &v)| (v / et - reference[(a, b)] / rt).abs())
            .sum();
        assert!(l1 < 0.01, "L1 {l1}");
    }

    #[test]
    fn doubling_seed_power_doubles_counts_but_not_the_shape() {
        let jsi = bow_tie_like_jsi();
        let spec = spec_for(&jsi, 1e9);
        let (_, _, one) = expected_stimulated_map(&jsi, &spec, 1e9).unwrap();
        let (_, _, two) = expected_stimulated_map(&jsi, &spec, 2e9).unwrap();
        let ratio = two.sum() / one.sum();
        assert_relative_eq!(ratio, 2.0, max_relative = 1e-12);
        let (ot, tt) = (one.sum(), two.sum());
        for (a, b) in one.iter().zip(two.iter()) {
            assert!((a / ot - b / tt).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_seed_power_means_zero_counts() {
        let jsi = bow_tie_like_jsi();
        let mut spec = spec_for(&jsi, 0.0);
        spec.seed_powers = vec![0.0];
        let scan = run_stimulated_scan(&jsi, &spec, 5).unwrap();
        assert_relative_eq!(scan.map.total(), 0.0);
    }

    #[test]
    fn linearity_is_exact_without_saturation_and_flags_with_it() {
        let jsi = bow_tie_like_jsi();
        let mut spec = spec_for(&jsi, 1e9);
        spec.seed_powers = vec![1e8, 3e8, 1e9, 3e9, 1e10];
        let report = linearity_check(&jsi, &spec).unwrap();
        assert!(report.max_rel_deviation < 1e-6, "deviation {}", report.max_rel_deviation);
        assert!(report.flagged_powers.is_empty());

        spec.saturation_photons = Some(5e9);
        let report = linearity_check(&jsi, &spec).unwrap();
        assert!(report.max_rel_deviation > 0.05);
        assert!(report.flagged_powers.contains(&1e10));

        spec.seed_powers = vec![1e8, 1e9];
        assert!(matches!(linearity_check(&jsi, &spec), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn classical_gain_buys_high_snr_and_tight_purity() {
        let jsi = bow_tie_like_jsi();
        let truth = crate::schmidt::schmidt_from_intensity(&jsi).unwrap().purity;
        let mut spec = spec_for(&jsi, 0.0);
        // pick the gain so that peak counts are ~4e4: raw SNR ≈ 200
        let (_, _, probe) = expected_stimulated_map(&jsi, &spec, 1.0).unwrap();
        let unit_peak = probe.iter().cloned().fold(0.0, f64::max);
        let power = 4.0e4 / unit_peak;
        spec.seed_powers = vec![power];
        let scan = run_stimulated_scan(&jsi, &spec, 9).unwrap();
        let snr = raw_snr(&scan);
        assert!((snr - 200.0).abs() < 60.0, "snr {snr}");
        // the kernels broaden the map a little; the noisy estimate should
        // sit on the broadened expectation with a sub-1e-3 error bar
        let est = crate::mono::estimate_purity_mono(&scan.map, 100, 3).unwrap();
        let broadened = crate::schmidt::schmidt_from_counts(&scan.expected).unwrap().purity;
        assert!((broadened - truth).abs() < 0.01, "kernel bias {broadened} vs {truth}");
        assert!((est.purity - broadened).abs() < 3.0 * est.std_error + 0.002);
        assert!(est.std_error < 1e-3, "purity error {}", est.std_error);
    }

    #[test]
    fn warns_outside_linear_regime() {
        let jsi = bow_tie_like_jsi();
        let mut spec = spec_for(&jsi, 1e9);
        spec.saturation_photons = Some(2e9);
        let scan = run_stimulated_scan(&jsi, &spec, 5).unwrap();
        assert!(!scan.warnings.is_empty());
    }
}
