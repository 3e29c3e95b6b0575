//! Two-scanning-monochromator coincidence spectroscopy.
//!
//! Both photons pass through grating monochromators whose passbands are
//! stepped over a wavelength raster while counting coincidences. Slow but
//! conceptually direct; the joint spectrum appears as the raster of
//! coincidence counts.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::events::{DetectorSpec, Histogram2D};
use crate::jsa::JointIntensity;
use crate::rng::{poisson_count, substream, Domain};
use crate::schmidt;
use crate::units;

/// Raster-scan configuration.
#[derive(Debug, Clone)]
pub struct MonoScanSpec {
    /// Scanned signal band (low, high), nm.
    pub signal_range_nm: (f64, f64),
    /// Scanned idler band (low, high), nm.
    pub idler_range_nm: (f64, f64),
    /// Grating step between scan positions, nm.
    pub step_nm: f64,
    /// FWHM of the (Gaussian) monochromator passband, nm; peak
    /// transmission is 1.
    pub passband_fwhm_nm: f64,
    /// Integration time per scan position, s.
    pub dwell_s: f64,
    /// Photon-pair rate entering the monochromators, pairs/s.
    pub pair_rate_hz: f64,
}

impl MonoScanSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_nm > 0.0) || !(self.dwell_s > 0.0) {
            return Err(Error::InvalidInput("step and dwell must be positive".into()));
        }
        if !(self.passband_fwhm_nm > 0.0) || !(self.pair_rate_hz > 0.0) {
            return Err(Error::InvalidInput("passband and pair rate must be positive".into()));
        }
        for (lo, hi) in [self.signal_range_nm, self.idler_range_nm] {
            if !(hi > lo) {
                return Err(Error::InvalidInput("scan ranges must be non-empty".into()));
            }
            if self.passband_fwhm_nm > hi - lo {
                return Err(Error::Config(format!(
                    "passband {} nm is wider than the scan range {} nm",
                    self.passband_fwhm_nm,
                    hi - lo
                )));
            }
        }
        Ok(())
    }

    /// Scan positions along one axis: lo, lo+step, … up to hi inclusive.
    fn positions(range: (f64, f64), step: f64) -> Vec<f64> {
        let n = ((range.1 - range.0) / step + 1.0 + 1e-9).floor() as usize;
        (0..n).map(|k| range.0 + k as f64 * step).collect()
    }

    pub fn n_points(&self) -> usize {
        Self::positions(self.signal_range_nm, self.step_nm).len()
            * Self::positions(self.idler_range_nm, self.step_nm).len()
    }

    /// Total dwell time of the full raster, s.
    pub fn nominal_acquisition_time_s(&self) -> f64 {
        self.n_points() as f64 * self.dwell_s
    }
}

/// Result of a monochromator raster.
#[derive(Debug, Clone)]
pub struct MonoScan {
    /// Coincidence counts on the (signal, idler) wavelength raster.
    pub histogram: Histogram2D,
    /// Noise-free expected counts for the same raster.
    pub expected: Array2<f64>,
    pub acquisition_time_s: f64,
    /// Largest expected count rate over the raster, counts/s.
    pub peak_rate_hz: f64,
}

/// Expected coincidence rate at every raster position:
/// rate = pair_rate · η_s · η_i · ∬ I(λ_s,λ_i) g(λ_s−x) g(λ_i−y) dλ_s dλ_i,
/// with g the unit-peak Gaussian passband.
fn expected_rates(
    jsi: &JointIntensity,
    spec: &MonoScanSpec,
    det_signal: &DetectorSpec,
    det_idler: &DetectorSpec,
) -> Result<(Vec<f64>, Vec<f64>, Array2<f64>)> {
    spec.validate()?;
    det_signal.validate()?;
    det_idler.validate()?;
    let xs = MonoScanSpec::positions(spec.signal_range_nm, spec.step_nm);
    let ys = MonoScanSpec::positions(spec.idler_range_nm, spec.step_nm);
    let sigma = units::fwhm_to_sigma(spec.passband_fwhm_nm);
    let scale = spec.pair_rate_hz * det_signal.efficiency * det_idler.efficiency;
    let mut rates = jsi.gaussian_raster(&xs, &ys, sigma, sigma);
    rates.mapv_inplace(|v| v * scale);
    Ok((xs, ys, rates))
}

fn edges_from_positions(positions: &[f64], step: f64) -> Vec<f64> {
    let mut e: Vec<f64> = positions.iter().map(|p| p - step / 2.0).collect();
    e.push(positions[positions.len() - 1] + step / 2.0);
    e
}

/// Run the raster scan with Poisson counting noise. Scan points use
/// independent substreams, so the result does not depend on evaluation
/// order.
pub fn run_mono_scan(
    jsi: &JointIntensity,
    spec: &MonoScanSpec,
    det_signal: &DetectorSpec,
    det_idler: &DetectorSpec,
    seed: u64,
) -> Result<MonoScan> {
    let (xs, ys, rates) = expected_rates(jsi, spec, det_signal, det_idler)?;
    let mut counts = Array2::<f64>::zeros(rates.dim());
    let n_y = ys.len();
    for ((a, b), &rate) in rates.indexed_iter() {
        let mu = rate * spec.dwell_s;
        let mut rng = substream(seed, Domain::MonoScan, (a * n_y + b) as u64);
        counts[(a, b)] = poisson_count(&mut rng, mu);
    }
    let peak_rate_hz = rates.iter().cloned().fold(0.0, f64::max);
    let expected = rates.mapv(|r| r * spec.dwell_s);
    let histogram = Histogram2D::new(
        edges_from_positions(&xs, spec.step_nm),
        edges_from_positions(&ys, spec.step_nm),
        counts,
    )?;
    Ok(MonoScan {
        histogram,
        expected,
        acquisition_time_s: spec.nominal_acquisition_time_s(),
        peak_rate_hz,
    })
}

/// Noise-free raster (the infinite-dwell limit), returned as a histogram of
/// expected counts.
pub fn run_mono_scan_expected(
    jsi: &JointIntensity,
    spec: &MonoScanSpec,
    det_signal: &DetectorSpec,
    det_idler: &DetectorSpec,
) -> Result<MonoScan> {
    let (xs, ys, rates) = expected_rates(jsi, spec, det_signal, det_idler)?;
    let peak_rate_hz = rates.iter().cloned().fold(0.0, f64::max);
    let expected = rates.mapv(|r| r * spec.dwell_s);
    let histogram = Histogram2D::new(
        edges_from_positions(&xs, spec.step_nm),
        edges_from_positions(&ys, spec.step_nm),
        expected.clone(),
    )?;
    Ok(MonoScan {
        histogram,
        expected,
        acquisition_time_s: spec.nominal_acquisition_time_s(),
        peak_rate_hz,
    })
}

/// Purity estimate with a bootstrap error bar.
#[derive(Debug, Clone, serde::Serialize)]
pub struct PurityEstimate {
    pub purity: f64,
    pub std_error: f64,
}

/// Flat-phase Schmidt purity of a measured histogram, with uncertainty from
/// Poisson bootstrap resamples of the counts.
pub fn estimate_purity_mono(
    hist: &Histogram2D,
    n_bootstrap: usize,
    seed: u64,
) -> Result<PurityEstimate> {
    if hist.total() <= 0.0 {
        return Err(Error::DegenerateInput("histogram holds no counts".into()));
    }
    let purity = schmidt::schmidt_from_counts(&hist.counts)?.purity;
    let n_bootstrap = n_bootstrap.max(100);
    let mut resampled = Vec::with_capacity(n_bootstrap);
    for r in 0..n_bootstrap {
        let mut rng = substream(seed, Domain::Bootstrap, r as u64);
        let counts = hist.counts.mapv(|c| poisson_count(&mut rng, c));
        if counts.sum() > 0.0 {
            resampled.push(schmidt::schmidt_from_counts(&counts)?.purity);
        }
    }
    let n = resampled.len() as f64;
    let mean = resampled.iter().sum::<f64>() / n;
    let var = resampled.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / n;
    Ok(PurityEstimate { purity, std_error: var.sqrt() })
}
