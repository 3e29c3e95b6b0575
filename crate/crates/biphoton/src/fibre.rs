//! Dispersive-fibre time-of-flight spectroscopy.
//!
//! A long dispersive fibre maps wavelength to arrival time, so a
//! time-tagged three-fold coincidence measurement (two APDs plus a pump
//! photodiode reference) yields the joint spectrum as a relative-timing
//! histogram. Detector jitter blurs the map; Richardson-Lucy deconvolution
//! can partially remove the blur when the jitter is not much larger than
//! the smallest spectral feature.

use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};
use crate::events::{
    apply_detection, build_timing_histogram_direct, sample_pairs, DetectorSpec, Histogram2D,
    PhotonEvent, TaggerSpec,
};
use crate::grid::FrequencyGrid;
use crate::jsa::{JointIntensity, MarginalSpectrum};
use crate::rng::{substream, Domain};
use crate::source;
use crate::units;

/// Dispersive delay line.
#[derive(Debug, Clone)]
pub struct FibreSpec {
    /// Group-velocity dispersion, ps/(nm·km); negative near 810 nm in
    /// standard single-mode fibre.
    pub dispersion_ps_per_nm_km: f64,
    pub length_km: f64,
    /// Wavelength that exits with `delay_offset_ps` delay, nm.
    pub reference_wavelength_nm: f64,
    pub loss_db_per_km: f64,
    /// Common transit-time offset left after calibration, ps.
    pub delay_offset_ps: f64,
}

impl FibreSpec {
    /// 400 m of −120 ps/nm/km fibre referenced to the given wavelength.
    pub fn standard_800nm_band(reference_wavelength_nm: f64) -> Self {
        Self {
            dispersion_ps_per_nm_km: -120.0,
            length_km: 0.4,
            reference_wavelength_nm,
            loss_db_per_km: 0.0,
            delay_offset_ps: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length_km > 0.0) {
            return Err(Error::InvalidInput("fibre length must be positive".into()));
        }
        if self.dispersion_ps_per_nm_km == 0.0 {
            return Err(Error::InvalidInput("fibre dispersion must be nonzero".into()));
        }
        Ok(())
    }

    /// Total dispersion, ps/nm.
    pub fn dispersion_ps_per_nm(&self) -> f64 {
        self.dispersion_ps_per_nm_km * self.length_km
    }

    /// Power transmission through the full length.
    pub fn transmission(&self) -> f64 {
        10f64.powf(-self.loss_db_per_km * self.length_km / 10.0)
    }
}

/// First-order wavelength → arrival-delay map,
/// Δt = D·L·(λ − λ_ref) + offset.
pub fn wavelength_to_delay(lambda_nm: f64, spec: &FibreSpec) -> f64 {
    spec.dispersion_ps_per_nm() * (lambda_nm - spec.reference_wavelength_nm)
        + spec.delay_offset_ps
}

/// Inverse of [`wavelength_to_delay`].
pub fn delay_to_wavelength(delay_ps: f64, spec: &FibreSpec) -> f64 {
    (delay_ps - spec.delay_offset_ps) / spec.dispersion_ps_per_nm()
        + spec.reference_wavelength_nm
}

/// Full measurement configuration.
#[derive(Debug, Clone)]
pub struct FibreScanSpec {
    pub fibre: FibreSpec,
    pub apd_a: DetectorSpec,
    pub apd_b: DetectorSpec,
    /// Photodiode watching the pump; tagged once per pulse and shared by
    /// both arms, so its jitter is correlated between the two delay axes.
    pub reference: DetectorSpec,
    pub tagger: TaggerSpec,
    pub rep_rate_mhz: f64,
    pub tagger_bin_ps: i64,
    /// Full histogram span per axis, ps.
    pub range_ps: i64,
    /// Both photons share one fibre and a 50:50 splitter; pairs landing on
    /// the same APD are lost. Disable to model one fibre per arm.
    pub route_5050: bool,
}

impl FibreScanSpec {
    /// Ideal detectors with the given per-arm jitter, two-fibre routing.
    pub fn jitter_study(fibre: FibreSpec, jitter_fwhm_ps: f64, bin_ps: i64, range_ps: i64) -> Self {
        Self {
            fibre,
            apd_a: DetectorSpec::with_jitter(jitter_fwhm_ps),
            apd_b: DetectorSpec::with_jitter(jitter_fwhm_ps),
            reference: DetectorSpec::ideal(),
            tagger: TaggerSpec::default(),
            rep_rate_mhz: 76.0,
            tagger_bin_ps: bin_ps,
            range_ps,
            route_5050: false,
        }
    }
}

/// Result of a fibre time-of-flight run.
#[derive(Debug, Clone)]
pub struct FibreMeasurement {
    /// Relative-timing histogram (t_APD − t_reference), ps × ps.
    pub time_histogram: Histogram2D,
    /// The same histogram with axes mapped to wavelength, nm × nm.
    pub wavelength_histogram: Histogram2D,
    pub detected_triples: f64,
    pub warnings: Vec<String>,
}

const REFERENCE_CHANNEL: u8 = 0;
const APD_A_CHANNEL: u8 = 1;
const APD_B_CHANNEL: u8 = 2;

/// Simulate the full pipeline: sample pairs from the joint intensity, map
/// wavelengths to fibre delays, route photons to the APDs, detect, tag, and
/// histogram three-fold coincidences against the pump photodiode.
pub fn run_fibre_measurement(
    jsi: &JointIntensity,
    scan: &FibreScanSpec,
    n_pairs: usize,
    seed: u64,
) -> Result<FibreMeasurement> {
    scan.fibre.validate()?;
    if n_pairs == 0 {
        return Err(Error::InsufficientData("n_pairs must be positive".into()));
    }
    if !(scan.rep_rate_mhz > 0.0) {
        return Err(Error::InvalidInput("repetition rate must be positive".into()));
    }
    let period_ps = 1e6 / scan.rep_rate_mhz;
    // Physical sources emit ≪ 1 pair per pulse, so consecutive pairs are
    // far apart; emulate that by striding pair-carrying pulses so that dead
    // time and the histogram window never couple two pairs.
    let dead_max_ps = [&scan.apd_a, &scan.apd_b, &scan.reference]
        .iter()
        .map(|d| d.dead_time_ns * 1000.0)
        .fold(0.0, f64::max);
    let jitter_max = [&scan.apd_a, &scan.apd_b, &scan.reference]
        .iter()
        .map(|d| units::fwhm_to_sigma(d.jitter_fwhm_ps))
        .fold(0.0, f64::max);
    let needed = scan.range_ps as f64 + dead_max_ps + 10.0 * jitter_max;
    let stride = (needed / period_ps).ceil().max(0.0) as usize + 1;
    // keep every jittered tag positive
    let base_ps = 2.0 * period_ps + scan.range_ps as f64 + 10.0 * jitter_max;

    let pairs = sample_pairs(jsi, n_pairs, seed);
    let transmission = scan.fibre.transmission();
    let mut events = Vec::with_capacity(3 * n_pairs);
    for (k, (lam_s, lam_i)) in pairs.iter().enumerate() {
        let t0 = base_ps + period_ps * (k * stride) as f64;
        events.push(PhotonEvent { channel: REFERENCE_CHANNEL, time_ps: t0 });
        let mut rng = substream(seed, Domain::Routing, k as u64);
        for lam in [lam_s, lam_i] {
            if transmission < 1.0 && rng.gen::<f64>() >= transmission {
                continue;
            }
            let channel = if scan.route_5050 {
                if rng.gen::<bool>() {
                    APD_A_CHANNEL
                } else {
                    APD_B_CHANNEL
                }
            } else if lam == lam_s {
                APD_A_CHANNEL
            } else {
                APD_B_CHANNEL
            };
            events.push(PhotonEvent {
                channel,
                time_ps: t0 + wavelength_to_delay(*lam, &scan.fibre),
            });
        }
    }

    let stream = apply_detection(
        &events,
        &[
            (REFERENCE_CHANNEL, scan.reference.clone()),
            (APD_A_CHANNEL, scan.apd_a.clone()),
            (APD_B_CHANNEL, scan.apd_b.clone()),
        ],
        &scan.tagger,
        seed,
    )?;

    let time_histogram = build_timing_histogram_direct(
        &stream,
        REFERENCE_CHANNEL,
        APD_A_CHANNEL,
        APD_B_CHANNEL,
        scan.tagger_bin_ps,
        scan.range_ps,
    )?;
    let detected = time_histogram.total();
    let mut warnings = Vec::new();
    if detected < 100.0 {
        warnings.push(format!(
            "only {detected} coincidences recorded; statistics are unreliable"
        ));
    }
    let wavelength_histogram = delay_histogram_to_wavelength(&time_histogram, &scan.fibre)?;
    Ok(FibreMeasurement { time_histogram, wavelength_histogram, detected_triples: detected, warnings })
}

/// Map a ps×ps relative-timing histogram onto nm×nm wavelength axes using
/// the fibre dispersion. Negative dispersion reverses the axis order; the
/// counts are flipped to keep edges increasing.
pub fn delay_histogram_to_wavelength(
    hist: &Histogram2D,
    fibre: &FibreSpec,
) -> Result<Histogram2D> {
    fibre.validate()?;
    let map = |t: f64| delay_to_wavelength(t, fibre);
    let flip = fibre.dispersion_ps_per_nm() < 0.0;
    let convert = |edges: &[f64]| -> Vec<f64> {
        let mut e: Vec<f64> = edges.iter().map(|&t| map(t)).collect();
        if flip {
            e.reverse();
        }
        e
    };
    let mut counts = hist.counts.clone();
    if flip {
        counts = counts.slice(ndarray::s![..;-1, ..;-1]).to_owned();
    }
    Histogram2D::new(convert(&hist.x_edges), convert(&hist.y_edges), counts)
}

/// Default Richardson-Lucy iteration count. Multiplicative updates start
/// amplifying counting noise well before they converge on blurred
/// structure; five iterations recover jitter-degraded mode numbers without
/// inflating them.
pub const RL_DEFAULT_ITERATIONS: usize = 5;

/// Default relative-update stopping tolerance for Richardson-Lucy.
pub const RL_DEFAULT_STOP_TOL: f64 = 1e-4;

/// Richardson-Lucy deconvolution with a Gaussian blur kernel.
///
/// Multiplicative updates preserve non-negativity and, for data supported
/// away from the histogram edges, the total count. Stops after `iterations`
/// or when the relative L1 update falls below `stop_tol`. A kernel narrower
/// than a tenth of a bin is treated as the identity.
pub fn richardson_lucy_2d(
    hist: &Histogram2D,
    kernel_fwhm_ps: f64,
    iterations: usize,
    stop_tol: f64,
) -> Result<Histogram2D> {
    if !(kernel_fwhm_ps > 0.0) {
        return Err(Error::Domain("kernel FWHM must be positive".into()));
    }
    if iterations == 0 {
        return Err(Error::Domain("need at least one iteration".into()));
    }
    if hist.total() <= 0.0 {
        return Err(Error::DegenerateInput("cannot deconvolve an empty histogram".into()));
    }
    let bin = hist.bin_width_x();
    if (hist.bin_width_y() - bin).abs() > 1e-9 * bin {
        return Err(Error::Alignment("deconvolution expects square bins".into()));
    }
    if kernel_fwhm_ps <= bin / 10.0 {
        return Ok(hist.clone());
    }
    let sigma_bins = units::fwhm_to_sigma(kernel_fwhm_ps) / bin;
    let taps = gaussian_taps(sigma_bins);

    let data = &hist.counts;
    let ones = Array2::<f64>::ones(data.dim());
    let weight = convolve_separable(&ones, &taps);
    let mut estimate = data.clone();
    let mut previous_l1 = estimate.sum();
    for _ in 0..iterations {
        let blurred = convolve_separable(&estimate, &taps);
        let mut ratio = Array2::<f64>::zeros(data.dim());
        ndarray::Zip::from(&mut ratio).and(data).and(&blurred).for_each(|r, &d, &b| {
            *r = if b > 0.0 { d / b } else { 0.0 };
        });
        let correction = convolve_separable(&ratio, &taps);
        let mut delta = 0.0;
        ndarray::Zip::from(&mut estimate).and(&correction).and(&weight).for_each(|e, &c, &w| {
            let updated = if w > 0.0 { *e * c / w } else { 0.0 };
            delta += (updated - *e).abs();
            *e = updated;
        });
        let l1 = estimate.sum();
        if delta / previous_l1.max(1e-300) < stop_tol {
            break;
        }
        previous_l1 = l1;
    }
    Histogram2D::new(hist.x_edges.clone(), hist.y_edges.clone(), estimate)
}

fn gaussian_taps(sigma_bins: f64) -> Vec<f64> {
    let half = (4.0 * sigma_bins).ceil() as i64;
    let mut taps: Vec<f64> = (-half..=half)
        .map(|k| (-(k as f64) * (k as f64) / (2.0 * sigma_bins * sigma_bins)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    taps
}

/// Separable zero-padded convolution with a symmetric 1D kernel.
fn convolve_separable(m: &Array2<f64>, taps: &[f64]) -> Array2<f64> {
    let half = (taps.len() / 2) as i64;
    let (nr, nc) = m.dim();
    let mut rows = Array2::<f64>::zeros((nr, nc));
    for r in 0..nr {
        for c in 0..nc {
            let v = m[(r, c)];
            if v == 0.0 {
                continue;
            }
            for (t, tap) in taps.iter().enumerate() {
                let cc = c as i64 + t as i64 - half;
                if cc >= 0 && (cc as usize) < nc {
                    rows[(r, cc as usize)] += v * tap;
                }
            }
        }
    }
    let mut out = Array2::<f64>::zeros((nr, nc));
    for c in 0..nc {
        for r in 0..nr {
            let v = rows[(r, c)];
            if v == 0.0 {
                continue;
            }
            for (t, tap) in taps.iter().enumerate() {
                let rr = r as i64 + t as i64 - half;
                if rr >= 0 && (rr as usize) < nr {
                    out[(rr as usize, c)] += v * tap;
                }
            }
        }
    }
    out
}

/// One-dimensional time histogram (uniform ps bins).
#[derive(Debug, Clone, PartialEq)]
pub struct TimeHistogram {
    pub edges_ps: Vec<f64>,
    pub counts: Vec<f64>,
}

impl TimeHistogram {
    pub fn centers(&self) -> Vec<f64> {
        self.edges_ps.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn bin_width(&self) -> f64 {
        self.edges_ps[1] - self.edges_ps[0]
    }
}

/// Jitter calibration result.
#[derive(Debug, Clone, serde::Serialize)]
pub struct JitterCalibration {
    pub fitted_fwhm_ps: f64,
    /// RMS residual relative to the peak of the measured histogram.
    pub residual_rel_rms: f64,
}

/// Recover the system jitter by fitting the width of the Gaussian that,
/// convolved with a known spectrum (mapped into time by the fibre), best
/// matches a measured arrival-time histogram. The model and data are
/// centroid-aligned and compared after unit-sum normalization.
pub fn calibrate_jitter(
    known: &MarginalSpectrum,
    measured: &TimeHistogram,
    fibre: &FibreSpec,
) -> Result<JitterCalibration> {
    fibre.validate()?;
    if measured.counts.len() < 4 {
        return Err(Error::InsufficientData("measured histogram too small".into()));
    }
    let total: f64 = measured.counts.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateInput("measured histogram is empty".into()));
    }
    let bin = measured.bin_width();
    let n_bins = measured.counts.len();
    let t_lo = measured.edges_ps[0];

    // jitter-free model: each spectral cell maps to a time interval; its
    // mass is spread over the overlapped bins by exact interval
    // intersection, so no deposit granularity can masquerade as jitter
    let half_cell = known.step() / 2.0;
    let cell_intervals: Vec<(f64, f64, f64)> = (0..known.nu_rad_s.len())
        .map(|i| {
            let nu = known.nu_rad_s[i];
            let t1 = wavelength_to_delay(
                units::angular_to_wavelength_nm(known.center_rad_s + nu - half_cell),
                fibre,
            );
            let t2 = wavelength_to_delay(
                units::angular_to_wavelength_nm(known.center_rad_s + nu + half_cell),
                fibre,
            );
            (t1.min(t2), t1.max(t2), known.density[i] * known.step())
        })
        .collect();
    let meas: Vec<f64> = measured.counts.iter().map(|c| c / total).collect();

    // centroid alignment in continuous time; jitter is symmetric, so one
    // shift serves every candidate width
    let centers = measured.centers();
    let meas_centroid: f64 = centers.iter().zip(&meas).map(|(c, v)| c * v).sum();
    let w_sum: f64 = cell_intervals.iter().map(|(_, _, w)| w).sum();
    let ideal_centroid: f64 =
        cell_intervals.iter().map(|(a, b, w)| 0.5 * (a + b) * w).sum::<f64>() / w_sum;
    let shift = meas_centroid - ideal_centroid;

    let mut ideal = vec![0.0; n_bins];
    for (a, b, w) in &cell_intervals {
        let (a, b) = (a + shift, b + shift);
        let width = (b - a).max(1e-12);
        let k_lo = (((a - t_lo) / bin).floor().max(0.0)) as usize;
        let k_hi = ((((b - t_lo) / bin).ceil()).min(n_bins as f64)) as usize;
        for k in k_lo..k_hi.min(n_bins) {
            let bin_a = t_lo + k as f64 * bin;
            let overlap = (b.min(bin_a + bin) - a.max(bin_a)).max(0.0);
            ideal[k] += w * overlap / width;
        }
    }
    let ideal_sum: f64 = ideal.iter().sum();
    if ideal_sum <= 0.0 {
        return Err(Error::Calibration("known spectrum misses the measured time window".into()));
    }
    for v in &mut ideal {
        *v /= ideal_sum;
    }

    let loss = |fwhm: f64| -> f64 {
        let model = convolve_unit_sum(&ideal, fwhm / bin);
        model.iter().zip(&meas).map(|(m, d)| (m - d) * (m - d)).sum()
    };

    // golden-section minimization over the jitter FWHM
    let (mut a, mut b) = (bin * 1e-3, (n_bins as f64) * bin);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (loss(c), loss(d));
    for _ in 0..80 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = loss(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = loss(d);
        }
        if (b - a) < 0.01 * bin {
            break;
        }
    }
    let fwhm = 0.5 * (a + b);
    if !fwhm.is_finite() || fwhm > 0.98 * (n_bins as f64) * bin {
        return Err(Error::Calibration("jitter fit ran into the search boundary".into()));
    }
    let model = convolve_unit_sum(&ideal, fwhm / bin);
    let peak = meas.iter().cloned().fold(0.0, f64::max);
    let rms = (model.iter().zip(&meas).map(|(m, d)| (m - d) * (m - d)).sum::<f64>()
        / n_bins as f64)
        .sqrt();
    Ok(JitterCalibration { fitted_fwhm_ps: fwhm, residual_rel_rms: rms / peak })
}

/// Convolve a unit-sum histogram with a Gaussian of the given FWHM in bins.
fn convolve_unit_sum(h: &[f64], fwhm_bins: f64) -> Vec<f64> {
    let sigma = units::fwhm_to_sigma(fwhm_bins);
    if sigma < 0.02 {
        return h.to_vec();
    }
    let taps = gaussian_taps(sigma);
    let half = (taps.len() / 2) as i64;
    let n = h.len();
    let mut out = vec![0.0; n];
    for (i, &v) in h.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        for (t, tap) in taps.iter().enumerate() {
            let k = i as i64 + t as i64 - half;
            if k >= 0 && (k as usize) < n {
                out[k as usize] += v * tap;
            }
        }
    }
    out
}

/// Diagonal-ellipse source whose *delay-space* intensity has the requested
/// Schmidt number and narrow-axis width after the fibre map. Useful for
/// jitter studies: the narrow (frequency-sum) arclength width in ps sets
/// how much a given detector jitter blurs the structure.
pub fn delay_matched_ellipse(
    k_true: f64,
    narrow_sigma_ps: f64,
    fibre: &FibreSpec,
    grid_points: usize,
) -> Result<JointIntensity> {
    if !(k_true >= 1.0) {
        return Err(Error::Domain("Schmidt number must be at least 1".into()));
    }
    fibre.validate()?;
    let lam0 = fibre.reference_wavelength_nm;
    // ps of delay per rad/s of detuning
    let ps_per_rad_s = fibre.dispersion_ps_per_nm().abs()
        * units::bandwidth_rad_s_to_nm(1.0, lam0);
    let rho = k_true + (k_true * k_true - 1.0).sqrt();
    // amplitude sum-axis width whose intensity arclength width maps to
    // narrow_sigma_ps
    let sigma_a = std::f64::consts::SQRT_2 * narrow_sigma_ps / ps_per_rad_s;
    let sigma_d = rho * sigma_a;
    let grid = FrequencyGrid::symmetric(lam0, 5.0 * sigma_d.max(sigma_a), grid_points)?;
    Ok(source::diagonal_gaussian_amplitude(sigma_d, sigma_a, &grid)?.intensity())
}

/// Flat-phase Schmidt number of a measured 2D histogram.
pub fn histogram_schmidt_number(hist: &Histogram2D) -> Result<f64> {
    Ok(crate::schmidt::schmidt_from_counts(&hist.counts)?.schmidt_number)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fibre() -> FibreSpec {
        FibreSpec::standard_800nm_band(810.0)
    }

    #[test]
    fn delay_map_basics() {
        let f = fibre();
        assert_relative_eq!(wavelength_to_delay(810.0, &f), 0.0);
        // 1 nm across 400 m of -120 ps/nm/km is 48 ps
        assert_relative_eq!(wavelength_to_delay(811.0, &f), -48.0, max_relative = 1e-12);
        assert_relative_eq!(wavelength_to_delay(809.0, &f), 48.0, max_relative = 1e-12);
        // 10 nm maps to 480 ps, comfortably above a 275 ps jitter
        assert!(wavelength_to_delay(800.0, &f).abs() > 275.0);
        assert_relative_eq!(delay_to_wavelength(-48.0, &f), 811.0, max_relative = 1e-12);
    }

    #[test]
    fn ellipse_builder_hits_requested_delay_widths() {
        let f = fibre();
        let jsi = delay_matched_ellipse(2.0, 370.0, &f, 256).unwrap();
        let k = crate::schmidt::schmidt_from_intensity(&jsi).unwrap().schmidt_number;
        assert!((k - 2.0).abs() < 0.01, "K = {k}");
        // the narrow (sum) axis intensity width should be 370 ps of delay:
        // measure it from the marginal of the rotated coordinate
        let grid = jsi.grid();
        let ps_per_rad_s =
            f.dispersion_ps_per_nm().abs() * units::bandwidth_rad_s_to_nm(1.0, 810.0);
        let mut sum_w = 0.0;
        let mut sum_w_t2 = 0.0;
        for (i, &ns) in grid.signal_nu().iter().enumerate() {
            for (j, &ni) in grid.idler_nu().iter().enumerate() {
                let w = jsi.values()[(i, j)];
                let arc = (ns + ni) / std::f64::consts::SQRT_2 * ps_per_rad_s;
                sum_w += w;
                sum_w_t2 += w * arc * arc;
            }
        }
        let width = (sum_w_t2 / sum_w).sqrt();
        assert!((width - 370.0).abs() < 4.0, "narrow delay width {width} ps");
    }

    #[test]
    fn noiseless_measurement_reproduces_source_schmidt_number() {
        let f = fibre();
        let jsi = delay_matched_ellipse(2.0, 370.0, &f, 192).unwrap();
        let scan = FibreScanSpec::jitter_study(f, 0.0, 50, 12000);
        let m = run_fibre_measurement(&jsi, &scan, 300_000, 5).unwrap();
        assert!(m.warnings.is_empty());
        assert_relative_eq!(m.detected_triples, 300_000.0);
        let k = histogram_schmidt_number(&m.time_histogram).unwrap();
        // binning plus finite counts bias K slightly; stay within a few %
        assert!((k - 2.0).abs() < 0.07, "K = {k}");
        // wavelength-converted histogram carries the same counts and K
        let kw = histogram_schmidt_number(&m.wavelength_histogram).unwrap();
        assert_relative_eq!(k, kw, max_relative = 1e-12);
        assert_relative_eq!(m.wavelength_histogram.total(), m.time_histogram.total());
    }

    /// Frozen jitter-study scenario: a K = 2.0 source with a 135 ps narrow
    /// feature, 32k pairs, 50 ps bins, and a histogram window scaled to
    /// each blurred distribution.
    fn jitter_scenario(jitter_fwhm_ps: f64, seed: u64) -> (Histogram2D, f64, f64) {
        let f = fibre();
        let jsi = delay_matched_ellipse(2.0, 135.0, &f, 256).unwrap();
        let range = match jitter_fwhm_ps as i64 {
            0..=99 => 1900,
            100..=500 => 3000,
            _ => 2800,
        };
        let scan = FibreScanSpec::jitter_study(f, jitter_fwhm_ps, 50, range);
        let m = run_fibre_measurement(&jsi, &scan, 32_000, seed).unwrap();
        let k = histogram_schmidt_number(&m.time_histogram).unwrap();
        let rl = richardson_lucy_2d(
            &m.time_histogram,
            jitter_fwhm_ps.max(1.0),
            RL_DEFAULT_ITERATIONS,
            RL_DEFAULT_STOP_TOL,
        )
        .unwrap();
        let k_rl = histogram_schmidt_number(&rl).unwrap();
        (m.time_histogram, k, k_rl)
    }

    #[test]
    fn jitter_degrades_and_deconvolution_recovers_mode_number() {
        let (_, k50, rl50) = jitter_scenario(50.0, 3);
        assert!((k50 - 1.98).abs() < 0.04, "K(50 ps) = {k50}");
        assert!((rl50 - 1.98).abs() < 0.05, "RL(50 ps) = {rl50}");
        let (_, k275, rl275) = jitter_scenario(275.0, 3);
        assert!((k275 - 1.68).abs() < 0.04, "K(275 ps) = {k275}");
        assert!((rl275 - 1.99).abs() < 0.05, "RL(275 ps) = {rl275}");
        let (_, k1000, rl1000) = jitter_scenario(1000.0, 3);
        assert!((k1000 - 1.14).abs() < 0.02, "K(1 ns) = {k1000}");
        assert!((rl1000 - 1.20).abs() < 0.05, "RL(1 ns) = {rl1000}");
    }

    #[test]
    fn deconvolution_thumb_rules() {
        // feature FWHM is 318 ps (135 ps sigma): jitter below half of it
        // needs no deconvolution; jitter around the feature size is
        // recoverable; jitter several times the feature is not
        let (_, k50, _) = jitter_scenario(50.0, 4);
        assert!((k50 - 2.0).abs() / 2.0 < 0.03, "small jitter needs no deconvolution: {k50}");
        let (_, _, rl275) = jitter_scenario(275.0, 4);
        assert!((rl275 - 2.0).abs() / 2.0 < 0.05, "275 ps recoverable: {rl275}");
        let (_, _, rl1000) = jitter_scenario(1000.0, 4);
        assert!(rl1000 < 1.5, "1 ns under-recovers by design: {rl1000}");
    }

    #[test]
    fn shared_reference_jitter_bias_is_small() {
        // the pump photodiode is tagged once per pulse and shared by both
        // arms, correlating the two delay axes; compare against folding the
        // same total jitter independently into each arm
        let f = fibre();
        let jsi = delay_matched_ellipse(2.0, 500.0, &f, 256).unwrap();
        let mut shared = FibreScanSpec::jitter_study(f.clone(), 174.0, 50, 9000);
        shared.reference = DetectorSpec::with_jitter(203.0);
        shared.tagger = TaggerSpec { correlation_jitter_fwhm_ps: 64.0 };
        let m_shared = run_fibre_measurement(&jsi, &shared, 200_000, 11).unwrap();
        let p_shared = 1.0 / histogram_schmidt_number(&m_shared.time_histogram).unwrap();

        // sqrt(174² + 203² + 64²) = 275 ps per axis, uncorrelated
        let indep = FibreScanSpec::jitter_study(f, 275.02, 50, 9000);
        let m_indep = run_fibre_measurement(&jsi, &indep, 200_000, 11).unwrap();
        let p_indep = 1.0 / histogram_schmidt_number(&m_indep.time_histogram).unwrap();

        let bias = (p_shared - p_indep).abs();
        assert!(bias < 0.012, "shared-reference purity bias {bias}");
    }

    #[test]
    fn routing_5050_costs_half_the_coincidences() {
        let f = fibre();
        let jsi = delay_matched_ellipse(2.0, 370.0, &f, 128).unwrap();
        let mut scan = FibreScanSpec::jitter_study(f, 0.0, 50, 12000);
        scan.route_5050 = true;
        scan.apd_a.dead_time_ns = 20.0;
        scan.apd_b.dead_time_ns = 20.0;
        let n = 40_000;
        let m = run_fibre_measurement(&jsi, &scan, n, 6).unwrap();
        let frac = m.detected_triples / n as f64;
        assert!((frac - 0.5).abs() < 0.02, "coincidence fraction {frac}");
    }

    #[test]
    fn identity_kernel_returns_input() {
        let f = fibre();
        let jsi = delay_matched_ellipse(1.5, 300.0, &f, 128).unwrap();
        let scan = FibreScanSpec::jitter_study(f, 0.0, 50, 8000);
        let m = run_fibre_measurement(&jsi, &scan, 5_000, 7).unwrap();
        let out = richardson_lucy_2d(&m.time_histogram, 4.0, 50, 1e-4).unwrap();
        assert_eq!(out, m.time_histogram);
    }

    #[test]
    fn deconvolution_conserves_counts_and_positivity() {
        let f = fibre();
        let jsi = delay_matched_ellipse(2.0, 370.0, &f, 128).unwrap();
        let scan = FibreScanSpec::jitter_study(f, 275.0, 50, 12000);
        let m = run_fibre_measurement(&jsi, &scan, 20_000, 8).unwrap();
        let out = richardson_lucy_2d(&m.time_histogram, 275.0, 50, 1e-4).unwrap();
        assert!((out.total() - m.time_histogram.total()).abs() / m.time_histogram.total() < 1e-6);
        assert!(out.counts.iter().all(|&v| v >= 0.0));
        assert!(matches!(
            richardson_lucy_2d(&m.time_histogram, -1.0, 50, 1e-4),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn calibration_recovers_injected_jitter() {
        let f = fibre();
        // the fit is only well conditioned when the jitter is comparable to
        // the spectral feature, so calibrate against a narrow spectrum
        let jsi = delay_matched_ellipse(1.02, 200.0, &f, 192).unwrap();
        let known = jsi.marginal(crate::jsa::Arm::Signal);

        // measured: single-arm arrival times against the reference
        let pairs = sample_pairs(&jsi, 200_000, 9);
        let mut events = Vec::new();
        for (k, (lam_s, _)) in pairs.iter().enumerate() {
            let t0 = 40_000.0 + 12_500.0 * k as f64;
            events.push(PhotonEvent { channel: 0, time_ps: t0 });
            events.push(PhotonEvent {
                channel: 1,
                time_ps: t0 + wavelength_to_delay(*lam_s, &f),
            });
        }
        let stream = apply_detection(
            &events,
            &[(0, DetectorSpec::ideal()), (1, DetectorSpec::with_jitter(275.0))],
            &TaggerSpec::default(),
            10,
        )
        .unwrap();
        let (edges, counts) = crate::events::correlation_histogram(&stream, 0, 1, 50, 12000).unwrap();
        let measured = TimeHistogram { edges_ps: edges, counts };
        let cal = calibrate_jitter(&known, &measured, &f).unwrap();
        assert!((cal.fitted_fwhm_ps - 275.0).abs() < 15.0, "fitted {}", cal.fitted_fwhm_ps);

        // zero-jitter data fits to (at most) the bin width; the noise
        // plateau of the fit shrinks with statistics, so use a long run
        let pairs0 = sample_pairs(&jsi, 1_000_000, 12);
        let mut events0 = Vec::new();
        for (k, (lam_s, _)) in pairs0.iter().enumerate() {
            let t0 = 40_000.0 + 12_500.0 * k as f64;
            events0.push(PhotonEvent { channel: 0, time_ps: t0 });
            events0.push(PhotonEvent { channel: 1, time_ps: t0 + wavelength_to_delay(*lam_s, &f) });
        }
        let stream0 = apply_detection(
            &events0,
            &[(0, DetectorSpec::ideal()), (1, DetectorSpec::ideal())],
            &TaggerSpec::default(),
            11,
        )
        .unwrap();
        let (e0, c0) = crate::events::correlation_histogram(&stream0, 0, 1, 50, 12000).unwrap();
        let cal0 = calibrate_jitter(&known, &TimeHistogram { edges_ps: e0, counts: c0 }, &f).unwrap();
        assert!(cal0.fitted_fwhm_ps <= 50.0, "fitted {}", cal0.fitted_fwhm_ps);
    }

    #[test]
    fn calibration_reproduces_lowpass_edge_smearing() {
        let f = fibre();
        // sharp low-pass edge at 812 nm on a broad Gaussian spectrum
        let grid = FrequencyGrid::symmetric(810.0, 3e13, 512).unwrap();
        let cutoff_nu = units::wavelength_nm_to_angular(812.0) - grid.center_signal_rad_s;
        let sigma = 8e12;
        let mut values = Array2::<f64>::zeros((512, 512));
        for (i, &ns) in grid.signal_nu().iter().enumerate() {
            let keep = if ns >= cutoff_nu { (-ns * ns / (2.0 * sigma * sigma)).exp() } else { 0.0 };
            for j in 0..512 {
                let ni: f64 = grid.idler_nu()[j];
                values[(i, j)] = keep * (-ni * ni / (2.0 * sigma * sigma)).exp();
            }
        }
        let jsi = JointIntensity::new(grid, values).unwrap();
        let known = jsi.marginal(crate::jsa::Arm::Signal);

        let pairs = sample_pairs(&jsi, 150_000, 13);
        let mut events = Vec::new();
        for (k, (lam_s, _)) in pairs.iter().enumerate() {
            let t0 = 40_000.0 + 12_500.0 * k as f64;
            events.push(PhotonEvent { channel: 0, time_ps: t0 });
            events.push(PhotonEvent { channel: 1, time_ps: t0 + wavelength_to_delay(*lam_s, &f) });
        }
        let stream = apply_detection(
            &events,
            &[(0, DetectorSpec::ideal()), (1, DetectorSpec::with_jitter(275.0))],
            &TaggerSpec::default(),
            14,
        )
        .unwrap();
        let (edges, counts) = crate::events::correlation_histogram(&stream, 0, 1, 50, 12000).unwrap();
        let cal = calibrate_jitter(&known, &TimeHistogram { edges_ps: edges, counts }, &f).unwrap();
        assert!((cal.fitted_fwhm_ps - 275.0).abs() < 25.0, "fitted {}", cal.fitted_fwhm_ps);
        assert!(cal.residual_rel_rms < 0.05, "residual {}", cal.residual_rel_rms);
    }

    use ndarray::Array2;
}
