//! Monte Carlo detection events and time-tag coincidence analysis.
//!
//! The pipeline shared by all counting techniques: draw pair wavelengths
//! from a joint intensity, turn them into ideal photon arrival times, push
//! them through a detector model (efficiency, Gaussian jitter, dead time,
//! dark counts) and a time tagger, then count n-fold coincidences or build
//! relative-timing histograms offline.
//!
//! All randomness is drawn from per-event substreams keyed by the event
//! index, so streams are reproducible independent of evaluation order.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::jsa::JointIntensity;
use crate::rng::{poisson_count, substream, Domain};
use crate::units;

/// Single-photon detector model.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorSpec {
    /// Detection probability per photon, 0..=1.
    pub efficiency: f64,
    /// FWHM of the Gaussian timing jitter, ps.
    pub jitter_fwhm_ps: f64,
    /// Non-paralyzable dead time after each accepted tag, ns.
    pub dead_time_ns: f64,
    /// Dark count rate, counts/s.
    pub dark_rate_hz: f64,
}

impl DetectorSpec {
    pub fn ideal() -> Self {
        Self { efficiency: 1.0, jitter_fwhm_ps: 0.0, dead_time_ns: 0.0, dark_rate_hz: 0.0 }
    }

    pub fn with_jitter(jitter_fwhm_ps: f64) -> Self {
        Self { jitter_fwhm_ps, ..Self::ideal() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::InvalidInput("detector efficiency must be in [0, 1]".into()));
        }
        if self.jitter_fwhm_ps < 0.0 || self.dead_time_ns < 0.0 || self.dark_rate_hz < 0.0 {
            return Err(Error::InvalidInput("detector parameters must be non-negative".into()));
        }
        Ok(())
    }
}

/// Time-tagger model. The tagger contributes jitter to every channel; the
/// conventional figure is the FWHM measured by correlating two tagger
/// channels driven by the same pulse, so each channel receives FWHM/√2.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TaggerSpec {
    pub correlation_jitter_fwhm_ps: f64,
}

/// One time tag. Timestamps are integer picoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeTagRecord {
    pub channel: u8,
    pub timestamp_ps: i64,
}

/// Sorted list of time tags plus the set of configured channels.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeTagStream {
    records: Vec<TimeTagRecord>,
    channels: Vec<u8>,
}

impl TimeTagStream {
    /// Wrap raw records; sorts them by (timestamp, channel).
    pub fn new(mut records: Vec<TimeTagRecord>, mut channels: Vec<u8>) -> Self {
        records.sort_by_key(|r| (r.timestamp_ps, r.channel));
        channels.sort_unstable();
        channels.dedup();
        Self { records, channels }
    }

    pub fn records(&self) -> &[TimeTagRecord] {
        &self.records
    }

    pub fn channels(&self) -> &[u8] {
        &self.channels
    }

    pub fn has_channel(&self, ch: u8) -> bool {
        self.channels.contains(&ch)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Tags of one channel in time order.
    pub fn channel_times(&self, ch: u8) -> Vec<i64> {
        self.records.iter().filter(|r| r.channel == ch).map(|r| r.timestamp_ps).collect()
    }
}

/// Ideal photon arrival before detection.
#[derive(Debug, Clone, Copy)]
pub struct PhotonEvent {
    pub channel: u8,
    pub time_ps: f64,
}

/// n-fold coincidence query: one tag per listed channel, offset-corrected,
/// all pairwise time differences within `window_ps`.
#[derive(Debug, Clone)]
pub struct CoincidenceQuery {
    pub channels: Vec<u8>,
    pub offsets_ps: Vec<i64>,
    pub window_ps: i64,
}

/// Binned joint distribution with uniform bin edges (ps or nm depending on
/// the producer). `counts` holds integer event counts for histograms built
/// from tags; deconvolution and classical-intensity maps store fractional
/// values in the same container.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram2D {
    pub x_edges: Vec<f64>,
    pub y_edges: Vec<f64>,
    pub counts: Array2<f64>,
}

impl Histogram2D {
    pub fn new(x_edges: Vec<f64>, y_edges: Vec<f64>, counts: Array2<f64>) -> Result<Self> {
        if x_edges.len() < 2 || y_edges.len() < 2 {
            return Err(Error::InvalidInput("histogram needs at least one bin per axis".into()));
        }
        if counts.nrows() + 1 != x_edges.len() || counts.ncols() + 1 != y_edges.len() {
            return Err(Error::InvalidInput(format!(
                "counts {}x{} do not match {}x{} bins",
                counts.nrows(),
                counts.ncols(),
                x_edges.len() - 1,
                y_edges.len() - 1
            )));
        }
        for edges in [&x_edges, &y_edges] {
            let step = edges[1] - edges[0];
            if step <= 0.0 {
                return Err(Error::InvalidInput("bin edges must be increasing".into()));
            }
            for w in edges.windows(2) {
                if ((w[1] - w[0] - step) / step).abs() > 1e-9 {
                    return Err(Error::InvalidInput("bin edges must be uniform".into()));
                }
            }
        }
        if counts.iter().any(|&c| !c.is_finite() || c < 0.0) {
            return Err(Error::InvalidInput("histogram counts must be non-negative".into()));
        }
        Ok(Self { x_edges, y_edges, counts })
    }

    pub fn bin_width_x(&self) -> f64 {
        self.x_edges[1] - self.x_edges[0]
    }

    pub fn bin_width_y(&self) -> f64 {
        self.y_edges[1] - self.y_edges[0]
    }

    pub fn total(&self) -> f64 {
        self.counts.sum()
    }

    pub fn x_centers(&self) -> Vec<f64> {
        self.x_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn y_centers(&self) -> Vec<f64> {
        self.y_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }
}

/// Draw `n_pairs` (λ_signal, λ_idler) wavelength pairs (nm) from the joint
/// intensity. Cells are selected with probability intensity × cell area and
/// positions dithered uniformly within the cell; draw `k` depends only on
/// (seed, k).
pub fn sample_pairs(jsi: &JointIntensity, n_pairs: usize, seed: u64) -> Vec<(f64, f64)> {
    let grid = jsi.grid();
    let n_i = grid.n_idler();
    let cell = grid.cell_area();
    // cumulative cell probabilities, row-major
    let mut cdf = Vec::with_capacity(grid.n_signal() * n_i);
    let mut acc = 0.0;
    for v in jsi.values().iter() {
        acc += v * cell;
        cdf.push(acc);
    }
    let total = acc;
    let ds = grid.signal_step();
    let di = grid.idler_step();

    let mut out = Vec::with_capacity(n_pairs);
    for k in 0..n_pairs {
        let mut rng = substream(seed, Domain::PairSampling, k as u64);
        let u: f64 = rng.gen::<f64>() * total;
        let idx = match cdf.binary_search_by(|p| p.partial_cmp(&u).unwrap()) {
            Ok(i) => (i + 1).min(cdf.len() - 1),
            Err(i) => i.min(cdf.len() - 1),
        };
        let (i, j) = (idx / n_i, idx % n_i);
        let nu_s = grid.signal_nu()[i] + (rng.gen::<f64>() - 0.5) * ds;
        let nu_i = grid.idler_nu()[j] + (rng.gen::<f64>() - 0.5) * di;
        let lam_s = units::angular_to_wavelength_nm(grid.center_signal_rad_s + nu_s);
        let lam_i = units::angular_to_wavelength_nm(grid.center_idler_rad_s + nu_i);
        out.push((lam_s, lam_i));
    }
    out
}

/// Push ideal photon arrivals through the detector and tagger models.
///
/// Each photon is kept with its channel's efficiency, its detection time is
/// the ideal arrival plus Gaussian detector jitter plus per-channel tagger
/// jitter, and tags are quantized to 1 ps. Tags closer than the dead time to
/// the previously accepted tag on the same channel are dropped
/// (non-paralyzable). Dark counts are added per channel as a Poisson process
/// over the observation span before dead-time filtering.
pub fn apply_detection(
    events: &[PhotonEvent],
    detectors: &[(u8, DetectorSpec)],
    tagger: &TaggerSpec,
    seed: u64,
) -> Result<TimeTagStream> {
    for (_, d) in detectors {
        d.validate()?;
    }
    if tagger.correlation_jitter_fwhm_ps < 0.0 {
        return Err(Error::InvalidInput("tagger jitter must be non-negative".into()));
    }
    let spec_for = |ch: u8| -> Result<&DetectorSpec> {
        detectors
            .iter()
            .find(|(c, _)| *c == ch)
            .map(|(_, d)| d)
            .ok_or_else(|| Error::Query(format!("no detector configured for channel {ch}")))
    };

    let tagger_sigma =
        units::fwhm_to_sigma(tagger.correlation_jitter_fwhm_ps) / std::f64::consts::SQRT_2;

    let mut per_channel: std::collections::BTreeMap<u8, Vec<i64>> =
        detectors.iter().map(|(c, _)| (*c, Vec::new())).collect();

    for (k, ev) in events.iter().enumerate() {
        let det = spec_for(ev.channel)?;
        let mut rng = substream(seed, Domain::Detection, k as u64);
        if det.efficiency < 1.0 && rng.gen::<f64>() >= det.efficiency {
            continue;
        }
        let mut t = ev.time_ps;
        let det_sigma = units::fwhm_to_sigma(det.jitter_fwhm_ps);
        if det_sigma > 0.0 {
            t += Normal::new(0.0, det_sigma).unwrap().sample(&mut rng);
        }
        if tagger_sigma > 0.0 {
            t += Normal::new(0.0, tagger_sigma).unwrap().sample(&mut rng);
        }
        per_channel.get_mut(&ev.channel).unwrap().push(t.round() as i64);
    }

    // observation span for dark counts, padded by the largest jitter
    if detectors.iter().any(|(_, d)| d.dark_rate_hz > 0.0) {
        let pad = 5.0
            * (detectors
                .iter()
                .map(|(_, d)| units::fwhm_to_sigma(d.jitter_fwhm_ps))
                .fold(0.0, f64::max)
                + tagger_sigma)
            + 1000.0;
        let lo = events.iter().map(|e| e.time_ps).fold(f64::INFINITY, f64::min);
        let hi = events.iter().map(|e| e.time_ps).fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if lo.is_finite() { (lo - pad, hi + pad) } else { (0.0, pad) };
        let duration_s = (hi - lo) * 1e-12;
        for (ch, det) in detectors {
            if det.dark_rate_hz <= 0.0 {
                continue;
            }
            let mu = det.dark_rate_hz * duration_s;
            let mut rng = substream(seed, Domain::DarkCounts, *ch as u64);
            let n = poisson_count(&mut rng, mu) as u64;
            let tags = per_channel.get_mut(ch).unwrap();
            for _ in 0..n {
                let t = lo + rng.gen::<f64>() * (hi - lo);
                tags.push(t.round() as i64);
            }
        }
    }

    let mut records = Vec::new();
    for (ch, det) in detectors {
        let tags = per_channel.get_mut(ch).unwrap();
        tags.sort_unstable();
        let dead_ps = (det.dead_time_ns * 1000.0).round() as i64;
        let mut last_kept: Option<i64> = None;
        for &t in tags.iter() {
            if let Some(prev) = last_kept {
                if dead_ps > 0 && t - prev < dead_ps {
                    continue;
                }
            }
            last_kept = Some(t);
            records.push(TimeTagRecord { channel: *ch, timestamp_ps: t });
        }
    }
    Ok(TimeTagStream::new(records, detectors.iter().map(|(c, _)| *c).collect()))
}

fn validate_query(stream: &TimeTagStream, q: &CoincidenceQuery) -> Result<()> {
    if q.channels.len() < 2 {
        return Err(Error::Query("coincidence query needs at least two channels".into()));
    }
    if q.channels.len() != q.offsets_ps.len() {
        return Err(Error::Query("one offset per channel required".into()));
    }
    if q.window_ps <= 0 {
        return Err(Error::Query("coincidence window must be positive".into()));
    }
    let mut seen = q.channels.clone();
    seen.sort_unstable();
    seen.dedup();
    if seen.len() != q.channels.len() {
        return Err(Error::Query("query channels must be distinct".into()));
    }
    for ch in &q.channels {
        if !stream.has_channel(*ch) {
            return Err(Error::Query(format!("unknown channel {ch}")));
        }
    }
    Ok(())
}

/// Count n-fold coincidences with greedy earliest-match semantics.
///
/// Offset-corrected tags form a tuple when every pairwise difference is at
/// most `window_ps`; each tag is consumed by at most one tuple, and the
/// globally earliest unconsumed tag is always resolved first (either it
/// completes a tuple with the earliest candidates of the other channels or
/// it is discarded). Runs in O(N) after the per-channel sort.
pub fn find_coincidences(stream: &TimeTagStream, q: &CoincidenceQuery) -> Result<u64> {
    validate_query(stream, q)?;
    let lanes: Vec<Vec<i64>> = q
        .channels
        .iter()
        .zip(&q.offsets_ps)
        .map(|(ch, off)| {
            stream.channel_times(*ch).into_iter().map(|t| t - off).collect::<Vec<i64>>()
        })
        .collect();
    let mut ptr = vec![0usize; lanes.len()];
    let mut count = 0u64;
    loop {
        // channel with the earliest unconsumed corrected tag
        let mut min_lane = None;
        let mut min_t = i64::MAX;
        for (l, lane) in lanes.iter().enumerate() {
            if ptr[l] < lane.len() && lane[ptr[l]] < min_t {
                min_t = lane[ptr[l]];
                min_lane = Some(l);
            }
        }
        let Some(anchor_lane) = min_lane else { break };
        // all other lane fronts are >= min_t; a tuple containing the anchor
        // needs every front within the window
        let mut ok = true;
        for (l, lane) in lanes.iter().enumerate() {
            if l == anchor_lane {
                continue;
            }
            if ptr[l] >= lane.len() || lane[ptr[l]] - min_t > q.window_ps {
                ok = false;
                break;
            }
        }
        if ok {
            count += 1;
            for p in ptr.iter_mut() {
                *p += 1;
            }
        } else {
            ptr[anchor_lane] += 1;
        }
    }
    Ok(count)
}

/// Anchored triple matcher used by the histogram offset iteration: for each
/// reference tag in order, greedily take the earliest unconsumed
/// signal/idler tags whose delay relative to the reference lies in the
/// half-open windows `[lo, hi)`. Half-open windows tile the delay plane
/// exactly, which the symmetric pairwise window cannot do.
fn anchored_triples(
    refs: &[i64],
    sig: &[i64],
    idl: &[i64],
    sig_window: (i64, i64),
    idl_window: (i64, i64),
    mut on_match: impl FnMut(i64, i64),
) -> u64 {
    let mut s = 0usize;
    let mut i = 0usize;
    let mut count = 0u64;
    for &t0 in refs {
        while s < sig.len() && sig[s] - t0 < sig_window.0 {
            s += 1;
        }
        while i < idl.len() && idl[i] - t0 < idl_window.0 {
            i += 1;
        }
        let s_ok = s < sig.len() && sig[s] - t0 < sig_window.1;
        let i_ok = i < idl.len() && idl[i] - t0 < idl_window.1;
        if s_ok && i_ok {
            count += 1;
            on_match(sig[s] - t0, idl[i] - t0);
            s += 1;
            i += 1;
        }
    }
    count
}

/// Build the two-dimensional relative-timing histogram of
/// (t_signal − t_reference, t_idler − t_reference) over ±range/2 with the
/// given bin width, by iterating an anchored three-fold coincidence query
/// over all offset pairs with window = bin width.
pub fn build_timing_histogram(
    stream: &TimeTagStream,
    reference_channel: u8,
    signal_channel: u8,
    idler_channel: u8,
    bin_width_ps: i64,
    range_ps: i64,
) -> Result<Histogram2D> {
    let (refs, sig, idl, n_bins, half) = histogram_inputs(
        stream,
        reference_channel,
        signal_channel,
        idler_channel,
        bin_width_ps,
        range_ps,
    )?;
    let mut counts = Array2::<f64>::zeros((n_bins, n_bins));
    for kx in 0..n_bins {
        let x_lo = -half + kx as i64 * bin_width_ps;
        for ky in 0..n_bins {
            let y_lo = -half + ky as i64 * bin_width_ps;
            let c = anchored_triples(
                &refs,
                &sig,
                &idl,
                (x_lo, x_lo + bin_width_ps),
                (y_lo, y_lo + bin_width_ps),
                |_, _| {},
            );
            counts[(kx, ky)] = c as f64;
        }
    }
    histogram_from_counts(n_bins, half, bin_width_ps, counts)
}

/// Direct per-event binning of greedily matched triples; equivalent to
/// [`build_timing_histogram`] for pulse-separated streams and much faster.
pub fn build_timing_histogram_direct(
    stream: &TimeTagStream,
    reference_channel: u8,
    signal_channel: u8,
    idler_channel: u8,
    bin_width_ps: i64,
    range_ps: i64,
) -> Result<Histogram2D> {
    let (refs, sig, idl, n_bins, half) = histogram_inputs(
        stream,
        reference_channel,
        signal_channel,
        idler_channel,
        bin_width_ps,
        range_ps,
    )?;
    let mut counts = Array2::<f64>::zeros((n_bins, n_bins));
    anchored_triples(&refs, &sig, &idl, (-half, half), (-half, half), |ds, di| {
        let kx = ((ds + half) / bin_width_ps) as usize;
        let ky = ((di + half) / bin_width_ps) as usize;
        counts[(kx, ky)] += 1.0;
    });
    histogram_from_counts(n_bins, half, bin_width_ps, counts)
}

type HistogramInputs = (Vec<i64>, Vec<i64>, Vec<i64>, usize, i64);

fn histogram_inputs(
    stream: &TimeTagStream,
    reference_channel: u8,
    signal_channel: u8,
    idler_channel: u8,
    bin_width_ps: i64,
    range_ps: i64,
) -> Result<HistogramInputs> {
    if bin_width_ps <= 0 {
        return Err(Error::InvalidInput("bin width must be positive".into()));
    }
    if range_ps <= 0 || range_ps % bin_width_ps != 0 {
        return Err(Error::Alignment(format!(
            "range {range_ps} ps must be a positive multiple of the bin width {bin_width_ps} ps"
        )));
    }
    if (range_ps / bin_width_ps) % 2 != 0 {
        return Err(Error::Alignment("range must contain an even number of bins".into()));
    }
    for ch in [reference_channel, signal_channel, idler_channel] {
        if !stream.has_channel(ch) {
            return Err(Error::Query(format!("unknown channel {ch}")));
        }
    }
    let refs = stream.channel_times(reference_channel);
    let sig = stream.channel_times(signal_channel);
    let idl = stream.channel_times(idler_channel);
    let n_bins = (range_ps / bin_width_ps) as usize;
    Ok((refs, sig, idl, n_bins, range_ps / 2))
}

fn histogram_from_counts(
    n_bins: usize,
    half: i64,
    bin_width_ps: i64,
    counts: Array2<f64>,
) -> Result<Histogram2D> {
    let edges: Vec<f64> = (0..=n_bins).map(|k| (-half + k as i64 * bin_width_ps) as f64).collect();
    Histogram2D::new(edges.clone(), edges, counts)
}

/// Two-channel relative-timing histogram (t_b − t_a) with greedy pairing,
/// used for correlation-method jitter measurements.
pub fn correlation_histogram(
    stream: &TimeTagStream,
    channel_a: u8,
    channel_b: u8,
    bin_width_ps: i64,
    range_ps: i64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if bin_width_ps <= 0 || range_ps <= 0 || range_ps % bin_width_ps != 0 {
        return Err(Error::Alignment("range must be a positive multiple of the bin width".into()));
    }
    for ch in [channel_a, channel_b] {
        if !stream.has_channel(ch) {
            return Err(Error::Query(format!("unknown channel {ch}")));
        }
    }
    let a = stream.channel_times(channel_a);
    let b = stream.channel_times(channel_b);
    let half = range_ps / 2;
    let n_bins = (range_ps / bin_width_ps) as usize;
    let mut counts = vec![0.0; n_bins];
    let mut j = 0usize;
    for &ta in &a {
        while j < b.len() && b[j] - ta < -half {
            j += 1;
        }
        if j < b.len() && b[j] - ta < half {
            let k = ((b[j] - ta + half) / bin_width_ps) as usize;
            counts[k] += 1.0;
            j += 1;
        }
    }
    let edges: Vec<f64> = (0..=n_bins).map(|k| (-half + k as i64 * bin_width_ps) as f64).collect();
    Ok((edges, counts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit;
    use crate::grid::FrequencyGrid;
    use crate::source;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn test_jsi(sigma: f64, sigma_f: f64, n: usize) -> JointIntensity {
        let pump = source::PumpSpec {
            center_wavelength_nm: 405.0,
            bandwidth_sigma_rad_s: sigma,
            gdd_fs2: 0.0,
            tod_fs3: 0.0,
            process: source::Process::Spdc,
        };
        let pm = source::PhasematchSpec::none();
        let filt = source::FilterSpec::gaussian(sigma_f, sigma_f);
        let grid = source::default_grid(&pump, &pm, Some(&filt), n).unwrap();
        source::build_amplitude(&pump, &pm, Some(&filt), &grid).unwrap().intensity()
    }

    #[test]
    fn empty_draw_and_determinism() {
        let jsi = test_jsi(1e13, 1e13, 64);
        assert!(sample_pairs(&jsi, 0, 1).is_empty());
        let a = sample_pairs(&jsi, 100, 42);
        let b = sample_pairs(&jsi, 100, 42);
        assert_eq!(a, b);
        // draw k depends only on (seed, k), not on how many pairs precede it
        let c = sample_pairs(&jsi, 50, 42);
        assert_eq!(&a[..50], &c[..]);
    }

    #[test]
    fn delta_like_intensity_confines_samples() {
        let grid = FrequencyGrid::symmetric(810.0, 1e13, 32).unwrap();
        let mut v = Array2::zeros((32, 32));
        v[(10, 20)] = 1.0;
        let jsi = JointIntensity::new(grid.clone(), v).unwrap();
        let lo_s = grid.signal_nu()[10] - grid.signal_step() / 2.0;
        let hi_s = grid.signal_nu()[10] + grid.signal_step() / 2.0;
        let lo_i = grid.idler_nu()[20] - grid.idler_step() / 2.0;
        let hi_i = grid.idler_nu()[20] + grid.idler_step() / 2.0;
        for (ls, li) in sample_pairs(&jsi, 500, 7) {
            let ns = units::wavelength_nm_to_angular(ls) - grid.center_signal_rad_s;
            let ni = units::wavelength_nm_to_angular(li) - grid.center_idler_rad_s;
            assert!(ns >= lo_s && ns <= hi_s, "signal detuning {ns} outside cell");
            assert!(ni >= lo_i && ni <= hi_i);
        }
    }

    #[test]
    fn sampled_histogram_recovers_schmidt_number() {
        // draw many pairs, bin them, and take the flat-phase Schmidt number
        let sigma = 1e13;
        let jsi = test_jsi(sigma, sigma, 128);
        let truth = crate::schmidt::schmidt_from_intensity(&jsi).unwrap().schmidt_number;
        let pairs = sample_pairs(&jsi, 1_000_000, 11);
        let grid = jsi.grid();
        let wl_s: Vec<f64> = grid.signal_wavelengths_nm();
        let (lo, hi) = (wl_s[wl_s.len() - 1], wl_s[0]);
        let n_bins = 64;
        let mut counts = Array2::<f64>::zeros((n_bins, n_bins));
        let w = (hi - lo) / n_bins as f64;
        for (ls, li) in pairs {
            let bx = ((ls - lo) / w).floor();
            let by = ((li - lo) / w).floor();
            if (0.0..n_bins as f64).contains(&bx) && (0.0..n_bins as f64).contains(&by) {
                counts[(bx as usize, by as usize)] += 1.0;
            }
        }
        let k = crate::schmidt::schmidt_from_counts(&counts).unwrap().schmidt_number;
        assert!((k - truth).abs() / truth < 0.02, "empirical K {k} vs truth {truth}");
    }

    #[test]
    fn ideal_detector_reproduces_arrivals() {
        let events: Vec<PhotonEvent> =
            (0..100).map(|k| PhotonEvent { channel: 0, time_ps: 1000.0 * k as f64 }).collect();
        let stream =
            apply_detection(&events, &[(0, DetectorSpec::ideal())], &TaggerSpec::default(), 3)
                .unwrap();
        assert_eq!(stream.len(), 100);
        for (k, r) in stream.records().iter().enumerate() {
            assert_eq!(r.timestamp_ps, 1000 * k as i64);
        }
    }

    #[test]
    fn dead_time_drops_same_channel_partner() {
        // two photons 1 ns apart on one channel, dead time 20 ns
        let mut events = Vec::new();
        for k in 0..200 {
            let t = 100_000.0 * k as f64;
            events.push(PhotonEvent { channel: 0, time_ps: t });
            events.push(PhotonEvent { channel: 0, time_ps: t + 1000.0 });
        }
        let det = DetectorSpec { dead_time_ns: 20.0, ..DetectorSpec::ideal() };
        let stream = apply_detection(&events, &[(0, det)], &TaggerSpec::default(), 5).unwrap();
        assert_eq!(stream.len(), 200, "second photon of each pair must be lost");
    }

    #[test]
    fn three_stage_jitter_adds_in_quadrature() {
        // photodiode 203 ps and APD 174 ps on separate channels plus a
        // tagger contributing 64 ps in correlation: expect
        // sqrt(203² + 174² + 64²) ≈ 275 ps correlation FWHM
        let n = 100_000;
        let mut events = Vec::with_capacity(2 * n);
        for k in 0..n {
            let t = 50_000.0 * k as f64;
            events.push(PhotonEvent { channel: 0, time_ps: t });
            events.push(PhotonEvent { channel: 1, time_ps: t });
        }
        let stream = apply_detection(
            &events,
            &[(0, DetectorSpec::with_jitter(203.0)), (1, DetectorSpec::with_jitter(174.0))],
            &TaggerSpec { correlation_jitter_fwhm_ps: 64.0 },
            17,
        )
        .unwrap();
        let (edges, counts) = correlation_histogram(&stream, 0, 1, 10, 4000).unwrap();
        let centers: Vec<f64> = edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let fwhm = fit::fwhm_interpolated(&centers, &counts).unwrap();
        assert!((fwhm - 275.0).abs() < 8.0, "measured FWHM {fwhm}");
    }

    #[test]
    fn perfect_coincidences_count_every_tag() {
        let records: Vec<TimeTagRecord> = (0..50)
            .flat_map(|k| {
                [
                    TimeTagRecord { channel: 0, timestamp_ps: 10_000 * k },
                    TimeTagRecord { channel: 1, timestamp_ps: 10_000 * k },
                ]
            })
            .collect();
        let stream = TimeTagStream::new(records, vec![0, 1]);
        let q = CoincidenceQuery { channels: vec![0, 1], offsets_ps: vec![0, 0], window_ps: 100 };
        assert_eq!(find_coincidences(&stream, &q).unwrap(), 50);
        let bad = CoincidenceQuery { channels: vec![0, 7], offsets_ps: vec![0, 0], window_ps: 100 };
        assert!(matches!(find_coincidences(&stream, &bad), Err(Error::Query(_))));
    }

    #[test]
    fn period_offset_leaves_only_accidentals() {
        // sparse pulsed pairs (10% occupancy): shifting one channel by
        // exactly the inter-pulse period should leave only the accidental
        // rate, i.e. coincidences between pairs on consecutive pulses
        let occupancy = 0.10;
        let n_pulses = 20_000u64;
        let mut records = Vec::new();
        let mut occupied = 0u64;
        let mut consecutive = 0u64;
        let mut prev = false;
        for k in 0..n_pulses {
            let mut rng = substream(77, Domain::PairSampling, k);
            let fired = rng.gen::<f64>() < occupancy;
            if fired {
                let t = 10_000 * k as i64;
                records.push(TimeTagRecord { channel: 0, timestamp_ps: t });
                records.push(TimeTagRecord { channel: 1, timestamp_ps: t });
                occupied += 1;
                if prev {
                    consecutive += 1;
                }
            }
            prev = fired;
        }
        let stream = TimeTagStream::new(records, vec![0, 1]);
        let aligned = find_coincidences(
            &stream,
            &CoincidenceQuery { channels: vec![0, 1], offsets_ps: vec![0, 0], window_ps: 100 },
        )
        .unwrap();
        let shifted = find_coincidences(
            &stream,
            &CoincidenceQuery { channels: vec![0, 1], offsets_ps: vec![0, 10_000], window_ps: 100 },
        )
        .unwrap();
        assert_eq!(aligned, occupied);
        assert_eq!(shifted, consecutive, "only consecutive-pulse accidentals survive");
        // accidental rate is roughly occupancy × pairs
        let expected = occupancy * occupied as f64;
        assert!((shifted as f64 - expected).abs() < 5.0 * expected.sqrt());
    }

    /// Reference matcher with the same greedy semantics, written naively.
    fn brute_force_coincidences(stream: &TimeTagStream, q: &CoincidenceQuery) -> u64 {
        let lanes: Vec<Vec<i64>> = q
            .channels
            .iter()
            .zip(&q.offsets_ps)
            .map(|(ch, off)| {
                stream.channel_times(*ch).into_iter().map(|t| t - off).collect::<Vec<i64>>()
            })
            .collect();
        let mut consumed: Vec<Vec<bool>> = lanes.iter().map(|l| vec![false; l.len()]).collect();
        let mut count = 0;
        loop {
            let mut anchor: Option<(usize, usize, i64)> = None;
            for (l, lane) in lanes.iter().enumerate() {
                for (i, &t) in lane.iter().enumerate() {
                    if !consumed[l][i] {
                        if anchor.map(|(_, _, at)| t < at).unwrap_or(true) {
                            anchor = Some((l, i, t));
                        }
                        break;
                    }
                }
            }
            let Some((al, ai, at)) = anchor else { break };
            let mut picks = vec![None; lanes.len()];
            picks[al] = Some(ai);
            let mut ok = true;
            for (l, lane) in lanes.iter().enumerate() {
                if l == al {
                    continue;
                }
                let first = lane
                    .iter()
                    .enumerate()
                    .find(|(i, &t)| !consumed[l][*i] && t >= at && t - at <= q.window_ps);
                match first {
                    Some((i, _)) => picks[l] = Some(i),
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                count += 1;
                for (l, p) in picks.iter().enumerate() {
                    consumed[l][p.unwrap()] = true;
                }
            } else {
                consumed[al][ai] = true;
            }
        }
        count
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn greedy_matcher_equals_brute_force(
            a in prop::collection::vec(0i64..20_000, 0..120),
            b in prop::collection::vec(0i64..20_000, 0..120),
            c in prop::collection::vec(0i64..20_000, 0..120),
            window in 1i64..2_000,
            off in -500i64..500,
            three in prop::bool::ANY,
        ) {
            let mut records = Vec::new();
            for &t in &a {
                records.push(TimeTagRecord { channel: 0, timestamp_ps: t });
            }
            for &t in &b {
                records.push(TimeTagRecord { channel: 1, timestamp_ps: t });
            }
            let mut channels = vec![0u8, 1];
            if three {
                for &t in &c {
                    records.push(TimeTagRecord { channel: 2, timestamp_ps: t });
                }
                channels.push(2);
            }
            let stream = TimeTagStream::new(records, channels.clone());
            let q = CoincidenceQuery {
                channels,
                offsets_ps: if three { vec![0, off, 0] } else { vec![0, off] },
                window_ps: window,
            };
            let fast = find_coincidences(&stream, &q).unwrap();
            let slow = brute_force_coincidences(&stream, &q);
            prop_assert_eq!(fast, slow);
        }
    }

    #[test]
    fn histogram_offset_iteration_matches_direct_binning() {
        // pulse-separated triples with jitter: the two constructions must
        // agree bin for bin
        let n = 2000;
        let mut events = Vec::new();
        for k in 0..n {
            let t = 12_500.0 * k as f64 + 20_000.0;
            events.push(PhotonEvent { channel: 0, time_ps: t });
            events.push(PhotonEvent { channel: 1, time_ps: t + 230.0 });
            events.push(PhotonEvent { channel: 2, time_ps: t - 410.0 });
        }
        let dets = [
            (0u8, DetectorSpec::with_jitter(100.0)),
            (1u8, DetectorSpec::with_jitter(150.0)),
            (2u8, DetectorSpec::with_jitter(150.0)),
        ];
        let stream = apply_detection(&events, &dets, &TaggerSpec::default(), 31).unwrap();
        let h1 = build_timing_histogram(&stream, 0, 1, 2, 50, 2000).unwrap();
        let h2 = build_timing_histogram_direct(&stream, 0, 1, 2, 50, 2000).unwrap();
        assert_eq!(h1, h2);
        assert!(h1.total() > 0.9 * n as f64);
        assert!(matches!(
            build_timing_histogram(&stream, 0, 1, 2, 50, 1999),
            Err(Error::Alignment(_))
        ));
    }

    #[test]
    fn noiseless_delays_fill_a_single_bin() {
        let n = 500i64;
        let mut records = Vec::new();
        for k in 0..n {
            let t = 12_500 * k;
            records.push(TimeTagRecord { channel: 0, timestamp_ps: t });
            records.push(TimeTagRecord { channel: 1, timestamp_ps: t + 230 });
            records.push(TimeTagRecord { channel: 2, timestamp_ps: t - 410 });
        }
        let stream = TimeTagStream::new(records, vec![0, 1, 2]);
        let h = build_timing_histogram(&stream, 0, 1, 2, 50, 2000).unwrap();
        assert_relative_eq!(h.total(), n as f64);
        let max = h.counts.iter().cloned().fold(0.0, f64::max);
        assert_relative_eq!(max, n as f64);
    }

    #[test]
    fn dark_counts_follow_poisson_statistics() {
        let events = vec![
            PhotonEvent { channel: 0, time_ps: 0.0 },
            PhotonEvent { channel: 0, time_ps: 1e9 },
        ];
        // ~1 ms span at 2 MHz dark rate: mu ≈ 2000
        let det = DetectorSpec { dark_rate_hz: 2e6, ..DetectorSpec::ideal() };
        let stream = apply_detection(&events, &[(0, det)], &TaggerSpec::default(), 99).unwrap();
        let mu = 2e6 * 1e9 * 1e-12;
        let n = stream.len() as f64 - 2.0;
        assert!((n - mu).abs() < 4.0 * mu.sqrt(), "dark counts {n} vs mu {mu}");
    }

    #[test]
    fn detection_is_deterministic() {
        let events: Vec<PhotonEvent> =
            (0..500).map(|k| PhotonEvent { channel: 0, time_ps: 1000.0 * k as f64 }).collect();
        let det = DetectorSpec {
            efficiency: 0.7,
            jitter_fwhm_ps: 120.0,
            dead_time_ns: 0.1,
            dark_rate_hz: 1e5,
        };
        let a = apply_detection(&events, &[(0, det.clone())], &TaggerSpec::default(), 8).unwrap();
        let b = apply_detection(&events, &[(0, det)], &TaggerSpec::default(), 8).unwrap();
        assert_eq!(a, b);
    }
}
