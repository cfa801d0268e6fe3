//! Raw multichannel recordings and the band-power feature pipeline:
//! downsampling, broadband zero-phase filtering, sliding-window epoching and
//! per-band mean-square power.

mod filter;
pub mod io;
mod synth;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::{Condition, FeatureRow, FeatureTable, SegmentTag};

pub use filter::Sos;
pub use synth::{generate_synthetic_eeg, EegScenario, EegSynthConfig, Oscillator, SubjectProfile};

/// Prototype order of every Butterworth band-pass in the pipeline.
pub const BANDPASS_ORDER: usize = 4;
/// Order of the anti-aliasing low-pass applied before decimation.
pub const ANTI_ALIAS_ORDER: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub tag: SegmentTag,
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// A multichannel recording, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecording {
    pub channels: Vec<String>,
    pub rate_hz: f64,
    pub samples: Vec<Vec<f64>>,
    pub segments: Vec<Segment>,
    pub subject_id: u32,
    pub condition: Option<Condition>,
}

impl RawRecording {
    pub fn n_samples(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate_hz > 0.0 && self.rate_hz.is_finite()) {
            return Err(Error::Config(format!("invalid sampling rate {}", self.rate_hz)));
        }
        if self.channels.len() != self.samples.len() {
            return Err(Error::Config(format!(
                "{} channel names for {} sample rows",
                self.channels.len(),
                self.samples.len()
            )));
        }
        let n = self.n_samples();
        if self.samples.iter().any(|c| c.len() != n) {
            return Err(Error::Config("channels have unequal sample counts".into()));
        }
        let mut sorted = self.segments.clone();
        sorted.sort_by_key(|s| s.start);
        for s in &sorted {
            if s.start > s.end || s.end > n {
                return Err(Error::Config(format!(
                    "segment {} [{}, {}) is out of bounds for {n} samples",
                    s.tag, s.start, s.end
                )));
            }
        }
        if sorted.windows(2).any(|w| w[0].end > w[1].start) {
            return Err(Error::Config("segments overlap".into()));
        }
        Ok(())
    }

    fn map_channels<F>(&self, f: F) -> Vec<Vec<f64>>
    where
        F: Fn(&[f64]) -> Vec<f64> + Sync,
    {
        self.samples.par_iter().map(|c| f(c)).collect()
    }
}

/// A named frequency band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub name: String,
    pub low_hz: f64,
    pub high_hz: f64,
}

impl BandSpec {
    pub fn new(name: impl Into<String>, low_hz: f64, high_hz: f64) -> Self {
        BandSpec {
            name: name.into(),
            low_hz,
            high_hz,
        }
    }

    pub fn validate(&self, rate_hz: f64) -> Result<()> {
        if !(self.low_hz >= 0.0 && self.low_hz < self.high_hz && self.high_hz < rate_hz / 2.0) {
            return Err(Error::Config(format!(
                "band {} ({}-{} Hz) must satisfy 0 <= low < high < {}",
                self.name,
                self.low_hz,
                self.high_hz,
                rate_hz / 2.0
            )));
        }
        Ok(())
    }

    fn design(&self, rate_hz: f64) -> Result<Sos> {
        self.validate(rate_hz)?;
        if self.low_hz == 0.0 {
            Sos::butter_lowpass(BANDPASS_ORDER, self.high_hz, rate_hz)
        } else {
            Sos::butter_bandpass(BANDPASS_ORDER, self.low_hz, self.high_hz, rate_hz)
        }
    }
}

/// Delta, theta, alpha and beta with beta at the conventional 12-30 Hz.
pub fn default_bands() -> Vec<BandSpec> {
    vec![
        BandSpec::new("delta", 0.1, 4.0),
        BandSpec::new("theta", 4.0, 8.0),
        BandSpec::new("alpha", 8.0, 12.0),
        BandSpec::new("beta", 12.0, 30.0),
    ]
}

/// Parses `name:lo:hi,name:lo:hi,...`.
pub fn parse_bands(spec: &str) -> Result<Vec<BandSpec>> {
    let bands = spec
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|item| {
            let parts: Vec<&str> = item.trim().split(':').collect();
            let [name, lo, hi] = parts.as_slice() else {
                return Err(Error::Parse(format!("band {item:?} is not name:lo:hi")));
            };
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("band {item:?}: bad number {s:?}")))
            };
            Ok(BandSpec::new(*name, num(lo)?, num(hi)?))
        })
        .collect::<Result<Vec<_>>>()?;
    if bands.is_empty() {
        return Err(Error::Parse("no bands given".into()));
    }
    Ok(bands)
}

/// Decimates by an integer factor after a zero-phase anti-aliasing low-pass at
/// `0.4 * target_hz`.
pub fn downsample(rec: &RawRecording, target_hz: f64) -> Result<RawRecording> {
    let ratio = rec.rate_hz / target_hz;
    let factor = ratio.round();
    if !(target_hz > 0.0) || factor < 1.0 || (ratio - factor).abs() > 1e-9 {
        return Err(Error::UnsupportedRate {
            from: rec.rate_hz,
            to: target_hz,
        });
    }
    let factor = factor as usize;
    if factor == 1 {
        return Ok(rec.clone());
    }
    let lowpass = Sos::butter_lowpass(ANTI_ALIAS_ORDER, 0.4 * target_hz, rec.rate_hz)?;
    let samples = rec.map_channels(|c| lowpass.filtfilt(c).into_iter().step_by(factor).collect());
    let n_out = samples.first().map_or(0, Vec::len);
    let segments = rec
        .segments
        .iter()
        .map(|s| Segment {
            tag: s.tag,
            start: s.start.div_ceil(factor).min(n_out),
            end: s.end.div_ceil(factor).min(n_out),
        })
        .collect();
    Ok(RawRecording {
        channels: rec.channels.clone(),
        rate_hz: target_hz,
        samples,
        segments,
        subject_id: rec.subject_id,
        condition: rec.condition,
    })
}

/// Zero-phase Butterworth band-pass applied to every channel.
pub fn bandpass_filter(rec: &RawRecording, low_hz: f64, high_hz: f64) -> Result<RawRecording> {
    let sos = Sos::butter_bandpass(BANDPASS_ORDER, low_hz, high_hz, rec.rate_hz)?;
    Ok(RawRecording {
        samples: rec.map_channels(|c| sos.filtfilt(c)),
        ..rec.clone()
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Epoch {
    pub segment: SegmentTag,
    /// First sample index in the parent recording.
    pub start: usize,
    pub data: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochSet {
    pub rate_hz: f64,
    pub epoch_len_s: f64,
    pub overlap_s: f64,
    pub subject_id: u32,
    pub condition: Option<Condition>,
    pub epochs: Vec<Epoch>,
}

impl EpochSet {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }
}

fn window_params(rate_hz: f64, epoch_len_s: f64, overlap_s: f64) -> Result<(usize, usize)> {
    if !(epoch_len_s > 0.0 && overlap_s >= 0.0 && overlap_s < epoch_len_s) {
        return Err(Error::Config(format!(
            "epoch length {epoch_len_s} s and overlap {overlap_s} s need 0 <= overlap < length"
        )));
    }
    let window = (epoch_len_s * rate_hz).round() as usize;
    let stride = ((epoch_len_s - overlap_s) * rate_hz).round() as usize;
    if window == 0 || stride == 0 {
        return Err(Error::Config("epoch window or stride rounds to zero samples".into()));
    }
    Ok((window, stride))
}

/// Number of windows that fit in `segment_len` samples.
pub fn windows_in(segment_len: usize, window: usize, stride: usize) -> usize {
    if segment_len < window {
        0
    } else {
        (segment_len - window) / stride + 1
    }
}

/// Sliding windows within each segment; windows crossing a segment boundary
/// are dropped. Samples outside every segment are never epoched.
pub fn epoch(rec: &RawRecording, epoch_len_s: f64, overlap_s: f64) -> Result<EpochSet> {
    let (window, stride) = window_params(rec.rate_hz, epoch_len_s, overlap_s)?;
    let mut segments = rec.segments.clone();
    segments.sort_by_key(|s| s.start);
    let mut epochs = Vec::new();
    for seg in &segments {
        for w in 0..windows_in(seg.len(), window, stride) {
            let start = seg.start + w * stride;
            epochs.push(Epoch {
                segment: seg.tag,
                start,
                data: rec
                    .samples
                    .iter()
                    .map(|c| c[start..start + window].to_vec())
                    .collect(),
            });
        }
    }
    if epochs.is_empty() {
        return Err(Error::EmptyEpochs);
    }
    Ok(EpochSet {
        rate_hz: rec.rate_hz,
        epoch_len_s,
        overlap_s,
        subject_id: rec.subject_id,
        condition: rec.condition,
        epochs,
    })
}

/// Mean squared amplitude of the zero-phase band-filtered signal.
pub fn band_power(signal: &[f64], band: &Sos) -> f64 {
    if signal.is_empty() {
        return 0.0;
    }
    let y = band.filtfilt(signal);
    y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64
}

/// One row per epoch; features are ordered channel-major
/// (`ch0/band0, ch0/band1, .., ch1/band0, ..`).
pub fn band_power_features(epochs: &EpochSet, bands: &[BandSpec]) -> Result<FeatureTable> {
    let filters = bands
        .iter()
        .map(|b| b.design(epochs.rate_hz))
        .collect::<Result<Vec<_>>>()?;
    let n_channels = epochs.epochs.first().map_or(0, |e| e.data.len());
    let dim = n_channels * bands.len();
    let rows: Vec<FeatureRow> = epochs
        .epochs
        .par_iter()
        .map(|ep| FeatureRow {
            subject: epochs.subject_id,
            condition: epochs.condition,
            segment: ep.segment,
            features: ep
                .data
                .iter()
                .flat_map(|ch| filters.iter().map(move |f| band_power(ch, f)))
                .collect(),
        })
        .collect();
    FeatureTable::from_rows(dim, rows)
}

/// End-to-end settings for turning a raw recording into band-power rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeaturePipeline {
    /// Decimate to this rate first; `None` keeps the native rate.
    pub target_hz: Option<f64>,
    pub broadband_low_hz: f64,
    pub broadband_high_hz: f64,
    pub epoch_len_s: f64,
    pub overlap_s: f64,
    pub bands: Vec<BandSpec>,
}

impl Default for FeaturePipeline {
    fn default() -> Self {
        FeaturePipeline {
            target_hz: Some(250.0),
            broadband_low_hz: 0.5,
            broadband_high_hz: 45.0,
            epoch_len_s: 4.0,
            overlap_s: 3.0,
            bands: default_bands(),
        }
    }
}

impl FeaturePipeline {
    pub fn run(&self, rec: &RawRecording) -> Result<FeatureTable> {
        rec.validate()?;
        let rec = match self.target_hz {
            Some(hz) => downsample(rec, hz)?,
            None => rec.clone(),
        };
        let rec = bandpass_filter(&rec, self.broadband_low_hz, self.broadband_high_hz)?;
        let epochs = epoch(&rec, self.epoch_len_s, self.overlap_s)?;
        band_power_features(&epochs, &self.bands)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn sine_recording(freq: f64, amp: f64, rate: f64, seconds: f64) -> RawRecording {
        let n = (seconds * rate).round() as usize;
        RawRecording {
            channels: vec!["c0".into()],
            rate_hz: rate,
            samples: vec![(0..n)
                .map(|i| amp * (2.0 * PI * freq * i as f64 / rate).sin())
                .collect()],
            segments: vec![Segment {
                tag: SegmentTag::Task,
                start: 0,
                end: n,
            }],
            subject_id: 0,
            condition: Some(Condition::Low),
        }
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    /// Magnitude of the DFT at one frequency, normalized to the sinusoid amplitude.
    fn dft_amplitude(x: &[f64], freq: f64, rate: f64) -> f64 {
        let (mut re, mut im) = (0.0, 0.0);
        for (i, v) in x.iter().enumerate() {
            let ph = 2.0 * PI * freq * i as f64 / rate;
            re += v * ph.cos();
            im -= v * ph.sin();
        }
        2.0 * (re * re + im * im).sqrt() / x.len() as f64
    }

    #[test]
    fn epoch_counts_match_window_arithmetic() {
        for (secs, expected) in [(600.0, 597), (4.0, 1), (10.0, 7)] {
            let rec = sine_recording(10.0, 1.0, 250.0, secs);
            let set = epoch(&rec, 4.0, 3.0).unwrap();
            assert_eq!(set.len(), expected, "{secs} s");
            assert!(set.epochs.iter().all(|e| e.data[0].len() == 1000));
        }
    }

    #[test]
    fn epoch_stride_and_boundary_dropping() {
        let mut rec = sine_recording(10.0, 1.0, 100.0, 20.0);
        rec.segments = vec![
            Segment { tag: SegmentTag::Baseline1, start: 0, end: 650 },
            Segment { tag: SegmentTag::Task, start: 650, end: 2000 },
        ];
        let set = epoch(&rec, 4.0, 3.0).unwrap();
        // 6.5 s -> 3 windows, 13.5 s -> 10 windows; none straddle 650.
        assert_eq!(set.len(), 13);
        assert!(set.epochs.iter().all(|e| e.start + 400 <= 650 || e.start >= 650));
        let starts: Vec<usize> = set.epochs.iter().take(3).map(|e| e.start).collect();
        assert_eq!(starts, vec![0, 100, 200]);
    }

    #[test]
    fn short_recording_has_no_epochs() {
        let rec = sine_recording(10.0, 1.0, 250.0, 3.9);
        assert!(matches!(epoch(&rec, 4.0, 3.0), Err(Error::EmptyEpochs)));
        assert!(epoch(&rec, 4.0, 4.0).is_err());
    }

    #[test]
    fn downsample_halves_and_keeps_ten_hz_peak() {
        let rec = sine_recording(10.0, 1.0, 500.0, 20.0);
        let out = downsample(&rec, 250.0).unwrap();
        assert_eq!(out.rate_hz, 250.0);
        assert_eq!(out.n_samples(), rec.n_samples() / 2);
        assert_eq!(out.segments[0].end, 5000);
        let before = dft_amplitude(&rec.samples[0], 10.0, 500.0);
        let after = dft_amplitude(&out.samples[0], 10.0, 250.0);
        assert!(after >= 0.99 * before, "{after} vs {before}");
    }

    #[test]
    fn downsample_identity_and_bad_factor() {
        let rec = sine_recording(10.0, 1.0, 250.0, 2.0);
        assert_eq!(downsample(&rec, 250.0).unwrap(), rec);
        assert!(matches!(
            downsample(&rec, 100.0),
            Err(Error::UnsupportedRate { .. })
        ));
    }

    #[test]
    fn broadband_filter_passes_alpha_and_rejects_60hz() {
        let sixty = sine_recording(60.0, 1.0, 250.0, 20.0);
        let ten = sine_recording(10.0, 1.0, 250.0, 20.0);
        let f60 = bandpass_filter(&sixty, 0.5, 45.0).unwrap();
        let f10 = bandpass_filter(&ten, 0.5, 45.0).unwrap();
        // Interior only: the first and last 2 s hold start-up transients.
        let mid = 500..4500;
        let ratio60 = rms(&f60.samples[0][mid.clone()]) / rms(&sixty.samples[0][mid.clone()]);
        let ratio10 = rms(&f10.samples[0][mid.clone()]) / rms(&ten.samples[0][mid]);
        assert!(ratio60 <= 0.1, "60 Hz ratio {ratio60}");
        assert!((ratio10 - 1.0).abs() <= 0.1, "10 Hz ratio {ratio10}");
    }

    #[test]
    fn broadband_filter_removes_dc() {
        let mut rec = sine_recording(10.0, 0.0, 250.0, 60.0);
        rec.samples[0].iter_mut().for_each(|v| *v = 5.0);
        let out = bandpass_filter(&rec, 0.5, 45.0).unwrap();
        let peak = out.samples[0].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(peak < 1e-6, "peak {peak}");
    }

    #[test]
    fn broadband_filter_response_meets_pass_and_stop_targets() {
        let sos = Sos::butter_bandpass(BANDPASS_ORDER, 0.5, 45.0, 250.0).unwrap();
        // Forward-backward squares the single-pass magnitude.
        let db = |f: f64| 20.0 * (sos.magnitude(f, 250.0).powi(2)).log10();
        for f in [2.0, 5.0, 10.0, 20.0, 30.0] {
            assert!(db(f).abs() <= 1.0, "{f} Hz: {} dB", db(f));
        }
        assert!(db(0.25) <= -20.0);
        assert!(db(90.0) <= -20.0);
        assert!(bandpass_filter(&sine_recording(1.0, 1.0, 250.0, 1.0), 50.0, 10.0).is_err());
    }

    #[test]
    fn zero_phase_keeps_symmetric_pulse_centered() {
        let n = 1001;
        let mut rec = sine_recording(0.0, 0.0, 250.0, n as f64 / 250.0);
        for (i, v) in rec.samples[0].iter_mut().enumerate() {
            let t = (i as f64 - 500.0) / 10.0;
            *v = (-t * t).exp();
        }
        let out = bandpass_filter(&rec, 0.5, 45.0).unwrap();
        let argmax = |x: &[f64]| {
            x.iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0
        };
        let peak = argmax(&out.samples[0]);
        assert!(peak.abs_diff(500) <= 1);
        for k in 1..50 {
            let (l, r) = (out.samples[0][500 - k], out.samples[0][500 + k]);
            assert!((l - r).abs() < 1e-3, "asymmetry at {k}: {l} vs {r}");
        }
    }

    #[test]
    fn sinusoid_band_powers() {
        let rec = sine_recording(10.0, 1.0, 250.0, 4.0);
        let set = epoch(&rec, 4.0, 3.0).unwrap();
        let t = band_power_features(&set, &default_bands()).unwrap();
        let f = &t.rows()[0].features;
        assert_eq!(f.len(), 4);
        let (delta, theta, alpha, beta) = (f[0], f[1], f[2], f[3]);
        assert!((alpha - 0.5).abs() <= 0.05, "alpha {alpha}");
        assert!(delta <= 0.05 && theta <= 0.05, "delta {delta} theta {theta}");
        assert!(alpha >= 10.0 * delta && alpha >= 10.0 * theta && alpha >= 10.0 * beta);
    }

    #[test]
    fn feature_dimension_is_channels_times_bands() {
        let mut rec = sine_recording(10.0, 1.0, 250.0, 8.0);
        rec.samples = vec![rec.samples[0].clone(); 4];
        rec.channels = vec!["AF7".into(), "FP1".into(), "FP2".into(), "AF8".into()];
        let set = epoch(&rec, 4.0, 3.0).unwrap();
        let t = band_power_features(&set, &default_bands()).unwrap();
        assert_eq!(t.dim(), 16);
        assert_eq!(t.len(), 5);
    }

    #[test]
    fn zero_epoch_gives_zero_features_and_empty_set_gives_empty_table() {
        let rec = sine_recording(10.0, 0.0, 250.0, 4.0);
        let set = epoch(&rec, 4.0, 3.0).unwrap();
        let t = band_power_features(&set, &default_bands()).unwrap();
        assert!(t.rows()[0].features.iter().all(|&v| v == 0.0));
        let empty = EpochSet { epochs: vec![], ..set };
        assert!(band_power_features(&empty, &default_bands()).unwrap().is_empty());
    }

    #[test]
    fn band_specs_parse_and_validate() {
        let bands = parse_bands("delta:0.1:4,beta:2:30").unwrap();
        assert_eq!(bands[1], BandSpec::new("beta", 2.0, 30.0));
        assert!(parse_bands("delta:0.1").is_err());
        assert!(parse_bands("").is_err());
        assert!(BandSpec::new("x", 10.0, 200.0).validate(250.0).is_err());
    }

    #[test]
    fn recording_validation() {
        let mut rec = sine_recording(10.0, 1.0, 100.0, 1.0);
        assert!(rec.validate().is_ok());
        rec.segments.push(Segment { tag: SegmentTag::Baseline1, start: 50, end: 80 });
        assert!(rec.validate().is_err());
        rec.segments.pop();
        rec.segments[0].end = 101;
        assert!(rec.validate().is_err());
    }

    proptest! {
        #[test]
        fn epoch_count_formula(t in 4u32..200, len in 1u32..8, ov_frac in 0u32..8) {
            let len = len as f64;
            let overlap = (ov_frac as f64 / 8.0 * len).min(len - 0.5).max(0.0);
            let rate = 8.0;
            let secs = (t as f64).max(len);
            let rec = sine_recording(1.0, 1.0, rate, secs);
            let set = epoch(&rec, len, overlap).unwrap();
            let expected = ((secs - len) / (len - overlap)).floor() as usize + 1;
            prop_assert_eq!(set.len(), expected);
            for w in set.epochs.windows(2) {
                prop_assert_eq!(w[1].start - w[0].start, ((len - overlap) * rate).round() as usize);
            }
        }

        #[test]
        fn band_power_scales_quadratically(c in 0.1f64..10.0, seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..500).map(|_| rng.random::<f64>() - 0.5).collect();
            let scaled: Vec<f64> = x.iter().map(|v| v * c).collect();
            let sos = Sos::butter_bandpass(4, 4.0, 8.0, 250.0).unwrap();
            let (p, q) = (band_power(&x, &sos), band_power(&scaled, &sos));
            prop_assert!(p >= 0.0);
            prop_assert!((q - c * c * p).abs() <= 1e-9 * q.max(1e-12));
        }
    }
}
