use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{RawRecording, Segment};
use crate::error::{Error, Result};
use crate::rng;
use crate::table::{Condition, SegmentTag};

/// One sinusoidal carrier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Oscillator {
    pub freq_hz: f64,
    pub amplitude: f64,
}

/// Settings for one synthetic recording. Segments are laid out as
/// baseline 1, baseline 2, then task; zero-length segments are omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EegSynthConfig {
    pub subject_id: u32,
    pub condition: Option<Condition>,
    pub channels: Vec<String>,
    pub rate_hz: f64,
    pub task_s: f64,
    #[serde(default)]
    pub baseline1_s: f64,
    #[serde(default)]
    pub baseline2_s: f64,
    pub oscillators: Vec<Oscillator>,
    /// Carriers during baseline 1; defaults to `oscillators`.
    #[serde(default)]
    pub baseline1_oscillators: Option<Vec<Oscillator>>,
    #[serde(default)]
    pub baseline2_oscillators: Option<Vec<Oscillator>>,
    /// Per-channel amplitude multipliers; empty means all ones.
    #[serde(default)]
    pub channel_gains: Vec<f64>,
    pub noise_std: f64,
    pub seed: u64,
}

impl EegSynthConfig {
    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.rate_hz > 0.0 && self.rate_hz.is_finite()) {
            return bad(format!("rate {} Hz must be positive", self.rate_hz));
        }
        if !(self.task_s > 0.0) || self.baseline1_s < 0.0 || self.baseline2_s < 0.0 {
            return bad("segment durations must be non-negative and task duration positive".into());
        }
        if self.channels.is_empty() {
            return bad("at least one channel is required".into());
        }
        if !self.channel_gains.is_empty() && self.channel_gains.len() != self.channels.len() {
            return bad("channel_gains length must match channels".into());
        }
        if !(self.noise_std >= 0.0) {
            return bad("noise_std must be non-negative".into());
        }
        let all = self
            .oscillators
            .iter()
            .chain(self.baseline1_oscillators.iter().flatten())
            .chain(self.baseline2_oscillators.iter().flatten());
        for o in all {
            if !(o.amplitude >= 0.0) || !(o.freq_hz >= 0.0) {
                return bad(format!("oscillator {o:?} needs non-negative amplitude and frequency"));
            }
        }
        Ok(())
    }
}

/// Oscillators plus white noise. Each (segment, oscillator, channel) triple
/// gets its own random phase; the output is a pure function of the config.
pub fn generate_synthetic_eeg(cfg: &EegSynthConfig) -> Result<RawRecording> {
    cfg.validate()?;
    let to_samples = |s: f64| (s * cfg.rate_hz).round() as usize;
    let layout = [
        (SegmentTag::Baseline1, cfg.baseline1_s, cfg.baseline1_oscillators.as_ref()),
        (SegmentTag::Baseline2, cfg.baseline2_s, cfg.baseline2_oscillators.as_ref()),
        (SegmentTag::Task, cfg.task_s, None),
    ];
    let mut segments = Vec::new();
    let mut cursor = 0;
    for (tag, secs, _) in &layout {
        let len = to_samples(*secs);
        if len > 0 {
            segments.push(Segment {
                tag: *tag,
                start: cursor,
                end: cursor + len,
            });
            cursor += len;
        }
    }
    let n = cursor;
    let noise = Normal::new(0.0, cfg.noise_std.max(0.0))
        .map_err(|e| Error::Config(format!("noise: {e}")))?;

    let samples = (0..cfg.channels.len())
        .map(|ch| {
            let gain = cfg.channel_gains.get(ch).copied().unwrap_or(1.0);
            let mut x = vec![0.0; n];
            for (seg_idx, seg) in segments.iter().enumerate() {
                let oscillators = layout
                    .iter()
                    .find(|(tag, _, _)| *tag == seg.tag)
                    .and_then(|(_, _, o)| *o)
                    .unwrap_or(&cfg.oscillators);
                let mut phases = rng::stream(cfg.seed, &[1, ch as u64, seg_idx as u64]);
                for osc in oscillators {
                    let phase = phases.random::<f64>() * 2.0 * PI;
                    let w = 2.0 * PI * osc.freq_hz / cfg.rate_hz;
                    let amp = gain * osc.amplitude;
                    for (i, v) in x[seg.start..seg.end].iter_mut().enumerate() {
                        *v += amp * (w * i as f64 + phase).sin();
                    }
                }
            }
            if cfg.noise_std > 0.0 {
                let mut r = rng::stream(cfg.seed, &[2, ch as u64]);
                for v in &mut x {
                    *v += noise.sample(&mut r);
                }
            }
            x
        })
        .collect();

    Ok(RawRecording {
        channels: cfg.channels.clone(),
        rate_hz: cfg.rate_hz,
        samples,
        segments,
        subject_id: cfg.subject_id,
        condition: cfg.condition,
    })
}

/// Per-subject amplitude profile across sessions and baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectProfile {
    pub subject_id: u32,
    /// Overall amplitude multiplier for this subject.
    #[serde(default = "one")]
    pub gain: f64,
    #[serde(default)]
    pub channel_gains: Vec<f64>,
    pub low: Vec<Oscillator>,
    pub high: Vec<Oscillator>,
    #[serde(default)]
    pub baseline1: Option<Vec<Oscillator>>,
    #[serde(default)]
    pub baseline2: Option<Vec<Oscillator>>,
}

fn one() -> f64 {
    1.0
}

/// A multi-subject, two-session synthetic EEG study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EegScenario {
    pub channels: Vec<String>,
    pub rate_hz: f64,
    pub task_s: f64,
    #[serde(default)]
    pub baseline1_s: f64,
    #[serde(default)]
    pub baseline2_s: f64,
    pub noise_std: f64,
    pub seed: u64,
    pub subjects: Vec<SubjectProfile>,
}

impl EegScenario {
    /// One recording config per subject and session (low, then high).
    pub fn sessions(&self) -> Vec<EegSynthConfig> {
        let scale = |osc: &[Oscillator], g: f64| -> Vec<Oscillator> {
            osc.iter()
                .map(|o| Oscillator {
                    freq_hz: o.freq_hz,
                    amplitude: o.amplitude * g,
                })
                .collect()
        };
        self.subjects
            .iter()
            .flat_map(|s| {
                [(Condition::Low, &s.low), (Condition::High, &s.high)]
                    .into_iter()
                    .map(move |(cond, osc)| (s, cond, osc))
            })
            .map(|(s, cond, osc)| EegSynthConfig {
                subject_id: s.subject_id,
                condition: Some(cond),
                channels: self.channels.clone(),
                rate_hz: self.rate_hz,
                task_s: self.task_s,
                baseline1_s: self.baseline1_s,
                baseline2_s: self.baseline2_s,
                oscillators: scale(osc, s.gain),
                baseline1_oscillators: s.baseline1.as_deref().map(|o| scale(o, s.gain)),
                baseline2_oscillators: s.baseline2.as_deref().map(|o| scale(o, s.gain)),
                channel_gains: s.channel_gains.clone(),
                noise_std: self.noise_std,
                seed: rng::derive_seed(self.seed, &[s.subject_id as u64, cond.label() as u64]),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{band_power_features, default_bands, epoch};

    fn alpha_only(task_s: f64, rate_hz: f64, noise_std: f64) -> EegSynthConfig {
        EegSynthConfig {
            subject_id: 4,
            condition: Some(Condition::High),
            channels: vec!["AF7".into(), "FP1".into()],
            rate_hz,
            task_s,
            baseline1_s: 0.0,
            baseline2_s: 0.0,
            oscillators: vec![Oscillator {
                freq_hz: 10.0,
                amplitude: 1.0,
            }],
            baseline1_oscillators: None,
            baseline2_oscillators: None,
            channel_gains: vec![],
            noise_std,
            seed: 10,
        }
    }

    #[test]
    fn sample_count_is_duration_times_rate() {
        let rec = generate_synthetic_eeg(&alpha_only(600.0, 250.0, 0.5)).unwrap();
        assert_eq!(rec.n_samples(), 150_000);
        assert_eq!(rec.samples.len(), 2);
        rec.validate().unwrap();
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let cfg = alpha_only(20.0, 250.0, 1.0);
        let a = generate_synthetic_eeg(&cfg).unwrap();
        let b = generate_synthetic_eeg(&cfg).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic_eeg(&EegSynthConfig { seed: 11, ..cfg }).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn ten_hz_carrier_dominates_alpha() {
        let rec = generate_synthetic_eeg(&alpha_only(8.0, 250.0, 0.0)).unwrap();
        let set = epoch(&rec, 4.0, 3.0).unwrap();
        let table = band_power_features(&set, &default_bands()).unwrap();
        for row in table.rows() {
            for ch in row.features.chunks(4) {
                let alpha = ch[2];
                for (i, &other) in ch.iter().enumerate() {
                    if i != 2 {
                        assert!(alpha >= 10.0 * other, "{ch:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn segments_are_laid_out_in_order() {
        let cfg = EegSynthConfig {
            baseline1_s: 10.0,
            baseline2_s: 5.0,
            ..alpha_only(20.0, 100.0, 0.0)
        };
        let rec = generate_synthetic_eeg(&cfg).unwrap();
        let tags: Vec<_> = rec.segments.iter().map(|s| (s.tag, s.start, s.end)).collect();
        assert_eq!(
            tags,
            vec![
                (SegmentTag::Baseline1, 0, 1000),
                (SegmentTag::Baseline2, 1000, 1500),
                (SegmentTag::Task, 1500, 3500)
            ]
        );
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(generate_synthetic_eeg(&alpha_only(0.0, 250.0, 0.0)).is_err());
        assert!(generate_synthetic_eeg(&alpha_only(10.0, -1.0, 0.0)).is_err());
        let mut cfg = alpha_only(10.0, 250.0, 0.0);
        cfg.oscillators[0].amplitude = -1.0;
        assert!(matches!(generate_synthetic_eeg(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn scenario_expands_to_two_sessions_per_subject() {
        let s = EegScenario {
            channels: vec!["c".into()],
            rate_hz: 100.0,
            task_s: 10.0,
            baseline1_s: 0.0,
            baseline2_s: 0.0,
            noise_std: 0.1,
            seed: 10,
            subjects: (0..3)
                .map(|i| SubjectProfile {
                    subject_id: i,
                    gain: 2.0,
                    channel_gains: vec![],
                    low: vec![Oscillator { freq_hz: 10.0, amplitude: 1.0 }],
                    high: vec![Oscillator { freq_hz: 6.0, amplitude: 1.0 }],
                    baseline1: None,
                    baseline2: None,
                })
                .collect(),
        };
        let sessions = s.sessions();
        assert_eq!(sessions.len(), 6);
        assert_eq!(sessions[1].condition, Some(Condition::High));
        assert_eq!(sessions[1].oscillators[0].amplitude, 2.0);
        assert_ne!(sessions[0].seed, sessions[1].seed);
    }
}
