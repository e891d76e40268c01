//! Monte Carlo generation of detection timetag streams.
//!
//! Each pump pulse carries a pair with probability `pair_prob_per_pulse`; the
//! joint outcome is drawn either from the quantum table (with the run's
//! visibility and phase jitter) or by sampling a hidden variable and applying
//! the local strategies. Slots map to arrival times `t0 + {-dt, 0, +dt}`
//! around the pulse's central slot, one detector per side records only the
//! `+` outcomes, dark counts arrive uniformly in time, and everything is
//! quantized to TDC ticks.
//!
//! Pulse batches are simulated in parallel with substreams keyed by
//! `(seed, purpose, batch)`, so the output is byte-identical regardless of
//! thread count. Within a batch, pair pulses are found by geometric gap
//! sampling, which is distribution-identical to a Bernoulli draw per pulse
//! but costs O(pairs) instead of O(pulses).

use std::f64::consts::TAU;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lhv::{alice_outcome, bob_outcome, HiddenVariable, LHV_MODEL_ID};
use crate::quantum::{joint_table, SlotSign, StateModel};
use crate::rng::substream;
use crate::settings::{Phase, RunPlan};

/// Which physical model generates joint outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Quantum,
    Lhv,
}

impl ModelKind {
    /// Provenance string recorded in stream headers.
    pub fn id(self) -> &'static str {
        match self {
            ModelKind::Quantum => "quantum-closed-form-v1",
            ModelKind::Lhv => LHV_MODEL_ID,
        }
    }
}

/// Default coincidence half-width in TDC ticks; the config validation keeps
/// the slot separation clear of a window this wide.
pub const COINCIDENCE_HALF_WIDTH_TICKS: i64 = 5;

fn default_rep_rate() -> f64 {
    76e6
}
fn default_delta_t() -> f64 {
    2.0e-9
}
fn default_tdc_bin() -> f64 {
    81e-12
}
fn default_pair_prob() -> f64 {
    2.0e-4
}
fn default_efficiency() -> f64 {
    0.32
}
fn default_dark_rate() -> f64 {
    100.0
}
fn default_visibility() -> f64 {
    0.99
}
fn default_model() -> ModelKind {
    ModelKind::Quantum
}

/// Source, detector and timing parameters of a simulated experiment.
///
/// Defaults correspond to a 76 MHz pulsed pump, 2 ns slot separation and an
/// 81 ps TDC, with the pair yield and detection efficiency tuned so that a
/// 3 s four-run protocol produces statistical errors around 0.03 on the
/// chained statistic. The sub-picosecond emission-time jitter of the pump is
/// far below one TDC bin and is not modeled.
///
/// Physical validity of `delta_t_s` in a real apparatus additionally demands
/// that it sit far above the down-converted photons' coherence time and far
/// below the pump coherence length (no first-order interference of singles,
/// full second-order interference of coincidences). Those are properties of
/// the light source, not of this model, and are not checked here.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Pump repetition rate, Hz.
    #[serde(default = "default_rep_rate")]
    pub rep_rate_hz: f64,
    /// Slot separation (interferometer delay), seconds.
    #[serde(default = "default_delta_t")]
    pub delta_t_s: f64,
    /// TDC bin width, seconds.
    #[serde(default = "default_tdc_bin")]
    pub tdc_bin_s: f64,
    /// Probability that a pump pulse yields a photon pair.
    #[serde(default = "default_pair_prob")]
    pub pair_prob_per_pulse: f64,
    /// Detection efficiency of each side's single detector.
    #[serde(default = "default_efficiency")]
    pub detector_efficiency: f64,
    /// Dark count rate per detector, Hz.
    #[serde(default = "default_dark_rate")]
    pub dark_count_rate_hz: f64,
    /// Fringe visibility of the prepared state (quantum model only; the
    /// local model reproduces the ideal table by construction).
    #[serde(default = "default_visibility")]
    pub visibility: f64,
    /// RMS of the per-run Gaussian phase offset left by the stabilization.
    #[serde(default)]
    pub phase_jitter_rms_rad: f64,
    #[serde(default = "default_model")]
    pub model: ModelKind,
    #[serde(default)]
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            rep_rate_hz: default_rep_rate(),
            delta_t_s: default_delta_t(),
            tdc_bin_s: default_tdc_bin(),
            pair_prob_per_pulse: default_pair_prob(),
            detector_efficiency: default_efficiency(),
            dark_count_rate_hz: default_dark_rate(),
            visibility: default_visibility(),
            phase_jitter_rms_rad: 0.0,
            model: default_model(),
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, name: &'static str, value: f64, expected: &'static str| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidValue {
                    name,
                    value,
                    expected,
                })
            }
        };
        check(
            self.rep_rate_hz > 0.0,
            "rep_rate_hz",
            self.rep_rate_hz,
            "> 0",
        )?;
        check(self.delta_t_s > 0.0, "delta_t_s", self.delta_t_s, "> 0")?;
        check(self.tdc_bin_s > 0.0, "tdc_bin_s", self.tdc_bin_s, "> 0")?;
        check(
            (0.0..=1.0).contains(&self.pair_prob_per_pulse),
            "pair_prob_per_pulse",
            self.pair_prob_per_pulse,
            "within [0, 1]",
        )?;
        check(
            (0.0..=1.0).contains(&self.detector_efficiency),
            "detector_efficiency",
            self.detector_efficiency,
            "within [0, 1]",
        )?;
        check(
            self.dark_count_rate_hz >= 0.0,
            "dark_count_rate_hz",
            self.dark_count_rate_hz,
            ">= 0",
        )?;
        check(
            (0.0..=1.0).contains(&self.visibility),
            "visibility",
            self.visibility,
            "within [0, 1]",
        )?;
        check(
            self.phase_jitter_rms_rad >= 0.0,
            "phase_jitter_rms_rad",
            self.phase_jitter_rms_rad,
            ">= 0",
        )?;
        // The three peaks must stay resolvable: the slot separation has to
        // clear the coincidence window, and a repetition period must hold
        // all three slots.
        let window_width = 2.0 * COINCIDENCE_HALF_WIDTH_TICKS as f64 * self.tdc_bin_s;
        if self.delta_t_s <= window_width {
            return Err(Error::InvalidConfig(format!(
                "delta_t_s = {} must exceed the coincidence window width {}",
                self.delta_t_s, window_width
            )));
        }
        if self.rep_period_s() <= 2.0 * self.delta_t_s {
            return Err(Error::InvalidConfig(format!(
                "repetition period {} must exceed twice the slot separation {}",
                self.rep_period_s(),
                self.delta_t_s
            )));
        }
        Ok(())
    }

    pub fn rep_period_s(&self) -> f64 {
        1.0 / self.rep_rate_hz
    }

    pub fn pulses_in(&self, duration_s: f64) -> u64 {
        (duration_s * self.rep_rate_hz).floor() as u64
    }

    /// Tick of pulse `k`'s central (M) slot.
    pub fn central_slot_tick(&self, pulse: u64) -> u64 {
        let t = pulse as f64 * self.rep_period_s() + self.delta_t_s;
        (t / self.tdc_bin_s).round() as u64
    }

    /// Nearest pulse index for an event tick.
    pub fn pulse_of_tick(&self, tick: u64) -> u64 {
        let t = tick as f64 * self.tdc_bin_s - self.delta_t_s;
        (t / self.rep_period_s()).round().max(0.0) as u64
    }
}

/// Detection channel: one "+"-port detector per side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    AlicePlus,
    BobPlus,
}

impl Channel {
    pub fn byte(self) -> u8 {
        match self {
            Channel::AlicePlus => 0,
            Channel::BobPlus => 1,
        }
    }

    pub fn from_byte(b: u8) -> Option<Channel> {
        match b {
            0 => Some(Channel::AlicePlus),
            1 => Some(Channel::BobPlus),
            _ => None,
        }
    }
}

/// One detection: channel plus TDC tick since run start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimetagRecord {
    pub channel: Channel,
    pub tick: u64,
}

/// Run metadata carried with every stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamHeader {
    pub config: ExperimentConfig,
    pub label: String,
    pub alice_phase: Phase,
    pub bob_phase: Phase,
    pub duration_s: f64,
    pub model_id: String,
}

/// A run's detections, sorted by tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimetagStream {
    pub header: StreamHeader,
    pub records: Vec<TimetagRecord>,
}

impl TimetagStream {
    pub fn channel_ticks(&self, channel: Channel) -> impl Iterator<Item = u64> + '_ {
        self.records
            .iter()
            .filter(move |r| r.channel == channel)
            .map(|r| r.tick)
    }

    pub fn channel_count(&self, channel: Channel) -> usize {
        self.records.iter().filter(|r| r.channel == channel).count()
    }
}

/// Simulate one measurement run at fixed settings.
pub fn simulate_run(
    config: &ExperimentConfig,
    alice_phase: Phase,
    bob_phase: Phase,
    duration_s: f64,
) -> Result<TimetagStream> {
    simulate_run_labeled(config, "run", alice_phase, bob_phase, duration_s)
}

/// As [`simulate_run`] with an explicit run label for the header.
pub fn simulate_run_labeled(
    config: &ExperimentConfig,
    label: &str,
    alice_phase: Phase,
    bob_phase: Phase,
    duration_s: f64,
) -> Result<TimetagStream> {
    config.validate()?;
    if duration_s.is_nan() || duration_s <= 0.0 {
        return Err(Error::InvalidValue {
            name: "duration_s",
            value: duration_s,
            expected: "> 0",
        });
    }

    // Per-run stabilization residual: one Gaussian offset per side.
    let (jit_a, jit_b) = if config.phase_jitter_rms_rad > 0.0 {
        let mut rng = substream(config.seed, &[TAG_JITTER]);
        (
            config.phase_jitter_rms_rad * gaussian(&mut rng),
            config.phase_jitter_rms_rad * gaussian(&mut rng),
        )
    } else {
        (0.0, 0.0)
    };
    let phi_a = alice_phase.offset(jit_a);
    let phi_b = bob_phase.offset(jit_b);

    let n_pulses = config.pulses_in(duration_s);
    let mut records = simulate_pairs(config, phi_a, phi_b, n_pulses)?;
    for channel in [Channel::AlicePlus, Channel::BobPlus] {
        simulate_darks(config, channel, duration_s, &mut records);
    }
    records.sort_unstable_by_key(|r| (r.tick, r.channel.byte()));

    Ok(TimetagStream {
        header: StreamHeader {
            config: *config,
            label: label.to_string(),
            alice_phase,
            bob_phase,
            duration_s,
            model_id: config.model.id().to_string(),
        },
        records,
    })
}

/// Simulate every entry of a run plan with independent substreams.
///
/// The stabilization gap between runs carries no events; each stream's ticks
/// restart at its own run start.
pub fn simulate_plan(config: &ExperimentConfig, plan: &RunPlan) -> Result<Vec<TimetagStream>> {
    plan.entries
        .iter()
        .enumerate()
        .map(|(i, entry)| {
            let mut run_config = *config;
            run_config.seed = crate::rng::derive_seed(config.seed, &[TAG_RUN, i as u64]);
            simulate_run_labeled(
                &run_config,
                &entry.label.to_string(),
                entry.alice_phase,
                entry.bob_phase,
                entry.duration_s,
            )
        })
        .collect()
}

const TAG_PAIRS: u64 = 0x7061_6972; // "pair"
const TAG_DARK: u64 = 0x6461_726b; // "dark"
const TAG_JITTER: u64 = 0x6a69_7474; // "jitt"
const TAG_RUN: u64 = 0x72756e;

const PULSE_BATCH: u64 = 1 << 20;

fn simulate_pairs(
    config: &ExperimentConfig,
    phi_a: Phase,
    phi_b: Phase,
    n_pulses: u64,
) -> Result<Vec<TimetagRecord>> {
    let p = config.pair_prob_per_pulse;
    if p <= 0.0 || n_pulses == 0 {
        return Ok(Vec::new());
    }
    let table = match config.model {
        ModelKind::Quantum => Some(joint_table(
            StateModel::new(config.visibility)?,
            phi_a,
            phi_b,
        )),
        ModelKind::Lhv => None,
    };

    let batches = n_pulses.div_ceil(PULSE_BATCH);
    let per_batch: Vec<Vec<TimetagRecord>> = (0..batches)
        .into_par_iter()
        .map(|batch| {
            let mut rng = substream(config.seed, &[TAG_PAIRS, batch]);
            let start = batch * PULSE_BATCH;
            let len = PULSE_BATCH.min(n_pulses - start);
            let mut out = Vec::new();
            let mut pulse_local = 0u64;
            while let Some(gap) = next_pair_gap(&mut rng, p, len - pulse_local) {
                pulse_local += gap;
                let pulse = start + pulse_local;
                let (a, b) = match &table {
                    Some(t) => t.sample(rng.gen()),
                    None => {
                        let lambda = HiddenVariable::sample(&mut rng);
                        (alice_outcome(&lambda, phi_a), bob_outcome(&lambda, phi_b))
                    }
                };
                emit(config, &mut rng, Channel::AlicePlus, a, pulse, &mut out);
                emit(config, &mut rng, Channel::BobPlus, b, pulse, &mut out);
                pulse_local += 1; // at most one pair per pulse
                if pulse_local >= len {
                    break;
                }
            }
            out
        })
        .collect();
    Ok(per_batch.into_iter().flatten().collect())
}

/// Distance to the next pair-carrying pulse, or `None` when it falls past
/// `remaining` pulses. Matches an independent Bernoulli draw per pulse.
fn next_pair_gap<R: Rng>(rng: &mut R, p: f64, remaining: u64) -> Option<u64> {
    if remaining == 0 {
        return None;
    }
    if p >= 1.0 {
        return Some(0);
    }
    let u: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]
    let failures = (u.ln() / (1.0 - p).ln()).floor();
    if failures >= remaining as f64 {
        None
    } else {
        Some(failures as u64)
    }
}

fn emit<R: Rng>(
    config: &ExperimentConfig,
    rng: &mut R,
    channel: Channel,
    outcome: SlotSign,
    pulse: u64,
    out: &mut Vec<TimetagRecord>,
) {
    // Single detector on the "+" port: minus outcomes are lost.
    if outcome.sign != crate::quantum::Sign::Plus {
        return;
    }
    if rng.gen::<f64>() >= config.detector_efficiency {
        return;
    }
    let t = pulse as f64 * config.rep_period_s()
        + config.delta_t_s
        + outcome.slot.time_offset() as f64 * config.delta_t_s;
    out.push(TimetagRecord {
        channel,
        tick: (t / config.tdc_bin_s).round() as u64,
    });
}

fn simulate_darks(
    config: &ExperimentConfig,
    channel: Channel,
    duration_s: f64,
    out: &mut Vec<TimetagRecord>,
) {
    let rate = config.dark_count_rate_hz;
    if rate <= 0.0 {
        return;
    }
    let mut rng = substream(config.seed, &[TAG_DARK, channel.byte() as u64]);
    let mut t = 0.0_f64;
    loop {
        t += -(1.0 - rng.gen::<f64>()).ln() / rate;
        if t >= duration_s {
            return;
        }
        out.push(TimetagRecord {
            channel,
            tick: (t / config.tdc_bin_s).round() as u64,
        });
    }
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
}
