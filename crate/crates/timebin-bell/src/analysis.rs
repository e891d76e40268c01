//! From timetag streams to physics.
//!
//! The chain is: fold singles into per-pulse histograms, pair central-slot
//! events into coincidences, turn the four-run counts of every chained term
//! into probability and correlation estimates, evaluate the Bell functionals
//! with propagated counting errors, and report violation significances
//! against the time-bin bounds. Fringe scans fit
//! `C(phi) = C0 (1 + V cos(phi + phi0))` for the visibility.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bell::{
    self, bounds, ch_form, ch_term_cell, chained_chsh, chsh_from_ch, BellReport, ProbabilitySet,
    TermProbs,
};
use crate::error::{Error, Result};
use crate::quantum::Slot;
use crate::settings::{ChainedSettings, Combo, Phase, RunLabel};
use crate::simulator::{Channel, ExperimentConfig, TimetagStream, COINCIDENCE_HALF_WIDTH_TICKS};

/// Acceptance region for pairing events, in TDC ticks around the central
/// slot. The default `+-5` ticks corresponds to 0.405 ns at an 81 ps bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoincidenceWindow {
    pub center_offset_ticks: i64,
    pub half_width_ticks: i64,
}

impl Default for CoincidenceWindow {
    fn default() -> Self {
        CoincidenceWindow {
            center_offset_ticks: 0,
            half_width_ticks: COINCIDENCE_HALF_WIDTH_TICKS,
        }
    }
}

impl CoincidenceWindow {
    pub fn validate(&self) -> Result<()> {
        if self.half_width_ticks < 0 {
            return Err(Error::InvalidValue {
                name: "half_width_ticks",
                value: self.half_width_ticks as f64,
                expected: ">= 0",
            });
        }
        Ok(())
    }
}

/// Counts per TDC bin, folded modulo the pulse period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinglesHistogram {
    pub bin_s: f64,
    pub period_s: f64,
    pub counts: Vec<u64>,
}

impl SinglesHistogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Sum of a circular window of bins around `center`.
    pub fn window_counts(&self, center: usize, half_width: usize) -> u64 {
        let n = self.counts.len() as i64;
        let mut sum = 0;
        for d in -(half_width as i64)..=(half_width as i64) {
            let idx = (center as i64 + d).rem_euclid(n) as usize;
            sum += self.counts[idx];
        }
        sum
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin,time_s,counts\n");
        for (i, &c) in self.counts.iter().enumerate() {
            out.push_str(&format!("{i},{:.6e},{c}\n", i as f64 * self.bin_s));
        }
        out
    }
}

/// Singles histograms for the two channels of one stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelHistograms {
    pub alice: SinglesHistogram,
    pub bob: SinglesHistogram,
}

/// Fold each channel's ticks modulo the pulse period.
pub fn singles_histogram(stream: &TimetagStream) -> ChannelHistograms {
    let config = &stream.header.config;
    let period = config.rep_period_s();
    let bin = config.tdc_bin_s;
    let n_bins = (period / bin).ceil() as usize;
    let fold = |channel| {
        let mut counts = vec![0u64; n_bins];
        for tick in stream.channel_ticks(channel) {
            let tau = (tick as f64 * bin) % period;
            let idx = ((tau / bin) as usize).min(n_bins - 1);
            counts[idx] += 1;
        }
        SinglesHistogram {
            bin_s: bin,
            period_s: period,
            counts,
        }
    };
    ChannelHistograms {
        alice: fold(Channel::AlicePlus),
        bob: fold(Channel::BobPlus),
    }
}

/// Folded bin indices of the three slot peaks `(E, M, L)`.
pub fn expected_peak_bins(config: &ExperimentConfig) -> [usize; 3] {
    let slot_bins = config.delta_t_s / config.tdc_bin_s;
    [
        0,
        slot_bins.round() as usize,
        (2.0 * slot_bins).round() as usize,
    ]
}

/// Histogram of arrival-time differences between paired events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaTauHistogram {
    pub half_span_ticks: i64,
    /// Index `i` holds the count at `delta_tau = i - half_span_ticks`.
    pub counts: Vec<u64>,
}

impl DeltaTauHistogram {
    fn new(half_span_ticks: i64) -> Self {
        DeltaTauHistogram {
            half_span_ticks,
            counts: vec![0; (2 * half_span_ticks + 1) as usize],
        }
    }

    fn record(&mut self, delta_tau: i64) {
        let idx = delta_tau + self.half_span_ticks;
        if (0..self.counts.len() as i64).contains(&idx) {
            self.counts[idx as usize] += 1;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("delta_tau_ticks,counts\n");
        for (i, &c) in self.counts.iter().enumerate() {
            out.push_str(&format!("{},{c}\n", i as i64 - self.half_span_ticks));
        }
        out
    }
}

/// Result of pairing one run's two channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceResult {
    pub central_count: u64,
    pub delta_tau: DeltaTauHistogram,
}

/// Pair central-slot events of the two channels.
///
/// An Alice and a Bob event are coincident when both fall within the window
/// around their pulse's central slot, which bounds `|delta_tau|` by twice the
/// half-width. Each event pairs at most once; pairing is greedy by
/// `|delta_tau|` with ties going to the earlier Bob event.
pub fn count_coincidences(
    alice_src: &TimetagStream,
    bob_src: &TimetagStream,
    window: CoincidenceWindow,
) -> Result<CoincidenceResult> {
    window.validate()?;
    if alice_src.header.label != bob_src.header.label {
        return Err(Error::RunLabelMismatch {
            left: alice_src.header.label.clone(),
            right: bob_src.header.label.clone(),
        });
    }
    let config = &alice_src.header.config;
    let central = |stream: &TimetagStream, channel| -> Vec<(u64, u64)> {
        stream
            .channel_ticks(channel)
            .filter_map(|tick| {
                let pulse = config.pulse_of_tick(tick);
                let center = config.central_slot_tick(pulse) as i64 + window.center_offset_ticks;
                ((tick as i64 - center).abs() <= window.half_width_ticks).then_some((pulse, tick))
            })
            .collect()
    };
    let alice = central(alice_src, Channel::AlicePlus);
    let bob = central(bob_src, Channel::BobPlus);

    let mut histogram = DeltaTauHistogram::new(2 * window.half_width_ticks);
    let mut count = 0u64;

    // Both lists are tick-sorted, hence pulse-sorted; walk pulse groups.
    let mut ai = 0;
    let mut bi = 0;
    while ai < alice.len() && bi < bob.len() {
        let pulse = alice[ai].0.min(bob[bi].0);
        let a_end = alice[ai..].iter().take_while(|e| e.0 == pulse).count() + ai;
        let b_end = bob[bi..].iter().take_while(|e| e.0 == pulse).count() + bi;
        let a_group = &alice[ai..a_end];
        let b_group = &bob[bi..b_end];
        ai = a_end;
        bi = b_end;
        if a_group.is_empty() || b_group.is_empty() {
            continue;
        }

        // greedy nearest-|dt| matching; (|dt|, bob tick, alice tick) ordering
        let mut candidates: Vec<(i64, u64, u64, usize, usize)> = Vec::new();
        for (i, &(_, ta)) in a_group.iter().enumerate() {
            for (j, &(_, tb)) in b_group.iter().enumerate() {
                let dt = ta as i64 - tb as i64;
                candidates.push((dt.abs(), tb, ta, i, j));
            }
        }
        candidates.sort_unstable();
        let mut a_used = vec![false; a_group.len()];
        let mut b_used = vec![false; b_group.len()];
        for (_, tb, ta, i, j) in candidates {
            if !a_used[i] && !b_used[j] {
                a_used[i] = true;
                b_used[j] = true;
                count += 1;
                histogram.record(ta as i64 - tb as i64);
            }
        }
    }

    Ok(CoincidenceResult {
        central_count: count,
        delta_tau: histogram,
    })
}

/// Per-pulse slot pairings between the two channels, for checking the
/// three-peak structure and the forbidden E-L corners. Events farther than
/// `half_width_ticks` from every slot center (darks) are ignored.
///
/// Single pass: records are tick-sorted, so pulse indices are nondecreasing.
pub fn slot_pair_counts(stream: &TimetagStream, half_width_ticks: i64) -> [[u64; 3]; 3] {
    let config = &stream.header.config;
    let slot_ticks = config.delta_t_s / config.tdc_bin_s;
    let classify = |tick: u64| -> Option<(u64, usize)> {
        let pulse = config.pulse_of_tick(tick);
        let offset = tick as i64 - config.central_slot_tick(pulse) as i64;
        let slot = (offset as f64 / slot_ticks).round() as i64;
        if !(-1..=1).contains(&slot) {
            return None;
        }
        let residual = offset - (slot as f64 * slot_ticks).round() as i64;
        (residual.abs() <= half_width_ticks).then_some((pulse, (slot + 1) as usize))
    };

    fn flush(a: &mut Vec<usize>, b: &mut Vec<usize>, table: &mut [[u64; 3]; 3]) {
        for &x in a.iter() {
            for &y in b.iter() {
                table[x][y] += 1;
            }
        }
        a.clear();
        b.clear();
    }

    let mut table = [[0u64; 3]; 3];
    let mut current = u64::MAX;
    let mut a_slots: Vec<usize> = Vec::new();
    let mut b_slots: Vec<usize> = Vec::new();
    for r in &stream.records {
        if let Some((pulse, slot)) = classify(r.tick) {
            if pulse != current {
                flush(&mut a_slots, &mut b_slots, &mut table);
                current = pulse;
            }
            match r.channel {
                Channel::AlicePlus => a_slots.push(slot),
                Channel::BobPlus => b_slots.push(slot),
            }
        }
    }
    flush(&mut a_slots, &mut b_slots, &mut table);
    table
}

/// Central-slot coincidence counts of the four runs measuring one term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FourRunCounts {
    pub pp: u64,
    pub mp: u64,
    pub pm: u64,
    pub mm: u64,
}

impl FourRunCounts {
    pub fn get(&self, cell: Combo) -> u64 {
        match cell {
            Combo::PlusPlus => self.pp,
            Combo::MinusPlus => self.mp,
            Combo::PlusMinus => self.pm,
            Combo::MinusMinus => self.mm,
        }
    }

    pub fn total(&self) -> u64 {
        self.pp + self.mp + self.pm + self.mm
    }
}

/// A joint probability estimated from a four-run group under fair sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityEstimate {
    pub outcome: Combo,
    pub value: f64,
    pub std_error: f64,
    pub counts: FourRunCounts,
}

/// `p_hat = C_outcome / sum C` with the binomial delta-method error
/// `sqrt(p_hat (1 - p_hat) / sum C)`.
pub fn estimate_probability(counts: &FourRunCounts, outcome: Combo) -> Result<ProbabilityEstimate> {
    let total = counts.total();
    if total == 0 {
        return Err(Error::DegenerateData("all four run counts are zero".into()));
    }
    let n = total as f64;
    let value = counts.get(outcome) as f64 / n;
    Ok(ProbabilityEstimate {
        outcome,
        value,
        std_error: (value * (1.0 - value) / n).sqrt(),
        counts: *counts,
    })
}

/// Correlation of one setting pair from its four outcome estimates:
/// renormalized `p(++) + p(--) - p(+-) - p(-+)` with the multinomial error
/// `sqrt((1 - E^2) / n)`.
pub fn correlation_from_probabilities(estimates: &[ProbabilityEstimate; 4]) -> Result<(f64, f64)> {
    let mut seen = [false; 4];
    let total = estimates[0].counts.total();
    for e in estimates {
        seen[match e.outcome {
            Combo::PlusPlus => 0,
            Combo::MinusPlus => 1,
            Combo::PlusMinus => 2,
            Combo::MinusMinus => 3,
        }] = true;
        if e.counts.total() != total {
            return Err(Error::DegenerateData(
                "estimates do not come from one four-run group".into(),
            ));
        }
    }
    if seen != [true; 4] {
        return Err(Error::DegenerateData(
            "need all four joint outcomes of one setting pair".into(),
        ));
    }
    let value =
        |combo: Combo| -> f64 { estimates.iter().find(|e| e.outcome == combo).unwrap().value };
    let sum: f64 = estimates.iter().map(|e| e.value).sum();
    if sum <= 0.0 {
        return Err(Error::DegenerateData("all probabilities zero".into()));
    }
    let e = (value(Combo::PlusPlus) + value(Combo::MinusMinus)
        - value(Combo::PlusMinus)
        - value(Combo::MinusPlus))
        / sum;
    let n = total as f64;
    Ok((e, ((1.0 - e * e).max(0.0) / n).sqrt()))
}

fn correlation_from_counts(counts: &FourRunCounts) -> Result<(f64, f64)> {
    let estimates = [
        estimate_probability(counts, Combo::PlusPlus)?,
        estimate_probability(counts, Combo::MinusPlus)?,
        estimate_probability(counts, Combo::PlusMinus)?,
        estimate_probability(counts, Combo::MinusMinus)?,
    ];
    correlation_from_probabilities(&estimates)
}

// ---------------------------------------------------------------------------
// Fringe fitting
// ---------------------------------------------------------------------------

/// One point of a coincidence fringe scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringePoint {
    pub phase_sum: Phase,
    pub coincidences: u64,
    pub duration_s: f64,
}

/// Coincidence counts versus the phase sum.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FringeScan {
    pub points: Vec<FringePoint>,
}

impl FringeScan {
    /// Collect a scan from per-point streams, counting central coincidences.
    pub fn from_streams(streams: &[TimetagStream], window: CoincidenceWindow) -> Result<Self> {
        let mut points = Vec::with_capacity(streams.len());
        for s in streams {
            let c = count_coincidences(s, s, window)?;
            points.push(FringePoint {
                phase_sum: Phase::new(
                    s.header.alice_phase.radians() + s.header.bob_phase.radians(),
                ),
                coincidences: c.central_count,
                duration_s: s.header.duration_s,
            });
        }
        Ok(FringeScan { points })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("phase_sum_rad,coincidences,duration_s\n");
        for p in &self.points {
            out.push_str(&format!(
                "{:.9},{},{}\n",
                p.phase_sum.radians(),
                p.coincidences,
                p.duration_s
            ));
        }
        out
    }
}

/// Result of fitting `C(phi) = C0 (1 + V cos(phi + phi0))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringeFit {
    pub visibility: f64,
    pub visibility_std_error: f64,
    pub phase_offset_rad: f64,
    pub phase_offset_std_error: f64,
    /// Mean fringe level `C0`, in counts at the scan's mean duration.
    pub amplitude: f64,
    pub amplitude_std_error: f64,
    /// `(max - min) / (max + min)` of the fitted curve; equals the clamped
    /// visibility for this model.
    pub contrast: f64,
}

/// Weighted least squares on the linearization
/// `rate = b0 + b1 cos(phi) + b2 sin(phi)`, with Poisson weights refined over
/// a few reweighting rounds. `V = sqrt(b1^2 + b2^2) / b0`.
pub fn fit_fringe(scan: &FringeScan) -> Result<FringeFit> {
    let mut distinct: Vec<f64> = scan.points.iter().map(|p| p.phase_sum.radians()).collect();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    if distinct.len() < 4 {
        return Err(Error::InsufficientPhases {
            min: 4,
            got: distinct.len(),
        });
    }
    if scan.points.iter().all(|p| p.coincidences == 0) {
        return Err(Error::DegenerateData("fringe scan has no counts".into()));
    }
    for p in &scan.points {
        if p.duration_s.is_nan() || p.duration_s <= 0.0 {
            return Err(Error::InvalidValue {
                name: "duration_s",
                value: p.duration_s,
                expected: "> 0",
            });
        }
    }

    // rate-space observations
    let obs: Vec<(f64, f64, f64)> = scan
        .points
        .iter()
        .map(|p| {
            (
                p.phase_sum.radians(),
                p.coincidences as f64 / p.duration_s,
                p.duration_s,
            )
        })
        .collect();

    // initial weights from the data, then reweight from the model
    let mut weights: Vec<f64> = obs
        .iter()
        .map(|&(_, rate, d)| d / rate.max(1.0 / d))
        .collect();
    let mut beta = [0.0f64; 3];
    let mut cov = [[0.0f64; 3]; 3];
    for _round in 0..3 {
        (beta, cov) = wls_three(&obs, &weights)?;
        for (w, &(phi, _, d)) in weights.iter_mut().zip(&obs) {
            let model = beta[0] + beta[1] * phi.cos() + beta[2] * phi.sin();
            *w = d / model.max(1.0 / d);
        }
    }

    let b0 = beta[0];
    if b0.is_nan() || b0 <= 0.0 {
        return Err(Error::FitFailure(format!(
            "non-positive mean level b0 = {b0}"
        )));
    }
    let amp = (beta[1] * beta[1] + beta[2] * beta[2]).sqrt();
    let visibility = amp / b0;
    let phase_offset = (-beta[2]).atan2(beta[1]);

    // delta-method errors
    let grad_v = if amp > 1e-12 * b0 {
        [-amp / (b0 * b0), beta[1] / (amp * b0), beta[2] / (amp * b0)]
    } else {
        // flat fringe: direction undefined, keep a conservative magnitude
        [0.0, 1.0 / b0, 1.0 / b0]
    };
    let grad_phi = if amp > 1e-12 * b0 {
        [0.0, beta[2] / (amp * amp), -beta[1] / (amp * amp)]
    } else {
        [0.0, 0.0, 0.0]
    };
    let quad = |g: [f64; 3]| -> f64 {
        let mut s = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                s += g[i] * cov[i][j] * g[j];
            }
        }
        s.max(0.0).sqrt()
    };

    let mean_duration = obs.iter().map(|o| o.2).sum::<f64>() / obs.len() as f64;
    let clamped = visibility.clamp(0.0, 1.0);
    Ok(FringeFit {
        visibility: clamped,
        visibility_std_error: quad(grad_v),
        phase_offset_rad: phase_offset,
        phase_offset_std_error: quad(grad_phi),
        amplitude: b0 * mean_duration,
        amplitude_std_error: cov[0][0].max(0.0).sqrt() * mean_duration,
        contrast: clamped,
    })
}

/// Weighted least squares for `y ~ b0 + b1 cos(phi) + b2 sin(phi)`;
/// returns the coefficients and their covariance.
fn wls_three(obs: &[(f64, f64, f64)], weights: &[f64]) -> Result<([f64; 3], [[f64; 3]; 3])> {
    let mut m = [[0.0f64; 3]; 3];
    let mut rhs = [0.0f64; 3];
    for (&(phi, y, _), &w) in obs.iter().zip(weights) {
        let x = [1.0, phi.cos(), phi.sin()];
        for i in 0..3 {
            rhs[i] += w * x[i] * y;
            for j in 0..3 {
                m[i][j] += w * x[i] * x[j];
            }
        }
    }
    let inv = invert_three(&m).ok_or_else(|| {
        Error::FitFailure("singular normal equations (phases not diverse enough)".into())
    })?;
    let mut beta = [0.0f64; 3];
    for i in 0..3 {
        for j in 0..3 {
            beta[i] += inv[i][j] * rhs[j];
        }
    }
    Ok((beta, inv))
}

fn invert_three(m: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    // scale-free conditioning check: a healthy design has det comparable to
    // the product of diagonal entries
    let scale = (m[0][0] * m[1][1] * m[2][2]).abs();
    if det.is_nan() || det.abs() <= 1e-9 * scale {
        return None;
    }
    let c =
        |r1: usize, c1: usize, r2: usize, c2: usize| m[r1][c1] * m[r2][c2] - m[r1][c2] * m[r2][c1];
    let adj = [
        [c(1, 1, 2, 2), -c(0, 1, 2, 2), c(0, 1, 1, 2)],
        [-c(1, 0, 2, 2), c(0, 0, 2, 2), -c(0, 0, 1, 2)],
        [c(1, 0, 2, 1), -c(0, 0, 2, 1), c(0, 0, 1, 1)],
    ];
    let mut out = [[0.0f64; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = adj[i][j] / det;
        }
    }
    Some(out)
}

// ---------------------------------------------------------------------------
// Full pipeline
// ---------------------------------------------------------------------------

/// One correlation estimate of the chained set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEstimate {
    pub alice_index: usize,
    pub bob_index: usize,
    pub value: f64,
    pub std_error: f64,
    pub total_counts: u64,
}

/// One CH-form row of the report, mirroring a measured results table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChVariantRow {
    pub variant: u8,
    /// The side of the time-bin CH interval this variant tests.
    pub lhv_bound: f64,
    /// `true` when the violated side is the upper bound.
    pub tests_upper: bool,
    pub value: f64,
    pub std_error: f64,
    pub violation_sigma: f64,
}

/// Everything the analysis extracts from a chained dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub n: usize,
    /// Canonical chained statistic from the correlation path.
    pub chsh: BellReport,
    /// Cross-check: the same statistic reconstructed from the CH rows.
    pub chsh_via_ch: f64,
    pub ch_rows: [ChVariantRow; 4],
    pub correlations: Vec<CorrelationEstimate>,
    pub total_coincidences: u64,
    /// Provenance of the streams that produced the report.
    pub model_ids: Vec<String>,
    /// The single-side marginals entering the CH forms are sums of measured
    /// joint probabilities; this substitution assumes detectors sample the
    /// ensemble without outcome bias.
    pub fair_sampling_assumed: bool,
}

impl PipelineReport {
    /// Results-table rendering: one row per CH variant plus the CHSH row.
    pub fn to_table_csv(&self) -> String {
        let mut out = String::from("row,lhv_bound,value,std_error,violation_sigma\n");
        for r in &self.ch_rows {
            out.push_str(&format!(
                "S_CH_{},{:.4},{:.4},{:.4},{:.2}\n",
                r.variant, r.lhv_bound, r.value, r.std_error, r.violation_sigma
            ));
        }
        out.push_str(&format!(
            "S_CHSH,{:.4},{:.4},{:.4},{:.2}\n",
            self.chsh.lhv_bound,
            self.chsh.statistic,
            self.chsh.std_error,
            self.chsh.violation_sigma
        ));
        out
    }
}

/// Run the whole analysis on the streams of a chained four-run protocol.
///
/// Streams are grouped by run label; several streams with the same label are
/// pooled. Every chained term must be covered by all four phase combinations.
pub fn full_pipeline(
    streams: &[TimetagStream],
    settings: &ChainedSettings,
    window: CoincidenceWindow,
) -> Result<PipelineReport> {
    let n = settings.n();
    let b = bounds(n)?;

    let mut by_label: BTreeMap<RunLabel, u64> = BTreeMap::new();
    let mut model_ids: Vec<String> = Vec::new();
    for s in streams {
        let Ok(label) = s.header.label.parse::<RunLabel>() else {
            continue; // stream not part of a four-run protocol
        };
        let c = count_coincidences(s, s, window)?;
        *by_label.entry(label).or_insert(0) += c.central_count;
        if !model_ids.contains(&s.header.model_id) {
            model_ids.push(s.header.model_id.clone());
        }
    }

    let mut missing = Vec::new();
    let mut term_counts: BTreeMap<(usize, usize), FourRunCounts> = BTreeMap::new();
    for (k, j) in settings.chained_pairs() {
        let mut cells = [0u64; 4];
        for (idx, combo) in Combo::ALL.into_iter().enumerate() {
            let label = RunLabel {
                alice_index: k,
                bob_index: j,
                combo,
            };
            match by_label.get(&label) {
                Some(&c) => cells[idx] = c,
                None => missing.push(label.to_string()),
            }
        }
        term_counts.insert(
            (k, j),
            FourRunCounts {
                pp: cells[0],
                mp: cells[1],
                pm: cells[2],
                mm: cells[3],
            },
        );
    }
    if !missing.is_empty() {
        return Err(Error::PlanCoverage { missing });
    }

    // probability estimates per term
    let mut prob_terms: BTreeMap<(usize, usize), TermProbs> = BTreeMap::new();
    let mut correlations = Vec::new();
    let mut var_sum = 0.0;
    let mut total_coincidences = 0u64;
    for (&(k, j), counts) in &term_counts {
        if counts.total() == 0 {
            return Err(Error::DegenerateData(format!(
                "term A{k}B{j} has zero coincidences in all four runs"
            )));
        }
        total_coincidences += counts.total();
        let total = counts.total() as f64;
        prob_terms.insert(
            (k, j),
            TermProbs {
                pp: counts.pp as f64 / total,
                mp: counts.mp as f64 / total,
                pm: counts.pm as f64 / total,
                mm: counts.mm as f64 / total,
            },
        );
        let (value, std_error) = correlation_from_counts(counts)?;
        var_sum += std_error * std_error;
        correlations.push(CorrelationEstimate {
            alice_index: k,
            bob_index: j,
            value,
            std_error,
            total_counts: counts.total(),
        });
    }

    let probs = ProbabilitySet::from_fn(n, |k, j| prob_terms[&(k, j)])?;
    let statistic = chained_chsh(&probs.correlations()?)?;
    let std_error = var_sum.sqrt();
    let chsh_report = bell::report(statistic, b.timebin_chsh, b.classical_chsh, std_error)?;

    // CH rows in their measurement frames: variants 2 and 4 read the data
    // with one side's outcomes relabeled (the pi-shifted frames).
    let flipped_b = probs.with_bob_flipped();
    let flipped_a = probs.with_alice_flipped();
    let row_sets: [(u8, &ProbabilitySet); 4] =
        [(1, &probs), (2, &flipped_b), (3, &probs), (4, &flipped_a)];
    let mut ch_rows = Vec::with_capacity(4);
    for (variant, set) in row_sets {
        let value = ch_form(set, variant)?;
        let mut var = 0.0;
        for (k, j) in settings.chained_pairs() {
            let p = set.term(k, j)?.get(ch_term_cell(variant, n, k, j));
            var += p * (1.0 - p) / term_counts[&(k, j)].total() as f64;
        }
        let std_error = var.sqrt();
        let tests_upper = matches!(variant, 1 | 4);
        let (lhv_bound, violation_sigma) = if tests_upper {
            (b.ch_interval.1, (value - b.ch_interval.1) / std_error)
        } else {
            (b.ch_interval.0, (b.ch_interval.0 - value) / std_error)
        };
        ch_rows.push(ChVariantRow {
            variant,
            lhv_bound,
            tests_upper,
            value,
            std_error,
            violation_sigma,
        });
    }
    let ch_rows: [ChVariantRow; 4] = ch_rows.try_into().unwrap();
    let chsh_via_ch = chsh_from_ch([
        ch_rows[0].value,
        ch_rows[1].value,
        ch_rows[2].value,
        ch_rows[3].value,
    ]);

    Ok(PipelineReport {
        n,
        chsh: chsh_report,
        chsh_via_ch,
        ch_rows,
        correlations,
        total_coincidences,
        model_ids,
        fair_sampling_assumed: true,
    })
}

/// Dense index of a slot, ordered `E, M, L`.
pub fn slot_index(slot: Slot) -> usize {
    match slot {
        Slot::Early => 0,
        Slot::Medium => 1,
        Slot::Late => 2,
    }
}

// ---------------------------------------------------------------------------
// End-to-end orchestration
// ---------------------------------------------------------------------------

/// Config used for results-table reproduction runs: pair yield and detector
/// efficiency sized so a 3 s four-run protocol lands the chained statistic's
/// error near 0.03.
pub fn table1_config(visibility: f64, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        pair_prob_per_pulse: 2.0e-4,
        detector_efficiency: 0.32,
        dark_count_rate_hz: 100.0,
        visibility,
        seed,
        ..Default::default()
    }
}

/// Simulate a full chained four-run protocol at optimal settings and analyze
/// it: optimal phases, one plan entry per (term, combo), independent seeded
/// runs, then [`full_pipeline`].
pub fn run_chained_experiment(
    config: &ExperimentConfig,
    n: usize,
    run_duration_s: f64,
) -> Result<PipelineReport> {
    let settings = crate::settings::optimal_chained_settings(n)?;
    let plan = crate::settings::build_run_plan(
        &settings,
        crate::settings::Functional::ChainedChsh,
        run_duration_s,
    )?;
    let streams = crate::simulator::simulate_plan(config, &plan)?;
    full_pipeline(&streams, &settings, CoincidenceWindow::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{StreamHeader, TimetagRecord};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn test_config() -> ExperimentConfig {
        ExperimentConfig {
            dark_count_rate_hz: 0.0,
            seed: 1,
            ..Default::default()
        }
    }

    fn synthetic_stream(label: &str, records: Vec<TimetagRecord>) -> TimetagStream {
        TimetagStream {
            header: StreamHeader {
                config: test_config(),
                label: label.to_string(),
                alice_phase: Phase::ZERO,
                bob_phase: Phase::ZERO,
                duration_s: 1.0,
                model_id: "synthetic".into(),
            },
            records,
        }
    }

    fn rec(channel: Channel, tick: u64) -> TimetagRecord {
        TimetagRecord { channel, tick }
    }

    #[test]
    fn coincidence_window_examples() {
        let config = test_config();
        let t0 = config.central_slot_tick(10);
        let both_central = synthetic_stream(
            "x",
            vec![rec(Channel::AlicePlus, t0), rec(Channel::BobPlus, t0)],
        );
        let r =
            count_coincidences(&both_central, &both_central, CoincidenceWindow::default()).unwrap();
        assert_eq!(r.central_count, 1);
        assert_eq!(r.delta_tau.counts[r.delta_tau.half_span_ticks as usize], 1);

        // Bob 6 ticks out: outside the +-5 acceptance
        let bob_out = synthetic_stream(
            "x",
            vec![rec(Channel::AlicePlus, t0), rec(Channel::BobPlus, t0 + 6)],
        );
        let r = count_coincidences(&bob_out, &bob_out, CoincidenceWindow::default()).unwrap();
        assert_eq!(r.central_count, 0);

        // Bob 5 ticks out: inside, delta_tau = -5 for alice - bob
        let bob_edge = synthetic_stream(
            "x",
            vec![rec(Channel::AlicePlus, t0), rec(Channel::BobPlus, t0 + 5)],
        );
        let r = count_coincidences(&bob_edge, &bob_edge, CoincidenceWindow::default()).unwrap();
        assert_eq!(r.central_count, 1);
        assert_eq!(
            r.delta_tau.counts[(r.delta_tau.half_span_ticks - 5) as usize],
            1
        );
    }

    #[test]
    fn coincidences_respect_labels_and_ties() {
        let a = synthetic_stream("one", vec![rec(Channel::AlicePlus, 100)]);
        let b = synthetic_stream("two", vec![rec(Channel::BobPlus, 100)]);
        assert!(matches!(
            count_coincidences(&a, &b, CoincidenceWindow::default()),
            Err(Error::RunLabelMismatch { .. })
        ));

        // two Bob events equidistant: the earlier one wins the tie
        let config = test_config();
        let t0 = config.central_slot_tick(3);
        let s = synthetic_stream(
            "x",
            vec![
                rec(Channel::AlicePlus, t0),
                rec(Channel::BobPlus, t0 - 2),
                rec(Channel::BobPlus, t0 + 2),
            ],
        );
        let r = count_coincidences(&s, &s, CoincidenceWindow::default()).unwrap();
        assert_eq!(r.central_count, 1);
        // alice - earlier bob = +2
        assert_eq!(
            r.delta_tau.counts[(r.delta_tau.half_span_ticks + 2) as usize],
            1
        );
    }

    #[test]
    fn coincidence_count_symmetric_under_swap() {
        let config = test_config();
        let mut records = Vec::new();
        for pulse in 0..200u64 {
            let t0 = config.central_slot_tick(pulse * 3);
            if pulse % 3 != 0 {
                records.push(rec(Channel::AlicePlus, t0 + pulse % 4));
            }
            if pulse % 4 != 0 {
                records.push(rec(Channel::BobPlus, t0 + pulse % 5 % 4));
            }
        }
        records.sort_by_key(|r| (r.tick, r.channel.byte()));
        let s = synthetic_stream("x", records);
        let ab = count_coincidences(&s, &s, CoincidenceWindow::default()).unwrap();
        let mut swapped_records: Vec<TimetagRecord> = s
            .records
            .iter()
            .map(|r| TimetagRecord {
                channel: match r.channel {
                    Channel::AlicePlus => Channel::BobPlus,
                    Channel::BobPlus => Channel::AlicePlus,
                },
                tick: r.tick,
            })
            .collect();
        swapped_records.sort_by_key(|r| (r.tick, r.channel.byte()));
        let swapped = synthetic_stream("x", swapped_records);
        let ba = count_coincidences(&swapped, &swapped, CoincidenceWindow::default()).unwrap();
        assert_eq!(ab.central_count, ba.central_count);
    }

    #[test]
    fn singles_histogram_properties() {
        let empty = synthetic_stream("e", vec![]);
        let h = singles_histogram(&empty);
        assert_eq!(h.alice.total(), 0);
        assert!(h.alice.counts.iter().all(|&c| c == 0));

        let config = test_config();
        let mut records = Vec::new();
        for pulse in 0..50u64 {
            records.push(rec(Channel::AlicePlus, config.central_slot_tick(pulse)));
        }
        let s = synthetic_stream("s", records);
        let h = singles_histogram(&s);
        assert_eq!(h.alice.total(), 50);
        assert_eq!(
            h.alice.total() as usize,
            s.channel_count(Channel::AlicePlus)
        );
        let [_, m_bin, _] = expected_peak_bins(&config);
        assert!(h.alice.window_counts(m_bin, 2) >= 49, "peak not at M bin");
    }

    #[test]
    fn estimate_probability_examples() {
        let counts = FourRunCounts {
            pp: 100,
            mp: 0,
            pm: 0,
            mm: 100,
        };
        let e = estimate_probability(&counts, Combo::PlusPlus).unwrap();
        assert_abs_diff_eq!(e.value, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(e.std_error, (0.25f64 / 200.0).sqrt(), epsilon = 1e-12);

        let all = FourRunCounts {
            pp: 77,
            mp: 0,
            pm: 0,
            mm: 0,
        };
        let e = estimate_probability(&all, Combo::PlusPlus).unwrap();
        assert_abs_diff_eq!(e.value, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e.std_error, 0.0, epsilon = 1e-15);

        let none = FourRunCounts {
            pp: 0,
            mp: 0,
            pm: 0,
            mm: 0,
        };
        assert!(matches!(
            estimate_probability(&none, Combo::PlusPlus),
            Err(Error::DegenerateData(_))
        ));
    }

    #[test]
    fn correlation_examples() {
        let perfect = FourRunCounts {
            pp: 500,
            mp: 0,
            pm: 0,
            mm: 500,
        };
        let (e, _) = correlation_from_counts(&perfect).unwrap();
        assert_abs_diff_eq!(e, 1.0, epsilon = 1e-15);

        let flat = FourRunCounts {
            pp: 250,
            mp: 250,
            pm: 250,
            mm: 250,
        };
        let (e, se) = correlation_from_counts(&flat).unwrap();
        assert_abs_diff_eq!(e, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(se, (1.0f64 / 1000.0).sqrt(), epsilon = 1e-12);
    }

    fn synthetic_scan(v: f64, c0: f64, phi0: f64, points: usize) -> FringeScan {
        FringeScan {
            points: (0..points)
                .map(|i| {
                    let phi = i as f64 * 2.0 * PI / points as f64;
                    FringePoint {
                        phase_sum: Phase::new(phi),
                        coincidences: (c0 * (1.0 + v * (phi + phi0).cos())).round() as u64,
                        duration_s: 1.0,
                    }
                })
                .collect(),
        }
    }

    #[test]
    fn fringe_fit_recovers_noiseless_scan() {
        // large c0 so integer rounding is negligible
        let scan = synthetic_scan(0.99, 1e7, 0.4, 16);
        let fit = fit_fringe(&scan).unwrap();
        assert_abs_diff_eq!(fit.visibility, 0.99, epsilon = 1e-6);
        assert_abs_diff_eq!(fit.phase_offset_rad, 0.4, epsilon = 1e-6);
        assert_abs_diff_eq!(fit.amplitude, 1e7, epsilon = 10.0);
        assert_abs_diff_eq!(fit.contrast, fit.visibility, epsilon = 1e-12);
    }

    #[test]
    fn fringe_fit_flat_scan_gives_zero_visibility() {
        let scan = synthetic_scan(0.0, 5e4, 0.0, 12);
        let fit = fit_fringe(&scan).unwrap();
        assert!(fit.visibility.abs() < 1e-6);
    }

    #[test]
    fn fringe_fit_invariant_under_rescaling() {
        let base = synthetic_scan(0.7, 2e5, 1.1, 20);
        let scaled = FringeScan {
            points: base
                .points
                .iter()
                .map(|p| FringePoint {
                    coincidences: p.coincidences * 16,
                    ..*p
                })
                .collect(),
        };
        let f1 = fit_fringe(&base).unwrap();
        let f2 = fit_fringe(&scaled).unwrap();
        assert_abs_diff_eq!(f1.visibility, f2.visibility, epsilon = 1e-9);
    }

    #[test]
    fn fringe_fit_rejects_thin_scans() {
        let mut scan = synthetic_scan(0.9, 1e4, 0.0, 3);
        assert!(matches!(
            fit_fringe(&scan),
            Err(Error::InsufficientPhases { min: 4, got: 3 })
        ));
        scan.points.clear();
        assert!(fit_fringe(&scan).is_err());
    }

    #[test]
    fn pipeline_reports_missing_runs() {
        let settings = crate::settings::optimal_chained_settings(2).unwrap();
        let err = full_pipeline(&[], &settings, CoincidenceWindow::default());
        match err {
            Err(Error::PlanCoverage { missing }) => {
                assert_eq!(missing.len(), 16);
                assert!(missing.contains(&"a2b2:pp".to_string()));
            }
            other => panic!("expected PlanCoverage, got {other:?}"),
        }
    }
}
