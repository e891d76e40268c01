//! Measurement-setting schedules for chained Bell runs.
//!
//! A chained run with `N` settings per side uses phases spaced so that every
//! "+" term of the chained functional has `cos(phi_A + phi_B) = cos(pi/2N)`
//! and the single "-" term picks up the closing angle `pi - pi/2N`. The
//! concrete convention here walks the 2N-cycle
//! `A1, B2, A3, ..., (AN BN joint), ..., A2, B1` assigning position `m * step`
//! to the m-th vertex, with Bob's phases negated so position differences turn
//! into phase sums.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A phase in radians, kept canonical in `[0, 2*pi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "f64", into = "f64")]
pub struct Phase(f64);

impl Phase {
    pub fn new(radians: f64) -> Self {
        let mut v = radians.rem_euclid(TAU);
        // rem_euclid of a tiny negative rounds up to exactly 2*pi.
        if v >= TAU {
            v -= TAU;
        }
        Phase(v)
    }

    pub const ZERO: Phase = Phase(0.0);

    pub fn radians(self) -> f64 {
        self.0
    }

    /// Shift by an arbitrary angle, re-normalizing.
    pub fn offset(self, delta: f64) -> Phase {
        Phase::new(self.0 + delta)
    }

    /// Sum of two phases as a canonical phase.
    pub fn sum(self, other: Phase) -> Phase {
        Phase::new(self.0 + other.0)
    }
}

impl From<f64> for Phase {
    fn from(v: f64) -> Self {
        Phase::new(v)
    }
}

impl From<Phase> for f64 {
    fn from(p: Phase) -> f64 {
        p.0
    }
}

/// The `N` phase settings per side of a chained Bell experiment.
///
/// Index convention is 1-based to match the usual `A_k`, `B_j` labelling:
/// `alice_phase(k)` is valid for `1 <= k <= n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainedSettings {
    n: usize,
    alice_phases: Vec<Phase>,
    bob_phases: Vec<Phase>,
}

impl ChainedSettings {
    pub fn new(alice_phases: Vec<Phase>, bob_phases: Vec<Phase>) -> Result<Self> {
        let n = alice_phases.len();
        if n < 2 || bob_phases.len() != n {
            return Err(Error::ChainTooShort {
                n: n.min(bob_phases.len()),
            });
        }
        Ok(ChainedSettings {
            n,
            alice_phases,
            bob_phases,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn alice_phase(&self, k: usize) -> Phase {
        self.alice_phases[k - 1]
    }

    pub fn bob_phase(&self, j: usize) -> Phase {
        self.bob_phases[j - 1]
    }

    pub fn alice_phases(&self) -> &[Phase] {
        &self.alice_phases
    }

    pub fn bob_phases(&self) -> &[Phase] {
        &self.bob_phases
    }

    /// The chained index pairs `(k, j)` of the 2N-term functional, in the
    /// order `(N,N), (k,k-1) for k=2..N, (k-1,k) for k=2..N, (1,1)`.
    pub fn chained_pairs(&self) -> Vec<(usize, usize)> {
        chained_pairs(self.n)
    }
}

pub(crate) fn chained_pairs(n: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(2 * n);
    pairs.push((n, n));
    for k in 2..=n {
        pairs.push((k, k - 1));
    }
    for k in 2..=n {
        pairs.push((k - 1, k));
    }
    pairs.push((1, 1));
    pairs
}

/// Optimal settings for the chained functional: every "+" term's phase sum is
/// `+-pi/(2N)` and the `A1 B1` term's sum is `+-(pi - pi/(2N))`.
///
/// Construction: the 2N stations form a cycle
/// `A1 - B2 - A3 - ... - AN/BN - ... - A2 - B1 - A1`; vertex `m` (0-based,
/// cycle order) gets position `m * pi/(2N)`. Alice's phase is her position,
/// Bob's phase is minus his position, so each cycle edge's phase sum equals
/// the position difference.
pub fn optimal_chained_settings(n: usize) -> Result<ChainedSettings> {
    if n < 2 {
        return Err(Error::ChainTooShort { n });
    }
    let step = PI / (2.0 * n as f64);
    let mut alice = vec![Phase::ZERO; n];
    let mut bob = vec![Phase::ZERO; n];
    for i in 1..=n {
        let pos = if i % 2 == 1 {
            (i - 1) as f64 * step // ascending half of the cycle
        } else {
            (2 * n - i) as f64 * step // descending half
        };
        alice[i - 1] = Phase::new(pos);
    }
    for j in 1..=n {
        let pos = if j % 2 == 0 {
            (j - 1) as f64 * step
        } else {
            (2 * n - j) as f64 * step
        };
        bob[j - 1] = Phase::new(-pos);
    }
    ChainedSettings::new(alice, bob)
}

/// One of the four phase-shift combinations that map the single "+" detector
/// onto the four joint outcomes of a correlation measurement.
///
/// Shifting a station's phase by `pi` swaps the roles of its two output
/// ports, so the run at `(phi_A + pi, phi_B)` measures what the `(-,+)`
/// coincidence rate would have been at `(phi_A, phi_B)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combo {
    PlusPlus,
    MinusPlus,
    PlusMinus,
    MinusMinus,
}

impl Combo {
    pub const ALL: [Combo; 4] = [
        Combo::PlusPlus,
        Combo::MinusPlus,
        Combo::PlusMinus,
        Combo::MinusMinus,
    ];

    /// Phase offsets `(delta_A, delta_B)` applied on top of the base setting.
    pub fn offsets(self) -> (f64, f64) {
        match self {
            Combo::PlusPlus => (0.0, 0.0),
            Combo::MinusPlus => (PI, 0.0),
            Combo::PlusMinus => (0.0, PI),
            Combo::MinusMinus => (PI, PI),
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Combo::PlusPlus => "pp",
            Combo::MinusPlus => "mp",
            Combo::PlusMinus => "pm",
            Combo::MinusMinus => "mm",
        }
    }

    /// Relabel Alice's outcome: `+ <-> -` on her side.
    pub fn flip_alice(self) -> Combo {
        match self {
            Combo::PlusPlus => Combo::MinusPlus,
            Combo::MinusPlus => Combo::PlusPlus,
            Combo::PlusMinus => Combo::MinusMinus,
            Combo::MinusMinus => Combo::PlusMinus,
        }
    }

    /// Relabel Bob's outcome: `+ <-> -` on his side.
    pub fn flip_bob(self) -> Combo {
        match self {
            Combo::PlusPlus => Combo::PlusMinus,
            Combo::PlusMinus => Combo::PlusPlus,
            Combo::MinusPlus => Combo::MinusMinus,
            Combo::MinusMinus => Combo::MinusPlus,
        }
    }

    fn from_code(s: &str) -> Option<Combo> {
        match s {
            "pp" => Some(Combo::PlusPlus),
            "mp" => Some(Combo::MinusPlus),
            "pm" => Some(Combo::PlusMinus),
            "mm" => Some(Combo::MinusMinus),
            _ => None,
        }
    }
}

/// Identifies which functional term and which phase-shift combination a run
/// belongs to, e.g. `a3b2:pm`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RunLabel {
    pub alice_index: usize,
    pub bob_index: usize,
    pub combo: Combo,
}

impl fmt::Display for RunLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "a{}b{}:{}",
            self.alice_index,
            self.bob_index,
            self.combo.code()
        )
    }
}

impl FromStr for RunLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::BadRunLabel(s.to_string());
        let (pair, combo) = s.split_once(':').ok_or_else(bad)?;
        let rest = pair.strip_prefix('a').ok_or_else(bad)?;
        let (a, b) = rest.split_once('b').ok_or_else(bad)?;
        Ok(RunLabel {
            alice_index: a.parse().map_err(|_| bad())?,
            bob_index: b.parse().map_err(|_| bad())?,
            combo: Combo::from_code(combo).ok_or_else(bad)?,
        })
    }
}

/// Which Bell functional a run plan is scheduled for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Functional {
    /// Correlation form: every chained term gets the full four-run protocol.
    ChainedChsh,
    /// Probability form `i` in 1..=4: one run per signed probability term.
    ChForm(u8),
}

/// A single scheduled measurement run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub label: RunLabel,
    pub alice_phase: Phase,
    pub bob_phase: Phase,
    pub duration_s: f64,
}

/// Ordered measurement schedule covering a Bell functional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunPlan {
    pub functional: Functional,
    pub entries: Vec<RunEntry>,
    /// Dead time between runs while the interferometer phase re-stabilizes.
    pub stabilization_gap_s: f64,
}

impl RunPlan {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub const DEFAULT_RUN_DURATION_S: f64 = 3.0;
pub const DEFAULT_STABILIZATION_GAP_S: f64 = 1.0;

/// Schedule the runs needed to evaluate `functional` on `settings`.
///
/// For the correlation (CHSH) form each chained term `<A_k B_j>` expands into
/// the four phase combinations `(0,0), (pi,0), (0,pi), (pi,pi)`; for a CH
/// form each signed probability term is realized by the single combination
/// that routes that outcome onto the "+" detectors.
pub fn build_run_plan(
    settings: &ChainedSettings,
    functional: Functional,
    run_duration_s: f64,
) -> Result<RunPlan> {
    if run_duration_s.is_nan() || run_duration_s <= 0.0 {
        return Err(Error::InvalidValue {
            name: "run_duration_s",
            value: run_duration_s,
            expected: "> 0",
        });
    }
    let mut entries = Vec::new();
    match functional {
        Functional::ChainedChsh => {
            for (k, j) in settings.chained_pairs() {
                for combo in Combo::ALL {
                    entries.push(entry(settings, k, j, combo, run_duration_s));
                }
            }
        }
        Functional::ChForm(variant) => {
            if !(1..=4).contains(&variant) {
                return Err(Error::InvalidValue {
                    name: "ch_form_variant",
                    value: variant as f64,
                    expected: "1..=4",
                });
            }
            for (k, j) in settings.chained_pairs() {
                let combo = crate::bell::ch_term_cell(variant, settings.n(), k, j);
                entries.push(entry(settings, k, j, combo, run_duration_s));
            }
        }
    }
    Ok(RunPlan {
        functional,
        entries,
        stabilization_gap_s: DEFAULT_STABILIZATION_GAP_S,
    })
}

fn entry(
    settings: &ChainedSettings,
    k: usize,
    j: usize,
    combo: Combo,
    duration_s: f64,
) -> RunEntry {
    let (da, db) = combo.offsets();
    RunEntry {
        label: RunLabel {
            alice_index: k,
            bob_index: j,
            combo,
        },
        alice_phase: settings.alice_phase(k).offset(da),
        bob_phase: settings.bob_phase(j).offset(db),
        duration_s,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Angle in [0, pi] equivalent to `x` under the symmetries of cosine.
    fn cos_angle(x: f64) -> f64 {
        let m = x.rem_euclid(TAU);
        m.min(TAU - m)
    }

    #[test]
    fn phase_normalization_idempotent_and_periodic() {
        for &v in &[0.0, 1.0, -1.0, 7.9, -12.0, TAU, -TAU, 5.0 * TAU + 0.25] {
            let p = Phase::new(v);
            assert!(p.radians() >= 0.0 && p.radians() < TAU, "{v} -> {p:?}");
            assert_abs_diff_eq!(
                Phase::new(p.radians()).radians(),
                p.radians(),
                epsilon = 1e-12
            );
            for k in -3i32..=3 {
                assert_abs_diff_eq!(
                    Phase::new(v + f64::from(k) * TAU).radians(),
                    p.radians(),
                    epsilon = 1e-9
                );
            }
        }
    }

    #[test]
    fn tiny_negative_stays_in_range() {
        let p = Phase::new(-1e-17);
        assert!(p.radians() < TAU);
    }

    #[test]
    fn optimal_settings_phase_sums() {
        for n in 2..=8 {
            let s = optimal_chained_settings(n).unwrap();
            let step = PI / (2.0 * n as f64);
            let mut plus_terms = 0;
            for (idx, (k, j)) in s.chained_pairs().into_iter().enumerate() {
                let sum = s.alice_phase(k).radians() + s.bob_phase(j).radians();
                let angle = cos_angle(sum);
                let last = idx == 2 * n - 1;
                if last {
                    assert_eq!((k, j), (1, 1));
                    assert_abs_diff_eq!(angle, PI - step, epsilon = 1e-10);
                } else {
                    assert_abs_diff_eq!(angle, step, epsilon = 1e-10);
                    plus_terms += 1;
                }
            }
            assert_eq!(plus_terms, 2 * n - 1);
        }
    }

    #[test]
    fn optimal_settings_reach_quantum_maximum() {
        // Summing cos(phi_A + phi_B) with the chained signs must give
        // 2N cos(pi/2N): 2*sqrt(2), 3*sqrt(3), 10*cos(pi/10), ...
        for n in 2..=8 {
            let s = optimal_chained_settings(n).unwrap();
            let pairs = s.chained_pairs();
            let mut total = 0.0;
            for (idx, (k, j)) in pairs.iter().copied().enumerate() {
                let c = (s.alice_phase(k).radians() + s.bob_phase(j).radians()).cos();
                total += if idx == 2 * n - 1 { -c } else { c };
            }
            let expected = 2.0 * n as f64 * (PI / (2.0 * n as f64)).cos();
            assert_abs_diff_eq!(total, expected, epsilon = 1e-12);
        }
        let s2 = optimal_chained_settings(2).unwrap();
        let pairs = s2.chained_pairs();
        let mut total = 0.0;
        for (idx, (k, j)) in pairs.iter().copied().enumerate() {
            let c = (s2.alice_phase(k).radians() + s2.bob_phase(j).radians()).cos();
            total += if idx == 3 { -c } else { c };
        }
        assert_abs_diff_eq!(total, 2.0 * 2.0_f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn rejects_short_chains() {
        assert!(matches!(
            optimal_chained_settings(1),
            Err(Error::ChainTooShort { n: 1 })
        ));
        assert!(optimal_chained_settings(0).is_err());
    }

    #[test]
    fn chsh_plan_run_counts() {
        let s2 = optimal_chained_settings(2).unwrap();
        let plan = build_run_plan(&s2, Functional::ChainedChsh, 3.0).unwrap();
        assert_eq!(plan.len(), 16); // 4 terms x 4 combos

        let s3 = optimal_chained_settings(3).unwrap();
        let plan = build_run_plan(&s3, Functional::ChainedChsh, 3.0).unwrap();
        assert_eq!(plan.len(), 24); // 6 terms x 4 combos

        // every term covered by exactly 4 runs
        for (k, j) in s3.chained_pairs() {
            let count = plan
                .entries
                .iter()
                .filter(|e| e.label.alice_index == k && e.label.bob_index == j)
                .count();
            assert_eq!(count, 4, "term A{k}B{j}");
        }
    }

    #[test]
    fn ch_form_plan_has_one_run_per_term() {
        let s3 = optimal_chained_settings(3).unwrap();
        let plan = build_run_plan(&s3, Functional::ChForm(1), 3.0).unwrap();
        assert_eq!(plan.len(), 6);
        // variant 1 terms: a3b3, a2 (bar b1), (bar a1) b2, a3 (bar b2), (bar a2) b3, a1b1
        let labels: Vec<String> = plan.entries.iter().map(|e| e.label.to_string()).collect();
        assert!(labels.contains(&"a3b3:pp".to_string()));
        assert!(labels.contains(&"a1b1:pp".to_string()));
        assert!(labels.contains(&"a2b1:pm".to_string()));
        assert!(labels.contains(&"a1b2:mp".to_string()));
    }

    #[test]
    fn plan_rejects_bad_duration() {
        let s = optimal_chained_settings(2).unwrap();
        assert!(build_run_plan(&s, Functional::ChainedChsh, 0.0).is_err());
        assert!(build_run_plan(&s, Functional::ChainedChsh, -1.0).is_err());
    }

    #[test]
    fn run_label_roundtrip() {
        for k in 1..=5 {
            for combo in Combo::ALL {
                let label = RunLabel {
                    alice_index: k,
                    bob_index: 6 - k,
                    combo,
                };
                let parsed: RunLabel = label.to_string().parse().unwrap();
                assert_eq!(parsed, label);
            }
        }
        assert!("a1c2:pp".parse::<RunLabel>().is_err());
        assert!("a1b2:xx".parse::<RunLabel>().is_err());
        assert!("1b2:pp".parse::<RunLabel>().is_err());
    }

    #[test]
    fn settings_serde_roundtrip() {
        let s = optimal_chained_settings(4).unwrap();
        let json = serde_json::to_string(&s).unwrap();
        let back: ChainedSettings = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
    }
}
