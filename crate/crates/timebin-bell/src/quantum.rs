//! Closed-form quantum model of the time-bin state.
//!
//! Each photon can arrive in one of three slots, early (E), medium (M) or
//! late (L), with a binary detector outcome attached. Only the M-M
//! coincidences interfere: their four sign cells carry
//! `(1/16) * (1 +- V cos(phi_A + phi_B))`, every other allowed slot pairing
//! is flat at 1/32 per sign cell, and E-L cross pairings are forbidden.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::settings::Phase;

/// Arrival-time slot at a measurement station.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Slot {
    Early,
    Medium,
    Late,
}

impl Slot {
    pub const ALL: [Slot; 3] = [Slot::Early, Slot::Medium, Slot::Late];

    /// Arrival-time offset from the central slot, in units of the slot
    /// separation `delta_t`.
    pub fn time_offset(self) -> i64 {
        match self {
            Slot::Early => -1,
            Slot::Medium => 0,
            Slot::Late => 1,
        }
    }

    pub fn code(self) -> char {
        match self {
            Slot::Early => 'E',
            Slot::Medium => 'M',
            Slot::Late => 'L',
        }
    }
}

/// Detector outcome sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub const ALL: [Sign; 2] = [Sign::Plus, Sign::Minus];

    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    /// Sign of a real number; zero maps to `Plus` (a measure-zero tie).
    pub fn of(x: f64) -> Sign {
        if x >= 0.0 {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }
}

/// One of the six possible single-station outcomes, e.g. `M+`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SlotSign {
    pub slot: Slot,
    pub sign: Sign,
}

impl SlotSign {
    pub const COUNT: usize = 6;

    pub fn new(slot: Slot, sign: Sign) -> Self {
        SlotSign { slot, sign }
    }

    /// Dense index in `0..6`, ordered `E+ E- M+ M- L+ L-`.
    pub fn index(self) -> usize {
        let s = match self.slot {
            Slot::Early => 0,
            Slot::Medium => 1,
            Slot::Late => 2,
        };
        2 * s
            + match self.sign {
                Sign::Plus => 0,
                Sign::Minus => 1,
            }
    }

    pub fn from_index(i: usize) -> SlotSign {
        let slot = Slot::ALL[i / 2];
        let sign = Sign::ALL[i % 2];
        SlotSign { slot, sign }
    }

    pub fn all() -> impl Iterator<Item = SlotSign> {
        (0..Self::COUNT).map(SlotSign::from_index)
    }
}

impl std::fmt::Display for SlotSign {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let sign = match self.sign {
            Sign::Plus => '+',
            Sign::Minus => '-',
        };
        write!(f, "{}{}", self.slot.code(), sign)
    }
}

/// Joint probability table over the 6x6 outcome pairs (Alice x Bob).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointOutcomeTable {
    p: [[f64; SlotSign::COUNT]; SlotSign::COUNT],
}

impl JointOutcomeTable {
    pub fn zero() -> Self {
        JointOutcomeTable {
            p: [[0.0; SlotSign::COUNT]; SlotSign::COUNT],
        }
    }

    pub fn get(&self, a: SlotSign, b: SlotSign) -> f64 {
        self.p[a.index()][b.index()]
    }

    pub fn set(&mut self, a: SlotSign, b: SlotSign, value: f64) {
        self.p[a.index()][b.index()] = value;
    }

    pub fn add(&mut self, a: SlotSign, b: SlotSign, value: f64) {
        self.p[a.index()][b.index()] += value;
    }

    pub fn total(&self) -> f64 {
        self.p.iter().flatten().sum()
    }

    /// Largest absolute per-cell difference against another table.
    pub fn max_abs_diff(&self, other: &JointOutcomeTable) -> f64 {
        let mut worst = 0.0_f64;
        for a in SlotSign::all() {
            for b in SlotSign::all() {
                worst = worst.max((self.get(a, b) - other.get(a, b)).abs());
            }
        }
        worst
    }

    /// Per-side slot marginals `(P[E], P[M], P[L])`.
    pub fn slot_marginals(&self, alice_side: bool) -> [f64; 3] {
        let mut m = [0.0; 3];
        for a in SlotSign::all() {
            for b in SlotSign::all() {
                let slot = if alice_side { a.slot } else { b.slot };
                m[match slot {
                    Slot::Early => 0,
                    Slot::Medium => 1,
                    Slot::Late => 2,
                }] += self.get(a, b);
            }
        }
        m
    }

    /// Draw a joint outcome given a uniform variate in `[0, 1)`.
    ///
    /// Deterministic in `u`; the tiny probability mass lost to rounding at
    /// the top of the cumulative scan falls into the last cell.
    pub fn sample(&self, u: f64) -> (SlotSign, SlotSign) {
        let mut acc = 0.0;
        for a in SlotSign::all() {
            for b in SlotSign::all() {
                acc += self.get(a, b);
                if u < acc {
                    return (a, b);
                }
            }
        }
        (SlotSign::from_index(5), SlotSign::from_index(5))
    }

    /// CSV rendering with Alice outcomes as rows and Bob outcomes as columns.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("alice\\bob");
        for b in SlotSign::all() {
            out.push(',');
            out.push_str(&b.to_string());
        }
        out.push('\n');
        for a in SlotSign::all() {
            out.push_str(&a.to_string());
            for b in SlotSign::all() {
                out.push_str(&format!(",{:.9e}", self.get(a, b)));
            }
            out.push('\n');
        }
        out
    }
}

/// The prepared two-photon state, parameterized by its fringe visibility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateModel {
    visibility: f64,
}

impl StateModel {
    pub fn new(visibility: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&visibility) {
            return Err(Error::InvalidValue {
                name: "visibility",
                value: visibility,
                expected: "within [0, 1]",
            });
        }
        Ok(StateModel { visibility })
    }

    pub const IDEAL: StateModel = StateModel { visibility: 1.0 };

    pub fn visibility(self) -> f64 {
        self.visibility
    }
}

/// Joint outcome probabilities at the given measurement phases.
pub fn joint_table(state: StateModel, alice_phase: Phase, bob_phase: Phase) -> JointOutcomeTable {
    let v = state.visibility;
    let c = (alice_phase.radians() + bob_phase.radians()).cos();
    let mut t = JointOutcomeTable::zero();
    for a in SlotSign::all() {
        for b in SlotSign::all() {
            let p = match (a.slot, b.slot) {
                (Slot::Medium, Slot::Medium) => {
                    let same = a.sign == b.sign;
                    (1.0 + if same { v * c } else { -v * c }) / 16.0
                }
                (Slot::Early, Slot::Late) | (Slot::Late, Slot::Early) => 0.0,
                _ => 1.0 / 32.0,
            };
            t.set(a, b, p);
        }
    }
    t
}

/// Correlation of the M-M postselected subensemble:
/// `[p(++) + p(--) - p(+-) - p(-+)] / [sum of the four]`, which for this
/// model evaluates to `V cos(phi_A + phi_B)`.
pub fn conditional_mm_correlation(state: StateModel, alice_phase: Phase, bob_phase: Phase) -> f64 {
    let t = joint_table(state, alice_phase, bob_phase);
    let cell = |sa, sb| {
        t.get(
            SlotSign::new(Slot::Medium, sa),
            SlotSign::new(Slot::Medium, sb),
        )
    };
    let pp = cell(Sign::Plus, Sign::Plus);
    let mm = cell(Sign::Minus, Sign::Minus);
    let pm = cell(Sign::Plus, Sign::Minus);
    let mp = cell(Sign::Minus, Sign::Plus);
    // The four cells sum to 1/4 for every phase pair, so the denominator
    // cannot vanish.
    (pp + mm - pm - mp) / (pp + mm + pm + mp)
}

fn check_n(n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::ChainTooShort { n });
    }
    Ok(n as f64)
}

/// Quantum maximum of the 2N-term chained statistic: `2N cos(pi/2N)`.
pub fn qm_chained_chsh(n: usize) -> Result<f64> {
    let nf = check_n(n)?;
    Ok(2.0 * nf * (PI / (2.0 * nf)).cos())
}

/// Quantum value of the chained CH functional: `1/2 - N sin^2(pi/4N)`.
pub fn qm_chained_ch(n: usize) -> Result<f64> {
    let nf = check_n(n)?;
    Ok(0.5 - nf * (PI / (4.0 * nf)).sin().powi(2))
}

/// Minimum visibility at which the quantum prediction still beats the
/// time-bin LHV bound: `(2N - 1) / (2N cos(pi/2N))`.
pub fn critical_visibility(n: usize) -> Result<f64> {
    let nf = check_n(n)?;
    Ok((2.0 * nf - 1.0) / qm_chained_chsh(n)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_4, TAU};

    fn phase(v: f64) -> Phase {
        Phase::new(v)
    }

    #[test]
    fn ideal_table_matches_closed_forms() {
        // cos = 1: the equal-sign M-M cells reach 1/8, opposite-sign vanish.
        let t = joint_table(StateModel::IDEAL, phase(0.0), phase(0.0));
        let mm = |sa, sb| {
            t.get(
                SlotSign::new(Slot::Medium, sa),
                SlotSign::new(Slot::Medium, sb),
            )
        };
        assert_abs_diff_eq!(mm(Sign::Plus, Sign::Plus), 0.125, epsilon = 1e-15);
        assert_abs_diff_eq!(mm(Sign::Plus, Sign::Minus), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            t.get(
                SlotSign::new(Slot::Early, Sign::Plus),
                SlotSign::new(Slot::Late, Sign::Plus)
            ),
            0.0,
            epsilon = 0.0
        );
    }

    #[test]
    fn zero_visibility_flattens_interference() {
        let state = StateModel::new(0.0).unwrap();
        let t = joint_table(state, phase(0.3), phase(1.1));
        for sa in Sign::ALL {
            for sb in Sign::ALL {
                assert_abs_diff_eq!(
                    t.get(
                        SlotSign::new(Slot::Medium, sa),
                        SlotSign::new(Slot::Medium, sb)
                    ),
                    1.0 / 16.0,
                    epsilon = 1e-15
                );
            }
        }
    }

    #[test]
    fn table_is_normalized_with_fixed_marginals() {
        for i in 0..7 {
            for j in 0..7 {
                let a = phase(i as f64 * TAU / 7.0);
                let b = phase(j as f64 * TAU / 7.0 + 0.13);
                let state = StateModel::new(0.7).unwrap();
                let t = joint_table(state, a, b);
                assert_abs_diff_eq!(t.total(), 1.0, epsilon = 1e-12);
                for side in [true, false] {
                    let m = t.slot_marginals(side);
                    assert_abs_diff_eq!(m[0], 0.25, epsilon = 1e-12);
                    assert_abs_diff_eq!(m[1], 0.5, epsilon = 1e-12);
                    assert_abs_diff_eq!(m[2], 0.25, epsilon = 1e-12);
                }
                for cell in &t.p {
                    for &v in cell {
                        assert!(v >= 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn mm_correlation_examples() {
        assert_abs_diff_eq!(
            conditional_mm_correlation(StateModel::IDEAL, phase(0.0), phase(0.0)),
            1.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            conditional_mm_correlation(StateModel::IDEAL, phase(FRAC_PI_4), phase(0.0)),
            2.0_f64.sqrt() / 2.0,
            epsilon = 1e-12
        );
        let v99 = StateModel::new(0.99).unwrap();
        assert_abs_diff_eq!(
            conditional_mm_correlation(v99, phase(PI / 10.0), phase(0.0)),
            0.99 * (PI / 10.0).cos(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn mm_correlation_depends_only_on_phase_sum() {
        let state = StateModel::new(0.83).unwrap();
        for delta in [0.1, 1.0, 2.5, -0.7] {
            let base = conditional_mm_correlation(state, phase(0.4), phase(0.9));
            let shifted = conditional_mm_correlation(state, phase(0.4 + delta), phase(0.9 - delta));
            assert_abs_diff_eq!(base, shifted, epsilon = 1e-12);
        }
    }

    #[test]
    fn chained_chsh_predictions() {
        assert_abs_diff_eq!(qm_chained_chsh(3).unwrap(), 5.196, epsilon = 1e-3);
        assert_abs_diff_eq!(qm_chained_chsh(4).unwrap(), 7.391, epsilon = 1e-3);
        assert_abs_diff_eq!(qm_chained_chsh(5).unwrap(), 9.511, epsilon = 1e-3);
        assert!(qm_chained_chsh(1).is_err());
    }

    #[test]
    fn chained_ch_predictions() {
        assert_abs_diff_eq!(qm_chained_ch(3).unwrap(), 0.2990, epsilon = 1e-4);
        assert_abs_diff_eq!(qm_chained_ch(5).unwrap(), 0.3776, epsilon = 1e-4);
        // identity tying the two functionals together
        for n in 2..=10 {
            let lhs = 4.0 * qm_chained_ch(n).unwrap() + 2.0 * (n as f64 - 1.0);
            assert_abs_diff_eq!(lhs, qm_chained_chsh(n).unwrap(), epsilon = 1e-12);
        }
    }

    #[test]
    fn critical_visibility_values() {
        assert_abs_diff_eq!(critical_visibility(5).unwrap(), 0.9463, epsilon = 1e-4);
        assert_abs_diff_eq!(
            critical_visibility(3).unwrap(),
            5.0 / qm_chained_chsh(3).unwrap(),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(critical_visibility(4).unwrap(), 0.9471, epsilon = 1e-4);
        // below one exactly when the chain is long enough to matter
        for n in 2..=10 {
            let v = critical_visibility(n).unwrap();
            assert_eq!(v < 1.0, n >= 3, "n = {n}, v = {v}");
        }
    }

    #[test]
    fn sample_covers_cells() {
        let t = joint_table(StateModel::IDEAL, phase(0.2), phase(0.4));
        // cumulative sampling lands each u in the right cell
        let (a, b) = t.sample(0.0);
        assert_eq!((a.index(), b.index()), (0, 0));
        let (a, _) = t.sample(0.999_999_999);
        assert_eq!(a.index(), 5);
    }
}
