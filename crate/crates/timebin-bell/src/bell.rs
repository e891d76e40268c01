//! Chained Bell functionals, their bounds, and a brute-force verifier.
//!
//! The 2N-term chained statistic in correlation form is
//! `S = <A_N B_N> + sum_{k=2}^{N} [<A_k B_{k-1}> + <A_{k-1} B_k>] - <A_1 B_1>`.
//! The same statistic can be written in four probability-only (CH) forms,
//! one per global outcome relabeling: variant 1 uses the outcomes as-is,
//! variant 2 flips both sides, variant 3 flips Bob, variant 4 flips Alice.
//! Each variant is the variant-1 functional evaluated on the correspondingly
//! relabeled distribution, which is what makes the per-variant LHV bounds
//! identical.
//!
//! One detector per side measures the four cells of a term through the
//! four-run protocol, and the relabelings become pi phase shifts, so rows 2
//! and 4 of a measured table live in shifted reference frames. The CHSH
//! reconstruction below takes the four per-frame values:
//! `S = S_CH1 - S_CH2 - S_CH3 + S_CH4`. The coefficients were fixed by
//! requiring exact agreement with the correlation form on random
//! distributions (see `chsh_from_ch_coefficients_are_the_unique_signs`).

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::settings::{chained_pairs, Combo};

/// Maximum chain length accepted by the exact strategy enumeration.
pub const MAX_ENUMERATION_N: usize = 6;

/// Correlation values `<A_k B_j>` for the chained index pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSet {
    n: usize,
    values: BTreeMap<(usize, usize), f64>,
}

impl CorrelationSet {
    /// Build from a lookup over the chained pairs of an `n`-chain.
    pub fn from_fn(n: usize, mut value: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::ChainTooShort { n });
        }
        let mut values = BTreeMap::new();
        for (k, j) in chained_pairs(n) {
            let v = value(k, j);
            if !(-1.0..=1.0).contains(&v) {
                return Err(Error::InvalidValue {
                    name: "correlation",
                    value: v,
                    expected: "within [-1, 1]",
                });
            }
            values.insert((k, j), v);
        }
        Ok(CorrelationSet { n, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, alice: usize, bob: usize) -> Result<f64> {
        self.values
            .get(&(alice, bob))
            .copied()
            .ok_or(Error::MissingTerm { alice, bob })
    }
}

/// The four joint outcome probabilities of one setting pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TermProbs {
    pub pp: f64,
    pub mp: f64,
    pub pm: f64,
    pub mm: f64,
}

impl TermProbs {
    pub fn get(&self, cell: Combo) -> f64 {
        match cell {
            Combo::PlusPlus => self.pp,
            Combo::MinusPlus => self.mp,
            Combo::PlusMinus => self.pm,
            Combo::MinusMinus => self.mm,
        }
    }

    pub fn total(&self) -> f64 {
        self.pp + self.mp + self.pm + self.mm
    }

    pub fn correlation(&self) -> f64 {
        (self.pp + self.mm - self.pm - self.mp) / self.total()
    }

    fn relabel(&self, f: impl Fn(Combo) -> Combo) -> TermProbs {
        TermProbs {
            pp: self.get(f(Combo::PlusPlus)),
            mp: self.get(f(Combo::MinusPlus)),
            pm: self.get(f(Combo::PlusMinus)),
            mm: self.get(f(Combo::MinusMinus)),
        }
    }
}

/// Joint probabilities for every chained term of an `n`-chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilitySet {
    n: usize,
    terms: BTreeMap<(usize, usize), TermProbs>,
}

impl ProbabilitySet {
    pub fn from_fn(n: usize, mut term: impl FnMut(usize, usize) -> TermProbs) -> Result<Self> {
        if n < 2 {
            return Err(Error::ChainTooShort { n });
        }
        let mut terms = BTreeMap::new();
        for (k, j) in chained_pairs(n) {
            let t = term(k, j);
            for cell in Combo::ALL {
                let p = t.get(cell);
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::InvalidValue {
                        name: "probability",
                        value: p,
                        expected: "within [0, 1]",
                    });
                }
            }
            terms.insert((k, j), t);
        }
        Ok(ProbabilitySet { n, terms })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn term(&self, alice: usize, bob: usize) -> Result<&TermProbs> {
        self.terms
            .get(&(alice, bob))
            .ok_or(Error::MissingTerm { alice, bob })
    }

    /// The same data with Alice's outcomes relabeled (`+ <-> -`), i.e. viewed
    /// from the frame where her phases are shifted by pi.
    pub fn with_alice_flipped(&self) -> ProbabilitySet {
        self.map_terms(|t| t.relabel(Combo::flip_alice))
    }

    /// As [`Self::with_alice_flipped`], for Bob.
    pub fn with_bob_flipped(&self) -> ProbabilitySet {
        self.map_terms(|t| t.relabel(Combo::flip_bob))
    }

    fn map_terms(&self, f: impl Fn(&TermProbs) -> TermProbs) -> ProbabilitySet {
        ProbabilitySet {
            n: self.n,
            terms: self.terms.iter().map(|(&key, t)| (key, f(t))).collect(),
        }
    }

    /// Correlations `pp + mm - pm - mp` per term, renormalized.
    pub fn correlations(&self) -> Result<CorrelationSet> {
        CorrelationSet::from_fn(self.n, |k, j| {
            self.terms[&(k, j)].correlation().clamp(-1.0, 1.0)
        })
    }
}

/// The CHSH combination `<A1B1> - <A2B2> + <A2B1> + <A1B2>` (N = 2 only).
pub fn chsh(correlations: &CorrelationSet) -> Result<f64> {
    if correlations.n() != 2 {
        return Err(Error::ChainTooShort {
            n: correlations.n(),
        });
    }
    Ok(correlations.get(1, 1)? - correlations.get(2, 2)?
        + correlations.get(2, 1)?
        + correlations.get(1, 2)?)
}

/// The chained statistic on an `n`-chain correlation set.
pub fn chained_chsh(correlations: &CorrelationSet) -> Result<f64> {
    let n = correlations.n();
    let mut s = correlations.get(n, n)?;
    for k in 2..=n {
        s += correlations.get(k, k - 1)? + correlations.get(k - 1, k)?;
    }
    s -= correlations.get(1, 1)?;
    Ok(s)
}

/// Which signed cell CH variant `variant` reads for the chained pair `(k, j)`.
///
/// Variant 1 reads `p(a_N b_N)`, `p(a_k bbar_{k-1})`, `p(abar_{k-1} b_k)` and
/// `p(a_1 b_1)`; the other variants apply the global relabelings (2: both
/// sides, 3: Bob, 4: Alice) to those cells.
pub fn ch_term_cell(variant: u8, n: usize, k: usize, j: usize) -> Combo {
    let base = if (k, j) == (n, n) || (k, j) == (1, 1) {
        Combo::PlusPlus
    } else if k == j + 1 {
        Combo::PlusMinus // p(a_k bbar_{k-1})
    } else {
        Combo::MinusPlus // p(abar_{k-1} b_k)
    };
    match variant {
        1 => base,
        2 => base.flip_alice().flip_bob(),
        3 => base.flip_bob(),
        4 => base.flip_alice(),
        _ => unreachable!("variant validated by callers"),
    }
}

/// Evaluate CH form `variant` (1..=4) on a probability set.
pub fn ch_form(probabilities: &ProbabilitySet, variant: u8) -> Result<f64> {
    if !(1..=4).contains(&variant) {
        return Err(Error::InvalidValue {
            name: "ch_form_variant",
            value: variant as f64,
            expected: "1..=4",
        });
    }
    let n = probabilities.n();
    let cell = |k: usize, j: usize| -> Result<f64> {
        Ok(probabilities
            .term(k, j)?
            .get(ch_term_cell(variant, n, k, j)))
    };
    let mut s = cell(n, n)?;
    for k in 2..=n {
        s -= cell(k, k - 1)? + cell(k - 1, k)?;
    }
    s -= cell(1, 1)?;
    Ok(s)
}

/// Reconstruct the chained CHSH statistic from the four per-frame CH values.
///
/// Inputs are `[S_CH1, S_CH2, S_CH3, S_CH4]` with variants 2 and 4 evaluated
/// in their pi-shifted frames (Bob- resp. Alice-relabeled data), as produced
/// by the analysis pipeline and as published in measured tables.
pub fn chsh_from_ch(ch_values: [f64; 4]) -> f64 {
    ch_values[0] - ch_values[1] - ch_values[2] + ch_values[3]
}

/// All bound families for an `n`-chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    /// Classical bound of the chained CHSH statistic, `2N - 2`.
    pub classical_chsh: f64,
    /// Time-bin LHV bound, `2N - 1`: average of the LL and EE bounds.
    pub timebin_chsh: f64,
    /// Trivial term-count bound governing the EE subensemble, `2N`.
    pub trivial_ee_chsh: f64,
    /// Time-bin CH interval `[3/4 - N, 1/4]`.
    pub ch_interval: (f64, f64),
    /// CH interval for the LL subensemble alone, `[1 - N, 0]`.
    pub ch_ll_interval: (f64, f64),
    /// Trivial CH interval for the EE subensemble, `[1/2 - N, 1/2]`.
    pub ch_ee_interval: (f64, f64),
}

/// Classical, time-bin and trivial bounds for the chained functionals.
pub fn bounds(n: usize) -> Result<Bounds> {
    if n < 2 {
        return Err(Error::ChainTooShort { n });
    }
    let nf = n as f64;
    Ok(Bounds {
        classical_chsh: 2.0 * nf - 2.0,
        timebin_chsh: 2.0 * nf - 1.0,
        trivial_ee_chsh: 2.0 * nf,
        ch_interval: (0.75 - nf, 0.25),
        ch_ll_interval: (1.0 - nf, 0.0),
        ch_ee_interval: (0.5 - nf, 0.5),
    })
}

/// Maximum of the chained statistic over all deterministic strategies,
/// enumerated exactly. Equals the classical bound `2n - 2`.
pub fn verify_classical_bound_by_enumeration(n: usize) -> Result<f64> {
    if !(2..=MAX_ENUMERATION_N).contains(&n) {
        return Err(Error::EnumerationOutOfRange {
            n,
            max: MAX_ENUMERATION_N,
        });
    }
    let pairs = chained_pairs(n);
    let strategies = 1u32 << n;
    let sign = |mask: u32, idx: usize| -> f64 {
        if mask >> (idx - 1) & 1 == 1 {
            1.0
        } else {
            -1.0
        }
    };
    let best = (0..strategies)
        .into_par_iter()
        .map(|a_mask| {
            let mut local_best = f64::NEG_INFINITY;
            for b_mask in 0..strategies {
                let mut s = 0.0;
                for (idx, &(k, j)) in pairs.iter().enumerate() {
                    let e = sign(a_mask, k) * sign(b_mask, j);
                    s += if idx == 2 * n - 1 { -e } else { e };
                }
                local_best = local_best.max(s);
            }
            local_best
        })
        .reduce(|| f64::NEG_INFINITY, f64::max);
    Ok(best)
}

/// A Bell statistic with its bounds and violation significance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BellReport {
    pub statistic: f64,
    pub lhv_bound: f64,
    pub classical_bound: f64,
    pub std_error: f64,
    pub violation_sigma: f64,
}

impl BellReport {
    pub fn csv_header() -> &'static str {
        "statistic,lhv_bound,classical_bound,std_error,violation_sigma"
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{:.6},{:.6},{:.6},{:.6},{:.3}",
            self.statistic,
            self.lhv_bound,
            self.classical_bound,
            self.std_error,
            self.violation_sigma
        )
    }
}

/// Violation report against an upper bound: `sigma = (statistic - bound) / err`.
pub fn report(
    statistic: f64,
    lhv_bound: f64,
    classical_bound: f64,
    std_error: f64,
) -> Result<BellReport> {
    if std_error.is_nan() || std_error <= 0.0 {
        return Err(Error::InvalidValue {
            name: "std_error",
            value: std_error,
            expected: "> 0",
        });
    }
    Ok(BellReport {
        statistic,
        lhv_bound,
        classical_bound,
        std_error,
        violation_sigma: (statistic - lhv_bound) / std_error,
    })
}

/// Violation report against a lower bound (sign-flipped significance).
pub fn report_lower(
    statistic: f64,
    lhv_bound: f64,
    classical_bound: f64,
    std_error: f64,
) -> Result<BellReport> {
    let mut r = report(statistic, lhv_bound, classical_bound, std_error)?;
    r.violation_sigma = (lhv_bound - statistic) / std_error;
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{qm_chained_ch, qm_chained_chsh};
    use crate::settings::optimal_chained_settings;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    /// Random no-signaling distribution: single-side marginals are drawn per
    /// setting and shared by every pair containing that setting, with each
    /// pair's joint drawn inside the Frechet bounds. Without the shared
    /// marginals the CH forms would not be four readings of one experiment.
    fn random_probability_set(n: usize, rng: &mut impl Rng) -> ProbabilitySet {
        let alice_marg: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
        let bob_marg: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
        ProbabilitySet::from_fn(n, |k, j| {
            let a = alice_marg[k - 1];
            let b = bob_marg[j - 1];
            let lo = (a + b - 1.0).max(0.0);
            let hi = a.min(b);
            let pp = lo + rng.gen::<f64>() * (hi - lo);
            TermProbs {
                pp,
                mp: b - pp,
                pm: a - pp,
                mm: 1.0 - a - b + pp,
            }
        })
        .unwrap()
    }

    fn qm_probability_set(n: usize, visibility: f64) -> ProbabilitySet {
        let settings = optimal_chained_settings(n).unwrap();
        ProbabilitySet::from_fn(n, |k, j| {
            let c = visibility
                * (settings.alice_phase(k).radians() + settings.bob_phase(j).radians()).cos();
            TermProbs {
                pp: (1.0 + c) / 4.0,
                mm: (1.0 + c) / 4.0,
                pm: (1.0 - c) / 4.0,
                mp: (1.0 - c) / 4.0,
            }
        })
        .unwrap()
    }

    #[test]
    fn chsh_examples() {
        let maximal = CorrelationSet::from_fn(2, |k, j| match (k, j) {
            (2, 2) => -1.0,
            _ => 1.0,
        })
        .unwrap();
        assert_abs_diff_eq!(chsh(&maximal).unwrap(), 4.0, epsilon = 1e-15);

        let zero = CorrelationSet::from_fn(2, |_, _| 0.0).unwrap();
        assert_abs_diff_eq!(chsh(&zero).unwrap(), 0.0, epsilon = 1e-15);

        // quantum optimum, with the index relabeling 1 <-> 2 that maps the
        // chained sign pattern onto the Eq-form CHSH
        let settings = optimal_chained_settings(2).unwrap();
        let qm = CorrelationSet::from_fn(2, |k, j| {
            (settings.alice_phase(3 - k).radians() + settings.bob_phase(3 - j).radians()).cos()
        })
        .unwrap();
        assert_abs_diff_eq!(chsh(&qm).unwrap(), 2.0 * 2.0_f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn chained_chsh_examples() {
        for n in [2, 3, 5] {
            let settings = optimal_chained_settings(n).unwrap();
            let qm = CorrelationSet::from_fn(n, |k, j| {
                (settings.alice_phase(k).radians() + settings.bob_phase(j).radians()).cos()
            })
            .unwrap();
            assert_abs_diff_eq!(
                chained_chsh(&qm).unwrap(),
                qm_chained_chsh(n).unwrap(),
                epsilon = 1e-12
            );
        }

        let extremal =
            CorrelationSet::from_fn(4, |k, j| if (k, j) == (1, 1) { -1.0 } else { 1.0 }).unwrap();
        assert_abs_diff_eq!(chained_chsh(&extremal).unwrap(), 8.0, epsilon = 1e-15);
    }

    #[test]
    fn ch_form_examples() {
        let qm3 = qm_probability_set(3, 1.0);
        assert_abs_diff_eq!(ch_form(&qm3, 1).unwrap(), 0.2990, epsilon = 1e-4);
        assert_abs_diff_eq!(
            ch_form(&qm3, 1).unwrap(),
            qm_chained_ch(3).unwrap(),
            epsilon = 1e-12
        );

        let qm5 = qm_probability_set(5, 1.0);
        assert_abs_diff_eq!(ch_form(&qm5, 1).unwrap(), 0.3776, epsilon = 1e-4);

        let zeros = ProbabilitySet::from_fn(3, |_, _| TermProbs {
            pp: 0.0,
            mp: 0.0,
            pm: 0.0,
            mm: 0.0,
        })
        .unwrap();
        for variant in 1..=4 {
            assert_abs_diff_eq!(ch_form(&zeros, variant).unwrap(), 0.0, epsilon = 1e-15);
        }
        assert!(ch_form(&qm3, 0).is_err());
        assert!(ch_form(&qm3, 5).is_err());
    }

    #[test]
    fn ch_variants_are_relabelings_of_variant_one() {
        let mut rng = crate::rng::substream(11, &[1]);
        for n in [2, 3, 5] {
            for _ in 0..20 {
                let p = random_probability_set(n, &mut rng);
                let s1 = ch_form(&p, 1).unwrap();
                assert_abs_diff_eq!(
                    ch_form(&p, 2).unwrap(),
                    ch_form(&p.with_alice_flipped().with_bob_flipped(), 1).unwrap(),
                    epsilon = 1e-12
                );
                assert_abs_diff_eq!(
                    ch_form(&p, 3).unwrap(),
                    ch_form(&p.with_bob_flipped(), 1).unwrap(),
                    epsilon = 1e-12
                );
                assert_abs_diff_eq!(
                    ch_form(&p, 4).unwrap(),
                    ch_form(&p.with_alice_flipped(), 1).unwrap(),
                    epsilon = 1e-12
                );
                // pointwise consequences on any true distribution
                assert_abs_diff_eq!(ch_form(&p, 2).unwrap(), s1, epsilon = 1e-12);
                assert_abs_diff_eq!(
                    ch_form(&p, 3).unwrap(),
                    -s1 - (n as f64 - 1.0),
                    epsilon = 1e-12
                );
                assert_abs_diff_eq!(
                    ch_form(&p, 4).unwrap(),
                    -s1 - (n as f64 - 1.0),
                    epsilon = 1e-12
                );
            }
        }
    }

    /// The per-frame CH rows as the pipeline produces them.
    fn per_frame_rows(p: &ProbabilitySet) -> [f64; 4] {
        [
            ch_form(p, 1).unwrap(),
            ch_form(&p.with_bob_flipped(), 2).unwrap(),
            ch_form(p, 3).unwrap(),
            ch_form(&p.with_alice_flipped(), 4).unwrap(),
        ]
    }

    #[test]
    fn chsh_from_ch_matches_canonical_statistic() {
        let mut rng = crate::rng::substream(23, &[2]);
        for n in [2, 3, 4, 5] {
            for _ in 0..100 {
                let p = random_probability_set(n, &mut rng);
                let canonical = chained_chsh(&p.correlations().unwrap()).unwrap();
                let via_ch = chsh_from_ch(per_frame_rows(&p));
                assert_abs_diff_eq!(via_ch, canonical, epsilon = 1e-12);
                let identity = 4.0 * ch_form(&p, 1).unwrap() + 2.0 * (n as f64 - 1.0);
                assert_abs_diff_eq!(via_ch, identity, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn chsh_from_ch_coefficients_are_the_unique_signs() {
        // Regression for the calibration that fixed the hard-coded signs:
        // among all +-1 combinations of the four per-frame rows, only
        // (+1, -1, -1, +1) reproduces the correlation-form statistic.
        let mut rng = crate::rng::substream(31, &[3]);
        let sets: Vec<ProbabilitySet> = (0..100)
            .map(|_| random_probability_set(3, &mut rng))
            .collect();
        let mut surviving: Vec<[i8; 4]> = all_sign_vectors();
        for p in &sets {
            let rows = per_frame_rows(p);
            let canonical = chained_chsh(&p.correlations().unwrap()).unwrap();
            surviving.retain(|c| {
                let combo: f64 = rows
                    .iter()
                    .zip(c.iter())
                    .map(|(r, &s)| r * f64::from(s))
                    .sum();
                (combo - canonical).abs() < 1e-9
            });
        }
        assert_eq!(surviving, vec![[1, -1, -1, 1]]);
    }

    fn all_sign_vectors() -> Vec<[i8; 4]> {
        let mut out = Vec::with_capacity(16);
        for bits in 0..16u8 {
            out.push([
                if bits & 1 == 0 { 1 } else { -1 },
                if bits & 2 == 0 { 1 } else { -1 },
                if bits & 4 == 0 { 1 } else { -1 },
                if bits & 8 == 0 { 1 } else { -1 },
            ]);
        }
        out
    }

    #[test]
    fn chsh_from_ch_reproduces_published_values() {
        // (S_CH1, S_CH2, S_CH3, S_CH4) -> S_CHSH, within input rounding
        let cases = [
            ([0.289, -2.335, -2.247, 0.293], 5.163),
            ([0.282, -3.299, -3.284, 0.302], 7.169),
            ([0.307, -4.304, -4.331, 0.327], 9.271),
        ];
        for (ch, expected) in cases {
            assert_abs_diff_eq!(chsh_from_ch(ch), expected, epsilon = 0.01);
        }

        // ideal per-frame rows at the quantum optimum reconstruct 2N cos(pi/2N)
        let qm4 = qm_probability_set(4, 1.0);
        assert_abs_diff_eq!(
            chsh_from_ch(per_frame_rows(&qm4)),
            qm_chained_chsh(4).unwrap(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(chsh_from_ch(per_frame_rows(&qm4)), 7.391, epsilon = 1e-3);
    }

    #[test]
    fn bounds_values() {
        let b2 = bounds(2).unwrap();
        assert_eq!(b2.timebin_chsh, 3.0);
        assert_eq!(b2.classical_chsh, 2.0);

        let b3 = bounds(3).unwrap();
        assert_eq!(b3.timebin_chsh, 5.0);
        assert_eq!(b3.classical_chsh, 4.0);

        let b5 = bounds(5).unwrap();
        assert_eq!(b5.ch_interval.1, 0.25);
        assert_eq!(b5.ch_interval.0, 0.75 - 5.0);

        assert!(bounds(1).is_err());

        // time-bin bounds are the average of the LL and EE bounds
        for n in 2..=8 {
            let b = bounds(n).unwrap();
            assert_abs_diff_eq!(
                b.timebin_chsh,
                (b.classical_chsh + b.trivial_ee_chsh) / 2.0,
                epsilon = 1e-15
            );
            assert_abs_diff_eq!(
                b.ch_interval.0,
                (b.ch_ll_interval.0 + b.ch_ee_interval.0) / 2.0,
                epsilon = 1e-15
            );
            assert_abs_diff_eq!(
                b.ch_interval.1,
                (b.ch_ll_interval.1 + b.ch_ee_interval.1) / 2.0,
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn quantum_violates_timebin_bound_iff_three_or_more() {
        for n in 2..=10 {
            let qm = qm_chained_chsh(n).unwrap();
            let b = bounds(n).unwrap();
            assert_eq!(qm > b.timebin_chsh, n >= 3, "n = {n}");
        }
    }

    #[test]
    fn enumeration_matches_classical_bound() {
        for n in 2..=5 {
            let max = verify_classical_bound_by_enumeration(n).unwrap();
            assert_eq!(max, 2.0 * n as f64 - 2.0, "n = {n}");
        }
        assert!(verify_classical_bound_by_enumeration(1).is_err());
        assert!(verify_classical_bound_by_enumeration(7).is_err());
    }

    #[test]
    fn report_examples() {
        let r = report(5.163, 5.0, 4.0, 0.033).unwrap();
        assert_abs_diff_eq!(r.violation_sigma, 4.94, epsilon = 0.01);

        let r = report(9.271, 9.0, 8.0, 0.031).unwrap();
        assert_abs_diff_eq!(r.violation_sigma, 8.74, epsilon = 0.01);

        let r = report(3.0, 3.0, 2.0, 0.1).unwrap();
        assert_abs_diff_eq!(r.violation_sigma, 0.0, epsilon = 1e-15);

        assert!(report(1.0, 1.0, 1.0, 0.0).is_err());
        assert!(report(1.0, 1.0, 1.0, -0.5).is_err());

        let low = report_lower(-2.335, -2.25, -2.0, 0.020).unwrap();
        assert_abs_diff_eq!(low.violation_sigma, 4.25, epsilon = 0.01);
    }

    #[test]
    fn missing_term_is_reported() {
        let set = CorrelationSet::from_fn(3, |_, _| 0.5).unwrap();
        assert!(matches!(
            set.get(3, 1),
            Err(Error::MissingTerm { alice: 3, bob: 1 })
        ));
    }

    #[test]
    fn report_serializes() {
        let r = report(5.163, 5.0, 4.0, 0.033).unwrap();
        let json = serde_json::to_string(&r).unwrap();
        let back: BellReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
        assert!(r.to_csv_row().starts_with("5.163"));
    }
}
