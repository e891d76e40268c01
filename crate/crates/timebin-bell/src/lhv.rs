//! A deterministic local model that reproduces the quantum time-bin table
//! under static settings.
//!
//! The hidden variable is `(theta, r_a, r_b, r_c, r_d)` with `theta` uniform
//! on `[0, 2pi)` and the `r` components uniform on `[0, 1)`. Interleaving the
//! digits of several uniform variates is measure-preserving, so this is the
//! same model class as a single `(theta, r)` pair; the extra components just
//! make the region geometry explicit:
//!
//! * Alice slots by `r_a` alone (`E` below 1/4, `M` in the middle half, `L`
//!   at or above 3/4). Her `M` sign follows `cos(theta + phi_A)`; `E`/`L`
//!   signs are a fair coin from `r_d`.
//! * Bob accepts `M` when `r_b <= (pi/4) |cos(phi_B - theta)|`, the amplitude
//!   `pi/4` chosen so his `M` probability averages to 1/2; his `M` sign
//!   follows `cos(phi_B - theta)`. Otherwise he reuses `r_a`: `E` below 1/2,
//!   `L` at or above, with the sign a fair coin from `r_c`.
//!
//! Sharing `r_a` between the two slot rules is what enforces the structural
//! zeros: Bob picks `E` only when `r_a < 1/2` while Alice picks `L` only when
//! `r_a >= 3/4`, so `L-E` (and symmetrically `E-L`) pairings never occur.
//! Bob's acceptance region moves with his own phase setting, which is exactly
//! the freedom the coincidence postselection fails to close.

use std::f64::consts::{FRAC_PI_4, TAU};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum::{JointOutcomeTable, Sign, Slot, SlotSign};
use crate::settings::Phase;

/// Identifier recorded in simulator output headers for provenance.
pub const LHV_MODEL_ID: &str = "lhv-theta-r4-v1";

/// Minimum grid resolution accepted by [`lhv_table_oracle`].
pub const MIN_ORACLE_RESOLUTION: usize = 64;

/// One sample of the local hidden variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HiddenVariable {
    pub theta: f64,
    pub r_a: f64,
    pub r_b: f64,
    pub r_c: f64,
    pub r_d: f64,
}

impl HiddenVariable {
    pub fn new(theta: f64, r_a: f64, r_b: f64, r_c: f64, r_d: f64) -> Self {
        HiddenVariable {
            theta,
            r_a,
            r_b,
            r_c,
            r_d,
        }
    }

    /// Draw uniformly from the hidden-variable space.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        HiddenVariable {
            theta: rng.gen::<f64>() * TAU,
            r_a: rng.gen(),
            r_b: rng.gen(),
            r_c: rng.gen(),
            r_d: rng.gen(),
        }
    }
}

fn coin(r: f64) -> Sign {
    if r < 0.5 {
        Sign::Plus
    } else {
        Sign::Minus
    }
}

/// Alice's deterministic outcome. Reads only her own phase.
pub fn alice_outcome(lambda: &HiddenVariable, alice_phase: Phase) -> SlotSign {
    if lambda.r_a < 0.25 {
        SlotSign::new(Slot::Early, coin(lambda.r_d))
    } else if lambda.r_a < 0.75 {
        let sign = Sign::of((lambda.theta + alice_phase.radians()).cos());
        SlotSign::new(Slot::Medium, sign)
    } else {
        SlotSign::new(Slot::Late, coin(lambda.r_d))
    }
}

/// Bob's deterministic outcome. Reads only his own phase.
pub fn bob_outcome(lambda: &HiddenVariable, bob_phase: Phase) -> SlotSign {
    let c = (bob_phase.radians() - lambda.theta).cos();
    if lambda.r_b <= FRAC_PI_4 * c.abs() {
        SlotSign::new(Slot::Medium, Sign::of(c))
    } else if lambda.r_a < 0.5 {
        SlotSign::new(Slot::Early, coin(lambda.r_c))
    } else {
        SlotSign::new(Slot::Late, coin(lambda.r_c))
    }
}

/// Joint table predicted by the model at fixed settings, by integration over
/// the hidden-variable space.
///
/// The `r` components integrate in closed form once `theta` is fixed, so only
/// the `theta` marginal is treated numerically: a uniform midpoint grid of
/// `resolution` cells, with cells split exactly at the sign boundaries of the
/// two strategies (where the integrand jumps or kinks). Error falls at least
/// linearly in `1/resolution`.
pub fn lhv_table_oracle(
    alice_phase: Phase,
    bob_phase: Phase,
    resolution: usize,
) -> Result<JointOutcomeTable> {
    if resolution < MIN_ORACLE_RESOLUTION {
        return Err(Error::ResolutionTooSmall {
            resolution,
            min: MIN_ORACLE_RESOLUTION,
        });
    }

    let phi_a = alice_phase.radians();
    let phi_b = bob_phase.radians();

    // Sign boundaries in theta: cos(theta + phi_a) = 0 and cos(phi_b - theta) = 0.
    let mut breaks: Vec<f64> = Vec::with_capacity(4);
    for half in [0.5, 1.5] {
        breaks.push(Phase::new(half * std::f64::consts::PI - phi_a).radians());
        breaks.push(Phase::new(phi_b - half * std::f64::consts::PI).radians());
    }
    breaks.sort_by(|x, y| x.partial_cmp(y).unwrap());

    let h = TAU / resolution as f64;
    let mut table = JointOutcomeTable::zero();
    let mut edges: Vec<f64> = Vec::with_capacity(8);
    for i in 0..resolution {
        let lo = i as f64 * h;
        let hi = lo + h;
        edges.clear();
        edges.push(lo);
        for &b in &breaks {
            if b > lo && b < hi {
                edges.push(b);
            }
        }
        edges.push(hi);
        edges.sort_by(|x, y| x.partial_cmp(y).unwrap());
        for w in edges.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b - a > 1e-15 {
                accumulate_theta_slice(&mut table, phi_a, phi_b, 0.5 * (a + b), (b - a) / TAU);
            }
        }
    }
    Ok(table)
}

/// Add the exact `r`-space cell masses at a fixed `theta`, scaled by `weight`.
fn accumulate_theta_slice(
    table: &mut JointOutcomeTable,
    phi_a: f64,
    phi_b: f64,
    theta: f64,
    weight: f64,
) {
    let ca = (theta + phi_a).cos();
    let cb = (phi_b - theta).cos();
    let q = FRAC_PI_4 * cb.abs(); // Bob's M acceptance at this theta
    let sa = Sign::of(ca);
    let sb = Sign::of(cb);

    let e = |s| SlotSign::new(Slot::Early, s);
    let m = |s| SlotSign::new(Slot::Medium, s);
    let l = |s| SlotSign::new(Slot::Late, s);

    table.add(m(sa), m(sb), weight * 0.5 * q);
    for s in Sign::ALL {
        // Alice M, Bob falling back: r_a in [1/4,1/2) -> E, [1/2,3/4) -> L.
        table.add(m(sa), e(s), weight * (1.0 - q) / 8.0);
        table.add(m(sa), l(s), weight * (1.0 - q) / 8.0);
        table.add(e(s), m(sb), weight * q / 8.0);
        table.add(l(s), m(sb), weight * q / 8.0);
        // A fallback Bob matches Alice's slot through the shared r_a: E with
        // E (r_a < 1/4), L with L (r_a >= 3/4); the cross corners stay empty.
        for s2 in Sign::ALL {
            table.add(e(s), e(s2), weight * (1.0 - q) / 16.0);
            table.add(l(s), l(s2), weight * (1.0 - q) / 16.0);
        }
    }
}

/// Monte Carlo estimate of the joint table with per-cell standard errors.
#[derive(Debug, Clone)]
pub struct McJointTable {
    pub probabilities: JointOutcomeTable,
    pub std_errors: JointOutcomeTable,
    pub samples: u64,
}

impl McJointTable {
    /// `|p_hat - expected|` in units of the standard error, per cell; cells
    /// with zero estimated variance compare exactly and report 0 or infinity.
    pub fn max_sigma_deviation(&self, expected: &JointOutcomeTable) -> f64 {
        let mut worst = 0.0_f64;
        for a in SlotSign::all() {
            for b in SlotSign::all() {
                let diff = (self.probabilities.get(a, b) - expected.get(a, b)).abs();
                let se = self.std_errors.get(a, b);
                if se > 0.0 {
                    worst = worst.max(diff / se);
                } else if diff > 0.0 {
                    return f64::INFINITY;
                }
            }
        }
        worst
    }
}

/// Frequency table from `samples` independent hidden-variable draws.
///
/// Batches run in parallel with per-batch substreams and merge by summation,
/// so the result is independent of thread count.
pub fn lhv_montecarlo_table(
    alice_phase: Phase,
    bob_phase: Phase,
    samples: u64,
    seed: u64,
) -> Result<McJointTable> {
    if samples == 0 {
        return Err(Error::InvalidValue {
            name: "samples",
            value: 0.0,
            expected: ">= 1",
        });
    }
    const BATCH: u64 = 1 << 18;
    let batches = samples.div_ceil(BATCH);
    let counts = (0..batches)
        .into_par_iter()
        .map(|batch| {
            let mut rng = crate::rng::substream(seed, &[0x1b5, batch]);
            let todo = BATCH.min(samples - batch * BATCH);
            let mut tally = [[0u64; SlotSign::COUNT]; SlotSign::COUNT];
            for _ in 0..todo {
                let lambda = HiddenVariable::sample(&mut rng);
                let a = alice_outcome(&lambda, alice_phase);
                let b = bob_outcome(&lambda, bob_phase);
                tally[a.index()][b.index()] += 1;
            }
            tally
        })
        .reduce(
            || [[0u64; SlotSign::COUNT]; SlotSign::COUNT],
            |mut acc, t| {
                for (row, trow) in acc.iter_mut().zip(t.iter()) {
                    for (cell, tcell) in row.iter_mut().zip(trow.iter()) {
                        *cell += tcell;
                    }
                }
                acc
            },
        );

    let n = samples as f64;
    let mut probabilities = JointOutcomeTable::zero();
    let mut std_errors = JointOutcomeTable::zero();
    for a in SlotSign::all() {
        for b in SlotSign::all() {
            let p = counts[a.index()][b.index()] as f64 / n;
            probabilities.set(a, b, p);
            std_errors.set(a, b, (p * (1.0 - p) / n).sqrt());
        }
    }
    Ok(McJointTable {
        probabilities,
        std_errors,
        samples,
    })
}
