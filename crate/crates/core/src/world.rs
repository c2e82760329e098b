//! Hidden ground truth and the radio environment.
//!
//! Each (node, source) pair sees a Beta activity distribution whose shape
//! follows from the source's duty cycle and from how often its signal clears
//! the detection threshold at the node. Nothing in here is visible to node
//! logic; the harness only uses it to draw observations and score estimates.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::density::{holdout_len, kl_divergence, DensityGrid, ObservationSet};
use crate::error::{Error, Result};
use crate::{NodeId, SourceId};

/// Distances below this many meters are treated as this distance.
pub const MIN_DISTANCE_M: f64 = 1.0;

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn kmh_to_ms(kmh: f64) -> f64 {
    kmh / 3.6
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub id: SourceId,
    pub position: Position,
    /// Transmit power in watts.
    pub power: f64,
    /// Fraction of slots the source transmits in.
    pub duty: f64,
    /// Meters per second, zero for a static source.
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: NodeId,
    pub position: Position,
}

/// Propagation constants, all linear.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadioParams {
    /// Noise power in watts.
    pub noise: f64,
    pub pathloss_exp: f64,
    /// Linear SNR threshold for a transmission to be seen.
    pub snr_threshold: f64,
    pub slots: u32,
}

impl RadioParams {
    pub fn from_db(noise_dbm: f64, pathloss_exp: f64, snr_threshold_db: f64, slots: u32) -> Self {
        RadioParams {
            noise: dbm_to_watts(noise_dbm),
            pathloss_exp,
            snr_threshold: db_to_linear(snr_threshold_db),
            slots,
        }
    }
}

/// Beta shape pair: `active - 1` and `idle - 1` count slots seen active and
/// idle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub active: f64,
    pub idle: f64,
}

impl BetaParams {
    pub fn new(active: f64, idle: f64) -> Result<Self> {
        if !(active > 0.0 && idle > 0.0 && active.is_finite() && idle.is_finite()) {
            return Err(Error::invalid(format!(
                "beta parameters ({active}, {idle}) must be positive"
            )));
        }
        Ok(BetaParams { active, idle })
    }

    pub fn mean(&self) -> f64 {
        self.active / (self.active + self.idle)
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        let ln_b = ln_gamma(self.active) + ln_gamma(self.idle) - ln_gamma(self.active + self.idle);
        let lo = if self.active == 1.0 {
            0.0
        } else {
            (self.active - 1.0) * x.ln()
        };
        let hi = if self.idle == 1.0 {
            0.0
        } else {
            (self.idle - 1.0) * (1.0 - x).ln()
        };
        lo + hi - ln_b
    }

    /// The density rendered on a grid. Shapes below one have unbounded
    /// endpoints; those are evaluated a quarter step inside the interval.
    pub fn grid(&self, grid_size: usize) -> Result<DensityGrid> {
        let step = 1.0 / (grid_size.max(2) - 1) as f64;
        let inset = 0.25 * step;
        DensityGrid::from_fn(grid_size, |x| {
            let x = if (x <= 0.0 && self.active < 1.0) || (x >= 1.0 && self.idle < 1.0) {
                x.clamp(inset, 1.0 - inset)
            } else {
                x
            };
            self.ln_pdf(x).exp()
        })
    }
}

/// Linear average SNR of `source` at `node`.
pub fn avg_snr(node: &NodeSpec, source: &SourceSpec, radio: &RadioParams) -> f64 {
    let d = node.position.distance(&source.position).max(MIN_DISTANCE_M);
    source.power * d.powf(-radio.pathloss_exp) / radio.noise
}

/// Probability that a transmission clears the threshold under Rayleigh fading.
pub fn activity_visibility(nu: f64, nu0: f64) -> f64 {
    (-nu0 / nu).exp()
}

/// Beta shapes for visibility `chi`, duty cycle `duty` and `slots` slots.
/// The active shape is snapped to a dyadic grid fine enough that
/// `active + idle == slots + 2` holds exactly in floating point.
pub fn beta_from_visibility(chi: f64, duty: f64, slots: u32) -> BetaParams {
    let b = f64::from(slots);
    let total = b + 2.0;
    let scale = 2f64.powi(50 - total.log2().ceil() as i32);
    let active = ((chi * duty * b + 1.0) * scale).round() / scale;
    BetaParams {
        active,
        idle: total - active,
    }
}

pub fn ground_truth_beta(node: &NodeSpec, source: &SourceSpec, radio: &RadioParams) -> BetaParams {
    let chi = activity_visibility(avg_snr(node, source, radio), radio.snr_threshold);
    beta_from_visibility(chi, source.duty, radio.slots)
}

/// Per-(node, source) ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// `params[node][source]`.
    pub params: Vec<Vec<BetaParams>>,
    /// `chi[node][source]`.
    pub chi: Vec<Vec<f64>>,
}

impl GroundTruth {
    pub fn generate(nodes: &[NodeSpec], sources: &[SourceSpec], radio: &RadioParams) -> Self {
        let mut params = Vec::with_capacity(nodes.len());
        let mut chi = Vec::with_capacity(nodes.len());
        for n in nodes {
            let c: Vec<f64> = sources
                .iter()
                .map(|s| activity_visibility(avg_snr(n, s, radio), radio.snr_threshold))
                .collect();
            params.push(
                c.iter()
                    .zip(sources)
                    .map(|(&chi, s)| beta_from_visibility(chi, s.duty, radio.slots))
                    .collect(),
            );
            chi.push(c);
        }
        GroundTruth { params, chi }
    }

    pub fn get(&self, node: NodeId, source: SourceId) -> BetaParams {
        self.params[node.0][source.0]
    }
}

/// `count` working draws and the matching hold-out draws from `truth`.
pub fn draw_observations<R: Rng + ?Sized>(
    truth: BetaParams,
    count: usize,
    delta: f64,
    rng: &mut R,
) -> Result<ObservationSet> {
    let working = draw_beta(truth, count, rng)?;
    let holdout = draw_beta(truth, holdout_len(delta, count), rng)?;
    ObservationSet::new(working, holdout, delta)
}

pub fn draw_beta<R: Rng + ?Sized>(
    truth: BetaParams,
    count: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let dist = Beta::new(truth.active, truth.idle)
        .map_err(|e| Error::invalid(format!("beta distribution: {e}")))?;
    Ok((0..count).map(|_| dist.sample(rng)).collect())
}

/// Folds a coordinate back into `[0, side]` by mirror reflection.
fn reflect(v: f64, side: f64) -> f64 {
    let period = 2.0 * side;
    let m = v.rem_euclid(period);
    if m > side {
        period - m
    } else {
        m
    }
}

/// Moves every mobile source `speed * dt` meters along a fresh uniform
/// heading, reflecting off the square arena's walls.
pub fn step_mobility<R: Rng + ?Sized>(
    sources: &mut [SourceSpec],
    arena_m: f64,
    dt: f64,
    rng: &mut R,
) {
    for s in sources.iter_mut().filter(|s| s.speed > 0.0) {
        let heading = rng.random_range(0.0..TAU);
        let step = s.speed * dt;
        s.position = Position {
            x: reflect(s.position.x + step * heading.cos(), arena_m),
            y: reflect(s.position.y + step * heading.sin(), arena_m),
        };
    }
}

/// `KL(truth || estimate)` with the truth rendered on the estimate's grid.
pub fn true_kl(estimate: &DensityGrid, truth: BetaParams) -> Result<f64> {
    kl_divergence(&truth.grid(estimate.grid_size())?, estimate)
}
