//! Scenario configuration, the three-phase run, sweeps and metric files.
//!
//! A run deploys nodes and sources, draws each node's observations and kernel
//! estimates (monitoring), forms coalitions from all singletons (formation),
//! and scores the fused and the solo estimates against the hidden truth
//! (estimation). With mobility configured, sources then move every `dt_s`
//! seconds; nodes that detect a change in what they observe replace their
//! observations and the network re-enters formation from its current
//! partition.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{holdout_len, ObservationSet};
use crate::error::{Error, FieldError, Result};
use crate::game::{
    Coalition, Formation, GameParams, JoinOrder, JoinPolicy, NetworkEstimates, Partition,
    PayoffModel,
};
use crate::seed::{self, Purpose};
use crate::stats::ks_two_sample_test;
use crate::world::{
    draw_beta, draw_observations, kmh_to_ms, step_mobility, true_kl, GroundTruth, NodeSpec,
    Position, RadioParams, SourceSpec,
};
use crate::{compensated_sum, NodeId, SourceId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    /// Side of the square deployment area in meters.
    pub arena_m: f64,
    pub n_nodes: usize,
    pub n_sources: usize,
    pub obs_min: usize,
    pub obs_max: usize,
    pub delta: f64,
    pub duty_min: f64,
    pub duty_max: f64,
}

impl Default for NetworkSection {
    fn default() -> Self {
        NetworkSection {
            arena_m: 2000.0,
            n_nodes: 30,
            n_sources: 4,
            obs_min: 5,
            obs_max: 20,
            delta: 0.5,
            duty_min: 0.4,
            duty_max: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioSection {
    pub power_w: f64,
    pub noise_dbm: f64,
    pub pathloss_exp: f64,
    pub snr_threshold_db: f64,
    pub slots: u32,
}

impl Default for RadioSection {
    fn default() -> Self {
        RadioSection {
            power_w: 0.1,
            noise_dbm: -90.0,
            pathloss_exp: 3.0,
            snr_threshold_db: 10.0,
            slots: 10,
        }
    }
}

impl RadioSection {
    pub fn params(&self) -> RadioParams {
        RadioParams::from_db(
            self.noise_dbm,
            self.pathloss_exp,
            self.snr_threshold_db,
            self.slots,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GameSection {
    pub kappa: f64,
    pub eta: f64,
    pub n_check: usize,
    pub grid_size: usize,
    pub join_order: JoinOrder,
    pub join_policy: JoinPolicy,
}

impl Default for GameSection {
    fn default() -> Self {
        let g = GameParams::default();
        GameSection {
            kappa: g.kappa,
            eta: g.eta,
            n_check: g.n_check,
            grid_size: g.grid_size,
            join_order: JoinOrder::RoundRobin,
            join_policy: JoinPolicy::FirstImprovement,
        }
    }
}

impl GameSection {
    pub fn params(&self) -> GameParams {
        GameParams {
            kappa: self.kappa,
            eta: self.eta,
            n_check: self.n_check,
            grid_size: self.grid_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MobilitySection {
    pub speed_kmh: f64,
    pub dt_s: f64,
    pub duration_s: f64,
}

impl Default for MobilitySection {
    fn default() -> Self {
        MobilitySection {
            speed_kmh: 10.0,
            dt_s: 60.0,
            duration_s: 300.0,
        }
    }
}

impl MobilitySection {
    pub fn epochs(&self) -> usize {
        (self.duration_s / self.dt_s + 1e-9).floor() as usize
    }
}

/// Full description of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    /// Replicates per simulate call or sweep point.
    pub runs: usize,
    pub network: NetworkSection,
    pub radio: RadioSection,
    pub game: GameSection,
    pub mobility: Option<MobilitySection>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 1,
            runs: 50,
            network: NetworkSection::default(),
            radio: RadioSection::default(),
            game: GameSection::default(),
            mobility: None,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(s).map_err(|e| {
            Error::Config(vec![FieldError {
                field: "<document>".into(),
                reason: e.message().to_string(),
            }])
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks every field, reporting all offenders at once.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let mut bad = |field: &str, reason: String| {
            errs.push(FieldError {
                field: field.into(),
                reason,
            })
        };
        let n = &self.network;
        if !(n.arena_m > 0.0 && n.arena_m.is_finite()) {
            bad("network.arena_m", format!("{} must be positive", n.arena_m));
        }
        if n.n_nodes < 1 {
            bad("network.n_nodes", "must be at least 1".into());
        }
        if n.n_sources < 1 {
            bad("network.n_sources", "must be at least 1".into());
        }
        if n.obs_min < 2 {
            bad("network.obs_min", format!("{} is below 2", n.obs_min));
        }
        if n.obs_min > n.obs_max {
            bad(
                "network.obs_max",
                format!("{} is below obs_min {}", n.obs_max, n.obs_min),
            );
        }
        if !(n.delta > 0.0 && n.delta <= 1.0) {
            bad("network.delta", format!("{} outside (0, 1]", n.delta));
        }
        for (field, v) in [
            ("network.duty_min", n.duty_min),
            ("network.duty_max", n.duty_max),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                bad(field, format!("{v} outside (0, 1]"));
            }
        }
        if n.duty_min > n.duty_max {
            bad("network.duty_max", "below duty_min".into());
        }

        let r = &self.radio;
        if !(r.power_w > 0.0) {
            bad("radio.power_w", "must be positive".into());
        }
        if !r.noise_dbm.is_finite() {
            bad("radio.noise_dbm", "must be finite".into());
        }
        if !(r.pathloss_exp > 0.0) {
            bad("radio.pathloss_exp", "must be positive".into());
        }
        if !r.snr_threshold_db.is_finite() {
            bad("radio.snr_threshold_db", "must be finite".into());
        }
        if r.slots < 1 {
            bad("radio.slots", "must be at least 1".into());
        }

        let g = &self.game;
        if !(g.kappa >= 0.0 && g.kappa <= 1.0) {
            bad("game.kappa", format!("{} outside [0, 1]", g.kappa));
        }
        if !(g.eta > 0.0 && g.eta < 1.0) {
            bad("game.eta", format!("{} outside (0, 1)", g.eta));
        }
        if g.n_check < crate::stats::KS_MIN_SAMPLES {
            bad(
                "game.n_check",
                format!("{} is below {}", g.n_check, crate::stats::KS_MIN_SAMPLES),
            );
        }
        if g.grid_size < crate::density::MIN_GRID_SIZE {
            bad(
                "game.grid_size",
                format!("{} is below {}", g.grid_size, crate::density::MIN_GRID_SIZE),
            );
        }
        if self.runs < 1 {
            bad("runs", "must be at least 1".into());
        }

        if let Some(m) = &self.mobility {
            if !(m.speed_kmh >= 0.0 && m.speed_kmh.is_finite()) {
                bad("mobility.speed_kmh", "must be nonnegative".into());
            }
            if !(m.dt_s > 0.0) {
                bad("mobility.dt_s", "must be positive".into());
            }
            if !(m.duration_s >= 0.0) {
                bad("mobility.duration_s", "must be nonnegative".into());
            }
            if n.obs_min < crate::stats::KS_MIN_SAMPLES {
                bad(
                    "network.obs_min",
                    format!(
                        "change detection needs at least {} observations",
                        crate::stats::KS_MIN_SAMPLES
                    ),
                );
            }
        }

        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        ScenarioConfig {
            seed,
            ..self.clone()
        }
    }
}

/// Deployed nodes and sources with their hidden truth and current
/// observations.
#[derive(Debug, Clone)]
pub struct World {
    pub nodes: Vec<NodeSpec>,
    pub sources: Vec<SourceSpec>,
    pub radio: RadioParams,
    pub truth: GroundTruth,
    /// `counts[node][source]`: working observation counts.
    pub counts: Vec<Vec<usize>>,
    /// `observations[node][source]`.
    pub observations: Vec<Vec<ObservationSet>>,
}

impl World {
    /// Monitoring phase: deployment, ground truth and first observations.
    pub fn deploy(cfg: &ScenarioConfig) -> Result<Self> {
        let net = &cfg.network;
        let side = net.arena_m;
        let mut rng = seed::rng(cfg.seed, Purpose::Deployment, &[]);
        let pos = |rng: &mut seed::SimRng| Position {
            x: rng.random_range(0.0..side),
            y: rng.random_range(0.0..side),
        };
        let nodes: Vec<NodeSpec> = (0..net.n_nodes)
            .map(|i| NodeSpec {
                id: NodeId(i),
                position: pos(&mut rng),
            })
            .collect();
        let speed = cfg
            .mobility
            .as_ref()
            .map_or(0.0, |m| kmh_to_ms(m.speed_kmh));
        let sources: Vec<SourceSpec> = (0..net.n_sources)
            .map(|k| SourceSpec {
                id: SourceId(k),
                position: pos(&mut rng),
                power: cfg.radio.power_w,
                duty: if net.duty_min == net.duty_max {
                    net.duty_min
                } else {
                    rng.random_range(net.duty_min..=net.duty_max)
                },
                speed,
            })
            .collect();
        let radio = cfg.radio.params();
        let truth = GroundTruth::generate(&nodes, &sources, &radio);

        let counts: Vec<Vec<usize>> = (0..net.n_nodes)
            .map(|i| {
                (0..net.n_sources)
                    .map(|k| {
                        let mut r =
                            seed::rng(cfg.seed, Purpose::ObservationCount, &[i as u64, k as u64]);
                        r.random_range(net.obs_min..=net.obs_max)
                    })
                    .collect()
            })
            .collect();
        let observations = (0..net.n_nodes)
            .map(|i| {
                (0..net.n_sources)
                    .map(|k| {
                        let mut r =
                            seed::rng(cfg.seed, Purpose::Observations, &[0, i as u64, k as u64]);
                        draw_observations(truth.params[i][k], counts[i][k], net.delta, &mut r)
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(World {
            nodes,
            sources,
            radio,
            truth,
            counts,
            observations,
        })
    }

    /// Agent-visible estimates built from the current observations.
    pub fn estimates(&self, cfg: &ScenarioConfig) -> Result<NetworkEstimates> {
        NetworkEstimates::from_observations(
            &self.observations,
            cfg.game.params(),
            seed::derive(cfg.seed, Purpose::Validation, &[]),
        )
    }
}

/// Mean true KL of the fused and the solo estimates over every node and
/// source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlScore {
    pub cooperative: f64,
    pub non_cooperative: f64,
}

/// Scores a partition against `truth`. The solo baseline uses exactly the
/// observations behind the fused estimates.
pub fn evaluate(
    est: &NetworkEstimates,
    partition: &Partition,
    truth: &GroundTruth,
) -> Result<KlScore> {
    let mut coop = Vec::new();
    let mut solo = Vec::new();
    for c in partition.coalitions() {
        for &i in c.members() {
            for k in 0..est.n_sources() {
                let t = truth.get(i, SourceId(k));
                coop.push(true_kl(&est.cooperative_estimate(i, SourceId(k), c)?, t)?);
                solo.push(true_kl(&est.node(i).working[k], t)?);
            }
        }
    }
    let n = coop.len() as f64;
    Ok(KlScore {
        cooperative: compensated_sum(coop) / n,
        non_cooperative: compensated_sum(solo) / n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub time_s: f64,
    /// Nodes that replaced at least one observation set this epoch.
    pub changed_nodes: usize,
    pub joins: usize,
    pub coop_kl: f64,
    pub noncoop_kl: f64,
    pub n_coalitions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobilityMetrics {
    pub speed_kmh: f64,
    /// Joins executed after the initial formation.
    pub joins: usize,
    pub joins_per_minute: f64,
    pub epochs: Vec<EpochMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub n_nodes: usize,
    pub n_sources: usize,
    pub kappa: f64,
    /// Averaged over every evaluation point (one without mobility).
    pub coop_kl_mean: f64,
    pub noncoop_kl_mean: f64,
    pub improvement_pct: f64,
    pub n_coalitions: usize,
    pub coalition_size_mean: f64,
    pub coalition_size_max: usize,
    pub joins_total: usize,
    pub joins_per_node: Vec<usize>,
    pub joins_per_node_mean: f64,
    /// Scans until the initial formation converged.
    pub iterations: usize,
    pub welfare_trajectory: Vec<f64>,
    pub welfare_final: f64,
    pub partition: Partition,
    pub mobility: Option<MobilityMetrics>,
}

fn improvement(coop: f64, solo: f64) -> f64 {
    if solo > 0.0 {
        100.0 * (solo - coop) / solo
    } else {
        0.0
    }
}

/// Runs one replicate with `cfg.seed`.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunMetrics> {
    cfg.validate()?;
    let mut world = World::deploy(cfg)?;
    let n = cfg.network.n_nodes;
    let order = cfg.game.join_order;
    let policy = cfg.game.join_policy;

    let est = world.estimates(cfg)?;
    let formation = Formation::new(&est);
    let outcome = formation.run(
        Partition::singletons(n),
        order,
        policy,
        seed::derive(cfg.seed, Purpose::JoinOrder, &[0]),
    )?;
    let mut score = evaluate(&est, &outcome.partition, &world.truth)?;
    let mut partition = outcome.partition.clone();
    let mut joins_per_node = outcome.joins_per_node.clone();
    let mut welfare_final = *outcome.welfare.last().expect("nonempty welfare");

    let mobility = match &cfg.mobility {
        None => None,
        Some(m) => {
            let mut est = est;
            let mut coop_sum = vec![score.cooperative];
            let mut solo_sum = vec![score.non_cooperative];
            let mut epochs = Vec::new();
            let mut mobile_joins = 0;
            for e in 1..=m.epochs() {
                let mut rng = seed::rng(cfg.seed, Purpose::Mobility, &[e as u64]);
                step_mobility(&mut world.sources, cfg.network.arena_m, m.dt_s, &mut rng);
                world.truth = GroundTruth::generate(&world.nodes, &world.sources, &world.radio);
                let changed = detect_and_refresh(cfg, &mut world, e)?;

                let mut joins = 0;
                if changed > 0 {
                    est = world.estimates(cfg)?;
                    let f = Formation::new(&est);
                    let out = f.run(
                        partition.clone(),
                        order,
                        policy,
                        seed::derive(cfg.seed, Purpose::JoinOrder, &[e as u64]),
                    )?;
                    joins = out.joins.len();
                    for (total, j) in joins_per_node.iter_mut().zip(&out.joins_per_node) {
                        *total += j;
                    }
                    welfare_final = *out.welfare.last().expect("nonempty welfare");
                    partition = out.partition;
                }
                mobile_joins += joins;
                let s = evaluate(&est, &partition, &world.truth)?;
                coop_sum.push(s.cooperative);
                solo_sum.push(s.non_cooperative);
                epochs.push(EpochMetrics {
                    time_s: e as f64 * m.dt_s,
                    changed_nodes: changed,
                    joins,
                    coop_kl: s.cooperative,
                    noncoop_kl: s.non_cooperative,
                    n_coalitions: partition.len(),
                });
            }
            let points = coop_sum.len() as f64;
            score = KlScore {
                cooperative: compensated_sum(coop_sum) / points,
                non_cooperative: compensated_sum(solo_sum) / points,
            };
            let minutes = m.duration_s / 60.0;
            Some(MobilityMetrics {
                speed_kmh: m.speed_kmh,
                joins: mobile_joins,
                joins_per_minute: if minutes > 0.0 {
                    mobile_joins as f64 / minutes
                } else {
                    0.0
                },
                epochs,
            })
        }
    };

    let sizes = partition.sizes();
    let joins_total: usize = joins_per_node.iter().sum();
    Ok(RunMetrics {
        seed: cfg.seed,
        n_nodes: n,
        n_sources: cfg.network.n_sources,
        kappa: cfg.game.kappa,
        coop_kl_mean: score.cooperative,
        noncoop_kl_mean: score.non_cooperative,
        improvement_pct: improvement(score.cooperative, score.non_cooperative),
        n_coalitions: partition.len(),
        coalition_size_mean: n as f64 / partition.len() as f64,
        coalition_size_max: sizes.iter().copied().max().unwrap_or(0),
        joins_total,
        joins_per_node_mean: joins_total as f64 / n as f64,
        joins_per_node,
        iterations: outcome.iterations,
        welfare_trajectory: outcome.welfare,
        welfare_final,
        partition,
        mobility,
    })
}

/// Each node draws a fresh batch for every source and KS-tests it against
/// its working set; on rejection the fresh batch becomes the working set and
/// a new hold-out is drawn. Returns the number of nodes that changed.
fn detect_and_refresh(cfg: &ScenarioConfig, world: &mut World, epoch: usize) -> Result<usize> {
    let delta = cfg.network.delta;
    let mut changed = 0;
    for i in 0..world.nodes.len() {
        let mut any = false;
        for k in 0..world.sources.len() {
            let truth = world.truth.params[i][k];
            let count = world.counts[i][k];
            let ids = [epoch as u64, i as u64, k as u64];
            let fresh = draw_beta(
                truth,
                count,
                &mut seed::rng(cfg.seed, Purpose::ChangeDetection, &ids),
            )?;
            let test =
                ks_two_sample_test(&fresh, world.observations[i][k].working(), cfg.game.eta)?;
            if !test.accepted {
                let holdout = draw_beta(
                    truth,
                    holdout_len(delta, count),
                    &mut seed::rng(cfg.seed, Purpose::Refresh, &ids),
                )?;
                world.observations[i][k] = ObservationSet::new(fresh, holdout, delta)?;
                any = true;
            }
        }
        changed += usize::from(any);
    }
    Ok(changed)
}

/// Parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    NNodes,
    Kappa,
    Speed,
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n_nodes" => Ok(SweepAxis::NNodes),
            "kappa" => Ok(SweepAxis::Kappa),
            "speed" => Ok(SweepAxis::Speed),
            other => Err(Error::invalid(format!(
                "unknown sweep axis {other:?} (expected n_nodes, kappa or speed)"
            ))),
        }
    }
}

impl SweepAxis {
    /// Config with this axis set to `value`.
    pub fn apply(&self, cfg: &ScenarioConfig, value: f64) -> Result<ScenarioConfig> {
        let mut c = cfg.clone();
        match self {
            SweepAxis::NNodes => {
                if !(value >= 1.0 && value.fract() == 0.0) {
                    return Err(Error::invalid(format!(
                        "n_nodes value {value} is not a positive integer"
                    )));
                }
                c.network.n_nodes = value as usize;
            }
            SweepAxis::Kappa => c.game.kappa = value,
            SweepAxis::Speed => {
                c.mobility
                    .get_or_insert_with(MobilitySection::default)
                    .speed_kmh = value
            }
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis_value: Option<f64>,
    pub run: usize,
    pub metrics: RunMetrics,
}

/// Mean and standard error of one metric over replicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub stderr: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        let n = values.len() as f64;
        if values.is_empty() {
            return Stat {
                mean: f64::NAN,
                stderr: f64::NAN,
            };
        }
        let mean = compensated_sum(values.iter().copied()) / n;
        let stderr = if values.len() > 1 {
            let ss = compensated_sum(values.iter().map(|v| (v - mean).powi(2)));
            (ss / (n - 1.0)).sqrt() / n.sqrt()
        } else {
            0.0
        };
        Stat { mean, stderr }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub axis_value: Option<f64>,
    pub runs: usize,
    pub coop_kl_mean: Stat,
    pub noncoop_kl_mean: Stat,
    pub improvement_pct: Stat,
    /// `100 * (1 - mean coop / mean solo)` over the replicates.
    pub pooled_improvement_pct: f64,
    pub n_coalitions: Stat,
    pub coalition_size_mean: Stat,
    pub coalition_size_max: Stat,
    pub joins_total: Stat,
    pub joins_per_node_mean: Stat,
    pub iterations: Stat,
    pub welfare_final: Stat,
    pub joins_per_minute: Option<Stat>,
}

impl Aggregate {
    pub fn of(axis_value: Option<f64>, runs: &[&RunMetrics]) -> Aggregate {
        let stat = |f: &dyn Fn(&RunMetrics) -> f64| {
            Stat::of(&runs.iter().map(|m| f(m)).collect::<Vec<_>>())
        };
        let coop = stat(&|m| m.coop_kl_mean);
        let solo = stat(&|m| m.noncoop_kl_mean);
        let per_minute: Vec<f64> = runs
            .iter()
            .filter_map(|m| m.mobility.as_ref().map(|x| x.joins_per_minute))
            .collect();
        Aggregate {
            axis_value,
            runs: runs.len(),
            coop_kl_mean: coop,
            noncoop_kl_mean: solo,
            improvement_pct: stat(&|m| m.improvement_pct),
            pooled_improvement_pct: improvement(coop.mean, solo.mean),
            n_coalitions: stat(&|m| m.n_coalitions as f64),
            coalition_size_mean: stat(&|m| m.coalition_size_mean),
            coalition_size_max: stat(&|m| m.coalition_size_max as f64),
            joins_total: stat(&|m| m.joins_total as f64),
            joins_per_node_mean: stat(&|m| m.joins_per_node_mean),
            iterations: stat(&|m| m.iterations as f64),
            welfare_final: stat(&|m| m.welfare_final),
            joins_per_minute: (per_minute.len() == runs.len() && !runs.is_empty())
                .then(|| Stat::of(&per_minute)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SweepTable {
    pub axis: Option<SweepAxis>,
    pub rows: Vec<SweepRow>,
    pub aggregates: Vec<Aggregate>,
}

/// Replicate `r` of a config uses seed `cfg.seed + r`.
pub fn replicate_seed(base: u64, run: usize) -> u64 {
    base.wrapping_add(run as u64)
}

fn run_points(
    points: &[(Option<f64>, ScenarioConfig)],
    axis: Option<SweepAxis>,
) -> Result<SweepTable> {
    let jobs: Vec<(usize, usize)> = points
        .iter()
        .enumerate()
        .flat_map(|(p, (_, c))| (0..c.runs).map(move |r| (p, r)))
        .collect();
    let results: Vec<Result<RunMetrics>> = jobs
        .par_iter()
        .map(|&(p, r)| {
            let cfg = &points[p].1;
            run_scenario(&cfg.with_seed(replicate_seed(cfg.seed, r)))
        })
        .collect();

    let mut rows = Vec::with_capacity(jobs.len());
    for (&(p, r), res) in jobs.iter().zip(results) {
        rows.push(SweepRow {
            axis_value: points[p].0,
            run: r,
            metrics: res?,
        });
    }
    let aggregates = points
        .iter()
        .enumerate()
        .map(|(p, (v, _))| {
            let runs: Vec<&RunMetrics> = rows
                .iter()
                .zip(&jobs)
                .filter(|(_, &(q, _))| q == p)
                .map(|(row, _)| &row.metrics)
                .collect();
            Aggregate::of(*v, &runs)
        })
        .collect();
    Ok(SweepTable {
        axis,
        rows,
        aggregates,
    })
}

/// `cfg.runs` replicates of a single configuration.
pub fn simulate(cfg: &ScenarioConfig) -> Result<SweepTable> {
    cfg.validate()?;
    run_points(&[(None, cfg.clone())], None)
}

/// `cfg.runs` replicates at every value of `axis`.
pub fn sweep(cfg: &ScenarioConfig, axis: SweepAxis, values: &[f64]) -> Result<SweepTable> {
    if values.is_empty() {
        return Err(Error::invalid("sweep needs at least one value"));
    }
    let points = values
        .iter()
        .map(|&v| Ok((Some(v), axis.apply(cfg, v)?)))
        .collect::<Result<Vec<_>>>()?;
    run_points(&points, Some(axis))
}

/// Output format for metric tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::invalid(format!(
                "unknown format {other:?} (expected csv or json)"
            ))),
        }
    }
}

pub const CSV_HEADER: &str = "axis_value,run,seed,n_nodes,n_sources,kappa,coop_kl_mean,noncoop_kl_mean,improvement_pct,n_coalitions,coalition_size_mean,coalition_size_max,joins_total,joins_per_node_mean,iterations,welfare_final";

/// Rounds to 6 significant digits.
pub fn round_sig6(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.5e}").parse().expect("formatted float parses")
}

/// One per-run line of a metric file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub axis_value: Option<f64>,
    pub run: usize,
    pub seed: u64,
    pub n_nodes: usize,
    pub n_sources: usize,
    pub kappa: f64,
    pub coop_kl_mean: f64,
    pub noncoop_kl_mean: f64,
    pub improvement_pct: f64,
    pub n_coalitions: usize,
    pub coalition_size_mean: f64,
    pub coalition_size_max: usize,
    pub joins_total: usize,
    pub joins_per_node_mean: f64,
    pub iterations: usize,
    pub welfare_final: f64,
}

impl MetricsRecord {
    pub fn from_row(row: &SweepRow) -> Self {
        let m = &row.metrics;
        MetricsRecord {
            axis_value: row.axis_value.map(round_sig6),
            run: row.run,
            seed: m.seed,
            n_nodes: m.n_nodes,
            n_sources: m.n_sources,
            kappa: round_sig6(m.kappa),
            coop_kl_mean: round_sig6(m.coop_kl_mean),
            noncoop_kl_mean: round_sig6(m.noncoop_kl_mean),
            improvement_pct: round_sig6(m.improvement_pct),
            n_coalitions: m.n_coalitions,
            coalition_size_mean: round_sig6(m.coalition_size_mean),
            coalition_size_max: m.coalition_size_max,
            joins_total: m.joins_total,
            joins_per_node_mean: round_sig6(m.joins_per_node_mean),
            iterations: m.iterations,
            welfare_final: round_sig6(m.welfare_final),
        }
    }

    fn csv_line(&self) -> String {
        let f = |x: f64| format!("{x}");
        [
            self.axis_value.map(f).unwrap_or_default(),
            self.run.to_string(),
            self.seed.to_string(),
            self.n_nodes.to_string(),
            self.n_sources.to_string(),
            f(self.kappa),
            f(self.coop_kl_mean),
            f(self.noncoop_kl_mean),
            f(self.improvement_pct),
            self.n_coalitions.to_string(),
            f(self.coalition_size_mean),
            self.coalition_size_max.to_string(),
            self.joins_total.to_string(),
            f(self.joins_per_node_mean),
            self.iterations.to_string(),
            f(self.welfare_final),
        ]
        .join(",")
    }
}

pub fn records(table: &SweepTable) -> Vec<MetricsRecord> {
    table.rows.iter().map(MetricsRecord::from_row).collect()
}

/// Renders the per-run rows of a table.
pub fn render_metrics(table: &SweepTable, format: Format) -> String {
    let recs = records(table);
    match format {
        Format::Csv => {
            let mut out = String::from(CSV_HEADER);
            out.push('\n');
            for r in &recs {
                out.push_str(&r.csv_line());
                out.push('\n');
            }
            out
        }
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&recs).expect("records serialize");
            s.push('\n');
            s
        }
    }
}

pub fn emit_metrics(table: &SweepTable, path: &Path, format: Format) -> Result<()> {
    fs::write(path, render_metrics(table, format)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses a CSV file produced by [`emit_metrics`].
pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricsRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::invalid("unexpected metrics header"));
    }
    let bad = |what: &str| Error::invalid(format!("malformed metrics field {what}"));
    lines
        .map(|line| {
            let c: Vec<&str> = line.split(',').collect();
            if c.len() != 16 {
                return Err(Error::invalid(format!(
                    "expected 16 fields, got {}",
                    c.len()
                )));
            }
            let fl = |i: usize| c[i].parse::<f64>().map_err(|_| bad(c[i]));
            let int = |i: usize| c[i].parse::<usize>().map_err(|_| bad(c[i]));
            Ok(MetricsRecord {
                axis_value: if c[0].is_empty() { None } else { Some(fl(0)?) },
                run: int(1)?,
                seed: c[2].parse().map_err(|_| bad(c[2]))?,
                n_nodes: int(3)?,
                n_sources: int(4)?,
                kappa: fl(5)?,
                coop_kl_mean: fl(6)?,
                noncoop_kl_mean: fl(7)?,
                improvement_pct: fl(8)?,
                n_coalitions: int(9)?,
                coalition_size_mean: fl(10)?,
                coalition_size_max: int(11)?,
                joins_total: int(12)?,
                joins_per_node_mean: fl(13)?,
                iterations: int(14)?,
                welfare_final: fl(15)?,
            })
        })
        .collect()
}

/// Human-readable aggregate table.
pub fn render_summary(table: &SweepTable) -> String {
    let mut out = String::new();
    let axis = match table.axis {
        Some(SweepAxis::NNodes) => "n_nodes",
        Some(SweepAxis::Kappa) => "kappa",
        Some(SweepAxis::Speed) => "speed_kmh",
        None => "-",
    };
    let _ = writeln!(
        out,
        "{axis:>10} {:>5} {:>12} {:>12} {:>8} {:>9} {:>9} {:>10} {:>8} {:>11}",
        "runs",
        "coop_kl",
        "solo_kl",
        "impr%",
        "size",
        "max_size",
        "joins/node",
        "iters",
        "joins/min"
    );
    for a in &table.aggregates {
        let _ = writeln!(
            out,
            "{:>10} {:>5} {:>12.5} {:>12.5} {:>8.2} {:>9.3} {:>9.3} {:>10.3} {:>8.2} {:>11}",
            a.axis_value.map_or("-".to_string(), |v| format!("{v}")),
            a.runs,
            a.coop_kl_mean.mean,
            a.noncoop_kl_mean.mean,
            a.pooled_improvement_pct,
            a.coalition_size_mean.mean,
            a.coalition_size_max.mean,
            a.joins_per_node_mean.mean,
            a.iterations.mean,
            a.joins_per_minute
                .map_or("-".to_string(), |s| format!("{:.3}", s.mean)),
        );
    }
    out
}

/// Largest network the stability check enumerates.
pub const STABILITY_MAX_NODES: usize = 8;

/// Every (node, target) deviation of `p` that the join rule would take,
/// recomputed from raw payoffs without the formation engine. `None` is going
/// alone.
pub fn brute_force_deviations<M: PayoffModel>(
    model: &M,
    p: &Partition,
) -> Result<Vec<(NodeId, Option<usize>)>> {
    let phi = |j: NodeId, s: &Coalition| -> Result<f64> { Ok(model.payoff(j, s)?.total) };
    let v = |s: &Coalition| -> Result<f64> {
        let mut terms = Vec::new();
        for &j in s.members() {
            terms.push(phi(j, s)?);
        }
        Ok(compensated_sum(terms))
    };
    let q = |i: NodeId, s: &Coalition| -> Result<f64> {
        let rest = s.without(i);
        for &j in rest.members() {
            if phi(j, s)? < phi(j, &rest)? {
                return Ok(f64::NEG_INFINITY);
            }
        }
        phi(i, s)
    };

    let mut out = Vec::new();
    for i in (0..p.n_nodes()).map(NodeId) {
        let from = p.index_of(i);
        let current = &p.coalitions()[from];
        let mut targets: Vec<Option<usize>> =
            (0..p.len()).filter(|&t| t != from).map(Some).collect();
        if current.len() > 1 {
            targets.push(None);
        }
        for t in targets {
            let target = t.map_or_else(Coalition::empty, |t| p.coalitions()[t].clone());
            let joined = target.with(i);
            let q_new = q(i, &joined)?;
            if !(q_new > q(i, current)?) {
                continue;
            }
            if v(&joined)? + v(&current.without(i))? > v(&target)? + v(current)? {
                out.push((i, t));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub partition: Partition,
    pub iterations: usize,
    pub joins: usize,
    /// Verdict of the formation engine.
    pub nash_stable: bool,
    pub brute_force_deviations: Vec<(NodeId, Option<usize>)>,
}

impl StabilityReport {
    /// Engine and enumeration agree and both find no deviation.
    pub fn passed(&self) -> bool {
        self.nash_stable && self.brute_force_deviations.is_empty()
    }
}

/// Runs formation on the deployed network and verifies the result by
/// enumeration.
pub fn stability_check(cfg: &ScenarioConfig) -> Result<StabilityReport> {
    cfg.validate()?;
    if cfg.network.n_nodes > STABILITY_MAX_NODES {
        return Err(Error::Config(vec![FieldError {
            field: "network.n_nodes".into(),
            reason: format!(
                "{} exceeds {STABILITY_MAX_NODES}, the largest network checked by enumeration",
                cfg.network.n_nodes
            ),
        }]));
    }
    let world = World::deploy(cfg)?;
    let est = world.estimates(cfg)?;
    let formation = Formation::new(&est);
    let out = formation.run(
        Partition::singletons(cfg.network.n_nodes),
        cfg.game.join_order,
        cfg.game.join_policy,
        seed::derive(cfg.seed, Purpose::JoinOrder, &[0]),
    )?;
    let nash_stable = formation.is_nash_stable(&out.partition)?;
    let brute = brute_force_deviations(&est, &out.partition)?;
    if nash_stable != brute.is_empty() {
        return Err(Error::Invariant(format!(
            "stability verdicts disagree on {}: engine {nash_stable}, enumeration found {} deviations",
            out.partition,
            brute.len()
        )));
    }
    Ok(StabilityReport {
        partition: out.partition,
        iterations: out.iterations,
        joins: out.joins.len(),
        nash_stable,
        brute_force_deviations: brute,
    })
}
