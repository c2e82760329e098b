//! Hedonic coalition formation.
//!
//! A node's payoff in a coalition is the sum over sources of the negative KL
//! distance between its fused posterior built from the working observations
//! and the same posterior built with the hold-out observations added, minus a
//! linear coordination cost. Payoffs depend only on coalition membership, so
//! the game is hedonic and every executed join strictly raises the social
//! welfare `sum_S v(S)`. The formation loop asserts that at runtime.
//!
//! [`PayoffModel`] abstracts the payoff function; [`NetworkEstimates`] is the
//! model built from the nodes' observations, and [`Formation`] runs the join
//! rule over any model with a per-coalition payoff cache.

use std::cell::{OnceCell, RefCell};
use std::collections::HashMap;
use std::fmt;
use std::rc::Rc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::bayes::{dp_posterior, fusion_weights, prior_passes, PriorBundle};
use crate::density::{kde_estimate, kl_divergence, DensityGrid, ObservationSet};
use crate::error::{Error, Result};
use crate::seed::{self, Purpose, SimRng};
use crate::{compensated_sum, NodeId, SourceId};

/// Joins allowed per node before formation is declared divergent.
pub const JOIN_CEILING_PER_NODE: usize = 50;

/// A set of node ids, kept sorted. The empty coalition stands for the
/// "go alone" target of the join rule.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Coalition(Vec<NodeId>);

impl Coalition {
    pub fn new(members: impl IntoIterator<Item = NodeId>) -> Result<Self> {
        let mut m: Vec<NodeId> = members.into_iter().collect();
        m.sort();
        let before = m.len();
        m.dedup();
        if m.len() != before {
            return Err(Error::invalid("coalition has duplicate members"));
        }
        Ok(Coalition(m))
    }

    pub fn empty() -> Self {
        Coalition(Vec::new())
    }

    pub fn singleton(node: NodeId) -> Self {
        Coalition(vec![node])
    }

    pub fn members(&self) -> &[NodeId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.0.binary_search(&node).is_ok()
    }

    pub fn with(&self, node: NodeId) -> Coalition {
        let mut m = self.0.clone();
        if let Err(pos) = m.binary_search(&node) {
            m.insert(pos, node);
        }
        Coalition(m)
    }

    pub fn without(&self, node: NodeId) -> Coalition {
        Coalition(self.0.iter().copied().filter(|&n| n != node).collect())
    }
}

impl fmt::Display for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ids: Vec<String> = self.0.iter().map(|n| n.0.to_string()).collect();
        write!(f, "{{{}}}", ids.join(","))
    }
}

/// Disjoint coalitions covering nodes `0..n_nodes`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    coalitions: Vec<Coalition>,
    n_nodes: usize,
}

impl Partition {
    pub fn new(coalitions: Vec<Coalition>, n_nodes: usize) -> Result<Self> {
        let p = Partition {
            coalitions,
            n_nodes,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn from_groups(groups: &[&[usize]], n_nodes: usize) -> Result<Self> {
        let coalitions = groups
            .iter()
            .map(|g| Coalition::new(g.iter().map(|&i| NodeId(i))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(coalitions, n_nodes)
    }

    pub fn singletons(n_nodes: usize) -> Self {
        Partition {
            coalitions: (0..n_nodes)
                .map(|i| Coalition::singleton(NodeId(i)))
                .collect(),
            n_nodes,
        }
    }

    pub fn grand(n_nodes: usize) -> Self {
        Partition {
            coalitions: vec![Coalition((0..n_nodes).map(NodeId).collect())],
            n_nodes,
        }
    }

    /// Checks that coalitions are nonempty, disjoint and cover every node.
    pub fn validate(&self) -> Result<()> {
        let mut seen = vec![false; self.n_nodes];
        for c in &self.coalitions {
            if c.is_empty() {
                return Err(Error::Invariant(
                    "partition contains an empty coalition".into(),
                ));
            }
            for &NodeId(i) in c.members() {
                if i >= self.n_nodes {
                    return Err(Error::Invariant(format!("node {i} out of range")));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(Error::Invariant(format!("node {i} in two coalitions")));
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Invariant(format!("node {i} not covered")));
        }
        Ok(())
    }

    pub fn coalitions(&self) -> &[Coalition] {
        &self.coalitions
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn len(&self) -> usize {
        self.coalitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coalitions.is_empty()
    }

    pub fn index_of(&self, node: NodeId) -> usize {
        self.coalitions
            .iter()
            .position(|c| c.contains(node))
            .expect("partition covers every node")
    }

    pub fn coalition_of(&self, node: NodeId) -> &Coalition {
        &self.coalitions[self.index_of(node)]
    }

    /// Moves `node` into the coalition at `target`, or into a new singleton
    /// when `target` is `None`. Emptied coalitions are dropped.
    pub fn move_node(&mut self, node: NodeId, target: Option<usize>) {
        let from = self.index_of(node);
        match target {
            Some(t) => self.coalitions[t] = self.coalitions[t].with(node),
            None => self.coalitions.push(Coalition::singleton(node)),
        }
        self.coalitions[from] = self.coalitions[from].without(node);
        self.coalitions.retain(|c| !c.is_empty());
    }

    /// Same partition with coalitions in sorted order.
    pub fn canonical(&self) -> Partition {
        let mut coalitions = self.coalitions.clone();
        coalitions.sort();
        Partition {
            coalitions,
            n_nodes: self.n_nodes,
        }
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.coalitions.iter().map(Coalition::len).collect()
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.coalitions.iter().map(ToString::to_string).collect();
        write!(f, "[{}]", parts.join(" "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GameParams {
    pub kappa: f64,
    pub eta: f64,
    pub n_check: usize,
    pub grid_size: usize,
}

impl Default for GameParams {
    fn default() -> Self {
        GameParams {
            kappa: 1e-3,
            eta: 0.05,
            n_check: crate::bayes::DEFAULT_N_CHECK,
            grid_size: crate::density::DEFAULT_GRID_SIZE,
        }
    }
}

impl GameParams {
    pub fn validate(&self) -> Result<()> {
        // kappa = 0 is allowed for analysis; the cost then vanishes.
        if !(self.kappa >= 0.0 && self.kappa <= 1.0) {
            return Err(Error::invalid(format!(
                "kappa {} outside [0, 1]",
                self.kappa
            )));
        }
        crate::stats::ks_critical(self.eta)?;
        if self.n_check < crate::stats::KS_MIN_SAMPLES {
            return Err(Error::InsufficientSamples {
                got: self.n_check,
                need: crate::stats::KS_MIN_SAMPLES,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffRecord {
    /// Per-source utility, indexed by source.
    pub per_source: Vec<f64>,
    pub cost: f64,
    pub total: f64,
}

impl PayoffRecord {
    pub fn new(per_source: Vec<f64>, cost: f64) -> Self {
        let total = compensated_sum(per_source.iter().copied()) - cost;
        PayoffRecord {
            per_source,
            cost,
            total,
        }
    }
}

/// `kappa * (size - 1)` for coalitions of two or more, zero otherwise.
pub fn coalition_cost(size: usize, kappa: f64) -> f64 {
    if size > 1 {
        kappa * (size - 1) as f64
    } else {
        0.0
    }
}

/// Hedonic payoff function: a node's payoff depends only on the members of
/// its coalition.
pub trait PayoffModel {
    fn n_nodes(&self) -> usize;

    /// Payoff of `node` in `coalition`, which must contain it.
    fn payoff(&self, node: NodeId, coalition: &Coalition) -> Result<PayoffRecord>;
}

/// Per-node estimates shared during formation.
#[derive(Debug, Clone)]
pub struct NodeEstimates {
    /// Working observation count per source.
    pub counts: Vec<usize>,
    /// Kernel estimate on the working observations, per source.
    pub working: Vec<DensityGrid>,
    /// Kernel estimate on working plus hold-out observations, per source.
    pub extended: Vec<DensityGrid>,
}

impl NodeEstimates {
    pub fn from_observations(obs: &[ObservationSet], grid_size: usize) -> Result<Self> {
        let mut counts = Vec::with_capacity(obs.len());
        let mut working = Vec::with_capacity(obs.len());
        let mut extended = Vec::with_capacity(obs.len());
        for o in obs {
            counts.push(o.len());
            working.push(kde_estimate(o.working(), grid_size)?);
            extended.push(kde_estimate(&o.extended(), grid_size)?);
        }
        Ok(NodeEstimates {
            counts,
            working,
            extended,
        })
    }
}

/// Everything agents can see: their own observations' estimates and the
/// estimates partners would share. Ground truth never enters here.
#[derive(Debug)]
pub struct NetworkEstimates {
    nodes: Vec<NodeEstimates>,
    n_sources: usize,
    params: GameParams,
    validation_seed: u64,
    passes: Vec<OnceCell<bool>>,
}

impl NetworkEstimates {
    pub fn new(
        nodes: Vec<NodeEstimates>,
        params: GameParams,
        validation_seed: u64,
    ) -> Result<Self> {
        params.validate()?;
        let n_sources = nodes.first().map_or(0, |n| n.counts.len());
        if n_sources == 0 {
            return Err(Error::invalid(
                "network needs at least one node and one source",
            ));
        }
        for n in &nodes {
            if n.counts.len() != n_sources
                || n.working.len() != n_sources
                || n.extended.len() != n_sources
            {
                return Err(Error::invalid("every node must cover every source"));
            }
            if n.counts.iter().any(|&c| c < 2) {
                return Err(Error::invalid("observation counts must be at least 2"));
            }
        }
        let n = nodes.len();
        Ok(NetworkEstimates {
            nodes,
            n_sources,
            params,
            validation_seed,
            passes: (0..n * n * n_sources).map(|_| OnceCell::new()).collect(),
        })
    }

    /// Builds estimates from `observations[node][source]`.
    pub fn from_observations(
        observations: &[Vec<ObservationSet>],
        params: GameParams,
        validation_seed: u64,
    ) -> Result<Self> {
        let nodes = observations
            .iter()
            .map(|o| NodeEstimates::from_observations(o, params.grid_size))
            .collect::<Result<Vec<_>>>()?;
        Self::new(nodes, params, validation_seed)
    }

    pub fn params(&self) -> &GameParams {
        &self.params
    }

    pub fn n_sources(&self) -> usize {
        self.n_sources
    }

    pub fn node(&self, node: NodeId) -> &NodeEstimates {
        &self.nodes[node.0]
    }

    /// Whether `node` accepts `partner`'s estimate of `source` as a prior.
    /// Each (node, partner, source) triple has its own seeded stream, so the
    /// outcome does not depend on which coalition asks.
    pub fn prior_valid(&self, node: NodeId, partner: NodeId, source: SourceId) -> Result<bool> {
        let n = self.nodes.len();
        let idx = (node.0 * n + partner.0) * self.n_sources + source.0;
        if let Some(&v) = self.passes[idx].get() {
            return Ok(v);
        }
        let mut rng = seed::rng(
            self.validation_seed,
            Purpose::Validation,
            &[node.0 as u64, partner.0 as u64, source.0 as u64],
        );
        let v = prior_passes(
            &self.nodes[node.0].working[source.0],
            &self.nodes[partner.0].working[source.0],
            self.params.eta,
            self.params.n_check,
            &mut rng,
        )?;
        Ok(*self.passes[idx].get_or_init(|| v))
    }

    /// Validated priors, fusion posterior on the working estimate and fusion
    /// posterior on the extended estimate for one node and source.
    pub fn posteriors(
        &self,
        node: NodeId,
        source: SourceId,
        coalition: &Coalition,
    ) -> Result<(DensityGrid, DensityGrid)> {
        let mine = &self.nodes[node.0];
        let mut priors = Vec::new();
        for &partner in coalition.members() {
            if partner != node && self.prior_valid(node, partner, source)? {
                let theirs = &self.nodes[partner.0];
                priors.push(PriorBundle {
                    source_node: partner,
                    source_count: theirs.counts[source.0],
                    density: &theirs.working[source.0],
                });
            }
        }
        let counts: Vec<(NodeId, usize)> = priors
            .iter()
            .map(|p| (p.source_node, p.source_count))
            .collect();
        let weights = fusion_weights(mine.counts[source.0], &counts)?;
        let a = dp_posterior(&mine.working[source.0], &priors, &weights)?;
        let b = dp_posterior(&mine.extended[source.0], &priors, &weights)?;
        Ok((a, b))
    }

    /// Negative KL distance between the working and extended posteriors.
    pub fn source_utility(
        &self,
        node: NodeId,
        source: SourceId,
        coalition: &Coalition,
    ) -> Result<f64> {
        if !coalition.contains(node) {
            return Err(Error::invalid(format!(
                "node {node} not in coalition {coalition}"
            )));
        }
        let (a, b) = self.posteriors(node, source, coalition)?;
        Ok(-kl_divergence(&a, &b)?)
    }

    /// Fused estimate the node would report inside `coalition`.
    pub fn cooperative_estimate(
        &self,
        node: NodeId,
        source: SourceId,
        coalition: &Coalition,
    ) -> Result<DensityGrid> {
        Ok(self.posteriors(node, source, coalition)?.0)
    }
}

impl PayoffModel for NetworkEstimates {
    fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    fn payoff(&self, node: NodeId, coalition: &Coalition) -> Result<PayoffRecord> {
        let per_source = (0..self.n_sources)
            .map(|k| self.source_utility(node, SourceId(k), coalition))
            .collect::<Result<Vec<_>>>()?;
        Ok(PayoffRecord::new(
            per_source,
            coalition_cost(coalition.len(), self.params.kappa),
        ))
    }
}

/// Order in which nodes take turns within a scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum JoinOrder {
    /// Ascending node id every scan.
    #[default]
    RoundRobin,
    /// A fresh seeded shuffle every scan.
    Random,
}

/// Which preferred target a node moves to on its turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum JoinPolicy {
    /// First strictly preferred target in partition order.
    #[default]
    FirstImprovement,
    /// Preferred target with the highest preference value.
    BestImprovement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JoinRecord {
    pub node: NodeId,
    pub from: Coalition,
    /// Coalition joined, empty when the node went alone.
    pub to: Coalition,
    pub welfare_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormationOutcome {
    pub partition: Partition,
    pub joins: Vec<JoinRecord>,
    pub joins_per_node: Vec<usize>,
    /// Full scans over all nodes, including the final scan without a join.
    pub iterations: usize,
    /// Social welfare before the first join and after each join.
    pub welfare: Vec<f64>,
}

/// Runs the join rule over a payoff model, caching payoffs per coalition.
pub struct Formation<'m, M: PayoffModel> {
    model: &'m M,
    caching: bool,
    cache: RefCell<HashMap<Coalition, Rc<Vec<f64>>>>,
}

impl<'m, M: PayoffModel> Formation<'m, M> {
    pub fn new(model: &'m M) -> Self {
        Formation {
            model,
            caching: true,
            cache: RefCell::new(HashMap::new()),
        }
    }

    /// Engine that recomputes every payoff on demand.
    pub fn uncached(model: &'m M) -> Self {
        Formation {
            caching: false,
            ..Self::new(model)
        }
    }

    pub fn model(&self) -> &M {
        self.model
    }

    /// Payoffs of every member of `coalition`, in member order.
    fn member_payoffs(&self, coalition: &Coalition) -> Result<Rc<Vec<f64>>> {
        if self.caching {
            if let Some(v) = self.cache.borrow().get(coalition) {
                return Ok(Rc::clone(v));
            }
        }
        let v = Rc::new(
            coalition
                .members()
                .iter()
                .map(|&j| Ok(self.model.payoff(j, coalition)?.total))
                .collect::<Result<Vec<_>>>()?,
        );
        if self.caching {
            self.cache
                .borrow_mut()
                .insert(coalition.clone(), Rc::clone(&v));
        }
        Ok(v)
    }

    /// `phi_node(coalition)`.
    pub fn payoff(&self, node: NodeId, coalition: &Coalition) -> Result<f64> {
        let pos = coalition
            .members()
            .iter()
            .position(|&m| m == node)
            .ok_or_else(|| Error::invalid(format!("node {node} not in coalition {coalition}")))?;
        Ok(self.member_payoffs(coalition)?[pos])
    }

    pub fn node_payoff(&self, node: NodeId, coalition: &Coalition) -> Result<PayoffRecord> {
        if !coalition.contains(node) {
            return Err(Error::invalid(format!(
                "node {node} not in coalition {coalition}"
            )));
        }
        self.model.payoff(node, coalition)
    }

    /// Coalition value `v(S)`, zero for the empty coalition.
    pub fn value(&self, coalition: &Coalition) -> Result<f64> {
        if coalition.is_empty() {
            return Ok(0.0);
        }
        Ok(compensated_sum(
            self.member_payoffs(coalition)?.iter().copied(),
        ))
    }

    /// The node's payoff in `coalition` if no other member loses by its
    /// presence, negative infinity otherwise.
    pub fn preference_value(&self, node: NodeId, coalition: &Coalition) -> Result<f64> {
        let with = self.member_payoffs(coalition)?;
        let rest = coalition.without(node);
        if rest.len() == coalition.len() {
            return Err(Error::invalid(format!(
                "node {node} not in coalition {coalition}"
            )));
        }
        if !rest.is_empty() {
            let without = self.member_payoffs(&rest)?;
            let harmed = coalition
                .members()
                .iter()
                .zip(with.iter())
                .filter(|(&m, _)| m != node)
                .zip(without.iter())
                .any(|((_, &w), &wo)| w < wo);
            if harmed {
                return Ok(f64::NEG_INFINITY);
            }
        }
        self.payoff(node, coalition)
    }

    /// Strict join rule: the node moves from `current` to `target` (empty for
    /// going alone) only if its preference value strictly rises and the two
    /// affected coalitions' combined value strictly rises.
    pub fn prefers_join(
        &self,
        node: NodeId,
        target: &Coalition,
        current: &Coalition,
    ) -> Result<bool> {
        if !current.contains(node) || target.contains(node) {
            return Err(Error::invalid(
                "join needs node in current and not in target",
            ));
        }
        if target.is_empty() && current.len() == 1 {
            return Ok(false);
        }
        let joined = target.with(node);
        let q_new = self.preference_value(node, &joined)?;
        if q_new == f64::NEG_INFINITY {
            return Ok(false);
        }
        let q_cur = self.preference_value(node, current)?;
        if !(q_new > q_cur) {
            return Ok(false);
        }
        let left = current.without(node);
        let after = self.value(&joined)? + self.value(&left)?;
        let before = self.value(target)? + self.value(current)?;
        Ok(after > before)
    }

    pub fn social_welfare(&self, p: &Partition) -> Result<f64> {
        let mut all = Vec::with_capacity(p.n_nodes());
        for c in p.coalitions() {
            all.extend(self.member_payoffs(c)?.iter().copied());
        }
        Ok(compensated_sum(all))
    }

    /// Candidate targets for `node`: each other coalition by index, then
    /// going alone (`None`) when the node is not already alone.
    fn candidates(p: &Partition, node: NodeId) -> Vec<Option<usize>> {
        let from = p.index_of(node);
        let mut c: Vec<Option<usize>> = (0..p.len()).filter(|&i| i != from).map(Some).collect();
        if p.coalitions()[from].len() > 1 {
            c.push(None);
        }
        c
    }

    fn target_of(p: &Partition, t: Option<usize>) -> Coalition {
        t.map_or_else(Coalition::empty, |i| p.coalitions()[i].clone())
    }

    /// Targets `node` strictly prefers over its current coalition.
    pub fn preferred_moves(&self, p: &Partition, node: NodeId) -> Result<Vec<Option<usize>>> {
        let current = p.coalition_of(node).clone();
        let mut out = Vec::new();
        for t in Self::candidates(p, node) {
            if self.prefers_join(node, &Self::target_of(p, t), &current)? {
                out.push(t);
            }
        }
        Ok(out)
    }

    fn choose_move(
        &self,
        p: &Partition,
        node: NodeId,
        policy: JoinPolicy,
    ) -> Result<Option<Option<usize>>> {
        let current = p.coalition_of(node).clone();
        let mut best: Option<(Option<usize>, f64)> = None;
        for t in Self::candidates(p, node) {
            let target = Self::target_of(p, t);
            if !self.prefers_join(node, &target, &current)? {
                continue;
            }
            match policy {
                JoinPolicy::FirstImprovement => return Ok(Some(t)),
                JoinPolicy::BestImprovement => {
                    let q = self.preference_value(node, &target.with(node))?;
                    if best.is_none_or(|(_, bq)| q > bq) {
                        best = Some((t, q));
                    }
                }
            }
        }
        Ok(best.map(|(t, _)| t))
    }

    /// True when no node strictly prefers another coalition or going alone.
    pub fn is_nash_stable(&self, p: &Partition) -> Result<bool> {
        for i in 0..p.n_nodes() {
            if !self.preferred_moves(p, NodeId(i))?.is_empty() {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Every profitable single-node deviation in `p`, as (node, target index
    /// or `None` for going alone).
    pub fn deviations(&self, p: &Partition) -> Result<Vec<(NodeId, Option<usize>)>> {
        let mut out = Vec::new();
        for i in 0..p.n_nodes() {
            for t in self.preferred_moves(p, NodeId(i))? {
                out.push((NodeId(i), t));
            }
        }
        Ok(out)
    }

    /// Scans nodes until a full scan executes no join.
    pub fn run(
        &self,
        initial: Partition,
        order: JoinOrder,
        policy: JoinPolicy,
        order_seed: u64,
    ) -> Result<FormationOutcome> {
        initial.validate()?;
        let n = initial.n_nodes();
        let ceiling = JOIN_CEILING_PER_NODE * n.max(1);
        let mut rng = SimRng::seed_from_u64(order_seed);
        let mut p = initial;
        let mut welfare = vec![self.social_welfare(&p)?];
        let mut joins = Vec::new();
        let mut joins_per_node = vec![0; n];
        let mut iterations = 0;
        let mut turn_order: Vec<NodeId> = (0..n).map(NodeId).collect();

        loop {
            iterations += 1;
            if order == JoinOrder::Random {
                turn_order.shuffle(&mut rng);
            }
            let mut moved = false;
            for &node in &turn_order {
                let Some(target) = self.choose_move(&p, node, policy)? else {
                    continue;
                };
                let from = p.coalition_of(node).clone();
                let to = Self::target_of(&p, target);
                p.move_node(node, target);
                p.validate()?;

                let w = self.social_welfare(&p)?;
                let prev = *welfare.last().expect("welfare starts non-empty");
                if !(w > prev) {
                    return Err(Error::Invariant(format!(
                        "social welfare did not increase on join of node {node}: {prev} -> {w}"
                    )));
                }
                welfare.push(w);
                joins_per_node[node.0] += 1;
                joins.push(JoinRecord {
                    node,
                    from,
                    to,
                    welfare_after: w,
                });
                if joins.len() > ceiling {
                    return Err(Error::Invariant(format!(
                        "formation exceeded {ceiling} joins without converging"
                    )));
                }
                moved = true;
            }
            if !moved {
                break;
            }
        }

        Ok(FormationOutcome {
            partition: p,
            joins,
            joins_per_node,
            iterations,
            welfare,
        })
    }
}

/// Formation from all singletons with the default order and policy.
pub fn run_formation<M: PayoffModel>(model: &M) -> Result<FormationOutcome> {
    Formation::new(model).run(
        Partition::singletons(model.n_nodes()),
        JoinOrder::RoundRobin,
        JoinPolicy::FirstImprovement,
        0,
    )
}

/// Payoff model backed by an explicit table, for constructed instances.
#[derive(Debug, Clone, Default)]
pub struct TablePayoffs {
    n_nodes: usize,
    table: HashMap<(NodeId, Coalition), f64>,
    /// Payoff for (node, coalition) pairs absent from the table.
    pub fallback: f64,
}

impl TablePayoffs {
    pub fn new(n_nodes: usize, fallback: f64) -> Self {
        TablePayoffs {
            n_nodes,
            table: HashMap::new(),
            fallback,
        }
    }

    pub fn set(&mut self, node: usize, members: &[usize], payoff: f64) -> &mut Self {
        let c = Coalition::new(members.iter().map(|&i| NodeId(i))).expect("unique members");
        self.table.insert((NodeId(node), c), payoff);
        self
    }
}

impl PayoffModel for TablePayoffs {
    fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    fn payoff(&self, node: NodeId, coalition: &Coalition) -> Result<PayoffRecord> {
        let total = self
            .table
            .get(&(node, coalition.clone()))
            .copied()
            .unwrap_or(self.fallback);
        Ok(PayoffRecord {
            per_source: vec![total],
            cost: 0.0,
            total,
        })
    }
}
