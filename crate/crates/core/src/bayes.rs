//! Prior validation and Dirichlet-process fusion of validated priors.
//!
//! A node receives its partners' kernel estimates as candidate priors, keeps
//! those that pass a two-sample KS test against its own estimate, and forms
//! the predictive posterior as a convex combination of the kept priors and its
//! own estimate. Weights are proportional to the observation counts behind
//! each estimate and are renormalized over the kept set, so the posterior is
//! always a density. The concentration parameters never have to be formed:
//! with count-proportional weights they are a reparameterization of the
//! weights themselves.

use std::collections::BTreeMap;

use rand::Rng;

use crate::density::{mix, sample_density, DensityGrid};
use crate::error::{Error, Result};
use crate::stats::{ks_two_sample_test, KS_MIN_SAMPLES};
use crate::NodeId;

/// Default number of samples drawn per side for prior validation.
pub const DEFAULT_N_CHECK: usize = 100;

/// A partner's kernel estimate offered as a prior.
#[derive(Debug, Clone, Copy)]
pub struct PriorBundle<'a> {
    pub source_node: NodeId,
    /// Observations behind the estimate.
    pub source_count: usize,
    pub density: &'a DensityGrid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionWeights {
    pub own: f64,
    pub partners: BTreeMap<NodeId, f64>,
}

impl FusionWeights {
    /// Weights that reproduce the node's own estimate.
    pub fn solo() -> Self {
        FusionWeights {
            own: 1.0,
            partners: BTreeMap::new(),
        }
    }

    pub fn total(&self) -> f64 {
        self.own + self.partners.values().sum::<f64>()
    }
}

/// Does one KS check of `prior` against `own`, drawing `n_check` fresh
/// samples from each.
pub fn prior_passes<R: Rng + ?Sized>(
    own: &DensityGrid,
    prior: &DensityGrid,
    eta: f64,
    n_check: usize,
    rng: &mut R,
) -> Result<bool> {
    let mine = sample_density(own, n_check, rng);
    let theirs = sample_density(prior, n_check, rng);
    Ok(ks_two_sample_test(&mine, &theirs, eta)?.accepted)
}

/// Keeps the priors whose samples are KS-compatible with samples of the
/// node's own estimate. Priors are tested in input order from one stream.
pub fn validate_priors<'a, R: Rng + ?Sized>(
    own_density: &DensityGrid,
    priors: &[PriorBundle<'a>],
    eta: f64,
    n_check: usize,
    rng: &mut R,
) -> Result<Vec<PriorBundle<'a>>> {
    if n_check < KS_MIN_SAMPLES {
        return Err(Error::InsufficientSamples {
            got: n_check,
            need: KS_MIN_SAMPLES,
        });
    }
    let mut kept = Vec::new();
    for prior in priors {
        if prior_passes(own_density, prior.density, eta, n_check, rng)? {
            kept.push(*prior);
        }
    }
    Ok(kept)
}

/// Count-proportional weights, normalized over the node and its validated
/// partners only.
pub fn fusion_weights(own_count: usize, validated: &[(NodeId, usize)]) -> Result<FusionWeights> {
    if own_count < 2 {
        return Err(Error::invalid(format!(
            "own observation count {own_count} below 2"
        )));
    }
    let total = (own_count + validated.iter().map(|(_, c)| c).sum::<usize>()) as f64;
    let partners = validated
        .iter()
        .map(|&(id, c)| (id, c as f64 / total))
        .collect();
    Ok(FusionWeights {
        own: own_count as f64 / total,
        partners,
    })
}

/// Predictive posterior: weighted mix of the own estimate and the validated
/// priors.
pub fn dp_posterior(
    own_density: &DensityGrid,
    validated_priors: &[PriorBundle<'_>],
    weights: &FusionWeights,
) -> Result<DensityGrid> {
    if validated_priors.len() != weights.partners.len()
        || validated_priors
            .iter()
            .any(|p| !weights.partners.contains_key(&p.source_node))
    {
        return Err(Error::invalid(
            "fusion weights are not keyed by the validated priors",
        ));
    }
    if validated_priors.is_empty() {
        return Ok(own_density.clone());
    }
    let mut components = vec![own_density];
    let mut w = vec![weights.own];
    for (id, &wl) in &weights.partners {
        let prior = validated_priors
            .iter()
            .find(|p| p.source_node == *id)
            .expect("keys checked above");
        components.push(prior.density);
        w.push(wl);
    }
    mix(&components, &w)
}
