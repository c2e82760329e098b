//! Cooperative nonparametric estimation of source activity distributions.
//!
//! Networked observer nodes each hold a handful of activity-probability
//! samples per source. They build kernel estimates, trade them as priors,
//! validate those priors with a two-sample KS test and fuse the survivors into
//! a Dirichlet-process predictive posterior. Who cooperates with whom is
//! settled by a hedonic coalition formation game whose stable outcome is a
//! Nash-stable partition.
//!
//! Modules, bottom up:
//! - [`density`]: grid densities, kernel estimation, sampling, KL divergence
//! - [`stats`]: empirical CDFs and the two-sample KS test
//! - [`bayes`]: prior validation and posterior fusion
//! - [`game`]: payoffs, preferences, the join rule and Nash stability
//! - [`world`]: hidden ground truths, propagation, observations, mobility
//! - [`harness`]: scenario configuration, runs, sweeps and metric files

// `!(x > y)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bayes;
pub mod density;
pub mod error;
pub mod game;
pub mod harness;
pub mod seed;
pub mod stats;
pub mod world;

pub use error::{Error, FieldError, Result};

use serde::{Deserialize, Serialize};

/// Index of an observer node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub usize);

/// Index of an observed source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SourceId(pub usize);

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Neumaier compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_cancelled_terms() {
        let v = [1.0, 1e100, 1.0, -1e100];
        assert_eq!(compensated_sum(v), 2.0);
        assert_eq!(compensated_sum(std::iter::empty()), 0.0);
    }
}
