use proptest::prelude::*;
use rand::Rng;

use coopest_core::game::{
    run_formation, Coalition, Formation, GameParams, JoinOrder, JoinPolicy, NetworkEstimates,
    Partition, TablePayoffs,
};
use coopest_core::harness::{brute_force_deviations, ScenarioConfig, World};
use coopest_core::seed::{self, Purpose};
use coopest_core::world::{draw_observations, true_kl, BetaParams};
use coopest_core::{NodeId, SourceId};

/// Random hedonic game: every (node, coalition) payoff drawn up front.
fn random_table(n: usize, seed: u64) -> TablePayoffs {
    let mut rng = seed::rng(seed, Purpose::Deployment, &[]);
    let mut t = TablePayoffs::new(n, 0.0);
    for mask in 1u32..(1 << n) {
        let members: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        for &i in &members {
            // Coarse values make ties common.
            t.set(i, &members, f64::from(rng.random_range(-4i32..=4)) / 2.0);
        }
    }
    t
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn random_games_reach_enumerated_stability(n in 1usize..=6, seed in any::<u64>(), random_order in any::<bool>()) {
        let table = random_table(n, seed);
        let f = Formation::new(&table);
        let order = if random_order { JoinOrder::Random } else { JoinOrder::RoundRobin };
        let out = f.run(Partition::singletons(n), order, JoinPolicy::FirstImprovement, seed).unwrap();
        prop_assert!(out.welfare.windows(2).all(|w| w[1] > w[0]));
        prop_assert!(brute_force_deviations(&table, &out.partition).unwrap().is_empty());
        prop_assert!(f.is_nash_stable(&out.partition).unwrap());
        prop_assert_eq!(out.joins.len(), out.joins_per_node.iter().sum::<usize>());
    }

    #[test]
    fn engine_and_enumeration_agree_on_arbitrary_partitions(
        n in 2usize..=6,
        seed in any::<u64>(),
        labels in prop::collection::vec(0usize..6, 6),
    ) {
        let table = random_table(n, seed);
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); 6];
        for (i, &l) in labels.iter().take(n).enumerate() {
            groups[l].push(i);
        }
        let groups: Vec<&[usize]> = groups.iter().filter(|g| !g.is_empty()).map(Vec::as_slice).collect();
        let p = Partition::from_groups(&groups, n).unwrap();
        let f = Formation::uncached(&table);
        let mut engine = f.deviations(&p).unwrap();
        let mut brute = brute_force_deviations(&table, &p).unwrap();
        engine.sort();
        brute.sort();
        prop_assert_eq!(engine, brute);
    }
}

fn small_world(n: usize, seed: u64) -> (ScenarioConfig, NetworkEstimates) {
    let mut cfg = ScenarioConfig::default();
    cfg.seed = seed;
    cfg.network.n_nodes = n;
    let est = World::deploy(&cfg).unwrap().estimates(&cfg).unwrap();
    (cfg, est)
}

#[test]
fn caching_never_changes_results() {
    for seed in 0..15 {
        let (_, est) = small_world(9, seed);
        for order in [JoinOrder::RoundRobin, JoinOrder::Random] {
            let a = Formation::new(&est)
                .run(
                    Partition::singletons(9),
                    order,
                    JoinPolicy::FirstImprovement,
                    seed,
                )
                .unwrap();
            let b = Formation::uncached(&est)
                .run(
                    Partition::singletons(9),
                    order,
                    JoinPolicy::FirstImprovement,
                    seed,
                )
                .unwrap();
            assert_eq!(a, b, "seed {seed}");
        }
    }
}

#[test]
fn payoffs_depend_only_on_membership() {
    let (_, est) = small_world(6, 3);
    let c = Coalition::new([NodeId(1), NodeId(4), NodeId(2)]).unwrap();
    let f = Formation::uncached(&est);
    let first = f.payoff(NodeId(4), &c).unwrap();
    // Exercise other coalitions in between.
    for s in [vec![4], vec![4, 5], vec![0, 1, 2, 3, 4, 5]] {
        let s = Coalition::new(s.into_iter().map(NodeId)).unwrap();
        f.payoff(NodeId(4), &s).unwrap();
    }
    assert_eq!(f.payoff(NodeId(4), &c).unwrap(), first);
}

#[test]
fn every_policy_and_order_ends_stable() {
    for seed in 0..10 {
        let (_, est) = small_world(8, 100 + seed);
        let f = Formation::new(&est);
        for order in [JoinOrder::RoundRobin, JoinOrder::Random] {
            for policy in [JoinPolicy::FirstImprovement, JoinPolicy::BestImprovement] {
                let out = f
                    .run(Partition::singletons(8), order, policy, seed)
                    .unwrap();
                assert!(brute_force_deviations(&est, &out.partition)
                    .unwrap()
                    .is_empty());
            }
        }
    }
}

#[test]
fn formation_can_restart_from_any_partition() {
    let (_, est) = small_world(7, 42);
    let f = Formation::new(&est);
    let out = f
        .run(
            Partition::grand(7),
            JoinOrder::RoundRobin,
            JoinPolicy::FirstImprovement,
            0,
        )
        .unwrap();
    assert!(f.is_nash_stable(&out.partition).unwrap());
    assert!(out.welfare.last() >= out.welfare.first());
}

fn estimates_for(
    truths: &[Vec<(f64, f64)>],
    counts: &[Vec<usize>],
    seed: u64,
    params: GameParams,
) -> NetworkEstimates {
    let obs: Vec<Vec<_>> = truths
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(k, &(a, b))| {
                    let mut r = seed::rng(seed, Purpose::Observations, &[i as u64, k as u64]);
                    draw_observations(BetaParams::new(a, b).unwrap(), counts[i][k], 0.5, &mut r)
                        .unwrap()
                })
                .collect()
        })
        .collect();
    NetworkEstimates::from_observations(&obs, params, seed).unwrap()
}

#[test]
fn identical_pair_cooperates() {
    // Two nodes, one truth for all four sources, 20 observations each.
    let truths = vec![vec![(6.4288, 5.5712); 4]; 2];
    let counts = vec![vec![20; 4]; 2];
    let paired = (0..100)
        .filter(|&s| {
            let est = estimates_for(&truths, &counts, s, GameParams::default());
            run_formation(&est).unwrap().partition.len() == 1
        })
        .count();
    assert!(paired >= 90, "paired in {paired} of 100");
}

#[test]
fn dominating_price_keeps_everyone_alone() {
    for seed in 0..10 {
        let mut cfg = ScenarioConfig::default();
        cfg.seed = seed;
        cfg.network.n_nodes = 8;
        cfg.game.kappa = 1.0;
        let est = World::deploy(&cfg).unwrap().estimates(&cfg).unwrap();
        let out = run_formation(&est).unwrap();
        assert_eq!(out.partition.len(), 8);
        assert!(out.joins.is_empty());
        // The grand coalition is not stable at this price.
        let f = Formation::new(&est);
        assert!(!f.is_nash_stable(&Partition::grand(8)).unwrap());
    }
}

#[test]
fn zero_price_singleton_payoff_is_solo_utility() {
    let mut params = GameParams::default();
    params.kappa = 0.0;
    let est = estimates_for(&[vec![(3.0, 9.0), (8.0, 4.0)]], &[vec![12, 12]], 5, params);
    let f = Formation::new(&est);
    let alone = Coalition::singleton(NodeId(0));
    let want: f64 = (0..2)
        .map(|k| est.source_utility(NodeId(0), SourceId(k), &alone).unwrap())
        .sum();
    assert_eq!(f.payoff(NodeId(0), &alone).unwrap(), want);
}

/// Three nodes with the shapes of the snapshot coalition: the second node
/// sees the first source differently, and all see the second alike.
#[test]
fn snapshot_coalition_validation_pattern() {
    let truths = vec![
        vec![(4.71, 7.29), (8.21, 3.79)],
        vec![(3.72, 8.28), (8.23, 3.77)],
        vec![(4.6, 7.4), (8.27, 3.73)],
    ];
    let counts = vec![vec![10, 10], vec![8, 8], vec![20, 20]];
    let (mut odd_first, mut odd_second, mut alike_first, mut grand) = (0, 0, 0, 0);
    let mut coop_gain = 0.0;
    for s in 0..200 {
        let est = estimates_for(&truths, &counts, s, GameParams::default());
        odd_first += usize::from(est.prior_valid(NodeId(1), NodeId(0), SourceId(0)).unwrap());
        odd_second += usize::from(est.prior_valid(NodeId(1), NodeId(0), SourceId(1)).unwrap());
        alike_first += usize::from(est.prior_valid(NodeId(0), NodeId(2), SourceId(0)).unwrap());
        let out = run_formation(&est).unwrap();
        grand += usize::from(out.partition.len() == 1);
        let all = Coalition::new([NodeId(0), NodeId(1), NodeId(2)]).unwrap();
        let t = BetaParams::new(4.71, 7.29).unwrap();
        coop_gain += true_kl(&est.node(NodeId(0)).working[0], t).unwrap()
            - true_kl(
                &est.cooperative_estimate(NodeId(0), SourceId(0), &all)
                    .unwrap(),
                t,
            )
            .unwrap();
    }
    // Monte Carlo at these seeds: 32, 71, 88, 48 out of 200.
    assert!(odd_second > odd_first + 20, "{odd_second} vs {odd_first}");
    assert!(alike_first > odd_first + 20, "{alike_first} vs {odd_first}");
    assert!(grand > 20);
    assert!(coop_gain > 0.0, "mean gain {}", coop_gain / 200.0);
}
