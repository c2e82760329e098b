use coopest_core::harness::{
    replicate_seed, run_scenario, simulate, sweep, MobilitySection, ScenarioConfig, SweepAxis,
};

fn cfg(n: usize) -> ScenarioConfig {
    let mut c = ScenarioConfig::default();
    c.network.n_nodes = n;
    c.runs = 3;
    c
}

#[test]
fn runs_are_reproducible() {
    let mut c = cfg(10);
    c.mobility = Some(MobilitySection {
        speed_kmh: 60.0,
        ..MobilitySection::default()
    });
    assert_eq!(run_scenario(&c).unwrap(), run_scenario(&c).unwrap());
}

#[test]
fn sweep_rows_match_single_runs() {
    let c = cfg(6);
    let t = sweep(&c, SweepAxis::Kappa, &[0.001, 0.02]).unwrap();
    assert_eq!(t.rows.len(), 6);
    for row in &t.rows {
        let mut single = c.with_seed(replicate_seed(c.seed, row.run));
        single.game.kappa = row.axis_value.unwrap();
        assert_eq!(row.metrics, run_scenario(&single).unwrap());
    }
}

#[test]
fn simulate_aggregates_its_rows() {
    let t = simulate(&cfg(8)).unwrap();
    let a = &t.aggregates[0];
    assert_eq!(a.runs, 3);
    let mean = t.rows.iter().map(|r| r.metrics.coop_kl_mean).sum::<f64>() / 3.0;
    assert!((a.coop_kl_mean.mean - mean).abs() < 1e-12);
    assert!(a.joins_per_minute.is_none());
}

#[test]
fn solo_baseline_never_depends_on_formation() {
    // Turning cooperation off through the price leaves the solo score alone.
    let mut c = cfg(12);
    let base = run_scenario(&c).unwrap();
    c.game.kappa = 1.0;
    let alone = run_scenario(&c).unwrap();
    assert_eq!(base.noncoop_kl_mean, alone.noncoop_kl_mean);
    assert_eq!(alone.coop_kl_mean, alone.noncoop_kl_mean);
    assert_eq!(alone.improvement_pct, 0.0);
}

#[test]
fn mobility_bookkeeping() {
    let mut c = cfg(7);
    c.mobility = Some(MobilitySection {
        speed_kmh: 100.0,
        dt_s: 60.0,
        duration_s: 300.0,
    });
    let m = run_scenario(&c).unwrap();
    let mob = m.mobility.as_ref().unwrap();
    assert_eq!(mob.epochs.len(), 5);
    assert_eq!(mob.joins, mob.epochs.iter().map(|e| e.joins).sum::<usize>());
    assert!((mob.joins_per_minute - mob.joins as f64 / 5.0).abs() < 1e-12);
    assert_eq!(m.joins_total, m.joins_per_node.iter().sum::<usize>());
    assert!(m.partition.validate().is_ok());
}

#[test]
fn mobility_needs_enough_observations_for_ks() {
    let mut c = cfg(4);
    c.network.obs_min = 3;
    c.mobility = Some(MobilitySection::default());
    assert!(run_scenario(&c).is_err());
}
