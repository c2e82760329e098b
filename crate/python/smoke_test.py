"""Smoke test for the coopest extension module.

Build and install first, e.g.

    cd crates/python && maturin develop --release
"""

import json
import math

import coopest


def check_densities():
    flat = coopest.DensityGrid.uniform(512)
    assert abs(flat.integral() - 1.0) < 1e-9
    bell = coopest.DensityGrid([6 * x * (1 - x) for x in (j / 511 for j in range(512))])
    kl = coopest.kl_divergence(bell, flat)
    assert abs(kl - (math.log(6) - 5 / 3)) < 2e-3, kl

    est = coopest.kde_estimate([0.1, 0.2, 0.4, 0.7, 0.9])
    assert abs(est.values()[0] - 1.2784330354150957) < 1e-9
    half = coopest.mix([est, flat], [0.5, 0.5])
    assert abs(half.integral() - 1.0) < 1e-6

    xs = coopest.sample_density(bell, 2000, seed=7)
    assert all(0.0 <= x <= 1.0 for x in xs)
    assert abs(sum(xs) / len(xs) - 0.5) < 0.03
    assert xs == coopest.sample_density(bell, 2000, seed=7)


def check_ks():
    assert coopest.ks_statistic([0.1, 0.2, 0.3], [0.7, 0.8, 0.9]) == 1.0
    assert abs(coopest.ks_critical(0.05) - 1.3581015157406195) < 1e-12
    stat, scaled, crit, accepted = coopest.ks_two_sample_test(
        [i / 10 for i in range(10)], [i / 10 + 0.01 for i in range(10)], 0.05
    )
    assert accepted and stat <= 0.1 + 1e-12
    try:
        coopest.ks_two_sample_test([0.1, 0.2], [0.3, 0.4], 0.05)
    except ValueError as e:
        assert "insufficient samples" in str(e)
    else:
        raise AssertionError("expected ValueError")


def check_scenarios():
    cfg = coopest.ScenarioConfig()
    cfg.n_nodes = 6
    cfg.runs = 2
    m = coopest.run_scenario(cfg)
    assert m.n_nodes == 6
    assert sorted(i for c in m.coalitions for i in c) == list(range(6))
    assert m.coop_kl_mean <= m.noncoop_kl_mean + 1e-12 or m.joins_total == 0
    assert json.loads(m.to_json())["seed"] == cfg.seed

    text = coopest.simulate(cfg)
    lines = text.strip().splitlines()
    assert lines[0] == coopest.CSV_HEADER and len(lines) == 3
    assert text == coopest.simulate(cfg)

    rows = json.loads(coopest.sweep(cfg, "kappa", [0.001, 0.1], format="json"))
    assert [r["kappa"] for r in rows] == [0.001, 0.001, 0.1, 0.1]

    stable, coalitions = coopest.stability_check(cfg)
    assert stable and sorted(i for c in coalitions for i in c) == list(range(6))

    back = coopest.ScenarioConfig.from_toml(cfg.to_toml())
    assert back.n_nodes == 6
    try:
        coopest.ScenarioConfig.from_toml("[game]\nkappa = 5.0\n")
    except ValueError as e:
        assert "game.kappa" in str(e)
    else:
        raise AssertionError("expected ValueError")


if __name__ == "__main__":
    check_densities()
    check_ks()
    check_scenarios()
    print("python smoke test: ok")
