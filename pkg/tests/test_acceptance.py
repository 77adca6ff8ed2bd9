"""End-to-end acceptance checks; each prints one PASS/FAIL line.

The trend checks use the practical constants ``level_coef=1, elim_coef=0.25``;
the structural checks use the conservative defaults (8, 8).
"""
import math
import os
import time

import numpy as np
import pytest

from covshift_bandits.diagnostics import estimate_transfer_exponent
from covshift_bandits.environments import CovariateSampler, RewardField, ShiftSchedule
from covshift_bandits.harness import ExperimentConfig, generate_stream, pooled_stderr, run_experiment
from covshift_bandits.policy import AdaptiveBandit, InvariantMonitor, PolicyConfig

pytestmark = pytest.mark.acceptance

THREADS = os.cpu_count() or 1
TREND = dict(n_q=30_000, trials=20, seed=7, level_coef=1.0, elim_coef=0.25, threads=THREADS, timing=False)


@pytest.fixture(scope="module")
def past_sweep():
    cfg = ExperimentConfig(n_p=[0, 30_000, 100_000], gamma=[2], policies=["adaptive", "grid_exp3"], **TREND)
    start = time.perf_counter()
    report = run_experiment(cfg)
    return report, time.perf_counter() - start


@pytest.fixture(scope="module")
def shift_sweep():
    cfg = ExperimentConfig(n_p=[100_000], gamma=[0, 2, 4, 6], shifts=[[[0, 50_000], [4, 50_000]]],
                           policies=["adaptive"], **TREND)
    return run_experiment(cfg)


def fmt(agg):
    return f"{agg.mean_regret_q:.1f}+-{agg.stderr:.1f}"


def test_past_experience_trend(past_sweep, verdict):
    report, seconds = past_sweep
    assert not report.failures
    a = [report.aggregate("adaptive", "2", n) for n in (0, 30_000, 100_000)]
    decreasing = a[0].mean_regret_q > a[1].mean_regret_q > a[2].mean_regret_q
    margin = (a[0].mean_regret_q - a[2].mean_regret_q) / pooled_stderr(a[0], a[2])
    ok = decreasing and margin >= 2 and seconds <= 600
    detail = f"R^Q by n_P 0/3e4/1e5 = {', '.join(fmt(x) for x in a)}; gap {margin:.1f} SE; {seconds:.0f}s"
    assert verdict(1, ok, detail), detail


def test_shift_severity_trend(shift_sweep, verdict):
    assert not shift_sweep.failures
    a = [shift_sweep.aggregate("adaptive", g, 100_000) for g in ("0", "2", "6")]
    nondecreasing = a[0].mean_regret_q <= a[1].mean_regret_q <= a[2].mean_regret_q
    margin = (a[2].mean_regret_q - a[0].mean_regret_q) / pooled_stderr(a[0], a[2])
    ok = nondecreasing and margin >= 2
    detail = f"R^Q by gamma 0/2/6 = {', '.join(fmt(x) for x in a)}; gap {margin:.1f} SE"
    assert verdict(2, ok, detail), detail


def test_multiple_shifts_interpolate(shift_sweep, verdict):
    lo = shift_sweep.aggregate("adaptive", "0", 100_000)
    hi = shift_sweep.aggregate("adaptive", "4", 100_000)
    mid = shift_sweep.aggregate("adaptive", "0:50000+4:50000", 100_000)
    ok = (mid.mean_regret_q >= lo.mean_regret_q - 2 * pooled_stderr(mid, lo)
          and mid.mean_regret_q <= hi.mean_regret_q + 2 * pooled_stderr(mid, hi))
    detail = f"gamma 0: {fmt(lo)}, two-phase: {fmt(mid)}, gamma 4: {fmt(hi)}"
    assert verdict(3, ok, detail), detail


def naive_stats(log, bin_id, upto, n_arms):
    """Statistics of a bin after ``upto`` rounds, recounted from the raw log."""
    side = 2**bin_id.depth
    X = log.covariates[:upto]
    cells = np.minimum(np.floor(X * side), side - 1).astype(np.int64)
    inside = np.all(cells == np.array(bin_id.coords), axis=1)
    arms = log.arms[:upto]
    pulls, sums = [0] * n_arms, [0.0] * n_arms
    for s in np.flatnonzero(inside):
        a = int(arms[s])
        if a >= 0:
            pulls[a] += 1
            sums[a] += float(log.rewards[s])
    return int(inside.sum()), pulls, sums


@pytest.fixture(scope="module")
def structural_runs():
    """Ten seeded 1e5-round runs under the conservative constants, fully monitored."""
    cfg = ExperimentConfig(noise_sigma=0.05)
    field = cfg.make_field()
    schedule = ShiftSchedule.single_shift(2.0, 50_000, 50_000)
    monitors, probe_results = [], []
    for run in range(10):
        X, _, rewards = generate_stream(cfg, field, schedule, seed=1000 + run)
        mon = InvariantMonitor(strict=False)
        pol = AdaptiveBandit(PolicyConfig(seed=run), monitor=mon)
        rng = np.random.default_rng(run)
        probe_rounds = set(rng.choice(np.arange(1, len(X) + 1), size=1000, replace=False).tolist())
        snapshots = []
        rows = rewards.tolist()
        for t, x in enumerate(X.tolist(), start=1):
            a = pol.choose_action(x)
            pol.update(x, a, rows[t - 1][a])
            if t in probe_rounds:
                nodes = list(pol.tree.nodes())
                node = nodes[int(rng.integers(len(nodes)))]
                snapshots.append((node.bin_id, t, node.covariate_count, list(node.pulls), list(node.sums)))
        mismatches = 0
        for bin_id, t, count, pulls, sums in snapshots:
            if naive_stats(pol.tree.log, bin_id, t, 3) != (count, pulls, sums):
                mismatches += 1
        monitors.append(mon)
        probe_results.append((len(snapshots), mismatches))
    return monitors, probe_results


def test_level_rule_optimality(structural_runs, verdict):
    monitors, _ = structural_runs
    rounds = sum(m.rounds for m in monitors)
    bad = sum(m.level_violations for m in monitors)
    detail = f"{bad} violations of r_t <= 2 min phi over {rounds} post-warm-up rounds in 10 runs"
    assert verdict(4, bad == 0 and rounds > 0, detail), detail


def test_no_level_skipping(structural_runs, verdict):
    monitors, _ = structural_runs
    bad = sum(m.noskip_violations for m in monitors)
    firsts = sum(m.first_selections for m in monitors)
    detail = f"{bad} descendants selected before their ancestor, {firsts} first selections"
    assert verdict(5, bad == 0 and firsts > 0, detail), detail


def retention_field(center):
    # one wide bump with untilted arms: sup-norm Lipschitz constant 0.3 * sqrt(2) / 0.45 < 1
    return RewardField(np.array([center]), np.array([0.45]), np.array([[1.0], [-1.0], [-1.0]]), np.zeros(3))


def test_best_arm_retention_without_noise(verdict):
    checks = violations = eliminations = 0
    for run in range(10):
        rng = np.random.default_rng(500 + run)
        center = rng.uniform(0.45, 0.55, size=2)
        field = retention_field(center)
        # covariates fill one side-1/16 cell near the bump centre
        cell = np.floor(center * 16) + rng.integers(-1, 2, size=2)
        X = (cell + rng.uniform(size=(100_000, 2))) / 16
        means = field.means(X)
        mon = InvariantMonitor(strict=False, field=field, check_level_rule=False)
        pol = AdaptiveBandit(PolicyConfig(lam=1.0, seed=run), monitor=mon)
        rows = means.tolist()
        for t, x in enumerate(X.tolist()):
            a = pol.choose_action(x)
            pol.update(x, a, rows[t][a])
        checks += mon.best_arm_checks
        violations += mon.best_arm_violations
        eliminations += mon.eliminations
    detail = f"{violations} best-arm losses in {checks} selections ({eliminations} eliminating selections)"
    assert verdict(6, violations == 0 and checks > 0 and eliminations > 0, detail), detail


def test_count_exactness(structural_runs, verdict):
    _, probes = structural_runs
    total = sum(n for n, _ in probes)
    bad = sum(m for _, m in probes)
    ok = bad == 0 and all(n == 1000 for n, _ in probes)
    detail = f"{bad} mismatches in {total} (node, round) probes over {len(probes)} runs"
    assert verdict(7, ok, detail), detail


def test_pull_balance_frequency(verdict):
    cfg = ExperimentConfig()
    field = cfg.make_field()
    events = bad = 0
    runs = 200
    for run in range(runs):
        gamma = float(run % 7)
        X, _, rewards = generate_stream(cfg, field, ShiftSchedule.single_shift(gamma, 5_000, 5_000), seed=20_000 + run)
        mon = InvariantMonitor(strict=False, check_level_rule=False)
        pol = AdaptiveBandit(PolicyConfig(seed=run), monitor=mon)
        rows = rewards.tolist()
        for t, x in enumerate(X.tolist()):
            a = pol.choose_action(x)
            pol.update(x, a, rows[t][a])
        events += mon.first_selections
        bad += mon.balance_violations
    delta = 0.05
    limit = delta + 3 * math.sqrt(delta / events)
    freq = bad / events
    detail = f"imbalance frequency {freq:.4f} ({bad}/{events} first selections, {runs} runs), limit {limit:.4f}"
    assert verdict(8, events > 0 and freq <= limit, detail), detail


def test_transfer_exponent_diagnostic(verdict):
    rng = np.random.default_rng(9)
    q = CovariateSampler().sample(rng, 100_000)
    hats = {}
    for gamma in (0.0, 2.0):
        p = CovariateSampler.radial(gamma).sample(rng, 100_000)
        hats[gamma] = estimate_transfer_exponent(p, q).gamma_hat
    ok = all(abs(hats[g] - g) <= 0.5 for g in hats)
    detail = ", ".join(f"gamma={g:g}: gamma_hat={h:.3f}" for g, h in hats.items())
    assert verdict(9, ok, detail), detail


def test_baseline_separation(past_sweep, verdict):
    report, _ = past_sweep
    a = report.aggregate("adaptive", "2", 100_000)
    b = report.aggregate("grid_exp3", "2", 100_000)
    margin = (b.mean_regret_q - a.mean_regret_q) / pooled_stderr(a, b)
    detail = f"adaptive {fmt(a)} vs grid_exp3 {fmt(b)}; gap {margin:.1f} SE"
    assert verdict(10, margin >= 2, detail), detail
