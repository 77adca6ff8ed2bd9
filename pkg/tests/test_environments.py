import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from covshift_bandits.environments import (
    CovariateSampler,
    NoiseModel,
    Phase,
    RewardField,
    ShiftSchedule,
    assign_radii,
    generate_bump_field,
    reward_mean,
    sample_covariate,
    sample_rewards,
)


def radial_mass(gamma, lo, hi):
    """Exact mass of the box [lo, hi] under the density proportional to |x|^gamma."""
    f = lambda y, x: math.hypot(x, y) ** gamma
    total = integrate.dblquad(f, 0, 1, 0, 1, epsabs=1e-11)[0]
    part = integrate.dblquad(f, lo[0], hi[0], lo[1], hi[1], epsabs=1e-11)[0]
    return part / total


def test_single_central_bump_gets_cap_radius():
    radii = assign_radii(np.array([[0.5, 0.5]]), [0], cap=0.2)
    assert radii[0] == pytest.approx(0.2)


def test_greedy_radius_respects_earlier_balls_and_walls():
    centers = np.array([[0.5, 0.5], [0.8, 0.5], [0.05, 0.5]])
    radii = assign_radii(centers, [0, 1, 2], cap=0.2)
    assert radii == pytest.approx([0.2, 0.1, 0.05])


def test_same_seed_same_field():
    a, b = generate_bump_field(3), generate_bump_field(3)
    for name in ("centers", "radii", "signs", "offsets"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))


@pytest.mark.parametrize("law", ["gaussian", "uniform"])
def test_bumps_are_disjoint_and_inside(law):
    for seed in range(100):
        f = generate_bump_field(seed, n_bumps=25, center_law=law)
        assert f.radii.min() >= 0.01 and f.radii.max() <= 0.2
        d = np.linalg.norm(f.centers[:, None] - f.centers[None], axis=2)
        i, j = np.triu_indices(25, 1)
        assert np.all(d[i, j] > f.radii[i] + f.radii[j])
        assert np.all(f.centers - f.radii[:, None] >= 0) and np.all(f.centers + f.radii[:, None] <= 1)
        assert set(np.unique(f.signs)) <= {-1.0, 1.0}
        assert np.all(np.abs(f.offsets) <= 0.3)


def test_impossible_packing_is_a_configuration_error():
    with pytest.raises(ValueError):
        generate_bump_field(0, n_bumps=200, min_radius=0.15, max_retries=200)


def test_value_at_centre_and_boundary():
    field = RewardField(np.array([[0.5, 0.5]]), np.array([0.2]), np.array([[1.0], [-1.0]]), np.array([0.1, -0.2]))
    assert reward_mean(field, 0, (0.5, 0.5)) == pytest.approx(0.8)
    assert reward_mean(field, 1, (0.5, 0.5)) == pytest.approx(0.2)
    assert reward_mean(field, 0, (0.7, 0.5)) == pytest.approx(0.6)
    assert reward_mean(field, 1, (0.9, 0.9)) == pytest.approx(0.3)
    assert field.best_arm((0.5, 0.5)) == 0


def test_means_stay_in_unit_interval():
    f = generate_bump_field(1)
    m = f.means(np.random.default_rng(0).uniform(size=(20_000, 2)))
    assert m.min() >= 0.2 - 1e-12 and m.max() <= 0.8 + 1e-12


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_lipschitz_bound_on_random_pairs(seed):
    f = generate_bump_field(seed)
    rng = np.random.default_rng(seed)
    x = rng.uniform(size=(100_000, 2))
    near = np.clip(x + rng.uniform(-0.01, 0.01, size=x.shape), 0, 1)
    far = rng.uniform(size=x.shape)
    bound = f.lipschitz_bound
    for y in (near, far):
        dist = np.abs(x - y).max(axis=1)
        ok = dist > 0
        ratio = np.abs(f.means(x) - f.means(y)).max(axis=1)[ok] / dist[ok]
        assert ratio.max() <= bound * (1 + 1e-9)


def test_uniform_sampler_is_radial_with_zero_exponent():
    rng = np.random.default_rng(0)
    X = CovariateSampler.radial(0.0).sample(rng, 50_000)
    assert np.all((0 <= X) & (X <= 1))
    assert np.abs(X.mean(axis=0) - 0.5).max() < 4 * math.sqrt(1 / 12 / 50_000)


def test_radial_quadrant_mass():
    exact = radial_mass(2.0, (0, 0), (0.5, 0.5))
    assert exact == pytest.approx(0.0625, abs=1e-9)
    n = 1_000_000
    X = CovariateSampler.radial(2.0).sample(np.random.default_rng(0), n)
    hat = np.mean(np.all(X < 0.5, axis=1))
    assert abs(hat - exact) <= 3 * math.sqrt(exact * (1 - exact) / n)


@pytest.mark.parametrize("gamma", [0.0, 2.0, 6.0])
def test_radial_grid_masses(gamma):
    n = 200_000
    X = CovariateSampler.radial(gamma).sample(np.random.default_rng(int(gamma) + 10), n)
    idx = np.minimum((X * 4).astype(int), 3)
    hits = np.zeros((4, 4))
    np.add.at(hits, (idx[:, 0], idx[:, 1]), 1)
    for i in range(4):
        for j in range(4):
            p = radial_mass(gamma, (i / 4, j / 4), ((i + 1) / 4, (j + 1) / 4))
            assert abs(hits[i, j] / n - p) <= 4 * math.sqrt(p * (1 - p) / n) + 1e-12


def test_sampler_validation():
    with pytest.raises(ValueError):
        CovariateSampler.radial(11.0)
    with pytest.raises(ValueError):
        CovariateSampler("cauchy")
    assert sample_covariate(CovariateSampler(), np.random.default_rng(0)).shape == (2,)


def test_zero_noise_is_exact():
    f = generate_bump_field(2)
    x = (0.3, 0.4)
    y = sample_rewards(f, NoiseModel(0.0), x, np.random.default_rng(0))
    np.testing.assert_array_equal(y, f.means(np.array([x]))[0])


def test_noise_mean_and_spread():
    rng = np.random.default_rng(3)
    sigma, n = 0.05, 20_000
    Y = NoiseModel(sigma).apply(rng, np.full((n, 3), 0.4))
    assert np.abs(Y.mean(axis=0) - 0.4).max() <= 4 * sigma / math.sqrt(n)
    assert Y.std() == pytest.approx(sigma, rel=0.03)


@settings(max_examples=25, deadline=None)
@given(sigma=st.floats(0.0, 2.0), level=st.floats(-1.0, 2.0))
def test_clipped_noise_stays_in_unit_interval(sigma, level):
    Y = NoiseModel(sigma, clip_to_unit=True).apply(np.random.default_rng(0), np.full((200, 3), level))
    assert Y.min() >= 0.0 and Y.max() <= 1.0


def test_negative_sigma_rejected():
    with pytest.raises(ValueError):
        NoiseModel(-0.1)


def test_schedule_lengths_and_aggregate_exponent():
    sched = ShiftSchedule(
        (Phase(CovariateSampler.radial(0.0), 500), Phase(CovariateSampler.radial(4.0), 1500)), n_q=300
    )
    assert sched.n_p == 2000 and sched.n == 2300
    assert sched.aggregate_gamma == pytest.approx(3.0)
    X = sched.sample(np.random.default_rng(0))
    assert X.shape == (2300, 2)
    # the heavily shifted phase sits far from the origin on average
    assert np.linalg.norm(X[500:2000], axis=1).mean() > np.linalg.norm(X[:500], axis=1).mean()


def test_single_shift_schedule():
    assert ShiftSchedule.single_shift(2.0, 0, 100).phases == ()
    assert ShiftSchedule.single_shift(2.0, 0, 100).aggregate_gamma == 0.0
    s = ShiftSchedule.single_shift(2.0, 50, 100)
    assert s.n_p == 50 and s.phases[0].sampler.gamma == 2.0
    with pytest.raises(ValueError):
        ShiftSchedule.single_shift(2.0, 10, 0)
