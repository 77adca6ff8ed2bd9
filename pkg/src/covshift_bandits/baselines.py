"""Comparator policies sharing the ``choose_action`` / ``update`` interface."""
from __future__ import annotations

import math
import random
from typing import Sequence

import numpy as np


def grid_depth_for(horizon: int, dimension: int) -> int:
    """``round(log2(n ** (1 / (2 + D))))``: the classical non-adaptive level."""
    return max(0, round(math.log2(horizon) / (2 + dimension)))


def _cell(x: Sequence[float], depth: int) -> tuple[int, ...]:
    size = 1 << depth
    return tuple(min(int(xj * size), size - 1) for xj in x)


class OraclePolicy:
    """Plays the lowest-index arm maximizing the true mean reward."""

    name = "oracle"

    def __init__(self, field_):
        self.field = field_

    def choose_action(self, x) -> int:
        return oracle_action(self.field, x)

    def update(self, x, arm: int, reward: float) -> None:
        pass


def oracle_action(field_, x) -> int:
    means = field_.means(np.asarray(x, dtype=float)[None, :])[0]
    return int(np.argmax(means))  # argmax returns the first maximizer


class UniformPolicy:
    name = "uniform"

    def __init__(self, n_arms: int, seed: int = 0):
        self.n_arms = n_arms
        self.rng = random.Random(seed)

    def choose_action(self, x) -> int:
        return self.rng.randrange(self.n_arms)

    def update(self, x, arm: int, reward: float) -> None:
        pass


def exp3_probabilities(log_weights: Sequence[float]) -> list[float]:
    top = max(log_weights)
    w = [math.exp(lw - top) for lw in log_weights]
    total = sum(w)
    return [wi / total for wi in w]


def exp3_step(log_weights: list[float], arm: int, reward: float, prob: float, eta: float) -> list[float]:
    """Importance-weighted exponential update, in log space.

    ``reward`` is clipped to ``[0, 1]``; ``prob`` is the probability with
    which ``arm`` was drawn.
    """
    reward = min(max(reward, 0.0), 1.0)
    out = list(log_weights)
    out[arm] += eta * reward / prob
    return out


class GridExp3:
    """Independent Exp3 learners on a fixed uniform grid.

    The learning rate ``sqrt(ln K / (T K))`` is shared by all cells, with
    ``T`` the configured horizon.
    """

    name = "grid_exp3"

    def __init__(self, n_arms: int, horizon: int, dimension: int = 2, grid_depth: int | None = None, seed: int = 0):
        self.n_arms = n_arms
        self.grid_depth = grid_depth_for(horizon, dimension) if grid_depth is None else grid_depth
        self.eta = math.sqrt(math.log(n_arms) / (horizon * n_arms))
        self.rng = random.Random(seed)
        self.cells: dict[tuple[int, ...], list[float]] = {}
        self._pending: tuple[tuple[int, ...], int, float] | None = None

    def probabilities(self, x) -> list[float]:
        logw = self.cells.get(_cell(x, self.grid_depth))
        return exp3_probabilities(logw) if logw is not None else [1.0 / self.n_arms] * self.n_arms

    def choose_action(self, x) -> int:
        key = _cell(x, self.grid_depth)
        logw = self.cells.setdefault(key, [0.0] * self.n_arms)
        probs = exp3_probabilities(logw)
        u = self.rng.random()
        arm, acc = self.n_arms - 1, 0.0
        for i, p in enumerate(probs):
            acc += p
            if u < acc:
                arm = i
                break
        self._pending = (key, arm, probs[arm])
        return arm

    def update(self, x, arm: int, reward: float) -> None:
        key, chosen, prob = self._pending
        assert chosen == arm, "update does not match the pending decision"
        self.cells[key] = exp3_step(self.cells[key], arm, reward, prob, self.eta)
        self._pending = None


class FixedGridSE:
    """Successive elimination run independently in each cell of a fixed grid.

    An arm is dropped when its upper confidence bound falls below the lower
    bound of the empirically best arm, with radius ``sqrt(2 ln(n) / m)``.
    The least-pulled surviving arm is played (lowest index on ties).
    """

    name = "fixed_grid_se"

    def __init__(self, n_arms: int, horizon: int, dimension: int = 2, grid_depth: int | None = None):
        self.n_arms = n_arms
        self.horizon = horizon
        self.grid_depth = grid_depth_for(horizon, dimension) if grid_depth is None else grid_depth
        self._log_n = math.log(horizon)
        # per cell: [pulls, sums, candidate list]
        self.cells: dict[tuple[int, ...], list] = {}

    def _state(self, x):
        key = _cell(x, self.grid_depth)
        st = self.cells.get(key)
        if st is None:
            st = self.cells[key] = [[0] * self.n_arms, [0.0] * self.n_arms, list(range(self.n_arms))]
        return st

    def candidates(self, x) -> list[int]:
        return list(self._state(x)[2])

    def choose_action(self, x) -> int:
        pulls, sums, cand = self._state(x)
        if all(pulls[i] > 0 for i in cand):
            mean = {i: sums[i] / pulls[i] for i in cand}
            rad = {i: math.sqrt(2 * self._log_n / pulls[i]) for i in cand}
            best = max(cand, key=lambda i: mean[i])
            floor = mean[best] - rad[best]
            cand[:] = [i for i in cand if mean[i] + rad[i] >= floor]
        return min(cand, key=lambda i: pulls[i])

    def update(self, x, arm: int, reward: float) -> None:
        pulls, sums, _ = self._state(x)
        pulls[arm] += 1
        sums[arm] += reward
