"""Synthetic worlds: bump reward fields, shifted covariate laws, noise, schedules."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

AMPLITUDE = 0.3
BASE = 0.5
OFFSET_RANGE = 0.3


@dataclass(frozen=True, eq=False)
class RewardField:
    """Mean rewards built from disjoint tapered bumps.

    Inside bump ``k`` with profile ``phi = (1 - |x - z_k| / r_k)_+``::

        f_i(x) = 0.5 + 0.3 * sign[i, k] * phi + offset[i] * (1 - phi)

    and ``f_i(x) = 0.5 + offset[i]`` outside every bump. Tapering the offset
    keeps each ``f_i`` Lipschitz across bump boundaries.
    """

    centers: np.ndarray  # (n_bumps, D)
    radii: np.ndarray  # (n_bumps,)
    signs: np.ndarray  # (K, n_bumps), entries +-1
    offsets: np.ndarray  # (K,)

    @property
    def n_arms(self) -> int:
        return len(self.offsets)

    @property
    def n_bumps(self) -> int:
        return len(self.radii)

    @property
    def lipschitz_bound(self) -> float:
        """Lipschitz constant w.r.t. the sup norm: ``max(1, 0.6 sqrt(D) / min r_k)``."""
        if self.n_bumps == 0:
            return 1.0
        d = self.centers.shape[1]
        return max(1.0, 2 * AMPLITUDE * math.sqrt(d) / float(self.radii.min()))

    def profiles(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        dist = np.linalg.norm(X[:, None, :] - self.centers[None, :, :], axis=2)
        return np.clip(1.0 - dist / self.radii, 0.0, None)

    def means(self, X: np.ndarray) -> np.ndarray:
        """Mean rewards at each row of ``X``; shape ``(n, K)``."""
        weights = AMPLITUDE * self.signs.T - self.offsets[None, :]  # (n_bumps, K)
        return BASE + self.offsets[None, :] + self.profiles(X) @ weights

    def mean(self, arm: int, x) -> float:
        return float(self.means(np.asarray(x, dtype=float)[None, :])[0, arm])

    def best_arm(self, x) -> int:
        return int(np.argmax(self.means(np.asarray(x, dtype=float)[None, :])[0]))


def reward_mean(field_: RewardField, arm: int, x) -> float:
    return field_.mean(arm, x)


def _room(z: np.ndarray, centers: np.ndarray, radii: np.ndarray, placed, cap: float) -> float:
    r = min(cap, float(np.min(z)), float(np.min(1.0 - z)))
    for j in placed:
        r = min(r, float(np.linalg.norm(z - centers[j])) - radii[j])
    return r


def assign_radii(centers: np.ndarray, order, cap: float = 0.2) -> np.ndarray:
    """Greedy radii: in ``order``, each ball is as large as fits inside the
    unit cube and clear of the balls already placed, up to ``cap``.

    A non-positive radius means the centre fell inside an earlier ball.
    """
    radii = np.zeros(len(centers))
    placed: list[int] = []
    for k in order:
        r = _room(centers[k], centers, radii, placed, cap)
        # shrink a hair so touching balls stay strictly disjoint
        radii[k] = r * (1 - 1e-9) if r > 0 else r
        placed.append(k)
    return radii


def _sample_center(rng: np.random.Generator, law: str, dimension: int) -> np.ndarray:
    while True:
        if law == "gaussian":
            z = rng.normal(0.5, math.sqrt(0.5), size=dimension)
        elif law == "uniform":
            z = rng.uniform(size=dimension)
        else:
            raise ValueError(f"unknown center law {law!r}")
        if np.all((z >= 0) & (z <= 1)):
            return z


def generate_bump_field(
    seed: int,
    n_bumps: int = 25,
    center_law: str = "gaussian",
    n_arms: int = 3,
    dimension: int = 2,
    radius_cap: float = 0.2,
    min_radius: float = 0.01,
    max_retries: int = 10_000,
) -> RewardField:
    """Random bump field.

    Centres are drawn from ``N((0.5, 0.5), 0.5 I)`` (``center_law="gaussian"``)
    or uniformly, keeping only those inside the square. Radii are assigned
    greedily in a random order; a centre that would get a radius below
    ``min_radius`` is redrawn. Signs are Rademacher and offsets uniform on
    ``[-0.3, 0.3]``.
    """
    if n_bumps < 1:
        raise ValueError("n_bumps must be at least 1")
    rng = np.random.default_rng(seed)
    centers = np.array([_sample_center(rng, center_law, dimension) for _ in range(n_bumps)])
    radii = np.zeros(n_bumps)
    order = rng.permutation(n_bumps)
    retries = 0
    placed: list[int] = []
    for k in order:
        while True:
            r = _room(centers[k], centers, radii, placed, radius_cap)
            if r >= min_radius:
                break
            retries += 1
            if retries > max_retries:
                raise ValueError(
                    f"could not place {n_bumps} disjoint bumps of radius >= {min_radius} "
                    f"after {max_retries} retries"
                )
            centers[k] = _sample_center(rng, center_law, dimension)
        radii[k] = r * (1 - 1e-9)
        placed.append(k)
    signs = rng.choice([-1.0, 1.0], size=(n_arms, n_bumps))
    offsets = rng.uniform(-OFFSET_RANGE, OFFSET_RANGE, size=n_arms)
    return RewardField(centers, radii, signs, offsets)


@dataclass(frozen=True)
class CovariateSampler:
    """Uniform law on ``[0, 1]^D`` or density proportional to ``|x|_2 ** gamma``."""

    kind: str = "uniform"
    gamma: float = 0.0
    dimension: int = 2
    gamma_max: float = 10.0

    def __post_init__(self):
        if self.kind not in ("uniform", "radial"):
            raise ValueError(f"unknown sampler kind {self.kind!r}")
        if self.kind == "radial" and not 0 <= self.gamma <= self.gamma_max:
            raise ValueError(f"gamma must lie in [0, {self.gamma_max}]")

    @classmethod
    def radial(cls, gamma: float, dimension: int = 2) -> "CovariateSampler":
        return cls("radial", float(gamma), dimension)

    @property
    def exponent(self) -> float:
        return self.gamma if self.kind == "radial" else 0.0

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        d = self.dimension
        if self.kind == "uniform":
            return rng.uniform(size=(size, d))
        # rejection from the uniform proposal; envelope sqrt(D) ** gamma
        out = np.empty((size, d))
        filled = 0
        accept_rate = (d / (d + self.gamma)) * 0.5 + 0.05  # rough guess for batch sizing
        while filled < size:
            batch = max(64, int((size - filled) / accept_rate * 1.1))
            u = rng.uniform(size=(batch, d))
            keep = rng.uniform(size=batch) < (np.linalg.norm(u, axis=1) / math.sqrt(d)) ** self.gamma
            u = u[keep][: size - filled]
            out[filled : filled + len(u)] = u
            filled += len(u)
        return out

    def density(self, X: np.ndarray) -> np.ndarray:
        """Unnormalized density."""
        X = np.atleast_2d(X)
        if self.kind == "uniform":
            return np.ones(len(X))
        return np.linalg.norm(X, axis=1) ** self.gamma


def sample_covariate(sampler: CovariateSampler, rng: np.random.Generator) -> np.ndarray:
    return sampler.sample(rng, 1)[0]


@dataclass(frozen=True)
class NoiseModel:
    """Additive Gaussian reward noise with standard deviation ``sigma``."""

    sigma: float = 0.05
    clip_to_unit: bool = False

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")

    def apply(self, rng: np.random.Generator, means: np.ndarray) -> np.ndarray:
        y = means + self.sigma * rng.standard_normal(means.shape) if self.sigma > 0 else means.copy()
        if self.clip_to_unit:
            np.clip(y, 0.0, 1.0, out=y)
        return y


def sample_rewards(field_: RewardField, noise: NoiseModel, x, rng: np.random.Generator) -> np.ndarray:
    return noise.apply(rng, field_.means(np.asarray(x, dtype=float)[None, :])[0])


@dataclass(frozen=True)
class Phase:
    sampler: CovariateSampler
    length: int


@dataclass(frozen=True)
class ShiftSchedule:
    """Past phases ``P_1 .. P_N`` followed by ``n_q`` rounds from the target law."""

    phases: tuple[Phase, ...]
    n_q: int
    target: CovariateSampler = field(default_factory=CovariateSampler)

    def __post_init__(self):
        if self.n_q <= 0:
            raise ValueError("n_q must be positive")
        if any(p.length <= 0 for p in self.phases):
            raise ValueError("phase lengths must be positive")

    @classmethod
    def single_shift(cls, gamma: float, n_p: int, n_q: int, dimension: int = 2) -> "ShiftSchedule":
        phases = (Phase(CovariateSampler.radial(gamma, dimension), n_p),) if n_p > 0 else ()
        return cls(phases, n_q, CovariateSampler(dimension=dimension))

    @property
    def n_p(self) -> int:
        return sum(p.length for p in self.phases)

    @property
    def n(self) -> int:
        return self.n_p + self.n_q

    @property
    def aggregate_gamma(self) -> float:
        if not self.phases:
            return 0.0
        return sum(p.sampler.exponent * p.length for p in self.phases) / self.n_p

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        parts = [p.sampler.sample(rng, p.length) for p in self.phases]
        parts.append(self.target.sample(rng, self.n_q))
        return np.concatenate(parts, axis=0)
