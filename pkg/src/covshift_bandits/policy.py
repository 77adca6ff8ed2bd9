"""Adaptive-level successive elimination over a dyadic tree.

Each round after warm-up picks the finest level whose bin around the current
covariate holds enough past covariates, inherits the candidate arms of all
ancestor bins, drops arms whose estimate trails the leader by more than a
multiple of ``lam * r``, and plays a surviving arm uniformly at random.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .tree import DEFAULT_MAX_DEPTH, BinId, BinNode, PartitionTree


@dataclass(frozen=True)
class PolicyConfig:
    """Parameters of :class:`AdaptiveBandit`.

    ``level_coef`` and ``elim_coef`` are the constants in the level rule
    ``r >= sqrt(level_coef * K * ln(K/delta) / n_r)`` and in the elimination
    gap ``elim_coef * lam * r``. Both default to 8; smaller values make the
    policy usable at modest horizons but void the high-probability analysis.
    """

    n_arms: int = 3
    delta: float = 0.05
    lam: float = 1.0
    dimension: int = 2
    max_depth: int = DEFAULT_MAX_DEPTH
    seed: int = 0
    level_coef: float = 8.0
    elim_coef: float = 8.0

    def __post_init__(self):
        if self.n_arms < 2:
            raise ValueError("need at least two arms")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.lam < 1.0:
            raise ValueError("lam must be at least 1")
        if self.dimension < 1:
            raise ValueError("dimension must be positive")
        if self.level_coef <= 0 or self.elim_coef <= 0:
            raise ValueError("level_coef and elim_coef must be positive")

    @property
    def confidence(self) -> float:
        return self.level_coef * self.n_arms * math.log(self.n_arms / self.delta)

    @property
    def warmup_length(self) -> int:
        return max(1, math.ceil(self.confidence))


class Decision(NamedTuple):
    arm: int
    node: BinNode
    depth: int

    @property
    def bin_id(self) -> BinId:
        return self.node.bin_id

    @property
    def level(self) -> float:
        return 2.0 ** -self.depth


def _arms(mask: int) -> list[int]:
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


class AdaptiveBandit:
    name = "adaptive"

    def __init__(self, config: PolicyConfig, monitor: "InvariantMonitor | None" = None):
        self.config = config
        self.tree = PartitionTree(config.n_arms, config.dimension, config.max_depth)
        self.rng = random.Random(config.seed)
        self.monitor = monitor
        self.t = 1
        self.pending: tuple[Decision, tuple[int, ...]] | None = None
        self._gap_per_level = config.elim_coef * config.lam

    def select_level(self, x: Sequence[float], fine=None) -> list[BinNode]:
        """Path of nodes from the root to the selected bin.

        The selected depth is ``len(path) - 1``. Descends while the next
        level still satisfies ``n_r * r**2 >= confidence``; the feasible set
        is closed upwards in ``r``, so the first failure ends the search.
        """
        if self.t <= self.config.warmup_length:
            raise RuntimeError("level selection is undefined during warm-up")
        tree = self.tree
        if fine is None:
            fine = tree.fine_coords(x)
        c = self.config.confidence
        node = tree.root
        assert len(node.members) >= c, "root level must be feasible after warm-up"
        path = [node]
        r2 = 1.0
        for depth in range(1, tree.max_depth + 1):
            child = tree.child_on_path(node, fine, depth)
            r2 *= 0.25
            if len(child.members) * r2 < c:
                break
            path.append(child)
            node = child
        return path

    def decide(self, x: Sequence[float]) -> Decision:
        assert self.pending is None, "previous decision has not been updated"
        tree = self.tree
        fine = tree.fine_coords(x)
        if self.t <= self.config.warmup_length:
            decision = Decision(self.rng.randrange(self.config.n_arms), tree.root, 0)
            self.pending = (decision, fine)
            return decision

        path = self.select_level(x, fine)
        node = path[-1]
        depth = len(path) - 1
        inherited = node.candidates
        for anc in path:
            inherited &= anc.candidates
        node.candidates = inherited

        pulls, sums = node.pulls, node.sums
        arms = _arms(inherited)
        est = [sums[i] / pulls[i] if pulls[i] else 0.0 for i in arms]
        cut = max(est) - self._gap_per_level * 2.0 ** -depth
        survivors = 0
        for i, e in zip(arms, est):
            if e >= cut:
                survivors |= 1 << i
        assert survivors, "elimination removed every arm"
        node.candidates = survivors

        if self.monitor is not None:
            self.monitor.on_selection(self, x, fine, path, inherited, survivors)
        if node.first_selected is None:
            node.first_selected = self.t

        if survivors & (survivors - 1) == 0:
            arm = survivors.bit_length() - 1
        else:
            live = _arms(survivors)
            arm = live[self.rng.randrange(len(live))]
        decision = Decision(arm, node, depth)
        self.pending = (decision, fine)
        return decision

    def choose_action(self, x: Sequence[float]) -> int:
        return self.decide(x).arm

    def update(self, x: Sequence[float], arm: int, reward: float) -> None:
        if self.pending is None:
            raise RuntimeError("update called without a pending decision")
        decision, fine = self.pending
        if decision.arm != arm:
            raise RuntimeError(f"update for arm {arm} but arm {decision.arm} was chosen")
        self.pending = None
        self.tree.observe(x, arm, reward, fine)
        self.t += 1


class InvariantViolation(AssertionError):
    pass


class InvariantMonitor:
    """Per-round checks of the structural properties of :class:`AdaptiveBandit`.

    Deterministic properties (level-rule optimality, no level skipping,
    candidate monotonicity) raise :class:`InvariantViolation` when ``strict``.
    Pull balance at first selection is a high-probability statement and is
    only tallied. Best-arm retention is tallied when a reward field is given.
    """

    def __init__(self, strict: bool = True, field=None, check_level_rule: bool = True):
        self.strict = strict
        self.field = field
        self.check_level_rule = check_level_rule
        self.rounds = 0
        self.level_violations = 0
        self.noskip_violations = 0
        self.monotonicity_violations = 0
        self.first_selections = 0
        self.balance_violations = 0
        self.best_arm_checks = 0
        self.best_arm_violations = 0
        self.eliminations = 0
        self._with_selected_descendant: set[tuple[int, tuple[int, ...]]] = set()
        self._previous: dict[BinId, int] = {}
        self.events: list[str] = []

    def _fail(self, counter: str, message: str) -> None:
        setattr(self, counter, getattr(self, counter) + 1)
        if len(self.events) < 100:
            self.events.append(message)
        if self.strict and counter != "balance_violations" and counter != "best_arm_violations":
            raise InvariantViolation(message)

    def on_selection(self, policy: AdaptiveBandit, x, fine, path, inherited: int, survivors: int) -> None:
        self.rounds += 1
        cfg = policy.config
        t = policy.t
        node = path[-1]
        depth = len(path) - 1
        bid = node.bin_id

        if self.check_level_rule:
            r_t = 2.0 ** -depth
            best = phi_min(policy.tree, fine, path, cfg)
            if not r_t <= 2.0 * best:
                self._fail("level_violations", f"round {t}: r_t={r_t} > 2*min phi={2 * best}")

        first = node.first_selected is None
        key = (depth, bid.coords)
        if first:
            if key in self._with_selected_descendant:
                self._fail("noskip_violations", f"round {t}: {bid} first selected after a descendant")
            self.first_selections += 1
            need = len(node.members) / (4 * cfg.n_arms)
            if any(node.pulls[i] < need for i in _arms(inherited)):
                self._fail("balance_violations", f"round {t}: pull imbalance in {bid}")
        for anc in path[:-1]:
            self._with_selected_descendant.add((anc.bin_id.depth, anc.bin_id.coords))

        prev = self._previous.get(bid)
        if prev is not None and survivors & ~prev:
            self._fail("monotonicity_violations", f"round {t}: {bid} regained an arm")
        for anc in path[:-1]:
            if survivors & ~anc.candidates:
                self._fail("monotonicity_violations", f"round {t}: {bid} holds an arm its ancestor dropped")
        self._previous[bid] = survivors
        if survivors != inherited:
            self.eliminations += 1

        if self.field is not None:
            self.best_arm_checks += 1
            means = self.field.means(bid.center()[None, :])[0]
            best_arms = np.flatnonzero(means == means.max())
            if not any(survivors >> int(i) & 1 for i in best_arms):
                self._fail("best_arm_violations", f"round {t}: best arm at centre of {bid} eliminated")

    def summary(self) -> dict[str, int]:
        return {
            "rounds": self.rounds,
            "level_violations": self.level_violations,
            "noskip_violations": self.noskip_violations,
            "monotonicity_violations": self.monotonicity_violations,
            "first_selections": self.first_selections,
            "balance_violations": self.balance_violations,
            "best_arm_checks": self.best_arm_checks,
            "best_arm_violations": self.best_arm_violations,
            "eliminations": self.eliminations,
        }


def phi_min(tree: PartitionTree, fine, path: list[BinNode], config: PolicyConfig) -> float:
    """Minimum over all levels (to ``max_depth``) of the bias-variance score.

    Counts below the selected bin are recomputed from the log.
    """
    from .diagnostics import phi

    counts = [len(n.members) for n in path]
    depth = len(path)
    if depth <= tree.max_depth:
        # the first infeasible child was materialized by select_level
        child = tree.levels[depth][tree.key(fine, depth)]
        counts += tree.deep_counts(fine, child, tree.max_depth)
    best = math.inf
    for depth, n in enumerate(counts):
        best = min(best, phi(n, 2.0 ** -depth, config.n_arms, config.delta, config.lam, config.level_coef))
        if n == 0:
            break
    return best
