"""Lazily materialized dyadic partition tree over [0, 1]^D.

Nodes are created the first time something queries them. A new child is
backfilled from its parent's member list and the observation log, so every
materialized node carries exact statistics from round 1 regardless of when
it was created.

Arms are 0-indexed. Rounds are 1-indexed.
"""
from __future__ import annotations

import math
from typing import NamedTuple, Sequence

import numpy as np

DEFAULT_MAX_DEPTH = 30


class BinId(NamedTuple):
    """A cell of the regular partition at side ``2**-depth``."""

    depth: int
    coords: tuple[int, ...]

    @property
    def side(self) -> float:
        return 2.0 ** -self.depth

    def parent(self) -> "BinId":
        if self.depth == 0:
            raise ValueError("the root has no parent")
        return BinId(self.depth - 1, tuple(c >> 1 for c in self.coords))

    def ancestor(self, depth: int) -> "BinId":
        shift = self.depth - depth
        if shift < 0:
            raise ValueError("ancestor depth must not exceed the bin depth")
        return BinId(depth, tuple(c >> shift for c in self.coords))

    def is_ancestor_of(self, other: "BinId") -> bool:
        """True for strict ancestors only."""
        return other.depth > self.depth and other.ancestor(self.depth) == self

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array(self.coords, dtype=float) * self.side
        return lo, lo + self.side

    def center(self) -> np.ndarray:
        return (np.array(self.coords, dtype=float) + 0.5) * self.side

    def contains(self, x: Sequence[float]) -> bool:
        return bin_of(x, self.depth) == self


def bin_of(x: Sequence[float], depth: int) -> BinId:
    """Return the cell at ``depth`` containing ``x``.

    Cells are half-open; the face ``x_j = 1`` belongs to the last cell.
    """
    if depth < 0:
        raise ValueError(f"depth must be nonnegative, got {depth}")
    size = 1 << depth
    coords = []
    for xj in x:
        if not 0.0 <= xj <= 1.0:
            raise ValueError(f"point {tuple(x)} is outside the unit cube")
        coords.append(min(math.floor(xj * size), size - 1))
    return BinId(depth, tuple(coords))


class ObservationLog:
    """Append-only record of (round, covariate, arm, reward).

    Round ``s`` lives in row ``s - 1``. ``arm == -1`` marks a round whose
    covariate was recorded without a pull.
    """

    def __init__(self, dimension: int, max_depth: int = DEFAULT_MAX_DEPTH, capacity: int = 1024):
        self.dimension = dimension
        self.max_depth = max_depth
        self.covariates = np.empty((capacity, dimension))
        # integer coordinates at max_depth; coarser coordinates are right shifts
        self.fine = np.empty((capacity, dimension), dtype=np.int64)
        self.arms = np.empty(capacity, dtype=np.int64)
        self.rewards = np.empty(capacity)
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def _grow(self) -> None:
        cap = 2 * len(self.arms)
        for name in ("covariates", "fine", "arms", "rewards"):
            old = getattr(self, name)
            new = np.empty((cap,) + old.shape[1:], dtype=old.dtype)
            new[: self.size] = old[: self.size]
            setattr(self, name, new)

    def append(self, round_: int, x, fine, arm: int, reward: float) -> None:
        assert round_ == self.size + 1, f"round {round_} recorded out of order (log has {self.size})"
        if self.size == len(self.arms):
            self._grow()
        i = self.size
        self.covariates[i] = x
        self.fine[i] = fine
        self.arms[i] = arm
        self.rewards[i] = reward
        self.size += 1


class BinNode:
    """One materialized cell with its candidate arms and pull statistics."""

    __slots__ = ("bin_id", "members", "pulls", "sums", "candidates", "first_selected")

    def __init__(self, bin_id: BinId, n_arms: int, members=None, pulls=None, sums=None):
        self.bin_id = bin_id
        self.members: list[int] = members if members is not None else []
        self.pulls: list[int] = pulls if pulls is not None else [0] * n_arms
        self.sums: list[float] = sums if sums is not None else [0.0] * n_arms
        # bitmask over arms; inheritance is applied when the bin is selected
        self.candidates: int = (1 << n_arms) - 1
        self.first_selected: int | None = None

    @property
    def covariate_count(self) -> int:
        return len(self.members)

    @property
    def candidate_arms(self) -> frozenset[int]:
        return frozenset(i for i in range(len(self.pulls)) if self.candidates >> i & 1)

    def __repr__(self) -> str:
        return (
            f"BinNode(depth={self.bin_id.depth}, coords={self.bin_id.coords}, "
            f"count={len(self.members)}, pulls={self.pulls})"
        )


def regression_estimate(node: BinNode, arm: int) -> tuple[float, bool]:
    """Mean observed reward of ``arm`` in ``node`` and whether it is defined.

    With no pulls the estimate is 0 and the flag is False.
    """
    m = node.pulls[arm]
    if m == 0:
        return 0.0, False
    return node.sums[arm] / m, True


class PartitionTree:
    def __init__(self, n_arms: int, dimension: int = 2, max_depth: int = DEFAULT_MAX_DEPTH):
        if not 0 <= max_depth <= 52:
            raise ValueError("max_depth must lie in [0, 52]")
        self.n_arms = n_arms
        self.dimension = dimension
        self.max_depth = max_depth
        self._scale = float(1 << max_depth)
        self._top = (1 << max_depth) - 1
        self.log = ObservationLog(dimension, max_depth)
        # one dict per depth, keyed by packed integer coordinates
        self.levels: list[dict[int, BinNode]] = [dict() for _ in range(max_depth + 1)]
        self.levels[0][0] = BinNode(BinId(0, (0,) * dimension), n_arms)

    @property
    def root(self) -> BinNode:
        return self.levels[0][0]

    @property
    def rounds(self) -> int:
        return self.log.size

    def fine_coords(self, x: Sequence[float]) -> tuple[int, ...]:
        scale, top = self._scale, self._top
        out = []
        for xj in x:
            if not 0.0 <= xj <= 1.0:
                raise ValueError(f"point {tuple(x)} is outside the unit cube")
            c = int(xj * scale)
            out.append(c if c < top else top)
        return tuple(out)

    def key(self, fine: Sequence[int], depth: int) -> int:
        shift = self.max_depth - depth
        k = 0
        for j, c in enumerate(fine):
            k |= (c >> shift) << (depth * j)
        return k

    def get(self, bin_id: BinId) -> BinNode | None:
        """Return the node if already materialized, without creating it."""
        k = 0
        for j, c in enumerate(bin_id.coords):
            k |= c << (bin_id.depth * j)
        return self.levels[bin_id.depth].get(k)

    def nodes(self):
        for level in self.levels:
            yield from level.values()

    def materialized_depth(self) -> int:
        return max(d for d, level in enumerate(self.levels) if level)

    # -- materialization -------------------------------------------------

    def materialize_child(self, parent: BinNode, child_id: BinId) -> BinNode:
        """Create ``child_id`` (a child of ``parent``) with backfilled statistics."""
        assert child_id.depth == parent.bin_id.depth + 1 and child_id.parent() == parent.bin_id
        k = 0
        for j, c in enumerate(child_id.coords):
            k |= c << (child_id.depth * j)
        level = self.levels[child_id.depth]
        assert k not in level, f"{child_id} is already materialized"
        node = self._backfill(parent, child_id)
        level[k] = node
        return node

    def _backfill(self, parent: BinNode, child_id: BinId) -> BinNode:
        K = self.n_arms
        if not parent.members:
            return BinNode(child_id, K)
        log = self.log
        rows = np.array(parent.members, dtype=np.int64) - 1
        shift = self.max_depth - child_id.depth
        inside = np.all((log.fine[rows] >> shift) == np.array(child_id.coords), axis=1)
        rows = rows[inside]
        members = (rows + 1).tolist()
        arms = log.arms[rows]
        played = arms >= 0
        pulls = np.bincount(arms[played], minlength=K).tolist()
        # bincount accumulates in row order, matching incremental updates
        sums = np.bincount(arms[played], weights=log.rewards[rows][played], minlength=K).tolist()
        return BinNode(child_id, K, members, pulls, sums)

    def child_on_path(self, parent: BinNode, fine: Sequence[int], depth: int) -> BinNode:
        """Node at ``depth`` on the path of ``fine`` below ``parent``; created on demand."""
        k = self.key(fine, depth)
        node = self.levels[depth].get(k)
        if node is None:
            shift = self.max_depth - depth
            node = self.materialize_child(parent, BinId(depth, tuple(c >> shift for c in fine)))
        return node

    def path(self, x: Sequence[float], depth: int) -> list[BinNode]:
        """Nodes from the root down to ``depth`` containing ``x``, materializing as needed."""
        if depth > self.max_depth:
            raise ValueError(f"depth {depth} exceeds max_depth {self.max_depth}")
        fine = self.fine_coords(x)
        nodes = [self.root]
        for d in range(1, depth + 1):
            nodes.append(self.child_on_path(nodes[-1], fine, d))
        return nodes

    def materialize_all(self, depth: int) -> None:
        """Eagerly create every node down to ``depth``."""
        for d in range(1, depth + 1):
            for parent in list(self.levels[d - 1].values()):
                for offs in np.ndindex(*(2,) * self.dimension):
                    cid = BinId(d, tuple(2 * c + o for c, o in zip(parent.bin_id.coords, offs)))
                    if self.get(cid) is None:
                        self.materialize_child(parent, cid)

    # -- recording -------------------------------------------------------

    def observe(self, x: Sequence[float], arm: int, reward: float, fine=None) -> int:
        """Log one round and update every materialized node containing ``x``.

        Returns the round number. ``arm=-1`` records the covariate only.
        """
        if fine is None:
            fine = self.fine_coords(x)
        round_ = self.log.size + 1
        self.log.append(round_, x, fine, arm, reward)
        levels = self.levels
        M = self.max_depth
        for d in range(M + 1):
            shift = M - d
            k = 0
            for j, c in enumerate(fine):
                k |= (c >> shift) << (d * j)
            node = levels[d].get(k)
            if node is None:
                break
            node.members.append(round_)
            if arm >= 0:
                node.pulls[arm] += 1
                node.sums[arm] += reward
        return round_

    def record_covariate(self, x: Sequence[float], round_: int) -> None:
        """Record a covariate with no associated pull."""
        assert round_ == self.log.size + 1, f"round {round_} already recorded or skipped"
        self.observe(x, -1, 0.0)

    def covariate_count_at(self, x: Sequence[float], depth: int) -> int:
        return len(self.path(x, depth)[-1].members)

    def deep_counts(self, fine: Sequence[int], start: BinNode, stop_depth: int) -> list[int]:
        """Covariate counts for depths ``start.depth .. stop_depth`` on the path of ``fine``.

        Computed from ``start``'s member list and the log without materializing
        anything; the list ends early once a count reaches zero.
        """
        log = self.log
        rows = np.array(start.members, dtype=np.int64) - 1
        fine_rows = log.fine[rows]
        target = np.array(fine, dtype=np.int64)
        counts = [len(rows)]
        for d in range(start.bin_id.depth + 1, stop_depth + 1):
            if counts[-1] == 0:
                break
            shift = self.max_depth - d
            keep = np.all((fine_rows >> shift) == (target >> shift), axis=1)
            fine_rows = fine_rows[keep]
            counts.append(len(fine_rows))
        return counts
