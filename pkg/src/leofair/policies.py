"""Spectrum allocation policies and a brute-force optimality oracle."""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .categories import CATEGORIES
from .errors import ConfigError, DomainError, OracleCapacityError, QuotaUnfillableWarning

ORACLE_MAX_USERS = 12
ORACLE_MAX_STATES = 10**7


@dataclass(frozen=True)
class AllocationRequest:
    """One slot's view of the users: ids, category indices, linear SINR and demand."""

    user_ids: np.ndarray
    categories: np.ndarray
    sinr: np.ndarray
    demand: np.ndarray
    total_bandwidth_hz: float
    min_user_bandwidth_hz: float

    def __post_init__(self):
        for name in ("user_ids", "categories", "sinr", "demand"):
            object.__setattr__(self, name, np.asarray(getattr(self, name)))
        n = len(self.user_ids)
        if not (len(self.categories) == len(self.sinr) == len(self.demand) == n):
            raise DomainError("per-user arrays must have equal length")
        if self.total_bandwidth_hz <= 0 or self.min_user_bandwidth_hz <= 0:
            raise DomainError("bandwidths must be positive")
        if self.min_user_bandwidth_hz > self.total_bandwidth_hz:
            raise DomainError("minimum user bandwidth exceeds the total")

    @property
    def num_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_alloc(self) -> int:
        return max_users(self.total_bandwidth_hz, self.min_user_bandwidth_hz)


@dataclass(frozen=True)
class AllocationResult:
    """Bandwidth per user, aligned with the request arrays."""

    bandwidth: np.ndarray
    categories: np.ndarray
    user_ids: np.ndarray

    @property
    def allocated(self) -> np.ndarray:
        return self.bandwidth > 0

    def as_map(self) -> dict:
        return {int(u): float(b) for u, b in zip(self.user_ids, self.bandwidth)}

    def counts(self) -> dict:
        return {c: int(np.count_nonzero(self.allocated & (self.categories == i))) for i, c in enumerate(CATEGORIES)}

    def bandwidth_by_category(self) -> dict:
        return {c: float(self.bandwidth[self.categories == i].sum()) for i, c in enumerate(CATEGORIES)}


@dataclass(frozen=True)
class QuotaConfig:
    urban: float = 0.40
    suburban: float = 0.25
    rural: float = 0.35

    def __post_init__(self):
        vals = self.as_tuple()
        if any(not 0.0 < q < 1.0 for q in vals):
            raise ConfigError("each quota must lie strictly between 0 and 1")
        if not math.isclose(sum(vals), 1.0, abs_tol=1e-9):
            raise ConfigError("quotas must sum to 1")

    def as_tuple(self) -> tuple:
        return (self.urban, self.suburban, self.rural)

    def with_rural(self, rural: float) -> "QuotaConfig":
        """Set the rural quota and rescale the other two in proportion."""
        rest = self.urban + self.suburban
        scale = (1.0 - rural) / rest
        return QuotaConfig(self.urban * scale, 1.0 - rural - self.urban * scale, rural)


def max_users(total_bandwidth_hz: float, min_user_bandwidth_hz: float) -> int:
    # guard against 300e6 / 852e3 style ratios landing a hair under an integer
    ratio = total_bandwidth_hz / min_user_bandwidth_hz
    return int(math.floor(ratio + 1e-9))


def ranking(key: np.ndarray, user_ids: np.ndarray) -> np.ndarray:
    """Indices sorted by key descending, then user_id ascending."""
    return np.lexsort((user_ids, -np.asarray(key, dtype=float)))


def _top_n(req: AllocationRequest, key: np.ndarray) -> AllocationResult:
    n = min(req.n_alloc, req.num_users)
    bw = np.zeros(req.num_users)
    if n:
        bw[ranking(key, req.user_ids)[:n]] = req.total_bandwidth_hz / n
    return AllocationResult(bw, req.categories, req.user_ids)


def equal_static(req: AllocationRequest, rng: np.random.Generator) -> AllocationResult:
    """Random subset of N_alloc users, equal shares, blind to channel quality."""
    n = min(req.n_alloc, req.num_users)
    bw = np.zeros(req.num_users)
    chosen = rng.choice(req.num_users, size=n, replace=False) if n < req.num_users else np.arange(req.num_users)
    bw[chosen] = req.total_bandwidth_hz / n
    return AllocationResult(bw, req.categories, req.user_ids)


def snr_priority(req: AllocationRequest) -> AllocationResult:
    return _top_n(req, req.sinr)


def demand_proportional(req: AllocationRequest) -> AllocationResult:
    gmax = float(np.max(req.sinr)) if req.num_users else 1.0
    score = req.demand * (1.0 + req.sinr / gmax) if gmax > 0 else req.demand.astype(float)
    return _top_n(req, score)


def quota_slots(n_alloc: int, quotas: QuotaConfig, sizes) -> tuple:
    """User slots per category: at least one, never more than the category holds."""
    return tuple(min(max(1, math.floor(n_alloc * q + 1e-9)), int(size)) for q, size in zip(quotas.as_tuple(), sizes))


def fairshare(req: AllocationRequest, quotas: QuotaConfig = QuotaConfig(), redistribute: bool = False) -> AllocationResult:
    """Split W by quota, then give the best-SINR users of each category equal shares.

    With ``redistribute`` the bandwidth of an empty category is spread over the others in
    proportion to their quotas; by default it stays idle.
    """
    sizes = [int(np.count_nonzero(req.categories == i)) for i in range(len(CATEGORIES))]
    slots = quota_slots(req.n_alloc, quotas, sizes)
    budgets = [q * req.total_bandwidth_hz for q in quotas.as_tuple()]
    empty = [i for i, s in enumerate(sizes) if s == 0]
    for i in empty:
        warnings.warn(
            f"no {CATEGORIES[i]} users: quota {quotas.as_tuple()[i]:.2f} cannot be filled",
            QuotaUnfillableWarning,
            stacklevel=2,
        )
    if redistribute and empty and len(empty) < len(sizes):
        live = sum(quotas.as_tuple()[i] for i in range(len(sizes)) if sizes[i])
        budgets = [
            0.0 if sizes[i] == 0 else quotas.as_tuple()[i] / live * req.total_bandwidth_hz for i in range(len(sizes))
        ]
    bw = np.zeros(req.num_users)
    for i, n in enumerate(slots):
        if n == 0:
            continue
        members = np.flatnonzero(req.categories == i)
        order = members[ranking(req.sinr[members], req.user_ids[members])]
        bw[order[:n]] = budgets[i] / n
    return AllocationResult(bw, req.categories, req.user_ids)


def sum_rate(req: AllocationRequest, result: AllocationResult) -> float:
    """Total Shannon rate, summed exactly so the value does not depend on user order."""
    per_user = result.bandwidth * np.log2(1.0 + req.sinr)
    return math.fsum(float(x) for x in per_user)


def pareto_oracle(req: AllocationRequest, quotas: QuotaConfig | None = None, max_states: int = ORACLE_MAX_STATES) -> float:
    """Best sum-rate over every allocation with the same slot counts and equal shares.

    With ``quotas=None`` all users form one pool of ``min(N_alloc, U)`` slots.
    """
    if req.num_users > ORACLE_MAX_USERS:
        raise OracleCapacityError(f"{req.num_users} users exceeds the oracle limit of {ORACLE_MAX_USERS}")
    if quotas is None:
        groups = [np.arange(req.num_users)]
        slots = [min(req.n_alloc, req.num_users)]
        budgets = [req.total_bandwidth_hz]
    else:
        groups = [np.flatnonzero(req.categories == i) for i in range(len(CATEGORIES))]
        slots = list(quota_slots(req.n_alloc, quotas, [len(g) for g in groups]))
        budgets = [q * req.total_bandwidth_hz for q in quotas.as_tuple()]
    states = math.prod(math.comb(len(g), n) for g, n in zip(groups, slots))
    if states > max_states:
        raise OracleCapacityError(f"{states} candidate allocations exceeds {max_states}")

    choices = [list(itertools.combinations(g.tolist(), n)) for g, n in zip(groups, slots)]
    best = -math.inf
    for combo in itertools.product(*choices):
        bw = np.zeros(req.num_users)
        for members, n, budget in zip(combo, slots, budgets):
            if n:
                bw[list(members)] = budget / n
        value = sum_rate(req, AllocationResult(bw, req.categories, req.user_ids))
        best = max(best, value)
    return best


POLICY_NAMES = ("equal_static", "snr_priority", "demand_proportional", "fairshare")
DETERMINISTIC: dict[str, Callable] = {
    "snr_priority": snr_priority,
    "demand_proportional": demand_proportional,
}


def check_policy_names(names) -> list:
    out = list(names)
    for name in out:
        if name not in POLICY_NAMES:
            raise ConfigError(f"unknown policy {name!r} (known: {', '.join(POLICY_NAMES)})")
    if len(set(out)) != len(out):
        raise ConfigError("policies listed more than once")
    return out


def random_instance(rng: np.random.Generator, max_users: int = ORACLE_MAX_USERS) -> tuple[AllocationRequest, QuotaConfig]:
    """Small random request plus quotas, sized for the exhaustive oracle."""
    n = int(rng.integers(1, max_users + 1))
    categories = rng.integers(0, len(CATEGORIES), size=n)
    sinr = 10.0 ** (rng.uniform(-5.0, 40.0, size=n) / 10.0)
    demand = rng.lognormal(0.0, 0.5, size=n)
    total = float(rng.uniform(10e6, 400e6))
    slots = int(rng.integers(1, n + 3))
    b_min = total / (slots + float(rng.uniform(0.0, 0.9)))
    q = rng.dirichlet([2.0, 2.0, 2.0])
    q = np.clip(q, 0.05, 0.9)
    q = q / q.sum()
    quotas = QuotaConfig(float(q[0]), float(q[1]), float(1.0 - q[0] - q[1]))
    req = AllocationRequest(np.arange(n), categories, sinr, demand, total, b_min)
    return req, quotas
