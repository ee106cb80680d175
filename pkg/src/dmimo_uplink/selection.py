"""Collaborator subset selection for D-MIMO uplink.

Within one second the serving UE first multicasts for T1 at C1 bits/s and
the M-DAA then forwards the same bits for T2 at C2 bits/s, so
C1*T1 = C2*T2 with T1 + T2 = 1 and the delivered bits are C1*C2/(C1+C2).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .capacity import subset_masks

MAX_EXHAUSTIVE = 20

Phase2Eval = Callable[[Sequence[int]], float]


class Objective(str, enum.Enum):
    HARMONIC = "harmonic"  # delivered bits C1*C2/(C1+C2)
    MIN_RATE = "min_rate"  # min(C1, C2)


class Method(str, enum.Enum):
    EXHAUSTIVE = "Exhaustive"
    GREEDY = "Greedy"
    ALL = "All"


@dataclass(frozen=True)
class DmimoThroughput:
    c1: float  # bits/s, inf when there is no Phase 1
    c2: float  # bits/s
    t1: float  # s
    t2: float  # s
    bits_delivered: float
    baseline_bits: float | None = None

    @property
    def relative_improvement(self) -> float:
        if not self.baseline_bits:
            return math.nan
        return self.bits_delivered / self.baseline_bits

    def objective(self, kind: Objective | str = Objective.HARMONIC) -> float:
        if Objective(kind) is Objective.HARMONIC:
            return self.bits_delivered
        return min(self.c1, self.c2)


@dataclass(frozen=True)
class SelectionResult:
    chosen_set: tuple[int, ...]
    objective: float
    subsets_evaluated: int
    method: Method
    throughput: DmimoThroughput
    trace: tuple[float, ...] = ()


def combine_phases(C1: float, C2: float, baseline_bits: float | None = None) -> DmimoThroughput:
    """Time-share one second between multicast and joint transmission.

    An infinite C1 means no Phase 1 is needed (T1 = 0). If either rate is
    zero nothing gets through; by convention T1 = 1 then.
    """
    if C1 < 0 or C2 < 0 or math.isnan(C1) or math.isnan(C2):
        raise ValueError(f"capacities must be >= 0, got C1={C1}, C2={C2}")
    if C1 == 0 or C2 == 0:
        return DmimoThroughput(C1, C2, 1.0, 0.0, 0.0, baseline_bits)
    if math.isinf(C1) and math.isinf(C2):
        raise ValueError("C1 and C2 cannot both be infinite")
    if math.isinf(C1):
        return DmimoThroughput(C1, C2, 0.0, 1.0, C2, baseline_bits)
    if math.isinf(C2):
        return DmimoThroughput(C1, C2, 1.0, 0.0, C1, baseline_bits)
    total = C1 + C2
    return DmimoThroughput(C1, C2, C2 / total, C1 / total, C1 * C2 / total, baseline_bits)


def _check_subset(subset: Sequence[int], n: int) -> tuple[int, ...]:
    key = tuple(sorted(int(i) for i in subset))
    if len(set(key)) != len(key) or any(i < 0 or i >= n for i in key):
        raise IndexError(f"subset {key} out of range for {n} collaborators")
    return key


def evaluate_subset(
    subset: Sequence[int],
    phase1_rates: Sequence[float],
    phase2_eval: Phase2Eval,
    B1: float,
    B2: float,
) -> DmimoThroughput:
    """D-MIMO throughput when ``subset`` of the collaborators joins the serving UE.

    ``phase1_rates`` are the per-collaborator multicast rates (bits/s/Hz);
    ``phase2_eval`` maps a collaborator subset to the Phase-2 rate of that
    subset plus the serving UE. The empty subset is direct transmission.
    """
    rates = np.asarray(phase1_rates, dtype=float)
    key = _check_subset(subset, rates.size)
    baseline = B2 * phase2_eval(())
    c1 = B1 * float(rates[list(key)].min()) if key else math.inf
    return combine_phases(c1, B2 * phase2_eval(key), baseline_bits=baseline)


def _objective_values(c1: np.ndarray, c2: np.ndarray, objective: Objective) -> np.ndarray:
    if objective is Objective.MIN_RATE:
        return np.minimum(c1, c2)
    with np.errstate(invalid="ignore", divide="ignore"):
        bits = np.where(np.isinf(c1), c2, c1 * c2 / (c1 + c2))
    return np.where((c1 == 0) | (c2 == 0), 0.0, bits)


def exhaustive_select(
    phase1_rates: Sequence[float],
    phase2_eval: Phase2Eval,
    B1: float,
    B2: float,
    objective: Objective | str = Objective.HARMONIC,
) -> SelectionResult:
    """Evaluate all 2**n collaborator subsets, the empty one included.

    Ties go to the smallest subset (then lexicographic order). If
    ``phase2_eval`` has a ``rates(masks)`` method it is used to score all
    subsets in one vectorized call.
    """
    objective = Objective(objective)
    rates = np.asarray(phase1_rates, dtype=float)
    n = rates.size
    if n > MAX_EXHAUSTIVE:
        raise ValueError(f"exhaustive search is capped at {MAX_EXHAUSTIVE} collaborators, got {n}")
    masks = subset_masks(n)
    batch = getattr(phase2_eval, "rates", None)
    if batch is not None:
        r2 = np.asarray(batch(masks), dtype=float)
    else:
        r2 = np.array([phase2_eval(tuple(np.flatnonzero(m))) for m in masks])
    c1 = B1 * np.where(masks, rates[None, :], np.inf).min(axis=1, initial=np.inf)
    c2 = B2 * r2
    values = _objective_values(c1, c2, objective)
    best = int(np.argmax(values))
    chosen = tuple(int(i) for i in np.flatnonzero(masks[best]))
    tp = combine_phases(float(c1[best]), float(c2[best]), baseline_bits=float(c2[0]))
    return SelectionResult(chosen, float(values[best]), len(masks), Method.EXHAUSTIVE, tp)


def greedy_select(
    phase1_rates: Sequence[float],
    phase2_eval: Phase2Eval,
    B1: float,
    B2: float,
    objective: Objective | str = Objective.HARMONIC,
) -> SelectionResult:
    """Phase-1-first greedy selection.

    Collaborators are ranked by multicast rate (descending, ties by index).
    The start set is the largest top-K whose K-th multicast throughput
    B1*R_K still covers the Phase-2 throughput of that set; when no K
    qualifies all collaborators are taken. Next-ranked collaborators are
    then added one at a time until an addition fails to improve the
    objective. Direct transmission wins if it beats the result.
    """
    objective = Objective(objective)
    rates = np.asarray(phase1_rates, dtype=float)
    n = rates.size
    cache: dict[tuple[int, ...], DmimoThroughput] = {}

    def score(subset: Sequence[int]) -> DmimoThroughput:
        key = tuple(sorted(subset))
        if key not in cache:
            cache[key] = evaluate_subset(key, rates, phase2_eval, B1, B2)
        return cache[key]

    empty = score(())
    if n == 0:
        return SelectionResult((), empty.objective(objective), len(cache), Method.GREEDY, empty, (empty.objective(objective),))

    order = sorted(range(n), key=lambda i: (-rates[i], i))
    k_start = n
    for k in range(n, 0, -1):
        top = order[:k]
        if B1 * rates[order[k - 1]] >= score(top).c2:
            k_start = k
            break

    current = order[:k_start]
    best = score(current)
    trace = [best.objective(objective)]
    for nxt in order[k_start:]:
        cand = score(current + [nxt])
        if cand.objective(objective) > best.objective(objective):
            current, best = current + [nxt], cand
            trace.append(best.objective(objective))
        else:
            break

    if empty.objective(objective) > best.objective(objective):
        current, best = [], empty
    return SelectionResult(
        tuple(sorted(current)), best.objective(objective), len(cache), Method.GREEDY, best, tuple(trace)
    )


def select_all(
    phase1_rates: Sequence[float],
    phase2_eval: Phase2Eval,
    B1: float,
    B2: float,
    objective: Objective | str = Objective.HARMONIC,
) -> SelectionResult:
    n = len(phase1_rates)
    tp = evaluate_subset(range(n), phase1_rates, phase2_eval, B1, B2)
    return SelectionResult(tuple(range(n)), tp.objective(objective), 1, Method.ALL, tp)


SELECTORS = {
    Method.EXHAUSTIVE: exhaustive_select,
    Method.GREEDY: greedy_select,
    Method.ALL: select_all,
}
