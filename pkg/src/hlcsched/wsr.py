"""Greedy weighted sum-rate user selection.

Users are committed one per round: each round evaluates every unscheduled
candidate with a freshly recomputed RZF precoder and equal power split, and
commits the candidate with the largest weighted sum-rate if it strictly
improves on the incumbent.  Selection stops when no candidate improves the
WSR or when n_t streams are in use.
"""

from dataclasses import dataclass

import numpy as np

from .mimo_phy import LinkBudget, equal_power, rates, rzf_precoder

# Floor applied to priority weights before scheduling; greedy selection is
# invariant to positive scaling of w, so the absolute value is immaterial.
WEIGHT_FLOOR = 1e-9

# Relative strict-improvement threshold; avoids committing users on numerical
# noise in the candidate WSR comparison.
IMPROVEMENT_RTOL = 1e-12


def floor_weights(w: np.ndarray) -> np.ndarray:
    """Clamp weights to [WEIGHT_FLOOR, inf); Gaussian actions can go negative."""
    return np.maximum(np.asarray(w, dtype=float), WEIGHT_FLOOR)


@dataclass
class ScheduleDecision:
    """One slot's scheduling output."""

    scheduled: "tuple[int, ...]"  # commit order
    precoder: np.ndarray  # (n_t, m), columns aligned with `scheduled`
    powers: np.ndarray  # (m,) watts, aligned with `scheduled`
    rates: np.ndarray  # (k,) bits/s, zero for unscheduled users
    wsr: float
    alpha: float


def _empty_decision(k: int, n_t: int, alpha: float) -> ScheduleDecision:
    return ScheduleDecision(
        scheduled=(),
        precoder=np.zeros((n_t, 0), dtype=complex),
        powers=np.zeros(0),
        rates=np.zeros(k),
        wsr=0.0,
        alpha=alpha,
    )


def _evaluate(h, selected, link, alpha):
    v = rzf_precoder(h[selected], alpha)
    power = equal_power(link.total_power_w, len(selected))
    r = rates(h, selected, v, power, link)
    return v, np.full(len(selected), power), r


def greedy_wsr(h: np.ndarray, w, link: LinkBudget, alpha: float) -> ScheduleDecision:
    """Greedy user selection maximizing sum_i w_i R_i.

    Ties between candidates break toward the lowest user index.  If every
    weight is zero the single user with the best unweighted rate is scheduled
    (documented fallback; floored weights never trigger it).
    """
    h = np.asarray(h, dtype=complex)
    k, n_t = h.shape
    w = np.asarray(w, dtype=float)
    if w.shape != (k,):
        raise ValueError(f"weight vector length {w.shape} does not match {k} users")
    if np.any(w < 0.0):
        raise ValueError("weights must be nonnegative (floor the action first)")

    if np.all(w == 0.0):
        best_u, best_rate, best = 0, -1.0, None
        for u in range(k):
            v, powers, r = _evaluate(h, [u], link, alpha)
            if r[u] > best_rate:
                best_u, best_rate, best = u, r[u], (v, powers, r)
        v, powers, r = best
        return ScheduleDecision((best_u,), v, powers, r, 0.0, alpha)

    selected: list[int] = []
    incumbent = _empty_decision(k, n_t, alpha)
    while len(selected) < min(n_t, k):
        best_u, best_eval, best_wsr = None, None, -np.inf
        for u in range(k):
            if u in selected:
                continue
            candidate = selected + [u]
            v, powers, r = _evaluate(h, candidate, link, alpha)
            wsr_val = float(w @ r)
            if wsr_val > best_wsr:
                best_u, best_eval, best_wsr = u, (v, powers, r), wsr_val
        if best_u is None or best_wsr <= incumbent.wsr + IMPROVEMENT_RTOL * abs(incumbent.wsr):
            break
        selected.append(best_u)
        v, powers, r = best_eval
        incumbent = ScheduleDecision(tuple(selected), v, powers, r, best_wsr, alpha)
    return incumbent


def wsr_value(decision: ScheduleDecision, w) -> float:
    """Recompute sum_{i in B} w_i R_i from a decision (audit helper)."""
    w = np.asarray(w, dtype=float)
    return float(sum(w[i] * decision.rates[i] for i in decision.scheduled))
