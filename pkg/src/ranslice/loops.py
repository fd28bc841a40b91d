"""The two control loops' decision surfaces.

Loop 1 (one actor per vO-DU) schedules a slice's RB cells to cars each tick
and reports the coupling feedback nu = assigned * orchestration - budget.
Loop 2 (the learner/actor) turns nu into budget deltas at a slower cadence.
Reward terms follow the hinge convention: a constraint contributes 0 while
it holds and a weighted negative margin once violated; the literal flag
restores the raw linear margins instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Mapping, Sequence

import numpy as np

LOOP2_PERIOD_TICKS = 20  # near-real-time band vs. the per-TTI band


class LoopAction(IntEnum):
    KEEP = 0
    SCALE_UP = 1
    SCALE_DOWN = 2
    TERMINATE = 3


@dataclass(frozen=True)
class PenaltyWeights:
    """Per-constraint penalty rates; each violated unit costs this much."""

    fronthaul_per_bps: float = 1e-6
    rb_reuse: float = 1.0
    coupling_per_rb: float = 0.1
    placement: float = 1.0
    capacity_per_rb: float = 0.05


@dataclass(frozen=True)
class Loop1State:
    """(cars served, orchestration, queue status) seen by a slice's actor."""

    cars_served: int
    orchestration: float
    queue_status: float

    def encode(self, max_cars: int, buffer_capacity: float, buffer_threshold: float) -> np.ndarray:
        up = buffer_capacity / buffer_threshold
        span = buffer_capacity - buffer_threshold
        return np.array(
            [
                self.cars_served / max(max_cars, 1),
                self.orchestration / up,
                (self.queue_status - buffer_threshold) / span,
            ]
        )


@dataclass(frozen=True)
class Loop2State:
    """(free RBs, usage, slice budget) at one (vO-DU, slice) decision point."""

    free_rbs: int
    usage: float
    slice_budget: int

    def encode(self, capacity: int) -> np.ndarray:
        cap = max(capacity, 1)
        return np.array([self.free_rbs / cap, self.usage, self.slice_budget / cap])


@dataclass(frozen=True)
class CouplingFeedback:
    """Signed RB gap between served demand and the slice budget.

    nu = 0 when demand matches the budget exactly; nu = -budget is the
    terminate signal (nothing was served).
    """

    nu: float


@dataclass(frozen=True)
class ScheduleResult:
    cells_by_car: dict  # car_id -> [(tti, subband), ...]
    effective_budget: int
    assigned: int
    demand: int
    nu: float


def effective_budget(
    budget: int, action: LoopAction, free_rbs: int, buffer_capacity: float, buffer_threshold: float
) -> int:
    """Apply the action's scaling to the slice budget before scheduling.

    Scale-up requests ceil(budget * capacity/threshold) and is clamped to the
    slice budget plus the vO-DU's free RBs; scale-down keeps
    floor(budget * threshold/capacity); terminate schedules nothing.
    """
    if action == LoopAction.TERMINATE:
        return 0
    if action == LoopAction.SCALE_UP:
        want = math.ceil(budget * buffer_capacity / buffer_threshold)
        return min(want, budget + max(free_rbs, 0))
    if action == LoopAction.SCALE_DOWN:
        return math.floor(budget * buffer_threshold / buffer_capacity)
    return budget


def loop1_schedule(
    budget: int,
    free_rbs: int,
    action: LoopAction,
    demands: Sequence[tuple],
    omega: float,
    buffer_capacity: float = 200.0,
    buffer_threshold: float = 150.0,
) -> ScheduleResult:
    """Grant the slice's RB cells to cars round-robin over their demand.

    ``demands`` is an ordered sequence of (car_id, rb_count) pairs; the order
    fixes the round-robin rotation.  Cells are (tti=0, subband=j) within the
    slice's own grid, so orthogonality holds by construction.

    The coupling feedback is the demand/budget gap against the pre-action
    budget: nu = demand * omega - budget.  Using demanded rather than granted
    RBs keeps the signal alive when the budget itself caps the grants (a
    starved slice must still be able to report positive pressure).
    """
    eff = effective_budget(budget, action, free_rbs, buffer_capacity, buffer_threshold)
    remaining = {car: max(int(d), 0) for car, d in demands}
    order = [car for car, _ in demands]
    demand = sum(remaining.values())
    cells_by_car = {car: [] for car in order}
    assigned = 0
    while assigned < eff:
        progressed = False
        for car in order:
            if assigned >= eff:
                break
            if remaining[car] > 0:
                cells_by_car[car].append((0, assigned))
                remaining[car] -= 1
                assigned += 1
                progressed = True
        if not progressed:
            break
    nu = demand * omega - budget
    return ScheduleResult(
        cells_by_car={c: cells for c, cells in cells_by_car.items() if cells},
        effective_budget=eff,
        assigned=assigned,
        demand=demand,
        nu=nu,
    )


def _hinge(margin: float) -> float:
    return min(0.0, margin)


def loop1_reward(
    phi: float,
    fronthaul_load_bps: float,
    fronthaul_capacity_bps: float,
    rb_assign_counts: Sequence[int],
    nu: float,
    weights: PenaltyWeights,
    w: float = 1.0,
    literal: bool = False,
) -> float:
    """Intra-slice QoS reward: satisfaction plus constraint terms.

    ``rb_assign_counts`` is the number of cars granted each RB cell of the
    slice's grid.  With every constraint slack the reward reduces to w * phi.
    """
    fronthaul_margin = fronthaul_capacity_bps - fronthaul_load_bps
    if literal:
        orth = sum(1.0 - c for c in rb_assign_counts)
        return (
            w * phi
            + weights.fronthaul_per_bps * fronthaul_margin
            + weights.rb_reuse * orth
            + weights.coupling_per_rb * (-nu)
        )
    orth = sum(_hinge(1.0 - c) for c in rb_assign_counts)
    return (
        w * phi
        + weights.fronthaul_per_bps * _hinge(fronthaul_margin)
        + weights.rb_reuse * orth
        + weights.coupling_per_rb * _hinge(-nu)
    )


def loop2_reward(
    usage: float,
    slice_vodu_counts: Sequence[int],
    vodu_capacity: int,
    placed_budget_sum: int,
    nu_total: float,
    weights: PenaltyWeights,
    y: float = 1.0,
    total_rbs: int | None = None,
    literal: bool = False,
) -> float:
    """Per-vO-DU utilization reward with placement and capacity terms.

    ``slice_vodu_counts`` is, per hosted slice, the number of vO-DUs the
    slice is placed on (1 when well-formed).  The capacity margin treats a
    positive nu (demand above budget) as pressure toward a violation; the
    literal form keeps the raw printed margins against the total RB pool.
    """
    if literal:
        pool = vodu_capacity if total_rbs is None else total_rbs
        placement = 1.0 - len(slice_vodu_counts)
        return (
            y * usage
            + weights.placement * placement
            + weights.capacity_per_rb * (pool - placed_budget_sum + nu_total)
        )
    placement = sum(_hinge(1.0 - c) for c in slice_vodu_counts)
    capacity_margin = vodu_capacity - placed_budget_sum - nu_total
    return (
        y * usage
        + weights.placement * placement
        + weights.capacity_per_rb * _hinge(capacity_margin)
    )


def main_reward(r2: float, r1: float, phi_dis: float) -> float:
    """Interconnects the loops: loop-2 reward plus a discounted loop-1 term."""
    return r2 + phi_dis * r1


def loop2_delta(action: LoopAction, nu: float, budget: int, free_rbs: int) -> int:
    """Budget delta applied by loop 2 at one (vO-DU, slice) decision point.

    Scale-up grants the positive part of nu (at least 1 RB), clipped to the
    vO-DU's free pool; scale-down frees the negative part (at least 1 RB)
    but always leaves 1 RB behind, since zeroing a budget is terminate's
    job; terminate frees the whole budget back to the pool.
    """
    if action == LoopAction.TERMINATE:
        return -budget
    if action == LoopAction.SCALE_UP:
        if free_rbs <= 0:
            return 0
        want = max(1, int(round(max(nu, 0.0))))
        return min(want, free_rbs)
    if action == LoopAction.SCALE_DOWN:
        if budget <= 1:
            return 0
        want = max(1, int(round(max(-nu, 0.0))))
        return -min(want, budget - 1)
    return 0


def check_conservation(capacities: Sequence[int], budgets_by_vodu: Mapping[int, Sequence[int]], free_by_vodu: Mapping[int, int]) -> bool:
    """RBs are moved, never created: budgets + free pool == capacity everywhere."""
    for d, cap in enumerate(capacities):
        if sum(budgets_by_vodu.get(d, ())) + free_by_vodu.get(d, 0) != cap:
            return False
        if free_by_vodu.get(d, 0) < 0:
            return False
    return True
