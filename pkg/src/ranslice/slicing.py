"""Slice creation for auction winners and round-robin placement on vO-DUs."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

DEFAULT_BUFFER_CAPACITY = 200  # packets
DEFAULT_BUFFER_THRESHOLD = 150  # packets


@dataclass(frozen=True)
class Service:
    """A subscribable service with a hard per-packet delay budget."""

    id: int
    delay_budget_s: float
    packet_size_range: tuple  # (min_bytes, max_bytes)

    def __post_init__(self):
        lo, hi = self.packet_size_range
        if not 0 < lo <= hi:
            raise ValueError("packet_size_range must satisfy 0 < min <= max")
        if not 0.005 <= self.delay_budget_s <= 0.300:
            raise ValueError("delay budget must lie in [5 ms, 300 ms]")

    @property
    def mean_packet_bytes(self) -> float:
        return 0.5 * (self.packet_size_range[0] + self.packet_size_range[1])


def default_service_catalog():
    """Seven-service catalog spanning 5..300 ms budgets.

    Packet sizes scale with the budget so the tightest services carry the
    smallest packets; every range stays inside the [1 kB, 10 MB] envelope.
    """
    budgets_ms = [5, 10, 20, 50, 100, 150, 300]
    packet_ranges = [
        (1_000, 2_000),
        (2_000, 4_000),
        (4_000, 8_000),
        (8_000, 16_000),
        (16_000, 32_000),
        (32_000, 64_000),
        (64_000, 128_000),
    ]
    return [
        Service(id=i, delay_budget_s=b / 1e3, packet_size_range=r)
        for i, (b, r) in enumerate(zip(budgets_ms, packet_ranges))
    ]


@dataclass
class Slice:
    """A slice binds one winning (tenant, service) pair to an RB budget."""

    id: int
    service_id: int
    tenant_id: object
    rb_budget: int
    vodu_id: int | None = None
    buffer_capacity: int = DEFAULT_BUFFER_CAPACITY
    buffer_threshold: int = DEFAULT_BUFFER_THRESHOLD

    def __post_init__(self):
        if self.rb_budget < 0:
            raise ValueError("rb_budget must be >= 0")
        if not self.buffer_threshold < self.buffer_capacity:
            raise ValueError("buffer_threshold must be < buffer_capacity")


@dataclass
class VODU:
    """A virtualized DU holding an RB capacity and its hosted slices."""

    id: int
    capacity: int
    slices: list = field(default_factory=list)


def initial_split(total_rbs: int, vodu_count: int):
    """Equal RB split across vO-DUs, floor division; remainder stays pooled.

    Returns (capacities, residual).
    """
    if vodu_count <= 0:
        raise ValueError("vodu_count must be >= 1")
    share = total_rbs // vodu_count
    return [share] * vodu_count, total_rbs - share * vodu_count


def round_robin_place(slices: Sequence[Slice], vodus: Sequence[VODU]):
    """Place slices cyclically starting at the first vO-DU.

    A vO-DU whose remaining capacity cannot hold the slice's whole budget is
    skipped; a slice no vO-DU can hold is returned in ``unplaced`` rather
    than dropped.  Returns (placements, unplaced) where placements maps
    slice id -> vodu id.
    """
    used = {v.id: sum(s.rb_budget for s in slices if s.vodu_id == v.id) for v in vodus}
    placements = {}
    unplaced = []
    cursor = 0
    n = len(vodus)
    for sl in slices:
        if sl.vodu_id is not None:
            continue
        placed = False
        for probe in range(n):
            v = vodus[(cursor + probe) % n]
            if used[v.id] + sl.rb_budget <= v.capacity:
                sl.vodu_id = v.id
                v.slices.append(sl.id)
                used[v.id] += sl.rb_budget
                placements[sl.id] = v.id
                cursor = (cursor + probe + 1) % n
                placed = True
                break
        if not placed:
            unplaced.append(sl.id)
    return placements, unplaced


def rb_usage(vodu: VODU, slices_by_id: Mapping[int, Slice]) -> float:
    """Fraction of the vO-DU's capacity consumed by its slices' budgets."""
    if vodu.capacity == 0 or not vodu.slices:
        return 0.0
    return sum(slices_by_id[s].rb_budget for s in vodu.slices) / vodu.capacity


def capacity_ok(vodu: VODU, slices_by_id: Mapping[int, Slice]) -> bool:
    return sum(slices_by_id[s].rb_budget for s in vodu.slices) <= vodu.capacity
