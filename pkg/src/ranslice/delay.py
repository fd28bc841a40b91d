"""Per-flow delay model: M/M/1 queueing, transmission and propagation legs,
budget checks, queue-status and orchestration signals."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

FIBER_PROPAGATION_MPS = 2e8


@dataclass(frozen=True)
class FlowStats:
    """Traffic of one (car, slice) flow."""

    arrival_rate: float  # packets/second
    service_rate: float  # packets/second
    packet_size: float  # bytes
    assignment: int = 1  # packet-to-slice mapping indicator

    def __post_init__(self):
        if self.arrival_rate < 0 or self.service_rate < 0:
            raise ValueError("rates must be >= 0")
        if self.packet_size < 0:
            raise ValueError("packet_size must be >= 0")


@dataclass(frozen=True)
class DelayBreakdown:
    queueing: float
    wireless_tx: float
    fronthaul_tx: float
    propagation: float

    @property
    def total(self) -> float:
        return self.queueing + self.wireless_tx + self.fronthaul_tx + self.propagation


@dataclass(frozen=True)
class QueueStatus:
    occupancy: float  # expected packets waiting
    status: float  # buffer headroom clipped at the threshold


def queueing_delay(flow: FlowStats) -> float:
    """M/M/1 sojourn time 1/(mu - lambda); infinite for a saturated queue.

    Flows not assigned to the slice contribute no queueing delay.  An
    unstable queue (mu <= lambda) is a valid state, not an error: the delay
    budget simply can never be met.
    """
    if flow.assignment == 0:
        return 0.0
    if flow.service_rate > flow.arrival_rate:
        return flow.assignment / (flow.service_rate - flow.arrival_rate)
    return math.inf


def tx_delays(
    flow: FlowStats,
    car_rate_bps: float,
    fronthaul_capacity_bps: float,
    fronthaul_length_m: float,
    propagation_speed_mps: float = FIBER_PROPAGATION_MPS,
):
    """(wireless, fronthaul, propagation) legs for one packet of the flow."""
    bits = 8.0 * flow.packet_size
    if bits == 0:
        wireless = 0.0
    elif car_rate_bps == 0:
        wireless = math.inf
    else:
        wireless = bits / car_rate_bps
    fronthaul = bits / fronthaul_capacity_bps
    propagation = fronthaul_length_m / propagation_speed_mps
    return wireless, fronthaul, propagation


def budget_fulfillment(total_s: float, budget_s: float) -> int:
    """1 iff the end-to-end delay meets the budget (boundary inclusive)."""
    return 1 if total_s <= budget_s else 0


def slice_satisfaction(served, fulfillments) -> float:
    """Fraction of the slice's cars that were served within budget.

    ``served`` are the per-car RB-grant indicators and ``fulfillments`` the
    per-car budget indicators, aligned.  A slice with no subscribed cars has
    no demand and reports 0.
    """
    served = list(served)
    fulfillments = list(fulfillments)
    if len(served) != len(fulfillments):
        raise ValueError("served and fulfillments must align")
    if not served:
        return 0.0
    return sum(z * xi for z, xi in zip(served, fulfillments)) / len(served)


def queue_status(buffer_capacity: float, buffer_threshold: float, occupancy: float) -> QueueStatus:
    """Headroom signal: capacity minus occupancy, floored at the threshold."""
    return QueueStatus(occupancy=occupancy, status=max(buffer_capacity - occupancy, buffer_threshold))


def orchestration(status: float, buffer_capacity: float, buffer_threshold: float) -> float:
    """Scaling factor derived from the queue status.

    Terminate (status == capacity, i.e. zero demand) is checked before the
    scale-down branch because capacity > threshold makes the two overlap.
    """
    if status == buffer_capacity:
        return 0.0
    if status == buffer_threshold:
        return buffer_capacity / buffer_threshold
    if status > buffer_threshold:
        return buffer_threshold / buffer_capacity
    return 1.0


@dataclass(frozen=True)
class MM1Result:
    packets: int
    mean_system_time: float
    mean_queue_wait: float
    utilization: float


def simulate_mm1(arrival_rate: float, service_rate: float, packets: int, seed: int = 0) -> MM1Result:
    """Event-driven single-server FIFO queue with exponential interarrivals
    and service times.  Independent check for the 1/(mu - lambda) formula."""
    if packets < 1:
        raise ValueError("need at least one packet")
    rng = np.random.default_rng(seed)
    arrivals = np.cumsum(rng.exponential(1.0 / arrival_rate, packets))
    services = rng.exponential(1.0 / service_rate, packets)
    departures = np.empty(packets)
    prev = 0.0
    busy = 0.0
    for i in range(packets):
        start = arrivals[i] if arrivals[i] > prev else prev
        prev = start + services[i]
        departures[i] = prev
        busy += services[i]
    system = departures - arrivals
    return MM1Result(
        packets=packets,
        mean_system_time=float(system.mean()),
        mean_queue_wait=float((system - services).mean()),
        utilization=float(busy / departures[-1]),
    )
