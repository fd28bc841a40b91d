"""RB grid, imperfect-CSI channel, SNR and Shannon rates for scheduled cars."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Mapping

import numpy as np


@dataclass(frozen=True)
class Numerology:
    """One numerology's RB grid geometry for a slice.

    ``subbands * ttis`` is the number of schedulable RB cells the slice sees
    in a scheduling window.
    """

    index: int
    subcarrier_spacing_khz: float
    rb_bandwidth_hz: float
    subbands: int
    ttis: int
    tti_duration_s: float

    def __post_init__(self):
        if not 0 <= self.index <= 4:
            raise ValueError("numerology index must be in 0..4")
        if self.subbands < 0 or self.ttis < 0:
            raise ValueError("grid dimensions must be >= 0")

    @property
    def schedulable_rbs(self) -> int:
        return self.subbands * self.ttis

    def grid_cells(self):
        """Cells as (tti, subband) pairs, tti-major for deterministic order."""
        return [(t, f) for t in range(self.ttis) for f in range(self.subbands)]

    def for_slice(self, rb_count: int) -> "Numerology":
        """Grid holding exactly ``rb_count`` cells in a single TTI."""
        return replace(self, subbands=rb_count, ttis=1 if rb_count > 0 else 0)


def default_numerology(index: int = 1, subcarriers_per_rb: int = 12) -> Numerology:
    """30 kHz spacing / 0.5 ms TTI profile used throughout by default."""
    spacing = 15.0 * 2**index
    return Numerology(
        index=index,
        subcarrier_spacing_khz=spacing,
        rb_bandwidth_hz=spacing * 1e3 * subcarriers_per_rb,
        subbands=0,
        ttis=0,
        tti_duration_s=1e-3 / 2**index,
    )


@dataclass(frozen=True)
class ChannelState:
    """Estimated CSI plus its estimation error on one RB."""

    estimated_csi: complex
    estimation_error: complex
    tx_power: float
    noise_power: float

    def __post_init__(self):
        if self.tx_power <= 0:
            raise ValueError("tx_power must be > 0")
        if self.noise_power <= 0:
            raise ValueError("noise_power must be > 0")

    @property
    def gain(self) -> float:
        return abs(self.estimated_csi + self.estimation_error) ** 2


@dataclass(frozen=True)
class RBAssignment:
    car_id: int
    oru_id: int
    slice_id: int
    rb_index: tuple  # (tti, subband)
    decision: int = 1


def snr(
    channel: ChannelState,
    distance: float,
    placed: int,
    path_loss_exponent: float = 2.0,
    literal_channel: bool = False,
) -> float:
    """SNR on one RB, gated by the slice-placement indicator.

    The default path loss is distance**(-alpha); ``literal_channel`` retains
    the raw multiplicative-distance form for fidelity experiments even though
    it makes SNR grow with distance.
    """
    if distance <= 0:
        raise ValueError("distance must be > 0")
    if placed == 0:
        return 0.0
    pl = distance if literal_channel else distance ** (-path_loss_exponent)
    return placed * channel.gain * channel.tx_power * pl / channel.noise_power


def rb_rate(numerology: Numerology, snr_value: float, coverage: int) -> float:
    """Shannon rate of one RB in bits/second, gated by coverage."""
    return numerology.rb_bandwidth_hz * coverage * math.log2(1.0 + snr_value)


def car_rate(assignments: Iterable[RBAssignment], per_rb_rates: Mapping[tuple, float]) -> float:
    """Total rate of one car: sum of its granted RB rates."""
    return sum(per_rb_rates[a.rb_index] for a in assignments if a.decision == 1)


def check_orthogonality(assignments: Iterable[RBAssignment]):
    """Return [(key, car_ids)] for every RB cell granted to more than one car.

    Cells are keyed by (slice_id, tti, subband): slices own disjoint spectrum,
    so reuse is only a violation within one slice's grid.
    """
    users = {}
    for a in assignments:
        if a.decision != 1:
            continue
        users.setdefault((a.slice_id, *a.rb_index), []).append(a.car_id)
    return [(key, cars) for key, cars in users.items() if len(set(cars)) > 1]


class ChannelSampler:
    """Per-slice seeded CSI streams.

    Each slice draws its estimated CSI from an independent substream so that
    adding or removing slices does not perturb the others' channels.
    """

    def __init__(self, seed: int, error_var: float = 0.01):
        self.seed = seed
        self.error_var = error_var
        self._streams = {}

    def _rng(self, slice_id: int):
        rng = self._streams.get(slice_id)
        if rng is None:
            rng = np.random.default_rng(np.random.SeedSequence([self.seed, 0x6368, slice_id]))
            self._streams[slice_id] = rng
        return rng

    def gains(self, slice_id: int, n: int) -> np.ndarray:
        """|h|^2 per RB with h = estimate + error, unit-variance estimate."""
        if n == 0:
            return np.zeros(0)
        rng = self._rng(slice_id)
        est = rng.normal(0.0, math.sqrt(0.5), (n, 2))
        err = rng.normal(0.0, math.sqrt(self.error_var / 2.0), (n, 2))
        h = est + err
        return h[:, 0] ** 2 + h[:, 1] ** 2

    def sample_state(self, slice_id: int, tx_power: float, noise_power: float) -> ChannelState:
        rng = self._rng(slice_id)
        er, ei = rng.normal(0.0, math.sqrt(0.5), 2)
        nr, ni = rng.normal(0.0, math.sqrt(self.error_var / 2.0), 2)
        return ChannelState(
            estimated_csi=complex(er, ei),
            estimation_error=complex(nr, ni),
            tx_power=tx_power,
            noise_power=noise_power,
        )
