"""Scenario configuration: desk-scale defaults, JSON schema, validation.

The config file is a single versioned JSON document.  Field-by-field schema:

    version              int, currently 1
    seed                 master RNG seed
    steps                loop-1 ticks to simulate
    deterministic        single-threaded fixed-order execution
    actors               worker threads for the loop-1 actors (1 = in-line)
    flying_cars / ground_cars
    area                 {width_m, height_m}
    orus                 {count, coverage_radius_m, height_m,
                          fronthaul_capacity_bps, fronthaul_length_m}
    vodus                vO-DU count
    auction              {total_rbs, reserve_price, tenants,
                          price_range, quantity_range}
    services             [{id, delay_budget_ms, packet_size_range_bytes,
                           arrival_rate_range}]
    buffers              {capacity_pkts, threshold_pkts}
    channel              {path_loss_exponent, estimation_error_var,
                          tx_power_w, noise_power_w, literal_channel}
    numerology           {index, subcarriers_per_rb}
    penalties            {fronthaul_per_bps, rb_reuse, coupling_per_rb,
                          placement, capacity_per_rb}
    rl                   {learning_rate, discount, replay_capacity,
                          batch_size, n_step, target_sync_steps,
                          priority_exponent, priority_epsilon,
                          epsilon_start, epsilon_final, epsilon_anneal_frac,
                          actor_epsilon_base, layers, train_warmup}
    loops                {loop2_period_ticks, tick_s, phi_dis, qos_weight,
                          demand_safety, literal_reward}
    mobility             {ground_speed_mps, flying_speed_mps,
                          flying_height_m, heading_sigma,
                          coverage_budget_s (null = unlimited),
                          trace_csv (optional)}
    services_per_car     [min, max] subscriptions drawn per car
    propagation_speed_mps
    out_dir
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field

from .loops import PenaltyWeights

CONFIG_VERSION = 1


class ConfigError(ValueError):
    """Invalid scenario configuration; message references the offending key."""


@dataclass
class AreaConfig:
    width_m: float = 1200.0
    height_m: float = 800.0


@dataclass
class ORULayout:
    count: int = 6
    coverage_radius_m: float = 300.0
    height_m: float = 20.0
    fronthaul_capacity_bps: float = 1e9
    fronthaul_length_m: float = 2000.0


@dataclass
class AuctionParams:
    total_rbs: int = 273
    reserve_price: float = 15.0
    tenants: int = 10
    price_range: tuple = (10.0, 20.0)
    quantity_range: tuple = (6, 32)


@dataclass
class ServiceSpec:
    id: int
    delay_budget_ms: float
    packet_size_range_bytes: tuple
    arrival_rate_range: tuple  # packets/second per flow


def default_service_specs():
    """Seven-service catalog; traffic scales inversely with the budget so
    every service is schedulable at desk scale."""
    rows = [
        (0, 5, (1_000, 2_000), (40.0, 80.0)),
        (1, 10, (2_000, 4_000), (30.0, 60.0)),
        (2, 20, (4_000, 8_000), (20.0, 50.0)),
        (3, 50, (8_000, 16_000), (15.0, 40.0)),
        (4, 100, (16_000, 32_000), (10.0, 30.0)),
        (5, 150, (32_000, 64_000), (5.0, 15.0)),
        (6, 300, (64_000, 128_000), (2.0, 8.0)),
    ]
    return [ServiceSpec(*row) for row in rows]


@dataclass
class BufferConfig:
    capacity_pkts: int = 200
    threshold_pkts: int = 150


@dataclass
class ChannelConfig:
    path_loss_exponent: float = 2.0
    estimation_error_var: float = 0.01
    tx_power_w: float = 0.2
    noise_power_w: float = 1e-13
    literal_channel: bool = False


@dataclass
class NumerologyConfig:
    index: int = 1
    subcarriers_per_rb: int = 12


@dataclass
class RLConfig:
    learning_rate: float = 0.0001
    discount: float = 0.99
    replay_capacity: int = 50_000
    batch_size: int = 32
    n_step: int = 3
    target_sync_steps: int = 250
    priority_exponent: float = 0.6
    priority_epsilon: float = 0.01
    epsilon_start: float = 1.0
    epsilon_final: float = 0.02
    epsilon_anneal_frac: float = 0.2
    actor_epsilon_base: float = 0.8
    layers: tuple = (3, 64, 64, 4)
    train_warmup: int = 500
    train_per_tick: int = 2  # learner steps per loop-1 tick, per network
    # One Q-network per loop by default: the two loops' normalized states
    # overlap numerically but carry different value scales, and a shared
    # network cannot fit both (its loss plateaus and action ranking decays
    # to noise).
    shared_network: bool = False


@dataclass
class LoopConfig:
    loop2_period_ticks: int = 20
    tick_s: float = 0.01
    phi_dis: float = 0.0018
    qos_weight: float = 1.0
    demand_safety: float = 0.8
    literal_reward: bool = False


@dataclass
class MobilityConfig:
    ground_speed_mps: tuple = (5.0, 15.0)
    flying_speed_mps: tuple = (15.0, 40.0)
    flying_height_m: tuple = (50.0, 150.0)
    heading_sigma: float = 0.3
    coverage_budget_s: float | None = None  # None = containment only
    trace_csv: str | None = None


@dataclass
class ScenarioConfig:
    version: int = CONFIG_VERSION
    seed: int = 0
    steps: int = 10_000
    deterministic: bool = True
    actors: int = 1
    flying_cars: int = 3
    ground_cars: int = 12
    area: AreaConfig = field(default_factory=AreaConfig)
    orus: ORULayout = field(default_factory=ORULayout)
    vodus: int = 3
    auction: AuctionParams = field(default_factory=AuctionParams)
    services: list = field(default_factory=default_service_specs)
    buffers: BufferConfig = field(default_factory=BufferConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    numerology: NumerologyConfig = field(default_factory=NumerologyConfig)
    penalties: PenaltyWeights = field(default_factory=PenaltyWeights)
    rl: RLConfig = field(default_factory=RLConfig)
    loops: LoopConfig = field(default_factory=LoopConfig)
    mobility: MobilityConfig = field(default_factory=MobilityConfig)
    services_per_car: tuple = (1, 3)
    propagation_speed_mps: float = 2e8
    out_dir: str = "runs/default"

    def validate(self):
        if self.version != CONFIG_VERSION:
            raise ConfigError(f"version: expected {CONFIG_VERSION}, got {self.version}")
        if self.steps < 0:
            raise ConfigError("steps: must be >= 0")
        if self.vodus < 1:
            raise ConfigError("vodus: must be >= 1")
        if self.actors < 1:
            raise ConfigError("actors: must be >= 1")
        if self.flying_cars < 0 or self.ground_cars < 0:
            raise ConfigError("flying_cars/ground_cars: must be >= 0")
        if self.auction.total_rbs < 0:
            raise ConfigError("auction.total_rbs: must be >= 0")
        if self.auction.reserve_price < 0:
            raise ConfigError("auction.reserve_price: must be >= 0")
        lo, hi = self.auction.quantity_range
        if not 1 <= lo <= hi:
            raise ConfigError("auction.quantity_range: must satisfy 1 <= min <= max")
        ids = [s.id for s in self.services]
        if len(ids) != len(set(ids)):
            raise ConfigError("services: duplicate service ids")
        for s in self.services:
            if not 5 <= s.delay_budget_ms <= 300:
                raise ConfigError(f"services[{s.id}].delay_budget_ms: must be in [5, 300]")
            plo, phi = s.packet_size_range_bytes
            if not 1_000 <= plo <= phi <= 10_000_000:
                raise ConfigError(f"services[{s.id}].packet_size_range_bytes: must be within [1 kB, 10 MB]")
            rlo, rhi = s.arrival_rate_range
            if not 0 < rlo <= rhi:
                raise ConfigError(f"services[{s.id}].arrival_rate_range: must satisfy 0 < min <= max")
        if not self.buffers.threshold_pkts < self.buffers.capacity_pkts:
            raise ConfigError("buffers: threshold_pkts must be < capacity_pkts")
        if self.channel.tx_power_w <= 0 or self.channel.noise_power_w <= 0:
            raise ConfigError("channel: tx_power_w and noise_power_w must be > 0")
        if not 0 <= self.numerology.index <= 4:
            raise ConfigError("numerology.index: must be in 0..4")
        if self.rl.replay_capacity < 1:
            raise ConfigError("rl.replay_capacity: must be >= 1")
        if not 0 < self.rl.discount <= 1:
            raise ConfigError("rl.discount: must be in (0, 1]")
        if self.rl.n_step < 1:
            raise ConfigError("rl.n_step: must be >= 1")
        if tuple(self.rl.layers)[-1] != 4:
            raise ConfigError("rl.layers: output layer must have 4 actions")
        if tuple(self.rl.layers)[0] != 3:
            raise ConfigError("rl.layers: input layer must have 3 state components")
        if self.loops.loop2_period_ticks < 1:
            raise ConfigError("loops.loop2_period_ticks: must be >= 1")
        if self.loops.tick_s <= 0:
            raise ConfigError("loops.tick_s: must be > 0")
        if self.mobility.coverage_budget_s is not None and self.mobility.coverage_budget_s <= 0:
            raise ConfigError("mobility.coverage_budget_s: must be > 0 or null")
        return self

    @property
    def coverage_budget(self) -> float:
        b = self.mobility.coverage_budget_s
        return math.inf if b is None else b

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        # tuples -> lists happens implicitly on json.dump; keep asdict output
        return out

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        def build(klass, payload, key):
            if payload is None:
                return klass()
            if not isinstance(payload, dict):
                raise ConfigError(f"{key}: expected an object")
            allowed = {f.name for f in dataclasses.fields(klass)}
            unknown = set(payload) - allowed
            if unknown:
                raise ConfigError(f"{key}: unknown keys {sorted(unknown)}")
            coerced = {
                k: tuple(v) if isinstance(v, list) else v for k, v in payload.items()
            }
            return klass(**coerced)

        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
        kwargs = dict(data)
        kwargs["area"] = build(AreaConfig, data.get("area"), "area")
        kwargs["orus"] = build(ORULayout, data.get("orus"), "orus")
        kwargs["auction"] = build(AuctionParams, data.get("auction"), "auction")
        kwargs["buffers"] = build(BufferConfig, data.get("buffers"), "buffers")
        kwargs["channel"] = build(ChannelConfig, data.get("channel"), "channel")
        kwargs["numerology"] = build(NumerologyConfig, data.get("numerology"), "numerology")
        kwargs["penalties"] = build(PenaltyWeights, data.get("penalties"), "penalties")
        kwargs["rl"] = build(RLConfig, data.get("rl"), "rl")
        kwargs["loops"] = build(LoopConfig, data.get("loops"), "loops")
        kwargs["mobility"] = build(MobilityConfig, data.get("mobility"), "mobility")
        if "services" in data:
            specs = []
            for i, entry in enumerate(data["services"]):
                try:
                    specs.append(
                        ServiceSpec(
                            id=int(entry["id"]),
                            delay_budget_ms=float(entry["delay_budget_ms"]),
                            packet_size_range_bytes=tuple(entry["packet_size_range_bytes"]),
                            arrival_rate_range=tuple(entry["arrival_rate_range"]),
                        )
                    )
                except (KeyError, TypeError) as exc:
                    raise ConfigError(f"services[{i}]: {exc}") from exc
            kwargs["services"] = specs
        if "services_per_car" in data:
            kwargs["services_per_car"] = tuple(data["services_per_car"])
        return cls(**kwargs).validate()

    @classmethod
    def from_file(cls, path) -> "ScenarioConfig":
        with open(path) as fh:
            text = fh.read()
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
        try:
            return cls.from_dict(data)
        except ConfigError as exc:
            raise ConfigError(f"{path}: {exc}") from exc


def desk_config(**overrides) -> ScenarioConfig:
    """Default desk-scale profile: 10k ticks, 15 cars, full §-grade constants
    elsewhere (273 RBs, 3 vO-DUs, 6 radio units)."""
    cfg = ScenarioConfig(**overrides)
    return cfg.validate()


def full_scale_config(**overrides) -> ScenarioConfig:
    """The long-run profile: 100k ticks, more ground cars, the wide
    1 kB..10 MB packet envelope, quantities up to 40."""
    specs = [
        ServiceSpec(s.id, s.delay_budget_ms, (1_000, 10_000_000), s.arrival_rate_range)
        for s in default_service_specs()
    ]
    base = dict(
        steps=100_000,
        ground_cars=20,
        services=specs,
        auction=AuctionParams(quantity_range=(6, 40)),
    )
    base.update(overrides)
    return ScenarioConfig(**base).validate()
