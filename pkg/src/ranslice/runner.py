"""Episode orchestration: auction, placement, the two control loops, and
metrics/checkpoint persistence.

One run executes the auction, splits RBs across vO-DUs, places the winners'
slices round-robin, then ticks the loop-1 actors (one per vO-DU) every
``tick_s`` and the loop-2 learner/actor every ``loop2_period_ticks`` ticks.
All randomness flows from named substreams of the master seed, and the
deterministic single-threaded mode writes byte-identical outputs for a
given seed.
"""

from __future__ import annotations

import json
import math
import os
from collections import Counter, deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import auction as arb
from . import delay as dly
from . import loops
from . import mobility as mob
from . import radio
from . import rl
from . import slicing
from .config import ScenarioConfig

MAX_DEMAND_RBS = 12

# Substream tags so every component owns an independent RNG lineage.
_TAG_BIDS = 0x6269
_TAG_CARS = 0x6361
_TAG_MOBILITY = 0x6D6F
_TAG_TRAFFIC = 0x7472
_TAG_ACTOR = 0x6163
_TAG_NET = 0x6E65

LEARNER_ACTOR_INDEX = 9999


def _f(x) -> str:
    """Stable float formatting for CSV rows (shortest round-trip repr)."""
    return repr(float(x))


def _stream(seed: int, *tags) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *tags]))


@dataclass
class FlowRuntime:
    """One (car, slice) traffic relationship, fixed for the whole run."""

    car_id: int
    slice_id: int
    service: slicing.Service
    arrival_rate: float


@dataclass
class RunReport:
    config: ScenarioConfig
    summary: dict
    out_dir: str | None
    diverged: bool = False

    @property
    def ok(self) -> bool:
        return not self.diverged


class NStepAccumulator:
    """Builds n-step transitions for one decision stream.

    ``push`` is called once per decision with the new state, the action
    taken, and the reward earned by that action this step; transitions whose
    reward window filled are completed with the new state as bootstrap.
    """

    def __init__(self, n: int, gamma: float):
        self.n = n
        self.gamma = gamma
        self.pending = deque()

    def push(self, state, action, reward):
        done = []
        while self.pending and len(self.pending[0][2]) >= self.n:
            s, a, rs = self.pending.popleft()
            done.append(self._make(s, a, rs, state, terminal=False))
        self.pending.append((state, action, []))
        for entry in self.pending:
            if len(entry[2]) < self.n:
                entry[2].append(reward)
        return done

    def flush(self):
        done = [self._make(s, a, rs, s, terminal=True) for s, a, rs in self.pending]
        self.pending.clear()
        return done

    def _make(self, state, action, rewards, bootstrap, terminal):
        g = 0.0
        for j, r in enumerate(rewards):
            g += self.gamma**j * r
        discount = 0.0 if terminal else self.gamma ** len(rewards)
        return rl.Experience(
            state=np.asarray(state, dtype=float),
            action=int(action),
            nstep_reward=g,
            bootstrap_state=np.asarray(bootstrap, dtype=float),
            discount=discount,
        )


def generate_bids(cfg: ScenarioConfig, rng: np.random.Generator):
    """One sealed bid per tenant, services assigned cyclically."""
    lo_p, hi_p = cfg.auction.price_range
    lo_q, hi_q = cfg.auction.quantity_range
    bids = []
    n_services = len(cfg.services)
    for tenant in range(cfg.auction.tenants):
        bids.append(
            arb.TenantBid(
                tenant_id=tenant,
                service_id=cfg.services[tenant % n_services].id,
                price_per_rb=float(rng.uniform(lo_p, hi_p)),
                quantity=int(rng.integers(lo_q, hi_q + 1)),
            )
        )
    return bids


def build_services(cfg: ScenarioConfig):
    return {
        spec.id: slicing.Service(
            id=spec.id,
            delay_budget_s=spec.delay_budget_ms / 1e3,
            packet_size_range=tuple(spec.packet_size_range_bytes),
        )
        for spec in cfg.services
    }


def build_cars(cfg: ScenarioConfig, rng: np.random.Generator):
    cars = []
    width, height = cfg.area.width_m, cfg.area.height_m
    service_ids = [s.id for s in cfg.services]
    lo_n, hi_n = cfg.services_per_car
    for i in range(cfg.flying_cars + cfg.ground_cars):
        flying = i < cfg.flying_cars
        speed_lo, speed_hi = cfg.mobility.flying_speed_mps if flying else cfg.mobility.ground_speed_mps
        n_subs = int(rng.integers(lo_n, hi_n + 1))
        subs = frozenset(
            int(s) for s in rng.choice(service_ids, size=min(n_subs, len(service_ids)), replace=False)
        )
        cars.append(
            mob.Car(
                id=i,
                kind="flying" if flying else "ground",
                x=float(rng.uniform(0, width)),
                y=float(rng.uniform(0, height)),
                height=float(rng.uniform(*cfg.mobility.flying_height_m)) if flying else 0.0,
                speed=float(rng.uniform(speed_lo, speed_hi)),
                heading=float(rng.uniform(-math.pi, math.pi)),
                subscribed_services=subs,
            )
        )
    return cars


def build_orus(cfg: ScenarioConfig):
    """Grid layout covering the whole area with the configured radius."""
    n = cfg.orus.count
    cols = max(1, int(math.ceil(math.sqrt(n * cfg.area.width_m / max(cfg.area.height_m, 1e-9)))))
    rows = max(1, int(math.ceil(n / cols)))
    orus = []
    for i in range(n):
        r, c = divmod(i, cols)
        orus.append(
            mob.ORU(
                id=i,
                x=(c + 0.5) * cfg.area.width_m / cols,
                y=(r + 0.5) * cfg.area.height_m / rows,
                height=cfg.orus.height_m,
                coverage_radius=cfg.orus.coverage_radius_m,
                fronthaul_capacity=cfg.orus.fronthaul_capacity_bps,
                fronthaul_length=cfg.orus.fronthaul_length_m,
            )
        )
    return orus


def demand_rbs(
    arrival_rate: float,
    service: slicing.Service,
    est_rate_per_rb: float,
    fixed_delay_s: float,
    safety: float,
) -> int:
    """Smallest RB count whose estimated end-to-end delay fits the budget.

    Searches m = 1..MAX_DEMAND_RBS for queueing + wireless + fixed legs
    within ``safety`` of the budget; asks for the maximum when even that is
    not enough.
    """
    if est_rate_per_rb <= 0:
        return MAX_DEMAND_RBS
    mean_bits = 8.0 * service.mean_packet_bytes
    allow = safety * service.delay_budget_s - fixed_delay_s
    for m in range(1, MAX_DEMAND_RBS + 1):
        rate = m * est_rate_per_rb
        mu = rate / mean_bits
        if mu <= arrival_rate:
            continue
        total = 1.0 / (mu - arrival_rate) + mean_bits / rate
        if total <= allow:
            return m
    return MAX_DEMAND_RBS


class SimulationRunner:
    """Owns all mutable run state; see module docstring for the lifecycle."""

    def __init__(self, cfg: ScenarioConfig, policy: str = "trained"):
        cfg.validate()
        if policy not in ("trained", "random"):
            raise ValueError(f"unknown policy {policy!r}")
        self.cfg = cfg
        self.policy = policy
        seed = cfg.seed

        # Environment
        self.services = build_services(cfg)
        self.cars = build_cars(cfg, _stream(seed, _TAG_CARS))
        self.orus = build_orus(cfg)
        self.mobility = mob.MobilityModel(
            cfg.area.width_m, cfg.area.height_m, _stream(seed, _TAG_MOBILITY), cfg.mobility.heading_sigma
        )
        if cfg.mobility.trace_csv:
            self.mobility = mob.TracePlayer(mob.read_mobility_trace(cfg.mobility.trace_csv))

        # Auction and placement
        self.bids = generate_bids(cfg, _stream(seed, _TAG_BIDS))
        aconfig = arb.AuctionConfig(cfg.auction.total_rbs, cfg.auction.reserve_price)
        self.auction_config = aconfig
        outcome = arb.determine_winners(self.bids, aconfig)
        self.auction_outcome = arb.vcg_payments(outcome, self.bids, aconfig)

        capacities, self.residual_rbs = slicing.initial_split(cfg.auction.total_rbs, cfg.vodus)
        self.vodus = [slicing.VODU(id=d, capacity=c) for d, c in enumerate(capacities)]
        price_by_key = {b.key: b.price_per_rb for b in self.bids}
        bid_order = sorted(
            self.auction_outcome.winners, key=lambda k: (-price_by_key[k], k[0], k[1])
        )
        self.slices = []
        for sid, key in enumerate(bid_order):
            tenant, service = key
            self.slices.append(
                slicing.Slice(
                    id=sid,
                    service_id=service,
                    tenant_id=tenant,
                    rb_budget=self.auction_outcome.allocations[key],
                    buffer_capacity=cfg.buffers.capacity_pkts,
                    buffer_threshold=cfg.buffers.threshold_pkts,
                )
            )
        self.slices_by_id = {s.id: s for s in self.slices}
        self.placements, self.unplaced = slicing.round_robin_place(self.slices, self.vodus)
        self.active_slices = [s for s in self.slices if s.vodu_id is not None]
        self.free = {
            v.id: v.capacity - sum(self.slices_by_id[s].rb_budget for s in v.slices) for v in self.vodus
        }

        # Traffic: assign each subscribed (car, service) to one slice.
        slices_for_service = {}
        for s in self.active_slices:
            slices_for_service.setdefault(s.service_id, []).append(s.id)
        traffic_rng = _stream(seed, _TAG_TRAFFIC)
        self.flows_by_slice = {s.id: [] for s in self.active_slices}
        spec_by_id = {spec.id: spec for spec in cfg.services}
        counters = {k: 0 for k in slices_for_service}
        for car in self.cars:
            for service_id in sorted(car.subscribed_services):
                pool = slices_for_service.get(service_id)
                if not pool:
                    continue
                slice_id = pool[counters[service_id] % len(pool)]
                counters[service_id] += 1
                lo, hi = spec_by_id[service_id].arrival_rate_range
                self.flows_by_slice[slice_id].append(
                    FlowRuntime(
                        car_id=car.id,
                        slice_id=slice_id,
                        service=self.services[service_id],
                        arrival_rate=float(traffic_rng.uniform(lo, hi)),
                    )
                )
        # Streams are pre-created here so worker threads never mutate shared dicts.
        self.traffic_rng = {s.id: _stream(seed, _TAG_TRAFFIC, s.id) for s in self.active_slices}

        # Radio
        self.numerology = radio.default_numerology(cfg.numerology.index, cfg.numerology.subcarriers_per_rb)
        self.sampler = radio.ChannelSampler(seed, cfg.channel.estimation_error_var)
        for s in self.active_slices:
            self.sampler.gains(s.id, 0)
            self.sampler._rng(s.id)

        # Learning machinery: one learner per loop unless configured shared.
        def make_learner(tag: int) -> rl.Learner:
            net_seed = int(np.random.SeedSequence([seed, _TAG_NET, tag]).generate_state(1)[0])
            network = rl.QNetwork(cfg.rl.layers, seed=net_seed)
            replay = rl.ReplayMemory(cfg.rl.replay_capacity, cfg.rl.priority_exponent, seed=seed + tag)
            return rl.Learner(
                network,
                replay,
                learning_rate=cfg.rl.learning_rate,
                batch_size=cfg.rl.batch_size,
                target_sync_steps=cfg.rl.target_sync_steps,
                priority_eps=cfg.rl.priority_epsilon,
            )

        first = make_learner(0)
        self.learners = {"l1": first, "l2": first if cfg.rl.shared_network else make_learner(1)}
        self.epsilon = rl.EpsilonSchedule(
            start=cfg.rl.epsilon_start,
            final=cfg.rl.epsilon_final,
            anneal_steps=max(1, int(cfg.rl.epsilon_anneal_frac * cfg.steps)),
        )
        self.actor_rng = {v.id: _stream(seed, _TAG_ACTOR, v.id) for v in self.vodus}
        self.learner_rng = _stream(seed, _TAG_ACTOR, LEARNER_ACTOR_INDEX)
        self.actor_nets = {v.id: self.learners["l1"].broadcast.get() for v in self.vodus}

        n, gamma = cfg.rl.n_step, cfg.rl.discount
        self.acc1 = {s.id: NStepAccumulator(n, gamma) for s in self.active_slices}
        self.acc2 = {s.id: NStepAccumulator(n, gamma) for s in self.active_slices}

        # Per-slice dynamic state.  Occupancy is the expected packets in
        # queue; a slice with demand starts saturated (nothing served yet).
        self.occupancy = {
            s.id: float(s.buffer_capacity) if self.flows_by_slice[s.id] else 0.0
            for s in self.active_slices
        }
        self.latest = {
            s.id: {
                "action": 0,
                "nu": 0.0,
                "omega": 1.0,
                "psi": float(s.buffer_threshold),
                "r1": 0.0,
                "r2": 0.0,
                "r_main": 0.0,
                "phi": 0.0,
            }
            for s in self.active_slices
        }
        self.nu_window = {s.id: [] for s in self.active_slices}

        # Bookkeeping
        self.events = []
        self.metrics_rows = []
        self.training_rows = []
        self.phi_history = {s.id: [] for s in self.active_slices}
        self.r1_history = []  # (tick, r1)
        self.main_history = []  # (tick, r_main)
        self.recent_main = deque(maxlen=100)
        self.loop2_checks = 0
        self.conservation_ok = 0
        self.capacity_ok_checks = 0
        self.capacity_ok_hits = 0
        self.orthogonality_violations = 0
        self.multi_vodu_violations = 0
        self.diverged = False
        for sid in self.unplaced:
            self._event(-1, "slice_unplaced", slice=sid)

    # ------------------------------------------------------------------
    def _event(self, step: int, kind: str, **details):
        self.events.append({"step": step, "type": kind, **details})

    def _covered(self):
        """Serving radio unit per car: nearest unit whose coverage test passes."""
        budget = self.cfg.coverage_budget
        serving = {}
        for car in self.cars:
            best = None
            best_dist = math.inf
            for oru in self.orus:
                if mob.coverage_probability(car, oru, budget) == 1:
                    d = mob.distance(car, oru)
                    if d < best_dist:
                        best, best_dist = oru, d
            if best is not None:
                serving[car.id] = (best, best_dist)
        return serving

    def _snr_scale(self, dist: float) -> float:
        ch = self.cfg.channel
        if ch.literal_channel:
            return ch.tx_power_w * dist / ch.noise_power_w
        return ch.tx_power_w * dist ** (-ch.path_loss_exponent) / ch.noise_power_w

    def _act_slice(self, sl: slicing.Slice, tick: int, serving: dict):
        """Loop-1 acting for one slice; returns completed experiences."""
        cfg = self.cfg
        vodu = self.vodus[sl.vodu_id]
        flows = self.flows_by_slice[sl.id]
        rng_t = self.traffic_rng[sl.id]
        cap, thr = float(sl.buffer_capacity), float(sl.buffer_threshold)

        # The actor observes the queue as the previous tick left it.
        psi = dly.queue_status(cap, thr, self.occupancy[sl.id]).status
        omega = dly.orchestration(psi, cap, thr)

        eligible = [f for f in flows if f.car_id in serving]
        state = loops.Loop1State(len(eligible), omega, psi).encode(len(self.cars), cap, thr)
        rng_a = self.actor_rng[vodu.id]
        if self.policy == "random":
            action = loops.LoopAction(int(rng_a.integers(rl.N_ACTIONS)))
        else:
            eps = rl.actor_epsilon(self.epsilon.value(tick), vodu.id, cfg.rl.actor_epsilon_base)
            action = loops.LoopAction(rl.select_action(self.actor_nets[vodu.id], state, eps, rng_a))

        # Per-car demand estimates from the deterministic part of the channel.
        fh_prop = {}
        demands = []
        for f in eligible:
            oru, dist = serving[f.car_id]
            fixed = (
                8.0 * f.service.mean_packet_bytes / oru.fronthaul_capacity
                + oru.fronthaul_length / cfg.propagation_speed_mps
            )
            fh_prop[f.car_id] = (oru, dist, fixed)
            rate1 = self.numerology.rb_bandwidth_hz * math.log2(1.0 + self._snr_scale(dist))
            demands.append(
                (f.car_id, demand_rbs(f.arrival_rate, f.service, rate1, fixed, cfg.loops.demand_safety))
            )

        sched = loops.loop1_schedule(sl.rb_budget, self.free[vodu.id], action, demands, omega, cap, thr)

        # Channel draws per granted RB, then per-car rates.
        assignments = []
        cell_counts = []
        rates_by_car = {}
        if sched.assigned:
            gains = self.sampler.gains(sl.id, sched.assigned)
            i = 0
            for f in eligible:
                cells = sched.cells_by_car.get(f.car_id, [])
                if not cells:
                    continue
                oru, dist, _ = fh_prop[f.car_id]
                g = gains[i : i + len(cells)]
                i += len(cells)
                snr_v = g * self._snr_scale(dist)
                rates = self.numerology.rb_bandwidth_hz * np.log2(1.0 + snr_v)
                rates_by_car[f.car_id] = float(rates.sum())
                for cell in cells:
                    assignments.append(radio.RBAssignment(f.car_id, oru.id, sl.id, cell))
                    cell_counts.append(1)
        violations = radio.check_orthogonality(assignments)
        if violations:
            self.orthogonality_violations += len(violations)
            self._event(tick, "rb_reuse", slice=sl.id, cells=[list(v[0]) for v in violations])

        # Per-flow delays, satisfaction, fronthaul load, expected occupancy.
        served_flags = []
        fulfilled = []
        fronthaul_load = 0.0
        expected_queue = 0.0
        for f in flows:
            rate_v = rates_by_car.get(f.car_id, 0.0)
            z = 1 if rate_v > 0 else 0
            served_flags.append(z)
            if z == 0:
                fulfilled.append(0)
                if f.arrival_rate > 0:
                    expected_queue += cap  # unserved demand backs up to the buffer
                continue
            oru, dist, fixed = fh_prop[f.car_id]
            o_bytes = float(rng_t.uniform(*f.service.packet_size_range))
            mu = rate_v / (8.0 * f.service.mean_packet_bytes)
            flow_stats = dly.FlowStats(f.arrival_rate, mu, o_bytes, assignment=1)
            q = dly.queueing_delay(flow_stats)
            wl, fh, prop = dly.tx_delays(
                flow_stats, rate_v, oru.fronthaul_capacity, oru.fronthaul_length, cfg.propagation_speed_mps
            )
            total = dly.DelayBreakdown(q, wl, fh, prop).total
            fulfilled.append(dly.budget_fulfillment(total, f.service.delay_budget_s))
            fronthaul_load += f.arrival_rate * 8.0 * o_bytes
            if mu > f.arrival_rate:
                rho = f.arrival_rate / mu
                expected_queue += rho / (1.0 - rho)
            else:
                expected_queue += cap
        self.occupancy[sl.id] = min(cap, expected_queue)

        phi = dly.slice_satisfaction(served_flags, fulfilled)
        w_ind = 1.0 if flows else 0.0
        capacity_bps = self.orus[0].fronthaul_capacity if self.orus else 0.0
        if fronthaul_load > capacity_bps:
            self._event(tick, "fronthaul_overload", slice=sl.id, load_bps=fronthaul_load)
        if sched.nu > 0:
            self._event(tick, "coupling_overrun", slice=sl.id, nu=sched.nu)
        r1 = loops.loop1_reward(
            phi,
            fronthaul_load,
            capacity_bps,
            cell_counts,
            sched.nu,
            cfg.penalties,
            w=w_ind,
            literal=cfg.loops.literal_reward,
        )

        experiences = self.acc1[sl.id].push(state, int(action), r1)
        self.latest[sl.id].update(action=int(action), nu=sched.nu, omega=omega, psi=psi, r1=r1, phi=phi)
        self.nu_window[sl.id].append(sched.nu)
        self.phi_history[sl.id].append(phi)
        self.r1_history.append((tick, r1))
        return [("l1", e) for e in experiences]

    def _act_vodu(self, hosted, tick, serving):
        experiences = []
        for sl in hosted:
            experiences.extend(self._act_slice(sl, tick, serving))
        return experiences

    def _add_experiences(self, tagged):
        """Store (loop_tag, experience) pairs with actor-side TD priorities."""
        if self.policy == "random":
            return
        nets = {}
        for tag, exp in tagged:
            learner = self.learners[tag]
            net = nets.get(tag)
            if net is None:
                net = nets[tag] = learner.broadcast.get()
            boot = 0.0
            if exp.discount:
                boot = float(rl.double_q_bootstrap(net, net, exp.bootstrap_state)[0])
            td = exp.nstep_reward + exp.discount * boot - float(net.forward(exp.state)[exp.action])
            exp.priority = abs(td) + self.cfg.rl.priority_epsilon
            learner.replay.add(exp)

    def _loop2(self, tick: int):
        cfg = self.cfg
        self.loop2_checks += 1
        nu_means = {}
        for sl in self.active_slices:
            window = self.nu_window[sl.id]
            nu_means[sl.id] = sum(window) / len(window) if window else 0.0
            self.nu_window[sl.id] = []

        for vodu in self.vodus:
            hosted = [self.slices_by_id[s] for s in vodu.slices]
            usage_pre = slicing.rb_usage(vodu, self.slices_by_id)
            nu_total = sum(nu_means[s.id] for s in hosted)

            # Select and apply every hosted slice's action first; the reward
            # is then computed on the post-action state so each transition
            # carries the consequence of its own action.
            decided = []
            for sl in hosted:
                state = loops.Loop2State(self.free[vodu.id], usage_pre, sl.rb_budget).encode(vodu.capacity)
                if self.policy == "random":
                    action = loops.LoopAction(int(self.learner_rng.integers(rl.N_ACTIONS)))
                else:
                    # The learner-actor keeps the undamped schedule: loop 2
                    # sees 20x fewer decisions, so damping its exploration
                    # like a high-index actor starves it of contrast.
                    eps = self.epsilon.value(tick)
                    action = loops.LoopAction(
                        rl.select_action(self.learners["l2"].network, state, eps, self.learner_rng)
                    )
                nu_c = nu_means[sl.id]
                delta = loops.loop2_delta(action, nu_c, sl.rb_budget, self.free[vodu.id])
                if action == loops.LoopAction.SCALE_UP and nu_c > self.free[vodu.id]:
                    self._event(tick, "grant_clipped", slice=sl.id, requested=nu_c, granted=delta)
                sl.rb_budget += delta
                self.free[vodu.id] -= delta
                decided.append((sl, state, action))

            placed_sum = sum(s.rb_budget for s in hosted)
            usage = slicing.rb_usage(vodu, self.slices_by_id)
            counts = [sum(1 for v in self.vodus if s.id in v.slices) for s in hosted]
            r2 = loops.loop2_reward(
                usage,
                counts,
                vodu.capacity,
                placed_sum,
                nu_total,
                cfg.penalties,
                y=1.0 if hosted else 0.0,
                total_rbs=cfg.auction.total_rbs,
                literal=cfg.loops.literal_reward,
            )
            if vodu.capacity - placed_sum - nu_total < 0:
                self._event(tick, "capacity_overrun", vodu=vodu.id, nu=nu_total)

            for sl, state, action in decided:
                r_main = loops.main_reward(r2, self.latest[sl.id]["r1"], cfg.loops.phi_dis)
                self.latest[sl.id].update(r2=r2, r_main=r_main)
                self.main_history.append((tick, r_main))
                self.recent_main.append(r_main)
                self._add_experiences(
                    [("l2", e) for e in self.acc2[sl.id].push(state, int(action), r_main)]
                )

            # Conservation and capacity accounting after this vO-DU's updates.
            budgets = [self.slices_by_id[s].rb_budget for s in vodu.slices]
            self.capacity_ok_checks += 1
            if sum(budgets) <= vodu.capacity:
                self.capacity_ok_hits += 1
            if (
                sum(budgets) + self.free[vodu.id] == vodu.capacity
                and self.free[vodu.id] >= 0
                and all(b >= 0 for b in budgets)
            ):
                self.conservation_ok += 1

        # Slice-on-one-vO-DU invariant across the whole registry.
        for sl in self.active_slices:
            hosts = sum(1 for v in self.vodus if sl.id in v.slices)
            if hosts > 1:
                self.multi_vodu_violations += 1
                self._event(tick, "multi_vodu_placement", slice=sl.id, hosts=hosts)

        # Parameter broadcast refresh for the loop-1 actors.
        if self.policy == "trained":
            for v in self.vodus:
                self.actor_nets[v.id] = self.learners["l1"].broadcast.get()

    def _metrics_row(self, tick: int, sl: slicing.Slice) -> str:
        m = self.latest[sl.id]
        usage = slicing.rb_usage(self.vodus[sl.vodu_id], self.slices_by_id)
        return ",".join(
            [
                str(tick),
                str(sl.vodu_id),
                str(sl.id),
                str(m["action"]),
                _f(m["nu"]),
                _f(m["omega"]),
                _f(m["psi"]),
                _f(m["r1"]),
                _f(m["r2"]),
                _f(m["r_main"]),
                _f(m["phi"]),
                _f(usage),
            ]
        )

    def run(self) -> RunReport:
        cfg = self.cfg
        # Loop-2 transitions arrive loop2_period times slower, so its learner
        # starts on a proportionally smaller backlog.
        warmups = {
            "l1": max(cfg.rl.batch_size, cfg.rl.train_warmup),
            "l2": max(cfg.rl.batch_size, cfg.rl.train_warmup // cfg.loops.loop2_period_ticks),
        }
        pool = None
        if not cfg.deterministic and cfg.actors > 1:
            pool = ThreadPoolExecutor(max_workers=cfg.actors)
        try:
            for tick in range(cfg.steps):
                self.mobility.step(self.cars, cfg.loops.tick_s)
                serving = self._covered()

                per_vodu = [[self.slices_by_id[s] for s in v.slices] for v in self.vodus]
                if pool is not None:
                    futures = [pool.submit(self._act_vodu, hosted, tick, serving) for hosted in per_vodu]
                    batches = [f.result() for f in futures]
                else:
                    batches = [self._act_vodu(hosted, tick, serving) for hosted in per_vodu]
                for experiences in batches:
                    self._add_experiences(experiences)

                if self.policy == "trained":
                    try:
                        result = None
                        for tag in ("l1", "l2"):
                            learner = self.learners[tag]
                            if tag == "l2" and learner is self.learners["l1"]:
                                continue  # shared-network mode trains once
                            if len(learner.replay) < warmups[tag]:
                                continue
                            for _ in range(max(1, cfg.rl.train_per_tick)):
                                result = learner.step()
                    except rl.TrainingDiverged:
                        self.diverged = True
                        self._event(tick, "training_diverged")
                        break
                    if result is not None:
                        mean_r = sum(self.recent_main) / len(self.recent_main) if self.recent_main else 0.0
                        self.training_rows.append(
                            ",".join([str(tick), _f(mean_r), _f(result.loss), _f(self.epsilon.value(tick))])
                        )

                if (tick + 1) % cfg.loops.loop2_period_ticks == 0:
                    self._loop2(tick)

                for sl in self.active_slices:
                    self.metrics_rows.append(self._metrics_row(tick, sl))

            for sl in self.active_slices:
                self._add_experiences([("l1", e) for e in self.acc1[sl.id].flush()])
                self._add_experiences([("l2", e) for e in self.acc2[sl.id].flush()])
        finally:
            if pool is not None:
                pool.shutdown()

        summary = self._summary()
        out_dir = self._persist(summary)
        return RunReport(config=cfg, summary=summary, out_dir=out_dir, diverged=self.diverged)

    # ------------------------------------------------------------------
    def _summary(self) -> dict:
        cfg = self.cfg
        steps = cfg.steps
        cut = max(1, steps // 10)

        def tick_window_mean(history, first: bool):
            if first:
                vals = [v for t, v in history if t < cut]
            else:
                vals = [v for t, v in history if t >= steps - cut]
            return float(np.mean(vals)) if vals else None

        phi_final = {}
        for sid, hist in self.phi_history.items():
            if hist:
                phi_final[str(sid)] = float(np.mean(hist[-cut:]))
        usage_final = {str(v.id): slicing.rb_usage(v, self.slices_by_id) for v in self.vodus}
        return {
            "version": 1,
            "mode": self.policy,
            "seed": cfg.seed,
            "steps": steps,
            "auction": arb.outcome_to_json(self.auction_outcome, self.bids),
            "placement": {str(k): v for k, v in self.placements.items()},
            "unplaced_slices": list(self.unplaced),
            "vodu_capacities": [v.capacity for v in self.vodus],
            "residual_rbs": self.residual_rbs,
            "phi_per_slice_final": phi_final,
            "phi_mean_final": float(np.mean(list(phi_final.values()))) if phi_final else None,
            "usage_per_vodu_final": usage_final,
            "r1_first_mean": tick_window_mean(self.r1_history, True),
            "r1_final_mean": tick_window_mean(self.r1_history, False),
            "main_reward_first_mean": tick_window_mean(self.main_history, True),
            "main_reward_final_mean": tick_window_mean(self.main_history, False),
            "event_counts": dict(sorted(Counter(e["type"] for e in self.events).items())),
            "orthogonality_violations": self.orthogonality_violations,
            "multi_vodu_violations": self.multi_vodu_violations,
            "loop2_checks": self.loop2_checks,
            "conservation_ok_fraction": (
                self.conservation_ok / (self.loop2_checks * len(self.vodus)) if self.loop2_checks else None
            ),
            "capacity_ok_fraction": (
                self.capacity_ok_hits / self.capacity_ok_checks if self.capacity_ok_checks else None
            ),
            "train_steps": {tag: ln.train_steps for tag, ln in self.learners.items()},
            "diverged": self.diverged,
        }

    def _persist(self, summary: dict):
        out_dir = self.cfg.out_dir
        if not out_dir:
            return None
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "metrics.csv"), "w") as fh:
            fh.write("step,vodu,slice,action,nu,omega,psi,r1,r2,r_main,phi,usage\n")
            for row in self.metrics_rows:
                fh.write(row + "\n")
        with open(os.path.join(out_dir, "training.csv"), "w") as fh:
            fh.write("step,mean_reward,loss,epsilon\n")
            for row in self.training_rows:
                fh.write(row + "\n")
        with open(os.path.join(out_dir, "events.log"), "w") as fh:
            for event in self.events:
                fh.write(json.dumps(event) + "\n")
        with open(os.path.join(out_dir, "summary.json"), "w") as fh:
            json.dump(summary, fh, indent=2)
            fh.write("\n")
        if self.policy == "trained":
            rl.save_checkpoint(
                os.path.join(out_dir, "checkpoint.json"),
                self.learners["l1"].network,
                self.learners["l1"].target,
                self.learners["l1"].train_steps,
                rng_state=self.learner_rng.bit_generator.state,
            )
            if self.learners["l2"] is not self.learners["l1"]:
                rl.save_checkpoint(
                    os.path.join(out_dir, "checkpoint_loop2.json"),
                    self.learners["l2"].network,
                    self.learners["l2"].target,
                    self.learners["l2"].train_steps,
                    rng_state=self.learner_rng.bit_generator.state,
                )
        return out_dir


def run(cfg: ScenarioConfig) -> RunReport:
    """Auction -> split -> placement -> both loops for cfg.steps ticks."""
    return SimulationRunner(cfg, policy="trained").run()


def baseline_random(cfg: ScenarioConfig) -> RunReport:
    """Same environment driven by uniformly random loop actions."""
    return SimulationRunner(cfg, policy="random").run()


def compare_auction_instance(bids, aconfig: arb.AuctionConfig) -> dict:
    """Greedy-with-payments vs. the exhaustive oracle on one instance."""
    greedy = arb.vcg_payments(arb.determine_winners(bids, aconfig), bids, aconfig)
    best_value, best_decisions = arb.brute_force_optimal(bids, aconfig)
    by_key = {b.key: b for b in bids}
    oracle_alloc = sum(by_key[k].quantity for k, x in best_decisions.items() if x)
    total = aconfig.total_rbs
    return {
        "total_rbs": total,
        "greedy": {
            "welfare": greedy.welfare,
            "allocated_rbs": greedy.allocated_rbs,
            "allocated_fraction": greedy.allocated_rbs / total if total else 0.0,
            "winners": sorted(str(k) for k in greedy.winners),
            "payments_total": sum(greedy.payments.values()),
        },
        "oracle": {
            "welfare": best_value,
            "allocated_rbs": oracle_alloc,
            "allocated_fraction": oracle_alloc / total if total else 0.0,
            "winners": sorted(str(k) for k, x in best_decisions.items() if x),
        },
        "welfare_gap": best_value - greedy.welfare,
    }


def compare_auction(cfg: ScenarioConfig) -> dict:
    """Run the comparison on the scenario's generated auction instance."""
    bids = generate_bids(cfg, _stream(cfg.seed, _TAG_BIDS))
    return compare_auction_instance(bids, arb.AuctionConfig(cfg.auction.total_rbs, cfg.auction.reserve_price))
