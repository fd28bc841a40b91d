"""From-scratch distributed DQN machinery.

A small fully-connected Q-network with hand-written backpropagation, n-step
double-DQN targets, proportional prioritized replay, a hard-synced target
network, and the copy-on-publish parameter broadcast that connects the
acting side to the single learner.  Everything runs on float64 numpy so the
finite-difference gradient check stays sharp.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

N_ACTIONS = 4
DEFAULT_LAYERS = (3, 64, 64, 4)
DEFAULT_PRIORITY_EPS = 0.01


class TrainingDiverged(RuntimeError):
    """Raised when a training step produces a non-finite loss."""


# ---------------------------------------------------------------------------
# Q-network
# ---------------------------------------------------------------------------

class QNetwork:
    """Feed-forward net, rectifier hidden layers, identity output.

    The output layer starts at zero so an untrained policy falls back to the
    documented lowest-index tie-break instead of an arbitrary action.
    """

    def __init__(self, layer_sizes: Sequence[int] = DEFAULT_LAYERS, seed: int = 0):
        self.layer_sizes = tuple(int(s) for s in layer_sizes)
        rng = np.random.default_rng(seed)
        self.weights = []
        self.biases = []
        last = len(self.layer_sizes) - 2
        for i, (n_in, n_out) in enumerate(zip(self.layer_sizes[:-1], self.layer_sizes[1:])):
            scale = 0.0 if i == last else np.sqrt(2.0 / n_in)
            self.weights.append(rng.normal(0.0, 1.0, (n_out, n_in)) * scale)
            self.biases.append(np.zeros(n_out))

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def forward(self, states: np.ndarray) -> np.ndarray:
        """Action values; accepts a single state or a batch."""
        x = np.asarray(states, dtype=float)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            x = x @ w.T + b
            if i < self.n_layers - 1:
                x = np.maximum(x, 0.0)
        return x[0] if single else x

    def _forward_cached(self, states: np.ndarray):
        x = np.asarray(states, dtype=float)
        activations = [x]
        pre = []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = activations[-1] @ w.T + b
            pre.append(z)
            activations.append(np.maximum(z, 0.0) if i < self.n_layers - 1 else z)
        return activations, pre

    def gradients(self, states: np.ndarray, actions: np.ndarray, targets: np.ndarray):
        """Gradients of the summed per-sample losses 0.5*(target - Q(s, a))^2.

        Summing (not averaging) keeps plain per-sample SGD semantics at the
        configured learning rate.  Targets are treated as constants
        (semi-gradient).  Returns (grad_w, grad_b, per_sample_td) with
        td = target - Q(s, a).
        """
        activations, pre = self._forward_cached(states)
        q = activations[-1]
        idx = np.arange(q.shape[0])
        td = targets - q[idx, actions]
        delta = np.zeros_like(q)
        delta[idx, actions] = -td
        grad_w = [None] * self.n_layers
        grad_b = [None] * self.n_layers
        for layer in range(self.n_layers - 1, -1, -1):
            grad_w[layer] = delta.T @ activations[layer]
            grad_b[layer] = delta.sum(axis=0)
            if layer > 0:
                delta = (delta @ self.weights[layer]) * (pre[layer - 1] > 0)
        return grad_w, grad_b, td

    def copy(self) -> "QNetwork":
        clone = QNetwork.__new__(QNetwork)
        clone.layer_sizes = self.layer_sizes
        clone.weights = [w.copy() for w in self.weights]
        clone.biases = [b.copy() for b in self.biases]
        return clone

    def load_from(self, other: "QNetwork"):
        self.weights = [w.copy() for w in other.weights]
        self.biases = [b.copy() for b in other.biases]

    # Flat views are used by the finite-difference oracle and checkpoints.
    def get_flat(self) -> np.ndarray:
        return np.concatenate([w.ravel() for w in self.weights] + [b for b in self.biases])

    def set_flat(self, flat: np.ndarray):
        pos = 0
        for i, w in enumerate(self.weights):
            self.weights[i] = flat[pos : pos + w.size].reshape(w.shape).copy()
            pos += w.size
        for i, b in enumerate(self.biases):
            self.biases[i] = flat[pos : pos + b.size].copy()
            pos += b.size
        if pos != flat.size:
            raise ValueError("flat vector does not match network shape")


def td_loss(network: QNetwork, states, actions, targets) -> float:
    """Sum over the batch of the per-sample losses 0.5*(target - Q(s, a))^2."""
    q = network.forward(np.asarray(states, dtype=float))
    taken = q[np.arange(q.shape[0]), np.asarray(actions)]
    err = np.asarray(targets, dtype=float) - taken
    return float(0.5 * np.sum(err**2))


def finite_difference_gradient(network: QNetwork, states, actions, targets, step: float = 1e-6):
    """Central-difference gradient of td_loss over every parameter."""
    flat = network.get_flat()
    grad = np.empty_like(flat)
    for i in range(flat.size):
        bump = flat.copy()
        bump[i] = flat[i] + step
        network.set_flat(bump)
        up = td_loss(network, states, actions, targets)
        bump[i] = flat[i] - step
        network.set_flat(bump)
        down = td_loss(network, states, actions, targets)
        grad[i] = (up - down) / (2.0 * step)
    network.set_flat(flat)
    return grad


def flat_analytic_gradient(network: QNetwork, states, actions, targets) -> np.ndarray:
    grad_w, grad_b, _ = network.gradients(
        np.asarray(states, dtype=float), np.asarray(actions), np.asarray(targets, dtype=float)
    )
    return np.concatenate([g.ravel() for g in grad_w] + [g for g in grad_b])


# ---------------------------------------------------------------------------
# Returns and training
# ---------------------------------------------------------------------------

def double_q_bootstrap(network: QNetwork, target: QNetwork, states: np.ndarray) -> np.ndarray:
    """Q(s, argmax_a Q(s, a; theta); theta_target) per state."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    greedy = np.argmax(network.forward(states), axis=1)
    return target.forward(states)[np.arange(states.shape[0]), greedy]


def n_step_return(
    rewards: Sequence[float],
    gamma: float,
    network: QNetwork,
    target: QNetwork,
    bootstrap_state,
    terminal: bool = False,
) -> float:
    """Discounted n-step return with a double-DQN bootstrap tail.

    The greedy action at the bootstrap state comes from the online network
    and its value from the target network; a terminal transition keeps only
    the discounted reward sum.
    """
    g = 0.0
    for j, r in enumerate(rewards):
        g += gamma**j * r
    if not terminal:
        g += gamma ** len(rewards) * float(double_q_bootstrap(network, target, bootstrap_state)[0])
    return g


@dataclass
class Batch:
    states: np.ndarray
    actions: np.ndarray
    nstep_rewards: np.ndarray
    bootstrap_states: np.ndarray
    discounts: np.ndarray  # gamma**n, 0 for terminal transitions
    ids: np.ndarray


@dataclass
class TrainResult:
    loss: float
    td_errors: np.ndarray
    priorities: np.ndarray


def train_step(
    network: QNetwork,
    target: QNetwork,
    batch: Batch,
    learning_rate: float,
    priority_eps: float = DEFAULT_PRIORITY_EPS,
) -> TrainResult:
    """One SGD step on 0.5*(G - Q(s,a))^2; returns refreshed priorities.

    Raises TrainingDiverged on a non-finite loss, leaving the parameters
    untouched so the caller can flag the run.
    """
    bootstrap = double_q_bootstrap(network, target, batch.bootstrap_states)
    targets = batch.nstep_rewards + batch.discounts * bootstrap
    loss = td_loss(network, batch.states, batch.actions, targets)
    if not np.isfinite(loss):
        raise TrainingDiverged(f"non-finite loss {loss}")
    grad_w, grad_b, td = network.gradients(batch.states, batch.actions, targets)
    for i in range(network.n_layers):
        network.weights[i] -= learning_rate * grad_w[i]
        network.biases[i] -= learning_rate * grad_b[i]
    return TrainResult(loss=loss, td_errors=td, priorities=np.abs(td) + priority_eps)


# ---------------------------------------------------------------------------
# Exploration
# ---------------------------------------------------------------------------

def select_action(network: QNetwork, state, epsilon: float, rng) -> int:
    """Epsilon-greedy with deterministic lowest-index tie-breaking."""
    if epsilon > 0 and rng.random() < epsilon:
        return int(rng.integers(N_ACTIONS))
    return int(np.argmax(network.forward(np.asarray(state, dtype=float))))


@dataclass(frozen=True)
class EpsilonSchedule:
    """Linear anneal from ``start`` to ``final`` over ``anneal_steps``."""

    start: float = 1.0
    final: float = 0.02
    anneal_steps: int = 1

    def value(self, step: int) -> float:
        if self.anneal_steps <= 0 or step >= self.anneal_steps:
            return self.final
        frac = step / self.anneal_steps
        return self.start + (self.final - self.start) * frac


def actor_epsilon(epsilon: float, actor_index: int, base: float = 0.4) -> float:
    """Per-actor exploration offsets: actor i explores at epsilon * base**i."""
    return epsilon * base**actor_index


# ---------------------------------------------------------------------------
# Prioritized replay
# ---------------------------------------------------------------------------

@dataclass
class Experience:
    """One n-step transition as stored by the actors."""

    state: np.ndarray
    action: int
    nstep_reward: float
    bootstrap_state: np.ndarray
    discount: float  # gamma**n; 0 marks a terminal transition
    priority: float = 1.0

    def __post_init__(self):
        if self.priority <= 0:
            raise ValueError("priority must be > 0")


class ReplayMemory:
    """Bounded FIFO store with proportional prioritized sampling.

    Thread-safe for many appending actors plus one sampling/updating
    learner; sampling probability is priority**omega.  Entry ids grow
    monotonically, so stale priority updates for evicted entries are
    silently ignored.
    """

    def __init__(self, capacity: int = 50_000, priority_exponent: float = 0.6, seed: int = 0):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.priority_exponent = priority_exponent
        self._entries = [None] * capacity
        self._priorities = np.zeros(capacity)
        self._next_id = 0
        self._lock = threading.Lock()
        self._rng = np.random.default_rng(np.random.SeedSequence([seed, 0x7265]))

    def __len__(self) -> int:
        return min(self._next_id, self.capacity)

    @property
    def total_priority(self) -> float:
        return float(self._priorities[: len(self)].sum())

    def add(self, experience: Experience) -> int:
        with self._lock:
            entry_id = self._next_id
            slot = entry_id % self.capacity
            self._entries[slot] = (entry_id, experience)
            self._priorities[slot] = experience.priority
            self._next_id += 1
            return entry_id

    def sample(self, batch_size: int) -> Batch:
        with self._lock:
            size = len(self)
            if size == 0:
                raise ValueError("cannot sample from an empty memory")
            weights = self._priorities[:size] ** self.priority_exponent
            total = weights.sum()
            if total <= 0:
                probs = np.full(size, 1.0 / size)
            else:
                probs = weights / total
            slots = self._rng.choice(size, size=batch_size, replace=True, p=probs)
            picked = [self._entries[s] for s in slots]
        states = np.stack([e.state for _, e in picked])
        bootstrap = np.stack([e.bootstrap_state for _, e in picked])
        return Batch(
            states=states,
            actions=np.array([e.action for _, e in picked], dtype=int),
            nstep_rewards=np.array([e.nstep_reward for _, e in picked]),
            bootstrap_states=bootstrap,
            discounts=np.array([e.discount for _, e in picked]),
            ids=np.array([eid for eid, _ in picked], dtype=int),
        )

    def update_priorities(self, ids, priorities):
        with self._lock:
            oldest = self._next_id - len(self)
            for entry_id, priority in zip(ids, priorities):
                if entry_id < oldest:
                    continue  # evicted since it was sampled
                slot = entry_id % self.capacity
                stored = self._entries[slot]
                if stored is not None and stored[0] == entry_id:
                    stored[1].priority = float(priority)
                    self._priorities[slot] = float(priority)


# ---------------------------------------------------------------------------
# Actor/learner plumbing
# ---------------------------------------------------------------------------

class ParameterBroadcast:
    """Copy-on-publish parameter channel from the learner to the actors."""

    def __init__(self, network: QNetwork):
        self._lock = threading.Lock()
        self.version = 0
        self._snapshot = network.copy()

    def publish(self, network: QNetwork):
        snap = network.copy()
        with self._lock:
            self._snapshot = snap
            self.version += 1

    def get(self) -> QNetwork:
        with self._lock:
            return self._snapshot.copy()


class Learner:
    """Single learner: samples the replay, trains, syncs the target net."""

    def __init__(
        self,
        network: QNetwork,
        replay: ReplayMemory,
        learning_rate: float = 1e-4,
        batch_size: int = 32,
        target_sync_steps: int = 250,
        priority_eps: float = DEFAULT_PRIORITY_EPS,
    ):
        self.network = network
        self.target = network.copy()
        self.replay = replay
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.target_sync_steps = target_sync_steps
        self.priority_eps = priority_eps
        self.train_steps = 0
        self.broadcast = ParameterBroadcast(network)

    def step(self) -> TrainResult:
        batch = self.replay.sample(self.batch_size)
        result = train_step(self.network, self.target, batch, self.learning_rate, self.priority_eps)
        self.replay.update_priorities(batch.ids, result.priorities)
        self.train_steps += 1
        if self.train_steps % self.target_sync_steps == 0:
            self.target.load_from(self.network)
        return result


# ---------------------------------------------------------------------------
# Checkpointing
# ---------------------------------------------------------------------------

CHECKPOINT_VERSION = 1


def save_checkpoint(path, network: QNetwork, target: QNetwork, train_steps: int, rng_state=None):
    payload = {
        "version": CHECKPOINT_VERSION,
        "layer_sizes": list(network.layer_sizes),
        "weights": [w.tolist() for w in network.weights],
        "biases": [b.tolist() for b in network.biases],
        "target_weights": [w.tolist() for w in target.weights],
        "target_biases": [b.tolist() for b in target.biases],
        "train_steps": train_steps,
        "rng_state": rng_state,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_checkpoint(path):
    """Returns (network, target, train_steps, rng_state)."""
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload.get('version')}")
    network = QNetwork(payload["layer_sizes"])
    network.weights = [np.array(w, dtype=float) for w in payload["weights"]]
    network.biases = [np.array(b, dtype=float) for b in payload["biases"]]
    target = QNetwork(payload["layer_sizes"])
    target.weights = [np.array(w, dtype=float) for w in payload["target_weights"]]
    target.biases = [np.array(b, dtype=float) for b in payload["target_biases"]]
    return network, target, payload["train_steps"], payload.get("rng_state")
