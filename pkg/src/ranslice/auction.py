"""Sealed-bid auction that sells resource blocks (RBs) to tenants.

Winner determination is greedy by descending per-RB price with all-or-nothing
grants; payments charge each winner the externality its presence imposes on
the other bidders (rerun the allocation without the winner and take the
welfare difference).  An exhaustive subset oracle is included for small
instances so the greedy allocation can be checked against the exact revenue
maximizer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

# A bid is identified by the (tenant, service) pair it was submitted for.
BidKey = tuple

ORACLE_MAX_BIDS = 20


@dataclass(frozen=True)
class TenantBid:
    """One tenant's sealed bid for the RBs backing one service."""

    tenant_id: object
    service_id: object
    price_per_rb: float
    quantity: int

    def __post_init__(self):
        if self.quantity < 1 or int(self.quantity) != self.quantity:
            raise ValueError(f"bid quantity must be a positive integer, got {self.quantity}")
        if self.price_per_rb < 0:
            raise ValueError(f"bid price must be non-negative, got {self.price_per_rb}")

    @property
    def key(self) -> BidKey:
        return (self.tenant_id, self.service_id)

    @property
    def value(self) -> float:
        """Total value of the bid if granted in full (price x quantity)."""
        return self.price_per_rb * self.quantity


@dataclass(frozen=True)
class AuctionConfig:
    """Seller-side parameters: RB supply and the per-RB reserve price."""

    total_rbs: int
    reserve_price: float

    def __post_init__(self):
        if self.total_rbs < 0:
            raise ValueError("total_rbs must be >= 0")
        if self.reserve_price < 0:
            raise ValueError("reserve_price must be >= 0")

    @property
    def seller_valuation(self) -> float:
        """The seller values the unsold pool at reserve_price per block."""
        return self.total_rbs * self.reserve_price


@dataclass
class AuctionOutcome:
    """Allocation result; ``payments`` stays empty until priced."""

    winners: set = field(default_factory=set)
    decisions: dict = field(default_factory=dict)
    allocations: dict = field(default_factory=dict)
    payments: dict = field(default_factory=dict)
    unallocated_rbs: int = 0
    welfare: float = 0.0

    @property
    def allocated_rbs(self) -> int:
        return sum(self.allocations.values())


def _sorted_eligible(bids: Sequence[TenantBid], config: AuctionConfig) -> list:
    """Bids at or above reserve, highest price first, ids breaking ties."""
    eligible = [b for b in bids if b.price_per_rb >= config.reserve_price]
    eligible.sort(key=lambda b: (-b.price_per_rb, b.tenant_id, b.service_id))
    return eligible


def _check_unique_keys(bids: Sequence[TenantBid]):
    seen = set()
    for b in bids:
        if b.key in seen:
            raise ValueError(f"duplicate bid for tenant/service pair {b.key}")
        seen.add(b.key)


def determine_winners(bids: Sequence[TenantBid], config: AuctionConfig) -> AuctionOutcome:
    """Greedy all-or-nothing winner determination.

    Bids below the reserve price are dropped.  The rest are scanned in
    descending price order; a bid wins iff its full quantity fits in the
    remaining supply, otherwise it is skipped and the scan continues to
    cheaper bids.  Payments are left unset.
    """
    _check_unique_keys(bids)
    outcome = AuctionOutcome(
        decisions={b.key: 0 for b in bids},
        unallocated_rbs=config.total_rbs,
    )
    remaining = config.total_rbs
    for bid in _sorted_eligible(bids, config):
        if bid.quantity <= remaining:
            remaining -= bid.quantity
            outcome.winners.add(bid.key)
            outcome.decisions[bid.key] = 1
            outcome.allocations[bid.key] = bid.quantity
            outcome.welfare += bid.value
    outcome.unallocated_rbs = remaining
    return outcome


def vcg_payments(
    outcome: AuctionOutcome, bids: Sequence[TenantBid], config: AuctionConfig
) -> AuctionOutcome:
    """Price each winner at the welfare its participation denies the others.

    For winner l the allocation is recomputed without l's bid; the payment is
    the others' welfare in that counterfactual minus their welfare in the
    actual outcome, clamped into [0, l's own bid value].  The clamp keeps the
    winner's truthful utility non-negative even on knapsack-gap instances
    where the greedy allocation is not welfare-optimal.
    """
    by_key = {b.key: b for b in bids}
    payments = {}
    for key in outcome.winners:
        own = by_key[key]
        others = [b for b in bids if b.key != key]
        without = determine_winners(others, config)
        others_welfare_with = outcome.welfare - own.value
        pay = without.welfare - others_welfare_with
        payments[key] = min(max(pay, 0.0), own.value)
    return replace(outcome, payments=payments)


def tenant_utility(bid: TenantBid, true_value_per_rb: float, outcome: AuctionOutcome) -> float:
    """Winner utility is true valuation minus payment; losers get 0."""
    if bid.key not in outcome.winners:
        return 0.0
    if bid.key not in outcome.payments:
        raise ValueError("outcome has no payment for this winner; run vcg_payments first")
    return true_value_per_rb * bid.quantity - outcome.payments[bid.key]


def brute_force_optimal(bids: Sequence[TenantBid], config: AuctionConfig):
    """Exact revenue maximizer by exhaustive subset enumeration.

    Test oracle only: refuses instances with more than ORACLE_MAX_BIDS bids.
    Ties between equal-welfare subsets resolve to the subset found first when
    bids are enumerated in greedy sort order, which makes the oracle agree
    with the greedy allocation whenever their welfare coincides.

    Returns (best_value, decisions) with decisions covering every input bid.
    """
    _check_unique_keys(bids)
    if len(bids) > ORACLE_MAX_BIDS:
        raise ValueError(f"oracle limited to {ORACLE_MAX_BIDS} bids, got {len(bids)}")
    eligible = _sorted_eligible(bids, config)
    n = len(eligible)
    quantities = [b.quantity for b in eligible]
    values = [b.value for b in eligible]

    best_value = 0.0
    best_mask = 0
    for mask in range(1 << n):
        q = v = 0
        for i in range(n):
            if mask >> i & 1:
                q += quantities[i]
                v += values[i]
        if q <= config.total_rbs and v > best_value:
            best_value = v
            best_mask = mask

    decisions = {b.key: 0 for b in bids}
    for i in range(n):
        if best_mask >> i & 1:
            decisions[eligible[i].key] = 1
    return best_value, decisions


# ---------------------------------------------------------------------------
# JSON interface
#
# Instance schema:
#   {"reserve_price": 15, "total_rbs": 273,
#    "bids": [{"tenant": 0, "service": 2, "price": 18.5, "quantity": 12}, ...]}
# Outcome schema:
#   {"winners": [{"tenant", "service", "price", "quantity", "allocated",
#                 "payment"}...], "unallocated_rbs": N, "welfare": W}
# ---------------------------------------------------------------------------

def instance_from_json(obj) -> tuple:
    """Parse an auction instance from a JSON string or decoded dict."""
    if isinstance(obj, (str, bytes)):
        obj = json.loads(obj)
    config = AuctionConfig(total_rbs=int(obj["total_rbs"]), reserve_price=float(obj["reserve_price"]))
    bids = [
        TenantBid(
            tenant_id=entry["tenant"],
            service_id=entry["service"],
            price_per_rb=float(entry["price"]),
            quantity=int(entry["quantity"]),
        )
        for entry in obj.get("bids", [])
    ]
    return bids, config


def instance_to_json(bids: Iterable[TenantBid], config: AuctionConfig) -> dict:
    return {
        "reserve_price": config.reserve_price,
        "total_rbs": config.total_rbs,
        "bids": [
            {"tenant": b.tenant_id, "service": b.service_id, "price": b.price_per_rb, "quantity": b.quantity}
            for b in bids
        ],
    }


def outcome_to_json(outcome: AuctionOutcome, bids: Sequence[TenantBid]) -> dict:
    by_key = {b.key: b for b in bids}
    winners = []
    for key in sorted(outcome.winners, key=lambda k: (str(k[0]), str(k[1]))):
        b = by_key[key]
        winners.append(
            {
                "tenant": b.tenant_id,
                "service": b.service_id,
                "price": b.price_per_rb,
                "quantity": b.quantity,
                "allocated": outcome.allocations.get(key, 0),
                "payment": outcome.payments.get(key),
            }
        )
    return {
        "winners": winners,
        "unallocated_rbs": outcome.unallocated_rbs,
        "welfare": outcome.welfare,
    }
