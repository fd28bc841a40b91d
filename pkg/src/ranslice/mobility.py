"""Car and radio-unit geometry plus a seeded synthetic mobility stepper.

Flying and ground cars share one position model (ground cars have height 0).
Coverage geometry works on the ground projection: a radio unit covers a
horizontal disc of its coverage radius, and the dwell time is the forward
distance to the disc boundary along the car's heading divided by its speed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

MAX_FLYING_HEIGHT_M = 300.0
MAX_SPEED_MPS = 300.0 / 3.6  # 300 km/h cruising ceiling


@dataclass
class Car:
    id: int
    kind: str  # "flying" | "ground"
    x: float
    y: float
    height: float
    speed: float
    heading: float
    subscribed_services: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.kind not in ("flying", "ground"):
            raise ValueError(f"unknown car kind {self.kind!r}")
        if self.speed < 0:
            raise ValueError("speed must be >= 0")
        if self.speed > MAX_SPEED_MPS + 1e-9:
            raise ValueError(f"speed {self.speed} m/s exceeds the {MAX_SPEED_MPS:.1f} m/s ceiling")
        if self.kind == "flying":
            if not 0 < self.height <= MAX_FLYING_HEIGHT_M:
                raise ValueError("flying car height must be in (0, 300] m")
        elif self.height != 0:
            raise ValueError("ground car height must be 0")


@dataclass
class ORU:
    """Radio unit: a fixed antenna site with a wired link to its host DU."""

    id: int
    x: float
    y: float
    height: float
    coverage_radius: float
    fronthaul_capacity: float  # bits/second
    fronthaul_length: float  # meters

    def __post_init__(self):
        if self.coverage_radius <= 0:
            raise ValueError("coverage_radius must be > 0")
        if self.fronthaul_capacity <= 0:
            raise ValueError("fronthaul_capacity must be > 0")


@dataclass(frozen=True)
class GeometryReport:
    distance: float
    remaining_distance: float
    angle: float
    dwell_time: float
    coverage_prob: int


def ground_projection(car: Car, oru: ORU) -> float:
    return math.hypot(car.x - oru.x, car.y - oru.y)


def distance(car: Car, oru: ORU) -> float:
    """Slant distance from car antenna to radio-unit antenna.

    Uses the squared ground projection so the two terms share units; ground
    cars fall out naturally with height 0.
    """
    proj = ground_projection(car, oru)
    return math.sqrt(proj * proj + (car.height - oru.height) ** 2)


def approach_angle(car: Car, oru: ORU) -> float:
    """Angle between the car's heading and the bearing to the radio unit."""
    dx, dy = oru.x - car.x, oru.y - car.y
    norm = math.hypot(dx, dy)
    if norm == 0:
        return 0.0
    cos_g = (math.cos(car.heading) * dx + math.sin(car.heading) * dy) / norm
    return math.acos(max(-1.0, min(1.0, cos_g)))


def remaining_distance(car: Car, oru: ORU) -> float:
    """Distance left before the car reaches coverage; 0 once inside."""
    if ground_projection(car, oru) <= oru.coverage_radius:
        return 0.0
    return max(0.0, distance(car, oru) * math.cos(approach_angle(car, oru)))


def dwell_time(car: Car, oru: ORU) -> float:
    """Seconds until the car exits the coverage disc along its heading.

    Inside the disc this is the forward chord length over speed; a stopped
    car never leaves, so its dwell time is infinite.  Outside the disc the
    car is not being served and the dwell time is 0.
    """
    px, py = car.x - oru.x, car.y - oru.y
    r = oru.coverage_radius
    if px * px + py * py > r * r:
        return 0.0
    if car.speed == 0:
        return math.inf
    ux, uy = math.cos(car.heading), math.sin(car.heading)
    b = px * ux + py * uy
    disc = b * b + r * r - (px * px + py * py)
    exit_dist = -b + math.sqrt(max(disc, 0.0))
    return exit_dist / car.speed


def coverage_probability(car: Car, oru: ORU, service_budget: float) -> int:
    """1 iff the car is inside coverage and its dwell time fits the budget.

    A stationary car satisfies the dwell condition by convention (it never
    leaves coverage).  Pass ``math.inf`` as the budget to reduce the check to
    geometric containment.
    """
    if remaining_distance(car, oru) > 0:
        return 0
    if car.speed == 0:
        return 1
    return 1 if dwell_time(car, oru) <= service_budget else 0


def geometry_report(car: Car, oru: ORU, service_budget: float) -> GeometryReport:
    return GeometryReport(
        distance=distance(car, oru),
        remaining_distance=remaining_distance(car, oru),
        angle=approach_angle(car, oru),
        dwell_time=dwell_time(car, oru),
        coverage_prob=coverage_probability(car, oru, service_budget),
    )


class MobilityModel:
    """Seeded random-heading stepper that owns car positions.

    Cars advance along their heading at their own speed; headings take a
    small Gaussian random-walk perturbation each step and positions reflect
    off the scenario bounds.
    """

    def __init__(self, width: float, height: float, rng, heading_sigma: float = 0.3):
        self.width = width
        self.height = height
        self.rng = rng
        self.heading_sigma = heading_sigma

    def step(self, cars, dt: float):
        if dt == 0:
            return cars
        sqrt_dt = math.sqrt(dt)
        for car in cars:
            car.heading += self.rng.normal(0.0, self.heading_sigma) * sqrt_dt
            car.x += car.speed * dt * math.cos(car.heading)
            car.y += car.speed * dt * math.sin(car.heading)
            if car.x < 0:
                car.x = -car.x
                car.heading = math.pi - car.heading
            elif car.x > self.width:
                car.x = 2 * self.width - car.x
                car.heading = math.pi - car.heading
            if car.y < 0:
                car.y = -car.y
                car.heading = -car.heading
            elif car.y > self.height:
                car.y = 2 * self.height - car.y
                car.heading = -car.heading
            car.heading = math.atan2(math.sin(car.heading), math.cos(car.heading))
        return cars


def read_mobility_trace(path):
    """Read a mobility trace CSV with columns t_s, car_id, x_m, y_m, h_m.

    Returns a sorted list of (t, car_id, x, y, h) tuples.
    """
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(
                (float(rec["t_s"]), int(rec["car_id"]), float(rec["x_m"]), float(rec["y_m"]), float(rec["h_m"]))
            )
    rows.sort(key=lambda r: (r[0], r[1]))
    return rows


class TracePlayer:
    """Replays a recorded trace instead of the synthetic stepper."""

    def __init__(self, rows):
        self.rows = rows
        self._cursor = 0
        self.time = 0.0

    def step(self, cars, dt: float):
        self.time += dt
        by_id = {c.id: c for c in cars}
        while self._cursor < len(self.rows) and self.rows[self._cursor][0] <= self.time + 1e-12:
            _, car_id, x, y, h = self.rows[self._cursor]
            car = by_id.get(car_id)
            if car is not None:
                car.x, car.y = x, y
                if car.kind == "flying":
                    car.height = h
            self._cursor += 1
        return cars
