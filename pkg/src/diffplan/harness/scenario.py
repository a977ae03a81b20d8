"""Declarative scenario scripts: timed obstacle spawn / move / despawn.

Events are applied at their timestamps as simulated time advances;
between events obstacle positions integrate their current velocity, so a
run is a pure function of the script.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from diffplan.geometry import Obstacle

ACTIONS = ("spawn", "set_velocity", "despawn")


@dataclass(frozen=True)
class ScenarioEvent:
    time: float
    action: str
    obstacle_id: str
    center: tuple | None = None
    radius: float | None = None
    velocity: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.action not in ACTIONS:
            raise ValueError(f"unknown scenario action {self.action!r}")
        if self.action == "spawn" and (self.center is None or self.radius is None):
            raise ValueError("spawn events need center and radius")

    def to_dict(self) -> dict:
        d = {"time": self.time, "action": self.action, "id": self.obstacle_id}
        if self.center is not None:
            d["center"] = list(self.center)
        if self.radius is not None:
            d["radius"] = self.radius
        if self.action != "despawn":
            d["velocity"] = list(self.velocity)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioEvent":
        return cls(time=float(d["time"]), action=d["action"],
                   obstacle_id=str(d["id"]),
                   center=tuple(d["center"]) if "center" in d else None,
                   radius=float(d["radius"]) if "radius" in d else None,
                   velocity=tuple(d.get("velocity", (0.0, 0.0))))


@dataclass(frozen=True)
class Scenario:
    events: tuple
    name: str = "scenario"

    def __post_init__(self):
        events = tuple(self.events)
        times = [e.time for e in events]
        if any(b < a for a, b in zip(times, times[1:])):
            raise ValueError("scenario events must be time-ordered")
        object.__setattr__(self, "events", events)

    def to_dict(self) -> dict:
        return {"name": self.name, "events": [e.to_dict() for e in self.events]}

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        return cls(name=str(d.get("name", "scenario")),
                   events=tuple(ScenarioEvent.from_dict(e)
                                for e in d.get("events", ())))


def scenario_to_file(scenario: Scenario, path):
    Path(path).write_text(json.dumps(scenario.to_dict(), sort_keys=True),
                          encoding="utf-8")


def scenario_from_file(path) -> Scenario:
    return Scenario.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class _ObstacleState:
    position: np.ndarray
    velocity: np.ndarray
    radius: float


class ObstaclePool:
    """Mutable obstacle set driven by a scenario during simulation."""

    def __init__(self, scenario: Scenario):
        self._pending = list(scenario.events)
        self._live: dict[str, _ObstacleState] = {}

    def advance(self, now: float, dt: float):
        """Integrate motion over dt ending at `now`, applying due events."""
        for state in self._live.values():
            state.position = state.position + state.velocity * dt
        while self._pending and self._pending[0].time <= now:
            ev = self._pending.pop(0)
            if ev.action == "spawn":
                self._live[ev.obstacle_id] = _ObstacleState(
                    position=np.array(ev.center, dtype=np.float64),
                    velocity=np.array(ev.velocity, dtype=np.float64),
                    radius=float(ev.radius))
            elif ev.action == "set_velocity":
                if ev.obstacle_id in self._live:
                    self._live[ev.obstacle_id].velocity = np.array(
                        ev.velocity, dtype=np.float64)
            elif ev.action == "despawn":
                self._live.pop(ev.obstacle_id, None)

    def obstacles(self) -> tuple:
        """Snapshot as geometry obstacles (positions at the current time)."""
        return tuple(
            Obstacle(center=tuple(s.position), radius=s.radius,
                     velocity=tuple(s.velocity))
            for _, s in sorted(self._live.items()))
