"""Temporal distributions and seeded random streams.

Every process owns a substream derived from ``(seed, key)`` by hashing, so
creating another process never shifts the draws of existing ones.
"""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass
from typing import Any

DETERMINISTIC = "deterministic"
DETERMINISTIC_START = "deterministic_start"
EXPONENTIAL = "exponential"
EXPONENTIAL_START = "exponential_start"
KINDS = (DETERMINISTIC, DETERMINISTIC_START, EXPONENTIAL, EXPONENTIAL_START)


class RandomStream:
    """A reproducible stream of uniforms on [0, 1)."""

    def __init__(self, seed: int, key: object = None) -> None:
        self.seed = seed
        self.key = key
        if key is None:
            material = seed
        else:
            digest = hashlib.sha256(f"{seed}:{key}".encode()).digest()
            material = int.from_bytes(digest[:8], "big")
        self._rng = random.Random(material)

    def uniform(self) -> float:
        return self._rng.random()

    def exponential(self, mean: float) -> float:
        """Inverse-CDF exponential draw; strictly positive."""
        while True:
            u = self._rng.random()
            x = -mean * math.log1p(-u)
            if x > 0:
                return x

    def substream(self, key: object) -> RandomStream:
        return RandomStream(self.seed, f"{self.key}/{key}" if self.key is not None else key)


@dataclass(frozen=True)
class Distribution:
    kind: str
    period: float = 0.0
    start: float = 0.0
    mean: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        if self.kind in (DETERMINISTIC, DETERMINISTIC_START) and not self.period > 0:
            raise ValueError("deterministic period must be positive")
        if self.kind in (EXPONENTIAL, EXPONENTIAL_START) and not self.mean > 0:
            raise ValueError("exponential mean must be positive")
        if self.start < 0:
            raise ValueError("start must be non-negative")

    def next_interval(self, rng: RandomStream | None, is_first: bool) -> float:
        """Time until the next activation.

        ``deterministic_start`` returns ``start`` on the first call (a start
        of zero fires at the beginning of the run). ``exponential_start``
        counts its first draw from ``start``, so it never fires at ``start``
        itself.
        """
        if is_first and self.kind == DETERMINISTIC_START:
            return self.start
        if is_first and self.kind == EXPONENTIAL_START:
            if rng is None:
                raise ValueError("exponential distribution needs a random stream")
            return self.start + rng.exponential(self.mean)
        if self.kind in (DETERMINISTIC, DETERMINISTIC_START):
            return self.period
        if rng is None:
            raise ValueError("exponential distribution needs a random stream")
        return rng.exponential(self.mean)

    def to_json(self) -> dict[str, Any]:
        if self.kind == DETERMINISTIC:
            return {"type": self.kind, "time": self.period}
        if self.kind == DETERMINISTIC_START:
            return {"type": self.kind, "start": self.start, "time": self.period}
        if self.kind == EXPONENTIAL:
            return {"type": self.kind, "mean": self.mean}
        return {"type": self.kind, "start": self.start, "mean": self.mean}


def deterministic(period: float) -> Distribution:
    return Distribution(DETERMINISTIC, period=period)


def deterministic_start(start: float, period: float) -> Distribution:
    return Distribution(DETERMINISTIC_START, period=period, start=start)


def exponential(mean: float) -> Distribution:
    return Distribution(EXPONENTIAL, mean=mean)


def exponential_start(start: float, mean: float) -> Distribution:
    return Distribution(EXPONENTIAL_START, mean=mean, start=start)


def from_json(doc: dict[str, Any]) -> Distribution:
    kind = doc.get("type")
    try:
        if kind == DETERMINISTIC:
            return deterministic(doc["time"])
        if kind == DETERMINISTIC_START:
            return deterministic_start(doc["start"], doc["time"])
        if kind == EXPONENTIAL:
            return exponential(doc["mean"])
        if kind == EXPONENTIAL_START:
            return exponential_start(doc["start"], doc["mean"])
    except KeyError as exc:
        raise ValueError(f"{kind} distribution requires {exc.args[0]!r}") from None
    raise ValueError(f"unknown distribution type {kind!r}")
