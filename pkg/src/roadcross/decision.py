"""Crossing-assistant decision loop.

Turns a stream of per-frame safe probabilities into user-facing events. A
frame counts as safe only when its probability is strictly above the
threshold; ``safe_to_cross`` fires once when the run of safe frames reaches
the required length, and any unsafe frame re-arms it.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

from ._kv import ConfigError, read_kv

ACTIVATED = "activated"
ORIENT_TO_TRAFFIC = "orient_to_traffic"
SAFE_TO_CROSS = "safe_to_cross"
NONE = "none"


@dataclass(frozen=True)
class DecisionConfig:
    probability_threshold: float = 0.85
    required_consecutive_safe: int = 5
    rearm_policy: str = "rearm_on_unsafe"
    history_size: int = 32

    def validate(self) -> None:
        if not 0 < self.probability_threshold < 1:
            raise ConfigError("probability_threshold", "must lie in (0, 1)")
        if self.required_consecutive_safe < 1:
            raise ConfigError("required_consecutive_safe", "must be at least 1")
        if self.rearm_policy != "rearm_on_unsafe":
            raise ConfigError("rearm_policy", f"unsupported policy {self.rearm_policy!r}")
        if self.history_size < 1:
            raise ConfigError("history_size", "must be at least 1")

    @classmethod
    def from_kv(cls, items: dict[str, str]) -> "DecisionConfig":
        kwargs = {}
        for key, value in items.items():
            if key == "probability_threshold":
                kwargs[key] = float(value)
            elif key in ("required_consecutive_safe", "history_size"):
                kwargs[key] = int(value)
            elif key == "rearm_policy":
                kwargs[key] = value
            else:
                raise ConfigError(key, "unknown key")
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg


def load_config(path) -> DecisionConfig:
    return DecisionConfig.from_kv(read_kv(path))


@dataclass(frozen=True)
class AssistantEvent:
    kind: str
    frame_index: int


@dataclass(frozen=True)
class DecisionState:
    config: DecisionConfig
    consecutive_safe_count: int = 0
    announced: bool = False
    # most recent (frame_index, probability) pairs, oldest first
    history: tuple[tuple[int, float], ...] = ()


def start_session(config: DecisionConfig | None = None) -> tuple[DecisionState, list[AssistantEvent]]:
    config = config or DecisionConfig()
    config.validate()
    events = [AssistantEvent(ACTIVATED, 0), AssistantEvent(ORIENT_TO_TRAFFIC, 0)]
    return DecisionState(config), events


def update(state: DecisionState, probability: float, frame_index: int) -> tuple[DecisionState, AssistantEvent]:
    if not 0.0 <= probability <= 1.0:
        raise ValueError(f"probability {probability} outside [0, 1]")
    cfg = state.config
    history = (state.history + ((frame_index, probability),))[-cfg.history_size:]
    if probability > cfg.probability_threshold:
        count = state.consecutive_safe_count + 1
        announced = state.announced
    else:
        count = 0
        announced = False
    kind = NONE
    if count >= cfg.required_consecutive_safe and not announced:
        kind = SAFE_TO_CROSS
        announced = True
    new = replace(state, consecutive_safe_count=count, announced=announced, history=history)
    return new, AssistantEvent(kind, frame_index)


def replay(probabilities, config: DecisionConfig | None = None, frame_indices=None) -> list[AssistantEvent]:
    """Run a whole session; ``none`` events are dropped from the result."""
    state, events = start_session(config)
    if frame_indices is None:
        frame_indices = range(1, len(probabilities) + 1)
    for idx, p in zip(frame_indices, probabilities):
        state, ev = update(state, float(p), int(idx))
        if ev.kind != NONE:
            events.append(ev)
    return events


def write_event_log(events, path) -> None:
    lines = [f"{e.frame_index},{e.kind}" for e in events if e.kind != NONE]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")
