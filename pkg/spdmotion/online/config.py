import json
import math
from dataclasses import asdict, dataclass, replace
from typing import Optional

from fvcore.common.file_io import PathManager

__all__ = ["ConfigError", "OnlineConfig"]

_TOL = 1e-9
CLOCK_MODES = ("replay", "live")


class ConfigError(ValueError):
    """
    An online-engine setting violates one of the window / verification constraints.
    The message starts with the violated constraint.
    """


@dataclass(frozen=True)
class OnlineConfig:
    """
    Streaming-engine settings.

    Attributes:
        ws: window size in frames
        r: refresh rate, frames between two detector evaluations
        te: number of verification tests, the trigger window included
        cr: capture rate in frames per second
        deadline: early-classification deadline T in seconds, None to disable
        start_offset: a confirmed transition is placed ``start_offset`` frames
            before the end of its trigger window; None means ``r``
        min_segment_seconds: shorter segments are discarded as false detections
        clock: "replay" (simulated inference time) or "live" (wall clock)
        simulated_inference_seconds: per-window inference time of the replay clock
    """

    ws: int
    r: int
    te: int
    cr: float
    deadline: Optional[float] = None
    start_offset: Optional[int] = None
    min_segment_seconds: float = 0.3
    clock: str = "replay"
    simulated_inference_seconds: float = 0.0

    def validate(self, window: bool = True) -> "OnlineConfig":
        """
        The single validation routine shared by the CLI and the engine. With
        ``window=False`` the checks on ``ws`` are skipped, for settings whose
        window size only becomes known once the detector is loaded.
        """
        if window and self.ws < 2:
            raise ConfigError("ws >= 2 violated: ws={}".format(self.ws))
        if self.r < 1:
            raise ConfigError("r >= 1 violated: r={}".format(self.r))
        if not self.cr > 0:
            raise ConfigError("cr > 0 violated: cr={}".format(self.cr))
        if self.r > 0.3 * self.cr + _TOL:
            raise ConfigError(
                "r <= 0.3*cr violated: r={} frames but 0.3*cr={:g}".format(self.r, 0.3 * self.cr)
            )
        if self.te < 1:
            raise ConfigError("te >= 1 violated: te={}".format(self.te))
        if window and self.ws < self.r:
            raise ConfigError("ws >= r violated: ws={}, r={}".format(self.ws, self.r))
        if self.deadline is not None:
            horizon = self.deadline * self.cr
            if horizon < self.r - _TOL:
                raise ConfigError(
                    "T*cr >= r violated: deadline of {:g} frames is shorter than one refresh "
                    "interval ({} frames)".format(horizon, self.r)
                )
            if self.te * self.r > horizon + _TOL:
                raise ConfigError(
                    "te <= (T/r)*cr violated: te={} but (T/r)*cr={:g}".format(
                        self.te, horizon / self.r
                    )
                )
        if self.start_offset is not None and self.start_offset < 0:
            raise ConfigError("start_offset >= 0 violated: {}".format(self.start_offset))
        if self.min_segment_seconds < 0:
            raise ConfigError("min_segment_seconds >= 0 violated: {}".format(self.min_segment_seconds))
        if self.clock not in CLOCK_MODES:
            raise ConfigError("clock in {} violated: '{}'".format(CLOCK_MODES, self.clock))
        if self.simulated_inference_seconds < 0:
            raise ConfigError(
                "simulated_inference_seconds >= 0 violated: {}".format(self.simulated_inference_seconds)
            )
        return self

    @property
    def offset(self) -> int:
        return self.r if self.start_offset is None else self.start_offset

    @property
    def deadline_frames(self) -> Optional[int]:
        if self.deadline is None:
            return None
        return int(round(self.deadline * self.cr))

    @property
    def min_segment_frames(self) -> int:
        return int(math.ceil(self.min_segment_seconds * self.cr - _TOL))

    @property
    def budget_seconds(self) -> float:
        """
        Time available for one window inference: r frames at cr fps.
        """
        return self.r / self.cr

    def replace(self, **changes) -> "OnlineConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "OnlineConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError("unknown engine settings {}".format(sorted(unknown)))
        missing = {"ws", "r", "te", "cr"} - set(d)
        if missing:
            raise ConfigError("engine config misses {}".format(sorted(missing)))
        return cls(**d)

    @classmethod
    def from_json(cls, path: str) -> "OnlineConfig":
        with PathManager.open(path, "r") as f:
            try:
                d = json.load(f)
            except json.JSONDecodeError as e:
                raise ConfigError("malformed engine config {}: {}".format(path, e)) from e
        return cls.from_dict(d)

    @classmethod
    def from_cfg(cls, cfg, **overrides) -> "OnlineConfig":
        """
        Build from the ``DETECTOR`` and ``ONLINE`` config nodes; ``overrides``
        set to None are ignored.
        """
        online = cfg.ONLINE
        d = dict(
            ws=cfg.DETECTOR.WINDOW_SIZE,
            r=online.REFRESH,
            te=online.TESTS,
            cr=online.CAPTURE_RATE,
            deadline=online.DEADLINE if online.DEADLINE > 0 else None,
            start_offset=online.START_OFFSET if online.START_OFFSET >= 0 else None,
            min_segment_seconds=online.MIN_SEGMENT_SECONDS,
            clock=online.CLOCK,
            simulated_inference_seconds=online.SIMULATED_INFERENCE_SECONDS,
        )
        d.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**d)
