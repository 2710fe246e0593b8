"""Synthetic access-pattern generators and timed scenario scripts.

Patterns draw page ids for one epoch at a time: a set (hot / warm / cold
remainder) is chosen per access by its configured fraction, then a page
uniformly within that set. Sets are contiguous page ranges, so hot-set
resizes are just range changes; newly hot pages start cold in the bins and
heat up through sampling. Scenario scripts are TOML files with global
settings and a time-ordered event list.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import units
from .hotness import DEFAULT_PAGE_SIZE


class ScenarioError(ValueError):
    """A scenario file failed validation."""


# ---------------------------------------------------------------------------
# access patterns
# ---------------------------------------------------------------------------

class AccessPattern:
    """Base class: a working set of pages plus a draw distribution.

    ``ops_base`` is the nominal per-thread issue rate (ops per simulated
    second, before latency scaling); None means the engine derives it from
    the fast-tier latency.
    """

    def __init__(self, working_set: int, threads: int = 1,
                 ops_base: float | None = None, seed: int = 0):
        if working_set <= 0:
            raise ScenarioError("working_set must be positive")
        if threads < 1:
            raise ScenarioError("threads must be >= 1")
        self.working_set = working_set
        self.threads = threads
        self.ops_base = ops_base
        self.seed = seed

    def num_pages(self, page_size: int) -> int:
        return -(-self.working_set // page_size)

    def ranges(self, page_size: int) -> list[tuple[int, int, float]]:
        """(first page, last page exclusive, access probability) triples."""
        raise NotImplementedError

    def resize_hot(self, hot_bytes: int) -> None:
        raise ScenarioError(f"{type(self).__name__} has no hot set to resize")

    def draw(self, rng: np.random.Generator, n: int, page_size: int) -> np.ndarray:
        """Vector of n page ids for one epoch; deterministic under the rng."""
        spans = self.ranges(page_size)
        if len(spans) == 1:
            lo, hi, _ = spans[0]
            return rng.integers(lo, hi, size=n, dtype=np.int64)
        probs = np.array([p for _, _, p in spans])
        edges = np.cumsum(probs)[:-1]
        choice = np.searchsorted(edges, rng.random(n), side="right")
        lows = np.array([lo for lo, _, _ in spans], dtype=np.int64)
        sizes = np.array([hi - lo for lo, hi, _ in spans], dtype=np.int64)
        offs = (rng.random(n) * sizes[choice]).astype(np.int64)
        return lows[choice] + offs

    def _check_spans(self, spans):
        total = 0.0
        for lo, hi, p in spans:
            if hi <= lo and p > 0:
                raise ScenarioError("positive access fraction on an empty page range")
            total += p
        if abs(total - 1.0) > 1e-9:
            raise ScenarioError(f"access fractions sum to {total}, expected 1")
        return spans


class UniformPattern(AccessPattern):
    """Uniform random accesses over the whole working set."""

    def ranges(self, page_size):
        return [(0, self.num_pages(page_size), 1.0)]


class HotSetPattern(AccessPattern):
    """A hot prefix of the working set absorbs a fixed access fraction."""

    def __init__(self, working_set: int, hot_bytes: int, hot_frac: float, **kw):
        super().__init__(working_set, **kw)
        if not 0 <= hot_frac <= 1:
            raise ScenarioError("hot_frac must be in [0, 1]")
        if hot_bytes > working_set:
            raise ScenarioError("hot set larger than working set")
        self.hot_bytes = hot_bytes
        self.hot_frac = hot_frac

    def resize_hot(self, hot_bytes: int) -> None:
        if hot_bytes > self.working_set:
            raise ScenarioError("hot set larger than working set")
        self.hot_bytes = hot_bytes

    def ranges(self, page_size):
        pages = self.num_pages(page_size)
        hot = min(pages, -(-self.hot_bytes // page_size))
        if hot == pages:
            return self._check_spans([(0, pages, 1.0)])
        return self._check_spans([
            (0, hot, self.hot_frac),
            (hot, pages, 1.0 - self.hot_frac),
        ])


class HotWarmPattern(AccessPattern):
    """Nested hot / warm / remainder ranges with fixed access fractions.

    ``warm_bytes`` is cumulative: the warm range spans from the end of the
    hot range up to warm_bytes.
    """

    def __init__(self, working_set: int, hot_bytes: int, warm_bytes: int,
                 hot_frac: float, warm_frac: float, **kw):
        super().__init__(working_set, **kw)
        if not (hot_bytes <= warm_bytes <= working_set):
            raise ScenarioError("need hot_bytes <= warm_bytes <= working_set")
        if hot_frac < 0 or warm_frac < 0 or hot_frac + warm_frac > 1 + 1e-9:
            raise ScenarioError("hot_frac/warm_frac must be >= 0 and sum <= 1")
        self.hot_bytes = hot_bytes
        self.warm_bytes = warm_bytes
        self.hot_frac = hot_frac
        self.warm_frac = warm_frac

    def resize_hot(self, hot_bytes: int) -> None:
        if hot_bytes > self.warm_bytes:
            raise ScenarioError("hot set larger than warm set")
        self.hot_bytes = hot_bytes

    def ranges(self, page_size):
        pages = self.num_pages(page_size)
        hot = min(pages, -(-self.hot_bytes // page_size))
        warm = min(pages, -(-self.warm_bytes // page_size))
        spans = [(0, hot, self.hot_frac), (hot, warm, self.warm_frac),
                 (warm, pages, 1.0 - self.hot_frac - self.warm_frac)]
        return self._check_spans([s for s in spans if s[1] > s[0] or s[2] > 0])


class ZipfPattern(AccessPattern):
    """Heavy-tailed page popularity; robustness variant, rank-ordered."""

    def __init__(self, working_set: int, alpha: float = 1.1, **kw):
        super().__init__(working_set, **kw)
        if alpha <= 0:
            raise ScenarioError("zipf alpha must be positive")
        self.alpha = alpha
        self._probs_pages = None

    def ranges(self, page_size):
        # coarse two-span summary for the latency blend: head vs tail
        pages = self.num_pages(page_size)
        probs = self._probs(pages)
        head = max(1, pages // 8)
        return [(0, head, float(probs[:head].sum())),
                (head, pages, float(probs[head:].sum()))] if pages > 1 else \
               [(0, 1, 1.0)]

    def _probs(self, pages: int) -> np.ndarray:
        if self._probs_pages is None or len(self._probs_pages) != pages:
            w = 1.0 / np.arange(1, pages + 1, dtype=np.float64) ** self.alpha
            self._probs_pages = w / w.sum()
        return self._probs_pages

    def draw(self, rng, n, page_size):
        pages = self.num_pages(page_size)
        return rng.choice(pages, size=n, p=self._probs(pages)).astype(np.int64)


PATTERN_KINDS = ("uniform", "hotset", "hotwarm", "zipf")


# ---------------------------------------------------------------------------
# scenario events
# ---------------------------------------------------------------------------

@dataclass
class StartProcess:
    time: float
    pid: int
    t_miss: float
    pattern: AccessPattern
    populate: bool = True


@dataclass
class StopProcess:
    time: float
    pid: int


@dataclass
class SetTmiss:
    time: float
    pid: int
    t_miss: float


@dataclass
class ResizeHotSet:
    time: float
    pid: int
    hot_bytes: int


@dataclass
class SetMigrationCap:
    time: float
    cap: int  # bytes per epoch


Event = StartProcess | StopProcess | SetTmiss | ResizeHotSet | SetMigrationCap


def apply_event(sim, event: Event) -> None:
    """Apply one scenario event to a running simulation."""
    if isinstance(event, StartProcess):
        sim.start_process(event)
    elif isinstance(event, StopProcess):
        sim.stop_process(event.pid)
    elif isinstance(event, SetTmiss):
        sim.set_tmiss(event.pid, event.t_miss)
    elif isinstance(event, ResizeHotSet):
        sim.resize_hot_set(event.pid, event.hot_bytes)
    elif isinstance(event, SetMigrationCap):
        sim.set_migration_cap(event.cap)
    else:
        raise ScenarioError(f"unknown event {event!r}")


# ---------------------------------------------------------------------------
# scenario scripts
# ---------------------------------------------------------------------------

@dataclass
class PerfSettings:
    fast_latency: float = 100e-9
    slow_latency: float = 400e-9
    migration_penalty: float = 1.1


@dataclass
class ScenarioScript:
    fast_capacity: int
    slow_capacity: int
    epochs: int
    policy: str = "maxmem"
    page_size: int = DEFAULT_PAGE_SIZE
    epoch_duration: float = 1.0
    migration_cap: int = 4 * units.GIB
    migration_cap_spec: int | str | None = None  # raw value, for re-deriving
    realloc_share: float = 0.5   # fraction of the cap driving quota deltas
    sampling_period: int = 100
    ewma_lambda: float = 0.5
    region_threshold: int = 0
    seed: int = 0
    perf: PerfSettings = field(default_factory=PerfSettings)
    partitions: dict[int, int] = field(default_factory=dict)
    events: list[Event] = field(default_factory=list)

    def realloc_budget(self) -> int:
        return int(self.migration_cap * self.realloc_share)


def _build_pattern(kind: str, spec: dict, index: int) -> AccessPattern:
    common = dict(
        working_set=units.parse_bytes(spec["working_set"]),
        threads=int(spec.get("threads", 1)),
        ops_base=float(spec["ops_base"]) if "ops_base" in spec else None,
    )
    if kind == "uniform":
        return UniformPattern(**common)
    if kind == "hotset":
        return HotSetPattern(hot_bytes=units.parse_bytes(spec["hot_bytes"]),
                             hot_frac=float(spec["hot_frac"]), **common)
    if kind == "hotwarm":
        return HotWarmPattern(hot_bytes=units.parse_bytes(spec["hot_bytes"]),
                              warm_bytes=units.parse_bytes(spec["warm_bytes"]),
                              hot_frac=float(spec["hot_frac"]),
                              warm_frac=float(spec["warm_frac"]), **common)
    if kind == "zipf":
        return ZipfPattern(alpha=float(spec.get("alpha", 1.1)), **common)
    raise ScenarioError(f"event {index}: unknown pattern {kind!r}, "
                        f"expected one of {PATTERN_KINDS}")


def _build_event(spec: dict, index: int, epoch_duration: float) -> Event:
    try:
        action = spec["action"]
        time = float(spec["time"])
        if action == "start":
            return StartProcess(
                time=time, pid=int(spec["pid"]), t_miss=float(spec["t_miss"]),
                pattern=_build_pattern(spec.get("pattern", "uniform"), spec, index),
                populate=bool(spec.get("populate", True)))
        if action == "stop":
            return StopProcess(time=time, pid=int(spec["pid"]))
        if action == "set_tmiss":
            return SetTmiss(time=time, pid=int(spec["pid"]),
                            t_miss=float(spec["t_miss"]))
        if action == "resize_hot":
            return ResizeHotSet(time=time, pid=int(spec["pid"]),
                                hot_bytes=units.parse_bytes(spec["hot_bytes"]))
        if action == "set_migration_cap":
            return SetMigrationCap(
                time=time,
                cap=units.parse_rate(spec["value"], epoch_duration))
    except KeyError as e:
        raise ScenarioError(f"event {index}: missing field {e.args[0]!r}") from None
    raise ScenarioError(f"event {index}: unknown action {action!r}")


def _validate_events(events: list[Event]) -> None:
    last_time = float("-inf")
    alive: set[int] = set()
    for i, ev in enumerate(events):
        if ev.time < last_time:
            raise ScenarioError(
                f"event {i}: time {ev.time} is before event {i - 1}")
        last_time = ev.time
        if isinstance(ev, StartProcess):
            if ev.pid in alive:
                raise ScenarioError(f"event {i}: process {ev.pid} already started")
            alive.add(ev.pid)
        elif isinstance(ev, StopProcess):
            if ev.pid not in alive:
                raise ScenarioError(f"event {i}: process {ev.pid} is not running")
            alive.discard(ev.pid)
        elif isinstance(ev, (SetTmiss, ResizeHotSet)):
            if ev.pid not in alive:
                raise ScenarioError(f"event {i}: process {ev.pid} is not running")


def parse_scenario(source: str | Path, *, is_text: bool = False) -> ScenarioScript:
    """Load and validate a scenario script from a TOML file or string."""
    if is_text:
        raw = tomllib.loads(source)
    else:
        with open(source, "rb") as fh:
            raw = tomllib.load(fh)
    try:
        epoch_duration = units.parse_seconds(raw.get("epoch_duration", 1.0))
        policy = raw.get("policy", "maxmem")
        if policy not in ("maxmem", "static", "noqos"):
            raise ScenarioError(f"unknown policy {policy!r}")
        perf_raw = raw.get("perf", {})
        perf = PerfSettings(
            fast_latency=units.parse_seconds(perf_raw.get("fast_latency", 100e-9)),
            slow_latency=units.parse_seconds(perf_raw.get("slow_latency", 400e-9)),
            migration_penalty=float(perf_raw.get("migration_penalty", 1.1)),
        )
        if perf.slow_latency < perf.fast_latency or perf.migration_penalty < 1:
            raise ScenarioError("need slow_latency >= fast_latency and penalty >= 1")
        partitions = {int(pid): units.parse_bytes(v)
                      for pid, v in raw.get("static", {}).get("partitions", {}).items()}
        script = ScenarioScript(
            fast_capacity=units.parse_bytes(raw["fast_capacity"]),
            slow_capacity=units.parse_bytes(raw["slow_capacity"]),
            epochs=int(raw["epochs"]),
            policy=policy,
            page_size=units.parse_bytes(raw.get("page_size", DEFAULT_PAGE_SIZE)),
            epoch_duration=epoch_duration,
            migration_cap=units.parse_rate(raw.get("migration_cap", 4 * units.GIB),
                                           epoch_duration),
            migration_cap_spec=raw.get("migration_cap"),
            realloc_share=float(raw.get("realloc_share", 0.5)),
            sampling_period=int(raw.get("sampling_period", 100)),
            ewma_lambda=float(raw.get("ewma_lambda", 0.5)),
            region_threshold=units.parse_bytes(raw.get("region_threshold", 0)),
            seed=int(raw.get("seed", 0)),
            perf=perf,
            partitions=partitions,
        )
    except KeyError as e:
        raise ScenarioError(f"missing scenario field {e.args[0]!r}") from None
    except units.UnitError as e:
        raise ScenarioError(str(e)) from None
    if script.epochs < 0:
        raise ScenarioError("epochs must be >= 0")
    events_raw = raw.get("events", [])
    script.events = [_build_event(ev, i, script.epoch_duration)
                     for i, ev in enumerate(events_raw)]
    _validate_events(script.events)
    if script.policy == "static" and not script.partitions:
        raise ScenarioError("static policy requires [static] partitions")
    return script
