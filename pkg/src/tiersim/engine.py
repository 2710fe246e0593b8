"""Epoch loop: generation, sampling, policy, migration, metrics.

Each epoch runs a fixed sequence: (1) apply due scenario events, (2) derive
each process's operation count from a latency blend of its current
residency, (3) generate and resolve accesses, faulting unresident pages and
feeding the sampler, (4) close the epoch's telemetry, (5) plan quota
reallocation and page migrations, (6) execute migrations under the byte
cap, (7) emit one metrics row per live process. Everything is driven by
per-process seeded generators, so a scenario replays bit-identically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hotness import HotnessBins, Tier
from .memmgr import (MigrationLedger, PageMove, ProcessKilled,
                     RegionRejectedError, TierState)
from .policy import (GlobalHotnessPolicy, QosPolicy, baseline_noqos,
                     baseline_static)
from .telemetry import (TIER_CODE, TIER_FAST_CODE, AccessSampler,
                        ProcessQoSState, SamplerConfig)
from .workload import (AccessPattern, ScenarioError, ScenarioScript,
                       StartProcess, apply_event)

UNRESIDENT_CODE = 2

CONVERGENCE_TOLERANCE = 0.02


@dataclass
class PerfModel:
    """Latency blend turning residency into per-epoch operation counts.

    The contention penalty inflates slow-tier latency for epochs that
    follow migration activity, approximating bandwidth contention while
    pages move.
    """

    fast_latency: float = 100e-9
    slow_latency: float = 400e-9
    migration_penalty: float = 1.1

    def __post_init__(self):
        if self.fast_latency <= 0 or self.slow_latency < self.fast_latency:
            raise ValueError("latencies must satisfy 0 < fast <= slow")
        if self.migration_penalty < 1:
            raise ValueError("migration penalty must be >= 1")

    def mean_latency(self, slow_share: float, contended: bool) -> float:
        slow = self.slow_latency * (self.migration_penalty if contended else 1.0)
        return (1.0 - slow_share) * self.fast_latency + slow_share * slow

    def ops_for_epoch(self, pattern: AccessPattern, epoch_duration: float,
                      slow_share: float, contended: bool) -> int:
        """threads * duration / mean latency, scaled by the nominal rate.

        With no configured nominal rate this is exactly the closed-loop
        issue model; a configured ops_base rescales it so heavy scenarios
        stay tractable without changing the latency response.
        """
        rate = pattern.ops_base if pattern.ops_base is not None \
            else 1.0 / self.fast_latency
        scale = self.fast_latency / self.mean_latency(slow_share, contended)
        return int(round(pattern.threads * rate * epoch_duration * scale))


@dataclass
class MetricsRow:
    epoch: int
    pid: int
    ops_completed: int
    inst_fmmr: float
    ewma_fmmr: float
    quota_bytes: int
    fast_resident_bytes: int
    migrated_bytes: int
    flagged: bool


METRICS_COLUMNS = ("epoch", "pid", "ops_completed", "inst_fmmr", "ewma_fmmr",
                   "quota_bytes", "fast_resident_bytes", "migrated_bytes",
                   "flagged")


def metrics_csv_header() -> str:
    return ",".join(METRICS_COLUMNS)


def format_metrics_row(row: MetricsRow) -> str:
    return (f"{row.epoch},{row.pid},{row.ops_completed},{row.inst_fmmr!r},"
            f"{row.ewma_fmmr!r},{row.quota_bytes},{row.fast_resident_bytes},"
            f"{row.migrated_bytes},{int(row.flagged)}")


@dataclass
class RunSummary:
    epochs_run: int
    convergence_epoch: dict[int, int | None]
    final_ewma: dict[int, float]
    flagged_epochs: dict[int, int]
    kills: list[tuple[int, int]]          # (epoch, pid)
    exits: list[tuple[int, int]]
    total_migrated_bytes: int

    def format_text(self) -> str:
        lines = [f"epochs run: {self.epochs_run}",
                 f"total migrated bytes: {self.total_migrated_bytes}"]
        for pid in sorted(self.final_ewma):
            conv = self.convergence_epoch.get(pid)
            conv_s = str(conv) if conv is not None else "never"
            lines.append(
                f"process {pid}: converged at epoch {conv_s}, "
                f"final ewma_fmmr {self.final_ewma[pid]:.4f}, "
                f"flagged {self.flagged_epochs.get(pid, 0)} epochs")
        for epoch, pid in self.kills:
            lines.append(f"process {pid} KILLED at epoch {epoch} (out of memory)")
        for epoch, pid in self.exits:
            lines.append(f"process {pid} exited at epoch {epoch}")
        return "\n".join(lines)


@dataclass
class _Proc:
    state: ProcessQoSState
    bins: HotnessBins
    pattern: AccessPattern
    rng: np.random.Generator
    start_epoch: int


class Simulation:
    """Owns all simulation state and advances it one epoch at a time."""

    def __init__(self, script: ScenarioScript, row_sink=None, validate: bool = True):
        self.script = script
        self.row_sink = row_sink
        self.validate = validate
        self.epoch = 0
        self.migration_cap = script.migration_cap
        self.realloc_share = script.realloc_share
        self.perf = PerfModel(script.perf.fast_latency, script.perf.slow_latency,
                              script.perf.migration_penalty)
        self.sampler = AccessSampler(SamplerConfig(
            period=script.sampling_period, ewma_lambda=script.ewma_lambda,
            epoch_seconds=script.epoch_duration))
        if script.policy == "maxmem":
            self.policy = QosPolicy()
        elif script.policy == "static":
            self.policy = baseline_static(script.partitions, script.fast_capacity)
        elif script.policy == "noqos":
            self.policy = baseline_noqos()
        else:
            raise ScenarioError(f"unknown policy {script.policy!r}")
        self.procs: dict[int, _Proc] = {}
        self.tier = TierState(
            script.fast_capacity, script.slow_capacity, script.page_size,
            quota_of=lambda pid: self.procs[pid].state.quota,
            quota_gated=self.policy.uses_quota_gate,
            region_threshold=script.region_threshold)
        self._arrival = 0
        self._event_idx = 0
        self._prev_moved = 0
        self.ledgers: list[MigrationLedger] = []
        self.history: list[MetricsRow] = []
        self._tmiss_at: dict[tuple[int, int], float] = {}
        self.kills: list[tuple[int, int]] = []
        self.exits: list[tuple[int, int]] = []
        self.total_migrated = 0

    # -- event handlers (invoked through workload.apply_event) ---------------

    def start_process(self, ev: StartProcess) -> None:
        if ev.pid in self.procs:
            raise ScenarioError(f"process {ev.pid} already running")
        state = ProcessQoSState(pid=ev.pid, t_miss=ev.t_miss,
                                arrival_seq=self._arrival)
        self._arrival += 1
        state.quota = self.policy.initial_quota(ev.pid)
        bins = HotnessBins(owner=ev.pid, page_size=self.script.page_size)
        rng = np.random.default_rng([self.script.seed, ev.pid])
        self.procs[ev.pid] = _Proc(state, bins, ev.pattern, rng, self.epoch)
        try:
            self.tier.register_region(ev.pid, ev.pattern.working_set,
                                      populate=False)
        except RegionRejectedError as e:
            del self.procs[ev.pid]
            raise ScenarioError(f"process {ev.pid}: {e}") from None
        if ev.populate:
            pages = ev.pattern.num_pages(self.script.page_size)
            for page_id in range(pages):
                bins.register_page(self.tier.handle_fault(ev.pid, page_id))

    def stop_process(self, pid: int) -> None:
        if pid not in self.procs:
            raise ScenarioError(f"process {pid} is not running")
        self.tier.process_exit(pid)
        del self.procs[pid]
        self.exits.append((self.epoch, pid))

    def set_tmiss(self, pid: int, t_miss: float) -> None:
        if pid not in self.procs:
            raise ScenarioError(f"process {pid} is not running")
        self.procs[pid].state.set_target(t_miss)

    def resize_hot_set(self, pid: int, hot_bytes: int) -> None:
        if pid not in self.procs:
            raise ScenarioError(f"process {pid} is not running")
        self.procs[pid].pattern.resize_hot(hot_bytes)

    def set_migration_cap(self, cap: int) -> None:
        if cap < 0:
            raise ScenarioError("migration cap must be >= 0")
        self.migration_cap = cap

    # -- epoch loop -----------------------------------------------------------

    def _due_events(self):
        events = self.script.events
        dur = self.script.epoch_duration
        while self._event_idx < len(events):
            ev = events[self._event_idx]
            if int(ev.time / dur) > self.epoch:
                break
            try:
                apply_event(self, ev)
            except ProcessKilled as kill:
                # populate ran out of memory: a scenario outcome, not a crash
                self._reap(kill.pid)
            self._event_idx += 1

    def _tier_codes(self, pid: int, n_pages: int) -> np.ndarray:
        codes = np.full(n_pages, UNRESIDENT_CODE, dtype=np.int8)
        for rec in self.tier.resident_pages(pid):
            codes[rec.page_id] = TIER_CODE[rec.tier]
        return codes

    def _slow_share(self, pattern: AccessPattern, codes: np.ndarray) -> float:
        share = 0.0
        for lo, hi, prob in pattern.ranges(self.script.page_size):
            if hi <= lo or prob <= 0:
                continue
            span = codes[lo:hi]
            slow = int(np.count_nonzero(span != TIER_FAST_CODE))
            share += prob * slow / (hi - lo)
        return share

    def run_epoch(self) -> list[MetricsRow]:
        """Advance the simulation one epoch; returns the epoch's metrics rows."""
        script = self.script
        page_size = script.page_size
        self._due_events()
        contended = self._prev_moved > 0

        ops_of: dict[int, int] = {}
        killed: list[int] = []
        for pid in self._arrival_order():
            proc = self.procs[pid]
            n_pages = proc.pattern.num_pages(page_size)
            codes = self._tier_codes(pid, n_pages)
            share = self._slow_share(proc.pattern, codes)
            ops = self.perf.ops_for_epoch(proc.pattern, script.epoch_duration,
                                          share, contended)
            ops_of[pid] = ops
            if ops <= 0:
                continue
            pages = proc.pattern.draw(proc.rng, ops, page_size)
            try:
                codes = self._resolve(pid, proc, pages, codes)
            except ProcessKilled:
                killed.append(pid)
                continue
            self.sampler.ingest_accesses(proc.state, pages, codes[pages],
                                         proc.bins)
        for pid in killed:
            self._reap(pid)

        telemetry = {pid: self.sampler.close_epoch(self.procs[pid].state,
                                                   self.epoch)
                     for pid in self._arrival_order()}

        states = [self.procs[pid].state for pid in self._arrival_order()]
        realloc_budget = int(self.migration_cap * self.realloc_share)
        plan = self.policy.reallocate(states, realloc_budget,
                                      self.free_fast_quota())
        for pid_, delta in plan.deltas.items():
            state = self.procs[pid_].state
            state.quota += delta
            if state.quota < 0:
                raise AssertionError(f"negative quota for process {pid_}")

        proc_views = [(pid, self.procs[pid].state, self.procs[pid].bins,
                       self.tier.fast_resident(pid))
                      for pid in self._arrival_order()]
        fast_free_pages = self.tier.fast_free() // page_size
        plans = self.policy.migrations(proc_views, fast_free_pages,
                                       self.migration_cap, page_size)
        moves = [PageMove(rec, Tier.SLOW)
                 for _, mplan in plans for rec in mplan.demotions]
        moves += [PageMove(rec, Tier.FAST)
                  for _, mplan in plans for rec in mplan.promotions]
        ledger = MigrationLedger(epoch=self.epoch, cap=self.migration_cap)
        self.tier.execute_migrations(moves, ledger)
        self.ledgers.append(ledger)
        self._prev_moved = ledger.bytes_moved
        self.total_migrated += ledger.bytes_moved

        for proc in self.procs.values():
            proc.bins.begin_epoch()

        rows = []
        for pid in self._arrival_order():
            proc = self.procs[pid]
            tele = telemetry[pid]
            resident = self.tier.fast_resident(pid)
            quota = resident if isinstance(self.policy, GlobalHotnessPolicy) \
                else proc.state.quota
            row = MetricsRow(
                epoch=self.epoch, pid=pid, ops_completed=ops_of.get(pid, 0),
                inst_fmmr=tele.inst_fmmr, ewma_fmmr=tele.ewma_fmmr,
                quota_bytes=quota, fast_resident_bytes=resident,
                migrated_bytes=ledger.bytes_for(pid, page_size),
                flagged=pid in plan.flagged)
            rows.append(row)
            self.history.append(row)
            self._tmiss_at[(self.epoch, pid)] = proc.state.t_miss
            if self.row_sink is not None:
                self.row_sink(row)

        if self.validate:
            self._check_invariants(ledger)
        self.epoch += 1
        return rows

    def _reap(self, pid: int) -> None:
        self.kills.append((self.epoch, pid))
        if self.tier.known_pid(pid):
            self.tier.process_exit(pid)
        self.procs.pop(pid, None)

    def _resolve(self, pid: int, proc: _Proc, pages: np.ndarray,
                 codes: np.ndarray) -> np.ndarray:
        """Fault unresident accessed pages in first-touch order."""
        missing = pages[codes[pages] == UNRESIDENT_CODE]
        if len(missing) == 0:
            return codes
        uniq, first = np.unique(missing, return_index=True)
        for page_id in uniq[np.argsort(first)]:
            record = self.tier.handle_fault(pid, int(page_id))
            proc.bins.register_page(record)
            codes[page_id] = TIER_CODE[record.tier]
        return codes

    def _arrival_order(self) -> list[int]:
        return sorted(self.procs, key=lambda pid: self.procs[pid].state.arrival_seq)

    def free_fast_quota(self) -> int:
        """Fast bytes not earmarked by any process quota."""
        return self.tier.fast_capacity - sum(
            p.state.quota for p in self.procs.values())

    def _check_invariants(self, ledger: MigrationLedger) -> None:
        self.tier.check_accounting()
        if ledger.bytes_moved > ledger.cap:
            raise AssertionError("migration ledger exceeded the epoch cap")
        if self.policy.uses_quota_gate and self.free_fast_quota() < 0:
            raise AssertionError("quotas oversubscribe the fast tier")

    # -- whole-run driver -------------------------------------------------------

    def run(self) -> RunSummary:
        while self.epoch < self.script.epochs:
            self.run_epoch()
        return self.summary()

    def summary(self, tolerance: float = CONVERGENCE_TOLERANCE) -> RunSummary:
        """Post-run summary with per-process convergence epochs.

        A process converges at the first epoch from which its EWMA miss
        ratio stays at or below the then-current target plus the tolerance
        for the rest of its run.
        """
        by_pid: dict[int, list[MetricsRow]] = {}
        for row in self.history:
            by_pid.setdefault(row.pid, []).append(row)
        convergence: dict[int, int | None] = {}
        final_ewma: dict[int, float] = {}
        flagged: dict[int, int] = {}
        for pid, rows in by_pid.items():
            final_ewma[pid] = rows[-1].ewma_fmmr
            flagged[pid] = sum(1 for r in rows if r.flagged)
            conv = None
            for i in range(len(rows) - 1, -1, -1):
                row = rows[i]
                if row.ewma_fmmr <= self._tmiss_at[(row.epoch, pid)] + tolerance:
                    conv = row.epoch
                else:
                    break
            convergence[pid] = conv
        return RunSummary(
            epochs_run=self.epoch, convergence_epoch=convergence,
            final_ewma=final_ewma, flagged_epochs=flagged, kills=list(self.kills),
            exits=list(self.exits), total_migrated_bytes=self.total_migrated)


def run_scenario(script: ScenarioScript, row_sink=None,
                 validate: bool = True) -> tuple[Simulation, RunSummary]:
    """Run a scenario script to completion; returns the sim and its summary."""
    sim = Simulation(script, row_sink=row_sink, validate=validate)
    summary = sim.run()
    return sim, summary
