"""Ground-truth tier occupancy: page tables, faults, migration, lifecycle.

Owns the page table and the byte tallies of both tiers. Faults place pages
fast-first, gated by the process's quota and by tier capacity; migrations
are applied in plan order under a per-epoch byte cap; exits return memory
to the free pool.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from .hotness import DEFAULT_PAGE_SIZE, PageRecord, Tier

DEFAULT_REGION_THRESHOLD = 1024 ** 3  # regions below 1 GiB bypass tier management


class RegionRejectedError(Exception):
    """A registration asked for more memory than both tiers have free."""


class UnknownProcessError(KeyError):
    pass


class ProcessKilled(Exception):
    """A page fault found both tiers full; the faulting process is killed."""

    def __init__(self, pid: int):
        super().__init__(f"process {pid} killed: no memory in either tier")
        self.pid = pid


@dataclass
class Region:
    pid: int
    start_page: int
    num_pages: int

    def __contains__(self, page_id: int) -> bool:
        return self.start_page <= page_id < self.start_page + self.num_pages


@dataclass
class MigrationLedger:
    """Byte-exact record of one epoch's executed page moves."""

    epoch: int
    cap: int
    bytes_moved: int = 0
    moves: list[tuple[int, int, Tier, Tier]] = field(default_factory=list)
    skipped_stale: int = 0
    stalled: int = 0
    discarded: int = 0

    def bytes_for(self, pid: int, page_size: int) -> int:
        return sum(page_size for m in self.moves if m[0] == pid)


@dataclass
class PageMove:
    record: PageRecord
    to_tier: Tier


class TierState:
    """Two-tier memory with per-process page tables and byte accounting."""

    def __init__(self, fast_capacity: int, slow_capacity: int,
                 page_size: int = DEFAULT_PAGE_SIZE,
                 quota_of: Callable[[int], int] | None = None,
                 quota_gated: bool = True,
                 region_threshold: int = DEFAULT_REGION_THRESHOLD):
        self.fast_capacity = fast_capacity
        self.slow_capacity = slow_capacity
        self.page_size = page_size
        self.quota_of = quota_of or (lambda pid: fast_capacity)
        self.quota_gated = quota_gated
        self.region_threshold = region_threshold
        self.fast_used = 0
        self.slow_used = 0
        self.unmanaged_bytes = 0  # small regions pinned fast, outside tiering
        self.page_table: dict[tuple[int, int], PageRecord] = {}
        self.regions: dict[int, list[Region]] = {}
        self.fast_bytes_of: dict[int, int] = {}
        self._next_page: dict[int, int] = {}

    # -- queries ------------------------------------------------------------

    def fast_free(self) -> int:
        return self.fast_capacity - self.fast_used

    def slow_free(self) -> int:
        return self.slow_capacity - self.slow_used

    def fast_resident(self, pid: int) -> int:
        return self.fast_bytes_of.get(pid, 0)

    def resident_pages(self, pid: int):
        return (r for (p, _), r in self.page_table.items() if p == pid)

    def known_pid(self, pid: int) -> bool:
        return pid in self.regions

    # -- allocation ----------------------------------------------------------

    def register_region(self, pid: int, size: int, populate: bool = False) -> Region:
        """Register a memory region; pages materialize on fault unless populated.

        Sizes round up to whole pages. Regions smaller than the management
        threshold are pinned in fast memory and bypass tiering. A region
        larger than the combined free memory of both tiers is rejected.
        """
        if size <= 0:
            raise ValueError("region size must be positive")
        pages = -(-size // self.page_size)
        size = pages * self.page_size
        if size < self.region_threshold:
            if size > self.fast_free():
                raise RegionRejectedError(
                    f"unmanaged region of {size} bytes does not fit in fast memory")
            self.unmanaged_bytes += size
            self.fast_used += size
            return Region(pid, -1, 0)
        if size > self.fast_free() + self.slow_free():
            raise RegionRejectedError(
                f"region of {size} bytes exceeds free memory "
                f"({self.fast_free() + self.slow_free()} bytes)")
        start = self._next_page.get(pid, 0)
        region = Region(pid, start, pages)
        self.regions.setdefault(pid, []).append(region)
        self._next_page[pid] = start + pages
        self.fast_bytes_of.setdefault(pid, 0)
        if populate:
            for page_id in range(start, start + pages):
                self.handle_fault(pid, page_id)
        return region

    def handle_fault(self, pid: int, page_id: int) -> PageRecord:
        """Materialize a page: fast if quota and capacity allow, else slow.

        Raises ProcessKilled when neither tier can hold the page.
        """
        key = (pid, page_id)
        if key in self.page_table:
            raise ValueError(f"page {key} already resident")
        if not any(page_id in r for r in self.regions.get(pid, ())):
            raise UnknownProcessError(
                f"fault for page {page_id} outside any region of process {pid}")
        page = self.page_size
        headroom = (not self.quota_gated
                    or self.fast_bytes_of.get(pid, 0) + page <= self.quota_of(pid))
        if headroom and self.fast_used + page <= self.fast_capacity:
            tier = Tier.FAST
            self.fast_used += page
            self.fast_bytes_of[pid] = self.fast_bytes_of.get(pid, 0) + page
        elif self.slow_used + page <= self.slow_capacity:
            tier = Tier.SLOW
            self.slow_used += page
        else:
            raise ProcessKilled(pid)
        record = PageRecord(page_id=page_id, owner=pid, tier=tier)
        self.page_table[key] = record
        return record

    # -- migration -----------------------------------------------------------

    def execute_migrations(self, moves: list[PageMove], ledger: MigrationLedger) -> int:
        """Apply moves in order until the epoch byte cap is reached.

        Stale entries (page freed or no longer in the claimed source tier)
        are skipped; promotions that find fast memory full without a paired
        demotion stall. The unapplied tail is discarded and re-derived next
        epoch. Returns the number of moves applied.
        """
        page = self.page_size
        applied = 0
        for i, move in enumerate(moves):
            if ledger.bytes_moved + page > ledger.cap:
                ledger.discarded += len(moves) - i
                break
            rec = move.record
            key = (rec.owner, rec.page_id)
            if self.page_table.get(key) is not rec or rec.tier is move.to_tier:
                ledger.skipped_stale += 1
                continue
            if move.to_tier is Tier.FAST:
                if self.fast_used + page > self.fast_capacity:
                    ledger.stalled += 1
                    continue
                self.fast_used += page
                self.slow_used -= page
                self.fast_bytes_of[rec.owner] = self.fast_bytes_of.get(rec.owner, 0) + page
            else:
                if self.slow_used + page > self.slow_capacity:
                    ledger.stalled += 1
                    continue
                self.slow_used += page
                self.fast_used -= page
                self.fast_bytes_of[rec.owner] -= page
            ledger.moves.append((rec.owner, rec.page_id, rec.tier, move.to_tier))
            ledger.bytes_moved += page
            rec.tier = move.to_tier
            applied += 1
        return applied

    # -- lifecycle -----------------------------------------------------------

    def process_exit(self, pid: int) -> tuple[int, int]:
        """Free all of a process's pages; returns (fast, slow) bytes freed."""
        if pid not in self.regions:
            raise UnknownProcessError(f"process {pid} is not registered")
        freed_fast = freed_slow = 0
        for key in [k for k in self.page_table if k[0] == pid]:
            record = self.page_table.pop(key)
            if record.tier is Tier.FAST:
                freed_fast += self.page_size
            else:
                freed_slow += self.page_size
        self.fast_used -= freed_fast
        self.slow_used -= freed_slow
        del self.regions[pid]
        self.fast_bytes_of.pop(pid, None)
        self._next_page.pop(pid, None)
        return freed_fast, freed_slow

    # -- verification ----------------------------------------------------------

    def check_accounting(self) -> None:
        """Recompute tallies from the page table; raises on any mismatch."""
        fast = self.unmanaged_bytes
        slow = 0
        per_pid: dict[int, int] = {}
        for (pid, _), rec in self.page_table.items():
            if rec.tier is Tier.FAST:
                fast += self.page_size
                per_pid[pid] = per_pid.get(pid, 0) + self.page_size
            else:
                slow += self.page_size
        if fast != self.fast_used or slow != self.slow_used:
            raise AssertionError(
                f"tier tallies drifted: fast {self.fast_used} vs {fast}, "
                f"slow {self.slow_used} vs {slow}")
        for pid, expect in self.fast_bytes_of.items():
            if per_pid.get(pid, 0) != expect:
                raise AssertionError(
                    f"per-process fast bytes drifted for {pid}: "
                    f"{expect} vs {per_pid.get(pid, 0)}")
        if self.fast_used > self.fast_capacity or self.slow_used > self.slow_capacity:
            raise AssertionError("tier capacity exceeded")
