"""Per-process page hotness tracking with exponential bins and lazy cooling.

Pages accumulate sampled-access counts and are classified into exponentially
spaced hotness bins. When a page crosses the top-bin threshold, all counts
are halved ("cooling"); the halving is applied lazily, per page, the next
time a page is sampled or considered for migration. Victim enumeration walks
the bins coldest-first (demotion to slow memory) or hottest-first (promotion
to fast memory).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

DEFAULT_PAGE_SIZE = 2 * 1024 * 1024  # 2 MiB huge pages
DEFAULT_NUM_BINS = 6


class Tier(Enum):
    FAST = "fast"
    SLOW = "slow"


class UnknownPageError(KeyError):
    """A sample or victim query referenced a page not registered with the bins."""


@dataclass
class PageRecord:
    """Bookkeeping for one huge page.

    ``raw_count`` is the sample count as of the last update; coolings that
    happened since ``cool_seen`` are still pending and get applied (one
    halving each, rounded down) before the count is next used.
    """

    page_id: int
    owner: int
    tier: Tier
    raw_count: int = 0
    cool_seen: int = 0
    bin_index: int = 0


@dataclass
class VictimQuery:
    """Internal snapshot of a victim candidate, keyed for deterministic order."""

    record: PageRecord
    bin_index: int
    staleness: int


class HotnessBins:
    """Exponential hotness bins for the pages of a single process.

    Bin 0 holds pages that were never (recently) sampled; bin k (k >= 1)
    holds effective counts in [2**(k-1), 2**k), and the hottest bin absorbs
    everything above its lower bound. Reaching ``2**(num_bins-1)`` triggers
    a cooling, at most once per epoch.
    """

    def __init__(self, owner: int, num_bins: int = DEFAULT_NUM_BINS,
                 page_size: int = DEFAULT_PAGE_SIZE):
        if num_bins < 2:
            raise ValueError("need at least 2 hotness bins")
        self.owner = owner
        self.num_bins = num_bins
        self.page_size = page_size
        self.cool_threshold = 1 << (num_bins - 1)
        self.cool_seq = 0
        self.cooled_this_epoch = False
        self._pages: dict[int, PageRecord] = {}
        # bin index -> {page_id: record}; dicts keep insertion order
        self._bins: list[dict[int, PageRecord]] = [dict() for _ in range(num_bins)]

    # -- registration -----------------------------------------------------

    def register_page(self, record: PageRecord) -> None:
        if record.page_id in self._pages:
            raise ValueError(f"page {record.page_id} already registered")
        record.cool_seen = self.cool_seq
        record.bin_index = self.classify(self.effective_count(record))
        self._pages[record.page_id] = record
        self._bins[record.bin_index][record.page_id] = record

    def remove_page(self, page_id: int) -> PageRecord:
        record = self._pages.pop(page_id, None)
        if record is None:
            raise UnknownPageError(page_id)
        del self._bins[record.bin_index][page_id]
        return record

    def __contains__(self, page_id: int) -> bool:
        return page_id in self._pages

    def __len__(self) -> int:
        return len(self._pages)

    def page(self, page_id: int) -> PageRecord:
        try:
            return self._pages[page_id]
        except KeyError:
            raise UnknownPageError(page_id) from None

    def pages(self):
        return self._pages.values()

    # -- counting ---------------------------------------------------------

    def classify(self, count: int) -> int:
        """Bin index for an effective count: 0, else min(floor(log2)+1, top)."""
        if count <= 0:
            return 0
        return min(count.bit_length(), self.num_bins - 1)

    def effective_count(self, record: PageRecord) -> int:
        """Current count with all pending coolings applied (non-destructively)."""
        pending = self.cool_seq - record.cool_seen
        if pending <= 0:
            return record.raw_count
        return record.raw_count >> pending

    def begin_epoch(self) -> None:
        """Reset the once-per-epoch cooling latch."""
        self.cooled_this_epoch = False

    def cool(self) -> bool:
        """Halve all counts by bumping the cooling sequence.

        No counters are touched eagerly; every page is one bin colder once
        its pending coolings are applied. Returns False (suppressed) when a
        cooling already happened this epoch.
        """
        if self.cooled_this_epoch:
            return False
        self.cool_seq += 1
        self.cooled_this_epoch = True
        return True

    def _materialize(self, record: PageRecord) -> None:
        pending = self.cool_seq - record.cool_seen
        if pending > 0:
            record.raw_count >>= pending
        record.cool_seen = self.cool_seq

    def _refile(self, record: PageRecord) -> None:
        new_bin = self.classify(self.effective_count(record))
        if new_bin != record.bin_index:
            del self._bins[record.bin_index][record.page_id]
            record.bin_index = new_bin
            self._bins[new_bin][record.page_id] = record

    def record_sample(self, page_id: int) -> int:
        """Account one sampled access to a page; returns its new bin index.

        Applies pending coolings, increments the count, and re-files the
        page. Crossing the top threshold triggers a cooling that the
        triggering page itself is exempt from, leaving it alone in the
        hottest bin; if a cooling already fired this epoch the page simply
        stays pinned in the hottest bin.
        """
        record = self.page(page_id)
        self._materialize(record)
        record.raw_count += 1
        if record.raw_count >= self.cool_threshold and self.cool():
            # exempt the trigger from the cooling it caused
            record.cool_seen = self.cool_seq
        self._refile(record)
        return record.bin_index

    def record_sample_batch(self, page_ids: np.ndarray) -> None:
        """Apply an ordered stream of sampled page ids.

        Equivalent to calling record_sample() per element, but does the
        per-page arithmetic in aggregate. Within one epoch at most one
        cooling can fire, so the stream splits into a pre-cooling and a
        post-cooling segment around the triggering sample; counts before the
        trigger are halved together with the page's prior count, counts
        after it are not.
        """
        if len(page_ids) == 0:
            return
        ids, counts = np.unique(page_ids, return_counts=True)
        records = [self.page(int(p)) for p in ids]
        eff = [self.effective_count(r) for r in records]

        trigger_pos = None
        trigger_idx = None
        if not self.cooled_this_epoch:
            for i, record in enumerate(records):
                needed = max(1, self.cool_threshold - eff[i])
                if counts[i] >= needed:
                    pos = int(np.flatnonzero(page_ids == ids[i])[needed - 1])
                    if trigger_pos is None or pos < trigger_pos:
                        trigger_pos = pos
                        trigger_idx = i

        if trigger_pos is None:
            for i, record in enumerate(records):
                self._materialize(record)
                record.raw_count += int(counts[i])
                self._refile(record)
            return

        pre = page_ids[:trigger_pos]
        post = page_ids[trigger_pos + 1:]
        pre_ids, pre_counts = np.unique(pre, return_counts=True)
        post_ids, post_counts = np.unique(post, return_counts=True)
        pre_map = dict(zip(pre_ids.tolist(), pre_counts.tolist()))
        post_map = dict(zip(post_ids.tolist(), post_counts.tolist()))

        old_seq = self.cool_seq
        assert self.cool()
        for i, record in enumerate(records):
            pid = int(ids[i])
            pre_n = pre_map.get(pid, 0)
            post_n = post_map.get(pid, 0)
            if i == trigger_idx:
                # the trigger keeps its full count, exempt from this cooling
                record.raw_count = eff[i] + pre_n + 1 + post_n
                record.cool_seen = self.cool_seq
            elif post_n > 0:
                record.raw_count = ((eff[i] + pre_n) >> 1) + post_n
                record.cool_seen = self.cool_seq
            elif pre_n > 0:
                # last touched before the cooling; halving stays pending
                record.raw_count = eff[i] + pre_n
                record.cool_seen = old_seq
            self._refile(record)

    # -- victim selection -------------------------------------------------

    def _candidates(self, tier: Tier) -> list[VictimQuery]:
        out = []
        for record in list(self._pages.values()):
            if record.tier is not tier:
                continue
            staleness = record.cool_seen
            self._refile(record)  # lazy re-bin on migration consideration
            out.append(VictimQuery(record, record.bin_index, staleness))
        return out

    def demotion_victims(self, budget_bytes: int) -> list[PageRecord]:
        """Fast-tier pages to evict, coldest bin first, up to the byte budget.

        Within a bin the least recently updated page goes first (oldest
        cooling stamp, then lowest page id). May cover fewer bytes than the
        budget when fast-resident pages run out.
        """
        limit = budget_bytes // self.page_size
        if limit <= 0:
            return []
        cands = self._candidates(Tier.FAST)
        cands.sort(key=lambda v: (v.bin_index, v.staleness, v.record.page_id))
        return [v.record for v in cands[:limit]]

    def promotion_victims(self, budget_bytes: int) -> list[PageRecord]:
        """Slow-tier pages to promote, hottest bin first, up to the byte budget.

        Pages in bin 0 (never sampled) are never promoted.
        """
        limit = budget_bytes // self.page_size
        if limit <= 0:
            return []
        cands = [v for v in self._candidates(Tier.SLOW) if v.bin_index > 0]
        cands.sort(key=lambda v: (-v.bin_index, v.staleness, v.record.page_id))
        return [v.record for v in cands[:limit]]

    # -- introspection ----------------------------------------------------

    def bin_tallies(self) -> list[int]:
        return [len(b) for b in self._bins]

    def dump(self) -> str:
        """Structured per-bin tallies, for debugging and golden tests."""
        lines = [f"process {self.owner}: {len(self._pages)} pages, "
                 f"cool_seq={self.cool_seq}"]
        for i, pages in enumerate(self._bins):
            fast = sum(1 for r in pages.values() if r.tier is Tier.FAST)
            slow = len(pages) - fast
            lines.append(f"  bin {i}: total={len(pages)} fast={fast} slow={slow}")
        return "\n".join(lines)
