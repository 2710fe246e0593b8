"""Per-epoch fast-memory QoS decisions.

The adaptive policy (scenario keyword "maxmem") reallocates fast-memory
quotas proportionally to each process's distance from its target miss
ratio, then plans page migrations along each process's heat gradient. Two
baselines are provided for comparison: fixed static partitions and a
QoS-blind global-hotness policy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from .hotness import HotnessBins, PageRecord
from .telemetry import ProcessQoSState


@dataclass
class ReallocationPlan:
    """Signed quota deltas for one epoch plus the scale factors behind them."""

    budget: int                      # reallocation byte budget R
    f_need: float = 0.0
    f_surplus: float = 0.0
    deltas: dict[int, int] = field(default_factory=dict)
    flagged: set[int] = field(default_factory=set)

    def delta(self, pid: int) -> int:
        return self.deltas.get(pid, 0)


@dataclass
class MigrationPlan:
    """Ordered page moves for one process (or, for the no-QoS baseline, all)."""

    promotions: list[PageRecord] = field(default_factory=list)
    demotions: list[PageRecord] = field(default_factory=list)

    def planned_bytes(self, page_size: int) -> int:
        return (len(self.promotions) + len(self.demotions)) * page_size


def plan_reallocation(states: list[ProcessQoSState], budget: int,
                      free_fast: int) -> ReallocationPlan:
    """Compute per-process quota deltas for one epoch.

    Needy processes (a_miss > t_miss) gain a_miss/t_miss * R/F_need bytes;
    surplus processes (a_miss < t_miss, quota > 0) lose t_miss/a_miss *
    R/F_surplus, clamped to what they hold. A process with a_miss = 0 has an
    infinite surplus ratio; by the inf/inf = 1 convention it alone gives up
    the whole budget, and only one such process is tapped per epoch (oldest
    arrival first). Gains are funded from the free pool first, in arrival
    order and without consuming the budget, then from surplus takes; when
    supply runs short, earlier arrivals are satisfied first and the rest
    are flagged. If nobody is needy, leftover free memory is split equally
    among all processes.
    """
    plan = ReallocationPlan(budget=budget)
    if not states:
        return plan

    needy = sorted((s for s in states if s.a_miss > s.t_miss),
                   key=lambda s: s.arrival_seq)
    surplus = sorted((s for s in states if s.a_miss < s.t_miss and s.quota > 0),
                     key=lambda s: s.arrival_seq)

    # ratios as exact rationals so shares floor deterministically to bytes
    need_ratio = {s.pid: Fraction(s.a_miss) / Fraction(s.t_miss) for s in needy}
    f_need = sum(need_ratio.values(), Fraction(0))
    plan.f_need = float(f_need)

    if not needy:
        # every target met; split remaining free fast memory equally
        if free_fast > 0:
            share = free_fast // len(states)
            if share > 0:
                for s in states:
                    plan.deltas[s.pid] = share
        return plan

    gains = {s.pid: int(need_ratio[s.pid] * budget / f_need)
             for s in needy} if f_need > 0 else {}

    idle = [s for s in surplus if s.a_miss == 0.0]
    takes: dict[int, int] = {}
    if idle:
        plan.f_surplus = math.inf
        victim = idle[0]  # only one zero-miss process is tapped per epoch
        takes[victim.pid] = min(budget, victim.quota)
    elif surplus:
        give_ratio = {s.pid: Fraction(s.t_miss) / Fraction(s.a_miss)
                      for s in surplus}
        f_surplus = sum(give_ratio.values(), Fraction(0))
        plan.f_surplus = float(f_surplus)
        for s in surplus:
            want = int(give_ratio[s.pid] * budget / f_surplus)
            takes[s.pid] = min(want, s.quota)

    # fund gains: free pool first (exempt from the budget), then takes,
    # both consumed in arrival order; stop once demand is covered
    free_left = free_fast
    take_queue = [(s.pid, takes[s.pid]) for s in surplus if takes.get(s.pid)]
    taken: dict[int, int] = {}
    for s in needy:
        need = gains.get(s.pid, 0)
        granted = 0
        use_free = min(need, free_left)
        granted += use_free
        free_left -= use_free
        while granted < need and take_queue:
            donor, avail = take_queue[0]
            use = min(need - granted, avail)
            granted += use
            taken[donor] = taken.get(donor, 0) + use
            if use == avail:
                take_queue.pop(0)
            else:
                take_queue[0] = (donor, avail - use)
        if granted:
            plan.deltas[s.pid] = granted
        if granted < need:
            plan.flagged.add(s.pid)
    for donor, amount in taken.items():
        plan.deltas[donor] = -amount
    return plan


class ProcessMigrationPlanner:
    """Incremental victim cursor over one process's heat gradient.

    Splits a process's epoch moves into two parts so the policy can serve
    all processes' quota realization before anyone's optimization swaps:
    ``plan_realization`` sheds residency above the quota (coldest first)
    and fills headroom below it (hottest first, never bin 0);
    ``plan_swaps`` then trades strictly hotter slow pages against the
    coldest fast ones while the quota is full.
    """

    def __init__(self, bins: HotnessBins, quota_after: int, fast_resident: int):
        page = bins.page_size
        self.page_size = page
        self.quota_pages = quota_after // page
        self.resident = fast_resident // page
        self.demote_order = bins.demotion_victims(len(bins) * page)
        self.promote_order = bins.promotion_victims(len(bins) * page)
        self.di = 0
        self.pi = 0

    def plan_realization(self, plan: MigrationPlan, budget_pages: int,
                         capacity_free_pages: int) -> tuple[int, int]:
        """Append realization moves; returns (pages used, free-page change)."""
        used = 0
        freed = 0
        excess = self.resident - self.quota_pages
        while excess > 0 and used < budget_pages and self.di < len(self.demote_order):
            plan.demotions.append(self.demote_order[self.di])
            self.di += 1
            excess -= 1
            self.resident -= 1
            used += 1
            freed += 1
        headroom = self.quota_pages - self.resident
        while (headroom > 0 and used < budget_pages
               and capacity_free_pages + freed > 0
               and self.pi < len(self.promote_order)):
            plan.promotions.append(self.promote_order[self.pi])
            self.pi += 1
            headroom -= 1
            self.resident += 1
            used += 1
            freed -= 1
        return used, freed

    def plan_swaps(self, plan: MigrationPlan, budget_pages: int) -> int:
        """Append paired swaps while they strictly improve heat; returns pages used."""
        used = 0
        if self.resident < self.quota_pages or self.quota_pages <= 0:
            return used
        while (budget_pages - used >= 2 and self.pi < len(self.promote_order)
               and self.di < len(self.demote_order)):
            hot = self.promote_order[self.pi]
            cold = self.demote_order[self.di]
            if hot.bin_index <= cold.bin_index:
                break
            plan.promotions.append(hot)
            plan.demotions.append(cold)
            self.pi += 1
            self.di += 1
            used += 2
        return used


def plan_migrations(state: ProcessQoSState, bins: HotnessBins, quota_after: int,
                    fast_resident: int, budget: int,
                    capacity_free_pages: int | None = None) -> MigrationPlan:
    """Plan one process's page moves toward its quota and heat gradient.

    Demotes (coldest first) at least the residency excess over the quota,
    then promotes (hottest first, never bin 0) into remaining quota
    headroom, then plans hot-for-cold swaps while the quota is full; each
    step is capped by the remaining byte budget. Runs every epoch even when
    the quota did not change. ``capacity_free_pages`` bounds net promotions
    by the fast tier's actual free space, so plans never rely on moves that
    would stall at execution.
    """
    plan = MigrationPlan()
    budget_pages = budget // bins.page_size
    if budget_pages <= 0:
        return plan
    planner = ProcessMigrationPlanner(bins, quota_after, fast_resident)
    if capacity_free_pages is None:
        capacity_free_pages = len(planner.promote_order) + 1
    used, _ = planner.plan_realization(plan, budget_pages, capacity_free_pages)
    planner.plan_swaps(plan, budget_pages - used)
    return plan


class QosPolicy:
    """Adaptive quota reallocation plus per-process heat-gradient migration."""

    name = "maxmem"
    uses_quota_gate = True

    def initial_quota(self, pid: int) -> int:
        return 0

    def reallocate(self, states: list[ProcessQoSState], budget: int,
                   free_fast: int) -> ReallocationPlan:
        return plan_reallocation(states, budget, free_fast)

    def migrations(self, procs, fast_free_pages: int, budget: int,
                   page_size: int) -> list[tuple[int, MigrationPlan]]:
        """Per-process plans sharing one byte budget, realization first.

        Every process's quota realization (shedding residency above the
        quota, filling headroom below it) is planned before any process's
        optimization swaps, so a swap-hungry early arrival cannot starve a
        later one of its entitled pages. Within the realization pass,
        over-quota processes go first so promotions always find the
        capacity the demotions freed.
        """
        plans = {p[0]: MigrationPlan() for p in procs}
        planners = {p[0]: ProcessMigrationPlanner(p[2], p[1].quota, p[3])
                    for p in procs}
        remaining = budget // page_size
        free = fast_free_pages
        over = [p for p in procs
                if p[3] // page_size > p[1].quota // page_size]
        rest = [p for p in procs if p not in over]
        for pid, state, bins, fast_resident in over + rest:
            if remaining <= 0:
                break
            used, freed = planners[pid].plan_realization(plans[pid], remaining, free)
            remaining -= used
            free += freed
        for pid, state, bins, fast_resident in procs:
            if remaining < 2:
                break
            remaining -= planners[pid].plan_swaps(plans[pid], remaining)
        return [(pid, plan) for pid, plan in plans.items()
                if plan.promotions or plan.demotions]


class StaticPartitionPolicy(QosPolicy):
    """Quotas pinned to fixed per-process partitions; migration still runs.

    A partition reserved for a process that has not started stays unusable
    by the others. Processes whose miss ratio exceeds their target are
    flagged, since no reallocation will ever help them.
    """

    name = "static"

    def __init__(self, partitions: dict[int, int], fast_capacity: int):
        total = sum(partitions.values())
        if total > fast_capacity:
            raise ValueError(
                f"partitions total {total} bytes, exceeding the "
                f"{fast_capacity}-byte fast tier")
        self.partitions = dict(partitions)

    def initial_quota(self, pid: int) -> int:
        return self.partitions.get(pid, 0)

    def reallocate(self, states, budget, free_fast):
        plan = ReallocationPlan(budget=budget)
        plan.flagged = {s.pid for s in states if s.a_miss > s.t_miss}
        return plan


class GlobalHotnessPolicy(QosPolicy):
    """QoS-blind baseline: the globally hottest pages fill fast memory.

    No per-process quotas; fault placement is gated only by tier capacity.
    Stands in for hardware-managed or NUMA-balancing tiering.
    """

    name = "noqos"
    uses_quota_gate = False

    def reallocate(self, states, budget, free_fast):
        return ReallocationPlan(budget=budget)

    def migrations(self, procs, fast_free_pages: int, budget: int,
                   page_size: int) -> list[tuple[int, MigrationPlan]]:
        promote_order = []   # (bin desc, arrival, staleness, page) over all procs
        demote_order = []
        for arrival, (pid, state, bins, fast_resident) in enumerate(procs):
            for rec in bins.promotion_victims(len(bins) * page_size):
                promote_order.append((-rec.bin_index, arrival, rec.cool_seen,
                                      rec.page_id, pid, rec))
            for rec in bins.demotion_victims(len(bins) * page_size):
                demote_order.append((rec.bin_index, arrival, rec.cool_seen,
                                     rec.page_id, pid, rec))
        promote_order.sort(key=lambda t: t[:4])
        demote_order.sort(key=lambda t: t[:4])

        plans: dict[int, MigrationPlan] = {}
        budget_pages = budget // page_size
        free = fast_free_pages
        pi = di = 0
        while free > 0 and budget_pages > 0 and pi < len(promote_order):
            entry = promote_order[pi]
            plans.setdefault(entry[4], MigrationPlan()).promotions.append(entry[5])
            pi += 1
            free -= 1
            budget_pages -= 1
        while budget_pages >= 2 and pi < len(promote_order) and di < len(demote_order):
            hot = promote_order[pi]
            cold = demote_order[di]
            if hot[5].bin_index <= cold[5].bin_index:
                break
            plans.setdefault(cold[4], MigrationPlan()).demotions.append(cold[5])
            plans.setdefault(hot[4], MigrationPlan()).promotions.append(hot[5])
            pi += 1
            di += 1
            budget_pages -= 2
        return [(pid, plan) for pid, plan in plans.items()]


def baseline_static(partitions: dict[int, int], fast_capacity: int) -> StaticPartitionPolicy:
    """Static-partition policy; rejects over-committed partition tables."""
    return StaticPartitionPolicy(partitions, fast_capacity)


def baseline_noqos() -> GlobalHotnessPolicy:
    return GlobalHotnessPolicy()


POLICY_NAMES = ("maxmem", "static", "noqos")
