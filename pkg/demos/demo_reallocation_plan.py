"""One reallocation round, by hand.

Three processes: one far over its miss-ratio target, one comfortably under
it, and one idle. Shows the need/surplus scales, the proportional deltas,
and the clamping of the idle victim.
"""

from tiersim import ProcessQoSState, plan_reallocation

GIB = 1024 ** 3


def proc(pid, t_miss, a_miss, quota, arrival):
    s = ProcessQoSState(pid=pid, t_miss=t_miss, arrival_seq=arrival)
    s.a_miss = a_miss
    s.quota = quota
    return s


states = [
    proc(1, t_miss=0.1, a_miss=0.4, quota=2 * GIB, arrival=0),   # needy
    proc(2, t_miss=0.1, a_miss=0.05, quota=10 * GIB, arrival=1),  # surplus
    proc(3, t_miss=0.5, a_miss=0.0, quota=1 * GIB, arrival=2),    # idle
]

plan = plan_reallocation(states, budget=2 * GIB, free_fast=0)

print(f"need scale F_need = {plan.f_need}  (sum of a_miss/t_miss over needy)")
print(f"surplus scale F_surplus = {plan.f_surplus}  (idle process -> infinity)")
print()
for s in states:
    delta = plan.delta(s.pid)
    print(f"process {s.pid}: a_miss {s.a_miss:.2f} vs target {s.t_miss:.2f} "
          f"-> quota delta {delta / GIB:+.2f} GiB"
          + ("  [flagged]" if s.pid in plan.flagged else ""))
print()
print("the idle process is the sole donor (inf/inf = 1) and is clamped to")
print("the 1 GiB it holds, so the needy process is left short and flagged")
