"""Walk through the hotness bins: sampling, cooling, and victim picks.

Registers a handful of pages, streams skewed samples at them, and shows how
the exponential bins separate hot from cold, how crossing the top threshold
cools every other page, and which pages the policy would migrate first.
"""

import numpy as np

from tiersim import HotnessBins, PageRecord, Tier

PAGE = 2 * 1024 * 1024

bins = HotnessBins(owner=1)
for page_id in range(8):
    tier = Tier.FAST if page_id < 4 else Tier.SLOW
    bins.register_page(PageRecord(page_id, owner=1, tier=tier))

print("pages 0-3 are fast-resident, 4-7 slow-resident\n")

rng = np.random.default_rng(0)
# page 4 is blazing hot, pages 0 and 5 warm, the rest barely touched
stream = rng.choice([4] * 10 + [0, 0, 0, 5, 5, 5, 1, 6], size=160)
bins.record_sample_batch(stream.astype(np.int64))

print("after 160 skewed samples:")
print(bins.dump())
print()

victims = bins.promotion_victims(2 * PAGE)
print("promote to fast first:", [r.page_id for r in victims])
victims = bins.demotion_victims(2 * PAGE)
print("demote to slow first: ", [r.page_id for r in victims])
print()

print(f"coolings so far: {bins.cool_seq} (hot page crossings halve everyone,")
print("at most once per epoch, applied lazily on each page's next touch)")
hot = bins.page(4)
print(f"hottest page count: {bins.effective_count(hot)}, bin {hot.bin_index}")
