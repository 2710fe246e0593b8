"""Hotness-bin behavior: classification, lazy cooling, victim ordering."""

import numpy as np
import pytest

from tiersim.hotness import HotnessBins, PageRecord, Tier, UnknownPageError

from oracles import EagerBins, brute_force_bin

PAGE = 2 * 1024 * 1024


def make_bins(owner=1, num_bins=6):
    return HotnessBins(owner=owner, num_bins=num_bins, page_size=PAGE)


def add_page(bins, page_id, tier=Tier.FAST, count=0):
    rec = PageRecord(page_id=page_id, owner=bins.owner, tier=tier)
    bins.register_page(rec)
    for _ in range(count):
        bins.record_sample(page_id)
    return rec


class TestClassification:
    def test_matches_brute_force_over_small_counts(self):
        bins = make_bins()
        for count in range(0, 65):
            assert bins.classify(count) == brute_force_bin(count, 6), count

    def test_classifier_other_bin_widths(self):
        for num_bins in (2, 4, 8):
            bins = make_bins(num_bins=num_bins)
            for count in range(0, 2 ** (num_bins - 1) + 10):
                assert bins.classify(count) == brute_force_bin(count, num_bins)

    def test_first_sample_reaches_bin_one(self):
        bins = make_bins()
        add_page(bins, 0)
        assert bins.record_sample(0) == 1

    def test_count_six_stays_in_bin_three(self):
        # counts 4..7 share bin 3; brute-force oracle agrees
        bins = make_bins()
        add_page(bins, 0, count=5)
        assert bins.record_sample(0) == 3
        assert brute_force_bin(6) == 3


class TestCooling:
    def test_threshold_crossing_triggers_cooling(self):
        bins = make_bins()
        hot = add_page(bins, 0, count=31)
        other = add_page(bins, 1, count=6)
        assert other.bin_index == 3
        assert bins.record_sample(0) == 5  # reaches 32, fires a cooling
        assert bins.cool_seq == 1
        # the trigger keeps its count and sits alone in the hottest bin
        assert bins.effective_count(hot) == 32
        assert bins.effective_count(other) == 3
        bins.demotion_victims(10 * PAGE)  # forces lazy re-bin
        assert other.bin_index == 2
        assert hot.bin_index == 5

    def test_cooling_suppressed_within_epoch(self):
        bins = make_bins()
        add_page(bins, 0, count=31)
        bins.record_sample(0)
        assert bins.cool() is False  # second request this epoch: no-op
        assert bins.cool_seq == 1
        bins.begin_epoch()
        assert bins.cool() is True
        assert bins.cool_seq == 2

    def test_pinned_in_hottest_bin_after_suppressed_cooling(self):
        bins = make_bins()
        trigger = add_page(bins, 0, count=31)
        runner_up = add_page(bins, 1, count=30)
        bins.record_sample(0)  # fires the epoch's one cooling
        for _ in range(3):
            bins.record_sample(1)  # 15 + 3, then pinned path once over 32
        assert bins.cooled_this_epoch
        assert bins.effective_count(trigger) == 32
        assert runner_up.bin_index == 5

    def test_lazy_halving_examples(self):
        bins = make_bins()
        rec = add_page(bins, 0)
        rec.raw_count = 32  # as if it had been a cooling's exempted trigger
        bins.cool()
        assert bins.effective_count(rec) == 16
        assert bins.classify(16) == 5

        bins2 = make_bins()
        one = add_page(bins2, 0, count=1)
        bins2.cool()
        assert bins2.effective_count(one) == 0
        assert bins2.classify(0) == 0

        bins3 = make_bins()
        seven = add_page(bins3, 0, count=7)
        bins3.cool()
        bins3.begin_epoch()
        bins3.cool()
        # 7 -> 3 -> 1 under two pending coolings
        assert bins3.effective_count(seven) == 1
        assert bins3.classify(1) == 1

    def test_unknown_page_rejected(self):
        bins = make_bins()
        with pytest.raises(UnknownPageError):
            bins.record_sample(99)


class TestLazyEagerEquivalence:
    def run_random(self, seed, ops=20_000, pages=200, epoch_every=500):
        rng = np.random.default_rng(seed)
        lazy = make_bins()
        eager = EagerBins()
        for page_id in range(pages):
            add_page(lazy, page_id, tier=Tier.FAST if page_id % 2 else Tier.SLOW)
            eager.register(page_id)
        # zipf-ish skew so some pages actually reach the cooling threshold
        weights = 1.0 / np.arange(1, pages + 1) ** 1.3
        weights /= weights.sum()
        stream = rng.choice(pages, size=ops, p=weights)
        for i, page_id in enumerate(stream):
            lazy.record_sample(int(page_id))
            eager.record_sample(int(page_id))
            if (i + 1) % epoch_every == 0:
                lazy.begin_epoch()
                eager.begin_epoch()
        assert lazy.cool_seq == eager.coolings
        return lazy, eager, pages

    def test_random_sequences_match_eager_oracle(self):
        lazy, eager, pages = self.run_random(seed=7)
        for page_id in range(pages):
            rec = lazy.page(page_id)
            assert lazy.effective_count(rec) == eager.counts[page_id]
            lazy._refile(rec)
            assert rec.bin_index == eager.bin_of(page_id)

    def test_interleaved_explicit_cools_match(self):
        rng = np.random.default_rng(3)
        lazy = make_bins()
        eager = EagerBins()
        for page_id in range(50):
            add_page(lazy, page_id)
            eager.register(page_id)
        for step in range(5_000):
            action = rng.integers(0, 10)
            if action == 0:
                assert lazy.cool() == eager.cool()
            elif action == 1:
                lazy.begin_epoch()
                eager.begin_epoch()
            else:
                page_id = int(rng.integers(0, 50))
                lazy.record_sample(page_id)
                eager.record_sample(page_id)
        for page_id in range(50):
            assert lazy.effective_count(lazy.page(page_id)) == eager.counts[page_id]

    def test_cool_seq_monotone_one_per_epoch(self):
        bins = make_bins()
        add_page(bins, 0)
        seqs = [bins.cool_seq]
        for _ in range(5):
            bins.cool()
            bins.cool()
            seqs.append(bins.cool_seq)
            bins.begin_epoch()
        assert seqs == [0, 1, 2, 3, 4, 5]


class TestBatchEquivalence:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_batch_matches_sequential(self, seed):
        rng = np.random.default_rng(seed)
        seq = make_bins()
        bat = make_bins()
        pages = 40
        for page_id in range(pages):
            add_page(seq, page_id)
            add_page(bat, page_id)
        for _ in range(30):  # 30 epochs, heavy skew to force coolings
            weights = 1.0 / np.arange(1, pages + 1) ** 2.0
            weights /= weights.sum()
            stream = rng.choice(pages, size=400, p=weights).astype(np.int64)
            for page_id in stream:
                seq.record_sample(int(page_id))
            bat.record_sample_batch(stream)
            assert seq.cool_seq == bat.cool_seq
            for page_id in range(pages):
                assert (seq.effective_count(seq.page(page_id))
                        == bat.effective_count(bat.page(page_id))), page_id
                assert (seq.page(page_id).raw_count, seq.page(page_id).cool_seen) == \
                       (bat.page(page_id).raw_count, bat.page(page_id).cool_seen)
            seq.begin_epoch()
            bat.begin_epoch()

    def test_empty_batch_is_noop(self):
        bins = make_bins()
        add_page(bins, 0, count=3)
        bins.record_sample_batch(np.empty(0, dtype=np.int64))
        assert bins.effective_count(bins.page(0)) == 3


class TestVictimSelection:
    def test_zero_budget(self):
        bins = make_bins()
        add_page(bins, 0, tier=Tier.FAST, count=3)
        assert bins.demotion_victims(0) == []
        assert bins.promotion_victims(0) == []

    def test_coldest_first(self):
        bins = make_bins()
        a = add_page(bins, 0, tier=Tier.FAST, count=0)   # bin 0
        add_page(bins, 1, tier=Tier.FAST, count=4)       # bin 3
        assert bins.demotion_victims(1 * PAGE) == [a]

    def test_demotion_order_within_and_across_bins(self):
        bins = make_bins()
        a = add_page(bins, 0, tier=Tier.FAST, count=1)   # bin 1
        b = add_page(bins, 1, tier=Tier.FAST, count=1)   # bin 1
        c = add_page(bins, 2, tier=Tier.FAST, count=2)   # bin 2
        assert bins.demotion_victims(3 * PAGE) == [a, b, c]
        # oracle: full sort by (bin, staleness, page id)
        expect = sorted([a, b, c],
                        key=lambda r: (brute_force_bin(r.raw_count),
                                       r.cool_seen, r.page_id))
        assert bins.demotion_victims(3 * PAGE) == expect

    def test_hottest_first_promotion(self):
        bins = make_bins()
        x = add_page(bins, 0, tier=Tier.SLOW, count=16)  # bin 5
        add_page(bins, 1, tier=Tier.SLOW, count=2)       # bin 2
        assert bins.promotion_victims(1 * PAGE) == [x]

    def test_bin_zero_never_promoted(self):
        bins = make_bins()
        add_page(bins, 0, tier=Tier.SLOW, count=0)
        add_page(bins, 1, tier=Tier.SLOW, count=0)
        assert bins.promotion_victims(100 * PAGE) == []

    def test_promotion_order_across_bins(self):
        bins = make_bins()
        v = add_page(bins, 0, tier=Tier.SLOW, count=8)    # bin 4
        w = add_page(bins, 1, tier=Tier.SLOW, count=8)    # bin 4
        x = add_page(bins, 2, tier=Tier.SLOW, count=16)   # bin 5
        assert bins.promotion_victims(2 * PAGE) == [x, v]
        assert bins.promotion_victims(3 * PAGE) == [x, v, w]

    def test_stale_pages_evicted_first_within_bin(self):
        bins = make_bins()
        stale = add_page(bins, 5, tier=Tier.FAST, count=4)
        bins.cool()          # pending halving makes page 5 stale (bin 2 soon)
        bins.begin_epoch()
        fresh = add_page(bins, 1, tier=Tier.FAST, count=2)
        # both land in bin 2 (counts 2); stale has the older cooling stamp
        victims = bins.demotion_victims(2 * PAGE)
        assert victims == [stale, fresh]

    def test_budget_prefix_property(self):
        rng = np.random.default_rng(11)
        bins = make_bins()
        for page_id in range(30):
            tier = Tier.FAST if page_id % 2 else Tier.SLOW
            add_page(bins, page_id, tier=tier, count=int(rng.integers(0, 31)))
        full_d = bins.demotion_victims(30 * PAGE)
        full_p = bins.promotion_victims(30 * PAGE)
        for k in range(len(full_d) + 1):
            assert bins.demotion_victims(k * PAGE) == full_d[:k]
        for k in range(len(full_p) + 1):
            assert bins.promotion_victims(k * PAGE) == full_p[:k]

    def test_promotions_and_demotions_disjoint(self):
        rng = np.random.default_rng(13)
        bins = make_bins()
        for page_id in range(40):
            tier = Tier.FAST if rng.random() < 0.5 else Tier.SLOW
            add_page(bins, page_id, tier=tier, count=int(rng.integers(0, 31)))
        promoted = {r.page_id for r in bins.promotion_victims(40 * PAGE)}
        demoted = {r.page_id for r in bins.demotion_victims(40 * PAGE)}
        assert promoted.isdisjoint(demoted)

    def test_successive_calls_concatenate_when_pages_move(self):
        bins = make_bins()
        for page_id in range(6):
            add_page(bins, page_id, tier=Tier.FAST, count=page_id)
        one_shot = [r.page_id for r in bins.demotion_victims(6 * PAGE)]
        bins2 = make_bins()
        for page_id in range(6):
            add_page(bins2, page_id, tier=Tier.FAST, count=page_id)
        stepped = []
        for _ in range(6):
            victim = bins2.demotion_victims(1 * PAGE)[0]
            victim.tier = Tier.SLOW  # migrate it
            stepped.append(victim.page_id)
        assert stepped == one_shot


class TestBookkeeping:
    def test_tallies_cover_all_pages(self):
        rng = np.random.default_rng(5)
        bins = make_bins()
        for page_id in range(25):
            add_page(bins, page_id, count=int(rng.integers(0, 31)))
        assert sum(bins.bin_tallies()) == len(bins) == 25

    def test_dump_mentions_every_bin(self):
        bins = make_bins()
        add_page(bins, 0, tier=Tier.FAST, count=3)
        add_page(bins, 1, tier=Tier.SLOW, count=3)
        text = bins.dump()
        assert "bin 0" in text and "bin 5" in text
        assert "fast=1" in text and "slow=1" in text

    def test_remove_page(self):
        bins = make_bins()
        add_page(bins, 0, count=2)
        bins.remove_page(0)
        assert 0 not in bins
        with pytest.raises(UnknownPageError):
            bins.remove_page(0)
