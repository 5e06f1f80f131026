import numpy as np
import pytest

import tnsupernet as tn
from tnsupernet.errors import DataFormatError
from tnsupernet.tabular import (
    SyntheticSpec,
    as_evaluator,
    generate_synthetic,
    load_benchmark_csv,
    nasbench201_supernet,
    save_benchmark_csv,
)


class TestGenerateSynthetic:
    def test_planted_is_unique_maximizer(self):
        spec = SyntheticSpec(choices=(3, 3), planted_index=(2, 1), gap=0.3, noise_sd=0.0, seed=0)
        bench = generate_synthetic(spec)
        planted = (2, 1)
        for idx, v in bench.val_score.items():
            if idx != planted:
                assert bench.val_score[planted] >= v + 0.3
                assert bench.test_score[planted] >= bench.test_score[idx] + 0.3

    def test_pairwise_bonus_rewards_coordination(self):
        spec = SyntheticSpec(
            choices=(4, 4, 4),
            planted_index=(2, 2, 2),
            gap=0.3,
            noise_sd=0.0,
            correlation="pairwise",
            pairwise_strength=0.4,
            seed=1,
        )
        bench = generate_synthetic(spec)
        # planted stays optimal by construction
        best = max(bench.val_score, key=bench.val_score.get)
        assert best == (2, 2, 2)
        # matching choices on node-sharing edges outscore the same base rows on average
        matched = [v for idx, v in bench.val_score.items() if idx[0] == idx[1] == idx[2] and idx != best]
        unmatched = [v for idx, v in bench.val_score.items() if len(set(idx)) == 3]
        assert np.mean(matched) > np.mean(unmatched)

    def test_deterministic_per_seed(self):
        spec = SyntheticSpec(choices=(3, 3), planted_index=(1, 1), gap=0.3, noise_sd=0.05, seed=7)
        a = generate_synthetic(spec)
        b = generate_synthetic(spec)
        assert a.val_score == b.val_score
        assert a.test_score == b.test_score

    def test_invalid_planted_index(self):
        with pytest.raises(DataFormatError):
            SyntheticSpec(choices=(3, 3), planted_index=(4, 1))


class TestCsvRoundTrip:
    def test_round_trip(self, tmp_path):
        spec = SyntheticSpec(choices=(2, 3), planted_index=(1, 3), gap=0.4, noise_sd=0.01, seed=3)
        bench = generate_synthetic(spec)
        path = tmp_path / "bench.csv"
        save_benchmark_csv(bench, path)
        again = load_benchmark_csv(path)
        assert again.val_score == bench.val_score
        assert again.test_score == bench.test_score
        assert again.supernet.choice_counts == (2, 3)

    def test_small_explicit_file(self, tmp_path):
        path = tmp_path / "b.csv"
        path.write_text(
            "i_1,i_2,val,test\n1,1,0.5,0.4\n1,2,0.2,0.1\n2,1,0.9,0.8\n2,2,0.3,0.2\n"
        )
        bench = load_benchmark_csv(path)
        assert bench.val_score[(2, 1)] == 0.9
        assert tn.space_size(bench.supernet) == 4

    def test_missing_row_named(self, tmp_path):
        path = tmp_path / "b.csv"
        path.write_text("i_1,i_2,val,test\n1,1,0.5,0.4\n1,2,0.2,0.1\n2,1,0.9,0.8\n")
        with pytest.raises(DataFormatError, match=r"missing index \(2, 2\)"):
            load_benchmark_csv(path)

    def test_duplicate_row_line_number(self, tmp_path):
        path = tmp_path / "b.csv"
        path.write_text("i_1,val,test\n1,0.5,0.4\n1,0.5,0.4\n2,0.1,0.1\n")
        with pytest.raises(DataFormatError, match="line 3"):
            load_benchmark_csv(path)

    def test_malformed_number_line_number(self, tmp_path):
        path = tmp_path / "b.csv"
        path.write_text("i_1,val,test\n1,zero,0.4\n2,0.1,0.1\n")
        with pytest.raises(DataFormatError, match="line 2"):
            load_benchmark_csv(path)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "b.csv"
        path.write_text("a,b,c\n1,0.5,0.4\n")
        with pytest.raises(DataFormatError, match="header"):
            load_benchmark_csv(path)

    def test_supernet_shape_check(self, tmp_path):
        path = tmp_path / "b.csv"
        path.write_text("i_1,i_2,val,test\n1,1,0.5,0.4\n1,2,0.2,0.1\n2,1,0.9,0.8\n2,2,0.3,0.2\n")
        with pytest.raises(DataFormatError, match="edges"):
            load_benchmark_csv(path, supernet=tn.make_chain(3, 2))


class TestEvaluator:
    def test_lookup_and_purity(self):
        spec = SyntheticSpec(choices=(3, 3), planted_index=(2, 2), gap=0.3, seed=5)
        bench = generate_synthetic(spec)
        ev = as_evaluator(bench)
        a = ev.evaluate((2, 2))
        b = ev.evaluate((2, 2))
        assert a == b == bench.val_score[(2, 2)]
        assert max(ev.evaluate(i) for i in tn.enumerate_indices(bench.supernet)) == a

    def test_unknown_index(self):
        spec = SyntheticSpec(choices=(2, 2), planted_index=(1, 1), gap=0.3, seed=0)
        ev = as_evaluator(generate_synthetic(spec))
        with pytest.raises(DataFormatError, match="unknown index"):
            ev.evaluate((5, 5))

    def test_expectation_under_uniform_is_mean(self):
        spec = SyntheticSpec(choices=(3, 2), planted_index=(1, 2), gap=0.3, seed=9)
        bench = generate_synthetic(spec)
        ev = as_evaluator(bench)
        s = bench.supernet
        dist = tn.init_distribution(s, tn.uniform_ranks(s, 2), tn.InitSpec.zeros())
        value, _ = ev.relaxed_objective(dist)
        assert abs(value - np.mean(list(bench.val_score.values()))) < 1e-12

    def test_val_test_access_counters(self):
        spec = SyntheticSpec(choices=(2, 2), planted_index=(2, 1), gap=0.4, seed=2)
        bench = generate_synthetic(spec)
        ev = as_evaluator(bench)
        from tnsupernet.search import SearchConfig, search

        dist = tn.init_distribution(bench.supernet, tn.uniform_ranks(bench.supernet, 2), seed=0)
        cfg = SearchConfig(mode="stochastic", iterations=20, samples_per_step=2, seed=0)
        search(dist, ev, cfg)
        assert ev.val_queries == 20 * 2
        assert ev.test_queries == 1  # test column only at finalization

    def test_regret(self):
        spec = SyntheticSpec(choices=(2, 2), planted_index=(1, 2), gap=0.3, seed=4)
        bench = generate_synthetic(spec)
        assert bench.regret((1, 2)) == 0.0
        assert bench.regret((1, 1)) > 0.0


def test_nasbench201_shape():
    s = nasbench201_supernet()
    assert s.num_edges == 6
    assert s.num_nodes == 4
    assert all(e.num_choices == 5 for e in s.edges)
    assert tn.space_size(s) == 15625
