import numpy as np
import pytest

import tnsupernet as tn
from tnsupernet import relational as rel
from tnsupernet.errors import DataFormatError, SupernetFormatError

from conftest import rel_err


@pytest.fixture
def tiny_graph():
    """a -B1-> b -B2-> c, with target a -T-> c."""
    triples = [("a", "B1", "b"), ("b", "B2", "c"), ("a", "T", "c")]
    graph = rel.build_graph(triples)
    task = rel.ChainTask("T", 2, ("B1", "B2"), {"train": ((0, 2),)})
    return graph, task


@pytest.fixture
def planted():
    return rel.generate_planted_kg(
        30, 4, ("R1", "R2"), base_density=0.06, noise=0.2, seed=0
    )


class TestLoadTriples:
    def test_small_file(self, tmp_path):
        p = tmp_path / "t.tsv"
        p.write_text("a\tR1\tb\nb\tR2\tc\na\tR1\tc\n")
        g = rel.load_triples(p)
        assert g.num_entities == 3
        assert g.relations == ("R1", "R2")
        assert g.adjacency["R1"].nnz == 2
        assert g.adjacency["R2"].nnz == 1

    def test_duplicates_stored_once(self, tmp_path):
        p = tmp_path / "t.tsv"
        p.write_text("a\tR1\tb\na\tR1\tb\n")
        g = rel.load_triples(p)
        assert g.adjacency["R1"].nnz == 1
        assert len(g.triples) == 1

    def test_malformed_line_number(self, tmp_path):
        p = tmp_path / "t.tsv"
        p.write_text("a\tR1\tb\nbroken line\n")
        with pytest.raises(DataFormatError, match="line 2"):
            rel.load_triples(p)

    def test_empty_file(self, tmp_path):
        p = tmp_path / "t.tsv"
        p.write_text("")
        with pytest.raises(DataFormatError, match="empty"):
            rel.load_triples(p)

    def test_typed_edge_network_loads_identically(self, tmp_path):
        # meta-path style data: types as relations, same format
        p = tmp_path / "hin.tsv"
        p.write_text(
            "paper1\twritten_by\tauthor1\nauthor1\taffiliated\tinst1\npaper1\tabout\ttopic1\n"
        )
        g = rel.load_triples(p)
        assert set(g.relations) == {"written_by", "affiliated", "about"}


class TestDatasetRoundTrip:
    def test_write_then_load(self, tmp_path, planted):
        graph, task = planted
        rel.write_dataset(graph, task, tmp_path / "ds")
        graph2, task2 = rel.load_dataset(tmp_path / "ds")
        assert task2.target_relation == task.target_relation
        assert task2.chain_length == task.chain_length
        assert task2.candidate_relations == task.candidate_relations
        ent2 = {e: i for i, e in enumerate(graph2.entities)}
        for split in ("train", "valid", "test"):
            orig = {
                (graph.entities[x], graph.entities[y]) for x, y in task.splits[split]
            }
            again = {
                (graph2.entities[x], graph2.entities[y]) for x, y in task2.splits[split]
            }
            assert orig == again

    def test_missing_split_file(self, tmp_path):
        d = tmp_path / "ds"
        d.mkdir()
        (d / "train.txt").write_text("a\tR1\tb\n")
        with pytest.raises(DataFormatError, match="valid.txt"):
            rel.load_dataset(d, target_relation="R1")

    def test_held_out_entities_stay_rankable(self, tmp_path):
        d = tmp_path / "ds"
        d.mkdir()
        (d / "train.txt").write_text("a\tR1\tb\nb\tR2\tc\na\tT\tc\n")
        (d / "valid.txt").write_text("")
        # test split mentions an entity the training facts never saw
        (d / "test.txt").write_text("a\tT\tzz\n")
        graph, task = rel.load_dataset(d, target_relation="T", chain_length=2)
        assert "zz" in graph.entities
        n = graph.num_entities
        assert all(m.shape == (n, n) for m in graph.adjacency.values())
        metrics = rel.rule_rank_metrics(graph, task, ("R1", "R2"), split="test")
        assert 0 < metrics["MRR"] <= 1.0


class TestHardMeasure:
    def test_single_path(self, tiny_graph):
        graph, task = tiny_graph
        assert rel.hard_measure(graph, ("B1", "B2"), task) == 1

    def test_reversed_rule_misses(self, tiny_graph):
        graph, task = tiny_graph
        assert rel.hard_measure(graph, ("B2", "B1"), task) == 0

    def test_empty_split(self, tiny_graph):
        graph, task = tiny_graph
        task.splits["valid"] = ()
        assert rel.hard_measure(graph, ("B1", "B2"), task, "valid") == 0

    def test_identity_is_noop(self):
        graph, task = rel.generate_planted_kg(
            20, 3, ("R1", "R2"), base_density=0.1, seed=5, include_identity=True
        )
        longer = rel.ChainTask(
            task.target_relation, 3, task.candidate_relations, task.splits
        )
        with_id = rel.hard_measure(graph, ("R1", rel.IDENTITY_RELATION, "R2"), longer)
        without = rel.hard_measure(graph, ("R1", "R2"), task)
        assert with_id == without

    def test_counts_against_dense_composition(self, planted):
        graph, task = planted
        dense = rel.compose_dense(graph, ("R1", "R2"))
        expected = sum(
            1 for x, y in task.pairs("train") if dense[x, y] >= 1.0
        )
        assert rel.hard_measure(graph, ("R1", "R2"), task) == expected


class TestRelaxedObjective:
    def test_single_edge_uniform_mixture(self):
        triples = [("a", "B1", "b"), ("a", "B2", "c"), ("a", "T", "b")]
        graph = rel.build_graph(triples)
        task = rel.ChainTask("T", 1, ("B1", "B2"), {"train": ((0, 1),)})
        s = rel.chain_supernet(task)
        d = tn.init_distribution(s, tn.uniform_ranks(s, 1), tn.InitSpec.zeros())
        value, _ = rel.relaxed_objective(graph, task, d)
        # M = (A_B1 + A_B2) / 2 and only (a, b) is reachable through B1
        assert abs(value - 0.5) < 1e-12

    def test_matches_enumeration_oracle(self, planted):
        graph, task = planted
        s = rel.chain_supernet(task)
        d = tn.init_distribution(s, tn.uniform_ranks(s, 2), tn.InitSpec.gaussian(0.6), seed=2)
        value, _ = rel.relaxed_objective(graph, task, d)
        ref = sum(
            tn.prob(d, idx)
            * rel.path_count_measure(graph, rel.rule_from_index(task, idx), task)
            for idx in tn.enumerate_indices(s)
        )
        assert abs(value - ref) < 1e-9

    def test_gradient_matches_finite_differences(self, planted):
        graph, task = planted
        s = rel.chain_supernet(task)
        d = tn.init_distribution(s, tn.uniform_ranks(s, 2), tn.InitSpec.gaussian(0.6), seed=3)
        _, grads = rel.relaxed_objective(graph, task, d)
        rng = np.random.default_rng(4)
        h = 1e-5
        for _ in range(20):
            t = int(rng.integers(len(d.cores)))
            core = d.cores[t].values
            pos = tuple(int(rng.integers(x)) for x in core.shape)
            orig = core[pos]
            core[pos] = orig + h
            up, _ = rel.relaxed_objective(graph, task, d)
            core[pos] = orig - h
            dn, _ = rel.relaxed_objective(graph, task, d)
            core[pos] = orig
            assert rel_err(grads[t][pos], (up - dn) / (2 * h)) < 1e-5

    def test_clamp_saturates(self, tiny_graph):
        graph, task = tiny_graph
        s = rel.chain_supernet(task)
        d = tn.init_distribution(s, tn.uniform_ranks(s, 1), tn.InitSpec.zeros())
        # push all probability onto the planted rule: the pair score exceeds 1 never
        d.cores[0].values[0, 0, 0] = 30.0
        d.cores[1].values[0, 1, 0] = 30.0
        raw, _ = rel.relaxed_objective(graph, task, d)
        clamped, grads = rel.relaxed_objective(graph, task, d, clamp=True)
        assert clamped <= raw + 1e-12
        assert clamped <= len(task.pairs("train")) + 1e-12

    def test_requires_chain(self, planted):
        graph, task = planted
        ring = tn.make_ring(2, len(task.candidate_relations))
        d = tn.init_distribution(ring, tn.uniform_ranks(ring, 1))
        with pytest.raises(SupernetFormatError):
            rel.relaxed_objective(graph, task, d)

    def test_no_dense_composition_on_large_graph(self):
        graph, task = rel.generate_planted_kg(
            300, 3, ("R1", "R2"), base_density=0.01, noise=0.1, seed=1
        )
        s = rel.chain_supernet(task)
        d = tn.init_distribution(s, tn.uniform_ranks(s, 2), tn.InitSpec.gaussian(0.5), seed=0)
        before = rel.DENSE_COMPOSITIONS
        rel.relaxed_objective(graph, task, d)
        rel.hard_measure(graph, ("R1", "R2"), task)
        rel.rule_rank_metrics(graph, task, ("R1", "R2"))
        rel.score_rows_for_distribution(graph, task, d, np.array([0, 5]))
        assert rel.DENSE_COMPOSITIONS == before
        with pytest.raises(tn.EnumerationCapError):
            rel.compose_dense(graph, ("R1", "R2"))


class TestRankMetrics:
    def test_unique_top_score(self):
        triples = [("a", "B1", "b"), ("a", "T", "b"), ("c", "B1", "a")]
        graph = rel.build_graph(triples)
        task = rel.ChainTask("T", 1, ("B1",), {"test": ((0, 1),)})
        m = rel.rule_rank_metrics(graph, task, ("B1",), split="test")
        assert m["MRR"] == 1.0
        assert m["Hits@1"] == 1.0

    def test_rank_two_gives_half(self):
        # two tails tie above... construct y_true ranked exactly 2nd
        triples = [
            ("a", "B1", "b"),
            ("a", "B1", "c"),
            ("b", "B2", "d"),
            ("b", "B2", "e"),
            ("c", "B2", "d"),
            ("a", "T", "e"),
        ]
        graph = rel.build_graph(triples)
        task = rel.ChainTask("T", 2, ("B1", "B2"), {"test": ((0, graph.entity_id("e")),)})
        m = rel.rule_rank_metrics(graph, task, ("B1", "B2"), split="test")
        # d has two paths, e has one: e ranks second
        assert m["MRR"] == 0.5
        assert m["Hits@1"] == 0.0
        assert m["Hits@3"] == 1.0

    def test_pessimistic_ties(self):
        triples = [("a", "B1", "b"), ("a", "B1", "c"), ("a", "T", "b")]
        graph = rel.build_graph(triples)
        task = rel.ChainTask("T", 1, ("B1",), {"test": ((0, 1),)})
        m = rel.rule_rank_metrics(graph, task, ("B1",), split="test")
        # b and c tie at score 1; the true tail is placed after its equal
        assert m["ranks"] == [2]

    def test_filtered_removes_other_true_tails(self):
        triples = [
            ("a", "B1", "b"),
            ("a", "B1", "c"),
            ("a", "T", "b"),
            ("a", "T", "c"),
        ]
        graph = rel.build_graph(triples)
        task = rel.ChainTask(
            "T", 1, ("B1",), {"train": ((0, 2),), "test": ((0, 1),)}
        )
        filtered = rel.rule_rank_metrics(graph, task, ("B1",), split="test", filtered=True)
        raw = rel.rule_rank_metrics(graph, task, ("B1",), split="test", filtered=False)
        assert filtered["ranks"] == [1]  # c is a known true tail, removed
        assert raw["ranks"] == [2]

    def test_hits_monotone_and_bounds(self, planted):
        graph, task = planted
        m = rel.rule_rank_metrics(graph, task, ("R1", "R2"), k_list=(1, 3, 10, 10**9))
        assert 0 < m["MRR"] <= 1.0
        assert m["Hits@1"] <= m["Hits@3"] <= m["Hits@10"]
        assert m[f"Hits@{10**9}"] == 1.0

    def test_empty_queries(self, tiny_graph):
        graph, task = tiny_graph
        with pytest.raises(DataFormatError, match="empty"):
            rel.rank_metrics(graph, lambda xs: np.zeros((0, 3)), [])


class TestExtractRules:
    def test_concentrated_distribution(self, planted):
        graph, task = planted
        s = rel.chain_supernet(task)
        d = tn.init_distribution(s, tn.uniform_ranks(s, 2), tn.InitSpec.zeros())
        d.cores[0].values[:, 0, :] = 9.0  # push mass to (R1, R2)
        d.cores[1].values[:, 1, :] = 9.0
        rules = rel.extract_top_rules(d, task, 1)
        assert rules[0].relations == ("R1", "R2")
        assert rules[0].score > 0.99

    def test_uniform_lexicographic_ties(self, planted):
        graph, task = planted
        s = rel.chain_supernet(task)
        d = tn.init_distribution(s, tn.uniform_ranks(s, 2), tn.InitSpec.zeros())
        rules = rel.extract_top_rules(d, task, 3)
        assert [r.relations for r in rules] == [
            ("R1", "R1"),
            ("R1", "R2"),
            ("R1", "R3"),
        ]
        assert all(abs(r.score - 1 / 16) < 1e-12 for r in rules)

    def test_k_above_space_returns_all(self, planted):
        graph, task = planted
        s = rel.chain_supernet(task)
        d = tn.init_distribution(s, tn.uniform_ranks(s, 1), tn.InitSpec.zeros())
        rules = rel.extract_top_rules(d, task, 10**6)
        assert len(rules) == 16

    def test_beam_matches_exact_on_rank1(self, planted):
        graph, task = planted
        s = rel.chain_supernet(task)
        d = tn.init_distribution(s, tn.uniform_ranks(s, 1), tn.InitSpec.gaussian(1.0), seed=9)
        exact = rel.extract_top_rules(d, task, 3)
        beam = rel.extract_top_rules(d, task, 3, index_cap=2)
        assert [r.relations for r in beam] == [r.relations for r in exact]

    def test_format_rule(self, planted):
        graph, task = planted
        line = rel.format_rule(task, rel.ChainRule(("R1", "R2"), 0.8125))
        assert line == "target(C,A) <= R1(C,B1), R2(B1,A) [prob=0.8125]"


class TestGeneratePlanted:
    def test_noise_free_rule_reaches_all_train(self):
        graph, task = rel.generate_planted_kg(
            40, 4, ("R1", "R2"), base_density=0.05, noise=0.0, seed=3
        )
        hits = rel.hard_measure(graph, ("R1", "R2"), task, "train")
        assert hits == len(task.pairs("train"))

    def test_planted_is_enumeration_best(self):
        graph, task = rel.generate_planted_kg(
            40, 4, ("R1", "R2"), base_density=0.05, noise=0.0, seed=3
        )
        scores = {}
        for r1 in task.candidate_relations:
            for r2 in task.candidate_relations:
                scores[(r1, r2)] = rel.hard_measure(graph, (r1, r2), task, "train")
        best = max(scores, key=scores.get)
        assert best == ("R1", "R2")
        runner_up = max(v for k, v in scores.items() if k != best)
        assert scores[best] > runner_up

    def test_deterministic(self):
        a = rel.generate_planted_kg(25, 3, ("R2", "R1"), base_density=0.08, noise=0.3, seed=9)
        b = rel.generate_planted_kg(25, 3, ("R2", "R1"), base_density=0.08, noise=0.3, seed=9)
        assert a[0].triples == b[0].triples
        assert a[1].splits == b[1].splits

    def test_empty_target_rejected(self):
        with pytest.raises(DataFormatError, match="empty target"):
            rel.generate_planted_kg(10, 2, ("R1", "R2"), base_density=0.005, seed=0)


class TestChainEvaluator:
    def test_reward_is_reach_fraction(self, planted):
        graph, task = planted
        ev = rel.as_chain_evaluator(graph, task)
        idx = (1, 2)  # (R1, R2)
        expected = rel.hard_measure(graph, ("R1", "R2"), task, "train") / len(
            task.pairs("train")
        )
        assert ev.evaluate(idx) == expected

    def test_final_is_test_mrr(self, planted):
        graph, task = planted
        ev = rel.as_chain_evaluator(graph, task)
        m = rel.rule_rank_metrics(graph, task, ("R1", "R2"), split="test")
        assert ev.final_evaluate((1, 2)) == m["MRR"]
