import logging

import numpy as np
import pytest

from recloss.core import InvalidInputError
from recloss.metrics import metric_at_k_array, ndcg
from recloss.recsys import (
    DataFormatError,
    ModelParams,
    TrainConfig,
    TrainingDiverged,
    evaluate,
    init_params,
    load_interactions,
    load_model,
    loss_and_grads,
    make_block_dataset,
    save_model,
    score,
    split_leave_last,
    train,
)
from recloss.recsys.data import build_dataset, write_interactions_csv
from recloss.recsys.train import build_instances, negative_pools


class TestLoadInteractions:
    def test_minimal(self, tmp_path):
        path = tmp_path / "one.csv"
        path.write_text("user_id,item_id,timestamp\nu,1,3\nu,2,1\nu,3,2\n")
        ds = load_interactions(path)
        assert ds.n_users == 1 and ds.n_items == 3
        assert [ds.item_ids[i] for i in ds.sequences[0]] == ["2", "3", "1"]

    def test_short_user_dropped(self, small_csv, caplog):
        with caplog.at_level(logging.WARNING):
            ds = load_interactions(small_csv)
        assert ds.dropped_users == 1
        assert ds.user_ids == ["a", "b"]
        assert sum("dropped 1 user" in r.getMessage() for r in caplog.records) == 1

    def test_movielens_matches_csv(self, small_csv, tmp_path):
        lines = small_csv.read_text().splitlines()[1:]
        dat = tmp_path / "ratings.dat"
        dat.write_text("".join(f"{u}::{i}::4::{t}\n" for u, i, t in (ln.split(",") for ln in lines)))
        a, b = load_interactions(small_csv), load_interactions(dat, "movielens")
        assert (a.user_ids, a.item_ids, a.events, a.sequences) == (b.user_ids, b.item_ids, b.events, b.sequences)

    def test_chronological_order(self, small_csv):
        ds = load_interactions(small_csv)
        seq_a = [ds.item_ids[i] for i in ds.sequences[0]]
        assert seq_a == ["10", "11", "12", "13"]
        ts = [t for u, _, t in ds.events if u == 1]
        assert ts == sorted(ts)

    @pytest.mark.parametrize(
        "body, line",
        [
            ("user_id,item_id,timestamp\na,1,1\na,2\n", 3),
            ("user_id,item_id,timestamp\na,1,1\na,2,xx\n", 3),
            ("user_id,item_id,timestamp\n,1,1\n", 2),
            ("uid,iid,ts\na,1,1\n", 1),
        ],
    )
    def test_malformed_csv(self, tmp_path, body, line):
        path = tmp_path / "bad.csv"
        path.write_text(body)
        with pytest.raises(DataFormatError, match=f"line {line}"):
            load_interactions(path)

    def test_malformed_movielens(self, tmp_path):
        path = tmp_path / "bad.dat"
        path.write_text("1::2::3::4\n1::2::3\n")
        with pytest.raises(DataFormatError, match="line 2"):
            load_interactions(path, "movielens")

    def test_empty(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("user_id,item_id,timestamp\n")
        with pytest.raises(InvalidInputError):
            load_interactions(path)

    def test_everyone_filtered(self, tmp_path):
        path = tmp_path / "short.csv"
        path.write_text("user_id,item_id,timestamp\na,1,1\na,2,2\n")
        with pytest.raises(InvalidInputError):
            load_interactions(path)

    def test_unknown_format(self, small_csv):
        with pytest.raises(InvalidInputError):
            load_interactions(small_csv, "parquet")

    def test_write_roundtrip(self, small_csv, tmp_path):
        ds = load_interactions(small_csv)
        out = tmp_path / "copy.csv"
        write_interactions_csv(ds, out)
        again = load_interactions(out)
        assert again.sequences == ds.sequences and again.user_ids == ds.user_ids


class TestSplit:
    def test_minimal(self):
        sp = split_leave_last(build_dataset([("u", "a", 1), ("u", "b", 2), ("u", "c", 3)]))
        assert sp.train == [[0]] and sp.valid.tolist() == [1] and sp.test.tolist() == [2]

    def test_five(self):
        rows = [("u", x, t) for t, x in enumerate("abcde")]
        sp = split_leave_last(build_dataset(rows))
        assert sp.train == [[0, 1, 2]] and sp.valid[0] == 3 and sp.test[0] == 4

    def test_short_sequence_names_user(self):
        ds = build_dataset([("u", "a", 1), ("u", "b", 2), ("u", "c", 3)])
        ds.sequences[0] = ds.sequences[0][:2]
        with pytest.raises(InvalidInputError, match="'u'"):
            split_leave_last(ds)


class TestScore:
    def params(self):
        items = np.array([[1.0, 0.0], [0.0, 1.0], [0.6, 0.8]])
        users = np.array([[0.0, 1.0], [0.6, 0.8]])
        return ModelParams(items, users)

    def test_orthogonal(self):
        assert score(self.params(), "factor", 0, [], 0) == 0.0

    def test_unit_equal(self):
        assert score(self.params(), "factor", 1, [], 2) == pytest.approx(1.0, rel=1e-15)

    def test_history_of_one(self):
        p = self.params()
        assert score(p, "history-mean", 0, [2], 1) == p.item_embeddings[2] @ p.item_embeddings[1]

    def test_empty_history(self):
        with pytest.raises(InvalidInputError):
            score(self.params(), "history-mean", 0, [], 1)

    def test_out_of_range(self):
        with pytest.raises(InvalidInputError):
            score(self.params(), "factor", 0, [], 7)


class TestModelIO:
    def test_roundtrip(self, tmp_path):
        p = init_params(4, 6, 3, seed=5)
        save_model(p, "history-mean", tmp_path / "m.txt")
        q, kind = load_model(tmp_path / "m.txt")
        np.testing.assert_array_equal(p.item_embeddings, q.item_embeddings)
        np.testing.assert_array_equal(p.user_embeddings, q.user_embeddings)
        assert kind.value == "history-mean"

    def test_bad_header(self, tmp_path):
        (tmp_path / "m.txt").write_text("hello\n1 2\n")
        with pytest.raises(InvalidInputError):
            load_model(tmp_path / "m.txt")


def tiny_split():
    """3 users, 5 items."""
    rows = [
        ("0", "0", 1), ("0", "1", 2), ("0", "2", 3), ("0", "3", 4),
        ("1", "1", 1), ("1", "3", 2), ("1", "4", 3),
        ("2", "4", 1), ("2", "0", 2), ("2", "2", 3),
    ]
    return split_leave_last(build_dataset(rows))


class TestGradientThroughScorer:
    @pytest.mark.parametrize("scorer", ["factor", "history-mean"])
    @pytest.mark.parametrize("loss", ["bce", "bpr", "cce"])
    def test_finite_differences(self, scorer, loss):
        split = tiny_split()
        inst = build_instances(split, scorer)
        params = init_params(split.n_users, split.n_items, 4, seed=3, scale=0.5)
        rng = np.random.default_rng(0)
        pools = negative_pools(split)
        k = min(p.size for p in pools)
        negs = np.stack([rng.choice(pools[u], k, replace=False) for u in inst.users])

        def f(p):
            return loss_and_grads(p, scorer, inst.users, inst.histories, inst.positives, negs, loss)[0]

        _, g_items, g_users = loss_and_grads(params, scorer, inst.users, inst.histories, inst.positives, negs, loss)
        h = 1e-5
        for table, grad in ((params.item_embeddings, g_items), (params.user_embeddings, g_users)):
            for idx in np.ndindex(table.shape):
                old = table[idx]
                table[idx] = old + h
                up = f(params)
                table[idx] = old - h
                down = f(params)
                table[idx] = old
                fd = (up - down) / (2 * h)
                if grad[idx] == 0.0 and fd == 0.0:
                    continue
                assert abs(grad[idx] - fd) <= 1e-5 * max(abs(grad[idx]), abs(fd))
        if scorer == "history-mean":
            assert not g_users.any()


class TestEvaluate:
    def test_perfect_model(self):
        split = tiny_split()
        items = np.eye(5)
        users = np.zeros((3, 5))
        users[np.arange(3), split.test] = 1.0
        r = evaluate(ModelParams(items, users), "factor", split, k=10)
        assert r.ndcg == 1.0 and r.mrr == 1.0

    def test_constant_scores(self):
        split = tiny_split()
        r = evaluate(ModelParams(np.ones((5, 2)), np.ones((3, 2))), "factor", split, k=10)
        n_neg = np.array([5 - len(s) for s in split.interacted])
        np.testing.assert_array_equal(r.ranks, n_neg + 1)

    def test_no_truncation_when_k_large(self):
        split = tiny_split()
        p = init_params(3, 5, 4, seed=1)
        r = evaluate(p, "factor", split, k=100)
        assert r.ndcg == pytest.approx(np.mean([ndcg(int(x)) for x in r.ranks]), rel=1e-15)

    def test_random_model_near_random_baseline(self, block_split):
        # Baseline by Monte Carlo: the target's position in a random permutation.
        rng = np.random.default_rng(1)
        n_cand = np.array([block_split.n_items - len(s) + 1 for s in block_split.interacted])
        sims = np.concatenate([rng.integers(1, n_cand + 1) for _ in range(2000)])
        baseline = metric_at_k_array(sims, 10, "ndcg").mean()
        got = np.mean([evaluate(init_params(200, 200, 64, seed=s), "factor", block_split, 10).ndcg for s in range(10)])
        assert abs(got - baseline) < 0.01

    def test_bad_target(self):
        with pytest.raises(InvalidInputError):
            evaluate(init_params(3, 5, 2), "factor", tiny_split(), 10, "train")


class TestTrain:
    def test_zero_lr_leaves_params(self):
        split = tiny_split()
        cfg = TrainConfig(lr=0.0, epochs=1, dim=4, optimizer="sgd", negatives=1)
        res = train(split, cfg)
        init = init_params(3, 5, 4, cfg.seed, cfg.init_scale)
        np.testing.assert_array_equal(res.params.item_embeddings, init.item_embeddings)
        by = {(r["epoch"], r["split"], r["metric"]): r["value"] for r in res.trace}
        for s in ("valid", "test"):
            for m in ("ndcg", "mrr"):
                assert by[(0, s, m)] == by[(1, s, m)]

    @pytest.mark.parametrize("scorer", ["factor", "history-mean"])
    def test_bpr_cce_identical_at_k1(self, block_split, scorer):
        a = train(block_split, TrainConfig(loss="bpr", negatives=1, epochs=3, dim=16, scorer=scorer, seed=4))
        b = train(block_split, TrainConfig(loss="cce", negatives=1, epochs=3, dim=16, scorer=scorer, seed=4))
        assert a.trace == b.trace
        np.testing.assert_array_equal(a.params.item_embeddings, b.params.item_embeddings)

    def test_deterministic(self, block_split):
        cfg = TrainConfig(loss="bce", negatives=5, epochs=2, dim=8, seed=7)
        assert train(block_split, cfg).trace == train(block_split, cfg).trace

    def test_improves_on_block_data(self, block_split):
        res = train(block_split, TrainConfig(loss="bpr", negatives=5, epochs=10, scorer="history-mean", lr=0.01))
        valid = [r["value"] for r in res.trace if r["split"] == "valid" and r["metric"] == "ndcg"]
        assert max(valid[1:]) > valid[0]
        assert res.best_epoch >= 1

    def test_trace_layout(self):
        res = train(tiny_split(), TrainConfig(epochs=2, dim=2, negatives=1))
        assert len(res.trace) == 4 + 2 * 5
        assert [r["split"] for r in res.trace if r["epoch"] == 0] == ["valid", "valid", "test", "test"]
        assert [r["split"] for r in res.trace if r["epoch"] == 1] == ["valid", "valid", "test", "test", "train"]
        assert all(set(r) == {"epoch", "split", "metric", "cutoff", "value"} for r in res.trace)

    def test_on_epoch_callback(self):
        seen = []
        train(tiny_split(), TrainConfig(epochs=2, dim=2), on_epoch=lambda e, rows: seen.append(e))
        assert seen == [0, 1, 2]

    def test_too_many_negatives(self):
        with pytest.raises(InvalidInputError):
            train(tiny_split(), TrainConfig(negatives=3, epochs=1, dim=2))

    def test_divergence(self, block_split):
        cfg = TrainConfig(loss="bce", negatives=5, epochs=3, dim=8, optimizer="sgd", lr=1e300)
        with pytest.raises(TrainingDiverged, match="epoch 1"):
            train(block_split, cfg)

    @pytest.mark.parametrize(
        "kwargs", [{"negatives": 0}, {"dim": 0}, {"optimizer": "rmsprop"}, {"loss": "hinge"}, {"beta1": 1.0}]
    )
    def test_bad_config(self, kwargs):
        with pytest.raises(InvalidInputError):
            TrainConfig(**kwargs)


class TestBlockDataset:
    def test_shape(self):
        ds = make_block_dataset(n_users=20, n_items=40, n_blocks=4, seq_len=6, seed=1)
        assert ds.n_users == 20 and all(len(s) == 6 for s in ds.sequences)
        assert all(len(set(s)) == 6 for s in ds.sequences)

    def test_invalid(self):
        with pytest.raises(InvalidInputError):
            make_block_dataset(n_items=205)
