import json

import numpy as np
import pytest

from igrank import cli, net, pipeline, serialize
from igrank.decoyforge import write_fixture_set
from igrank.errors import DataError, UnscorableSampleError
from igrank.manifest import read_manifest
from igrank.subgraph import SamplerConfig

from conftest import random_graph


class TestSerialize:
    def test_round_trip(self, tmp_path, rng):
        arrays = {
            "a": rng.normal(size=(3, 4)).astype("<f4"),
            "b": rng.integers(0, 9, size=7).astype("<i8"),
            "c": np.array(1.5, dtype="<f8"),
            "d": np.array([True, False]),
        }
        path = tmp_path / "x.blob"
        serialize.write_blob(path, "fmt-v1", {"note": "hi"}, arrays)
        meta, loaded = serialize.read_blob(path, expected_format="fmt-v1")
        assert meta == {"note": "hi"}
        for name, arr in arrays.items():
            expected = arr.astype("|u1") if arr.dtype == bool else arr
            assert np.array_equal(loaded[name], expected)
            assert loaded[name].shape == arr.shape

    def test_format_mismatch(self, tmp_path):
        path = tmp_path / "x.blob"
        serialize.write_blob(path, "fmt-v1", {}, {})
        with pytest.raises(DataError, match="expected format"):
            serialize.read_blob(path, expected_format="other")

    def test_garbage_header(self, tmp_path):
        path = tmp_path / "x.blob"
        path.write_bytes(b"\x00\x01\x02\nrest")
        with pytest.raises(DataError, match="header"):
            serialize.read_blob(path)


class TestGraphCache:
    def test_round_trip(self, tmp_path, rng):
        g = random_graph(rng, 9)
        g.node_labels = [("H", i + 1) for i in range(9)]
        path = tmp_path / "g.graph"
        pipeline.save_graph(path, g)
        loaded = pipeline.load_graph(path)
        assert np.array_equal(loaded.coords, g.coords)
        assert np.array_equal(loaded.node_feats, g.node_feats)
        assert np.array_equal(loaded.edges, g.edges)
        assert np.array_equal(loaded.edge_kinds, g.edge_kinds)
        assert np.array_equal(loaded.edge_feats, g.edge_feats)
        assert np.array_equal(loaded.node_role, g.node_role)
        assert np.array_equal(loaded.cdr_mask, g.cdr_mask)
        assert loaded.node_labels == g.node_labels


class TestPreparation:
    def test_full_record_path(self, tmp_path):
        records = write_fixture_set(tmp_path, n_ig=5, n_ag=4, n_near=2, n_far=0, seed=2,
                                    with_embeddings=True)
        graph = pipeline.prepare_record(records[0], base_dir=tmp_path,
                                        sampler_cfg=SamplerConfig())
        assert graph.node_count <= 9
        assert graph.has_interface
        assert graph.cdr_mask.any()

    def test_unknown_embedding_chain_rejected(self, tmp_path):
        from dataclasses import replace
        records = write_fixture_set(tmp_path, n_ig=3, n_ag=3, n_near=1, n_far=0, seed=6,
                                    with_embeddings=True)
        bad = replace(records[0], embedding_paths={"Z": "embeddings/H.bin"})
        with pytest.raises(DataError, match="unknown chains"):
            pipeline.build_record_graph(bad, base_dir=tmp_path)

    def test_nondocking_rejected_then_allowed(self):
        from igrank.decoyforge import Perturbation, identity_perturbation, micro_complex, rigid_transform
        from igrank.featurize import build_graph, fallback_features
        c = micro_complex(4, 4, seed=4)
        detached = rigid_transform(c, Perturbation(
            rotation=identity_perturbation().rotation, translation=(50.0, 0.0, 0.0)))
        with pytest.warns(UserWarning, match="zero inter edges"):
            graph = build_graph(detached, fallback_features(detached))
        with pytest.raises(UnscorableSampleError):
            pipeline.prepare_graph(graph, None, allow_nondocking=False)
        sub = pipeline.prepare_graph(graph, SamplerConfig(seed_mode="cdr"),
                                     allow_nondocking=True)
        assert sub.node_count >= 1
        assert not sub.has_interface


def run_cli(args):
    return cli.main([str(a) for a in args])


@pytest.fixture(scope="module")
def pipeline_dir(tmp_path_factory):
    """forge -> featurize -> train-clf -> train-reg over a tiny fixture set."""
    root = tmp_path_factory.mktemp("cli")
    assert run_cli(["forge", "--out", root / "data", "--n-ig", 6, "--n-ag", 5,
                    "--n-near", 6, "--n-far", 6, "--seed", 5]) == 0
    manifest = root / "data" / "manifest.jsonl"
    assert run_cli(["featurize", "--manifest", manifest, "--out", root / "graphs"]) == 0
    common = ["--manifest", manifest, "--graph-dir", root / "graphs",
              "--seed-mode", "cdr", "--allow-nondocking",
              "--hidden-dim", 12, "--layers", 2, "--max-epochs", 2, "--seed", 3]
    assert run_cli(["train-clf", "--out", root / "clf"] + common) == 0
    assert run_cli(["train-reg", "--out", root / "reg", "--from-checkpoint",
                    root / "clf" / "model.ckpt"] + common) == 0
    return root


class TestCli:
    def test_forge_outputs(self, pipeline_dir):
        data = pipeline_dir / "data"
        records = read_manifest(data / "manifest.jsonl")
        assert len(records) == 12
        assert (data / "run_config.json").exists()

    def test_featurize_cache(self, pipeline_dir):
        graphs = list((pipeline_dir / "graphs").glob("*.graph"))
        assert len(graphs) == 12
        g = pipeline.load_graph(graphs[0])
        assert g.node_count == 11

    def test_sample_subcommand(self, pipeline_dir, tmp_path):
        manifest = pipeline_dir / "data" / "manifest.jsonl"
        code = run_cli(["sample", "--manifest", manifest, "--graph-dir",
                        pipeline_dir / "graphs", "--out", tmp_path / "sub",
                        "--seed-mode", "cdr", "--allow-nondocking", "--k", 1])
        assert code == 0
        subs = list((tmp_path / "sub").glob("*.graph"))
        assert len(subs) == 12

    def test_train_outputs(self, pipeline_dir):
        history = json.loads((pipeline_dir / "clf" / "history.json").read_text())
        assert isinstance(history, list) and len(history) == 2
        assert {"epoch", "lr", "train_f1", "val_f1"} <= set(history[0])
        summary = json.loads((pipeline_dir / "clf" / "training_summary.json").read_text())
        assert summary["mode"] == "classifier"
        params, cfg, seed = net.load_checkpoint(pipeline_dir / "clf" / "model.ckpt")
        assert cfg.head_mode == "classifier"
        assert cfg.hidden_dim == 12

    def test_train_reg_transfer(self, pipeline_dir):
        summary = json.loads((pipeline_dir / "reg" / "training_summary.json").read_text())
        assert summary["mode"] == "regressor-finetune"
        _, cfg, _ = net.load_checkpoint(pipeline_dir / "reg" / "model.ckpt")
        assert cfg.head_mode == "regressor"

    def test_config_file_layering(self, pipeline_dir, tmp_path):
        # config file overrides defaults; explicit flags override the file
        manifest = pipeline_dir / "data" / "manifest.jsonl"
        config = tmp_path / "cfg.json"
        config.write_text(json.dumps({
            "model": {"hidden_dim": 10, "layers": 1},
            "train": {"max_epochs": 3, "batch_size": 4},
            "sampler": {"seed_mode": "cdr"},
            "loss_weights": {"alpha": 0.0},
        }))
        out = tmp_path / "t"
        assert run_cli(["train-clf", "--manifest", manifest, "--config", config,
                        "--graph-dir", pipeline_dir / "graphs", "--allow-nondocking",
                        "--hidden-dim", 14, "--out", out, "--seed", 2]) == 0
        _, cfg, _ = net.load_checkpoint(out / "model.ckpt")
        assert cfg.hidden_dim == 14   # flag wins over file
        assert cfg.layers == 1        # file wins over default
        snapshot = json.loads((out / "run_config.json").read_text())
        assert snapshot["resolved"]["train"]["max_epochs"] == 3
        assert snapshot["resolved"]["train"]["batch_size"] == 4
        assert snapshot["resolved"]["sampler"]["seed_mode"] == "cdr"
        assert snapshot["resolved"]["loss_weights"]["alpha"] == 0.0

    def test_unknown_config_key_rejected(self, pipeline_dir, tmp_path):
        config = tmp_path / "bad.json"
        config.write_text(json.dumps({"train": {"bogus_key": 1}}))
        code = run_cli(["train-clf", "--manifest", pipeline_dir / "data" / "manifest.jsonl",
                        "--config", config, "--out", tmp_path / "x"])
        assert code == cli.EXIT_CONFIG

    def test_featurize_single_structure_mode(self, pipeline_dir, tmp_path):
        data = pipeline_dir / "data"
        records = read_manifest(data / "manifest.jsonl")
        record = records[0]
        out = tmp_path / "single"
        assert run_cli(["featurize", "--structure", data / record.structure_path,
                        "--roles", "H=heavy,A=antigen",
                        "--cdr", data / record.cdr_annotation_path,
                        "--id", "solo", "--out", out]) == 0
        graph = pipeline.load_graph(out / "solo.graph")
        reference = pipeline.build_record_graph(record, base_dir=data)
        assert np.array_equal(graph.edges, reference.edges)
        assert np.array_equal(graph.cdr_mask, reference.cdr_mask)

    def test_predict_pooling_override(self, pipeline_dir, tmp_path):
        manifest = pipeline_dir / "data" / "manifest.jsonl"
        args = ["predict", "--manifest", manifest,
                "--checkpoint", pipeline_dir / "clf" / "model.ckpt",
                "--graph-dir", pipeline_dir / "graphs",
                "--seed-mode", "cdr", "--allow-nondocking"]
        assert run_cli(args + ["--out", tmp_path / "all"]) == 0
        assert run_cli(args + ["--pooling", "cdr_only", "--out", tmp_path / "cdr"]) == 0
        rows_all = [json.loads(l) for l in (tmp_path / "all" / "predictions.jsonl").read_text().splitlines()]
        rows_cdr = [json.loads(l) for l in (tmp_path / "cdr" / "predictions.jsonl").read_text().splitlines()]
        assert any(a["class_prob"] != b["class_prob"] for a, b in zip(rows_all, rows_cdr))

    def test_predict_single_checkpoint_identity(self, pipeline_dir, tmp_path):
        manifest = pipeline_dir / "data" / "manifest.jsonl"
        code = run_cli(["predict", "--manifest", manifest,
                        "--checkpoint", pipeline_dir / "clf" / "model.ckpt",
                        "--ensemble-weights", "1.0",
                        "--graph-dir", pipeline_dir / "graphs",
                        "--seed-mode", "cdr", "--allow-nondocking",
                        "--out", tmp_path / "pred"])
        assert code == 0
        rows = [json.loads(l) for l in (tmp_path / "pred" / "predictions.jsonl").read_text().splitlines()]
        assert len(rows) == 12
        # identity ensemble equals the bare forward output
        params, cfg, _ = net.load_checkpoint(pipeline_dir / "clf" / "model.ckpt")
        records = {r.id: r for r in read_manifest(manifest)}
        for row in rows[:3]:
            graph = pipeline.prepare_record(
                records[row["id"]], sampler_cfg=SamplerConfig(seed_mode="cdr"),
                allow_nondocking=True, base_dir=pipeline_dir / "data")
            bare = float(net.forward(graph, params, cfg).class_probs[1])
            assert row["class_prob"] == pytest.approx(bare, abs=1e-12)

    def test_predict_two_checkpoint_ensemble(self, pipeline_dir, tmp_path):
        manifest = pipeline_dir / "data" / "manifest.jsonl"
        # same checkpoint twice with 0.7/0.3: must equal the single-model score
        base_args = ["predict", "--manifest", manifest,
                     "--graph-dir", pipeline_dir / "graphs",
                     "--seed-mode", "cdr", "--allow-nondocking"]
        ckpt = pipeline_dir / "clf" / "model.ckpt"
        assert run_cli(base_args + ["--checkpoint", ckpt, "--out", tmp_path / "a"]) == 0
        assert run_cli(base_args + ["--checkpoint", ckpt, "--checkpoint", ckpt,
                                    "--ensemble-weights", "0.7,0.3",
                                    "--out", tmp_path / "b"]) == 0
        rows_a = [json.loads(l) for l in (tmp_path / "a" / "predictions.jsonl").read_text().splitlines()]
        rows_b = [json.loads(l) for l in (tmp_path / "b" / "predictions.jsonl").read_text().splitlines()]
        for ra, rb in zip(rows_a, rows_b):
            assert rb["class_prob"] == pytest.approx(
                0.7 * ra["class_prob"] + 0.3 * ra["class_prob"], abs=1e-12)

    def test_mixed_head_modes_rejected(self, pipeline_dir, tmp_path):
        manifest = pipeline_dir / "data" / "manifest.jsonl"
        code = run_cli(["predict", "--manifest", manifest,
                        "--checkpoint", pipeline_dir / "clf" / "model.ckpt",
                        "--checkpoint", pipeline_dir / "reg" / "model.ckpt",
                        "--out", tmp_path / "x"])
        assert code == cli.EXIT_CONFIG

    def test_threshold_and_eval(self, pipeline_dir, tmp_path):
        manifest = pipeline_dir / "data" / "manifest.jsonl"
        pred_dir = tmp_path / "pred"
        assert run_cli(["predict", "--manifest", manifest,
                        "--checkpoint", pipeline_dir / "clf" / "model.ckpt",
                        "--graph-dir", pipeline_dir / "graphs",
                        "--seed-mode", "cdr", "--allow-nondocking",
                        "--out", pred_dir]) == 0
        reg_dir = tmp_path / "rpred"
        assert run_cli(["predict", "--manifest", manifest,
                        "--checkpoint", pipeline_dir / "reg" / "model.ckpt",
                        "--graph-dir", pipeline_dir / "graphs",
                        "--seed-mode", "cdr", "--allow-nondocking",
                        "--out", reg_dir]) == 0
        assert run_cli(["threshold", "--predictions", pred_dir / "predictions.jsonl",
                        "--out", tmp_path / "thr"]) == 0
        thr = json.loads((tmp_path / "thr" / "threshold.json").read_text())
        assert thr["beta"] == 0.25
        assert 0 <= thr["threshold"] <= 1
        assert run_cli(["eval", "--predictions", pred_dir / "predictions.jsonl",
                        "--rank-predictions", reg_dir / "predictions.jsonl",
                        "--ks", "2,5", "--out", tmp_path / "rep"]) == 0
        report = json.loads((tmp_path / "rep" / "report.json").read_text())
        assert set(report["precision_at_k"]) == {"2", "5"}
        assert report["sample_count"] == 12

    def test_split_subcommand(self, tmp_path):
        root = tmp_path / "sp"
        assert run_cli(["forge", "--out", root, "--n-near", 4, "--n-far", 4,
                        "--seed", 2]) == 0
        with pytest.warns(UserWarning):
            code = run_cli(["split", "--manifest", root / "manifest.jsonl",
                            "--out", root / "tagged.jsonl", "--seed", 1])
        assert code == 0
        tagged = read_manifest(root / "tagged.jsonl")
        assert len({r.split for r in tagged}) == 1  # single cluster: degenerate

    def test_missing_manifest_is_data_error(self, tmp_path):
        code = run_cli(["featurize", "--manifest", tmp_path / "nope.jsonl",
                        "--out", tmp_path / "o"])
        assert code == cli.EXIT_DATA

    def test_unknown_flag_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            run_cli(["forge", "--bogus"])
        assert exc.value.code == 2

    def test_jobs_fanout_matches_serial(self, pipeline_dir, tmp_path):
        manifest = pipeline_dir / "data" / "manifest.jsonl"
        args = ["predict", "--manifest", manifest,
                "--checkpoint", pipeline_dir / "clf" / "model.ckpt",
                "--graph-dir", pipeline_dir / "graphs",
                "--seed-mode", "cdr", "--allow-nondocking"]
        assert run_cli(args + ["--out", tmp_path / "s"]) == 0
        assert run_cli(args + ["--jobs", 4, "--out", tmp_path / "p"]) == 0
        assert ((tmp_path / "s" / "predictions.jsonl").read_bytes()
                == (tmp_path / "p" / "predictions.jsonl").read_bytes())

    def test_default_run_config_snapshot(self):
        snapshot = cli.default_run_config()
        assert snapshot["featurizer"]["tau_intra"] == 3.5
        assert snapshot["model"]["layers"] == 4
        assert snapshot["train"]["max_epochs"] == 50

    def test_eval_fixed_threshold(self, pipeline_dir, tmp_path):
        manifest = pipeline_dir / "data" / "manifest.jsonl"
        pred = tmp_path / "p"
        assert run_cli(["predict", "--manifest", manifest,
                        "--checkpoint", pipeline_dir / "clf" / "model.ckpt",
                        "--graph-dir", pipeline_dir / "graphs",
                        "--seed-mode", "cdr", "--allow-nondocking", "--out", pred]) == 0
        assert run_cli(["eval", "--predictions", pred / "predictions.jsonl",
                        "--threshold", "0.5", "--out", tmp_path / "r"]) == 0
        report = json.loads((tmp_path / "r" / "report.json").read_text())
        assert report["threshold"] == 0.5

    def test_missing_graph_cache_is_data_error(self, pipeline_dir, tmp_path):
        code = run_cli(["train-clf", "--manifest", pipeline_dir / "data" / "manifest.jsonl",
                        "--graph-dir", tmp_path / "empty", "--out", tmp_path / "o"])
        assert code == cli.EXIT_DATA

    def test_embedding_backed_pipeline(self, tmp_path):
        root = tmp_path / "emb"
        assert run_cli(["forge", "--out", root / "data", "--n-ig", 5, "--n-ag", 4,
                        "--n-near", 4, "--n-far", 4, "--seed", 9, "--embeddings"]) == 0
        records = read_manifest(root / "data" / "manifest.jsonl")
        assert all(r.embedding_paths for r in records)
        assert run_cli(["featurize", "--manifest", root / "data" / "manifest.jsonl",
                        "--out", root / "graphs"]) == 0
        assert run_cli(["train-clf", "--manifest", root / "data" / "manifest.jsonl",
                        "--graph-dir", root / "graphs", "--seed-mode", "cdr",
                        "--allow-nondocking", "--hidden-dim", 8, "--layers", 1,
                        "--max-epochs", 1, "--out", root / "clf"]) == 0
        # embedding rows really reached the graph (fallback rows are 0/1 only)
        g = pipeline.load_graph(next((root / "graphs").glob("*.graph")))
        assert not np.isin(g.node_feats, (0.0, 1.0)).all()

    def test_presampled_cache_with_no_subgraph(self, pipeline_dir, tmp_path):
        manifest = pipeline_dir / "data" / "manifest.jsonl"
        sub = tmp_path / "sub"
        assert run_cli(["sample", "--manifest", manifest, "--graph-dir",
                        pipeline_dir / "graphs", "--out", sub,
                        "--seed-mode", "cdr", "--allow-nondocking"]) == 0
        assert run_cli(["train-clf", "--manifest", manifest, "--graph-dir", sub,
                        "--no-subgraph", "--allow-nondocking", "--hidden-dim", 8,
                        "--layers", 1, "--max-epochs", 1, "--out", tmp_path / "o"]) == 0

    def test_subcommands_do_not_mutate_inputs(self, pipeline_dir, tmp_path):
        manifest = pipeline_dir / "data" / "manifest.jsonl"
        graph = next((pipeline_dir / "graphs").glob("*.graph"))
        before = (manifest.read_bytes(), graph.read_bytes())
        assert run_cli(["predict", "--manifest", manifest,
                        "--checkpoint", pipeline_dir / "clf" / "model.ckpt",
                        "--graph-dir", pipeline_dir / "graphs",
                        "--seed-mode", "cdr", "--allow-nondocking",
                        "--out", tmp_path / "x"]) == 0
        assert (manifest.read_bytes(), graph.read_bytes()) == before
