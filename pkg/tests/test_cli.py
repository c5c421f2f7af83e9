import json

import numpy as np
import pytest

import hybridann as ha
from hybridann.cli import main


@pytest.fixture(scope="module")
def cli_workspace(tmp_path_factory):
    """One shared gen-data -> gt -> build pipeline for the CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    ds = root / "ds"
    rc = main(
        [
            "gen-data",
            "--n", "400", "--m", "8", "--l", "3", "--pool", "3",
            "--q", "5", "--min-matches", "3", "--seed", "1",
            "--out-dir", str(ds),
        ]
    )
    assert rc == 0
    rc = main(["gt", "--data-dir", str(ds), "--k", "20", "--out", str(ds / "gt.ivecs")])
    assert rc == 0
    idx = root / "index.bin"
    rc = main(
        ["build", "--data-dir", str(ds), "--out", str(idx), "--gamma", "16", "--seed", "1"]
    )
    assert rc == 0
    return root, ds, idx


def test_gen_data_artifacts_and_manifest(cli_workspace):
    root, ds, idx = cli_workspace
    for name in ("base.fvecs", "base_attrs.txt", "queries.fvecs", "query_attrs.txt", "query_masks.txt"):
        assert (ds / name).exists()
    records = [json.loads(line) for line in (ds / "manifest.jsonl").read_text().splitlines()]
    commands = [r["command"] for r in records]
    assert commands[0] == "gen-data"
    assert "gt" in commands  # manifest is append-only across runs
    gen = records[0]
    assert gen["theta"] == 27
    assert len(gen["artifacts"]) == 5
    assert all(len(digest) == 64 for digest in gen["artifacts"].values())


def test_build_manifest_records_provenance(cli_workspace):
    root, ds, idx = cli_workspace
    records = [json.loads(line) for line in (idx.parent / "manifest.jsonl").read_text().splitlines()]
    build = [r for r in records if r["command"] == "build"][-1]
    prov = build["alpha_provenance"]
    assert prov["override"] is False
    assert prov["alpha"] > 0
    assert prov["sample_size"] > 0
    assert build["build_log"]["psi"] >= 0.8
    assert build["build_seconds"] > 0


def test_search_and_bench_commands(cli_workspace, tmp_path):
    root, ds, idx = cli_workspace
    res = tmp_path / "res.tsv"
    rc = main(
        [
            "search", "--index", str(idx),
            "--queries", str(ds / "queries.fvecs"),
            "--query-attrs", str(ds / "query_attrs.txt"),
            "--masks", str(ds / "query_masks.txt"),
            "--k", "10", "--out", str(res),
            "--out-ivecs", str(tmp_path / "res.ivecs"),
        ]
    )
    assert rc == 0
    lines = res.read_text().splitlines()
    assert len(lines) == 5 * 10
    ivecs = ha.read_groundtruth_file(tmp_path / "res.ivecs")
    assert len(ivecs) == 5 and all(len(r) == 10 for r in ivecs)

    sweep = tmp_path / "sweep.csv"
    rc = main(
        [
            "bench", "--index", str(idx),
            "--queries", str(ds / "queries.fvecs"),
            "--query-attrs", str(ds / "query_attrs.txt"),
            "--masks", str(ds / "query_masks.txt"),
            "--gt", str(ds / "gt.ivecs"),
            "--k-values", "10,50", "--out", str(sweep),
        ]
    )
    assert rc == 0
    header = sweep.read_text().splitlines()[0]
    assert header == "k,pioneer,mean_recall_at_10,qps,mean_dist_evals,n_queries"


def test_config_file_defaults_and_flag_override(cli_workspace, tmp_path):
    root, ds, idx = cli_workspace
    cfg = tmp_path / "run.cfg"
    cfg.write_text("k = 7  # pool size\nout = {}\n".format(tmp_path / "cfg_res.tsv"))
    rc = main(
        [
            "search", "--config", str(cfg),
            "--index", str(idx),
            "--queries", str(ds / "queries.fvecs"),
            "--query-attrs", str(ds / "query_attrs.txt"),
        ]
    )
    assert rc == 0
    assert len((tmp_path / "cfg_res.tsv").read_text().splitlines()) == 5 * 7
    # explicit flag wins over the config file
    rc = main(
        [
            "search", "--config", str(cfg),
            "--index", str(idx),
            "--queries", str(ds / "queries.fvecs"),
            "--query-attrs", str(ds / "query_attrs.txt"),
            "--k", "3", "--out", str(tmp_path / "flag_res.tsv"),
        ]
    )
    assert rc == 0
    assert len((tmp_path / "flag_res.tsv").read_text().splitlines()) == 5 * 3


def test_exit_code_2_on_argument_error(cli_workspace, tmp_path):
    root, ds, idx = cli_workspace
    rc = main(
        [
            "search", "--index", str(idx),
            "--queries", str(ds / "queries.fvecs"),
            "--query-attrs", str(ds / "query_attrs.txt"),
            "--k", "100000", "--out", str(tmp_path / "x.tsv"),
        ]
    )
    assert rc == 2


def test_exit_code_2_on_unknown_config_key(cli_workspace, tmp_path):
    root, ds, idx = cli_workspace
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("bogus_key = 1\n")
    rc = main(
        [
            "search", "--config", str(cfg),
            "--index", str(idx),
            "--queries", str(ds / "queries.fvecs"),
            "--query-attrs", str(ds / "query_attrs.txt"),
            "--out", str(tmp_path / "x.tsv"),
        ]
    )
    assert rc == 2


def test_exit_code_3_on_format_error(tmp_path):
    bad = tmp_path / "bad.idx"
    bad.write_bytes(b"NOPE" + b"\x00" * 64)
    q = tmp_path / "q.fvecs"
    ha.write_vecs_file(q, np.ones((1, 2), dtype=np.float32), "float32")
    qa = tmp_path / "qa.txt"
    qa.write_text("#schema v1 L=1\nv1\n")
    rc = main(
        [
            "search", "--index", str(bad), "--queries", str(q),
            "--query-attrs", str(qa), "--out", str(tmp_path / "x.tsv"),
        ]
    )
    assert rc == 3


def test_exit_code_4_on_constraint_error(tmp_path):
    # min_matches larger than the dataset can support
    rc = main(
        [
            "gen-data", "--n", "30", "--m", "4", "--l", "3", "--pool", "3",
            "--q", "1", "--min-matches", "31", "--out-dir", str(tmp_path / "ds"),
        ]
    )
    assert rc == 4
