import csv
import dataclasses
import json

import pytest

from taskspec.corpus import CorpusSpec
from taskspec.harness import (CSV_HEADER, BenchConfig, MissingArtifact, PipelineConfig, Workspace,
                              bench_sweep, build_pipeline, cap_sweep, collect_dataset, split_corpus,
                              train_models)
from taskspec.lm import tokenize
from taskspec.partition import read_jsonl, write_jsonl
from taskspec.specdec import decode_autoregressive


def small_config(**bench) -> PipelineConfig:
    return PipelineConfig(corpus=CorpusSpec(docs_per_domain=60, seed=3),
                          bench=BenchConfig(prompts_per_domain=3, max_tokens=16, **bench))


@pytest.fixture(scope="module")
def small():
    cfg = small_config()
    return cfg, build_pipeline(cfg)


def test_config_round_trip(tmp_path):
    cfg = small_config(gammas=[1, 3])
    assert PipelineConfig.from_dict(cfg.to_dict()) == cfg
    (tmp_path / "c.json").write_text(json.dumps({"corpus": {"seed": 5}, "prompt_len": 4}))
    loaded = PipelineConfig.load(tmp_path / "c.json")
    assert loaded.corpus.seed == 5 and loaded.prompt_len == 4 and loaded.lm == PipelineConfig().lm
    assert PipelineConfig.load(None) == PipelineConfig()


def test_split_sizes():
    cfg = small_config()
    split = split_corpus(cfg)
    assert len(split.train) == 4 * 36 and len(split.collect) == 4 * 18 and len(split.test) == 4 * 6
    assert all(len(r.input.split()) <= cfg.prompt_len for r in split.test)


def test_collect_is_lossless_and_round_trips(tmp_path, small):
    cfg, art = small
    prompts = art.split.collect[:10]
    out = collect_dataset(art.target, art.base, prompts, gamma=3, max_tokens=16)
    assert len(out) == len(prompts)
    for p, r in zip(prompts, out):
        ids = tokenize(p.input, art.target.vocab)
        expect, _ = decode_autoregressive(art.target, ids, 16)
        assert r.output == " ".join(art.target.vocab.decode(expect))
        assert r.input == p.input and r.true_label == p.true_label
    write_jsonl(out, tmp_path / "c.jsonl")
    assert read_jsonl(tmp_path / "c.jsonl") == out


def test_model_roles(small):
    cfg, art = small
    assert art.target.order == 4 and art.base.order == 2
    assert art.drafts.k == cfg.partition.k


def test_bench_grid_and_row_identities(small):
    cfg, art = small
    rows = bench_sweep(cfg, art)
    assert len(rows) == 4 * 4 * 10
    for r in rows:
        assert 0.0 <= r.acceptance_rate <= 1.0 and r.tau >= 0 and r.speedup > 0
        assert r.tau_with_bonus == pytest.approx(r.tau + 1.0)
    keys = [(r.method, r.domain, r.gamma) for r in rows]
    assert keys == sorted(keys, key=lambda k: (["vanilla", "unary", "taskspec", "random_route"]
                                               .index(k[0]), k[1], k[2]))


def test_bench_autoregressive_row(small):
    cfg, art = small
    cfg = dataclasses.replace(cfg, bench=dataclasses.replace(cfg.bench, methods=["autoregressive"]))
    rows = bench_sweep(cfg, art)
    assert [(r.gamma, r.speedup) for r in rows] == [(0, 1.0)] * 4


def test_bench_wall_clock_mode(small):
    cfg, art = small
    bc = dataclasses.replace(cfg.bench, methods=["taskspec"], gammas=[3], clock="wall",
                             target_latency_ms=0.2, prompts_per_domain=1)
    rows = bench_sweep(dataclasses.replace(cfg, bench=bc), art)
    assert len(rows) == 4 and all(r.speedup == r.wall_speedup > 0 for r in rows)


def test_bench_errors(small):
    cfg, art = small
    with pytest.raises(MissingArtifact):
        bench_sweep(cfg, None)
    with pytest.raises(ValueError):
        bench_sweep(dataclasses.replace(cfg, bench=dataclasses.replace(cfg.bench, methods=["x"])), art)


def test_cap_sweep(small):
    cfg, art = small
    rows = cap_sweep(cfg, art, caps=(2, 8), gamma=2)
    assert [r["cap"] for r in rows] == [2] * 4 + [8] * 4


def csv_without_wall_columns(path):
    with open(path) as f:
        rows = list(csv.reader(f))
    assert rows[0] == CSV_HEADER
    i = CSV_HEADER.index("route_ms")
    return [r[:i] + r[i + 1:] for r in rows]


def test_workspace_stages_and_determinism(tmp_path):
    cfg = small_config(gammas=[2, 5])
    outputs = []
    for run in ("a", "b"):
        ws = Workspace(tmp_path / run, cfg)
        ws.gen_corpus()
        ws.collect()
        ws.cluster()
        ws.adapt()
        ws.train_router()
        ws.bench()
        outputs.append(ws)
    a, b = (o.root for o in outputs)
    for f in sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file()):
        if f.name == "bench.csv":
            assert csv_without_wall_columns(a / f) == csv_without_wall_columns(b / f)
        elif f.name != "bench.json":
            assert (a / f).read_bytes() == (b / f).read_bytes(), f


def test_workspace_missing_stage(tmp_path):
    ws = Workspace(tmp_path, small_config())
    with pytest.raises(MissingArtifact, match="gen-corpus"):
        ws.collect()
    with pytest.raises(MissingArtifact, match="collect"):
        ws.cluster()
    with pytest.raises(MissingArtifact, match="collect"):
        ws.adapt()
    with pytest.raises(MissingArtifact, match="gen-corpus"):
        ws.bench()


def test_train_models_deterministic(small):
    cfg, art = small
    t, b = train_models(cfg, art.split)
    assert t == art.target and b == art.base
