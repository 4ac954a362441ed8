import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stegokit.datagen import GenConfig, SynthSpec, generate_dataset
from stegokit.evaluate import (
    ErrorReport,
    RateGrid,
    assert_disjoint,
    dump_reports,
    p_e,
    run_rate_grid,
    run_source_mismatch,
    split_sources,
)


def test_p_e_example():
    truth = [1] * 10 + [0] * 10
    pred = [0] + [1] * 9 + [1, 1, 1] + [0] * 7
    rep = p_e(truth, pred)
    assert rep.p_md == pytest.approx(0.1) and rep.p_fa == pytest.approx(0.3)
    assert rep.p_e == pytest.approx(0.2)
    assert (rep.n_cover, rep.n_stego) == (10, 10)


def test_p_e_extremes():
    truth = [0, 0, 1, 1]
    assert p_e(truth, truth).p_e == 0
    assert p_e(truth, [0, 0, 0, 0]).p_e == 0.5


def test_p_e_errors():
    with pytest.raises(ValueError):
        p_e([1, 1], [1, 0])
    with pytest.raises(ValueError):
        p_e([0, 1], [0])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=2, max_size=60))
def test_p_e_label_flip_symmetry(pairs):
    truth = [t for t, _ in pairs]
    pred = [p for _, p in pairs]
    if len(set(truth)) < 2:
        return
    a = p_e(truth, pred)
    b = p_e([1 - t for t in truth], [1 - p for p in pred])
    assert a.p_e == pytest.approx(b.p_e)
    assert a.p_md == pytest.approx(b.p_fa)
    assert 0 <= a.p_e <= 1


def test_report_serialization():
    rep = ErrorReport(0.1, 0.3, 0.2, 10, 10)
    assert ErrorReport.from_dict(json.loads(json.dumps(rep.to_dict()))) == rep
    assert json.loads(dump_reports({"x": rep})) == {"x": rep.to_dict()}


def test_split_sources_disjoint():
    ids = [f"s{i}" for i in range(20)]
    tr, te = split_sources(ids, 12, 8, seed=3)
    assert len(tr) == 12 and len(te) == 8 and not set(tr) & set(te)
    assert split_sources(ids, 12, 8, seed=3) == (tr, te)
    with pytest.raises(ValueError):
        split_sources(ids, 15, 8, seed=0)
    with pytest.raises(AssertionError):
        assert_disjoint(["a", "b"], ["b"])


@pytest.fixture(scope="module")
def small_sets(tmp_path_factory):
    root = tmp_path_factory.mktemp("eval")
    out = {}
    for name, spec in (("smooth", SynthSpec.smooth(40, 64, 64, seed=1)),
                       ("noisy", SynthSpec.noisy(40, 64, 64, seed=2))):
        cfg = GenConfig(output_dir=root / name, apps=["stegm"], rates=[0.05, 0.4], synth=spec, master_seed=5)
        out[name] = generate_dataset(cfg)
    return out


def test_rate_grid_runs_and_serializes(small_sets):
    grid = run_rate_grid(small_sets["smooth"], "stegm", [0.05, 0.4], [0.05, 0.4], 20, 20, seed=1, L=11, d_sub=64)
    assert set(grid.cells) == {(a, b) for a in grid.train_rates for b in grid.test_rates}
    for rep in grid.cells.values():
        assert rep.n_cover == rep.n_stego == 20
        assert rep.p_e == pytest.approx((rep.p_md + rep.p_fa) / 2)
    # a large-payload classifier on its own rate is well below chance
    assert grid.cell(0.4, 0.4).p_e < 0.25
    back = RateGrid.from_dict(json.loads(json.dumps(grid.to_dict())))
    assert back.cells == grid.cells
    csv_text = grid.to_csv().splitlines()
    assert csv_text[0] == "test\\train,0.05,0.4" and csv_text[1].startswith("0.05,")


def test_rate_grid_repetitions_pool_counts(small_sets):
    grid = run_rate_grid(small_sets["smooth"], "stegm", [0.4], [0.4], 10, 10, seed=0,
                         repetitions=3, L=5, d_sub=32)
    assert grid.cell(0.4, 0.4).n_cover == 30


def test_rate_grid_insufficient_data(small_sets):
    with pytest.raises(ValueError, match="0.05"):
        run_rate_grid(small_sets["smooth"], "stegm", [0.05], [0.05], 30, 30)


def test_source_mismatch(small_sets):
    reports = run_source_mismatch(small_sets, "stegm", 0.4, seed=1, L=11, d_sub=64)
    assert set(reports) == {"smooth", "noisy"}
    assert all(r.n_cover == 40 for r in reports.values())
    with pytest.raises(ValueError):
        run_source_mismatch({"smooth": small_sets["smooth"]}, "stegm", 0.4)
