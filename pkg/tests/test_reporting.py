import csv

from lmattrib.attribute import AttributionResult, attribute_vsm
from lmattrib.harness import ExperimentConfig, CorpusSpec, build_corpus, run_simulation
from lmattrib.reporting import (render_attribution_figure, render_simulation_figures,
                                write_attribution_csv, write_simulation_csv)
from lmattrib.simnet import FamilyLayout, build_family

from helpers_sim import family_stores

CONFIG = ExperimentConfig(
    family=FamilyLayout(name="paired", num_bases=3, vocab_size=50, epsilon=0.0),
    corpus=CorpusSpec(num_datasets=2, per_dataset=2, query_tokens=5),
    methods=("vsm",),
    repetitions=2,
    master_seed=3,
    max_tokens=10,
)


def small_attribution(method):
    family = build_family(8, FamilyLayout(name="default", num_bases=3, vocab_size=50,
                                          epsilon=0.0))
    corpus = build_corpus(2, CorpusSpec(num_datasets=2, per_dataset=2), 100)
    base_store, ft_store = family_stores(family, corpus, max_tokens=10, seed=2)
    return method(base_store, ft_store, corpus)


def test_simulation_csv_rows(tmp_path):
    report = run_simulation(CONFIG)
    path = tmp_path / "report.csv"
    write_simulation_csv(report, path)
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2  # 2 repetitions x 1 method
    assert {r["method"] for r in rows} == {"vsm"}
    assert all(float(r["accuracy"]) == 1.0 for r in rows)


def test_simulation_figures_written(tmp_path):
    report = run_simulation(CONFIG)
    paths = render_simulation_figures(report, tmp_path / "figs")
    assert [p.name for p in paths] == ["accuracy_by_method.png", "accuracy_by_repetition.png"]
    assert all(p.stat().st_size > 1000 for p in paths)


def test_attribution_csv_scores(tmp_path):
    result = small_attribution(attribute_vsm)
    path = tmp_path / "pairs.csv"
    write_attribution_csv(result, path)
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3
    assert set(rows[0]) == {"fine_tuned_id", "predicted_base", *result.base_ids}


def test_attribution_csv_votes(tmp_path):
    result = AttributionResult(
        "one_vs_all", ("base-00", "base-01"),
        {"ft-00": "base-00", "ft-01": None},
        {"ft-00": {"votes": [3, 1], "abstain": 0},
         "ft-01": {"votes": [0, 0], "abstain": 4}},
    )
    path = tmp_path / "pairs.csv"
    write_attribution_csv(result, path)
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert "abstain" in rows[0]
    orphan_row = next(r for r in rows if r["predicted_base"] == "NONE")
    assert int(orphan_row["abstain"]) == 4
    paired_row = next(r for r in rows if r["predicted_base"] == "base-00")
    assert int(paired_row["base-00"]) == 3


def test_attribution_figure_written(tmp_path):
    result = small_attribution(attribute_vsm)
    path = render_attribution_figure(result, tmp_path / "figs" / "evidence.png")
    assert path.exists() and path.stat().st_size > 1000
