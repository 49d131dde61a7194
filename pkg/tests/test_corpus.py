import pytest
from hypothesis import given
from hypothesis import strategies as st

from lmattrib.corpus import (Query, QueryCorpus, compute_diversity, load_corpus,
                             sample_queries, save_corpus)
from lmattrib.errors import ValidationError


def corpus_of(spec: dict[str, int]) -> QueryCorpus:
    queries = []
    for dataset, count in spec.items():
        for k in range(count):
            queries.append(Query(f"{dataset}-{k}", dataset, f"text {dataset} {k}"))
    return QueryCorpus(tuple(queries))


def test_diversity_paper_scale():
    corpus = corpus_of({f"ds{i}": 9 for i in range(10)})
    assert compute_diversity(corpus) == pytest.approx(100 * 10 / 90)


def test_diversity_single_dataset_minimum():
    corpus = corpus_of({"only": 90})
    assert compute_diversity(corpus) == pytest.approx(100 / 90)


def test_diversity_maximum():
    corpus = corpus_of({f"ds{i}": 1 for i in range(90)})
    assert compute_diversity(corpus) == 100.0


def test_diversity_empty_corpus_errors():
    with pytest.raises(ValidationError, match="empty corpus"):
        compute_diversity(QueryCorpus(()))


def test_diversity_halves_when_queries_duplicated():
    corpus = corpus_of({"a": 3, "b": 3})
    doubled = QueryCorpus(corpus.queries + tuple(
        Query(q.id + "-dup", q.dataset_id, q.text) for q in corpus.queries))
    assert compute_diversity(doubled) == pytest.approx(compute_diversity(corpus) / 2)


@given(st.dictionaries(st.text(min_size=1, max_size=4), st.integers(1, 5),
                       min_size=1, max_size=8))
def test_diversity_bounds(spec):
    value = compute_diversity(corpus_of(spec))
    assert 0.0 < value <= 100.0


def test_query_text_must_be_nonempty():
    with pytest.raises(ValidationError):
        Query("q1", "ds", "   ")


def test_corpus_rejects_duplicate_ids():
    with pytest.raises(ValidationError, match="duplicate"):
        QueryCorpus((Query("q", "a", "x"), Query("q", "b", "y")))


# --------------------------------------------------------------------------
# sampling
# --------------------------------------------------------------------------

def ten_pools() -> list[tuple[str, list[str]]]:
    return [(f"ds{i:02d}", [f"pool {i} text {j}" for j in range(20)]) for i in range(10)]


def test_sample_paper_shape():
    corpus = sample_queries(ten_pools(), per_dataset=9, seed=4)
    assert corpus.num_queries == 90
    assert corpus.num_datasets == 10
    assert compute_diversity(corpus) == pytest.approx(11.11, abs=0.002)


def test_sample_full_pool_is_permutation():
    pool = [("d", [f"t{j}" for j in range(6)])]
    corpus = sample_queries(pool, per_dataset=6, seed=1)
    assert sorted(q.text for q in corpus.queries) == sorted(pool[0][1])


def test_sample_deterministic():
    a = sample_queries(ten_pools(), 5, seed=9)
    b = sample_queries(ten_pools(), 5, seed=9)
    assert a == b


def test_sample_invariant_under_pool_order():
    pools = ten_pools()
    a = sample_queries(pools, 4, seed=3)
    b = sample_queries(list(reversed(pools)), 4, seed=3)
    assert a == b


def test_sample_ids_are_dataset_indexed():
    corpus = sample_queries([("ds", ["a", "b", "c"])], 2, seed=0)
    assert [q.id for q in corpus.queries] == ["ds-0", "ds-1"]


def test_sample_pool_too_small_names_dataset():
    pools = ten_pools()
    pools[7] = ("ds07", ["just", "two"])
    with pytest.raises(ValidationError, match="ds07"):
        sample_queries(pools, per_dataset=9, seed=0)


def test_sample_duplicate_dataset_errors():
    with pytest.raises(ValidationError, match="duplicate"):
        sample_queries([("d", ["a"]), ("d", ["b"])], 1, seed=0)


# --------------------------------------------------------------------------
# persistence
# --------------------------------------------------------------------------

def test_corpus_round_trip(tmp_path):
    corpus = sample_queries(ten_pools(), 9, seed=7)
    path = tmp_path / "corpus.jsonl"
    save_corpus(corpus, path)
    assert load_corpus(path) == corpus


def test_load_duplicate_id_errors(tmp_path):
    path = tmp_path / "corpus.jsonl"
    path.write_text('{"id": "q", "dataset": "a", "text": "x"}\n'
                    '{"id": "q", "dataset": "b", "text": "y"}\n')
    with pytest.raises(ValidationError, match="duplicate"):
        load_corpus(path)


def test_load_malformed_line_reports_number(tmp_path):
    path = tmp_path / "corpus.jsonl"
    path.write_text('{"id": "q1", "dataset": "a", "text": "x"}\nnot json\n')
    with pytest.raises(ValidationError, match="line 2"):
        load_corpus(path)


def test_load_empty_file_errors(tmp_path):
    path = tmp_path / "corpus.jsonl"
    path.write_text("")
    with pytest.raises(ValidationError, match="empty corpus"):
        load_corpus(path)
