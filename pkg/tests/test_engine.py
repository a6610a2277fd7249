import math
import random
from collections import Counter

import pytest

from app.engine import (
    Bm25Params,
    TokenizerConfig,
    bm25_score,
    build_index,
    load_index,
    query_by_passage,
    query_by_passage_run,
    save_index,
    search,
    self_retrieval_rate,
    tokenize,
    top_hit_rate,
)
from app.errors import DataError, IndexFormatError, UnknownPassageError
from app.trec_io import PassageCollection
from conftest import ranked

RAW = TokenizerConfig(stem=False)


def test_tokenize_example():
    assert tokenize("Super Bowl, 4 hours!", stem=False) == ["super", "bowl", "4", "hours"]


def test_tokenize_empty():
    assert tokenize("") == []


def test_tokenize_stems():
    assert tokenize("Running dogs") == ["run", "dog"]


def test_tokenize_underscores_split():
    assert tokenize("snake_case", stem=False) == ["snake", "case"]


def test_tokenize_lowercases_before_splitting():
    tokens = tokenize("İstanbul", stem=False)
    assert tokenize(" ".join(tokens), stem=False) == tokens


def test_stemming_is_stable():
    assert tokenize("agreed") == tokenize(" ".join(tokenize("agreed")))


_PIECES = [
    "agreed", "generalizations", "hoping", "ponies", "relational", "Running", "FLIES",
    "İstanbul", "ΟΔΟΣ", "Straße", "café", "naïve", "x_1", "2024", "it's", "--", ", ", "!",
    "\t", "\n", "_", "é", "Σ", "a", "Z",
]


@pytest.mark.parametrize("stem", [False, True])
def test_tokenize_is_idempotent_on_joined_output(stem):
    rng = random.Random(77 + stem)
    for _ in range(2000):
        text = "".join(rng.choice(_PIECES) + rng.choice(["", " ", "."]) for _ in range(rng.randint(0, 12)))
        tokens = tokenize(text, stem=stem)
        assert tokenize(" ".join(tokens), stem=stem) == tokens, text


class TestBuildIndex:
    def test_single_passage(self):
        index = build_index(PassageCollection({"p": "a b a"}), RAW)
        assert index.postings == {"a": (("p", 2),), "b": (("p", 1),)}
        assert index.doc_lengths == {"p": 3}

    def test_equal_lengths_average(self):
        index = build_index(PassageCollection({"x": "one two", "y": "three four"}), RAW)
        assert index.avg_doc_length == 2.0

    def test_empty_collection(self):
        with pytest.raises(DataError):
            build_index(PassageCollection({}))

    def test_matches_naive_recount(self):
        rng = random.Random(7)
        vocab = ["w%d" % i for i in range(25)]
        entries = {f"d{i}": " ".join(rng.choices(vocab, k=rng.randint(1, 15))) for i in range(40)}
        index = build_index(PassageCollection(entries), RAW)

        expected = {}
        for pid, text in entries.items():
            for term in set(text.split()):
                expected.setdefault(term, []).append((pid, text.split().count(term)))
        assert {term: sorted(plist) for term, plist in expected.items()} == {
            term: list(plist) for term, plist in index.postings.items()
        }
        assert index.doc_lengths == {pid: len(text.split()) for pid, text in entries.items()}


def _oracle_bm25(entries, query, passage, k1, b):
    docs = {pid: text.split() for pid, text in entries.items()}
    n = len(docs)
    avgdl = sum(len(tokens) for tokens in docs.values()) / n
    total = 0.0
    for term, count in Counter(query).items():
        df = sum(1 for tokens in docs.values() if term in tokens)
        tf = docs[passage].count(term)
        if not tf:
            continue
        idf = math.log(1 + (n - df + 0.5) / (df + 0.5))
        total += count * idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len(docs[passage]) / avgdl))
    return total


class TestScore:
    entries = {
        "d1": "cat sat on the mat",
        "d2": "the dog sat on the log with the cat",
        "d3": "birds fly",
    }

    def test_hand_query_matches_oracle(self):
        index = build_index(PassageCollection(self.entries), RAW)
        params = Bm25Params()
        for pid in self.entries:
            assert bm25_score(index, params, ["cat", "sat", "the"], pid) == pytest.approx(
                _oracle_bm25(self.entries, ["cat", "sat", "the"], pid, 0.9, 0.4), abs=1e-12
            )

    def test_absent_term_contributes_nothing(self):
        index = build_index(PassageCollection(self.entries), RAW)
        params = Bm25Params()
        assert bm25_score(index, params, ["cat", "zebra"], "d1") == bm25_score(index, params, ["cat"], "d1")
        assert bm25_score(index, params, ["zebra"], "d1") == 0.0

    def test_k1_zero_is_sum_of_idf(self):
        index = build_index(PassageCollection(self.entries), RAW)
        params = Bm25Params(k1=0.0)
        got = bm25_score(index, params, ["the", "sat", "zebra"], "d2")
        assert got == pytest.approx(index.idf("the") + index.idf("sat"))

    def test_unknown_passage(self):
        index = build_index(PassageCollection(self.entries), RAW)
        with pytest.raises(UnknownPassageError):
            bm25_score(index, Bm25Params(), ["cat"], "d9")

    def test_invalid_params(self):
        with pytest.raises(ValueError):
            Bm25Params(b=1.5)


class TestSearch:
    def test_out_of_vocabulary(self, tiny_collection):
        index = build_index(tiny_collection)
        assert len(search(index, Bm25Params(), "zyzzyva", 10)) == 0

    def test_depth_one_is_argmax(self, tiny_collection):
        index = build_index(tiny_collection)
        full = search(index, Bm25Params(), "lazy fox", 10)
        top = search(index, Bm25Params(), "lazy fox", 1)
        assert top.passages() == full.passages()[:1]

    def test_full_depth_matches_exhaustive_scoring(self):
        rng = random.Random(11)
        vocab = ["v%d" % i for i in range(12)]
        entries = {f"d{i}": " ".join(rng.choices(vocab, k=rng.randint(3, 10))) for i in range(10)}
        index = build_index(PassageCollection(entries), RAW)
        params = Bm25Params()
        query = "v1 v2 v2 v7"
        terms = Counter(tokenize(query, stem=False))

        scored = [(pid, index.score(params, terms, pid)) for pid in entries]
        expected = sorted(((pid, s) for pid, s in scored if s > 0), key=lambda item: (-item[1], item[0]))
        got = search(index, params, query, 10)
        assert [(entry.passage, entry.score) for entry in got.entries] == expected


class TestQueryByPassage:
    def test_isolated_seed(self):
        collection = PassageCollection({"p1": "alpha beta", "p2": "gamma delta", "p3": "epsilon"})
        index = build_index(collection, RAW)
        ranked = query_by_passage(index, Bm25Params(), "p1", collection, 10)
        assert ranked.passages() == ["p1"]

    def test_duplicate_text_adjacent_by_id(self):
        collection = PassageCollection(
            {"b": "same words here", "a": "same words here", "c": "other words entirely"}
        )
        index = build_index(collection, RAW)
        ranked = query_by_passage(index, Bm25Params(), "b", collection, 10)
        assert ranked.passages()[:2] == ["a", "b"]
        assert ranked.entries[0].score == ranked.entries[1].score

    def test_unknown_seed(self, tiny_collection):
        index = build_index(tiny_collection)
        with pytest.raises(UnknownPassageError):
            query_by_passage(index, Bm25Params(), "nope", tiny_collection, 10)

    def test_topic_and_tag(self, tiny_collection):
        index = build_index(tiny_collection)
        ranked = query_by_passage(index, Bm25Params(), "p2", tiny_collection, 3, topic="q9", tag="x")
        assert (ranked.topic, ranked.tag) == ("q9", "x")
        assert len(ranked) <= 3

    def test_batch_is_deterministic_across_workers(self, synthetic):
        index = build_index(synthetic.collection)
        seeds = {pid: pid for pid in synthetic.collection.ids()[:30]}
        serial = query_by_passage_run(index, Bm25Params(), seeds, synthetic.collection, 20)
        pooled = query_by_passage_run(index, Bm25Params(), seeds, synthetic.collection, 20, workers=4)
        assert serial == pooled

    def test_self_retrieval(self, tiny_collection):
        index = build_index(tiny_collection)
        rate = self_retrieval_rate(index, Bm25Params(), tiny_collection, ["p1", "p3", "p5"])
        assert rate == 1.0

    def test_top_hit_rate(self):
        rankings = {"q1": ranked("q1", ["a", "b"]), "q2": ranked("q2", ["b", "a"]), "q3": ranked("q3", [])}
        assert top_hit_rate(rankings, {"q1": "a", "q2": "a", "q3": "a", "q4": "a"}) == 0.25
        assert top_hit_rate(rankings, {}) == 0.0


class TestIndexFile:
    def test_round_trip(self, tmp_path, tiny_collection):
        index = build_index(tiny_collection)
        path = save_index(index, tmp_path / "index.bin")
        loaded = load_index(path)
        assert loaded.postings == index.postings
        assert loaded.doc_lengths == index.doc_lengths
        assert loaded.stem is True
        params = Bm25Params()
        assert search(loaded, params, "quick dog", 5) == search(index, params, "quick dog", 5)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "index.bin"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(IndexFormatError):
            load_index(path)

    def test_truncated(self, tmp_path, tiny_collection):
        path = save_index(build_index(tiny_collection), tmp_path / "index.bin")
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(IndexFormatError):
            load_index(path)

    def test_trailing_bytes(self, tmp_path, tiny_collection):
        path = save_index(build_index(tiny_collection), tmp_path / "index.bin")
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(IndexFormatError):
            load_index(path)
