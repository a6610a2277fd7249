import random

import pytest

from app.errors import ConflictError, DuplicateError, ParseError
from app.trec_io import (
    Qrels,
    RankedList,
    Run,
    ScoredEntry,
    load_collection,
    load_topics,
    parse_qrels,
    parse_run,
    qrels_stats,
    read_runs_dir,
    write_qrels,
    write_run,
    write_run_file,
)


class TestParseRun:
    def test_single_line(self):
        run = parse_run(b"q1 Q0 d7 1 12.5 bm25\n")
        assert run.tag == "bm25"
        assert run.lists == {"q1": RankedList("q1", (ScoredEntry("d7", 1, 12.5),), tag="bm25")}

    def test_reorders_by_score(self):
        run = parse_run(b"q1 Q0 a 1 5.0 t\nq1 Q0 b 2 9.0 t\n")
        assert run.lists["q1"].passages() == ["b", "a"]
        assert [entry.rank for entry in run.lists["q1"].entries] == [1, 2]

    def test_ties_broken_by_passage_id(self):
        run = parse_run(b"q1 Q0 z 1 3.0 t\nq1 Q0 a 2 3.0 t\n")
        assert run.lists["q1"].passages() == ["a", "z"]

    def test_depth_cap(self):
        lines = "".join(f"q1 Q0 d{i} {i + 1} {100 - i} t\n" for i in range(15))
        run = parse_run(lines.encode(), depth_cap=10)
        assert len(run.lists["q1"]) == 10
        assert run.lists["q1"].passages()[0] == "d0"

    def test_wrong_column_count_reports_line(self):
        with pytest.raises(ParseError) as err:
            parse_run(b"q1 Q0 a 1 5.0 t\nq1 Q0 b 2 t\n")
        assert err.value.line_no == 2
        assert "line 2" in str(err.value)

    def test_non_numeric_score(self):
        with pytest.raises(ParseError, match="non-numeric score"):
            parse_run(b"q1 Q0 a 1 high t\n")

    def test_non_numeric_rank(self):
        with pytest.raises(ParseError, match="non-numeric rank"):
            parse_run(b"q1 Q0 a first 1.0 t\n")

    def test_duplicate_entry(self):
        with pytest.raises(DuplicateError):
            parse_run(b"q1 Q0 a 1 5.0 t\nq1 Q0 a 2 4.0 t\n")

    def test_mixed_tags(self):
        with pytest.raises(ParseError, match="several tags"):
            parse_run(b"q1 Q0 a 1 5.0 t1\nq2 Q0 a 1 4.0 t2\n")

    def test_blank_lines_and_crlf(self):
        run = parse_run(b"\r\nq1 Q0 a 1 5.0 t\r\n\r\n")
        assert run.lists["q1"].passages() == ["a"]


class TestWriteRun:
    def test_one_entry(self):
        run = parse_run(b"q1 Q0 d7 1 12.5 bm25\n")
        assert write_run(run) == b"q1 Q0 d7 1 12.5 bm25\n"

    def test_empty(self):
        assert write_run(Run()) == b""

    def test_run_with_entries_needs_a_tag(self):
        ranking = RankedList.from_scores("q1", [("d1", 2.0), ("d2", 1.0)])
        with pytest.raises(ParseError, match="run tag"):
            Run(lists={"q1": ranking})

    def test_tag_with_whitespace(self):
        ranking = RankedList.from_scores("q1", [("d1", 2.0)], tag="my run")
        with pytest.raises(ParseError, match="run tag"):
            Run(lists={"q1": ranking}, tag="my run")

    def test_passage_id_with_whitespace(self):
        with pytest.raises(ParseError, match="passage id"):
            RankedList.from_scores("q1", [("d 1", 2.0)], tag="t")

    def test_empty_passage_id(self):
        with pytest.raises(ParseError, match="passage id"):
            RankedList.from_scores("q1", [("", 2.0)], tag="t")


def _random_run(rng: random.Random) -> Run:
    tag = rng.choice(["bm25", "sys-A", "rbc", "x_1"])
    lists = {}
    for t in range(rng.randint(1, 4)):
        topic = f"q{rng.randint(0, 999)}"
        pids = rng.sample([f"d{i}" for i in range(60)], rng.randint(1, 12))
        if rng.random() < 0.5:
            scores = [rng.randint(0, 6) / 4 for _ in pids]
        else:
            scores = [rng.uniform(-30.0, 30.0) for _ in pids]
        lists[topic] = RankedList.from_scores(topic, zip(pids, scores), tag=tag)
    return Run(lists=lists, tag=tag)


def _random_qrels(rng: random.Random) -> Qrels:
    judgments = {}
    for _ in range(rng.randint(1, 5)):
        topic = str(rng.randint(1, 10_000))
        pids = rng.sample([str(i) for i in range(500)], rng.randint(1, 4))
        judgments[topic] = {pid: rng.randint(1, 3) for pid in pids}
    return Qrels(judgments)


def test_run_round_trip_randomized():
    rng = random.Random(1234)
    for _ in range(1000):
        run = _random_run(rng)
        written = write_run(run)
        parsed = parse_run(written)
        assert parsed == run
        assert write_run(parsed) == written


def test_qrels_round_trip_randomized():
    rng = random.Random(4321)
    for _ in range(1000):
        qrels = _random_qrels(rng)
        written = write_qrels(qrels)
        parsed = parse_qrels(written)
        assert parsed == qrels
        assert write_qrels(parsed) == written


class TestQrels:
    def test_parse(self):
        assert parse_qrels(b"q1 0 d3 1\n").judgments == {"q1": {"d3": 1}}

    def test_write(self):
        assert write_qrels(Qrels({"q1": {"d3": 1}})) == b"q1 0 d3 1\n"
        assert write_qrels(Qrels()) == b""

    def test_zero_grade_rejected_in_strict_mode(self):
        with pytest.raises(ParseError, match="non-positive grade"):
            parse_qrels(b"q1 0 d3 0\n")

    def test_zero_grade_dropped_when_lenient(self):
        qrels = parse_qrels(b"q1 0 d3 0\nq1 0 d4 1\n", lenient=True)
        assert qrels.judgments == {"q1": {"d4": 1}}

    def test_conflicting_duplicate(self):
        with pytest.raises(ConflictError):
            parse_qrels(b"q1 0 d3 1\nq1 0 d3 2\n")

    def test_identical_duplicate_accepted(self):
        assert parse_qrels(b"q1 0 d3 2\nq1 0 d3 2\n").judgments == {"q1": {"d3": 2}}

    def test_wrong_columns(self):
        with pytest.raises(ParseError) as err:
            parse_qrels(b"q1 0 d3\n")
        assert err.value.line_no == 1


class TestCollection:
    def test_single_line(self):
        assert load_collection(b"7\thello world\n").entries == {"7": "hello world"}

    def test_three_lines(self):
        assert len(load_collection(b"1\ta\n2\tb\n3\tc\n")) == 3

    def test_duplicate_id(self):
        with pytest.raises(DuplicateError):
            load_collection(b"1\ta\n1\tb\n")

    def test_missing_tab(self):
        with pytest.raises(ParseError) as err:
            load_collection(b"1\ta\n2 no tab here\n")
        assert err.value.line_no == 2

    def test_empty_text_is_degenerate(self):
        collection = load_collection(b"1\t\n2\ttext\n")
        assert collection.degenerate == frozenset({"1"})
        assert "1" in collection

    def test_topics(self):
        topics = load_topics(b"1048585\twhat is paula deen's brother\n")
        assert topics.text("1048585") == "what is paula deen's brother"


class TestQrelsStats:
    def test_single_topic(self):
        stats = qrels_stats(Qrels({"q1": {"d1": 1}}))
        assert stats.n_topics == 1
        assert stats.label_histogram == {1: 1}
        assert stats.render() == "n_topics=1\n1 label: 1 (100.0%)"

    def test_synthetic_multiplicities(self, synthetic):
        # every fifth topic carries two gold passages
        stats = qrels_stats(synthetic.qrels)
        assert stats.label_histogram == {1: 20, 2: 5}
        assert stats.single_label_fraction == pytest.approx(0.8)


class TestRunsDir:
    def test_keyed_by_tag(self, tmp_path):
        write_run_file(parse_run(b"q1 Q0 a 1 1.0 alpha\n"), tmp_path / "one.run")
        write_run_file(parse_run(b"q1 Q0 b 1 1.0 beta\n"), tmp_path / "two.run")
        runs = read_runs_dir(tmp_path)
        assert sorted(runs) == ["alpha", "beta"]

    def test_duplicate_tag(self, tmp_path):
        write_run_file(parse_run(b"q1 Q0 a 1 1.0 same\n"), tmp_path / "one.run")
        write_run_file(parse_run(b"q1 Q0 b 1 1.0 same\n"), tmp_path / "two.run")
        with pytest.raises(DuplicateError):
            read_runs_dir(tmp_path)
