"""Exit criteria. Each test carries an ``acceptance`` marker; the terminal
summary prints one PASS/FAIL line per criterion."""

import functools
import io
import math
import os
import random
import resource
import subprocess
import sys
import time

import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracle
import synth
from rely import cli, metrics, pipeline
from rely.corpus import Publication
from rely.graph import EdgeClass, self_citation_ratio
from rely.metrics import SimilarityProfile, compute_profiles, pearson, rely_publication, UndefinedCorrelation
from rely.report import HistogramSpec, histogram, write_results

TOL = 1e-9
CLASS_CODE = {EdgeClass.SC: "SC", EdgeClass.NSC: "NSC", EdgeClass.UNRESOLVABLE: "U"}


def close(a, b, tol=TOL):
    if a is None or b is None:
        return a is None and b is None
    return abs(a - b) <= tol


def csv_text(results):
    buf = io.StringIO()
    write_results(results, buf)
    return buf.getvalue()


# -- 1 ------------------------------------------------------------------------


def check_against_oracle(seed):
    rng = random.Random(seed)
    pubs, vectors = synth.random_corpus(seed)
    cfg = dict(
        min_year=rng.choice([0, 1990]),
        include_older_references=rng.random() < 0.7,
        min_journal_pubs=rng.randint(0, 4),
        min_refs_per_pub=rng.randint(0, 3),
        ratio_mode=rng.choice(metrics.RATIO_MODES),
        population=rng.choice(metrics.POPULATIONS),
        exclusions=rng.choice(metrics.EXCLUSIONS),
    )
    want = oracle.analyze(
        synth.oracle_records(pubs),
        vectors,
        min_year=cfg["min_year"],
        include_older=cfg["include_older_references"],
        min_journal_pubs=cfg["min_journal_pubs"],
        min_refs=cfg["min_refs_per_pub"],
        population=cfg["population"],
        exclusions=cfg["exclusions"],
        ratio_mode=cfg["ratio_mode"],
    )
    graph, cv, pub_results, journal_results, _, _ = synth.run_rely(pubs, vectors, **cfg)

    for p in pubs:
        got = [(r, CLASS_CODE[c]) for r, c in graph.edge_classes(p.pub_id)]
        assert got == want["edges"][p.pub_id], (seed, p.pub_id)
        prof = want["profiles"][p.pub_id]
        assert close(self_citation_ratio(p.pub_id, graph), prof["sc_ratio"])
        assert close(self_citation_ratio(p.pub_id, graph, "all"), prof["sc_ratio_all"])

    for got in compute_profiles(graph, cv, graph.ids):
        prof = want["profiles"][got.pub_id]
        for key in ("sim_all", "sim_sc", "sim_nsc"):
            assert close(getattr(got, key), prof[key]), (seed, got.pub_id, key)
        assert (got.n_sc, got.n_nsc, got.n_skipped) == (prof["n_sc"], prof["n_nsc"], prof["n_skipped"])
        assert (got.sc_resolved, got.nsc_resolved) == (prof["sc_resolved"], prof["nsc_resolved"])
        assert got.source_degenerate == prof["source_degenerate"]

    assert [r.subject_id for r in pub_results] == [r["id"] for r in want["publications"]]
    for got, exp in zip(pub_results, want["publications"]):
        assert close(got.score, exp["score"]), (seed, got.subject_id)
        assert got.reason == exp["reason"]

    assert [r.subject_id for r in journal_results] == [r["id"] for r in want["journals"]]
    for got, exp in zip(journal_results, want["journals"]):
        # journal scores carry the factor C; compare relative to it
        assert close(got.score, exp["score"], TOL * 100), (seed, got.subject_id)
        assert close(got.sc_ratio, exp["sc_ratio"])
        assert (got.n_pubs_included, got.reason) == (exp["n"], exp["reason"])

    scored = [r for r in journal_results if r.score is not None]
    try:
        r = pearson([j.sc_ratio for j in scored], [j.score for j in scored])
    except UndefinedCorrelation:
        r = None
    assert close(r, want["pearson"]), seed
    return len(pub_results), len(scored)


@pytest.mark.acceptance(1, "oracle equivalence on 100 random corpora within 1e-9, < 10 s")
def test_oracle_equivalence():
    start = time.perf_counter()
    pubs_scored = journals_scored = 0
    for seed in range(100):
        a, b = check_against_oracle(seed)
        pubs_scored += a
        journals_scored += b
    elapsed = time.perf_counter() - start
    print(f"100 corpora, {pubs_scored} publication and {journals_scored} journal scores in {elapsed:.2f}s")
    # make sure the comparison exercised something
    assert pubs_scored > 500 and journals_scored > 50
    assert elapsed < 10.0


# -- 2 ------------------------------------------------------------------------


def tiny(refs_spec, vectors):
    """Source publication "s" in journal A citing ``refs_spec``: a list of
    (pub_id, issn). Every threshold is off so everything is scored."""
    pubs = [Publication("s", ("0091-7451",), 2000, "", "", tuple(r for r, _ in refs_spec))]
    pubs += [Publication(r, (issn,), 2000) for r, issn in refs_spec]
    _, _, pub_results, _, _, _ = synth.run_rely(pubs, vectors, min_journal_pubs=0, min_refs_per_pub=0)
    return {r.subject_id: r for r in pub_results}["s"]


A, B = "0091-7451", "2228-6497"


@pytest.mark.acceptance(2, "special cases: |NSC|=0, |SC|=0, equal similarity, degenerate vectors")
class TestSpecialCases:
    def test_all_sc_scores_one(self):
        r = tiny([("a1", A), ("a2", A)], {"s": [1, 0], "a1": [0, 1], "a2": [1, 1]})
        assert r.score == 1.0 and r.reason == ""

    def test_no_sc_scores_zero(self):
        r = tiny([("b1", B), ("b2", B)], {"s": [1, 0], "b1": [0, 1], "b2": [1, 1]})
        assert r.score == 0.0 and r.reason == ""

    def test_equal_similarity_scores_zero(self):
        r = tiny([("a1", A), ("b1", B)], {"s": [1, 0], "a1": [1, 2], "b1": [1, 2]})
        assert r.sim_sc == r.sim_nsc
        assert r.score == 0.0

    def test_degenerate_source_excluded(self):
        r = tiny([("a1", A), ("b1", B)], {"s": [0, 0], "a1": [1, 2], "b1": [2, 1]})
        assert r.score is None and r.reason == "degenerate_source"
        r = tiny([("a1", A), ("b1", B)], {"a1": [1, 2], "b1": [2, 1]})
        assert r.score is None and r.reason == "degenerate_source"

    def test_degenerate_references_excluded(self):
        r = tiny([("a1", A), ("b1", B)], {"s": [1, 0], "a1": [0, 0], "b1": [0, 0]})
        assert r.score is None and r.reason == "no_usable_refs"
        r = tiny([("a1", A), ("b1", B)], {"s": [1, 0], "a1": [0, 0], "b1": [2, 1]})
        assert r.score is None and r.reason == "degenerate_sc_refs"
        r = tiny([("a1", A), ("b1", B)], {"s": [1, 0], "a1": [1, 2], "b1": [0, 0]})
        assert r.score is None and r.reason == "degenerate_nsc_refs"

    def test_degenerate_reference_skipped_not_counted(self):
        # one usable SC, one usable NSC, one degenerate NSC
        r = tiny([("a1", A), ("b1", B), ("b2", B)], {"s": [1, 0], "a1": [0, 1], "b1": [1, 0], "b2": [0, 0]})
        assert (r.n_sc, r.n_nsc, r.n_skipped) == (1, 1, 1)
        assert r.score == 1.0 * (1.0 - 0.0)

    def test_branches_on_profiles(self):
        base = dict(pub_id="p", sim_all=0.5, n_skipped=0, n_unresolvable=0,
                    n_sc_degenerate=0, n_nsc_degenerate=0, source_degenerate=False)
        only_sc = SimilarityProfile(sim_sc=0.5, sim_nsc=None, n_sc=3, n_nsc=0, **base)
        only_nsc = SimilarityProfile(sim_sc=None, sim_nsc=0.5, n_sc=0, n_nsc=3, **base)
        equal = SimilarityProfile(sim_sc=0.25, sim_nsc=0.25, n_sc=2, n_nsc=7, **base)
        assert rely_publication(only_sc) == 1.0
        assert rely_publication(only_nsc) == 0.0
        assert rely_publication(equal) == 0.0
        assert rely_publication(equal, "sc_over_total") == 0.0


# -- 3 ------------------------------------------------------------------------


@pytest.mark.acceptance(3, "scale, permutation and worker-count invariance")
class TestInvariance:
    @pytest.mark.parametrize("seed", range(20))
    def test_scale_invariance(self, seed):
        pubs, vectors = synth.random_corpus(seed)
        scaled = {k: None if v is None else [10 * x for x in v] for k, v in vectors.items()}
        kw = dict(min_journal_pubs=1, min_refs_per_pub=1)
        _, _, p1, j1, _, _ = synth.run_rely(pubs, vectors, **kw)
        _, _, p2, j2, _, _ = synth.run_rely(pubs, scaled, **kw)
        for a, b in zip(p1 + j1, p2 + j2):
            assert a.subject_id == b.subject_id and a.reason == b.reason
            assert close(a.score, b.score, 1e-12 * (100 if a.level == "journal" else 1))

    @pytest.mark.parametrize("seed", range(20))
    def test_permutation_invariance(self, seed):
        pubs, vectors = synth.random_corpus(seed)
        shuffled = pubs[:]
        random.Random(seed).shuffle(shuffled)
        kw = dict(min_journal_pubs=1, min_refs_per_pub=1)
        _, _, p1, j1, s1, _ = synth.run_rely(pubs, vectors, **kw)
        _, _, p2, j2, s2, _ = synth.run_rely(shuffled, vectors, **kw)
        assert csv_text(p1) == csv_text(p2)
        assert csv_text(j1) == csv_text(j2)
        assert s1 == s2

    def test_worker_count_byte_identical(self, tmp_path, monkeypatch):
        pubs_path, vec_path = synth.write_scale_corpus(str(tmp_path), 3000, n_refs=20, n_journals=20, seed=3)
        # small blocks so that eight workers really share the work
        monkeypatch.setattr(pipeline, "compute_profiles", functools.partial(compute_profiles, block_edges=997))
        outputs = {}
        for workers in (1, 8):
            out = tmp_path / f"w{workers}"
            argv = ["score", "--input", pubs_path, "--vectors", vec_path, "--vector-kind", "publication",
                    "--out-dir", str(out), "--workers", str(workers)]
            assert cli.main(argv) == 0
            outputs[workers] = {n: (out / n).read_bytes() for n in ("publications.csv", "journals.csv", "journal_stats.csv")}
        assert outputs[1] == outputs[8]
        assert outputs[1]["publications.csv"].count(b"\n") > 1000


# -- 4 ------------------------------------------------------------------------


def boundary_corpus():
    """Journal A: 100 publications with 10 references each. Journal B: 99
    publications with 10 references plus 5 with only 9."""
    pubs = []
    ids_a = [f"a{i}" for i in range(100)]
    ids_b = [f"b{i}" for i in range(104)]
    pool = ids_a + ids_b
    rng = random.Random(0)
    for pid in ids_a:
        pubs.append(Publication(pid, (A,), 2000, "", "", tuple(rng.sample([x for x in pool if x != pid], 10))))
    for k, pid in enumerate(ids_b):
        n = 10 if k < 99 else 9
        pubs.append(Publication(pid, (B,), 2000, "", "", tuple(rng.sample([x for x in pool if x != pid], n))))
    vectors = {p.pub_id: [rng.gauss(0, 1) for _ in range(4)] for p in pubs}
    return pubs, vectors


@pytest.mark.acceptance(4, "eligibility boundaries at 100/99 publications and 10/9 references")
def test_eligibility_boundaries():
    pubs, vectors = boundary_corpus()
    graph, _, pub_results, journal_results, jstats, tally = synth.run_rely(pubs, vectors)
    assert [j.subject_id for j in journal_results] == [A]
    assert [s.journal_id for s in jstats] == [A] and jstats[0].pub_count == 100
    assert {r.journal_id for r in pub_results} == {A}
    assert len(pub_results) == 100
    counts = tally["counts"]
    assert counts["ineligible_refs"] == 5
    assert counts["ineligible_journal"] == 99

    # one more eligible publication tips journal B over the threshold
    fixed = [p if p.pub_id != "b99" else Publication("b99", (B,), 2000, "", "", p.references + ("a0",)) for p in pubs]
    _, _, pub_results, journal_results, _, tally = synth.run_rely(fixed, vectors)
    assert [j.subject_id for j in journal_results] == [A, B]
    assert len(pub_results) == 200
    assert tally["counts"]["ineligible_refs"] == 4


# -- 5 ------------------------------------------------------------------------


@pytest.mark.acceptance(5, "histogram conservation, half-open bins, clip underflow/overflow")
class TestHistograms:
    def test_hand_built(self):
        h = histogram([0.005, 0.015, 0.015], HistogramSpec(0.01))
        assert h.bins == [(0.0, 1), (0.01, 2)]

    def test_edge_goes_to_upper_bin(self):
        h = histogram([0.01, 0.02, 0.03], HistogramSpec(0.01))
        assert h.bins == [(0.01, 1), (0.02, 1), (0.03, 1)]
        h = histogram([0.5, 1.0], HistogramSpec(0.5))
        assert h.bins == [(0.5, 1), (1.0, 1)]

    def test_rely_clipping(self):
        spec = HistogramSpec(0.5, -10.0, 10.0)
        values = [-75.01, -10.0001, -10.0, -9.5, 0.0, 9.99, 10.0, 48.03]
        h = histogram(values, spec)
        assert (h.underflow, h.overflow) == (2, 2)
        assert len(h.bins) == 40
        assert h.bins[0] == (-10.0, 1) and h.bins[1] == (-9.5, 1)
        assert h.bins[20] == (0.0, 1) and h.bins[-1] == (9.5, 1)
        assert h.total == len(values)

    @given(
        st.lists(st.floats(-50, 50, allow_nan=False), max_size=200),
        st.sampled_from([0.01, 0.05, 0.25, 0.5, 1.0, 10.0]),
        st.booleans(),
    )
    def test_conservation(self, values, width, clip):
        spec = HistogramSpec(width, -10.0, 10.0) if clip else HistogramSpec(width)
        h = histogram(values, spec)
        assert h.total == len(values)
        for x in values:
            if clip and not -10.0 <= x < 10.0:
                continue
            k = spec.index(x)
            lo = spec.origin + k * width
            # half-open up to floating-point snapping at the edges
            assert lo - 1e-9 * width <= x < lo + width + 1e-9 * width


# -- 6 ------------------------------------------------------------------------


@pytest.mark.acceptance(6, "golden end-to-end run on the bundled fixture")
def test_golden_run(tmp_path, fixture_dir, golden_dir):
    argv = ["score", "-c", os.path.join(fixture_dir, "fixture.cfg"), "--out-dir", str(tmp_path)]
    assert cli.main(argv) == 0
    for name in ("publications.csv", "journals.csv", "journal_stats.csv"):
        got = (tmp_path / name).read_bytes()
        with open(os.path.join(golden_dir, name), "rb") as f:
            assert got == f.read(), name


@pytest.mark.acceptance(6, "golden end-to-end run on the bundled fixture")
def test_golden_files_come_from_oracle(golden_dir):
    for name, text in oracle.golden_csvs(oracle.fixture_result()).items():
        with open(os.path.join(golden_dir, name), encoding="utf-8", newline="") as f:
            assert f.read() == text


# -- 7 ------------------------------------------------------------------------

SMOKE_PUBS = int(os.environ.get("RELY_SMOKE_PUBS", "100000"))


@pytest.mark.slow
@pytest.mark.acceptance(7, "scale smoke: ingest+score (1M documented, 100k asserted)")
def test_scale_smoke(tmp_path):
    pubs_path, vec_path = synth.write_scale_corpus(
        str(tmp_path), SMOKE_PUBS, n_refs=30, dim=16, n_journals=max(1, SMOKE_PUBS // 400)
    )
    before = resource.getrusage(resource.RUSAGE_CHILDREN).ru_maxrss
    start = time.perf_counter()
    for command in ("ingest", "score"):
        argv = [sys.executable, "-m", "rely", command, "--input", pubs_path, "--vectors", vec_path,
                "--vector-kind", "publication", "--out-dir", str(tmp_path / "out")]
        subprocess.run(argv, check=True)
    elapsed = time.perf_counter() - start
    peak_kib = max(before, resource.getrusage(resource.RUSAGE_CHILDREN).ru_maxrss)
    print(f"{SMOKE_PUBS} publications x 30 references: {elapsed:.1f}s, peak RSS {peak_kib / 1024:.0f} MiB")
    # 1M must fit in 10 minutes and 8 GB; scale the budget linearly
    share = SMOKE_PUBS / 1_000_000
    assert elapsed < max(30.0, 600.0 * share)
    assert peak_kib * 1024 < max(1 << 30, 8 * (1 << 30) * share)
    lines = (tmp_path / "out" / "publications.csv").read_text().count("\n")
    assert lines > SMOKE_PUBS // 2


# -- 8 ------------------------------------------------------------------------


@pytest.mark.acceptance(8, "self-citations are more similar than non-self-citations on a topic corpus")
@pytest.mark.parametrize("seed", range(3))
def test_topic_direction(seed, tmp_path):
    pubs, vectors = synth.topic_corpus(seed)
    _, _, pub_results, _, _, _ = synth.run_rely(pubs, vectors, min_journal_pubs=10, min_refs_per_pub=5)
    with_sc = [r for r in pub_results if r.sc_ratio > 0]
    sim_sc = [r.sim_sc for r in with_sc if r.sim_sc is not None]
    sim_nsc = [r.sim_nsc for r in with_sc if r.sim_nsc is not None]
    assert len(sim_sc) > 100 and len(sim_nsc) > 100
    spec = HistogramSpec(0.01)
    h_sc, h_nsc = histogram(sim_sc, spec), histogram(sim_nsc, spec)

    def hist_mean(h):
        return math.fsum((s + spec.bin_width / 2) * c for s, c in h.bins) / h.total

    print(f"seed {seed}: mean sim SC {math.fsum(sim_sc) / len(sim_sc):.4f}, NSC {math.fsum(sim_nsc) / len(sim_nsc):.4f}")
    assert math.fsum(sim_sc) / len(sim_sc) > math.fsum(sim_nsc) / len(sim_nsc)
    assert hist_mean(h_sc) > hist_mean(h_nsc)
