"""End-to-end stages: ingest, journal statistics, scoring and reporting."""

from __future__ import annotations

import json
import logging
import os
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import Settings
from .corpus import ParseReport, Publication, read_corpus, write_records
from .embedding import embed_corpus, load_vectors
from .graph import CitationGraph, eligibility_masks, filter_eligible, journal_stats
from .metrics import (
    RelyResult,
    compute_profiles,
    pearson,
    publication_result,
    rely_journal,
    UndefinedCorrelation,
)
from .report import (
    RunManifest,
    extremes,
    file_digest,
    histogram,
    histogram2d,
    read_journal_stats,
    read_results,
    scale,
    write_journal_stats,
    write_results,
)

logger = logging.getLogger(__name__)

PUBLICATIONS_CSV = "publications.csv"
JOURNALS_CSV = "journals.csv"
JOURNAL_STATS_CSV = "journal_stats.csv"
MANIFEST_JSON = "manifest.json"


class DataError(RuntimeError):
    """Input data is missing, malformed or out of order (exit status 2)."""


class Outputs:
    """Collects output files under temporary names and publishes them only
    when the block completes; on failure every partial file is removed."""

    def __init__(self, directory):
        self.dir = Path(directory)
        self._pending: list[tuple[Path, Path]] = []

    def __enter__(self):
        self.dir.mkdir(parents=True, exist_ok=True)
        return self

    def open(self, name: str | os.PathLike):
        final = Path(name) if os.path.isabs(name) else self.dir / name
        final.parent.mkdir(parents=True, exist_ok=True)
        tmp = final.with_name(f".{final.name}.tmp{os.getpid()}")
        self._pending.append((tmp, final))
        return open(tmp, "w", encoding="utf-8", newline="")

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            for tmp, final in self._pending:
                os.replace(tmp, final)
        else:
            for tmp, _ in self._pending:
                tmp.unlink(missing_ok=True)
        return False


def _require(path, what):
    if not path:
        raise DataError(f"no {what} configured")
    if not Path(path).is_file():
        raise DataError(f"{what} not found: {path}")


def load_corpus(settings: Settings) -> tuple[list[Publication], ParseReport]:
    _require(settings.input, "input corpus")
    report = ParseReport()
    pubs = list(read_corpus(settings.input, settings.format, strict=settings.strict, report=report))
    return pubs, report


def ingest(settings: Settings) -> ParseReport:
    report = ParseReport()
    _require(settings.input, "input corpus")
    with Outputs(settings.out_dir) as out:
        with out.open("corpus.pubs") as f:
            write_records(read_corpus(settings.input, settings.format, strict=settings.strict, report=report), f)
        with out.open(settings.rejects_path) as f:
            report.write_rejects(f)
        with out.open("ingest.json") as f:
            json.dump(_parse_counts(report), f, indent=2, sort_keys=True)
            f.write("\n")
    return report


def _parse_counts(report: ParseReport) -> dict:
    return {
        "records": report.records,
        "accepted": report.accepted,
        "rejected": report.rejected,
        "self_loops_removed": report.self_loops_removed,
        "duplicate_refs_removed": report.duplicate_refs_removed,
        "abstract_missing": report.abstract_missing,
    }


def _metadata(settings: Settings) -> dict:
    return {
        "sc_ratio_basis": settings.basis,
        "publication_sc_ratio": "self-citations / resolved references",
        "journal_eligibility": "counts eligible publications only",
        "publication_score": "raw, unscaled",
        "journal_score": f"mean of C * publication score, C={settings.C!r}",
        "ratio_mode": settings.ratio_mode,
        "population": settings.population,
        "exclusions": settings.exclusions,
    }


def stats(settings: Settings) -> list:
    pubs, report = load_corpus(settings)
    graph = CitationGraph(pubs, settings.corpus_config())
    del pubs
    result = journal_stats(graph, filter_eligible(graph), settings.basis)
    with Outputs(settings.out_dir) as out:
        with out.open(JOURNAL_STATS_CSV) as f:
            write_journal_stats(result, f)
        with out.open("stats.json") as f:
            json.dump({"counts": _parse_counts(report), "metadata": _metadata(settings)}, f, indent=2, sort_keys=True)
            f.write("\n")
        with out.open(settings.rejects_path) as f:
            report.write_rejects(f)
    return result


@dataclass
class ScoreRun:
    graph: CitationGraph
    publications: list[RelyResult]
    journals: list[RelyResult]
    journal_stats: list
    manifest: RunManifest


def score_graph(graph: CitationGraph, vectors, settings: Settings) -> tuple[list[RelyResult], list[RelyResult], list, dict]:
    """Score every eligible publication of every eligible journal.

    Returns publication results and journal results (both sorted by id), the
    journal statistics and the terminal-state counts.
    """
    pub_ok, in_journal = eligibility_masks(graph)
    population = np.flatnonzero(pub_ok & in_journal)
    ids = sorted(graph.ids[i] for i in population)
    profiles = compute_profiles(graph, vectors, ids, workers=settings.workers)
    pub_results = [publication_result(p, graph, settings.ratio_mode) for p in profiles]
    by_id = {p.pub_id: p for p in profiles}
    eligible = filter_eligible(graph)
    journal_results = [
        rely_journal(
            jid, graph, by_id, settings.C, settings.exclusions, settings.population, settings.ratio_mode
        )
        for jid in sorted(eligible[0])
    ]
    excluded = Counter(r.reason for r in pub_results if r.score is None)
    counts = {
        "not_analyzed": int((~graph.analyzed).sum()),
        "ineligible_refs": int((graph.analyzed & ~pub_ok).sum()),
        "ineligible_journal": int((pub_ok & ~in_journal).sum()),
        "scored": sum(1 for r in pub_results if r.score is not None),
        "eligible_journals": len(eligible[0]),
        "scored_journals": sum(1 for r in journal_results if r.score is not None),
    }
    return pub_results, journal_results, journal_stats(graph, eligible, settings.basis), {"counts": counts, "excluded": dict(sorted(excluded.items()))}


def score(settings: Settings) -> ScoreRun:
    _require(settings.vectors, "vector file")
    pubs, report = load_corpus(settings)
    graph = CitationGraph(pubs, settings.corpus_config())
    del pubs
    store = load_vectors(settings.vectors, settings.vector_kind)
    vectors = embed_corpus(graph, store)
    pub_results, journal_results, jstats, tally = score_graph(graph, vectors, settings)
    counts = {**_parse_counts(report), **tally["counts"]}
    counts["vector_duplicates"] = store.duplicates
    counts["skipped_degenerate"] = int(vectors.degenerate.sum())
    manifest = RunManifest(
        config=settings.snapshot(),
        provider=store.provider,
        inputs={"corpus": file_digest(settings.input), "vectors": file_digest(settings.vectors)},
        counts=counts,
        excluded=tally["excluded"],
        metadata=_metadata(settings),
    )
    if manifest.attributed != report.records:
        raise AssertionError(f"count attribution {manifest.attributed} != {report.records} records")
    with Outputs(settings.out_dir) as out:
        with out.open(PUBLICATIONS_CSV) as f:
            write_results(pub_results, f)
        with out.open(JOURNALS_CSV) as f:
            write_results(journal_results, f)
        with out.open(JOURNAL_STATS_CSV) as f:
            write_journal_stats(jstats, f)
        with out.open(settings.rejects_path) as f:
            report.write_rejects(f)
        with out.open(MANIFEST_JSON) as f:
            f.write(manifest.to_json())
    return ScoreRun(graph, pub_results, journal_results, jstats, manifest)


def _has_sc(r: RelyResult) -> bool:
    return r.sc_ratio > 0


def report(settings: Settings) -> dict:
    """Histogram CSVs, extremes and the SC-ratio/ReLy correlation from the
    artifacts of a previous ``score`` run."""
    out_dir = Path(settings.out_dir)
    needed = [out_dir / n for n in (PUBLICATIONS_CSV, JOURNALS_CSV, JOURNAL_STATS_CSV)]
    if not all(p.is_file() for p in needed):
        raise DataError(f"no scored data in {out_dir}: run score first")
    with open(needed[0], encoding="utf-8") as f:
        pubs = read_results(f)
    with open(needed[1], encoding="utf-8") as f:
        journals = read_results(f)
    with open(needed[2], encoding="utf-8") as f:
        jstats = read_journal_stats(f)
    C = settings.C
    manifest_path = out_dir / MANIFEST_JSON
    if manifest_path.is_file():
        C = json.loads(manifest_path.read_text(encoding="utf-8"))["config"]["C"]

    h = settings.histograms
    with_sc = [r for r in pubs if _has_sc(r)]
    diffs: dict[str, list[float]] = {}
    for r in with_sc:
        if r.journal_id and r.sim_sc is not None and r.sim_nsc is not None:
            diffs.setdefault(r.journal_id, []).append(r.sim_nsc - r.sim_sc)
    hists = {
        "fig1_refs_per_pub": histogram((r.n_sc + r.n_nsc + r.n_skipped for r in pubs), h["fig1_refs_per_pub"]),
        "fig3_pub_sc_ratio": histogram((r.sc_ratio for r in with_sc), h["fig3_pub_sc_ratio"]),
        "fig4_journal_sc_ratio": histogram((s["sc_ratio"] for s in jstats), h["fig4_journal_sc_ratio"]),
        "fig5_sim_sc": histogram((r.sim_sc for r in with_sc if r.sim_sc is not None), h["fig5_similarity"]),
        "fig5_sim_nsc": histogram((r.sim_nsc for r in with_sc if r.sim_nsc is not None), h["fig5_similarity"]),
        "fig6_journal_sim_diff": histogram(
            (sum(v) / len(v) for _, v in sorted(diffs.items())), h["fig6_journal_sim_diff"]
        ),
        "fig7_pub_rely": histogram((C * r.score for r in with_sc if r.score is not None), h["fig7_pub_rely"]),
        "fig8_journal_rely": histogram((r.score for r in journals if r.score is not None), h["fig8_journal_rely"]),
    }
    fig2 = histogram2d(((s["pub_count"], s["avg_refs"]) for s in jstats), h["fig2_x"], h["fig2_y"])

    scored_journals = [r for r in journals if r.score is not None]
    try:
        r = pearson([j.sc_ratio for j in scored_journals], [j.score for j in scored_journals])
        corr = {"pearson": r, "n_journals": len(scored_journals)}
    except UndefinedCorrelation as e:
        corr = {"pearson": None, "n_journals": len(scored_journals), "reason": str(e)}
    corr["x"] = "journal mean publication SC ratio"
    corr["y"] = "journal ReLy score"

    scaled = scale(pubs, C)
    high_pool = [r for r in scaled if not (settings.extremes_exclude_all_sc and r.sc_ratio == 1.0)]
    lowest = extremes(scaled, settings.extremes_k, "lowest", settings.extremes_low_threshold)
    highest = extremes(high_pool, settings.extremes_k, "highest", settings.extremes_high_threshold)

    report_dir = out_dir / "report"
    with Outputs(report_dir) as out:
        for name, hist in hists.items():
            with out.open(f"{name}.csv") as f:
                hist.write_csv(f)
        with out.open("fig2_journal_pubs_vs_avg_refs.csv") as f:
            fig2.write_csv(f)
        summary = {name: hist.summary() for name, hist in hists.items()}
        summary["fig2_journal_pubs_vs_avg_refs"] = {"binned": fig2.total - fig2.outside, "outside": fig2.outside, "total": fig2.total}
        with out.open("histograms.json") as f:
            json.dump(summary, f, indent=2, sort_keys=True)
            f.write("\n")
        with out.open("pearson.json") as f:
            json.dump(corr, f, indent=2, sort_keys=True)
            f.write("\n")
        with out.open("extremes_lowest.csv") as f:
            write_results(lowest, f)
        with out.open("extremes_highest.csv") as f:
            write_results(highest, f)
    return {"histograms": hists, "fig2": fig2, "pearson": corr, "lowest": lowest, "highest": highest}
