"""Similarity profiles and Relevance Legitimacy (ReLy) scores.

For a publication ``p`` with self-citations ``SC`` and non-self-citations
``NSC`` (references with usable vectors only)::

    ReLy_p = |SC| / |NSC| * (sim(p, NSC) - sim(p, SC))     if |NSC| > 0
           = 1                                             if |NSC| = 0
           = 0                                             if |SC| = 0

where ``sim(p, X)`` is the mean cosine similarity between ``p`` and the
members of ``X``. A journal's score is the mean of ``C * ReLy_p`` over the
selected publications.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .embedding import CorpusVectors, EmbeddingVector, cosine
from .graph import CitationGraph, EdgeClass, NotFound

RATIO_MODES = ("sc_over_nsc", "sc_over_total")
EXCLUSIONS = ("exclude_all_sc", "include_all_sc")
POPULATIONS = ("with_sc_only", "all_eligible")

# reason codes for publications that cannot be scored
DEGENERATE_SOURCE = "degenerate_source"
NO_USABLE_REFS = "no_usable_refs"
DEGENERATE_SC_REFS = "degenerate_sc_refs"
DEGENERATE_NSC_REFS = "degenerate_nsc_refs"
EMPTY_POPULATION = "empty_population"

DEFAULT_C = 100.0


class Incomputable(ValueError):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class UndefinedCorrelation(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class SimilarityProfile:
    pub_id: str
    sim_all: float | None
    sim_sc: float | None
    sim_nsc: float | None
    n_sc: int
    n_nsc: int
    n_skipped: int
    n_unresolvable: int = 0
    n_sc_degenerate: int = 0
    n_nsc_degenerate: int = 0
    source_degenerate: bool = False

    @property
    def sc_resolved(self) -> int:
        return self.n_sc + self.n_sc_degenerate

    @property
    def nsc_resolved(self) -> int:
        return self.n_nsc + self.n_nsc_degenerate

    @property
    def n_refs(self) -> int:
        return self.n_sc + self.n_nsc + self.n_skipped

    @property
    def sc_ratio(self) -> float:
        """Self-citations over resolved references (0 without any)."""
        den = self.sc_resolved + self.nsc_resolved
        return self.sc_resolved / den if den else 0.0


@dataclass(frozen=True)
class RelyResult:
    subject_id: str
    level: str
    score: float | None
    sc_ratio: float
    n_sc: int = 0
    n_nsc: int = 0
    n_skipped: int | None = None
    n_pubs_included: int | None = None
    reason: str = ""
    journal_id: str | None = None
    sim_all: float | None = None
    sim_sc: float | None = None
    sim_nsc: float | None = None


def avg_similarity(p: EmbeddingVector, refs: Iterable[EmbeddingVector]) -> float | None:
    """Mean cosine between ``p`` and ``refs``, summed in iteration order.

    ``None`` when there is nothing to average or ``p`` is degenerate.
    """
    if p.is_degenerate:
        return None
    total = 0.0
    n = 0
    for r in refs:
        total += cosine(p, r)
        n += 1
    return total / n if n else None


def _profiles_block(graph: CitationGraph, vectors: CorpusVectors, pos: np.ndarray) -> list[SimilarityProfile]:
    m = len(pos)
    if m == 0:
        return []
    starts = graph.ref_ptr[pos]
    lengths = graph.ref_ptr[pos + 1] - starts
    owner = np.repeat(np.arange(m), lengths)
    # edge positions, in reference-list order within each publication
    edges = np.arange(int(lengths.sum()), dtype=np.int64) - np.repeat(np.cumsum(lengths) - lengths, lengths)
    edges += np.repeat(starts, lengths)
    tgt = graph.ref_target[edges]
    cls = graph.ref_class[edges]
    src_ok = ~vectors.degenerate[pos]
    resolved = cls != EdgeClass.UNRESOLVABLE
    tgt_ok = np.zeros(len(tgt), dtype=bool)
    tgt_ok[resolved] = ~vectors.degenerate[tgt[resolved]]
    usable = resolved & tgt_ok & src_ok[owner]
    is_sc = cls == EdgeClass.SC
    is_nsc = cls == EdgeClass.NSC

    sims = np.zeros(len(tgt))
    idx = np.flatnonzero(usable)
    sims[idx] = vectors.cosines(pos[owner[idx]], tgt[idx])

    def per_pub(mask, weights=None):
        return np.bincount(owner[mask], weights=None if weights is None else weights[mask], minlength=m)

    # bincount accumulates in input order, i.e. reference-list order
    sum_all = per_pub(usable, sims)
    sum_sc = per_pub(usable & is_sc, sims)
    sum_nsc = per_pub(usable & is_nsc, sims)
    n_all = per_pub(usable)
    n_sc = per_pub(usable & is_sc)
    n_nsc = per_pub(usable & is_nsc)
    n_unres = per_pub(~resolved)
    n_sc_deg = per_pub(is_sc & ~usable)
    n_nsc_deg = per_pub(is_nsc & ~usable)

    ids = graph.ids
    out = []
    for k in range(m):
        a, s, ns = int(n_all[k]), int(n_sc[k]), int(n_nsc[k])
        skipped = int(n_unres[k] + n_sc_deg[k] + n_nsc_deg[k])
        out.append(
            SimilarityProfile(
                pub_id=ids[pos[k]],
                sim_all=float(sum_all[k]) / a if a else None,
                sim_sc=float(sum_sc[k]) / s if s else None,
                sim_nsc=float(sum_nsc[k]) / ns if ns else None,
                n_sc=s,
                n_nsc=ns,
                n_skipped=skipped,
                n_unresolvable=int(n_unres[k]),
                n_sc_degenerate=int(n_sc_deg[k]),
                n_nsc_degenerate=int(n_nsc_deg[k]),
                source_degenerate=not src_ok[k],
            )
        )
    return out


def compute_profiles(
    graph: CitationGraph,
    vectors: CorpusVectors,
    pub_ids: Iterable[str] | None = None,
    *,
    workers: int = 1,
    block_edges: int = 1 << 20,
) -> list[SimilarityProfile]:
    """Similarity profiles for ``pub_ids`` (default: every analyzed
    publication), returned in the order given.

    Each publication is computed independently of the others, so results do
    not depend on ``workers`` or on how the input is split into blocks.
    """
    if pub_ids is None:
        pos = np.flatnonzero(graph.analyzed)
    else:
        pos = np.array([graph.position(p) for p in pub_ids], dtype=np.int64)
    if workers < 1:
        raise ValueError("workers must be >= 1")
    # split into blocks of roughly block_edges references each
    cum = np.cumsum(graph.n_refs[pos]) if len(pos) else np.zeros(0, np.int64)
    cuts = np.searchsorted(cum, np.arange(block_edges, int(cum[-1]) if len(cum) else 0, block_edges))
    blocks = np.split(pos, np.unique(cuts)) if len(pos) else []
    if workers == 1 or len(blocks) <= 1:
        parts = [_profiles_block(graph, vectors, b) for b in blocks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(lambda b: _profiles_block(graph, vectors, b), blocks))
    return [p for part in parts for p in part]


def rely_publication(profile: SimilarityProfile, ratio_mode: str = "sc_over_nsc") -> float:
    """Raw (unscaled) ReLy score; raises :class:`Incomputable` with a reason
    code when the publication cannot be scored."""
    if ratio_mode not in RATIO_MODES:
        raise ValueError(f"ratio_mode must be one of {RATIO_MODES}")
    if profile.source_degenerate:
        raise Incomputable(DEGENERATE_SOURCE)
    if profile.n_sc + profile.n_nsc == 0:
        raise Incomputable(NO_USABLE_REFS)
    if profile.sc_resolved == 0:
        return 0.0
    if profile.n_sc == 0:
        raise Incomputable(DEGENERATE_SC_REFS)
    if profile.nsc_resolved == 0:
        return 1.0
    if profile.n_nsc == 0:
        raise Incomputable(DEGENERATE_NSC_REFS)
    if ratio_mode == "sc_over_nsc":
        ratio = profile.n_sc / profile.n_nsc
    else:
        ratio = profile.n_sc / (profile.n_sc + profile.n_nsc)
    return ratio * (profile.sim_nsc - profile.sim_sc)


def publication_result(
    profile: SimilarityProfile, graph: CitationGraph | None = None, ratio_mode: str = "sc_over_nsc"
) -> RelyResult:
    try:
        score, reason = rely_publication(profile, ratio_mode), ""
    except Incomputable as e:
        score, reason = None, e.reason
    journal = None
    if graph is not None:
        journal = graph.publications[profile.pub_id].journal_id
    return RelyResult(
        subject_id=profile.pub_id,
        level="publication",
        score=score,
        sc_ratio=profile.sc_ratio,
        n_sc=profile.n_sc,
        n_nsc=profile.n_nsc,
        n_skipped=profile.n_skipped,
        reason=reason,
        journal_id=journal,
        sim_all=profile.sim_all,
        sim_sc=profile.sim_sc,
        sim_nsc=profile.sim_nsc,
    )


def rely_journal(
    journal_id: str,
    graph: CitationGraph,
    profiles: Mapping[str, SimilarityProfile],
    C: float = DEFAULT_C,
    exclusions: str = "exclude_all_sc",
    population: str = "with_sc_only",
    ratio_mode: str = "sc_over_nsc",
) -> RelyResult:
    """Mean of ``C * ReLy_p`` over the journal's publications found in
    ``profiles``.

    ``population="with_sc_only"`` keeps publications with at least one
    self-citation; ``exclusions="exclude_all_sc"`` drops those whose every
    resolved reference is a self-citation. Unscorable publications never
    count. The sum runs in sorted pub_id order.
    """
    if exclusions not in EXCLUSIONS:
        raise ValueError(f"exclusions must be one of {EXCLUSIONS}")
    if population not in POPULATIONS:
        raise ValueError(f"population must be one of {POPULATIONS}")
    if journal_id not in graph.journal_index:
        raise NotFound(journal_id)
    total = 0.0
    ratio_total = 0.0
    n = n_sc = n_nsc = 0
    for pid in sorted(graph.journal_index[journal_id]):
        prof = profiles.get(pid)
        if prof is None:
            continue
        if population == "with_sc_only" and prof.sc_resolved == 0:
            continue
        if exclusions == "exclude_all_sc" and prof.sc_resolved > 0 and prof.nsc_resolved == 0:
            continue
        try:
            score = rely_publication(prof, ratio_mode)
        except Incomputable:
            continue
        total += C * score
        ratio_total += prof.sc_ratio
        n_sc += prof.n_sc
        n_nsc += prof.n_nsc
        n += 1
    if n == 0:
        return RelyResult(
            journal_id, "journal", None, 0.0, 0, 0, n_pubs_included=0, reason=EMPTY_POPULATION, journal_id=journal_id
        )
    return RelyResult(
        journal_id,
        "journal",
        total / n,
        ratio_total / n,
        n_sc,
        n_nsc,
        n_pubs_included=n,
        journal_id=journal_id,
    )


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Sample Pearson correlation coefficient."""
    if len(xs) != len(ys):
        raise ValueError(f"length mismatch: {len(xs)} vs {len(ys)}")
    n = len(xs)
    if n < 2:
        raise UndefinedCorrelation("need at least two points")
    if min(xs) == max(xs) or min(ys) == max(ys):
        raise UndefinedCorrelation("constant series")
    mx = math.fsum(xs) / n
    my = math.fsum(ys) / n
    dx = [x - mx for x in xs]
    dy = [y - my for y in ys]
    sxx = math.fsum(d * d for d in dx)
    syy = math.fsum(d * d for d in dy)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelation("constant series")
    r = math.fsum(a * b for a, b in zip(dx, dy)) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))
