"""Resolved citation graph and journal self-citation accounting."""

from __future__ import annotations

import enum
from array import array
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .corpus import CorpusConfig, Publication

BASES = ("resolved", "all")


class EdgeClass(enum.IntEnum):
    NSC = 0
    SC = 1
    UNRESOLVABLE = 2


class NotFound(KeyError):
    pass


@dataclass(frozen=True)
class JournalStats:
    journal_id: str
    pub_count: int
    avg_refs_per_pub: float
    sc_count: int
    resolved_ref_count: int
    sc_ratio: float


class CitationGraph:
    """Publications indexed by position, with references stored as CSR arrays.

    ``ref_target[ref_ptr[i]:ref_ptr[i+1]]`` holds the positions of the
    publications cited by publication ``i`` (``-1`` when the target is not
    resolvable) and ``ref_class`` the matching :class:`EdgeClass` codes.
    """

    def __init__(self, pubs: Iterable[Publication], config: CorpusConfig | None = None):
        self.config = config or CorpusConfig()
        self.publications: dict[str, Publication] = {}
        self.ids: list[str] = []
        for pub in pubs:
            if pub.pub_id in self.publications:
                raise ValueError(f"duplicate pub_id {pub.pub_id!r}")
            self.publications[pub.pub_id] = pub
            self.ids.append(pub.pub_id)
        self.index = {pid: i for i, pid in enumerate(self.ids)}
        n = len(self.ids)

        journal_codes: dict[str, int] = {}
        journal = np.full(n, -1, dtype=np.int32)
        multi = np.zeros(n, dtype=bool)
        years = np.zeros(n, dtype=np.int64)
        has_year = np.zeros(n, dtype=bool)
        nrefs = np.zeros(n, dtype=np.int64)
        targets = array("i")
        index = self.index
        for i, pid in enumerate(self.ids):
            pub = self.publications[pid]
            if pub.issns:
                journal[i] = journal_codes.setdefault(pub.issns[0], len(journal_codes))
                multi[i] = len(pub.issns) > 1
            if pub.year is not None:
                years[i] = pub.year
                has_year[i] = True
            nrefs[i] = len(pub.references)
            targets.extend([index.get(r, -1) for r in pub.references])

        self.journal_codes = journal_codes
        self.journal = journal
        min_year = self.config.min_year
        # Without a year a publication cannot be shown to fall inside the
        # analysis window, unless there is no window at all.
        self.analyzed = (has_year & (years >= min_year)) | (min_year <= 0)
        self.ref_ptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(nrefs, out=self.ref_ptr[1:])
        tgt = np.frombuffer(targets, dtype=np.int32).copy() if len(targets) else np.zeros(0, np.int32)
        del targets
        if not self.config.include_older_references and len(tgt):
            resolved = tgt >= 0
            tgt[resolved & ~self.analyzed[np.where(resolved, tgt, 0)]] = -1
        self.ref_target = tgt
        self.ref_class = self._classify(nrefs, multi)

        cls = self.ref_class
        src = np.repeat(np.arange(n, dtype=np.int32), nrefs)
        self.n_refs = nrefs
        self.n_sc = np.bincount(src[cls == EdgeClass.SC], minlength=n)
        self.n_nsc = np.bincount(src[cls == EdgeClass.NSC], minlength=n)
        self.n_unresolvable = nrefs - self.n_sc - self.n_nsc

        self.journal_index: dict[str, set[str]] = {}
        for pid in self.ids:
            j = self.publications[pid].journal_id
            if j is not None:
                self.journal_index.setdefault(j, set()).add(pid)

    def _classify(self, nrefs, multi):
        tgt = self.ref_target
        n = len(self.ids)
        src = np.repeat(np.arange(n, dtype=np.int32), nrefs)
        resolved = tgt >= 0
        safe_tgt = np.where(resolved, tgt, 0)
        src_j = self.journal[src]
        tgt_j = self.journal[safe_tgt]
        sc = resolved & (src_j >= 0) & (src_j == tgt_j)
        # Publications listing several ISSNs: self-citation iff the ISSN
        # sets intersect.
        check = np.flatnonzero(resolved & (src_j >= 0) & (tgt_j >= 0) & (multi[src] | multi[safe_tgt]))
        pubs, ids = self.publications, self.ids
        for e in check:
            a = pubs[ids[src[e]]].issns
            b = pubs[ids[tgt[e]]].issns
            sc[e] = not set(a).isdisjoint(b)
        cls = np.full(len(tgt), EdgeClass.NSC, dtype=np.int8)
        cls[sc] = EdgeClass.SC
        cls[~resolved] = EdgeClass.UNRESOLVABLE
        return cls

    def __len__(self):
        return len(self.ids)

    def position(self, pub_id: str) -> int:
        try:
            return self.index[pub_id]
        except KeyError:
            raise NotFound(pub_id) from None

    def edge_classes(self, pub_id: str) -> list[tuple[str, EdgeClass]]:
        i = self.position(pub_id)
        lo, hi = self.ref_ptr[i], self.ref_ptr[i + 1]
        refs = self.publications[pub_id].references
        return [(r, EdgeClass(c)) for r, c in zip(refs, self.ref_class[lo:hi].tolist())]

    def class_counts(self, pub_id: str) -> tuple[int, int, int]:
        """``(sc, nsc, unresolvable)`` for one publication."""
        i = self.position(pub_id)
        return int(self.n_sc[i]), int(self.n_nsc[i]), int(self.n_unresolvable[i])

    def is_analyzed(self, pub_id: str) -> bool:
        return bool(self.analyzed[self.position(pub_id)])


def build_graph(pubs: Iterable[Publication], config: CorpusConfig | None = None) -> CitationGraph:
    return CitationGraph(pubs, config)


def _ratio(num, den) -> float:
    return num / den if den else 0.0


def self_citation_ratio(pub_id: str, graph: CitationGraph, basis: str = "resolved") -> float:
    if basis not in BASES:
        raise ValueError(f"basis must be one of {BASES}")
    sc, nsc, unres = graph.class_counts(pub_id)
    den = sc + nsc if basis == "resolved" else sc + nsc + unres
    return _ratio(sc, den)


def _journal_ok(graph, pub_ok, config):
    has_j = graph.journal >= 0
    counts = np.bincount(graph.journal[pub_ok & has_j], minlength=len(graph.journal_codes))
    return counts >= config.min_journal_pubs


def eligibility_masks(graph: CitationGraph, config: CorpusConfig | None = None):
    """Boolean masks over graph positions: (eligible publications, publications
    belonging to an eligible journal)."""
    config = config or graph.config
    pub_ok = graph.analyzed & (graph.n_refs >= config.min_refs_per_pub)
    journal_ok = _journal_ok(graph, pub_ok, config)
    has_j = graph.journal >= 0
    in_journal = np.zeros(len(graph), dtype=bool)
    in_journal[has_j] = journal_ok[graph.journal[has_j]]
    return pub_ok, in_journal


def filter_eligible(graph: CitationGraph, config: CorpusConfig | None = None) -> tuple[set[str], set[str]]:
    """Eligible journal ids and eligible publication ids.

    A publication is eligible when it is analyzed (inside the year window) and
    lists at least ``min_refs_per_pub`` references; a journal when it holds at
    least ``min_journal_pubs`` eligible publications.
    """
    config = config or graph.config
    pub_ok, _ = eligibility_masks(graph, config)
    journal_ok = _journal_ok(graph, pub_ok, config)
    ids = graph.ids
    pubs = {ids[i] for i in np.flatnonzero(pub_ok)}
    journals = {j for j, code in graph.journal_codes.items() if journal_ok[code]}
    return journals, pubs


def journal_stats(
    graph: CitationGraph,
    eligible: tuple[set[str], set[str]],
    basis: str = "resolved",
) -> list[JournalStats]:
    if basis not in BASES:
        raise ValueError(f"basis must be one of {BASES}")
    journals, pubs = eligible
    out = []
    for jid in sorted(journals):
        members = sorted(p for p in graph.journal_index.get(jid, ()) if p in pubs)
        pos = np.array([graph.index[p] for p in members], dtype=np.int64)
        sc = int(graph.n_sc[pos].sum())
        resolved = sc + int(graph.n_nsc[pos].sum())
        total = int(graph.n_refs[pos].sum())
        den = resolved if basis == "resolved" else total
        out.append(
            JournalStats(
                journal_id=jid,
                pub_count=len(members),
                avg_refs_per_pub=_ratio(total, len(members)),
                sc_count=sc,
                resolved_ref_count=resolved,
                sc_ratio=_ratio(sc, den),
            )
        )
    return out
