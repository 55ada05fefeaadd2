"""Streaming readers and writers for publication corpora.

Two input formats are supported:

``line-record`` (extension ``.pubs``)
    UTF-8, one record per line, six tab-separated fields::

        pub_id <TAB> issns <TAB> year <TAB> title <TAB> abstract <TAB> refs

    ``issns`` and ``refs`` are ``;``-separated lists (possibly empty), ``year``
    may be empty. Inside ``title`` and ``abstract`` the sequences ``\\t``,
    ``\\n``, ``\\r`` and ``\\\\`` encode tab, newline, carriage return and a
    backslash. Blank lines and lines starting with ``#`` are not records.

``pubmed-xml``
    A subset of the MEDLINE/PubMed citation XML: one ``PubmedArticle`` (or a
    bare ``MedlineCitation``) per record, carrying ``PMID``, ``ISSN``,
    ``PubDate/Year``, ``ArticleTitle``, ``AbstractText`` and reference
    ``ArticleId`` elements with ``IdType="pubmed"``.
"""

from __future__ import annotations

import logging
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator

logger = logging.getLogger(__name__)

LINE_RECORD = "line-record"
PUBMED_XML = "pubmed-xml"
FORMATS = (LINE_RECORD, PUBMED_XML)

_ISSN_BODY = re.compile(r"^[0-9]{7}[0-9X]$")
_ISSN_NORMALIZED = re.compile(r"^[0-9]{4}-[0-9]{3}[0-9X]$")
_N_FIELDS = 6


class InvalidISSN(ValueError):
    pass


class ParseError(ValueError):
    """A record could not be turned into a :class:`Publication`."""

    def __init__(self, record: int, reason: str):
        super().__init__(f"record {record}: {reason}")
        self.record = record
        self.reason = reason


class DuplicateIdError(ParseError):
    def __init__(self, record: int, pub_id: str, first: int):
        super().__init__(
            record, f"duplicate pub_id {pub_id!r} (first seen at record {first})"
        )
        self.pub_id = pub_id
        self.first = first


@dataclass(frozen=True, slots=True)
class Publication:
    pub_id: str
    issns: tuple[str, ...] = ()
    year: int | None = None
    title: str = ""
    abstract: str = ""
    references: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.pub_id:
            raise ValueError("pub_id must be non-empty")
        for issn in self.issns:
            if not _ISSN_NORMALIZED.match(issn):
                raise InvalidISSN(issn)

    @property
    def journal_id(self) -> str | None:
        # The first listed ISSN is canonical; the rest only matter for
        # self-citation matching.
        return self.issns[0] if self.issns else None

    @property
    def abstract_missing(self) -> bool:
        return not self.abstract.strip()


@dataclass(frozen=True)
class CorpusConfig:
    min_year: int = 1990
    include_older_references: bool = True
    min_journal_pubs: int = 100
    min_refs_per_pub: int = 10

    def __post_init__(self):
        for name in ("min_year", "min_journal_pubs", "min_refs_per_pub"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass
class ParseReport:
    """Accounting for one parsed stream."""

    records: int = 0
    accepted: int = 0
    rejects: list[tuple[int, str]] = field(default_factory=list)
    self_loops_removed: int = 0
    duplicate_refs_removed: int = 0
    abstract_missing: int = 0

    @property
    def rejected(self) -> int:
        return len(self.rejects)

    def write_rejects(self, stream: IO[str]) -> None:
        stream.write("record\treason\n")
        for record, reason in self.rejects:
            stream.write(f"{record}\t{_escape(reason)}\n")


def normalize_issn(raw: str) -> str:
    """Return ``raw`` in ``DDDD-DDDC`` form or raise :class:`InvalidISSN`.

    >>> normalize_issn(" 22286497 ")
    '2228-6497'
    >>> normalize_issn("0091-679x")
    '0091-679X'
    """
    s = raw.strip().upper()
    if len(s) == 9 and s[4] == "-":
        s = s[:4] + s[5:]
    if len(s) != 8 or not _ISSN_BODY.match(s):
        raise InvalidISSN(f"invalid ISSN {raw!r}")
    return f"{s[:4]}-{s[4:]}"


_UNESCAPE = {"t": "\t", "n": "\n", "r": "\r", "\\": "\\"}
_ESCAPE_RE = re.compile(r"\\(.)", re.S)


def _unescape(s: str) -> str:
    if "\\" not in s:
        return s

    def sub(m: re.Match) -> str:
        try:
            return _UNESCAPE[m.group(1)]
        except KeyError:
            raise ValueError(f"bad escape \\{m.group(1)}") from None

    if s.endswith("\\") and (len(s) - len(s.rstrip("\\"))) % 2:
        raise ValueError("dangling backslash")
    return _ESCAPE_RE.sub(sub, s)


def _escape(s: str) -> str:
    return (
        s.replace("\\", "\\\\")
        .replace("\t", "\\t")
        .replace("\n", "\\n")
        .replace("\r", "\\r")
    )


def _clean_refs(pub_id, refs, report):
    """Deduplicate (first occurrence wins) and drop self-loops."""
    out = []
    seen = set()
    for r in refs:
        if r == pub_id:
            report.self_loops_removed += 1
            continue
        if r in seen:
            report.duplicate_refs_removed += 1
            continue
        seen.add(r)
        out.append(r)
    return tuple(out)


class _Interner(dict):
    # Identifier strings recur as both pub_ids and reference targets; sharing
    # one object per identifier keeps large corpora compact.
    def __missing__(self, key):
        self[key] = key
        return key


def _build(pub_id, issns, year, title, abstract, refs, report, interner):
    pub_id = interner[pub_id]
    refs = [interner[r] for r in refs]
    if len(set(refs)) != len(refs) or pub_id in refs:
        refs = _clean_refs(pub_id, refs, report)
    else:
        refs = tuple(refs)
    pub = Publication(pub_id, issns, year, title, abstract, refs)
    if pub.abstract_missing:
        report.abstract_missing += 1
    return pub


def _split_list(s: str) -> list[str]:
    return [x for x in (p.strip() for p in s.split(";")) if x]


def _parse_line(line: str, report: ParseReport, interner) -> Publication:
    fields = line.split("\t")
    if len(fields) != _N_FIELDS:
        raise ValueError(f"expected {_N_FIELDS} tab-separated fields, got {len(fields)}")
    pub_id, issns, year, title, abstract, refs = fields
    pub_id = pub_id.strip()
    if not pub_id:
        raise ValueError("empty pub_id")
    issns = tuple(dict.fromkeys(normalize_issn(x) for x in _split_list(issns)))
    year = year.strip()
    if year:
        try:
            year = int(year)
        except ValueError:
            raise ValueError(f"non-integer year {year!r}") from None
    else:
        year = None
    return _build(
        pub_id,
        issns,
        year,
        _unescape(title),
        _unescape(abstract),
        _split_list(refs),
        report,
        interner,
    )


def _iter_line_records(stream, report, interner):
    for lineno, raw in enumerate(stream, 1):
        if isinstance(raw, bytes):
            try:
                raw = raw.decode("utf-8")
            except UnicodeDecodeError as e:
                yield lineno, None, f"invalid UTF-8: {e}"
                continue
        line = raw.rstrip("\n").rstrip("\r")
        if not line.strip() or line.startswith("#"):
            continue
        try:
            yield lineno, _parse_line(line, report, interner), None
        except ValueError as e:
            yield lineno, None, str(e)


def _text(elem) -> str:
    return "".join(elem.itertext()).strip() if elem is not None else ""


def _xml_record(elem, report, interner) -> Publication:
    citation = elem if elem.tag == "MedlineCitation" else elem.find("MedlineCitation")
    if citation is None:
        raise ValueError("missing MedlineCitation")
    pub_id = _text(citation.find("PMID"))
    if not pub_id:
        raise ValueError("missing PMID")
    article = citation.find("Article")
    issns: tuple[str, ...] = ()
    year = None
    title = abstract = ""
    if article is not None:
        journal = article.find("Journal")
        if journal is not None:
            issns = tuple(
                dict.fromkeys(
                    normalize_issn(_text(x)) for x in journal.iter("ISSN") if _text(x)
                )
            )
            pubdate = journal.find("JournalIssue/PubDate")
            if pubdate is not None:
                y = _text(pubdate.find("Year"))
                if not y:
                    m = re.match(r"\s*(\d{4})", _text(pubdate.find("MedlineDate")))
                    y = m.group(1) if m else ""
                if y:
                    try:
                        year = int(y)
                    except ValueError:
                        raise ValueError(f"non-integer year {y!r}") from None
        title = _text(article.find("ArticleTitle"))
        abstract = " ".join(
            t for t in (_text(a) for a in article.iterfind("Abstract/AbstractText")) if t
        )
    if not issns:
        info = citation.find("MedlineJournalInfo/ISSNLinking")
        if info is not None and _text(info):
            issns = (normalize_issn(_text(info)),)
    refs = [
        _text(aid)
        for ref in elem.iter("Reference")
        for aid in ref.iter("ArticleId")
        if aid.get("IdType") == "pubmed" and _text(aid)
    ]
    return _build(pub_id, issns, year, title, abstract, refs, report, interner)


def _iter_xml_records(stream, report, interner):
    k = 0
    context = ET.iterparse(stream, events=("start", "end"))
    depth = 0
    try:
        for event, elem in context:
            if elem.tag not in ("PubmedArticle", "MedlineCitation"):
                continue
            if event == "start":
                depth += 1
                continue
            depth -= 1
            if depth:
                # MedlineCitation nested inside a PubmedArticle
                continue
            k += 1
            try:
                yield k, _xml_record(elem, report, interner), None
            except ValueError as e:
                yield k, None, str(e)
            elem.clear()
    except ET.ParseError as e:
        # XML syntax errors are not recoverable inside one document; the
        # remainder of the stream is abandoned.
        yield k + 1, None, f"malformed XML: {e}"


def parse_records(
    stream: IO[bytes] | IO[str] | Iterable[str],
    fmt: str = LINE_RECORD,
    *,
    strict: bool = False,
    report: ParseReport | None = None,
    check_duplicates: bool = True,
) -> Iterator[Publication]:
    """Yield publications from ``stream`` in input order.

    Records that fail validation are appended to ``report.rejects`` with their
    line number (line-record) or ordinal (XML) and skipped. With
    ``strict=True`` the first failure raises :class:`ParseError` instead.
    Duplicate identifiers are rejected at their second occurrence.
    """
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    if report is None:
        report = ParseReport()
    interner = _Interner()
    seen: dict[str, int] = {}
    if fmt == LINE_RECORD:
        records = _iter_line_records(stream, report, interner)
    else:
        records = _iter_xml_records(stream, report, interner)
    for k, pub, error in records:
        report.records += 1
        if pub is not None and check_duplicates:
            first = seen.setdefault(pub.pub_id, k)
            if first != k:
                err = DuplicateIdError(k, pub.pub_id, first)
                if strict:
                    raise err
                report.rejects.append((k, err.reason))
                continue
        if error is not None:
            if strict:
                raise ParseError(k, error)
            report.rejects.append((k, error))
            continue
        report.accepted += 1
        yield pub
    if report.rejects:
        logger.warning("%d of %d records rejected", report.rejected, report.records)


def read_corpus(path, fmt: str | None = None, **kwargs) -> Iterator[Publication]:
    """Open ``path`` and stream its publications; format is guessed from the suffix."""
    path = str(path)
    if fmt is None:
        fmt = PUBMED_XML if path.endswith((".xml", ".xml.gz")) else LINE_RECORD
    if path.endswith(".gz"):
        import gzip

        opener = gzip.open
    else:
        opener = open
    with opener(path, "rb") as raw:
        yield from parse_records(raw, fmt, **kwargs)


def format_record(pub: Publication) -> str:
    year = "" if pub.year is None else str(pub.year)
    return "\t".join(
        (
            pub.pub_id,
            ";".join(pub.issns),
            year,
            _escape(pub.title),
            _escape(pub.abstract),
            ";".join(pub.references),
        )
    )


def write_records(pubs: Iterable[Publication], stream: IO[str]) -> int:
    n = 0
    for pub in pubs:
        stream.write(format_record(pub))
        stream.write("\n")
        n += 1
    return n
