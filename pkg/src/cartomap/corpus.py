"""Corpus ingestion and entity catalog construction.

A corpus is a CSV file with one row per document. `load_corpus` turns it
into typed records, `build_catalog` enumerates the entities (articles,
authors, labs) with minimum-activity filtering, and `synth_corpus`
generates seeded synthetic corpora with ground-truth topic labels for
testing.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

logger = logging.getLogger("cartomap.corpus")

# Inner separator for multi-valued CSV cells (authors, labs, keywords).
MULTI_SEP = ";"

YEAR_MIN, YEAR_MAX = 1900, 2100


class CorpusError(Exception):
    """Fatal ingestion problem: missing file/column or duplicate doc id."""


@dataclass
class CorpusRecord:
    doc_id: str
    title: str = ""
    abstract: str = ""
    keywords: list[str] = field(default_factory=list)
    pub_year: int | None = None
    domain_tag: str | None = None
    authors: list[str] = field(default_factory=list)
    labs: list[str] = field(default_factory=list)
    views_per_year: float | None = None

    def text(self) -> str:
        """Title, abstract and keywords joined for vectorization."""
        parts = [self.title, self.abstract] + self.keywords
        return ". ".join(p for p in parts if p)

    def has_text(self) -> bool:
        return bool(self.title or self.abstract or self.keywords)


# Column roles understood by load_corpus. doc_id and title are mandatory.
RECORD_FIELDS = (
    "doc_id",
    "title",
    "abstract",
    "keywords",
    "pub_year",
    "domain_tag",
    "authors",
    "labs",
    "views_per_year",
)
MANDATORY_FIELDS = ("doc_id", "title")


def _split_multi(cell: str) -> list[str]:
    """Split a multi-valued cell, trimming and deduplicating in order."""
    seen: dict[str, None] = {}
    for part in cell.split(MULTI_SEP):
        part = part.strip()
        if part:
            seen.setdefault(part)
    return list(seen)


def load_corpus(path: str | Path, mapping: dict[str, str]) -> Iterator[CorpusRecord]:
    """Stream records from a CSV corpus in file order.

    `mapping` maps record field names (see RECORD_FIELDS) to column names
    in the file. doc_id and title must be mapped to existing columns;
    everything else is optional. Malformed optional fields are reported
    to the log with their line number and left absent. Rows with no text
    signal at all (empty title, abstract and keywords) are dropped with
    a warning.

    Raises CorpusError for a missing file, a missing mandatory column,
    or a duplicated doc_id (naming the offending id).
    """
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"corpus file not found: {path}")
    unknown = set(mapping) - set(RECORD_FIELDS)
    if unknown:
        raise CorpusError(f"unknown record fields in mapping: {sorted(unknown)}")
    for mand in MANDATORY_FIELDS:
        if mand not in mapping:
            raise CorpusError(f"mapping must name a column for '{mand}'")

    def rows() -> Iterator[CorpusRecord]:
        seen_ids: dict[str, int] = {}
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                raise CorpusError(f"empty corpus file: {path}")
            for fieldname, column in mapping.items():
                if column not in reader.fieldnames:
                    raise CorpusError(
                        f"mandatory column '{column}' (for {fieldname}) missing"
                        if fieldname in MANDATORY_FIELDS
                        else f"mapped column '{column}' (for {fieldname}) missing"
                    )
            for row in reader:
                line_no = reader.line_num
                get = lambda f: (row.get(mapping[f]) or "").strip() if f in mapping else ""
                doc_id = get("doc_id")
                if not doc_id:
                    logger.warning("line %d: empty doc_id, row skipped", line_no)
                    continue
                if doc_id in seen_ids:
                    raise CorpusError(
                        f"duplicate doc_id '{doc_id}' at line {line_no}"
                        f" (first seen at line {seen_ids[doc_id]})"
                    )
                seen_ids[doc_id] = line_no

                rec = CorpusRecord(doc_id=doc_id, title=get("title"))
                rec.abstract = get("abstract")
                rec.keywords = _split_multi(get("keywords"))
                rec.authors = _split_multi(get("authors"))
                rec.labs = _split_multi(get("labs"))
                rec.domain_tag = get("domain_tag") or None

                year_cell = get("pub_year")
                if year_cell:
                    try:
                        year = int(year_cell)
                        if not YEAR_MIN <= year <= YEAR_MAX:
                            raise ValueError
                        rec.pub_year = year
                    except ValueError:
                        logger.warning(
                            "line %d: bad pub_year %r, treated as absent", line_no, year_cell
                        )
                views_cell = get("views_per_year")
                if views_cell:
                    try:
                        views = float(views_cell)
                        if not np.isfinite(views) or views < 0:
                            raise ValueError
                        rec.views_per_year = views
                    except ValueError:
                        logger.warning(
                            "line %d: bad views_per_year %r, treated as absent",
                            line_no,
                            views_cell,
                        )

                if not rec.has_text():
                    logger.warning(
                        "line %d: record '%s' has no title/abstract/keywords, dropped",
                        line_no,
                        doc_id,
                    )
                    continue
                yield rec

    return rows()


@dataclass
class EntityCatalog:
    """Dense per-type entity enumeration over one corpus.

    Article ids are 0..T-1 in corpus order. Authors and labs keep only
    names appearing on at least `min_docs` articles; ids follow first
    appearance order and doc_refs list the articles (by id) that carry
    the name.
    """

    article_labels: list[str]
    doc_ids: list[str]
    author_labels: list[str]
    author_docs: list[list[int]]
    lab_labels: list[str]
    lab_docs: list[list[int]]
    min_docs: int

    @property
    def T(self) -> int:
        return len(self.article_labels)

    @property
    def L_auth(self) -> int:
        return len(self.author_labels)

    @property
    def L_lab(self) -> int:
        return len(self.lab_labels)


def build_catalog(records: Sequence[CorpusRecord], min_docs: int = 3) -> EntityCatalog:
    """Enumerate article/author/lab entities from loaded records.

    Author and lab identity is the exact name after whitespace trimming
    (done at load time); entities on fewer than `min_docs` articles are
    dropped.
    """
    records = list(records)
    if not records:
        raise CorpusError("cannot build a catalog from an empty record sequence")

    article_labels = [r.title or r.doc_id for r in records]
    doc_ids = [r.doc_id for r in records]

    def collect(names_of: Iterable[list[str]]) -> tuple[list[str], list[list[int]]]:
        docs_by_name: dict[str, list[int]] = {}
        for i, names in enumerate(names_of):
            for name in names:
                docs_by_name.setdefault(name, []).append(i)
        labels = [n for n, docs in docs_by_name.items() if len(docs) >= min_docs]
        return labels, [docs_by_name[n] for n in labels]

    author_labels, author_docs = collect(r.authors for r in records)
    lab_labels, lab_docs = collect(r.labs for r in records)
    return EntityCatalog(
        article_labels=article_labels,
        doc_ids=doc_ids,
        author_labels=author_labels,
        author_docs=author_docs,
        lab_labels=lab_labels,
        lab_docs=lab_docs,
        min_docs=min_docs,
    )


def synth_corpus(
    n_topics: int,
    docs_per_topic: int,
    topic_vocab: int,
    shared_vocab: int,
    seed: int,
) -> tuple[list[CorpusRecord], list[int]]:
    """Generate a deterministic synthetic corpus with known topics.

    Each document draws most of its terms from its topic's private
    vocabulary (words "t<topic>w<i>") plus noise from a shared pool
    ("shw<i>"). Authors and labs are per-topic so aggregate entities
    inherit the topic structure. Returns the records and the per-document
    topic assignment.
    """
    if min(n_topics, docs_per_topic, topic_vocab) < 1 or shared_vocab < 0:
        raise ValueError("n_topics, docs_per_topic, topic_vocab must be >= 1; shared_vocab >= 0")
    rng = np.random.default_rng(seed)
    topics = [[f"t{t}w{i}" for i in range(topic_vocab)] for t in range(n_topics)]
    shared = [f"shw{i}" for i in range(shared_vocab)]

    n_authors = max(3, docs_per_topic // 8)
    author_pools = [
        [f"Author T{t} N{j}" for j in range(n_authors)] for t in range(n_topics)
    ]

    records: list[CorpusRecord] = []
    truth: list[int] = []
    idx = 0
    for t in range(n_topics):
        pool = topics[t]
        for _ in range(docs_per_topic):
            n_own = int(rng.integers(12, 20))
            n_noise = int(rng.integers(4, 9)) if shared_vocab else 0
            own = [pool[int(j)] for j in rng.integers(0, topic_vocab, n_own)]
            noise = [shared[int(j)] for j in rng.integers(0, shared_vocab, n_noise)] if n_noise else []
            terms = own + noise
            order = rng.permutation(len(terms))
            text = [terms[int(j)] for j in order]

            n_auth = int(rng.integers(1, 4))
            authors = sorted(
                {author_pools[t][int(j)] for j in rng.integers(0, n_authors, n_auth)}
            )
            labs = [f"Lab {t}"]
            if shared_vocab and rng.random() < 0.2:
                labs.append("Lab Shared")

            records.append(
                CorpusRecord(
                    doc_id=f"D{idx:05d}",
                    title=" ".join(text[:3]),
                    abstract=" ".join(text[3:]),
                    keywords=list(dict.fromkeys(text[:2])),
                    pub_year=int(rng.integers(2015, 2021)),
                    domain_tag=f"domain{t}",
                    authors=authors,
                    labs=labs,
                    views_per_year=float(np.round(rng.uniform(0, 50), 2)),
                )
            )
            truth.append(t)
            idx += 1
    return records, truth


def write_corpus_csv(records: Iterable[CorpusRecord], path: str | Path) -> dict[str, str]:
    """Write records as a CSV corpus; returns the column mapping to read it back."""
    path = Path(path)
    mapping = {f: f for f in RECORD_FIELDS}
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(RECORD_FIELDS)
        for r in records:
            writer.writerow(
                [
                    r.doc_id,
                    r.title,
                    r.abstract,
                    MULTI_SEP.join(r.keywords),
                    "" if r.pub_year is None else r.pub_year,
                    r.domain_tag or "",
                    MULTI_SEP.join(r.authors),
                    MULTI_SEP.join(r.labs),
                    "" if r.views_per_year is None else r.views_per_year,
                ]
            )
    return mapping
