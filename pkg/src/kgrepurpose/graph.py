"""Typed knowledge-graph store: TSV loading, adjacency queries and
free-text disease mapping."""

from __future__ import annotations

import json
import logging
import zlib
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol

import numpy as np

from .exceptions import EncodingError, NotFoundError, ParseError, ValidationError

logger = logging.getLogger(__name__)

ENTITY_KINDS = ("drug", "disease", "gene", "pathway", "phenotype", "other")

# PrimeKG node-type spellings folded onto the six kinds used here.
_KIND_ALIASES = {
    "gene/protein": "gene",
    "protein": "gene",
    "effect/phenotype": "phenotype",
    "biological_process": "pathway",
    "molecular_function": "pathway",
    "cellular_component": "pathway",
}

GRAPH_CACHE_FORMAT = "kgrepurpose-graph"
GRAPH_CACHE_VERSION = 1


def normalize_kind(kind: str) -> str:
    k = kind.strip().lower()
    k = _KIND_ALIASES.get(k, k)
    return k if k in ENTITY_KINDS else "other"


@dataclass(frozen=True, order=True)
class Entity:
    id: str
    name: str
    kind: str


@dataclass(frozen=True, order=True)
class Triple:
    head: str
    relation: str
    tail: str
    article_count: int = 0

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.head, self.relation, self.tail)


class Graph:
    """Immutable typed multigraph of relation-labelled triples.

    Triples are unique on ``(head, relation, tail)``. ``adjacency`` maps each
    entity id to the indices of its incident triples (both directions).
    """

    def __init__(self, entities: Iterable[Entity], triples: Iterable[Triple]):
        self.entities: dict[str, Entity] = {}
        for e in entities:
            if not e.name:
                raise ValidationError(f"entity {e.id!r} has an empty name")
            if e.id in self.entities:
                raise ValidationError(f"duplicate entity id {e.id!r}")
            self.entities[e.id] = e
        self.triples: tuple[Triple, ...] = tuple(triples)
        self._index: dict[tuple[str, str, str], int] = {}
        self.adjacency: dict[str, list[int]] = {eid: [] for eid in self.entities}
        for i, t in enumerate(self.triples):
            for end in (t.head, t.tail):
                if end not in self.entities:
                    raise ValidationError(f"triple {t.key} references unknown entity {end!r}")
            if t.key in self._index:
                raise ValidationError(f"duplicate triple {t.key}")
            if t.article_count < 0:
                raise ValidationError(f"negative article_count on {t.key}")
            self._index[t.key] = i
            self.adjacency[t.head].append(i)
            if t.tail != t.head:
                self.adjacency[t.tail].append(i)
        self.name_index: dict[str, list[str]] = {}
        for eid in sorted(self.entities):
            key = _name_key(self.entities[eid].name)
            self.name_index.setdefault(key, []).append(eid)

    def __len__(self):
        return len(self.triples)

    def __contains__(self, key) -> bool:
        if isinstance(key, Triple):
            key = key.key
        return tuple(key) in self._index

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return self.entities == other.entities and sorted(self.triples) == sorted(other.triples)

    def __repr__(self):
        return f"Graph(entities={len(self.entities)}, triples={len(self.triples)})"

    @property
    def relations(self) -> list[str]:
        return sorted({t.relation for t in self.triples})

    def entity(self, eid: str) -> Entity:
        try:
            return self.entities[eid]
        except KeyError:
            raise NotFoundError(f"unknown entity {eid!r}") from None

    def entities_of_kind(self, kind: str) -> list[str]:
        return sorted(eid for eid, e in self.entities.items() if e.kind == kind)

    def triple(self, head: str, relation: str, tail: str) -> Triple:
        try:
            return self.triples[self._index[(head, relation, tail)]]
        except KeyError:
            raise NotFoundError(f"no triple ({head}, {relation}, {tail})") from None

    def degree(self, eid: str) -> int:
        return len(self.adjacency[self.entity(eid).id])

    def to_dict(self) -> dict:
        return {
            "format": GRAPH_CACHE_FORMAT,
            "version": GRAPH_CACHE_VERSION,
            "entities": [[e.id, e.name, e.kind] for e in sorted(self.entities.values())],
            "triples": [[t.head, t.relation, t.tail, t.article_count] for t in self.triples],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Graph":
        if data.get("format") != GRAPH_CACHE_FORMAT:
            raise ParseError("not a graph cache file")
        if data.get("version") != GRAPH_CACHE_VERSION:
            raise ParseError(f"unsupported graph cache version {data.get('version')!r}")
        ents = [Entity(i, n, k) for i, n, k in data["entities"]]
        triples = [Triple(h, r, t, int(n)) for h, r, t, n in data["triples"]]
        return cls(ents, triples)


def _name_key(text: str) -> str:
    return text.strip().casefold()


def load_graph(triples_path, names_path=None) -> Graph:
    """Read a triples TSV into a :class:`Graph`.

    Columns: head_id, head_kind, relation, tail_id, tail_kind[, article_count].
    Duplicate triples keep the largest article count. Entity kinds come from
    the first occurrence; a later conflicting kind is an error. ``names_path``
    optionally supplies ``id<TAB>name`` rows; names default to ids.
    """
    path = Path(triples_path)
    if not path.exists():
        raise NotFoundError(f"triples file not found: {path}")
    kinds: dict[str, str] = {}
    order: list[tuple[str, str, str]] = []
    counts: dict[tuple[str, str, str], int] = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) not in (5, 6):
                raise ParseError(f"expected 6 tab-separated columns, got {len(cols)}", lineno)
            head, hkind, rel, tail, tkind = (c.strip() for c in cols[:5])
            if not head or not rel or not tail:
                raise ParseError("empty head, relation or tail", lineno)
            count = 0
            if len(cols) == 6 and cols[5].strip():
                try:
                    count = int(cols[5])
                except ValueError:
                    raise ParseError(f"non-integer article_count {cols[5]!r}", lineno) from None
                if count < 0:
                    raise ParseError(f"negative article_count {count}", lineno)
            for eid, kind in ((head, hkind), (tail, tkind)):
                kind = normalize_kind(kind)
                prev = kinds.setdefault(eid, kind)
                if prev != kind:
                    raise ValidationError(
                        f"line {lineno}: entity {eid!r} has kind {kind!r}, previously {prev!r}"
                    )
            key = (head, rel, tail)
            if key in counts:
                counts[key] = max(counts[key], count)
            else:
                counts[key] = count
                order.append(key)

    names: dict[str, str] = {}
    if names_path is not None:
        with Path(names_path).open(encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.rstrip("\r\n")
                if not line.strip():
                    continue
                cols = line.split("\t")
                if len(cols) != 2 or not cols[1].strip():
                    raise ParseError("expected id<TAB>name", lineno)
                names[cols[0].strip()] = cols[1].strip()

    entities = [Entity(eid, names.get(eid, eid), kind) for eid, kind in kinds.items()]
    triples = [Triple(h, r, t, counts[(h, r, t)]) for h, r, t in order]
    return Graph(entities, triples)


def write_graph_tsv(g: Graph, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for t in g.triples:
            hk = g.entities[t.head].kind
            tk = g.entities[t.tail].kind
            fh.write(f"{t.head}\t{hk}\t{t.relation}\t{t.tail}\t{tk}\t{t.article_count}\n")


def save_graph_cache(g: Graph, path) -> None:
    Path(path).write_text(json.dumps(g.to_dict(), indent=1) + "\n", encoding="utf-8")


def load_graph_cache(path) -> Graph:
    path = Path(path)
    if not path.exists():
        raise NotFoundError(f"graph cache not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"graph cache is not valid JSON: {exc}") from None
    return Graph.from_dict(data)


def neighbors(g: Graph, e: str, exclude=frozenset()) -> list[tuple[Triple, str]]:
    """Incident triples of ``e`` in either direction, skipping ``exclude``d
    relations, sorted by (relation, other endpoint)."""
    g.entity(e)
    out = []
    for i in g.adjacency[e]:
        t = g.triples[i]
        if t.relation in exclude:
            continue
        other = t.tail if t.head == e else t.head
        out.append((t, other))
    out.sort(key=lambda item: (item[0].relation, item[1], item[0].head, item[0].tail))
    return out


class TextEncoder(Protocol):
    dim: int

    def encode(self, text: str) -> np.ndarray: ...


class TrigramEncoder:
    """Hashed character-trigram term-frequency encoder.

    Text is case-folded, whitespace-collapsed and padded with one space on
    each side before trigrams are taken. Buckets come from CRC32, so vectors
    are stable across processes.
    """

    def __init__(self, dim: int = 4096):
        if dim < 1:
            raise ValidationError("dim must be positive")
        self.dim = dim

    @staticmethod
    def trigrams(text: str) -> Counter:
        s = " " + " ".join(text.casefold().split()) + " "
        return Counter(s[i : i + 3] for i in range(len(s) - 2))

    def encode(self, text: str) -> np.ndarray:
        v = np.zeros(self.dim)
        for gram, n in self.trigrams(text).items():
            v[zlib.crc32(gram.encode("utf-8")) % self.dim] += n
        return v


def _unit(v: np.ndarray, what: str) -> np.ndarray:
    norm = float(np.linalg.norm(v))
    if norm == 0.0 or not np.isfinite(norm):
        raise EncodingError(f"zero-norm encoding for {what!r}")
    return v / norm


def map_disease(g: Graph, text: str, enc: TextEncoder | None = None) -> str:
    """Map free text to a disease entity id.

    A case-insensitive exact name match wins; otherwise the disease whose
    encoded name has the highest cosine similarity to the encoded text.
    Ties go to the smallest id.
    """
    diseases = g.entities_of_kind("disease")
    if not diseases:
        raise NotFoundError("graph has no disease entities")
    for eid in g.name_index.get(_name_key(text), []):
        if g.entities[eid].kind == "disease":
            return eid
    enc = enc or TrigramEncoder()
    q = _unit(enc.encode(text), text)
    best_id, best = None, -np.inf
    for eid in diseases:
        name = g.entities[eid].name
        sim = float(q @ _unit(enc.encode(name), name))
        if sim > best:
            best_id, best = eid, sim
    logger.debug("mapped %r to %s by similarity %.4f", text, best_id, best)
    return best_id
