"""Blinded pairwise-comparison sessions and agreement reports.

Raters see only pair ids and content-hash image URLs; which method or
distortion level produced an image (its provenance) stays server-side.
"""

from __future__ import annotations

import hashlib
import io
import itertools
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np
from PIL import Image

from ..imaging import ImageGrid, rng_for
from ..metrics import MetricError, QualityScore, RatingVector, cohens_kappa

CHOICES = ("left", "right", "skip")


class PairError(ValueError):
    pass


def png_bytes(image: ImageGrid) -> bytes:
    """16-bit PNG encoding used for content addressing and serving."""
    clamped = np.clip(image.pixels, 0.0, 1.0)
    codes = np.floor(clamped * 65535 + 0.5).astype(np.uint16)
    buf = io.BytesIO()
    Image.fromarray(codes).save(buf, format="PNG")
    return buf.getvalue()


def content_hash(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()[:32]


@dataclass(frozen=True)
class SessionPair:
    pair_id: str
    left_item: str
    right_item: str

    @property
    def canonical_items(self) -> tuple[str, str]:
        return tuple(sorted((self.left_item, self.right_item)))


@dataclass
class PairSession:
    """All unordered within-group pairs, shuffled, with per-pair side flips.

    ``provenance`` and item ids never appear in client-facing payloads.
    """

    session_id: str
    pairs: list[SessionPair]
    image_hashes: dict  # item_id -> content hash
    provenance: dict  # item_id -> dict, server-side only
    seed: int = 0

    def pair(self, pair_id: str) -> SessionPair:
        for p in self.pairs:
            if p.pair_id == pair_id:
                return p
        raise PairError(f"unknown pair {pair_id!r}")

    def client_pair_payload(self, p: SessionPair) -> dict:
        return {
            "pair_id": p.pair_id,
            "left_image_url": f"/images/{self.image_hashes[p.left_item]}.png",
            "right_image_url": f"/images/{self.image_hashes[p.right_item]}.png",
        }

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "seed": self.seed,
            "pairs": [asdict(p) for p in self.pairs],
            "image_hashes": self.image_hashes,
            "provenance": self.provenance,
        }

    @staticmethod
    def from_dict(d: dict) -> "PairSession":
        return PairSession(
            session_id=d["session_id"], seed=d.get("seed", 0),
            pairs=[SessionPair(**p) for p in d["pairs"]],
            image_hashes=d["image_hashes"], provenance=d["provenance"],
        )


def make_pair_session(items, seed: int = 0, session_id: str = "session") -> PairSession:
    """items: list of (item_id, ImageGrid, provenance dict).

    Enumerates all C(n, 2) unordered pairs, shuffles their order and flips
    left/right per pair, all driven by the seed. Returns the session plus
    no image data; use ``export_session`` to materialize images.
    """
    items = list(items)
    if len(items) < 2:
        raise PairError("need at least 2 items")
    ids = [it[0] for it in items]
    if len(set(ids)) != len(ids):
        raise PairError("duplicate item ids")

    rng = rng_for(seed)
    combos = list(itertools.combinations(sorted(ids), 2))
    order = rng.permutation(len(combos))
    pairs = []
    for n, idx in enumerate(order):
        a, b = combos[idx]
        if rng.integers(0, 2) == 1:
            a, b = b, a
        pairs.append(SessionPair(pair_id=f"{session_id}-p{n:04d}", left_item=a, right_item=b))

    hashes = {item_id: content_hash(png_bytes(img)) for item_id, img, _ in items}
    provenance = {item_id: dict(prov) for item_id, _, prov in items}
    return PairSession(session_id=session_id, pairs=pairs,
                       image_hashes=hashes, provenance=provenance, seed=seed)


def export_session(session: PairSession, items, store_dir) -> None:
    """Write the session file and content-addressed PNGs under store_dir."""
    os.makedirs(os.path.join(store_dir, "images"), exist_ok=True)
    os.makedirs(os.path.join(store_dir, "sessions"), exist_ok=True)
    for item_id, img, _ in items:
        data = png_bytes(img)
        path = os.path.join(store_dir, "images", f"{content_hash(data)}.png")
        with open(path, "wb") as f:
            f.write(data)
    spath = os.path.join(store_dir, "sessions", f"{session.session_id}.json")
    with open(spath, "w") as f:
        json.dump(session.to_dict(), f, indent=2, sort_keys=True)


@dataclass(frozen=True)
class RatingRecord:
    session_id: str
    pair_id: str
    rater: str
    choice: str  # left | right | skip
    left_item: str
    right_item: str
    elapsed_ms: int = 0
    timestamp: str = ""

    def __post_init__(self):
        if self.choice not in CHOICES:
            raise PairError(f"choice must be one of {CHOICES}, got {self.choice!r}")

    def chosen_item(self) -> str | None:
        if self.choice == "skip":
            return None
        return self.left_item if self.choice == "left" else self.right_item


def _item_choices(session: PairSession, records) -> dict:
    """pair_id -> 'a' | 'b' against the canonical (sorted) pair ordering."""
    out = {}
    for rec in records:
        chosen = rec.chosen_item()
        if chosen is None:
            continue
        pair = session.pair(rec.pair_id)
        a, _b = pair.canonical_items
        out[rec.pair_id] = "a" if chosen == a else "b"
    return out


def metric_choices(session: PairSession, scores: dict, higher_is_better: bool) -> dict:
    """pair_id -> 'a' | 'b' chosen by a metric's per-item scores."""
    out = {}
    for pair in session.pairs:
        a, b = pair.canonical_items
        sa, sb = scores[a], scores[b]
        better_a = sa > sb if higher_is_better else sa < sb
        out[pair.pair_id] = "a" if better_a else "b"
    return out


def kappa_report(session: PairSession, ratings: dict, metric_scores: dict | None = None,
                 ) -> dict:
    """Cohen's kappa matrix over raters and optional metric pseudo-raters.

    ratings: rater name -> iterable of RatingRecord.
    metric_scores: metric name -> (item_id -> QualityScore); each metric
    "chooses" the better-oriented item of every pair. Kappa is computed
    over the pair subset rated (non-skip) by all parties; its size is
    reported.
    """
    choosers: dict[str, dict] = {}
    for rater, recs in sorted(ratings.items()):
        choosers[rater] = _item_choices(session, recs)
    for metric, scores in sorted((metric_scores or {}).items()):
        values = {item: s.value for item, s in scores.items()}
        orientations = {s.higher_is_better for s in scores.values()}
        if len(orientations) != 1:
            raise PairError(f"mixed score orientations for metric {metric!r}")
        choosers[metric] = metric_choices(session, values, orientations.pop())

    names = list(choosers)
    shared = set.intersection(*(set(c) for c in choosers.values())) if choosers else set()
    shared = sorted(shared)
    matrix = {}
    for i, x in enumerate(names):
        for y in names[i:]:
            if x == y:
                matrix[f"{x}|{y}"] = 1.0
                continue
            if not shared:
                raise PairError("no pairs rated by all parties")
            va = RatingVector(tuple(shared), tuple(choosers[x][p] for p in shared))
            vb = RatingVector(tuple(shared), tuple(choosers[y][p] for p in shared))
            try:
                k = cohens_kappa(va, vb)
            except MetricError:
                k = None
            matrix[f"{x}|{y}"] = k
            matrix[f"{y}|{x}"] = k
    return {
        "session_id": session.session_id,
        "parties": names,
        "n_shared_pairs": len(shared),
        "kappa": matrix,
    }
