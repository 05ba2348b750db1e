"""Receptive-field tensor encoder: fixed-shape CNN input from arbitrary CPGs.

The scheme: rank all nodes canonically, pick every s-th of the top ranks as
field centers (w of them), grow each center into a k-node neighborhood by
breadth-first search over the union multigraph, normalize the neighborhood
order, and embed every slot as a d-vector (one-hot node kind plus a bucketed
attribute hash).  Shape is always w x k x d; missing structure pads with
all-zero dummy slots, recorded in the field mask.

Ranking uses WL color strings built from content hashes, so it does not
depend on node ids until the final tie-break; graphs whose rank keys are
tie-free encode identically under any id permutation.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .graphs import KIND_ORDINAL, KIND_VOCAB, Cpg

ATTR_BUCKETS = 8
FEATURE_DIM = len(KIND_VOCAB) + ATTR_BUCKETS  # 19 + 8 = 27

DUMMY = -1  # node-slot placeholder for padding


class ConfigError(Exception):
    """Encoder configuration with non-positive dimensions."""


@dataclass(frozen=True)
class EncoderConfig:
    w: int = 32  # field count (ranked node sequence length)
    k: int = 8  # receptive field size
    s: int = 1  # stride over the ranked sequence
    h_rank: int = 2  # WL iterations used for ranking
    d: int = FEATURE_DIM

    def validate(self):
        if self.w < 1 or self.k < 1 or self.s < 1 or self.h_rank < 0:
            raise ConfigError(f"non-positive encoder dimension in {self}")
        if self.d != FEATURE_DIM:
            raise ConfigError(f"feature dimension must be {FEATURE_DIM}, got {self.d}")

    def to_dict(self) -> dict:
        return {"w": self.w, "k": self.k, "s": self.s, "h_rank": self.h_rank, "d": self.d}

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderConfig":
        cfg = cls(**{key: int(d[key]) for key in ("w", "k", "s", "h_rank", "d") if key in d})
        cfg.validate()
        return cfg


@dataclass
class FieldTensor:
    data: np.ndarray  # (w, k, d) float64
    mask: np.ndarray  # (w,) bool, True where the field is a dummy


def fnv1a(text: str) -> int:
    """Stable 64-bit FNV-1a; Python's hash() is seed-randomized, this is not."""
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def _wl_colors(cpg: Cpg, h_rank: int) -> dict[int, str]:
    """Content-hashed WL color strings after h_rank refinements.

    Colors depend only on structure and labels, never on node ids, so equal
    structures yield equal colors under permutation.
    """
    colors = {n.id: f"k:{n.kind}" for n in cpg.nodes}
    neighborhoods = {
        n.id: cpg.undirected_neighbors(n.id) for n in cpg.nodes
    }
    for _ in range(h_rank):
        new = {}
        for nid, color in colors.items():
            pairs = sorted((kind, colors[other]) for kind, other in neighborhoods[nid])
            sig = color + "|" + ",".join(f"{k}:{c}" for k, c in pairs)
            new[nid] = hashlib.sha1(sig.encode("utf-8")).hexdigest()
        colors = new
    return colors


def _rank_key(cpg: Cpg, h_rank: int) -> dict[int, tuple]:
    colors = _wl_colors(cpg, h_rank)
    return {
        n.id: (colors[n.id], -cpg.degree(n.id), KIND_ORDINAL[n.kind], n.id)
        for n in cpg.nodes
    }


def canonical_ranking(cpg: Cpg, h_rank: int = 2) -> list[int]:
    """Total order over node ids: WL color, then degree desc, kind, id."""
    if not cpg.nodes:
        raise ValueError("empty graph has no ranking")
    key = _rank_key(cpg, h_rank)
    return sorted((n.id for n in cpg.nodes), key=lambda nid: key[nid])


def ranking_is_tie_free(cpg: Cpg, h_rank: int = 2) -> bool:
    """True when rank keys are unique before the node-id tie-break."""
    key = _rank_key(cpg, h_rank)
    prefixes = [k[:3] for k in key.values()]
    return len(set(prefixes)) == len(prefixes)


def select_sequence(order: list[int], w: int, s: int) -> list[int]:
    """Ranked nodes at indices 0, s, 2s, ... padded with dummies to length w."""
    picked = [order[i] for i in range(0, len(order), s)]
    picked = picked[:w]
    return picked + [DUMMY] * (w - len(picked))


def assemble_field(cpg: Cpg, center: int, k: int, order: list[int]) -> list[int]:
    """k-slot receptive field around a center node.

    BFS over the undirected union multigraph, whole depth layers at a time,
    until at least k nodes are collected or the component is exhausted; then
    order by (depth, canonical rank) and truncate or pad.
    """
    rank_of = {nid: i for i, nid in enumerate(order)}
    depth = {center: 0}
    frontier = [center]
    collected = [center]
    d = 0
    while len(collected) < k and frontier:
        d += 1
        nxt = []
        for nid in frontier:
            for _, other in cpg.undirected_neighbors(nid):
                if other not in depth:
                    depth[other] = d
                    nxt.append(other)
                    collected.append(other)
        frontier = nxt
    collected.sort(key=lambda nid: (depth[nid], rank_of[nid]))
    field = collected[:k]
    return field + [DUMMY] * (k - len(field))


def encode_features(cpg: Cpg, slot: int) -> np.ndarray:
    """d-vector for one node slot: one-hot kind block + attr hash bucket."""
    vec = np.zeros(FEATURE_DIM)
    if slot == DUMMY:
        return vec
    node = cpg.node(slot)
    vec[KIND_ORDINAL[node.kind]] = 1.0
    if node.attr is not None:
        vec[len(KIND_VOCAB) + fnv1a(node.attr) % ATTR_BUCKETS] = 1.0
    return vec


def build_tensor(cpg: Cpg, config: EncoderConfig) -> FieldTensor:
    """Full encoder: ranking -> sequence -> fields -> features."""
    config.validate()
    order = canonical_ranking(cpg, config.h_rank)
    centers = select_sequence(order, config.w, config.s)
    data = np.zeros((config.w, config.k, config.d))
    mask = np.zeros(config.w, dtype=bool)
    for t, center in enumerate(centers):
        if center == DUMMY:
            mask[t] = True
            continue
        field = assemble_field(cpg, center, config.k, order)
        for slot_idx, slot in enumerate(field):
            data[t, slot_idx] = encode_features(cpg, slot)
    return FieldTensor(data=data, mask=mask)


_MAGIC = b"PSAN"


def tensor_to_bytes(tensor: FieldTensor) -> bytes:
    """Debug dump: 16-byte header (magic, w, k, d as u32 LE) + f32 LE data."""
    w, k, d = tensor.data.shape
    header = _MAGIC + struct.pack("<III", w, k, d)
    return header + tensor.data.astype("<f4").tobytes()


def tensor_from_bytes(blob: bytes) -> FieldTensor:
    if blob[:4] != _MAGIC:
        raise ValueError("not a receptive-field tensor dump")
    w, k, d = struct.unpack("<III", blob[4:16])
    data = np.frombuffer(blob[16:], dtype="<f4").reshape(w, k, d).astype(np.float64)
    mask = np.array([not data[t].any() for t in range(w)], dtype=bool)
    return FieldTensor(data=data, mask=mask)
