"""Independent re-implementations used to build and check fixtures.

Only the ASCII subset of the text rules is reproduced; every generated
fixture text is ASCII.
"""

import math
import re

import numpy as np

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
MASK = (1 << 64) - 1
DIM = 384


def fnv1a64(data: bytes, seed: int = FNV_OFFSET) -> int:
    h = seed
    for b in data:
        h ^= b
        h = (h * FNV_PRIME) & MASK
    return h


def hex_digest(text: str) -> str:
    return format(fnv1a64(text.encode()), "016x")


def normalize(text: str) -> str:
    return " ".join(text.lower().split())


def skill_id(instruction: str, heuristic: str) -> str:
    return hex_digest(normalize(instruction) + "\x1f" + normalize(heuristic))


_WORD = re.compile(r"[A-Za-z0-9]+")


def tokenize(text: str) -> list:
    return [t.lower() for t in _WORD.findall(text)]


def embed(text: str, dim: int = DIM) -> np.ndarray:
    v = np.zeros(dim)
    for tok in tokenize(text):
        padded = "#" + tok + "#"
        for n in (3, 4):
            for i in range(len(padded) - n + 1):
                h = fnv1a64(padded[i : i + n].encode(), FNV_OFFSET ^ n)
                v[h % dim] += -1.0 if h >> 63 else 1.0
    norm = np.linalg.norm(v)
    if norm == 0:
        v[0] = 1.0
        return v
    return v / norm


def index_text(instruction: str, heuristic: str, regions) -> str:
    out = instruction
    if heuristic:
        out += " " + heuristic
    for r in sorted(regions):
        out += " " + r
    return out


def haversine_km(lat1, lon1, lat2, lon2, radius=6371.0):
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    a = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * radius * math.asin(min(1.0, math.sqrt(a)))


class SimilarityGuard:
    """Keeps a set of unit vectors and rejects texts too close to any of them."""

    def __init__(self, limit: float):
        self.limit = limit
        self.rows = []
        self.matrix = np.zeros((0, DIM))

    def max_sim(self, vec):
        if not self.rows:
            return -1.0, -1
        sims = self.matrix @ vec
        i = int(np.argmax(sims))
        return float(sims[i]), i

    def add(self, vec):
        self.rows.append(vec)
        self.matrix = np.vstack([self.matrix, vec[None, :]])
