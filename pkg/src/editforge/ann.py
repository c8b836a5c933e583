"""Approximate nearest-neighbor index over unit vectors: a layered
navigable-small-world graph searched by cosine similarity.

Insertion assigns each node a geometric random level; greedy descent
through upper layers finds an entry point, and a beam search (bounded by
`ef`) explores layer 0. Exact brute-force scan remains the reference
implementation elsewhere; this index trades exactness for sublinear
query cost and is validated against a configured recall floor.
"""

from __future__ import annotations

import heapq
import math
import random
from typing import Iterable, Optional

import numpy as np


class SmallWorldIndex:
    def __init__(
        self,
        dim: int,
        m: int = 16,
        ef_construction: int = 64,
        ef_search: int = 160,
        seed: int = 0,
    ) -> None:
        self.dim = dim
        self.m = m
        self.ef_construction = ef_construction
        self.ef_search = ef_search
        self._ml = 1.0 / math.log(m)
        self._rng = random.Random(seed)
        self._vectors = np.zeros((0, dim), dtype=np.float64)
        self._size = 0
        self._links: list[list[list[int]]] = []  # node -> level -> neighbor ids
        self._entry: Optional[int] = None
        self._max_level = -1

    def __len__(self) -> int:
        return self._size

    # -- storage -------------------------------------------------------

    def _ensure_capacity(self, extra: int) -> None:
        needed = self._size + extra
        if needed <= self._vectors.shape[0]:
            return
        capacity = max(needed, 2 * self._vectors.shape[0], 1024)
        grown = np.zeros((capacity, self.dim), dtype=np.float64)
        grown[: self._size] = self._vectors[: self._size]
        self._vectors = grown

    def _sims(self, ids: list[int], query: np.ndarray) -> np.ndarray:
        return self._vectors[ids] @ query

    # -- search --------------------------------------------------------

    def _greedy_descend(self, query: np.ndarray, start: int, level: int) -> int:
        """Follow best-neighbor links at one level until no improvement."""
        current = start
        current_sim = float(self._vectors[current] @ query)
        improved = True
        while improved:
            improved = False
            neighbors = self._links[current][level]
            if not neighbors:
                break
            sims = self._sims(neighbors, query)
            best = int(np.argmax(sims))
            if sims[best] > current_sim:
                current = neighbors[best]
                current_sim = float(sims[best])
                improved = True
        return current

    def _search_layer(
        self, query: np.ndarray, entries: Iterable[int], ef: int, level: int
    ) -> list[tuple[float, int]]:
        """Beam search one layer; returns up to ef (sim, id) pairs."""
        visited = set()
        candidates: list[tuple[float, int]] = []  # min-heap on -sim
        results: list[tuple[float, int]] = []  # min-heap on sim
        for node in entries:
            if node in visited:
                continue
            visited.add(node)
            sim = float(self._vectors[node] @ query)
            heapq.heappush(candidates, (-sim, node))
            heapq.heappush(results, (sim, node))
        while candidates:
            neg_sim, node = heapq.heappop(candidates)
            if results and -neg_sim < results[0][0] and len(results) >= ef:
                break
            fresh = [n for n in self._links[node][level] if n not in visited]
            if not fresh:
                continue
            visited.update(fresh)
            sims = self._sims(fresh, query)
            for neighbor, sim in zip(fresh, sims):
                sim = float(sim)
                if len(results) < ef or sim > results[0][0]:
                    heapq.heappush(candidates, (-sim, neighbor))
                    heapq.heappush(results, (sim, neighbor))
                    if len(results) > ef:
                        heapq.heappop(results)
        return sorted(results, key=lambda pair: (-pair[0], pair[1]))

    def search(self, query: np.ndarray, k: int) -> list[tuple[int, float]]:
        """Approximate top-k: list of (id, similarity), best first."""
        if self._entry is None or k <= 0:
            return []
        query = np.asarray(query, dtype=np.float64)
        current = self._entry
        for level in range(self._max_level, 0, -1):
            current = self._greedy_descend(query, current, level)
        ef = max(self.ef_search, k)
        found = self._search_layer(query, [current], ef, 0)
        return [(node, sim) for sim, node in found[:k]]

    # -- insertion -----------------------------------------------------

    def _random_level(self) -> int:
        u = self._rng.random()
        while u <= 0.0:
            u = self._rng.random()
        return int(-math.log(u) * self._ml)

    def _prune(self, node: int, level: int, cap: int) -> None:
        links = self._links[node][level]
        if len(links) <= cap:
            return
        sims = self._sims(links, self._vectors[node])
        order = np.argsort(-sims)
        self._links[node][level] = [links[i] for i in order[:cap]]

    def add(self, vector: np.ndarray) -> int:
        self._ensure_capacity(1)
        node = self._size
        self._vectors[node] = np.asarray(vector, dtype=np.float64)
        self._size += 1
        level = self._random_level()
        self._links.append([[] for _ in range(level + 1)])
        if self._entry is None:
            self._entry = node
            self._max_level = level
            return node
        query = self._vectors[node]
        current = self._entry
        for lc in range(self._max_level, level, -1):
            current = self._greedy_descend(query, current, lc)
        for lc in range(min(level, self._max_level), -1, -1):
            found = self._search_layer(query, [current], self.ef_construction, lc)
            neighbors = [n for _, n in found[: self.m]]
            self._links[node][lc] = list(neighbors)
            cap = self.m * 2 if lc == 0 else self.m
            for neighbor in neighbors:
                self._links[neighbor][lc].append(node)
                self._prune(neighbor, lc, cap)
            if found:
                current = found[0][1]
        if level > self._max_level:
            self._max_level = level
            self._entry = node
        return node

    def add_batch(self, vectors: np.ndarray) -> list[int]:
        return [self.add(vec) for vec in np.asarray(vectors, dtype=np.float64)]
