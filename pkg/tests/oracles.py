"""Independent reference implementations used to check the package.

Nothing here imports the code under test's algorithms; each oracle recomputes its answer the slow,
obvious way.
"""

from __future__ import annotations

from collections import deque

import numpy as np

# Expected offsets, written out as literal (dx, dy) pairs.
EXPECTED_OFFSETS = {
    "at_left_of": (-3, 0),
    "at_right_of": (3, 0),
    "above": (0, -3),
    "below": (0, 3),
    "on_top_of": (0, 0),
}

# Reference per-story rows: CosSim, Afford, Div, Sat (%).
PER_STORY_ROWS = [
    (0.43, 0.45, 0.91, 78),
    (0.40, 0.33, 0.87, 67),
    (0.38, 0.55, 1.00, 67),
    (0.41, 0.36, 1.00, 67),
    (0.44, 0.43, 1.00, 78),
    (0.43, 0.45, 0.82, 89),
    (0.37, 0.36, 1.00, 67),
    (0.41, 0.27, 0.82, 78),
    (0.42, 0.50, 0.90, 78),
    (0.44, 0.54, 0.85, 56),
]
OVERALL_ROW = ("0.41", "0.42", "0.92", "72")
AGGREGATE_ROWS = {
    "Cosine similarity": ("0.41", "0.02"),
    "Affordance match": ("0.42", "0.09"),
    "Diversity": ("0.92", "0.07"),
}


def flood_fill_components(walkable: np.ndarray) -> list[int]:
    """Sizes of 4-connected components of True cells, by explicit BFS."""
    h, w = walkable.shape
    seen = [[False] * w for _ in range(h)]
    sizes = []
    for y0 in range(h):
        for x0 in range(w):
            if not walkable[y0][x0] or seen[y0][x0]:
                continue
            seen[y0][x0] = True
            queue = deque([(x0, y0)])
            n = 0
            while queue:
                x, y = queue.popleft()
                n += 1
                for nx, ny in ((x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)):
                    if 0 <= nx < w and 0 <= ny < h and walkable[ny][nx] and not seen[ny][nx]:
                        seen[ny][nx] = True
                        queue.append((nx, ny))
            sizes.append(n)
    return sizes


def relation_holds(rel: str, a: tuple[int, int, int], b: tuple[int, int, int]) -> bool:
    """Relation definitions from first principles: y grows downward, layers stack upward."""
    (ax, ay, al), (bx, by, bl) = a, b
    dx, dy = ax - bx, ay - by
    table = {
        "above": dy < 0,
        "below": dy > 0,
        "at_left_of": dx < 0,
        "at_right_of": dx > 0,
        "on_top_of": dx == 0 and dy == 0 and al > bl,
    }
    return table[rel]


def brute_force_top1(matrix: np.ndarray, ids: list[str], query: np.ndarray, tile_affs: list[str],
                     query_aff: str | None, lam: float) -> str:
    """Best tile by explicit loop: cosine (vectors are unit) plus lam if affordances agree; ties -> smallest id."""
    best_id, best_score = None, -np.inf
    for row, tid, aff in zip(matrix, ids, tile_affs):
        score = float(np.dot(row, query))
        if query_aff is not None and aff == query_aff:
            score += lam
        if score > best_score + 1e-12 or (abs(score - best_score) <= 1e-12 and tid < best_id):
            best_id, best_score = tid, score
    return best_id


def max_satisfiable(n_objects: int, triples: list[tuple[int, str, int]], layers: list[int], size: int) -> int:
    """Most triples any placement on a size x size open grid can satisfy at once (exhaustive)."""
    cells = [(x, y) for y in range(size) for x in range(size)]
    best = 0

    def rec(i, placed):
        nonlocal best
        if i == n_objects:
            pos = [(x, y, layers[k]) for k, (x, y) in enumerate(placed)]
            best = max(best, sum(relation_holds(r, pos[a], pos[b]) for a, r, b in triples))
            return
        for c in cells:
            if any(c == p and layers[k] == layers[i] for k, p in enumerate(placed)):
                continue
            rec(i + 1, placed + [c])

    rec(0, [])
    return best
