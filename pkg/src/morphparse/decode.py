"""Maximum spanning arborescence decoding (Chu-Liu-Edmonds) and a brute-force
reference used to test it.

Score matrices are indexed ``scores[dependent, head]`` over nodes 0..n where
node 0 is the artificial root; row 0 and the diagonal are ignored.
"""

from __future__ import annotations

import itertools

import numpy as np

NEG_INF = -np.inf


def _find_cycle(heads: np.ndarray) -> list[int] | None:
    n = len(heads)
    color = np.zeros(n, dtype=np.int8)  # 0 new, 1 on current path, 2 done
    color[0] = 2
    for start in range(1, n):
        path = []
        v = start
        while color[v] == 0:
            color[v] = 1
            path.append(v)
            v = heads[v]
        if color[v] == 1:
            return path[path.index(v):]
        for p in path:
            color[p] = 2
    return None


def _cle(scores: np.ndarray) -> np.ndarray:
    n = scores.shape[0]
    heads = np.zeros(n, dtype=np.int64)
    heads[1:] = np.argmax(scores[1:], axis=1)
    cycle = _find_cycle(heads)
    if cycle is None:
        return heads
    in_cycle = np.zeros(n, dtype=bool)
    in_cycle[cycle] = True
    rest = np.flatnonzero(~in_cycle)  # always contains 0
    cyc = np.asarray(cycle)
    m = len(rest)
    c = m  # index of the contracted node
    sub = np.full((m + 1, m + 1), NEG_INF)
    sub[:m, :m] = scores[np.ix_(rest, rest)]
    # edges leaving the cycle: best cycle member as head for each outside dependent
    out_scores = scores[np.ix_(rest, cyc)]
    out_best = np.argmax(out_scores, axis=1)
    sub[:m, c] = out_scores[np.arange(m), out_best]
    # edges entering the cycle: gain of breaking the cycle at each member
    cycle_edge = scores[cyc, heads[cyc]]
    in_scores = scores[np.ix_(cyc, rest)] - cycle_edge[:, None]
    in_best = np.argmax(in_scores, axis=0)
    sub[c, :m] = in_scores[in_best, np.arange(m)]
    sub[0, :] = NEG_INF
    np.fill_diagonal(sub, NEG_INF)

    sub_heads = _cle(sub)

    result = heads.copy()
    for k, node in enumerate(rest):
        if node == 0:
            continue
        h = sub_heads[k]
        result[node] = cyc[out_best[k]] if h == c else rest[h]
    entry_head = sub_heads[c]
    breaker = cyc[in_best[entry_head]]
    result[breaker] = rest[entry_head]
    return result


def _prepare(scores) -> np.ndarray:
    s = np.array(scores, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError(f"score matrix must be square, got {s.shape}")
    s[0, :] = NEG_INF
    np.fill_diagonal(s, NEG_INF)
    return s


def decode_cle(scores, single_root: bool = False) -> list[int]:
    """Heads (index 0 first, always 0) of the maximum spanning arborescence.

    With ``single_root`` only one token may attach to the root: each root
    child candidate is tried in turn and the best tree kept.
    """
    s = _prepare(scores)
    n = s.shape[0]
    if n == 1:
        return [0]
    heads = _cle(s)
    if single_root and int(np.sum(heads[1:] == 0)) > 1:
        best, best_score = None, NEG_INF
        for r in range(1, n):
            t = s.copy()
            t[1:, 0] = NEG_INF
            t[r, 0] = s[r, 0]
            cand = _cle(t)
            sc = tree_score(s, cand)
            if sc > best_score:
                best, best_score = cand, sc
        heads = best
    return [int(h) for h in heads]


def tree_score(scores, heads) -> float:
    s = np.asarray(scores, dtype=np.float64)
    return float(sum(s[i, heads[i]] for i in range(1, len(heads))))


def is_tree(heads) -> bool:
    heads = list(heads)
    n = len(heads)
    if n == 0 or heads[0] != 0:
        return False
    if any(not 0 <= h < n or h == i for i, h in enumerate(heads) if i > 0):
        return False
    return _find_cycle(np.asarray(heads)) is None


def brute_force_max(scores, single_root: bool = False) -> tuple[float, list[int]]:
    """Exhaustively search every head assignment (feasible for n <= 6)."""
    s = _prepare(scores)
    n = s.shape[0] - 1
    best, best_heads = NEG_INF, None
    choices = [[j for j in range(n + 1) if j != i] for i in range(1, n + 1)]
    for assign in itertools.product(*choices):
        heads = (0,) + assign
        if single_root and sum(1 for h in assign if h == 0) != 1:
            continue
        if _find_cycle(np.asarray(heads)) is not None:
            continue
        sc = sum(s[i, heads[i]] for i in range(1, n + 1))
        if sc > best:
            best, best_heads = sc, list(heads)
    return float(best), best_heads
