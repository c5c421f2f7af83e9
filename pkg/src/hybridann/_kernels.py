"""Numba kernels for graph construction, pruning, and routing.

All kernels treat `features` as float32 (n, m), `attrs` as int32 (n, l),
and adjacency as fixed-capacity row arrays sorted ascending by stored fused
distance with (distance, id) tie-breaking. Distances accumulate in float64.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange


@njit(inline="always")
def _pair_dist(features, attrs, i, j, inv_alpha):
    s_v = 0.0
    for t in range(features.shape[1]):
        d = np.float64(features[i, t]) - np.float64(features[j, t])
        s_v += d * d
    s_a = 0.0
    for t in range(attrs.shape[1]):
        s_a += abs(np.float64(attrs[i, t]) - np.float64(attrs[j, t]))
    return np.sqrt(s_v) * (1.0 + s_a * inv_alpha)


@njit(inline="always")
def _query_dist(features, attrs, v, qfeat, qattr, qmask, inv_alpha):
    s_v = 0.0
    for t in range(features.shape[1]):
        d = np.float64(features[v, t]) - qfeat[t]
        s_v += d * d
    s_a = 0.0
    for t in range(attrs.shape[1]):
        s_a += qmask[t] * abs(np.float64(attrs[v, t]) - qattr[t])
    return np.sqrt(s_v) * (1.0 + s_a * inv_alpha)


@njit(inline="always")
def _heap_push(nbr_ids, nbr_dists, nbr_flags, row, cand, d):
    """Replace row's farthest entry with (cand, d) if strictly better.

    Returns 1 on replacement. Rejects self-loops, duplicates, and candidates
    not beating the current worst under (distance, id) ordering.
    """
    if cand == row:
        return 0
    # compare in float32, the stored precision, so ordering stays consistent
    d = np.float32(d)
    g = nbr_ids.shape[1]
    wd = nbr_dists[row, g - 1]
    if d > wd or (d == wd and cand >= nbr_ids[row, g - 1]):
        return 0
    for t in range(g):
        if nbr_ids[row, t] == cand:
            return 0
    pos = g - 1
    while pos > 0 and (
        nbr_dists[row, pos - 1] > d
        or (nbr_dists[row, pos - 1] == d and nbr_ids[row, pos - 1] > cand)
    ):
        nbr_ids[row, pos] = nbr_ids[row, pos - 1]
        nbr_dists[row, pos] = nbr_dists[row, pos - 1]
        nbr_flags[row, pos] = nbr_flags[row, pos - 1]
        pos -= 1
    nbr_ids[row, pos] = cand
    nbr_dists[row, pos] = np.float32(d)
    nbr_flags[row, pos] = 1
    return 1


@njit(cache=True)
def compute_row_distances(features, attrs, nbr_ids, inv_alpha):
    n, g = nbr_ids.shape
    out = np.empty((n, g), dtype=np.float32)
    for i in prange(n):
        for t in range(g):
            out[i, t] = _pair_dist(features, attrs, i, nbr_ids[i, t], inv_alpha)
    return out


@njit(cache=True)
def build_candidates(nbr_ids, nbr_flags, gamma_new):
    """Split each node's list into this iteration's new/old candidate sets.

    Forward scan follows list order: the first gamma_new new-flagged entries
    are sampled (and marked old); old-flagged entries seen before the break
    go to the old set. Reverse edges are then unioned in while capacity
    (gamma_new for new, gamma for old) remains.
    """
    n, g = nbr_ids.shape
    new_cand = np.full((n, gamma_new), -1, dtype=np.int32)
    old_cand = np.full((n, g), -1, dtype=np.int32)
    new_counts = np.zeros(n, dtype=np.int32)
    old_counts = np.zeros(n, dtype=np.int32)
    for i in range(n):
        c = 0
        for t in range(g):
            j = nbr_ids[i, t]
            if nbr_flags[i, t] == 1:
                new_cand[i, c] = j
                nbr_flags[i, t] = 0
                c += 1
                if c >= gamma_new:
                    break
            else:
                if old_counts[i] < g:
                    old_cand[i, old_counts[i]] = j
                    old_counts[i] += 1
        new_counts[i] = c
    fwd_new = new_counts.copy()
    fwd_old = old_counts.copy()
    for i in range(n):
        for x in range(fwd_new[i]):
            j = new_cand[i, x]
            if new_counts[j] < gamma_new:
                dup = False
                for t in range(new_counts[j]):
                    if new_cand[j, t] == i:
                        dup = True
                        break
                if not dup:
                    new_cand[j, new_counts[j]] = i
                    new_counts[j] += 1
        for x in range(fwd_old[i]):
            j = old_cand[i, x]
            if old_counts[j] < g:
                dup = False
                for t in range(old_counts[j]):
                    if old_cand[j, t] == i:
                        dup = True
                        break
                if not dup:
                    old_cand[j, old_counts[j]] = i
                    old_counts[j] += 1
    return new_cand, new_counts, old_cand, old_counts


@njit(cache=True)
def local_join(
    features,
    attrs,
    inv_alpha,
    new_cand,
    new_counts,
    old_cand,
    old_counts,
    nbr_ids,
    nbr_dists,
    nbr_flags,
):
    """One reverse-neighbor join pass; returns the number of edge replacements."""
    n = new_cand.shape[0]
    changes = 0
    for i in range(n):
        na = new_counts[i]
        nb = old_counts[i]
        for x in range(na):
            j = new_cand[i, x]
            for y in range(x + 1, na):
                k = new_cand[i, y]
                if j == k:
                    continue
                d = _pair_dist(features, attrs, j, k, inv_alpha)
                changes += _heap_push(nbr_ids, nbr_dists, nbr_flags, j, k, d)
                changes += _heap_push(nbr_ids, nbr_dists, nbr_flags, k, j, d)
            for y in range(nb):
                k = old_cand[i, y]
                if j == k:
                    continue
                d = _pair_dist(features, attrs, j, k, inv_alpha)
                changes += _heap_push(nbr_ids, nbr_dists, nbr_flags, j, k, d)
                changes += _heap_push(nbr_ids, nbr_dists, nbr_flags, k, j, d)
    return changes


@njit(cache=True, parallel=True)
def brute_force_topk(features, attrs, inv_alpha, sample_ids, k):
    """Exact k nearest neighbors under the fused metric for each sampled node."""
    s = sample_ids.shape[0]
    n = features.shape[0]
    out_ids = np.full((s, k), -1, dtype=np.int32)
    for si in prange(s):
        u = sample_ids[si]
        best_d = np.full(k, np.inf, dtype=np.float64)
        best_i = np.full(k, n, dtype=np.int64)
        for v in range(n):
            if v == u:
                continue
            d = _pair_dist(features, attrs, u, v, inv_alpha)
            wd = best_d[k - 1]
            if d > wd or (d == wd and v >= best_i[k - 1]):
                continue
            pos = k - 1
            while pos > 0 and (
                best_d[pos - 1] > d or (best_d[pos - 1] == d and best_i[pos - 1] > v)
            ):
                best_d[pos] = best_d[pos - 1]
                best_i[pos] = best_i[pos - 1]
                pos -= 1
            best_d[pos] = d
            best_i[pos] = v
        for t in range(k):
            out_ids[si, t] = best_i[t] if best_i[t] < n else -1
    return out_ids


@njit(cache=True)
def graph_quality(nbr_ids, nbr_counts, sample_ids, gt_ids):
    """Fraction of ground-truth k-NN found in the current lists, sample mean."""
    s = sample_ids.shape[0]
    k = gt_ids.shape[1]
    total = 0.0
    for si in range(s):
        u = sample_ids[si]
        c = min(k, nbr_counts[u])
        hits = 0
        for t in range(c):
            x = nbr_ids[u, t]
            for y in range(k):
                if gt_ids[si, y] == x:
                    hits += 1
                    break
        total += hits / k
    return total / s


@njit(inline="always")
def _attrs_equal(attrs, a, b):
    for t in range(attrs.shape[1]):
        if attrs[a, t] != attrs[b, t]:
            return False
    return True


@njit(inline="always")
def _diff_cosine(features, s, p, k):
    """Cosine of the angle between feature-space offsets (p - s) and (k - s).

    Zero-length offsets (exact duplicate points) count as maximally
    redundant: cosine 1.
    """
    dot = 0.0
    np2 = 0.0
    nk2 = 0.0
    for t in range(features.shape[1]):
        dp = np.float64(features[p, t]) - np.float64(features[s, t])
        dk = np.float64(features[k, t]) - np.float64(features[s, t])
        dot += dp * dk
        np2 += dp * dp
        nk2 += dk * dk
    if np2 == 0.0 or nk2 == 0.0:
        return 1.0
    return dot / np.sqrt(np2 * nk2)


@njit(cache=True)
def count_in_degrees(nbr_ids, nbr_counts):
    n = nbr_ids.shape[0]
    in_deg = np.zeros(n, dtype=np.int64)
    for i in range(n):
        for t in range(nbr_counts[i]):
            in_deg[nbr_ids[i, t]] += 1
    return in_deg


@njit(cache=True)
def prune_pass(features, attrs, nbr_ids, nbr_dists, nbr_counts, in_deg, sigma):
    """Drop angularly redundant same-attribute neighbors, closest kept first.

    An edge s->p is dropped only when some already-selected k has
    cosine(p - s, k - s) > sigma, identical attributes to p, and p keeps
    in-degree >= 1 afterwards. Cross-attribute neighbors are never dropped.
    """
    n = nbr_ids.shape[0]
    keep = np.zeros(nbr_ids.shape[1], dtype=np.uint8)
    for s in range(n):
        cnt = nbr_counts[s]
        if cnt <= 1:
            continue
        for t in range(cnt):
            keep[t] = 0
        keep[0] = 1
        for t in range(1, cnt):
            p = nbr_ids[s, t]
            redundant = False
            for u in range(t):
                if keep[u] == 0:
                    continue
                k = nbr_ids[s, u]
                if _attrs_equal(attrs, p, k) and _diff_cosine(features, s, p, k) > sigma:
                    redundant = True
                    break
            if redundant and in_deg[p] >= 2:
                in_deg[p] -= 1
            else:
                keep[t] = 1
        w = 0
        for t in range(cnt):
            if keep[t]:
                nbr_ids[s, w] = nbr_ids[s, t]
                nbr_dists[s, w] = nbr_dists[s, t]
                w += 1
        nbr_counts[s] = w


@njit
def _try_insert_edge(features, attrs, nbr_ids, nbr_dists, nbr_counts, in_deg, j, cand, d, sigma):
    """Insert edge j->cand, re-pruning j's list on overflow.

    On overflow the combined list is redundancy-pruned under the in-degree
    safeguard; if it still exceeds capacity, the farthest entry whose target
    keeps in-degree >= 1 is dropped (dropping cand itself rejects the
    insertion, which costs nothing since the edge never existed).
    Returns 1 if cand ends up in j's list.
    """
    d = np.float32(d)  # stored precision; keeps row ordering consistent
    g = nbr_ids.shape[1]
    cj = nbr_counts[j]
    for t in range(cj):
        if nbr_ids[j, t] == cand:
            return 0
    if cj < g:
        pos = cj
        while pos > 0 and (
            nbr_dists[j, pos - 1] > d
            or (nbr_dists[j, pos - 1] == d and nbr_ids[j, pos - 1] > cand)
        ):
            nbr_ids[j, pos] = nbr_ids[j, pos - 1]
            nbr_dists[j, pos] = nbr_dists[j, pos - 1]
            pos -= 1
        nbr_ids[j, pos] = cand
        nbr_dists[j, pos] = np.float32(d)
        nbr_counts[j] = cj + 1
        in_deg[cand] += 1
        return 1
    # full: merge cand into a scratch list of size g + 1, then re-prune
    tmp_ids = np.empty(g + 1, dtype=np.int64)
    tmp_dists = np.empty(g + 1, dtype=np.float64)
    pos = cj
    for t in range(cj):
        tmp_ids[t] = nbr_ids[j, t]
        tmp_dists[t] = nbr_dists[j, t]
    while pos > 0 and (
        tmp_dists[pos - 1] > d or (tmp_dists[pos - 1] == d and tmp_ids[pos - 1] > cand)
    ):
        tmp_ids[pos] = tmp_ids[pos - 1]
        tmp_dists[pos] = tmp_dists[pos - 1]
        pos -= 1
    tmp_ids[pos] = cand
    tmp_dists[pos] = d
    total = cj + 1
    keep = np.ones(total, dtype=np.uint8)
    kept = 1  # closest entry is always retained
    for t in range(1, total):
        p = tmp_ids[t]
        redundant = False
        for u in range(t):
            if keep[u] == 0:
                continue
            k = tmp_ids[u]
            if _attrs_equal(attrs, p, k) and _diff_cosine(features, j, p, k) > sigma:
                redundant = True
                break
        if redundant and (p == cand or in_deg[p] >= 2):
            keep[t] = 0
            if p != cand:
                in_deg[p] -= 1
        else:
            kept += 1
    if kept > g:
        # capacity still exceeded by one: drop the farthest safe entry
        for t in range(total - 1, -1, -1):
            if keep[t] == 0:
                continue
            p = tmp_ids[t]
            if p == cand:
                keep[t] = 0
                break
            if in_deg[p] >= 2:
                keep[t] = 0
                in_deg[p] -= 1
                break
    w = 0
    inserted = 0
    for t in range(total):
        if keep[t]:
            nbr_ids[j, w] = tmp_ids[t]
            nbr_dists[j, w] = np.float32(tmp_dists[t])
            if tmp_ids[t] == cand:
                inserted = 1
            w += 1
    nbr_counts[j] = w
    if inserted:
        in_deg[cand] += 1
    return inserted


@njit(cache=True)
def reinforce_pass(features, attrs, nbr_ids, nbr_dists, nbr_counts, in_deg, sigma):
    """Attempt to mirror every surviving edge s->j as j->s."""
    n = nbr_ids.shape[0]
    for s in range(n):
        cs = nbr_counts[s]
        for t in range(cs):
            if t >= nbr_counts[s]:  # row may shrink while being mirrored
                break
            j = nbr_ids[s, t]
            d = np.float64(nbr_dists[s, t])
            _try_insert_edge(features, attrs, nbr_ids, nbr_dists, nbr_counts, in_deg, j, s, d, sigma)


@njit
def _force_insert_edge(nbr_ids, nbr_dists, nbr_counts, in_deg, j, cand, d, allow_unsafe):
    """Insert j->cand unconditionally, evicting j's farthest entry on overflow.

    Eviction prefers an entry whose target keeps in-degree >= 1; with
    allow_unsafe the farthest entry is evicted regardless (the orphaned
    target is picked up by the next reconnect sweep). Returns 1 on insert.
    """
    d = np.float32(d)
    g = nbr_ids.shape[1]
    cj = nbr_counts[j]
    for t in range(cj):
        if nbr_ids[j, t] == cand:
            return 0
    if cj >= g:
        evict = -1
        for t in range(cj - 1, -1, -1):
            if in_deg[nbr_ids[j, t]] >= 2:
                evict = t
                break
        if evict < 0:
            if not allow_unsafe:
                return 0
            evict = cj - 1
        in_deg[nbr_ids[j, evict]] -= 1
        for t in range(evict, cj - 1):
            nbr_ids[j, t] = nbr_ids[j, t + 1]
            nbr_dists[j, t] = nbr_dists[j, t + 1]
        cj -= 1
    pos = cj
    while pos > 0 and (
        nbr_dists[j, pos - 1] > d or (nbr_dists[j, pos - 1] == d and nbr_ids[j, pos - 1] > cand)
    ):
        nbr_ids[j, pos] = nbr_ids[j, pos - 1]
        nbr_dists[j, pos] = nbr_dists[j, pos - 1]
        pos -= 1
    nbr_ids[j, pos] = cand
    nbr_dists[j, pos] = d
    nbr_counts[j] = cj + 1
    in_deg[cand] += 1
    return 1


@njit(cache=True)
def reconnect_islands(features, attrs, nbr_ids, nbr_dists, nbr_counts, in_deg, sigma):
    """Give every zero-in-degree node an incoming edge from an out-neighbor.

    Redundancy-respecting insertion is tried first over all out-neighbors,
    then a forced insertion with safe eviction, and finally an unsafe
    eviction at the nearest out-neighbor (any node orphaned that way is
    handled by the caller's next sweep).
    """
    n = nbr_ids.shape[0]
    for v in range(n):
        if in_deg[v] > 0:
            continue
        done = False
        for t in range(nbr_counts[v]):
            u = nbr_ids[v, t]
            d = np.float64(nbr_dists[v, t])
            if _try_insert_edge(features, attrs, nbr_ids, nbr_dists, nbr_counts, in_deg, u, v, d, sigma):
                done = True
                break
        if done:
            continue
        for t in range(nbr_counts[v]):
            u = nbr_ids[v, t]
            d = np.float64(nbr_dists[v, t])
            if _force_insert_edge(nbr_ids, nbr_dists, nbr_counts, in_deg, u, v, d, False):
                done = True
                break
        if not done and nbr_counts[v] > 0:
            _force_insert_edge(
                nbr_ids, nbr_dists, nbr_counts, in_deg, nbr_ids[v, 0],
                v, np.float64(nbr_dists[v, 0]), True,
            )


@njit(inline="always")
def _list_insert(ids, dists, checked, size, cand, d):
    """Order-insert (cand, d) into a full fixed-capacity list, evicting the tail."""
    pos = size - 1
    while pos > 0 and (dists[pos - 1] > d or (dists[pos - 1] == d and ids[pos - 1] > cand)):
        ids[pos] = ids[pos - 1]
        dists[pos] = dists[pos - 1]
        checked[pos] = checked[pos - 1]
        pos -= 1
    ids[pos] = cand
    dists[pos] = d
    checked[pos] = 0


@njit(cache=True)
def route(
    features,
    attrs,
    nbr_ids,
    nbr_counts,
    qfeat,
    qattr,
    qmask,
    inv_alpha,
    entries,
    pioneer_size,
    use_coarse,
):
    """Two-phase routing from random entries.

    Phase 1 expands the closest unchecked pioneer over the first
    ceil(degree/2) stored neighbors; phase 2 greedily expands every
    unchecked result entry over its full list. A per-query visited set
    guarantees each node's distance is evaluated at most once.

    Returns (result_ids, result_dists, evals, phase1_evals,
    phase1_expansions, hops).
    """
    n = features.shape[0]
    k = entries.shape[0]
    visited = np.zeros(n, dtype=np.uint8)
    r_ids = np.empty(k, dtype=np.int64)
    r_dists = np.empty(k, dtype=np.float64)
    r_checked = np.zeros(k, dtype=np.uint8)
    evals = 0
    for t in range(k):
        v = entries[t]
        visited[v] = 1
        r_ids[t] = v
        r_dists[t] = _query_dist(features, attrs, v, qfeat, qattr, qmask, inv_alpha)
        evals += 1
    # insertion sort by (distance, id); k is small
    for t in range(1, k):
        cid = r_ids[t]
        cd = r_dists[t]
        pos = t
        while pos > 0 and (r_dists[pos - 1] > cd or (r_dists[pos - 1] == cd and r_ids[pos - 1] > cid)):
            r_ids[pos] = r_ids[pos - 1]
            r_dists[pos] = r_dists[pos - 1]
            pos -= 1
        r_ids[pos] = cid
        r_dists[pos] = cd

    phase1_evals = 0
    phase1_expansions = 0
    hops = 0
    if use_coarse:
        p = pioneer_size
        p_ids = r_ids[:p].copy()
        p_dists = r_dists[:p].copy()
        p_checked = np.zeros(p, dtype=np.uint8)
        while True:
            sel = -1
            for t in range(p):
                if p_checked[t] == 0:
                    sel = t
                    break
            if sel < 0:
                break
            p_checked[sel] = 1
            node = p_ids[sel]
            phase1_expansions += 1
            deg = nbr_counts[node]
            half = (deg + 1) // 2
            for t in range(half):
                nb = nbr_ids[node, t]
                if visited[nb]:
                    continue
                visited[nb] = 1
                d = _query_dist(features, attrs, nb, qfeat, qattr, qmask, inv_alpha)
                evals += 1
                phase1_evals += 1
                if d < r_dists[k - 1] or (d == r_dists[k - 1] and nb < r_ids[k - 1]):
                    _list_insert(r_ids, r_dists, r_checked, k, nb, d)
                if d < p_dists[p - 1] or (d == p_dists[p - 1] and nb < p_ids[p - 1]):
                    _list_insert(p_ids, p_dists, p_checked, p, nb, d)

    for t in range(k):
        r_checked[t] = 0
    while True:
        sel = -1
        for t in range(k):
            if r_checked[t] == 0:
                sel = t
                break
        if sel < 0:
            break
        r_checked[sel] = 1
        node = r_ids[sel]
        hops += 1
        deg = nbr_counts[node]
        for t in range(deg):
            nb = nbr_ids[node, t]
            if visited[nb]:
                continue
            visited[nb] = 1
            d = _query_dist(features, attrs, nb, qfeat, qattr, qmask, inv_alpha)
            evals += 1
            if d < r_dists[k - 1] or (d == r_dists[k - 1] and nb < r_ids[k - 1]):
                _list_insert(r_ids, r_dists, r_checked, k, nb, d)
    return r_ids, r_dists, evals, phase1_evals, phase1_expansions, hops
