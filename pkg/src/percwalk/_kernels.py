"""Compiled inner loops: edge hashing, box-restricted BFS, the walk, and the
regeneration ladder scan.

Everything here works on plain numpy arrays so it can be called from numba
and from Python alike. Vertices are int64 coordinate arrays; ``closed`` is an
``(k, d + 1)`` int64 array of forced-closed edges (base coordinates, axis).
Levels are the exact integers ``x . v``.
"""
import numpy as np
from numba import njit

MASK64 = (1 << 64) - 1

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_SALT_EDGE = np.uint64(0x6A09E667F3BCC909)
_SALT_AXIS = np.uint64(0xBB67AE8584CAA73B)
_SALT_WALK = np.uint64(0x3C6EF372FE94F82B)
_TWO53 = 1.0 / 9007199254740992.0

NO_LEVEL = np.iinfo(np.int64).min // 4
INF_STEPS = np.int64(-1)


@njit(cache=True, inline="always")
def mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def edge_uniform(seed, x, axis, minus):
    """Uniform(0,1) attached to the edge {x, x +/- e_axis}, keyed by its base."""
    d = x.shape[0]
    h = mix64(seed ^ _SALT_EDGE) + _GOLDEN * np.uint64(d)
    for i in range(d):
        c = x[i]
        if minus and i == axis:
            c -= 1
        h = mix64(h ^ (np.uint64(c) + _GOLDEN * np.uint64(i + 1)))
    h = mix64(h ^ (_SALT_AXIS + np.uint64(axis)))
    return np.float64(h >> np.uint64(11)) * _TWO53


@njit(cache=True)
def _is_forced_closed(closed, x, axis, minus):
    d = x.shape[0]
    for r in range(closed.shape[0]):
        if closed[r, d] != axis:
            continue
        hit = True
        for i in range(d):
            c = x[i]
            if minus and i == axis:
                c -= 1
            if closed[r, i] != c:
                hit = False
                break
        if hit:
            return True
    return False


@njit(cache=True)
def edge_open(seed, p, closed, x, axis, minus):
    if closed.shape[0] > 0 and _is_forced_closed(closed, x, axis, minus):
        return False
    if p >= 1.0:
        return True
    if p <= 0.0:
        return False
    return edge_uniform(seed, x, axis, minus) < p


@njit(cache=True, inline="always")
def stream_uniform(key, t):
    """t-th draw of the SplitMix64 stream keyed by ``key``."""
    h = mix64(mix64(key ^ _SALT_WALK) + _GOLDEN * np.uint64(t + 1))
    return np.float64(h >> np.uint64(11)) * _TWO53


@njit(cache=True)
def level_of(x, v):
    s = 0
    for i in range(x.shape[0]):
        s += x[i] * v[i]
    return s


# ---------------------------------------------------------------------------
# box-restricted breadth-first search


@njit(cache=True)
def _box_strides(d, R):
    side = 2 * R + 1
    strides = np.empty(d, np.int64)
    s = 1
    for i in range(d - 1, -1, -1):
        strides[i] = s
        s *= side
    return strides, s


@njit(cache=True)
def _decode(flat, center, R, strides, out):
    d = center.shape[0]
    side = 2 * R + 1
    for i in range(d):
        out[i] = center[i] - R + (flat // strides[i]) % side


@njit(cache=True)
def _is_target(y, x, R, v, lx, mode, thr2):
    # mode 0: l-infinity shell of the box; mode 1: level lx + r|v| (thr2 = r^2 |v|^2)
    if mode == 0:
        for i in range(y.shape[0]):
            if abs(y[i] - x[i]) == R:
                return True
        return False
    dl = level_of(y, v) - lx
    return dl >= 0 and dl * dl >= thr2


@njit(cache=True)
def box_bfs(seed, p, closed, x, R, v, min_level, budget, mode, thr2, stop_at_target):
    return _bfs(seed, p, closed, x, R, v, min_level, budget, mode, thr2, stop_at_target, False)


@njit(cache=True)
def shell_truncated_bfs(seed, p, closed, x, R, budget):
    """Cluster exploration that never leaves a vertex on the box shell."""
    v = np.zeros(x.shape[0], np.int64)
    return _bfs(seed, p, closed, x, R, v, NO_LEVEL, budget, 0, 0, False, True)


@njit(cache=True)
def _bfs(seed, p, closed, x, R, v, min_level, budget, mode, thr2, stop_at_target, truncate):
    """BFS from ``x`` inside the l-infinity box of radius R around ``x``.

    Only vertices with level >= ``min_level`` are entered; with ``truncate``
    vertices on the shell are not expanded. Returns
    ``(order, dist, hit_target, exhausted)`` where ``order`` holds flat box
    indices in visiting order and ``dist`` their graph distance from ``x``.
    """
    d = x.shape[0]
    strides, vol = _box_strides(d, R)
    seen = np.zeros(vol, np.uint8)
    cap = min(vol, budget + 1)
    queue = np.empty(cap, np.int64)
    dist = np.empty(cap, np.int64)
    lx = level_of(x, v)
    start = 0
    for i in range(d):
        start += R * strides[i]
    queue[0] = start
    dist[0] = 0
    seen[start] = 1
    head = 0
    tail = 1
    hit = False
    exhausted = False
    y = np.empty(d, np.int64)
    z = np.empty(d, np.int64)
    if _is_target(x, x, R, v, lx, mode, thr2):
        hit = True
        if stop_at_target:
            return queue[:tail], dist[:tail], hit, exhausted
    while head < tail:
        flat = queue[head]
        dcur = dist[head]
        head += 1
        _decode(flat, x, R, strides, y)
        if truncate and head > 1:
            on_shell = False
            for i in range(d):
                if abs(y[i] - x[i]) == R:
                    on_shell = True
            if on_shell:
                continue
        for axis in range(d):
            for sgn in range(2):
                minus = sgn == 0
                off = y[axis] - x[axis] + (-1 if minus else 1)
                if off < -R or off > R:
                    continue
                nflat = flat - strides[axis] if minus else flat + strides[axis]
                if seen[nflat]:
                    continue
                for i in range(d):
                    z[i] = y[i]
                z[axis] += -1 if minus else 1
                if level_of(z, v) < min_level:
                    continue
                if not edge_open(seed, p, closed, y, axis, minus):
                    continue
                if tail >= budget:
                    exhausted = True
                    return queue[:tail], dist[:tail], hit, exhausted
                seen[nflat] = 1
                queue[tail] = nflat
                dist[tail] = dcur + 1
                tail += 1
                if not hit and _is_target(z, x, R, v, lx, mode, thr2):
                    hit = True
                    if stop_at_target:
                        return queue[:tail], dist[:tail], hit, exhausted
    return queue[:tail], dist[:tail], hit, exhausted


@njit(cache=True)
def decode_many(flats, x, R):
    d = x.shape[0]
    strides, _ = _box_strides(d, R)
    out = np.empty((flats.shape[0], d), np.int64)
    y = np.empty(d, np.int64)
    for k in range(flats.shape[0]):
        _decode(flats[k], x, R, strides, y)
        for i in range(d):
            out[k, i] = y[i]
    return out


@njit(cache=True)
def backtrack_deficit(seed, p, closed, x, R, v, budget, mode, thr2):
    """Smallest integer level deficit h with an escape inside {level >= lx - h}.

    Returns ``(h, status)``: status 0 ok, 1 target unreachable (x treated as
    outside the infinite-cluster proxy), 2 budget exhausted.
    """
    lx = level_of(x, v)
    order, _, hit, exhausted = box_bfs(seed, p, closed, x, R, v, NO_LEVEL, budget, mode, thr2, False)
    if exhausted:
        return np.int64(0), 2
    if not hit:
        return np.int64(0), 1
    pts = decode_many(order, x, R)
    defs = np.empty(pts.shape[0], np.int64)
    for k in range(pts.shape[0]):
        dl = lx - level_of(pts[k], v)
        defs[k] = dl if dl > 0 else 0
    cand = np.unique(defs)
    lo = 0
    hi = cand.shape[0] - 1
    while lo < hi:
        mid = (lo + hi) // 2
        _, _, ok, _ = box_bfs(seed, p, closed, x, R, v, lx - cand[mid], budget, mode, thr2, True)
        if ok:
            hi = mid
        else:
            lo = mid + 1
    return cand[lo], 0


@njit(cache=True)
def escape_steps(seed, p, closed, x, R, v, budget, thr2):
    """Smallest j such that some open path from x is in the half-space
    {level >= lx} from index j on and reaches level lx + r|v| inside the box.

    Returns ``(j, status)`` with the same status codes as
    :func:`backtrack_deficit`; ``j`` is -1 when no escape exists.
    """
    d = x.shape[0]
    lx = level_of(x, v)
    strides, vol = _box_strides(d, R)
    # A: half-space vertices joined to the target inside the half-space
    good = np.zeros(vol, np.uint8)
    queue = np.empty(vol, np.int64)
    tail = 0
    y = np.empty(d, np.int64)
    z = np.empty(d, np.int64)
    for flat in range(vol):
        _decode(flat, x, R, strides, y)
        dl = level_of(y, v) - lx
        if dl >= 0 and dl * dl >= thr2:
            good[flat] = 1
            queue[tail] = flat
            tail += 1
    head = 0
    while head < tail:
        flat = queue[head]
        head += 1
        _decode(flat, x, R, strides, y)
        for axis in range(d):
            for sgn in range(2):
                minus = sgn == 0
                off = y[axis] - x[axis] + (-1 if minus else 1)
                if off < -R or off > R:
                    continue
                nflat = flat - strides[axis] if minus else flat + strides[axis]
                if good[nflat]:
                    continue
                for i in range(d):
                    z[i] = y[i]
                z[axis] += -1 if minus else 1
                if level_of(z, v) < lx:
                    continue
                if not edge_open(seed, p, closed, y, axis, minus):
                    continue
                if tail >= budget:
                    return INF_STEPS, 2
                good[nflat] = 1
                queue[tail] = nflat
                tail += 1
    centre = 0
    for i in range(d):
        centre += R * strides[i]
    if good[centre]:
        return np.int64(0), 0
    order, dist, _, exhausted = box_bfs(seed, p, closed, x, R, v, NO_LEVEL, budget, 0, 0, False)
    if exhausted:
        return INF_STEPS, 2
    best = INF_STEPS
    for k in range(order.shape[0]):
        flat = order[k]
        _decode(flat, x, R, strides, y)
        if level_of(y, v) >= lx:
            continue
        if best >= 0 and dist[k] + 1 >= best:
            continue
        for axis in range(d):
            for sgn in range(2):
                minus = sgn == 0
                off = y[axis] - x[axis] + (-1 if minus else 1)
                if off < -R or off > R:
                    continue
                nflat = flat - strides[axis] if minus else flat + strides[axis]
                if not good[nflat]:
                    continue
                if edge_open(seed, p, closed, y, axis, minus):
                    best = dist[k] + 1
    if best < 0:
        return INF_STEPS, 1
    return best, 0


# ---------------------------------------------------------------------------
# the walk


@njit(cache=True)
def simulate_walk(seed, p, closed, ell, start, n_steps, walk_key):
    d = start.shape[0]
    pos = np.empty((n_steps + 1, d), np.int64)
    x = start.copy()
    for i in range(d):
        pos[0, i] = x[i]
    wminus = np.empty(d)
    wplus = np.empty(d)
    for i in range(d):
        wminus[i] = np.exp(-ell[i])
        wplus[i] = np.exp(ell[i])
    w = np.empty(2 * d)
    for t in range(n_steps):
        total = 0.0
        for axis in range(d):
            a = wminus[axis] if edge_open(seed, p, closed, x, axis, True) else 0.0
            b = wplus[axis] if edge_open(seed, p, closed, x, axis, False) else 0.0
            w[2 * axis] = a
            w[2 * axis + 1] = b
            total += a + b
        if total > 0.0:
            u = stream_uniform(walk_key, t) * total
            j = 0
            acc = w[0]
            while acc <= u and j < 2 * d - 1:
                j += 1
                acc += w[j]
            # guard against landing on a zero-weight slot through rounding
            while w[j] == 0.0:
                j -= 1
            x[j // 2] += -1 if j % 2 == 0 else 1
        for i in range(d):
            pos[t + 1, i] = x[i]
    return pos


@njit(cache=True)
def levels_of(pos, v):
    n = pos.shape[0]
    out = np.empty(n, np.int64)
    for t in range(n):
        out[t] = level_of(pos[t], v)
    return out


# ---------------------------------------------------------------------------
# regeneration ladder


@njit(cache=True)
def _b_edges_open(seed, p, closed, xw, e1_axis, e1_sign, bvecs):
    # edges [X - e1, X + e - e1] for each e in bvecs
    d = xw.shape[0]
    a = xw.copy()
    a[e1_axis] -= e1_sign
    for r in range(bvecs.shape[0]):
        axis = -1
        sgn = 0
        for i in range(d):
            if bvecs[r, i] != 0:
                axis = i
                sgn = bvecs[r, i]
        if not edge_open(seed, p, closed, a, axis, sgn < 0):
            return False
    return True


ESCAPE_GROWTH = 8


@njit(cache=True)
def escape_steps_adaptive(seed, p, closed, x, R, v, q, budget):
    """``escape_steps`` at radius R, doubled up to ``ESCAPE_GROWTH * R`` while
    no escape is found (lateral detours can exceed a small box)."""
    r = R
    while True:
        j, status = escape_steps(seed, p, closed, x, r, v, budget, r * r * q)
        if status == 2 or (status == 0 and j >= 0) or 2 * r > ESCAPE_GROWTH * R:
            return j, status
        r *= 2


@njit(cache=True)
def _sigma1(seed, p, closed, pos, L, v, q, ceil_v, start, e1_axis, e1_sign, bvecs, esc_R, budget):
    """First sigma of the ladder construction begun at ``start``; -1 if the
    observed path ends first. Second value is a status (2 on budget)."""
    n = L.shape[0] - 1
    j, status = escape_steps_adaptive(seed, p, closed, pos[start], esc_R, v, q, budget)
    if status == 2:
        return np.int64(-1), 2
    if j < 0:
        return np.int64(-1), 0
    # threshold ceil(j |v|) above the starting level
    k = np.int64(np.floor(np.sqrt(np.float64(j * j * q))))
    while k * k < j * j * q:
        k += 1
    while k > 0 and (k - 1) * (k - 1) >= j * j * q:
        k -= 1
    thr = L[start] + k
    t = start
    run_max = L[start]
    while True:
        while t <= n and L[t] < thr:
            if L[t] > run_max:
                run_max = L[t]
            t += 1
        if t > n:
            return np.int64(-1), 0
        w = t + 2
        if w > n:
            return np.int64(-1), 0
        for s in range(t, w + 1):
            if L[s] > run_max:
                run_max = L[s]
        ok = True
        for i in range(pos.shape[1]):
            step1 = pos[w, i] - pos[w - 1, i]
            step2 = pos[w - 1, i] - pos[w - 2, i]
            want = e1_sign if i == e1_axis else 0
            if step1 != want or step2 != want:
                ok = False
                break
        if ok and _b_edges_open(seed, p, closed, pos[w], e1_axis, e1_sign, bvecs):
            return np.int64(w), 0
        thr = run_max + ceil_v
        t = w + 1


@njit(cache=True)
def paper_regenerations(seed, p, closed, pos, v, q, ceil_v, e1_axis, e1_sign, bvecs, esc_R, budget, horizon):
    """Regeneration times of the sigma/R/M ladder, restarted at every tau.

    Returns ``(taus, confirmed, status)``.
    """
    L = levels_of(pos, v)
    n = L.shape[0] - 1
    sufmin = np.empty(n + 2, np.int64)
    sufmin[n + 1] = np.iinfo(np.int64).max
    for t in range(n, -1, -1):
        sufmin[t] = min(L[t], sufmin[t + 1])
    taus = []
    conf = []
    seg = 0
    status = 0
    while True:
        start = seg
        run_max = L[seg]
        found = False
        while True:
            sigma, st = _sigma1(seed, p, closed, pos, L, v, q, ceil_v, start, e1_axis, e1_sign, bvecs, esc_R, budget)
            if st == 2:
                status = 2
                break
            if sigma < 0:
                break
            for s in range(start, sigma + 1):
                if L[s] > run_max:
                    run_max = L[s]
            if sufmin[sigma + 1] >= L[sigma]:
                taus.append(sigma)
                conf.append(n - sigma >= horizon)
                found = True
                break
            r = sigma + 1
            while L[r] >= L[sigma]:
                if L[r] > run_max:
                    run_max = L[r]
                r += 1
            thr = run_max + ceil_v
            t = r
            while t <= n and L[t] < thr:
                if L[t] > run_max:
                    run_max = L[t]
                t += 1
            if t > n:
                break
            start = t
        if not found or not conf[-1]:
            break
        seg = taus[-1]
    out_t = np.empty(len(taus), np.int64)
    out_c = np.empty(len(taus), np.bool_)
    for i in range(len(taus)):
        out_t[i] = taus[i]
        out_c[i] = conf[i]
    return out_t, out_c, status


@njit(cache=True)
def ladder_times(L, horizon):
    n = L.shape[0] - 1
    sufmin = np.empty(n + 2, np.int64)
    sufmin[n + 1] = np.iinfo(np.int64).max
    for t in range(n, -1, -1):
        sufmin[t] = min(L[t], sufmin[t + 1])
    taus = []
    conf = []
    pmax = L[0]
    for t in range(1, n + 1):
        if L[t] > pmax:
            if sufmin[t] >= L[t]:
                taus.append(t)
                conf.append(n - t >= horizon)
            pmax = L[t]
    out_t = np.empty(len(taus), np.int64)
    out_c = np.empty(len(taus), np.bool_)
    for i in range(len(taus)):
        out_t[i] = taus[i]
        out_c[i] = conf[i]
    return out_t, out_c
