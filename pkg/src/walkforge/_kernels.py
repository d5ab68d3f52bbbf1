"""Jitted inner loops.

Everything here is deliberately flat: plain int64/float64 scalars and
two packed arrays, no objects, so numba compiles tight machine code.

Level packing convention (built by walk._pack): geo is an (n, 6) int64
array with rows (a, a', b, beta, ox, oy) for levels 1..n, vals is an
(n, 2) float64 array with rows (eta, K). Level count is geo.shape[0].

The production walk kernel keeps per-level folded coordinates as
incremental state and skips edge classification whenever the position
is provably far from that level's obstacle; walk_kernel_reference is
the direct per-edge transcription kept for cross-validation. Both draw
in the same fixed order (holding time first, then direction), which is
part of the package's reproducibility contract, so they must produce
bit-identical paths from a shared stream.
"""

import numpy as np
from numba import njit

GUARD = 1 << 62


@njit(inline="always")
def edge_code(fx, fy, horiz, a, ap, b, beta):
    # Pattern class of the edge whose folded smaller endpoint is
    # (fx, fy), both in [0, a): 0 background, 1 gate, 2 bar. Closed form
    # covering the four symmetric images of the base I-shape.
    T = 10 * b
    if horiz:
        along = fx
        across = fy
    else:
        along = fy
        across = fx
    d = across - ap
    if d < 0:
        d = -d
    if along == ap + T or along == ap - T - 1:
        dd = d - beta
        if dd < 0:
            dd = -dd
        if dd <= b:
            return 1
    if d == beta and ap - T <= along and along <= ap + T - 1:
        return 2
    return 0


@njit(inline="always")
def mu_edge(ux, uy, horiz, geo, vals):
    # level-n conductance of one edge; highest level wins, background 1
    for k in range(geo.shape[0] - 1, -1, -1):
        a = geo[k, 0]
        c = edge_code((ux - geo[k, 4]) % a, (uy - geo[k, 5]) % a, horiz,
                      a, geo[k, 1], geo[k, 2], geo[k, 3])
        if c != 0:
            return vals[k, c - 1]
    return 1.0


@njit(cache=True, nogil=True)
def walk_kernel(gen, x0, y0, horizon, geo, vals):
    """Event-driven walk until the horizon.

    Returns (times, xs, ys, truncated): the jump events plus a flag that
    is True when the coordinate guard band was hit and the path is only
    partial.
    """
    n = geo.shape[0]
    cap = 1024
    ts = np.empty(cap, np.float64)
    xs = np.empty(cap, np.int64)
    ys = np.empty(cap, np.int64)
    m = 0
    x = np.int64(x0)
    y = np.int64(y0)
    t = 0.0
    truncated = False
    # folded position per level, maintained incrementally
    fx = np.empty(n, np.int64)
    fy = np.empty(n, np.int64)
    for k in range(n):
        fx[k] = (x - geo[k, 4]) % geo[k, 0]
        fy[k] = (y - geo[k, 5]) % geo[k, 0]
    while True:
        cr = 1.0
        cl = 1.0
        cu = 1.0
        cd = 1.0
        decided = 0  # bitmask: 1 right, 2 left, 4 up, 8 down
        for k in range(n - 1, -1, -1):
            ap = geo[k, 1]
            b = geo[k, 2]
            beta = geo[k, 3]
            px = fx[k]
            py = fy[k]
            dx = px - ap
            if dx < 0:
                dx = -dx
            dy = py - ap
            if dy < 0:
                dy = -dy
            lim = beta + b + 1
            if dx > lim or dy > lim:
                # every incident edge is background at this level
                continue
            a = geo[k, 0]
            pxm = px - 1
            if pxm < 0:
                pxm = a - 1
            pym = py - 1
            if pym < 0:
                pym = a - 1
            if decided & 1 == 0:
                c = edge_code(px, py, True, a, ap, b, beta)
                if c != 0:
                    cr = vals[k, c - 1]
                    decided |= 1
            if decided & 2 == 0:
                c = edge_code(pxm, py, True, a, ap, b, beta)
                if c != 0:
                    cl = vals[k, c - 1]
                    decided |= 2
            if decided & 4 == 0:
                c = edge_code(px, py, False, a, ap, b, beta)
                if c != 0:
                    cu = vals[k, c - 1]
                    decided |= 4
            if decided & 8 == 0:
                c = edge_code(px, pym, False, a, ap, b, beta)
                if c != 0:
                    cd = vals[k, c - 1]
                    decided |= 8
            if decided == 15:
                break
        rate = cr + cl + cu + cd
        t += gen.exponential(1.0 / rate)
        if t > horizon:
            break
        u = gen.random() * rate
        if u < cr:
            x += 1
            for k in range(n):
                fx[k] += 1
                if fx[k] == geo[k, 0]:
                    fx[k] = 0
        elif u < cr + cl:
            x -= 1
            for k in range(n):
                fx[k] -= 1
                if fx[k] < 0:
                    fx[k] = geo[k, 0] - 1
        elif u < cr + cl + cu:
            y += 1
            for k in range(n):
                fy[k] += 1
                if fy[k] == geo[k, 0]:
                    fy[k] = 0
        else:
            y -= 1
            for k in range(n):
                fy[k] -= 1
                if fy[k] < 0:
                    fy[k] = geo[k, 0] - 1
        if m == cap:
            cap *= 2
            nts = np.empty(cap, np.float64)
            nxs = np.empty(cap, np.int64)
            nys = np.empty(cap, np.int64)
            nts[:m] = ts
            nxs[:m] = xs
            nys[:m] = ys
            ts = nts
            xs = nxs
            ys = nys
        ts[m] = t
        xs[m] = x
        ys[m] = y
        m += 1
        if x > GUARD or x < -GUARD or y > GUARD or y < -GUARD:
            truncated = True
            break
    return ts[:m].copy(), xs[:m].copy(), ys[:m].copy(), truncated


@njit(cache=True, nogil=True)
def walk_kernel_reference(gen, x0, y0, horizon, geo, vals):
    """Direct per-edge transcription of the dynamics; slow but obviously
    faithful. Must agree bit for bit with walk_kernel on a shared
    stream; exercised by the test suite."""
    cap = 1024
    ts = np.empty(cap, np.float64)
    xs = np.empty(cap, np.int64)
    ys = np.empty(cap, np.int64)
    m = 0
    x = np.int64(x0)
    y = np.int64(y0)
    t = 0.0
    truncated = False
    while True:
        cr = mu_edge(x, y, True, geo, vals)
        cl = mu_edge(x - 1, y, True, geo, vals)
        cu = mu_edge(x, y, False, geo, vals)
        cd = mu_edge(x, y - 1, False, geo, vals)
        rate = cr + cl + cu + cd
        t += gen.exponential(1.0 / rate)
        if t > horizon:
            break
        u = gen.random() * rate
        if u < cr:
            x += 1
        elif u < cr + cl:
            x -= 1
        elif u < cr + cl + cu:
            y += 1
        else:
            y -= 1
        if m == cap:
            cap *= 2
            nts = np.empty(cap, np.float64)
            nxs = np.empty(cap, np.int64)
            nys = np.empty(cap, np.int64)
            nts[:m] = ts
            nxs[:m] = xs
            nys[:m] = ys
            ts = nts
            xs = nxs
            ys = nys
        ts[m] = t
        xs[m] = x
        ys[m] = y
        m += 1
        if x > GUARD or x < -GUARD or y > GUARD or y < -GUARD:
            truncated = True
            break
    return ts[:m].copy(), xs[:m].copy(), ys[:m].copy(), truncated


@njit(cache=True, nogil=True)
def marginals_kernel(gen, x0, y0, times, geo, vals):
    """Walk to max(times) recording only the position at each probe time.

    times must be sorted ascending. Returns an (len(times), 2) int64
    array. Identical draw order to walk_kernel, so the two agree path
    for path on a shared stream.
    """
    n = geo.shape[0]
    out = np.empty((times.shape[0], 2), np.int64)
    x = np.int64(x0)
    y = np.int64(y0)
    t = 0.0
    i = 0
    horizon = times[times.shape[0] - 1]
    fx = np.empty(n, np.int64)
    fy = np.empty(n, np.int64)
    for k in range(n):
        fx[k] = (x - geo[k, 4]) % geo[k, 0]
        fy[k] = (y - geo[k, 5]) % geo[k, 0]
    while True:
        cr = 1.0
        cl = 1.0
        cu = 1.0
        cd = 1.0
        decided = 0
        for k in range(n - 1, -1, -1):
            ap = geo[k, 1]
            b = geo[k, 2]
            beta = geo[k, 3]
            px = fx[k]
            py = fy[k]
            dx = px - ap
            if dx < 0:
                dx = -dx
            dy = py - ap
            if dy < 0:
                dy = -dy
            lim = beta + b + 1
            if dx > lim or dy > lim:
                continue
            a = geo[k, 0]
            pxm = px - 1
            if pxm < 0:
                pxm = a - 1
            pym = py - 1
            if pym < 0:
                pym = a - 1
            if decided & 1 == 0:
                c = edge_code(px, py, True, a, ap, b, beta)
                if c != 0:
                    cr = vals[k, c - 1]
                    decided |= 1
            if decided & 2 == 0:
                c = edge_code(pxm, py, True, a, ap, b, beta)
                if c != 0:
                    cl = vals[k, c - 1]
                    decided |= 2
            if decided & 4 == 0:
                c = edge_code(px, py, False, a, ap, b, beta)
                if c != 0:
                    cu = vals[k, c - 1]
                    decided |= 4
            if decided & 8 == 0:
                c = edge_code(px, pym, False, a, ap, b, beta)
                if c != 0:
                    cd = vals[k, c - 1]
                    decided |= 8
            if decided == 15:
                break
        rate = cr + cl + cu + cd
        t += gen.exponential(1.0 / rate)
        while i < times.shape[0] and times[i] < t:
            out[i, 0] = x
            out[i, 1] = y
            i += 1
        if t > horizon:
            break
        u = gen.random() * rate
        if u < cr:
            x += 1
            for k in range(n):
                fx[k] += 1
                if fx[k] == geo[k, 0]:
                    fx[k] = 0
        elif u < cr + cl:
            x -= 1
            for k in range(n):
                fx[k] -= 1
                if fx[k] < 0:
                    fx[k] = geo[k, 0] - 1
        elif u < cr + cl + cu:
            y += 1
            for k in range(n):
                fy[k] += 1
                if fy[k] == geo[k, 0]:
                    fy[k] = 0
        else:
            y -= 1
            for k in range(n):
                fy[k] -= 1
                if fy[k] < 0:
                    fy[k] = geo[k, 0] - 1
        if x > GUARD or x < -GUARD or y > GUARD or y < -GUARD:
            break
    while i < times.shape[0]:
        out[i, 0] = x
        out[i, 1] = y
        i += 1
    return out


@njit(cache=True, nogil=True)
def stopping_scan(in_near, in_far, xm, ym, ax, ay):
    """State machine over a path's event sequence (index 0 = start).

    in_near[i]/in_far[i]: whether event i's position is in the inner
    region (within 2 beta of a tile center) / the far region (beyond
    4 beta). xm, ym: event coordinates reduced modulo the coarser
    period; ax, ay: the start position reduced the same way.

    Marks four event-index sequences:
      departures d[j]   first far-region visit after the previous
                        arrival (or after the start),
      arrivals   r[j]   next inner-region entry after d[j] (-1 if the
                        horizon cuts the transit short),
      splices    v[k]   first event during a transit whose position is
                        congruent to the current anchor,
      closures   t[k]   next inner-region entry at or after v[k] (-1 if
                        pending at the horizon); the anchor then moves
                        to that position.

    A transit interval is closed: congruence is tested at the departure
    event and at the arrival event too, congruence first, so a splice
    found exactly at an arrival wins. The anchor starts at the start
    position. Regions are disjoint, so each event triggers at most one
    forward cascade (departure then same-event splice then same-event
    closure is impossible past the splice: far and near exclude each
    other).
    """
    nev = in_near.shape[0]
    cap_a = 256
    cap_e = 256
    d_idx = np.empty(cap_a, np.int64)
    r_idx = np.empty(cap_a, np.int64)
    v_idx = np.empty(cap_e, np.int64)
    t_idx = np.empty(cap_e, np.int64)
    m_att = 0
    m_exc = 0
    phase = 0  # 0 seek departure, 1 in transit, 2 seek closure
    for i in range(nev):
        if phase == 0:
            if in_far[i]:
                if m_att == cap_a:
                    cap_a *= 2
                    nd = np.empty(cap_a, np.int64)
                    nr = np.empty(cap_a, np.int64)
                    nd[:m_att] = d_idx
                    nr[:m_att] = r_idx
                    d_idx = nd
                    r_idx = nr
                d_idx[m_att] = i
                r_idx[m_att] = -1
                m_att += 1
                phase = 1
        if phase == 1:
            if xm[i] == ax and ym[i] == ay:
                if m_exc == cap_e:
                    cap_e *= 2
                    nv = np.empty(cap_e, np.int64)
                    nt = np.empty(cap_e, np.int64)
                    nv[:m_exc] = v_idx
                    nt[:m_exc] = t_idx
                    v_idx = nv
                    t_idx = nt
                v_idx[m_exc] = i
                t_idx[m_exc] = -1
                m_exc += 1
                phase = 2
            elif in_near[i]:
                r_idx[m_att - 1] = i
                phase = 0
        if phase == 2:
            if in_near[i]:
                t_idx[m_exc - 1] = i
                r_idx[m_att - 1] = i  # the closure also ends the transit
                ax = xm[i]
                ay = ym[i]
                phase = 0
    return (d_idx[:m_att].copy(), r_idx[:m_att].copy(),
            v_idx[:m_exc].copy(), t_idx[:m_exc].copy())


@njit(cache=True, nogil=True)
def bottleneck_alignment(ts, xs, us, ys):
    """Min over monotone staircase index alignments of the max pair
    cost, where pairing grid point i of (ts, xs) with j of (us, ys)
    costs max(|ts_i - us_j|, Euclidean |xs_i - ys_j|). Endpoints are
    pinned: (0, 0) and (last, last). O(m n) time, O(n) memory.
    """
    m = ts.shape[0]
    n = us.shape[0]
    prev = np.empty(n, np.float64)
    cur = np.empty(n, np.float64)
    for i in range(m):
        for j in range(n):
            dt = ts[i] - us[j]
            if dt < 0.0:
                dt = -dt
            e0 = xs[i, 0] - ys[j, 0]
            e1 = xs[i, 1] - ys[j, 1]
            c = np.sqrt(e0 * e0 + e1 * e1)
            if dt > c:
                c = dt
            if i == 0 and j == 0:
                best = -1.0
            elif i == 0:
                best = cur[j - 1]
            elif j == 0:
                best = prev[0]
            else:
                best = prev[j]
                if prev[j - 1] < best:
                    best = prev[j - 1]
                if cur[j - 1] < best:
                    best = cur[j - 1]
            cur[j] = c if c > best else best
        t = prev
        prev = cur
        cur = t
    return prev[n - 1]
