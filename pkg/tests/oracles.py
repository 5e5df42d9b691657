"""Straightforward reference computations used only by the tests.

Nothing here imports from the package's numeric modules; every quantity
is recomputed with plain Python loops.
"""

import math


def _pct(values, m):
    s = sorted(values)
    if not s:
        return 0.0
    pos = (len(s) - 1) * m / 100.0
    i = int(math.floor(pos))
    if i + 1 >= len(s):
        return s[-1]
    return s[i] * (1 - (pos - i)) + s[i + 1] * (pos - i)


def _mean(values):
    return sum(values) / len(values) if values else 0.0


def _div(a, b):
    return a / b if b != 0 else 0.0


def swipe_features(rows):
    """47 features from a list of (x, y, t, a, b) tuples."""
    n = len(rows)
    xs = [r[0] for r in rows]
    ys = [r[1] for r in rows]
    ts = [r[2] for r in rows]
    dur = ts[-1] - ts[0]
    dp = math.sqrt((xs[-1] - xs[0]) ** 2 + (ys[-1] - ys[0]) ** 2)
    length = 0.0
    for i in range(1, n):
        length += math.sqrt((xs[i] - xs[i - 1]) ** 2 + (ys[i] - ys[i - 1]) ** 2)

    vx, vy = [], []
    for i in range(1, n):
        dt = ts[i] - ts[i - 1]
        vx.append(_div(xs[i] - xs[i - 1], dt))
        vy.append(_div(ys[i] - ys[i - 1], dt))
    sp = [math.sqrt(vx[i] ** 2 + vy[i] ** 2) for i in range(n - 1)]
    ux = (xs[-1] - xs[0]) / dp if dp > 0 else 0.0
    uy = (ys[-1] - ys[0]) / dp if dp > 0 else 0.0
    vc = [vx[i] * ux + vy[i] * uy for i in range(n - 1)]
    ax, ay = [], []
    for i in range(1, n - 1):
        dt = ts[i + 1] - ts[i]
        ax.append(_div(vx[i] - vx[i - 1], dt))
        ay.append(_div(vy[i] - vy[i - 1], dt))
    acc = [math.sqrt(ax[i] ** 2 + ay[i] ** 2) for i in range(len(ax))]

    k = max(2, math.ceil(n * 5 / 100))

    def chord_v(i0, i1):
        return _div(math.sqrt((xs[i1] - xs[i0]) ** 2 + (ys[i1] - ys[i0]) ** 2), ts[i1] - ts[i0])

    def path_s(i0, i1):
        tot = 0.0
        for i in range(i0 + 1, i1 + 1):
            tot += math.sqrt((xs[i] - xs[i - 1]) ** 2 + (ys[i] - ys[i - 1]) ** 2)
        return _div(tot, ts[i1] - ts[i0])

    iv, fv = chord_v(0, k - 1), chord_v(n - k, n - 1)
    ka = max(1, math.ceil(len(acc) * 5 / 100))
    ia = _mean(acc[:ka])
    fa = _mean(acc[len(acc) - ka:]) if acc else 0.0

    devs = []
    if xs[-1] == xs[0]:
        devs = [abs(x - xs[0]) for x in xs]
    else:
        m = (ys[-1] - ys[0]) / (xs[-1] - xs[0])
        c = ys[0] - m * xs[0]
        devs = [abs(yv - m * xv - c) / math.sqrt(1 + m * m) for xv, yv in zip(xs, ys)]

    area = sum(math.pi * r[3] * r[4] for r in rows) / n
    out = [dur, xs[0], ys[0], xs[-1], ys[-1], dp, length, dp / dur, iv, fv, _mean(sp),
           math.atan2(xs[-1] - xs[0], ys[-1] - ys[0]), area, (fv - iv) / dur, _mean(acc), ia, fa]
    out += [_pct(acc, m) for m in (25, 50, 75)]
    out += [_pct(vc, m) for m in (25, 50, 75)]
    out += [length / dur, path_s(0, k - 1), path_s(n - k, n - 1)]
    out += [_pct(sp, m) for m in (25, 50, 75)]
    out += [_mean(vx), _mean(vy), _mean(ax), _mean(ay), _mean(devs), max(devs)]
    for series in (vx, vy, ax, ay):
        out += [_pct(series, m) for m in (25, 50, 75)]
    return out


def plugin_mi(joint_counts):
    """Mutual information (nats) from a 2-D table of joint counts."""
    total = sum(sum(row) for row in joint_counts)
    px = [sum(row) / total for row in joint_counts]
    py = [sum(joint_counts[i][j] for i in range(len(joint_counts))) / total for j in range(len(joint_counts[0]))]
    mi = 0.0
    for i, row in enumerate(joint_counts):
        for j, c in enumerate(row):
            if c:
                p = c / total
                mi += p * math.log(p / (px[i] * py[j]))
    return mi


def eer_scan(genuine, impostor):
    """Exhaustive threshold scan: every distinct score and every midpoint."""
    u = sorted(set(genuine) | set(impostor))
    cands = sorted(u + [(a + b) / 2 for a, b in zip(u, u[1:])])
    best = None
    for tau in cands:
        far = sum(1 for s in impostor if s >= tau) / len(impostor)
        frr = sum(1 for s in genuine if s < tau) / len(genuine)
        key = abs(far - frr)
        if best is None or key < best[0]:
            best = (key, tau, (far + frr) / 2)
    return best[1], best[2]


def knn_bruteforce(points, i, k, candidates):
    """Indices of the k nearest ``candidates`` to ``points[i]`` (excluding i), ties by index."""
    d = []
    for j in candidates:
        if j == i:
            continue
        d.append((sum((a - b) ** 2 for a, b in zip(points[i], points[j])), j))
    d.sort()
    return [j for _, j in d[:k]]


def on_segment(p, a, b, tol=1e-9):
    """True if p = a + lam (b - a) for some lam in [0, 1]."""
    ab = [bb - aa for aa, bb in zip(a, b)]
    ap = [pp - aa for aa, pp in zip(a, p)]
    denom = sum(v * v for v in ab)
    if denom == 0:
        return all(abs(v) <= tol for v in ap)
    lam = sum(u * v for u, v in zip(ab, ap)) / denom
    if lam < -tol or lam > 1 + tol:
        return False
    return all(abs(aa + lam * v - pp) <= tol for aa, v, pp in zip(a, ab, p))
