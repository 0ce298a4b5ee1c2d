"""Numba kernels for the patch-match solver.

All hot loops live here, operating on plain arrays prepared by
:mod:`styletx.synthesis`:

* ``a_planes`` / ``b_planes``: stacked guide planes, float32 (h, w, planes)
* ``a_style`` / ``b_style``: style images, float32 (h, w, channels)
* ``b_mod``: per-plane target-side weight modulation, float32 (h, w, planes)
* ``weights``: per-plane guide weights, float64 (planes,)
* ``nnf``: int32 (h, w, 2) holding (source_x, source_y) per target pixel

Randomness is counter based: every draw is a pure hash of
(seed, stream, pass, pixel, attempt), so results are identical across
platforms and thread counts, and pixels can be searched independently.
Kernels release the GIL so shot layers can run on Python threads.
"""

import numpy as np
from numba import njit

U64 = np.uint64
_GOLDEN = U64(0x9E3779B97F4A7C15)
_INV_2_53 = 1.0 / 9007199254740992.0

STREAM_INIT = 1
STREAM_SEARCH = 2


@njit(cache=True, inline="always")
def _mix64(z):
    z = (z ^ (z >> U64(30))) * U64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> U64(27))) * U64(0x94D049BB133111EB)
    return z ^ (z >> U64(31))


@njit(cache=True, inline="always")
def _rng(seed, k1, k2, k3, k4):
    h = _mix64(U64(seed) ^ _GOLDEN)
    h = _mix64(h ^ U64(k1))
    h = _mix64(h ^ U64(k2))
    h = _mix64(h ^ U64(k3))
    h = _mix64(h ^ U64(k4))
    return h


@njit(cache=True, inline="always")
def _uniform_below(h, n):
    u = np.float64(h >> U64(11)) * _INV_2_53
    idx = int(u * n)
    if idx >= n:
        idx = n - 1
    return idx


@njit(cache=True, nogil=True)
def init_nnf_kernel(target_h, target_w, source_w, source_h, seed):
    nnf = np.empty((target_h, target_w, 2), dtype=np.int32)
    for y in range(target_h):
        for x in range(target_w):
            pix = y * target_w + x
            nnf[y, x, 0] = _uniform_below(_rng(seed, STREAM_INIT, pix, 0, 0), source_w)
            nnf[y, x, 1] = _uniform_below(_rng(seed, STREAM_INIT, pix, 1, 0), source_h)
    return nnf


@njit(cache=True, nogil=True, inline="always")
def patch_dist(
    a_planes, a_style, b_planes, b_style, b_mod, weights, style_weight,
    px, py, qx, qy, half, cutoff,
):
    """Weighted sum-of-squares distance between the patches at p (source)
    and q (target); out-of-bounds samples clamp to the image edge. Stops
    early once the accumulator reaches ``cutoff``."""
    ah = a_planes.shape[0]
    aw = a_planes.shape[1]
    bh = b_planes.shape[0]
    bw = b_planes.shape[1]
    n_planes = a_planes.shape[2]
    n_style = a_style.shape[2]
    d = 0.0
    for oy in range(-half, half + 1):
        ay = py + oy
        if ay < 0:
            ay = 0
        elif ay >= ah:
            ay = ah - 1
        by = qy + oy
        if by < 0:
            by = 0
        elif by >= bh:
            by = bh - 1
        for ox in range(-half, half + 1):
            ax = px + ox
            if ax < 0:
                ax = 0
            elif ax >= aw:
                ax = aw - 1
            bx = qx + ox
            if bx < 0:
                bx = 0
            elif bx >= bw:
                bx = bw - 1
            if style_weight != 0.0:
                s = 0.0
                for c in range(n_style):
                    diff = np.float64(a_style[ay, ax, c]) - np.float64(b_style[by, bx, c])
                    s += diff * diff
                d += style_weight * s
            for p in range(n_planes):
                diff = np.float64(a_planes[ay, ax, p]) - np.float64(b_planes[by, bx, p])
                d += weights[p] * np.float64(b_mod[by, bx, p]) * (diff * diff)
        if d >= cutoff:
            return d
    return d


@njit(cache=True, nogil=True)
def all_distances(a_planes, a_style, b_planes, b_style, b_mod, weights, style_weight, nnf, half):
    bh, bw = nnf.shape[:2]
    dist = np.empty((bh, bw), dtype=np.float64)
    for y in range(bh):
        for x in range(bw):
            dist[y, x] = patch_dist(
                a_planes, a_style, b_planes, b_style, b_mod, weights, style_weight,
                nnf[y, x, 0], nnf[y, x, 1], x, y, half, np.inf,
            )
    return dist


@njit(cache=True, nogil=True)
def propagate(
    a_planes, a_style, b_planes, b_style, b_mod, weights, style_weight,
    nnf, dist, half, forward,
):
    """One sequential propagation sweep; accepts strictly better candidates."""
    bh, bw = nnf.shape[:2]
    aw = a_planes.shape[1]
    ah = a_planes.shape[0]
    step = 1 if forward else -1
    y0 = 0 if forward else bh - 1
    x0 = 0 if forward else bw - 1
    for yi in range(bh):
        y = y0 + step * yi
        for xi in range(bw):
            x = x0 + step * xi
            cur = dist[y, x]
            nx = x - step
            if 0 <= nx < bw:
                cx = nnf[y, nx, 0] + step
                cy = nnf[y, nx, 1]
                if cx < 0:
                    cx = 0
                elif cx >= aw:
                    cx = aw - 1
                if cx != nnf[y, x, 0] or cy != nnf[y, x, 1]:
                    d = patch_dist(
                        a_planes, a_style, b_planes, b_style, b_mod, weights,
                        style_weight, cx, cy, x, y, half, cur,
                    )
                    if d < cur:
                        nnf[y, x, 0] = cx
                        nnf[y, x, 1] = cy
                        dist[y, x] = d
                        cur = d
            ny = y - step
            if 0 <= ny < bh:
                cx = nnf[ny, x, 0]
                cy = nnf[ny, x, 1] + step
                if cy < 0:
                    cy = 0
                elif cy >= ah:
                    cy = ah - 1
                if cx != nnf[y, x, 0] or cy != nnf[y, x, 1]:
                    d = patch_dist(
                        a_planes, a_style, b_planes, b_style, b_mod, weights,
                        style_weight, cx, cy, x, y, half, cur,
                    )
                    if d < cur:
                        nnf[y, x, 0] = cx
                        nnf[y, x, 1] = cy
                        dist[y, x] = d


@njit(cache=True, nogil=True)
def random_search(
    a_planes, a_style, b_planes, b_style, b_mod, weights, style_weight,
    nnf, dist, half, seed, pass_index, decay,
):
    """Per-pixel exponential-radius random search around the current entry."""
    bh, bw = nnf.shape[:2]
    ah = a_planes.shape[0]
    aw = a_planes.shape[1]
    radius0 = float(max(aw, ah))
    for y in range(bh):
        for x in range(bw):
            pix = y * bw + x
            best_x = nnf[y, x, 0]
            best_y = nnf[y, x, 1]
            cur = dist[y, x]
            attempt = 0
            radius = radius0
            while radius >= 1.0:
                ri = int(radius)
                span = 2 * ri + 1
                hx = _rng(seed, STREAM_SEARCH, pass_index, pix, 2 * attempt)
                hy = _rng(seed, STREAM_SEARCH, pass_index, pix, 2 * attempt + 1)
                cx = best_x + _uniform_below(hx, span) - ri
                cy = best_y + _uniform_below(hy, span) - ri
                if cx < 0:
                    cx = 0
                elif cx >= aw:
                    cx = aw - 1
                if cy < 0:
                    cy = 0
                elif cy >= ah:
                    cy = ah - 1
                if cx != best_x or cy != best_y:
                    d = patch_dist(
                        a_planes, a_style, b_planes, b_style, b_mod, weights,
                        style_weight, cx, cy, x, y, half, cur,
                    )
                    if d < cur:
                        best_x = cx
                        best_y = cy
                        cur = d
                attempt += 1
                radius *= decay
            nnf[y, x, 0] = best_x
            nnf[y, x, 1] = best_y
            dist[y, x] = cur


@njit(cache=True, nogil=True)
def vote_kernel(nnf, a_style, half, target_h, target_w):
    """Average every exemplar sample contributed by the patch windows
    covering each target pixel; windows are truncated at target borders,
    source coordinates clamp to the exemplar edge."""
    ah, aw, n_ch = a_style.shape
    acc = np.zeros((target_h, target_w, n_ch), dtype=np.float64)
    cnt = np.zeros((target_h, target_w), dtype=np.int64)
    for qy in range(target_h):
        for qx in range(target_w):
            sx = nnf[qy, qx, 0]
            sy = nnf[qy, qx, 1]
            for oy in range(-half, half + 1):
                ty = qy + oy
                if ty < 0 or ty >= target_h:
                    continue
                ay = sy + oy
                if ay < 0:
                    ay = 0
                elif ay >= ah:
                    ay = ah - 1
                for ox in range(-half, half + 1):
                    tx = qx + ox
                    if tx < 0 or tx >= target_w:
                        continue
                    ax = sx + ox
                    if ax < 0:
                        ax = 0
                    elif ax >= aw:
                        ax = aw - 1
                    for c in range(n_ch):
                        acc[ty, tx, c] += a_style[ay, ax, c]
                    cnt[ty, tx] += 1
    out = np.empty((target_h, target_w, n_ch), dtype=np.float32)
    for y in range(target_h):
        for x in range(target_w):
            inv = 1.0 / cnt[y, x]
            for c in range(n_ch):
                out[y, x, c] = acc[y, x, c] * inv
    return out


@njit(cache=True, nogil=True)
def disocclusion_kernel(prev_pos, cur_pos, threshold, window_half):
    """1 where the current world position has a close-enough match in the
    previous frame's neighborhood, else 0."""
    h, w, n_ch = cur_pos.shape
    mask = np.empty((h, w), dtype=np.float32)
    thr2 = threshold * threshold
    for y in range(h):
        for x in range(w):
            best = np.inf
            for ny in range(max(0, y - window_half), min(h, y + window_half + 1)):
                for nx in range(max(0, x - window_half), min(w, x + window_half + 1)):
                    d = 0.0
                    for c in range(n_ch):
                        diff = np.float64(cur_pos[y, x, c]) - np.float64(prev_pos[ny, nx, c])
                        d += diff * diff
                    if d < best:
                        best = d
            mask[y, x] = 1.0 if best <= thr2 else 0.0
    return mask
