"""Compiled inner loops for :func:`panofuse.head.fuse`.

The reference semantics live in :func:`panofuse.head.fuse_bruteforce`; these
kernels must agree with it pixel for pixel.
"""
import numba
import numpy as np

_TILE = 8192


@numba.njit(boundscheck=False, inline="always")
def _argmax_step4(r0, r1, r2, r3, best, idx, j):
    # four channels per sweep keeps best/idx in registers between compares
    for p in range(r0.shape[0]):
        b = best[p]
        i = idx[p]
        v = r0[p]
        if v > b:
            b = v
            i = j
        v = r1[p]
        if v > b:
            b = v
            i = j + 1
        v = r2[p]
        if v > b:
            b = v
            i = j + 2
        v = r3[p]
        if v > b:
            b = v
            i = j + 3
        best[p] = b
        idx[p] = i


@numba.njit(boundscheck=False, cache=True)
def channel_argmax(flat, channels):
    """Max and first-argmax position (into ``channels``) over the selected rows of ``flat``."""
    n = flat.shape[1]
    m = channels.shape[0]
    last = m - 1
    best = flat[channels[0]].copy()
    idx = np.zeros(n, np.int32)
    for s in range(0, n, _TILE):
        e = min(n, s + _TILE)
        bb = best[s:e]
        ii = idx[s:e]
        j = 1
        while j < m:
            # past the end, repeat the last channel: equal values never win a strict compare
            _argmax_step4(flat[channels[j], s:e],
                          flat[channels[min(j + 1, last)], s:e],
                          flat[channels[min(j + 2, last)], s:e],
                          flat[channels[min(j + 3, last)], s:e],
                          bb, ii, np.int32(j))
            j += 4
    return best, idx


@numba.njit(boundscheck=False, cache=True)
def assign_things(flat, width, best_stuff, det_ch, ranges, use_centers, priority,
                  centers, det_centers):
    """Owner (index into the kept detections, or -1) for every pixel.

    A pixel goes to a thing when the largest cropped thing logit covering it
    beats the best stuff logit. Among thing channels, ties go to the lowest
    detection index; same-class owners are then picked by priority order or
    by closest predicted center.
    """
    n = flat.shape[1]
    k = det_ch.shape[0]
    thing_val = np.full(n, -np.inf, flat.dtype)
    first = np.full(n, -1, np.int32)
    for d in range(k):
        row = flat[det_ch[d]]
        y0, y1, x0, x1 = ranges[d, 0], ranges[d, 1], ranges[d, 2], ranges[d, 3]
        for y in range(y0, y1):
            base = y * width
            for x in range(x0, x1):
                p = base + x
                v = row[p]
                if v > thing_val[p]:
                    thing_val[p] = v
                    first[p] = d

    # class channel that wins each pixel for a thing, -1 where stuff wins
    win_ch = np.full(n, -1, np.int64)
    for d in range(k):
        y0, y1, x0, x1 = ranges[d, 0], ranges[d, 1], ranges[d, 2], ranges[d, 3]
        for y in range(y0, y1):
            base = y * width
            for x in range(x0, x1):
                p = base + x
                if thing_val[p] > best_stuff[p]:
                    win_ch[p] = det_ch[first[p]]

    owner = np.full(n, -1, np.int32)
    if not use_centers:
        for r in range(k):
            d = priority[r]
            ch = det_ch[d]
            y0, y1, x0, x1 = ranges[d, 0], ranges[d, 1], ranges[d, 2], ranges[d, 3]
            for y in range(y0, y1):
                base = y * width
                for x in range(x0, x1):
                    p = base + x
                    if owner[p] < 0 and win_ch[p] == ch:
                        owner[p] = d
    else:
        best_d = np.empty(n)
        offx = centers[0]
        offy = centers[1]
        for d in range(k):
            ch = det_ch[d]
            cx = det_centers[d, 0]
            cy = det_centers[d, 1]
            y0, y1, x0, x1 = ranges[d, 0], ranges[d, 1], ranges[d, 2], ranges[d, 3]
            for y in range(y0, y1):
                base = y * width
                py = y + 0.5
                for x in range(x0, x1):
                    p = base + x
                    if win_ch[p] == ch:
                        dx = ((x + 0.5) + np.float64(offx[p])) - cx
                        dy = (py + np.float64(offy[p])) - cy
                        dist = dx * dx + dy * dy
                        if owner[p] < 0 or dist < best_d[p]:
                            best_d[p] = dist
                            owner[p] = d
    return owner


@numba.njit(boundscheck=False, cache=True)
def compose_ids(owner, stuff_idx, stuff_class, det_segment_id, n_ids):
    """Segment id per pixel plus a pixel count per id."""
    n = owner.shape[0]
    ids = np.empty(n, np.int64)
    counts = np.zeros(n_ids, np.int64)
    for p in range(n):
        o = owner[p]
        if o >= 0:
            s = det_segment_id[o]
        else:
            s = stuff_class[stuff_idx[p]]
        ids[p] = s
        counts[s] += 1
    return ids, counts
