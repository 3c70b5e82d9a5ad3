"""Compiled inner loops.  Nothing here allocates or validates input."""
from __future__ import annotations

import numba as nb
import numpy as np

DONE = 0
NEED_WORDS = 1
NEAR_EDGE = 2
STEP_CAP_HIT = 3

# state slots shared with cluster.py
S_POS = 0        # current walker position (flat index)
S_STEPS = 1      # steps taken by the current particle
S_COUNT = 2      # particles absorbed so far
S_WORD = 3       # index of the next unread word
S_LEFT = 4       # number of undecoded chunks left in curbuf[0]
S_WALKING = 5    # 1 while a walker is in flight


@nb.njit(cache=True)
def grow_chunk(grid, offsets, origin, width, d, nbits, ndir, words, state,
               curbuf, sites, n_target, step_cap, field, qv):
    """Release walkers from ``origin`` until ``n_target`` sites are absorbed.

    ``grid`` holds 0 for vacant sites and the 1-based absorption index
    otherwise.  Returns one of the status codes above; ``state`` and
    ``curbuf`` (the partially decoded word) carry everything needed to
    resume after a word refill or a grid regrow.
    ``field`` (size > 1) is a per-site function whose squared increments
    along each walk are summed into ``qv[particle]``.
    """
    track = field.size > 1
    mask = (1 << nbits) - 1
    per_word = 64 // nbits
    pos = state[S_POS]
    steps = state[S_STEPS]
    n = state[S_COUNT]
    wi = state[S_WORD]
    cur = curbuf[0]
    left = state[S_LEFT]
    walking = state[S_WALKING]
    nwords = words.size
    status = DONE
    while n < n_target:
        if walking == 0:
            pos = origin
            steps = 0
            walking = 1
        while grid[pos] != 0:
            if left == 0:
                if wi == nwords:
                    status = NEED_WORDS
                    break
                cur = words[wi]
                wi += 1
                left = per_word
            c = np.int64(cur & np.uint64(mask))
            cur = cur >> np.uint64(nbits)
            left -= 1
            if c >= ndir:
                continue
            nxt = pos + offsets[c]
            if track:
                dv = field[nxt] - field[pos]
                qv[n] += dv * dv
            pos = nxt
            steps += 1
            if steps > step_cap:
                status = STEP_CAP_HIT
                break
        if status != DONE:
            break
        n += 1
        grid[pos] = n
        sites[n - 1] = pos
        walking = 0
        # a vacant neighbour outside the array must never be reachable
        rem = pos
        edge = False
        for _ in range(d):
            c0 = rem % width
            rem //= width
            if c0 <= 1 or c0 >= width - 2:
                edge = True
        if edge:
            status = NEAR_EDGE
            break
    state[S_POS] = pos
    state[S_STEPS] = steps
    state[S_COUNT] = n
    state[S_WORD] = wi
    curbuf[0] = cur
    state[S_LEFT] = left
    state[S_WALKING] = walking
    return status
