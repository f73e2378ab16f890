"""Pure Python/numpy versions of the compiled kernels.

Both backends must return identical results for identical inputs; the test
suite checks this whenever the extension is importable.
"""

import numpy as np

BACKEND = "python"

_CHUNK = 1 << 15


def route_topk(weights, uniforms):
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    uniforms = np.ascontiguousarray(uniforms, dtype=np.float64)
    n_experts = weights.shape[0]
    k = uniforms.shape[1]
    counts = np.zeros(n_experts, dtype=np.int64)
    positive_idx = np.arange(n_experts)
    for start in range(0, uniforms.shape[0], _CHUNK):
        u = uniforms[start:start + _CHUNK]
        rows = np.arange(u.shape[0])
        rem = np.tile(weights, (u.shape[0], 1))
        for j in range(k):
            # np.cumsum accumulates sequentially, matching the compiled loop
            cum = np.cumsum(rem, axis=1)
            target = u[:, j] * cum[:, -1]
            pos = rem > 0.0
            hit = (cum > target[:, None]) & pos
            chosen = np.argmax(hit, axis=1)
            missed = ~hit.any(axis=1)
            if missed.any():
                last_pos = np.max(np.where(pos[missed], positive_idx, -1), axis=1)
                chosen[missed] = last_pos
            counts += np.bincount(chosen, minlength=n_experts)
            rem[rows, chosen] = 0.0
    return counts


def min_makespan(sizes, n_gpus, slot_cap):
    sizes = [int(s) for s in sizes]
    n = len(sizes)
    load = [0] * n_gpus
    count = [0] * n_gpus
    assign = [0] * n
    best = [None, None]

    def search(i, used, cur_max):
        if i == n:
            best[0] = cur_max
            best[1] = list(assign)
            return
        for g in range(min(used + 1, n_gpus)):
            if count[g] >= slot_cap:
                continue
            load[g] += sizes[i]
            new_max = max(load[g], cur_max)
            if best[0] is None or new_max < best[0]:
                count[g] += 1
                assign[i] = g
                search(i + 1, used + 1 if g == used else used, new_max)
                count[g] -= 1
            load[g] -= sizes[i]

    search(0, 0, 0)
    if best[0] is None:
        return -1, None
    return best[0], best[1]
