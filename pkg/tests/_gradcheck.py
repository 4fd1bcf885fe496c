"""Central finite-difference oracle used by the gradient tests."""

import numpy as np

H = 1e-5
RTOL = 1e-4
ATOL = 1e-8


def numeric_grads(loss_fn, params, h=H):
    """d loss / d p for every entry of every array in ``params`` (perturbed in place)."""
    out = []
    for p in params:
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = p[i]
            p[i] = old + h
            up = loss_fn()
            p[i] = old - h
            down = loss_fn()
            p[i] = old
            g[i] = (up - down) / (2 * h)
        out.append(g)
    return out


def max_rel_error(analytic, numeric, atol=ATOL):
    """Largest |a - n| / max(|a|, |n|) over entries that are not both below ``atol``."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        scale = np.maximum(np.abs(a), np.abs(n))
        err = np.abs(a - n)
        mask = scale > atol
        if mask.any():
            worst = max(worst, float((err[mask] / scale[mask]).max()))
        if (~mask).any():
            assert float(err[~mask].max()) <= atol
    return worst
