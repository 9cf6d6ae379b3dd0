"""Hot numeric kernels with numba-compiled and pure-numpy variants.

The backend is chosen once at import time from the ``TEMPORAG_KERNELS``
environment variable:

* ``auto`` (default): numba if importable, else numpy
* ``numba``: require numba, fail loudly if missing
* ``numpy``: force the pure-numpy fallback

Both variants implement identical arithmetic with identical accumulation
order, so results agree to float rounding. ``benchmarks/bench_kernels.py``
compares their throughput.
"""

from __future__ import annotations

import os

import numpy as np

_ENV_VAR = "TEMPORAG_KERNELS"
_VALID = ("auto", "numba", "numpy")


def _requested_backend() -> str:
    value = os.environ.get(_ENV_VAR, "auto").strip().lower()
    if value not in _VALID:
        raise RuntimeError(f"{_ENV_VAR} must be one of {_VALID}, got {value!r}")
    return value


# --- pure-numpy implementations ---------------------------------------------


def bm25_accumulate_numpy(scores, positions, tfs, idfs, dl_norm, k1):
    """Add okapi term contributions into per-document scores, in place.

    ``positions`` indexes documents; ``tfs`` and ``idfs`` are parallel
    per-posting arrays; ``dl_norm[d]`` is k1*(1 - b + b*dl_d/avg_dl).
    """
    np.add.at(scores, positions, idfs * tfs * (k1 + 1.0) / (tfs + dl_norm[positions]))
    return scores


def decay_multipliers_numpy(times, a0, a1, a2, l0, l1, l2):
    """exp(-(l0*|a0-t| + l1*|a1-t| + l2*|a2-t|)) elementwise."""
    return np.exp(-(l0 * np.abs(a0 - times) + l1 * np.abs(a1 - times) + l2 * np.abs(a2 - times)))


def entropy_alpha_numpy(sims):
    """Entropy weights for frame similarities.

    Returns (probs, entropy, alpha): probs is the clipped-normalized
    similarity distribution, entropy the per-frame -p*ln(p) with
    0*ln(0) := 0, alpha the entropy normalized to sum 1 (uniform when
    total entropy is zero).
    """
    sims = np.asarray(sims, dtype=np.float64)
    n = sims.shape[0]
    pos = np.maximum(sims, 0.0)
    total = float(np.sum(pos))
    if total > 0.0:
        probs = pos / total
    else:
        probs = np.zeros(n, dtype=np.float64)
    entropy = np.zeros(n, dtype=np.float64)
    nz = probs > 0.0
    entropy[nz] = -probs[nz] * np.log(probs[nz])
    h_total = float(np.sum(entropy))
    if h_total > 0.0:
        alpha = entropy / h_total
    else:
        alpha = np.full(n, 1.0 / n, dtype=np.float64)
    return probs, entropy, alpha


# --- numba variants ----------------------------------------------------------

_HAS_NUMBA = False
_requested = _requested_backend()

if _requested in ("auto", "numba"):
    try:
        from numba import njit

        _HAS_NUMBA = True
    except ImportError:
        if _requested == "numba":
            raise RuntimeError(f"{_ENV_VAR}=numba but numba is not installed")

if _HAS_NUMBA:

    @njit(cache=True)
    def bm25_accumulate_numba(scores, positions, tfs, idfs, dl_norm, k1):
        for i in range(positions.shape[0]):
            pos = positions[i]
            tf = tfs[i]
            scores[pos] += idfs[i] * tf * (k1 + 1.0) / (tf + dl_norm[pos])
        return scores

    @njit(cache=True)
    def decay_multipliers_numba(times, a0, a1, a2, l0, l1, l2):
        out = np.empty(times.shape[0], dtype=np.float64)
        for i in range(times.shape[0]):
            t = times[i]
            out[i] = np.exp(-(l0 * abs(a0 - t) + l1 * abs(a1 - t) + l2 * abs(a2 - t)))
        return out

    @njit(cache=True)
    def entropy_alpha_numba(sims):
        n = sims.shape[0]
        pos = np.empty(n, dtype=np.float64)
        total = 0.0
        for i in range(n):
            v = sims[i] if sims[i] > 0.0 else 0.0
            pos[i] = v
            total += v
        probs = np.zeros(n, dtype=np.float64)
        if total > 0.0:
            for i in range(n):
                probs[i] = pos[i] / total
        entropy = np.zeros(n, dtype=np.float64)
        h_total = 0.0
        for i in range(n):
            if probs[i] > 0.0:
                entropy[i] = -probs[i] * np.log(probs[i])
            h_total += entropy[i]
        alpha = np.empty(n, dtype=np.float64)
        if h_total > 0.0:
            for i in range(n):
                alpha[i] = entropy[i] / h_total
        else:
            for i in range(n):
                alpha[i] = 1.0 / n
        return probs, entropy, alpha

    def _entropy_alpha_dispatch(sims):
        return entropy_alpha_numba(np.ascontiguousarray(sims, dtype=np.float64))

    BACKEND = "numba"
    bm25_accumulate = bm25_accumulate_numba
    decay_multipliers = decay_multipliers_numba
    entropy_alpha = _entropy_alpha_dispatch
else:
    BACKEND = "numpy"
    bm25_accumulate = bm25_accumulate_numpy
    decay_multipliers = decay_multipliers_numpy
    entropy_alpha = entropy_alpha_numpy

USING_NUMBA = BACKEND == "numba"
