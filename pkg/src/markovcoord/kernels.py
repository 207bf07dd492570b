"""Hot numeric kernels: numba fast path with a pure-numpy fallback.

The backend is selected once at import from the environment variable
``MARKOVCOORD_BACKEND`` (``auto`` | ``numba`` | ``numpy``; default
``auto`` uses numba when it imports) and can be switched at runtime with
:func:`set_backend`.  Kernels return integer count tables or symbol
arrays that are bit-identical across backends; floating-point reductions
over many sequence pairs (``aep_enumerate`` probabilities) may differ at
machine precision because the two paths accumulate in different orders.

Hot paths covered here: sequential Markov channel sampling, keyed
codeword generation, count tables for codeword scans, and exhaustive
sequence-pair enumeration for the AEP audit.  Everything else in the
package is cheap enough for plain numpy.
"""

from __future__ import annotations

import os

import numpy as np

from .rng import uniform_grid, uniforms

_BACKENDS = ("numba", "numpy")
_requested = os.environ.get("MARKOVCOORD_BACKEND", "auto").lower()

try:  # pragma: no cover - exercised implicitly by backend selection
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    njit = None
    _HAVE_NUMBA = False

if _requested == "auto":
    _backend = "numba" if _HAVE_NUMBA else "numpy"
elif _requested in _BACKENDS:
    if _requested == "numba" and not _HAVE_NUMBA:
        raise ImportError("MARKOVCOORD_BACKEND=numba but numba is not importable")
    _backend = _requested
else:
    raise ValueError(f"MARKOVCOORD_BACKEND must be auto|numba|numpy, got {_requested!r}")


def backend_name() -> str:
    return _backend


def set_backend(name: str) -> None:
    """Switch kernel backend at runtime (mainly for tests and benchmarks)."""
    global _backend
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not _HAVE_NUMBA:
        raise ImportError("numba backend requested but numba is not importable")
    _backend = name


# ---------------------------------------------------------------------------
# numpy reference implementations
# ---------------------------------------------------------------------------


def _markov_path_np(x_seq, y0, cdf_rows, us):
    """Sequentially sample y_t ~ row(x_t, y_{t-1}); cdf_rows is (nx*ny, ny)."""
    n = x_seq.size
    ny = cdf_rows.shape[1]
    y = np.empty(n, dtype=np.int64)
    prev = y0
    for t in range(n):
        row = cdf_rows[x_seq[t] * ny + prev]
        prev = int(np.sum(row <= us[t]))
        y[t] = prev
    return y


def _word_symbols_np(keys, row_idx, cdf_rows):
    """(len(keys), n) symbol table; word m, position t drawn from
    cdf_rows[row_idx[t]] using the keyed uniform stream of keys[m]."""
    us = uniform_grid(keys, row_idx.size)
    return np.sum(cdf_rows[row_idx][None, :, :] <= us[:, :, None], axis=-1, dtype=np.int64)


def _offset_counts_np(words, base, stride, ncells):
    """Count table per word row: cell index at position t is
    base[t] + words[m, t] * stride."""
    m = words.shape[0]
    flat = base[None, :] + words * stride + (np.arange(m, dtype=np.int64) * ncells)[:, None]
    return np.bincount(flat.ravel(), minlength=m * ncells).reshape(m, ncells)


def _aep_enumerate_np(xdig, ydig, y0, logpx, logw_flat, support_flat, q_flat,
                      n, nx, ny, eps, block=64):
    """Exhaustive scan over all (x, y) sequence pairs.

    Returns (typical_count, prob_typical, prob_all, nll_min, nll_max);
    the nll statistics are over typical pairs only.  Pairs stepping on a
    zero-probability transition get probability zero and nll = inf.
    """
    nx_rows, _ = xdig.shape
    ncells = q_flat.size
    x_counts = np.stack([np.bincount(r, minlength=nx) for r in xdig])
    x_logp = x_counts @ np.where(np.isfinite(logpx), logpx, 0.0)
    x_support_ok = ~np.any((x_counts > 0) & ~np.isfinite(logpx)[None, :], axis=1)
    logw_safe = np.where(support_flat, logw_flat, 0.0)

    yprev = np.concatenate([np.full((ydig.shape[0], 1), y0, dtype=np.int64),
                            ydig[:, :-1]], axis=1)
    ybase = yprev * (nx * ny) + ydig  # cell index with the x contribution left out

    typical = 0
    prob_t = 0.0
    prob_all = 0.0
    nll_min, nll_max = np.inf, -np.inf
    for lo in range(0, ydig.shape[0], block):
        yb = ybase[lo:lo + block]
        b = yb.shape[0]
        cells = yb[:, None, :] + xdig[None, :, :] * ny  # (b, Nx, n)
        pair_ids = np.arange(b * nx_rows, dtype=np.int64).reshape(b, nx_rows, 1)
        counts = np.bincount(
            (cells + pair_ids * ncells).ravel(), minlength=b * nx_rows * ncells
        ).reshape(b, nx_rows, ncells)
        gap = np.abs(counts / n - q_flat[None, None, :]).sum(axis=-1)
        w_ok = ~np.any((counts > 0) & ~support_flat[None, None, :], axis=-1)
        logp = counts @ logw_safe + x_logp[None, :]
        ok = w_ok & x_support_ok[None, :]
        prob = np.where(ok, np.exp2(np.where(ok, logp, 0.0)), 0.0)
        prob_all += prob.sum()
        mask = gap <= eps
        typical += int(mask.sum())
        if mask.any():
            prob_t += prob[mask].sum()
            with np.errstate(invalid="ignore"):
                nll = np.where(ok, -logp / n, np.inf)[mask]
            nll_min = min(nll_min, float(nll.min()))
            nll_max = max(nll_max, float(nll.max()))
    return typical, prob_t, prob_all, nll_min, nll_max


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if _HAVE_NUMBA:

    @njit(cache=True)
    def _markov_path_nb(x_seq, y0, cdf_rows, us):
        n = x_seq.size
        ny = cdf_rows.shape[1]
        y = np.empty(n, dtype=np.int64)
        prev = y0
        for t in range(n):
            row = cdf_rows[x_seq[t] * ny + prev]
            u = us[t]
            s = 0
            while row[s] <= u:
                s += 1
            prev = s
            y[t] = s
        return y

    @njit(cache=True)
    def _word_symbols_nb(keys, row_idx, cdf_rows):
        m = keys.size
        n = row_idx.size
        out = np.empty((m, n), dtype=np.int64)
        phi = np.uint64(0x9E3779B97F4A7C15)
        m1 = np.uint64(0xBF58476D1CE4E5B9)
        m2 = np.uint64(0x94D049BB133111EB)
        inv = 1.0 / 9007199254740992.0
        for i in range(m):
            k = keys[i]
            for t in range(n):
                z = k + np.uint64(t + 1) * phi
                z = (z ^ (z >> np.uint64(30))) * m1
                z = (z ^ (z >> np.uint64(27))) * m2
                z = z ^ (z >> np.uint64(31))
                u = (z >> np.uint64(11)) * inv
                row = cdf_rows[row_idx[t]]
                s = 0
                while row[s] <= u:
                    s += 1
                out[i, t] = s
        return out

    @njit(cache=True)
    def _offset_counts_nb(words, base, stride, ncells):
        m, n = words.shape
        out = np.zeros((m, ncells), dtype=np.int64)
        for i in range(m):
            for t in range(n):
                out[i, base[t] + words[i, t] * stride] += 1
        return out

    @njit(cache=True)
    def _aep_enumerate_nb(xdig, ydig, y0, logpx, logw_flat, support_flat, q_flat,
                          n, nx, ny, eps):
        ncells = q_flat.size
        counts = np.zeros(ncells, dtype=np.int64)
        typical = 0
        prob_t = 0.0
        prob_all = 0.0
        nll_min = np.inf
        nll_max = -np.inf
        for yi in range(ydig.shape[0]):
            for xi in range(xdig.shape[0]):
                for c in range(ncells):
                    counts[c] = 0
                logp = 0.0
                ok = True
                prev = y0
                for t in range(n):
                    x = xdig[xi, t]
                    j = ydig[yi, t]
                    cell = (prev * nx + x) * ny + j
                    counts[cell] += 1
                    if not support_flat[cell] or not np.isfinite(logpx[x]):
                        ok = False
                    else:
                        logp += logpx[x] + logw_flat[cell]
                    prev = j
                gap = 0.0
                for c in range(ncells):
                    gap += abs(counts[c] / n - q_flat[c])
                prob = 2.0 ** logp if ok else 0.0
                prob_all += prob
                if gap <= eps:
                    typical += 1
                    prob_t += prob
                    nll = -logp / n if ok else np.inf
                    if nll < nll_min:
                        nll_min = nll
                    if nll > nll_max:
                        nll_max = nll
        return typical, prob_t, prob_all, nll_min, nll_max


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


def markov_path(x_seq: np.ndarray, y0: int, cdf_rows: np.ndarray, key: int) -> np.ndarray:
    """Sample a channel output path for input x_seq from initial state y0.

    cdf_rows is the flattened (nx*ny, ny) conditional cdf table; the
    uniform at position t comes from the keyed counter stream, so both
    backends consume identical randomness.
    """
    us = uniforms(key, x_seq.size)
    if _backend == "numba":
        return _markov_path_nb(x_seq, np.int64(y0), cdf_rows, us)
    return _markov_path_np(x_seq, int(y0), cdf_rows, us)


def word_symbols(keys: np.ndarray, row_idx: np.ndarray, cdf_rows: np.ndarray) -> np.ndarray:
    """Generate one symbol word per key; position t draws from cdf_rows[row_idx[t]]."""
    keys = np.ascontiguousarray(keys, dtype=np.uint64)
    row_idx = np.ascontiguousarray(row_idx, dtype=np.int64)
    if _backend == "numba":
        return _word_symbols_nb(keys, row_idx, cdf_rows)
    return _word_symbols_np(keys, row_idx, cdf_rows)


def offset_counts(words: np.ndarray, base: np.ndarray, stride: int, ncells: int) -> np.ndarray:
    """Per-row count tables over cells base[t] + words[m, t] * stride."""
    words = np.ascontiguousarray(words, dtype=np.int64)
    base = np.ascontiguousarray(base, dtype=np.int64)
    if _backend == "numba":
        return _offset_counts_nb(words, base, np.int64(stride), np.int64(ncells))
    return _offset_counts_np(words, base, int(stride), int(ncells))


def aep_enumerate(xdig, ydig, y0, logpx, logw_flat, support_flat, q_flat,
                  n, nx, ny, eps):
    """Exhaustive (x, y) pair scan; see _aep_enumerate_np for the contract."""
    args = (
        np.ascontiguousarray(xdig, dtype=np.int64),
        np.ascontiguousarray(ydig, dtype=np.int64),
        np.int64(y0),
        np.ascontiguousarray(logpx, dtype=np.float64),
        np.ascontiguousarray(logw_flat, dtype=np.float64),
        np.ascontiguousarray(support_flat, dtype=np.bool_),
        np.ascontiguousarray(q_flat, dtype=np.float64),
        np.int64(n), np.int64(nx), np.int64(ny), float(eps),
    )
    if _backend == "numba":
        return _aep_enumerate_nb(*args)
    return _aep_enumerate_np(*args)


def digit_rows(count: int, base: int, n: int) -> np.ndarray:
    """(count, n) table of base-`base` digit expansions, most significant first."""
    codes = np.arange(count, dtype=np.int64)
    out = np.empty((count, n), dtype=np.int64)
    for t in range(n - 1, -1, -1):
        out[:, t] = codes % base
        codes //= base
    return out
