"""Fourth-order finite-difference stencils on uniform grids."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

_C1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_C2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0


@lru_cache(maxsize=None)
def _weights(offsets: tuple, order: int) -> np.ndarray:
    """Taylor weights for derivative ``order`` at 0 from sample ``offsets``."""
    m = len(offsets)
    off = np.asarray(offsets, dtype=float)
    vander = np.vander(off, m, increasing=True).T
    rhs = np.zeros(m)
    rhs[order] = float(np.prod(np.arange(1, order + 1)))
    return np.linalg.solve(vander, rhs)


def _parity_pair(parity):
    if parity is None or isinstance(parity, (int, float)):
        return parity, parity
    return tuple(parity)


def derivative(f, h: float, order: int = 1, axis: int = -1, parity=None) -> np.ndarray:
    """Fourth-order derivative along ``axis``.

    ``parity`` is ``None`` (one-sided closures at the ends), ``+1``/``-1``
    (even/odd reflection about both end samples), or a ``(left, right)`` pair.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    arr = np.moveaxis(np.asarray(f, dtype=float), axis, -1)
    n = arr.shape[-1]
    if n < 6:
        raise ValueError("need at least 6 samples for fourth-order stencils")
    left, right = _parity_pair(parity)
    coef = _C1 if order == 1 else _C2
    scale = h ** order
    out = np.empty_like(arr)
    # differences against the centre sample keep constants exactly in the kernel
    c = arr[..., 2:n - 2]
    body = sum(coef[j] * (arr[..., j:n - 4 + j] - c) for j in (0, 1, 3, 4))
    out[..., 2:n - 2] = body / scale
    if left is None:
        for i in (0, 1):
            offs = tuple(range(-i, 6 - i))
            w = _weights(offs, order)
            out[..., i] = sum(w[j] * (arr[..., i + o] - arr[..., i]) for j, o in enumerate(offs) if o) / scale
    else:
        ext = np.concatenate([left * arr[..., 2:0:-1], arr[..., :4]], axis=-1)
        for i in (0, 1):
            out[..., i] = sum(coef[j] * (ext[..., i + j] - ext[..., i + 2]) for j in (0, 1, 3, 4)) / scale
    if right is None:
        for i in (n - 2, n - 1):
            offs = tuple(range(-(5 - (n - 1 - i)), n - i))
            w = _weights(offs, order)
            out[..., i] = sum(w[j] * (arr[..., i + o] - arr[..., i]) for j, o in enumerate(offs) if o) / scale
    else:
        ext = np.concatenate([arr[..., n - 4:], right * arr[..., n - 2:n - 4:-1]], axis=-1)
        for k, i in enumerate((n - 2, n - 1)):
            out[..., i] = sum(coef[j] * (ext[..., k + j] - ext[..., k + 2]) for j in (0, 1, 3, 4)) / scale
    return np.moveaxis(out, -1, axis)


def even_fill(values, axis: int = -1, ends=(True, True)) -> np.ndarray:
    """Replace end samples by the even (in distance) extrapolant of samples 1..3."""
    arr = np.moveaxis(np.array(values, dtype=float, copy=True), axis, -1)
    if ends[0]:
        arr[..., 0] = (15 * arr[..., 1] - 6 * arr[..., 2] + arr[..., 3]) / 10
    if ends[1]:
        arr[..., -1] = (15 * arr[..., -2] - 6 * arr[..., -3] + arr[..., -4]) / 10
    return np.moveaxis(arr, -1, axis)
