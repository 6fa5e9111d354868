"""Bracketing grid plus golden-section refinement for 1-D maximization."""

from __future__ import annotations

import logging
import math
from typing import Callable, NamedTuple

import numpy as np

log = logging.getLogger(__name__)

INV_PHI = (math.sqrt(5) - 1) / 2
INV_PHI2 = (3 - math.sqrt(5)) / 2

# values within this relative gap count as ties
TIE_RTOL = 1e-9


class SearchResult(NamedTuple):
    x: float
    fx: float
    n_local_maxima: int


def golden_max(f: Callable[[float], float], a: float, b: float, tol: float) -> tuple[float, float]:
    """Golden-section search for the maximum of a unimodal ``f`` on [a, b].

    Returns the best evaluated point once the bracket is narrower than ``tol``.
    """
    a, b = min(a, b), max(a, b)
    h = b - a
    if h <= tol:
        xm = 0.5 * (a + b)
        return xm, f(xm)
    n = int(math.ceil(math.log(tol / h) / math.log(INV_PHI)))
    c = a + INV_PHI2 * h
    d = a + INV_PHI * h
    yc, yd = f(c), f(d)
    best = (c, yc) if yc >= yd else (d, yd)
    for _ in range(n):
        if yc >= yd:
            b, d, yd = d, c, yc
            h *= INV_PHI
            c = a + INV_PHI2 * h
            yc = f(c)
            if yc > best[1]:
                best = (c, yc)
        else:
            a, c, yc = c, d, yd
            h *= INV_PHI
            d = a + INV_PHI * h
            yd = f(d)
            if yd > best[1]:
                best = (d, yd)
    return best


def _local_maxima(values: np.ndarray) -> list[int]:
    idx = []
    for i, v in enumerate(values):
        left = values[i - 1] if i > 0 else -np.inf
        right = values[i + 1] if i + 1 < len(values) else -np.inf
        if (v >= left and v > right) or (v > left and v >= right):
            idx.append(i)
    return idx


def grid_golden_max(f: Callable[[float], float], a: float, b: float, *, n_grid: int = 64,
                    tol: float = 1e-9, label: str = "objective") -> SearchResult:
    """Maximize ``f`` on [a, b]: uniform grid scan, then golden section.

    The golden section runs inside the two grid cells around the best grid
    point.  Ties (within 1e-9 relative) resolve to the smallest x.  Several
    well-separated local maxima on the grid are logged, and the largest
    one is refined.
    """
    if n_grid < 3:
        raise ValueError("n_grid must be >= 3")
    xs = np.linspace(a, b, n_grid)
    vals = np.array([f(x) for x in xs])
    peak = vals.max()
    i = int(np.flatnonzero(vals >= peak - TIE_RTOL * abs(peak))[0])

    maxima = _local_maxima(vals)
    distinct = [j for j in maxima if abs(vals[j] - peak) > 1e-6 * abs(peak)]
    if distinct:
        log.warning("%s is not unimodal on [%g, %g]: %d local maxima on the grid",
                    label, a, b, len(maxima))

    lo, hi = xs[max(i - 1, 0)], xs[min(i + 1, n_grid - 1)]
    x, fx = golden_max(f, lo, hi, tol)
    if fx < vals[i] or (fx == vals[i] and xs[i] < x):
        x, fx = float(xs[i]), float(vals[i])
    return SearchResult(float(x), float(fx), len(maxima))
