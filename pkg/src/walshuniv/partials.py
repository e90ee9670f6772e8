"""Maximal L^p norms of partial sums over an index window.

Three evaluators:
  * dense_scan: every cut index on the full grid (exact up to binary64 rounding
    of the final power sums; all partial-sum values are dyadic and exact);
  * radial_scan: polynomials whose coefficients are constant on each dyadic group
    [2^n, 2^(n+1)); uses the closed form of Dirichlet kernels on dyadic shells;
  * envelope bounds: certified upper bounds from block envelopes (flat.SplitBlock).
"""

from __future__ import annotations

import math

import numpy as np

from walshuniv.dyadic_core import BudgetError, check_scale, log2_sum

DEFAULT_SCAN_WORK = 2**31


def rademacher_grids(R: int) -> np.ndarray:
    """Row j holds R_{j+1} on the scale-R grid."""
    check_scale(R, "Rademacher table")
    x = np.arange(1 << R, dtype=np.int64)
    return np.stack([1 - 2 * ((x >> (R - 1 - j)) & 1) for j in range(R)]).astype(np.int8) \
        if R else np.ones((0, 1), dtype=np.int8)


class _WalshWalker:
    """Yields W_k on the grid for consecutive k, one vector product per step."""

    def __init__(self, R: int):
        self.R = R
        self.rad = rademacher_grids(R)
        pref = np.ones(1 << R, dtype=np.int8)
        self.prefix = []
        for j in range(R):
            pref = pref * self.rad[j]
            self.prefix.append(pref.copy())

    def at(self, k: int) -> np.ndarray:
        w = np.ones(1 << self.R, dtype=np.int8)
        j = 0
        while k:
            if k & 1:
                w = w * self.rad[j]
            k >>= 1
            j += 1
        return w

    def step(self, w: np.ndarray, k: int) -> np.ndarray:
        """W_k from W_{k-1}."""
        tz = (k & -k).bit_length() - 1
        return w * self.prefix[tz]


def _power_sums(S: np.ndarray, p: float, layers) -> float:
    """log2 of the integral of |S|^p (times the weight) on the grid."""
    R = S.size.bit_length() - 1
    a = np.abs(S)
    if layers is None:
        tot = float(np.sum(a**p))
        return (math.log2(tot) - R) if tot > 0 else -math.inf
    terms = []
    for lg, mask in layers:
        tot = float(np.sum(a[mask] ** p))
        if tot > 0:
            terms.append(math.log2(tot) - R + lg)
    return log2_sum(terms)


def weight_layers(weight_log2: np.ndarray | None):
    if weight_log2 is None:
        return None
    vals = np.unique(weight_log2)
    return [(float(v), weight_log2 == v) for v in vals]


def dense_scan(coeffs: np.ndarray, k_lo: int, R: int, p: float,
               weight_log2: np.ndarray | None = None,
               max_work: int = DEFAULT_SCAN_WORK) -> tuple[float, int]:
    """max over k_lo <= M < k_lo + len(coeffs) of the L^p norm of sum_{k_lo}^{M} c_k W_k.

    Returns (norm, argmax M).  Zero coefficients are skipped.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    n = coeffs.size
    if n == 0:
        return 0.0, k_lo
    nz = np.flatnonzero(coeffs)
    if nz.size == 0:
        return 0.0, k_lo
    span = int(nz[-1] - nz[0] + 1)
    if span * (1 << R) > max_work:
        raise BudgetError(f"dense partial-sum scan needs {span} x 2^{R} cell updates")
    check_scale(R, "partial-sum scan")
    layers = weight_layers(weight_log2)
    walker = _WalshWalker(R)
    S = np.zeros(1 << R)
    best, arg = -math.inf, k_lo
    k = k_lo + int(nz[0])
    w = walker.at(k)
    last = k_lo + int(nz[-1])
    while True:
        c = coeffs[k - k_lo]
        if c:
            S += c * w
            v = _power_sums(S, p, layers)
            if v > best:
                best, arg = v, k
        if k == last:
            break
        k += 1
        w = walker.step(w, k)
    return 2.0 ** (best / p), arg


def dirichlet_shell_values(N: np.ndarray, j: int) -> np.ndarray:
    """(N mod 2^j) - N_j 2^j: |D_N| on the shell [2^(-j-1), 2^(-j))."""
    return (N & ((1 << j) - 1)) - ((N >> j) & 1) * (1 << j)


def radial_scan(group_mag: dict[int, float], n0: int, n_end: int, p: float,
                chunk: int = 1 << 20) -> tuple[float, int]:
    """Exact max over M of the L^p norm of sum_{k=2^n0}^{M} b_{n(k)} W_k,
    where b is constant on dyadic groups n0 <= n < n_end."""
    best, arg = -math.inf, 1 << n0
    b = [float(group_mag[n]) for n in range(n0, n_end)]
    for nb in range(n0, n_end):
        bn = b[nb - n0]
        # radial part from complete groups and the head -b_nb D_{2^nb}
        def F(j: int) -> float:
            tot = 0.0
            for n in range(n0, nb):
                bm = b[n - n0]
                tot += bm * ((1 << (n + 1)) * (n + 1 <= j) - (1 << n) * (n <= j))
            return tot - bn * (1 << nb) * (nb <= j)
        shells = list(range(nb + 1))
        Fs = [F(j) for j in shells]
        F_tail = F(nb + 1)
        lo, hi = (1 << nb) + 1, (2 << nb) + 1     # exclusive cut N
        for start in range(lo, hi, chunk):
            N = np.arange(start, min(start + chunk, hi), dtype=np.int64)
            tot = np.zeros(N.size)
            for j in shells:
                v = dirichlet_shell_values(N, j).astype(float)
                high = (N >> (j + 1)) != 0
                sign_fixed = np.where(((N >> j) & 1) == 1, -1.0, 1.0)
                plus = np.abs(Fs[j] + bn * v) ** p
                minus = np.abs(Fs[j] - bn * v) ** p
                fixed = np.where(sign_fixed > 0, plus, minus)
                tot += 2.0 ** (-j - 1) * np.where(high, 0.5 * (plus + minus), fixed)
            tot += 2.0 ** (-nb - 1) * np.abs(F_tail + bn * N.astype(float)) ** p
            i = int(np.argmax(tot))
            if tot[i] > 0 and math.log2(tot[i]) > best:
                best, arg = math.log2(tot[i]), int(N[i]) - 1
    return 2.0 ** (best / p), arg
