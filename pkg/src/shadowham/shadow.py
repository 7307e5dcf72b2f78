"""Modified-energy recovery by Richardson extrapolation of central differences.

At step ``n`` the modified energy equals ``(-q.p' + p.q' - beta') / 2`` along
the interpolating trajectory.  Replacing the derivatives with symmetric
differences over ``j`` steps gives the first column ``T[j,1]``; the Richardson
recurrence

    T[j,k+1] = T[j,k] + (T[j,k] - T[j-1,k]) / ((1 - k/j)**2 - 1)

turns it into diagonal entries ``T[m,m]`` of order ``2m``.  The diagonal is
built one row at a time so adaptive policies can stop early.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Iterator, List, Optional, Sequence

import gmpy2
from gmpy2 import mpfr

from shadowham.integrator import Trajectory
from shadowham.xnum import format_decimal, working_bits, xreal


class BoundaryError(IndexError):
    """The requested stencil reaches beyond the ends of the trajectory."""


# -- Richardson table ---------------------------------------------------------

@lru_cache(maxsize=None)
def _row_factors(j: int, bits: int) -> tuple:
    # 1/((1 - k/j)^2 - 1) == -j^2 / (k (2j - k)), rounded once
    return tuple(mpfr(-j * j) / mpfr(k * (2 * j - k)) for k in range(1, j))


class RichardsonTableau:
    """Rolling Richardson table: push ``T[j,1]`` for ``j = 1, 2, ...``.

    Only the previous row is kept; each push returns the new diagonal entry.
    """

    def __init__(self):
        self._prev: List[mpfr] = []

    def __len__(self) -> int:
        return len(self._prev)

    def push(self, t_j1: mpfr) -> mpfr:
        prev = self._prev
        j = len(prev) + 1
        factors = _row_factors(j, working_bits())
        row = [t_j1]
        for k in range(j - 1):
            cur = row[k]
            row.append(cur + (cur - prev[k]) * factors[k])
        self._prev = row
        return row[-1]


def richardson(first_column: Iterable[mpfr]) -> List[mpfr]:
    """Diagonal ``[T[1,1], T[2,2], ...]`` of the table built on ``first_column``."""
    tab = RichardsonTableau()
    return [tab.push(t) for t in first_column]


def central_diff_weights(m: int, h) -> List[mpfr]:
    """Weights of the ``2m``-point symmetric derivative stencil.

    ``y'(0) ~ sum_j w[j-1] * (y(j h) - y(-j h))`` for ``j = 1..m``.
    """
    if m < 1:
        raise ValueError("stencil half-width must be positive")
    h = xreal(h)
    if h <= 0:
        raise ValueError("step must be positive")
    mf = math.factorial(m)
    out = []
    for j in range(1, m + 1):
        num = (-1) ** (j + 1) * mf * mf
        den = j * math.factorial(m - j) * math.factorial(m + j)
        out.append(mpfr(num) / mpfr(den) / h)
    return out


def central_difference(samples: Sequence[mpfr], h, m: Optional[int] = None) -> mpfr:
    """Apply the ``2m``-point stencil to ``samples[j] = y(jh) - y(-jh)``, ``j = 1..m``.

    ``samples[0]`` is ignored so that indices match ``j``.
    """
    m = len(samples) - 1 if m is None else m
    w = central_diff_weights(m, h)
    return gmpy2.fsum(wj * samples[j] for j, wj in enumerate(w, start=1))


# -- first column along a trajectory --------------------------------------------

def _check_stencil(traj: Trajectory, n: int, j: int) -> None:
    N = traj.steps
    if j < 1:
        raise BoundaryError(f"stencil half-width must be >= 1, got {j}")
    if n - j < 0:
        raise BoundaryError(f"index {n}: half-width {j} needs {j - n} states before the start")
    if n + j > N:
        raise BoundaryError(f"index {n}: half-width {j} needs {n + j - N} states past the end")


def _half_difference(traj: Trajectory, n: int, j: int) -> mpfr:
    """``s(jh) - s(-jh)`` for ``s(tau) = (-q_n.p(t_n+tau) + p_n.q(t_n+tau) - beta(t_n+tau)) / 2``."""
    pn, qn = traj.p[n], traj.q[n]
    pf, pb = traj.p[n + j], traj.p[n - j]
    qf, qb = traj.q[n + j], traj.q[n - j]
    acc = traj.beta[n - j] - traj.beta[n + j]
    for i in range(len(pn)):
        acc += pn[i] * (qf[i] - qb[i]) - qn[i] * (pf[i] - pb[i])
    return acc / 2


def first_column_entry(traj: Trajectory, n: int, j: int) -> mpfr:
    """``T[j,1]`` at step ``n``: the modified-energy formula with ``j``-step differences."""
    _check_stencil(traj, n, j)
    if traj.beta[n] is None:
        raise ValueError("trajectory was integrated without the auxiliary variable")
    return _half_difference(traj, n, j) / (2 * j * traj.h)


def diagonal_by_weights(traj: Trajectory, n: int, m: int) -> mpfr:
    """``T[m,m]`` through the explicit stencil weights instead of the recurrence."""
    _check_stencil(traj, n, m)
    w = central_diff_weights(m, traj.h)
    return gmpy2.fsum(wj * _half_difference(traj, n, j) for j, wj in enumerate(w, start=1))


@dataclass
class RichardsonDiagonal:
    n: int
    entries: List[mpfr]
    first_column: List[mpfr]

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, m: int) -> mpfr:
        """1-based access: ``diag[m] == T[m,m]``."""
        if m < 1:
            raise IndexError("orders start at 1")
        return self.entries[m - 1]


def boundary_limit(traj: Trajectory, n: int) -> int:
    return min(n, traj.steps - n)


def richardson_diagonal(traj: Trajectory, n: int, m_max: int) -> RichardsonDiagonal:
    if m_max < 1:
        raise BoundaryError("need at least one diagonal entry")
    _check_stencil(traj, n, m_max)
    col = [first_column_entry(traj, n, j) for j in range(1, m_max + 1)]
    return RichardsonDiagonal(n, richardson(col), col)


# -- order selection -------------------------------------------------------------

@dataclass(frozen=True)
class OrderPolicy:
    """How the truncation order ``m`` is chosen at each step.

    ``kind`` is ``"fixed"`` (always ``m``), ``"scan"`` (minimise the error
    estimate over ``2..m``) or ``"window"`` (scan until the running maximum of
    the error estimate over the last ``window + 1`` orders stops decreasing,
    then minimise over what was computed).
    """

    kind: str
    m: int
    window: int = 10

    def __post_init__(self):
        if self.kind not in ("fixed", "scan", "window"):
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.kind == "fixed" and self.m < 1:
            raise ValueError("fixed order must be >= 1")
        if self.kind != "fixed" and self.m < 2:
            raise ValueError("order cap must be >= 2")
        if self.window < 1:
            raise ValueError("window must be >= 1")

    @classmethod
    def fixed(cls, m: int) -> "OrderPolicy":
        return cls("fixed", m)

    @classmethod
    def full_scan(cls, m_cap: int = 200) -> "OrderPolicy":
        return cls("scan", m_cap)

    @classmethod
    def windowed(cls, m_cap: int = 200, window: int = 10) -> "OrderPolicy":
        return cls("window", m_cap, window)

    @classmethod
    def parse(cls, text: str) -> "OrderPolicy":
        """``fixed:M``, ``scan:CAP`` or ``window:CAP``."""
        kind, _, num = text.partition(":")
        try:
            value = int(num)
        except ValueError:
            raise ValueError(f"bad policy {text!r}; expected fixed:M, scan:CAP or window:CAP") from None
        if kind not in ("fixed", "scan", "window"):
            raise ValueError(f"bad policy {text!r}; expected fixed:M, scan:CAP or window:CAP")
        return cls(kind, value)

    def __str__(self) -> str:
        return f"{self.kind}:{self.m}"


@dataclass(frozen=True)
class ShadowEstimate:
    n: int
    value: mpfr
    m_star: int
    error_estimate: Optional[mpfr]
    truncated_by_boundary: bool = False


def _window_fires(errs: List[mpfr], window: int) -> bool:
    # errs[i] is the estimate for order i + 2; compare the two trailing windows
    if len(errs) < window + 2:
        return False
    older = max(errs[-window - 2:-1])
    newer = max(errs[-window - 1:])
    return older <= newer


def _choose(n: int, entries: Iterator[mpfr], policy: OrderPolicy, limit: int) -> ShadowEstimate:
    """Consume diagonal entries lazily and apply the policy.

    ``limit`` is the largest order available at this index.
    """
    if policy.kind == "fixed":
        m = min(policy.m, limit)
        if m < 1:
            raise BoundaryError(f"index {n}: no diagonal entries available")
        diag = [next(entries) for _ in range(m)]
        err = abs(diag[-1] - diag[-2]) if m >= 2 else None
        return ShadowEstimate(n, diag[-1], m, err, policy.m > limit and err != 0)

    top = min(policy.m, limit)
    if top < 2:
        raise BoundaryError(f"index {n}: fewer than two diagonal entries, cannot estimate error")
    prev = next(entries)
    values, errs = [], []
    fired = False
    for _ in range(2, top + 1):
        cur = next(entries)
        values.append(cur)
        errs.append(abs(cur - prev))
        prev = cur
        if not fired and _window_fires(errs, policy.window):
            fired = True
            if policy.kind == "window":
                break
    best = min(range(len(errs)), key=errs.__getitem__)  # first minimum: smallest m
    m_star = best + 2
    if policy.kind == "window":
        # a stop that fired before the clamp gives exactly the unclamped result
        truncated = limit < policy.m and not fired
    else:
        # a minimum within the last window below the clamp may continue beyond it
        truncated = limit < policy.m and m_star > limit - policy.window - 1
    if errs[best] == 0:
        # consecutive diagonal entries agree exactly: nothing left to gain
        truncated = False
    return ShadowEstimate(n, values[best], m_star, errs[best], truncated)


def select_order(diagonal: RichardsonDiagonal, policy: OrderPolicy) -> ShadowEstimate:
    """Pick ``T[m*,m*]`` from a precomputed diagonal according to ``policy``."""
    if policy.kind != "fixed" and len(diagonal) < 2:
        raise ValueError("need at least two diagonal entries to estimate the error")
    return _choose(diagonal.n, iter(diagonal.entries), policy, len(diagonal))


def _lazy_diagonal(traj: Trajectory, n: int) -> Iterator[mpfr]:
    tab = RichardsonTableau()
    j = 1
    while True:
        yield tab.push(first_column_entry(traj, n, j))
        j += 1


def shadow_at(traj: Trajectory, n: int, policy: OrderPolicy) -> ShadowEstimate:
    return _choose(n, _lazy_diagonal(traj, n), policy, boundary_limit(traj, n))


def shadow_fixed(traj: Trajectory, n: int, m: int) -> ShadowEstimate:
    """``T[m,m]`` at step ``n`` with error estimate ``|T[m,m] - T[m-1,m-1]|``."""
    _check_stencil(traj, n, m)
    return shadow_at(traj, n, OrderPolicy.fixed(m))


# -- series along a trajectory ------------------------------------------------------

MIN_HALF_WIDTH = 2


@dataclass
class ShadowSeries:
    trajectory: Trajectory
    policy: OrderPolicy
    stride: int
    estimates: List[ShadowEstimate] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.estimates)

    def values(self, include_truncated: bool = True) -> List[mpfr]:
        return [e.value for e in self.estimates if include_truncated or not e.truncated_by_boundary]

    def window(self):
        """First and last index whose estimate was not cut by the boundary."""
        ok = [e.n for e in self.estimates if not e.truncated_by_boundary]
        return (ok[0], ok[-1]) if ok else None

    def max_order(self, include_truncated: bool = False) -> int:
        return max((e.m_star for e in self.estimates
                    if include_truncated or not e.truncated_by_boundary), default=0)

    def csv_rows(self):
        h = self.trajectory.h
        for e in self.estimates:
            yield [
                str(e.n),
                format_decimal(e.n * h),
                format_decimal(e.value),
                str(e.m_star),
                "" if e.error_estimate is None else format_decimal(e.error_estimate),
                "1" if e.truncated_by_boundary else "0",
            ]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(SERIES_HEADER)
            writer.writerows(self.csv_rows())


SERIES_HEADER = ["n", "t", "value", "m_star", "error_estimate", "truncated"]


def shadow_series(traj: Trajectory, policy: OrderPolicy, stride: int = 1) -> ShadowSeries:
    """Estimates at ``n = 2, 2 + stride, ... <= N - 2``.

    The order at each index is clamped to ``min(n, N - n)``; estimates where
    that clamp cut the search are flagged ``truncated_by_boundary``.
    """
    if stride < 1:
        raise ValueError("stride must be positive")
    N = traj.steps
    if N < 2 * MIN_HALF_WIDTH:
        raise ValueError(f"trajectory of {N} steps is too short; need at least {2 * MIN_HALF_WIDTH}")
    series = ShadowSeries(traj, policy, stride)
    for n in range(MIN_HALF_WIDTH, N - MIN_HALF_WIDTH + 1, stride):
        series.estimates.append(shadow_at(traj, n, policy))
    return series


def drift(series, include_truncated: bool = False) -> mpfr:
    """Maximum minus minimum of the modified energy over the series.

    Accepts a :class:`ShadowSeries` or a plain sequence of values.  Estimates
    flagged as boundary-truncated are skipped unless ``include_truncated``.
    """
    if isinstance(series, ShadowSeries):
        values = series.values(include_truncated)
    else:
        values = [xreal(v) if isinstance(v, (int, str)) else v for v in series]
    if not values:
        raise ValueError("empty series: no estimates to take the drift over")
    return max(values) - min(values)
