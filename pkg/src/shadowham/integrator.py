"""Explicit splitting integrators with the auxiliary energy variable.

A scheme is a table of kick coefficients ``a`` and drift coefficients ``b``.
One step of size ``h`` runs, for ``s = 1..S``::

    p    <- p - h a_s U_q(q)
    beta <- beta + h a_s (q . U_q(q) - 2 U(q))
    q    <- q + h b_s M^{-1} p

The ``beta`` update is the kick of the homogeneous extension
``alpha^2 U(q/alpha)`` in the variable conjugate to ``alpha``; drifts leave it
unchanged because the kinetic energy is quadratic.  It uses the position
*before* the drift of the same stage and never feeds back into ``(p, q)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

import gmpy2
from gmpy2 import mpfr

from shadowham import xnum
from shadowham.problems import InitialState, SeparableHamiltonian, SingularityError, Vector
from shadowham.xnum import format_decimal, nth_root, xreal


class IntegrationFault(RuntimeError):
    """A stage evaluation failed; carries the partial trajectory.

    Attributes:
        step: Index ``n`` of the step that was being taken (from state ``n``).
        stage: 1-based stage index inside the step.
        trajectory: States ``0..step`` computed before the fault, or ``None``
            when raised from a single step.
    """

    def __init__(self, message: str, step: Optional[int], stage: int, trajectory=None):
        super().__init__(message)
        self.step = step
        self.stage = stage
        self.trajectory = trajectory


class OrderIndeterminateError(ArithmeticError):
    """The observed global error vanished, so no convergence order exists."""


@dataclass(frozen=True)
class SplittingScheme:
    name: str
    a: Tuple[mpfr, ...]
    b: Tuple[mpfr, ...]
    declared_order: int

    def __post_init__(self):
        if len(self.a) != len(self.b) or not self.a:
            raise ValueError("kick and drift tables must be non-empty and equally long")

    @property
    def stages(self) -> int:
        return len(self.a)

    @property
    def force_evaluations(self) -> int:
        """Gradient evaluations per step when the last kick is reused by the next step."""
        kicks = sum(1 for a in self.a if a != 0)
        if self.b[-1] == 0 and self.a[0] != 0 and kicks > 1:
            kicks -= 1
        return kicks

    def coefficient_sums(self) -> Tuple[mpfr, mpfr]:
        return gmpy2.fsum(self.a), gmpy2.fsum(self.b)


def stormer_verlet() -> SplittingScheme:
    """Kick-drift-kick leapfrog."""
    half = mpfr(1) / 2
    return SplittingScheme("sv", (half, half), (mpfr(1), mpfr(0)), 2)


def _compose_leapfrog(name: str, weights: Sequence[mpfr], order: int) -> SplittingScheme:
    # consecutive half kicks of adjacent leapfrog substeps merge into one stage
    a, b = [], []
    carry = mpfr(0)
    for w in weights:
        a.append(carry + w / 2)
        b.append(w)
        carry = w / 2
    a.append(carry)
    b.append(mpfr(0))
    return SplittingScheme(name, tuple(a), tuple(b), order)


def yoshida4() -> SplittingScheme:
    """Yoshida's symmetric triple jump of leapfrog, order 4."""
    cbrt2 = nth_root(mpfr(2), 3)
    w1 = 1 / (2 - cbrt2)
    w0 = -cbrt2 / (2 - cbrt2)
    return _compose_leapfrog("yoshida4", (w1, w0, w1), 4)


# Blanes & Moan (2002), SRKN_6^b: order 4, six force evaluations per step,
# starting and ending with a kick.  Kick weights b_i, drift weights a_i.
_BM4_KICK = ("0.0829844064174052", "0.396309801498368", "-0.0390563049223486")
_BM4_DRIFT = ("0.245298957184271", "0.604872665711080")


def blanes_moan4() -> SplittingScheme:
    b1, b2, b3 = (xreal(s) for s in _BM4_KICK)
    a1, a2 = (xreal(s) for s in _BM4_DRIFT)
    b4 = 1 - 2 * (b1 + b2 + b3)
    a3 = mpfr(1) / 2 - (a1 + a2)
    kicks = (b1, b2, b3, b4, b3, b2, b1)
    drifts = (a1, a2, a3, a3, a2, a1, mpfr(0))
    return SplittingScheme("bm4", kicks, drifts, 4)


SCHEMES = {
    "sv": stormer_verlet,
    "yoshida4": yoshida4,
    "bm4": blanes_moan4,
}


@dataclass(frozen=True)
class PhaseState:
    p: Vector
    q: Vector
    beta: Optional[mpfr]
    n: int = 0
    t: mpfr = mpfr(0)


def _dot(x, y):
    return gmpy2.fsum(xi * yi for xi, yi in zip(x, y)) if len(x) > 1 else x[0] * y[0]


def _advance(ham: SeparableHamiltonian, scheme: SplittingScheme, p, q, beta, h: mpfr):
    """Run the stage loop once; ``beta=None`` skips the auxiliary equation."""
    minv = None if ham.unit_mass else ham.inverse_mass
    for s, (a_s, b_s) in enumerate(zip(scheme.a, scheme.b), start=1):
        if a_s != 0:
            ha = h * a_s
            try:
                if beta is None:
                    g = ham.gradient(q)
                else:
                    g, u = ham.grad_pot(q)
            except SingularityError as exc:
                raise IntegrationFault(f"stage {s}: {exc}", None, s) from exc
            p = tuple(pi - ha * gi for pi, gi in zip(p, g))
            if beta is not None:
                beta = beta + ha * (_dot(q, g) - 2 * u)
        if b_s != 0:
            hb = h * b_s
            if minv is None:
                q = tuple(qi + hb * pi for qi, pi in zip(q, p))
            else:
                q = tuple(qi + hb * mi * pi for qi, mi, pi in zip(q, minv, p))
    return p, q, beta


def augmented_step(ham: SeparableHamiltonian, scheme: SplittingScheme, state: PhaseState,
                   h: mpfr) -> PhaseState:
    if len(state.p) != ham.dim or len(state.q) != ham.dim:
        raise ValueError(f"state dimension does not match problem dimension {ham.dim}")
    p, q, beta = _advance(ham, scheme, state.p, state.q, state.beta, h)
    n = state.n + 1
    return PhaseState(p, q, beta, n, n * h)


class Trajectory:
    """Uniformly spaced states ``t_n = n h``, stored column-wise.

    ``p[n]`` and ``q[n]`` are tuples; ``beta[n]`` is a scalar (``None`` when
    integrated without the auxiliary equation).
    """

    def __init__(self, problem: SeparableHamiltonian, scheme: SplittingScheme, h: mpfr,
                 p: List[Vector], q: List[Vector], beta: List[Optional[mpfr]]):
        self.problem = problem
        self.scheme = scheme
        self.h = h
        self.p = p
        self.q = q
        self.beta = beta

    @property
    def steps(self) -> int:
        """Number of steps ``N``; there are ``N + 1`` states."""
        return len(self.p) - 1

    def __len__(self) -> int:
        return len(self.p)

    def time(self, n: int) -> mpfr:
        return n * self.h

    def state(self, n: int) -> PhaseState:
        if n < 0:
            n += len(self.p)
        return PhaseState(self.p[n], self.q[n], self.beta[n], n, self.time(n))

    def __getitem__(self, n: int) -> PhaseState:
        return self.state(n)

    @property
    def states(self) -> List[PhaseState]:
        return [self.state(n) for n in range(len(self.p))]

    def csv_header(self) -> List[str]:
        d = self.problem.dim
        return (["n", "t"] + [f"p_{i}" for i in range(1, d + 1)]
                + [f"q_{i}" for i in range(1, d + 1)] + ["beta"])

    def csv_rows(self):
        for n in range(len(self.p)):
            beta = self.beta[n]
            yield ([str(n), format_decimal(self.time(n))]
                   + [format_decimal(x) for x in self.p[n]]
                   + [format_decimal(x) for x in self.q[n]]
                   + ["" if beta is None else format_decimal(beta)])

    def write_csv(self, path) -> None:
        import csv
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.csv_header())
            writer.writerows(self.csv_rows())


def integrate(ham: SeparableHamiltonian, scheme: SplittingScheme, init: InitialState, h,
              N: int, with_beta: bool = True) -> Trajectory:
    """Take ``N`` steps of size ``h`` from ``init``.

    Raises :class:`IntegrationFault` if a stage fails; the exception carries
    the states computed so far.
    """
    if N < 1:
        raise ValueError("need at least one step")
    h = xreal(h)
    if len(init.p0) != ham.dim or len(init.q0) != ham.dim:
        raise ValueError(f"initial state dimension does not match problem dimension {ham.dim}")
    p, q = tuple(init.p0), tuple(init.q0)
    beta = mpfr(0) if with_beta else None
    ps, qs, bs = [p], [q], [beta]
    for n in range(N):
        try:
            p, q, beta = _advance(ham, scheme, p, q, beta, h)
        except IntegrationFault as exc:
            partial = Trajectory(ham, scheme, h, ps, qs, bs)
            raise IntegrationFault(f"step {n}, {exc}", n, exc.stage, partial) from exc
        ps.append(p)
        qs.append(q)
        bs.append(beta)
    return Trajectory(ham, scheme, h, ps, qs, bs)


def _final_position(ham, scheme, init, h, N):
    p, q = tuple(init.p0), tuple(init.q0)
    for _ in range(N):
        p, q, _unused = _advance(ham, scheme, p, q, None, h)
    return q


def observed_order(ham: SeparableHamiltonian, scheme: SplittingScheme, init: InitialState,
                   T="1", levels: int = 5, refine: int = 64) -> float:
    """Empirical convergence order of the global position error at time ``T``.

    Step sizes are ``T/100 * 2**-k`` for ``k < levels``; the reference run uses
    the smallest step divided by ``refine``.  Returns the least-squares slope
    of ``log(error)`` against ``log(h)``.
    """
    T = Fraction(T)
    base = 100
    steps = [base * 2 ** k for k in range(levels)]
    q_ref = _final_position(ham, scheme, init, xreal(T / (steps[-1] * refine)), steps[-1] * refine)
    # errors comparable to the rounding accumulated over the reference run are
    # not truncation error; an exact integrator produces nothing else
    noise = 10 * steps[-1] * refine * max(abs(x) for x in q_ref + (mpfr(1),)) * mpfr(2) ** (1 - xnum.working_bits())
    logs_h, logs_e = [], []
    for N in steps:
        h = T / N
        q = _final_position(ham, scheme, init, xreal(h), N)
        err = max(abs(a - b) for a, b in zip(q, q_ref))
        if err <= noise:
            continue
        logs_h.append(math.log(h))
        logs_e.append(float(gmpy2.log(err)))
    if len(logs_h) < 2:
        raise OrderIndeterminateError("global error is zero: order indeterminate")
    mh = sum(logs_h) / len(logs_h)
    me = sum(logs_e) / len(logs_e)
    num = sum((x - mh) * (y - me) for x, y in zip(logs_h, logs_e))
    den = sum((x - mh) ** 2 for x in logs_h)
    return num / den


def _determinant(rows: List[List[mpfr]]) -> mpfr:
    a = [list(r) for r in rows]
    n = len(a)
    det = mpfr(1)
    for c in range(n):
        piv = max(range(c, n), key=lambda r: abs(a[r][c]))
        if a[piv][c] == 0:
            return mpfr(0)
        if piv != c:
            a[c], a[piv] = a[piv], a[c]
            det = -det
        det *= a[c][c]
        for r in range(c + 1, n):
            f = a[r][c] / a[c][c]
            if f != 0:
                a[r] = [x - f * y for x, y in zip(a[r], a[c])]
    return det


def jacobian_determinant(ham: SeparableHamiltonian, scheme: SplittingScheme,
                         state: PhaseState, h, fd_step="1e-30") -> mpfr:
    """Determinant of the central-difference Jacobian of one step in ``(p, q)``."""
    h, eps = xreal(h), xreal(fd_step)
    d = ham.dim
    x0 = list(state.p) + list(state.q)

    def step(x):
        p, q, _unused = _advance(ham, scheme, tuple(x[:d]), tuple(x[d:]), None, h)
        return list(p) + list(q)

    columns = []
    for i in range(2 * d):
        xp, xm = list(x0), list(x0)
        xp[i] += eps
        xm[i] -= eps
        fp, fm = step(xp), step(xm)
        columns.append([(u - v) / (2 * eps) for u, v in zip(fp, fm)])
    jac = [[columns[j][i] for j in range(2 * d)] for i in range(2 * d)]
    return _determinant(jac)
