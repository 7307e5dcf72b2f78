"""Experiment driver: drift-versus-step curves, parameter sweeps, traces.

All outputs are CSV with values printed at full working precision so that two
runs of the same configuration produce identical files.  Wall-clock timings
are only written when explicitly requested.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import gmpy2
from gmpy2 import mpfr

from shadowham import xnum
from shadowham.integrator import SCHEMES, IntegrationFault, Trajectory, integrate
from shadowham.problems import CATALOG, InitialState, SeparableHamiltonian
from shadowham.shadow import BoundaryError, OrderPolicy, ShadowSeries, drift, shadow_series
from shadowham.xnum import format_decimal, xreal

log = logging.getLogger(__name__)

DRIFT_HEADER = ["h", "drift", "max_m", "seconds"]
STATUS_HEADER = ["h", "status"]
TRACE_HEADER = ["n", "t", "accumulated", "instantaneous", "m_star"]
SWEEP_HEADER = ["param", "h", "drift", "max_m", "status"]
RATE_HEADER = ["scheme", "c", "intercept", "relative_residual", "points"]

# name of the initial-condition parameter for each problem, and its default
PROBLEM_PARAMS = {
    "pendulum": ("p0", "1"),
    "kepler": ("ecc", "0.6"),
    "henon-heiles": ("p1", "0.1"),
    "free": ("p0", "1"),
    "harmonic": ("p0", "1"),
}

FLOOR_MARGIN_DECADES = Fraction(3, 2)


def roundoff_floor(digits: Optional[int] = None) -> mpfr:
    """Smallest drift considered resolvable at ``digits`` working digits."""
    digits = xnum.get_working_precision() if digits is None else digits
    return mpfr(10) ** -(digits - 15)


def fit_threshold(digits: Optional[int] = None) -> mpfr:
    return roundoff_floor(digits) * gmpy2.exp10(mpfr(FLOOR_MARGIN_DECADES.numerator)
                                               / FLOOR_MARGIN_DECADES.denominator)


def parse_step(text: str) -> Fraction:
    """``"1/20"``, ``"0.05"`` or ``"5e-2"`` as an exact positive rational."""
    try:
        value = Fraction(text.strip())
    except (ValueError, ZeroDivisionError):
        raise ValueError(f"bad step size {text!r}") from None
    if value <= 0:
        raise ValueError(f"step size must be positive, got {text!r}")
    return value


def _label(h: Fraction) -> str:
    return f"{h.numerator}_{h.denominator}" if h.denominator != 1 else str(h.numerator)


@dataclass
class ExperimentConfig:
    """One problem, one scheme, a list of step sizes.

    Step sizes and the horizon are exact rationals; ``T/h`` must be a whole
    number for every ``h``.
    """

    problem: str
    param: Optional[str] = None
    scheme: str = "sv"
    T: str = "100"
    steps: Sequence[str] = ("1/10",)
    digits: int = xnum.DEFAULT_DIGITS
    policy: OrderPolicy = field(default_factory=OrderPolicy.windowed)
    stride: int = 1
    out: Optional[Path] = None
    timing: bool = False
    dim: int = 1

    def __post_init__(self):
        if self.problem not in CATALOG:
            raise ValueError(f"unknown problem {self.problem!r}; choose from {sorted(CATALOG)}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {sorted(SCHEMES)}")
        if self.digits < xnum.MIN_DIGITS:
            raise xnum.PrecisionError(f"precision must be at least {xnum.MIN_DIGITS} digits")
        if self.stride < 1:
            raise ValueError("stride must be positive")
        if self.param is None:
            self.param = PROBLEM_PARAMS[self.problem][1]
        if isinstance(self.policy, str):
            self.policy = OrderPolicy.parse(self.policy)
        if self.out is not None:
            self.out = Path(self.out)
        horizon = self.horizon
        hs = sorted({parse_step(s) for s in self.steps}, reverse=True)
        if len(hs) != len(self.steps):
            raise ValueError("step sizes must be distinct")
        for h in hs:
            if (horizon / h).denominator != 1:
                raise ValueError(f"T/h must be a whole number of steps; T={self.T}, h={h}")
        self.steps = [str(h) for h in hs]

    @property
    def horizon(self) -> Fraction:
        return parse_step(self.T)

    @property
    def step_sizes(self) -> List[Fraction]:
        return [Fraction(s) for s in self.steps]

    def build(self) -> Tuple[SeparableHamiltonian, InitialState]:
        if self.problem == "free":
            ham = CATALOG["free"](self.dim)
        else:
            ham = CATALOG[self.problem]()
        return ham, ham.initial(self.param)


@dataclass
class DriftRow:
    h: Fraction
    drift: Optional[mpfr]
    max_m: int
    seconds: Optional[float] = None
    status: str = "ok"
    below_floor: bool = False


@dataclass
class DriftCurve:
    rows: List[DriftRow] = field(default_factory=list)

    def ok_rows(self) -> List[DriftRow]:
        return [r for r in self.rows if r.drift is not None]

    def drift_at(self, h) -> Optional[mpfr]:
        h = Fraction(h)
        for r in self.rows:
            if r.h == h:
                return r.drift
        raise KeyError(h)

    def faults(self) -> List[DriftRow]:
        return [r for r in self.rows if r.status.startswith("fault")]

    def write_csv(self, path: Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(DRIFT_HEADER)
            for r in self.rows:
                w.writerow([
                    format_decimal(xreal(r.h)),
                    "" if r.drift is None else format_decimal(r.drift),
                    str(r.max_m),
                    "" if r.seconds is None else f"{r.seconds:.3f}",
                ])

    def write_status(self, path: Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(STATUS_HEADER)
            for r in self.rows:
                w.writerow([str(r.h), r.status])


@dataclass
class RateFit:
    """``ln(drift) ~ intercept - c / h``."""

    c: mpfr
    intercept: mpfr
    residual: mpfr
    relative_residual: mpfr
    points: int


def _with_precision(config: ExperimentConfig):
    if xnum.get_working_precision() != config.digits:
        xnum.set_working_precision(config.digits)


def _series_for(config: ExperimentConfig, ham, init, h: Fraction, scheme=None) -> ShadowSeries:
    scheme = SCHEMES[config.scheme]() if scheme is None else scheme
    N = int(config.horizon / h)
    traj = integrate(ham, scheme, init, xreal(h), N)
    return shadow_series(traj, config.policy, config.stride)


def _drift_row(config: ExperimentConfig, ham, init, h: Fraction, scheme=None,
               steps: Optional[int] = None) -> Tuple[DriftRow, Optional[ShadowSeries]]:
    start = time.perf_counter()
    scheme = SCHEMES[config.scheme]() if scheme is None else scheme
    N = int(config.horizon / h) if steps is None else steps
    try:
        traj = integrate(ham, scheme, init, xreal(h), N)
        series = shadow_series(traj, config.policy, config.stride)
        value = drift(series)
    except IntegrationFault as exc:
        log.warning("h=%s: integration fault at step %s, stage %s", h, exc.step, exc.stage)
        return DriftRow(h, None, 0, None, f"fault: step {exc.step} stage {exc.stage}"), None
    except (BoundaryError, ValueError) as exc:
        log.warning("h=%s: %s", h, exc)
        return DriftRow(h, None, 0, None, f"fault: {exc}"), None
    seconds = time.perf_counter() - start if config.timing else None
    below = value < roundoff_floor()
    status = "exact" if value == 0 else ("roundoff_floor" if below else "ok")
    return DriftRow(h, value, series.max_order(), seconds, status, below), series


def run_experiment(config: ExperimentConfig) -> DriftCurve:
    """Integrate and measure the drift for each step size in ``config``.

    Writes ``drift.csv``, ``status.csv`` and one ``series_h<num>_<den>.csv``
    per step size when ``config.out`` is set.  Faulting step sizes are
    recorded and skipped.
    """
    _with_precision(config)
    ham, init = config.build()
    curve = DriftCurve()
    if config.out is not None:
        config.out.mkdir(parents=True, exist_ok=True)
    for h in config.step_sizes:
        row, series = _drift_row(config, ham, init, h)
        curve.rows.append(row)
        log.info("h=%s drift=%s max_m=%d", h, "-" if row.drift is None else f"{float(row.drift):.3e}",
                 row.max_m)
        if config.out is not None and series is not None:
            series.write_csv(config.out / f"series_h{_label(h)}.csv")
    if config.out is not None:
        curve.write_csv(config.out / "drift.csv")
        curve.write_status(config.out / "status.csv")
    return curve


def sweep_parameter(config: ExperimentConfig, grid: Sequence[str]) -> List[Tuple[str, DriftRow]]:
    """Drift for each initial-condition parameter in ``grid`` and each step size."""
    if not grid:
        raise ValueError("empty parameter grid")
    _with_precision(config)
    rows = []
    for value in grid:
        cfg = replace(config, param=value, out=None)
        try:
            ham, init = cfg.build()
        except ValueError as exc:
            for h in cfg.step_sizes:
                rows.append((value, DriftRow(h, None, 0, None, f"fault: {exc}")))
            continue
        for h in cfg.step_sizes:
            row, _unused = _drift_row(cfg, ham, init, h)
            rows.append((value, row))
    if config.out is not None:
        config.out.mkdir(parents=True, exist_ok=True)
        with open(config.out / "sweep.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SWEEP_HEADER)
            for value, r in rows:
                w.writerow([value, format_decimal(xreal(r.h)),
                            "" if r.drift is None else format_decimal(r.drift), str(r.max_m), r.status])
    return rows


def fit_exp_rate(curve, digits: Optional[int] = None) -> RateFit:
    """Least-squares fit of ``ln(drift) = intercept - c/h``.

    ``curve`` is a :class:`DriftCurve` or a sequence of ``(h, drift)`` pairs.
    Points without a drift or within 1.5 decades of the round-off floor are
    dropped.  The relative residual is ``|r| / |ln(drift)|`` in the 2-norm.
    """
    pairs = ([(r.h, r.drift) for r in curve.rows] if isinstance(curve, DriftCurve) else list(curve))
    cutoff = fit_threshold(digits)
    xs, ys = [], []
    for h, d in pairs:
        if d is None:
            continue
        d = xreal(d) if not isinstance(d, type(cutoff)) else d
        if d <= cutoff:
            continue
        xs.append(1 / xreal(Fraction(h)))
        ys.append(gmpy2.log(d))
    if len(xs) < 3:
        raise ValueError(f"need at least 3 usable points above the round-off floor, got {len(xs)}")
    k = len(xs)
    mx = gmpy2.fsum(xs) / k
    my = gmpy2.fsum(ys) / k
    sxx = gmpy2.fsum((x - mx) ** 2 for x in xs)
    sxy = gmpy2.fsum((x - mx) * (y - my) for x, y in zip(xs, ys))
    slope = sxy / sxx
    intercept = my - slope * mx
    res = gmpy2.sqrt(gmpy2.fsum((y - intercept - slope * x) ** 2 for x, y in zip(xs, ys)))
    norm = gmpy2.sqrt(gmpy2.fsum(y * y for y in ys))
    rel = res / norm if norm != 0 else mpfr(0)
    return RateFit(-slope, intercept, res, rel, k)


@dataclass
class TraceRow:
    n: int
    t: mpfr
    accumulated: mpfr
    instantaneous: mpfr
    m_star: int
    truncated: bool


def trace_energy(config: ExperimentConfig, h=None) -> List[TraceRow]:
    """Per-step change of the modified energy at one step size.

    ``accumulated`` is measured from the first estimate that is not cut by
    the trajectory boundary; ``instantaneous`` is the change from the
    previous evaluated step.  Writes ``trace.csv`` when ``config.out`` is set.
    """
    if config.stride != 1:
        raise ValueError("energy trace requires stride 1")
    _with_precision(config)
    h = config.step_sizes[0] if h is None else parse_step(str(h))
    ham, init = config.build()
    series = _series_for(config, ham, init, h)
    est = series.estimates
    ref = next((e.value for e in est if not e.truncated_by_boundary), est[0].value)
    rows = []
    prev = None
    for e in est:
        inst = mpfr(0) if prev is None else abs(e.value - prev)
        rows.append(TraceRow(e.n, e.n * xreal(h), abs(e.value - ref), inst, e.m_star,
                             e.truncated_by_boundary))
        prev = e.value
    if config.out is not None:
        config.out.mkdir(parents=True, exist_ok=True)
        with open(config.out / "trace.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_HEADER)
            for r in rows:
                w.writerow([str(r.n), format_decimal(r.t), format_decimal(r.accumulated),
                            format_decimal(r.instantaneous), str(r.m_star)])
        series.write_csv(config.out / f"series_h{_label(h)}.csv")
    return rows


@dataclass
class MethodResult:
    scheme: str
    curve: DriftCurve
    rate: Optional[RateFit]
    note: str = ""


def compare_methods(config: ExperimentConfig, schemes: Sequence[str],
                    equal_cost: bool = False) -> Dict[str, MethodResult]:
    """Drift curves and fitted rates for several schemes on one problem.

    With ``equal_cost`` each scheme's step is scaled by its gradient
    evaluations per step relative to the cheapest scheme, and the horizon is
    rounded down to a whole number of steps.
    """
    if len(schemes) < 2:
        raise ValueError("comparison needs at least two schemes")
    unknown = [s for s in schemes if s not in SCHEMES]
    if unknown:
        raise ValueError(f"unknown schemes {unknown}")
    _with_precision(config)
    ham, init = config.build()
    costs = {s: SCHEMES[s]().force_evaluations for s in schemes}
    base = min(costs.values())
    results = {}
    for name in schemes:
        scheme = SCHEMES[name]()
        curve = DriftCurve()
        for h in config.step_sizes:
            if equal_cost:
                h_eff = h * Fraction(costs[name], base)
                N = int(config.horizon / h_eff)
            else:
                h_eff, N = h, None
            row, series = _drift_row(config, ham, init, h_eff, scheme, steps=N)
            curve.rows.append(row)
            if config.out is not None and series is not None:
                config.out.mkdir(parents=True, exist_ok=True)
                series.write_csv(config.out / f"series_{name}_h{_label(h_eff)}.csv")
        try:
            rate, note = fit_exp_rate(curve), ""
        except ValueError as exc:
            rate, note = None, str(exc)
        results[name] = MethodResult(name, curve, rate, note)
    if config.out is not None:
        config.out.mkdir(parents=True, exist_ok=True)
        with open(config.out / "compare.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["scheme"] + DRIFT_HEADER)
            for name, res in results.items():
                for r in res.curve.rows:
                    w.writerow([name, format_decimal(xreal(r.h)),
                                "" if r.drift is None else format_decimal(r.drift), str(r.max_m),
                                "" if r.seconds is None else f"{r.seconds:.3f}"])
        with open(config.out / "rates.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(RATE_HEADER)
            for name, res in results.items():
                if res.rate is None:
                    w.writerow([name, "", "", "", "0"])
                else:
                    w.writerow([name, format_decimal(res.rate.c), format_decimal(res.rate.intercept),
                                format_decimal(res.rate.relative_residual), str(res.rate.points)])
    return results


def invariant_suite(digits: int = 40, seed: int = 0) -> List[Tuple[str, bool, str]]:
    """Quick structural self-check; returns ``(name, passed, detail)`` triples.

    Checks beta-passivity, unit Jacobian determinant and run-to-run
    determinism for every scheme on every catalogued problem, plus the
    decimal round-trip of the number backend on ``seed``-driven inputs.
    """
    import random

    from shadowham.integrator import augmented_step, jacobian_determinant, PhaseState

    results = []
    with xnum.working_precision(digits):
        rng = random.Random(seed)
        bad = 0
        for _ in range(200):
            s = f"{rng.choice('+-')}{rng.randint(0, 10**6)}.{rng.randint(0, 10**9):09d}e{rng.randint(-40, 40)}"
            x = xnum.parse_decimal(s)
            if xnum.parse_decimal(format_decimal(x)) != x:
                bad += 1
        results.append(("decimal round-trip", bad == 0, f"{bad} mismatches in 200"))
        h = xreal("1/10")
        tol = mpfr(10) ** -(digits // 2)
        for pname, factory in CATALOG.items():
            ham = factory()
            init = ham.initial()
            for sname, scheme_factory in SCHEMES.items():
                scheme = scheme_factory()
                a = integrate(ham, scheme, init, h, 20, with_beta=True)
                b = integrate(ham, scheme, init, h, 20, with_beta=False)
                passive = a.p == b.p and a.q == b.q
                again = integrate(ham, scheme, init, h, 20, with_beta=True)
                determ = (a.p, a.q, a.beta) == (again.p, again.q, again.beta)
                state = PhaseState(a.p[5], a.q[5], a.beta[5])
                det = jacobian_determinant(ham, scheme, state, h, fd_step=f"1e-{digits // 3}")
                unit = abs(det - 1) < tol
                ok = passive and determ and unit
                results.append((f"{pname}/{sname}", ok,
                                f"passive={passive} deterministic={determ} |det-1|={float(abs(det - 1)):.1e}"))
    return results
