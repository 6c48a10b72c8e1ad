"""Norming constants ``(a_n, b_n)`` for the partial maxima.

Three routes:

* ``solve_bn`` / ``compute_an`` -- the implicit location equation
  ``c * b * ln p_{c'/b} = -ln n`` and the matching scale, for user-supplied
  tail constants (the true constants are unknown, so these are correct in
  order only);
* ``empirical_norming`` -- an affine fit to upper quantiles of a stationary
  sample, used for every distributional check;
* ``asymptotic_norming`` -- closed leading orders for the Beta, r- and
  exponential-integral families.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .ecdf import EcdfView
from .errors import CapabilityError, EstimationError, InsufficientSampleError, RootFindingError, SpecError
from .mdist import Beta, ExpIntFamily, RFamily, TwoPoint

DEFAULT_X_GRID = (-1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0)
METHODS = ("solved-lower", "solved-upper", "empirical", "asymptotic")


@dataclass(frozen=True)
class TailConstants:
    """Constants of the two-sided tail bound; (c0, c1) lower, (c2, c3) upper."""

    c0: float = 1.0
    c1: float = 1.0
    c2: float = 1.0
    c3: float = 1.0

    def __post_init__(self):
        for name in ("c0", "c1", "c2", "c3"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0.0):
                raise SpecError(name, f"must be positive, got {v!r}")

    def pair(self, which):
        if which == "lower":
            return self.c0, self.c1
        if which == "upper":
            return self.c2, self.c3
        raise SpecError("which", f"expected 'lower' or 'upper', got {which!r}")


@dataclass(frozen=True)
class NormingPair:
    a: float
    b: float
    n: float | None
    method: str
    theta_used: float = 1.0
    residual: float | None = None
    log_n: float | None = None
    constants: TailConstants | None = None
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.a > 0.0:
            raise SpecError("a", f"scale must be positive, got {self.a!r}")
        if self.method not in METHODS and self.method != "identity":
            raise SpecError("method", f"unknown method {self.method!r}")

    def u(self, x):
        return un_of_x(self, x)

    def to_dict(self):
        d = {
            "a": self.a,
            "b": self.b,
            "n": self.n,
            "log_n": self.log_n,
            "method": self.method,
            "theta_used": self.theta_used,
            "residual": self.residual,
            "constants": None if self.constants is None else asdict(self.constants),
        }
        d.update(self.extra)
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        known = {"a", "b", "n", "log_n", "method", "theta_used", "residual", "constants"}
        c = d.get("constants")
        return cls(a=d["a"], b=d["b"], n=d.get("n"), method=d["method"],
                   theta_used=d.get("theta_used", 1.0), residual=d.get("residual"),
                   log_n=d.get("log_n"), constants=None if c is None else TailConstants(**c),
                   extra={k: v for k, v in d.items() if k not in known})


IDENTITY = NormingPair(a=1.0, b=0.0, n=None, method="identity")


def un_of_x(pair, x):
    """Affine threshold ``b + x / a``."""
    return pair.b + np.asarray(x) / pair.a if np.ndim(x) else pair.b + x / pair.a


def _log_n(n, log_n):
    if log_n is None:
        if n is None:
            raise SpecError("n", "give n or log_n")
        if n < 2:
            raise SpecError("n", f"must be >= 2, got {n!r}")
        return math.log(n)
    if not log_n > 0.0:
        raise SpecError("log_n", f"must be positive, got {log_n!r}")
    return float(log_n)


def _n_from_log(log_n):
    return math.exp(log_n) if log_n < 700.0 else None


def _bn_lhs(spec, c, cp, b):
    return c * b * spec.log_p_delta(cp / b)


def solve_bn(spec, constants=TailConstants(), n=None, which="lower", log_n=None):
    """Root ``b`` of ``c * b * ln p_{c'/b} = -ln n`` with ``(c, c') = constants.pair(which)``.

    Bisection keeps a sign-changing bracket; each step first tries the secant
    (regula falsi, Illinois-damped) point and falls back to the midpoint when
    that point would not shrink the bracket by half. Returns ``b`` with
    ``|c b ln p_{c'/b} + ln n| < 1e-9 ln n`` or raises.
    """
    ln_n = _log_n(n, log_n)
    c, cp = constants.pair(which)
    f = lambda b: _bn_lhs(spec, c, cp, b) + ln_n
    lo = cp * (1.0 + 1e-6)
    f_lo = f(lo)
    if f_lo <= 0.0:
        raise RootFindingError(
            f"no root above b = c' = {cp}: left side at {lo:.6g} is {f_lo - ln_n:.6g} <= -ln n = {-ln_n:.6g}"
        )
    hi = max(2.0 * lo, ln_n)
    f_hi = f(hi)
    grow = 0
    while f_hi > 0.0:
        lo, f_lo = hi, f_hi
        hi *= 2.0
        f_hi = f(hi)
        grow += 1
        if grow > 200 or not math.isfinite(f_hi):
            raise RootFindingError(f"bracket growth failed; last [{lo:.6g}, {hi:.6g}], f = {f_hi!r}")
    ftol = 1e-11 * ln_n
    d_lo, d_hi = f_lo, f_hi  # Illinois-damped copies used for the secant point
    prev = None
    width = hi - lo
    for it in range(500):
        x = hi - d_hi * (hi - lo) / (d_hi - d_lo)
        if not lo < x < hi:
            x = 0.5 * (lo + hi)
        fx = f(x)
        if abs(fx) <= ftol:
            return x
        if fx > 0.0:
            lo, f_lo, d_lo = x, fx, fx
            if prev == "lo":
                d_hi *= 0.5
            prev = "lo"
        else:
            hi, f_hi, d_hi = x, fx, fx
            if prev == "hi":
                d_lo *= 0.5
            prev = "hi"
        if it % 3 == 2:
            if hi - lo > 0.5 * width:
                mid = 0.5 * (lo + hi)
                fm = f(mid)
                if fm > 0.0:
                    lo, f_lo, d_lo = mid, fm, fm
                else:
                    hi, f_hi, d_hi = mid, fm, fm
                prev = None
            width = hi - lo
        if hi - lo <= 4.0 * np.finfo(float).eps * hi:
            break
    x, fx = (lo, f_lo) if abs(f_lo) <= abs(f_hi) else (hi, f_hi)
    if abs(fx) < 1e-9 * ln_n:
        return x
    raise RootFindingError(f"no convergence in [{lo:.17g}, {hi:.17g}]; best residual {fx:.3g}")


def bn_residual(spec, constants, b, log_n, which="lower"):
    c, cp = constants.pair(which)
    return _bn_lhs(spec, c, cp, b) + log_n


def compute_an(spec, constants=TailConstants(), b=None, which="lower"):
    """Scale ``c (c' f_M(1 - c'/b) / (b p_{c'/b}) - ln p_{c'/b})``."""
    if isinstance(spec, TwoPoint):
        raise CapabilityError("the two-point law has no density; no scale constant")
    c, cp = constants.pair(which)
    if not b > cp:
        raise SpecError("b", f"must exceed c' = {cp}, got {b!r}")
    delta = cp / b
    log_p = spec.log_p_delta(delta)
    ratio = math.exp(math.log(cp) + spec.log_density_gap(delta) - math.log(b) - log_p)
    return c * (ratio - log_p)


def solved_norming(spec, constants=TailConstants(), n=None, which="lower", log_n=None):
    ln_n = _log_n(n, log_n)
    b = solve_bn(spec, constants, which=which, log_n=ln_n)
    a = compute_an(spec, constants, b, which)
    res = abs(bn_residual(spec, constants, b, ln_n, which))
    return NormingPair(a=a, b=b, n=n if n is not None else _n_from_log(ln_n), log_n=ln_n,
                       method=f"solved-{which}", residual=res, constants=constants)


def asymptotic_norming(spec, n=None, constants=TailConstants(), log_n=None):
    """Leading-order ``(a_n, b_n)`` for families with known near-one asymptotics.

    * Beta(alpha, beta): ``b = ln n / (c0 beta ln ln n)``, ``a = c0 beta ln ln n``;
    * r-family: ``b = c1**(1/r) (ln n / c0)**((r-1)/r)`` and
      ``a = c0 (b/c1)**(1/(r-1)) (1 + r**(-r/(r-1)))``, the sum of the two
      same-order terms of the scale formula;
    * exponential-integral family: ``a = ln n / (c0 c1)``, ``b = c1 ln ln n``.
    """
    ln_n = _log_n(n, log_n)
    lln = math.log(ln_n) if ln_n > 1.0 else 0.0
    if not lln > 0.0:
        raise SpecError("n", "needs ln ln n > 0 (n > e)")
    c0, c1 = constants.c0, constants.c1
    if isinstance(spec, Beta):
        b = ln_n / (c0 * spec.beta * lln)
        a = c0 * spec.beta * lln
    elif isinstance(spec, RFamily):
        r = spec.r
        b = c1 ** (1.0 / r) * (ln_n / c0) ** ((r - 1.0) / r)
        a = c0 * (b / c1) ** (1.0 / (r - 1.0)) * (1.0 + r ** (-r / (r - 1.0)))
    elif isinstance(spec, ExpIntFamily):
        a = ln_n / (c0 * c1)
        b = c1 * lln
    else:
        raise CapabilityError(f"no asymptotic norming for family {spec.family}")
    return NormingPair(a=a, b=b, n=n if n is not None else _n_from_log(ln_n), log_n=ln_n,
                       method="asymptotic", constants=constants)


def empirical_norming(sample, n, theta=1.0, x_grid=DEFAULT_X_GRID):
    """Least-squares ``q(x) ~ b + x / a`` through upper quantiles of a stationary sample.

    ``q(x)`` is the quantile at level ``1 - exp(-x) / (theta * n)``. ``sample``
    is an array or an :class:`EcdfView` (possibly only the retained tail of a
    larger sample). ``residual`` on the result is the largest absolute misfit.
    """
    view = sample if isinstance(sample, EcdfView) else EcdfView(sample)
    xs = np.asarray(sorted(set(float(x) for x in x_grid)))
    if xs.size < 4 or xs[0] > -1.0 or xs[-1] < 2.0:
        raise SpecError("x_grid", "need at least 4 distinct points spanning [-1, 2]")
    if not 0.0 < theta <= 1.0:
        raise SpecError("theta", f"must lie in (0, 1], got {theta!r}")
    n_eff = theta * n
    if not n_eff >= 1.0:
        raise SpecError("n", f"theta * n must be >= 1, got {n_eff!r}")
    need = math.ceil(100 * n_eff)
    if view.size < need:
        raise InsufficientSampleError(need, view.size)
    qs = view.quantile(1.0 - np.exp(-xs) / n_eff)
    design = np.column_stack([np.ones_like(xs), xs])
    (b, slope), *_ = np.linalg.lstsq(design, qs, rcond=None)
    if not slope > 0.0:
        raise EstimationError(f"quantiles do not increase over the grid (slope {slope:.3g})")
    fit = b + slope * xs
    return NormingPair(a=1.0 / slope, b=float(b), n=n, method="empirical", theta_used=float(theta),
                       residual=float(np.max(np.abs(qs - fit))),
                       extra={"x_grid": xs.tolist(), "quantiles": qs.tolist()})
