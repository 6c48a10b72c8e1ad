"""Laws of the multiplier M on [0, 1].

Every family exposes the same small surface:

* ``cdf(x)`` -- right-continuous distribution function, clamped outside [0, 1];
* ``p_delta(delta)`` / ``log_p_delta(delta)`` -- the near-one mass
  ``P(1 - delta < M <= 1)``; the log form stays finite where the mass itself
  underflows;
* ``log_density_gap(s)`` -- ``log f_M(1 - s)`` for the families with a density
  (the mixture delegates to its base);
* ``sample(rng, size)`` -- vectorized draws from a caller-owned generator;
* ``moments()`` -- ``(E M, E M^2)``.

Densities of the two exotic families are written in terms of the gap
``s = 1 - t`` because all of the interesting behaviour sits at ``t -> 1``.
"""

from __future__ import annotations

import math
import shlex
import threading
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import integrate, special

from .errors import CapabilityError, NumericalError, SpecError

__all__ = [
    "MDistSpec",
    "Beta",
    "RFamily",
    "ExpIntFamily",
    "TwoPoint",
    "AtomMixture",
    "ValidationReport",
    "validate",
    "require_simulatable",
    "parse_spec",
    "format_spec",
]

QUAD_EPSREL = 1e-12
TABLE_CELLS = 1 << 14
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(10)


class MDistSpec:
    """Base class for laws of M. Instances are immutable."""

    family = "abstract"
    counterexample = False
    upper_endpoint = 1.0

    def cdf(self, x):
        raise NotImplementedError

    def log_p_delta(self, delta):
        raise NotImplementedError

    def p_delta(self, delta):
        """``P(1 - delta < M <= 1)``; for ``delta >= 1`` this is ``P(M > 1 - delta)``."""
        return math.exp(self.log_p_delta(delta))

    #: atom at one, ``P(M = 1)``
    p0 = 0.0

    def log_density_gap(self, s):
        raise CapabilityError(f"{self.family} has no density")

    def density(self, t):
        if not 0.0 < t < 1.0:
            return 0.0
        return math.exp(self.log_density_gap(1.0 - t))

    def moments(self):
        raise NotImplementedError

    def sample(self, rng, size=None):
        raise NotImplementedError

    def assumptions(self):
        em, em2 = self.moments()
        return {
            "mass": bool(em < 1.0 and em2 - em * em > 0.0),
            "upend": self.upper_endpoint == 1.0,
            "nongeom": self.cdf(0.0) == 0.0,
        }

    def params(self):
        return {}

    def __str__(self):
        return format_spec(self)


def _check_delta(delta):
    if not delta > 0.0:
        raise SpecError("delta", f"must be positive, got {delta!r}")


def _draw(rng, size):
    return rng.random(1 if size is None else size)


def _scalar(out, size):
    return float(out[0]) if size is None else out


@dataclass(frozen=True)
class Beta(MDistSpec):
    alpha: float
    beta: float
    family = "beta"

    def __post_init__(self):
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise SpecError(name, f"must be a positive real, got {v!r}")

    def cdf(self, x):
        if x <= 0.0:
            return 0.0
        if x >= 1.0:
            return 1.0
        return float(special.betainc(self.alpha, self.beta, x))

    def log_p_delta(self, delta):
        _check_delta(delta)
        if delta >= 1.0:
            return 0.0
        # P(M > 1 - delta) = P(1 - M < delta) and 1 - M ~ Beta(beta, alpha)
        return float(np.log(special.betainc(self.beta, self.alpha, delta)))

    def log_density_gap(self, s):
        return (
            (self.alpha - 1.0) * math.log1p(-s)
            + (self.beta - 1.0) * math.log(s)
            - special.betaln(self.alpha, self.beta)
        )

    def moments(self):
        a, b = self.alpha, self.beta
        return a / (a + b), a * (a + 1.0) / ((a + b) * (a + b + 1.0))

    def sample(self, rng, size=None):
        a, b = self.alpha, self.beta
        if b == 1.0:
            out = _draw(rng, size) ** (1.0 / a)
        elif a == 1.0:
            out = 1.0 - _draw(rng, size) ** (1.0 / b)
        else:
            out = rng.beta(a, b, 1 if size is None else size)
        return _scalar(out, size)

    def params(self):
        return {"alpha": self.alpha, "beta": self.beta}


def _peak_quad(g, lo, hi, scale):
    """Integrate ``g`` over ``[lo, hi]`` when it peaks at ``hi`` and decays on ``scale``.

    The interval is cut at ``hi - scale * 4**k`` so that each piece is resolved
    by the adaptive rule even when ``scale`` is many orders below ``hi - lo``.
    """
    edges = [hi]
    step = scale
    while hi - step > lo:
        edges.append(hi - step)
        step *= 4.0
    edges.append(lo)
    total = 0.0
    err = 0.0
    for right, left in zip(edges[:-1], edges[1:]):
        with warnings.catch_warnings():
            # roundoff flags come from cancellation in the exponent at large
            # arguments; the relative error check below is the real gate
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, e = integrate.quad(g, left, right, epsabs=0.0, epsrel=QUAD_EPSREL, limit=200)
        total += val
        err += e
        if val < 1e-18 * total:
            break
    if total <= 0.0 or err > 1e-6 * total:
        raise NumericalError("tail quadrature did not converge", achieved=err / max(total, 1e-300))
    return total


class _SmoothFamily(MDistSpec):
    """Densities ``K exp(-phi(s))`` with ``s = 1 - t`` and ``phi`` decreasing in ``s``."""

    def _phi(self, s):
        raise NotImplementedError

    def _dphi(self, s):
        """``-dphi/ds`` (positive)."""
        raise NotImplementedError

    def _phi_vec(self, s):
        return np.array([self._phi(float(v)) for v in np.ravel(s)]).reshape(np.shape(s))

    @cached_property
    def _log_norm(self):
        # integrand is exp(-phi(s)) on (0, 1]; s near 0 is where phi blows up
        g = lambda s: math.exp(-self._phi(s)) if s > 0.0 else 0.0
        val, err = integrate.quad(g, 0.0, 1.0, epsabs=0.0, epsrel=1e-12, limit=400)
        if not val > 0.0 or err > 1e-10 * val:
            raise NumericalError("normalizing constant quadrature failed", achieved=err / val)
        return -math.log(val)

    @property
    def K(self):
        return math.exp(self._log_norm)

    def log_density_gap(self, s):
        if not 0.0 < s < 1.0:
            return -math.inf
        return self._log_norm - self._phi(s)

    def log_p_delta(self, delta):
        _check_delta(delta)
        if delta >= 1.0:
            return 0.0
        phi_d = self._phi(delta)
        if not math.isfinite(phi_d):
            return -math.inf
        slope = self._dphi(delta)
        scale = delta if slope <= 0.0 or not math.isfinite(slope) else min(delta, 1.0 / slope)
        if scale <= 0.0:
            return -math.inf
        if scale < 1e-9 * delta:
            # Laplace at the endpoint; relative error is O(scale / delta)
            return self._log_norm - phi_d + math.log(scale)

        def g(s):
            if s <= 0.0:
                return 0.0
            d = self._phi(s) - phi_d
            return math.exp(-d) if math.isfinite(d) else 0.0

        return self._log_norm - phi_d + math.log(_peak_quad(g, 0.0, delta, scale))

    def cdf(self, x):
        if x <= 0.0:
            return 0.0
        if x >= 1.0:
            return 1.0
        tail = math.exp(self.log_p_delta(1.0 - x))
        if tail < 0.5:
            return 1.0 - tail
        g = lambda s: math.exp(-self._phi(s))
        val, err = integrate.quad(g, 1.0 - x, 1.0, epsabs=0.0, epsrel=QUAD_EPSREL, limit=200)
        if err > 1e-10 * max(val, 1e-300):
            raise NumericalError("cdf quadrature did not converge", achieved=err)
        return min(1.0, val * self.K)

    @cached_property
    def _moments(self):
        out = []
        for power in (1, 2):
            g = lambda s, p=power: (1.0 - s) ** p * math.exp(-self._phi(s)) if s > 0.0 else 0.0
            val, err = integrate.quad(g, 0.0, 1.0, epsabs=0.0, epsrel=1e-12, limit=400)
            if err > 1e-10 * val:
                raise NumericalError("moment quadrature failed", achieved=err / val)
            out.append(val * self.K)
        return tuple(out)

    def moments(self):
        return self._moments

    @cached_property
    def _table(self):
        return _InverseCdfTable(self)

    def sample(self, rng, size=None):
        return _scalar(self._table.invert(_draw(rng, size)), size)


class _InverseCdfTable:
    """Inverse-CDF sampler on a uniform grid in ``t``.

    Cell masses come from 10-point Gauss-Legendre; inside a cell the CDF is the
    cubic Hermite interpolant built from the cell mass and the two endpoint
    densities, inverted by safeguarded Newton/bisection.
    """

    _lock = threading.Lock()

    def __init__(self, spec, cells=TABLE_CELLS):
        with self._lock:
            t = np.linspace(0.0, 1.0, cells + 1)
            h = 1.0 / cells
            f = self._dens(spec, t)
            mids = (t[:-1, None] + 0.5 * h * (1.0 + _GL_NODES[None, :])).ravel()
            fm = self._dens(spec, mids).reshape(cells, -1)
            mass = 0.5 * h * fm @ _GL_WEIGHTS
            self.t = t
            self.h = h
            self.f = f
            self.mass = mass
            self.cum = np.concatenate([[0.0], np.cumsum(mass)])
            self.total = float(self.cum[-1])

    @staticmethod
    def _dens(spec, t):
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            s = 1.0 - t
            phi = spec._phi_vec(s)
            out = np.exp(spec._log_norm - phi)
        out[~np.isfinite(out)] = 0.0
        out[s <= 0.0] = 0.0
        return out

    def cdf(self, x):
        """Table CDF, used to cross-check the quadrature route."""
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        j = np.minimum((x / self.h).astype(np.int64), len(self.mass) - 1)
        z = (x - self.t[j]) / self.h
        return (self.cum[j] + self._hermite(self._coeffs(j), z)) / self.total

    def _coeffs(self, j):
        return self.mass[j], self.h * self.f[j], self.h * self.f[j + 1]

    @staticmethod
    def _hermite(c, z):
        m, hf0, hf1 = c
        z2 = z * z
        z3 = z2 * z
        return m * (3.0 * z2 - 2.0 * z3) + hf0 * (z3 - 2.0 * z2 + z) + hf1 * (z3 - z2)

    @staticmethod
    def _hermite_dz(c, z):
        m, hf0, hf1 = c
        z2 = z * z
        return m * (6.0 * z - 6.0 * z2) + hf0 * (3.0 * z2 - 4.0 * z + 1.0) + hf1 * (3.0 * z2 - 2.0 * z)

    def invert(self, u):
        v = np.asarray(u, dtype=float) * self.total
        j = np.searchsorted(self.cum, v, side="right") - 1
        j = np.clip(j, 0, len(self.mass) - 1)
        c = self._coeffs(j)
        w = v - self.cum[j]
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(c[0] > 0.0, np.clip(w / c[0], 0.0, 1.0), 0.5)
        lo = np.zeros_like(z)
        hi = np.ones_like(z)
        for _ in range(60):
            r = self._hermite(c, z) - w
            above = r > 0.0
            hi = np.where(above, z, hi)
            lo = np.where(above, lo, z)
            d = self._hermite_dz(c, z)
            with np.errstate(divide="ignore", invalid="ignore"):
                zn = z - r / d
            bad = ~((zn >= lo) & (zn <= hi) & (d > 0.0))
            if bad.any():
                zn[bad] = 0.5 * (lo[bad] + hi[bad])
            step = np.max(np.abs(zn - z), initial=0.0) * self.h
            z = zn
            if step <= 1e-13:
                break
        else:
            raise NumericalError("inverse-CDF refinement did not converge", achieved=step)
        return self.t[j] + z * self.h


@dataclass(frozen=True)
class RFamily(_SmoothFamily):
    """Density ``K exp(-(1 - t**r) ** (-1/(r-1)))`` on (0, 1), ``r > 1``."""

    r: float
    family = "rfamily"

    def __post_init__(self):
        if not (isinstance(self.r, (int, float)) and math.isfinite(self.r) and self.r > 1.0):
            raise SpecError("r", f"must be a real > 1, got {self.r!r}")

    def _w(self, s):
        # 1 - (1 - s)**r without cancellation
        return -math.expm1(self.r * math.log1p(-s)) if s < 1.0 else 1.0

    def _phi(self, s):
        w = self._w(s)
        if w <= 0.0:
            return math.inf
        try:
            return w ** (-1.0 / (self.r - 1.0))
        except OverflowError:
            return math.inf

    def _phi_vec(self, s):
        s = np.asarray(s, dtype=float)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            w = -np.expm1(self.r * np.log1p(-s))
            return np.where(w > 0.0, w ** (-1.0 / (self.r - 1.0)), np.inf)

    def _dphi(self, s):
        a = 1.0 / (self.r - 1.0)
        w = self._w(s)
        try:
            return a * w ** (-a - 1.0) * self.r * (1.0 - s) ** (self.r - 1.0)
        except OverflowError:
            return math.inf

    def params(self):
        return {"r": self.r}


@dataclass(frozen=True)
class ExpIntFamily(_SmoothFamily):
    """Density ``K exp(-int_{1-t}^1 e^{1/u}/u du)`` on (0, 1).

    The exponent equals ``Ei(1/(1-t)) - Ei(1)`` (substitute ``v = 1/u``).
    """

    family = "expint"
    _EI1 = float(special.expi(1.0))

    def _phi(self, s):
        if s <= 0.0:
            return math.inf
        x = 1.0 / s
        if x > 700.0:
            return math.inf
        return float(special.expi(x)) - self._EI1

    def _phi_vec(self, s):
        s = np.asarray(s, dtype=float)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            x = 1.0 / s
            out = special.expi(np.where(x > 700.0, 1.0, x)) - self._EI1
        return np.where((s > 0.0) & (x <= 700.0), out, np.inf)

    def _dphi(self, s):
        if s <= 0.0 or 1.0 / s > 700.0:
            return math.inf
        return math.exp(1.0 / s) / s


@dataclass(frozen=True)
class TwoPoint(MDistSpec):
    """``P(M = 1) = p = 1 - P(M = 0)``: the stationary R is geometric."""

    p: float
    family = "twopoint"
    counterexample = True

    def __post_init__(self):
        if not (isinstance(self.p, (int, float)) and 0.0 < self.p < 1.0):
            raise SpecError("p", f"must lie in (0, 1), got {self.p!r}")

    def cdf(self, x):
        if x < 0.0:
            return 0.0
        if x < 1.0:
            return 1.0 - self.p
        return 1.0

    def log_p_delta(self, delta):
        _check_delta(delta)
        if delta > 1.0:
            return 0.0
        return math.log(self.p)

    @property
    def p0(self):
        return self.p

    def moments(self):
        return self.p, self.p

    def sample(self, rng, size=None):
        return _scalar((_draw(rng, size) < self.p).astype(float), size)

    def params(self):
        return {"p": self.p}


@dataclass(frozen=True)
class AtomMixture(MDistSpec):
    """Atom of mass ``p0`` at one mixed with a continuous base law."""

    p0: float
    base: MDistSpec = field(default=None)
    family = "atom"

    def __post_init__(self):
        if not (isinstance(self.p0, (int, float)) and 0.0 < self.p0 < 1.0):
            raise SpecError("p0", f"must lie in (0, 1), got {self.p0!r}")
        if not isinstance(self.base, MDistSpec):
            raise SpecError("base", "an atom mixture needs a base distribution")
        if isinstance(self.base, (TwoPoint, AtomMixture)):
            raise SpecError("base", f"base must have no atoms, got family {self.base.family}")

    def cdf(self, x):
        if x >= 1.0:
            return 1.0
        return (1.0 - self.p0) * self.base.cdf(x)

    def log_p_delta(self, delta):
        _check_delta(delta)
        if delta >= 1.0:
            return 0.0
        return float(np.logaddexp(math.log(self.p0), math.log1p(-self.p0) + self.base.log_p_delta(delta)))

    def log_density_gap(self, s):
        # density of the absolutely continuous part, away from the atom
        return math.log1p(-self.p0) + self.base.log_density_gap(s)

    def moments(self):
        em, em2 = self.base.moments()
        w = 1.0 - self.p0
        return self.p0 + w * em, self.p0 + w * em2

    def sample(self, rng, size=None):
        u = _draw(rng, size)
        atom = u < self.p0
        out = np.ones_like(u)
        k = int(np.count_nonzero(~atom))
        if k:
            out[~atom] = self.base.sample(rng, k)
        return _scalar(out, size)

    def params(self):
        return {"p0": self.p0}


@dataclass(frozen=True)
class ValidationReport:
    """Which of the three standing assumptions on M hold."""

    mass: bool
    upend: bool
    nongeom: bool
    counterexample: bool

    @property
    def eligible(self):
        """True when Gumbel-limit experiments are meaningful for this law."""
        return self.mass and self.upend and self.nongeom

    def failures(self):
        names = {"mass": "(Mass) M non-degenerate on [0, 1]",
                 "upend": "(upend) right endpoint of M equals 1",
                 "nongeom": "(nongeom) P(M=0)=0"}
        return [names[k] for k in ("mass", "upend", "nongeom") if not getattr(self, k)]


def validate(spec):
    if not isinstance(spec, MDistSpec):
        raise SpecError("family", f"not a distribution spec: {spec!r}")
    flags = spec.assumptions()
    return ValidationReport(counterexample=bool(spec.counterexample), **flags)


def require_simulatable(spec, allow_counterexample=False):
    """Raise :class:`IneligibleSpecError` unless ``spec`` is eligible or overridden."""
    from .errors import IneligibleSpecError

    report = validate(spec)
    if not report.eligible and not allow_counterexample:
        fails = "; ".join(report.failures())
        raise IneligibleSpecError(
            "family", f"{spec.family} violates {fails}; pass the counterexample override to simulate it"
        )
    return report


def p_delta_asymptotic(spec, delta, log=False):
    """Leading-order small-``delta`` form of ``p_delta``; meaningful only as ``delta -> 0``.

    * Beta(alpha, beta): ``delta**beta / (beta B(alpha, beta))``, the exact
      leading term, so the ratio to ``p_delta`` tends to 1;
    * r-family: ``(r delta)**(r/(r-1)) exp(-(r delta)**(-1/(r-1)))``; this
      fixes the order only, the ratio to ``p_delta`` tends to a constant
      other than 1 (``K exp(-1/4) / 2`` at ``r = 2``);
    * exponential-integral family: ``exp(-delta e^{1/delta})``, a log-scale
      equivalence.

    ``log=True`` returns the natural log, which stays finite when the value underflows.
    """
    _check_delta(delta)
    if isinstance(spec, Beta):
        out = spec.beta * math.log(delta) - math.log(spec.beta) - special.betaln(spec.alpha, spec.beta)
    elif isinstance(spec, RFamily):
        x = spec.r * delta
        out = spec.r / (spec.r - 1.0) * math.log(x) - x ** (-1.0 / (spec.r - 1.0))
    elif isinstance(spec, ExpIntFamily):
        out = -delta * math.exp(1.0 / delta) if delta > 1.0 / 709.0 else -math.inf
    else:
        raise CapabilityError(f"no near-one asymptotics for family {spec.family}")
    return out if log else math.exp(out)


# -- text form ---------------------------------------------------------------

_FAMILIES = {
    "beta": (Beta, ("alpha", "beta")),
    "rfamily": (RFamily, ("r",)),
    "expint": (ExpIntFamily, ()),
    "twopoint": (TwoPoint, ("p",)),
    "atom": (AtomMixture, ("p0",)),
}


def _as_float(key, value):
    try:
        return float(value)
    except (TypeError, ValueError):
        raise SpecError(key, f"expected a number, got {value!r}") from None


def parse_spec(source):
    """Build a spec from ``"family=beta alpha=2 beta=1"`` or an equivalent mapping.

    Mixtures carry their base under a ``base.`` prefix::

        family=atom p0=0.3 base.family=beta base.alpha=1 base.beta=1
    """
    if isinstance(source, str):
        items = {}
        for tok in shlex.split(source, comments=True):
            key, sep, value = tok.partition("=")
            if not sep or not key:
                raise SpecError(tok, "expected key=value")
            if key in items:
                raise SpecError(key, "given twice")
            items[key.strip()] = value.strip()
    else:
        items = {str(k).strip(): v for k, v in dict(source).items()}
    return _build(items, prefix="")


def _build(items, prefix):
    fam = items.get("family")
    if fam is None:
        raise SpecError(prefix + "family", "missing")
    fam = str(fam).lower()
    if fam not in _FAMILIES:
        raise SpecError(prefix + "family", f"unknown family {fam!r}; expected one of {sorted(_FAMILIES)}")
    cls, keys = _FAMILIES[fam]
    own = {k: v for k, v in items.items() if "." not in k and k != "family"}
    unknown = set(own) - set(keys)
    if unknown:
        raise SpecError(prefix + sorted(unknown)[0], f"not a parameter of {fam}")
    missing = [k for k in keys if k not in own]
    if missing:
        raise SpecError(prefix + missing[0], "missing")
    kwargs = [_as_float(prefix + k, own[k]) for k in keys]
    if fam == "atom":
        sub = {k[5:]: v for k, v in items.items() if k.startswith("base.")}
        if not sub:
            raise SpecError(prefix + "base.family", "missing")
        base = _build(sub, prefix + "base.")
        try:
            return AtomMixture(kwargs[0], base)
        except SpecError as exc:
            raise SpecError(prefix + exc.field, str(exc).split(": ", 1)[1]) from None
    try:
        return cls(*kwargs)
    except SpecError as exc:
        raise SpecError(prefix + exc.field, str(exc).split(": ", 1)[1]) from None


def _spec_items(spec, prefix=""):
    items = [(prefix + "family", spec.family)]
    items += [(prefix + k, repr(float(v))) for k, v in spec.params().items()]
    if isinstance(spec, AtomMixture):
        items += _spec_items(spec.base, prefix + "base.")
    return items


def format_spec(spec):
    return " ".join(f"{k}={v}" for k, v in _spec_items(spec))


def spec_to_dict(spec):
    return dict(_spec_items(spec))
