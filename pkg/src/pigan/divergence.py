"""Exact divergences and the pi-weighted adversarial value on finite supports.

Everything here works on normalised mass vectors in float64.  The functions
are the machine-checkable counterpart of the neural training code: for a
fixed model distribution ``q`` the best discriminator, the value it attains
and the generator cost it induces are all available in closed form.

Conventions: ``0 * log(0 / q) = 0``; a directed KL whose first argument puts
mass where the second has none is ``math.inf``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .exceptions import ConsistencyError, DimensionError, DomainError, UnsupportedLimitError

MASS_TOL = 1e-12
PROFILE_EPS = 1e-12
IDENTITY_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    """Probability masses over ``support_size`` states."""

    masses: np.ndarray

    def __post_init__(self):
        m = np.array(self.masses, dtype=np.float64).ravel()
        if m.size < 1:
            raise DimensionError("a distribution needs at least one state")
        if not np.all(np.isfinite(m)) or np.any(m < 0):
            raise DomainError("masses must be finite and non-negative")
        if abs(m.sum() - 1.0) > MASS_TOL:
            raise DomainError(f"masses sum to {m.sum()!r}, not 1")
        m.setflags(write=False)
        object.__setattr__(self, "masses", m)

    @classmethod
    def from_weights(cls, weights) -> "DiscreteDistribution":
        """Normalise non-negative weights into a distribution."""
        w = np.asarray(weights, dtype=np.float64).ravel()
        total = w.sum()
        if total <= 0:
            raise DomainError("weights must have positive total")
        return cls(w / total)

    @property
    def support_size(self) -> int:
        return self.masses.size

    def __len__(self):
        return self.masses.size

    def __eq__(self, other):
        if not isinstance(other, DiscreteDistribution):
            return NotImplemented
        return self.support_size == other.support_size and np.array_equal(self.masses, other.masses)

    def allclose(self, other: "DiscreteDistribution", tol: float = MASS_TOL) -> bool:
        return self.support_size == other.support_size and bool(
            np.all(np.abs(self.masses - other.masses) <= tol)
        )


def as_distribution(x) -> DiscreteDistribution:
    if isinstance(x, DiscreteDistribution):
        return x
    return DiscreteDistribution(x)


def check_pi(pi) -> float:
    """Validate a mixing weight; the endpoints 0 and 1 are rejected."""
    pi = float(pi)
    if not 0.0 < pi < 1.0:
        raise DomainError(f"pi must lie strictly inside (0, 1), got {pi!r}")
    return pi


def _pair(p, q):
    p, q = as_distribution(p), as_distribution(q)
    if p.support_size != q.support_size:
        raise DimensionError(
            f"support sizes differ: {p.support_size} vs {q.support_size}"
        )
    return p, q


def _xlogy_ratio(a: np.ndarray, b: np.ndarray) -> float:
    # sum a*log(a/b) over a > 0; caller guarantees b > 0 wherever a > 0
    pos = a > 0
    return float(np.sum(a[pos] * np.log(a[pos] / b[pos])))


def kl_divergence(p, q) -> float:
    """Directed Kullback-Leibler divergence KL[p || q] in nats.

    >>> kl_divergence([1.0, 0.0], [0.5, 0.5])  # doctest: +ELLIPSIS
    0.6931...
    """
    p, q = _pair(p, q)
    a, b = p.masses, q.masses
    if np.any((a > 0) & (b == 0)):
        return math.inf
    return max(_xlogy_ratio(a, b), 0.0)


def mixture(p, q, pi) -> DiscreteDistribution:
    p, q = _pair(p, q)
    pi = check_pi(pi)
    m = pi * p.masses + (1.0 - pi) * q.masses
    return DiscreteDistribution(m / m.sum())


def js_pi_divergence(p, q, pi) -> float:
    """pi * KL[p || M] + (1 - pi) * KL[q || M] with M = pi p + (1 - pi) q."""
    p, q = _pair(p, q)
    pi = check_pi(pi)
    m = pi * p.masses + (1.0 - pi) * q.masses
    value = pi * _xlogy_ratio(p.masses, m) + (1.0 - pi) * _xlogy_ratio(q.masses, m)
    return max(value, 0.0)


def pi_entropy_constant(pi) -> float:
    """The additive term pi log pi + (1 - pi) log(1 - pi), in [-log 2, 0)."""
    pi = check_pi(pi)
    return pi * math.log(pi) + (1.0 - pi) * math.log1p(-pi)


def joint_support(p, q):
    """Restrict ``p`` and ``q`` to the states where at least one is positive.

    Returns the two restricted distributions and the kept state indices.
    """
    p, q = _pair(p, q)
    keep = np.flatnonzero((p.masses > 0) | (q.masses > 0))
    return DiscreteDistribution(p.masses[keep]), DiscreteDistribution(q.masses[keep]), keep


def optimal_discriminator(p, q, pi) -> np.ndarray:
    """Value-maximising discriminator pi p / (pi p + (1 - pi) q), per state.

    Values are clamped into ``(1e-12, 1 - 1e-12)`` so downstream logs stay
    finite.  A state where both masses vanish has no defined value; drop such
    states first with :func:`joint_support`.
    """
    p, q = _pair(p, q)
    pi = check_pi(pi)
    a = pi * p.masses
    b = (1.0 - pi) * q.masses
    denom = a + b
    if np.any(denom == 0):
        bad = np.flatnonzero(denom == 0).tolist()
        raise DomainError(f"states {bad} lie outside supp(p) | supp(q)")
    return np.clip(a / denom, PROFILE_EPS, 1.0 - PROFILE_EPS)


def _check_profile(d, n) -> np.ndarray:
    d = np.asarray(d, dtype=np.float64).ravel()
    if d.size != n:
        raise DimensionError(f"profile has {d.size} values, distributions have {n} states")
    return d


def adversarial_value(p, q, d, pi) -> float:
    """pi * E_p[log d] + (1 - pi) * E_q[log(1 - d)] for a discriminator profile ``d``."""
    p, q = _pair(p, q)
    pi = check_pi(pi)
    d = _check_profile(d, p.support_size)
    if not np.all(np.isfinite(d)):
        raise DomainError("profile values must be finite")
    a, b = p.masses, q.masses
    if np.any((a > 0) & (d <= 0)) or np.any((b > 0) & (d >= 1)):
        raise DomainError("profile reaches 0 or 1 on a state with positive mass")
    if np.any((d < 0) | (d > 1)):
        raise DomainError("profile values must lie in [0, 1]")
    pa, qb = a > 0, b > 0
    real = float(np.sum(a[pa] * np.log(d[pa])))
    fake = float(np.sum(b[qb] * np.log1p(-d[qb])))
    return pi * real + (1.0 - pi) * fake


def generator_cost(p, q, pi) -> float:
    """Generator cost under the optimal discriminator, computed two ways.

    Route (a) evaluates the adversarial value at the optimal profile; route
    (b) adds :func:`pi_entropy_constant` to :func:`js_pi_divergence`.  The two
    must agree to 1e-10, otherwise :class:`ConsistencyError` is raised.
    Route (a) is returned.
    """
    p, q = _pair(p, q)
    pi = check_pi(pi)
    ps, qs, _ = joint_support(p, q)
    via_value = adversarial_value(ps, qs, optimal_discriminator(ps, qs, pi), pi)
    via_js = pi_entropy_constant(pi) + js_pi_divergence(p, q, pi)
    if not abs(via_value - via_js) < IDENTITY_TOL:
        raise ConsistencyError(
            f"generator cost routes disagree: {via_value!r} vs {via_js!r}"
        )
    return via_value


def identity_residual(p, q, pi) -> float:
    """|V(D*) - constant - JS_pi|; zero up to rounding."""
    ps, qs, _ = joint_support(p, q)
    via_value = adversarial_value(ps, qs, optimal_discriminator(ps, qs, pi), pi)
    return abs(via_value - pi_entropy_constant(pi) - js_pi_divergence(p, q, pi))


def scalar_log_maximizer(a: float, b: float, grid_step: float = 1e-4) -> float:
    """Argmax over [0, 1] of ``a log y + b log(1 - y)``, i.e. ``a / (a + b)``.

    The closed form is cross-checked against a grid search with spacing
    ``grid_step``; the grid optimum must fall within one step.
    """
    a, b = float(a), float(b)
    if a < 0 or b < 0 or not (math.isfinite(a) and math.isfinite(b)):
        raise DomainError("a and b must be finite and non-negative")
    if a == 0 and b == 0:
        raise DomainError("a and b cannot both be zero")
    y_star = a / (a + b)

    y = np.linspace(0.0, 1.0, int(round(1.0 / grid_step)) + 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.zeros_like(y)
        if a > 0:
            f = f + a * np.log(y)
        if b > 0:
            f = f + b * np.log1p(-y)
    f[np.isnan(f)] = -np.inf
    y_grid = y[int(np.argmax(f))]
    if abs(y_grid - y_star) > grid_step * (1 + 1e-9):
        raise ConsistencyError(f"grid maximum {y_grid} is not near {y_star}")
    return y_star


TOWARD_ZERO = "toward_zero"
TOWARD_ONE = "toward_one"


def limit_ratio_profile(p, q, pis: Sequence[float], direction: str = TOWARD_ZERO):
    """Normalised JS_pi ratios along a sequence of weights approaching a limit.

    ``toward_zero`` tabulates ``JS_pi / pi`` against KL[p || q];
    ``toward_one`` tabulates ``JS_pi / (1 - pi)`` against KL[q || p].
    Returns a list of ``(pi, ratio, gap)`` tuples.
    """
    p, q = _pair(p, q)
    pis = [check_pi(x) for x in pis]
    if direction == TOWARD_ZERO:
        target = kl_divergence(p, q)
        ordered = all(a > b for a, b in zip(pis, pis[1:]))
    elif direction == TOWARD_ONE:
        target = kl_divergence(q, p)
        ordered = all(a < b for a, b in zip(pis, pis[1:]))
    else:
        raise ValueError(f"unknown direction {direction!r}")
    if not math.isfinite(target):
        raise UnsupportedLimitError("the limiting KL divergence is infinite")
    if not ordered:
        raise DomainError(f"pis must approach the limit monotonically for {direction}")

    rows = []
    for pi in pis:
        scale = pi if direction == TOWARD_ZERO else 1.0 - pi
        ratio = js_pi_divergence(p, q, pi) / scale
        rows.append((pi, ratio, abs(ratio - target)))
    return rows


DIVERGENCE_COLUMNS = ("pi", "kl_pq", "kl_qp", "js_pi", "constant", "c_g", "identity_residual")


def divergence_table(p, q, pis: Iterable[float]):
    """One row per weight with both directed KLs, JS_pi and the cost identity terms.

    The generator cost here is the optimal-discriminator route, so
    ``identity_residual`` is a genuine comparison of the two routes.
    """
    p, q = _pair(p, q)
    kl_pq, kl_qp = kl_divergence(p, q), kl_divergence(q, p)
    ps, qs, _ = joint_support(p, q)
    rows = []
    for pi in pis:
        pi = check_pi(pi)
        js = js_pi_divergence(p, q, pi)
        const = pi_entropy_constant(pi)
        c_g = adversarial_value(ps, qs, optimal_discriminator(ps, qs, pi), pi)
        rows.append(
            {
                "pi": pi,
                "kl_pq": kl_pq,
                "kl_qp": kl_qp,
                "js_pi": js,
                "constant": const,
                "c_g": c_g,
                "identity_residual": abs(c_g - const - js),
            }
        )
    return rows
