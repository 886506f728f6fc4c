"""
Glauber rate service for hydrolimit

Local flip rates c(eta) as tables over a finite window, the reaction
polynomial f(u) = E^{nu_u}[(1 - 2 eta_0) c(eta)], the bistable/unbalanced
validation, derived constants, and the inverse design of rate tables
realising a target cubic.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import Polynomial
from scipy.optimize import brentq

from ..core import logger, error_handler, ErrorCategory, ErrorSeverity, DomainError, InfeasibleRatesError
from .lattice_core import (
    Configuration, LocalWindow, WINDOW_BIT_ORDER, read_window, window_patterns, pattern_bits,
)

ROOT_TOLERANCE = 1e-10
ROOT_GRID_POINTS = 10_000


@dataclass(frozen=True)
class RateFunction:
    """Nonnegative rate per window pattern"""
    window: LocalWindow
    table: np.ndarray

    def __post_init__(self):
        table = np.asarray(self.table, dtype=float).reshape(-1)
        if table.size != self.window.n_patterns:
            raise DomainError(f"rate table needs {self.window.n_patterns} entries, got {table.size}")
        if np.any(table < 0) or not np.all(np.isfinite(table)):
            raise DomainError("rate table entries must be finite and nonnegative")
        table.setflags(write=False)
        object.__setattr__(self, "table", table)

    @classmethod
    def constant(cls, value: float, window: LocalWindow) -> "RateFunction":
        return cls(window, np.full(window.n_patterns, float(value)))

    @classmethod
    def from_function(cls, window: LocalWindow, func: Callable[[np.ndarray], float]) -> "RateFunction":
        """Build a table from ``func(bits)``, bits ordered like ``window.offsets``"""
        window.require_enumerable()
        table = np.array([func(pattern_bits(p, window)) for p in range(window.n_patterns)], dtype=float)
        return cls(window, table)

    def __call__(self, eta: Configuration, x) -> float:
        return evaluate_rate(self, eta, x)

    def site_rates(self, occupancy: np.ndarray, window_sites: np.ndarray) -> np.ndarray:
        """Rates at every site (``window_sites`` from ``geometry.offset_table``)"""
        return self.table[window_patterns(occupancy, window_sites)]

    @property
    def max_rate(self) -> float:
        return float(self.table.max()) if self.table.size else 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "window_radius": self.window.radius,
            "dimension": self.window.d,
            "bit_order": WINDOW_BIT_ORDER,
            "table": [float(v) for v in self.table],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RateFunction":
        if data.get("bit_order", WINDOW_BIT_ORDER) != WINDOW_BIT_ORDER:
            raise DomainError(f"unsupported bit order {data.get('bit_order')!r}")
        window = LocalWindow(int(data["window_radius"]), int(data.get("dimension", 1)))
        return cls(window, np.asarray(data["table"], dtype=float))


@dataclass(frozen=True)
class ReactionPolynomial:
    """Polynomial f(u) in the monomial basis, optionally with its three roots"""
    coefficients: Tuple[float, ...]
    roots: Optional[Tuple[float, float, float]] = None

    def __post_init__(self):
        coeffs = tuple(float(c) for c in np.trim_zeros(np.asarray(self.coefficients, dtype=float), "b"))
        object.__setattr__(self, "coefficients", coeffs or (0.0,))
        if self.roots is not None:
            roots = tuple(sorted(float(r) for r in self.roots))
            if len(roots) != 3:
                raise DomainError("exactly three roots (alpha_-, alpha_*, alpha_+) are expected")
            object.__setattr__(self, "roots", roots)

    @classmethod
    def cubic(cls, alpha_minus: float, alpha_star: float, alpha_plus: float,
              scale: float = 1.0) -> "ReactionPolynomial":
        """f(u) = scale * (u - alpha_-)(alpha_+ - u)(u - alpha_*)"""
        poly = -scale * Polynomial.fromroots([alpha_minus, alpha_star, alpha_plus])
        return cls(tuple(poly.coef), (alpha_minus, alpha_star, alpha_plus))

    @classmethod
    def from_polynomial(cls, poly: Polynomial, roots=None) -> "ReactionPolynomial":
        return cls(tuple(poly.coef), roots)

    @property
    def poly(self) -> Polynomial:
        return Polynomial(self.coefficients)

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def _require_roots(self) -> Tuple[float, float, float]:
        if self.roots is None:
            raise DomainError("reaction polynomial has no validated roots")
        return self.roots

    @property
    def alpha_minus(self) -> float:
        return self._require_roots()[0]

    @property
    def alpha_star(self) -> float:
        return self._require_roots()[1]

    @property
    def alpha_plus(self) -> float:
        return self._require_roots()[2]

    def __call__(self, u):
        return self.poly(u)

    def derivative(self, order: int = 1) -> Polynomial:
        return self.poly.deriv(order)

    def integral(self, a: float, b: float) -> float:
        antiderivative = self.poly.integ()
        return float(antiderivative(b) - antiderivative(a))

    def sup_abs(self, poly: Polynomial, lo: float, hi: float) -> float:
        """max |poly| on [lo, hi] via endpoints and critical points"""
        candidates = [lo, hi]
        if poly.degree() >= 1:
            for r in poly.deriv().roots():
                if abs(r.imag) < 1e-12 and lo <= r.real <= hi:
                    candidates.append(r.real)
        return float(np.max(np.abs(poly(np.array(candidates)))))

    def sup_abs_derivative(self, lo: float = 0.0, hi: float = 1.0, order: int = 1) -> float:
        return self.sup_abs(self.derivative(order), lo, hi)

    def with_roots(self, roots: Sequence[float]) -> "ReactionPolynomial":
        return ReactionPolynomial(self.coefficients, tuple(roots))

    def allclose(self, other: "ReactionPolynomial", atol: float = 1e-12) -> bool:
        n = max(len(self.coefficients), len(other.coefficients))
        a = np.pad(np.asarray(self.coefficients), (0, n - len(self.coefficients)))
        b = np.pad(np.asarray(other.coefficients), (0, n - len(other.coefficients)))
        return bool(np.allclose(a, b, rtol=0.0, atol=atol))

    def to_dict(self) -> Dict[str, Any]:
        return {"coefficients": list(self.coefficients),
                "roots": list(self.roots) if self.roots is not None else None}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ReactionPolynomial":
        roots = data.get("roots")
        return cls(tuple(data["coefficients"]), tuple(roots) if roots else None)


@dataclass
class BistabilityReport:
    """Outcome of the bistable (three roots) and unbalanced checks"""
    roots: List[float]
    slopes: List[float]
    integral: Optional[float]
    bistable: bool
    slope_pattern: bool
    unbalanced: bool
    require_positive: bool
    tolerance: float = ROOT_TOLERANCE
    messages: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.bistable and self.slope_pattern and self.unbalanced

    @property
    def integral_sign(self) -> int:
        if self.integral is None or abs(self.integral) <= self.tolerance:
            return 0
        return 1 if self.integral > 0 else -1

    def to_dict(self) -> Dict[str, Any]:
        return {
            "roots": self.roots,
            "slopes": self.slopes,
            "integral": self.integral,
            "bistable": self.bistable,
            "slope_pattern": self.slope_pattern,
            "unbalanced": self.unbalanced,
            "require_positive": self.require_positive,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "messages": self.messages,
        }


@dataclass(frozen=True)
class DerivedConstants:
    gamma: float
    gamma_bar: float
    beta: float
    delta0: float
    theta: float

    def to_dict(self) -> Dict[str, float]:
        return {"gamma": self.gamma, "gamma_bar": self.gamma_bar, "beta": self.beta,
                "delta0": self.delta0, "theta": self.theta}


@dataclass
class RateDesign:
    """Designed rate table with the intermediate coefficients"""
    rates: RateFunction
    target: ReactionPolynomial
    bernstein: Tuple[float, float, float, float]
    plus_table: Tuple[float, float, float]
    minus_table: Tuple[float, float, float]
    basis_coefficients: Tuple[float, ...]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "rates": self.rates.to_dict(),
            "target": self.target.to_dict(),
            "bernstein": list(self.bernstein),
            "plus_table": list(self.plus_table),
            "minus_table": list(self.minus_table),
            "basis_coefficients": list(self.basis_coefficients),
        }


def evaluate_rate(c: RateFunction, eta: Configuration, x) -> float:
    """c_x(eta) = tau_x c(eta) by table lookup"""
    return float(c.table[read_window(eta, x, c.window)])


def _drop_origin(pattern: np.ndarray, origin: int) -> np.ndarray:
    low = pattern & ((1 << origin) - 1)
    return low | ((pattern >> (origin + 1)) << origin)


def decompose(c: RateFunction) -> Tuple[np.ndarray, np.ndarray]:
    """(c_plus, c_minus) indexed by the pattern with the origin bit removed"""
    window = c.window
    origin = window.origin_bit
    patterns = np.arange(window.n_patterns, dtype=np.int64)
    occupied = (patterns >> origin) & 1
    reduced = _drop_origin(patterns, origin)
    size = window.n_patterns // 2
    c_plus = np.empty(size)
    c_minus = np.empty(size)
    c_plus[reduced[occupied == 0]] = c.table[occupied == 0]
    c_minus[reduced[occupied == 1]] = c.table[occupied == 1]
    return c_plus, c_minus


def _bernoulli_sum(values: np.ndarray, n_bits: int) -> Polynomial:
    """sum_p values[p] u^{#1(p)} (1-u)^{#0(p)} as a polynomial in u"""
    patterns = np.arange(values.size, dtype=np.int64)
    ones = np.zeros(values.size, dtype=np.int64)
    for bit in range(n_bits):
        ones += (patterns >> bit) & 1
    by_count = np.bincount(ones, weights=values, minlength=n_bits + 1)
    u, one_minus_u = Polynomial([0.0, 1.0]), Polynomial([1.0, -1.0])
    total = Polynomial([0.0])
    for k, weight in enumerate(by_count):
        if weight != 0.0:
            total = total + weight * u ** k * one_minus_u ** (n_bits - k)
    return total


def reaction_polynomial(c: RateFunction) -> ReactionPolynomial:
    """f(u) = E^{nu_u}[(1 - 2 eta_0) c(eta)] by exhaustive pattern enumeration"""
    window = c.window
    window.require_enumerable()
    patterns = np.arange(window.n_patterns, dtype=np.int64)
    sign = 1.0 - 2.0 * ((patterns >> window.origin_bit) & 1)
    return ReactionPolynomial.from_polynomial(_bernoulli_sum(sign * c.table, window.size))


def reaction_polynomial_decomposed(c: RateFunction) -> ReactionPolynomial:
    """Second route: f(u) = (1-u) E[c+] - u E[c-]"""
    c.window.require_enumerable()
    c_plus, c_minus = decompose(c)
    n = c.window.size - 1
    u, one_minus_u = Polynomial([0.0, 1.0]), Polynomial([1.0, -1.0])
    poly = one_minus_u * _bernoulli_sum(c_plus, n) - u * _bernoulli_sum(c_minus, n)
    return ReactionPolynomial.from_polynomial(poly)


def monte_carlo_reaction(c: RateFunction, u: float, samples: int,
                         rng: np.random.Generator) -> Tuple[float, float]:
    """Mean and standard error of (1 - 2 eta_0) c(eta) with eta ~ nu_u on the window"""
    bits = (rng.random((samples, c.window.size)) < u).astype(np.int64)
    patterns = bits @ (1 << np.arange(c.window.size, dtype=np.int64))
    values = (1.0 - 2.0 * bits[:, c.window.origin_bit]) * c.table[patterns]
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(samples))


def find_roots(f: ReactionPolynomial, lo: float = 0.0, hi: float = 1.0,
               grid_points: int = ROOT_GRID_POINTS, tol: float = ROOT_TOLERANCE) -> List[float]:
    """Roots in (lo, hi): sign-change scan on a fine grid, bracketed solve, Newton polish"""
    poly = f.poly
    dpoly = poly.deriv()
    grid = np.linspace(lo, hi, grid_points + 1)
    values = poly(grid)
    roots: List[float] = []
    for i in range(grid_points):
        a, b = grid[i], grid[i + 1]
        fa, fb = values[i], values[i + 1]
        if abs(fa) <= tol and lo < a < hi:
            root = a
        elif fa * fb < 0:
            root = brentq(poly, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        else:
            continue
        slope = dpoly(root)
        if slope != 0.0:
            polished = root - poly(root) / slope
            if abs(polished - root) < 1e-14 or abs(poly(polished)) < abs(poly(root)):
                root = polished
        if not roots or abs(root - roots[-1]) > 1e-9:
            roots.append(float(root))
    return roots


def validate_bistable_unbalanced(f: ReactionPolynomial, require_positive: bool = True,
                                 tol: float = ROOT_TOLERANCE) -> BistabilityReport:
    """Check three interior roots with slopes (-, +, -) and a nonzero integral between the outer roots"""
    roots = find_roots(f, tol=tol)
    dpoly = f.derivative()
    slopes = [float(dpoly(r)) for r in roots]
    messages = []
    bistable = len(roots) == 3
    if not bistable:
        messages.append(f"expected exactly three roots in (0,1), found {len(roots)}")
    slope_pattern = bistable and slopes[0] < 0 < slopes[1] and slopes[2] < 0
    if bistable and not slope_pattern:
        messages.append(f"slope signs at roots are {np.sign(slopes).tolist()}, expected [-1, 1, -1]")
    integral = f.integral(roots[0], roots[2]) if bistable else None
    if integral is None:
        unbalanced = False
    elif abs(integral) <= tol:
        unbalanced = False
        messages.append("balanced: integral between outer roots vanishes")
    elif require_positive and integral < 0:
        unbalanced = False
        messages.append(f"integral {integral:.3e} is negative but a positive sign was required")
    else:
        unbalanced = True
    report = BistabilityReport(roots=roots, slopes=slopes, integral=integral, bistable=bistable,
                               slope_pattern=slope_pattern, unbalanced=unbalanced,
                               require_positive=require_positive, tolerance=tol, messages=messages)
    logger.debug(f"Bistability check: passed={report.passed} roots={roots} integral={integral}")
    return report


def validated(f: ReactionPolynomial, require_positive: bool = False) -> ReactionPolynomial:
    """Return f with roots attached, raising DomainError when (BS) fails"""
    report = validate_bistable_unbalanced(f, require_positive=require_positive)
    if not (report.bistable and report.slope_pattern):
        raise DomainError("reaction polynomial is not bistable: " + "; ".join(report.messages))
    return f.with_roots(report.roots)


def _bernstein_cubic(target: ReactionPolynomial) -> Tuple[float, float, float, float]:
    a = np.pad(np.asarray(target.coefficients, dtype=float), (0, 4 - len(target.coefficients)))
    return tuple(
        float(sum(math.comb(k, j) / math.comb(3, j) * a[j] for j in range(k + 1)))
        for k in range(4)
    )


def design_rates_report(target: ReactionPolynomial, window: LocalWindow) -> RateDesign:
    """Nonnegative rate table in the symmetric nearest-neighbour basis realising ``target``"""
    if target.degree > 3:
        raise DomainError(f"target must be at most cubic, got degree {target.degree}")
    if window.radius < 1:
        raise DomainError("design needs a window of radius >= 1 (basis must span cubics)")
    window.require_enumerable()

    b0, b1, b2, b3 = _bernstein_cubic(target)
    if target.degree <= 1:
        # f = a(1-u) - b u is realised by constant c+ = a, c- = b
        a_plus, b_minus = b0, -b3
        p = (a_plus, a_plus, a_plus)
        m = (b_minus, b_minus, b_minus)
    else:
        p = (b0, max(3 * b1, 0.0) / 2.0, max(3 * b2, 0.0))
        m = (max(-3 * b1, 0.0), max(-3 * b2, 0.0) / 2.0, -b3)

    violations = {name: value for name, value in
                  (("c+[0]", p[0]), ("c+[1]", p[1]), ("c+[2]", p[2]),
                   ("c-[0]", m[0]), ("c-[1]", m[1]), ("c-[2]", m[2])) if value < 0}
    if violations:
        error = InfeasibleRatesError(
            f"target needs negative rate entries: {violations}", violations,
            {"bernstein": (b0, b1, b2, b3)},
        )
        error_handler.handle_error(error=error, context={"operation": "design_rates"},
                                   category=ErrorCategory.RATES, severity=ErrorSeverity.LOW)
        raise error

    origin = window.origin_bit
    axis_step = (2 * window.radius + 1) ** (window.d - 1)
    left, right = origin - axis_step, origin + axis_step
    patterns = np.arange(window.n_patterns, dtype=np.int64)
    occupied = (patterns >> origin) & 1
    k = ((patterns >> left) & 1) + ((patterns >> right) & 1)
    table = np.where(occupied == 0, np.asarray(p)[k], np.asarray(m)[k])

    basis = (
        p[0], p[1] - p[0], p[2] - 2 * p[1] + p[0],
        m[0] - p[0], (m[1] - m[0]) - (p[1] - p[0]), (m[2] - 2 * m[1] + m[0]) - (p[2] - 2 * p[1] + p[0]),
    )
    rates = RateFunction(window, table)
    logger.info(f"Designed rates: c+={p} c-={m}")
    return RateDesign(rates=rates, target=target, bernstein=(b0, b1, b2, b3),
                      plus_table=tuple(p), minus_table=tuple(m), basis_coefficients=basis)


def design_rates(target: ReactionPolynomial, window: LocalWindow) -> RateFunction:
    return design_rates_report(target, window).rates


def analytic_cubic_speed(f: ReactionPolynomial) -> float:
    """Closed-form wave speed of f = s(u - a_-)(a_+ - u)(u - a_*)"""
    if f.degree != 3:
        raise DomainError("closed-form speed needs a cubic")
    s = -f.coefficients[3]
    if s <= 0:
        raise DomainError("cubic must have a negative leading coefficient")
    a_minus, a_star, a_plus = f._require_roots()
    return math.sqrt(s / 2.0) * (a_minus + a_plus - 2.0 * a_star)


def derived_constants(f: ReactionPolynomial, u_minus: float, u_plus: float) -> DerivedConstants:
    """gamma, gamma_bar, beta, delta0 and theta for a validated bistable f"""
    a_minus, a_star, a_plus = f._require_roots()
    if not 0.0 < u_minus < a_star < u_plus < 1.0:
        raise DomainError(f"need 0 < u_- < alpha_* < u_+ < 1, got u_-={u_minus}, u_+={u_plus}",
                          {"alpha_star": a_star})
    fp = f.derivative()
    gamma = float(fp(a_star))
    lo, hi = min(u_minus, a_minus), max(u_plus, a_plus)
    candidates = [lo, hi] + [r.real for r in fp.deriv().roots()
                             if abs(r.imag) < 1e-12 and lo <= r.real <= hi]
    gamma_bar = float(max(-fp(np.array(candidates))))
    beta = 0.5 * min(abs(fp(a_minus)), abs(fp(a_plus)))
    delta0 = min(a_star - a_minus, a_plus - a_star)
    theta = 2.0 * gamma / (3.0 * gamma + gamma_bar)
    if gamma <= 0 or gamma_bar <= 0 or beta <= 0:
        raise DomainError("derived constants must be positive; is f bistable?")
    return DerivedConstants(gamma=gamma, gamma_bar=gamma_bar, beta=float(beta),
                            delta0=float(delta0), theta=float(theta))


def default_model(scale: float = 32.0, roots: Sequence[float] = (0.25, 0.45, 0.75)) -> ReactionPolynomial:
    a_minus, a_star, a_plus = roots
    return ReactionPolynomial.cubic(a_minus, a_star, a_plus, scale)
