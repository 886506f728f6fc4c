"""
Traveling wave service for hydrolimit

Solves U'' + c U' + f(U) = 0 with U(-inf) = alpha_+, U(0) = alpha_*,
U(+inf) = alpha_- by shooting on c, and checks the tail and slope
properties of the profile.
"""

import math
import time
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Any, Dict, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline, PchipInterpolator

from ..core import (
    logger, settings, error_handler, ErrorCategory, ErrorSeverity,
    BracketingError, DomainSizeError, SolverError, DomainError,
)
from .glauber_rates import ReactionPolynomial, validated


@dataclass
class TailReport:
    """Exponential tail fits against the linearisation rates"""
    lambda_plus_fit: float
    lambda_minus_fit: float
    lambda_plus: float
    lambda_minus: float
    fit_residual_plus: float
    fit_residual_minus: float
    C: float
    lam: float
    slope_negative: bool
    tail_monotone: bool
    rate_tolerance: float = 0.05
    residual_tolerance: float = 1e-3

    @property
    def rates_match(self) -> bool:
        return (abs(self.lambda_plus_fit - self.lambda_plus) <= self.rate_tolerance * self.lambda_plus and
                abs(self.lambda_minus_fit - self.lambda_minus) <= self.rate_tolerance * self.lambda_minus)

    @property
    def passed(self) -> bool:
        return (self.rates_match and self.slope_negative and self.tail_monotone and
                self.fit_residual_plus < self.residual_tolerance and
                self.fit_residual_minus < self.residual_tolerance)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "lambda_plus_fit": self.lambda_plus_fit, "lambda_minus_fit": self.lambda_minus_fit,
            "lambda_plus": self.lambda_plus, "lambda_minus": self.lambda_minus,
            "fit_residual_plus": self.fit_residual_plus, "fit_residual_minus": self.fit_residual_minus,
            "C": self.C, "lambda": self.lam, "slope_negative": self.slope_negative,
            "tail_monotone": self.tail_monotone, "rates_match": self.rates_match, "passed": self.passed,
        }


@dataclass
class WaveProfile:
    """Wave profile on a uniform z-grid.

    ``gap_plus`` = alpha_+ - U and ``gap_minus`` = U - alpha_- are kept
    separately because U itself rounds to alpha_+/- deep in the tails.
    """
    reaction: ReactionPolynomial
    z: np.ndarray
    U: np.ndarray
    dU: np.ndarray
    gap_plus: np.ndarray
    gap_minus: np.ndarray
    c_star: float
    lambda_plus: float
    lambda_minus: float
    branch_extent: Tuple[float, float]
    residual: float = 0.0
    lambda_fit: float = 0.0
    C_fit: float = 0.0
    _u_interp: Any = field(default=None, repr=False, compare=False)
    _du_interp: Any = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self._u_interp = CubicHermiteSpline(self.z, self.U, self.dU, extrapolate=False)
        self._du_interp = PchipInterpolator(self.z, self.dU, extrapolate=False)

    @property
    def Z(self) -> float:
        return float(self.z[-1])

    @property
    def h(self) -> float:
        return float(self.z[1] - self.z[0])

    def evaluate(self, z) -> np.ndarray:
        """U(z): Hermite interpolation on (U, U') inside [-Z, Z], exponential tails outside"""
        z = np.asarray(z, dtype=float)
        out = np.empty_like(z)
        left, right = z < -self.Z, z > self.Z
        inside = ~(left | right)
        out[inside] = self._u_interp(z[inside])
        out[left] = self.reaction.alpha_plus - self.gap_plus[0] * np.exp(self.lambda_plus * (z[left] + self.Z))
        out[right] = self.reaction.alpha_minus + self.gap_minus[-1] * np.exp(-self.lambda_minus * (z[right] - self.Z))
        return out

    def derivative(self, z) -> np.ndarray:
        """U'(z) with the same tail extension"""
        z = np.asarray(z, dtype=float)
        out = np.empty_like(z)
        left, right = z < -self.Z, z > self.Z
        inside = ~(left | right)
        out[inside] = self._du_interp(z[inside])
        out[left] = -self.lambda_plus * self.gap_plus[0] * np.exp(self.lambda_plus * (z[left] + self.Z))
        out[right] = -self.lambda_minus * self.gap_minus[-1] * np.exp(-self.lambda_minus * (z[right] - self.Z))
        return out

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"z": self.z, "U": self.U, "dU": self.dU})

    def metadata(self) -> Dict[str, Any]:
        return {
            "c_star": self.c_star,
            "lambda_plus": self.lambda_plus,
            "lambda_minus": self.lambda_minus,
            "lambda_fit": self.lambda_fit,
            "C_fit": self.C_fit,
            "residual": self.residual,
            "Z": self.Z,
            "h": self.h,
            "reaction": self.reaction.to_dict(),
        }


def linearisation_rates(f: ReactionPolynomial, c: float) -> Tuple[float, float]:
    """(lambda_+, lambda_-): growth rate leaving (alpha_+, 0) and decay rate into (alpha_-, 0)"""
    fp = f.derivative()
    lam_plus = -c / 2.0 + math.sqrt(c * c / 4.0 - fp(f.alpha_plus))
    lam_minus = c / 2.0 + math.sqrt(c * c / 4.0 - fp(f.alpha_minus))
    return lam_plus, lam_minus


class WaveShooter:
    """Shooting on the wave speed for one reaction polynomial"""

    def __init__(self, f: ReactionPolynomial, rtol: Optional[float] = None, atol: Optional[float] = None,
                 start_offset: Optional[float] = None):
        if f.roots is None:
            f = validated(f)
        self.f = f
        self.poly = f.poly
        self.rtol = rtol if rtol is not None else settings.wave.rtol
        self.atol = atol if atol is not None else settings.wave.atol
        self.offset = start_offset if start_offset is not None else settings.wave.start_offset
        self.margin = (f.alpha_star - f.alpha_minus) / 10.0
        fp = f.derivative()
        for root in (f.alpha_minus, f.alpha_plus):
            if fp(root) >= 0:
                raise DomainError(f"root {root} is not a hyperbolic stable zero (f'={fp(root)})")

    def _rhs(self, c: float):
        poly = self.poly

        def rhs(_z, y):
            return [y[1], -c * y[1] - poly(y[0])]
        return rhs

    def _span(self, c: float) -> float:
        lam_plus, lam_minus = linearisation_rates(self.f, c)
        return 200.0 + 60.0 / min(lam_plus, lam_minus)

    def classify(self, c: float) -> int:
        """+1 if the trajectory overshoots alpha_- (c too small), -1 if it turns back"""
        f = self.f
        lam_plus, _ = linearisation_rates(f, c)
        y0 = [f.alpha_plus - self.offset, -lam_plus * self.offset]
        floor = f.alpha_minus - self.margin

        def overshoot(_z, y):
            return y[0] - floor
        overshoot.terminal, overshoot.direction = True, -1

        def undershoot(_z, y):
            return y[1]
        undershoot.terminal, undershoot.direction = True, 1

        sol = solve_ivp(self._rhs(c), (0.0, self._span(c)), y0, method="DOP853",
                        rtol=self.rtol, atol=self.atol, events=(overshoot, undershoot))
        if sol.t_events[0].size:
            return 1
        if sol.t_events[1].size:
            return -1
        return 1 if sol.y[0, -1] < f.alpha_minus else -1

    def bracket(self, max_widenings: int) -> Tuple[float, float]:
        f = self.f
        grid = np.linspace(f.alpha_minus, f.alpha_plus, 201)
        c_max = 2.0 * (f.alpha_plus - f.alpha_minus) * float(np.sqrt(np.abs(f.derivative()(grid))).max())
        for _ in range(max_widenings + 1):
            if self.classify(-c_max) > 0 and self.classify(c_max) < 0:
                return -c_max, c_max
            c_max *= 2.0
        raise BracketingError(f"no sign change of the shooting classifier in [-{c_max / 2}, {c_max / 2}]",
                              {"roots": f.roots})

    def bisect(self, tol: float, max_widenings: int) -> float:
        lo, hi = self.bracket(max_widenings)
        for _ in range(200):
            if hi - lo <= tol:
                break
            mid = 0.5 * (lo + hi)
            if self.classify(mid) > 0:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    def branch(self, c: float, from_plus: bool):
        """Manifold branch up to the alpha_* crossing, returning (solution, crossing z)"""
        f = self.f
        lam_plus, lam_minus = linearisation_rates(f, c)
        if from_plus:
            y0 = [f.alpha_plus - self.offset, -lam_plus * self.offset]
            span = (0.0, self._span(c))
        else:
            y0 = [f.alpha_minus + self.offset, -lam_minus * self.offset]
            span = (0.0, -self._span(c))

        def crossing(_z, y):
            return y[0] - f.alpha_star
        crossing.terminal, crossing.direction = True, 0

        sol = solve_ivp(self._rhs(c), span, y0, method="DOP853", rtol=self.rtol, atol=self.atol,
                        events=crossing, dense_output=True)
        if not sol.t_events[0].size:
            raise SolverError("manifold branch never reached alpha_*",
                              {"c": c, "from_plus": from_plus, "status": sol.status})
        return sol, float(sol.t_events[0][0])


def _profile(shooter: WaveShooter, c: float, Z: float, h: float) -> WaveProfile:
    f = shooter.f
    lam_plus, lam_minus = linearisation_rates(f, c)
    delta = shooter.offset
    sol_a, z_a = shooter.branch(c, from_plus=True)
    sol_b, z_b = shooter.branch(c, from_plus=False)

    n = max(2, int(round(Z / h)))
    z = np.linspace(-Z, Z, 2 * n + 1)
    U = np.empty_like(z)
    V = np.empty_like(z)
    gap_plus = np.empty_like(z)
    gap_minus = np.empty_like(z)

    left = z <= 0.0
    local = z[left] + z_a
    on_branch = local >= 0.0
    ya = sol_a.sol(local[on_branch])
    tail = delta * np.exp(lam_plus * local[~on_branch])
    U_left = np.empty(local.size)
    V_left = np.empty(local.size)
    gp_left = np.empty(local.size)
    U_left[on_branch], V_left[on_branch] = ya[0], ya[1]
    gp_left[on_branch] = f.alpha_plus - ya[0]
    U_left[~on_branch], V_left[~on_branch] = f.alpha_plus - tail, -lam_plus * tail
    gp_left[~on_branch] = tail
    U[left], V[left], gap_plus[left] = U_left, V_left, gp_left
    gap_minus[left] = U_left - f.alpha_minus

    right = z > 0.0
    local = z[right] + z_b
    on_branch = local <= 0.0
    yb = sol_b.sol(local[on_branch])
    tail = delta * np.exp(-lam_minus * local[~on_branch])
    U_right = np.empty(local.size)
    V_right = np.empty(local.size)
    gm_right = np.empty(local.size)
    U_right[on_branch], V_right[on_branch] = yb[0], yb[1]
    gm_right[on_branch] = yb[0] - f.alpha_minus
    U_right[~on_branch], V_right[~on_branch] = f.alpha_minus + tail, -lam_minus * tail
    gm_right[~on_branch] = tail
    U[right], V[right], gap_minus[right] = U_right, V_right, gm_right
    gap_plus[right] = f.alpha_plus - U_right

    zero = n
    U[zero] = f.alpha_star
    gap_plus[zero] = f.alpha_plus - f.alpha_star
    gap_minus[zero] = f.alpha_star - f.alpha_minus
    V[zero] = 0.5 * (sol_a.sol(z_a)[1] + sol_b.sol(z_b)[1])

    step = z[1] - z[0]
    dV = (-V[4:] + 8.0 * V[3:-1] - 8.0 * V[1:-3] + V[:-4]) / (12.0 * step)
    residual = float(np.max(np.abs(dV + c * V[2:-2] + shooter.poly(U[2:-2]))))

    return WaveProfile(reaction=f, z=z, U=U, dU=V, gap_plus=gap_plus, gap_minus=gap_minus,
                       c_star=float(c), lambda_plus=lam_plus, lambda_minus=lam_minus,
                       branch_extent=(-z_a, -z_b), residual=residual)


@lru_cache(maxsize=32)
def _solve_wave_cached(f: ReactionPolynomial, Z: float, h: float, tol: float) -> WaveProfile:
    start = time.perf_counter()
    shooter = WaveShooter(f)
    c = shooter.bisect(tol, settings.wave.max_widenings)
    lam_plus, lam_minus = linearisation_rates(shooter.f, c)
    if math.exp(-min(lam_plus, lam_minus) * Z) > tol:
        raise DomainSizeError(
            f"Z={Z} too short: exp(-lambda Z)={math.exp(-min(lam_plus, lam_minus) * Z):.2e} exceeds tol={tol}",
            {"lambda_plus": lam_plus, "lambda_minus": lam_minus},
        )
    wave = _profile(shooter, c, Z, h)
    report = verify_tails(wave)
    wave.lambda_fit = min(report.lambda_plus_fit, report.lambda_minus_fit)
    wave.C_fit = report.C
    for values in (wave.z, wave.U, wave.dU, wave.gap_plus, wave.gap_minus):
        values.setflags(write=False)
    logger.log_performance("solve_wave", time.perf_counter() - start, c_star=c, residual=wave.residual)
    return wave


def solve_wave(f: ReactionPolynomial, Z: Optional[float] = None, h: Optional[float] = None,
               tol: Optional[float] = None) -> WaveProfile:
    """Wave speed and profile by bisection shooting and two-sided manifold integration.

    Profiles are cached per (f, Z, h, tol); each call gets its own copy whose arrays are read-only.
    """
    Z = float(Z if Z is not None else settings.wave.half_width)
    h = float(h if h is not None else settings.wave.spacing)
    tol = float(tol if tol is not None else settings.wave.tolerance)
    if f.roots is None:
        f = validated(f)
    try:
        return replace(_solve_wave_cached(f, Z, h, tol))
    except (BracketingError, DomainSizeError, SolverError) as e:
        error_handler.handle_error(error=e, context={"operation": "solve_wave", "Z": Z, "h": h},
                                   category=ErrorCategory.SOLVER, severity=ErrorSeverity.MEDIUM)
        raise


def _log_fit(z: np.ndarray, gap: np.ndarray) -> Tuple[float, float]:
    """Slope and RMS residual of a straight-line fit of log(gap) against z"""
    coeffs, residuals, *_ = np.polyfit(z, np.log(gap), 1, full=True)
    rms = math.sqrt(float(residuals[0]) / z.size) if residuals.size else 0.0
    return float(coeffs[0]), rms


def _fit_window(wave: WaveProfile, lo: float, hi: float, branch_lo: float, branch_hi: float,
                gap: np.ndarray) -> np.ndarray:
    """Grid mask for a tail fit, restricted to integrated data in the asymptotic regime"""
    mask = (wave.z >= max(lo, branch_lo)) & (wave.z <= min(hi, branch_hi))
    if mask.sum() < 10:
        mask = (wave.z >= branch_lo) & (wave.z <= branch_hi) & (gap < 1e-4)
    return mask


def verify_tails(wave: WaveProfile) -> TailReport:
    """Fit the exponential tails and compare with the linearisation eigenvalues"""
    Z = wave.Z
    left_start, right_end = wave.branch_extent
    mask_plus = _fit_window(wave, -Z, -Z / 2.0, left_start, 0.0, wave.gap_plus)
    mask_minus = _fit_window(wave, Z / 2.0, Z, 0.0, right_end, wave.gap_minus)
    slope_plus, res_plus = _log_fit(wave.z[mask_plus], wave.gap_plus[mask_plus])
    slope_minus, res_minus = _log_fit(wave.z[mask_minus], wave.gap_minus[mask_minus])

    interior = slice(1, -1)
    slope_negative = bool(np.all(wave.dU[interior] < 0.0))
    left = wave.z <= 0
    tail_monotone = bool(np.all(np.diff(wave.gap_plus[left]) > 0.0))

    lam = min(wave.lambda_plus, wave.lambda_minus)
    C = float(np.max(-wave.dU * np.exp(lam * np.abs(wave.z))))
    return TailReport(lambda_plus_fit=slope_plus, lambda_minus_fit=-slope_minus,
                      lambda_plus=wave.lambda_plus, lambda_minus=wave.lambda_minus,
                      fit_residual_plus=res_plus, fit_residual_minus=res_minus,
                      C=C, lam=lam, slope_negative=slope_negative, tail_monotone=tail_monotone)


def sigma_bound(wave: WaveProfile, beta: float) -> float:
    """Largest sigma with U'(z) <= -sigma (beta + f'(U(z))) on the grid"""
    g = beta + wave.reaction.derivative()(wave.U)
    binding = g > 0.0
    if not np.any(binding):
        return math.inf
    return float(np.min(-wave.dU[binding] / g[binding]))


def slope_inequality_holds(wave: WaveProfile, beta: float, sigma: float) -> bool:
    g = beta + wave.reaction.derivative()(wave.U)
    return bool(np.all(wave.dU <= -sigma * g + 1e-15))
