"""
Front geometry service for hydrolimit

Signed distances to the interface, Huygens evolution with constant normal
speed, the limit step function, the cutoff distance and the shifted-wave
sub/super solutions with their residual checks.

Sign convention: the signed distance is negative inside G^+ and positive
on the closure of G^-.
"""

import heapq
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage, stats

from ..core import logger, settings, DomainError, ExtractionError
from .glauber_rates import ReactionPolynomial
from .reaction_diffusion import ContinuumField, Trajectory, laplacian
from .traveling_wave import WaveProfile


# ----------------------------------------------------------------------------
# Front representation
# ----------------------------------------------------------------------------

@dataclass
class FrontState:
    """Interface of G^+.

    1D fronts are exact: ``intervals`` is a (k, 2) array of arcs (a, b) of
    the unit circle with a in [0, 1) and a < b < a + 1. 2D fronts carry the
    signed distance on the nodes j/M.
    """
    d: int
    M: int
    intervals: Optional[np.ndarray] = None
    distance: Optional[np.ndarray] = None
    full: bool = False

    @property
    def empty(self) -> bool:
        if self.full:
            return False
        if self.d == 1:
            return self.intervals is None or len(self.intervals) == 0
        return self.distance is None

    def crossings(self) -> Tuple[np.ndarray, np.ndarray]:
        """1D crossing positions and orientation (+1 entering G^+ moving right, -1 leaving)"""
        if self.d != 1:
            raise DomainError("crossings are defined for 1D fronts")
        if self.empty or self.full:
            return np.empty(0), np.empty(0, dtype=int)
        pos = np.concatenate([self.intervals[:, 0] % 1.0, self.intervals[:, 1] % 1.0])
        flags = np.concatenate([np.ones(len(self.intervals), dtype=int), -np.ones(len(self.intervals), dtype=int)])
        order = np.argsort(pos, kind="stable")
        return pos[order], flags[order]

    def signed_distance_at(self, v) -> np.ndarray:
        """Exact 1D signed distance at arbitrary points"""
        if self.d != 1:
            raise DomainError("pointwise evaluation is exact only in 1D; use grid_distance()")
        v = np.mod(np.asarray(v, dtype=float), 1.0)
        if self.full:
            return np.full(v.shape, -np.inf)
        if self.empty:
            return np.full(v.shape, np.inf)
        ends = np.concatenate([self.intervals[:, 0], self.intervals[:, 1]]) % 1.0
        gap = np.abs(v[..., None] - ends)
        dist = np.minimum(gap, 1.0 - gap).min(axis=-1)
        lengths = self.intervals[:, 1] - self.intervals[:, 0]
        inside = (np.mod(v[..., None] - self.intervals[:, 0], 1.0) < lengths).any(axis=-1)
        return np.where(inside, -dist, dist)

    def grid_distance(self, M: Optional[int] = None) -> np.ndarray:
        """Signed distance on the nodes j/M"""
        if self.d == 1:
            M = M or self.M
            return self.signed_distance_at(np.arange(M) / M)
        if M is not None and M != self.M:
            raise DomainError(f"2D front lives on M={self.M}, requested M={M}")
        if self.full:
            return np.full((self.M, self.M), -np.inf)
        if self.distance is None:
            return np.full((self.M, self.M), np.inf)
        return self.distance

    def inside(self, M: Optional[int] = None) -> np.ndarray:
        return self.grid_distance(M) < 0.0

    def gaps(self) -> Tuple[float, float]:
        """1D: (shortest G^+ arc, shortest G^- arc)"""
        if self.empty:
            return 0.0, 1.0
        if self.full:
            return 1.0, 0.0
        iv = self.intervals[np.argsort(self.intervals[:, 0])]
        lengths = iv[:, 1] - iv[:, 0]
        nxt = np.roll(iv[:, 0], -1)
        nxt[-1] += 1.0
        complement = nxt - iv[:, 1]
        return float(lengths.min()), float(complement.min())


def _merge_arcs(arcs: List[Tuple[float, float]]) -> Tuple[np.ndarray, bool]:
    """Union of circular arcs; returns (intervals, covers_circle)"""
    arcs = [(a, b) for a, b in arcs if b > a]
    if not arcs:
        return np.empty((0, 2)), False
    if any(b - a >= 1.0 for a, b in arcs):
        return np.empty((0, 2)), True
    norm = sorted(((a % 1.0, a % 1.0 + (b - a)) for a, b in arcs))
    merged = [list(norm[0])]
    for a, b in norm[1:]:
        if a <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])
    # wrap-around overlap with the first arc
    while len(merged) > 1 and merged[-1][1] >= merged[0][0] + 1.0:
        first = merged.pop(0)
        merged[-1][1] = max(merged[-1][1], first[1] + 1.0)
    if any(b - a >= 1.0 for a, b in merged):
        return np.empty((0, 2)), True
    return np.array(merged, dtype=float), False


def front_from_intervals(intervals: Sequence[Tuple[float, float]], M: int = 1024) -> FrontState:
    iv, full = _merge_arcs([(float(a), float(b)) for a, b in intervals])
    return FrontState(d=1, M=M, intervals=iv, full=full)


# ----------------------------------------------------------------------------
# Fast marching (2D, periodic, first-order upwind)
# ----------------------------------------------------------------------------

def _fmm_update(T: np.ndarray, frozen: np.ndarray, i: int, j: int, h: float) -> float:
    M = T.shape[0]
    def val(a, b):
        return T[a, b] if frozen[a, b] else math.inf
    a = min(val((i - 1) % M, j), val((i + 1) % M, j))
    b = min(val(i, (j - 1) % M), val(i, (j + 1) % M))
    if math.isinf(a) and math.isinf(b):
        return math.inf
    if abs(a - b) >= h or math.isinf(a) or math.isinf(b):
        return min(a, b) + h
    return 0.5 * (a + b + math.sqrt(2.0 * h * h - (a - b) ** 2))


def fast_marching(phi: np.ndarray, mode: str = "level") -> np.ndarray:
    """Signed distance to the zero level of ``phi`` on the periodic M x M grid (spacing 1/M).

    ``mode="indicator"`` seeds nodes next to a sign change at h/2,
    ``mode="level"`` seeds them by linear interpolation of ``phi``.
    """
    M = phi.shape[0]
    h = 1.0 / M
    negative = phi < 0.0
    T = np.full(phi.shape, math.inf)
    frozen = np.zeros(phi.shape, dtype=bool)

    inv_sq = np.zeros(phi.shape)
    seeded = np.zeros(phi.shape, dtype=bool)
    for axis in range(2):
        best = np.full(phi.shape, math.inf)
        for shift in (1, -1):
            nb = np.roll(phi, shift, axis=axis)
            change = (phi < 0.0) != (nb < 0.0)
            if mode == "indicator":
                dist = np.where(change, 0.5 * h, math.inf)
            else:
                denom = np.abs(phi - nb)
                with np.errstate(divide="ignore", invalid="ignore"):
                    dist = np.where(change, h * np.abs(phi) / np.where(denom > 0, denom, 1.0), math.inf)
            best = np.minimum(best, dist)
        has = np.isfinite(best)
        seeded |= has
        inv_sq[has] += 1.0 / np.maximum(best[has], 1e-300) ** 2
    T[seeded] = 1.0 / np.sqrt(inv_sq[seeded])
    frozen[seeded] = True
    if not seeded.any():
        raise DomainError("no interface: region or complement is empty")

    heap: List[Tuple[float, int, int]] = []
    for i, j in zip(*np.nonzero(seeded)):
        for a, b in (((i - 1) % M, j), ((i + 1) % M, j), (i, (j - 1) % M), (i, (j + 1) % M)):
            if not frozen[a, b]:
                t = _fmm_update(T, frozen, a, b, h)
                if t < T[a, b]:
                    T[a, b] = t
                    heapq.heappush(heap, (t, a, b))
    while heap:
        t, i, j = heapq.heappop(heap)
        if frozen[i, j] or t > T[i, j]:
            continue
        frozen[i, j] = True
        for a, b in (((i - 1) % M, j), ((i + 1) % M, j), (i, (j - 1) % M), (i, (j + 1) % M)):
            if not frozen[a, b]:
                t_new = _fmm_update(T, frozen, a, b, h)
                if t_new < T[a, b]:
                    T[a, b] = t_new
                    heapq.heappush(heap, (t_new, a, b))
    return np.where(negative, -T, T)


# ----------------------------------------------------------------------------
# Operations
# ----------------------------------------------------------------------------

def signed_distance(indicator, M: Optional[int] = None) -> FrontState:
    """Signed distance to the boundary of G^+ given as an indicator grid or 1D arcs"""
    if not isinstance(indicator, np.ndarray):
        arcs = [tuple(map(float, iv)) for iv in indicator]
        front = front_from_intervals(arcs, M or 1024)
        if front.empty or front.full:
            raise DomainError("G^+ and its complement must both be nonempty")
        return front

    mask = np.asarray(indicator, dtype=bool)
    if mask.all() or not mask.any():
        raise DomainError("G^+ and its complement must both be nonempty")
    if mask.ndim == 1:
        n = mask.size
        arcs = []
        starts = np.flatnonzero(mask & ~np.roll(mask, 1))
        for s in starts:
            length = 0
            while mask[(s + length) % n] and length < n:
                length += 1
            arcs.append(((s - 0.5) / n, (s + length - 0.5) / n))
        return front_from_intervals(arcs, n)
    if mask.ndim == 2 and mask.shape[0] == mask.shape[1]:
        phi = np.where(mask, -1.0, 1.0)
        return FrontState(d=2, M=mask.shape[0], distance=fast_marching(phi, mode="indicator"))
    raise DomainError(f"unsupported indicator shape {mask.shape}")


def front_from_level(values: np.ndarray, level: float) -> FrontState:
    """Front {u = level} of a sampled field, with G^+ = {u > level}"""
    values = np.asarray(values, dtype=float)
    above = values > level
    if above.all() or not above.any():
        raise ExtractionError(f"field never crosses level {level}")
    if values.ndim == 1:
        n = values.size
        nxt = np.roll(values, -1)
        up = np.flatnonzero(~above & (nxt > level))
        down = np.flatnonzero(above & (nxt <= level))
        up_pos = (up + (level - values[up]) / (nxt[up] - values[up])) / n
        down_pos = (down + (values[down] - level) / (values[down] - nxt[down])) / n
        arcs = []
        for a in np.sort(up_pos):
            later = (down_pos - a) % 1.0
            arcs.append((a, a + later.min()))
        return front_from_intervals(arcs, n)
    if values.ndim == 2:
        return FrontState(d=2, M=values.shape[0], distance=fast_marching(level - values, mode="level"))
    raise DomainError("only 1D and 2D fields are supported")


def huygens_evolve(front0: FrontState, c_star: float, t: float) -> FrontState:
    """G_t^+ = {dist(v, G_0^+) < c t}; for c < 0 the complement grows instead"""
    if t < 0:
        raise DomainError(f"t must be nonnegative, got {t}")
    r = c_star * t
    if r == 0.0 or front0.empty or front0.full:
        return front0
    if front0.d == 1:
        if r > 0:
            arcs = [(a - r, b + r) for a, b in front0.intervals]
        else:
            arcs = [(a - r, b + r) for a, b in front0.intervals if (b - a) + 2 * r > 0]
        iv, full = _merge_arcs(arcs)
        return FrontState(d=1, M=front0.M, intervals=iv, full=full)
    phi = front0.distance - r
    if np.all(phi < 0):
        return FrontState(d=2, M=front0.M, full=True)
    if np.all(phi >= 0):
        return FrontState(d=2, M=front0.M, distance=None)
    return FrontState(d=2, M=front0.M, distance=fast_marching(phi, mode="level"))


def chi_field(front: FrontState, alpha_minus: float, alpha_plus: float, M: Optional[int] = None) -> ContinuumField:
    """alpha_+ on G^+, alpha_- on the closure of G^-"""
    dist = front.grid_distance(M)
    return ContinuumField(front.d, dist.shape[0], np.where(dist < 0.0, alpha_plus, alpha_minus))


def _periodic_components(mask: np.ndarray) -> int:
    labels, count = ndimage.label(mask)
    if count == 0:
        return 0
    parent = list(range(count + 1))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a
    for axis in range(mask.ndim):
        first = np.take(labels, 0, axis=axis)
        last = np.take(labels, -1, axis=axis)
        for a, b in zip(first.ravel(), last.ravel()):
            if a and b:
                parent[find(a)] = find(b)
    return len({find(k) for k in range(1, count + 1)})


def first_topology_change(front: FrontState, c_star: float, t_max: float, steps: int = 200) -> float:
    """First time the Huygens flow merges or annihilates components (inf if none before t_max)"""
    if c_star == 0.0 or front.empty or front.full:
        return math.inf
    if front.d == 1:
        shortest_plus, shortest_minus = front.gaps()
        t = shortest_minus / (2.0 * c_star) if c_star > 0 else shortest_plus / (2.0 * abs(c_star))
        return t if t <= t_max else math.inf
    mask0 = front.inside()
    counts0 = (_periodic_components(mask0), _periodic_components(~mask0))
    for k in range(1, steps + 1):
        t = t_max * k / steps
        mask = huygens_evolve(front, c_star, t).inside()
        if (_periodic_components(mask), _periodic_components(~mask)) != counts0:
            return t
    return math.inf


# ----------------------------------------------------------------------------
# Cutoff distance
# ----------------------------------------------------------------------------

def cutoff(s, d0: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(h, h', h'') with h(s) = s on |s| <= d0 and h = +-2 d0 on |s| >= 3 d0.

    The blend is d0 + 2 d0 g(x), x = (|s| - d0)/(2 d0), with g the quintic matching value,
    slope and curvature at both ends (C^2). Those six conditions fix g(x) = x - x^3 + x^4/2;
    its x^5 coefficient is zero. g'(x) = (1 - x)^2 (1 + 2x) lies in [0, 1].
    """
    s = np.asarray(s, dtype=float)
    a = np.abs(s)
    sign = np.sign(s)
    x = np.clip((a - d0) / (2.0 * d0), 0.0, 1.0)
    g = x - x ** 3 + 0.5 * x ** 4
    gp = (1.0 - x) ** 2 * (1.0 + 2.0 * x)
    gpp = 6.0 * x * x - 6.0 * x
    h = np.where(a <= d0, s, sign * (d0 + 2.0 * d0 * g))
    hp = np.where(a <= d0, 1.0, gp)
    hpp = np.where(a <= d0, 0.0, sign * gpp / (2.0 * d0))
    return h, hp, hpp


@dataclass
class CutoffDistance:
    """d = h(signed distance) on a grid, with its derivatives"""
    d0: float
    signed: np.ndarray
    values: np.ndarray
    slope: np.ndarray
    curvature: np.ndarray

    @property
    def gradient_norm(self) -> np.ndarray:
        """|grad d| = h'(signed) inside the band and 0 outside"""
        return np.where(np.abs(self.signed) < 3.0 * self.d0, self.slope, 0.0)


def band_check(front: FrontState, d0: float, M: Optional[int] = None, tol: float = 0.25) -> bool:
    """|grad dbar| = 1 on the 3 d0 band (1D: the band stays clear of the cut locus)"""
    if d0 <= 0:
        return False
    if front.d == 1:
        shortest_plus, shortest_minus = front.gaps()
        return 3.0 * d0 < 0.5 * min(shortest_plus, shortest_minus)
    dist = front.grid_distance(M)
    n = dist.shape[0]
    gx = (np.roll(dist, -1, 0) - np.roll(dist, 1, 0)) * n / 2.0
    gy = (np.roll(dist, -1, 1) - np.roll(dist, 1, 1)) * n / 2.0
    band = np.abs(dist) < 3.0 * d0
    if not band.any():
        return False
    return bool(np.all(np.abs(np.hypot(gx, gy)[band] - 1.0) <= tol))


def cutoff_distance(front: FrontState, d0: float, M: Optional[int] = None) -> CutoffDistance:
    if d0 <= 0:
        raise DomainError(f"d0 must be positive, got {d0}")
    if not band_check(front, d0, M):
        raise DomainError(f"eikonal band check failed for d0={d0}; choose a smaller d0", {"d0": d0})
    dist = front.grid_distance(M)
    h, hp, hpp = cutoff(dist, d0)
    return CutoffDistance(d0=d0, signed=dist, values=h, slope=hp, curvature=hpp)


def select_d0(front: FrontState, M: Optional[int] = None, start: float = 1.0 / 6.0,
              factor: float = 0.8, min_d0: float = 1e-4) -> float:
    """Largest d0 on a geometric ladder passing the band check, then halved"""
    d0 = start
    while d0 >= min_d0:
        if band_check(front, d0, M):
            return 0.5 * d0
        d0 *= factor
    raise DomainError("no admissible cutoff half-width found")


def laplacian_bound(front: FrontState, d0: float, M: Optional[int] = None) -> float:
    """C_{Delta d} = max |Delta d| for the cutoff distance"""
    if front.d == 1:
        # Delta d = h''(dbar) since dbar is piecewise linear with kinks outside the band
        return 0.75 / d0
    cut = cutoff_distance(front, d0, M)
    return float(np.abs(laplacian(cut.values, cut.values.shape[0])).max())


# ----------------------------------------------------------------------------
# Sub/super solutions
# ----------------------------------------------------------------------------

@dataclass
class SubSuperParams:
    sigma: float
    L: float
    beta: float
    C_delta_d: float
    d0: float
    epsilon: float
    kappa: float = 3.0
    T: float = math.inf
    sigma_max: Optional[float] = None

    def __post_init__(self):
        for name in ("sigma", "beta", "d0", "epsilon", "kappa"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive, got {getattr(self, name)}")
        if self.L < 0 or self.C_delta_d < 0:
            raise DomainError("L and C_delta_d must be nonnegative")

    def q(self, t: float) -> float:
        return (2.0 * self.sigma * self.beta * math.exp(-self.beta * t / (2.0 * self.epsilon))
                + self.kappa * self.epsilon / self.beta)

    def p(self, t: float) -> float:
        return (self.L + (self.kappa / (self.sigma * self.beta) + self.C_delta_d) * t
                + 4.0 * (1.0 - math.exp(-self.beta * t / (2.0 * self.epsilon))))

    def to_dict(self) -> Dict[str, Any]:
        return {"sigma": self.sigma, "L": self.L, "beta": self.beta, "C_delta_d": self.C_delta_d,
                "d0": self.d0, "epsilon": self.epsilon, "kappa": self.kappa, "T": self.T,
                "sigma_max": self.sigma_max}


def select_sigma(sigma_max: float, f: ReactionPolynomial) -> float:
    """sigma = min(sigma_max / 2, 1 / (8 max|f''| on [0, 2 alpha_+]))"""
    curvature = f.sup_abs_derivative(0.0, 2.0 * f.alpha_plus, order=2)
    cap = math.inf if curvature == 0 else 1.0 / (8.0 * curvature)
    return min(0.5 * sigma_max, cap)


def build_sub_super(params: SubSuperParams, wave: WaveProfile, front0: FrontState, t: float,
                    M: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """(u^-, u^+) at time t on the nodes j/M; front0 is the interface at time 0"""
    if t < 0 or t > params.T:
        raise DomainError(f"t={t} outside [0, T={params.T}]")
    front = huygens_evolve(front0, wave.c_star, t)
    dist = front.grid_distance(M)
    d, _, _ = cutoff(dist, params.d0)
    z = d / params.epsilon
    p, q = params.p(t), params.q(t)
    return wave.evaluate(z + p) - q, wave.evaluate(z - p) + q


def pde_operator(u_prev: np.ndarray, u_mid: np.ndarray, u_next: np.ndarray, dt: float,
                 eps: float, f: ReactionPolynomial) -> np.ndarray:
    """du/dt - eps Lap u - f(u)/eps at the middle time (central differences)"""
    M = u_mid.shape[0]
    return (u_next - u_prev) / (2.0 * dt) - eps * laplacian(u_mid, M) - f.poly(u_mid) / eps


@dataclass
class ResidualReport:
    min_plus: float
    max_minus: float
    target: float
    times: List[float] = field(default_factory=list)

    @property
    def margin_plus(self) -> float:
        return self.min_plus - self.target

    @property
    def margin_minus(self) -> float:
        return -self.target - self.max_minus

    @property
    def passed(self) -> bool:
        return self.margin_plus >= 0.0 and self.margin_minus >= 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {"min_plus": self.min_plus, "max_minus": self.max_minus, "target": self.target,
                "margin_plus": self.margin_plus, "margin_minus": self.margin_minus,
                "times": self.times, "passed": self.passed}


def residual(params: SubSuperParams, wave: WaveProfile, front0: FrontState, f: ReactionPolynomial,
             times: Sequence[float], M: int, dt: Optional[float] = None,
             target: Optional[float] = None) -> ResidualReport:
    """min of the operator on u^+ and max on u^- over the grid and the given times"""
    dt = dt if dt is not None else settings.certificate.time_step
    target = target if target is not None else settings.certificate.residual_target
    min_plus, max_minus = math.inf, -math.inf
    used = []
    for t in times:
        t = max(float(t), dt)
        t = min(t, params.T - dt)
        lo_prev, up_prev = build_sub_super(params, wave, front0, t - dt, M)
        lo_mid, up_mid = build_sub_super(params, wave, front0, t, M)
        lo_next, up_next = build_sub_super(params, wave, front0, t + dt, M)
        plus = pde_operator(up_prev, up_mid, up_next, dt, params.epsilon, f)
        minus = pde_operator(lo_prev, lo_mid, lo_next, dt, params.epsilon, f)
        min_plus = min(min_plus, float(plus.min()))
        max_minus = max(max_minus, float(minus.max()))
        used.append(t)
    logger.debug(f"Residuals: min L u+ = {min_plus:.3f}, max L u- = {max_minus:.3f}")
    return ResidualReport(min_plus=min_plus, max_minus=max_minus, target=target, times=used)


def search_L(target: np.ndarray, params: SubSuperParams, wave: WaveProfile, front0: FrontState,
             M1: float = 1.0, max_doublings: int = 40) -> float:
    """Smallest L on a doubling ladder with u^-(0) <= target <= u^+(0) on the grid.

    The ladder starts where U(M1 - L) >= alpha_+ - sigma beta.
    """
    f = wave.reaction
    threshold = params.sigma * params.beta
    reached = np.flatnonzero(wave.gap_plus <= threshold)
    z_req = float(wave.z[reached[-1]]) if reached.size else float(wave.z[0])
    L = max(1.0, M1 - z_req)
    M = target.shape[0]
    for _ in range(max_doublings):
        trial = SubSuperParams(**{**params.to_dict(), "L": L})
        lower, upper = build_sub_super(trial, wave, front0, 0.0, M)
        if np.all(lower <= target) and np.all(target <= upper):
            return L
        L *= 2.0
    raise DomainError("initial ordering not reached by the L search", {"alpha_plus": f.alpha_plus})


CONSISTENCY_FLOOR = 1e-12
CONSISTENCY_GROWTH = 1.2
LATTICE_SHIFTS = 16


@dataclass
class ConsistencyReport:
    N_values: List[int]
    differences: List[float]
    constants: List[float]
    K: float

    @property
    def growth(self) -> float:
        """Largest ratio of successive constants; pairs at the roundoff floor count as 0"""
        ratios = [b / a if self.differences[i + 1] > CONSISTENCY_FLOOR and a > 0 else 0.0
                  for i, (a, b) in enumerate(zip(self.constants, self.constants[1:]))]
        return max(ratios, default=0.0)

    @property
    def non_growing(self) -> bool:
        return self.growth <= CONSISTENCY_GROWTH

    def to_dict(self) -> Dict[str, Any]:
        return {"N": self.N_values, "differences": self.differences, "C": self.constants,
                "K": self.K, "growth": self.growth, "non_growing": self.non_growing}


def consistency_bound(params: SubSuperParams, wave: WaveProfile, front0: FrontState, t: float,
                      K: float, N_values: Sequence[int]) -> ConsistencyReport:
    """(1/sqrt K) max |Lap u - Lap^N u| against K/N for a 1D front, u = U(d/eps) + q(t).

    The wave is centred on the Huygens front: the shift p(t) only translates U and, once it
    exceeds max|d|/eps, leaves a constant field whose Laplacians are both zero. The maximum
    also runs over LATTICE_SHIFTS sub-lattice offsets of the grid against the front, so the
    O(1/N) error at the C^2 joins of the cutoff is measured at its worst position for every N.
    """
    if front0.d != 1:
        raise DomainError("consistency bound is implemented for 1D fronts")
    f = wave.reaction
    front = huygens_evolve(front0, wave.c_star, t)
    diffs, consts = [], []
    for N in N_values:
        diff = 0.0
        for shift in np.arange(LATTICE_SHIFTS) / LATTICE_SHIFTS:
            dist = front.signed_distance_at((np.arange(N) + shift) / N)
            d, hp, hpp = cutoff(dist, params.d0)
            z = d / params.epsilon
            U = wave.evaluate(z)
            dU = wave.derivative(z)
            d2U = -wave.c_star * dU - f.poly(U)
            exact = d2U * hp ** 2 / params.epsilon ** 2 + dU * hpp / params.epsilon
            discrete = laplacian(U + params.q(t), N)
            diff = max(diff, float(np.abs(exact - discrete).max()) / math.sqrt(K))
        diffs.append(diff)
        consts.append(diff * N / K)
    report = ConsistencyReport(N_values=list(N_values), differences=diffs, constants=consts, K=K)
    logger.debug(f"Consistency constants {consts} (growth {report.growth:.3f})")
    return report


# ----------------------------------------------------------------------------
# Front speed
# ----------------------------------------------------------------------------

@dataclass
class SpeedEstimate:
    speed: float
    stderr: float
    ci_low: float
    ci_high: float
    times: np.ndarray
    positions: np.ndarray

    def contains(self, value: float) -> bool:
        return self.ci_low <= value <= self.ci_high

    def to_dict(self) -> Dict[str, Any]:
        return {"speed": self.speed, "stderr": self.stderr, "ci_low": self.ci_low, "ci_high": self.ci_high,
                "times": self.times.tolist(), "positions": self.positions.tolist()}


def crossing_position(profile: np.ndarray, level: float, direction: str = "down") -> float:
    """Position in [0, 1) of the unique crossing of ``level`` in a periodic 1D profile"""
    n = profile.size
    nxt = np.roll(profile, -1)
    if direction == "down":
        idx = np.flatnonzero((profile >= level) & (nxt < level))
    else:
        idx = np.flatnonzero((profile < level) & (nxt >= level))
    if idx.size != 1:
        raise ExtractionError(f"expected one {direction} crossing of {level}, found {idx.size}")
    i = idx[0]
    frac = (profile[i] - level) / (profile[i] - nxt[i])
    return float(((i + frac) / n) % 1.0)


def front_speed(trajectory: Trajectory, alpha_star: float, t_start: float = 0.0,
                direction: str = "down", confidence: float = 0.95) -> SpeedEstimate:
    """Least-squares slope of the alpha_*-crossing position over the steady window"""
    values = trajectory.values
    if values.ndim == 3:
        values = values.mean(axis=2)
    if values.ndim != 2:
        raise ExtractionError("front speed needs a 1D or planar-symmetric 2D trajectory")
    keep = trajectory.times >= t_start
    times = trajectory.times[keep]
    if times.size < 2:
        raise ExtractionError("need at least two output times in the steady window")
    raw = np.array([crossing_position(v, alpha_star, direction) for v in values[keep]])
    positions = np.unwrap(raw * 2.0 * np.pi) / (2.0 * np.pi)
    if times.size == 2:
        speed = float((positions[1] - positions[0]) / (times[1] - times[0]))
        return SpeedEstimate(speed, 0.0, speed, speed, times, positions)
    fit = stats.linregress(times, positions)
    half = float(stats.t.ppf(0.5 + confidence / 2.0, times.size - 2)) * fit.stderr
    return SpeedEstimate(float(fit.slope), float(fit.stderr), float(fit.slope - half),
                         float(fit.slope + half), times, positions)
