"""
Kinetic Monte Carlo service for hydrolimit

Rejection-free simulation of the Glauber-Kawasaki generator
L_N = N^2/sqrt(K) L_K + sqrt(K) L_G, initial sampling from product
measures, empirical densities and the brute-force small-system oracle.
"""

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import sparse, special, stats
from tqdm import tqdm

from ..core import logger, settings, DomainError, CapacityError, AbsorbedError
from .glauber_rates import RateFunction
from .lattice_core import Configuration, TorusGeometry, window_patterns
from .reaction_diffusion import LatticeField

EXACT_MAX_SITES = 16
UNIFORMIZATION_TOLERANCE = 1e-14

Observer = Callable[[float, Configuration], None]


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator; replica i uses ``seed ^ i``"""
    return np.random.Generator(np.random.Philox(int(seed)))


class _IndexedSet:
    """O(1) insert/remove/uniform-pick over integer ids in [0, capacity)"""

    __slots__ = ("items", "pos")

    def __init__(self, capacity: int):
        self.items: List[int] = []
        self.pos = np.full(capacity, -1, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.items)

    def __contains__(self, key: int) -> bool:
        return self.pos[key] >= 0

    def add(self, key: int):
        if self.pos[key] < 0:
            self.pos[key] = len(self.items)
            self.items.append(key)

    def discard(self, key: int):
        i = self.pos[key]
        if i < 0:
            return
        last = self.items.pop()
        if last != key:
            self.items[i] = last
            self.pos[last] = i
        self.pos[key] = -1

    def pick(self, rng: np.random.Generator) -> int:
        return self.items[int(rng.integers(len(self.items)))]


@dataclass(frozen=True)
class EventRecord:
    kind: str
    sites: Tuple[int, ...]
    time: float


class MarkovState:
    """Configuration plus incremental bookkeeping of the event rates"""

    def __init__(self, configuration: Configuration, rates: RateFunction, K: float, time: float = 0.0):
        geometry = configuration.geometry
        if rates.window.d != geometry.d:
            raise DomainError(f"rate window dimension {rates.window.d} != torus dimension {geometry.d}")
        if not K > 1:
            raise DomainError(f"K must exceed 1, got {K}")
        self.geometry = geometry
        self.rates = rates
        self.K = float(K)
        self.time = float(time)
        self.occ = configuration.occupancy.copy()

        n = geometry.n_sites
        self.bonds = geometry.bond_table
        self.window_sites = geometry.offset_table(rates.window.offsets)
        # sites whose window contains a given site
        self.dependents = geometry.offset_table(-rates.window.offsets)
        site_ids = np.arange(n)
        self.site_bonds = np.stack(
            [axis * n + site_ids for axis in range(geometry.d)]
            + [axis * n + geometry.neighbor_table[:, 2 * axis + 1] for axis in range(geometry.d)],
            axis=1,
        )
        self.exchange_rate = geometry.N ** 2 / math.sqrt(self.K)
        self.flip_scale = math.sqrt(self.K)

        self.levels, self.level_of_pattern = np.unique(rates.table, return_inverse=True)
        self.weights = 1 << np.arange(rates.window.size, dtype=np.int64)
        self.rebuild()

    # -- full rebuild (also the invariant oracle) ---------------------------

    def _discordant_mask(self) -> np.ndarray:
        return self.occ[self.bonds[:, 0]] != self.occ[self.bonds[:, 1]]

    def _site_levels(self) -> np.ndarray:
        return self.level_of_pattern[window_patterns(self.occ, self.window_sites)]

    def rebuild(self):
        n = self.geometry.n_sites
        self.discordant = _IndexedSet(len(self.bonds))
        for b in np.flatnonzero(self._discordant_mask()):
            self.discordant.add(int(b))
        self.site_level = self._site_levels()
        self.buckets = [_IndexedSet(n) for _ in self.levels]
        for x, level in enumerate(self.site_level):
            self.buckets[level].add(x)
        self.level_counts = np.bincount(self.site_level, minlength=len(self.levels)).astype(float)
        self._level_weights = np.empty(len(self.levels))
        self._level_cumulative = np.empty(len(self.levels))

    @property
    def configuration(self) -> Configuration:
        return Configuration(self.geometry, self.occ)

    @property
    def flip_rates(self) -> np.ndarray:
        return self.levels[self.site_level]

    @property
    def kawasaki_total(self) -> float:
        return self.exchange_rate * len(self.discordant)

    @property
    def glauber_total(self) -> float:
        return self.flip_scale * float(self.levels @ self.level_counts)

    @property
    def total_rate(self) -> float:
        return self.kawasaki_total + self.glauber_total

    # -- incremental updates ------------------------------------------------

    def _refresh(self, changed: Sequence[int]):
        for x in changed:
            for b in self.site_bonds[x]:
                u, v = self.bonds[b]
                if self.occ[u] != self.occ[v]:
                    self.discordant.add(int(b))
                else:
                    self.discordant.discard(int(b))
        touched = np.unique(self.dependents[list(changed)].ravel())
        patterns = (self.occ[self.window_sites[touched]].astype(np.int64) * self.weights).sum(axis=1)
        for x, level in zip(touched, self.level_of_pattern[patterns]):
            old = self.site_level[x]
            if old != level:
                self.buckets[old].discard(int(x))
                self.buckets[level].add(int(x))
                self.level_counts[old] -= 1.0
                self.level_counts[level] += 1.0
                self.site_level[x] = level

    def waiting_time(self, rng: np.random.Generator) -> float:
        total = self.total_rate
        if total <= 0.0:
            raise AbsorbedError("no event has positive rate", {"time": self.time})
        return float(rng.exponential(1.0 / total))

    def apply_event(self, rng: np.random.Generator) -> EventRecord:
        kawasaki = self.kawasaki_total
        u = rng.random() * (kawasaki + self.glauber_total)
        if u < kawasaki:
            x, y = (int(s) for s in self.bonds[self.discordant.pick(rng)])
            self.occ[x], self.occ[y] = self.occ[y], self.occ[x]
            self._refresh((x, y))
            return EventRecord("exchange", (x, y), self.time)
        np.multiply(self.levels, self.level_counts, out=self._level_weights)
        np.cumsum(self._level_weights, out=self._level_cumulative)
        target = rng.random() * self._level_cumulative[-1]
        level = int(np.searchsorted(self._level_cumulative, target, side="right"))
        level = min(level, len(self.levels) - 1)
        x = self.buckets[level].pick(rng)
        self.occ[x] ^= 1
        self._refresh((x,))
        return EventRecord("flip", (x,), self.time)


def step(state: MarkovState, rng: np.random.Generator, horizon: float = math.inf) -> Optional[EventRecord]:
    """Advance by one event: exponential waiting time, then a discordant exchange or a flip.

    An event that would land after ``horizon`` is dropped and the clock stops at ``horizon``;
    the waiting times are memoryless, so the next call redraws it. Returns None in that case.
    """
    next_time = state.time + state.waiting_time(rng)
    if next_time > horizon:
        state.time = horizon
        return None
    state.time = next_time
    return state.apply_event(rng)


@dataclass
class InvariantReport:
    bonds_match: bool
    rates_match: bool
    totals_match: bool

    @property
    def passed(self) -> bool:
        return self.bonds_match and self.rates_match and self.totals_match


def check_invariants(state: MarkovState) -> InvariantReport:
    """Compare the incremental bookkeeping with a full recomputation"""
    expected_bonds = set(np.flatnonzero(state._discordant_mask()).tolist())
    bonds_match = expected_bonds == set(state.discordant.items)
    expected_rates = state.rates.site_rates(state.occ, state.window_sites)
    rates_match = bool(np.array_equal(expected_rates, state.flip_rates))
    bucket_members = sorted(x for b in state.buckets for x in b.items)
    total = (state.exchange_rate * len(expected_bonds)
             + state.flip_scale * float(expected_rates.sum()))
    counts = [float(len(b)) for b in state.buckets]
    totals_match = (bucket_members == list(range(state.geometry.n_sites))
                    and counts == state.level_counts.tolist()
                    and math.isclose(total, state.total_rate, rel_tol=1e-12, abs_tol=1e-12))
    return InvariantReport(bonds_match, rates_match, totals_match)


# ----------------------------------------------------------------------------
# Densities
# ----------------------------------------------------------------------------

def sample_product_measure(u: Union[LatticeField, np.ndarray], seed: Union[int, np.random.Generator],
                           geometry: Optional[TorusGeometry] = None) -> Configuration:
    """Independent Bernoulli(u(x)) occupancies"""
    if isinstance(u, LatticeField):
        geometry, values = u.geometry, u.values.reshape(-1)
    else:
        values = np.asarray(u, dtype=float).reshape(-1)
        if geometry is None:
            raise DomainError("geometry is required for a raw density array")
    if values.size != geometry.n_sites:
        raise DomainError(f"density has {values.size} entries for {geometry.n_sites} sites")
    if np.any(values < 0.0) or np.any(values > 1.0):
        raise DomainError("densities must lie in [0, 1]")
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    return Configuration(geometry, (rng.random(values.size) < values).astype(np.uint8))


@dataclass
class EmpiricalField:
    """Block-averaged occupancy"""
    block: int
    N: int
    densities: np.ndarray

    @property
    def d(self) -> int:
        return self.densities.ndim

    def centers(self) -> np.ndarray:
        return (np.arange(self.N // self.block) + 0.5) * self.block / self.N

    def pairing(self, phi: Callable[..., np.ndarray]) -> float:
        """Block Riemann sum of <alpha^N, phi>"""
        axes = np.meshgrid(*([self.centers()] * self.d), indexing="ij")
        cell = (self.block / self.N) ** self.d
        return float((self.densities * phi(*axes)).sum() * cell)


def empirical_measure(eta: Configuration, block: int) -> EmpiricalField:
    N, d = eta.geometry.N, eta.geometry.d
    if block < 1 or N % block:
        raise DomainError(f"block size {block} does not divide N={N}")
    m = N // block
    grid = eta.as_grid().astype(float).reshape(sum(((m, block) for _ in range(d)), ()))
    densities = grid.mean(axis=tuple(range(1, 2 * d, 2)))
    return EmpiricalField(block=block, N=N, densities=densities)


def pairing(eta: Configuration, phi: Callable[..., np.ndarray]) -> float:
    """<alpha^N, phi> = N^-d sum_x eta_x phi(x/N)"""
    g = eta.geometry
    axes = np.meshgrid(*([np.arange(g.N) / g.N] * g.d), indexing="ij")
    return float((eta.as_grid() * phi(*axes)).sum() / g.n_sites)


def relative_entropy_product(p, q) -> float:
    """Relative entropy of Bernoulli product measures with marginals p and q"""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise DomainError("density fields must have the same shape")
    if np.any(q <= 0.0) or np.any(q >= 1.0):
        raise DomainError("reference density must lie strictly inside (0, 1)")
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise DomainError("densities must lie in [0, 1]")
    return float(special.rel_entr(p, q).sum() + special.rel_entr(1.0 - p, 1.0 - q).sum())


# ----------------------------------------------------------------------------
# Simulation
# ----------------------------------------------------------------------------

@dataclass
class KMCTrajectory:
    """Snapshots at the observer times"""
    K: float
    times: List[float]
    snapshots: List[Configuration]
    events: int = 0
    absorbed: bool = False
    seed: Optional[int] = None

    def at(self, t: float, atol: float = 1e-12) -> Configuration:
        for s, snap in zip(self.times, self.snapshots):
            if abs(s - t) <= atol:
                return snap
        raise DomainError(f"time {t} was not observed")

    @property
    def final(self) -> Configuration:
        return self.snapshots[-1]

    def to_frame(self, block: int = 1) -> pd.DataFrame:
        rows = []
        for t, snap in zip(self.times, self.snapshots):
            dens = empirical_measure(snap, block).densities.reshape(-1)
            for i, v in enumerate(dens):
                rows.append((t, t / math.sqrt(self.K), i, v))
        return pd.DataFrame(rows, columns=["t", "t_rescaled", "block", "density"])


def simulate(eta0: Configuration, rates: RateFunction, K: float, t_end: float,
             observers: Optional[Sequence[float]] = None, seed: Union[int, np.random.Generator] = 0,
             callbacks: Sequence[Observer] = ()) -> KMCTrajectory:
    """Run until t_end, recording snapshots at the observer times"""
    if t_end < 0:
        raise DomainError(f"t_end must be nonnegative, got {t_end}")
    times = sorted({0.0, float(t_end)} | {float(t) for t in (observers or ()) if 0.0 <= t <= t_end})
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    state = MarkovState(eta0, rates, K)
    trajectory = KMCTrajectory(K=float(K), times=[], snapshots=[],
                               seed=None if isinstance(seed, np.random.Generator) else int(seed))
    started = time.time()

    def observe(t: float):
        snap = state.configuration
        trajectory.times.append(t)
        trajectory.snapshots.append(snap)
        for cb in callbacks:
            cb(t, snap)

    for t in times:
        try:
            while not trajectory.absorbed and step(state, rng, horizon=t) is not None:
                trajectory.events += 1
        except AbsorbedError:
            trajectory.absorbed = True
        observe(t)

    logger.log_performance("kmc.simulate", time.time() - started,
                           events=trajectory.events, N=eta0.geometry.N, K=K)
    return trajectory


# ----------------------------------------------------------------------------
# Exact oracle
# ----------------------------------------------------------------------------

def generator_matrix(geometry: TorusGeometry, rates: RateFunction, K: float) -> sparse.csr_matrix:
    """Full generator of L_N over all 2^n states (state index bit i = site i)"""
    n = geometry.n_sites
    if n > EXACT_MAX_SITES:
        raise CapacityError(f"exact oracle supports at most {EXACT_MAX_SITES} sites, got {n}",
                            {"d": geometry.d, "N": geometry.N})
    S = 1 << n
    states = np.arange(S, dtype=np.int64)
    bits = ((states[:, None] >> np.arange(n)) & 1).astype(np.uint8)
    rows, cols, vals = [], [], []

    # each oriented bond carries N^2/sqrt(K); concordant swaps are self-loops and cancel
    exchange = geometry.N ** 2 / math.sqrt(K)
    for x, y in geometry.bond_table:
        moving = bits[:, x] != bits[:, y]
        src = states[moving]
        rows.append(src)
        cols.append(src ^ ((1 << int(x)) | (1 << int(y))))
        vals.append(np.full(src.size, exchange))

    window_sites = geometry.offset_table(rates.window.offsets)
    weights = 1 << np.arange(rates.window.size, dtype=np.int64)
    patterns = (bits[:, window_sites].astype(np.int64) * weights).sum(axis=2)
    flip = math.sqrt(K) * rates.table[patterns]
    for x in range(n):
        positive = flip[:, x] > 0
        src = states[positive]
        rows.append(src)
        cols.append(src ^ (1 << x))
        vals.append(flip[positive, x])

    off = sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                            shape=(S, S)).tocsr()
    diag = np.asarray(off.sum(axis=1)).ravel()
    return (off - sparse.diags(diag)).tocsr()


def exact_distribution(geometry: TorusGeometry, rates: RateFunction, K: float, t: float,
                       initial: Union[Configuration, np.ndarray]) -> np.ndarray:
    """Law at time t by uniformization; the Poisson tail bounds the l1 error"""
    Q = generator_matrix(geometry, rates, K)
    S = Q.shape[0]
    if isinstance(initial, Configuration):
        p = np.zeros(S)
        p[initial.state_index()] = 1.0
    else:
        p = np.asarray(initial, dtype=float).copy()
        if p.shape != (S,):
            raise DomainError(f"initial law must have {S} entries")
    if t < 0:
        raise DomainError(f"t must be nonnegative, got {t}")
    if t == 0:
        return p
    rate = float(-Q.diagonal().min())
    if rate == 0.0:
        return p
    P = (sparse.identity(S, format="csr") + Q / rate).T.tocsr()
    mean = rate * t
    k_max = int(stats.poisson.isf(UNIFORMIZATION_TOLERANCE, mean)) + 1
    weights = stats.poisson.pmf(np.arange(k_max + 1), mean)
    result = weights[0] * p
    term = p
    for k in range(1, k_max + 1):
        term = P @ term
        result += weights[k] * term
    logger.debug(f"Uniformization: {S} states, rate {rate:.3g}, {k_max} terms")
    return result


# ----------------------------------------------------------------------------
# Replicas
# ----------------------------------------------------------------------------

@dataclass
class ReplicaSpec:
    """Everything a worker needs to run one replica"""
    d: int
    N: int
    rates: Dict[str, Any]
    K: float
    t_end: float
    observers: List[float] = field(default_factory=list)
    initial_state: Optional[bytes] = None
    initial_density: Optional[np.ndarray] = None
    seed: int = 0


def run_replica(spec: ReplicaSpec, index: int) -> KMCTrajectory:
    seed = spec.seed ^ index
    rng = make_rng(seed)
    geometry = TorusGeometry(spec.d, spec.N)
    if spec.initial_state is not None:
        eta0 = Configuration.from_bytes(spec.initial_state)
    elif spec.initial_density is not None:
        eta0 = sample_product_measure(spec.initial_density, rng, geometry)
    else:
        raise DomainError("replica needs an initial configuration or density")
    result = simulate(eta0, RateFunction.from_dict(spec.rates), spec.K, spec.t_end, spec.observers, rng)
    result.seed = seed
    return result


def _run_replica_args(args: Tuple[ReplicaSpec, int]) -> KMCTrajectory:
    return run_replica(*args)


class ReplicaRunner:
    """Replicas on a bounded process pool, returned in replica order"""

    def __init__(self, workers: Optional[int] = None, show_progress: Optional[bool] = None):
        self.workers = workers if workers is not None else settings.processing.parallel_workers
        self.show_progress = settings.processing.show_progress if show_progress is None else show_progress

    def run(self, spec: ReplicaSpec, replicas: int) -> List[KMCTrajectory]:
        jobs = [(spec, i) for i in range(replicas)]
        started = time.time()
        if self.workers <= 1:
            results = [_run_replica_args(job) for job in tqdm(jobs, disable=not self.show_progress,
                                                              desc="replicas")]
        else:
            with ProcessPoolExecutor(max_workers=self.workers) as pool:
                results = list(tqdm(pool.map(_run_replica_args, jobs,
                                             chunksize=settings.processing.chunk_size),
                                    total=replicas, disable=not self.show_progress, desc="replicas"))
        logger.log_performance("kmc.replicas", time.time() - started, replicas=replicas, workers=self.workers)
        return results


def state_frequencies(results: Sequence[KMCTrajectory], t: Optional[float] = None) -> np.ndarray:
    """Counts of each state index at time t (final snapshot by default)"""
    if not results:
        raise DomainError("no replicas to aggregate")
    n = results[0].final.geometry.n_sites
    if n > EXACT_MAX_SITES:
        raise CapacityError(f"state counting supports at most {EXACT_MAX_SITES} sites")
    counts = np.zeros(1 << n, dtype=np.int64)
    for r in results:
        snap = r.final if t is None else r.at(t)
        counts[snap.state_index()] += 1
    return counts
