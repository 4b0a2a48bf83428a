"""Exact thinning simulation of the interacting particle system.

All three stochastic systems (the interacting counting processes, the
inhomogeneous-Poisson comparison system sharing the same randomness, and the
exponentially tilted variant) are sampled by thinning candidate points against
a dominating rate.  Candidates live on a common deformed clock: with
``Lbar(t) = int_0^t lbar(s) ds`` the running integral of the per-particle
dominating rate, each particle's candidates are the partial sums of its own
unit exponentials in ``Lbar`` time.  The dominating rate

    lbar = phi(0) + alpha * ||h||_sup[0,T] * Zbar_t

is constant between accepted jumps (the empirical mean ``Zbar`` only moves at
jumps, h >= 0, and phi is alpha-Lipschitz), so the deformed clock is piecewise
linear and candidates can be mapped to real time one at a time, in order,
without ever discarding or re-drawing pending candidates.  Floating-point ties
across particles are broken by particle index.

Each particle consumes its own counter-based stream, which is what makes the
shared-randomness coupling and the tilted variant well defined: the same
(seed, particle) pair replays the same candidate points and acceptance marks
under every mode.
"""

from __future__ import annotations

import heapq
import math
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .meanfield import MeanPath, TimeGrid
from .model import Kernel, RateFn, kernel_norms
from .rng import MarkStream

__all__ = [
    "EventLog",
    "CouplingLog",
    "SimulationError",
    "simulate_hawkes",
    "simulate_coupled",
    "simulate_perturbed",
    "mean_path",
    "empirical_measure",
    "sup_path_difference",
    "event_log_to_bytes",
    "event_log_from_bytes",
    "event_log_to_csv",
]

_MAGIC = b"HWKS"
_VERSION = 1

# dominating-rate overflow guard: a per-particle bound beyond this is a model error
_RATE_CEILING = 1e12


class SimulationError(RuntimeError):
    """Simulation aborted (dominating-rate overflow or inconsistent inputs)."""


@dataclass(frozen=True)
class EventLog:
    """Per-particle sorted jump times of one simulated system on (0, T]."""

    N: int
    T: float
    jumps: tuple[np.ndarray, ...]
    seed: int
    kind: str  # hawkes | mf_poisson | perturbed

    def counts(self, t: float) -> np.ndarray:
        """Integer count of each particle at time t (jumps at exactly t included)."""
        return np.array([np.searchsorted(j, t, side="right") for j in self.jumps], dtype=np.int64)

    @property
    def total_jumps(self) -> int:
        return int(sum(j.size for j in self.jumps))


@dataclass(frozen=True)
class CouplingLog:
    """Jointly simulated pair driven by identical candidates and marks."""

    hawkes: EventLog
    poisson: EventLog
    seed: int


def _freeze_jumps(jumps: list[list[float]]) -> tuple[np.ndarray, ...]:
    out = []
    for j in jumps:
        a = np.asarray(j, dtype=float)
        a.flags.writeable = False
        out.append(a)
    return tuple(out)


class _ZeroCache:
    def add(self, t: float) -> None:
        pass

    def value(self, t: float) -> float:
        return 0.0


class _ConstCache:
    # h constant: the convolution is level * (total jumps) / N
    def __init__(self, level: float, N: int):
        self.per_jump = level / N
        self.acc = 0.0

    def add(self, t: float) -> None:
        self.acc += self.per_jump

    def value(self, t: float) -> float:
        return self.acc


class _ExpCache:
    # h(t) = a e^{-bt}: decayed jump sum updated in O(1) per event
    def __init__(self, a: float, b: float, N: int):
        self.a_over_n = a / N
        self.b = b
        self.s = 0.0
        self.t_ref = 0.0

    def add(self, t: float) -> None:
        self.s = self.s * math.exp(-self.b * (t - self.t_ref)) + 1.0
        self.t_ref = t

    def value(self, t: float) -> float:
        return self.a_over_n * self.s * math.exp(-self.b * (t - self.t_ref))


class _GenericCache:
    # fallback: exact Stieltjes sum over all recorded jumps, O(#jumps) per call
    def __init__(self, kernel: Kernel, N: int):
        self.kernel = kernel
        self.inv_n = 1.0 / N
        self.times: list[float] = []

    def add(self, t: float) -> None:
        self.times.append(t)

    def value(self, t: float) -> float:
        if not self.times:
            return 0.0
        lags = t - np.asarray(self.times)
        return float(np.sum(self.kernel.eval(lags))) * self.inv_n


def _make_cache(kernel: Kernel, N: int):
    if kernel.kind == "zero":
        return _ZeroCache()
    if kernel.kind == "constant":
        return _ConstCache(kernel.a, N)
    if kernel.kind == "exponential":
        return _ExpCache(kernel.a, kernel.b, N)
    return _GenericCache(kernel, N)


def _scalar_rate(rate: RateFn):
    if rate.kind == "affine":
        base, slope = rate.base, rate.slope
        return lambda x: base + slope * x
    if rate.kind == "custom":
        return rate.fn
    grid, values = rate.grid, rate.values
    return lambda x: float(np.interp(x, grid, values))


def _lambda_interp(mean: MeanPath):
    """O(1) linear interpolation of the limit intensity on its uniform grid."""
    lam = mean.lam
    n = mean.grid.n
    if n == 0:
        lam0 = float(lam[0])
        return lambda t: lam0
    dt = mean.grid.dt

    def at(t: float) -> float:
        pos = t / dt
        k = int(pos)
        if k >= n:
            return float(lam[n])
        frac = pos - k
        return float(lam[k]) + frac * (float(lam[k + 1]) - float(lam[k]))

    return at


def _run_thinning(
    mode: str,
    N: int,
    kernel: Kernel,
    rate: RateFn,
    T: float,
    seed: int,
    mean: MeanPath | None = None,
    grad_psi: np.ndarray | None = None,
    psi_grid: TimeGrid | None = None,
    tilt: float = 0.0,
    stream_indices: Sequence[int] | None = None,
):
    if N < 1:
        raise ValueError(f"need N >= 1, got {N}")
    if not T > 0:
        raise ValueError(f"need T > 0, got {T}")
    phi = _scalar_rate(rate)
    phi0 = float(rate.eval(0.0))
    alpha = rate.lipschitz
    h_sup, _ = kernel_norms(kernel, T, T / 1000.0)
    cache = _make_cache(kernel, N)

    mf_at = None
    mf_bound = 0.0
    if mode == "coupled":
        if mean is None or mean.grid.T < T - 1e-12:
            raise SimulationError("coupled simulation needs a mean path solved on [0, T]")
        mf_at = _lambda_interp(mean)
        mf_bound = float(np.max(mean.lam))

    tilt_bound = 1.0
    if mode == "perturbed":
        n_psi = psi_grid.n
        dt_psi = psi_grid.dt
        k_states = grad_psi.shape[1] - 1
        tilt_bound = math.exp(max(0.0, tilt * float(np.max(grad_psi))))

        def grad_at(t: float, x: int) -> float:
            if x > k_states:
                return 0.0
            pos = t / dt_psi
            k = int(pos)
            if k >= n_psi:
                return float(grad_psi[n_psi, x])
            frac = pos - k
            g0 = float(grad_psi[k, x])
            return g0 + frac * (float(grad_psi[k + 1, x]) - g0)

    streams = [
        MarkStream(seed, stream_indices[i] if stream_indices is not None else i)
        for i in range(N)
    ]
    heap = [(streams[i].exponential(), i) for i in range(N)]
    heapq.heapify(heap)

    jumps: list[list[float]] = [[] for _ in range(N)]
    jumps_mf: list[list[float]] = [[] for _ in range(N)] if mode == "coupled" else []
    counts = [0] * N
    total = 0

    def bound() -> float:
        lb = phi0 + alpha * h_sup * (total / N)
        if mode == "coupled":
            lb = max(lb, mf_bound)
        elif mode == "perturbed":
            lb *= tilt_bound
        if not (lb < _RATE_CEILING):
            raise SimulationError(f"dominating rate {lb:.3e} overflows; model is pathological")
        return lb

    t = 0.0
    q_ref = 0.0
    lam_bar = bound()
    push = heapq.heappush
    pop = heapq.heappop

    while True:
        q, i = pop(heap)
        t_cand = t + (q - q_ref) / lam_bar
        if t_cand > T:
            break
        z = streams[i].uniform()
        zl = z * lam_bar
        accepted = False
        if mode == "hawkes":
            lam = phi(cache.value(t_cand))
            assert lam <= lam_bar * (1.0 + 1e-9), "thinning bound violated"
            accepted = zl < lam
        elif mode == "coupled":
            lam = phi(cache.value(t_cand))
            lam_mf = mf_at(t_cand)
            assert max(lam, lam_mf) <= lam_bar * (1.0 + 1e-9), "thinning bound violated"
            accepted = zl < lam
            if zl < lam_mf:
                jumps_mf[i].append(t_cand)
        else:  # perturbed
            lam = math.exp(tilt * grad_at(t_cand, counts[i])) * phi(cache.value(t_cand))
            assert lam <= lam_bar * (1.0 + 1e-9), "thinning bound violated"
            accepted = zl < lam
        t = t_cand
        q_ref = q
        if accepted:
            jumps[i].append(t_cand)
            counts[i] += 1
            total += 1
            cache.add(t_cand)
            lam_bar = bound()
        push(heap, (q + streams[i].exponential(), i))

    return jumps, jumps_mf


def simulate_hawkes(
    N: int,
    kernel: Kernel,
    rate: RateFn,
    T: float,
    seed: int,
    stream_indices: Sequence[int] | None = None,
) -> EventLog:
    """Exact-in-law sample of the N-particle system on (0, T].

    Every particle jumps with the common intensity
    ``phi(N^-1 sum_j int_0^{t-} h(t-s) dZ_s^j)``; candidates are proposed per
    particle from its own mark stream and accepted against the exact intensity
    at the candidate time.  ``stream_indices`` remaps particles onto stream
    keys (testing hook for the exchangeability contract).
    """
    jumps, _ = _run_thinning("hawkes", N, kernel, rate, T, seed, stream_indices=stream_indices)
    return EventLog(N=N, T=float(T), jumps=_freeze_jumps(jumps), seed=seed, kind="hawkes")


def simulate_coupled(
    N: int,
    kernel: Kernel,
    rate: RateFn,
    mean: MeanPath,
    T: float,
    seed: int,
) -> CouplingLog:
    """Joint sample of the interacting system and its Poisson comparison system.

    One candidate stream per particle at a rate dominating both intensities;
    a candidate with mark z enters the interacting log iff z <= lam_hawkes/lbar
    and, independently, the Poisson log iff z <= lam_limit/lbar.  With the two
    acceptance regions nested this realizes the usual shared-randomness
    coupling, and with h == 0 the two logs are identical.
    """
    jumps, jumps_mf = _run_thinning("coupled", N, kernel, rate, T, seed, mean=mean)
    return CouplingLog(
        hawkes=EventLog(N=N, T=float(T), jumps=_freeze_jumps(jumps), seed=seed, kind="hawkes"),
        poisson=EventLog(N=N, T=float(T), jumps=_freeze_jumps(jumps_mf), seed=seed, kind="mf_poisson"),
        seed=seed,
    )


def simulate_perturbed(
    N: int,
    kernel: Kernel,
    rate: RateFn,
    psi_grad: np.ndarray,
    psi_grid: TimeGrid,
    tilt: float,
    T: float,
    seed: int,
) -> EventLog:
    """Tilted system: particle i jumps at ``exp(tilt * grad_psi(t, x_i)) * phi(...)``.

    ``psi_grad`` holds the discrete gradient of the test function on
    grid x {0..K} (linearly interpolated in t, zero beyond K); ``tilt`` is the
    scalar a(N)/sqrt(N).  With psi == 0 the output is bit-identical to
    ``simulate_hawkes`` at the same seed.
    """
    grad = np.asarray(psi_grad, dtype=float)
    if grad.ndim != 2 or grad.shape[0] != psi_grid.n + 1:
        raise ValueError("psi_grad must be (n+1) x (K+1) on the supplied grid")
    if not np.all(np.isfinite(grad)):
        raise ValueError("psi_grad must be finite")
    if psi_grid.T < T - 1e-12:
        raise ValueError("test function grid must cover [0, T]")
    jumps, _ = _run_thinning(
        "perturbed", N, kernel, rate, T, seed, grad_psi=grad, psi_grid=psi_grid, tilt=float(tilt)
    )
    return EventLog(N=N, T=float(T), jumps=_freeze_jumps(jumps), seed=seed, kind="perturbed")


def mean_path(log: EventLog, grid: TimeGrid) -> np.ndarray:
    """Empirical mean count Zbar(t_k) = N^-1 sum_i count_i(t_k) on the grid."""
    if abs(grid.T - log.T) > 1e-9 * max(1.0, log.T):
        raise ValueError(f"grid horizon {grid.T} does not match log horizon {log.T}")
    if log.total_jumps == 0:
        return np.zeros(grid.n + 1)
    allj = np.sort(np.concatenate([j for j in log.jumps if j.size]))
    return np.searchsorted(allj, grid.points, side="right") / log.N


def empirical_measure(log: EventLog, t: float, K: int) -> tuple[np.ndarray, int]:
    """Distribution of particle counts at time t over {0..K}, plus overflow count."""
    if t > log.T + 1e-12:
        raise ValueError(f"t={t} beyond the simulated horizon {log.T}")
    c = log.counts(t)
    overflow = int(np.sum(c > K))
    pmf = np.bincount(c[c <= K], minlength=K + 1)[: K + 1] / log.N
    return pmf, overflow


def sup_path_difference(a: EventLog, b: EventLog) -> np.ndarray:
    """Per-particle sup_t |count_a(t) - count_b(t)| over the common horizon.

    Simultaneous jumps (shared accepted candidates) cancel exactly: the
    difference is evaluated right after each distinct event time.
    """
    if a.N != b.N:
        raise ValueError("event logs must have the same particle count")
    out = np.zeros(a.N)
    for i in range(a.N):
        ja, jb = a.jumps[i], b.jumps[i]
        if ja.size == 0 and jb.size == 0:
            continue
        times = np.union1d(ja, jb)
        diff = np.searchsorted(ja, times, side="right") - np.searchsorted(jb, times, side="right")
        out[i] = float(np.max(np.abs(diff)))
    return out


def event_log_to_bytes(log: EventLog) -> bytes:
    """Compact binary record: HWKS, version u16, N u32, T f64, seed u64,
    per-particle jump counts u32, then all jump times f64 (little endian)."""
    head = _MAGIC + struct.pack("<HIdQ", _VERSION, log.N, log.T, log.seed)
    counts = np.array([j.size for j in log.jumps], dtype="<u4").tobytes()
    times = (
        np.concatenate(log.jumps).astype("<f8").tobytes() if log.total_jumps else b""
    )
    return head + counts + times


def event_log_from_bytes(buf: bytes, kind: str = "hawkes") -> EventLog:
    if buf[:4] != _MAGIC:
        raise ValueError("not an event-log record (bad magic)")
    version, n, t, seed = struct.unpack_from("<HIdQ", buf, 4)
    if version != _VERSION:
        raise ValueError(f"unsupported event-log version {version}")
    off = 4 + struct.calcsize("<HIdQ")
    counts = np.frombuffer(buf, dtype="<u4", count=n, offset=off)
    off += 4 * n
    times = np.frombuffer(buf, dtype="<f8", count=int(counts.sum()), offset=off)
    jumps = []
    pos = 0
    for c in counts:
        arr = times[pos : pos + int(c)].astype(float)
        arr.flags.writeable = False
        jumps.append(arr)
        pos += int(c)
    return EventLog(N=int(n), T=float(t), jumps=tuple(jumps), seed=int(seed), kind=kind)


def event_log_to_csv(log: EventLog) -> str:
    lines = ["particle,jump_time"]
    for i, j in enumerate(log.jumps):
        for t in j:
            lines.append(f"{i},{t!r}")
    return "\n".join(lines) + "\n"
