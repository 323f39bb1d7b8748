"""Quantum-jump (Monte-Carlo wavefunction) trajectories and ensembles.

Between jumps the unnormalized state follows ``d psi/dt = -i H_eff psi``
with ``H_eff = H - (i/2) sum_k L_k^dag L_k``. A jump happens when the
squared norm falls to a uniform random threshold; the channel is drawn with
probability proportional to ``||L_k psi||**2``.

Two propagators are available:

``"spectral"`` (default)
    ``H_eff`` is split into its decoupled blocks (connected components of
    its sparsity graph; for both models these are excitation-number
    sectors) and each block is diagonalized once. Propagation and norm
    evaluation are then exact.
``"rk4"``
    Fixed-step classical Runge-Kutta on the whole space with renormalization
    after every step. Slow; kept as an independent cross-check.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy.optimize import brentq
from scipy.sparse.csgraph import connected_components

from .errors import (
    ConfigError,
    IntegratorInstabilityError,
    InternalConsistencyError,
    PhotonCutoffError,
    SuperradError,
    TrajectoryError,
)
from .model import OperatorSet, basis_index, gamma_c
from .records import JumpRecord

MASK64 = (1 << 64) - 1
CUTOFF_TOLERANCE = 1e-6
NORM_DRIFT_TOLERANCE = 1e-9
JUMP_TIME_RTOL = 1e-9


@dataclass
class StateVector:
    amplitudes: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)

    @property
    def norm2(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)


def product_state(ops: OperatorSet, excited=(), photons: int = 0) -> StateVector:
    psi = np.zeros(ops.dimension, dtype=complex)
    psi[basis_index(ops, excited, photons)] = 1.0
    return StateVector(psi)


def ground_state(ops: OperatorSet) -> StateVector:
    """All atoms in ``|g>``, cavity in vacuum."""
    return product_state(ops)


def excited_state(ops: OperatorSet) -> StateVector:
    return product_state(ops, excited=range(1, ops.n_atoms + 1))


def expectation(state, op) -> complex:
    """``<psi|op|psi>`` for the normalized state."""
    psi = state.amplitudes if isinstance(state, StateVector) else np.asarray(state, dtype=complex)
    if op.shape != (psi.size, psi.size):
        raise ValueError(f"operator shape {op.shape} does not match state dimension {psi.size}")
    n2 = np.vdot(psi, psi).real
    return complex(np.vdot(psi, op @ psi) / n2)


# --- seeds --------------------------------------------------------------------


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def derive_seed(master_seed: int, index: int) -> int:
    """Seed of trajectory ``index``: ``splitmix64(splitmix64(master) ^ index)``.

    A pure function of its arguments, so an ensemble does not depend on how
    trajectories are scheduled over workers.
    """
    return _splitmix64(_splitmix64(master_seed & MASK64) ^ (index & MASK64))


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based Philox stream keyed by the 64-bit trajectory seed."""
    return np.random.Generator(np.random.Philox(key=seed & MASK64))


# --- propagators ----------------------------------------------------------------


def effective_hamiltonian(ops: OperatorSet) -> sp.csr_matrix:
    decay = sum((L.conj().T @ L for _, L in ops.jump_channels), sp.csr_matrix((ops.dimension,) * 2, dtype=complex))
    return (ops.h_coherent - 0.5j * decay).tocsr()


class _Block:
    __slots__ = ("idx", "kind", "vecs", "inv", "lam", "rates", "dense")

    def __init__(self, idx, h_block, k_block, hermitian_decay):
        self.idx = idx
        self.vecs = self.inv = self.lam = self.rates = self.dense = None
        if hermitian_decay:
            rates, vecs = la.eigh(k_block)
            self.kind = "herm"
            self.rates = np.clip(rates, 0.0, None)
            self.vecs = vecs
            return
        heff = h_block - 0.5j * k_block
        lam, vecs = la.eig(heff)
        if np.linalg.cond(vecs) < 1e8:
            self.kind = "eig"
            self.lam = lam
            self.vecs = vecs
            self.inv = la.inv(vecs)
        else:
            self.kind = "expm"
            self.dense = heff


class SpectralPropagator:
    """Exact between-jump propagation on the decoupled blocks of ``H_eff``."""

    method = "spectral"

    def __init__(self, ops: OperatorSet):
        heff = effective_hamiltonian(ops)
        pattern = (abs(heff) + abs(heff).T).tocsr()
        n_blocks, labels = connected_components(pattern, directed=False)
        self.labels = labels
        h = ops.h_coherent.toarray() if ops.h_coherent.nnz else None
        k = (1j * 2 * (heff - ops.h_coherent)).toarray()  # sum_k L_k^dag L_k
        self.blocks = []
        for b in range(n_blocks):
            idx = np.flatnonzero(labels == b)
            kb = k[np.ix_(idx, idx)]
            kb = 0.5 * (kb + kb.conj().T)
            hb = h[np.ix_(idx, idx)] if h is not None else None
            herm = hb is None or not np.any(hb)
            self.blocks.append(_Block(idx, hb, kb, herm))

        self.channel_weights = _ChannelWeights([L for _, L in ops.jump_channels])

    def segment(self, psi: np.ndarray):
        return _SpectralSegment(self, psi)


class _SpectralSegment:
    def __init__(self, prop: SpectralPropagator, psi: np.ndarray):
        self.dim = psi.size
        support = np.unique(prop.labels[np.flatnonzero(psi)])
        self.key = ("blocks", *support.tolist())
        self.idx = (
            prop.blocks[support[0]].idx if support.size == 1 else np.concatenate([prop.blocks[b].idx for b in support])
        )
        self.parts = []
        for b in support:
            block = prop.blocks[b]
            pb = psi[block.idx]
            if block.kind == "herm":
                c = block.vecs.conj().T @ pb
                self.parts.append((block, c, np.abs(c) ** 2))
            elif block.kind == "eig":
                self.parts.append((block, block.inv @ pb, None))
            else:
                self.parts.append((block, pb, None))

    def _block_state(self, part, t):
        block, c, _ = part
        if block.kind == "herm":
            return block.vecs @ (c * np.exp(-0.5 * block.rates * t))
        if block.kind == "eig":
            return block.vecs @ (c * np.exp(-1j * block.lam * t))
        return la.expm(-1j * t * block.dense) @ c

    def norm2(self, t: float) -> float:
        total = 0.0
        for part in self.parts:
            block, _, weights = part
            if weights is not None:
                total += float(weights @ np.exp(-block.rates * t))
            else:
                v = self._block_state(part, t)
                total += float(np.vdot(v, v).real)
        return total

    def initial_decay_rate(self) -> float | None:
        """``-d/dt ||psi||**2`` at ``t = 0`` when cheaply available."""
        if all(w is not None for _, _, w in self.parts):
            return float(sum(w @ block.rates for block, _, w in self.parts))
        return None

    def state(self, t: float) -> np.ndarray:
        out = np.zeros(self.dim, dtype=complex)
        for part in self.parts:
            out[part[0].idx] = self._block_state(part, t)
        return out

    def local_state(self, t: float) -> np.ndarray:
        """State restricted to ``self.idx``."""
        if len(self.parts) == 1:
            return self._block_state(self.parts[0], t)
        return np.concatenate([self._block_state(part, t) for part in self.parts])


class RK4Propagator:
    """Fixed-step RK4 on the unnormalized state, renormalized every step."""

    method = "rk4"

    def __init__(self, ops: OperatorSet, step: float | None = None):
        self.heff = effective_hamiltonian(ops)
        decay = (1j * 2 * (self.heff - ops.h_coherent)).tocsr()
        bound = max(sp.linalg.norm(decay, 1), sp.linalg.norm(ops.h_coherent, 1), 1e-300)
        self.step = 0.01 / bound if step is None else step

    def rhs(self, psi):
        return -1j * (self.heff @ psi)

    def advance(self, psi, h):
        k1 = self.rhs(psi)
        k2 = self.rhs(psi + 0.5 * h * k1)
        k3 = self.rhs(psi + 0.5 * h * k2)
        k4 = self.rhs(psi + h * k3)
        return psi + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)

    def segment(self, psi: np.ndarray):
        return _RK4Segment(self, psi)


class _RK4Segment:
    """Lazily stepped grid of normalized states with accumulated log-norms."""

    def __init__(self, prop: RK4Propagator, psi: np.ndarray):
        self.prop = prop
        n2 = np.vdot(psi, psi).real
        self.states = [psi / math.sqrt(n2)]
        self.lognorm = [math.log(n2)]

    def _grid(self, k):
        while len(self.states) <= k:
            nxt = self.prop.advance(self.states[-1], self.prop.step)
            n2 = np.vdot(nxt, nxt).real
            if n2 > 1.0 + NORM_DRIFT_TOLERANCE:
                raise IntegratorInstabilityError(
                    f"squared norm grew by {n2 - 1.0:.3e} in one RK4 step of size {self.prop.step:.3e}"
                )
            self.states.append(nxt / math.sqrt(n2))
            self.lognorm.append(self.lognorm[-1] + math.log(n2))
        return self.states[k], self.lognorm[k]

    def _split(self, t):
        h = self.prop.step
        k = int(t // h)
        return k, t - k * h

    def state(self, t):
        k, rem = self._split(t)
        psi, ln = self._grid(k)
        if rem > 0:
            psi = self.prop.advance(psi, rem)
        return psi * math.exp(0.5 * ln)

    def norm2(self, t):
        v = self.state(t)
        return float(np.vdot(v, v).real)


def make_propagator(ops: OperatorSet, method: str = "spectral", **kw):
    if method == "spectral":
        return SpectralPropagator(ops)
    if method == "rk4":
        return RK4Propagator(ops, **kw)
    raise ConfigError(f"unknown propagator {method!r}")


# --- single trajectory ----------------------------------------------------------------


class _ChannelWeights:
    """Evaluates ``||L_k psi||**2`` for all channels.

    Channels whose ``L_k^dag L_k`` is diagonal are handled by one dense
    product with ``|psi|**2``. Column slices restricted to the support of
    the state (a union of ``H_eff`` blocks) are cached per support.
    """

    def __init__(self, channels):
        diag_rows, self.diag_pos = [], []
        self.other = []
        for k, L in enumerate(channels):
            m = (L.conj().T @ L).tocsr()
            off = m - sp.diags(m.diagonal())
            if off.count_nonzero() == 0:
                diag_rows.append(m.diagonal().real)
                self.diag_pos.append(k)
            else:
                self.other.append(k)
        self.channels = [sp.csc_matrix(L) for L in channels]
        self.diag = np.array(diag_rows) if diag_rows else np.zeros((0, channels[0].shape[1]))
        self.n = len(channels)
        self._cache = {}

    def restrict(self, key, idx):
        hit = self._cache.get(key)
        if hit is None:
            hit = (
                idx,
                np.ascontiguousarray(self.diag[:, idx]),
                [self.channels[k][:, idx].tocsr() for k in range(self.n)],
            )
            self._cache[key] = hit
        return hit

    def weights(self, restricted, psi_sub):
        _, diag, cols = restricted
        out = np.empty(self.n)
        out[self.diag_pos] = diag @ (psi_sub.real**2 + psi_sub.imag**2)
        for k in self.other:
            v = cols[k] @ psi_sub
            out[k] = np.vdot(v, v).real
        return out

    def __call__(self, psi):
        idx = np.flatnonzero(psi)
        return self.weights(self.restrict(("support", *idx.tolist()), idx), psi[idx])


@dataclass
class TrajectoryOutput:
    record: JumpRecord
    final_state: StateVector
    sample_times: np.ndarray
    samples: dict = field(default_factory=dict)
    max_top_fock: float = 0.0


def _find_jump(segment, r: float, t_max: float, rate0: float) -> float | None:
    if segment.norm2(t_max) > r:
        return None
    f = lambda t: segment.norm2(t) - r  # noqa: E731
    lo, hi = 0.0, t_max
    if rate0 > 0:
        guess = min(-math.log(r) / rate0, t_max)
        while guess < t_max:
            if f(guess) <= 0:
                hi = guess
                break
            lo = guess
            guess = min(2.0 * guess, t_max)
    if f(hi) == 0:
        return hi
    return brentq(f, lo, hi, xtol=1e-300, rtol=JUMP_TIME_RTOL, maxiter=500)


def simulate_trajectory(
    ops: OperatorSet,
    init: StateVector,
    duration: float,
    seed: int,
    *,
    propagator=None,
    observables: dict | None = None,
    sample_stride: float | None = None,
    burn_in: float = 0.0,
    cutoff_tolerance: float = CUTOFF_TOLERANCE,
) -> TrajectoryOutput:
    """One quantum-jump trajectory, optionally sampling observables.

    Samples are taken on the absolute grid ``t = k * sample_stride`` and are
    expectation values in the normalized state.
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    psi = np.array(init.amplitudes, dtype=complex)
    if psi.size != ops.dimension:
        raise ValueError("initial state dimension does not match the operator set")
    if abs(np.vdot(psi, psi).real - 1.0) > 1e-10:
        raise ValueError("initial state must be normalized")
    prop = propagator if propagator is not None else SpectralPropagator(ops)
    rng = make_rng(seed)
    labels = ops.labels
    channels = [L for _, L in ops.jump_channels]
    channel_weights = getattr(prop, "channel_weights", None) or _ChannelWeights(channels)
    top = ops.top_fock_indices()

    t = float(init.time)
    t_end = t + duration
    observables = observables or {}
    if observables and not sample_stride:
        raise ValueError("sample_stride is required when observables are requested")
    if observables:
        n_samples = int(math.floor(t_end / sample_stride + 1e-12)) + 1
        first = int(math.ceil(t / sample_stride - 1e-12))
        sample_times = np.arange(first, n_samples) * sample_stride
    else:
        sample_times = np.empty(0)
    samples = {name: np.empty(sample_times.size) for name in observables}
    next_sample = 0

    jump_times: list[float] = []
    jump_labels: list[str] = []
    max_top = 0.0

    def check_top(v):
        nonlocal max_top
        if top is None:
            return
        pop = float(np.sum(np.abs(v[top]) ** 2) / np.vdot(v, v).real)
        max_top = max(max_top, pop)
        if pop > cutoff_tolerance:
            raise PhotonCutoffError(
                f"top Fock state population {pop:.3e} exceeds {cutoff_tolerance:.1e} at t={t:.6g}; "
                "increase photon_cutoff"
            )

    check_top(psi)
    while True:
        r = 0.0
        while r <= 0.0 or r >= 1.0:
            r = rng.random()
        segment = prop.segment(psi)
        rate0 = getattr(segment, "initial_decay_rate", lambda: None)()
        if rate0 is None:
            rate0 = float(channel_weights(psi).sum())
        dt = _find_jump(segment, r, t_end - t, rate0)
        seg_end = t_end if dt is None else t + dt
        while next_sample < sample_times.size and (
            sample_times[next_sample] < seg_end or (dt is None and sample_times[next_sample] <= seg_end)
        ):
            v = segment.state(sample_times[next_sample] - t)
            n2 = np.vdot(v, v).real
            for name, op in observables.items():
                samples[name][next_sample] = np.vdot(v, op @ v).real / n2
            check_top(v)
            next_sample += 1
        if dt is None:
            v = segment.state(t_end - t)
            psi = v / math.sqrt(np.vdot(v, v).real)
            t = t_end
            break
        t_jump = t + dt
        if jump_times and t_jump <= jump_times[-1]:
            t_jump = math.nextafter(jump_times[-1], math.inf)
        if isinstance(segment, _SpectralSegment):
            restricted = channel_weights.restrict(segment.key, segment.idx)
            v_sub = segment.local_state(dt)
        else:
            v = segment.state(dt)
            nz = np.flatnonzero(v)
            restricted = channel_weights.restrict(("support", *nz.tolist()), nz)
            v_sub = v[nz]
        if top is not None:
            v = np.zeros(ops.dimension, dtype=complex)
            v[restricted[0]] = v_sub
            check_top(v)
        weights = channel_weights.weights(restricted, v_sub)
        total = weights.sum()
        if not total > 0:
            raise InternalConsistencyError(f"zero total jump weight at t={t_jump:.17g}")
        k = int(np.searchsorted(np.cumsum(weights), rng.random() * total, side="right"))
        k = min(k, len(channels) - 1)
        while weights[k] <= 0:
            k -= 1
        jumped = restricted[2][k] @ v_sub
        psi = jumped / math.sqrt(np.vdot(jumped, jumped).real)
        jump_times.append(t_jump)
        jump_labels.append(labels[k])
        t = t_jump

    record = JumpRecord(
        times=np.array(jump_times),
        channels=tuple(jump_labels),
        total_time=t_end,
        seed=int(seed),
        model_tag=ops.model_tag,
        burn_in=float(burn_in),
        params=ops.params.to_dict(),
    )
    return TrajectoryOutput(record, StateVector(psi, t_end), sample_times, samples, max_top)


def run_trajectory(ops: OperatorSet, init: StateVector, duration: float, seed: int, **kw):
    """Return ``(JumpRecord, final StateVector)`` for one trajectory."""
    out = simulate_trajectory(ops, init, duration, seed, **kw)
    return out.record, out.final_state


# --- observables ------------------------------------------------------------------


def standard_observables(ops: OperatorSet, names=None) -> dict:
    """Permutation-symmetrized moments used throughout the package.

    ``s``, ``p``, ``z2`` are the averages of ``sigma_z^(i)``,
    ``sigma_+^(i) sigma_-^(j)`` and ``sigma_z^(i) sigma_z^(j)`` over atoms
    (pairs ``i != j``); for a permutation-symmetric ensemble they equal the
    atom-1/atom-2 moments.
    """
    n = ops.n_atoms
    jpjm = (ops.j_plus @ ops.j_minus).tocsr()
    out = {
        "s": (2.0 / n) * ops.j_z,
        "jpjm": jpjm,
        "jppjmm": (ops.j_plus @ jpjm @ ops.j_minus).tocsr(),
    }
    if n >= 2:
        eye = sp.identity(ops.dimension, dtype=complex, format="csr")
        out["p"] = ((jpjm - (0.5 * n) * eye - ops.j_z) / (n * (n - 1))).tocsr()
        out["z2"] = ((4.0 * (ops.j_z @ ops.j_z) - n * eye) / (n * (n - 1))).tocsr()
    if ops.annihilate is not None:
        a = ops.annihilate
        out["n"] = (a.conj().T @ a).tocsr()
        out["nn"] = (a.conj().T @ a.conj().T @ a @ a).tocsr()
    for j in range(n):
        out[f"sz-{j + 1}"] = ops.sigma_z[j]
    if names is None:
        names = [k for k in out if not k.startswith("sz-")]
    missing = [k for k in names if k not in out]
    if missing:
        raise ConfigError(f"unknown observables {missing}")
    return {k: out[k] for k in names}


# --- ensembles -----------------------------------------------------------------------


@dataclass
class EnsembleConfig:
    n_trajectories: int
    duration: float
    burn_in: float | None = None
    master_seed: int = 0
    sample_stride: float | None = None
    observables: tuple | None = None
    workers: int = 1
    method: str = "spectral"
    cutoff_tolerance: float = CUTOFF_TOLERANCE


@dataclass
class EnsembleResult:
    records: list
    master_seed: int
    n_trajectories: int
    burn_in: float
    sample_times: np.ndarray = field(default_factory=lambda: np.empty(0))
    observable_traces: dict = field(default_factory=dict)
    max_top_fock: float = 0.0

    def trajectory_means(self, name: str) -> np.ndarray:
        """Post burn-in time average of ``name`` for each trajectory."""
        mask = self.sample_times >= self.burn_in
        if not mask.any():
            raise ValueError("no samples after burn-in")
        return self.observable_traces[name][:, mask].mean(axis=1)

    def moment(self, name: str) -> tuple[float, float]:
        """Ensemble-and-time average with its standard error over trajectories."""
        per = self.trajectory_means(name)
        se = per.std(ddof=1) / math.sqrt(per.size) if per.size > 1 else math.nan
        return float(per.mean()), float(se)

    def event_rate(self, label: str = "cavity") -> tuple[float, float]:
        """Mean post burn-in rate of ``label`` events and its standard error."""
        rates = np.array([r.count(label) / (r.total_time - r.burn_in) for r in self.records])
        se = rates.std(ddof=1) / math.sqrt(rates.size) if rates.size > 1 else math.nan
        return float(rates.mean()), float(se)


_WORKER: dict = {}


def _worker_init(ops, method, config, observables):
    _WORKER.clear()
    _WORKER.update(ops=ops, prop=make_propagator(ops, method), config=config, observables=observables)


def _worker_run(index: int):
    ops, config = _WORKER["ops"], _WORKER["config"]
    try:
        out = simulate_trajectory(
            ops,
            ground_state(ops) if config["init"] is None else config["init"],
            config["duration"],
            derive_seed(config["master_seed"], index),
            propagator=_WORKER["prop"],
            observables=_WORKER["observables"],
            sample_stride=config["sample_stride"],
            burn_in=config["burn_in"],
            cutoff_tolerance=config["cutoff_tolerance"],
        )
    except SuperradError as exc:
        raise TrajectoryError(index, exc) from exc
    except (ValueError, ArithmeticError) as exc:
        raise TrajectoryError(index, exc) from exc
    return index, out


def run_ensemble(ops: OperatorSet, config: EnsembleConfig, init: StateVector | None = None) -> EnsembleResult:
    """Independent trajectories merged in trajectory-index order.

    Trajectory ``i`` uses seed ``derive_seed(master_seed, i)``, so the result
    does not depend on ``workers``.
    """
    if config.n_trajectories < 1:
        raise ConfigError("n_trajectories must be at least 1")
    burn_in = 10.0 / gamma_c(ops.params) if config.burn_in is None else config.burn_in
    if not burn_in < config.duration:
        raise ConfigError("burn_in must be shorter than the trajectory duration")
    observables = {}
    if config.observables:
        observables = standard_observables(ops, list(config.observables))
    payload = dict(
        init=init,
        duration=config.duration,
        master_seed=config.master_seed,
        sample_stride=config.sample_stride,
        burn_in=burn_in,
        cutoff_tolerance=config.cutoff_tolerance,
    )
    workers = max(1, min(config.workers, config.n_trajectories))
    indices = range(config.n_trajectories)
    if workers == 1:
        _worker_init(ops, config.method, payload, observables)
        outputs = [_worker_run(i) for i in indices]
    else:
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_worker_init, initargs=(ops, config.method, payload, observables)
        ) as pool:
            outputs = list(pool.map(_worker_run, indices, chunksize=max(1, config.n_trajectories // (4 * workers))))
    outputs.sort(key=lambda item: item[0])
    outs = [o for _, o in outputs]
    traces = {}
    sample_times = outs[0].sample_times if outs else np.empty(0)
    for name in observables:
        traces[name] = np.vstack([o.samples[name] for o in outs])
    return EnsembleResult(
        records=[o.record for o in outs],
        master_seed=config.master_seed,
        n_trajectories=config.n_trajectories,
        burn_in=burn_in,
        sample_times=sample_times,
        observable_traces=traces,
        max_top_fock=max(o.max_top_fock for o in outs),
    )
