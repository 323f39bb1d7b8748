"""System parameters, operator construction and regime classification.

Basis conventions (fixed, relied on by serialization and the dense oracle):

* Single atom: index 0 is the ground state ``|g>``, index 1 the excited
  state ``|e>``. ``sigma_z = |e><e| - |g><g|``, ``sigma_- = |g><e|``.
* Atomic register: configuration index ``c`` in ``[0, 2**N)``; bit ``j`` of
  ``c`` (least significant bit is ``j = 0``) is the state of atom ``j + 1``.
  So ``c = 0`` is all-ground and ``c = 2**N - 1`` is all-excited.
* Full model: ``index = c * (photon_cutoff + 1) + n`` with ``n`` the Fock
  index, i.e. the ordering atoms (x) field with the field index fastest.

Units: hbar = 1. The library takes absolute rates; the CLI expresses them in
units of the collective decay rate ``g**2 / kappa``.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import CapacityError, ConfigError

PARAMS_SCHEMA_VERSION = 1
DEFAULT_MAX_DIMENSION = 1 << 16


@dataclass(frozen=True)
class SystemParams:
    """Physical constants of the atom-cavity model.

    ``gamma_free`` never enters the dynamics; it is only used by
    :func:`validity_report`.
    """

    n_atoms: int
    coupling: float
    kappa: float
    pump: float
    gamma_free: float = 0.0
    detuning: float = 0.0
    photon_cutoff: int = 0

    def __post_init__(self):
        if not isinstance(self.n_atoms, (int, np.integer)) or self.n_atoms < 1:
            raise ConfigError(f"n_atoms must be a positive integer, got {self.n_atoms!r}")
        for name in ("coupling", "kappa", "pump", "gamma_free"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ConfigError(f"{name} must be a finite non-negative rate, got {value!r}")
        if not math.isfinite(self.detuning):
            raise ConfigError("detuning must be finite")
        if self.photon_cutoff < 0:
            raise ConfigError("photon_cutoff must be non-negative")

    @classmethod
    def from_gamma_c(cls, n_atoms: int, gamma_c: float, pump: float, kappa: float = 1.0, **kw) -> SystemParams:
        """Choose ``coupling`` so that ``coupling**2 / kappa == gamma_c``."""
        return cls(n_atoms=n_atoms, coupling=math.sqrt(gamma_c * kappa), kappa=kappa, pump=pump, **kw)

    def replace(self, **changes) -> SystemParams:
        return SystemParams(**{**asdict(self), **changes})

    def to_dict(self) -> dict:
        return {"schema_version": PARAMS_SCHEMA_VERSION, **asdict(self)}

    @classmethod
    def from_dict(cls, data: dict) -> SystemParams:
        data = dict(data)
        version = data.pop("schema_version", None)
        if version is None:
            raise ConfigError("parameter file lacks the mandatory 'schema_version' field")
        if version != PARAMS_SCHEMA_VERSION:
            raise ConfigError(f"unsupported parameter schema_version {version!r}")
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown parameter keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def load_params(path: str | Path) -> SystemParams:
    """Read a JSON key/value parameter file (see :meth:`SystemParams.to_dict`)."""
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read parameter file {path}: {exc}") from exc
    return SystemParams.from_dict(data)


def save_params(params: SystemParams, path: str | Path) -> None:
    Path(path).write_text(json.dumps(params.to_dict(), indent=2, sort_keys=True) + "\n")


def gamma_c(params: SystemParams) -> float:
    """Cavity-mediated single-atom decay rate ``g**2 / kappa``."""
    if params.kappa == 0:
        raise ZeroDivisionError(
            "kappa = 0: the collective decay rate g^2/kappa needs a bad-cavity (kappa > 0) model"
        )
    return params.coupling**2 / params.kappa


@dataclass(frozen=True)
class ValidityReport:
    cooperativity: float
    n_cooperativity: float
    bad_cavity_ratio: float
    cooperativity_ok: bool
    bad_cavity_ok: bool
    margin: float
    free_space_neglected: bool
    note: str = ""


def validity_report(params: SystemParams, margin: float = 10.0) -> ValidityReport:
    """Check ``N*C >> 1`` and ``kappa >> N*C*gamma`` against ``margin``.

    ``C*gamma`` equals ``g**2/kappa`` identically, so the bad-cavity ratio
    is evaluated as ``kappa / (N * gamma_c)`` and stays finite when the
    free-space rate is zero.
    """
    n = params.n_atoms
    g2 = params.coupling**2
    neglected = params.gamma_free == 0
    if neglected:
        coop = math.inf
    else:
        coop = g2 / (params.kappa * params.gamma_free) if params.kappa > 0 else math.inf
    n_coop = n * coop
    collective = n * g2 / params.kappa if params.kappa > 0 else math.inf
    ratio = params.kappa / collective if collective > 0 else math.inf
    return ValidityReport(
        cooperativity=coop,
        n_cooperativity=n_coop,
        bad_cavity_ratio=ratio,
        cooperativity_ok=n_coop >= margin,
        bad_cavity_ok=ratio >= margin,
        margin=margin,
        free_space_neglected=neglected,
        note="free-space decay neglected" if neglected else "",
    )


class Regime(enum.Enum):
    SUBRADIANT = "subradiant"
    LOWER_THRESHOLD = "lower-threshold"
    SUPERRADIANT = "superradiant"
    UPPER_THRESHOLD = "upper-threshold"
    STRONG_PUMPING = "strong-pumping"

    @property
    def is_threshold(self) -> bool:
        return self in (Regime.LOWER_THRESHOLD, Regime.UPPER_THRESHOLD)


def classify_regime(w: float, params: SystemParams) -> Regime:
    return classify_pump(w, params.n_atoms, gamma_c(params))


def classify_pump(w: float, n_atoms: int, gc: float) -> Regime:
    if gc <= 0:
        raise ConfigError("regime classification needs a positive collective decay rate")
    upper = n_atoms * gc
    if w < gc:
        return Regime.SUBRADIANT
    if w == gc:
        return Regime.LOWER_THRESHOLD
    if w < upper:
        return Regime.SUPERRADIANT
    if w == upper:
        return Regime.UPPER_THRESHOLD
    return Regime.STRONG_PUMPING


@dataclass(frozen=True, eq=False)
class OperatorSet:
    """Sparse operators of one model over a fixed basis; immutable.

    ``jump_channels`` holds ``(label, L_k)`` pairs with the rate already
    folded in, so the dissipator is ``sum_k D[L_k]``.
    """

    model_tag: str
    params: SystemParams
    dimension: int
    n_atoms: int
    photon_cutoff: int | None
    annihilate: sp.csr_matrix | None
    j_plus: sp.csr_matrix
    j_minus: sp.csr_matrix
    j_z: sp.csr_matrix
    sigma_plus: tuple
    sigma_minus: tuple
    sigma_z: tuple
    h_coherent: sp.csr_matrix
    jump_channels: tuple
    extras: dict = field(default_factory=dict)

    @property
    def labels(self) -> list[str]:
        return [label for label, _ in self.jump_channels]

    def channel(self, label: str) -> sp.csr_matrix:
        for name, op in self.jump_channels:
            if name == label:
                return op
        raise KeyError(label)

    @property
    def number(self) -> sp.csr_matrix | None:
        if self.annihilate is None:
            return None
        return _freeze(self.annihilate.conj().T @ self.annihilate)

    def top_fock_indices(self) -> np.ndarray | None:
        if self.photon_cutoff is None:
            return None
        return np.arange(self.photon_cutoff, self.dimension, self.photon_cutoff + 1)


def _freeze(m) -> sp.csr_matrix:
    m = sp.csr_matrix(m, dtype=complex, copy=True)
    m.sum_duplicates()
    m.eliminate_zeros()
    m.sort_indices()
    for arr in (m.data, m.indices, m.indptr):
        arr.flags.writeable = False
    return m


def _atomic_lowering(n_atoms: int, atom: int) -> sp.csr_matrix:
    """sigma_- of ``atom`` (0-based) on the 2**N register, from bit arithmetic."""
    dim = 1 << n_atoms
    cols = np.arange(dim)
    mask = (cols >> atom) & 1 == 1
    src = cols[mask]
    dst = src ^ (1 << atom)
    return sp.csr_matrix((np.ones(src.size, dtype=complex), (dst, src)), shape=(dim, dim))


def _atomic_z(n_atoms: int, atom: int) -> sp.csr_matrix:
    idx = np.arange(1 << n_atoms)
    return sp.diags(np.where((idx >> atom) & 1 == 1, 1.0, -1.0).astype(complex), format="csr")


def _check_capacity(dim: int, max_dimension: int) -> None:
    if dim > max_dimension:
        raise CapacityError(f"model dimension {dim} exceeds the configured bound {max_dimension}")


def _atomic_operators(n_atoms: int, embed):
    sm = [embed(_atomic_lowering(n_atoms, j)) for j in range(n_atoms)]
    sz = [embed(_atomic_z(n_atoms, j)) for j in range(n_atoms)]
    sp_ = [m.conj().T.tocsr() for m in sm]
    j_minus = sum(sm[1:], sm[0])
    j_plus = j_minus.conj().T.tocsr()
    j_z = 0.5 * sum(sz[1:], sz[0])
    return (
        tuple(_freeze(m) for m in sp_),
        tuple(_freeze(m) for m in sm),
        tuple(_freeze(m) for m in sz),
        _freeze(j_plus),
        _freeze(j_minus),
        _freeze(j_z),
    )


def build_full_model(params: SystemParams, max_dimension: int = DEFAULT_MAX_DIMENSION) -> OperatorSet:
    """Atoms plus a truncated cavity mode, rotating at the atomic frequency.

    ``H = detuning * a^dag a + (g/2)(a^dag J_- + J_+ a)``; channels
    ``"cavity"`` (sqrt(kappa) a) and ``"pump-j"`` (sqrt(w) sigma_+^(j)).
    """
    if params.kappa <= 0:
        raise ConfigError("the full model needs kappa > 0")
    if params.photon_cutoff < 1:
        raise ConfigError("the full model needs photon_cutoff >= 1")
    n = params.n_atoms
    n_field = params.photon_cutoff + 1
    if n > 40:
        raise CapacityError(f"{n} atoms is beyond any dense register")
    dim = (1 << n) * n_field
    _check_capacity(dim, max_dimension)

    eye_field = sp.identity(n_field, dtype=complex, format="csr")
    eye_atoms = sp.identity(1 << n, dtype=complex, format="csr")
    a_field = sp.diags(np.sqrt(np.arange(1, n_field)).astype(complex), 1, format="csr")

    def embed(m):
        return sp.kron(m, eye_field, format="csr")

    s_plus, s_minus, s_z, j_plus, j_minus, j_z = _atomic_operators(n, embed)
    a = _freeze(sp.kron(eye_atoms, a_field, format="csr"))
    ad = a.conj().T
    h = params.detuning * (ad @ a) + 0.5 * params.coupling * (ad @ j_minus + j_plus @ a)
    channels = [("cavity", _freeze(math.sqrt(params.kappa) * a))]
    root_w = math.sqrt(params.pump)
    channels += [(f"pump-{j + 1}", _freeze(root_w * s_plus[j])) for j in range(n)]
    return OperatorSet(
        model_tag="full",
        params=params,
        dimension=dim,
        n_atoms=n,
        photon_cutoff=params.photon_cutoff,
        annihilate=a,
        j_plus=j_plus,
        j_minus=j_minus,
        j_z=j_z,
        sigma_plus=s_plus,
        sigma_minus=s_minus,
        sigma_z=s_z,
        h_coherent=_freeze(h),
        jump_channels=tuple(channels),
    )


def build_adiabatic_model(params: SystemParams, max_dimension: int = DEFAULT_MAX_DIMENSION) -> OperatorSet:
    """Atoms only, cavity eliminated: collective decay ``sqrt(gamma_c) J_-``.

    The coherent part vanishes in the resonant rotating frame.
    """
    n = params.n_atoms
    if n > 40:
        raise CapacityError(f"{n} atoms is beyond any dense register")
    dim = 1 << n
    _check_capacity(dim, max_dimension)
    gc = gamma_c(params)
    s_plus, s_minus, s_z, j_plus, j_minus, j_z = _atomic_operators(n, lambda m: m.tocsr())
    channels = [("cavity", _freeze(math.sqrt(gc) * j_minus))]
    root_w = math.sqrt(params.pump)
    channels += [(f"pump-{j + 1}", _freeze(root_w * s_plus[j])) for j in range(n)]
    return OperatorSet(
        model_tag="adiabatic",
        params=params,
        dimension=dim,
        n_atoms=n,
        photon_cutoff=None,
        annihilate=None,
        j_plus=j_plus,
        j_minus=j_minus,
        j_z=j_z,
        sigma_plus=s_plus,
        sigma_minus=s_minus,
        sigma_z=s_z,
        h_coherent=_freeze(sp.csr_matrix((dim, dim), dtype=complex)),
        jump_channels=tuple(channels),
    )


def build_model(params: SystemParams, model: str, max_dimension: int = DEFAULT_MAX_DIMENSION) -> OperatorSet:
    if model == "full":
        return build_full_model(params, max_dimension)
    if model == "adiabatic":
        return build_adiabatic_model(params, max_dimension)
    raise ConfigError(f"unknown model {model!r}; expected 'full' or 'adiabatic'")


def basis_index(ops: OperatorSet, excited=(), photons: int = 0) -> int:
    """Basis index of the product state with the given (1-based) atoms excited."""
    config = 0
    for atom in excited:
        if not 1 <= atom <= ops.n_atoms:
            raise ValueError(f"atom index {atom} out of range 1..{ops.n_atoms}")
        config |= 1 << (atom - 1)
    if ops.photon_cutoff is None:
        if photons:
            raise ValueError("the adiabatic model has no field")
        return config
    if not 0 <= photons <= ops.photon_cutoff:
        raise ValueError(f"photon number {photons} outside 0..{ops.photon_cutoff}")
    return config * (ops.photon_cutoff + 1) + photons
