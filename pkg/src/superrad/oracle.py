"""Exact dense-matrix reference for small systems.

Vectorization is column stacking: ``vec(rho)[i + D*j] = rho[i, j]``, so
``vec(A rho B) = (B^T kron A) vec(rho)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg as la

from .errors import CapacityError, DegenerateSteadyStateError, NumericalError
from .model import OperatorSet

DEFAULT_MAX_LIOUVILLE_DIM = 4096
MOMENT_COLUMNS = ("N", "w_over_gc", "s", "p", "z2", "triple", "JpJm", "JppJmm", "g2_zero")


def vec(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho).reshape(-1, order="F")


def unvec(v: np.ndarray, dim: int) -> np.ndarray:
    return np.asarray(v).reshape((dim, dim), order="F")


def build_liouvillian(ops: OperatorSet, max_dim: int = DEFAULT_MAX_LIOUVILLE_DIM) -> np.ndarray:
    """Dense superoperator of ``-i[H, rho] + sum_k D[L_k] rho``."""
    d = ops.dimension
    if d * d > max_dim:
        raise CapacityError(f"Liouville dimension {d * d} exceeds the bound {max_dim}")
    eye = np.eye(d)
    h = ops.h_coherent.toarray()
    sup = -1j * (np.kron(eye, h) - np.kron(h.T, eye))
    for _, op in ops.jump_channels:
        L = op.toarray()
        ldl = L.conj().T @ L
        sup += np.kron(L.conj(), L) - 0.5 * np.kron(eye, ldl) - 0.5 * np.kron(ldl.T, eye)
    return sup


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    entries: np.ndarray
    model_tag: str
    residual: float = 0.0
    liouvillian_norm: float = 0.0

    @property
    def dimension(self) -> int:
        return self.entries.shape[0]

    def expect(self, op) -> complex:
        m = op.toarray() if hasattr(op, "toarray") else np.asarray(op)
        return complex(np.trace(self.entries @ m))


def steady_state(liouvillian: np.ndarray, model_tag: str = "", null_tol: float = 1e-9) -> DensityMatrix:
    """Unique trace-one null vector of the Liouvillian.

    The null space is read off the singular value decomposition; singular
    values below ``null_tol * sigma_max`` count toward its multiplicity.
    """
    n = liouvillian.shape[0]
    d = math.isqrt(n)
    _, sv, vh = la.svd(liouvillian)
    norm = sv[0] if sv.size else 0.0
    null = int(np.count_nonzero(sv <= null_tol * max(norm, 1e-300)))
    if null != 1:
        raise DegenerateSteadyStateError(
            f"steady state is not unique: null-space multiplicity {null}", multiplicity=null
        )
    rho = unvec(vh[-1].conj(), d)
    tr = np.trace(rho)
    if abs(tr) < 1e-12:
        raise NumericalError("null vector has vanishing trace")
    rho = rho / tr
    rho = 0.5 * (rho + rho.conj().T)
    residual = float(np.linalg.norm(liouvillian @ vec(rho)))
    return DensityMatrix(rho, model_tag, residual, float(norm))


def solve_steady_state(ops: OperatorSet, **kw) -> DensityMatrix:
    return steady_state(build_liouvillian(ops, **kw), ops.model_tag)


def _pair(ops: OperatorSet, i: int, j: int):
    return ops.sigma_plus[i] @ ops.sigma_minus[j]


def exact_moments(rho: DensityMatrix, ops: OperatorSet) -> dict:
    """Exact expectation values of the moments used by the approximations.

    Keys: ``s``, ``p``, ``z2``, ``triple`` (N >= 3), ``quad`` (N >= 4),
    ``JpJm``, ``JppJmm``, ``g2_zero`` (nan when ``JpJm`` vanishes), and for
    the full model ``n``, ``nn``, ``g2_zero_field``.
    """
    if rho.dimension != ops.dimension:
        raise ValueError("density matrix and operator set have different dimensions")
    n = ops.n_atoms
    ex = lambda op: rho.expect(op).real  # noqa: E731
    out = {"s": ex(ops.sigma_z[0])}
    if n >= 2:
        out["p"] = ex(_pair(ops, 0, 1))
        out["z2"] = ex(ops.sigma_z[0] @ ops.sigma_z[1])
    if n >= 3:
        out["triple"] = ex(ops.sigma_z[0] @ _pair(ops, 1, 2))
    if n >= 4:
        out["quad"] = ex(ops.sigma_plus[0] @ ops.sigma_plus[1] @ ops.sigma_minus[2] @ ops.sigma_minus[3])
    jpjm = ops.j_plus @ ops.j_minus
    out["JpJm"] = ex(jpjm)
    out["JppJmm"] = ex(ops.j_plus @ jpjm @ ops.j_minus)
    out["g2_zero"] = out["JppJmm"] / out["JpJm"] ** 2 if out["JpJm"] > 1e-14 else math.nan
    if ops.annihilate is not None:
        a = ops.annihilate
        ad = a.conj().T
        out["n"] = ex(ad @ a)
        out["nn"] = ex(ad @ ad @ a @ a)
        out["g2_zero_field"] = out["nn"] / out["n"] ** 2 if out["n"] > 1e-14 else math.nan
    return out


def numerator_expansion(m: dict, n_atoms: int) -> float:
    """``<J+J+J-J->`` assembled from exact one- to four-atom moments."""
    n = n_atoms
    triple = m.get("triple", 0.0)
    quad = m.get("quad", 0.0)
    return n * (n - 1) * (
        2.0 * (n - 2) * (m["p"] + triple) + (1.0 + 2.0 * m["s"] + m["z2"]) / 2.0 + (n - 2) * (n - 3) * quad
    )


def write_moment_table(path: str | Path, rows) -> None:
    """CSV ``N,w_over_gc,s,p,z2,triple,JpJm,JppJmm,g2_zero``; rows are dicts."""
    lines = [",".join(MOMENT_COLUMNS)]
    for row in rows:
        lines.append(",".join(repr(float(row.get(c, math.nan))) if c != "N" else str(int(row["N"])) for c in MOMENT_COLUMNS))
    Path(path).write_text("\n".join(lines) + "\n")
