"""Pair-correlation cumulant theory for the adiabatic (atoms-only) model.

State variables, all permutation symmetric:

* ``s  = <sigma_z^(1)>``
* ``p  = <sigma_+^(1) sigma_-^(2)>`` (real in steady state)
* ``z2 = <sigma_z^(1) sigma_z^(2)>``

Three-atom moments are closed with ``<sigma_z^(1) sigma_+^(2) sigma_-^(3)> ~ s p``.
Rates are absolute; ``gamma_c`` is the collective decay rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, UnsupportedSizeError

SWEEP_SCHEMA_VERSION = 1


def bare_inversion(w: float, gamma_c: float) -> float:
    """Single-atom inversion ``(w - gc)/(w + gc)`` of independent atoms."""
    return (w - gamma_c) / (w + gamma_c)


@dataclass(frozen=True)
class PairCorrelations:
    s: float
    p: float
    z2: float
    n_atoms: int
    w: float
    gamma_c: float
    below_threshold_flag: bool = False

    @property
    def d0(self) -> float:
        return bare_inversion(self.w, self.gamma_c)

    def as_array(self) -> np.ndarray:
        return np.array([self.s, self.p, self.z2])

    def is_physical(self, tol: float = 1e-12) -> bool:
        return abs(self.s) <= 1 + tol and abs(self.p) <= 1 + tol and abs(self.z2) <= 1 + tol


def _rhs(s, p, z2, n, w, gc):
    d0 = (w - gc) / (w + gc)
    tot = w + gc
    ds = -tot * (s - d0) - 2.0 * gc * (n - 1) * p
    dp = -tot * p + 0.5 * gc * (z2 + s) + gc * (n - 2) * s * p
    dz = -2.0 * tot * (z2 - d0 * s) + 4.0 * gc * (p - (n - 2) * s * p)
    return ds, dp, dz


def cumulant_rhs(state: PairCorrelations) -> tuple[float, float, float]:
    """Time derivatives ``(ds/dt, dp/dt, dz2/dt)`` of the closed equations."""
    return _rhs(state.s, state.p, state.z2, state.n_atoms, state.w, state.gamma_c)


def ground_correlations(n_atoms: int, w: float, gamma_c: float) -> PairCorrelations:
    """All atoms in ``|g>``: ``s = -1``, ``p = 0``, ``z2 = 1``."""
    return PairCorrelations(-1.0, 0.0, 1.0, n_atoms, w, gamma_c, w < gamma_c)


def _rk4(y, h, n, w, gc):
    s, p, z = y
    k1 = _rhs(s, p, z, n, w, gc)
    k2 = _rhs(s + 0.5 * h * k1[0], p + 0.5 * h * k1[1], z + 0.5 * h * k1[2], n, w, gc)
    k3 = _rhs(s + 0.5 * h * k2[0], p + 0.5 * h * k2[1], z + 0.5 * h * k2[2], n, w, gc)
    k4 = _rhs(s + h * k3[0], p + h * k3[1], z + h * k3[2], n, w, gc)
    return (
        s + h / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]),
        p + h / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]),
        z + h / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2]),
    )


def integrate_to_steady_state(
    n_atoms: int,
    w: float,
    gamma_c: float,
    init: PairCorrelations | None = None,
    tolerance: float = 1e-12,
    step_tolerance: float = 1e-10,
    max_steps: int = 2_000_000,
) -> PairCorrelations:
    """RK4 time integration until ``|rhs| < tolerance * (w + gamma_c)``.

    The step size adapts by step doubling: a step is accepted when one full
    step and two half steps agree to ``step_tolerance``, otherwise it is
    halved; accepted steps grow the next step by 1.5x up to a stability cap.
    """
    if not tolerance > 0:
        raise ValueError("tolerance must be positive")
    n, gc = n_atoms, gamma_c
    y = (-1.0, 0.0, 1.0) if init is None else (init.s, init.p, init.z2)
    scale = w + gc
    h_max = 1.0 / (2.0 * scale + 2.0 * gc * max(n - 1, 1))
    h = 0.1 * h_max
    target = tolerance * scale
    for _ in range(max_steps):
        d = _rhs(*y, n, w, gc)
        if math.sqrt(d[0] ** 2 + d[1] ** 2 + d[2] ** 2) < target:
            return PairCorrelations(*y, n_atoms, w, gamma_c, w < gamma_c)
        full = _rk4(y, h, n, w, gc)
        half = _rk4(_rk4(y, 0.5 * h, n, w, gc), 0.5 * h, n, w, gc)
        err = max(abs(a - b) for a, b in zip(full, half))
        if err > step_tolerance:
            h *= 0.5
            continue
        y = half
        h = min(1.5 * h, h_max)
    last = PairCorrelations(*y, n_atoms, w, gamma_c, w < gamma_c)
    raise ConvergenceError(f"cumulant integration did not converge in {max_steps} steps", last)


def closed_form_steady_state(n_atoms: int, w: float, gamma_c: float) -> PairCorrelations:
    """Algebraic steady state of the closed pair equations.

    ``p`` is the root of the steady-state quadratic that stays bounded for
    all pump rates; ``s`` and ``z2`` follow from the ``ds/dt = 0`` and
    ``dz2/dt = 0`` conditions.
    """
    n, gc = n_atoms, gamma_c
    if n < 3:
        raise UnsupportedSizeError(
            "the closed form needs N >= 3 (it divides by (N-1)(N-2)); use the dense oracle for N < 3"
        )
    if w == 0 or gc == 0:
        raise ZeroDivisionError("closed-form pair correlations need w > 0 and gamma_c > 0")
    d0 = bare_inversion(w, gc)
    tot = w + gc
    b = w * w + (2.0 - (n - 2) * d0) * w * gc + (n - 1) * (1.0 + d0) * gc * gc
    disc = 4.0 * d0 * (1.0 + d0) * (n - 1) * (n - 2) * w * gc**3 + b * b
    root = math.sqrt(disc)
    # b - root loses precision when the product term is small; use the
    # equivalent (b^2 - root^2)/(b + root) form.
    diff = -4.0 * d0 * (1.0 + d0) * (n - 1) * (n - 2) * w * gc**3 / (b + root) if b > 0 else b - root
    p = -tot / (4.0 * (n - 1) * (n - 2) * w * gc * gc) * diff
    s = d0 - 2.0 * gc * (n - 1) / tot * p
    z2 = d0 * d0 + 2.0 * gc / tot**2 * (tot * (1.0 - d0 * (2 * n - 3)) * p + 2.0 * (n - 1) * (n - 2) * gc * p * p)
    return PairCorrelations(s, p, z2, n, w, gc, w < gc)


def _mean_intensity(c: PairCorrelations) -> float:
    n = c.n_atoms
    return n * (c.s + 1.0) / 2.0 + n * (n - 1) * c.p


def g2_zero_semiclassical(corr: PairCorrelations, printed_diagonal: bool = False) -> float:
    """``<J+J+J-J-> / <J+J->^2`` with four-atom moments factorized as ``p**2``.

    The two-atom diagonal term is ``(1 + 2 s + z2)/2``, the exact value of
    ``sum over ordered pairs of <P_e^(1) P_e^(2)>`` per pair.
    ``printed_diagonal=True`` substitutes ``(1 + z2 + 2 s**2)/2`` for
    comparison plots. Below threshold the result is returned but is not
    reliable; check ``corr.below_threshold_flag``. Returns ``nan`` if the
    mean intensity vanishes.
    """
    n = corr.n_atoms
    s, p, z2 = corr.s, corr.p, corr.z2
    den = _mean_intensity(corr)
    if abs(den) < 1e-300:
        return math.nan
    diag = (1.0 + z2 + 2.0 * s * s) / 2.0 if printed_diagonal else (1.0 + 2.0 * s + z2) / 2.0
    num = n * (n - 1) * (2.0 * (n - 2) * (s + 1.0) * p + diag + (n - 2) * (n - 3) * p * p)
    return num / den**2


def thermal_g2(tau, w: float):
    """Thermal-light reference ``1 + exp(-tau w / pi)``."""
    if not w > 0:
        raise ValueError("w must be positive")
    return 1.0 + np.exp(-np.asarray(tau, dtype=float) * w / math.pi)


def thermal_g2_zero(n_atoms: int) -> float:
    """``2 (1 - 1/N)``: zero-delay value for N independent emitters."""
    return 2.0 * (1.0 - 1.0 / n_atoms)


@dataclass(frozen=True)
class SweepRow:
    w_over_gc: float
    s: float
    p: float
    z2: float
    g2_zero: float
    flag: str


def sweep(n_atoms: int, w_over_gc, gamma_c: float = 1.0) -> list[SweepRow]:
    """Closed-form steady states and ``g2(0)`` over pump rates (``N >= 3``)."""
    rows = []
    for x in w_over_gc:
        c = closed_form_steady_state(n_atoms, float(x) * gamma_c, gamma_c)
        flag = "below-threshold" if c.below_threshold_flag else "ok"
        rows.append(SweepRow(float(x), c.s, c.p, c.z2, g2_zero_semiclassical(c), flag))
    return rows


def write_sweep_csv(path, rows: list[SweepRow], n_atoms: int) -> None:
    lines = [
        "# superrad-semiclassical-sweep",
        f"# schema_version: {SWEEP_SCHEMA_VERSION}",
        f"# n_atoms: {n_atoms}",
        "w_over_gc,s,p,z2,g2_zero,flag",
    ]
    for r in rows:
        lines.append(",".join([*(repr(float(v)) for v in (r.w_over_gc, r.s, r.p, r.z2, r.g2_zero)), r.flag]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")

