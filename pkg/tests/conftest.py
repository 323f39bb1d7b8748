from __future__ import annotations

import pytest

from superrad.model import SystemParams, build_adiabatic_model, build_full_model


@pytest.fixture
def adiabatic():
    def make(n, w, gc=1.0):
        return build_adiabatic_model(SystemParams.from_gamma_c(n, gc, w))

    return make


@pytest.fixture
def full():
    def make(n, w, g=1.0, kappa=1.0, cutoff=2, detuning=0.0):
        return build_full_model(
            SystemParams(n_atoms=n, coupling=g, kappa=kappa, pump=w, photon_cutoff=cutoff, detuning=detuning)
        )

    return make


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[k])
