"""Shared fixtures. The SDP searches are expensive, so each validated run is
computed once per session and reused by the acceptance and soundness tests."""
import functools
from fractions import Fraction

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "repo",
    deadline=None,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("repo")


@functools.lru_cache(maxsize=None)
def validated_run(system_name, mode, d_lib, d_a, d_b, d_rho, C_hi, C_lo, rel_tol, prune_rounds):
    """Run the full bound pipeline once; returns (ValidatedBound, SearchResult)."""
    from minperiod.cli import RunConfig, run_bound
    from minperiod.sdpengine import SearchConfig
    from minperiod.sosbuilder import DegreeConfig
    from minperiod.systems import get_system

    search = SearchConfig(Fraction(C_hi), Fraction(C_lo), rel_tol=rel_tol, prune_rounds=prune_rounds)
    cfg = RunConfig("bound", get_system(system_name), DegreeConfig(mode, d_lib, d_a, d_b, d_rho), search,
                    prune_rounds=prune_rounds)
    return run_bound(cfg)


# The three table rows required for acceptance.
LORENZ_ROW1 = ("lorenz_rescaled", "parity", 1, 4, 2, None, 20000, 1000, 1e-4, 0)
LORENZ_ROW3 = ("lorenz_rescaled", "parity", 2, 6, 3, None, 6000, 1000, 1e-4, 0)
HH_DW2 = ("henon_heiles", "lie_span", 2, 5, 3, 3, 1000, 300, 1e-4, 5)


@pytest.fixture(scope="session")
def lorenz_row1():
    return validated_run(*LORENZ_ROW1)


@pytest.fixture(scope="session")
def lorenz_row3():
    return validated_run(*LORENZ_ROW3)


@pytest.fixture(scope="session")
def hh_dw2():
    return validated_run(*HH_DW2)


# Stretch setting used for orbit seeding: the d_w=3 preset at a C just above
# the smallest value that validates. Seeds need a nearly sharp certificate.
HH_DW3_C = Fraction("431.2")


@pytest.fixture(scope="session")
def hh_dw3_cert():
    from minperiod.certify import attempt_certificate
    from minperiod.sosbuilder import DegreeConfig, assemble_identity, build_library
    from minperiod.systems import henon_heiles

    s = henon_heiles()
    cfg = DegreeConfig.lie_span_preset(3)
    identity = assemble_identity(s, build_library(s, cfg), cfg, HH_DW3_C)
    status, cert = attempt_certificate(identity, prune_rounds=5)
    assert cert is not None, f"d_w=3 certificate at C={HH_DW3_C} did not validate ({status})"
    return cert
