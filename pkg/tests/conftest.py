import math
from fractions import Fraction

import pytest

from hml_tori.immersion import build_immersion
from hml_tori.params import ModuliParams
from hml_tori.search import SearchConfig, search_tori

REFERENCE = dict(a=1, b=1, c1=1, c2=1, c3=1)
# (a, b, c1, c2) = (-3, -3, 2, 2) has spectral roots {4, 1, -2} and C = 4
RATIONAL_ROOTS = dict(a=-3, b=-3, c1=2, c2=2)


@pytest.fixture(scope="session")
def reference_params():
    return ModuliParams(**REFERENCE)


@pytest.fixture(scope="session")
def reference(reference_params):
    return build_immersion(reference_params)


@pytest.fixture(scope="session")
def rational_point():
    """Rational roots, but c3 = 1 gives an irrational winding."""
    return build_immersion(ModuliParams(c3=1, **RATIONAL_ROOTS))


@pytest.fixture(scope="session")
def torus_candidate():
    """A search-certified closed torus (winding target 3/4)."""
    cfg = SearchConfig.from_dict({
        "grids": {k: {"min": v, "max": v} for k, v in RATIONAL_ROOTS.items()},
        "winding_targets": ["3/4"],
    })
    result = search_tori(cfg, workers=1)
    assert len(result.candidates) == 1
    return result.candidates[0]


@pytest.fixture(scope="session")
def torus(torus_candidate):
    return build_immersion(torus_candidate.params)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
