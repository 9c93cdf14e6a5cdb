import numpy as np
import pytest

from randtwist import MapFamily, PhasePoint, TrigPoly

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


@pytest.fixture(scope="session")
def cos_sin_family():
    """The standard-map pair used throughout: v+ = cos, v- = sin, u = v."""
    cos = TrigPoly.cosine(1)
    sin = TrigPoly.sine(1)
    return MapFamily(epsilon=0.01, u=(sin, cos), v=(sin, cos),
                     area_preserving=True)


@pytest.fixture(scope="session")
def odd_cos_family():
    """Symbol-odd family v+ = cos = -v-, exact displacement martingale."""
    cos = TrigPoly.cosine(1)
    ncos = TrigPoly.cosine(1, -1.0)
    return MapFamily(epsilon=0.01, u=(ncos, cos), v=(ncos, cos))


@pytest.fixture
def golden_start():
    return PhasePoint(0.0, GOLDEN)
