import numpy as np
import pytest

from config import AU_KM, MU_SUN_KM3_S2
from smoothing import SmoothingConfig, SmoothingKind
from units import SpacecraftParams, make_heliocentric_scale, make_mu_one_scale

E2M_SPACECRAFT = SpacecraftParams(m0=1000.0, isp=2000.0, t_max=0.5, mu_body=MU_SUN_KM3_S2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def helio_scale():
    return make_heliocentric_scale(mass_unit=1000.0)


@pytest.fixture
def cartesian_params(helio_scale):
    return E2M_SPACECRAFT.to_canonical(helio_scale)


@pytest.fixture
def mee_params():
    scale = make_mu_one_scale(MU_SUN_KM3_S2, AU_KM, mass_unit=1000.0)
    return E2M_SPACECRAFT.to_canonical(scale)


@pytest.fixture(params=[SmoothingKind.HYPERBOLIC_TANGENT, SmoothingKind.L2_NORM])
def smoothing_cfg(request):
    return SmoothingConfig(request.param, 0.5)

