import numpy as np
import pytest

from zonempc.features import ChannelRoles
from zonempc.plant import generate_dataset, load_plant
from zonempc.timeseries import resample


@pytest.fixture(scope="session")
def plant():
    return load_plant()


@pytest.fixture(scope="session")
def roles_zone1():
    return ChannelRoles(
        output="temp_zone1", neighbor="temp_zone2", ambient="t_amb",
        irradiance="i_hor", valve="valve_zone1", supply="t_sup",
        energy="q_alloc_zone1",
    )


@pytest.fixture(scope="session")
def roles_zone2():
    return ChannelRoles(
        output="temp_zone2", neighbor="temp_zone1", ambient="t_amb",
        irradiance="i_hor", valve="valve_zone2", supply="t_sup",
        energy="q_alloc_zone2",
    )


@pytest.fixture(scope="session")
def prbs_4w(plant):
    """Four weeks of noisy excitation data at the 30-minute control step."""
    raw = generate_dataset(plant, "prbs", days=28, seed=410, mode="heating",
                           noise_std=0.05)
    return resample(raw, 1800.0)


@pytest.fixture(scope="session")
def hyst_4w(plant):
    """Four weeks of baseline-controller data at the 30-minute step."""
    raw = generate_dataset(plant, "hysteresis", days=28, seed=411, mode="heating",
                           noise_std=0.05)
    return resample(raw, 1800.0)
