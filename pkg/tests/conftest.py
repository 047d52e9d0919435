import dataclasses

import numpy as np
import pytest

from octcap import phantom
from octcap.model import AnalysisConfig


@pytest.fixture(scope="session")
def config():
    return AnalysisConfig()


@pytest.fixture(scope="session")
def tcfa_short():
    spec = phantom.presets()["tcfa_short"]
    return phantom.generate(spec) + (spec,)


@pytest.fixture(scope="session")
def tcfa_short_noisefree():
    spec = dataclasses.replace(phantom.presets()["tcfa_short"], speckle_sigma=0.0)
    return phantom.generate(spec) + (spec,)


@pytest.fixture(scope="session")
def noisefree_step():
    spec = phantom.presets()["noisefree_step"]
    return phantom.generate(spec) + (spec,)


@pytest.fixture(scope="session")
def flat_lumen_frame():
    """One noise-free frame with a flat 80 px lumen and no lesion."""
    spec = phantom.PhantomSpec(name="flat", n_frames=1, speckle_sigma=0.0,
                               lumen_amp_px=0.0, guidewire=None, seed=1)
    pb, gt = phantom.generate(spec)
    return pb, gt


def rng(seed=0):
    return np.random.default_rng(seed)
