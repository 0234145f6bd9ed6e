import json
from importlib import resources

import numpy as np
import pytest
from hypothesis import settings

import affine_lab.params as mp
import affine_lab.pricing as pricing

settings.register_profile("suite", max_examples=40, deadline=None)
settings.load_profile("suite")


def bundle(name: str) -> dict:
    text = resources.files("affine_lab.specs").joinpath(name + ".json").read_text()
    return json.loads(text)


@pytest.fixture(scope="session")
def ou_params() -> mp.AdmissibleParams:
    return mp.params_from_json(bundle("ou_n2")["model"])


@pytest.fixture(scope="session")
def statedep_params() -> mp.AdmissibleParams:
    return mp.params_from_json(bundle("statedep_n2")["model"])


@pytest.fixture(scope="session")
def desk_model() -> pricing.PricingModel:
    return pricing.model_from_json(bundle("desk_n2")["model"])


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)


def cone_point(rng, n, scale=1.0):
    a = rng.normal(size=(n, n))
    x = a @ a.T
    import affine_lab.cone as cone
    return scale * x / cone.hs_norm(x)
