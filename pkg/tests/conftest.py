from __future__ import annotations

from importlib import resources

import pytest

from guidebench.graph import parse_graph


@pytest.fixture(scope="session")
def toy_graph():
    text = resources.files("guidebench").joinpath("assets/toy_guideline.json").read_text("utf-8")
    return parse_graph(text)


@pytest.fixture(autouse=True)
def _clear_backend_cache():
    from guidebench.predictors import reset_backend_cache

    reset_backend_cache()
    yield
