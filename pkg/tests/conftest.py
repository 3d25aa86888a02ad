from __future__ import annotations

from pathlib import Path

import pytest

from obatakit.manifold import Flat, Quadric, Warped, restrict_linear
from obatakit.tensor import ScalarField

MODELS = Path(__file__).resolve().parent.parent / "models"


@pytest.fixture
def models_dir() -> Path:
    return MODELS


@pytest.fixture
def de_sitter() -> Quadric:
    # -t^2 + x^2 + y^2 = 1, chart (t, x) on the y > 0 sheet
    return Quadric((1, 2), 1.0)


@pytest.fixture
def sphere() -> Quadric:
    return Quadric((0, 3), 1.0)


@pytest.fixture
def exp_warp() -> Warped:
    return Warped(-1, "exp(x0)", Flat(0, 2))


def ambient_field(m: Quadric, coeffs, kappa: float = 1.0) -> ScalarField:
    return ScalarField(restrict_linear(m, coeffs), kappa)
