from __future__ import annotations

import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from obatakit.manifold import Flat, Quadric
from obatakit.obata import INSTANCE_CASES, build_instance
from obatakit.specfile import SpecError, dumps, load_spec, model_from_spec, read_model

CASES = {
    "thm4.1a": (1, 1),
    "thm4.1b": (1, 2),
    "thm4.2": (1, -1),
    "thm4.3": (1, 0),
    "thm4.5i": (0, 4),
    "thm4.5ii": (0, -2),
    "nullkilling": (0, 0),
}


@pytest.mark.parametrize("case", INSTANCE_CASES)
def test_instance_round_trip(case: str) -> None:
    b = build_instance(case, *CASES[case], verify=False)
    spec = json.loads(dumps(b.to_spec()))
    loaded = load_spec(spec)
    assert loaded.model.to_spec() == b.model.to_spec()
    assert loaded.omega.text == b.omega.text
    assert loaded.kappa == b.kappa
    assert loaded.extras["theorem"] == case


def test_sample_models_load(models_dir) -> None:
    for name in ("de-sitter", "sphere", "exp-warp", "sin-warp", "flat"):
        read_model(models_dir / f"{name}.json")
    with pytest.raises(SpecError, match="inertia"):
        read_model(models_dir / "broken.json")


def test_unknown_keys_rejected() -> None:
    with pytest.raises(SpecError, match="unknown keys"):
        load_spec({"schema": 1, "type": "flat", "signature": [0, 2], "colour": "red"})


def test_schema_required() -> None:
    with pytest.raises(SpecError, match="schema"):
        load_spec({"type": "flat", "signature": [0, 2]})


def test_nested_fiber_has_no_schema() -> None:
    spec = {"type": "warped", "base_sign": -1, "alpha": "exp(x0)", "fiber": {"type": "flat", "signature": [0, 2], "schema": 1}}
    with pytest.raises(SpecError, match="unknown keys"):
        model_from_spec(spec)


def test_omega_and_ambient_exclusive() -> None:
    spec = {"schema": 1, **Quadric((1, 2), 1.0).to_spec(), "omega": "x0", "omega_ambient": [1, 0, 0]}
    with pytest.raises(SpecError):
        load_spec(spec)


def test_bad_expression_is_spec_error() -> None:
    spec = {"schema": 1, **Flat(0, 2).to_spec(), "omega": "x0 +"}
    with pytest.raises(SpecError):
        load_spec(spec)


def test_dumps_formatting() -> None:
    text = dumps({"a": 0.1, "b": [1, math.inf], "c": True})
    assert '"a": 0.10000000000000001' in text
    assert "[1, null]" in text
    assert json.loads(text)["c"] is True


_JSONISH = st.recursive(
    st.one_of(st.none(), st.booleans(), st.integers(-5, 5), st.floats(allow_nan=True), st.text(max_size=4)),
    lambda c: st.one_of(st.lists(c, max_size=3), st.dictionaries(st.text(max_size=4), c, max_size=3)),
    max_leaves=8,
)


@settings(max_examples=80, deadline=None)
@given(_JSONISH)
def test_malformed_specs_fail_closed(obj) -> None:
    # anything that is not a valid model either loads or raises SpecError, nothing else
    try:
        load_spec(obj)
    except SpecError:
        pass


@settings(max_examples=40, deadline=None)
@given(st.dictionaries(st.sampled_from(["type", "signature", "dimension", "level", "ambient_signature", "alpha", "entries", "fiber", "base_sign", "domain"]),
                       st.one_of(st.none(), st.integers(-2, 3), st.text(max_size=6), st.lists(st.integers(-1, 3), max_size=3)), max_size=6))
def test_near_miss_specs_fail_closed(fields) -> None:
    try:
        load_spec({"schema": 1, **fields})
    except SpecError:
        pass
