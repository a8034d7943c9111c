import importlib
import math

import pytest
import wandb

import direal
from direal.nn.checkpoint import ACTIVATION_CODES, KIND_TAGS
from direal.utils.invertable_dict import InvertableDict
from direal.utils.validators import (
    resolve_path,
    validate_existing_file,
    validate_finite,
    validate_layer_selector,
)


def test_codes_rejects_duplicate_values():
    with pytest.raises(ValueError):
        InvertableDict({"dense": 1, "conv": 2, "reshape": 2})


def test_codes_overwrite_frees_old_value():
    tags = InvertableDict({"dense": 1, "conv": 2})

    tags["dense"] = 7
    assert 1 not in tags.inv, "Old tag should be released when a kind is re-tagged"
    assert tags.lookup(7) == "dense"


def test_codes_cant_reuse_a_tag():
    tags = InvertableDict({"dense": 1, "conv": 2})

    with pytest.raises(ValueError):
        tags["batchnorm"] = 1


def test_codes_deletion():
    tags = InvertableDict({"dense": 1, "conv": 2, "reshape": 6})

    del tags["dense"]
    assert len(tags) == 2
    assert tags.keys() == {"conv", "reshape"}
    assert tags.inv.keys() == {2, 6}


def test_lookup_unknown_value_raises_keyerror():
    with pytest.raises(KeyError, match="99"):
        KIND_TAGS.lookup(99)


@pytest.mark.parametrize("table", [KIND_TAGS, ACTIVATION_CODES])
def test_checkpoint_tables_are_bijective(table):
    assert len(set(table.values())) == len(table)
    for key, code in table.items():
        assert table.lookup(code) == key


@pytest.mark.parametrize(
    "selector, expected",
    [
        (None, None),
        ((2, 0, 2), (0, 2)),
        ([1], (1,)),
        ((), ()),
    ],
)
def test_validate_layer_selector(selector, expected):
    assert validate_layer_selector(selector) == expected


def test_validate_layer_selector_rejects_negative():
    with pytest.raises(ValueError):
        validate_layer_selector((0, -1))


@pytest.mark.parametrize(
    "value, should_pass",
    [(0.0, True), (1e300, True), (math.inf, False), (-math.inf, False), (math.nan, False)],
)
def test_validate_finite(value, should_pass):
    if should_pass:
        assert validate_finite(value) == value
    else:
        with pytest.raises(ValueError):
            validate_finite(value)


def test_resolve_path_treats_empty_as_unset(tmp_path):
    assert resolve_path("") is None
    assert resolve_path(None) is None
    assert resolve_path(tmp_path / "a" / ".." / "b") == (tmp_path / "b").resolve()


def test_validate_existing_file(tmp_path):
    existing = tmp_path / "images.idx"
    existing.write_bytes(b"")
    assert validate_existing_file(existing) == existing.resolve()
    with pytest.raises(ValueError, match="does not exist"):
        validate_existing_file(tmp_path / "missing.idx")


@pytest.mark.parametrize(
    "raw, cap", [(None, None), ("", None), ("  ", None), ("0", "1"), ("4", "4"), (" 2 ", "2")]
)
def test_thread_cap(raw, cap):
    assert direal._thread_cap(raw) == cap


def test_thread_cap_warns_on_garbage(monkeypatch):
    warnings = []
    monkeypatch.setattr(wandb, "termwarn", warnings.append)
    assert direal._thread_cap("four") is None
    assert len(warnings) == 1
    assert "DIREAL_THREADS" in warnings[0]


def test_import_survives_bad_thread_setting(monkeypatch):
    monkeypatch.setenv("DIREAL_THREADS", "many")
    monkeypatch.setattr(wandb, "termwarn", lambda *args, **kwargs: None)
    assert importlib.reload(direal).gaussian_ring is not None
