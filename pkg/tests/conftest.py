"""Shared fixtures for the replab test suite."""

import pytest

from replab.constants import PrimitiveKind, ShapeKind
from replab.geometry import Seed
from replab.scene import ObjectInstance, ObjectShape, Primitive, Scene
from replab.services.config_service import CellConfig
from replab.workcell import Workcell


@pytest.fixture(autouse=True)
def isolated_config(tmp_path, monkeypatch):
    """Keep user and working-directory config files out of every test."""
    monkeypatch.delenv("REPLAB_CONFIG", raising=False)
    monkeypatch.setenv("XDG_CONFIG_HOME", str(tmp_path / "xdg"))
    monkeypatch.chdir(tmp_path)


@pytest.fixture
def box():
    def make(a: float, b: float, c: float, name: str = "box") -> ObjectShape:
        return ObjectShape(ShapeKind.BOX, (Primitive(PrimitiveKind.BOX, (a, b, c)),), name=name)

    return make


@pytest.fixture
def sphere():
    def make(r: float, name: str = "sphere") -> ObjectShape:
        return ObjectShape(ShapeKind.ELLIPSOID, (Primitive(PrimitiveKind.ELLIPSOID, (r, r, r)),), name=name)

    return make


@pytest.fixture
def scene_of():
    """Scene from (shape, x, y, yaw) tuples, ids in order."""

    def make(*placements) -> Scene:
        return Scene(tuple(ObjectInstance(i, s, x, y, yaw) for i, (s, x, y, yaw) in enumerate(placements)))

    return make


@pytest.fixture(scope="session")
def workcell() -> Workcell:
    """Default cell, calibrated once for the whole session."""
    return Workcell(CellConfig(), Seed(0))
