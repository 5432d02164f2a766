"""
This module contains pytest fixtures and configuration for testing.
"""
import sys
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

# Add the project's root directory to the system path
sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

# Import the main app
from main import app
from api.geometry.services import validate_geometry, validate_strategy
from api.zones.services import ZonedDevice
from api.zones.trace import TraceRecorder


@pytest.fixture
def test_app():
    """
    Create a FastAPI test application.
    """
    return app


@pytest.fixture
def client(test_app):
    """
    Create a test client for the FastAPI application.
    """
    return TestClient(test_app)


@pytest.fixture
def g_small():
    """
    Four LUNs, four-page blocks, eight blocks per zone, four zones, two open.
    """
    return validate_geometry({"profile": "g-small"})


@pytest.fixture
def zn540():
    """
    Full-size commercial device layout.
    """
    return validate_geometry({"profile": "zn540"})


@pytest.fixture
def desk():
    """
    ZN540 layout with 16-page blocks used for the host workload tests.
    """
    return validate_geometry({"profile": "desk"})


@pytest.fixture
def make_device(g_small):
    """
    Factory building a ZonedDevice from a strategy label.

    Defaults to G-small and keeps the trace in memory.
    """
    def factory(label, geometry=None, **kwargs):
        geometry = geometry or g_small
        strategy = validate_strategy(label, geometry)
        kwargs.setdefault("trace", TraceRecorder())
        return ZonedDevice(geometry, strategy, **kwargs)
    return factory
