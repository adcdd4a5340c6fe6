# backend/tests/conftest.py
import logging
import math
import os
from functools import lru_cache

import pytest

from config import LOG_HANDLER_NAME
from shared.geometry_core import CameraIntrinsics, CameraPose, OrientedDetection, VehiclePrior
from shared.synth_oracle import generate_batch

N_SEEDS = 50


@lru_cache(maxsize=None)
def _cached_batch(pitch_deg: float, n_seeds: int, **kwargs):
    return tuple(generate_batch(range(n_seeds), pitch_deg=pitch_deg, **kwargs))


@pytest.fixture
def intrinsics():
    return CameraIntrinsics.from_focal(1000.0, 320, 240)


@pytest.fixture
def nadir_pose():
    return CameraPose()


@pytest.fixture
def prior():
    return VehiclePrior()


@pytest.fixture(scope="session")
def oracle_batch():
    """Seeded oracle scenes (seeds 0..49 by default), shared across the session"""

    def build(pitch_deg: float = -90.0, n_seeds: int = N_SEEDS, **kwargs):
        return list(_cached_batch(pitch_deg, n_seeds, **kwargs))

    return build


@pytest.fixture
def nadir_detections(intrinsics, prior):
    """Five nadir boxes sized for about 0.15 m/px, spread over the frame"""
    s = 0.15
    centers = [(60.0, 60.0), (260.0, 60.0), (160.0, 120.0), (60.0, 180.0), (260.0, 180.0)]
    return [
        OrientedDetection(u, v, prior.length_m / s, prior.width_m / s, (math.cos(k), math.sin(k)), 0.9)
        for k, (u, v) in enumerate(centers)
    ]


@pytest.fixture
def dota_line():
    return "0 0 44 0 44 19 0 19 small-vehicle 0.9"


@pytest.fixture
def clean_environment(monkeypatch, tmp_path):
    """No SCALE_* variables, no stray .env file, and root logging restored afterwards"""
    for key in list(os.environ):
        if key.upper().startswith("SCALE_"):
            monkeypatch.delenv(key)
    monkeypatch.chdir(tmp_path)
    root = logging.getLogger()
    level = root.level
    yield tmp_path
    for handler in list(root.handlers):
        if handler.get_name() == LOG_HANDLER_NAME:
            root.removeHandler(handler)
    root.setLevel(level)
