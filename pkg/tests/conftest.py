"""Shared fixtures: a small rig and prerendered scenes keep the suite quick."""

import numpy as np
import pytest

from fvv import scenegen, synthesis
from fvv.core import CameraCalibration, DepthFrame, Validity, camera_distance
from fvv.scenegen import look_at_pose

RIG_W, RIG_H = 128, 96


@pytest.fixture(scope="session")
def rig():
    return scenegen.build_camera_arc(9, 0.270, 60.0, width=RIG_W, height=RIG_H)


@pytest.fixture(scope="session")
def simple_scene():
    return scenegen.make_scene("simple")


@pytest.fixture(scope="session")
def medium_scene():
    return scenegen.make_scene("medium")


def gt_stream_inputs(scene, rig, ref_ids, t):
    """Ground-truth-depth CameraStreamInputs for the given references.

    Live depth carries FG pixels as Valid and everything else as Background,
    matching what BG removal produces on perfect data.
    """
    inputs = {}
    for rid in ref_ids:
        calib = rig[rid]
        mvd, fg = scenegen.render_with_mask(scene, calib, t)
        validity = np.where(fg, Validity.VALID, Validity.BACKGROUND).astype(np.uint8)
        d = mvd.depth.depth.copy()
        d[~fg] = 0.0
        live = DepthFrame(mvd.depth.width, mvd.depth.height, d, validity,
                          mvd.depth.timestamp_us)
        inputs[rid] = synthesis.CameraStreamInputs(
            calib=calib,
            live_color=mvd.color,
            live_depth=live,
            bg_depth=scenegen.bg_depth_model(scene, calib),
        )
    return inputs


def midpoint_virtual(rig, i, j, cam_id=200):
    """Virtual camera at the chord midpoint of two rig cameras."""
    center = (rig[i].pose.center + rig[j].pose.center) / 2.0
    return CameraCalibration(id=cam_id, intrinsics=rig[0].intrinsics,
                             pose=look_at_pose(center, np.zeros(3)))


def nearest_ids(rig, pose, k):
    return sorted(range(len(rig)),
                  key=lambda i: (camera_distance(rig[i].pose, pose), i))[:k]
