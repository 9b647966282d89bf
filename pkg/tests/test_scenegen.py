"""Synthetic capture: arc geometry, ray-cast renders, error injection."""

import math

import numpy as np
import pytest

from fvv import scenegen
from fvv.core import Validity, project, unproject_map, project_points
from fvv.scenegen import (
    ControlPointObservation,
    DepthErrorSpec,
    Room,
    SceneDescription,
    SceneObject,
    arc_radius,
    bg_depth_model,
    build_camera_arc,
    degrade_depth,
    dilate_mask,
    emit_control_points,
    erroneous_depth,
    load_scene,
    make_scene,
    measure_bg_ratio,
    render_ground_truth,
    render_with_mask,
    save_scene,
)


class TestCameraArc:
    def test_paper_setting_spacing_and_span(self):
        rig = build_camera_arc(9, 0.270, 60.0)
        assert len(rig) == 9
        for a, b in zip(rig, rig[1:]):
            d = np.linalg.norm(a.pose.center - b.pose.center)
            assert d == pytest.approx(0.270, abs=1e-9)
        # first-to-last chord subtends the full span at the arc center
        c0, c8 = rig[0].pose.center, rig[8].pose.center
        cosang = np.dot(c0, c8) / (np.linalg.norm(c0) * np.linalg.norm(c8))
        assert math.degrees(math.acos(cosang)) == pytest.approx(60.0, abs=1e-9)

    def test_radius_chord_formula(self):
        # R = s / (2 sin(span / (2 (n-1)))); 9-camera case lands near 2.06 m
        r = arc_radius(9, 0.270, 60.0)
        assert r == pytest.approx(0.270 / (2 * math.sin(math.radians(3.75))), abs=1e-12)
        assert r == pytest.approx(2.064, abs=2e-3)
        rig = build_camera_arc(9, 0.270, 60.0)
        for cam in rig:
            assert np.linalg.norm(cam.pose.center) == pytest.approx(r, abs=1e-9)

    def test_two_cameras(self):
        rig = build_camera_arc(2, 1.0, 10.0)
        assert np.linalg.norm(rig[0].pose.center - rig[1].pose.center) == \
            pytest.approx(1.0, abs=1e-12)

    def test_axes_converge_on_arc_center(self):
        rig = build_camera_arc(9, 0.270, 60.0)
        for cam in rig:
            # origin must project to the principal point
            u, v, _ = project(np.zeros(3), cam)
            assert u == pytest.approx(cam.intrinsics.cx, abs=1e-9)
            assert v == pytest.approx(cam.intrinsics.cy, abs=1e-9)

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            build_camera_arc(1, 0.3, 60.0)
        with pytest.raises(ValueError):
            build_camera_arc(5, -0.1, 60.0)
        with pytest.raises(ValueError):
            build_camera_arc(5, 0.3, 180.0)


class TestRender:
    def test_frontal_plane_fills_frame_with_exact_depth(self):
        # a room whose back wall is 2 m in front of a camera at the origin
        room = Room(-50, 50, -50, 50, -1.0, 2.0)
        scene = SceneDescription("simple", room, ())
        cam = build_camera_arc(2, 0.01, 1.0, width=32, height=24)[0]
        # place a synthetic camera at the origin looking straight at +z
        from fvv.core import CameraCalibration, CameraPose
        calib = CameraCalibration(0, cam.intrinsics,
                                  CameraPose(np.eye(3), np.zeros(3)))
        frame = render_ground_truth(scene, calib, 0.0)
        np.testing.assert_array_equal(frame.depth.validity, Validity.VALID)
        np.testing.assert_allclose(frame.depth.depth, 2.0, atol=1e-6)

    def test_determinism(self, simple_scene, rig):
        a = render_ground_truth(simple_scene, rig[4], 1.5)
        b = render_ground_truth(simple_scene, rig[4], 1.5)
        assert np.array_equal(a.color.pixels, b.color.pixels)
        assert np.array_equal(a.depth.depth, b.depth.depth)

    def test_every_pixel_valid(self, simple_scene, rig):
        frame = render_ground_truth(simple_scene, rig[0], 0.0)
        assert (frame.depth.validity == Validity.VALID).all()
        assert (frame.depth.depth > 0).all()

    def test_sphere_silhouette_matches_analytic_area(self, rig):
        # lone sphere dead ahead: projected area ~ pi (fx r / d)^2
        room = scenegen._ROOM
        sphere = SceneObject("sphere", (0.0, 0.0, 0.0), (0.6, 0.6, 0.6),
                             (200, 80, 80))
        scene = SceneDescription("simple", room, (sphere,))
        cam = rig[4]
        _, fg = render_with_mask(scene, cam, 0.0)
        d = np.linalg.norm(cam.pose.center)
        r = 0.3
        # silhouette of a sphere subtends asin(r/d); its image is a disc of
        # radius fx * tan(asin(r/d))
        rho = cam.intrinsics.fx * math.tan(math.asin(r / d))
        expected = math.pi * rho * rho
        assert fg.sum() == pytest.approx(expected, rel=0.02)

    def test_out_of_range_time_rejected(self, simple_scene, rig):
        with pytest.raises(ValueError):
            render_ground_truth(simple_scene, rig[0], simple_scene.duration + 1.0)

    def test_moving_object_moves(self, medium_scene, rig):
        _, fg0 = render_with_mask(medium_scene, rig[4], 0.0)
        _, fg1 = render_with_mask(medium_scene, rig[4], 3.0)
        assert (fg0 != fg1).any()


class TestDegrade:
    def test_identity_spec_is_identity(self, simple_scene, rig):
        frame = render_ground_truth(simple_scene, rig[4], 0.0).depth
        out = degrade_depth(frame, DepthErrorSpec(0.0, 1.0), seed=1)
        np.testing.assert_array_equal(out.depth, frame.depth)
        np.testing.assert_array_equal(out.validity, frame.validity)

    def test_ratio_relation_solved(self):
        # alpha=0, beta=0.5: the camera reports 4 m for a true 2 m
        z_cam = erroneous_depth(np.array([2.0]), DepthErrorSpec(0.0, 0.5))
        assert z_cam[0] == pytest.approx(4.0, abs=1e-12)

    def test_ratio_relation_holds_generally(self):
        spec = DepthErrorSpec(0.02, 0.92)
        z_true = np.linspace(0.5, 6.0, 200)
        q = erroneous_depth(z_true, spec)
        np.testing.assert_allclose(z_true / q, spec.alpha_true * q + spec.beta_true,
                                   atol=1e-12)

    def test_silhouette_holes(self, simple_scene, rig):
        mvd, fg = render_with_mask(simple_scene, rig[4], 0.0)
        spec = DepthErrorSpec(0.0, 1.0, hole_width=2)
        out = degrade_depth(mvd.depth, spec, seed=3, fg_mask=fg)
        band = dilate_mask(fg, 2) & ~fg
        assert (out.validity[band] == Validity.INVALID).all()
        assert (out.validity[~band] == Validity.VALID).all()

    def test_noise_is_bounded_and_zero_mean(self, simple_scene, rig):
        frame = render_ground_truth(simple_scene, rig[4], 0.0).depth
        spec = DepthErrorSpec(0.0, 1.0, noise_amplitude=0.01)
        out = degrade_depth(frame, spec, seed=11)
        delta = out.depth - frame.depth
        assert np.abs(delta).max() <= 0.01 + 1e-9
        assert abs(delta.mean()) < 1e-3


class TestControlPoints:
    def test_identity_spec_gives_equal_depths(self, simple_scene, rig):
        obs = emit_control_points(simple_scene, rig[:2], DepthErrorSpec(0.0, 1.0),
                                  count=50, seed=5)
        for o in obs:
            assert o.z_cam == pytest.approx(o.z_calib, abs=1e-12)

    def test_least_squares_recovers_parameters(self, simple_scene, rig):
        # closed-form normal equations on the ratio recover the generator
        spec = DepthErrorSpec(0.02, 0.92)
        obs = emit_control_points(simple_scene, rig[:1], spec, count=500, seed=6)
        q = np.array([o.z_cam for o in obs])
        r = np.array([o.z_calib / o.z_cam for o in obs])
        n = len(q)
        sx, sy = q.sum(), r.sum()
        sxx, sxy = (q * q).sum(), (q * r).sum()
        alpha = (n * sxy - sx * sy) / (n * sxx - sx * sx)
        beta = (sy - alpha * sx) / n
        assert alpha == pytest.approx(0.02, abs=1e-6)
        assert beta == pytest.approx(0.92, abs=1e-6)

    def test_observations_span_scene_depths(self, simple_scene, rig):
        obs = emit_control_points(simple_scene, rig[:1], DepthErrorSpec(), 400, seed=7)
        z = np.array([o.z_calib for o in obs])
        frame = render_ground_truth(simple_scene, rig[0], 0.0).depth.depth
        assert z.min() <= np.percentile(frame, 5)
        assert z.max() >= np.percentile(frame, 95)

    def test_positive_depth_enforced(self):
        with pytest.raises(ValueError):
            ControlPointObservation(0, 1.0, 1.0, -1.0, 2.0)


class TestBgDepthModel:
    def test_no_fg_equals_ground_truth(self, rig):
        scene = SceneDescription("simple", scenegen._ROOM, ())
        model = bg_depth_model(scene, rig[3])
        live = render_ground_truth(scene, rig[3], 4.0)
        np.testing.assert_array_equal(model.depth, live.depth.depth)

    def test_time_invariant(self, simple_scene, rig):
        a = bg_depth_model(simple_scene, rig[2])
        b = bg_depth_model(simple_scene, rig[2])
        assert np.array_equal(a.depth, b.depth)

    def test_fg_occludes_bg_from_the_front(self, simple_scene, rig):
        model = bg_depth_model(simple_scene, rig[4])
        live = render_ground_truth(simple_scene, rig[4], 0.0)
        assert (live.depth.depth <= model.depth + 1e-5).all()

    @pytest.mark.parametrize("pair", [(2, 6), (0, 8), (4, 5)])
    def test_cross_camera_consistency(self, simple_scene, rig, pair):
        # BG depth unprojected from one camera must agree with every other
        # camera's model where visible. Comparison is against the bilinear
        # lookup of the destination raster, so the tolerance carries a
        # sub-pixel sampling term scaled by the local depth gradient; where
        # the surface is well sampled the strict 1e-3 bound must hold.
        src, dst = rig[pair[0]], rig[pair[1]]
        model_src = bg_depth_model(simple_scene, src)
        model_dst = bg_depth_model(simple_scene, dst)
        pts = unproject_map(model_src.depth, src)
        uv, z, front = project_points(pts.reshape(-1, 3), dst)
        h, w = model_dst.depth.shape
        ok = front & (uv[:, 0] >= 0) & (uv[:, 0] <= w - 1) & \
            (uv[:, 1] >= 0) & (uv[:, 1] <= h - 1)
        u0 = np.floor(uv[ok, 0]).astype(int)
        v0 = np.floor(uv[ok, 1]).astype(int)
        u1 = np.minimum(u0 + 1, w - 1)
        v1 = np.minimum(v0 + 1, h - 1)
        fu = uv[ok, 0] - u0
        fv = uv[ok, 1] - v0
        d = model_dst.depth.astype(np.float64)
        interp = (d[v0, u0] * (1 - fu) * (1 - fv) + d[v0, u1] * fu * (1 - fv)
                  + d[v1, u0] * (1 - fu) * fv + d[v1, u1] * fu * fv)
        err = np.abs(interp - z[ok])
        visible = interp <= z[ok] + 0.05  # projection hit a nearer surface
        gy, gx = np.gradient(d)
        g = np.abs(gy) + np.abs(gx)
        gcell = np.maximum.reduce([g[v0, u0], g[v0, u1], g[v1, u0], g[v1, u1]])
        assert (err[visible] <= 1e-3 + 0.75 * gcell[visible]).all()
        well_sampled = visible & (gcell < 0.01)
        if pair != (0, 8):  # arc extremes see every surface obliquely
            assert well_sampled.sum() > 1000
        assert (err[well_sampled] <= 1e-3).all()


class TestPresets:
    @pytest.mark.parametrize("preset", ["simple", "medium", "complex"])
    def test_bg_ratio_within_tolerance(self, preset, rig):
        scene = make_scene(preset)
        ratio = measure_bg_ratio(scene, rig, np.linspace(0, 11.5, 5))
        assert abs(ratio - scenegen.PRESET_BG_RATIO[preset]) < 0.05

    def test_objects_stay_inside_room(self):
        for preset in scenegen.PRESETS:
            make_scene(preset)  # __post_init__ enforces containment

    def test_room_violation_rejected(self):
        huge = SceneObject("sphere", (0.0, 0.0, 0.0), (20.0, 20.0, 20.0),
                           (10, 10, 10))
        with pytest.raises(ValueError):
            SceneDescription("simple", scenegen._ROOM, (huge,))

    def test_homogeneous_bg_flag(self, rig):
        scene = make_scene("simple", homogeneous_bg=True)
        frame = render_ground_truth(scene, rig[0], 0.0)
        _, fg = render_with_mask(scene, rig[0], 0.0)
        bg_pixels = frame.color.pixels[~fg]
        assert np.unique(bg_pixels.reshape(-1, 3), axis=0).shape[0] == 1

    def test_scene_file_round_trip(self, tmp_path):
        scene = make_scene("medium")
        path = tmp_path / "scene.json"
        save_scene(path, scene)
        loaded = load_scene(path)
        assert loaded == scene
