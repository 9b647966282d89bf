"""Acceptance suite.

One test per acceptance criterion, run at the stated tolerance, printing a
pass line when it holds. Everything here is headless: no viewer client is
needed or imported.
"""

import time

import numpy as np

from fvv import depthcodec as dc
from fvv import depthproc as dp
from fvv import pipeline as pl
from fvv import scenegen, synthesis as syn, transport as tp
from fvv.core import CameraPose, DepthFrame, DepthRange, Validity, camera_distance
from fvv.scenegen import DepthErrorSpec

from conftest import gt_stream_inputs, midpoint_virtual, nearest_ids

RANGE = DepthRange(0.5, 5.0)


def ok(criterion: int, detail: str) -> None:
    print(f"[PASS] acceptance {criterion}: {detail}")


def depth_frame(values):
    values = np.asarray(values, dtype=np.float32)
    h, w = values.shape
    return DepthFrame(w, h, values, np.zeros((h, w), dtype=np.uint8))


class TestAcceptance:
    def test_01_codec_bijection(self):
        t0 = time.time()
        rng = np.random.default_rng(1)
        for _ in range(1000):
            vals = rng.integers(0, 4096, (64, 64)).astype(np.uint16)
            d = dc.DisparityMap12(64, 64, vals)
            back = dc.unpack_yuv420(dc.pack_yuv420(d))
            assert np.array_equal(back.values, vals)
        for value in range(4096):
            d = dc.DisparityMap12(2, 2, np.full((2, 2), value, np.uint16))
            assert (dc.unpack_yuv420(dc.pack_yuv420(d)).values == value).all()
        elapsed = time.time() - t0
        assert elapsed < 10.0
        ok(1, f"pack/unpack bijective on 1000 random rasters + 4096-code sweep "
              f"({elapsed:.1f}s)")

    def test_02_quantizer_endpoints_reserved_and_half_bin(self):
        q = dc.quantize12(depth_frame([[0.5, 5.0]]), RANGE)
        assert q.values[0, 0] == 4095
        assert q.values[0, 1] == 2
        validity = np.array([[Validity.BACKGROUND, Validity.INVALID]], np.uint8)
        frame = DepthFrame(2, 1, np.zeros((1, 2), np.float32), validity)
        q2 = dc.quantize12(frame, RANGE)
        assert q2.values[0, 0] == 0 and q2.values[0, 1] == 1
        back = dc.dequantize12(q2, RANGE)
        assert back.validity[0, 0] == Validity.BACKGROUND
        assert back.validity[0, 1] == Validity.INVALID

        rng = np.random.default_rng(2)
        z = rng.uniform(0.5, 5.0, size=100_000).astype(np.float32)
        codes = dc.quantize12(depth_frame(z.reshape(200, 500)), RANGE)
        z_back = dc.dequantize_codes(codes.values, RANGE)
        err = np.abs(1.0 / z_back - 1.0 / z.reshape(200, 500).astype(np.float64))
        bound = (1 / 0.5 - 1 / 5.0) / (2 * 4093)
        assert err.max() <= bound * (1 + 1e-9)
        ok(2, f"endpoints 4095/2, reserved 0/1 round-trip, inverse-depth error "
              f"max {err.max():.3e} <= half bin {bound:.3e} over 1e5 depths")

    def test_03_fold_continuity_and_compressibility(self):
        y = dc.fold_lsb(np.arange(4096, dtype=np.uint16)).astype(np.int64)
        assert np.abs(np.diff(y)).max() <= 1

        u = np.linspace(0, 1, 64)
        ramp = 0.55 + (np.sin(2 * np.pi * u)[None, :] * 0.3 + 0.3
                       + np.linspace(0, 1, 64)[:, None]) * 1.9
        d = dc.quantize12(depth_frame(ramp), RANGE)
        folded = len(dc.encode_lossless(dc.pack_yuv420(d)).payload)
        naive = len(dc.encode_lossless(dc.pack_yuv420_naive(d)).payload)
        assert folded <= naive
        ok(3, f"|Y(v+1)-Y(v)| <= 1 for all 4095 steps; smooth ramp folded "
              f"{folded} B <= naive {naive} B")

    def test_04_depth_correction(self, rig):
        rng = np.random.default_rng(3)
        z_cam = rng.uniform(0.7, 5.5, 2000)
        z_calib = (0.02 * z_cam + 0.92) * z_cam
        from fvv.scenegen import ControlPointObservation
        clean = [ControlPointObservation(0, 0, 0, float(q), float(z))
                 for q, z in zip(z_cam, z_calib)]
        model = dp.fit_depth_correction(clean)
        assert abs(model.alpha - 0.02) < 1e-6
        assert abs(model.beta - 0.92) < 1e-6

        noisy_cam = z_cam * (1.0 + rng.uniform(-0.01, 0.01, z_cam.shape))
        noisy = [ControlPointObservation(0, 0, 0, float(q), float(z))
                 for q, z in zip(noisy_cam, z_calib)]
        nm = dp.fit_depth_correction(noisy)
        assert abs(nm.alpha - 0.02) / 0.02 < 0.05
        assert abs(nm.beta - 0.92) / 0.92 < 0.05

        improvements = []
        for preset in scenegen.PRESETS:
            scene = scenegen.make_scene(preset)
            spec = DepthErrorSpec(0.02, 0.92, noise_amplitude=0.005)
            obs = scenegen.emit_control_points(scene, rig[4:5], spec, 400, seed=4)
            fitted = dp.fit_depth_correction(obs)
            gt = scenegen.render_ground_truth(scene, rig[4], 1.0).depth
            degraded = scenegen.degrade_depth(gt, spec, seed=5)
            corrected = dp.correct_depth(degraded, fitted)
            rmse_raw = float(np.sqrt(np.mean((degraded.depth - gt.depth) ** 2)))
            rmse_fix = float(np.sqrt(np.mean((corrected.depth - gt.depth) ** 2)))
            assert rmse_fix < rmse_raw
            improvements.append((preset, rmse_raw, rmse_fix))
        ok(4, "alpha/beta exact to 1e-6 noiseless, <5% at 1% noise; corrected "
              "RMSE beats uncorrected on " +
              ", ".join(f"{p} {r:.3f}->{f:.3f} m" for p, r, f in improvements))

    def test_05_bg_removal_bitrate_saving(self, rig):
        scene = scenegen.make_scene("simple")
        spec = DepthErrorSpec(0.02, 0.92, noise_amplitude=0.01, hole_width=2)
        with_removal = 0
        without_removal = 0
        for t in (0.0, 0.5, 1.0, 1.5):
            for cam in (3, 4, 5):
                mvd, fg = scenegen.render_with_mask(scene, rig[cam], t)
                degraded = scenegen.degrade_depth(mvd.depth, spec,
                                                  seed=int(t * 100) + cam,
                                                  fg_mask=fg)
                removed = dp.remove_bg_depth(degraded, fg)
                for frame, acc in ((degraded, "without"), (removed, "with")):
                    payload = len(dc.encode_lossless(
                        dc.pack_yuv420(dc.quantize12(frame, RANGE))).payload)
                    if acc == "with":
                        with_removal += payload
                    else:
                        without_removal += payload
        saving = 1.0 - with_removal / without_removal
        assert saving >= 0.20
        ok(5, f"simple preset depth payload saving with BG removal: "
              f"{saving:.1%} (>= 20%)")

    def test_06_selection_oracle(self, rig):
        assert tp.select_cameras(rig[4].pose, rig, 5) == [4, 3, 5, 2, 6]
        rng = np.random.default_rng(6)
        for _ in range(1000):
            pose = CameraPose(np.eye(3), rng.uniform(-2.5, 2.5, 3))
            assert tp.select_cameras(pose, rig, 5) == nearest_ids(rig, pose, 5)
            active = tp.select_cameras(pose, rig, 5)
            refs = tp.select_references(pose, rig, active, 3)
            brute = sorted(active, key=lambda i: (
                camera_distance(rig[i].pose, pose), i))[:3]
            assert refs == brute
        ok(6, "select_cameras/select_references match brute force on 1000 "
              "poses; mid-arc case is [4,3,5,2,6]")

    def test_07_transport(self):
        rng = np.random.default_rng(7)
        mtu = 400
        for trial in range(1000):
            payload = rng.bytes(int(rng.integers(1, 3000)))
            frame = dc.EncodedFrame(dc.MEDIA_DEPTH, 0, 64, 48, trial, payload)
            packets = tp.packetize(frame, 0, trial, mtu=mtu)
            assert all(p.size <= mtu for p in packets)
            order = rng.permutation(len(packets))
            shuffled = [packets[i] for i in order]
            shuffled.insert(int(rng.integers(len(shuffled) + 1)),
                            packets[int(rng.integers(len(packets)))])
            r = tp.Reassembler()
            done = [e for p in shuffled for e in r.push(p, 0.0)
                    if isinstance(e, tp.CompletedFrame)]
            assert len(done) == 1 and done[0].frame == frame

        # single fragment loss: the frame drops whole, nothing is delivered
        frame = dc.EncodedFrame(dc.MEDIA_DEPTH, 0, 64, 48, 0, bytes(2000))
        packets = tp.packetize(frame, 0, 0, mtu=mtu)
        r = tp.Reassembler(timeout_us=1000.0)
        events = [e for p in packets[1:] for e in r.push(p, 0.0)]
        assert not any(isinstance(e, tp.CompletedFrame) for e in events)
        expired = r.expire(2500.0)
        assert [e.reason for e in expired] == ["timeout"]
        ok(7, "packets bounded by MTU; reassembly identity under permutation "
              "+ duplication (1000 trials); fragment loss drops whole frame")

    def test_08_synthesis_identity_and_quality(self, rig):
        scene = scenegen.make_scene("simple")
        inputs = gt_stream_inputs(scene, rig, [4], 1.0)
        out = syn.synthesize_view(rig[4], inputs, [4], syn.SynthesisConfig())
        live = scenegen.render_ground_truth(scene, rig[4], 1.0)
        border = syn.border_mask(out.height, out.width, 2)
        same = (out.pixels == live.color.pixels).all(axis=-1)
        identity_frac = same[~border].mean()
        assert identity_frac >= 0.99

        psnrs = {}
        for preset in scenegen.PRESETS:
            sc = scenegen.make_scene(preset)
            virtual = midpoint_virtual(rig, 3, 4)
            refs = nearest_ids(rig, virtual.pose, 3)
            t = 2.0
            inp = gt_stream_inputs(sc, rig, refs, t)
            view = syn.synthesize_view(virtual, inp, refs, syn.SynthesisConfig())
            oracle = scenegen.render_ground_truth(sc, virtual, t)
            covered = scenegen.coverage_mask(sc, t, virtual,
                                             [rig[r] for r in refs])
            exclude = ~covered | syn.border_mask(view.height, view.width, 2)
            psnr = syn.view_psnr(view, oracle.color, exclude)
            assert psnr >= 30.0
            psnrs[preset] = psnr
        ok(8, f"identity view {identity_frac:.1%} byte-exact; midpoint masked "
              f"PSNR " + ", ".join(f"{p} {v:.1f} dB" for p, v in psnrs.items()))

    def test_09_mtp_model(self):
        cfg = pl.PipelineConfig(width=96, height=72, render_stub=True)
        sim = pl.Simulation(cfg)
        period = cfg.stage.frame_period_us
        rng = np.random.default_rng(9)
        n = 10_000
        times = (np.arange(1, n + 1) + rng.uniform(0, 1, n)) * period
        for t in times:
            sim.schedule_viewpoint(float(t), sim.rig[4].pose)
        report = sim.run((n + 3) * period / 1e6)
        mtp = np.array([m.mtp_ms for m in report.mtp])
        assert len(mtp) == n
        assert mtp.min() >= 30.0 - 1e-9
        assert mtp.max() <= 63.3 + 0.05
        assert abs(mtp.mean() - 47.0) <= 1.0
        ok(9, f"MTP over {n} uniform updates: [{mtp.min():.2f}, {mtp.max():.2f}] "
              f"ms, mean {mtp.mean():.2f} ms (47 +/- 1)")

    def test_10_live_loop_invariants(self):
        cfg = pl.PipelineConfig(width=96, height=72, preset="simple", seed=0)
        rig = scenegen.build_camera_arc(cfg.n_cameras, cfg.camera_spacing_m,
                                        cfg.arc_span_deg, width=cfg.width,
                                        height=cfg.height)
        traj = pl.make_trajectory("swing", rig, duration_s=12.0)
        sim = pl.Simulation(cfg, trajectory=traj)
        report = sim.run(12.0)

        assert len(report.frames) >= 12 * 30
        for f in report.frames:
            assert set(f.references) <= set(f.active)

        period = cfg.stage.frame_period_us
        ctrl = tp.control_packet(
            tp.CameraSetCommand.from_ids(range(5), 0), 0).size
        one_way = cfg.link.propagation_s * 1e6 + ctrl * 8e6 / cfg.link.bandwidth_bps
        rtt = 2 * one_way
        switches = 0
        for t_cmd, wanted in sim.command_log:
            applied = [t for t, s in sim.cs_active_log
                       if s == wanted and t >= t_cmd]
            assert applied, f"active-set command at {t_cmd:.0f}us never applied"
            assert applied[0] - t_cmd <= rtt + period
            switches += 1
        assert switches >= 4  # full swing crosses several selection boundaries
        ok(10, f"12s swing: references subset of active on {len(report.frames)} "
               f"ticks; {switches} active-set switches within RTT+period")
