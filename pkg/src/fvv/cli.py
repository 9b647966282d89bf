"""Command-line interface: fvv sim | serve | codec | bench."""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from . import depthcodec, pipeline, scenegen, transport
from .core import DepthRange


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", default="simple",
                   choices=list(scenegen.PRESETS), help="scene preset")
    p.add_argument("--cameras", type=int, default=9, help="camera count")
    p.add_argument("--spacing", type=float, default=0.270,
                   help="adjacent camera spacing, meters")
    p.add_argument("--span", type=float, default=60.0, help="arc span, degrees")
    p.add_argument("--width", type=int, default=128)
    p.add_argument("--height", type=int, default=96)
    p.add_argument("--ntx", type=int, default=5, help="cameras transmitted")
    p.add_argument("--refs", type=int, default=3, help="reference cameras used")
    p.add_argument("--mtu", type=int, default=1500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fps", type=float, default=30.0)
    p.add_argument("--cs-processing-ms", type=float, default=19.47)
    p.add_argument("--decode-ms", type=float, default=16.5)
    p.add_argument("--synthesis-ms", type=float, default=30.0)
    p.add_argument("--extra-ms", type=float, default=0.0,
                   help="extra pipeline budget for unmodeled buffering")
    p.add_argument("--loss", type=float, default=0.0, help="link loss rate")
    p.add_argument("--no-bg-removal", action="store_true")
    p.add_argument("--no-correction", action="store_true")


def _config(args) -> pipeline.PipelineConfig:
    stage = pipeline.StageLatencies(
        frame_period_us=1e6 / args.fps,
        cs_processing_us=args.cs_processing_ms * 1e3,
        decode_us=args.decode_ms * 1e3,
        synthesis_us=args.synthesis_ms * 1e3,
        extra_pipeline_us=args.extra_ms * 1e3,
    )
    return pipeline.PipelineConfig(
        preset=args.preset,
        n_cameras=args.cameras,
        camera_spacing_m=args.spacing,
        arc_span_deg=args.span,
        width=args.width,
        height=args.height,
        n_tx=args.ntx,
        reference_count=args.refs,
        mtu=args.mtu,
        seed=args.seed,
        stage=stage,
        link=transport.LinkConfig(loss_rate=args.loss, mtu=args.mtu),
        bg_removal=not args.no_bg_removal,
        depth_correction=not args.no_correction,
    )


def cmd_sim(args) -> int:
    cfg = _config(args)
    t0 = time.time()
    report = pipeline.run_batch(cfg, args.trajectory, args.out,
                                duration_s=args.duration)
    summary = report.summary()
    print(json.dumps(summary, indent=2))
    print(f"wrote {summary['frames_displayed']} frames + metrics to {args.out} "
          f"in {time.time() - t0:.1f}s", file=sys.stderr)
    return 0


def cmd_serve(args) -> int:
    from .serve import serve_viewer

    cfg = _config(args)
    serve_viewer(cfg, host=args.host, port=args.port)
    return 0


def cmd_codec(args) -> int:
    cfg = _config(args)
    rig = scenegen.build_camera_arc(cfg.n_cameras, cfg.camera_spacing_m,
                                    cfg.arc_span_deg, width=cfg.width,
                                    height=cfg.height)
    scene = scenegen.make_scene(cfg.preset)
    rng = DepthRange(cfg.z_near, cfg.z_far)
    folded = naive = raw = 0
    frames = 0
    for k in range(args.frames):
        t = (k / cfg.fps) % scene.duration
        depth = scenegen.render_ground_truth(scene, rig[k % len(rig)], t).depth
        d = depthcodec.quantize12(depth, rng)
        back = depthcodec.unpack_yuv420(depthcodec.pack_yuv420(d))
        if not np.array_equal(back.values, d.values):
            print("FAIL: pack/unpack round trip mismatch", file=sys.stderr)
            return 1
        folded += len(depthcodec.encode_lossless(depthcodec.pack_yuv420(d)).payload)
        naive += len(depthcodec.encode_lossless(depthcodec.pack_yuv420_naive(d)).payload)
        raw += d.values.size * 2
        frames += 1
    print(f"{frames} frames, {cfg.width}x{cfg.height}")
    print(f"raw 16-bit bytes:        {raw}")
    print(f"folded+interleaved zlib: {folded} ({folded / raw:.1%} of raw)")
    print(f"naive packing zlib:      {naive} ({naive / raw:.1%} of raw)")
    print(f"round trip: bit-exact")
    return 0


def cmd_bench(args) -> int:
    # motion-to-photon distribution over uniformly-timed viewpoint updates
    cfg = _config(args)
    stub = pipeline.PipelineConfig(
        preset=cfg.preset, n_cameras=cfg.n_cameras, width=cfg.width,
        height=cfg.height, stage=cfg.stage, seed=cfg.seed, render_stub=True)
    sim = pipeline.Simulation(stub)
    rng = np.random.default_rng(cfg.seed)
    period = stub.stage.frame_period_us
    # one update per frame period, arrival offset uniform within the period
    times = (np.arange(args.updates) + rng.uniform(0, 1, size=args.updates)) * period
    pose = sim.rig[len(sim.rig) // 2].pose
    for t in times:
        sim.schedule_viewpoint(float(t), pose)
    report = sim.run((args.updates + 2) * period / 1e6)
    mtp = np.array([m.mtp_ms for m in report.mtp])
    print(f"MTP over {len(mtp)} updates: mean {mtp.mean():.2f} ms, "
          f"min {mtp.min():.2f}, max {mtp.max():.2f} "
          f"(synthesis {stub.stage.synthesis_us / 1e3:.1f} ms, "
          f"period {stub.stage.frame_period_us / 1e3:.1f} ms)")

    # short full run for the bitrate table
    full = pipeline.Simulation(cfg, trajectory=None)
    full.run(args.bitrate_seconds)
    full.report.duration_s = args.bitrate_seconds
    print("stream bitrates (Mbps):")
    for name, mbps in full.report.bitrates_mbps().items():
        print(f"  {name:>16}: {mbps:7.2f}")
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="fvv",
        description="desk-scale free-viewpoint video pipeline",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("sim", help="offline batch run with metrics")
    _add_common(p_sim)
    p_sim.add_argument("--trajectory", default="swing",
                       choices=list(pipeline.TRAJECTORY_KINDS))
    p_sim.add_argument("--duration", type=float, default=12.0, help="seconds")
    p_sim.add_argument("--out", default="out", help="output directory")
    p_sim.set_defaults(fn=cmd_sim)

    p_serve = sub.add_parser("serve", help="live edge service + viewer endpoint")
    _add_common(p_serve)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8765)
    p_serve.set_defaults(fn=cmd_serve, fps=15.0)

    p_codec = sub.add_parser("codec", help="depth codec round trip + benchmark")
    _add_common(p_codec)
    p_codec.add_argument("--frames", type=int, default=20)
    p_codec.set_defaults(fn=cmd_codec)

    p_bench = sub.add_parser("bench", help="latency model + bitrate micro-bench")
    _add_common(p_bench)
    p_bench.add_argument("--updates", type=int, default=10_000)
    p_bench.add_argument("--bitrate-seconds", type=float, default=2.0)
    p_bench.set_defaults(fn=cmd_bench)

    args = ap.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
