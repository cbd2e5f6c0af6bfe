"""Command line front end.

Verbs: encode, decode, render, drive, fit, report, rd-sweep. Exit codes:
0 success, 2 invalid argument, 3 decode/integrity error. report and rd-sweep
print CSV to stdout.
"""

import argparse
import io
import sys
from pathlib import Path

import numpy as np

from . import avatar, container, generator, pipeline, pose_space, renderer, synthetic
from .errors import DecodeError
from .loss import FacialWeightConfig, LossWeights, fit_generator
from .weight_quant import QuantConfig


def _parse_q(text: str) -> float:
    if "/" in text:
        num, _, den = text.partition("/")
        return float(num) / float(den)
    return float(text)


def cmd_encode(args):
    template = avatar.load_template(args.template)
    poses = avatar.load_pose_sequence(args.poses)
    weights = generator.load_weights(args.weights)
    camera = renderer.load_camera(args.camera) if args.camera else synthetic.make_camera(
        (args.image_size, args.image_size)
    )
    blob = container.encode_scene(
        template, poses, weights, args.bit_width, _parse_q(args.q),
        (args.resolution, args.resolution), camera,
    )
    Path(args.output).write_bytes(blob)
    print(f"wrote {args.output}: {len(blob)} bytes, {len(poses)} frames")


def cmd_decode(args):
    decoded = container.decode_all(args.input)
    outdir = Path(args.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    if decoded.weights is not None:
        generator.save_weights(decoded.weights, outdir / "weights.hgwt")
        print(f"weights -> {outdir / 'weights.hgwt'}")
    if decoded.poses is not None:
        avatar.save_pose_sequence(decoded.poses, outdir / "poses.hgps")
        print(f"poses -> {outdir / 'poses.hgps'} ({len(decoded.poses)} frames)")
    if decoded.pose_maps is not None:
        arrays = {}
        for i, pm in enumerate(decoded.pose_maps):
            arrays[f"front_{i:04d}"] = pm.front
            arrays[f"back_{i:04d}"] = pm.back
        np.savez_compressed(outdir / "posemaps.npz", **arrays)
        print(f"pose maps -> {outdir / 'posemaps.npz'} ({len(decoded.pose_maps)} frames)")
    if decoded.template is not None:
        avatar.save_template(decoded.template, outdir / "template.hgtm")
        print(f"template -> {outdir / 'template.hgtm'}")


def cmd_render(args):
    decoded = container.decode_all(args.input)
    if decoded.template is None or decoded.weights is None:
        raise DecodeError("container lacks metadata or structural sections")
    camera = renderer.load_camera(args.camera) if args.camera else decoded.camera
    settings = decoded.settings or {}
    res = (settings.get("map_height", 64), settings.get("map_width", 64))
    if decoded.poses is not None and 0 <= args.frame < len(decoded.poses):
        pose = decoded.poses[args.frame]
        posemap = decoded.pose_maps[args.frame] if decoded.pose_maps else None
    else:
        pose = pipeline.canonical_pose(decoded.template)
        posemap = None
    image, _ = pipeline.render_frame(
        decoded.template, pose, decoded.weights, camera,
        map_resolution=res, posemap=posemap,
    )
    renderer.write_ppm(image.color, args.output)
    print(f"wrote {args.output}")


def cmd_drive(args):
    decoded = container.decode_all(args.input)
    if decoded.template is None or decoded.weights is None:
        raise DecodeError("container lacks metadata or structural sections")
    if decoded.poses is None:
        raise DecodeError("container lacks the motion-smplx section needed to fit the pose space")
    novel = avatar.load_pose_sequence(args.poses)
    if not novel:
        raise ValueError("novel pose sequence is empty")
    train = np.stack([p.as_vector() for p in decoded.poses])
    d = min(args.components, train.shape[0], train.shape[1])
    basis = pose_space.fit_pca(train, d, k=args.k)
    settings = decoded.settings or {}
    res = (settings.get("map_height", 64), settings.get("map_width", 64))
    outdir = Path(args.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    dims = decoded.poses[0].dims
    for i, pose in enumerate(novel):
        projected = pose_space.project_clip(basis, pose.as_vector())
        pose_p = avatar.SmplxPose.from_vector(projected, dims, frame_index=i)
        image, _ = pipeline.render_frame(
            decoded.template, pose_p, decoded.weights, decoded.camera, map_resolution=res
        )
        renderer.write_ppm(image.color, outdir / f"frame_{i:04d}.ppm")
    print(f"rendered {len(novel)} driven frames to {outdir}")


def cmd_fit(args):
    scene = synthetic.make_fit_scene(seed=args.scene_seed)
    cfg = FacialWeightConfig(args.alpha, scene.face_mask, 0, args.total_iter or args.iterations)
    weights = LossWeights(args.w_l1, args.w_mask, args.w_lpips, args.w_offset)
    result = fit_generator(scene, args.iterations, weights, cfg, seed=args.seed)
    generator.save_weights(result.weights, args.output)
    print(
        f"fit {args.iterations} iterations: loss {result.history[0]:.6f} -> "
        f"{result.history[-1]:.6f}; wrote {args.output}"
    )


def cmd_report(args):
    rows = container.report_composition(args.input)
    print("layer,bytes,percent")
    for name, size, share in rows:
        print(f"{name},{size},{share:.4f}")


def cmd_rd_sweep(args):
    scene = synthetic.make_scene(
        seed=args.scene_seed, frames=args.frames,
        map_resolution=(args.resolution, args.resolution),
    )
    bit_widths = [int(v) for v in args.bit_widths.split(",")]
    q_values = [_parse_q(v) for v in args.q_values.split(",")]
    for bw in bit_widths:
        QuantConfig(bw)  # validate range before the long loop
    rows = container.rd_sweep(scene, bit_widths, q_values)
    print("Q,q,bytes_per_frame,psnr_db,ssim")
    for row in rows:
        print(
            f"{row['Q']},{row['q']:.8f},{row['bytes_per_frame']:.1f},"
            f"{row['psnr_db']:.4f},{row['ssim']:.6f}"
        )


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gsavatar", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    enc = sub.add_parser("encode", help="encode a template + poses + weights into a container")
    enc.add_argument("--template", required=True)
    enc.add_argument("--poses", required=True)
    enc.add_argument("--weights", required=True)
    enc.add_argument("--output", "-o", required=True)
    enc.add_argument("--bit-width", "-Q", type=int, default=8)
    enc.add_argument("--q", default="1/255", help="pose map quantization step (e.g. 1/255)")
    enc.add_argument("--resolution", type=int, default=256, help="pose map resolution")
    enc.add_argument("--image-size", type=int, default=256, help="default camera image size")
    enc.add_argument("--camera", help="camera file (key-value text)")
    enc.set_defaults(func=cmd_encode)

    dec = sub.add_parser("decode", help="decode all layers of a container to files")
    dec.add_argument("--input", "-i", required=True)
    dec.add_argument("--output-dir", "-o", required=True)
    dec.set_defaults(func=cmd_decode)

    ren = sub.add_parser("render", help="render one frame (or the canonical pose) to PPM")
    ren.add_argument("--input", "-i", required=True)
    ren.add_argument("--output", "-o", required=True)
    ren.add_argument("--frame", type=int, default=-1, help="frame index; omit for canonical pose")
    ren.add_argument("--camera", help="override camera file")
    ren.set_defaults(func=cmd_render)

    drv = sub.add_parser("drive", help="project novel poses into the training space and render")
    drv.add_argument("--input", "-i", required=True)
    drv.add_argument("--poses", required=True, help="novel pose sequence file")
    drv.add_argument("--output-dir", "-o", required=True)
    drv.add_argument("--components", "-d", type=int, default=8)
    drv.add_argument("--k", type=float, default=3.0, help="clip band in standard deviations")
    drv.set_defaults(func=cmd_drive)

    fit = sub.add_parser("fit", help="fit generator weights on the synthetic scene")
    fit.add_argument("--output", "-o", required=True)
    fit.add_argument("--iterations", type=int, default=200)
    fit.add_argument("--alpha", type=float, default=0.2, help="facial attention strength")
    fit.add_argument("--total-iter", type=int, default=0, help="ramp length (default: iterations)")
    fit.add_argument("--w-l1", type=float, default=1.0)
    fit.add_argument("--w-mask", type=float, default=1.0)
    fit.add_argument("--w-lpips", type=float, default=0.1)
    fit.add_argument("--w-offset", type=float, default=0.005)
    fit.add_argument("--seed", type=int, default=0)
    fit.add_argument("--scene-seed", type=int, default=0)
    fit.set_defaults(func=cmd_fit)

    rep = sub.add_parser("report", help="per-layer bitstream composition as CSV")
    rep.add_argument("--input", "-i", required=True)
    rep.set_defaults(func=cmd_report)

    swp = sub.add_parser("rd-sweep", help="rate-distortion sweep over (Q, q) as CSV")
    swp.add_argument("--bit-widths", default="2,3,4,5,6,7,8")
    swp.add_argument("--q-values", default="1/255,2/255,4/255,8/255")
    swp.add_argument("--frames", type=int, default=4)
    swp.add_argument("--resolution", type=int, default=32, help="pose map resolution")
    swp.add_argument("--scene-seed", type=int, default=0)
    swp.set_defaults(func=cmd_rd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except DecodeError as e:
        print(f"decode error: {e}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
