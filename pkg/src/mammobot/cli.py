"""Command-line front end.

Every command writes ``metrics.json`` (sorted keys, no timestamps, so a
rerun with the same scenario and seed is byte-identical) and
``report.json`` (adds wall time and the artifact list). Errors exit with
status 2 and print a JSON error record.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import pipeline as pl
from .errors import MammobotError
from .imaging import Roi, bmode, cnr, read_raster, write_pgm, write_raster
from .scenario import ScenarioConfig
from .simworld import true_us_calibration

log = logging.getLogger("mammobot")


def _load_scenario(args) -> ScenarioConfig:
    sc = ScenarioConfig.load(args.scenario) if args.scenario else ScenarioConfig()
    if args.seed is not None:
        sc = sc.with_seed(args.seed)
    return sc


def _dump(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


def _finish(args, command: str, metrics: dict, artifacts: list, t0: float, seed=None, extra=None) -> int:
    out = Path(args.out)
    body = {
        "command": command,
        "scenario": str(args.scenario) if getattr(args, "scenario", None) else "default",
        "seed": seed,
        "metrics": metrics,
    }
    if extra:
        body.update(extra)
    artifacts = [str(a) for a in artifacts] + [str(out / "metrics.json")]
    _dump(out / "metrics.json", body)
    report = dict(body, artifacts=sorted(artifacts), wall_time_s=round(time.perf_counter() - t0, 3))
    _dump(out / "report.json", report)
    failed = bool(extra and extra.get("failures"))
    print(json.dumps({"command": command, "ok": not failed, "out": str(out)}))
    return 1 if failed else 0


# commands


def cmd_calibrate(args) -> int:
    t0 = time.perf_counter()
    sc = _load_scenario(args)
    out = Path(args.out)
    arts = []
    if args.kind == "handeye":
        x, m = pl.calibrate_handeye(sc)
        arts.append(_dump(out / "t_ec.json", x.to_dict()))
    elif args.kind == "us":
        init = true_us_calibration(sc) if args.init == "truth" else None
        cal, rep, m = pl.calibrate_us(sc, init=init)
        m["stop_reason_" + rep.reason] = pl.metric(1, "flag")
        arts.append(_dump(out / "us_calibration.json", cal.to_dict()))
        rep.write_trace(out / "trace.csv")
        arts.append(out / "trace.csv")
    else:
        model, m = pl.calibrate_force(sc, degree=args.degree)
        arts.append(_dump(out / "bias_model.json", model.to_dict()))
    return _finish(args, f"calibrate {args.kind}", m, arts, t0, sc.seed)


def _rois(res: pl.TrialResult, sc: ScenarioConfig, lesion: int) -> dict:
    vol = res.volume.frames
    f, row, col, _ = res.peak
    shape = vol.shape[1:]
    us_t = Roi.centered(row, col, 2, shape)
    bg_row = row + 150 if row + 150 + 10 < shape[0] else row - 150
    us_b = Roi.centered(bg_row, col, 10, shape)
    xc = sc.xray
    u, v = res.mammogram.lesions_px[lesion]
    half = int(xc.lesion_radius_mm / xc.pixel_size / np.sqrt(2.0))
    xshape = (xc.rows, xc.cols)
    x_t = Roi.centered(v, u, half, xshape)
    x_b = Roi.centered(v, u + 3 * half + 10, half, xshape)
    as_list = lambda r: [r.row0, r.col0, r.rows, r.cols]  # noqa: E731
    return {
        "us": {"target": as_list(us_t), "background": as_list(us_b)},
        "xray": {"target": as_list(x_t), "background": as_list(x_b)},
    }


def cmd_scan(args) -> int:
    t0 = time.perf_counter()
    sc = _load_scenario(args)
    out = Path(args.out)
    res = pl.run_trial(sc, 0, args.lesion, render_xray=True)
    arts = []
    res.scan_log.write_csv(out / "scan_log.csv")
    arts.append(out / "scan_log.csv")
    arts.append(_dump(out / "path.json", [np.round(q, 12).tolist() for q in res.path]))
    sx, sy = sc.us_scale
    arts += write_raster(out / "volume", res.volume.frames, axial=sy, lateral=sx, elevational=res.volume.frame_spacing)
    arts += write_raster(out / "xray", res.mammogram.image, pixel=sc.xray.pixel_size)
    arts.append(write_pgm(out / "peak_frame.pgm", res.volume.frames[res.peak[0]], 0.0, 1.0))
    arts.append(write_pgm(out / "xray.pgm", res.mammogram.image))
    arts.append(_dump(out / "rois.json", _rois(res, sc, args.lesion)))
    m = dict(res.metrics)
    lo, hi = 0.95 * sc.control.f_target, 1.05 * sc.control.f_target
    m["force_mean_in_envelope"] = pl.metric(int(lo <= m["force_mean"]["value"] <= hi), "bool")
    log.info("force %.3f +- %.3f N", m["force_mean"]["value"], m["force_std"]["value"])
    return _finish(args, "scan", m, arts, t0, sc.seed, {"lesion": args.lesion})


def cmd_repeatability(args) -> int:
    t0 = time.perf_counter()
    sc = _load_scenario(args)
    out = Path(args.out)
    m, rows, failures = pl.repeatability(sc, args.trials, args.lesion)
    path = out / "errors.csv"
    with open(path, "w") as fh:
        fh.write("trial,e_x,e_y,e_depth\n")
        for r in rows:
            fh.write(f"{r[0]},{r[1]:.9g},{r[2]:.9g},{r[3]:.9g}\n")
    return _finish(args, "repeatability", m, [path], t0, sc.seed, {"lesion": args.lesion, "failures": failures})


def _roi(v) -> Roi:
    return Roi(*[int(x) for x in v])


def cmd_cnr(args) -> int:
    t0 = time.perf_counter()
    vol, _ = read_raster(args.volume)
    xr, _ = read_raster(args.xray)
    rois = json.loads(Path(args.roi).read_text())
    ut, ub = _roi(rois["us"]["target"]), _roi(rois["us"]["background"])
    xt, xb = _roi(rois["xray"]["target"]), _roi(rois["xray"]["background"])
    per_frame = [cnr(fr, ut, ub) for fr in vol]
    x_cnr = cnr(xr[0], xt, xb)
    out = Path(args.out)
    path = out / "cnr_frames.csv"
    with open(path, "w") as fh:
        fh.write("frame,cnr\n")
        for i, c in enumerate(per_frame):
            fh.write(f"{i},{c:.9g}\n")
    m = {
        "us_frames": pl.metric(len(per_frame), "count"),
        "us_cnr_mean": pl.metric(np.mean(per_frame), "ratio"),
        "us_cnr_max": pl.metric(np.max(per_frame), "ratio"),
        "us_cnr_min": pl.metric(np.min(per_frame), "ratio"),
        "xray_cnr": pl.metric(x_cnr, "ratio"),
        "us_over_xray": pl.metric(np.mean(per_frame) / x_cnr, "ratio"),
    }
    return _finish(args, "cnr", m, [path], t0)


def cmd_bmode(args) -> int:
    t0 = time.perf_counter()
    rf, meta = read_raster(args.rf)
    out = Path(args.out)
    if args.global_norm:
        from .imaging import bmode_volume, RfFrame

        sp = meta.get("spacings", {})
        frames = [RfFrame(f, sp.get("axial", 1.0), sp.get("lateral", 1.0)) for f in rf]
        img = bmode_volume(frames, sp.get("elevational", 1.0), args.dynamic_range).frames
    else:
        img = np.stack([bmode(f, args.dynamic_range) for f in rf])
    arts = list(write_raster(out / "bmode", img, **meta.get("spacings", {})))
    arts.append(write_pgm(out / "bmode_mid.pgm", img[len(img) // 2], 0.0, 1.0))
    m = {
        "frames": pl.metric(len(img), "count"),
        "mean_intensity": pl.metric(np.mean(img), "normalized"),
    }
    return _finish(args, "bmode", m, arts, t0)


def cmd_scenario(args) -> int:
    sc = _load_scenario(args)
    path = Path(args.out) / "scenario.json"
    sc.save(path)
    print(json.dumps({"command": "scenario", "ok": True, "out": str(path)}))
    return 0


# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mammobot", description="Calibration, registration and scan simulation.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scenario=True):
        if scenario:
            sp.add_argument("--scenario", type=Path, default=None, help="scenario JSON (default: built-in)")
            sp.add_argument("--seed", type=int, default=None, help="overrides the scenario seed")
        sp.add_argument("--out", type=Path, default=Path("out"), help="output directory")

    c = sub.add_parser("calibrate", help="run one calibration against simulated data")
    c.add_argument("kind", choices=["handeye", "us", "force"])
    c.add_argument("--init", choices=["nominal", "truth"], default="nominal", help="US solver start point")
    c.add_argument("--degree", type=int, default=3, help="Bernstein degree for the force model")
    common(c)
    c.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("scan", help="navigate to a lesion and scan it")
    s.add_argument("--lesion", type=int, default=0)
    common(s)
    s.set_defaults(func=cmd_scan)

    r = sub.add_parser("repeatability", help="repeat the navigated scan from varied start poses")
    r.add_argument("--trials", type=int, default=10)
    r.add_argument("--lesion", type=int, default=0)
    common(r)
    r.set_defaults(func=cmd_repeatability)

    k = sub.add_parser("cnr", help="contrast-to-noise ratios of a US volume and an X-ray")
    k.add_argument("--volume", type=Path, required=True, help="B-mode volume raster (path without suffix)")
    k.add_argument("--xray", type=Path, required=True, help="X-ray raster (path without suffix)")
    k.add_argument("--roi", type=Path, required=True, help="ROI JSON")
    common(k, scenario=False)
    k.set_defaults(func=cmd_cnr)

    b = sub.add_parser("bmode", help="convert an RF raster to B-mode")
    b.add_argument("--rf", type=Path, required=True, help="RF raster (path without suffix)")
    b.add_argument("--dynamic-range", type=float, default=60.0)
    b.add_argument("--global-norm", action="store_true", help="normalise by the volume maximum")
    common(b, scenario=False)
    b.set_defaults(func=cmd_bmode)

    d = sub.add_parser("scenario", help="write the scenario JSON")
    common(d)
    d.set_defaults(func=cmd_scenario)
    return p


def main(argv=None) -> int:
    level = os.environ.get("MAMMOBOT_LOG", "error").upper()
    logging.basicConfig(level=getattr(logging, level, logging.ERROR), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    args.out.mkdir(parents=True, exist_ok=True)
    try:
        return args.func(args)
    except (MammobotError, ValueError, OSError, IndexError, KeyError) as exc:
        code = getattr(exc, "code", type(exc).__name__)
        rec = {"command": args.command, "ok": False, "error": {"code": code, "message": str(exc)}}
        _dump(args.out / "error.json", rec)
        print(json.dumps(rec), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
