"""Batch orchestration: simulate scenarios, run estimator configurations,
evaluate trajectories and emit comparison tables.

Exit codes: 0 success, 2 input error, 3 refusal (existing output without
--force), 4 numerical divergence. The worker pool for sweeps is capped by
the AQUAFUSE_THREADS environment variable.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import datetime
import json
import math
import os
import sys

import numpy as np

from . import sim
from .backend import BackendConfig, DivergedError, SolverConfig
from .evaluation import (ErrorReport, Trajectory, align_to_truth,
                         error_metrics, preprocess)
from .frontend import (EstimatorMode, NoiseFloors, RunConfig, TrackerConfig,
                       run_estimator)


class RefusalError(RuntimeError):
    """Output already exists and --force was not given."""


# ------------------------------ config loading ----------------------------- #

def run_config_from_dict(data: dict) -> RunConfig:
    data = dict(data)
    mode = EstimatorMode(data.pop("mode", "full"))
    tracker = TrackerConfig(**data.pop("tracker", {}))
    floors = NoiseFloors(**data.pop("floors", {}))
    backend_data = dict(data.pop("backend", {}))
    solver = SolverConfig(**backend_data.pop("solver", {}))
    backend = BackendConfig(solver=solver, **backend_data)
    if data:
        raise ValueError(f"unknown run config keys: {sorted(data)}")
    return RunConfig(mode=mode, tracker=tracker, backend=backend, floors=floors)


def _load_json(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


# ------------------------------ trajectory io ------------------------------ #

def write_trajectory(path: str, frames, navs) -> None:
    with open(path, "w") as fh:
        for fs, nav in zip(frames, navs):
            fh.write(json.dumps({
                "frame_id": fs.frame_id,
                "t": repr(float(fs.t)),
                "R": nav.R.reshape(-1).tolist(),
                "p": nav.p.tolist(),
            }, separators=(",", ":")) + "\n")


def load_trajectory(path: str) -> Trajectory:
    ts, rs, ps = [], [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise sim.ParseError(f"{path}:{lineno}: invalid JSON") from exc
            for key in ("t", "R", "p"):
                if key not in rec:
                    raise sim.ParseError(f"{path}:{lineno}: missing field '{key}'")
            ts.append(float(rec["t"]))
            rs.append(np.array(rec["R"], dtype=float).reshape(3, 3))
            ps.append(np.array(rec["p"], dtype=float))
    if not ts:
        raise sim.ParseError(f"{path}: empty trajectory")
    return Trajectory(np.array(ts), np.stack(rs), np.stack(ps))


def truth_trajectory(dataset_path: str) -> Trajectory:
    ds = sim.read_dataset(dataset_path)
    ts = np.array([g.t for g in ds.groundtruth])
    rs = np.stack([g.R for g in ds.groundtruth])
    ps = np.stack([g.p for g in ds.groundtruth])
    return Trajectory(ts, rs, ps)


# -------------------------------- subcommands ------------------------------ #

def cmd_simulate(args) -> int:
    cfg_data = _load_json(args.config) if args.config else {}
    cfg = sim.ScenarioConfig.from_dict(cfg_data)
    if args.seed is not None:
        cfg.seed = args.seed
    if os.path.exists(args.out):
        if not args.force:
            raise RefusalError(f"output directory {args.out} exists "
                               "(use --force to overwrite)")
    ds = sim.simulate(cfg)
    sim.write_dataset(ds, args.out)
    print(f"wrote {args.out}: kind={cfg.kind} duration={cfg.duration_s}s "
          f"seed={cfg.seed}")
    print(f"  imu={len(ds.imu)} dvl={len(ds.dvl)} pressure={len(ds.pressure)} "
          f"frames={len(ds.frames)} groundtruth={len(ds.groundtruth)}")
    return 0


def _estimate_to_dir(dataset_dir: str, out_dir: str, cfg: RunConfig) -> None:
    ds = sim.read_dataset(dataset_dir)
    result = run_estimator(ds, cfg)
    os.makedirs(out_dir, exist_ok=True)
    write_trajectory(os.path.join(out_dir, "trajectory.jsonl"),
                     result.frames, result.navs)
    with open(os.path.join(out_dir, "status.csv"), "w") as fh:
        fh.write("frame,t,status,features,cost\n")
        for frame_id, t, status, feats, cost in result.status_rows:
            cost_s = "nan" if math.isnan(cost) else f"{cost:.9e}"
            fh.write(f"{frame_id},{t!r},{status},{feats},{cost_s}\n")
    with open(os.path.join(out_dir, "bias.csv"), "w") as fh:
        fh.write("t,bvx,bvy,bvz,bgx,bgy,bgz,bax,bay,baz\n")
        for kf in result.keyframes:
            vals = np.concatenate([kf.state.bv, kf.state.bg, kf.state.ba])
            fh.write(f"{kf.t!r}," + ",".join(f"{v:.9e}" for v in vals) + "\n")


def cmd_estimate(args) -> int:
    cfg = run_config_from_dict(_load_json(args.config)) if args.config \
        else RunConfig()
    if args.mode is not None:
        cfg.mode = EstimatorMode(args.mode)
    if os.path.exists(args.out) and not args.force:
        raise RefusalError(f"output directory {args.out} exists "
                           "(use --force to overwrite)")
    _estimate_to_dir(args.dataset, args.out, cfg)
    print(f"wrote {args.out} (mode={cfg.mode.value})")
    return 0


def _evaluate_pair(truth: Trajectory, est: Trajectory, name: str) -> ErrorReport:
    truth_p, est_p = preprocess([truth, est])
    aligned, _ = align_to_truth(est_p, truth_p)
    return error_metrics(aligned, truth_p, sequence=name)


def cmd_evaluate(args) -> int:
    truth = truth_trajectory(args.truth) if os.path.isdir(args.truth) \
        else load_trajectory(args.truth)
    names = args.names.split(",") if args.names else None
    if names and len(names) != len(args.estimates):
        raise ValueError("--names count must match the number of estimates")
    reports = []
    for i, est_path in enumerate(args.estimates):
        path = est_path
        if os.path.isdir(path):
            path = os.path.join(path, "trajectory.jsonl")
        name = names[i] if names else os.path.basename(est_path.rstrip("/"))
        reports.append(_evaluate_pair(truth, load_trajectory(path), name))
    os.makedirs(args.out, exist_ok=True)
    _write_reports(args.out, reports, not args.no_header_timestamp)
    for r in reports:
        print(f"{r.sequence}: t_rmse={r.translation_rmse_m:.4f} m "
              f"r_rmse={r.rotation_rmse_deg:.4f} deg over {r.length_m:.1f} m")
    return 0


def _write_reports(out_dir: str, reports: list[ErrorReport],
                   header_timestamp: bool) -> None:
    payload = {"reports": [r.to_dict() for r in reports]}
    if header_timestamp:
        payload["generated_at"] = datetime.datetime.now(
            datetime.timezone.utc).isoformat()
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    with open(os.path.join(out_dir, "report.csv"), "w") as fh:
        if header_timestamp:
            fh.write(f"# generated_at {payload['generated_at']}\n")
        fh.write(ErrorReport.csv_header() + "\n")
        for r in reports:
            fh.write(r.csv_row() + "\n")
    for r in reports:
        series = os.path.join(out_dir, f"series_{r.sequence}.csv")
        with open(series, "w") as fh:
            fh.write("t,translation_error_m,rotation_error_deg\n")
            for t, te, re_ in zip(r.series_t, r.series_translation_m,
                                  r.series_rotation_deg):
                fh.write(f"{t!r},{te:.9e},{re_:.9e}\n")


def _worker_count() -> int:
    env = os.environ.get("AQUAFUSE_THREADS")
    if env:
        return max(int(env), 1)
    return max(os.cpu_count() or 1, 1)


def _sweep_cell(cell):
    dataset_dir, run_dir, run_cfg_data, mode, name = cell
    cfg = run_config_from_dict(run_cfg_data)
    cfg.mode = EstimatorMode(mode)
    _estimate_to_dir(dataset_dir, run_dir, cfg)
    truth = truth_trajectory(dataset_dir)
    est = load_trajectory(os.path.join(run_dir, "trajectory.jsonl"))
    report = _evaluate_pair(truth, est, f"{name}:{mode}")
    row = report.to_dict()
    row["scenario"] = name
    row["mode"] = mode
    return row


def cmd_sweep(args) -> int:
    spec = _load_json(args.config)
    scenarios = spec.get("scenarios")
    modes = spec.get("modes", ["full"])
    if not scenarios:
        raise ValueError("sweep config needs a nonempty 'scenarios' list")
    run_cfg_data = spec.get("run_config", {})
    os.makedirs(args.out, exist_ok=True)

    cells = []
    for entry in scenarios:
        name = entry["name"]
        s_cfg = sim.ScenarioConfig.from_dict(entry.get("config", {}))
        dataset_dir = os.path.join(args.out, name, "dataset")
        if not os.path.exists(dataset_dir):
            sim.write_dataset(sim.simulate(s_cfg), dataset_dir)
        for mode in modes:
            run_dir = os.path.join(args.out, name, mode)
            cells.append((dataset_dir, run_dir, run_cfg_data, mode, name))

    workers = min(_worker_count(), len(cells))
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_cell, cells))
    else:
        rows = [_sweep_cell(c) for c in cells]
    rows.sort(key=lambda r: (r["scenario"], r["mode"]))

    with open(os.path.join(args.out, "sweep_report.csv"), "w") as fh:
        fh.write("scenario,mode,length_m,t_rmse_m,t_std_m,r_rmse_deg,r_std_deg\n")
        for r in rows:
            fh.write(f"{r['scenario']},{r['mode']},{r['length_m']:.3f},"
                     f"{r['translation_rmse_m']:.6f},{r['translation_std_m']:.6f},"
                     f"{r['rotation_rmse_deg']:.6f},{r['rotation_std_deg']:.6f}\n")
    with open(os.path.join(args.out, "sweep_report.json"), "w") as fh:
        json.dump({"rows": rows}, fh, indent=2)
        fh.write("\n")
    print(f"sweep complete: {len(rows)} cells -> {args.out}/sweep_report.csv")
    return 0


# ----------------------------------- main ----------------------------------- #

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aquafuse",
        description="Underwater visual-inertial-acoustic-depth state "
                    "estimation on synthetic scenarios")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate a scenario dataset")
    p_sim.add_argument("--config", help="scenario config JSON")
    p_sim.add_argument("--out", required=True, help="output dataset directory")
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--force", action="store_true")
    p_sim.set_defaults(func=cmd_simulate)

    p_est = sub.add_parser("estimate", help="run the estimator on a dataset")
    p_est.add_argument("dataset", help="dataset directory")
    p_est.add_argument("--out", required=True)
    p_est.add_argument("--mode", choices=[m.value for m in EstimatorMode])
    p_est.add_argument("--config", help="run config JSON")
    p_est.add_argument("--force", action="store_true")
    p_est.set_defaults(func=cmd_estimate)

    p_eval = sub.add_parser("evaluate", help="compare estimates to truth")
    p_eval.add_argument("--truth", required=True,
                        help="dataset directory or trajectory file")
    p_eval.add_argument("estimates", nargs="+",
                        help="trajectory files or run directories")
    p_eval.add_argument("--out", required=True)
    p_eval.add_argument("--names", help="comma-separated sequence names")
    p_eval.add_argument("--no-header-timestamp", action="store_true")
    p_eval.set_defaults(func=cmd_evaluate)

    p_sweep = sub.add_parser("sweep", help="batch over a scenario x mode grid")
    p_sweep.add_argument("--config", required=True, help="sweep config JSON")
    p_sweep.add_argument("--out", required=True)
    p_sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except RefusalError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return 3
    except DivergedError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return 4
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
