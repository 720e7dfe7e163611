"""Command-line front end: seeded data generation, training, calibration,
evaluation, compliance simulation, and report emission over a workspace
directory."""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np
import yaml

from . import bench, compliance, ident, mlp, schemes
from .bench import BenchmarkConfig, Fixtures, TrainedArtifacts, mix_seed
from .friction import FrictionError
from .mlp import ModelError, TrainConfig
from .plant import PlantError, RawLog
from .robot import JointState, PayloadSpec, RobotModelError
from .schemes import CalibratedEstimator, ModelBank, SchemeError
from .signals import Dataset, SignalError, process_log
from .trajectory import TrajectoryError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

DATA_ERRORS = (
    FileNotFoundError,
    PlantError,
    SignalError,
    TrajectoryError,
    SchemeError,
    RobotModelError,
    FrictionError,
    bench.BenchError,
    compliance.ComplianceError,
    yaml.YAMLError,
)
NUMERIC_ERRORS = (ModelError, ident.IdentError, np.linalg.LinAlgError, FloatingPointError)


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliError(message, EXIT_USAGE)


def load_config(path, seed=None, full=False):
    cfg = BenchmarkConfig()
    if path is not None:
        with open(path) as f:
            doc = yaml.safe_load(f) or {}
        fields = {f.name for f in dataclasses.fields(BenchmarkConfig)}
        unknown = set(doc) - fields
        if unknown:
            raise CliError(f"unknown config keys: {sorted(unknown)}", EXIT_USAGE)
        cfg = dataclasses.replace(cfg, **doc)
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=seed)
    if full:
        cfg = dataclasses.replace(cfg, full_scale=True)
    return cfg


class Workspace:
    """Directory layout for one experiment run."""

    def __init__(self, root):
        self.root = Path(root)
        self.data = self.root / "data"
        self.models = self.root / "models"
        self.reports = self.root / "reports"

    def require(self, path, hint):
        if not Path(path).exists():
            raise CliError(f"missing artifact {path}; run `{hint}` first", EXIT_DATA)
        return path


def _fixtures(cfg):
    return Fixtures.default(noise_std=cfg.noise_std,
                            operating_halfwidth=cfg.operating_halfwidth)


def cmd_gen_data(ws: Workspace, cfg: BenchmarkConfig, args):
    fx = _fixtures(cfg)
    ws.data.mkdir(parents=True, exist_ok=True)
    base_logs = bench.collect_excitation_logs(
        fx, PayloadSpec.zero(), cfg.base_minutes, seed=(cfg.seed, "base"),
        payload_id="none",
    )
    from .signals import assemble_dataset

    for k, log in enumerate(base_logs):
        log.save(ws.data / f"excitation_none_{k:03d}.csv")
    assemble_dataset(base_logs, payload_id="none").save(ws.data / "base.npz")
    grid = cfg.payload_grid()
    for i, (pid, payload) in enumerate(grid):
        logs = bench.collect_excitation_logs(
            fx, payload, cfg.excitation_minutes, seed=(cfg.seed, "grid", i),
            payload_id=pid,
        )
        logs += bench.augmentation_logs(fx, cfg, payload, i, payload_id=pid)
        for k, log in enumerate(logs):
            log.save(ws.data / f"excitation_{pid}_{k:03d}.csv")
        assemble_dataset(logs, payload_id=pid).save(ws.data / f"raw_{pid}.npz")
        clog = bench.calibration_log(fx, payload, cfg.noise_std,
                                     seed=(cfg.seed, "pi", i), payload_id=pid)
        clog.save(ws.data / f"calibration_{pid}.csv")
    manifest = {"schema_version": 1,
                "payload_ids": [pid for pid, _ in grid],
                "payloads": {pid: p.p.tolist() for pid, p in grid}}
    with open(ws.data / "manifest.yaml", "w") as f:
        yaml.safe_dump(manifest, f, sort_keys=False)
    print(f"wrote data for {len(grid)} payloads under {ws.data}")
    return EXIT_OK


def _load_manifest(ws):
    path = ws.require(ws.data / "manifest.yaml", "gen-data")
    with open(path) as f:
        doc = yaml.safe_load(f)
    grid = [(pid, PayloadSpec(np.asarray(doc["payloads"][pid])))
            for pid in doc["payload_ids"]]
    return grid


def cmd_train_base(ws, cfg, args):
    ds = Dataset.load(ws.require(ws.data / "base.npz", "gen-data"))
    tc = TrainConfig(epochs=cfg.base_epochs, batch_size=cfg.batch_size,
                     dropout=cfg.dropout, seed=cfg.seed)
    model = schemes.train_base(ds, tc, width=cfg.width)
    ws.models.mkdir(parents=True, exist_ok=True)
    mlp.save_model(model, ws.models / "base.mlp")
    rmse = np.sqrt(np.mean((ds.y - model.predict(ds.x)) ** 2, axis=0))
    print("base model saved; train RMSE [%use]:",
          " ".join(f"{v:.3f}" for v in rmse))
    return EXIT_OK


def _load_base(ws):
    return mlp.load_model(
        ws.require(ws.models / "base.mlp", "train-base"), expect_tag=mlp.TAG_BASE
    )


def _residual_dataset(ws, pid, base):
    raw = Dataset.load(ws.require(ws.data / f"raw_{pid}.npz", "gen-data"))
    y = raw.y - base.predict(raw.x)
    return Dataset(raw.x, y, raw.rate, payload_id=pid, residual_targets=True,
                   t=raw.t, states=raw.states)


def cmd_train_pspm(ws, cfg, args):
    base = _load_base(ws)
    grid = _load_manifest(ws)
    payloads, models, ids = [], [], []
    for i, (pid, payload) in enumerate(grid):
        ds = _residual_dataset(ws, pid, base)
        tc = TrainConfig(epochs=cfg.pspm_epochs, batch_size=cfg.batch_size,
                         dropout=cfg.dropout, seed=cfg.seed + 1 + i)
        models.append(schemes.train_pspm(ds, tc, width=cfg.width))
        payloads.append(payload)
        ids.append(pid)
    bank = ModelBank(payloads, models, ids)
    bank.save(ws.models / "bank")
    print(f"bank of {len(bank)} payload-specific models saved")
    return EXIT_OK


def _payload_pis(ws, grid, base):
    pis = []
    for pid, _ in grid:
        clog = RawLog.load(ws.require(ws.data / f"calibration_{pid}.csv", "gen-data"))
        r = bench.calibration_residuals(clog, base)
        pis.append(schemes.compute_pi(r, payload_id=pid))
    return pis


def cmd_train_papm(ws, cfg, args):
    base = _load_base(ws)
    grid = _load_manifest(ws)
    datasets = [_residual_dataset(ws, pid, base) for pid, _ in grid]
    pis = _payload_pis(ws, grid, base)
    tc = TrainConfig(epochs=cfg.papm_epochs, batch_size=cfg.batch_size,
                     dropout=cfg.dropout, seed=cfg.seed + 101)
    model = schemes.train_papm(datasets, pis, tc, width=cfg.width)
    mlp.save_model(model, ws.models / "papm.mlp")
    print("payload-adaptive model saved")
    return EXIT_OK


def cmd_train_we(ws, cfg, args):
    fx = _fixtures(cfg)
    art = _artifacts(ws, cfg, need=("papm",))
    pid, payload = art.payload_grid[cfg.test_payload_index]
    est = bench.wrench_calibration(art, fx, payload, seed=(cfg.seed, "we"))
    n_episodes = args.episodes if args.episodes is not None else cfg.we_episodes
    episodes = compliance.generate_contact_episodes(
        fx.params, payload, fx.friction, fx.sensors, est,
        n_episodes=n_episodes, seed=mix_seed(cfg.seed, "we-train"),
        sampling_params=compliance.work_region(fx.params),
    )
    tc = TrainConfig(epochs=cfg.we_epochs, batch_size=cfg.batch_size,
                     dropout=0.0, seed=cfg.seed + 202)
    model = compliance.train_we(episodes, tc, width=cfg.width)
    mlp.save_model(model, ws.models / "we.mlp")
    print(f"wrench-estimation model saved ({len(episodes)} training episodes)")
    return EXIT_OK


def _artifacts(ws, cfg, need=("bank", "papm")):
    base = _load_base(ws)
    grid = _load_manifest(ws)
    bank = ModelBank([], [])
    papm = None
    if "bank" in need:
        ws.require(ws.models / "bank" / "bank.yaml", "train-pspm")
        bank = ModelBank.load(ws.models / "bank")
    if "papm" in need:
        papm = mlp.load_model(
            ws.require(ws.models / "papm.mlp", "train-papm"), expect_tag=mlp.TAG_CALIB
        )
    pis = _payload_pis(ws, grid, base)
    return TrainedArtifacts(base, bank, papm, grid, pis, cfg)


SCHEME_FLAG = {"mb": "model-based", "olm": "olm", "pspm": "pspm", "papm": "papm"}


def cmd_calibrate(ws, cfg, args):
    scheme = SCHEME_FLAG[args.scheme]
    need = ("bank", "papm") if scheme in ("pspm", "papm") else ()
    if scheme == "pspm":
        need = ("bank",)
    elif scheme == "papm":
        need = ("papm",)
    art = _artifacts(ws, cfg, need=need)
    fx = _fixtures(cfg)
    pid, payload = art.payload_grid[cfg.test_payload_index]
    if scheme == "pspm" and len(art.bank) == 0:
        raise CliError("empty model bank; run `train-pspm` first", EXIT_DATA)
    estimators, outcomes = bench.calibrate_all(art, fx, payload,
                                               seed=(cfg.seed, "cal"))
    outcome = outcomes[scheme]
    ws.reports.mkdir(parents=True, exist_ok=True)
    out = ws.reports / f"calibration_{args.scheme}.txt"
    with open(out, "w") as f:
        f.write(f"payload_id: {pid}\n")
        f.write("trajectory_duration_s: 4.000\n")
        f.write("trajectory_frames: 400\n")
        f.write(outcome.summary())
    print(f"calibration outcome written to {out}")
    return EXIT_OK


def cmd_evaluate(ws, cfg, args):
    art = _artifacts(ws, cfg)
    fx = _fixtures(cfg)
    report = bench.run_benchmark(art, fx, n_seeds=args.n_seeds)
    ws.reports.mkdir(parents=True, exist_ok=True)
    (ws.reports / "rmse.csv").write_text(report.to_csv())
    print(report.to_text(wall_times=True), end="")
    return EXIT_OK


def cmd_report(ws, cfg, args):
    art = _artifacts(ws, cfg)
    fx = _fixtures(cfg)
    report = bench.run_benchmark(art, fx, n_seeds=args.n_seeds)
    if args.robustness:
        report.extras.update(bench.robustness_extras(art, fx))
    ws.reports.mkdir(parents=True, exist_ok=True)
    (ws.reports / "report.csv").write_text(report.to_csv())
    artifact_paths = sorted(ws.models.glob("**/*")) + sorted(ws.data.glob("*.npz"))
    checksums = bench.checksum_manifest(
        [p for p in artifact_paths if p.is_file()]
    )
    (ws.reports / "checksums.txt").write_text(checksums)
    text = report.to_text() + "\nartifact checksums:\n" + checksums
    (ws.reports / "report.txt").write_text(text)
    print(text, end="")
    return EXIT_OK


def cmd_simulate_compliance(ws, cfg, args):
    art = _artifacts(ws, cfg, need=("papm",))
    fx = _fixtures(cfg)
    pid, payload = art.payload_grid[cfg.test_payload_index]
    estimators, _ = bench.calibrate_all(art, fx, payload, seed=(cfg.seed, "sc"))
    est = estimators["papm"]
    ws.reports.mkdir(parents=True, exist_ok=True)
    if args.mode == "joint":
        q_start = np.deg2rad([0.0, 40.0, 50.0, 45.0, 45.0, 0.0])
        episode = compliance.run_joint_compliance(
            fx.params, payload, fx.friction, fx.sensors, est,
            compliance.ComplianceConfig.default(calibrated=True),
            q_start, args.duration, seed=mix_seed(cfg.seed, "scj"),
        )
        out = ws.reports / "compliance_joint.csv"
        episode.save_csv(out)
        moved = np.mean(np.any(episode.qd_cmd != 0.0, axis=1))
        print(f"joint compliance episode written to {out}; "
              f"{100 * moved:.1f}% frames with commanded motion")
    else:
        we_model = mlp.load_model(
            ws.require(ws.models / "we.mlp", "train-we"), expect_tag=mlp.TAG_WE
        )
        we_est = bench.wrench_calibration(art, fx, payload, seed=(cfg.seed, "we"))
        episodes = compliance.generate_contact_episodes(
            fx.params, payload, fx.friction, fx.sensors, we_est,
            n_episodes=1, seed=mix_seed(cfg.seed, "sct"),
            sampling_params=compliance.work_region(fx.params))
        episode = episodes[0]
        wrench = compliance.estimate_wrench(we_model, episode)
        tcfg = compliance.TaskComplianceConfig()
        steps = []
        for i in range(len(wrench)):
            step = compliance.task_compliance_step(
                tcfg, fx.params, episode.q[i], wrench[i])
            steps.append(step.joint_velocity)
        out = ws.reports / "compliance_task.csv"
        np.savetxt(out, np.asarray(steps), delimiter=",",
                   header=",".join(f"qd{i+1}" for i in range(6)), comments="")
        print(f"task compliance commands written to {out}")
    return EXIT_OK


def cmd_ablate_datasize(ws, cfg, args):
    art = _artifacts(ws, cfg, need=())
    fx = _fixtures(cfg)
    pid = args.payload_id or art.payload_grid[0][0]
    ds = _residual_dataset(ws, pid, art.base)
    curve = bench.ablate_datasize(art, fx, ds, minutes=tuple(args.minutes),
                                  n_seeds=args.n_seeds)
    ws.reports.mkdir(parents=True, exist_ok=True)
    out = ws.reports / "datasize.csv"
    out.write_text(curve.to_csv())
    print(curve.to_csv(), end="")
    return EXIT_OK


def build_parser():
    p = _Parser(prog="payloadcal",
                description="payload calibration toolkit for sensorless "
                            "force estimation on a simulated 6-DOF arm")
    p.add_argument("--workdir", default=".", help="workspace directory")
    p.add_argument("--config", default=None, help="YAML experiment config")
    p.add_argument("--seed", type=int, default=None, help="override config seed")
    p.add_argument("--full", action="store_true",
                   help="full-scale grid and widths (CPU hours)")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("gen-data", help="generate excitation + calibration logs")
    sub.add_parser("train-base", help="train the load-free base model")
    sub.add_parser("train-pspm", help="train the payload-specific bank")
    sub.add_parser("train-papm", help="train the payload-adaptive model")
    we = sub.add_parser("train-we", help="train the wrench-estimation model")
    we.add_argument("--episodes", type=int, default=None)
    cal = sub.add_parser("calibrate", help="calibrate one scheme online")
    cal.add_argument("--scheme", required=True, choices=sorted(SCHEME_FLAG))
    ev = sub.add_parser("evaluate", help="scheme RMSE on the shared test trajectory")
    ev.add_argument("--n-seeds", type=int, default=3)
    rep = sub.add_parser("report", help="full benchmark report with checksums")
    rep.add_argument("--n-seeds", type=int, default=20)
    rep.add_argument("--robustness", action="store_true")
    sc = sub.add_parser("simulate-compliance", help="closed-loop compliance run")
    sc.add_argument("--mode", required=True, choices=("joint", "task"))
    sc.add_argument("--duration", type=float, default=20.0)
    ab = sub.add_parser("ablate-datasize", help="PsPM error vs training size")
    ab.add_argument("--payload-id", default=None)
    ab.add_argument("--minutes", type=int, nargs="+", default=[5, 15, 30])
    ab.add_argument("--n-seeds", type=int, default=3)
    return p


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train-base": cmd_train_base,
    "train-pspm": cmd_train_pspm,
    "train-papm": cmd_train_papm,
    "train-we": cmd_train_we,
    "calibrate": cmd_calibrate,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
    "simulate-compliance": cmd_simulate_compliance,
    "ablate-datasize": cmd_ablate_datasize,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = load_config(args.config, seed=args.seed, full=args.full)
        ws = Workspace(args.workdir)
        return COMMANDS[args.command](ws, cfg, args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except DATA_ERRORS as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NUMERIC_ERRORS as e:
        print(f"numeric error: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
