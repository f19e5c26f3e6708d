"""Command-line entry point: ``rsbg {synth,train,eval,predict,export-plots,gradcheck}``.

Exit codes: 0 success, 1 usage or config error, 2 data or checkpoint error,
3 numerical failure (non-finite training state or a failed gradient check).

Data directories hold ``<scene>.txt`` track files (``frame ped x y`` per line)
and optional ``<scene>.groups.json`` annotations next to them.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .config import DEFAULTS, Config, ConfigError
from .data import (
    DataError,
    GroupAnnotation,
    Scene,
    SyntheticSpec,
    build_windows,
    generate_synthetic,
    parse_group_file,
    parse_track_file,
    write_group_file,
    write_track_file,
)
from .numerics.checkpoint import CheckpointError
from .training import (
    NumericalError,
    evaluate_model,
    leave_one_out,
    load_model,
    prediction_rows,
    split_validation,
    train,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3

log = logging.getLogger("rsbg")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _range(text: str) -> tuple[int, int]:
    """``3`` or ``2,4`` -> inclusive integer range."""
    try:
        parts = [int(p) for p in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected N or LO,HI, got {text!r}") from None
    if len(parts) == 1:
        return parts[0], parts[0]
    if len(parts) == 2:
        return parts[0], parts[1]
    raise argparse.ArgumentTypeError(f"expected N or LO,HI, got {text!r}")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="key = value config file; explicit flags win")
    group = p.add_argument_group("model and training config")
    for key, default in DEFAULTS.items():
        shown = "inf" if default == float("inf") else default
        group.add_argument(f"--{key}", dest=f"cfg:{key}", metavar="V", default=None, help=f"(default {shown})")


def _config_from(args) -> Config:
    cfg = Config.load(args.config) if args.config is not None else Config()
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg:") and v is not None}
    cfg.update(overrides)
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rsbg", description="Pedestrian trajectory forecasting with a recursive social behavior graph.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    _sub = sub.add_parser
    sub.add_parser = lambda name, **kw: _sub(name, parents=[common], **kw)

    p = sub.add_parser("synth", help="generate a labeled synthetic scene")
    p.add_argument("--scenario", default="mixed", help="joining, following, collision_avoidance or mixed")
    p.add_argument("--n-groups", type=_range, default=(2, 3), help="groups per episode, N or LO,HI")
    p.add_argument("--agents", type=_range, default=(2, 3), help="agents per group, N or LO,HI")
    p.add_argument("--noise", type=float, default=0.05, help="position noise std in meters")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--episodes", type=int, default=40)
    p.add_argument("--episode-len", type=int, default=30, help="frames per episode")
    p.add_argument("--name", default="synthetic", help="scene name and file stem")
    p.add_argument("--out-dir", type=Path, default=Path("."))

    p = sub.add_parser("train", help="train on a data directory")
    p.add_argument("--data-dir", type=Path, required=True)
    p.add_argument("--folds", choices=("leave-one-out", "single"), default="single")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    _add_config_flags(p)

    for name, text in (
        ("eval", "ADE/FDE and relation scores of a checkpoint"),
        ("predict", "per-pedestrian predicted coordinates"),
        ("export-plots", "per-window trajectories and R_a matrices for plotting"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("--checkpoint", type=Path, required=True)
        p.add_argument("--data-dir", type=Path, required=True)
        if name == "export-plots":
            p.add_argument("--out-dir", type=Path, required=True)
        else:
            p.add_argument("--out", type=Path, help="write here instead of stdout")

    p = sub.add_parser("gradcheck", help="finite-difference check of every registered op")
    p.add_argument("--seed", type=int, default=0, help="first seed")
    p.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds")
    p.add_argument("--only", nargs="+", metavar="OP", help="restrict to these ops")
    return parser


# ---------------------------------------------------------------------------
# data directories


def load_data_dir(path: Path) -> list[tuple[Scene, Optional[GroupAnnotation]]]:
    if not path.is_dir():
        raise DataError(f"{path}: not a directory")
    scenes = []
    for track_file in sorted(path.glob("*.txt")):
        scene = parse_track_file(track_file)
        group_file = track_file.with_name(f"{track_file.stem}.groups.json")
        ann = None
        if group_file.exists():
            ann = parse_group_file(group_file)
            ann.validate_against(scene)
        scenes.append((scene, ann))
    if not scenes:
        raise DataError(f"{path}: no *.txt track files")
    return scenes


def _windows(scenes, config: Config) -> list:
    t_obs, t_pred = config["data.t_obs"], config["data.t_pred"]
    return [w for s, a in scenes for w in build_windows(s, a, t_obs, t_pred)]


_COLUMNS = ("window_id", "ped_id", "t", "x_hat", "y_hat", "x", "y")


def _tsv(rows: list[dict]) -> str:
    lines = ["\t".join(_COLUMNS)]
    lines += ["\t".join(repr(r[c]) if isinstance(r[c], float) else str(r[c]) for c in _COLUMNS) for r in rows]
    return "\n".join(lines) + "\n"


def _emit(text: str, out: Optional[Path]) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding="utf-8")


# ---------------------------------------------------------------------------
# commands


def cmd_synth(args) -> int:
    spec = SyntheticSpec(
        scenario=args.scenario,
        n_groups=args.n_groups,
        agents_per_group=args.agents,
        noise_std=args.noise,
        seed=args.seed,
        n_episodes=args.episodes,
        episode_len=args.episode_len,
        name=args.name,
    )
    try:
        spec.validate()
    except DataError as exc:
        raise UsageError(str(exc)) from None
    scene, ann = generate_synthetic(spec)
    try:
        args.out_dir.mkdir(parents=True, exist_ok=True)
        write_track_file(scene, args.out_dir / f"{spec.name}.txt")
        write_group_file(ann, args.out_dir / f"{spec.name}.groups.json")
        manifest = {"generator": dataclasses.asdict(spec)}
        blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
        manifest["config_hash"] = hashlib.sha256(blob).hexdigest()[:16]
        (args.out_dir / f"{spec.name}.synth.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    except OSError as exc:
        raise DataError(f"cannot write to {args.out_dir}: {exc}") from exc
    n_windows = len(build_windows(scene, ann))
    n_groups = sum(len(w.groups) for w in ann.windows)
    print(f"{spec.name}: {len(scene.ped_ids)} pedestrians, {n_groups} groups, {len(scene)} points, {n_windows} windows")
    return EXIT_OK


def cmd_train(args) -> int:
    config = _config_from(args)
    scenes = load_data_dir(args.data_dir)
    if config["rsbg.enabled"] and config["rsbg.lambda"] > 0:
        missing = [s.name for s, a in scenes if a is None]
        if missing:
            raise DataError(
                f"no group annotations for {', '.join(missing)}; relation supervision needs them. "
                "Pass --rsbg.lambda 0 to train without it, or generate labeled data with `rsbg synth`."
            )
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "config.ini").write_text(f"# config_hash = {config.hash()}\n" + config.dumps(), encoding="utf-8")
    if args.folds == "leave-one-out":
        if len(scenes) < 2:
            raise UsageError("--folds leave-one-out needs at least two scenes in --data-dir")
        report = leave_one_out(config, scenes, args.out, config["train.val_fraction"])
    else:
        windows = _windows(scenes, config)
        if not windows:
            raise DataError(f"{args.data_dir}: no complete {config['data.t_obs']}+{config['data.t_pred']}-frame windows")
        tr, va = split_validation(windows, config["train.val_fraction"])
        if not tr:
            tr, va = windows, []
        result = train(config, tr, va, args.out, on_epoch=lambda r: log.info("epoch %s", json.dumps(r, sort_keys=True)))
        report, _ = evaluate_model(result.model, va or tr)
    out = {"config_hash": config.hash(), "report": report.to_dict()}
    (args.out / "report.json").write_text(json.dumps(out, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    print(f"ADE {report.ade:.4f}  FDE {report.fde:.4f}  windows {report.n_windows}  -> {args.out}")
    return EXIT_OK


def _load(args):
    model = load_model(args.checkpoint)
    windows = _windows(load_data_dir(args.data_dir), model.config)
    return model, windows


def cmd_eval(args) -> int:
    model, windows = _load(args)
    report, _ = evaluate_model(model, windows)
    out = {"config_hash": model.config.hash(), "checkpoint": str(args.checkpoint), "report": report.to_dict()}
    _emit(json.dumps(out, indent=1, sort_keys=True) + "\n", args.out)
    return EXIT_OK


def cmd_predict(args) -> int:
    model, windows = _load(args)
    _, results = evaluate_model(model, windows)
    _emit(f"# config_hash = {model.config.hash()}\n" + _tsv(prediction_rows(results)), args.out)
    return EXIT_OK


def cmd_export_plots(args) -> int:
    model, windows = _load(args)
    _, results = evaluate_model(model, windows)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    with (args.out_dir / "windows.jsonl").open("w", encoding="utf-8") as fh:
        fh.write(json.dumps({"config_hash": model.config.hash()}) + "\n")
        for r in results:
            w = r.window
            record = {
                "window_id": w.window_id,
                "ped_ids": list(map(int, w.ped_ids)),
                "obs": w.obs.tolist(),
                "fut": w.fut.tolist(),
                "pred": r.pred.tolist(),
                "R_a": None if r.R_a is None else r.R_a.tolist(),
                "group_adj": w.group_adj.tolist() if w.annotated else None,
            }
            fh.write(json.dumps(record) + "\n")
    (args.out_dir / "predictions.tsv").write_text(_tsv(prediction_rows(results)), encoding="utf-8")
    print(f"{len(results)} windows -> {args.out_dir}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradsuite import REGISTRY, format_table, run_suite

    registry = REGISTRY
    if args.only:
        unknown = sorted(set(args.only) - set(REGISTRY))
        if unknown:
            raise UsageError(f"unknown ops {unknown}; choose from {sorted(REGISTRY)}")
        registry = {k: v for k, v in REGISTRY.items() if k in args.only}
    rows = [r for s in range(args.seed, args.seed + args.seeds) for r in run_suite(s, registry)]
    print(format_table(rows))
    failed = [r for r in rows if not r.passed]
    print(f"{len(rows) - len(failed)}/{len(rows)} passed")
    return EXIT_NUMERICAL if failed else EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "export-plots": cmd_export_plots,
    "gradcheck": cmd_gradcheck,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"rsbg {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CheckpointError, OSError) as exc:
        print(f"rsbg {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"rsbg {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
