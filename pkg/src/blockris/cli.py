"""Command-line front end: ``detect``, ``wsr``, ``trace`` and ``config``.

Exit codes: 0 success, 2 validation error, 3 I/O error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import io
import json
import logging
import math
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from blockris.channel_model import SystemDims
from blockris.crpa import CrpaConfig
from blockris.errors import InvalidParameterError, NumericError
from blockris.evaluation import (
    ScenarioConfig,
    SetPolicy,
    detection_summary,
    trace_run,
    wsr_summaries,
)
from blockris.sync_detect import ZcConfig

log = logging.getLogger("blockris")

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4
LN2 = math.log(2.0)
SWEEP_AXES = ("snr_db", "pilot_snr_db", "p_block", "alpha")

_NESTED = {"dims": SystemDims, "zc": ZcConfig, "crpa": CrpaConfig}


class ConfigIOError(OSError):
    pass


# ---------------------------------------------------------------------------
# config (de)serialization


def config_to_dict(cfg: ScenarioConfig) -> dict[str, Any]:
    d = dataclasses.asdict(cfg)
    for key in ("alpha",):
        if isinstance(d[key], tuple):
            d[key] = list(d[key])
    if d["crpa"]["weights"] is not None:
        d["crpa"]["weights"] = list(d["crpa"]["weights"])
    return d


def _build(cls, data: dict, prefix: str):
    if not isinstance(data, dict):
        raise InvalidParameterError(f"{prefix.rstrip('.')}: expected an object")
    names = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in names:
            raise InvalidParameterError(f"{prefix}{key}: unknown field")
        if key in _NESTED and cls is ScenarioConfig:
            kwargs[key] = _build(_NESTED[key], value, f"{key}.")
            continue
        if key == "weights" and value is not None:
            value = tuple(value)
        if key == "alpha" and isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except InvalidParameterError as exc:
        message = str(exc)
        raise InvalidParameterError(message if prefix in message else f"{prefix}{message}") from None
    except TypeError as exc:
        raise InvalidParameterError(f"{prefix}: {exc}") from None


def config_from_dict(data: dict) -> ScenarioConfig:
    return _build(ScenarioConfig, data, "")


def load_config(path: str | Path | None) -> ScenarioConfig:
    if path is None:
        return ScenarioConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigIOError(f"cannot read config {path}: {exc.strerror or exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidParameterError(f"{path}: invalid JSON ({exc})") from None
    return config_from_dict(data)


def dump_config(cfg: ScenarioConfig) -> str:
    return json.dumps(config_to_dict(cfg), indent=2) + "\n"


# ---------------------------------------------------------------------------
# sweeps and CSV


def parse_sweep(text: str) -> list[float]:
    """``start:stop:step`` (stop inclusive) or a comma-separated list."""
    text = text.strip()
    if not text:
        raise InvalidParameterError("sweep: empty grid")
    try:
        if ":" in text:
            parts = [float(p) for p in text.split(":")]
            if len(parts) != 3:
                raise InvalidParameterError(f"sweep: expected start:stop:step, got {text!r}")
            start, stop, step = parts
            if not step > 0:
                raise InvalidParameterError(f"sweep: step must be > 0, got {step}")
            if stop < start:
                raise InvalidParameterError(f"sweep: stop {stop} is below start {start}")
            n = int(math.floor((stop - start) / step + 1e-9)) + 1
            return [round(start + i * step, 12) for i in range(n)]
        values = [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise InvalidParameterError(f"sweep: cannot parse {text!r}") from None
    if not values:
        raise InvalidParameterError("sweep: empty grid")
    return values


def fmt(x) -> str:
    if isinstance(x, (tuple, list)):
        return ";".join(fmt(v) for v in x)
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return format(float(x), ".12g")


def write_csv(path: str | Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(v if isinstance(v, str) else fmt(v) for v in row) + "\n")
    try:
        Path(path).write_text(buf.getvalue())
    except OSError as exc:
        raise ConfigIOError(f"cannot write {path}: {exc.strerror or exc}") from None


def _sweep_cfg(cfg: ScenarioConfig, axis: str, value: float) -> ScenarioConfig:
    if axis not in SWEEP_AXES:
        raise InvalidParameterError(f"axis: must be one of {', '.join(SWEEP_AXES)}")
    return cfg.with_(**{axis: value})


# ---------------------------------------------------------------------------
# commands

DETECT_HEADER = ["snr_db", "mean_jaccard", "stderr", "trials", "K", "M", "p_block", "alpha"]
WSR_HEADER = ["snr_db", "policy", "mean_wsr_bits", "stderr", "trials"]
TRACE_HEADER = ["iter", "wsr_bits", "wmmse_obj", "backtracks"]


def cmd_detect(cfg: ScenarioConfig, sweep: Sequence[float], out, axis: str = "pilot_snr_db", jobs: int = 1):
    rows = []
    for value in sweep:
        point = _sweep_cfg(cfg, axis, value)
        s = detection_summary(point, jobs)
        log.info("detect %s=%s mean_jaccard=%.4f", axis, value, s.mean)
        rows.append([point.pilot_snr_db, s.mean, s.stderr, s.trials, point.dims.K, point.dims.M, point.p_block, point.alpha])
    write_csv(out, DETECT_HEADER, rows)
    return rows


def cmd_wsr(cfg: ScenarioConfig, sweep: Sequence[float], policies: Sequence[SetPolicy], out, jobs: int = 1):
    rows = []
    for value in sweep:
        point = cfg.with_(snr_db=value)
        res = wsr_summaries(point, policies, jobs)
        for p in policies:
            s = res[p]["summary"]
            log.info("wsr snr_db=%s policy=%s mean=%.4f bits", value, p.value, s.mean / LN2)
            rows.append([value, p.value, s.mean / LN2, s.stderr / LN2, s.trials])
    write_csv(out, WSR_HEADER, rows)
    return rows


def cmd_trace(cfg: ScenarioConfig, snr_db: float, out, policy: SetPolicy = SetPolicy.GENIE, trial: int = 0):
    trace = trace_run(cfg.with_(snr_db=snr_db), policy, trial)
    rows = [
        [t, w / LN2, j, sum(b)]
        for t, (w, j, b) in enumerate(zip(trace.wsr, trace.wmmse_obj, trace.backtrack_counts), start=1)
    ]
    write_csv(out, TRACE_HEADER, rows)
    return rows


def parse_policies(text: str) -> list[SetPolicy]:
    names = [p for p in text.split(",") if p.strip()]
    if not names:
        raise InvalidParameterError("policies: empty list")
    return [SetPolicy.parse(p) for p in names]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="blockris", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, sweep=True):
        p.add_argument("--config", help="scenario JSON (defaults are used when omitted)")
        if sweep:
            p.add_argument("--sweep", required=True, help="start:stop:step or comma-separated values")
        p.add_argument("--trials", type=int, help="override the config trial count")
        p.add_argument("--seed", type=int, help="override the config base seed")
        p.add_argument("--jobs", type=int, default=1, help="worker processes")
        p.add_argument("--out", required=True, help="output CSV path")

    d = sub.add_parser("detect", help="Jaccard index of blockage detection")
    common(d)
    d.add_argument("--axis", default="pilot_snr_db", choices=SWEEP_AXES)

    w = sub.add_parser("wsr", help="realized weighted sum rate per set policy versus SNR")
    common(w)
    w.add_argument("--policies", default="estimated,genie,oblivious,random-phase,none")

    t = sub.add_parser("trace", help="per-iteration WSR and WMMSE objective of one run")
    common(t, sweep=False)
    t.add_argument("--snr-db", type=float, default=None)
    t.add_argument("--policy", default="genie")
    t.add_argument("--trial", type=int, default=0)

    c = sub.add_parser("config", help="write the default (or given) config as JSON")
    c.add_argument("--config")
    c.add_argument("--out", required=True)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config)
        overrides = {}
        if getattr(args, "trials", None) is not None:
            overrides["trials"] = args.trials
        if getattr(args, "seed", None) is not None:
            overrides["base_seed"] = args.seed
        if overrides:
            cfg = cfg.with_(**overrides)
        if args.command == "config":
            try:
                Path(args.out).write_text(dump_config(cfg))
            except OSError as exc:
                raise ConfigIOError(f"cannot write {args.out}: {exc.strerror or exc}") from None
        elif args.command == "detect":
            cmd_detect(cfg, parse_sweep(args.sweep), args.out, args.axis, args.jobs)
        elif args.command == "wsr":
            cmd_wsr(cfg, parse_sweep(args.sweep), parse_policies(args.policies), args.out, args.jobs)
        elif args.command == "trace":
            snr = cfg.snr_db if args.snr_db is None else args.snr_db
            cmd_trace(cfg, snr, args.out, SetPolicy.parse(args.policy), args.trial)
    except InvalidParameterError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
