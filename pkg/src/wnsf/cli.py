"""Command-line front end: simulate datasets, identify models, run Monte
Carlo campaigns, and compute asymptotic covariance bounds.

Experiments are described by a JSON config file validated against a strict
schema (unknown keys are rejected).  Every command that writes results also
writes an echo of the effective configuration alongside, so each artifact is
self-describing.

Exit codes: 0 success, 2 config error, 3 simulation infeasible,
4 identification failed, 5 bound computation failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import jsonschema
import numpy as np

from .crb import (
    GRID_SIZE_DEFAULT,
    NonInformativeError,
    SpectrumModel,
    compute_mcl,
    compute_mcr,
    mbar_limit,
)
from .estimator import IdentificationError, ModelOrders, WnsfOptions, wnsf_identify
from .lti import BjModel, Polynomial, RationalFilter, UnstableFilterError
from .metrics import McExperiment, run_monte_carlo
from .simulate import LOOP_KINDS, DataSet, LoopConfig, UnstableLoopError, generate

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SIMULATION = 3
EXIT_IDENTIFICATION = 4
EXIT_BOUND = 5

log = logging.getLogger("wnsf")

_COEFFS = {"type": "array", "items": {"type": "number"}, "minItems": 1}

_FILTER_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {"num": _COEFFS, "den": _COEFFS},
    "required": ["num"],
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["system", "experiment"],
    "properties": {
        "system": {
            "type": "object",
            "additionalProperties": False,
            "required": ["F", "L"],
            "properties": {"F": _COEFFS, "L": _COEFFS, "C": _COEFFS, "D": _COEFFS},
        },
        "controller": _FILTER_SCHEMA,
        "reference": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "num": _COEFFS,
                "den": _COEFFS,
                "gain": {"type": "number"},
            },
        },
        "noise": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "std": {"type": "number", "minimum": 0},
                "snr_target": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "experiment": {
            "type": "object",
            "additionalProperties": False,
            "required": ["N"],
            "properties": {
                "loop_kind": {"enum": list(LOOP_KINDS)},
                "N": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
            },
        },
        "wnsf": {
            "type": "object",
            "additionalProperties": False,
            "required": ["orders"],
            "properties": {
                "orders": {
                    "type": "array",
                    "items": {"type": "integer", "minimum": 0},
                    "minItems": 4,
                    "maxItems": 4,
                },
                "n_grid": {
                    "type": "array",
                    "items": {"type": "integer", "minimum": 1},
                    "minItems": 1,
                },
                "max_iter": {"type": "integer", "minimum": 1},
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "delta_reg": {"type": "number", "exclusiveMinimum": 0},
                "known_zero_ic": {"type": "boolean"},
                "estimate_noise_model": {"type": "boolean"},
            },
        },
        "crb": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["full", "reference_only", "finite_order"]},
                "grid_size": {"type": "integer", "minimum": 2},
                "n": {"type": "integer", "minimum": 1},
            },
        },
    },
}


class ConfigError(ValueError):
    pass


def _field_path(err: jsonschema.ValidationError) -> str:
    path = [str(p) for p in err.absolute_path]
    if err.validator == "required":
        # point at the missing field itself, not just its parent object
        missing = err.message.split("'")[1]
        path.append(missing)
    return ".".join(path) or "(root)"


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        lines = [f"{_field_path(e)}: {e.message}" for e in errors]
        raise ConfigError("invalid config:\n  " + "\n  ".join(lines))
    return doc


def _poly(coeffs) -> Polynomial:
    return Polynomial(np.asarray(coeffs, dtype=float))


def _filter_from(section, default: RationalFilter) -> RationalFilter:
    if section is None:
        return default
    num = _poly(section["num"])
    den = _poly(section.get("den", [1.0]))
    return RationalFilter(num, den)


def loop_config_from(doc: dict, seed_override=None) -> LoopConfig:
    sys_sec = doc["system"]
    try:
        system = BjModel(
            L=_poly(sys_sec["L"]),
            F=_poly(sys_sec["F"]),
            C=_poly(sys_sec.get("C", [1.0])),
            D=_poly(sys_sec.get("D", [1.0])),
        )
        controller = _filter_from(
            doc.get("controller"), RationalFilter(_poly([0.0]))
        )
        reference = _filter_from(doc.get("reference"), RationalFilter(_poly([1.0])))
    except ValueError as exc:
        raise ConfigError(str(exc))
    ref_sec = doc.get("reference") or {}
    noise = doc.get("noise") or {}
    exp = doc["experiment"]
    seed = exp.get("seed", 0) if seed_override is None else seed_override
    try:
        return LoopConfig(
            system=system,
            controller=controller,
            reference_filter=reference,
            reference_gain=float(ref_sec.get("gain", 1.0)),
            noise_std=float(noise.get("std", 1.0)),
            N=int(exp["N"]),
            seed=int(seed),
            loop_kind=exp.get("loop_kind", "closed"),
            snr_target=noise.get("snr_target"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc))


def wnsf_settings_from(doc: dict):
    sec = doc.get("wnsf")
    if sec is None:
        raise ConfigError("wnsf: section is required for this command")
    orders = ModelOrders(*sec["orders"])
    kwargs = {}
    for key in ("n_grid", "max_iter", "tol", "delta_reg",
                "known_zero_ic", "estimate_noise_model"):
        if key in sec:
            kwargs[key] = tuple(sec[key]) if key == "n_grid" else sec[key]
    return orders, WnsfOptions(**kwargs)


def parse_orders(text: str) -> ModelOrders:
    parts = text.split(",")
    if len(parts) != 4:
        raise ConfigError("--orders expects four integers m_f,m_l,m_c,m_d")
    try:
        return ModelOrders(*(int(p) for p in parts))
    except ValueError as exc:
        raise ConfigError(f"--orders: {exc}")


def parse_n_grid(text: str):
    """Either a comma list '50,100,150' or a range 'start:stop:step'
    (stop inclusive)."""
    try:
        if ":" in text:
            parts = [int(p) for p in text.split(":")]
            if len(parts) == 2:
                start, stop, step = parts[0], parts[1], 1
            elif len(parts) == 3:
                start, stop, step = parts
            else:
                raise ValueError("expected start:stop[:step]")
            if step < 1 or stop < start:
                raise ValueError("need stop >= start and step >= 1")
            return tuple(range(start, stop + 1, step))
        return tuple(int(p) for p in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"--n-grid: {exc}")


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _echo_config(doc: dict, cfg: LoopConfig, path):
    effective = dict(doc)
    effective["effective"] = {
        "seed": cfg.seed,
        "noise_std": cfg.noise_std,
        "loop_kind": cfg.loop_kind,
        "N": cfg.N,
    }
    _write_json(path, effective)


def cmd_simulate(args) -> int:
    doc = load_config(args.config)
    cfg = loop_config_from(doc, seed_override=args.seed)
    try:
        data = generate(cfg)
    except (UnstableLoopError, UnstableFilterError, ZeroDivisionError) as exc:
        log.error("simulation infeasible: %s", exc)
        print(f"error: simulation infeasible: {exc}", file=sys.stderr)
        return EXIT_SIMULATION
    if not args.with_noise:
        data = DataSet(r=data.r, u=data.u, y=data.y, seed=data.seed,
                       loop_kind=data.loop_kind)
    data.to_csv(args.out)
    _echo_config(doc, cfg, args.out + ".config.json")
    log.info("wrote %d samples to %s", data.N, args.out)
    return EXIT_OK


def cmd_identify(args) -> int:
    orders = parse_orders(args.orders)
    options = WnsfOptions(
        n_grid=parse_n_grid(args.n_grid),
        max_iter=args.max_iter,
        tol=args.tol,
        known_zero_ic=args.known_zero_ic,
    )
    try:
        data = DataSet.from_csv(args.data)
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(f"cannot load data: {exc}")
    try:
        est = wnsf_identify(data, orders, options)
    except IdentificationError as exc:
        print(f"error: identification failed: {exc}", file=sys.stderr)
        for n, reason in sorted(exc.diagnostics.items()):
            print(f"  n={n}: {reason}", file=sys.stderr)
        return EXIT_IDENTIFICATION
    payload = est.to_json()
    if args.out:
        _write_json(args.out, payload)
    else:
        json.dump(payload, sys.stdout, indent=2, sort_keys=True)
        print()
    return EXIT_OK


def cmd_montecarlo(args) -> int:
    doc = load_config(args.config)
    cfg = loop_config_from(doc)
    orders, options = wnsf_settings_from(doc)
    try:
        generate(cfg)  # fail fast on an infeasible loop before the campaign
    except (UnstableLoopError, UnstableFilterError, ZeroDivisionError) as exc:
        print(f"error: simulation infeasible: {exc}", file=sys.stderr)
        return EXIT_SIMULATION
    exp = McExperiment(loop=cfg, orders=orders, options=options,
                       base_seed=cfg.seed)
    result = run_monte_carlo(exp, runs=args.runs, parallelism=args.jobs)
    os.makedirs(args.out_dir, exist_ok=True)
    result.write_csv(os.path.join(args.out_dir, "runs.csv"))
    result.write_json(os.path.join(args.out_dir, "aggregate.json"))
    _echo_config(doc, cfg, os.path.join(args.out_dir, "config.json"))
    agg = result.aggregate()
    log.info("monte carlo aggregate: %s", agg)
    if result.failures == len(result.runs):
        print("error: every Monte Carlo run failed", file=sys.stderr)
        return EXIT_IDENTIFICATION
    json.dump(agg, sys.stdout, indent=2, sort_keys=True)
    print()
    return EXIT_OK


def cmd_crb(args) -> int:
    doc = load_config(args.config)
    cfg = loop_config_from(doc)
    crb_sec = doc.get("crb") or {}
    kind = args.kind or crb_sec.get("kind", "full")
    grid = args.grid_size or crb_sec.get("grid_size", GRID_SIZE_DEFAULT)
    sm = SpectrumModel.from_loop_config(cfg)
    try:
        if kind == "full":
            res = compute_mcr(sm, grid_size=grid)
            payload = res.to_json()
        elif kind == "reference_only":
            M = compute_mcl(sm, grid_size=grid)
            payload = {"M": M.tolist(), "grid_size": grid, "kind": kind}
        else:
            n = args.n or crb_sec.get("n", 200)
            M = mbar_limit(sm, n=n, grid_size=grid)
            payload = {"M": M.tolist(), "grid_size": grid, "kind": kind, "n": n}
    except (NonInformativeError, np.linalg.LinAlgError) as exc:
        print(f"error: bound computation failed: {exc}", file=sys.stderr)
        return EXIT_BOUND
    if args.out:
        _write_json(args.out, payload)
    else:
        json.dump(payload, sys.stdout, indent=2, sort_keys=True)
        print()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wnsf",
        description="Box-Jenkins identification by weighted null-space fitting",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate an input/output dataset")
    p.add_argument("config", help="JSON experiment config")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--seed", type=int, default=None,
                   help="override the config seed")
    p.add_argument("--with-noise", action="store_true",
                   help="include the realized noise column e in the CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("identify", help="fit a model to a dataset CSV")
    p.add_argument("--data", required=True, help="dataset CSV (t,r,u,y[,e])")
    p.add_argument("--orders", required=True, metavar="MF,ML,MC,MD")
    p.add_argument("--n-grid", default="50:300:50",
                   help="comma list or start:stop:step range (stop inclusive)")
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--known-zero-ic", action="store_true",
                   help="data starts from zero initial conditions")
    p.add_argument("--out", default=None, help="write the estimate JSON here")
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("montecarlo", help="run a seeded identification campaign")
    p.add_argument("config", help="JSON experiment config with a wnsf section")
    p.add_argument("--runs", type=int, required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_montecarlo)

    p = sub.add_parser("crb", help="compute the asymptotic covariance bound")
    p.add_argument("config", help="JSON experiment config")
    p.add_argument("--grid-size", type=int, default=None)
    p.add_argument("--kind", choices=["full", "reference_only", "finite_order"],
                   default=None)
    p.add_argument("--n", type=int, default=None,
                   help="truncation order for the finite-order bound")
    p.add_argument("--out", default=None, help="write the report JSON here")
    p.set_defaults(func=cmd_crb)
    return parser


def _setup_logging():
    level = os.environ.get("WNSF_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
