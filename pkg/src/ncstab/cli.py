"""Command-line front end.

Problems are described by a TOML file validated against
``schemas/config-v1.json``; reports are JSON documents validated against
``schemas/report-v1.json`` and sweeps are CSV tables.  Exit status: 0 on
success, 2 for config or schema problems, 3 for requests outside the
supported scope, 4 for numerical failures.
"""
from __future__ import annotations

import argparse
import contextlib
import copy
import csv
import io
import itertools
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import config as tolconfig
from .channel import DelayChannelSpec, statistics_from_spec
from .errors import (DimensionError, DomainError, NcstabError, SchemaError, ScopeError)
from .mcsim import SimConfig, simulate_loop
from .msstab import LoopDescription, ms_stability_test
from .synthesis import (DecoupledNMP, ExampleFamily, GeneralMP, blaschke_inner_balanced,
                        example1_region, example1_region_margin, example1_rho_closed, family_kind,
                        stabilizability, sufficient_check_cor2, synthesize_controller)
from .sysrep import StateSpace, TransferMatrix

SCHEMA_VERSION = 1
CSV_DIGITS = 12


@lru_cache(maxsize=None)
def load_schema(name: str) -> dict:
    text = resources.files("ncstab").joinpath("schemas", f"{name}-v{SCHEMA_VERSION}.json").read_text()
    return json.loads(text)


def _validate(doc: dict, schema_name: str, what: str) -> None:
    validator = jsonschema.Draft202012Validator(load_schema(schema_name))
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        lines = []
        for e in errors[:10]:
            where = "/".join(str(p) for p in e.absolute_path) or "<root>"
            lines.append(f"  {where}: {e.message}")
        raise SchemaError(f"{what} does not match the schema:\n" + "\n".join(lines))


# --------------------------------------------------------------------------
# Config loading


def read_config(path: str | Path) -> dict:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except OSError as exc:
        raise SchemaError(f"cannot read config {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise SchemaError(f"{path}: {exc}") from None
    validate_config(doc)
    doc["_base_dir"] = str(path.parent)
    return doc


def validate_config(doc: dict) -> None:
    _validate({k: v for k, v in doc.items() if not k.startswith("_")}, "config", "config")


@dataclass
class Problem:
    family: object
    plant: StateSpace
    specs: list
    channels: list
    controller: StateSpace | None
    noise: np.ndarray
    tol: tolconfig.Tolerances
    profile: str
    raw: dict


@contextlib.contextmanager
def _field(path: str):
    """Re-raise construction errors as schema errors naming the config field."""
    try:
        yield
    except (ScopeError, SchemaError):
        raise
    except (DomainError, DimensionError, TypeError, KeyError) as exc:
        raise SchemaError(f"{path}: {exc}") from exc
    except ValueError as exc:
        if isinstance(exc, NcstabError):
            raise
        raise SchemaError(f"{path}: {exc}") from exc


def _state_space(d: dict) -> StateSpace:
    return StateSpace.from_dict(d)


def _build_plant(p: dict):
    kind = p["kind"]
    if kind == "example":
        fam = ExampleFamily(p["lam"], p["s1"], p["s2"], p.get("tau1", 1), p.get("tau2", 1))
        return fam, fam.plant()
    if kind == "state-space":
        base = _state_space(p)
    else:
        base = TransferMatrix.from_coeffs([[(e["num"], e["den"]) for e in row]
                                           for row in p["entries"]]).to_ss()
    if "delays" in p:
        fam = GeneralMP(base, tuple(p["delays"]))
        return fam, fam.plant()
    if "zeros" in p:
        fam = DecoupledNMP(base, tuple(p["zeros"]))
        return fam, fam.plant()
    return None, base


def _build_channel(c: dict) -> DelayChannelSpec:
    model = c.get("model", "general")
    if model == "dropout":
        return DelayChannelSpec.dropout(c["loss"])
    if model == "one-step-delay":
        return DelayChannelSpec.one_step_delay(c["p_delay"], c["alpha"])
    return DelayChannelSpec(tuple(c["pmf"]), tuple(c["weights"]) if "weights" in c else None)


def load_controller_file(path: str | Path) -> StateSpace:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"cannot read controller file {path}: {exc}") from None
    _validate(doc, "report", f"controller file {path}")
    if doc["command"] != "synthesize":
        raise SchemaError(f"{path} is a {doc['command']} report, not a controller")
    return StateSpace.from_dict(doc["result"]["controller"])


def _build_controller(c: dict, base_dir: str) -> StateSpace:
    kind = c["kind"]
    if kind == "static":
        return StateSpace.static(c["gain"])
    if kind == "file":
        path = Path(c["path"])
        return load_controller_file(path if path.is_absolute() else Path(base_dir) / path)
    return _state_space(c)


def build_problem(doc: dict, need_controller: bool = False, need_stats: bool = True) -> Problem:
    prof = os.environ.get(tolconfig.ENV_VAR, "default")
    try:
        tol = tolconfig.profile(prof)
    except KeyError as exc:
        raise SchemaError(f"{tolconfig.ENV_VAR}: {exc.args[0]}") from None
    with _field("tolerances"):
        tol = tol.replace(**doc.get("tolerances", {}))
    with _field("plant"):
        family, plant = _build_plant(doc["plant"])
    specs = []
    for i, c in enumerate(doc["channels"]):
        with _field(f"channels/{i}"):
            specs.append(_build_channel(c))
    if len(specs) != plant.n_in:
        raise SchemaError(f"channels: {len(specs)} channels given for a plant with "
                          f"{plant.n_in} inputs")
    channels = [statistics_from_spec(s, tol) for s in specs] if need_stats else []
    controller = None
    if "controller" in doc:
        with _field("controller"):
            controller = _build_controller(doc["controller"], doc.get("_base_dir", "."))
        if controller.n_out != plant.n_in or controller.n_in != plant.n_out:
            raise SchemaError(f"controller: shape {controller.n_out}x{controller.n_in} does not "
                              f"fit a plant with {plant.n_out} outputs and {plant.n_in} inputs")
    elif need_controller:
        raise SchemaError("controller: this command needs a [controller] table")
    noise = np.ones(plant.n_in)
    if "noise" in doc:
        if len(doc["noise"]) != plant.n_in:
            raise SchemaError(f"noise: expected {plant.n_in} variances, got {len(doc['noise'])}")
        noise = np.asarray(doc["noise"], dtype=float)
    return Problem(family, plant, specs, channels, controller, noise, tol, prof, doc)


# --------------------------------------------------------------------------
# Commands


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to ``None``."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def make_report(command: str, result: dict, prob: Problem) -> dict:
    doc = {"schema_version": SCHEMA_VERSION, "command": command,
           "tolerance_profile": prob.profile, "result": _clean(result)}
    _validate(doc, "report", "emitted report")
    return doc


def _loop(prob: Problem) -> LoopDescription:
    with _field("plant"):
        return LoopDescription(prob.plant, prob.controller, prob.channels, prob.noise)


def _require_family(prob: Problem):
    if prob.family is None:
        raise ScopeError("plant: stabilizability needs a structured family "
                         "(kind = \"example\", or a base model with delays or zeros)")
    return prob.family


def cmd_channel_stats(prob: Problem, args) -> dict:
    return make_report("channel-stats", {"channels": [
        dict(ch.to_dict(), spec=ch.spec.to_dict()) for ch in prob.channels]}, prob)


def cmd_analyze(prob: Problem, args) -> dict:
    rep = ms_stability_test(_loop(prob), prob.tol)
    return make_report("analyze", rep.to_dict(), prob)


def _cor2(prob: Problem) -> dict:
    fam = _require_family(prob)
    section = prob.raw.get("cor2")
    if not section:
        raise SchemaError("cor2: the diagonal-inner sufficient test needs a [cor2] table with "
                          "unstable_poles or inners")
    m = prob.plant.n_in
    if "inners" in section:
        inners = [StateSpace.from_dict(d) for d in section["inners"]]
    else:
        with _field("cor2/unstable_poles"):
            inners = [blaschke_inner_balanced(p) for p in section.get("unstable_poles", [])]
    if len(inners) != m:
        raise SchemaError(f"cor2: expected {m} diagonal inner factors, got {len(inners)}")
    zeros = [v if k == "zero" else None for k, v in fam.column_weights()]
    if any(k == "delay" and v != 1 for k, v in fam.column_weights()):
        raise ScopeError("cor2: the sufficient test covers decoupled zeros without extra delays")
    res = sufficient_check_cor2(inners, zeros, prob.channels, prob.tol)
    return {"method": "cor2-sufficient", "stabilizable": True if res.stabilizable else None,
            "flags": list(res.flags), "margins": list(res.margins)}


def _optimizer_kw(prob: Problem) -> dict:
    return dict(prob.raw.get("optimizer", {}))


def cmd_stabilizability(prob: Problem, args) -> dict:
    if args.method == "cor2":
        return make_report("stabilizability", _cor2(prob), prob)
    fam = _require_family(prob)
    method = "auto" if args.method == "auto" else args.method
    rep = stabilizability(fam, prob.channels, method, prob.tol, **_optimizer_kw(prob))
    out = rep.to_dict()
    if not args.trace:
        out.pop("optimizer_trace")
    return make_report("stabilizability", out, prob)


def cmd_synthesize(prob: Problem, args) -> dict:
    fam = _require_family(prob)
    if family_kind(fam) != "thm2":
        raise ScopeError("synthesize: only the input-delay (minimum-phase) family is supported")
    res = synthesize_controller(fam, prob.channels, tol=prob.tol)
    loop = LoopDescription(prob.plant, res.controller, prob.channels, prob.noise)
    achieved = ms_stability_test(loop, prob.tol)
    out = res.to_dict()
    out["achieved_rho"] = achieved.rho if achieved.nominal_stable else None
    print(f"achieved rho = {achieved.rho:.6g} (mu(Gamma*) = {res.mu:.6g})", file=sys.stderr)
    return make_report("synthesize", out, prob)


def cmd_simulate(prob: Problem, args) -> dict:
    sim = dict(prob.raw.get("simulation", {}))
    for key in ("steps", "trials", "seed", "burn_in", "jobs"):
        if getattr(args, key, None) is not None:
            sim[key] = getattr(args, key)
    sim["record_xcorr"] = bool(args.xcorr)
    sim["trajectory_path"] = args.trajectory
    with _field("simulation"):
        cfg = SimConfig(**sim)
    loop = _loop(prob)
    rep = simulate_loop(loop, prob.specs, cfg, prob.tol)
    pred = ms_stability_test(loop, prob.tol).powers
    out = rep.to_dict()
    out.update(predicted_powers=None if pred is None else pred.tolist(),
               steps=cfg.steps, trials=cfg.trials, seed=cfg.seed)
    return make_report("simulate", out, prob)


# --------------------------------------------------------------------------
# Sweeps


def parse_grid(texts: list) -> list:
    """``var=lo:hi:n`` items (comma separated or repeated) to ``[(var, values)]``."""
    grid = []
    for text in texts:
        for item in filter(None, (s.strip() for s in text.split(","))):
            name, sep, rng = item.partition("=")
            if not sep or not name:
                raise SchemaError(f"--grid: cannot parse {item!r}; expected var=lo:hi:n")
            parts = rng.split(":")
            try:
                if len(parts) == 1:
                    values = np.array([float(parts[0])])
                elif len(parts) == 3:
                    n = int(parts[2])
                    if n < 1:
                        raise ValueError
                    values = np.linspace(float(parts[0]), float(parts[1]), n)
                else:
                    raise ValueError
            except ValueError:
                raise SchemaError(f"--grid: bad range {rng!r} for {name}; expected lo:hi:n") from None
            grid.append((name.strip(), values))
    if not grid:
        raise SchemaError("--grid: no variables given")
    return grid


def _resolve(doc: dict, name: str):
    """Return ``(container, key)`` for a dotted path such as ``channels.0.p_delay``."""
    node = doc
    keys = name.split(".")
    for k in keys[:-1]:
        node = _step(node, k, name)
    last = keys[-1]
    if isinstance(node, list):
        idx = _index(node, last, name)
        return node, idx
    if not isinstance(node, dict) or last not in node:
        raise SchemaError(f"--grid: variable {name!r} does not resolve in the config")
    return node, last


def _index(node: list, k: str, name: str) -> int:
    try:
        i = int(k)
        node[i]
    except (ValueError, IndexError):
        raise SchemaError(f"--grid: variable {name!r} does not resolve in the config") from None
    return i


def _step(node, k, name):
    if isinstance(node, list):
        return node[_index(node, k, name)]
    if isinstance(node, dict) and k in node:
        return node[k]
    raise SchemaError(f"--grid: variable {name!r} does not resolve in the config")


def _is_example1(doc: dict) -> bool:
    p, ch = doc["plant"], doc["channels"]
    return (p["kind"] == "example" and abs(p["s1"]) > 1 and abs(p["s2"]) > 1 and len(ch) == 2
            and ch[0].get("model") == "one-step-delay" and ch[1].get("model") == "dropout")


def sweep_header(grid: list, target: str, example1: bool) -> list:
    cols = [name for name, _ in grid] + ["rho_min"]
    if target == "rho-inverse":
        cols.append("rho_min_inverse")
    cols.append("stabilizable")
    if example1:
        cols += ["region_stabilizable", "region_margin", "closed_form_rho_min"]
    cols.append("status")
    return cols


def _grid_point(task) -> list:
    doc, point, target, example1 = task
    doc = copy.deepcopy(doc)
    for name, value in point:
        node, key = _resolve(doc, name)
        current = node[key]
        if isinstance(current, bool) or not isinstance(current, (int, float)):
            raise SchemaError(f"--grid: {name!r} is not a numeric config value")
        if isinstance(current, int):
            if abs(value - round(value)) > 1e-9:
                raise SchemaError(f"--grid: {name!r} is an integer field; {value} is not integral")
            value = int(round(value))
        node[key] = value
    validate_config({k: v for k, v in doc.items() if not k.startswith("_")})
    try:
        prob = build_problem(doc)
        rep = stabilizability(_require_family(prob), prob.channels, "auto", prob.tol,
                              **_optimizer_kw(prob))
        rho, stabilizable, status = rep.rho_min, rep.stabilizable, "ok"
    except NcstabError as exc:
        # a numerical failure at one point (e.g. W not invertible) must not sink the sweep
        if exc.exit_code != 4:
            raise
        rho, stabilizable, status = math.nan, None, type(exc).__name__
    row = [v for _, v in point] + [rho]
    if target == "rho-inverse":
        row.append(math.nan if math.isnan(rho) else 1.0 / rho if rho > 0 else math.inf)
    row.append(stabilizable)
    if example1:
        p, ch = doc["plant"], doc["channels"]
        args = (p["lam"], p["s1"], p["s2"], ch[0]["p_delay"], ch[1]["loss"], ch[0]["alpha"])
        row += [example1_region(*args), example1_region_margin(*args), example1_rho_closed(*args)]
    row.append(status)
    return row


def format_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.{CSV_DIGITS}g}"


def run_sweep(doc: dict, grid: list, target: str, jobs: int = 1) -> str:
    example1 = _is_example1(doc)
    names = [n for n, _ in grid]
    for n in names:
        _resolve(doc, n)
    points = [list(zip(names, vals)) for vals in itertools.product(*[v for _, v in grid])]
    tasks = [(doc, pt, target, example1) for pt in points]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_grid_point, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        rows = [_grid_point(t) for t in tasks]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(sweep_header(grid, target, example1))
    for row in rows:
        writer.writerow([format_cell(v) for v in row])
    return buf.getvalue()


def cmd_sweep(doc: dict, args) -> str:
    return run_sweep(doc, parse_grid(args.grid), args.target, args.jobs)


# --------------------------------------------------------------------------
# Entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ncstab", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {_version()}")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("config", help="problem config (TOML)")
        p.add_argument("-o", "--output", help="write the report here instead of stdout")
        return p

    add("channel-stats", "moments, spectral density, spectral factor and W per channel")
    add("analyze", "mean-square stability of the loop with the configured controller")
    p = add("stabilizability", "stabilization radius rho_min over all controllers")
    p.add_argument("--method", choices=["thm2", "thm3", "cor2", "auto"], default="auto")
    p.add_argument("--trace", action="store_true", help="include the optimizer trace")
    add("synthesize", "controller attaining rho_min for the input-delay family")
    p = add("simulate", "Monte Carlo run of the configured loop")
    p.add_argument("--steps", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--burn-in", dest="burn_in", type=int)
    p.add_argument("--xcorr", action="store_true", help="estimate channel-noise cross-correlations")
    p.add_argument("--trajectory", help="dump trial 0 step by step to this text file")
    p.add_argument("--jobs", type=int, help="worker processes for independent trials")
    p = add("sweep", "rho_min over a grid of config values, as CSV")
    p.add_argument("--grid", action="append", required=True,
                   help="var=lo:hi:n, dotted config path (e.g. channels.0.p_delay=0.05:0.95:60)")
    p.add_argument("--target", choices=["region", "rho", "rho-inverse"], default="rho")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    return ap


def _version() -> str:
    from . import __version__
    return __version__


COMMANDS = {"channel-stats": cmd_channel_stats, "analyze": cmd_analyze,
            "stabilizability": cmd_stabilizability, "synthesize": cmd_synthesize,
            "simulate": cmd_simulate}


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        doc = read_config(args.config)
        if args.command == "sweep":
            text = cmd_sweep(doc, args)
        else:
            prob = build_problem(doc, need_controller=args.command in ("analyze", "simulate"))
            text = json.dumps(COMMANDS[args.command](prob, args), indent=2) + "\n"
    except NcstabError as exc:
        print(f"ncstab: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except np.linalg.LinAlgError as exc:
        print(f"ncstab: numerical failure: {exc}", file=sys.stderr)
        return 4
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
