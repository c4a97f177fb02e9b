"""Command line front end: ``run``, ``check``, ``gamma`` and ``sweep``.

Exit codes: 0 success, 2 usage or config error, 3 runtime error
(capacity, accuracy, convergence), 4 check-suite failure.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import io
import json
import math
import os
from pathlib import Path
import shutil
import sys
import tempfile

import numpy as np
import yaml

from . import __version__, config
from .errors import (ConfigError, FockCollapseError, InputError, ModelError,
                     RegistryError, ScenarioError)

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_CHECK = 0, 2, 3, 4
ENV_OUTPUT = "FOCKCOLLAPSE_OUTPUT_DIR"
DEFAULT_OUTPUT = "fockcollapse-out"
USAGE_ERRORS = (ConfigError, InputError, ScenarioError, ModelError, RegistryError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


# -- serialization ------------------------------------------------------------

def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


def dumps_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, allow_nan=False) + "\n"


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


def dumps_csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    now = (_dt.datetime.fromtimestamp(int(epoch), _dt.timezone.utc) if epoch
           else _dt.datetime.now(_dt.timezone.utc))
    return now.replace(microsecond=0).isoformat()


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _output_dir(flag, cfg) -> Path:
    if flag:
        return Path(flag)
    if cfg is not None and cfg.execution.get("output_dir"):
        return Path(cfg.execution["output_dir"])
    return Path(os.environ.get(ENV_OUTPUT) or DEFAULT_OUTPUT)


def _manifest(cfg, started, extra=None) -> dict:
    m = {
        "schema": "fockcollapse/manifest/1",
        "engine_version": __version__,
        "config_path": cfg.path,
        "config_sha256": cfg.digest,
        "effective_config_sha256": cfg.effective_digest(),
        "root_seed": cfg.execution["seed"],
        "process": cfg.kind,
        "started_utc": started,
        "finished_utc": _timestamp(),
    }
    if extra:
        m.update(extra)
    return m


def _apply_overrides(cfg, args):
    if getattr(args, "seed", None) is not None:
        cfg = config.with_value(cfg, "execution.seed", args.seed)
    if getattr(args, "trials", None) is not None:
        cfg = config.with_value(cfg, "execution.trials", args.trials)
    return cfg


def run_config(cfg, out_dir: Path, extra_manifest=None):
    from .runners import execute
    started = _timestamp()
    res = execute(cfg)
    files = {"results.csv": dumps_csv(res.columns, res.rows), "summary.json": dumps_json(res.summary)}
    files.update(res.files)
    _write_tree(Path(out_dir), files, _manifest(cfg, started, extra_manifest))
    return res


# -- subcommands ------------------------------------------------------------

def cmd_run(args) -> int:
    cfg = _apply_overrides(config.load(args.config), args)
    out = _output_dir(args.output, cfg)
    res = run_config(cfg, out)
    print(f"{cfg.kind}: wrote {out}/results.csv ({len(res.rows)} rows), summary.json, manifest.json")
    return EXIT_OK


def _flatten(obj, prefix=""):
    out = {}
    if isinstance(obj, dict):
        for k, v in obj.items():
            out.update(_flatten(v, f"{prefix}{k}."))
    elif isinstance(obj, (list, tuple)):
        if all(not isinstance(v, (dict, list, tuple)) for v in obj) and len(obj) > 8:
            return {}
        for i, v in enumerate(obj):
            out.update(_flatten(v, f"{prefix}{i}."))
    else:
        out[prefix[:-1]] = obj
    return out


def cmd_sweep(args) -> int:
    if not args.values:
        raise ConfigError("sweep needs at least one value")
    cfg = _apply_overrides(config.load(args.config), args)
    values = [yaml.safe_load(v) for v in args.values]
    configs = [config.with_value(cfg, args.param, v) for v in values]   # all validated up front
    out = _output_dir(args.output, cfg)
    from .runners import execute
    started = _timestamp()
    results = [execute(c) for c in configs]
    files = {}
    table = []
    for k, (v, c, res) in enumerate(zip(values, configs, results)):
        sub = f"value_{k:03d}"
        files[f"{sub}/results.csv"] = dumps_csv(res.columns, res.rows)
        files[f"{sub}/summary.json"] = dumps_json(res.summary)
        for name, text in res.files.items():
            files[f"{sub}/{name}"] = text
        flat = _flatten(_jsonable(res.summary))
        table.append({"index": k, "value": v, **{key: val for key, val in flat.items()
                                                  if not isinstance(val, (dict, list))}})
    cols = []
    for row in table:
        cols += [c for c in row if c not in cols]
    files["sweep.csv"] = dumps_csv(cols, [[row.get(c) for c in cols] for row in table])
    _write_tree(out, files, _manifest(cfg, started, {"sweep_parameter": args.param,
                                                     "sweep_values": values}))
    print(f"sweep {args.param}: {len(values)} runs, combined table {out}/sweep.csv")
    return EXIT_OK


def _write_tree(out: Path, files: dict, manifest: dict):
    """Stage every file (plus the manifest) then move them into ``out``;
    an error before this point leaves nothing behind."""
    flat = dict(files)
    out.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=".staging-", dir=out))
    try:
        listing = []
        for name, text in flat.items():
            p = stage / name
            p.parent.mkdir(parents=True, exist_ok=True)
            data = text.encode("utf-8")
            p.write_bytes(data)
            listing.append({"file": name, "sha256": _sha256(data), "bytes": len(data)})
        (stage / "manifest.json").write_text(dumps_json(dict(manifest, outputs=listing)), encoding="utf-8")
        for name in list(flat) + ["manifest.json"]:
            dest = out / name
            dest.parent.mkdir(parents=True, exist_ok=True)
            os.replace(stage / name, dest)
    finally:
        shutil.rmtree(stage, ignore_errors=True)


def cmd_check(args) -> int:
    from . import checks
    if args.suite not in checks.SUITES:
        raise ConfigError(f"unknown suite '{args.suite}'; choose from {', '.join(checks.SUITES)}")
    results = checks.run_suite(args.suite)
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    if args.json:
        Path(args.json).write_text(dumps_json({"suite": args.suite, "passed": ok,
                                               "results": [r.as_dict() for r in results]}))
    print(f"{args.suite}: {sum(r.passed for r in results)}/{len(results)} passed")
    return EXIT_OK if ok else EXIT_CHECK


def cmd_gamma(args) -> int:
    from .collapse import is_unistochastic, read_gamma_table
    G, labels = read_gamma_table(args.matrix)
    res = is_unistochastic(G, tol=args.tol, seed=args.seed)
    out = {"verdict": res.label, "reason": res.reason, "labels": labels}
    if res.witness is not None:
        out["witness_error"] = res.witness_error
        out["witness"] = {"re": np.real(res.witness).tolist(), "im": np.imag(res.witness).tolist()}
    print(dumps_json(out), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fockcollapse", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="execute a scenario config")
    r.add_argument("config")
    r.add_argument("-o", "--output", help=f"output directory (overrides config and ${ENV_OUTPUT})")
    r.add_argument("--seed", type=int, help="override execution.seed")
    r.add_argument("--trials", type=int, help="override execution.trials")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("check", help="run an invariant check suite")
    c.add_argument("suite", help="algebra, dynamics, collapse, locality, measurement or all")
    c.add_argument("--json", help="also write the machine-readable report here")
    c.set_defaults(func=cmd_check)

    g = sub.add_parser("gamma", help="unistochasticity verdict for a Gamma table")
    g.add_argument("matrix")
    g.add_argument("--tol", type=float, default=1e-8)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_gamma)

    s = sub.add_parser("sweep", help="run a config once per parameter value")
    s.add_argument("config")
    s.add_argument("--param", required=True, help="dotted path, e.g. model.params.g")
    s.add_argument("--values", nargs="*", default=[], help="values (YAML scalars)")
    s.add_argument("-o", "--output")
    s.add_argument("--seed", type=int)
    s.add_argument("--trials", type=int)
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except USAGE_ERRORS as exc:
        line = getattr(exc, "line", None) if isinstance(exc, ConfigError) else None
        loc = f"{getattr(args, 'config', '<config>')}:{line}: " if line else ""
        print(f"error: {loc}{exc}", file=sys.stderr)
        return EXIT_USAGE
    except FockCollapseError as exc:
        print(f"runtime error ({type(exc).__name__}): {exc}", file=sys.stderr)
        diag = getattr(exc, "diagnostics", None)
        if diag:
            print(dumps_json(diag), file=sys.stderr, end="")
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
