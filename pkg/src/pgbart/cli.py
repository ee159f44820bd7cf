"""Command-line interface: ``pgbart {gen-hypercube,train,benchmark,plotdata}``.

Every command resolves its settings as flags > ``--config`` file > built-in
defaults and writes the resolved settings to ``<out>/config.txt``; passing
that file back with ``--config`` repeats the run. A hypercube
``metadata.txt`` is also a valid ``--config`` for ``train``.
"""

from __future__ import annotations

import argparse
import csv
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .data import (
    DataFormatError,
    HypercubeSpec,
    apply_transform,
    gen_hypercube,
    hypercube_metadata,
    load_csv,
    read_keyvalue,
    scale_labels,
    write_csv,
    write_keyvalue,
)
from .diagnostics import mse, read_trace, trace_summary, write_trace
from .model import BartHyperParams
from .samplers import KERNELS, SamplerConfig, run_chain

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
PLOT_QUANTITIES = ("test_mse", "train_mse", "total_leaves", "sigma", "loglik")


class UsageError(Exception):
    pass


def _label_col(value: str) -> int | str:
    return int(value) if value.lstrip("-").isdigit() else value


def _int_list(value: str) -> list[int]:
    return [int(v) for v in value.split(",") if v.strip()]


def _str_list(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


# key -> (parser, default); keys use underscores, flags use dashes
MODEL_KEYS = {
    "m": (int, 200),
    "alpha_s": (float, 0.95),
    "beta_s": (float, 2.0),
    "nu": (float, 3.0),
    "q": (float, 0.9),
    "k": (float, 2.0),
}
CHAIN_KEYS = {
    "particles": (int, 10),
    "max_stages": (int, 5000),
    "iters": (int, 2000),
    "burn_in": (int, 1000),
    "seed": (int, 0),
}
COMMAND_KEYS = {
    "gen-hypercube": {
        "d": (int, None),
        "seed": (int, 0),
        "points_per_vertex": (int, 10),
        "beta_s": (float, None),
        "out": (str, None),
    },
    "train": {
        "sampler": (str, "pg"),
        **CHAIN_KEYS,
        **MODEL_KEYS,
        "data": (str, None),
        "test_data": (str, None),
        "label_col": (_label_col, None),
        "out": (str, None),
    },
    "benchmark": {
        "samplers": (_str_list, ["pg", "cgm", "growprune"]),
        "d": (_int_list, []),
        "replicates": (int, 1),
        "jobs": (int, 1),
        **CHAIN_KEYS,
        **MODEL_KEYS,
        "data": (_str_list, []),
        "test_data": (_str_list, []),
        "label_col": (_label_col, None),
        "out": (str, None),
    },
    "plotdata": {
        "traces": (_str_list, []),
        "out": (str, None),
    },
}


def _format(value) -> str:
    if value is None:
        return ""
    if isinstance(value, list):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_config_file(path: str, command: str) -> dict[str, object]:
    keys = COMMAND_KEYS[command]
    try:
        raw = read_keyvalue(path)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    except DataFormatError as exc:
        raise UsageError(str(exc)) from None
    out = {}
    for key, text in raw.items():
        if key == "command":
            if text != command:
                raise UsageError(f"{path}: config was written by {text!r}, not {command!r}")
            continue
        if key.startswith("hypercube."):
            continue
        if key not in keys:
            raise UsageError(f"{path}: unknown key {key!r} for {command}")
        if text == "":
            continue
        try:
            out[key] = keys[key][0](text)
        except ValueError:
            raise UsageError(f"{path}: bad value {text!r} for {key}") from None
    return out


def resolve(command: str, args: argparse.Namespace) -> tuple[dict[str, object], set[str]]:
    """Merge defaults, the config file and flags.

    Returns the resolved settings and the keys set explicitly by either the
    config file or a flag.
    """
    keys = COMMAND_KEYS[command]
    config = {key: default for key, (_, default) in keys.items()}
    explicit = set()
    if getattr(args, "config", None):
        from_file = _parse_config_file(args.config, command)
        config.update(from_file)
        explicit |= set(from_file)
    for key in keys:
        value = getattr(args, key, None)
        if value is not None and not (isinstance(value, list) and not value):
            config[key] = value
            explicit.add(key)
    if config.get("out") is None:
        raise UsageError("--out is required")
    return config, explicit


def echo_config(command: str, config: dict[str, object], out: Path) -> None:
    write_keyvalue(out / "config.txt", {"command": command, **{k: _format(v) for k, v in config.items()}})


def _hyper(config: dict) -> BartHyperParams:
    try:
        return BartHyperParams(**{k: config[k] for k in MODEL_KEYS})
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _sampler(config: dict, kernel: str, seed: int | None = None) -> SamplerConfig:
    try:
        return SamplerConfig(
            kernel=kernel,
            particles=config["particles"],
            max_stages=config["max_stages"],
            iterations=config["iters"],
            burn_in=config["burn_in"],
            seed=config["seed"] if seed is None else seed,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


# -- gen-hypercube -----------------------------------------------------------


def cmd_gen_hypercube(args: argparse.Namespace) -> int:
    config, _ = resolve("gen-hypercube", args)
    if config["d"] is None:
        raise UsageError("--d is required")
    try:
        spec = HypercubeSpec(d=config["d"], points_per_vertex=config["points_per_vertex"], seed=config["seed"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = Path(config["out"])
    out.mkdir(parents=True, exist_ok=True)
    data = gen_hypercube(spec)
    write_csv(data.train, out / "train.csv")
    write_csv(data.test, out / "test.csv")
    _write_columns(out / "test_truth.csv", {"f": data.test_f})
    names = [f"x{j + 1}" for j in range(spec.d)]
    _write_columns(out / "vertices.csv", {**dict(zip(names, data.vertices.T)), "f": data.values})
    write_keyvalue(out / "metadata.txt", hypercube_metadata(spec, config["beta_s"]))
    echo_config("gen-hypercube", config, out)
    print(f"wrote {data.train.n} training and {data.test.n} test rows to {out}")
    return EXIT_OK


def _write_columns(path: Path, columns: dict[str, np.ndarray]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in zip(*columns.values()):
            writer.writerow([repr(float(v)) for v in row])


# -- train -------------------------------------------------------------------


def _load_pair(train_path: str, test_path: str | None, label_col):
    train = load_csv(train_path, label_col)
    test = load_csv(test_path, label_col) if test_path else None
    scaled, transform = scale_labels(train)
    return scaled, (apply_transform(test, transform) if test is not None else None)


def cmd_train(args: argparse.Namespace) -> int:
    config, _ = resolve("train", args)
    if config["data"] is None:
        raise UsageError("--data is required")
    if config["sampler"] not in KERNELS:
        raise UsageError(f"--sampler must be one of {', '.join(KERNELS)}")
    hp = _hyper(config)
    cfg = _sampler(config, config["sampler"])
    out = Path(config["out"])
    train, test = _load_pair(config["data"], config["test_data"], config["label_col"])
    out.mkdir(parents=True, exist_ok=True)
    echo_config("train", config, out)

    trace = run_chain(train, test, hp, cfg)
    write_trace(trace, out / "trace.csv")
    target = test if test is not None else train
    pred = trace.test_prediction if test is not None else trace.final_state.train_fit(train)
    if test is None:
        pred = train.transform.inverse(pred)
    _write_columns(out / "predictions.csv", {"y": target.y_original, "prediction": pred})
    summary = trace_summary(trace, cfg.burn_in)
    summary["posterior_mean_mse"] = mse(pred, target.y_original)
    write_keyvalue(out / "summary.txt", summary)
    ess_text = f"ESS {summary['ess']:.1f}, ESS/s {summary['ess_per_s']:.2f}" if "ess" in summary else "no ESS"
    print(f"{cfg.kernel}: {cfg.iterations} iterations, {ess_text}, results in {out}")
    return EXIT_OK


# -- benchmark ---------------------------------------------------------------


def _derive_seed(*entropy: int) -> int:
    return int(np.random.SeedSequence(list(entropy)).generate_state(1)[0])


def _run_cell(cell: dict) -> dict:
    """Run one (dataset, sampler, replicate) chain; failures are reported, not raised."""
    row = {k: cell[k] for k in ("dataset", "sampler", "replicate", "seed")}
    try:
        if cell["kind"] == "hypercube":
            data = gen_hypercube(HypercubeSpec(d=cell["d"], seed=cell["data_seed"]))
            train, transform = scale_labels(data.train)
            test = apply_transform(data.test, transform)
        else:
            train, test = _load_pair(cell["path"], cell["test_path"], cell["label_col"])
        trace = run_chain(train, test, cell["hp"], cell["cfg"])
        write_trace(trace, cell["trace_path"])
        summary = trace_summary(trace, cell["cfg"].burn_in)
        row.update(status="ok", error="")
        for key in ("ess", "ess_per_s", "seconds", "mean_test_mse", "mean_total_leaves"):
            row[key] = summary.get(key, float("nan"))
    except Exception as exc:  # keep going; the report records the failure
        row.update(status="failed", error=f"{type(exc).__name__}: {exc}")
    return row


def _benchmark_cells(config: dict, explicit: set[str], out: Path) -> list[dict]:
    """Expand the matrix into cells.

    Hypercube datasets use the matching protocol settings (one tree,
    alpha_s 0.95, beta_s from the schedule) unless set explicitly.
    """
    if not config["d"] and not config["data"]:
        raise UsageError("benchmark needs --d and/or --data")
    if config["test_data"] and len(config["test_data"]) != len(config["data"]):
        raise UsageError("--test-data must list one file per --data file")
    bad = [s for s in config["samplers"] if s not in KERNELS]
    if bad:
        raise UsageError(f"unknown sampler(s) {bad}; choose from {', '.join(KERNELS)}")
    if config["replicates"] < 1 or config["jobs"] < 1:
        raise UsageError("--replicates and --jobs must be positive")

    explicit = {k: config[k] for k in MODEL_KEYS if k in explicit}
    datasets = []
    for d in config["d"]:
        if d < 1:
            raise UsageError(f"invalid hypercube dimension {d}")
        base = hypercube_metadata(HypercubeSpec(d=d))
        if "beta_s" not in base and "beta_s" not in explicit:
            raise UsageError(f"no default beta_s for hypercube-{d}; pass --beta-s")
        model = {k: config[k] for k in MODEL_KEYS}
        model.update({k: base[k] for k in ("m", "alpha_s", "beta_s") if k in base})
        model.update(explicit)
        datasets.append(dict(kind="hypercube", dataset=f"hypercube-{d}", d=d, hp=_hyper(model)))
    for i, path in enumerate(config["data"]):
        test_path = config["test_data"][i] if config["test_data"] else None
        datasets.append(dict(kind="csv", dataset=Path(path).stem, path=path, test_path=test_path,
                             label_col=config["label_col"], hp=_hyper(config)))

    cells = []
    for rep in range(config["replicates"]):
        for ds_index, ds in enumerate(datasets):
            data_seed = _derive_seed(config["seed"], 1, ds_index, rep)
            for kernel in config["samplers"]:
                index = len(cells)
                seed = _derive_seed(config["seed"], 0, index)
                name = f"{ds['dataset']}_{kernel}_r{rep}"
                cells.append(dict(ds, sampler=kernel, replicate=rep, seed=seed, data_seed=data_seed,
                                  cfg=_sampler(config, kernel, seed), trace_path=out / "traces" / f"{name}.csv"))
    return cells


REPORT_COLUMNS = ("dataset", "sampler", "replicate", "seed", "status", "ess", "ess_per_s",
                  "seconds", "mean_test_mse", "mean_total_leaves", "error")


def format_table(rows: list[dict], samplers: list[str], key: str) -> str:
    """Aligned text table: one row per dataset, one column per sampler (mean over replicates)."""
    datasets = list(dict.fromkeys(r["dataset"] for r in rows))
    header = ["dataset", *samplers]
    body = []
    for ds in datasets:
        line = [ds]
        for s in samplers:
            vals = [r[key] for r in rows if r["dataset"] == ds and r["sampler"] == s and r["status"] == "ok"]
            vals = [v for v in vals if np.isfinite(v)]
            if not vals:
                line.append("failed" if any(r["dataset"] == ds and r["sampler"] == s for r in rows) else "-")
            elif len(vals) == 1:
                line.append(f"{vals[0]:.2f}")
            else:
                line.append(f"{np.mean(vals):.2f} ± {np.std(vals, ddof=1):.2f}")
        body.append(line)
    widths = [max(len(r[i]) for r in [header, *body]) for i in range(len(header))]
    fmt = lambda r: "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths)))
    return "\n".join([fmt(header), "  ".join("-" * w for w in widths), *map(fmt, body)])


def cmd_benchmark(args: argparse.Namespace) -> int:
    config, explicit = resolve("benchmark", args)
    out = Path(config["out"])
    cells = _benchmark_cells(config, explicit, out)
    (out / "traces").mkdir(parents=True, exist_ok=True)
    # unset model keys stay blank so a re-run keeps the hypercube protocol settings
    echo_config("benchmark", {k: (v if k not in MODEL_KEYS or k in explicit else None)
                              for k, v in config.items()}, out)

    if config["jobs"] > 1:
        with ProcessPoolExecutor(max_workers=config["jobs"]) as pool:
            rows = list(pool.map(_run_cell, cells))
    else:
        rows = []
        for cell in cells:
            rows.append(_run_cell(cell))
            print(f"{cell['dataset']} {cell['sampler']} r{cell['replicate']}: {rows[-1]['status']}", flush=True)

    with open(out / "report.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_COLUMNS)
        for row in rows:
            writer.writerow([_format(row.get(c, float("nan"))) for c in REPORT_COLUMNS])
    text = "\n\n".join([
        "ESS\n" + format_table(rows, config["samplers"], "ess"),
        "ESS/s\n" + format_table(rows, config["samplers"], "ess_per_s"),
    ])
    (out / "report.txt").write_text(text + "\n")
    print(text)
    failed = [r for r in rows if r["status"] != "ok"]
    for r in failed:
        print(f"failed: {r['dataset']} {r['sampler']} r{r['replicate']}: {r['error']}", file=sys.stderr)
    return EXIT_OK if len(failed) < len(rows) else EXIT_RUNTIME


# -- plotdata ----------------------------------------------------------------


def _trace_label(spec: str) -> tuple[str, Path]:
    if "=" in spec:
        label, path = spec.split("=", 1)
        return label, Path(path)
    path = Path(spec)
    return path.stem if path.stem != "trace" else path.parent.name, path


def cmd_plotdata(args: argparse.Namespace) -> int:
    config, _ = resolve("plotdata", args)
    specs = [_trace_label(s) for s in config["traces"]]
    if not specs:
        raise UsageError("plotdata needs at least one trace file")
    missing = [str(p) for _, p in specs if not p.is_file()]
    if missing:
        raise UsageError("trace file(s) not found: " + ", ".join(missing))
    out = Path(config["out"])
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "plotdata.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "quantity", "sampler", "value"])
        for label, path in specs:
            trace = read_trace(path)
            for quantity in PLOT_QUANTITIES:
                for it, value in zip(trace.columns["iter"], trace.columns[quantity]):
                    writer.writerow([it, quantity, label, repr(float(value))])
    echo_config("plotdata", config, out)
    print(f"wrote {out / 'plotdata.csv'}")
    return EXIT_OK


def read_plotdata(path) -> dict[str, dict[str, dict[int, float]]]:
    """Pivot a plotdata CSV back to ``{sampler: {quantity: {iteration: value}}}``."""
    out: dict = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.setdefault(row["sampler"], {}).setdefault(row["quantity"], {})[int(row["iteration"])] = float(row["value"])
    return out


# -- parser ------------------------------------------------------------------


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model")
    g.add_argument("--m", type=int, help="number of trees (default 200)")
    g.add_argument("--alpha-s", type=float, help="split prior base (default 0.95)")
    g.add_argument("--beta-s", type=float, help="split prior depth exponent (default 2.0)")
    g.add_argument("--nu", type=float, help="noise prior degrees of freedom (default 3)")
    g.add_argument("--q", type=float, help="noise prior quantile (default 0.9)")
    g.add_argument("--k", type=float, help="leaf prior scale (default 2)")


def _add_chain_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("chain")
    g.add_argument("--particles", type=int, help="particles for pg (default 10)")
    g.add_argument("--max-stages", type=int, help="stage cap per SMC pass (default 5000)")
    g.add_argument("--iters", type=int, help="Gibbs iterations (default 2000)")
    g.add_argument("--burn-in", type=int, help="iterations discarded before ESS (default 1000)")
    g.add_argument("--seed", type=int, help="random seed (default 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pgbart", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-hypercube", help="generate a hypercube-D dataset")
    p.add_argument("--d", type=int, help="dimension D")
    p.add_argument("--seed", type=int)
    p.add_argument("--points-per-vertex", type=int)
    p.add_argument("--beta-s", type=float, help="override the beta_s recorded in metadata")
    p.add_argument("--out", help="output directory")
    p.add_argument("--config")
    p.set_defaults(func=cmd_gen_hypercube)

    p = sub.add_parser("train", help="run one chain")
    p.add_argument("--sampler", choices=KERNELS)
    p.add_argument("--data", help="training CSV")
    p.add_argument("--test-data", help="test CSV with the same columns")
    p.add_argument("--label-col", type=_label_col, help="label column name or index (default last)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--config", help="key=value file (e.g. metadata.txt or an echoed config.txt)")
    _add_chain_flags(p)
    _add_model_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("benchmark", help="run a datasets x samplers x replicates matrix")
    p.add_argument("--d", type=_int_list, help="comma-separated hypercube dimensions")
    p.add_argument("--data", type=_str_list, help="comma-separated training CSVs")
    p.add_argument("--test-data", type=_str_list, help="comma-separated test CSVs, one per --data")
    p.add_argument("--label-col", type=_label_col)
    p.add_argument("--samplers", type=_str_list, help="comma-separated (default pg,cgm,growprune)")
    p.add_argument("--replicates", type=int, help="replicate seeds per cell (default 1)")
    p.add_argument("--jobs", type=int, help="cells run in parallel (default 1)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--config")
    _add_chain_flags(p)
    _add_model_flags(p)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("plotdata", help="long-format CSV of trace quantities")
    p.add_argument("traces", nargs="*", help="trace CSVs, optionally LABEL=PATH")
    p.add_argument("--out", help="output directory")
    p.add_argument("--config")
    p.set_defaults(func=cmd_plotdata)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"pgbart {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, DataFormatError, ValueError, RuntimeError) as exc:
        print(f"pgbart {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
