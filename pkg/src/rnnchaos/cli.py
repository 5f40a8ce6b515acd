"""Command-line entry point: ``rnnchaos <command> [options]``.

Every data file starts with the fully resolved configuration (a ``# config:``
comment line for CSV, a ``{"config": ...}`` line for JSON lines).  Feeding
that object back through ``--config`` reproduces the file byte for byte.

Exit codes: 0 success, 2 configuration error, 3 piece budget exceeded, 4 I/O.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import secrets
import sys
from pathlib import Path

import numpy as np

from . import chaos, dynamics, highdim, montecarlo, netgen, pwl
from .errors import BudgetExceeded, ConfigError, ContractError
from .netgen import InitScheme

EXIT_OK, EXIT_CONFIG, EXIT_BUDGET, EXIT_IO = 0, 2, 3, 4

TABLE_SCHEMES = ("he-normal", "he-uniform", "glorot-normal", "glorot-uniform", "truncated-normal")

_SOURCE = {
    "reference": None,
    "family": "shallow",
    "k": 64,
    "scheme": "he-normal",
    "sigma2": None,
    "bias_rule": None,
    "activation": "relu",
    "clip": True,
    "seed": None,
}

DEFAULTS = {
    "detect": {**_SOURCE, "detector": "exact", "budget": pwl.DEFAULT_BUDGET, "grid": 100_000, "emit_plot": None, "plot": False},
    "sweep": {
        "family": "shallow",
        "k": [64],
        "scheme": "he-normal",
        "sigma2": [None],
        "bias_rule": None,
        "activation": "relu",
        "clip": True,
        "trials": montecarlo.DEFAULT_TRIALS,
        "seed": None,
        "detector": "exact",
        "prefilter": False,
        "budget": pwl.DEFAULT_BUDGET,
        "grid": 100_000,
        "output": None,
        "format": "csv",
        "plot": False,
    },
    "scramble": {**_SOURCE, "x0": None, "gap": 1e-7, "t": 150, "search": 0, "budget": pwl.DEFAULT_BUDGET, "output": None, "format": "csv", "plot": False},
    "regions": {
        **_SOURCE,
        "t": 12,
        "budget": pwl.DEFAULT_BUDGET,
        "search": 0,
        "noise": None,
        "mode": "both",
        "trials": 100,
        "fit_start": 3,
        "output": None,
        "format": "csv",
        "plot": False,
    },
    "highdim": {
        "d": 64,
        "sigma": [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0],
        "scheme": ["he-normal", "glorot-normal"],
        "trials": 1000,
        "t": 20,
        "seed": None,
        "idx": None,
        "clip": False,
        "traces": None,
        "output": None,
        "format": "csv",
        "plot": False,
    },
    "table": {
        "schemes": list(TABLE_SCHEMES),
        "bias_rule": "uniform-symmetric",
        "width": 2,
        "activation": "relu",
        "clip": True,
        "trials": montecarlo.DEFAULT_TRIALS,
        "seed": None,
        "detector": "exact",
        "grid": 100_000,
        "output": None,
        "format": "csv",
        "plot": False,
    },
}

RANDOMIZED = {"sweep", "scramble", "regions", "highdim", "table", "detect"}


# ----------------------------------------------------------------- parsing


def _csv_list(cast):
    def parse(text):
        try:
            return [cast(x) for x in text.split(",") if x != ""]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc))

    return parse


def _sigma2_value(text):
    if text in netgen.SIGMA2_RULES:
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"sigma2 must be a number or one of {sorted(netgen.SIGMA2_RULES)}")


def _add_source(p, multi=False):
    p.add_argument("--reference", choices=["triangle"])
    p.add_argument("--family", choices=list(montecarlo.FAMILIES))
    p.add_argument("--k", type=_csv_list(int) if multi else int, help="width (hidden width for depth2)")
    p.add_argument("--scheme")
    p.add_argument("--sigma2", type=_csv_list(_sigma2_value) if multi else _sigma2_value)
    p.add_argument("--bias-rule", dest="bias_rule", choices=list(netgen.BIAS_RULES))
    p.add_argument("--activation", choices=["relu", "tanh"])
    p.add_argument("--clip", action=argparse.BooleanOptionalAction)
    p.add_argument("--seed", type=int)


def _add_output(p):
    p.add_argument("--output", help="data file path (stdout when omitted)")
    p.add_argument("--format", choices=["csv", "jsonl"])
    p.add_argument("--plot", action=argparse.BooleanOptionalAction, help="also render a PNG next to --output")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rnnchaos", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON file with command parameters; flags override it")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="classify one map (period 3 or not)")
    _add_source(p)
    p.add_argument("--detector", choices=list(montecarlo.DETECTORS))
    p.add_argument("--budget", type=int)
    p.add_argument("--grid", type=int)
    p.add_argument("--emit-plot", dest="emit_plot", help="write x, f(x), f^3(x) grid CSV here")
    p.add_argument("--plot", action=argparse.BooleanOptionalAction)

    p = sub.add_parser("sweep", help="estimate P(period 3) over widths and variances")
    _add_source(p, multi=True)
    p.add_argument("--trials", type=int)
    p.add_argument("--detector", choices=list(montecarlo.DETECTORS))
    p.add_argument("--prefilter", action=argparse.BooleanOptionalAction)
    p.add_argument("--budget", type=int)
    p.add_argument("--grid", type=int)
    _add_output(p)

    p = sub.add_parser("scramble", help="distance series for a nearby pair of orbits")
    _add_source(p)
    p.add_argument("--x0", type=float)
    p.add_argument("--gap", type=float)
    p.add_argument("--t", type=int)
    p.add_argument("--search", type=int, help="scan up to N derived seeds for a period-3 map")
    p.add_argument("--budget", type=int)
    _add_output(p)

    p = sub.add_parser("regions", help="linear-region counts of f^t, optionally under noise")
    _add_source(p)
    p.add_argument("--t", type=int)
    p.add_argument("--budget", type=int)
    p.add_argument("--search", type=int)
    p.add_argument("--noise", type=float, help="Gaussian noise std on every weight and bias")
    p.add_argument("--mode", choices=["shared", "independent", "both"])
    p.add_argument("--trials", type=int)
    p.add_argument("--fit-start", dest="fit_start", type=int)
    _add_output(p)

    p = sub.add_parser("highdim", help="Jacobian spectral-norm sweep for d-dimensional RNNs")
    p.add_argument("--d", type=int)
    p.add_argument("--sigma", type=_csv_list(float))
    p.add_argument("--scheme", type=_csv_list(str))
    p.add_argument("--trials", type=int)
    p.add_argument("--t", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--idx", help="IDX image file supplying initial states")
    p.add_argument("--clip", action=argparse.BooleanOptionalAction)
    p.add_argument("--traces", help="write per-neuron state traces (first trial per sigma) here")
    _add_output(p)

    p = sub.add_parser("table", help="depth-2 chaos-frequency table across init schemes")
    p.add_argument("--schemes", type=_csv_list(str))
    p.add_argument("--bias-rule", dest="bias_rule", choices=list(netgen.BIAS_RULES))
    p.add_argument("--width", type=int)
    p.add_argument("--activation", choices=["relu", "tanh"])
    p.add_argument("--clip", action=argparse.BooleanOptionalAction)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--detector", choices=["exact", "numeric"])
    p.add_argument("--grid", type=int)
    _add_output(p)

    for action in parser._actions:
        action.default = argparse.SUPPRESS if action.dest not in ("command", "help") else action.default
    for sp in sub.choices.values():
        for action in sp._actions:
            if action.dest != "help":
                action.default = argparse.SUPPRESS
    return parser


def _read_config(path):
    """A JSON object, or the header line of a file this tool wrote."""
    text = Path(path).read_text()
    first = text.split("\n", 1)[0]
    if first.startswith("# config:"):
        text = first[len("# config:") :]
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    try:
        return json.loads(first)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}")


def resolve(command: str, flags: dict, config_path=None) -> dict:
    """Defaults <- config file <- explicit flags."""
    params = dict(DEFAULTS[command])
    if config_path:
        loaded = _read_config(config_path)
        if "config" in loaded and isinstance(loaded["config"], dict):
            loaded = loaded["config"]
        loaded = {k: v for k, v in loaded.items() if k != "command"}
        unknown = set(loaded) - set(params)
        if unknown:
            raise ConfigError(f"unknown config keys for {command}: {sorted(unknown)}")
        params.update(loaded)
    params.update(flags)
    if command in RANDOMIZED and params.get("seed") is None and params.get("reference") is None:
        params["seed"] = secrets.randbits(63)
        print(f"master seed: {params['seed']}", file=sys.stderr)
    return params


# ------------------------------------------------------------------ output


def _header_json(command, params) -> str:
    return json.dumps({"command": command, **params}, sort_keys=True)


def write_rows(command, params, rows, columns):
    """Write rows with the config header to --output (atomically) or stdout."""
    buf = io.StringIO()
    if params["format"] == "csv":
        buf.write(f"# config: {_header_json(command, params)}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])
    else:
        buf.write(json.dumps({"config": json.loads(_header_json(command, params))}, sort_keys=True) + "\n")
        for r in rows:
            buf.write(json.dumps({c: r[c] for c in columns}, sort_keys=True) + "\n")
    text = buf.getvalue()
    out = params.get("output")
    if not out:
        sys.stdout.write(text)
        return None
    path = Path(out)
    partial = path.with_name(path.name + ".partial")
    partial.write_text(text)
    os.replace(partial, path)
    return path


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _png_path(params, suffix=".png"):
    out = params.get("output")
    if not out:
        raise ConfigError("--plot needs --output to place the figure")
    return Path(out).with_suffix(suffix)


# ------------------------------------------------------------ map sources


def _scheme(params) -> InitScheme:
    kw = {"name": params["scheme"]}
    if params.get("sigma2") is not None:
        kw["sigma2"] = params["sigma2"]
    if params.get("bias_rule") is not None:
        kw["bias_rule"] = params["bias_rule"]
    elif params.get("family") == "depth2":
        kw["bias_rule"] = "uniform-symmetric"
    return InitScheme(**kw)


def _build_source(params, seed):
    """Return (handle, context) for the map described by ``params``."""
    if params.get("reference") == "triangle":
        return pwl.triangle(), {"seed": None, "k": None, "scheme": "reference-triangle"}
    scheme = _scheme(params)
    ctx = {"seed": seed, "k": params["k"], "scheme": scheme.name}
    if params["family"] == "shallow":
        sample = netgen.sample_network(params["k"], scheme, seed)
        ctx["sample"] = sample
        return netgen.build_map(sample), ctx
    net = netgen.sample_depth2(scheme, params["activation"], params["clip"], seed, width=params["k"])
    ctx["net"] = net
    if params["activation"] == "relu" and params["clip"]:
        return net.to_pwl(), ctx
    return net, ctx


def _search_chaotic(params):
    """First derived seed (trial_seed(seed, i), i < search) whose map has period 3."""
    base = params["seed"]
    for i in range(params["search"]):
        s = netgen.trial_seed(base, i)
        handle, ctx = _build_source(params, s)
        v = _classify(handle, params)
        if v.is_period3 and v.reliable:
            return handle, ctx
    raise ConfigError(f"no period-3 map among {params['search']} searched seeds")


def _source(params):
    if params.get("search"):
        return _search_chaotic(params)
    return _build_source(params, params.get("seed"))


def _classify(handle, params, screen_fired=False):
    detector = params.get("detector", "exact")
    if isinstance(handle, pwl.PwlMap) and detector != "numeric":
        return chaos.detect_period3_exact(handle, params.get("budget", pwl.DEFAULT_BUDGET), screen_fired=screen_fired)
    return chaos.detect_period3_numeric(handle, params.get("grid", 100_000), screen_fired=screen_fired)


# ---------------------------------------------------------------- commands


def cmd_detect(params):
    handle, ctx = _source(params)
    fired = False
    if "sample" in ctx:
        fired = chaos.screen_period3(netgen.y_sequence(ctx["sample"]))
    if params["detector"] == "screen":
        if "sample" not in ctx:
            raise ConfigError("the screen detector needs a shallow-family sample")
        rec = {"seed": ctx["seed"], "k": ctx["k"], "scheme": ctx["scheme"], "method": "screen", "screen_fired": fired, "is_period3": fired, "lower_bound_only": True}
        print(json.dumps(rec, sort_keys=True))
        return EXIT_OK
    v = _classify(handle, params, fired)
    print(json.dumps(v.to_json(seed=ctx["seed"], k=ctx["k"], scheme=ctx["scheme"]), sort_keys=True))
    if params.get("emit_plot"):
        x = np.linspace(0.0, 1.0, 2001)
        if isinstance(handle, pwl.PwlMap):
            f3 = pwl.iterate_t(handle, 3, params["budget"])
            fx, f3x = handle(x), f3(x)
        else:
            fx = handle(x)
            f3x = handle(handle(fx))
        rows = [{"x": float(a), "f": float(b), "f3": float(c)} for a, b, c in zip(x, fx, f3x)]
        out = dict(params, output=params["emit_plot"], format="csv")
        write_rows("detect", out, rows, ["x", "f", "f3"])
        if params.get("plot"):
            from . import plotting

            plotting.fixed_point_check(x, fx, f3x, Path(params["emit_plot"]).with_suffix(".png"))
    return EXIT_OK


def cmd_sweep(params):
    rows = []
    results = []
    for k in params["k"]:
        for s2 in params["sigma2"]:
            p = dict(params, k=k, sigma2=s2)
            cfg = montecarlo.SweepConfig(
                k=k,
                scheme=_scheme(p),
                n_trials=params["trials"],
                master_seed=params["seed"],
                detector=params["detector"],
                family=params["family"],
                activation=params["activation"],
                clip=params["clip"],
                grid_size=params["grid"],
                budget=params["budget"],
                prefilter=params["prefilter"],
            )
            res = montecarlo.estimate_chaos_probability(cfg)
            results.append(res)
            rows.append(res.row())
    columns = list(rows[0].keys())
    write_rows("sweep", params, rows, columns)
    if params["plot"]:
        from . import plotting

        plotting.sweep(
            [r["sigma2"] for r in rows], [r["p_hat"] for r in rows], [r["ci_low"] for r in rows], [r["ci_high"] for r in rows], _png_path(params)
        )
    return EXIT_OK


def cmd_scramble(params):
    handle, ctx = _source(params)
    gap, T = params["gap"], params["t"]
    x0 = params["x0"]
    if x0 is None:
        x0 = float(netgen.make_rng(params.get("seed") or 0).random() * (1.0 - gap))
    rep = dynamics.scrambling_report(handle, x0, gap, T)
    rows = [{"t": t, "d_t": d} for t, d in rep.rows()]
    write_rows("scramble", params, rows, ["t", "d_t"])
    print(
        json.dumps({"x0": x0, "min_tail": rep.min_tail, "max_tail": rep.max_tail, "initial_distance": rep.initial_distance, "seed": ctx["seed"]}),
        file=sys.stderr,
    )
    if params["plot"]:
        from . import plotting

        plotting.scrambling(rep.pair_distances, _png_path(params), gap)
    return EXIT_OK


def _base_net(params):
    if params.get("reference") == "triangle":
        return netgen.triangle_net(clip=params["clip"])
    if params["family"] != "depth2":
        raise ConfigError("--noise needs a network: use --reference triangle or --family depth2")
    _, ctx = _build_source(params, params["seed"])
    return ctx["net"]


def cmd_regions(params):
    T = params["t"]
    if params.get("noise") is None:
        handle, ctx = _source(params)
        if not isinstance(handle, pwl.PwlMap):
            raise ConfigError("region counting needs a clipped ReLU map")
        series = dynamics.region_growth(handle, T, params["budget"], fit_start=params["fit_start"])
        rows = [{"t": t, "regions": c} for t, c in series.rows()]
        write_rows("regions", params, rows, ["t", "regions"])
        print(json.dumps({"fitted_rate": series.fitted_rate, "truncated_at": series.truncated_at, "fit_window": series.fit_window}), file=sys.stderr)
        if params["plot"]:
            from . import plotting

            plotting.region_growth(series.counts, _png_path(params), series.fitted_rate)
        return EXIT_OK
    base = _base_net(params)
    modes = ("shared", "independent") if params["mode"] == "both" else (params["mode"],)
    rows = []
    for trial in range(params["trials"]):
        s = netgen.trial_seed(params["seed"], trial)
        for mode in modes:
            if mode == "shared":
                net = netgen.perturb(base, params["noise"], "shared", s)
                count = pwl.count_regions(pwl.iterate_t(net.to_pwl(), T, params["budget"]))
            else:
                layers = netgen.perturb(base, params["noise"], "independent", s, t=T)
                count = pwl.count_regions(netgen.unroll(layers))
            rows.append({"trial": trial, "mode": mode, "t": T, "regions": count})
    write_rows("regions", params, rows, ["trial", "mode", "t", "regions"])
    summary = {m: float(np.median([r["regions"] for r in rows if r["mode"] == m])) for m in modes}
    print(json.dumps({"median_regions": summary}), file=sys.stderr)
    return EXIT_OK


def cmd_highdim(params):
    d, T, n = params["d"], params["t"], params["trials"]
    inputs = None
    if params.get("idx"):
        inputs = highdim.load_idx(params["idx"], d=d).vectors
    rows = []
    traces = []
    for scheme in params["scheme"]:
        for sigma in sorted(params["sigma"]):
            rnns, u0s = [], []
            for i in range(n):
                s = netgen.trial_seed(params["seed"], i)
                rnns.append(highdim.sample_vector_rnn(d, sigma, s, scheme=scheme, clip=params["clip"]))
                if inputs is not None:
                    u0s.append(inputs[i % len(inputs)])
                else:
                    u0s.append(netgen.make_rng(s ^ 0x5EED).random(d))
            norms, conv = highdim.jacobian_norms(rnns, u0s, T, seed=params["seed"])
            hits = int((norms > 1.0).sum())
            lo, hi = montecarlo.wilson_ci(hits, n)
            rows.append(
                {"scheme": scheme, "sigma": sigma, "fraction_norm_gt_1": hits / n, "n_trials": n, "ci_low": lo, "ci_high": hi, "n_unconverged": int((~conv).sum())}
            )
            if params.get("traces"):
                states = highdim.iterate_state(rnns[0], u0s[0], T)
                for t, u in enumerate(states):
                    traces.append({"scheme": scheme, "sigma": sigma, "t": t, **{f"u{j}": float(u[j]) for j in range(min(4, d))}})
    write_rows("highdim", params, rows, ["scheme", "sigma", "fraction_norm_gt_1", "n_trials", "ci_low", "ci_high", "n_unconverged"])
    if traces:
        write_rows("highdim", dict(params, output=params["traces"]), traces, list(traces[0].keys()))
    if params["plot"]:
        from . import plotting

        for scheme in params["scheme"]:
            sel = [r for r in rows if r["scheme"] == scheme]
            plotting.sweep(
                [r["sigma"] for r in sel],
                [r["fraction_norm_gt_1"] for r in sel],
                [r["ci_low"] for r in sel],
                [r["ci_high"] for r in sel],
                _png_path(params, f".{scheme}.png"),
                xlabel="σ",
                ylabel="fraction with ‖J‖ > 1",
            )
    return EXIT_OK


def cmd_table(params):
    rows = []
    for name in params["schemes"]:
        detector = params["detector"]
        if params["activation"] != "relu" or not params["clip"]:
            detector = "numeric"
        cfg = montecarlo.SweepConfig(
            k=params["width"],
            scheme=InitScheme(name, bias_rule=params["bias_rule"]),
            n_trials=params["trials"],
            master_seed=params["seed"],
            detector=detector,
            family="depth2",
            activation=params["activation"],
            clip=params["clip"],
            grid_size=params["grid"],
        )
        res = montecarlo.estimate_chaos_probability(cfg)
        rows.append(
            {
                "scheme": name,
                "activation": params["activation"],
                "clip": params["clip"],
                "detector": detector,
                "n_trials": params["trials"],
                "n_chaotic": res.n_chaotic,
                "n_unreliable": res.n_unreliable,
                "frequency": res.p_hat,
                "ci_low": res.ci_low,
                "ci_high": res.ci_high,
            }
        )
    write_rows("table", params, rows, list(rows[0].keys()))
    if params["plot"]:
        from . import plotting

        plotting.table([r["scheme"] for r in rows], [r["frequency"] for r in rows], _png_path(params))
    return EXIT_OK


COMMANDS = {
    "detect": cmd_detect,
    "sweep": cmd_sweep,
    "scramble": cmd_scramble,
    "regions": cmd_regions,
    "highdim": cmd_highdim,
    "table": cmd_table,
}


def main(argv=None) -> int:
    parser = build_parser()
    ns = vars(parser.parse_args(argv))
    command = ns.pop("command")
    config_path = ns.pop("config", None)
    try:
        params = resolve(command, ns, config_path)
        return COMMANDS[command](params)
    except (ConfigError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
