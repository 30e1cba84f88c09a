"""Command-line interface: config ingestion, experiment orchestration, and
output serialization.

Configs are strict JSON with sections mirroring the library types; unknown
keys are rejected with key-path error messages.  Every run writes a manifest
(config hash, seed, library versions) next to its outputs, and identical
config+seed reruns produce byte-identical files.

Exit codes: 0 ok, 2 config error, 3 numerical divergence, 4 event budget
exceeded.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import analytics, coefficients, lux, svg
from .errors import ConfigError, DivergedError, EventBudgetError
from .integrators import integrate_ode, integrate_sde, rate_comparison

ENV_OUT_DIR = "HERDMARKET_OUT"

_SECTION_KEYS = {
    "model": {
        "kind", "n", "beta", "gamma", "initial_vbar", "k_n", "gamma1", "gamma2",
        "alpha", "lambda_bar", "w1", "w2_kappa", "F", "signal_std", "initial_price",
    },
    "run": {"horizon", "seeds", "base_seed", "event_cap"},
    "limit": {"integrator", "step", "horizon"},
    "outputs": {"directory", "formats"},
    "figure": {"id"},
    "converge": {"ns", "seeds_per_n", "horizon"},
    "moments": {"points", "samples"},
}

_MODEL_KEYS = {
    "pure": {"kind", "n", "beta", "gamma", "initial_vbar"},
    "extended": {
        "kind", "n", "k_n", "beta", "gamma1", "gamma2", "alpha", "lambda_bar",
        "w1", "w2_kappa", "F", "signal_std", "initial_price", "initial_vbar",
    },
    "custom": {"kind"},
}

_RUN_DEFAULTS = {"horizon": 100.0, "seeds": 1, "base_seed": 0, "event_cap": 10 ** 8}
_LIMIT_DEFAULTS = {"integrator": "em", "step": 1e-2, "horizon": None}
_OUTPUT_DEFAULTS = {"directory": None, "formats": ["csv"]}


@dataclass(frozen=True)
class ExperimentConfig:
    model: dict
    run: dict
    limit: dict
    outputs: dict
    figure: dict
    converge: dict
    moments: dict

    def as_dict(self):
        return {
            "model": self.model,
            "run": self.run,
            "limit": self.limit,
            "outputs": self.outputs,
            "figure": self.figure,
            "converge": self.converge,
            "moments": self.moments,
        }


def _check_keys(section, data):
    allowed = _SECTION_KEYS[section]
    for key in data:
        if key not in allowed:
            raise ConfigError("unknown key %r in section %r" % (key, section))


def parse_config_data(data):
    """Validate a config dict; fills documented defaults, rejects unknown keys."""
    if not isinstance(data, dict):
        raise ConfigError("config root must be an object")
    for section in data:
        if section not in _SECTION_KEYS:
            raise ConfigError("unknown section %r" % section)
        if not isinstance(data[section], dict):
            raise ConfigError("section %r must be an object" % section)
        _check_keys(section, data[section])

    model = dict(data.get("model", {}))
    if model:
        kind = model.get("kind")
        if kind not in _MODEL_KEYS:
            raise ConfigError("model.kind must be one of pure|extended|custom")
        for key in model:
            if key not in _MODEL_KEYS[kind]:
                raise ConfigError("unknown key %r for model.kind=%r" % (key, kind))
        if kind == "pure":
            model.setdefault("initial_vbar", 0.0)
        if kind == "extended":
            for key, val in (
                ("lambda_bar", 1.0), ("w1", 1.0), ("w2_kappa", 1.0), ("F", 50.0),
                ("signal_std", 0.2), ("initial_price", 50.0), ("initial_vbar", 0.0),
            ):
                model.setdefault(key, val)
    run = dict(_RUN_DEFAULTS)
    run.update(data.get("run", {}))
    limit = dict(_LIMIT_DEFAULTS)
    limit.update(data.get("limit", {}))
    if limit["integrator"] not in ("em", "rk4"):
        raise ConfigError("limit.integrator must be 'em' or 'rk4'")
    outputs = dict(_OUTPUT_DEFAULTS)
    outputs.update(data.get("outputs", {}))
    for fmt in outputs["formats"]:
        if fmt not in ("csv", "svg"):
            raise ConfigError("outputs.formats entries must be 'csv' or 'svg'")
    cfg = ExperimentConfig(
        model=model,
        run=run,
        limit=limit,
        outputs=outputs,
        figure=dict(data.get("figure", {})),
        converge=dict(data.get("converge", {})),
        moments=dict(data.get("moments", {})),
    )
    if model:
        _build_params(cfg)  # surface parameter-constraint violations at parse time
    return cfg


def parse_config(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError("config file not found: %s" % path)
    except json.JSONDecodeError as exc:
        raise ConfigError("config is not valid JSON: %s" % exc)
    return parse_config_data(data)


def serialize_config(cfg):
    return json.dumps(cfg.as_dict(), sort_keys=True, indent=2) + "\n"


def _build_params(cfg, base_seed=None):
    model = cfg.model
    if not model:
        raise ConfigError("this command needs a model section")
    kind = model["kind"]
    try:
        if kind == "pure":
            return lux.LuxPureParams(
                n=model["n"], beta=model["beta"], gamma=model["gamma"],
                initial_vbar=model.get("initial_vbar", 0.0),
            )
        if kind == "extended":
            return lux.LuxExtendedParams(
                n=model["n"], k_n=model["k_n"], beta=model["beta"],
                gamma1=model["gamma1"], gamma2=model["gamma2"], alpha=model["alpha"],
                lambda_bar=model["lambda_bar"], w1=model["w1"], w2=model["w2_kappa"],
                F=model["F"], signal_std=model["signal_std"],
                initial_price=model["initial_price"], initial_vbar=model["initial_vbar"],
            )
    except KeyError as exc:
        raise ConfigError("model section is missing key %s" % exc)
    except (ValueError, TypeError) as exc:
        raise ConfigError("invalid model parameters: %s" % exc)
    raise ConfigError("model.kind=custom is library-only; build a ModelSpec in Python")


def _float_cell(x):
    if isinstance(x, (float, np.floating)):
        return "%.17g" % x
    return str(x)


def write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_float_cell(c) for c in row) + "\n")


def _seed_list(cfg, seed_override):
    base = cfg.run["base_seed"] if seed_override is None else int(seed_override)
    return [base + k for k in range(int(cfg.run["seeds"]))], base


def _simulate_one(args):
    model, horizon, seed, event_cap = args
    params_cfg = parse_config_data({"model": model})
    params = _build_params(params_cfg)
    if model["kind"] == "pure":
        path = lux.simulate_pure(params, horizon, seed)
    else:
        path = lux.simulate_extended(params, horizon, seed)
    if len(path.times) > event_cap:
        raise EventBudgetError("event budget exceeded (%d events)" % event_cap)
    return path


def _run_ensemble(cfg, seeds, workers):
    cap = int(cfg.run["event_cap"])
    jobs = [(cfg.model, float(cfg.run["horizon"]), s, cap) for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_simulate_one, jobs))
    return [_simulate_one(j) for j in jobs]


def _trajectory_rows(path):
    if isinstance(path, lux.PureChainPath):
        n = path.n
        yield (0.0, 0.0, path.initial_counts[0] / n, path.initial_counts[1] / n, "init")
        for t, c1 in zip(path.times, path.counts_opt):
            yield (t, 0.0, (n - c1) / n, c1 / n, "transition")
    else:
        n = path.n
        c0, c1, c2 = path.initial_counts
        yield (0.0, path.initial_price, c0 / n, c1 / n, c2 / n, "init")
        for t, p, cp, co, kind in zip(
            path.times, path.prices, path.counts_pess, path.counts_opt, path.kinds
        ):
            yield (t, p, cp / n, co / n, path.phi_n, "trade" if kind == 0 else "transition")


def cmd_simulate(cfg, out_dir, seed_override, workers, formats):
    seeds, _ = _seed_list(cfg, seed_override)
    paths = _run_ensemble(cfg, seeds, workers)
    files = []
    m = 2 if cfg.model["kind"] == "pure" else 3
    header = ["t", "price"] + ["v%d" % (i + 1) for i in range(m)] + ["kind"]
    for seed, path in zip(seeds, paths):
        name = "trajectory_%d.csv" % seed
        write_csv(os.path.join(out_dir, name), header, _trajectory_rows(path))
        files.append(name)
    if "svg" in formats:
        series = []
        for seed, path in zip(seeds, paths[:8]):
            if isinstance(path, lux.PureChainPath):
                series.append(("seed %d" % seed, path.times, path.vbar))
            else:
                series.append(("seed %d" % seed, path.times, path.prices))
        name = "trajectories.svg"
        label = "vbar" if cfg.model["kind"] == "pure" else "price"
        svg.render_lines(series, os.path.join(out_dir, name), title="simulated paths", y_label=label)
        files.append(name)
    return files


def cmd_limit(cfg, out_dir, seed_override, workers, formats):
    params = _build_params(cfg)
    horizon = float(cfg.limit["horizon"] or cfg.run["horizon"])
    step = float(cfg.limit["step"])
    seeds, _ = _seed_list(cfg, seed_override)
    files = []
    for seed in seeds:
        if cfg.model["kind"] == "pure":
            path = integrate_ode(
                lux.pure_limit_ode(params, params.initial_vbar, horizon), step=step
            )
            rows = ((t, 0.0, v[0]) for t, v in zip(path.times, path.values))
        elif cfg.limit["integrator"] == "rk4":
            path = integrate_ode(
                lux.extended_limit_ode(
                    params, [params.initial_price, params.initial_vbar], horizon
                ),
                step=step,
            )
            rows = ((t, v[0], v[1]) for t, v in zip(path.times, path.values))
        else:
            path = integrate_sde(lux.extended_limit_sde(params, horizon), step=step, seed=seed)
            rows = ((t, v[0], v[1]) for t, v in zip(path.times, path.values))
        name = "path_%d.csv" % seed
        write_csv(os.path.join(out_dir, name), ["t", "x", "vbar"], rows)
        files.append(name)
        if "svg" in formats:
            sname = "path_%d.svg" % seed
            svg.render_lines(
                [("x", path.times, path.values[:, 0])],
                os.path.join(out_dir, sname),
                title="limit path", y_label="x",
            )
            files.append(sname)
    return files


def cmd_stationary(cfg, out_dir, seed_override, workers, formats):
    params = _build_params(cfg)
    if not isinstance(params, lux.LuxPureParams):
        raise ConfigError("stationary analysis is defined for the pure model")
    dist = lux.stationary_distribution(params)
    write_csv(
        os.path.join(out_dir, "stationary.csv"),
        ["vbar", "p"],
        zip(dist.lattice, dist.probabilities),
    )
    report = {
        "mode_structure": dist.mode_structure,
        "gamma": params.gamma,
        "gamma_threshold": lux.gamma_threshold(params.n),
        "n": params.n,
    }
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(report, fh, sort_keys=True, indent=2)
        fh.write("\n")
    files = ["stationary.csv", "report.json"]
    if "svg" in formats:
        svg.render_lines(
            [("p", dist.lattice, dist.probabilities)],
            os.path.join(out_dir, "stationary.svg"),
            title="stationary law (%s)" % dist.mode_structure,
            x_label="vbar", y_label="p",
        )
        files.append("stationary.svg")
    return files


def cmd_converge(cfg, out_dir, seed_override, workers, formats):
    model = cfg.model
    if model.get("kind") != "pure":
        raise ConfigError("converge is defined for the pure model")
    conv = cfg.converge
    ns = conv.get("ns", [100, 400, 1600])
    seeds_per_n = int(conv.get("seeds_per_n", 50))
    horizon = float(conv.get("horizon", 0.1))
    base = cfg.run["base_seed"] if seed_override is None else int(seed_override)
    seeds = [base + k for k in range(seeds_per_n)]
    beta, gamma = model["beta"], model["gamma"]
    v0 = model.get("initial_vbar", 0.0)
    family = lambda n: lux.LuxPureParams(n=n, beta=beta, gamma=gamma, initial_vbar=v0)
    limit = lux.pure_limit_ode(family(ns[0]), v0, horizon)
    result = rate_comparison(
        family, limit, ns, horizon, seeds,
        observable=lambda p: (p.times, p.vbar, p.initial_vbar),
        simulate=lux.simulate_pure,
    )
    rows = []
    for n in ns:
        for seed, dist in zip(seeds, result["distances"][n]):
            rows.append((n, seed, dist))
    write_csv(os.path.join(out_dir, "distances.csv"), ["n", "seed", "sup_distance"], rows)
    bound_const = lux.convergence_constant(beta, gamma)
    regression = {
        "slope": result["slope"],
        "intercept": result["intercept"],
        "max_distance": {str(n): float(m) for n, m in zip(ns, result["max_distance"])},
        "bound_constant": bound_const,
        "all_within_bound": bool(
            all(
                result["max_distance"][i] <= bound_const / (n ** 0.5)
                for i, n in enumerate(ns)
            )
        ),
    }
    with open(os.path.join(out_dir, "regression.json"), "w") as fh:
        json.dump(regression, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return ["distances.csv", "regression.json"]


def cmd_figure(cfg, out_dir, seed_override, workers, formats):
    fig_id = cfg.figure.get("id")
    if fig_id not in range(1, 8):
        raise ConfigError("figure.id must be an integer in 1..7")
    seed = 0 if seed_override is None else int(seed_override)
    tables = analytics.reproduce_figure(fig_id, seed=seed)
    files = []
    for name, cols in sorted(tables.items()):
        fname = "figure%d_%s.csv" % (fig_id, name)
        header = list(cols.keys())
        rows = zip(*[np.asarray(cols[h]) for h in header])
        write_csv(os.path.join(out_dir, fname), header, rows)
        files.append(fname)
        if "svg" in formats:
            t = np.asarray(cols[header[0]])
            series = [(h, t, np.asarray(cols[h])) for h in header[1:]]
            sname = "figure%d_%s.svg" % (fig_id, name)
            svg.render_lines(series, os.path.join(out_dir, sname), title=name)
            files.append(sname)
    return files


def cmd_moments(cfg, out_dir, seed_override, workers, formats):
    params = _build_params(cfg)
    if not isinstance(params, lux.LuxExtendedParams):
        raise ConfigError("moments checks are defined for the extended model")
    spec = lux.build_extended(params)
    pts_cfg = cfg.moments.get("points")
    if not pts_cfg:
        raise ConfigError("moments.points is required (list of [price, vbar] pairs)")
    samples = int(cfg.moments.get("samples", 10 ** 6))
    seed = 0 if seed_override is None else int(seed_override)
    embed = lux.extended_embed(params.phi_n)
    points = [(float(x), embed(params.n, float(vb))) for x, vb in pts_cfg]
    reports = coefficients.monte_carlo_moment_check(spec, points, n_samples=samples, seed=seed)
    rows = []
    for rep, (x, vb) in zip(reports, pts_cfg):
        rows.append(
            (
                x, vb, rep["nu"],
                rep["dP_mean"], rep["dP_se"], rep["dP_target"],
                abs(rep["dP_mean"] - rep["dP_target"]) / rep["dP_se"],
            )
        )
    write_csv(
        os.path.join(out_dir, "moments.csv"),
        ["x", "vbar", "nu", "dP_mean_scaled", "se", "target", "z_score"],
        rows,
    )
    detail = []
    for rep in reports:
        detail.append(
            {
                "nu": rep["nu"],
                "dP": [rep["dP_mean"], rep["dP_se"], rep["dP_target"]],
                "dM_mean": rep["dM_mean"].tolist(),
                "dM_target": rep["dM_target"].tolist(),
                "dM2_mean": rep["dM2_mean"].tolist(),
                "dM2_target": rep["dM2_target"].tolist(),
            }
        )
    with open(os.path.join(out_dir, "moments.json"), "w") as fh:
        json.dump(detail, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return ["moments.csv", "moments.json"]


_COMMANDS = {
    "simulate": cmd_simulate,
    "limit": cmd_limit,
    "stationary": cmd_stationary,
    "converge": cmd_converge,
    "figure": cmd_figure,
    "moments": cmd_moments,
}


def _write_manifest(out_dir, command, cfg, seed, workers, formats, files):
    blob = serialize_config(cfg)
    from . import __version__

    manifest = {
        "command": command,
        "config": cfg.as_dict(),
        "config_sha256": hashlib.sha256(blob.encode()).hexdigest(),
        "seed": seed,
        "workers": workers,
        "formats": formats,
        "outputs": files,
        "versions": {
            "herdmarket": __version__,
            "numpy": np.__version__,
        },
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")


def run(command, cfg, seed=None, out_dir=None, workers=1, formats=None):
    """Execute one command; returns the list of files written."""
    if command not in _COMMANDS:
        raise ConfigError("unknown command %r" % command)
    formats = list(formats or cfg.outputs["formats"])
    out_dir = out_dir or cfg.outputs["directory"] or os.environ.get(ENV_OUT_DIR) or "."
    os.makedirs(out_dir, exist_ok=True)
    files = _COMMANDS[command](cfg, out_dir, seed, int(workers), formats)
    _write_manifest(out_dir, command, cfg, seed, workers, formats, files)
    return files


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="herdmarket",
        description="Agent-based herding market simulator and its large-market limits",
    )
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="path to a JSON config")
    parser.add_argument("--seed", type=int, default=None, help="base seed (u64)")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--format", default=None, help="comma list: csv[,svg]")
    args = parser.parse_args(argv)
    formats = args.format.split(",") if args.format else None
    try:
        if formats:
            for fmt in formats:
                if fmt not in ("csv", "svg"):
                    raise ConfigError("--format entries must be 'csv' or 'svg'")
        cfg = parse_config(args.config)
        files = run(
            args.command, cfg, seed=args.seed, out_dir=args.out,
            workers=args.workers, formats=formats,
        )
    except ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 2
    except DivergedError as exc:
        print("divergence: %s" % exc, file=sys.stderr)
        return 3
    except EventBudgetError as exc:
        print("budget exceeded: %s" % exc, file=sys.stderr)
        return 4
    for name in files:
        print(name)
    return 0


if __name__ == "__main__":
    sys.exit(main())
