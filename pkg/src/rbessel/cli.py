"""Command-line front end: configuration, dispatch, artifacts.

Settings are resolved in three layers: built-in defaults, then an INI
config file whose sections mirror the module names ([specfun] alpha/p,
[pathsim] steps/horizon, [harness] sample sizes and pass bands, [cli]
out/seed/threads), then explicit flags.  Every run writes its artifacts
into one output directory and finishes with manifest.json listing each
emitted file with its SHA-256, so the manifest doubles as a completion
marker and a re-run recipe.  All numbers in CSV and JSON artifacts are
17-significant-digit decimals.

Exit codes: 0 all checks passed, 1 at least one record failed, 2 usage
or configuration errors.

Drivers launched by one invocation share the master seed and take
stream indices 8 apart (the spacing the experiment drivers require for
independent sub-ensembles), so `all` reproduces the single-subcommand
reports byte for byte.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import os
import re
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import harness
from .harness import ExperimentConfig
from .pathsim import SeedSpec, build_grid, reinforce_path, sample_bessel_path
from .reporting import StatReport, canonical_json, format_float
from .specfun import Params, indicator_fixture, moment_Lhat, \
    sign_balanced_fixture
from .storage import path_to_csv, save_path, sidecar_path, write_report

__all__ = ["RunManifest", "emit_plot_data", "main"]


class CliError(Exception):
    """Configuration or usage problem; rendered to stderr with exit 2."""


_DEFAULTS = {
    "alpha": 0.5, "p": 0.25,
    "steps": 200_000, "horizon": 1.0,
    "paths": 2_000, "batches": 100, "bridge_steps": 4_096,
    "lemma5_paths": 100, "route_sup_paths": 64,
    "eps_exponent": None, "trunc_eps": None,
    "se_multiplier": 3.0, "moment_bias_rel": 0.03,
    "mean_surface_bias_rel": 0.03, "occupation_residual_tol": 0.02,
    "ibp_pathwise_tol": 1e-3, "ks_pvalue_min": 0.01,
    "variance_bias_rel": 0.05, "slope_tol": 0.02, "bandwidth": 0.05,
    "x_levels": (0.1, 0.2, 0.4, 0.5, 1.0),
    "occupation_support": (0.2, 0.8),
    "scaling_levels": (100, 1_000, 10_000),
    "selfsim_times": (0.5, 1.0, 2.0),
    "moment_orders": (1, 2, 3),
    "laplace_r": (0.5, 1.0, 2.0),
    "seed": 0, "threads": 1, "out": None,
}

# section -> key -> parse kind; unknown sections and keys are refused
_SCHEMA = {
    "specfun": {"alpha": "float", "p": "float"},
    "pathsim": {"steps": "int", "horizon": "float"},
    "harness": {
        "paths": "int", "batches": "int", "bridge_steps": "int",
        "lemma5_paths": "int", "route_sup_paths": "int",
        "eps_exponent": "float", "trunc_eps": "float",
        "se_multiplier": "float", "moment_bias_rel": "float",
        "mean_surface_bias_rel": "float",
        "occupation_residual_tol": "float", "ibp_pathwise_tol": "float",
        "ks_pvalue_min": "float", "variance_bias_rel": "float",
        "slope_tol": "float", "bandwidth": "float",
        "x_levels": "floats", "occupation_support": "floats",
        "scaling_levels": "ints", "selfsim_times": "floats",
        "moment_orders": "ints", "laplace_r": "floats",
    },
    "cli": {"out": "str", "seed": "int", "threads": "int"},
}

# stream index base per driver; drivers use at most 4 substreams each
_STREAM_BASE = {
    "moments": 0, "routes": 8, "scaling-i": 16, "scaling-ii": 24,
    "selfsim": 32, "inverse": 40, "occupation": 48,
}


def _parse_value(kind: str, raw: str):
    if kind == "str":
        return raw
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    if kind == "ints":
        return tuple(int(p) for p in parts)
    return tuple(float(p) for p in parts)


def _read_config(path: Path) -> dict:
    parser = configparser.RawConfigParser()
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read config: {exc}") from exc
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        # configparser messages carry the offending line numbers
        raise CliError(str(exc)) from exc
    settings = {}
    for section in parser.sections():
        schema = _SCHEMA.get(section)
        if schema is None:
            raise CliError(f"{path}: unknown section [{section}]")
        for key, raw in parser.items(section):
            kind = schema.get(key)
            if kind is None:
                raise CliError(f"{path}: unknown key {section}.{key}")
            try:
                settings[key] = _parse_value(kind, raw)
            except ValueError as exc:
                raise CliError(f"{path}: {section}.{key} = {raw!r} "
                               f"is not a valid {kind}") from exc
    return settings


def _resolve_settings(args: argparse.Namespace) -> dict:
    settings = dict(_DEFAULTS)
    if args.config is not None:
        settings.update(_read_config(Path(args.config)))
    for flag in ("alpha", "p", "paths", "steps", "seed", "threads", "out"):
        value = getattr(args, flag)
        if value is not None:
            settings[flag] = value
    if settings["out"] is None:
        settings["out"] = os.environ.get("RBESSEL_OUT", "rbessel-out")
    return settings


def _experiment_config(settings: dict, stream: int) -> ExperimentConfig:
    return ExperimentConfig(
        params=Params(settings["alpha"], settings["p"]),
        seed=SeedSpec(settings["seed"], stream),
        n_paths=settings["paths"],
        n_steps=settings["steps"],
        horizon=settings["horizon"],
        eps_exponent=settings["eps_exponent"],
        bandwidth=settings["bandwidth"],
        x_levels=tuple(settings["x_levels"]),
        occupation_support=tuple(settings["occupation_support"]),
        scaling_levels=tuple(settings["scaling_levels"]),
        selfsim_times=tuple(settings["selfsim_times"]),
        moment_orders=tuple(settings["moment_orders"]),
        laplace_r=tuple(settings["laplace_r"]),
        bridge_steps=settings["bridge_steps"],
        lemma5_paths=settings["lemma5_paths"],
        route_sup_paths=settings["route_sup_paths"],
        trunc_eps=settings["trunc_eps"],
        n_batches=settings["batches"],
        se_multiplier=settings["se_multiplier"],
        moment_bias_rel=settings["moment_bias_rel"],
        mean_surface_bias_rel=settings["mean_surface_bias_rel"],
        occupation_residual_tol=settings["occupation_residual_tol"],
        ibp_pathwise_tol=settings["ibp_pathwise_tol"],
        ks_pvalue_min=settings["ks_pvalue_min"],
        variance_bias_rel=settings["variance_bias_rel"],
        slope_tol=settings["slope_tol"],
        threads=settings["threads"],
    )


# ---------------------------------------------------------------------------
# artifacts and the manifest

@dataclass
class RunManifest:
    """What a run produced: written last, so its presence marks completion."""

    subcommand: str
    config_path: str | None
    out_dir: str
    master_seed: int
    threads: int
    settings: dict
    artifacts: list

    def to_dict(self) -> dict:
        return {
            "subcommand": self.subcommand,
            "config_path": self.config_path,
            "out_dir": self.out_dir,
            "master_seed": self.master_seed,
            "threads": self.threads,
            "settings": self.settings,
            "artifacts": self.artifacts,
        }


class _ArtifactLog:
    """Files emitted so far; hashed when the manifest is assembled."""

    def __init__(self, out_dir: Path) -> None:
        self.dir = out_dir
        self._paths: list[Path] = []

    def note(self, path) -> Path:
        path = Path(path)
        self._paths.append(path)
        return path

    def note_container(self, path) -> Path:
        # a container write always produces its sidecar as well
        self.note(path)
        self.note(sidecar_path(path))
        return path

    def entries(self) -> list:
        out = []
        for p in sorted(set(self._paths)):
            digest = hashlib.sha256(p.read_bytes()).hexdigest()
            out.append({"path": p.relative_to(self.dir).as_posix(),
                        "sha256": digest})
        return out


def _write_manifest(out_dir: Path, manifest: RunManifest) -> Path:
    dest = out_dir / "manifest.json"
    tmp = out_dir / "manifest.json.tmp"
    tmp.write_text(canonical_json(manifest.to_dict()) + "\n",
                   encoding="utf-8")
    os.replace(tmp, dest)
    return dest


# ---------------------------------------------------------------------------
# plot-data emission

def _write_csv17(dest: Path, columns: dict) -> Path:
    with open(dest, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns.keys())
        writer.writerows(zip(*(
            [format_float(v) for v in np.asarray(col, dtype=np.float64)]
            for col in columns.values())))
    return dest


def _new_axes():
    import matplotlib
    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt
    return plt


def _save_figure(fig, dest: Path) -> Path:
    fig.savefig(dest, dpi=110)
    import matplotlib.pyplot as plt
    plt.close(fig)
    return dest


def _diag_series(report: StatReport, stem: str) -> tuple[np.ndarray, ...]:
    """Collect `stem[t=..]=value` diagnostics as sorted (t, value) arrays."""
    pat = re.compile(re.escape(stem) + r"\[t=([^\]]+)\]=(.*)")
    pairs = sorted((float(m.group(1)), float(m.group(2)))
                   for line in report.diagnostics
                   if (m := pat.fullmatch(line)))
    if not pairs:
        raise ValueError(f"report {report.experiment} carries no "
                         f"{stem} diagnostics")
    return np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs])


def _record_series(report: StatReport, stem: str, var: str):
    pat = re.compile(re.escape(stem) + r"\[" + var + r"=([^\]]+)\]")
    rows = sorted((float(m.group(1)), r) for r in report.records
                  if (m := pat.fullmatch(r.name)))
    if not rows:
        raise ValueError(f"report {report.experiment} carries no "
                         f"{stem} records")
    return rows


def emit_plot_data(source, kind: str, out_dir,
                   params: Params | None = None) -> list[Path]:
    """Write one plot-ready CSV series and its rendered PNG.

    kinds: "moment-loglog" takes the self-similarity report (params
    required for the reference curve); "decay" the first-order scaling
    report; "surface-slice" the occupation report; "cdf-overlay" a
    (sample, reference sample) pair.
    """
    out_dir = Path(out_dir)
    plt = _new_axes()

    if kind == "moment-loglog":
        t, mean = _diag_series(source, "mean_lhat")
        _, se = _diag_series(source, "se_lhat")
        ref = np.array([moment_Lhat(1, float(u), params) for u in t])
        csv_path = _write_csv17(out_dir / "selfsim_loglog.csv",
                                {"t": t, "mean_Lhat": mean, "se": se,
                                 "reference": ref})
        fig, ax = plt.subplots(figsize=(5.0, 3.6))
        ax.errorbar(t, mean, yerr=se, fmt="o", label="estimate")
        ax.plot(t, ref, "--", label="t^alpha law")
        ax.set(xscale="log", yscale="log", xlabel="t",
               ylabel="mean local time")
        ax.legend()
        png_path = _save_figure(fig, out_dir / "selfsim_loglog.png")

    elif kind == "decay":
        rows = _record_series(source, "coupled_gap", "n")
        n = np.array([x for x, _ in rows])
        gap = np.array([r.estimate for _, r in rows])
        se = np.array([r.standard_error or 0.0 for _, r in rows])
        csv_path = _write_csv17(out_dir / "coupled_decay.csv",
                                {"n": n, "mean_gap": gap, "se": se})
        fig, ax = plt.subplots(figsize=(5.0, 3.6))
        ax.errorbar(n, gap, yerr=se, fmt="o-")
        ax.set(xscale="log", yscale="log", xlabel="n",
               ylabel="mean coupled gap")
        png_path = _save_figure(fig, out_dir / "coupled_decay.png")

    elif kind == "surface-slice":
        rows = _record_series(source, "mean_density", "x")
        x = np.array([v for v, _ in rows])
        est = np.array([r.estimate for _, r in rows])
        se = np.array([r.standard_error or 0.0 for _, r in rows])
        ref = np.array([r.reference for _, r in rows])
        csv_path = _write_csv17(out_dir / "surface_slice.csv",
                                {"x": x, "E_Lhat_x_1": est, "se": se,
                                 "reference": ref})
        fig, ax = plt.subplots(figsize=(5.0, 3.6))
        ax.errorbar(x, est, yerr=se, fmt="o", label="estimate")
        ax.plot(x, ref, "--", label="quadrature")
        ax.set(xlabel="x", ylabel="mean occupation density")
        ax.legend()
        png_path = _save_figure(fig, out_dir / "surface_slice.png")

    elif kind == "cdf-overlay":
        emp, ref_samples = source
        emp, ref_samples = np.sort(emp), np.sort(ref_samples)
        x = np.concatenate([emp, ref_samples])
        x.sort()
        fe = np.searchsorted(emp, x, side="right") / emp.size
        fr = np.searchsorted(ref_samples, x, side="right") / ref_samples.size
        csv_path = _write_csv17(out_dir / "ks_cdf.csv",
                                {"x": x, "F_empirical": fe,
                                 "F_reference": fr})
        fig, ax = plt.subplots(figsize=(5.0, 3.6))
        ax.step(x, fe, where="post", label="empirical")
        ax.step(x, fr, where="post", label="reference")
        ax.set(xlabel="x", ylabel="CDF")
        ax.legend()
        png_path = _save_figure(fig, out_dir / "ks_cdf.png")

    else:
        raise ValueError(f"unknown plot kind {kind!r}")

    return [csv_path, png_path]


# ---------------------------------------------------------------------------
# subcommands

def _print_report(report: StatReport) -> None:
    verdict = "ok" if report.passed else "FAILED"
    print(f"[{report.experiment}] {verdict}, {len(report.records)} records")
    for rec in report.records:
        line = (f"  {'PASS' if rec.passed else 'FAIL'} {rec.name}: "
                f"estimate={format_float(rec.estimate)}")
        if rec.reference is not None:
            line += f" reference={format_float(rec.reference)}"
        if rec.standard_error is not None:
            line += f" se={format_float(rec.standard_error)}"
        print(line)


def _cmd_simulate(args, settings: dict, art: _ArtifactLog) -> list:
    pr = Params(settings["alpha"], settings["p"])
    horizon = args.horizon if args.horizon is not None \
        else settings["horizon"]
    base_horizon = horizon
    if args.kind == "reinforced":
        # the reinforcement time change sends u to u^(1/(1-2p)), so the
        # base path must stop where the transformed clock reads horizon
        base_horizon = horizon ** pr.one_minus_2p
    grid = build_grid(base_horizon, settings["steps"],
                      scheme=args.grid_scheme)
    seed = SeedSpec(settings["seed"], 0)
    for i in range(args.count):
        path = sample_bessel_path(grid, pr, seed, i)
        if args.kind == "reinforced":
            path = reinforce_path(path, pr)
        art.note_container(save_path(art.dir / f"path_{i:03d}.rbc", path))
        art.note(path_to_csv(art.dir / f"path_{i:03d}.csv", path))
    print(f"wrote {args.count} {args.kind} path(s), "
          f"{grid.n_steps} steps to horizon {format_float(horizon)}")
    return []


def _run_drivers(sub: str, settings: dict,
                 art: _ArtifactLog) -> list[StatReport]:
    pr = Params(settings["alpha"], settings["p"])
    reports: list[tuple[str, StatReport]] = []

    if sub in ("verify", "all"):
        reports.append(("identities", harness.run_identity_suite()))
    if sub in ("moments", "all"):
        reports.append(("moments", harness.run_moment_experiment(
            _experiment_config(settings, _STREAM_BASE["moments"]))))
        reports.append(("route_agreement", harness.run_route_agreement(
            _experiment_config(settings, _STREAM_BASE["routes"]))))
    if sub in ("scaling-limit", "all"):
        f_ind = indicator_fixture(0.0, 1.0)
        cfg_i = _experiment_config(settings, _STREAM_BASE["scaling-i"])
        rep_i = harness.run_scaling_limit_i(f_ind, cfg_i)
        reports.append(("scaling_i", rep_i))
        reports.append(("scaling_ii", harness.run_scaling_limit_ii(
            sign_balanced_fixture(pr),
            _experiment_config(settings, _STREAM_BASE["scaling-ii"]))))
        rep_s = harness.run_selfsim_exponent(
            _experiment_config(settings, _STREAM_BASE["selfsim"]))
        reports.append(("selfsim", rep_s))
        for p in emit_plot_data(rep_i, "decay", art.dir):
            art.note(p)
        overlay = harness.coupling_terminal_samples(f_ind, cfg_i)
        for p in emit_plot_data(overlay, "cdf-overlay", art.dir):
            art.note(p)
        for p in emit_plot_data(rep_s, "moment-loglog", art.dir, params=pr):
            art.note(p)
    if sub in ("ssmp", "all"):
        reports.append(("inverse", harness.run_inverse_suite(
            _experiment_config(settings, _STREAM_BASE["inverse"]))))
    if sub in ("occupation", "all"):
        rep_o = harness.run_occupation_suite(
            _experiment_config(settings, _STREAM_BASE["occupation"]))
        reports.append(("occupation", rep_o))
        for p in emit_plot_data(rep_o, "surface-slice", art.dir):
            art.note(p)

    out = []
    for name, report in reports:
        art.note(write_report(art.dir / f"{name}.json", report))
        _print_report(report)
        out.append(report)
    return out


# ---------------------------------------------------------------------------
# entry point

def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI settings file")
    common.add_argument("--out", help="output directory "
                        "(default: $RBESSEL_OUT or ./rbessel-out)")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--threads", type=int, help="worker thread count")
    common.add_argument("--alpha", type=float, help="index in (0, 1)")
    common.add_argument("--p", type=float, help="reinforcement in (-inf, 1/2)")
    common.add_argument("--paths", type=int, help="ensemble size")
    common.add_argument("--steps", type=int, help="grid steps per path")

    parser = argparse.ArgumentParser(
        prog="rbessel",
        description="Noise-reinforced Bessel process laboratory")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, doc in (
            ("verify", "closed-form identity suite"),
            ("moments", "local time moments and route agreement"),
            ("scaling-limit", "both scaling limits and the exponent fit"),
            ("ssmp", "inverse-process pipeline checks"),
            ("occupation", "occupation density suite"),
            ("all", "every experiment in one run")):
        sub.add_parser(name, parents=[common], help=doc)
    sim = sub.add_parser("simulate", parents=[common],
                         help="sample and persist paths")
    sim.add_argument("--kind", choices=("base", "reinforced"),
                     default="base")
    sim.add_argument("--count", type=int, default=1,
                     help="number of paths to write")
    sim.add_argument("--grid-scheme", choices=("uniform", "geometric"),
                     default="uniform")
    sim.add_argument("--horizon", type=float,
                     help="time horizon (defaults to [pathsim] horizon)")
    return parser


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:  # argparse already printed its message
        return int(exc.code or 0)

    try:
        settings = _resolve_settings(args)
        out_dir = Path(settings["out"])
        out_dir.mkdir(parents=True, exist_ok=True)
        art = _ArtifactLog(out_dir)
        try:
            if args.subcommand == "simulate":
                reports = _cmd_simulate(args, settings, art)
            else:
                reports = _run_drivers(args.subcommand, settings, art)
        except ValueError as exc:
            # semantic configuration problems surface as ValueError from
            # the config dataclass or the drivers' preconditions
            raise CliError(str(exc)) from exc
        manifest = RunManifest(
            subcommand=args.subcommand,
            config_path=args.config,
            out_dir=str(out_dir),
            master_seed=settings["seed"],
            threads=settings["threads"],
            settings={k: v for k, v in sorted(settings.items())
                      if k != "out"},
            artifacts=art.entries())
        _write_manifest(out_dir, manifest)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    if any(not r.passed for r in reports):
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
