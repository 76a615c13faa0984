"""Command-line entry point.

Every command writes ``config.json`` (the fully resolved arguments) to its
output directory; ``tubersense --from-config <file>`` replays it.

Exit codes: 0 success, 1 computation failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import sys
from collections import defaultdict
from dataclasses import replace
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from . import __version__
from . import io as tio
from .cfr import assemble_spectrum, flatten
from .classify import DEFAULT_LAMBDA_GRID, leave_one_pot_out, stage_dataset, train_classifier
from .constants import GRID_SPACING_CM, METRICS
from .errors import (
    AlignmentError,
    BandRangeError,
    ConfigurationError,
    ParameterError,
    ParseError,
    ToolkitError,
    ValidationError,
)
from .evaluation import evaluate_map
from .features import DEFAULT_RIPPLE_WINDOW, FEATURE_NAMES, WorkingBand, feature_series
from .fusion import fit_weights, fuse, localize, normalize_heatmap, rescale_unit, vertex_losses
from .model import FrequencyGrid, OccupancyMap, rasterize_annotation
from .plots import (
    plot_accuracy_curves,
    plot_band_tradeoff,
    plot_feature_trajectories,
    plot_heatmap_panels,
    plot_spectra,
)
from .sim import band_scores, bundled_scenario_path, default_medium, load_scenario, simulate_scenario
from .stats import (
    DEFAULT_RESAMPLES,
    ZScoreContext,
    correlate_with_harvest,
    js_divergence,
    kde,
    kl_divergence,
    silverman_bandwidth,
    trend_descriptors,
)
from .synthetic import planted_grid

CONFIG_NAME = "config.json"
TRUTH_OCCUPANCY = "truth.occupancy"
TRUTH_ANNOTATION = "truth.annotation"
# Input problems map to exit 2; any other toolkit error is computational (1).
USAGE_ERRORS = (ParseError, ValidationError, ConfigurationError, AlignmentError, BandRangeError,
                ParameterError, OSError)


class UsageError(Exception):
    pass


class ComputationFailure(Exception):
    pass


# -- argument types -----------------------------------------------------------

def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _band(text: str) -> list[float]:
    parts = text.split(":")
    try:
        f1, f2 = (float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected F1:F2 in Hz, got {text!r}") from None
    return [f1, f2]


# -- helpers --------------------------------------------------------------------

def _echo_config(out: Path, command: str, args: dict) -> dict:
    cfg = {"command": command, "version": __version__}
    for k, v in sorted(args.items()):
        if k in ("func", "command", "from_config", "replay_out"):
            continue
        cfg[k] = str(v) if isinstance(v, Path) else v
    out.mkdir(parents=True, exist_ok=True)
    (out / CONFIG_NAME).write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")
    print(json.dumps(cfg, sort_keys=True))
    return cfg


def _existing(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} not found: {p}")
    return p


def _band_from(cfg: dict) -> WorkingBand:
    f1, f2 = cfg["band"]
    return WorkingBand(f1, f2, cfg["split"])


def _load_map_dir(d: Path, shape_hint=None):
    d = _existing(d, "heatmap directory")
    maps = [tio.load_heatmap(_existing(d / f"{m}.heatmap", f"{m} heatmap")) for m in METRICS]
    if (d / TRUTH_OCCUPANCY).exists():
        truth = tio.load_occupancy(d / TRUTH_OCCUPANCY)
    elif (d / TRUTH_ANNOTATION).exists():
        ann = tio.load_annotation(d / TRUTH_ANNOTATION)
        truth = rasterize_annotation(ann, maps[0].spacing, maps[0].grid_shape)
    else:
        raise UsageError(f"{d}: needs {TRUTH_OCCUPANCY} or {TRUTH_ANNOTATION}")
    return maps, truth


def _write_map_dir(d: Path, maps, truth) -> None:
    d.mkdir(parents=True, exist_ok=True)
    for m in maps:
        tio.save_heatmap(m, d / f"{m.metric_name}.heatmap")
    tio.save_occupancy(truth, d / TRUTH_OCCUPANCY)


# -- commands -----------------------------------------------------------------------

def cmd_simulate(cfg: dict) -> int:
    out = Path(cfg["out"])
    sc = load_scenario(_existing(cfg["scenario"], "scenario"))
    sc = replace(sc, seed=int(cfg["seed"]) if cfg["seed"] is not None else sc.seed)
    if cfg["noise_sd"] is not None:
        sc = replace(sc, noise_sd=float(cfg["noise_sd"]))
    cfg = dict(cfg, seed=sc.seed, noise_sd=sc.noise_sd)
    _echo_config(out, "simulate", cfg)

    air, pots = simulate_scenario(sc)
    sweeps = out / "sweeps"
    sweeps.mkdir(parents=True, exist_ok=True)
    tio.save_sweep(air, out / "air.sweep")
    n = 0
    for pot, records in pots.items():
        for rec in records:
            tio.save_sweep(rec, sweeps / f"{pot}_day{rec.day:02d}.sweep")
            n += 1
    first = next(iter(pots.values()))
    air_spec = assemble_spectrum(air)
    shown = {f"{r.pot_id} day {r.day}": flatten(assemble_spectrum(r), air_spec).base
             for r in (first[0], first[len(first) // 2], first[-1])}
    plot_spectra(shown, out / "spectra.svg")
    print(f"wrote {n} sweep files and air.sweep to {out}")
    return 0


def cmd_features(cfg: dict) -> int:
    out = Path(cfg["out"])
    sweep_dir = _existing(cfg["sweeps"], "sweep directory")
    air_path = _existing(cfg["air"], "air reference sweep")
    band = _band_from(cfg)
    _echo_config(out, "features", cfg)
    paths = sorted(p for p in sweep_dir.glob("*.sweep") if p.resolve() != air_path.resolve())
    if not paths:
        raise UsageError(f"no .sweep files in {sweep_dir}")
    records = [tio.load_sweep(p) for p in paths]
    records.sort(key=lambda r: (r.pot_id, r.day))
    fvs = feature_series(records, tio.load_sweep(air_path), band, cfg["window"])
    tio.save_features(fvs, out / "features.csv")
    plot_feature_trajectories(fvs, out / "trajectories.svg")
    print(f"wrote {len(fvs)} feature rows to {out / 'features.csv'}")
    return 0


def cmd_classify(cfg: dict) -> int:
    out = Path(cfg["out"])
    fvs = tio.load_features(_existing(cfg["features"], "feature table"))
    _echo_config(out, "classify", cfg)
    res = leave_one_pot_out(fvs, cfg["lambda_grid"], cfg["seed"], cfg["folds"])
    tio.write_table(out / "lopo.csv", ("pot", "accuracy", "lambda"),
                    zip(res.pots, res.accuracies, res.lambdas))
    X, y, _ = stage_dataset(fvs)
    model = train_classifier(X, y, cfg["lambda_grid"], cfg["folds"], cfg["seed"])
    (out / "classifier.json").write_text(json.dumps({
        "classes": list(model.classes),
        "feature_names": list(FEATURE_NAMES),
        "weights": model.weights.tolist(),
        "intercepts": model.intercepts.tolist(),
        "l2_strength": model.l2_strength,
        "feature_means": model.feature_means.tolist(),
        "feature_sds": model.feature_sds.tolist(),
        "cv_scores": [list(s) for s in model.cv_scores],
    }, indent=2) + "\n")
    lines = [f"{p}: {a:.4f} (lambda={lam:g})" for p, a, lam in zip(res.pots, res.accuracies, res.lambdas)]
    lines.append(f"mean LOPO accuracy over {res.n_folds} folds: {res.mean_accuracy:.4f}")
    (out / "report.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return 0


def cmd_fuse(cfg: dict) -> int:
    out = Path(cfg["out"])
    if cfg["planted_seed"] is not None:
        s = int(cfg["planted_seed"])
        tr, te = planted_grid(s), planted_grid(s + 1)
        _write_map_dir(out / "planted" / "train", tr.maps, tr.truth)
        _write_map_dir(out / "planted" / "test", te.maps, te.truth)
        train_dirs = [out / "planted" / "train"]
        test_dir = out / "planted" / "test"
    else:
        if not cfg["train"]:
            raise UsageError("fuse needs --train DIR (repeatable) or --planted-seed N")
        train_dirs = [Path(d) for d in cfg["train"]]
        test_dir = Path(cfg["test"]) if cfg["test"] else None
    train = [_load_map_dir(d) for d in train_dirs]
    test = _load_map_dir(test_dir) if test_dir else None
    _echo_config(out, "fuse", cfg)

    norm_train = [[normalize_heatmap(m) for m in maps] for maps, _ in train]
    truths = [t for _, t in train]
    fit = fit_weights(norm_train, truths)
    tio.write_table(out / "fit.csv", tio.FIT_COLUMNS,
                    [(*map(float, fit.weights.w), fit.train_loss, fit.iterations, int(fit.converged))])
    vl = vertex_losses(norm_train, truths)
    tio.write_table(out / "vertex_losses.csv", ("metric", "train_loss"), zip(METRICS, map(float, vl)))

    eval_maps, eval_truth, split = (test[0], test[1], "test") if test else (train[0][0], train[0][1], "train")
    norm_eval = [normalize_heatmap(m) for m in eval_maps]
    reports = localize(fit, norm_eval, eval_truth, cfg["eta"], cfg["tol"])
    tol_cols = [f"acc_tol_{d:g}cm" for d in cfg["tol"]]
    tio.write_table(out / "eval.csv", ("split", "source", "threshold", "accuracy", "mse", "ssim",
                                        "balanced_accuracy", *tol_cols),
                    [(split, r.source, r.threshold, r.accuracy, r.mse, r.ssim, r.balanced_accuracy,
                      *(r.accuracy_by_tolerance[float(d)] for d in cfg["tol"])) for r in reports])
    tio.write_table(out / "accuracy_vs_tolerance.csv", ("source", "threshold", "tolerance_cm", "accuracy"),
                    [(r.source, r.threshold, float(d), acc) for r in reports
                     for d, acc in r.accuracy_by_tolerance.items()])
    eta0 = cfg["eta"][0]
    plot_accuracy_curves({r.source: r.accuracy_by_tolerance for r in reports if r.threshold == eta0},
                         out / "accuracy.svg")
    panels = {m.metric_name: rescale_unit(m.values) for m in norm_eval}
    panels["fused"] = fuse(norm_eval, fit.weights).values
    panels["truth"] = eval_truth.values
    plot_heatmap_panels(panels, out / "heatmaps.svg")

    w = ", ".join(f"{n}={v:.4f}" for n, v in zip(METRICS, fit.weights.w))
    print(f"weights: {w}; train loss {fit.train_loss:.6f} (best single metric {vl.min():.6f})")
    for r in reports:
        print(f"[{split}] {r.source:>10s} eta={r.threshold:g}: acc={r.accuracy:.4f} mse={r.mse:.4f} ssim={r.ssim:.4f}")
    if not fit.converged:
        print(f"fusion fit did not converge after {fit.iterations} iterations", file=sys.stderr)
        return 1
    return 0


def _condition(pot: str, sep: str) -> str:
    return pot.split(sep)[0] if sep else pot


def cmd_stats(cfg: dict) -> int:
    out = Path(cfg["out"])
    fvs = tio.load_features(_existing(cfg["features"], "feature table"))
    harvest = tio.load_harvest(_existing(cfg["harvest"], "harvest table")) if cfg["harvest"] else None
    by_cond = defaultdict(list)
    for fv in fvs:
        by_cond[_condition(fv.pot_id, cfg["condition_sep"])].append(fv)
    conditions = list(by_cond)
    ref = cfg["reference"] or conditions[0]
    if ref not in by_cond:
        raise UsageError(f"reference condition {ref!r} not among {conditions}")
    cfg = dict(cfg, reference=ref)
    _echo_config(out, "stats", cfg)

    div_rows = []
    for j, name in enumerate(FEATURE_NAMES):
        ctx = ZScoreContext.from_reference([fv.as_array()[j] for fv in by_cond[ref]])
        z = {c: (np.array([fv.as_array()[j] for fv in rows]) - ctx.mu) / ctx.sigma for c, rows in by_cond.items()}
        h = {c: cfg["bandwidth"] or silverman_bandwidth(v) for c, v in z.items()}
        allz = np.concatenate(list(z.values()))
        hmax = max(h.values())
        support = np.linspace(allz.min() - 4 * hmax, allz.max() + 4 * hmax, 512)
        dens = {c: kde(v, h[c], support) for c, v in z.items()}
        tio.write_table(out / f"density_{name}.csv", ("z", *conditions),
                        [(float(s), *(float(dens[c].values[i]) for c in conditions)) for i, s in enumerate(support)])
        for c in conditions:
            if c != ref:
                div_rows.append((name, ref, c, js_divergence(dens[ref], dens[c]), kl_divergence(dens[c], dens[ref])))
    tio.write_table(out / "divergences.csv", ("feature", "reference", "condition", "js_nats", "kl_nats"), div_rows)
    for row in div_rows:
        print(f"{row[0]}: JS({row[1]} || {row[2]}) = {row[3]:.4f} nats")

    if harvest is not None:
        per_pot = defaultdict(list)
        for fv in fvs:
            per_pot[fv.pot_id].append(fv)
        desc = {p: trend_descriptors(s) for p, s in per_pot.items()}
        rows = correlate_with_harvest(desc, harvest, resamples=cfg["resamples"], seed=cfg["seed"])

        def _ci(ci, k):
            return float("nan") if ci is None else ci[k]

        tio.write_table(out / "correlations.csv",
                        ("feature", "descriptor", "outcome", "n", "pearson", "spearman", "ci_lo", "ci_hi",
                         "spearman_ci_lo", "spearman_ci_hi", "n_degenerate"),
                        [(r.feature, r.descriptor, r.outcome, r.n, r.pearson, r.spearman,
                          _ci(r.pearson_ci, 0), _ci(r.pearson_ci, 1),
                          _ci(r.spearman_ci, 0), _ci(r.spearman_ci, 1), r.n_degenerate) for r in rows])
        print(f"wrote {len(rows)} correlation rows")
    return 0


def cmd_bandscan(cfg: dict) -> int:
    out = Path(cfg["out"])
    if cfg["scenario"]:
        sc = load_scenario(_existing(cfg["scenario"], "scenario"))
        pots = {p.pot_id: p for p in sc.pots}
        pot_id = cfg["pot"] or next(iter(pots))
        if pot_id not in pots:
            raise UsageError(f"pot {pot_id!r} not in scenario (have {sorted(pots)})")
        medium = pots[pot_id].medium
    else:
        medium = default_medium()
    grid = FrequencyGrid(cfg["f_start"], cfg["f_stop"], cfg["f_step"])
    _echo_config(out, "bandscan", cfg)
    scores = band_scores(medium, grid, cfg["perturbation"], cfg["radius"])
    tio.write_table(out / "band_scores.csv", ("freq_hz", "psi_p", "psi_a", "relative_activity"),
                    [(s.freq, s.psi_p, s.psi_a, s.relative_activity) for s in scores])
    f = np.array([s.freq for s in scores])
    psi_p = np.array([s.psi_p for s in scores])
    ratio = np.array([s.relative_activity for s in scores])
    plot_band_tradeoff(f, psi_p, ratio, out / "tradeoff.svg")
    rho = spearmanr(f, ratio)[0] if f.size > 2 else float("nan")
    print(f"{len(scores)} band scores; Spearman(freq, activity/penetration) = {rho:.3f}")
    return 0


def cmd_report(cfg: dict) -> int:
    out = Path(cfg["out"])
    dirs = [_existing(d, "input directory") for d in cfg["inputs"]]
    _echo_config(out, "report", cfg)
    lines = []
    for d in dirs:
        lines.append(f"== {d}")
        if (d / "features.csv").exists():
            fvs = tio.load_features(d / "features.csv")
            by_pot = defaultdict(list)
            for fv in fvs:
                by_pot[fv.pot_id].append(fv)
            for pot, series in by_pot.items():
                days = [fv.day for fv in series]
                rhos = [spearmanr(days, [fv.as_array()[j] for fv in series])[0] for j in range(len(FEATURE_NAMES))]
                lines.append(f"features {pot}: " + ", ".join(f"rho(day,{n})={r:+.3f}" for n, r in zip(FEATURE_NAMES, rhos)))
        if (d / "lopo.csv").exists():
            rows = tio.read_table(d / "lopo.csv", ("pot", "accuracy"))
            accs = [float(r["accuracy"]) for r in rows]
            lines.append(f"LOPO mean accuracy over {len(accs)} folds: {np.mean(accs):.4f}")
        if (d / "eval.csv").exists():
            for r in tio.read_table(d / "eval.csv", ("source", "accuracy", "mse", "ssim")):
                lines.append(f"map {r['source']} eta={float(r['threshold']):g}: acc={float(r['accuracy']):.4f} "
                             f"mse={float(r['mse']):.4f} ssim={float(r['ssim']):.4f}")
        if (d / "band_scores.csv").exists():
            rows = tio.read_table(d / "band_scores.csv", ("freq_hz", "relative_activity"))
            lines.append(f"band scores: {len(rows)} frequencies")
        if (d / "divergences.csv").exists():
            for r in tio.read_table(d / "divergences.csv", ("feature", "js_nats")):
                lines.append(f"JS {r['feature']} {r['reference']}->{r['condition']}: {float(r['js_nats']):.4f}")
    (out / "report.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return 0


# -- parser -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tubersense", description="RF channel and LTE heatmap analysis toolkit")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--from-config", type=Path, help="replay a run from its config.json echo")
    p.add_argument("--replay-out", type=Path, help="with --from-config: write to this directory instead")
    sub = p.add_subparsers(dest="command")

    def common(sp, seed_default=0):
        sp.add_argument("--out", type=Path, required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=seed_default)

    def band_args(sp):
        sp.add_argument("--band", type=_band, default=[2.0e9, 3.5e9], help="working band F1:F2 in Hz")
        sp.add_argument("--split", type=float, default=2.75e9, help="H/L split frequency in Hz")

    sp = sub.add_parser("simulate", help="simulate sweeps for a growth scenario")
    common(sp, seed_default=None)
    sp.add_argument("--scenario", type=Path, default=bundled_scenario_path())
    sp.add_argument("--noise-sd", type=float, default=None, help="override the scenario noise level")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("features", help="extract CFR features from sweep files")
    common(sp)
    sp.add_argument("--sweeps", type=Path, required=True, help="directory of .sweep files")
    sp.add_argument("--air", type=Path, required=True, help="air reference sweep")
    band_args(sp)
    sp.add_argument("--window", type=int, default=DEFAULT_RIPPLE_WINDOW, help="ripple median window")
    sp.set_defaults(func=cmd_features)

    sp = sub.add_parser("fuse", help="fit fusion weights and evaluate localization")
    common(sp)
    sp.add_argument("--train", type=Path, action="append", default=[], help="map directory (repeatable; pooled)")
    sp.add_argument("--test", type=Path, default=None, help="held-out map directory")
    sp.add_argument("--planted-seed", type=int, default=None, help="use planted synthetic grids instead")
    sp.add_argument("--eta", type=_floats, default=[0.5], help="thresholds, comma-separated")
    sp.add_argument("--tol", type=_floats, default=[0.0, 5.1, 10.2], help="tolerances in cm")
    sp.set_defaults(func=cmd_fuse)

    sp = sub.add_parser("classify", help="leave-one-pot-out stage classification")
    common(sp)
    sp.add_argument("--features", type=Path, required=True)
    sp.add_argument("--lambda-grid", type=_floats, default=list(DEFAULT_LAMBDA_GRID))
    sp.add_argument("--folds", type=int, default=5, help="inner CV folds for lambda selection")
    sp.set_defaults(func=cmd_classify)

    sp = sub.add_parser("stats", help="condition densities, divergences and harvest correlation")
    common(sp)
    sp.add_argument("--features", type=Path, required=True)
    sp.add_argument("--harvest", type=Path, default=None)
    sp.add_argument("--reference", default=None, help="reference condition (default: first seen)")
    sp.add_argument("--condition-sep", default=".", help="condition = pot id up to this separator")
    sp.add_argument("--bandwidth", type=float, default=None, help="KDE bandwidth override")
    sp.add_argument("--resamples", type=int, default=DEFAULT_RESAMPLES)
    sp.set_defaults(func=cmd_stats)

    sp = sub.add_parser("bandscan", help="penetration versus sensitivity across frequency")
    common(sp)
    sp.add_argument("--scenario", type=Path, default=None, help="take the medium from this scenario")
    sp.add_argument("--pot", default=None)
    sp.add_argument("--radius", type=float, default=0.005, help="tuber radius in m")
    sp.add_argument("--f-start", type=float, default=1e9)
    sp.add_argument("--f-stop", type=float, default=5e9)
    sp.add_argument("--f-step", type=float, default=4e7)
    sp.add_argument("--perturbation", type=float, default=0.5, help="tuber permittivity step")
    sp.set_defaults(func=cmd_bandscan)

    sp = sub.add_parser("report", help="summarize outputs of earlier commands")
    common(sp)
    sp.add_argument("--inputs", type=Path, nargs="+", required=True)
    sp.set_defaults(func=cmd_report)
    return p


COMMANDS = {
    "simulate": cmd_simulate, "features": cmd_features, "fuse": cmd_fuse, "classify": cmd_classify,
    "stats": cmd_stats, "bandscan": cmd_bandscan, "report": cmd_report,
}


def _resolve(parser, argv):
    args = parser.parse_args(argv)
    if args.from_config is not None:
        path = args.from_config
        if not path.exists():
            raise UsageError(f"config not found: {path}")
        try:
            cfg = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}: invalid JSON: {exc.msg}") from None
        command = cfg.pop("command", None)
        cfg.pop("version", None)
        if command not in COMMANDS:
            raise UsageError(f"{path}: unknown command {command!r}")
        if args.replay_out is not None:
            cfg["out"] = str(args.replay_out)
        return command, cfg
    if args.command is None:
        parser.print_usage(sys.stderr)
        raise UsageError("a subcommand or --from-config is required")
    cfg = {k: v for k, v in vars(args).items() if k not in ("func", "command", "from_config", "replay_out")}
    cfg = {k: str(v) if isinstance(v, Path) else v for k, v in cfg.items()}
    if isinstance(cfg.get("train"), list):
        cfg["train"] = [str(v) for v in cfg["train"]]
    if isinstance(cfg.get("inputs"), list):
        cfg["inputs"] = [str(v) for v in cfg["inputs"]]
    return args.command, cfg


def main(argv=None) -> int:
    parser = build_parser()
    try:
        command, cfg = _resolve(parser, argv)
        return COMMANDS[command](cfg)
    except SystemExit as exc:  # argparse usage errors
        return int(exc.code) if isinstance(exc.code, int) else 2
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KeyError as exc:
        print(f"error: config is missing key {exc}", file=sys.stderr)
        return 2
    except ToolkitError as exc:
        print(f"computation failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
