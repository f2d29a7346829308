"""Command-line front end.

Exit codes: 0 success, 1 runtime failure (message carries the stage name),
2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys

import numpy as np

from . import gmm as gmm_mod
from . import nn, pipeline
from . import transition as tr
from .config import ConfigError, load_config
from .data import load_csv, write_csv
from .errors import StageError
from .noise import NoiseSpec, inject_noise
from .pretrain import aggregate_losses, read_history_csv, write_history_csv

log = logging.getLogger("detect_correct")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2

FIGURE_COLUMNS = ("bin_left", "bin_right", "bin_center", "count", "density",
                  "clean_pdf", "noisy_pdf", "threshold")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# stage-one artefacts
# ---------------------------------------------------------------------------

def save_stage_one(pre: pipeline.PretrainResult, out_dir, burn_in, losses=True):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "flags.csv"), "w") as fh:
        fh.write("sample_index,b\n")
        fh.writelines(f"{i},{int(b)}\n" for i, b in enumerate(pre.flags))
    mix = pre.mixture
    gmm_mod.write_mixture_json(
        os.path.join(out_dir, "gmm.json"), mix, pre.threshold,
        degenerate=pre.degenerate, n_iter=mix.n_iter, converged=mix.converged,
        variance_floored=mix.variance_floored, burn_in_epochs=burn_in,
        notices=list(pre.notices))
    tr.write_matrix_csv(pre.t_init, os.path.join(out_dir, "t_init.csv"))
    nn.save_model(pre.model, os.path.join(out_dir, "model.npz"))
    if losses:
        write_history_csv(pre.history, os.path.join(out_dir, "losses.csv"))


def read_flags_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if next(reader) != ["sample_index", "b"]:
            raise ValueError(f"{path}: expected header sample_index,b")
        rows = [(int(i), int(b)) for i, b in reader]
    flags = np.zeros(len(rows), dtype=np.int64)
    for i, b in rows:
        flags[i] = b
    return flags


def load_stage_one(in_dir, train) -> pipeline.PretrainResult:
    """Rebuild the stage-one result from the files :func:`save_stage_one` wrote."""
    def p(name):
        path = os.path.join(in_dir, name)
        if not os.path.exists(path):
            raise FileNotFoundError(f"missing stage-one output {path}")
        return path

    model = nn.load_model(p("model.npz"))
    mix, thr, rec = gmm_mod.read_mixture_json(p("gmm.json"))
    mix = gmm_mod.Gmm2(mix.lam, mix.mu1, mix.sigma1_sq, mix.mu2, mix.sigma2_sq,
                       n_iter=rec.get("n_iter", 0), converged=rec.get("converged", True),
                       variance_floored=rec.get("variance_floored", False))
    history = read_history_csv(p("losses.csv"))
    flags = read_flags_csv(p("flags.csv"))
    if flags.shape[0] != train.num_samples:
        raise ValueError(f"{in_dir}: {flags.shape[0]} flags for {train.num_samples} samples")
    return pipeline.PretrainResult(
        model=model, flags=flags, t_init=tr.read_matrix_csv(p("t_init.csv")),
        mixture=mix, threshold=thr, history=history,
        losses=aggregate_losses(history, rec["burn_in_epochs"]),
        predictions=nn.predict(model, train.features), notices=list(rec.get("notices", [])))


# ---------------------------------------------------------------------------
# figure data
# ---------------------------------------------------------------------------

def figure_data(losses, mixture, threshold, bins):
    """Histogram of aggregated losses plus both weighted densities at bin centres."""
    losses = np.asarray(losses, dtype=np.float64)
    counts, edges = np.histogram(losses, bins=bins)
    centers = 0.5 * (edges[:-1] + edges[1:])
    widths = np.diff(edges)
    return {
        "bin_left": edges[:-1], "bin_right": edges[1:], "bin_center": centers,
        "count": counts, "density": counts / (losses.size * widths),
        "clean_pdf": gmm_mod.clean_pdf(mixture, centers),
        "noisy_pdf": gmm_mod.noisy_pdf(mixture, centers),
        "threshold": None if threshold is None else threshold.t,
    }


def write_figure_csv(fd, path):
    with open(path, "w") as fh:
        fh.write(",".join(FIGURE_COLUMNS) + "\n")
        t = "" if fd["threshold"] is None else repr(float(fd["threshold"]))
        for i in range(len(fd["count"])):
            vals = [repr(float(fd[c][i])) for c in FIGURE_COLUMNS[:3]]
            vals.append(str(int(fd["count"][i])))
            vals += [repr(float(fd[c][i])) for c in FIGURE_COLUMNS[4:7]]
            vals.append(t)
            fh.write(",".join(vals) + "\n")


def read_figure_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = {c: np.array([float(r[c]) for r in rows]) for c in FIGURE_COLUMNS[:-1]}
    out["count"] = out["count"].astype(np.int64)
    t = rows[0]["threshold"] if rows else ""
    out["threshold"] = float(t) if t else None
    return out


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _configure(args):
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if not os.path.exists(args.config):
        raise UsageError(f"config file not found: {args.config}")
    cfg, out = load_config(args.config, overrides)
    out_dir = args.out or out.dir
    return cfg, out, out_dir


def _render_figures(out_dir, report=None, fd=None, t_init=None, t_final=None):
    from . import plotting
    if fd is not None:
        plotting.plot_loss_histogram(fd, os.path.join(out_dir, "loss_histogram.png"))
    if report is not None:
        plotting.plot_loss_curves(report, os.path.join(out_dir, "loss_curves.png"))
    if t_init is not None:
        plotting.plot_transition(t_init, os.path.join(out_dir, "t_init.png"), "initial T")
    if t_final is not None:
        plotting.plot_transition(t_final, os.path.join(out_dir, "t_final.png"), "final T")


def _finish_run(cfg, out, out_dir, ed, pre, write_stage_one):
    report = pipeline.run_arms(cfg, {"main": cfg.ablation}, data=ed, pre=pre)["main"]
    os.makedirs(out_dir, exist_ok=True)
    if write_stage_one:
        save_stage_one(pre, out_dir, cfg.burn_in, losses=out.losses)
    pipeline.write_report(report, os.path.join(out_dir, "report.json"))
    tr.write_matrix_csv(report["t_final"], os.path.join(out_dir, "t_final.csv"))
    fd = None
    if out.figure_bins > 0:
        fd = figure_data(pre.losses, pre.mixture, pre.threshold, out.figure_bins)
        write_figure_csv(fd, os.path.join(out_dir, "figure_data.csv"))
    if out.plot:
        _render_figures(out_dir, report, fd, report["t_init"], report["t_final"])
    print(f"accuracy\t{report['accuracy']:.6f}")
    print(f"flagged_fraction\t{report['flagged_fraction']:.6f}")
    print(f"output\t{out_dir}")
    return EXIT_OK


def cmd_run(args):
    cfg, out, out_dir = _configure(args)
    ed = pipeline.load_data(cfg)
    pre = pipeline.run_pretrain_stage(cfg, ed.train)
    return _finish_run(cfg, out, out_dir, ed, pre, write_stage_one=True)


def cmd_pretrain(args):
    cfg, out, out_dir = _configure(args)
    ed = pipeline.load_data(cfg)
    pre = pipeline.run_pretrain_stage(cfg, ed.train)
    save_stage_one(pre, out_dir, cfg.burn_in, losses=True)
    if out.plot:
        fd = figure_data(pre.losses, pre.mixture, pre.threshold, out.figure_bins or 50)
        _render_figures(out_dir, fd=fd, t_init=pre.t_init)
    print(f"flagged_fraction\t{float(np.mean(pre.flags)):.6f}")
    print(f"output\t{out_dir}")
    return EXIT_OK


def cmd_train(args):
    cfg, out, out_dir = _configure(args)
    ed = pipeline.load_data(cfg)
    if not os.path.isdir(args.stage_one):
        raise UsageError(f"stage-one directory not found: {args.stage_one}")
    try:
        pre = load_stage_one(args.stage_one, ed.train)
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from None
    return _finish_run(cfg, out, out_dir, ed, pre, write_stage_one=False)


def cmd_figure_data(args):
    for path in (args.losses, args.gmm):
        if not os.path.exists(path):
            raise UsageError(f"file not found: {path}")
    if args.bins < 1:
        raise UsageError("--bins must be >= 1")
    history = read_history_csv(args.losses)
    mix, thr, rec = gmm_mod.read_mixture_json(args.gmm)
    losses = aggregate_losses(history, rec.get("burn_in_epochs", 0))
    fd = figure_data(losses, mix, thr, args.bins)
    out = args.output or os.path.join(os.path.dirname(args.gmm) or ".", "figure_data.csv")
    write_figure_csv(fd, out)
    if args.plot:
        from . import plotting
        plotting.plot_loss_histogram(fd, os.path.splitext(out)[0] + ".png")
    print(f"output\t{out}")
    return EXIT_OK


def cmd_inject_noise(args):
    if not os.path.exists(args.input):
        raise UsageError(f"file not found: {args.input}")
    ds = load_csv(args.input, args.label_column, args.num_classes)
    noisy = inject_noise(ds, NoiseSpec(args.kind, args.rate), args.seed)
    write_csv(noisy, args.output, label_column=args.label_column,
              clean_label_column=args.clean_column)
    print(f"flip_fraction\t{float(np.mean(noisy.flip_mask)):.6f}")
    print(f"output\t{args.output}")
    return EXIT_OK


REPORT_FIELDS = ("accuracy", "flagged_fraction", "t_init_error", "t_final_error", "seconds")


def cmd_report(args):
    if not os.path.exists(args.report):
        raise UsageError(f"file not found: {args.report}")
    report = pipeline.read_report(args.report)
    sep = args.delimiter
    rows = [(k, report.get(k)) for k in REPORT_FIELDS]
    for section in ("detection", "gmm"):
        for k, v in sorted((report.get(section) or {}).items()):
            if not isinstance(v, (list, dict)):
                rows.append((f"{section}.{k}", v))
    for k, v in rows:
        print(f"{k}{sep}{'' if v is None else v}")
    if args.plot:
        out_dir = os.path.dirname(os.path.abspath(args.report))
        _render_figures(out_dir, report=report, t_init=report["t_init"],
                        t_final=report["t_final"])
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(
        prog="detect-correct",
        description="Detect noisy labels from loss trajectories and train with "
                    "selective transition-matrix correction.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def experiment(p):
        p.add_argument("--config", required=True, help="key = value experiment file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override one configuration key (repeatable)")
        p.add_argument("--out", help="output directory (overrides output.dir)")
        p.add_argument("--seed", type=int, help="override the experiment seed")

    p = sub.add_parser("run", help="both stages, evaluation and report")
    experiment(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("pretrain", help="stage one only: flags, mixture, initial T")
    experiment(p)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train", help="stage two from a pretrain output directory")
    experiment(p)
    p.add_argument("--from", dest="stage_one", required=True, metavar="DIR")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("figure-data", help="loss histogram and fitted densities as CSV")
    p.add_argument("--losses", required=True)
    p.add_argument("--gmm", required=True)
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--output", help="CSV path (default: figure_data.csv next to gmm.json)")
    p.add_argument("--plot", action="store_true", help="also render a PNG next to the CSV")
    p.set_defaults(func=cmd_figure_data)

    p = sub.add_parser("inject-noise", help="add synthetic label noise to a CSV dataset")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--label-column", default="label")
    p.add_argument("--clean-column", default="clean_label")
    p.add_argument("--num-classes", type=int, required=True)
    p.add_argument("--kind", choices=("symmetric", "pair"), default="symmetric")
    p.add_argument("--rate", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_inject_noise)

    p = sub.add_parser("report", help="print a report as delimited key/value lines")
    p.add_argument("report")
    p.add_argument("--delimiter", default="\t")
    p.add_argument("--plot", action="store_true",
                   help="render loss-curve and transition-matrix PNGs next to the report")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - report any failure as a runtime error
        print(f"error: [{args.command}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
