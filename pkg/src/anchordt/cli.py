"""Command-line entry point.

Verbs: gen-data, train, eval, plot, probe-study, mpa-check, sparsity-check,
ablate.  Every command reads a line-oriented config (file and/or --override
flags), writes its artifacts into --out-dir, and leaves a manifest.txt with
the effective config and sha256 checksums, from which the run can be
replayed byte-for-byte (see anchordt.manifest.replay_manifest).
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np
from scipy import stats as scipy_stats

from . import configio, manifest, mpa, sparsity, svgplot
from .nets import load_checkpoint
from .synthdata import generate, load_dataset, save_dataset, select_anchors
from .trainer import (ABLATION_CASES, TrainingDiverged, run_ablation, train,
                      translation_error)


class CliError(RuntimeError):
    pass


def _fmt(v: float) -> str:
    return format(v, ".17g")


def _write_lines(out_dir, name, lines):
    with open(os.path.join(out_dir, name), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return name


def _io_value(config, key, required=True):
    try:
        return config["io"][key]
    except KeyError:
        if required:
            raise CliError(f"missing [io] {key} in config") from None
        return None


# ---------------------------------------------------------------------------
# commands: each takes (config sections, out_dir) and returns artifact names
# ---------------------------------------------------------------------------

def cmd_gen_data(config, out_dir):
    cfg = configio.synth_config(config)
    train_split, test_split = generate(cfg)
    os.makedirs(out_dir, exist_ok=True)
    artifacts = save_dataset(train_split, out_dir, "train")
    artifacts += save_dataset(test_split, out_dir, "test")
    print(f"gen-data: {len(train_split)} train / {len(test_split)} test pairs, "
          f"t_mode={cfg.t_mode}, seed={cfg.seed}")
    return artifacts, configio.synth_config_sections(cfg), cfg.seed


def _load_splits(data_dir):
    if data_dir is None or not os.path.isdir(data_dir):
        raise CliError(f"data directory not found: {data_dir!r}")
    try:
        return load_dataset(data_dir, "train"), load_dataset(data_dir, "test")
    except FileNotFoundError as exc:
        raise CliError(f"dataset files missing in {data_dir}: {exc}") from None


def cmd_train(config, out_dir):
    cfg = configio.train_config(config)
    data_dir = _io_value(config, "data_dir")
    train_split, test_split = _load_splits(data_dir)
    anchors = select_anchors(train_split, cfg.anchor_count, cfg.seed)
    os.makedirs(out_dir, exist_ok=True)
    models, report = train(cfg, train_split, anchors, test_split, out_dir)
    artifacts = ["generator.ckpt", "discriminator.ckpt", "reconstructor.ckpt"]
    artifacts.append(_write_lines(out_dir, "trace.csv", report.trace_csv_lines()))
    artifacts.append(_write_lines(out_dir, "diag.csv", report.diag_csv_lines()))
    summary = [
        "[summary]",
        f"te_mean = {_fmt(report.te_mean)}",
        f"te_std = {_fmt(report.te_std)}",
        f"iterations = {cfg.iterations}",
        f"anchor_count = {anchors.size}",
    ]
    artifacts.append(_write_lines(out_dir, "summary.txt", summary))
    print(f"train: TE = {report.te_mean:.4f} +- {report.te_std:.4f} "
          f"({cfg.iterations} iterations, {report.wall_time:.1f}s)")
    sections = configio.train_config_sections(cfg)
    sections["io"] = {"data_dir": os.path.abspath(data_dir)}
    return artifacts, sections, cfg.seed


def cmd_eval(config, out_dir):
    ckpt = _io_value(config, "checkpoint")
    data_dir = _io_value(config, "data_dir")
    if not os.path.isfile(ckpt):
        raise CliError(f"checkpoint not found: {ckpt!r}")
    _, test_split = _load_splits(data_dir)
    model = load_checkpoint(ckpt)
    te_mean, te_std = translation_error(model, test_split)
    os.makedirs(out_dir, exist_ok=True)
    lines = ["te_mean,te_std,num_samples",
             f"{_fmt(te_mean)},{_fmt(te_std)},{len(test_split)}"]
    artifacts = [_write_lines(out_dir, "eval.csv", lines)]
    print(f"eval: TE = {te_mean:.4f} +- {te_std:.4f} on {len(test_split)} pairs")
    sections = {"io": {"checkpoint": os.path.abspath(ckpt),
                       "data_dir": os.path.abspath(data_dir)}}
    return artifacts, sections, 0


def cmd_plot(config, out_dir):
    data_dir = _io_value(config, "data_dir")
    _, test_split = _load_splits(data_dir)
    max_points = int(config.get("plot", {}).get("max_points", "1000"))
    if max_points < 1:
        raise CliError("max_points must be positive")
    n = len(test_split)
    idx = np.unique(np.linspace(0, n - 1, min(max_points, n)).astype(int))
    colors = [svgplot.color_for_index(int(i)) for i in idx]
    panels = [("source x", test_split.x[idx], colors),
              ("target y", test_split.y[idx], colors)]
    checkpoints = config.get("plot.checkpoints", {})
    for label in sorted(checkpoints):
        path = checkpoints[label]
        if not os.path.isfile(path):
            raise CliError(f"checkpoint not found: {path!r}")
        model = load_checkpoint(path)
        moved = model.apply(test_split.x[idx].T).T
        panels.append((f"translated ({label})", moved, colors))
    os.makedirs(out_dir, exist_ok=True)
    svgplot.scatter_panels(os.path.join(out_dir, "panels.svg"), panels)
    print(f"plot: {len(panels)} panels over {idx.size} points -> panels.svg")
    sections = {"io": {"data_dir": os.path.abspath(data_dir)},
                "plot": {"max_points": str(max_points)},
                "plot.checkpoints": {k: os.path.abspath(v)
                                     for k, v in checkpoints.items()}}
    return ["panels.svg"], sections, 0


def cmd_probe_study(config, out_dir):
    sec = config.get("probe_study", {})
    dimension = int(sec.get("dimension", "1000"))
    row_support = int(sec.get("row_support", "10"))
    mask_sizes = tuple(int(v) for v in sec.get("mask_sizes", "1,2,5,10,20,50").split(","))
    num_matrices = int(sec.get("num_matrices", "20"))
    mc_samples = int(sec.get("mc_samples", "500"))
    seed = int(os.environ.get(configio.SEED_ENV_VAR, sec.get("seed", "0")))
    exact_overlay = sec.get("exact_overlay", "false").lower() in ("true", "1", "yes")
    rng = np.random.default_rng(seed)
    result = sparsity.probe_bias_variance_study(
        dimension, row_support, mask_sizes, num_matrices, mc_samples, rng)
    os.makedirs(out_dir, exist_ok=True)
    artifacts = [_write_lines(out_dir, "study.csv", result.csv_lines())]
    xs = [r.mask_size for r in result.rows]
    svgplot.line_chart(os.path.join(out_dir, "variance.svg"), xs,
                       [max(r.variance, 1e-300) for r in result.rows],
                       "probe estimator variance", "S", "variance", log_y=True)
    svgplot.line_chart(os.path.join(out_dir, "bias.svg"), xs,
                       [abs(r.mean_rel_bias) for r in result.rows],
                       "probe estimator |relative bias|", "S", "|relative bias|")
    artifacts += ["variance.svg", "bias.svg"]
    if exact_overlay:
        if dimension > sparsity.MAX_ENUMERATION_DIM:
            raise CliError(f"exact overlay needs dimension <= {sparsity.MAX_ENUMERATION_DIM}")
        overlay_rng = np.random.default_rng(seed + 1)
        j = sparsity.random_sparse_jacobian(dimension, row_support, overlay_rng)
        lines = ["S,q_exact,rel_bias_exact"]
        l0 = np.count_nonzero(j)
        for s in mask_sizes:
            q = sparsity.q_exact_enumeration(j, s)
            lines.append(f"{s},{_fmt(q)},{_fmt((q - l0) / l0)}")
        artifacts.append(_write_lines(out_dir, "study_exact.csv", lines))
    for r in result.rows:
        print(f"probe-study: S={r.mask_size:4d} rel_bias={r.mean_rel_bias:+.5f} "
              f"variance={r.variance:10.2f} bound_factor={r.lower_bound_factor:.5f}")
    sections = {"probe_study": {
        "dimension": str(dimension), "row_support": str(row_support),
        "mask_sizes": ",".join(str(s) for s in mask_sizes),
        "num_matrices": str(num_matrices), "mc_samples": str(mc_samples),
        "seed": str(seed), "exact_overlay": str(exact_overlay).lower(),
    }}
    return artifacts, sections, seed


def _mpa_checks(n, seed, eps):
    """The default 1D suite; returns rows of (name, metric, value, threshold, ok)."""
    mu, sigma = 0.7, 1.3
    gauss = lambda rng, k: mu + sigma * rng.standard_normal(k)
    uniform = lambda rng, k: rng.uniform(0.0, 1.0, k)
    expo = lambda rng, k: rng.exponential(1.0, k)
    rows = []

    def add(name, metric, value, threshold, ok):
        rows.append((name, metric, value, threshold, ok))

    reflect = mpa.reflection_mpa(mu)
    ks = mpa.pushforward_ks_check(gauss, reflect, n, seed)
    add("gaussian-reflection", "ks", ks, 0.01, ks < 0.01)
    fp = mpa.count_fixed_points(reflect, (mu - 5 * sigma, mu + 5 * sigma))
    add("gaussian-reflection", "fixed_points", fp.count, 1, fp.count == 1)

    conj = mpa.cdf_conjugate_mpa(
        lambda x: scipy_stats.norm.cdf(x, mu, sigma),
        lambda q: scipy_stats.norm.ppf(q, mu, sigma))
    ks = mpa.pushforward_ks_check(gauss, conj, n, seed + 1)
    add("gaussian-cdf-conjugate", "ks", ks, 0.01, ks < 0.01)
    grid = np.linspace(mu - 3 * sigma, mu + 3 * sigma, 1001)
    dev = float(np.abs(conj(grid) - reflect(grid)).max())
    add("gaussian-cdf-conjugate", "max_dev_from_reflection", dev, 1e-7, dev < 1e-7)

    uconj = mpa.cdf_conjugate_mpa(lambda x: np.clip(x, 0.0, 1.0), lambda q: q)
    ks = mpa.pushforward_ks_check(uniform, uconj, n, seed + 2)
    add("uniform-cdf-conjugate", "ks", ks, 0.01, ks < 0.01)
    fp = mpa.count_fixed_points(uconj, (0.0, 1.0))
    add("uniform-cdf-conjugate", "fixed_points", fp.count, 1, fp.count == 1)

    econj = mpa.cdf_conjugate_mpa(
        lambda x: scipy_stats.expon.cdf(x), lambda q: scipy_stats.expon.ppf(q))
    ks = mpa.pushforward_ks_check(expo, econj, n, seed + 3)
    add("exponential-cdf-conjugate", "ks", ks, 0.01, ks < 0.01)
    fp = mpa.count_fixed_points(econj, (0.01, 10.0))
    loc_ok = fp.count == 1 and abs(fp.locations[0] - np.log(2.0)) < 1e-6
    add("exponential-cdf-conjugate", "fixed_point_at_ln2", fp.count, 1, loc_ok)

    pm = mpa.PermutedMpa(permutation=np.array([1, 0]),
                         maps=[lambda v: v, lambda v: v])
    frac = mpa.permutation_fixed_measure_probe(
        pm, lambda rng, k: rng.standard_normal((2, k)), n, eps, seed + 4)
    add("swap-identity-fixed-set", "fraction", frac, 1e-3, frac <= 1e-3)

    ft = mpa.finite_translations_check(
        lambda rng, k: rng.standard_normal(k), lambda x: x + 3.0, seed + 5,
        n_fit=n, n_test=n)
    add("finite-translations", "ks_increasing", ft.ks_increasing, 0.01,
        ft.ks_increasing < 0.01)
    add("finite-translations", "ks_decreasing", ft.ks_decreasing, 0.01,
        ft.ks_decreasing < 0.01)
    add("finite-translations", "crossings", ft.crossing_count, 1,
        ft.crossing_count == 1)

    # negative control: a shift is not measure preserving
    shift = lambda x: x + 1.0
    ks = mpa.pushforward_ks_check(gauss, shift, n, seed + 6)
    add("shift-negative-control", "ks", ks, 0.3, ks > 0.3)

    ident = mpa.count_fixed_points(lambda x: x, (-2.0, 2.0))
    add("identity-map", "flagged_identity", int(ident.is_identity), 1,
        ident.is_identity)
    return rows


def cmd_mpa_check(config, out_dir):
    sec = config.get("mpa_check", {})
    n = int(sec.get("samples", "100000"))
    seed = int(os.environ.get(configio.SEED_ENV_VAR, sec.get("seed", "0")))
    eps = float(sec.get("tolerance", "1e-3"))
    rows = _mpa_checks(n, seed, eps)
    os.makedirs(out_dir, exist_ok=True)
    lines = ["check,metric,value,threshold,pass"]
    width = max(len(r[0]) for r in rows)
    all_ok = True
    for name, metric, value, threshold, ok in rows:
        lines.append(f"{name},{metric},{_fmt(float(value))},{threshold},{ok}")
        status = "PASS" if ok else "FAIL"
        print(f"mpa-check: {name:<{width}}  {metric:<28} "
              f"{float(value):12.6g}  [{status}]")
        all_ok = all_ok and ok
    artifacts = [_write_lines(out_dir, "mpa_report.csv", lines)]
    if not all_ok:
        raise CliError("mpa-check: one or more checks failed")
    sections = {"mpa_check": {"samples": str(n), "seed": str(seed),
                              "tolerance": _fmt(eps)}}
    return artifacts, sections, seed


def cmd_sparsity_check(config, out_dir):
    sec = config.get("sparsity_check", {})
    support_file = _io_value(config, "support_file")
    if not os.path.isfile(support_file):
        raise CliError(f"support file not found: {support_file!r}")
    pairs = []
    with open(support_file, "r", encoding="utf-8") as fh:
        for lineno, ln in enumerate(fh, start=1):
            ln = ln.strip()
            if not ln or ln.startswith("#") or ln.lower().startswith("row"):
                continue
            try:
                r, c = (int(v) for v in ln.split(","))
            except ValueError:
                raise CliError(f"{support_file}:{lineno}: expected 'row,col'") from None
            pairs.append((r, c))
    if not pairs:
        raise CliError(f"{support_file}: no index pairs")
    inferred = max(max(r, c) for r, c in pairs) + 1
    dimension = int(sec.get("dimension", str(inferred)))
    pattern = sparsity.SupportPattern(dimension=dimension,
                                      index_pairs=frozenset(pairs))
    result = sparsity.check_structural_sparsity(pattern)
    os.makedirs(out_dir, exist_ok=True)
    lines = ["column,satisfied,witness_rows,diagnostic"]
    for k in range(dimension):
        if k in result.witnesses:
            witness = ";".join(str(i) for i in sorted(result.witnesses[k]))
            lines.append(f"{k},True,{witness},")
        else:
            lines.append(f'{k},False,,"{result.failures[k]}"')
    artifacts = [_write_lines(out_dir, "sparsity_check.csv", lines)]
    verdict = "satisfied" if result.satisfied else "NOT satisfied"
    print(f"sparsity-check: structural sparsity {verdict} "
          f"(D={dimension}, {len(pairs)} support entries)")
    for k, reason in sorted(result.failures.items()):
        print(f"sparsity-check:   column {k}: {reason}")
    sections = {"io": {"support_file": os.path.abspath(support_file)},
                "sparsity_check": {"dimension": str(dimension)}}
    if not result.satisfied:
        manifest.write_manifest(out_dir, "sparsity-check", sections, 0, artifacts)
        raise CliError("sparsity-check: pattern is not structurally sparse")
    return artifacts, sections, 0


def cmd_ablate(config, out_dir):
    cfg = configio.train_config(config)
    data_dir = _io_value(config, "data_dir")
    train_split, test_split = _load_splits(data_dir)
    sec = config.get("ablate", {})
    cases = tuple(sec.get("cases", ",".join(ABLATION_CASES)).split(","))
    seeds = tuple(int(v) for v in sec.get("seeds", "0,1,2").split(","))
    anchor_sweep = sec.get("anchor_sweep", "")
    os.makedirs(out_dir, exist_ok=True)
    artifacts = []
    if anchor_sweep:
        from dataclasses import replace
        lines = ["anchor_count,seed,te_mean,te_std"]
        for count in (int(v) for v in anchor_sweep.split(",")):
            for seed in seeds:
                run_cfg = replace(cfg, anchor_count=count, seed=seed)
                anchors = select_anchors(train_split, count, seed)
                _, report = train(run_cfg, train_split, anchors, test_split)
                lines.append(f"{count},{seed},{_fmt(report.te_mean)},"
                             f"{_fmt(report.te_std)}")
                print(f"ablate: |E|={count} seed={seed} TE={report.te_mean:.4f}")
        artifacts.append(_write_lines(out_dir, "anchor_sweep.csv", lines))
    else:
        result = run_ablation(cfg, train_split, test_split, cases, seeds)
        artifacts.append(_write_lines(out_dir, "ablation.csv", result.csv_lines()))
        artifacts.append(_write_lines(out_dir, "ablation_summary.csv",
                                      result.summary_csv_lines()))
        for row in result.rows:
            print(f"ablate: case={row.case:<12} seed={row.seed} "
                  f"TE={row.te_mean:.4f}")
        for case, med in result.medians.items():
            print(f"ablate: median TE [{case}] = {med:.4f}")
    sections = configio.train_config_sections(cfg)
    sections["io"] = {"data_dir": os.path.abspath(data_dir)}
    sections["ablate"] = {"cases": ",".join(cases),
                          "seeds": ",".join(str(s) for s in seeds)}
    if anchor_sweep:
        sections["ablate"]["anchor_sweep"] = anchor_sweep
    return artifacts, sections, cfg.seed


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "plot": cmd_plot,
    "probe-study": cmd_probe_study,
    "mpa-check": cmd_mpa_check,
    "sparsity-check": cmd_sparsity_check,
    "ablate": cmd_ablate,
}


def dispatch_from_config(command, config, out_dir):
    """Run a command from already-assembled config sections (replay path)."""
    if command not in COMMANDS:
        raise CliError(f"unknown command {command!r}")
    artifacts, sections, seed = COMMANDS[command](config, out_dir)
    manifest.write_manifest(out_dir, command, sections, seed, artifacts)
    return artifacts


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _build_parser():
    parser = argparse.ArgumentParser(
        prog="anchordt",
        description="anchored sparse transfer maps: data, training, probes, checks")
    sub = parser.add_subparsers(dest="command", required=True)
    specs = {
        "gen-data": "generate the 2D paired dataset as CSV + sidecar",
        "train": "train the transfer map on a generated dataset",
        "eval": "evaluate a generator checkpoint on a test split",
        "plot": "emit scatter panels (source / target / translated) as SVG",
        "probe-study": "bias/variance study of the sparse-probe estimator",
        "mpa-check": "run the measure-preserving automorphism check suite",
        "sparsity-check": "check structural sparsity of a support-pattern file",
        "ablate": "ablation grid or anchor-count sweep over seeds",
    }
    for name, help_text in specs.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="config file (key = value with [sections])")
        p.add_argument("--out-dir", required=True, help="output directory")
        p.add_argument("--override", action="append", default=[],
                       metavar="SECTION.KEY=VALUE",
                       help="override one config entry (repeatable)")
        if name in ("train", "eval", "plot", "ablate"):
            p.add_argument("--data-dir", help="directory holding train/test CSVs")
        if name == "eval":
            p.add_argument("--checkpoint", help="generator checkpoint path")
        if name == "plot":
            p.add_argument("--checkpoint", action="append", default=[],
                           metavar="LABEL=PATH",
                           help="generator checkpoint to add as a panel (repeatable)")
        if name == "sparsity-check":
            p.add_argument("--support-file", help="CSV of row,col index pairs")
    return parser


def _assemble_config(args):
    config = configio.load(args.config) if args.config else {}
    if getattr(args, "data_dir", None):
        config.setdefault("io", {})["data_dir"] = args.data_dir
    if args.command == "eval" and getattr(args, "checkpoint", None):
        config.setdefault("io", {})["checkpoint"] = args.checkpoint
    if args.command == "plot":
        for item in getattr(args, "checkpoint", []):
            label, _, path = item.partition("=")
            if not path:
                raise CliError(f"--checkpoint needs LABEL=PATH, got {item!r}")
            config.setdefault("plot.checkpoints", {})[label] = path
    if getattr(args, "support_file", None):
        config.setdefault("io", {})["support_file"] = args.support_file
    for item in args.override:
        target, _, value = item.partition("=")
        section, _, key = target.partition(".")
        if not key or not value:
            raise CliError(f"--override needs SECTION.KEY=VALUE, got {item!r}")
        config.setdefault(section, {})[key] = value
    return config


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = _assemble_config(args)
        dispatch_from_config(args.command, config, args.out_dir)
    except (CliError, configio.ConfigError, TrainingDiverged, ValueError) as exc:
        print(f"anchordt {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
