"""Command-line entry point ``visolve``.

Exit codes: 0 success (or bound PASS), 1 bound FAIL or failed run, 2 input error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path


EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2

DEFAULT_SLACK = {"eg": 2.0, "vr-eg": 1.05}


def _cmd_run(args):
    from .bench import load_config, run_experiment

    cfg = load_config(args.config)
    if args.output:
        cfg.output = Path(args.output)
    if args.jobs:
        cfg.jobs = args.jobs
    res = run_experiment(cfg)
    print("schedule,seed,oracle_calls,sq_dist,residual")
    for (schedule, seed), tr in res.traces.items():
        last = tr.records[-1]
        print(f"{schedule},{seed},{last.oracle_calls},{last.sq_dist!r},"
              f"{'' if last.residual is None else repr(last.residual)}")
    for name, err in res.errors.items():
        print(f"error: {name}: {err}", file=sys.stderr)
    print(f"wrote {len(res.traces)} traces to {res.directory}", file=sys.stderr)
    return EXIT_FAIL if res.errors else EXIT_OK


def _cmd_reference(args):
    from .bench import build_problem, load_config, prepare_problem
    from .core import natural_residual

    cfg = load_config(args.config)
    if args.tol:
        cfg.reference_tol = args.tol
    out = Path(args.output) if args.output else cfg.output
    problem = prepare_problem(cfg, build_problem(cfg), out)
    res = natural_residual(problem, problem.reference)
    print(f"reference,{out / 'reference.npz'},residual,{res!r},tol,{problem.reference_tol!r}")
    return EXIT_OK


def _cmd_check(args):
    from .bench import check_theorem_bounds, load_traces, problem_from_manifest, read_manifest, verify_manifest

    manifest = read_manifest(args.trace_dir)
    bad = verify_manifest(args.trace_dir)
    if bad:
        print(f"manifest hash mismatch: {', '.join(bad)}", file=sys.stderr)
        return EXIT_INPUT
    traces = load_traces(args.trace_dir, manifest)
    problem = problem_from_manifest(args.trace_dir, manifest)
    method = manifest["solver"]["method"]
    slack = args.slack if args.slack is not None else DEFAULT_SLACK.get(method, 1.0)
    reports = []
    for schedule in sorted({t.schedule for t in traces}):
        group = [t for t in traces if t.schedule == schedule]
        rep = check_theorem_bounds(group, problem, slack=slack, min_seeds=args.min_seeds)
        reports.append((schedule, rep))
        Path(args.trace_dir, f"bounds_{schedule}.csv").write_text(rep.to_csv())
    print("schedule,verdict,worst_ratio,slack,seeds,step_condition")
    for schedule, rep in reports:
        print(f"{schedule},{'PASS' if rep.passed else 'FAIL'},{rep.worst_ratio:.6g},{rep.slack:g},"
              f"{rep.seeds},{'met' if rep.step_ok else 'violated'}")
        for note in rep.notes:
            print(f"note: {schedule}: {note}", file=sys.stderr)
    return EXIT_OK if all(r.passed for _, r in reports) else EXIT_FAIL


def _cmd_fetch(args):
    from .ingest import DATASETS, fetch_dataset, load_dataset

    if args.name not in DATASETS and not args.url:
        print(f"unknown dataset {args.name!r}; known: {', '.join(DATASETS)} (or pass --url)", file=sys.stderr)
        return EXIT_INPUT
    try:
        path = fetch_dataset(args.name, args.data_dir, args.url)
    except OSError as exc:
        print(f"download failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    ds = load_dataset(args.name, args.data_dir)
    print(f"{args.name},{path},{ds.n_samples},{ds.n_features}")
    return EXIT_OK


def _cmd_plotdata(args):
    from .bench import emit_plot_data, load_traces, read_manifest, read_summary
    from .ingest import load_pgm

    run_dir = Path(args.trace_dir)
    manifest = read_manifest(run_dir)
    traces = load_traces(run_dir, manifest)
    long_csv, summary_csv = emit_plot_data(traces)
    out = Path(args.out) if args.out else run_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "plot_long.csv").write_text(long_csv)
    (out / "plot_summary.csv").write_text(summary_csv)
    written = [out / "plot_long.csv", out / "plot_summary.csv"]
    if not args.no_figures:
        from .bench.figures import render_image, render_summary

        title = f"{manifest['problem']['kind']} / {manifest['solver']['method']}"
        written += render_summary(read_summary(summary_csv), out / "figures", title)
        for e in manifest["traces"]:
            if "image" in e:
                img = load_pgm(run_dir / e["image"])
                png = out / "figures" / Path(e["image"]).with_suffix(".png").name
                written.append(render_image(img, png, f"{e['schedule']} seed {e['seed']}: {e['psnr']:.2f} dB"))
        if (run_dir / "noisy.pgm").exists():
            written.append(render_image(load_pgm(run_dir / "noisy.pgm"), out / "figures" / "noisy.png",
                                        f"noisy: {manifest['problem']['noisy_psnr']:.2f} dB"))
    for p in written:
        print(p)
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="visolve", description="Shuffled extragradient experiments.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the experiment grid of a config file")
    p.add_argument("config")
    p.add_argument("--output", help="override the output directory")
    p.add_argument("--jobs", type=int, help="concurrent cells")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("reference", help="compute and cache the reference solution")
    p.add_argument("config")
    p.add_argument("--tol", type=float, help="natural-residual tolerance")
    p.add_argument("--output", help="override the output directory")
    p.set_defaults(func=_cmd_reference)

    p = sub.add_parser("check", help="check traces against the theoretical bounds")
    p.add_argument("trace_dir")
    p.add_argument("--slack", type=float, help="multiplicative slack (default 2.0 for eg, 1.05 for vr-eg)")
    p.add_argument("--min-seeds", type=int, default=20)
    p.set_defaults(func=_cmd_check)

    p = sub.add_parser("fetch-data", help="download a LIBSVM dataset")
    p.add_argument("name")
    p.add_argument("--data-dir", default="data")
    p.add_argument("--url")
    p.set_defaults(func=_cmd_fetch)

    p = sub.add_parser("plotdata", help="write long-format plot data, summaries and figures")
    p.add_argument("trace_dir")
    p.add_argument("--out", help="output directory (default: the trace directory)")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=_cmd_plotdata)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    from .bench import ConfigError, ReferenceError

    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ReferenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
