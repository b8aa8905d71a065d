"""``neural-implicit`` command line.

Every ``--flag`` sets exactly one :class:`RunConfig` field of the same name
(dashes for underscores). A ``--config`` file supplies a base configuration
that flags then override. Results go to stdout as ``key=value`` lines or CSV;
logging and per-epoch progress go to stderr.

Exit codes: 0 success, 1 quality target missed or every batch job failed,
2 bad input, 3 internal error.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
import time
from pathlib import Path

from . import fileformat
from .config import RunConfig, load_config
from .errors import InputError, NeuralImplicitError
from .evaluation import compare_representations
from .mesh import Mesh, load_mesh
from .pipeline import convert, convert_batch, prepare, write_batch_table
from .sampling import build_training_set, save_samples

log = logging.getLogger("neural_implicit")

EXIT_OK, EXIT_QUALITY, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2, 3


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def flag_table() -> str:
    rows = [(_flag(f.name), f.name, f.metadata.get("help", "")) for f in dataclasses.fields(RunConfig)]
    w1 = max(len(r[0]) for r in rows)
    w2 = max(len(r[1]) for r in rows)
    lines = ["flag -> RunConfig field:"]
    lines += [f"  {a:<{w1}}  {b:<{w2}}  {c}" for a, b, c in rows]
    lines.append("  (-o is short for --output; --config FILE loads key = value defaults)")
    return "\n".join(lines)


def _config_flags() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    group = parent.add_argument_group("configuration (see the flag table below)")
    group.add_argument("--config", metavar="FILE", help="key = value configuration file")
    for f in dataclasses.fields(RunConfig):
        kind = str(f.type)
        names = [_flag(f.name)] + (["-o"] if f.name == "output" else [])
        kw = dict(dest=f.name, default=argparse.SUPPRESS, help=f.metadata.get("help"))
        if kind.startswith("bool"):
            group.add_argument(*names, action=argparse.BooleanOptionalAction, **kw)
        elif kind.startswith("int"):
            group.add_argument(*names, type=int, metavar="N", **kw)
        elif kind.startswith("float"):
            group.add_argument(*names, type=float, metavar="X", **kw)
        else:
            group.add_argument(*names, metavar="S", **kw)
    return parent


def build_parser() -> argparse.ArgumentParser:
    parent = _config_flags()
    fmt = argparse.RawDescriptionHelpFormatter
    parser = argparse.ArgumentParser(
        prog="neural-implicit",
        description="Convert meshes into small signed-distance networks and render them.",
        epilog=flag_table(),
        formatter_class=fmt,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", parents=[parent], epilog=flag_table(), formatter_class=fmt,
                       help="train a network for one mesh and write a .ni file")
    p.add_argument("mesh", help="OBJ or STL file")

    p = sub.add_parser("render", parents=[parent], epilog=flag_table(), formatter_class=fmt,
                       help="sphere-march a scene expression into a PPM image")
    p.add_argument("scene", help="scene expression, or a path to a file containing one")

    p = sub.add_parser("eval", parents=[parent], epilog=flag_table(), formatter_class=fmt,
                       help="surface error of a .ni file against its mesh and a grid baseline")
    p.add_argument("ni", help=".ni file")
    p.add_argument("mesh", help="the mesh it was converted from")

    p = sub.add_parser("sample", parents=[parent], epilog=flag_table(), formatter_class=fmt,
                       help="dump the training samples for a mesh")
    p.add_argument("mesh", help="OBJ or STL file")

    p = sub.add_parser("batch", parents=[parent], epilog=flag_table(), formatter_class=fmt,
                       help="convert every mesh in a directory")
    p.add_argument("directory", help="directory of OBJ/STL meshes")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    names = {f.name for f in dataclasses.fields(RunConfig)}
    overrides = {k: v for k, v in vars(args).items() if k in names}
    return dataclasses.replace(cfg, **overrides)


def _progress(epoch: int, loss: float, seconds: float) -> None:
    log.info("epoch=%d loss=%.5g t=%.1fs", epoch, loss, seconds)


def _quality_status(error: float, cfg: RunConfig) -> int:
    if cfg.target_error is not None and error > cfg.target_error:
        log.warning("surface error %.6g misses the target %.6g", error, cfg.target_error)
        return EXIT_QUALITY
    return EXIT_OK


# ---- subcommands ----------------------------------------------------------


def cmd_convert(args, cfg: RunConfig) -> int:
    out = Path(cfg.output or Path(args.mesh).with_suffix(".ni").name)
    conv = convert(args.mesh, cfg, out, progress=_progress)
    print(f"output={out} {conv.report.line()}")
    if cfg.figures:
        from .plotting import loss_curve

        loss_curve(conv.training.history, out.with_suffix(".loss.png"), title=Path(args.mesh).name)
    return _quality_status(conv.report.surface_error, cfg)


def cmd_render(args, cfg: RunConfig) -> int:
    from .render import parse_scene, render, write_image

    text, base = args.scene, Path.cwd()
    candidate = Path(args.scene)
    if "(" not in args.scene and candidate.is_file():
        text, base = candidate.read_text(), candidate.parent
    scene = parse_scene(text, base, cfg.relaxation)
    out = Path(cfg.output or "render.ppm")
    t0 = time.perf_counter()
    result = render(scene, cfg.camera(), cfg.march(), cfg.light_direction())
    seconds = time.perf_counter() - t0
    write_image(result.image, out)
    print(f"output={out} hit_fraction={result.hit_fraction:.6g} wall_seconds={seconds:.6g} evaluations={result.evaluations}")
    if cfg.figures:
        from .plotting import image_panel

        image_panel(result.image, out.with_suffix(".png"))
    return EXIT_OK


def cmd_eval(args, cfg: RunConfig) -> int:
    implicit = fileformat.load(args.ni)
    raw = load_mesh(args.mesh)
    mesh = Mesh(implicit.transform.apply(raw.vertices), raw.triangles, raw.source_path)
    from .distance_field import MeshSdf

    oracle = MeshSdf(mesh, cfg.accuracy_beta, cfg.expansion_order)
    cmp = compare_representations(mesh, implicit.model, cfg.grid_resolution, cfg.surface_samples, cfg.seed, oracle)
    print(cmp.line())
    if cfg.figures:
        from .plotting import comparison_bars

        out = Path(cfg.output or Path(args.ni).with_suffix(".eval.png").name)
        comparison_bars([Path(args.mesh).name], [cmp.neural_error], [cmp.grid_error], out)
    return _quality_status(cmp.neural_error, cfg)


def cmd_sample(args, cfg: RunConfig) -> int:
    mesh, _, oracle = prepare(args.mesh, cfg)
    samples = build_training_set(oracle, cfg.sampling(), mesh)
    out = Path(cfg.output or Path(args.mesh).with_suffix(".nisa").name)
    save_samples(samples, out)
    inside = int((samples.sdf < 0).sum())
    print(f"output={out} count={len(samples)} inside={inside} strategy={cfg.strategy}")
    return EXIT_OK


def cmd_batch(args, cfg: RunConfig) -> int:
    out_dir = Path(cfg.output or "ni_out")
    summary = convert_batch(args.directory, cfg, out_dir, cfg.parallelism)
    table = write_batch_table(summary, out_dir / "report.csv")
    sys.stdout.write(table.read_text())
    for q, v in summary.quantiles().items():
        print(f"quantile={q:g} surface_error={v:.6g}")
    print(f"succeeded={len(summary.successes)} failed={len(summary.failures)}")
    if cfg.figures and summary.successes:
        from .plotting import error_histograms

        ok = summary.successes
        error_histograms([r.report.surface_error for r in ok], [r.report.training_loss for r in ok],
                         out_dir / "errors.png")
    return EXIT_QUALITY if not summary.successes else EXIT_OK


COMMANDS = {"convert": cmd_convert, "render": cmd_render, "eval": cmd_eval, "sample": cmd_sample, "batch": cmd_batch}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        logging.basicConfig(
            level=logging.DEBUG if cfg.verbose else logging.INFO,
            format="%(message)s",
            stream=sys.stderr,
            force=True,
        )
        return COMMANDS[args.command](args, cfg)
    except InputError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except NeuralImplicitError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # anything else is a bug
        log.debug("internal error", exc_info=True)
        print(f"error: internal: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
