"""Mesh-to-network conversion, single and batched."""

from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fileformat
from .config import RunConfig
from .distance_field import MeshSdf
from .errors import EmptyCorpus, NeuralImplicitError
from .evaluation import EvalReport, model_field, surface_error
from .mesh import Mesh, NormalizationTransform, load_mesh, normalize_to_unit_sphere
from .network import MlpModel, TrainResult, init_model, train
from .sampling import TrainingSet, build_training_set

log = logging.getLogger(__name__)

MESH_SUFFIXES = (".obj", ".stl")


@dataclass
class Conversion:
    model: MlpModel
    transform: NormalizationTransform
    mesh: Mesh  # normalized
    training: TrainResult
    samples: TrainingSet
    report: EvalReport


def prepare(mesh_path, cfg: RunConfig):
    mesh, transform = normalize_to_unit_sphere(load_mesh(mesh_path), cfg.padding)
    return mesh, transform, MeshSdf(mesh, cfg.accuracy_beta, cfg.expansion_order)


def convert(mesh_path, cfg: RunConfig, out_path=None, progress=None) -> Conversion:
    """Load, normalize, sign, sample, train, evaluate and (optionally) save."""
    t0 = time.perf_counter()
    mesh, transform, oracle = prepare(mesh_path, cfg)
    samples = build_training_set(oracle, cfg.sampling(), mesh)
    model = init_model(cfg.architecture(), cfg.seed)
    result = train(model, samples.positions, samples.targets(), cfg.training(), progress)
    err = surface_error(model_field(result.model), mesh, cfg.surface_samples, cfg.seed)
    size = fileformat.file_size(cfg.architecture())
    if out_path is not None:
        size = fileformat.save(result.model, transform, out_path)
    report = EvalReport(
        surface_error=err,
        training_loss=result.best_loss,
        surface_sample_count=cfg.surface_samples,
        epochs_ran=result.epochs_ran,
        file_bytes=size,
        wall_seconds=time.perf_counter() - t0,
    )
    return Conversion(result.model, transform, mesh, result, samples, report)


# --------------------------------------------------------------------------
# batch conversion
# --------------------------------------------------------------------------


@dataclass
class BatchRow:
    mesh: str
    ok: bool
    report: EvalReport | None = None
    error: str = ""


@dataclass
class BatchSummary:
    rows: list[BatchRow] = field(default_factory=list)

    @property
    def successes(self) -> list[BatchRow]:
        return [r for r in self.rows if r.ok]

    @property
    def failures(self) -> list[BatchRow]:
        return [r for r in self.rows if not r.ok]

    def quantiles(self, qs=(0.0, 0.25, 0.5, 0.75, 0.9, 1.0)) -> dict[float, float]:
        errs = np.array([r.report.surface_error for r in self.successes])
        if len(errs) == 0:
            return {}
        return {q: float(np.quantile(errs, q)) for q in qs}


def find_meshes(directory) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise EmptyCorpus(f"{d}: not a directory")
    meshes = sorted(p for p in d.iterdir() if p.suffix.lower() in MESH_SUFFIXES and p.is_file())
    if not meshes:
        raise EmptyCorpus(f"{d}: no .obj or .stl meshes")
    return meshes


def _batch_job(args) -> BatchRow:
    path, cfg, out_dir = args
    try:
        conv = convert(path, cfg, Path(out_dir) / (Path(path).stem + ".ni"))
        return BatchRow(Path(path).name, True, conv.report)
    except NeuralImplicitError as exc:
        return BatchRow(Path(path).name, False, error=f"{type(exc).__name__}: {exc}")
    except Exception as exc:  # isolate per-mesh failures
        return BatchRow(Path(path).name, False, error=f"{type(exc).__name__}: {exc}")


def convert_batch(directory, cfg: RunConfig, out_dir, parallelism: int = 1) -> BatchSummary:
    """Convert every mesh in ``directory``; rows come back in file-name order."""
    meshes = find_meshes(directory)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(str(p), cfg, str(out_dir)) for p in meshes]
    if parallelism <= 1:
        rows = [_batch_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            rows = list(pool.map(_batch_job, jobs))
    for r in rows:
        if not r.ok:
            log.error("%s: %s", r.mesh, r.error)
    return BatchSummary(rows)


def write_batch_table(summary: BatchSummary, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mesh", "status"] + EvalReport.header() + ["error"])
        for r in summary.rows:
            values = r.report.row() if r.report else [""] * len(EvalReport.header())
            w.writerow([r.mesh, "ok" if r.ok else "failed"] + values + [r.error])
    return path
