"""Replicate orchestration for guided and unguided sampling runs.

Produces `<outdir>/rep<k>/sample<j>.pdb`, a tab-separated manifest with one
row per sample, and a per-replicate best-of-N summary.  Per-sample RNG
streams are derived from (seed, replicate, sample), so serial and parallel
executions emit identical files.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .alignment import dock_to_map
from .config import ConfigError, RunConfig
from .metrics import evaluate, rscc
from .pointcloud import cluster_count, extract_pointcloud
from .priors import chain_template, make_prior
from .forward import BlurOperator
from .sampler import (GuidanceContext, SamplingError, sample_guided,
                      sample_unguided)
from .structure import AtomicModel, read_pdb, write_pdb
from .volume import DensityMap, read_mrc

log = logging.getLogger(__name__)

WORKERS_ENV = "CRYOGUIDE_WORKERS"


@dataclass
class SampleRecord:
    replicate: int
    index: int
    seed_key: str
    path: str
    status: str            # "ok" or an error message
    rscc: float | None
    rmsd: float | None


def _worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


def _sample_seed(cfg_seed: int, rep: int, j: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(cfg_seed, spawn_key=(rep, j))


def _prior_and_template(cfg: RunConfig):
    if cfg.prior == "chain-two-mode":
        prior, template = make_prior(cfg.prior, hinge_deg=cfg.prior_hinge_deg,
                                     tau=cfg.prior_tau,
                                     minor_weight=cfg.prior_minor_weight)
    elif cfg.prior == "chain-single":
        prior, template = make_prior(cfg.prior, tau=cfg.prior_tau)
    else:
        raise ConfigError(f"unknown prior {cfg.prior!r}")
    if cfg.template:
        template = read_pdb(cfg.template)
        if len(template) != prior.n_atoms:
            raise ConfigError(f"template atom count {len(template)} does not "
                              f"match prior ({prior.n_atoms})")
    return prior, template


def build_context(cfg: RunConfig, dmap: DensityMap, prior, rep: int,
                  ref_index: int | None = None) -> GuidanceContext:
    """Assemble the guidance inputs for one replicate: point cloud, blur, and —
    when registration is on — an unguided reference docked into the map.

    `ref_index` selects the RNG stream of the reference sample; the default
    (one past the sample indices) gives one shared reference per replicate.
    """
    k = cfg.k_points or cluster_count(prior.n_atoms, dmap.voxel_size)
    cloud = extract_pointcloud(dmap, k, seed=cfg.seed)
    blur = BlurOperator(sigma_b=cfg.blur_sigma)
    transform = None
    reference = None
    if cfg.register:
        if ref_index is None:
            ref_index = cfg.n_samples
        ref_seed = _sample_seed(cfg.seed, rep, ref_index)
        ref_coords = sample_unguided(prior, None, cfg.noise_schedule(), ref_seed)
        ref_model = chain_template(ref_coords)
        transform, score = dock_to_map(ref_model, dmap, cfg.resolution,
                                       n_rotations=cfg.dock_rotations,
                                       seed=cfg.seed)
        reference = transform.apply(ref_coords)
        log.info("replicate %d: docked reference, score %.4f, rotation %.2f deg",
                 rep, score, transform.angle_degrees())
    return GuidanceContext(target_map=dmap, target_cloud=cloud,
                           resolution=cfg.resolution,
                           sinkhorn=cfg.sinkhorn_config(), blur=blur,
                           dock_transform=transform, reference=reference)


def _run_one_guided(args):
    cfg, ctx, rep, j = args
    prior, template = _prior_and_template(cfg)
    seed = _sample_seed(cfg.seed, rep, j)
    return sample_guided(prior, None, ctx, cfg.noise_schedule(),
                         cfg.guidance_schedule(), template, seed)


def run_guided(cfg: RunConfig) -> list[SampleRecord]:
    """Full guided run: every replicate and sample, manifest, and summary.

    Per-sample failures are logged and recorded; the run only fails outright
    when nothing succeeds.
    """
    if not cfg.map:
        raise ConfigError("config needs a map path")
    if not os.path.exists(cfg.map):
        raise ConfigError(f"map file not found: {cfg.map}")
    dmap = read_mrc(cfg.map)
    prior, template = _prior_and_template(cfg)
    reference = read_pdb(cfg.reference) if cfg.reference else None
    schedule = cfg.noise_schedule()
    gsched = cfg.guidance_schedule()

    os.makedirs(cfg.outdir, exist_ok=True)
    records: list[SampleRecord] = []
    workers = _worker_count()

    for rep in range(cfg.n_replicates):
        rep_dir = os.path.join(cfg.outdir, f"rep{rep}")
        os.makedirs(rep_dir, exist_ok=True)
        base_ctx = build_context(cfg, dmap, prior, rep)
        results: dict[int, AtomicModel | Exception] = {}

        def ctx_for(j: int) -> GuidanceContext:
            if cfg.register and cfg.dock_per_sample:
                return build_context(cfg, dmap, prior, rep,
                                     ref_index=cfg.n_samples + 1 + j)
            return base_ctx

        if workers == 1:
            for j in range(cfg.n_samples):
                try:
                    seed = _sample_seed(cfg.seed, rep, j)
                    results[j] = sample_guided(prior, None, ctx_for(j), schedule,
                                               gsched, template, seed)
                except (SamplingError, ValueError) as exc:
                    results[j] = exc
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futures = [(j, pool.submit(_run_one_guided,
                                           (cfg, ctx_for(j), rep, j)))
                           for j in range(cfg.n_samples)]
                for j, fut in futures:
                    try:
                        results[j] = fut.result()
                    except (SamplingError, ValueError) as exc:
                        results[j] = exc

        for j in range(cfg.n_samples):
            out = results[j]
            seed_key = f"{cfg.seed}:{rep}:{j}"
            path = os.path.join(rep_dir, f"sample{j}.pdb")
            if isinstance(out, Exception):
                log.warning("rep %d sample %d failed: %s", rep, j, out)
                records.append(SampleRecord(rep, j, seed_key, "", str(out),
                                            None, None))
                continue
            write_pdb(out, path)
            cc = rscc(out, dmap, cfg.resolution)
            rmsd = evaluate(out, reference).rmsd_all if reference else None
            records.append(SampleRecord(rep, j, seed_key, path, "ok", cc, rmsd))
            log.info("rep %d sample %d: rscc %.4f", rep, j, cc)

    _write_manifest(cfg, records)
    _write_summary(cfg, records)
    if not any(r.status == "ok" for r in records):
        raise RuntimeError("all samples failed")
    return records


def run_unguided(cfg: RunConfig) -> list[SampleRecord]:
    """Unguided baseline run with the same output layout as the guided one."""
    prior, template = _prior_and_template(cfg)
    dmap = read_mrc(cfg.map) if cfg.map and os.path.exists(cfg.map) else None
    reference = read_pdb(cfg.reference) if cfg.reference else None
    schedule = cfg.noise_schedule()
    os.makedirs(cfg.outdir, exist_ok=True)
    records = []
    for rep in range(cfg.n_replicates):
        rep_dir = os.path.join(cfg.outdir, f"rep{rep}")
        os.makedirs(rep_dir, exist_ok=True)
        for j in range(cfg.n_samples):
            seed = _sample_seed(cfg.seed, rep, j)
            coords = sample_unguided(prior, None, schedule, seed)
            model = template.with_coords(coords)
            path = os.path.join(rep_dir, f"sample{j}.pdb")
            write_pdb(model, path)
            cc = rscc(model, dmap, cfg.resolution) if dmap is not None else None
            rmsd = evaluate(model, reference).rmsd_all if reference else None
            records.append(SampleRecord(rep, j, f"{cfg.seed}:{rep}:{j}", path,
                                        "ok", cc, rmsd))
    _write_manifest(cfg, records)
    return records


def _fmt(x: float | None) -> str:
    return "" if x is None else f"{x:.6f}"


def _write_manifest(cfg: RunConfig, records: list[SampleRecord]) -> None:
    path = os.path.join(cfg.outdir, "manifest.tsv")
    with open(path, "w") as fh:
        fh.write("replicate\tsample\tseed\tstatus\trscc\trmsd\n")
        for r in records:
            fh.write(f"{r.replicate}\t{r.index}\t{r.seed_key}\t{r.status}\t"
                     f"{_fmt(r.rscc)}\t{_fmt(r.rmsd)}\n")


def _write_summary(cfg: RunConfig, records: list[SampleRecord]) -> None:
    path = os.path.join(cfg.outdir, "summary.tsv")
    with open(path, "w") as fh:
        fh.write("replicate\tn_ok\tbest_sample\tbest_rscc\tbest_rmsd\n")
        for rep in range(cfg.n_replicates):
            ok = [r for r in records if r.replicate == rep and r.status == "ok"]
            if not ok:
                fh.write(f"{rep}\t0\t\t\t\n")
                continue
            best = max(ok, key=lambda r: (r.rscc, -r.index))
            rmsds = [r.rmsd for r in ok if r.rmsd is not None]
            best_rmsd = min(rmsds) if rmsds else None
            fh.write(f"{rep}\t{len(ok)}\t{best.index}\t{_fmt(best.rscc)}\t"
                     f"{_fmt(best_rmsd)}\n")
