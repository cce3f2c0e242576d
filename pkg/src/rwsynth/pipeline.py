"""Pipeline stages behind the CLI.

Each stage reads the previous stage's files from the output directory, so a
staged run (``risk``, ``weights``, ``synthesize``, ``evaluate``) and a
one-shot ``pipeline`` run execute the same code on the same inputs.
"""
from __future__ import annotations

import contextlib
import dataclasses
import json
import os
import zlib
from datetime import datetime, timezone
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np
from scipy import stats

from .config import RunConfig
from .data_model import BallConfig, Dataset, build_pattern_index, load_dataset
from .report import emit_report, read_table, topcode, whack_a_mole, write_table
from .risk import (
    RiskVector,
    average_risks,
    marginal_risk_confidential,
    marginal_risk_synthetic,
    pairwise_risk_confidential,
    risk_summary,
)
from .rng import STAGES, child_rngs, stage_seed
from .samplers import fit_mixture_pseudo, fit_nb_pseudo, load_header, save_draws
from .synth import (
    ResponseTransform,
    SyntheticSet,
    design_matrix,
    generate_mixture_synthetic,
    generate_nb_synthetic,
    read_synthetic_set,
    write_synthetic_set,
)
from .utility import bootstrap_estimate, combine_bootstrap, combine_partial, ecdf_utility, ols_coefficient
from .weights import (
    adjust_weights,
    marginal_weights,
    mean_pair_risk,
    pairwise_weights_from_mean,
    read_weights,
    unit_weights,
    write_weights,
)

RISKS_FILE = "risks.csv"
WEIGHTS_FILE = "weights.csv"
TRACE_FILE = "trace.npz"
SYNTHETIC_DIR = "synthetic"
LOCK_FILE = ".rwsynth.lock"


class RiskCeilingError(RuntimeError):
    """Synthetic-data risk exceeded the configured ceiling (report still written)."""


class OutputLockedError(RuntimeError):
    """Another run holds the output directory."""


@contextlib.contextmanager
def output_lock(outdir):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    lock = outdir / LOCK_FILE
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise OutputLockedError(f"{outdir} is in use by another run (remove {lock} if stale)") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield outdir
    finally:
        lock.unlink(missing_ok=True)


def _version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "unknown"


def _ball(cfg: RunConfig) -> BallConfig:
    return BallConfig(cfg.ball.r, cfg.ball.negative_center_policy, cfg.ball.zero_center_epsilon)


def load_confidential(cfg: RunConfig):
    schema = cfg.load_schema()
    ds = load_dataset(cfg.input, schema, cfg.delimiter)
    idx = build_pattern_index(ds, cfg.pattern_vars)
    return ds, idx


def write_config_echo(cfg: RunConfig, outdir) -> None:
    (Path(outdir) / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")


# -- stages ------------------------------------------------------------------


def run_risk(cfg: RunConfig, outdir) -> Path:
    """Confidential marginal risk and mean pairwise risk per record."""
    ds, idx = load_confidential(cfg)
    ball = _ball(cfg)
    rv = marginal_risk_confidential(ds, idx, ball, cfg.risk.singleton_policy)
    pm = pairwise_risk_confidential(ds, idx, ball, cfg.risk.singleton_policy, n_jobs=cfg.risk.n_jobs)
    singles = np.zeros(ds.n)
    singles[list(rv.singletons)] = 1
    path = Path(outdir) / RISKS_FILE
    write_table(path, {"marginal": rv.values, "pairwise_mean": mean_pair_risk(pm, idx), "singleton": singles})
    return path


def _weights_from_table(cfg: RunConfig, tab: dict):
    singles = tuple(int(i) for i in np.flatnonzero(tab["singleton"]))
    scheme = cfg.weights.scheme
    if scheme == "unit":
        return unit_weights(tab["marginal"].size)
    if scheme == "marginal":
        rv = RiskVector(tab["marginal"], "confidential", singletons=singles)
        return marginal_weights(rv, cfg.weights.floor)
    return pairwise_weights_from_mean(tab["pairwise_mean"], singles, cfg.weights.floor)


def run_weights(cfg: RunConfig, outdir, risks_path=None) -> Path:
    outdir = Path(outdir)
    risks_path = Path(risks_path) if risks_path is not None else outdir / RISKS_FILE
    if not risks_path.exists():
        risks_path = run_risk(cfg, outdir)
    wv = _weights_from_table(cfg, read_table(risks_path))
    if (cfg.weights.c, cfg.weights.g) != (1.0, 0.0):
        wv = adjust_weights(wv, cfg.weights.c, cfg.weights.g)
    path = outdir / WEIGHTS_FILE
    write_weights(path, wv)
    return path


def run_synthesize(cfg: RunConfig, outdir, weights_path=None) -> Path:
    """Fit the weighted synthesizer and write the trace and ``L`` datasets."""
    outdir = Path(outdir)
    weights_path = Path(weights_path) if weights_path is not None else outdir / WEIGHTS_FILE
    if not weights_path.exists():
        weights_path = run_weights(cfg, outdir)
    ds, _ = load_confidential(cfg)
    wv = read_weights(weights_path)
    if len(wv) != ds.n:
        raise ValueError(f"{weights_path}: {len(wv)} weights for {ds.n} records")
    fit_ss, syn_ss = stage_seed(cfg.seed, "fit"), stage_seed(cfg.seed, "synthesis")
    syn = cfg.synthesizer
    prov = {
        "family": syn.family,
        "scheme": cfg.weights.scheme,
        "weights": wv.tag,
        "c": cfg.weights.c,
        "g": cfg.weights.g,
        "floor": cfg.weights.floor,
        "r": cfg.ball.r,
    }
    if syn.family == "mixture":
        X, names = design_matrix(ds, syn.predictors)
        tr = ResponseTransform.for_data(ds.y, syn.model_on_log)
        draws = fit_mixture_pseudo(tr.forward(ds.y), X, wv, cfg.mixture_config(), rng=fit_ss)
        prov.update(model_on_log=tr.log, log_shift=tr.shift, design=names)
        sset = generate_mixture_synthetic(draws, ds, cfg.L, syn_ss, X, tr, prov)
    else:
        draws = fit_nb_pseudo(ds.y, wv, cfg.nb_config(), rng=fit_ss)
        sset = generate_nb_synthetic(draws, ds, cfg.L, syn_ss, prov)
    sset = dataclasses.replace(sset, seed=cfg.seed)
    save_draws(draws, outdir / TRACE_FILE, seed=cfg.seed)
    return write_synthetic_set(sset, outdir / SYNTHETIC_DIR, cfg.delimiter)


# -- evaluation --------------------------------------------------------------


def _synthetic_risk(conf: Dataset, sset: SyntheticSet, idx, ball) -> RiskVector:
    for d in sset.datasets:
        if d.n != conf.n or not conf.same_nonsensitive(d):
            raise ValueError("synthetic data do not match the confidential source outside the sensitive column")
    return average_risks([marginal_risk_synthetic(conf, d, idx, ball) for d in sset.datasets])


def _ols_ci(est: float, var: float, level: float, statistic: str) -> dict:
    half = float(stats.norm.ppf(0.5 + level / 2)) * np.sqrt(var)
    return {"point": est, "lower": est - half, "upper": est + half, "method": "ols",
            "statistic": statistic, "variance": var, "df": None}


def _utility(cfg: RunConfig, data, rngs, conf: Dataset) -> dict:
    """Utility block for one release. ``data`` is a Dataset or a SyntheticSet."""
    ev = cfg.evaluate
    out = {"estimates": [], "regression": None, "ecdf": None}
    for stat, rng in zip(ev.statistics, rngs):
        if isinstance(data, SyntheticSet):
            ci = combine_bootstrap(data, stat, ev.B, rng, ev.level)
        else:
            ci = bootstrap_estimate(data, stat, ev.B, rng, ev.level)
        out["estimates"].append(ci.to_dict())
    reg = ev.regression
    if reg is not None:
        label = f"coef[{reg.target[0]}={reg.target[1]}]"
        if isinstance(data, SyntheticSet):
            pairs = [ols_coefficient(d, reg.predictors, reg.target) for d in data.datasets]
            out["regression"] = combine_partial([p[0] for p in pairs], [p[1] for p in pairs],
                                                ev.level, label).to_dict()
        else:
            out["regression"] = _ols_ci(*ols_coefficient(data, reg.predictors, reg.target), ev.level, label)
    if data is not conf:
        out["ecdf"] = ecdf_utility(conf, data).to_dict()
    return out


def _seeds(master: int) -> dict:
    return {
        "master": master,
        "stages": {s: {"entropy": master, "spawn_key": [zlib.crc32(s.encode())]} for s in STAGES},
    }


def run_evaluate(cfg: RunConfig, outdir, manifest=None, baseline=None) -> dict:
    """Score risk and utility, compare with an optional baseline, write the report.

    Returns the report document. Raises :class:`RiskCeilingError` after the
    report is written when the configured ceiling is exceeded.
    """
    outdir = Path(outdir)
    ds, idx = load_confidential(cfg)
    ball = _ball(cfg)
    ev = cfg.evaluate
    baseline = baseline if baseline is not None else ev.baseline
    manifest = Path(manifest) if manifest is not None else outdir / SYNTHETIC_DIR / "manifest.json"
    sset = read_synthetic_set(manifest)

    risks_path = outdir / RISKS_FILE
    if not risks_path.exists():
        run_risk(cfg, outdir)
    tab = read_table(risks_path)
    weights_path = outdir / WEIGHTS_FILE
    used = read_weights(weights_path) if weights_path.exists() else None

    # one bootstrap stream per (release, statistic); releases never shift each other
    n_stat = len(ev.statistics)
    boot = child_rngs(stage_seed(cfg.seed, "bootstrap"), 4 * n_stat)
    streams = {k: boot[j * n_stat:(j + 1) * n_stat]
               for j, k in enumerate(("confidential", "synthetic", "baseline", "topcoding"))}

    syn_risk = _synthetic_risk(ds, sset, idx, ball)
    name = str(sset.provenance.get("scheme", "synthetic"))
    releases = [{
        "name": name, "role": "run", "manifest": str(manifest), "L": sset.L,
        "provenance": sset.provenance, "risk": risk_summary(syn_risk).to_dict(),
        "utility": _utility(cfg, sset, streams["synthetic"], ds),
    }]
    record_risks = {
        "confidential_marginal": tab["marginal"],
        "confidential_pairwise_mean": tab["pairwise_mean"],
        name: syn_risk.values,
    }
    wam = None
    if baseline is not None:
        bset = read_synthetic_set(baseline)
        b_risk = _synthetic_risk(ds, bset, idx, ball)
        bname = "baseline:" + str(bset.provenance.get("scheme", "synthetic"))
        releases.append({
            "name": bname, "role": "baseline", "manifest": str(baseline), "L": bset.L,
            "provenance": bset.provenance, "risk": risk_summary(b_risk).to_dict(),
            "utility": _utility(cfg, bset, streams["baseline"], ds),
        })
        record_risks[bname] = b_risk.values
        wam = {"base": bname, "weighted": name,
               **whack_a_mole(b_risk, syn_risk, ev.whack_a_mole_threshold).to_dict()}
    if ev.topcode_quantile is not None:
        tc = topcode(ds, ev.topcode_quantile)
        tc_risk = marginal_risk_synthetic(ds, tc, idx, ball)
        releases.append({
            "name": "topcoding", "role": "topcoding", "manifest": None, "L": 1,
            "provenance": {"quantile": ev.topcode_quantile, "value": float(tc.y.max()),
                           "n_topcoded": int(np.count_nonzero(tc.y != ds.y))},
            "risk": risk_summary(tc_risk).to_dict(),
            "utility": _utility(cfg, tc, streams["topcoding"], ds),
        })
        record_risks["topcoding"] = tc_risk.values

    trace = outdir / TRACE_FILE
    diagnostics = None
    if trace.exists() and manifest.parent == outdir / SYNTHETIC_DIR:
        h = load_header(trace)
        diagnostics = {"family": h["family"], "acceptance": h["acceptance"], "rhat": h["rhat"]}

    max_risk = float(syn_risk.values.max())
    violated = cfg.risk_ceiling is not None and max_risk > cfg.risk_ceiling
    singles = [int(i) for i in np.flatnonzero(tab["singleton"])]
    report = {
        "tool": {"name": "rwsynth", "version": _version()},
        "created_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "config": cfg.to_dict(),
        "seeds": _seeds(cfg.seed),
        "data": {
            "n": ds.n,
            "n_patterns": len(idx.groups),
            "smallest_pattern": int(idx.sizes.min()),
            "largest_pattern": int(idx.sizes.max()),
            "singletons": singles,
        },
        "confidential": {
            "risk": {"marginal": risk_summary(tab["marginal"]).to_dict(),
                     "pairwise_mean": risk_summary(tab["pairwise_mean"]).to_dict()},
            "utility": _utility(cfg, ds, streams["confidential"], ds),
        },
        "weights": None if used is None else {
            "provenance": used.tag,
            "mean": float(used.values.mean()),
            "min": float(used.values.min()),
            "max": float(used.values.max()),
            "n_zero": int(np.count_nonzero(used.values == 0)),
        },
        "synthesizers": releases,
        "whack_a_mole": wam,
        "diagnostics": diagnostics,
        "risk_ceiling": {"ceiling": cfg.risk_ceiling, "max_synthetic_risk": max_risk, "violated": violated},
        "methods": {
            "synthetic_risk": "mean over the L datasets of per-dataset record risk",
            "synthetic_bootstrap": "percentile bootstrap within each dataset, combined across datasets",
            "ecdf": "confidential versus pooled synthetic values on the merged support",
        },
    }
    tables = {"record_risks": record_risks}
    if used is not None:
        singles_t = tuple(singles)
        tables["record_weights"] = {
            "used": used.values,
            "unit": np.ones(ds.n),
            "marginal": marginal_weights(RiskVector(tab["marginal"], "confidential", singletons=singles_t),
                                         cfg.weights.floor).values,
            "pairwise": pairwise_weights_from_mean(tab["pairwise_mean"], singles_t, cfg.weights.floor).values,
        }
    emit_report(outdir, report, tables)
    if violated:
        raise RiskCeilingError(f"maximum synthetic risk {max_risk:.4f} exceeds the ceiling {cfg.risk_ceiling}")
    return report


def run_pipeline(cfg: RunConfig, outdir) -> dict:
    write_config_echo(cfg, outdir)
    run_risk(cfg, outdir)
    run_weights(cfg, outdir)
    run_synthesize(cfg, outdir)
    return run_evaluate(cfg, outdir)
