"""Batch experiment runner.

Every subcommand resolves its options (flags override ``--config`` YAML,
which overrides the defaults below), prints one JSON summary object on
stdout and, with ``--out``, writes JSON-lines records whose first line is
``{"schema_version", "command", "config"}``.  ``--csv`` writes the same
records as a table.

Exit codes: 0 success, 2 configuration error, 3 cap or horizon exhausted,
4 internal invariant failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from typing import Any, Dict, List, Optional

import numpy as np

SCHEMA_VERSION = 1

EXIT_OK, EXIT_CONFIG, EXIT_CAP, EXIT_INVARIANT = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


def _levels(text) -> List[int]:
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    return [int(v) for v in str(text).split(",") if v.strip()]


# name -> (type, default, help); ``None`` default means optional
_COMMON = {
    "seed": (int, 0, "base seed of the replica streams"),
    "threads": (int, None, "worker processes (default: $SPATIAL_MORAN_THREADS or 1)"),
}
COMMANDS: Dict[str, Dict[str, tuple]] = {
    "estimate-nu": {
        "dim": (int, 1, "lattice dimension"),
        "lambda": (float, 1.0, "relative fitness of type 1"),
        "u2": (float, 1e-6, "1->2 mutation rate"),
        "reps": (int, 10_000, "number of families"),
        "dynamics": (str, "biased_voter", "biased_voter or komarova"),
        "beta": (float, None, "beta_d for the d = 3 prediction"),
        "per_family": (bool, False, "write one record per family"),
        **_COMMON,
    },
    "tau2": {
        "dim": (int, 1, "lattice dimension"),
        "side": (int, None, "torus side L (required)"),
        "lambda": (float, 1.0, "relative fitness of type 1"),
        "u1": (float, None, "0->1 mutation rate (required)"),
        "u2": (float, None, "1->2 mutation rate (required)"),
        "reps": (int, 100, "number of tau2 samples"),
        "dynamics": (str, "biased_voter", "biased_voter or komarova"),
        "beta": (float, None, "beta_d for the d = 3 prediction"),
        **_COMMON,
    },
    "boundary": {
        "dim": (int, 2, "lattice dimension"),
        "levels": (_levels, [10, 100, 1000], "comma-separated sizes k"),
        "reps": (int, 20, "families that must reach the largest level"),
        **_COMMON,
    },
    "predict": {
        "dim": (int, 1, "lattice dimension"),
        "side": (int, None, "torus side L"),
        "u1": (float, None, "0->1 mutation rate"),
        "u2": (float, 1e-6, "1->2 mutation rate"),
        "beta": (float, None, "beta_d (d = 3: estimated when omitted)"),
        "seed": (int, 0, "seed for the beta_3 estimate"),
    },
    "diffusion": {
        "dim": (int, 1, "dimension of the limit process"),
        "eps": (float, 0.01, "starting value Y_0"),
        "dt": (float, None, "time step near 0 (default eps/1000)"),
        "reps": (int, 10_000, "root paths"),
        "u2": (float, None, "if given, also predict nu_d^eps"),
        "beta": (float, None, "beta_d (d = 3: estimated when omitted)"),
        **_COMMON,
    },
    "oracle": {
        "dim": (int, 1, "dimension of the size chain"),
        "max_level": (int, 50, "absorbing level M = n eps"),
        "lambda": (float, 1.0, "bias of the chain"),
        "u2": (float, None, "if given with eps, small-family bound coefficients"),
        "eps": (float, None, "epsilon for the small-family bounds"),
        "beta": (float, None, "beta_d (d = 3: estimated when omitted)"),
        "seed": (int, 0, "seed for the beta_3 estimate"),
    },
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spatial-moran", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, opts in COMMANDS.items():
        p = sub.add_parser(name)
        for key, (typ, default, text) in opts.items():
            flag = "--" + key.replace("_", "-")
            if typ is bool:
                p.add_argument(flag, dest=key, action="store_true", default=argparse.SUPPRESS,
                               help=text)
            else:
                p.add_argument(flag, dest=key, type=typ, default=argparse.SUPPRESS,
                               help=f"{text} (default: {default})")
        p.add_argument("--config", help="YAML file with the same keys as the flags")
        p.add_argument("--out", help="JSON-lines record file")
        p.add_argument("--csv", help="CSV record file")
        p.add_argument("--summary", help="also write the summary JSON here")
    return parser


def resolve_config(command: str, flags: Dict[str, Any], path: Optional[str]) -> Dict[str, Any]:
    opts = COMMANDS[command]
    cfg = {k: v[1] for k, v in opts.items()}
    if path:
        import yaml

        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a mapping")
        for key, value in data.items():
            k = str(key).replace("-", "_")
            if k not in opts:
                raise ConfigError(f"unknown config key {key!r} for {command}")
            typ = opts[k][0]
            cfg[k] = value if value is None else (bool(value) if typ is bool else typ(value))
    cfg.update(flags)
    return cfg


# -- commands ---------------------------------------------------------------


def _beta_for(d: int, beta: Optional[float], seed: int) -> Optional[float]:
    from .analytic import BETA_2
    from .engine import estimate_beta

    if d == 1:
        return None
    if beta is not None:
        return beta
    if d == 2:
        return BETA_2
    return estimate_beta(seed=seed).beta


def _params(cfg, geometry, **kw):
    from .engine import SimParams

    return SimParams(geometry, lam=cfg["lambda"], seed=cfg["seed"],
                     dynamics=cfg["dynamics"], **kw)


def cmd_estimate_nu(cfg):
    from .analytic import gamma_d, h_d
    from .engine import estimate_nu
    from .lattice import Geometry

    p = _params(cfg, Geometry.unbounded(cfg["dim"]), u2=cfg["u2"])
    est = estimate_nu(p, cfg["reps"], threads=cfg["threads"])
    summary = {
        "nu_hat": est.nu_hat, "stderr": est.stderr, "reps": est.reps,
        "n_capped": est.n_capped, "n_size_capped": est.n_size_capped,
    }
    d = cfg["dim"]
    if 0 < cfg["u2"] < 1 and (d < 3 or cfg["beta"] is not None):
        pred = gamma_d(d, cfg["beta"]) * h_d(d, cfg["u2"])
        summary.update(nu_pred=pred, ratio=est.nu_hat / pred)
    records = []
    if cfg["per_family"]:
        records = [{"family": i, "nu_contribution": float(x)} for i, x in enumerate(est.samples)]
    return records, summary


def cmd_tau2(cfg):
    from .analytic import tau2_rate
    from .engine import sample_tau2
    from .lattice import Geometry
    from .stats import ks_exponential

    for key in ("side", "u1", "u2"):
        if cfg[key] is None:
            raise ConfigError(f"tau2 requires --{key}")
    if not cfg["u1"] > 0 or not cfg["u2"] > 0:
        raise ConfigError("tau2 requires u1 > 0 and u2 > 0")
    g = Geometry.torus(cfg["dim"], cfg["side"])
    p = _params(cfg, g, u1=cfg["u1"], u2=cfg["u2"])
    batch = sample_tau2(p, cfg["reps"], threads=cfg["threads"])
    records = [
        {"replicate": i, "tau2": float(t), "rho2": float(r), "n_families": int(n)}
        for i, (t, r, n) in enumerate(zip(batch.tau2, batch.rho2, batch.n_families))
    ]
    summary: Dict[str, Any] = {
        "reps": len(records),
        "mean_tau2": float(np.mean(batch.tau2)),
        "lag_ratio": float(np.mean(batch.tau2 - batch.rho2) / np.mean(batch.rho2)),
    }
    beta = _beta_for(cfg["dim"], cfg["beta"], cfg["seed"])
    if cfg["u2"] < 1:
        r = tau2_rate(g.site_count, cfg["u1"], cfg["u2"], cfg["dim"], beta)
        ks = ks_exponential(batch.tau2, r.rate)
        summary.update(
            predicted_rate=r.rate, predicted_mean=1.0 / r.rate,
            regime={"inv_h": r.inv_h, "N": r.N, "g_over_u1": r.g_over_u1,
                    "regime_ok": r.regime_ok},
            ks={"statistic": ks.statistic, "p_value": ks.p_value, "n": ks.n},
        )
    return records, summary


def cmd_boundary(cfg):
    from .engine import SimParams, boundary_profile
    from .lattice import Geometry

    d = cfg["dim"]
    p = SimParams(Geometry.unbounded(d), seed=cfg["seed"])
    rows = boundary_profile(p, cfg["levels"], cfg["reps"], threads=cfg["threads"])
    records = []
    for r in rows:
        rec = {"k": r.k, "boundary_mean": r.boundary_mean,
               "boundary_stderr": r.boundary_stderr, "count": r.count}
        if d == 2 and r.k > 1:
            rec["beta_estimate"] = r.boundary_mean * math.log(r.k) / (4 * r.k)
        elif d == 3:
            rec["beta_estimate"] = r.boundary_mean / (2 * d * r.k)
        records.append(rec)
    return records, {"levels": len(records)}


def _jsonable(obj):
    from dataclasses import asdict, is_dataclass

    if is_dataclass(obj):
        out = asdict(obj)
        if hasattr(obj, "regime_ok"):
            out["regime_ok"] = obj.regime_ok
        return out
    return obj


def cmd_predict(cfg):
    from .analytic import predict

    d = cfg["dim"]
    beta = _beta_for(d, cfg["beta"], cfg["seed"])
    N = cfg["side"] ** d if cfg["side"] is not None else None
    pr = predict(d, cfg["u2"], N=N, u1=cfg["u1"], beta=beta)
    summary = _jsonable(pr)
    if pr.regime is not None:
        summary["regime"]["regime_ok"] = pr.regime.regime_ok
    return [], summary


def cmd_diffusion(cfg):
    from .analytic import gamma_d
    from .diffusion import DiffusionParams, F_eps, nu_epsilon_prediction

    d = cfg["dim"]
    beta = _beta_for(d, cfg["beta"], cfg["seed"])
    p = DiffusionParams(d, cfg["eps"], beta=beta, dt=cfg["dt"])
    f = F_eps(p, cfg["reps"], cfg["seed"], threads=cfg["threads"])
    rec = {"eps": p.eps, "F_eps": f.F, "stderr": f.stderr, "F_over_eps": f.F / p.eps,
           "gamma_target": gamma_d(d, beta), "reps": f.reps}
    if cfg["u2"] is not None:
        nu = nu_epsilon_prediction(d, cfg["u2"], p.eps, cfg["reps"], cfg["seed"], beta=beta,
                                   dt=cfg["dt"], threads=cfg["threads"])
        rec.update(nu_eps_prediction=nu.value, nu_eps_stderr=nu.stderr, level=nu.level)
    return [rec], dict(rec)


def cmd_oracle(cfg):
    from . import oracle

    d = cfg["dim"]
    beta = _beta_for(d, cfg["beta"], cfg["seed"])
    chain = oracle.SizeChain(d, cfg["max_level"], cfg["lambda"], beta)
    summary: Dict[str, Any] = {
        "die_solve": oracle.conditioned_manhours_die(chain, method="solve"),
        "reach_solve": oracle.conditioned_manhours_reach(chain, method="solve"),
    }
    if chain.lam == 1.0:
        summary.update(
            die_sum=oracle.conditioned_manhours_die(chain, method="both"),
            reach_sum=oracle.conditioned_manhours_reach(chain, method="both"),
            die_sum_bare=oracle.die_sum(chain, normalized=False),
            not_yet_sum=oracle.not_yet_sum(chain),
        )
        lo, hi = oracle.integral_bounds(d, chain.M, beta)
        summary.update(die_bound=lo, not_yet_bound=hi)
    if cfg["u2"] is not None and cfg["eps"] is not None:
        b = oracle.small_family_bounds(d, cfg["u2"], cfg["eps"], beta)
        summary["small_family_bounds"] = {"die": b.die, "not_yet": b.not_yet, "total": b.total}
    return [], summary


HANDLERS = {
    "estimate-nu": cmd_estimate_nu,
    "tau2": cmd_tau2,
    "boundary": cmd_boundary,
    "predict": cmd_predict,
    "diffusion": cmd_diffusion,
    "oracle": cmd_oracle,
}


# -- output -----------------------------------------------------------------


def _dump(obj) -> str:
    return json.dumps(obj, allow_nan=True, default=_jsonable)


def write_outputs(command, cfg, records, summary, out, csv_path, summary_path, runtime):
    header = {"schema_version": SCHEMA_VERSION, "command": command, "config": cfg}
    if out:
        with open(out, "w") as fh:
            fh.write(_dump(header) + "\n")
            for rec in records:
                fh.write(_dump(rec) + "\n")
    if csv_path:
        cols: List[str] = []
        for rec in records:
            cols.extend(k for k in rec if k not in cols)
        with open(csv_path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=cols)
            w.writeheader()
            w.writerows(records)
    doc = dict(header, summary=summary, runtime_s=runtime)
    text = _dump(doc)
    if summary_path:
        with open(summary_path, "w") as fh:
            fh.write(text + "\n")
    print(text)


def main(argv: Optional[List[str]] = None) -> int:
    from .diffusion import HorizonError
    from .engine import InvariantError, RunawayError
    from .lattice import CoordinateOverflow
    from .streams import default_threads

    args = vars(build_parser().parse_args(argv))
    command = args.pop("command")
    paths = {k: args.pop(k) for k in ("config", "out", "csv", "summary")}
    try:
        cfg = resolve_config(command, args, paths["config"])
        if "threads" in cfg and cfg["threads"] is None:
            cfg["threads"] = default_threads()
        start = time.perf_counter()
        records, summary = HANDLERS[command](cfg)
        runtime = time.perf_counter() - start
        write_outputs(command, cfg, records, summary, paths["out"], paths["csv"],
                      paths["summary"], runtime)
    except (RunawayError, HorizonError, CoordinateOverflow) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP
    except InvariantError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ConfigError, ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
