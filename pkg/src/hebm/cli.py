"""Command line: train, sample, eval, verify, gen-data.

Exit codes are a stable contract: 0 success, 2 usage/config/parse
problems, 3 numeric failures (divergence, non-convergence). The HEBM_SEED
environment variable overrides the config seed for `train`. Every run
prints its fully-resolved configuration.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import config as cfglib
from . import datasets, metrics, oracle, sampling, verify
from .errors import ConfigError, NumericError, ParseError
from .model import load_model, save_model
from .training import NoiseSchedule, dsm_loss, make_batch, train


def _resolve_seed(cfg: dict) -> None:
    env = os.environ.get("HEBM_SEED")
    if env is not None:
        try:
            cfg["seed"] = int(env)
        except ValueError:
            raise ConfigError(f"HEBM_SEED must be an integer, got {env!r}") from None


def _dataset_meta(ds: datasets.Dataset) -> str:
    parts = [ds.kind] + [f"{k}={v}" for k, v in sorted(ds.params.items())]
    return " ".join(parts)


def _parse_dataset_meta(line: str) -> tuple[str, dict]:
    fields = line.split()
    if not fields:
        raise ParseError("checkpoint has an empty dataset line")
    return fields[0], dict(f.split("=", 1) for f in fields[1:])


def _sync_dataset_config(cfg: dict, ds: datasets.Dataset) -> None:
    """Make the config's dataset.* keys describe an externally loaded
    dataset so statistic and model shapes line up with it."""
    cfg["dataset.kind"] = ds.kind
    for key, val in ds.params.items():
        full = f"dataset.{key}"
        if full in cfglib.SCHEMA:
            cfg[full] = cfglib._convert(full, str(val))


def cmd_train(args) -> int:
    cfg = cfglib.parse_config(args.config) if args.config else cfglib.default_config()
    _resolve_seed(cfg)
    if args.data:
        ds = datasets.read_dataset(args.data)
        _sync_dataset_config(cfg, ds)
    else:
        ds = cfglib.build_dataset(cfg)
    X = datasets.dataset_matrix(ds)

    statistic = cfglib.build_statistic(cfg)
    model = cfglib.build_model(cfg, statistic)
    schedule = cfglib.build_schedule(cfg, X)
    tconf = cfglib.build_train_config(cfg, fit_eta=not args.no_statistic,
                                      checkpoint_path=args.out)

    header = [f"config {line}" for line in cfglib.resolved_lines(cfg)]
    header.append(f"config no_statistic = {'true' if args.no_statistic else 'false'}")
    for line in header:
        print(line)
    result = train(model, X, schedule, tconf, log_fn=print)

    meta = {
        "sigmas": ",".join(f"{v:.17g}" for v in schedule.sigmas),
        "seed": str(cfg["seed"]),
        "epochs": str(tconf.epochs),
        "dataset": _dataset_meta(ds),
    }
    save_model(model, args.out, meta)
    log_path = Path(args.out).parent / "train.log"
    log_path.write_text("\n".join(header + result.log_lines) + "\n")
    return 0


def _decode_sample_rows(S: np.ndarray, kind: str, params: dict, seed: int) -> datasets.Dataset:
    params = dict(params)
    params["n"] = str(S.shape[0])
    if kind == "toy2d":
        items = [S]
    elif kind == "margin_images":
        h, w = int(params["h"]), int(params["w"])
        items = [row.reshape(h, w) for row in S]
    elif kind == "point_clouds":
        N = int(params["N"])
        items = [row.reshape(N, 3) for row in S]
    elif kind == "molecules":
        n_slots = int(params["n_atoms_max"])
        vals = [int(v) for v in str(params["valences"]).split(",")]
        items = [datasets.quantize_sample(row, n_slots, vals) for row in S]
    else:
        raise ConfigError(f"checkpoint names unknown dataset kind {kind!r}")
    return datasets.Dataset(kind, items, seed, params)


def _schedule_from_meta(meta: dict, path) -> NoiseSchedule:
    if "sigmas" not in meta:
        raise ParseError(f"{path}: checkpoint lacks a sigmas line")
    return NoiseSchedule(np.array([float(v) for v in meta["sigmas"].split(",")]))


def cmd_sample(args) -> int:
    model, meta = load_model(args.ckpt)
    schedule = _schedule_from_meta(meta, args.ckpt)
    sconf = sampling.SamplerConfig(n_steps=args.steps, eps=args.eps, seed=args.seed)
    S = sampling.sample(model, schedule, sconf, args.n)
    kind, params = _parse_dataset_meta(meta.get("dataset", ""))
    ds = _decode_sample_rows(S, kind, params, args.seed)
    datasets.write_dataset(ds, args.out)
    print(f"wrote {ds.n} item(s) to {args.out}")
    return 0


def _eval_dsm(model, meta, X, report) -> None:
    schedule = _schedule_from_meta(meta, "checkpoint")
    rows = X[:256]
    X_tilde, s, targets = make_batch(rows, schedule, np.random.default_rng(0), "exact")
    report.add("dsm_loss", dsm_loss(model, X_tilde, s, targets), rows.shape[0])


def _eval_nll(model, X, report) -> None:
    if model.d > 2:
        raise ConfigError("nll metric needs d <= 2 (quadrature)")
    if any(np.any(w != 0.0) for w in model.params.weights):
        raise ConfigError("nll metric needs a statistic-only model; "
                          "the neural term has no tractable likelihood")
    lo, hi = oracle.box_from_data(X, sigma=float(X.std()), k=6.0)
    spec = oracle.DensitySpec("eval-nll", model.d, model.statistic,
                              lambda p: np.zeros(p.shape[0]), lo, hi)
    prep = oracle.prepare(spec)
    report.add("nll", oracle.exact_nll(prep, model.eta, X), X.shape[0])


def cmd_eval(args) -> int:
    wanted = [m.strip() for m in args.metrics.split(",") if m.strip()]
    if not wanted:
        raise ConfigError("empty metrics list")
    known = {"delta_t", "validity", "dsm", "nll", "mmd"}
    for m in wanted:
        if m not in known:
            raise ConfigError(f"unknown metric {m!r}; have {sorted(known)}")

    model, meta = load_model(args.ckpt)
    data = datasets.read_dataset(args.data)
    X = datasets.dataset_matrix(data)
    samples = datasets.read_dataset(args.samples) if args.samples else None

    report = metrics.MetricReport()
    has_statistic = model.statistic.kind != "constant"
    if has_statistic and samples is not None and "delta_t" not in wanted:
        wanted.append("delta_t")

    for m in wanted:
        if m == "delta_t":
            if samples is None:
                raise ConfigError("delta_t needs --samples")
            S = datasets.dataset_matrix(samples)
            delta, se = metrics.delta_T(S, X, model.statistic)
            for i in range(delta.size):
                name = "delta_T" if delta.size == 1 else f"delta_T[{i}]"
                report.add(name, delta[i], S.shape[0], se[i])
        elif m == "validity":
            src = samples if samples is not None else data
            if src.kind != "molecules":
                raise ConfigError("validity metric needs molecule data")
            report.add("validity", metrics.validity_ratio(src.items), src.n)
        elif m == "dsm":
            _eval_dsm(model, meta, X, report)
        elif m == "nll":
            _eval_nll(model, X, report)
        elif m == "mmd":
            if samples is None or samples.kind != "point_clouds" \
                    or data.kind != "point_clouds":
                raise ConfigError("mmd metric needs point cloud --samples and --data")
            mmd, cov, nna = metrics.mmd_cov_1nna(samples.items, data.items)
            report.add("mmd", mmd, samples.n)
            report.add("cov", cov, samples.n)
            report.add("1nna", nna, samples.n + data.n)

    print(report.table())
    Path(args.out).write_text("\n".join(report.lines()) + "\n")
    return 0


def cmd_verify(args) -> int:
    results = verify.run_suite(args.suite)
    print(verify.format_table(results))
    return 0 if all(r.passed for r in results) else 1


_GENDATA_KEYS = {
    "toy2d": {"toy_kind", "n"},
    "margin_images": {"h", "w", "interior_h", "interior_w", "n"},
    "point_clouds": {"shape", "N", "n", "noise"},
    "molecules": {"n_atoms_max", "k_types", "valences", "n"},
}


def cmd_gendata(args) -> int:
    if args.kind not in _GENDATA_KEYS:
        raise ConfigError(f"unknown dataset kind {args.kind!r}; "
                          f"have {sorted(_GENDATA_KEYS)}")
    allowed = _GENDATA_KEYS[args.kind]
    params = {k: v for k, v in
              (("toy_kind", "gaussian"), ("n", "200"), ("h", "12"), ("w", "12"),
               ("interior_h", "8"), ("interior_w", "6"), ("shape", "sphere"),
               ("N", "64"), ("noise", "0.02"), ("n_atoms_max", "5"),
               ("k_types", "3"), ("valences", "4,3,2")) if k in allowed}
    if args.params:
        for part in args.params.split(","):
            if "=" not in part:
                raise ConfigError(f"--params entries must be key=value, got {part!r}")
            key, _, val = part.partition("=")
            if key not in allowed:
                raise ConfigError(f"unknown param {key!r} for kind {args.kind!r}")
            # valence lists hold commas; spell them with semicolons here
            params[key] = val.replace(";", ",")
    ds = datasets.generate(args.kind, params, args.seed)
    datasets.write_dataset(ds, args.out)
    print(f"wrote {ds.n} item(s) to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hebm",
                                description="hybrid score models: train, sample, evaluate")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="fit a model and write a checkpoint")
    t.add_argument("--config", default=None, help="key=value config file")
    t.add_argument("--data", default=None, help="dataset directory (default: generate)")
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--no-statistic", action="store_true",
                   help="freeze the statistic weight at zero")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sample", help="draw samples from a checkpoint")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--n", type=int, default=16)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--steps", type=int, default=100)
    s.add_argument("--eps", type=float, default=2e-5)
    s.add_argument("--out", required=True, help="output dataset directory")
    s.set_defaults(func=cmd_sample)

    e = sub.add_parser("eval", help="compute metrics for a checkpoint")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data", required=True, help="reference dataset directory")
    e.add_argument("--metrics", required=True,
                   help="comma list: delta_t,validity,dsm,nll,mmd")
    e.add_argument("--samples", default=None, help="sampled dataset directory")
    e.add_argument("--out", default="metrics.txt", help="metric records file")
    e.set_defaults(func=cmd_eval)

    v = sub.add_parser("verify", help="run a self-check suite")
    v.add_argument("--suite", required=True,
                   choices=sorted(verify.SUITES))
    v.set_defaults(func=cmd_verify)

    g = sub.add_parser("gen-data", help="generate a synthetic dataset")
    g.add_argument("--kind", required=True)
    g.add_argument("--params", default="", help="comma list of key=value overrides")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gendata)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ParseError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except NumericError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
