"""Command-line surface: train, infer, mcmc, evaluate.

Also owns the on-disk model format: a single self-describing JSON
document holding the per-head layer specs and flat parameter arrays in
the canonical nn_core order.  Output files are written atomically
(temp + rename).  Exit codes: 0 success, 2 usage error, 3 numerical
abort, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import tempfile

import numpy as np

from .guide import AmortNet, amort_forward, guide_sample
from .mcmc import ChainInitError, McmcConfig, chain_diagnostics, rwm_sample
from .metrics import evaluate_ks, posterior_samples, resim_error
from .nn_core import LayerSpec, MlpParams, flatten_params, unflatten_params
from .problems import get_problem, problem_names
from .trainer import NumericalAbort, TrainConfig, train

MODEL_FORMAT_VERSION = 1

EXIT_USAGE = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------------------
# atomic file helpers


def _atomic_write_text(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_write_via(path: str, writer) -> None:
    """Run writer(tmp_path) then rename tmp_path onto path."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# model serialization


def _spec_to_json(spec: list[LayerSpec]) -> list[dict]:
    return [
        {"input_dim": ls.input_dim, "output_dim": ls.output_dim, "activation": ls.activation}
        for ls in spec
    ]


def _spec_from_json(rows: list[dict]) -> list[LayerSpec]:
    return [LayerSpec(r["input_dim"], r["output_dim"], r["activation"]) for r in rows]


def model_to_json(net: AmortNet, problem: str, train_config: dict | None, seed: int) -> dict:
    heads = {}
    for name, head in (
        ("mu", net.head_mu),
        ("diag", net.head_diag),
        ("offdiag", net.head_offdiag),
    ):
        if head is None:
            heads[name] = None
            continue
        heads[name] = {
            "spec": _spec_to_json(head.spec),
            "params": [float(v) for v in flatten_params(head)],
        }
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "problem": problem,
        "d": net.d,
        "m": net.m,
        "heads": heads,
        "train_config": train_config,
        "seed": seed,
    }


def model_from_json(doc: dict) -> tuple[AmortNet, str]:
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise UsageError(f"unrecognized model format_version {doc.get('format_version')!r}")
    heads = {}
    for name in ("mu", "diag", "offdiag"):
        entry = doc["heads"][name]
        if entry is None:
            heads[name] = None
            continue
        spec = _spec_from_json(entry["spec"])
        flat = np.asarray(entry["params"], dtype=float)
        heads[name] = unflatten_params(spec, flat)
    net = AmortNet(
        head_mu=heads["mu"],
        head_diag=heads["diag"],
        head_offdiag=heads["offdiag"],
        d=doc["d"],
        m=doc["m"],
    )
    return net, doc["problem"]


def save_model(path: str, net: AmortNet, problem: str, train_config: dict | None, seed: int) -> None:
    doc = model_to_json(net, problem, train_config, seed)
    _atomic_write_text(path, json.dumps(doc, indent=2) + "\n")


def load_model(path: str) -> tuple[AmortNet, str]:
    with open(path) as fh:
        return model_from_json(json.load(fh))


# ---------------------------------------------------------------------------
# commands


_TRAIN_FIELDS = ["problem", "hidden_sizes", "n_iter", "n_y", "n_z", "eta0", "alpha", "r", "seed"]


def cmd_train(args) -> int:
    try:
        with open(args.config) as fh:
            cfg_doc = json.load(fh)
    except json.JSONDecodeError as e:
        raise UsageError(f"config is not valid JSON: {e}") from e
    for field in _TRAIN_FIELDS:
        if field not in cfg_doc:
            raise UsageError(f"config is missing required field {field!r}")
    name = cfg_doc["problem"]
    if name not in problem_names():
        raise UsageError(
            f"unknown problem {name!r} in field 'problem'; available: {', '.join(problem_names())}"
        )
    p = get_problem(name)
    try:
        tc = TrainConfig(
            n_iter=cfg_doc["n_iter"],
            n_y=cfg_doc["n_y"],
            n_z=cfg_doc["n_z"],
            eta0=cfg_doc["eta0"],
            alpha=cfg_doc["alpha"],
            r=cfg_doc["r"],
            seed=cfg_doc["seed"],
        )
    except ValueError as e:
        raise UsageError(str(e)) from e
    hidden = list(cfg_doc["hidden_sizes"])
    if any(h < 1 for h in hidden):
        raise UsageError("field 'hidden_sizes' must contain positive sizes")

    net, trace = train(p, hidden, tc)

    model_out = cfg_doc.get("model_out", f"{name}_model.json")
    trace_out = cfg_doc.get("trace_out", f"{name}_trace.csv")
    echo = {f: cfg_doc[f] for f in _TRAIN_FIELDS}
    save_model(model_out, net, name, echo, tc.seed)
    _atomic_write_via(trace_out, trace.write_csv)
    print(f"wrote model to {model_out} and trace to {trace_out}")
    return 0


def _parse_y(text: str, m: int) -> np.ndarray:
    try:
        y = np.array([float(t) for t in text.split(",")])
    except ValueError as e:
        raise UsageError(f"--y must be a comma-separated list of reals: {e}") from e
    if y.size != m:
        raise UsageError(f"--y has {y.size} entries, problem expects {m}")
    return y


def _write_samples_csv(path: str, samples: np.ndarray) -> None:
    d = samples.shape[1]

    def writer(tmp):
        with open(tmp, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"xi_{j + 1}" for j in range(d)])
            for row in samples:
                w.writerow([repr(float(v)) for v in row])

    _atomic_write_via(path, writer)


def cmd_infer(args) -> int:
    net, problem = load_model(args.model)
    y = _parse_y(args.y, net.m)
    g = amort_forward(net, y)
    print(f"problem: {problem}")
    print("mu:", " ".join(repr(float(v)) for v in g.mu))
    print("L:")
    for row in g.chol:
        print("  " + " ".join(repr(float(v)) for v in row))

    guide_doc = {
        "problem": problem,
        "y": [float(v) for v in y],
        "mu": [float(v) for v in g.mu],
        "chol": [[float(v) for v in row] for row in g.chol],
    }
    _atomic_write_text(args.out_prefix + "_guide.json", json.dumps(guide_doc, indent=2) + "\n")
    if args.samples > 0:
        rng = np.random.default_rng(args.seed)
        draws = guide_sample(g, rng.standard_normal((args.samples, net.d)))
        _write_samples_csv(args.out_prefix + "_samples.csv", draws)
    return 0


def cmd_mcmc(args) -> int:
    if args.problem not in problem_names():
        raise UsageError(
            f"unknown problem {args.problem!r}; available: {', '.join(problem_names())}"
        )
    p = get_problem(args.problem)
    y = _parse_y(args.y, p.m)
    try:
        cfg = McmcConfig(
            n_total=args.total, n_burn=args.burn, thin=args.thin, seed=args.seed
        )
    except ValueError as e:
        raise UsageError(str(e)) from e
    chain = rwm_sample(p, y, cfg)
    summary = chain_diagnostics(chain)
    _write_samples_csv(args.out_prefix + "_chain.csv", chain.samples)
    diag_doc = {
        "problem": args.problem,
        "n_kept": int(chain.samples.shape[0]),
        "acceptance_rate": chain.acceptance_rate,
        "mean": [float(v) for v in summary.mean],
        "std": [float(v) for v in summary.std],
        "lag1_autocorr": [float(v) for v in summary.lag1_autocorr],
        "ess": [float(v) for v in summary.ess],
    }
    _atomic_write_text(args.out_prefix + "_diagnostics.json", json.dumps(diag_doc, indent=2) + "\n")
    return 0


def cmd_evaluate(args) -> int:
    net, problem = load_model(args.model)
    if problem not in problem_names():
        raise UsageError(f"model references unregistered problem {problem!r}")
    p = get_problem(problem)
    ss_ks, ss_resim = np.random.SeedSequence(args.seed).spawn(2)
    mcmc_cfg = McmcConfig(n_total=args.mcmc_total, n_burn=args.mcmc_burn, thin=args.mcmc_thin)
    ks = evaluate_ks(
        net, p, n_y=args.ny, n_post=args.npost, mcmc_cfg=mcmc_cfg,
        seed=int(ss_ks.generate_state(1)[0]),
    )
    resim = resim_error(
        net, p, n_y=args.ny, n_samples=args.npost, seed=int(ss_resim.generate_state(1)[0])
    )
    _atomic_write_via(args.out_prefix + "_ks.csv", ks.write_csv)
    _atomic_write_via(args.out_prefix + "_resim.csv", resim.write_csv)
    summary = {**ks.summary(), **resim.summary()}
    _atomic_write_text(args.out_prefix + "_summary.json", json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary, indent=2))
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="inversemap", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train an amortization network from a JSON config")
    p_train.add_argument("--config", required=True)
    p_train.set_defaults(func=cmd_train)

    p_infer = sub.add_parser("infer", help="query the posterior for one observation")
    p_infer.add_argument("--model", required=True)
    p_infer.add_argument("--y", required=True, help="comma-separated observation")
    p_infer.add_argument("--samples", type=int, default=1000)
    p_infer.add_argument("--seed", type=int, default=0)
    p_infer.add_argument("--out-prefix", default="infer")
    p_infer.set_defaults(func=cmd_infer)

    p_mcmc = sub.add_parser("mcmc", help="run the random-walk Metropolis baseline")
    p_mcmc.add_argument("--problem", required=True)
    p_mcmc.add_argument("--y", required=True, help="comma-separated observation")
    p_mcmc.add_argument("--total", type=int, default=33000)
    p_mcmc.add_argument("--burn", type=int, default=3000)
    p_mcmc.add_argument("--thin", type=int, default=30)
    p_mcmc.add_argument("--seed", type=int, default=0)
    p_mcmc.add_argument("--out-prefix", default="mcmc")
    p_mcmc.set_defaults(func=cmd_mcmc)

    p_eval = sub.add_parser("evaluate", help="KS and re-simulation evaluation of a model")
    p_eval.add_argument("--model", required=True)
    p_eval.add_argument("--ny", type=int, default=100)
    p_eval.add_argument("--npost", type=int, default=1000)
    p_eval.add_argument("--mcmc-total", type=int, default=33000)
    p_eval.add_argument("--mcmc-burn", type=int, default=3000)
    p_eval.add_argument("--mcmc-thin", type=int, default=30)
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--out-prefix", default="evaluate")
    p_eval.set_defaults(func=cmd_evaluate)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalAbort, ChainInitError) as e:
        print(f"numerical abort: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
