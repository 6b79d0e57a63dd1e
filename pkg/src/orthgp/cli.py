"""Command-line entry point: train one model and write a JSONL trace plus a JSON summary."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict

from .data import CLASSIFICATION, generate_synthetic, load_csv, train_test_split
from .errors import InputError, OrthGPError
from .harness import RunConfig, train
from .optim import StepConfig

SYNTHETIC_KINDS = ("gp-regression", "probit-classification")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="orthgp", description="Sparse variational GP training with fixed inducing points.")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", metavar="PATH", help="numeric CSV, last column is the target")
    src.add_argument("--synthetic", choices=SYNTHETIC_KINDS, help="draw a dataset from the GP prior")
    p.add_argument("--task", choices=("regression", "classification"), default=None)
    p.add_argument("--synthetic-n", type=int, default=512, help="size of a synthetic dataset")
    p.add_argument("--synthetic-d", type=int, default=1, help="input dimension of a synthetic dataset")
    p.add_argument("--basis", choices=("coupled", "orthogonal", "hybrid", "inverse"), default="orthogonal")
    p.add_argument("--optimizer", choices=("adaptive", "natural", "natural-approx"), default="natural-approx")
    p.add_argument("--n-beta", type=int, default=16)
    p.add_argument("--n-gamma", type=int, default=64)
    p.add_argument("--iters", type=int, default=20000)
    p.add_argument("--batch", type=int, default=1024)
    p.add_argument("--col-batch", type=int, default=64)
    p.add_argument("--test-frac", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tau", type=float, default=StepConfig.tau_nat)
    p.add_argument("--lr", type=float, default=StepConfig.adam_lr)
    p.add_argument("--gamma-rule", choices=("adam", "nystrom"), default="adam")
    p.add_argument("--noise", type=float, default=0.1, help="Gaussian noise variance")
    p.add_argument("--trace", metavar="PATH", help="write the JSONL trace here")
    p.add_argument("--eval-every", type=int, default=100)
    return p


def _load(args):
    if args.synthetic:
        expected = "classification" if args.synthetic == "probit-classification" else "regression"
        if args.task is not None and args.task != expected:
            raise InputError(f"--synthetic {args.synthetic} implies --task {expected}")
        return generate_synthetic(args.synthetic, args.synthetic_n, args.synthetic_d,
                                  noise=args.noise, seed=args.seed)
    return load_csv(args.data, args.task or "regression")


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        step = StepConfig(tau_nat=args.tau, adam_lr=args.lr, gamma_rule=args.gamma_rule)
        config = RunConfig(basis=args.basis, optimizer=args.optimizer, n_beta=args.n_beta,
                           n_gamma=args.n_gamma, iterations=args.iters, batch_size=args.batch,
                           column_batch=args.col_batch, seed=args.seed, step=step,
                           noise_variance=args.noise, eval_every=args.eval_every)
        dataset = _load(args)
        train_set, test_set = train_test_split(dataset, args.test_frac, args.seed)
        result = train(config, train_set, test_set)
    except OrthGPError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code

    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as fh:
            for rec in result.trace:
                fh.write(json.dumps(rec.to_dict()) + "\n")
    last = result.trace[-1].to_dict()
    summary = {
        "config": {**asdict(config), "data": args.data, "synthetic": args.synthetic,
                   "task": CLASSIFICATION if dataset.is_classification else "regression",
                   "n_train": train_set.n, "n_test": test_set.n},
        "status": result.status,
        "error": result.error,
        "final": {"iter": last["iter"], "elbo": result.final_elbo,
                  **{k: last[k] for k in ("rmse", "mae", "test_ll", "acc")}},
        "target_std": train_set.target_std,
    }
    print(json.dumps(summary))
    return 0 if result.status == "ok" else 3


def main(argv=None):
    logging.basicConfig(level=logging.WARNING)
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
