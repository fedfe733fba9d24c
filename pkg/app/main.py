from __future__ import annotations

import argparse
import logging
import sys
from typing import Any, Dict, List, Optional, Sequence

from pydantic import ValidationError

from app.contracts.models import ExperimentConfig
from app.errors import AdmmError, ArtifactIoError, ConfigError
from app.infra.logging import configure_logging
from app.services import experiments
from app.services.config_loader import load_config

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CERTIFICATE = 1
EXIT_CONFIG = 2
EXIT_ENGINE = 3


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="padmm", description="Distributed consensus ADMM experiments")
    ap.add_argument("--log-level", default=None)
    ap.add_argument("--log-format", choices=["json", "text"], default=None)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("config", nargs="?", default=None, help="TOML experiment config (defaults when omitted)")
        p.add_argument("--out-dir", default=None)
        p.add_argument("--seed", type=int, default=None, help="instance seed")
        p.add_argument("--max-iter", type=int, default=None)
        p.add_argument("--workers", type=int, default=None)

    p_run = sub.add_parser("run", help="run every configured algorithm and write traces + certificates")
    common(p_run)
    p_run.add_argument("--strict-certificates", action="store_true")

    p_cmp = sub.add_parser("compare", help="aligned residual columns for all configured algorithms")
    common(p_cmp)

    p_sweep = sub.add_parser("sweep-eps", help="iterations-to-threshold of parallel ADMM per eps")
    common(p_sweep)
    p_sweep.add_argument("--eps", type=float, nargs="+", default=None)

    p_gen = sub.add_parser("gen-instance", help="write a least-squares instance file for replay")
    p_gen.add_argument("path")
    p_gen.add_argument("--n", type=int, required=True)
    p_gen.add_argument("--seed", type=int, required=True)
    p_gen.add_argument("--noiseless", action="store_true")
    p_gen.add_argument("--cost", choices=["least_squares", "huber"], default="least_squares")
    p_gen.add_argument("--huber-delta", type=float, default=1.0)
    return ap


def _with_overrides(cfg: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    data: Dict[str, Any] = cfg.model_dump(mode="json", exclude_none=True)
    if args.out_dir is not None:
        data["output"]["out_dir"] = args.out_dir
    if args.seed is not None:
        data["instance"]["seed"] = args.seed
    if args.max_iter is not None:
        data["run"]["max_iter"] = args.max_iter
    if args.workers is not None:
        data["run"]["workers"] = args.workers
    if getattr(args, "eps", None) is not None:
        data["sweep"]["eps"] = args.eps
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid command-line override: {e.errors()[0]['msg']}") from e


def _print_summaries(outcome: experiments.RunOutcome) -> None:
    for s in outcome.summaries:
        status = "ok" if s.passed() else "CERTIFICATE FAILED"
        print(
            f"{s.algorithm:16s} iterations={s.iterations:<6d} residual={s.final_residual:.3e} "
            f"cost_gap={s.final_cost_gap:.3e} [{status}]"
        )


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    configure_logging(args.log_level, args.log_format)
    try:
        if args.command == "gen-instance":
            if args.n < 2:
                raise ConfigError(f"an instance needs at least two agents, got n={args.n}")
            experiments.cmd_gen_instance(
                args.path, n=args.n, seed=args.seed, noiseless=args.noiseless,
                cost=args.cost, huber_delta=args.huber_delta,
            )
            print(args.path)
            return EXIT_OK

        cfg = load_config(args.config) if args.config else ExperimentConfig()
        cfg = _with_overrides(cfg, args)
        if args.command == "run":
            outcome = experiments.cmd_run(cfg, strict=args.strict_certificates or None)
            _print_summaries(outcome)
            return outcome.exit_code
        if args.command == "compare":
            outcome = experiments.cmd_compare(cfg)
            _print_summaries(outcome)
            return outcome.exit_code
        outcome = experiments.cmd_sweep_eps(cfg)
        print(outcome.table.to_string(index=False))
        return outcome.exit_code
    except (ConfigError, ArtifactIoError) as e:
        log.error("configuration or artifact error", extra={"code": e.code, "error": str(e)})
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except AdmmError as e:
        log.error("run aborted", extra={"code": e.code, "error": str(e)})
        print(f"error [{e.code}]: {e}", file=sys.stderr)
        return EXIT_ENGINE


if __name__ == "__main__":
    raise SystemExit(main())
