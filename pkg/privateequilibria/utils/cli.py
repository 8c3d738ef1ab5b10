"""
Command-line front end.

    privateequilibria run --game GAME --mechanism laplace --epsilon 1 --delta 1e-6 --beta 0.05 --T auto --out OUT
    privateequilibria verify --game GAME --distribution OUT/distribution.json
    privateequilibria audit --game-family beach --n 100 --prior bernoulli:0.5 --mechanism laplace --trials 200
    privateequilibria lowerbound --instance instance.json --alpha 0.001 --planted --out OUT
    privateequilibria bounds --n 100 200 400 --k 2 --epsilon 1 --delta 1e-6 --beta 0.05

Exit codes: 0 success, 1 bad input or unexpected error, 2 infeasible parameters,
3 mechanism failure.
"""

import argparse
import json
import logging
import os
import sys
import traceback
from typing import Any, Dict, List, Optional, Union

import pandas as pd
from pydantic import BaseModel, field_validator

from privateequilibria.audit.proxy_audit import TypePrior, audit
from privateequilibria.games.lowerbound.lowerbound_decoder import ANSWER_WIDTH, decode_answer
from privateequilibria.games.lowerbound.lowerbound_game import (
    LowerBoundGame,
    SubsetSumInstance,
    planted_distribution,
)
from privateequilibria.mechanisms import MECHANISMS, build_mechanism
from privateequilibria.src.base_game import GAME_FAMILIES, BaseGame, load_game
from privateequilibria.src.base_learner import LEARNERS, SWAP
from privateequilibria.src.base_mechanism import BaseMechanism
from privateequilibria.src.base_verifier import verify
from privateequilibria.src.exceptions import DecodeError, PrivEqError
from privateequilibria.src.privacy import (
    DEFAULT_T_CAP,
    Infeasible,
    PrivacyBudget,
    compose_advanced,
    eta_shape,
    plan_for_nrlaplace,
    plan_for_nrmedian,
    predicted_alpha_laplace,
    predicted_alpha_median,
)
from privateequilibria.utils.artifacts import (
    MANIFEST,
    build_id,
    dumps,
    load_artifact,
    load_distribution,
    write_json,
    write_run_artifacts,
)
from privateequilibria.utils.load_class_from_str import load_class_from_string
from privateequilibria.utils.load_game_from_config import load_game_from_config

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INFEASIBLE = 2
EXIT_FAILURE = 3

FAMILY_ALIASES = {"beach": "beach_mountain", "random": "random_aggregative", "table": "random_table"}


class RunConfig(BaseModel):
    """Resolved configuration of one command; embedded in every artifact it writes."""

    subcommand: str = "run"
    game: str
    variant: Optional[str] = None
    mechanism: str = "laplace"
    epsilon: float = 1.0
    delta: float = 1e-6
    beta: float = 0.05
    learner: str = SWAP
    T: Union[int, str] = "auto"
    T_cap: int = DEFAULT_T_CAP
    loss_mode: Optional[str] = None
    verify_mode: str = "exact"
    type_universe: Optional[str] = None
    seed: int = 0
    out: Optional[str] = None

    @field_validator("T")
    @classmethod
    def _check_T(cls, value):
        if value == "auto":
            return value
        value = int(value)
        if value < 1:
            raise ValueError(f"T must be positive or 'auto', got {value}")
        return value

    @field_validator("mechanism")
    @classmethod
    def _check_mechanism(cls, value):
        if value not in MECHANISMS:
            raise ValueError(f"unknown mechanism {value!r}; known: {sorted(MECHANISMS)}")
        return value

    @field_validator("learner")
    @classmethod
    def _check_learner(cls, value):
        if value not in LEARNERS:
            raise ValueError(f"unknown learner {value!r}; expected one of {LEARNERS}")
        return value

    @property
    def explicit_T(self) -> Optional[int]:
        return None if self.T == "auto" else int(self.T)

    def embedded(self) -> Dict[str, Any]:
        return self.model_dump(exclude={"out"})


def load_game_arg(path: str, variant: Optional[str] = None) -> BaseGame:
    """A game-spec JSON, or a family YAML config (first variant unless one is named)."""
    if path.endswith((".yaml", ".yml")):
        return load_game_from_config(path, variant)
    return load_game(path)


def load_type_universe(path: str) -> List[str]:
    """A JSON list of type labels, or an object holding one under "universe"."""
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    if isinstance(data, dict):
        data = data.get("universe")
    if not isinstance(data, list):
        raise PrivEqError(f"{path}: expected a JSON list of types or {{\"universe\": [...]}}")
    return [str(t) for t in data]


def make_mechanism(
    name: str,
    epsilon: float,
    delta: float,
    beta: float,
    learner: str = SWAP,
    T: Optional[int] = None,
    loss_mode: Optional[str] = None,
    T_cap: int = DEFAULT_T_CAP,
    verbose: bool = False,
    universe: Optional[List[str]] = None,
) -> BaseMechanism:
    private = MECHANISMS[name].private
    extra: Dict[str, Any] = {}
    if universe is not None:
        if name != "median":
            raise PrivEqError(f"--type-universe only applies to the median mechanism, not {name!r}")
        extra["universe"] = universe
    return build_mechanism(
        name,
        budget=PrivacyBudget(epsilon, delta) if private else None,
        beta=beta,
        learner=learner,
        T=T,
        loss_mode=loss_mode,
        T_cap=T_cap,
        verbose=verbose,
        **extra,
    )


def _report_infeasible(result: Infeasible) -> int:
    print(f"❌ {result.message()}")
    return EXIT_INFEASIBLE


def cmd_run(config: RunConfig, verbose: bool = False) -> int:
    game = load_game_arg(config.game, config.variant)
    mechanism = make_mechanism(
        config.mechanism,
        config.epsilon,
        config.delta,
        config.beta,
        config.learner,
        config.explicit_T,
        config.loss_mode,
        config.T_cap,
        verbose,
        load_type_universe(config.type_universe) if config.type_universe else None,
    )
    if verbose:
        print(f"🔧 {game!r}, mechanism {mechanism.name}, T={config.T}, seed={config.seed}")
    result = mechanism.run(game, config.seed)
    embedded = config.embedded()

    if isinstance(result, Infeasible):
        if config.out:
            os.makedirs(config.out, exist_ok=True)
            write_json(os.path.join(config.out, MANIFEST), result.to_dict(), embedded)
        return _report_infeasible(result)

    if result.failed:
        if config.out:
            write_run_artifacts(config.out, result, None, embedded)
        print(f"❌ {result.mechanism} failed ({result.status}) at round {result.failure_round}")
        return EXIT_FAILURE

    certificate = verify(result.distribution, game, config.verify_mode, config.seed)
    if config.out:
        paths = write_run_artifacts(config.out, result, certificate, embedded)
        if verbose:
            for kind, path in paths.items():
                print(f"  {kind}: {path}")
    print(
        f"✅ {result.mechanism}: T={result.T} alpha_cce={certificate.alpha_cce!r} "
        f"alpha_ce={certificate.alpha_ce!r} predicted={result.predicted_alpha!r}"
    )
    return EXIT_OK


def cmd_verify(game_path: str, distribution_path: str, mode: str, seed: int, variant: Optional[str] = None) -> dict:
    game = load_game_arg(game_path, variant)
    certificate = verify(load_distribution(distribution_path), game, mode, seed)
    return certificate.to_dict()


def template_game(family: Optional[str], n: Optional[int], game_path: Optional[str], variant: Optional[str]) -> BaseGame:
    if game_path:
        return load_game_arg(game_path, variant)
    if family is None or n is None:
        raise PrivEqError("audit needs --game, or --game-family with --n")
    family = FAMILY_ALIASES.get(family, family)
    if family not in GAME_FAMILIES:
        raise PrivEqError(f"unknown game family {family!r}; known: {sorted(GAME_FAMILIES)}")
    return load_class_from_string(GAME_FAMILIES[family], base=BaseGame).from_config(n=n)


def auto_plan(mechanism: BaseMechanism, game: BaseGame):
    """The plan an auto-T private mechanism would pick for ``game``; None when T is explicit or no plan applies."""
    if mechanism.T is not None or mechanism.budget is None:
        return None
    budget, T_cap = mechanism.budget, mechanism.T_cap or DEFAULT_T_CAP
    if mechanism.name == "laplace":
        return plan_for_nrlaplace(game.n, game.k, game.gamma, budget.epsilon, budget.delta, mechanism.beta, T_cap)
    if mechanism.name == "median":
        return plan_for_nrmedian(game.n, game.k, game.U, game.gamma, budget.epsilon, budget.delta, mechanism.beta, T_cap)
    return None


def cmd_audit(args: argparse.Namespace) -> int:
    game = template_game(args.game_family, args.n, args.game, args.variant)
    mechanism = make_mechanism(
        args.mechanism, args.epsilon, args.delta, args.beta, args.learner, _parse_T(args.T), args.loss_mode, args.T_cap
    )
    prior = TypePrior.parse(args.prior)
    plan = auto_plan(mechanism, game)
    if isinstance(plan, Infeasible):
        return _report_infeasible(plan)
    trial_log = None
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        trial_log = os.path.join(args.out, "audit_trials.jsonl")
    report = audit(
        game, prior, mechanism, args.trials, args.seed, workers=args.workers, trial_log=trial_log, progress=args.verbose
    )
    config = {key: value for key, value in vars(args).items() if key not in ("out", "func", "verbose")}
    payload = report.to_dict()
    if args.out:
        write_json(os.path.join(args.out, "audit_report.json"), payload, config)
    print(dumps(payload), end="")
    if report.passed:
        print(f"✅ max gain {report.max_deviation_gain!r} <= eta {report.eta_claimed!r} + 3 stderr")
    else:
        print(f"⚠️  audit did not pass: gain {report.max_deviation_gain!r}, eta {report.eta_claimed!r}, "
              f"discard rate {report.discard_rate!r}")
    return EXIT_OK


def cmd_lowerbound(args: argparse.Namespace) -> int:
    instance = SubsetSumInstance.load(args.instance)
    config = {key: value for key, value in vars(args).items() if key not in ("out", "func", "verbose")}
    entries: List[Dict[str, Any]] = []
    certificate = None
    decode_alpha = args.alpha
    if instance.m > 0:
        game = LowerBoundGame(instance)
        if args.planted:
            distribution = planted_distribution(game, args.perturb)
        else:
            mechanism = make_mechanism(
                args.mechanism, args.epsilon, args.delta, args.beta, args.learner, _parse_T(args.T), None, args.T_cap
            )
            result = mechanism.run(game, args.seed)
            if isinstance(result, Infeasible):
                return _report_infeasible(result)
            if result.failed:
                print(f"❌ {result.mechanism} failed ({result.status}) at round {result.failure_round}")
                return EXIT_FAILURE
            distribution = result.distribution
            certificate = verify(distribution, game, seed=args.seed)
            decode_alpha = max(args.alpha, certificate.alpha_cce)
            if decode_alpha > args.alpha:
                logger.info("decoding at certified alpha_cce=%g instead of %g", decode_alpha, args.alpha)
        marginals = distribution.marginals()
        for j in range(instance.m):
            truth = instance.answer(j)
            entry: Dict[str, Any] = {"query": j + 1, "true": truth}
            try:
                decoded = decode_answer(game, marginals, j, decode_alpha)
            except DecodeError as e:
                logger.warning("%s", e)
                entry.update(error_message=str(e), level=e.level)
            else:
                error = abs(decoded.answer - truth)
                entry.update(decoded.to_dict(), error=error, within_bound=error <= ANSWER_WIDTH * decode_alpha)
            entries.append(entry)
    payload: Dict[str, Any] = {
        "alpha": args.alpha,
        "decode_alpha": decode_alpha,
        "error_bound": ANSWER_WIDTH * decode_alpha,
        "planted": bool(args.planted),
        "queries": entries,
    }
    if certificate is not None:
        payload.update(alpha_cce=certificate.alpha_cce, alpha_ce=certificate.alpha_ce)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_json(os.path.join(args.out, "lowerbound_report.json"), payload, config)
    print(dumps(payload), end="")
    decoded_errors = [e["error"] for e in entries if "error" in e]
    if decoded_errors:
        print(f"✅ decoded {len(decoded_errors)}/{len(entries)} queries, max error {max(decoded_errors)!r}")
    return EXIT_OK


def bounds_rows(
    ns: List[int],
    k: int,
    gamma: Optional[float],
    epsilon: float,
    delta: float,
    beta: float,
    U: int = 2,
    T_cap: int = DEFAULT_T_CAP,
) -> List[Dict[str, Any]]:
    """One row per n; gamma defaults to 1/n."""
    rows = []
    for n in ns:
        g = 1.0 / n if gamma is None else gamma
        row: Dict[str, Any] = {"n": n, "k": k, "gamma": g, "eta_shape": eta_shape(n, k, g)}
        plan = plan_for_nrlaplace(n, k, g, epsilon, delta, beta, T_cap)
        if isinstance(plan, Infeasible):
            row.update(laplace="infeasible", T=None, sigma=None, alpha_laplace=None, eps_composed=None, delta_composed=None)
        else:
            eps_composed, delta_composed = compose_advanced(plan.per_step_epsilon, 0.0, plan.steps, delta)
            row.update(
                laplace="ok",
                T=plan.T,
                sigma=plan.sigma,
                alpha_laplace=predicted_alpha_laplace(n, k, g, epsilon, delta, beta, plan.T),
                eps_composed=eps_composed,
                delta_composed=delta_composed,
            )
        median = plan_for_nrmedian(n, k, U, g, epsilon, delta, beta, T_cap)
        if isinstance(median, Infeasible):
            row.update(median="infeasible", T_median=None, alpha_mm=None, alpha_median=None)
        else:
            row.update(
                median="ok",
                T_median=median.T,
                alpha_mm=median.alpha_mm,
                alpha_median=predicted_alpha_median(k, median.T, median.alpha_mm),
            )
        rows.append(row)
    return rows


def cmd_bounds(args: argparse.Namespace) -> int:
    rows = bounds_rows(args.n, args.k, args.gamma, args.epsilon, args.delta, args.beta, args.U, args.T_cap)
    if args.json:
        print(json.dumps({"schema": 1, "build": build_id(), "rows": rows}, indent=2))
    else:
        print(pd.DataFrame(rows).to_string(index=False, float_format=repr))
    return EXIT_OK


def _parse_T(value: Optional[str]) -> Optional[int]:
    if value is None or value == "auto":
        return None
    return int(value)


def _add_privacy_args(parser: argparse.ArgumentParser, mechanism_default: str = "laplace") -> None:
    parser.add_argument("--mechanism", type=str, default=mechanism_default, choices=sorted(MECHANISMS))
    parser.add_argument("--epsilon", type=float, default=1.0, help="privacy epsilon (default: 1.0)")
    parser.add_argument("--delta", type=float, default=1e-6, help="privacy delta (default: 1e-6)")
    parser.add_argument("--beta", type=float, default=0.05, help="failure probability (default: 0.05)")
    parser.add_argument("--learner", type=str, default=SWAP, choices=list(LEARNERS))
    parser.add_argument("--T", type=str, default="auto", help="round count or 'auto' (default: auto)")
    parser.add_argument("--T-cap", type=int, default=DEFAULT_T_CAP, help="upper limit for auto T")
    parser.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="privateequilibria",
        description="Private correlated equilibria of large games: run, verify, audit, lower bound, bounds",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--verbose", action="store_true", help="INFO logging and progress bars")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a mechanism, verify its output and write artifacts")
    run.add_argument("--game", type=str, help="game spec JSON or family config YAML")
    run.add_argument("--variant", type=str, default=None, help="variant name inside a family YAML")
    _add_privacy_args(run)
    run.add_argument("--loss-mode", type=str, default=None, help="exact | anonymous | structured | monte_carlo[:N]")
    run.add_argument("--verify-mode", type=str, default="exact", help="exact | monte_carlo[:N]")
    run.add_argument(
        "--type-universe",
        type=str,
        default=None,
        help="JSON list of candidate types for --mechanism median (default: the game family's universe)",
    )
    run.add_argument("--out", type=str, default=None, help="artifact directory")
    run.add_argument("--from-artifact", type=str, default=None, help="rerun the configuration embedded in an artifact")

    ver = sub.add_parser("verify", help="certify a stored distribution")
    ver.add_argument("--game", type=str, required=True)
    ver.add_argument("--variant", type=str, default=None)
    ver.add_argument("--distribution", type=str, required=True)
    ver.add_argument("--mode", type=str, default="exact")
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--out", type=str, default=None, help="certificate JSON path")

    aud = sub.add_parser("audit", help="Monte Carlo incentive audit")
    aud.add_argument("--game", type=str, default=None)
    aud.add_argument("--variant", type=str, default=None)
    aud.add_argument("--game-family", type=str, default=None, help=f"one of {sorted(GAME_FAMILIES)} or an alias")
    aud.add_argument("--n", type=int, default=None)
    aud.add_argument("--prior", type=str, default="bernoulli:0.5")
    _add_privacy_args(aud)
    aud.add_argument("--loss-mode", type=str, default=None)
    aud.add_argument("--trials", type=int, default=200)
    aud.add_argument("--workers", type=int, default=1)
    aud.add_argument("--out", type=str, default=None)

    low = sub.add_parser("lowerbound", help="decode subset-sum answers from an equilibrium of the reduction game")
    low.add_argument("--instance", type=str, required=True, help="subset-sum instance JSON (1-indexed queries)")
    low.add_argument("--alpha", type=float, required=True)
    low.add_argument("--planted", action="store_true", help="decode the planted equilibrium instead of a mechanism run")
    low.add_argument("--perturb", type=float, default=0.0, help="mix the planted equilibrium toward uniform")
    _add_privacy_args(low)
    low.add_argument("--out", type=str, default=None)

    bnd = sub.add_parser("bounds", help="print plans and predicted accuracy for several n")
    bnd.add_argument("--n", type=int, nargs="+", required=True)
    bnd.add_argument("--k", type=int, default=2)
    bnd.add_argument("--gamma", type=float, default=None, help="sensitivity (default: 1/n)")
    bnd.add_argument("--U", type=int, default=2, help="type universe size for the median plan")
    bnd.add_argument("--epsilon", type=float, default=1.0)
    bnd.add_argument("--delta", type=float, default=1e-6)
    bnd.add_argument("--beta", type=float, default=0.05)
    bnd.add_argument("--T-cap", type=int, default=DEFAULT_T_CAP)
    bnd.add_argument("--json", action="store_true", help="machine-readable output")
    return parser


def run_config_from_args(args: argparse.Namespace) -> RunConfig:
    if args.from_artifact:
        embedded = dict(load_artifact(args.from_artifact)["config"])
        embedded["out"] = args.out
        return RunConfig.model_validate(embedded)
    if not args.game:
        raise PrivEqError("run needs --game or --from-artifact")
    return RunConfig(
        game=args.game,
        variant=args.variant,
        mechanism=args.mechanism,
        epsilon=args.epsilon,
        delta=args.delta,
        beta=args.beta,
        learner=args.learner,
        T=args.T,
        T_cap=args.T_cap,
        loss_mode=args.loss_mode,
        verify_mode=args.verify_mode,
        type_universe=args.type_universe,
        seed=args.seed,
        out=args.out,
    )


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s - %(levelname)s - %(message)s",
    )
    if args.verbose:
        logging.getLogger("privateequilibria").setLevel(logging.INFO)
    try:
        if args.command == "run":
            return cmd_run(run_config_from_args(args), args.verbose)
        if args.command == "verify":
            certificate = cmd_verify(args.game, args.distribution, args.mode, args.seed, args.variant)
            if args.out:
                with open(args.out, "w", encoding="utf-8") as f:
                    f.write(dumps(certificate))
            print(dumps(certificate), end="")
            return EXIT_OK
        if args.command == "audit":
            return cmd_audit(args)
        if args.command == "lowerbound":
            return cmd_lowerbound(args)
        return cmd_bounds(args)
    except (PrivEqError, ValueError, OSError) as e:
        print(f"❌ {e}")
        if args.verbose:
            traceback.print_exc()
        return EXIT_ERROR
    except Exception as e:
        print(f"❌ unexpected error: {e}")
        traceback.print_exc()
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
