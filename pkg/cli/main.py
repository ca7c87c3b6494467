# cli/main.py
"""cmg: solve convex Markov games and certify exploitability.

    cmg solve --domain ipd --seed 0 1 2 --jobs 3
    cmg solve --config my_game.json --algo rr --iters 2000
    cmg exploitability --domain ipd --human-profile
    cmg list-domains
"""
import argparse
import json
import logging
import re
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from game.config_io import document_to_game, parse_document, save_spec
from game.domains import (
    DomainCatalogEntry,
    SolverDefaults,
    domain_names,
    get_domain,
    human_ipd_profile,
    mean_utility,
)
from game.spec import check_profile, uniform_profile
from models.run_config import RunConfig
from solver.anneal import AnnealSchedule
from solver.descent import SolveResult, pgl_minimize, rr_descent, sim_descent
from solver.exploitability import exploitability, per_state_exploitability
from storage import artifacts
from storage.run_queue import RunQueue
from utils import settings
from utils.errors import ConfigError, NumericError
from utils.logging_setup import configure_logging
from utils.validation import validate_safe_id

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERIC = 2

CONFIG_DEFAULTS = SolverDefaults(lr=1e-1, anneal=1, iters=1000)
HUMAN_PROFILE_DOMAINS = ("ipd", "ipd-imitation")


# ============================================================
# Game resolution
# ============================================================


def resolve_entry(cfg: RunConfig) -> DomainCatalogEntry:
    """Catalog entry for --domain, or an equivalent entry built from --config."""
    if cfg.domain is not None:
        if cfg.fix_opponent:
            return get_domain(cfg.domain, fix_opponent=True)
        return get_domain(cfg.domain)

    path = Path(cfg.config)
    if not path.exists():
        raise FileNotFoundError(f"Config não encontrada: {path}")
    doc = parse_document(path.read_text(encoding="utf-8"))
    spec, utilities = document_to_game(doc)
    # the name becomes a directory under --out
    name = validate_safe_id(doc.name or _stem_id(path), "name")
    return DomainCatalogEntry(
        name=name,
        spec=spec,
        utilities=utilities,
        defaults=CONFIG_DEFAULTS,
        description=doc.description or "",
        state_labels=tuple(doc.state_labels or ()),
        action_labels=tuple(tuple(labels) for labels in doc.action_labels or ()),
        metrics={"mean_utility": mean_utility},
    )


def _stem_id(path: Path) -> str:
    """File stem folded to a safe id: 'My_Game.json' -> 'my-game'."""
    return re.sub(r"[^a-z0-9]+", "-", path.stem.lower()).strip("-")[:64].strip("-")


def state_labels(entry: DomainCatalogEntry) -> list[str]:
    return list(entry.state_labels) or [f"s{s}" for s in range(entry.spec.n_states)]


def action_labels(entry: DomainCatalogEntry) -> list[list[str]]:
    if entry.action_labels:
        return [list(labels) for labels in entry.action_labels]
    return [[f"a{a}" for a in range(n)] for n in entry.spec.action_counts]


def free_players(entry: DomainCatalogEntry) -> list[int]:
    return [i for i in range(entry.spec.n_players) if i not in entry.fixed_players]


def resolved_schedule(cfg: RunConfig, entry: DomainCatalogEntry) -> AnnealSchedule:
    kind = cfg.anneal if cfg.anneal is not None else entry.defaults.anneal
    d = entry.defaults
    return AnnealSchedule(kind=kind, tau0=d.tau0, min_temperature=d.min_tau, loss_threshold=d.loss_gate)


# ============================================================
# Policy files
# ============================================================


def policy_document(entry: DomainCatalogEntry, profile) -> dict:
    states = state_labels(entry)
    actions = action_labels(entry)
    players = []
    for i, pi in enumerate(profile):
        pi = np.asarray(pi, dtype=np.float64)
        players.append(
            {
                "player": i,
                "fixed": i in entry.fixed_players,
                "probs": [[float(p) for p in row] for row in pi],
                "argmax": [actions[i][int(np.argmax(row))] for row in pi],
            }
        )
    return {"domain": entry.name, "state_labels": states, "action_labels": actions, "players": players}


def load_policy(path: Path, entry: DomainCatalogEntry) -> tuple[np.ndarray, ...]:
    document = artifacts.get_json(path)
    try:
        profile = [np.asarray(player["probs"], dtype=np.float64) for player in document["players"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"policy.json inválido ({path}): {exc}") from exc
    return check_profile(entry.spec, profile)


# ============================================================
# solve
# ============================================================


def _run_solver(cfg: RunConfig, entry: DomainCatalogEntry, seed: int) -> SolveResult:
    lr = cfg.lr if cfg.lr is not None else entry.defaults.lr
    iters = cfg.iters if cfg.iters is not None else entry.defaults.iters
    common = dict(
        seed=seed,
        init_style=entry.defaults.init,
        stride=cfg.stride,
        fixed=dict(entry.fixed_players),
    )
    if cfg.algo == "pgl":
        return pgl_minimize(
            entry.spec,
            entry.utilities,
            None,
            resolved_schedule(cfg, entry),
            lr,
            iters,
            eps_cadence=cfg.eps_cadence,
            eps_tol=cfg.eps_tol,
            **common,
        )
    solver = sim_descent if cfg.algo == "sim" else rr_descent
    return solver(entry.spec, entry.utilities, None, lr, iters, **common)


def _metrics(entry: DomainCatalogEntry, profile) -> dict:
    return {name: artifacts.jsonable(metric(entry, profile)) for name, metric in entry.metrics.items()}


def solve_one(cfg: RunConfig, entry: DomainCatalogEntry, seed: int, run_dir: Path) -> dict:
    started = time.monotonic()
    logger.info("🚀 solve %s algo=%s seed=%d -> %s", entry.name, cfg.algo, seed, run_dir)
    try:
        result = _run_solver(cfg, entry, seed)
    except NumericError as exc:
        if exc.trace is not None:
            artifacts.write_trace_csv(run_dir / "trace.csv", exc.trace.rows)
        artifacts.write_json(
            run_dir / "summary.json",
            {"status": "numeric_abort", "error": str(exc), "seed": seed, "config": cfg.model_dump()},
        )
        raise

    profile = result.policy
    players = free_players(entry)
    report = exploitability(entry.spec, entry.utilities, profile, tol=cfg.eps_tol, players=players)
    per_state = per_state_exploitability(entry.spec, entry.utilities, profile, tol=cfg.eps_tol, players=players)

    final = result.trace.rows[-1]
    summary = {
        "status": "ok",
        "domain": entry.name,
        "algo": cfg.algo,
        "seed": seed,
        "iters": final.iter,
        "lr": cfg.lr if cfg.lr is not None else entry.defaults.lr,
        "anneal": cfg.anneal if cfg.anneal is not None else entry.defaults.anneal,
        "tau": result.tau,
        "anneal_events": result.anneal_events,
        "loss": final.loss,
        "bound": final.bound,
        "utilities": mean_utility(entry, profile),
        "epsilon": report.epsilon,
        "epsilon_per_player": report.per_player,
        "epsilon_upper": report.upper,
        "certified": all(report.certified) and per_state.certified,
        "players": players,
        "per_state_epsilon": dict(zip(state_labels(entry), per_state.per_state.tolist())),
        "metrics": _metrics(entry, profile),
        "config": cfg.model_dump(),
        "wallclock_s": time.monotonic() - started,
    }
    artifacts.write_trace_csv(run_dir / "trace.csv", result.trace.rows)
    artifacts.write_json(run_dir / "policy.json", policy_document(entry, profile))
    artifacts.write_json(run_dir / "summary.json", artifacts.jsonable(summary))
    logger.info("✅ %s seed=%d: epsilon=%.3e loss=%.3e", entry.name, seed, report.epsilon, final.loss)
    return summary


def run_dir_for(cfg: RunConfig, entry: DomainCatalogEntry, seed: int) -> Path:
    return Path(cfg.out) / entry.name / f"{cfg.algo}-seed{seed}"


def cmd_solve(cfg: RunConfig, dump_config: Optional[str] = None) -> int:
    entry = resolve_entry(cfg)
    if dump_config:
        save_spec(
            entry.spec,
            entry.utilities,
            dump_config,
            name=entry.name,
            description=entry.description,
            state_labels=entry.state_labels,
            action_labels=entry.action_labels,
        )
        return EXIT_OK

    events_path = Path(cfg.out) / "events.ndjson"

    def on_state_change(run_id: str, state: str):
        artifacts.append_jsonl(events_path, {"run": run_id, "state": state, "ts": int(time.time() * 1000)})

    queue = RunQueue(solve_one, workers=min(cfg.jobs, len(cfg.seeds)), on_state_change=on_state_change)
    for seed in cfg.seeds:
        run_dir = run_dir_for(cfg, entry, seed)
        queue.submit(f"{entry.name}/{cfg.algo}-seed{seed}", cfg, entry, seed, run_dir)
    try:
        queue.close_and_wait()
    except RuntimeError:
        errors = queue.errors
        if any(isinstance(exc, NumericError) for exc in errors.values()):
            return EXIT_NUMERIC
        if all(isinstance(exc, (ConfigError, FileNotFoundError)) for exc in errors.values()):
            return EXIT_CONFIG
        raise next(exc for exc in errors.values() if not isinstance(exc, (ConfigError, FileNotFoundError)))
    return EXIT_OK


# ============================================================
# exploitability
# ============================================================


def cmd_exploitability(
    cfg: RunConfig,
    policy: Optional[str] = None,
    human_profile: bool = False,
) -> int:
    entry = resolve_entry(cfg)
    if human_profile:
        if entry.name not in HUMAN_PROFILE_DOMAINS:
            raise ConfigError(f"--human-profile só vale para {', '.join(HUMAN_PROFILE_DOMAINS)}")
        profile = check_profile(entry.spec, human_ipd_profile())
        source = "human-profile"
    elif policy is not None:
        profile = load_policy(Path(policy), entry)
        source = str(policy)
    else:
        profile = uniform_profile(entry.spec)
        for j, pi in entry.fixed_players.items():
            profile = tuple(pi if k == j else p for k, p in enumerate(profile))
        source = "uniform"

    players = free_players(entry)
    started = time.monotonic()
    report = exploitability(entry.spec, entry.utilities, profile, tol=cfg.eps_tol, players=players)
    per_state = per_state_exploitability(entry.spec, entry.utilities, profile, tol=cfg.eps_tol, players=players)
    logger.info("⏱️ exploitability em %.2fs", time.monotonic() - started)

    states = state_labels(entry)
    result = {
        "domain": entry.name,
        "policy": source,
        "players": players,
        "per_player": report.per_player,
        "epsilon": report.epsilon,
        "upper": report.upper,
        "certified": all(report.certified) and per_state.certified,
        "utilities": mean_utility(entry, profile),
        "per_state": {
            label: {"max": float(per_state.per_state[s]), "per_player": per_state.per_state_player[s].tolist()}
            for s, label in enumerate(states)
        },
        "per_state_max": float(per_state.epsilon),
    }
    result = artifacts.jsonable(result)
    artifacts.write_json(Path(cfg.out) / entry.name / "epsilon.json", result)
    print(json.dumps(result, indent=2))
    return EXIT_OK


# ============================================================
# list-domains
# ============================================================


def cmd_list_domains(as_json: bool = False) -> int:
    rows = []
    for name in domain_names():
        entry = get_domain(name)
        d = entry.defaults
        rows.append(
            {
                "name": name,
                "players": entry.spec.n_players,
                "states": entry.spec.n_states,
                "actions": list(entry.spec.action_counts),
                "lr": d.lr,
                "anneal": d.anneal,
                "iters": d.iters,
                "min_tau": d.min_tau,
                "loss_gate": d.loss_gate,
                "description": entry.description,
            }
        )
    if as_json:
        print(json.dumps(rows, indent=2))
        return EXIT_OK
    for row in rows:
        anneal = "const" if row["anneal"] is None else f"type{row['anneal']}"
        actions = "x".join(str(a) for a in row["actions"])
        print(
            f"{row['name']:<22} n={row['players']} |S|={row['states']:<2} |A|={actions:<6} "
            f"lr={row['lr']:<6g} anneal={anneal:<6} T={row['iters']:<5} tau_min={row['min_tau']:<6g} "
            f"{row['description']}"
        )
    return EXIT_OK


# ============================================================
# Entry point
# ============================================================


def _add_source(parser: argparse.ArgumentParser):
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--domain", help="built-in domain (see list-domains)")
    source.add_argument("--config", help="game config document (JSON)")
    parser.add_argument("--fix-opponent", action="store_true", help="pin player 2 (synthetic-safety only)")
    parser.add_argument("--out", default=settings.OUTPUT_DIR)
    parser.add_argument("--tol", type=float, default=1e-6, help="Frank-Wolfe gap tolerance")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cmg", description="Convex Markov game solver.")
    parser.add_argument("--log-level", default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="run PGL or a baseline and certify the result")
    _add_source(solve)
    solve.add_argument("--algo", choices=["pgl", "sim", "rr"], default="pgl")
    solve.add_argument("--seed", type=int, nargs="+", default=[0])
    solve.add_argument("--iters", type=int, default=None)
    solve.add_argument("--lr", type=float, default=None)
    solve.add_argument("--anneal", type=int, choices=[1, 2, 3], default=None)
    solve.add_argument("--stride", type=int, default=10)
    solve.add_argument("--eps-cadence", type=int, default=10)
    solve.add_argument("--jobs", type=int, default=settings.JOBS)
    solve.add_argument("--dump-config", default=None, metavar="PATH", help="write the game as a config document and exit")

    expl = sub.add_parser("exploitability", help="exact exploitability of a policy profile")
    _add_source(expl)
    profile = expl.add_mutually_exclusive_group()
    profile.add_argument("--policy", default=None, help="policy.json from a solve run")
    profile.add_argument("--human-profile", action="store_true")

    listing = sub.add_parser("list-domains", help="built-in domains and their defaults")
    listing.add_argument("--json", action="store_true")
    return parser


def _run_config(args: argparse.Namespace) -> RunConfig:
    values = dict(
        domain=args.domain,
        config=args.config,
        out=args.out,
        eps_tol=args.tol,
        fix_opponent=args.fix_opponent,
    )
    if args.command == "solve":
        values.update(
            algo=args.algo,
            seeds=args.seed,
            iters=args.iters,
            lr=args.lr,
            anneal=args.anneal,
            stride=args.stride,
            eps_cadence=args.eps_cadence,
            jobs=args.jobs,
        )
    return RunConfig.from_values(**values)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(level=args.log_level)

    try:
        if args.command == "list-domains":
            return cmd_list_domains(as_json=args.json)
        cfg = _run_config(args)
        if args.command == "solve":
            return cmd_solve(cfg, dump_config=args.dump_config)
        return cmd_exploitability(cfg, policy=args.policy, human_profile=args.human_profile)
    except (ConfigError, FileNotFoundError) as exc:
        logger.error("❌ %s", exc)
        return EXIT_CONFIG
    except NumericError as exc:
        logger.error("❌ erro numérico: %s", exc)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
