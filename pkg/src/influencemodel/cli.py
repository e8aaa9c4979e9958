"""Command-line interface.

Subcommands: build (model -> master chain + class decomposition),
analyze (chain -> stationary distribution, observed-process conditionals,
markovianity gap), simulate (model -> trajectory/observations), estimate
(data -> parameters, four estimators), reproduce (re-derive the bundled
reference results and check them).

Human-readable tables go to stdout; machine-readable output goes to the
files named by --out and friends.  Exit codes: 0 success, 1 runtime or
estimation or reproduction failure, 2 invalid input.  Size caps can be
overridden with the environment variables INFLUENCEMODEL_STATE_CAP,
INFLUENCEMODEL_HORIZON_CAP, and INFLUENCEMODEL_RESTART_CAP.  Site lists
on the command line are 1-based, matching the file formats.
"""

from __future__ import annotations

import argparse
import itertools
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import fileio, reference
from .chain import (
    AmbiguousStationaryError,
    CapExceededError,
    DEFAULT_HORIZON_CAP,
    DEFAULT_STATE_CAP,
    MasterChain,
    build_master_chain,
    communicating_classes,
    conditional_observed_probability,
    lumped_one_step_chain,
    markovianity_gap,
    single_recurrent_class,
    stationary_distribution,
)
from .estimate import (
    EMConfig,
    FitConfig,
    baum_welch_poim,
    direct_em_full_obs,
    estimate_G_counting,
    recover_influence_params,
)
from .model import InvalidModelError, StateCodec
from .simulate import project_observations, sample_trajectory

DEFAULT_RESTART_CAP = 64


def _env_cap(name: str, default: int) -> int:
    raw = os.environ.get(name)
    if raw is None:
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"{name} must be an integer, got {raw!r}") from None
    if value < 1:
        raise ValueError(f"{name} must be positive")
    return value


@dataclass(frozen=True)
class RunConfig:
    """A parsed CLI invocation with caps resolved."""

    command: str
    model: str | None = None
    chain: str | None = None
    data: str | None = None
    structure: str | None = None
    out: str | None = None
    obs_out: str | None = None
    report: str | None = None
    expected: str | None = None
    observed: tuple[int, ...] | None = None
    init: str = "stationary"
    T: int | None = None
    seed: int = 0
    horizon: int = 2
    estimator: str | None = None
    restarts: int | None = None
    max_iters: int | None = None
    tol: float | None = None
    state_cap: int = DEFAULT_STATE_CAP
    horizon_cap: int = DEFAULT_HORIZON_CAP
    restart_cap: int = DEFAULT_RESTART_CAP

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        observed = None
        if getattr(args, "observed", None):
            parts = [p for p in args.observed.split(",") if p]
            try:
                observed = tuple(int(p) - 1 for p in parts)
            except ValueError:
                raise ValueError(f"--observed must be integers, got {args.observed!r}")
        cfg = cls(
            command=args.command,
            model=getattr(args, "model", None),
            chain=getattr(args, "chain", None),
            data=getattr(args, "data", None),
            structure=getattr(args, "structure", None),
            out=getattr(args, "out", None),
            obs_out=getattr(args, "obs_out", None),
            report=getattr(args, "report", None),
            expected=getattr(args, "expected", None),
            observed=observed,
            init=getattr(args, "init", "stationary"),
            T=getattr(args, "T", None),
            seed=getattr(args, "seed", 0),
            horizon=getattr(args, "horizon", 2),
            estimator=getattr(args, "estimator", None),
            restarts=getattr(args, "restarts", None),
            max_iters=getattr(args, "max_iters", None),
            tol=getattr(args, "tol", None),
            state_cap=_env_cap("INFLUENCEMODEL_STATE_CAP", DEFAULT_STATE_CAP),
            horizon_cap=_env_cap("INFLUENCEMODEL_HORIZON_CAP", DEFAULT_HORIZON_CAP),
            restart_cap=_env_cap("INFLUENCEMODEL_RESTART_CAP", DEFAULT_RESTART_CAP),
        )
        if cfg.restarts is not None and not 1 <= cfg.restarts <= cfg.restart_cap:
            raise ValueError(
                f"--restarts must be in 1..{cfg.restart_cap}, got {cfg.restarts}"
            )
        return cfg


def _parse_init(spec: str, chain: MasterChain | None, m: tuple[int, ...]):
    """Resolve an --init value to a joint state tuple or a distribution.

    Accepts 'stationary', 'uniform', a comma list of n statuses (a joint
    state), or a comma list of N probabilities.
    """
    codec = StateCodec(m)
    N = codec.n_states
    if spec == "stationary":
        if chain is None:
            raise ValueError("stationary init needs a chain")
        return stationary_distribution(chain).pi
    if spec == "uniform":
        return np.full(N, 1.0 / N)
    parts = [p for p in spec.split(",") if p]
    if len(parts) == len(m):
        try:
            return tuple(int(p) for p in parts)
        except ValueError:
            pass
    if len(parts) == N:
        dist = np.array([float(p) for p in parts])
        return dist
    raise ValueError(
        f"--init must be 'stationary', 'uniform', {len(m)} statuses, "
        f"or {N} probabilities; got {spec!r}"
    )


def _as_delta(init, codec: StateCodec) -> np.ndarray:
    if isinstance(init, tuple):
        vec = np.zeros(codec.n_states)
        vec[codec.encode(init)] = 1.0
        return vec
    return np.asarray(init, dtype=float)


def cmd_build(cfg: RunConfig) -> int:
    model = fileio.read_model(cfg.model)
    chain = build_master_chain(model, state_cap=cfg.state_cap)
    fileio.write_chain(chain, cfg.out)
    dec = communicating_classes(chain)
    codec = chain.codec

    print(f"master chain: {chain.n_states} states "
          f"({len(dec.classes)} communicating classes)")
    for k, (members, rec) in enumerate(zip(dec.classes, dec.recurrent)):
        kind = "recurrent" if rec else "transient"
        shown = ", ".join(str(codec.decode(s)) for s in members[:6])
        more = " ..." if len(members) > 6 else ""
        print(f"  class {k}: {len(members)} states, {kind}: {shown}{more}")
    absorbing = [codec.decode(s) for s in dec.absorbing]
    print(f"absorbing states: {absorbing if absorbing else 'none'}")
    print(f"single recurrent class: {single_recurrent_class(chain)}")

    if cfg.report:
        fileio.write_report(
            {
                "n_states": chain.n_states,
                "classes": [list(c) for c in dec.classes],
                "recurrent": list(dec.recurrent),
                "absorbing": list(dec.absorbing),
                "single_recurrent_class": single_recurrent_class(chain),
            },
            cfg.report,
        )
    return 0


def _conditionals_table(chain, init, observed, horizon):
    """Per-history conditionals versus the last-observation-only ones."""
    sub_m = tuple(chain.m[i] for i in observed)
    statuses = [tuple(range(1, mi + 1)) for mi in sub_m]
    symbols = list(itertools.product(*statuses))
    rows = []
    for L in range(2, horizon + 1):
        for hist in itertools.product(symbols, repeat=L):
            for nxt in symbols:
                try:
                    p_full = conditional_observed_probability(
                        chain, init, observed, list(hist), nxt
                    )
                    p_last = conditional_observed_probability(
                        chain, init, observed, [hist[-1]], nxt
                    )
                except ValueError:
                    continue
                rows.append(
                    {
                        "history": [list(h) for h in hist],
                        "next": list(nxt),
                        "p_given_history": p_full,
                        "p_given_last": p_last,
                        "difference": p_full - p_last,
                    }
                )
    return rows


def cmd_analyze(cfg: RunConfig) -> int:
    chain = fileio.read_chain(cfg.chain)
    if cfg.observed is None:
        raise ValueError("analyze requires --observed")
    init = _as_delta(_parse_init(cfg.init, chain, chain.m), chain.codec)

    dec = communicating_classes(chain)
    report: dict = {
        "observed": [i + 1 for i in cfg.observed],
        "init": cfg.init,
        "single_recurrent_class": single_recurrent_class(chain),
        "absorbing": list(dec.absorbing),
    }
    try:
        pi = stationary_distribution(chain).pi
        report["stationary"] = pi.tolist()
    except AmbiguousStationaryError:
        report["stationary"] = None

    lumped = lumped_one_step_chain(chain, init, cfg.observed)
    gap = markovianity_gap(
        chain, init, cfg.observed, cfg.horizon, horizon_cap=cfg.horizon_cap
    )
    rows = _conditionals_table(chain, init, cfg.observed, cfg.horizon)
    report["lumped_one_step"] = lumped.tolist()
    report["markovianity_gap"] = gap
    report["horizon"] = cfg.horizon
    report["conditionals"] = rows

    if report["stationary"] is not None:
        print("stationary distribution:",
              np.array2string(np.asarray(report["stationary"]), precision=6))
    print("lumped one-step matrix (not a generator of the observed process):")
    print(np.array2string(lumped, precision=6))
    print(f"markovianity gap (horizon {cfg.horizon}): {gap:.6f}")
    worst = sorted(rows, key=lambda r: -abs(r["difference"]))[:5]
    for r in worst:
        hist = " ".join(str(tuple(h)) for h in r["history"])
        print(
            f"  history {hist} -> next {tuple(r['next'])}: "
            f"P(full) = {r['p_given_history']:.6f}, "
            f"P(last only) = {r['p_given_last']:.6f}, "
            f"diff = {r['difference']:+.6f}"
        )

    if cfg.out:
        fileio.write_report(report, cfg.out)
    return 0


def cmd_simulate(cfg: RunConfig) -> int:
    model = fileio.read_model(cfg.model)
    if cfg.T is None:
        raise ValueError("simulate requires --T")
    if cfg.init == "stationary":
        chain = build_master_chain(model, state_cap=cfg.state_cap)
        init = stationary_distribution(chain).pi
    else:
        init = _parse_init(cfg.init, None, model.m)
    traj = sample_trajectory(model, cfg.T, init, cfg.seed)
    fileio.write_trajectory(traj, cfg.out)
    print(f"wrote {traj.T} steps ({traj.n} sites, seed {traj.seed}) to {cfg.out}")
    if cfg.observed is not None:
        obs = project_observations(traj, cfg.observed)
        obs_path = cfg.obs_out or cfg.out.replace(".json", "") + ".obs.json"
        fileio.write_observations(obs, obs_path)
        print(f"wrote observations of sites "
              f"{[i + 1 for i in obs.observed]} to {obs_path}")
    return 0


def cmd_estimate(cfg: RunConfig) -> int:
    if cfg.estimator is None:
        raise ValueError("estimate requires --estimator")
    needs_structure = cfg.estimator in ("recover", "em-full", "baum-welch")
    if needs_structure and not cfg.structure:
        raise ValueError(f"estimator {cfg.estimator} requires --structure")
    structure = fileio.read_structure(cfg.structure) if needs_structure else None

    if cfg.estimator == "counting":
        traj = fileio.read_trajectory(cfg.data)
        est = estimate_G_counting(traj)
        report = {
            "estimator": "counting",
            "G_hat": est.G_hat,
            "counts": est.counts,
            "visited": est.visited,
            "recurrence_ok": est.recurrence_ok,
            "recurrence_basis": est.recurrence_basis,
        }
        print(f"counting estimate over {int(est.visited.sum())}/"
              f"{est.counts.shape[0]} visited states; "
              f"recurrence_ok = {est.recurrence_ok} ({est.recurrence_basis})")
        if not est.recurrence_ok:
            print("  warning: chain not seen to be recurrent; unvisited rows "
                  "are NaN and cannot be recovered by longer sampling")
    elif cfg.estimator == "recover":
        chain = fileio.read_chain(cfg.data)
        fit = FitConfig(
            restarts=cfg.restarts or 16,
            max_iters=cfg.max_iters or 2000,
            tol=cfg.tol if cfg.tol is not None else 1e-14,
            seed=cfg.seed,
        )
        est = recover_influence_params(chain, structure, fit)
        report = _param_report("recover", est)
        print(f"recover: objective {est.objective:.3e} after {est.iterations} "
              f"iterations (converged = {est.converged})")
        print(f"  restart objective spread: "
              f"{min(est.restart_objectives):.3e} .. {max(est.restart_objectives):.3e}")
        print(f"  optimum dispersion: {est.optimum_dispersion:.3e}"
              + ("  (parameters not identified by this matrix)"
                 if est.optimum_dispersion > 1e-3 else ""))
    elif cfg.estimator == "em-full":
        traj = fileio.read_trajectory(cfg.data)
        est = direct_em_full_obs(traj, structure, _em_config(cfg))
        report = _param_report("em-full", est)
        report["log_likelihood_trace"] = list(est.log_likelihood_trace)
        print(f"direct EM: final log-likelihood {-est.objective:.6f} after "
              f"{est.iterations} iterations (converged = {est.converged})")
    elif cfg.estimator == "baum-welch":
        obs = fileio.read_observations(cfg.data)
        est = baum_welch_poim(obs, structure, _em_config(cfg))
        report = {
            "estimator": "baum-welch",
            "G_hat": est.G_hat,
            "init_hat": est.init_hat,
            "observed": [i + 1 for i in est.observed],
            "log_likelihood_trace": list(est.log_likelihood_trace),
            "restart_final_lls": list(est.restart_final_lls),
            "restart_iterations": list(est.restart_iterations),
            "best_restart": est.best_restart,
            "converged": est.converged,
        }
        print(f"baum-welch: best restart {est.best_restart} of "
              f"{len(est.restart_final_lls)}, final log-likelihood "
              f"{est.log_likelihood_trace[-1]:.6f}")
    else:
        raise ValueError(f"unknown estimator {cfg.estimator!r}")

    if cfg.out:
        fileio.write_report(report, cfg.out)
    return 0


def _em_config(cfg: RunConfig) -> EMConfig:
    return EMConfig(
        restarts=cfg.restarts or 10,
        max_iters=cfg.max_iters or 500,
        tol=cfg.tol if cfg.tol is not None else 1e-9,
        seed=cfg.seed,
    )


def _param_report(estimator: str, est) -> dict:
    report = {
        "estimator": estimator,
        "D_hat": est.D_hat,
        "objective": est.objective,
        "iterations": est.iterations,
        "converged": est.converged,
        "restart_objectives": list(est.restart_objectives),
        "optimum_dispersion": est.optimum_dispersion,
    }
    if est.model.A_shared is not None:
        report["A_shared_hat"] = est.model.A_shared
    else:
        report["A_pairs_hat"] = [
            {"from": j + 1, "to": i + 1, "matrix": mat}
            for (j, i), mat in sorted(est.model.A_pairs.items())
        ]
    return report


def cmd_reproduce(cfg: RunConfig) -> int:
    expected = None
    if cfg.expected:
        expected = fileio._load(cfg.expected)
    checks = reference.run_reference_checks(expected)
    for c in checks:
        status = "PASS" if c["pass"] else "FAIL"
        if "max_abs_deviation" in c:
            detail = f"max deviation {c['max_abs_deviation']:.3e} (tol {c['tol']:g})"
        else:
            detail = f"computed {c['computed']}"
        print(f"[{status}] {c['check']}: {detail}")
    if cfg.out:
        fileio.write_report({"checks": checks}, cfg.out)
    failed = [c["check"] for c in checks if not c["pass"]]
    if failed:
        print(f"{len(failed)} check(s) failed: {', '.join(failed)}")
        return 1
    print(f"all {len(checks)} reference checks pass")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="influencemodel",
        description="Build, analyze, simulate, and estimate influence models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="model file -> master chain + classes")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="master chain output file")
    p.add_argument("--report", help="class decomposition report file")

    p = sub.add_parser("analyze", help="observed-process analysis of a chain")
    p.add_argument("--chain", required=True)
    p.add_argument("--observed", required=True,
                   help="comma-separated 1-based site indices")
    p.add_argument("--init", default="stationary")
    p.add_argument("--horizon", type=int, default=2)
    p.add_argument("--out", help="analysis report file")

    p = sub.add_parser("simulate", help="sample a trajectory")
    p.add_argument("--model", required=True)
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--init", default="stationary")
    p.add_argument("--observed", help="also write these sites' observations")
    p.add_argument("--out", required=True, help="trajectory output file")
    p.add_argument("--obs-out", dest="obs_out", help="observations output file")

    p = sub.add_parser("estimate", help="estimate parameters from data")
    p.add_argument("--data", required=True,
                   help="trajectory (counting/em-full), observations "
                        "(baum-welch), or chain (recover) file")
    p.add_argument("--structure", help="model structure file")
    p.add_argument("--estimator", required=True,
                   choices=["counting", "recover", "em-full", "baum-welch"])
    p.add_argument("--restarts", type=int)
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="estimate report file")

    p = sub.add_parser("reproduce", help="re-derive the bundled reference results")
    p.add_argument("--out", help="check report file")
    p.add_argument("--expected", help="override expected values (JSON)")
    return parser


COMMANDS = {
    "build": cmd_build,
    "analyze": cmd_analyze,
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "reproduce": cmd_reproduce,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = RunConfig.from_args(args)
        return COMMANDS[args.command](cfg)
    except (fileio.FileFormatError, InvalidModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (AmbiguousStationaryError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (CapExceededError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
