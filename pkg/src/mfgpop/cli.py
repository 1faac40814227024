"""Command-line entry point: ``mfgpop <subcommand> [options]``.

A flat JSON file passed with ``--config`` supplies defaults for any option
(keys are the option names with dashes replaced by underscores); flags given on
the command line take precedence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import actorcritic, baselines, critic, datagen, irl, oracle, rewardnet
from .core import SimplexError, Trajectory, jsd, load_dataset, save_dataset
from .policy import DEFAULT_ALPHA_SCALE, DEFAULT_THETA_INIT, PolicyError, PolicyParams

log = logging.getLogger("mfgpop")

# errors that are reported as a message and exit code 1 rather than a traceback
HANDLED = (
    SimplexError, PolicyError, irl.IRLError, oracle.OracleError, actorcritic.TrainingDiverged,
    baselines.InsufficientData, rewardnet.ShapeError, OSError, json.JSONDecodeError, KeyError, ValueError,
)


# ---------------------------------------------------------------- evaluation


def evaluate(predicted, test: list[Trajectory], predicted_actions=None) -> dict:
    """Prediction metrics against held-out days.

    ``predicted`` holds one ``(N, d)`` state array per test day, in the same
    order.  Per day the final-state JSD and the mean JSD over all ``N`` hours
    are computed and then averaged over days.  When ``predicted_actions`` is
    given the element-wise mean action matrices and their absolute difference
    are included.
    """
    if len(predicted) != len(test):
        raise ValueError(f"{len(predicted)} predicted days for {len(test)} test days")
    final, hourly = [], []
    for pred, truth in zip(predicted, test):
        pred = np.asarray(pred, dtype=float)
        if pred.shape != truth.states.shape:
            raise ValueError(f"day {truth.day_id}: predicted shape {pred.shape}, expected {truth.states.shape}")
        per_hour = [jsd(a, b) for a, b in zip(pred, truth.states)]
        final.append(per_hour[-1])
        hourly.append(float(np.mean(per_hour)))
    report = {
        "days": [int(t.day_id) for t in test],
        "final_jsd_per_day": final,
        "hourly_jsd_per_day": hourly,
        "final_jsd": float(np.mean(final)),
        "hourly_jsd": float(np.mean(hourly)),
    }
    if predicted_actions is not None:
        demo_mean = np.mean(np.concatenate([t.actions for t in test]), axis=0)
        gen_mean = np.mean(np.concatenate([np.asarray(a) for a in predicted_actions]), axis=0)
        report["mean_demo_action"] = demo_mean.tolist()
        report["mean_generated_action"] = gen_mean.tolist()
        report["action_abs_diff"] = np.abs(demo_mean - gen_mean).tolist()
    return report


def format_report(report: dict, label: str = "model") -> str:
    lines = [f"{label}: final JSD {report['final_jsd']:.4e}, mean hourly JSD {report['hourly_jsd']:.4e}"]
    for day, f, h in zip(report["days"], report["final_jsd_per_day"], report["hourly_jsd_per_day"]):
        lines.append(f"  day {day:3d}: final {f:.4e}  hourly {h:.4e}")
    if "action_abs_diff" in report:
        lines.append(f"  max |mean demo action - mean generated action| = {np.max(report['action_abs_diff']):.4e}")
    return "\n".join(lines)


def report_records(report: dict, label: str):
    """Line-delimited records: one per day, one summary, and (if present) one heat map."""
    for day, f, h in zip(report["days"], report["final_jsd_per_day"], report["hourly_jsd_per_day"]):
        yield {"kind": "day", "model": label, "day": day, "final_jsd": f, "hourly_jsd": h}
    yield {"kind": "summary", "model": label, "final_jsd": report["final_jsd"], "hourly_jsd": report["hourly_jsd"]}
    if "action_abs_diff" in report:
        yield {
            "kind": "action_heatmap",
            "model": label,
            "mean_demo_action": report["mean_demo_action"],
            "mean_generated_action": report["mean_generated_action"],
            "abs_diff": report["action_abs_diff"],
        }


def _emit_report(report: dict, label: str, out) -> None:
    print(format_report(report, label))
    if out:
        _write_jsonl(out, report_records(report, label))


# ---------------------------------------------------------------- file helpers


def _write_jsonl(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def save_predictions(path, days, states, actions=None) -> None:
    recs = []
    for k, (day, s) in enumerate(zip(days, states)):
        rec = {"day": int(day), "pi": np.asarray(s).tolist()}
        if actions is not None:
            rec["P"] = np.asarray(actions[k]).tolist()
        recs.append(rec)
    _write_jsonl(path, recs)


def load_predictions(path):
    """Returns ``(days, states, actions or None)``; actions only if every record has them."""
    days, states, actions = [], [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                days.append(int(rec["day"]))
                states.append(np.asarray(rec["pi"], dtype=float))
                actions.append(np.asarray(rec["P"], dtype=float) if "P" in rec else None)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed prediction record ({exc})") from None
    if any(a is None for a in actions):
        actions = None
    return days, states, actions


def save_policy(path, params: PolicyParams, extra: dict | None = None) -> None:
    payload = {"theta": params.theta, "c": params.c}
    payload.update(extra or {})
    Path(path).write_text(json.dumps(payload))


def load_policy(path) -> PolicyParams:
    payload = json.loads(Path(path).read_text())
    return PolicyParams(float(payload["theta"]), float(payload["c"]))


def _align(test: list[Trajectory], days, states):
    by_day = dict(zip(days, states))
    missing = [t.day_id for t in test if t.day_id not in by_day]
    if missing:
        raise ValueError(f"no prediction for test days {missing}")
    return [by_day[t.day_id] for t in test]


# ---------------------------------------------------------------- subcommands


def cmd_gen_data(args) -> int:
    train, test = datagen.generate(
        d=args.d, n_states=args.n_states, m_train=args.m_train, m_test=args.m_test,
        theta_star=args.theta_star, c=args.alpha_scale, seed=args.seed,
    )
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    save_dataset(train, out / "train.jsonl")
    save_dataset(test, out / "test.jsonl")
    print(f"wrote {len(train)} training and {len(test)} test days to {out}")
    return 0


def cmd_oracle_check(args) -> int:
    rng = np.random.default_rng(args.seed)
    pop = datagen.synth_reward("popularity")
    results = []

    grid = oracle.SimplexGrid(3, 4)
    bad = 0
    for _ in range(args.instances):
        pi = rng.dirichlet(np.ones(3))
        V = rng.normal(size=3)
        lhs, rhs = oracle.interchange_identity_check(pi, V, pop, grid)
        bad += lhs != rhs
    results.append({"property": "interchange_identity", "instances": args.instances, "violations": int(bad),
                    "pass": bad == 0})

    grid2 = oracle.SimplexGrid(2, 10)
    pi0 = np.array([0.2, 0.8])
    value, acts = oracle.brute_force_mdp(pi0, pop, 2, grid2)
    seq = oracle.induced_states(pi0, acts)
    V = oracle.backward_hjb(seq, pop, grid2)
    gap = abs(value - float(pi0 @ V[0]))
    nash = oracle.verify_nash_maximizer(acts[0], pi0, V[1], pop, grid2)
    results.append({"property": "mfg_mdp_equivalence", "value": value, "gap": gap, "pass": gap <= 1e-10})
    results.append({"property": "nash_maximizer", "pass": bool(nash)})

    kappa = 0.37
    shifted = lambda pi, i, row: pop(pi, i, row) + kappa  # noqa: E731
    seq3 = [rng.dirichlet(np.ones(3)) for _ in range(3)]
    V0 = oracle.backward_hjb(seq3, pop, grid)
    V1 = oracle.backward_hjb(seq3, shifted, grid)
    expect = np.array([(3 - n) * kappa for n in range(3)])[:, None]
    err = float(np.max(np.abs(V1 - V0 - expect)))
    results.append({"property": "shift_covariance", "max_error": err, "pass": err <= 1e-12})

    for rec in results:
        print(json.dumps(rec))
    ok = all(r["pass"] for r in results)
    if args.out:
        _write_jsonl(args.out, results)
    return 0 if ok else 1


def _reward_fn(source: str, d: int):
    if source == "synthetic":
        return datagen.as_step_reward(datagen.synth_reward("popularity"))
    if source.startswith("learned:"):
        W = rewardnet.load_params(source.split(":", 1)[1])
        if rewardnet.infer_dim(W) != d:
            raise rewardnet.ShapeError(f"reward network is for d={rewardnet.infer_dim(W)}, data has d={d}")
        return lambda pi, P: rewardnet.reward_scalar(pi, P, W)
    raise ValueError(f"--reward must be 'synthetic' or 'learned:<path>', got {source!r}")


def cmd_solve(args) -> int:
    rng = np.random.default_rng(args.seed)
    if args.data:
        days = load_dataset(args.data)
        starts = [t.states[0] for t in days]
        d = days[0].d
        n_states = args.n_states or days[0].n_states
    else:
        d = args.d
        starts = list(datagen.InitialSampler(d)(rng, args.m_train))
        n_states = args.n_states or 2
    reward_fn = _reward_fn(args.reward, d)
    params = PolicyParams(args.theta_init, args.alpha_scale)
    w = critic.init_weights(d)
    if args.critic_warmup > 0:
        w = actorcritic.initial_value_weights(params, starts, n_states, reward_fn, rng, args.critic_warmup)
    params, w, returns = actorcritic.train(
        params, w, starts, n_states, reward_fn, args.episodes, rng, actorcritic.Schedules(args.beta0, args.xi0)
    )
    tail = float(returns[-min(200, len(returns)):].mean())
    summary = {"theta": params.theta, "c": params.c, "episodes": args.episodes, "mean_return_tail": tail}
    print(json.dumps(summary))
    if args.out:
        save_policy(args.out, params, {"value_weights": w.tolist()})
    return 0


def cmd_train_irl(args) -> int:
    demos = load_dataset(args.demo)
    if not demos:
        raise ValueError(f"{args.demo} holds no trajectories")
    cfg = irl.GCLConfig(
        outer_iters=args.outer_iters, samples_per_iter=args.samples_per_iter, weight_mode=args.weight_mode,
        ac_episodes=args.episodes, beta0=args.beta0, xi0=args.xi0, theta_init=args.theta_init,
        alpha_scale=args.alpha_scale, cold_start=args.cold_start, max_inner=args.max_inner, seed=args.seed,
    )
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    diag_path = out / "diagnostics.jsonl"
    diag_path.write_text("")

    def on_iter(rec):
        line = json.dumps(rec)
        print(line, flush=True)
        with open(diag_path, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")

    try:
        W, params, _ = irl.gcl_train(demos, cfg, callback=on_iter)
    except irl.GCLDiverged as exc:
        rewardnet.save_params(exc.last_good_reward, out / "reward.json")
        save_policy(out / "policy.json", exc.last_good_policy)
        raise
    rewardnet.save_params(W, out / "reward.json")
    save_policy(out / "policy.json", params)
    (out / "config.json").write_text(json.dumps(irl.config_dict(cfg)))
    print(f"saved reward network and policy (theta={params.theta:.4f}) to {out}")
    return 0


def cmd_predict(args) -> int:
    params = load_policy(args.policy)
    test = load_dataset(args.data)
    rng = np.random.default_rng(args.seed)
    states, actions = [], []
    for t in test:
        traj, _ = actorcritic.rollout(params, t.states[0], t.n_states, None, rng, t.day_id)
        states.append(traj.states)
        actions.append(traj.actions)
    if not args.out:
        raise ValueError("predict needs --out <file>")
    save_predictions(args.out, [t.day_id for t in test], states, actions)
    print(f"wrote {len(test)} predicted days to {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    test = load_dataset(args.data)
    days, states, actions = load_predictions(args.pred)
    pred = _align(test, days, states)
    acts = _align(test, days, actions) if actions is not None else None
    _emit_report(evaluate(pred, test, acts), args.label, args.out)
    return 0


def cmd_baseline(args) -> int:
    train = load_dataset(args.train)
    test = load_dataset(args.data)
    if args.model == "var":
        n = train[0].n_states
        order = args.order or baselines.var_order_select(
            train, range(1, n - 1), validation_size=args.validation_size, rounds=args.rounds, seed=args.seed
        )
        model = baselines.var_fit(train, order)
        pred = [baselines.var_forecast_day(model, t.states) for t in test]
        label = f"VAR({order})"
    else:
        model, hist = baselines.rnn_fit(train, epochs=args.epochs, lr=args.lr, seed=args.seed)
        pred = [baselines.rnn_forecast_day(model, t.states) for t in test]
        label = f"RNN (final training loss {hist[-1]:.3e})"
    _emit_report(evaluate(pred, test), label, args.out)
    if args.pred_out:
        save_predictions(args.pred_out, [t.day_id for t in test], pred)
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat JSON file of option defaults")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="output file or directory (per subcommand)")
    common.add_argument("-v", "--verbose", action="store_true")

    policy = argparse.ArgumentParser(add_help=False)
    policy.add_argument("--theta-init", type=float, default=DEFAULT_THETA_INIT)
    policy.add_argument("--alpha-scale", type=float, default=DEFAULT_ALPHA_SCALE)
    policy.add_argument("--episodes", type=int, default=4000)
    policy.add_argument("--beta0", type=float, default=0.1)
    policy.add_argument("--xi0", type=float, default=0.1)

    parser = argparse.ArgumentParser(prog="mfgpop", description="Mean-field-game population modelling: data, solvers, inverse RL and baselines.")
    sub = parser.add_subparsers(dest="command", metavar="<command>")
    sub.required = True

    p = sub.add_parser("gen-data", parents=[common], help="write a synthetic train/test dataset")
    p.add_argument("--d", type=int, default=15)
    p.add_argument("--n-states", type=int, default=16)
    p.add_argument("--m-train", type=int, default=21)
    p.add_argument("--m-test", type=int, default=6)
    p.add_argument("--theta-star", type=float, default=8.64)
    p.add_argument("--alpha-scale", type=float, default=DEFAULT_ALPHA_SCALE)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("oracle-check", parents=[common], help="run the brute-force oracle property checks")
    p.add_argument("--instances", type=int, default=100)
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("solve", parents=[common, policy], help="actor-critic against a fixed reward")
    p.add_argument("--reward", default="synthetic", help="'synthetic' or 'learned:<reward.json>'")
    p.add_argument("--data", help="trajectory file whose initial states seed the episodes")
    p.add_argument("--d", type=int, default=3)
    p.add_argument("--m-train", type=int, default=21)
    p.add_argument("--n-states", type=int, default=None)
    p.add_argument("--critic-warmup", type=int, default=0, help="Monte-Carlo rollouts per start for the critic fit")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("train-irl", parents=[common, policy], help="guided cost learning on demonstrations")
    p.add_argument("--demo", required=True)
    p.add_argument("--outer-iters", type=int, default=5)
    p.add_argument("--samples-per-iter", type=int, default=10)
    p.add_argument("--max-inner", type=int, default=500)
    p.add_argument("--weight-mode", choices=irl.WEIGHT_MODES, default="unity")
    p.add_argument("--cold-start", action="store_true")
    p.set_defaults(func=cmd_train_irl)

    p = sub.add_parser("predict", parents=[common], help="roll out a learned policy from each test day's start")
    p.add_argument("--policy", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", parents=[common], help="JSD metrics of predictions against test days")
    p.add_argument("--pred", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--label", default="MFG")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("baseline", parents=[common], help="fit and evaluate a VAR or RNN forecaster")
    p.add_argument("model", choices=("var", "rnn"))
    p.add_argument("--train", required=True)
    p.add_argument("--data", required=True, help="test trajectory file")
    p.add_argument("--order", type=int, default=None, help="VAR order (default: random sub-sampling selection)")
    p.add_argument("--validation-size", type=int, default=5)
    p.add_argument("--rounds", type=int, default=10)
    p.add_argument("--epochs", type=int, default=2000)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--pred-out", help="also write the forecasts to this file")
    p.set_defaults(func=cmd_baseline)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    cfg = json.loads(Path(known.config).read_text())
    if not isinstance(cfg, dict) or any(isinstance(v, (dict, list)) for v in cfg.values()):
        raise ValueError(f"{known.config}: config must be a flat JSON object")
    cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    for action in parser._subparsers._group_actions:
        for sp in action.choices.values():
            sp.set_defaults(**cfg)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
    except HANDLED as exc:
        print(f"mfgpop: error: {exc}", file=sys.stderr)
        return 1
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except HANDLED as exc:
        print(f"mfgpop {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
