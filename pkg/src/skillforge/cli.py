"""Command-line front door.

Exit codes: 0 success, 1 domain failure (a skill or program did not succeed,
or diagnosis stayed inconclusive), 2 usage errors.
"""

import argparse
import json
import os
import sys

import numpy as np

from .catalog import build_engine, diagnosis_candidates
from .config import load_config
from .diagnosis import diagnose, train_models
from .errors import SkillForgeError
from .playing import PlayConfig, ensure_perception, play, serialize_ecm
from .report import (
    save_blame_report, save_ecm_heatmap, save_session_log, save_success_curve,
)
from .world import FaultSpec


def _engine_from(args):
    config = load_config(getattr(args, "config", None))
    if getattr(args, "store", None):
        from dataclasses import replace

        config = replace(config, store_path=args.store)
    return build_engine(config)


def cmd_run(args):
    engine = _engine_from(args)
    with open(args.program) as fh:
        doc = json.load(fh)
    world = engine.create_world(args.scenario, args.seed)
    final, record = engine.interpret_program(
        doc, world, np.random.default_rng(args.seed), program_id=os.path.basename(args.program))
    print(f"execution record {record.id}: {'success' if record.success else 'failure'}")
    if not record.success and record.failure_reason:
        print(f"  reason: {record.failure_reason}")
    if args.predicate:
        print(f"  predicate {args.predicate}: "
              f"{engine.evaluate_success(args.predicate, final)}")
    return 0 if record.success else 1


def cmd_play(args):
    engine = _engine_from(args)
    skill = engine.skill(args.skill)
    ensure_perception(engine, skill, repetitions=args.repetitions)
    config = PlayConfig(episodes=args.episodes, seed=args.seed)
    ecm, curve = play(engine, skill, config)
    trailing = [o for _, o, _ in curve[-100:]]
    rate = sum(trailing) / len(trailing) if trailing else 0.0
    print(f"played {args.episodes} episodes of {args.skill} (seed {args.seed})")
    print(f"trailing-{len(trailing)} success rate: {rate:.3f}; promoted: {skill.promoted}")
    if args.out:
        csv_path, png_path = save_success_curve(curve, args.out,
                                                title=f"{args.skill} playing")
        print(f"curve written to {csv_path} and {png_path}")
    return 0


def cmd_diagnose(args):
    engine = _engine_from(args)
    candidates = diagnosis_candidates(engine)
    models = train_models(engine, candidates, runs=args.training_runs,
                          rng=np.random.default_rng(args.seed + 1))
    if args.inject:
        engine.inject_fault(FaultSpec(args.inject, args.mode, args.trigger_probability,
                                      sensor_bias=args.sensor_bias))
    try:
        blame, session = diagnose(engine, candidates, models, args.budget,
                                  np.random.default_rng(args.seed))
    finally:
        engine.clear_faults()
    top_id, top_p = blame.top(1)[0]
    print(f"executed {session.executed} tests; blame argmax: {top_id} (p={top_p:.3f})")
    for hypothesis, p in blame.top(5):
        print(f"  {hypothesis:24s} {p:.4f}")
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        blame_csv, blame_png = save_blame_report(
            blame, os.path.join(args.out_dir, "blame.csv"))
        log_csv = save_session_log(session, os.path.join(args.out_dir, "session.csv"))
        print(f"report written to {blame_csv}, {blame_png} and {log_csv}")
    if args.inject:
        return 0 if top_id == args.inject else 1
    return 0


def cmd_probe_doa(args):
    engine = _engine_from(args)
    from .playing import situations_for_scenario

    setup = engine.skill_setups.get(args.skill)
    scenario = args.scenario or (setup.scenario if setup else None)
    if scenario is None:
        print(f"skill {args.skill!r} has no probe scenario; pass --scenario", file=sys.stderr)
        return 2
    if args.trained:
        ensure_perception(engine, args.skill)
        play(engine, engine.skill(args.skill), PlayConfig(episodes=args.episodes,
                                                          seed=args.seed))
    situations = situations_for_scenario(engine, scenario)
    record = engine.probe_doa(args.skill, situations, seed=args.seed)
    successes = 0
    for descriptor, success in record.probed_situations:
        overrides = descriptor.get("overrides", {})
        print(f"  {json.dumps(overrides):40s} -> {'success' if success else 'failure'}")
        successes += success
    print(f"domain of applicability: {successes}/{len(record.probed_situations)} situations")
    return 0


def cmd_serve(args):
    from .service import serve

    config = load_config(args.config)
    if args.port:
        from dataclasses import replace

        config = replace(config, port=args.port)
    serve(config)
    return 0


def cmd_export(args):
    engine = _engine_from(args)
    skill = engine.skill(args.skill)
    if args.what == "ecm":
        if skill.ecm is None:
            ensure_perception(engine, skill)
            play(engine, skill, PlayConfig(episodes=args.episodes, seed=args.seed))
        doc = serialize_ecm(skill.ecm)
        json_path = args.out
        with open(json_path, "w") as fh:
            json.dump(doc, fh, indent=2)
        base, _ = os.path.splitext(args.out)
        csv_path, png_path = save_ecm_heatmap(skill.ecm, base + ".csv",
                                              title=f"{args.skill} ecm")
        print(f"ecm written to {json_path}, {csv_path} and {png_path}")
        return 0
    if args.what == "curve":
        ensure_perception(engine, skill)
        _, curve = play(engine, skill, PlayConfig(episodes=args.episodes, seed=args.seed))
        csv_path, png_path = save_success_curve(curve, args.out, title=f"{args.skill}")
        print(f"curve written to {csv_path} and {png_path}")
        return 0
    print(f"unknown export {args.what!r}", file=sys.stderr)
    return 2


def build_parser():
    parser = argparse.ArgumentParser(
        prog="skillforge",
        description="Tabletop robot-skill workbench: run programs, play skills,"
                    " and localize injected faults.")
    parser.add_argument("--config", help="path to a YAML config file"
                                         " (or set SKILLFORGE_CONFIG)")
    parser.add_argument("--store", help="override the experience store path")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a program AST against a scenario")
    p.add_argument("--program", required=True, help="path to an .ast.json document")
    p.add_argument("--scenario", default="flat")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--predicate", help="also report this success predicate")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("play", help="train a skill by autonomous playing")
    p.add_argument("--skill", required=True)
    p.add_argument("--episodes", type=int, default=500)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--repetitions", type=int, default=10,
                   help="haptic database repetitions per situation")
    p.add_argument("--out", help="success curve CSV path (PNG written alongside)")
    p.set_defaults(func=cmd_play)

    p = sub.add_parser("diagnose", help="localize an (optionally injected) fault")
    p.add_argument("--budget", type=int, default=15)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inject", help="function id to break before diagnosing")
    p.add_argument("--mode", default="fail_hard",
                   choices=["fail_hard", "degrade_sensors"])
    p.add_argument("--trigger-probability", type=float, default=1.0)
    p.add_argument("--sensor-bias", type=float, default=5.0)
    p.add_argument("--training-runs", type=int, default=15)
    p.add_argument("--out-dir", help="write blame.csv/.png and session.csv here")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("probe-doa", help="probe a skill's domain of applicability")
    p.add_argument("--skill", required=True)
    p.add_argument("--scenario")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trained", action="store_true",
                   help="train by playing before probing")
    p.add_argument("--episodes", type=int, default=500)
    p.set_defaults(func=cmd_probe_doa)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--port", type=int)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("export", help="export a trained ECM or success curve")
    p.add_argument("--skill", required=True)
    p.add_argument("--what", choices=["ecm", "curve"], default="ecm")
    p.add_argument("--out", required=True)
    p.add_argument("--episodes", type=int, default=500)
    p.add_argument("--seed", type=int, default=42)
    p.set_defaults(func=cmd_export)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except SkillForgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
