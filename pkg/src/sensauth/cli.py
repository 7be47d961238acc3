"""Command-line interface.

Subcommands: simulate, train, identify, evaluate, heatmap. All outputs are
deterministic for fixed seeds and configs. Exit codes: 0 on success, 1 for
validation problems (bad files, bad arguments), 2 for runtime failures.
"""
from __future__ import annotations

import argparse
import glob
import json
import os
import sys

from . import evaluate as ev
from . import svm
from .config import load_config
from .dsp import DspError
from .features import Scenario
from .simulate import gen_session, load_script
from .trace import Gesture, TraceError, parse_trace, write_trace
from .svm import TrainingError


def _cmd_simulate(args) -> int:
    script, profiles = load_script(args.script)
    if args.seed is not None:
        script.seed = args.seed
    trace = gen_session(script, profiles)
    write_trace(trace, args.out)
    print(f"wrote {args.out}: {len(trace.touches)} touches, "
          f"{len(trace.imu)} imu samples, {len(trace.labels)} segments")
    return 0


def _cmd_train(args) -> int:
    cfg = load_config(args.config)
    trace = parse_trace(args.trace)
    streams = ev.compute_streams(trace, cfg)
    actions = ev.extract_actions(trace, streams, cfg)
    owner = args.owner or (trace.labels[0].user if trace.labels else None)
    if owner is None:
        print("train: trace has no labels; pass --owner", file=sys.stderr)
        return 1
    banks = {}
    for scenario in (Scenario.STATIC, Scenario.WALKING):
        obs = [a.observation for a in actions
               if a.truth_user == owner and a.scenario is scenario
               and a.observation is not None]
        if len(obs) >= cfg.svm.per_gesture_min:
            banks[scenario] = ev.train_bank(scenario, obs, cfg)
    if not banks:
        print(f"train: no usable observations for owner {owner!r}", file=sys.stderr)
        return 1
    with open(args.out, "w") as fh:
        fh.write(ev.banks_to_json(banks))
        fh.write("\n")
    sizes = {sc.value: len(b.pooled.support_vectors) for sc, b in banks.items()}
    print(f"wrote {args.out}: banks={sizes}")
    return 0


def _cmd_identify(args) -> int:
    cfg = load_config(args.config)
    cfg.scheduler.p_theta = args.ptheta
    cfg.scheduler.p_phi = args.pphi
    trace = parse_trace(args.trace)
    with open(args.model) as fh:
        banks = ev.banks_from_json(fh.read())
    streams = ev.compute_streams(trace, cfg)
    actions = ev.extract_actions(trace, streams, cfg)
    owner = trace.labels[0].user if trace.labels else None
    warm = ev.WarmupResult(
        banks=banks,
        buffers={sc: svm.TrainingBuffers(owner_cap=cfg.svm.owner_buffer_cap,
                                         guest_cap=cfg.svm.guest_buffer_cap,
                                         min_confidence=cfg.svm.buffer_min_confidence)
                 for sc in banks},
        retrain={sc: svm.RetrainState(two_class=banks[sc].two_class) for sc in banks},
        first_scored_index={sc: 0 for sc in banks},
        owner=owner or "")
    decisions, conclusions, events = ev.online_pass(actions, warm, cfg)
    base = os.path.splitext(args.trace)[0]
    dec_path = args.decisions or base + ".decisions.jsonl"
    evt_path = args.events or base + ".events.jsonl"
    ev._write_jsonl(dec_path, decisions)
    ev._write_jsonl(evt_path, events)
    n_owner = sum(1 for c in conclusions if c["is_owner"])
    off = sum(1 for d in decisions if not d["sensing"] and not d["observed"])
    print(f"{len(decisions)} actions, {len(conclusions)} conclusions "
          f"({n_owner} owner), {len(events)} protection events, "
          f"sensors off for {off} actions")
    print(f"wrote {dec_path} and {evt_path}")
    return 0


def _cmd_evaluate(args) -> int:
    cfg = load_config(args.config)
    paths = sorted(glob.glob(os.path.join(args.traces, "*.jsonl")))
    if not paths:
        print(f"evaluate: no *.jsonl traces under {args.traces}", file=sys.stderr)
        return 1
    report = ev.evaluate_traces(paths, cfg, out_dir=args.out_dir, report_path=args.report)
    totals = report.get("totals", {})
    print(f"evaluated {len(paths)} traces: {totals.get('scored_actions', 0)} scored actions")
    if "online" in report:
        online = report["online"]
        acc = online.get("conclusion_accuracy")
        print(f"online: {online['conclusions']} conclusions, "
              f"accuracy={acc if acc is None else round(acc, 4)}, "
              f"sensors_off={online['sensors_off_fraction']:.3f}")
    print(f"wrote {args.report}")
    return 0


def _cmd_heatmap(args) -> int:
    cfg = load_config(args.config)
    trace = parse_trace(args.trace)
    from .dsp import tap_reaction
    from .features import classify
    taps = []
    sx = ev.SCREEN_W / trace.meta.screen_w
    sy = ev.SCREEN_H / trace.meta.screen_h
    for e in trace.touches:
        if classify(e, cfg.dsp) is not Gesture.TAP:
            continue
        try:
            r = tap_reaction(trace.imu, e, cfg.dsp)
        except DspError:
            continue
        cx, cy = e.centroid()
        taps.append((cx * sx, cy * sy, r.vibration, r.rotation))
    hm = ev.reaction_heatmap(taps, cfg.eval.grid_rows, cfg.eval.grid_cols)
    with open(args.out, "w") as fh:
        fh.write(ev.heatmap_csv(hm))
    print(f"wrote {args.out}: {int(hm.count.sum())} taps over "
          f"{hm.rows}x{hm.cols} cells")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sensauth",
                                description="touch/motion behavioral identification harness")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="render a script file into a JSONL trace")
    s.add_argument("--script", required=True)
    s.add_argument("--seed", type=int, default=None, help="override the script seed")
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_simulate)

    s = sub.add_parser("train", help="train owner models from a labeled trace")
    s.add_argument("--trace", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--owner", default=None, help="owner user id (default: first label)")
    s.add_argument("--config", default=None)
    s.set_defaults(func=_cmd_train)

    s = sub.add_parser("identify", help="stream a trace through trained models")
    s.add_argument("--trace", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--ptheta", type=float, default=0.98)
    s.add_argument("--pphi", type=float, default=0.8)
    s.add_argument("--decisions", default=None, help="decision log path")
    s.add_argument("--events", default=None, help="protection event log path")
    s.add_argument("--config", default=None)
    s.set_defaults(func=_cmd_identify)

    s = sub.add_parser("evaluate", help="run the full metric suite over traces")
    s.add_argument("--traces", required=True, help="directory of *.jsonl traces")
    s.add_argument("--config", default=None)
    s.add_argument("--report", required=True)
    s.add_argument("--out-dir", default=None, help="where to write logs and curves")
    s.set_defaults(func=_cmd_evaluate)

    s = sub.add_parser("heatmap", help="tap reaction heatmap CSV from a trace")
    s.add_argument("--trace", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--config", default=None)
    s.set_defaults(func=_cmd_heatmap)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (TraceError, TrainingError, ValueError, KeyError, FileNotFoundError,
            json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - last-resort runtime mapping
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
