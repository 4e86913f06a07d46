"""Command-line interface.

Exit codes: 0 success, 2 validation error (scenario/model/log/arguments),
3 runtime error.
"""

import argparse
import sys

from .errors import ActaError, CorruptLog, ModelMissing, ScenarioInvalid

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="acta",
        description="Closed-loop nudge + neurofeedback training simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the open-loop (phase 1) sessions")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seed-set", default="default")
    p.add_argument("--out", required=True, help="session log path; dataset goes to <out>.dataset")

    p = sub.add_parser("train", help="train the attention classifier on a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=400)
    p.add_argument("--step-size", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("eval", help="evaluate a model against a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)

    p = sub.add_parser("phase2", help="run the closed-loop (phase 2) sessions")
    p.add_argument("--scenario", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--seed-set", default="default")
    p.add_argument("--out", required=True)
    p.add_argument("--dataset", help="seed the semi-supervised store with this dataset")

    p = sub.add_parser("replay", help="verify a session log and write a report")
    p.add_argument("--log", required=True)
    p.add_argument("--report", required=True)

    p = sub.add_parser("serve", help="run a paced session with the ops endpoint")
    p.add_argument("--scenario", required=True)
    p.add_argument("--model")
    p.add_argument("--seed-set", default="default")
    p.add_argument("--port", type=int, default=8787)
    p.add_argument("--pace", type=float, default=10.0, help="simulated seconds per real second")
    p.add_argument("--out", default="serve.log")

    return parser


def _cmd_simulate(args):
    from .runner import run_phase1
    from .scenario import load_scenario_file
    from .store import save_dataset

    scenario = load_scenario_file(args.scenario)
    result = run_phase1(scenario, seed_set=args.seed_set, out_path=args.out)
    dataset_path = args.out + ".dataset"
    save_dataset(result.dataset, dataset_path)
    print(f"log: {result.log_path}")
    print(f"dataset: {dataset_path} ({len(result.dataset)} records)")
    return EXIT_OK


def _cmd_train(args):
    from .learner import train
    from .store import load_dataset, save_model

    data = load_dataset(args.dataset)
    model = train(data, epochs=args.epochs, step_size=args.step_size, seed=args.seed)
    save_model(model, args.out)
    print(f"model: {args.out} (final loss {model.training_meta['final_loss']:.6f})")
    return EXIT_OK


def _cmd_eval(args):
    from .learner import evaluate
    from .store import load_dataset, load_model

    model = load_model(args.model)
    data = load_dataset(args.dataset)
    report = evaluate(model, data)
    print(
        f"n={report.n} accuracy={report.accuracy:.4f} precision={report.precision:.4f} "
        f"recall={report.recall:.4f} (tp={report.tp} fp={report.fp} tn={report.tn} "
        f"fn={report.fn})"
    )
    return EXIT_OK


def _cmd_phase2(args):
    from .runner import run_phase2
    from .scenario import load_scenario_file
    from .store import load_dataset, load_model, save_dataset

    scenario = load_scenario_file(args.scenario)
    model = load_model(args.model)
    dataset = load_dataset(args.dataset) if args.dataset else None
    result = run_phase2(
        scenario, model, seed_set=args.seed_set, out_path=args.out, dataset=dataset
    )
    updated = args.out + ".dataset"
    save_dataset(result.dataset, updated)
    print(f"log: {result.log_path}")
    print(f"dataset after semi-supervised updates: {updated} ({len(result.dataset)} records)")
    return EXIT_OK


def _cmd_replay(args):
    from .replay import replay, report_text

    rep = replay(args.log)
    text = report_text(args.log, rep)
    with open(args.report, "w", encoding="utf-8") as fh:
        fh.write(text)
    print(f"report: {args.report}")
    print(f"verification: {'OK' if rep.ok else 'MISMATCH'}")
    return EXIT_OK if rep.ok else EXIT_RUNTIME


def _cmd_serve(args):
    import threading

    from .opsserver import serve_ops
    from .runner import Engine
    from .scenario import load_scenario_file
    from .store import load_model

    scenario = load_scenario_file(args.scenario)
    model = load_model(args.model) if args.model else None
    engine = Engine(
        scenario, seed_set=args.seed_set, out_path=args.out, model=model, pace=args.pace
    )
    server = serve_ops(engine, port=args.port)
    print(f"ops endpoint: http://127.0.0.1:{server.port}  (pace {args.pace}x)")
    thread = threading.Thread(target=engine.run)
    thread.start()
    try:
        thread.join()
        print("session complete; endpoint stays up (Ctrl-C to stop)")
        import time

        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        server.close()
    return EXIT_OK


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code else EXIT_OK
    handlers = {
        "simulate": _cmd_simulate,
        "train": _cmd_train,
        "eval": _cmd_eval,
        "phase2": _cmd_phase2,
        "replay": _cmd_replay,
        "serve": _cmd_serve,
    }
    try:
        return handlers[args.command](args)
    except (ScenarioInvalid, ModelMissing, CorruptLog, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ActaError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
