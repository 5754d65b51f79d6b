"""Command-line entry point: ingest, train, cluster, skills, plan, run, eval, inspect.

Every artifact is a versioned JSON document; rerunning a subcommand on the same
inputs, flags and seed rewrites byte-identical outputs. Failures print one line
``error: <ErrorClass>: <message>`` to stderr and exit with status 1.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from .config import Config, load_config
from .embedding import make_provider
from .encoder import UnitEncoder, load_checkpoint, save_checkpoint
from .errors import IntentMemError, PersistenceError, PlanningError
from .evaluation import ABLATION_ROWS, load_suite, row_by_name, run_ablation, step_consistency
from .executor import Executor
from .hierarchy import build_hierarchy, load_hierarchy, purity_metrics, save_hierarchy, separation_metrics
from .memory import APPROVED, REJECTED, IntentIndex, PlanMemory, load_index, save_index
from .persist import file_digest, read_document, write_document
from .pipeline import build_all, ingest, train_encoder
from .planner import HintGenerator, NoisyLabeler, Planner, RuleLabeler
from .plans import GlobalPlan
from .sim_desktop import SimDesktop, read_scenario
from .skills import induce_skills
from .trace_model import load_alias_map, serialize_units

log = logging.getLogger("intentmem")


def _encoder(cfg: Config, checkpoint: str | None) -> UnitEncoder:
    params = load_checkpoint(checkpoint) if checkpoint else None
    return UnitEncoder(make_provider(cfg.provider), params)


def _emit(doc) -> None:
    sys.stdout.write(json.dumps(doc, sort_keys=True, indent=1) + "\n")


# ---------------------------------------------------------------------------
# subcommands


def cmd_ingest(args, cfg: Config) -> int:
    units = ingest(args.traces)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_bytes(serialize_units(units))
    log.info("wrote %d units to %s", len(units), args.out)
    return 0


def cmd_train(args, cfg: Config) -> int:
    if args.epochs is not None:
        cfg = replace(cfg, epochs=args.epochs)
    units = ingest(args.units)
    params = train_encoder(units, make_provider(cfg.provider), cfg)
    save_checkpoint(params, args.out)
    log.info("trained %d epochs, final loss %.6f", cfg.epochs, params.loss_history[-1] if params.loss_history else float("nan"))
    return 0


def cmd_cluster(args, cfg: Config) -> int:
    units = ingest(args.units)
    enc = _encoder(cfg, args.checkpoint)
    embs = enc.encode_many(units)
    h = build_hierarchy([(u.id, e) for u, e in zip(units, embs)], cfg.hierarchy)
    save_hierarchy(h, args.out)
    sep = separation_metrics(h, {u.id: e for u, e in zip(units, embs)})
    log.info("%d IGs, %d SGs, Sep_w=%s (%s)", len(h.groups), len(h.subgroups()), sep.sep_w, sep.status)
    return 0


def cmd_skills(args, cfg: Config) -> int:
    units = ingest(args.units)
    h = induce_skills(load_hierarchy(args.hierarchy), {u.id: u for u in units}, load_alias_map(), cfg.skills)
    save_hierarchy(h, args.out)
    if args.index:
        enc = _encoder(cfg, args.checkpoint)
        embs = enc.encode_many(units)
        save_index(IntentIndex(h, {u.id: u for u in units}, {u.id: e.z for u, e in zip(units, embs)}), args.index)
    log.info("induced %d skill hints", sum(len(sg.skill_hints) for sg in h.subgroups()))
    return 0


def _approve(args) -> str | None:
    if args.auto_approve:
        return APPROVED
    if not sys.stdin.isatty():
        return None
    answer = input("approve this plan? [y/N] ").strip().lower()
    return APPROVED if answer in ("y", "yes") else REJECTED


def cmd_plan(args, cfg: Config) -> int:
    index = load_index(args.index) if args.index else None
    memory = PlanMemory.load(args.memory, missing_ok=True) if args.memory else None
    planner = Planner(_encoder(cfg, args.checkpoint), index, memory, RuleLabeler(), HintGenerator(), cfg.planner)
    res = planner.plan(args.command)
    log.info("case %s (score %s)", res.decision.case, res.decision.score)
    if args.out:
        write_document(args.out, "plan", {"plan": res.plan.to_dict(), "decision": res.decision.to_dict(),
                                          "labeling": res.labeling.to_dict()})
    decision = _approve(args)
    if decision == APPROVED and args.edited:
        # user edits arrive as a whole replacement plan
        res = replace(res, plan=_read_plan(args.edited))
    stored = planner.approve(res, decision) if decision is not None else False
    _emit({"decision": res.decision.to_dict(), "plan": res.plan.to_dict(), "stored": stored})
    return 0


def _read_plan(path: str) -> GlobalPlan:
    doc = read_document(path, "plan")
    try:
        return GlobalPlan.from_dict(doc["plan"])
    except (KeyError, TypeError, ValueError) as exc:
        raise PlanningError(f"{path}: malformed plan ({exc!r})") from exc


def cmd_run(args, cfg: Config) -> int:
    plan = _read_plan(args.plan)
    index = load_index(args.index) if args.index else None
    enc = _encoder(cfg, args.checkpoint) if index is not None else None
    sim = SimDesktop(read_scenario(args.scenario), seed=cfg.seed)
    rec = Executor(sim, index, enc, cfg.executor).run(plan, args.task_id)
    if args.out:
        write_document(args.out, "record", rec.to_dict())
    _emit({"outcome": rec.outcome, "retries": rec.retries, "steps_attempted": rec.steps_attempted,
           "plan_steps_executed": rec.plan_steps_executed, "plan_steps_total": rec.plan_steps_total})
    return 0 if rec.outcome == "SUCCESS" or not args.strict else 3


def cmd_eval(args, cfg: Config) -> int:
    rows = ABLATION_ROWS if args.rows == "all" else tuple(row_by_name(n.strip()) for n in args.rows.split(","))
    units = ingest(args.traces)
    provider = make_provider(cfg.provider)
    artifacts = {learned: build_all(units, cfg, learned, provider) for learned in sorted({r.learned for r in rows})}
    tasks = load_suite(args.suite)
    report = run_ablation(tasks, artifacts, cfg.planner, cfg.executor, rows, cfg.seed)
    if args.consistency:
        art = artifacts.get(True) or artifacts[False]
        pc = replace(cfg.planner, use_pm=False)
        cmds = [t.command for t in tasks]
        report.consistency["deterministic"] = step_consistency(
            cmds, lambda r: Planner(art.encoder, art.index, None, RuleLabeler(), HintGenerator(), pc))
        for noise in args.noise:
            report.consistency[f"noise={noise:g}"] = step_consistency(
                cmds, lambda r, n=noise: Planner(art.encoder, art.index, None,
                                                 NoisyLabeler(RuleLabeler(), n, seed=cfg.seed * 1000 + r),
                                                 HintGenerator(), pc))
    report.write(args.out)
    if args.plots:
        from .plotting import plot_ablation, plot_bins

        plot_ablation(report, Path(args.plots) / "ablation.png")
        plot_bins(report, Path(args.plots) / "length_bins.png")
    sys.stdout.write(report.to_tsv())
    return 0


def cmd_inspect(args, cfg: Config) -> int:
    path = Path(args.path)
    if not path.is_file():
        raise PersistenceError(f"{path}: no such file")
    try:
        head = json.loads(path.read_text("utf-8"))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError):
        head = None
    kind = head.get("format", "").split("/", 1)[-1] if isinstance(head, dict) else "traces"
    out = {"path": str(path), "kind": kind, "sha256": file_digest(path)}
    if kind == "hierarchy":
        h = load_hierarchy(path)
        out.update(groups=len(h.groups), subgroups=len(h.subgroups()),
                   noise_subgroups=sum(sg.noise for sg in h.subgroups()))
    elif kind == "index":
        idx = load_index(path)
        out.update(units=len(idx.units), subgroups=len(idx.hierarchy.subgroups()))
        tags = {u.id: (u.tags.get("env", ""), u.tags.get("act", "")) for u in idx.units.values() if u.tags}
        if len(tags) == len(idx.units):
            p = purity_metrics(idx.hierarchy, tags)
            out.update(mu_env=p.mu_env, mu_act=p.mu_act)
        sep = separation_metrics(idx.hierarchy, idx.embeddings)
        out.update(sep_w=sep.sep_w, separation_status=sep.status)
    elif kind == "plan-memory":
        mem = PlanMemory.load(path)
        out.update(entries=len(mem), plan_ids=[e.plan_id for e in mem.entries])
    elif kind == "encoder":
        params = load_checkpoint(path)
        out.update(config=params.config.to_dict(), epochs=len(params.loss_history))
    elif kind == "traces":
        units = ingest(path)
        out.update(units=len(units))
    _emit(out)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="intentmem", description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="JSON config overlaid on the packaged defaults")
    ap.add_argument("--seed", type=int, help="override the config seed")
    ap.add_argument("--verbose", "-v", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")

    p = sub.add_parser("ingest", help="validate a trace file and write normalized units")
    p.add_argument("traces")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="train the multi-view encoder")
    p.add_argument("--units", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("cluster", help="build the two-level intent hierarchy")
    p.add_argument("--units", required=True)
    p.add_argument("--checkpoint", help="encoder checkpoint; omit to cluster raw embeddings")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("skills", help="induce skill hints and write the retrieval index")
    p.add_argument("--units", required=True)
    p.add_argument("--hierarchy", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--out", required=True, help="hierarchy with skill hints")
    p.add_argument("--index", help="also write the retrieval index here")
    p.set_defaults(func=cmd_skills)

    p = sub.add_parser("plan", help="plan one command")
    p.add_argument("command")
    p.add_argument("--index")
    p.add_argument("--checkpoint")
    p.add_argument("--memory")
    p.add_argument("--out")
    p.add_argument("--auto-approve", action="store_true")
    p.add_argument("--edited", help="plan document that replaces the generated plan when approved")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("run", help="execute a plan document against a scenario")
    p.add_argument("--plan", required=True)
    p.add_argument("--scenario", required=True)
    p.add_argument("--index")
    p.add_argument("--checkpoint")
    p.add_argument("--task-id", default="")
    p.add_argument("--out")
    p.add_argument("--strict", action="store_true", help="exit 3 unless the run succeeds")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="run the ablation matrix over a task suite")
    p.add_argument("--suite", required=True)
    p.add_argument("--traces", required=True)
    p.add_argument("--rows", default="all", help="'all' or comma-separated row names")
    p.add_argument("--out", required=True)
    p.add_argument("--plots", help="directory for PNG figures")
    p.add_argument("--consistency", action="store_true")
    p.add_argument("--noise", type=float, nargs="*", default=[0.1, 0.3, 0.6])
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("inspect", help="summarize any artifact")
    p.add_argument("path")
    p.set_defaults(func=cmd_inspect)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config, args.seed)
        return args.func(args, cfg)
    except IntentMemError as exc:
        msg = str(exc).splitlines()[0] if str(exc) else ""
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
