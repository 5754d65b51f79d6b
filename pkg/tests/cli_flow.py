"""Drive the whole command-line pipeline into one directory."""

from __future__ import annotations

from pathlib import Path

from conftest import DATA
from intentmem.cli import main

COMMANDS = ("open notepad and write buy milk", "search the web for cheap flights", "open notepad and write buy milk")


def run_pipeline(work: Path, rows: str = "B,B+T_SG+Z+S_SG+PM") -> dict[str, Path]:
    work.mkdir(parents=True, exist_ok=True)
    p = {name: work / f"{name}.json" for name in ("units", "encoder", "hierarchy", "skills", "index", "memory",
                                                  "plan", "record", "report")}
    p["units"] = work / "units.jsonl"
    steps = [
        ["ingest", str(DATA / "golden_traces.jsonl"), "--out", str(p["units"])],
        ["train", "--units", str(p["units"]), "--out", str(p["encoder"])],
        ["cluster", "--units", str(p["units"]), "--checkpoint", str(p["encoder"]), "--out", str(p["hierarchy"])],
        ["skills", "--units", str(p["units"]), "--hierarchy", str(p["hierarchy"]), "--checkpoint", str(p["encoder"]),
         "--out", str(p["skills"]), "--index", str(p["index"])],
    ]
    for cmd in COMMANDS:
        steps.append(["plan", cmd, "--index", str(p["index"]), "--checkpoint", str(p["encoder"]),
                      "--memory", str(p["memory"]), "--out", str(p["plan"]), "--auto-approve"])
    steps += [
        ["run", "--plan", str(p["plan"]), "--scenario", str(DATA / "scenarios" / "happy_path.json"),
         "--index", str(p["index"]), "--checkpoint", str(p["encoder"]), "--out", str(p["record"]), "--strict"],
        ["eval", "--suite", str(DATA / "suite" / "suite.json"), "--traces", str(DATA / "golden_traces.jsonl"),
         "--rows", rows, "--out", str(p["report"])],
    ]
    for argv in steps:
        code = main(argv)
        if code != 0:
            raise RuntimeError(f"intentmem {argv[0]} exited {code}")
    return p
