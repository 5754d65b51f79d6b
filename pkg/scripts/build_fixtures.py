"""Regenerate the committed fixtures under data/.

    python3 scripts/build_fixtures.py [--out data]

Writes the golden trace corpus, the task suite with one scenario per task, and
the standalone executor scenarios. Output is deterministic.
"""

from __future__ import annotations

import argparse
import copy
import json
import tempfile
from pathlib import Path

import numpy as np

from intentmem.config import load_config
from intentmem.embedding import make_provider
from intentmem.encoder import UnitEncoder
from intentmem.hierarchy import build_hierarchy, save_hierarchy
from intentmem.persist import file_digest
from intentmem.pipeline import train_encoder
from intentmem.planner import RuleLabeler, slot_labels
from intentmem.trace_model import serialize_units, unit_from_record

APPS = {
    "browser": ("Browser", "Web Browser"),
    "notepad": ("Notepad", "Notepad"),
    "mail": ("Mail", "Mail"),
    "explorer": ("File Explorer", "File Explorer"),
    "music": ("Music", "Music"),
}

QUERIES = ["dog", "cat pictures", "weather today", "python tutorial", "pizza near me", "train times",
           "jazz", "lofi beats", "news headlines", "stock prices"]
SONGS = ["jazz", "lofi beats", "piano sonata", "rock classics", "summer hits", "rain sounds"]
URLS = ["https://example.com", "https://news.example.org", "www.wiki.example", "https://mail.example.net",
        "https://docs.example.com/start", "www.shop.example"]
TEXTS = ["buy milk", "meeting at noon", "call mom", "project ideas", "hello team", "quarterly report draft"]
FILES = ["report.txt", "notes.txt", "todo.md", "draft.txt", "ideas.txt", "list.csv"]
FOLDERS = ["C:\\Users\\me\\Documents", "C:\\Users\\me\\Downloads", "C:\\Projects", "D:\\Music", "C:\\Temp"]

OPEN_ENVS = ["local/Windows", "local/Windows desktop", "Windows desktop home"]

# ACT -> (env variants, act variants, desc templates, action templates, env tag, param list)
ACTS = {
    "search": (["web/searching browser", "web/browser search page", "web/search engine in browser"],
               ["search", "search the web", "web search"],
               ["search the web for {v}", "look up {v} online", "find {v} with a search engine"],
               ["click the search box", "type {v} into the search box", "press enter"], "web", QUERIES),
    "visit site": (["web/browser address bar", "web/browser navigation", "web/browser url bar"],
                   ["visit site", "open web page", "go to site"],
                   ["visit the page {v}", "go to {v} in the browser", "navigate to {v}"],
                   ["focus the URL bar", "open {v}", "press enter"], "web", URLS),
    "write note": (["local/notepad editor", "local/notepad text editor", "local/text editor notepad"],
                   ["write note", "type note", "write text"],
                   ["write {v} in notepad", "type the note {v}", "jot down {v}"],
                   ["click the editor", "type {v} into the editor"], "local", TEXTS),
    "save file": (["local/notepad save dialog", "local/notepad save as dialog", "local/save file dialog notepad"],
                  ["save file", "save note", "save as"],
                  ["save the note as {v}", "store the text file {v}", "save document to {v}"],
                  ["press ctrl+s", "type {v} into the file name box", "click Save"], "local", FILES),
    "send email": (["local/mail client compose", "local/mail compose window", "local/email client compose"],
                   ["send email", "compose email", "write email"],
                   ["send an email saying {v}", "email the team {v}", "compose and send {v}"],
                   ["click New message", "type {v} into the message body", "click Send"], "local", TEXTS),
    "open folder": (["local/file explorer", "local/file explorer path", "local/explorer folder view"],
                    ["open folder", "browse folder", "show directory"],
                    ["open the folder {v}", "browse to {v} in explorer", "show the directory {v}"],
                    ["click the path bar", "type {v} into the path bar", "press enter"], "local", FOLDERS),
    "play song": (["local/music player", "local/music player library", "local/media player music"],
                  ["play song", "play music", "play track"],
                  ["play {v} in the music player", "listen to {v}", "start playing {v}"],
                  ["click the music search", "type {v} into the music search", "press enter", "click Play"],
                  "local", SONGS),
}

NOISE_STEPS = [
    {"raw": "wait 2s"},
    {"raw": "close the popup", "flags": ["recovery"]},
    {"raw": "scroll down", "flags": ["incidental"]},
]


def _pick(rng, seq):
    return seq[int(rng.integers(len(seq)))]


def _noisy(rng, steps: list[dict], p: float = 0.45) -> list[dict]:
    out = []
    for s in steps:
        if rng.random() < p * 0.4:
            out.append(copy.deepcopy(_pick(rng, NOISE_STEPS)))
        out.append(s)
        if rng.random() < p * 0.25:
            out.append({**s, "flags": ["retry"]})
    return out


def build_corpus(seed: int = 7) -> list[dict]:
    rng = np.random.default_rng(seed)
    records = []
    n = 0

    def add(kind, env, mid, desc, steps, tags):
        nonlocal n
        n += 1
        rec = {"id": f"u{n:03d}", "kind": kind, "env": env, "act" if kind == "control" else "key": mid,
               "desc": desc, "actions": steps, "tags": tags}
        records.append(rec)

    for app, (label, _) in APPS.items():
        for k in range(6):
            env = _pick(rng, OPEN_ENVS)
            verb = _pick(rng, ["open", "launch", "start"])
            desc = _pick(rng, [f"open the {label.lower()}", f"launch {label} from the desktop", f"start {label}"])
            raw = f"double-click {label}" if k % 3 == 2 else f"open {label}"
            steps = _noisy(rng, [{"raw": raw}])
            add("control", env, f"{verb} {app}", desc, steps, {"env": "local", "act": f"open {app}"})

    for act, (envs, mids, descs, tmpl, env_tag, values) in ACTS.items():
        for k in range(9):
            v = _pick(rng, values)
            steps = _noisy(rng, [{"raw": t.replace("{v}", v)} for t in tmpl])
            add("control", _pick(rng, envs), _pick(rng, mids), _pick(rng, descs).replace("{v}", v), steps,
                {"env": env_tag, "act": act})
        if env_tag == "web":
            for k in range(3):
                v = _pick(rng, values)
                steps = _noisy(rng, [{"raw": t.replace("{v}", v)} for t in tmpl])
                add("browsing", _pick(rng, envs), f"{v}", _pick(rng, descs).replace("{v}", v), steps,
                    {"env": env_tag, "act": act})
    for rec in records:
        unit_from_record(rec)
    return records


# ---------------------------------------------------------------------------
# simulated world


def _win(wid, title, comps, **extra):
    return {"id": wid, "title": title, "components": [{"id": c, "role": r, "label": l} for c, r, l in comps], **extra}


def world() -> dict:
    windows = {
        "browser": _win("browser", "Web Browser", [("address_bar", "textbox", "Address bar"),
                                                   ("search_box", "textbox", "Search box")]),
        "notepad": _win("notepad", "Notepad", [("editor", "textbox", "Editor")]),
        "mail": _win("mail", "Mail", [("new_message", "button", "New message")]),
        "explorer": _win("explorer", "File Explorer", [("path_bar", "textbox", "Path bar")]),
        "music": _win("music", "Music", [("music_search", "textbox", "Music search"), ("play", "button", "Play")]),
    }
    save_dialog = _win("save_dialog", "Save As", [("file_name", "textbox", "File name box"),
                                                 ("save_ok", "button", "Save")])
    compose = _win("compose", "New Message", [("mail_body", "textbox", "Message body"), ("send", "button", "Send")])
    desktop = _win("desktop", "Desktop", [(f"icon:{a}", "icon", lab) for a, (lab, _) in APPS.items()],
                   panels=["icons"])
    rules = []
    for app in APPS:
        rules.append({"verb": "doubleclick", "component": f"icon:{app}",
                      "effects": [{"op": "open_window", "window": windows[app]}]})

    def field(comp, key, focus_name, clickable=True, press=False):
        out = [{"verb": "text_input", "component": comp,
                "effects": [{"op": "append", "key": key, "value": "$text"},
                            {"op": "set", "key": "focus_field", "value": focus_name}]}]
        for verb in (["click"] if clickable else []) + (["press"] if press else []):
            out.append({"verb": verb, "component": comp,
                        "effects": [{"op": "set", "key": "focus_field", "value": focus_name}]})
        return out

    rules += field("address_bar", "address_typed", "address", press=True)
    rules += field("search_box", "search_typed", "search")
    rules.append({"verb": "enter", "window": "browser",
                  "effects": [{"op": "append", "key": "submitted", "value": "${focus_field};"}]})
    rules += field("editor", "note", "editor")
    rules.append({"verb": "hotkey", "window": "notepad", "text": "ctrl+s",
                  "effects": [{"op": "open_window", "window": save_dialog}]})
    rules += field("file_name", "save_name", "file_name")
    rules.append({"verb": "click", "component": "save_ok",
                  "effects": [{"op": "append", "key": "saved_as", "value": "${save_name};"},
                              {"op": "close_window", "id": "save_dialog", "refocus": "notepad"}]})
    rules.append({"verb": "click", "component": "new_message", "effects": [{"op": "open_window", "window": compose}]})
    rules += field("mail_body", "mail_body", "mail_body")
    rules.append({"verb": "click", "component": "send",
                  "effects": [{"op": "append", "key": "mail_sent", "value": "${mail_body};"},
                              {"op": "close_window", "id": "compose", "refocus": "mail"}]})
    rules += field("path_bar", "path_typed", "path")
    rules.append({"verb": "enter", "window": "explorer",
                  "effects": [{"op": "append", "key": "folder_opened", "value": "${path_typed};"}]})
    rules += field("music_search", "music_query", "music")
    rules.append({"verb": "enter", "window": "music", "effects": [{"op": "set", "key": "music_searched", "value": True}]})
    rules.append({"verb": "click", "component": "play", "when": {"state": {"music_searched": True}},
                  "effects": [{"op": "set", "key": "playing", "value": True}]})
    return {"windows": [desktop], "focused": "desktop", "state": {}, "rules": rules}


WINDOW_OF_ACT = {"search": "browser", "visit site": "browser", "write note": "notepad", "save file": "notepad",
                 "send email": "mail", "open folder": "explorer", "play song": "music"}


def postcondition(act: str, b: dict) -> dict:
    if act.startswith("open ") and act.split()[1] in APPS:
        return {"window_open": act.split()[1]}
    return {
        "search": {"state_contains": {"search_typed": b.get("query", ""), "submitted": "search;"}},
        "visit site": {"state_contains": {"address_typed": b.get("url", ""), "submitted": "address;"}},
        "write note": {"state_contains": {"note": b.get("text", "")}},
        "save file": {"state_contains": {"saved_as": b.get("file_path", "")}},
        "send email": {"state_contains": {"mail_sent": b.get("text", "")}},
        "open folder": {"state_contains": {"folder_opened": b.get("file_path", "")}},
        "play song": {"state_contains": {"music_query": b.get("query", "")}, "state": {"playing": True}},
    }[act]


CHAT = _win("chat", "Chat", [("chat_reply", "textbox", "Reply")])
UPDATE_POPUP = _win("update_popup", "Update available", [("later", "button", "Remind me later")], occludes="*")


def scenario_for(command: str, labeler: RuleLabeler, name: str, fault: str | None = None, after: int = 2,
                 preopen: tuple[str, ...] = ()) -> dict:
    lab = labeler.label(command)
    doc = world()
    doc["name"] = name
    w = {w["id"]: w for w in [r["effects"][0]["window"] for r in doc["rules"]
                              if r["verb"] == "doubleclick"]}
    for app in preopen:
        doc["windows"].append(copy.deepcopy(w[app]))
        doc["focused"] = app
    posts, focus = {}, {}
    for slot, tu in zip(slot_labels(lab), lab.units):
        posts[slot] = postcondition(tu.act, dict(tu.bindings))
        if tu.act == f"open {tu.app}":
            focus[slot] = tu.app
    doc["postconditions"] = posts
    doc["expect_focus"] = focus
    if fault == "focus":
        doc["faults"] = [{"after_step": after, "effects": [{"op": "open_window", "window": CHAT}]}]
    elif fault == "popup":
        doc["faults"] = [{"after_step": after, "effects": [{"op": "open_window", "window": UPDATE_POPUP}]}]
    return doc


SUITE = [
    ("open notepad and write buy milk", None),
    ("search dog at a browser", None),
    ("visit https://example.com", None),
    ("write meeting at noon in notepad, then save it as notes.txt", None),
    ("send an email saying hello team", None),
    ("open the folder C:\\Users\\me\\Documents", None),
    ("play jazz in the music player", None),
    ("search cat pictures at a browser", "focus"),
    ("open the browser", None),
    ("search weather today and visit https://news.example.org", None),
    ("write call mom in notepad", "focus"),
    ("search python tutorial at a browser", None),
    ("write project ideas in notepad and save it as ideas.txt", None),
    ("email quarterly report draft", None),
    ("play lofi beats", None),
    ("open the folder C:\\Projects", "focus"),
    ("visit www.wiki.example", None),
    ("search pizza near me at a browser, then visit www.shop.example", None),
    ("open notepad", None),
    ("search train times at a browser", "popup"),
    ("write todo items in notepad and save it as todo.md", None),
    ("send an email saying meeting at noon", None),
    ("play piano sonata in the music player", None),
    ("search news headlines at a browser", None),
    ("open the folder D:\\Music and play rock classics", None),
    ("write draft intro in notepad, save it as draft.txt, then email draft intro", None),
    ("search stock prices at a browser", None),
    ("visit https://docs.example.com/start", "focus"),
    ("open music", None),
    ("search dog at a browser and write dog facts in notepad", None),
    ("play summer hits", "popup"),
    ("search jazz at a browser", None),
]


def build_suite(labeler: RuleLabeler) -> tuple[list[dict], dict[str, dict]]:
    tasks, scenarios = [], {}
    for i, (cmd, fault) in enumerate(SUITE, start=1):
        tid = f"t{i:02d}"
        scenarios[tid] = scenario_for(cmd, labeler, tid, fault)
        tasks.append({"id": tid, "command": cmd, "scenario": f"scenarios/{tid}.json"})
    return tasks, scenarios


def executor_scenarios(labeler: RuleLabeler) -> dict[str, dict]:
    out = {
        "happy_path": scenario_for("open notepad and write buy milk", labeler, "happy_path"),
        "single_fault": scenario_for("open notepad and write buy milk", labeler, "single_fault", "focus", after=1),
        "popup_occlusion": scenario_for("open notepad and write buy milk", labeler, "popup_occlusion", "popup", after=1),
    }
    return out


def golden_digest(units, workdir: Path) -> str:
    """Digest of the hierarchy the default config builds from ``units`` (train, then cluster)."""
    cfg = load_config()
    provider = make_provider(cfg.provider)
    enc = UnitEncoder(provider, train_encoder(units, provider, cfg))
    embs = enc.encode_many(units)
    out = workdir / "hierarchy.json"
    save_hierarchy(build_hierarchy([(u.id, e) for u, e in zip(units, embs)], cfg.hierarchy), out)
    return file_digest(out)


def _dump(path: Path, doc) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "data"))
    args = ap.parse_args(argv)
    out = Path(args.out)
    labeler = RuleLabeler()
    records = build_corpus()
    units = [unit_from_record(r) for r in records]
    (out).mkdir(parents=True, exist_ok=True)
    (out / "golden_traces.jsonl").write_bytes(serialize_units(units))
    tasks, scenarios = build_suite(labeler)
    _dump(out / "suite" / "suite.json", {"version": 1, "tasks": tasks})
    for tid, doc in scenarios.items():
        _dump(out / "suite" / "scenarios" / f"{tid}.json", doc)
    for name, doc in executor_scenarios(labeler).items():
        _dump(out / "scenarios" / f"{name}.json", doc)
    with tempfile.TemporaryDirectory() as tmp:
        digest = golden_digest(units, Path(tmp))
    (out / "golden_hierarchy.sha256").write_text(digest + "\n", encoding="utf-8")
    print(f"{len(units)} units, {len(tasks)} tasks, hierarchy {digest[:12]} -> {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
