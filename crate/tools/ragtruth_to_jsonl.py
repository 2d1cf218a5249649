#!/usr/bin/env python3
"""Convert RAGTruth's native files into the benchmark JSONL format.

Input: the dataset directory holding ``response.jsonl`` and ``source_info.jsonl``.
Output: one line per response::

    {"id": ..., "task_type": "qa" | "data-to-text" | "summarization",
     "context": [...], "response": ..., "label_hallucinated": bool}

A response is labelled hallucinated when it carries at least one annotated
span of any type. QA contexts are the retrieved passages; data-to-text
sources are serialised as JSON; summarisation sources are used verbatim.
"""

import argparse
import json
import sys
from pathlib import Path

TASKS = {"QA": "qa", "Data2txt": "data-to-text", "Summary": "summarization"}


def read_jsonl(path):
    with open(path, encoding="utf-8") as f:
        for n, line in enumerate(f, 1):
            if line.strip():
                try:
                    yield json.loads(line)
                except json.JSONDecodeError as e:
                    sys.exit(f"{path}:{n}: {e}")


def context_of(task, info):
    if task == "QA" and isinstance(info, dict):
        passages = info.get("passages", "")
        return [passages] if isinstance(passages, str) else [str(p) for p in passages]
    if isinstance(info, str):
        return [info]
    return [json.dumps(info, ensure_ascii=False, sort_keys=True)]


def convert(data_dir, split):
    sources = {s["source_id"]: s for s in read_jsonl(data_dir / "source_info.jsonl")}
    for r in read_jsonl(data_dir / "response.jsonl"):
        if split and r.get("split") != split:
            continue
        source = sources.get(r["source_id"])
        if source is None:
            sys.exit(f"response {r['id']}: unknown source_id {r['source_id']}")
        task = source["task_type"]
        yield {
            "id": str(r["id"]),
            "task_type": TASKS.get(task, "other"),
            "context": context_of(task, source["source_info"]),
            "response": r["response"],
            "label_hallucinated": bool(r.get("labels")),
        }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("data_dir", type=Path)
    ap.add_argument("-o", "--out", type=Path, help="output file (default: stdout)")
    ap.add_argument("--split", default="test", help="split to keep; empty keeps all (default: test)")
    args = ap.parse_args()

    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    with out:
        for sample in convert(args.data_dir, args.split):
            out.write(json.dumps(sample, ensure_ascii=False) + "\n")


if __name__ == "__main__":
    main()
