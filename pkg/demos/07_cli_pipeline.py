"""
The whole pipeline from the command line
=========================================

Every stage is also a subcommand of the `radprep` executable. This demo
builds a small synthetic export plus a TOML config, then drives
ingest -> prepare -> pack -> eval -> report through the CLI entry point and
prints the summary it produces.
"""

import json
import random
import tempfile
from pathlib import Path

from radprep.cli import main

tmp = Path(tempfile.mkdtemp())
rng = random.Random(21)

WORDS = ("opacity nodule effusion consolidation atelectasis stable clear "
         "bilateral focal chronic mild unchanged basilar scattered").split()

rows = ["id,exam_code,report,impression,date"]
for i in range(60):
    findings = " ".join(rng.choices(WORDS, k=24)).capitalize() + "."
    impression = " ".join(rng.choices(WORDS, k=6)).capitalize() + "."
    if i % 19 == 0:
        findings = "Clear."    # too short, will be rejected
    rows.append(f'x{i:03d},XR-CHEST,"FINDINGS: {findings}","{impression}",2024-02-01')
(tmp / "export.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")

# Relative paths in the file resolve against the file's own directory.
(tmp / "radprep.toml").write_text("""\
master_seed = 11

[source]
path = "export.csv"

[paths]
workdir = "work"

[curation]
eval_fraction = 0.1
prepend_probability = 0.5

[packing]
capacity = 128
""", encoding="utf-8")

config = str(tmp / "radprep.toml")
for step in (
    ["--config", config, "ingest"],
    ["--config", config, "prepare", "--workers", "2"],
    ["--config", config, "pack"],
):
    code = main(step)
    assert code == 0, step

# Evaluation consumes externally produced generations aligned by record id.
# Here the "model" echoes the reference with the first word dropped.
workdir = tmp / "work"
refs, gens = [], []
for line in (workdir / "pairs_eval.jsonl").read_text().splitlines():
    pair = json.loads(line)
    refs.append({"record_id": pair["record_id"], "text": pair["output"]})
    gens.append({"record_id": pair["record_id"],
                 "text": " ".join(pair["output"].split()[1:])})
(tmp / "refs.jsonl").write_text(
    "\n".join(json.dumps(r) for r in refs) + "\n", encoding="utf-8")
(tmp / "gens.jsonl").write_text(
    "\n".join(json.dumps(g) for g in gens) + "\n", encoding="utf-8")

assert main(["--config", config, "eval", str(tmp / "gens.jsonl"),
             str(tmp / "refs.jsonl"), "--label", "drop-one-word"]) == 0
assert main(["--config", config, "report", "--label", "drop-one-word"]) == 0

print("\n--- work directory ---")
for p in sorted(workdir.iterdir()):
    print(f"  {p.name:22s} {p.stat().st_size:7d} bytes")

print("\n--- summary.md ---")
print((workdir / "summary.md").read_text())
