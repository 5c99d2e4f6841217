"""Regenerate the offline KMS fixtures for the blocks scenario.

Run after changing any prompt text: the fixture file names are digests
of the prompts, so stale fixtures stop matching.
"""

from __future__ import annotations

import argparse
from pathlib import Path

from mapplan import kms
from mapplan.parser import load_kb, serialize_kb, serialize_sections

DATA = kms.DATA

ACCEPTED = (
    f"{kms.ACCEPT}\n"
    "Both levels talk about blocks b1 and b2 at (1,1) and (3,1) and a single arm. "
    "The arm commands can carry out every move the high level needs, including stacking."
)
REJECTED = (
    f"{kms.REJECT}\n"
    "The goal puts b2 on top of b1, but none of the listed capabilities places a block onto another block. "
    "The agent can only move blocks to table positions, so the stacking part of the goal cannot be reached."
)


def main(argv: list[str] | None = None) -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=DATA / "kms_replay")
    args = ap.parse_args(argv)
    for old in args.out.glob("*.txt"):
        old.unlink()

    hl_q, ll_q = kms.scenario_text("blocks_hl"), kms.scenario_text("blocks_ll")
    bad_q = kms.scenario_text("blocks_hl_nostack")
    rec = kms.RecordingTransport(kms.ScriptedTransport([ACCEPTED, REJECTED]), args.out)
    kms.validate_queries(hl_q, ll_q, rec)
    kms.validate_queries(bad_q, ll_q, rec)

    hl, ll = load_kb(DATA / "blocks_hl.pl"), load_kb(DATA / "blocks_ll.pl")
    hs, ls = serialize_sections(hl), serialize_sections(ll)
    stepwise = [hs["general"], hs["states"], hs["hl_actions"], ls["general"], ls["states"], ls["ll_actions"], ls["mappings"]]
    answers = [f"Here is the requested part.\n\n{kms.fence(a)}\n" for a in stepwise]
    rec = kms.RecordingTransport(kms.ScriptedTransport(answers), args.out)
    kms.generate_kb(kms.GenerationSession("stepwise"), hl_q, ll_q, rec)

    whole = [kms.fence(serialize_kb(hl)) + "\n", kms.fence(serialize_kb(ll)) + "\n"]
    rec = kms.RecordingTransport(kms.ScriptedTransport(whole), args.out)
    kms.generate_kb(kms.GenerationSession("whole"), hl_q, ll_q, rec)
    print(f"wrote {len(list(args.out.glob('*.txt')))} fixtures to {args.out}")


if __name__ == "__main__":
    main()
