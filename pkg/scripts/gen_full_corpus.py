"""Recovery-training corpus at full scale: 100 messages x 16 BERs x 30 corruptions = 48,000 pairs."""

import argparse
from pathlib import Path

from aquamodem.corruption import DEFAULT_BER_GRID, generate_corpus, write_corpus
from aquamodem.experiments import load_messages


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--protect-separators", action="store_true")
    ap.add_argument("--out", type=Path, default=Path("results/corpus_48k.jsonl"))
    args = ap.parse_args()
    args.out.parent.mkdir(parents=True, exist_ok=True)
    records = generate_corpus(
        load_messages(),
        DEFAULT_BER_GRID,
        per_message=30,
        seed=args.seed,
        protect_separators=args.protect_separators,
        bers_per_message=16,
    )
    write_corpus(records, args.out)
    print(f"wrote {len(records)} records to {args.out}")


if __name__ == "__main__":
    main()
