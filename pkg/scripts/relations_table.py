"""Audit every registered protocol and print the resource-relations table."""
import argparse

from locc_lab import verify
from locc_lab.cli import render_relations_table
from locc_lab.locc import EnumerateAll, Sample


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sample-seed", type=int, default=None,
                    help="run one sampled branch per protocol instead of all branches")
    args = ap.parse_args()
    policy = EnumerateAll() if args.sample_seed is None else Sample(args.sample_seed)
    audits = [verify.audit(entry, policy).to_json() for entry in verify.REGISTRY.values()]
    print(render_relations_table(audits))
    failed = [a["name"] for a in audits if not a["pass"]]
    print(f"\n{len(audits) - len(failed)}/{len(audits)} relations reproduced")
    return 1 if failed else 0


if __name__ == "__main__":
    raise SystemExit(main())
