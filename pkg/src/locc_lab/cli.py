"""``locc-lab`` command line.

Every command builds a list of JSON-able records; ``--output json`` writes
them one per line and ``--output text`` renders the same records, so text
output can always be regenerated from a saved JSON stream.

Exit status: 0 when every executed check passes, 1 on any failure, 2 on
usage errors.  Sampled runs use seed 0 unless ``--seed`` is given.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass
from typing import Optional, Sequence

from . import protocols as pr
from . import verify
from .locc import EnumerateAll, Sample, run_branches

COMMANDS = ("run", "audit", "choi", "suite", "guess")
DEFAULT_TRIALS = 16000


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    protocol: Optional[str] = None
    policy: str = "all"
    seed: Optional[int] = None
    trials: int = DEFAULT_TRIALS
    output: str = "text"
    out: Optional[str] = None

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise UsageError(f"unknown command {self.command!r}")
        if self.policy not in ("all", "sample"):
            raise UsageError(f"unknown policy {self.policy!r}")
        if self.command != "guess" and self.policy == "all" and self.seed is not None:
            raise UsageError("--seed only applies to --policy sample (or guess)")
        if self.seed is None and (self.policy == "sample" or self.command == "guess"):
            self.seed = 0
        if self.trials < 1:
            raise UsageError("--trials must be >= 1")
        if self.output not in ("text", "json"):
            raise UsageError(f"unknown output {self.output!r}")

    def branch_policy(self):
        return Sample(self.seed) if self.policy == "sample" else EnumerateAll()


# --- record producers -------------------------------------------------------

def _demo_body(entry: verify.Registered):
    """One representative execution of a registered protocol."""
    if entry.gate_protocol is not None:
        proto = entry.gate_protocol
        refs = [f"ref{i}" for i in range(proto.k)]
        inputs = proto.input_labels()

        def body(sess):
            proto.setup(sess)
            for r, q, owner in zip(refs, inputs, proto.owners):
                sess.prepare_reference(pr.sv.phi_plus(r, q), {q: owner})
            return list(proto.runner(sess, list(inputs)))
        return body
    # communication protocols run every message inside entry.run
    return None


def run_records(cfg: RunConfig) -> list[dict]:
    entry = _lookup(cfg.protocol)
    policy = cfg.branch_policy()
    records = []
    body = _demo_body(entry)
    if body is not None:
        for i, br in enumerate(run_branches(body, policy)):
            outcomes = [ev.outcome for ev in br.session.trace if ev.type == "Measure"]
            records.append({"type": "Branch", "index": i, "probability": br.probability,
                            "outcomes": outcomes})
            records.extend(ev.to_json() for ev in br.session.trace)
            records.append(br.session.ledger.to_dict())
    records.append(entry.run(policy).to_json())
    return records


def audit_records(cfg: RunConfig) -> list[dict]:
    names = list(verify.REGISTRY) if cfg.protocol in (None, "all") else [cfg.protocol]
    policy = cfg.branch_policy()
    return [verify.audit(_lookup(n), policy).to_json() for n in names]


def choi_records(cfg: RunConfig) -> list[dict]:
    entry = _lookup(cfg.protocol)
    if entry.gate_protocol is None:
        raise UsageError(f"{cfg.protocol} does not implement a gate")
    proto = entry.gate_protocol
    rec = verify.choi_of_protocol(proto, cfg.branch_policy())
    fid = rec.fidelity_to(proto.ideal)
    ok = fid >= 1 - verify.FIDELITY_TOL and not rec.ancilla_entangled
    return [{
        "type": "ChoiRecord",
        "name": entry.name,
        "ideal": proto.ideal.name,
        "branch_count": rec.branch_count,
        "trace": float(rec.process.trace().real),
        "fidelity": fid,
        "min_branch_fidelity": rec.min_branch_fidelity,
        "ancilla_entangled": rec.ancilla_entangled,
        "pass": bool(ok),
    }]


def guess_records(cfg: RunConfig) -> list[dict]:
    freq = pr.guessing_swap_experiment(cfg.trials, cfg.seed)
    p = 1 / 16
    sigma = math.sqrt(p * (1 - p) / cfg.trials)
    return [{
        "type": "GuessResult",
        "trials": cfg.trials,
        "seed": cfg.seed,
        "frequency": freq,
        "expected": p,
        "sigma": sigma,
        "pass": bool(abs(freq - p) <= 3 * sigma),
    }]


def suite_records(cfg: RunConfig) -> list[dict]:
    audits = audit_records(RunConfig("audit", "all", cfg.policy,
                                     None if cfg.policy == "all" else cfg.seed))
    guess_seed = cfg.seed if cfg.seed is not None else 0
    return audits + guess_records(RunConfig("guess", trials=cfg.trials, seed=guess_seed))


def _lookup(name: Optional[str]) -> verify.Registered:
    if name not in verify.REGISTRY:
        known = ", ".join(verify.REGISTRY)
        raise UsageError(f"unknown protocol {name!r}; known: {known}")
    return verify.REGISTRY[name]


PRODUCERS = {"run": run_records, "audit": audit_records, "choi": choi_records,
             "suite": suite_records, "guess": guess_records}


# --- rendering --------------------------------------------------------------

def _ledger_cell(d: dict) -> str:
    gates = " ".join(f"{k}x{v}" for k, v in sorted(d.get("nonlocal_gate_uses", {}).items()) if v)
    cell = f"({d['ebits_consumed']},{d['bits_a_to_b']},{d['bits_b_to_a']})"
    return f"{cell} {gates}".strip()


def _fmt(x, spec=".10f") -> str:
    return "-" if x is None else format(x, spec)


def render_relations_table(audits: Sequence[dict]) -> str:
    """One row per resource relation with the measured ledger and PASS/FAIL."""
    rows = [("relation", "protocol", "expected", "observed", "entropy", "choi F", "result")]
    for a in audits:
        rows.append((a["relation"], a["name"], _ledger_cell(a["expected_ledger"]),
                     _ledger_cell(a["observed_ledger"]), _fmt(a["observed_entropy"]),
                     _fmt(a["choi_fidelity"]), "PASS" if a["pass"] else "FAIL"))
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    right = {4, 5}
    lines = []
    for r in rows:
        cells = [c.rjust(w) if i in right else c.ljust(w) for i, (c, w) in enumerate(zip(r, widths))]
        lines.append("  ".join(cells).rstrip())
    lines.insert(1, "-" * len(lines[0]))
    return "\n".join(lines)


def _render_one(r: dict) -> str:
    t = r["type"]
    if t == "Branch":
        return f"branch {r['index']}: p={r['probability']:.6f} outcomes={r['outcomes']}"
    if t == "ledger":
        return f"  ledger {_ledger_cell(r)}"
    if t == "ProtocolReport":
        status = "PASS" if r["success"] else "FAIL"
        lines = [f"{r['name']}: {status} branches={r['branches_checked']} "
                 f"ledger={_ledger_cell(r['ledger'])} "
                 f"entropy={_fmt(r['final_entropy_across_cut'])}"]
        lines += [f"  {n}" for n in r.get("notes", [])]
        if r.get("decoded_bits"):
            lines += [f"  sent {d['sent']}: {'ok' if d['success'] else 'WRONG'}"
                      for d in r["decoded_bits"]]
        return "\n".join(lines)
    if t == "ChoiRecord":
        return (f"{r['name']} vs {r['ideal']}: fidelity={r['fidelity']:.12f} "
                f"min_branch={r['min_branch_fidelity']:.12f} branches={r['branch_count']} "
                f"trace={r['trace']:.6f} ancilla_entangled={r['ancilla_entangled']} "
                f"{'PASS' if r['pass'] else 'FAIL'}")
    if t == "GuessResult":
        return (f"guessing SWAP: {r['trials']} trials seed={r['seed']} "
                f"frequency={r['frequency']:.5f} expected={r['expected']:.5f} "
                f"3sigma={3 * r['sigma']:.5f} {'PASS' if r['pass'] else 'FAIL'}")
    fields = " ".join(f"{k}={v}" for k, v in r.items() if k != "type")
    return f"  {t} {fields}"


def render_text(records: Sequence[dict]) -> str:
    out, audits = [], []
    for r in records:
        if r["type"] == "AuditResult":
            audits.append(r)
            continue
        if audits:
            out.append(render_relations_table(audits))
            audits = []
        out.append(_render_one(r))
    if audits:
        out.append(render_relations_table(audits))
    return "\n".join(out) + "\n"


def render_json(records: Sequence[dict]) -> str:
    return "".join(json.dumps(r, default=_json_default) + "\n" for r in records)


def _json_default(x):
    if hasattr(x, "item"):
        return x.item()
    raise TypeError(f"cannot serialize {type(x)}")


def all_passed(records: Sequence[dict]) -> bool:
    for r in records:
        if "pass" in r and not r["pass"]:
            return False
        if r["type"] == "ProtocolReport" and not r["success"]:
            return False
    return True


# --- entry point ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="locc-lab",
        description="Run, audit and verify two-party nonlocal-gate protocols.",
    )
    parser.add_argument("command", nargs="?", choices=COMMANDS)
    parser.add_argument("protocol", nargs="?", help="registered protocol name (run/audit/choi)")
    parser.add_argument("--policy", choices=("all", "enumerate-all", "sample"), default="all")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--trials", type=int, default=DEFAULT_TRIALS)
    parser.add_argument("--output", choices=("text", "json"), default="text")
    parser.add_argument("--out", metavar="PATH")
    parser.add_argument("--list", action="store_true", help="list registered protocols and exit")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.list:
        print("\n".join(verify.REGISTRY))
        return 0
    if args.command is None:
        parser.print_usage(sys.stderr)
        print("locc-lab: error: a command is required", file=sys.stderr)
        return 2
    try:
        policy = "all" if args.policy == "enumerate-all" else args.policy
        cfg = RunConfig(args.command, args.protocol, policy, args.seed,
                        args.trials, args.output, args.out)
        if cfg.command in ("run", "choi") and cfg.protocol is None:
            raise UsageError(f"{cfg.command} needs a protocol name")
        records = PRODUCERS[cfg.command](cfg)
    except UsageError as exc:
        print(f"locc-lab: error: {exc}", file=sys.stderr)
        return 2
    text = render_json(records) if cfg.output == "json" else render_text(records)
    if cfg.out:
        with open(cfg.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0 if all_passed(records) else 1


if __name__ == "__main__":
    sys.exit(main())
