"""Labeled-function corpus: schema, loader, synthetic generator, splits.

A corpus file is newline-delimited JSON, one sample per line:

    {"id": str, "code": str, "label": "secure"|"insecure",
     "vuln_type": str|null, "origin": "synthetic"|"imported",
     "pair_id": str|null}

The synthetic generator emits pre-patch/post-patch pairs mirroring the
base-commit-insecure / merged-commit-secure convention: each pair shares a
pair_id and differs by one minimal patch (a comparison, a guard, or an
added free).  Splitting is done at pair granularity so a function and its
patched twin can never land on opposite sides of a split boundary.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass

from .frontend import LexError, ParseError, parse_source

VULN_TYPES = ("buffer_overflow", "null_deref", "memory_leak")
LABELS = ("secure", "insecure")
ORIGINS = ("synthetic", "imported")


class CorpusError(Exception):
    """Schema violation or unparseable code; carries the 1-based line number."""

    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class SplitError(Exception):
    """Requested split is infeasible (some nonempty ratio got no samples)."""


@dataclass
class Sample:
    id: str
    code: str
    label: str  # "secure" | "insecure"
    vuln_type: str | None
    origin: str = "synthetic"
    pair_id: str | None = None

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "code": self.code,
            "label": self.label,
            "vuln_type": self.vuln_type,
            "origin": self.origin,
            "pair_id": self.pair_id,
        }


@dataclass
class CorpusSplit:
    train: list[str]
    validation: list[str]
    test: list[str]
    seed: int
    ratios: tuple[float, float, float]

    def to_json(self) -> str:
        doc = {
            "seed": self.seed,
            "ratios": list(self.ratios),
            "train": self.train,
            "validation": self.validation,
            "test": self.test,
        }
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "CorpusSplit":
        doc = json.loads(text)
        return cls(
            train=list(doc["train"]),
            validation=list(doc["validation"]),
            test=list(doc["test"]),
            seed=int(doc["seed"]),
            ratios=tuple(doc["ratios"]),
        )


def _validate_record(line_no: int, rec: dict) -> Sample:
    for key in ("id", "code", "label"):
        if key not in rec or not isinstance(rec[key], str) or not rec[key]:
            raise CorpusError(line_no, f"missing or empty field {key!r}")
    if rec["label"] not in LABELS:
        raise CorpusError(line_no, f"label must be one of {LABELS}, got {rec['label']!r}")
    vuln = rec.get("vuln_type")
    if vuln is not None and vuln not in VULN_TYPES:
        raise CorpusError(line_no, f"unknown vuln_type {vuln!r}")
    if rec["label"] == "insecure" and vuln is None:
        raise CorpusError(line_no, "insecure sample requires a vuln_type")
    origin = rec.get("origin", "imported")
    if origin not in ORIGINS:
        raise CorpusError(line_no, f"unknown origin {origin!r}")
    try:
        parse_source(rec["code"])
    except (LexError, ParseError) as exc:
        raise CorpusError(line_no, f"code does not parse: {exc}") from exc
    return Sample(
        id=rec["id"],
        code=rec["code"],
        label=rec["label"],
        vuln_type=vuln,
        origin=origin,
        pair_id=rec.get("pair_id"),
    )


def load_corpus(path) -> list[Sample]:
    """Read and validate an ndjson corpus; raises CorpusError with the line."""
    samples: list[Sample] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(line_no, f"invalid JSON: {exc}") from exc
            sample = _validate_record(line_no, rec)
            if sample.id in seen:
                raise CorpusError(line_no, f"duplicate sample id {sample.id!r}")
            seen.add(sample.id)
            samples.append(sample)
    # Cross-sample invariant: a secure sample's vuln_type must match its pair.
    by_pair: dict[str, list[Sample]] = {}
    for s in samples:
        if s.pair_id:
            by_pair.setdefault(s.pair_id, []).append(s)
    for pair in by_pair.values():
        insecure_types = {s.vuln_type for s in pair if s.label == "insecure"}
        for s in pair:
            if s.label == "secure" and s.vuln_type is not None and insecure_types and s.vuln_type not in insecure_types:
                idx = samples.index(s) + 1
                raise CorpusError(idx, f"secure sample {s.id!r} vuln_type differs from its pair")
    return samples


def save_corpus(samples: list[Sample], path):
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(json.dumps(s.to_record(), sort_keys=False) + "\n")


# --------------------------------------------------------------------------
# Synthetic pair generator
# --------------------------------------------------------------------------

_FUNC_NAMES = ("handle", "process", "update", "copy_block", "fill", "scan", "load", "store")
_ARRAY_NAMES = ("buf", "arr", "data", "vec", "slots")
_INDEX_NAMES = ("i", "j", "k", "pos")
_PTR_NAMES = ("p", "q", "ptr", "mem")
_MISC_NAMES = ("tmp", "val", "acc", "count", "extra", "m")
_PARAM_NAMES = ("n", "len2", "size", "amount")


class _NamePool:
    def __init__(self, rng: random.Random):
        self.rng = rng
        self.used: set[str] = set()

    def pick(self, pool: tuple[str, ...]) -> str:
        candidates = [p for p in pool if p not in self.used]
        if candidates:
            name = self.rng.choice(candidates)
        else:
            name = self.rng.choice(pool) + str(self.rng.randint(2, 9))
            while name in self.used:
                name += str(self.rng.randint(0, 9))
        self.used.add(name)
        return name


def _fillers(rng: random.Random, names: _NamePool) -> list[str]:
    """0..5 benign statements shared verbatim by both variants of a pair."""
    count = rng.randint(0, 5)
    lines: list[str] = []
    declared: list[str] = []
    for _ in range(count):
        kind = rng.choice(("decl", "decl", "update", "print"))
        if kind == "update" and declared:
            v = rng.choice(declared)
            op = rng.choice(("+", "-", "*"))
            lines.append(f"    {v} = {v} {op} {rng.randint(1, 9)};")
        elif kind == "print":
            lines.append(f'    printf("step {rng.randint(0, 99)}");')
        else:
            v = names.pick(_MISC_NAMES)
            declared.append(v)
            lines.append(f"    int {v} = {rng.randint(0, 99)};")
    return lines


def _buffer_overflow_pair(rng: random.Random) -> tuple[str, str]:
    names = _NamePool(rng)
    fn = names.pick(_FUNC_NAMES)
    param = names.pick(_PARAM_NAMES)
    arr = names.pick(_ARRAY_NAMES)
    idx = names.pick(_INDEX_NAMES)
    size = rng.randint(2, 64)
    fillers = _fillers(rng, names)

    def render(cmp: str) -> str:
        lines = [
            f"int {fn}(int {param}) {{",
            f"    int {arr}[{size}];",
            f"    int {idx};",
            *fillers,
            f"    {idx} = 0;",
            f"    while ({idx} {cmp} {size}) {{",
            f"        {arr}[{idx}] = {param};",
            f"        {idx} = {idx} + 1;",
            "    }",
            f"    return {arr}[0];",
            "}",
        ]
        return "\n".join(lines) + "\n"

    return render("<="), render("<")


def _null_deref_pair(rng: random.Random) -> tuple[str, str]:
    names = _NamePool(rng)
    fn = names.pick(_FUNC_NAMES)
    param = names.pick(_PARAM_NAMES)
    ptr = names.pick(_PTR_NAMES)
    size = rng.randint(2, 64)
    fillers = _fillers(rng, names)

    def render(guarded: bool) -> str:
        store = (
            f"    if ({ptr} != 0) {{\n        *{ptr} = {param};\n    }}"
            if guarded
            else f"    *{ptr} = {param};"
        )
        lines = [
            f"int {fn}(int {param}) {{",
            f"    int *{ptr};",
            *fillers,
            f"    {ptr} = malloc({size});",
            store,
            "    return 0;",
            "}",
        ]
        return "\n".join(lines) + "\n"

    return render(False), render(True)


def _memory_leak_pair(rng: random.Random) -> tuple[str, str]:
    names = _NamePool(rng)
    fn = names.pick(_FUNC_NAMES)
    param = names.pick(_PARAM_NAMES)
    ptr = names.pick(_PTR_NAMES)
    size = rng.randint(2, 64)
    threshold = rng.randint(0, 9)
    fillers = _fillers(rng, names)

    def render(freed_on_exit: bool) -> str:
        early = (
            f"    if ({param} < {threshold}) {{\n"
            + (f"        free({ptr});\n" if freed_on_exit else "")
            + "        return 0;\n    }"
        )
        lines = [
            f"int {fn}(int {param}) {{",
            f"    char *{ptr};",
            *fillers,
            f"    {ptr} = malloc({size});",
            early,
            f"    free({ptr});",
            "    return 1;",
            "}",
        ]
        return "\n".join(lines) + "\n"

    return render(False), render(True)


_TEMPLATES = {
    "buffer_overflow": _buffer_overflow_pair,
    "null_deref": _null_deref_pair,
    "memory_leak": _memory_leak_pair,
}


def generate_synthetic(n_pairs: int, seed: int) -> list[Sample]:
    """Deterministic pre-patch/post-patch pairs, one template family each.

    The insecure and secure variants share the pair_id and all randomized
    names and fillers; they differ by exactly one statement or condition.
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    rng = random.Random(seed)
    samples: list[Sample] = []
    for i in range(n_pairs):
        vuln = rng.choice(VULN_TYPES)
        insecure_code, secure_code = _TEMPLATES[vuln](rng)
        pair_id = f"pair{i:04d}"
        samples.append(
            Sample(f"{pair_id}-insecure", insecure_code, "insecure", vuln, "synthetic", pair_id)
        )
        samples.append(
            Sample(f"{pair_id}-secure", secure_code, "secure", vuln, "synthetic", pair_id)
        )
    return samples


# --------------------------------------------------------------------------
# Pair-granular stratified splitting
# --------------------------------------------------------------------------

def largest_remainder(n: int, ratios: tuple[float, ...]) -> list[int]:
    """Integer allocation of n items proportional to ratios, remainders largest-first."""
    quotas = [n * r for r in ratios]
    base = [int(q) for q in quotas]
    remainders = sorted(
        range(len(ratios)), key=lambda i: (-(quotas[i] - base[i]), i)
    )
    leftover = n - sum(base)
    for i in range(leftover):
        base[remainders[i]] += 1
    return base


def split(
    samples: list[Sample],
    seed: int,
    ratios: tuple[float, float, float] = (0.70, 0.15, 0.15),
) -> CorpusSplit:
    """Pair-stratified train/validation/test split.

    Groups samples by pair_id (unpaired samples form singleton groups),
    fixes exact per-split group counts by largest remainder over the whole
    corpus, then fills the splits stratum by stratum (vuln_type of the
    pair), clamping each stratum's allocation to remaining capacity.
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {ratios}")
    if any(r < 0 for r in ratios):
        raise ValueError("ratios must be non-negative")

    groups: dict[str, list[Sample]] = {}
    order: list[str] = []
    for s in samples:
        key = s.pair_id if s.pair_id else f"solo:{s.id}"
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(s)

    sizes = largest_remainder(len(order), ratios)
    for r, size in zip(ratios, sizes):
        if r > 0 and size == 0:
            raise SplitError(
                f"{len(order)} pair groups cannot fill all splits with ratios {ratios}"
            )

    def stratum_of(key: str) -> str:
        types = {s.vuln_type for s in groups[key] if s.vuln_type}
        return sorted(types)[0] if types else "none"

    strata: dict[str, list[str]] = {}
    for key in order:
        strata.setdefault(stratum_of(key), []).append(key)

    rng = random.Random(seed)
    remaining = list(sizes)
    assigned: list[list[str]] = [[], [], []]
    for stratum in sorted(strata):
        keys = strata[stratum]
        rng.shuffle(keys)
        want = largest_remainder(len(keys), ratios)
        take = [min(w, rem) for w, rem in zip(want, remaining)]
        spill = len(keys) - sum(take)
        while spill > 0:
            # Most spare capacity first; split index breaks ties.
            target = max(range(3), key=lambda i: (remaining[i] - take[i], -i))
            take[target] += 1
            spill -= 1
        pos = 0
        for split_idx in range(3):
            for key in keys[pos : pos + take[split_idx]]:
                assigned[split_idx].append(key)
            pos += take[split_idx]
            remaining[split_idx] -= take[split_idx]

    corpus_pos = {s.id: i for i, s in enumerate(samples)}

    def expand(keys: list[str]) -> list[str]:
        ids = [s.id for key in keys for s in groups[key]]
        return sorted(ids, key=lambda sid: corpus_pos[sid])

    return CorpusSplit(
        train=expand(assigned[0]),
        validation=expand(assigned[1]),
        test=expand(assigned[2]),
        seed=seed,
        ratios=tuple(ratios),
    )
