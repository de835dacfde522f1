"""Answer extraction from free text and exact-match judging.

Correctness rules per answer type: integers compare numerically, floats
within a 1e-4 relative error, booleans case-insensitively, and node lists
as sets (Neighbor/Predecessor) or exact sequences (BFS).
"""

from __future__ import annotations

import json
import re
from collections import Counter, defaultdict
from dataclasses import dataclass

from .tasks import OUT_OF_DOMAIN_TASKS, AnswerType, TaskKind

FLOAT_REL_TOL = 1e-4
#: floor on the relative-error denominator so gold = 0 stays judgeable
REL_TOL_FLOOR = 1e-12


class EvaluationError(ValueError):
    """Bad manifest/dataset inputs."""


@dataclass(frozen=True)
class Judgement:
    parsed: bool
    correct: bool
    reason: str  # exact | float-tol | set-eq | seq-eq | mismatch | unparseable

    def __post_init__(self):
        if self.correct and not self.parsed:
            raise ValueError("correct implies parsed")


def extract_boxed(text: str):
    """Content of the last \\boxed{...}, brace balanced; None if absent."""
    marker = "\\boxed{"
    start = text.rfind(marker)
    if start < 0:
        return None
    depth = 1
    i = start + len(marker)
    out = []
    while i < len(text):
        ch = text[i]
        if ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return "".join(out)
        out.append(ch)
        i += 1
    return None  # unbalanced


def _parse_number(raw):
    cleaned = raw.strip().strip(".").replace(",", "").replace("$", "")
    try:
        return float(cleaned)
    except ValueError:
        return None


def _parse_node_list(raw):
    cleaned = raw.strip()
    cleaned = cleaned.lstrip("[").rstrip("]").strip()
    if not cleaned:
        return []
    parts = re.split(r"[,\s]+", cleaned)
    out = []
    for p in parts:
        if not p:
            continue
        try:
            out.append(int(float(p)))
        except ValueError:
            return None
    return out


def parse_answer(raw, answer_type: AnswerType):
    """Parse raw boxed text into a typed value; None when unparseable."""
    if raw is None:
        return None
    if answer_type == AnswerType.BOOLEAN:
        word = raw.strip().strip(".").lower()
        if word == "true":
            return True
        if word == "false":
            return False
        return None
    if answer_type == AnswerType.NODE_LIST:
        return _parse_node_list(raw)
    num = _parse_number(raw)
    if num is None:
        return None
    if answer_type == AnswerType.INTEGER:
        return num  # numeric equality against the integer gold
    return num


def exact_match(raw, gold, kind: TaskKind | None = None) -> Judgement:
    """Judge a raw answer string against a typed gold value.

    `kind` selects node-list semantics: BFS answers must match the exact
    sequence, other list tasks compare as sets.
    """
    answer_type = _gold_type(gold, kind)
    value = parse_answer(raw, answer_type)
    if value is None:
        return Judgement(parsed=False, correct=False, reason="unparseable")
    if answer_type == AnswerType.BOOLEAN:
        ok = value == gold
        return Judgement(True, ok, "exact" if ok else "mismatch")
    if answer_type == AnswerType.NODE_LIST:
        if kind == TaskKind.BFS:
            ok = list(value) == list(gold)
            return Judgement(True, ok, "seq-eq" if ok else "mismatch")
        ok = set(value) == set(gold)
        return Judgement(True, ok, "set-eq" if ok else "mismatch")
    if answer_type == AnswerType.INTEGER:
        ok = value == gold
        return Judgement(True, ok, "exact" if ok else "mismatch")
    rel = abs(value - gold) / max(abs(gold), REL_TOL_FLOOR)
    ok = rel < FLOAT_REL_TOL
    return Judgement(True, ok, "float-tol" if ok else "mismatch")


def _gold_type(gold, kind):
    if kind is not None:
        return kind.answer_type
    if isinstance(gold, bool):
        return AnswerType.BOOLEAN
    if isinstance(gold, (list, tuple)):
        return AnswerType.NODE_LIST
    if isinstance(gold, float):
        return AnswerType.FLOAT
    return AnswerType.INTEGER


def judge_text(text, gold, kind: TaskKind | None = None) -> Judgement:
    """Extract the boxed answer from free text and judge it."""
    return exact_match(extract_boxed(text), gold, kind)


@dataclass
class AccuracyReport:
    overall: float
    total: int
    correct: int
    per_task: dict
    in_domain: float | None
    out_of_domain: float | None

    def to_json(self):
        return json.dumps(
            {
                "overall": self.overall,
                "total": self.total,
                "correct": self.correct,
                "per_task": self.per_task,
                "in_domain": self.in_domain,
                "out_of_domain": self.out_of_domain,
            },
            indent=2,
            sort_keys=True,
        )

    def to_table(self):
        rows = [("task", "correct", "total", "accuracy")]
        for task in sorted(self.per_task):
            stats = self.per_task[task]
            rows.append(
                (task, str(stats["correct"]), str(stats["total"]), f"{stats['accuracy']:.2f}%")
            )
        rows.append(("overall", str(self.correct), str(self.total), f"{self.overall:.2f}%"))
        widths = [max(len(r[i]) for r in rows) for i in range(4)]
        lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)) for row in rows]
        if self.in_domain is not None:
            lines.append(f"in-domain: {self.in_domain:.2f}%")
        if self.out_of_domain is not None:
            lines.append(f"out-of-domain: {self.out_of_domain:.2f}%")
        return "\n".join(lines)


def evaluate_run(manifest_rows, dataset_by_id) -> AccuracyReport:
    """Judge every manifest row against its dataset instance.

    `manifest_rows` need `id` and `chosen` (raw answer text); correctness is
    re-derived here rather than trusted from the manifest.
    """
    rows = list(manifest_rows)
    if not rows:
        raise EvaluationError("empty manifest")
    per_task = defaultdict(Counter)
    for row in rows:
        inst_id = row["id"]
        if inst_id not in dataset_by_id:
            raise EvaluationError(f"manifest references unknown instance {inst_id!r}")
        inst = dataset_by_id[inst_id]
        kind = TaskKind(inst["task"])
        gold = gold_from_record(inst)
        judgement = exact_match(row.get("chosen"), gold, kind)
        per_task[kind.value]["total"] += 1
        per_task[kind.value]["correct"] += int(judgement.correct)
    total = sum(c["total"] for c in per_task.values())
    correct = sum(c["correct"] for c in per_task.values())

    def pct(c, t):
        return 100.0 * c / t if t else None

    in_tasks = [k for k in per_task if TaskKind(k) not in OUT_OF_DOMAIN_TASKS]
    out_tasks = [k for k in per_task if TaskKind(k) in OUT_OF_DOMAIN_TASKS]
    return AccuracyReport(
        overall=pct(correct, total),
        total=total,
        correct=correct,
        per_task={
            k: {
                "total": per_task[k]["total"],
                "correct": per_task[k]["correct"],
                "accuracy": pct(per_task[k]["correct"], per_task[k]["total"]),
            }
            for k in sorted(per_task)
        },
        in_domain=pct(
            sum(per_task[k]["correct"] for k in in_tasks),
            sum(per_task[k]["total"] for k in in_tasks),
        ),
        out_of_domain=pct(
            sum(per_task[k]["correct"] for k in out_tasks),
            sum(per_task[k]["total"] for k in out_tasks),
        ),
    )


def gold_from_record(record):
    """Typed gold value from a serialized instance record."""
    kind = TaskKind(record["task"])
    raw = record["answer"]
    if kind.answer_type == AnswerType.BOOLEAN:
        return raw == "True" if isinstance(raw, str) else bool(raw)
    if kind.answer_type == AnswerType.NODE_LIST:
        return _parse_node_list(raw) if isinstance(raw, str) else list(raw)
    if kind.answer_type == AnswerType.INTEGER:
        return int(float(raw))
    return float(raw)
