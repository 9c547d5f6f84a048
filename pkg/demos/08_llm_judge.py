"""Accuracy judging with a replayed judge transcript.

The judge prompt asks for a one-token verdict in a JSON block; items whose
verdict cannot be parsed are excluded from the denominator. The bundled
50-item fixture has a hand-planned outcome: 32 aligned, 16 not aligned,
2 judge errors.
"""
import tempfile

from glarify import judge_accuracy
from glarify.analysis import read_judge_items
from glarify.fixtures import build_judge_fixture
from glarify.llm_client import ReplayChatClient

items_path, transcript_path, expected = build_judge_fixture(tempfile.mkdtemp())
items = read_judge_items(items_path)
print(f"{len(items)} items, e.g.: {items[0].question!r} / reference {items[0].reference_answer!r}")

report = judge_accuracy(items, ReplayChatClient(transcript_path))
print(f"\naligned:     {report.aligned}")
print(f"not aligned: {report.not_aligned}")
print(f"judge errors (excluded from denominator): {report.errors}")
print(f"aggregate accuracy: {report.aligned}/{report.judged} = {report.aggregate:.4f}")
print(f"matches the fixture's hand count: {report.aligned == expected['aligned']}")

# Eval subsets come from the seeded sampler; see demos/04 for dataset
# synthesis and the CLI's `sample` subcommand for the file-level flow.
