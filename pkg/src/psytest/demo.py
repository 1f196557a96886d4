"""Demo questionnaire fixtures for seed-demo and manual exploration.

Item phrasings are written for this repo in the style of public-domain
personality inventories; no psychometric fidelity is claimed.
"""

from __future__ import annotations

from .container import ManifestDraft, build_test_package, new_draft
from .schema import Item, TestDefinition

AGREEMENT_SCALE = (
    "Disagree strongly",
    "Disagree a little",
    "Neither agree nor disagree",
    "Agree a little",
    "Agree strongly",
)

_BIG_FIVE_STYLE_PROMPTS = (
    "I am the life of the party.",
    "I sympathize with others' feelings.",
    "I get chores done right away.",
    "I have frequent mood swings.",
    "I have a vivid imagination.",
    "I don't talk a lot.",
    "I am not really interested in others.",
    "I often forget to put things back in their proper place.",
    "I am relaxed most of the time.",
    "I am not interested in abstract ideas.",
)

_DARK_TRIAD_STYLE_PROMPTS = (
    "I tend to manipulate others to get my way.",
    "I have used flattery to get my way.",
    "I tend to lack remorse.",
    "I tend to be callous or insensitive.",
    "I tend to want others to admire me.",
    "I tend to want others to pay attention to me.",
    "I tend to expect special favors from others.",
    "People see me as a natural leader.",
    "I like to get revenge on authorities.",
)


def _likert_items(prefix: str, prompts: tuple[str, ...]) -> tuple[Item, ...]:
    return tuple(
        Item(
            item_id=f"{prefix}-{i + 1:02d}",
            kind="likert",
            prompt=prompt,
            options=AGREEMENT_SCALE,
            capture_latency=True,
        )
        for i, prompt in enumerate(prompts)
    )


def big_five_style() -> TestDefinition:
    return TestDefinition(
        test_id="big-five-style",
        title="Short personality inventory (Big-Five-style)",
        description="Ten agreement-scale statements covering five broad traits.",
        items=_likert_items("bf", _BIG_FIVE_STYLE_PROMPTS),
    )


def dark_triad_style() -> TestDefinition:
    return TestDefinition(
        test_id="dark-triad-style",
        title="Short personality inventory (Dark-Triad-style)",
        description="Nine agreement-scale statements on manipulative tendencies.",
        items=_likert_items("dt", _DARK_TRIAD_STYLE_PROMPTS),
    )


def demo_tests() -> list[TestDefinition]:
    return [big_five_style(), dark_triad_style()]


def build_demo_package(draft: ManifestDraft | None = None) -> bytes:
    draft = draft or new_draft(description="Demo questionnaire battery")
    return build_test_package(draft, demo_tests(), {})
