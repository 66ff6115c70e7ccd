import hypothesis.strategies as st
import pytest
from hypothesis import settings

from mlceval.dataset import AlignedPairs
from mlceval.labelspace import DEFAULT_SCHEMA, LabelSchema, LabelSet

settings.register_profile("default", deadline=None)
settings.load_profile("default")

NAMES = ("A", "B", "C", "D", "E", "F")


def schema_of(L: int) -> LabelSchema:
    return DEFAULT_SCHEMA if L == 4 else LabelSchema(NAMES[:L])


@st.composite
def paired_sets(draw, L=None, max_n=6, min_n=1):
    """(schema, [(truth_mask, pred_mask), ...])."""
    if L is None:
        L = draw(st.integers(1, 3))
    schema = schema_of(L)
    mask = st.integers(0, (1 << L) - 1)
    raw = draw(st.lists(st.tuples(mask, mask), min_size=min_n, max_size=max_n))
    return schema, raw


def to_pairs(schema, raw) -> AlignedPairs:
    return AlignedPairs.from_sets(schema, [(LabelSet(t, schema.L), LabelSet(p, schema.L)) for t, p in raw])


def to_frozensets(schema, raw):
    def fs(mask):
        return frozenset(lab for i, lab in enumerate(schema.labels) if mask >> (schema.L - 1 - i) & 1)
    return [fs(t) for t, _ in raw], [fs(p) for _, p in raw]


@pytest.fixture
def schema():
    return DEFAULT_SCHEMA


ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
