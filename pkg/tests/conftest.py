import numpy as np
import pytest


class TableModel:
    """Toy language model whose next distribution depends only on the last token."""

    def __init__(self, table: np.ndarray):
        self.table = np.asarray(table, dtype=np.float64)

    def next_distribution(self, context):
        last = context[-1] if len(context) else 0
        return self.table[last]


def random_table(rng: np.random.Generator, v: int, peaked: bool = True) -> np.ndarray:
    t = rng.dirichlet(np.full(v, 0.3 if peaked else 1.0), size=v)
    # small EOS mass (id 1) so sequences usually run to the budget
    t[:, 1] *= 0.05
    return t / t.sum(axis=1, keepdims=True)


@pytest.fixture
def table_model():
    return TableModel


_CRITERIA = pytest.StashKey[dict]()


@pytest.fixture
def record_criterion(request):
    """Store a one-line verdict for the acceptance summary; returns the verdict."""
    results = request.config.stash.setdefault(_CRITERIA, {})

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        results[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_CRITERIA, {})
    if results:
        terminalreporter.write_sep("=", "acceptance criteria")
        for number in sorted(results):
            terminalreporter.write_line(results[number])
