import numpy as np
import pytest

from ar2lab.problem_gen import GroundTruth, rng_for


def orthonormal(rows, r, rng):
    Q, _ = np.linalg.qr(rng.standard_normal((rows, r)))
    return Q


def planted(m, n, sigma, seed):
    """GroundTruth with prescribed singular values and random subspaces."""
    rng = rng_for(seed, 77)
    sigma = np.asarray(sigma, dtype=float)
    U, V = orthonormal(m, len(sigma), rng), orthonormal(n, len(sigma), rng)
    return GroundTruth.from_matrix((U * sigma) @ V.T, len(sigma))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance verdict lines, echoed after the run so they show up without -s
_VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    def emit(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} | {detail}"
        _VERDICTS.append(line)
        print(line)
    return emit


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
