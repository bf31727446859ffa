import numpy as np
import pytest

from pulsesqueeze.spin import operator_matrices


def dense_moments(n, psi):
    """Brute-force <S_a> and <{S_a, S_b}/2> from dense operator matrices."""
    ops = operator_matrices(n)
    s = [ops["x"], ops["y"], ops["z"]]
    mean = np.array([np.vdot(psi, o @ psi).real for o in s])
    second = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            sym = 0.5 * (s[i] @ s[j] + s[j] @ s[i])
            second[i, j] = np.vdot(psi, sym @ psi).real
    return mean, second


def dense_expm(h, t, terms=30):
    """exp(-i h t) by scaling-and-squaring of a truncated Taylor series."""
    a = -1j * t * np.asarray(h, dtype=complex)
    norm = np.linalg.norm(a, 1)
    squarings = max(0, int(np.ceil(np.log2(norm))) + 4) if norm > 0 else 0
    a = a / 2**squarings
    out = np.eye(a.shape[0], dtype=complex)
    term = np.eye(a.shape[0], dtype=complex)
    for k in range(1, terms):
        term = term @ a / k
        out = out + term
    for _ in range(squarings):
        out = out @ out
    return out


def phase_distance(a, b):
    """1 - |<a|b>| for unit vectors: zero iff equal up to global phase."""
    return 1.0 - abs(np.vdot(a, b))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
