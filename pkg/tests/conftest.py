import numpy as np
import pytest

from tsa_lab import network as nn
from tsa_lab.stats import ClassStats


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_stats(rng, C, K, scale=1.0):
    """Enabled class statistics with random mean shifts and PSD covariances."""
    s = ClassStats.zeros(C, K)
    s.count_s[:] = 3
    s.count_t[:] = 3
    s.mu_s = rng.normal(size=(C, K))
    s.mu_t = s.mu_s + rng.normal(size=(C, K))
    A = rng.normal(size=(C, K, K))
    s.sigma_t = scale * np.einsum("cij,ckj->cik", A, A) / K
    return s.finalize()


def random_net(rng, widths=(4,), C=3, input_dim=2, bias_sd=0.3):
    p = nn.init_params(input_dim, widths, C, rng)
    for _, b in p.layers:
        b[:] = rng.normal(scale=bias_sd, size=b.shape)
    p.head_b[:] = rng.normal(scale=bias_sd, size=C)
    return p


ACCEPTANCE_LINES = []


def record_criterion(number, title, ok, detail):
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] C{number} {title}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1][1:])):
            terminalreporter.write_line(line)
