import numpy as np
import pytest

from bmac.netmodel import Network

# Filled by test_acceptance.py: criterion number -> (passed, detail).
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def random_psd(rng, n, trace=1.0, rank=None):
    a = crandn(rng, n, rank or n)
    m = a @ a.conj().T
    return m * (trace / np.trace(m).real)


def random_network(rng, L, nt=2, nr=2, phi=None, power=10.0, weights=None, **kw):
    nt = [nt] * L if np.isscalar(nt) else list(nt)
    nr = [nr] * L if np.isscalar(nr) else list(nr)
    H = [[crandn(rng, nr[l], nt[k]) for k in range(L)] for l in range(L)]
    if phi is None:
        phi = 1 - np.eye(L, dtype=int)
    if weights is None:
        weights = rng.uniform(0.5, 1.5, L)
    return Network(H=H, phi=phi, weights=weights, power=power, **kw)


def random_covs(rng, net, total=None, rank_drop=False):
    total = net.power if total is None else total
    share = rng.dirichlet(np.ones(net.L)) * total
    out = []
    for n, t in zip(net.nt, share):
        rank = int(rng.integers(1, n + 1)) if rank_drop else n
        out.append(random_psd(rng, n, t, rank))
    return out


def random_phi(rng, L, density=0.5):
    phi = (rng.random((L, L)) < density).astype(int)
    np.fill_diagonal(phi, 0)
    return phi


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
