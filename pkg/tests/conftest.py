import numpy as np
import pytest

from skewparity import _backend, _kernels_py
from skewparity import budgeting, risk
from skewparity.mixture import MixtureModel

RHO = np.array([[1.0, 0.5, 0.2], [0.5, 1.0, 0.4], [0.2, 0.4, 1.0]])
WEEK = 1.0 / 52.0

try:
    from skewparity import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None


@pytest.fixture(params=["compiled", "python"])
def backend(request, monkeypatch):
    """Run a test once per kernel implementation."""
    if request.param == "compiled":
        if _compiled is None:
            pytest.skip("compiled kernels not built")
        k = _compiled
    else:
        k = _kernels_py
    for mod in (risk, budgeting, _backend):
        monkeypatch.setattr(mod, "kernels", k)
    return request.param


@pytest.fixture
def example1():
    return MixtureModel.from_volatilities(
        0.25, [0.10, 0.15, 0.20], [0.20, 0.25, 0.30], RHO,
        [-0.10] * 3, [0.20] * 3, np.full((3, 3), 0.5) + 0.5 * np.eye(3),
    )


@pytest.fixture
def example2():
    return MixtureModel.from_volatilities(
        0.25, [0.03, 0.08, 0.12], [0.08, 0.20, 0.30], RHO,
        [-0.15, -0.40, 0.0], [0.15, 0.20, 0.10],
        [[1.0, 0.5, 0.0], [0.5, 1.0, 0.0], [0.0, 0.0, 1.0]],
    )


@pytest.fixture
def weekly3():
    """Weekly bonds / equities / carry model, pi = 0.5% per week."""
    corr = [[1.0, -0.368, -0.2517], [-0.368, 1.0, 0.5743], [-0.2517, 0.5743, 1.0]]
    corr_j = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.6045], [0.0, 0.6045, 1.0]]
    return MixtureModel.from_volatilities(
        0.005, [0.0538, 0.0789, 0.1010], [0.0417, 0.1564, 0.0291], corr,
        [0.0, -0.012, -0.0223], [0.0, 0.0676, 0.0257], corr_j,
    )


def random_model(rng, n, lam=None, jump_scale=1.0):
    """Random valid model with moderate parameters."""
    a = rng.normal(size=(n, n))
    vols = rng.uniform(0.05, 0.35, n)
    c = a @ a.T + n * np.eye(n)
    d = np.sqrt(np.diag(c))
    sigma = c / np.outer(d, d) * np.outer(vols, vols)
    b = rng.normal(size=(n, n))
    jv = rng.uniform(0.02, 0.25, n) * jump_scale
    cj = b @ b.T + 0.5 * np.eye(n)
    dj = np.sqrt(np.diag(cj))
    sigma_t = cj / np.outer(dj, dj) * np.outer(jv, jv)
    return MixtureModel(
        rng.uniform(0.02, 0.3) if lam is None else lam,
        rng.uniform(-0.05, 0.15, n),
        sigma,
        rng.uniform(-0.4, 0.05, n) * jump_scale,
        sigma_t,
    )


# --- acceptance summary --------------------------------------------------------

ACCEPTANCE = {}


def record(criterion: int, label: str, ok: bool, detail: str = ""):
    ACCEPTANCE.setdefault(criterion, []).append((label, bool(ok), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        checks = ACCEPTANCE[k]
        status = "PASS" if all(ok for _, ok, _ in checks) else "FAIL"
        failed = [f"{lab} ({det})" for lab, ok, det in checks if not ok]
        line = f"criterion {k}: {status} [{sum(ok for _, ok, _ in checks)}/{len(checks)} checks]"
        if failed:
            line += " failed: " + "; ".join(failed)
        terminalreporter.write_line(line)
