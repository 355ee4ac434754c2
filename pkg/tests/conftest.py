import warnings

import pytest

# Frozen oracle values, computed with mpmath at 40 digits from the closed
# forms (independent of the package code paths).
PAPER_HALF_HBAR_OMEGA = 2.53e-3  # eV
PAPER_HBAR_OMEGA = 5.06e-3  # eV
PAPER_DELTA_U = 6.68e-2  # eV
OMEGA_A_PAPER = 7687493286860.404647  # rad/s
D_300K = 0.025934479759142717  # eV
KAPPA_T0 = 4.1769309486895746  # 1/s
KAPPA_300K = 93107185420.16268  # 1/s
BARRIER_RATIO_T0 = 26.403162055335968
COTH_1 = 1.3130352854993313
GAMMA_OVER_OMEGA_ELECTRON = 4.817299934854273e-11
MB8_REFERENCE = 0.0010521660088978728  # m=1, w_b=1, gamma=0.5, D=0.2, dU=1, C=1


@pytest.fixture
def quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        yield
