import math

import numpy as np
import pytest

import perhom

COSINE = {"kind": "periodic_cosine", "dimension": 1, "value_range": [1.0, 3.0]}


def test_potential_matches_cosine():
    x = np.linspace(-1.0, 1.0, 9)
    v = perhom.eval_potential(COSINE, 0, x)
    assert np.allclose(v, 2.0 + np.cos(2 * np.pi * x), atol=1e-14)


def test_oracle_flat_value():
    v = perhom.hbar_1d_first_order(lambda x: 2.0 + math.cos(2 * math.pi * x), 1.0, 2.0, 0.0)
    assert v == pytest.approx(-1.0, abs=1e-12)


def test_reference_and_periodized_constant_medium():
    cfg = {"env": {"kind": "constant", "value_range": [2.0, 2.0]}, "p": 0.0, "L": 4.0}
    assert perhom.hbar(cfg) == pytest.approx(-2.0, abs=1e-12)
    out = perhom.hbar_l(cfg)
    assert out["converged"]
    assert out["value"] == pytest.approx(-2.0, abs=1e-6)
    assert out["corrector"].shape == (4 * 32,)


def test_elliptic_single_shot():
    env = {"kind": "constant", "value_range": [0.0, 0.0]}
    cfg = {"env": env, "model": {"a": 2.0, "f": 6.0}, "p": 1.0}
    assert perhom.fbar(cfg) == pytest.approx(6.0 - 2.0, abs=1e-10)
    # F0 equal to F makes the blend exact.
    cfg = {"env": env, "model": {"a": 2.0, "F0_coefficient": 2.0}, "p": 1.0, "L": 4.0}
    assert perhom.fbar_l(cfg)["value"] == pytest.approx(-2.0, abs=1e-10)


def test_rate_fit_and_schedules():
    fit = perhom.fit_rate([(L, 3.0 * L ** (-1.0 / 12.0)) for L in (8, 16, 32, 64)])
    assert fit["slope"] == pytest.approx(-1.0 / 12.0, abs=1e-12)
    assert perhom.eta_schedule_hjb(4096.0, 0.5) == (0.25, True)
    eta, clamped = perhom.eta_schedule_elliptic(1e-3, 1)
    assert eta == pytest.approx(0.1) and not clamped
    assert perhom.cutoff(0.1, 0.425) == pytest.approx(0.5)


def test_study_rows(tmp_path):
    cfg = {
        "env": {"kind": "constant", "value_range": [1.0, 1.0]},
        "p_list": [0.0],
        "L_list": [4, 8],
        "seeds": [1],
        "output": {"csv": str(tmp_path / "s.csv")},
    }
    res = perhom.run_study(cfg)
    assert len(res["rows"]) == 2
    assert (tmp_path / "s.csv").read_text().startswith("seed,")


def test_errors_map_to_python_exceptions():
    with pytest.raises(ValueError):
        perhom.eta_schedule_hjb(0.5, 0.5)
    with pytest.raises(OSError):
        perhom.read_phf1("/nonexistent/file.phf1")
