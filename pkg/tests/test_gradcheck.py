import numpy as np
import pytest

from mvrank import gradcheck


def test_rel_error_basics():
    a = [np.array([1.0, 2.0])]
    assert gradcheck.rel_error(a, a) == 0.0
    assert gradcheck.rel_error([np.zeros(2)], [np.zeros(2)]) == 0.0
    assert gradcheck.rel_error([np.array([1.0])], [np.array([-1.0])]) == pytest.approx(2.0)


def test_numeric_grad_of_quadratic_restores_inputs():
    x = np.array([1.0, -2.0, 0.5])
    before = x.copy()
    (g,) = gradcheck.numeric_grad(lambda: float(np.sum(x ** 3)), [x], 1e-5)
    assert np.allclose(g, 3 * before ** 2, rtol=1e-8)
    assert np.array_equal(x, before)


def test_check_result_flags_nan():
    assert not gradcheck.CheckResult("s", 0, float("nan"), 1e-4).passed
    assert gradcheck.CheckResult("s", 0, 1e-6, 1e-4).passed


def test_run_all_covers_every_suite_and_passes():
    results = gradcheck.run_all(n=20, seed=0)
    summary = gradcheck.summarize(results)
    assert set(summary) == {"mlp", "trace_ratio_mvccae", "trace_ratio_mvmdae", "autoencoder", "composed_mvccae",
                            "composed_mvmdae", "composed_dmvdr", "dmvdr_heads"}
    for suite, (passed, total, worst) in summary.items():
        assert total >= 20 and passed == total, (suite, worst)
