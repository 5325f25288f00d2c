import random

from varstring.checks import (
    CheckResult,
    gelfand_dikii_checks,
    random_density,
    run_suite,
    s0_checks,
    string_checks,
)
from varstring.jetcalc import EPS, JetVar
from varstring.perturb import kdv, symbolic


def test_random_density_respects_bounds():
    rng = random.Random(0)
    for _ in range(20):
        d = random_density(rng, jet_order=3, eps_order=4)
        for m in d:
            for g, e in m:
                if isinstance(g, JetVar):
                    assert g.order <= 3
                elif g == EPS:
                    assert e in (2, 4)


def test_kdv_suite_passes():
    results = run_suite(kdv(), gd_pairs=10)
    assert results and all(r.passed for r in results)
    assert all(isinstance(r, CheckResult) for r in results)


def test_negative_control_fails():
    results = s0_checks(kdv(), e_offset=1)
    assert [r.passed for r in results] == [True, False]


def test_symbolic_model_skips_eps4():
    results = s0_checks(symbolic())
    assert results[1].passed and results[1].detail.startswith("skipped")
    assert any("N=2" in r.name and r.detail.startswith("skipped") for r in string_checks(symbolic()))


def test_gelfand_dikii_batch():
    (r,) = gelfand_dikii_checks(pairs=5, seed=1)
    assert r.passed and r.as_dict()["order"] == "5 pairs"
