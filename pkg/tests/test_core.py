import math

import pytest

from dynalloc.core import (DETERMINISTIC, AlwaysOn, Batching, DualBothDynamic, DualOneAlways, HoldOn,
                           InstabilityError, Metrics, ParameterError, ProactiveUnlimited, ReactiveUnlimited,
                           StateDepRates, SystemParams, check_stable, objective, stability_limit)


def test_objective_examples():
    p = SystemParams(0.5, 1.0, 2.0, 1.0)
    assert objective(Metrics(2.0, 1.0), p) == 2.0
    assert objective(Metrics(3.0, 0.875), p) == 2.375
    assert objective(Metrics(123.0, 0.4), p.replace(omega=0.0)) == 0.4


@pytest.mark.parametrize("kw", [dict(lam=0), dict(lam=-1), dict(lam=1, mu=0), dict(lam=1, delta=-1),
                                dict(lam=1, omega=-0.1), dict(lam=math.nan)])
def test_params_rejected(kw):
    with pytest.raises(ParameterError):
        SystemParams(**kw)


def test_params_replace_keeps_validation():
    p = SystemParams(0.5)
    assert p.replace(lam=0.7).lam == 0.7
    with pytest.raises(ParameterError):
        p.replace(mu=-1)


@pytest.mark.parametrize("make", [lambda: HoldOn(k=0), lambda: HoldOn(k=1.5), lambda: HoldOn(t=-1),
                                  lambda: Batching(0), lambda: DualOneAlways(3, 2), lambda: DualOneAlways(0, 2),
                                  lambda: DualOneAlways(2, 2, 2.0, 1.0), lambda: StateDepRates(()),
                                  lambda: StateDepRates((2.0, 1.0)), lambda: ReactiveUnlimited(0),
                                  lambda: AlwaysOn(0)])
def test_invalid_policies(make):
    with pytest.raises(ParameterError):
        make()


def test_deterministic_shape_allowed():
    assert HoldOn(DETERMINISTIC, 4.0).k == math.inf


def test_stability_limits():
    p = SystemParams(0.5, 1.5)
    assert stability_limit(AlwaysOn(3), p) == 4.5
    assert stability_limit(HoldOn(), p) == 1.5
    assert stability_limit(DualOneAlways(2, 3, 1.0, 2.5), p) == 2.5
    assert stability_limit(DualBothDynamic(), p) == 3.0
    assert stability_limit(StateDepRates((1.0, 2.0)), p) == 2.0
    assert stability_limit(ProactiveUnlimited(), p) == math.inf


def test_check_stable():
    check_stable(0.99, 1.0)
    with pytest.raises(InstabilityError, match="unstable"):
        check_stable(1.0, 1.0)
    assert issubclass(InstabilityError, ParameterError)
