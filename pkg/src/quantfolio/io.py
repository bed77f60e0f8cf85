"""JSON definitions of markets and strategies."""

from __future__ import annotations

import json
import os

import numpy as np

from .errors import DimensionMismatch, ValidationError
from .market import ConeConstraint, MarketModel, PiecewiseCurve
from .strategies import (
    Equilibrium,
    FractionalKelly,
    GeneralAffine,
    Naive,
    PreCommitted,
    ScaledInsurance,
    ZeroInvestment,
)

BENCHMARK_MARKET = {
    "horizon": 1.0,
    "assets": 1,
    "factors": 1,
    "r": 0.0,
    "b": {"breakpoints": [0.0, 1.0], "values": [[0.08]]},
    "sigma": {"breakpoints": [0.0, 1.0], "values": [[[0.2]]]},
    "constraint_matrix": [],
}


def read_json(source):
    """A dict, an inline JSON string, or a path to a JSON file."""
    if isinstance(source, dict):
        return source
    text = str(source).strip()
    if text.startswith("{"):
        return json.loads(text)
    with open(os.fspath(source)) as fh:
        return json.load(fh)


def parse_curve(spec, horizon, shape):
    """Build a curve whose values have ``shape``; a bare number or array is constant."""
    if not isinstance(spec, dict):
        value = np.asarray(spec, dtype=float).reshape(shape)
        return PiecewiseCurve.constant(horizon, value)
    bp = np.asarray(spec["breakpoints"], dtype=float)
    values = np.asarray(spec["values"], dtype=float)
    n = bp.size - 1
    kind = spec.get("kind", "constant")
    try:
        if kind == "linear":
            if values.size == (n + 1) * int(np.prod(shape)):
                return PiecewiseCurve.piecewise_linear(bp, values.reshape((n + 1,) + shape))
            return PiecewiseCurve.piecewise_linear(bp, values.reshape((n, 2) + shape))
        if kind != "constant":
            raise ValidationError(f"unknown curve kind {kind!r}")
        return PiecewiseCurve.piecewise_constant(bp, values.reshape((n,) + shape))
    except ValueError as exc:
        raise DimensionMismatch(f"curve values do not fit shape {shape}: {exc}") from exc


def load_market(source=None):
    """Market from JSON; ``None`` gives the one-asset benchmark (b=0.08, sigma=0.2, T=1)."""
    d = BENCHMARK_MARKET if source is None else read_json(source)
    T = float(d["horizon"])
    m = int(d.get("assets", 1))
    k = int(d.get("factors", m))
    Q = d.get("constraint_matrix", d.get("constraint", []))
    if Q == "no_short_sales":
        Q = np.eye(m)
    Q = np.asarray(Q if Q is not None else [], dtype=float)
    if Q.size == 0:
        cone = ConeConstraint.unconstrained(m)
    else:
        if Q.ndim == 1:
            if Q.size % m:
                raise DimensionMismatch("flat constraint matrix length is not a multiple of assets")
            Q = Q.reshape(-1, m)
        cone = ConeConstraint(Q)
    return MarketModel(
        horizon=T,
        r=parse_curve(d.get("r", 0.0), T, ()),
        b=parse_curve(d["b"], T, (m,)),
        sigma=parse_curve(d["sigma"], T, (m, k)),
        constraint=cone,
    )


def load_strategy(source, horizon=None, num_assets=None, anchor_x=None):
    """Strategy from its JSON definition.

    ``anchor_x`` fills in the pre-committed anchor wealth when the definition
    leaves it out. Curves in zero-investment and affine rules need ``horizon``
    and ``num_assets`` only when given as bare constants.
    """
    d = read_json(source)
    kind = d.get("kind")
    shape = (num_assets,) if num_assets else (-1,)
    if kind == "equilibrium":
        return Equilibrium(float(d["xi"]))
    if kind == "scaled":
        return ScaledInsurance(float(d["xi"]), float(d["scale"]))
    if kind == "fractional_kelly":
        return FractionalKelly(float(d["gamma"]))
    if kind == "naive":
        return Naive(float(d["xi"]))
    if kind == "precommitted":
        x0 = d.get("anchor_x", anchor_x)
        if x0 is None:
            raise ValidationError("pre-committed strategy needs an anchor wealth")
        return PreCommitted(float(d["xi"]), float(x0), float(d.get("anchor_t", 0.0)))
    if kind == "zero_investment":
        x0 = d.get("anchor_x", anchor_x)
        if x0 is None:
            raise ValidationError("zero-investment strategy needs an anchor wealth")
        theta = d.get("theta")
        return ZeroInvestment(float(x0), None if theta is None else parse_curve(theta, horizon, shape))
    if kind == "affine":
        return GeneralAffine(parse_curve(d["theta0"], horizon, shape), parse_curve(d["theta1"], horizon, shape))
    raise ValidationError(f"unknown strategy kind {kind!r}")
