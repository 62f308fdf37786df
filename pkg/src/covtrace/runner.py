"""Scenario loading, execution, and deterministic result serialization.

A scenario is a JSON document with a `kind` selecting the experiment family.
Running one produces a result bundle: a deterministic `result.json`, an
`entropy_timeline.csv` with one row per (epoch, observer), and a `meta.json`
holding timing information that is deliberately kept out of the result file
so repeated runs are byte-identical.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .chain import (
    ChainSpec,
    MeasurementStep,
    ORDER_TOL,
    bidirectional_scenario,
    build_entropy_report,
    measure_step,
    observer_state,
    prepare,
    projective_oracle,
    total_variation,
)
from .composite import (
    REGION_TOL,
    InteractionEvent,
    build_composite_model,
    covariant_collapse_chain,
    covariant_reduced_density,
    validate_region,
)
from .covariant import (
    Region,
    build_parametrized_particle,
    build_propagator,
    gaussian_profile,
    probability_region,
    project,
    slice_profile,
    slice_state,
)
from .errors import ConfigError
from .qlinalg import OverlapMatrix, von_neumann_entropy

log = logging.getLogger("covtrace")

KINDS = ("chain", "bidirectional", "covariant-single", "covariant-chain", "born-check")

CSV_HEADER = ("epoch_label", "observer_label", "entropy_bits")


@dataclass(frozen=True)
class TimelineRow:
    epoch: str
    observer: str
    entropy: float
    probabilities: tuple[float, ...]


@dataclass(frozen=True)
class ScenarioConfig:
    kind: str
    label: str
    seed: int
    raw: dict
    payload: dict = field(repr=False)


@dataclass(frozen=True)
class ResultBundle:
    label: str
    result: dict
    timeline: tuple[TimelineRow, ...]

    @property
    def verdicts(self) -> dict:
        return self.result.get("verdicts", {})

    @property
    def failed_verdicts(self) -> list[str]:
        return sorted(
            name for name, v in self.verdicts.items() if v.get("passed") is False
        )


# ---------------------------------------------------------------------------
# config parsing


def _fail(message: str, where: str):
    raise ConfigError(f"{where}: {message}", field=where)


def _get(doc: dict, key: str, where: str, required: bool = True, default=None):
    if key not in doc:
        if required:
            _fail("missing required field", f"{where}.{key}")
        return default
    return doc[key]


def _number(value, where) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(f"expected a number, got {value!r}", where)
    return float(value)


def _integer(value, where) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        _fail(f"expected an integer, got {value!r}", where)
    return int(value)


def _complex_entry(value, where) -> complex:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return complex(value)
    if (
        isinstance(value, list)
        and len(value) == 2
        and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)
    ):
        return complex(value[0], value[1])
    _fail(f"expected a number or [re, im] pair, got {value!r}", where)


def _complex_vector(value, where) -> np.ndarray:
    if not isinstance(value, list) or not value:
        _fail("expected a non-empty list", where)
    return np.array([_complex_entry(v, f"{where}[{k}]") for k, v in enumerate(value)])


def _complex_matrix(value, where) -> np.ndarray:
    if not isinstance(value, list) or not value:
        _fail("expected a non-empty nested list", where)
    rows = [_complex_vector(row, f"{where}[{k}]") for k, row in enumerate(value)]
    if len({r.size for r in rows}) != 1:
        _fail("rows have unequal lengths", where)
    return np.array(rows)


def _overlap(spec, where) -> OverlapMatrix:
    try:
        if spec == "identity":
            return OverlapMatrix.identity(2)
        if spec == "hadamard":
            return OverlapMatrix.hadamard()
        if isinstance(spec, dict) and "angle" in spec:
            return OverlapMatrix.rotation(_number(spec["angle"], f"{where}.angle"))
        if isinstance(spec, dict) and "matrix" in spec:
            return OverlapMatrix(_complex_matrix(spec["matrix"], f"{where}.matrix"))
    except ConfigError:
        raise
    except ValueError as exc:
        _fail(str(exc), where)
    _fail(
        "expected 'identity', 'hadamard', {'angle': x}, or {'matrix': [[...]]}", where
    )


def _steps(value, where) -> tuple[MeasurementStep, ...]:
    if not isinstance(value, list) or not value:
        _fail("expected a non-empty list of steps", where)
    out = []
    for k, item in enumerate(value):
        here = f"{where}[{k}]"
        if not isinstance(item, dict):
            _fail("expected an object with label and overlap", here)
        label = _get(item, "label", here)
        if not isinstance(label, str) or not label:
            _fail("label must be a non-empty string", f"{here}.label")
        out.append(MeasurementStep(label, _overlap(_get(item, "overlap", here), f"{here}.overlap")))
    return tuple(out)


def _chain_spec(doc: dict, where: str) -> ChainSpec:
    alpha = _complex_vector(_get(doc, "alpha", where), f"{where}.alpha")
    steps = _steps(_get(doc, "steps", where), f"{where}.steps")
    try:
        return ChainSpec(alpha, steps)
    except ValueError as exc:
        _fail(str(exc), where)


def _lattice_params(doc, where) -> dict:
    if not isinstance(doc, dict):
        _fail("expected an object", where)
    out = {
        "nx": _integer(_get(doc, "nx", where), f"{where}.nx"),
        "dx": _number(_get(doc, "dx", where), f"{where}.dx"),
        "nt": _integer(_get(doc, "nt", where), f"{where}.nt"),
        "dt": _number(_get(doc, "dt", where), f"{where}.dt"),
        "mass": _number(_get(doc, "mass", where, required=False, default=1.0), f"{where}.mass"),
    }
    pot = _get(doc, "potential", where, required=False)
    if pot is None or pot == "zero":
        out["potential"] = None
    elif isinstance(pot, dict) and "harmonic" in pot:
        omega = _number(pot["harmonic"], f"{where}.potential.harmonic")
        out["potential"] = ("harmonic", omega)
    elif isinstance(pot, list):
        out["potential"] = np.array(
            [_number(v, f"{where}.potential[{k}]") for k, v in enumerate(pot)]
        )
    else:
        _fail("expected 'zero', {'harmonic': omega}, or an array", f"{where}.potential")
    return out


def _resolve_potential(params: dict):
    pot = params["potential"]
    if isinstance(pot, tuple) and pot[0] == "harmonic":
        omega, mass = pot[1], params["mass"]
        return lambda x: 0.5 * mass * omega**2 * x**2
    return pot


def _initial_profile(doc, lattice, where) -> np.ndarray:
    if isinstance(doc, dict) and "gaussian" in doc:
        g = doc["gaussian"]
        here = f"{where}.gaussian"
        return gaussian_profile(
            lattice,
            center=_number(_get(g, "center", here), f"{here}.center"),
            width=_number(_get(g, "width", here), f"{here}.width"),
            momentum=_number(_get(g, "momentum", here, required=False, default=0.0), f"{here}.momentum"),
        )
    try:
        return slice_profile(lattice, _complex_vector(doc, where))
    except ValueError as exc:
        _fail(str(exc), where)


def _events(value, where) -> tuple[InteractionEvent, ...]:
    if value is None:
        return ()
    if not isinstance(value, list):
        _fail("expected a list of interaction events", where)
    out = []
    for k, item in enumerate(value):
        here = f"{where}[{k}]"
        if not isinstance(item, dict):
            _fail("expected an object", here)
        observer = _get(item, "observer", here)
        time_index = _integer(_get(item, "time", here), f"{here}.time")
        cells = _get(item, "cells", here, required=False)
        basis = _get(item, "basis", here, required=False)
        try:
            if cells is not None:
                cells = tuple(
                    tuple(_integer(x, f"{here}.cells[{i}][{j}]") for j, x in enumerate(cell))
                    for i, cell in enumerate(cells)
                )
                out.append(InteractionEvent(observer, time_index, regions=cells))
            else:
                out.append(
                    InteractionEvent(
                        observer,
                        time_index,
                        basis=_complex_matrix(basis, f"{here}.basis")
                        if basis is not None
                        else None,
                    )
                )
        except ConfigError:
            raise
        except ValueError as exc:
            _fail(str(exc), here)
    return tuple(out)


def _region(doc, nx: int, where) -> tuple[str, Region]:
    if not isinstance(doc, dict):
        _fail("expected an object", where)
    label = _get(doc, "label", where)
    xs = _get(doc, "xs", where, required=False)
    x_indices = (
        range(nx) if xs is None else [_integer(x, f"{where}.xs[{k}]") for k, x in enumerate(xs)]
    )
    if "t" in doc:
        ts = [_integer(doc["t"], f"{where}.t")]
    elif "t_range" in doc:
        tr = doc["t_range"]
        if not isinstance(tr, list) or len(tr) != 2:
            _fail("t_range must be [first, last]", f"{where}.t_range")
        lo = _integer(tr[0], f"{where}.t_range[0]")
        hi = _integer(tr[1], f"{where}.t_range[1]")
        if hi < lo:
            _fail("t_range must be increasing", f"{where}.t_range")
        ts = list(range(lo, hi + 1))
    else:
        _fail("a region needs 't' or 't_range'", where)
    try:
        return str(label), Region.rect(x_indices, ts)
    except ValueError as exc:
        _fail(str(exc), where)


def _sweep_block(doc, where) -> dict:
    if not isinstance(doc, dict):
        _fail("expected an object", where)
    dims = _get(doc, "dims", where, required=False, default=[2, 5])
    if not (isinstance(dims, list) and len(dims) == 2):
        _fail("dims must be [low, high]", f"{where}.dims")
    lo = _integer(dims[0], f"{where}.dims[0]")
    hi = _integer(dims[1], f"{where}.dims[1]")
    if not 2 <= lo <= hi:
        _fail("dims must satisfy 2 <= low <= high", f"{where}.dims")
    steps = _integer(_get(doc, "steps", where, required=False, default=2), f"{where}.steps")
    if steps < 2:
        _fail("a sweep chain needs at least 2 steps", f"{where}.steps")
    trials = _get(doc, "trials", where, required=False)
    out = {"dims": (lo, hi), "steps": steps}
    if trials is not None:
        out["trials"] = _integer(trials, f"{where}.trials")
    return out


def shipped_scenarios() -> dict[str, str]:
    """Names and contents of the scenario files bundled with the package."""
    root = resources.files("covtrace") / "scenarios"
    return {
        path.name[: -len(".cfg")]: path.read_text()
        for path in sorted(root.iterdir(), key=lambda p: p.name)
        if path.name.endswith(".cfg")
    }


def load_config(source) -> ScenarioConfig:
    """Parse and validate a scenario from a path, shipped name, or dict."""
    if isinstance(source, dict):
        doc = source
        default_label = "scenario"
    else:
        path = Path(source)
        if path.is_file():
            text = path.read_text()
        else:
            bundled = shipped_scenarios()
            if path.name in bundled or path.stem in bundled:
                text = bundled[path.stem if path.stem in bundled else path.name]
            else:
                _fail(f"no such file or bundled scenario: {source}", "scenario")
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(
                f"scenario is not valid JSON: line {exc.lineno}, column {exc.colno}: {exc.msg}",
                field="scenario",
            ) from exc
        default_label = path.stem
    if not isinstance(doc, dict):
        _fail("top level must be an object", "scenario")

    kind = _get(doc, "kind", "scenario")
    if kind not in KINDS:
        _fail(f"unknown kind {kind!r}; expected one of {', '.join(KINDS)}", "scenario.kind")
    label = doc.get("label", default_label)
    if not isinstance(label, str) or not label:
        _fail("label must be a non-empty string", "scenario.label")
    seed = _integer(doc.get("seed", 0), "scenario.seed")
    if seed < 0:
        _fail("seed must be non-negative", "scenario.seed")

    payload: dict = {}
    if kind == "chain":
        if "sweep" in doc:
            payload["sweep"] = _sweep_block(doc["sweep"], "scenario.sweep")
        if "alpha" in doc or "steps" in doc or "sweep" not in doc:
            payload["spec"] = _chain_spec(doc, "scenario")
    elif kind == "bidirectional":
        alpha = _complex_vector(_get(doc, "alpha", "scenario"), "scenario.alpha")
        for side in ("right", "left"):
            steps = _steps(_get(doc, side, "scenario"), f"scenario.{side}")
            try:
                payload[side] = ChainSpec(alpha, steps)
            except ValueError as exc:
                _fail(str(exc), f"scenario.{side}")
        expect = doc.get("expect_consistent")
        if expect is not None and not isinstance(expect, bool):
            _fail("expect_consistent must be a boolean", "scenario.expect_consistent")
        payload["expect_consistent"] = expect
    elif kind in ("covariant-single", "covariant-chain"):
        params = _lattice_params(_get(doc, "lattice", "scenario"), "scenario.lattice")
        events = _events(_get(doc, "events", "scenario", required=False), "scenario.events")
        lattice, _ = build_parametrized_particle(
            params["nx"], params["dx"], params["nt"], params["dt"], params["mass"]
        )
        profile = _initial_profile(_get(doc, "initial", "scenario"), lattice, "scenario.initial")
        try:
            model = build_composite_model(
                params["nx"],
                params["dx"],
                params["nt"],
                params["dt"],
                mass=params["mass"],
                potential=_resolve_potential(params),
                initial_profile=profile,
                events=events,
            )
        except ValueError as exc:
            _fail(str(exc), "scenario")
        payload["model"] = model
        if kind == "covariant-single":
            payload["region"] = _region(_get(doc, "region", "scenario"), params["nx"], "scenario.region")
        else:
            regions_doc = _get(doc, "regions", "scenario")
            if not isinstance(regions_doc, list) or len(regions_doc) < 2:
                _fail("expected at least two regions", "scenario.regions")
            payload["regions"] = [
                _region(r, params["nx"], f"scenario.regions[{k}]")
                for k, r in enumerate(regions_doc)
            ]
    elif kind == "born-check":
        params = _lattice_params(_get(doc, "lattice", "scenario"), "scenario.lattice")
        lattice, hamiltonian = build_parametrized_particle(
            params["nx"],
            params["dx"],
            params["nt"],
            params["dt"],
            params["mass"],
            _resolve_potential(params),
        )
        payload["lattice"] = lattice
        payload["hamiltonian"] = hamiltonian
        payload["profile"] = _initial_profile(
            _get(doc, "initial", "scenario"), lattice, "scenario.initial"
        )
        payload["initial_slice"] = _integer(
            doc.get("initial_slice", 0), "scenario.initial_slice"
        )
        probe = _get(doc, "probe", "scenario")
        payload["probe"] = (
            _integer(_get(probe, "x", "scenario.probe"), "scenario.probe.x"),
            _integer(_get(probe, "t", "scenario.probe"), "scenario.probe.t"),
        )
        windows = _get(doc, "windows", "scenario")
        if not isinstance(windows, list) or len(windows) < 3:
            _fail("expected at least three [x_points, t_points] windows", "scenario.windows")
        parsed = []
        for k, w in enumerate(windows):
            here = f"scenario.windows[{k}]"
            if not (isinstance(w, list) and len(w) == 2):
                _fail("window must be [x_points, t_points]", here)
            wx, wt = _integer(w[0], f"{here}[0]"), _integer(w[1], f"{here}[1]")
            if wx < 1 or wt < 2 or wx % 2 == 0 or wt % 2 == 0:
                _fail("window sizes must be odd, with at least 2 time slices", here)
            parsed.append((wx, wt))
        areas = [wx * wt for wx, wt in parsed]
        if any(b >= a for a, b in zip(areas, areas[1:])):
            _fail("windows must strictly shrink", "scenario.windows")
        payload["windows"] = parsed

    return ScenarioConfig(kind, label, seed, doc, payload)


# ---------------------------------------------------------------------------
# serialization helpers


def sanitize(value):
    """Convert nested results into plain JSON-serializable data."""
    if isinstance(value, dict):
        return {str(k): sanitize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [sanitize(v) for v in value]
    if isinstance(value, (bool, type(None), str, int)):
        return value
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value) + 0.0
    if isinstance(value, (complex, np.complexfloating)):
        return [float(value.real) + 0.0, float(value.imag) + 0.0]
    if isinstance(value, np.ndarray):
        return [sanitize(v) for v in value.tolist()]
    raise TypeError(f"cannot serialize {type(value)!r}")


def result_json_text(result: dict) -> str:
    return json.dumps(sanitize(result), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _fmt(x: float) -> str:
    return f"{float(x) + 0.0:.17g}"


def timeline_csv_text(rows) -> str:
    width = max((len(r.probabilities) for r in rows), default=0)
    header = list(CSV_HEADER) + [f"p{k}" for k in range(width)]
    lines = [",".join(header)]
    for r in rows:
        probs = [_fmt(p) for p in r.probabilities]
        probs += [""] * (width - len(probs))
        lines.append(",".join([r.epoch, r.observer, _fmt(r.entropy)] + probs))
    return "\n".join(lines) + "\n"


def _verdict(passed, value, tolerance, **extra) -> dict:
    out = {
        "passed": None if passed is None else bool(passed),
        "value": float(value),
        "tolerance": float(tolerance),
    }
    out.update(extra)
    return out


# ---------------------------------------------------------------------------
# scenario execution


def _report_fields(report) -> dict:
    return {
        "entropies": dict(report.entropies),
        "distributions": {k: list(v) for k, v in report.distributions.items()},
        "order": [list(g) for g in report.order],
        "order_text": report.order_text(),
    }


def _run_chain(config: ScenarioConfig, tol: float | None) -> ResultBundle:
    spec: ChainSpec = config.payload["spec"]
    state = prepare(spec)
    rows = []
    purity = []
    observers = list(spec.labels)
    dims = {step.label: step.overlap.dim for step in spec.steps}

    def snapshot(epoch, current):
        done = {s.label for s in current.steps}
        for label in observers:
            if label in done:
                rho = observer_state(current, label)
                entropy, probs = von_neumann_entropy(rho), tuple(rho.diagonal())
            else:
                # the register has not been adjoined yet: still the sharp
                # fiducial record
                entropy, probs = 0.0, (1.0,) + (0.0,) * (dims[label] - 1)
            rows.append(TimelineRow(epoch, label, entropy, probs))

    snapshot("initial", state)
    for step in spec.steps:
        state = measure_step(state, step)
        purity.append(von_neumann_entropy(state.psi.density()))
        snapshot(f"after_{step.label}", state)

    final = {label: observer_state(state, label) for label in observers}
    report = build_entropy_report(final)
    oracle = projective_oracle(spec, list(spec.labels))
    tv = max(total_variation(report.distributions[o], oracle[o]) for o in observers)
    measured = [report.entropies[s.label] for s in spec.steps]
    slack = min((b - a for a, b in zip(measured, measured[1:])), default=0.0)

    tv_tol = tol if tol is not None else 1e-9
    slack_tol = tol if tol is not None else 1e-9
    purity_tol = tol if tol is not None else 1e-9
    result = {
        "kind": config.kind,
        "label": config.label,
        "observers": observers,
        **_report_fields(report),
        "checks": {
            "oracle_tv": tv,
            "monotonicity_slack": slack,
            "max_state_entropy": max(purity),
        },
        "verdicts": {
            "oracle_equivalence": _verdict(tv < tv_tol, tv, tv_tol),
            "monotonicity": _verdict(slack >= -slack_tol, slack, slack_tol),
            "global_purity": _verdict(max(purity) < purity_tol, max(purity), purity_tol),
        },
        "parameters": config.raw,
    }
    return ResultBundle(config.label, result, tuple(rows))


def _run_bidirectional(config: ScenarioConfig, tol: float | None) -> ResultBundle:
    spec_right: ChainSpec = config.payload["right"]
    spec_left: ChainSpec = config.payload["left"]
    outcome = bidirectional_scenario(spec_right, spec_left)

    rows = []
    all_observers = list(spec_right.labels) + list(spec_left.labels)
    latest = {
        step.label: (0.0, (1.0,) + (0.0,) * (step.overlap.dim - 1))
        for spec in (spec_right, spec_left)
        for step in spec.steps
    }

    def snapshot(epoch, current):
        done = {s.label for s in current.steps} if current is not None else set()
        for label in done:
            rho = observer_state(current, label)
            latest[label] = (von_neumann_entropy(rho), tuple(rho.diagonal()))
        for label in all_observers:
            entropy, probs = latest[label]
            rows.append(TimelineRow(epoch, label, entropy, probs))

    snapshot("initial", None)
    for side, spec in (("right", spec_right), ("left", spec_left)):
        state = prepare(spec)
        for step in spec.steps:
            state = measure_step(state, step)
            snapshot(f"{side}:after_{step.label}", state)

    entropies = {}
    distributions = {}
    for side in ("right", "left"):
        report = getattr(outcome, side)
        entropies.update(report.entropies)
        distributions.update({k: list(v) for k, v in report.distributions.items()})

    result = {
        "kind": config.kind,
        "label": config.label,
        "observers": all_observers,
        "entropies": entropies,
        "distributions": distributions,
        "branches": {
            "right": {"order": [list(g) for g in outcome.right.order],
                      "order_text": outcome.right.order_text()},
            "left": {"order": [list(g) for g in outcome.left.order],
                     "order_text": outcome.left.order_text()},
        },
        "consistent": outcome.consistent,
        "witness": list(outcome.witness) if outcome.witness is not None else None,
        "best_deviation": outcome.best_deviation,
        "checks": {"best_deviation": outcome.best_deviation},
        "verdicts": {},
        "parameters": config.raw,
    }
    expected = config.payload.get("expect_consistent")
    if expected is not None:
        result["verdicts"]["consistency_as_expected"] = _verdict(
            outcome.consistent == expected,
            outcome.best_deviation,
            tol if tol is not None else ORDER_TOL,
            expected_consistent=expected,
        )
    return ResultBundle(config.label, result, tuple(rows))


def _initial_rows(observers, model) -> list[TimelineRow]:
    rows = []
    for obs in observers:
        dim = model.lattice.pointer_dims[model.lattice.pointer_axis(obs) - 2]
        rows.append(TimelineRow("initial", obs, 0.0, (1.0,) + (0.0,) * (dim - 1)))
    return rows


def _run_covariant_single(config: ScenarioConfig, tol: float | None) -> ResultBundle:
    model = config.payload["model"]
    label, region = config.payload["region"]
    if not region.is_slice:
        _fail("the region must sit on a single time slice", "scenario.region")
    observers = list(model.observers)

    validity = validate_region(model, region)
    restricted = model.restrict(region)
    t_index = region.t_span[0]
    slice_vals = model.history().values[:, t_index]

    rows = _initial_rows(observers, model)
    entropies = {}
    distributions = {}
    distance = 0.0
    for obs in observers:
        got = covariant_reduced_density(model, restricted, region, obs, validity)
        axis = model.lattice.pointer_axis(obs) - 1
        moved = np.moveaxis(slice_vals, axis, slice_vals.ndim - 1)
        flat = moved.reshape(-1, moved.shape[-1])
        standard = flat.T @ flat.conj()
        standard = standard / np.trace(standard).real
        distance = max(distance, float(np.linalg.norm(got.rho.mat - standard)))
        entropies[obs] = got.entropy
        distributions[obs] = list(got.rho.diagonal())
        rows.append(TimelineRow(label, obs, got.entropy, tuple(got.rho.diagonal())))

    d_tol = tol if tol is not None else 1e-12
    result = {
        "kind": config.kind,
        "label": config.label,
        "observers": observers,
        "region": {"label": label, "t": t_index},
        "entropies": entropies,
        "distributions": distributions,
        "checks": {
            "frobenius_distance": distance,
            "factorization_residual": validity.residual,
        },
        "verdicts": {
            "region_valid": _verdict(validity.valid, validity.residual, REGION_TOL),
            "matches_standard_trace": _verdict(distance < d_tol, distance, d_tol),
        },
        "parameters": config.raw,
    }
    return ResultBundle(config.label, result, tuple(rows))


def _run_covariant_chain(config: ScenarioConfig, tol: float | None) -> ResultBundle:
    model = config.payload["model"]
    labels = [lab for lab, _ in config.payload["regions"]]
    regions = [region for _, region in config.payload["regions"]]
    chain = covariant_collapse_chain(model, regions, labels)
    observers = list(model.observers)

    rows = []
    for lab in labels:
        for obs in observers:
            state = chain.states[lab][obs]
            rows.append(
                TimelineRow(lab, obs, state.entropy, tuple(state.rho.diagonal()))
            )

    persistence = 0.0
    for gap, event in enumerate(model.events):
        mats = [chain.states[lab][event.observer].rho.mat for lab in labels[gap + 1 :]]
        for made, later in zip(mats, mats[1:]):
            persistence = max(persistence, float(np.linalg.norm(later - made)))

    checks = []
    for c in chain.checks:
        checks.append(
            {
                "from": c.source_observer,
                "to": c.target_observer,
                "tv": c.tv,
                "unitarity_residual": c.amplitudes.unitarity_residual,
                "stochastic_residual": c.amplitudes.stochastic_residual,
                "weights": list(c.weights),
                "predicted": list(c.predicted),
                "observed": list(c.observed),
                "downgraded": c.downgraded,
            }
        )
    worst_tv = max((c.tv for c in chain.checks), default=0.0)
    worst_unitarity = max(
        (c.amplitudes.unitarity_residual for c in chain.checks), default=0.0
    )
    slack = min(chain.monotonicity.values(), default=0.0)

    tv_tol = tol if tol is not None else 1e-6
    unit_tol = tol if tol is not None else 1e-6
    slack_tol = tol if tol is not None else 1e-9
    persist_tol = tol if tol is not None else 1e-9
    verdicts = {
        "regions_valid": _verdict(
            True,
            max(chain.states[lab][o].validity.residual for lab in labels for o in observers)
            if observers
            else 0.0,
            REGION_TOL,
        ),
        "record_persistence": _verdict(
            persistence < persist_tol, persistence, persist_tol
        ),
        "transition_unitarity": _verdict(
            worst_unitarity < unit_tol, worst_unitarity, unit_tol
        ),
    }
    if chain.downgraded:
        verdicts["transition_consistency"] = _verdict(
            None, worst_tv, tv_tol, downgraded=True
        )
        verdicts["monotonicity"] = _verdict(None, slack, slack_tol, downgraded=True)
    else:
        verdicts["transition_consistency"] = _verdict(worst_tv < tv_tol, worst_tv, tv_tol)
        verdicts["monotonicity"] = _verdict(slack >= -slack_tol, slack, slack_tol)

    result = {
        "kind": config.kind,
        "label": config.label,
        "observers": observers,
        "regions": {
            lab: {
                "residual": validate_region(model, region).residual,
                "interaction_free": validate_region(model, region).interaction_free,
            }
            for lab, region in zip(labels, regions)
        },
        **_report_fields(chain.report),
        "region_entropies": {
            lab: {obs: chain.states[lab][obs].entropy for obs in observers}
            for lab in labels
        },
        "transition_checks": checks,
        "monotonicity": dict(chain.monotonicity),
        "downgraded": chain.downgraded,
        "checks": {
            "worst_tv": worst_tv,
            "worst_unitarity_residual": worst_unitarity,
            "monotonicity_slack": slack,
            "record_persistence": persistence,
        },
        "verdicts": verdicts,
        "parameters": config.raw,
    }
    return ResultBundle(config.label, result, tuple(rows))


def _run_born_check(config: ScenarioConfig, tol: float | None) -> ResultBundle:
    lattice = config.payload["lattice"]
    kernel = build_propagator(lattice, config.payload["hamiltonian"])
    phi = project(
        slice_state(lattice, config.payload["profile"], config.payload["initial_slice"]),
        kernel,
    )
    x0, t0 = config.payload["probe"]
    if not (0 <= x0 < lattice.nx and 0 <= t0 < lattice.nt):
        _fail("probe point is outside the lattice", "scenario.probe")
    density = abs(phi.values[x0, t0]) ** 2

    windows = []
    for wx, wt in config.payload["windows"]:
        xs = range(x0 - wx // 2, x0 + wx // 2 + 1)
        ts = range(t0 - wt // 2, t0 + wt // 2 + 1)
        region = Region.rect(xs, ts)
        raw_region = Region.rect(xs, ts, normalization="raw")
        p = probability_region(region, phi, kernel)
        volume = region.measure(lattice)
        windows.append(
            {
                "x_points": wx,
                "t_points": wt,
                "volume": volume,
                "probability": p,
                "probability_raw": probability_region(raw_region, phi, kernel),
                "born_ratio": p / (volume * density),
            }
        )

    deviations = [abs(w["born_ratio"] - 1.0) for w in windows]
    band = tol if tol is not None else 0.05
    monotone = all(b <= a + 1e-12 for a, b in zip(deviations, deviations[1:]))
    result = {
        "kind": config.kind,
        "label": config.label,
        "observers": [],
        "probe": {"x": x0, "t": t0, "density": density},
        "windows": windows,
        "checks": {"deviations": deviations},
        "verdicts": {
            "born_smallest_window": _verdict(deviations[-1] <= band, deviations[-1], band),
            "born_deviation_monotone": _verdict(
                monotone, max(deviations), band, deviations=deviations
            ),
        },
        "parameters": config.raw,
    }
    return ResultBundle(config.label, result, ())


def run_scenario(config: ScenarioConfig, tol: float | None = None) -> ResultBundle:
    """Execute a parsed scenario and build its result bundle."""
    log.info("running scenario %s (kind=%s)", config.label, config.kind)
    runner = {
        "chain": _run_chain,
        "bidirectional": _run_bidirectional,
        "covariant-single": _run_covariant_single,
        "covariant-chain": _run_covariant_chain,
        "born-check": _run_born_check,
    }[config.kind]
    bundle = runner(config, tol)
    for name, verdict in sorted(bundle.verdicts.items()):
        log.debug("verdict %s: %s", name, verdict)
    return bundle


# ---------------------------------------------------------------------------
# sweeps


def _haar_unitary(rng, n: int) -> np.ndarray:
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def run_sweep(config: ScenarioConfig, trials: int, seed: int, tol: float | None = None) -> ResultBundle:
    """Randomized chains, aggregating entropy slack and oracle deviations.

    Trial k draws everything from a generator seeded with seed + k, so the
    aggregate is independent of execution order.
    """
    if config.kind != "chain" or "sweep" not in config.payload:
        raise ConfigError("sweep requires a chain scenario with a sweep block", field="scenario.sweep")
    if trials < 1:
        raise ConfigError("trials must be at least 1", field="trials")
    lo, hi = config.payload["sweep"]["dims"]
    n_steps = config.payload["sweep"]["steps"]

    slacks = []
    tvs = []
    for k in range(trials):
        rng = np.random.default_rng(seed + k)
        dim = int(rng.integers(lo, hi + 1))
        amps = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
        alpha = amps / np.linalg.norm(amps)
        steps = [MeasurementStep("O0", OverlapMatrix.identity(dim))]
        steps += [
            MeasurementStep(f"O{j}", OverlapMatrix(_haar_unitary(rng, dim)))
            for j in range(1, n_steps)
        ]
        spec = ChainSpec(alpha, tuple(steps))
        state = prepare(spec)
        for step in spec.steps:
            state = measure_step(state, step)
        final = {label: observer_state(state, label) for label in spec.labels}
        report = build_entropy_report(final)
        oracle = projective_oracle(spec, list(spec.labels))
        tvs.append(
            max(total_variation(report.distributions[o], oracle[o]) for o in spec.labels)
        )
        entropies = [report.entropies[s.label] for s in spec.steps]
        slacks.append(min(b - a for a, b in zip(entropies, entropies[1:])))

    def agg(xs):
        return {"min": float(min(xs)), "max": float(max(xs)), "mean": float(np.mean(xs))}

    slack_tol = tol if tol is not None else 1e-9
    tv_tol = tol if tol is not None else 1e-9
    result = {
        "kind": "sweep",
        "label": config.label,
        "trials": trials,
        "seed": seed,
        "dims": [lo, hi],
        "steps": n_steps,
        "aggregates": {
            "monotonicity_slack": agg(slacks),
            "oracle_tv": agg(tvs),
        },
        "verdicts": {
            "monotonicity": _verdict(min(slacks) >= -slack_tol, min(slacks), slack_tol),
            "oracle_equivalence": _verdict(max(tvs) < tv_tol, max(tvs), tv_tol),
        },
        "parameters": config.raw,
    }
    return ResultBundle(config.label, result, ())


# ---------------------------------------------------------------------------
# output


def write_outputs(bundle: ResultBundle, out_dir, fmt: str = "both", meta: dict | None = None):
    """Persist the bundle; returns the list of files written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if fmt in ("json", "both"):
        path = out / "result.json"
        path.write_text(result_json_text(bundle.result))
        written.append(path)
    if fmt in ("csv", "both"):
        path = out / "entropy_timeline.csv"
        path.write_text(timeline_csv_text(bundle.timeline))
        written.append(path)
    if meta is not None:
        path = out / "meta.json"
        path.write_text(json.dumps(sanitize(meta), sort_keys=True, indent=2) + "\n")
        written.append(path)
    for path in written:
        log.info("wrote %s", path)
    return written
