"""Model documents: JSON parsing, validation, serialization, canonical suite.

One document format feeds both the analytic engine and the simulator:

    {
      "version": 1,
      "environment": {
        "kernel": [[{"weight": w, "law": {"family": str, "params": [...]}}, ...], ...],
        "repairs": [law, ...],
        "initial": [...]
      },
      "states": [
        {
          "map": {"d0": [[...]], "marks": [[[...]], ...]}
            -- or -- "components": [{"d0": [[...]], "d1": [[...]]}, ...],
          "service": [law, ...],
          "resources": {"arrival": [[law, ...], ...], "served": [[law, ...], ...]}
        }, ...
      ],
      "analysis": {...}, "simulation": {...}
    }

Validation reports the JSON path of the offending field.  Strict mode
rejects unknown keys; lenient mode warns about them.  The resources
block is optional (defaults to a zero scalar resource per type).
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ModelValidationError
from .laws import (FAMILIES, Law, ResourceVectorLaw, SubDistribution, deterministic,
                   erlang, exponential, hyperexponential, uniform)
from .mapproc import MarkedMap, SingleMap, poisson_map, superpose
from .model import Model, StateModel

FORMAT_VERSION = 1

_LAW_BUILDERS = {
    "exponential": lambda p: exponential(*p),
    "erlang": lambda p: erlang(*p),
    "deterministic": lambda p: deterministic(*p),
    "uniform": lambda p: uniform(*p),
    "hyperexponential": lambda p: hyperexponential(p[: len(p) // 2], p[len(p) // 2:]),
}

_LAW_ARITY = {"exponential": 1, "erlang": 2, "deterministic": 1, "uniform": 2}


@dataclass(frozen=True)
class AnalysisConfig:
    """Analytic-pipeline knobs carried by a model document."""

    grid_step: float = None
    horizon: float = None
    cutoff: int = 30
    t_points: tuple = ()
    z_points: tuple = ()


@dataclass(frozen=True)
class SimulationConfig:
    """Simulator knobs carried by a model document."""

    replications: int = 200
    seed: int = 20260817
    warmup: float = 20.0
    horizon: float = 50.0


@dataclass(frozen=True)
class ModelDocument:
    """A parsed model file: the model plus its run configuration."""

    model: Model
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    name: str = ""

    def with_overrides(self, **kwargs):
        """Copy with analysis/simulation fields replaced (CLI flags).

        Both configs carry a ``horizon``; plain ``horizon`` targets the
        analysis one, ``sim_horizon`` the simulation one.
        """
        analysis = self.analysis
        sim = self.simulation
        for k, v in kwargs.items():
            if v is None:
                continue
            if k == "sim_horizon":
                sim = replace(sim, horizon=v)
            elif hasattr(analysis, k):
                analysis = replace(analysis, **{k: v})
            elif hasattr(sim, k):
                sim = replace(sim, **{k: v})
            else:
                raise KeyError(k)
        return replace(self, analysis=analysis, simulation=sim)


def _fail(path, msg):
    raise ModelValidationError(f"{path}: {msg}")


def _want_dict(obj, path):
    if not isinstance(obj, dict):
        _fail(path, f"expected an object, got {type(obj).__name__}")
    return obj


def _want_list(obj, path, length=None):
    if not isinstance(obj, list):
        _fail(path, f"expected an array, got {type(obj).__name__}")
    if length is not None and len(obj) != length:
        _fail(path, f"expected {length} entries, got {len(obj)}")
    return obj


def _want_number(obj, path):
    if isinstance(obj, bool) or not isinstance(obj, (int, float)):
        _fail(path, f"expected a number, got {type(obj).__name__}")
    return float(obj)


def _want_keys(obj, path, allowed, required, strict):
    missing = [k for k in required if k not in obj]
    if missing:
        _fail(path, f"missing required key '{missing[0]}'")
    unknown = [k for k in obj if k not in allowed]
    if unknown:
        if strict:
            _fail(path, f"unknown key '{unknown[0]}' (strict mode)")
        warnings.warn(f"{path}: ignoring unknown key '{unknown[0]}'", stacklevel=2)


def _parse_law(obj, path, strict):
    _want_dict(obj, path)
    _want_keys(obj, path, {"family", "params"}, {"family", "params"}, strict)
    family = obj["family"]
    if family not in FAMILIES:
        _fail(f"{path}.family", f"unknown law family '{family}'; expected one of {FAMILIES}")
    params = _want_list(obj["params"], f"{path}.params")
    values = [_want_number(p, f"{path}.params[{i}]") for i, p in enumerate(params)]
    if family == "erlang":
        if values and values[0] != int(values[0]):
            _fail(f"{path}.params[0]", f"erlang shape must be an integer, got {values[0]}")
        values[0] = int(values[0])
    if family in _LAW_ARITY and len(values) != _LAW_ARITY[family]:
        _fail(f"{path}.params", f"{family} takes {_LAW_ARITY[family]} parameters, got {len(values)}")
    if family == "hyperexponential" and (len(values) < 2 or len(values) % 2):
        _fail(f"{path}.params", "hyperexponential takes an even number of parameters (weights then rates)")
    try:
        return _LAW_BUILDERS[family](values)
    except ModelValidationError as exc:
        _fail(path, str(exc))


def _parse_matrix(obj, path, rows=None, cols=None):
    mat = _want_list(obj, path, rows)
    out = []
    width = cols
    for i, row in enumerate(mat):
        row = _want_list(row, f"{path}[{i}]", width)
        width = len(row) if width is None else width
        out.append([_want_number(v, f"{path}[{i}][{j}]") for j, v in enumerate(row)])
    return np.array(out, dtype=float)


def _parse_map(obj, path, strict):
    _want_dict(obj, path)
    if "components" in obj:
        _want_keys(obj, path, {"components"}, {"components"}, strict)
        comps = _want_list(obj["components"], f"{path}.components")
        if not comps:
            _fail(f"{path}.components", "need at least one component")
        singles = []
        for i, comp in enumerate(comps):
            cpath = f"{path}.components[{i}]"
            _want_dict(comp, cpath)
            _want_keys(comp, cpath, {"d0", "d1"}, {"d0", "d1"}, strict)
            d0 = _parse_matrix(comp["d0"], f"{cpath}.d0")
            d1 = _parse_matrix(comp["d1"], f"{cpath}.d1", rows=d0.shape[0], cols=d0.shape[0])
            try:
                singles.append(SingleMap(d0, d1))
            except ModelValidationError as exc:
                _fail(cpath, str(exc))
        try:
            return superpose(singles)
        except ModelValidationError as exc:
            _fail(f"{path}.components", str(exc))
    _want_keys(obj, path, {"d0", "marks"}, {"d0", "marks"}, strict)
    d0 = _parse_matrix(obj["d0"], f"{path}.d0")
    m = d0.shape[0]
    marks_obj = _want_list(obj["marks"], f"{path}.marks")
    if not marks_obj:
        _fail(f"{path}.marks", "need at least one mark matrix (customer type)")
    marks = [_parse_matrix(mk, f"{path}.marks[{r}]", rows=m, cols=m)
             for r, mk in enumerate(marks_obj)]
    try:
        return MarkedMap(d0, tuple(marks))
    except ModelValidationError as exc:
        _fail(path, str(exc))


def _parse_resource_side(obj, path, n_types, strict):
    lists = _want_list(obj, path, n_types)
    out = []
    dim = None
    for r, comp_list in enumerate(lists):
        comp_list = _want_list(comp_list, f"{path}[{r}]", dim)
        if not comp_list:
            _fail(f"{path}[{r}]", "need at least one resource component")
        dim = len(comp_list)
        laws = tuple(_parse_law(c, f"{path}[{r}][{ci}]", strict) for ci, c in enumerate(comp_list))
        out.append(ResourceVectorLaw(laws))
    return tuple(out)


def _parse_state(obj, path, strict):
    _want_dict(obj, path)
    _want_keys(obj, path, {"map", "components", "service", "resources"}, {"service"}, strict)
    if ("map" in obj) == ("components" in obj):
        _fail(path, "give exactly one of 'map' or 'components'")
    arrivals = _parse_map(obj["map"] if "map" in obj else {"components": obj["components"]},
                          f"{path}.map" if "map" in obj else path, strict)
    kt = arrivals.n_types
    service_obj = _want_list(obj["service"], f"{path}.service", kt)
    service = tuple(_parse_law(s, f"{path}.service[{r}]", strict) for r, s in enumerate(service_obj))
    if "resources" in obj:
        res = _want_dict(obj["resources"], f"{path}.resources")
        _want_keys(res, f"{path}.resources", {"arrival", "served"}, {"arrival", "served"}, strict)
        arrival_res = _parse_resource_side(res["arrival"], f"{path}.resources.arrival", kt, strict)
        served_res = _parse_resource_side(res["served"], f"{path}.resources.served", kt, strict)
        if arrival_res[0].dim != served_res[0].dim:
            _fail(f"{path}.resources",
                  f"arrival and served resource dimensions differ "
                  f"({arrival_res[0].dim} vs {served_res[0].dim})")
    else:
        zero = ResourceVectorLaw((deterministic(0.0),))
        arrival_res = (zero,) * kt
        served_res = (zero,) * kt
    try:
        return StateModel(arrivals=arrivals, service=service,
                          arrival_resources=arrival_res, served_resources=served_res)
    except ModelValidationError as exc:
        _fail(path, str(exc))


def _parse_analysis(obj, path, strict):
    if obj is None:
        return AnalysisConfig()
    _want_dict(obj, path)
    allowed = {"grid_step", "horizon", "cutoff", "t_points", "z_points"}
    _want_keys(obj, path, allowed, set(), strict)
    kwargs = {}
    for key in ("grid_step", "horizon"):
        if obj.get(key) is not None:
            v = _want_number(obj[key], f"{path}.{key}")
            if v <= 0.0:
                _fail(f"{path}.{key}", f"must be positive, got {v}")
            kwargs[key] = v
    if "cutoff" in obj:
        v = _want_number(obj["cutoff"], f"{path}.cutoff")
        if v != int(v) or v < 1:
            _fail(f"{path}.cutoff", f"must be a positive integer, got {obj['cutoff']}")
        kwargs["cutoff"] = int(v)
    for key in ("t_points", "z_points"):
        if key in obj:
            vals = _want_list(obj[key], f"{path}.{key}")
            kwargs[key] = tuple(_want_number(v, f"{path}.{key}[{i}]") for i, v in enumerate(vals))
    return AnalysisConfig(**kwargs)


def _parse_simulation(obj, path, strict):
    if obj is None:
        return SimulationConfig()
    _want_dict(obj, path)
    allowed = {"replications", "seed", "warmup", "horizon"}
    _want_keys(obj, path, allowed, set(), strict)
    kwargs = {}
    if "replications" in obj:
        v = _want_number(obj["replications"], f"{path}.replications")
        if v != int(v) or v < 2:
            _fail(f"{path}.replications", f"must be an integer >= 2, got {obj['replications']}")
        kwargs["replications"] = int(v)
    if "seed" in obj:
        v = _want_number(obj["seed"], f"{path}.seed")
        if v != int(v) or v < 0:
            _fail(f"{path}.seed", f"must be a nonnegative integer, got {obj['seed']}")
        kwargs["seed"] = int(v)
    for key in ("warmup", "horizon"):
        if key in obj:
            v = _want_number(obj[key], f"{path}.{key}")
            if v < 0.0:
                _fail(f"{path}.{key}", f"must be nonnegative, got {v}")
            kwargs[key] = v
    return SimulationConfig(**kwargs)


def parse_model(source, strict=True):
    """Parse and validate a model document.

    Args:
        source: JSON text or an already-decoded dict.
        strict: reject unknown keys (False: warn instead).

    Returns:
        ModelDocument.

    Raises:
        ModelValidationError: naming the JSON path of the first offense,
            or the line/column for malformed JSON.
    """
    if isinstance(source, (str, bytes)):
        try:
            doc = json.loads(source)
        except json.JSONDecodeError as exc:
            raise ModelValidationError(
                f"syntax error at line {exc.lineno} column {exc.colno}: {exc.msg}"
            ) from None
    else:
        doc = source
    _want_dict(doc, "$")
    _want_keys(doc, "$", {"version", "environment", "states", "analysis", "simulation", "name"},
               {"version", "environment", "states"}, strict)
    version = doc["version"]
    if version != FORMAT_VERSION:
        _fail("$.version", f"unsupported format version {version!r}; this build reads {FORMAT_VERSION}")
    env = _want_dict(doc["environment"], "$.environment")
    _want_keys(env, "$.environment", {"kernel", "repairs", "initial"},
               {"kernel", "repairs", "initial"}, strict)
    states_obj = _want_list(doc["states"], "$.states")
    if not states_obj:
        _fail("$.states", "need at least one state")
    d = len(states_obj)
    states = tuple(_parse_state(s, f"$.states[{i}]", strict) for i, s in enumerate(states_obj))

    kernel_obj = _want_list(env["kernel"], "$.environment.kernel", d)
    kernel = []
    for i, row in enumerate(kernel_obj):
        row = _want_list(row, f"$.environment.kernel[{i}]", d)
        subs = []
        for j, entry in enumerate(row):
            epath = f"$.environment.kernel[{i}][{j}]"
            _want_dict(entry, epath)
            _want_keys(entry, epath, {"weight", "law"}, {"weight", "law"}, strict)
            weight = _want_number(entry["weight"], f"{epath}.weight")
            law = _parse_law(entry["law"], f"{epath}.law", strict)
            try:
                subs.append(SubDistribution(weight, law))
            except ModelValidationError as exc:
                _fail(f"{epath}.weight", str(exc))
        mass = sum(s.weight for s in subs)
        if abs(mass - 1.0) > 1e-9:
            _fail(f"$.environment.kernel[{i}]", f"row weights sum to {mass}, expected 1")
        kernel.append(tuple(subs))
    repairs_obj = _want_list(env["repairs"], "$.environment.repairs", d)
    repairs = tuple(_parse_law(l, f"$.environment.repairs[{j}]", strict)
                    for j, l in enumerate(repairs_obj))
    initial_obj = _want_list(env["initial"], "$.environment.initial", d)
    initial = np.array([_want_number(v, f"$.environment.initial[{i}]")
                        for i, v in enumerate(initial_obj)])
    if np.any(initial < 0.0):
        _fail("$.environment.initial", "entries must be nonnegative")
    if abs(initial.sum() - 1.0) > 1e-9:
        _fail("$.environment.initial", f"entries sum to {initial.sum()}, expected 1")

    try:
        model = Model(kernel=tuple(kernel), repairs=repairs, initial=initial, states=states)
    except ModelValidationError as exc:
        _fail("$", str(exc))
    analysis = _parse_analysis(doc.get("analysis"), "$.analysis", strict)
    simulation = _parse_simulation(doc.get("simulation"), "$.simulation", strict)
    name = doc.get("name", "")
    if not isinstance(name, str):
        _fail("$.name", "must be a string")
    return ModelDocument(model=model, analysis=analysis, simulation=simulation, name=name)


def load_model(path, strict=True):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_model(fh.read(), strict=strict)


def _law_dict(law):
    return {"family": law.family, "params": list(law.params)}


def serialize_model(doc):
    """ModelDocument -> plain dict; parse_model inverts it exactly."""
    model = doc.model
    d = model.n_states
    out = {
        "version": FORMAT_VERSION,
        "environment": {
            "kernel": [[{"weight": model.kernel[i][j].weight,
                         "law": _law_dict(model.kernel[i][j].law)}
                        for j in range(d)] for i in range(d)],
            "repairs": [_law_dict(law) for law in model.repairs],
            "initial": [float(x) for x in model.initial],
        },
        "states": [],
        "analysis": {
            "grid_step": doc.analysis.grid_step,
            "horizon": doc.analysis.horizon,
            "cutoff": doc.analysis.cutoff,
            "t_points": list(doc.analysis.t_points),
            "z_points": list(doc.analysis.z_points),
        },
        "simulation": {
            "replications": doc.simulation.replications,
            "seed": doc.simulation.seed,
            "warmup": doc.simulation.warmup,
            "horizon": doc.simulation.horizon,
        },
    }
    if doc.name:
        out["name"] = doc.name
    for st in model.states:
        out["states"].append({
            "map": {
                "d0": st.arrivals.d0.tolist(),
                "marks": [mk.tolist() for mk in st.arrivals.marks],
            },
            "service": [_law_dict(law) for law in st.service],
            "resources": {
                "arrival": [[_law_dict(m) for m in rv.marginals] for rv in st.arrival_resources],
                "served": [[_law_dict(m) for m in rv.marginals] for rv in st.served_resources],
            },
        })
    return out


def save_model(doc, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(serialize_model(doc), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _rv(*laws):
    return ResourceVectorLaw(tuple(laws))


def canonical_test_models():
    """The fixed model suite the test battery runs on.

    mg1inf-poisson: single state, Poisson(2) arrivals, exponential(1)
        service; the textbook infinite-server baseline.
    mmpp2: single state, 2-phase MMPP; checks phase modulation.
    marked2: single state, two types by superposing a 2-phase MAP with a
        Poisson stream; checks marks and resources jointly.
    env2-cat: two environment states with different MAP orders, real
        repairs; the full-feature workhorse.
    poisson-product: two states with plain Poisson arrivals; the
        product-form regime with tabulable count distributions.
    """
    out = {}

    st = StateModel(
        arrivals=poisson_map(2.0).as_marked(),
        service=(exponential(1.0),),
        arrival_resources=(_rv(exponential(1.0 / 3.0)),),
        served_resources=(_rv(uniform(0.5, 1.5)),),
    )
    out["mg1inf-poisson"] = ModelDocument(
        name="mg1inf-poisson",
        model=Model(
            kernel=((SubDistribution(1.0, exponential(1.0)),),),
            repairs=(deterministic(0.0),),
            initial=np.array([1.0]),
            states=(st,),
        ),
        analysis=AnalysisConfig(t_points=(0.5, 1.0, 2.0, 5.0)),
        simulation=SimulationConfig(horizon=30.0, warmup=5.0),
    )

    mmpp = MarkedMap(
        d0=np.array([[-2.0, 1.0], [1.0, -6.0]]),
        marks=(np.array([[1.0, 0.0], [0.0, 5.0]]),),
    )
    st = StateModel(
        arrivals=mmpp,
        service=(erlang(2, 2.0),),
        arrival_resources=(_rv(deterministic(2.0)),),
        served_resources=(_rv(deterministic(0.0)),),
    )
    out["mmpp2"] = ModelDocument(
        name="mmpp2",
        model=Model(
            kernel=((SubDistribution(1.0, erlang(2, 1.0)),),),
            repairs=(exponential(4.0),),
            initial=np.array([1.0]),
            states=(st,),
        ),
        analysis=AnalysisConfig(t_points=(1.0, 3.0)),
    )

    comp_a = SingleMap(
        d0=np.array([[-3.0, 1.0], [0.5, -2.0]]),
        d1=np.array([[1.5, 0.5], [0.5, 1.0]]),
    )
    marked = superpose([comp_a, poisson_map(1.5)])
    st = StateModel(
        arrivals=marked,
        service=(erlang(2, 2.0), exponential(2.0)),
        arrival_resources=(_rv(uniform(1.0, 3.0), deterministic(1.0)),
                           _rv(exponential(0.5), erlang(2, 4.0))),
        served_resources=(_rv(exponential(1.0), deterministic(0.5)),
                          _rv(deterministic(1.0), uniform(0.0, 1.0))),
    )
    out["marked2"] = ModelDocument(
        name="marked2",
        model=Model(
            kernel=((SubDistribution(1.0, uniform(2.0, 4.0)),),),
            repairs=(deterministic(0.5),),
            initial=np.array([1.0]),
            states=(st,),
        ),
        analysis=AnalysisConfig(t_points=(1.0, 3.0)),
    )

    env_state1 = StateModel(
        arrivals=superpose([
            SingleMap(d0=np.array([[-2.4, 0.4], [0.3, -1.3]]),
                      d1=np.array([[1.6, 0.4], [0.2, 0.8]])),
            poisson_map(0.8),
        ]),
        service=(exponential(1.0), erlang(2, 4.0)),
        arrival_resources=(_rv(exponential(0.5)), _rv(deterministic(1.5))),
        served_resources=(_rv(deterministic(1.0)), _rv(exponential(1.0))),
    )
    env_state2 = StateModel(
        arrivals=MarkedMap(d0=np.array([[-1.7]]),
                           marks=(np.array([[0.5]]), np.array([[1.2]]))),
        service=(uniform(0.2, 0.8), exponential(2.0)),
        arrival_resources=(_rv(uniform(1.0, 2.0)), _rv(erlang(2, 2.0))),
        served_resources=(_rv(deterministic(0.5)), _rv(deterministic(2.0))),
    )
    out["env2-cat"] = ModelDocument(
        name="env2-cat",
        model=Model(
            kernel=(
                (SubDistribution(0.2, exponential(0.8)), SubDistribution(0.8, erlang(2, 1.6))),
                (SubDistribution(0.7, uniform(0.5, 2.5)), SubDistribution(0.3, exponential(0.6))),
            ),
            repairs=(exponential(5.0), deterministic(0.3)),
            initial=np.array([0.6, 0.4]),
            states=(env_state1, env_state2),
        ),
        analysis=AnalysisConfig(t_points=(1.0, 3.0)),
        simulation=SimulationConfig(horizon=25.0, warmup=5.0, replications=2000),
    )

    pp_state1 = StateModel(
        arrivals=MarkedMap(d0=np.array([[-1.5]]),
                           marks=(np.array([[1.0]]), np.array([[0.5]]))),
        service=(exponential(1.0), erlang(2, 2.0)),
        arrival_resources=(_rv(deterministic(1.0)), _rv(deterministic(1.0))),
        served_resources=(_rv(deterministic(1.0)), _rv(deterministic(1.0))),
    )
    pp_state2 = StateModel(
        arrivals=MarkedMap(d0=np.array([[-1.5]]),
                           marks=(np.array([[0.3]]), np.array([[1.2]]))),
        service=(uniform(0.5, 1.5), exponential(0.8)),
        arrival_resources=(_rv(deterministic(1.0)), _rv(deterministic(1.0))),
        served_resources=(_rv(deterministic(1.0)), _rv(deterministic(1.0))),
    )
    out["poisson-product"] = ModelDocument(
        name="poisson-product",
        model=Model(
            kernel=(
                (SubDistribution(0.5, exponential(1.0)), SubDistribution(0.5, erlang(2, 2.0))),
                (SubDistribution(1.0, uniform(0.4, 1.6)), SubDistribution(0.0, exponential(1.0))),
            ),
            repairs=(deterministic(0.25), exponential(2.0)),
            initial=np.array([1.0, 0.0]),
            states=(pp_state1, pp_state2),
        ),
        analysis=AnalysisConfig(cutoff=30),
        simulation=SimulationConfig(horizon=600.0, warmup=20.0),
    )
    return out
