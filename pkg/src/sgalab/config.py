"""Run-configuration files: parsing, validation, and resolution.

A run configuration is a flat, typed, sectioned key-value file (INI syntax)
or the equivalent JSON object.  Sections and keys are closed sets: any
unknown section or key is an error naming the offender, so typos cannot
silently change semantics.  ``resolve_setup`` turns a parsed configuration
into live objects: model, dataset, fitted anchor, information matrices,
and the tuning for the engine.

Grammar (INI form; every key optional unless marked required)::

    [model]
    family = gaussian_location | logistic | poisson      (required)
    source = synthetic | csv                             (default synthetic)
    n = <int>                 records to generate        (required if synthetic)
    d = <int>                 parameter dimension (gaussian) or covariate
                              count (logistic/poisson)
    data_seed = <int>         generator seed
    weights = auto | <floats> gaussian curvature weights
    theta_star = <floats>     generator parameter
    zero_inflation = <float>  poisson response zeroing probability
    covariate_scales = <floats>  poisson covariate scale multipliers
    path = <str>              csv path                   (required if csv)
    columns = <int>           csv column count           (required if csv)
    header = true | false     csv header flag

    [tuning]
    frak_h, frak_b, frak_t = <float>   (frak_t may be inf)
    c_h, c_b, c_beta = <float>         (c_beta may be inf)
    gamma  = identity | jhat_inv | ihat_inv | jstar_inv | istar_inv
    lambda = identity | jhat_inv | ihat_inv | jstar_inv | istar_inv
    policy = with_replacement | without_replacement
    variant = plain | momentum | control_variate
    mass = identity                     momentum mass matrix
    boundary_lo, boundary_hi = <floats> coordinate box

    [execution]
    epochs = <float> | steps = <int>    (exactly one)
    seed = <int>
    replicates = <int>
    thin = <int>
    init = mle | zero | stationary | overdispersed:<float>
    average_start_epochs = <float>
    burnin_fraction = <float>

    [prediction]
    matrices = empirical | truth
    m_values = <floats>
    t_grid = <floats>

    [recommend]
    target = local_fiducial | sandwich_weighted | bagged | posterior
    w1, w2 = <float>           sandwich_weighted mixture weights
    family = sgd | sgld | sgld_fp   posterior route
    frak_b = <float>           batch exponent to design around
    c_b = <float>              batch constant to design around
    policy = with_replacement | without_replacement

    [output]
    dir = <str>
"""

from __future__ import annotations

import configparser
import hashlib
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .inference import InfoMatrices, empirical_info, fit_mle, info_from_truth
from .models import (
    CsvSchema,
    Dataset,
    ModelSpec,
    TruthSpec,
    gaussian_location_model,
    generate,
    load_csv,
    logistic_model,
    poisson_model,
)
from .tuning import TuningConfig

_SCHEMA: dict[str, dict[str, str]] = {
    "model": {
        "family": "str",
        "source": "str",
        "n": "int",
        "d": "int",
        "data_seed": "int",
        "weights": "floats_or_auto",
        "theta_star": "floats",
        "zero_inflation": "float",
        "covariate_scales": "floats",
        "path": "str",
        "columns": "int",
        "header": "bool",
    },
    "tuning": {
        "frak_h": "float",
        "frak_b": "float",
        "frak_t": "float",
        "c_h": "float",
        "c_b": "float",
        "c_beta": "float",
        "gamma": "str",
        "lambda": "str",
        "policy": "str",
        "variant": "str",
        "mass": "str",
        "boundary_lo": "floats",
        "boundary_hi": "floats",
    },
    "execution": {
        "epochs": "float",
        "steps": "int",
        "seed": "int",
        "replicates": "int",
        "thin": "int",
        "init": "str",
        "average_start_epochs": "float",
        "burnin_fraction": "float",
    },
    "prediction": {
        "matrices": "str",
        "m_values": "floats",
        "t_grid": "floats",
    },
    "recommend": {
        "target": "str",
        "w1": "float",
        "w2": "float",
        "family": "str",
        "frak_b": "float",
        "c_b": "float",
        "policy": "str",
    },
    "output": {
        "dir": "str",
    },
}

MATRIX_TOKENS = ("identity", "jhat_inv", "ihat_inv", "jstar_inv", "istar_inv")


def _coerce(section: str, key: str, kind: str, value) -> object:
    """Convert a raw (string or JSON) value to its declared type."""
    try:
        if kind == "str":
            return str(value)
        if kind == "int":
            if isinstance(value, bool):
                raise ValueError
            return int(value)
        if kind == "float":
            if isinstance(value, str) and value.strip().lower() in ("inf", "+inf"):
                return math.inf
            return float(value)
        if kind == "bool":
            if isinstance(value, bool):
                return value
            text = str(value).strip().lower()
            if text in ("true", "yes", "1"):
                return True
            if text in ("false", "no", "0"):
                return False
            raise ValueError
        if kind in ("floats", "floats_or_auto"):
            if kind == "floats_or_auto" and str(value).strip().lower() == "auto":
                return "auto"
            if isinstance(value, (list, tuple)):
                return [float(v) for v in value]
            parts = [p for p in str(value).replace(",", " ").split() if p]
            return [float(p) for p in parts]
    except (TypeError, ValueError):
        pass
    raise ConfigError(
        f"[{section}] {key} = {value!r} is not a valid {kind}"
    )


def _validate_tree(tree: dict) -> dict:
    out: dict[str, dict] = {}
    for section, entries in tree.items():
        if section not in _SCHEMA:
            raise ConfigError(
                f"unknown config section [{section}]; expected one of"
                f" {sorted(_SCHEMA)}"
            )
        if not isinstance(entries, dict):
            raise ConfigError(f"section [{section}] must hold key = value entries")
        out[section] = {}
        for key, raw in entries.items():
            if key not in _SCHEMA[section]:
                raise ConfigError(
                    f"unknown key {key!r} in section [{section}]; expected"
                    f" one of {sorted(_SCHEMA[section])}"
                )
            out[section][key] = _coerce(section, key, _SCHEMA[section][key], raw)
    if "model" not in out or "family" not in out.get("model", {}):
        raise ConfigError("config must declare [model] family")
    return out


def parse_config(path: str) -> dict:
    """Parse and validate a configuration file (INI or JSON by content)."""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            tree = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
        if not isinstance(tree, dict):
            raise ConfigError(f"{path}: JSON config must be an object of sections")
        return _validate_tree(tree)
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: invalid config syntax: {exc}") from None
    tree = {s: dict(parser.items(s)) for s in parser.sections()}
    return _validate_tree(tree)


def config_hash(tree: dict) -> str:
    """Stable digest of everything that affects results (output dir aside)."""
    hashed = {k: v for k, v in sorted(tree.items()) if k != "output"}
    blob = json.dumps(hashed, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


@dataclass
class Setup:
    """A fully resolved configuration, ready to run or predict."""

    tree: dict
    model: ModelSpec
    data: Dataset
    truth: TruthSpec | None
    mle_theta: np.ndarray
    info: InfoMatrices
    prediction_info: InfoMatrices
    cfg: TuningConfig
    n_steps: int
    epochs: float | None
    replicates: int
    thin: int
    init_token: str
    average_start_epochs: float
    burnin_fraction: float
    m_values: list[float]
    t_grid: list[float]
    hash: str = ""
    notes: list[str] = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.data.n


def _build_model_data(tree: dict) -> tuple[ModelSpec, Dataset, TruthSpec | None]:
    m = tree["model"]
    family = m["family"]
    source = m.get("source", "synthetic")
    if source == "synthetic":
        if "n" not in m:
            raise ConfigError("[model] n is required for synthetic data")
        kwargs: dict = {}
        if family == "gaussian_location":
            if "d" in m:
                kwargs["d"] = m["d"]
            if m.get("weights") not in (None, "auto"):
                kwargs["weights"] = np.asarray(m["weights"], float)
        elif family in ("logistic", "poisson"):
            if "d" not in m:
                raise ConfigError(f"[model] d (covariate count) required for {family}")
            kwargs["p"] = m["d"]
            if family == "poisson":
                if "zero_inflation" in m:
                    kwargs["zero_inflation"] = m["zero_inflation"]
                if "covariate_scales" in m:
                    kwargs["covariate_scales"] = np.asarray(m["covariate_scales"], float)
        else:
            raise ConfigError(f"unknown model family {family!r}")
        if "theta_star" in m:
            kwargs["theta_star"] = np.asarray(m["theta_star"], float)
        model, data, truth = generate(family, m["n"], seed=m.get("data_seed", 0), **kwargs)
        return model, data, truth
    if source == "csv":
        for required in ("path", "columns"):
            if required not in m:
                raise ConfigError(f"[model] {required} is required for csv data")
        schema = CsvSchema(columns=m["columns"], header=m.get("header", False))
        data = load_csv(m["path"], schema)
        if family == "gaussian_location":
            model = gaussian_location_model(
                m.get("d", m["columns"]),
                None if m.get("weights") in (None, "auto") else np.asarray(m["weights"], float),
            )
        elif family == "logistic":
            model = logistic_model(m.get("d", m["columns"] - 1))
        elif family == "poisson":
            model = poisson_model(m.get("d", m["columns"] - 1))
        else:
            raise ConfigError(f"unknown model family {family!r}")
        model.check_records(data.records)
        return model, data, None
    raise ConfigError(f"[model] source must be synthetic or csv, got {source!r}")


def _resolve_matrix(
    token: str,
    info: InfoMatrices,
    truth: TruthSpec | None,
    what: str,
) -> np.ndarray | None:
    if token == "identity":
        return None
    if token in ("jhat_inv", "ihat_inv"):
        base = info.j_mat if token == "jhat_inv" else info.i_mat
    elif token in ("jstar_inv", "istar_inv"):
        if truth is None or not truth.available:
            raise ConfigError(
                f"{what} = {token}: ground-truth matrices are not available"
                " for this data source"
            )
        base = truth.j_star if token == "jstar_inv" else truth.i_star
    else:
        raise ConfigError(
            f"{what} must be one of {MATRIX_TOKENS}, got {token!r}"
        )
    inv = np.linalg.solve(base, np.eye(base.shape[0]))
    return 0.5 * (inv + inv.T)


def resolve_setup(tree: dict) -> Setup:
    """Build every live object a command needs from a validated tree."""
    model, data, truth = _build_model_data(tree)
    mle = fit_mle(model, data)
    info = empirical_info(model, data, mle.theta_hat)

    p = tree.get("prediction", {})
    matrices = p.get("matrices", "empirical")
    if matrices == "empirical":
        prediction_info = info
    elif matrices == "truth":
        if truth is None or not truth.available:
            raise ConfigError(
                "[prediction] matrices = truth, but ground truth is not"
                " available for this data source"
            )
        prediction_info = info_from_truth(
            truth.theta_star, truth.j_star, truth.i_star, data.n
        )
    else:
        raise ConfigError(
            f"[prediction] matrices must be empirical or truth, got {matrices!r}"
        )

    t = tree.get("tuning", {})
    gamma = _resolve_matrix(t.get("gamma", "identity"), info, truth, "[tuning] gamma")
    lam = _resolve_matrix(t.get("lambda", "identity"), info, truth, "[tuning] lambda")
    mass_token = t.get("mass", "identity")
    if mass_token != "identity":
        raise ConfigError("[tuning] mass currently supports only 'identity'")
    boundary = None
    if ("boundary_lo" in t) != ("boundary_hi" in t):
        raise ConfigError("[tuning] boundary_lo and boundary_hi must appear together")
    if "boundary_lo" in t:
        boundary = (
            np.asarray(t["boundary_lo"], float),
            np.asarray(t["boundary_hi"], float),
        )
    e = tree.get("execution", {})
    cfg = TuningConfig(
        frak_h=t.get("frak_h", 1.0),
        frak_b=t.get("frak_b", 0.0),
        frak_t=t.get("frak_t", math.inf),
        c_h=t.get("c_h", 1.0),
        c_b=t.get("c_b", 1.0),
        c_beta=t.get("c_beta", 1.0),
        gamma=gamma,
        lam=lam,
        policy=t.get("policy", "with_replacement"),
        variant=t.get("variant", "plain"),
        boundary=boundary,
        seed=e.get("seed", 0),
        labels={"gamma": t.get("gamma", "identity"), "lambda": t.get("lambda", "identity")},
    )

    if ("epochs" in e) == ("steps" in e):
        raise ConfigError("[execution] must set exactly one of epochs or steps")
    epochs = e.get("epochs")
    n_steps = e["steps"] if "steps" in e else cfg.epochs_to_steps(data.n, epochs)
    if n_steps < 1:
        raise ConfigError("[execution] run length must be at least one step")

    init_token = e.get("init", "mle")
    if not (
        init_token in ("mle", "zero", "stationary")
        or init_token.startswith("overdispersed:")
    ):
        raise ConfigError(
            "[execution] init must be mle, zero, stationary, or"
            f" overdispersed:<scale>, got {init_token!r}"
        )
    burnin = e.get("burnin_fraction", 0.1)
    if not 0.0 <= burnin < 1.0:
        raise ConfigError("[execution] burnin_fraction must be in [0, 1)")

    replicates = e.get("replicates", 1)
    if replicates < 1:
        raise ConfigError("[execution] replicates must be >= 1")
    thin = e.get("thin", 1)

    return Setup(
        tree=tree,
        model=model,
        data=data,
        truth=truth,
        mle_theta=mle.theta_hat,
        info=info,
        prediction_info=prediction_info,
        cfg=cfg,
        n_steps=n_steps,
        epochs=epochs,
        replicates=replicates,
        thin=thin,
        init_token=init_token,
        average_start_epochs=e.get("average_start_epochs", 0.0),
        burnin_fraction=burnin,
        m_values=[float(v) for v in p.get("m_values", [1.0, 8.0])],
        t_grid=[float(v) for v in p.get("t_grid", [])],
        hash=config_hash(tree),
    )


def load_setup(path: str) -> Setup:
    return resolve_setup(parse_config(path))


def recommend_kwargs(tree: dict) -> dict:
    """Translate the [recommend] section into recommend_tuning arguments."""
    r = dict(tree.get("recommend", {}))
    if "target" not in r:
        raise ConfigError("[recommend] target is required for the tune command")
    kwargs: dict = {"target": r.pop("target")}
    kwargs.update(r)
    return kwargs
