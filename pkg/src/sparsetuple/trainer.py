"""Alternating training loop, test-time encoding, and model serialization.

One outer iteration updates, in order: the dictionary (closed form), every
code (one gradient step each), the predictor weights (one gradient step),
and the constraint multipliers (projected dual ascent).  The maximizer tie
set that drives the loss gradients is recomputed once per iteration from the
previous iterate's codes and weights and held fixed inside the iteration.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import hyperloss, sparse_coding
from .dataio import Dataset
from .measures import DegenerateClassError, MeasureKind
from .sparse_coding import Dictionary

__all__ = [
    "TrainConfig",
    "TraceEntry",
    "Model",
    "NumericalDivergenceError",
    "ModelFormatError",
    "initialize",
    "fit",
    "encode",
    "save_model",
    "load_model",
]

MODEL_SCHEMA_VERSION = 1
ALPHA_INIT = 1e-3
WEIGHT_INIT_SCALE = 0.01

TIE_POLICIES = ("single", "average")


class NumericalDivergenceError(RuntimeError):
    """Training produced non-finite values; carries the iteration number."""

    def __init__(self, iteration: int):
        self.iteration = iteration
        super().__init__(f"numerical overflow at iteration {iteration}")


class ModelFormatError(ValueError):
    """A serialized model stream is malformed or inconsistent."""


@dataclass(frozen=True)
class TrainConfig:
    """All knobs of a training run.

    ``dict_size=None`` resolves to ``min(2 * d, n)`` when fitting.
    ``tie_policy`` selects how argmax ties feed the gradients: ``single``
    uses one deterministic maximizer from the fast oracle, ``average``
    averages over the full tie set from brute-force search (small n only).
    ``eta_backoff`` keeps the plain fixed-step rule off by default; when on,
    a step that increases the objective is retried with a halved step size.
    """

    c1: float = 0.1
    c2: float = 0.01
    c3: float = 1.0
    eta: float = 0.01
    eta_backoff: bool = False
    iters: int = 100
    dict_size: int | None = None
    norm_cap: float = 1.0
    eps: float = 1e-8
    measure: MeasureKind = MeasureKind.F1
    seed: int = 0
    dual_rate: float = 0.1
    dual_steps: int = 50
    encode_iters: int = 100
    tie_policy: str = "single"

    def __post_init__(self):
        if isinstance(self.measure, str):
            object.__setattr__(self, "measure", MeasureKind.parse(self.measure))
        if min(self.c1, self.c2, self.c3) < 0:
            raise ValueError("c1, c2, c3 must be nonnegative")
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.iters < 1:
            raise ValueError("iters must be >= 1")
        if self.dict_size is not None and self.dict_size < 1:
            raise ValueError("dict_size must be >= 1")
        if self.norm_cap <= 0:
            raise ValueError("norm_cap must be positive")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.dual_rate <= 0 or self.dual_steps < 1:
            raise ValueError("dual_rate must be positive and dual_steps >= 1")
        if self.encode_iters < 0:
            raise ValueError("encode_iters must be >= 0")
        if self.tie_policy not in TIE_POLICIES:
            raise ValueError(f"tie_policy must be one of {TIE_POLICIES}")

    def resolved_dict_size(self, n: int, d: int) -> int:
        return self.dict_size if self.dict_size is not None else min(2 * d, n)


@dataclass(frozen=True)
class TraceEntry:
    """Objective components at the end of one outer iteration."""

    reconstruction: float
    sparsity: float
    complexity: float
    surrogate: float
    objective: float


@dataclass
class Model:
    """Trained dictionary plus predictor weights and the training trace.

    ``training_codes`` is the final code matrix of the training run; it is
    kept in memory for inspection but is not part of the serialized schema.
    """

    dictionary: Dictionary
    weights: np.ndarray
    config: TrainConfig
    trace: tuple[TraceEntry, ...]
    training_codes: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.shape != (self.dictionary.m,):
            raise ValueError(
                f"weights length {self.weights.shape} does not match "
                f"dictionary size {self.dictionary.m}"
            )
        self.trace = tuple(self.trace)


def ridge_codes(elements: np.ndarray, X: np.ndarray, c1: float) -> np.ndarray:
    """Codes from the ridge system ``(D'D + c1 I) s = D'x`` for each column."""
    m = elements.shape[1]
    gram = elements.T @ elements + c1 * np.eye(m)
    rhs = elements.T @ X
    try:
        return np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        # c1 = 0 with rank-deficient elements; fall back to least squares.
        return np.linalg.lstsq(gram, rhs, rcond=None)[0]


def initialize(
    data: Dataset, config: TrainConfig, rng: np.random.Generator
) -> tuple[Dictionary, np.ndarray, np.ndarray]:
    """Starting point of a run: sampled dictionary, ridge codes, small weights.

    Dictionary elements are data points sampled without replacement (with
    replacement only if the dictionary is larger than the dataset), each
    rescaled to squared norm ``norm_cap``.  Weights are uniform noise, never
    exactly zero-filled, so the first argmax has a generic score to break
    the all-tuples tie.
    """
    n, d = data.features.shape
    m = config.resolved_dict_size(n, d)
    chosen = rng.choice(n, size=m, replace=bool(m > n))
    columns = data.features[chosen].T.copy()
    norms = np.linalg.norm(columns, axis=0)
    for j in np.flatnonzero(norms == 0.0):
        columns[:, j] = rng.standard_normal(d)
        norms[j] = np.linalg.norm(columns[:, j])
    columns *= np.sqrt(config.norm_cap) / norms
    codes = ridge_codes(columns, data.features.T, config.c1)
    weights = rng.uniform(-WEIGHT_INIT_SCALE, WEIGHT_INIT_SCALE, size=m)
    multipliers = np.full(m, ALPHA_INIT)
    return Dictionary(columns, config.norm_cap, multipliers), codes, weights


# Magnitudes beyond this square to IEEE overflow inside the Gram products.
_OVERFLOW_LIMIT = 1e140


def _ensure_finite(iteration: int, *arrays) -> None:
    for arr in arrays:
        if not np.all(np.isfinite(arr)) or (arr.size and np.abs(arr).max() > _OVERFLOW_LIMIT):
            raise NumericalDivergenceError(iteration)


def _codes_blown(codes: np.ndarray, X: np.ndarray) -> bool:
    # Exploding codes flatten the Gram onto one eigendirection, so the solve
    # can hit an exactly singular pivot long before IEEE overflow.
    return bool(np.abs(codes).max() > 1e6 * (1.0 + np.abs(X).max()))


def _argmax(w, codes, labels, config: TrainConfig) -> hyperloss.ArgmaxResult:
    if config.tie_policy == "average":
        return hyperloss.argmax_F_bruteforce(w, codes, labels, config.measure)
    return hyperloss.argmax_F_oracle(w, codes, labels, config.measure)


_MAX_BACKOFF_HALVINGS = 50


def _objective_entry(X, elements, codes, weights, labels, config: TrainConfig) -> TraceEntry:
    residual = X - elements @ codes
    reconstruction = float(np.sum(residual * residual))
    sparsity = float(np.abs(codes).sum())
    complexity = 0.5 * float(weights @ weights)
    surrogate = hyperloss.upper_bound(weights, codes, labels, config.measure)
    objective = (
        reconstruction
        + config.c1 * sparsity
        + config.c2 * complexity
        + config.c3 * surrogate
    )
    return TraceEntry(reconstruction, sparsity, complexity, surrogate, objective)


def fit(data: Dataset, config: TrainConfig, observer=None) -> Model:
    """Run the full alternating loop for ``config.iters`` outer iterations.

    ``observer``, when given, is called as ``observer(stage, iteration)``
    after each variable update with stage one of ``dictionary``, ``codes``,
    ``weights``, ``multipliers``.  Fixed seeds make the run bitwise
    reproducible.
    """
    y = data.labels
    n_pos = int(np.count_nonzero(y == 1))
    if config.measure in (MeasureKind.PRBEP, MeasureKind.AUC) and n_pos in (0, y.size):
        raise DegenerateClassError(
            f"degenerate class: cannot train {config.measure.value} "
            f"with single-class labels (n_pos={n_pos}, n={y.size})"
        )
    m = config.resolved_dict_size(data.n, data.d)
    config = replace(config, dict_size=m)
    rng = np.random.default_rng(config.seed)
    dictionary, codes, weights = initialize(data, config, rng)
    alphas = dictionary.multipliers
    X = data.features.T
    elements = dictionary.elements
    eta = config.eta
    halvings = 0
    previous_objective = np.inf
    trace: list[TraceEntry] = []
    for iteration in range(config.iters):
        try:
            elements = sparse_coding.solve_dictionary(X, codes, alphas)
        except sparse_coding.SingularGramError:
            if _codes_blown(codes, X):
                raise NumericalDivergenceError(iteration) from None
            raise
        if observer is not None:
            observer("dictionary", iteration)

        # Tie set from the previous iterate's codes and weights, frozen for
        # the rest of this iteration.
        result = _argmax(weights, codes, y, config)
        coefficients = hyperloss.flip_coefficients(y, result.maximizers, config.c3)

        reweights = 1.0 / np.maximum(np.abs(codes), config.eps)
        grads = sparse_coding.code_gradient_batch(
            elements, X, codes, reweights, config.c1, np.outer(weights, coefficients)
        )
        while True:
            new_codes = codes - eta * grads
            new_weights = weights - eta * (config.c2 * weights + new_codes @ coefficients)
            entry = _objective_entry(X, elements, new_codes, new_weights, y, config)
            accept = (
                not config.eta_backoff
                or entry.objective <= previous_objective
                or halvings >= _MAX_BACKOFF_HALVINGS
            )
            if accept:
                break
            eta *= 0.5
            halvings += 1
        codes = new_codes
        if observer is not None:
            observer("codes", iteration)

        weights = new_weights
        if observer is not None:
            observer("weights", iteration)
        _ensure_finite(iteration, elements, codes, weights)

        try:
            alphas, _ = sparse_coding.dual_ascent_alphas(
                X, codes, config.norm_cap, alphas, config.dual_rate, config.dual_steps
            )
        except sparse_coding.SingularGramError:
            if _codes_blown(codes, X):
                raise NumericalDivergenceError(iteration) from None
            raise
        if observer is not None:
            observer("multipliers", iteration)
        _ensure_finite(iteration, alphas)

        trace.append(entry)
        previous_objective = entry.objective
    final_dictionary = Dictionary(elements, config.norm_cap, alphas)
    return Model(final_dictionary, weights, config, tuple(trace), training_codes=codes)


def encode(dictionary: Dictionary, features, config: TrainConfig) -> np.ndarray:
    """Codes for unlabeled points under a frozen dictionary.

    Starts from the ridge system and runs ``config.encode_iters`` gradient
    steps of the coding subproblem with the label-loss term absent.  Fully
    deterministic.
    """
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != dictionary.d:
        raise ValueError(
            f"dimension mismatch: features {X.shape} vs dictionary with d={dictionary.d}"
        )
    Xt = X.T
    elements = dictionary.elements
    codes = ridge_codes(elements, Xt, config.c1)
    for _ in range(config.encode_iters):
        reweights = 1.0 / np.maximum(np.abs(codes), config.eps)
        grads = sparse_coding.code_gradient_batch(elements, Xt, codes, reweights, config.c1, 0.0)
        codes = codes - config.eta * grads
    return codes


def config_document(config: TrainConfig) -> dict:
    """TrainConfig as a JSON-ready dict, measure rendered as its string value."""
    doc = asdict(config)
    doc["measure"] = config.measure.value
    return doc


def save_model(model: Model) -> bytes:
    """Serialize a model to its versioned JSON document (UTF-8 bytes).

    Numbers round-trip exactly: floats are emitted in shortest repr form and
    save -> load -> save reproduces identical bytes.
    """
    dictionary = model.dictionary
    document = {
        "schema_version": MODEL_SCHEMA_VERSION,
        "d": int(dictionary.d),
        "m": int(dictionary.m),
        "c": float(dictionary.norm_cap),
        "measure": model.config.measure.value,
        "config": config_document(model.config),
        "dictionary": [float(v) for v in dictionary.elements.ravel(order="C")],
        "weights": [float(v) for v in model.weights],
        "alphas": [float(v) for v in dictionary.multipliers],
        "trace": [
            {
                "reconstruction": entry.reconstruction,
                "sparsity": entry.sparsity,
                "complexity": entry.complexity,
                "surrogate": entry.surrogate,
                "objective": entry.objective,
            }
            for entry in model.trace
        ],
    }
    return (json.dumps(document, indent=2) + "\n").encode("utf-8")


_TRACE_KEYS = ("reconstruction", "sparsity", "complexity", "surrogate", "objective")


def load_model(blob: bytes) -> Model:
    """Parse and validate a model document produced by :func:`save_model`."""
    try:
        text = blob.decode("utf-8") if isinstance(blob, bytes) else str(blob)
        document = json.loads(text)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"not a valid model document: {exc}") from None
    if not isinstance(document, dict):
        raise ModelFormatError("model document must be a JSON object")
    version = document.get("schema_version")
    if version != MODEL_SCHEMA_VERSION:
        raise ModelFormatError(
            f"unsupported schema_version {version!r}; expected {MODEL_SCHEMA_VERSION}"
        )
    required = ("d", "m", "c", "measure", "config", "dictionary", "weights", "alphas", "trace")
    missing = [key for key in required if key not in document]
    if missing:
        raise ModelFormatError(f"model document missing fields: {missing}")
    try:
        config = TrainConfig(**document["config"])
    except (TypeError, ValueError) as exc:
        raise ModelFormatError(f"invalid config block: {exc}") from None
    d, m = int(document["d"]), int(document["m"])
    if config.dict_size != m:
        raise ModelFormatError(f"config dict_size {config.dict_size} != m {m}")
    if config.measure.value != document["measure"]:
        raise ModelFormatError("config measure disagrees with top-level measure")
    if float(document["c"]) != config.norm_cap:
        raise ModelFormatError("config norm_cap disagrees with top-level c")
    flat = np.asarray(document["dictionary"], dtype=np.float64)
    if flat.shape != (d * m,):
        raise ModelFormatError(f"dictionary has {flat.size} numbers, expected {d * m}")
    weights = np.asarray(document["weights"], dtype=np.float64)
    if weights.shape != (m,):
        raise ModelFormatError(f"weights length {weights.size} does not match m={m}")
    alphas = np.asarray(document["alphas"], dtype=np.float64)
    if alphas.shape != (m,):
        raise ModelFormatError(f"alphas length {alphas.size} does not match m={m}")
    trace = []
    for i, entry in enumerate(document["trace"]):
        if not isinstance(entry, dict) or set(entry) != set(_TRACE_KEYS):
            raise ModelFormatError(f"trace entry {i} must have keys {_TRACE_KEYS}")
        trace.append(TraceEntry(**{key: float(entry[key]) for key in _TRACE_KEYS}))
    dictionary = Dictionary(flat.reshape(d, m), config.norm_cap, alphas)
    return Model(dictionary, weights, config, tuple(trace))
