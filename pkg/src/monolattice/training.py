"""Projected stochastic subgradient training of calibrated lattice models.

One step samples a minibatch (uniformly with replacement; a minibatch size
of at least the dataset size runs a deterministic full pass instead),
averages the per-sample loss subgradients, adds regularizer subgradients
(full or sampled), and applies the steps to the lattice parameters and the
calibrator parameters through the feasibility-preserving walk, so every
iterate satisfies its constraints.  Lattice and calibrator parameters are
updated jointly in the same step, the calibrator step scaled by a separate
factor (scale 0 freezes the calibrators).

``parallel_train`` shards the dataset over K workers; each synchronization
round, every worker trains from the consensus parameters on its own shard,
and the consensus becomes the elementwise average of the workers (feasible,
since the constraint set is convex).  Workers draw from independent child
streams of the seed, so runs are reproducible.
"""

from __future__ import annotations

import copy
import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .calibrators import CalibratorSet, FeatureSpec, MissingPolicy
from .data import Dataset, PairDataset
from .interpolation import InterpolationKind, evaluate_with_gradients, interpolation_weights
from .lattice import LatticeShape, locate_cell
from .monotonicity import (
    ConstraintSet,
    Direction,
    build_constraints,
    max_infeasibility,
    project_update,
)
from .regularizers import (
    RegularizerConfig,
    TermSet,
    regularizer_gradient,
    regularizer_terms,
    regularizer_value,
    sample_regularizer_subgradient,
)


class TrainingError(RuntimeError):
    """Training aborted (non-finite gradients or parameters)."""


class Loss(str, enum.Enum):
    SQUARED = "squared"
    LOGISTIC = "logistic"
    HINGE = "hinge"


# --------------------------------------------------------------------------
# losses


def loss_value(loss: Loss, y: float, z: float) -> float:
    if loss is Loss.SQUARED:
        return (y - z) ** 2
    sign = 2.0 * y - 1.0  # {0,1} -> {-1,+1}
    margin = sign * z
    if loss is Loss.LOGISTIC:
        return math.log1p(math.exp(-margin)) if margin > -30 else -margin
    return max(0.0, 1.0 - margin)


def loss_slope(loss: Loss, y: float, z: float) -> float:
    """d loss / dz (a subgradient where the loss has a kink)."""
    if loss is Loss.SQUARED:
        return 2.0 * (z - y)
    sign = 2.0 * y - 1.0
    margin = sign * z
    if loss is Loss.LOGISTIC:
        if margin >= 0:
            return -sign * math.exp(-margin) / (1.0 + math.exp(-margin))
        return -sign / (1.0 + math.exp(margin))
    return -sign if margin < 1.0 else 0.0


# --------------------------------------------------------------------------
# configuration and state


@dataclass(frozen=True)
class TrainConfig:
    loss: Loss = Loss.SQUARED
    kind: InterpolationKind = InterpolationKind.MULTILINEAR
    epochs: int = 20
    minibatch_size: int = 32
    step_size: float = 0.1
    calibrator_step_scale: float = 1.0
    regularizers: tuple[RegularizerConfig, ...] = ()
    seed: int = 0
    workers: int = 1
    sync_rounds: int = 1

    def __post_init__(self):
        object.__setattr__(self, "loss", Loss(self.loss))
        object.__setattr__(self, "kind", InterpolationKind(self.kind))
        object.__setattr__(self, "regularizers", tuple(self.regularizers))
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.minibatch_size < 1:
            raise ValueError("minibatch size must be >= 1")
        if self.step_size < 0 or not math.isfinite(self.step_size):
            raise ValueError("step size must be finite and >= 0")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.sync_rounds < 1:
            raise ValueError("sync rounds must be >= 1")


@dataclass
class TrainerState:
    shape: LatticeShape
    theta: np.ndarray
    calibrators: CalibratorSet
    config: TrainConfig
    data: Dataset | PairDataset
    theta_constraints: ConstraintSet
    alpha_constraints: ConstraintSet
    reg_terms: list[tuple[RegularizerConfig, TermSet]] = field(default_factory=list)

    def clone(self) -> "TrainerState":
        return TrainerState(
            shape=self.shape,
            theta=self.theta.copy(),
            calibrators=copy.deepcopy(self.calibrators),
            config=self.config,
            data=self.data,
            theta_constraints=self.theta_constraints,
            alpha_constraints=self.alpha_constraints,
            reg_terms=self.reg_terms,
        )

    @property
    def trains_calibrators(self) -> bool:
        return (
            self.calibrators.num_free > 0 and self.config.calibrator_step_scale != 0.0
        )


# --------------------------------------------------------------------------
# initialization


def init_lattice(shape: LatticeShape, directions) -> np.ndarray:
    """Linear start: slope +-1/(M_d - 1) along each constrained dimension.

    The sum over constrained dimensions is rescaled to span [0, 1] (divide
    by the number of constrained dimensions, shift the minimum to 0), so the
    start is feasible with room to move.  With no constrained dimensions the
    start is all zeros.
    """
    if len(directions) != shape.ndim:
        raise ValueError(f"expected {shape.ndim} directions, got {len(directions)}")
    theta = np.zeros(shape.num_parameters)
    idx = np.arange(shape.num_parameters)
    constrained = 0
    for d, direction in enumerate(directions):
        direction = Direction(direction)
        if direction is Direction.NONE:
            continue
        constrained += 1
        coord = (idx // shape.strides[d]) % shape.sizes[d]
        slope = 1.0 if direction is Direction.INCREASING else -1.0
        theta += slope * coord / (shape.sizes[d] - 1)
    if constrained == 0:
        return theta
    theta -= theta.min()
    theta /= constrained
    return theta


def prepare_state(data: Dataset | PairDataset, specs: list[FeatureSpec], config: TrainConfig) -> TrainerState:
    """Fit calibrators to the data and assemble a feasible starting state."""
    shape = LatticeShape([s.size for s in specs])
    if isinstance(data, PairDataset):
        calibrators = CalibratorSet.fit(specs, data.fit_columns(), None)
    else:
        calibrators = CalibratorSet.fit(specs, data.columns, data.labels)
    missing_dims = frozenset(
        d for d, s in enumerate(specs) if s.missing is MissingPolicy.VERTEX
    )
    directions = tuple(s.monotone for s in specs)
    theta_constraints = build_constraints(shape, directions, missing_dims)
    reg_terms = [
        (cfg, regularizer_terms(shape, cfg.kind, missing_dims))
        for cfg in config.regularizers
    ]
    if config.loss in (Loss.LOGISTIC, Loss.HINGE) and not isinstance(data, PairDataset):
        labels = np.asarray(data.labels, dtype=float)
        if not np.isin(labels, (0.0, 1.0)).all():
            raise ValueError(f"{config.loss.value} loss needs binary {{0,1}} labels")
    return TrainerState(
        shape=shape,
        theta=init_lattice(shape, directions),
        calibrators=calibrators,
        config=config,
        data=data,
        theta_constraints=theta_constraints,
        alpha_constraints=calibrators.constraints(),
        reg_terms=reg_terms,
    )


# --------------------------------------------------------------------------
# gradients and steps


def _sample_terms(state: TrainerState, i: int, want_feature_grads: bool):
    """Loss pieces for sample i: (z, y, [(sign, weights, feature grads)])."""
    cs = state.calibrators
    if isinstance(state.data, PairDataset):
        sides = []
        z = 0.0
        for sign, row in ((1.0, state.data.plus_row(i)), (-1.0, state.data.minus_row(i))):
            x = cs.calibrate_row(row)
            if want_feature_grads:
                v, sw, dfdx = evaluate_with_gradients(
                    state.theta, state.shape, x, state.config.kind
                )
                entries = cs.row_gradients(row)
            else:
                sw = interpolation_weights(
                    state.shape, locate_cell(state.shape, x), state.config.kind
                )
                v = 0.0
                for j, w in zip(sw.indices, sw.weights):
                    v += state.theta[j] * w
                dfdx, entries = None, None
            z += sign * v
            sides.append((sign, sw, dfdx, entries))
        return z, 1.0, sides
    row = state.data.row(i)
    x = cs.calibrate_row(row)
    if want_feature_grads:
        v, sw, dfdx = evaluate_with_gradients(state.theta, state.shape, x, state.config.kind)
        entries = cs.row_gradients(row)
    else:
        sw = interpolation_weights(
            state.shape, locate_cell(state.shape, x), state.config.kind
        )
        v = 0.0
        for j, w in zip(sw.indices, sw.weights):
            v += state.theta[j] * w
        dfdx, entries = None, None
    return v, float(state.data.labels[i]), [(1.0, sw, dfdx, entries)]


def loss_gradients(state: TrainerState, minibatch) -> tuple[np.ndarray, np.ndarray]:
    """Minibatch-mean loss subgradient w.r.t. theta and the calibrator vector."""
    g_theta = np.zeros_like(state.theta)
    g_alpha = np.zeros(state.calibrators.num_free)
    want = state.trains_calibrators
    scale = 1.0 / len(minibatch)
    for i in minibatch:
        z, y, sides = _sample_terms(state, i, want)
        slope = loss_slope(state.config.loss, y, z) * scale
        if slope == 0.0:
            continue
        for sign, sw, dfdx, entries in sides:
            s = sign * slope
            for j, w in zip(sw.indices, sw.weights):
                g_theta[j] += s * w
            if want:
                for d, per_feature in enumerate(entries):
                    if not per_feature or dfdx[d] == 0.0:
                        continue
                    for pos, partial in per_feature:
                        g_alpha[pos] += s * dfdx[d] * partial
    return g_theta, g_alpha


def sgd_step(state: TrainerState, minibatch, rng: np.random.Generator) -> TrainerState:
    """One projected subgradient step over ``minibatch`` (sample indices)."""
    g_theta, g_alpha = loss_gradients(state, minibatch)
    for cfg, terms in state.reg_terms:
        if cfg.sample_count is None:
            g = regularizer_gradient(state.theta, terms)
        else:
            g = sample_regularizer_subgradient(state.theta, terms, cfg.sample_count, rng)
        g_theta += cfg.weight * g
    if not np.isfinite(g_theta).all() or not np.isfinite(g_alpha).all():
        raise TrainingError("non-finite gradient; lower the step size")
    eta = state.config.step_size
    state.theta = project_update(state.theta, -eta * g_theta, state.theta_constraints)
    if state.trains_calibrators:
        alpha = state.calibrators.alpha()
        alpha = project_update(
            alpha,
            -eta * state.config.calibrator_step_scale * g_alpha,
            state.alpha_constraints,
        )
        state.calibrators.set_alpha(alpha)
    if not np.isfinite(state.theta).all():
        raise TrainingError("non-finite parameters; lower the step size")
    return state


def _run_epochs(state: TrainerState, shard: np.ndarray, epochs: int, rng: np.random.Generator) -> None:
    n = len(shard)
    if n == 0 or epochs == 0:
        return
    k = state.config.minibatch_size
    if k >= n:
        batch = shard  # deterministic full pass
        for _ in range(epochs):
            sgd_step(state, batch, rng)
        return
    steps = math.ceil(n / k)
    for _ in range(epochs):
        for _ in range(steps):
            batch = shard[rng.integers(0, n, size=k)]
            sgd_step(state, batch, rng)


# --------------------------------------------------------------------------
# training drivers


def _num_samples(data) -> int:
    return data.num_pairs if isinstance(data, PairDataset) else data.num_rows


def _train_workers(data, specs, config: TrainConfig) -> TrainerState:
    state = prepare_state(data, specs, config)
    n = _num_samples(data)
    if n == 0:
        raise ValueError("training data is empty")
    K = config.workers
    streams = np.random.SeedSequence(config.seed).spawn(K)
    rngs = [np.random.default_rng(s) for s in streams]
    if K == 1:
        shards = [np.arange(n)]
    else:
        order = np.random.default_rng(
            np.random.SeedSequence(config.seed).spawn(K + 1)[K]
        ).permutation(n)
        shards = [order[k::K] for k in range(K)]
    rounds = config.sync_rounds
    base, extra = divmod(config.epochs, rounds)
    for r in range(rounds):
        epochs = base + (1 if r < extra else 0)
        workers = [state if K == 1 else state.clone() for _ in range(K)]
        for k in range(K):
            _run_epochs(workers[k], shards[k], epochs, rngs[k])
        if K > 1:
            state.theta = np.mean([w.theta for w in workers], axis=0)
            if state.calibrators.num_free:
                state.calibrators.set_alpha(
                    np.mean([w.calibrators.alpha() for w in workers], axis=0)
                )
    return state


def train(data, specs: list[FeatureSpec], config: TrainConfig):
    """Train on one worker (any ``workers`` setting in the config is ignored)."""
    if config.workers != 1:
        config = replace(config, workers=1)
    return _finish(_train_workers(data, specs, config), specs, config)


def parallel_train(data, specs: list[FeatureSpec], config: TrainConfig):
    """Train with config.workers shards and averaging; K=1 matches train()."""
    return _finish(_train_workers(data, specs, config), specs, config)


def _finish(state: TrainerState, specs, config: TrainConfig):
    from .model import Model

    return Model(
        specs=list(specs),
        shape=state.shape,
        theta=state.theta,
        calibrators=state.calibrators,
        kind=config.kind,
        loss=config.loss,
        metadata={
            "seed": config.seed,
            "epochs": config.epochs,
            "minibatch_size": config.minibatch_size,
            "step_size": config.step_size,
            "calibrator_step_scale": config.calibrator_step_scale,
            "workers": config.workers,
            "sync_rounds": config.sync_rounds,
            "regularizers": [
                {
                    "kind": cfg.kind.value,
                    "weight": cfg.weight,
                    "sample_count": cfg.sample_count,
                }
                for cfg in config.regularizers
            ],
        },
    )


# --------------------------------------------------------------------------
# objective and metrics


def objective(state: TrainerState, indices=None) -> float:
    """Mean loss over the data plus weighted regularizer values."""
    n = _num_samples(state.data)
    if indices is None:
        indices = range(n)
    total = 0.0
    count = 0
    for i in indices:
        z, y, _ = _sample_terms(state, i, False)
        total += loss_value(state.config.loss, y, z)
        count += 1
    total /= max(count, 1)
    for cfg, terms in state.reg_terms:
        total += cfg.weight * regularizer_value(state.theta, terms)
    return total


def model_objective(model, data, config: TrainConfig) -> float:
    """Objective of a finished model on ``data`` under ``config``'s loss."""
    state = TrainerState(
        shape=model.shape,
        theta=np.asarray(model.theta, dtype=float),
        calibrators=model.calibrators,
        config=config,
        data=data,
        theta_constraints=ConstraintSet(model.shape.num_parameters),
        alpha_constraints=ConstraintSet(model.calibrators.num_free),
        reg_terms=[
            (cfg, regularizer_terms(model.shape, cfg.kind)) for cfg in config.regularizers
        ],
    )
    return objective(state)


def evaluate_metrics(model, data) -> dict:
    """RMSE for labeled rows (plus accuracy/log-loss when labels are {0,1});
    pairwise accuracy for pair data, ties counted half."""
    if isinstance(data, PairDataset):
        wins = 0.0
        n = data.num_pairs
        for i in range(n):
            zp = model.predict_row(data.plus_row(i))
            zm = model.predict_row(data.minus_row(i))
            if zp > zm:
                wins += 1.0
            elif zp == zm:
                wins += 0.5
        return {"num_pairs": n, "pair_accuracy": wins / n if n else float("nan")}
    if data.labels is None:
        raise ValueError("dataset has no labels to evaluate against")
    scores = np.array([model.predict_row(data.row(i)) for i in range(data.num_rows)])
    labels = np.asarray(data.labels, dtype=float)
    out: dict = {"num_rows": int(len(labels))}
    out["rmse"] = float(np.sqrt(np.mean((scores - labels) ** 2)))
    if np.isin(labels, (0.0, 1.0)).all() and len(labels):
        if model.loss is Loss.LOGISTIC:
            probs = 1.0 / (1.0 + np.exp(-scores))
        else:
            probs = np.clip(scores, 1e-12, 1.0 - 1e-12)
        out["accuracy"] = float(np.mean((probs >= 0.5) == (labels == 1.0)))
        out["log_loss"] = float(
            -np.mean(labels * np.log(probs) + (1.0 - labels) * np.log(1.0 - probs))
        )
    return out
