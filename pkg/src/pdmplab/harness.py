"""Training loop with gradient modulation, plus sweeps and comparisons.

A run is fully determined by (config, seed): data, init and shuffling come
from purpose-keyed child seeds, batches are consecutive chunks of the epoch
permutation, and the optimizer is momentum SGD

    v <- momentum * v + g_modulated + weight_decay * theta
    theta <- theta - learning_rate * v

Metrics CSV columns (exact order): epoch, train_loss, val_acc,
branch_acc_0..K-1, w_mean, share_0..K-1. The per-epoch coefficient w_mean is
the ratio of epoch-accumulated absolute contributions (modality 0 over
modality 1); shares are each modality's fraction of the epoch total.
"""

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import datagen, metrics, model, modulate, numkit
from .datagen import Dataset
from .errors import ConfigError, DivergenceError, InputError
from .modulate import Balanced, NaiveLRScale, PDMP, Strategy, Vanilla
from .numkit import Rng, child_seed

DEFAULT_GAMMA_P = 8.0
DEFAULT_ALPHA = 1.0


@dataclass(frozen=True)
class TrainConfig:
    dataset: str
    fusion: str = "concat"
    encoder_widths: tuple[int, ...] = (64, 64, 32)
    epochs: int = 60
    batch_size: int = 32
    learning_rate: float = 0.005
    momentum: float = 0.9
    weight_decay: float = 1e-4
    strategy: dict = field(default_factory=lambda: {"kind": "vanilla"})
    seed: int = 0
    eval_every: int = 1
    scale_head_partitions: bool = False


_STRATEGY_KEYS = {
    "vanilla": set(),
    "pdmp": {"gamma_p"},
    "balanced": {"alpha"},
    "naive_lr_scale": {"k"},
}


def validate_strategy_spec(spec: dict) -> dict:
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError(f"strategy must be an object with a 'kind' key, got {spec!r}")
    kind = spec["kind"]
    if kind not in _STRATEGY_KEYS:
        raise ConfigError(
            f"unknown strategy kind {kind!r}; known: {sorted(_STRATEGY_KEYS)}"
        )
    extra = set(spec) - {"kind"} - _STRATEGY_KEYS[kind]
    if extra:
        raise ConfigError(f"unknown strategy keys for {kind!r}: {sorted(extra)}")
    return dict(spec)


def config_from_dict(raw: dict) -> TrainConfig:
    known = {f.name for f in dataclasses.fields(TrainConfig)}
    extra = set(raw) - known
    if extra:
        raise ConfigError(f"unknown config keys: {sorted(extra)}")
    if "dataset" not in raw:
        raise ConfigError("config must name a dataset (preset name or directory)")
    merged = dict(raw)
    if "encoder_widths" in merged:
        merged["encoder_widths"] = tuple(int(w) for w in merged["encoder_widths"])
    cfg = TrainConfig(**merged)
    validate_config(cfg)
    return cfg


def validate_config(cfg: TrainConfig) -> None:
    if cfg.fusion not in model.FUSION_KINDS:
        raise ConfigError(f"unknown fusion kind {cfg.fusion!r}; known: {model.FUSION_KINDS}")
    if cfg.epochs < 1:
        raise ConfigError(f"epochs must be >= 1, got {cfg.epochs}")
    if cfg.batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {cfg.batch_size}")
    if not cfg.learning_rate > 0:
        raise ConfigError(f"learning_rate must be > 0, got {cfg.learning_rate}")
    if not 0 <= cfg.momentum < 1:
        raise ConfigError(f"momentum must be in [0, 1), got {cfg.momentum}")
    if cfg.weight_decay < 0:
        raise ConfigError(f"weight_decay must be >= 0, got {cfg.weight_decay}")
    if cfg.eval_every < 1:
        raise ConfigError(f"eval_every must be >= 1, got {cfg.eval_every}")
    if not cfg.encoder_widths or any(w < 1 for w in cfg.encoder_widths):
        raise ConfigError(f"encoder_widths must be positive, got {cfg.encoder_widths}")
    if not 0 <= cfg.seed < 2**64:
        raise ConfigError(f"seed must be a 64-bit unsigned integer, got {cfg.seed}")
    validate_strategy_spec(cfg.strategy)


def config_to_dict(cfg: TrainConfig) -> dict:
    out = dataclasses.asdict(cfg)
    out["encoder_widths"] = list(cfg.encoder_widths)
    return out


def load_config(path: str | Path) -> TrainConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return config_from_dict(raw)


def build_strategy(spec: dict, profile=None) -> Strategy:
    spec = validate_strategy_spec(spec)
    kind = spec["kind"]
    if kind == "vanilla":
        return Vanilla()
    if kind == "pdmp":
        if profile is None:
            raise ConfigError("pdmp strategy requires a modality profile")
        return PDMP(gamma_p=float(spec.get("gamma_p", DEFAULT_GAMMA_P)), profile=profile)
    if kind == "balanced":
        return Balanced(alpha=float(spec.get("alpha", DEFAULT_ALPHA)))
    if "k" not in spec:
        raise ConfigError("naive_lr_scale strategy requires 'k'")
    return NaiveLRScale(k=float(spec["k"]))


def resolve_dataset(cfg: TrainConfig) -> Dataset:
    """Preset names regenerate per run seed; directory paths load fixed data."""
    name = cfg.dataset
    if name in datagen.PRESET_NAMES:
        spec = datagen.with_seed(datagen.preset(name), child_seed(cfg.seed, "data"))
        return datagen.generate(spec)
    path = Path(name)
    if path.is_dir():
        return datagen.load_dataset(path)
    raise ConfigError(
        f"dataset {name!r} is neither a preset ({', '.join(datagen.PRESET_NAMES)}) "
        f"nor an existing directory"
    )


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_acc: float
    branch_acc: tuple[float, ...]
    w_mean: float
    shares: tuple[float, ...]


@dataclass
class MetricsLog:
    records: list[EpochRecord]
    test_acc: float
    test_macro_f1: float
    num_modalities: int
    final_state: model.ModelState | None = field(default=None, repr=False, compare=False)


def metrics_csv_header(k: int) -> str:
    cols = ["epoch", "train_loss", "val_acc"]
    cols += [f"branch_acc_{i}" for i in range(k)]
    cols.append("w_mean")
    cols += [f"share_{i}" for i in range(k)]
    return ",".join(cols)


def metrics_to_csv(log: MetricsLog) -> str:
    lines = [metrics_csv_header(log.num_modalities)]
    for r in log.records:
        cells = [str(r.epoch), repr(r.train_loss), repr(r.val_acc)]
        cells += [repr(v) for v in r.branch_acc]
        cells.append(repr(r.w_mean))
        cells += [repr(v) for v in r.shares]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def write_metrics(log: MetricsLog, path: str | Path) -> None:
    path = Path(path)
    path.write_text(metrics_to_csv(log))
    summary = {"test_acc": log.test_acc, "test_macro_f1": log.test_macro_f1}
    path.with_name(path.stem + "_summary.json").write_text(
        json.dumps(summary, indent=2) + "\n"
    )


def _sgd_step(pairs, velocity, lr: float, mu: float, lam: float) -> None:
    for (p, g), v in zip(pairs, velocity):
        v *= mu
        v += g
        if lam != 0.0:
            v += lam * p
        p -= lr * v


def train(cfg: TrainConfig, profile=None, dataset: Dataset | None = None) -> MetricsLog:
    """Run one training job; deterministic in (cfg, seed).

    PDMP requires a profile; other strategies ignore it. Raises
    DivergenceError (naming the epoch) on a non-finite training loss.
    """
    validate_config(cfg)
    ds = dataset if dataset is not None else resolve_dataset(cfg)
    k = ds.num_modalities
    m = ds.num_classes
    strategy = build_strategy(cfg.strategy, profile)
    if isinstance(strategy, PDMP):
        if not (0 <= strategy.profile.m_p < k and 0 <= strategy.profile.m_o < k):
            raise ConfigError(
                f"profile indices (m_p={strategy.profile.m_p}, m_o={strategy.profile.m_o}) "
                f"inconsistent with {k} modalities"
            )

    state = model.init_model(ds.input_dims, m, list(cfg.encoder_widths), cfg.fusion,
                             Rng(child_seed(cfg.seed, "init")))
    shuffle_rng = Rng(child_seed(cfg.seed, "shuffle"))
    velocity = [np.zeros_like(p) for p in model._param_arrays(state)]

    train_split = ds.splits["train"]
    val_split = ds.splits["val"]
    test_split = ds.splits["test"]
    n = train_split.size
    records: list[EpochRecord] = []

    for epoch in range(1, cfg.epochs + 1):
        perm = shuffle_rng.permutation(n)
        loss_total = 0.0
        abs_totals = [0.0] * k
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            feats = [f[idx] for f in train_split.features]
            labels = train_split.labels[idx]
            _, cache = model.forward(state, feats)
            loss, grads = model.backward(cache, labels)
            if not math.isfinite(loss):
                raise DivergenceError(epoch)
            batch_abs = [modulate._abs_sum(cache.s[i]) for i in range(k)]
            grand = 0.0
            for t in batch_abs:
                grand += t
            coeff = None
            if grand > 0.0:
                shares = tuple(t / grand for t in batch_abs)
                w = (shares[0] / shares[1] if k >= 2 and shares[1] > 0
                     else float("nan"))
                coeff = modulate.DependencyCoefficient(w=w, shares=shares)
            if coeff is None and isinstance(strategy, Balanced):
                mod_grads = grads  # nothing dominates a zero-contribution batch
            else:
                mod_grads = modulate.apply_strategy(
                    grads, strategy, coeff, cfg.scale_head_partitions
                )
            _sgd_step(model.param_grad_pairs(state, mod_grads), velocity,
                      cfg.learning_rate, cfg.momentum, cfg.weight_decay)
            loss_total += loss * idx.shape[0]
            for i in range(k):
                abs_totals[i] += batch_abs[i]

        if epoch % cfg.eval_every == 0 or epoch == cfg.epochs:
            _, val_cache = model.forward(state, val_split.features)
            val_pred = np.argmax(val_cache.logits, axis=1)
            branch = tuple(
                metrics.accuracy(model.branch_predictions(val_cache, i), val_split.labels)
                for i in range(k)
            )
            grand = 0.0
            for t in abs_totals:
                grand += t
            if grand > 0.0:
                shares = tuple(t / grand for t in abs_totals)
                w_mean = (abs_totals[0] / abs_totals[1]
                          if k >= 2 and abs_totals[1] > 0 else float("nan"))
            else:
                shares = tuple(float("nan") for _ in range(k))
                w_mean = float("nan")
            records.append(EpochRecord(
                epoch=epoch,
                train_loss=loss_total / n,
                val_acc=metrics.accuracy(val_pred, val_split.labels),
                branch_acc=branch,
                w_mean=w_mean,
                shares=shares,
            ))

    test_pred = model.predict(state, test_split.features)
    return MetricsLog(
        records=records,
        test_acc=metrics.accuracy(test_pred, test_split.labels),
        test_macro_f1=metrics.macro_f1(test_pred, test_split.labels, m),
        num_modalities=k,
        final_state=state,
    )


# ---------------------------------------------------------------------------
# Sweeps and strategy comparisons
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RunResult:
    label: str
    seed: int
    test_acc: float
    test_macro_f1: float
    diverged: bool


@dataclass
class SweepRow:
    gamma_p: float
    mean_acc: float
    std_acc: float
    n_seeds: int
    n_diverged: int


@dataclass
class SweepResult:
    rows: list[SweepRow]
    raw: list[RunResult]


def _aggregate(values: list[float]) -> tuple[float, float]:
    ok = [v for v in values if math.isfinite(v)]
    if not ok:
        return float("nan"), float("nan")
    mean = sum(ok) / len(ok)
    var = sum((v - mean) ** 2 for v in ok) / len(ok)
    return mean, math.sqrt(var)


def _profile_for(cfg: TrainConfig, dataset: Dataset):
    from . import analyze  # local import: analyze builds on this module

    return analyze.run_modality_analysis(
        dataset, cfg, analyze.AnalysisConfig()
    ).profile


def sweep_gamma(base_config: TrainConfig, gammas: list[float],
                seeds: list[int]) -> SweepResult:
    """Train the prioritization strategy across a gamma_p grid and seeds.

    Each seed resolves its dataset and modality profile once, shared across
    the whole gamma row. Diverged runs are recorded (nan accuracy) rather
    than propagated: instability at large gamma_p is part of the result.
    """
    if len(gammas) < 1:
        raise InputError("gamma grid must not be empty")
    if any(g < 1 for g in gammas):
        raise InputError(f"gamma values must be >= 1, got {sorted(gammas)}")
    raw: list[RunResult] = []
    per_gamma: dict[float, list[float]] = {g: [] for g in gammas}
    for seed in seeds:
        cfg = dataclasses.replace(base_config, seed=seed)
        dataset = resolve_dataset(cfg)
        profile = _profile_for(cfg, dataset)
        for g in gammas:
            run_cfg = dataclasses.replace(cfg, strategy={"kind": "pdmp", "gamma_p": g})
            label = f"pdmp(gamma_p={g:g})"
            try:
                log = train(run_cfg, profile=profile, dataset=dataset)
            except DivergenceError:
                raw.append(RunResult(label, seed, float("nan"), float("nan"), True))
                per_gamma[g].append(float("nan"))
            else:
                raw.append(RunResult(label, seed, log.test_acc, log.test_macro_f1, False))
                per_gamma[g].append(log.test_acc)
    rows = []
    for g in gammas:
        mean, std = _aggregate(per_gamma[g])
        n_div = sum(1 for v in per_gamma[g] if not math.isfinite(v))
        rows.append(SweepRow(gamma_p=g, mean_acc=mean, std_acc=std,
                             n_seeds=len(seeds), n_diverged=n_div))
    return SweepResult(rows=rows, raw=raw)


@dataclass
class CompareRow:
    strategy: str
    mean_acc: float
    std_acc: float
    mean_macro_f1: float
    n_seeds: int
    n_diverged: int


@dataclass
class CompareResult:
    rows: list[CompareRow]
    raw: list[RunResult]


def strategy_label(spec: dict) -> str:
    kind = spec["kind"]
    if kind == "pdmp":
        return f"pdmp(gamma_p={float(spec.get('gamma_p', DEFAULT_GAMMA_P)):g})"
    if kind == "balanced":
        return f"balanced(alpha={float(spec.get('alpha', DEFAULT_ALPHA)):g})"
    if kind == "naive_lr_scale":
        return f"naive_lr_scale(k={float(spec['k']):g})"
    return kind


def compare_strategies(base_config: TrainConfig, strategies: list[dict],
                       seeds: list[int]) -> CompareResult:
    """Paired multi-seed comparison: same data, init and batch order per seed."""
    if len(strategies) < 2:
        raise InputError(f"need at least 2 strategies, got {len(strategies)}")
    if len(seeds) < 3:
        raise InputError(f"need at least 3 seeds, got {len(seeds)}")
    specs = [validate_strategy_spec(s) for s in strategies]
    needs_profile = any(s["kind"] == "pdmp" for s in specs)
    raw: list[RunResult] = []
    accs: list[list[float]] = [[] for _ in specs]
    f1s: list[list[float]] = [[] for _ in specs]
    for seed in seeds:
        cfg = dataclasses.replace(base_config, seed=seed)
        dataset = resolve_dataset(cfg)
        profile = _profile_for(cfg, dataset) if needs_profile else None
        for pos, spec in enumerate(specs):
            run_cfg = dataclasses.replace(cfg, strategy=spec)
            label = strategy_label(spec)
            try:
                log = train(run_cfg, profile=profile, dataset=dataset)
            except DivergenceError:
                raw.append(RunResult(label, seed, float("nan"), float("nan"), True))
                accs[pos].append(float("nan"))
                f1s[pos].append(float("nan"))
            else:
                raw.append(RunResult(label, seed, log.test_acc, log.test_macro_f1, False))
                accs[pos].append(log.test_acc)
                f1s[pos].append(log.test_macro_f1)
    rows = []
    for pos, spec in enumerate(specs):
        mean, std = _aggregate(accs[pos])
        f1_mean, _ = _aggregate(f1s[pos])
        rows.append(CompareRow(
            strategy=strategy_label(spec), mean_acc=mean, std_acc=std,
            mean_macro_f1=f1_mean, n_seeds=len(seeds),
            n_diverged=sum(1 for v in accs[pos] if not math.isfinite(v)),
        ))
    return CompareResult(rows=rows, raw=raw)


def sweep_to_csv(result: SweepResult) -> str:
    lines = ["gamma_p,mean_acc,std_acc,n_seeds,n_diverged"]
    for r in result.rows:
        lines.append(f"{r.gamma_p:g},{r.mean_acc!r},{r.std_acc!r},{r.n_seeds},{r.n_diverged}")
    return "\n".join(lines) + "\n"


def compare_to_csv(result: CompareResult) -> str:
    lines = ["strategy,mean_acc,std_acc,mean_macro_f1,n_seeds,n_diverged"]
    for r in result.rows:
        lines.append(f"{r.strategy},{r.mean_acc!r},{r.std_acc!r},"
                     f"{r.mean_macro_f1!r},{r.n_seeds},{r.n_diverged}")
    return "\n".join(lines) + "\n"


def raw_to_csv(raw: list[RunResult]) -> str:
    lines = ["strategy,seed,test_acc,test_macro_f1,diverged"]
    for r in raw:
        lines.append(f"{r.label},{r.seed},{r.test_acc!r},{r.test_macro_f1!r},"
                     f"{int(r.diverged)}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Gradient-check suite (CLI `gradcheck`)
# ---------------------------------------------------------------------------

def run_gradcheck(num_configs: int = 24, eps: float = 1e-5, tol: float = 1e-4,
                  base_seed: int = 0) -> tuple[bool, list[float]]:
    """Analytic backward vs central differences over random model configs.

    Cycles through all fusion kinds and K in {2, 3}; returns per-config max
    relative error (denominator max(|a|, |b|, 1e-8)).
    """
    errors = []
    for c in range(num_configs):
        rng = Rng(child_seed(base_seed, f"gradcheck:{c}"))
        k = 2 + c % 2
        fusion = model.FUSION_KINDS[c % 3]
        m = 3 + c % 3
        dims = [3 + (c + i) % 4 for i in range(k)]
        widths = [5 + c % 3, 4]
        state = model.init_model(dims, m, widths, fusion, rng.child("init"))
        batch = 3 + c % 3
        feats = [rng.child(f"x{i}").normal((batch, d)) for i, d in enumerate(dims)]
        labels = (rng.child("y").random_u64(batch) % np.uint64(m)).astype(np.int64)
        _, cache = model.forward(state, feats)
        _, grads = model.backward(cache, labels)

        def loss_of(flat, _state=state, _feats=feats, _labels=labels):
            st = model.unflatten_like(_state, flat)
            logits, _ = model.forward(st, _feats)
            return numkit.softmax_cross_entropy(logits, _labels)[0]

        fd = numkit.finite_diff_grad(loss_of, model.flatten_params(state), eps)
        errors.append(numkit.max_relative_error(model.flatten_grads(grads), fd))
    return max(errors) < tol, errors
