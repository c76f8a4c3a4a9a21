"""Synthetic multimodal classification datasets with controllable dominance.

Construction per modality: class means drawn uniformly on a sphere of radius
``class_sep`` in R^dim; a latent sample is mean + isotropic Gaussian noise;
the observed feature vector is that latent point, RMS-normalized and passed
through ``warp_depth`` fixed random tanh-affine layers. The warp layers are
injective (orthogonal affine part, tanh bijective), so they slow learning
without changing what is attainable in principle; the Monte-Carlo Bayes
oracle therefore classifies in the pre-warp latent, which upper-bounds any
classifier on the observed features and is exact at warp_depth 0.

Stream seeding: every random ingredient comes from a child seed of
``DatasetSpec.seed`` keyed by purpose. Means and warp parameters are keyed
by the modality's *content* (its parameter string), so identical specs get
identical geometry and reordering modalities permutes the dataset exactly.
Noise is keyed by (split, content); labels by split.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import numkit
from .errors import InputError, SpecValidationError
from .numkit import Rng, child_seed

# Warp layer anisotropy: singular values log-uniform in [MIN, MAX]. Small
# values bury part of the class signal at tiny feature scales, which slows
# gradient-descent learning without destroying information (the map stays
# injective), so warp_depth controls convergence speed almost independently
# of noise_sigma's accuracy ceiling.
WARP_SCALE_MIN = 0.10
WARP_SCALE_MAX = 1.4
WARP_OFFSET_SCALE = 0.1


@dataclass(frozen=True)
class ModalitySpec:
    """Knobs controlling one modality's difficulty.

    noise_sigma sets attainable accuracy (information); warp_depth sets how
    hard the decision surface is to learn (convergence speed) without
    changing the latent information.
    """

    dim: int
    class_sep: float
    noise_sigma: float
    warp_depth: int = 0

    def validate(self) -> None:
        if self.dim < 1:
            raise SpecValidationError(f"modality dim must be >= 1, got {self.dim}")
        if not self.class_sep > 0:
            raise SpecValidationError(f"class_sep must be > 0, got {self.class_sep}")
        if not self.noise_sigma > 0:
            raise SpecValidationError(f"noise_sigma must be > 0, got {self.noise_sigma}")
        if self.warp_depth < 0:
            raise SpecValidationError(f"warp_depth must be >= 0, got {self.warp_depth}")


@dataclass(frozen=True)
class DatasetSpec:
    num_classes: int
    modalities: tuple[ModalitySpec, ...]
    n_train: int
    n_val: int
    n_test: int
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "modalities", tuple(self.modalities))

    def validate(self) -> None:
        if self.num_classes < 2:
            raise SpecValidationError(f"num_classes must be >= 2, got {self.num_classes}")
        if len(self.modalities) < 2:
            raise SpecValidationError(
                f"need at least 2 modalities, got {len(self.modalities)}"
            )
        for mod in self.modalities:
            mod.validate()
        for name, count in (("n_train", self.n_train), ("n_val", self.n_val),
                            ("n_test", self.n_test)):
            if count < self.num_classes:
                raise SpecValidationError(
                    f"{name} must be >= num_classes ({self.num_classes}), got {count}"
                )

    @property
    def num_modalities(self) -> int:
        return len(self.modalities)


@dataclass
class Split:
    features: list[np.ndarray]  # one (n, dim_i) array per modality
    labels: np.ndarray          # (n,) int64

    @property
    def size(self) -> int:
        return int(self.labels.shape[0])


@dataclass
class Dataset:
    spec: DatasetSpec
    splits: dict[str, Split] = field(default_factory=dict)

    @property
    def num_modalities(self) -> int:
        # from the data, not the spec: projected single-modality views stay valid
        return len(self.splits["train"].features)

    @property
    def num_classes(self) -> int:
        return self.spec.num_classes

    @property
    def input_dims(self) -> list[int]:
        return [f.shape[1] for f in self.splits["train"].features]


def _content_key(mod: ModalitySpec, num_classes: int) -> str:
    return (f"dim={mod.dim},sep={mod.class_sep!r},sigma={mod.noise_sigma!r},"
            f"warp={mod.warp_depth},classes={num_classes}")


def _class_means(spec: DatasetSpec, mod: ModalitySpec) -> np.ndarray:
    rng = Rng(child_seed(spec.seed, "means:" + _content_key(mod, spec.num_classes)))
    raw = rng.normal((spec.num_classes, mod.dim))
    norms = np.sqrt(np.add.reduce(raw * raw, axis=1))
    return raw * (mod.class_sep / norms)[:, np.newaxis]


def _random_orthogonal(rng: Rng, dim: int) -> np.ndarray:
    gauss = rng.normal((dim, dim))
    q, r = np.linalg.qr(gauss)
    return q * np.sign(np.diag(r))  # canonical sign, determinism


def _warp_layers(spec: DatasetSpec, mod: ModalitySpec) -> list[tuple[np.ndarray, np.ndarray]]:
    """Fixed (anisotropic mixing matrix, offset) pairs for each warp layer."""
    rng = Rng(child_seed(spec.seed, "warp:" + _content_key(mod, spec.num_classes)))
    layers = []
    log_lo, log_hi = np.log(WARP_SCALE_MIN), np.log(WARP_SCALE_MAX)
    for _ in range(mod.warp_depth):
        q_left = _random_orthogonal(rng, mod.dim)
        q_right = _random_orthogonal(rng, mod.dim)
        scales = np.exp(log_lo + (log_hi - log_lo) * rng.uniform(mod.dim))
        mix = q_left @ (scales[:, np.newaxis] * q_right)
        offset = WARP_OFFSET_SCALE * rng.normal(mod.dim)
        layers.append((mix, offset))
    return layers


def _latent_rms(mod: ModalitySpec) -> float:
    """Per-coordinate RMS of the latent signal, used to normalize features."""
    return float(np.sqrt(mod.class_sep**2 / mod.dim + mod.noise_sigma**2))


def _observe(latent: np.ndarray, mod: ModalitySpec,
             layers: list[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    v = latent / _latent_rms(mod)
    for w, c in layers:
        v = np.tanh(numkit.affine(v, w, c))
    return v


def _balanced_labels(n: int, num_classes: int, rng: Rng) -> np.ndarray:
    base = np.arange(n, dtype=np.int64) % num_classes
    return base[rng.permutation(n)]


def generate(spec: DatasetSpec) -> Dataset:
    """Deterministically generate all three splits for a spec."""
    spec.validate()
    means = [_class_means(spec, mod) for mod in spec.modalities]
    warps = [_warp_layers(spec, mod) for mod in spec.modalities]
    dataset = Dataset(spec=spec)
    for split_name, count in (("train", spec.n_train), ("val", spec.n_val),
                              ("test", spec.n_test)):
        label_rng = Rng(child_seed(spec.seed, f"labels:{split_name}"))
        labels = _balanced_labels(count, spec.num_classes, label_rng)
        features = []
        for mod, mu, layers in zip(spec.modalities, means, warps):
            key = _content_key(mod, spec.num_classes)
            noise_rng = Rng(child_seed(spec.seed, f"noise:{split_name}:{key}"))
            latent = mu[labels] + mod.noise_sigma * noise_rng.normal((count, mod.dim))
            features.append(_observe(latent, mod, layers))
        dataset.splits[split_name] = Split(features=features, labels=labels)
    return dataset


@dataclass
class BayesRanking:
    accuracies: list[float]   # per modality, estimated optimal accuracy
    ranking: list[int]        # modality indices, best first, ties to lower index
    n_mc: int

    @property
    def top(self) -> int:
        return self.ranking[0]


def bayes_ranking(spec: DatasetSpec, n_mc: int = 10000) -> BayesRanking:
    """Monte-Carlo estimate of each modality's optimal accuracy.

    Classifies fresh latent samples with the true Gaussian class-conditional
    likelihood (nearest mean under isotropic equal-variance noise). For
    warped modalities this is evaluated on the pre-warp latent signal, an
    upper bound on what any observer of the warped features can attain.
    """
    spec.validate()
    if n_mc < 10 * spec.num_classes:
        raise InputError(
            f"n_mc must be >= 10 * num_classes ({10 * spec.num_classes}), got {n_mc}"
        )
    accuracies = []
    for mod in spec.modalities:
        key = _content_key(mod, spec.num_classes)
        mu = _class_means(spec, mod)
        rng = Rng(child_seed(spec.seed, f"bayes:{key}"))
        labels = np.arange(n_mc, dtype=np.int64) % spec.num_classes
        latent = mu[labels] + mod.noise_sigma * rng.normal((n_mc, mod.dim))
        # argmax_c -||u - mu_c||^2 == argmin_c squared distance
        cross = numkit.affine(latent, mu, np.zeros(spec.num_classes))
        mu_sq = np.add.reduce(mu * mu, axis=1)
        scores = 2.0 * cross - mu_sq
        pred = np.argmax(scores, axis=1)
        accuracies.append(float(np.count_nonzero(pred == labels) / n_mc))
    order = sorted(range(len(accuracies)), key=lambda i: (-accuracies[i], i))
    return BayesRanking(accuracies=accuracies, ranking=order, n_mc=n_mc)


def mc_std(accuracy: float, n_mc: int) -> float:
    """Binomial standard error of a Monte-Carlo accuracy estimate."""
    return float(np.sqrt(max(accuracy * (1.0 - accuracy), 1e-12) / n_mc))


PRESET_NAMES = ("cremad-like", "ave-like", "cefa-like")


def preset(name: str) -> DatasetSpec:
    """Canonical regimes for the experiments.

    cremad-like: modality 0 is easy to learn but noisy (information-poor);
    modality 1 is low-noise (information-rich) but hidden behind warp layers,
    so it converges slowly. The best modality by final accuracy is therefore
    not the one that dominates early optimization.

    ave-like: modality 0 is both information-rich and fast; balancing
    strategies have nothing to fix here.

    cefa-like: three modalities with a strict attainable-accuracy ordering.
    """
    if name == "cremad-like":
        return DatasetSpec(
            num_classes=6,
            modalities=(
                ModalitySpec(dim=6, class_sep=3.0, noise_sigma=1.5, warp_depth=0),
                ModalitySpec(dim=24, class_sep=3.0, noise_sigma=0.8, warp_depth=3),
            ),
            n_train=1536, n_val=384, n_test=384, seed=2024_0801,
        )
    if name == "ave-like":
        return DatasetSpec(
            num_classes=6,
            modalities=(
                ModalitySpec(dim=24, class_sep=3.0, noise_sigma=0.8, warp_depth=2),
                ModalitySpec(dim=24, class_sep=3.0, noise_sigma=2.0, warp_depth=3),
            ),
            n_train=1536, n_val=384, n_test=384, seed=2024_0802,
        )
    if name == "cefa-like":
        return DatasetSpec(
            num_classes=4,
            modalities=(
                ModalitySpec(dim=8, class_sep=3.0, noise_sigma=0.8, warp_depth=0),
                ModalitySpec(dim=16, class_sep=3.0, noise_sigma=1.4, warp_depth=0),
                ModalitySpec(dim=24, class_sep=3.0, noise_sigma=2.2, warp_depth=0),
            ),
            n_train=1536, n_val=384, n_test=384, seed=2024_0803,
        )
    raise InputError(f"unknown preset {name!r}; known: {', '.join(PRESET_NAMES)}")


def with_seed(spec: DatasetSpec, seed: int) -> DatasetSpec:
    return DatasetSpec(
        num_classes=spec.num_classes, modalities=spec.modalities,
        n_train=spec.n_train, n_val=spec.n_val, n_test=spec.n_test, seed=seed,
    )


def stratified_subset(split: Split, fraction: float, rng: Rng, num_classes: int) -> Split:
    """Class-stratified subsample of a split, counts balanced within one."""
    if not 0 < fraction <= 1:
        raise InputError(f"subset fraction must be in (0, 1], got {fraction}")
    n_take = int(np.floor(fraction * split.size))
    if n_take < num_classes:
        raise InputError(
            f"subset of {n_take} samples cannot cover {num_classes} classes"
        )
    take_per_class = [n_take // num_classes + (1 if c < n_take % num_classes else 0)
                      for c in range(num_classes)]
    chosen: list[np.ndarray] = []
    for c in range(num_classes):
        idx = np.flatnonzero(split.labels == c)
        perm = rng.permutation(idx.size)
        chosen.append(idx[perm[: min(take_per_class[c], idx.size)]])
    order = np.sort(np.concatenate(chosen))
    return Split(features=[f[order] for f in split.features], labels=split.labels[order])


def project_modality(split: Split, index: int) -> Split:
    """Single-modality view of a split (for unimodal training)."""
    return Split(features=[split.features[index]], labels=split.labels)


def project_dataset(dataset: Dataset, index: int) -> Dataset:
    return Dataset(spec=dataset.spec, splits={
        name: project_modality(split, index) for name, split in dataset.splits.items()
    })


# ---------------------------------------------------------------------------
# On-disk format: header.json with the spec and split sizes, plus one CSV per
# split. CSV row: label, then modality-0 features, modality-1 features, ...
# Floats are written with repr() so reloads round-trip exactly.
# ---------------------------------------------------------------------------

def save_dataset(dataset: Dataset, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec = dataset.spec
    header = {
        "num_classes": spec.num_classes,
        "modalities": [
            {"dim": m.dim, "class_sep": m.class_sep,
             "noise_sigma": m.noise_sigma, "warp_depth": m.warp_depth}
            for m in spec.modalities
        ],
        "n_train": spec.n_train, "n_val": spec.n_val, "n_test": spec.n_test,
        "seed": spec.seed,
        "split_sizes": {name: s.size for name, s in dataset.splits.items()},
    }
    (out / "header.json").write_text(json.dumps(header, indent=2) + "\n")
    for name, split in dataset.splits.items():
        lines = []
        for row in range(split.size):
            cells = [str(int(split.labels[row]))]
            for feats in split.features:
                cells.extend(repr(float(v)) for v in feats[row])
            lines.append(",".join(cells))
        (out / f"{name}.csv").write_text("\n".join(lines) + "\n")


def load_dataset(in_dir: str | Path) -> Dataset:
    src = Path(in_dir)
    header = json.loads((src / "header.json").read_text())
    spec = DatasetSpec(
        num_classes=header["num_classes"],
        modalities=tuple(ModalitySpec(**m) for m in header["modalities"]),
        n_train=header["n_train"], n_val=header["n_val"], n_test=header["n_test"],
        seed=header["seed"],
    )
    dims = [m.dim for m in spec.modalities]
    dataset = Dataset(spec=spec)
    for name in ("train", "val", "test"):
        rows = [line.split(",") for line in
                (src / f"{name}.csv").read_text().strip("\n").split("\n")]
        labels = np.array([int(r[0]) for r in rows], dtype=np.int64)
        flat = np.array([[float(v) for v in r[1:]] for r in rows])
        features, col = [], 0
        for d in dims:
            features.append(np.ascontiguousarray(flat[:, col:col + d]))
            col += d
        dataset.splits[name] = Split(features=features, labels=labels)
    return dataset
