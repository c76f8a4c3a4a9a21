"""Multimodal MLP family: per-modality encoders, fusion head, exact backward.

Encoders are relu MLPs (last layer linear). The head owns one weight block
W_i (classes x d_i) per modality plus bias terms; fused logits decompose
additively into per-modality contributions s_i:

    concat     logits = sum_i W_i z_i + b          s_i = W_i z_i + b/K
    summation  logits = sum_i (W_i z_i + b_i)      s_i = W_i z_i + b_i
    gated      logits = sum_i g_i * (W_i z_i + b_i), scalar sigmoid gate g_i

Parameter flattening order (checkpoints, gradient checking): for each
modality, each encoder layer's W row-major then b; then head W_0..W_{K-1};
then head bias(es); then, for gated, gate weights v_0..v_{K-1} and gate
biases c_0..c_{K-1}.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import numkit
from .errors import InputError, ShapeError
from .numkit import Rng

FUSION_KINDS = ("concat", "summation", "gated")


@dataclass
class HeadParams:
    kind: str
    weights: list[np.ndarray]       # W_i, (M, d_i)
    biases: list[np.ndarray]        # [b] for concat; [b_0..b_{K-1}] otherwise
    gate_weights: list[np.ndarray]  # gated only: v_i, (d_i,)
    gate_biases: list[np.ndarray]   # gated only: c_i, (1,)


@dataclass
class ModelState:
    encoders: list[list[tuple[np.ndarray, np.ndarray]]]  # per modality: [(W, b), ...]
    head: HeadParams
    input_dims: list[int]
    encoder_widths: list[int]
    num_classes: int

    @property
    def num_modalities(self) -> int:
        return len(self.encoders)

    @property
    def embed_dim(self) -> int:
        return self.encoder_widths[-1]


@dataclass
class HeadGrads:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    gate_weights: list[np.ndarray]
    gate_biases: list[np.ndarray]


@dataclass
class GradientSet:
    encoders: list[list[tuple[np.ndarray, np.ndarray]]]
    head: HeadGrads


@dataclass
class ForwardCache:
    state: ModelState
    layer_inputs: list[list[np.ndarray]]   # per modality, input to each affine
    preacts: list[list[np.ndarray]]        # per modality, affine outputs
    z: list[np.ndarray]                    # per-modality representations
    h: list[np.ndarray]                    # pre-gate logit terms (gated only)
    gates: list[np.ndarray]                # sigmoid gates, (B, 1) (gated only)
    s: list[np.ndarray]                    # per-modality logit contributions
    logits: np.ndarray


def init_model(
    input_dims: list[int],
    num_classes: int,
    encoder_widths: list[int],
    fusion: str,
    rng: Rng,
) -> ModelState:
    """Fan-in scaled uniform init, U(-a, a) with a = sqrt(1/fan_in).

    Biases and gate parameters start at zero and consume no draws, so the
    weight init is identical across fusion kinds for a given stream.
    """
    if fusion not in FUSION_KINDS:
        raise InputError(f"unknown fusion kind {fusion!r}; known: {FUSION_KINDS}")
    if len(encoder_widths) < 1:
        raise InputError("encoder_widths must name at least the output width")
    embed = encoder_widths[-1]

    def draw(rows: int, cols: int) -> np.ndarray:
        scale = float(np.sqrt(1.0 / cols))
        return (2.0 * rng.uniform((rows, cols)) - 1.0) * scale

    encoders = []
    for dim in input_dims:
        chain = [dim] + list(encoder_widths)
        encoders.append([
            (draw(chain[l + 1], chain[l]), np.zeros(chain[l + 1]))
            for l in range(len(chain) - 1)
        ])
    weights = [draw(num_classes, embed) for _ in input_dims]
    if fusion == "concat":
        biases = [np.zeros(num_classes)]
    else:
        biases = [np.zeros(num_classes) for _ in input_dims]
    if fusion == "gated":
        gate_weights = [np.zeros(embed) for _ in input_dims]
        gate_biases = [np.zeros(1) for _ in input_dims]
    else:
        gate_weights, gate_biases = [], []
    head = HeadParams(kind=fusion, weights=weights, biases=biases,
                      gate_weights=gate_weights, gate_biases=gate_biases)
    return ModelState(encoders=encoders, head=head, input_dims=list(input_dims),
                      encoder_widths=list(encoder_widths), num_classes=num_classes)


def _encode(layers: list[tuple[np.ndarray, np.ndarray]], x: np.ndarray):
    inputs, preacts = [], []
    out = x
    last = len(layers) - 1
    for l, (w, b) in enumerate(layers):
        inputs.append(out)
        pre = numkit.affine(out, w, b)
        preacts.append(pre)
        out = numkit.relu(pre) if l < last else pre
    return out, inputs, preacts


def decompose_logits(head: HeadParams, z: list[np.ndarray]) -> list[np.ndarray]:
    """Per-modality logit contributions s_i; their sum equals the fused logits."""
    k = len(z)
    if len(head.weights) != k:
        raise ShapeError(f"head has {len(head.weights)} partitions, got {k} representations")
    if head.kind == "concat":
        part = head.biases[0] / k
        return [numkit.affine(z[i], head.weights[i], part) for i in range(k)]
    if head.kind == "summation":
        return [numkit.affine(z[i], head.weights[i], head.biases[i]) for i in range(k)]
    s = []
    for i in range(k):
        h = numkit.affine(z[i], head.weights[i], head.biases[i])
        a = numkit.affine(z[i], head.gate_weights[i][np.newaxis, :], head.gate_biases[i])
        s.append(numkit.sigmoid(a) * h)
    return s


def forward(state: ModelState, features: list[np.ndarray]) -> tuple[np.ndarray, ForwardCache]:
    if len(features) != state.num_modalities:
        raise ShapeError(
            f"model expects {state.num_modalities} modalities, got {len(features)}"
        )
    for i, (x, dim) in enumerate(zip(features, state.input_dims)):
        if x.shape[1] != dim:
            raise ShapeError(f"modality {i} has dim {x.shape[1]}, expected {dim}")
    z, layer_inputs, preacts = [], [], []
    for i, x in enumerate(features):
        out, inps, pres = _encode(state.encoders[i], numkit.as_matrix(x, f"modality {i}"))
        z.append(out)
        layer_inputs.append(inps)
        preacts.append(pres)

    head = state.head
    k = state.num_modalities
    h: list[np.ndarray] = []
    gates: list[np.ndarray] = []
    if head.kind == "concat":
        terms = [numkit.affine(z[i], head.weights[i], np.zeros(state.num_classes))
                 for i in range(k)]
        logits = terms[0].copy()
        for t in terms[1:]:
            logits += t
        logits += head.biases[0]
        part = head.biases[0] / k
        s = [terms[i] + part for i in range(k)]
    elif head.kind == "summation":
        s = [numkit.affine(z[i], head.weights[i], head.biases[i]) for i in range(k)]
        logits = s[0].copy()
        for t in s[1:]:
            logits += t
    else:
        s = []
        for i in range(k):
            hi = numkit.affine(z[i], head.weights[i], head.biases[i])
            a = numkit.affine(z[i], head.gate_weights[i][np.newaxis, :], head.gate_biases[i])
            gi = numkit.sigmoid(a)
            h.append(hi)
            gates.append(gi)
            s.append(gi * hi)
        logits = s[0].copy()
        for t in s[1:]:
            logits += t
    cache = ForwardCache(state=state, layer_inputs=layer_inputs, preacts=preacts,
                         z=z, h=h, gates=gates, s=s, logits=logits)
    return logits, cache


def backward(cache: ForwardCache, labels: np.ndarray) -> tuple[float, GradientSet]:
    """Mean cross-entropy and its exact gradient for every parameter block."""
    state = cache.state
    head = state.head
    k = state.num_modalities
    loss, dlogits = numkit.softmax_cross_entropy(cache.logits, labels)

    head_w_grads, head_b_grads = [], []
    gate_w_grads, gate_b_grads = [], []
    dz: list[np.ndarray] = []
    if head.kind in ("concat", "summation"):
        shared_db = None
        for i in range(k):
            dz_i, dw_i, db_i = numkit.affine_backward(cache.z[i], head.weights[i], dlogits)
            dz.append(dz_i)
            head_w_grads.append(dw_i)
            if head.kind == "summation":
                head_b_grads.append(db_i)
            else:
                shared_db = db_i
        if head.kind == "concat":
            head_b_grads.append(shared_db)
    else:
        for i in range(k):
            gi, hi = cache.gates[i], cache.h[i]
            dh = dlogits * gi
            dz_h, dw_i, db_i = numkit.affine_backward(cache.z[i], head.weights[i], dh)
            dg = np.add.reduce(dlogits * hi, axis=1)[:, np.newaxis]
            da = dg * gi * (1.0 - gi)
            dz_g, dv_i, dc_i = numkit.affine_backward(
                cache.z[i], head.gate_weights[i][np.newaxis, :], da
            )
            dz.append(dz_h + dz_g)
            head_w_grads.append(dw_i)
            head_b_grads.append(db_i)
            gate_w_grads.append(dv_i[0])
            gate_b_grads.append(dc_i)

    encoder_grads = []
    for i in range(k):
        layers = state.encoders[i]
        last = len(layers) - 1
        grads: list[tuple[np.ndarray, np.ndarray] | None] = [None] * len(layers)
        d = dz[i]
        for l in range(last, -1, -1):
            d_pre = d if l == last else numkit.relu_backward(cache.preacts[i][l], d)
            d, dw, db = numkit.affine_backward(cache.layer_inputs[i][l], layers[l][0], d_pre)
            grads[l] = (dw, db)
        encoder_grads.append(grads)

    head_grads = HeadGrads(weights=head_w_grads, biases=head_b_grads,
                           gate_weights=gate_w_grads, gate_biases=gate_b_grads)
    return loss, GradientSet(encoders=encoder_grads, head=head_grads)


def predict(state: ModelState, features: list[np.ndarray]) -> np.ndarray:
    logits, _ = forward(state, features)
    return np.argmax(logits, axis=1)


def branch_predictions(cache: ForwardCache, modality: int) -> np.ndarray:
    return np.argmax(cache.s[modality], axis=1)


def branch_accuracy(
    state: ModelState, features: list[np.ndarray], labels: np.ndarray, modality: int
) -> float:
    """Accuracy when classifying from one modality's contribution alone."""
    if not 0 <= modality < state.num_modalities:
        raise InputError(f"modality index {modality} out of range")
    _, cache = forward(state, features)
    pred = branch_predictions(cache, modality)
    return float(np.count_nonzero(pred == labels) / labels.shape[0])


# ---------------------------------------------------------------------------
# Flattening and checkpoints
# ---------------------------------------------------------------------------

def _param_arrays(state: ModelState) -> list[np.ndarray]:
    out = []
    for layers in state.encoders:
        for w, b in layers:
            out.append(w)
            out.append(b)
    out.extend(state.head.weights)
    out.extend(state.head.biases)
    out.extend(state.head.gate_weights)
    out.extend(state.head.gate_biases)
    return out


def _grad_arrays(grads: GradientSet) -> list[np.ndarray]:
    out = []
    for layers in grads.encoders:
        for dw, db in layers:
            out.append(dw)
            out.append(db)
    out.extend(grads.head.weights)
    out.extend(grads.head.biases)
    out.extend(grads.head.gate_weights)
    out.extend(grads.head.gate_biases)
    return out


def param_grad_pairs(state: ModelState, grads: GradientSet):
    """Parameter/gradient arrays in flattening order; shapes must mirror."""
    params = _param_arrays(state)
    gs = _grad_arrays(grads)
    if len(params) != len(gs):
        raise ShapeError(f"gradient set has {len(gs)} blocks, model has {len(params)}")
    for p, g in zip(params, gs):
        if p.shape != g.shape:
            raise ShapeError(f"gradient shape {g.shape} does not mirror parameter {p.shape}")
    return list(zip(params, gs))


def flatten_params(state: ModelState) -> np.ndarray:
    return np.concatenate([a.ravel() for a in _param_arrays(state)])


def flatten_grads(grads: GradientSet) -> np.ndarray:
    return np.concatenate([a.ravel() for a in _grad_arrays(grads)])


def unflatten_like(state: ModelState, flat: np.ndarray) -> ModelState:
    """New ModelState with the same architecture and the given flat parameters."""
    flat = np.asarray(flat, dtype=np.float64).reshape(-1)
    arrays = _param_arrays(state)
    total = sum(a.size for a in arrays)
    if flat.size != total:
        raise ShapeError(f"flat vector has {flat.size} values, model has {total}")
    pieces = []
    pos = 0
    for a in arrays:
        pieces.append(flat[pos:pos + a.size].reshape(a.shape).copy())
        pos += a.size
    it = iter(pieces)
    encoders = [[(next(it), next(it)) for _ in layers] for layers in state.encoders]
    weights = [next(it) for _ in state.head.weights]
    biases = [next(it) for _ in state.head.biases]
    gate_weights = [next(it) for _ in state.head.gate_weights]
    gate_biases = [next(it) for _ in state.head.gate_biases]
    head = HeadParams(kind=state.head.kind, weights=weights, biases=biases,
                      gate_weights=gate_weights, gate_biases=gate_biases)
    return ModelState(encoders=encoders, head=head, input_dims=list(state.input_dims),
                      encoder_widths=list(state.encoder_widths),
                      num_classes=state.num_classes)


def save_checkpoint(state: ModelState, stem: str | Path) -> None:
    """stem.json holds the architecture, stem.csv the flat parameter vector."""
    stem = Path(stem)
    header = {
        "fusion": state.head.kind,
        "input_dims": state.input_dims,
        "encoder_widths": state.encoder_widths,
        "num_classes": state.num_classes,
    }
    stem.with_suffix(".json").write_text(json.dumps(header, indent=2) + "\n")
    flat = flatten_params(state)
    stem.with_suffix(".csv").write_text("\n".join(repr(float(v)) for v in flat) + "\n")


def load_checkpoint(stem: str | Path) -> ModelState:
    stem = Path(stem)
    header = json.loads(stem.with_suffix(".json").read_text())
    template = init_model(header["input_dims"], header["num_classes"],
                          header["encoder_widths"], header["fusion"], Rng(0))
    text = stem.with_suffix(".csv").read_text().strip("\n")
    flat = np.array([float(v) for v in text.split("\n")])
    return unflatten_like(template, flat)
