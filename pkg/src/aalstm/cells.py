"""Aspect-aware and classic LSTM cells with exact forward/backward passes.

The aspect-aware cell extends the standard (no-peephole) LSTM with three
aspect gates. At each step the aspect vector ``A`` is constant while the
context word ``x_t`` varies:

    a_i = sigmoid(W_ai [A, h_prev] + b_ai)          aspect-input gate
    i_t = sigmoid(W_i [x_t, h_prev] + a_i * A + b_i)
    a_f = sigmoid(W_af [A, h_prev] + b_af)          aspect-forget gate
    f_t = sigmoid(W_f [x_t, h_prev] + a_f * A + b_f)
    cand = tanh(W_c [x_t, h_prev] + b_c)            no aspect term: the cell
    c_t = f_t * c_prev + i_t * cand                 content stays aspect-free
    a_o = sigmoid(W_ao [A, h_prev] + b_ao)          aspect-output gate
    o_t = sigmoid(W_o [x_t, h_prev] + a_o * A + b_o)
    h_t = o_t * tanh(c_t)

so the aspect only steers information flow through the gates. With A = 0 the
three ``a_* * A`` terms vanish and the step reduces exactly to the classic
cell on the shared core weights.

Backward passes are hand-derived backpropagation through time with weight
gradients accumulated across steps (weights are tied over time) and the
aspect gradient summed over every step it feeds.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Optional

import numpy as np

from .tensor import ShapeError, as_matrix, as_vector, sigmoid, tanh_v, uniform_init


class ConfigError(ValueError):
    """Inconsistent model configuration (e.g. aspect dim != hidden dim)."""


@dataclass
class CellState:
    """Recurrent state: hidden vector h and cell memory c, both length dc."""

    h: np.ndarray
    c: np.ndarray


def _ensure_distinct_arrays(params) -> None:
    """No two fields of one parameter set may share memory.

    The optimizer updates fields independently through live references, so
    aliasing (say, one zeros array reused for every bias) silently couples
    unrelated parameters.
    """
    arrs = list(params.to_arrays().items())
    for i in range(len(arrs)):
        for j in range(i + 1, len(arrs)):
            if np.shares_memory(arrs[i][1], arrs[j][1]):
                raise ConfigError(
                    f"{arrs[i][0]} and {arrs[j][0]} share memory; "
                    "parameter fields must be independent arrays")


def zero_state(hidden_dim: int) -> CellState:
    return CellState(h=np.zeros(hidden_dim), c=np.zeros(hidden_dim))


@dataclass
class StepCache:
    """Everything one step produced, kept for the backward pass.

    Gate vectors are post-sigmoid (entrywise in (0,1)), ``c_cand`` is
    post-tanh (in (-1,1)). Aspect fields are None for classic steps.
    """

    x: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    i_gate: np.ndarray
    f_gate: np.ndarray
    o_gate: np.ndarray
    c_cand: np.ndarray
    c: np.ndarray
    tanh_c: np.ndarray
    h: np.ndarray
    aspect: Optional[np.ndarray] = None
    ai_gate: Optional[np.ndarray] = None
    af_gate: Optional[np.ndarray] = None
    ao_gate: Optional[np.ndarray] = None


@dataclass
class ClassicLstmParams:
    """Standard LSTM weights: four (dc, dx+dc) matrices and four dc biases."""

    W_i: np.ndarray
    W_f: np.ndarray
    W_c: np.ndarray
    W_o: np.ndarray
    b_i: np.ndarray
    b_f: np.ndarray
    b_c: np.ndarray
    b_o: np.ndarray

    def __post_init__(self):
        self.W_i = as_matrix(self.W_i)
        self.W_f = as_matrix(self.W_f)
        self.W_c = as_matrix(self.W_c)
        self.W_o = as_matrix(self.W_o)
        self.b_i = as_vector(self.b_i)
        self.b_f = as_vector(self.b_f)
        self.b_c = as_vector(self.b_c)
        self.b_o = as_vector(self.b_o)
        dc = self.W_i.shape[0]
        if self.W_i.shape[1] <= dc:
            raise ConfigError(f"core matrix width {self.W_i.shape[1]} leaves no input columns")
        for name in ("W_f", "W_c", "W_o"):
            if getattr(self, name).shape != self.W_i.shape:
                raise ShapeError(f"{name} shape {getattr(self, name).shape} != {self.W_i.shape}")
        for name in ("b_i", "b_f", "b_c", "b_o"):
            if getattr(self, name).shape != (dc,):
                raise ShapeError(f"{name} shape {getattr(self, name).shape} != ({dc},)")
        _ensure_distinct_arrays(self)

    @property
    def hidden_dim(self) -> int:
        return self.W_i.shape[0]

    @property
    def input_dim(self) -> int:
        return self.W_i.shape[1] - self.hidden_dim

    @classmethod
    def init(cls, input_dim: int, hidden_dim: int, lo: float = -0.1, hi: float = 0.1,
             seed=0) -> "ClassicLstmParams":
        """Weights from U(lo, hi), biases zero."""
        width = input_dim + hidden_dim
        mats = [uniform_init(hidden_dim, width, lo, hi, seed=[seed, k]) for k in range(4)]
        zeros = [np.zeros(hidden_dim) for _ in range(4)]
        return cls(*mats, *zeros)

    def to_arrays(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray]) -> "ClassicLstmParams":
        return cls(**{f.name: arrays[f.name] for f in fields(cls)})


@dataclass
class AALstmParams:
    """Aspect-aware LSTM weights.

    Aspect-gate matrices W_a* are (da, dc+da) over [A, h_prev]; core matrices
    are (dc, dx+dc) over [x_t, h_prev]. The aspect dimension must equal the
    hidden dimension: a_* * A is added to dc-length gate pre-activations.
    """

    W_ai: np.ndarray
    W_af: np.ndarray
    W_ao: np.ndarray
    W_i: np.ndarray
    W_f: np.ndarray
    W_c: np.ndarray
    W_o: np.ndarray
    b_ai: np.ndarray
    b_af: np.ndarray
    b_ao: np.ndarray
    b_i: np.ndarray
    b_f: np.ndarray
    b_c: np.ndarray
    b_o: np.ndarray

    def __post_init__(self):
        for name in ("W_ai", "W_af", "W_ao", "W_i", "W_f", "W_c", "W_o"):
            setattr(self, name, as_matrix(getattr(self, name)))
        for name in ("b_ai", "b_af", "b_ao", "b_i", "b_f", "b_c", "b_o"):
            setattr(self, name, as_vector(getattr(self, name)))
        da = self.W_ai.shape[0]
        dc = self.W_i.shape[0]
        if da != dc:
            raise ConfigError(
                f"aspect dim {da} must equal hidden dim {dc}: gated aspect terms "
                "are added to hidden-sized gate pre-activations")
        if self.W_ai.shape[1] != dc + da:
            raise ShapeError(f"W_ai shape {self.W_ai.shape} != ({da}, {dc + da})")
        for name in ("W_af", "W_ao"):
            if getattr(self, name).shape != self.W_ai.shape:
                raise ShapeError(f"{name} shape {getattr(self, name).shape} != {self.W_ai.shape}")
        if self.W_i.shape[1] <= dc:
            raise ConfigError(f"core matrix width {self.W_i.shape[1]} leaves no input columns")
        for name in ("W_f", "W_c", "W_o"):
            if getattr(self, name).shape != self.W_i.shape:
                raise ShapeError(f"{name} shape {getattr(self, name).shape} != {self.W_i.shape}")
        for name in ("b_ai", "b_af", "b_ao"):
            if getattr(self, name).shape != (da,):
                raise ShapeError(f"{name} shape {getattr(self, name).shape} != ({da},)")
        for name in ("b_i", "b_f", "b_c", "b_o"):
            if getattr(self, name).shape != (dc,):
                raise ShapeError(f"{name} shape {getattr(self, name).shape} != ({dc},)")
        _ensure_distinct_arrays(self)

    @property
    def hidden_dim(self) -> int:
        return self.W_i.shape[0]

    @property
    def input_dim(self) -> int:
        return self.W_i.shape[1] - self.hidden_dim

    @property
    def aspect_dim(self) -> int:
        return self.W_ai.shape[0]

    @classmethod
    def init(cls, input_dim: int, hidden_dim: int, aspect_dim: Optional[int] = None,
             lo: float = -0.1, hi: float = 0.1, seed=0) -> "AALstmParams":
        """Weights from U(lo, hi), biases zero; aspect_dim defaults to hidden_dim."""
        da = hidden_dim if aspect_dim is None else aspect_dim
        if da != hidden_dim:
            raise ConfigError(f"aspect dim {da} must equal hidden dim {hidden_dim}")
        aspect_mats = [uniform_init(da, hidden_dim + da, lo, hi, seed=[seed, 10 + k])
                       for k in range(3)]
        core_mats = [uniform_init(hidden_dim, input_dim + hidden_dim, lo, hi, seed=[seed, k])
                     for k in range(4)]
        biases = [np.zeros(da) for _ in range(3)] + [np.zeros(hidden_dim) for _ in range(4)]
        return cls(*aspect_mats, *core_mats, *biases)

    def core(self) -> ClassicLstmParams:
        """The classic cell embedded in this one (shared core weights)."""
        return ClassicLstmParams(self.W_i, self.W_f, self.W_c, self.W_o,
                                 self.b_i, self.b_f, self.b_c, self.b_o)

    def to_arrays(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray]) -> "AALstmParams":
        return cls(**{f.name: arrays[f.name] for f in fields(cls)})


def _check_step_inputs(p, x: np.ndarray, prev: CellState, aspect: Optional[np.ndarray] = None):
    if x.shape != (p.input_dim,):
        raise ShapeError(f"input shape {x.shape} != ({p.input_dim},)")
    dc = p.hidden_dim
    if prev.h.shape != (dc,) or prev.c.shape != (dc,):
        raise ShapeError(f"state shapes {prev.h.shape}/{prev.c.shape} != ({dc},)")
    if aspect is not None and aspect.shape != (p.aspect_dim,):
        raise ShapeError(f"aspect shape {aspect.shape} != ({p.aspect_dim},)")


def classic_lstm_step(p: ClassicLstmParams, x: np.ndarray, prev: CellState) -> tuple[CellState, StepCache]:
    """One classic LSTM step."""
    _check_step_inputs(p, x, prev)
    xh = np.concatenate([x, prev.h])
    i_gate = sigmoid(p.W_i @ xh + p.b_i)
    f_gate = sigmoid(p.W_f @ xh + p.b_f)
    c_cand = tanh_v(p.W_c @ xh + p.b_c)
    c = f_gate * prev.c + i_gate * c_cand
    o_gate = sigmoid(p.W_o @ xh + p.b_o)
    tanh_c = tanh_v(c)
    h = o_gate * tanh_c
    cache = StepCache(x=x, h_prev=prev.h, c_prev=prev.c, i_gate=i_gate, f_gate=f_gate,
                      o_gate=o_gate, c_cand=c_cand, c=c, tanh_c=tanh_c, h=h)
    return CellState(h=h, c=c), cache


def aa_lstm_step(p: AALstmParams, x: np.ndarray, aspect: np.ndarray,
                 prev: CellState) -> tuple[CellState, StepCache]:
    """One aspect-aware LSTM step (see module docstring for the update rule)."""
    _check_step_inputs(p, x, prev, aspect)
    ah = np.concatenate([aspect, prev.h])
    xh = np.concatenate([x, prev.h])
    ai_gate = sigmoid(p.W_ai @ ah + p.b_ai)
    i_gate = sigmoid(p.W_i @ xh + ai_gate * aspect + p.b_i)
    af_gate = sigmoid(p.W_af @ ah + p.b_af)
    f_gate = sigmoid(p.W_f @ xh + af_gate * aspect + p.b_f)
    c_cand = tanh_v(p.W_c @ xh + p.b_c)
    c = f_gate * prev.c + i_gate * c_cand
    ao_gate = sigmoid(p.W_ao @ ah + p.b_ao)
    o_gate = sigmoid(p.W_o @ xh + ao_gate * aspect + p.b_o)
    tanh_c = tanh_v(c)
    h = o_gate * tanh_c
    cache = StepCache(x=x, h_prev=prev.h, c_prev=prev.c, i_gate=i_gate, f_gate=f_gate,
                      o_gate=o_gate, c_cand=c_cand, c=c, tanh_c=tanh_c, h=h,
                      aspect=aspect, ai_gate=ai_gate, af_gate=af_gate, ao_gate=ao_gate)
    return CellState(h=h, c=c), cache


def unroll(params, xs, aspect: Optional[np.ndarray] = None,
           init: Optional[CellState] = None) -> tuple[list[np.ndarray], list[StepCache]]:
    """Run the cell over a sequence, threading state; init defaults to zeros.

    `params` selects the cell: AALstmParams requires `aspect`, ClassicLstmParams
    forbids it. Returns one hidden vector and one cache per input.
    """
    if len(xs) == 0:
        raise ValueError("unroll: empty input sequence")
    aware = isinstance(params, AALstmParams)
    if aware and aspect is None:
        raise ValueError("unroll: aspect vector required for the aspect-aware cell")
    if not aware and aspect is not None:
        raise ValueError("unroll: classic cell takes no aspect vector")
    state = zero_state(params.hidden_dim) if init is None else init
    hs: list[np.ndarray] = []
    caches: list[StepCache] = []
    for x in xs:
        if aware:
            state, cache = aa_lstm_step(params, x, aspect, state)
        else:
            state, cache = classic_lstm_step(params, x, state)
        hs.append(state.h)
        caches.append(cache)
    return hs, caches


def _zero_grads(params) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(arr) for name, arr in params.to_arrays().items()}


def _core_backward_step(p, cache: StepCache, dh: np.ndarray, dc_next: np.ndarray, grads):
    """Shared gate backprop; returns (dxh, dz_i, dz_f, dz_o, dc_prev).

    dh is the total gradient on h_t, dc_next the recurrent gradient on c_t.
    dz_* are pre-activation gate gradients, still needed by the aspect paths.
    """
    do = dh * cache.tanh_c
    dc = dc_next + dh * cache.o_gate * (1.0 - cache.tanh_c ** 2)

    dz_o = do * cache.o_gate * (1.0 - cache.o_gate)
    df = dc * cache.c_prev
    dc_prev = dc * cache.f_gate
    di = dc * cache.c_cand
    dcand = dc * cache.i_gate
    dz_c = dcand * (1.0 - cache.c_cand ** 2)
    dz_f = df * cache.f_gate * (1.0 - cache.f_gate)
    dz_i = di * cache.i_gate * (1.0 - cache.i_gate)

    xh = np.concatenate([cache.x, cache.h_prev])
    grads["W_i"] += np.outer(dz_i, xh)
    grads["W_f"] += np.outer(dz_f, xh)
    grads["W_c"] += np.outer(dz_c, xh)
    grads["W_o"] += np.outer(dz_o, xh)
    grads["b_i"] += dz_i
    grads["b_f"] += dz_f
    grads["b_c"] += dz_c
    grads["b_o"] += dz_o
    dxh = p.W_i.T @ dz_i + p.W_f.T @ dz_f + p.W_c.T @ dz_c + p.W_o.T @ dz_o
    return dxh, dz_i, dz_f, dz_o, dc_prev


def classic_lstm_backward(p: ClassicLstmParams, caches: list[StepCache],
                          dh_list: list[np.ndarray]) -> tuple[dict[str, np.ndarray], list[np.ndarray]]:
    """BPTT for the classic cell: per-parameter grads and per-step input grads."""
    if len(caches) != len(dh_list):
        raise ValueError(f"got {len(caches)} caches but {len(dh_list)} hidden gradients")
    dx_in = p.input_dim
    grads = _zero_grads(p)
    dxs: list[Optional[np.ndarray]] = [None] * len(caches)
    dh_rec = np.zeros(p.hidden_dim)
    dc_rec = np.zeros(p.hidden_dim)
    for t in reversed(range(len(caches))):
        dxh, _, _, _, dc_rec = _core_backward_step(p, caches[t], dh_list[t] + dh_rec, dc_rec, grads)
        dxs[t] = dxh[:dx_in]
        dh_rec = dxh[dx_in:]
    return grads, dxs


def aa_lstm_backward(p: AALstmParams, caches: list[StepCache], dh_list: list[np.ndarray],
                     with_aspect_grad: bool = True,
                     ) -> tuple[dict[str, np.ndarray], list[np.ndarray], Optional[np.ndarray]]:
    """BPTT for the aspect-aware cell.

    Returns (param grads, per-step input grads, aspect grad). The aspect feeds
    every step through all three aspect gates and the three gated injections,
    so its gradient is summed over the whole sequence; pass
    with_aspect_grad=False to skip it (returns None) when the aspect vector is
    not trained.
    """
    if len(caches) != len(dh_list):
        raise ValueError(f"got {len(caches)} caches but {len(dh_list)} hidden gradients")
    dx_in = p.input_dim
    da = p.aspect_dim
    grads = _zero_grads(p)
    dxs: list[Optional[np.ndarray]] = [None] * len(caches)
    d_aspect = np.zeros(da) if with_aspect_grad else None
    dh_rec = np.zeros(p.hidden_dim)
    dc_rec = np.zeros(p.hidden_dim)
    for t in reversed(range(len(caches))):
        cache = caches[t]
        dxh, dz_i, dz_f, dz_o, dc_rec = _core_backward_step(
            p, cache, dh_list[t] + dh_rec, dc_rec, grads)

        # Aspect gates: z_* gained the term a_* * A, so dz_* splits into a
        # gate part (times A) and a direct aspect part (times a_*).
        dz_ai = (dz_i * cache.aspect) * cache.ai_gate * (1.0 - cache.ai_gate)
        dz_af = (dz_f * cache.aspect) * cache.af_gate * (1.0 - cache.af_gate)
        dz_ao = (dz_o * cache.aspect) * cache.ao_gate * (1.0 - cache.ao_gate)

        ah = np.concatenate([cache.aspect, cache.h_prev])
        grads["W_ai"] += np.outer(dz_ai, ah)
        grads["W_af"] += np.outer(dz_af, ah)
        grads["W_ao"] += np.outer(dz_ao, ah)
        grads["b_ai"] += dz_ai
        grads["b_af"] += dz_af
        grads["b_ao"] += dz_ao

        dah = p.W_ai.T @ dz_ai + p.W_af.T @ dz_af + p.W_ao.T @ dz_ao
        if with_aspect_grad:
            d_aspect += dz_i * cache.ai_gate + dz_f * cache.af_gate + dz_o * cache.ao_gate
            d_aspect += dah[:da]
        dxs[t] = dxh[:dx_in]
        dh_rec = dxh[dx_in:] + dah[da:]
    return grads, dxs, d_aspect
