'''Layer primitives with analytic backward passes.

All operations work on plain numpy arrays and accept any number of leading
batch axes: a convolution input is ``(..., T, D)``, an LSTM sequence is
``(..., T, D)``, a dense input is ``(..., D)``. Forward functions that need
state for the backward pass return it explicitly; nothing is stored on the
arrays or in module globals.

Conventions
-----------
conv kernels : (F, k, D_in), bias (F,); valid padding.
dense weights : (D_in, D_out), so the map is ``x @ W + b``.
LSTM weights : (hidden, input) and (hidden, hidden) per gate, gates in the
    order input, forget, cell, output.
'''
from dataclasses import dataclass, field, fields
from typing import Dict

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from aslchamp.errors import (ShapeMismatch, NonFiniteValue, IndexOutOfRange,
        InvalidConfig)

PROB_FLOOR = 1e-12


def check_finite(arr, what='array'):
    if not np.isfinite(arr).all():
        raise NonFiniteValue("{} contains NaN or Inf".format(what))
    return arr


def _windows(x, k, stride):
    # (..., T_out, D, k)
    return sliding_window_view(x, k, axis=-2)[..., ::stride, :, :]


def conv1d_forward(x, kernels, bias, stride=1):
    '''Valid 1-D convolution over the time axis.

    ``out[t, f] = bias[f] + sum_a sum_d x[t*stride + a, d]*kernels[f, a, d]``

    Parameters
    ----------
    x : ndarray (..., T, D_in)
    kernels : ndarray (F, k, D_in)
    bias : ndarray (F,)
    stride : int

    Returns
    -------
    ndarray (..., T_out, F), ``T_out = (T - k)//stride + 1``
    '''
    x = np.asarray(x)
    F, k, d_in = kernels.shape
    if x.ndim < 2 or x.shape[-1] != d_in:
        raise ShapeMismatch("conv1d input {} does not match kernels {}"
                .format(x.shape, kernels.shape))
    if bias.shape != (F,):
        raise ShapeMismatch("conv1d bias {} does not match {} filters"
                .format(bias.shape, F))
    if stride < 1:
        raise ShapeMismatch("conv1d stride must be >= 1, got {}".format(
            stride))
    if k > x.shape[-2]:
        raise ShapeMismatch("Kernel length {} exceeds sequence length {}"
                .format(k, x.shape[-2]))
    win = _windows(x, k, stride)
    return np.einsum('...tdk,fkd->...tf', win, kernels, optimize=True) + bias


def conv1d_backward(x, kernels, grad_out, stride=1, input_grad=True):
    '''Gradients of ``sum(grad_out * conv1d_forward(x, kernels, b))``.

    Returns
    -------
    grad_x, grad_kernels, grad_bias
        ``grad_x`` is None when ``input_grad`` is False.
    '''
    x = np.asarray(x)
    F, k, d_in = kernels.shape
    T = x.shape[-2]
    t_out = (T - k)//stride + 1
    if grad_out.shape != x.shape[:-2] + (t_out, F):
        raise ShapeMismatch("conv1d grad {} does not match output shape {}"
                .format(grad_out.shape, x.shape[:-2] + (t_out, F)))

    win = _windows(x, k, stride)
    grad_kernels = np.einsum('...tdk,...tf->fkd', win, grad_out,
            optimize=True)
    grad_bias = grad_out.reshape(-1, F).sum(axis=0)
    if not input_grad:
        return None, grad_kernels, grad_bias
    grad_x = np.zeros_like(x, dtype=np.result_type(x, grad_out))
    stop = stride*(t_out - 1) + 1
    for a in range(k):
        grad_x[..., a:a + stop:stride, :] += grad_out @ kernels[:, a, :]
    return grad_x, grad_kernels, grad_bias


def maxpool1d(x, window=2, stride=2):
    '''Max pooling over the time axis.

    Returns
    -------
    out : ndarray (..., T_out, F)
    argmax : ndarray of int (..., T_out, F)
        Time index in ``x`` of each maximum; the first index wins ties.
    '''
    x = np.asarray(x)
    if window < 1 or stride < 1:
        raise ShapeMismatch("Pool window and stride must be >= 1")
    if x.ndim < 2 or window > x.shape[-2]:
        raise ShapeMismatch("Pool window {} exceeds input {}".format(
            window, x.shape))
    win = _windows(x, window, stride)
    idx = np.argmax(win, axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    t_out = out.shape[-2]
    starts = (np.arange(t_out)*stride)[:, None]
    return out, idx + starts


def maxpool1d_backward(grad_out, argmax, input_shape):
    '''Route each output gradient to the recorded argmax position.'''
    if grad_out.shape != argmax.shape:
        raise ShapeMismatch("Pool grad {} does not match argmax {}".format(
            grad_out.shape, argmax.shape))
    T, F = input_shape[-2:]
    lead = int(np.prod(input_shape[:-2], dtype=int))
    g = grad_out.reshape(lead, -1, F)
    am = argmax.reshape(lead, -1, F)
    grad_x = np.zeros((lead, T, F), dtype=grad_out.dtype)
    n_idx = np.arange(lead)[:, None, None]
    f_idx = np.arange(F)[None, None, :]
    np.add.at(grad_x, (n_idx, am, f_idx), g)
    return grad_x.reshape(input_shape)


def tanh_op(x):
    '''Elementwise hyperbolic tangent; saturates to +/-1 without overflow.'''
    return np.tanh(x)


def tanh_backward(y, grad_out):
    '''Backward of ``y = tanh(x)`` given the forward output ``y``.'''
    return grad_out*(1. - y*y)


def dense(x, W, b, activate=False):
    '''Affine map ``x @ W + b``, optionally followed by tanh.'''
    x = np.asarray(x)
    if W.ndim != 2 or x.shape[-1] != W.shape[0] or b.shape != W.shape[1:]:
        raise ShapeMismatch("dense shapes x {}, W {}, b {} disagree".format(
            x.shape, W.shape, b.shape))
    out = x @ W + b
    return tanh_op(out) if activate else out


def dense_backward(x, W, grad_out, out=None):
    '''Gradients of a dense layer.

    Parameters
    ----------
    out : ndarray, optional
        The tanh output of an activated layer. Leave as None for a plain
        affine layer.

    Returns
    -------
    grad_x, grad_W, grad_b
    '''
    x = np.asarray(x)
    if grad_out.shape != x.shape[:-1] + (W.shape[1],):
        raise ShapeMismatch("dense grad {} does not match output".format(
            grad_out.shape))
    if out is not None:
        grad_out = tanh_backward(out, grad_out)
    grad_W = x.reshape(-1, W.shape[0]).T @ grad_out.reshape(-1, W.shape[1])
    grad_b = grad_out.reshape(-1, W.shape[1]).sum(axis=0)
    grad_x = grad_out @ W.T
    return grad_x, grad_W, grad_b


def softmax(z, axis=-1):
    '''Max-shifted softmax along ``axis``.'''
    z = np.asarray(z)
    if z.dtype.kind != 'f':
        z = z.astype(float)
    if z.shape[axis] < 1:
        raise ShapeMismatch("softmax needs at least one class")
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e/e.sum(axis=axis, keepdims=True)


def dropout_mask(shape, rate, rng, dtype='float64'):
    '''Inverted dropout multiplier: 0 with probability ``rate``, otherwise
    ``1/(1 - rate)``.'''
    if not 0. <= rate < 1.:
        raise InvalidConfig("Dropout rate must lie in [0, 1), got {}".format(
            rate))
    keep = rng.random(shape) >= rate
    return keep.astype(dtype)*(1./(1. - rate))


def dropout(x, rate, mode='train', rng=None):
    '''Inverted dropout; the identity in ``'infer'`` mode or at rate 0.'''
    if mode not in ('train', 'infer'):
        raise InvalidConfig("mode must be train or infer, got {}".format(
            mode))
    if not 0. <= rate < 1.:
        raise InvalidConfig("Dropout rate must lie in [0, 1), got {}".format(
            rate))
    if mode == 'infer' or rate == 0:
        return x
    if rng is None:
        rng = np.random.default_rng()
    return x*dropout_mask(np.shape(x), rate, rng, np.result_type(x, float))


def _targets(probs, target):
    K = probs.shape[-1]
    target = np.asarray(target)
    if target.shape != probs.shape[:-1]:
        raise ShapeMismatch("{} targets for probabilities of shape {}".format(
            target.shape, probs.shape))
    if not np.issubdtype(target.dtype, np.integer) or (target < 0).any() \
            or (target >= K).any():
        raise IndexOutOfRange("Target class outside 0..{}".format(K - 1))
    return target


def cross_entropy(probs, target):
    '''Categorical cross-entropy, averaged over leading batch axes.

    Probabilities are clamped to [1e-12, 1 - 1e-12] before the log.

    Raises
    ------
    IndexOutOfRange
        If a target is not a valid class index.
    '''
    probs = np.asarray(probs)
    target = _targets(probs, target)
    p = np.take_along_axis(probs, target[..., None], axis=-1)[..., 0]
    p = np.clip(p, PROB_FLOOR, 1. - PROB_FLOOR)
    return float(np.mean(-np.log(p)))


def softmax_cross_entropy_backward(probs, target):
    '''Gradient of ``cross_entropy(softmax(z), target)`` with respect to the
    logits ``z``: ``(probs - onehot)/N`` for N batch entries.'''
    probs = np.asarray(probs)
    target = _targets(probs, target)
    grad = np.array(probs, dtype=np.result_type(probs, float))
    flat = grad.reshape(-1, probs.shape[-1])
    flat[np.arange(flat.shape[0]), target.reshape(-1)] -= 1.
    return grad/flat.shape[0]


_GATES = ('i', 'f', 'g', 'o')


@dataclass
class LSTMCellParams:
    '''Per-gate LSTM weights.

    Input weights ``W_i*`` are (hidden, input); recurrent weights ``W_h*``
    are (hidden, hidden); the eight bias vectors are (hidden,).
    '''
    W_ii: np.ndarray
    W_if: np.ndarray
    W_ig: np.ndarray
    W_io: np.ndarray
    W_hi: np.ndarray
    W_hf: np.ndarray
    W_hg: np.ndarray
    W_ho: np.ndarray
    b_ii: np.ndarray
    b_hi: np.ndarray
    b_if: np.ndarray
    b_hf: np.ndarray
    b_ig: np.ndarray
    b_hg: np.ndarray
    b_io: np.ndarray
    b_ho: np.ndarray

    def __post_init__(self):
        H, D = np.shape(self.W_ii)
        for gate in _GATES:
            if np.shape(getattr(self, 'W_i' + gate)) != (H, D):
                raise ShapeMismatch("W_i{} must be ({}, {})".format(gate, H, D))
            if np.shape(getattr(self, 'W_h' + gate)) != (H, H):
                raise ShapeMismatch("W_h{} must be ({}, {})".format(gate, H, H))
            for src in 'ih':
                name = 'b_{}{}'.format(src, gate)
                if np.shape(getattr(self, name)) != (H,):
                    raise ShapeMismatch("{} must have {} entries".format(
                        name, H))

    @property
    def hidden_size(self):
        return self.W_ii.shape[0]

    @property
    def input_size(self):
        return self.W_ii.shape[1]

    def names(self):
        return [f.name for f in fields(self)]

    def as_dict(self):
        return {name: getattr(self, name) for name in self.names()}

    def stacked(self):
        '''Gate-stacked ``(Wx (4H, D), Wh (4H, H), b (4H,))``.'''
        Wx = np.concatenate([getattr(self, 'W_i' + g) for g in _GATES])
        Wh = np.concatenate([getattr(self, 'W_h' + g) for g in _GATES])
        b = np.concatenate([getattr(self, 'b_i' + g) + getattr(self, 'b_h' + g)
                for g in _GATES])
        return Wx, Wh, b

    @classmethod
    def from_stacked(cls, Wx, Wh, bx, bh):
        H = Wh.shape[1]
        kw = {}
        for n, g in enumerate(_GATES):
            rows = slice(n*H, (n + 1)*H)
            kw['W_i' + g] = Wx[rows]
            kw['W_h' + g] = Wh[rows]
            kw['b_i' + g] = bx[rows]
            kw['b_h' + g] = bh[rows]
        return cls(**kw)


def lstm_params(rng, input_size, hidden_size, dtype='float64',
        forget_bias=1.0):
    '''Uniform ``+/-sqrt(1/hidden)`` weights, zero biases except
    ``b_if = forget_bias``.'''
    H, D = hidden_size, input_size
    Wx = lstm_uniform(rng, (4*H, D), H, dtype)
    Wh = lstm_uniform(rng, (4*H, H), H, dtype)
    bx = np.zeros(4*H, dtype=dtype)
    bx[H:2*H] = forget_bias
    return LSTMCellParams.from_stacked(Wx, Wh, bx, np.zeros(4*H, dtype=dtype))


def _gates(z, H):
    i = expit(z[..., 0:H])
    f = expit(z[..., H:2*H])
    g = np.tanh(z[..., 2*H:3*H])
    o = expit(z[..., 3*H:4*H])
    return i, f, g, o


def _check_state(x, h, c, params):
    H, D = params.hidden_size, params.input_size
    if x.shape[-1] != D:
        raise ShapeMismatch("LSTM input width {} != {}".format(
            x.shape[-1], D))
    if h.shape[-1] != H or c.shape[-1] != H:
        raise ShapeMismatch("LSTM state width must be {}".format(H))


def lstm_cell(x_t, h_prev, c_prev, params):
    '''One LSTM step.

    Returns
    -------
    h_t, c_t : ndarray (..., H)
    cache : dict
        Pre-activations ``z``, gate values and inputs for
        ``lstm_cell_backward``.
    '''
    x_t, h_prev, c_prev = (np.asarray(a) for a in (x_t, h_prev, c_prev))
    _check_state(x_t, h_prev, c_prev, params)
    Wx, Wh, b = params.stacked()
    H = params.hidden_size
    z = x_t @ Wx.T + h_prev @ Wh.T + b
    i, f, g, o = _gates(z, H)
    c_t = f*c_prev + i*g
    tc = np.tanh(c_t)
    h_t = o*tc
    cache = dict(x=x_t, h_prev=h_prev, c_prev=c_prev, z=z, i=i, f=f, g=g,
            o=o, c=c_t, tc=tc)
    return h_t, c_t, cache


def _cell_grads(dh, dc, cache):
    i, f, g, o, tc = (cache[k] for k in ('i', 'f', 'g', 'o', 'tc'))
    dc_total = dc + dh*o*(1. - tc*tc)
    dz = np.concatenate([
        dc_total*g*i*(1. - i),
        dc_total*cache['c_prev']*f*(1. - f),
        dc_total*i*(1. - g*g),
        dh*tc*o*(1. - o),
    ], axis=-1)
    return dz, dc_total*f


def _stacked_grads(dz, x, h_prev):
    D, H = x.shape[-1], h_prev.shape[-1]
    dz2 = dz.reshape(-1, dz.shape[-1])
    dWx = dz2.T @ x.reshape(-1, D)
    dWh = dz2.T @ h_prev.reshape(-1, H)
    db = dz2.sum(axis=0)
    return dWx, dWh, db


def lstm_cell_backward(grad_h, grad_c, cache, params):
    '''Backward of ``lstm_cell``.

    Returns
    -------
    grad_x, grad_h_prev, grad_c_prev, grads
        ``grads`` is an ``LSTMCellParams`` of parameter gradients.
    '''
    Wx, Wh, _ = params.stacked()
    dz, dc_prev = _cell_grads(grad_h, grad_c, cache)
    dWx, dWh, db = _stacked_grads(dz, cache['x'], cache['h_prev'])
    grads = LSTMCellParams.from_stacked(dWx, dWh, db, db.copy())
    return dz @ Wx, dz @ Wh, dc_prev, grads


def lstm_sequence(x, params, h0=None, c0=None):
    '''Run an LSTM over ``x (..., T, D)`` and return every hidden state.

    Returns
    -------
    hs : ndarray (..., T, H)
    cache : dict for ``lstm_sequence_backward``
    '''
    x = np.asarray(x)
    H = params.hidden_size
    lead = x.shape[:-2]
    dtype = np.result_type(x, params.W_ii)
    h = np.zeros(lead + (H,), dtype=dtype) if h0 is None else np.asarray(h0)
    c = np.zeros(lead + (H,), dtype=dtype) if c0 is None else np.asarray(c0)
    _check_state(x, h, c, params)

    Wx, Wh, b = params.stacked()
    T = x.shape[-2]
    xz = x @ Wx.T + b
    hs = np.empty(lead + (T, H), dtype=dtype)
    cs = np.empty(lead + (T, H), dtype=dtype)
    gates = np.empty(lead + (T, 4*H), dtype=dtype)
    h_init, c_init = h, c
    for t in range(T):
        z = xz[..., t, :] + h @ Wh.T
        i, f, g, o = _gates(z, H)
        c = f*c + i*g
        h = o*np.tanh(c)
        hs[..., t, :] = h
        cs[..., t, :] = c
        gates[..., t, :] = np.concatenate([i, f, g, o], axis=-1)
    cache = dict(x=x, h0=h_init, c0=c_init, hs=hs, cs=cs, gates=gates)
    return hs, cache


def lstm_sequence_backward(grad_hs, cache, params, grad_hT=None, grad_cT=None):
    '''Backpropagation through time for ``lstm_sequence``.

    Parameters
    ----------
    grad_hs : ndarray (..., T, H)
        Loss gradient with respect to every returned hidden state.

    grad_hT, grad_cT : ndarray (..., H), optional
        Extra gradient on the final state.

    Returns
    -------
    grad_x, grad_h0, grad_c0, grads
    '''
    x, hs, cs, gates = (cache[k] for k in ('x', 'hs', 'cs', 'gates'))
    if grad_hs.shape != hs.shape:
        raise ShapeMismatch("LSTM grad {} does not match outputs {}".format(
            grad_hs.shape, hs.shape))
    Wx, Wh, _ = params.stacked()
    H = params.hidden_size
    T = x.shape[-2]
    lead = x.shape[:-2]

    dh_next = np.zeros(lead + (H,), dtype=hs.dtype)
    dc_next = np.zeros(lead + (H,), dtype=hs.dtype)
    if grad_hT is not None:
        dh_next = dh_next + grad_hT
    if grad_cT is not None:
        dc_next = dc_next + grad_cT
    dZ = np.empty(lead + (T, 4*H), dtype=hs.dtype)
    for t in range(T - 1, -1, -1):
        gt = gates[..., t, :]
        step = dict(i=gt[..., 0:H], f=gt[..., H:2*H], g=gt[..., 2*H:3*H],
                o=gt[..., 3*H:], tc=np.tanh(cs[..., t, :]),
                c_prev=cs[..., t-1, :] if t > 0 else cache['c0'])
        dz, dc_next = _cell_grads(grad_hs[..., t, :] + dh_next, dc_next, step)
        dZ[..., t, :] = dz
        dh_next = dz @ Wh
    h_prev = np.concatenate([cache['h0'][..., None, :], hs[..., :-1, :]],
            axis=-2)
    dWx, dWh, db = _stacked_grads(dZ, x, h_prev)
    grads = LSTMCellParams.from_stacked(dWx, dWh, db, db.copy())
    return dZ @ Wx, dh_next, dc_next, grads


@dataclass
class AdamState:
    '''Adam moments per parameter name plus the step counter.'''
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0
    alpha: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def adam_step(params, grads, state):
    '''One Adam update of every entry of ``params``.

    ``params`` and ``state`` are updated in place and returned. The step
    counter is incremented before the bias-corrected update.
    '''
    for name, p in params.items():
        g = grads.get(name)
        if g is None or np.shape(g) != np.shape(p):
            raise ShapeMismatch("Gradient for {} has shape {}, expected {}"
                    .format(name, None if g is None else np.shape(g),
                        np.shape(p)))
    state.t += 1
    bc1 = 1. - state.beta1**state.t
    bc2 = 1. - state.beta2**state.t
    for name, p in params.items():
        g = grads[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m = state.m[name] = state.beta1*state.m[name] + (1. - state.beta1)*g
        v = state.v[name] = state.beta2*state.v[name] + (1. - state.beta2)*g*g
        m_hat = m/bc1
        v_hat = v/bc2
        params[name] = p - state.alpha*m_hat/(np.sqrt(v_hat) + state.epsilon)
    return params, state


def glorot_uniform(rng, shape, fan_in, fan_out, dtype='float64'):
    limit = np.sqrt(6./(fan_in + fan_out))
    return rng.uniform(-limit, limit, shape).astype(dtype)


def lstm_uniform(rng, shape, hidden_size, dtype='float64'):
    limit = np.sqrt(1./hidden_size)
    return rng.uniform(-limit, limit, shape).astype(dtype)


def grad_check(loss_fn, inputs, analytic, eps=1e-3, coords=None, rng=None):
    '''Compare analytic gradients with numerical derivatives.

    Each checked coordinate is perturbed in place by ``+/-eps`` and
    ``+/-2 eps``; the derivative is the five-point central difference
    ``(f(-2e) - 8 f(-e) + 8 f(+e) - f(+2e)) / 12e``.

    Parameters
    ----------
    loss_fn : callable
        ``loss_fn(inputs)`` returns a scalar; it must read the arrays in
        ``inputs`` at call time.

    inputs : dict of ndarray
        Arrays to differentiate with respect to (float64 recommended).

    analytic : dict of ndarray
        Analytic gradients, same keys and shapes as ``inputs``.

    eps : float
        Step size in [1e-7, 1e-3].

    coords : int, optional
        Check at most this many randomly chosen coordinates per array.

    Returns
    -------
    float
        Maximum over coordinates of ``|a - n| / max(|a|, |n|, 1e-8)``.

    Raises
    ------
    NonFiniteValue
        If the loss or an analytic gradient is NaN or Inf.
    '''
    if not 1e-7 <= eps <= 1e-3:
        raise InvalidConfig("eps must lie in [1e-7, 1e-3], got {}".format(eps))
    if rng is None:
        rng = np.random.default_rng(0)

    def f():
        val = float(loss_fn(inputs))
        if not np.isfinite(val):
            raise NonFiniteValue("Loss is not finite")
        return val

    worst = 0.
    for name, arr in inputs.items():
        grad = np.asarray(analytic[name])
        if grad.shape != arr.shape:
            raise ShapeMismatch("Analytic gradient for {} has shape {}, "
                    "expected {}".format(name, grad.shape, arr.shape))
        check_finite(grad, 'Analytic gradient for {}'.format(name))
        flat = arr.reshape(-1)
        if not np.shares_memory(flat, arr):
            raise ShapeMismatch("{} must be contiguous".format(name))
        idx = np.arange(flat.size)
        if coords is not None and coords < flat.size:
            idx = np.sort(rng.choice(flat.size, coords, replace=False))
        for j in idx:
            orig = flat[j]
            vals = []
            for step in (-2., -1., 1., 2.):
                flat[j] = orig + step*eps
                vals.append(f())
            flat[j] = orig
            numeric = (vals[0] - 8.*vals[1] + 8.*vals[2] - vals[3])/(12.*eps)
            a = grad.reshape(-1)[j]
            err = abs(a - numeric)/max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst
