"""Adaptive multi-context range coder.

Carry-propagating 32-bit range coder (the LZMA layout: 64-bit ``low``, one
cached byte plus a run of pending 0xFF bytes). Each coded event names a
context: a non-negative context selects an adaptive frequency table, a
negative context ``-n`` codes an ``n``-bit value with a flat distribution
(bypass, 1 <= n <= 16).

The low-level functions are numba kernels operating on small state arrays so
that the block and keypoint coders can drive them from compiled loops.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import DecodeError, InvalidArgument

TOP = 1 << 24
MASK32 = 0xFFFFFFFF
MAX_TOTAL = 1 << 16
MAX_BYPASS_BITS = 16

# encoder state slots
_LOW, _RANGE, _CACHE, _CACHE_SIZE, _POS = 0, 1, 2, 3, 4
# decoder state slots
_CODE, _DRANGE, _DPOS, _ERR = 0, 1, 2, 3


@dataclass(frozen=True)
class SymbolModel:
    """Initial state and update rule of one adaptive frequency table.

    Every symbol starts with frequency 1; coding a symbol adds ``increment``
    to its frequency, and when the table total exceeds ``limit`` all
    frequencies are halved (rounding up, so none reaches zero).
    """

    alphabet_size: int
    increment: int = 32
    limit: int = MAX_TOTAL

    def __post_init__(self):
        if not 1 <= self.alphabet_size <= 65536:
            raise InvalidArgument("alphabet size must be in [1, 65536]")
        if self.increment < 1:
            raise InvalidArgument("increment must be positive")
        if not self.alphabet_size <= self.limit <= MAX_TOTAL:
            raise InvalidArgument(f"limit must be in [alphabet_size, {MAX_TOTAL}]")


class ModelSet:
    """Frequency tables for several contexts, laid out for the kernels."""

    def __init__(self, models: list[SymbolModel]):
        self.models = list(models)
        n = len(self.models)
        width = max(m.alphabet_size for m in self.models)
        self.alphabet = np.array([m.alphabet_size for m in self.models], dtype=np.int64)
        self.increment = np.array([m.increment for m in self.models], dtype=np.int64)
        self.limit = np.array([m.limit for m in self.models], dtype=np.int64)
        self.freq = np.zeros((n, width), dtype=np.int64)
        for i, m in enumerate(self.models):
            self.freq[i, : m.alphabet_size] = 1
        self.total = self.alphabet.copy()

    def arrays(self):
        return self.freq, self.total, self.alphabet, self.increment, self.limit


# --- encoder kernels ------------------------------------------------------

@njit(cache=True)
def enc_new(capacity):
    st = np.zeros(5, dtype=np.int64)
    st[_RANGE] = MASK32
    st[_CACHE_SIZE] = 1
    return st, np.zeros(capacity, dtype=np.uint8)


@njit(cache=True)
def _shift_low(st, buf):
    low = st[_LOW]
    if low < 0xFF000000 or low >= (1 << 32):
        carry = low >> 32
        temp = st[_CACHE]
        while True:
            buf[st[_POS]] = (temp + carry) & 0xFF
            st[_POS] += 1
            temp = 0xFF
            st[_CACHE_SIZE] -= 1
            if st[_CACHE_SIZE] == 0:
                break
        st[_CACHE] = (low >> 24) & 0xFF
    st[_CACHE_SIZE] += 1
    st[_LOW] = (low & 0x00FFFFFF) << 8


@njit(cache=True)
def _enc_interval(st, buf, cum, freq, total):
    r = st[_RANGE] // total
    st[_LOW] += r * cum
    st[_RANGE] = r * freq
    while st[_RANGE] < TOP:
        st[_RANGE] <<= 8
        _shift_low(st, buf)


@njit(cache=True)
def _update(freq, total, inc, limit, ctx, sym, n):
    freq[ctx, sym] += inc[ctx]
    total[ctx] += inc[ctx]
    if total[ctx] > limit[ctx]:
        t = 0
        for i in range(n):
            f = (freq[ctx, i] + 1) >> 1
            freq[ctx, i] = f
            t += f
        total[ctx] = t


@njit(cache=True)
def enc_symbol(st, buf, freq, total, alph, inc, limit, ctx, sym):
    cum = 0
    for i in range(sym):
        cum += freq[ctx, i]
    _enc_interval(st, buf, cum, freq[ctx, sym], total[ctx])
    _update(freq, total, inc, limit, ctx, sym, alph[ctx])


@njit(cache=True)
def enc_bits(st, buf, value, nbits):
    _enc_interval(st, buf, value, 1, 1 << nbits)


@njit(cache=True)
def enc_finish(st, buf):
    for _ in range(5):
        _shift_low(st, buf)
    return buf[: st[_POS]]


# --- decoder kernels ------------------------------------------------------

@njit(cache=True)
def _next_byte(st, data):
    p = st[_DPOS]
    if p >= data.shape[0]:
        st[_ERR] = 1
        st[_DPOS] = p + 1
        return 0
    st[_DPOS] = p + 1
    return np.int64(data[p])


@njit(cache=True)
def dec_new(data):
    st = np.zeros(4, dtype=np.int64)
    st[_DRANGE] = MASK32
    for _ in range(5):
        st[_CODE] = ((st[_CODE] << 8) | _next_byte(st, data)) & MASK32
    return st


@njit(cache=True)
def _dec_normalize(st, data):
    while st[_DRANGE] < TOP:
        st[_CODE] = ((st[_CODE] << 8) | _next_byte(st, data)) & MASK32
        st[_DRANGE] <<= 8


@njit(cache=True)
def dec_symbol(st, data, freq, total, alph, inc, limit, ctx):
    tot = total[ctx]
    r = st[_DRANGE] // tot
    v = st[_CODE] // r
    if v >= tot:
        st[_ERR] = 2
        v = tot - 1
    n = alph[ctx]
    cum = 0
    sym = 0
    while sym < n - 1 and cum + freq[ctx, sym] <= v:
        cum += freq[ctx, sym]
        sym += 1
    st[_CODE] -= r * cum
    st[_DRANGE] = r * freq[ctx, sym]
    _dec_normalize(st, data)
    _update(freq, total, inc, limit, ctx, sym, n)
    return sym


@njit(cache=True)
def dec_bits(st, data, nbits):
    r = st[_DRANGE] >> nbits
    v = st[_CODE] // r
    lim = np.int64(1) << nbits
    if v >= lim:
        st[_ERR] = 2
        v = lim - 1
    st[_CODE] -= r * v
    st[_DRANGE] = r
    _dec_normalize(st, data)
    return v


# --- whole-stream kernels -------------------------------------------------

@njit(cache=True)
def _encode_events(symbols, contexts, freq, total, alph, inc, limit):
    st, buf = enc_new(3 * symbols.shape[0] + 16)
    for i in range(symbols.shape[0]):
        c = contexts[i]
        if c >= 0:
            enc_symbol(st, buf, freq, total, alph, inc, limit, c, symbols[i])
        else:
            enc_bits(st, buf, symbols[i], -c)
    return enc_finish(st, buf).copy()


@njit(cache=True)
def _decode_events(data, contexts, freq, total, alph, inc, limit):
    st = dec_new(data)
    out = np.empty(contexts.shape[0], dtype=np.int64)
    for i in range(contexts.shape[0]):
        c = contexts[i]
        if c >= 0:
            out[i] = dec_symbol(st, data, freq, total, alph, inc, limit, c)
        else:
            out[i] = dec_bits(st, data, -c)
    return out, st


def check_decoder_state(st, data) -> None:
    """Raise if a decoder ran past the end of ``data`` or hit an impossible value."""
    if st[_ERR] == 1 or st[_DPOS] > len(data):
        raise DecodeError("entropy-coded stream is truncated")
    if st[_ERR] == 2:
        raise DecodeError("entropy-coded stream is corrupt")


def _validate_events(symbols: np.ndarray, contexts: np.ndarray, models: ModelSet) -> None:
    if symbols.shape != contexts.shape:
        raise InvalidArgument("symbols and contexts must have equal length")
    if symbols.size == 0:
        return
    if contexts.max(initial=-1) >= len(models.models) or contexts.min(initial=0) < -MAX_BYPASS_BITS:
        raise InvalidArgument("context out of range")
    adaptive = contexts >= 0
    limits = np.where(adaptive, models.alphabet[np.maximum(contexts, 0)], np.left_shift(1, -np.minimum(contexts, 0)))
    if (symbols < 0).any() or (symbols >= limits).any():
        raise InvalidArgument("symbol outside its alphabet")


def encode_events(symbols, contexts, models: list[SymbolModel]) -> bytes:
    """Code ``symbols[i]`` under ``contexts[i]`` (see module docstring)."""
    symbols = np.ascontiguousarray(symbols, dtype=np.int64)
    contexts = np.ascontiguousarray(contexts, dtype=np.int64)
    ms = ModelSet(models)
    _validate_events(symbols, contexts, ms)
    return _encode_events(symbols, contexts, *ms.arrays()).tobytes()


def decode_events(data: bytes, contexts, models: list[SymbolModel]) -> np.ndarray:
    contexts = np.ascontiguousarray(contexts, dtype=np.int64)
    buf = np.frombuffer(data, dtype=np.uint8)
    ms = ModelSet(models)
    out, st = _decode_events(buf, contexts, *ms.arrays())
    check_decoder_state(st, buf)
    return out


def range_encode(symbols, model: SymbolModel) -> bytes:
    """Encode a sequence of integers in ``[0, model.alphabet_size)``."""
    symbols = np.asarray(symbols, dtype=np.int64).ravel()
    return encode_events(symbols, np.zeros_like(symbols), [model])


def range_decode(data: bytes, count: int, model: SymbolModel) -> np.ndarray:
    """Inverse of :func:`range_encode`; ``count`` symbols are read."""
    if count < 0:
        raise InvalidArgument("count must be non-negative")
    return decode_events(data, np.zeros(count, dtype=np.int64), [model])
