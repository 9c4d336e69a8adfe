"""Regular (3,6) LDPC codes: progressive-edge-growth construction, systematic
encoding, and a log-domain sum-product decoder returning extrinsic LLRs.

LLR convention throughout: ``L = ln p(bit=0) / p(bit=1)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

LLR_CLAMP = 30.0


class CodeConstructionError(RuntimeError):
    pass


def gf2_rref(mat: np.ndarray):
    """Reduced row echelon form over GF(2). Returns ``(rref, pivot_columns)``."""
    a = np.array(mat, dtype=np.uint8) & 1
    rows, cols = a.shape
    pivots = []
    r = 0
    for c in range(cols):
        if r == rows:
            break
        hit = np.nonzero(a[r:, c])[0]
        if hit.size == 0:
            continue
        p = r + hit[0]
        if p != r:
            a[[r, p]] = a[[p, r]]
        others = np.nonzero(a[:, c])[0]
        others = others[others != r]
        a[others] ^= a[r]
        pivots.append(c)
        r += 1
    return a[:r], np.array(pivots, dtype=np.int64)


def has_four_cycles(h: np.ndarray) -> bool:
    h = np.asarray(h, dtype=np.int64)
    overlap = h.T @ h
    np.fill_diagonal(overlap, 0)
    return bool(overlap.max(initial=0) > 1)


@dataclass(frozen=True)
class LdpcCode:
    parity_matrix: np.ndarray
    check_index: np.ndarray  # per edge
    var_index: np.ndarray  # per edge
    info_positions: np.ndarray
    parity_positions: np.ndarray
    parity_generator: np.ndarray  # parity bits = parity_generator @ info (mod 2)

    @classmethod
    def from_parity_matrix(cls, h: np.ndarray) -> "LdpcCode":
        h = np.asarray(h, dtype=np.uint8) & 1
        rref, pivots = gf2_rref(h)
        n = h.shape[1]
        info = np.setdiff1d(np.arange(n), pivots)
        rows, cols = np.nonzero(h)
        return cls(
            parity_matrix=h,
            check_index=rows.astype(np.int64),
            var_index=cols.astype(np.int64),
            info_positions=info,
            parity_positions=pivots,
            parity_generator=rref[:, info],
        )

    @property
    def n_code(self) -> int:
        return self.parity_matrix.shape[1]

    @property
    def n_info(self) -> int:
        return self.info_positions.size

    @property
    def n_checks(self) -> int:
        return self.parity_matrix.shape[0]

    def encode(self, info_bits: np.ndarray) -> np.ndarray:
        return encode(self, info_bits)

    def extract_info(self, codeword: np.ndarray) -> np.ndarray:
        return np.asarray(codeword)[..., self.info_positions]

    def syndrome(self, bits: np.ndarray) -> np.ndarray:
        return (self.parity_matrix.astype(np.int64) @ np.asarray(bits, dtype=np.int64)) % 2


def _peg_parity_matrix(n_code: int, n_checks: int, dv: int, dc: int, rng) -> np.ndarray:
    var_checks = [[] for _ in range(n_code)]
    check_vars = [[] for _ in range(n_checks)]
    degree = np.zeros(n_checks, dtype=np.int64)
    all_checks = set(range(n_checks))

    def pick(candidates):
        cand = np.array(sorted(candidates))
        cand = cand[degree[cand] < dc]
        if cand.size == 0:
            return None
        low = cand[degree[cand] == degree[cand].min()]
        return int(rng.choice(low))

    for v in range(n_code):
        for e in range(dv):
            open_checks = all_checks.difference(var_checks[v])
            if e == 0:
                c = pick(open_checks)
            else:
                reached = set(var_checks[v])
                seen_vars = {v}
                layer = set(reached)
                candidates = None
                while True:
                    new_vars = {u for ch in layer for u in check_vars[ch]} - seen_vars
                    seen_vars |= new_vars
                    new_checks = {ch for u in new_vars for ch in var_checks[u]} - reached
                    if not new_checks:
                        candidates = all_checks - reached
                        break
                    if len(reached) + len(new_checks) == n_checks:
                        candidates = new_checks
                        break
                    reached |= new_checks
                    layer = new_checks
                c = pick(candidates & open_checks)
                if c is None:
                    c = pick(open_checks)
            if c is None:
                raise CodeConstructionError("ran out of check-node capacity")
            var_checks[v].append(c)
            check_vars[c].append(v)
            degree[c] += 1

    h = np.zeros((n_checks, n_code), dtype=np.uint8)
    for v, checks in enumerate(var_checks):
        h[checks, v] = 1
    return h


def build_code(n_info: int, n_code: int, seed: int = 0, max_attempts: int = 50) -> LdpcCode:
    """Seeded regular (3,6) LDPC code of rate 1/2 with full-rank parity checks."""
    if n_code != 2 * n_info:
        raise ValueError(f"only rate-1/2 codes are supported (got {n_info}/{n_code})")
    dv, dc = 3, 6
    n_checks = n_code - n_info
    if n_code * dv != n_checks * dc:
        raise ValueError("block length incompatible with a regular (3,6) graph")
    fallback = None
    for attempt in range(max_attempts):
        rng = np.random.default_rng([seed, attempt])
        try:
            h = _peg_parity_matrix(n_code, n_checks, dv, dc, rng)
        except CodeConstructionError:
            continue
        _, pivots = gf2_rref(h)
        if pivots.size != n_checks:
            continue
        if not has_four_cycles(h):
            return LdpcCode.from_parity_matrix(h)
        if fallback is None:
            fallback = h
    if fallback is not None:
        log.warning("no 4-cycle-free full-rank code found for n=%d; using girth-4 code", n_code)
        return LdpcCode.from_parity_matrix(fallback)
    raise CodeConstructionError(f"failed to build a full-rank ({n_code},{n_info}) code")


def encode(code: LdpcCode, info_bits: np.ndarray) -> np.ndarray:
    info_bits = np.asarray(info_bits, dtype=np.int64)
    if info_bits.shape[-1] != code.n_info:
        raise ValueError(f"expected {code.n_info} info bits, got {info_bits.shape[-1]}")
    out = np.zeros(info_bits.shape[:-1] + (code.n_code,), dtype=np.int8)
    out[..., code.info_positions] = info_bits
    out[..., code.parity_positions] = (info_bits @ code.parity_generator.T.astype(np.int64)) % 2
    return out


def _phi(x):
    # phi(x) = -log tanh(x/2), self-inverse on (0, inf)
    x = np.clip(x, 1e-12, 50.0)
    return np.log1p(2.0 / np.expm1(x))


def decode_spa(code: LdpcCode, channel_llr: np.ndarray, max_iters: int = 50, clamp: float = LLR_CLAMP):
    """Sum-product decoding.

    Returns ``(extrinsic_llr, hard_bits, converged)`` where the extrinsic LLR is
    the posterior LLR minus the input LLR of each bit.
    """
    llr = np.clip(np.asarray(channel_llr, dtype=float), -clamp, clamp)
    if llr.size != code.n_code:
        raise ValueError(f"expected {code.n_code} LLRs, got {llr.size}")
    r, c = code.check_index, code.var_index
    m, n = code.n_checks, code.n_code

    v2c = llr[c]
    total = llr.copy()
    hard = (total < 0).astype(np.int8)
    converged = False
    for _ in range(max_iters):
        mag = _phi(np.abs(v2c))
        neg = (v2c < 0).astype(np.int64)
        mag_sum = np.bincount(r, weights=mag, minlength=m)
        neg_sum = np.bincount(r, weights=neg, minlength=m).astype(np.int64)
        c2v_mag = _phi(np.maximum(mag_sum[r] - mag, 0.0))
        c2v_sign = 1.0 - 2.0 * ((neg_sum[r] - neg) & 1)
        c2v = np.clip(c2v_sign * c2v_mag, -clamp, clamp)

        total = llr + np.bincount(c, weights=c2v, minlength=n)
        hard = (total < 0).astype(np.int8)
        if not np.any(np.bincount(r, weights=hard[c], minlength=m).astype(np.int64) & 1):
            converged = True
            break
        v2c = np.clip(total[c] - c2v, -clamp, clamp)

    extrinsic = np.clip(total - llr, -clamp, clamp)
    return extrinsic, hard, converged


def export_parity(code: LdpcCode, path) -> None:
    m, n = code.parity_matrix.shape
    rows, cols = np.nonzero(code.parity_matrix)
    lines = [f"# ldpc parity matrix {m} {n}"]
    lines += [f"{i} {j}" for i, j in zip(rows, cols)]
    Path(path).write_text("\n".join(lines) + "\n")


def import_parity(path) -> LdpcCode:
    m = n = None
    entries = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        s = line.strip()
        if not s:
            continue
        if s.startswith("#"):
            parts = s.lstrip("#").split()
            if len(parts) >= 5 and parts[:3] == ["ldpc", "parity", "matrix"]:
                m, n = int(parts[3]), int(parts[4])
            continue
        parts = s.split()
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'row col', got {s!r}")
        entries.append((int(parts[0]), int(parts[1])))
    if not entries:
        raise ValueError(f"{path}: no parity entries")
    idx = np.array(entries)
    if m is None:
        m, n = idx[:, 0].max() + 1, idx[:, 1].max() + 1
    h = np.zeros((m, n), dtype=np.uint8)
    h[idx[:, 0], idx[:, 1]] = 1
    return LdpcCode.from_parity_matrix(h)
