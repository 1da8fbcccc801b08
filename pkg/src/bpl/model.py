"""Boundary functions, function classes and Poisson point process simulation.

Step functions use the left-open piece convention: piece ``i`` holds on
``(b[i-1], b[i]]`` and the value at 0 is the first value.  With this choice
an observation that binds a maximal step function from below sits exactly on
its graph.
"""
from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np


class BandError(RuntimeError):
    """The simulated band is too thin for the requested statistic."""


class InfeasibleClassError(ValueError):
    """No member of the requested function class exists for the inputs."""


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.setflags(write=False)
    return out


# ---------------------------------------------------------------------------
# Step functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class StepFn:
    """Piecewise-constant function on ``[0, T]`` in canonical form."""

    breaks: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        breaks = np.asarray(self.breaks, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if breaks.ndim != 1 or values.ndim != 1:
            raise ValueError("breaks and values must be one-dimensional")
        if len(values) != len(breaks) - 1 or len(values) == 0:
            raise ValueError("need len(values) == len(breaks) - 1 >= 1")
        if breaks[0] != 0.0:
            raise ValueError("first break must be 0")
        if np.any(np.diff(breaks) <= 0):
            raise ValueError("breaks must be strictly increasing")
        # merge equal neighbours
        keep = np.ones(len(values), dtype=bool)
        keep[1:] = values[1:] != values[:-1]
        if not keep.all():
            idx = np.flatnonzero(keep)
            values = values[idx]
            breaks = np.concatenate([breaks[idx], breaks[-1:]])
        object.__setattr__(self, "breaks", _frozen(breaks))
        object.__setattr__(self, "values", _frozen(values))

    @classmethod
    def constant(cls, value: float, T: float) -> "StepFn":
        return cls([0.0, T], [value])

    @classmethod
    def from_jumps(cls, times: Sequence[float], levels: Sequence[float], T: float) -> "StepFn":
        """Build from jump times ``t_1..t_K`` and levels ``b_0..b_K``.

        Level ``b_k`` holds to the right of ``t_k``; coincident jump times are
        collapsed onto the last level.
        """
        times = list(times)
        levels = list(levels)
        if len(levels) != len(times) + 1:
            raise ValueError("need one more level than jump times")
        brk = [0.0]
        val = [levels[0]]
        for t, b in zip(times, levels[1:]):
            if t <= brk[-1]:
                val[-1] = b
                continue
            brk.append(t)
            val.append(b)
        if brk[-1] >= T:
            raise ValueError("jump times must lie inside (0, T)")
        brk.append(T)
        return cls(brk, val)

    @property
    def T(self) -> float:
        return float(self.breaks[-1])

    @property
    def n_pieces(self) -> int:
        return len(self.values)

    @property
    def jump_times(self) -> np.ndarray:
        return self.breaks[1:-1]

    def __call__(self, x):
        return self.eval(x)

    def eval(self, x):
        """Evaluate at ``x`` (scalar or array) inside ``[0, T]``."""
        xa = np.asarray(x, dtype=float)
        if np.any(xa < 0) or np.any(xa > self.T):
            raise ValueError(f"evaluation point outside [0, {self.T}]")
        idx = np.searchsorted(self.breaks, xa, side="left") - 1
        idx = np.clip(idx, 0, len(self.values) - 1)
        out = self.values[idx]
        return float(out) if out.ndim == 0 else out

    def integral(self, upper: Optional[float] = None) -> float:
        """Integral over ``[0, T]`` or over ``[0, upper]``."""
        if upper is None:
            return math.fsum(self.values * np.diff(self.breaks))
        b = np.minimum(self.breaks, upper)
        return math.fsum(self.values * np.diff(b))

    def __eq__(self, other):
        if not isinstance(other, StepFn):
            return NotImplemented
        return np.array_equal(self.breaks, other.breaks) and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash((self.breaks.tobytes(), self.values.tobytes()))

    def __repr__(self):
        return f"StepFn(breaks={self.breaks.tolist()}, values={self.values.tolist()})"

    def to_json(self) -> dict:
        return {"T": self.T, "breaks": self.breaks.tolist(), "values": self.values.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "StepFn":
        fn = cls(obj["breaks"], obj["values"])
        if fn.T != float(obj["T"]):
            raise ValueError("T does not match the last break")
        return fn


def integral(f: StepFn) -> float:
    return f.integral()


def eval_step(f: StepFn, x):
    return f.eval(x)


def _merged_grid(*fns) -> np.ndarray:
    return np.unique(np.concatenate([fn.breaks for fn in fns]))


def l1_dist(f: StepFn, g: StepFn) -> float:
    """Exact L1 distance between two step functions on the same window."""
    if f.T != g.T:
        raise ValueError("step functions live on different windows")
    grid = _merged_grid(f, g)
    mid = 0.5 * (grid[1:] + grid[:-1])
    return math.fsum(np.abs(f.eval(mid) - g.eval(mid)) * np.diff(grid))


# ---------------------------------------------------------------------------
# Truths
# ---------------------------------------------------------------------------


def _abs_linear_integral(slope, intercept, lo, hi):
    """Vectorised integral of ``|slope*x + intercept|`` over ``[lo, hi]``."""
    slope = np.asarray(slope, dtype=float)
    intercept = np.asarray(intercept, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    v_lo = slope * lo + intercept
    v_hi = slope * hi + intercept
    width = hi - lo
    same_sign = v_lo * v_hi >= 0
    out = np.where(same_sign, 0.5 * np.abs(v_lo + v_hi) * width, 0.0)
    cross = ~same_sign
    if np.any(cross):
        # root strictly inside, two triangles
        root = -intercept[cross] / slope[cross]
        out[cross] = 0.5 * (np.abs(v_lo[cross]) * (root - lo[cross]) + np.abs(v_hi[cross]) * (hi[cross] - root))
    return out


@dataclass(frozen=True)
class Truth:
    """Support boundary used to generate data.

    ``kind`` is one of ``step``, ``linear``, ``plgrid`` or ``kink``.  Every
    variant is piecewise affine, which gives exact evaluation, integrals and
    L1 distances to step functions.
    """

    kind: str
    T: float
    step: Optional[StepFn] = None
    slope: float = 1.0
    intercept: float = 0.0
    offsets: tuple = ()

    @classmethod
    def from_step(cls, f: StepFn) -> "Truth":
        return cls("step", f.T, step=f)

    @classmethod
    def linear(cls, slope: float, intercept: float, T: float = 1.0) -> "Truth":
        return cls("linear", T, slope=float(slope), intercept=float(intercept))

    @classmethod
    def plgrid(cls, offsets: Sequence[float], T: float = 1.0) -> "Truth":
        return cls("plgrid", T, offsets=tuple(float(a) for a in offsets))

    @classmethod
    def kink(cls, T: float = 1.5) -> "Truth":
        if T < 1:
            raise ValueError("the kink truth needs T >= 1")
        return cls("kink", T)

    @cached_property
    def pieces(self):
        """``(breaks, slopes, intercepts)`` of the affine pieces."""
        if self.kind == "step":
            f = self.step
            return f.breaks, np.zeros(f.n_pieces), f.values.copy()
        if self.kind == "linear":
            return np.array([0.0, self.T]), np.array([self.slope]), np.array([self.intercept])
        if self.kind == "plgrid":
            K = len(self.offsets)
            brk = np.arange(K + 1) / K
            icp = list(self.offsets)
            if self.T > 1:
                brk = np.append(brk, self.T)
                icp.append(0.0)
            elif self.T < 1:
                raise ValueError("plgrid truth needs T >= 1")
            return brk, np.ones(len(icp)), np.array(icp)
        if self.kind == "kink":
            if self.T == 1:
                return np.array([0.0, 1.0]), np.array([1.0]), np.array([0.5])
            return np.array([0.0, 1.0, self.T]), np.array([1.0, 0.0]), np.array([0.5, 1.5])
        raise ValueError(f"unknown truth kind {self.kind!r}")

    def _piece_index(self, x):
        brk = self.pieces[0]
        # half-open [b_{i-1}, b_i) pieces; the right end joins the last piece
        return np.clip(np.searchsorted(brk, x, side="right") - 1, 0, len(brk) - 2)

    def eval(self, x):
        xa = np.asarray(x, dtype=float)
        if self.kind == "step":
            return self.step.eval(xa)
        brk, sl, ic = self.pieces
        i = self._piece_index(xa)
        out = sl[i] * xa + ic[i]
        return float(out) if out.ndim == 0 else out

    __call__ = eval

    def integral(self, lo: float = 0.0, hi: Optional[float] = None) -> float:
        hi = self.T if hi is None else hi
        brk, sl, ic = self.pieces
        a = np.clip(brk[:-1], lo, hi)
        b = np.clip(brk[1:], lo, hi)
        return math.fsum(0.5 * sl * (b * b - a * a) + ic * (b - a))

    def inf_on(self, lo: float, hi: float) -> float:
        """Infimum over ``(lo, hi)``."""
        brk, sl, ic = self.pieces
        a = np.maximum(brk[:-1], lo)
        b = np.minimum(brk[1:], hi)
        ok = b > a
        vals = np.minimum(sl[ok] * a[ok] + ic[ok], sl[ok] * b[ok] + ic[ok])
        return float(vals.min())

    def inf_on_many(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        if self.kind == "step" or len(self.pieces[0]) > 3:
            return np.array([self.inf_on(a, b) for a, b in zip(lo, hi)])
        brk, sl, ic = self.pieces
        out = np.full(len(lo), np.inf)
        for a0, b0, s, c in zip(brk[:-1], brk[1:], sl, ic):
            a = np.maximum(lo, a0)
            b = np.minimum(hi, b0)
            ok = b > a
            v = np.minimum(s * a + c, s * b + c)
            out = np.where(ok, np.minimum(out, v), out)
        return out

    def to_json(self) -> dict:
        if self.kind == "step":
            return {"kind": "step", "T": self.T, "fn": self.step.to_json()}
        if self.kind == "linear":
            return {"kind": "linear", "T": self.T, "slope": self.slope, "intercept": self.intercept}
        if self.kind == "plgrid":
            return {"kind": "plgrid", "T": self.T, "offsets": list(self.offsets)}
        return {"kind": "kink", "T": self.T}

    @classmethod
    def from_json(cls, obj: dict) -> "Truth":
        kind = obj["kind"]
        if kind == "step":
            return cls.from_step(StepFn.from_json(obj["fn"]))
        if kind == "linear":
            return cls.linear(obj.get("slope", 1.0), obj.get("intercept", 0.0), obj.get("T", 1.0))
        if kind == "plgrid":
            return cls.plgrid(obj["offsets"], obj.get("T", 1.0))
        if kind == "kink":
            return cls.kink(obj.get("T", 1.5))
        raise ValueError(f"unknown truth kind {kind!r}")


def l1_dist_truth(t: Truth, f: StepFn) -> float:
    """Exact ``int |truth - f|`` using closed forms on each merged piece."""
    if t.T != f.T:
        raise ValueError("truth and step function live on different windows")
    brk, sl, ic = t.pieces
    grid = np.unique(np.concatenate([brk, f.breaks]))
    lo, hi = grid[:-1], grid[1:]
    mid = 0.5 * (lo + hi)
    j = np.clip(np.searchsorted(brk, mid, side="right") - 1, 0, len(sl) - 1)
    fv = f.eval(mid)
    return math.fsum(_abs_linear_integral(sl[j], ic[j] - fv, lo, hi))


# ---------------------------------------------------------------------------
# Function classes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClassSpec:
    """Function class descriptor.

    kinds: ``pc`` (K, R), ``pcstar`` (grid, R), ``monotone`` (R),
    ``mk`` (K, R), ``ms`` (K, R, n, slack).
    """

    kind: str
    R: float
    K: int = 0
    grid: tuple = ()
    n: float = 0.0
    slack: float = 1.0

    def __post_init__(self):
        if self.R <= 0:
            raise ValueError("R must be positive")
        if self.slack < 1:
            raise ValueError("slack must be >= 1")
        if self.grid and np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be strictly increasing")

    @classmethod
    def pc(cls, K, R):
        return cls("pc", R, K=K)

    @classmethod
    def pcstar(cls, grid, R):
        return cls("pcstar", R, grid=tuple(float(g) for g in grid))

    @classmethod
    def monotone(cls, R):
        return cls("monotone", R)

    @classmethod
    def mk(cls, K, R):
        return cls("mk", R, K=K)

    @classmethod
    def ms(cls, K, R, n, slack=1.0):
        return cls("ms", R, K=K, n=float(n), slack=float(slack))


@dataclass
class Membership:
    ok: bool
    margins: dict = field(default_factory=dict)

    def __bool__(self):
        return self.ok

    def failing(self):
        return [k for k, v in self.margins.items() if v < 0]


def ms_thresholds(K: int, n: float, slack: float = 1.0) -> dict:
    """Lower bounds of the minimal-signal class (area, height, gap)."""
    ln = math.log(n)
    area = 2 * K * math.log(math.e * K) * ln**3 / n if K > 0 else 0.0
    return {
        "area": area / slack,
        "height": 2 * ln / math.sqrt(n) / slack,
        "gap": 2 / math.sqrt(n) / slack,
    }


def _as_step(f) -> Optional[StepFn]:
    if isinstance(f, StepFn):
        return f
    if isinstance(f, Truth) and f.kind == "step":
        return f.step
    return None


def is_member(f: Union[StepFn, Truth], spec: ClassSpec) -> Membership:
    """Check class membership; ``margins`` holds ``lhs - rhs`` per condition."""
    m = {}
    step = _as_step(f)
    if step is None:
        # affine truths: only the monotone class is meaningful
        brk, sl, ic = f.pieces
        lefts = sl * brk[:-1] + ic
        rights = sl * brk[1:] + ic
        m["nondecreasing"] = min(float(np.min(sl)), float(np.min(lefts[1:] - rights[:-1], initial=0.0)))
        m["bound_low"] = float(lefts[0] + spec.R)
        m["bound_high"] = float(spec.R - rights[-1])
        if spec.kind != "monotone":
            m["piecewise_constant"] = -1.0
        return Membership(all(v >= 0 for v in m.values()), m)

    v = step.values
    jumps = np.diff(v)
    if spec.kind == "pc":
        m["pieces"] = spec.K - step.n_pieces
        m["bound"] = spec.R - float(np.max(np.abs(v)))
    elif spec.kind == "pcstar":
        grid = np.array(spec.grid)
        m["on_grid"] = 0.0 if np.all(np.isin(step.jump_times, grid)) else -1.0
        m["span"] = 0.0 if (grid[0] == 0 and grid[-1] == step.T) else -1.0
        m["bound"] = spec.R - float(np.max(np.abs(v)))
    elif spec.kind == "monotone":
        m["nondecreasing"] = float(np.min(jumps, initial=0.0))
        m["bound_low"] = float(v[0] + spec.R)
        m["bound_high"] = float(spec.R - v[-1])
    elif spec.kind in ("mk", "ms"):
        m["nondecreasing"] = float(np.min(jumps, initial=0.0))
        m["jumps_before_one"] = 1.0 - float(step.jump_times.max(initial=0.0))
        heights = np.concatenate([v[:1], jumps])
        m["height_nonneg"] = float(heights.min())
        m["height_bound"] = spec.R - float(heights.max())
        m["n_jumps"] = spec.K - len(jumps)
        if spec.kind == "ms":
            m["n_jumps"] = -abs(spec.K - len(jumps))
            if len(jumps) == spec.K:
                thr = ms_thresholds(spec.K, spec.n, spec.slack)
                t = step.breaks  # t_0 = 0, ..., t_K, t_{K+1} = T
                gaps = np.diff(t)
                for k in range(spec.K + 1):
                    m[f"height[{k}]"] = float(heights[k] - thr["height"])
                    m[f"gap[{k}]"] = float(gaps[k] - thr["gap"])
                for k in range(1, spec.K + 1):
                    area = heights[k] * min(gaps[k], gaps[k - 1])
                    m[f"area[{k}]"] = float(area - thr["area"])
    else:
        raise ValueError(f"unknown class {spec.kind!r}")
    return Membership(all(val >= 0 for val in m.values()), m)


def make_ms_truth(K: int, R: float, n: float, T: float = 1.5, slack: float = 2.0) -> StepFn:
    """Equispaced, equal-height member of the minimal-signal class.

    Jumps at ``k/(K+1)`` with all heights (including the start value)
    ``R/(K+1)``.  Raises :class:`InfeasibleClassError` naming the failing
    conditions when the construction is not a member.
    """
    if K < 0:
        raise ValueError("K must be nonnegative")
    if T <= 1:
        raise ValueError("T must exceed 1")
    a = R / (K + 1)
    times = [k / (K + 1) for k in range(1, K + 1)]
    levels = [a * (k + 1) for k in range(K + 1)]
    f = StepFn.from_jumps(times, levels, T)
    res = is_member(f, ClassSpec.ms(K, R, n, slack))
    if not res.ok:
        raise InfeasibleClassError(f"M_S({K}, {R}) infeasible at n={n}: failing {res.failing()}")
    return f


# ---------------------------------------------------------------------------
# Point sets
# ---------------------------------------------------------------------------


class SparseTableArgmin:
    """Range-argmin over a fixed array; O(N log N) build, O(1) query."""

    def __init__(self, values: np.ndarray):
        values = np.asarray(values, dtype=float)
        self.values = values
        n = len(values)
        self.table = [np.arange(n)]
        span = 1
        while 2 * span <= n:
            prev = self.table[-1]
            left = prev[: n - 2 * span + 1]
            right = prev[span : n - span + 1]
            self.table.append(np.where(values[right] < values[left], right, left))
            span *= 2

    @cached_property
    def _vals(self):
        # python lists make scalar queries cheap inside samplers; built on first use
        return [self.values[t].tolist() for t in self.table]

    @cached_property
    def _idx(self):
        return [t.tolist() for t in self.table]

    def argmin(self, lo: int, hi: int) -> Optional[int]:
        """Index of the minimum over ``values[lo:hi]``; None if empty."""
        if hi <= lo:
            return None
        d = (hi - lo).bit_length() - 1
        idx = self._idx[d]
        vals = self._vals[d]
        i, j = lo, hi - (1 << d)
        return idx[j] if vals[j] < vals[i] else idx[i]

    def min(self, lo: int, hi: int) -> float:
        if hi <= lo:
            return math.inf
        d = (hi - lo).bit_length() - 1
        vals = self._vals[d]
        a, b = vals[lo], vals[hi - (1 << d)]
        return a if a < b else b


@dataclass(frozen=True, eq=False)
class PointSet:
    """A band-restricted PPP realisation, sorted by x."""

    n: float
    T: float
    h: float
    truth: Truth
    xs: np.ndarray
    ys: np.ndarray
    seed: Optional[int] = None

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        ys = np.asarray(self.ys, dtype=float)
        if xs.shape != ys.shape:
            raise ValueError("xs and ys differ in length")
        if len(xs) > 1 and np.any(np.diff(xs) <= 0):
            raise ValueError("x coordinates must be strictly increasing")
        object.__setattr__(self, "xs", _frozen(xs))
        object.__setattr__(self, "ys", _frozen(ys))

    def __len__(self):
        return len(self.xs)

    @property
    def points(self):
        return list(zip(self.xs.tolist(), self.ys.tolist()))

    @cached_property
    def rmq(self) -> SparseTableArgmin:
        return SparseTableArgmin(self.ys)

    @cached_property
    def xlist(self) -> list:
        return self.xs.tolist()

    def index_range(self, a: float, b: float, closed: str = "left") -> tuple:
        """Index range of points with x in ``[a, b)`` (or ``(a, b]``)."""
        side = "left" if closed == "left" else "right"
        fn = bisect.bisect_left if side == "left" else bisect.bisect_right
        return fn(self.xlist, a), fn(self.xlist, b)

    def min_y(self, a: float, b: float, closed: str = "left") -> float:
        lo, hi = self.index_range(a, b, closed)
        return self.rmq.min(lo, hi)

    def check_band(self, fit: StepFn) -> None:
        """Raise :class:`BandError` unless ``fit`` is unaffected by the band.

        A fit computed from band points equals the fit from the full process
        when every piece value stays within ``h`` of the truth's infimum on
        that piece.
        """
        lo, hi = fit.breaks[:-1], np.minimum(fit.breaks[1:], self.T)
        inf = self.truth.inf_on_many(lo, hi)
        slack = inf + self.h - fit.values
        if np.any(slack < 0):
            i = int(np.argmin(slack))
            raise BandError(
                f"band height {self.h:g} too small on piece ({lo[i]:g}, {hi[i]:g}]: "
                f"value {fit.values[i]:g} exceeds truth infimum + h"
            )

    def to_csv(self, path) -> None:
        path = Path(path)
        with open(path, "w") as fh:
            fh.write("x,y\n")
            for x, y in zip(self.xs.tolist(), self.ys.tolist()):
                fh.write(f"{x!r},{y!r}\n")
        meta = {"n": self.n, "T": self.T, "h": self.h, "truth": self.truth.to_json(), "seed": self.seed}
        path.with_suffix(".json").write_text(json.dumps(meta, indent=2))

    @classmethod
    def from_csv(cls, path) -> "PointSet":
        path = Path(path)
        meta = json.loads(path.with_suffix(".json").read_text())
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        xs = data[:, 0] if data.size else np.empty(0)
        ys = data[:, 1] if data.size else np.empty(0)
        return cls(meta["n"], meta["T"], meta["h"], Truth.from_json(meta["truth"]), xs, ys, meta.get("seed"))


def default_band_monotone(n: float) -> float:
    return 20 * math.sqrt(math.log(n) / n)


def default_band_pcstar(n: float, K: int) -> float:
    return 30 * K / n * math.log(n)


def simulate(
    truth: Truth,
    n: float,
    T: Optional[float] = None,
    h: Optional[float] = None,
    rng: Union[np.random.Generator, int, None] = None,
) -> PointSet:
    """Exact draw of the PPP with intensity ``n 1(f(x) <= y)`` in the band.

    The band ``{f(x) <= y <= f(x) + h}`` has constant vertical width, so the
    shear ``(x, y) -> (x, y - f(x))`` maps it onto a rectangle of area
    ``T h`` and the draw reduces to uniform points in that rectangle.
    """
    T = truth.T if T is None else T
    if T != truth.T:
        raise ValueError("window differs from the truth's window")
    if h is None:
        h = default_band_monotone(n)
    if n <= 0 or T <= 0 or h < 0:
        raise ValueError("need n, T > 0 and h >= 0")
    seed = rng if isinstance(rng, (int, np.integer)) else None
    rng = np.random.default_rng(rng)
    count = rng.poisson(n * T * h) if h > 0 else 0
    xs = np.sort(rng.uniform(0.0, T, size=count))
    while count > 1:
        dup = np.flatnonzero(np.diff(xs) == 0)
        if len(dup) == 0:
            break
        xs[dup] = rng.uniform(0.0, T, size=len(dup))
        xs.sort()
    ys = truth.eval(xs) + h * rng.uniform(0.0, 1.0, size=count) if count else np.empty(0)
    return PointSet(float(n), float(T), float(h), truth, xs, np.asarray(ys, dtype=float), seed)


def range_min(ps: PointSet, a: float, b: float) -> Optional[tuple]:
    """Lowest point with x in ``[a, b)``, or None."""
    lo, hi = ps.index_range(a, b)
    i = ps.rmq.argmin(lo, hi)
    if i is None:
        return None
    return float(ps.xs[i]), float(ps.ys[i])
