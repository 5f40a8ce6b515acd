"""Random one-dimensional RNN maps under standard initialization schemes.

Shallow family: f(x) = clip(sum_i a_i relu(x - b_i)) with a_i drawn from an
initialization scheme (fan_in = k, fan_out = 1) and b_i uniform on (0, 1),
sorted.  Depth-2 family: x -> v . act(w x + c) + d with a narrow hidden layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Union

import numpy as np
from scipy import stats

from . import pwl
from .errors import ConfigError, ContractError

SCHEME_NAMES = (
    "he-normal",
    "he-uniform",
    "glorot-normal",
    "glorot-uniform",
    "truncated-normal",
    "custom-variance",
)
BIAS_RULES = ("uniform-0-1", "zero", "uniform-symmetric")

# sigma^2 as a function of width, for the variance regimes studied on the shallow family
SIGMA2_RULES = {
    "low-variance": lambda k: 1.0 / (4.0 * math.log(k)),
    "he": lambda k: 2.0,
    "quarter-power": lambda k: math.sqrt(k),
}


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator (Philox) keyed by a 64-bit seed."""
    return np.random.Generator(np.random.Philox(int(seed)))


def trial_seed(master_seed: int, trial_index: int) -> int:
    """64-bit per-trial seed derived from (master_seed, trial_index) only."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(trial_index),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class InitScheme:
    """Weight/bias initialization rule.

    Weight variance is ``sigma2 / fan_in`` for the He, truncated and custom
    schemes and ``sigma2 / (fan_in + fan_out)`` for the Glorot schemes.
    ``sigma2`` is a number or a key of ``SIGMA2_RULES`` evaluated at the
    width; ``None`` means the scheme default of 2.
    """

    name: str = "he-normal"
    sigma2: Union[float, str, None] = None
    bias_rule: str = "uniform-0-1"
    truncation: float = 2.0

    def __post_init__(self):
        if self.name not in SCHEME_NAMES:
            raise ConfigError(f"unknown scheme {self.name!r}; expected one of {SCHEME_NAMES}")
        if self.bias_rule not in BIAS_RULES:
            raise ConfigError(f"unknown bias rule {self.bias_rule!r}; expected one of {BIAS_RULES}")
        if self.name == "custom-variance" and self.sigma2 is None:
            raise ConfigError("custom-variance requires sigma2")
        if isinstance(self.sigma2, str):
            if self.sigma2 not in SIGMA2_RULES:
                raise ConfigError(f"unknown sigma2 rule {self.sigma2!r}")
        elif self.sigma2 is not None:
            if not (isinstance(self.sigma2, (int, float)) and math.isfinite(self.sigma2)) or self.sigma2 <= 0:
                raise ConfigError(f"sigma2 must be positive, got {self.sigma2!r}")
        if not self.truncation > 0:
            raise ConfigError("truncation must be positive")

    def sigma2_at(self, k: int) -> float:
        if self.sigma2 is None:
            return 2.0
        if isinstance(self.sigma2, str):
            if k < 2:
                raise ConfigError(f"sigma2 rule {self.sigma2!r} needs width >= 2")
            return float(SIGMA2_RULES[self.sigma2](k))
        return float(self.sigma2)

    def weight_variance(self, fan_in: int, fan_out: int = 1) -> float:
        s2 = self.sigma2_at(fan_in)
        if self.name.startswith("glorot"):
            return s2 / (fan_in + fan_out)
        return s2 / fan_in

    def sample_weights(self, rng: np.random.Generator, size, fan_in: int, fan_out: int = 1) -> np.ndarray:
        var = self.weight_variance(fan_in, fan_out)
        std = math.sqrt(var)
        if self.name.endswith("uniform"):
            lim = math.sqrt(3.0 * var)
            return rng.uniform(-lim, lim, size=size)
        if self.name == "truncated-normal":
            c = self.truncation
            # rescale so the truncated draw has the target variance
            scale = std / math.sqrt(stats.truncnorm.var(-c, c))
            return stats.truncnorm.rvs(-c, c, scale=scale, size=size, random_state=rng)
        return rng.normal(0.0, std, size=size)

    def sample_biases(self, rng: np.random.Generator, size, fan_in: int) -> np.ndarray:
        if self.bias_rule == "zero":
            return np.zeros(size)
        if self.bias_rule == "uniform-symmetric":
            lim = 1.0 / math.sqrt(fan_in)
            return rng.uniform(-lim, lim, size=size)
        return rng.random(size)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "sigma2": self.sigma2,
            "bias_rule": self.bias_rule,
            "truncation": self.truncation,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "InitScheme":
        unknown = set(obj) - {"name", "sigma2", "bias_rule", "truncation"}
        if unknown:
            raise ConfigError(f"unknown scheme fields: {sorted(unknown)}")
        return cls(**obj)


@dataclass(frozen=True, eq=False)
class NetworkSample:
    k: int
    weights: np.ndarray
    biases: np.ndarray
    scheme: InitScheme
    seed: int
    depth_layout: Optional[str] = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.biases, dtype=np.float64)
        if w.shape != (self.k,) or b.shape != (self.k,):
            raise ContractError("weights and biases must both have length k")
        if np.any(np.diff(b) <= 0) or (b.size and (b[0] <= 0 or b[-1] >= 1)):
            raise ContractError("biases must be strictly increasing inside (0, 1)")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "biases", b)

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "weights": self.weights.tolist(),
            "biases": self.biases.tolist(),
            "scheme": self.scheme.to_json(),
            "seed": self.seed,
            "depth_layout": self.depth_layout,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "NetworkSample":
        return cls(
            k=obj["k"],
            weights=obj["weights"],
            biases=obj["biases"],
            scheme=InitScheme.from_json(obj["scheme"]),
            seed=obj["seed"],
            depth_layout=obj.get("depth_layout"),
        )


def _sorted_unit_biases(rng: np.random.Generator, k: int) -> np.ndarray:
    b = np.sort(rng.random(k))
    # exact 0 or ties have probability ~2^-53; redraw rather than break strict order
    while b.size and (b[0] <= 0.0 or np.any(np.diff(b) <= 0)):
        b = np.sort(rng.random(k))
    return b


def sample_network(k: int, scheme: InitScheme, seed: int) -> NetworkSample:
    """Draw one member of the shallow family; deterministic in (k, scheme, seed)."""
    if k < 1:
        raise ConfigError("width k must be >= 1")
    if scheme.bias_rule != "uniform-0-1":
        raise ConfigError("the shallow family needs biases in (0, 1): use bias_rule 'uniform-0-1'")
    rng = make_rng(seed)
    weights = scheme.sample_weights(rng, k, fan_in=k, fan_out=1)
    biases = _sorted_unit_biases(rng, k)
    return NetworkSample(k=k, weights=weights, biases=biases, scheme=scheme, seed=int(seed))


def build_unclipped_map(sample: NetworkSample) -> pwl.PwlMap:
    return pwl.from_relu_sum(sample.weights, sample.biases)


def build_map(sample: NetworkSample) -> pwl.PwlMap:
    """The clipped network map f_k on [0, 1]."""
    return pwl.clip_apply(build_unclipped_map(sample))


@dataclass(frozen=True, eq=False)
class YSequence:
    """Pre-clip values y_i at the sorted biases, plus the running sums used."""

    values: np.ndarray
    cum_weights: np.ndarray
    cum_weighted_bias: np.ndarray


def y_values(weights, biases) -> np.ndarray:
    """y_i = sum_{j<i} a_j (b_i - b_j), vectorized over leading axes."""
    a = np.asarray(weights, dtype=np.float64)
    b = np.asarray(biases, dtype=np.float64)
    prev_a = np.cumsum(a, axis=-1) - a
    prev_ab = np.cumsum(a * b, axis=-1) - a * b
    return b * prev_a - prev_ab


def y_sequence(sample: NetworkSample) -> YSequence:
    a, b = sample.weights, sample.biases
    cum_a = np.cumsum(a)
    cum_ab = np.cumsum(a * b)
    prev_a = np.concatenate(([0.0], cum_a[:-1]))
    prev_ab = np.concatenate(([0.0], cum_ab[:-1]))
    return YSequence(values=b * prev_a - prev_ab, cum_weights=cum_a, cum_weighted_bias=cum_ab)


# ---------------------------------------------------------------- depth two


def _relu(z):
    return np.maximum(z, 0.0)


_ACTIVATIONS = {"relu": _relu, "tanh": np.tanh}


@dataclass(frozen=True, eq=False)
class DepthTwoNet:
    """x -> [clip](v . act(w x + c) + d): one narrow hidden layer, scalar output.

    Callable on any real input; vectorized.
    """

    w: np.ndarray
    c: np.ndarray
    v: np.ndarray
    d: float
    activation: str = "relu"
    clip: bool = True

    def __post_init__(self):
        if self.activation not in _ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        for name in ("w", "c", "v"):
            arr = np.asarray(getattr(self, name), dtype=np.float64).reshape(-1)
            object.__setattr__(self, name, arr)
        if not (self.w.shape == self.c.shape == self.v.shape):
            raise ContractError("hidden-layer parameter shapes differ")
        object.__setattr__(self, "d", float(self.d))

    @property
    def width(self) -> int:
        return self.w.size

    def pre_clip(self, x):
        x = np.asarray(x, dtype=np.float64)
        h = _ACTIVATIONS[self.activation](np.multiply.outer(x, self.w) + self.c)
        return h @ self.v + self.d

    def __call__(self, x):
        y = self.pre_clip(x)
        return np.clip(y, 0.0, 1.0) if self.clip else y

    def kinks(self) -> np.ndarray:
        """Real-line breakpoints of the pre-clip ReLU map."""
        if self.activation != "relu":
            raise ContractError("only ReLU networks are piecewise linear")
        nz = self.w != 0
        return np.unique(-self.c[nz] / self.w[nz])

    def to_pwl(self) -> pwl.PwlMap:
        k = self.kinks()
        inner = k[(k > 0.0) & (k < 1.0)]
        xs = np.concatenate(([0.0], inner, [1.0]))
        m = pwl.PwlMap(xs, self.pre_clip(xs))
        return pwl.clip_apply(m) if self.clip else m

    def params(self) -> np.ndarray:
        return np.concatenate((self.w, self.c, self.v, [self.d]))

    def with_params(self, flat: np.ndarray) -> "DepthTwoNet":
        h = self.width
        return replace(self, w=flat[:h], c=flat[h : 2 * h], v=flat[2 * h : 3 * h], d=float(flat[3 * h]))


def sample_depth2(
    scheme: InitScheme,
    activation: str = "relu",
    clipping: bool = True,
    seed: int = 0,
    width: int = 2,
) -> DepthTwoNet:
    """Random width-``width`` hidden layer feeding a width-1 output layer."""
    rng = make_rng(seed)
    w = scheme.sample_weights(rng, width, fan_in=1, fan_out=width)
    c = scheme.sample_biases(rng, width, fan_in=1)
    v = scheme.sample_weights(rng, width, fan_in=width, fan_out=1)
    d = float(scheme.sample_biases(rng, 1, fan_in=width)[0])
    return DepthTwoNet(w, c, v, d, activation=activation, clip=clipping)


def build_depth2_map(
    scheme: InitScheme,
    activation: str = "relu",
    clipping: bool = True,
    seed: int = 0,
    widths: Sequence[int] = (2, 1),
):
    """PwlMap for ReLU networks, otherwise the network itself as a numeric handle."""
    if len(widths) != 2 or widths[1] != 1 or widths[0] < 1:
        raise ConfigError("widths must be (hidden_width, 1)")
    net = sample_depth2(scheme, activation, clipping, seed, width=widths[0])
    return net.to_pwl() if activation == "relu" else net


def triangle_net(clip: bool = True) -> DepthTwoNet:
    """ReLU network equal to the tent map on [0, 1]: 2 relu(x) - 4 relu(x - 1/2)."""
    return DepthTwoNet(w=[1.0, 1.0], c=[0.0, -0.5], v=[2.0, -4.0], d=0.0, clip=clip)


def perturb(net, noise_stddev: float, mode: str = "shared", seed: int = 0, t: int = 1):
    """Add Gaussian noise to every weight and bias.

    ``shared``: a single noisy copy, reused by every iteration of the loop.
    ``independent``: ``t`` copies with fresh noise each, one per unrolled layer.
    Accepts a DepthTwoNet or a shallow NetworkSample.
    """
    if noise_stddev < 0:
        raise ConfigError("noise_stddev must be >= 0")
    if mode not in ("shared", "independent"):
        raise ConfigError(f"unknown perturbation mode {mode!r}")
    rng = make_rng(seed)
    n = 1 if mode == "shared" else t
    out = [_perturb_one(net, noise_stddev, rng) for _ in range(n)]
    return out[0] if mode == "shared" else out


def _perturb_one(net, std, rng):
    if isinstance(net, DepthTwoNet):
        p = net.params()
        return net.with_params(p + rng.normal(0.0, std, size=p.size)) if std > 0 else net
    if isinstance(net, NetworkSample):
        if std == 0:
            return net
        w = net.weights + rng.normal(0.0, std, size=net.k)
        b = net.biases + rng.normal(0.0, std, size=net.k)
        # reflect at 0 and 1 so biases stay distinct (clipping would create ties)
        r = np.mod(b, 2.0)
        b = np.where(r > 1.0, 2.0 - r, r)
        order = np.argsort(b, kind="stable")
        return replace(net, weights=w[order], biases=b[order])
    raise ContractError(f"cannot perturb object of type {type(net).__name__}")


def unroll(nets: Sequence[DepthTwoNet]) -> pwl.PwlMap:
    """Exact map of nets[-1] o ... o nets[0] on [0, 1] (ReLU only).

    Intermediate values may leave [0, 1] when the layers are not clipped.
    """
    m = nets[0].to_pwl()
    for net in nets[1:]:
        kinks = net.kinks()
        if net.clip:
            # clip levels contribute kinks at their preimages under the pre-clip map
            kinks = np.concatenate((kinks, _level_preimages(net, 0.0), _level_preimages(net, 1.0)))
        m = pwl.compose_with(m, kinks, net)
    return m


def _level_preimages(net: DepthTwoNet, level: float) -> np.ndarray:
    k = net.kinks()
    lo = min(k.min(initial=0.0), 0.0) - 1.0
    hi = max(k.max(initial=1.0), 1.0) + 1.0
    xs = np.concatenate(([lo], k, [hi]))
    ys = net.pre_clip(xs)
    out = []
    for x0, x1, y0, y1 in zip(xs[:-1], xs[1:], ys[:-1], ys[1:]):
        if (y0 - level) * (y1 - level) < 0:
            out.append(x0 + (level - y0) / (y1 - y0) * (x1 - x0))
    # affine tails beyond the outer kinks
    for x0, x1, y0, y1 in ((xs[0], xs[1], ys[0], ys[1]), (xs[-2], xs[-1], ys[-2], ys[-1])):
        s = (y1 - y0) / (x1 - x0)
        if s != 0:
            r = x0 + (level - y0) / s
            if (r < xs[0]) or (r > xs[-1]):
                out.append(r)
    return np.array(out)
