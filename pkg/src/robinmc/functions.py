"""Built-in scalar functions for sources f and boundary data g.

A ``ScalarFunction`` is a finite linear combination of basis terms.  The same
term table is evaluated by numpy here and by the compiled kernels, so
manufactured data, sums and scalings all stay on the fast path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

T_CONST = 0
T_COORD = 1
T_SINPROD = 2
T_NORMAL = 3


@dataclass(frozen=True)
class Term:
    code: int
    coef: float
    axis: int = 0
    freq: tuple = ()
    phase: tuple = ()


class ScalarFunction:
    def __init__(self, terms, name: str = "custom"):
        self.terms = tuple(terms)
        self.name = name

    def __repr__(self):
        return f"ScalarFunction({self.name!r}, {len(self.terms)} terms)"

    def __add__(self, other):
        if not isinstance(other, ScalarFunction):
            return NotImplemented
        return ScalarFunction(self.terms + other.terms, f"({self.name} + {other.name})")

    def __sub__(self, other):
        return self + (-1.0) * other

    def __rmul__(self, alpha):
        alpha = float(alpha)
        scaled = [Term(t.code, alpha * t.coef, t.axis, t.freq, t.phase) for t in self.terms]
        return ScalarFunction(scaled, f"{alpha:g}*{self.name}")

    def __neg__(self):
        return (-1.0) * self

    def needs_normal(self) -> bool:
        return any(t.code == T_NORMAL for t in self.terms)

    def __call__(self, x, domain=None, normal=None) -> float:
        """Evaluate at ``x``; normal terms use ``normal`` if given, else the domain's."""
        x = np.asarray(x, dtype=float)
        s = 0.0
        for t in self.terms:
            if t.code == T_CONST:
                s += t.coef
            elif t.code == T_COORD:
                s += t.coef * x[t.axis]
            elif t.code == T_SINPROD:
                s += t.coef * float(np.prod(np.sin(np.asarray(t.freq) * x + np.asarray(t.phase))))
            elif t.code == T_NORMAL:
                if normal is not None:
                    nu = float(normal[t.axis])
                elif domain is None:
                    raise ValueError(f"{self.name} needs the domain to evaluate the inward normal")
                else:
                    nu = _normal_component(domain, x, t.axis)
                s += t.coef * nu * float(np.prod(np.sin(np.asarray(t.freq) * x + np.asarray(t.phase))))
        return s

    def evaluate(self, points, normals=None) -> np.ndarray:
        """Vectorised evaluation at points of shape (m, d); normals has the same shape."""
        x = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros(x.shape[0])
        for t in self.terms:
            if t.code == T_CONST:
                out += t.coef
            elif t.code == T_COORD:
                out += t.coef * x[:, t.axis]
            else:
                v = t.coef * np.prod(np.sin(np.asarray(t.freq) * x + np.asarray(t.phase)), axis=1)
                if t.code == T_NORMAL:
                    if normals is None:
                        raise ValueError(f"{self.name} needs normals for vectorised evaluation")
                    v = v * np.asarray(normals, dtype=float)[:, t.axis]
                out += v
        return out

    def sup_bound(self, domain) -> float:
        """A crude bound on sup|f| over the closed domain."""
        if hasattr(domain, "radius"):
            extent = np.abs(domain.center) + domain.radius
        else:
            extent = np.maximum(np.abs(domain.lower), np.abs(domain.upper))
        b = 0.0
        for t in self.terms:
            scale = extent[t.axis] if t.code == T_COORD else 1.0
            b += abs(t.coef) * scale
        return b

    def encode(self, d: int) -> np.ndarray:
        table = np.zeros((max(len(self.terms), 1), 3 + 2 * d))
        if not self.terms:
            return table  # a single zero constant
        for k, t in enumerate(self.terms):
            table[k, 0] = t.code
            table[k, 1] = t.coef
            table[k, 2] = t.axis
            if t.code in (T_SINPROD, T_NORMAL):
                table[k, 3 : 3 + d] = t.freq
                table[k, 3 + d : 3 + 2 * d] = t.phase
        return table


def _normal_component(domain, x, axis):
    # Used only at boundary points; box edges fall back to the first active face.
    if hasattr(domain, "radius"):
        v = domain.center - x
        return float(v[axis] / np.linalg.norm(v))
    faces = domain.active_faces(x)
    if not faces:
        e = np.maximum(domain.lower - x, x - domain.upper)
        i = int(np.argmax(e))
        faces = [(i, 1.0 if x[i] - domain.lower[i] <= domain.upper[i] - x[i] else -1.0)]
    i, sign = faces[0]
    return sign if i == axis else 0.0


def constant(c: float) -> ScalarFunction:
    return ScalarFunction([Term(T_CONST, float(c))], f"const({c:g})")


def coordinate(axis: int, scale: float = 1.0, offset: float = 0.0) -> ScalarFunction:
    terms = [Term(T_COORD, float(scale), int(axis))]
    if offset:
        terms.append(Term(T_CONST, float(offset)))
    return ScalarFunction(terms, f"x{axis}")


def sin_product(amplitude: float, freq, phase=None) -> ScalarFunction:
    freq = tuple(float(w) for w in freq)
    phase = tuple(float(p) for p in (phase if phase is not None else [0.0] * len(freq)))
    return ScalarFunction([Term(T_SINPROD, float(amplitude), 0, freq, phase)], "sin_product")


def inward_normal_component(axis: int, scale: float = 1.0, d: int = 3) -> ScalarFunction:
    # sin(pi/2) == 1.0 exactly, so the product factor is inert
    return ScalarFunction([Term(T_NORMAL, float(scale), int(axis), (0.0,) * d, (np.pi / 2,) * d)], f"n{axis}")


def normal_sin_product(axis: int, amplitude: float, freq, phase) -> ScalarFunction:
    """amplitude * nu_axis(p) * prod_i sin(freq_i p_i + phase_i), nu the inward normal."""
    freq = tuple(float(w) for w in freq)
    phase = tuple(float(q) for q in phase)
    return ScalarFunction([Term(T_NORMAL, float(amplitude), int(axis), freq, phase)], f"n{axis}*sin_product")


def zero() -> ScalarFunction:
    return ScalarFunction([], "zero")


def robin_data_for_affine(u_const: float, u_grad, a: np.ndarray, n: float) -> ScalarFunction:
    """Boundary data g making u(x) = u_const + u_grad . x solve the Robin problem.

    From -(a grad u).nu + n u = n g with inward normal nu:  g = u - (a grad u).nu / n.
    """
    u_grad = np.asarray(u_grad, dtype=float)
    flux = np.asarray(a, dtype=float) @ u_grad
    g = constant(u_const) if u_const else zero()
    for i, w in enumerate(u_grad):
        if w:
            g = g + coordinate(i, w)
    for j, c in enumerate(flux):
        if c:
            g = g + inward_normal_component(j, -c / n, u_grad.size)
    g.name = "robin_affine"
    return g


def trig_mode(d: int, amplitude: float = 1.0, lower=None, upper=None) -> ScalarFunction:
    """prod_i sin(pi (x_i - lower_i) / (upper_i - lower_i)), vanishing on the box faces."""
    lower = np.zeros(d) if lower is None else np.asarray(lower, dtype=float)
    upper = np.ones(d) if upper is None else np.asarray(upper, dtype=float)
    w = np.pi / (upper - lower)
    return sin_product(amplitude, w, -w * lower)


def trig_conormal_flux(a_diag, amplitude: float = 1.0, lower=None, upper=None) -> ScalarFunction:
    """-(a grad u).nu on the box faces for the trig mode u and constant diagonal a."""
    a_diag = np.asarray(a_diag, dtype=float)
    d = a_diag.size
    lower = np.zeros(d) if lower is None else np.asarray(lower, dtype=float)
    upper = np.ones(d) if upper is None else np.asarray(upper, dtype=float)
    w = np.pi / (upper - lower)
    out = zero()
    for i in range(d):
        phase = -w * lower
        phase[i] += np.pi / 2  # cos as a shifted sine
        out = out + normal_sin_product(i, -a_diag[i] * amplitude * w[i], w, phase)
    out.name = "trig_flux"
    return out


# name -> (builder, allowed parameters); context supplies d, n, field and lambda.
def _build_constant(p, ctx):
    return constant(p.get("value", 0.0))


def _build_coordinate(p, ctx):
    return coordinate(int(p.get("axis", 0)), p.get("scale", 1.0), p.get("offset", 0.0))


def _build_trig(p, ctx):
    return trig_mode(ctx["d"], p.get("amplitude", 1.0), p.get("lower"), p.get("upper"))


def _build_sin_product(p, ctx):
    if "freq" not in p:
        raise ConfigError("sin_product requires 'freq'", key="freq")
    return sin_product(p.get("amplitude", 1.0), p["freq"], p.get("phase"))


def _build_trig_source(p, ctx):
    """f = -L u + lambda u for the trig mode u under isotropic constant a."""
    field = ctx["field"]
    d = ctx["d"]
    lower = np.zeros(d) if p.get("lower") is None else np.asarray(p["lower"], dtype=float)
    upper = np.ones(d) if p.get("upper") is None else np.asarray(p["upper"], dtype=float)
    if not (field.is_diagonal() and hasattr(field, "a")):
        raise ConfigError("trig_source requires a constant diagonal coefficient field", key="f")
    w = np.pi / (upper - lower)
    amp = p.get("amplitude", 1.0) * (float(np.sum(np.diag(field.a) * w**2)) + ctx["lambda"])
    return trig_mode(d, amp, lower, upper)


def _build_robin_linear(p, ctx):
    """Robin data g_n for the manufactured solution u = offset + scale * x_axis."""
    n = ctx.get("n")
    if n is None:
        raise ConfigError("robin_linear boundary data needs a penalty n", key="g")
    d = ctx["d"]
    grad = np.zeros(d)
    grad[int(p.get("axis", 0))] = p.get("scale", 1.0)
    a = ctx["field"].matrix(np.zeros(d))
    return robin_data_for_affine(p.get("offset", 0.0), grad, a, n)


def _trig_diag(ctx, key):
    field = ctx["field"]
    if not (field.is_diagonal() and hasattr(field, "a")):
        raise ConfigError(f"{key} requires a constant diagonal coefficient field", key=key)
    return np.diag(field.a)


def _build_trig_flux(p, ctx):
    return trig_conormal_flux(_trig_diag(ctx, "g"), p.get("amplitude", 1.0), p.get("lower"), p.get("upper"))


def _build_trig_robin(p, ctx):
    """Robin data g_n = u + (flux of u) / n for the trig mode u."""
    n = ctx.get("n")
    if n is None:
        raise ConfigError("trig_robin boundary data needs a penalty n", key="g")
    amp = p.get("amplitude", 1.0)
    flux = trig_conormal_flux(_trig_diag(ctx, "g"), amp, p.get("lower"), p.get("upper"))
    return trig_mode(ctx["d"], amp, p.get("lower"), p.get("upper")) + (1.0 / n) * flux


REGISTRY = {
    "constant": (_build_constant, {"value"}),
    "coordinate": (_build_coordinate, {"axis", "scale", "offset"}),
    "trig": (_build_trig, {"amplitude", "lower", "upper"}),
    "trig_source": (_build_trig_source, {"amplitude", "lower", "upper"}),
    "sin_product": (_build_sin_product, {"amplitude", "freq", "phase"}),
    "robin_linear": (_build_robin_linear, {"axis", "scale", "offset"}),
    "trig_flux": (_build_trig_flux, {"amplitude", "lower", "upper"}),
    "trig_robin": (_build_trig_robin, {"amplitude", "lower", "upper"}),
}


def function_from_config(cfg: dict, ctx: dict, key: str) -> ScalarFunction:
    cfg = dict(cfg)
    name = cfg.pop("name", None)
    if name not in REGISTRY:
        raise ConfigError(f"{key}.name must be one of {sorted(REGISTRY)}, got {name!r}", key=f"{key}.name")
    builder, allowed = REGISTRY[name]
    for k in cfg:
        if k not in allowed:
            raise ConfigError(f"unknown key {key}.{k}", key=f"{key}.{k}")
    return builder(cfg, ctx)
