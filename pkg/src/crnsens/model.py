"""Reaction networks with system-size scaled stochastic mass-action kinetics.

Model file grammar (line oriented, ``#`` starts a comment, blank lines are
ignored)::

    species S1 S2 S3            # optional; fixes species order
    init S1=1 S2=1              # optional default initial concentrations
    2*S1 + S2 -> S3 @ 0.002     # reactants -> products @ rate

A complex is ``0`` (the empty complex) or ``+``-separated terms ``k*Name``
with ``k`` a positive integer defaulting to 1. Names match
``[A-Za-z_][A-Za-z0-9_]*``. Without a ``species`` line, species are indexed
in order of first appearance. ``species`` and ``init`` lines must precede
the first reaction. The rate is the deterministic (size-independent)
constant ``c_j``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "ModelSyntaxError",
    "Reaction",
    "ReactionNetwork",
    "SystemInstance",
    "parse_network",
    "load_network",
    "builtin_network",
    "BUILTIN_MODELS",
    "propensity",
    "fluid_rate",
    "to_stochastic_param",
    "from_stochastic_param",
    "convert_sensitivity",
]

_NAME = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
_TERM = re.compile(r"^(?:(\d+)\s*\*\s*)?([A-Za-z_][A-Za-z0-9_]*)$")


class ModelSyntaxError(ValueError):
    """Malformed model document; ``lineno`` is 1-based, or None."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class Reaction:
    reactant_counts: tuple[int, ...]
    product_counts: tuple[int, ...]
    rate_const: float

    def __post_init__(self):
        if len(self.reactant_counts) != len(self.product_counts):
            raise ValueError("reactant and product vectors differ in length")
        if any(k < 0 for k in self.reactant_counts + self.product_counts):
            raise ValueError("stoichiometric coefficients must be nonnegative")

    @property
    def net_change(self) -> np.ndarray:
        return np.subtract(self.product_counts, self.reactant_counts)

    @property
    def order(self) -> int:
        """Number of molecules consumed, |nu''_j|."""
        return sum(self.reactant_counts)


@dataclass(frozen=True)
class ReactionNetwork:
    species: tuple[str, ...]
    reactions: tuple[Reaction, ...]
    default_x0: tuple[Fraction, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        if len(self.species) < 1:
            raise ValueError("network needs at least one species")
        if len(self.reactions) < 1:
            raise ValueError("network needs at least one reaction")
        if len(set(self.species)) != len(self.species):
            raise ValueError("duplicate species names")
        n = len(self.species)
        for r in self.reactions:
            if len(r.reactant_counts) != n:
                raise ValueError("reaction refers to species outside the network")

    @property
    def n_species(self) -> int:
        return len(self.species)

    @property
    def n_reactions(self) -> int:
        return len(self.reactions)

    @cached_property
    def reactant_matrix(self) -> np.ndarray:
        """(m, n) int64 array of nu''."""
        return np.array([r.reactant_counts for r in self.reactions], dtype=np.int64)

    @cached_property
    def stoichiometry(self) -> np.ndarray:
        """(m, n) int64 array of net changes nu_j = nu'_j - nu''_j."""
        return np.array([r.net_change for r in self.reactions], dtype=np.int64)

    @cached_property
    def orders(self) -> np.ndarray:
        return np.array([r.order for r in self.reactions], dtype=np.int64)

    @property
    def rates(self) -> np.ndarray:
        return np.array([r.rate_const for r in self.reactions], dtype=np.float64)

    def with_rates(self, rates: Sequence[float]) -> "ReactionNetwork":
        rates = list(rates)
        if len(rates) != self.n_reactions:
            raise ValueError("need one rate per reaction")
        rxns = tuple(Reaction(r.reactant_counts, r.product_counts, float(c))
                     for r, c in zip(self.reactions, rates))
        return ReactionNetwork(self.species, rxns, self.default_x0)

    def species_index(self, name: str) -> int:
        try:
            return self.species.index(name)
        except ValueError:
            raise KeyError(f"unknown species {name!r}") from None

    def format(self) -> str:
        """Render back to the model file grammar."""
        lines = ["species " + " ".join(self.species)]
        if self.default_x0 is not None:
            lines.append("init " + " ".join(f"{s}={x}" for s, x in zip(self.species, self.default_x0)))
        for r in self.reactions:
            lines.append(f"{_complex_str(self.species, r.reactant_counts)} -> "
                         f"{_complex_str(self.species, r.product_counts)} @ {r.rate_const!r}")
        return "\n".join(lines) + "\n"


def _complex_str(species, counts):
    terms = []
    for name, k in zip(species, counts):
        if k == 1:
            terms.append(name)
        elif k > 1:
            terms.append(f"{k}*{name}")
    return " + ".join(terms) if terms else "0"


@dataclass(frozen=True)
class SystemInstance:
    """A network at system size N started from copy numbers N * x0."""

    network: ReactionNetwork
    system_size: int
    initial_concentration: tuple[Fraction, ...]

    def __post_init__(self):
        if int(self.system_size) != self.system_size or self.system_size < 1:
            raise ValueError("system size must be a positive integer")
        x0 = tuple(Fraction(x).limit_denominator(10**9) if isinstance(x, float) else Fraction(x)
                   for x in self.initial_concentration)
        if len(x0) != self.network.n_species:
            raise ValueError("initial concentration has wrong length")
        if any(x < 0 for x in x0):
            raise ValueError("initial concentration must be nonnegative")
        for x in x0:
            if (x * self.system_size).denominator != 1:
                raise ValueError(f"N * x0 is not integral (N={self.system_size}, x0={x})")
        object.__setattr__(self, "initial_concentration", x0)

    @classmethod
    def from_network(cls, network: ReactionNetwork, system_size: int, x0=None) -> "SystemInstance":
        if x0 is None:
            if network.default_x0 is None:
                raise ValueError("no initial concentration given and the model has no init line")
            x0 = network.default_x0
        return cls(network, int(system_size), tuple(x0))

    @property
    def initial_state(self) -> np.ndarray:
        return np.array([int(x * self.system_size) for x in self.initial_concentration], dtype=np.int64)

    @property
    def stochastic_rates(self) -> np.ndarray:
        """c'_j = c_j / N^(|nu''_j| - 1) for every channel."""
        return np.array([to_stochastic_param(r.rate_const, self.system_size, r.order)
                         for r in self.network.reactions], dtype=np.float64)

    def with_rates(self, rates) -> "SystemInstance":
        return SystemInstance(self.network.with_rates(rates), self.system_size, self.initial_concentration)


def _parse_complex(text: str, lineno: int):
    text = text.strip()
    if text == "0":
        return []
    if not text:
        raise ModelSyntaxError("empty complex (use 0 for the empty complex)", lineno)
    out = []
    for term in text.split("+"):
        m = _TERM.match(term.strip())
        if m is None:
            raise ModelSyntaxError(f"bad term {term.strip()!r}", lineno)
        k = int(m.group(1)) if m.group(1) else 1
        if k < 1:
            raise ModelSyntaxError(f"coefficient must be positive in {term.strip()!r}", lineno)
        out.append((m.group(2), k))
    return out


def parse_network(text: str, allow_zero_rates: bool = False) -> ReactionNetwork:
    """Parse a model document.

    Raises
    ------
    ModelSyntaxError
        On malformed lines, unknown species (when a species line is given),
        nonpositive rates, or an empty reaction list.
    """
    declared: list[str] | None = None
    init_items: list[tuple[str, Fraction, int]] = []
    order: list[str] = []
    raw: list[tuple[list, list, float, int]] = []

    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        head = line.split(None, 1)
        if head[0] == "species" and "->" not in line:
            if raw:
                raise ModelSyntaxError("species line must precede reactions", lineno)
            if declared is not None:
                raise ModelSyntaxError("duplicate species line", lineno)
            names = head[1].split() if len(head) > 1 else []
            if not names:
                raise ModelSyntaxError("species line lists no species", lineno)
            for nm in names:
                if not _NAME.match(nm):
                    raise ModelSyntaxError(f"bad species name {nm!r}", lineno)
            if len(set(names)) != len(names):
                raise ModelSyntaxError("duplicate species name", lineno)
            declared = names
            continue
        if head[0] == "init" and "->" not in line:
            if raw:
                raise ModelSyntaxError("init line must precede reactions", lineno)
            for item in (head[1].split() if len(head) > 1 else []):
                name, eq, val = item.partition("=")
                if not eq or not _NAME.match(name):
                    raise ModelSyntaxError(f"bad init item {item!r}", lineno)
                try:
                    x = Fraction(val)
                except (ValueError, ZeroDivisionError):
                    raise ModelSyntaxError(f"bad concentration {val!r}", lineno) from None
                if x < 0:
                    raise ModelSyntaxError("negative initial concentration", lineno)
                init_items.append((name, x, lineno))
            continue

        lhs, arrow, rest = line.partition("->")
        if not arrow:
            raise ModelSyntaxError("expected 'reactants -> products @ rate'", lineno)
        rhs, at, rate_txt = rest.rpartition("@")
        if not at:
            raise ModelSyntaxError("missing '@ rate'", lineno)
        try:
            rate = float(rate_txt.strip())
        except ValueError:
            raise ModelSyntaxError(f"bad rate {rate_txt.strip()!r}", lineno) from None
        if not math.isfinite(rate) or rate < 0 or (rate == 0 and not allow_zero_rates):
            raise ModelSyntaxError(f"rate constant must be positive, got {rate_txt.strip()}", lineno)
        reac = _parse_complex(lhs, lineno)
        prod = _parse_complex(rhs, lineno)
        for name, _ in reac + prod:
            if declared is not None:
                if name not in declared:
                    raise ModelSyntaxError(f"unknown species {name!r}", lineno)
            elif name not in order:
                order.append(name)
        raw.append((reac, prod, rate, lineno))

    if not raw:
        raise ModelSyntaxError("empty reaction list")
    species = declared if declared is not None else order
    if not species:
        raise ModelSyntaxError("network has no species")
    idx = {s: i for i, s in enumerate(species)}
    reactions = []
    for reac, prod, rate, lineno in raw:
        rc = [0] * len(species)
        pc = [0] * len(species)
        for name, k in reac:
            rc[idx[name]] += k
        for name, k in prod:
            pc[idx[name]] += k
        reactions.append(Reaction(tuple(rc), tuple(pc), rate))

    x0 = None
    if init_items:
        vals = [Fraction(0)] * len(species)
        for name, x, lineno in init_items:
            if name not in idx:
                raise ModelSyntaxError(f"unknown species {name!r}", lineno)
            vals[idx[name]] = x
        x0 = tuple(vals)
    return ReactionNetwork(tuple(species), tuple(reactions), x0)


BUILTIN_MODELS = {
    "birth_death": "species S\ninit S=1\n0 -> S @ 1.0\nS -> 0 @ 1.0\n",
    "pure_death": "species S\ninit S=1\nS -> 0 @ 1.0\n",
    "reversible_isomerization": "species S1 S2\ninit S1=1 S2=1\nS1 -> S2 @ 0.3\nS2 -> S1 @ 0.2\n",
    "decaying_dimerizing": (
        "species S1 S2 S3\ninit S1=10 S2=0 S3=0\n"
        "S1 -> 0 @ 1.0\n2*S1 -> S2 @ 0.002\nS2 -> 2*S1 @ 0.5\nS2 -> S3 @ 0.04\n"
    ),
}


def builtin_network(name: str) -> ReactionNetwork:
    try:
        return parse_network(BUILTIN_MODELS[name])
    except KeyError:
        raise KeyError(f"no built-in model {name!r}; choose from {sorted(BUILTIN_MODELS)}") from None


def load_network(ref: str | Path, allow_zero_rates: bool = False) -> ReactionNetwork:
    """Load a model from a file path or ``builtin:<name>``."""
    ref = str(ref)
    if ref.startswith("builtin:"):
        return builtin_network(ref.split(":", 1)[1])
    return parse_network(Path(ref).read_text(), allow_zero_rates=allow_zero_rates)


def _binomial_product(state, counts) -> int:
    prod = 1
    for x, k in zip(state, counts):
        if k:
            if x < k:
                return 0
            prod *= math.comb(int(x), int(k))
    return prod


def propensity(instance: SystemInstance, state, j: int) -> float:
    """Stochastic mass-action intensity of channel ``j`` (0-based) at ``state``."""
    r = instance.network.reactions[j]
    comb = _binomial_product(state, r.reactant_counts)
    if comb == 0:
        return 0.0
    return to_stochastic_param(r.rate_const, instance.system_size, r.order) * float(comb)


def fluid_rate(network: ReactionNetwork, conc, j: int) -> float:
    """Density-dependent limit rate c_j * prod x_i^k / k!."""
    r = network.reactions[j]
    val = r.rate_const
    for x, k in zip(conc, r.reactant_counts):
        if k:
            val *= float(x) ** k / math.factorial(k)
    return val


def to_stochastic_param(c: float, N: int, order: int) -> float:
    return c / float(N) ** (order - 1)


def from_stochastic_param(c_stoch: float, N: int, order: int) -> float:
    return c_stoch * float(N) ** (order - 1)


def convert_sensitivity(s_deterministic: float, N: int, order: int) -> float:
    """Sensitivity with respect to the stochastic parameter c'_j."""
    return s_deterministic * float(N) ** (order - 1)
