"""Scenario configuration: named presets and flat key=value files.

A :class:`ScenarioSpec` is the harness-facing record of one pricing
problem; ``build`` turns it into an immutable :class:`~mcvr.models.Scenario`
under a given path construction.  When no subspace size is configured,
it is chosen automatically from the effective dimension at gamma = 0.9
(capped at 3), which is the intended way to run the estimator.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

from .effdim import effective_dimension
from .models import BsModel, CirModel, Payout, Scenario
from .paths import Construction, TimeGrid, bm_covariance, correlation_pca, eigendecompose

__all__ = ["ConfigError", "ScenarioSpec", "PRESETS", "load_scenario", "parse_config"]

KINDS = (
    "straddle",
    "asian",
    "asian-ko",
    "asian-straddle",
    "basket-avg",
    "basket-max",
    "cir-cap",
)

_BASKET = ("basket-avg", "basket-max")

_PAYOUT_BY_KIND = {
    "straddle": "straddle",
    "asian": "asian-call",
    "asian-ko": "asian-knockout",
    "asian-straddle": "asian-straddle",
    "basket-avg": "basket-average",
    "basket-max": "basket-max",
    "cir-cap": "cir-cap",
}

_ED_GAMMA = 0.9
_ED_SAMPLES = 2**14
_ED_SEED = 1729


class ConfigError(ValueError):
    """Scenario configuration is malformed or out of range."""


@dataclass
class ScenarioSpec:
    """Flat description of a scenario, defaults matching the benchmark setup.

    Black-Scholes kinds default to S0=100, sigma=0.3, r=0.05, T=1; the
    CIR cap to r0=0.07, theta=0.075, kappa=0.2, sigma=0.02.  ``steps``
    is the time discretization for path kinds, ``assets`` the basket
    size; ``construction=None`` leaves the choice to the harness
    (random walk for crude MC, PCA for everything else).
    """

    kind: str
    name: str | None = None
    steps: int = 16
    assets: int = 16
    strike: float = 100.0
    knockout: float | None = None
    spot: float = 100.0
    vol: float = 0.3
    rate: float = 0.05
    horizon: float = 1.0
    corr: float = 0.3
    r0: float = 0.07
    kappa: float = 0.2
    theta: float = 0.075
    cir_vol: float = 0.02
    construction: str | None = None
    u_size: int | None = None
    qnpis_h_mult: float | None = None
    _auto_u: int | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown scenario kind {self.kind!r}")
        if self.kind == "straddle":
            self.steps = 1
        if self.kind == "asian-ko" and self.knockout is None:
            self.knockout = 150.0
        if self.kind == "cir-cap":
            if self.strike == 100.0:  # untouched equity default
                self.strike = 0.07
            elif self.strike >= 1.0:
                raise ConfigError("cap strike is a rate, expected something like 0.07")
        if self.construction not in (None, "random-walk", "pca"):
            raise ConfigError(f"unknown construction {self.construction!r}")
        if self.name is None:
            self.name = self._default_name()

    def _default_name(self) -> str:
        if self.kind in _BASKET:
            return f"{self.kind}-{self.assets}-{self.strike:g}"
        if self.kind == "cir-cap":
            return f"cir-cap-{self.steps}-{self.strike:g}-t{self.horizon:g}"
        if self.kind == "asian-ko":
            return f"asian-ko-{self.knockout:g}"
        if self.kind == "straddle":
            return f"straddle-{self.strike:g}"
        return f"{self.kind}-{self.steps}-{self.strike:g}"

    @property
    def dim(self) -> int:
        return self.assets if self.kind in _BASKET else self.steps

    @property
    def supports_random_walk(self) -> bool:
        return self.kind not in _BASKET

    def resolved_h_mult(self) -> float:
        if self.qnpis_h_mult is not None:
            return self.qnpis_h_mult
        return 2.0 if self.kind == "straddle" else 3.0

    def _make_construction(self, kind: str) -> Construction:
        if self.kind in _BASKET:
            return Construction("pca", basis=correlation_pca(self.assets, self.corr))
        grid = TimeGrid(self.steps, self.horizon)
        if kind == "random-walk":
            return Construction("random-walk", grid=grid)
        return Construction("pca", grid=grid, basis=eigendecompose(bm_covariance(grid)))

    def build(self, construction: str | None = None) -> Scenario:
        """Materialize the scenario; ``construction`` is the harness's choice.

        An explicit construction in the spec wins over the harness; kinds
        without a random-walk form (baskets) always use PCA.
        """
        chosen = self.construction or construction or "pca"
        if not self.supports_random_walk:
            chosen = "pca"
        try:
            con = self._make_construction(chosen)
            if self.kind == "cir-cap":
                model = CirModel(
                    r0=self.r0,
                    kappa=self.kappa,
                    theta=self.theta,
                    vol=self.cir_vol,
                    grid=TimeGrid(self.steps, self.horizon),
                )
            else:
                model = BsModel(
                    spot=self.spot, vol=self.vol, rate=self.rate, horizon=self.horizon
                )
            payout = Payout(
                _PAYOUT_BY_KIND[self.kind],
                self.strike,
                knockout=self.knockout if self.kind == "asian-ko" else None,
            )
            return Scenario(
                name=self.name,
                model=model,
                payout=payout,
                construction=con,
                u_size=self._resolve_u(),
                qnpis_h_mult=self.resolved_h_mult(),
            )
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def _resolve_u(self) -> int:
        if self.u_size is not None:
            if not 1 <= self.u_size <= min(3, self.dim):
                raise ConfigError("u_size must be in 1..min(3, dim)")
            return self.u_size
        if self._auto_u is None:
            probe = replace(self, u_size=1, name=self.name)
            scenario = probe.build("pca")
            report = effective_dimension(
                scenario, gamma=_ED_GAMMA, n_samples=_ED_SAMPLES, seed=_ED_SEED
            )
            self._auto_u = min(report.ed, 3, self.dim)
        return self._auto_u


def _make_presets() -> dict[str, dict]:
    presets: dict[str, dict] = {}
    for k in (100, 110):
        presets[f"straddle-{k}"] = dict(kind="straddle", strike=float(k), u_size=1)
    for d in (16, 64):
        for k in (100, 140, 175):
            presets[f"asian-{d}-{k}"] = dict(
                kind="asian", steps=d, strike=float(k), u_size=1
            )
        presets[f"asian-straddle-{d}"] = dict(
            kind="asian-straddle", steps=d, strike=100.0, u_size=1
        )
    presets["asian-ko-150"] = dict(kind="asian-ko", strike=140.0, knockout=150.0, u_size=2)
    presets["asian-ko-170"] = dict(kind="asian-ko", strike=140.0, knockout=170.0, u_size=1)
    for k in (100, 140, 175):
        presets[f"basket-avg-16-{k}"] = dict(
            kind="basket-avg", assets=16, strike=float(k), u_size=1
        )
    for s in (2, 3, 4):
        for k in (150, 200):
            presets[f"basket-max-{s}-{k}"] = dict(
                kind="basket-max", assets=s, strike=float(k), u_size=min(s, 3)
            )
    for d in (16, 64):
        for cents in (5, 6, 7, 8):
            presets[f"cir-cap-{d}-k0{cents}"] = dict(
                kind="cir-cap", steps=d, strike=cents / 100.0, u_size=1
            )
    # short aliases for the workhorse scenarios
    presets["straddle"] = presets["straddle-100"]
    presets["asian"] = presets["asian-16-100"]
    presets["cir-cap"] = presets["cir-cap-16-k07"]
    presets["basket-avg"] = presets["basket-avg-16-100"]
    return presets


PRESETS = _make_presets()

_KEY_ALIASES = {
    "kind": "kind",
    "name": "name",
    "d": "steps",
    "steps": "steps",
    "s": "assets",
    "assets": "assets",
    "k": "strike",
    "strike": "strike",
    "knockout": "knockout",
    "k_tilde": "knockout",
    "s0": "spot",
    "spot": "spot",
    "sigma": "vol",
    "vol": "vol",
    "r": "rate",
    "rate": "rate",
    "t": "horizon",
    "horizon": "horizon",
    "corr": "corr",
    "rho": "corr",
    "r0": "r0",
    "kappa": "kappa",
    "theta": "theta",
    "cir_sigma": "cir_vol",
    "cir_vol": "cir_vol",
    "construction": "construction",
    "u": "u_size",
    "u_size": "u_size",
    "qnpis_hmult": "qnpis_h_mult",
    "qnpis_h_mult": "qnpis_h_mult",
}

_INT_FIELDS = {"steps", "assets", "u_size"}
_STR_FIELDS = {"kind", "name", "construction"}


def _coerce(field_name: str, raw: str):
    if field_name in _STR_FIELDS:
        return raw
    try:
        if field_name in _INT_FIELDS:
            return int(raw)
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"cannot parse value {raw!r} for {field_name}") from exc


def parse_config(text: str, name: str | None = None) -> ScenarioSpec:
    """Parse a flat key=value scenario file (one scenario per file)."""
    fields: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key=value, got {stripped!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        target = _KEY_ALIASES.get(key.lower())
        if target is None:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        fields[target] = _coerce(target, raw)
    if "kind" not in fields:
        raise ConfigError("scenario file must set 'kind'")
    if name is not None:
        fields.setdefault("name", name)
    try:
        return ScenarioSpec(**fields)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_scenario(source: str, overrides: dict | None = None) -> ScenarioSpec:
    """Resolve a preset name or a key=value file path into a spec."""
    path = Path(source)
    if source in PRESETS:
        fields = dict(PRESETS[source], name=source)
    elif path.is_file():
        spec = parse_config(path.read_text(), name=path.stem)
        fields = None
    else:
        raise ConfigError(f"{source!r} is neither a preset nor a scenario file")
    if fields is not None:
        spec = ScenarioSpec(**fields)
    if overrides:
        clean = {}
        for key, value in overrides.items():
            target = _KEY_ALIASES.get(str(key).lower())
            if target is None:
                raise ConfigError(f"unknown override {key!r}")
            clean[target] = _coerce(target, str(value)) if isinstance(value, str) else value
        clean.setdefault("name", None)  # regenerate the label for changed params
        spec = replace(spec, **clean)
    return spec
