"""Run settings from a flat ``key = value`` file, environment and flags.

Precedence, lowest to highest: built-in defaults, the config file,
environment variables (paths only), command-line flags. Relative paths in a
config file are resolved against the file's directory.

Recognised keys::

    input, format, vectors, vector_kind, out_dir, rejects
    min_year, include_older_references, min_journal_pubs, min_refs_per_pub
    basis, C, ratio_mode, population, exclusions, workers, strict
    extremes_k, extremes_low_threshold, extremes_high_threshold,
    extremes_exclude_all_sc
    hist.<name>.bin_width, hist.<name>.clip_min, hist.<name>.clip_max,
    hist.<name>.origin

Environment overrides: ``RELY_INPUT``, ``RELY_VECTORS``, ``RELY_OUT_DIR``,
``RELY_REJECTS``.
"""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .corpus import FORMATS, CorpusConfig
from .embedding import KINDS
from .graph import BASES
from .metrics import EXCLUSIONS, POPULATIONS, RATIO_MODES
from .report import ConfigError, HistogramSpec

PATH_KEYS = ("input", "vectors", "out_dir", "rejects")
ENV_VARS = {"input": "RELY_INPUT", "vectors": "RELY_VECTORS", "out_dir": "RELY_OUT_DIR", "rejects": "RELY_REJECTS"}


def default_histograms() -> dict[str, HistogramSpec]:
    return {
        "fig1_refs_per_pub": HistogramSpec(10, 0, 400),
        # x: journal publication count, y: mean references per publication
        "fig2_x": HistogramSpec(100, 0, 5000),
        "fig2_y": HistogramSpec(10, 0, 200),
        "fig3_pub_sc_ratio": HistogramSpec(0.01),
        "fig4_journal_sc_ratio": HistogramSpec(0.01),
        "fig5_similarity": HistogramSpec(0.01),
        "fig6_journal_sim_diff": HistogramSpec(0.05),
        "fig7_pub_rely": HistogramSpec(0.5, -10.0, 10.0),
        "fig8_journal_rely": HistogramSpec(0.25, -5.0, 5.0),
    }


@dataclass
class Settings:
    input: str | None = None
    format: str | None = None
    vectors: str | None = None
    vector_kind: str = "word"
    out_dir: str = "rely-out"
    rejects: str | None = None
    min_year: int = 1990
    include_older_references: bool = True
    min_journal_pubs: int = 100
    min_refs_per_pub: int = 10
    basis: str = "resolved"
    C: float = 100.0
    ratio_mode: str = "sc_over_nsc"
    population: str = "with_sc_only"
    exclusions: str = "exclude_all_sc"
    workers: int = 1
    strict: bool = False
    extremes_k: int = 50
    extremes_low_threshold: float | None = -10.0
    extremes_high_threshold: float | None = 10.0
    extremes_exclude_all_sc: bool = True
    histograms: dict[str, HistogramSpec] = field(default_factory=default_histograms)

    def __post_init__(self):
        self.validate()

    def validate(self):
        choices = {
            "format": (None, *FORMATS),
            "vector_kind": KINDS,
            "basis": BASES,
            "ratio_mode": RATIO_MODES,
            "population": POPULATIONS,
            "exclusions": EXCLUSIONS,
        }
        for key, allowed in choices.items():
            if getattr(self, key) not in allowed:
                raise ConfigError(f"{key} must be one of {allowed}, got {getattr(self, key)!r}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.extremes_k <= 0:
            raise ConfigError("extremes_k must be positive")
        try:
            self.corpus_config()
        except ValueError as e:
            raise ConfigError(str(e)) from None

    def corpus_config(self) -> CorpusConfig:
        return CorpusConfig(
            min_year=self.min_year,
            include_older_references=self.include_older_references,
            min_journal_pubs=self.min_journal_pubs,
            min_refs_per_pub=self.min_refs_per_pub,
        )

    @property
    def rejects_path(self) -> Path:
        return (Path(self.rejects) if self.rejects else Path(self.out_dir) / "rejects.tsv").resolve()

    def snapshot(self) -> dict:
        d = asdict(self)
        d["histograms"] = {k: asdict(v) for k, v in sorted(self.histograms.items())}
        return d


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}
_HIST_FIELDS = {"bin_width", "clip_min", "clip_max", "origin"}


def _coerce(key: str, raw: str, annotation: str):
    raw = raw.strip()
    try:
        if annotation == "bool":
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(raw)
        if annotation == "int":
            return int(raw)
        if annotation == "float":
            return float(raw)
        if annotation == "float | None":
            return None if raw.lower() in ("", "none") else float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return raw or None if annotation == "str | None" else raw


def parse_config_text(text: str, base_dir: Path | None = None) -> dict:
    """Parse ``key = value`` lines into a dict of typed overrides."""
    types = {f.name: f.type for f in fields(Settings)}
    values: dict = {}
    hists: dict[str, dict[str, float | None]] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value'")
        key, _, raw = (s.strip() for s in line.partition("="))
        if key.startswith("hist."):
            parts = key.split(".")
            if len(parts) != 3 or parts[2] not in _HIST_FIELDS:
                raise ConfigError(f"config line {lineno}: unknown histogram key {key!r}")
            hists.setdefault(parts[1], {})[parts[2]] = _coerce(key, raw, "float | None")
            continue
        if key not in types or key == "histograms":
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        value = _coerce(key, raw, types[key])
        if key in PATH_KEYS and value and base_dir is not None:
            value = str((base_dir / value)) if not os.path.isabs(value) else value
        values[key] = value
    if hists:
        values["histograms"] = hists
    return values


def _apply(settings: Settings, overrides: dict) -> Settings:
    overrides = dict(overrides)
    hists = overrides.pop("histograms", None)
    out = replace(settings, **overrides) if overrides else settings
    if hists:
        merged = dict(out.histograms)
        for name, params in hists.items():
            if isinstance(params, HistogramSpec):
                merged[name] = params
                continue
            base = asdict(merged[name]) if name in merged else {"bin_width": None}
            base.update(params)
            if base.get("bin_width") is None:
                raise ConfigError(f"histogram {name!r} needs a bin_width")
            merged[name] = HistogramSpec(**base)
        out = replace(out, histograms=merged)
    return out


def load_settings(
    path: str | os.PathLike | None = None,
    env: dict[str, str] | None = None,
    flags: dict | None = None,
) -> Settings:
    settings = Settings()
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from None
        settings = _apply(settings, parse_config_text(text, p.parent))
    env = os.environ if env is None else env
    env_over = {k: env[v] for k, v in ENV_VARS.items() if env.get(v)}
    if env_over:
        settings = _apply(settings, env_over)
    if flags:
        settings = _apply(settings, {k: v for k, v in flags.items() if v is not None})
    return settings
