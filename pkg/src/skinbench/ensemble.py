"""Weighted-vote fusion of binary detector outputs.

Members are built-in detectors (run at a per-member threshold) or
external probability-map directories standing in for segmentation
networks trained elsewhere. A pixel is skin when the weight-sum of
members voting skin strictly exceeds (total weight) / w_tau.
"""

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .detectors import BUILTIN_METHODS
from .errors import ConfigError, DimensionMismatch, EmptyEnsemble
from .imageio import (
    DONTCARE,
    NONSKIN,
    SKIN,
    load_probability_map,
    threshold_map,
)

EXTERNAL_DEFAULT_TAU = 128


@dataclass(frozen=True)
class Member:
    """One voting member: a built-in detector or an external map source."""

    name: str
    weight: float
    tau: float | None = None
    map_dir: str | None = None

    @property
    def external(self):
        return self.map_dir is not None or self.name not in BUILTIN_METHODS


@dataclass(frozen=True)
class EnsembleConfig:
    members: tuple
    w_tau: float

    def validate(self):
        if not self.members:
            raise ConfigError("ensemble has no members")
        if self.w_tau <= 1.0:
            raise ConfigError(f"wtau must be greater than 1, got {self.w_tau}")
        if sum(m.weight for m in self.active_members()) <= 0.0:
            raise ConfigError("ensemble needs positive total weight over active members")
        return self

    def active_members(self):
        return [m for m in self.members if m.weight > 0.0]


# The four published vote presets over the fixed member order
# (sa1, sa2, sa3, cheddad, dyc, bayes, segnet, unet, deeplab).
_PRESET_MEMBER_TAUS = (
    ("sa1", 175),
    ("sa2", 50),
    ("sa3", 50),
    ("cheddad", 125),
    ("dyc", None),
    ("bayes", 110),
    ("segnet", EXTERNAL_DEFAULT_TAU),
    ("unet", EXTERNAL_DEFAULT_TAU),
    ("deeplab", EXTERNAL_DEFAULT_TAU),
)

PRESET_WEIGHTS = {
    "vote1": (0.5, 1.5, 1, 1.5, 0.5, 1, 0, 0, 0),
    "vote2": (0.5, 1.5, 1, 1.5, 0, 1, 5.5, 0, 0),
    "vote3": (0.5, 1.5, 1, 1.5, 0, 1, 5.5, 2.75, 0),
    "vote4": (0.25, 0.75, 0.5, 0.75, 0, 0.5, 2.75, 1.375, 5.5),
}

PRESET_WTAU = {"vote1": 1.5, "vote2": 1.75, "vote3": 1.75, "vote4": 1.75}


def preset(name, w_tau=None):
    """Build one of the published vote configurations."""
    if name not in PRESET_WEIGHTS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESET_WEIGHTS)}")
    members = tuple(
        Member(name=member, weight=float(weight), tau=tau)
        for (member, tau), weight in zip(_PRESET_MEMBER_TAUS, PRESET_WEIGHTS[name])
    )
    return EnsembleConfig(members=members, w_tau=w_tau or PRESET_WTAU[name]).validate()


def _parse_member(fields, lineno):
    values = {}
    for item in fields:
        if "=" not in item:
            raise ConfigError(f"line {lineno}: expected key=value, got {item!r}")
        key, _, value = item.partition("=")
        if key not in ("name", "weight", "tau", "map_dir"):
            raise ConfigError(f"line {lineno}: unknown member field {key!r}")
        values[key] = value
    if "name" not in values or "weight" not in values:
        raise ConfigError(f"line {lineno}: member needs at least name= and weight=")
    try:
        weight = float(values["weight"])
    except ValueError:
        raise ConfigError(f"line {lineno}: bad weight {values['weight']!r}") from None
    if weight < 0:
        raise ConfigError(f"line {lineno}: weight must be non-negative, got {weight}")
    tau = None
    if "tau" in values:
        try:
            # spl thresholds the log-ratio so its tau is a real number;
            # everything else uses the 8-bit scale.
            tau = float(values["tau"]) if values["name"] == "spl" else int(values["tau"])
        except ValueError:
            raise ConfigError(f"line {lineno}: bad tau {values['tau']!r}") from None
        if values["name"] != "spl" and not 0 <= tau <= 255:
            raise ConfigError(f"line {lineno}: tau must be in [0, 255], got {tau}")
    return Member(
        name=values["name"], weight=weight, tau=tau, map_dir=values.get("map_dir")
    )


def parse_config(text):
    """Parse the plain-text ensemble format: `member` lines plus one `wtau`."""
    members = []
    w_tau = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if fields[0] == "member":
            members.append(_parse_member(fields[1:], lineno))
        elif fields[0] == "wtau":
            if len(fields) != 2:
                raise ConfigError(f"line {lineno}: wtau takes exactly one value")
            try:
                w_tau = float(fields[1])
            except ValueError:
                raise ConfigError(f"line {lineno}: bad wtau {fields[1]!r}") from None
        else:
            raise ConfigError(f"line {lineno}: unknown directive {fields[0]!r}")
    if w_tau is None:
        raise ConfigError("config is missing the wtau line")
    return EnsembleConfig(members=tuple(members), w_tau=w_tau).validate()


def format_config(cfg):
    """Serialize a configuration in the format parse_config reads."""
    lines = []
    for m in cfg.members:
        parts = [f"member name={m.name}", f"weight={m.weight:g}"]
        if m.tau is not None:
            parts.append(f"tau={m.tau:g}")
        if m.map_dir is not None:
            parts.append(f"map_dir={m.map_dir}")
        lines.append(" ".join(parts))
    lines.append(f"wtau {cfg.w_tau:g}")
    return "\n".join(lines) + "\n"


def with_map_dirs(cfg, map_dirs):
    """Attach external map directories ({member name: dir}) to a config."""
    unknown = set(map_dirs) - {m.name for m in cfg.members}
    if unknown:
        raise ConfigError(f"map directories given for unknown members: {sorted(unknown)}")
    members = tuple(
        replace(m, map_dir=str(map_dirs[m.name])) if m.name in map_dirs else m
        for m in cfg.members
    )
    return EnsembleConfig(members=members, w_tau=cfg.w_tau)


def vote(masks, weights, w_tau):
    """Fuse binary masks: skin iff sum of skin-voting weights > total/w_tau."""
    if len(masks) != len(weights):
        raise ValueError("need exactly one weight per mask")
    if not masks:
        raise EmptyEnsemble("vote needs at least one member")
    if w_tau <= 0:
        raise ValueError(f"w_tau must be positive, got {w_tau}")
    total = 0.0
    score = None
    shape = np.asarray(masks[0]).shape
    for mask, weight in zip(masks, weights):
        mask = np.asarray(mask)
        if mask.shape != shape:
            raise DimensionMismatch(f"member masks disagree: {mask.shape} vs {shape}")
        if (mask == DONTCARE).any():
            raise ValueError("vote inputs must not contain DONTCARE pixels")
        contribution = np.where(mask == SKIN, float(weight), 0.0)
        score = contribution if score is None else score + contribution
        total += float(weight)
    if total <= 0.0:
        raise EmptyEnsemble("total member weight must be positive")
    return np.where(score > total / w_tau, SKIN, NONSKIN).astype(np.uint8)


def ingest_external_map(map_dir, image_id):
    """Load <map_dir>/<image_id>.png as a probability map (gray / 255)."""
    path = Path(map_dir) / f"{image_id}.png"
    if not path.exists():
        raise FileNotFoundError(f"external probability map not found: {path}")
    return load_probability_map(path)


def missing_requirements(cfg, bank):
    """Human-readable list of prerequisites absent for active members."""
    problems = []
    for m in cfg.active_members():
        if m.external:
            if m.map_dir is None:
                problems.append(f"member {m.name!r} needs a map_dir")
        else:
            for slot in bank.missing(m.name):
                problems.append(f"member {m.name!r} needs a loaded {slot} model")
    return problems


def run_ensemble(cfg, img, bank, image_id=None):
    """Fuse all active members on one image.

    Zero-weight members are skipped entirely (never executed). External
    members look up <map_dir>/<image_id>.png and threshold it at their
    member tau.
    """
    img = np.asarray(img)
    masks = []
    weights = []
    for m in cfg.active_members():
        if m.external:
            if m.map_dir is None:
                raise ConfigError(f"member {m.name!r} has no map_dir configured")
            if image_id is None:
                raise ValueError("external members need an image_id to look up maps")
            pmap = ingest_external_map(m.map_dir, image_id)
            if pmap.shape != img.shape[:2]:
                raise DimensionMismatch(
                    f"{m.name} map {pmap.shape} vs image {img.shape[:2]}"
                )
            tau = EXTERNAL_DEFAULT_TAU if m.tau is None else int(m.tau)
            masks.append(threshold_map(pmap, tau))
        else:
            masks.append(bank.mask(m.name, img, m.tau))
        weights.append(m.weight)
    return vote(masks, weights, cfg.w_tau)
