"""Hierarchical DBMS feature catalog: loading, validation, and sampling.

The catalog is a three-level tree (dialect, functional category, feature)
consumed from a JSON file.  Sampling picks a main category path and pads it
with same-category and cross-category features to guide generation.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path

from .errors import EmptyCatalog, ParseError, ValidationError


@dataclass(frozen=True)
class Feature:
    name: str
    description: str
    syntax_pattern: str


@dataclass(frozen=True)
class FeatureCategory:
    name: str
    features: tuple[Feature, ...]


@dataclass(frozen=True)
class FeatureCatalog:
    dialect: str
    categories: tuple[FeatureCategory, ...]

    def feature_count(self) -> int:
        return sum(len(c.features) for c in self.categories)

    def all_features(self) -> list[tuple[str, Feature]]:
        return [(c.name, f) for c in self.categories for f in c.features]


@dataclass(frozen=True)
class FeatureSelection:
    dialect: str
    features: tuple[tuple[str, Feature], ...]
    main_category: str

    def names(self) -> list[str]:
        return [f.name for _, f in self.features]

    def to_dict(self) -> dict:
        return {
            "dialect": self.dialect,
            "main_category": self.main_category,
            "features": [{"category": c, "name": f.name} for c, f in self.features],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


@dataclass(frozen=True)
class SamplingConfig:
    min_features: int = 3
    max_features: int = 20
    diversity: bool = True

    def __post_init__(self):
        if self.min_features < 1:
            raise ValidationError("min_features must be >= 1")
        if self.max_features < self.min_features:
            raise ValidationError("max_features must be >= min_features")


def load_catalog(path: str | Path) -> FeatureCatalog:
    """Load and validate a catalog JSON file."""
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read catalog: {exc}", path=str(path)) from exc
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", path=str(path), line=exc.lineno) from exc
    return catalog_from_dict(doc, source=str(path))


def catalog_from_dict(doc: object, source: str = "<memory>") -> FeatureCatalog:
    if not isinstance(doc, dict):
        raise ParseError("catalog root must be a JSON object", path=source)
    dialect = doc.get("dialect")
    if not isinstance(dialect, str) or not dialect:
        raise ValidationError(f"{source}: 'dialect' must be a non-empty string")
    raw_categories = doc.get("categories")
    if not isinstance(raw_categories, list) or not raw_categories:
        raise ValidationError(f"{source}: 'categories' must be a non-empty list")

    categories: list[FeatureCategory] = []
    seen_names: set[str] = set()
    for ci, raw_cat in enumerate(raw_categories):
        where = f"{source}: categories[{ci}]"
        if not isinstance(raw_cat, dict):
            raise ParseError(f"category entry must be an object", path=where)
        name = raw_cat.get("name")
        if not isinstance(name, str) or not name:
            raise ValidationError(f"{where}: 'name' must be a non-empty string")
        if name in seen_names:
            raise ValidationError(f"{where}: duplicate category name {name!r}")
        seen_names.add(name)
        raw_feats = raw_cat.get("features")
        if not isinstance(raw_feats, list) or not raw_feats:
            raise ValidationError(f"{where}: 'features' must be a non-empty list")
        feats: list[Feature] = []
        feat_names: set[str] = set()
        for fi, raw_feat in enumerate(raw_feats):
            fwhere = f"{where}.features[{fi}]"
            if not isinstance(raw_feat, dict):
                raise ParseError("feature entry must be an object", path=fwhere)
            fname = raw_feat.get("name")
            pattern = raw_feat.get("syntax_pattern")
            if not isinstance(fname, str) or not fname:
                raise ValidationError(f"{fwhere}: 'name' must be a non-empty string")
            if fname in feat_names:
                raise ValidationError(f"{fwhere}: duplicate feature name {fname!r}")
            feat_names.add(fname)
            if not isinstance(pattern, str) or not pattern:
                raise ValidationError(f"{fwhere}: 'syntax_pattern' must be a non-empty string")
            feats.append(Feature(fname, str(raw_feat.get("description", "")), pattern))
        categories.append(FeatureCategory(name, tuple(feats)))
    return FeatureCatalog(dialect, tuple(categories))


def sample_selection(
    catalog: FeatureCatalog, rng: random.Random, cfg: SamplingConfig
) -> FeatureSelection:
    """Hierarchical path sampling with optional cross-category enhancement.

    Picks one main (category, feature) path uniformly, pads with distinct
    same-category features, and, when diversity is on and another category
    exists, adds at least one cross-category feature.  The total size is
    uniform in [min, max] clipped to the catalog size.  Deterministic for a
    seeded rng.
    """
    if not catalog.categories or catalog.feature_count() == 0:
        raise EmptyCatalog(f"catalog for {catalog.dialect!r} has no features")

    available = catalog.feature_count()
    lo = min(cfg.min_features, available)
    hi = min(cfg.max_features, available)
    total = rng.randint(lo, hi)

    # the configured size bound wins over the diversity guarantee: cross-
    # category enhancement needs room for at least two features
    want_cross = cfg.diversity and len(catalog.categories) >= 2 and hi >= 2
    if want_cross and total < 2:
        total = 2

    main_cat = catalog.categories[rng.randrange(len(catalog.categories))]
    main_feat = main_cat.features[rng.randrange(len(main_cat.features))]

    remaining = total - 1
    same_pool = [f for f in main_cat.features if f is not main_feat]
    cross_pool = [
        (c.name, f)
        for c in catalog.categories
        if c is not main_cat
        for f in c.features
    ]

    cross_min = 1 if want_cross and remaining >= 1 else 0
    cross_min = max(cross_min, remaining - len(same_pool))
    cross_max = min(len(cross_pool), remaining)
    cross_count = rng.randint(cross_min, cross_max) if cross_max >= cross_min else 0
    same_count = remaining - cross_count

    picked: list[tuple[str, Feature]] = [(main_cat.name, main_feat)]
    picked.extend((main_cat.name, f) for f in rng.sample(same_pool, same_count))
    picked.extend(rng.sample(cross_pool, cross_count))
    return FeatureSelection(catalog.dialect, tuple(picked), main_cat.name)


def sample_random_flat(
    catalog: FeatureCatalog, rng: random.Random, cfg: SamplingConfig
) -> FeatureSelection:
    """Uniform sampling over the flattened feature set, ignoring hierarchy."""
    flat = catalog.all_features()
    if not flat:
        raise EmptyCatalog(f"catalog for {catalog.dialect!r} has no features")
    lo = min(cfg.min_features, len(flat))
    hi = min(cfg.max_features, len(flat))
    total = rng.randint(lo, hi)
    picked = rng.sample(flat, total)
    return FeatureSelection(catalog.dialect, tuple(picked), picked[0][0])
