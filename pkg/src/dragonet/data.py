"""Transaction records, CSV I/O and the seeded synthetic generator."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from dragonet.errors import ConfigError, DataError, HierarchyError
from dragonet.taxonomy import Taxonomy

CSV_HEADER = ("merchant_name", "activity", "macro", "micro")

# Card transaction counts per macro category (retail taxonomy names).
CARD_DISTRIBUTION = {
    "Shopping": 40194,
    "Food": 30405,
    "Groceries": 21559,
    "Home": 19640,
    "Transport": 18175,
    "Health": 10426,
    "Personal Care": 10272,
    "Bill": 8306,
    "Education": 4514,
    "Pets": 3645,
    "Travel": 2116,
    "Entertainment": 1962,
    "Donation": 1745,
    "Other Category": 1098,
    "Tax & Tribute": 70,
}

# Words that say nothing about the business ("Red Shop", "Thunder").
GENERIC_NAME_WORDS = (
    "red", "blue", "green", "golden", "silver", "thunder", "bluebird", "star", "sun", "moon",
    "shop", "store", "center", "express", "prime", "royal", "king", "queen", "city", "new",
    "garcia", "silva", "santos", "oliveira", "maria", "joao", "pedro", "ana", "lucas", "paulo",
    "ltda", "me", "eireli", "co", "brothers", "family", "plus", "top", "mega", "super",
)


@dataclass(frozen=True)
class Transaction:
    merchant_name: str
    activity: str
    macro: int | None = None
    micro: int | None = None

    @property
    def labeled(self) -> bool:
        return self.macro is not None and self.micro is not None


def _resolve_labels(macro_name: str, micro_name: str, taxonomy: Taxonomy, where: str):
    macro = micro = None
    if macro_name:
        try:
            macro = taxonomy.macro_index(macro_name)
        except KeyError:
            raise DataError(f"{where}: unknown macro category {macro_name!r}") from None
    if micro_name:
        try:
            micro = taxonomy.micro_index(micro_name)
        except KeyError:
            raise DataError(f"{where}: unknown micro category {micro_name!r}") from None
    if macro is not None and micro is not None and taxonomy.parent_of(micro) != macro:
        raise HierarchyError(
            f"{where}: micro {micro_name!r} belongs to {taxonomy.macros[taxonomy.parent_of(micro)]!r}, "
            f"not {macro_name!r}"
        )
    if micro is not None and macro is None:
        macro = taxonomy.parent_of(micro)
    return macro, micro


def read_csv(text: str, taxonomy: Taxonomy, source: str = "<csv>") -> list[Transaction]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
        raise DataError(f"{source}: header must be {','.join(CSV_HEADER)}")
    out = []
    for rowno, row in enumerate(reader, 2):
        if not row:
            continue
        if len(row) != 4:
            raise DataError(f"{source}: row {rowno}: expected 4 columns, got {len(row)}")
        name, activity, macro_name, micro_name = row
        macro, micro = _resolve_labels(macro_name.strip(), micro_name.strip(), taxonomy, f"{source}: row {rowno}")
        out.append(Transaction(name, activity, macro, micro))
    return out


def load_csv(path, taxonomy: Taxonomy) -> list[Transaction]:
    return read_csv(Path(path).read_text(encoding="utf-8"), taxonomy, str(path))


def dumps_csv(dataset: Sequence[Transaction], taxonomy: Taxonomy) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for t in dataset:
        w.writerow(
            [
                t.merchant_name,
                t.activity,
                "" if t.macro is None else taxonomy.macros[t.macro],
                "" if t.micro is None else taxonomy.micros[t.micro],
            ]
        )
    return buf.getvalue()


def write_csv(path, dataset: Sequence[Transaction], taxonomy: Taxonomy) -> None:
    Path(path).write_text(dumps_csv(dataset, taxonomy), encoding="utf-8")


def dataset_stats(dataset: Sequence[Transaction], taxonomy: Taxonomy) -> list[tuple[str, int]]:
    """Per-macro counts, most frequent first (ties in taxonomy order)."""
    counts = np.zeros(taxonomy.n_macros, dtype=np.int64)
    for t in dataset:
        if t.macro is not None:
            counts[t.macro] += 1
    order = sorted(range(taxonomy.n_macros), key=lambda j: (-counts[j], j))
    return [(taxonomy.macros[j], int(counts[j])) for j in order]


# -- synthetic generator ------------------------------------------------


def _read_resource_table(name: str) -> dict[str, str]:
    text = resources.files("dragonet.resources").joinpath(name).read_text(encoding="utf-8")
    table = {}
    for line in text.splitlines():
        if line.strip():
            key, _, rest = line.partition("\t")
            table[key] = rest.strip()
    return table


def load_word_pools(path=None) -> dict[str, list[str]]:
    """``micro_name -> merchant-name words`` from a ``micro\\tw1 w2 ...`` TSV."""
    if path is None:
        table = _read_resource_table("word_pools.tsv")
    else:
        table = dict(line.split("\t", 1) for line in Path(path).read_text(encoding="utf-8").splitlines() if line)
    return {k: v.split() for k, v in table.items()}


def load_descriptors() -> dict[str, str]:
    """Canonical business-activity phrase per micro category."""
    return _read_resource_table("descriptors.tsv")


@dataclass(frozen=True)
class SynthConfig:
    n_samples: int = 10_000
    seed: int = 0
    activity_corruption_rate: float = 0.05
    name_ambiguity_rate: float = 0.1
    macro_weights: dict[str, float] | None = field(default=None)

    def __post_init__(self):
        if not isinstance(self.n_samples, int) or self.n_samples < 0:
            raise ConfigError("n_samples must be a non-negative integer")
        for rate in ("activity_corruption_rate", "name_ambiguity_rate"):
            v = getattr(self, rate)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{rate} must lie in [0, 1], got {v}")
        if self.macro_weights is not None:
            w = list(self.macro_weights.values())
            if any(x < 0 for x in w) or not any(x > 0 for x in w):
                raise ConfigError("macro_weights must be non-negative and not all zero")

    def weights_for(self, taxonomy: Taxonomy) -> np.ndarray:
        source = CARD_DISTRIBUTION if self.macro_weights is None else self.macro_weights
        unknown = set(source) - set(taxonomy.macros)
        if unknown:
            raise ConfigError(f"macro_weights name unknown macros: {sorted(unknown)}")
        w = np.array([float(source.get(m, 0.0)) for m in taxonomy.macros])
        if not w.sum() > 0:
            raise ConfigError("macro_weights give zero total weight for this taxonomy")
        return w / w.sum()


def generate_synthetic(
    taxonomy: Taxonomy,
    config: SynthConfig,
    word_pools: dict[str, list[str]] | None = None,
    descriptors: dict[str, str] | None = None,
) -> list[Transaction]:
    """Labeled transactions whose separability is set by the two noise rates.

    Macros are drawn by weight, micros uniformly among children. A clean
    merchant name is 1-3 words from the micro's pool; an ambiguous one is
    1-3 generic words only. The activity is the micro's descriptor, or with
    probability ``activity_corruption_rate`` the descriptor of a different
    micro drawn uniformly.
    """
    word_pools = load_word_pools() if word_pools is None else word_pools
    descriptors = load_descriptors() if descriptors is None else descriptors
    missing = [m for m in taxonomy.micros if m not in word_pools or m not in descriptors]
    if missing:
        raise ConfigError(f"no word pool / descriptor for micro categories {missing[:3]}")
    rng = np.random.default_rng(config.seed)
    weights = config.weights_for(taxonomy)
    k = taxonomy.n_micros
    out = []
    for _ in range(config.n_samples):
        macro = int(rng.choice(taxonomy.n_macros, p=weights))
        kids = taxonomy.children(macro)
        micro = kids[int(rng.integers(len(kids)))]
        n_words = int(rng.integers(1, 4))
        if rng.random() < config.name_ambiguity_rate:
            pool = GENERIC_NAME_WORDS
        else:
            pool = word_pools[taxonomy.micros[micro]]
        picks = rng.choice(len(pool), size=min(n_words, len(pool)), replace=False)
        name = " ".join(pool[i] for i in picks).title()
        source = micro
        if k > 1 and rng.random() < config.activity_corruption_rate:
            source = int(rng.integers(k - 1))
            source += source >= micro
        activity = descriptors[taxonomy.micros[source]].upper()
        out.append(Transaction(name, activity, macro, micro))
    return out
