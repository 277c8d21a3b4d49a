"""Two-level category hierarchy and the taxonomy-aware attention mask."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from dragonet.errors import ShapeError, TaxonomyError


@dataclass(frozen=True)
class Taxonomy:
    macros: tuple[str, ...]
    micros: tuple[str, ...]
    parent: tuple[int, ...]  # micro index -> macro index

    def __post_init__(self):
        parent = np.asarray(self.parent, dtype=np.int64)
        object.__setattr__(self, "_parent_arr", parent)
        object.__setattr__(self, "_macro_index", {n: i for i, n in enumerate(self.macros)})
        object.__setattr__(self, "_micro_index", {n: i for i, n in enumerate(self.micros)})
        object.__setattr__(
            self, "_children", tuple(tuple(np.flatnonzero(parent == j).tolist()) for j in range(len(self.macros)))
        )

    @property
    def n_macros(self) -> int:
        return len(self.macros)

    @property
    def n_micros(self) -> int:
        return len(self.micros)

    @property
    def parent_array(self) -> np.ndarray:
        return self._parent_arr

    def macro_index(self, name: str) -> int:
        return self._macro_index[name]

    def micro_index(self, name: str) -> int:
        return self._micro_index[name]

    def children(self, macro: int) -> tuple[int, ...]:
        return self._children[macro]

    def parent_of(self, micro: int) -> int:
        return self.parent[micro]

    def is_child(self, micro: int, macro: int) -> bool:
        return self.parent[micro] == macro

    def fallback_child(self, macro: int) -> int:
        """Micro reported when every child of ``macro`` is suppressed: its "Other *" child, else the first."""
        kids = self.children(macro)
        for k in kids:
            if self.micros[k].startswith("Other"):
                return k
        return kids[0]

    def dumps(self) -> str:
        return "".join(f"{self.macros[p]}\t{m}\n" for m, p in zip(self.micros, self.parent))

    def digest(self) -> str:
        return hashlib.sha256(self.dumps().encode("utf-8")).hexdigest()


def parse_taxonomy(text: str, source: str = "<string>") -> Taxonomy:
    """Parse ``<macro>\\t<micro>`` rows; a row with an empty micro declares a macro only."""
    macros: list[str] = []
    macro_index: dict[str, int] = {}
    micros: list[str] = []
    parent: list[int] = []
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        if not raw.strip():
            continue
        fields = raw.split("\t")
        if len(fields) != 2:
            raise TaxonomyError(f"{source}: line {lineno}: expected 2 tab-separated fields, got {len(fields)}")
        macro, micro = (f.strip() for f in fields)
        if not macro:
            raise TaxonomyError(f"{source}: line {lineno}: micro {micro!r} has no parent macro")
        if macro not in macro_index:
            macro_index[macro] = len(macros)
            macros.append(macro)
        if not micro:
            continue
        if micro in seen:
            raise TaxonomyError(f"{source}: line {lineno}: micro {micro!r} already listed on line {seen[micro]}")
        seen[micro] = lineno
        micros.append(micro)
        parent.append(macro_index[macro])
    if not macros:
        raise TaxonomyError(f"{source}: no categories")
    childless = [m for i, m in enumerate(macros) if i not in set(parent)]
    if childless:
        raise TaxonomyError(f"{source}: macro {childless[0]!r} has no micro categories")
    return Taxonomy(tuple(macros), tuple(micros), tuple(parent))


def load_taxonomy(path=None) -> Taxonomy:
    """Load a taxonomy TSV; with no path, the bundled retail taxonomy."""
    if path is None:
        text = resources.files("dragonet.resources").joinpath("table1.tsv").read_text(encoding="utf-8")
        return parse_taxonomy(text, "table1.tsv")
    return parse_taxonomy(Path(path).read_text(encoding="utf-8"), str(path))


def build_mask(taxonomy: Taxonomy, macro_idx: int) -> np.ndarray:
    if not 0 <= macro_idx < taxonomy.n_macros:
        raise IndexError(f"build_mask: macro index {macro_idx} out of range")
    return (taxonomy.parent_array == macro_idx).astype(np.float64)


def taxonomy_attention(o_alpha, o_beta, taxonomy: Taxonomy) -> np.ndarray:
    """Zero every micro score whose parent is not the top-scoring macro.

    Works row-wise on 2-D inputs. ``np.argmax`` breaks ties to the lowest index.
    """
    o_alpha = np.asarray(o_alpha, dtype=np.float64)
    o_beta = np.asarray(o_beta, dtype=np.float64)
    if o_alpha.shape[-1] != taxonomy.n_macros or o_beta.shape[-1] != taxonomy.n_micros:
        raise ShapeError(
            f"taxonomy_attention: got {o_alpha.shape[-1]} macro / {o_beta.shape[-1]} micro scores, "
            f"taxonomy has {taxonomy.n_macros} / {taxonomy.n_micros}"
        )
    if o_alpha.shape[:-1] != o_beta.shape[:-1]:
        raise ShapeError(f"taxonomy_attention: batch shapes differ {o_alpha.shape} vs {o_beta.shape}")
    top = np.argmax(o_alpha, axis=-1)
    mask = taxonomy.parent_array == np.expand_dims(top, -1)
    return o_beta * mask


def resolve(o_alpha, o_beta, taxonomy: Taxonomy, with_tal: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Macro and micro label indices for a batch of score rows."""
    o_alpha = np.atleast_2d(o_alpha)
    o_beta = np.atleast_2d(o_beta)
    macro = np.argmax(o_alpha, axis=1)
    if not with_tal:
        return macro, np.argmax(o_beta, axis=1)
    corrected = taxonomy_attention(o_alpha, o_beta, taxonomy)
    # restrict to the winning macro's children so negative or zero scores
    # elsewhere cannot win the argmax
    inside = taxonomy.parent_array[None, :] == macro[:, None]
    micro = np.argmax(np.where(inside, corrected, -np.inf), axis=1)
    for r in np.flatnonzero(~np.any(inside & (corrected != 0), axis=1)):
        micro[r] = taxonomy.fallback_child(int(macro[r]))
    return macro, micro
