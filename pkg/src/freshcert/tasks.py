"""Template families, substitution schemes, sampling, collision primitives.

Tokens are dense non-negative integer ids; strings are id tuples.  A
template is a fixed-length pattern of literal tokens and wildcard slots;
repeated wildcard ids force equality, distinct wildcard ids force
inequality (substitution maps are injective).  Rendering ids to glyphs
is left to the CLI boundary.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Slot",
    "lit",
    "wc",
    "Template",
    "TemplateFamily",
    "SubstitutionScheme",
    "TableSubstitutionScheme",
    "Sample",
    "Dataset",
    "CollisionPrimitives",
    "FamilyError",
    "sample_dataset",
    "classify_string",
    "collision_primitives",
    "fresh_pair",
    "fresh_single",
    "wildcard_collision_matrix",
]


class FamilyError(ValueError):
    """Raised for ill-formed families, schemes, or infeasible requests."""


@dataclass(frozen=True)
class Slot:
    kind: str  # "lit" | "wc"
    value: int

    def __post_init__(self):
        if self.kind not in ("lit", "wc"):
            raise FamilyError(f"unknown slot kind {self.kind!r}")


def lit(token: int) -> Slot:
    return Slot("lit", token)


def wc(index: int) -> Slot:
    return Slot("wc", index)


@dataclass(frozen=True)
class Template:
    slots: tuple[Slot, ...]

    @property
    def length(self) -> int:
        return len(self.slots)

    @property
    def wildcards(self) -> tuple[int, ...]:
        """Distinct wildcard ids in order of first appearance."""
        seen: list[int] = []
        for s in self.slots:
            if s.kind == "wc" and s.value not in seen:
                seen.append(s.value)
        return tuple(seen)

    @property
    def literals(self) -> frozenset[int]:
        return frozenset(s.value for s in self.slots if s.kind == "lit")

    @property
    def n_wildcards(self) -> int:
        return len(self.wildcards)

    def substitute(self, mapping: dict[int, int]) -> tuple[int, ...]:
        """Apply a wildcard -> token map slot by slot."""
        out = []
        for s in self.slots:
            if s.kind == "lit":
                out.append(s.value)
            else:
                out.append(mapping[s.value])
        return tuple(out)

    def signature(self) -> tuple:
        """Structural key: literal placement plus wildcard equality pattern."""
        first_pos: dict[int, int] = {}
        sig = []
        for p, s in enumerate(self.slots):
            if s.kind == "lit":
                sig.append(("lit", s.value))
            else:
                if s.value not in first_pos:
                    first_pos[s.value] = p
                sig.append(("wc", first_pos[s.value]))
        return tuple(sig)


def _match_template(template: Template, string: tuple[int, ...]) -> dict[int, int] | None:
    """Wildcard map if the string is an admissible instance, else None."""
    if len(string) != template.length:
        return None
    lits = template.literals
    mapping: dict[int, int] = {}
    for s, tok in zip(template.slots, string):
        if s.kind == "lit":
            if tok != s.value:
                return None
        else:
            if tok in lits:
                return None
            if s.value in mapping:
                if mapping[s.value] != tok:
                    return None
            else:
                mapping[s.value] = tok
    # injectivity: distinct wildcards got distinct tokens
    if len(set(mapping.values())) != len(mapping):
        return None
    return mapping


@dataclass(frozen=True)
class TemplateFamily:
    templates: tuple[Template, ...]
    labels: tuple[int, ...]
    masses: tuple[float, ...]

    def __post_init__(self):
        if not self.templates:
            raise FamilyError("family needs at least one template")
        if len(self.labels) != len(self.templates) or len(self.masses) != len(self.templates):
            raise FamilyError("labels/masses must align with templates")
        k = self.templates[0].length
        if any(t.length != k for t in self.templates):
            raise FamilyError("all templates must share one length")
        total = math.fsum(self.masses)
        if abs(total - 1.0) > 1e-12:
            raise FamilyError(f"masses must sum to 1, got {total}")
        if any(m <= 0 for m in self.masses):
            raise FamilyError("masses must be strictly positive")
        sigs = [t.signature() for t in self.templates]
        if len(set(sigs)) != len(sigs):
            raise FamilyError("family-not-disjoint: duplicate template signatures")

    @property
    def r(self) -> int:
        return len(self.templates)

    @property
    def k(self) -> int:
        return self.templates[0].length

    @property
    def literal_set(self) -> frozenset[int]:
        out: frozenset[int] = frozenset()
        for t in self.templates:
            out |= t.literals
        return out

    @property
    def p_min(self) -> float:
        return min(self.masses)

    @property
    def w_max(self) -> int:
        return max(t.n_wildcards for t in self.templates)

    def label_vector(self) -> np.ndarray:
        return np.asarray(self.labels, dtype=float)

    def validate_disjoint(self, scheme: "SubstitutionScheme", trials: int = 10**4,
                          seed: int = 0) -> None:
        """Randomized cross-matching check on sampled strings.

        The signature check in __post_init__ covers structural duplicates;
        this catches accidental overlap of matching classes.
        """
        rng = np.random.default_rng(seed)
        for _ in range(trials):
            a = int(rng.integers(self.r))
            mapping = scheme.draw(self.templates[a], rng)
            s = self.templates[a].substitute(mapping)
            got = classify_string(self, s)
            if got != a:
                raise FamilyError(
                    f"family-not-disjoint: template {a} string {s} classified {got}")


@dataclass(frozen=True)
class SubstitutionScheme:
    """Uniform-injective substitution over split train/val/test alphabets."""
    train: tuple[int, ...]
    val: tuple[int, ...] = ()
    test: tuple[int, ...] = ()
    policy: str = "uniform-injective"

    def __post_init__(self):
        parts = [set(self.train), set(self.val), set(self.test)]
        for i in range(3):
            for j in range(i + 1, 3):
                if parts[i] & parts[j]:
                    raise FamilyError("train/val/test token ranges must be disjoint")
        if self.policy != "uniform-injective":
            raise FamilyError(f"unsupported policy {self.policy!r}")

    def alphabet(self, split: str = "train") -> tuple[int, ...]:
        return {"train": self.train, "val": self.val, "test": self.test}[split]

    def admissible(self, template: Template, split: str = "train") -> tuple[int, ...]:
        """Tokens usable for this template's wildcards: the split minus its literals."""
        lits = template.literals
        return tuple(t for t in self.alphabet(split) if t not in lits)

    def check_feasible(self, family: TemplateFamily, split: str = "train") -> None:
        for a, t in enumerate(family.templates):
            if len(self.admissible(t, split)) < t.n_wildcards:
                raise FamilyError(
                    f"scheme-infeasible: template {a} needs {t.n_wildcards} tokens, "
                    f"alphabet offers {len(self.admissible(t, split))}")

    def draw(self, template: Template, rng: np.random.Generator,
             split: str = "train") -> dict[int, int]:
        """Uniform injective wildcard map avoiding the template's literals."""
        pool = self.admissible(template, split)
        w = template.n_wildcards
        if len(pool) < w:
            raise FamilyError("scheme-infeasible")
        picks = rng.choice(len(pool), size=w, replace=False)
        return {wid: pool[int(i)] for wid, i in zip(template.wildcards, picks)}

    def enumerate_maps(self, template: Template, split: str = "train",
                       cap: int = 10**6) -> list[dict[int, int]] | None:
        """All injective maps, or None when the count exceeds cap."""
        pool = self.admissible(template, split)
        w = template.n_wildcards
        count = math.perm(len(pool), w)
        if count > cap:
            return None
        wids = template.wildcards
        return [dict(zip(wids, combo)) for combo in itertools.permutations(pool, w)]

    def token_marginals(self, template: Template,
                        split: str = "train") -> dict[int, float]:
        """P[token in S(W)] per token: w/m for a uniform injective draw."""
        pool = self.admissible(template, split)
        m = len(pool)
        w = template.n_wildcards
        p = w / m if m else 0.0
        return {tok: p for tok in pool}


@dataclass(frozen=True)
class TableSubstitutionScheme:
    """Explicit weighted table over injective maps, one table per template.

    tables[a] lists (mapping, weight) pairs for template a; weights are
    normalized internally.  Presents the same surface as the uniform
    scheme (draw, enumerate_maps, admissible, marginals), so samplers
    and the certificate machinery work unchanged.
    """
    tables: tuple[tuple[tuple[tuple[tuple[int, int], ...], float], ...], ...]
    family: TemplateFamily
    test: tuple[int, ...] = ()
    policy: str = "weighted-table"

    @staticmethod
    def build(family: TemplateFamily,
              raw_tables: list[list[tuple[dict[int, int], float]]],
              test: tuple[int, ...] = ()) -> "TableSubstitutionScheme":
        frozen = []
        for a, table in enumerate(raw_tables):
            t = family.templates[a]
            if not table:
                raise FamilyError(f"scheme-infeasible: empty table for template {a}")
            total = math.fsum(wgt for _, wgt in table)
            if total <= 0:
                raise FamilyError("table weights must have positive mass")
            rows = []
            for mapping, wgt in table:
                if wgt < 0:
                    raise FamilyError("table weights must be nonnegative")
                if set(mapping) != set(t.wildcards):
                    raise FamilyError(f"map keys must cover template {a} wildcards")
                if len(set(mapping.values())) != len(mapping):
                    raise FamilyError("substitution maps must be injective")
                if set(mapping.values()) & t.literals:
                    raise FamilyError("substitution maps must avoid own literals")
                rows.append((tuple(sorted(mapping.items())), wgt / total))
            frozen.append(tuple(rows))
        return TableSubstitutionScheme(tuple(frozen), family, tuple(test))

    def alphabet(self, split: str = "train") -> tuple[int, ...]:
        if split == "test":
            return self.test
        toks = sorted({tok for table in self.tables
                       for mapping, _ in table for _, tok in mapping})
        return tuple(toks)

    def _index(self, template: Template) -> int:
        for a, t in enumerate(self.family.templates):
            if t == template:
                return a
        raise FamilyError("template not part of this scheme's family")

    def admissible(self, template: Template, split: str = "train") -> tuple[int, ...]:
        if split == "test":
            lits = template.literals
            return tuple(t for t in self.test if t not in lits)
        table = self.tables[self._index(template)]
        return tuple(sorted({tok for mapping, _ in table for _, tok in mapping}))

    def check_feasible(self, family: TemplateFamily, split: str = "train") -> None:
        if len(self.tables) != family.r:
            raise FamilyError("scheme-infeasible: one table per template required")

    def draw(self, template: Template, rng: np.random.Generator,
             split: str = "train") -> dict[int, int]:
        if split == "test":
            pool = self.admissible(template, "test")
            w = template.n_wildcards
            if len(pool) < w:
                raise FamilyError("scheme-infeasible")
            picks = rng.choice(len(pool), size=w, replace=False)
            return {wid: pool[int(i)] for wid, i in zip(template.wildcards, picks)}
        table = self.tables[self._index(template)]
        weights = np.array([wgt for _, wgt in table])
        idx = int(rng.choice(len(table), p=weights))
        return dict(table[idx][0])

    def enumerate_maps(self, template: Template, split: str = "train",
                       cap: int = 10**6) -> list[dict[int, int]] | None:
        table = self.tables[self._index(template)]
        if len(table) > cap:
            return None
        return [dict(mapping) for mapping, _ in table]

    def enumerate_weighted(self, template: Template) -> list[tuple[dict[int, int], float]]:
        table = self.tables[self._index(template)]
        return [(dict(mapping), wgt) for mapping, wgt in table]

    def token_marginals(self, template: Template,
                        split: str = "train") -> dict[int, float]:
        """Exact P[token in S(W)] by summing table weights."""
        out: dict[int, float] = {}
        for mapping, wgt in self.tables[self._index(template)]:
            for _, tok in mapping:
                out[tok] = out.get(tok, 0.0) + wgt
        return out


@dataclass(frozen=True)
class Sample:
    template_index: int
    mapping: dict[int, int] = field(hash=False)
    string: tuple[int, ...]
    label: int

    @property
    def image(self) -> frozenset[int]:
        return frozenset(self.mapping.values())


@dataclass(frozen=True)
class Dataset:
    family: TemplateFamily
    samples: tuple[Sample, ...]

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def colors(self) -> np.ndarray:
        return np.asarray([s.template_index for s in self.samples], dtype=int)

    @property
    def labels(self) -> np.ndarray:
        return np.asarray([s.label for s in self.samples], dtype=float)

    def block_index(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {a: [] for a in range(self.family.r)}
        for i, s in enumerate(self.samples):
            out[s.template_index].append(i)
        return out

    def block_sizes(self) -> np.ndarray:
        sizes = np.zeros(self.family.r, dtype=int)
        for s in self.samples:
            sizes[s.template_index] += 1
        return sizes

    def empirical_masses(self) -> np.ndarray:
        if not self.samples:
            raise FamilyError("empirical masses undefined for an empty dataset")
        return self.block_sizes() / float(len(self.samples))


def sample_dataset(family: TemplateFamily, scheme: SubstitutionScheme, n: int,
                   seed: int, split: str = "train") -> Dataset:
    """Draw n i.i.d. samples by template-then-substitution."""
    if n < 0:
        raise FamilyError("n must be nonnegative")
    scheme.check_feasible(family, split)
    rng = np.random.default_rng(seed)
    masses = np.asarray(family.masses)
    samples = []
    for _ in range(n):
        a = int(rng.choice(family.r, p=masses))
        mapping = scheme.draw(family.templates[a], rng, split)
        string = family.templates[a].substitute(mapping)
        samples.append(Sample(a, mapping, string, family.labels[a]))
    return Dataset(family, tuple(samples))


def classify_string(family: TemplateFamily, string: tuple[int, ...]):
    """Index of the unique matching template, or None."""
    hits = [a for a, t in enumerate(family.templates)
            if _match_template(t, tuple(string)) is not None]
    if len(hits) > 1:
        raise FamilyError(f"family-not-disjoint: string {string} matches {hits}")
    return hits[0] if hits else None


def fresh_pair(family: TemplateFamily, a: int, b: int,
               reserved: frozenset[int] = frozenset(),
               id_ceiling: int | None = None) -> tuple[dict[int, int], dict[int, int]]:
    """Canonical deterministic jointly fresh pair of substitutions for (a, b).

    Wildcard images of both maps are pairwise distinct and avoid
    L_a | L_b | reserved.  Token ids are chosen smallest-first, so repeated
    calls return identical pairs.
    """
    ta, tb = family.templates[a], family.templates[b]
    forbidden = set(ta.literals) | set(tb.literals) | set(reserved)
    need = ta.n_wildcards + tb.n_wildcards
    ceiling = id_ceiling if id_ceiling is not None else max(
        [0] + [t + 1 for t in forbidden]) + need
    pool = [t for t in range(ceiling) if t not in forbidden]
    if len(pool) < need:
        raise FamilyError("no-fresh-pair: vocabulary too small")
    sa = dict(zip(ta.wildcards, pool[:ta.n_wildcards]))
    sb = dict(zip(tb.wildcards, pool[ta.n_wildcards:need]))
    return sa, sb


def fresh_single(family: TemplateFamily, a: int) -> dict[int, int]:
    """Canonical admissible substitution for one template."""
    ta = family.templates[a]
    forbidden = set(ta.literals)
    pool_size = max([0] + [t + 1 for t in forbidden]) + ta.n_wildcards
    pool = [t for t in range(pool_size) if t not in forbidden]
    return dict(zip(ta.wildcards, pool[:ta.n_wildcards]))


@dataclass(frozen=True)
class CollisionPrimitives:
    """Collision-probability inputs for the budget envelopes.

    marginals[b] maps token -> P[token in S(W_b)] under the scheme; q is the
    symmetric pair envelope min{1, l_bc + l_cb + chi_bc}; q_test[b] is the
    envelope for the fixed test string; rho is the reciprocal of the largest
    wildcard-slot marginal.
    """
    marginals: tuple[dict[int, float], ...]
    literal_mass: np.ndarray  # l[b, c] = sum_{t in L_c} p_{b,t}
    chi: np.ndarray           # chi[b, c] = sum_t p_{b,t} p_{c,t}
    q: np.ndarray
    q_test: np.ndarray
    rho: float
    q_wild: np.ndarray
    mc_stderr: float = 0.0

    @property
    def r(self) -> int:
        return self.q.shape[0]


def wildcard_collision_matrix(family: TemplateFamily, scheme,
                              split: str = "train", enumeration_cap: int = 10**6,
                              mc_draws: int = 10**5, seed: int = 0) -> np.ndarray:
    """Exact P[images intersect] per template pair.

    Uniform-injective schemes: condition on the overlap of the first image
    with the shared admissible pool and apply the hypergeometric no-hit
    probability on the second.  Table schemes: weighted enumeration of map
    pairs under the cap, Monte Carlo beyond it.
    """
    r = family.r
    out = np.zeros((r, r))
    if isinstance(scheme, TableSubstitutionScheme) and split != "test":
        rng = np.random.default_rng(seed)
        for a in range(r):
            ta = scheme.enumerate_weighted(family.templates[a])
            for b in range(r):
                tb = scheme.enumerate_weighted(family.templates[b])
                if len(ta) * len(tb) <= enumeration_cap:
                    total = 0.0
                    for mu, wu in ta:
                        iu = set(mu.values())
                        for mv, wv in tb:
                            if iu & set(mv.values()):
                                total += wu * wv
                    out[a, b] = total
                else:
                    hits = sum(
                        1 for _ in range(mc_draws)
                        if set(scheme.draw(family.templates[a], rng).values())
                        & set(scheme.draw(family.templates[b], rng).values()))
                    out[a, b] = hits / mc_draws
        return out
    for a in range(r):
        pa = set(scheme.admissible(family.templates[a], split))
        wa = family.templates[a].n_wildcards
        for b in range(r):
            pb = set(scheme.admissible(family.templates[b], split))
            wb = family.templates[b].n_wildcards
            if wa == 0 or wb == 0 or not pa or not pb:
                continue
            shared = len(pa & pb)
            ma, mb = len(pa), len(pb)
            miss = 0.0
            for j in range(0, min(wa, shared) + 1):
                # j = |image_a ∩ shared pool|
                pj = (math.comb(shared, j) * math.comb(ma - shared, wa - j)
                      / math.comb(ma, wa)) if wa - j <= ma - shared else 0.0
                if pj == 0.0:
                    continue
                if mb - j >= wb:
                    miss += pj * math.comb(mb - j, wb) / math.comb(mb, wb)
            out[a, b] = 1.0 - miss
    return out


def collision_primitives(family: TemplateFamily, scheme,
                         test_template: int, test_substitution: dict[int, int],
                         split: str = "train", enumeration_cap: int = 10**6,
                         mc_draws: int = 10**5, seed: int = 0) -> CollisionPrimitives:
    """Token marginals, literal-hit masses, overlap masses, pair envelopes, rho.

    Uniform-injective schemes get exact closed forms; weighted-table
    schemes get exact marginals and pair probabilities by weighted
    enumeration under the cap, Monte Carlo beyond it.
    """
    r = family.r
    marginals = [scheme.token_marginals(t, split) for t in family.templates]
    lit_mass = np.zeros((r, r))
    for b in range(r):
        for c in range(r):
            lit_mass[b, c] = sum(marginals[b].get(t, 0.0)
                                 for t in family.templates[c].literals)
    chi = np.zeros((r, r))
    for b in range(r):
        for c in range(r):
            toks = set(marginals[b]) & set(marginals[c])
            chi[b, c] = sum(marginals[b][t] * marginals[c][t] for t in toks)
    q_wild = wildcard_collision_matrix(family, scheme, split, enumeration_cap,
                                       mc_draws, seed)
    q = np.zeros((r, r))
    for b in range(r):
        for c in range(r):
            q[b, c] = min(1.0, lit_mass[b, c] + lit_mass[c, b] + chi[b, c])
    q = 0.5 * (q + q.T)

    test_tokens = set(test_substitution.values())
    la = family.templates[test_template].literals
    q_test = np.zeros(r)
    for b in range(r):
        hit = sum(marginals[b].get(t, 0.0) for t in test_tokens)
        q_test[b] = min(1.0, lit_mass[b, test_template] + hit)

    peak = max((max(m.values()) if m else 0.0) for m in marginals)
    rho = math.inf if peak == 0.0 else 1.0 / peak
    return CollisionPrimitives(tuple(marginals), lit_mass, chi, q, q_test, rho, q_wild)
