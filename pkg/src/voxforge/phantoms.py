"""Procedural phantom corpora: organ ellipsoids with smoothed texture on a
darker background, optional baked-in ground-truth tumors, dataset-family
intensity perturbations that simulate inter-dataset domain gaps, and a JSON
corpus manifest over VXFORGE1 files.

"Labeled" phantoms carry tumor labels; "unlabeled" phantoms carry only the
organ label, like the organ-labels-only CT corpora they stand in for.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .tumors import TumorShapeParams, _ellipsoid, sample_tumor_mask
from .util import subseed, worker_count
from .volume import ORGAN, TUMOR, LabelMask, Volume, gaussian_smooth, read_volume, write_volume

LABELED = "labeled"
UNLABELED = "unlabeled"

_TUMOR_EDGE_SIGMA = 0.8


class InvalidSpecError(ValueError):
    """Phantom parameters that cannot produce a valid case."""


@dataclass(frozen=True)
class PhantomSpec:
    """Recipe for one phantom family.

    Intensities are normalized units in [0, 1]; tumors are hypo-intense,
    so ``tumor_offset`` is subtracted inside tumor regions and must be
    strictly positive.
    """

    dims: tuple[int, int, int] = (32, 32, 32)
    organ_radius: tuple[float, float] = (9.0, 12.0)
    organ_intensity: float = 0.62
    texture_amplitude: float = 0.05
    texture_sigma: float = 1.5
    background_intensity: float = 0.18
    tumor_offset: tuple[float, float] = (0.14, 0.32)
    tumor_shape: TumorShapeParams = field(default_factory=TumorShapeParams)
    organ_class: str = "organ"
    seed: int = 0

    def __post_init__(self):
        for name in ("organ_intensity", "texture_amplitude", "background_intensity"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidSpecError(f"{name} must be in [0, 1], got {v}")
        lo, hi = self.tumor_offset
        if not (0.0 < lo <= hi):
            raise InvalidSpecError(f"tumor_offset must be strictly positive, got {self.tumor_offset}")
        if self.organ_radius[0] > self.organ_radius[1]:
            raise InvalidSpecError(f"bad organ_radius range {self.organ_radius}")
        if min(self.dims) < 4:
            raise InvalidSpecError(f"dims too small: {self.dims}")
        object.__setattr__(self, "dims", tuple(int(n) for n in self.dims))
        object.__setattr__(self, "organ_radius", tuple(self.organ_radius))
        object.__setattr__(self, "tumor_offset", tuple(self.tumor_offset))


@dataclass(frozen=True)
class Case:
    volume: Volume
    labels: LabelMask
    case_id: str
    family: int = 0
    organ_class: str = "organ"


@dataclass
class Dataset:
    """A split of cases; unlabeled datasets must not leak tumor labels."""

    cases: list[Case]
    kind: str

    def __post_init__(self):
        if self.kind not in (LABELED, UNLABELED):
            raise ValueError(f"kind must be labeled or unlabeled, got {self.kind!r}")
        if self.kind == UNLABELED:
            for c in self.cases:
                if c.labels.count(TUMOR):
                    raise ValueError(f"unlabeled case {c.case_id} carries tumor labels")

    def __len__(self):
        return len(self.cases)

    def __iter__(self):
        return iter(self.cases)

    def __getitem__(self, i):
        return self.cases[i]


def generate_phantom(spec: PhantomSpec, with_tumor: bool, rng) -> tuple[Volume, LabelMask]:
    """One organ phantom, normalized to [0, 1], with optional baked tumors."""
    dims = spec.dims
    lo_r, hi_r = spec.organ_radius
    if hi_r + 2.0 >= min(dims) / 2.0:
        raise InvalidSpecError(
            f"organ radius up to {hi_r} does not fit in dims {dims}"
        )
    center = [n / 2.0 + rng.uniform(-1.5, 1.5) for n in dims]
    radii = rng.uniform(lo_r, hi_r, size=3)
    organ = _ellipsoid(dims, center, radii)

    texture = gaussian_smooth(rng.standard_normal(dims), spec.texture_sigma)
    texture /= max(texture.std(), 1e-9)
    vol = np.where(organ, spec.organ_intensity, spec.background_intensity)
    vol = vol + spec.texture_amplitude * texture

    labels = np.where(organ, ORGAN, 0).astype(np.uint8)
    if with_tumor:
        tumor = sample_tumor_mask(LabelMask(labels), spec.tumor_shape, rng)
        region = tumor.data == TUMOR
        comps, n = ndimage.label(region)
        for comp in range(1, n + 1):
            offset = rng.uniform(*spec.tumor_offset)
            soft = gaussian_smooth((comps == comp).astype(np.float64), _TUMOR_EDGE_SIGMA)
            vol = vol - offset * soft
        labels[region] = TUMOR

    return Volume(np.clip(vol, 0.0, 1.0).astype(np.float32)), LabelMask(labels)


def family_spec(spec: PhantomSpec, family: int) -> PhantomSpec:
    """Deterministic per-family intensity/texture perturbation.

    Family 0 is the base distribution (where labeled data comes from);
    higher families shift contrast and noise to simulate data collected
    from other sources.
    """
    if family == 0:
        return spec
    rng = subseed("family", family)
    return replace(
        spec,
        organ_intensity=float(np.clip(spec.organ_intensity + rng.uniform(-0.09, 0.09), 0.0, 1.0)),
        background_intensity=float(
            np.clip(spec.background_intensity + rng.uniform(-0.06, 0.06), 0.0, 1.0)
        ),
        texture_amplitude=float(
            np.clip(spec.texture_amplitude * rng.uniform(0.7, 1.8), 0.0, 1.0)
        ),
    )


def class_spec(spec: PhantomSpec, organ_class: str) -> PhantomSpec:
    """Deterministic organ-class variant (size and base intensity)."""
    if organ_class == spec.organ_class:
        return spec
    rng = subseed("organ-class", organ_class)
    lo, hi = spec.organ_radius
    scale = rng.uniform(0.8, 1.05)
    return replace(
        spec,
        organ_class=organ_class,
        organ_radius=(lo * scale, hi * scale),
        organ_intensity=float(np.clip(spec.organ_intensity + rng.uniform(-0.05, 0.05), 0.0, 1.0)),
    )


def _build_case(spec, case_id, family, organ_class, with_tumor, seed) -> Case:
    eff = family_spec(class_spec(spec, organ_class), family)
    rng = subseed("phantom", seed, case_id)
    vol, labels = generate_phantom(eff, with_tumor, rng)
    return Case(vol, labels, case_id, family, organ_class)


def build_corpus(
    spec: PhantomSpec,
    n_labeled: int,
    n_unlabeled: int,
    n_families: int = 1,
    seed: int | None = None,
    n_test: int = 24,
    organ_classes: tuple[str, ...] | None = None,
) -> tuple[Dataset, Dataset, Dataset]:
    """Assemble (labeled-train, unlabeled-train, held-out-test) splits.

    Labeled cases come from the base family; unlabeled and test cases
    cycle through all families.  Per-case rng streams derive from
    (seed, case-id), so results do not depend on worker scheduling.
    """
    if n_families < 1:
        raise InvalidSpecError(f"n_families must be >= 1, got {n_families}")
    if min(n_labeled, n_unlabeled, n_test) < 0:
        raise InvalidSpecError("case counts must be >= 0")
    if seed is None:
        seed = spec.seed
    classes = organ_classes or (spec.organ_class,)

    jobs = []
    for i in range(n_labeled):
        jobs.append((f"lab-{i:04d}", 0, classes[i % len(classes)], True))
    for i in range(n_unlabeled):
        jobs.append((f"unl-{i:04d}", i % n_families, classes[i % len(classes)], False))
    for i in range(n_test):
        jobs.append((f"tst-{i:04d}", i % n_families, classes[i % len(classes)], True))

    workers = worker_count()
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            cases = list(
                pool.map(lambda j: _build_case(spec, j[0], j[1], j[2], j[3], seed), jobs)
            )
    else:
        cases = [_build_case(spec, *j, seed) for j in jobs]

    labeled = Dataset(cases[:n_labeled], LABELED)
    unlabeled = Dataset(cases[n_labeled : n_labeled + n_unlabeled], UNLABELED)
    test = Dataset(cases[n_labeled + n_unlabeled :], LABELED)
    return labeled, unlabeled, test


def save_corpus(corpus_dir, labeled: Dataset, unlabeled: Dataset, test: Dataset) -> str:
    """Write VXFORGE1 files plus a JSON manifest; returns the manifest path."""
    corpus_dir = str(corpus_dir)
    case_dir = os.path.join(corpus_dir, "cases")
    os.makedirs(case_dir, exist_ok=True)
    splits = {}
    for split_name, ds in (("labeled", labeled), ("unlabeled", unlabeled), ("test", test)):
        entries = []
        for c in ds:
            vol_rel = os.path.join("cases", f"{c.case_id}_vol.vxf")
            mask_rel = os.path.join("cases", f"{c.case_id}_mask.vxf")
            write_volume(os.path.join(corpus_dir, vol_rel), c.volume)
            write_volume(os.path.join(corpus_dir, mask_rel), c.labels)
            entries.append(
                {
                    "id": c.case_id,
                    "family": c.family,
                    "organ_class": c.organ_class,
                    "volume": vol_rel,
                    "mask": mask_rel,
                }
            )
        splits[split_name] = {"kind": ds.kind, "cases": entries}
    manifest_path = os.path.join(corpus_dir, "manifest.json")
    with open(manifest_path, "w") as f:
        json.dump({"splits": splits}, f, indent=2, sort_keys=True)
        f.write("\n")
    return manifest_path


def load_corpus(corpus_dir) -> tuple[Dataset, Dataset, Dataset]:
    corpus_dir = str(corpus_dir)
    with open(os.path.join(corpus_dir, "manifest.json")) as f:
        manifest = json.load(f)
    out = []
    for split_name in ("labeled", "unlabeled", "test"):
        info = manifest["splits"][split_name]
        cases = []
        for e in info["cases"]:
            vol = read_volume(os.path.join(corpus_dir, e["volume"]))
            mask = read_volume(os.path.join(corpus_dir, e["mask"]))
            cases.append(Case(vol, mask, e["id"], e["family"], e["organ_class"]))
        out.append(Dataset(cases, info["kind"]))
    return tuple(out)
