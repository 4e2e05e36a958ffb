"""voxforge: desk-scale tumor synthesis and segmentation on procedural
volumetric phantoms.

The pipeline runs in three stages: a baseline tumor segmentor is trained on
labeled phantoms, a generator then learns to paint synthetic tumors under an
adversarial objective judged by that frozen segmentor plus a patch
classifier, and a final segmentor is trained jointly on labeled and
synthesized cases with segmentation-based quality filtering.
"""

__version__ = "0.1.0"
