"""Template-matching chord detection over pitch-class weight profiles.

A profile is 12 non-negative weights (index = pitch class, C = 0), typically
duration-weighted note overlap with a half-bar span. Each of the 84 chord
templates (12 roots x 7 qualities) is scored by

    score = (in_weight - out_weight) / total_weight

where in_weight sums the classes the template contains. The best template
wins if its score reaches 0.5 and at least two classes have weight; ties go
to the lowest root, then to quality order maj, min, dim, aug, dom7, maj7,
min7. Detection is scale invariant.
"""

from __future__ import annotations

from typing import Optional, Sequence

from .vocab import CHORD_QUALITIES, QUALITY_PITCH_CLASSES, ChordLabel

SCORE_THRESHOLD = 0.5
MIN_ACTIVE_CLASSES = 2

# Template pitch-class sets, in tie-break order: root major, then quality order.
_TEMPLATES: list[tuple[ChordLabel, frozenset[int]]] = [
    (
        ChordLabel(root, quality),
        frozenset((root + iv) % 12 for iv in QUALITY_PITCH_CLASSES[quality]),
    )
    for root in range(12)
    for quality in CHORD_QUALITIES
]


def detect_chord(weights: Sequence[float]) -> Optional[ChordLabel]:
    """Best-scoring chord label for a 12-class weight profile, or None."""
    if len(weights) != 12:
        raise ValueError(f"expected 12 pitch-class weights, got {len(weights)}")
    if any(w < 0 for w in weights):
        raise ValueError("pitch-class weights must be non-negative")
    total = sum(weights)
    active = sum(1 for w in weights if w > 0)
    if total <= 0 or active < MIN_ACTIVE_CLASSES:
        return None
    best_label: Optional[ChordLabel] = None
    best_score = -2.0
    for label, classes in _TEMPLATES:
        inside = sum(weights[pc] for pc in classes)
        score = (2.0 * inside - total) / total
        if score > best_score:
            best_label, best_score = label, score
    if best_score >= SCORE_THRESHOLD:
        return best_label
    return None
