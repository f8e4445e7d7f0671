"""Why the odometer compares layers before it aligns them.

A parked car is seen as a tall cabin on top of a wide body. Occlusion
usually clips one of the two layers, so each frame pair picks whichever
layer kept its shape best. This demo builds two views of one car and
prints the shape scores that drive that choice.
"""
import numpy as np

from hullodom import (SimilarityWeights, convex_hull_2d, hausdorff, similarity, turning_distance,
                      turning_function)

body = convex_hull_2d([(-2.3, -0.9), (2.3, -0.9), (2.3, 0.9), (-2.3, 0.9)])
cabin = convex_hull_2d([(-1.5, -0.75), (0.9, -0.75), (0.9, 0.75), (-1.5, 0.75)])

# second view: the rear of the body is hidden behind another car
body_seen = convex_hull_2d([(-1.1, -0.9), (2.3, -0.9), (2.3, 0.9), (-1.1, 0.9)])
cabin_seen = cabin

for name, a, b in [("body", body, body_seen), ("cabin", cabin, cabin_seen)]:
    print(f"{name:5s}  turning {turning_distance(turning_function(a), turning_function(b)):.4f}  hausdorff {hausdorff(a, b):.4f}  "
          f"combined {similarity(a, b):.4f}")

print("\nlower score wins; the cabin is used for this pair")

# the two terms can be reweighted, e.g. shape only
shape_only = SimilarityWeights(1.0, 0.0)
print("shape-only body score:", round(similarity(body, body_seen, shape_only), 4))
