"""Published evaluation numbers for the 500-node experiments, embedded so
`--compare` can print side-by-side deltas.  Keys are
(block_size_mb, n_malicious, keys_per_node); (size, 0, 0) is no attack.
"""

from __future__ import annotations

# average round time, seconds
ROUND_TIME_S = {
    (0.5, 0, 0): 181.42, (1.0, 0, 0): 181.16,
    (1.5, 0, 0): 181.54, (2.0, 0, 0): 182.31,

    (0.5, 5, 25): 178.65, (0.5, 10, 25): 180.55, (0.5, 15, 25): 182.36,
    (0.5, 5, 50): 180.73, (0.5, 10, 50): 181.36, (0.5, 15, 50): 181.72,
    (0.5, 5, 70): 178.98, (0.5, 10, 70): 180.45, (0.5, 15, 70): 237.27,

    (1.0, 5, 25): 182.21, (1.0, 10, 25): 182.87, (1.0, 15, 25): 183.24,
    (1.0, 5, 50): 182.49, (1.0, 10, 50): 232.15, (1.0, 15, 50): 391.16,
    (1.0, 5, 70): 181.69, (1.0, 10, 70): 391.12, (1.0, 15, 70): 391.45,

    (1.5, 5, 25): 180.16, (1.5, 10, 25): 180.97, (1.5, 15, 25): 241.52,
    (1.5, 5, 50): 181.22, (1.5, 10, 50): 391.58, (1.5, 15, 50): 391.66,
    (1.5, 5, 70): 235.76, (1.5, 10, 70): 391.28, (1.5, 15, 70): 391.54,

    (2.0, 5, 25): 178.97, (2.0, 10, 25): 226.63, (2.0, 15, 25): 391.31,
    (2.0, 5, 50): 226.59, (2.0, 10, 50): 390.88, (2.0, 15, 50): 391.57,
    (2.0, 5, 70): 391.39, (2.0, 10, 70): 391.83, (2.0, 15, 70): 391.93,
}

# (messages received %, messages validated %) in due time
MESSAGE_PCTS = {
    (0.5, 0, 0): (97.51, 90.53), (1.0, 0, 0): (96.32, 89.70),
    (1.5, 0, 0): (97.43, 90.77), (2.0, 0, 0): (96.80, 90.09),

    (0.5, 5, 25): (96.98, 91.61), (0.5, 10, 25): (97.26, 92.49),
    (0.5, 15, 25): (97.08, 90.16),
    (0.5, 5, 50): (97.37, 92.87), (0.5, 10, 50): (96.07, 90.90),
    (0.5, 15, 50): (94.96, 90.43),
    (0.5, 5, 70): (97.85, 91.25), (0.5, 10, 70): (96.04, 90.21),
    (0.5, 15, 70): (75.03, 64.99),

    (1.0, 5, 25): (97.70, 91.02), (1.0, 10, 25): (97.98, 92.41),
    (1.0, 15, 25): (92.46, 87.77),
    (1.0, 5, 50): (96.81, 89.75), (1.0, 10, 50): (80.52, 72.72),
    (1.0, 15, 50): (45.47, 44.06),
    (1.0, 5, 70): (94.24, 88.41), (1.0, 10, 70): (42.31, 41.46),
    (1.0, 15, 70): (10.66, 10.55),

    (1.5, 5, 25): (99.32, 94.85), (1.5, 10, 25): (93.62, 89.97),
    (1.5, 15, 25): (65.62, 63.32),
    (1.5, 5, 50): (93.25, 86.65), (1.5, 10, 50): (44.63, 43.10),
    (1.5, 15, 50): (8.75, 8.02),
    (1.5, 5, 70): (73.57, 67.28), (1.5, 10, 70): (25.93, 24.32),
    (1.5, 15, 70): (6.79, 5.82),

    (2.0, 5, 25): (97.83, 92.01), (2.0, 10, 25): (80.03, 73.21),
    (2.0, 15, 25): (42.96, 41.59),
    (2.0, 5, 50): (79.99, 75.12), (2.0, 10, 50): (26.66, 25.21),
    (2.0, 15, 50): (1.05, 1.00),
    (2.0, 5, 70): (55.37, 49.71), (2.0, 10, 70): (4.96, 4.83),
    (2.0, 15, 70): (0.95, 0.91),
}


def lookup(block_size_mb: float, n_malicious: int, keys_per_node: int):
    """(round_time, received_pct, validated_pct) or None if unpublished."""
    key = (round(block_size_mb, 1), n_malicious, keys_per_node)
    t = ROUND_TIME_S.get(key)
    pcts = MESSAGE_PCTS.get(key)
    if t is None or pcts is None:
        return None
    return t, pcts[0], pcts[1]
