"""Published figures for the reference network, kept for comparison printouts.

None of these are reproducible here without the original captures and
hardware; the test-suite only checks the architecture-derived ones.
"""

PUBLISHED_PARAMETERS = 341_307
PUBLISHED_FOOTPRINT_MB = 1.3
PUBLISHED_TEST_SET_SIZE = 364

PUBLISHED_TEST_ACCURACY = 0.9505
PUBLISHED_MACRO_F1 = 0.951
PUBLISHED_WEIGHTED_F1 = 0.951
PUBLISHED_BEST_EPOCH = 493
PUBLISHED_BEST_VAL_ACCURACY = 0.9376
PUBLISHED_MAX_EPOCHS = 500
PUBLISHED_BATCH_SIZE = 64

# nine-family recall: every family above the floor, most above the typical value
PUBLISHED_NINE_FAMILY_RECALL_FLOOR = 0.92
PUBLISHED_NINE_FAMILY_RECALL_TYPICAL = 0.98

PUBLISHED_SECONDS_PER_SAMPLE = 0.00339
PUBLISHED_IMAGES_PER_SECOND = 295

# (model, parameters, classes, accuracy)
BASELINE_COMPARISON = (
    ("ResNet-50 (30 classes)", 25_000_000, 30, 0.980),
    ("ResNet-50 (59 classes)", 25_000_000, 59, 0.9396),
    ("lightweight CNN (59 classes)", 340_000, 59, 0.9505),
)
