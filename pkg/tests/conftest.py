"""Shared fixtures: one well-separated synthetic cohort reused across suites.

Session scope matters; cohort generation plus featurization is a few seconds
and several suites only need a realistic matrix, not a fresh one.
"""

import numpy as np
import pytest

from fuma.features import extract_feature_matrix
from fuma.sessions import build_watch_records
from fuma.simulate import default_config, generate_cohort


@pytest.fixture(scope="session")
def sep2_cohort():
    config = default_config(n_students=500, seed=101, separation=2.0)
    return generate_cohort(config)


@pytest.fixture(scope="session")
def sep2_features(sep2_cohort):
    cohort = sep2_cohort
    catalog = cohort.config.catalog
    records = build_watch_records(cohort.events, catalog, week_cutoff=4)
    student_ids = sorted({sid for sid, _ in records})
    matrix = extract_feature_matrix(student_ids, records, catalog, week_cutoff=4)
    return student_ids, matrix
