"""Shared fixtures: small rendered worlds and the acceptance datasets.

Dataset generation is deterministic, so everything here is session-scoped;
the acceptance suite and the unit tests share the same bundles.
"""

import numpy as np
import pytest

from texloc.config import ParameterConfig
from texloc.datagen import DatasetSpec, generate_dataset
from texloc.imaging import TextureWorld, render_view
from texloc.geometry import Pose2D


@pytest.fixture(scope="session")
def small_world():
    return TextureWorld(seed=3, width=640, height=480)


@pytest.fixture(scope="session")
def small_view(small_world):
    return render_view(small_world, Pose2D(120.0, 90.0, 0.0), (256, 192))


@pytest.fixture(scope="session")
def tiny_dataset():
    """A fast bundle for plumbing tests: a handful of refs and queries."""
    spec = DatasetSpec(
        seed=11,
        world_width=900,
        world_height=700,
        view_width=256,
        view_height=192,
        ref_overlap=0.3,
        noise_sigma=0.0,
        num_queries=6,
        num_test_sets=1,
        queries_per_test_set=3,
        outlier_pool_size=10,
        walk_step_fraction=0.2,
    )
    return generate_dataset(spec)


@pytest.fixture(scope="session")
def dataset_a():
    """Noise-free densely mapped world (end-to-end success criterion)."""
    spec = DatasetSpec(
        seed=5,
        world_width=1600,
        world_height=1200,
        view_width=320,
        view_height=240,
        ref_overlap=0.5,
        noise_sigma=0.0,
        num_queries=100,
        num_test_sets=0,
    )
    return generate_dataset(spec)


@pytest.fixture(scope="session")
def dataset_b():
    """Noisy world where success rates move with n_r (sweep + optimizer)."""
    spec = DatasetSpec(
        seed=13,
        world_width=1600,
        world_height=1200,
        view_width=256,
        view_height=192,
        ref_overlap=0.25,
        noise_sigma=30.0,
        num_queries=200,
        num_test_sets=1,
        queries_per_test_set=4,
        outlier_pool_size=10,
        walk_step_fraction=0.12,
    )
    return generate_dataset(spec)


@pytest.fixture(scope="session")
def dataset_c():
    """Thirteen moderate-noise test sets for the labeled-attempt pool."""
    spec = DatasetSpec(
        seed=17,
        world_width=1600,
        world_height=1200,
        view_width=256,
        view_height=192,
        ref_overlap=0.3,
        noise_sigma=12.0,
        num_queries=0,
        num_test_sets=13,
        queries_per_test_set=5,
        walk_step_fraction=0.25,
    )
    return generate_dataset(spec)


@pytest.fixture(scope="session")
def dataset_d():
    """Abutting-tile reference layout whose outlier votes spread uniformly.

    Every record matches against the full non-overlapping tile pool, which
    keeps the vote intensity flat over the map interior — the regime the
    cell-occupancy diagnostic is meant to probe.
    """
    spec = DatasetSpec(
        seed=21,
        world_width=4800,
        world_height=3600,
        view_width=256,
        view_height=192,
        ref_overlap=0.0,
        noise_sigma=12.0,
        num_queries=0,
        num_test_sets=1,
        queries_per_test_set=8,
        outlier_pool_size=300,
        outlier_refs_per_query=300,
        walk_step_fraction=0.2,
    )
    return generate_dataset(spec)


@pytest.fixture(scope="session")
def default_config():
    return ParameterConfig()


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
