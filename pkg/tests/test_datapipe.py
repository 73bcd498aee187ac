import numpy as np
import pytest
from numpy.testing import assert_allclose

from multilap import errors, fastsum
from multilap.datapipe import (
    GroupSpec,
    GroupingSpec,
    SbmLayerSpec,
    SbmSpec,
    complementary_sbm,
    feature_group,
    image_to_features,
    load_features_csv,
    load_image,
    load_labels_csv,
    masks_from_labels,
    noisy_pair_sbm,
    sample_labels,
    save_image,
    sbm_generate,
    scale_for_fastsum,
    write_predictions_csv,
    write_scores_csv,
)
from multilap.graphs import apply_weight
from multilap.kernels import KernelSpec


# ---------------------------------------------------------------------------
# coordinate scaling


def test_scaling_maps_byte_range_onto_box_edge():
    X = np.array([[0.0], [100.0], [255.0]])
    scaled, info = scale_for_fastsum(X)
    s = 0.25 - fastsum.DEFAULT_EPS_B / 2
    assert_allclose(scaled[0, 0], -s)
    assert_allclose(scaled[2, 0], +s)
    assert_allclose(info.midpoints, [127.5])
    assert_allclose(scaled, (X - 127.5) / info.factor)
    # round trip through the reported factor reproduces the input
    assert_allclose(scaled * info.factor + info.midpoints, X, rtol=1e-14)


def test_scaling_never_leaves_the_box():
    rng = np.random.default_rng(0)
    X = rng.uniform(-1e6, 1e6, size=(500, 3))
    scaled, _ = scale_for_fastsum(X)
    fastsum.validate_box(scaled, fastsum.DEFAULT_EPS_B)  # must not raise


def test_scaling_constant_column_goes_to_zero():
    X = np.array([[3.0, 1.0], [3.0, 2.0]])
    scaled, info = scale_for_fastsum(X)
    assert_allclose(scaled[:, 0], [0.0, 0.0])
    X = np.full((4, 2), 7.0)
    scaled, info = scale_for_fastsum(X)
    assert_allclose(scaled, np.zeros((4, 2)))
    assert info.factor == 1.0


def test_scaling_preserves_aspect_ratio():
    # one shared factor across columns: a column half as wide must land on
    # half the box
    X = np.array([[0.0, 0.0], [100.0, 50.0]])
    scaled, info = scale_for_fastsum(X)
    s = 0.25 - fastsum.DEFAULT_EPS_B / 2
    assert_allclose(np.abs(scaled[:, 0]).max(), s)
    assert_allclose(np.abs(scaled[:, 1]).max(), s / 2)


# ---------------------------------------------------------------------------
# feature groups


def test_group_spec_validation():
    with pytest.raises(errors.ConfigError):
        GroupSpec(columns=(), kernel=KernelSpec("gaussian", 1.0))
    with pytest.raises(errors.ConfigError):
        GroupSpec(columns=(0, 0), kernel=KernelSpec("gaussian", 1.0))
    with pytest.raises(errors.ConfigError):
        GroupSpec(columns=(0,), kernel=KernelSpec("gaussian", 1.0), mode="torus")
    with pytest.raises(errors.ConfigError):
        GroupSpec(columns=(0, 1, 2, 3), kernel=KernelSpec("gaussian", 1.0),
                  mode="fastsum-box")


def test_grouping_requires_disjoint_columns():
    g1 = GroupSpec(columns=(0, 1), kernel=KernelSpec("gaussian", 1.0))
    g2 = GroupSpec(columns=(1, 2), kernel=KernelSpec("gaussian", 1.0))
    with pytest.raises(errors.ConfigError):
        GroupingSpec((g1, g2))


def test_fastsum_box_mode_sigma_in_original_units():
    # weights must equal K(|x_i - x_j| / sigma) with distances measured in
    # the raw feature units, whatever internal rescaling happens
    rng = np.random.default_rng(1)
    X = rng.uniform(0.0, 255.0, size=(40, 2))
    sigma = 40.0
    spec = GroupingSpec((GroupSpec(columns=(0, 1),
                                   kernel=KernelSpec("gaussian", sigma),
                                   mode="fastsum-box"),))
    layer = feature_group(X, spec).layers[0]
    diff = X[:, None, :] - X[None, :, :]
    K = np.exp(-(np.linalg.norm(diff, axis=2) / sigma) ** 2)
    np.fill_diagonal(K, 0.0)
    v = rng.standard_normal(40)
    got = apply_weight(layer, v)
    assert np.linalg.norm(got - K @ v) / np.linalg.norm(K @ v) < 1e-6


def test_unit_box_mode_sigma_in_normalized_units():
    # unit-box measures sigma after centering and scaling to [-1, 1]
    rng = np.random.default_rng(2)
    X = rng.uniform(-5.0, 7.0, size=(35, 2))
    sigma = 0.8
    spec = GroupingSpec((GroupSpec(columns=(0, 1),
                                   kernel=KernelSpec("gaussian", sigma),
                                   mode="unit-box"),))
    layer = feature_group(X, spec).layers[0]
    mid = (X.max(axis=0) + X.min(axis=0)) / 2
    half = np.abs(X - mid).max()
    Xn = (X - mid) / half
    diff = Xn[:, None, :] - Xn[None, :, :]
    K = np.exp(-(np.linalg.norm(diff, axis=2) / sigma) ** 2)
    np.fill_diagonal(K, 0.0)
    v = rng.standard_normal(35)
    got = apply_weight(layer, v)
    assert np.linalg.norm(got - K @ v) / np.linalg.norm(K @ v) < 1e-6


def test_mode_none_keeps_raw_coordinates():
    rng = np.random.default_rng(3)
    X = rng.uniform(-0.1, 0.1, size=(20, 2))
    sigma = 0.05
    spec = GroupingSpec((GroupSpec(columns=(0, 1),
                                   kernel=KernelSpec("gaussian", sigma),
                                   mode="none"),))
    layer = feature_group(X, spec).layers[0]
    diff = X[:, None, :] - X[None, :, :]
    K = np.exp(-(np.linalg.norm(diff, axis=2) / sigma) ** 2)
    np.fill_diagonal(K, 0.0)
    v = rng.standard_normal(20)
    assert_allclose(apply_weight(layer, v), K @ v, atol=1e-10)


def test_feature_group_column_out_of_range():
    X = np.zeros((5, 2))
    spec = GroupingSpec((GroupSpec(columns=(0, 2),
                                   kernel=KernelSpec("gaussian", 1.0)),))
    with pytest.raises(errors.ConfigError):
        feature_group(X, spec)


def test_per_component_groups_have_no_cross_edges():
    rng = np.random.default_rng(4)
    X = rng.uniform(0.0, 10.0, size=(16, 1))
    comp = np.repeat([0, 1], 8)
    spec = GroupingSpec((GroupSpec(columns=(0,),
                                   kernel=KernelSpec("gaussian", 2.0),
                                   mode="fastsum-box", per_component=True),))
    layer = feature_group(X, spec, components=comp).layers[0]
    v = np.zeros(16)
    v[:8] = 1.0  # mass only in component 0
    out = apply_weight(layer, v)
    assert np.all(np.abs(out[8:]) < 1e-12)
    assert np.any(np.abs(out[:8]) > 1e-6)


# ---------------------------------------------------------------------------
# block models


def test_sbm_deterministic_per_seed():
    spec = noisy_pair_sbm()
    g1, t1 = sbm_generate(spec, (5, 0))
    g2, t2 = sbm_generate(spec, (5, 0))
    assert np.array_equal(t1, t2)
    for l1, l2 in zip(g1.layers, g2.layers):
        assert np.array_equal(l1.weights.materialize(), l2.weights.materialize())
    g3, _ = sbm_generate(spec, (5, 1))
    assert not np.array_equal(g1.layers[0].weights.materialize(),
                              g3.layers[0].weights.materialize())


def test_sbm_edge_counts_within_binomial_bands():
    # each probability block is a Bernoulli ensemble; check counts against
    # a 5 sigma band
    spec = noisy_pair_sbm(n_cluster=60)
    graph, truth = sbm_generate(spec, (6, 0))
    W = graph.layers[0].weights.materialize()
    same = truth[:, None] == truth[None, :]
    iu = np.triu_indices(120, 1)
    for mask, prob in ((same, 0.7), (~same, 0.3)):
        trials = int(mask[iu].sum())
        count = W[iu][mask[iu]].sum()
        sd = np.sqrt(trials * prob * (1 - prob))
        assert abs(count - trials * prob) < 5 * sd


def test_sbm_extreme_probabilities_give_block_complete_graph():
    layer = SbmLayerSpec(p_in=1.0, p_out=0.0, partition=(0, 1))
    spec = SbmSpec(sizes=(4, 3), layers=(layer,))
    graph, truth = sbm_generate(spec, 0)
    W = graph.layers[0].weights.materialize()
    expected = np.zeros((7, 7))
    expected[:4, :4] = 1.0
    expected[4:, 4:] = 1.0
    np.fill_diagonal(expected, 0.0)
    assert_allclose(W, expected)
    assert truth.tolist() == [0, 0, 0, 0, 1, 1, 1]


def test_sbm_partition_merges_blocks():
    # partition (0, 1, 1) joins classes 1 and 2 into one dense block
    layer = SbmLayerSpec(p_in=1.0, p_out=0.0, partition=(0, 1, 1))
    spec = SbmSpec(sizes=(2, 2, 2), layers=(layer,))
    graph, _ = sbm_generate(spec, 0)
    W = graph.layers[0].weights.materialize()
    assert W[2, 4] == 1.0  # class 1 - class 2: same partition cell
    assert W[0, 2] == 0.0  # class 0 - class 1: different cells
    assert W[0, 1] == 1.0


def test_sbm_isolated_node_retry_exhaustion():
    layer = SbmLayerSpec(p_in=1e-9, p_out=1e-9, partition=(0, 1))
    spec = SbmSpec(sizes=(5, 5), layers=(layer,), max_retries=2)
    with pytest.raises(errors.NumericalError):
        sbm_generate(spec, 1)


def test_benchmark_specs_shape():
    spec = noisy_pair_sbm()
    assert spec.n == 100
    assert len(spec.layers) == 2
    assert spec.layers[0].partition == (0, 1)
    assert spec.layers[1].p_in == spec.layers[1].p_out == 0.5
    spec = complementary_sbm()
    assert spec.n == 150
    assert [l.partition for l in spec.layers] == [(0, 1, 1), (1, 0, 1), (1, 1, 0)]


# ---------------------------------------------------------------------------
# images


def test_image_to_features_enumerates_row_major():
    img = np.zeros((2, 2, 3), dtype=np.uint8)
    img[0, 0] = (10, 20, 30)
    img[0, 1] = (40, 50, 60)
    img[1, 0] = (70, 80, 90)
    img[1, 1] = (100, 110, 120)
    stack = image_to_features([img])
    assert_allclose(stack.rgb, [[10, 20, 30], [40, 50, 60],
                                [70, 80, 90], [100, 110, 120]])
    # xy is (column, row)
    assert_allclose(stack.xy, [[0, 0], [1, 0], [0, 1], [1, 1]])
    assert stack.components.tolist() == [0, 0, 0, 0]
    assert stack.shapes == ((2, 2),)


def test_image_stack_components_for_two_images():
    a = np.zeros((2, 2, 3), dtype=np.uint8)
    b = np.zeros((1, 3, 3), dtype=np.uint8)
    stack = image_to_features([a, b])
    assert stack.components.tolist() == [0, 0, 0, 0, 1, 1, 1]
    assert stack.shapes == ((2, 2), (1, 3))
    assert_allclose(stack.xy[4:], [[0, 0], [1, 0], [2, 0]])


def test_image_to_features_rejects_bad_arrays():
    with pytest.raises(errors.FormatError):
        image_to_features([np.zeros((2, 2), dtype=np.uint8)])
    with pytest.raises(errors.FormatError):
        image_to_features([np.zeros((2, 2, 3), dtype=float)])


def test_masks_round_trip():
    labels = np.array([0, 1, 1, 0, 2, 2, 2])
    shapes = ((2, 2), (1, 3))
    masks = masks_from_labels(labels, shapes)
    assert len(masks) == 2
    assert masks[0].shape == (2, 2)
    assert masks[0].tolist() == [[0, 1], [1, 0]]
    assert masks[1].tolist() == [[2, 2, 2]]


def test_image_png_round_trip(tmp_path):
    rng = np.random.default_rng(7)
    img = rng.integers(0, 256, size=(5, 4, 3), dtype=np.uint8)
    path = tmp_path / "img.png"
    save_image(path, img)
    back = load_image(path)
    assert np.array_equal(back, img)
    gray = rng.integers(0, 256, size=(3, 3), dtype=np.uint8)
    save_image(tmp_path / "gray.png", gray)


# ---------------------------------------------------------------------------
# label sampling


def test_sample_labels_per_class_count():
    truth = np.repeat([0, 1], 50)
    labels = sample_labels(truth, 0.04, 0)
    assert labels.m == 2
    ids = np.argmax(labels.F, axis=1)
    for cls in (0, 1):
        picked = labels.labeled_mask & (ids == cls)
        assert picked.sum() == 2
        assert np.all(truth[picked] == cls)


def test_sample_labels_fraction_one_labels_everything():
    truth = np.array([0, 1, 2, 0, 1, 2])
    labels = sample_labels(truth, 1.0, 0)
    assert labels.labeled_mask.all()


def test_sample_labels_tiny_fraction_keeps_one_per_class():
    truth = np.repeat([0, 1, 2], 100)
    labels = sample_labels(truth, 1e-6, 3)
    ids = np.argmax(labels.F[labels.labeled_mask], axis=1)
    assert sorted(set(ids.tolist())) == [0, 1, 2]


def test_sample_labels_deterministic_and_seed_sensitive():
    truth = np.repeat([0, 1], 200)
    a = sample_labels(truth, 0.05, (9, 1))
    b = sample_labels(truth, 0.05, (9, 1))
    assert np.array_equal(a.labeled_mask, b.labeled_mask)
    c = sample_labels(truth, 0.05, (9, 2))
    assert not np.array_equal(a.labeled_mask, c.labeled_mask)


# ---------------------------------------------------------------------------
# CSV formats


def test_features_csv_round_trip(tmp_path):
    path = tmp_path / "features.csv"
    path.write_text("f1,f2\n1.5,2.5\n-3.0,4.0\n")
    X = load_features_csv(path)
    assert_allclose(X, [[1.5, 2.5], [-3.0, 4.0]])
    path.write_text("1.5,2.5\n-3.0,4.0\n")  # headerless works too
    assert_allclose(load_features_csv(path), [[1.5, 2.5], [-3.0, 4.0]])


def test_features_csv_errors(tmp_path):
    path = tmp_path / "features.csv"
    path.write_text("1.0,2.0\n3.0\n")
    with pytest.raises(errors.FormatError, match=r"features\.csv:3|:2"):
        load_features_csv(path)
    path.write_text("")
    with pytest.raises(errors.FormatError):
        load_features_csv(path)


def test_labels_csv_one_based_with_zero_unlabeled(tmp_path):
    path = tmp_path / "labels.csv"
    path.write_text("2\n0\n1\n")
    ids = load_labels_csv(path)
    assert ids.tolist() == [1, -1, 0]
    with pytest.raises(errors.FormatError):
        load_labels_csv(path, n=5)  # wrong length
    path.write_text("1\n-3\n")
    with pytest.raises(errors.FormatError):
        load_labels_csv(path)


def test_write_predictions_exact_bytes(tmp_path):
    path = tmp_path / "pred.csv"
    write_predictions_csv(path, np.array([0, 2, 1]))
    assert path.read_text() == "node_id,class_id\n0,1\n1,3\n2,2\n"


def test_write_scores_parses_back(tmp_path):
    path = tmp_path / "scores.csv"
    scores = np.array([[0.25, 0.75], [1.0, 0.0]])
    write_scores_csv(path, scores)
    back = np.loadtxt(path, delimiter=",")
    assert_allclose(back, scores, rtol=1e-15)
