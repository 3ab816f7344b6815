import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cfbench.cf import ALGORITHMS, CfRequest, compatible, generate, tree_oracle_cf
from cfbench.cf.base import CountingModel, PerturbationSearch, Projector, soft_threshold
from cfbench.cf.dice import dice_cf, dpp_diversity, dpp_gradient, hinge_yloss
from cfbench.cf.growing_spheres import growing_spheres_cf, sample_shell
from cfbench.cf.oracle import nearest_point_in_box
from cfbench.cf.prototype import _Objective, class_prototype, elastic_distance, prototype_cf
from cfbench.cf.watcher import watcher_cf, watcher_loss
from cfbench.metrics import l1_norm, l2_norm
from cfbench.models import DecisionTree

from .conftest import ThresholdModel, numerical_schema

# -- helpers --------------------------------------------------------------------------


def threshold_request(x=0.2, seed=3, budget=20_000):
    return CfRequest(np.array([x]), 1, numerical_schema(1), np.array([False]), budget=budget, seed=seed)


def requests(ds, model, n=5, seed=0):
    return [CfRequest.for_instance(ds.X[i], model, ds.schema, seed=seed + int(i))
            for i in ds.test_idx[:n]]


def stump():
    """Depth-1 tree on two features: class 1 iff x0 > 0.5."""
    return DecisionTree(feature=[0, -1, -1], threshold=[0.5, 0.0, 0.0], left=[1, -1, -1], right=[2, -1, -1],
                        counts=[[5, 5], [5, 0], [0, 5]], depth=[0, 1, 1], n_features=2)


def assert_valid(out, model, target):
    assert out.found
    for c in out.candidates:
        assert model.predict_class(c) == target


# -- shared plumbing -------------------------------------------------------------------

def test_soft_threshold_examples():
    np.testing.assert_allclose(soft_threshold(np.array([0.3, 0.9, -0.9]), 0.5), [0.0, 0.4, -0.4])


def test_counting_model_charges_and_stops(diabetes_models, diabetes):
    counter = CountingModel(diabetes_models["tree"], budget=20)
    counter.proba(diabetes.X[:3], 1)
    counter.gradient(diabetes.X[0], 1)
    assert counter.evaluations == 3 + 2 * diabetes.p
    from cfbench.cf.base import BudgetExhausted
    with pytest.raises(BudgetExhausted):
        counter.proba(diabetes.X[:10], 1)
    net = CountingModel(diabetes_models["neural"], budget=5)
    net.gradient(diabetes.X[0], 1)
    assert net.evaluations == 1


def test_projector_clips_snaps_and_freezes(german):
    x = german.X[0]
    req = CfRequest.for_instance(x, ThresholdModel(german.p), german.schema)
    project = Projector(req, frozen=german.schema.immutable_mask)
    z = project(x + np.random.default_rng(0).normal(0, 0.7, size=x.shape))
    lo, hi = req.bounds
    assert (z >= lo).all() and (z <= hi).all()
    for g in german.schema.categorical_groups:
        assert sorted(z[g]) == [0.0] * (len(g) - 1) + [1.0]
    np.testing.assert_array_equal(z[german.schema.immutable_mask], x[german.schema.immutable_mask])


def test_perturbation_sigma_doubles_then_resets():
    search = PerturbationSearch(np.random.default_rng(0), np.ones(2, dtype=bool))
    flat = lambda Z: np.ones(len(Z))
    z, loss, moved = search.step(np.zeros(2), 0.5, flat, lambda Z: Z)
    assert not moved and search.sigma == 2 * search.sigma0
    z, loss, moved = search.step(np.zeros(2), 2.0, flat, lambda Z: Z)
    assert moved and search.sigma == search.sigma0


def test_dispatcher(diabetes, german):
    assert set(ALGORITHMS) == {"watcher", "growing_spheres", "dice", "prototype"}
    assert compatible("watcher", diabetes) and not compatible("watcher", german)
    assert compatible("dice", german)
    with pytest.raises(ValueError):
        generate("lime", threshold_request(), ThresholdModel(), diabetes)


# -- Watcher ------------------------------------------------------------------------------

def test_watcher_identity_candidate_has_only_prediction_loss():
    for lam in (0.1, 1.0, 1000.0):
        assert watcher_loss(0.2, 0.0, lam) == pytest.approx(lam * 0.64)
        assert watcher_loss(0.2, 0.0, lam) > 0


def test_watcher_threshold_model_lands_on_boundary():
    out = watcher_cf(threshold_request(), ThresholdModel(), np.array([1.0]))
    assert out.found
    assert 0.5 < out.best[0] <= 0.5 + 1e-4
    assert out.info["within_epsilon"]


def test_watcher_changes_many_features_on_tree(diabetes, diabetes_models):
    tree = diabetes_models["tree"]
    spa = []
    for req in requests(diabetes, tree, 3):
        out = watcher_cf(req, tree, diabetes.mad)
        assert_valid(out, tree, req.y_target)
        spa.append(np.sum(np.abs(out.best - req.x) > 1e-9))
    assert np.mean(spa) >= 0.9 * diabetes.p


def test_watcher_rejects_mixed_schema(german, german_models):
    req = CfRequest.for_instance(german.X[0], german_models["tree"], german.schema)
    with pytest.raises(ValueError, match="numerical"):
        watcher_cf(req, german_models["tree"], german.mad)


# -- Growing Spheres ------------------------------------------------------------------------

def test_growing_spheres_returns_x_when_already_target():
    out = growing_spheres_cf(threshold_request(x=0.8), ThresholdModel())
    assert out.found
    np.testing.assert_array_equal(out.best, [0.8])


def test_growing_spheres_threshold_distance():
    for seed in range(5):
        out = growing_spheres_cf(threshold_request(seed=seed), ThresholdModel())
        d = l2_norm([0.2], out.best)
        # the hit comes from the shell [0.2, 0.4] around x, so the width is 0.2
        assert 0.3 < d <= 0.3 + 0.2


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 6), st.floats(0.01, 2.0))
def test_sample_shell_radii(seed, d, a):
    pts = sample_shell(np.random.default_rng(seed), np.zeros(d), a, 2 * a, 200)
    r = np.linalg.norm(pts, axis=1)
    assert (r >= a * (1 - 1e-12)).all() and (r <= 2 * a * (1 + 1e-12)).all()


def test_growing_spheres_is_sparse_on_tree(diabetes, diabetes_models):
    tree = diabetes_models["tree"]
    spa = []
    for req in requests(diabetes, tree, 5):
        out = growing_spheres_cf(req, tree)
        assert_valid(out, tree, req.y_target)
        spa.append(np.sum(np.abs(out.best - req.x) > 1e-9))
    assert np.mean(spa) <= 2.5


def test_growing_spheres_gamma_must_be_non_negative():
    with pytest.raises(ValueError):
        growing_spheres_cf(threshold_request(), ThresholdModel(), gamma=-1.0)


def test_tiny_budget_gives_not_found():
    out = growing_spheres_cf(threshold_request(budget=10), ThresholdModel())
    assert not out.found and out.candidates == []
    assert out.evaluations <= 10


# -- DiCE ------------------------------------------------------------------------------------

def test_dpp_examples():
    mad = np.ones(2)
    assert dpp_diversity([np.array([0.3, 0.4])], mad) == pytest.approx(1.0)
    assert dpp_diversity([np.array([0.3, 0.4])] * 2, mad) == pytest.approx(0.0, abs=1e-12)
    assert dpp_diversity([np.array([0.0, 0.0]), np.array([0.5, 0.5])], mad) == pytest.approx(0.75)


def test_dpp_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    mad = np.array([0.5, 1.0, 2.0])
    C = rng.random((4, 3))
    g = dpp_gradient(C, mad)
    h = 1e-6
    for i in range(4):
        for j in range(3):
            up, down = C.copy(), C.copy()
            up[i, j] += h
            down[i, j] -= h
            fd = (dpp_diversity(up, mad) - dpp_diversity(down, mad)) / (2 * h)
            assert g[i, j] == pytest.approx(fd, rel=1e-4, abs=1e-7)


def test_hinge_on_logit():
    assert hinge_yloss(0.5) == pytest.approx(1.0)
    assert hinge_yloss(0.99) == 0.0
    assert hinge_yloss(0.1) > 1.0


@pytest.mark.parametrize("kind", ["tree", "neural"])
def test_dice_freezes_immutables_and_is_valid(kind, diabetes, diabetes_models):
    model = diabetes_models[kind]
    mask = diabetes.schema.immutable_mask
    for req in requests(diabetes, model, 4):
        out = dice_cf(req, model, mad=diabetes.mad)
        assert_valid(out, model, req.y_target)
        assert len(out.candidates) == 4 or out.partial
        for c in out.candidates:
            assert np.array_equal(c[mask], req.x[mask])


def test_dice_single_candidate_and_bad_k(diabetes, diabetes_models):
    model = diabetes_models["neural"]
    req = requests(diabetes, model, 1)[0]
    assert len(dice_cf(req, model, k=1, mad=diabetes.mad).candidates) == 1
    with pytest.raises(ValueError):
        dice_cf(req, model, k=0, mad=diabetes.mad)


def test_dice_candidates_decode_to_legal_rows(german, german_models):
    model = german_models["neural"]
    for req in requests(german, model, 3):
        out = dice_cf(req, model, mad=german.mad)
        for c in out.candidates:
            for g in german.schema.categorical_groups:
                assert sorted(c[g]) == [0.0] * (len(g) - 1) + [1.0]
            german.decode(c)


# -- Prototype -------------------------------------------------------------------------------

@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, 8, elements=st.floats(-10, 10, allow_nan=False)))
def test_beta_zero_distance_is_l2(delta):
    assert abs(elastic_distance(delta, 0.0) - l2_norm(np.zeros(8), delta)) <= 1e-9


def test_elastic_distance_mixes_norms():
    d = np.array([3.0, -4.0])
    assert elastic_distance(d, 0.5) == pytest.approx(0.5 * 7 + 5)


def test_class_prototype_is_mean_of_nearest():
    train = np.array([[0.0], [1.0], [2.0], [10.0], [0.5]])
    labels = np.array([1, 1, 1, 1, 0])
    np.testing.assert_allclose(class_prototype(np.array([0.4]), train, labels, 1, k=2), [0.5])
    with pytest.raises(ValueError):
        class_prototype(np.array([0.0]), train, labels, 2)


def test_prototype_loss_at_flipped_prototype_is_prediction_term_only():
    x = np.array([0.8])
    counter = CountingModel(ThresholdModel(), 100)
    obj = _Objective(x, x.copy(), 2.0, 0.1, 0.1, counter, 1)
    assert obj(x) == pytest.approx(2.0 * obj.pred_loss(1.0))


@pytest.mark.parametrize("kind", ["tree", "neural"])
def test_prototype_valid_on_diabetes(kind, diabetes, diabetes_models):
    model = diabetes_models[kind]
    for req in requests(diabetes, model, 3):
        out = prototype_cf(req, model, train_matrix=diabetes.X_train)
        assert_valid(out, model, req.y_target)


def test_prototype_one_hot_integrity(german, german_models):
    model = german_models["tree"]
    for req in requests(german, model, 2):
        out = prototype_cf(req, model, train_matrix=german.X_train)
        for c in out.candidates:
            for g in german.schema.categorical_groups:
                assert sorted(c[g]) == [0.0] * (len(g) - 1) + [1.0]


def test_prototype_needs_training_rows(diabetes, diabetes_models):
    with pytest.raises(ValueError):
        prototype_cf(requests(diabetes, diabetes_models["tree"], 1)[0], diabetes_models["tree"])


# -- oracle -------------------------------------------------------------------------------

def test_oracle_inside_target_box_returns_x():
    x = np.array([0.9, 0.1])
    np.testing.assert_array_equal(tree_oracle_cf(stump(), x, 1), x)


def test_oracle_depth_one_clip():
    z = tree_oracle_cf(stump(), np.array([0.3, 0.7]), 1)
    assert z[0] == np.nextafter(0.5, 1.0) and z[1] == 0.7
    assert stump().predict_class(z) == 1


def test_oracle_errors():
    with pytest.raises(ValueError):
        tree_oracle_cf(stump(), np.array([0.3, 0.7]), 2)
    with pytest.raises(ValueError):
        tree_oracle_cf(stump(), np.array([0.3, 0.7]), 1, norm="linf")


def test_nearest_point_in_box_respects_open_lower_bound():
    z = nearest_point_in_box(np.array([0.0, 5.0]), np.array([0.5, -np.inf]), np.array([1.0, 2.0]))
    assert z[0] > 0.5 and z[1] == 2.0


@pytest.mark.parametrize("algorithm", ["growing_spheres", "dice", "prototype"])
def test_oracle_dominance(algorithm, diabetes, diabetes_models):
    tree = diabetes_models["tree"]
    for req in requests(diabetes, tree, 4):
        out = generate(algorithm, req, tree, diabetes)
        o2 = tree_oracle_cf(tree, req.x, req.y_target, "l2")
        o1 = tree_oracle_cf(tree, req.x, req.y_target, "l1")
        assert tree.predict_class(o2) == req.y_target
        for c in out.candidates:
            assert l2_norm(req.x, c) >= l2_norm(req.x, o2) - 1e-9
            assert l1_norm(req.x, c) >= l1_norm(req.x, o1) - 1e-9


# -- determinism ------------------------------------------------------------------------------

@pytest.mark.parametrize("algorithm", ALGORITHMS)
def test_same_request_same_outcome(algorithm, diabetes, diabetes_models):
    tree = diabetes_models["tree"]
    req = requests(diabetes, tree, 1, seed=42)[0]
    a, b = generate(algorithm, req, tree, diabetes), generate(algorithm, req, tree, diabetes)
    assert a.found == b.found
    assert len(a.candidates) == len(b.candidates)
    for u, v in zip(a.candidates, b.candidates):
        np.testing.assert_array_equal(u, v)
    assert a.evaluations == b.evaluations


def test_outcome_round_trip(diabetes, diabetes_models):
    from cfbench.cf import CounterfactualOutcome
    out = generate("dice", requests(diabetes, diabetes_models["tree"], 1)[0], diabetes_models["tree"], diabetes)
    back = CounterfactualOutcome.from_dict(out.to_dict())
    assert back.found == out.found and back.info == out.info
    for u, v in zip(back.candidates, out.candidates):
        np.testing.assert_array_equal(u, v)
