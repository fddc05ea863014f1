import math

import numpy as np
import pytest

from splatlab.depth import ConfigError, unfold
from splatlab.losses import patch_pearson_losses
from splatlab.priors import (
    MIN_COVERAGE,
    RECIPES,
    PriorModel,
    SceneRecipe,
    box_blur,
    camera_rig,
    coverage,
    dense_init,
    make_scene,
    simulate_prior,
    sparse_init,
    visible_counts,
)
from splatlab.rasterizer import render
from splatlab.trainer import LossConfig, TrainConfig, train

# quantiles (10 %, 50 %, 90 %) of per-patch r for view 0 of scene seed 0
# against a prior with noise 0.5 * std, 4 x 4 patches, noise seed 0
NOISY_PRIOR_R_QUANTILES = (-0.17791301916299743, 0.2870279879786832, 0.7787062827088747)


@pytest.fixture(scope="module")
def scene():
    return make_scene(SceneRecipe(), 0)


def test_same_seed_same_scene():
    a = make_scene(SceneRecipe(n_planes=3, n_train=3), 7)
    b = make_scene(SceneRecipe(n_planes=3, n_train=3), 7)
    assert a.cloud.to_bytes() == b.cloud.to_bytes()
    for x, y in zip(a.images + a.depths, b.images + b.depths):
        assert np.array_equal(x.numpy(), y.numpy())
    c = make_scene(SceneRecipe(), 8)
    assert c.cloud.to_bytes() != a.cloud.to_bytes()


@pytest.mark.parametrize(
    "bad",
    [dict(kind="teapot"), dict(n_train=0), dict(n_train=1, n_test=0), dict(resolution=8), dict(baseline=0.0)],
)
def test_recipe_errors(bad):
    with pytest.raises(ConfigError):
        SceneRecipe(**bad)


@pytest.mark.parametrize("kind", RECIPES)
def test_recipes_cover_the_frame(kind):
    s = make_scene(SceneRecipe(kind=kind), 1)
    assert coverage(s) >= MIN_COVERAGE
    for d, a in zip(s.depths, s.alphas):
        assert d.numpy()[a >= 0.5].std() > 0


def test_random_blobs_held_out_depth_varies():
    s = make_scene(SceneRecipe(kind="random-blobs", n_gaussians=500), 3)
    assert s.depths[s.test_ids[0]].numpy().std() > 0


def test_rig_holds_out_views_beyond_the_baseline():
    r = SceneRecipe(n_train=3, n_test=2, baseline=0.4, test_spread=2.5)
    cams, train_ids, test_ids = camera_rig(r)
    assert train_ids == [0, 1, 2] and test_ids == [3, 4]
    train_x = [cams[i].center[0] for i in train_ids]
    test_x = [cams[i].center[0] for i in test_ids]
    np.testing.assert_allclose(train_x, [-0.2, 0.0, 0.2], atol=1e-12)
    np.testing.assert_allclose(test_x, [-0.5, 0.5], atol=1e-12)


def test_ground_truth_is_self_consistent(scene):
    for cam, img in zip(scene.cameras, scene.images):
        assert np.array_equal(render(scene.cloud, cam).color.numpy(), img.numpy())


def test_identity_prior_is_exact(scene):
    d = scene.depths[0]
    assert np.array_equal(simulate_prior(d, PriorModel(), 0).numpy(), d.numpy())


def test_affine_prior_keeps_every_patch_pearson(scene):
    d = scene.depths[0].numpy()
    p = simulate_prior(d, PriorModel(a=2.0, b=5.0), 0).numpy()
    gr, gp = unfold(d, 4).patches.data, unfold(p, 4).patches.data
    live = gr.std(axis=1) > 1e-6
    same = patch_pearson_losses(gr[live], gr[live], 0.0).data
    losses = patch_pearson_losses(gr[live], gp[live], 0.0).data
    assert live.any()
    np.testing.assert_allclose(losses, same, atol=1e-9)


def test_noisy_prior_pearson_distribution(scene):
    d = scene.depths[0].numpy()
    p = simulate_prior(d, PriorModel(sigma_n_rel=0.5), 0).numpy()
    gr, gp = unfold(d, 4).patches.data, unfold(p, 4).patches.data
    r = np.array([np.corrcoef(a, b)[0, 1] for a, b in zip(gr, gp)])
    assert r.max() < 1.0
    np.testing.assert_allclose(np.quantile(r, [0.1, 0.5, 0.9]), NOISY_PRIOR_R_QUANTILES, rtol=1e-9)


def test_prior_noise_is_seeded(scene):
    m = PriorModel(a=2.0, b=1.0, sigma_n_rel=0.1)
    a = simulate_prior(scene.depths[0], m, 3).numpy()
    assert np.array_equal(a, simulate_prior(scene.depths[0], m, 3).numpy())
    assert not np.array_equal(a, simulate_prior(scene.depths[0], m, 4).numpy())
    resid = a - 2.0 * scene.depths[0].numpy() - 1.0
    assert resid.std() == pytest.approx(0.1 * scene.depths[0].numpy().std(), rel=0.15)


def test_box_blur_kernel():
    x = np.zeros((5, 5))
    x[2, 2] = 9.0
    out = box_blur(x, 1)
    np.testing.assert_allclose(out[1:4, 1:4], np.ones((3, 3)))
    assert out.sum() == pytest.approx(9.0)
    assert np.array_equal(box_blur(x, 0), x)


@pytest.mark.parametrize("bad", [dict(a=0.0), dict(a=-1.0), dict(sigma_n=-0.1), dict(radius=-1)])
def test_prior_model_errors(bad):
    with pytest.raises(ConfigError):
        PriorModel(**bad)


def test_dense_init_drop_count(scene):
    n = len(scene.cloud)
    assert len(dense_init(scene, 0.1, 0.99, 0)) == math.ceil(0.01 * n)
    assert len(dense_init(scene, 0.1, 0.0, 0)) == n
    with pytest.raises(ConfigError):
        dense_init(scene, 0.1, 1.0, 0)


def test_dense_init_resets_attributes_unless_kept(scene):
    plain = dense_init(scene, 0.0, 0.0, 0)
    np.testing.assert_array_equal(plain.means, scene.cloud.means)
    assert np.all(plain.colors == 0.5)
    assert not np.allclose(plain.log_scales, scene.cloud.log_scales)
    kept = dense_init(scene, 0.0, 0.0, 0, keep=("colors",))
    np.testing.assert_array_equal(kept.colors, scene.cloud.colors)
    with pytest.raises(ConfigError):
        dense_init(scene, 0.0, 0.0, 0, keep=("means",))


def test_dense_init_jitter_scale(scene):
    c = dense_init(scene, 0.3, 0.0, 5)
    assert (c.means - scene.cloud.means).std() == pytest.approx(0.3, rel=0.1)


def test_sparse_init_keeps_multi_view_points(scene):
    counts = visible_counts(scene, scene.cloud.means)
    sparse = sparse_init(scene, 0.0, 0, min_views=2)
    assert len(sparse) == int((counts >= 2).sum())
    assert len(sparse) < len(scene.cloud)


@pytest.mark.slow
def test_dense_init_beats_sparse_init():
    wins = 0
    cfg = TrainConfig(iterations=300, eval_every=300, loss=LossConfig(lambda_depth=0.0))
    for seed in range(5):
        s = make_scene(SceneRecipe(), seed)
        _, dense = train(s, dense_init(s, 0.05, 0.3, seed), cfg)
        _, sparse = train(s, sparse_init(s, 0.2, seed), cfg)
        wins += dense.final.psnr > sparse.final.psnr
    assert wins == 5
