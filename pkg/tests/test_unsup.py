"""Target-graph objectives: entropy-based IM, edge reconstruction,
contrastive NT-Xent. Each against hand values or brute-force oracles."""

import numpy as np
import pytest

from conftest import check_gradients, random_graph
from gdakit.autodiff import Tape
from gdakit.encoders import EncoderConfig, encode, init_params
from gdakit.errors import ConfigError, ShapeError, ValidationError
from gdakit.graph import SparseGraph
from gdakit.sparse import from_coo
from gdakit.unsup import (ProjectionParams, UnsupConfig, ae_loss, augment_mask,
                          cl_loss, im_loss, nt_xent, project,
                          sample_negative_pairs)


def nt_xent_oracle(z1: np.ndarray, z2: np.ndarray, tau: float) -> float:
    """Scalar-loop reference with the explicit sum over the 2n - 1 non-self
    rows in each anchor's denominator."""
    z = np.vstack([z1, z2]).astype(float)
    z = z / np.linalg.norm(z, axis=1, keepdims=True)
    n = z1.shape[0]
    big = 2 * n
    losses = []
    for a in range(big):
        pos = a + n if a < n else a - n
        num = np.exp(float(z[a] @ z[pos]) / tau)
        den = sum(np.exp(float(z[a] @ z[b]) / tau) for b in range(big) if b != a)
        losses.append(-np.log(num / den))
    return float(np.mean(losses))


# ---------------------------------------------------------------------------
# information maximization


def scalar_im(logits):
    tape = Tape()
    return im_loss(tape.leaf(logits)).item()


def test_im_uniform_rows_give_zero():
    assert scalar_im(np.zeros((5, 4))) == pytest.approx(0.0, abs=1e-12)


def test_im_minimum_on_confident_balanced_predictions():
    # one-hot rows covering classes evenly: mean entropy 0, marginal uniform
    big = 200.0
    logits = np.kron(np.eye(3), np.ones((4, 1))) * big
    assert scalar_im(logits) == pytest.approx(-np.log(3.0), abs=1e-12)


def test_im_zero_when_collapsed_to_one_class():
    logits = np.zeros((6, 3))
    logits[:, 1] = 200.0
    assert scalar_im(logits) == pytest.approx(0.0, abs=1e-12)


def test_im_bounds_and_shift_invariance(rng):
    c = 4
    bound = np.log(c)
    for _ in range(50):
        logits = rng.normal(size=(int(rng.integers(1, 10)), c)) * 3
        v = scalar_im(logits)
        assert -bound - 1e-12 <= v <= bound + 1e-12
        shifted = logits + rng.normal() * np.ones((1, c))
        assert scalar_im(shifted) == pytest.approx(v, abs=1e-12)


def test_im_gradients(rng):
    logits = rng.normal(size=(5, 3))
    check_gradients(lambda tape, lv: im_loss(lv["x"]), {"x": logits})


# ---------------------------------------------------------------------------
# autoencoder reconstruction


def two_path_graph():
    # undirected path 0-1 plus extra node 2 so non-adjacent pairs exist
    return SparseGraph(from_coo(3, 3, [0, 1], [1, 0]), np.zeros((3, 1)),
                       np.full(3, -1), 2, directed=False)


def test_ae_zero_embeddings_give_ln2(rng):
    g = two_path_graph()
    tape = Tape()
    z = tape.leaf(np.zeros((3, 4)))
    loss = ae_loss(z, g, neg_ratio=2, decoder_dropout=0.0, rng_drop=None,
                   rng_sample=rng, training=False)
    assert loss.item() == pytest.approx(np.log(2.0), abs=1e-12)


def test_ae_separated_pairs_hand_value(rng):
    # dots: positive slots (0,1), (1,0) both +10; every candidate negative
    # pair touches node 2 with dot exactly -10
    z_vals = np.array([[4.0, np.sqrt(6.0)],
                       [4.0, -np.sqrt(6.0)],
                       [-2.5, 0.0]])
    g = two_path_graph()
    tape = Tape()
    loss = ae_loss(tape.leaf(z_vals), g, neg_ratio=1, decoder_dropout=0.0,
                   rng_drop=None, rng_sample=rng, training=False)
    softplus10 = np.log1p(np.exp(-10.0))
    assert loss.item() == pytest.approx(softplus10, abs=1e-12)
    assert loss.item() < 1e-4


def test_ae_gradients_dropout_off(rng):
    g = random_graph(rng, 6, 2, 2, p=0.4)
    z = rng.normal(size=(6, 3))

    def build(tape, lv):
        return ae_loss(lv["z"], g, neg_ratio=1, decoder_dropout=0.0,
                       rng_drop=None, rng_sample=np.random.default_rng(17),
                       training=False)

    check_gradients(build, {"z": z})


def test_ae_rejects_edgeless_graph(rng):
    g = SparseGraph(from_coo(3, 3, [], []), np.zeros((3, 1)), np.full(3, -1),
                    2, directed=False)
    tape = Tape()
    with pytest.raises(ValidationError):
        ae_loss(tape.leaf(np.zeros((3, 2))), g, 1, 0.0, None, rng, training=False)


def test_ae_structure_aware_embeddings_score_better():
    # two cliques with orthogonal cluster codes reconstruct better than the
    # same codes randomly shuffled over nodes
    n_half = 5
    edges = [(i, j) for i in range(n_half) for j in range(i + 1, n_half)]
    edges += [(i + n_half, j + n_half) for i, j in edges]
    rows = [e[0] for e in edges] + [e[1] for e in edges]
    cols = [e[1] for e in edges] + [e[0] for e in edges]
    g = SparseGraph(from_coo(10, 10, rows, cols), np.zeros((10, 1)),
                    np.full(10, -1), 2, directed=False)
    codes = np.zeros((10, 2))
    codes[:n_half, 0] = 10.0
    codes[n_half:, 1] = 10.0

    def loss_of(z_vals, seed):
        tape = Tape()
        return ae_loss(tape.leaf(z_vals), g, 1, 0.0, None,
                       np.random.default_rng(seed), training=False).item()

    for seed in range(10):
        shuffled = codes[np.random.default_rng(seed).permutation(10)]
        assert loss_of(codes, seed) < loss_of(shuffled, seed)


def test_negative_sampler_avoids_edges_and_selfs(rng):
    g = random_graph(rng, 12, 2, 2, p=0.3)
    present = set(map(tuple, g.edge_pairs().tolist()))
    ni, nj = sample_negative_pairs(g, 500, rng)
    assert ni.shape == (500,)
    assert np.all(ni != nj)
    for a, b in zip(ni.tolist(), nj.tolist()):
        assert (a, b) not in present


def test_negative_sampler_deterministic_per_seed(rng):
    g = random_graph(rng, 10, 2, 2, p=0.3)
    a = sample_negative_pairs(g, 50, np.random.default_rng(3))
    b = sample_negative_pairs(g, 50, np.random.default_rng(3))
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


def test_negative_sampler_exhausted_graph_errors(rng):
    # 2-clique: every ordered non-self pair is an edge
    g = SparseGraph(from_coo(2, 2, [0, 1], [1, 0]), np.zeros((2, 1)),
                    np.full(2, -1), 2, directed=False)
    with pytest.raises(ValidationError):
        sample_negative_pairs(g, 1, rng)


# ---------------------------------------------------------------------------
# augmentation


def test_augment_mask_identity_at_zero(rng):
    x = rng.normal(size=(5, 8))
    np.testing.assert_array_equal(augment_mask(x, 0.0, rng), x)


def test_augment_mask_is_column_wise(rng):
    x = rng.normal(size=(20, 50)) + 5.0  # keep entries away from zero
    masked = augment_mask(x, 0.4, rng)
    zero_col = np.all(masked == 0.0, axis=0)
    kept_col = np.all(masked == x, axis=0)
    assert np.all(zero_col | kept_col)  # no partially masked column
    assert zero_col.any() and kept_col.any()


def test_augment_mask_survivor_fraction():
    x = np.ones((3, 1000))
    masked = augment_mask(x, 0.3, np.random.default_rng(0))
    kept = np.all(masked == 1.0, axis=0).sum()
    assert 650 <= kept <= 750


def test_augment_mask_streams_differ():
    x = np.ones((2, 200))
    a = augment_mask(x, 0.5, np.random.default_rng(1))
    b = augment_mask(x, 0.5, np.random.default_rng(2))
    assert not np.array_equal(a, b)


# ---------------------------------------------------------------------------
# NT-Xent


def test_nt_xent_two_pair_closed_form():
    # orthonormal pairs duplicated across views: each anchor has positive
    # similarity 1 and sees the 3 other rows with sims {1, 0, 0} minus the
    # positive, giving denominator e + 2 at tau = 1
    z = np.eye(2)
    tape = Tape()
    loss = nt_xent(tape.leaf(z), tape.leaf(z.copy()), 1.0)
    want = -np.log(np.e / (np.e + 2.0))
    assert loss.item() == pytest.approx(want, abs=1e-10)
    assert loss.item() == pytest.approx(nt_xent_oracle(z, z, 1.0), abs=1e-12)


def test_nt_xent_matches_oracle_on_random_inputs(rng):
    for _ in range(25):
        n = int(rng.integers(2, 7))
        p = int(rng.integers(2, 5))
        tau = float(rng.random() + 0.2)
        z1 = rng.normal(size=(n, p))
        z2 = rng.normal(size=(n, p))
        tape = Tape()
        got = nt_xent(tape.leaf(z1), tape.leaf(z2), tau).item()
        assert got == pytest.approx(nt_xent_oracle(z1, z2, tau), abs=1e-10)


def test_nt_xent_scale_invariance(rng):
    z1 = rng.normal(size=(4, 3))
    z2 = rng.normal(size=(4, 3))
    tape = Tape()
    a = nt_xent(tape.leaf(z1), tape.leaf(z2), 0.5).item()
    b = nt_xent(tape.leaf(z1 * 7.0), tape.leaf(z2 * 7.0), 0.5).item()
    assert a == pytest.approx(b, abs=1e-12)


def test_nt_xent_lower_when_positives_align():
    # same negatives geometry, positives either orthogonal or identical
    z1 = np.eye(4)[:2]
    far = np.eye(4)[2:]
    tape = Tape()
    misaligned = nt_xent(tape.leaf(z1), tape.leaf(far), 1.0).item()
    aligned = nt_xent(tape.leaf(z1), tape.leaf(z1.copy()), 1.0).item()
    assert aligned < misaligned


def test_nt_xent_zero_row_rejected():
    tape = Tape()
    z1 = tape.leaf(np.array([[1.0, 0.0], [0.0, 0.0]]))
    z2 = tape.leaf(np.eye(2))
    with pytest.raises(ValidationError):
        nt_xent(z1, z2, 1.0)


def test_nt_xent_needs_two_pairs(rng):
    tape = Tape()
    with pytest.raises(ShapeError):
        nt_xent(tape.leaf(np.ones((1, 2))), tape.leaf(np.ones((1, 2))), 1.0)


def test_nt_xent_gradients(rng):
    z1 = rng.normal(size=(3, 4))
    z2 = rng.normal(size=(3, 4))
    check_gradients(lambda tape, lv: nt_xent(lv["a"], lv["b"], 0.7),
                    {"a": z1, "b": z2})


# ---------------------------------------------------------------------------
# full contrastive objective


def cl_setup(rng, mask_prob=0.3):
    g = random_graph(rng, 8, 5, 2, p=0.4)
    cfg = EncoderConfig(aggregator="gcn", hops=1, hidden=6, dropout=0.0).bound(5, 2)
    params = init_params(cfg, rng)
    proj = ProjectionParams.init(6, 4, rng)
    ucfg = UnsupConfig(kind="cl", mask_prob=mask_prob, temperature=0.5, proj_dim=4)
    return g, cfg, params, proj, ucfg


def test_cl_no_masking_equals_duplicated_views(rng):
    g, cfg, params, proj, ucfg = cl_setup(rng, mask_prob=0.0)
    tape = Tape()
    pt = params.leafed(tape)
    ppt = {k: tape.leaf(v) for k, v in proj.arrays.items()}
    loss = cl_loss(tape, g, cfg, pt, ppt, ucfg, np.random.default_rng(0), None,
                   training=False)
    h = encode(tape, g, cfg, pt, training=False)
    z = project(h, ppt)
    direct = nt_xent(z, z, ucfg.temperature)
    assert loss.item() == pytest.approx(direct.item(), abs=1e-12)


def test_cl_deterministic_per_seed(rng):
    g, cfg, params, proj, ucfg = cl_setup(rng)

    def run(seed):
        tape = Tape()
        pt = params.leafed(tape)
        ppt = {k: tape.leaf(v) for k, v in proj.arrays.items()}
        return cl_loss(tape, g, cfg, pt, ppt, ucfg,
                       np.random.default_rng(seed), None, training=False).item()

    assert run(5) == run(5)
    assert run(5) != run(6)


def test_cl_gradients_reach_encoder_and_head(rng):
    g, cfg, params, proj, ucfg = cl_setup(rng)
    arrays = {**params.arrays, **proj.arrays}

    def build(tape, lv):
        return cl_loss(tape, g, cfg, lv, lv, ucfg, np.random.default_rng(11),
                       None, training=False)

    check_gradients(build, arrays)


def test_unsup_config_validation():
    with pytest.raises(ConfigError):
        UnsupConfig(kind="vae")
    with pytest.raises(ConfigError):
        UnsupConfig(beta=-1.0)
    with pytest.raises(ConfigError):
        UnsupConfig(kind="cl", temperature=0.0)
    with pytest.raises(ConfigError):
        UnsupConfig(kind="cl", mask_prob=1.0)
    with pytest.raises(ConfigError):
        UnsupConfig(kind="ae", neg_ratio=0)
