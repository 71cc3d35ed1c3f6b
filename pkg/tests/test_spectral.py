import numpy as np
import pytest
from hypothesis import given, strategies as st

from stochns.spectral import (
    BasisSpec,
    GridField,
    MalformedFieldError,
    SpectralField,
    apply_A_alpha,
    galerkin_project,
    grid_values,
    inner,
    leray_project,
    norm,
    random_solenoidal,
    read_snapshot,
    spectral_values,
    to_grid,
    to_spectral,
    write_snapshot,
)

seeds = st.integers(0, 2**32 - 1)


def single_mode(basis, k, amp):
    return SpectralField.from_modes(basis, {k: amp})


def raw_field(basis, rng):
    c = rng.standard_normal((3,) + basis.shape) + 1j * rng.standard_normal((3,) + basis.shape)
    c = (c + np.conj(c[:, ::-1, ::-1, ::-1])) / 2
    c[:, basis.K_max, basis.K_max, basis.K_max] = 0
    return c


def test_basis_invariants():
    with pytest.raises(ValueError):
        BasisSpec(0, 16)
    with pytest.raises(ValueError):
        BasisSpec(4, 9)
    b = BasisSpec(4, 16)
    assert b.mode_count == (9**3 - 1) // 2


def test_leray_kills_gradient(basis):
    K = basis.K_max
    raw = np.zeros((3,) + basis.shape, dtype=complex)
    k = np.array([1, 2, 0])
    raw[:, 1 + K, 2 + K, K] = k
    raw[:, -1 + K, -2 + K, K] = k
    assert np.max(np.abs(leray_project(basis, raw).coeff)) < 1e-15


def test_leray_orthogonal_split(basis):
    K = basis.K_max
    k = np.array([1.0, 2.0, 0.0])
    t = np.array([2.0, -1.0, 3.0])
    raw = np.zeros((3,) + basis.shape, dtype=complex)
    raw[:, 1 + K, 2 + K, K] = k + t
    raw[:, -1 + K, -2 + K, K] = k + t
    out = leray_project(basis, raw).coeff[:, 1 + K, 2 + K, K]
    np.testing.assert_allclose(out.real, t, atol=1e-15)


def test_leray_rejects_unreal(basis, rng):
    raw = rng.standard_normal((3,) + basis.shape) + 1j * rng.standard_normal((3,) + basis.shape)
    with pytest.raises(MalformedFieldError):
        leray_project(basis, raw)


def test_leray_fixed_point(basis, rng):
    u = random_solenoidal(basis, rng)
    assert np.array_equal(leray_project(basis, u.coeff).coeff, u.coeff)


@given(seeds)
def test_leray_idempotent_selfadjoint(seed):
    b = BasisSpec(3, 12)
    rng = np.random.default_rng(seed)
    a, c = raw_field(b, rng), raw_field(b, rng)
    pa = leray_project(b, a)
    np.testing.assert_allclose(leray_project(b, pa.coeff).coeff, pa.coeff, atol=1e-14)
    lhs = np.real(np.vdot(pa.coeff, c))
    rhs = np.real(np.vdot(a, leray_project(b, c).coeff))
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


def test_apply_A_examples(basis, rng):
    u = random_solenoidal(basis, rng)
    assert np.array_equal(apply_A_alpha(u, 0).coeff, u.coeff)
    e = single_mode(basis, (1, 0, 0), [0, 0.5, 0])
    assert np.array_equal(apply_A_alpha(e, 1).coeff, e.coeff)
    assert abs(norm(apply_A_alpha(u, 0.5)) - norm(u, "V")) <= 1e-14 * norm(u, "V")


@given(seeds, st.floats(-2, 2), st.floats(-2, 2))
def test_A_alpha_semigroup(seed, a, b_):
    b = BasisSpec(2, 8)
    u = random_solenoidal(b, np.random.default_rng(seed))
    lhs = apply_A_alpha(apply_A_alpha(u, a), b_).coeff
    rhs = apply_A_alpha(u, a + b_).coeff
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=0)


def test_norm_examples(basis, rng):
    e = single_mode(basis, (1, 1, 0), [0, 0, 1])
    e = SpectralField(basis, e.coeff / norm(e))
    assert norm(e, "V") == pytest.approx(np.sqrt(2), rel=1e-14)
    u = random_solenoidal(basis, rng)
    assert abs(norm(u, "Lq", q=2) - norm(u)) <= 1e-10 * norm(u)
    assert norm(u, "DA", alpha=0.5) == pytest.approx(norm(u, "V"), rel=1e-14)


@given(seeds)
def test_poincare_spectral(seed):
    u = random_solenoidal(BasisSpec(3, 12), np.random.default_rng(seed), 1.0, 0.1)
    assert norm(u, "V") ** 2 >= norm(u) ** 2 * (1 - 1e-14)


def test_galerkin_examples(basis, rng):
    u = random_solenoidal(basis, rng)
    assert np.array_equal(galerkin_project(u, basis.mode_count).coeff, u.coeff)
    with pytest.raises(ValueError):
        galerkin_project(u, 0)
    for N in range(1, basis.mode_count + 1, 7):
        p = galerkin_project(u, N)
        assert norm(p) <= norm(u)
        assert norm(p, "V") <= norm(u, "V")


def test_galerkin_order(basis):
    # first 3 pairs are the |k| = 1 modes, sorted lexicographically on the canonical half
    u = SpectralField(basis, np.where(basis.active, 1.0, 0.0)[None] * np.ones(3)[:, None, None, None] + 0j)
    kept = np.argwhere(np.abs(galerkin_project(u, 3).coeff[0]) > 0) - basis.K_max
    assert {tuple(int(x) for x in k) for k in kept} == {(0, 0, 1), (0, 0, -1), (0, 1, 0), (0, -1, 0), (1, 0, 0), (-1, 0, 0)}


@given(seeds, st.integers(1, 124))
def test_galerkin_idempotent(seed, N):
    b = BasisSpec(3, 12)
    u = random_solenoidal(b, np.random.default_rng(seed))
    p = galerkin_project(u, N)
    assert np.array_equal(galerkin_project(p, N).coeff, p.coeff)


def test_grid_roundtrip(basis, rng):
    z = SpectralField.zeros(basis)
    assert np.array_equal(to_spectral(to_grid(z)).coeff, z.coeff)
    e = single_mode(basis, (1, 2, 0), [2, -1, 0])
    np.testing.assert_allclose(to_spectral(to_grid(e)).coeff, e.coeff, atol=1e-15)
    full = BasisSpec(4, 16, 1.0)
    u = random_solenoidal(full, rng, 1.0, 0.05)
    back = to_spectral(to_grid(u)).coeff
    assert np.max(np.abs(back - u.coeff)) <= 1e-12 * np.max(np.abs(u.coeff))


@given(seeds)
def test_parseval(seed):
    b = BasisSpec(3, 12, 1.0)
    u = random_solenoidal(b, np.random.default_rng(seed), 1.0, 0.05)
    vals = to_grid(u).values
    assert abs(np.sqrt(np.mean(np.sum(vals**2, axis=0))) - norm(u)) <= 1e-10 * norm(u)


def test_two_thirds_products_exact(rng):
    """Products of modes within the 2/3 band, by transform vs. direct convolution."""
    b = BasisSpec(3, 8, 2.0 / 3.0)
    K = b.K_max
    u = random_solenoidal(b, rng, 1.0, 0.0)
    w = random_solenoidal(b, rng, 1.0, 0.0)
    u = SpectralField(b, u.coeff * b.dealias_mask)
    w = SpectralField(b, w.coeff * b.dealias_mask)
    prod = to_grid(u).values[0] * to_grid(w).values[1]
    got = spectral_values(prod, K) * b.dealias_mask
    # direct convolution oracle
    ref = np.zeros(b.shape, dtype=complex)
    idx = np.argwhere(b.dealias_mask)
    for p in idx:
        for q in idx:
            s = p + q - K
            if np.all(np.abs(s - K) <= K) and b.dealias_mask[tuple(s)]:
                ref[tuple(s)] += u.coeff[0][tuple(p)] * w.coeff[1][tuple(q)]
    assert np.max(np.abs(got - ref)) <= 1e-13 * np.max(np.abs(ref))


def test_to_spectral_shape_mismatch(basis):
    with pytest.raises(MalformedFieldError):
        to_spectral(GridField(basis, np.zeros((3, 8, 8, 8))))


def test_snapshot_roundtrip(basis, rng, tmp_path):
    u = random_solenoidal(basis, rng)
    write_snapshot(tmp_path / "u.snsf", u)
    raw = (tmp_path / "u.snsf").read_bytes()
    assert raw[:4] == b"SNSF"
    v = read_snapshot(tmp_path / "u.snsf", basis.M_grid, basis.dealias_fraction)
    assert np.array_equal(v.coeff, u.coeff)
    (tmp_path / "bad.snsf").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(MalformedFieldError):
        read_snapshot(tmp_path / "bad.snsf")


def test_grid_values_batch(basis, rng):
    u = random_solenoidal(basis, rng)
    stacked = np.stack([u.coeff, 2 * u.coeff])
    vals = grid_values(stacked, basis.K_max, basis.M_grid)
    np.testing.assert_allclose(vals[1], 2 * vals[0], atol=1e-14)
    assert inner(u, u) == pytest.approx(norm(u) ** 2)
