"""Quick end-to-end check of the kto Python bindings.

Run after `pip install --no-build-isolation -e crates/python`:

    python crates/python/python/smoke_test.py
"""

import os
import tempfile

import numpy as np

import kto


def check_identity_toy():
    # Period-two sequence: at lag 2 each snapshot maps to itself.
    traj = kto.SnapshotSet(np.array([0.0, 1.0] * 6))
    dec = kto.fit(traj, kto.Kernel.gaussian(1.0), 1e-10, lag=2, num_eigs=2)
    lam = dec.eigenvalues
    assert lam.dtype == np.complex128
    # Both indicator functions are invariant, so 1 is a double eigenvalue.
    assert np.all(np.abs(lam - 1.0) < 1e-8), lam
    phi = dec.eigenfunction(1)
    assert abs(phi.eigenvalue - lam[0]) == 0.0
    assert dec.series(traj, [1, 2]).shape == (2, traj.count)


def check_round_trips():
    data = np.arange(24, dtype=float).reshape(4, 2, 3)
    s = kto.SnapshotSet(data, dt=0.5)
    assert s.shape == [2, 3] and s.count == 4 and s.dim == 6
    assert np.array_equal(s.to_numpy(), data)
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "s.kto")
        s.save(path)
        back = kto.SnapshotSet.load(path)
        assert back.content_hash() == s.content_hash()

        traj = kto.SnapshotSet(np.sin(np.linspace(0, 20, 200))[:, None])
        dec = kto.fit(traj, kto.Kernel.gaussian(0.5), 0.1, num_eigs=4)
        dec.save(os.path.join(d, "m.json"), os.path.join(d, "train.kto"))
        again = kto.EigenDecomposition.load(os.path.join(d, "m.json"))
        assert np.array_equal(again.eigenvalues, dec.eigenvalues)


def check_gradients():
    k = kto.Kernel.gaussian(0.7)
    x, y = [0.1, -0.4], [0.3, 0.2]
    h = 1e-5
    fd = [(k([x[0] + h, x[1]], y) - k([x[0] - h, x[1]], y)) / (2 * h),
          (k([x[0], x[1] + h], y) - k([x[0], x[1] - h], y)) / (2 * h)]
    assert np.allclose(k.grad(x, y), fd, rtol=1e-6)


def check_dmd_and_oracle():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(3, 3)) * 0.4
    states = [rng.normal(size=3)]
    for _ in range(30):
        states.append(a @ states[-1])
    r = kto.exact_dmd(kto.SnapshotSet(np.array(states)))
    truth = np.sort_complex(np.linalg.eigvals(a))
    assert np.allclose(np.sort_complex(r["eigenvalues"]), truth, atol=1e-8)

    x = kto.SnapshotSet(rng.normal(size=(8, 2)))
    y = kto.SnapshotSet(rng.normal(size=(8, 2)))
    oracle = kto.covariance_oracle(x, y, 2, 1.0, 0.1)
    dec = kto.fit_pairs(x, y, kto.Kernel.polynomial(2, 1.0), 0.8, num_eigs=8)
    big = oracle[np.abs(oracle) > 1e-6 * np.abs(oracle).max()]
    for lam in big:
        assert np.min(np.abs(dec.eigenvalues - lam)) < 1e-8 * abs(lam)


def check_synthetic_systems():
    traj, labels = kto.simulate(n_steps=20_000, store_stride=10)
    assert traj.count == 2000 and len(labels) == 2000
    dec = kto.fit(traj, kto.Kernel.gaussian(1.0), 0.1, lag=10, num_eigs=3, max_pairs=500)
    summary = dec.summarize([2], bounds=(-2.5, 2.5))
    assert summary[0]["min"]["value"] <= summary[0]["max"]["value"]
    events = dec.change_points(traj, [2])
    assert all(e["eigen_index"] == 2 for e in events)

    frames = kto.render_pendulum(n_frames=48)
    assert frames.shape == [64, 64] and frames.count == 48
    try:
        kto.Kernel.gaussian(-1.0)
    except kto.KtoError:
        pass
    else:
        raise AssertionError("negative bandwidth accepted")


if __name__ == "__main__":
    for check in [check_identity_toy, check_round_trips, check_gradients,
                  check_dmd_and_oracle, check_synthetic_systems]:
        check()
        print(f"ok  {check.__name__}")
    print("python smoke test passed")
