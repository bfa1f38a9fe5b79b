import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cdad import autodiff as ad
from cdad import mgda
from cdad.autodiff import Parameter, SGDMomentum


def grid_min_objective(g1, g2, points=1001):
    alphas = np.linspace(0.0, 1.0, points)
    combos = alphas[:, None] * g1[None, :] + (1 - alphas)[:, None] * g2[None, :]
    return (combos**2).sum(axis=1).min()


class TestSolver:
    def test_orthogonal_pair(self):
        sol = mgda.solve_two_task(np.array([1.0, 0.0]), np.array([0.0, 1.0]))
        assert sol.alpha == pytest.approx(0.5)
        assert np.allclose(sol.direction, [0.5, 0.5])
        assert sol.objective == pytest.approx(0.5)

    def test_equal_gradients_tie_rule(self):
        g = np.array([1.0, 2.0])
        sol = mgda.solve_two_task(g, g)
        assert sol.alpha == 0.5
        assert sol.objective == pytest.approx(float(g @ g))

    def test_collinear_clamps_to_shorter(self):
        sol = mgda.solve_two_task(np.array([2.0, 0.0]), np.array([1.0, 0.0]))
        assert sol.alpha == 0.0
        assert np.allclose(sol.direction, [1.0, 0.0])
        assert sol.objective == pytest.approx(1.0)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            mgda.solve_two_task(np.zeros(2), np.zeros(3))

    @given(st.integers(0, 2**32 - 1), st.integers(2, 64))
    @settings(max_examples=60, deadline=None)
    def test_grid_oracle_and_pareto_descent(self, seed, dim):
        rng = np.random.default_rng(seed)
        g1 = rng.normal(0, rng.uniform(0.1, 10), dim)
        g2 = rng.normal(0, rng.uniform(0.1, 10), dim)
        sol = mgda.solve_two_task(g1, g2)
        assert 0.0 <= sol.alpha <= 1.0
        assert sol.objective <= grid_min_objective(g1, g2) + 1e-9
        assert sol.direction @ g1 >= sol.objective - 1e-9
        assert sol.direction @ g2 >= sol.objective - 1e-9

    def test_longer_gradient_loses(self):
        rng = np.random.default_rng(0)
        g2 = rng.normal(size=8)
        for c in (1.0, 1.5, 4.0):
            sol = mgda.solve_two_task(c * g2, g2)
            assert np.allclose(sol.direction, g2)


class TestApplyUpdates:
    def _setup(self):
        shared = [Parameter("s.w", np.zeros(3))]
        d_params = {
            "physical": [Parameter("p.w", np.zeros(2))],
            "network": [Parameter("n.w", np.zeros(2))],
        }
        shared_opt = SGDMomentum(shared, lr=0.5, momentum=0.0)
        domain_opts = {
            "physical": SGDMomentum(d_params["physical"], lr=0.1, momentum=0.0),
            "network": SGDMomentum(d_params["network"], lr=0.01, momentum=0.0),
        }
        return shared, d_params, shared_opt, domain_opts

    def test_alpha_one_moves_along_task1_only(self):
        shared, d_params, shared_opt, domain_opts = self._setup()
        g1 = np.array([1.0, 0.0, 0.0])
        sol = mgda.MgdaSolution(1.0, g1, 1.0)
        grads = {
            "physical": {"p.w": np.array([1.0, 0.0])},
            "network": {"n.w": np.array([0.0, 1.0])},
        }
        mgda.apply_updates(shared, grads, sol, shared_opt, domain_opts)
        assert np.allclose(shared[0].data, [-0.5, 0.0, 0.0])
        assert np.allclose(d_params["physical"][0].data, [-0.1, 0.0])
        assert np.allclose(d_params["network"][0].data, [0.0, -0.01])

    def test_zero_gradients_leave_parameters(self):
        shared, d_params, shared_opt, domain_opts = self._setup()
        sol = mgda.MgdaSolution(0.5, np.zeros(3), 0.0)
        grads = {d: {p.name: np.zeros_like(p.data) for p in ps} for d, ps in d_params.items()}
        mgda.apply_updates(shared, grads, sol, shared_opt, domain_opts)
        assert not shared[0].data.any()
        assert not d_params["physical"][0].data.any()


def make_training_setup(seed=0, n=5, T=80, w=3, static=None, domains=("physical", "network")):
    from cdad.ingest import DomainSeries, make_windows, split_train_validation
    from cdad.model import CrossDomainModel, ModelConfig

    rng = np.random.default_rng(seed)
    channels = {"physical": 1, "network": 3}
    channels = {d: channels[d] for d in domains}
    series = {
        d: DomainSeries(d, rng.random((n, channels[d], T)), np.zeros(T, dtype=np.int64))
        for d in domains
    }
    train, val = {}, {}
    for d in domains:
        ds = make_windows(series[d], w)
        train[d], val[d] = split_train_validation(ds, 0.1)
    model = CrossDomainModel(
        ModelConfig(num_nodes=n, window=w, embed_dim=4, dropout=0.2, head_hidden=8,
                    channels=channels, seed=seed)
    )
    A = {}
    arng = np.random.default_rng(123)
    for d in domains:
        M = (arng.random((n, n)) < 0.4).astype(float)
        M = np.maximum(M, M.T)
        np.fill_diagonal(M, 0)
        A[d] = M
    union = np.zeros((n, n))
    for a in A.values():
        union = np.maximum(union, a)
    cfg = mgda.TrainConfig(max_epochs=2, batch_size=16, static_weights=static)
    return model, train, val, A, union, cfg


class TestTraining:
    def test_smoke_losses_finite_and_recorded(self):
        model, train, val, A, union, cfg = make_training_setup()
        result = mgda.train(model, train, val, A, union, cfg)
        assert len(result.trace) > 0
        for row in result.trace:
            assert np.isfinite(row.loss_physical) and np.isfinite(row.loss_network)
            assert 0.0 <= row.alpha <= 1.0

    def test_static_weights_recorded(self):
        model, train, val, A, union, cfg = make_training_setup(static=(0.25, 0.75))
        result = mgda.train(model, train, val, A, union, cfg)
        assert all(row.alpha == 0.25 for row in result.trace)

    def test_determinism_bit_identical(self, tmp_path):
        states = []
        for _ in range(2):
            model, train, val, A, union, cfg = make_training_setup(seed=4)
            mgda.train(model, train, val, A, union, cfg)
            states.append({p.name: p.data.copy() for p in model.all_params()})
        for name in states[0]:
            assert np.array_equal(states[0][name], states[1][name]), name

    def test_single_domain_training(self):
        model, train, val, A, union, cfg = make_training_setup(domains=("physical",))
        result = mgda.train(model, train, val, A, union, cfg)
        assert all(row.alpha == 1.0 for row in result.trace)

    def test_trace_csv_format(self, tmp_path):
        model, train, val, A, union, cfg = make_training_setup()
        result = mgda.train(model, train, val, A, union, cfg)
        path = tmp_path / "trace.csv"
        mgda.write_trace(path, result.trace)
        lines = path.read_text().splitlines()
        assert lines[0] == "epoch,batch,L_phys,L_net,alpha,K"
        assert len(lines) == len(result.trace) + 1
