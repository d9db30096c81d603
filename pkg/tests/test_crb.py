import numpy as np
import pytest

from wnsf.arx import estimate_arx
from wnsf.crb import (
    CrbResult,
    NonInformativeError,
    SpectrumModel,
    build_omega_matrix,
    compute_mcl,
    compute_mcr,
    mbar_limit,
    phi_z,
    rbar_matrix,
)
from wnsf.estimator import ModelOrders
from wnsf.lti import BjModel, Polynomial, RationalFilter
from wnsf.simulate import LoopConfig, generate_closed_loop

BJ_ORDERS = ModelOrders(2, 2, 1, 1)


@pytest.fixture
def closed_sm(bench_closed_cfg) -> SpectrumModel:
    return SpectrumModel.from_loop_config(bench_closed_cfg)


@pytest.fixture
def open_sm(bench_open_cfg) -> SpectrumModel:
    return SpectrumModel.from_loop_config(bench_open_cfg)


class TestPhiZ:
    def test_open_loop_white_input(self, bench_system):
        sm = SpectrumModel(system=bench_system,
                           controller=RationalFilter(Polynomial([0.0])),
                           reference_filter=RationalFilter(Polynomial([1.0])),
                           reference_gain=1.0, sigma2=0.25, loop_kind="open")
        P = phi_z(sm, np.array([0.3, 1.1]))
        assert np.allclose(P[:, 0, 0], 1.0)
        assert np.allclose(P[:, 1, 1], 0.25)
        assert np.allclose(P[:, 0, 1], 0.0)

    def test_zero_controller_closes_to_open(self, bench_system):
        kwargs = dict(system=bench_system,
                      controller=RationalFilter(Polynomial([0.0])),
                      reference_filter=RationalFilter(Polynomial([1.0])),
                      reference_gain=1.0, sigma2=1.0)
        omega = np.linspace(0.1, 3.0, 7)
        closed = phi_z(SpectrumModel(**kwargs, loop_kind="closed"), omega)
        opened = phi_z(SpectrumModel(**kwargs, loop_kind="open"), omega)
        assert np.max(np.abs(closed - opened)) < 1e-14

    def test_matches_averaged_periodogram(self, closed_sm, bench_system,
                                          unit_controller):
        N, seg = 2**17, 2048
        cfg = LoopConfig(system=bench_system, controller=unit_controller,
                         noise_std=1.0, N=N, seed=17)
        data = generate_closed_loop(cfg)
        blocks_u = data.u.reshape(-1, seg)
        blocks_e = data.e.reshape(-1, seg)
        U = np.fft.rfft(blocks_u, axis=1)
        E = np.fft.rfft(blocks_e, axis=1)
        phi_u_hat = np.mean(np.abs(U) ** 2, axis=0) / seg
        phi_ue_hat = np.mean(U * np.conj(E), axis=0) / seg
        omega = 2 * np.pi * np.arange(U.shape[1]) / seg
        keep = slice(1, U.shape[1] - 1)
        P = phi_z(closed_sm, omega[keep])
        # compare band-averaged levels (periodograms are noisy pointwise)
        assert np.mean(phi_u_hat[keep]) == pytest.approx(
            np.mean(P[:, 0, 0].real), rel=0.05)
        assert np.mean(phi_ue_hat[keep].real) == pytest.approx(
            np.mean(P[:, 0, 1].real), rel=0.05, abs=0.05)


class TestOmegaMatrix:
    def test_oe_orders_use_only_first_column(self, fast_oe_system):
        Om = build_omega_matrix(fast_oe_system, ModelOrders(3, 2),
                                np.array([0.5]))
        assert Om.shape == (5, 2, 1)
        assert np.all(Om[:, 1, :] == 0)

    def test_unit_filters_at_dc(self):
        sys = BjModel(L=Polynomial([0.0, 1.0]), F=Polynomial([1.0, 0.0]))
        Om = build_omega_matrix(sys, ModelOrders(1, 1), np.array([0.0]))
        # G = H = 1 at DC for this system: rows are [-G/(HF), 1/(HF)] x gamma
        assert Om[0, 0, 0] == pytest.approx(-1.0)
        assert Om[1, 0, 0] == pytest.approx(1.0)

    def test_gamma_alternates_at_pi(self, bench_system):
        Om = build_omega_matrix(bench_system, BJ_ORDERS, np.array([np.pi]))
        gamma_ratio = Om[1, 0, 0] / Om[0, 0, 0]
        assert gamma_ratio == pytest.approx(-1.0)


class TestComputeMcr:
    def test_closed_loop_trace(self, closed_sm):
        res = compute_mcr(closed_sm)
        assert isinstance(res, CrbResult)
        assert res.dyn_block_trace == pytest.approx(1.0259, abs=1e-3)

    def test_open_loop_trace(self, open_sm):
        res = compute_mcr(open_sm)
        assert res.dyn_block_trace == pytest.approx(1.9572, abs=1e-3)

    def test_symmetry_and_inverse(self, closed_sm):
        res = compute_mcr(closed_sm)
        assert np.max(np.abs(res.M - res.M.T)) < 1e-10
        assert np.max(np.abs(res.M @ res.M_inv - np.eye(6))) < 1e-8
        assert np.min(np.linalg.eigvalsh(res.M)) > 0

    def test_grid_refinement_converged(self, closed_sm):
        a = compute_mcr(closed_sm, grid_size=4096).M
        b = compute_mcr(closed_sm, grid_size=8192).M
        assert np.max(np.abs(a - b)) < 1e-8

    def test_non_informative_experiment_detected(self, bench_system):
        sm = SpectrumModel(system=bench_system,
                           controller=RationalFilter(Polynomial([0.0])),
                           reference_filter=RationalFilter(Polynomial([1.0])),
                           reference_gain=0.0, sigma2=1.0, loop_kind="open")
        with pytest.raises(NonInformativeError):
            compute_mcr(sm)

    def test_serialization(self, closed_sm):
        doc = compute_mcr(closed_sm, grid_size=512).to_json()
        assert len(doc["M"]) == 6 and len(doc["M"][0]) == 6
        assert doc["grid_size"] == 512


class TestComputeMcl:
    def test_open_equivalence_without_noise_feedback(self, bench_system,
                                                     unit_controller):
        # with no controller the reference-only bound equals the dynamic
        # block of the full information matrix with the noise term removed
        sm = SpectrumModel(system=bench_system,
                           controller=RationalFilter(Polynomial([0.0])),
                           reference_filter=RationalFilter(Polynomial([1.0])),
                           reference_gain=1.0, sigma2=1.0, loop_kind="closed")
        M_cl = compute_mcl(sm, grid_size=2048)
        sm0 = SpectrumModel(system=bench_system,
                            controller=sm.controller,
                            reference_filter=sm.reference_filter,
                            reference_gain=1.0, sigma2=0.0, loop_kind="closed")
        omega = np.linspace(0, np.pi, 2048)
        Om = build_omega_matrix(bench_system, BJ_ORDERS, omega)
        P0 = phi_z(sm0, omega)
        w = np.full(2048, omega[1] - omega[0])
        w[0] *= 0.5
        w[-1] *= 0.5
        OmP = np.einsum("iaw,wab->ibw", Om, P0)
        M0 = np.einsum("ibw,jbw,w->ij", OmP, np.conj(Om), w).real / np.pi
        assert np.max(np.abs(M_cl - M0[:4, :4])) < 1e-10

    def test_bound_dominates_cr_dynamic_block(self, closed_sm):
        M_cl = compute_mcl(closed_sm)
        full = compute_mcr(closed_sm)
        cov_cl = closed_sm.sigma2 * np.linalg.inv(M_cl)
        cov_cr = closed_sm.sigma2 * full.M_inv[:4, :4]
        assert np.min(np.linalg.eigvalsh(cov_cl - cov_cr)) > -1e-9

    def test_grid_refinement(self, closed_sm):
        a = compute_mcl(closed_sm, grid_size=4096)
        b = compute_mcl(closed_sm, grid_size=8192)
        assert np.max(np.abs(a - b)) < 1e-8

    def test_non_informative_reference(self, bench_system, unit_controller):
        sm = SpectrumModel(system=bench_system, controller=unit_controller,
                           reference_filter=RationalFilter(Polynomial([1.0])),
                           reference_gain=0.0, sigma2=1.0, loop_kind="closed")
        with pytest.raises(NonInformativeError):
            compute_mcl(sm)


class TestMbarLimit:
    def test_symmetric_positive_definite(self, closed_sm):
        M = mbar_limit(closed_sm, n=50, grid_size=2048)
        assert np.max(np.abs(M - M.T)) < 1e-10
        assert np.min(np.linalg.eigvalsh(M)) > 0

    def test_converges_to_cr_information(self, closed_sm):
        M_cr = compute_mcr(closed_sm).M
        err = [
            np.linalg.norm(mbar_limit(closed_sm, n=n) - M_cr)
            / np.linalg.norm(M_cr)
            for n in (50, 200)
        ]
        assert err[1] < err[0]
        assert err[1] < 1e-2

    def test_eta_covariance_matches_limit(self, bench_system,
                                          unit_controller, closed_sm):
        n, N, runs = 20, 40000, 500
        etas = np.empty((runs, 2 * n))
        for k in range(runs):
            cfg = LoopConfig(system=bench_system, controller=unit_controller,
                             noise_std=1.0, N=N, seed=1000 + k)
            etas[k] = estimate_arx(generate_closed_loop(cfg), n).eta
        emp = np.cov((etas - etas.mean(axis=0)).T) * N
        target = closed_sm.sigma2 * np.linalg.inv(rbar_matrix(closed_sm, n))
        rel = np.abs(np.diag(emp) - np.diag(target)) / np.diag(target)
        assert np.max(rel) < 0.25
