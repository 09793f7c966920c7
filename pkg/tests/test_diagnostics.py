"""
Tests for conserved quantities, energy identities and drag/lift
"""
import numpy as np
import pytest

from emacflow.models.state import History, State
from emacflow.services.assembly_service import AssemblyService
from emacflow.services.benchmark_service import gresho_velocity, manufactured_forcing
from emacflow.services.diagnostics_service import DiagnosticsService
from emacflow.services.space_service import interpolate
from emacflow.utils.exceptions import ConfigurationException, ParameterException, UsageException

CENTERED = (-0.5, 0.5, -0.5, 0.5)


@pytest.fixture
def diagnostics(assembler) -> DiagnosticsService:
    return DiagnosticsService(assembler)


@pytest.fixture
def centered_diagnostics(make_space) -> DiagnosticsService:
    return DiagnosticsService(AssemblyService(make_space(8, bounds=CENTERED)))


@pytest.fixture
def gresho_trajectory(make_solver, gresho_history):
    """Ten tightly converged steps of the inviscid Gresho vortex"""
    def factory(steps: int = 10, **options):
        options.setdefault("newton_abs_tol", 1e-12)
        options.setdefault("newton_rel_tol", 1e-10)
        space, solver = make_solver(8, **options)
        history = gresho_history(space)
        levels = [history.u_prev2, history.u_prev]
        records = [solver.initial_record(history)]
        for _ in range(steps):
            _, history, record = solver.advance(history)
            levels.append(history.u_prev)
            records.append(record)
        return solver, levels, records
    return factory


class TestConservedQuantities:
    """Test energy, momentum and angular momentum"""

    def test_energy(self, unit_space, diagnostics):
        """Test the energy of rest and of a unit translation"""
        e_x = interpolate(lambda x, y, t: (1.0, 0.0), 0.0, unit_space)

        assert diagnostics.kinetic_energy(np.zeros(unit_space.n_velocity)) == 0.0
        assert diagnostics.kinetic_energy(e_x) == pytest.approx(0.5, abs=1e-13)

    def test_momentum(self, unit_space, diagnostics):
        """Test the momentum of rest and of a unit translation"""
        e_x = interpolate(lambda x, y, t: (1.0, 0.0), 0.0, unit_space)

        assert diagnostics.momentum(np.zeros(unit_space.n_velocity)) == (0.0, 0.0)
        np.testing.assert_allclose(diagnostics.momentum(e_x), (1.0, 0.0), atol=1e-13)

    def test_gresho_momentum(self, centered_diagnostics):
        """Test the vortex carries no net momentum"""
        u = interpolate(gresho_velocity, 0.0, centered_diagnostics.space)

        np.testing.assert_allclose(centered_diagnostics.momentum(u), (0.0, 0.0), atol=1e-12)

    def test_rigid_rotation(self, centered_diagnostics):
        """Test the angular momentum of (-5y, 5x) on the centered square is -5/6"""
        u = interpolate(lambda x, y, t: (-5.0 * y, 5.0 * x), 0.0, centered_diagnostics.space)

        assert centered_diagnostics.angular_momentum(u) == pytest.approx(-5.0 / 6.0, abs=1e-12)

    def test_translation_angular_momentum(self, centered_diagnostics):
        """Test a translation has no angular momentum about the center"""
        u = interpolate(lambda x, y, t: (1.0, 0.0), 0.0, centered_diagnostics.space)

        assert centered_diagnostics.angular_momentum(u) == pytest.approx(0.0, abs=1e-13)

    def test_angular_momentum_changes_only_through_walls(self, make_solver, gresho_history):
        """Test each inviscid step changes angular momentum by the torque of the wall reactions"""
        space, solver = make_solver(8, filter_enabled=False, newton_abs_tol=1e-12, newton_rel_tol=1e-10)
        rotation = interpolate(lambda x, y, t: (y, -x), 0.0, space)
        nodes = space.boundary_nodes("all")
        walls = np.concatenate([2 * nodes, 2 * nodes + 1])
        dt = solver.config.dt
        history = gresho_history(space)

        for _ in range(5):
            step = solver.be_emac_step(history)
            r_u, _, _ = solver.residual(step.u_tilde, step.P, 0.0, history.u_prev, step.load)
            torque = float(r_u[walls] @ rotation[walls])
            state, next_history, _ = solver.advance(history)
            change = solver.diagnostics.angular_momentum(state.u) - solver.diagnostics.angular_momentum(history.u_prev)

            assert change == pytest.approx(dt * torque, abs=1e-10)
            history = next_history


class TestNorms:
    """Test the G-norm, the F-norm and the dissipation split"""

    def test_g_norm_examples(self, diagnostics, rng):
        """Test G(a, 0) = 3/2 |a|^2 and G(a, a) = 1/2 |a|^2"""
        a = rng.standard_normal(diagnostics.space.n_velocity)
        norm = diagnostics.norm_sq(a)

        assert diagnostics.g_norm_sq_pair(a, np.zeros_like(a)) == pytest.approx(1.5 * norm)
        assert diagnostics.g_norm_sq_pair(a, a) == pytest.approx(0.5 * norm)

    def test_g_norm_positive(self, diagnostics, rng):
        """Test the G-norm is positive for random pairs"""
        n = diagnostics.space.n_velocity
        for _ in range(10):
            assert diagnostics.g_norm_sq_pair(rng.standard_normal(n), rng.standard_normal(n)) > 0.0

    def test_f_norm(self, diagnostics, rng):
        """Test the F-norm is three times the L2 norm"""
        u = rng.standard_normal(diagnostics.space.n_velocity)

        assert diagnostics.f_norm_sq(np.zeros_like(u)) == 0.0
        assert diagnostics.f_norm_sq(u) == pytest.approx(3.0 * diagnostics.norm_sq(u))

    @pytest.mark.parametrize("seed", range(20))
    def test_filter_inner_product_identity(self, diagnostics, seed):
        """Test (3/2 a - 2b + c/2, 3/2 a - b + c/2) = G(a, b) - G(b, c) + 1/4 |a - 2b + c|_F^2"""
        rng = np.random.default_rng(seed)
        a, b, c = (rng.standard_normal(diagnostics.space.n_velocity) for _ in range(3))
        lhs = diagnostics.inner(1.5 * a - 2.0 * b + 0.5 * c, 1.5 * a - b + 0.5 * c)
        rhs = (
            diagnostics.g_norm_sq_pair(a, b)
            - diagnostics.g_norm_sq_pair(b, c)
            + 0.25 * diagnostics.f_norm_sq(a - 2.0 * b + c)
        )

        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12 * diagnostics.norm_sq(a))

    @pytest.mark.parametrize("seed", range(20))
    def test_g_norm_bounds(self, diagnostics, seed):
        """Test 3/4|a|^2 - 1/4|b|^2 <= G(a, b) <= 9/4|a|^2 + 5/4|b|^2"""
        rng = np.random.default_rng(seed)
        n = diagnostics.space.n_velocity
        a, b = rng.standard_normal(n), rng.uniform(-3.0, 3.0) * rng.standard_normal(n)
        g = diagnostics.g_norm_sq_pair(a, b)
        na, nb = diagnostics.norm_sq(a), diagnostics.norm_sq(b)

        assert 0.75 * na - 0.25 * nb <= g + 1e-12 * (na + nb)
        assert g <= 2.25 * na + 1.25 * nb + 1e-12 * (na + nb)

    @pytest.mark.parametrize("seed", range(20))
    def test_g_norm_equivalence(self, diagnostics, seed):
        """Test G(a, b) lies between the extreme eigenvalues of G times |a|^2 + |b|^2"""
        rng = np.random.default_rng(seed)
        n = diagnostics.space.n_velocity
        a, b = rng.standard_normal(n), rng.standard_normal(n)
        low, high = np.linalg.eigvalsh(np.array([[1.5, -0.75], [-0.75, 0.5]]))
        total = diagnostics.norm_sq(a) + diagnostics.norm_sq(b)
        g = diagnostics.g_norm_sq_pair(a, b)

        assert low == pytest.approx(1.0 - np.sqrt(0.8125))
        assert low * total <= g + 1e-12 * total
        assert g <= high * total + 1e-12 * total

    @pytest.mark.parametrize("filtered", [True, False])
    def test_constant_state_dissipation(self, diagnostics, rng, filtered):
        """Test a state frozen in time only dissipates physically"""
        u = rng.standard_normal(diagnostics.space.n_velocity)
        numerical, physical = diagnostics.dissipation_split(History.start(u), u, 0.01, 0.1, filtered)

        assert numerical == pytest.approx(0.0, abs=1e-14)
        assert physical == pytest.approx(0.01 * 0.1 * diagnostics.grad_norm_sq(u))

    def test_inviscid_dissipation(self, diagnostics, rng):
        """Test nu = 0 has no physical dissipation"""
        n = diagnostics.space.n_velocity
        history = History(u_prev=rng.standard_normal(n), u_prev2=rng.standard_normal(n), t=0.0)

        numerical, physical = diagnostics.dissipation_split(history, rng.standard_normal(n), 0.0, 0.1)
        assert physical == 0.0
        assert numerical > 0.0


class TestEnergyBalance:
    """Test the modified energy identity and the stability estimate"""

    def test_repeated_state(self, diagnostics, rng):
        """Test a repeated state balances exactly"""
        w = rng.standard_normal(diagnostics.space.n_velocity)

        assert diagnostics.energy_balance_residual([w, w, w, w], 0.0, 0.1) == pytest.approx(0.0, abs=1e-15)

    def test_needs_two_levels(self, diagnostics):
        """Test a single level is not a trajectory"""
        with pytest.raises(UsageException):
            diagnostics.energy_balance_residual([np.zeros(diagnostics.space.n_velocity)], 0.0, 0.1)

    def test_gresho_balance(self, gresho_trajectory):
        """Test the inviscid vortex satisfies the identity to solver accuracy"""
        solver, levels, records = gresho_trajectory()

        for record in records:
            assert abs(record.balance_residual) <= 1e-8
        offline = solver.diagnostics.energy_balance_residual(levels, 0.0, solver.config.dt)
        assert offline == pytest.approx(records[-1].balance_residual, abs=1e-12)

    def test_gresho_energy_decays(self, gresho_trajectory):
        """Test the filtered inviscid energy never grows"""
        _, _, records = gresho_trajectory()
        energies = [r.g_norm_sq for r in records]

        assert all(b <= a + 1e-10 for a, b in zip(energies, energies[1:]))
        assert all(r.num_diss >= 0.0 for r in records)
        assert all(r.phys_diss == 0.0 for r in records)

    def test_gresho_conserves_momentum(self, gresho_trajectory):
        """Test momentum stays at zero over the run"""
        _, _, records = gresho_trajectory()

        for record in records:
            assert abs(record.M1) < 1e-10
            assert abs(record.M2) < 1e-10

    def test_viscous_balance(self, gresho_trajectory):
        """Test the identity with viscous dissipation and a filtered first step"""
        solver, levels, records = gresho_trajectory(steps=6, nu=0.01, filter_first_step=True)

        assert abs(records[-1].balance_residual) <= 1e-8
        offline = solver.diagnostics.energy_balance_residual(
            levels, 0.01, solver.config.dt, filter_first_step=True
        )
        assert offline == pytest.approx(records[-1].balance_residual, abs=1e-12)

    def test_stability_bound(self, gresho_trajectory):
        """Test the stability estimate holds along a viscous run"""
        solver, levels, _ = gresho_trajectory(steps=6, nu=0.01)
        lhs, rhs = solver.diagnostics.stability_bound(levels, 0.01, solver.config.dt)

        assert 0.0 < lhs <= rhs

    @pytest.mark.parametrize("dt, steps", [(0.1, 10), (1.0, 2)])
    def test_stability_under_large_steps(self, make_solver, dt, steps):
        """Test the forced viscous problem stays bounded however large the step"""
        space, solver = make_solver(4, forcing=manufactured_forcing, nu=1.0, dt=dt, T=dt * steps)
        history = History.start(np.zeros(space.n_velocity))
        levels = [history.u_prev2, history.u_prev]
        for _ in range(steps):
            _, history, _ = solver.advance(history)
            levels.append(history.u_prev)

        energies = [solver.diagnostics.kinetic_energy(u) for u in levels]
        assert all(np.isfinite(energies))
        lhs, rhs = solver.diagnostics.stability_bound(levels, 1.0, dt, forcing=manufactured_forcing)
        assert lhs <= rhs

    def test_stability_bound_needs_viscosity(self, diagnostics):
        """Test the estimate is undefined without viscosity"""
        levels = [np.zeros(diagnostics.space.n_velocity)] * 3

        with pytest.raises(ParameterException):
            diagnostics.stability_bound(levels, 0.0, 0.1)

    def test_boundary_data_disables_balance(self, make_solver, gresho_history):
        """Test non-zero boundary data leaves the balance undefined"""
        space, solver = make_solver(4, bc={"all": lambda x, y, t: (0.0 * x + 0.1, 0.0 * y)})
        u0 = interpolate(lambda x, y, t: (0.1, 0.0), 0.0, space)
        _, _, record = solver.advance(History.start(u0))

        assert record.balance_residual is None


class TestDragLift:
    """Test the volume-integral drag and lift coefficients"""

    def test_rest(self, cylinder_diagnostics):
        """Test no flow and no pressure give no force"""
        space = cylinder_diagnostics.space
        state = State(u=np.zeros(space.n_velocity), P=np.zeros(space.n_pressure), t=0.0)

        assert cylinder_diagnostics.drag_lift(state, 1e-3, "cylinder") == (0.0, 0.0)

    def test_constant_pressure(self, cylinder_diagnostics):
        """Test a constant pressure exerts no net force on a closed body"""
        space = cylinder_diagnostics.space
        state = State(u=np.zeros(space.n_velocity), P=np.full(space.n_pressure, 3.0), t=0.0)
        drag, lift = cylinder_diagnostics.drag_lift(state, 1e-3, "cylinder")

        assert drag == pytest.approx(0.0, abs=1e-12)
        assert lift == pytest.approx(0.0, abs=1e-12)

    def test_missing_marker(self, diagnostics, unit_space):
        """Test drag on a marker the mesh lacks"""
        state = State(u=np.zeros(unit_space.n_velocity), P=np.zeros(unit_space.n_pressure), t=0.0)

        with pytest.raises(ConfigurationException):
            diagnostics.drag_lift(state, 1.0, "cylinder")
