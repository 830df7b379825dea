"""Plate solver checks: patch tests, analytic benchmarks, structural laws."""

import numpy as np
import pytest

from helpers import (all_boundary_fixed, boundary_prescription, clamped_plate,
                     iso_shells, ssss_plate, uniform_pressure_case)
from oracles import navier_w_point, plate_rigidity
from plateopt import (BoundaryConditions, LaminateSpec, Layer, LoadCase,
                      MaterialError, MaterialSpec, MeshError, PlateOptError,
                      Rect, SingularSystemError, assemble, build_grid_mesh,
                      extract_w, laminate_stiffness, layer_stress_extrema,
                      solve, surface_strain)


class TestAssembly:
    def test_clamped_two_by_two_has_five_equations(self):
        system = clamped_plate(nex=2, es=50.0)
        assert system.n_equations == 5   # one interior node, all 5 DOFs

    def test_missing_shell_rejected(self):
        mesh = build_grid_mesh(100.0, 100.0, 50.0, default_laminate="plate")
        with pytest.raises(MaterialError, match="plate"):
            assemble(mesh, {"other": iso_shells()["plate"]},
                     all_boundary_fixed(mesh))

    def test_everything_constrained_rejected(self):
        mesh = build_grid_mesh(50.0, 50.0, 50.0)   # single element
        bcs = BoundaryConditions(
            fixed=((Rect(0, 50, 0, 50), {"u", "v", "w", "rx", "ry"}),))
        with pytest.raises(MeshError):
            assemble(mesh, iso_shells(name="default"), bcs)

    def test_unconstrained_system_reports_rigid_modes(self):
        mesh = build_grid_mesh(100.0, 100.0, 50.0, default_laminate="plate")
        with pytest.raises(SingularSystemError) as exc_info:
            assemble(mesh, iso_shells(), BoundaryConditions())
        err = exc_info.value
        assert err.mode_count is not None and err.mode_count >= 3
        assert "mode" in str(err)


class TestLoadCase:
    def test_duplicate_node_rejected(self):
        with pytest.raises(PlateOptError, match="duplicate"):
            LoadCase(((3, 1.0, "-z"), (3, 2.0, "-z")))

    def test_negative_magnitude_rejected(self):
        with pytest.raises(PlateOptError):
            LoadCase(((3, -1.0, "-z"),))

    def test_unknown_direction_rejected(self):
        with pytest.raises(PlateOptError):
            LoadCase(((3, 1.0, "x"),))

    def test_force_vector_signs(self):
        mesh = build_grid_mesh(50.0, 50.0, 50.0)
        down = LoadCase(((0, 10.0, "-z"),)).force_vector(mesh)
        up = LoadCase(((0, 10.0, "+z"),)).force_vector(mesh)
        assert down[2] == -10.0
        assert up[2] == 10.0
        assert np.count_nonzero(down) == 1

    def test_node_out_of_range(self):
        mesh = build_grid_mesh(50.0, 50.0, 50.0)
        with pytest.raises(MeshError):
            LoadCase(((99, 1.0, "-z"),)).force_vector(mesh)


class TestLinearity:
    def test_zero_load_zero_field(self):
        system = clamped_plate(nex=4)
        disp = solve(system, LoadCase(((12, 0.0, "-z"),)))
        assert np.all(disp.values == 0.0)

    def test_doubling_load_doubles_response(self):
        system = clamped_plate(nex=6)
        node = system.mesh.node_at(150.0, 150.0)
        d1 = solve(system, LoadCase(((node, 123.0, "-z"),)))
        d2 = solve(system, LoadCase(((node, 246.0, "-z"),)))
        scale = np.abs(d1.values).max()
        assert np.abs(d2.values - 2.0 * d1.values).max() <= 1e-12 * 2 * scale

    def test_superposition(self):
        system = clamped_plate(nex=6)
        na = system.mesh.node_at(100.0, 150.0)
        nb = system.mesh.node_at(200.0, 100.0)
        da = solve(system, LoadCase(((na, 40.0, "-z"),)))
        db = solve(system, LoadCase(((nb, 70.0, "-z"),)))
        dab = solve(system, LoadCase(((na, 40.0, "-z"), (nb, 70.0, "-z"))))
        scale = np.abs(dab.values).max()
        err = np.abs(dab.values - (da.values + db.values)).max()
        assert err <= 1e-12 * scale

    def test_maxwell_betti_reciprocity(self):
        system = clamped_plate(nex=8)
        rng = np.random.default_rng(3)
        free_w = np.where(~system.constrained[:, 2])[0]
        for _ in range(10):
            a, b = rng.choice(free_w, size=2, replace=False)
            wa = solve(system, LoadCase(((int(a), 1.0, "-z"),))).w
            wb = solve(system, LoadCase(((int(b), 1.0, "-z"),))).w
            scale = max(abs(wa[b]), abs(wb[a]))
            assert abs(wa[b] - wb[a]) <= 1e-9 * scale

    def test_symmetric_load_symmetric_field(self):
        # clamp the x edges only; mirror loads about the vertical centerline
        mesh = build_grid_mesh(400.0, 200.0, 50.0, default_laminate="plate")
        bcs = BoundaryConditions(fixed=(
            (Rect(0, 0, 0, 200), frozenset({"u", "v", "w", "rx", "ry"})),
            (Rect(400, 400, 0, 200), frozenset({"u", "v", "w", "rx", "ry"})),
        ))
        system = assemble(mesh, iso_shells(), bcs)
        na = mesh.node_at(100.0, 100.0)
        nb = mesh.node_at(300.0, 100.0)
        disp = solve(system, LoadCase(((na, 55.0, "-z"), (nb, 55.0, "-z"))))
        w = disp.w_grid()
        mirrored = w[:, ::-1]
        assert np.abs(w - mirrored).max() <= 1e-10 * np.abs(w).max()


class TestExtractW:
    def test_subset_and_all(self):
        system = clamped_plate(nex=4)
        node = system.mesh.node_at(100.0, 100.0)
        disp = solve(system, LoadCase(((node, 100.0, "-z"),)))
        all_w = extract_w(disp)
        assert all_w.shape == (system.mesh.n_nodes,)
        sub = extract_w(disp, [node])
        assert sub.shape == (1,)
        assert sub[0] == all_w[node]
        assert extract_w(disp, []).shape == (0,)

    def test_downward_load_negative_w(self):
        system = clamped_plate(nex=4)
        node = system.mesh.node_at(100.0, 100.0)
        disp = solve(system, LoadCase(((node, 100.0, "-z"),)))
        assert disp.w[node] < 0.0   # w is the +z displacement component


class TestPatchTests:
    """Prescribed boundary fields the element must reproduce exactly."""

    def setup_method(self):
        self.mesh = build_grid_mesh(200.0, 150.0, 50.0,
                                    default_laminate="plate")
        self.system = assemble(self.mesh, iso_shells(t=10.0),
                               all_boundary_fixed(self.mesh))

    def test_membrane_patch(self):
        a, b, c, d = 2e-4, 1e-4, -3e-4, 5e-5
        pres = boundary_prescription(
            self.mesh,
            fn_u=lambda x, y: a * x + b * y,
            fn_v=lambda x, y: c * x + d * y,
            fn_w=lambda x, y: 0.0, fn_rx=lambda x, y: 0.0,
            fn_ry=lambda x, y: 0.0)
        disp = self.system.solve_prescribed(None, pres)
        coords = self.mesh.node_coords()
        expect_u = a * coords[:, 0] + b * coords[:, 1]
        expect_v = c * coords[:, 0] + d * coords[:, 1]
        assert np.abs(disp.dof("u") - expect_u).max() <= 1e-12 * np.abs(expect_u).max()
        assert np.abs(disp.dof("v") - expect_v).max() <= 1e-12 * np.abs(expect_v).max()
        strains = surface_strain(self.system, disp, z=0.0)
        assert np.abs(strains.exx - a).max() <= 1e-12 * abs(a)
        assert np.abs(strains.eyy - d).max() <= 1e-11 * abs(a)
        # tensor shear = (du/dy + dv/dx) / 2
        assert np.abs(strains.exy - 0.5 * (b + c)).max() <= 1e-12 * abs(a)

    def test_bending_patch_constant_curvature(self):
        c1, c2, c3 = 4e-6, -2e-6, 1e-6
        w_fn = lambda x, y: c1 * x * x + c2 * x * y + c3 * y * y
        pres = boundary_prescription(
            self.mesh,
            fn_u=lambda x, y: 0.0, fn_v=lambda x, y: 0.0,
            fn_w=w_fn,
            fn_rx=lambda x, y: -(2 * c1 * x + c2 * y),
            fn_ry=lambda x, y: -(c2 * x + 2 * c3 * y))
        disp = self.system.solve_prescribed(None, pres)
        coords = self.mesh.node_coords()
        expect_w = w_fn(coords[:, 0], coords[:, 1])
        scale = np.abs(expect_w).max()
        assert np.abs(disp.w - expect_w).max() <= 1e-12 * scale
        # constant curvature -> linear-in-z strain, exact at every node
        z = 5.0
        strains = surface_strain(self.system, disp, z=z)
        ref = np.abs(2 * c1 * z)
        assert np.abs(strains.exx - (-2 * c1 * z)).max() <= 1e-10 * ref
        assert np.abs(strains.eyy - (-2 * c3 * z)).max() <= 1e-10 * ref
        assert np.abs(strains.exy - (-c2 * z)).max() <= 1e-10 * ref

    def test_rigid_motion_produces_no_strain(self):
        pres = boundary_prescription(
            self.mesh,
            fn_u=lambda x, y: 0.7, fn_v=lambda x, y: -0.3,
            fn_w=lambda x, y: 1.1 + 2e-3 * x - 1e-3 * y,
            fn_rx=lambda x, y: -2e-3, fn_ry=lambda x, y: 1e-3)
        disp = self.system.solve_prescribed(None, pres)
        for z in (0.0, 5.0, -5.0):
            strains = surface_strain(self.system, disp, z=z)
            for grid in (strains.exx, strains.eyy, strains.exy):
                assert np.abs(grid).max() <= 1e-15

    def test_cylindrical_bending_strain_profile(self):
        c = 1e-5
        pres = boundary_prescription(
            self.mesh,
            fn_u=lambda x, y: 0.0, fn_v=lambda x, y: 0.0,
            fn_w=lambda x, y: c * x * x,
            fn_rx=lambda x, y: -2 * c * x,
            fn_ry=lambda x, y: 0.0)
        disp = self.system.solve_prescribed(None, pres)
        h = 10.0
        for z in (h / 2, -h / 2, 2.5):
            strains = surface_strain(self.system, disp, z=z)
            expect = -2 * c * z
            assert np.abs(strains.exx - expect).max() <= 1e-3 * abs(expect)
        # midplane of the symmetric section: membrane strain vanishes
        mid = surface_strain(self.system, disp, z=0.0)
        assert np.abs(mid.exx).max() <= 1e-12 * (2 * c * h / 2)
        assert np.abs(mid.eyy).max() <= 1e-12 * (2 * c * h / 2)


class TestNavierBenchmark:
    def test_ssss_center_deflection(self):
        e, nu, t, q = 70000.0, 0.3, 10.0, 0.01
        system = ssss_plate(nex=16, width=1000.0, e=e, nu=nu, t=t)
        disp = solve(system, uniform_pressure_case(system.mesh, q))
        center = system.mesh.node_at(500.0, 500.0)
        w_fe = -disp.w[center]
        w_ref = navier_w_point(500.0, 500.0, 1000.0, 1000.0,
                               plate_rigidity(e, nu, t), q)
        assert w_fe == pytest.approx(w_ref, rel=0.04)


class TestStrainRecovery:
    def test_z_outside_laminate_rejected(self):
        system = clamped_plate(nex=4, t=10.0)
        disp = solve(system, LoadCase(((12, 10.0, "-z"),)))
        with pytest.raises(MaterialError):
            surface_strain(system, disp, z=5.1)
        surface_strain(system, disp, z=5.0)   # boundary itself is fine

    def test_scaled_field(self):
        system = clamped_plate(nex=4)
        node = system.mesh.node_at(100.0, 100.0)
        disp = solve(system, LoadCase(((node, 10.0, "-z"),)))
        strains = surface_strain(system, disp, z=5.0)
        doubled = strains.scaled(2.0)
        np.testing.assert_array_equal(doubled.exx, 2.0 * strains.exx)
        np.testing.assert_array_equal(doubled.exy, 2.0 * strains.exy)
        assert doubled.z == strains.z

    def test_strain_scales_with_load(self):
        system = clamped_plate(nex=6)
        node = system.mesh.node_at(150.0, 150.0)
        s1 = surface_strain(system, solve(
            system, LoadCase(((node, 10.0, "-z"),))), z=5.0)
        s2 = surface_strain(system, solve(
            system, LoadCase(((node, 30.0, "-z"),))), z=5.0)
        scale = np.abs(s1.exx).max()
        assert np.abs(s2.exx - 3.0 * s1.exx).max() <= 1e-12 * 3 * scale


class TestLayerStress:
    def test_cylindrical_bending_stress_value(self):
        mesh = build_grid_mesh(200.0, 150.0, 50.0, default_laminate="plate")
        e, nu, t = 70000.0, 0.3, 10.0
        system = assemble(mesh, iso_shells(e=e, nu=nu, t=t),
                          all_boundary_fixed(mesh))
        c = 1e-5
        pres = boundary_prescription(
            mesh, fn_u=lambda x, y: 0.0, fn_v=lambda x, y: 0.0,
            fn_w=lambda x, y: c * x * x,
            fn_rx=lambda x, y: -2 * c * x, fn_ry=lambda x, y: 0.0)
        disp = system.solve_prescribed(None, pres)
        extrema = layer_stress_extrema(system, disp)
        sigma = e / (1 - nu * nu) * 2 * c * (t / 2)
        assert extrema["iso"] == pytest.approx(sigma, rel=1e-9)

    def test_sandwich_skin_carries_more_than_core(self, demo_model,
                                                  demo_system):
        from plateopt import LoadCase as LC
        disp = solve(demo_system, LC(((180, 1885.0, "-z"),
                                      (490, 2705.0, "-z"))))
        extrema = layer_stress_extrema(demo_system, disp)
        assert extrema["aluminum"] > 10.0 * extrema["honeycomb"]
        assert set(extrema) == {"aluminum", "honeycomb", "steel"}
