import math

import numpy as np
import pytest

from parkour.dynamics import (
    BatchState,
    DynamicsConfig,
    RobotState,
    detect_contacts,
    forward_vector,
    nominal_feet,
    reset,
    step,
    step_batch,
)
from parkour.errors import ConfigurationError, ContractViolation
from parkour.terrain import TerrainSpec, generate_terrain

from conftest import make_field

CFG = DynamicsConfig()


def airborne_state(pos, vel, yaw=0.0, pitch=0.0):
    pos = np.asarray(pos, dtype=np.float64)
    feet = nominal_feet(pos, yaw, pitch, CFG)
    return RobotState(
        base_pos=pos, base_vel=np.asarray(vel, dtype=np.float64),
        yaw=yaw, pitch=pitch, yaw_rate=0.0, pitch_rate=0.0,
        feet=feet, contacts=np.zeros(4, dtype=bool), time=0.0,
    )


class TestBallistic:
    def test_vz_integration(self, flat_field):
        hf, _ = flat_field
        st = airborne_state([2.0, 0.0, 3.0], [0.0, 0.0, 1.0])
        out = step(st, np.zeros(12), hf)
        assert out.base_vel[2] == pytest.approx(1.0 - 9.81 * 0.02, abs=1e-12)

    def test_horizontal_conserved(self, flat_field):
        hf, _ = flat_field
        st = airborne_state([2.0, 0.0, 3.0], [2.0, -0.3, 0.0])
        out = step(st, np.zeros(12), hf)
        assert out.base_vel[0] == 2.0
        assert out.base_vel[1] == -0.3

    def test_flight_matches_closed_form(self, flat_field):
        hf, _ = flat_field
        rng = np.random.default_rng(0)
        for _ in range(50):
            z0 = rng.uniform(2.0, 5.0)
            vz0 = rng.uniform(-1.0, 2.0)
            vx0 = rng.uniform(-2.0, 2.0)
            st = airborne_state([2.0, 0.0, z0], [vx0, 0.0, vz0])
            n = 10
            for _ in range(n):
                st = step(st, np.zeros(12), hf)
                if st.contacts.any():
                    break
            t = n * CFG.dt
            want = z0 + vz0 * t - 0.5 * 9.81 * t * t
            # semi-implicit Euler drifts at most one g*dt^2 per step
            assert abs(st.base_pos[2] - want) <= n * 9.81 * CFG.dt ** 2 + 1e-9
            assert st.base_vel[0] == vx0

    def test_nan_rejected(self, flat_field):
        hf, _ = flat_field
        st = airborne_state([0, 0, 1], [0, 0, np.nan])
        with pytest.raises(ContractViolation):
            step(st, np.zeros(12), hf)
        st = airborne_state([0, 0, 1], [0, 0, 0])
        with pytest.raises(ContractViolation):
            step(st, np.full(12, np.nan), hf)

    def test_dt_fixed(self, flat_field):
        hf, _ = flat_field
        st = airborne_state([0, 0, 1], [0, 0, 0])
        with pytest.raises(ConfigurationError):
            step(st, np.zeros(12), hf, dt=0.01)


class TestContact:
    def test_standing_equilibrium(self, flat_field):
        hf, course = flat_field
        st = reset(course, 0, 0, hf, randomize=False)
        z0 = st.base_pos[2]
        for _ in range(100):
            st = step(st, np.zeros(12), hf)
        assert abs(st.base_pos[2] - z0) <= CFG.contact_eps
        assert st.contacts.all()

    def test_energy_non_increasing_when_idle(self, flat_field):
        hf, course = flat_field
        rng = np.random.default_rng(3)
        for _ in range(20):
            st = reset(course, 0, rng, hf)
            st.base_vel[:] = rng.uniform(-1, 1, 3)
            ke = 0.5 * float(st.base_vel @ st.base_vel)
            for _ in range(30):
                if not st.contacts.any():
                    break
                st = step(st, np.zeros(12), hf)
                ke_new = 0.5 * float(st.base_vel @ st.base_vel)
                assert ke_new <= ke + 1e-12
                ke = ke_new

    def test_no_penetration(self):
        hf, course = generate_terrain(TerrainSpec("step", 0.8, 4))
        rng = np.random.default_rng(1)
        st = reset(course, 0, rng, hf)
        for _ in range(300):
            st = step(st, rng.uniform(-1, 1, 12), hf)
            ground = hf.height_at_batch(st.feet[:, 0], st.feet[:, 1])
            assert (st.feet[:, 2] >= ground - CFG.penetration_tol).all()

    def test_detect_contacts_examples(self, flat_field):
        hf, _ = flat_field
        st = airborne_state([1.0, 0.0, CFG.stance_height], [0, 0, 0])
        st.feet[:, 2] = 0.0
        assert detect_contacts(st, hf).all()
        st.feet[:, 2] = 0.1
        assert not detect_contacts(st, hf).any()

    def test_front_feet_on_step(self):
        h = np.zeros((200, 100))
        h[100:, :] = 0.5  # step at x = 2.5
        hf = make_field(h, origin=(0.0, -1.25))
        st = airborne_state([2.5, 0.0, 0.5 + CFG.stance_height], [0, 0, 0])
        st.feet = nominal_feet(st.base_pos, 0.0, 0.0, CFG)
        # front feet land on the platform, rear feet hang over low ground
        st.feet[:2, 2] = 0.5
        st.feet[2:, 2] = 0.3
        assert detect_contacts(st, hf).tolist() == [True, True, False, False]

    def test_wall_blocks_walking(self):
        h = np.zeros((200, 100))
        h[100:, :] = 0.4
        hf = make_field(h, origin=(0.0, -1.25))
        st = airborne_state([2.2, 0.0, CFG.stance_height], [0, 0, 0])
        st.feet[:, 2] = 0.0
        st.contacts[:] = True
        a = np.zeros(12)
        a[10] = 1.0  # push forward, never jump
        for _ in range(200):
            st = step(st, a, hf)
        assert st.base_pos[0] < 2.5  # never passes through the face
        assert st.base_pos[2] < 0.4


class TestJump:
    def test_jump_breaks_contact_and_lands(self, flat_field):
        hf, course = flat_field
        st = reset(course, 0, 0, hf, randomize=False)
        a = np.zeros(12)
        a[10] = 1.0
        a[11] = 1.0
        st = step(st, a, hf)
        assert st.base_vel[2] > 3.0
        zs = []
        for _ in range(60):
            st = step(st, np.zeros(12), hf)
            zs.append(st.base_pos[2])
        assert max(zs) > 0.7  # clears a tall obstacle
        assert st.contacts.all()  # back on the ground

    def test_jump_clears_half_meter_step(self):
        h = np.zeros((400, 100))
        h[200:, :] = 0.5  # platform from x = 5.0 on
        hf = make_field(h, origin=(0.0, -1.25))
        st = airborne_state([2.0, 0.0, CFG.stance_height], [0, 0, 0])
        st.feet[:, 2] = 0.0
        st.contacts[:] = True
        push = np.zeros(12)
        push[10] = 1.0
        for _ in range(200):  # run up to jumping distance
            if st.base_pos[0] >= 3.9:
                break
            st = step(st, push, hf)
        jump = push.copy()
        jump[11] = 1.0
        st = step(st, jump, hf)
        for _ in range(80):
            st = step(st, np.zeros(12), hf)
        assert st.base_pos[0] > 5.2
        assert st.base_pos[2] == pytest.approx(0.5 + CFG.stance_height, abs=0.05)


class TestReset:
    def test_nominal_spawn(self, flat_field):
        hf, course = flat_field
        st = reset(course, 0, 0, hf, randomize=False)
        assert st.base_pos[0] == pytest.approx(course.waypoints[0, 0])
        assert st.base_pos[1] == pytest.approx(course.waypoints[0, 1])
        assert st.yaw == 0.0
        assert st.base_pos[2] == pytest.approx(CFG.stance_height)

    def test_deterministic(self, flat_field):
        hf, course = flat_field
        a = reset(course, 0, 42, hf)
        b = reset(course, 0, 42, hf)
        assert np.array_equal(a.base_pos, b.base_pos)
        assert a.yaw == b.yaw

    def test_yaw_range(self, flat_field):
        hf, course = flat_field
        rng = np.random.default_rng(0)
        yaws = np.array([reset(course, 0, rng, hf).yaw for _ in range(10_000)])
        assert yaws.min() >= -CFG.reset_yaw_range
        assert yaws.max() <= CFG.reset_yaw_range
        assert yaws.max() > 0.28 and yaws.min() < -0.28  # actually spans the range

    def test_level_out_of_range(self, flat_field):
        hf, course = flat_field
        with pytest.raises(ConfigurationError):
            reset(course, 5, 0, hf)


class TestForwardVector:
    def test_examples(self):
        st = airborne_state([0, 0, 1], [0, 0, 0], yaw=0.0, pitch=0.0)
        assert np.allclose(forward_vector(st), [1, 0, 0])
        st.pitch = math.pi / 2
        assert np.allclose(forward_vector(st), [0, 0, -1], atol=1e-12)
        st.pitch = 0.0
        st.yaw = math.pi / 2
        assert np.allclose(forward_vector(st), [0, 1, 0], atol=1e-12)

    def test_unit_norm(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            st = airborne_state([0, 0, 1], [0, 0, 0],
                                yaw=rng.uniform(-4, 4), pitch=rng.uniform(-1.5, 1.5))
            assert abs(np.linalg.norm(forward_vector(st)) - 1.0) < 1e-12


class TestDeterminismAndBatch:
    def test_step_bit_identical(self, flat_field):
        hf, course = flat_field
        rng = np.random.default_rng(5)
        st = reset(course, 0, rng, hf)
        a = rng.uniform(-1, 1, 12)
        o1 = step(st.copy(), a, hf)
        o2 = step(st.copy(), a, hf)
        assert np.array_equal(o1.base_pos, o2.base_pos)
        assert np.array_equal(o1.base_vel, o2.base_vel)
        assert np.array_equal(o1.feet, o2.feet)

    def test_batch_matches_single(self, flat_field):
        hf, course = flat_field
        rng = np.random.default_rng(9)
        n = 8
        bs = BatchState.zeros(n)
        singles = []
        for i in range(n):
            st = reset(course, 0, rng, hf)
            st.base_vel[:] = rng.uniform(-1, 1, 3)
            singles.append(st)
            bs.pos[i] = st.base_pos
            bs.vel[i] = st.base_vel
            bs.yaw[i] = st.yaw
            bs.feet[i] = st.feet
            bs.contacts[i] = st.contacts
        actions = rng.uniform(-1, 1, (n, 12))
        out = step_batch(bs, actions, hf, CFG, np.ones(n), np.ones(n))
        for i in range(n):
            si = step(singles[i], actions[i], hf)
            assert np.array_equal(out.pos[i], si.base_pos)
            assert np.array_equal(out.vel[i], si.base_vel)
            assert np.array_equal(out.feet[i], si.feet)
            assert np.array_equal(out.contacts[i], si.contacts)
