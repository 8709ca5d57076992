#pragma once

// Geodesic shooting: forward-Euler integration of EPDiff from an initial
// velocity, co-integrating the transform flow d phi/dt = -D phi . v, and the
// exact reverse-mode derivative of that discrete integrator.

#include <vector>

#include "sadir/grid.hpp"
#include "sadir/metric.hpp"

namespace sadir {

struct ShootingConfig {
    int steps = 10;
    // Keep per-step displacements so shoot_vjp does not have to re-integrate.
    bool store_trajectory = true;
};

struct GeodesicTrajectory {
    std::vector<VectorField> velocities;    // v(t_0) .. v(t_steps)
    std::vector<VectorField> displacements; // u(t_0) .. u(t_steps) when stored, else empty
    Transform transform;                    // phi at t = 1
};

// -K[(Dv)^T m + (Dm) v + m div v], m = L v.
VectorField epdiff_rhs(const FluidMetric &metric, const VectorField &v);

// Vector-Jacobian product of epdiff_rhs at v with cotangent g.
VectorField epdiff_rhs_vjp(const FluidMetric &metric, const VectorField &v, const VectorField &g);

// Throws DivergenceError (naming the step) when values become non-finite.
GeodesicTrajectory shoot(const FluidMetric &metric, const VectorField &v0, const ShootingConfig &cfg = {});

// Gradient w.r.t. v0 of <u(1), d_phi>, where phi(1) = id + u(1).
VectorField shoot_vjp(const FluidMetric &metric, const VectorField &v0, const ShootingConfig &cfg,
                      const VectorField &d_phi);
VectorField shoot_vjp(const FluidMetric &metric, const GeodesicTrajectory &traj, const VectorField &d_phi);

} // namespace sadir
