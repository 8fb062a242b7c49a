#pragma once

#include <cstddef>
#include <cstdint>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace activetherm {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// One point per row.
using Points = Eigen::Matrix<double, Eigen::Dynamic, 3>;

// Identifier of a control point (row of ControlPointSet::positions) or of a
// fine ground-truth point, depending on context.
using PointId = std::size_t;

using Step = std::int64_t;

}  // namespace activetherm
