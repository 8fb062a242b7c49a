#include "activetherm/part.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <tuple>

#include "activetherm/errors.hpp"

namespace activetherm::part {

namespace {

// Evenly spaced points on the rectangle |x| = hx, |y| = hy, counter-clockwise
// from the (-hx, -hy) corner.
std::vector<Eigen::Vector2d> loop_points(double hx, double hy, std::size_t count) {
  const double perimeter = 4.0 * (hx + hy);
  std::vector<Eigen::Vector2d> out;
  out.reserve(count);
  for (std::size_t j = 0; j < count; ++j) {
    double s = perimeter * static_cast<double>(j) / static_cast<double>(count);
    if (s < 2.0 * hx) {
      out.emplace_back(-hx + s, -hy);
      continue;
    }
    s -= 2.0 * hx;
    if (s < 2.0 * hy) {
      out.emplace_back(hx, -hy + s);
      continue;
    }
    s -= 2.0 * hy;
    if (s < 2.0 * hx) {
      out.emplace_back(hx - s, hy);
      continue;
    }
    s -= 2.0 * hx;
    out.emplace_back(-hx, hy - s);
  }
  return out;
}

// Subdivision of [a, b] into pieces no longer than max_edge, endpoints kept.
void append_range(std::vector<double>& coords, double a, double b, double max_edge) {
  const auto pieces = std::max<long>(1, static_cast<long>(std::ceil((b - a) / max_edge - 1e-9)));
  for (long i = 0; i <= pieces; ++i) coords.push_back(a + (b - a) * static_cast<double>(i) / static_cast<double>(pieces));
}

std::vector<double> axis_coords(double outer, double pocket, bool has_pocket, double max_edge) {
  std::vector<double> c;
  if (has_pocket) {
    append_range(c, -outer / 2, -pocket / 2, max_edge);
    append_range(c, -pocket / 2, pocket / 2, max_edge);
    append_range(c, pocket / 2, outer / 2, max_edge);
  } else {
    append_range(c, -outer / 2, outer / 2, max_edge);
  }
  std::sort(c.begin(), c.end());
  c.erase(std::unique(c.begin(), c.end()), c.end());
  return c;
}

class MeshBuilder {
 public:
  std::size_t vertex(const Vec3& p) {
    const auto key = std::make_tuple(std::llround(p.x() * 1e6), std::llround(p.y() * 1e6), std::llround(p.z() * 1e6));
    const auto [it, inserted] = index_.try_emplace(key, verts_.size());
    if (inserted) verts_.push_back(p);
    return it->second;
  }

  void quad(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
    const std::size_t ia = vertex(a), ib = vertex(b), ic = vertex(c), id = vertex(d);
    faces_.push_back({ia, ib, ic});
    faces_.push_back({ia, ic, id});
  }

  geometry::TriMesh finish() {
    geometry::TriMesh mesh;
    mesh.vertices.resize(static_cast<Eigen::Index>(verts_.size()), 3);
    for (std::size_t i = 0; i < verts_.size(); ++i) mesh.vertices.row(static_cast<Eigen::Index>(i)) = verts_[i].transpose();
    mesh.faces = std::move(faces_);
    return mesh;
  }

 private:
  std::map<std::tuple<long long, long long, long long>, std::size_t> index_;
  std::vector<Vec3> verts_;
  std::vector<geometry::Face> faces_;
};

// Grid of quads on a wall that is constant in `axis` (0 = x, 1 = y).
void wall(MeshBuilder& mb, int axis, double at, const std::vector<double>& along, const std::vector<double>& zs,
          double lo, double hi) {
  for (std::size_t i = 0; i + 1 < along.size(); ++i) {
    if (along[i] < lo - 1e-9 || along[i + 1] > hi + 1e-9) continue;
    for (std::size_t k = 0; k + 1 < zs.size(); ++k) {
      auto p = [&](double s, double z) { return axis == 0 ? Vec3(at, s, z) : Vec3(s, at, z); };
      mb.quad(p(along[i], zs[k]), p(along[i + 1], zs[k]), p(along[i + 1], zs[k + 1]), p(along[i], zs[k + 1]));
    }
  }
}

}  // namespace

void RectPocketSpec::validate() const {
  if (!(outer_x > 0.0 && outer_y > 0.0)) throw InvalidArgument("part: outer dimensions must be positive");
  if (pocket_x < 0.0 || pocket_y < 0.0) throw InvalidArgument("part: pocket dimensions must be non-negative");
  if (pocket_x >= outer_x || pocket_y >= outer_y)
    throw InvalidArgument("part: pocket must be smaller than the outer rectangle");
  if (layers == 0) throw InvalidArgument("part: at least one layer is required");
  if (!(layer_height > 0.0)) throw InvalidArgument("part: layer height must be positive");
  if (beads_per_layer == 0) throw InvalidArgument("part: at least one bead per layer is required");
  if (!(point_spacing > 0.0)) throw InvalidArgument("part: point spacing must be positive");
  if (layer_interval_steps < 1) throw InvalidArgument("part: layer interval must be at least one step");
  if (first_activation_step < 0) throw InvalidArgument("part: first activation step must be >= 0");
  if (active_window == 0) throw InvalidArgument("part: active window must be positive");
  if (!std::isfinite(deposition_temp)) throw InvalidArgument("part: deposition temperature must be finite");
}

BeadPoints bead_points(const RectPocketSpec& spec, std::size_t refinement) {
  spec.validate();
  if (refinement == 0) throw InvalidArgument("part: refinement must be >= 1");
  const double r = static_cast<double>(refinement);
  const double wx = spec.bead_width_x();
  const double wy = spec.bead_width_y();

  std::vector<Vec3> pts;
  BeadPoints out;
  out.schedule.active_window = spec.active_window;
  for (std::size_t l = 0; l < spec.layers; ++l) {
    dynamics::Layer layer;
    layer.activation_step = spec.first_activation_step + static_cast<Step>(l) * spec.layer_interval_steps;
    layer.deposition_temp = spec.deposition_temp;
    for (std::size_t b = 0; b < spec.beads_per_layer; ++b) {
      for (std::size_t m = 0; m < refinement; ++m) {
        const double z = (static_cast<double>(l) + (static_cast<double>(m) + 0.5) / r) * spec.layer_height;
        for (std::size_t s = 0; s < refinement; ++s) {
          // Sub-line offset across the bead, in bead widths (0 for r = 1).
          const double across = (static_cast<double>(s) + 0.5) / r - 0.5;
          const double hx = spec.outer_x / 2 - (static_cast<double>(b) + 0.5 + across) * wx;
          const double hy = spec.outer_y / 2 - (static_cast<double>(b) + 0.5 + across) * wy;
          if (!(hx >= 0.0 && hy >= 0.0)) throw InvalidArgument("part: bead loop collapses; reduce beads per layer");
          const double perimeter = 4.0 * (hx + hy);
          const auto count = std::max<std::size_t>(
              4, static_cast<std::size_t>(std::llround(perimeter * r / spec.point_spacing)));
          for (const Eigen::Vector2d& q : loop_points(hx, hy, count)) {
            layer.point_ids.push_back(pts.size());
            pts.emplace_back(q.x(), q.y(), z);
            out.interior.push_back(b == spec.interior_bead);
          }
        }
      }
    }
    out.schedule.layers.push_back(std::move(layer));
  }
  out.positions.resize(static_cast<Eigen::Index>(pts.size()), 3);
  for (std::size_t i = 0; i < pts.size(); ++i) out.positions.row(static_cast<Eigen::Index>(i)) = pts[i].transpose();
  return out;
}

geometry::ControlPointSet control_points(const BeadPoints& beads) {
  geometry::ControlPointSet set;
  for (Eigen::Index i = 0; i < beads.positions.rows(); ++i)
    set.add_extra_point(beads.positions.row(i).transpose(), beads.interior[static_cast<std::size_t>(i)]);
  return set;
}

geometry::TriMesh build_mesh(const RectPocketSpec& spec, std::size_t layer_count, double max_edge) {
  spec.validate();
  if (layer_count == 0 || layer_count > spec.layers) throw InvalidArgument("part mesh: layer count out of range");
  if (!(max_edge > 0.0)) throw InvalidArgument("part mesh: max edge must be positive");
  const bool pocket = spec.has_pocket();
  const std::vector<double> xs = axis_coords(spec.outer_x, spec.pocket_x, pocket, max_edge);
  const std::vector<double> ys = axis_coords(spec.outer_y, spec.pocket_y, pocket, max_edge);
  std::vector<double> zs;
  append_range(zs, 0.0, static_cast<double>(layer_count) * spec.layer_height, max_edge);
  const double top = zs.back();
  const double ox = spec.outer_x / 2, oy = spec.outer_y / 2, px = spec.pocket_x / 2, py = spec.pocket_y / 2;
  const double inf = std::numeric_limits<double>::infinity();

  MeshBuilder mb;
  wall(mb, 0, -ox, ys, zs, -inf, inf);
  wall(mb, 0, ox, ys, zs, -inf, inf);
  wall(mb, 1, -oy, xs, zs, -inf, inf);
  wall(mb, 1, oy, xs, zs, -inf, inf);
  if (pocket) {
    wall(mb, 0, -px, ys, zs, -py, py);
    wall(mb, 0, px, ys, zs, -py, py);
    wall(mb, 1, -py, xs, zs, -px, px);
    wall(mb, 1, py, xs, zs, -px, px);
  }
  for (double z : {0.0, top}) {
    for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
      for (std::size_t j = 0; j + 1 < ys.size(); ++j) {
        const double cx = 0.5 * (xs[i] + xs[i + 1]), cy = 0.5 * (ys[j] + ys[j + 1]);
        if (pocket && std::abs(cx) < px && std::abs(cy) < py) continue;
        mb.quad(Vec3(xs[i], ys[j], z), Vec3(xs[i + 1], ys[j], z), Vec3(xs[i + 1], ys[j + 1], z),
                Vec3(xs[i], ys[j + 1], z));
      }
    }
  }
  return mb.finish();
}

LayeredMesh::LayeredMesh(std::vector<std::shared_ptr<const geometry::MeshRayCaster>> by_count)
    : by_count_(std::move(by_count)) {
  for (const auto& m : by_count_)
    if (!m) throw InvalidArgument("layered mesh: null entry");
}

LayeredMesh LayeredMesh::fixed(geometry::TriMesh mesh) {
  mesh.validate();
  return LayeredMesh({std::make_shared<const geometry::MeshRayCaster>(std::move(mesh))});
}

LayeredMesh LayeredMesh::for_part(const RectPocketSpec& spec, double max_edge) {
  std::vector<std::shared_ptr<const geometry::MeshRayCaster>> by_count;
  by_count.reserve(spec.layers + 1);
  for (std::size_t c = 1; c <= spec.layers; ++c)
    by_count.push_back(std::make_shared<const geometry::MeshRayCaster>(build_mesh(spec, c, max_edge)));
  // Before the first layer there is nothing to see; reuse the one-layer mesh.
  by_count.insert(by_count.begin(), by_count.front());
  return LayeredMesh(std::move(by_count));
}

const geometry::MeshRayCaster& LayeredMesh::at(std::size_t layers_activated) const {
  if (by_count_.empty()) throw InvalidArgument("layered mesh is empty");
  if (by_count_.size() == 1) return *by_count_.front();
  return *by_count_[std::min(layers_activated, by_count_.size() - 1)];
}

dynamics::DepositionSchedule schedule_by_height(const Points& points, std::size_t layers, Step interval,
                                                Step first_activation, double deposition_temp,
                                                std::size_t active_window) {
  if (points.rows() == 0) throw InvalidArgument("schedule: no points");
  if (layers == 0) throw InvalidArgument("schedule: at least one layer is required");
  if (interval < 1) throw InvalidArgument("schedule: layer interval must be at least one step");
  const double z0 = points.col(2).minCoeff();
  const double z1 = points.col(2).maxCoeff();
  const double band = (z1 - z0) / static_cast<double>(layers);
  std::vector<std::vector<PointId>> bands(layers);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    std::size_t b = band > 0.0 ? static_cast<std::size_t>((points(i, 2) - z0) / band) : 0;
    bands[std::min(b, layers - 1)].push_back(static_cast<PointId>(i));
  }
  dynamics::DepositionSchedule schedule;
  schedule.active_window = active_window;
  Step step = first_activation;
  for (auto& ids : bands) {
    if (ids.empty()) continue;
    dynamics::Layer layer;
    layer.point_ids = std::move(ids);
    layer.activation_step = step;
    layer.deposition_temp = deposition_temp;
    schedule.layers.push_back(std::move(layer));
    step += interval;
  }
  return schedule;
}

}  // namespace activetherm::part
