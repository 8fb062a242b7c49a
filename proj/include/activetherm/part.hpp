#pragma once

#include <memory>
#include <vector>

#include "activetherm/dynamics.hpp"
#include "activetherm/geometry.hpp"
#include "activetherm/raycast.hpp"

namespace activetherm::part {

// Rectangular block with a concentric rectangular pocket through its full
// height, centred on the origin in x/y and built up from z = 0. Each layer is
// deposited as `beads_per_layer` concentric rectangular loops, outermost
// first. A zero pocket dimension means no pocket.
struct RectPocketSpec {
  double outer_x = 48.0;
  double outer_y = 36.0;
  double pocket_x = 24.0;
  double pocket_y = 12.0;
  std::size_t layers = 12;
  double layer_height = 3.0;
  std::size_t beads_per_layer = 3;
  double point_spacing = 4.0;  // along each bead loop
  Step layer_interval_steps = 400;
  Step first_activation_step = 0;
  double deposition_temp = 500.0;
  std::size_t active_window = 4;
  // Bead index (0 = outermost) whose points are interior; SIZE_MAX for none.
  std::size_t interior_bead = 1;

  void validate() const;

  double bead_width_x() const { return (outer_x - pocket_x) / (2.0 * static_cast<double>(beads_per_layer)); }
  double bead_width_y() const { return (outer_y - pocket_y) / (2.0 * static_cast<double>(beads_per_layer)); }
  bool has_pocket() const { return pocket_x > 0.0 && pocket_y > 0.0; }
};

// Points along the bead centrelines (optionally refined) with their layer
// schedule. Ids are layer-major, then bead, then position along the loop.
struct BeadPoints {
  Points positions;
  std::vector<bool> interior;
  dynamics::DepositionSchedule schedule;
};

// Refinement r places r sub-lines across each bead, r sub-levels in each
// layer and r times as many points along each loop. r = 1 reproduces the
// control points exactly (same positions, same ids).
BeadPoints bead_points(const RectPocketSpec& spec, std::size_t refinement = 1);

geometry::ControlPointSet control_points(const BeadPoints& beads);

// Closed surface of the first `layer_count` layers, triangulated on a grid no
// coarser than `max_edge` so that every face region carries vertices.
geometry::TriMesh build_mesh(const RectPocketSpec& spec, std::size_t layer_count, double max_edge = 2.0);

// Surface meshes indexed by the number of activated layers. A single entry is
// used for every count.
class LayeredMesh {
 public:
  LayeredMesh() = default;
  explicit LayeredMesh(std::vector<std::shared_ptr<const geometry::MeshRayCaster>> by_count);

  static LayeredMesh fixed(geometry::TriMesh mesh);
  static LayeredMesh for_part(const RectPocketSpec& spec, double max_edge = 2.0);

  const geometry::MeshRayCaster& at(std::size_t layers_activated) const;
  bool empty() const { return by_count_.empty(); }

 private:
  std::vector<std::shared_ptr<const geometry::MeshRayCaster>> by_count_;
};

// Layers for an arbitrary point set by slicing its z range into `layers`
// equal bands (lowest band first). Empty bands are dropped.
dynamics::DepositionSchedule schedule_by_height(const Points& points, std::size_t layers, Step interval,
                                                Step first_activation, double deposition_temp,
                                                std::size_t active_window);

}  // namespace activetherm::part
