#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cha/tensor.hpp"

namespace cha {

// RGB raster with channel values in [0, 1], row-major, three values per pixel.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> rgb;

  Image() = default;
  Image(std::size_t w, std::size_t h, std::array<double, 3> fill = {0.0, 0.0, 0.0});

  double at(std::size_t x, std::size_t y, std::size_t channel) const { return rgb[(y * width + x) * 3 + channel]; }
  void set(std::size_t x, std::size_t y, std::array<double, 3> color);
};

// Axis-aligned box in pixel coordinates.
struct BoundingBox {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;

  double left() const { return cx - w / 2; }
  double right() const { return cx + w / 2; }
  double top() const { return cy - h / 2; }
  double bottom() const { return cy + h / 2; }
  double area() const { return w * h; }

  static BoundingBox from_edges(double x0, double y0, double x1, double y1);
  static BoundingBox full_image(std::size_t width, std::size_t height);

  bool operator==(const BoundingBox&) const = default;
};

double iou(const BoundingBox& a, const BoundingBox& b);

// Scales a box about its center by k, then clips each edge to the image.
// Clipping at a border can move the effective center and change the ratio.
BoundingBox expand_patch(const BoundingBox& box, double k, std::size_t image_w, std::size_t image_h);

// The n largest boxes by area (ties: smaller cx, then smaller cy). Short
// lists repeat their last box; an empty list yields the full-image box.
std::vector<BoundingBox> top_n_boxes(std::span<const BoundingBox> boxes, std::size_t n, std::size_t image_w,
                                     std::size_t image_h);

enum class Level { object, patch, global };

std::string to_string(Level level);

inline constexpr std::size_t kRawDescriptorSize = 9;
using RawDescriptor = std::array<double, kRawDescriptorSize>;

// [mean R, mean G, mean B, grayscale stddev, w/W, h/H, cx/W, cy/H, area ratio]
// over the pixels whose centers fall inside the box. A box covering no pixel
// center falls back to the single pixel nearest its center.
RawDescriptor raw_descriptor(const Image& image, const BoundingBox& box);

struct InstanceFeature {
  Level level = Level::object;
  std::vector<double> vector;
};

// Raw descriptor projected by a trainable kRawDescriptorSize×d map.
InstanceFeature extract_descriptor(const Image& image, const BoundingBox& box, const Tensor& projection,
                                   Level level);

// Multi-level stack: objects 1..n, patches 1..n, then the global feature.
struct FeatureStack {
  std::vector<InstanceFeature> rows;
  std::size_t n = 0;

  std::size_t dim() const { return rows.empty() ? 0 : rows.front().vector.size(); }
  Tensor as_tensor() const;
};

FeatureStack stack_features(std::span<const InstanceFeature> objects, std::span<const InstanceFeature> patches,
                            const InstanceFeature& global);

// Slot names in stack order: obj1..objn, patch1..patchn, global.
std::vector<std::string> slot_labels(std::size_t n);

// One trainable projection per level.
struct Projections {
  Tensor object;
  Tensor patch;
  Tensor global;
};

// Raw descriptors of one image, ready to be projected in-graph.
struct SampleDescriptors {
  std::size_t n = 0;
  Tensor objects;  // n×9
  Tensor patches;  // n×9
  Tensor global;   // 1×9
};

SampleDescriptors describe_sample(const Image& image, std::span<const BoundingBox> boxes, std::size_t n, double k);

// (2n+1)×d feature stack computed from raw descriptors, differentiable with
// respect to the projections.
Tensor project_stack(const SampleDescriptors& raw, const Projections& proj);

}  // namespace cha
