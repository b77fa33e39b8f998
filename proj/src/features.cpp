#include "cha/features.hpp"

#include <algorithm>
#include <cmath>

namespace cha {

Image::Image(std::size_t w, std::size_t h, std::array<double, 3> fill) : width(w), height(h), rgb(w * h * 3) {
  for (std::size_t i = 0; i < w * h; ++i) std::copy(fill.begin(), fill.end(), rgb.begin() + i * 3);
}

void Image::set(std::size_t x, std::size_t y, std::array<double, 3> color) {
  std::copy(color.begin(), color.end(), rgb.begin() + (y * width + x) * 3);
}

BoundingBox BoundingBox::from_edges(double x0, double y0, double x1, double y1) {
  return {(x0 + x1) / 2, (y0 + y1) / 2, x1 - x0, y1 - y0};
}

BoundingBox BoundingBox::full_image(std::size_t width, std::size_t height) {
  return from_edges(0, 0, static_cast<double>(width), static_cast<double>(height));
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  const double iw = std::max(0.0, std::min(a.right(), b.right()) - std::max(a.left(), b.left()));
  const double ih = std::max(0.0, std::min(a.bottom(), b.bottom()) - std::max(a.top(), b.top()));
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

BoundingBox expand_patch(const BoundingBox& box, double k, std::size_t image_w, std::size_t image_h) {
  if (!(k > 0)) throw DomainError("expand_patch: scale factor must be positive, got " + std::to_string(k));
  const double w = box.w * k;
  const double h = box.h * k;
  const double W = static_cast<double>(image_w);
  const double H = static_cast<double>(image_h);
  BoundingBox out{box.cx, box.cy, w, h};
  if (out.left() < 0 || out.right() > W) {
    const double x0 = std::clamp(out.left(), 0.0, W), x1 = std::clamp(out.right(), 0.0, W);
    out.cx = (x0 + x1) / 2;
    out.w = x1 - x0;
  }
  if (out.top() < 0 || out.bottom() > H) {
    const double y0 = std::clamp(out.top(), 0.0, H), y1 = std::clamp(out.bottom(), 0.0, H);
    out.cy = (y0 + y1) / 2;
    out.h = y1 - y0;
  }
  return out;
}

std::vector<BoundingBox> top_n_boxes(std::span<const BoundingBox> boxes, std::size_t n, std::size_t image_w,
                                     std::size_t image_h) {
  std::vector<BoundingBox> sorted(boxes.begin(), boxes.end());
  std::sort(sorted.begin(), sorted.end(), [](const BoundingBox& a, const BoundingBox& b) {
    if (a.area() != b.area()) return a.area() > b.area();
    if (a.cx != b.cx) return a.cx < b.cx;
    if (a.cy != b.cy) return a.cy < b.cy;
    if (a.w != b.w) return a.w < b.w;
    return a.h < b.h;
  });
  if (sorted.size() > n) sorted.resize(n);
  if (sorted.empty()) sorted.push_back(BoundingBox::full_image(image_w, image_h));
  while (sorted.size() < n) sorted.push_back(sorted.back());
  return sorted;
}

std::string to_string(Level level) {
  switch (level) {
    case Level::object: return "object";
    case Level::patch: return "patch";
    case Level::global: return "global";
  }
  return "unknown";
}

RawDescriptor raw_descriptor(const Image& image, const BoundingBox& box) {
  const double W = static_cast<double>(image.width);
  const double H = static_cast<double>(image.height);
  // Pixel columns/rows whose centers lie in [left, right) x [top, bottom).
  auto first = [](double lo) { return static_cast<long>(std::ceil(lo - 0.5)); };
  auto last = [](double hi) { return static_cast<long>(std::ceil(hi - 0.5)) - 1; };
  long x0 = std::max(0L, first(box.left()));
  long x1 = std::min(static_cast<long>(image.width) - 1, last(box.right()));
  long y0 = std::max(0L, first(box.top()));
  long y1 = std::min(static_cast<long>(image.height) - 1, last(box.bottom()));
  if (x0 > x1 || y0 > y1) {
    x0 = x1 = std::clamp(static_cast<long>(std::floor(box.cx)), 0L, static_cast<long>(image.width) - 1);
    y0 = y1 = std::clamp(static_cast<long>(std::floor(box.cy)), 0L, static_cast<long>(image.height) - 1);
  }

  double sum[3] = {0, 0, 0};
  double gray_sum = 0, gray_sq = 0;
  std::size_t count = 0;
  for (long y = y0; y <= y1; ++y) {
    for (long x = x0; x <= x1; ++x) {
      double g = 0;
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = image.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), c);
        sum[c] += v;
        g += v;
      }
      g /= 3.0;
      gray_sum += g;
      gray_sq += g * g;
      ++count;
    }
  }
  const double inv = 1.0 / static_cast<double>(count);
  const double gray_mean = gray_sum * inv;
  const double var = std::max(0.0, gray_sq * inv - gray_mean * gray_mean);
  return {sum[0] * inv, sum[1] * inv, sum[2] * inv, std::sqrt(var), box.w / W, box.h / H, box.cx / W, box.cy / H,
          box.area() / (W * H)};
}

InstanceFeature extract_descriptor(const Image& image, const BoundingBox& box, const Tensor& projection,
                                   Level level) {
  if (projection.rank() != 2 || projection.rows() != kRawDescriptorSize)
    throw ShapeError("descriptor projection must be 9xd, got " + to_string(projection.shape()));
  const RawDescriptor raw = raw_descriptor(image, box);
  const std::size_t d = projection.cols();
  std::vector<double> v(d, 0.0);
  auto p = projection.data();
  for (std::size_t i = 0; i < kRawDescriptorSize; ++i)
    for (std::size_t j = 0; j < d; ++j) v[j] += raw[i] * p[i * d + j];
  return {level, std::move(v)};
}

Tensor FeatureStack::as_tensor() const {
  const std::size_t d = dim();
  std::vector<double> v;
  v.reserve(rows.size() * d);
  for (const auto& r : rows) v.insert(v.end(), r.vector.begin(), r.vector.end());
  return Tensor::from({rows.size(), d}, std::move(v));
}

FeatureStack stack_features(std::span<const InstanceFeature> objects, std::span<const InstanceFeature> patches,
                            const InstanceFeature& global) {
  if (objects.size() != patches.size())
    throw ShapeError("stack_features: " + std::to_string(objects.size()) + " objects but " +
                     std::to_string(patches.size()) + " patches");
  const std::size_t d = global.vector.size();
  if (d == 0) throw ShapeError("stack_features: empty global feature");
  FeatureStack stack;
  stack.n = objects.size();
  auto push = [&](const InstanceFeature& f, Level level) {
    if (f.vector.size() != d)
      throw ShapeError("stack_features: feature of length " + std::to_string(f.vector.size()) + ", expected " +
                       std::to_string(d));
    stack.rows.push_back({level, f.vector});
  };
  for (const auto& f : objects) push(f, Level::object);
  for (const auto& f : patches) push(f, Level::patch);
  push(global, Level::global);
  return stack;
}

std::vector<std::string> slot_labels(std::size_t n) {
  std::vector<std::string> labels;
  for (std::size_t i = 1; i <= n; ++i) labels.push_back("obj" + std::to_string(i));
  for (std::size_t i = 1; i <= n; ++i) labels.push_back("patch" + std::to_string(i));
  labels.push_back("global");
  return labels;
}

SampleDescriptors describe_sample(const Image& image, std::span<const BoundingBox> boxes, std::size_t n, double k) {
  SampleDescriptors out;
  out.n = n;
  auto to_tensor = [](const std::vector<RawDescriptor>& rows) {
    std::vector<double> v;
    for (const auto& r : rows) v.insert(v.end(), r.begin(), r.end());
    return Tensor::from({rows.size(), kRawDescriptorSize}, std::move(v));
  };
  if (n > 0) {
    const auto top = top_n_boxes(boxes, n, image.width, image.height);
    std::vector<RawDescriptor> objs, patches;
    for (const auto& b : top) {
      objs.push_back(raw_descriptor(image, b));
      patches.push_back(raw_descriptor(image, expand_patch(b, k, image.width, image.height)));
    }
    out.objects = to_tensor(objs);
    out.patches = to_tensor(patches);
  }
  out.global = to_tensor({raw_descriptor(image, BoundingBox::full_image(image.width, image.height))});
  return out;
}

Tensor project_stack(const SampleDescriptors& raw, const Projections& proj) {
  if (raw.n == 0) return matmul(raw.global, proj.global);
  return concat_rows({matmul(raw.objects, proj.object), matmul(raw.patches, proj.patch), matmul(raw.global, proj.global)});
}

}  // namespace cha
