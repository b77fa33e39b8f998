#include <gtest/gtest.h>

#include <random>

#include "cha/features.hpp"

using namespace cha;

TEST(ExpandPatch, InteriorBoxDoubles) {
  BoundingBox b{128, 128, 40, 20};
  EXPECT_EQ(expand_patch(b, 2.0, 256, 256), (BoundingBox{128, 128, 80, 40}));
}

TEST(ExpandPatch, CornerBoxClipsPerEdge) {
  BoundingBox b{10, 10, 40, 40};
  EXPECT_EQ(expand_patch(b, 2.0, 256, 256), (BoundingBox{25, 25, 50, 50}));
}

TEST(ExpandPatch, UnitScaleIsIdentityOnInteriorBoxes) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 1000; ++i) {
    const double w = 1 + 100 * u(rng), h = 1 + 100 * u(rng);
    BoundingBox b{w / 2 + (256 - w) * u(rng), h / 2 + (256 - h) * u(rng), w, h};
    EXPECT_EQ(expand_patch(b, 1.0, 256, 256), b);
  }
}

TEST(ExpandPatch, ResultStaysInsideImage) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 64);
  for (int i = 0; i < 200; ++i) {
    BoundingBox p = expand_patch({u(rng), u(rng), 1 + u(rng), 1 + u(rng)}, 3.0, 64, 64);
    EXPECT_GE(p.left(), 0.0);
    EXPECT_GE(p.top(), 0.0);
    EXPECT_LE(p.right(), 64.0);
    EXPECT_LE(p.bottom(), 64.0);
  }
}

TEST(ExpandPatch, RejectsNonPositiveScale) {
  EXPECT_THROW(expand_patch({10, 10, 4, 4}, 0.0, 64, 64), DomainError);
  EXPECT_THROW(expand_patch({10, 10, 4, 4}, -1.0, 64, 64), DomainError);
}

TEST(Iou, HandCases) {
  BoundingBox a = BoundingBox::from_edges(0, 0, 10, 10);
  EXPECT_EQ(iou(a, a), 1.0);
  EXPECT_EQ(iou(a, BoundingBox::from_edges(20, 20, 30, 30)), 0.0);
  EXPECT_DOUBLE_EQ(iou(a, BoundingBox::from_edges(5, 0, 15, 10)), 50.0 / 150.0);
}

TEST(TopBoxes, SortsByAreaDescending) {
  std::vector<BoundingBox> boxes = {{10, 10, 2, 2}, {20, 20, 6, 6}, {30, 30, 4, 4}, {40, 40, 5, 5}, {50, 50, 3, 3}};
  auto top = top_n_boxes(boxes, 5, 64, 64);
  ASSERT_EQ(top.size(), 5u);
  for (std::size_t i = 1; i < top.size(); ++i) EXPECT_GE(top[i - 1].area(), top[i].area());
  EXPECT_EQ(top[0], boxes[1]);
}

TEST(TopBoxes, PadsWithLastBox) {
  std::vector<BoundingBox> boxes = {{10, 10, 2, 2}, {20, 20, 6, 6}};
  auto top = top_n_boxes(boxes, 5, 64, 64);
  std::vector<BoundingBox> expected = {boxes[1], boxes[0], boxes[0], boxes[0], boxes[0]};
  EXPECT_EQ(top, expected);
}

TEST(TopBoxes, EmptySceneUsesFullImage) {
  auto top = top_n_boxes({}, 3, 64, 48);
  ASSERT_EQ(top.size(), 3u);
  for (auto& b : top) EXPECT_EQ(b, BoundingBox::full_image(64, 48));
}

TEST(RawDescriptor, ConstantGrayImage) {
  Image img(16, 16, {0.5, 0.5, 0.5});
  RawDescriptor d = raw_descriptor(img, BoundingBox::full_image(16, 16));
  RawDescriptor expected = {0.5, 0.5, 0.5, 0.0, 1.0, 1.0, 0.5, 0.5, 1.0};
  EXPECT_EQ(d, expected);
  EXPECT_EQ(raw_descriptor(img, BoundingBox::full_image(16, 16)), d);
}

TEST(RawDescriptor, ZeroAreaBoxFallsBackToNearestPixel) {
  Image img(8, 8, {0.0, 0.0, 0.0});
  img.set(3, 4, {1.0, 0.5, 0.25});
  RawDescriptor d = raw_descriptor(img, {3.5, 4.5, 0.0, 0.0});
  EXPECT_EQ(d[0], 1.0);
  EXPECT_EQ(d[1], 0.5);
  EXPECT_EQ(d[2], 0.25);
  for (double x : d) EXPECT_TRUE(std::isfinite(x));
}

TEST(FeatureStack, RowCountsAndLabels) {
  Image img(32, 32, {0.2, 0.4, 0.6});
  Projections proj{Tensor::full({9, 4}, 0.1), Tensor::full({9, 4}, 0.2), Tensor::full({9, 4}, 0.3)};
  std::vector<BoundingBox> boxes = {{8, 8, 4, 4}};
  auto raw5 = describe_sample(img, boxes, 5, 2.0);
  EXPECT_EQ(project_stack(raw5, proj).shape(), (Shape{11, 4}));
  auto raw0 = describe_sample(img, boxes, 0, 2.0);
  EXPECT_EQ(project_stack(raw0, proj).shape(), (Shape{1, 4}));
  EXPECT_EQ(slot_labels(2), (std::vector<std::string>{"obj1", "obj2", "patch1", "patch2", "global"}));
}

TEST(FeatureStack, StackingOrderAndMismatch) {
  Image img(16, 16, {0.5, 0.5, 0.5});
  Tensor proj = Tensor::full({9, 3}, 1.0);
  auto o = extract_descriptor(img, {4, 4, 2, 2}, proj, Level::object);
  auto p = extract_descriptor(img, {4, 4, 4, 4}, proj, Level::patch);
  auto g = extract_descriptor(img, BoundingBox::full_image(16, 16), proj, Level::global);
  EXPECT_EQ(o.vector.size(), 3u);
  std::vector<InstanceFeature> objs = {o}, patches = {p};
  FeatureStack s = stack_features(objs, patches, g);
  ASSERT_EQ(s.rows.size(), 3u);
  EXPECT_EQ(s.rows[0].level, Level::object);
  EXPECT_EQ(s.rows[1].level, Level::patch);
  EXPECT_EQ(s.rows[2].level, Level::global);
  std::vector<InstanceFeature> none;
  EXPECT_THROW(stack_features(objs, none, g), ShapeError);
}
