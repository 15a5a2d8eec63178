#pragma once

// Bundled starter graphs: small perception-style models covering image,
// sequence, feature and voxel inputs. The only temperature-sensitive
// operators they contain are low-precision convolutions and matmuls.

#include <vector>

#include "thermalfuzz/model_ir.hpp"

namespace thermalfuzz {

namespace detail {

class GraphBuilder {
 public:
  explicit GraphBuilder(std::string name) { g_.name = std::move(name); }

  VertexId input(Shape shape, InputModality m) {
    const VertexId v = g_.add_vertex(TensorSpec{std::move(shape), DType::fp32});
    g_.inputs.push_back(GraphInput{v, m});
    return v;
  }

  /// Adds `kind` over `srcs`, inferring the output vertex.
  VertexId op(std::vector<VertexId> srcs, OperatorKind kind) {
    std::vector<TensorSpec> in;
    for (auto s : srcs) in.push_back(g_.spec(s));
    const auto out = infer_output(kind, in);
    if (const auto* err = std::get_if<std::string>(&out)) throw std::logic_error("starter graph: " + *err);
    const VertexId v = g_.add_vertex(std::get<TensorSpec>(out));
    g_.add_edge(std::move(srcs), v, std::move(kind), next_seed_++);
    return v;
  }

  ModelGraph finish(VertexId output) {
    g_.output = output;
    return std::move(g_);
  }

 private:
  ModelGraph g_;
  std::uint64_t next_seed_ = 101;
};

}  // namespace detail

inline ModelGraph starter_camera_cnn() {
  detail::GraphBuilder b("camera_cnn");
  auto x = b.input({12, 12, 3}, InputModality::image);
  x = b.op({x}, GemmConv{ConvVariant::standard, Precision::int8, false, 3, 4});
  x = b.op({x}, Elementwise{ElementwiseOp::relu});
  x = b.op({x}, NonePlaceholder{});
  x = b.op({x}, Pool{PoolMode::max});
  x = b.op({x}, GemmConv{ConvVariant::standard, Precision::int8, false, 3, 4});
  x = b.op({x}, BatchNorm{});
  x = b.op({x}, NonePlaceholder{});
  return b.finish(x);
}

inline ModelGraph starter_depthwise_camera() {
  detail::GraphBuilder b("depthwise_camera");
  auto x = b.input({12, 12, 3}, InputModality::image);
  x = b.op({x}, GemmConv{ConvVariant::depthwise, Precision::int8, false, 3, 3});
  x = b.op({x}, BatchNorm{});
  x = b.op({x}, Elementwise{ElementwiseOp::relu});
  x = b.op({x}, GemmConv{ConvVariant::separable, Precision::int8, false, 1, 6});
  x = b.op({x}, NonePlaceholder{});
  x = b.op({x}, Pool{PoolMode::avg});
  return b.finish(x);
}

inline ModelGraph starter_sequence_dense() {
  detail::GraphBuilder b("sequence_dense");
  auto x = b.input({8, 2, 6}, InputModality::sequence);
  auto h = b.op({x}, Dense{8});
  h = b.op({h}, Elementwise{ElementwiseOp::relu});
  auto y = b.op({h}, NonePlaceholder{});
  y = b.op({y}, Dense{8});
  y = b.op({y, h}, Elementwise{ElementwiseOp::add});
  y = b.op({y}, Dense{4});
  return b.finish(y);
}

inline ModelGraph starter_feature_head() {
  detail::GraphBuilder b("feature_head");
  auto x = b.input({6, 8}, InputModality::generic);
  x = b.op({x}, MatMul{Precision::fp16, 8});
  x = b.op({x}, Elementwise{ElementwiseOp::relu});
  x = b.op({x}, NonePlaceholder{});
  x = b.op({x}, MatMul{Precision::fp16, 4});
  x = b.op({x}, BatchNorm{});
  return b.finish(x);
}

inline ModelGraph starter_voxel_net() {
  detail::GraphBuilder b("voxel_net");
  auto x = b.input({8, 8, 4}, InputModality::voxel);
  auto f = b.op({x}, GemmConv{ConvVariant::standard, Precision::int8, false, 3, 4});
  f = b.op({f}, Elementwise{ElementwiseOp::relu});
  auto g = b.op({f}, Pool{PoolMode::max});
  g = b.op({g, f}, Elementwise{ElementwiseOp::mul});
  g = b.op({g}, NonePlaceholder{});
  g = b.op({g}, Dense{4});
  return b.finish(g);
}

inline std::vector<ModelGraph> starter_models() {
  return {starter_camera_cnn(), starter_depthwise_camera(), starter_sequence_dense(), starter_feature_head(),
          starter_voxel_net()};
}

}  // namespace thermalfuzz
