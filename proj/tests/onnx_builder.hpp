#pragma once

#include <string>
#include <vector>

#include "onnx.pb.h"

namespace lus::test {

/// Hand-assembled single-input ONNX graph.
class GraphBuilder {
 public:
  GraphBuilder(const std::string& input, std::vector<std::int64_t> input_dims,
               const std::string& output,
               std::vector<std::int64_t> output_dims = {}) {
    model_.set_ir_version(7);
    model_.add_opset_import()->set_version(13);
    graph_ = model_.mutable_graph();
    graph_->set_name("test");
    value_info(graph_->add_input(), input, input_dims);
    value_info(graph_->add_output(), output, output_dims);
  }

  void init(const std::string& name, std::vector<std::int64_t> dims,
            const std::vector<float>& values) {
    auto* t = graph_->add_initializer();
    t->set_name(name);
    t->set_data_type(::onnx::TensorProto::FLOAT);
    for (auto d : dims) t->add_dims(d);
    for (float v : values) t->add_float_data(v);
  }

  void init_i64(const std::string& name, std::vector<std::int64_t> dims,
                const std::vector<std::int64_t>& values) {
    auto* t = graph_->add_initializer();
    t->set_name(name);
    t->set_data_type(::onnx::TensorProto::INT64);
    for (auto d : dims) t->add_dims(d);
    for (auto v : values) t->add_int64_data(v);
  }

  /// Same data as init() but stored in raw_data, the way exporters write it.
  void init_raw(const std::string& name, std::vector<std::int64_t> dims,
                const std::vector<float>& values) {
    auto* t = graph_->add_initializer();
    t->set_name(name);
    t->set_data_type(::onnx::TensorProto::FLOAT);
    for (auto d : dims) t->add_dims(d);
    t->set_raw_data(std::string(reinterpret_cast<const char*>(values.data()),
                                values.size() * sizeof(float)));
  }

  class Node {
   public:
    explicit Node(::onnx::NodeProto* p) : p_(p) {}
    Node& i(const std::string& name, std::int64_t v) {
      auto* a = attr(name, ::onnx::AttributeProto::INT);
      a->set_i(v);
      return *this;
    }
    Node& f(const std::string& name, float v) {
      auto* a = attr(name, ::onnx::AttributeProto::FLOAT);
      a->set_f(v);
      return *this;
    }
    Node& s(const std::string& name, const std::string& v) {
      auto* a = attr(name, ::onnx::AttributeProto::STRING);
      a->set_s(v);
      return *this;
    }
    Node& ints(const std::string& name, const std::vector<std::int64_t>& v) {
      auto* a = attr(name, ::onnx::AttributeProto::INTS);
      for (auto x : v) a->add_ints(x);
      return *this;
    }

   private:
    ::onnx::AttributeProto* attr(const std::string& name,
                                 ::onnx::AttributeProto::AttributeType type) {
      auto* a = p_->add_attribute();
      a->set_name(name);
      a->set_type(type);
      return a;
    }
    ::onnx::NodeProto* p_;
  };

  Node node(const std::string& op, const std::vector<std::string>& inputs,
            const std::vector<std::string>& outputs,
            const std::string& domain = "") {
    auto* n = graph_->add_node();
    n->set_op_type(op);
    if (!domain.empty()) n->set_domain(domain);
    for (const auto& s : inputs) n->add_input(s);
    for (const auto& s : outputs) n->add_output(s);
    return Node(n);
  }

  std::string bytes() const { return model_.SerializeAsString(); }

 private:
  static void value_info(::onnx::ValueInfoProto* vi, const std::string& name,
                         const std::vector<std::int64_t>& dims) {
    vi->set_name(name);
    auto* tt = vi->mutable_type()->mutable_tensor_type();
    tt->set_elem_type(::onnx::TensorProto::FLOAT);
    auto* shape = tt->mutable_shape();
    for (auto d : dims) {
      auto* dim = shape->add_dim();
      if (d >= 0) dim->set_dim_value(d);
      else dim->set_dim_param("N");
    }
  }

  ::onnx::ModelProto model_;
  ::onnx::GraphProto* graph_;
};

}  // namespace lus::test
