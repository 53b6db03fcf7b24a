#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kgmlsm/tensor.hpp"

namespace kgmlsm {

struct ParamInfo {
    std::string name;
    Shape shape;
    std::size_t offset = 0;
    std::size_t size = 0;
};

/// Named trainable tensors packed into one flat buffer (declaration order).
class ParamStore {
public:
    std::size_t add(std::string name, Shape shape);

    bool contains(std::string_view name) const;
    std::size_t index_of(std::string_view name) const;
    const ParamInfo& info(std::size_t index) const { return infos_[index]; }
    const std::vector<ParamInfo>& infos() const { return infos_; }
    std::size_t count() const { return infos_.size(); }
    std::size_t total_size() const { return values_.size(); }

    std::span<double> values(std::size_t index);
    std::span<const double> values(std::size_t index) const;
    Tensor get(std::string_view name) const;
    void set(std::string_view name, const Tensor& value);

    std::span<double> flat() { return values_; }
    std::span<const double> flat() const { return values_; }

    bool same_layout(const ParamStore& other) const;

private:
    std::vector<ParamInfo> infos_;
    std::unordered_map<std::string, std::size_t> by_name_;
    std::vector<double> values_;
};

/// Flat gradient buffer aligned with a ParamStore layout.
class Gradients {
public:
    Gradients() = default;
    explicit Gradients(const ParamStore& layout);

    Tensor get(std::string_view name) const;
    std::span<double> flat() { return values_; }
    std::span<const double> flat() const { return values_; }
    const ParamStore& layout() const { return *layout_; }
    void zero();
    Gradients& operator+=(const Gradients& other);

private:
    const ParamStore* layout_ = nullptr;
    std::vector<double> values_;
};

struct NodeId {
    std::uint32_t index = 0;
    bool operator==(const NodeId&) const = default;
};

/// Static computation graph over rank-2 tensors with reverse-mode gradients.
///
/// Nodes are declared once (shapes checked at declaration), then evaluated any
/// number of times with fresh inputs. Parameter values are read from the bound
/// ParamStore on every forward pass, so optimizer updates are picked up
/// without rebuilding.
class Graph {
public:
    explicit Graph(const ParamStore* params = nullptr) : params_(params) {}

    void bind(const ParamStore* params) { params_ = params; evaluated_ = false; }

    // Leaves
    NodeId input(std::string name, std::size_t rows, std::size_t cols);
    NodeId constant(Tensor value);
    NodeId param(std::string_view name);

    // Primitives
    NodeId matmul(NodeId a, NodeId b);
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId scale(NodeId a, double factor);
    NodeId add_scalar(NodeId a, double offset);
    NodeId add_row(NodeId a, NodeId row);  // a[m,n] + row[1,n]
    NodeId relu(NodeId a);
    NodeId max_zero(NodeId a) { return relu(a); }
    NodeId softmax(NodeId a);  // over the last axis
    NodeId concat_rows(std::span<const NodeId> parts);
    NodeId concat_cols(std::span<const NodeId> parts);
    NodeId slice_rows(NodeId a, std::size_t begin, std::size_t end);
    NodeId reshape(NodeId a, std::size_t rows, std::size_t cols);
    NodeId transpose(NodeId a);
    NodeId downsample2(NodeId a);  // mean of row pairs
    NodeId upsample2(NodeId a);    // each row repeated twice
    NodeId mean(NodeId a);
    NodeId sum(NodeId a);
    NodeId square(NodeId a);

    void set_input(NodeId node, std::span<const double> values);
    void set_input(std::string_view name, const Tensor& value);

    void forward();
    bool evaluated() const { return evaluated_; }

    /// Accumulates scale * d(loss)/d(param) into `grads`.
    void backward(NodeId loss, Gradients& grads, double scale = 1.0);
    Gradients backward(NodeId loss);

    Tensor value(NodeId node) const;
    std::span<const double> data(NodeId node) const;
    Shape shape(NodeId node) const;
    std::size_t node_count() const { return nodes_.size(); }

private:
    enum class Op : std::uint8_t {
        input, constant, param, matmul, add, sub, mul, scale, add_scalar, add_row, relu,
        softmax, concat_rows, concat_cols, slice_rows, reshape, transpose, downsample2,
        upsample2, mean, sum, square
    };

    struct Node {
        Op op;
        std::vector<std::uint32_t> in;
        std::size_t rows = 0;
        std::size_t cols = 0;
        std::vector<double> value;
        std::vector<double> grad;
        bool requires_grad = false;
        double attr = 0.0;
        std::size_t lo = 0;  // slice begin / param index
        std::size_t hi = 0;
    };

    NodeId push(Op op, std::vector<std::uint32_t> in, std::size_t rows, std::size_t cols);
    const Node& at(NodeId id) const;
    void eval_node(Node& n);
    void grad_node(Node& n);
    static const char* op_name(Op op);

    const ParamStore* params_;
    std::vector<Node> nodes_;
    std::unordered_map<std::string, std::uint32_t> inputs_;
    bool evaluated_ = false;
};

}  // namespace kgmlsm
