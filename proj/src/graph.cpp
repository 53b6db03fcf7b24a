#include "kgmlsm/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace kgmlsm {

// ---------------------------------------------------------------------------
// ParamStore / Gradients

std::size_t ParamStore::add(std::string name, Shape shape) {
    if (by_name_.contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    if (shape.size() != 2) throw ShapeError("parameter " + name + " must be rank 2");
    const std::size_t size = shape_size(shape);
    if (size == 0) throw ShapeError("parameter " + name + " has an empty shape");
    ParamInfo info{name, std::move(shape), values_.size(), size};
    values_.resize(values_.size() + size, 0.0);
    by_name_.emplace(name, infos_.size());
    infos_.push_back(std::move(info));
    return infos_.size() - 1;
}

bool ParamStore::contains(std::string_view name) const { return by_name_.contains(std::string(name)); }

std::size_t ParamStore::index_of(std::string_view name) const {
    auto it = by_name_.find(std::string(name));
    if (it == by_name_.end()) throw std::out_of_range("unknown parameter: " + std::string(name));
    return it->second;
}

std::span<double> ParamStore::values(std::size_t index) {
    const auto& p = infos_.at(index);
    return std::span<double>(values_).subspan(p.offset, p.size);
}

std::span<const double> ParamStore::values(std::size_t index) const {
    const auto& p = infos_.at(index);
    return std::span<const double>(values_).subspan(p.offset, p.size);
}

Tensor ParamStore::get(std::string_view name) const {
    const auto& p = infos_[index_of(name)];
    auto v = values(index_of(name));
    return Tensor(p.shape, std::vector<double>(v.begin(), v.end()));
}

void ParamStore::set(std::string_view name, const Tensor& value) {
    const auto idx = index_of(name);
    if (value.shape() != infos_[idx].shape)
        throw ShapeError("parameter " + std::string(name) + " expects " + shape_str(infos_[idx].shape) + ", got " +
                         shape_str(value.shape()));
    std::ranges::copy(value.data(), values(idx).begin());
}

bool ParamStore::same_layout(const ParamStore& other) const {
    if (infos_.size() != other.infos_.size()) return false;
    for (std::size_t i = 0; i < infos_.size(); ++i)
        if (infos_[i].name != other.infos_[i].name || infos_[i].shape != other.infos_[i].shape) return false;
    return true;
}

Gradients::Gradients(const ParamStore& layout) : layout_(&layout), values_(layout.total_size(), 0.0) {}

Tensor Gradients::get(std::string_view name) const {
    const auto& p = layout_->info(layout_->index_of(name));
    return Tensor(p.shape, std::vector<double>(values_.begin() + static_cast<std::ptrdiff_t>(p.offset),
                                               values_.begin() + static_cast<std::ptrdiff_t>(p.offset + p.size)));
}

void Gradients::zero() { std::ranges::fill(values_, 0.0); }

Gradients& Gradients::operator+=(const Gradients& other) {
    if (other.values_.size() != values_.size()) throw ShapeError("gradient layouts differ");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
    return *this;
}

// ---------------------------------------------------------------------------
// Graph construction

const char* Graph::op_name(Op op) {
    switch (op) {
        case Op::input: return "input";
        case Op::constant: return "constant";
        case Op::param: return "param";
        case Op::matmul: return "matmul";
        case Op::add: return "add";
        case Op::sub: return "sub";
        case Op::mul: return "mul";
        case Op::scale: return "scale";
        case Op::add_scalar: return "add_scalar";
        case Op::add_row: return "add_row";
        case Op::relu: return "relu";
        case Op::softmax: return "softmax";
        case Op::concat_rows: return "concat_rows";
        case Op::concat_cols: return "concat_cols";
        case Op::slice_rows: return "slice_rows";
        case Op::reshape: return "reshape";
        case Op::transpose: return "transpose";
        case Op::downsample2: return "downsample2";
        case Op::upsample2: return "upsample2";
        case Op::mean: return "mean";
        case Op::sum: return "sum";
        case Op::square: return "square";
    }
    return "?";
}

const Graph::Node& Graph::at(NodeId id) const {
    if (id.index >= nodes_.size()) throw std::out_of_range("node id out of range");
    return nodes_[id.index];
}

NodeId Graph::push(Op op, std::vector<std::uint32_t> in, std::size_t rows, std::size_t cols) {
    if (rows == 0 || cols == 0) throw ShapeError(std::string(op_name(op)) + ": empty result shape");
    Node n;
    n.op = op;
    n.rows = rows;
    n.cols = cols;
    n.value.assign(rows * cols, 0.0);
    for (auto i : in) n.requires_grad = n.requires_grad || nodes_[i].requires_grad;
    n.in = std::move(in);
    nodes_.push_back(std::move(n));
    evaluated_ = false;
    return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

NodeId Graph::input(std::string name, std::size_t rows, std::size_t cols) {
    if (inputs_.contains(name)) throw std::invalid_argument("duplicate input name: " + name);
    auto id = push(Op::input, {}, rows, cols);
    inputs_.emplace(std::move(name), id.index);
    return id;
}

NodeId Graph::constant(Tensor value) {
    if (value.rank() != 2) throw ShapeError("graph constants must be rank 2");
    if (!value.all_finite()) throw NumericError("graph constant contains a non-finite value");
    auto id = push(Op::constant, {}, value.rows(), value.cols());
    nodes_[id.index].value = std::move(value.storage());
    return id;
}

NodeId Graph::param(std::string_view name) {
    if (!params_) throw std::logic_error("graph has no bound parameter store");
    const auto idx = params_->index_of(name);
    const auto& p = params_->info(idx);
    auto id = push(Op::param, {}, p.shape[0], p.shape[1]);
    nodes_[id.index].requires_grad = true;
    nodes_[id.index].lo = idx;
    return id;
}

static std::string dims(std::size_t r, std::size_t c) { return std::to_string(r) + "x" + std::to_string(c); }

NodeId Graph::matmul(NodeId a, NodeId b) {
    const auto &A = at(a), &B = at(b);
    if (A.cols != B.rows) throw ShapeError("matmul: " + dims(A.rows, A.cols) + " @ " + dims(B.rows, B.cols));
    return push(Op::matmul, {a.index, b.index}, A.rows, B.cols);
}

static void same_shape(const char* op, std::size_t ar, std::size_t ac, std::size_t br, std::size_t bc) {
    if (ar != br || ac != bc) throw ShapeError(std::string(op) + ": " + dims(ar, ac) + " vs " + dims(br, bc));
}

NodeId Graph::add(NodeId a, NodeId b) {
    same_shape("add", at(a).rows, at(a).cols, at(b).rows, at(b).cols);
    return push(Op::add, {a.index, b.index}, at(a).rows, at(a).cols);
}

NodeId Graph::sub(NodeId a, NodeId b) {
    same_shape("sub", at(a).rows, at(a).cols, at(b).rows, at(b).cols);
    return push(Op::sub, {a.index, b.index}, at(a).rows, at(a).cols);
}

NodeId Graph::mul(NodeId a, NodeId b) {
    same_shape("mul", at(a).rows, at(a).cols, at(b).rows, at(b).cols);
    return push(Op::mul, {a.index, b.index}, at(a).rows, at(a).cols);
}

NodeId Graph::scale(NodeId a, double factor) {
    if (!std::isfinite(factor)) throw NumericError("scale: non-finite factor");
    auto id = push(Op::scale, {a.index}, at(a).rows, at(a).cols);
    nodes_[id.index].attr = factor;
    return id;
}

NodeId Graph::add_scalar(NodeId a, double offset) {
    if (!std::isfinite(offset)) throw NumericError("add_scalar: non-finite offset");
    auto id = push(Op::add_scalar, {a.index}, at(a).rows, at(a).cols);
    nodes_[id.index].attr = offset;
    return id;
}

NodeId Graph::add_row(NodeId a, NodeId row) {
    const auto &A = at(a), &R = at(row);
    if (R.rows != 1 || R.cols != A.cols)
        throw ShapeError("add_row: " + dims(A.rows, A.cols) + " + " + dims(R.rows, R.cols));
    return push(Op::add_row, {a.index, row.index}, A.rows, A.cols);
}

NodeId Graph::relu(NodeId a) { return push(Op::relu, {a.index}, at(a).rows, at(a).cols); }

NodeId Graph::softmax(NodeId a) { return push(Op::softmax, {a.index}, at(a).rows, at(a).cols); }

NodeId Graph::concat_rows(std::span<const NodeId> parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no inputs");
    std::size_t rows = 0;
    const std::size_t cols = at(parts[0]).cols;
    std::vector<std::uint32_t> in;
    for (auto p : parts) {
        if (at(p).cols != cols) throw ShapeError("concat_rows: column count mismatch");
        rows += at(p).rows;
        in.push_back(p.index);
    }
    return push(Op::concat_rows, std::move(in), rows, cols);
}

NodeId Graph::concat_cols(std::span<const NodeId> parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    std::size_t cols = 0;
    const std::size_t rows = at(parts[0]).rows;
    std::vector<std::uint32_t> in;
    for (auto p : parts) {
        if (at(p).rows != rows) throw ShapeError("concat_cols: row count mismatch");
        cols += at(p).cols;
        in.push_back(p.index);
    }
    return push(Op::concat_cols, std::move(in), rows, cols);
}

NodeId Graph::slice_rows(NodeId a, std::size_t begin, std::size_t end) {
    if (begin >= end || end > at(a).rows)
        throw ShapeError("slice_rows: [" + std::to_string(begin) + "," + std::to_string(end) + ") out of " +
                         std::to_string(at(a).rows) + " rows");
    auto id = push(Op::slice_rows, {a.index}, end - begin, at(a).cols);
    nodes_[id.index].lo = begin;
    nodes_[id.index].hi = end;
    return id;
}

NodeId Graph::reshape(NodeId a, std::size_t rows, std::size_t cols) {
    if (rows * cols != at(a).rows * at(a).cols)
        throw ShapeError("reshape: " + dims(at(a).rows, at(a).cols) + " -> " + dims(rows, cols));
    return push(Op::reshape, {a.index}, rows, cols);
}

NodeId Graph::transpose(NodeId a) { return push(Op::transpose, {a.index}, at(a).cols, at(a).rows); }

NodeId Graph::downsample2(NodeId a) {
    if (at(a).rows % 2 != 0) throw ShapeError("downsample2: odd row count " + std::to_string(at(a).rows));
    return push(Op::downsample2, {a.index}, at(a).rows / 2, at(a).cols);
}

NodeId Graph::upsample2(NodeId a) { return push(Op::upsample2, {a.index}, at(a).rows * 2, at(a).cols); }

NodeId Graph::mean(NodeId a) { return push(Op::mean, {a.index}, 1, 1); }

NodeId Graph::sum(NodeId a) { return push(Op::sum, {a.index}, 1, 1); }

NodeId Graph::square(NodeId a) { return push(Op::square, {a.index}, at(a).rows, at(a).cols); }

// ---------------------------------------------------------------------------
// Evaluation

void Graph::set_input(NodeId node, std::span<const double> values) {
    auto& n = nodes_.at(node.index);
    if (n.op != Op::input) throw std::invalid_argument("set_input: node is not an input");
    if (values.size() != n.value.size())
        throw ShapeError("set_input: expected " + std::to_string(n.value.size()) + " values, got " +
                         std::to_string(values.size()));
    std::ranges::copy(values, n.value.begin());
    n.hi = 1;
    evaluated_ = false;
}

void Graph::set_input(std::string_view name, const Tensor& value) {
    auto it = inputs_.find(std::string(name));
    if (it == inputs_.end()) throw std::out_of_range("unknown graph input: " + std::string(name));
    const auto& n = nodes_[it->second];
    if (value.rows() != n.rows || value.cols() != n.cols)
        throw ShapeError("input " + std::string(name) + " expects " + dims(n.rows, n.cols) + ", got " +
                         shape_str(value.shape()));
    set_input(NodeId{it->second}, value.data());
}

void Graph::forward() {
    for (auto& n : nodes_) {
        eval_node(n);
        for (double v : n.value)
            if (!std::isfinite(v))
                throw NumericError(std::string("non-finite value produced by ") + op_name(n.op));
    }
    evaluated_ = true;
}

void Graph::eval_node(Node& n) {
    auto& out = n.value;
    const auto in = [&](std::size_t k) -> const Node& { return nodes_[n.in[k]]; };
    switch (n.op) {
        case Op::input:
            if (n.hi == 0) throw std::logic_error("graph input was never set");
            break;
        case Op::constant:
            break;
        case Op::param: {
            auto v = params_->values(n.lo);
            std::ranges::copy(v, out.begin());
            break;
        }
        case Op::matmul: {
            const auto &A = in(0), &B = in(1);
            const std::size_t m = A.rows, k = A.cols, c = B.cols;
            std::ranges::fill(out, 0.0);
            for (std::size_t i = 0; i < m; ++i) {
                double* orow = out.data() + i * c;
                for (std::size_t kk = 0; kk < k; ++kk) {
                    const double a = A.value[i * k + kk];
                    if (a == 0.0) continue;
                    const double* brow = B.value.data() + kk * c;
                    for (std::size_t j = 0; j < c; ++j) orow[j] += a * brow[j];
                }
            }
            break;
        }
        case Op::add:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = in(0).value[i] + in(1).value[i];
            break;
        case Op::sub:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = in(0).value[i] - in(1).value[i];
            break;
        case Op::mul:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = in(0).value[i] * in(1).value[i];
            break;
        case Op::scale:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = n.attr * in(0).value[i];
            break;
        case Op::add_scalar:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = in(0).value[i] + n.attr;
            break;
        case Op::add_row:
            for (std::size_t r = 0; r < n.rows; ++r)
                for (std::size_t c = 0; c < n.cols; ++c)
                    out[r * n.cols + c] = in(0).value[r * n.cols + c] + in(1).value[c];
            break;
        case Op::relu:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, in(0).value[i]);
            break;
        case Op::softmax: {
            const auto& x = in(0).value;
            for (std::size_t r = 0; r < n.rows; ++r) {
                const double* xr = x.data() + r * n.cols;
                double* yr = out.data() + r * n.cols;
                const double mx = *std::max_element(xr, xr + n.cols);
                double total = 0.0;
                for (std::size_t c = 0; c < n.cols; ++c) total += (yr[c] = std::exp(xr[c] - mx));
                for (std::size_t c = 0; c < n.cols; ++c) yr[c] /= total;
            }
            break;
        }
        case Op::concat_rows: {
            auto it = out.begin();
            for (auto idx : n.in) it = std::ranges::copy(nodes_[idx].value, it).out;
            break;
        }
        case Op::concat_cols: {
            std::size_t offset = 0;
            for (auto idx : n.in) {
                const auto& p = nodes_[idx];
                for (std::size_t r = 0; r < n.rows; ++r)
                    std::copy_n(p.value.data() + r * p.cols, p.cols, out.data() + r * n.cols + offset);
                offset += p.cols;
            }
            break;
        }
        case Op::slice_rows:
            std::copy_n(in(0).value.data() + n.lo * n.cols, out.size(), out.data());
            break;
        case Op::reshape:
            std::ranges::copy(in(0).value, out.begin());
            break;
        case Op::transpose: {
            const auto& a = in(0);
            for (std::size_t r = 0; r < a.rows; ++r)
                for (std::size_t c = 0; c < a.cols; ++c) out[c * a.rows + r] = a.value[r * a.cols + c];
            break;
        }
        case Op::downsample2: {
            const auto& a = in(0).value;
            for (std::size_t r = 0; r < n.rows; ++r)
                for (std::size_t c = 0; c < n.cols; ++c)
                    out[r * n.cols + c] = 0.5 * (a[(2 * r) * n.cols + c] + a[(2 * r + 1) * n.cols + c]);
            break;
        }
        case Op::upsample2: {
            const auto& a = in(0).value;
            for (std::size_t r = 0; r < n.rows; ++r)
                std::copy_n(a.data() + (r / 2) * n.cols, n.cols, out.data() + r * n.cols);
            break;
        }
        case Op::mean:
        case Op::sum: {
            double total = 0.0;
            for (double v : in(0).value) total += v;
            out[0] = n.op == Op::mean ? total / static_cast<double>(in(0).value.size()) : total;
            break;
        }
        case Op::square:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = in(0).value[i] * in(0).value[i];
            break;
    }
}

// ---------------------------------------------------------------------------
// Reverse pass

void Graph::backward(NodeId loss, Gradients& grads, double scale) {
    if (!evaluated_) throw std::logic_error("backward called before forward");
    const auto& L = at(loss);
    if (L.rows * L.cols != 1)
        throw ShapeError("backward: loss must be scalar, got " + dims(L.rows, L.cols));
    if (grads.flat().size() != (params_ ? params_->total_size() : 0))
        throw ShapeError("backward: gradient buffer does not match parameter store");

    for (std::size_t i = 0; i <= loss.index; ++i) {
        auto& n = nodes_[i];
        if (n.requires_grad) n.grad.assign(n.value.size(), 0.0);
    }
    auto& seed = nodes_[loss.index];
    if (!seed.requires_grad) return;
    seed.grad[0] = scale;

    for (std::size_t i = loss.index + 1; i-- > 0;) {
        auto& n = nodes_[i];
        if (!n.requires_grad) continue;
        if (n.op == Op::param) {
            const auto offset = params_->info(n.lo).offset;
            auto g = grads.flat();
            for (std::size_t j = 0; j < n.grad.size(); ++j) g[offset + j] += n.grad[j];
            continue;
        }
        grad_node(n);
    }
}

Gradients Graph::backward(NodeId loss) {
    if (!params_) throw std::logic_error("graph has no bound parameter store");
    Gradients g(*params_);
    backward(loss, g);
    return g;
}

void Graph::grad_node(Node& n) {
    const auto& dy = n.grad;
    const auto wants = [&](std::size_t k) { return nodes_[n.in[k]].requires_grad; };
    const auto dx = [&](std::size_t k) -> std::vector<double>& { return nodes_[n.in[k]].grad; };
    const auto val = [&](std::size_t k) -> const std::vector<double>& { return nodes_[n.in[k]].value; };

    switch (n.op) {
        case Op::input:
        case Op::constant:
        case Op::param:
            break;
        case Op::matmul: {
            const auto &A = nodes_[n.in[0]], &B = nodes_[n.in[1]];
            const std::size_t m = A.rows, k = A.cols, c = B.cols;
            if (A.requires_grad) {
                auto& dA = dx(0);
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t kk = 0; kk < k; ++kk) {
                        const double* brow = B.value.data() + kk * c;
                        const double* drow = dy.data() + i * c;
                        double acc = 0.0;
                        for (std::size_t j = 0; j < c; ++j) acc += drow[j] * brow[j];
                        dA[i * k + kk] += acc;
                    }
            }
            if (B.requires_grad) {
                auto& dB = dx(1);
                for (std::size_t i = 0; i < m; ++i) {
                    const double* drow = dy.data() + i * c;
                    for (std::size_t kk = 0; kk < k; ++kk) {
                        const double a = A.value[i * k + kk];
                        if (a == 0.0) continue;
                        double* brow = dB.data() + kk * c;
                        for (std::size_t j = 0; j < c; ++j) brow[j] += a * drow[j];
                    }
                }
            }
            break;
        }
        case Op::add:
            for (std::size_t k = 0; k < 2; ++k)
                if (wants(k))
                    for (std::size_t i = 0; i < dy.size(); ++i) dx(k)[i] += dy[i];
            break;
        case Op::sub:
            if (wants(0))
                for (std::size_t i = 0; i < dy.size(); ++i) dx(0)[i] += dy[i];
            if (wants(1))
                for (std::size_t i = 0; i < dy.size(); ++i) dx(1)[i] -= dy[i];
            break;
        case Op::mul:
            if (wants(0))
                for (std::size_t i = 0; i < dy.size(); ++i) dx(0)[i] += dy[i] * val(1)[i];
            if (wants(1))
                for (std::size_t i = 0; i < dy.size(); ++i) dx(1)[i] += dy[i] * val(0)[i];
            break;
        case Op::scale:
            for (std::size_t i = 0; i < dy.size(); ++i) dx(0)[i] += n.attr * dy[i];
            break;
        case Op::add_scalar:
        case Op::reshape:
            for (std::size_t i = 0; i < dy.size(); ++i) dx(0)[i] += dy[i];
            break;
        case Op::add_row:
            if (wants(0))
                for (std::size_t i = 0; i < dy.size(); ++i) dx(0)[i] += dy[i];
            if (wants(1))
                for (std::size_t r = 0; r < n.rows; ++r)
                    for (std::size_t c = 0; c < n.cols; ++c) dx(1)[c] += dy[r * n.cols + c];
            break;
        case Op::relu:
            for (std::size_t i = 0; i < dy.size(); ++i)
                if (val(0)[i] > 0.0) dx(0)[i] += dy[i];
            break;
        case Op::softmax: {
            const auto& y = n.value;
            for (std::size_t r = 0; r < n.rows; ++r) {
                const std::size_t base = r * n.cols;
                double dot = 0.0;
                for (std::size_t c = 0; c < n.cols; ++c) dot += dy[base + c] * y[base + c];
                for (std::size_t c = 0; c < n.cols; ++c) dx(0)[base + c] += y[base + c] * (dy[base + c] - dot);
            }
            break;
        }
        case Op::concat_rows: {
            std::size_t offset = 0;
            for (std::size_t k = 0; k < n.in.size(); ++k) {
                const auto len = nodes_[n.in[k]].value.size();
                if (wants(k))
                    for (std::size_t i = 0; i < len; ++i) dx(k)[i] += dy[offset + i];
                offset += len;
            }
            break;
        }
        case Op::concat_cols: {
            std::size_t offset = 0;
            for (std::size_t k = 0; k < n.in.size(); ++k) {
                const auto pc = nodes_[n.in[k]].cols;
                if (wants(k))
                    for (std::size_t r = 0; r < n.rows; ++r)
                        for (std::size_t c = 0; c < pc; ++c) dx(k)[r * pc + c] += dy[r * n.cols + offset + c];
                offset += pc;
            }
            break;
        }
        case Op::slice_rows:
            for (std::size_t i = 0; i < dy.size(); ++i) dx(0)[n.lo * n.cols + i] += dy[i];
            break;
        case Op::transpose: {
            const auto& a = nodes_[n.in[0]];
            for (std::size_t r = 0; r < a.rows; ++r)
                for (std::size_t c = 0; c < a.cols; ++c) dx(0)[r * a.cols + c] += dy[c * a.rows + r];
            break;
        }
        case Op::downsample2:
            for (std::size_t r = 0; r < n.rows; ++r)
                for (std::size_t c = 0; c < n.cols; ++c) {
                    const double g = 0.5 * dy[r * n.cols + c];
                    dx(0)[(2 * r) * n.cols + c] += g;
                    dx(0)[(2 * r + 1) * n.cols + c] += g;
                }
            break;
        case Op::upsample2:
            for (std::size_t r = 0; r < n.rows; ++r)
                for (std::size_t c = 0; c < n.cols; ++c) dx(0)[(r / 2) * n.cols + c] += dy[r * n.cols + c];
            break;
        case Op::mean: {
            const double g = dy[0] / static_cast<double>(val(0).size());
            for (auto& v : dx(0)) v += g;
            break;
        }
        case Op::sum:
            for (auto& v : dx(0)) v += dy[0];
            break;
        case Op::square:
            for (std::size_t i = 0; i < dy.size(); ++i) dx(0)[i] += 2.0 * val(0)[i] * dy[i];
            break;
    }
}

Tensor Graph::value(NodeId node) const {
    const auto& n = at(node);
    return Tensor({n.rows, n.cols}, n.value);
}

std::span<const double> Graph::data(NodeId node) const { return at(node).value; }

Shape Graph::shape(NodeId node) const { return {at(node).rows, at(node).cols}; }

}  // namespace kgmlsm
