#pragma once

// Dense-tensor reverse-mode automatic differentiation. Graphs are built per
// batch (define-by-run); backward runs one reverse sweep over construction
// order and accumulates gradients additively across fan-out. Real is float
// or double; gradient checks run at double precision.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cota/common.hpp"
#include "cota/linalg.hpp"

namespace cota::ad {

using Shape = std::vector<int>;
using NodeId = int;

inline std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= std::size_t(d);
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

inline void require_shape(bool ok, const char* op, const Shape& a, const Shape& b) {
  if (!ok)
    throw TrainError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                     shape_str(b));
}

template <typename Real>
struct Param {
  std::string name;
  Shape shape;
  std::vector<Real> value;
  std::vector<Real> grad;

  Param() = default;
  Param(std::string n, Shape s)
      : name(std::move(n)),
        shape(std::move(s)),
        value(numel(shape), Real(0)),
        grad(numel(shape), Real(0)) {}

  void zero_grad() { std::fill(grad.begin(), grad.end(), Real(0)); }
};

template <typename Real>
class Tape {
 public:
  struct Node {
    Shape shape;
    std::vector<Real> value;
    std::vector<Real> grad;
    bool requires_grad = false;
    std::function<void(Tape&)> backprop;
  };

  bool check_finite = false;  // debug: throw on non-finite forward values

  NodeId input(Shape shape, std::vector<Real> value) {
    if (numel(shape) != value.size())
      throw TrainError("input: value count does not match shape " + shape_str(shape));
    return push(std::move(shape), std::move(value), false);
  }

  NodeId scalar(Real value) { return input({1}, {value}); }

  NodeId param(Param<Real>& p) {
    const NodeId id = push(p.shape, p.value, true);
    bound_.emplace_back(id, &p);
    return id;
  }

  // New interior node; the caller attaches the backprop closure afterwards
  // (it usually needs the returned id to read its own output gradient).
  NodeId make(Shape shape, std::vector<Real> value, bool requires_grad) {
    return push(std::move(shape), std::move(value), requires_grad);
  }

  void set_backprop(NodeId id, std::function<void(Tape&)> fn) {
    nodes_[std::size_t(id)].backprop = std::move(fn);
  }

  Node& node(NodeId id) { return nodes_[std::size_t(id)]; }
  const Node& node(NodeId id) const { return nodes_[std::size_t(id)]; }
  const Shape& shape(NodeId id) const { return nodes_[std::size_t(id)].shape; }
  const std::vector<Real>& value(NodeId id) const {
    return nodes_[std::size_t(id)].value;
  }
  std::vector<Real>& grad(NodeId id) { return nodes_[std::size_t(id)].grad; }
  bool needs_grad(NodeId id) const { return nodes_[std::size_t(id)].requires_grad; }
  int size() const { return int(nodes_.size()); }

  // Reverse sweep from a scalar loss. Bound parameters receive their
  // gradients in Param::grad (accumulated, not overwritten).
  void backward(NodeId loss) {
    if (numel(node(loss).shape) != 1)
      throw TrainError("backward: loss node must be scalar, got " +
                       shape_str(node(loss).shape));
    for (auto& n : nodes_) n.grad.assign(n.value.size(), Real(0));
    node(loss).grad[0] = Real(1);
    for (NodeId id = loss; id >= 0; --id) {
      Node& n = nodes_[std::size_t(id)];
      if (n.requires_grad && n.backprop) n.backprop(*this);
    }
    for (auto& [id, param] : bound_) {
      const auto& g = node(id).grad;
      for (std::size_t i = 0; i < g.size(); ++i) param->grad[i] += g[i];
    }
  }

 private:
  NodeId push(Shape shape, std::vector<Real> value, bool requires_grad) {
    if (check_finite)
      for (Real v : value)
        if (!std::isfinite(double(v)))
          throw TrainError("non-finite value in node " + std::to_string(nodes_.size()));
    Node n;
    n.shape = std::move(shape);
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return NodeId(nodes_.size()) - 1;
  }

  std::vector<Node> nodes_;
  std::vector<std::pair<NodeId, Param<Real>*>> bound_;
};

// --- Primitive operators ----------------------------------------------------

template <typename Real>
NodeId matmul(Tape<Real>& t, NodeId a, NodeId b) {
  const Shape sa = t.shape(a), sb = t.shape(b);
  require_shape(sa.size() == 2 && sb.size() == 2 && sa[1] == sb[0], "matmul", sa, sb);
  const int m = sa[0], k = sa[1], n = sb[1];
  std::vector<Real> value(std::size_t(m) * std::size_t(n));
  linalg::gemm(t.value(a).data(), t.value(b).data(), value.data(), m, k, n);
  const bool needs = t.needs_grad(a) || t.needs_grad(b);
  const NodeId out = t.make({m, n}, std::move(value), needs);
  if (needs)
    t.set_backprop(out, [a, b, out, m, k, n](Tape<Real>& tape) {
      const Real* dout = tape.grad(out).data();
      if (tape.needs_grad(a))
        linalg::gemm(dout, tape.value(b).data(), tape.grad(a).data(), m, n, k,
                     /*accumulate=*/true, false, /*trans_b=*/true);
      if (tape.needs_grad(b))
        linalg::gemm(tape.value(a).data(), dout, tape.grad(b).data(), k, m, n,
                     /*accumulate=*/true, /*trans_a=*/true, false);
    });
  return out;
}

// Same-shape elementwise add, or bias broadcast [m,n] + [n].
template <typename Real>
NodeId add(Tape<Real>& t, NodeId a, NodeId b) {
  const Shape sa = t.shape(a), sb = t.shape(b);
  const bool same = sa == sb;
  const bool bias = sa.size() == 2 && sb.size() == 1 && sa[1] == sb[0];
  require_shape(same || bias, "add", sa, sb);
  std::vector<Real> value = t.value(a);
  if (same) {
    const auto& vb = t.value(b);
    for (std::size_t i = 0; i < value.size(); ++i) value[i] += vb[i];
  } else {
    const auto& vb = t.value(b);
    const int rows = sa[0], cols = sa[1];
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c)
        value[std::size_t(r) * std::size_t(cols) + std::size_t(c)] += vb[std::size_t(c)];
  }
  const bool needs = t.needs_grad(a) || t.needs_grad(b);
  const NodeId out = t.make(sa, std::move(value), needs);
  if (needs)
    t.set_backprop(out, [a, b, out, same](Tape<Real>& tape) {
      const auto& dout = tape.grad(out);
      if (tape.needs_grad(a)) {
        auto& da = tape.grad(a);
        for (std::size_t i = 0; i < dout.size(); ++i) da[i] += dout[i];
      }
      if (tape.needs_grad(b)) {
        auto& db = tape.grad(b);
        if (same) {
          for (std::size_t i = 0; i < dout.size(); ++i) db[i] += dout[i];
        } else {
          const int cols = tape.shape(b)[0];
          const int rows = int(dout.size()) / cols;
          for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c)
              db[std::size_t(c)] += dout[std::size_t(r) * std::size_t(cols) + std::size_t(c)];
        }
      }
    });
  return out;
}

template <typename Real>
NodeId mul(Tape<Real>& t, NodeId a, NodeId b) {
  const Shape sa = t.shape(a), sb = t.shape(b);
  require_shape(sa == sb, "mul", sa, sb);
  std::vector<Real> value = t.value(a);
  const auto& vb = t.value(b);
  for (std::size_t i = 0; i < value.size(); ++i) value[i] *= vb[i];
  const bool needs = t.needs_grad(a) || t.needs_grad(b);
  const NodeId out = t.make(sa, std::move(value), needs);
  if (needs)
    t.set_backprop(out, [a, b, out](Tape<Real>& tape) {
      const auto& dout = tape.grad(out);
      if (tape.needs_grad(a)) {
        auto& da = tape.grad(a);
        const auto& vb = tape.value(b);
        for (std::size_t i = 0; i < dout.size(); ++i) da[i] += dout[i] * vb[i];
      }
      if (tape.needs_grad(b)) {
        auto& db = tape.grad(b);
        const auto& va = tape.value(a);
        for (std::size_t i = 0; i < dout.size(); ++i) db[i] += dout[i] * va[i];
      }
    });
  return out;
}

// alpha * x + beta, elementwise.
template <typename Real>
NodeId scale_add(Tape<Real>& t, NodeId x, Real alpha, Real beta) {
  std::vector<Real> value = t.value(x);
  for (Real& v : value) v = alpha * v + beta;
  const bool needs = t.needs_grad(x);
  const NodeId out = t.make(t.shape(x), std::move(value), needs);
  if (needs)
    t.set_backprop(out, [x, out, alpha](Tape<Real>& tape) {
      const auto& dout = tape.grad(out);
      auto& dx = tape.grad(x);
      for (std::size_t i = 0; i < dout.size(); ++i) dx[i] += alpha * dout[i];
    });
  return out;
}

// Concatenation along `axis`; all other extents must agree.
template <typename Real>
NodeId concat(Tape<Real>& t, const std::vector<NodeId>& parts, int axis) {
  if (parts.empty()) throw TrainError("concat: no inputs");
  const Shape first = t.shape(parts[0]);
  if (axis < 0 || axis >= int(first.size()))
    throw TrainError("concat: axis " + std::to_string(axis) + " out of range for " +
                     shape_str(first));
  Shape out_shape = first;
  out_shape[std::size_t(axis)] = 0;
  for (NodeId part : parts) {
    Shape s = t.shape(part);
    Shape match = s;
    match[std::size_t(axis)] = first[std::size_t(axis)];
    require_shape(s.size() == first.size() && match == first, "concat", s, first);
    out_shape[std::size_t(axis)] += s[std::size_t(axis)];
  }
  std::size_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= std::size_t(out_shape[std::size_t(d)]);
  for (int d = axis + 1; d < int(out_shape.size()); ++d)
    inner *= std::size_t(out_shape[std::size_t(d)]);

  std::vector<Real> value(numel(out_shape));
  const std::size_t out_stride = std::size_t(out_shape[std::size_t(axis)]) * inner;
  std::size_t offset = 0;
  bool needs = false;
  for (NodeId part : parts) {
    needs = needs || t.needs_grad(part);
    const std::size_t part_axis = std::size_t(t.shape(part)[std::size_t(axis)]);
    const auto& pv = t.value(part);
    for (std::size_t o = 0; o < outer; ++o)
      std::memcpy(value.data() + o * out_stride + offset * inner,
                  pv.data() + o * part_axis * inner,
                  part_axis * inner * sizeof(Real));
    offset += part_axis;
  }
  const NodeId out = t.make(out_shape, std::move(value), needs);
  if (needs) {
    std::vector<NodeId> captured = parts;
    t.set_backprop(out, [captured, out, axis, outer, inner, out_stride](Tape<Real>& tape) {
      const auto& dout = tape.grad(out);
      std::size_t offset = 0;
      for (NodeId part : captured) {
        const std::size_t part_axis = std::size_t(tape.shape(part)[std::size_t(axis)]);
        if (tape.needs_grad(part)) {
          auto& dp = tape.grad(part);
          for (std::size_t o = 0; o < outer; ++o) {
            const Real* src = dout.data() + o * out_stride + offset * inner;
            Real* dst = dp.data() + o * part_axis * inner;
            for (std::size_t i = 0; i < part_axis * inner; ++i) dst[i] += src[i];
          }
        }
        offset += part_axis;
      }
    });
  }
  return out;
}

// Columns [begin, end) of a [rows, cols] matrix.
template <typename Real>
NodeId slice_cols(Tape<Real>& t, NodeId x, int begin, int end) {
  const Shape s = t.shape(x);
  require_shape(s.size() == 2 && begin >= 0 && end <= s[1] && begin < end,
                "slice_cols", s, {begin, end});
  const int rows = s[0], cols = s[1], width = end - begin;
  std::vector<Real> value(std::size_t(rows) * std::size_t(width));
  const auto& vx = t.value(x);
  for (int r = 0; r < rows; ++r)
    std::memcpy(value.data() + std::size_t(r) * std::size_t(width),
                vx.data() + std::size_t(r) * std::size_t(cols) + std::size_t(begin),
                std::size_t(width) * sizeof(Real));
  const bool needs = t.needs_grad(x);
  const NodeId out = t.make({rows, width}, std::move(value), needs);
  if (needs)
    t.set_backprop(out, [x, out, rows, cols, width, begin](Tape<Real>& tape) {
      const auto& dout = tape.grad(out);
      auto& dx = tape.grad(x);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < width; ++c)
          dx[std::size_t(r) * std::size_t(cols) + std::size_t(begin + c)] +=
              dout[std::size_t(r) * std::size_t(width) + std::size_t(c)];
    });
  return out;
}

// Time slice of [B, L, E] at step `step` -> [B, E].
template <typename Real>
NodeId slice_time(Tape<Real>& t, NodeId x, int step) {
  const Shape s = t.shape(x);
  require_shape(s.size() == 3 && step >= 0 && step < s[1], "slice_time", s, {step});
  const int batch = s[0], length = s[1], width = s[2];
  std::vector<Real> value(std::size_t(batch) * std::size_t(width));
  const auto& vx = t.value(x);
  for (int b = 0; b < batch; ++b)
    std::memcpy(value.data() + std::size_t(b) * std::size_t(width),
                vx.data() + (std::size_t(b) * std::size_t(length) + std::size_t(step)) *
                                std::size_t(width),
                std::size_t(width) * sizeof(Real));
  const bool needs = t.needs_grad(x);
  const NodeId out = t.make({batch, width}, std::move(value), needs);
  if (needs)
    t.set_backprop(out, [x, out, batch, length, width, step](Tape<Real>& tape) {
      const auto& dout = tape.grad(out);
      auto& dx = tape.grad(x);
      for (int b = 0; b < batch; ++b)
        for (int e = 0; e < width; ++e)
          dx[(std::size_t(b) * std::size_t(length) + std::size_t(step)) * std::size_t(width) +
             std::size_t(e)] += dout[std::size_t(b) * std::size_t(width) + std::size_t(e)];
    });
  return out;
}

// table [V, E] gathered by integer ids; output shape is leading + [E].
template <typename Real>
NodeId embedding_lookup(Tape<Real>& t, NodeId table, const std::vector<int>& ids,
                        Shape leading) {
  const Shape st = t.shape(table);
  require_shape(st.size() == 2, "embedding_lookup", st, leading);
  if (numel(leading) != ids.size())
    throw TrainError("embedding_lookup: id count does not match leading shape " +
                     shape_str(leading));
  const int vocab = st[0], width = st[1];
  for (int id : ids)
    if (id < 0 || id >= vocab)
      throw TrainError("embedding_lookup: id " + std::to_string(id) +
                       " outside table of size " + std::to_string(vocab));
  Shape out_shape = leading;
  out_shape.push_back(width);
  std::vector<Real> value(numel(out_shape));
  const auto& vt = t.value(table);
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::memcpy(value.data() + i * std::size_t(width),
                vt.data() + std::size_t(ids[i]) * std::size_t(width),
                std::size_t(width) * sizeof(Real));
  const bool needs = t.needs_grad(table);
  const NodeId out = t.make(std::move(out_shape), std::move(value), needs);
  if (needs)
    t.set_backprop(out, [table, out, ids, width](Tape<Real>& tape) {
      const auto& dout = tape.grad(out);
      auto& dt = tape.grad(table);
      for (std::size_t i = 0; i < ids.size(); ++i)
        for (int e = 0; e < width; ++e)
          dt[std::size_t(ids[i]) * std::size_t(width) + std::size_t(e)] +=
              dout[i * std::size_t(width) + std::size_t(e)];
    });
  return out;
}

// 1-D convolution over time with zero same-padding.
// x [B, L, E], filters [F, W, E], bias [F] -> [B, L, F].
template <typename Real>
NodeId conv1d(Tape<Real>& t, NodeId x, NodeId filters, NodeId bias) {
  const Shape sx = t.shape(x), sw = t.shape(filters), sb = t.shape(bias);
  require_shape(sx.size() == 3 && sw.size() == 3 && sx[2] == sw[2], "conv1d", sx, sw);
  require_shape(sb.size() == 1 && sb[0] == sw[0], "conv1d bias", sb, sw);
  const int batch = sx[0], length = sx[1], emb = sx[2];
  const int n_filters = sw[0], width = sw[1];
  const int pad_left = (width - 1) / 2;
  const std::size_t rows = std::size_t(batch) * std::size_t(length);
  const std::size_t cols = std::size_t(width) * std::size_t(emb);

  auto im2col = std::make_shared<std::vector<Real>>(rows * cols, Real(0));
  const auto& vx = t.value(x);
  for (int b = 0; b < batch; ++b) {
    for (int l = 0; l < length; ++l) {
      Real* row = im2col->data() + (std::size_t(b) * std::size_t(length) + std::size_t(l)) * cols;
      for (int w = 0; w < width; ++w) {
        const int src = l + w - pad_left;
        if (src < 0 || src >= length) continue;
        std::memcpy(row + std::size_t(w) * std::size_t(emb),
                    vx.data() + (std::size_t(b) * std::size_t(length) + std::size_t(src)) *
                                    std::size_t(emb),
                    std::size_t(emb) * sizeof(Real));
      }
    }
  }
  std::vector<Real> value(rows * std::size_t(n_filters));
  // filters flattened as [F, W*E]; out = im2col * filters^T.
  linalg::gemm(im2col->data(), t.value(filters).data(), value.data(), int(rows),
               int(cols), n_filters, false, false, /*trans_b=*/true);
  const auto& vb = t.value(bias);
  for (std::size_t r = 0; r < rows; ++r)
    for (int f = 0; f < n_filters; ++f) value[r * std::size_t(n_filters) + std::size_t(f)] += vb[std::size_t(f)];

  const bool needs = t.needs_grad(x) || t.needs_grad(filters) || t.needs_grad(bias);
  const NodeId out = t.make({batch, length, n_filters}, std::move(value), needs);
  if (needs)
    t.set_backprop(out, [x, filters, bias, out, im2col, batch, length, emb, n_filters,
                         width, pad_left, rows, cols](Tape<Real>& tape) {
      const auto& dout = tape.grad(out);
      if (tape.needs_grad(bias)) {
        auto& db = tape.grad(bias);
        for (std::size_t r = 0; r < rows; ++r)
          for (int f = 0; f < n_filters; ++f)
            db[std::size_t(f)] += dout[r * std::size_t(n_filters) + std::size_t(f)];
      }
      if (tape.needs_grad(filters)) {
        // dW [F, W*E] += dOut^T [F, rows] * im2col [rows, W*E]
        linalg::gemm(dout.data(), im2col->data(), tape.grad(filters).data(),
                     n_filters, int(rows), int(cols), /*accumulate=*/true,
                     /*trans_a=*/true, false);
      }
      if (tape.needs_grad(x)) {
        std::vector<Real> dcol(rows * cols);
        linalg::gemm(dout.data(), tape.value(filters).data(), dcol.data(), int(rows),
                     n_filters, int(cols));
        auto& dx = tape.grad(x);
        for (int b = 0; b < batch; ++b) {
          for (int l = 0; l < length; ++l) {
            const Real* row =
                dcol.data() + (std::size_t(b) * std::size_t(length) + std::size_t(l)) * cols;
            for (int w = 0; w < width; ++w) {
              const int src = l + w - pad_left;
              if (src < 0 || src >= length) continue;
              Real* dst = dx.data() + (std::size_t(b) * std::size_t(length) + std::size_t(src)) *
                                          std::size_t(emb);
              const Real* grad_row = row + std::size_t(w) * std::size_t(emb);
              for (int e = 0; e < emb; ++e) dst[e] += grad_row[e];
            }
          }
        }
      }
    });
  return out;
}

// Max over the time axis: [B, L, F] -> [B, F].
template <typename Real>
NodeId max_pool_over_time(Tape<Real>& t, NodeId x) {
  const Shape s = t.shape(x);
  require_shape(s.size() == 3, "max_pool_over_time", s, s);
  const int batch = s[0], length = s[1], width = s[2];
  std::vector<Real> value(std::size_t(batch) * std::size_t(width));
  auto argmax = std::make_shared<std::vector<int>>(std::size_t(batch) * std::size_t(width));
  const auto& vx = t.value(x);
  for (int b = 0; b < batch; ++b) {
    for (int f = 0; f < width; ++f) {
      int best = 0;
      Real best_value = vx[std::size_t(b) * std::size_t(length) * std::size_t(width) + std::size_t(f)];
      for (int l = 1; l < length; ++l) {
        const Real v = vx[(std::size_t(b) * std::size_t(length) + std::size_t(l)) * std::size_t(width) +
                          std::size_t(f)];
        if (v > best_value) {
          best_value = v;
          best = l;
        }
      }
      value[std::size_t(b) * std::size_t(width) + std::size_t(f)] = best_value;
      (*argmax)[std::size_t(b) * std::size_t(width) + std::size_t(f)] = best;
    }
  }
  const bool needs = t.needs_grad(x);
  const NodeId out = t.make({batch, width}, std::move(value), needs);
  if (needs)
    t.set_backprop(out, [x, out, argmax, batch, length, width](Tape<Real>& tape) {
      const auto& dout = tape.grad(out);
      auto& dx = tape.grad(x);
      for (int b = 0; b < batch; ++b)
        for (int f = 0; f < width; ++f) {
          const int l = (*argmax)[std::size_t(b) * std::size_t(width) + std::size_t(f)];
          dx[(std::size_t(b) * std::size_t(length) + std::size_t(l)) * std::size_t(width) +
             std::size_t(f)] += dout[std::size_t(b) * std::size_t(width) + std::size_t(f)];
        }
    });
  return out;
}

namespace detail {

template <typename Real, typename Fwd, typename Bwd>
NodeId elementwise(Tape<Real>& t, NodeId x, Fwd fwd, Bwd bwd_from_y) {
  std::vector<Real> value = t.value(x);
  for (Real& v : value) v = fwd(v);
  const bool needs = t.needs_grad(x);
  const NodeId out = t.make(t.shape(x), std::move(value), needs);
  if (needs)
    t.set_backprop(out, [x, out, bwd_from_y](Tape<Real>& tape) {
      const auto& dout = tape.grad(out);
      const auto& y = tape.value(out);
      auto& dx = tape.grad(x);
      for (std::size_t i = 0; i < dout.size(); ++i) dx[i] += dout[i] * bwd_from_y(y[i]);
    });
  return out;
}

}  // namespace detail

template <typename Real>
NodeId sigmoid(Tape<Real>& t, NodeId x) {
  return detail::elementwise(
      t, x,
      [](Real v) {
        return v >= 0 ? Real(1) / (Real(1) + std::exp(-v))
                      : Real(std::exp(v) / (Real(1) + std::exp(v)));
      },
      [](Real y) { return y * (Real(1) - y); });
}

template <typename Real>
NodeId tanh_op(Tape<Real>& t, NodeId x) {
  return detail::elementwise(t, x, [](Real v) { return std::tanh(v); },
                             [](Real y) { return Real(1) - y * y; });
}

template <typename Real>
NodeId relu(Tape<Real>& t, NodeId x) {
  return detail::elementwise(t, x, [](Real v) { return v > 0 ? v : Real(0); },
                             [](Real y) { return y > 0 ? Real(1) : Real(0); });
}

// Row-wise softmax over [B, C].
template <typename Real>
NodeId softmax(Tape<Real>& t, NodeId x) {
  const Shape s = t.shape(x);
  require_shape(s.size() == 2, "softmax", s, s);
  const int rows = s[0], cols = s[1];
  std::vector<Real> value = t.value(x);
  for (int r = 0; r < rows; ++r) {
    Real* row = value.data() + std::size_t(r) * std::size_t(cols);
    Real peak = row[0];
    for (int c = 1; c < cols; ++c) peak = std::max(peak, row[c]);
    Real total = 0;
    for (int c = 0; c < cols; ++c) {
      row[c] = std::exp(row[c] - peak);
      total += row[c];
    }
    for (int c = 0; c < cols; ++c) row[c] /= total;
  }
  const bool needs = t.needs_grad(x);
  const NodeId out = t.make(s, std::move(value), needs);
  if (needs)
    t.set_backprop(out, [x, out, rows, cols](Tape<Real>& tape) {
      const auto& dout = tape.grad(out);
      const auto& y = tape.value(out);
      auto& dx = tape.grad(x);
      for (int r = 0; r < rows; ++r) {
        const std::size_t base = std::size_t(r) * std::size_t(cols);
        Real dot = 0;
        for (int c = 0; c < cols; ++c) dot += dout[base + std::size_t(c)] * y[base + std::size_t(c)];
        for (int c = 0; c < cols; ++c)
          dx[base + std::size_t(c)] +=
              y[base + std::size_t(c)] * (dout[base + std::size_t(c)] - dot);
      }
    });
  return out;
}

// Inverted dropout: scales surviving activations by 1/(1-p) at train time,
// identity in eval mode. The mask is a pure function of `seed`.
template <typename Real>
NodeId dropout(Tape<Real>& t, NodeId x, double p, bool train_mode, std::uint64_t seed) {
  if (p < 0.0 || p >= 1.0) throw TrainError("dropout: p must be in [0, 1)");
  if (!train_mode || p == 0.0) {
    std::vector<Real> value = t.value(x);
    const bool needs = t.needs_grad(x);
    const NodeId out = t.make(t.shape(x), std::move(value), needs);
    if (needs)
      t.set_backprop(out, [x, out](Tape<Real>& tape) {
        const auto& dout = tape.grad(out);
        auto& dx = tape.grad(x);
        for (std::size_t i = 0; i < dout.size(); ++i) dx[i] += dout[i];
      });
    return out;
  }
  Rng rng(seed);
  auto mask = std::make_shared<std::vector<Real>>(t.value(x).size());
  const Real scale = Real(1.0 / (1.0 - p));
  for (auto& m : *mask) m = rng.uniform() >= p ? scale : Real(0);
  std::vector<Real> value = t.value(x);
  for (std::size_t i = 0; i < value.size(); ++i) value[i] *= (*mask)[i];
  const bool needs = t.needs_grad(x);
  const NodeId out = t.make(t.shape(x), std::move(value), needs);
  if (needs)
    t.set_backprop(out, [x, out, mask](Tape<Real>& tape) {
      const auto& dout = tape.grad(out);
      auto& dx = tape.grad(x);
      for (std::size_t i = 0; i < dout.size(); ++i) dx[i] += dout[i] * (*mask)[i];
    });
  return out;
}

// Running statistics owned by the layer, updated on train-mode forwards.
template <typename Real>
struct BatchNormState {
  std::vector<Real> running_mean;
  std::vector<Real> running_var;
  double momentum = 0.1;
  double epsilon = 1e-5;

  explicit BatchNormState(int width = 0)
      : running_mean(std::size_t(width), Real(0)),
        running_var(std::size_t(width), Real(1)) {}
};

// x [B, D], gamma [D], beta [D]. Train mode normalizes with batch
// statistics (biased variance) and updates the running buffers; eval mode
// uses the running statistics.
template <typename Real>
NodeId batch_norm_1d(Tape<Real>& t, NodeId x, NodeId gamma, NodeId beta,
                     BatchNormState<Real>& state, bool train_mode) {
  const Shape s = t.shape(x);
  require_shape(s.size() == 2, "batch_norm_1d", s, s);
  const int rows = s[0], cols = s[1];
  require_shape(int(state.running_mean.size()) == cols, "batch_norm_1d state",
                {int(state.running_mean.size())}, {cols});
  const auto& vx = t.value(x);
  const auto& vg = t.value(gamma);
  const auto& vb = t.value(beta);

  auto xhat = std::make_shared<std::vector<Real>>(vx.size());
  auto inv_std = std::make_shared<std::vector<Real>>(std::size_t(cols));

  if (train_mode) {
    for (int c = 0; c < cols; ++c) {
      Real mean = 0;
      for (int r = 0; r < rows; ++r) mean += vx[std::size_t(r) * std::size_t(cols) + std::size_t(c)];
      mean /= Real(rows);
      Real var = 0;
      for (int r = 0; r < rows; ++r) {
        const Real d = vx[std::size_t(r) * std::size_t(cols) + std::size_t(c)] - mean;
        var += d * d;
      }
      var /= Real(rows);
      (*inv_std)[std::size_t(c)] = Real(1) / std::sqrt(var + Real(state.epsilon));
      for (int r = 0; r < rows; ++r)
        (*xhat)[std::size_t(r) * std::size_t(cols) + std::size_t(c)] =
            (vx[std::size_t(r) * std::size_t(cols) + std::size_t(c)] - mean) * (*inv_std)[std::size_t(c)];
      state.running_mean[std::size_t(c)] =
          Real(1.0 - state.momentum) * state.running_mean[std::size_t(c)] +
          Real(state.momentum) * mean;
      state.running_var[std::size_t(c)] =
          Real(1.0 - state.momentum) * state.running_var[std::size_t(c)] +
          Real(state.momentum) * var;
    }
  } else {
    for (int c = 0; c < cols; ++c)
      (*inv_std)[std::size_t(c)] =
          Real(1) / std::sqrt(state.running_var[std::size_t(c)] + Real(state.epsilon));
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c)
        (*xhat)[std::size_t(r) * std::size_t(cols) + std::size_t(c)] =
            (vx[std::size_t(r) * std::size_t(cols) + std::size_t(c)] -
             state.running_mean[std::size_t(c)]) *
            (*inv_std)[std::size_t(c)];
  }
  std::vector<Real> value(vx.size());
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      value[std::size_t(r) * std::size_t(cols) + std::size_t(c)] =
          vg[std::size_t(c)] * (*xhat)[std::size_t(r) * std::size_t(cols) + std::size_t(c)] +
          vb[std::size_t(c)];
  const bool needs = t.needs_grad(x) || t.needs_grad(gamma) || t.needs_grad(beta);
  const NodeId out = t.make(s, std::move(value), needs);
  if (needs)
    t.set_backprop(out, [x, gamma, beta, out, xhat, inv_std, rows, cols,
                         train_mode](Tape<Real>& tape) {
      const auto& dout = tape.grad(out);
      const auto& vg = tape.value(gamma);
      if (tape.needs_grad(gamma)) {
        auto& dg = tape.grad(gamma);
        for (int r = 0; r < rows; ++r)
          for (int c = 0; c < cols; ++c)
            dg[std::size_t(c)] += dout[std::size_t(r) * std::size_t(cols) + std::size_t(c)] *
                                  (*xhat)[std::size_t(r) * std::size_t(cols) + std::size_t(c)];
      }
      if (tape.needs_grad(beta)) {
        auto& db = tape.grad(beta);
        for (int r = 0; r < rows; ++r)
          for (int c = 0; c < cols; ++c)
            db[std::size_t(c)] += dout[std::size_t(r) * std::size_t(cols) + std::size_t(c)];
      }
      if (!tape.needs_grad(x)) return;
      auto& dx = tape.grad(x);
      if (!train_mode) {
        for (int r = 0; r < rows; ++r)
          for (int c = 0; c < cols; ++c)
            dx[std::size_t(r) * std::size_t(cols) + std::size_t(c)] +=
                dout[std::size_t(r) * std::size_t(cols) + std::size_t(c)] * vg[std::size_t(c)] *
                (*inv_std)[std::size_t(c)];
        return;
      }
      // Train mode: gradients flow through the batch statistics.
      for (int c = 0; c < cols; ++c) {
        Real sum_dxhat = 0, sum_dxhat_xhat = 0;
        for (int r = 0; r < rows; ++r) {
          const std::size_t i = std::size_t(r) * std::size_t(cols) + std::size_t(c);
          const Real dxhat = dout[i] * vg[std::size_t(c)];
          sum_dxhat += dxhat;
          sum_dxhat_xhat += dxhat * (*xhat)[i];
        }
        for (int r = 0; r < rows; ++r) {
          const std::size_t i = std::size_t(r) * std::size_t(cols) + std::size_t(c);
          const Real dxhat = dout[i] * vg[std::size_t(c)];
          dx[i] += (*inv_std)[std::size_t(c)] / Real(rows) *
                   (Real(rows) * dxhat - sum_dxhat - (*xhat)[i] * sum_dxhat_xhat);
        }
      }
    });
  return out;
}

// Mean cross entropy from logits [B, C]; targets < 0 are ignored rows.
template <typename Real>
NodeId cross_entropy(Tape<Real>& t, NodeId logits, const std::vector<int>& targets) {
  const Shape s = t.shape(logits);
  require_shape(s.size() == 2 && int(targets.size()) == s[0], "cross_entropy", s,
                {int(targets.size())});
  const int rows = s[0], cols = s[1];
  auto probs = std::make_shared<std::vector<Real>>(t.value(logits));
  int counted = 0;
  double loss = 0;
  for (int r = 0; r < rows; ++r) {
    Real* row = probs->data() + std::size_t(r) * std::size_t(cols);
    Real peak = row[0];
    for (int c = 1; c < cols; ++c) peak = std::max(peak, row[c]);
    double total = 0;
    for (int c = 0; c < cols; ++c) total += std::exp(double(row[c] - peak));
    const double log_total = std::log(total) + double(peak);
    const int target = targets[std::size_t(r)];
    if (target >= 0) {
      if (target >= cols)
        throw TrainError("cross_entropy: target " + std::to_string(target) +
                         " outside " + std::to_string(cols) + " classes");
      loss += log_total - double(row[target]);
      ++counted;
    }
    for (int c = 0; c < cols; ++c)
      row[c] = Real(std::exp(double(row[c]) - log_total));
  }
  if (counted == 0) throw TrainError("cross_entropy: no counted rows");
  const bool needs = t.needs_grad(logits);
  const NodeId out = t.make({1}, {Real(loss / counted)}, needs);
  if (needs)
    t.set_backprop(out, [logits, out, probs, targets, rows, cols, counted](Tape<Real>& tape) {
      const Real dloss = tape.grad(out)[0];
      auto& dx = tape.grad(logits);
      const Real scale = dloss / Real(counted);
      for (int r = 0; r < rows; ++r) {
        const int target = targets[std::size_t(r)];
        if (target < 0) continue;
        const std::size_t base = std::size_t(r) * std::size_t(cols);
        for (int c = 0; c < cols; ++c) {
          Real g = (*probs)[base + std::size_t(c)];
          if (c == target) g -= Real(1);
          dx[base + std::size_t(c)] += scale * g;
        }
      }
    });
  return out;
}

// Mean binary cross entropy from logits; targets are 0/1 reals.
template <typename Real>
NodeId binary_cross_entropy(Tape<Real>& t, NodeId logits,
                            const std::vector<Real>& targets) {
  const Shape s = t.shape(logits);
  if (numel(s) != targets.size())
    throw TrainError("binary_cross_entropy: logit count " + shape_str(s) +
                     " does not match " + std::to_string(targets.size()) + " targets");
  const auto& z = t.value(logits);
  double loss = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double zi = double(z[i]);
    loss += std::max(zi, 0.0) - zi * double(targets[i]) + std::log1p(std::exp(-std::abs(zi)));
  }
  const std::size_t n = z.size();
  const bool needs = t.needs_grad(logits);
  const NodeId out = t.make({1}, {Real(loss / double(n))}, needs);
  if (needs)
    t.set_backprop(out, [logits, out, targets, n](Tape<Real>& tape) {
      const Real dloss = tape.grad(out)[0];
      const auto& z = tape.value(logits);
      auto& dx = tape.grad(logits);
      for (std::size_t i = 0; i < n; ++i) {
        const double zi = double(z[i]);
        const double sig = zi >= 0 ? 1.0 / (1.0 + std::exp(-zi))
                                   : std::exp(zi) / (1.0 + std::exp(zi));
        dx[i] += dloss * Real((sig - double(targets[i])) / double(n));
      }
    });
  return out;
}

// Mean squared error over all elements.
template <typename Real>
NodeId mean_squared_error(Tape<Real>& t, NodeId pred, const std::vector<Real>& targets) {
  const Shape s = t.shape(pred);
  if (numel(s) != targets.size())
    throw TrainError("mean_squared_error: prediction count " + shape_str(s) +
                     " does not match " + std::to_string(targets.size()) + " targets");
  const auto& p = t.value(pred);
  double loss = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = double(p[i]) - double(targets[i]);
    loss += d * d;
  }
  const std::size_t n = p.size();
  const bool needs = t.needs_grad(pred);
  const NodeId out = t.make({1}, {Real(loss / double(n))}, needs);
  if (needs)
    t.set_backprop(out, [pred, out, targets, n](Tape<Real>& tape) {
      const Real dloss = tape.grad(out)[0];
      const auto& p = tape.value(pred);
      auto& dx = tape.grad(pred);
      for (std::size_t i = 0; i < n; ++i)
        dx[i] += dloss * Real(2.0) * (p[i] - targets[i]) / Real(double(n));
    });
  return out;
}

// Scalar-weighted sum of scalar losses.
template <typename Real>
NodeId weighted_sum(Tape<Real>& t, const std::vector<std::pair<NodeId, Real>>& terms) {
  if (terms.empty()) throw TrainError("weighted_sum: no terms");
  Real total = 0;
  bool needs = false;
  for (const auto& [id, weight] : terms) {
    if (numel(t.shape(id)) != 1)
      throw TrainError("weighted_sum: term is not scalar: " + shape_str(t.shape(id)));
    total += weight * t.value(id)[0];
    needs = needs || t.needs_grad(id);
  }
  const NodeId out = t.make({1}, {total}, needs);
  if (needs)
    t.set_backprop(out, [terms, out](Tape<Real>& tape) {
      const Real dloss = tape.grad(out)[0];
      for (const auto& [id, weight] : terms)
        if (tape.needs_grad(id)) tape.grad(id)[0] += weight * dloss;
    });
  return out;
}

// out[i, :] = mask[i] ? a[i, :] : fallback. Used for learned
// missing-feature placeholders; fallback is a [D] vector.
template <typename Real>
NodeId row_select(Tape<Real>& t, const std::vector<bool>& mask, NodeId a,
                  NodeId fallback) {
  const Shape sa = t.shape(a), sf = t.shape(fallback);
  require_shape(sa.size() == 2 && sf.size() == 1 && sa[1] == sf[0], "row_select", sa, sf);
  const int rows = sa[0], cols = sa[1];
  if (int(mask.size()) != rows)
    throw TrainError("row_select: mask length does not match rows");
  std::vector<Real> value(numel(sa));
  const auto& va = t.value(a);
  const auto& vf = t.value(fallback);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      value[std::size_t(r) * std::size_t(cols) + std::size_t(c)] =
          mask[std::size_t(r)] ? va[std::size_t(r) * std::size_t(cols) + std::size_t(c)]
                               : vf[std::size_t(c)];
  const bool needs = t.needs_grad(a) || t.needs_grad(fallback);
  const NodeId out = t.make(sa, std::move(value), needs);
  if (needs)
    t.set_backprop(out, [a, fallback, out, mask, rows, cols](Tape<Real>& tape) {
      const auto& dout = tape.grad(out);
      for (int r = 0; r < rows; ++r) {
        const std::size_t base = std::size_t(r) * std::size_t(cols);
        if (mask[std::size_t(r)]) {
          if (tape.needs_grad(a)) {
            auto& da = tape.grad(a);
            for (int c = 0; c < cols; ++c) da[base + std::size_t(c)] += dout[base + std::size_t(c)];
          }
        } else if (tape.needs_grad(fallback)) {
          auto& df = tape.grad(fallback);
          for (int c = 0; c < cols; ++c) df[std::size_t(c)] += dout[base + std::size_t(c)];
        }
      }
    });
  return out;
}

// Rank-1 slice used for packed biases: elements [begin, end) of a vector.
template <typename Real>
NodeId slice_vec(Tape<Real>& t, NodeId b, int begin, int end) {
  const Shape s = t.shape(b);
  require_shape(s.size() == 1 && begin >= 0 && end <= s[0] && begin < end,
                "slice_vec", s, {begin, end});
  const int width = end - begin;
  std::vector<Real> value(static_cast<std::size_t>(width));
  const auto& vb = t.value(b);
  for (int i = 0; i < width; ++i) value[std::size_t(i)] = vb[std::size_t(begin + i)];
  const bool needs = t.needs_grad(b);
  const NodeId out = t.make({width}, std::move(value), needs);
  if (needs)
    t.set_backprop(out, [b, out, begin, width](Tape<Real>& tape) {
      const auto& dout = tape.grad(out);
      auto& db = tape.grad(b);
      for (int i = 0; i < width; ++i) db[std::size_t(begin + i)] += dout[std::size_t(i)];
    });
  return out;
}

// --- Recurrent steps (composed from primitives) -----------------------------

// h' = tanh(x Wx + h Wh + b)
template <typename Real>
NodeId rnn_step_simple(Tape<Real>& t, NodeId x, NodeId h, NodeId wx, NodeId wh,
                       NodeId b) {
  return tanh_op(t, add(t, add(t, matmul(t, x, wx), matmul(t, h, wh)), b));
}

template <typename Real>
struct LstmOut {
  NodeId h;
  NodeId c;
};

// Gates packed along columns as [i | f | g | o]; wx [I, 4H], wh [H, 4H],
// b [4H].
template <typename Real>
LstmOut<Real> lstm_step(Tape<Real>& t, NodeId x, NodeId h, NodeId c, NodeId wx,
                        NodeId wh, NodeId b) {
  const int hidden = t.shape(h)[1];
  const NodeId z = add(t, add(t, matmul(t, x, wx), matmul(t, h, wh)), b);
  const NodeId gate_i = sigmoid(t, slice_cols(t, z, 0, hidden));
  const NodeId gate_f = sigmoid(t, slice_cols(t, z, hidden, 2 * hidden));
  const NodeId gate_g = tanh_op(t, slice_cols(t, z, 2 * hidden, 3 * hidden));
  const NodeId gate_o = sigmoid(t, slice_cols(t, z, 3 * hidden, 4 * hidden));
  const NodeId c_next = add(t, mul(t, gate_f, c), mul(t, gate_i, gate_g));
  const NodeId h_next = mul(t, gate_o, tanh_op(t, c_next));
  return {h_next, c_next};
}

// Gates packed as [z | r | n]; wx [I, 3H], wh [H, 3H], b [3H].
template <typename Real>
NodeId gru_step(Tape<Real>& t, NodeId x, NodeId h, NodeId wx, NodeId wh, NodeId b) {
  const int hidden = t.shape(h)[1];
  const NodeId zx = matmul(t, x, wx);
  const NodeId zh = matmul(t, h, wh);
  const NodeId gate_z = sigmoid(
      t, add(t, add(t, slice_cols(t, zx, 0, hidden), slice_cols(t, zh, 0, hidden)),
             slice_vec(t, b, 0, hidden)));
  const NodeId gate_r = sigmoid(
      t, add(t, add(t, slice_cols(t, zx, hidden, 2 * hidden),
                    slice_cols(t, zh, hidden, 2 * hidden)),
             slice_vec(t, b, hidden, 2 * hidden)));
  const NodeId candidate = tanh_op(
      t, add(t, add(t, slice_cols(t, zx, 2 * hidden, 3 * hidden),
                    mul(t, gate_r, slice_cols(t, zh, 2 * hidden, 3 * hidden))),
             slice_vec(t, b, 2 * hidden, 3 * hidden)));
  // h' = (1 - z) * n + z * h
  const NodeId one_minus_z = scale_add(t, gate_z, Real(-1), Real(1));
  return add(t, mul(t, one_minus_z, candidate), mul(t, gate_z, h));
}

// --- Adam --------------------------------------------------------------------

struct AdamConfig {
  double learning_rate = 0.00025;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename Real>
class AdamState {
 public:
  explicit AdamState(AdamConfig config = {}) : config_(config) {}

  const AdamConfig& config() const { return config_; }
  long step_count() const { return step_; }

  // Standard bias-corrected update from each param's accumulated gradient;
  // gradients are cleared afterwards.
  void step(const std::vector<Param<Real>*>& params) {
    ++step_;
    const double bc1 = 1.0 - std::pow(config_.beta1, double(step_));
    const double bc2 = 1.0 - std::pow(config_.beta2, double(step_));
    for (Param<Real>* param : params) {
      auto& m = moment1_[param->name];
      auto& v = moment2_[param->name];
      if (m.size() != param->value.size()) m.assign(param->value.size(), Real(0));
      if (v.size() != param->value.size()) v.assign(param->value.size(), Real(0));
      for (std::size_t i = 0; i < param->value.size(); ++i) {
        const double g = double(param->grad[i]);
        m[i] = Real(config_.beta1 * double(m[i]) + (1.0 - config_.beta1) * g);
        v[i] = Real(config_.beta2 * double(v[i]) + (1.0 - config_.beta2) * g * g);
        const double m_hat = double(m[i]) / bc1;
        const double v_hat = double(v[i]) / bc2;
        param->value[i] -=
            Real(config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon));
      }
      param->zero_grad();
    }
  }

 private:
  AdamConfig config_;
  long step_ = 0;
  std::map<std::string, std::vector<Real>> moment1_;
  std::map<std::string, std::vector<Real>> moment2_;
};

// --- Parameter checkpoints ---------------------------------------------------
// Versioned binary named-parameter table; values stored as little-endian
// float64 regardless of Real.

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out += char((v >> (8 * i)) & 0xFF);
}
inline std::uint32_t get_u32(const std::string& in, std::size_t& pos) {
  if (pos + 4 > in.size()) throw DataError("checkpoint: truncated file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= std::uint32_t(static_cast<unsigned char>(in[pos + std::size_t(i)])) << (8 * i);
  pos += 4;
  return v;
}
inline void put_f64(std::string& out, double value) {
  std::uint64_t bits;
  std::memcpy(&bits, &value, 8);
  for (int i = 0; i < 8; ++i) out += char((bits >> (8 * i)) & 0xFF);
}
inline double get_f64(const std::string& in, std::size_t& pos) {
  if (pos + 8 > in.size()) throw DataError("checkpoint: truncated file");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i)
    bits |= std::uint64_t(static_cast<unsigned char>(in[pos + std::size_t(i)])) << (8 * i);
  pos += 8;
  double value;
  std::memcpy(&value, &bits, 8);
  return value;
}

}  // namespace detail

template <typename Real>
std::string serialize_params(const std::vector<const Param<Real>*>& params) {
  std::string out = "COTACKPT";
  out += char(1);
  detail::put_u32(out, std::uint32_t(params.size()));
  for (const Param<Real>* param : params) {
    detail::put_u32(out, std::uint32_t(param->name.size()));
    out += param->name;
    detail::put_u32(out, std::uint32_t(param->shape.size()));
    for (int d : param->shape) detail::put_u32(out, std::uint32_t(d));
    for (Real v : param->value) detail::put_f64(out, double(v));
  }
  return out;
}

// Loads values into an existing parameter table, matching by name.
template <typename Real>
void load_params(const std::string& bytes, std::vector<Param<Real>*>& params) {
  if (bytes.size() < 9 || bytes.compare(0, 8, "COTACKPT") != 0)
    throw DataError("checkpoint: bad magic");
  if (bytes[8] != char(1)) throw DataError("checkpoint: unsupported version");
  std::size_t pos = 9;
  std::map<std::string, Param<Real>*> by_name;
  for (Param<Real>* param : params) by_name[param->name] = param;
  const std::uint32_t count = detail::get_u32(bytes, pos);
  std::size_t loaded = 0;
  for (std::uint32_t p = 0; p < count; ++p) {
    const std::uint32_t name_len = detail::get_u32(bytes, pos);
    if (pos + name_len > bytes.size()) throw DataError("checkpoint: truncated name");
    const std::string name = bytes.substr(pos, name_len);
    pos += name_len;
    const std::uint32_t ndims = detail::get_u32(bytes, pos);
    Shape shape;
    for (std::uint32_t d = 0; d < ndims; ++d)
      shape.push_back(int(detail::get_u32(bytes, pos)));
    const std::size_t count_values = numel(shape);
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      pos += count_values * 8;  // skip unknown parameter
      continue;
    }
    if (it->second->shape != shape)
      throw DataError("checkpoint: shape mismatch for " + name + ": file " +
                      shape_str(shape) + " vs model " + shape_str(it->second->shape));
    for (std::size_t i = 0; i < count_values; ++i)
      it->second->value[i] = Real(detail::get_f64(bytes, pos));
    ++loaded;
  }
  if (loaded != by_name.size())
    throw DataError("checkpoint: missing parameters (" + std::to_string(loaded) +
                    " of " + std::to_string(by_name.size()) + " loaded)");
}

}  // namespace cota::ad
