#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "synadapt/common.hpp"

namespace synadapt::ad {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Ref = std::int32_t;

inline constexpr double kLnEps = 1e-5;
inline constexpr double kMaskNegInf = -1e9;

// Tape-based reverse-mode engine over row-major dense matrices. One Graph per
// forward/backward pass; node values are immutable once created.
template <class S>
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Ref input(Mat<S> value, bool needs_grad = false) {
    return push(std::move(value), needs_grad);
  }

  const Mat<S>& val(Ref r) const { return node(r).value; }
  const Mat<S>& grad(Ref r) const {
    const auto& n = node(r);
    if (!n.needs_grad) throw InvalidArgument("grad requested for a non-grad node");
    return n.grad;
  }

  Ref add(Ref a, Ref b) {
    check_same_shape(a, b, "add");
    return push(val(a) + val(b), needs(a) || needs(b), [this, a, b](const Mat<S>& g) {
      accum(a, g);
      accum(b, g);
    });
  }

  // a: R×C, b: 1×C broadcast over rows
  Ref add_rowvec(Ref a, Ref b) {
    if (val(b).rows() != 1 || val(a).cols() != val(b).cols()) {
      throw InvalidArgument("add_rowvec: shape mismatch");
    }
    Mat<S> out = val(a);
    out.rowwise() += val(b).row(0);
    return push(std::move(out), needs(a) || needs(b), [this, a, b](const Mat<S>& g) {
      accum(a, g);
      if (needs(b)) accum(b, g.colwise().sum());
    });
  }

  Ref mul(Ref a, Ref b) {
    check_same_shape(a, b, "mul");
    return push(val(a).cwiseProduct(val(b)), needs(a) || needs(b),
                [this, a, b](const Mat<S>& g) {
                  if (needs(a)) accum(a, g.cwiseProduct(val(b)));
                  if (needs(b)) accum(b, g.cwiseProduct(val(a)));
                });
  }

  Ref matmul(Ref a, Ref b) {
    if (val(a).cols() != val(b).rows()) throw InvalidArgument("matmul: inner dim mismatch");
    return push(val(a) * val(b), needs(a) || needs(b), [this, a, b](const Mat<S>& g) {
      if (needs(a)) accum(a, g * val(b).transpose());
      if (needs(b)) accum(b, val(a).transpose() * g);
    });
  }

  // a · bᵀ
  Ref matmul_nt(Ref a, Ref b) {
    if (val(a).cols() != val(b).cols()) throw InvalidArgument("matmul_nt: inner dim mismatch");
    return push(val(a) * val(b).transpose(), needs(a) || needs(b), [this, a, b](const Mat<S>& g) {
      if (needs(a)) accum(a, g * val(b));
      if (needs(b)) accum(b, g.transpose() * val(a));
    });
  }

  Ref scale(Ref a, S s) {
    return push(val(a) * s, needs(a), [this, a, s](const Mat<S>& g) { accum(a, g * s); });
  }

  Ref relu(Ref a) {
    return push(val(a).cwiseMax(S(0)), needs(a), [this, a](const Mat<S>& g) {
      accum(a, (val(a).array() > S(0)).template cast<S>().matrix().cwiseProduct(g));
    });
  }

  Ref layernorm(Ref a, Ref gain, Ref bias) {
    const auto& x = val(a);
    const Eigen::Index rows = x.rows(), cols = x.cols();
    if (val(gain).rows() != 1 || val(gain).cols() != cols || val(bias).rows() != 1 ||
        val(bias).cols() != cols) {
      throw InvalidArgument("layernorm: gain/bias must be 1×C");
    }
    Mat<S> xhat(rows, cols);
    Mat<S> inv_std(rows, 1);
    for (Eigen::Index i = 0; i < rows; ++i) {
      const S mu = x.row(i).mean();
      const S var = (x.row(i).array() - mu).square().mean();
      const S is = S(1) / std::sqrt(var + S(kLnEps));
      inv_std(i, 0) = is;
      xhat.row(i) = (x.row(i).array() - mu).matrix() * is;
    }
    Mat<S> out = xhat;
    out.array().rowwise() *= val(gain).row(0).array();
    out.rowwise() += val(bias).row(0);
    return push(std::move(out), needs(a) || needs(gain) || needs(bias),
                [this, a, gain, bias, xhat, inv_std](const Mat<S>& g) {
                  if (needs(bias)) accum(bias, g.colwise().sum());
                  if (needs(gain)) accum(gain, g.cwiseProduct(xhat).colwise().sum());
                  if (!needs(a)) return;
                  Mat<S> dxhat = g;
                  dxhat.array().rowwise() *= val(gain).row(0).array();
                  Mat<S> dx(dxhat.rows(), dxhat.cols());
                  for (Eigen::Index i = 0; i < dxhat.rows(); ++i) {
                    const S m1 = dxhat.row(i).mean();
                    const S m2 = dxhat.row(i).cwiseProduct(xhat.row(i)).mean();
                    dx.row(i) = ((dxhat.row(i).array() - m1) - xhat.row(i).array() * m2).matrix() *
                                inv_std(i, 0);
                  }
                  accum(a, dx);
                });
  }

  Ref softmax_rows(Ref a) {
    const auto& x = val(a);
    Mat<S> p(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const S m = x.row(i).maxCoeff();
      // scalar std::exp: masked scores (-1e9) must underflow to exactly zero,
      // which Eigen's clamped packet exp does not guarantee
      for (Eigen::Index j = 0; j < x.cols(); ++j) p(i, j) = std::exp(x(i, j) - m);
      p.row(i) /= p.row(i).sum();
    }
    const Ref out = push(std::move(p), needs(a));
    if (needs(a)) {
      node(out).back = [this, a, out](const Mat<S>& g) {
        const auto& prob = val(out);
        Mat<S> dx(prob.rows(), prob.cols());
        for (Eigen::Index i = 0; i < prob.rows(); ++i) {
          const S dot = g.row(i).cwiseProduct(prob.row(i)).sum();
          dx.row(i) = prob.row(i).cwiseProduct((g.row(i).array() - dot).matrix());
        }
        accum(a, dx);
      };
    }
    return out;
  }

  Ref rows_gather(Ref a, std::vector<Eigen::Index> rows) {
    const auto& x = val(a);
    for (const auto r : rows) {
      if (r < 0 || r >= x.rows()) throw InvalidArgument("rows_gather: index out of range");
    }
    Mat<S> out(static_cast<Eigen::Index>(rows.size()), x.cols());
    for (Eigen::Index i = 0; i < out.rows(); ++i) out.row(i) = x.row(rows[static_cast<std::size_t>(i)]);
    return push(std::move(out), needs(a), [this, a, rows = std::move(rows)](const Mat<S>& g) {
      Mat<S> dx = Mat<S>::Zero(val(a).rows(), val(a).cols());
      for (Eigen::Index i = 0; i < g.rows(); ++i) dx.row(rows[static_cast<std::size_t>(i)]) += g.row(i);
      accum(a, dx);
    });
  }

  Ref slice_cols(Ref a, Eigen::Index off, Eigen::Index width) {
    if (off < 0 || width <= 0 || off + width > val(a).cols()) {
      throw InvalidArgument("slice_cols: range out of bounds");
    }
    return push(val(a).middleCols(off, width), needs(a), [this, a, off, width](const Mat<S>& g) {
      Mat<S> dx = Mat<S>::Zero(val(a).rows(), val(a).cols());
      dx.middleCols(off, width) = g;
      accum(a, dx);
    });
  }

  Ref concat_cols(const std::vector<Ref>& parts) {
    if (parts.empty()) throw InvalidArgument("concat_cols: empty");
    Eigen::Index cols = 0;
    const Eigen::Index rows = val(parts[0]).rows();
    bool ng = false;
    for (const Ref p : parts) {
      if (val(p).rows() != rows) throw InvalidArgument("concat_cols: row mismatch");
      cols += val(p).cols();
      ng = ng || needs(p);
    }
    Mat<S> out(rows, cols);
    Eigen::Index off = 0;
    for (const Ref p : parts) {
      out.middleCols(off, val(p).cols()) = val(p);
      off += val(p).cols();
    }
    return push(std::move(out), ng, [this, parts](const Mat<S>& g) {
      Eigen::Index off = 0;
      for (const Ref p : parts) {
        const Eigen::Index w = val(p).cols();
        if (needs(p)) accum(p, g.middleCols(off, w));
        off += w;
      }
    });
  }

  Ref concat_rows(const std::vector<Ref>& parts) {
    if (parts.empty()) throw InvalidArgument("concat_rows: empty");
    Eigen::Index rows = 0;
    const Eigen::Index cols = val(parts[0]).cols();
    bool ng = false;
    for (const Ref p : parts) {
      if (val(p).cols() != cols) throw InvalidArgument("concat_rows: col mismatch");
      rows += val(p).rows();
      ng = ng || needs(p);
    }
    Mat<S> out(rows, cols);
    Eigen::Index off = 0;
    for (const Ref p : parts) {
      out.middleRows(off, val(p).rows()) = val(p);
      off += val(p).rows();
    }
    return push(std::move(out), ng, [this, parts](const Mat<S>& g) {
      Eigen::Index off = 0;
      for (const Ref p : parts) {
        const Eigen::Index h = val(p).rows();
        if (needs(p)) accum(p, g.middleRows(off, h));
        off += h;
      }
    });
  }

  // per-row dot product → R×1
  Ref rowdot(Ref a, Ref b) {
    check_same_shape(a, b, "rowdot");
    Mat<S> out = val(a).cwiseProduct(val(b)).rowwise().sum();
    return push(std::move(out), needs(a) || needs(b), [this, a, b](const Mat<S>& g) {
      if (needs(a)) accum(a, val(b).array().colwise() * g.col(0).array());
      if (needs(b)) accum(b, val(a).array().colwise() * g.col(0).array());
    });
  }

  // scale row i of a by s(i,0)
  Ref colscale(Ref a, Ref s) {
    if (val(s).cols() != 1 || val(s).rows() != val(a).rows()) {
      throw InvalidArgument("colscale: scale must be R×1");
    }
    Mat<S> out = val(a).array().colwise() * val(s).col(0).array();
    return push(std::move(out), needs(a) || needs(s), [this, a, s](const Mat<S>& g) {
      if (needs(a)) accum(a, g.array().colwise() * val(s).col(0).array());
      if (needs(s)) accum(s, g.cwiseProduct(val(a)).rowwise().sum());
    });
  }

  Ref sum(Ref a) {
    Mat<S> out(1, 1);
    out(0, 0) = val(a).sum();
    return push(std::move(out), needs(a), [this, a](const Mat<S>& g) {
      accum(a, Mat<S>::Constant(val(a).rows(), val(a).cols(), g(0, 0)));
    });
  }

  struct CeResult {
    Ref loss = -1;                      // 1×1
    std::vector<std::uint8_t> correct;  // per counted position, argmax == target
    std::vector<Eigen::Index> counted_rows;
    S weighted_count = S(0);  // Σ class weights over counted rows (== count when unweighted)
  };

  // Cross-entropy over rows whose target >= 0, as Σ w·(−log p_target) / normalizer.
  // Pass normalizer = weighted count over the whole batch to get the batch mean.
  CeResult masked_ce(Ref logits, const std::vector<std::int32_t>& targets, S normalizer,
                     const std::vector<S>& class_weights = {}) {
    const auto& x = val(logits);
    if (static_cast<Eigen::Index>(targets.size()) != x.rows()) {
      throw InvalidArgument("masked_ce: one target per row required");
    }
    if (!(normalizer > S(0))) throw InvalidArgument("masked_ce: normalizer must be positive");
    CeResult res;
    S total = S(0);
    Mat<S> dx;
    const bool ng = needs(logits);
    if (ng) dx = Mat<S>::Zero(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const std::int32_t y = targets[static_cast<std::size_t>(i)];
      if (y < 0) continue;
      if (y >= x.cols()) throw InvalidArgument("masked_ce: target out of range");
      const S w = class_weights.empty() ? S(1) : class_weights.at(static_cast<std::size_t>(y));
      const S m = x.row(i).maxCoeff();
      const S lse = m + std::log((x.row(i).array() - m).exp().sum());
      total += w * (lse - x(i, y));
      res.weighted_count += w;
      Eigen::Index argmax = 0;
      x.row(i).maxCoeff(&argmax);
      res.correct.push_back(argmax == static_cast<Eigen::Index>(y) ? 1 : 0);
      res.counted_rows.push_back(i);
      if (ng) {
        dx.row(i) = ((x.row(i).array() - lse).exp() * (w / normalizer)).matrix();
        dx(i, y) -= w / normalizer;
      }
    }
    if (res.counted_rows.empty()) throw InvalidArgument("masked_ce: zero counted positions");
    Mat<S> out(1, 1);
    out(0, 0) = total / normalizer;
    res.loss = push(std::move(out), ng, [this, logits, dx = std::move(dx)](const Mat<S>& g) {
      accum(logits, dx * g(0, 0));
    });
    return res;
  }

  void backward(Ref loss) {
    auto& ln = node(loss);
    if (ln.value.rows() != 1 || ln.value.cols() != 1) {
      throw InvalidArgument("backward: loss must be scalar");
    }
    if (!ln.needs_grad) throw InvalidArgument("backward: loss does not depend on any grad node");
    for (auto& n : nodes_) {
      if (n.needs_grad) n.grad = Mat<S>::Zero(n.value.rows(), n.value.cols());
    }
    ln.grad(0, 0) = S(1);
    for (std::int64_t i = loss; i >= 0; --i) {
      auto& n = nodes_[static_cast<std::size_t>(i)];
      if (n.needs_grad && n.back) n.back(n.grad);
    }
  }

  bool all_finite(Ref r) const { return val(r).allFinite(); }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct NodeData {
    Mat<S> value;
    Mat<S> grad;
    bool needs_grad = false;
    std::function<void(const Mat<S>&)> back;
  };

  NodeData& node(Ref r) { return nodes_.at(static_cast<std::size_t>(r)); }
  const NodeData& node(Ref r) const { return nodes_.at(static_cast<std::size_t>(r)); }
  bool needs(Ref r) const { return node(r).needs_grad; }

  Ref push(Mat<S> value, bool needs_grad) {
    NodeData n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return static_cast<Ref>(nodes_.size() - 1);
  }

  template <class F>
  Ref push(Mat<S> value, bool needs_grad, F&& back) {
    const Ref r = push(std::move(value), needs_grad);
    if (needs_grad) nodes_.back().back = std::forward<F>(back);
    return r;
  }

  void accum(Ref r, const Mat<S>& g) {
    auto& n = node(r);
    if (n.needs_grad) n.grad += g;
  }

  void check_same_shape(Ref a, Ref b, const char* op) const {
    if (val(a).rows() != val(b).rows() || val(a).cols() != val(b).cols()) {
      throw InvalidArgument(std::string(op) + ": shape mismatch");
    }
  }

  std::vector<NodeData> nodes_;
};

}  // namespace synadapt::ad
