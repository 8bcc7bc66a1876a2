#pragma once

// Independent scalar-loop reference implementations. Everything here is
// written against the math directly (index loops, no shared library helpers)
// so the vectorized implementations have something honest to disagree with.

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

namespace oracle {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Eq. 1: out[i][j] = sum_k relu(h[i]·D[:,k] + bD[k]) * U[k][j] + bU[j] + r[i][j]
inline Mat adapter(const Mat& h, const Mat& r, const Mat& dw, const Mat& db, const Mat& uw,
                   const Mat& ub) {
  const auto rows = h.rows(), hid = h.cols(), bott = dw.cols();
  Mat out(rows, hid);
  for (Eigen::Index i = 0; i < rows; ++i) {
    std::vector<double> mid(static_cast<std::size_t>(bott));
    for (Eigen::Index k = 0; k < bott; ++k) {
      double acc = db(0, k);
      for (Eigen::Index j = 0; j < hid; ++j) acc += h(i, j) * dw(j, k);
      mid[static_cast<std::size_t>(k)] = acc > 0.0 ? acc : 0.0;
    }
    for (Eigen::Index j = 0; j < hid; ++j) {
      double acc = ub(0, j);
      for (Eigen::Index k = 0; k < bott; ++k) acc += mid[static_cast<std::size_t>(k)] * uw(k, j);
      out(i, j) = acc + r(i, j);
    }
  }
  return out;
}

inline std::vector<double> softmax(const std::vector<double>& x) {
  double top = -std::numeric_limits<double>::infinity();
  for (const double v : x) top = v > top ? v : top;
  double z = 0.0;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - top);
    z += out[i];
  }
  for (double& v : out) v /= z;
  return out;
}

struct FusionOut {
  Mat fused;
  Mat weights;
};

// Per position i: q = query[i]·Q + bq, k_n = a_n[i]·K + bk, s_n = q·k_n / sqrt(h),
// alpha = softmax(s), fused[i] = sum_n alpha_n (a_n[i]·V + bv).
inline FusionOut fusion(const Mat& query, const std::vector<Mat>& adapters, const Mat& qw,
                        const Mat& qb, const Mat& kw, const Mat& kb, const Mat& vw,
                        const Mat& vb) {
  const auto rows = query.rows(), hid = query.cols();
  const auto n = static_cast<Eigen::Index>(adapters.size());
  FusionOut out;
  out.fused = Mat::Zero(rows, hid);
  out.weights = Mat::Zero(rows, n);
  for (Eigen::Index i = 0; i < rows; ++i) {
    std::vector<double> q(static_cast<std::size_t>(hid));
    for (Eigen::Index j = 0; j < hid; ++j) {
      double acc = qb(0, j);
      for (Eigen::Index c = 0; c < hid; ++c) acc += query(i, c) * qw(c, j);
      q[static_cast<std::size_t>(j)] = acc;
    }
    std::vector<double> scores(static_cast<std::size_t>(n));
    for (Eigen::Index a = 0; a < n; ++a) {
      double dot = 0.0;
      for (Eigen::Index j = 0; j < hid; ++j) {
        double k = kb(0, j);
        for (Eigen::Index c = 0; c < hid; ++c) k += adapters[static_cast<std::size_t>(a)](i, c) * kw(c, j);
        dot += q[static_cast<std::size_t>(j)] * k;
      }
      scores[static_cast<std::size_t>(a)] = dot / std::sqrt(static_cast<double>(hid));
    }
    const auto alpha = softmax(scores);
    for (Eigen::Index a = 0; a < n; ++a) {
      out.weights(i, a) = alpha[static_cast<std::size_t>(a)];
      for (Eigen::Index j = 0; j < hid; ++j) {
        double v = vb(0, j);
        for (Eigen::Index c = 0; c < hid; ++c) v += adapters[static_cast<std::size_t>(a)](i, c) * vw(c, j);
        out.fused(i, j) += alpha[static_cast<std::size_t>(a)] * v;
      }
    }
  }
  return out;
}

// Eq. 2 as implemented: weighted CE summed over rows with target >= 0, divided
// by `normalizer`. Returns the loss plus per-counted-row correctness.
struct CeOut {
  double loss = 0.0;
  std::vector<bool> correct;
  std::size_t counted = 0;
};

inline CeOut masked_ce(const Mat& logits, const std::vector<std::int32_t>& targets,
                       double normalizer, const std::vector<double>& class_weights = {}) {
  CeOut out;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const auto y = targets[static_cast<std::size_t>(i)];
    if (y < 0) continue;
    double top = -std::numeric_limits<double>::infinity();
    Eigen::Index arg = 0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      if (logits(i, j) > top) {
        top = logits(i, j);
        arg = j;
      }
    }
    double z = 0.0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) z += std::exp(logits(i, j) - top);
    const double logp = logits(i, y) - top - std::log(z);
    const double w = class_weights.empty() ? 1.0 : class_weights[static_cast<std::size_t>(y)];
    out.loss += -w * logp / normalizer;
    out.correct.push_back(arg == y);
    ++out.counted;
  }
  return out;
}

// Batch loss over several sequences, normalized by the total counted positions.
inline double ttc_loss(const std::vector<Mat>& logits,
                       const std::vector<std::vector<std::int32_t>>& targets) {
  double counted = 0.0;
  for (const auto& t : targets) {
    for (const auto y : t) counted += y >= 0 ? 1.0 : 0.0;
  }
  double loss = 0.0;
  for (std::size_t b = 0; b < logits.size(); ++b) {
    loss += masked_ce(logits[b], targets[b], counted).loss;
  }
  return loss;
}

inline std::vector<double> layernorm_row(const std::vector<double>& x,
                                         const std::vector<double>& gain,
                                         const std::vector<double>& bias, double eps) {
  double mean = 0.0;
  for (const double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (const double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(x.size());
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = (x[i] - mean) / std::sqrt(var + eps) * gain[i] + bias[i];
  }
  return out;
}

// One pre-LN encoder block, scalar loops throughout. Heads split the hidden
// dimension contiguously; additive_mask[j] is added to every attention score
// against key j. Returns the block output r + y (no hook).
struct BlockParams {
  Mat ln1_gain, ln1_bias, wq, bq, wk, bk, wv, bv, wo, bo;
  Mat ln2_gain, ln2_bias, w1, b1, w2, b2;
};

inline Mat encoder_block(const Mat& x, const BlockParams& p, std::int64_t heads,
                         const std::vector<double>& additive_mask, double eps) {
  const auto n = x.rows(), h = x.cols();
  const auto dh = h / heads;

  const auto row_of = [](const Mat& m, Eigen::Index i) {
    std::vector<double> r(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j) r[static_cast<std::size_t>(j)] = m(i, j);
    return r;
  };

  Mat normed(n, h);
  {
    const auto gain = row_of(p.ln1_gain, 0), bias = row_of(p.ln1_bias, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto out = layernorm_row(row_of(x, i), gain, bias, eps);
      for (Eigen::Index j = 0; j < h; ++j) normed(i, j) = out[static_cast<std::size_t>(j)];
    }
  }

  const auto project = [&](const Mat& w, const Mat& b) {
    Mat out(n, h);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < h; ++j) {
        double acc = b(0, j);
        for (Eigen::Index c = 0; c < h; ++c) acc += normed(i, c) * w(c, j);
        out(i, j) = acc;
      }
    }
    return out;
  };
  const Mat q = project(p.wq, p.bq), k = project(p.wk, p.bk), v = project(p.wv, p.bv);

  Mat attn_heads(n, h);
  for (std::int64_t head = 0; head < heads; ++head) {
    const auto off = static_cast<Eigen::Index>(head) * dh;
    for (Eigen::Index i = 0; i < n; ++i) {
      std::vector<double> scores(static_cast<std::size_t>(n));
      for (Eigen::Index j = 0; j < n; ++j) {
        double dot = 0.0;
        for (Eigen::Index c = 0; c < dh; ++c) dot += q(i, off + c) * k(j, off + c);
        scores[static_cast<std::size_t>(j)] =
            dot / std::sqrt(static_cast<double>(dh)) + additive_mask[static_cast<std::size_t>(j)];
      }
      const auto probs = softmax(scores);
      for (Eigen::Index c = 0; c < dh; ++c) {
        double acc = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) acc += probs[static_cast<std::size_t>(j)] * v(j, off + c);
        attn_heads(i, off + c) = acc;
      }
    }
  }

  Mat r(n, h);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < h; ++j) {
      double acc = p.bo(0, j);
      for (Eigen::Index c = 0; c < h; ++c) acc += attn_heads(i, c) * p.wo(c, j);
      r(i, j) = x(i, j) + acc;
    }
  }

  Mat normed2(n, h);
  {
    const auto gain = row_of(p.ln2_gain, 0), bias = row_of(p.ln2_bias, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto out = layernorm_row(row_of(r, i), gain, bias, eps);
      for (Eigen::Index j = 0; j < h; ++j) normed2(i, j) = out[static_cast<std::size_t>(j)];
    }
  }
  const auto f = p.w1.cols();
  Mat out(n, h);
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<double> mid(static_cast<std::size_t>(f));
    for (Eigen::Index c = 0; c < f; ++c) {
      double acc = p.b1(0, c);
      for (Eigen::Index j = 0; j < h; ++j) acc += normed2(i, j) * p.w1(j, c);
      mid[static_cast<std::size_t>(c)] = acc > 0.0 ? acc : 0.0;
    }
    for (Eigen::Index j = 0; j < h; ++j) {
      double acc = p.b2(0, j);
      for (Eigen::Index c = 0; c < f; ++c) acc += mid[static_cast<std::size_t>(c)] * p.w2(c, j);
      out(i, j) = r(i, j) + acc;
    }
  }
  return out;
}

// Per-position classification metrics with one pass of plain counting.
struct Metrics {
  double accuracy = 0.0;
  double macro_precision = 0.0, macro_recall = 0.0, macro_f1 = 0.0;
  std::int64_t counted = 0;
  std::map<std::int32_t, std::int64_t> tp, fp, fn, support;
};

inline Metrics metrics(const std::vector<std::vector<std::int32_t>>& preds,
                       const std::vector<std::vector<std::int32_t>>& golds,
                       std::int32_t ignore = -1) {
  Metrics m;
  std::int64_t hits = 0;
  for (std::size_t s = 0; s < preds.size(); ++s) {
    for (std::size_t i = 0; i < preds[s].size(); ++i) {
      const auto g = golds[s][i];
      if (g == ignore) continue;
      const auto p = preds[s][i];
      ++m.counted;
      ++m.support[g];
      if (p == g) {
        ++hits;
        ++m.tp[g];
      } else {
        ++m.fp[p];
        ++m.fn[g];
      }
    }
  }
  if (m.counted == 0) throw std::invalid_argument("no counted positions");
  m.accuracy = static_cast<double>(hits) / static_cast<double>(m.counted);
  double psum = 0.0, rsum = 0.0, fsum = 0.0;
  std::int64_t classes = 0;
  for (const auto& [cls, sup] : m.support) {
    if (sup == 0) continue;
    const double tp = static_cast<double>(m.tp[cls]);
    const double fp = static_cast<double>(m.fp[cls]);
    const double fn = static_cast<double>(m.fn[cls]);
    const double prec = tp + fp > 0.0 ? tp / (tp + fp) : 0.0;
    const double rec = tp + fn > 0.0 ? tp / (tp + fn) : 0.0;
    const double f1 = prec + rec > 0.0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
    psum += prec;
    rsum += rec;
    fsum += f1;
    ++classes;
  }
  m.macro_precision = psum / static_cast<double>(classes);
  m.macro_recall = rsum / static_cast<double>(classes);
  m.macro_f1 = fsum / static_cast<double>(classes);
  return m;
}

// Scalar Adam with bias correction, one tensor.
inline void adam(Mat& param, const Mat& grad, Mat& m, Mat& v, std::int64_t t, double lr,
                 double beta1, double beta2, double eps) {
  for (Eigen::Index i = 0; i < param.rows(); ++i) {
    for (Eigen::Index j = 0; j < param.cols(); ++j) {
      m(i, j) = beta1 * m(i, j) + (1.0 - beta1) * grad(i, j);
      v(i, j) = beta2 * v(i, j) + (1.0 - beta2) * grad(i, j) * grad(i, j);
      const double mhat = m(i, j) / (1.0 - std::pow(beta1, static_cast<double>(t)));
      const double vhat = v(i, j) / (1.0 - std::pow(beta2, static_cast<double>(t)));
      param(i, j) -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

}  // namespace oracle
