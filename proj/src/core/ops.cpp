#include "core/ops.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace dapt {

namespace {

using std::int64_t;

void accum(TensorData& in, size_t idx, double v) {
  in.grad[idx] += static_cast<float>(v);
}

// C (MxN) = A (MxK) * B (KxN), double accumulation via a row buffer.
void mm(const float* a, const float* b, float* c, int64_t M, int64_t K, int64_t N) {
  std::vector<double> row(static_cast<size_t>(N));
  for (int64_t i = 0; i < M; ++i) {
    for (int64_t j = 0; j < N; ++j) row[static_cast<size_t>(j)] = 0.0;
    const float* ai = a + i * K;
    for (int64_t k = 0; k < K; ++k) {
      double av = static_cast<double>(ai[k]);
      const float* bk = b + k * N;
      for (int64_t j = 0; j < N; ++j) row[static_cast<size_t>(j)] += av * bk[j];
    }
    float* ci = c + i * N;
    for (int64_t j = 0; j < N; ++j) ci[j] = static_cast<float>(row[static_cast<size_t>(j)]);
  }
}

// G (MxK) += dC (MxN) * B^T, i.e. g[m,k] += sum_n dc[m,n] * b[k,n].
void mm_nt_acc(const float* dc, const float* b, float* g, int64_t M, int64_t N, int64_t K) {
  for (int64_t m = 0; m < M; ++m) {
    const float* dcm = dc + m * N;
    float* gm = g + m * K;
    for (int64_t k = 0; k < K; ++k) {
      const float* bk = b + k * N;
      double acc = 0.0;
      for (int64_t n = 0; n < N; ++n) acc += static_cast<double>(dcm[n]) * bk[n];
      gm[k] += static_cast<float>(acc);
    }
  }
}

// G (KxN) += A^T * dC, i.e. g[k,n] += sum_m a[m,k] * dc[m,n].
void mm_tn_acc(const float* a, const float* dc, float* g, int64_t M, int64_t K, int64_t N) {
  std::vector<double> row(static_cast<size_t>(N));
  for (int64_t k = 0; k < K; ++k) {
    for (int64_t j = 0; j < N; ++j) row[static_cast<size_t>(j)] = 0.0;
    for (int64_t m = 0; m < M; ++m) {
      double av = static_cast<double>(a[m * K + k]);
      const float* dcm = dc + m * N;
      for (int64_t j = 0; j < N; ++j) row[static_cast<size_t>(j)] += av * dcm[j];
    }
    float* gk = g + k * N;
    for (int64_t j = 0; j < N; ++j) gk[j] += static_cast<float>(row[static_cast<size_t>(j)]);
  }
}

struct MatShape {
  int64_t batch;  // 1 for rank-2
  int64_t rows;
  int64_t cols;
  bool batched;
};

MatShape mat_shape(const Shape& s) {
  if (s.size() == 2) return {1, s[0], s[1], false};
  if (s.size() == 3) return {s[0], s[1], s[2], true};
  throw std::invalid_argument("matmul expects rank 2 or 3, got shape " + shape_str(s));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  MatShape sa = mat_shape(a.shape());
  MatShape sb = mat_shape(b.shape());
  if (sa.cols != sb.rows || !(sa.batch == sb.batch || sa.batch == 1 || sb.batch == 1)) {
    throw std::invalid_argument("matmul shape mismatch: " + shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  }
  int64_t batch = std::max(sa.batch, sb.batch);
  int64_t M = sa.rows, K = sa.cols, N = sb.cols;
  bool out_batched = sa.batched || sb.batched;

  Shape out_shape = out_batched ? Shape{batch, M, N} : Shape{M, N};
  std::vector<float> out(static_cast<size_t>(batch * M * N));
  const float* ap = a.values().data();
  const float* bp = b.values().data();
  for (int64_t i = 0; i < batch; ++i) {
    const float* ai = ap + (sa.batch == 1 ? 0 : i * M * K);
    const float* bi = bp + (sb.batch == 1 ? 0 : i * K * N);
    mm(ai, bi, out.data() + i * M * N, M, K, N);
  }

  auto ad = a.impl();
  auto bd = b.impl();
  return make_op_output(
      std::move(out_shape), std::move(out), "matmul", {ad, bd},
      [ad, bd, sa, sb, batch, M, K, N](const TensorData& o) {
        const float* dout = o.grad.data();
        if (ad->requires_grad || ad->creator) {
          ad->ensure_grad();
          for (int64_t i = 0; i < batch; ++i) {
            const float* bi = bd->values.data() + (sb.batch == 1 ? 0 : i * K * N);
            float* ga = ad->grad.data() + (sa.batch == 1 ? 0 : i * M * K);
            mm_nt_acc(dout + i * M * N, bi, ga, M, N, K);
          }
        }
        if (bd->requires_grad || bd->creator) {
          bd->ensure_grad();
          for (int64_t i = 0; i < batch; ++i) {
            const float* ai = ad->values.data() + (sa.batch == 1 ? 0 : i * M * K);
            float* gb = bd->grad.data() + (sb.batch == 1 ? 0 : i * K * N);
            mm_tn_acc(ai, dout + i * M * N, gb, M, K, N);
          }
        }
      });
}

Tensor transpose_last2(const Tensor& x) {
  const Shape& s = x.shape();
  if (s.size() != 2 && s.size() != 3) {
    throw std::invalid_argument("transpose_last2 expects rank 2 or 3, got " + shape_str(s));
  }
  int64_t batch = s.size() == 3 ? s[0] : 1;
  int64_t R = s[s.size() - 2], C = s[s.size() - 1];
  Shape out_shape = s;
  out_shape[s.size() - 2] = C;
  out_shape[s.size() - 1] = R;
  std::vector<float> out(x.values().size());
  const float* xp = x.values().data();
  for (int64_t b = 0; b < batch; ++b) {
    const float* xb = xp + b * R * C;
    float* ob = out.data() + b * R * C;
    for (int64_t i = 0; i < R; ++i)
      for (int64_t j = 0; j < C; ++j) ob[j * R + i] = xb[i * C + j];
  }
  auto xd = x.impl();
  return make_op_output(std::move(out_shape), std::move(out), "transpose_last2", {xd},
                        [xd, batch, R, C](const TensorData& o) {
                          xd->ensure_grad();
                          const float* dout = o.grad.data();
                          float* gx = xd->grad.data();
                          for (int64_t b = 0; b < batch; ++b) {
                            const float* db = dout + b * R * C;
                            float* gb = gx + b * R * C;
                            for (int64_t j = 0; j < C; ++j)
                              for (int64_t i = 0; i < R; ++i) gb[i * C + j] += db[j * R + i];
                          }
                        });
}

Tensor add(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  // Three accepted forms, all reducible to cyclic indexing over b:
  // same shape, rank-1 bias over the last extent, or rank-(n-1) broadcast
  // over the leading extent.
  bool same_shape = sa == sb;
  bool last_dim_bias = sb.size() == 1 && !sa.empty() && sa.back() == sb[0];
  bool leading_broadcast =
      sa.size() == 3 && sb.size() == 2 && sa[1] == sb[0] && sa[2] == sb[1];
  if (!same_shape && !last_dim_bias && !leading_broadcast) {
    throw std::invalid_argument("add shape mismatch: " + shape_str(sa) + " + " + shape_str(sb));
  }

  int64_t n = a.numel();
  int64_t bn = b.numel();
  std::vector<float> out(static_cast<size_t>(n));
  const float* ap = a.values().data();
  const float* bp = b.values().data();
  for (int64_t i = 0; i < n; ++i) {
    out[static_cast<size_t>(i)] = ap[i] + bp[i % bn];
  }

  auto ad = a.impl();
  auto bd = b.impl();
  return make_op_output(sa, std::move(out), "add", {ad, bd},
                        [ad, bd, n, bn](const TensorData& o) {
                          const float* dout = o.grad.data();
                          if (ad->requires_grad || ad->creator) {
                            ad->ensure_grad();
                            for (int64_t i = 0; i < n; ++i) ad->grad[static_cast<size_t>(i)] += dout[i];
                          }
                          if (bd->requires_grad || bd->creator) {
                            bd->ensure_grad();
                            std::vector<double> acc(static_cast<size_t>(bn), 0.0);
                            for (int64_t i = 0; i < n; ++i) acc[static_cast<size_t>(i % bn)] += dout[i];
                            for (int64_t i = 0; i < bn; ++i)
                              bd->grad[static_cast<size_t>(i)] += static_cast<float>(acc[static_cast<size_t>(i)]);
                          }
                        });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("mul shape mismatch: " + shape_str(a.shape()) + " * " +
                                shape_str(b.shape()));
  }
  int64_t n = a.numel();
  std::vector<float> out(static_cast<size_t>(n));
  const float* ap = a.values().data();
  const float* bp = b.values().data();
  for (int64_t i = 0; i < n; ++i) out[static_cast<size_t>(i)] = ap[i] * bp[i];
  auto ad = a.impl();
  auto bd = b.impl();
  return make_op_output(a.shape(), std::move(out), "mul", {ad, bd},
                        [ad, bd, n](const TensorData& o) {
                          const float* dout = o.grad.data();
                          if (ad->requires_grad || ad->creator) {
                            ad->ensure_grad();
                            for (int64_t i = 0; i < n; ++i)
                              accum(*ad, static_cast<size_t>(i),
                                    static_cast<double>(dout[i]) * bd->values[static_cast<size_t>(i)]);
                          }
                          if (bd->requires_grad || bd->creator) {
                            bd->ensure_grad();
                            for (int64_t i = 0; i < n; ++i)
                              accum(*bd, static_cast<size_t>(i),
                                    static_cast<double>(dout[i]) * ad->values[static_cast<size_t>(i)]);
                          }
                        });
}

Tensor scale(const Tensor& a, float s) {
  int64_t n = a.numel();
  std::vector<float> out(static_cast<size_t>(n));
  const float* ap = a.values().data();
  for (int64_t i = 0; i < n; ++i) out[static_cast<size_t>(i)] = ap[i] * s;
  auto ad = a.impl();
  return make_op_output(a.shape(), std::move(out), "scale", {ad},
                        [ad, n, s](const TensorData& o) {
                          ad->ensure_grad();
                          const float* dout = o.grad.data();
                          for (int64_t i = 0; i < n; ++i)
                            accum(*ad, static_cast<size_t>(i), static_cast<double>(dout[i]) * s);
                        });
}

Tensor softmax(const Tensor& x, int axis) {
  const Shape& s = x.shape();
  int rank = static_cast<int>(s.size());
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) {
    throw std::invalid_argument("softmax axis " + std::to_string(axis) +
                                " invalid for shape " + shape_str(s));
  }
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[i];
  for (int i = axis + 1; i < rank; ++i) inner *= s[i];
  int64_t n = s[axis];

  std::vector<float> out(x.values().size());
  const float* xp = x.values().data();
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t in = 0; in < inner; ++in) {
      const float* base = xp + o * n * inner + in;
      float* obase = out.data() + o * n * inner + in;
      double mx = base[0];
      for (int64_t i = 1; i < n; ++i) mx = std::max(mx, static_cast<double>(base[i * inner]));
      double sum = 0.0;
      for (int64_t i = 0; i < n; ++i) sum += std::exp(static_cast<double>(base[i * inner]) - mx);
      for (int64_t i = 0; i < n; ++i) {
        obase[i * inner] =
            static_cast<float>(std::exp(static_cast<double>(base[i * inner]) - mx) / sum);
      }
    }
  }

  auto xd = x.impl();
  return make_op_output(s, std::move(out), "softmax", {xd},
                        [xd, outer, n, inner](const TensorData& o) {
                          xd->ensure_grad();
                          const float* y = o.values.data();
                          const float* dy = o.grad.data();
                          for (int64_t ou = 0; ou < outer; ++ou) {
                            for (int64_t in = 0; in < inner; ++in) {
                              int64_t off = ou * n * inner + in;
                              double dot = 0.0;
                              for (int64_t i = 0; i < n; ++i) {
                                int64_t idx = off + i * inner;
                                dot += static_cast<double>(dy[idx]) * y[idx];
                              }
                              for (int64_t i = 0; i < n; ++i) {
                                int64_t idx = off + i * inner;
                                accum(*xd, static_cast<size_t>(idx),
                                      static_cast<double>(y[idx]) *
                                          (static_cast<double>(dy[idx]) - dot));
                              }
                            }
                          }
                        });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float epsilon) {
  const Shape& s = x.shape();
  if (s.empty()) throw std::invalid_argument("layer_norm needs rank >= 1");
  int64_t n = s.back();
  if (gain.rank() != 1 || bias.rank() != 1 || gain.shape()[0] != n || bias.shape()[0] != n) {
    throw std::invalid_argument("layer_norm gain/bias shape mismatch: x " + shape_str(s) +
                                ", gain " + shape_str(gain.shape()) + ", bias " +
                                shape_str(bias.shape()));
  }
  int64_t rows = x.numel() / n;
  std::vector<float> out(x.values().size());
  auto stats = std::make_shared<std::vector<double>>(static_cast<size_t>(rows) * 2);
  const float* xp = x.values().data();
  const float* gp = gain.values().data();
  const float* bp = bias.values().data();
  for (int64_t r = 0; r < rows; ++r) {
    const float* row = xp + r * n;
    double mean = 0.0;
    for (int64_t i = 0; i < n; ++i) mean += row[i];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      double d = row[i] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    double inv = 1.0 / std::sqrt(var + static_cast<double>(epsilon));
    (*stats)[static_cast<size_t>(r) * 2] = mean;
    (*stats)[static_cast<size_t>(r) * 2 + 1] = inv;
    float* orow = out.data() + r * n;
    for (int64_t i = 0; i < n; ++i) {
      double xhat = (row[i] - mean) * inv;
      orow[i] = static_cast<float>(xhat * gp[i] + bp[i]);
    }
  }

  auto xd = x.impl();
  auto gd = gain.impl();
  auto bd = bias.impl();
  return make_op_output(
      s, std::move(out), "layer_norm", {xd, gd, bd},
      [xd, gd, bd, rows, n, stats](const TensorData& o) {
        const float* dy = o.grad.data();
        bool need_x = xd->requires_grad || xd->creator;
        bool need_g = gd->requires_grad || gd->creator;
        bool need_b = bd->requires_grad || bd->creator;
        if (need_x) xd->ensure_grad();
        if (need_g) gd->ensure_grad();
        if (need_b) bd->ensure_grad();
        std::vector<double> dgain(static_cast<size_t>(n), 0.0);
        std::vector<double> dbias(static_cast<size_t>(n), 0.0);
        for (int64_t r = 0; r < rows; ++r) {
          double mean = (*stats)[static_cast<size_t>(r) * 2];
          double inv = (*stats)[static_cast<size_t>(r) * 2 + 1];
          const float* xrow = xd->values.data() + r * n;
          const float* dyr = dy + r * n;
          double sum_g = 0.0, sum_gx = 0.0;
          for (int64_t i = 0; i < n; ++i) {
            double xhat = (xrow[i] - mean) * inv;
            double gi = static_cast<double>(dyr[i]) * gd->values[static_cast<size_t>(i)];
            sum_g += gi;
            sum_gx += gi * xhat;
            if (need_g) dgain[static_cast<size_t>(i)] += static_cast<double>(dyr[i]) * xhat;
            if (need_b) dbias[static_cast<size_t>(i)] += dyr[i];
          }
          if (need_x) {
            double nd = static_cast<double>(n);
            for (int64_t i = 0; i < n; ++i) {
              double xhat = (xrow[i] - mean) * inv;
              double gi = static_cast<double>(dyr[i]) * gd->values[static_cast<size_t>(i)];
              accum(*xd, static_cast<size_t>(r * n + i),
                    inv * (gi - sum_g / nd - xhat * sum_gx / nd));
            }
          }
        }
        if (need_g)
          for (int64_t i = 0; i < n; ++i)
            gd->grad[static_cast<size_t>(i)] += static_cast<float>(dgain[static_cast<size_t>(i)]);
        if (need_b)
          for (int64_t i = 0; i < n; ++i)
            bd->grad[static_cast<size_t>(i)] += static_cast<float>(dbias[static_cast<size_t>(i)]);
      });
}

namespace {
constexpr double kGeluC = 0.044715;
const double kGeluS = std::sqrt(2.0 / 3.14159265358979323846);
}  // namespace

Tensor gelu(const Tensor& x) {
  int64_t n = x.numel();
  std::vector<float> out(static_cast<size_t>(n));
  const float* xp = x.values().data();
  for (int64_t i = 0; i < n; ++i) {
    double v = xp[i];
    double t = std::tanh(kGeluS * (v + kGeluC * v * v * v));
    out[static_cast<size_t>(i)] = static_cast<float>(0.5 * v * (1.0 + t));
  }
  auto xd = x.impl();
  return make_op_output(x.shape(), std::move(out), "gelu", {xd},
                        [xd, n](const TensorData& o) {
                          xd->ensure_grad();
                          const float* dy = o.grad.data();
                          for (int64_t i = 0; i < n; ++i) {
                            double v = xd->values[static_cast<size_t>(i)];
                            double u = kGeluS * (v + kGeluC * v * v * v);
                            double t = std::tanh(u);
                            double du = kGeluS * (1.0 + 3.0 * kGeluC * v * v);
                            double d = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
                            accum(*xd, static_cast<size_t>(i), static_cast<double>(dy[i]) * d);
                          }
                        });
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets, int ignore_index) {
  if (logits.rank() != 2) {
    throw std::invalid_argument("cross_entropy expects rank-2 logits, got " +
                                shape_str(logits.shape()));
  }
  int64_t rows = logits.shape()[0];
  int64_t C = logits.shape()[1];
  if (static_cast<int64_t>(targets.size()) != rows) {
    throw std::invalid_argument("cross_entropy: " + std::to_string(targets.size()) +
                                " targets for " + std::to_string(rows) + " rows");
  }
  for (int64_t r = 0; r < rows; ++r) {
    int t = targets[static_cast<size_t>(r)];
    if (t != ignore_index && (t < 0 || t >= C)) {
      throw std::out_of_range("cross_entropy: label " + std::to_string(t) + " at row " +
                              std::to_string(r) + " outside [0," + std::to_string(C) + ")");
    }
  }

  auto probs = std::make_shared<std::vector<float>>(logits.values().size());
  const float* xp = logits.values().data();
  double total = 0.0;
  int64_t live = 0;
  for (int64_t r = 0; r < rows; ++r) {
    const float* row = xp + r * C;
    double mx = row[0];
    for (int64_t c = 1; c < C; ++c) mx = std::max(mx, static_cast<double>(row[c]));
    double sum = 0.0;
    for (int64_t c = 0; c < C; ++c) sum += std::exp(static_cast<double>(row[c]) - mx);
    float* prow = probs->data() + r * C;
    for (int64_t c = 0; c < C; ++c) {
      prow[c] = static_cast<float>(std::exp(static_cast<double>(row[c]) - mx) / sum);
    }
    int t = targets[static_cast<size_t>(r)];
    if (t != ignore_index) {
      total += (std::log(sum) + mx) - static_cast<double>(row[t]);
      ++live;
    }
  }
  float loss = live > 0 ? static_cast<float>(total / static_cast<double>(live)) : 0.0f;

  auto xd = logits.impl();
  auto tg = std::make_shared<std::vector<int>>(targets);
  return make_op_output(
      {1}, {loss}, "cross_entropy", {xd},
      [xd, tg, probs, rows, C, ignore_index](const TensorData& o) {
        int64_t live = 0;
        for (int t : *tg)
          if (t != ignore_index) ++live;
        if (live == 0) return;
        xd->ensure_grad();
        double gout = static_cast<double>(o.grad[0]) / static_cast<double>(live);
        for (int64_t r = 0; r < rows; ++r) {
          int t = (*tg)[static_cast<size_t>(r)];
          if (t == ignore_index) continue;
          const float* prow = probs->data() + r * C;
          for (int64_t c = 0; c < C; ++c) {
            double p = prow[c];
            if (c == t) p -= 1.0;
            accum(*xd, static_cast<size_t>(r * C + c), gout * p);
          }
        }
      });
}

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids) {
  if (table.rank() != 2) {
    throw std::invalid_argument("embedding_lookup expects rank-2 table, got " +
                                shape_str(table.shape()));
  }
  int64_t V = table.shape()[0];
  int64_t E = table.shape()[1];
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= V) {
      throw std::out_of_range("embedding_lookup: id " + std::to_string(ids[i]) +
                              " outside [0," + std::to_string(V) + ")");
    }
  }
  int64_t n = static_cast<int64_t>(ids.size());
  std::vector<float> out(static_cast<size_t>(n * E));
  const float* tp = table.values().data();
  for (int64_t i = 0; i < n; ++i) {
    const float* row = tp + static_cast<int64_t>(ids[static_cast<size_t>(i)]) * E;
    std::copy(row, row + E, out.data() + i * E);
  }
  auto td = table.impl();
  auto idv = std::make_shared<std::vector<int>>(ids);
  return make_op_output({n, E}, std::move(out), "embedding_lookup", {td},
                        [td, idv, n, E, V](const TensorData& o) {
                          td->ensure_grad();
                          std::vector<double> scratch(static_cast<size_t>(V * E), 0.0);
                          const float* dy = o.grad.data();
                          for (int64_t i = 0; i < n; ++i) {
                            double* dst = scratch.data() +
                                          static_cast<int64_t>((*idv)[static_cast<size_t>(i)]) * E;
                            const float* src = dy + i * E;
                            for (int64_t e = 0; e < E; ++e) dst[e] += src[e];
                          }
                          for (int64_t i = 0; i < V * E; ++i) {
                            td->grad[static_cast<size_t>(i)] +=
                                static_cast<float>(scratch[static_cast<size_t>(i)]);
                          }
                        });
}

Tensor reshape(const Tensor& x, Shape new_shape) {
  if (shape_numel(new_shape) != x.numel()) {
    throw std::invalid_argument("reshape " + shape_str(x.shape()) + " -> " +
                                shape_str(new_shape) + " changes element count");
  }
  std::vector<float> out(x.values().begin(), x.values().end());
  auto xd = x.impl();
  int64_t n = x.numel();
  return make_op_output(std::move(new_shape), std::move(out), "reshape", {xd},
                        [xd, n](const TensorData& o) {
                          xd->ensure_grad();
                          for (int64_t i = 0; i < n; ++i)
                            xd->grad[static_cast<size_t>(i)] += o.grad[static_cast<size_t>(i)];
                        });
}

Tensor split_heads(const Tensor& x, int num_heads) {
  const Shape& s = x.shape();
  if (s.size() != 3 || s[2] % num_heads != 0) {
    throw std::invalid_argument("split_heads: shape " + shape_str(s) + " with " +
                                std::to_string(num_heads) + " heads");
  }
  int64_t B = s[0], L = s[1], H = s[2];
  int64_t nh = num_heads, dh = H / nh;
  std::vector<float> out(x.values().size());
  const float* xp = x.values().data();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t l = 0; l < L; ++l)
      for (int64_t h = 0; h < nh; ++h)
        for (int64_t d = 0; d < dh; ++d)
          out[static_cast<size_t>(((b * nh + h) * L + l) * dh + d)] =
              xp[(b * L + l) * H + h * dh + d];
  auto xd = x.impl();
  return make_op_output({B * nh, L, dh}, std::move(out), "split_heads", {xd},
                        [xd, B, L, nh, dh, H](const TensorData& o) {
                          xd->ensure_grad();
                          const float* dy = o.grad.data();
                          for (int64_t b = 0; b < B; ++b)
                            for (int64_t l = 0; l < L; ++l)
                              for (int64_t h = 0; h < nh; ++h)
                                for (int64_t d = 0; d < dh; ++d)
                                  xd->grad[static_cast<size_t>((b * L + l) * H + h * dh + d)] +=
                                      dy[((b * nh + h) * L + l) * dh + d];
                        });
}

Tensor merge_heads(const Tensor& x, int num_heads) {
  const Shape& s = x.shape();
  if (s.size() != 3 || s[0] % num_heads != 0) {
    throw std::invalid_argument("merge_heads: shape " + shape_str(s) + " with " +
                                std::to_string(num_heads) + " heads");
  }
  int64_t nh = num_heads;
  int64_t B = s[0] / nh, L = s[1], dh = s[2];
  int64_t H = nh * dh;
  std::vector<float> out(x.values().size());
  const float* xp = x.values().data();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t h = 0; h < nh; ++h)
      for (int64_t l = 0; l < L; ++l)
        for (int64_t d = 0; d < dh; ++d)
          out[static_cast<size_t>((b * L + l) * H + h * dh + d)] =
              xp[((b * nh + h) * L + l) * dh + d];
  auto xd = x.impl();
  return make_op_output({B, L, H}, std::move(out), "merge_heads", {xd},
                        [xd, B, L, nh, dh, H](const TensorData& o) {
                          xd->ensure_grad();
                          const float* dy = o.grad.data();
                          for (int64_t b = 0; b < B; ++b)
                            for (int64_t h = 0; h < nh; ++h)
                              for (int64_t l = 0; l < L; ++l)
                                for (int64_t d = 0; d < dh; ++d)
                                  xd->grad[static_cast<size_t>(((b * nh + h) * L + l) * dh + d)] +=
                                      dy[(b * L + l) * H + h * dh + d];
                        });
}

Tensor take_position(const Tensor& x, int64_t position) {
  const Shape& s = x.shape();
  if (s.size() != 3 || position < 0 || position >= s[1]) {
    throw std::invalid_argument("take_position " + std::to_string(position) + " on shape " +
                                shape_str(s));
  }
  int64_t B = s[0], L = s[1], H = s[2];
  std::vector<float> out(static_cast<size_t>(B * H));
  const float* xp = x.values().data();
  for (int64_t b = 0; b < B; ++b)
    std::copy(xp + (b * L + position) * H, xp + (b * L + position) * H + H, out.data() + b * H);
  auto xd = x.impl();
  return make_op_output({B, H}, std::move(out), "take_position", {xd},
                        [xd, B, L, H, position](const TensorData& o) {
                          xd->ensure_grad();
                          const float* dy = o.grad.data();
                          for (int64_t b = 0; b < B; ++b)
                            for (int64_t h = 0; h < H; ++h)
                              xd->grad[static_cast<size_t>((b * L + position) * H + h)] +=
                                  dy[b * H + h];
                        });
}

Tensor add_key_bias(const Tensor& scores, const std::vector<float>& key_bias, int64_t batch,
                    int num_heads) {
  const Shape& s = scores.shape();
  if (s.size() != 3 || s[0] != batch * num_heads ||
      static_cast<int64_t>(key_bias.size()) != batch * s[2]) {
    throw std::invalid_argument("add_key_bias: scores " + shape_str(s) + ", batch " +
                                std::to_string(batch) + ", heads " + std::to_string(num_heads));
  }
  int64_t BH = s[0], Lq = s[1], Lk = s[2];
  std::vector<float> out(scores.values().size());
  const float* xp = scores.values().data();
  for (int64_t bh = 0; bh < BH; ++bh) {
    const float* bias = key_bias.data() + (bh / num_heads) * Lk;
    for (int64_t q = 0; q < Lq; ++q) {
      const float* row = xp + (bh * Lq + q) * Lk;
      float* orow = out.data() + (bh * Lq + q) * Lk;
      for (int64_t k = 0; k < Lk; ++k) orow[k] = row[k] + bias[k];
    }
  }
  auto xd = scores.impl();
  int64_t n = scores.numel();
  return make_op_output(s, std::move(out), "add_key_bias", {xd},
                        [xd, n](const TensorData& o) {
                          xd->ensure_grad();
                          for (int64_t i = 0; i < n; ++i)
                            xd->grad[static_cast<size_t>(i)] += o.grad[static_cast<size_t>(i)];
                        });
}

Tensor dropout(const Tensor& x, float p, Rng& rng, bool train) {
  if (!train || p <= 0.0f) return x;
  if (p >= 1.0f) throw std::invalid_argument("dropout probability must be < 1");
  int64_t n = x.numel();
  auto mask = std::make_shared<std::vector<uint8_t>>(static_cast<size_t>(n));
  double keep_scale = 1.0 / (1.0 - static_cast<double>(p));
  std::vector<float> out(static_cast<size_t>(n));
  const float* xp = x.values().data();
  for (int64_t i = 0; i < n; ++i) {
    bool keep = uniform_real(rng) >= static_cast<double>(p);
    (*mask)[static_cast<size_t>(i)] = keep ? 1 : 0;
    out[static_cast<size_t>(i)] =
        keep ? static_cast<float>(xp[i] * keep_scale) : 0.0f;
  }
  auto xd = x.impl();
  return make_op_output(x.shape(), std::move(out), "dropout", {xd},
                        [xd, mask, n, keep_scale](const TensorData& o) {
                          xd->ensure_grad();
                          const float* dy = o.grad.data();
                          for (int64_t i = 0; i < n; ++i) {
                            if ((*mask)[static_cast<size_t>(i)])
                              accum(*xd, static_cast<size_t>(i),
                                    static_cast<double>(dy[i]) * keep_scale);
                          }
                        });
}

Tensor sum_all(const Tensor& x) {
  double total = 0.0;
  for (float v : x.values()) total += v;
  auto xd = x.impl();
  int64_t n = x.numel();
  return make_op_output({1}, {static_cast<float>(total)}, "sum_all", {xd},
                        [xd, n](const TensorData& o) {
                          xd->ensure_grad();
                          float g = o.grad[0];
                          for (int64_t i = 0; i < n; ++i) xd->grad[static_cast<size_t>(i)] += g;
                        });
}

}  // namespace dapt
