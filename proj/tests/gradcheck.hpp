// Shared finite-difference gradient-check machinery. Every differentiable
// operation gets an independent double-precision reference forward; reverse-
// mode gradients are compared against central differences (h = 1e-3) of a
// randomly weighted scalar of that reference, accumulated in 64-bit. The
// references never share code with the library, so both the forward values
// and the backward rules are checked against them.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "core/ops.hpp"
#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace gradcheck {

using namespace dapt;

constexpr double kStep = 1e-3;  // central-difference step

using Vec = std::vector<double>;

// Reference tensor: 64-bit values, no graph.
struct RT {
  Shape shape;
  Vec v;
};

inline int64_t numel(const Shape& s) { return shape_numel(s); }

inline RT ref_matmul(const RT& a, const RT& b) {
  bool ab = a.shape.size() == 3, bb = b.shape.size() == 3;
  int64_t Ba = ab ? a.shape[0] : 1, Bb = bb ? b.shape[0] : 1;
  int64_t M = a.shape[ab ? 1 : 0], K = a.shape[ab ? 2 : 1];
  int64_t N = b.shape[bb ? 2 : 1];
  int64_t B = std::max(Ba, Bb);
  RT out;
  out.shape = (ab || bb) ? Shape{B, M, N} : Shape{M, N};
  out.v.assign(static_cast<size_t>(B * M * N), 0.0);
  for (int64_t i = 0; i < B; ++i) {
    const double* ai = a.v.data() + (Ba == 1 ? 0 : i * M * K);
    const double* bi = b.v.data() + (Bb == 1 ? 0 : i * K * N);
    double* oi = out.v.data() + i * M * N;
    for (int64_t m = 0; m < M; ++m)
      for (int64_t k = 0; k < K; ++k)
        for (int64_t n = 0; n < N; ++n) oi[m * N + n] += ai[m * K + k] * bi[k * N + n];
  }
  return out;
}

inline RT ref_transpose_last2(const RT& x) {
  int rank = static_cast<int>(x.shape.size());
  int64_t R = x.shape[rank - 2], C = x.shape[rank - 1];
  int64_t batch = numel(x.shape) / (R * C);
  RT out;
  out.shape = x.shape;
  std::swap(out.shape[rank - 2], out.shape[rank - 1]);
  out.v.resize(x.v.size());
  for (int64_t b = 0; b < batch; ++b)
    for (int64_t i = 0; i < R; ++i)
      for (int64_t j = 0; j < C; ++j)
        out.v[static_cast<size_t>(b * R * C + j * R + i)] = x.v[static_cast<size_t>(b * R * C + i * C + j)];
  return out;
}

// Covers all three accepted broadcasts: b cycles through a.
inline RT ref_add(const RT& a, const RT& b) {
  RT out{a.shape, Vec(a.v.size())};
  for (size_t i = 0; i < a.v.size(); ++i) out.v[i] = a.v[i] + b.v[i % b.v.size()];
  return out;
}

inline RT ref_mul(const RT& a, const RT& b) {
  RT out{a.shape, Vec(a.v.size())};
  for (size_t i = 0; i < a.v.size(); ++i) out.v[i] = a.v[i] * b.v[i];
  return out;
}

inline RT ref_scale(const RT& a, double s) {
  RT out{a.shape, Vec(a.v.size())};
  for (size_t i = 0; i < a.v.size(); ++i) out.v[i] = a.v[i] * s;
  return out;
}

inline RT ref_softmax(const RT& x, int axis) {
  int rank = static_cast<int>(x.shape.size());
  int64_t outer = 1, inner = 1, n = x.shape[axis];
  for (int i = 0; i < axis; ++i) outer *= x.shape[i];
  for (int i = axis + 1; i < rank; ++i) inner *= x.shape[i];
  RT out{x.shape, Vec(x.v.size())};
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t in = 0; in < inner; ++in) {
      const double* base = x.v.data() + o * n * inner + in;
      double* ob = out.v.data() + o * n * inner + in;
      double mx = base[0];
      for (int64_t i = 1; i < n; ++i) mx = std::max(mx, base[i * inner]);
      double sum = 0.0;
      for (int64_t i = 0; i < n; ++i) sum += std::exp(base[i * inner] - mx);
      for (int64_t i = 0; i < n; ++i) ob[i * inner] = std::exp(base[i * inner] - mx) / sum;
    }
  return out;
}

inline RT ref_layer_norm(const RT& x, const RT& gain, const RT& bias, double eps) {
  int64_t n = x.shape.back();
  int64_t rows = numel(x.shape) / n;
  RT out{x.shape, Vec(x.v.size())};
  for (int64_t r = 0; r < rows; ++r) {
    const double* row = x.v.data() + r * n;
    double* orow = out.v.data() + r * n;
    double mean = 0.0;
    for (int64_t i = 0; i < n; ++i) mean += row[i];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (int64_t i = 0; i < n; ++i) var += (row[i] - mean) * (row[i] - mean);
    var /= static_cast<double>(n);
    double inv = 1.0 / std::sqrt(var + eps);
    for (int64_t i = 0; i < n; ++i) orow[i] = (row[i] - mean) * inv * gain.v[static_cast<size_t>(i)] + bias.v[static_cast<size_t>(i)];
  }
  return out;
}

inline RT ref_gelu(const RT& x) {
  const double c = 0.044715;
  const double s = std::sqrt(2.0 / 3.14159265358979323846);
  RT out{x.shape, Vec(x.v.size())};
  for (size_t i = 0; i < x.v.size(); ++i) {
    double v = x.v[i];
    out.v[i] = 0.5 * v * (1.0 + std::tanh(s * (v + c * v * v * v)));
  }
  return out;
}

inline RT ref_cross_entropy(const RT& logits, const std::vector<int>& targets, int ignore_index) {
  int64_t C = logits.shape[1];
  double total = 0.0;
  int64_t live = 0;
  for (size_t r = 0; r < targets.size(); ++r) {
    if (targets[r] == ignore_index) continue;
    const double* row = logits.v.data() + static_cast<int64_t>(r) * C;
    double mx = row[0];
    for (int64_t i = 1; i < C; ++i) mx = std::max(mx, row[i]);
    double sum = 0.0;
    for (int64_t i = 0; i < C; ++i) sum += std::exp(row[i] - mx);
    total += std::log(sum) + mx - row[targets[r]];
    ++live;
  }
  return RT{{1}, {live > 0 ? total / static_cast<double>(live) : 0.0}};
}

inline RT ref_embedding_lookup(const RT& table, const std::vector<int>& ids) {
  int64_t E = table.shape[1];
  RT out{{static_cast<int64_t>(ids.size()), E}, Vec(ids.size() * static_cast<size_t>(E))};
  for (size_t i = 0; i < ids.size(); ++i)
    for (int64_t e = 0; e < E; ++e)
      out.v[i * static_cast<size_t>(E) + static_cast<size_t>(e)] = table.v[static_cast<size_t>(ids[i] * E + e)];
  return out;
}

inline RT ref_split_heads(const RT& x, int num_heads) {
  int64_t B = x.shape[0], L = x.shape[1], H = x.shape[2];
  int64_t nh = num_heads, dh = H / nh;
  RT out{{B * nh, L, dh}, Vec(x.v.size())};
  for (int64_t b = 0; b < B; ++b)
    for (int64_t l = 0; l < L; ++l)
      for (int64_t h = 0; h < nh; ++h)
        for (int64_t d = 0; d < dh; ++d)
          out.v[static_cast<size_t>(((b * nh + h) * L + l) * dh + d)] = x.v[static_cast<size_t>((b * L + l) * H + h * dh + d)];
  return out;
}

inline RT ref_merge_heads(const RT& x, int num_heads) {
  int64_t BH = x.shape[0], L = x.shape[1], dh = x.shape[2];
  int64_t nh = num_heads, B = BH / nh, H = nh * dh;
  RT out{{B, L, H}, Vec(x.v.size())};
  for (int64_t b = 0; b < B; ++b)
    for (int64_t l = 0; l < L; ++l)
      for (int64_t h = 0; h < nh; ++h)
        for (int64_t d = 0; d < dh; ++d)
          out.v[static_cast<size_t>((b * L + l) * H + h * dh + d)] = x.v[static_cast<size_t>(((b * nh + h) * L + l) * dh + d)];
  return out;
}

inline RT ref_take_position(const RT& x, int64_t position) {
  int64_t B = x.shape[0], L = x.shape[1], H = x.shape[2];
  RT out{{B, H}, Vec(static_cast<size_t>(B * H))};
  for (int64_t b = 0; b < B; ++b)
    for (int64_t h = 0; h < H; ++h)
      out.v[static_cast<size_t>(b * H + h)] = x.v[static_cast<size_t>((b * L + position) * H + h)];
  return out;
}

inline RT ref_add_key_bias(const RT& scores, const std::vector<float>& key_bias, int num_heads) {
  int64_t BH = scores.shape[0], Lq = scores.shape[1], Lk = scores.shape[2];
  RT out{scores.shape, Vec(scores.v.size())};
  for (int64_t bh = 0; bh < BH; ++bh)
    for (int64_t q = 0; q < Lq; ++q)
      for (int64_t k = 0; k < Lk; ++k)
        out.v[static_cast<size_t>((bh * Lq + q) * Lk + k)] =
            scores.v[static_cast<size_t>((bh * Lq + q) * Lk + k)] +
            static_cast<double>(key_bias[static_cast<size_t>((bh / num_heads) * Lk + k)]);
  return out;
}

// Mirrors the library's draw order: one uniform per element, row-major.
inline RT ref_dropout(const RT& x, double p, uint64_t seed) {
  Rng rng = make_rng(seed);
  RT out{x.shape, Vec(x.v.size())};
  double keep_scale = 1.0 / (1.0 - p);
  for (size_t i = 0; i < x.v.size(); ++i) {
    bool keep = uniform_real(rng) >= p;
    out.v[i] = keep ? x.v[i] * keep_scale : 0.0;
  }
  return out;
}

inline RT ref_sum_all(const RT& x) {
  double total = 0.0;
  for (double v : x.v) total += v;
  return RT{{1}, {total}};
}

inline Tensor random_leaf(Shape shape, Rng& rng, float lo = -1.5f, float hi = 1.5f) {
  std::vector<float> v(static_cast<size_t>(shape_numel(shape)));
  for (float& x : v) x = lo + static_cast<float>(uniform_real(rng)) * (hi - lo);
  return Tensor::from_values(std::move(shape), std::move(v), true);
}

// One op under test: the library forward over `inputs` and the reference
// forward over arbitrary (perturbed) copies of the same input values.
struct OpCase {
  std::vector<Tensor> inputs;
  std::function<Tensor()> lib;
  std::function<RT(const std::vector<Vec>&)> ref;
};

inline std::vector<Vec> widen_inputs(const std::vector<Tensor>& inputs) {
  std::vector<Vec> out;
  for (const Tensor& t : inputs) out.emplace_back(t.values().begin(), t.values().end());
  return out;
}

struct CheckOutcome {
  bool shape_ok = true;       // library output shape matches the reference
  bool grads_ok = true;       // every input received a gradient
  double worst_forward = 0.0; // worst |lib - ref| / max(1, |ref|)
  double worst_rel = 0.0;     // worst relative gradient error
};

// Checks forward agreement and gradient agreement for one built case.
inline CheckOutcome check_case(OpCase& c, Rng& rng) {
  CheckOutcome outcome;
  Tensor y = [&] {
    NoGradGuard guard;
    return c.lib();
  }();
  std::vector<Vec> base = widen_inputs(c.inputs);
  RT y_ref = c.ref(base);
  if (y.shape() != y_ref.shape) {
    outcome.shape_ok = false;
    return outcome;
  }
  for (size_t i = 0; i < y.values().size(); ++i) {
    double err = std::abs(y.values()[i] - y_ref.v[i]) / std::max(1.0, std::abs(y_ref.v[i]));
    outcome.worst_forward = std::max(outcome.worst_forward, err);
  }

  // Random weighting makes the scalar loss sensitive to every output. The
  // weights are f32 values used exactly on both sides.
  std::vector<float> w(y_ref.v.size());
  for (float& x : w) x = static_cast<float>(uniform_real(rng)) * 2.0f - 1.0f;
  auto weighted = [&w](const RT& r) {
    double total = 0.0;
    for (size_t i = 0; i < r.v.size(); ++i) total += static_cast<double>(w[i]) * r.v[i];
    return total;
  };

  for (Tensor& t : c.inputs) t.zero_grad();
  Tensor loss = sum_all(mul(c.lib(), Tensor::from_values(y_ref.shape, w)));
  backward(loss);

  for (size_t ti = 0; ti < c.inputs.size(); ++ti) {
    Tensor& t = c.inputs[ti];
    if (!t.has_grad()) {
      outcome.grads_ok = false;
      return outcome;
    }
    auto grads = t.grad();
    for (size_t i = 0; i < base[ti].size(); ++i) {
      double saved = base[ti][i];
      base[ti][i] = saved + kStep;
      double up = weighted(c.ref(base));
      base[ti][i] = saved - kStep;
      double down = weighted(c.ref(base));
      base[ti][i] = saved;
      double fd = (up - down) / (2.0 * kStep);
      double ad = grads[i];
      double rel = std::abs(ad - fd) / std::max({std::abs(ad), std::abs(fd), 1e-2});
      outcome.worst_rel = std::max(outcome.worst_rel, rel);
    }
  }
  return outcome;
}

struct OpCheck {
  std::string name;
  uint64_t stream;  // distinct seed stream per op variant
  std::function<void(Rng&, OpCase&)> build;
};

// Runs one seeded trial of one check.
inline CheckOutcome run_trial(const OpCheck& op, uint64_t trial) {
  Rng rng = make_rng(mix_seed(0xBADC0FFEULL, op.stream, trial));
  OpCase c;
  op.build(rng, c);
  return check_case(c, rng);
}

// Every differentiable operation, including each accepted broadcast or axis
// variant, with the seed streams pinned so results never drift.
inline const std::vector<OpCheck>& all_op_checks() {
  static const std::vector<OpCheck> checks = [] {
    std::vector<OpCheck> ops;

    ops.push_back({"matmul r2", 1, [](Rng& rng, OpCase& c) {
      c.inputs = {random_leaf({3, 4}, rng), random_leaf({4, 2}, rng)};
      c.lib = [&c] { return matmul(c.inputs[0], c.inputs[1]); };
      c.ref = [](const std::vector<Vec>& in) {
        return ref_matmul({{3, 4}, in[0]}, {{4, 2}, in[1]});
      };
    }});
    ops.push_back({"matmul r3", 2, [](Rng& rng, OpCase& c) {
      c.inputs = {random_leaf({2, 3, 4}, rng), random_leaf({2, 4, 2}, rng)};
      c.lib = [&c] { return matmul(c.inputs[0], c.inputs[1]); };
      c.ref = [](const std::vector<Vec>& in) {
        return ref_matmul({{2, 3, 4}, in[0]}, {{2, 4, 2}, in[1]});
      };
    }});
    ops.push_back({"matmul r3xr2", 3, [](Rng& rng, OpCase& c) {
      c.inputs = {random_leaf({2, 3, 4}, rng), random_leaf({4, 5}, rng)};
      c.lib = [&c] { return matmul(c.inputs[0], c.inputs[1]); };
      c.ref = [](const std::vector<Vec>& in) {
        return ref_matmul({{2, 3, 4}, in[0]}, {{4, 5}, in[1]});
      };
    }});
    ops.push_back({"transpose r3", 4, [](Rng& rng, OpCase& c) {
      c.inputs = {random_leaf({2, 3, 5}, rng)};
      c.lib = [&c] { return transpose_last2(c.inputs[0]); };
      c.ref = [](const std::vector<Vec>& in) {
        return ref_transpose_last2({{2, 3, 5}, in[0]});
      };
    }});
    ops.push_back({"add same", 6, [](Rng& rng, OpCase& c) {
      c.inputs = {random_leaf({4, 3}, rng), random_leaf({4, 3}, rng)};
      c.lib = [&c] { return add(c.inputs[0], c.inputs[1]); };
      c.ref = [](const std::vector<Vec>& in) {
        return ref_add({{4, 3}, in[0]}, {{4, 3}, in[1]});
      };
    }});
    ops.push_back({"add bias", 7, [](Rng& rng, OpCase& c) {
      c.inputs = {random_leaf({2, 4, 3}, rng), random_leaf({3}, rng)};
      c.lib = [&c] { return add(c.inputs[0], c.inputs[1]); };
      c.ref = [](const std::vector<Vec>& in) {
        return ref_add({{2, 4, 3}, in[0]}, {{3}, in[1]});
      };
    }});
    ops.push_back({"add leading", 8, [](Rng& rng, OpCase& c) {
      c.inputs = {random_leaf({2, 4, 3}, rng), random_leaf({4, 3}, rng)};
      c.lib = [&c] { return add(c.inputs[0], c.inputs[1]); };
      c.ref = [](const std::vector<Vec>& in) {
        return ref_add({{2, 4, 3}, in[0]}, {{4, 3}, in[1]});
      };
    }});
    ops.push_back({"mul", 9, [](Rng& rng, OpCase& c) {
      c.inputs = {random_leaf({3, 4}, rng), random_leaf({3, 4}, rng)};
      c.lib = [&c] { return mul(c.inputs[0], c.inputs[1]); };
      c.ref = [](const std::vector<Vec>& in) {
        return ref_mul({{3, 4}, in[0]}, {{3, 4}, in[1]});
      };
    }});
    ops.push_back({"scale", 10, [](Rng& rng, OpCase& c) {
      c.inputs = {random_leaf({2, 5}, rng)};
      c.lib = [&c] { return scale(c.inputs[0], -0.7f); };
      c.ref = [](const std::vector<Vec>& in) {
        return ref_scale({{2, 5}, in[0]}, static_cast<double>(-0.7f));
      };
    }});
    ops.push_back({"softmax r2 axis1", 11, [](Rng& rng, OpCase& c) {
      c.inputs = {random_leaf({3, 5}, rng)};
      c.lib = [&c] { return softmax(c.inputs[0], 1); };
      c.ref = [](const std::vector<Vec>& in) { return ref_softmax({{3, 5}, in[0]}, 1); };
    }});
    ops.push_back({"softmax r3 axis2", 12, [](Rng& rng, OpCase& c) {
      c.inputs = {random_leaf({2, 3, 4}, rng)};
      c.lib = [&c] { return softmax(c.inputs[0], 2); };
      c.ref = [](const std::vector<Vec>& in) { return ref_softmax({{2, 3, 4}, in[0]}, 2); };
    }});
    ops.push_back({"layer_norm", 13, [](Rng& rng, OpCase& c) {
      c.inputs = {random_leaf({2, 3, 6}, rng), random_leaf({6}, rng, 0.5f, 1.5f),
                  random_leaf({6}, rng, -0.5f, 0.5f)};
      c.lib = [&c] { return layer_norm(c.inputs[0], c.inputs[1], c.inputs[2], 1e-12f); };
      c.ref = [](const std::vector<Vec>& in) {
        return ref_layer_norm({{2, 3, 6}, in[0]}, {{6}, in[1]}, {{6}, in[2]},
                              static_cast<double>(1e-12f));
      };
    }});
    ops.push_back({"gelu", 14, [](Rng& rng, OpCase& c) {
      c.inputs = {random_leaf({4, 6}, rng, -3.0f, 3.0f)};
      c.lib = [&c] { return gelu(c.inputs[0]); };
      c.ref = [](const std::vector<Vec>& in) { return ref_gelu({{4, 6}, in[0]}); };
    }});
    ops.push_back({"cross_entropy", 15, [](Rng& rng, OpCase& c) {
      c.inputs = {random_leaf({6, 5}, rng)};
      auto targets = std::make_shared<std::vector<int>>();
      for (int r = 0; r < 6; ++r) {
        bool ignore = uniform_real(rng) < 0.3;
        targets->push_back(ignore ? -1 : static_cast<int>(uniform_index(rng, 5)));
      }
      (*targets)[0] = 2;  // at least one live row
      c.lib = [&c, targets] { return cross_entropy(c.inputs[0], *targets, -1); };
      c.ref = [targets](const std::vector<Vec>& in) {
        return ref_cross_entropy({{6, 5}, in[0]}, *targets, -1);
      };
    }});
    ops.push_back({"embedding_lookup", 16, [](Rng& rng, OpCase& c) {
      c.inputs = {random_leaf({5, 4}, rng)};
      auto ids = std::make_shared<std::vector<int>>(std::vector<int>{0, 3, 3, 1, 4, 3});
      c.lib = [&c, ids] { return embedding_lookup(c.inputs[0], *ids); };
      c.ref = [ids](const std::vector<Vec>& in) {
        return ref_embedding_lookup({{5, 4}, in[0]}, *ids);
      };
    }});
    ops.push_back({"reshape", 17, [](Rng& rng, OpCase& c) {
      c.inputs = {random_leaf({2, 3, 4}, rng)};
      c.lib = [&c] { return reshape(c.inputs[0], {6, 4}); };
      c.ref = [](const std::vector<Vec>& in) { return RT{{6, 4}, in[0]}; };
    }});
    ops.push_back({"split_heads", 18, [](Rng& rng, OpCase& c) {
      c.inputs = {random_leaf({2, 3, 6}, rng)};
      c.lib = [&c] { return split_heads(c.inputs[0], 2); };
      c.ref = [](const std::vector<Vec>& in) { return ref_split_heads({{2, 3, 6}, in[0]}, 2); };
    }});
    ops.push_back({"merge_heads", 19, [](Rng& rng, OpCase& c) {
      c.inputs = {random_leaf({4, 3, 3}, rng)};
      c.lib = [&c] { return merge_heads(c.inputs[0], 2); };
      c.ref = [](const std::vector<Vec>& in) { return ref_merge_heads({{4, 3, 3}, in[0]}, 2); };
    }});
    ops.push_back({"take_position", 20, [](Rng& rng, OpCase& c) {
      c.inputs = {random_leaf({3, 4, 5}, rng)};
      c.lib = [&c] { return take_position(c.inputs[0], 0); };
      c.ref = [](const std::vector<Vec>& in) { return ref_take_position({{3, 4, 5}, in[0]}, 0); };
    }});
    ops.push_back({"add_key_bias", 21, [](Rng& rng, OpCase& c) {
      c.inputs = {random_leaf({4, 3, 3}, rng)};  // batch 2, heads 2
      auto bias = std::make_shared<std::vector<float>>(
          std::vector<float>{0.0f, 0.0f, -5.0f, 0.0f, -5.0f, -5.0f});
      c.lib = [&c, bias] { return add_key_bias(c.inputs[0], *bias, 2, 2); };
      c.ref = [bias](const std::vector<Vec>& in) {
        return ref_add_key_bias({{4, 3, 3}, in[0]}, *bias, 2);
      };
    }});
    // Rebuilding the generator per evaluation fixes the mask, making dropout
    // a deterministic (and differentiable) scaling.
    ops.push_back({"dropout", 22, [](Rng& rng, OpCase& c) {
      c.inputs = {random_leaf({4, 5}, rng)};
      uint64_t mask_seed = mix_seed(99, static_cast<uint64_t>(uniform_index(rng, 1 << 20)));
      c.lib = [&c, mask_seed] {
        Rng mask_rng = make_rng(mask_seed);
        return dropout(c.inputs[0], 0.3f, mask_rng, true);
      };
      c.ref = [mask_seed](const std::vector<Vec>& in) {
        return ref_dropout({{4, 5}, in[0]}, static_cast<double>(0.3f), mask_seed);
      };
    }});
    ops.push_back({"sum_all", 23, [](Rng& rng, OpCase& c) {
      c.inputs = {random_leaf({3, 4}, rng)};
      c.lib = [&c] { return sum_all(c.inputs[0]); };
      c.ref = [](const std::vector<Vec>& in) { return ref_sum_all({{3, 4}, in[0]}); };
    }});

    return ops;
  }();
  return checks;
}

}  // namespace gradcheck
