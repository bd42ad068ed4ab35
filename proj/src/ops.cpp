#include "act/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "act/errors.hpp"
#include "kernels.hpp"

namespace act::ops {

using detail::Node;

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

void require_2d(const Tensor& t, const char* op) {
  if (t.ndim() != 2) throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(t.shape()));
}

Node& parent(Node& out, std::size_t i) { return *out.parents[i]; }

template <typename F>
Tensor unary(const Tensor& x, F&& fwd_and_deriv_fn) {
  const auto in = x.data();
  std::vector<float> out(in.size());
  std::vector<float> deriv;
  if (grad_enabled() && x.requires_grad()) {
    deriv.resize(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) fwd_and_deriv_fn(in[i], out[i], deriv[i]);
  } else {
    float unused = 0.0f;
    for (std::size_t i = 0; i < in.size(); ++i) fwd_and_deriv_fn(in[i], out[i], unused);
  }
  return make_result(x.shape(), std::move(out), {x}, [deriv = std::move(deriv)](Node& o) {
    auto& g = parent(o, 0).ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * deriv[i];
  });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " · " + shape_str(b.shape()));
  }
  std::vector<float> out(m * n);
  kernels::gemm_nn(m, n, k, a.data().data(), b.data().data(), out.data(), false);
  return make_result({m, n}, std::move(out), {a, b}, [m, n, k](Node& o) {
    Node& pa = parent(o, 0);
    Node& pb = parent(o, 1);
    if (pa.requires_grad) {
      std::vector<float> bt(k * n);
      kernels::transpose(k, n, pb.data.data(), bt.data());
      kernels::gemm_nn(m, k, n, o.grad.data(), bt.data(), pa.ensure_grad().data(), true);
    }
    if (pb.requires_grad) kernels::gemm_tn(m, k, n, pa.data.data(), o.grad.data(), pb.ensure_grad().data(), true);
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require_2d(w, "linear");
  const std::size_t in = w.dim(0), out_dim = w.dim(1);
  if (x.cols() != in) {
    throw DimensionError("linear: input " + shape_str(x.shape()) + " does not match weight " + shape_str(w.shape()));
  }
  if (bias.numel() != out_dim) {
    throw DimensionError("linear: bias " + shape_str(bias.shape()) + " does not match weight " + shape_str(w.shape()));
  }
  const std::size_t rows = x.rows();
  std::vector<float> out(rows * out_dim);
  const float* bd = bias.data().data();
  for (std::size_t i = 0; i < rows; ++i) std::copy(bd, bd + out_dim, out.begin() + static_cast<long>(i * out_dim));
  kernels::gemm_nn(rows, out_dim, in, x.data().data(), w.data().data(), out.data(), true);
  Shape shape = x.shape();
  shape.back() = out_dim;
  return make_result(std::move(shape), std::move(out), {x, w, bias}, [rows, in, out_dim](Node& o) {
    Node& px = parent(o, 0);
    Node& pw = parent(o, 1);
    Node& pbias = parent(o, 2);
    if (px.requires_grad) {
      std::vector<float> wt(in * out_dim);
      kernels::transpose(in, out_dim, pw.data.data(), wt.data());
      kernels::gemm_nn(rows, in, out_dim, o.grad.data(), wt.data(), px.ensure_grad().data(), true);
    }
    if (pw.requires_grad) kernels::gemm_tn(rows, in, out_dim, px.data.data(), o.grad.data(), pw.ensure_grad().data(), true);
    if (pbias.requires_grad) {
      auto& gb = pbias.ensure_grad();
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < out_dim; ++j) gb[j] += o.grad[i * out_dim + j];
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const auto ad = a.data(), bd = b.data();
  std::vector<float> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& o) {
    for (std::size_t p = 0; p < 2; ++p) {
      Node& pn = parent(o, p);
      if (!pn.requires_grad) continue;
      auto& g = pn.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  const auto ad = a.data(), bd = b.data();
  std::vector<float> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] - bd[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& o) {
    Node& pa = parent(o, 0);
    Node& pb = parent(o, 1);
    if (pa.requires_grad) {
      auto& g = pa.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const auto ad = a.data(), bd = b.data();
  std::vector<float> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& o) {
    Node& pa = parent(o, 0);
    Node& pb = parent(o, 1);
    if (pa.requires_grad) {
      auto& g = pa.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * pb.data[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * pa.data[i];
    }
  });
}

Tensor add_row(const Tensor& x, const Tensor& row) {
  const std::size_t d = x.cols();
  if (row.numel() != d) {
    throw DimensionError("add_row: row " + shape_str(row.shape()) + " does not match trailing dim of " +
                         shape_str(x.shape()));
  }
  const std::size_t rows = x.rows();
  const auto xd = x.data(), rd = row.data();
  std::vector<float> out(xd.size());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = xd[i * d + j] + rd[j];
  return make_result(x.shape(), std::move(out), {x, row}, [rows, d](Node& o) {
    Node& px = parent(o, 0);
    Node& pr = parent(o, 1);
    if (px.requires_grad) {
      auto& g = px.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
    if (pr.requires_grad) {
      auto& g = pr.ensure_grad();
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < d; ++j) g[j] += o.grad[i * d + j];
    }
  });
}

Tensor scale(const Tensor& x, float s) {
  return unary(x, [s](float v, float& y, float& dy) {
    y = v * s;
    dy = s;
  });
}

Tensor add_scalar(const Tensor& x, float s) {
  return unary(x, [s](float v, float& y, float& dy) {
    y = v + s;
    dy = 1.0f;
  });
}

Tensor relu(const Tensor& x) {
  return unary(x, [](float v, float& y, float& dy) {
    y = v > 0.0f ? v : 0.0f;
    dy = v > 0.0f ? 1.0f : 0.0f;
  });
}

Tensor exp(const Tensor& x) {
  return unary(x, [](float v, float& y, float& dy) {
    y = std::exp(v);
    dy = y;
  });
}

Tensor abs(const Tensor& x) {
  return unary(x, [](float v, float& y, float& dy) {
    y = std::fabs(v);
    dy = v > 0.0f ? 1.0f : (v < 0.0f ? -1.0f : 0.0f);
  });
}

Tensor square(const Tensor& x) {
  return unary(x, [](float v, float& y, float& dy) {
    y = v * v;
    dy = 2.0f * v;
  });
}

Tensor sum(const Tensor& x) {
  float s = 0.0f;
  for (float v : x.data()) s += v;
  return make_result({1}, {s}, {x}, [](Node& o) {
    auto& g = parent(o, 0).ensure_grad();
    const float go = o.grad[0];
    for (auto& v : g) v += go;
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw DimensionError("mean of empty tensor");
  return scale(sum(x), 1.0f / static_cast<float>(x.numel()));
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps) {
  const std::size_t d = x.cols();
  if (gain.numel() != d || bias.numel() != d) {
    throw DimensionError("layer_norm: gain/bias " + shape_str(gain.shape()) + "/" + shape_str(bias.shape()) +
                         " do not match trailing dim of " + shape_str(x.shape()));
  }
  const std::size_t rows = x.rows();
  const auto xd = x.data(), gd = gain.data(), bd = bias.data();
  std::vector<float> out(xd.size()), xhat(xd.size()), inv_std(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    const float* r = xd.data() + i * d;
    float mu = 0.0f;
    for (std::size_t j = 0; j < d; ++j) mu += r[j];
    mu /= static_cast<float>(d);
    float var = 0.0f;
    for (std::size_t j = 0; j < d; ++j) var += (r[j] - mu) * (r[j] - mu);
    var /= static_cast<float>(d);
    const float is = 1.0f / std::sqrt(var + eps);
    inv_std[i] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const float h = (r[j] - mu) * is;
      xhat[i * d + j] = h;
      out[i * d + j] = h * gd[j] + bd[j];
    }
  }
  return make_result(
      x.shape(), std::move(out), {x, gain, bias},
      [rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& o) {
        Node& px = parent(o, 0);
        Node& pg = parent(o, 1);
        Node& pb = parent(o, 2);
        if (pg.requires_grad || pb.requires_grad) {
          auto& gg = pg.ensure_grad();
          auto& gb = pb.ensure_grad();
          for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < d; ++j) {
              gg[j] += o.grad[i * d + j] * xhat[i * d + j];
              gb[j] += o.grad[i * d + j];
            }
        }
        if (px.requires_grad) {
          auto& gx = px.ensure_grad();
          const float inv_d = 1.0f / static_cast<float>(d);
          std::vector<float> dh(d);
          for (std::size_t i = 0; i < rows; ++i) {
            float m1 = 0.0f, m2 = 0.0f;
            for (std::size_t j = 0; j < d; ++j) {
              dh[j] = o.grad[i * d + j] * pg.data[j];
              m1 += dh[j];
              m2 += dh[j] * xhat[i * d + j];
            }
            m1 *= inv_d;
            m2 *= inv_d;
            for (std::size_t j = 0; j < d; ++j)
              gx[i * d + j] += inv_std[i] * (dh[j] - m1 - xhat[i * d + j] * m2);
          }
        }
      });
}

namespace {

struct AttnDims {
  std::size_t batch, lq, lk, d, heads, dh;
  float scale;
};

AttnDims attention_dims(const Tensor& q, const Tensor& k, std::size_t heads, std::size_t batch,
                        std::span<const std::uint8_t> key_mask) {
  if (heads == 0 || q.cols() % heads != 0) {
    throw ConfigError("softmax_attention: d=" + std::to_string(q.cols()) + " is not divisible by heads=" +
                      std::to_string(heads));
  }
  if (batch == 0 || q.rows() % batch != 0 || k.rows() % batch != 0) {
    throw DimensionError("softmax_attention: rows " + shape_str(q.shape()) + "/" + shape_str(k.shape()) +
                         " not divisible by batch " + std::to_string(batch));
  }
  if (k.cols() != q.cols()) {
    throw DimensionError("softmax_attention: q " + shape_str(q.shape()) + " and k " + shape_str(k.shape()) +
                         " widths differ");
  }
  AttnDims a{batch, q.rows() / batch, k.rows() / batch, q.cols(), heads, q.cols() / heads, 0.0f};
  a.scale = 1.0f / std::sqrt(static_cast<float>(a.dh));
  if (!key_mask.empty() && key_mask.size() != batch * a.lk) {
    throw DimensionError("softmax_attention: key mask has " + std::to_string(key_mask.size()) + " entries, expected " +
                         std::to_string(batch * a.lk));
  }
  return a;
}

// probs laid out [batch][head][lq][lk]
std::vector<float> compute_probs(const AttnDims& a, const float* q, const float* k,
                                 std::span<const std::uint8_t> key_mask) {
  std::vector<float> probs(a.batch * a.heads * a.lq * a.lk, 0.0f);
  std::vector<float> s(a.lk);
  const float neg_inf = -std::numeric_limits<float>::infinity();
  for (std::size_t b = 0; b < a.batch; ++b)
    for (std::size_t h = 0; h < a.heads; ++h)
      for (std::size_t i = 0; i < a.lq; ++i) {
        const float* qi = q + ((b * a.lq + i) * a.d + h * a.dh);
        float mx = neg_inf;
        for (std::size_t j = 0; j < a.lk; ++j) {
          if (!key_mask.empty() && !key_mask[b * a.lk + j]) {
            s[j] = neg_inf;
            continue;
          }
          const float* kj = k + ((b * a.lk + j) * a.d + h * a.dh);
          float dot = 0.0f;
          for (std::size_t c = 0; c < a.dh; ++c) dot += qi[c] * kj[c];
          s[j] = dot * a.scale;
          mx = std::max(mx, s[j]);
        }
        float* p = probs.data() + ((b * a.heads + h) * a.lq + i) * a.lk;
        if (mx == neg_inf) continue;  // every key masked: zero weights
        float total = 0.0f;
        for (std::size_t j = 0; j < a.lk; ++j) {
          p[j] = s[j] == neg_inf ? 0.0f : std::exp(s[j] - mx);
          total += p[j];
        }
        const float inv = 1.0f / total;
        for (std::size_t j = 0; j < a.lk; ++j) p[j] *= inv;
      }
  return probs;
}

}  // namespace

std::vector<float> attention_weights(const Tensor& q, const Tensor& k, std::size_t heads, std::size_t batch,
                                     std::span<const std::uint8_t> key_mask) {
  const auto a = attention_dims(q, k, heads, batch, key_mask);
  return compute_probs(a, q.data().data(), k.data().data(), key_mask);
}

Tensor softmax_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads, std::size_t batch,
                         std::span<const std::uint8_t> key_mask) {
  require_same_shape(k, v, "softmax_attention(k, v)");
  const auto a = attention_dims(q, k, heads, batch, key_mask);
  auto probs = compute_probs(a, q.data().data(), k.data().data(), key_mask);
  const float* vd = v.data().data();
  std::vector<float> out(a.batch * a.lq * a.d, 0.0f);
  for (std::size_t b = 0; b < a.batch; ++b)
    for (std::size_t h = 0; h < a.heads; ++h)
      for (std::size_t i = 0; i < a.lq; ++i) {
        const float* p = probs.data() + ((b * a.heads + h) * a.lq + i) * a.lk;
        float* oi = out.data() + ((b * a.lq + i) * a.d + h * a.dh);
        for (std::size_t j = 0; j < a.lk; ++j) {
          const float* vj = vd + ((b * a.lk + j) * a.d + h * a.dh);
          for (std::size_t c = 0; c < a.dh; ++c) oi[c] += p[j] * vj[c];
        }
      }
  return make_result({a.batch * a.lq, a.d}, std::move(out), {q, k, v}, [a, probs = std::move(probs)](Node& o) {
    Node& pq = parent(o, 0);
    Node& pk = parent(o, 1);
    Node& pv = parent(o, 2);
    std::vector<float>* gq = pq.requires_grad ? &pq.ensure_grad() : nullptr;
    std::vector<float>* gk = pk.requires_grad ? &pk.ensure_grad() : nullptr;
    std::vector<float>* gv = pv.requires_grad ? &pv.ensure_grad() : nullptr;
    std::vector<float> dp(a.lk), ds(a.lk);
    for (std::size_t b = 0; b < a.batch; ++b)
      for (std::size_t h = 0; h < a.heads; ++h)
        for (std::size_t i = 0; i < a.lq; ++i) {
          const float* p = probs.data() + ((b * a.heads + h) * a.lq + i) * a.lk;
          const float* go = o.grad.data() + ((b * a.lq + i) * a.d + h * a.dh);
          float dot_pp = 0.0f;
          for (std::size_t j = 0; j < a.lk; ++j) {
            const std::size_t off = (b * a.lk + j) * a.d + h * a.dh;
            float acc = 0.0f;
            for (std::size_t c = 0; c < a.dh; ++c) acc += go[c] * pv.data[off + c];
            dp[j] = acc;
            dot_pp += p[j] * acc;
            if (gv) {
              for (std::size_t c = 0; c < a.dh; ++c) (*gv)[off + c] += p[j] * go[c];
            }
          }
          for (std::size_t j = 0; j < a.lk; ++j) ds[j] = p[j] * (dp[j] - dot_pp) * a.scale;
          const std::size_t qoff = (b * a.lq + i) * a.d + h * a.dh;
          for (std::size_t j = 0; j < a.lk; ++j) {
            if (ds[j] == 0.0f) continue;
            const std::size_t koff = (b * a.lk + j) * a.d + h * a.dh;
            if (gq) {
              for (std::size_t c = 0; c < a.dh; ++c) (*gq)[qoff + c] += ds[j] * pk.data[koff + c];
            }
            if (gk) {
              for (std::size_t c = 0; c < a.dh; ++c) (*gk)[koff + c] += ds[j] * pq.data[qoff + c];
            }
          }
        }
  });
}

Tensor dropout(const Tensor& x, float p, Rng& rng, bool training) {
  if (!training || p <= 0.0f) return x;
  if (p >= 1.0f) throw ConfigError("dropout probability must be < 1");
  const float keep_scale = 1.0f / (1.0f - p);
  std::vector<float> mask(x.numel());
  for (auto& m : mask) m = rng.uniform() < p ? 0.0f : keep_scale;
  const auto xd = x.data();
  std::vector<float> out(xd.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] * mask[i];
  return make_result(x.shape(), std::move(out), {x}, [mask = std::move(mask)](Node& o) {
    auto& g = parent(o, 0).ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * mask[i];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  std::vector<float> out(x.data().begin(), x.data().end());
  return make_result(std::move(shape), std::move(out), {x}, [](Node& o) {
    auto& g = parent(o, 0).ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: nothing to concatenate");
  const std::size_t d = parts[0].cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != d) {
      throw DimensionError("concat_rows: width mismatch " + shape_str(parts[0].shape()) + " vs " + shape_str(p.shape()));
    }
    rows += p.rows();
  }
  std::vector<float> out;
  out.reserve(rows * d);
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(out.size());
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  return make_result({rows, d}, std::move(out), {parts.begin(), parts.end()}, [offsets](Node& o) {
    for (std::size_t i = 0; i < o.parents.size(); ++i) {
      Node& pn = *o.parents[i];
      if (!pn.requires_grad) continue;
      auto& g = pn.ensure_grad();
      for (std::size_t j = 0; j < g.size(); ++j) g[j] += o.grad[offsets[i] + j];
    }
  });
}

Tensor interleave_sequences(std::span<const Tensor> pieces, std::size_t batch) {
  if (pieces.empty() || batch == 0) throw DimensionError("interleave_sequences: empty input");
  const std::size_t d = pieces[0].cols();
  std::vector<std::size_t> n(pieces.size());
  std::size_t seq = 0;
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    const auto& p = pieces[i];
    if (p.cols() != d || p.rows() % batch != 0) {
      throw DimensionError("interleave_sequences: piece " + shape_str(p.shape()) + " incompatible with width " +
                           std::to_string(d) + " and batch " + std::to_string(batch));
    }
    n[i] = p.rows() / batch;
    seq += n[i];
  }
  std::vector<float> out(batch * seq * d);
  for (std::size_t b = 0; b < batch; ++b) {
    std::size_t row = b * seq;
    for (std::size_t i = 0; i < pieces.size(); ++i) {
      const float* src = pieces[i].data().data() + b * n[i] * d;
      std::copy(src, src + n[i] * d, out.begin() + static_cast<long>(row * d));
      row += n[i];
    }
  }
  return make_result({batch * seq, d}, std::move(out), {pieces.begin(), pieces.end()}, [n, seq, batch, d](Node& o) {
    std::size_t col_offset = 0;
    for (std::size_t i = 0; i < o.parents.size(); ++i) {
      Node& pn = *o.parents[i];
      if (pn.requires_grad) {
        auto& g = pn.ensure_grad();
        for (std::size_t b = 0; b < batch; ++b) {
          const float* src = o.grad.data() + (b * seq + col_offset) * d;
          float* dst = g.data() + b * n[i] * d;
          for (std::size_t j = 0; j < n[i] * d; ++j) dst[j] += src[j];
        }
      }
      col_offset += n[i];
    }
  });
}

Tensor tile_rows(const Tensor& x, std::size_t times) {
  const std::size_t block = x.numel();
  std::vector<float> out(block * times);
  for (std::size_t t = 0; t < times; ++t)
    std::copy(x.data().begin(), x.data().end(), out.begin() + static_cast<long>(t * block));
  return make_result({times * x.rows(), x.cols()}, std::move(out), {x}, [block, times](Node& o) {
    auto& g = parent(o, 0).ensure_grad();
    for (std::size_t t = 0; t < times; ++t)
      for (std::size_t j = 0; j < block; ++j) g[j] += o.grad[t * block + j];
  });
}

Tensor select_rows(const Tensor& x, std::span<const std::size_t> rows) {
  const std::size_t d = x.cols(), nrows = x.rows();
  std::vector<float> out(rows.size() * d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= nrows) throw DimensionError("select_rows: row index out of range for " + shape_str(x.shape()));
    std::copy_n(x.data().begin() + static_cast<long>(rows[i] * d), d, out.begin() + static_cast<long>(i * d));
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return make_result({rows.size(), d}, std::move(out), {x}, [idx = std::move(idx), d](Node& o) {
    auto& g = parent(o, 0).ensure_grad();
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) g[idx[i] * d + j] += o.grad[i * d + j];
  });
}

Tensor mean_rows_grouped(const Tensor& x, std::size_t batch) {
  const std::size_t d = x.cols();
  if (batch == 0 || x.rows() % batch != 0) {
    throw DimensionError("mean_rows_grouped: " + shape_str(x.shape()) + " not divisible into " + std::to_string(batch) +
                         " groups");
  }
  const std::size_t n = x.rows() / batch;
  const float inv = 1.0f / static_cast<float>(n);
  std::vector<float> out(batch * d, 0.0f);
  const auto xd = x.data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < d; ++j) out[b * d + j] += xd[(b * n + r) * d + j];
    for (std::size_t j = 0; j < d; ++j) out[b * d + j] *= inv;
  }
  return make_result({batch, d}, std::move(out), {x}, [batch, n, d, inv](Node& o) {
    auto& g = parent(o, 0).ensure_grad();
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < d; ++j) g[(b * n + r) * d + j] += o.grad[b * d + j] * inv;
  });
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t kernel, std::size_t stride,
              std::size_t pad) {
  if (x.ndim() != 4) throw DimensionError("conv2d: input must be [B,H,W,C], got " + shape_str(x.shape()));
  const std::size_t B = x.dim(0), H = x.dim(1), W = x.dim(2), cin = x.dim(3);
  const std::size_t patch = kernel * kernel * cin;
  if (w.ndim() != 2 || w.dim(0) != patch) {
    throw DimensionError("conv2d: weight " + shape_str(w.shape()) + " does not match input " + shape_str(x.shape()) +
                         " with kernel " + std::to_string(kernel));
  }
  const std::size_t cout = w.dim(1);
  if (stride == 0 || H + 2 * pad < kernel || W + 2 * pad < kernel) throw ConfigError("conv2d: invalid geometry");
  const std::size_t ho = (H + 2 * pad - kernel) / stride + 1;
  const std::size_t wo = (W + 2 * pad - kernel) / stride + 1;
  const std::size_t rows = B * ho * wo;

  // im2col: entry -1 marks a padded tap.
  std::vector<long> src_index(rows * kernel * kernel);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t oy = 0; oy < ho; ++oy)
      for (std::size_t ox = 0; ox < wo; ++ox) {
        const std::size_t r = (b * ho + oy) * wo + ox;
        for (std::size_t ky = 0; ky < kernel; ++ky)
          for (std::size_t kx = 0; kx < kernel; ++kx) {
            const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
            const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
            long idx = -1;
            if (iy >= 0 && ix >= 0 && iy < static_cast<long>(H) && ix < static_cast<long>(W))
              idx = static_cast<long>(((b * H + static_cast<std::size_t>(iy)) * W + static_cast<std::size_t>(ix)) * cin);
            src_index[r * kernel * kernel + ky * kernel + kx] = idx;
          }
      }
  std::vector<float> cols(rows * patch, 0.0f);
  const float* xd = x.data().data();
  const std::size_t taps = kernel * kernel;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t t = 0; t < taps; ++t) {
      const long idx = src_index[r * taps + t];
      if (idx < 0) continue;
      std::copy_n(xd + idx, cin, cols.begin() + static_cast<long>(r * patch + t * cin));
    }
  std::vector<float> out(rows * cout);
  const float* bd = bias.data().data();
  for (std::size_t r = 0; r < rows; ++r) std::copy(bd, bd + cout, out.begin() + static_cast<long>(r * cout));
  kernels::gemm_nn(rows, cout, patch, cols.data(), w.data().data(), out.data(), true);

  return make_result(
      {B, ho, wo, cout}, std::move(out), {x, w, bias},
      [rows, patch, cout, cin, taps, cols = std::move(cols), src_index = std::move(src_index)](Node& o) {
        Node& px = parent(o, 0);
        Node& pw = parent(o, 1);
        Node& pb = parent(o, 2);
        if (pw.requires_grad) kernels::gemm_tn(rows, patch, cout, cols.data(), o.grad.data(), pw.ensure_grad().data(), true);
        if (pb.requires_grad) {
          auto& gb = pb.ensure_grad();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cout; ++c) gb[c] += o.grad[r * cout + c];
        }
        if (px.requires_grad) {
          std::vector<float> wt(patch * cout);
          kernels::transpose(patch, cout, pw.data.data(), wt.data());
          std::vector<float> dcols(rows * patch);
          kernels::gemm_nn(rows, patch, cout, o.grad.data(), wt.data(), dcols.data(), false);
          auto& gx = px.ensure_grad();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t t = 0; t < taps; ++t) {
              const long idx = src_index[r * taps + t];
              if (idx < 0) continue;
              for (std::size_t c = 0; c < cin; ++c) gx[static_cast<std::size_t>(idx) + c] += dcols[r * patch + t * cin + c];
            }
        }
      });
}

}  // namespace act::ops
