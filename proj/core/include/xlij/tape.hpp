#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "xlij/errors.hpp"
#include "xlij/mat.hpp"

namespace xlij {

// Reverse-mode differentiation over an op tape. A fresh graph is built per
// forward pass; ops execute eagerly and record what backward() needs.
// Leaves either reference external storage (parameters, fixed constants) or
// own their value (per-sample inputs). Gradients of leaves accumulate into
// the sink the caller registered; a leaf without a sink is constant and the
// chain rule flows through it without depositing anything.
//
// Everything is single-threaded and runs in a fixed order, so a given graph
// is bit-deterministic.
template <class T>
class Tape {
 public:
  using Id = int32_t;
  static constexpr Id none = -1;

  // ---- graph construction -------------------------------------------------

  Id leaf(const Mat<T>& value, Mat<T>* grad_sink) {
    Node n;
    n.op = Op::leaf;
    n.ext = &value;
    if (grad_sink && redirect_) {
      auto it = redirect_->find(grad_sink);
      if (it != redirect_->end()) grad_sink = it->second;
    }
    n.sink = grad_sink;
    n.track = grad_sink != nullptr;
    return push(std::move(n));
  }

  // Reroutes leaf gradient sinks (worker-local accumulation buffers). The map
  // must outlive the tape.
  void redirect_sinks(const std::unordered_map<Mat<T>*, Mat<T>*>* redirect) {
    redirect_ = redirect;
  }

  Id input(Mat<T> value) {
    Node n;
    n.op = Op::input;
    n.val = std::move(value);
    n.track = false;
    return push(std::move(n));
  }

  // y = x @ w (+ bias broadcast over rows). bias may be `none`.
  Id linear(Id x, Id w, Id bias = none) {
    const Mat<T>& xv = val(x);
    const Mat<T>& wv = val(w);
    if (xv.cols != wv.rows)
      fail(errc::config, "linear: inner dims " + std::to_string(xv.cols) + " vs " +
                             std::to_string(wv.rows));
    Node n;
    n.op = Op::linear;
    n.a = x;
    n.b = w;
    n.c = bias;
    n.val = Mat<T>::zeros(xv.rows, wv.cols);
    gemm_acc(xv, wv, n.val);
    if (bias != none) {
      const Mat<T>& bv = val(bias);
      if (bv.rows != 1 || bv.cols != wv.cols) fail(errc::config, "linear: bias shape");
      for (int i = 0; i < n.val.rows; ++i) {
        T* r = n.val.row(i);
        for (int j = 0; j < n.val.cols; ++j) r[j] += bv.data[j];
      }
    }
    n.track = tracked(x) || tracked(w) || (bias != none && tracked(bias));
    return push(std::move(n));
  }

  Id matmul(Id a, Id b) { return linear(a, b, none); }

  Id add(Id a, Id b) {
    const Mat<T>& av = val(a);
    const Mat<T>& bv = val(b);
    if (!av.same_shape(bv)) fail(errc::config, "add: shape mismatch");
    Node n;
    n.op = Op::add;
    n.a = a;
    n.b = b;
    n.val = av;
    add_acc(bv, n.val);
    n.track = tracked(a) || tracked(b);
    return push(std::move(n));
  }

  Id scale(Id a, T c) {
    Node n;
    n.op = Op::scale;
    n.a = a;
    n.scalar = c;
    n.val = val(a);
    for (T& v : n.val.data) v *= c;
    n.track = tracked(a);
    return push(std::move(n));
  }

  Id gelu(Id a) {
    Node n;
    n.op = Op::gelu;
    n.a = a;
    n.val = val(a);
    for (T& v : n.val.data) v = gelu_fwd(v);
    n.track = tracked(a);
    return push(std::move(n));
  }

  Id sigmoid(Id a) {
    Node n;
    n.op = Op::sigmoid;
    n.a = a;
    n.val = val(a);
    for (T& v : n.val.data) v = T(1) / (T(1) + std::exp(-v));
    n.track = tracked(a);
    return push(std::move(n));
  }

  // Row-wise layer norm with learnable gain/bias (1 x cols each).
  Id layer_norm(Id x, Id gain, Id bias) {
    const Mat<T>& xv = val(x);
    const Mat<T>& gv = val(gain);
    const Mat<T>& bv = val(bias);
    if (gv.rows != 1 || gv.cols != xv.cols || bv.rows != 1 || bv.cols != xv.cols)
      fail(errc::config, "layer_norm: gain/bias shape");
    Node n;
    n.op = Op::layer_norm;
    n.a = x;
    n.b = gain;
    n.c = bias;
    n.val = Mat<T>::zeros(xv.rows, xv.cols);
    n.aux = Mat<T>::zeros(xv.rows, 2);  // per-row mean, 1/std
    const T eps = T(1e-5);
    const int c = xv.cols;
    for (int i = 0; i < xv.rows; ++i) {
      const T* r = xv.row(i);
      T mean = T(0);
      for (int j = 0; j < c; ++j) mean += r[j];
      mean /= T(c);
      T var = T(0);
      for (int j = 0; j < c; ++j) {
        T d = r[j] - mean;
        var += d * d;
      }
      var /= T(c);
      T rstd = T(1) / std::sqrt(var + eps);
      n.aux.at(i, 0) = mean;
      n.aux.at(i, 1) = rstd;
      T* o = n.val.row(i);
      for (int j = 0; j < c; ++j) o[j] = (r[j] - mean) * rstd * gv.data[j] + bv.data[j];
    }
    n.track = tracked(x) || tracked(gain) || tracked(bias);
    return push(std::move(n));
  }

  // Multi-head scaled-dot-product attention core. q is (Mq x D), k and v are
  // (Mk x D); D must divide evenly into heads. With causal=true (requires
  // Mq == Mk) position i only attends to positions <= i.
  Id attention(Id q, Id k, Id v, int heads, bool causal) {
    const Mat<T>& qv = val(q);
    const Mat<T>& kv = val(k);
    const Mat<T>& vv = val(v);
    const int d_model = qv.cols;
    if (kv.cols != d_model || vv.cols != d_model) fail(errc::config, "attention: dim mismatch");
    if (kv.rows != vv.rows) fail(errc::config, "attention: key/value rows differ");
    if (kv.rows < 1) fail(errc::config, "attention: empty token set");
    if (heads < 1 || d_model % heads != 0)
      fail(errc::config, "attention: heads must divide embed dim");
    if (causal && qv.rows != kv.rows) fail(errc::config, "attention: causal needs square scores");
    const int mq = qv.rows, mk = kv.rows, dh = d_model / heads;
    const T inv_sqrt_d = T(1) / std::sqrt(T(dh));

    Node n;
    n.op = Op::attention;
    n.a = q;
    n.b = k;
    n.c = v;
    n.heads = heads;
    n.causal = causal;
    n.val = Mat<T>::zeros(mq, d_model);
    n.aux = Mat<T>::zeros(heads * mq, mk);  // softmax probs, heads stacked
    std::vector<T> scores(mk);
    for (int h = 0; h < heads; ++h) {
      const int c0 = h * dh;
      for (int i = 0; i < mq; ++i) {
        const T* qi = qv.row(i) + c0;
        const int jmax = causal ? i + 1 : mk;
        T best = -std::numeric_limits<T>::infinity();
        for (int j = 0; j < jmax; ++j) {
          const T* kj = kv.row(j) + c0;
          T s = T(0);
          for (int t = 0; t < dh; ++t) s += qi[t] * kj[t];
          s *= inv_sqrt_d;
          scores[j] = s;
          if (s > best) best = s;
        }
        T denom = T(0);
        for (int j = 0; j < jmax; ++j) {
          scores[j] = std::exp(scores[j] - best);
          denom += scores[j];
        }
        T* probs = n.aux.row(h * mq + i);
        for (int j = 0; j < jmax; ++j) probs[j] = scores[j] / denom;
        T* out = n.val.row(i) + c0;
        for (int j = 0; j < jmax; ++j) {
          const T p = probs[j];
          if (p == T(0)) continue;
          const T* vj = vv.row(j) + c0;
          for (int t = 0; t < dh; ++t) out[t] += p * vj[t];
        }
      }
    }
    n.track = tracked(q) || tracked(k) || tracked(v);
    return push(std::move(n));
  }

  Id concat_rows(Id a, Id b) {
    const Mat<T>& av = val(a);
    const Mat<T>& bv = val(b);
    if (av.cols != bv.cols) fail(errc::config, "concat_rows: col mismatch");
    Node n;
    n.op = Op::concat_rows;
    n.a = a;
    n.b = b;
    n.val = Mat<T>::zeros(av.rows + bv.rows, av.cols);
    std::copy(av.data.begin(), av.data.end(), n.val.data.begin());
    std::copy(bv.data.begin(), bv.data.end(), n.val.data.begin() + av.size());
    n.track = tracked(a) || tracked(b);
    return push(std::move(n));
  }

  Id concat_cols(Id a, Id b) {
    const Mat<T>& av = val(a);
    const Mat<T>& bv = val(b);
    if (av.rows != bv.rows) fail(errc::config, "concat_cols: row mismatch");
    Node n;
    n.op = Op::concat_cols;
    n.a = a;
    n.b = b;
    n.val = Mat<T>::zeros(av.rows, av.cols + bv.cols);
    for (int i = 0; i < av.rows; ++i) {
      std::copy(av.row(i), av.row(i) + av.cols, n.val.row(i));
      std::copy(bv.row(i), bv.row(i) + bv.cols, n.val.row(i) + av.cols);
    }
    n.track = tracked(a) || tracked(b);
    return push(std::move(n));
  }

  // Row gather: out.row(i) = table.row(ids[i]).
  Id embed(Id table, std::vector<int> ids) {
    const Mat<T>& tv = val(table);
    for (int id : ids)
      if (id < 0 || id >= tv.rows) fail(errc::config, "embed: id out of range");
    Node n;
    n.op = Op::embed;
    n.a = table;
    n.val = Mat<T>::zeros(static_cast<int>(ids.size()), tv.cols);
    for (size_t i = 0; i < ids.size(); ++i)
      std::copy(tv.row(ids[i]), tv.row(ids[i]) + tv.cols, n.val.row(static_cast<int>(i)));
    n.idx = std::move(ids);
    n.track = tracked(table);
    return push(std::move(n));
  }

  // out = h, then out.row(positions[i]) += w * v.row(i) for each i, where w
  // is val(gate)[0] or exactly 1 when gate == none. With w == 0 the masked
  // rows are returned bit-identical, not merely numerically equal.
  Id masked_add(Id h, Id v, const std::vector<int>& positions, Id gate = none) {
    const Mat<T>& hv = val(h);
    const Mat<T>& vv = val(v);
    if (static_cast<int>(positions.size()) != vv.rows)
      fail(errc::config, "masked_add: feature rows " + std::to_string(vv.rows) +
                             " vs mask popcount " + std::to_string(positions.size()));
    if (vv.cols != hv.cols) fail(errc::config, "masked_add: col mismatch");
    for (int p : positions)
      if (p < 0 || p >= hv.rows) fail(errc::config, "masked_add: position out of range");
    if (gate != none && val(gate).size() != 1) fail(errc::config, "masked_add: gate not scalar");
    Node n;
    n.op = Op::masked_add;
    n.a = h;
    n.b = v;
    n.c = gate;
    n.val = hv;
    const T w = gate == none ? T(1) : val(gate).data[0];
    if (w != T(0)) {
      for (size_t i = 0; i < positions.size(); ++i) {
        T* dst = n.val.row(positions[i]);
        const T* src = vv.row(static_cast<int>(i));
        for (int j = 0; j < vv.cols; ++j) dst[j] += w * src[j];
      }
    }
    n.idx.assign(positions.begin(), positions.end());
    n.track = tracked(h) || tracked(v) || (gate != none && tracked(gate));
    return push(std::move(n));
  }

  // Mean negative log-likelihood over the supervised positions. positions[i]
  // is a row of `logits`, targets[i] the class expected there.
  Id cross_entropy(Id logits, const std::vector<int>& positions, const std::vector<int>& targets) {
    if (positions.empty()) fail(errc::empty_supervision, "cross_entropy: empty answer mask");
    if (positions.size() != targets.size()) fail(errc::config, "cross_entropy: positions/targets");
    const Mat<T>& lv = val(logits);
    for (size_t i = 0; i < positions.size(); ++i) {
      if (positions[i] < 0 || positions[i] >= lv.rows)
        fail(errc::config, "cross_entropy: position out of range");
      if (targets[i] < 0 || targets[i] >= lv.cols)
        fail(errc::config, "cross_entropy: target out of range");
    }
    Node n;
    n.op = Op::cross_entropy;
    n.a = logits;
    n.idx.assign(positions.begin(), positions.end());
    n.idx2.assign(targets.begin(), targets.end());
    n.aux = Mat<T>::zeros(static_cast<int>(positions.size()), lv.cols);  // softmax rows
    T loss = T(0);
    for (size_t i = 0; i < positions.size(); ++i) {
      const T* r = lv.row(positions[i]);
      T best = r[0];
      for (int j = 1; j < lv.cols; ++j) best = std::max(best, r[j]);
      T denom = T(0);
      for (int j = 0; j < lv.cols; ++j) denom += std::exp(r[j] - best);
      const T lse = best + std::log(denom);
      loss += lse - r[targets[i]];
      T* p = n.aux.row(static_cast<int>(i));
      for (int j = 0; j < lv.cols; ++j) p[j] = std::exp(r[j] - lse);
    }
    n.val = Mat<T>(1, 1);
    n.val.data[0] = loss / T(positions.size());
    n.track = tracked(logits);
    return push(std::move(n));
  }

  // ---- access --------------------------------------------------------------

  const Mat<T>& val(Id id) const {
    const Node& n = nodes_[id];
    return n.ext ? *n.ext : n.val;
  }

  // Gradient accumulated at a non-leaf node (valid after backward()).
  const Mat<T>& grad(Id id) const { return nodes_[id].grad; }

  bool tracked(Id id) const { return id != none && nodes_[id].track; }

  size_t size() const { return nodes_.size(); }

  void check_finite(Id id, const std::string& context) const {
    if (!val(id).all_finite()) fail(errc::numeric, "non-finite values in " + context);
  }

  void clear() { nodes_.clear(); }

  // ---- backward ------------------------------------------------------------

  void backward(Id root) {
    Node& r = nodes_[root];
    if (val(root).size() != 1) fail(errc::config, "backward: root must be scalar");
    if (!r.track) return;
    if (r.op == Op::leaf) {
      if (r.sink) r.sink->data[0] += T(1);
      return;
    }
    touch_grad(root);
    r.grad.data[0] += T(1);
    for (Id id = root; id >= 0; --id) {
      Node& n = nodes_[id];
      if (!n.track || n.grad.empty()) continue;
      backprop(n);
      if (n.op != Op::leaf) n.grad = Mat<T>();  // free as we go
    }
  }

 private:
  enum class Op : uint8_t {
    leaf,
    input,
    linear,
    add,
    scale,
    gelu,
    sigmoid,
    layer_norm,
    attention,
    concat_rows,
    concat_cols,
    embed,
    masked_add,
    cross_entropy,
  };

  struct Node {
    Op op = Op::input;
    Id a = none, b = none, c = none;
    Mat<T> val;
    Mat<T> grad;
    Mat<T> aux;
    const Mat<T>* ext = nullptr;
    Mat<T>* sink = nullptr;
    std::vector<int> idx;
    std::vector<int> idx2;
    T scalar = T(0);
    int heads = 0;
    bool causal = false;
    bool track = false;
  };

  std::vector<Node> nodes_;
  const std::unordered_map<Mat<T>*, Mat<T>*>* redirect_ = nullptr;

  Id push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
  }

  static T gelu_fwd(T x) {
    return T(0.5) * x * (T(1) + std::erf(x * T(0.7071067811865475244)));
  }
  static T gelu_bwd(T x) {
    const T cdf = T(0.5) * (T(1) + std::erf(x * T(0.7071067811865475244)));
    const T pdf = std::exp(T(-0.5) * x * x) * T(0.3989422804014326779);
    return cdf + x * pdf;
  }

  // Returns the matrix the gradient w.r.t. node `id` accumulates into, or
  // nullptr when nothing upstream wants it.
  Mat<T>* touch_grad(Id id) {
    if (id == none) return nullptr;
    Node& n = nodes_[id];
    if (!n.track) return nullptr;
    if (n.op == Op::leaf) return n.sink;
    if (n.grad.empty()) {
      const Mat<T>& v = val(id);
      n.grad = Mat<T>::zeros(v.rows, v.cols);
    }
    return &n.grad;
  }

  void backprop(Node& n) {
    const Mat<T>& g = n.grad;
    switch (n.op) {
      case Op::leaf:
      case Op::input:
        break;
      case Op::linear: {
        const Mat<T>& xv = val(n.a);
        const Mat<T>& wv = val(n.b);
        if (Mat<T>* dx = touch_grad(n.a)) gemm_nt_acc(g, wv, *dx);
        if (Mat<T>* dw = touch_grad(n.b)) gemm_tn_acc(xv, g, *dw);
        if (n.c != none) {
          if (Mat<T>* db = touch_grad(n.c)) {
            for (int i = 0; i < g.rows; ++i) {
              const T* gi = g.row(i);
              for (int j = 0; j < g.cols; ++j) db->data[j] += gi[j];
            }
          }
        }
        break;
      }
      case Op::add: {
        if (Mat<T>* da = touch_grad(n.a)) add_acc(g, *da);
        if (Mat<T>* db = touch_grad(n.b)) add_acc(g, *db);
        break;
      }
      case Op::scale: {
        if (Mat<T>* da = touch_grad(n.a)) add_scaled_acc(g, n.scalar, *da);
        break;
      }
      case Op::gelu: {
        if (Mat<T>* da = touch_grad(n.a)) {
          const Mat<T>& xv = val(n.a);
          for (size_t i = 0; i < g.size(); ++i) da->data[i] += g.data[i] * gelu_bwd(xv.data[i]);
        }
        break;
      }
      case Op::sigmoid: {
        if (Mat<T>* da = touch_grad(n.a)) {
          for (size_t i = 0; i < g.size(); ++i) {
            const T y = n.val.data[i];
            da->data[i] += g.data[i] * y * (T(1) - y);
          }
        }
        break;
      }
      case Op::layer_norm: {
        const Mat<T>& xv = val(n.a);
        const Mat<T>& gv = val(n.b);
        const int c = xv.cols;
        Mat<T>* dx = touch_grad(n.a);
        Mat<T>* dg = touch_grad(n.b);
        Mat<T>* db = touch_grad(n.c);
        for (int i = 0; i < xv.rows; ++i) {
          const T mean = n.aux.at(i, 0);
          const T rstd = n.aux.at(i, 1);
          const T* x = xv.row(i);
          const T* gi = g.row(i);
          T sum_gy = T(0), sum_gyx = T(0);
          for (int j = 0; j < c; ++j) {
            const T xhat = (x[j] - mean) * rstd;
            const T gy = gi[j] * gv.data[j];
            sum_gy += gy;
            sum_gyx += gy * xhat;
            if (dg) dg->data[j] += gi[j] * xhat;
            if (db) db->data[j] += gi[j];
          }
          if (dx) {
            const T inv_c = T(1) / T(c);
            T* d = dx->row(i);
            for (int j = 0; j < c; ++j) {
              const T xhat = (x[j] - mean) * rstd;
              const T gy = gi[j] * gv.data[j];
              d[j] += rstd * (gy - inv_c * sum_gy - xhat * inv_c * sum_gyx);
            }
          }
        }
        break;
      }
      case Op::attention: {
        const Mat<T>& qv = val(n.a);
        const Mat<T>& kv = val(n.b);
        const Mat<T>& vv = val(n.c);
        const int heads = n.heads, d_model = qv.cols, dh = d_model / heads;
        const int mq = qv.rows, mk = kv.rows;
        const T inv_sqrt_d = T(1) / std::sqrt(T(dh));
        Mat<T>* dq = touch_grad(n.a);
        Mat<T>* dk = touch_grad(n.b);
        Mat<T>* dv = touch_grad(n.c);
        std::vector<T> dp(mk), ds(mk);
        for (int h = 0; h < heads; ++h) {
          const int c0 = h * dh;
          for (int i = 0; i < mq; ++i) {
            const T* probs = n.aux.row(h * mq + i);
            const T* go = g.row(i) + c0;
            const int jmax = n.causal ? i + 1 : mk;
            // dprobs and softmax jacobian
            T dot = T(0);
            for (int j = 0; j < jmax; ++j) {
              const T* vj = vv.row(j) + c0;
              T acc = T(0);
              for (int t = 0; t < dh; ++t) acc += go[t] * vj[t];
              dp[j] = acc;
              dot += acc * probs[j];
            }
            for (int j = 0; j < jmax; ++j) ds[j] = probs[j] * (dp[j] - dot) * inv_sqrt_d;
            if (dv) {
              for (int j = 0; j < jmax; ++j) {
                const T p = probs[j];
                if (p == T(0)) continue;
                T* d = dv->row(j) + c0;
                for (int t = 0; t < dh; ++t) d[t] += p * go[t];
              }
            }
            if (dq) {
              T* d = dq->row(i) + c0;
              for (int j = 0; j < jmax; ++j) {
                const T s = ds[j];
                if (s == T(0)) continue;
                const T* kj = kv.row(j) + c0;
                for (int t = 0; t < dh; ++t) d[t] += s * kj[t];
              }
            }
            if (dk) {
              const T* qi = qv.row(i) + c0;
              for (int j = 0; j < jmax; ++j) {
                const T s = ds[j];
                if (s == T(0)) continue;
                T* d = dk->row(j) + c0;
                for (int t = 0; t < dh; ++t) d[t] += s * qi[t];
              }
            }
          }
        }
        break;
      }
      case Op::concat_rows: {
        const Mat<T>& av = val(n.a);
        if (Mat<T>* da = touch_grad(n.a)) {
          for (size_t i = 0; i < av.size(); ++i) da->data[i] += g.data[i];
        }
        if (Mat<T>* db = touch_grad(n.b)) {
          const size_t off = av.size();
          for (size_t i = 0; i < db->size(); ++i) db->data[i] += g.data[off + i];
        }
        break;
      }
      case Op::concat_cols: {
        const Mat<T>& av = val(n.a);
        Mat<T>* da = touch_grad(n.a);
        Mat<T>* db = touch_grad(n.b);
        for (int i = 0; i < g.rows; ++i) {
          const T* gi = g.row(i);
          if (da) {
            T* d = da->row(i);
            for (int j = 0; j < av.cols; ++j) d[j] += gi[j];
          }
          if (db) {
            T* d = db->row(i);
            for (int j = 0; j < g.cols - av.cols; ++j) d[j] += gi[av.cols + j];
          }
        }
        break;
      }
      case Op::embed: {
        if (Mat<T>* dt = touch_grad(n.a)) {
          for (size_t i = 0; i < n.idx.size(); ++i) {
            const T* gi = g.row(static_cast<int>(i));
            T* d = dt->row(n.idx[i]);
            for (int j = 0; j < g.cols; ++j) d[j] += gi[j];
          }
        }
        break;
      }
      case Op::masked_add: {
        const Mat<T>& vv = val(n.b);
        const T w = n.c == none ? T(1) : val(n.c).data[0];
        if (Mat<T>* dh = touch_grad(n.a)) add_acc(g, *dh);
        if (Mat<T>* dvm = touch_grad(n.b)) {
          if (w != T(0)) {
            for (size_t i = 0; i < n.idx.size(); ++i) {
              const T* gi = g.row(n.idx[i]);
              T* d = dvm->row(static_cast<int>(i));
              for (int j = 0; j < vv.cols; ++j) d[j] += w * gi[j];
            }
          }
        }
        if (n.c != none) {
          if (Mat<T>* dw = touch_grad(n.c)) {
            T acc = T(0);
            for (size_t i = 0; i < n.idx.size(); ++i) {
              const T* gi = g.row(n.idx[i]);
              const T* vi = vv.row(static_cast<int>(i));
              for (int j = 0; j < vv.cols; ++j) acc += gi[j] * vi[j];
            }
            dw->data[0] += acc;
          }
        }
        break;
      }
      case Op::cross_entropy: {
        if (Mat<T>* dl = touch_grad(n.a)) {
          const T gs = g.data[0] / T(n.idx.size());
          for (size_t i = 0; i < n.idx.size(); ++i) {
            const T* p = n.aux.row(static_cast<int>(i));
            T* d = dl->row(n.idx[i]);
            for (int j = 0; j < dl->cols; ++j) d[j] += gs * p[j];
            d[n.idx2[i]] -= gs;
          }
        }
        break;
      }
    }
  }
};

}  // namespace xlij
